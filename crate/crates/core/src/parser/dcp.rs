//! The native rule-program format.
//!
//! ```text
//! % comment
//! a ~ bernoulli(0.1).
//! c ~ bernoulli(0.9) :- a=1.
//! t ~ gaussian(25, 2.2).
//! w ~ discrete([sun:0.6, rain:0.4]) :- t>30.
//! ```
//!
//! `:=` is accepted as a synonym for `:-`.

use std::collections::HashMap;
use std::fmt::Write as _;

use super::lexer::{self, Cursor, TokenKind};
use super::{format_real, ParseError, ParseErrorKind, SourceSpan};
use crate::model::{Atom, AtomValue, Comparator, Distribution, ModelError, Rule, RuleProgram, VarId, VarKind, Variable};
use crate::validate::validate_program;

enum DistAst {
    Bernoulli(f64),
    Discrete(Vec<(String, f64, SourceSpan)>),
    Gaussian(f64, f64),
}

struct AtomAst {
    var: String,
    var_span: SourceSpan,
    cmp: Comparator,
    value: String,
    value_span: SourceSpan,
    numeric: bool,
}

struct StatementAst {
    head: String,
    head_span: SourceSpan,
    dist: DistAst,
    dist_span: SourceSpan,
    body: Vec<AtomAst>,
}

pub fn parse_dcp(text: &str) -> Result<RuleProgram, ParseError> {
    let tokens = lexer::tokenize(text, &lexer::DCP)?;
    let mut cur = Cursor::new(tokens, text);
    let mut statements = Vec::new();
    while !cur.at_end() {
        statements.push(statement(&mut cur)?);
    }
    let program = resolve(&statements)?;
    let report = validate_program(&program);
    if !report.is_valid() {
        return Err(ParseError::new(ParseErrorKind::Invalid(report), None));
    }
    Ok(program)
}

fn statement(cur: &mut Cursor) -> Result<StatementAst, ParseError> {
    let (head, head_span) = cur.expect_word("a variable name")?;
    cur.expect_sym("~")?;
    let dist_span = cur.span();
    let dist = distribution(cur)?;
    let mut body = Vec::new();
    if cur.eat_sym(":-") || cur.eat_sym(":=") {
        body.push(atom(cur)?);
        while cur.eat_sym(",") {
            body.push(atom(cur)?);
        }
    }
    cur.expect_sym(".")?;
    Ok(StatementAst { head, head_span, dist, dist_span, body })
}

fn probability(cur: &mut Cursor) -> Result<(f64, SourceSpan), ParseError> {
    let (p, span) = cur.expect_number("a probability")?;
    if !(0.0..=1.0).contains(&p) {
        return Err(ParseError::at(ModelError::ProbabilityOutOfRange(p), span));
    }
    Ok((p, span))
}

fn distribution(cur: &mut Cursor) -> Result<DistAst, ParseError> {
    let (name, span) = cur.expect_word("a distribution")?;
    cur.expect_sym("(")?;
    let dist = match name.as_str() {
        "bernoulli" => DistAst::Bernoulli(probability(cur)?.0),
        "gaussian" => {
            let (mean, _) = cur.expect_number("a mean")?;
            cur.expect_sym(",")?;
            let (sd, sd_span) = cur.expect_number("a standard deviation")?;
            if sd <= 0.0 {
                return Err(ParseError::at(ModelError::NonPositiveStdDev(sd), sd_span));
            }
            DistAst::Gaussian(mean, sd)
        }
        "discrete" => {
            cur.expect_sym("[")?;
            let mut entries = Vec::new();
            loop {
                let (label, label_span) = cur.expect_atom_text("a value")?;
                cur.expect_sym(":")?;
                let (p, _) = probability(cur)?;
                entries.push((label, p, label_span));
                if !cur.eat_sym(",") {
                    break;
                }
            }
            cur.expect_sym("]")?;
            DistAst::Discrete(entries)
        }
        other => {
            return Err(ParseError::syntax(
                format!("unknown distribution `{other}`, expected bernoulli, discrete or gaussian"),
                span,
            ))
        }
    };
    cur.expect_sym(")")?;
    Ok(dist)
}

fn atom(cur: &mut Cursor) -> Result<AtomAst, ParseError> {
    let (var, var_span) = cur.expect_word("a variable name")?;
    let cmp_span = cur.span();
    let cmp = match cur.next().map(|t| t.kind) {
        Some(TokenKind::Sym("=")) => Comparator::Eq,
        Some(TokenKind::Sym("<")) => Comparator::Lt,
        Some(TokenKind::Sym("=<")) => Comparator::Le,
        Some(TokenKind::Sym(">")) => Comparator::Gt,
        Some(TokenKind::Sym(">=")) => Comparator::Ge,
        _ => return Err(ParseError::syntax("expected a comparator (=, <, =<, >, >=)", cmp_span)),
    };
    let numeric = matches!(cur.peek().map(|t| &t.kind), Some(TokenKind::Number(_)));
    let (value, value_span) = cur.expect_atom_text("a value")?;
    Ok(AtomAst { var, var_span, cmp, value, value_span, numeric })
}

fn resolve(statements: &[StatementAst]) -> Result<RuleProgram, ParseError> {
    // Variables in order of first appearance as a head; domains in order of
    // first appearance among that head's distributions.
    let mut order: Vec<&str> = Vec::new();
    let mut kinds: HashMap<&str, (VarKind, &DistAst, SourceSpan)> = HashMap::new();
    for s in statements {
        let entry = kinds.entry(s.head.as_str());
        let fresh = matches!(entry, std::collections::hash_map::Entry::Vacant(_));
        let (kind, first, _) = entry.or_insert_with(|| {
            let kind = match &s.dist {
                DistAst::Bernoulli(_) => VarKind::Discrete(vec!["0".into(), "1".into()]),
                DistAst::Discrete(_) => VarKind::Discrete(Vec::new()),
                DistAst::Gaussian(..) => VarKind::Continuous,
            };
            (kind, &s.dist, s.dist_span)
        });
        if fresh {
            order.push(s.head.as_str());
        }
        let compatible = matches!(
            (&**first, &s.dist),
            (DistAst::Bernoulli(_), DistAst::Bernoulli(_))
                | (DistAst::Discrete(_), DistAst::Discrete(_))
                | (DistAst::Gaussian(..), DistAst::Gaussian(..))
        );
        if !compatible {
            return Err(ParseError::at(ModelError::KindMismatch(s.head.clone()), s.dist_span));
        }
        if let (VarKind::Discrete(domain), DistAst::Discrete(entries)) = (kind, &s.dist) {
            for (label, _, _) in entries {
                if !domain.contains(label) {
                    domain.push(label.clone());
                }
            }
        }
    }
    let variables: Vec<Variable> = order
        .iter()
        .map(|name| Variable { name: name.to_string(), kind: kinds[name].0.clone() })
        .collect();
    let index: HashMap<&str, VarId> = order.iter().enumerate().map(|(i, n)| (*n, VarId(i))).collect();

    let mut rules = Vec::with_capacity(statements.len());
    for s in statements {
        let head = index[s.head.as_str()];
        let var = &variables[head.index()];
        let dist = match &s.dist {
            DistAst::Bernoulli(p) => Distribution::Bernoulli(*p),
            DistAst::Gaussian(m, sd) => Distribution::Gaussian { mean: *m, std_dev: *sd },
            DistAst::Discrete(entries) => {
                let domain = var.domain().expect("discrete head");
                let mut probs = vec![0.0; domain.len()];
                let mut seen = vec![false; domain.len()];
                for (label, p, span) in entries {
                    let k = var.value_index(label).expect("domain built from labels");
                    if seen[k] {
                        return Err(ParseError::at(
                            ModelError::DuplicateValue { var: var.name.clone(), value: label.clone() },
                            *span,
                        ));
                    }
                    seen[k] = true;
                    probs[k] = *p;
                }
                let total: f64 = probs.iter().sum();
                if (total - 1.0).abs() > crate::model::NORMALIZATION_TOLERANCE {
                    return Err(ParseError::at(ModelError::NotNormalized(total), s.dist_span));
                }
                Distribution::Categorical(probs)
            }
        };
        let mut body = Vec::with_capacity(s.body.len());
        for a in &s.body {
            let Some(&id) = index.get(a.var.as_str()) else {
                return Err(ParseError::at(ParseErrorKind::UnknownVariable(a.var.clone()), a.var_span));
            };
            let bvar = &variables[id.index()];
            let invalid = |reason: &str| {
                ParseError::at(ModelError::InvalidAtom { var: bvar.name.clone(), reason: reason.to_string() }, a.value_span)
            };
            let value = match (&bvar.kind, a.cmp) {
                (VarKind::Discrete(_), Comparator::Eq) => {
                    AtomValue::Label(bvar.value_index(&a.value).ok_or_else(|| {
                        ParseError::at(
                            ModelError::ValueOutOfDomain { var: bvar.name.clone(), value: a.value.clone() },
                            a.value_span,
                        )
                    })?)
                }
                (VarKind::Discrete(_), _) => {
                    return Err(invalid("discrete variables only admit `=` with a domain value"))
                }
                (VarKind::Continuous, Comparator::Eq) => {
                    return Err(invalid("continuous variables only admit order comparators"))
                }
                (VarKind::Continuous, _) if a.numeric => {
                    AtomValue::Threshold(a.value.parse().map_err(|_| invalid("threshold must be a real"))?)
                }
                (VarKind::Continuous, _) => return Err(invalid("threshold must be a real")),
            };
            body.push(Atom { var: id, cmp: a.cmp, value });
        }
        if body.iter().any(|a| a.var == head) {
            return Err(ParseError::at(ModelError::SelfReference(s.head.clone()), s.head_span));
        }
        rules.push(Rule { head, dist, body });
    }
    Ok(RuleProgram::new(variables, rules)?)
}

/// Write a program in canonical form: heads sorted by name, each head's
/// rules in definition order, one rule per line.
pub fn serialize_dcp(program: &RuleProgram) -> String {
    let mut heads: Vec<VarId> = program.dag().ids().collect();
    heads.sort_by(|a, b| program.variable(*a).name.cmp(&program.variable(*b).name));
    let mut out = String::new();
    for h in heads {
        for &r in program.rules_for(h) {
            write_rule(&mut out, program, program.rule(r));
        }
    }
    out
}

fn write_rule(out: &mut String, program: &RuleProgram, rule: &Rule) {
    let head = program.variable(rule.head);
    write!(out, "{} ~ ", head.name).unwrap();
    match &rule.dist {
        Distribution::Bernoulli(p) => write!(out, "bernoulli({})", format_real(*p)).unwrap(),
        Distribution::Gaussian { mean, std_dev } => {
            write!(out, "gaussian({}, {})", format_real(*mean), format_real(*std_dev)).unwrap()
        }
        Distribution::Categorical(ps) => {
            let domain = head.domain().expect("categorical head is discrete");
            let entries: Vec<String> = domain.iter().zip(ps).map(|(v, p)| format!("{v}:{}", format_real(*p))).collect();
            write!(out, "discrete([{}])", entries.join(", ")).unwrap();
        }
    }
    if !rule.body.is_empty() {
        let atoms: Vec<String> = rule
            .body
            .iter()
            .map(|a| {
                let var = program.variable(a.var);
                let value = match a.value {
                    AtomValue::Label(i) => var.domain().expect("discrete")[i].clone(),
                    AtomValue::Threshold(c) => format_real(c),
                };
                format!("{}{}{}", var.name, a.cmp.symbol(), value)
            })
            .collect();
        write!(out, " :- {}", atoms.join(", ")).unwrap();
    }
    out.push_str(".\n");
}
