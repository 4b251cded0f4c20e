//! The repository BIF dialect: `network`, `variable` blocks with
//! `type discrete [ n ] { ... }`, and `probability ( X | P1, ... )` blocks
//! holding either a `table` or one `( v1, ... ) p1, ...;` entry per parent
//! assignment. `property` statements are skipped.
//!
//! In a conditional `table` the child value varies slowest and the last
//! parent fastest.

use std::collections::HashMap;
use std::fmt::Write as _;

use super::lexer::{self, Cursor, TokenKind};
use super::{format_real, ParseError, ParseErrorKind, SourceSpan};
use crate::model::{Cpd, Network, TableCpd, VarId, Variable};

/// Rows whose sum is off by at most this much are re-normalized.
pub const ROW_TOLERANCE: f64 = 1e-6;

struct VariableAst {
    name: String,
    span: SourceSpan,
    values: Vec<String>,
}

enum EntryAst {
    Table(Vec<(f64, SourceSpan)>),
    Default(Vec<(f64, SourceSpan)>),
    Row(Vec<(String, SourceSpan)>, Vec<(f64, SourceSpan)>),
}

struct ProbabilityAst {
    child: (String, SourceSpan),
    parents: Vec<(String, SourceSpan)>,
    entries: Vec<(EntryAst, SourceSpan)>,
}

pub fn parse_bif(text: &str) -> Result<Network, ParseError> {
    let tokens = lexer::tokenize(text, &lexer::BIF)?;
    let mut cur = Cursor::new(tokens, text);
    let mut variables = Vec::new();
    let mut blocks = Vec::new();
    while !cur.at_end() {
        let (kw, span) = cur.expect_word("`network`, `variable` or `probability`")?;
        match kw.as_str() {
            "network" => {
                // Name (possibly quoted) then a block of properties.
                while !cur.is_sym("{") && !cur.at_end() {
                    cur.next();
                }
                skip_block(&mut cur)?;
            }
            "variable" => variables.push(variable(&mut cur)?),
            "probability" => blocks.push(probability(&mut cur)?),
            other => return Err(ParseError::syntax(format!("unexpected `{other}` at top level"), span)),
        }
    }
    resolve(variables, blocks)
}

fn skip_block(cur: &mut Cursor) -> Result<(), ParseError> {
    let open = cur.expect_sym("{")?;
    let mut depth = 1;
    while depth > 0 {
        match cur.next().map(|t| t.kind) {
            Some(TokenKind::Sym("{")) => depth += 1,
            Some(TokenKind::Sym("}")) => depth -= 1,
            Some(_) => {}
            None => return Err(ParseError::syntax("unclosed `{`", open)),
        }
    }
    Ok(())
}

fn skip_statement(cur: &mut Cursor) -> Result<(), ParseError> {
    let start = cur.span();
    loop {
        match cur.next().map(|t| t.kind) {
            Some(TokenKind::Sym(";")) => return Ok(()),
            Some(_) => {}
            None => return Err(ParseError::syntax("unterminated statement, expected `;`", start)),
        }
    }
}

fn variable(cur: &mut Cursor) -> Result<VariableAst, ParseError> {
    let (name, span) = cur.expect_word("a variable name")?;
    cur.expect_sym("{")?;
    let mut values = None;
    while !cur.eat_sym("}") {
        let (kw, kw_span) = cur.expect_word("`type` or `property`")?;
        match kw.as_str() {
            "type" => {
                let (ty, _) = cur.expect_word("a variable type")?;
                if ty != "discrete" {
                    return Err(ParseError::at(ParseErrorKind::NonDiscrete(name), kw_span));
                }
                cur.expect_sym("[")?;
                let (n, n_span) = cur.expect_word("the number of values")?;
                let n: usize = n.parse().map_err(|_| ParseError::syntax("expected an integer", n_span))?;
                cur.expect_sym("]")?;
                cur.expect_sym("{")?;
                let mut vs = Vec::new();
                loop {
                    vs.push(cur.expect_word("a value name")?.0);
                    if !cur.eat_sym(",") {
                        break;
                    }
                }
                cur.expect_sym("}")?;
                cur.expect_sym(";")?;
                if vs.len() != n {
                    return Err(ParseError::syntax(format!("declared {n} values but listed {}", vs.len()), n_span));
                }
                values = Some(vs);
            }
            "property" => skip_statement(cur)?,
            other => return Err(ParseError::syntax(format!("unexpected `{other}` in variable block"), kw_span)),
        }
    }
    let values = values.ok_or_else(|| ParseError::syntax(format!("variable `{name}` has no type"), span))?;
    Ok(VariableAst { name, span, values })
}

fn numbers(cur: &mut Cursor) -> Result<Vec<(f64, SourceSpan)>, ParseError> {
    let mut out = Vec::new();
    while !cur.eat_sym(";") {
        if cur.eat_sym(",") {
            continue;
        }
        out.push(cur.expect_number("a probability")?);
    }
    Ok(out)
}

fn probability(cur: &mut Cursor) -> Result<ProbabilityAst, ParseError> {
    cur.expect_sym("(")?;
    let child = cur.expect_word("a variable name")?;
    let mut parents = Vec::new();
    if cur.eat_sym("|") {
        loop {
            parents.push(cur.expect_word("a parent name")?);
            if !cur.eat_sym(",") {
                break;
            }
        }
    }
    cur.expect_sym(")")?;
    cur.expect_sym("{")?;
    let mut entries = Vec::new();
    while !cur.eat_sym("}") {
        let span = cur.span();
        if cur.eat_sym("(") {
            let mut values = Vec::new();
            loop {
                values.push(cur.expect_word("a parent value")?);
                if !cur.eat_sym(",") {
                    break;
                }
            }
            cur.expect_sym(")")?;
            entries.push((EntryAst::Row(values, numbers(cur)?), span));
            continue;
        }
        let (kw, kw_span) = cur.expect_word("a table entry")?;
        match kw.as_str() {
            "table" => entries.push((EntryAst::Table(numbers(cur)?), span)),
            "default" => entries.push((EntryAst::Default(numbers(cur)?), span)),
            "property" => skip_statement(cur)?,
            other => return Err(ParseError::syntax(format!("unexpected `{other}` in probability block"), kw_span)),
        }
    }
    Ok(ProbabilityAst { child, parents, entries })
}

fn normalize(var: &str, row: &[(f64, SourceSpan)], card: usize, span: SourceSpan) -> Result<Vec<f64>, ParseError> {
    if row.len() != card {
        return Err(ParseError::syntax(format!("`{var}` needs {card} probabilities, found {}", row.len()), span));
    }
    for &(p, s) in row {
        if !(0.0..=1.0).contains(&p) {
            return Err(ParseError::at(crate::model::ModelError::ProbabilityOutOfRange(p), s));
        }
    }
    let sum: f64 = row.iter().map(|r| r.0).sum();
    if (sum - 1.0).abs() > ROW_TOLERANCE {
        return Err(ParseError::at(ParseErrorKind::RowSum { var: var.to_string(), sum }, span));
    }
    // Rows already normalized to model precision are kept verbatim.
    if (sum - 1.0).abs() <= crate::model::NORMALIZATION_TOLERANCE {
        return Ok(row.iter().map(|r| r.0).collect());
    }
    Ok(row.iter().map(|r| r.0 / sum).collect())
}

fn resolve(vars: Vec<VariableAst>, blocks: Vec<ProbabilityAst>) -> Result<Network, ParseError> {
    let mut index: HashMap<&str, VarId> = HashMap::new();
    for (i, v) in vars.iter().enumerate() {
        if index.insert(v.name.as_str(), VarId(i)).is_some() {
            return Err(ParseError::at(crate::model::ModelError::DuplicateVariable(v.name.clone()), v.span));
        }
    }
    let lookup = |(name, span): &(String, SourceSpan)| {
        index.get(name.as_str()).copied().ok_or_else(|| ParseError::at(ParseErrorKind::UnknownVariable(name.clone()), *span))
    };
    let mut parents: Vec<Option<Vec<VarId>>> = vec![None; vars.len()];
    let mut cpds: Vec<Option<Cpd>> = vec![None; vars.len()];
    for block in &blocks {
        let child = lookup(&block.child)?;
        if parents[child.index()].is_some() {
            return Err(ParseError::syntax(format!("second probability block for `{}`", block.child.0), block.child.1));
        }
        let ps = block.parents.iter().map(lookup).collect::<Result<Vec<_>, _>>()?;
        let card = vars[child.index()].values.len();
        let parent_cards: Vec<usize> = ps.iter().map(|p| vars[p.index()].values.len()).collect();
        let n_rows: usize = parent_cards.iter().product();
        let mut rows: Vec<Option<Vec<f64>>> = vec![None; n_rows];
        let mut default = None;
        let name = &block.child.0;
        for (entry, span) in &block.entries {
            match entry {
                EntryAst::Table(values) => {
                    if values.len() != card * n_rows {
                        return Err(ParseError::syntax(
                            format!("table for `{name}` needs {} probabilities, found {}", card * n_rows, values.len()),
                            *span,
                        ));
                    }
                    for (r, row) in rows.iter_mut().enumerate() {
                        let column: Vec<(f64, SourceSpan)> = (0..card).map(|k| values[k * n_rows + r]).collect();
                        *row = Some(normalize(name, &column, card, *span)?);
                    }
                }
                EntryAst::Default(values) => default = Some(normalize(name, values, card, *span)?),
                EntryAst::Row(labels, values) => {
                    if labels.len() != ps.len() {
                        return Err(ParseError::syntax(
                            format!("expected {} parent values, found {}", ps.len(), labels.len()),
                            *span,
                        ));
                    }
                    let mut assignment = Vec::with_capacity(ps.len());
                    for ((label, lspan), p) in labels.iter().zip(&ps) {
                        let pv = &vars[p.index()];
                        let k = pv.values.iter().position(|v| v == label).ok_or_else(|| {
                            ParseError::at(
                                crate::model::ModelError::ValueOutOfDomain { var: pv.name.clone(), value: label.clone() },
                                *lspan,
                            )
                        })?;
                        assignment.push(k);
                    }
                    let r = row_index(&parent_cards, &assignment);
                    rows[r] = Some(normalize(name, values, card, *span)?);
                }
            }
        }
        let rows = rows
            .into_iter()
            .map(|r| r.or_else(|| default.clone()))
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| ParseError::syntax(format!("probability block for `{name}` misses rows"), block.child.1))?;
        parents[child.index()] = Some(ps);
        cpds[child.index()] = Some(Cpd::Table(TableCpd { parent_cards, rows }));
    }
    let mut variables = Vec::with_capacity(vars.len());
    let mut final_parents = Vec::with_capacity(vars.len());
    let mut final_cpds = Vec::with_capacity(vars.len());
    for (v, (ps, cpd)) in vars.into_iter().zip(parents.into_iter().zip(cpds)) {
        let (Some(ps), Some(cpd)) = (ps, cpd) else {
            return Err(ParseError::syntax(format!("no probability block for `{}`", v.name), v.span));
        };
        variables.push(Variable::discrete(v.name, v.values));
        final_parents.push(ps);
        final_cpds.push(cpd);
    }
    Ok(Network::new(variables, final_parents, final_cpds)?)
}

fn row_index(cards: &[usize], values: &[usize]) -> usize {
    cards.iter().zip(values).fold(0, |acc, (c, v)| acc * c + v)
}

/// Write a network in the dialect read by [`parse_bif`]. Conditional CPDs
/// are written one entry per parent assignment.
pub fn serialize_bif(net: &Network, name: &str) -> String {
    let mut out = String::new();
    writeln!(out, "network {name} {{\n}}").unwrap();
    for v in net.variables() {
        let domain = v.domain().expect("networks are discrete");
        writeln!(out, "variable {} {{\n  type discrete [ {} ] {{ {} }};\n}}", v.name, domain.len(), domain.join(", "))
            .unwrap();
    }
    for id in net.dag().ids() {
        let v = net.variable(id);
        let ps = net.parents(id);
        let cpd = net.cpd(id);
        let fmt_row = |row: &[f64]| row.iter().map(|p| format_real(*p)).collect::<Vec<_>>().join(", ");
        if ps.is_empty() {
            writeln!(out, "probability ( {} ) {{\n  table {};\n}}", v.name, fmt_row(cpd.row(&[]))).unwrap();
            continue;
        }
        let names: Vec<&str> = ps.iter().map(|p| net.variable(*p).name.as_str()).collect();
        writeln!(out, "probability ( {} | {} ) {{", v.name, names.join(", ")).unwrap();
        let cards: Vec<usize> = ps.iter().map(|p| net.cardinality(*p)).collect();
        let n_rows: usize = cards.iter().product();
        for r in 0..n_rows {
            let mut rest = r;
            let mut values = vec![0; cards.len()];
            for (k, c) in cards.iter().enumerate().rev() {
                values[k] = rest % c;
                rest /= c;
            }
            let labels: Vec<&str> = ps
                .iter()
                .zip(&values)
                .map(|(p, &i)| net.variable(*p).domain().expect("discrete")[i].as_str())
                .collect();
            writeln!(out, "  ({}) {};", labels.join(", "), fmt_row(cpd.row(&values))).unwrap();
        }
        out.push_str("}\n");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::enumerate_network;

    const SUPPLEMENT: &str = include_str!("../../models/supplement.bif");

    #[test]
    fn minimal_prior() {
        let net = parse_bif("variable x { type discrete [ 2 ] { 0, 1 }; }\nprobability ( x ) { table 0.4 0.6; }").unwrap();
        assert_eq!(net.len(), 1);
        assert_eq!(net.cpd(VarId(0)).row(&[]), &[0.4, 0.6]);
    }

    #[test]
    fn supplement_network_enumerates() {
        let net = parse_bif(SUPPLEMENT).unwrap();
        assert_eq!(net.len(), 5);
        let q = super::super::parse_assignment_list("e=1").unwrap();
        let p = enumerate_network(&net, &q, &Default::default()).unwrap();
        assert!((p - 0.74154).abs() < 1e-12, "{p}");
    }

    #[test]
    fn row_sum_error() {
        let err = parse_bif("variable x { type discrete [ 2 ] { 0, 1 }; }\nprobability ( x ) {\n  table 0.5 0.4;\n}")
            .unwrap_err();
        assert!(matches!(err.kind, ParseErrorKind::RowSum { .. }), "{err}");
        assert_eq!(err.span.unwrap().line, 3);
    }

    #[test]
    fn slightly_off_rows_are_renormalized() {
        let net = parse_bif("variable x { type discrete [ 2 ] { 0, 1 }; }\nprobability ( x ) { table 0.4 0.6000005; }").unwrap();
        let row = net.cpd(VarId(0)).row(&[]);
        assert!((row[0] + row[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn errors() {
        let err = parse_bif("variable x { type discrete [ 2 ] { 0, 1 }; }\nprobability ( x | y ) { table 0.4 0.6; }").unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::UnknownVariable("y".into()));
        let err = parse_bif("variable x { type continuous; }").unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::NonDiscrete("x".into()));
        let err = parse_bif("variable x { type discrete [ 2 ] { 0, 1 } }").unwrap_err();
        assert!(matches!(err.kind, ParseErrorKind::Syntax(_)));
        assert_eq!(err.span.unwrap().column, 43);
    }

    #[test]
    fn properties_and_conditional_tables() {
        let text = r#"
network "test" { property version 1 ; }
variable a { type discrete [ 2 ] { lo, hi }; property position = (1, 2) ; }
variable b { type discrete [ 3 ] { x, y, z }; }
probability ( a ) { table 0.3, 0.7; property note "p(a)"; }
probability ( b | a ) {
  table 0.1, 0.2, 0.3, 0.5, 0.6, 0.3;
}
"#;
        let net = parse_bif(text).unwrap();
        let b = net.id("b").unwrap();
        assert_eq!(net.cpd(b).row(&[0]), &[0.1, 0.3, 0.6]);
        assert_eq!(net.cpd(b).row(&[1]), &[0.2, 0.5, 0.3]);
        let text = "variable a { type discrete [ 2 ] { 0, 1 }; }\nvariable b { type discrete [ 2 ] { 0, 1 }; }\n\
                    probability ( a ) { table 0.5 0.5; }\nprobability ( b | a ) { (1) 0.9, 0.1; default 0.2, 0.8; }";
        let net = parse_bif(text).unwrap();
        assert_eq!(net.cpd(VarId(1)).row(&[0]), &[0.2, 0.8]);
        assert_eq!(net.cpd(VarId(1)).row(&[1]), &[0.9, 0.1]);
    }

    #[test]
    fn serialize_round_trips() {
        let net = parse_bif(SUPPLEMENT).unwrap();
        let again = parse_bif(&serialize_bif(&net, "supplement")).unwrap();
        assert_eq!(again.variables(), net.variables());
        for id in net.dag().ids() {
            assert_eq!(again.parents(id), net.parents(id));
            for r in 0..net.cpd(id).row_count() {
                let Cpd::Table(t) = net.cpd(id) else { panic!() };
                let vals = t.parent_values(r);
                assert_eq!(again.cpd(id).row(&vals), net.cpd(id).row(&vals));
            }
        }
    }
}
