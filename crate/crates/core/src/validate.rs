//! Structural validation of rule programs: acyclicity plus mutual
//! exclusivity and exhaustiveness of each head's rules.
//!
//! Discrete body variables are enumerated. Continuous body variables are
//! split into the elementary regions induced by the thresholds that appear
//! in the head's rules (open intervals and the threshold points), so a
//! single representative per region decides every atom exactly.

use std::fmt;

use crate::model::{AtomValue, RuleProgram, Value, VarId, VarKind};

/// Largest number of joint body assignments enumerated per head.
pub const ENUMERATION_CAP: u128 = 1 << 20;

/// Witnesses kept per head and issue kind.
const MAX_WITNESSES: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub enum Issue {
    /// Two rules of `head` fire together under `witness`. Rule positions are
    /// indices into the head's rules in definition order.
    Overlap { head: String, rules: (usize, usize), witness: Vec<(String, String)> },
    /// No rule of `head` fires under these assignments (`count` in total).
    Uncovered { head: String, count: u128, witnesses: Vec<Vec<(String, String)>> },
    /// The variable has no rules at all.
    NoRules { head: String },
    Cycle { cycle: Vec<String> },
    /// The head's body space exceeds [`ENUMERATION_CAP`].
    NotChecked { head: String, combinations: u128 },
}

impl Issue {
    pub fn is_error(&self) -> bool {
        !matches!(self, Issue::NotChecked { .. })
    }
}

fn fmt_assignment(a: &[(String, String)]) -> String {
    if a.is_empty() {
        return "{}".into();
    }
    let parts: Vec<String> = a.iter().map(|(k, v)| format!("{k}={v}")).collect();
    format!("{{{}}}", parts.join(","))
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Issue::Overlap { head, rules, witness } => write!(
                f,
                "{head}: rules #{} and #{} both fire under {}",
                rules.0 + 1,
                rules.1 + 1,
                fmt_assignment(witness)
            ),
            Issue::Uncovered { head, count, witnesses } => {
                let shown: Vec<String> = witnesses.iter().map(|w| fmt_assignment(w)).collect();
                write!(f, "{head}: {count} uncovered parent assignment(s), e.g. {}", shown.join(" "))
            }
            Issue::NoRules { head } => write!(f, "{head}: no rules"),
            Issue::Cycle { cycle } => write!(f, "cycle: {}", cycle.join(" -> ")),
            Issue::NotChecked { head, combinations } => {
                write!(f, "{head}: not checked ({combinations} body assignments exceed the cap)")
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub issues: Vec<Issue>,
}

impl ValidationReport {
    /// True when no error-level issue was found.
    pub fn is_valid(&self) -> bool {
        self.issues.iter().all(|i| !i.is_error())
    }

    pub fn is_empty(&self) -> bool {
        self.issues.is_empty()
    }

    pub fn errors(&self) -> impl Iterator<Item = &Issue> {
        self.issues.iter().filter(|i| i.is_error())
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.issues.is_empty() {
            return f.write_str("valid");
        }
        for (i, issue) in self.issues.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{issue}")?;
        }
        Ok(())
    }
}

/// One axis of the body space of a head.
enum Axis {
    Discrete { var: VarId, card: usize },
    /// Representative points and their human-readable regions.
    Regions { var: VarId, points: Vec<f64>, labels: Vec<String> },
}

impl Axis {
    fn len(&self) -> usize {
        match self {
            Axis::Discrete { card, .. } => *card,
            Axis::Regions { points, .. } => points.len(),
        }
    }

    fn var(&self) -> VarId {
        match self {
            Axis::Discrete { var, .. } | Axis::Regions { var, .. } => *var,
        }
    }

    fn value(&self, i: usize) -> Value {
        match self {
            Axis::Discrete { .. } => Value::Discrete(i),
            Axis::Regions { points, .. } => Value::Real(points[i]),
        }
    }
}

fn regions(mut thresholds: Vec<f64>) -> (Vec<f64>, Vec<String>) {
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();
    let mut points = Vec::new();
    let mut labels = Vec::new();
    let Some(&first) = thresholds.first() else {
        return (vec![0.0], vec!["(-inf,inf)".into()]);
    };
    points.push(first - 1.0);
    labels.push(format!("(-inf,{first})"));
    for (i, &t) in thresholds.iter().enumerate() {
        points.push(t);
        labels.push(format!("{t}"));
        match thresholds.get(i + 1) {
            Some(&next) => {
                points.push(0.5 * (t + next));
                labels.push(format!("({t},{next})"));
            }
            None => {
                points.push(t + 1.0);
                labels.push(format!("({t},inf)"));
            }
        }
    }
    (points, labels)
}

/// Check that `program` is a valid DC(B) program.
pub fn validate_program(program: &RuleProgram) -> ValidationReport {
    let mut report = ValidationReport::default();
    if let Some(cycle) = program.dag().find_cycle() {
        report.issues.push(Issue::Cycle { cycle });
    }
    for head in program.dag().ids() {
        check_head(program, head, &mut report);
    }
    report
}

fn check_head(program: &RuleProgram, head: VarId, report: &mut ValidationReport) {
    let head_name = program.variable(head).name.clone();
    let rules = program.rules_for(head);
    if rules.is_empty() {
        report.issues.push(Issue::NoRules { head: head_name });
        return;
    }
    let axes: Vec<Axis> = program
        .dag()
        .parents(head)
        .iter()
        .map(|&p| match &program.variable(p).kind {
            VarKind::Discrete(d) => Axis::Discrete { var: p, card: d.len() },
            VarKind::Continuous => {
                let thresholds = rules
                    .iter()
                    .flat_map(|&r| program.rule(r).body.iter())
                    .filter(|a| a.var == p)
                    .filter_map(|a| match a.value {
                        AtomValue::Threshold(t) => Some(t),
                        AtomValue::Label(_) => None,
                    })
                    .collect();
                let (points, labels) = regions(thresholds);
                Axis::Regions { var: p, points, labels }
            }
        })
        .collect();
    let combinations = axes.iter().fold(1u128, |acc, a| acc.saturating_mul(a.len() as u128));
    if combinations > ENUMERATION_CAP {
        report.issues.push(Issue::NotChecked { head: head_name, combinations });
        return;
    }
    let describe = |idx: &[usize]| -> Vec<(String, String)> {
        axes.iter()
            .zip(idx)
            .map(|(axis, &i)| {
                let var = program.variable(axis.var());
                let label = match axis {
                    Axis::Discrete { .. } => var.format_value(Value::Discrete(i)),
                    Axis::Regions { labels, .. } => labels[i].clone(),
                };
                (var.name.clone(), label)
            })
            .collect()
    };
    let mut idx = vec![0usize; axes.len()];
    let mut values: Vec<Option<Value>> = vec![None; program.len()];
    let mut overlap_reported = false;
    let mut uncovered = 0u128;
    let mut witnesses = Vec::new();
    loop {
        for (axis, &i) in axes.iter().zip(&idx) {
            values[axis.var().index()] = Some(axis.value(i));
        }
        let firing: Vec<usize> = rules
            .iter()
            .enumerate()
            .filter(|(_, &r)| program.rule(r).fires(|v| values[v.index()]))
            .map(|(pos, _)| pos)
            .collect();
        match firing.len() {
            0 => {
                uncovered += 1;
                if witnesses.len() < MAX_WITNESSES {
                    witnesses.push(describe(&idx));
                }
            }
            1 => {}
            _ if !overlap_reported => {
                overlap_reported = true;
                report.issues.push(Issue::Overlap {
                    head: head_name.clone(),
                    rules: (firing[0], firing[1]),
                    witness: describe(&idx),
                });
            }
            _ => {}
        }
        // odometer, last axis fastest
        let mut k = axes.len();
        loop {
            if k == 0 {
                if uncovered > 0 {
                    report.issues.push(Issue::Uncovered { head: head_name, count: uncovered, witnesses });
                }
                return;
            }
            k -= 1;
            idx[k] += 1;
            if idx[k] < axes[k].len() {
                break;
            }
            idx[k] = 0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Atom, Comparator, Distribution, Rule, Variable};

    fn e_program(bodies: &[&[(usize, usize)]]) -> RuleProgram {
        let vars = vec![Variable::binary("a"), Variable::binary("b"), Variable::binary("c"), Variable::binary("e")];
        let mut rules: Vec<Rule> = (0..3)
            .map(|v| Rule { head: VarId(v), dist: Distribution::Bernoulli(0.5), body: vec![] })
            .collect();
        for body in bodies {
            rules.push(Rule {
                head: VarId(3),
                dist: Distribution::Bernoulli(0.3),
                body: body.iter().map(|&(v, x)| Atom::eq(VarId(v), x)).collect(),
            });
        }
        RuleProgram::new(vars, rules).unwrap()
    }

    #[test]
    fn tree_rules_are_valid() {
        let p = e_program(&[&[(0, 1)], &[(0, 0), (1, 1)], &[(0, 0), (1, 0), (2, 1)], &[(0, 0), (1, 0), (2, 0)]]);
        let report = validate_program(&p);
        assert!(report.is_empty(), "{report}");
    }

    #[test]
    fn missing_branch_is_uncovered() {
        let p = e_program(&[&[(0, 1)]]);
        let report = validate_program(&p);
        assert!(!report.is_valid());
        match &report.issues[..] {
            [Issue::Uncovered { head, count, witnesses }] => {
                assert_eq!(head, "e");
                assert_eq!(*count, 1);
                assert_eq!(witnesses[0], vec![("a".to_string(), "0".to_string())]);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_guard_overlaps() {
        let p = e_program(&[&[(0, 1)], &[(0, 1), (1, 1)]]);
        let report = validate_program(&p);
        let overlap = report.issues.iter().find_map(|i| match i {
            Issue::Overlap { witness, rules, .. } => Some((witness.clone(), *rules)),
            _ => None,
        });
        let (witness, rules) = overlap.expect("overlap reported");
        assert_eq!(rules, (0, 1));
        assert_eq!(witness, vec![("a".into(), "1".into()), ("b".into(), "1".into())]);
    }

    #[test]
    fn continuous_guards_partition_by_threshold() {
        let vars = vec![Variable::binary("cool"), Variable::continuous("t"), Variable::binary("broken")];
        let gt = |c| Atom { var: VarId(1), cmp: Comparator::Gt, value: AtomValue::Threshold(c) };
        let le = |c| Atom { var: VarId(1), cmp: Comparator::Le, value: AtomValue::Threshold(c) };
        let lt = |c| Atom { var: VarId(1), cmp: Comparator::Lt, value: AtomValue::Threshold(c) };
        let base = vec![
            Rule { head: VarId(0), dist: Distribution::Bernoulli(0.1), body: vec![] },
            Rule { head: VarId(1), dist: Distribution::Gaussian { mean: 25.0, std_dev: 2.2 }, body: vec![] },
        ];
        let mut good = base.clone();
        good.push(Rule { head: VarId(2), dist: Distribution::Bernoulli(0.9), body: vec![gt(30.0)] });
        good.push(Rule { head: VarId(2), dist: Distribution::Bernoulli(0.6), body: vec![le(30.0), Atom::eq(VarId(0), 0)] });
        good.push(Rule { head: VarId(2), dist: Distribution::Bernoulli(0.1), body: vec![le(30.0), Atom::eq(VarId(0), 1)] });
        assert!(validate_program(&RuleProgram::new(vars.clone(), good).unwrap()).is_empty());

        // t < 30 / t > 30 leaves the point 30 uncovered
        let mut gap = base;
        gap.push(Rule { head: VarId(2), dist: Distribution::Bernoulli(0.9), body: vec![gt(30.0)] });
        gap.push(Rule { head: VarId(2), dist: Distribution::Bernoulli(0.6), body: vec![lt(30.0)] });
        let report = validate_program(&RuleProgram::new(vars, gap).unwrap());
        match &report.issues[..] {
            [Issue::Uncovered { count, witnesses, .. }] => {
                assert_eq!(*count, 1);
                assert_eq!(witnesses[0][0].1, "30");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn cycles_and_missing_rules_reported() {
        let vars = vec![Variable::binary("a"), Variable::binary("b"), Variable::binary("c")];
        let rules = vec![
            Rule { head: VarId(0), dist: Distribution::Bernoulli(0.5), body: vec![Atom::eq(VarId(1), 0)] },
            Rule { head: VarId(0), dist: Distribution::Bernoulli(0.5), body: vec![Atom::eq(VarId(1), 1)] },
            Rule { head: VarId(1), dist: Distribution::Bernoulli(0.5), body: vec![Atom::eq(VarId(0), 0)] },
            Rule { head: VarId(1), dist: Distribution::Bernoulli(0.5), body: vec![Atom::eq(VarId(0), 1)] },
        ];
        let report = validate_program(&RuleProgram::new(vars, rules).unwrap());
        assert!(report.issues.iter().any(|i| matches!(i, Issue::Cycle { .. })));
        assert!(report.issues.iter().any(|i| matches!(i, Issue::NoRules { head } if head == "c")));
    }

    #[test]
    fn wide_heads_are_not_checked() {
        let n = 21;
        let mut vars: Vec<Variable> = (0..n).map(|i| Variable::binary(format!("p{i:02}"))).collect();
        vars.push(Variable::binary("h"));
        let mut rules: Vec<Rule> =
            (0..n).map(|i| Rule { head: VarId(i), dist: Distribution::Bernoulli(0.5), body: vec![] }).collect();
        rules.push(Rule {
            head: VarId(n),
            dist: Distribution::Bernoulli(0.5),
            body: (0..n).map(|i| Atom::eq(VarId(i), 1)).collect(),
        });
        let report = validate_program(&RuleProgram::new(vars, rules).unwrap());
        assert!(report.is_valid());
        assert!(matches!(&report.issues[..], [Issue::NotChecked { combinations, .. }] if *combinations == 1 << 21));
    }
}
