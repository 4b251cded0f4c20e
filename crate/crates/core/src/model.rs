//! Core domain types: variables, distributions, rules, rule programs and
//! Bayesian networks.
//!
//! Variables are addressed by [`VarId`], an index into the owning program or
//! network. Discrete values are indices into the variable's domain; labels
//! only appear at the I/O boundary.

use std::collections::{BTreeMap, BinaryHeap, HashMap};
use std::cmp::Reverse;
use std::fmt;

use rand::Rng;
use rand_distr::{Distribution as _, Normal};
use thiserror::Error;

use crate::compile::TreeCpd;

/// Tolerance on the sum of a categorical distribution.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),
    #[error("duplicate variable `{0}`")]
    DuplicateVariable(String),
    #[error("variable `{0}` has an empty domain")]
    EmptyDomain(String),
    #[error("variable `{var}` has duplicate domain value `{value}`")]
    DuplicateValue { var: String, value: String },
    #[error("value `{value}` is not in the domain of `{var}`")]
    ValueOutOfDomain { var: String, value: String },
    #[error("probability {0} is out of range [0, 1]")]
    ProbabilityOutOfRange(f64),
    #[error("probabilities sum to {0}, expected 1")]
    NotNormalized(f64),
    #[error("gaussian standard deviation must be positive, got {0}")]
    NonPositiveStdDev(f64),
    #[error("distribution does not match the kind of `{0}`")]
    KindMismatch(String),
    #[error("atom on `{var}`: {reason}")]
    InvalidAtom { var: String, reason: String },
    #[error("`{0}` appears in the body of its own rule")]
    SelfReference(String),
    #[error("cycle detected: {}", .0.join(" -> "))]
    Cycle(Vec<String>),
    #[error("CPD of `{var}`: {reason}")]
    InvalidCpd { var: String, reason: String },
}

/// Index of a variable within a program or network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VarId(pub usize);

impl VarId {
    #[inline]
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum VarKind {
    /// Ordered list of value labels.
    Discrete(Vec<String>),
    Continuous,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Variable {
    pub name: String,
    pub kind: VarKind,
}

impl Variable {
    pub fn discrete(name: impl Into<String>, domain: Vec<String>) -> Self {
        Variable { name: name.into(), kind: VarKind::Discrete(domain) }
    }

    /// A variable over `{0, 1}`, the domain of bernoulli heads.
    pub fn binary(name: impl Into<String>) -> Self {
        Variable::discrete(name, vec!["0".to_string(), "1".to_string()])
    }

    pub fn continuous(name: impl Into<String>) -> Self {
        Variable { name: name.into(), kind: VarKind::Continuous }
    }

    pub fn domain(&self) -> Option<&[String]> {
        match &self.kind {
            VarKind::Discrete(d) => Some(d),
            VarKind::Continuous => None,
        }
    }

    pub fn cardinality(&self) -> Option<usize> {
        self.domain().map(<[String]>::len)
    }

    pub fn is_discrete(&self) -> bool {
        matches!(self.kind, VarKind::Discrete(_))
    }

    /// True when the domain is exactly `{0, 1}` in that order.
    pub fn is_binary01(&self) -> bool {
        matches!(self.domain(), Some([a, b]) if a == "0" && b == "1")
    }

    pub fn value_index(&self, label: &str) -> Option<usize> {
        self.domain()?.iter().position(|v| v == label)
    }

    /// Parse a label (discrete) or a real number (continuous).
    pub fn parse_value(&self, text: &str) -> Result<Value, ModelError> {
        let err = || ModelError::ValueOutOfDomain { var: self.name.clone(), value: text.to_string() };
        match &self.kind {
            VarKind::Discrete(_) => self.value_index(text).map(Value::Discrete).ok_or_else(err),
            VarKind::Continuous => text.trim().parse::<f64>().ok().filter(|x| x.is_finite()).map(Value::Real).ok_or_else(err),
        }
    }

    pub fn format_value(&self, value: Value) -> String {
        match (value, &self.kind) {
            (Value::Discrete(i), VarKind::Discrete(d)) => d.get(i).cloned().unwrap_or_else(|| format!("#{i}")),
            (Value::Real(x), _) => format!("{x}"),
            (Value::Discrete(i), VarKind::Continuous) => format!("#{i}"),
        }
    }

    fn check(&self) -> Result<(), ModelError> {
        if let VarKind::Discrete(domain) = &self.kind {
            if domain.is_empty() {
                return Err(ModelError::EmptyDomain(self.name.clone()));
            }
            for (i, v) in domain.iter().enumerate() {
                if domain[..i].contains(v) {
                    return Err(ModelError::DuplicateValue { var: self.name.clone(), value: v.clone() });
                }
            }
        }
        Ok(())
    }
}

/// A resolved value: an index into a discrete domain, or a real.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Value {
    Discrete(usize),
    Real(f64),
}

impl Value {
    pub fn as_index(self) -> Option<usize> {
        match self {
            Value::Discrete(i) => Some(i),
            Value::Real(_) => None,
        }
    }
}

/// Head distribution of a rule.
///
/// `Bernoulli(p)` is over the domain `{0, 1}` with `P(head = 1) = p`.
/// `Categorical` holds one probability per value of the head's domain, in
/// domain order.
#[derive(Debug, Clone, PartialEq)]
pub enum Distribution {
    Bernoulli(f64),
    Categorical(Vec<f64>),
    Gaussian { mean: f64, std_dev: f64 },
}

impl Distribution {
    pub fn validate(&self) -> Result<(), ModelError> {
        match self {
            Distribution::Bernoulli(p) => check_probability(*p),
            Distribution::Categorical(ps) => {
                for &p in ps {
                    check_probability(p)?;
                }
                let sum: f64 = ps.iter().sum();
                if (sum - 1.0).abs() > NORMALIZATION_TOLERANCE {
                    return Err(ModelError::NotNormalized(sum));
                }
                Ok(())
            }
            Distribution::Gaussian { mean, std_dev } => {
                if !mean.is_finite() || !(std_dev.is_finite() && *std_dev > 0.0) {
                    return Err(ModelError::NonPositiveStdDev(*std_dev));
                }
                Ok(())
            }
        }
    }

    pub fn is_discrete(&self) -> bool {
        !matches!(self, Distribution::Gaussian { .. })
    }

    /// Number of discrete outcomes, `None` for densities.
    pub fn support_len(&self) -> Option<usize> {
        match self {
            Distribution::Bernoulli(_) => Some(2),
            Distribution::Categorical(ps) => Some(ps.len()),
            Distribution::Gaussian { .. } => None,
        }
    }

    /// Probability mass of an index, or density at a real.
    pub fn probability(&self, value: Value) -> f64 {
        match (self, value) {
            (Distribution::Bernoulli(p), Value::Discrete(1)) => *p,
            (Distribution::Bernoulli(p), Value::Discrete(0)) => 1.0 - p,
            (Distribution::Categorical(ps), Value::Discrete(i)) => ps.get(i).copied().unwrap_or(0.0),
            (Distribution::Gaussian { mean, std_dev }, Value::Real(x)) => {
                let z = (x - mean) / std_dev;
                (-0.5 * z * z).exp() / (std_dev * (2.0 * std::f64::consts::PI).sqrt())
            }
            _ => 0.0,
        }
    }

    /// Probability vector of a discrete distribution.
    pub fn probabilities(&self) -> Option<Vec<f64>> {
        match self {
            Distribution::Bernoulli(p) => Some(vec![1.0 - p, *p]),
            Distribution::Categorical(ps) => Some(ps.clone()),
            Distribution::Gaussian { .. } => None,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Value {
        match self {
            Distribution::Bernoulli(p) => Value::Discrete(usize::from(rng.gen::<f64>() < *p)),
            Distribution::Categorical(ps) => {
                let u: f64 = rng.gen();
                let mut acc = 0.0;
                for (i, &p) in ps.iter().enumerate() {
                    acc += p;
                    if u < acc {
                        return Value::Discrete(i);
                    }
                }
                // rounding slack: last value with positive mass
                Value::Discrete(ps.iter().rposition(|&p| p > 0.0).unwrap_or(0))
            }
            Distribution::Gaussian { mean, std_dev } => {
                let normal = Normal::new(*mean, *std_dev).expect("validated gaussian");
                Value::Real(normal.sample(rng))
            }
        }
    }

    /// Build the natural distribution for a probability vector over `var`'s
    /// domain: bernoulli for `{0, 1}` variables, categorical otherwise.
    pub fn for_variable(var: &Variable, probs: &[f64]) -> Distribution {
        if var.is_binary01() {
            Distribution::Bernoulli(probs[1])
        } else {
            Distribution::Categorical(probs.to_vec())
        }
    }

    fn fits(&self, var: &Variable) -> bool {
        match (self, &var.kind) {
            (Distribution::Bernoulli(_), _) => var.is_binary01(),
            (Distribution::Categorical(ps), VarKind::Discrete(d)) => ps.len() == d.len(),
            (Distribution::Gaussian { .. }, VarKind::Continuous) => true,
            _ => false,
        }
    }
}

fn check_probability(p: f64) -> Result<(), ModelError> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(ModelError::ProbabilityOutOfRange(p))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Comparator {
    Eq,
    Lt,
    Le,
    Gt,
    Ge,
}

impl Comparator {
    pub fn symbol(self) -> &'static str {
        match self {
            Comparator::Eq => "=",
            Comparator::Lt => "<",
            Comparator::Le => "=<",
            Comparator::Gt => ">",
            Comparator::Ge => ">=",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AtomValue {
    Label(usize),
    Threshold(f64),
}

/// A body or goal atom `var <cmp> value`.
#[derive(Debug, Clone, PartialEq)]
pub struct Atom {
    pub var: VarId,
    pub cmp: Comparator,
    pub value: AtomValue,
}

impl Atom {
    pub fn eq(var: VarId, value: usize) -> Self {
        Atom { var, cmp: Comparator::Eq, value: AtomValue::Label(value) }
    }

    /// Domain index of an equality atom.
    pub fn label(&self) -> Option<usize> {
        match self.value {
            AtomValue::Label(i) => Some(i),
            AtomValue::Threshold(_) => None,
        }
    }

    pub fn holds(&self, v: Value) -> bool {
        match (self.cmp, self.value, v) {
            (Comparator::Eq, AtomValue::Label(a), Value::Discrete(b)) => a == b,
            (cmp, AtomValue::Threshold(c), Value::Real(x)) => match cmp {
                Comparator::Lt => x < c,
                Comparator::Le => x <= c,
                Comparator::Gt => x > c,
                Comparator::Ge => x >= c,
                Comparator::Eq => x == c,
            },
            _ => false,
        }
    }

    fn check(&self, vars: &[Variable]) -> Result<(), ModelError> {
        let var = vars.get(self.var.index()).ok_or_else(|| ModelError::UnknownVariable(format!("#{}", self.var.0)))?;
        let bad = |reason: &str| Err(ModelError::InvalidAtom { var: var.name.clone(), reason: reason.to_string() });
        match (&var.kind, self.cmp, self.value) {
            (VarKind::Discrete(d), Comparator::Eq, AtomValue::Label(i)) if i < d.len() => Ok(()),
            (VarKind::Discrete(_), Comparator::Eq, AtomValue::Label(_)) => bad("value outside the domain"),
            (VarKind::Discrete(_), _, _) => bad("discrete variables only admit `=` with a domain value"),
            (VarKind::Continuous, Comparator::Eq, _) => bad("continuous variables only admit order comparators"),
            (VarKind::Continuous, _, AtomValue::Threshold(c)) if c.is_finite() => Ok(()),
            (VarKind::Continuous, _, _) => bad("threshold must be a finite real"),
        }
    }
}

/// A guarded distribution `head ~ dist :- body`.
#[derive(Debug, Clone, PartialEq)]
pub struct Rule {
    pub head: VarId,
    pub dist: Distribution,
    pub body: Vec<Atom>,
}

impl Rule {
    /// True when every body atom holds under `lookup`.
    pub fn fires(&self, lookup: impl Fn(VarId) -> Option<Value>) -> bool {
        self.body.iter().all(|a| lookup(a.var).is_some_and(|v| a.holds(v)))
    }
}

/// Parent sets plus name-ordered children lists for a set of variables.
#[derive(Debug, Clone, PartialEq)]
pub struct Dag {
    names: Vec<String>,
    parents: Vec<Vec<VarId>>,
    children: Vec<Vec<VarId>>,
}

impl Dag {
    /// `parents[v]` in the order they should be visited.
    pub fn new(names: Vec<String>, parents: Vec<Vec<VarId>>) -> Self {
        let mut children = vec![Vec::new(); names.len()];
        for (child, ps) in parents.iter().enumerate() {
            for p in ps {
                if !children[p.index()].contains(&VarId(child)) {
                    children[p.index()].push(VarId(child));
                }
            }
        }
        for cs in &mut children {
            cs.sort_by(|a, b| names[a.index()].cmp(&names[b.index()]));
        }
        Dag { names, parents, children }
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn name(&self, v: VarId) -> &str {
        &self.names[v.index()]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn id(&self, name: &str) -> Option<VarId> {
        self.names.iter().position(|n| n == name).map(VarId)
    }

    pub fn parents(&self, v: VarId) -> &[VarId] {
        &self.parents[v.index()]
    }

    pub fn children(&self, v: VarId) -> &[VarId] {
        &self.children[v.index()]
    }

    pub fn ids(&self) -> impl Iterator<Item = VarId> {
        (0..self.names.len()).map(VarId)
    }

    /// Kahn's algorithm with ties broken by variable name.
    pub fn topological_order(&self) -> Result<Vec<VarId>, ModelError> {
        let n = self.len();
        let mut indegree: Vec<usize> = self.parents.iter().map(Vec::len).collect();
        let mut ready: BinaryHeap<Reverse<(&str, usize)>> = (0..n)
            .filter(|&v| indegree[v] == 0)
            .map(|v| Reverse((self.names[v].as_str(), v)))
            .collect();
        let mut order = Vec::with_capacity(n);
        while let Some(Reverse((_, v))) = ready.pop() {
            order.push(VarId(v));
            for &c in &self.children[v] {
                indegree[c.index()] -= 1;
                if indegree[c.index()] == 0 {
                    ready.push(Reverse((self.names[c.index()].as_str(), c.index())));
                }
            }
        }
        if order.len() == n {
            Ok(order)
        } else {
            Err(ModelError::Cycle(self.find_cycle().unwrap_or_default()))
        }
    }

    /// Names along one directed cycle, first name repeated at the end.
    pub fn find_cycle(&self) -> Option<Vec<String>> {
        // 0 = unvisited, 1 = on stack, 2 = done
        let mut state = vec![0u8; self.len()];
        let mut stack: Vec<usize> = Vec::new();
        for start in 0..self.len() {
            if state[start] == 0 {
                if let Some(c) = self.cycle_from(start, &mut state, &mut stack) {
                    return Some(c.into_iter().map(|v| self.names[v].clone()).collect());
                }
            }
        }
        None
    }

    fn cycle_from(&self, v: usize, state: &mut [u8], stack: &mut Vec<usize>) -> Option<Vec<usize>> {
        state[v] = 1;
        stack.push(v);
        for c in &self.children[v] {
            let c = c.index();
            if state[c] == 1 {
                let pos = stack.iter().position(|&s| s == c).expect("on stack");
                let mut cycle = stack[pos..].to_vec();
                cycle.push(c);
                return Some(cycle);
            }
            if state[c] == 0 {
                if let Some(cycle) = self.cycle_from(c, state, stack) {
                    return Some(cycle);
                }
            }
        }
        stack.pop();
        state[v] = 2;
        None
    }
}

/// A DC(B)-style program: guarded distributions for each variable.
#[derive(Debug, Clone)]
pub struct RuleProgram {
    variables: Vec<Variable>,
    by_name: HashMap<String, VarId>,
    rules: Vec<Rule>,
    head_rules: Vec<Vec<usize>>,
    body_rules: Vec<Vec<usize>>,
    dag: Dag,
}

impl RuleProgram {
    /// Build a program from variables and rules.
    ///
    /// Checks local well-formedness (distributions, atoms, kinds, no
    /// self-reference). Exclusivity, exhaustiveness and acyclicity are left
    /// to [`crate::validate::validate_program`].
    pub fn new(variables: Vec<Variable>, rules: Vec<Rule>) -> Result<Self, ModelError> {
        let mut by_name = HashMap::with_capacity(variables.len());
        for (i, v) in variables.iter().enumerate() {
            v.check()?;
            if by_name.insert(v.name.clone(), VarId(i)).is_some() {
                return Err(ModelError::DuplicateVariable(v.name.clone()));
            }
        }
        let n = variables.len();
        let mut head_rules = vec![Vec::new(); n];
        let mut body_rules = vec![Vec::new(); n];
        let mut parents: Vec<Vec<VarId>> = vec![Vec::new(); n];
        for (id, rule) in rules.iter().enumerate() {
            let head = variables
                .get(rule.head.index())
                .ok_or_else(|| ModelError::UnknownVariable(format!("#{}", rule.head.0)))?;
            rule.dist.validate()?;
            if !rule.dist.fits(head) {
                return Err(ModelError::KindMismatch(head.name.clone()));
            }
            for atom in &rule.body {
                atom.check(&variables)?;
                if atom.var == rule.head {
                    return Err(ModelError::SelfReference(head.name.clone()));
                }
                if !parents[rule.head.index()].contains(&atom.var) {
                    parents[rule.head.index()].push(atom.var);
                }
                if !body_rules[atom.var.index()].contains(&id) {
                    body_rules[atom.var.index()].push(id);
                }
            }
            head_rules[rule.head.index()].push(id);
        }
        let dag = Dag::new(variables.iter().map(|v| v.name.clone()).collect(), parents);
        Ok(RuleProgram { variables, by_name, rules, head_rules, body_rules, dag })
    }

    pub fn variables(&self) -> &[Variable] {
        &self.variables
    }

    pub fn variable(&self, v: VarId) -> &Variable {
        &self.variables[v.index()]
    }

    pub fn id(&self, name: &str) -> Option<VarId> {
        self.by_name.get(name).copied()
    }

    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    pub fn rule(&self, id: usize) -> &Rule {
        &self.rules[id]
    }

    /// Rule ids with `v` as head, in definition order.
    pub fn rules_for(&self, v: VarId) -> &[usize] {
        &self.head_rules[v.index()]
    }

    /// Rule ids whose body mentions `v`, in definition order.
    pub fn rules_mentioning(&self, v: VarId) -> &[usize] {
        &self.body_rules[v.index()]
    }

    /// The induced parent graph: `p -> h` iff `p` appears in a body of `h`.
    pub fn dag(&self) -> &Dag {
        &self.dag
    }

    pub fn len(&self) -> usize {
        self.variables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.variables.is_empty()
    }

    pub fn is_discrete(&self) -> bool {
        self.variables.iter().all(Variable::is_discrete)
    }

    /// The rule of `v` firing under a full lookup of its parents.
    pub fn firing_rule(&self, v: VarId, lookup: impl Fn(VarId) -> Option<Value> + Copy) -> Option<usize> {
        self.head_rules[v.index()].iter().copied().find(|&r| self.rules[r].fires(lookup))
    }

    pub fn resolve(&self, assignment: &AssignmentMap) -> Result<Vec<(VarId, Value)>, ModelError> {
        resolve_with(assignment, |name| self.id(name).map(|id| (id, self.variable(id))))
    }
}

impl PartialEq for RuleProgram {
    /// Structural equality by variable name, independent of variable order.
    fn eq(&self, other: &Self) -> bool {
        if self.variables.len() != other.variables.len() || self.rules.len() != other.rules.len() {
            return false;
        }
        let map: Option<Vec<VarId>> = self.variables.iter().map(|v| other.id(&v.name)).collect();
        let Some(map) = map else { return false };
        self.variables.iter().enumerate().all(|(i, v)| {
            let o = map[i];
            if other.variable(o).kind != v.kind {
                return false;
            }
            let mine = &self.head_rules[i];
            let theirs = other.rules_for(o);
            mine.len() == theirs.len()
                && mine.iter().zip(theirs).all(|(&a, &b)| {
                    let (ra, rb) = (&self.rules[a], &other.rules[b]);
                    ra.dist == rb.dist
                        && ra.body.len() == rb.body.len()
                        && ra.body.iter().zip(&rb.body).all(|(x, y)| {
                            map[x.var.index()] == y.var && x.cmp == y.cmp && x.value == y.value
                        })
                })
        })
    }
}

/// A discrete conditional probability table.
///
/// Rows are indexed in mixed radix over the parent values with the first
/// parent most significant; each row has one probability per child value.
#[derive(Debug, Clone, PartialEq)]
pub struct TableCpd {
    pub parent_cards: Vec<usize>,
    pub rows: Vec<Vec<f64>>,
}

impl TableCpd {
    pub fn row_index(&self, parent_values: &[usize]) -> usize {
        parent_values.iter().zip(&self.parent_cards).fold(0, |acc, (&v, &c)| acc * c + v)
    }

    pub fn row(&self, parent_values: &[usize]) -> &[f64] {
        &self.rows[self.row_index(parent_values)]
    }

    /// Inverse of [`TableCpd::row_index`].
    pub fn parent_values(&self, mut row: usize) -> Vec<usize> {
        let mut values = vec![0; self.parent_cards.len()];
        for (slot, &c) in values.iter_mut().zip(&self.parent_cards).rev() {
            *slot = row % c;
            row /= c;
        }
        values
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cpd {
    Table(TableCpd),
    Tree(TreeCpd),
}

impl Cpd {
    pub fn row(&self, parent_values: &[usize]) -> &[f64] {
        match self {
            Cpd::Table(t) => t.row(parent_values),
            Cpd::Tree(t) => t.evaluate(parent_values),
        }
    }

    pub fn row_count(&self) -> usize {
        match self {
            Cpd::Table(t) => t.rows.len(),
            Cpd::Tree(t) => t.parent_cards().iter().product(),
        }
    }
}

/// A discrete Bayesian network.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    variables: Vec<Variable>,
    cpds: Vec<Cpd>,
    dag: Dag,
}

impl Network {
    pub fn new(variables: Vec<Variable>, parents: Vec<Vec<VarId>>, cpds: Vec<Cpd>) -> Result<Self, ModelError> {
        let mut seen = HashMap::new();
        for (i, v) in variables.iter().enumerate() {
            v.check()?;
            if !v.is_discrete() {
                return Err(ModelError::KindMismatch(v.name.clone()));
            }
            if seen.insert(v.name.as_str(), i).is_some() {
                return Err(ModelError::DuplicateVariable(v.name.clone()));
            }
        }
        if parents.len() != variables.len() || cpds.len() != variables.len() {
            return Err(ModelError::InvalidCpd { var: String::new(), reason: "one parent set and CPD per variable".into() });
        }
        for (i, (ps, cpd)) in parents.iter().zip(&cpds).enumerate() {
            let name = &variables[i].name;
            let bad = |reason: String| ModelError::InvalidCpd { var: name.clone(), reason };
            let cards: Vec<usize> = ps
                .iter()
                .map(|p| variables.get(p.index()).and_then(Variable::cardinality).ok_or_else(|| bad("unknown parent".into())))
                .collect::<Result<_, _>>()?;
            if ps.contains(&VarId(i)) {
                return Err(ModelError::SelfReference(name.clone()));
            }
            let card = variables[i].cardinality().unwrap_or(0);
            match cpd {
                Cpd::Table(t) => {
                    if t.parent_cards != cards {
                        return Err(bad("parent cardinalities do not match".into()));
                    }
                    let expected: usize = cards.iter().product();
                    if t.rows.len() != expected {
                        return Err(bad(format!("expected {expected} rows, found {}", t.rows.len())));
                    }
                    for row in &t.rows {
                        if row.len() != card {
                            return Err(bad(format!("row has {} entries, expected {card}", row.len())));
                        }
                        Distribution::Categorical(row.clone()).validate().map_err(|e| bad(e.to_string()))?;
                    }
                }
                Cpd::Tree(t) => {
                    if t.parent_cards() != cards.as_slice() {
                        return Err(bad("parent cardinalities do not match".into()));
                    }
                    for leaf in t.leaves() {
                        if leaf.len() != card {
                            return Err(bad("leaf size does not match the domain".into()));
                        }
                        Distribution::Categorical(leaf.to_vec()).validate().map_err(|e| bad(e.to_string()))?;
                    }
                }
            }
        }
        let dag = Dag::new(variables.iter().map(|v| v.name.clone()).collect(), parents);
        dag.topological_order()?;
        Ok(Network { variables, cpds, dag })
    }

    pub fn variables(&self) -> &[Variable] {
        &self.variables
    }

    pub fn variable(&self, v: VarId) -> &Variable {
        &self.variables[v.index()]
    }

    pub fn id(&self, name: &str) -> Option<VarId> {
        self.dag.id(name)
    }

    pub fn parents(&self, v: VarId) -> &[VarId] {
        self.dag.parents(v)
    }

    pub fn cpd(&self, v: VarId) -> &Cpd {
        &self.cpds[v.index()]
    }

    pub fn cpds(&self) -> &[Cpd] {
        &self.cpds
    }

    pub fn dag(&self) -> &Dag {
        &self.dag
    }

    pub fn len(&self) -> usize {
        self.variables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.variables.is_empty()
    }

    pub fn cardinality(&self, v: VarId) -> usize {
        self.variables[v.index()].cardinality().expect("network variables are discrete")
    }

    /// CPD row of `v` given a full assignment indexed by variable.
    pub fn row_given(&self, v: VarId, assignment: &[usize]) -> &[f64] {
        let pv: Vec<usize> = self.parents(v).iter().map(|p| assignment[p.index()]).collect();
        self.cpds[v.index()].row(&pv)
    }

    pub fn resolve(&self, assignment: &AssignmentMap) -> Result<Vec<(VarId, Value)>, ModelError> {
        resolve_with(assignment, |name| self.id(name).map(|id| (id, self.variable(id))))
    }
}

/// Variable name to value label (evidence, query or sampled assignment).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AssignmentMap(pub BTreeMap<String, String>);

impl AssignmentMap {
    pub fn new() -> Self {
        AssignmentMap::default()
    }

    /// Returns `false` when the variable was already present.
    pub fn insert(&mut self, var: impl Into<String>, value: impl Into<String>) -> bool {
        self.0.insert(var.into(), value.into()).is_none()
    }

    pub fn get(&self, var: &str) -> Option<&str> {
        self.0.get(var).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.0.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }
}

impl<K: Into<String>, V: Into<String>> FromIterator<(K, V)> for AssignmentMap {
    fn from_iter<T: IntoIterator<Item = (K, V)>>(iter: T) -> Self {
        AssignmentMap(iter.into_iter().map(|(k, v)| (k.into(), v.into())).collect())
    }
}

impl fmt::Display for AssignmentMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.iter().map(|(k, v)| format!("{k}={v}")).collect();
        f.write_str(&parts.join(","))
    }
}

fn resolve_with<'a>(
    assignment: &AssignmentMap,
    lookup: impl Fn(&str) -> Option<(VarId, &'a Variable)>,
) -> Result<Vec<(VarId, Value)>, ModelError> {
    assignment
        .iter()
        .map(|(name, label)| {
            let (id, var) = lookup(name).ok_or_else(|| ModelError::UnknownVariable(name.to_string()))?;
            Ok((id, var.parse_value(label)?))
        })
        .collect()
}

/// Topological order of a DAG, ties broken by name.
pub fn topological_order(dag: &Dag) -> Result<Vec<String>, ModelError> {
    Ok(dag.topological_order()?.into_iter().map(|v| dag.name(v).to_string()).collect())
}
