//! Exact inference used as ground truth: joint enumeration, variable
//! elimination, and exhaustive enumeration of the CS-LW proposal.

use std::collections::{BTreeSet, HashMap};

use thiserror::Error;

use crate::bayesball::{basis_of, RequisitePartition};
use crate::engine::{EngineError, ReplayChooser, Simulator};
use crate::model::{AssignmentMap, ModelError, Network, RuleProgram, Value, VarId};
use crate::numeric::Sum;

/// Largest joint state space enumerated.
pub const ENUMERATION_BUDGET: u128 = 1 << 26;
/// Largest intermediate factor built by variable elimination.
pub const VE_BUDGET: u128 = 1 << 30;
/// Default cap on proposal branches for [`exact_contextual`].
pub const BRANCH_CAP: usize = 1 << 22;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("`{0}` is continuous; exact methods need a discrete model")]
    Continuous(String),
    #[error("{method}: state space of {size} entries exceeds the budget of {budget}")]
    Budget { method: &'static str, size: u128, budget: u128 },
    #[error("more than {0} proposal branches")]
    TooManyBranches(usize),
    #[error("no rule fires for `{0}`")]
    NoRuleFired(String),
    #[error("evidence has probability zero")]
    ZeroEvidence,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

fn fixed_values(n: usize, pairs: &[(VarId, Value)]) -> Vec<Option<usize>> {
    let mut fixed = vec![None; n];
    for &(v, x) in pairs {
        fixed[v.index()] = x.as_index();
    }
    fixed
}

/// Odometer over the free variables; calls `visit` with the full state.
fn enumerate_joint(
    cards: &[usize],
    fixed: &[Option<usize>],
    mut visit: impl FnMut(&[usize]) -> Result<(), OracleError>,
) -> Result<(), OracleError> {
    let free: Vec<usize> = (0..cards.len()).filter(|&i| fixed[i].is_none()).collect();
    let size: u128 = free.iter().map(|&i| cards[i] as u128).product();
    if size > ENUMERATION_BUDGET {
        return Err(OracleError::Budget { method: "enumeration", size, budget: ENUMERATION_BUDGET });
    }
    let mut state: Vec<usize> = fixed.iter().map(|f| f.unwrap_or(0)).collect();
    loop {
        visit(&state)?;
        let mut k = free.len();
        loop {
            if k == 0 {
                return Ok(());
            }
            k -= 1;
            let i = free[k];
            state[i] += 1;
            if state[i] < cards[i] {
                break;
            }
            state[i] = 0;
        }
    }
}

/// P(query | evidence) from the ratio of two enumerated joint sums.
fn conditional(
    cards: &[usize],
    query: &[(VarId, Value)],
    evidence: &[(VarId, Value)],
    mut joint: impl FnMut(&[usize]) -> Result<f64, OracleError>,
) -> Result<f64, OracleError> {
    let fixed = fixed_values(cards.len(), evidence);
    let (mut num, mut den) = (Sum::new(), Sum::new());
    enumerate_joint(cards, &fixed, |state| {
        let p = joint(state)?;
        den.add(p);
        if query.iter().all(|&(v, x)| Some(state[v.index()]) == x.as_index()) {
            num.add(p);
        }
        Ok(())
    })?;
    if den.value() <= 0.0 {
        return Err(OracleError::ZeroEvidence);
    }
    Ok(num.value() / den.value())
}

/// Exact P(query | evidence) by enumerating the joint of a network.
pub fn enumerate_network(net: &Network, query: &AssignmentMap, evidence: &AssignmentMap) -> Result<f64, OracleError> {
    let q = net.resolve(query)?;
    let e = net.resolve(evidence)?;
    let cards: Vec<usize> = net.dag().ids().map(|v| net.cardinality(v)).collect();
    let mut buf = Vec::new();
    conditional(&cards, &q, &e, |state| {
        let mut p = 1.0;
        for v in net.dag().ids() {
            buf.clear();
            buf.extend(net.parents(v).iter().map(|u| state[u.index()]));
            p *= net.cpd(v).row(&buf)[state[v.index()]];
        }
        Ok(p)
    })
}

/// Exact P(query | evidence) by enumerating the joint of a discrete rule
/// program, each variable taking the distribution of its firing rule.
pub fn enumerate_program(program: &RuleProgram, query: &AssignmentMap, evidence: &AssignmentMap) -> Result<f64, OracleError> {
    let cards = program
        .variables()
        .iter()
        .map(|v| v.cardinality().ok_or_else(|| OracleError::Continuous(v.name.clone())))
        .collect::<Result<Vec<_>, _>>()?;
    let q = program.resolve(query)?;
    let e = program.resolve(evidence)?;
    conditional(&cards, &q, &e, |state| {
        let lookup = |u: VarId| Some(Value::Discrete(state[u.index()]));
        let mut p = 1.0;
        for v in program.dag().ids() {
            let r = program
                .firing_rule(v, lookup)
                .ok_or_else(|| OracleError::NoRuleFired(program.variable(v).name.clone()))?;
            p *= program.rule(r).dist.probability(Value::Discrete(state[v.index()]));
        }
        Ok(p)
    })
}

#[derive(Debug, Clone, PartialEq)]
struct Factor {
    vars: Vec<VarId>,
    cards: Vec<usize>,
    table: Vec<f64>,
}

impl Factor {
    fn scalar(x: f64) -> Self {
        Factor { vars: Vec::new(), cards: Vec::new(), table: vec![x] }
    }

    fn strides(&self) -> Vec<usize> {
        let mut s = vec![1; self.vars.len()];
        for k in (0..self.vars.len().saturating_sub(1)).rev() {
            s[k] = s[k + 1] * self.cards[k + 1];
        }
        s
    }

    /// (position in `vars`, stride) for each of this factor's variables.
    fn layout_in(&self, vars: &[VarId]) -> Vec<(usize, usize)> {
        self.vars.iter().zip(self.strides()).map(|(v, s)| (vars.binary_search(v).unwrap(), s)).collect()
    }
}

fn odometer(cards: &[usize], state: &mut [usize]) -> bool {
    for k in (0..cards.len()).rev() {
        state[k] += 1;
        if state[k] < cards[k] {
            return true;
        }
        state[k] = 0;
    }
    false
}

fn product(factors: &[&Factor], card_of: &dyn Fn(VarId) -> usize) -> Result<Factor, OracleError> {
    let vars: Vec<VarId> = factors.iter().flat_map(|f| f.vars.iter().copied()).collect::<BTreeSet<_>>().into_iter().collect();
    let cards: Vec<usize> = vars.iter().map(|&v| card_of(v)).collect();
    let size: u128 = cards.iter().map(|&c| c as u128).product();
    if size > VE_BUDGET {
        return Err(OracleError::Budget { method: "variable elimination", size, budget: VE_BUDGET });
    }
    let mut table = Vec::with_capacity(size as usize);
    let layouts: Vec<Vec<(usize, usize)>> = factors.iter().map(|f| f.layout_in(&vars)).collect();
    let mut state = vec![0; vars.len()];
    loop {
        table.push(
            factors
                .iter()
                .zip(&layouts)
                .map(|(f, l)| f.table[l.iter().map(|&(k, s)| state[k] * s).sum::<usize>()])
                .product(),
        );
        if !odometer(&cards, &mut state) {
            break;
        }
    }
    Ok(Factor { vars, cards, table })
}

fn sum_out(f: &Factor, v: VarId) -> Factor {
    let k = f.vars.binary_search(&v).unwrap();
    let mut vars = f.vars.clone();
    vars.remove(k);
    let mut cards = f.cards.clone();
    let card = cards.remove(k);
    let inner: usize = f.cards[k + 1..].iter().product();
    let outer = f.table.len() / (card * inner);
    let mut table = Vec::with_capacity(outer * inner);
    for o in 0..outer {
        for i in 0..inner {
            let mut s = Sum::new();
            for x in 0..card {
                s.add(f.table[(o * card + x) * inner + i]);
            }
            table.push(s.value());
        }
    }
    Factor { vars, cards, table }
}

/// CPD of `v` as a factor over its unfixed family.
fn cpd_factor(net: &Network, v: VarId, fixed: &[Option<usize>]) -> Factor {
    let mut family: Vec<VarId> = net.parents(v).to_vec();
    family.push(v);
    let vars: Vec<VarId> = family.iter().copied().filter(|u| fixed[u.index()].is_none()).collect::<BTreeSet<_>>().into_iter().collect();
    let cards: Vec<usize> = vars.iter().map(|&u| net.cardinality(u)).collect();
    let mut state = vec![0; vars.len()];
    let mut table = Vec::new();
    let value = |u: VarId, state: &[usize]| fixed[u.index()].unwrap_or_else(|| state[vars.binary_search(&u).unwrap()]);
    let mut parents = Vec::new();
    loop {
        parents.clear();
        parents.extend(net.parents(v).iter().map(|&u| value(u, &state)));
        table.push(net.cpd(v).row(&parents)[value(v, &state)]);
        if !odometer(&cards, &mut state) {
            break;
        }
    }
    Factor { vars, cards, table }
}

/// Min-fill choice with ties broken by variable name.
fn pick_min_fill(net: &Network, factors: &[Factor], remaining: &BTreeSet<VarId>) -> VarId {
    let mut adjacent: BTreeSet<(VarId, VarId)> = BTreeSet::new();
    for f in factors {
        for &a in &f.vars {
            for &b in &f.vars {
                if a < b {
                    adjacent.insert((a, b));
                }
            }
        }
    }
    let mut best: Option<(usize, &str, VarId)> = None;
    for &v in remaining {
        let nb: Vec<VarId> = factors
            .iter()
            .filter(|f| f.vars.contains(&v))
            .flat_map(|f| f.vars.iter().copied())
            .filter(|&u| u != v)
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let mut fill = 0;
        for (i, &a) in nb.iter().enumerate() {
            for &b in &nb[i + 1..] {
                if !adjacent.contains(&(a, b)) {
                    fill += 1;
                }
            }
        }
        let key = (fill, net.variable(v).name.as_str(), v);
        if best.map_or(true, |b| (key.0, key.1) < (b.0, b.1)) {
            best = Some(key);
        }
    }
    best.expect("remaining is not empty").2
}

/// Ancestors of `roots`, inclusive. Everything else is barren for a sum
/// restricted to `roots` and sums out to 1.
fn ancestral_set(net: &Network, roots: impl Iterator<Item = VarId>) -> Vec<bool> {
    let mut keep = vec![false; net.len()];
    let mut stack: Vec<VarId> = roots.collect();
    while let Some(v) = stack.pop() {
        if !std::mem::replace(&mut keep[v.index()], true) {
            stack.extend_from_slice(net.parents(v));
        }
    }
    keep
}

fn ve_sum(net: &Network, fixed: &[Option<usize>]) -> Result<f64, OracleError> {
    let keep = ancestral_set(net, net.dag().ids().filter(|v| fixed[v.index()].is_some()));
    let kept = || net.dag().ids().filter(|v| keep[v.index()]);
    let mut factors: Vec<Factor> = kept().map(|v| cpd_factor(net, v, fixed)).collect();
    let mut remaining: BTreeSet<VarId> = kept().filter(|v| fixed[v.index()].is_none()).collect();
    let card_of = |v: VarId| net.cardinality(v);
    while !remaining.is_empty() {
        let v = pick_min_fill(net, &factors, &remaining);
        remaining.remove(&v);
        let (touching, rest): (Vec<Factor>, Vec<Factor>) = factors.into_iter().partition(|f| f.vars.contains(&v));
        let refs: Vec<&Factor> = touching.iter().collect();
        let joined = product(&refs, &card_of)?;
        factors = rest;
        factors.push(sum_out(&joined, v));
    }
    let mut total = Factor::scalar(1.0);
    for f in &factors {
        total.table[0] *= f.table[0];
    }
    Ok(total.table[0])
}

/// Exact P(query | evidence) by variable elimination with a min-fill order.
pub fn variable_elimination(net: &Network, query: &AssignmentMap, evidence: &AssignmentMap) -> Result<f64, OracleError> {
    let q = net.resolve(query)?;
    let e = net.resolve(evidence)?;
    let fixed_e = fixed_values(net.len(), &e);
    let mut fixed_qe = fixed_e.clone();
    for &(v, x) in &q {
        match fixed_qe[v.index()] {
            Some(y) if Some(y) != x.as_index() => return Ok(0.0),
            _ => fixed_qe[v.index()] = x.as_index(),
        }
    }
    let den = ve_sum(net, &fixed_e)?;
    if den <= 0.0 {
        return Err(OracleError::ZeroEvidence);
    }
    Ok(ve_sum(net, &fixed_qe)? / den)
}

/// Discrete cardinalities of `vars`, or the first continuous one.
fn cards_of(program: &RuleProgram, vars: &[VarId]) -> Result<Vec<usize>, OracleError> {
    vars.iter()
        .map(|&v| {
            let var = program.variable(v);
            var.cardinality().ok_or_else(|| OracleError::Continuous(var.name.clone()))
        })
        .collect()
}

/// Σ over joint values of `free` of Π P(u | pa(u)) for u in `free ∪ subset`,
/// with observed variables clamped to `partition`'s evidence values.
fn clamped_sum(program: &RuleProgram, evidence: &[Option<usize>], free: &[VarId], subset: &[VarId]) -> Result<f64, OracleError> {
    let cards = cards_of(program, free)?;
    let size: u128 = cards.iter().map(|&c| c as u128).product();
    if size > ENUMERATION_BUDGET {
        return Err(OracleError::Budget { method: "expected weight", size, budget: ENUMERATION_BUDGET });
    }
    let mut values: Vec<Option<usize>> = evidence.to_vec();
    let mut state = vec![0; free.len()];
    let mut acc = Sum::new();
    loop {
        for (k, &v) in free.iter().enumerate() {
            values[v.index()] = Some(state[k]);
        }
        let lookup = |u: VarId| values[u.index()].map(Value::Discrete);
        let mut p = 1.0;
        for &u in free.iter().chain(subset) {
            let r = program
                .firing_rule(u, lookup)
                .ok_or_else(|| OracleError::NoRuleFired(program.variable(u).name.clone()))?;
            p *= program.rule(r).dist.probability(Value::Discrete(values[u.index()].expect("assigned")));
        }
        acc.add(p);
        if !odometer(&cards, &mut state) {
            return Ok(acc.value());
        }
    }
}

fn evidence_values(program: &RuleProgram, evidence: &AssignmentMap) -> Result<Vec<Option<usize>>, OracleError> {
    Ok(fixed_values(program.len(), &program.resolve(evidence)?))
}

/// E[Π_{e ∈ subset} W_e] under the requisite proposal: the sum over joint
/// values of the basis of `subset` of the CPD product of basis ∪ subset.
pub fn expected_weight_exact(
    program: &RuleProgram,
    partition: &RequisitePartition,
    evidence: &AssignmentMap,
    subset: &[VarId],
) -> Result<f64, OracleError> {
    let basis: Vec<VarId> = basis_of(partition, program.dag(), subset).into_iter().collect();
    clamped_sum(program, &evidence_values(program, evidence)?, &basis, subset)
}

/// The same expectation summed over every unobserved variable instead of
/// the basis only.
pub fn expected_weight_full_joint(program: &RuleProgram, evidence: &AssignmentMap, subset: &[VarId]) -> Result<f64, OracleError> {
    let ev = evidence_values(program, evidence)?;
    let free: Vec<VarId> = program.dag().ids().filter(|v| ev[v.index()].is_none()).collect();
    clamped_sum(program, &ev, &free, subset)
}

/// Exact expectations of the CS-LW numerator and denominator, taken over
/// every branch of the proposal with residual expectations enumerated the
/// same way.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextualSum {
    pub numerator: f64,
    pub denominator: f64,
    pub branches: usize,
}

impl ContextualSum {
    pub fn value(&self) -> f64 {
        self.numerator / self.denominator
    }
}

fn replay_all(
    sim: &mut Simulator,
    names: &[String],
    cap: usize,
    mut run: impl FnMut(&mut Simulator, &mut ReplayChooser) -> Result<(), OracleError>,
) -> Result<usize, OracleError> {
    let mut chooser = ReplayChooser::new(names.to_vec());
    let mut branches = 0;
    loop {
        branches += 1;
        if branches > cap {
            return Err(OracleError::TooManyBranches(cap));
        }
        chooser.start();
        run(sim, &mut chooser)?;
        if !chooser.advance() {
            return Ok(branches);
        }
    }
}

pub fn exact_contextual(program: &RuleProgram, query: &AssignmentMap, evidence: &AssignmentMap, cap: usize) -> Result<ContextualSum, OracleError> {
    let mut sim = Simulator::from_maps(program, query, evidence)?;
    let names: Vec<String> = program.variables().iter().map(|v| v.name.clone()).collect();
    let mut memo: HashMap<Vec<VarId>, f64> = HashMap::new();
    let (mut num, mut den) = (Sum::new(), Sum::new());
    let branches = replay_all(&mut sim, &names, cap, |sim, chooser| {
        let rec = sim.simulate(chooser)?;
        let (indicator, w, residual) = (rec.indicator, rec.weight(), rec.residual.clone());
        let p = chooser.probability;
        let r = match memo.get(&residual) {
            Some(&r) => r,
            None => {
                let r = residual_exact(sim, &names, &residual, cap)?;
                memo.insert(residual, r);
                r
            }
        };
        let term = p * w * r;
        den.add(term);
        if indicator {
            num.add(term);
        }
        Ok(())
    })?;
    Ok(ContextualSum { numerator: num.value(), denominator: den.value(), branches })
}

/// E[Π w(e)] over fresh simulations weighing `vars`.
fn residual_exact(sim: &mut Simulator, names: &[String], vars: &[VarId], cap: usize) -> Result<f64, OracleError> {
    if vars.is_empty() {
        return Ok(1.0);
    }
    let mut acc = Sum::new();
    let mut out = Vec::new();
    replay_all(sim, names, cap, |sim, chooser| {
        sim.fill_weights(vars, chooser, &mut out)?;
        acc.add(chooser.probability * out.iter().product::<f64>());
        Ok(())
    })?;
    Ok(acc.value())
}
