//! The sampling core: top-down simulation of rule programs with partial
//! weights, and plain likelihood weighting over networks.
//!
//! A [`Simulator`] owns the global tables of one simulation (assignments,
//! chosen rules, top/bottom marks, the forward queue). Tables are reset in
//! O(1) between samples by bumping an epoch counter.

use std::collections::VecDeque;

use rand::Rng;
use thiserror::Error;

use crate::bayesball::{classify_requisite, BayesBallError, RequisitePartition};
use crate::model::{AssignmentMap, Atom, AtomValue, Comparator, Distribution, ModelError, Network, RuleProgram, Value, VarId};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error("no rule fires for `{0}`: the program is not exhaustive")]
    NoRuleFired(String),
    #[error("`{0}` is continuous and cannot be enumerated")]
    Continuous(String),
    #[error("query variable `{0}` is observed")]
    QueryObserved(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("invalid query: {0}")]
    Query(String),
}

impl From<BayesBallError> for EngineError {
    fn from(e: BayesBallError) -> Self {
        match e {
            BayesBallError::UnknownVariable(v) => EngineError::Model(ModelError::UnknownVariable(v)),
            BayesBallError::QueryObserved(v) => EngineError::QueryObserved(v),
        }
    }
}

/// Source of values at sampling points.
pub trait Chooser {
    fn choose(&mut self, var: VarId, dist: &Distribution) -> Result<Value, EngineError>;
}

pub struct RngChooser<R>(pub R);

impl<R: Rng> Chooser for RngChooser<R> {
    fn choose(&mut self, _var: VarId, dist: &Distribution) -> Result<Value, EngineError> {
        Ok(dist.sample(&mut self.0))
    }
}

/// Replays a fixed prefix of value indices and takes index 0 beyond it,
/// recording the support size of every choice point. Driving the simulator
/// with [`ReplayChooser::advance`] in a loop enumerates every branch.
#[derive(Debug, Clone, Default)]
pub struct ReplayChooser {
    pub script: Vec<usize>,
    pub sizes: Vec<usize>,
    /// Product of the probabilities of the chosen values.
    pub probability: f64,
    names: Vec<String>,
    pos: usize,
}

impl ReplayChooser {
    pub fn new(names: Vec<String>) -> Self {
        ReplayChooser { names, probability: 1.0, ..Default::default() }
    }

    pub fn start(&mut self) {
        self.pos = 0;
        self.sizes.clear();
        self.probability = 1.0;
    }

    /// Move to the next branch in depth-first order; false when exhausted.
    pub fn advance(&mut self) -> bool {
        self.script.truncate(self.pos);
        while let Some(last) = self.script.pop() {
            let k = self.script.len();
            if last + 1 < self.sizes[k] {
                self.script.push(last + 1);
                return true;
            }
        }
        false
    }
}

impl Chooser for ReplayChooser {
    fn choose(&mut self, var: VarId, dist: &Distribution) -> Result<Value, EngineError> {
        let probs = dist.probabilities().ok_or_else(|| {
            EngineError::Continuous(self.names.get(var.index()).cloned().unwrap_or_else(|| format!("#{}", var.0)))
        })?;
        if self.pos == self.script.len() {
            self.script.push(0);
        }
        let k = self.script[self.pos];
        self.sizes.push(probs.len());
        self.pos += 1;
        self.probability *= probs[k];
        Ok(Value::Discrete(k))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceKind {
    Sampled,
    Weighted,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceEntry {
    pub var: VarId,
    pub kind: TraceKind,
    /// Firing rule id.
    pub rule: usize,
    /// Partially assigned parents: the firing rule's body variables with
    /// their values at the time of firing.
    pub ppa: Vec<(VarId, Value)>,
    /// Sampled value, or the observed value for weighted entries.
    pub value: Value,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SampleRecord {
    pub indicator: bool,
    /// `x ∪ z†` in the order of assignment.
    pub assignment: Vec<(VarId, Value)>,
    /// Weights of `e†` in the order of weighting.
    pub partial_weights: Vec<(VarId, f64)>,
    /// `e‡`: diagnostic evidence left unweighted, ascending ids.
    pub residual: Vec<VarId>,
    pub trace: Vec<TraceEntry>,
}

impl SampleRecord {
    pub fn weight(&self) -> f64 {
        self.partial_weights.iter().map(|w| w.1).product()
    }
}

/// Convert `var=value` pairs to equality (or threshold) atoms.
pub fn parse_query(program: &RuleProgram, text: &str) -> Result<Vec<Atom>, EngineError> {
    let mut atoms = Vec::new();
    if text.trim().is_empty() {
        return Ok(atoms);
    }
    for item in text.split(',') {
        let item = item.trim();
        let ops = [(">=", Comparator::Ge), ("=<", Comparator::Le), ("<=", Comparator::Le), (">", Comparator::Gt), ("<", Comparator::Lt), ("=", Comparator::Eq)];
        let (pos, sym, cmp) = ops
            .iter()
            .filter_map(|(s, c)| item.find(s).map(|p| (p, *s, *c)))
            .min_by_key(|(p, s, _)| (*p, std::cmp::Reverse(s.len())))
            .ok_or_else(|| EngineError::Query(format!("expected `var=value`, found `{item}`")))?;
        let name = item[..pos].trim();
        let value = item[pos + sym.len()..].trim();
        let var = program.id(name).ok_or_else(|| ModelError::UnknownVariable(name.to_string()))?;
        let variable = program.variable(var);
        let atom_value = match (variable.is_discrete(), cmp) {
            (true, Comparator::Eq) => match variable.parse_value(value)? {
                Value::Discrete(i) => AtomValue::Label(i),
                Value::Real(_) => unreachable!(),
            },
            (false, Comparator::Eq) => {
                return Err(EngineError::Query(format!("continuous `{name}` needs an order comparator")))
            }
            (true, _) => return Err(EngineError::Query(format!("discrete `{name}` only admits `=`"))),
            (false, _) => AtomValue::Threshold(
                value.parse().map_err(|_| EngineError::Query(format!("`{value}` is not a real number")))?,
            ),
        };
        atoms.push(Atom { var, cmp, value: atom_value });
    }
    Ok(atoms)
}

/// Per-variable epoch-stamped marks.
#[derive(Debug, Clone)]
struct Marks {
    stamp: Vec<u32>,
}

impl Marks {
    fn new(n: usize) -> Self {
        Marks { stamp: vec![0; n] }
    }

    #[inline]
    fn get(&self, v: VarId, epoch: u32) -> bool {
        self.stamp[v.index()] == epoch
    }

    #[inline]
    fn set(&mut self, v: VarId, epoch: u32) {
        self.stamp[v.index()] = epoch;
    }

    fn clear(&mut self) {
        self.stamp.fill(0);
    }
}

/// Simulation of one rule program for a fixed query and evidence.
pub struct Simulator<'p> {
    program: &'p RuleProgram,
    query: Vec<Atom>,
    evidence: Vec<Option<Value>>,
    partition: RequisitePartition,
    diagnostic: Vec<VarId>,
    /// Distinct heads of the rules mentioning each variable, in program order.
    child_heads: Vec<Vec<VarId>>,
    epoch: u32,
    top: Marks,
    bottom: Marks,
    weighted: Marks,
    asg: Vec<Value>,
    dst: Vec<usize>,
    forward: VecDeque<VarId>,
    tracing: bool,
    record: SampleRecord,
}

impl<'p> Simulator<'p> {
    pub fn new(program: &'p RuleProgram, query: Vec<Atom>, evidence: &[(VarId, Value)]) -> Result<Self, EngineError> {
        let n = program.len();
        let mut ev = vec![None; n];
        for &(v, value) in evidence {
            ev[v.index()] = Some(value);
        }
        let mut query_vars: Vec<VarId> = Vec::new();
        for a in &query {
            if !query_vars.contains(&a.var) {
                query_vars.push(a.var);
            }
        }
        let evidence_vars: Vec<VarId> = evidence.iter().map(|e| e.0).collect();
        let partition = classify_requisite(program.dag(), &query_vars, &evidence_vars)?;
        let diagnostic = partition.diagnostic_evidence();
        let child_heads = (0..n)
            .map(|m| {
                let mut heads: Vec<VarId> = Vec::new();
                for &r in program.rules_mentioning(VarId(m)) {
                    let h = program.rule(r).head;
                    if !heads.contains(&h) {
                        heads.push(h);
                    }
                }
                heads
            })
            .collect();
        Ok(Simulator {
            program,
            query,
            evidence: ev,
            partition,
            diagnostic,
            child_heads,
            epoch: 0,
            top: Marks::new(n),
            bottom: Marks::new(n),
            weighted: Marks::new(n),
            asg: vec![Value::Discrete(0); n],
            dst: vec![usize::MAX; n],
            forward: VecDeque::new(),
            tracing: false,
            record: SampleRecord::default(),
        })
    }

    /// Build from name-level query and evidence maps.
    pub fn from_maps(program: &'p RuleProgram, query: &AssignmentMap, evidence: &AssignmentMap) -> Result<Self, EngineError> {
        let atoms = program
            .resolve(query)?
            .into_iter()
            .map(|(v, value)| match value {
                Value::Discrete(i) => Ok(Atom::eq(v, i)),
                Value::Real(_) => Err(EngineError::Query(format!(
                    "continuous `{}` needs an order comparator",
                    program.variable(v).name
                ))),
            })
            .collect::<Result<Vec<_>, _>>()?;
        Simulator::new(program, atoms, &program.resolve(evidence)?)
    }

    pub fn with_trace(mut self, on: bool) -> Self {
        self.tracing = on;
        self
    }

    pub fn program(&self) -> &'p RuleProgram {
        self.program
    }

    pub fn partition(&self) -> &RequisitePartition {
        &self.partition
    }

    pub fn query(&self) -> &[Atom] {
        &self.query
    }

    pub fn evidence(&self, v: VarId) -> Option<Value> {
        self.evidence[v.index()]
    }

    fn reset(&mut self) {
        if self.epoch == u32::MAX {
            self.epoch = 0;
            self.top.clear();
            self.bottom.clear();
            self.weighted.clear();
        }
        self.epoch += 1;
        self.forward.clear();
        self.record.indicator = false;
        self.record.assignment.clear();
        self.record.partial_weights.clear();
        self.record.residual.clear();
        self.record.trace.clear();
    }

    /// One run of the top-down simulation. The returned record borrows the
    /// simulator's buffers; clone it to keep it.
    pub fn simulate<C: Chooser>(&mut self, chooser: &mut C) -> Result<&SampleRecord, EngineError> {
        self.reset();
        // Each query atom is proved on its own so every query variable is
        // assigned even when an earlier atom fails.
        let mut indicator = true;
        for k in 0..self.query.len() {
            let atom = self.query[k].clone();
            indicator &= self.prove_atom(&atom, chooser)?;
        }
        self.record.indicator = indicator;
        while let Some(m) = self.forward.pop_front() {
            for k in 0..self.child_heads[m.index()].len() {
                let h = self.child_heads[m.index()][k];
                if self.evidence[h.index()].is_some() {
                    if !self.top.get(h, self.epoch) {
                        self.top.set(h, self.epoch);
                        self.weigh(h, chooser)?;
                    }
                } else if !self.bottom.get(h, self.epoch) {
                    self.bottom.set(h, self.epoch);
                    self.forward.push_back(h);
                }
            }
        }
        for &e in &self.diagnostic {
            if !self.weighted.get(e, self.epoch) {
                self.record.residual.push(e);
            }
        }
        Ok(&self.record)
    }

    /// Fill-in: from a fresh state, weigh each of `vars` (observed) in order
    /// within one shared state. Returns the weights in the same order.
    pub fn fill_weights<C: Chooser>(&mut self, vars: &[VarId], chooser: &mut C, out: &mut Vec<f64>) -> Result<(), EngineError> {
        self.reset();
        out.clear();
        for &h in vars {
            debug_assert!(self.evidence[h.index()].is_some());
            if !self.top.get(h, self.epoch) {
                self.top.set(h, self.epoch);
                self.weigh(h, chooser)?;
            }
        }
        for &h in vars {
            let w = self.record.partial_weights.iter().find(|w| w.0 == h).map(|w| w.1).expect("weighted above");
            out.push(w);
        }
        Ok(())
    }

    fn weigh<C: Chooser>(&mut self, h: VarId, chooser: &mut C) -> Result<(), EngineError> {
        let rule = self.choose_rule(h, chooser)?;
        let value = self.evidence[h.index()].expect("observed");
        let w = self.program.rule(rule).dist.probability(value);
        self.weighted.set(h, self.epoch);
        self.record.partial_weights.push((h, w));
        if self.tracing {
            self.push_trace(h, TraceKind::Weighted, rule, value);
        }
        Ok(())
    }

    /// Prove every rule body of `a`; the last successful one gives `Dst[a]`.
    fn choose_rule<C: Chooser>(&mut self, a: VarId, chooser: &mut C) -> Result<usize, EngineError> {
        let program = self.program;
        let mut chosen = None;
        for &r in program.rules_for(a) {
            if self.prove_body(r, chooser)? {
                chosen = Some(r);
            }
        }
        let r = chosen.ok_or_else(|| EngineError::NoRuleFired(program.variable(a).name.clone()))?;
        self.dst[a.index()] = r;
        Ok(r)
    }

    fn prove_body<C: Chooser>(&mut self, r: usize, chooser: &mut C) -> Result<bool, EngineError> {
        let rule = self.program.rule(r);
        for atom in &rule.body {
            if !self.prove_atom(atom, chooser)? {
                return Ok(false);
            }
        }
        Ok(true)
    }

    fn prove_atom<C: Chooser>(&mut self, atom: &Atom, chooser: &mut C) -> Result<bool, EngineError> {
        let value = self.resolve(atom.var, chooser)?;
        Ok(atom.holds(value))
    }

    fn resolve<C: Chooser>(&mut self, a: VarId, chooser: &mut C) -> Result<Value, EngineError> {
        if let Some(v) = self.evidence[a.index()] {
            return Ok(v);
        }
        if self.top.get(a, self.epoch) {
            return Ok(self.asg[a.index()]);
        }
        self.top.set(a, self.epoch);
        let rule = self.choose_rule(a, chooser)?;
        let y = chooser.choose(a, &self.program.rule(rule).dist)?;
        self.asg[a.index()] = y;
        self.record.assignment.push((a, y));
        if self.tracing {
            self.push_trace(a, TraceKind::Sampled, rule, y);
        }
        if !self.bottom.get(a, self.epoch) {
            self.bottom.set(a, self.epoch);
            self.forward.push_back(a);
        }
        Ok(y)
    }

    fn push_trace(&mut self, var: VarId, kind: TraceKind, rule: usize, value: Value) {
        let ppa = self
            .program
            .rule(rule)
            .body
            .iter()
            .map(|atom| {
                let v = self.evidence[atom.var.index()].unwrap_or(self.asg[atom.var.index()]);
                (atom.var, v)
            })
            .collect();
        self.record.trace.push(TraceEntry { var, kind, rule, ppa, value });
    }
}

/// Likelihood weighting over every variable of a discrete network.
pub struct FullLw<'n> {
    net: &'n Network,
    order: Vec<VarId>,
    query: Vec<(VarId, usize)>,
    evidence: Vec<Option<usize>>,
    values: Vec<usize>,
    parent_buf: Vec<usize>,
}

impl<'n> FullLw<'n> {
    pub fn new(net: &'n Network, query: &AssignmentMap, evidence: &AssignmentMap) -> Result<Self, EngineError> {
        let order = net.dag().topological_order()?;
        let index = |pairs: Vec<(VarId, Value)>| pairs.into_iter().map(|(v, x)| (v, x.as_index().expect("discrete"))).collect::<Vec<_>>();
        let query = index(net.resolve(query)?);
        let mut ev = vec![None; net.len()];
        for (v, x) in index(net.resolve(evidence)?) {
            ev[v.index()] = Some(x);
        }
        for &(q, _) in &query {
            if ev[q.index()].is_some() {
                return Err(EngineError::QueryObserved(net.variable(q).name.clone()));
            }
        }
        Ok(FullLw { net, order, query, evidence: ev, values: vec![0; net.len()], parent_buf: Vec::new() })
    }

    /// One weighted sample: (indicator, weight).
    pub fn sample<R: Rng>(&mut self, rng: &mut R) -> (bool, f64) {
        let mut weight = 1.0;
        for &v in &self.order {
            self.parent_buf.clear();
            self.parent_buf.extend(self.net.parents(v).iter().map(|p| self.values[p.index()]));
            let row = self.net.cpd(v).row(&self.parent_buf);
            match self.evidence[v.index()] {
                Some(x) => {
                    self.values[v.index()] = x;
                    weight *= row[x];
                }
                None => {
                    let u: f64 = rng.gen();
                    let mut acc = 0.0;
                    let mut pick = row.len() - 1;
                    for (k, p) in row.iter().enumerate() {
                        acc += p;
                        if u < acc {
                            pick = k;
                            break;
                        }
                    }
                    self.values[v.index()] = pick;
                }
            }
        }
        let indicator = self.query.iter().all(|&(q, x)| self.values[q.index()] == x);
        (indicator, weight)
    }
}

/// One full-LW sample over `net`.
pub fn simulate_full_lw<R: Rng>(
    net: &Network,
    query: &AssignmentMap,
    evidence: &AssignmentMap,
    rng: &mut R,
) -> Result<(bool, f64), EngineError> {
    Ok(FullLw::new(net, query, evidence)?.sample(rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compile::{network_to_program, CompileMode, DEFAULT_TOLERANCE};
    use crate::model::Cpd;
    use crate::parser::{parse_assignment_list, parse_bif, parse_dcp};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const SUPPLEMENT: &str = include_str!("../models/supplement.dcp");
    const SUPPLEMENT_BIF: &str = include_str!("../models/supplement.bif");
    const EXAMPLE2: &str = include_str!("../models/example2.dcp");

    fn maps(q: &str, e: &str) -> (AssignmentMap, AssignmentMap) {
        (parse_assignment_list(q).unwrap(), parse_assignment_list(e).unwrap())
    }

    /// Feeds fixed values in order.
    struct Script(Vec<Value>, usize);

    impl Chooser for Script {
        fn choose(&mut self, _var: VarId, _dist: &Distribution) -> Result<Value, EngineError> {
            let v = self.0[self.1];
            self.1 += 1;
            Ok(v)
        }
    }

    fn names(p: &RuleProgram, vs: impl IntoIterator<Item = VarId>) -> Vec<String> {
        vs.into_iter().map(|v| p.variable(v).name.clone()).collect()
    }

    #[test]
    fn supplement_proof_skips_b_and_d() {
        let p = parse_dcp(SUPPLEMENT).unwrap();
        let (q, e) = maps("e=1", "");
        let mut sim = Simulator::from_maps(&p, &q, &e).unwrap().with_trace(true);
        // Sampling points in order: a (while proving c's first body), c, e.
        let mut script = Script(vec![Value::Discrete(1), Value::Discrete(1), Value::Discrete(1)], 0);
        let rec = sim.simulate(&mut script).unwrap().clone();
        assert!(rec.indicator);
        let assigned: Vec<(String, Value)> = rec.assignment.iter().map(|(v, x)| (p.variable(*v).name.clone(), *x)).collect();
        assert_eq!(
            assigned,
            [("a".to_string(), Value::Discrete(1)), ("c".to_string(), Value::Discrete(1)), ("e".to_string(), Value::Discrete(1))]
        );
        // Every choice was consumed and nothing else sampled: b and d stay unassigned.
        assert_eq!(script.1, 3);
        let e_entry = rec.trace.iter().find(|t| p.variable(t.var).name == "e").unwrap();
        assert_eq!(names(&p, e_entry.ppa.iter().map(|x| x.0)), ["c"]);
        let c_entry = rec.trace.iter().find(|t| p.variable(t.var).name == "c").unwrap();
        assert_eq!(names(&p, c_entry.ppa.iter().map(|x| x.0)), ["a"]);
    }

    #[test]
    fn observed_goal_reads_evidence() {
        let p = parse_dcp(SUPPLEMENT).unwrap();
        let (q, e) = maps("e=1", "d=1");
        let mut sim = Simulator::from_maps(&p, &q, &e).unwrap();
        let mut script = Script(vec![Value::Discrete(0), Value::Discrete(0), Value::Discrete(0), Value::Discrete(0)], 0);
        let rec = sim.simulate(&mut script).unwrap();
        // a=0, b=0, c=0 then e drawn from the c=0,d=1 rule; d is never sampled.
        assert!(rec.assignment.iter().all(|(v, _)| p.variable(*v).name != "d"));
        // d is predictive evidence: visited only.
        assert!(rec.residual.is_empty());
        assert!(rec.partial_weights.is_empty());
    }

    #[test]
    fn comparators_on_continuous_goals() {
        let p = parse_dcp(EXAMPLE2).unwrap();
        for (t, expect) in [(31.2, true), (29.0, false)] {
            let mut sim = Simulator::new(&p, parse_query(&p, "t>30").unwrap(), &[]).unwrap();
            let mut script = Script(vec![Value::Real(t)], 0);
            assert_eq!(sim.simulate(&mut script).unwrap().indicator, expect);
        }
        assert!(parse_query(&p, "t=30").is_err());
        assert!(parse_query(&p, "cool>0").is_err());
        let atoms = parse_query(&p, "t>=30, cool=1").unwrap();
        assert_eq!(atoms[0].cmp, Comparator::Ge);
        assert_eq!(atoms[1], Atom::eq(p.id("cool").unwrap(), 1));
    }

    #[test]
    fn example2_evidence_weight_is_exact_lookup() {
        let p = parse_dcp(EXAMPLE2).unwrap();
        let ev = p.resolve(&parse_assignment_list("broken=1").unwrap()).unwrap();
        let mut sim = Simulator::new(&p, parse_query(&p, "cool=1").unwrap(), &ev).unwrap();
        let mut rng = RngChooser(ChaCha8Rng::seed_from_u64(3));
        for _ in 0..200 {
            let rec = sim.simulate(&mut rng).unwrap();
            let t = rec.assignment.iter().find(|(v, _)| p.variable(*v).name == "t").unwrap().1;
            let Value::Real(t) = t else { panic!() };
            let cool = rec.assignment.iter().find(|(v, _)| p.variable(*v).name == "cool");
            let expected = if t > 30.0 {
                0.9
            } else if cool.unwrap().1 == Value::Discrete(0) {
                0.6
            } else {
                0.1
            };
            assert_eq!(rec.partial_weights, vec![(p.id("broken").unwrap(), expected)]);
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let p = parse_dcp(SUPPLEMENT).unwrap();
        let (q, e) = maps("a=1", "e=1");
        let run = |seed| {
            let mut sim = Simulator::from_maps(&p, &q, &e).unwrap().with_trace(true);
            let mut rng = RngChooser(ChaCha8Rng::seed_from_u64(seed));
            (0..50).map(|_| sim.simulate(&mut rng).unwrap().clone()).collect::<Vec<_>>()
        };
        assert_eq!(run(11), run(11));
        assert_ne!(run(11), run(12));
    }

    #[test]
    fn table_program_assigns_all_requisite() {
        let net = parse_bif(SUPPLEMENT_BIF).unwrap();
        let p = network_to_program(&net, CompileMode::Table, DEFAULT_TOLERANCE);
        let (q, e) = maps("a=1", "e=1");
        let mut sim = Simulator::from_maps(&p, &q, &e).unwrap();
        let part = sim.partition().clone();
        let mut expected: Vec<VarId> = part.query_vars();
        expected.extend(part.requisite_unobserved());
        expected.sort();
        let mut rng = RngChooser(ChaCha8Rng::seed_from_u64(5));
        for _ in 0..100 {
            let rec = sim.simulate(&mut rng).unwrap();
            let mut got: Vec<VarId> = rec.assignment.iter().map(|x| x.0).collect();
            got.sort();
            assert_eq!(got, expected);
            assert!(rec.residual.is_empty());
        }
    }

    #[test]
    fn replay_enumerates_every_branch() {
        let p = parse_dcp(SUPPLEMENT).unwrap();
        let (q, e) = maps("e=1", "");
        let mut sim = Simulator::from_maps(&p, &q, &e).unwrap();
        let mut chooser = ReplayChooser::new(p.variables().iter().map(|v| v.name.clone()).collect());
        let mut total = 0.0;
        let mut hits = 0.0;
        let mut branches = 0;
        loop {
            chooser.start();
            let rec = sim.simulate(&mut chooser).unwrap();
            total += chooser.probability;
            if rec.indicator {
                hits += chooser.probability;
            }
            branches += 1;
            if !chooser.advance() {
                break;
            }
        }
        assert!((total - 1.0).abs() < 1e-12);
        assert!((hits - 0.74154).abs() < 1e-12, "{hits}");
        assert!(branches < 32);
    }

    #[test]
    fn no_rule_fired_is_an_error() {
        // Build an invalid program directly, bypassing the parser's validation.
        use crate::model::{Rule, Variable};
        let vars = vec![Variable::binary("a"), Variable::binary("b")];
        let rules = vec![
            Rule { head: VarId(0), dist: Distribution::Bernoulli(0.5), body: vec![] },
            Rule { head: VarId(1), dist: Distribution::Bernoulli(0.5), body: vec![Atom::eq(VarId(0), 1)] },
        ];
        let p = RuleProgram::new(vars, rules).unwrap();
        let mut sim = Simulator::new(&p, vec![Atom::eq(VarId(1), 1)], &[]).unwrap();
        let mut script = Script(vec![Value::Discrete(0)], 0);
        assert_eq!(sim.simulate(&mut script).unwrap_err(), EngineError::NoRuleFired("b".into()));
    }

    #[test]
    fn full_lw_without_evidence_has_unit_weight() {
        let net = parse_bif(SUPPLEMENT_BIF).unwrap();
        let (q, e) = maps("e=1", "");
        let mut lw = FullLw::new(&net, &q, &e).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            assert_eq!(lw.sample(&mut rng).1, 1.0);
        }
    }

    #[test]
    fn proposal_factor_replays_from_trace() {
        // The probability of a run under the replay chooser equals the product
        // of P(u | ppa(u)) over sampled variables of its trace.
        let p = parse_dcp(SUPPLEMENT).unwrap();
        let (q, e) = maps("a=1", "e=1");
        let mut sim = Simulator::from_maps(&p, &q, &e).unwrap().with_trace(true);
        let mut chooser = ReplayChooser::new(Vec::new());
        loop {
            chooser.start();
            let rec = sim.simulate(&mut chooser).unwrap();
            let replay: f64 = rec
                .trace
                .iter()
                .filter(|t| t.kind == TraceKind::Sampled)
                .map(|t| {
                    assert!(p.rule(t.rule).fires(|v| t.ppa.iter().find(|x| x.0 == v).map(|x| x.1)));
                    p.rule(t.rule).dist.probability(t.value)
                })
                .product();
            assert_eq!(replay, chooser.probability);
            if !chooser.advance() {
                break;
            }
        }
    }

    #[test]
    fn firing_rules_are_constant_over_unassigned_parents() {
        // Lemma 3 on a compiled tree program: the table row is the same for
        // every completion of the parents missing from ppa.
        let net = parse_bif(SUPPLEMENT_BIF).unwrap();
        let p = network_to_program(&net, CompileMode::Tree, DEFAULT_TOLERANCE);
        for (qs, es) in [("e=1", ""), ("a=1", "e=1"), ("b=0", "e=0,d=1")] {
            let (q, e) = maps(qs, es);
            let mut sim = Simulator::from_maps(&p, &q, &e).unwrap().with_trace(true);
            let mut rng = RngChooser(ChaCha8Rng::seed_from_u64(9));
            for _ in 0..200 {
                let rec = sim.simulate(&mut rng).unwrap();
                for t in &rec.trace {
                    let Cpd::Table(table) = net.cpd(t.var) else { panic!() };
                    let parents = net.parents(t.var);
                    let dist = &p.rule(t.rule).dist;
                    for r in 0..table.rows.len() {
                        let pv = table.parent_values(r);
                        let consistent = t.ppa.iter().all(|(v, x)| {
                            let k = parents.iter().position(|pp| pp == v).unwrap();
                            Value::Discrete(pv[k]) == *x
                        });
                        if consistent {
                            let probs = dist.probabilities().unwrap();
                            for (a, b) in table.rows[r].iter().zip(&probs) {
                                assert!((a - b).abs() < 1e-12);
                            }
                        }
                    }
                }
            }
        }
    }
}
