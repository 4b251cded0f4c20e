//! Seeded generators of random rule programs and structured networks for
//! tests and benchmarks.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::compile::program_to_network;
use crate::model::{AssignmentMap, Atom, AtomValue, Comparator, Cpd, Distribution, Network, Rule, RuleProgram, TableCpd, VarId, VarKind, Variable};

#[derive(Debug, Clone, PartialEq)]
pub struct ProgramShape {
    pub n_vars: usize,
    pub max_parents: usize,
    /// Largest discrete domain; 2 gives binary variables only.
    pub max_card: usize,
    /// Allow gaussian variables with threshold guards.
    pub continuous: bool,
    /// Chance that a tree node becomes a leaf while parents remain.
    pub leaf_prob: f64,
}

impl Default for ProgramShape {
    fn default() -> Self {
        ProgramShape { n_vars: 8, max_parents: 3, max_card: 3, continuous: true, leaf_prob: 0.3 }
    }
}

impl ProgramShape {
    /// Binary variables only, for exact oracles.
    pub fn binary(n_vars: usize) -> Self {
        ProgramShape { n_vars, max_card: 2, continuous: false, ..ProgramShape::default() }
    }
}

const LABELS: [&str; 5] = ["lo", "mid", "hi", "top", "max"];

fn random_probs(rng: &mut impl Rng, k: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..k).map(|_| rng.gen_range(0.05..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let mut probs: Vec<f64> = raw.iter().map(|x| x / total).collect();
    let head: f64 = probs[..k - 1].iter().sum();
    probs[k - 1] = 1.0 - head;
    probs
}

fn random_dist(rng: &mut impl Rng, var: &Variable) -> Distribution {
    match &var.kind {
        VarKind::Continuous => Distribution::Gaussian { mean: rng.gen_range(-5.0..5.0), std_dev: rng.gen_range(0.5..3.0) },
        VarKind::Discrete(_) if var.is_binary01() => Distribution::Bernoulli(rng.gen_range(0.05..0.95)),
        VarKind::Discrete(d) => Distribution::Categorical(random_probs(rng, d.len())),
    }
}

/// Rules of a random decision tree over `parents` (consumed in order).
fn tree_rules(rng: &mut impl Rng, vars: &[Variable], head: VarId, parents: &[VarId], leaf_prob: f64, path: &mut Vec<Atom>, out: &mut Vec<Rule>) {
    if parents.is_empty() || (!path.is_empty() && rng.gen_bool(leaf_prob)) {
        out.push(Rule { head, dist: random_dist(rng, &vars[head.index()]), body: path.clone() });
        return;
    }
    let (p, rest) = (parents[0], &parents[1..]);
    match &vars[p.index()].kind {
        VarKind::Discrete(d) => {
            for k in 0..d.len() {
                path.push(Atom::eq(p, k));
                tree_rules(rng, vars, head, rest, leaf_prob, path, out);
                path.pop();
            }
        }
        VarKind::Continuous => {
            let t: f64 = rng.gen_range(-4.0..4.0);
            let (low, high) = if rng.gen_bool(0.5) { (Comparator::Lt, Comparator::Ge) } else { (Comparator::Le, Comparator::Gt) };
            for cmp in [low, high] {
                path.push(Atom { var: p, cmp, value: AtomValue::Threshold(t) });
                tree_rules(rng, vars, head, rest, leaf_prob, path, out);
                path.pop();
            }
        }
    }
}

/// A random exhaustive, mutually exclusive program. Variables `x0, x1, ...`
/// are in topological order; each head's rules come from a random tree over
/// a random subset of earlier variables.
pub fn random_program(seed: u64, shape: &ProgramShape) -> RuleProgram {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vars: Vec<Variable> = (0..shape.n_vars)
        .map(|i| {
            let name = format!("x{i}");
            if shape.continuous && rng.gen_bool(0.2) {
                return Variable::continuous(name);
            }
            let card = if shape.max_card <= 2 || rng.gen_bool(0.6) { 2 } else { rng.gen_range(3..=shape.max_card.min(LABELS.len())) };
            if card == 2 {
                Variable::binary(name)
            } else {
                Variable::discrete(name, LABELS[..card].iter().map(|s| s.to_string()).collect())
            }
        })
        .collect();
    let mut rules = Vec::new();
    for i in 0..shape.n_vars {
        let mut earlier: Vec<VarId> = (0..i).map(VarId).collect();
        earlier.shuffle(&mut rng);
        let k = rng.gen_range(0..=shape.max_parents.min(i));
        tree_rules(&mut rng, &vars, VarId(i), &earlier[..k], shape.leaf_prob, &mut Vec::new(), &mut rules);
    }
    RuleProgram::new(vars, rules).expect("generated programs are well formed")
}

/// A discrete network with tree-structured CPDs stored as tables.
pub fn random_network(seed: u64, shape: &ProgramShape) -> Network {
    let shape = ProgramShape { continuous: false, ..shape.clone() };
    program_to_network(&random_program(seed, &shape)).expect("discrete program")
}

/// A random query variable with one random value, and `n_evidence` other
/// variables observed at random values. Variables must be discrete.
pub fn random_query(rng: &mut impl Rng, vars: &[Variable], n_evidence: usize) -> (AssignmentMap, AssignmentMap) {
    let mut ids: Vec<usize> = (0..vars.len()).collect();
    ids.shuffle(rng);
    let mut pick = |i: usize| {
        let d = vars[i].domain().expect("discrete variable");
        (vars[i].name.clone(), d[rng.gen_range(0..d.len())].clone())
    };
    let query = AssignmentMap::from_iter([pick(ids[0])]);
    let evidence = ids[1..].iter().take(n_evidence).map(|&i| pick(i)).collect();
    (query, evidence)
}

pub const DEEP_LAYERS: usize = 5;
pub const DEEP_WIDTH: usize = 6;
/// Hidden variables whose last tree split is on a side root `s<k>`, which
/// carries the observed leaf child `e<k>`.
pub const DEEP_SIDE_CHILDREN: [(usize, usize); 6] = [(3, 0), (3, 1), (3, 2), (3, 3), (2, 1), (2, 4)];
pub const DEEP_SEED: u64 = 20;

/// The bundled deep structured network: `DEEP_LAYERS` layers of binary
/// `h<layer>_<i>`. Every non-root has four parents and a chain-shaped tree
/// CPD (five leaves over sixteen rows): `p0=0`, `p0=1,p1=0`,
/// `p0=p1=1,p2=0`, then a split on `p3`. Parents come from the previous
/// layer, except that the variables of [`DEEP_SIDE_CHILDREN`] take a side
/// root `s<k>` as `p3`; each side root has one observed child `e<k>`.
pub fn deep_network(seed: u64) -> Network {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let hidden = DEEP_LAYERS * DEEP_WIDTH;
    let sides = DEEP_SIDE_CHILDREN.len();
    let id = |layer: usize, i: usize| VarId(layer * DEEP_WIDTH + i);
    let side = |k: usize| VarId(hidden + k);
    let mut vars = Vec::new();
    let mut parents = Vec::new();
    let mut cpds = Vec::new();
    for layer in 0..DEEP_LAYERS {
        for i in 0..DEEP_WIDTH {
            vars.push(Variable::binary(format!("h{layer}_{i}")));
            if layer == 0 {
                parents.push(vec![]);
                cpds.push(prior(rng.gen_range(0.2..0.8)));
                continue;
            }
            let mut ps: Vec<VarId> = (0..4).map(|j| id(layer - 1, (i + j) % DEEP_WIDTH)).collect();
            ps.shuffle(&mut rng);
            if let Some(k) = DEEP_SIDE_CHILDREN.iter().position(|&c| c == (layer, i)) {
                ps[3] = side(k);
            }
            let leaves: Vec<Vec<f64>> = (0..5).map(|_| bernoulli_row(rng.gen_range(0.05..0.95))).collect();
            let rows = (0..16)
                .map(|r| {
                    let bit = |k: usize| (r >> (3 - k)) & 1;
                    let leaf = if bit(0) == 0 {
                        0
                    } else if bit(1) == 0 {
                        1
                    } else if bit(2) == 0 {
                        2
                    } else {
                        3 + bit(3)
                    };
                    leaves[leaf].clone()
                })
                .collect();
            parents.push(ps);
            cpds.push(Cpd::Table(TableCpd { parent_cards: vec![2; 4], rows }));
        }
    }
    for k in 0..sides {
        vars.push(Variable::binary(format!("s{k}")));
        parents.push(vec![]);
        cpds.push(prior(rng.gen_range(0.2..0.8)));
    }
    for k in 0..sides {
        vars.push(Variable::binary(format!("e{k}")));
        parents.push(vec![side(k)]);
        let rows = vec![bernoulli_row(rng.gen_range(0.05..0.2)), bernoulli_row(rng.gen_range(0.8..0.95))];
        cpds.push(Cpd::Table(TableCpd { parent_cards: vec![2], rows }));
    }
    Network::new(vars, parents, cpds).expect("deep network is well formed")
}

fn prior(p: f64) -> Cpd {
    Cpd::Table(TableCpd { parent_cards: vec![], rows: vec![bernoulli_row(p)] })
}

fn bernoulli_row(p: f64) -> Vec<f64> {
    vec![1.0 - p, p]
}

/// Query and evidence used with [`deep_network`].
pub fn deep_query() -> (AssignmentMap, AssignmentMap) {
    let query = AssignmentMap::from_iter([(format!("h{}_0", DEEP_LAYERS - 1), "1".to_string())]);
    let evidence = (0..DEEP_SIDE_CHILDREN.len()).map(|k| (format!("e{k}"), "1".to_string())).collect();
    (query, evidence)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compile::{collapsed_fraction, network_to_program, CompileMode, DEFAULT_TOLERANCE};
    use crate::parser::{format_real, parse_bif, serialize_bif};
    use crate::validate::validate_program;

    #[test]
    fn programs_are_deterministic_and_valid() {
        for seed in 0..50 {
            let p = random_program(seed, &ProgramShape::default());
            assert_eq!(p, random_program(seed, &ProgramShape::default()));
            assert!(validate_program(&p).is_valid(), "seed {seed}");
        }
    }

    #[test]
    fn binary_networks_have_binary_variables() {
        let net = random_network(3, &ProgramShape::binary(10));
        assert_eq!(net.len(), 10);
        assert!(net.variables().iter().all(|v| v.is_binary01()));
    }

    #[test]
    fn deep_network_shape() {
        let net = deep_network(DEEP_SEED);
        assert_eq!(net.len(), DEEP_LAYERS * DEEP_WIDTH + 2 * DEEP_SIDE_CHILDREN.len());
        assert!(collapsed_fraction(&net, DEFAULT_TOLERANCE) >= 0.6);
        let tree = network_to_program(&net, CompileMode::Tree, DEFAULT_TOLERANCE);
        let h = tree.id("h3_0").unwrap();
        assert_eq!(tree.rules_for(h).len(), 5);
    }

    #[test]
    fn bundled_deep_bif_is_in_sync() {
        let net = deep_network(DEEP_SEED);
        let bundled = include_str!("../models/deep.bif");
        assert_eq!(serialize_bif(&net, "deep"), bundled);
        let parsed = parse_bif(bundled).unwrap();
        for v in net.dag().ids() {
            let n = net.cpd(v).row_count();
            for r in 0..n {
                let a: Vec<String> = net.cpd(v).row(&table_values(&net, v, r)).iter().map(|x| format_real(*x)).collect();
                let b: Vec<String> = parsed.cpd(v).row(&table_values(&net, v, r)).iter().map(|x| format_real(*x)).collect();
                assert_eq!(a, b);
            }
        }
    }

    fn table_values(net: &Network, v: VarId, r: usize) -> Vec<usize> {
        match net.cpd(v) {
            Cpd::Table(t) => t.parent_values(r),
            Cpd::Tree(t) => t.to_table().parent_values(r),
        }
    }
}
