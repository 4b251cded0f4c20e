//! Aggregation of weighted samples: the partial-weight matrix, fill-in of
//! missing residual weights, memoized residual expectations and the ratio
//! estimators.

use std::collections::HashMap;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::bayesball::RequisitePartition;
use crate::engine::{Chooser, EngineError, FullLw, RngChooser, SampleRecord, Simulator};
use crate::model::{AssignmentMap, Network, VarId};
use crate::numeric::{mix_seed, Sum};

/// Stream index of the fill-in rng derived from a run seed.
pub const FILL_STREAM: u64 = 1;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EstimateError {
    #[error("no effective samples: every sample has zero weight")]
    NoEffectiveSamples,
    #[error("no samples")]
    Empty,
    #[error(transparent)]
    Engine(#[from] EngineError),
}

/// Rows are samples, columns the diagnostic evidence in ascending id order.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    columns: Vec<VarId>,
    column_of: HashMap<VarId, usize>,
    n_rows: usize,
    cells: Vec<f64>,
    present: Vec<bool>,
    filled: Vec<bool>,
}

impl WeightMatrix {
    pub fn new(columns: Vec<VarId>, n_rows: usize) -> Self {
        let column_of = columns.iter().enumerate().map(|(k, v)| (*v, k)).collect();
        let size = columns.len() * n_rows;
        WeightMatrix { columns, column_of, n_rows, cells: vec![f64::NAN; size], present: vec![false; size], filled: vec![false; size] }
    }

    pub fn columns(&self) -> &[VarId] {
        &self.columns
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn column(&self, v: VarId) -> Option<usize> {
        self.column_of.get(&v).copied()
    }

    fn at(&self, row: usize, col: usize) -> usize {
        row * self.columns.len() + col
    }

    pub fn get(&self, row: usize, col: usize) -> Option<f64> {
        let i = self.at(row, col);
        self.present[i].then_some(self.cells[i])
    }

    pub fn set(&mut self, row: usize, col: usize, w: f64) {
        let i = self.at(row, col);
        self.cells[i] = w;
        self.present[i] = true;
    }

    pub fn is_filled(&self, row: usize, col: usize) -> bool {
        self.filled[self.at(row, col)]
    }

    pub fn missing_count(&self) -> usize {
        self.present.iter().filter(|p| !**p).count()
    }

    /// Missing columns of `row`, in column order.
    pub fn missing_in_row(&self, row: usize) -> Vec<usize> {
        (0..self.columns.len()).filter(|&c| !self.present[self.at(row, c)]).collect()
    }
}

pub fn build_weight_matrix(records: &[SampleRecord], partition: &RequisitePartition) -> WeightMatrix {
    let mut m = WeightMatrix::new(partition.diagnostic_evidence(), records.len());
    for (r, rec) in records.iter().enumerate() {
        for &(v, w) in &rec.partial_weights {
            let c = m.column(v).expect("weighted variables are diagnostic evidence");
            m.set(r, c, w);
        }
    }
    m
}

/// Fill every missing cell. Each row with missing cells gets one fresh
/// simulation state in which all its missing evidence is weighed; rows are
/// processed in order, so the chooser is consumed row-major.
pub fn fill_missing<C: Chooser>(matrix: &mut WeightMatrix, sim: &mut Simulator, chooser: &mut C) -> Result<(), EngineError> {
    let mut vars = Vec::new();
    let mut out = Vec::new();
    for r in 0..matrix.n_rows {
        let missing = matrix.missing_in_row(r);
        if missing.is_empty() {
            continue;
        }
        vars.clear();
        vars.extend(missing.iter().map(|&c| matrix.columns[c]));
        sim.fill_weights(&vars, chooser, &mut out)?;
        for (&c, &w) in missing.iter().zip(&out) {
            matrix.set(r, c, w);
            let i = matrix.at(r, c);
            matrix.filled[i] = true;
        }
    }
    Ok(())
}

/// Memo of residual expectations keyed by the sorted column subset.
pub type ResidualMemo = HashMap<Vec<VarId>, f64>;

/// Mean over all rows of the product of the weights in `subset`. The
/// empty subset gives 1. Requires a filled matrix.
pub fn residual_expectation(filled: &WeightMatrix, subset: &[VarId], memo: &mut ResidualMemo) -> f64 {
    if subset.is_empty() {
        return 1.0;
    }
    let mut key = subset.to_vec();
    key.sort();
    if let Some(&v) = memo.get(&key) {
        return v;
    }
    let cols: Vec<usize> = key.iter().map(|v| filled.column(*v).expect("subset of the columns")).collect();
    let mut acc = Sum::new();
    for r in 0..filled.n_rows {
        let mut prod = 1.0;
        for &c in &cols {
            prod *= filled.get(r, c).expect("matrix must be filled");
        }
        acc.add(prod);
    }
    let value = acc.value() / filled.n_rows as f64;
    memo.insert(key, value);
    value
}

#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub n_samples: usize,
    pub numerator: f64,
    pub denominator: f64,
    /// Effective sample size of the denominator weights, (Σw)²/Σw².
    pub ess: f64,
    pub per_sample_weights: Option<Vec<f64>>,
}

fn ratio(terms: impl Iterator<Item = (bool, f64)>, keep: bool) -> Result<Estimate, EstimateError> {
    let (mut num, mut den, mut sq) = (Sum::new(), Sum::new(), Sum::new());
    let mut n = 0;
    let mut kept = keep.then(Vec::new);
    for (f, w) in terms {
        n += 1;
        if f {
            num.add(w);
        }
        den.add(w);
        sq.add(w * w);
        if let Some(k) = kept.as_mut() {
            k.push(w);
        }
    }
    if n == 0 {
        return Err(EstimateError::Empty);
    }
    let (numerator, denominator) = (num.value(), den.value());
    if denominator <= 0.0 {
        return Err(EstimateError::NoEffectiveSamples);
    }
    Ok(Estimate {
        value: numerator / denominator,
        n_samples: n,
        numerator,
        denominator,
        ess: denominator * denominator / sq.value(),
        per_sample_weights: kept,
    })
}

/// Σ f·w / Σ w.
pub fn estimate_lw(samples: &[(bool, f64)]) -> Result<Estimate, EstimateError> {
    ratio(samples.iter().copied(), false)
}

/// Σ f·w†·R(e‡) / Σ w†·R(e‡), with R the residual expectation from the
/// filled matrix.
pub fn estimate_cslw(records: &[SampleRecord], filled: &WeightMatrix) -> Result<Estimate, EstimateError> {
    let mut memo = ResidualMemo::new();
    let terms: Vec<(bool, f64)> = records
        .iter()
        .map(|rec| (rec.indicator, rec.weight() * residual_expectation(filled, &rec.residual, &mut memo)))
        .collect();
    ratio(terms.into_iter(), false)
}

/// Outcome of one estimation run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub estimate: Estimate,
    /// Mean |e‡| per sample.
    pub n_residual_mean: f64,
    /// Mean |x ∪ z†| per sample.
    pub n_assigned_mean: f64,
    /// Wall time of sampling, fill-in and aggregation.
    pub elapsed: Duration,
}

/// Draw `n` records with the rng seeded by `seed`.
pub fn sample_records(sim: &mut Simulator, n: usize, seed: u64) -> Result<Vec<SampleRecord>, EngineError> {
    let mut chooser = RngChooser(ChaCha8Rng::seed_from_u64(seed));
    (0..n).map(|_| sim.simulate(&mut chooser).cloned()).collect()
}

/// CS-LW: `n` simulations, fill-in, then the residual-corrected ratio.
pub fn run_cslw(sim: &mut Simulator, n: usize, seed: u64) -> Result<RunSummary, EstimateError> {
    let start = Instant::now();
    let records = sample_records(sim, n, seed)?;
    let mut matrix = build_weight_matrix(&records, sim.partition());
    let mut fill = RngChooser(ChaCha8Rng::seed_from_u64(mix_seed(seed, FILL_STREAM)));
    fill_missing(&mut matrix, sim, &mut fill)?;
    let estimate = estimate_cslw(&records, &matrix)?;
    let elapsed = start.elapsed();
    Ok(summarize(estimate, &records, elapsed))
}

/// Requisite-only LW aggregation of the same simulations: Σ f·w† / Σ w†.
/// On table programs w† covers every diagnostic evidence variable.
pub fn run_requisite_lw(sim: &mut Simulator, n: usize, seed: u64) -> Result<RunSummary, EstimateError> {
    let start = Instant::now();
    let records = sample_records(sim, n, seed)?;
    let samples: Vec<(bool, f64)> = records.iter().map(|r| (r.indicator, r.weight())).collect();
    let estimate = estimate_lw(&samples)?;
    let elapsed = start.elapsed();
    Ok(summarize(estimate, &records, elapsed))
}

fn summarize(estimate: Estimate, records: &[SampleRecord], elapsed: Duration) -> RunSummary {
    let n = records.len().max(1) as f64;
    RunSummary {
        estimate,
        n_residual_mean: records.iter().map(|r| r.residual.len() as f64).sum::<f64>() / n,
        n_assigned_mean: records.iter().map(|r| r.assignment.len() as f64).sum::<f64>() / n,
        elapsed,
    }
}

/// Full LW over every network variable.
pub fn run_full_lw(net: &Network, query: &AssignmentMap, evidence: &AssignmentMap, n: usize, seed: u64) -> Result<RunSummary, EstimateError> {
    let start = Instant::now();
    let mut lw = FullLw::new(net, query, evidence)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples: Vec<(bool, f64)> = (0..n).map(|_| lw.sample(&mut rng)).collect();
    let estimate = estimate_lw(&samples)?;
    let unobserved = net.len() - evidence.len();
    Ok(RunSummary { estimate, n_residual_mean: 0.0, n_assigned_mean: unobserved as f64, elapsed: start.elapsed() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bayesball::classify_requisite;
    use crate::compile::{network_to_program, CompileMode, DEFAULT_TOLERANCE};
    use crate::model::{Dag, RuleProgram, Value};
    use crate::numeric::mean_std;
    use crate::oracle::enumerate_program;
    use crate::parser::{parse_assignment_list, parse_bif, parse_dcp};
    use statrs::distribution::{ContinuousCDF, Normal};

    const SUPPLEMENT: &str = include_str!("../models/supplement.dcp");
    const SUPPLEMENT_BIF: &str = include_str!("../models/supplement.bif");
    const EXAMPLE2: &str = include_str!("../models/example2.dcp");

    fn rec(weights: &[(usize, f64)], residual: &[usize]) -> SampleRecord {
        SampleRecord {
            indicator: true,
            partial_weights: weights.iter().map(|&(v, w)| (VarId(v), w)).collect(),
            residual: residual.iter().map(|&v| VarId(v)).collect(),
            ..Default::default()
        }
    }

    fn fgh_partition() -> RequisitePartition {
        // q -> F, q -> G, q -> H with all three observed.
        let names = ["q", "F", "G", "H"].map(String::from).to_vec();
        let dag = Dag::new(names, vec![vec![], vec![VarId(0)], vec![VarId(0)], vec![VarId(0)]]);
        classify_requisite(&dag, &[VarId(0)], &[VarId(1), VarId(2), VarId(3)]).unwrap()
    }

    #[test]
    fn weight_matrix_placement() {
        let p = fgh_partition();
        let records = [rec(&[(1, 0.3)], &[2, 3]), rec(&[(1, 0.5), (2, 0.2)], &[3])];
        let m = build_weight_matrix(&records, &p);
        assert_eq!(m.columns(), &[VarId(1), VarId(2), VarId(3)]);
        assert_eq!(m.n_rows(), 2);
        assert_eq!(m.missing_count(), 3);
        assert_eq!(m.get(1, 1), Some(0.2));
        assert_eq!(m.missing_in_row(0), vec![1, 2]);
    }

    #[test]
    fn residual_expectations() {
        let p = fgh_partition();
        let records: Vec<SampleRecord> = (0..4).map(|_| rec(&[(1, 0.9), (2, 0.5), (3, 0.25)], &[])).collect();
        let m = build_weight_matrix(&records, &p);
        let mut memo = ResidualMemo::new();
        assert_eq!(residual_expectation(&m, &[], &mut memo), 1.0);
        assert_eq!(residual_expectation(&m, &[VarId(1)], &mut memo), 0.9);
        let a = residual_expectation(&m, &[VarId(3), VarId(2)], &mut memo);
        assert_eq!(a, 0.125);
        assert_eq!(memo.len(), 2);
        // A memo hit equals a fresh computation.
        let fresh = residual_expectation(&m, &[VarId(2), VarId(3)], &mut ResidualMemo::new());
        assert_eq!(a.to_bits(), fresh.to_bits());
    }

    #[test]
    fn lw_ratios() {
        let e = estimate_lw(&[(true, 1.0), (false, 1.0), (true, 1.0), (true, 1.0)]).unwrap();
        assert_eq!(e.value, 0.75);
        assert_eq!(estimate_lw(&[(true, 0.3)]).unwrap().value, 1.0);
        assert_eq!(estimate_lw(&[(true, 0.0)]), Err(EstimateError::NoEffectiveSamples));
        assert_eq!(estimate_lw(&[]), Err(EstimateError::Empty));
    }

    #[test]
    fn no_evidence_degenerates_to_monte_carlo() {
        let p = parse_dcp(SUPPLEMENT).unwrap();
        let q = parse_assignment_list("e=1").unwrap();
        let mut sim = Simulator::from_maps(&p, &q, &AssignmentMap::new()).unwrap();
        let records = sample_records(&mut sim, 1000, 4).unwrap();
        let m = build_weight_matrix(&records, sim.partition());
        assert!(m.columns().is_empty());
        let e = estimate_cslw(&records, &m).unwrap();
        let hits = records.iter().filter(|r| r.indicator).count();
        assert_eq!(e.value, hits as f64 / 1000.0);
    }

    #[test]
    fn untouched_rows_survive_fill() {
        let p = parse_dcp(SUPPLEMENT).unwrap();
        let q = parse_assignment_list("a=1").unwrap();
        let e = parse_assignment_list("e=1").unwrap();
        let mut sim = Simulator::from_maps(&p, &q, &e).unwrap();
        let records = sample_records(&mut sim, 200, 8).unwrap();
        let mut m = build_weight_matrix(&records, sim.partition());
        assert_eq!(m.columns().len(), 1);
        let before = m.clone();
        fill_missing(&mut m, &mut sim, &mut RngChooser(ChaCha8Rng::seed_from_u64(2))).unwrap();
        assert_eq!(m.missing_count(), 0);
        for r in 0..m.n_rows() {
            if let Some(w) = before.get(r, 0) {
                assert_eq!(m.get(r, 0), Some(w));
                assert!(!m.is_filled(r, 0));
            }
        }
    }

    #[test]
    fn filled_residual_mean_matches_marginal() {
        // Fill-ins of a fresh matrix are draws of P(e=1 | c, d) with c, d sampled.
        let p = parse_dcp(SUPPLEMENT).unwrap();
        let q = parse_assignment_list("d=1").unwrap();
        let e = parse_assignment_list("e=1").unwrap();
        let mut sim = Simulator::from_maps(&p, &q, &e).unwrap();
        let n = 100_000;
        let mut m = WeightMatrix::new(sim.partition().diagnostic_evidence(), n);
        fill_missing(&mut m, &mut sim, &mut RngChooser(ChaCha8Rng::seed_from_u64(21))).unwrap();
        let col: Vec<f64> = (0..n).map(|r| m.get(r, 0).unwrap()).collect();
        let (mean, std) = mean_std(&col);
        let p_e = enumerate_program(&p, &parse_assignment_list("e=1").unwrap(), &AssignmentMap::new()).unwrap();
        assert!((mean - p_e).abs() < 3.0 * std / (n as f64).sqrt(), "{mean} vs {p_e}");
    }

    fn z_test(values: &[f64], exact: f64) -> bool {
        let (mean, std) = mean_std(values);
        (mean - exact).abs() <= 4.0 * std / (values.len() as f64).sqrt() + 1e-12
    }

    #[test]
    fn consistency_of_both_estimators() {
        let p = parse_dcp(SUPPLEMENT).unwrap();
        let net = parse_bif(SUPPLEMENT_BIF).unwrap();
        let table = network_to_program(&net, CompileMode::Table, DEFAULT_TOLERANCE);
        for (qs, es) in [("e=1", ""), ("a=1", "e=1"), ("b=1", "e=0,d=1")] {
            let q = parse_assignment_list(qs).unwrap();
            let e = parse_assignment_list(es).unwrap();
            let exact = enumerate_program(&p, &q, &e).unwrap();
            let cslw: Vec<f64> = (0..30)
                .map(|s| run_cslw(&mut Simulator::from_maps(&p, &q, &e).unwrap(), 10_000, s).unwrap().estimate.value)
                .collect();
            let lw: Vec<f64> = (0..30)
                .map(|s| run_requisite_lw(&mut Simulator::from_maps(&table, &q, &e).unwrap(), 10_000, s).unwrap().estimate.value)
                .collect();
            assert!(z_test(&cslw, exact), "cslw {qs}|{es}: {:?} vs {exact}", mean_std(&cslw));
            assert!(z_test(&lw, exact), "lw {qs}|{es}: {:?} vs {exact}", mean_std(&lw));
        }
    }

    #[test]
    fn table_programs_give_identical_estimates() {
        let net = parse_bif(SUPPLEMENT_BIF).unwrap();
        let table = network_to_program(&net, CompileMode::Table, DEFAULT_TOLERANCE);
        let q = parse_assignment_list("a=1").unwrap();
        let e = parse_assignment_list("e=1,b=0").unwrap();
        for seed in 0..5 {
            let a = run_cslw(&mut Simulator::from_maps(&table, &q, &e).unwrap(), 2000, seed).unwrap();
            let b = run_requisite_lw(&mut Simulator::from_maps(&table, &q, &e).unwrap(), 2000, seed).unwrap();
            assert_eq!(a.estimate.value.to_bits(), b.estimate.value.to_bits());
            assert_eq!(a.n_residual_mean, 0.0);
        }
    }

    #[test]
    fn requisite_lw_has_no_more_variance_than_full_lw() {
        // Evidence on d and on an unrelated chain is non-requisite for a=1.
        let text = "\
variable a { type discrete [ 2 ] { 0, 1 }; }
variable b { type discrete [ 2 ] { 0, 1 }; }
variable u { type discrete [ 2 ] { 0, 1 }; }
variable v { type discrete [ 2 ] { 0, 1 }; }
probability ( a ) { table 0.6, 0.4; }
probability ( b | a ) { (0) 0.7, 0.3; (1) 0.2, 0.8; }
probability ( u ) { table 0.5, 0.5; }
probability ( v | u ) { (0) 0.9, 0.1; (1) 0.05, 0.95; }
";
        let net = parse_bif(text).unwrap();
        let table = network_to_program(&net, CompileMode::Table, DEFAULT_TOLERANCE);
        let q = parse_assignment_list("a=1").unwrap();
        let e = parse_assignment_list("b=1,v=1").unwrap();
        let full: Vec<f64> = (0..30).map(|s| run_full_lw(&net, &q, &e, 1000, s).unwrap().estimate.value).collect();
        let req: Vec<f64> = (0..30)
            .map(|s| run_requisite_lw(&mut Simulator::from_maps(&table, &q, &e).unwrap(), 1000, s).unwrap().estimate.value)
            .collect();
        let (_, sf) = mean_std(&full);
        let (_, sr) = mean_std(&req);
        assert!(sr * sr <= 1.1 * sf * sf, "{sr} vs {sf}");
    }

    #[test]
    fn continuous_example_matches_analytic_values() {
        let p: RuleProgram = parse_dcp(EXAMPLE2).unwrap();
        let hot = 1.0 - Normal::new(25.0, 2.2).unwrap().cdf(30.0);
        let p_broken = |cool: f64| hot * 0.9 + (1.0 - hot) * (if cool == 1.0 { 0.1 } else { 0.6 });
        let joint_cool = 0.1 * p_broken(1.0);
        let marginal = joint_cool + 0.9 * p_broken(0.0);
        let cases = [("broken=1", "", marginal), ("cool=1", "broken=1", joint_cool / marginal)];
        for (qs, es, exact) in cases {
            let q = parse_assignment_list(qs).unwrap();
            let e = parse_assignment_list(es).unwrap();
            let values: Vec<f64> = (0..30)
                .map(|s| run_cslw(&mut Simulator::from_maps(&p, &q, &e).unwrap(), 5000, s).unwrap().estimate.value)
                .collect();
            assert!(z_test(&values, exact), "{qs}|{es}: {:?} vs {exact}", mean_std(&values));
        }
        let _ = Value::Real(0.0);
    }
}
