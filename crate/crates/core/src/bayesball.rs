//! Graph-level requisite analysis: the four Bayes-ball visit rules, the
//! basis of diagnostic evidence, and the safety check on contextual
//! assignments.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::model::{Dag, Value, VarId};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BayesBallError {
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),
    #[error("`{0}` is both queried and observed")]
    QueryObserved(String),
}

/// Class of a variable with respect to a (query, evidence) pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Requisite {
    Query,
    /// Unobserved and marked on top.
    Unobserved,
    /// Observed and marked on top.
    Diagnostic,
    /// Observed, visited, not marked on top.
    Predictive,
    NonRequisite,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RequisitePartition {
    classes: Vec<Requisite>,
    observed: Vec<bool>,
    pub top: Vec<bool>,
    pub bottom: Vec<bool>,
    pub visited: Vec<bool>,
}

impl RequisitePartition {
    pub fn class(&self, v: VarId) -> Requisite {
        self.classes[v.index()]
    }

    pub fn is_observed(&self, v: VarId) -> bool {
        self.observed[v.index()]
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    fn members(&self, class: Requisite) -> Vec<VarId> {
        (0..self.classes.len()).filter(|&i| self.classes[i] == class).map(VarId).collect()
    }

    pub fn query_vars(&self) -> Vec<VarId> {
        self.members(Requisite::Query)
    }

    pub fn requisite_unobserved(&self) -> Vec<VarId> {
        self.members(Requisite::Unobserved)
    }

    pub fn diagnostic_evidence(&self) -> Vec<VarId> {
        self.members(Requisite::Diagnostic)
    }

    pub fn predictive_evidence(&self) -> Vec<VarId> {
        self.members(Requisite::Predictive)
    }

    pub fn non_requisite(&self) -> Vec<VarId> {
        self.members(Requisite::NonRequisite)
    }

    /// Member of the requisite sub-network.
    pub fn is_requisite(&self, v: VarId) -> bool {
        self.class(v) != Requisite::NonRequisite
    }
}

/// Run Bayes-ball from `query` given `evidence` over `dag`.
///
/// Pending visits are processed last-in first-out. Parents are scheduled in
/// the DAG's parent order and children in name order, so the first parent
/// (child) is visited first.
pub fn classify_requisite(dag: &Dag, query: &[VarId], evidence: &[VarId]) -> Result<RequisitePartition, BayesBallError> {
    let n = dag.len();
    let mut observed = vec![false; n];
    for &e in evidence {
        observed[e.index()] = true;
    }
    for &q in query {
        if observed[q.index()] {
            return Err(BayesBallError::QueryObserved(dag.name(q).to_string()));
        }
    }
    let mut top = vec![false; n];
    let mut bottom = vec![false; n];
    let mut visited = vec![false; n];
    // (variable, visit comes from a child)
    let mut stack: Vec<(VarId, bool)> = query.iter().rev().map(|&q| (q, true)).collect();
    while let Some((j, from_child)) = stack.pop() {
        let i = j.index();
        visited[i] = true;
        if !observed[i] && from_child {
            if !top[i] {
                top[i] = true;
                stack.extend(dag.parents(j).iter().rev().map(|&p| (p, true)));
            }
            if !bottom[i] {
                bottom[i] = true;
                stack.extend(dag.children(j).iter().rev().map(|&c| (c, false)));
            }
        } else if !from_child {
            if observed[i] && !top[i] {
                top[i] = true;
                stack.extend(dag.parents(j).iter().rev().map(|&p| (p, true)));
            }
            if !observed[i] && !bottom[i] {
                bottom[i] = true;
                stack.extend(dag.children(j).iter().rev().map(|&c| (c, false)));
            }
        }
    }
    let mut classes = vec![Requisite::NonRequisite; n];
    for i in 0..n {
        classes[i] = match (observed[i], top[i], visited[i]) {
            (false, true, _) => Requisite::Unobserved,
            (true, true, _) => Requisite::Diagnostic,
            (true, false, true) => Requisite::Predictive,
            _ => Requisite::NonRequisite,
        };
    }
    for &q in query {
        classes[q.index()] = Requisite::Query;
    }
    Ok(RequisitePartition { classes, observed, top, bottom, visited })
}

/// [`classify_requisite`] over variable names.
pub fn classify_requisite_by_name(
    dag: &Dag,
    query: &[&str],
    evidence: &[&str],
) -> Result<RequisitePartition, BayesBallError> {
    let ids = |names: &[&str]| {
        names
            .iter()
            .map(|n| dag.id(n).ok_or_else(|| BayesBallError::UnknownVariable(n.to_string())))
            .collect::<Result<Vec<_>, _>>()
    };
    classify_requisite(dag, &ids(query)?, &ids(evidence)?)
}

/// Unobserved requisite ancestors of `subset` reachable by a directed trail
/// whose intermediate variables are all unobserved.
pub fn basis_of(partition: &RequisitePartition, dag: &Dag, subset: &[VarId]) -> BTreeSet<VarId> {
    let mut basis = BTreeSet::new();
    let mut stack: Vec<VarId> = subset.to_vec();
    while let Some(v) = stack.pop() {
        for &p in dag.parents(v) {
            if !partition.is_observed(p) && partition.is_requisite(p) && basis.insert(p) {
                stack.push(p);
            }
        }
    }
    basis
}

/// A partial assignment produced by one simulation, viewed against a
/// requisite partition.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextualAssignmentRecord {
    pub x: Vec<(VarId, Value)>,
    pub z_dagger: Vec<(VarId, Value)>,
    pub e_dagger: BTreeSet<VarId>,
    pub z_ddagger: BTreeSet<VarId>,
    pub e_ddagger: BTreeSet<VarId>,
    /// Partially assigned parents used for each assigned or weighted variable.
    pub ppa: Vec<(VarId, Vec<VarId>)>,
}

impl ContextualAssignmentRecord {
    /// Split `assigned` into query and non-query parts and derive the
    /// unassigned and residual sets from `partition`.
    pub fn new(
        partition: &RequisitePartition,
        assigned: &[(VarId, Value)],
        weighted: impl IntoIterator<Item = VarId>,
        ppa: Vec<(VarId, Vec<VarId>)>,
    ) -> Self {
        let (x, z_dagger): (Vec<_>, Vec<_>) =
            assigned.iter().copied().partition(|(v, _)| partition.class(*v) == Requisite::Query);
        let e_dagger: BTreeSet<VarId> = weighted.into_iter().collect();
        let assigned_ids: BTreeSet<VarId> = z_dagger.iter().map(|(v, _)| *v).collect();
        let z_ddagger = partition.requisite_unobserved().into_iter().filter(|v| !assigned_ids.contains(v)).collect();
        let e_ddagger = partition.diagnostic_evidence().into_iter().filter(|v| !e_dagger.contains(v)).collect();
        ContextualAssignmentRecord { x, z_dagger, e_dagger, z_ddagger, e_ddagger, ppa }
    }

    /// Lemma-2 inclusions: z† ⊆ Z★ and e† ⊆ E★. Returns the first offender.
    pub fn check_inclusions(&self, partition: &RequisitePartition) -> Result<(), VarId> {
        for &(v, _) in &self.z_dagger {
            if partition.class(v) != Requisite::Unobserved {
                return Err(v);
            }
        }
        for &v in &self.e_dagger {
            if partition.class(v) != Requisite::Diagnostic {
                return Err(v);
            }
        }
        Ok(())
    }
}

/// Safety: the basis of the residual evidence lies in Z‡. On failure, the
/// smallest basis variable outside Z‡ is returned.
pub fn is_safe(record: &ContextualAssignmentRecord, partition: &RequisitePartition, dag: &Dag) -> Result<(), VarId> {
    let residual: Vec<VarId> = record.e_ddagger.iter().copied().collect();
    match basis_of(partition, dag, &residual).into_iter().find(|s| !record.z_ddagger.contains(s)) {
        Some(w) => Err(w),
        None => Ok(()),
    }
}
