//! Structure extraction and rule compilation.
//!
//! [`table_to_tree`] fits a decision tree exactly to a tabular CPD, so rows
//! sharing a distribution collapse into one leaf. Trees and tables are then
//! turned into rules: one rule per root-to-leaf path, or one rule per table
//! row.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::model::{Atom, Cpd, Distribution, ModelError, Network, Rule, RuleProgram, TableCpd, VarId, Variable};

pub const DEFAULT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum CompileError {
    #[error("`{0}` is continuous; only discrete programs convert to networks")]
    Continuous(String),
    #[error("no rule of `{var}` fires under {assignment}")]
    NoRuleFires { var: String, assignment: String },
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CompileMode {
    /// One rule per tree path.
    Tree,
    /// One rule per table row.
    Table,
}

impl FromStr for CompileMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "tree" => Ok(CompileMode::Tree),
            "table" => Ok(CompileMode::Table),
            other => Err(format!("unknown mode `{other}` (expected tree or table)")),
        }
    }
}

impl fmt::Display for CompileMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CompileMode::Tree => "tree",
            CompileMode::Table => "table",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TreeNode {
    Leaf(Vec<f64>),
    /// `parent` is a position in the owner's parent list; one child per value.
    Split { parent: usize, children: Vec<TreeNode> },
}

/// A tree-structured CPD.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeCpd {
    owner: VarId,
    parents: Vec<VarId>,
    parent_cards: Vec<usize>,
    root: TreeNode,
}

impl TreeCpd {
    pub fn new(owner: VarId, parents: Vec<VarId>, parent_cards: Vec<usize>, root: TreeNode) -> Self {
        TreeCpd { owner, parents, parent_cards, root }
    }

    pub fn owner(&self) -> VarId {
        self.owner
    }

    pub fn parents(&self) -> &[VarId] {
        &self.parents
    }

    pub fn parent_cards(&self) -> &[usize] {
        &self.parent_cards
    }

    pub fn root(&self) -> &TreeNode {
        &self.root
    }

    /// Leaf distribution for a full parent assignment (parent-list order).
    pub fn evaluate(&self, parent_values: &[usize]) -> &[f64] {
        let mut node = &self.root;
        loop {
            match node {
                TreeNode::Leaf(row) => return row,
                TreeNode::Split { parent, children } => node = &children[parent_values[*parent]],
            }
        }
    }

    pub fn leaves(&self) -> Vec<&[f64]> {
        fn walk<'a>(n: &'a TreeNode, out: &mut Vec<&'a [f64]>) {
            match n {
                TreeNode::Leaf(r) => out.push(r),
                TreeNode::Split { children, .. } => children.iter().for_each(|c| walk(c, out)),
            }
        }
        let mut out = Vec::new();
        walk(&self.root, &mut out);
        out
    }

    pub fn leaf_count(&self) -> usize {
        self.leaves().len()
    }

    /// Expand back to a full table.
    pub fn to_table(&self) -> TableCpd {
        let mut table = TableCpd { parent_cards: self.parent_cards.clone(), rows: Vec::new() };
        let count: usize = self.parent_cards.iter().product();
        table.rows = (0..count).map(|r| self.evaluate(&table.parent_values(r)).to_vec()).collect();
        table
    }
}

fn constant_within(rows: &[usize], table: &TableCpd, tol: f64) -> bool {
    let Some(&first) = rows.first() else { return true };
    let width = table.rows[first].len();
    (0..width).all(|k| {
        let (lo, hi) = rows.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &r| {
            let x = table.rows[r][k];
            (lo.min(x), hi.max(x))
        });
        hi - lo <= tol
    })
}

/// Fit a tree that reproduces `table` within `tol` (L-infinity) on every
/// parent assignment.
///
/// A partition whose rows are pairwise equal within `tol` becomes a leaf
/// holding its first row. Otherwise the split maximises the number of
/// constant child partitions, ties going to the parent that sorts first by
/// name.
pub fn table_to_tree(net: &Network, head: VarId, table: &TableCpd, tol: f64) -> TreeCpd {
    let parents = net.parents(head).to_vec();
    let names: Vec<&str> = parents.iter().map(|&p| net.dag().name(p)).collect();
    let mut by_name: Vec<usize> = (0..parents.len()).collect();
    by_name.sort_by(|&a, &b| names[a].cmp(names[b]));
    let row_values: Vec<Vec<usize>> = (0..table.rows.len()).map(|r| table.parent_values(r)).collect();
    let all_rows: Vec<usize> = (0..table.rows.len()).collect();
    let mut free = vec![true; parents.len()];
    let root = grow(table, &row_values, &all_rows, &mut free, &by_name, tol);
    TreeCpd::new(head, parents, table.parent_cards.clone(), root)
}

fn grow(
    table: &TableCpd,
    row_values: &[Vec<usize>],
    rows: &[usize],
    free: &mut [bool],
    by_name: &[usize],
    tol: f64,
) -> TreeNode {
    if constant_within(rows, table, tol) {
        return TreeNode::Leaf(table.rows[rows[0]].clone());
    }
    let split_rows = |pos: usize| -> Vec<Vec<usize>> {
        let mut parts = vec![Vec::new(); table.parent_cards[pos]];
        for &r in rows {
            parts[row_values[r][pos]].push(r);
        }
        parts
    };
    let mut best: Option<(usize, usize, Vec<Vec<usize>>)> = None;
    for &pos in by_name.iter().filter(|&&p| free[p]) {
        let parts = split_rows(pos);
        let score = parts.iter().filter(|p| constant_within(p, table, tol)).count();
        if best.as_ref().is_none_or(|(s, _, _)| score > *s) {
            best = Some((score, pos, parts));
        }
    }
    let (_, pos, parts) = best.expect("a non-constant partition has a free parent");
    free[pos] = false;
    let children = parts.iter().map(|part| grow(table, row_values, part, free, by_name, tol)).collect();
    free[pos] = true;
    TreeNode::Split { parent: pos, children }
}

/// One rule per root-to-leaf path, children visited in value order.
pub fn tree_to_rules(net_vars: &[Variable], tree: &TreeCpd) -> Vec<Rule> {
    fn walk(node: &TreeNode, tree: &TreeCpd, head: &Variable, path: &mut Vec<Atom>, out: &mut Vec<Rule>) {
        match node {
            TreeNode::Leaf(row) => out.push(Rule {
                head: tree.owner,
                dist: Distribution::for_variable(head, row),
                body: path.clone(),
            }),
            TreeNode::Split { parent, children } => {
                for (value, child) in children.iter().enumerate() {
                    path.push(Atom::eq(tree.parents[*parent], value));
                    walk(child, tree, head, path, out);
                    path.pop();
                }
            }
        }
    }
    let mut out = Vec::new();
    walk(&tree.root, tree, &net_vars[tree.owner.index()], &mut Vec::new(), &mut out);
    out
}

/// One rule per table row; each body fixes every parent.
pub fn table_to_rules(net: &Network, head: VarId, table: &TableCpd) -> Vec<Rule> {
    let parents = net.parents(head);
    let var = net.variable(head);
    (0..table.rows.len())
        .map(|r| Rule {
            head,
            dist: Distribution::for_variable(var, &table.rows[r]),
            body: parents.iter().zip(table.parent_values(r)).map(|(&p, v)| Atom::eq(p, v)).collect(),
        })
        .collect()
}

/// Rules for one variable of `net`.
pub fn variable_rules(net: &Network, v: VarId, mode: CompileMode, tol: f64) -> Vec<Rule> {
    match (net.cpd(v), mode) {
        (Cpd::Table(t), CompileMode::Table) => table_to_rules(net, v, t),
        (Cpd::Table(t), CompileMode::Tree) => tree_to_rules(net.variables(), &table_to_tree(net, v, t, tol)),
        (Cpd::Tree(t), CompileMode::Tree) => tree_to_rules(net.variables(), t),
        (Cpd::Tree(t), CompileMode::Table) => table_to_rules(net, v, &t.to_table()),
    }
}

/// Concatenate per-variable rule sets into a program over the same
/// variables (and ids) as `net`.
pub fn network_to_program(net: &Network, mode: CompileMode, tol: f64) -> RuleProgram {
    let rules: Vec<Rule> = net.dag().ids().flat_map(|v| variable_rules(net, v, mode, tol)).collect();
    RuleProgram::new(net.variables().to_vec(), rules).expect("compiled rules are well formed")
}

/// Tabulate a discrete program: one table row per joint assignment of each
/// head's body variables, filled from the firing rule.
pub fn program_to_network(program: &RuleProgram) -> Result<Network, CompileError> {
    if let Some(v) = program.variables().iter().find(|v| !v.is_discrete()) {
        return Err(CompileError::Continuous(v.name.clone()));
    }
    let dag = program.dag();
    let mut parents = Vec::with_capacity(program.len());
    let mut cpds = Vec::with_capacity(program.len());
    let mut lookup = vec![None; program.len()];
    for v in dag.ids() {
        let ps = dag.parents(v).to_vec();
        let table_shape = TableCpd {
            parent_cards: ps.iter().map(|&p| program.variable(p).cardinality().expect("discrete")).collect(),
            rows: Vec::new(),
        };
        let count: usize = table_shape.parent_cards.iter().product();
        let mut rows = Vec::with_capacity(count);
        for r in 0..count {
            let values = table_shape.parent_values(r);
            for (&p, &x) in ps.iter().zip(&values) {
                lookup[p.index()] = Some(crate::model::Value::Discrete(x));
            }
            let rule = program.firing_rule(v, |u| lookup[u.index()]).ok_or_else(|| CompileError::NoRuleFires {
                var: program.variable(v).name.clone(),
                assignment: ps
                    .iter()
                    .zip(&values)
                    .map(|(&p, &x)| format!("{}={}", dag.name(p), program.variable(p).format_value(crate::model::Value::Discrete(x))))
                    .collect::<Vec<_>>()
                    .join(","),
            })?;
            rows.push(program.rule(rule).dist.probabilities().expect("discrete"));
        }
        for &p in &ps {
            lookup[p.index()] = None;
        }
        parents.push(ps);
        cpds.push(Cpd::Table(TableCpd { parent_cards: table_shape.parent_cards, rows }));
    }
    Ok(Network::new(program.variables().to_vec(), parents, cpds)?)
}

/// Rows of `net` that structure makes redundant: `1 - leaves / rows` over
/// all CPDs after tree extraction.
pub fn collapsed_fraction(net: &Network, tol: f64) -> f64 {
    let (mut rows, mut leaves) = (0usize, 0usize);
    for v in net.dag().ids() {
        rows += net.cpd(v).row_count();
        leaves += variable_rules(net, v, CompileMode::Tree, tol).len();
    }
    if rows == 0 {
        0.0
    } else {
        1.0 - leaves as f64 / rows as f64
    }
}
