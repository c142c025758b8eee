use std::collections::HashMap;

use rustc_hash::{FxHashMap, FxHashSet};

use super::{BinaryOp, DiagramError, DiagramRef, DiagramStore, Result, Slot, VarId};
use crate::scalar::Scalar;

/// Size measures of one diagram.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Default)]
pub struct DiagramStats {
    /// Distinct reachable internal nodes.
    pub internal_nodes: usize,
    /// Distinct reachable terminals.
    pub leaves: usize,
    /// Leaves of the decision tree obtained by unfolding every shared
    /// subgraph, i.e. the number of root-to-terminal paths.
    pub equivalent_tree_leaves: u128,
}

impl<T: Scalar> DiagramStore<T> {
    /// Follow `assignment` from the root to a terminal.
    pub fn evaluate_with(&self, f: DiagramRef, mut assignment: impl FnMut(VarId) -> Option<bool>) -> Result<T> {
        let mut n = self.node_of(f)?;
        loop {
            match self.nodes[n as usize] {
                Slot::Leaf(v) => return Ok(v),
                Slot::Branch { level, hi, lo } => {
                    let var = VarId(level);
                    match assignment(var) {
                        Some(true) => n = hi,
                        Some(false) => n = lo,
                        None => return Err(DiagramError::MissingAssignment(self.var_name(var))),
                    }
                }
            }
        }
    }

    pub fn evaluate(&self, f: DiagramRef, assignment: &HashMap<VarId, bool>) -> Result<T> {
        self.evaluate_with(f, |v| assignment.get(&v).copied())
    }

    /// Evaluate with unprimed and primed values named by base name, e.g.
    /// `[("C", true), ("C'", false)]`.
    pub fn evaluate_named(&self, f: DiagramRef, assignment: &[(&str, bool)]) -> Result<T> {
        let mut map = HashMap::new();
        for &(name, value) in assignment {
            let (base, primed) = match name.strip_suffix('\'') {
                Some(b) => (b, true),
                None => (name, false),
            };
            let v = self.var(base)?;
            map.insert(if primed { v.to_primed() } else { v }, value);
        }
        self.evaluate(f, &map)
    }

    fn reachable(&self, root: u32) -> Vec<u32> {
        let mut seen = FxHashSet::default();
        let mut out = Vec::new();
        let mut stack = vec![root];
        while let Some(n) = stack.pop() {
            if !seen.insert(n) {
                continue;
            }
            out.push(n);
            if let Slot::Branch { hi, lo, .. } = self.nodes[n as usize] {
                stack.push(lo);
                stack.push(hi);
            }
        }
        out
    }

    pub fn stats(&self, f: DiagramRef) -> Result<DiagramStats> {
        let root = self.node_of(f)?;
        let mut stats = DiagramStats::default();
        for n in self.reachable(root) {
            match self.nodes[n as usize] {
                Slot::Leaf(_) => stats.leaves += 1,
                Slot::Branch { .. } => stats.internal_nodes += 1,
            }
        }
        let mut memo = FxHashMap::default();
        stats.equivalent_tree_leaves = self.path_count(root, &mut memo);
        Ok(stats)
    }

    fn path_count(&self, node: u32, memo: &mut FxHashMap<u32, u128>) -> u128 {
        if let Some(&c) = memo.get(&node) {
            return c;
        }
        let c = match self.nodes[node as usize] {
            Slot::Leaf(_) => 1,
            Slot::Branch { hi, lo, .. } => self.path_count(hi, memo).saturating_add(self.path_count(lo, memo)),
        };
        memo.insert(node, c);
        c
    }

    /// Variables tested anywhere in `f`, in ordering position.
    pub fn support(&self, f: DiagramRef) -> Result<Vec<VarId>> {
        let root = self.node_of(f)?;
        let mut vars: Vec<VarId> = self
            .reachable(root)
            .into_iter()
            .filter_map(|n| match self.nodes[n as usize] {
                Slot::Branch { level, .. } => Some(VarId(level)),
                Slot::Leaf(_) => None,
            })
            .collect();
        vars.sort_unstable();
        vars.dedup();
        Ok(vars)
    }

    /// Distinct terminal values reachable from `f`, in then-first
    /// depth-first order.
    pub fn terminal_values(&self, f: DiagramRef) -> Result<Vec<T>> {
        let root = self.node_of(f)?;
        Ok(self.reachable(root).into_iter().filter_map(|n| self.leaf_value(n)).collect())
    }

    /// Largest absolute terminal value.
    pub fn max_abs(&self, f: DiagramRef) -> Result<T> {
        Ok(self.terminal_values(f)?.into_iter().fold(T::zero(), |m, v| if v.abs() > m { v.abs() } else { m }))
    }

    /// `max_x |f(x) - g(x)|`.
    pub fn sup_norm_diff(&mut self, f: DiagramRef, g: DiagramRef) -> Result<T> {
        let d = self.apply(BinaryOp::Subtract, f, g)?;
        self.max_abs(d)
    }
}
