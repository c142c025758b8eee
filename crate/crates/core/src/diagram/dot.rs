use std::fmt::Write;

use rustc_hash::FxHashMap;

use super::{DiagramRef, DiagramStore, Result, Slot, VarId};
use crate::scalar::Scalar;

fn quote(label: &str) -> String {
    let mut s = String::with_capacity(label.len() + 2);
    s.push('"');
    for c in label.chars() {
        if c == '"' || c == '\\' {
            s.push('\\');
        }
        s.push(c);
    }
    s.push('"');
    s
}

impl<T: Scalar> DiagramStore<T> {
    /// Graphviz rendering: solid edges for `then`, dashed for `else`,
    /// boxed terminals. Node names follow a then-first depth-first
    /// numbering, so equal diagrams render to identical bytes.
    pub fn to_dot(&self, f: DiagramRef) -> Result<String> {
        self.to_dot_with(f, |v| v.literal())
    }

    /// Like [`DiagramStore::to_dot`] with a custom terminal label.
    pub fn to_dot_with(&self, f: DiagramRef, mut label: impl FnMut(T) -> String) -> Result<String> {
        let root = self.node_of(f)?;
        let mut ids: FxHashMap<u32, usize> = FxHashMap::default();
        let mut order = Vec::new();
        let mut stack = vec![root];
        while let Some(n) = stack.pop() {
            if ids.contains_key(&n) {
                continue;
            }
            ids.insert(n, order.len());
            order.push(n);
            if let Slot::Branch { hi, lo, .. } = self.nodes[n as usize] {
                stack.push(lo);
                stack.push(hi);
            }
        }

        let mut out = String::from("digraph add {\n");
        for &n in &order {
            let id = ids[&n];
            match self.nodes[n as usize] {
                Slot::Leaf(v) => {
                    let _ = writeln!(out, "  n{id} [shape=box, label={}];", quote(&label(v)));
                }
                Slot::Branch { level, hi, lo } => {
                    let name = self.var_name(VarId(level));
                    let _ = writeln!(out, "  n{id} [shape=ellipse, label={}];", quote(&name));
                    let _ = writeln!(out, "  n{id} -> n{};", ids[&hi]);
                    let _ = writeln!(out, "  n{id} -> n{} [style=dashed];", ids[&lo]);
                }
            }
        }
        out.push_str("}\n");
        Ok(out)
    }
}
