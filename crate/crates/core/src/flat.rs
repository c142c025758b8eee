//! Explicit-state value iteration, used as ground truth for the
//! diagram-based solver.
//!
//! State `s` assigns variable `spec.variables[i]` the value of bit `i`
//! of `s`.

use std::collections::HashMap;

use thiserror::Error;

use crate::diagram::{DiagramError, DiagramRef, DiagramStore, VarId};
use crate::mdp::MdpSpec;
use crate::scalar::Scalar;
use crate::solver::{stopping_threshold, tie_tolerance};

pub const DEFAULT_STATE_CAP: usize = 1 << 20;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum FlatError {
    #[error("{states} states exceed the cap of {cap}")]
    TooLarge { states: u128, cap: usize },
    #[error(transparent)]
    Diagram(#[from] DiagramError),
}

/// Outcome of one action from one state: variables whose next value is
/// certain are folded into `fixed`; the rest are listed with their
/// probability of becoming true.
#[derive(Clone, Copy, Debug)]
struct Row {
    fixed: u32,
    start: u32,
    len: u32,
}

#[derive(Clone, Debug)]
pub struct FlatMdp {
    pub num_vars: usize,
    pub discount: f64,
    pub reward: Vec<f64>,
    pub action_names: Vec<String>,
    rows: Vec<Vec<Row>>,
    uncertain: Vec<(u8, f64)>,
    position: HashMap<VarId, usize>,
}

impl FlatMdp {
    pub fn from_spec<T: Scalar>(store: &DiagramStore<T>, spec: &MdpSpec) -> Result<Self, FlatError> {
        Self::with_cap(store, spec, DEFAULT_STATE_CAP)
    }

    pub fn with_cap<T: Scalar>(store: &DiagramStore<T>, spec: &MdpSpec, cap: usize) -> Result<Self, FlatError> {
        let n = spec.variables.len();
        let states = 1u128 << n.min(127);
        if n > 31 || states > cap as u128 {
            return Err(FlatError::TooLarge { states, cap });
        }
        let states = states as usize;
        let position: HashMap<VarId, usize> = spec.variables.iter().enumerate().map(|(i, &v)| (v, i)).collect();
        let bit = |s: usize, v: VarId| position.get(&v).map(|&i| s >> i & 1 == 1);

        let reward = (0..states)
            .map(|s| Ok(store.evaluate_with(spec.reward, |v| bit(s, v))?.as_f64()))
            .collect::<Result<Vec<f64>, DiagramError>>()?;

        let mut rows = Vec::with_capacity(spec.actions.len());
        let mut uncertain = Vec::new();
        for action in &spec.actions {
            let mut per_state = Vec::with_capacity(states);
            for s in 0..states {
                let mut fixed = 0u32;
                let start = uncertain.len() as u32;
                for (i, &var) in spec.variables.iter().enumerate() {
                    let p = match action.cpts.get(&var) {
                        Some(&cpt) => store.evaluate_with(cpt, |v| bit(s, v))?.as_f64(),
                        None => (s >> i & 1) as f64,
                    };
                    if p == 1.0 {
                        fixed |= 1 << i;
                    } else if p != 0.0 {
                        uncertain.push((i as u8, p));
                    }
                }
                let len = uncertain.len() as u32 - start;
                per_state.push(Row { fixed, start, len });
            }
            rows.push(per_state);
        }
        Ok(FlatMdp {
            num_vars: n,
            discount: spec.discount,
            reward,
            action_names: spec.actions.iter().map(|a| a.name.clone()).collect(),
            rows,
            uncertain,
            position,
        })
    }

    pub fn num_states(&self) -> usize {
        1 << self.num_vars
    }

    /// Value of `var` in state `s`, or `None` for foreign variables.
    pub fn bit(&self, s: usize, var: VarId) -> Option<bool> {
        self.position.get(&var).map(|&i| s >> i & 1 == 1)
    }

    /// `Pr(t | s, a)` as the product of per-variable probabilities.
    pub fn transition_prob(&self, s: usize, action: usize, t: usize) -> f64 {
        let row = self.rows[action][s];
        let mut free = 0u32;
        let mut p = 1.0;
        for &(i, q) in self.row_vars(row) {
            free |= 1 << i;
            p *= if t >> i & 1 == 1 { q } else { 1.0 - q };
        }
        if (t as u32) & !free != row.fixed {
            return 0.0;
        }
        p
    }

    fn row_vars(&self, row: Row) -> &[(u8, f64)] {
        &self.uncertain[row.start as usize..(row.start + row.len) as usize]
    }

    /// Successors of `s` under `action` with nonzero probability.
    pub fn successors(&self, s: usize, action: usize) -> Vec<(usize, f64)> {
        let mut out = Vec::new();
        self.visit(s, action, |t, p| out.push((t, p)));
        out
    }

    fn visit(&self, s: usize, action: usize, mut f: impl FnMut(usize, f64)) {
        let row = self.rows[action][s];
        expand(self.row_vars(row), row.fixed as usize, 1.0, &mut f);
    }

    /// `R(s) + b * sum_t Pr(t | s, a) v(t)`.
    pub fn q_value(&self, v: &[f64], s: usize, action: usize) -> f64 {
        let mut expected = 0.0;
        self.visit(s, action, |t, p| expected += p * v[t]);
        self.reward[s] + self.discount * expected
    }

    /// One synchronous backup of every state.
    pub fn backup(&self, v: &[f64]) -> Vec<f64> {
        (0..self.num_states())
            .map(|s| (0..self.action_names.len()).map(|a| self.q_value(v, s, a)).fold(f64::NEG_INFINITY, f64::max))
            .collect()
    }

    /// Actions within the tie tolerance of the best backup at each state.
    pub fn greedy_actions(&self, v: &[f64]) -> Vec<Vec<usize>> {
        (0..self.num_states())
            .map(|s| {
                let q: Vec<f64> = (0..self.action_names.len()).map(|a| self.q_value(v, s, a)).collect();
                let m = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let tol = tie_tolerance(m);
                (0..q.len()).filter(|&a| q[a] >= m - tol).collect()
            })
            .collect()
    }

    /// `V^k` from `V^0 = R`, with no stopping test.
    pub fn run_iterations(&self, k: usize) -> Vec<f64> {
        let mut v = self.reward.clone();
        for _ in 0..k {
            v = self.backup(&v);
        }
        v
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FlatSolution {
    pub values: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub deltas: Vec<f64>,
    /// Greedy action indices per state.
    pub argmax: Vec<Vec<usize>>,
}

/// Value iteration with the same stopping rule as the diagram solver.
pub fn flat_value_iteration(flat: &FlatMdp, epsilon: f64, max_iterations: usize) -> FlatSolution {
    let threshold = stopping_threshold(epsilon, flat.discount);
    let mut v = flat.reward.clone();
    let mut deltas = Vec::new();
    let mut converged = false;
    for _ in 0..max_iterations {
        let next = flat.backup(&v);
        let delta = next.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        deltas.push(delta);
        v = next;
        if delta < threshold || (threshold == 0.0 && delta == 0.0) {
            converged = true;
            break;
        }
    }
    let argmax = flat.greedy_actions(&v);
    FlatSolution { values: v, iterations: deltas.len(), converged, deltas, argmax }
}

/// `max_s |v_diagram(s) - v_flat[s]|`.
pub fn compare<T: Scalar>(
    store: &DiagramStore<T>,
    flat: &FlatMdp,
    v_diagram: DiagramRef,
    v_flat: &[f64],
) -> Result<f64, DiagramError> {
    let mut worst: f64 = 0.0;
    for (s, &expected) in v_flat.iter().enumerate() {
        let got = store.evaluate_with(v_diagram, |v| flat.bit(s, v))?.as_f64();
        worst = worst.max((got - expected).abs());
    }
    Ok(worst)
}

/// Every completion of the uncertain variables, each with its probability.
fn expand(vars: &[(u8, f64)], t: usize, p: f64, f: &mut impl FnMut(usize, f64)) {
    match vars.split_first() {
        None => f(t, p),
        Some((&(i, q), rest)) => {
            expand(rest, t, p * (1.0 - q), f);
            expand(rest, t | 1 << i, p * q, f);
        }
    }
}
