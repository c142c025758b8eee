//! Structured value iteration over diagrams.
//!
//! Each iteration regresses the current value function through every
//! action's (possibly partitioned) complete action diagram, discounts,
//! adds the reward and maximizes over actions. Backups run in a private
//! store whose terminals use the scalar's wider accumulator type; each
//! new value function is rounded back once per iteration. The rounded
//! iterates therefore do not depend on how the action diagrams were
//! split into blocks.

use std::fmt;
use std::time::{Duration, Instant};

use rustc_hash::FxHashMap;
use thiserror::Error;

use crate::diagram::{BinaryOp, DiagramError, DiagramRef, DiagramStore, VarId};
use crate::mdp::{build_partitions, validate, ActionPartition, MdpSpec, ModelError, ValidationReport};
use crate::scalar::Scalar;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum SolveError {
    #[error(transparent)]
    Diagram(#[from] DiagramError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("invalid model:\n{0}")]
    Invalid(ValidationReport),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("value diagram to regress mentions current-state variable `{0}`")]
    UnprimedValue(String),
    #[error("value diagram to back up mentions post-action variable `{0}`")]
    PrimedValue(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolveConfig {
    /// Target precision; iteration stops below `epsilon (1 - b) / (2 b)`.
    pub epsilon: f64,
    /// Internal-node cap per action-diagram block; `None` is unbounded.
    pub node_limit: Option<usize>,
    pub max_iterations: usize,
}

impl Default for SolveConfig {
    fn default() -> Self {
        SolveConfig { epsilon: 0.01, node_limit: None, max_iterations: 100_000 }
    }
}

impl SolveConfig {
    fn check(&self) -> Result<(), SolveError> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(SolveError::Config(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if self.max_iterations == 0 {
            return Err(SolveError::Config("max_iterations must be at least 1".into()));
        }
        if self.node_limit == Some(0) {
            return Err(SolveError::Config("node limit must be at least 1".into()));
        }
        Ok(())
    }
}

/// Sup-norm change below which value iteration stops. Zero for `b = 0`,
/// where only an exact fixed point stops the loop.
pub fn stopping_threshold(epsilon: f64, discount: f64) -> f64 {
    if discount == 0.0 {
        0.0
    } else {
        epsilon * (1.0 - discount) / (2.0 * discount)
    }
}

/// Tolerance under which two action values count as tied.
pub fn tie_tolerance(max_value: f64) -> f64 {
    1e-9 * (1.0 + max_value.abs())
}

/// Size of one value iterate and its distance from the previous one.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IterationStats {
    pub internal_nodes: usize,
    pub leaves: usize,
    pub delta: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolveResult {
    /// Final iterate, in the caller's store.
    pub value: DiagramRef,
    /// Number of backups performed.
    pub iterations: usize,
    pub trace: Vec<IterationStats>,
    pub converged: bool,
    pub threshold: f64,
    pub elapsed: Duration,
}

/// Greedy policy: each terminal is an index into `actions`.
#[derive(Clone, Debug, PartialEq)]
pub struct Policy {
    pub diagram: DiagramRef,
    /// Interned optimal-action sets, each sorted by name and nonempty.
    pub actions: Vec<Vec<String>>,
}

impl Policy {
    /// Action set at the state described by `assignment`.
    pub fn lookup<T: Scalar>(
        &self,
        store: &DiagramStore<T>,
        assignment: impl FnMut(VarId) -> Option<bool>,
    ) -> Result<&[String], DiagramError> {
        let idx = store.evaluate_with(self.diagram, assignment)?.as_f64() as usize;
        Ok(&self.actions[idx])
    }

    /// Label for terminal `v`: the action names joined by commas.
    pub fn label(&self, v: f64) -> String {
        self.actions[v as usize].join(",")
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, set) in self.actions.iter().enumerate() {
            writeln!(f, "{i}: {}", set.join(","))?;
        }
        Ok(())
    }
}

/// Expected value of `v_primed` (over post-action variables) after the
/// action whose complete diagram is split into `partition`.
///
/// Blocks are taken deepest first. A block is multiplied in only when
/// the running diagram depends on one of its post-action variables,
/// and its post-action variables are summed out in the same pass; a
/// block the running diagram does not depend on sums to one and is
/// skipped.
pub fn regress<T: Scalar>(
    store: &mut DiagramStore<T>,
    v_primed: DiagramRef,
    partition: &ActionPartition,
) -> Result<DiagramRef, SolveError> {
    if let Some(v) = store.support(v_primed)?.into_iter().find(|v| !v.is_primed()) {
        return Err(SolveError::UnprimedValue(store.var_name(v)));
    }
    let mut acc = v_primed;
    for block in partition.blocks.iter().rev() {
        let support = store.support(acc)?;
        let primed: Vec<VarId> = block.vars.iter().map(|v| v.to_primed()).collect();
        if !primed.iter().any(|p| support.binary_search(p).is_ok()) {
            continue;
        }
        acc = store.multiply_sum_out(acc, block.diagram, &primed)?;
    }
    Ok(acc)
}

fn backup_with<T: Scalar>(
    store: &mut DiagramStore<T>,
    reward: DiagramRef,
    discount: T,
    partition: &ActionPartition,
    v: DiagramRef,
) -> Result<DiagramRef, SolveError> {
    let future = if discount == T::zero() {
        store.zero()
    } else {
        let primed = store.swap_primed(v)?;
        let expected = regress(store, primed, partition)?;
        store.scale(expected, discount)?
    };
    Ok(store.add(reward, future)?)
}

/// `R + b * E[v']` for one action.
pub fn bellman_backup<T: Scalar>(
    store: &mut DiagramStore<T>,
    mdp: &MdpSpec,
    partition: &ActionPartition,
    v: DiagramRef,
) -> Result<DiagramRef, SolveError> {
    if let Some(u) = store.support(v)?.into_iter().find(|u| u.is_primed()) {
        return Err(SolveError::PrimedValue(store.var_name(u)));
    }
    backup_with(store, mdp.reward, T::from_f64(mdp.discount), partition, v)
}

/// Solver state living in the wide-terminal store.
struct Workspace<A: Scalar> {
    store: DiagramStore<A>,
    /// Holds the surviving roots during a rollback.
    spare: DiagramStore<A>,
    /// Nodes below this index (reward and action diagrams) are never dropped.
    base: usize,
    reward: DiagramRef,
    discount: A,
    partitions: Vec<ActionPartition>,
    live_after_compaction: usize,
}

const MEMO_CAPACITY: usize = 1 << 22;
const COMPACTION_FLOOR: usize = 1 << 14;

impl<A: Scalar> Workspace<A> {
    fn new<T: Scalar>(
        store: &DiagramStore<T>,
        mdp: &MdpSpec,
        node_limit: Option<usize>,
        conv: impl FnMut(T) -> A,
    ) -> Result<Self, SolveError> {
        let mut ws = DiagramStore::<A>::with_variables_of(store);
        ws.set_memo_capacity(Some(MEMO_CAPACITY));
        let wide = mdp.transfer(store, &mut ws, conv)?;
        let partitions =
            wide.actions.iter().map(|a| build_partitions(&mut ws, a, node_limit)).collect::<Result<Vec<_>, _>>()?;
        let live = ws.node_count();
        Ok(Workspace {
            store: ws,
            spare: DiagramStore::new(),
            base: live,
            reward: wide.reward,
            discount: A::from_f64(mdp.discount),
            partitions,
            live_after_compaction: live,
        })
    }

    fn backups(&mut self, v: DiagramRef) -> Result<Vec<DiagramRef>, SolveError> {
        let mut out = Vec::with_capacity(self.partitions.len());
        for p in &self.partitions {
            out.push(backup_with(&mut self.store, self.reward, self.discount, p, v)?);
        }
        Ok(out)
    }

    /// Roll the store back to the setup diagrams once enough garbage has
    /// piled up, keeping `roots`.
    fn maybe_compact(&mut self, roots: &mut [DiagramRef]) -> Result<(), SolveError> {
        if self.store.node_count() <= self.live_after_compaction + COMPACTION_FLOOR {
            return Ok(());
        }
        let moved = self.store.rollback(self.base, roots, &mut self.spare)?;
        roots.copy_from_slice(&moved);
        self.live_after_compaction = self.store.node_count();
        Ok(())
    }
}

fn checked<T: Scalar>(store: &DiagramStore<T>, mdp: &MdpSpec, config: &SolveConfig) -> Result<(), SolveError> {
    config.check()?;
    let report = validate(store, mdp);
    if !report.is_valid() {
        return Err(SolveError::Invalid(report));
    }
    Ok(())
}

/// Value iteration from `V^0 = R` until the sup-norm change drops below
/// [`stopping_threshold`] or `max_iterations` backups were made.
pub fn value_iteration<T: Scalar>(
    store: &mut DiagramStore<T>,
    mdp: &MdpSpec,
    config: &SolveConfig,
) -> Result<SolveResult, SolveError> {
    value_iteration_observed(store, mdp, config, |_, _| {})
}

/// [`value_iteration`] calling `observe(iteration, stats)` after every
/// backup.
pub fn value_iteration_observed<T: Scalar>(
    store: &mut DiagramStore<T>,
    mdp: &MdpSpec,
    config: &SolveConfig,
    mut observe: impl FnMut(usize, &IterationStats),
) -> Result<SolveResult, SolveError> {
    checked(store, mdp, config)?;
    let start = Instant::now();
    let threshold = stopping_threshold(config.epsilon, mdp.discount);
    let mut ws = Workspace::<T::Accum>::new(store, mdp, config.node_limit, T::widen)?;
    let round = |x: T::Accum| T::narrow(x).widen();

    let mut v = ws.store.map_terminals(ws.reward, round)?;
    let mut trace = Vec::new();
    let mut converged = false;
    for i in 1..=config.max_iterations {
        let qs = ws.backups(v)?;
        let mut next = qs[0];
        for &q in &qs[1..] {
            next = ws.store.apply(BinaryOp::Max, next, q)?;
        }
        next = ws.store.map_terminals(next, round)?;
        let delta = T::narrow(ws.store.sup_norm_diff(next, v)?).as_f64();
        let size = ws.store.stats(next)?;
        let stats = IterationStats { internal_nodes: size.internal_nodes, leaves: size.leaves, delta };
        observe(i, &stats);
        trace.push(stats);
        v = next;
        if delta < threshold || (threshold == 0.0 && delta == 0.0) {
            converged = true;
            break;
        }
        let mut roots = [v];
        ws.maybe_compact(&mut roots)?;
        v = roots[0];
    }
    let value = ws.store.transfer(v, store, T::narrow)?;
    Ok(SolveResult { value, iterations: trace.len(), trace, converged, threshold, elapsed: start.elapsed() })
}

/// Greedy policy for `v`: one more backup per action, then every action
/// within [`tie_tolerance`] of the best is kept at each state.
pub fn extract_policy<T: Scalar>(
    store: &mut DiagramStore<T>,
    mdp: &MdpSpec,
    v: DiagramRef,
    config: &SolveConfig,
) -> Result<Policy, SolveError> {
    checked(store, mdp, config)?;
    let mut ws = Workspace::<T::Accum>::new(store, mdp, config.node_limit, T::widen)?;
    let v_wide = store.transfer(v, &mut ws.store, T::widen)?;
    let qs = ws.backups(v_wide)?;

    let mut interned: FxHashMap<Vec<usize>, usize> = FxHashMap::default();
    let mut sets: Vec<Vec<usize>> = Vec::new();
    let mut best = Vec::new();
    let provisional = ws.store.apply_nary(&qs, |vals| {
        let m = vals.iter().map(|x| x.as_f64()).fold(f64::NEG_INFINITY, f64::max);
        let tol = tie_tolerance(m);
        best.clear();
        best.extend(vals.iter().enumerate().filter(|(_, x)| x.as_f64() >= m - tol).map(|(i, _)| i));
        let next = sets.len();
        let idx = *interned.entry(best.clone()).or_insert(next);
        if idx == next {
            sets.push(best.clone());
        }
        <T::Accum as Scalar>::from_f64(idx as f64)
    })?;

    // renumber by first appearance so equal policies get equal tables
    let mut renumber: FxHashMap<usize, usize> = FxHashMap::default();
    let mut actions = Vec::new();
    for t in ws.store.terminal_values(provisional)? {
        let old = t.as_f64() as usize;
        renumber.insert(old, actions.len());
        let mut names: Vec<String> = sets[old].iter().map(|&a| mdp.actions[a].name.clone()).collect();
        names.sort();
        actions.push(names);
    }
    let diagram = ws.store.transfer(provisional, store, |t| T::from_f64(renumber[&(t.as_f64() as usize)] as f64))?;
    Ok(Policy { diagram, actions })
}

/// Per-action backups of `v` in the caller's store precision, rounded
/// the same way as inside [`value_iteration`].
pub fn action_values<T: Scalar>(
    store: &mut DiagramStore<T>,
    mdp: &MdpSpec,
    v: DiagramRef,
    config: &SolveConfig,
) -> Result<Vec<(String, DiagramRef)>, SolveError> {
    checked(store, mdp, config)?;
    let mut ws = Workspace::<T::Accum>::new(store, mdp, config.node_limit, T::widen)?;
    let v_wide = store.transfer(v, &mut ws.store, T::widen)?;
    let qs = ws.backups(v_wide)?;
    let mut out = Vec::with_capacity(qs.len());
    for (a, q) in mdp.actions.iter().zip(qs) {
        out.push((a.name.clone(), ws.store.transfer(q, store, T::narrow)?));
    }
    Ok(out)
}
