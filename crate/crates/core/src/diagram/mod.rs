//! Reduced, ordered, hash-consed algebraic decision diagrams (ADDs).
//!
//! A [`DiagramStore`] owns every node. Nodes are never mutated after
//! creation and every node is built through the store's unique table, so
//! two [`DiagramRef`]s from the same store are equal exactly when they
//! denote the same function of the store's variables.
//!
//! Variables are declared by base name. Each declaration creates an
//! unprimed variable and its primed (post-action) counterpart, placed
//! adjacently in the global ordering: `x0 < x0' < x1 < x1' < ...`.

mod dot;
mod inspect;
mod ops;

use std::collections::{HashMap, VecDeque};
use std::fmt;
use std::sync::atomic::{AtomicU32, Ordering};

use rustc_hash::FxHashMap;
use thiserror::Error;

use crate::scalar::Scalar;

pub use inspect::DiagramStats;
pub use ops::BinaryOp;

static NEXT_STORE_ID: AtomicU32 = AtomicU32::new(1);

/// Level used for terminals: below every variable.
const TERMINAL_LEVEL: u32 = u32::MAX;

/// A boolean variable, identified by its position in the global ordering.
///
/// Position `2k` is the unprimed copy of base variable `k`, position
/// `2k + 1` its primed counterpart.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct VarId(u32);

impl VarId {
    pub fn from_level(level: u32) -> Self {
        VarId(level)
    }

    /// Unprimed variable for base index `k`.
    pub fn unprimed(base: usize) -> Self {
        VarId(2 * base as u32)
    }

    /// Primed variable for base index `k`.
    pub fn primed(base: usize) -> Self {
        VarId(2 * base as u32 + 1)
    }

    /// Position in the global ordering.
    pub fn level(self) -> u32 {
        self.0
    }

    pub fn index(self) -> u32 {
        self.0
    }

    pub fn is_primed(self) -> bool {
        self.0 & 1 == 1
    }

    /// Index of the base variable shared by both copies.
    pub fn base(self) -> usize {
        (self.0 >> 1) as usize
    }

    pub fn counterpart(self) -> Self {
        VarId(self.0 ^ 1)
    }

    pub fn to_primed(self) -> Self {
        VarId(self.0 | 1)
    }

    pub fn to_unprimed(self) -> Self {
        VarId(self.0 & !1)
    }
}

/// Handle to a canonical node inside one [`DiagramStore`].
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct DiagramRef {
    store: u32,
    node: u32,
}

impl DiagramRef {
    /// Identifier of the owning store.
    pub fn store_id(self) -> u32 {
        self.store
    }
}

/// Public view of a stored node.
#[derive(Clone, Copy, PartialEq, Debug)]
pub enum AddNode<T> {
    Terminal(T),
    Internal { var: VarId, then_child: DiagramRef, else_child: DiagramRef },
}

#[derive(Error, Debug, Clone, PartialEq)]
pub enum DiagramError {
    #[error("terminal value {0} is not finite")]
    NonFinite(f64),
    #[error("variable {var:?} does not precede the root of child at level {child_level}")]
    OrderViolation { var: VarId, child_level: u32 },
    #[error("diagram reference belongs to store {found}, expected store {expected}")]
    ForeignRef { expected: u32, found: u32 },
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),
    #[error("variable `{0}` is already declared")]
    DuplicateVariable(String),
    #[error("variable level {0} is not declared in this store")]
    UndeclaredLevel(u32),
    #[error("assignment does not cover variable {0}")]
    MissingAssignment(String),
    #[error("swapping primed and unprimed copies of `{0}` would violate the ordering")]
    SwapOrder(String),
}

pub type Result<T, E = DiagramError> = std::result::Result<T, E>;

#[derive(Clone, Copy, Debug)]
enum Slot<T> {
    Leaf(T),
    Branch { level: u32, hi: u32, lo: u32 },
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
enum OpTag {
    Apply(BinaryOp),
    Restrict { level: u32, value: bool },
    SumOut(u32),
    SumAll(u32),
    Swap,
}

type MemoKey = (OpTag, u32, u32);

/// Node-to-node table used when copying between stores.
trait NodeMap {
    fn lookup(&self, node: u32) -> Option<u32>;
    fn record(&mut self, node: u32, to: u32);
}

impl NodeMap for FxHashMap<u32, u32> {
    fn lookup(&self, node: u32) -> Option<u32> {
        self.get(&node).copied()
    }
    fn record(&mut self, node: u32, to: u32) {
        self.insert(node, to);
    }
}

/// Dense variant indexed by node, `u32::MAX` for unseen.
impl NodeMap for Vec<u32> {
    fn lookup(&self, node: u32) -> Option<u32> {
        Some(self[node as usize]).filter(|&m| m != u32::MAX)
    }
    fn record(&mut self, node: u32, to: u32) {
        self[node as usize] = to;
    }
}

#[derive(Default)]
struct Memo {
    map: FxHashMap<MemoKey, u32>,
    order: VecDeque<MemoKey>,
    cap: Option<usize>,
}

impl Memo {
    fn get(&self, key: &MemoKey) -> Option<u32> {
        self.map.get(key).copied()
    }

    fn insert(&mut self, key: MemoKey, value: u32) {
        match self.cap {
            None => {
                self.map.insert(key, value);
            }
            Some(cap) => {
                if self.map.insert(key, value).is_none() {
                    self.order.push_back(key);
                    while self.map.len() > cap {
                        match self.order.pop_front() {
                            Some(old) => {
                                self.map.remove(&old);
                            }
                            None => break,
                        }
                    }
                }
            }
        }
    }

    fn clear(&mut self) {
        self.map.clear();
        self.order.clear();
    }
}

/// Unique table, operation cache and variable registry.
pub struct DiagramStore<T: Scalar> {
    id: u32,
    nodes: Vec<Slot<T>>,
    branches: FxHashMap<(u32, u32, u32), u32>,
    leaves: FxHashMap<T::Bits, u32>,
    memo: Memo,
    sum_sets: FxHashMap<Vec<bool>, u32>,
    /// Scratch cache for one fused product-and-sum, kept for its capacity.
    pair_memo: FxHashMap<(u32, u32), ops::Partial<T>>,
    names: Vec<String>,
    by_name: HashMap<String, usize>,
}

impl<T: Scalar> Default for DiagramStore<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> fmt::Debug for DiagramStore<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DiagramStore")
            .field("id", &self.id)
            .field("nodes", &self.nodes.len())
            .field("variables", &self.names)
            .finish()
    }
}

impl<T: Scalar> DiagramStore<T> {
    pub fn new() -> Self {
        DiagramStore {
            id: NEXT_STORE_ID.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
            branches: FxHashMap::default(),
            leaves: FxHashMap::default(),
            memo: Memo::default(),
            sum_sets: FxHashMap::default(),
            pair_memo: FxHashMap::default(),
            names: Vec::new(),
            by_name: HashMap::new(),
        }
    }

    /// Empty store with the same variable registry as `other`.
    pub fn with_variables_of<U: Scalar>(other: &DiagramStore<U>) -> Self {
        let mut store = Self::new();
        for name in &other.names {
            store.declare_var(name).expect("source registry has unique names");
        }
        store
    }

    pub fn id(&self) -> u32 {
        self.id
    }

    /// Total number of nodes ever created in this store.
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Bound the operation cache; the oldest entries are evicted first.
    /// `None` (the default) keeps every entry.
    pub fn set_memo_capacity(&mut self, cap: Option<usize>) {
        self.memo.cap = cap;
        if let Some(cap) = cap {
            if self.memo.map.len() > cap {
                self.memo.clear();
            }
        } else {
            self.memo.order.clear();
        }
    }

    pub fn memo_len(&self) -> usize {
        self.memo.map.len()
    }

    pub fn clear_memo(&mut self) {
        self.memo.clear();
    }

    // ----- variables -------------------------------------------------

    /// Declare a base variable; returns its unprimed copy.
    pub fn declare_var(&mut self, name: &str) -> Result<VarId> {
        if self.by_name.contains_key(name) {
            return Err(DiagramError::DuplicateVariable(name.to_string()));
        }
        let base = self.names.len();
        self.names.push(name.to_string());
        self.by_name.insert(name.to_string(), base);
        Ok(VarId::unprimed(base))
    }

    /// Unprimed variable with the given base name.
    pub fn var(&self, name: &str) -> Result<VarId> {
        self.by_name
            .get(name)
            .map(|&b| VarId::unprimed(b))
            .ok_or_else(|| DiagramError::UnknownVariable(name.to_string()))
    }

    pub fn num_base_vars(&self) -> usize {
        self.names.len()
    }

    /// Unprimed variables in ordering position.
    pub fn base_vars(&self) -> impl Iterator<Item = VarId> + '_ {
        (0..self.names.len()).map(VarId::unprimed)
    }

    pub fn base_name(&self, var: VarId) -> &str {
        &self.names[var.base()]
    }

    /// Display name; primed variables carry a trailing `'`.
    pub fn var_name(&self, var: VarId) -> String {
        match self.names.get(var.base()) {
            Some(n) if var.is_primed() => format!("{n}'"),
            Some(n) => n.clone(),
            None => format!("?{}", var.level()),
        }
    }

    fn check_var(&self, var: VarId) -> Result<()> {
        if var.base() < self.names.len() {
            Ok(())
        } else {
            Err(DiagramError::UndeclaredLevel(var.level()))
        }
    }

    // ----- node plumbing ---------------------------------------------

    pub(crate) fn node_of(&self, f: DiagramRef) -> Result<u32> {
        if f.store == self.id {
            Ok(f.node)
        } else {
            Err(DiagramError::ForeignRef { expected: self.id, found: f.store })
        }
    }

    fn to_ref(&self, node: u32) -> DiagramRef {
        DiagramRef { store: self.id, node }
    }

    #[inline]
    fn level(&self, node: u32) -> u32 {
        match self.nodes[node as usize] {
            Slot::Leaf(_) => TERMINAL_LEVEL,
            Slot::Branch { level, .. } => level,
        }
    }

    #[inline]
    fn leaf_value(&self, node: u32) -> Option<T> {
        match self.nodes[node as usize] {
            Slot::Leaf(v) => Some(v),
            Slot::Branch { .. } => None,
        }
    }

    /// Whether `node` is the terminal whose value has bit pattern `bits`.
    /// Cheaper than comparing values for wide scalars.
    #[inline]
    fn leaf_is(&self, node: u32, bits: T::Bits) -> bool {
        matches!(self.nodes[node as usize], Slot::Leaf(v) if v.bits() == bits)
    }

    /// Cofactors of `node` with respect to `level`.
    #[inline]
    fn cofactors(&self, node: u32, level: u32) -> (u32, u32) {
        match self.nodes[node as usize] {
            Slot::Branch { level: l, hi, lo } if l == level => (hi, lo),
            _ => (node, node),
        }
    }

    fn leaf(&mut self, value: T) -> Result<u32> {
        if !value.finite() {
            return Err(DiagramError::NonFinite(value.as_f64()));
        }
        let key = value.bits();
        let value = if key == T::zero().bits() { T::zero() } else { value };
        if let Some(&n) = self.leaves.get(&key) {
            return Ok(n);
        }
        let n = self.nodes.len() as u32;
        self.nodes.push(Slot::Leaf(value));
        self.leaves.insert(key, n);
        Ok(n)
    }

    /// Reduction rules: redundant tests vanish, duplicates are shared.
    fn branch(&mut self, level: u32, hi: u32, lo: u32) -> u32 {
        if hi == lo {
            return hi;
        }
        debug_assert!(level < self.level(hi) && level < self.level(lo));
        let key = (level, hi, lo);
        if let Some(&n) = self.branches.get(&key) {
            return n;
        }
        let n = self.nodes.len() as u32;
        self.nodes.push(Slot::Branch { level, hi, lo });
        self.branches.insert(key, n);
        n
    }

    // ----- constructors ----------------------------------------------

    /// Canonical constant diagram.
    pub fn mk_terminal(&mut self, value: T) -> Result<DiagramRef> {
        let n = self.leaf(value)?;
        Ok(self.to_ref(n))
    }

    pub fn constant(&mut self, value: f64) -> Result<DiagramRef> {
        self.mk_terminal(T::from_f64(value))
    }

    pub fn zero(&mut self) -> DiagramRef {
        self.mk_terminal(T::zero()).expect("zero is finite")
    }

    pub fn one(&mut self) -> DiagramRef {
        self.mk_terminal(T::one()).expect("one is finite")
    }

    /// Node testing `var`; rejects children whose roots do not come
    /// strictly after `var` in the ordering.
    pub fn mk_internal(&mut self, var: VarId, then_child: DiagramRef, else_child: DiagramRef) -> Result<DiagramRef> {
        self.check_var(var)?;
        let hi = self.node_of(then_child)?;
        let lo = self.node_of(else_child)?;
        for child in [hi, lo] {
            let child_level = self.level(child);
            if child_level <= var.level() {
                return Err(DiagramError::OrderViolation { var, child_level });
            }
        }
        let n = self.branch(var.level(), hi, lo);
        Ok(self.to_ref(n))
    }

    /// `1` where `var` is true, `0` elsewhere.
    pub fn indicator(&mut self, var: VarId) -> Result<DiagramRef> {
        let one = self.one();
        let zero = self.zero();
        self.mk_internal(var, one, zero)
    }

    /// `var ? then_child : else_child` for children in any order
    /// relative to `var`.
    pub fn ite(&mut self, var: VarId, then_child: DiagramRef, else_child: DiagramRef) -> Result<DiagramRef> {
        self.check_var(var)?;
        let pos = self.indicator(var)?;
        let one = self.one();
        let neg = self.apply(BinaryOp::Subtract, one, pos)?;
        let t = self.apply(BinaryOp::Multiply, pos, then_child)?;
        let e = self.apply(BinaryOp::Multiply, neg, else_child)?;
        self.apply(BinaryOp::Add, t, e)
    }

    /// Public view of a node.
    pub fn node(&self, f: DiagramRef) -> Result<AddNode<T>> {
        let n = self.node_of(f)?;
        Ok(match self.nodes[n as usize] {
            Slot::Leaf(v) => AddNode::Terminal(v),
            Slot::Branch { level, hi, lo } => {
                AddNode::Internal { var: VarId(level), then_child: self.to_ref(hi), else_child: self.to_ref(lo) }
            }
        })
    }

    /// Terminal value if `f` is a constant diagram.
    pub fn constant_value(&self, f: DiagramRef) -> Result<Option<T>> {
        let n = self.node_of(f)?;
        Ok(self.leaf_value(n))
    }

    /// Copy `f` into `dst`, converting terminals with `conv`. `dst` must
    /// declare at least the variables that `f` mentions.
    pub fn transfer<U: Scalar>(
        &self,
        f: DiagramRef,
        dst: &mut DiagramStore<U>,
        mut conv: impl FnMut(T) -> U,
    ) -> Result<DiagramRef> {
        let root = self.node_of(f)?;
        let mut memo: FxHashMap<u32, u32> = FxHashMap::default();
        let n = self.transfer_rec(root, dst, &mut conv, &mut memo)?;
        Ok(dst.to_ref(n))
    }

    fn transfer_rec<U: Scalar>(
        &self,
        node: u32,
        dst: &mut DiagramStore<U>,
        conv: &mut impl FnMut(T) -> U,
        memo: &mut impl NodeMap,
    ) -> Result<u32> {
        if let Some(m) = memo.lookup(node) {
            return Ok(m);
        }
        let out = match self.nodes[node as usize] {
            Slot::Leaf(v) => dst.leaf(conv(v))?,
            Slot::Branch { level, hi, lo } => {
                dst.check_var(VarId(level))?;
                let h = self.transfer_rec(hi, dst, conv, memo)?;
                let l = self.transfer_rec(lo, dst, conv, memo)?;
                dst.branch(level, h, l)
            }
        };
        memo.record(node, out);
        Ok(out)
    }

    /// Fresh store holding only `roots`; returns it with the roots'
    /// new handles in the same order.
    pub fn compact(&self, roots: &[DiagramRef]) -> Result<(DiagramStore<T>, Vec<DiagramRef>)> {
        let mut fresh = DiagramStore::new();
        let out = self.compact_into(&mut fresh, roots)?;
        Ok((fresh, out))
    }

    /// [`compact`](Self::compact) into an existing store, keeping its
    /// allocations. `target` takes a new id, so handles it issued before
    /// no longer resolve.
    pub fn compact_into(&self, target: &mut DiagramStore<T>, roots: &[DiagramRef]) -> Result<Vec<DiagramRef>> {
        target.id = NEXT_STORE_ID.fetch_add(1, Ordering::Relaxed);
        target.nodes.clear();
        target.branches.clear();
        target.leaves.clear();
        target.memo.clear();
        target.memo.cap = self.memo.cap;
        target.sum_sets.clear();
        target.names.clone_from(&self.names);
        target.by_name.clone_from(&self.by_name);
        let mut dense = vec![u32::MAX; self.nodes.len()];
        let mut out = Vec::with_capacity(roots.len());
        for &r in roots {
            let n = self.node_of(r)?;
            let m = self.transfer_rec(n, target, &mut |v| v, &mut dense)?;
            out.push(target.to_ref(m));
        }
        Ok(out)
    }

    /// Drop every node created after the first `mark`, then rebuild
    /// `roots` on top; returns their new handles in order. Handles to
    /// dropped nodes must not be used again. `scratch` holds the roots
    /// in between.
    pub(crate) fn rollback(
        &mut self,
        mark: usize,
        roots: &[DiagramRef],
        scratch: &mut DiagramStore<T>,
    ) -> Result<Vec<DiagramRef>> {
        let saved = self.compact_into(scratch, roots)?;
        let keep = mark as u32;
        self.nodes.truncate(mark);
        self.branches.retain(|_, id| *id < keep);
        self.leaves.retain(|_, id| *id < keep);
        self.memo.clear();
        let mut dense = vec![u32::MAX; scratch.nodes.len()];
        saved
            .iter()
            .map(|&r| {
                let n = scratch.node_of(r)?;
                let m = scratch.transfer_rec(n, self, &mut |v| v, &mut dense)?;
                Ok(self.to_ref(m))
            })
            .collect()
    }

    /// Build the diagram of an explicit function over `vars` by Shannon
    /// expansion. `f` receives the values of `vars` in the given order.
    /// Exponential in `vars.len()`; meant for small tables.
    pub fn tabulate(&mut self, vars: &[VarId], mut f: impl FnMut(&[bool]) -> T) -> Result<DiagramRef> {
        for &v in vars {
            self.check_var(v)?;
        }
        let mut order: Vec<usize> = (0..vars.len()).collect();
        order.sort_by_key(|&i| vars[i].level());
        for w in order.windows(2) {
            if vars[w[0]] == vars[w[1]] {
                return Err(DiagramError::DuplicateVariable(self.var_name(vars[w[0]])));
            }
        }
        let mut bits = vec![false; vars.len()];
        let n = self.tabulate_rec(vars, &order, 0, &mut bits, &mut f)?;
        Ok(self.to_ref(n))
    }

    fn tabulate_rec(
        &mut self,
        vars: &[VarId],
        order: &[usize],
        depth: usize,
        bits: &mut [bool],
        f: &mut impl FnMut(&[bool]) -> T,
    ) -> Result<u32> {
        if depth == order.len() {
            return self.leaf(f(bits));
        }
        let slot = order[depth];
        bits[slot] = true;
        let hi = self.tabulate_rec(vars, order, depth + 1, bits, f)?;
        bits[slot] = false;
        let lo = self.tabulate_rec(vars, order, depth + 1, bits, f)?;
        Ok(self.branch(vars[slot].level(), hi, lo))
    }
}
