use rustc_hash::FxHashMap;

use super::{DiagramError, DiagramRef, DiagramStore, OpTag, Result, Slot, VarId};
use crate::scalar::Scalar;

/// Pointwise binary operators supported by [`DiagramStore::apply`].
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub enum BinaryOp {
    Add,
    Multiply,
    Max,
    Min,
    Subtract,
}

/// Result of a fused product-and-sum step: a plain value or a node.
#[derive(Clone, Copy, Debug)]
pub(super) enum Partial<T> {
    Value(T),
    Node(u32),
}

impl BinaryOp {
    fn commutative(self) -> bool {
        !matches!(self, BinaryOp::Subtract)
    }

    #[inline]
    pub fn eval<T: Scalar>(self, a: T, b: T) -> T {
        match self {
            BinaryOp::Add => a + b,
            BinaryOp::Multiply => a * b,
            BinaryOp::Max => {
                if a >= b {
                    a
                } else {
                    b
                }
            }
            BinaryOp::Min => {
                if a <= b {
                    a
                } else {
                    b
                }
            }
            BinaryOp::Subtract => a - b,
        }
    }
}

struct SumLevels {
    summed: Vec<bool>,
    rank: Vec<u32>,
    id: u32,
}

impl SumLevels {
    #[inline]
    fn rank(&self, level: u32) -> u32 {
        let last = self.rank.len() - 1;
        self.rank[(level as usize).min(last)]
    }
}

impl<T: Scalar> DiagramStore<T> {
    /// Reduced diagram of `op(f(x), g(x))`.
    pub fn apply(&mut self, op: BinaryOp, f: DiagramRef, g: DiagramRef) -> Result<DiagramRef> {
        let a = self.node_of(f)?;
        let b = self.node_of(g)?;
        let n = self.apply_rec(op, a, b)?;
        Ok(self.to_ref(n))
    }

    pub fn add(&mut self, f: DiagramRef, g: DiagramRef) -> Result<DiagramRef> {
        self.apply(BinaryOp::Add, f, g)
    }

    pub fn multiply(&mut self, f: DiagramRef, g: DiagramRef) -> Result<DiagramRef> {
        self.apply(BinaryOp::Multiply, f, g)
    }

    pub fn max(&mut self, f: DiagramRef, g: DiagramRef) -> Result<DiagramRef> {
        self.apply(BinaryOp::Max, f, g)
    }

    pub fn subtract(&mut self, f: DiagramRef, g: DiagramRef) -> Result<DiagramRef> {
        self.apply(BinaryOp::Subtract, f, g)
    }

    fn apply_rec(&mut self, op: BinaryOp, f: u32, g: u32) -> Result<u32> {
        let fv = self.leaf_value(f);
        let gv = self.leaf_value(g);
        if let (Some(a), Some(b)) = (fv, gv) {
            return self.leaf(op.eval(a, b));
        }
        // identities that avoid a traversal
        let zero = T::zero().bits();
        let one = T::one().bits();
        match op {
            BinaryOp::Add => {
                if self.leaf_is(f, zero) {
                    return Ok(g);
                }
                if self.leaf_is(g, zero) {
                    return Ok(f);
                }
            }
            BinaryOp::Multiply => {
                if self.leaf_is(f, one) || self.leaf_is(g, zero) {
                    return Ok(g);
                }
                if self.leaf_is(g, one) || self.leaf_is(f, zero) {
                    return Ok(f);
                }
            }
            BinaryOp::Max | BinaryOp::Min => {
                if f == g {
                    return Ok(f);
                }
            }
            BinaryOp::Subtract => {
                if f == g {
                    return self.leaf(T::zero());
                }
                if self.leaf_is(g, zero) {
                    return Ok(f);
                }
            }
        }

        let (a, b) = if op.commutative() && g < f { (g, f) } else { (f, g) };
        let key = (OpTag::Apply(op), a, b);
        if let Some(r) = self.memo.get(&key) {
            return Ok(r);
        }
        let level = self.level(a).min(self.level(b));
        let (at, ae) = self.cofactors(a, level);
        let (bt, be) = self.cofactors(b, level);
        let hi = self.apply_rec(op, at, bt)?;
        let lo = self.apply_rec(op, ae, be)?;
        let r = self.branch(level, hi, lo);
        self.memo.insert(key, r);
        Ok(r)
    }

    /// Pointwise `c * f`.
    pub fn scale(&mut self, f: DiagramRef, c: T) -> Result<DiagramRef> {
        let k = self.mk_terminal(c)?;
        self.apply(BinaryOp::Multiply, f, k)
    }

    /// Pointwise `1 - f`.
    pub fn complement_one(&mut self, f: DiagramRef) -> Result<DiagramRef> {
        let one = self.one();
        self.apply(BinaryOp::Subtract, one, f)
    }

    /// Cofactor of `f` with `var` fixed to `value`.
    pub fn restrict(&mut self, f: DiagramRef, var: VarId, value: bool) -> Result<DiagramRef> {
        let n = self.node_of(f)?;
        let r = self.restrict_rec(n, var.level(), value);
        Ok(self.to_ref(r))
    }

    fn restrict_rec(&mut self, node: u32, level: u32, value: bool) -> u32 {
        let (lv, hi, lo) = match self.nodes[node as usize] {
            Slot::Leaf(_) => return node,
            Slot::Branch { level, hi, lo } => (level, hi, lo),
        };
        if lv > level {
            return node;
        }
        if lv == level {
            return if value { hi } else { lo };
        }
        let key = (OpTag::Restrict { level, value }, node, 0);
        if let Some(r) = self.memo.get(&key) {
            return r;
        }
        let h = self.restrict_rec(hi, level, value);
        let l = self.restrict_rec(lo, level, value);
        let r = self.branch(lv, h, l);
        self.memo.insert(key, r);
        r
    }

    /// `f|var=1 + f|var=0`. A variable absent from `f` doubles it.
    pub fn sum_out(&mut self, f: DiagramRef, var: VarId) -> Result<DiagramRef> {
        self.check_var(var)?;
        let n = self.node_of(f)?;
        let r = self.sum_out_rec(n, var.level())?;
        Ok(self.to_ref(r))
    }

    fn sum_out_rec(&mut self, node: u32, level: u32) -> Result<u32> {
        let lv = self.level(node);
        if lv > level {
            return self.apply_rec(BinaryOp::Add, node, node);
        }
        let key = (OpTag::SumOut(level), node, 0);
        if let Some(r) = self.memo.get(&key) {
            return Ok(r);
        }
        let Slot::Branch { hi, lo, .. } = self.nodes[node as usize] else {
            unreachable!("terminals sit below every level");
        };
        let r = if lv == level {
            self.apply_rec(BinaryOp::Add, hi, lo)?
        } else {
            let h = self.sum_out_rec(hi, level)?;
            let l = self.sum_out_rec(lo, level)?;
            self.branch(lv, h, l)
        };
        self.memo.insert(key, r);
        Ok(r)
    }

    /// Sum out every variable in `vars`, deepest in the ordering first.
    pub fn sum_out_all(&mut self, f: DiagramRef, vars: &[VarId]) -> Result<DiagramRef> {
        let mut order: Vec<VarId> = vars.to_vec();
        order.sort_unstable_by(|a, b| b.cmp(a));
        order.dedup();
        let mut acc = f;
        for v in order {
            acc = self.sum_out(acc, v)?;
        }
        Ok(acc)
    }

    /// `sum_out_all(f * g, vars)` without building the product.
    pub fn multiply_sum_out(&mut self, f: DiagramRef, g: DiagramRef, vars: &[VarId]) -> Result<DiagramRef> {
        let a = self.node_of(f)?;
        let b = self.node_of(g)?;
        let levels = 2 * self.num_base_vars();
        let mut summed = vec![false; levels];
        for &v in vars {
            self.check_var(v)?;
            summed[v.level() as usize] = true;
        }
        // rank[l]: summed levels strictly above level l; the last entry
        // stands for the terminals
        let mut rank = Vec::with_capacity(levels + 1);
        let mut count = 0u32;
        for &s in &summed {
            rank.push(count);
            count += s as u32;
        }
        rank.push(count);
        let next = self.sum_sets.len() as u32;
        let id = *self.sum_sets.entry(summed.clone()).or_insert(next);
        let sums = SumLevels { summed, rank, id };
        let mut memo = std::mem::take(&mut self.pair_memo);
        memo.clear();
        let top = self.level(a).min(self.level(b));
        let r = self.mul_sum_rec(a, b, &sums, &mut memo);
        self.pair_memo = memo;
        let r = self.settle(r?)?;
        let r = self.double(r, sums.rank(top))?;
        Ok(self.to_ref(r))
    }

    /// `2^k * node`; exact in binary floating point.
    fn double(&mut self, node: u32, k: u32) -> Result<u32> {
        let mut r = node;
        for _ in 0..k {
            r = self.apply_rec(BinaryOp::Add, r, r)?;
        }
        Ok(r)
    }

    fn settle(&mut self, p: Partial<T>) -> Result<u32> {
        match p {
            Partial::Value(v) => self.leaf(v),
            Partial::Node(n) => Ok(n),
        }
    }

    fn partial(&self, node: u32) -> Partial<T> {
        match self.leaf_value(node) {
            Some(v) => Partial::Value(v),
            None => Partial::Node(node),
        }
    }

    /// Sum of `f * g` over the summed levels at or below the top of the
    /// pair. Constant results stay unboxed until a branch needs them.
    fn mul_sum_rec(
        &mut self,
        f: u32,
        g: u32,
        sums: &SumLevels,
        memo: &mut FxHashMap<(u32, u32), Partial<T>>,
    ) -> Result<Partial<T>> {
        let zero = T::zero().bits();
        if self.leaf_is(f, zero) || self.leaf_is(g, zero) {
            return Ok(Partial::Value(T::zero()));
        }
        let (f, g) = if g < f { (g, f) } else { (f, g) };
        let (fv, gv) = (self.leaf_value(f), self.leaf_value(g));
        match (fv, gv) {
            (Some(a), Some(b)) => return Ok(Partial::Value(BinaryOp::Multiply.eval(a, b))),
            // a constant factor comes out of the sum; the sum of the other
            // side is cached across calls
            (Some(_), None) | (None, Some(_)) => {
                let (c, h) = if fv.is_some() { (f, g) } else { (g, f) };
                let total = self.sum_all_rec(h, sums)?;
                return Ok(match (self.leaf_value(c), self.leaf_value(total)) {
                    (Some(a), Some(b)) => Partial::Value(BinaryOp::Multiply.eval(a, b)),
                    _ => Partial::Node(self.apply_rec(BinaryOp::Multiply, c, total)?),
                });
            }
            (None, None) => {}
        }
        if let Some(&r) = memo.get(&(f, g)) {
            return Ok(r);
        }
        let top = self.level(f).min(self.level(g));
        let (ft, fe) = self.cofactors(f, top);
        let (gt, ge) = self.cofactors(g, top);
        let mut halves = [Partial::Value(T::zero()); 2];
        for (slot, (x, y)) in halves.iter_mut().zip([(ft, gt), (fe, ge)]) {
            let below = self.level(x).min(self.level(y));
            let r = self.mul_sum_rec(x, y, sums, memo)?;
            // summed variables skipped between `top` and `below`
            let skipped = sums.rank(below) - sums.rank(top + 1);
            *slot = match r {
                Partial::Value(mut v) => {
                    for _ in 0..skipped {
                        v = BinaryOp::Add.eval(v, v);
                    }
                    Partial::Value(v)
                }
                Partial::Node(n) => {
                    let d = self.double(n, skipped)?;
                    self.partial(d)
                }
            };
        }
        let r = match (sums.summed[top as usize], halves) {
            (true, [Partial::Value(a), Partial::Value(b)]) => Partial::Value(BinaryOp::Add.eval(a, b)),
            (true, [a, b]) => {
                let (a, b) = (self.settle(a)?, self.settle(b)?);
                let r = self.apply_rec(BinaryOp::Add, a, b)?;
                self.partial(r)
            }
            (false, [a, b]) => {
                let (a, b) = (self.settle(a)?, self.settle(b)?);
                let r = self.branch(top, a, b);
                self.partial(r)
            }
        };
        memo.insert((f, g), r);
        Ok(r)
    }

    /// Sum of `f` over the summed levels at or below its top.
    fn sum_all_rec(&mut self, f: u32, sums: &SumLevels) -> Result<u32> {
        let (level, hi, lo) = match self.nodes[f as usize] {
            Slot::Leaf(_) => return Ok(f),
            Slot::Branch { level, hi, lo } => (level, hi, lo),
        };
        let key = (OpTag::SumAll(sums.id), f, 0);
        if let Some(r) = self.memo.get(&key) {
            return Ok(r);
        }
        let mut halves = [0u32; 2];
        for (slot, x) in halves.iter_mut().zip([hi, lo]) {
            let r = self.sum_all_rec(x, sums)?;
            let skipped = sums.rank(self.level(x)) - sums.rank(level + 1);
            *slot = self.double(r, skipped)?;
        }
        let r = if sums.summed[level as usize] {
            self.apply_rec(BinaryOp::Add, halves[0], halves[1])?
        } else {
            self.branch(level, halves[0], halves[1])
        };
        self.memo.insert(key, r);
        Ok(r)
    }

    /// Exchange every variable with its primed/unprimed counterpart.
    ///
    /// Under the interleaved ordering this keeps the graph shape; it is
    /// rejected when a path tests both copies of one variable.
    pub fn swap_primed(&mut self, f: DiagramRef) -> Result<DiagramRef> {
        let n = self.node_of(f)?;
        let r = self.swap_rec(n)?;
        Ok(self.to_ref(r))
    }

    fn swap_rec(&mut self, node: u32) -> Result<u32> {
        let (level, hi, lo) = match self.nodes[node as usize] {
            Slot::Leaf(_) => return Ok(node),
            Slot::Branch { level, hi, lo } => (level, hi, lo),
        };
        let key = (OpTag::Swap, node, 0);
        if let Some(r) = self.memo.get(&key) {
            return Ok(r);
        }
        let swapped = VarId(level).counterpart();
        self.check_var(swapped)?;
        let h = self.swap_rec(hi)?;
        let l = self.swap_rec(lo)?;
        if self.level(h) <= swapped.level() || self.level(l) <= swapped.level() {
            return Err(DiagramError::SwapOrder(self.base_name(swapped).to_string()));
        }
        let r = self.branch(swapped.level(), h, l);
        self.memo.insert(key, r);
        Ok(r)
    }

    /// Replace every terminal value `v` by `conv(v)`.
    pub fn map_terminals(&mut self, f: DiagramRef, mut conv: impl FnMut(T) -> T) -> Result<DiagramRef> {
        let n = self.node_of(f)?;
        let mut memo = FxHashMap::default();
        let r = self.map_rec(n, &mut conv, &mut memo)?;
        Ok(self.to_ref(r))
    }

    fn map_rec(&mut self, node: u32, conv: &mut impl FnMut(T) -> T, memo: &mut FxHashMap<u32, u32>) -> Result<u32> {
        if let Some(&r) = memo.get(&node) {
            return Ok(r);
        }
        let r = match self.nodes[node as usize] {
            Slot::Leaf(v) => self.leaf(conv(v))?,
            Slot::Branch { level, hi, lo } => {
                let h = self.map_rec(hi, conv, memo)?;
                let l = self.map_rec(lo, conv, memo)?;
                self.branch(level, h, l)
            }
        };
        memo.insert(node, r);
        Ok(r)
    }

    /// Pointwise combination of any number of diagrams. `combine`
    /// receives the operands' values in order. The cache is local to the
    /// call since `combine` is an arbitrary closure.
    pub fn apply_nary(&mut self, operands: &[DiagramRef], mut combine: impl FnMut(&[T]) -> T) -> Result<DiagramRef> {
        let nodes = operands.iter().map(|&f| self.node_of(f)).collect::<Result<Vec<u32>>>()?;
        let mut memo: FxHashMap<Vec<u32>, u32> = FxHashMap::default();
        let mut scratch = Vec::with_capacity(nodes.len());
        let r = self.nary_rec(nodes, &mut combine, &mut memo, &mut scratch)?;
        Ok(self.to_ref(r))
    }

    fn nary_rec(
        &mut self,
        nodes: Vec<u32>,
        combine: &mut impl FnMut(&[T]) -> T,
        memo: &mut FxHashMap<Vec<u32>, u32>,
        scratch: &mut Vec<T>,
    ) -> Result<u32> {
        if let Some(&r) = memo.get(&nodes) {
            return Ok(r);
        }
        let level = nodes.iter().map(|&n| self.level(n)).min().unwrap_or(super::TERMINAL_LEVEL);
        let r = if level == super::TERMINAL_LEVEL {
            scratch.clear();
            scratch.extend(nodes.iter().map(|&n| self.leaf_value(n).expect("terminal")));
            let v = combine(scratch);
            self.leaf(v)?
        } else {
            let (hi, lo): (Vec<u32>, Vec<u32>) = nodes.iter().map(|&n| self.cofactors(n, level)).unzip();
            let h = self.nary_rec(hi, combine, memo, scratch)?;
            let l = self.nary_rec(lo, combine, memo, scratch)?;
            self.branch(level, h, l)
        };
        memo.insert(nodes, r);
        Ok(r)
    }
}
