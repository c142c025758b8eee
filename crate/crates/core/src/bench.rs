//! Generators for benchmark models.

use std::collections::btree_map::Entry;
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::diagram::{DiagramError, DiagramRef, DiagramStore, VarId};
use crate::mdp::{persistence_cpt, ActionSpec, MdpSpec};
use crate::scalar::Scalar;

pub const MAX_RANDOM_VARS: usize = 12;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum BenchError {
    #[error("{family} needs {expected}, got n = {n}")]
    BadSize { family: Family, n: usize, expected: &'static str },
    #[error("discount {0} outside [0, 1)")]
    Discount(f64),
    #[error("random models need at least one action")]
    NoActions,
    #[error("unknown family `{0}` (expected expon, linear, factory_mini or random)")]
    UnknownFamily(String),
    #[error(transparent)]
    Diagram(#[from] DiagramError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Family {
    Expon,
    Linear,
    FactoryMini,
    Random,
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Family::Expon => "expon",
            Family::Linear => "linear",
            Family::FactoryMini => "factory_mini",
            Family::Random => "random",
        })
    }
}

impl FromStr for Family {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self, BenchError> {
        match s {
            "expon" => Ok(Family::Expon),
            "linear" => Ok(Family::Linear),
            "factory_mini" | "factory-mini" => Ok(Family::FactoryMini),
            "random" => Ok(Family::Random),
            other => Err(BenchError::UnknownFamily(other.to_string())),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchConfig {
    pub family: Family,
    /// Variable count; ignored by `factory_mini`.
    pub n: usize,
    /// Overrides the family's reward magnitude.
    pub reward: Option<f64>,
    /// Overrides the family's discount.
    pub discount: Option<f64>,
    pub seed: u64,
    /// Action count for `random`.
    pub actions: usize,
}

impl BenchConfig {
    pub fn new(family: Family, n: usize) -> Self {
        BenchConfig { family, n, reward: None, discount: None, seed: 0, actions: 3 }
    }
}

pub fn generate<T: Scalar>(store: &mut DiagramStore<T>, cfg: &BenchConfig) -> Result<MdpSpec, BenchError> {
    let mut spec = match cfg.family {
        Family::Expon => gen_expon(store, cfg.n, cfg.reward.unwrap_or(1e16), 0.99)?,
        Family::Linear => gen_linear(store, cfg.n, cfg.reward.unwrap_or(10.0), 0.9)?,
        Family::FactoryMini => gen_factory_mini(store)?,
        Family::Random => gen_random(store, cfg.n, cfg.actions, cfg.seed)?,
    };
    if let Some(d) = cfg.discount {
        check_discount(d)?;
        spec.discount = d;
    }
    if let (Some(r), Family::FactoryMini | Family::Random) = (cfg.reward, cfg.family) {
        spec.reward = store.scale(spec.reward, T::from_f64(r))?;
    }
    Ok(spec)
}

fn check_discount(d: f64) -> Result<(), BenchError> {
    if (0.0..1.0).contains(&d) {
        Ok(())
    } else {
        Err(BenchError::Discount(d))
    }
}

fn declare<T: Scalar>(store: &mut DiagramStore<T>, name: &str) -> Result<VarId, DiagramError> {
    match store.var(name) {
        Ok(v) => Ok(v),
        Err(_) => store.declare_var(name),
    }
}

/// Product of indicators: 1 iff every variable in `vars` is true.
fn conjunction<T: Scalar>(store: &mut DiagramStore<T>, vars: &[VarId]) -> Result<DiagramRef, DiagramError> {
    let mut acc = store.one();
    for &v in vars {
        let x = store.indicator(v)?;
        acc = store.multiply(acc, x)?;
    }
    Ok(acc)
}

fn fill_persistence<T: Scalar>(
    store: &mut DiagramStore<T>,
    vars: &[VarId],
    action: &mut ActionSpec,
) -> Result<(), DiagramError> {
    for &v in vars {
        if let Entry::Vacant(slot) = action.cpts.entry(v) {
            slot.insert(persistence_cpt(store, v)?);
        }
    }
    Ok(())
}

/// Binary counter over `x1..xn` (`x1` least significant). Action `a_i`
/// clears every bit below `x_i` and sets `x_i` when those bits were all
/// true. The only move that raises the counter is the increment, so
/// every state sits at a different distance from the all-true goal and
/// has its own value.
pub fn gen_expon<T: Scalar>(
    store: &mut DiagramStore<T>,
    n: usize,
    reward: f64,
    discount: f64,
) -> Result<MdpSpec, BenchError> {
    if n == 0 || n > 31 {
        return Err(BenchError::BadSize { family: Family::Expon, n, expected: "1 <= n <= 31" });
    }
    check_discount(discount)?;
    let vars = (1..=n).map(|i| declare(store, &format!("x{i}"))).collect::<Result<Vec<_>, _>>()?;
    let mut actions = Vec::with_capacity(n);
    for i in 0..n {
        let mut action = ActionSpec::new(format!("a{}", i + 1));
        let fires = conjunction(store, &vars[..i])?;
        let own = store.indicator(vars[i])?;
        let set = store.max(fires, own)?;
        action.cpts.insert(vars[i], set);
        let zero = store.zero();
        for &low in &vars[..i] {
            action.cpts.insert(low, zero);
        }
        fill_persistence(store, &vars, &mut action)?;
        actions.push(action);
    }
    let goal = conjunction(store, &vars)?;
    let reward = store.scale(goal, T::from_f64(reward))?;
    Ok(MdpSpec { variables: vars, actions, reward, discount })
}

/// Chain `x1 -> x2 -> ... -> xn`: `a_i` makes `x_i` true when `x_{i-1}`
/// holds (`a_1` always), and the reward is paid while `x_n` holds.
/// Variables are declared from `xn` down to `x1`, which makes the value
/// function a chain of tests in ordering.
pub fn gen_linear<T: Scalar>(
    store: &mut DiagramStore<T>,
    n: usize,
    reward: f64,
    discount: f64,
) -> Result<MdpSpec, BenchError> {
    if n == 0 {
        return Err(BenchError::BadSize { family: Family::Linear, n, expected: "n >= 1" });
    }
    check_discount(discount)?;
    let mut by_index = vec![VarId::unprimed(0); n];
    for i in (0..n).rev() {
        by_index[i] = declare(store, &format!("x{}", i + 1))?;
    }
    let mut ordered = by_index.clone();
    ordered.sort_unstable();
    let mut actions = Vec::with_capacity(n);
    for i in 0..n {
        let mut action = ActionSpec::new(format!("a{}", i + 1));
        let cpt = if i == 0 {
            store.one()
        } else {
            let prev = store.indicator(by_index[i - 1])?;
            let own = store.indicator(by_index[i])?;
            store.max(prev, own)?
        };
        action.cpts.insert(by_index[i], cpt);
        fill_persistence(store, &ordered, &mut action)?;
        actions.push(action);
    }
    let goal = store.indicator(by_index[n - 1])?;
    let reward = store.scale(goal, T::from_f64(reward))?;
    Ok(MdpSpec { variables: ordered, actions, reward, discount })
}

/// Names of the factory example's variables, in ordering position.
pub const FACTORY_VARS: [&str; 9] = ["C", "P", "PL", "APU", "BPU", "ADR", "BDR", "BO", "SPARE"];

/// Bolting example: one action `bolt` connecting parts A and B. `SPARE`
/// affects nothing and is never rewarded.
pub fn gen_factory_mini<T: Scalar>(store: &mut DiagramStore<T>) -> Result<MdpSpec, BenchError> {
    let vars = FACTORY_VARS.iter().map(|name| declare(store, name)).collect::<Result<Vec<_>, _>>()?;
    let [c, p, pl, apu, bpu, adr, bdr, bo, _spare] = vars[..] else { unreachable!() };
    let ind = |s: &mut DiagramStore<T>, v| s.indicator(v);

    // [C + !C [(PL !APU + !PL) ADR BDR + PL APU BPU] BO] 0.9
    let pl_x = ind(store, pl)?;
    let not_pl = store.complement_one(pl_x)?;
    let apu_x = ind(store, apu)?;
    let not_apu = store.complement_one(apu_x)?;
    let pl_not_apu = store.multiply(pl_x, not_apu)?;
    let drill_ok = store.add(pl_not_apu, not_pl)?;
    let drilled = conjunction(store, &[adr, bdr])?;
    let via_drill = store.multiply(drill_ok, drilled)?;
    let punched = conjunction(store, &[pl, apu, bpu])?;
    let aligned = store.add(via_drill, punched)?;
    let bo_x = ind(store, bo)?;
    let bolted = store.multiply(aligned, bo_x)?;
    let c_x = ind(store, c)?;
    let not_c = store.complement_one(c_x)?;
    let fresh = store.multiply(not_c, bolted)?;
    let connected = store.add(c_x, fresh)?;
    let c_cpt = store.scale(connected, T::from_f64(0.9))?;

    let mut bolt = ActionSpec::new("bolt");
    bolt.cpts.insert(c, c_cpt);
    let apu_cpt = ind(store, apu)?;
    bolt.cpts.insert(apu, apu_cpt);
    fill_persistence(store, &vars, &mut bolt)?;

    // C P 10 + C !P 5
    let ten = store.constant(10.0)?;
    let five = store.constant(5.0)?;
    let by_paint = store.ite(p, ten, five)?;
    let reward = store.multiply(c_x, by_paint)?;

    Ok(MdpSpec { variables: vars, actions: vec![bolt], reward, discount: 0.9 })
}

fn random_tree<T: Scalar>(
    store: &mut DiagramStore<T>,
    rng: &mut ChaCha8Rng,
    vars: &[VarId],
    depth: usize,
    leaf: &mut impl FnMut(&mut ChaCha8Rng) -> f64,
) -> Result<DiagramRef, DiagramError> {
    if depth == 0 || rng.gen_bool(0.3) {
        let v = leaf(rng);
        return store.constant(v);
    }
    let var = vars[rng.gen_range(0..vars.len())];
    let hi = random_tree(store, rng, vars, depth - 1, leaf)?;
    let lo = random_tree(store, rng, vars, depth - 1, leaf)?;
    store.ite(var, hi, lo)
}

/// Seeded random model over `x1..xn` with shallow CPT trees whose
/// leaves are multiples of 0.1 and an integer reward tree in `0..=10`.
pub fn gen_random<T: Scalar>(
    store: &mut DiagramStore<T>,
    n: usize,
    actions: usize,
    seed: u64,
) -> Result<MdpSpec, BenchError> {
    if n == 0 || n > MAX_RANDOM_VARS {
        return Err(BenchError::BadSize { family: Family::Random, n, expected: "1 <= n <= 12" });
    }
    if actions == 0 {
        return Err(BenchError::NoActions);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vars = (1..=n).map(|i| declare(store, &format!("x{i}"))).collect::<Result<Vec<_>, _>>()?;
    let mut probability = |r: &mut ChaCha8Rng| r.gen_range(0..=10u32) as f64 / 10.0;
    let mut specs = Vec::with_capacity(actions);
    for k in 1..=actions {
        let mut cpts = BTreeMap::new();
        for &v in &vars {
            let cpt = random_tree(store, &mut rng, &vars, 2, &mut probability)?;
            cpts.insert(v, cpt);
        }
        specs.push(ActionSpec { name: format!("a{k}"), cpts });
    }
    let mut payoff = |r: &mut ChaCha8Rng| r.gen_range(0..=10u32) as f64;
    let reward = random_tree(store, &mut rng, &vars, 3, &mut payoff)?;
    Ok(MdpSpec { variables: vars, actions: specs, reward, discount: 0.9 })
}
