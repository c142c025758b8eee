//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Run with `cargo test -p addmdp --test acceptance`.

use std::collections::HashSet;
use std::path::PathBuf;
use std::time::{Duration, Instant};

use addmdp::bench::{gen_expon, gen_factory_mini, gen_linear, gen_random};
use addmdp::{
    build_dual_diagram, extract_policy, flat_value_iteration, parse, value_iteration, AddNode, BinaryOp, DiagramRef,
    FlatMdp, MdpSpec, SolveConfig, Store, VarId,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn fixture(name: &str) -> String {
    let path: PathBuf = [env!("CARGO_MANIFEST_DIR"), "..", "..", "fixtures", name].iter().collect();
    std::fs::read_to_string(path).unwrap()
}

fn config(node_limit: Option<usize>) -> SolveConfig {
    SolveConfig { node_limit, ..SolveConfig::default() }
}

fn secs(d: Duration) -> String {
    format!("{:.2}s", d.as_secs_f64())
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut s = Store::new();
    let spec = gen_factory_mini(&mut s).unwrap();
    let c = s.var("C").unwrap();
    let generated = s.stats(spec.action("bolt").unwrap().cpt(c).unwrap()).unwrap();
    let mut p = Store::new();
    let parsed = parse(&fixture("factory_mini.mdp"), &mut p).unwrap();
    let c = p.var("C").unwrap();
    let from_text = p.stats(parsed.action("bolt").unwrap().cpt(c).unwrap()).unwrap();
    let elapsed = start.elapsed();
    let want = (7, 2, 12);
    let got = (generated.internal_nodes, generated.leaves, generated.equivalent_tree_leaves);
    let text = (from_text.internal_nodes, from_text.leaves, from_text.equivalent_tree_leaves);
    outcome(
        got == want && text == want && elapsed < Duration::from_secs(1),
        format!("C' CPT (internal, leaves, etl) = {got:?}, parsed {text:?}, {}", secs(elapsed)),
    )
}

/// A random 8-variable model with its default-configuration solution.
struct Solved {
    store: Store,
    spec: MdpSpec,
    value: DiagramRef,
    iterations: usize,
}

fn criterion_2(solved: &mut Vec<Solved>) -> Outcome {
    let start = Instant::now();
    let cfg = SolveConfig::default();
    let mut worst: f64 = 0.0;
    let mut argmax_mismatch = 0;
    let mut iteration_mismatch = 0;
    for seed in 0..100 {
        let mut s = Store::new();
        let spec = gen_random(&mut s, 8, 3, seed).unwrap();
        let result = value_iteration(&mut s, &spec, &cfg).unwrap();
        let policy = extract_policy(&mut s, &spec, result.value, &cfg).unwrap();
        let flat = FlatMdp::from_spec(&s, &spec).unwrap();
        let sol = flat_value_iteration(&flat, cfg.epsilon, cfg.max_iterations);
        iteration_mismatch += (sol.iterations != result.iterations) as usize;
        for st in 0..flat.num_states() {
            let v = s.evaluate_with(result.value, |u| flat.bit(st, u)).unwrap();
            worst = worst.max((v - sol.values[st]).abs());
            let mut want: Vec<&str> = sol.argmax[st].iter().map(|&a| flat.action_names[a].as_str()).collect();
            want.sort();
            let got = policy.lookup(&s, |u| flat.bit(st, u)).unwrap();
            if got.iter().map(String::as_str).ne(want.iter().copied()) {
                argmax_mismatch += 1;
            }
        }
        solved.push(Solved { store: s, spec, value: result.value, iterations: result.iterations });
    }
    let elapsed = start.elapsed();
    outcome(
        worst <= 1e-9 && argmax_mismatch == 0 && elapsed < Duration::from_secs(60),
        format!(
            "100 models: sup-norm {worst:.3e}, argmax mismatches {argmax_mismatch}, \
             iteration-count mismatches {iteration_mismatch}, {}",
            secs(elapsed)
        ),
    )
}

fn criterion_3(solved: &mut [Solved]) -> Outcome {
    let start = Instant::now();
    let mut failures = Vec::new();
    let mut check = |name: String, s: &mut Store, spec: &MdpSpec, base: DiagramRef, iterations: usize| {
        for k in [1, 4, 64] {
            let r = value_iteration(s, spec, &config(Some(k))).unwrap();
            if r.value != base || r.iterations != iterations {
                failures.push(format!("{name} bigadd {k}"));
            }
        }
    };
    for (seed, m) in solved.iter_mut().enumerate() {
        check(format!("seed {seed}"), &mut m.store, &m.spec, m.value, m.iterations);
    }
    let mut s = Store::new();
    let spec = gen_factory_mini(&mut s).unwrap();
    let base = value_iteration(&mut s, &spec, &config(None)).unwrap();
    check("factory_mini".into(), &mut s, &spec, base.value, base.iterations);
    let elapsed = start.elapsed();
    outcome(
        failures.is_empty(),
        format!(
            "101 models x bigadd {{1,4,64}} vs inf: {} differences {:?}, {}",
            failures.len(),
            failures,
            secs(elapsed)
        ),
    )
}

fn criterion_4() -> Outcome {
    let mut rows = Vec::new();
    let mut pass = true;
    let mut previous: Option<Duration> = None;
    for n in [6, 8, 10] {
        let mut s = Store::new();
        let spec = gen_expon(&mut s, n, 1e16, 0.99).unwrap();
        let start = Instant::now();
        let r = value_iteration(&mut s, &spec, &SolveConfig::default()).unwrap();
        let elapsed = start.elapsed();
        let leaves = s.stats(r.value).unwrap().leaves;
        pass &= r.converged && leaves == 1 << n;
        if let Some(p) = previous {
            pass &= elapsed.as_secs_f64() >= 2.0 * p.as_secs_f64();
        }
        if n == 10 {
            pass &= elapsed < Duration::from_secs(600);
        }
        previous = Some(elapsed);
        rows.push(format!("n={n}: {leaves} values, {} iterations, {}", r.iterations, secs(elapsed)));
    }
    outcome(pass, rows.join("; "))
}

fn criterion_5() -> Outcome {
    let start = Instant::now();
    let mut points = Vec::new();
    let mut pass = true;
    for n in [4, 8, 12, 16] {
        let mut s = Store::new();
        let spec = gen_linear(&mut s, n, 10.0, 0.9).unwrap();
        let r = value_iteration(&mut s, &spec, &SolveConfig::default()).unwrap();
        let st = s.stats(r.value).unwrap();
        pass &= r.converged && st.leaves == n + 1;
        points.push((n as f64, st.internal_nodes as f64, st.leaves));
    }
    // least-squares line through (n, internal nodes)
    let k = points.len() as f64;
    let (sx, sy) = points.iter().fold((0.0, 0.0), |(a, b), p| (a + p.0, b + p.1));
    let (mx, my) = (sx / k, sy / k);
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let slope = sxy / sxx;
    let residual = points.iter().map(|p| (p.1 - (my + slope * (p.0 - mx))).abs()).fold(0.0, f64::max);
    pass &= residual <= 2.0;
    let summary: Vec<String> = points.iter().map(|p| format!("n={}: {} values, {} nodes", p.0, p.2, p.1)).collect();
    outcome(
        pass,
        format!("{}; fit slope {slope:.2}, max residual {residual:.2}, {}", summary.join("; "), secs(start.elapsed())),
    )
}

fn criterion_6() -> Outcome {
    let start = Instant::now();
    let cfg = SolveConfig::default();
    let tolerance = cfg.epsilon / 2.0 + 1e-9;
    let mut rows = Vec::new();
    let mut pass = true;
    for name in ["factory_mini.mdp", "expon6.mdp", "linear6.mdp", "random5.mdp"] {
        let mut s = Store::new();
        let spec = parse(&fixture(name), &mut s).unwrap();
        if spec.discount != 0.9 {
            continue;
        }
        let r = value_iteration(&mut s, &spec, &cfg).unwrap();
        let flat = FlatMdp::from_spec(&s, &spec).unwrap();
        let reference = flat.run_iterations(10 * r.iterations);
        let worst = (0..flat.num_states())
            .map(|st| (s.evaluate_with(r.value, |u| flat.bit(st, u)).unwrap() - reference[st]).abs())
            .fold(0.0, f64::max);
        pass &= r.converged && worst < tolerance;
        rows.push(format!("{name}: {worst:.9e}"));
    }
    outcome(pass, format!("{} (bound {tolerance}), {}", rows.join(", "), secs(start.elapsed())))
}

fn criterion_7() -> Outcome {
    let mut s = Store::new();
    let spec = gen_factory_mini(&mut s).unwrap();
    let cfg = SolveConfig::default();
    let r = value_iteration(&mut s, &spec, &cfg).unwrap();
    let policy = extract_policy(&mut s, &spec, r.value, &cfg).unwrap();
    let spare = s.var("SPARE").unwrap();
    let in_value = s.support(r.value).unwrap().contains(&spare);
    let in_policy = s.support(policy.diagram).unwrap().contains(&spare);
    let names: Vec<String> = s.support(r.value).unwrap().into_iter().map(|v| s.var_name(v)).collect();
    outcome(
        !in_value && !in_policy,
        format!("SPARE in value: {in_value}, in policy: {in_policy}; value support {names:?}"),
    )
}

// Kernel property cases: diagrams over the six variables a, a', b, b',
// c, c' built from random expressions, checked against truth tables
// computed here.

const LEVELS: u32 = 6;
const ROWS: usize = 1 << LEVELS;

type Table = Vec<f64>;

fn kernel_store() -> Store {
    let mut s = Store::new();
    for name in ["a", "b", "c"] {
        s.declare_var(name).unwrap();
    }
    s
}

fn table_of(s: &Store, f: DiagramRef) -> Table {
    (0..ROWS).map(|x| s.evaluate_with(f, |v| Some(x >> v.level() & 1 == 1)).unwrap()).collect()
}

/// Random diagram plus its truth table. Leaves are multiples of 1/4 so
/// sums and products stay exact.
fn random_function(s: &mut Store, rng: &mut ChaCha8Rng, depth: u32) -> (DiagramRef, Table) {
    if depth == 0 || rng.gen_bool(0.25) {
        if rng.gen_bool(0.5) {
            let c = rng.gen_range(-8..=8) as f64 / 4.0;
            return (s.constant(c).unwrap(), vec![c; ROWS]);
        }
        let level = rng.gen_range(0..LEVELS);
        let table = (0..ROWS).map(|x| (x >> level & 1) as f64).collect();
        return (s.indicator(VarId::from_level(level)).unwrap(), table);
    }
    let (f, tf) = random_function(s, rng, depth - 1);
    match rng.gen_range(0..4) {
        0 => {
            let level = rng.gen_range(0..LEVELS);
            let value = rng.gen_bool(0.5);
            let r = s.restrict(f, VarId::from_level(level), value).unwrap();
            let mask = 1 << level;
            let t = (0..ROWS).map(|x| tf[if value { x | mask } else { x & !mask }]).collect();
            (r, t)
        }
        _ => {
            let (g, tg) = random_function(s, rng, depth - 1);
            let op = [BinaryOp::Add, BinaryOp::Multiply, BinaryOp::Max, BinaryOp::Min, BinaryOp::Subtract]
                [rng.gen_range(0..5)];
            let r = s.apply(op, f, g).unwrap();
            (r, tf.iter().zip(&tg).map(|(&a, &b)| op.eval(a, b)).collect())
        }
    }
}

fn probability_table(rng: &mut ChaCha8Rng, vars: &[VarId]) -> Table {
    let mut table = vec![0.0; ROWS];
    let chosen: Vec<f64> = (0..1 << vars.len()).map(|_| rng.gen_range(0..=8) as f64 / 8.0).collect();
    for (x, slot) in table.iter_mut().enumerate() {
        let key = vars.iter().enumerate().fold(0, |k, (i, v)| k | ((x >> v.level() & 1) << i));
        *slot = chosen[key];
    }
    table
}

fn reduced(s: &Store, f: DiagramRef) -> Result<(), String> {
    let mut seen = HashSet::new();
    let mut shapes = HashSet::new();
    let mut stack = vec![f];
    while let Some(r) = stack.pop() {
        if !seen.insert(r) {
            continue;
        }
        if let AddNode::Internal { var, then_child, else_child } = s.node(r).unwrap() {
            if then_child == else_child {
                return Err(format!("redundant test of {}", s.var_name(var)));
            }
            if !shapes.insert((var, then_child, else_child)) {
                return Err("duplicate node".into());
            }
            for child in [then_child, else_child] {
                if let AddNode::Internal { var: below, .. } = s.node(child).unwrap() {
                    if below.level() <= var.level() {
                        return Err("ordering violated".into());
                    }
                }
                stack.push(child);
            }
        }
    }
    Ok(())
}

fn kernel_case(seed: u64) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = kernel_store();
    let all: Vec<VarId> = (0..LEVELS).map(VarId::from_level).collect();
    let depth = rng.gen_range(1..=5);
    let (f, tf) = random_function(&mut s, &mut rng, depth);
    let (g, tg) = random_function(&mut s, &mut rng, depth);
    let (h, th) = random_function(&mut s, &mut rng, depth);
    let fail = |what: &str| Err(format!("seed {seed}: {what}"));

    // pointwise soundness of construction
    if table_of(&s, f) != tf || table_of(&s, g) != tg {
        return fail("construction disagrees with its truth table");
    }
    // canonicity: equal functions share a handle
    let rebuilt = s.tabulate(&all, |bits| tf[bits.iter().rev().fold(0, |k, &b| k << 1 | b as usize)]).unwrap();
    if rebuilt != f {
        return fail("tabulated copy has a different handle");
    }
    for d in [f, g, h] {
        reduced(&s, d).map_err(|e| format!("seed {seed}: {e}"))?;
    }
    // operator algebra
    let ops = [BinaryOp::Add, BinaryOp::Multiply, BinaryOp::Max, BinaryOp::Min, BinaryOp::Subtract];
    for op in ops {
        let r = s.apply(op, f, g).unwrap();
        let want: Table = tf.iter().zip(&tg).map(|(&a, &b)| op.eval(a, b)).collect();
        if table_of(&s, r) != want {
            return fail(&format!("{op:?} disagrees with the table"));
        }
        if op != BinaryOp::Subtract && s.apply(op, g, f).unwrap() != r {
            return fail(&format!("{op:?} not commutative"));
        }
        if op == BinaryOp::Subtract {
            continue;
        }
        // associativity: the two bracketings share a handle exactly when
        // their tables agree bit for bit
        let left = s.apply(op, r, h).unwrap();
        let gh = s.apply(op, g, h).unwrap();
        let right = s.apply(op, f, gh).unwrap();
        let tl: Table = want.iter().zip(&th).map(|(&a, &b)| op.eval(a, b)).collect();
        let tr: Table = tf.iter().zip(&tg).zip(&th).map(|((&a, &b), &c)| op.eval(a, op.eval(b, c))).collect();
        if table_of(&s, left) != tl || table_of(&s, right) != tr || (left == right) != (tl == tr) {
            return fail(&format!("{op:?} bracketings"));
        }
    }
    let (zero, one) = (s.zero(), s.one());
    let gh = s.add(g, h).unwrap();
    let distributed = s.multiply(f, gh).unwrap();
    let fg = s.multiply(f, g).unwrap();
    let fh = s.multiply(f, h).unwrap();
    let expanded = s.add(fg, fh).unwrap();
    let td: Table = (0..ROWS).map(|x| tf[x] * (tg[x] + th[x])).collect();
    let te: Table = (0..ROWS).map(|x| tf[x] * tg[x] + tf[x] * th[x]).collect();
    if table_of(&s, distributed) != td || table_of(&s, expanded) != te || (distributed == expanded) != (td == te) {
        return fail("distributivity");
    }
    if s.add(f, zero).unwrap() != f || s.multiply(f, one).unwrap() != f || s.multiply(f, zero).unwrap() != zero {
        return fail("identity or annihilator law");
    }
    let fmax = s.max(f, g).unwrap();
    if s.apply(BinaryOp::Min, f, fmax).unwrap() != f || s.max(f, f).unwrap() != f {
        return fail("absorption or idempotence");
    }
    // sum-out against the table
    let level = rng.gen_range(0..LEVELS);
    let summed = s.sum_out(f, VarId::from_level(level)).unwrap();
    let mask = 1 << level;
    let want: Table = (0..ROWS).map(|x| tf[x & !mask] + tf[x | mask]).collect();
    if table_of(&s, summed) != want {
        return fail("sum-out disagrees with the table");
    }
    // probability closure
    let unprimed: Vec<VarId> = (0..3).map(VarId::unprimed).collect();
    let tp = probability_table(&mut rng, &unprimed);
    let p = s.tabulate(&all, |bits| tp[bits.iter().rev().fold(0, |k, &b| k << 1 | b as usize)]).unwrap();
    let q = s.complement_one(p).unwrap();
    if s.complement_one(q).unwrap() != p || s.add(p, q).unwrap() != one {
        return fail("complement is not an involution summing to one");
    }
    let tq = probability_table(&mut rng, &unprimed);
    let p2 = s.tabulate(&all, |bits| tq[bits.iter().rev().fold(0, |k, &b| k << 1 | b as usize)]).unwrap();
    let prod = s.multiply(p, p2).unwrap();
    if s.terminal_values(prod).unwrap().iter().any(|v| !(0.0..=1.0).contains(v)) {
        return fail("product of probabilities left [0, 1]");
    }
    let var = unprimed[rng.gen_range(0..3)];
    let dual = build_dual_diagram(&mut s, p, var).unwrap();
    if s.sum_out(dual.diagram, var.to_primed()).unwrap() != one {
        return fail("dual diagram does not sum to one");
    }
    Ok(())
}

fn criterion_8() -> Outcome {
    let start = Instant::now();
    let cases = 2000u64;
    let failures: Vec<String> = (0..cases).filter_map(|seed| kernel_case(seed).err()).collect();
    let elapsed = start.elapsed();
    outcome(
        failures.is_empty() && elapsed < Duration::from_secs(30),
        format!(
            "{cases} cases, {} failures {:?}, {}",
            failures.len(),
            failures.iter().take(3).collect::<Vec<_>>(),
            secs(elapsed)
        ),
    )
}

fn main() {
    let mut solved = Vec::new();
    let results = [
        ("1 bolt CPT sizes", criterion_1()),
        ("2 oracle equivalence", criterion_2(&mut solved)),
        ("3 partition invariance", criterion_3(&mut solved)),
        ("4 EXPON worst case", criterion_4()),
        ("5 LINEAR best case", criterion_5()),
        ("6 stopping-rule soundness", criterion_6()),
        ("7 irrelevant variable", criterion_7()),
        ("8 kernel properties", criterion_8()),
    ];
    let mut failed = 0;
    for (name, o) in &results {
        println!("criterion {name}: {} - {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += !o.pass as usize;
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
