use std::path::PathBuf;

use addmdp::bench::{gen_expon, gen_factory_mini};
use addmdp::flat::FlatError;
use addmdp::{compare, flat_value_iteration, parse, FlatMdp, Store};

fn fixture(name: &str) -> String {
    let path: PathBuf = [env!("CARGO_MANIFEST_DIR"), "..", "..", "fixtures", name].iter().collect();
    std::fs::read_to_string(path).unwrap()
}

#[test]
fn deterministic_actions_have_one_successor() {
    let mut s = Store::new();
    let spec = gen_expon(&mut s, 4, 1e16, 0.99).unwrap();
    let flat = FlatMdp::from_spec(&s, &spec).unwrap();
    for st in 0..16 {
        for a in 0..4 {
            let succ = flat.successors(st, a);
            assert_eq!(succ.len(), 1, "state {st} action {a}");
            let (t, p) = succ[0];
            assert_eq!(p, 1.0);
            assert_eq!(flat.transition_prob(st, a, t), 1.0);
            assert_eq!((0..16).filter(|&u| flat.transition_prob(st, a, u) > 0.0).count(), 1);
        }
    }
    // a3 from 0b0011 sets x3 and clears the lower bits
    assert_eq!(flat.successors(0b0011, 2), vec![(0b0100, 1.0)]);
    // a3 from 0b1001 cannot set x3 but still clears x1
    assert_eq!(flat.successors(0b1001, 2), vec![(0b1000, 1.0)]);
}

#[test]
fn factory_connected_parts_stay_connected_with_09() {
    let mut s = Store::new();
    let spec = gen_factory_mini(&mut s).unwrap();
    let flat = FlatMdp::from_spec(&s, &spec).unwrap();
    for st in (0..512usize).filter(|st| st & 1 == 1) {
        assert_eq!(flat.transition_prob(st, 0, st), 0.9);
        assert!((flat.transition_prob(st, 0, st & !1) - 0.1).abs() < 1e-15);
        assert_eq!(flat.transition_prob(st, 0, st ^ 0b10), 0.0);
    }
}

#[test]
fn transitions_are_normalized_on_fixtures() {
    for name in ["factory_mini.mdp", "expon6.mdp", "linear6.mdp", "random5.mdp"] {
        let mut s = Store::new();
        let spec = parse(&fixture(name), &mut s).unwrap();
        let flat = FlatMdp::from_spec(&s, &spec).unwrap();
        let n = flat.num_states();
        for a in 0..flat.action_names.len() {
            for st in 0..n {
                let total: f64 = (0..n).map(|t| flat.transition_prob(st, a, t)).sum();
                assert!((total - 1.0).abs() <= 1e-12, "{name}: state {st} action {a}: {total}");
            }
        }
    }
}

#[test]
fn zero_reward_gives_zero_vector() {
    let text =
        "(variables x y) (action a (x (0.5))) (action b (y (x (true (1)) (false (0.2))))) (reward (0)) (discount 0.9)";
    let mut s = Store::new();
    let spec = parse(text, &mut s).unwrap();
    let flat = FlatMdp::from_spec(&s, &spec).unwrap();
    let sol = flat_value_iteration(&flat, 0.01, 1000);
    assert_eq!(sol.values, vec![0.0; 4]);
    assert_eq!(sol.iterations, 1);
    assert!(sol.converged);
    assert!(sol.argmax.iter().all(|set| set == &vec![0, 1]));
}

#[test]
fn factory_painted_and_connected_is_worth_at_least_ten() {
    let mut s = Store::new();
    let spec = gen_factory_mini(&mut s).unwrap();
    let flat = FlatMdp::from_spec(&s, &spec).unwrap();
    let sol = flat_value_iteration(&flat, 0.01, 100_000);
    for st in (0..512).filter(|st| st & 0b11 == 0b11) {
        assert!(sol.values[st] >= 10.0);
    }
    // C=1 with P=1 and nothing else: the connection decays at rate 0.1
    // per step and never comes back (BO=0), so V = 10 / (1 - 0.9 * 0.9)
    let expected = 10.0 / (1.0 - 0.81);
    assert!((sol.values[0b11] - expected).abs() < 0.01);
}

#[test]
fn expon6_has_64_values() {
    let mut s = Store::new();
    let spec = gen_expon(&mut s, 6, 1e16, 0.99).unwrap();
    let flat = FlatMdp::from_spec(&s, &spec).unwrap();
    let sol = flat_value_iteration(&flat, 0.01, 100_000);
    let mut values = sol.values.clone();
    values.sort_by(f64::total_cmp);
    values.dedup();
    assert_eq!(values.len(), 64);
}

#[test]
fn compare_is_the_sup_norm() {
    let mut s = Store::new();
    let spec = gen_factory_mini(&mut s).unwrap();
    let flat = FlatMdp::from_spec(&s, &spec).unwrap();
    assert_eq!(compare(&s, &flat, spec.reward, &flat.reward).unwrap(), 0.0);
    let shifted: Vec<f64> = flat.reward.iter().map(|r| r + 1.0).collect();
    assert_eq!(compare(&s, &flat, spec.reward, &shifted).unwrap(), 1.0);
}

#[test]
fn state_cap_is_enforced() {
    let mut s = Store::new();
    let spec = gen_factory_mini(&mut s).unwrap();
    match FlatMdp::with_cap(&s, &spec, 256) {
        Err(FlatError::TooLarge { states, cap }) => assert_eq!((states, cap), (512, 256)),
        other => panic!("expected size error, got {other:?}"),
    }
}

#[test]
fn long_runs_approach_the_fixed_point() {
    let mut s = Store::new();
    let spec = gen_factory_mini(&mut s).unwrap();
    let flat = FlatMdp::from_spec(&s, &spec).unwrap();
    let sol = flat_value_iteration(&flat, 0.01, 100_000);
    let reference = flat.run_iterations(10 * sol.iterations);
    let worst = sol.values.iter().zip(&reference).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(worst < 0.005);
}
