mod common;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use robust_tc::integration::{certified_integral, flatten_eps, integrate, step_approximation};
use robust_tc::{LadlagPath, PathEvent};

use common::{random_cadlag, random_increasing, random_times, tagged_integral};

/// `(S, H)` on `[0, 2]` sharing some event times.
fn pair(seed: u64) -> (LadlagPath, LadlagPath) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = rng.gen_range(0..8);
    let shared = random_times(&mut rng, 2.0, k);
    let mut s_times: Vec<f64> = shared.iter().copied().filter(|_| rng.gen_bool(0.7)).collect();
    let mut h_times: Vec<f64> = shared.iter().copied().filter(|_| rng.gen_bool(0.7)).collect();
    s_times.push(rng.gen_range(0.01..1.99));
    h_times.push(rng.gen_range(0.01..1.99));
    for t in [&mut s_times, &mut h_times] {
        t.sort_by(|a, b| a.partial_cmp(b).unwrap());
        t.dedup();
    }
    (random_cadlag(&mut rng, 2.0, &s_times), random_increasing(&mut rng, 2.0, &h_times))
}

proptest! {
    #[test]
    fn matches_tagged_sum(seed in any::<u64>(), a in 0.0..1.0f64, b in 1.0..2.0f64) {
        let (s, h) = pair(seed);
        for (lo, hi) in [(0.0, 2.0), (a, b)] {
            let v = integrate(&s, &h, lo, hi).unwrap();
            let oracle = tagged_integral(&s, &h, lo, hi, 3);
            prop_assert!((v - oracle).abs() <= 1e-10 * oracle.abs().max(1.0), "{} vs {}", v, oracle);
        }
    }

    #[test]
    fn linear_in_the_integrator(seed in any::<u64>(), a in 0.0..3.0f64, b in 0.0..3.0f64) {
        let (s, h) = pair(seed);
        let (_, g) = pair(seed.wrapping_add(1));
        let comb = LadlagPath::linear_combination(&[(a, &h), (b, &g)]).unwrap();
        let lhs = integrate(&s, &comb, 0.0, 2.0).unwrap();
        let rhs = a * integrate(&s, &h, 0.0, 2.0).unwrap() + b * integrate(&s, &g, 0.0, 2.0).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs.abs().max(1.0));
    }

    #[test]
    fn additive_over_intervals(seed in any::<u64>(), u in 0.1..1.9f64) {
        let (s, h) = pair(seed);
        let whole = integrate(&s, &h, 0.0, 2.0).unwrap();
        let split = integrate(&s, &h, 0.0, u).unwrap() + integrate(&s, &h, u, 2.0).unwrap();
        prop_assert!((whole - split).abs() <= 1e-12 * whole.abs().max(1.0));
    }

    #[test]
    fn certified_bound_dominates(seed in any::<u64>(), eps in 0.01..3.0f64) {
        let (s, h) = pair(seed);
        let exact = integrate(&s, &h, 0.0, 2.0).unwrap();
        let c = certified_integral(&s, &h, eps).unwrap();
        prop_assert!((c.value - exact).abs() <= c.error_bound + 1e-12 * exact.abs().max(1.0));
        let tv = h.total_variation(2.0).unwrap();
        prop_assert!((c.error_bound - 4.0 * eps * tv).abs() <= 1e-12 * c.error_bound.max(1.0));
    }

    #[test]
    fn flatten_reassembles(seed in any::<u64>(), eps in 0.1..2.5f64) {
        let (s, _) = pair(seed);
        let (flat, big) = flatten_eps(&s, eps).unwrap();
        for e in flat.events() {
            prop_assert!(e.left_jump.abs() < eps);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut times: Vec<f64> = (0..1000).map(|_| rng.gen_range(0.0..=2.0)).collect();
        times.extend(s.event_times());
        for t in times {
            let steps: f64 = big.iter().filter(|j| j.time <= t).map(|j| j.size).sum();
            let lhs = s.value_at(t).unwrap();
            prop_assert!((flat.value_at(t).unwrap() + steps - lhs).abs() <= 1e-12 * lhs.abs().max(1.0));
        }
    }

    #[test]
    fn step_error_within_two_eps(seed in any::<u64>(), eps in 0.05..1.0f64) {
        let (s, _) = pair(seed);
        let (flat, _) = flatten_eps(&s, eps).unwrap();
        let step = step_approximation(&flat, eps).unwrap();
        for i in 0..=10_000 {
            let t = 2.0 * i as f64 / 10_000.0;
            prop_assert!((flat.value_at(t).unwrap() - step.value_at(t)).abs() <= 2.0 * eps + 1e-12);
        }
    }
}

#[test]
fn unit_integrand_sums_jumps() {
    let s = LadlagPath::constant(2.0, 1.0).unwrap();
    let h = LadlagPath::pure_jump(2.0, 0.0, 0.0, vec![PathEvent::new(1.0, 2.0, 3.0)]).unwrap();
    assert_eq!(integrate(&s, &h, 0.0, 2.0).unwrap(), 5.0);
}

#[test]
fn jumps_priced_on_their_side() {
    let s = LadlagPath::pure_jump(2.0, 4.0, 0.0, vec![PathEvent::left(1.0, 2.0)]).unwrap();
    let h = LadlagPath::pure_jump(2.0, 0.0, 0.0, vec![PathEvent::new(1.0, 1.0, 1.0)]).unwrap();
    assert_eq!(integrate(&s, &h, 0.0, 2.0).unwrap(), 10.0);
}

#[test]
fn ramp_step_approximation() {
    let s = LadlagPath::new(1.0, 0.0, 0.0, vec![], vec![1.0]).unwrap();
    let step = step_approximation(&s, 0.25).unwrap();
    assert!(step.times.len() <= 5);
    let worst = (0..=10_000)
        .map(|i| i as f64 / 10_000.0)
        .map(|t| (s.value_at(t).unwrap() - step.value_at(t)).abs())
        .fold(0.0, f64::max);
    assert!(worst <= 0.5);
}

#[test]
fn certified_values_converge_as_eps_shrinks() {
    let (s, h) = pair(17);
    let exact = integrate(&s, &h, 0.0, 2.0).unwrap();
    let mut last_bound = f64::INFINITY;
    for eps in [1.0, 0.1, 0.01] {
        let c = certified_integral(&s, &h, eps).unwrap();
        assert!((c.value - exact).abs() <= c.error_bound);
        assert!(c.error_bound < last_bound);
        last_bound = c.error_bound;
    }
}

#[test]
fn rejects_non_cadlag_integrand_and_decreasing_integrator() {
    let bad_s = LadlagPath::pure_jump(1.0, 1.0, 0.0, vec![PathEvent::new(0.5, 0.0, 1.0)]).unwrap();
    let h = LadlagPath::new(1.0, 0.0, 0.0, vec![], vec![1.0]).unwrap();
    assert!(integrate(&bad_s, &h, 0.0, 1.0).is_err());
    let s = LadlagPath::constant(1.0, 1.0).unwrap();
    let dec = LadlagPath::new(1.0, 0.0, 0.0, vec![], vec![-1.0]).unwrap();
    assert!(integrate(&s, &dec, 0.0, 1.0).is_err());
}
