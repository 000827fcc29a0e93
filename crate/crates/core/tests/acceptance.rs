//! Acceptance suite: one test per criterion, each printing a single
//! PASS/FAIL line with the measured quantity and runtime.

mod common;

use std::time::{Duration, Instant};

use rand::Rng;
use robust_tc::analysis::{
    check_optional_strong_supermartingale, deflated_value_process, superhedge_price, variation_bounds,
};
use robust_tc::cps::{find_cps, max_dual_value, DEFAULT_DELTA};
use robust_tc::gen::{self, StrategyShape};
use robust_tc::integration::{certified_integral, integrate};
use robust_tc::market::{bond_ledger, is_admissible, share_path, Market, Strategy};
use robust_tc::optimize::{convergence_demo, komlos_stabilize, robust_value, solve_robust, SolveOptions, Utility};
use robust_tc::{Error, LadlagPath, LimitKind};

use common::{
    brute_force_supermartingale, deterministic_market, grid_oracle, komlos_sequence, one_period_market,
    random_cadlag, random_increasing, random_times, tagged_integral, terminal_claim, terminal_only_price,
    trade_bound, unit_price_market, vertex_dual_max,
};

fn report(n: usize, name: &str, pass: bool, detail: String, elapsed: Duration, budget: Duration) -> bool {
    let ok = pass && elapsed < budget;
    println!(
        "criterion {n} ({name}): {} {detail}; {:.2}s of {}s",
        if ok { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64(),
        budget.as_secs()
    );
    ok
}

/// `(S, H)` on `[0, 1]` with shared event times.
fn pair(rng: &mut impl Rng) -> (LadlagPath, LadlagPath, Vec<f64>) {
    let k = rng.gen_range(1..6);
    let times = random_times(rng, 1.0, k);
    let s = random_cadlag(rng, 1.0, &times);
    let h = random_increasing(rng, 1.0, &times);
    (s, h, times)
}

#[test]
fn criterion_1_integral_matches_tagged_sums() {
    let start = Instant::now();
    let mut r = gen::rng(1);
    let mut worst: f64 = 0.0;
    for _ in 0..500 {
        let (s, h, _) = pair(&mut r);
        let (a, b) = (r.gen_range(0.0..0.5), r.gen_range(0.5..=1.0));
        for (lo, hi) in [(0.0, 1.0), (a, b)] {
            let v = integrate(&s, &h, lo, hi).unwrap();
            worst = worst.max((v - tagged_integral(&s, &h, lo, hi, 4)).abs());
        }
    }
    let ok = report(
        1,
        "pathwise integral vs tagged refining sums",
        worst <= 1e-10,
        format!("max |error| {worst:.3e} over 500 pairs (tol 1e-10)"),
        start.elapsed(),
        Duration::from_secs(10),
    );
    assert!(ok);
}

#[test]
fn criterion_2_integrals_converge_along_pointwise_limits() {
    let start = Instant::now();
    let mut r = gen::rng(2);
    let grid: Vec<f64> = (1..=10).map(|i| i as f64 / 10.0).collect();
    let mut worst_tail: f64 = 0.0;
    let mut missing_index = 0;
    let mut bound_failures = 0;
    for _ in 0..100 {
        let (s, h, times) = pair(&mut r);
        let g = random_increasing(&mut r, 1.0, &times);
        let ratio: f64 = r.gen_range(0.5..0.75);
        // simultaneous jumps: H^n jumps wherever S and H do
        let seq: Vec<LadlagPath> = (0..80)
            .map(|n| LadlagPath::linear_combination(&[(1.0, &h), (ratio.powi(n), &g)]).unwrap())
            .collect();
        let table = convergence_demo(&seq, &h, &s, &grid, 1e-6).unwrap();
        let Some(index) = table.index_below else {
            missing_index += 1;
            continue;
        };
        for (n, hn) in seq.iter().enumerate().skip(index) {
            for &t in &table.times {
                let err = (tagged_integral(&s, hn, 0.0, t, 1) - tagged_integral(&s, &h, 0.0, t, 1)).abs();
                worst_tail = worst_tail.max(err);
            }
            if n % 20 == 0 {
                for eps in [0.5, 0.1, 0.01] {
                    let c = certified_integral(&s, hn, eps).unwrap();
                    if (c.value - tagged_integral(&s, hn, 0.0, 1.0, 1)).abs() > c.error_bound {
                        bound_failures += 1;
                    }
                }
            }
        }
    }
    let ok = report(
        2,
        "convergence of integrals along pointwise limits",
        missing_index == 0 && worst_tail < 1e-6 && bound_failures == 0,
        format!(
            "max tail error {worst_tail:.3e} (tol 1e-6), sequences without index {missing_index}, certified bound failures {bound_failures}"
        ),
        start.elapsed(),
        Duration::from_secs(30),
    );
    assert!(ok);
}

#[test]
fn criterion_3_deflated_values_are_supermartingales() {
    let start = Instant::now();
    let mut r = gen::rng(3);
    let mut worst = f64::INFINITY;
    let (mut enumerated, mut disagreements) = (0, 0);
    for i in 0..200 {
        let (events, scenarios) = if i % 2 == 0 { (4, 8) } else { (2, 4) };
        let m = gen::random_market(&mut r, events, scenarios, 1, 0.2, 0.1);
        let cps = find_cps(&m, 0, m.lambda(), DEFAULT_DELTA).unwrap();
        for _ in 0..3 {
            let shape = StrategyShape { rates: r.gen_bool(0.5), liquidate: false };
            let st = gen::random_strategy(&mut r, &m, 1.0, shape).unwrap();
            let x: Vec<LadlagPath> = (0..m.num_scenarios()).map(|w| deflated_value_process(&st, &cps, &m, w)).collect();
            let rep = check_optional_strong_supermartingale(&x, &m, 1e-9).unwrap();
            worst = worst.min(rep.worst_slack);
            if m.tree().num_events() <= 2 && m.num_scenarios() <= 4 {
                let values: Vec<Vec<f64>> = m
                    .timeline()
                    .points
                    .iter()
                    .map(|p| x.iter().map(|path| path.limit_at(p.time, p.kind).unwrap()).collect())
                    .collect();
                enumerated += 1;
                if brute_force_supermartingale(&values, &m, 1e-9) != rep.holds {
                    disagreements += 1;
                }
            }
        }
    }
    let ok = report(
        3,
        "optional strong supermartingale property",
        worst >= -1e-9 && enumerated > 0 && disagreements == 0,
        format!("min one-step slack {worst:.3e} (tol -1e-9), {enumerated} enumerated cases, {disagreements} disagreements"),
        start.elapsed(),
        Duration::from_secs(60),
    );
    assert!(ok);
}

#[test]
fn criterion_4_variation_bounds() {
    let start = Instant::now();
    let mut r = gen::rng(4);
    let pairs = [(0.1, 0.05), (0.2, 0.1), (0.3, 0.25)];
    let (mut count, mut failures) = (0, 0);
    let (mut ratio_up, mut ratio_total): (f64, f64) = (0.0, 0.0);
    for i in 0..250 {
        let (lambda, lambda_prime) = pairs[i % 3];
        let m = gen::random_market(&mut r, 4, 6, 1, lambda, lambda_prime);
        let cps = find_cps(&m, 0, lambda_prime, DEFAULT_DELTA).unwrap();
        let per_market = if i < 250 - 1 { 4 } else { 1000 - 4 * 249 };
        for _ in 0..per_market {
            let shape = StrategyShape { rates: r.gen_bool(0.5), liquidate: true };
            let x = r.gen_range(0.5..2.0);
            let st = gen::random_strategy(&mut r, &m, x, shape).unwrap();
            let rep = variation_bounds(&st, &cps, &m, lambda_prime, 1e-9).unwrap();
            count += 1;
            ratio_up = ratio_up.max(rep.expected_up / rep.bound_up);
            ratio_total = ratio_total.max(rep.expected_total / rep.bound_total);
            if rep.expected_up > rep.bound_up || rep.expected_total > rep.bound_total {
                failures += 1;
            }
        }
    }
    let ok = report(
        4,
        "a-priori variation bounds",
        count == 1000 && failures == 0,
        format!("{count} strategies, {failures} violations, max E[up]/bound {ratio_up:.3}, max E[up+down]/bound {ratio_total:.3}"),
        start.elapsed(),
        Duration::from_secs(60),
    );
    assert!(ok);
}

#[test]
fn criterion_5_superhedging_duality() {
    let start = Instant::now();
    let mut r = gen::rng(5);
    let (mut worst, mut worst_terminal): (f64, f64) = (0.0, 0.0);
    let mut gaps = 0;
    for _ in 0..50 {
        let m = gen::random_market(&mut r, 3, 3, 1, 0.2, 0.1);
        let claim = terminal_claim(&mut r, &m);
        let price = superhedge_price(&claim, &m, 0).unwrap().price;
        let dual = vertex_dual_max(&m, 0, &claim);
        let err = (price - dual).abs();
        worst = worst.max(err);
        if err > 1e-6 {
            gaps += 1;
        }
        worst_terminal = worst_terminal.max((terminal_only_price(&m, 0, &claim) - dual).abs());
    }
    let rising = gen::rising_price_market(0.1);
    let infeasible = matches!(find_cps(&rising, 0, 0.1, DEFAULT_DELTA), Err(Error::Infeasible(_)))
        && matches!(max_dual_value(&rising, 0, 0.1, &[1.0]), Err(Error::Infeasible(_)));
    let ok = report(
        5,
        "superhedging duality",
        worst <= 1e-6 && infeasible,
        format!(
            "max |price - vertex dual| {worst:.3e} over 50 instances (tol 1e-6), {gaps} instances above tol, \
             max |terminal-only price - vertex dual| {worst_terminal:.3e}, rising price infeasible {infeasible}"
        ),
        start.elapsed(),
        Duration::from_secs(60),
    );
    assert!(ok);
}

#[test]
fn criterion_6_robust_solver() {
    let start = Instant::now();
    let mut r = gen::rng(6);
    let opts = SolveOptions::default();
    let (mut oracle_gap, mut sandwich, mut scaling): (f64, f64, f64) = (0.0, f64::NEG_INFINITY, 0.0);
    for i in 0..20 {
        let m = if i % 2 == 0 {
            one_period_market(&mut r, 0.2, 0.1)
        } else {
            deterministic_market(&mut r, 0.2, 0.1)
        };
        assert!(m.num_jump_vars() <= 6);
        let u = if i % 4 < 2 { Utility::Log } else { Utility::power(0.5).unwrap() };
        let sol = solve_robust(&m, u, 1.0, &opts).unwrap();
        let (oracle, _) = grid_oracle(&m, u, 1.0, trade_bound(&m, 1.0, 0.1));
        oracle_gap = oracle_gap.max((sol.value - oracle).abs());
        for theta in 0..m.num_models() {
            let single = solve_robust(&m.single_model(theta), u, 1.0, &opts).unwrap();
            sandwich = sandwich.max(sol.value - single.value);
        }
        if u == Utility::Log {
            let double = solve_robust(&m, u, 2.0, &opts).unwrap();
            scaling = scaling.max((double.value - sol.value - 2f64.ln()).abs());
        }
    }
    let flat = unit_price_market(0.1);
    let flat_opts = SolveOptions { lambda_prime: Some(0.05), ..opts };
    let exact = [Utility::Log, Utility::power(0.5).unwrap()]
        .iter()
        .all(|&u| solve_robust(&flat, u, 1.5, &flat_opts).unwrap().value == u.value(1.5));
    let ok = report(
        6,
        "robust solver",
        oracle_gap <= 1e-4 && sandwich <= 1e-6 && exact && scaling <= 1e-4,
        format!(
            "max |u - grid| {oracle_gap:.3e} (tol 1e-4), max u - min u^theta {sandwich:.3e} (tol 1e-6), unit price exact {exact}, max |u(2x) - u(x) - log 2| {scaling:.3e} (tol 1e-4)"
        ),
        start.elapsed(),
        Duration::from_secs(300),
    );
    assert!(ok);
}

/// `(H^0, H^1)` at every event left limit, value and right limit.
fn event_limits(s: &Strategy, m: &Market) -> Vec<f64> {
    let mut out = Vec::new();
    for w in 0..m.num_scenarios() {
        let h0 = bond_ledger(s, m, 0, w);
        let h1 = share_path(s, m, w);
        for &t in m.tree().event_times() {
            for kind in [LimitKind::Left, LimitKind::Value, LimitKind::Right] {
                if kind == LimitKind::Right && t == m.tree().horizon() {
                    continue;
                }
                out.push(h0.limit_at(t, kind).unwrap());
                out.push(h1.limit_at(t, kind).unwrap());
            }
        }
    }
    out
}

#[test]
fn criterion_7_komlos_combinations() {
    let start = Instant::now();
    let mut r = gen::rng(7);
    let u = Utility::power(0.5).unwrap();
    let (mut worst_cauchy, mut worst_value): (f64, f64) = (0.0, f64::INFINITY);
    let mut inadmissible = 0;
    for _ in 0..20 {
        let m = gen::random_market(&mut r, 3, 4, 2, 0.2, 0.1);
        let seq = komlos_sequence(&mut r, &m, 1.0, 80);
        let out = komlos_stabilize(&seq, &m, None, 1e-10).unwrap();
        let limits: Vec<Vec<f64>> = out.combinations.iter().map(|g| event_limits(g, &m)).collect();
        let tail = &limits[limits.len() / 2..];
        for a in tail {
            for b in tail {
                let d = a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
                worst_cauchy = worst_cauchy.max(d);
            }
        }
        if !(out.limit_admissible && is_admissible(&out.limit, &m, 0.0).admissible) {
            inadmissible += 1;
        }
        let values: Vec<f64> = seq.iter().map(|s| robust_value(s, &m, u).unwrap().0).collect();
        for (n, g) in out.combinations.iter().enumerate() {
            let running_min = values[..n + out.window].iter().copied().fold(f64::INFINITY, f64::min);
            worst_value = worst_value.min(robust_value(g, &m, u).unwrap().0 - running_min);
        }
    }
    let ok = report(
        7,
        "forward convex combinations",
        worst_cauchy <= 1e-8 && inadmissible == 0 && worst_value >= -1e-9,
        format!(
            "max tail distance at event limits {worst_cauchy:.3e} (tol 1e-8), inadmissible limits {inadmissible}, min value - running min {worst_value:.3e} (tol -1e-9)"
        ),
        start.elapsed(),
        Duration::from_secs(60),
    );
    assert!(ok);
}
