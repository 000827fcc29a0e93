//! Independent oracles shared by the integration and acceptance tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use robust_tc::gen;
use robust_tc::lp::{LinearProgram, LpOutcome, Sense};
use robust_tc::market::{Market, ModelFamily, Partition, ScenarioTree, SlotSide, Strategy};
use robust_tc::optimize::Utility;
use robust_tc::{LadlagPath, LimitKind, PathEvent};

/// `k` sorted distinct times in `(0, horizon]`, the last one at the horizon
/// with probability one half.
pub fn random_times(rng: &mut impl Rng, horizon: f64, k: usize) -> Vec<f64> {
    let mut t: Vec<f64> = (0..k)
        .map(|i| horizon * (i as f64 + rng.gen_range(0.05..0.95)) / k as f64)
        .collect();
    if k > 0 && rng.gen_bool(0.5) {
        t[k - 1] = horizon;
    }
    t
}

fn slopes(rng: &mut impl Rng, times: &[f64], horizon: f64, lo: f64, hi: f64) -> Vec<f64> {
    let n = if times.last() == Some(&horizon) { times.len() } else { times.len() + 1 };
    (0..n).map(|_| rng.gen_range(lo..hi)).collect()
}

/// Càdlàg piecewise-linear path with left jumps at `times`.
pub fn random_cadlag(rng: &mut impl Rng, horizon: f64, times: &[f64]) -> LadlagPath {
    let events = times
        .iter()
        .map(|&t| PathEvent::left(t, if rng.gen_bool(0.8) { rng.gen_range(-2.0..2.0) } else { 0.0 }))
        .collect();
    let sl = slopes(rng, times, horizon, -2.0, 2.0);
    LadlagPath::new(horizon, rng.gen_range(-2.0..4.0), 0.0, events, sl).unwrap()
}

/// Increasing piecewise-linear làdlàg path starting at 0.
pub fn random_increasing(rng: &mut impl Rng, horizon: f64, times: &[f64]) -> LadlagPath {
    let mut jump = |p: f64| if rng.gen_bool(p) { rng.gen_range(0.0..2.0) } else { 0.0 };
    let events = times
        .iter()
        .map(|&t| {
            let right = if t < horizon { jump(0.6) } else { 0.0 };
            PathEvent::new(t, jump(0.6), right)
        })
        .collect();
    let r0 = jump(0.5);
    let sl = slopes(rng, times, horizon, 0.0, 2.0);
    LadlagPath::new(horizon, 0.0, r0, events, sl).unwrap()
}

/// Arbitrary finite-variation path.
pub fn random_path(rng: &mut impl Rng, horizon: f64, times: &[f64]) -> LadlagPath {
    let events = times
        .iter()
        .map(|&t| {
            let right = if t < horizon { rng.gen_range(-2.0..2.0) } else { 0.0 };
            PathEvent::new(t, rng.gen_range(-2.0..2.0), right)
        })
        .collect();
    let sl = slopes(rng, times, horizon, -2.0, 2.0);
    LadlagPath::new(horizon, rng.gen_range(-2.0..2.0), rng.gen_range(-1.0..1.0), events, sl).unwrap()
}

/// Ordered one-sided positions `(s, value), (s, right), …, (t, left),
/// (t, value)` through every knot in between.
fn positions(knots: &[f64], s: f64, t: f64) -> Vec<(f64, LimitKind)> {
    let mut out = vec![(s, LimitKind::Value), (s, LimitKind::Right)];
    for &u in knots.iter().filter(|&&u| u > s && u < t) {
        out.extend([(u, LimitKind::Left), (u, LimitKind::Value), (u, LimitKind::Right)]);
    }
    out.extend([(t, LimitKind::Left), (t, LimitKind::Value)]);
    out
}

fn limit(p: &LadlagPath, t: f64, kind: LimitKind) -> f64 {
    match kind {
        LimitKind::Left if t == 0.0 => p.value_at(0.0).unwrap(),
        LimitKind::Right if t == p.horizon() => p.value_at(t).unwrap(),
        k => p.limit_at(t, k).unwrap(),
    }
}

/// Tagged Riemann–Stieltjes sum on a partition refining every knot of `S`
/// and `H` into `sub` pieces, with the degenerate cells `[u−, u]` tagged at
/// `S_{u−}` and `[u, u+]` at `S_u`; midpoint tags elsewhere.
pub fn tagged_integral(s_path: &LadlagPath, h: &LadlagPath, s: f64, t: f64, sub: usize) -> f64 {
    let mut knots = s_path.knot_times();
    knots.extend(h.knot_times());
    knots.sort_by(|a, b| a.partial_cmp(b).unwrap());
    knots.dedup();
    let pos = positions(&knots, s, t);
    let mut total = 0.0;
    for w in pos.windows(2) {
        let ((a, ka), (b, kb)) = (w[0], w[1]);
        if a == b {
            let dh = limit(h, b, kb) - limit(h, a, ka);
            let tag = if ka == LimitKind::Left {
                limit(s_path, a, LimitKind::Left)
            } else {
                s_path.value_at(a).unwrap()
            };
            total += tag * dh;
            continue;
        }
        // open interval (a, b): continuous pieces only
        let mut prev = limit(h, a, LimitKind::Right);
        for i in 0..sub {
            let lo = a + (b - a) * i as f64 / sub as f64;
            let hi = a + (b - a) * (i + 1) as f64 / sub as f64;
            let next = if i + 1 == sub { limit(h, b, LimitKind::Left) } else { h.value_at(hi).unwrap() };
            total += s_path.value_at(0.5 * (lo + hi)).unwrap() * (next - prev);
            prev = next;
        }
    }
    total
}

/// `sup Σ |H(p_{i+1}) − H(p_i)|` over the partition of `[0, t]` refined to
/// a uniform grid of `grid` cells, every knot and both one-sided limits.
pub fn partition_variation(h: &LadlagPath, t: f64, grid: usize) -> f64 {
    let mut knots = h.knot_times();
    knots.extend((1..grid).map(|i| t * i as f64 / grid as f64));
    knots.sort_by(|a, b| a.partial_cmp(b).unwrap());
    knots.dedup();
    let pos = positions(&knots, 0.0, t);
    pos.windows(2)
        .map(|w| (limit(h, w[1].0, w[1].1) - limit(h, w[0].0, w[0].1)).abs())
        .sum()
}

/// `(H^0, H^1)` at every timeline point for a jump-only strategy, by
/// walking the slots in order.
pub fn ledger_walk(strategy: &Strategy, market: &Market, theta: usize, w: usize) -> Vec<(f64, f64)> {
    let tl = market.timeline();
    let tree = market.tree();
    let lambda = market.lambda();
    let mut cash = strategy.initial_cash;
    let mut shares = 0.0;
    let mut out = Vec::with_capacity(tl.points.len());
    for (i, _) in tl.points.iter().enumerate() {
        out.push((cash, shares));
        for (j, slot) in tl.slots.iter().enumerate().filter(|(_, s)| s.after_point == i) {
            let cell = tree.layer(slot.layer).cell_of(w);
            let path = market.price(theta, w);
            let s = match slot.side {
                SlotSide::Left => path.left_limit_at(slot.time).unwrap(),
                SlotSide::Right => path.value_at(slot.time).unwrap(),
            };
            let (b, d) = (strategy.jumps[j].buy[cell], strategy.jumps[j].sell[cell]);
            cash += -s * b + (1.0 - lambda) * s * d;
            shares += b - d;
        }
    }
    out
}

pub fn point_price(market: &Market, theta: usize, w: usize, i: usize) -> f64 {
    let p = market.timeline().points[i];
    let kind = if p.kind == LimitKind::Right { LimitKind::Value } else { p.kind };
    market.price(theta, w).limit_at(p.time, kind).unwrap()
}

pub fn liq(h0: f64, h1: f64, s: f64, lambda: f64) -> f64 {
    if h1 >= 0.0 {
        h0 + (1.0 - lambda) * s * h1
    } else {
        h0 + s * h1
    }
}

/// Robust value of a jump strategy via [`ledger_walk`]; `None` if any
/// liquidation value is negative or the terminal one is not positive.
pub fn oracle_value(strategy: &Strategy, market: &Market, utility: Utility) -> Option<f64> {
    let p = market.tree().probabilities();
    let lambda = market.lambda();
    let mut best = f64::INFINITY;
    for theta in 0..market.num_models() {
        let mut total = 0.0;
        for (w, pw) in p.iter().enumerate() {
            let led = ledger_walk(strategy, market, theta, w);
            for (i, (h0, h1)) in led.iter().enumerate() {
                if liq(*h0, *h1, point_price(market, theta, w, i), lambda) < -1e-12 {
                    return None;
                }
            }
            let last = led.len() - 1;
            let v = liq(led[last].0, led[last].1, point_price(market, theta, w, last), lambda);
            if v <= 0.0 {
                return None;
            }
            total += pw * utility.value(v);
        }
        best = best.min(total);
    }
    Some(best)
}

/// Every slot cell of the market as `(slot, cell)`.
pub fn slot_cells(market: &Market) -> Vec<(usize, usize)> {
    let tl = market.timeline();
    tl.slots
        .iter()
        .enumerate()
        .flat_map(|(j, s)| (0..market.tree().layer(s.layer).len()).map(move |c| (j, c)))
        .collect()
}

fn from_net(market: &Market, x: f64, cells: &[(usize, usize)], net: &[f64]) -> Strategy {
    let mut s = Strategy::no_trade(market, x);
    for (&(j, c), &n) in cells.iter().zip(net) {
        if n >= 0.0 {
            s.jumps[j].buy[c] = n;
        } else {
            s.jumps[j].sell[c] = -n;
        }
    }
    s
}

/// Zooming grid search over the net trade of every slot cell in
/// `[−bound, bound]`: 21 points per axis, re-centred on the best point with
/// a ±2-cell box until the step falls below `1e-7`.
pub fn grid_oracle(market: &Market, utility: Utility, x: f64, bound: f64) -> (f64, Vec<f64>) {
    let cells = slot_cells(market);
    let d = cells.len();
    assert!(d <= 3, "grid oracle supports at most 3 slot cells");
    let mut center = vec![0.0; d];
    let mut half = bound;
    let mut best = (
        oracle_value(&from_net(market, x, &cells, &center), market, utility).unwrap_or(f64::NEG_INFINITY),
        center.clone(),
    );
    let n = 21usize;
    loop {
        let step = 2.0 * half / (n - 1) as f64;
        let total = n.pow(d as u32);
        let mut point = vec![0.0; d];
        for idx in 0..total {
            let mut r = idx;
            for k in 0..d {
                point[k] = center[k] - half + step * (r % n) as f64;
                r /= n;
            }
            if let Some(v) = oracle_value(&from_net(market, x, &cells, &point), market, utility) {
                if v > best.0 {
                    best = (v, point.clone());
                }
            }
        }
        center = best.1.clone();
        if step < 1e-7 {
            return best;
        }
        half = 2.0 * step;
    }
}

/// Exhaustive optional-sampling check on the timeline: for every node
/// `(point, cell)` and every stopping time `τ` that starts there,
/// `E[X_τ 1_cell] ≤ X_node P(cell) + tol`. `values[i][w]` is `X` at point
/// `i` in scenario `w`.
pub fn brute_force_supermartingale(values: &[Vec<f64>], market: &Market, tol: f64) -> bool {
    let tree = market.tree();
    let tl = market.timeline();
    let p = tree.probabilities();
    // all E[X_τ 1_cell] over stopping times from (i, scenarios in cell)
    fn enumerate(
        i: usize,
        cell: &[usize],
        values: &[Vec<f64>],
        market: &Market,
        p: &[f64],
    ) -> Vec<f64> {
        let tl = market.timeline();
        let tree = market.tree();
        let stop: f64 = cell.iter().map(|&w| p[w] * values[i][w]).sum();
        let mut out = vec![stop];
        if i + 1 < tl.points.len() {
            let next = tree.layer(tl.points[i + 1].layer);
            let mut children: Vec<Vec<usize>> = Vec::new();
            for &w in cell {
                let c = next.cell_of(w);
                match children.iter_mut().find(|ch| next.cell_of(ch[0]) == c) {
                    Some(ch) => ch.push(w),
                    None => children.push(vec![w]),
                }
            }
            let mut sums = vec![0.0];
            for ch in &children {
                let vals = enumerate(i + 1, ch, values, market, p);
                sums = sums.iter().flat_map(|a| vals.iter().map(move |b| a + b)).collect();
            }
            out.extend(sums);
        }
        out
    }
    for (i, pt) in tl.points.iter().enumerate() {
        for cell in tree.layer(pt.layer).cells() {
            let here: f64 = cell.iter().map(|&w| p[w] * values[i][w]).sum();
            let all = enumerate(i, cell, values, market, p);
            if all.iter().any(|&v| v > here + tol) {
                return false;
            }
        }
    }
    true
}

/// Vertices of the closed price-system polytope, parametrised by the
/// terminal densities `(Z0_T, Z1_T)` per terminal cell, with earlier layers
/// as conditional means. Returns `max E[g Z0_T]` over vertices.
pub fn vertex_dual_max(market: &Market, theta: usize, claim: &[f64]) -> f64 {
    let tree = market.tree();
    let p = tree.probabilities();
    let kt = tree.terminal_layer();
    let term = tree.layer(kt);
    let nt = term.len();
    let dim = 2 * nt;
    let pc = |layer: usize, c: usize| tree.layer(layer).cell(c).iter().map(|&w| p[w]).sum::<f64>();
    // conditional-mean weights of terminal cells in (layer, cell)
    let weights = |layer: usize, c: usize| -> Vec<f64> {
        let mut wts = vec![0.0; nt];
        let total = pc(layer, c);
        for &w in tree.layer(layer).cell(c) {
            wts[term.cell_of(w)] += p[w] / total;
        }
        wts
    };
    let mut ineq: Vec<(Vec<f64>, f64)> = Vec::new();
    let tl = market.timeline();
    for (i, pt) in tl.points.iter().enumerate() {
        if pt.kind == LimitKind::Right {
            continue;
        }
        for (c, cell) in tree.layer(pt.layer).cells().iter().enumerate() {
            let s = point_price(market, theta, cell[0], i);
            let wts = weights(pt.layer, c);
            let lam = market.lambda();
            let mut z0 = vec![0.0; dim];
            // Z0 ≥ 0 on coarser layers follows from the terminal layer
            let mut lower = vec![0.0; dim];
            let mut upper = vec![0.0; dim];
            for k in 0..nt {
                z0[k] = wts[k];
                lower[k] = -(1.0 - lam) * s * wts[k];
                lower[nt + k] = wts[k];
                upper[k] = s * wts[k];
                upper[nt + k] = -wts[k];
            }
            if pt.layer == kt {
                ineq.push((z0, 0.0));
            }
            ineq.push((lower, 0.0));
            ineq.push((upper, 0.0));
        }
    }
    // normalisation row: Σ_k P(k) Z0_T(k) = 1
    let mut norm = vec![0.0; dim];
    for k in 0..nt {
        norm[k] = pc(kt, k);
    }
    let objective: Vec<f64> = (0..dim)
        .map(|k| if k < nt { term.cell(k).iter().map(|&w| p[w] * claim[w]).sum() } else { 0.0 })
        .collect();
    let need = dim - 1;
    let m = ineq.len();
    let mut best = f64::NEG_INFINITY;
    let mut idx: Vec<usize> = (0..need).collect();
    loop {
        let mut a = DMatrix::zeros(dim, dim);
        let mut b = DVector::zeros(dim);
        for (r, &k) in idx.iter().enumerate() {
            for c in 0..dim {
                a[(r, c)] = ineq[k].0[c];
            }
            b[r] = ineq[k].1;
        }
        for c in 0..dim {
            a[(need, c)] = norm[c];
        }
        b[need] = 1.0;
        if let Some(z) = a.clone().lu().solve(&b) {
            let residual = (&a * &z - &b).amax();
            let feasible = residual < 1e-9
                && ineq.iter().all(|(row, rhs)| {
                    row.iter().zip(z.iter()).map(|(u, v)| u * v).sum::<f64>() >= rhs - 1e-9
                });
            if feasible {
                let v: f64 = objective.iter().zip(z.iter()).map(|(u, v)| u * v).sum();
                best = best.max(v);
            }
        }
        // next combination
        let mut i = need;
        loop {
            if i == 0 {
                return best;
            }
            i -= 1;
            if idx[i] < m - need + i {
                idx[i] += 1;
                for j in i + 1..need {
                    idx[j] = idx[j - 1] + 1;
                }
                break;
            }
        }
    }
}

/// One period ending in an event at the horizon: 2–3 scenarios, 1–3
/// models, two slot cells.
pub fn one_period_market(rng: &mut impl Rng, lambda: f64, lambda_prime: f64) -> Market {
    let n = rng.gen_range(2..=3);
    let mut p: Vec<f64> = (0..n).map(|_| rng.gen_range(0.2..1.0)).collect();
    let total: f64 = p.iter().sum();
    p.iter_mut().for_each(|v| *v /= total);
    let labels = (0..n).map(|i| format!("w{i}")).collect();
    let tree = ScenarioTree::new(labels, p, 1.0, Partition::trivial(n), vec![(1.0, Partition::discrete(n))]).unwrap();
    let models = rng.gen_range(1..=3);
    let family = gen::random_family(rng, &tree, models, lambda, lambda_prime);
    Market::new(tree, family).unwrap()
}

/// A single deterministic scenario with one event strictly before a
/// non-event horizon: 1–3 models, three slot cells.
pub fn deterministic_market(rng: &mut impl Rng, lambda: f64, lambda_prime: f64) -> Market {
    let t1 = rng.gen_range(0.2..0.8);
    let tree = ScenarioTree::new(vec!["w".into()], vec![1.0], 1.0, Partition::trivial(1), vec![(t1, Partition::trivial(1))]).unwrap();
    let models = rng.gen_range(1..=3);
    let family = gen::random_family(rng, &tree, models, lambda, lambda_prime);
    Market::new(tree, family).unwrap()
}

/// A market whose price is identically one in every model and scenario.
pub fn unit_price_market(lambda: f64) -> Market {
    let tree = ScenarioTree::new(
        vec!["a".into(), "b".into()],
        vec![0.5, 0.5],
        1.0,
        Partition::trivial(2),
        vec![(0.5, Partition::discrete(2))],
    )
    .unwrap();
    let one = LadlagPath::constant(1.0, 1.0).unwrap();
    let family = ModelFamily::new(vec!["m".into()], vec![vec![one.clone(), one]], lambda, None).unwrap();
    Market::new(tree, family).unwrap()
}

/// The box `x (1 + 2/(λ − λ′)) / min S` containing every admissible net
/// trade.
pub fn trade_bound(market: &Market, x: f64, lambda_prime: f64) -> f64 {
    let mut min_s = f64::INFINITY;
    for theta in 0..market.num_models() {
        for w in 0..market.num_scenarios() {
            for i in 0..market.timeline().points.len() {
                min_s = min_s.min(point_price(market, theta, w, i));
            }
        }
    }
    x * (1.0 + 2.0 / (market.lambda() - lambda_prime)) / min_s
}

/// Seeded admissible sequence of length `len` from endowment `x`: periodic
/// or geometrically converging convex combinations of three admissible
/// strategies.
pub fn komlos_sequence(rng: &mut impl Rng, market: &Market, x: f64, len: usize) -> Vec<Strategy> {
    let shape = gen::StrategyShape { rates: rng.gen_bool(0.5), liquidate: false };
    let base: Vec<Strategy> = (0..3).map(|_| gen::random_strategy(rng, market, x, shape).unwrap()).collect();
    let kind = rng.gen_range(0..3);
    let r: f64 = rng.gen_range(0.1..0.5);
    let period = rng.gen_range(2..=3);
    (0..len)
        .map(|n| {
            let w: [f64; 3] = match kind {
                0 => {
                    let mut w = [0.0; 3];
                    w[n % period] = 1.0;
                    w
                }
                1 => {
                    let g = r.powi(n as i32);
                    [(1.0 - g) * 0.5, (1.0 - g) * 0.5, g]
                }
                _ => {
                    let g = r.powi(n as i32) * if n % 2 == 0 { 1.0 } else { -1.0 };
                    [0.5 + 0.5 * g, 0.5 - 0.5 * g, 0.0]
                }
            };
            let terms: Vec<(f64, &Strategy)> = w.iter().copied().zip(base.iter()).collect();
            Strategy::linear_combination(&terms).unwrap()
        })
        .collect()
}

/// Superhedging price with terminal dominance only, dropping every
/// intermediate liquidation constraint.
pub fn terminal_only_price(market: &Market, theta: usize, claim: &[f64]) -> f64 {
    let nv = market.num_jump_vars();
    let lambda = market.lambda();
    let mut lp = LinearProgram::new(nv + 1);
    lp.objective[nv] = -1.0;
    for (w, &g) in claim.iter().enumerate() {
        let form = market.linear_forms(theta, w).pop().unwrap();
        for c in [1.0 - lambda, 1.0] {
            let mut coeffs: Vec<(usize, f64)> = (0..nv).map(|j| (j, form.h0[j] + c * form.price * form.h1[j])).collect();
            coeffs.push((nv, 1.0));
            lp.add(coeffs, Sense::Ge, g);
        }
    }
    match lp.solve_exact().unwrap() {
        LpOutcome::Optimal { x, .. } => x[nv],
        other => panic!("terminal-only program failed: {other:?}"),
    }
}

/// A claim constant on the terminal cells, drawn from `[0, 3)`.
pub fn terminal_claim(rng: &mut impl Rng, market: &Market) -> Vec<f64> {
    let term = market.tree().layer(market.tree().terminal_layer());
    let per_cell: Vec<f64> = (0..term.len()).map(|_| rng.gen_range(0.0..3.0)).collect();
    (0..market.num_scenarios()).map(|w| per_cell[term.cell_of(w)]).collect()
}
