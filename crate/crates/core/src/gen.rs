//! Seeded random instances: scenario trees, model families that admit a
//! consistent price system, and admissible strategies.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::market::{
    is_admissible, share_parts, Market, ModelFamily, Partition, ScenarioTree, Strategy,
    Trades, DEFAULT_TOL,
};
use crate::paths::{LadlagPath, PathEvent};
use crate::Result;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn split(rng: &mut impl Rng, coarse: &Partition, n: usize, p_split: f64) -> Partition {
    let mut cells = Vec::new();
    for cell in coarse.cells() {
        if cell.len() > 1 && rng.gen_bool(p_split) {
            let mut c = cell.to_vec();
            c.shuffle(rng);
            let cut = rng.gen_range(1..c.len());
            let (mut a, mut b) = (c[..cut].to_vec(), c[cut..].to_vec());
            a.sort_unstable();
            b.sort_unstable();
            cells.push(a);
            cells.push(b);
        } else {
            cells.push(cell.to_vec());
        }
    }
    Partition::new(cells, n).expect("split of a valid partition")
}

/// A tree on `[0, 1]` with `1..=max_events` events, `2..=max_scenarios`
/// scenarios and a trivial root. The horizon is an event with probability
/// one half.
pub fn random_tree(rng: &mut impl Rng, max_events: usize, max_scenarios: usize) -> ScenarioTree {
    let n = rng.gen_range(2..=max_scenarios.max(2));
    let k = rng.gen_range(1..=max_events.max(1));
    let mut weights: Vec<f64> = (0..n).map(|_| rng.gen_range(0.2..1.0)).collect();
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    let mut times: Vec<f64> = (0..k).map(|i| (i as f64 + rng.gen_range(0.1..0.9)) / k as f64).collect();
    if rng.gen_bool(0.5) {
        times[k - 1] = 1.0;
    }
    let root = Partition::trivial(n);
    let mut events = Vec::with_capacity(k);
    let mut prev = root.clone();
    for (i, &t) in times.iter().enumerate() {
        let p_split = if i == k - 1 { 1.0 } else { 0.7 };
        let mut post = split(rng, &prev, n, p_split);
        if i == 0 && post.len() == 1 {
            post = split(rng, &prev, n, 1.0);
        }
        events.push((t, post.clone()));
        prev = post;
    }
    let labels = (0..n).map(|i| format!("w{i}")).collect();
    ScenarioTree::new(labels, weights, 1.0, root, events).expect("generated tree is valid")
}

/// Martingale under `P` on the tree's layers: one value per `[layer][cell]`.
fn random_martingale(rng: &mut impl Rng, tree: &ScenarioTree, spread: f64) -> Vec<Vec<f64>> {
    let p = tree.probabilities();
    let mut out = vec![vec![rng.gen_range(0.5..2.0); tree.layer(0).len()]];
    for k in 1..tree.layers().len() {
        let coarse = tree.layer(k - 1);
        let fine = tree.layer(k);
        let mut vals = vec![0.0; fine.len()];
        for (pc, parent) in coarse.cells().iter().enumerate() {
            let children: Vec<usize> = {
                let mut c: Vec<usize> = parent.iter().map(|&w| fine.cell_of(w)).collect();
                c.dedup();
                c.sort_unstable();
                c.dedup();
                c
            };
            let weight = |c: usize| fine.cell(c).iter().map(|&w| p[w]).sum::<f64>();
            let total: f64 = children.iter().map(|&c| weight(c)).sum();
            let mut eps: Vec<f64> = children.iter().map(|_| rng.gen_range(-spread..spread)).collect();
            let mean: f64 = children.iter().zip(&eps).map(|(&c, e)| weight(c) * e).sum::<f64>() / total;
            eps.iter_mut().for_each(|e| *e -= mean);
            let lo = eps.iter().copied().fold(0.0, f64::min);
            if lo < -0.9 {
                let f = 0.9 / -lo;
                eps.iter_mut().for_each(|e| *e *= f);
            }
            for (&c, e) in children.iter().zip(&eps) {
                vals[c] = out[k - 1][pc] * (1.0 + e);
            }
        }
        out.push(vals);
    }
    out
}

/// A family of `models` price models, each of the form `S = S̃ · u` with a
/// `P`-martingale `S̃` and `u ∈ (1, 1/(1 − λ′))`, so each model admits a
/// consistent price system at `λ′`.
pub fn random_family(
    rng: &mut impl Rng,
    tree: &ScenarioTree,
    models: usize,
    lambda: f64,
    lambda_prime: f64,
) -> ModelFamily {
    let n = tree.num_scenarios();
    let a = 1.0 / (1.0 - lambda_prime) - 1.0;
    let horizon = tree.horizon();
    let times = tree.event_times();
    let mut paths = Vec::with_capacity(models);
    for _ in 0..models {
        let mart = random_martingale(rng, tree, 0.5);
        // u per (point, cell); points: 0, then (t_k−, t_k) per event, then T
        let mut factor = |layer: usize| -> Vec<f64> {
            (0..tree.layer(layer).len()).map(|_| 1.0 + a * rng.gen_range(0.1..0.9)).collect()
        };
        let u0 = factor(0);
        let per_event: Vec<(Vec<f64>, Vec<f64>)> =
            (1..=times.len()).map(|k| (factor(k - 1), factor(k))).collect();
        let u_t = factor(tree.terminal_layer());
        let value = |layer: usize, u: &[f64], w: usize| {
            let c = tree.layer(layer).cell_of(w);
            mart[layer][c] * u[c]
        };
        let row = (0..n)
            .map(|w| {
                let s0 = value(0, &u0, w);
                let mut events = Vec::new();
                let mut slopes = Vec::new();
                let (mut prev_t, mut prev_v) = (0.0, s0);
                for (i, &t) in times.iter().enumerate() {
                    let k = i + 1;
                    let left = value(k - 1, &per_event[i].0, w);
                    let at = value(k, &per_event[i].1, w);
                    slopes.push((left - prev_v) / (t - prev_t));
                    events.push(PathEvent::left(t, at - left));
                    prev_t = t;
                    prev_v = at;
                }
                if !tree.horizon_is_event() {
                    let end = value(tree.terminal_layer(), &u_t, w);
                    slopes.push((end - prev_v) / (horizon - prev_t));
                }
                LadlagPath::new(horizon, s0, 0.0, events, slopes).expect("generated path is valid")
            })
            .collect();
        paths.push(row);
    }
    let labels = (0..models).map(|i| format!("m{i}")).collect();
    ModelFamily::new(labels, paths, lambda, Some(lambda_prime)).expect("generated family is valid")
}

pub fn random_market(
    rng: &mut impl Rng,
    max_events: usize,
    max_scenarios: usize,
    models: usize,
    lambda: f64,
    lambda_prime: f64,
) -> Market {
    let tree = random_tree(rng, max_events, max_scenarios);
    let family = random_family(rng, &tree, models, lambda, lambda_prime);
    Market::new(tree, family).expect("generated market is valid")
}

/// One scenario whose price rises deterministically from 1 to 2: an
/// arbitrage for any cost below one half.
pub fn rising_price_market(lambda: f64) -> Market {
    let tree = ScenarioTree::new(
        vec!["w".into()],
        vec![1.0],
        1.0,
        Partition::trivial(1),
        vec![(1.0, Partition::trivial(1))],
    )
    .expect("valid tree");
    let path = LadlagPath::new(1.0, 1.0, 0.0, vec![PathEvent::left(1.0, 0.0)], vec![1.0]).expect("valid path");
    let family = ModelFamily::new(vec!["m".into()], vec![vec![path]], lambda, None).expect("valid family");
    Market::new(tree, family).expect("valid market")
}

pub fn scale_increments(strategy: &Strategy, alpha: f64) -> Strategy {
    let mut out = strategy.clone();
    for t in out.jumps.iter_mut().chain(out.rates.iter_mut()) {
        t.buy.iter_mut().chain(t.sell.iter_mut()).for_each(|v| *v *= alpha);
    }
    out
}

/// Closes the share position at the last trading slot. Rates after that
/// slot are dropped.
pub fn liquidate(strategy: &Strategy, market: &Market) -> Strategy {
    let tl = market.timeline();
    let last = tl.slots.len() - 1;
    let slot = tl.slots[last];
    let mut out = strategy.clone();
    out.jumps[last] = Trades::zeros(market.tree().layer(slot.layer).len());
    for (iv, r) in tl.intervals.iter().zip(out.rates.iter_mut()) {
        if iv.start >= slot.time {
            *r = Trades::zeros(r.buy.len());
        }
    }
    let layer = market.tree().layer(slot.layer);
    for (c, cell) in layer.cells().iter().enumerate() {
        let (up, down) = share_parts(&out, market, cell[0]);
        let pos = up.terminal_value() - down.terminal_value();
        if pos > 0.0 {
            out.jumps[last].sell[c] = pos;
        } else {
            out.jumps[last].buy[c] = -pos;
        }
    }
    out
}

/// Supremum of `α` with `α · increments` admissible, or `None` when every
/// scale is admissible.
pub fn max_admissible_scale(strategy: &Strategy, market: &Market) -> Option<f64> {
    let ok = |a: f64| is_admissible(&scale_increments(strategy, a), market, 0.0).admissible;
    let mut hi = 1.0;
    let mut n = 0;
    while ok(hi) {
        hi *= 2.0;
        n += 1;
        if n > 80 {
            return None;
        }
    }
    let mut lo = 0.0;
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if ok(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(lo)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StrategyShape {
    pub rates: bool,
    pub liquidate: bool,
}

/// A random admissible strategy from endowment `x`, scaled to a random
/// fraction of its admissibility limit.
pub fn random_strategy(rng: &mut impl Rng, market: &Market, x: f64, shape: StrategyShape) -> Result<Strategy> {
    let mut s = Strategy::no_trade(market, x);
    let mut fill = |t: &mut Trades, p: f64| {
        for c in 0..t.buy.len() {
            if rng.gen_bool(p) {
                t.buy[c] = rng.gen_range(0.0..1.0);
            }
            if rng.gen_bool(p) {
                t.sell[c] = rng.gen_range(0.0..1.0);
            }
        }
    };
    s.jumps.iter_mut().for_each(|t| fill(t, 0.5));
    if shape.rates {
        s.rates.iter_mut().for_each(|t| fill(t, 0.3));
    }
    if shape.liquidate {
        s = liquidate(&s, market);
    }
    let alpha = match max_admissible_scale(&s, market) {
        Some(a) => a * rng.gen_range(0.1..0.99),
        None => 1.0,
    };
    let out = scale_increments(&s, alpha);
    debug_assert!(is_admissible(&out, market, DEFAULT_TOL).admissible);
    out.validate(market)?;
    Ok(out)
}
