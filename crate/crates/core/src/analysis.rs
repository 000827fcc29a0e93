//! Structural verifiers: deflated value processes and the optional strong
//! supermartingale property, variation bounds under a cheaper consistent
//! price system, and superhedging prices with their dual bounds.

use serde::Serialize;

use crate::cps::{max_dual_value, verify_cps, ConsistentPriceSystem};
use crate::integration::integrate;
use crate::lp::{LinearProgram, LpOutcome, Sense};
use crate::market::{
    bond_ledger, is_admissible, share_parts, share_path, terminal_liquidation_value, Market, Strategy,
    DEFAULT_TOL,
};
use crate::paths::{LadlagPath, LimitKind, PathEvent};
use crate::{Error, Result};

/// Builds a path from its values at every timeline point and its
/// per-interval slope and curvature.
fn path_from_points(
    market: &Market,
    values: &[f64],
    slopes: Vec<f64>,
    curvatures: Vec<f64>,
) -> LadlagPath {
    let tl = market.timeline();
    let tree = market.tree();
    let at = |t: f64, kind: LimitKind| -> f64 {
        let i = tl
            .points
            .iter()
            .position(|p| p.time == t && p.kind == kind)
            .expect("point exists");
        values[i]
    };
    let initial = at(0.0, LimitKind::Value);
    let initial_right = at(0.0, LimitKind::Right) - initial;
    let events = tree
        .event_times()
        .iter()
        .map(|&t| {
            let v = at(t, LimitKind::Value);
            let right = if t < tree.horizon() {
                at(t, LimitKind::Right) - v
            } else {
                0.0
            };
            PathEvent::new(t, v - at(t, LimitKind::Left), right)
        })
        .collect();
    LadlagPath::with_curvatures(tree.horizon(), initial, initial_right, events, slopes, curvatures)
        .expect("valid process")
}

/// `Ṽ = H^0 + H^1 S̃` under the price system's shadow price, in one scenario.
pub fn shadow_value_process(
    strategy: &Strategy,
    cps: &ConsistentPriceSystem,
    market: &Market,
    scenario: usize,
) -> LadlagPath {
    weighted_process(strategy, cps, market, scenario, false)
}

/// `X = Z^0 (H^0 + H^1 S̃) = Z^0 H^0 + Z^1 H^1`, in one scenario.
pub fn deflated_value_process(
    strategy: &Strategy,
    cps: &ConsistentPriceSystem,
    market: &Market,
    scenario: usize,
) -> LadlagPath {
    weighted_process(strategy, cps, market, scenario, true)
}

fn weighted_process(
    strategy: &Strategy,
    cps: &ConsistentPriceSystem,
    market: &Market,
    scenario: usize,
    deflate: bool,
) -> LadlagPath {
    let h0 = bond_ledger(strategy, market, cps.theta, scenario);
    let h1 = share_path(strategy, market, scenario);
    let weights = |layer: usize| -> (f64, f64) {
        let z0 = cps.z0_at(market, layer, scenario);
        let z1 = cps.z1_at(market, layer, scenario);
        if deflate {
            (z0, z1)
        } else {
            (1.0, z1 / z0)
        }
    };
    let values: Vec<f64> = market
        .timeline()
        .points
        .iter()
        .map(|p| {
            let (a, b) = weights(p.layer);
            a * h0.limit_at(p.time, p.kind).expect("in range") + b * h1.limit_at(p.time, p.kind).expect("in range")
        })
        .collect();
    let mut slopes = Vec::new();
    let mut curvatures = Vec::new();
    for (j, iv) in market.timeline().intervals.iter().enumerate() {
        let (a, b) = weights(iv.layer);
        let (s0, s1) = (h0.segment(j), h1.segment(j));
        slopes.push(a * s0.slope + b * s1.slope);
        curvatures.push(a * s0.curvature + b * s1.curvature);
    }
    path_from_points(market, &values, slopes, curvatures)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SupermartingaleReport {
    pub holds: bool,
    /// Smallest one-step slack `X_σ − E[X_τ | F_σ]`, or `−X′` on intervals.
    pub worst_slack: f64,
}

/// One-step check of `E[X_τ | F_σ] ≤ X_σ` along `0 → 0+ → t_1− → t_1 → …`,
/// plus monotonicity between events. `x` holds one path per scenario.
pub fn check_optional_strong_supermartingale(
    x: &[LadlagPath],
    market: &Market,
    tol: f64,
) -> Result<SupermartingaleReport> {
    let tree = market.tree();
    let tl = market.timeline();
    if x.len() != tree.num_scenarios() {
        return Err(Error::Contract("one path per scenario is required".into()));
    }
    let n = tree.num_scenarios();
    let mut vals = vec![vec![0.0; n]; tl.points.len()];
    for (i, p) in tl.points.iter().enumerate() {
        let part = tree.layer(p.layer);
        for w in 0..n {
            vals[i][w] = x[w].limit_at(p.time, p.kind)?;
        }
        for cell in part.cells() {
            let v0 = vals[i][cell[0]];
            if cell
                .iter()
                .any(|&w| (vals[i][w] - v0).abs() > 1e-9 * v0.abs().max(1.0))
            {
                return Err(Error::Contract(format!(
                    "process is not adapted at time {} ({:?})",
                    p.time, p.kind
                )));
            }
        }
    }
    let p = tree.probabilities();
    let mut worst = f64::INFINITY;
    for i in 0..tl.points.len() - 1 {
        let (a, b) = (tl.points[i], tl.points[i + 1]);
        if a.time < b.time {
            let j = tl
                .intervals
                .iter()
                .position(|iv| iv.start == a.time && iv.end == b.time)
                .expect("interval between points");
            for path in x {
                let seg = path.segment(j);
                worst = worst.min(-seg.derivative(seg.start)).min(-seg.derivative(seg.end));
            }
        }
        let coarse = tree.layer(a.layer);
        for cell in coarse.cells() {
            let pc: f64 = cell.iter().map(|&w| p[w]).sum();
            let mean = cell.iter().map(|&w| p[w] * vals[i + 1][w]).sum::<f64>() / pc;
            worst = worst.min(vals[i][cell[0]] - mean);
        }
    }
    Ok(SupermartingaleReport {
        holds: worst >= -tol,
        worst_slack: worst,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VariationReport {
    pub theta: usize,
    pub lambda: f64,
    pub lambda_prime: f64,
    pub initial_cash: f64,
    /// `E_Q[H^{0,↑}_T]`.
    pub expected_up: f64,
    /// `E_Q[H^{0,↑}_T + H^{0,↓}_T]`.
    pub expected_total: f64,
    /// `x / (λ − λ′)`.
    pub bound_up: f64,
    /// `x (1 + 2/(λ − λ′))`.
    pub bound_total: f64,
    /// `E_Q` of the cheaper agent's surplus `(λ − λ′)/(1 − λ) · H^{0,↑}_T`.
    pub expected_surplus: f64,
    pub pass: bool,
}

/// Checks the a-priori bounds on the bond account's terminal variation for
/// an admissible, liquidated strategy, under the measure of a CPS at the
/// cheaper cost level `λ′ < λ`.
pub fn variation_bounds(
    strategy: &Strategy,
    cps: &ConsistentPriceSystem,
    market: &Market,
    lambda_prime: f64,
    tol: f64,
) -> Result<VariationReport> {
    let lambda = market.lambda();
    if !(lambda_prime > 0.0 && lambda_prime < lambda) {
        return Err(Error::Contract(format!(
            "reference cost {lambda_prime} must lie in (0, {lambda})"
        )));
    }
    if !verify_cps(cps, market, lambda_prime, DEFAULT_TOL) {
        return Err(Error::Contract("price system is not consistent at the reference cost".into()));
    }
    let adm = is_admissible(strategy, market, tol);
    if !adm.admissible {
        return Err(Error::Contract(format!(
            "strategy is not admissible: {:?}",
            adm.violation
        )));
    }
    let x = strategy.initial_cash;
    let theta = cps.theta;
    let q = cps.measure(market);
    let mut expected_up = 0.0;
    let mut expected_total = 0.0;
    for (w, qw) in q.iter().enumerate() {
        let (up, down) = share_parts(strategy, market, w);
        let h1_t = up.terminal_value() - down.terminal_value();
        if h1_t.abs() > 1e-9 * up.terminal_value().max(1.0) {
            return Err(Error::Contract(format!(
                "strategy is not liquidated: H1_T = {h1_t} in scenario {w}"
            )));
        }
        let s = market.price(theta, w);
        let t = market.tree().horizon();
        let cash_in = (1.0 - lambda) * integrate(s, &down, 0.0, t)?;
        let cash_out = integrate(s, &up, 0.0, t)?;
        expected_up += qw * cash_in;
        expected_total += qw * (cash_in + cash_out);
    }
    let bound_up = x / (lambda - lambda_prime);
    let bound_total = x * (1.0 + 2.0 / (lambda - lambda_prime));
    Ok(VariationReport {
        theta,
        lambda,
        lambda_prime,
        initial_cash: x,
        expected_up,
        expected_total,
        bound_up,
        bound_total,
        expected_surplus: (lambda - lambda_prime) / (1.0 - lambda) * expected_up,
        pass: expected_up <= bound_up + tol && expected_total <= bound_total + tol,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Superhedge {
    pub price: f64,
    pub witness: Strategy,
}

fn check_claim(market: &Market, claim: &[f64]) -> Result<()> {
    if claim.len() != market.num_scenarios() {
        return Err(Error::Contract("claim needs one payoff per scenario".into()));
    }
    if claim.iter().any(|g| !(g.is_finite() && *g >= 0.0)) {
        return Err(Error::Contract("claim payoffs must be finite and >= 0".into()));
    }
    Ok(())
}

/// Smallest endowment from which an admissible jump strategy reaches
/// `V^liq_T ≥ g` in model `theta`, with the strategy.
pub fn superhedge_price(claim: &[f64], market: &Market, theta: usize) -> Result<Superhedge> {
    check_claim(market, claim)?;
    if theta >= market.num_models() {
        return Err(Error::Domain(format!("model index {theta} out of range")));
    }
    let nv = market.num_jump_vars();
    let lambda = market.lambda();
    let mut lp = LinearProgram::new(nv + 1);
    let xv = nv;
    lp.objective[xv] = -1.0;
    let terminal = market.timeline().terminal_point();
    for w in 0..market.num_scenarios() {
        for (i, form) in market.linear_forms(theta, w).iter().enumerate() {
            let rhs = if i == terminal { claim[w] } else { 0.0 };
            for c in [1.0 - lambda, 1.0] {
                let mut coeffs: Vec<(usize, f64)> = (0..nv)
                    .map(|j| (j, form.h0[j] + c * form.price * form.h1[j]))
                    .filter(|&(_, a)| a != 0.0)
                    .collect();
                coeffs.push((xv, 1.0));
                lp.add(coeffs, Sense::Ge, rhs);
            }
        }
    }
    let build = |x: &[f64]| Superhedge {
        price: x[xv],
        witness: Strategy::from_vars(market, x[xv], &x[..nv]),
    };
    if let Ok(LpOutcome::Optimal { x, .. }) = lp.solve_f64() {
        let sh = build(&x);
        if verify_superhedge(&sh, claim, market, theta, DEFAULT_TOL) {
            return Ok(sh);
        }
    }
    match lp.solve_exact()? {
        LpOutcome::Optimal { x, .. } => Ok(build(&x)),
        other => Err(Error::Lp(format!("superhedging program failed: {other:?}"))),
    }
}

/// Checks that a superhedging witness is admissible in model `theta` and
/// dominates the claim at the horizon.
pub fn verify_superhedge(sh: &Superhedge, claim: &[f64], market: &Market, theta: usize, tol: f64) -> bool {
    let single = market.single_model(theta);
    is_admissible(&sh.witness, &single, tol).admissible
        && (0..market.num_scenarios())
            .all(|w| terminal_liquidation_value(&sh.witness, &single, 0, w) >= claim[w] - tol)
}

/// `max E[g Z^0_T]` over the supplied duals, each verified at the market's
/// cost level.
pub fn dual_bound(
    claim: &[f64],
    market: &Market,
    theta: usize,
    duals: &[ConsistentPriceSystem],
) -> Result<f64> {
    check_claim(market, claim)?;
    let p = market.tree().probabilities();
    let mut best = f64::NEG_INFINITY;
    for (i, d) in duals.iter().enumerate() {
        if d.theta != theta || !verify_cps(d, market, market.lambda(), DEFAULT_TOL) {
            return Err(Error::Contract(format!("dual {i} is not a verified price system")));
        }
        let v: f64 = (0..claim.len())
            .map(|w| p[w] * claim[w] * d.terminal_density(market, w))
            .sum();
        best = best.max(v);
    }
    Ok(best)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DualityReport {
    pub primal: f64,
    pub dual: f64,
    pub gap: f64,
}

/// Superhedging price against the maximal dual value over the closed CPS
/// polytope.
pub fn duality_gap(claim: &[f64], market: &Market, theta: usize) -> Result<(DualityReport, Superhedge, ConsistentPriceSystem)> {
    let sh = superhedge_price(claim, market, theta)?;
    let (dual, vertex) = max_dual_value(market, theta, market.lambda(), claim)?;
    Ok((
        DualityReport {
            primal: sh.price,
            dual,
            gap: sh.price - dual,
        },
        sh,
        vertex,
    ))
}
