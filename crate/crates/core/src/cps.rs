//! Consistent price systems on finite trees.
//!
//! A CPS is stored as one pair `(Z0, Z1)` per information layer and cell.
//! The processes are piecewise constant between events with left jumps only,
//! so the value at `t_k` and the left limit at `t_{k+1}` both use layer `k`.
//! On a finite tree with a finite horizon every local martingale is a true
//! martingale, so local and global consistency coincide.

use serde::{Deserialize, Serialize};

use crate::lp::{LinearProgram, LpOutcome, Sense};
use crate::market::{Market, DEFAULT_TOL};
use crate::paths::LimitKind;
use crate::{Error, Result};

pub const DEFAULT_DELTA: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConsistentPriceSystem {
    pub theta: usize,
    pub lambda: f64,
    pub delta: f64,
    /// `z0[k][c]` for layer `k`, cell `c`.
    pub z0: Vec<Vec<f64>>,
    pub z1: Vec<Vec<f64>>,
}

impl ConsistentPriceSystem {
    pub fn z0_at(&self, market: &Market, layer: usize, scenario: usize) -> f64 {
        self.z0[layer][market.tree().layer(layer).cell_of(scenario)]
    }

    pub fn z1_at(&self, market: &Market, layer: usize, scenario: usize) -> f64 {
        self.z1[layer][market.tree().layer(layer).cell_of(scenario)]
    }

    /// `S̃ = Z1 / Z0` at a layer.
    pub fn shadow_price(&self, market: &Market, layer: usize, scenario: usize) -> f64 {
        self.z1_at(market, layer, scenario) / self.z0_at(market, layer, scenario)
    }

    /// `(Z0, Z1)` at `(t, kind)`; right limits equal values.
    pub fn at(&self, market: &Market, t: f64, kind: LimitKind, scenario: usize) -> (f64, f64) {
        let layer = market.tree().layer_at(t, kind);
        (self.z0_at(market, layer, scenario), self.z1_at(market, layer, scenario))
    }

    pub fn terminal_density(&self, market: &Market, scenario: usize) -> f64 {
        self.z0_at(market, market.tree().terminal_layer(), scenario)
    }

    /// `q_ω = p_ω · Z0_T(ω)`.
    pub fn measure(&self, market: &Market) -> Vec<f64> {
        market
            .tree()
            .probabilities()
            .iter()
            .enumerate()
            .map(|(w, p)| p * self.terminal_density(market, w))
            .collect()
    }

    /// `(cZ0, cZ1)` renormalised so that `E[Z0_0] = 1` again.
    pub fn scaled(&self, market: &Market, c: f64) -> Self {
        let root: f64 = (0..self.z0[0].len())
            .map(|cell| market.tree().cell_probability(0, cell) * c * self.z0[0][cell])
            .sum();
        let f = c / root;
        ConsistentPriceSystem {
            z0: self.z0.iter().map(|l| l.iter().map(|v| v * f).collect()).collect(),
            z1: self.z1.iter().map(|l| l.iter().map(|v| v * f).collect()).collect(),
            ..self.clone()
        }
    }
}

/// Variable layout of the CPS polytope.
#[derive(Clone, Debug)]
pub struct CpsLayout {
    offsets: Vec<usize>,
    pub num_vars: usize,
    /// Index of the common spread slack, if present.
    pub slack: Option<usize>,
}

impl CpsLayout {
    pub fn z0(&self, layer: usize, cell: usize) -> usize {
        self.offsets[layer] + 2 * cell
    }

    pub fn z1(&self, layer: usize, cell: usize) -> usize {
        self.offsets[layer] + 2 * cell + 1
    }
}

/// Every price observation the spread must bracket: `(layer, cell, S)`.
fn spread_observations(market: &Market, theta: usize) -> Vec<(usize, usize, f64)> {
    let tree = market.tree();
    let mut obs = Vec::new();
    let first = |layer: usize, cell: usize| tree.layer(layer).cell(cell)[0];
    let mut push = |layer: usize, t: f64, kind: LimitKind| {
        for c in 0..tree.layer(layer).len() {
            let s = market
                .price(theta, first(layer, c))
                .limit_at(t, kind)
                .expect("observation inside the horizon");
            obs.push((layer, c, s));
        }
    };
    push(0, 0.0, LimitKind::Value);
    for (i, &t) in tree.event_times().iter().enumerate() {
        push(i, t, LimitKind::Left);
        push(i + 1, t, LimitKind::Value);
    }
    if !tree.horizon_is_event() {
        push(tree.terminal_layer(), tree.horizon(), LimitKind::Value);
    }
    obs
}

/// The polytope of `(Z0, Z1)` with `Z0 ≥ delta` at cost level `lambda`; with
/// `with_slack` a common slack `s ≥ 0` is subtracted from every spread
/// inequality.
pub fn cps_polytope(
    market: &Market,
    theta: usize,
    lambda: f64,
    delta: f64,
    with_slack: bool,
) -> (LinearProgram, CpsLayout) {
    let tree = market.tree();
    let mut offsets = Vec::new();
    let mut n = 0;
    for layer in tree.layers() {
        offsets.push(n);
        n += 2 * layer.len();
    }
    let slack = with_slack.then_some(n);
    let num_vars = n + usize::from(with_slack);
    let layout = CpsLayout {
        offsets,
        num_vars,
        slack,
    };
    let mut lp = LinearProgram::new(num_vars);
    lp.add(
        (0..tree.layer(0).len())
            .map(|c| (layout.z0(0, c), tree.cell_probability(0, c)))
            .collect(),
        Sense::Eq,
        1.0,
    );
    for k in 1..tree.layers().len() {
        let (prev, cur) = (tree.layer(k - 1), tree.layer(k));
        for big in 0..prev.len() {
            let children: Vec<usize> = (0..cur.len())
                .filter(|&c| prev.cell_of(cur.cell(c)[0]) == big)
                .collect();
            for pick in [0usize, 1] {
                let var = |l: usize, c: usize| {
                    if pick == 0 {
                        layout.z0(l, c)
                    } else {
                        layout.z1(l, c)
                    }
                };
                let mut coeffs: Vec<(usize, f64)> = children
                    .iter()
                    .map(|&c| (var(k, c), tree.cell_probability(k, c)))
                    .collect();
                coeffs.push((var(k - 1, big), -tree.cell_probability(k - 1, big)));
                lp.add(coeffs, Sense::Eq, 0.0);
            }
        }
    }
    for (k, layer) in tree.layers().iter().enumerate() {
        for c in 0..layer.len() {
            if delta > 0.0 {
                lp.add(vec![(layout.z0(k, c), 1.0)], Sense::Ge, delta);
            }
        }
    }
    for (k, c, s) in spread_observations(market, theta) {
        let mut lower = vec![(layout.z1(k, c), 1.0), (layout.z0(k, c), -(1.0 - lambda) * s)];
        let mut upper = vec![(layout.z0(k, c), s), (layout.z1(k, c), -1.0)];
        if let Some(sv) = slack {
            lower.push((sv, -1.0));
            upper.push((sv, -1.0));
        }
        lp.add(lower, Sense::Ge, 0.0);
        lp.add(upper, Sense::Ge, 0.0);
    }
    if let Some(sv) = slack {
        lp.objective[sv] = 1.0;
    }
    (lp, layout)
}

fn from_solution(
    market: &Market,
    layout: &CpsLayout,
    x: &[f64],
    theta: usize,
    lambda: f64,
    delta: f64,
) -> ConsistentPriceSystem {
    let tree = market.tree();
    let mut z0 = Vec::new();
    let mut z1 = Vec::new();
    for (k, layer) in tree.layers().iter().enumerate() {
        z0.push((0..layer.len()).map(|c| x[layout.z0(k, c)]).collect());
        z1.push((0..layer.len()).map(|c| x[layout.z1(k, c)]).collect());
    }
    ConsistentPriceSystem {
        theta,
        lambda,
        delta,
        z0,
        z1,
    }
}

fn check_args(market: &Market, theta: usize, lambda: f64, delta: f64) -> Result<()> {
    if theta >= market.num_models() {
        return Err(Error::Domain(format!("model index {theta} out of range")));
    }
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(Error::Domain(format!("cost level must lie in (0, 1), got {lambda}")));
    }
    if !(delta >= 0.0 && delta.is_finite()) {
        return Err(Error::Domain(format!("delta must be >= 0, got {delta}")));
    }
    Ok(())
}

/// A `lambda`-consistent price system for model `theta` with `Z0 ≥ delta`,
/// chosen to maximise the smallest spread slack.
pub fn find_cps(market: &Market, theta: usize, lambda: f64, delta: f64) -> Result<ConsistentPriceSystem> {
    check_args(market, theta, lambda, delta)?;
    let (lp, layout) = cps_polytope(market, theta, lambda, delta, true);
    if let Ok(LpOutcome::Optimal { x, .. }) = lp.solve_f64() {
        let cps = from_solution(market, &layout, &x, theta, lambda, delta);
        if verify_cps(&cps, market, lambda, DEFAULT_TOL) {
            return Ok(cps);
        }
    }
    match lp.solve_exact()? {
        LpOutcome::Optimal { x, .. } => {
            let cps = from_solution(market, &layout, &x, theta, lambda, delta);
            if verify_cps(&cps, market, lambda, DEFAULT_TOL) {
                Ok(cps)
            } else {
                Err(Error::Lp("exact solution failed verification".into()))
            }
        }
        LpOutcome::Infeasible => Err(Error::Infeasible(format!(
            "no consistent price system at cost level {lambda} with Z0 >= {delta} for model {theta}"
        ))),
        LpOutcome::Unbounded => Err(Error::Lp("spread slack is unbounded".into())),
    }
}

/// Independent re-check of normalisation, martingale, positivity and spread
/// constraints within `tol`.
pub fn verify_cps(cps: &ConsistentPriceSystem, market: &Market, lambda: f64, tol: f64) -> bool {
    let tree = market.tree();
    if cps.theta >= market.num_models() || cps.z0.len() != tree.layers().len() || cps.z1.len() != cps.z0.len() {
        return false;
    }
    for (k, layer) in tree.layers().iter().enumerate() {
        if cps.z0[k].len() != layer.len() || cps.z1[k].len() != layer.len() {
            return false;
        }
        if cps.z0[k]
            .iter()
            .chain(&cps.z1[k])
            .any(|v| !v.is_finite())
        {
            return false;
        }
        if cps.z0[k].iter().any(|&z| z < cps.delta - tol) {
            return false;
        }
    }
    let root: f64 = (0..tree.layer(0).len())
        .map(|c| tree.cell_probability(0, c) * cps.z0[0][c])
        .sum();
    if (root - 1.0).abs() > tol {
        return false;
    }
    let p = tree.probabilities();
    for k in 1..tree.layers().len() {
        let prev = tree.layer(k - 1);
        for big in 0..prev.len() {
            let cell = prev.cell(big);
            let pc: f64 = cell.iter().map(|&w| p[w]).sum();
            for z in [&cps.z0, &cps.z1] {
                let mean: f64 = cell
                    .iter()
                    .map(|&w| p[w] * z[k][tree.layer(k).cell_of(w)])
                    .sum();
                let scale = (pc * z[k - 1][big]).abs().max(1.0);
                if (mean - pc * z[k - 1][big]).abs() > tol * scale {
                    return false;
                }
            }
        }
    }
    for (k, c, s) in spread_observations(market, cps.theta) {
        let (z0, z1) = (cps.z0[k][c], cps.z1[k][c]);
        let scale = (s * z0).abs().max(1.0);
        if z1 < (1.0 - lambda) * s * z0 - tol * scale || z1 > s * z0 + tol * scale {
            return false;
        }
    }
    true
}

/// `max E[g · Z0_T]` over the closed CPS polytope (`Z0 ≥ 0`) at cost level
/// `lambda`, with the maximising vertex.
pub fn max_dual_value(
    market: &Market,
    theta: usize,
    lambda: f64,
    claim: &[f64],
) -> Result<(f64, ConsistentPriceSystem)> {
    check_args(market, theta, lambda, 0.0)?;
    let (mut lp, layout) = cps_polytope(market, theta, lambda, 0.0, false);
    let tree = market.tree();
    let k = tree.terminal_layer();
    for (w, (&p, &g)) in tree.probabilities().iter().zip(claim).enumerate() {
        lp.objective[layout.z0(k, tree.layer(k).cell_of(w))] += p * g;
    }
    let solve = |exact: bool| -> Result<LpOutcome<f64>> {
        if exact {
            lp.solve_exact()
        } else {
            lp.solve_f64()
        }
    };
    for exact in [false, true] {
        let outcome = match solve(exact) {
            Ok(o) => o,
            Err(_) if !exact => continue,
            Err(e) => return Err(e),
        };
        match outcome {
            LpOutcome::Optimal { x, value } => {
                let cps = from_solution(market, &layout, &x, theta, lambda, 0.0);
                if verify_cps(&cps, market, lambda, DEFAULT_TOL) || exact {
                    return Ok((value, cps));
                }
            }
            LpOutcome::Infeasible if exact => {
                return Err(Error::Infeasible(format!(
                    "the closed consistent price system polytope is empty at cost level {lambda}"
                )))
            }
            LpOutcome::Unbounded if exact => {
                return Err(Error::Lp("dual objective is unbounded".into()))
            }
            _ => {}
        }
    }
    unreachable!("exact branch always returns")
}
