//! The robust max-min utility problem `sup_H inf_θ E[U(V^liq_T(θ, H))]` on
//! a finite market, and the convex-combination machinery behind the
//! existence of an optimiser.
//!
//! The solver works on the epigraph form `max m` subject to
//! `E[U(V_T(θ, ·))] ≥ m` for every model. Terminal liquidation is made
//! linear with one extra variable `l` per terminal cell (shares sold at the
//! horizon, with `l − H^1_T` bought back), so every constraint is either
//! linear or a concave utility sum, and a log-barrier Newton method follows
//! the central path.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::analysis::variation_bounds;
use crate::cps::{find_cps, ConsistentPriceSystem, DEFAULT_DELTA};
use crate::integration::integrate;
use crate::market::{
    is_admissible, share_parts, terminal_liquidation_value, Market, Strategy, DEFAULT_TOL,
};
use crate::paths::LadlagPath;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Utility {
    Log,
    Power { alpha: f64 },
}

impl Utility {
    pub fn power(alpha: f64) -> Result<Self> {
        if alpha > 0.0 && alpha < 1.0 {
            Ok(Utility::Power { alpha })
        } else {
            Err(Error::Domain(format!("power utility needs alpha in (0, 1), got {alpha}")))
        }
    }

    /// `U(x)` for `x > 0`.
    pub fn value(&self, x: f64) -> f64 {
        match *self {
            Utility::Log => x.ln(),
            Utility::Power { alpha } => x.powf(alpha) / alpha,
        }
    }

    pub fn derivative(&self, x: f64) -> f64 {
        match *self {
            Utility::Log => 1.0 / x,
            Utility::Power { alpha } => x.powf(alpha - 1.0),
        }
    }

    pub fn second_derivative(&self, x: f64) -> f64 {
        match *self {
            Utility::Log => -1.0 / (x * x),
            Utility::Power { alpha } => (alpha - 1.0) * x.powf(alpha - 2.0),
        }
    }

    /// `limsup x U′(x) / U(x)` as `x → ∞`.
    pub fn asymptotic_elasticity(&self) -> f64 {
        match *self {
            Utility::Log => 0.0,
            Utility::Power { alpha } => alpha,
        }
    }

    /// `inf{x > 0 : U(x) ≥ 0}`.
    pub fn zero_crossing(&self) -> f64 {
        match *self {
            Utility::Log => 1.0,
            Utility::Power { .. } => 0.0,
        }
    }

    /// `J(y) = sup_{x>0} (U(x) − x y)` for `y > 0`.
    pub fn conjugate(&self, y: f64) -> f64 {
        match *self {
            Utility::Log => -y.ln() - 1.0,
            Utility::Power { alpha } => (1.0 - alpha) / alpha * y.powf(alpha / (alpha - 1.0)),
        }
    }
}

/// `min_θ Σ_ω p_ω U(V^liq_T(θ, ω))` with the lowest minimising model index.
pub fn robust_value(strategy: &Strategy, market: &Market, utility: Utility) -> Result<(f64, usize)> {
    let p = market.tree().probabilities();
    let mut best = (f64::INFINITY, 0);
    for theta in 0..market.num_models() {
        let mut total = 0.0;
        for (w, pw) in p.iter().enumerate() {
            let v = terminal_liquidation_value(strategy, market, theta, w);
            if !(v > 0.0) {
                return Err(Error::NonPositiveWealth {
                    theta,
                    scenario: w,
                    value: v,
                });
            }
            total += pw * utility.value(v);
        }
        if total < best.0 {
            best = (total, theta);
        }
    }
    Ok(best)
}

/// Expected utility per model.
pub fn model_values(strategy: &Strategy, market: &Market, utility: Utility) -> Result<Vec<f64>> {
    (0..market.num_models())
        .map(|theta| robust_value(strategy, &market.single_model(theta), utility).map(|v| v.0))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolveOptions {
    /// Target duality gap of the barrier method.
    pub tol: f64,
    /// Newton step budget.
    pub max_iters: usize,
    pub seed: u64,
    /// Reference cost for the existence check; defaults to the family's
    /// `lambda_prime`, else `λ/2`.
    pub lambda_prime: Option<f64>,
    pub delta: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            tol: 1e-8,
            max_iters: 5000,
            seed: 0,
            lambda_prime: None,
            delta: DEFAULT_DELTA,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SolveReport {
    pub iterations: usize,
    pub barrier_rounds: usize,
    /// Barrier parameter times the number of barrier terms at exit.
    pub duality_gap: f64,
    pub certified: bool,
    pub admissible: bool,
    /// Model and cost level at which a consistent price system was found.
    pub cps_theta: usize,
    pub lambda_prime: f64,
    pub model_values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Solution {
    pub strategy: Strategy,
    pub value: f64,
    pub argmin_theta: usize,
    pub report: SolveReport,
}

/// Finds a model with a consistent price system at `λ′`, the minimal
/// hypothesis under which an optimiser exists.
pub fn check_hypothesis(
    market: &Market,
    lambda_prime: Option<f64>,
    delta: f64,
) -> Result<(f64, ConsistentPriceSystem)> {
    let lambda = market.lambda();
    let lp = lambda_prime
        .or(market.family().lambda_prime())
        .unwrap_or(0.5 * lambda);
    if !(lp > 0.0 && lp < lambda) {
        return Err(Error::Hypothesis(format!(
            "reference cost {lp} must lie in (0, {lambda})"
        )));
    }
    for theta in 0..market.num_models() {
        match find_cps(market, theta, lp, delta) {
            Ok(c) => return Ok((lp, c)),
            Err(Error::Infeasible(_)) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(Error::Hypothesis(format!(
        "no model admits a consistent price system at cost level {lp}; an optimiser need not exist"
    )))
}

struct Problem {
    n: usize,
    nv: usize,
    x: f64,
    utility: Utility,
    probs: Vec<f64>,
    /// `[θ][ω]`: terminal wealth `x + a·z`
    wealth: Vec<Vec<Vec<f64>>>,
    /// linear constraints `b + a·z > 0`
    lin: Vec<(Vec<f64>, f64)>,
}

struct Eval {
    phi: f64,
    grad: DVector<f64>,
    hess: DMatrix<f64>,
}

impl Problem {
    fn build(market: &Market, utility: Utility, x: f64) -> Self {
        let nv = market.num_jump_vars();
        let tree = market.tree();
        let terminal_layer = tree.layer(tree.terminal_layer());
        let nt = terminal_layer.len();
        let n = nv + nt + 1;
        let lambda = market.lambda();
        let tl = market.timeline();
        let terminal = tl.terminal_point();
        let mut lin = Vec::new();
        for j in 0..nv + nt {
            let mut a = vec![0.0; n];
            a[j] = 1.0;
            lin.push((a, 0.0));
        }
        let mut wealth = Vec::new();
        for theta in 0..market.num_models() {
            let mut per = Vec::new();
            for w in 0..tree.num_scenarios() {
                let forms = market.linear_forms(theta, w);
                let f = &forms[terminal];
                let c = terminal_layer.cell_of(w);
                let mut a = vec![0.0; n];
                for j in 0..nv {
                    a[j] = f.h0[j] + f.price * f.h1[j];
                }
                a[nv + c] = -lambda * f.price;
                per.push(a);
                if theta == 0 && terminal_layer.cell(c)[0] == w {
                    let mut b = vec![0.0; n];
                    b[nv + c] = 1.0;
                    for j in 0..nv {
                        b[j] = -f.h1[j];
                    }
                    lin.push((b, 0.0));
                }
                for (i, form) in forms.iter().enumerate().take(terminal) {
                    let layer = tree.layer(tl.points[i].layer);
                    if layer.cell(layer.cell_of(w))[0] != w {
                        continue;
                    }
                    for cf in [1.0 - lambda, 1.0] {
                        let mut a = vec![0.0; n];
                        for j in 0..nv {
                            a[j] = form.h0[j] + cf * form.price * form.h1[j];
                        }
                        if a.iter().any(|&v| v != 0.0) {
                            lin.push((a, x));
                        }
                    }
                }
            }
            wealth.push(per);
        }
        Problem {
            n,
            nv,
            x,
            utility,
            probs: tree.probabilities().to_vec(),
            wealth,
            lin,
        }
    }

    fn num_barrier_terms(&self) -> usize {
        self.wealth.len() * (1 + self.probs.len()) + self.lin.len()
    }

    fn dot(a: &[f64], z: &[f64]) -> f64 {
        a.iter().zip(z).map(|(a, b)| a * b).sum()
    }

    /// Model utilities `F_θ(z)`; `None` outside the barrier domain.
    fn utilities(&self, z: &[f64]) -> Option<Vec<f64>> {
        let mut out = Vec::with_capacity(self.wealth.len());
        for per in &self.wealth {
            let mut f = 0.0;
            for (a, p) in per.iter().zip(&self.probs) {
                let v = self.x + Self::dot(a, z);
                if !(v > 0.0) {
                    return None;
                }
                f += p * self.utility.value(v);
            }
            out.push(f);
        }
        Some(out)
    }

    fn strictly_feasible(&self, z: &[f64]) -> bool {
        let m = z[self.n - 1];
        self.lin.iter().all(|(a, b)| b + Self::dot(a, z) > 0.0)
            && self
                .utilities(z)
                .is_some_and(|f| f.iter().all(|&v| v - m > 0.0))
    }

    fn barrier(&self, z: &[f64], mu: f64) -> Option<f64> {
        let m = z[self.n - 1];
        let f = self.utilities(z)?;
        let mut phi = -m;
        for fv in f {
            let h = fv - m;
            if !(h > 0.0) {
                return None;
            }
            phi -= mu * h.ln();
        }
        for (a, b) in &self.lin {
            let g = b + Self::dot(a, z);
            if !(g > 0.0) {
                return None;
            }
            phi -= mu * g.ln();
        }
        for per in &self.wealth {
            for a in per {
                phi -= mu * (self.x + Self::dot(a, z)).ln();
            }
        }
        Some(phi)
    }

    fn evaluate(&self, z: &[f64], mu: f64) -> Eval {
        let n = self.n;
        let m = z[n - 1];
        let mut grad = DVector::zeros(n);
        let mut hess = DMatrix::zeros(n, n);
        grad[n - 1] = -1.0;
        let mut phi = -m;
        for per in &self.wealth {
            let mut f = 0.0;
            let mut df = DVector::zeros(n);
            let mut d2f = DMatrix::zeros(n, n);
            for (a, p) in per.iter().zip(&self.probs) {
                let v = self.x + Self::dot(a, z);
                let av = DVector::from_column_slice(a);
                f += p * self.utility.value(v);
                df.axpy(p * self.utility.derivative(v), &av, 1.0);
                d2f.ger(p * self.utility.second_derivative(v), &av, &av, 1.0);
                // terminal wealth barrier
                phi -= mu * v.ln();
                grad.axpy(-mu / v, &av, 1.0);
                hess.ger(mu / (v * v), &av, &av, 1.0);
            }
            let h = f - m;
            df[n - 1] = -1.0;
            phi -= mu * h.ln();
            grad.axpy(-mu / h, &df, 1.0);
            hess.ger(mu / (h * h), &df, &df, 1.0);
            hess -= d2f * (mu / h);
        }
        for (a, b) in &self.lin {
            let g = b + Self::dot(a, z);
            let av = DVector::from_column_slice(a);
            phi -= mu * g.ln();
            grad.axpy(-mu / g, &av, 1.0);
            hess.ger(mu / (g * g), &av, &av, 1.0);
        }
        Eval { phi, grad, hess }
    }

    fn newton_direction(e: &Eval) -> DVector<f64> {
        let n = e.grad.len();
        let mut reg = 0.0;
        loop {
            let mut h = e.hess.clone();
            if reg > 0.0 {
                for i in 0..n {
                    h[(i, i)] += reg;
                }
            }
            if let Some(ch) = h.cholesky() {
                return -ch.solve(&e.grad);
            }
            reg = if reg == 0.0 {
                1e-12 * e.hess.diagonal().amax().max(1.0)
            } else {
                reg * 10.0
            };
        }
    }

    fn initial_point(&self, market: &Market, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s_max: f64 = 0.0;
        for theta in 0..market.num_models() {
            for w in 0..market.num_scenarios() {
                for j in 0..market.timeline().slots.len() {
                    s_max = s_max.max(market.slot_price(theta, w, j));
                }
                s_max = s_max.max(market.price(theta, w).terminal_value());
            }
        }
        let slots = market.timeline().slots.len() as f64 + 1.0;
        let mut eta = self.x / (10.0 * slots * s_max.max(1e-300));
        let jitter: Vec<f64> = (0..self.nv).map(|_| 1.0 + 0.1 * rng.gen::<f64>()).collect();
        for _ in 0..200 {
            let mut z = vec![0.0; self.n];
            for j in 0..self.nv {
                z[j] = eta * jitter[j];
            }
            // liquidation variables sit above both 0 and H^1_T
            for (a, _) in &self.lin {
                let Some(c) = (self.nv..self.n - 1).find(|&i| a[i] != 0.0) else {
                    continue;
                };
                let h1: f64 = -Self::dot(&a[..self.nv], &z[..self.nv]);
                z[c] = z[c].max(h1.max(0.0) + eta);
            }
            for c in self.nv..self.n - 1 {
                if z[c] == 0.0 {
                    z[c] = eta;
                }
            }
            if let Some(f) = self.utilities(&z) {
                z[self.n - 1] = f.iter().copied().fold(f64::INFINITY, f64::min) - 1.0;
                if self.strictly_feasible(&z) {
                    return z;
                }
            }
            eta *= 0.5;
        }
        let mut z = vec![0.0; self.n];
        for c in self.nv..self.n - 1 {
            z[c] = 1e-300;
        }
        z
    }
}

fn polish(market: &Market, strategy: &Strategy, utility: Utility) -> Strategy {
    let mut netted = strategy.clone();
    for t in netted.jumps.iter_mut() {
        for c in 0..t.buy.len() {
            let k = t.buy[c].min(t.sell[c]);
            t.buy[c] -= k;
            t.sell[c] -= k;
        }
    }
    let scale = strategy.initial_cash.max(1e-300);
    let mut trimmed = netted.clone();
    for t in trimmed.jumps.iter_mut() {
        for v in t.buy.iter_mut().chain(t.sell.iter_mut()) {
            if *v < 1e-9 * scale {
                *v = 0.0;
            }
        }
    }
    let value = |s: &Strategy| robust_value(s, market, utility).map(|v| v.0).ok();
    match (value(&netted), value(&trimmed)) {
        (Some(a), Some(b)) if b >= a && is_admissible(&trimmed, market, DEFAULT_TOL).admissible => trimmed,
        (Some(_), _) => netted,
        _ => strategy.clone(),
    }
}

/// Solves the robust problem over jump strategies from endowment `x`.
pub fn solve_robust(market: &Market, utility: Utility, x: f64, options: &SolveOptions) -> Result<Solution> {
    solve_traced(market, utility, x, options, |_| {})
}

/// As [`solve_robust`], additionally returning the polished strategy after
/// every barrier round.
pub fn solve_robust_iterates(
    market: &Market,
    utility: Utility,
    x: f64,
    options: &SolveOptions,
) -> Result<(Solution, Vec<Strategy>)> {
    let mut iterates = Vec::new();
    let sol = solve_traced(market, utility, x, options, |s| iterates.push(s.clone()))?;
    Ok((sol, iterates))
}

fn solve_traced(
    market: &Market,
    utility: Utility,
    x: f64,
    options: &SolveOptions,
    mut on_round: impl FnMut(&Strategy),
) -> Result<Solution> {
    if !(x.is_finite() && x > 0.0) {
        return Err(Error::Domain(format!("initial cash must be positive, got {x}")));
    }
    let (lambda_prime, cps) = check_hypothesis(market, options.lambda_prime, options.delta)?;
    let prob = Problem::build(market, utility, x);
    let mut z = prob.initial_point(market, options.seed);
    if !prob.strictly_feasible(&z) {
        return Err(Error::Domain("no strictly feasible starting point found".into()));
    }
    let terms = prob.num_barrier_terms() as f64;
    let scale = utility.value(x).abs().max(1.0);
    let mut mu = 1e-2 * scale;
    let mut iterations = 0;
    let mut rounds = 0;
    let mut exhausted = false;
    loop {
        rounds += 1;
        for _ in 0..100 {
            if iterations >= options.max_iters {
                exhausted = true;
                break;
            }
            iterations += 1;
            let e = prob.evaluate(&z, mu);
            let dz = Problem::newton_direction(&e);
            let decrement = -e.grad.dot(&dz);
            if decrement <= 1e-14 * scale {
                break;
            }
            let mut t = 1.0;
            let mut accepted = false;
            for _ in 0..60 {
                let cand: Vec<f64> = z.iter().zip(dz.iter()).map(|(a, d)| a + t * d).collect();
                if let Some(phi) = prob.barrier(&cand, mu) {
                    if phi <= e.phi - 0.25 * t * decrement {
                        z = cand;
                        accepted = true;
                        break;
                    }
                }
                t *= 0.5;
            }
            if !accepted || decrement <= 1e-12 * scale {
                break;
            }
        }
        let round = Strategy::from_vars(market, x, &z[..prob.nv]);
        on_round(&polish(market, &round, utility));
        if exhausted || mu * terms <= options.tol * scale {
            break;
        }
        mu *= 0.2;
    }
    let raw = Strategy::from_vars(market, x, &z[..prob.nv]);
    let strategy = polish(market, &raw, utility);
    let admissible = is_admissible(&strategy, market, DEFAULT_TOL).admissible;
    let (value, argmin_theta) = robust_value(&strategy, market, utility)?;
    let gap = mu * terms;
    Ok(Solution {
        report: SolveReport {
            iterations,
            barrier_rounds: rounds,
            duality_gap: gap,
            certified: !exhausted && gap <= options.tol * scale && admissible,
            admissible,
            cps_theta: cps.theta,
            lambda_prime,
            model_values: model_values(&strategy, market, utility)?,
        },
        strategy,
        value,
        argmin_theta,
    })
}

fn flatten(s: &Strategy) -> Vec<f64> {
    let mut v = vec![s.initial_cash];
    for t in s.jumps.iter().chain(&s.rates) {
        v.extend(&t.buy);
        v.extend(&t.sell);
    }
    v
}

fn sup_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[derive(Clone, Debug, PartialEq)]
pub struct KomlosOutput {
    /// `g_n = mean(f_n, …, f_{n+w−1})`.
    pub combinations: Vec<Strategy>,
    pub limit: Strategy,
    pub window: usize,
    /// Largest sup-distance between combinations in the second half.
    pub tail_oscillation: f64,
    pub stabilized: bool,
    pub limit_admissible: bool,
}

fn tail_oscillation(seq: &[Vec<f64>]) -> f64 {
    let tail = &seq[seq.len() / 2..];
    let mut worst: f64 = 0.0;
    for i in 0..tail.len() {
        for j in i + 1..tail.len() {
            worst = worst.max(sup_distance(&tail[i], &tail[j]));
        }
    }
    worst
}

/// Forward convex combinations of a sequence of strategies in `A(x)` that
/// converge at every event limit.
///
/// The inputs are checked for admissibility and for the a-priori variation
/// bound under a consistent price system at `λ′`. The window `w` is the
/// smallest for which the windowed averages are Cauchy within `tol` over
/// their second half; if none is, the window with the smallest oscillation
/// is used and the output is flagged as not stabilised.
pub fn komlos_stabilize(
    strategies: &[Strategy],
    market: &Market,
    lambda_prime: Option<f64>,
    tol: f64,
) -> Result<KomlosOutput> {
    let Some(first) = strategies.first() else {
        return Err(Error::Contract("empty strategy sequence".into()));
    };
    let x = first.initial_cash;
    for (i, s) in strategies.iter().enumerate() {
        s.validate(market)?;
        if (s.initial_cash - x).abs() > 1e-12 * x.abs().max(1.0) {
            return Err(Error::Contract(format!("strategy {i} has a different endowment")));
        }
        let r = is_admissible(s, market, DEFAULT_TOL);
        if !r.admissible {
            return Err(Error::Contract(format!("strategy {i} is not admissible: {:?}", r.violation)));
        }
    }
    let (lp, cps) = check_hypothesis(market, lambda_prime, DEFAULT_DELTA).map_err(|e| {
        Error::Contract(format!(
            "unbounded variation cannot be excluded without a consistent price system at a cost below lambda: {e}"
        ))
    })?;
    let q = cps.measure(market);
    let bound = x / (market.lambda() - lp);
    for (i, s) in strategies.iter().enumerate() {
        let mut up = 0.0;
        for (w, qw) in q.iter().enumerate() {
            let (_, down) = share_parts(s, market, w);
            up += qw * (1.0 - market.lambda()) * integrate(market.price(cps.theta, w), &down, 0.0, market.tree().horizon())?;
        }
        if up > bound + DEFAULT_TOL {
            return Err(Error::Contract(format!(
                "strategy {i} has unbounded variation: E_Q[H0_up] = {up} exceeds {bound}"
            )));
        }
    }
    let flat: Vec<Vec<f64>> = strategies.iter().map(flatten).collect();
    let n = flat.len();
    let averages = |w: usize| -> Vec<Vec<f64>> {
        (0..=n - w)
            .map(|i| {
                let mut acc = vec![0.0; flat[0].len()];
                for f in &flat[i..i + w] {
                    for (a, v) in acc.iter_mut().zip(f) {
                        *a += v / w as f64;
                    }
                }
                acc
            })
            .collect()
    };
    let mut best: Option<(usize, f64)> = None;
    for w in 1..=(n / 2).max(1) {
        let osc = tail_oscillation(&averages(w));
        if osc <= tol {
            best = Some((w, osc));
            break;
        }
        if best.map_or(true, |(_, b)| osc < b) {
            best = Some((w, osc));
        }
    }
    let (window, osc) = best.expect("at least one window");
    let weight = 1.0 / window as f64;
    let combinations: Vec<Strategy> = (0..=n - window)
        .map(|i| {
            let terms: Vec<(f64, &Strategy)> = strategies[i..i + window].iter().map(|s| (weight, s)).collect();
            Strategy::linear_combination(&terms)
        })
        .collect::<Result<_>>()?;
    let limit = combinations.last().expect("nonempty").clone();
    Ok(KomlosOutput {
        limit_admissible: is_admissible(&limit, market, DEFAULT_TOL).admissible,
        combinations,
        limit,
        window,
        tail_oscillation: osc,
        stabilized: osc <= tol,
    })
}

/// Integral errors of a sequence of integrators against its limit.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvergenceTable {
    pub times: Vec<f64>,
    /// `errors[n][i] = |∫_0^{t_i} S dH^n − ∫_0^{t_i} S dH|`.
    pub errors: Vec<Vec<f64>>,
    /// First `n` after which every error is below `threshold`.
    pub index_below: Option<usize>,
    pub threshold: f64,
}

impl ConvergenceTable {
    pub fn max_error(&self, n: usize) -> f64 {
        self.errors[n].iter().copied().fold(0.0, f64::max)
    }
}

/// Pointwise-convergence evidence at one check point: the last error is
/// negligible, or the errors shrink to at most half their maximum and do not
/// increase over the second half of the sequence.
fn converges(errors: &[f64], tol: f64) -> bool {
    let last = *errors.last().expect("nonempty");
    if last <= tol {
        return true;
    }
    let max = errors.iter().copied().fold(0.0, f64::max);
    let tail = &errors[errors.len() / 2..];
    last <= 0.5 * max && tail.windows(2).all(|w| w[1] <= w[0] + tol)
}

/// Reports `|∫S dH^n − ∫S dH|` on `grid` (and at `T`), after checking that
/// `H^n(t) → H(t)` at every knot of the sequence and its limit, at every
/// grid point and at the midpoints between them.
pub fn convergence_demo(
    sequence: &[LadlagPath],
    limit: &LadlagPath,
    s_path: &LadlagPath,
    grid: &[f64],
    threshold: f64,
) -> Result<ConvergenceTable> {
    if sequence.is_empty() {
        return Err(Error::Contract("empty sequence".into()));
    }
    let horizon = limit.horizon();
    let mut points: Vec<f64> = limit.knot_times();
    for h in sequence {
        if h.horizon() != horizon {
            return Err(Error::Contract("sequence horizons differ".into()));
        }
        points.extend(h.knot_times());
    }
    points.extend(grid.iter().copied().filter(|&t| (0.0..=horizon).contains(&t)));
    points.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    points.dedup();
    let mids: Vec<f64> = points.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
    points.extend(mids);
    for &t in &points {
        let target = limit.value_at(t)?;
        let errs: Vec<f64> = sequence
            .iter()
            .map(|h| h.value_at(t).map(|v| (v - target).abs()))
            .collect::<Result<_>>()?;
        if !converges(&errs, 1e-12 * target.abs().max(1.0)) {
            return Err(Error::Contract(format!("sequence does not converge pointwise at t = {t}")));
        }
    }
    let mut times: Vec<f64> = grid.iter().copied().filter(|&t| t > 0.0 && t <= horizon).collect();
    times.push(horizon);
    times.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    times.dedup();
    let reference: Vec<f64> = times
        .iter()
        .map(|&t| integrate(s_path, limit, 0.0, t))
        .collect::<Result<_>>()?;
    let errors: Vec<Vec<f64>> = sequence
        .iter()
        .map(|h| {
            times
                .iter()
                .zip(&reference)
                .map(|(&t, r)| integrate(s_path, h, 0.0, t).map(|v| (v - r).abs()))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    let mut index_below = None;
    for n in (0..errors.len()).rev() {
        if errors[n].iter().all(|&e| e < threshold) {
            index_below = Some(n);
        } else {
            break;
        }
    }
    Ok(ConvergenceTable {
        times,
        errors,
        index_below,
        threshold,
    })
}

/// Convenience: variation bounds for a strategy under the CPS found by the
/// existence check.
pub fn variation_report(
    strategy: &Strategy,
    market: &Market,
    lambda_prime: Option<f64>,
) -> Result<crate::analysis::VariationReport> {
    let (lp, cps) = check_hypothesis(market, lambda_prime, DEFAULT_DELTA)?;
    variation_bounds(strategy, &cps, market, lp, DEFAULT_TOL)
}
