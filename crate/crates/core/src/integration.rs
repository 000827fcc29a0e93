//! Pathwise Stieltjes integrals `∫ S dH` of a càdlàg integrand against an
//! increasing làdlàg integrator.
//!
//! Left jumps of `H` on `(s, t]` are priced at `S_{u−}`, right jumps on
//! `[s, t)` at `S_u`, and the continuous part is integrated exactly piece by
//! piece (the integrand of every piece is a polynomial of degree ≤ 3, so
//! Simpson's rule is exact).

use crate::paths::{LadlagPath, PathEvent, Segment};
use crate::{Error, Result};

fn require_cadlag(s: &LadlagPath) -> Result<()> {
    if s.is_cadlag() {
        Ok(())
    } else {
        Err(Error::Contract("integrand must be càdlàg (no right jumps)".into()))
    }
}

fn require_increasing(h: &LadlagPath) -> Result<()> {
    if h.is_increasing() {
        Ok(())
    } else {
        Err(Error::Contract("integrator must be increasing".into()))
    }
}

fn merged_breaks(a: &LadlagPath, b: &LadlagPath, s: f64, t: f64) -> Vec<f64> {
    let mut times: Vec<f64> = a
        .knot_times()
        .into_iter()
        .chain(b.knot_times())
        .filter(|&u| u > s && u < t)
        .collect();
    times.push(s);
    times.push(t);
    times.sort_by(|x, y| x.partial_cmp(y).expect("finite"));
    times.dedup();
    times
}

fn piece_integral(sv: &Segment, hv: &Segment, a: f64, b: f64) -> f64 {
    let f = |u: f64| sv.eval(u) * hv.derivative(u);
    let m = 0.5 * (a + b);
    (b - a) / 6.0 * (f(a) + 4.0 * f(m) + f(b))
}

fn check_bounds(h: &LadlagPath, s: f64, t: f64) -> Result<()> {
    if !(s >= 0.0 && s < t && t <= h.horizon()) {
        return Err(Error::Domain(format!(
            "integration bounds must satisfy 0 <= s < t <= {}, got [{s}, {t}]",
            h.horizon()
        )));
    }
    Ok(())
}

/// `∫_s^t S dH` for a càdlàg `S` and an increasing `H`.
pub fn integrate(s_path: &LadlagPath, h: &LadlagPath, s: f64, t: f64) -> Result<f64> {
    require_cadlag(s_path)?;
    require_increasing(h)?;
    integrate_unchecked(s_path, h, s, t)
}

/// The same sum for an arbitrary finite-variation integrator; linear in `H`.
pub fn integrate_signed(s_path: &LadlagPath, h: &LadlagPath, s: f64, t: f64) -> Result<f64> {
    require_cadlag(s_path)?;
    integrate_unchecked(s_path, h, s, t)
}

fn integrate_unchecked(s_path: &LadlagPath, h: &LadlagPath, s: f64, t: f64) -> Result<f64> {
    if s_path.horizon() != h.horizon() {
        return Err(Error::Contract("integrand and integrator horizons differ".into()));
    }
    check_bounds(h, s, t)?;
    let breaks = merged_breaks(s_path, h, s, t);
    let mut total = 0.0;
    for w in breaks.windows(2) {
        let (a, b) = (w[0], w[1]);
        let m = 0.5 * (a + b);
        let hv = h.segment_at(m);
        if hv.slope == 0.0 && hv.curvature == 0.0 {
            continue;
        }
        total += piece_integral(&s_path.segment_at(m), &hv, a, b);
    }
    if s == 0.0 {
        total += s_path.initial_value() * h.initial_right_jump();
    }
    for e in h.events() {
        if e.left_jump != 0.0 && e.time > s && e.time <= t {
            total += s_path.left_limit_at(e.time)? * e.left_jump;
        }
        if e.right_jump != 0.0 && e.time >= s && e.time < t {
            total += s_path.value_at(e.time)? * e.right_jump;
        }
    }
    Ok(total)
}

/// A jump removed by [`flatten_eps`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BigJump {
    pub time: f64,
    pub size: f64,
}

/// Splits `S` into a path whose jumps are all smaller than `eps` and the
/// list of removed jumps, so that `S_t = S^ε_t + Σ_{τ ≤ t} ΔS_τ`.
pub fn flatten_eps(s_path: &LadlagPath, eps: f64) -> Result<(LadlagPath, Vec<BigJump>)> {
    require_cadlag(s_path)?;
    if !(eps > 0.0) {
        return Err(Error::Domain(format!("eps must be positive, got {eps}")));
    }
    let mut big = Vec::new();
    let events = s_path
        .events()
        .iter()
        .map(|e| {
            if e.left_jump.abs() >= eps {
                big.push(BigJump {
                    time: e.time,
                    size: e.left_jump,
                });
                PathEvent::new(e.time, 0.0, 0.0)
            } else {
                *e
            }
        })
        .collect();
    let flat = LadlagPath::with_curvatures(
        s_path.horizon(),
        s_path.initial_value(),
        0.0,
        events,
        s_path.slopes().to_vec(),
        s_path.curvatures().to_vec(),
    )?;
    Ok((flat, big))
}

/// Left-continuous step function: `levels[i]` on `(times[i], times[i+1]]`,
/// the last level extending to the horizon, `levels[0]` at time `0`.
#[derive(Clone, Debug, PartialEq)]
pub struct StepPath {
    pub horizon: f64,
    pub times: Vec<f64>,
    pub levels: Vec<f64>,
}

impl StepPath {
    pub fn value_at(&self, t: f64) -> f64 {
        let idx = self.times.partition_point(|&s| s < t);
        self.levels[idx.saturating_sub(1)]
    }

    /// `Σ_i level_i · (H_{σ_{i+1}} − H_{σ_i})` over `[0, T]`, which is the
    /// integral of the step function under the left/right jump convention.
    pub fn integrate(&self, h: &LadlagPath) -> Result<f64> {
        let mut total = 0.0;
        for (i, level) in self.levels.iter().enumerate() {
            let a = self.times[i];
            let b = self.times.get(i + 1).copied().unwrap_or(self.horizon);
            total += level * (h.value_at(b)? - h.value_at(a)?);
        }
        Ok(total)
    }
}

/// Breakpoints `σ_{i+1} = inf{t > σ_i : |S_t − S_{σ_i}| > eps}` with level
/// `S_{σ_i}` on each block; the sup distance to `S` is at most `2·eps` when
/// every jump of `S` is smaller than `eps`.
pub fn step_approximation(s_path: &LadlagPath, eps: f64) -> Result<StepPath> {
    require_cadlag(s_path)?;
    if !s_path.is_piecewise_linear() {
        return Err(Error::Contract("step approximation needs a piecewise-linear path".into()));
    }
    if !(eps > 0.0) {
        return Err(Error::Domain(format!("eps must be positive, got {eps}")));
    }
    let horizon = s_path.horizon();
    let mut times = vec![0.0];
    let mut levels = vec![s_path.initial_value()];
    let segments: Vec<Segment> = s_path.segments().collect();
    let mut seg_idx = 0;
    let mut from: f64 = 0.0;
    loop {
        let level = *levels.last().expect("nonempty");
        let mut next = None;
        while seg_idx < segments.len() {
            let seg = segments[seg_idx];
            if seg.slope != 0.0 {
                let v0 = seg.eval(from.max(seg.start));
                let target = if seg.slope > 0.0 { level + eps } else { level - eps };
                let hit = from.max(seg.start) + (target - v0) / seg.slope;
                if hit < seg.end && hit > from {
                    next = Some((hit, target));
                    break;
                }
            }
            if seg.end < horizon {
                let v = s_path.value_at(seg.end)?;
                if (v - level).abs() > eps {
                    next = Some((seg.end, v));
                    seg_idx += 1;
                    break;
                }
            }
            seg_idx += 1;
        }
        match next {
            Some((t, v)) => {
                times.push(t);
                levels.push(v);
                from = t;
            }
            None => break,
        }
    }
    Ok(StepPath {
        horizon,
        times,
        levels,
    })
}

/// Approximate integral with a guaranteed bound.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CertifiedIntegral {
    pub value: f64,
    pub error_bound: f64,
}

/// `∫_0^T S dH` via the ε-flattening of `S` and its step approximation; big
/// jumps are integrated exactly as `ΔS_τ · (H_T − H_τ)`.
pub fn certified_integral(s_path: &LadlagPath, h: &LadlagPath, eps: f64) -> Result<CertifiedIntegral> {
    require_increasing(h)?;
    let (flat, big) = flatten_eps(s_path, eps)?;
    let steps = step_approximation(&flat, eps)?;
    let h_terminal = h.terminal_value();
    let mut value = steps.integrate(h)?;
    for j in &big {
        value += j.size * (h_terminal - h.value_at(j.time)?);
    }
    Ok(CertifiedIntegral {
        value,
        error_bound: 4.0 * eps * h.total_variation(h.horizon())?,
    })
}
