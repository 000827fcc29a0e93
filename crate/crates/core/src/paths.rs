//! Làdlàg paths of finite variation on `[0, T]`.
//!
//! A path is stored as an initial value, an optional right jump at `0`, a
//! strictly increasing list of events in `(0, T]` each carrying a left jump
//! `ΔH_e = H_e − H_{e−}` and a right jump `Δ₊H_e = H_{e+} − H_e`, and one
//! polynomial piece per inter-event interval. Pieces are at most quadratic:
//! on an interval starting at `a` the continuous motion is
//! `slope·(t − a) + curvature·(t − a)²`. Price paths use linear pieces only;
//! quadratic pieces appear in bond ledgers of continuously traded positions.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Which of the three values of a làdlàg path at a time is meant.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LimitKind {
    Left,
    Value,
    Right,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathEvent {
    pub time: f64,
    #[serde(default)]
    pub left_jump: f64,
    #[serde(default)]
    pub right_jump: f64,
}

impl PathEvent {
    pub fn new(time: f64, left_jump: f64, right_jump: f64) -> Self {
        PathEvent {
            time,
            left_jump,
            right_jump,
        }
    }

    pub fn left(time: f64, jump: f64) -> Self {
        PathEvent::new(time, jump, 0.0)
    }
}

/// Polynomial piece of a path on the open interval `(start, end)`.
///
/// `value` is the right limit at `start`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Segment {
    pub start: f64,
    pub end: f64,
    pub value: f64,
    pub slope: f64,
    pub curvature: f64,
}

impl Segment {
    pub fn eval(&self, t: f64) -> f64 {
        let d = t - self.start;
        self.value + self.slope * d + self.curvature * d * d
    }

    pub fn derivative(&self, t: f64) -> f64 {
        self.slope + 2.0 * self.curvature * (t - self.start)
    }

    /// Same polynomial re-expressed around a new start point.
    pub fn recenter(&self, start: f64, end: f64) -> Segment {
        Segment {
            start,
            end,
            value: self.eval(start),
            slope: self.derivative(start),
            curvature: self.curvature,
        }
    }

    /// Minimum of the polynomial over the closed interval `[start, end]`,
    /// with the time at which it is attained.
    pub fn min_on_closure(&self) -> (f64, f64) {
        let mut best = (self.eval(self.start), self.start);
        let right = self.eval(self.end);
        if right < best.0 {
            best = (right, self.end);
        }
        if self.curvature > 0.0 {
            let v = self.start - self.slope / (2.0 * self.curvature);
            if v > self.start && v < self.end {
                let inner = self.eval(v);
                if inner < best.0 {
                    best = (inner, v);
                }
            }
        }
        best
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct Knot {
    time: f64,
    left: f64,
    value: f64,
    right: f64,
}

/// A finite-variation làdlàg path. Immutable after construction.
#[derive(Clone, Debug, PartialEq)]
pub struct LadlagPath {
    horizon: f64,
    initial_value: f64,
    initial_right_jump: f64,
    events: Vec<PathEvent>,
    slopes: Vec<f64>,
    curvatures: Vec<f64>,
    knots: Vec<Knot>,
}

fn interval_count(horizon: f64, events: &[PathEvent]) -> usize {
    match events.last() {
        Some(e) if e.time == horizon => events.len(),
        _ => events.len() + 1,
    }
}

impl LadlagPath {
    /// Builds a path with linear pieces.
    pub fn new(
        horizon: f64,
        initial_value: f64,
        initial_right_jump: f64,
        events: Vec<PathEvent>,
        slopes: Vec<f64>,
    ) -> Result<Self> {
        let curvatures = vec![0.0; slopes.len()];
        Self::with_curvatures(
            horizon,
            initial_value,
            initial_right_jump,
            events,
            slopes,
            curvatures,
        )
    }

    /// Builds a path with quadratic pieces.
    pub fn with_curvatures(
        horizon: f64,
        initial_value: f64,
        initial_right_jump: f64,
        events: Vec<PathEvent>,
        slopes: Vec<f64>,
        curvatures: Vec<f64>,
    ) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::InvalidPath(format!(
                "horizon must be finite and positive, got {horizon}"
            )));
        }
        if !initial_value.is_finite() || !initial_right_jump.is_finite() {
            return Err(Error::InvalidPath("initial value and jump must be finite".into()));
        }
        let mut prev = 0.0;
        for (i, e) in events.iter().enumerate() {
            if !(e.time > prev && e.time <= horizon) {
                return Err(Error::InvalidPath(format!(
                    "event {i} at time {} is not strictly increasing within (0, {horizon}]",
                    e.time
                )));
            }
            if !e.left_jump.is_finite() || !e.right_jump.is_finite() {
                return Err(Error::InvalidPath(format!("event {i} has a non-finite jump")));
            }
            if e.time == horizon && e.right_jump != 0.0 {
                return Err(Error::InvalidPath("right jump at the horizon is not allowed".into()));
            }
            prev = e.time;
        }
        let n = interval_count(horizon, &events);
        if slopes.len() != n || curvatures.len() != n {
            return Err(Error::InvalidPath(format!(
                "expected {n} interval slopes/curvatures, got {}/{}",
                slopes.len(),
                curvatures.len()
            )));
        }
        if slopes.iter().chain(&curvatures).any(|v| !v.is_finite()) {
            return Err(Error::InvalidPath("non-finite slope or curvature".into()));
        }

        let mut knots = Vec::with_capacity(events.len() + 2);
        knots.push(Knot {
            time: 0.0,
            left: initial_value,
            value: initial_value,
            right: initial_value + initial_right_jump,
        });
        let mut times: Vec<f64> = events.iter().map(|e| e.time).collect();
        if n > events.len() {
            times.push(horizon);
        }
        for (i, &t) in times.iter().enumerate() {
            let a = knots[i].time;
            let d = t - a;
            let left = knots[i].right + slopes[i] * d + curvatures[i] * d * d;
            let (lj, rj) = events.get(i).map_or((0.0, 0.0), |e| (e.left_jump, e.right_jump));
            let value = left + lj;
            knots.push(Knot {
                time: t,
                left,
                value,
                right: value + rj,
            });
        }
        Ok(LadlagPath {
            horizon,
            initial_value,
            initial_right_jump,
            events,
            slopes,
            curvatures,
            knots,
        })
    }

    pub fn constant(horizon: f64, value: f64) -> Result<Self> {
        Self::new(horizon, value, 0.0, Vec::new(), vec![0.0])
    }

    /// Piecewise-constant path with the given events and zero slopes.
    pub fn pure_jump(
        horizon: f64,
        initial_value: f64,
        initial_right_jump: f64,
        events: Vec<PathEvent>,
    ) -> Result<Self> {
        let n = interval_count(horizon, &events);
        Self::new(horizon, initial_value, initial_right_jump, events, vec![0.0; n])
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn initial_value(&self) -> f64 {
        self.initial_value
    }

    pub fn initial_right_jump(&self) -> f64 {
        self.initial_right_jump
    }

    pub fn events(&self) -> &[PathEvent] {
        &self.events
    }

    pub fn slopes(&self) -> &[f64] {
        &self.slopes
    }

    pub fn curvatures(&self) -> &[f64] {
        &self.curvatures
    }

    pub fn event_times(&self) -> Vec<f64> {
        self.events.iter().map(|e| e.time).collect()
    }

    /// Interval boundaries: `0`, the event times and `T`.
    pub fn knot_times(&self) -> Vec<f64> {
        self.knots.iter().map(|k| k.time).collect()
    }

    pub fn segments(&self) -> impl Iterator<Item = Segment> + '_ {
        (0..self.slopes.len()).map(move |i| self.segment(i))
    }

    pub fn segment(&self, i: usize) -> Segment {
        Segment {
            start: self.knots[i].time,
            end: self.knots[i + 1].time,
            value: self.knots[i].right,
            slope: self.slopes[i],
            curvature: self.curvatures[i],
        }
    }

    /// Segment whose closure contains `t`; at a knot the later segment wins.
    pub fn segment_at(&self, t: f64) -> Segment {
        let idx = self.knots.partition_point(|k| k.time <= t);
        let i = idx.saturating_sub(1).min(self.slopes.len() - 1);
        self.segment(i)
    }

    fn knot_index(&self, t: f64) -> Option<usize> {
        self.knots
            .binary_search_by(|k| k.time.partial_cmp(&t).expect("finite times"))
            .ok()
    }

    fn check_time(&self, t: f64) -> Result<()> {
        if t.is_finite() && (0.0..=self.horizon).contains(&t) {
            Ok(())
        } else {
            Err(Error::Domain(format!("time {t} outside [0, {}]", self.horizon)))
        }
    }

    pub fn value_at(&self, t: f64) -> Result<f64> {
        self.check_time(t)?;
        Ok(match self.knot_index(t) {
            Some(i) => self.knots[i].value,
            None => self.segment_at(t).eval(t),
        })
    }

    pub fn left_limit_at(&self, t: f64) -> Result<f64> {
        self.check_time(t)?;
        if t == 0.0 {
            return Err(Error::Domain("left limit at 0 is not defined".into()));
        }
        Ok(match self.knot_index(t) {
            Some(i) => self.knots[i].left,
            None => self.segment_at(t).eval(t),
        })
    }

    pub fn right_limit_at(&self, t: f64) -> Result<f64> {
        self.check_time(t)?;
        if t == self.horizon {
            return Err(Error::Domain("right limit at the horizon is not defined".into()));
        }
        Ok(match self.knot_index(t) {
            Some(i) => self.knots[i].right,
            None => self.segment_at(t).eval(t),
        })
    }

    pub fn limit_at(&self, t: f64, kind: LimitKind) -> Result<f64> {
        match kind {
            LimitKind::Left => self.left_limit_at(t),
            LimitKind::Value => self.value_at(t),
            LimitKind::Right => self.right_limit_at(t),
        }
    }

    /// `ΔH_t`; zero away from events.
    pub fn left_jump_at(&self, t: f64) -> f64 {
        self.events
            .iter()
            .find(|e| e.time == t)
            .map_or(0.0, |e| e.left_jump)
    }

    /// `Δ₊H_t`; zero away from events and at the horizon.
    pub fn right_jump_at(&self, t: f64) -> f64 {
        if t == 0.0 {
            return self.initial_right_jump;
        }
        self.events
            .iter()
            .find(|e| e.time == t)
            .map_or(0.0, |e| e.right_jump)
    }

    pub fn terminal_value(&self) -> f64 {
        self.knots.last().expect("at least one knot").value
    }

    pub fn is_cadlag(&self) -> bool {
        self.initial_right_jump == 0.0 && self.events.iter().all(|e| e.right_jump == 0.0)
    }

    pub fn is_piecewise_linear(&self) -> bool {
        self.curvatures.iter().all(|&c| c == 0.0)
    }

    /// All jumps nonnegative and every piece nondecreasing.
    pub fn is_increasing(&self) -> bool {
        self.initial_right_jump >= 0.0
            && self
                .events
                .iter()
                .all(|e| e.left_jump >= 0.0 && e.right_jump >= 0.0)
            && self.segments().all(|s| {
                s.derivative(s.start) >= 0.0 && s.derivative(s.end) >= 0.0
            })
    }

    /// Inserts zero-jump events at the given times (ignoring `0` and
    /// existing event times). Values are unchanged everywhere.
    pub fn refine(&self, times: &[f64]) -> Result<Self> {
        let mut all: Vec<f64> = self.event_times();
        for &t in times {
            self.check_time(t)?;
            if t > 0.0 {
                all.push(t);
            }
        }
        all.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
        all.dedup();
        if all.len() == self.events.len() {
            return Ok(self.clone());
        }
        let events: Vec<PathEvent> = all
            .iter()
            .map(|&t| PathEvent::new(t, self.left_jump_at(t), self.right_jump_at(t)))
            .collect();
        let n = interval_count(self.horizon, &events);
        let mut slopes = Vec::with_capacity(n);
        let mut curvatures = Vec::with_capacity(n);
        let mut start = 0.0;
        for i in 0..n {
            let end = events.get(i).map_or(self.horizon, |e| e.time);
            let seg = self.segment_at(0.5 * (start + end)).recenter(start, end);
            slopes.push(seg.slope);
            curvatures.push(seg.curvature);
            start = end;
        }
        Self::with_curvatures(
            self.horizon,
            self.initial_value,
            self.initial_right_jump,
            events,
            slopes,
            curvatures,
        )
    }

    /// `Σ_k w_k · path_k` on the union of the paths' events.
    pub fn linear_combination(terms: &[(f64, &LadlagPath)]) -> Result<Self> {
        let Some(first) = terms.first() else {
            return Err(Error::Contract("empty linear combination".into()));
        };
        let horizon = first.1.horizon;
        if terms.iter().any(|(_, p)| p.horizon != horizon) {
            return Err(Error::Contract("paths have different horizons".into()));
        }
        let mut times: Vec<f64> = terms.iter().flat_map(|(_, p)| p.event_times()).collect();
        times.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
        times.dedup();
        let refined: Vec<(f64, LadlagPath)> = terms
            .iter()
            .map(|(w, p)| Ok((*w, p.refine(&times)?)))
            .collect::<Result<_>>()?;
        let sum = |f: &dyn Fn(&LadlagPath) -> f64| -> f64 {
            refined.iter().map(|(w, p)| w * f(p)).sum()
        };
        let base = &refined[0].1;
        let events: Vec<PathEvent> = (0..base.events.len())
            .map(|i| {
                PathEvent::new(
                    base.events[i].time,
                    sum(&|p| p.events[i].left_jump),
                    sum(&|p| p.events[i].right_jump),
                )
            })
            .collect();
        let slopes = (0..base.slopes.len()).map(|i| sum(&|p| p.slopes[i])).collect();
        let curvatures = (0..base.slopes.len())
            .map(|i| sum(&|p| p.curvatures[i]))
            .collect();
        Self::with_curvatures(
            horizon,
            sum(&|p| p.initial_value),
            sum(&|p| p.initial_right_jump),
            events,
            slopes,
            curvatures,
        )
    }

    pub fn add(&self, other: &LadlagPath) -> Result<Self> {
        Self::linear_combination(&[(1.0, self), (1.0, other)])
    }

    pub fn sub(&self, other: &LadlagPath) -> Result<Self> {
        Self::linear_combination(&[(1.0, self), (-1.0, other)])
    }

    pub fn scale(&self, factor: f64) -> Result<Self> {
        Self::linear_combination(&[(factor, self)])
    }

    /// Splits the path into increasing parts with `H = H_0 + up − down`
    /// and `|H| = up + down`.
    ///
    /// Every jump and every monotone piece is assigned to one side by sign;
    /// quadratic pieces are first split at their turning point.
    pub fn jordan_hahn(&self) -> (LadlagPath, LadlagPath) {
        let turning: Vec<f64> = self
            .segments()
            .filter(|s| s.curvature != 0.0)
            .map(|s| s.start - s.slope / (2.0 * s.curvature))
            .filter(|&v| v > 0.0 && v < self.horizon)
            .filter(|v| self.segment_at(*v).start < *v)
            .collect();
        let path = self
            .refine(&turning)
            .expect("turning points lie inside the horizon");
        let pos = |v: f64| v.max(0.0);
        let neg = |v: f64| (-v).max(0.0);
        let mut up_s = Vec::new();
        let mut up_c = Vec::new();
        let mut dn_s = Vec::new();
        let mut dn_c = Vec::new();
        for s in path.segments() {
            let mid = 0.5 * (s.start + s.end);
            if s.derivative(mid) >= 0.0 {
                up_s.push(s.slope);
                up_c.push(s.curvature);
                dn_s.push(0.0);
                dn_c.push(0.0);
            } else {
                up_s.push(0.0);
                up_c.push(0.0);
                dn_s.push(-s.slope);
                dn_c.push(-s.curvature);
            }
        }
        let up_ev = path
            .events
            .iter()
            .map(|e| PathEvent::new(e.time, pos(e.left_jump), pos(e.right_jump)))
            .collect();
        let dn_ev = path
            .events
            .iter()
            .map(|e| PathEvent::new(e.time, neg(e.left_jump), neg(e.right_jump)))
            .collect();
        let up = Self::with_curvatures(
            self.horizon,
            0.0,
            pos(self.initial_right_jump),
            up_ev,
            up_s,
            up_c,
        )
        .expect("parts of a valid path are valid");
        let down = Self::with_curvatures(
            self.horizon,
            0.0,
            neg(self.initial_right_jump),
            dn_ev,
            dn_s,
            dn_c,
        )
        .expect("parts of a valid path are valid");
        (up, down)
    }

    /// `|H|_t`, the total variation on `[0, t]`.
    pub fn total_variation(&self, t: f64) -> Result<f64> {
        self.check_time(t)?;
        let (up, down) = self.jordan_hahn();
        Ok(up.value_at(t)? + down.value_at(t)?)
    }

    /// Continuous part, càdlàg sum of left jumps and càdlàg sum of right
    /// jumps. See [`PathParts::reassemble`].
    pub fn decompose_parts(&self) -> PathParts {
        let zero_jumps: Vec<PathEvent> = self
            .events
            .iter()
            .map(|e| PathEvent::new(e.time, 0.0, 0.0))
            .collect();
        let continuous = Self::with_curvatures(
            self.horizon,
            0.0,
            0.0,
            zero_jumps,
            self.slopes.clone(),
            self.curvatures.clone(),
        )
        .expect("valid");
        let left_part = Self::pure_jump(
            self.horizon,
            0.0,
            0.0,
            self.events
                .iter()
                .map(|e| PathEvent::left(e.time, e.left_jump))
                .collect(),
        )
        .expect("valid");
        let right_part = Self::pure_jump(
            self.horizon,
            self.initial_right_jump,
            0.0,
            self.events
                .iter()
                .map(|e| PathEvent::left(e.time, e.right_jump))
                .collect(),
        )
        .expect("valid");
        PathParts {
            base: self.initial_value,
            continuous,
            left_part,
            right_part,
        }
    }
}

/// Decomposition `H_t = H_0 + H^c_t + H^d_t + H^{d,+}_{t−}`.
#[derive(Clone, Debug, PartialEq)]
pub struct PathParts {
    pub base: f64,
    /// Continuous part, starting at zero.
    pub continuous: LadlagPath,
    /// `H^d_t = Σ_{s≤t} ΔH_s`.
    pub left_part: LadlagPath,
    /// `H^{d,+}_t = Σ_{s≤t} Δ₊H_s` (càdlàg; value at `0` is `Δ₊H_0`).
    pub right_part: LadlagPath,
}

impl PathParts {
    pub fn reassemble(&self, t: f64, kind: LimitKind) -> Result<f64> {
        let c = self.continuous.value_at(t)?;
        let right_before = |t: f64| -> Result<f64> {
            if t == 0.0 {
                Ok(0.0)
            } else {
                self.right_part.left_limit_at(t)
            }
        };
        Ok(match kind {
            LimitKind::Value => {
                self.base + c + self.left_part.value_at(t)? + right_before(t)?
            }
            LimitKind::Left => {
                self.base + c + self.left_part.left_limit_at(t)? + right_before(t)?
            }
            LimitKind::Right => {
                // Rejects t = T like the other right limits.
                self.continuous.right_limit_at(t)?;
                self.base + c + self.left_part.value_at(t)? + self.right_part.value_at(t)?
            }
        })
    }
}
