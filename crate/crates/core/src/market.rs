//! Finite scenario trees, price model families, predictable strategies,
//! self-financing bond ledgers, liquidation values and admissibility.
//!
//! Information is carried by layers: layer `0` is the root partition `F_0`,
//! layer `k` is the partition `F_{t_k}` revealed at the `k`-th event. The
//! partition just before an event is the previous layer, so left-jump trades
//! at `t_k` are decided on layer `k − 1` cells and right-jump trades on
//! layer `k` cells.

use crate::paths::{LadlagPath, LimitKind, PathEvent, Segment};
use crate::{Error, Result};

/// Relative tolerance for adaptedness comparisons of price data.
const ADAPTED_RTOL: f64 = 1e-12;

/// Default tolerance for inequality checks.
pub const DEFAULT_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct Partition {
    cells: Vec<Vec<usize>>,
    cell_of: Vec<usize>,
}

impl Partition {
    /// Cells must be nonempty, disjoint and cover `0..n`.
    pub fn new(cells: Vec<Vec<usize>>, n: usize) -> Result<Self> {
        let mut cell_of = vec![usize::MAX; n];
        for (c, cell) in cells.iter().enumerate() {
            if cell.is_empty() {
                return Err(Error::Contract(format!("cell {c} is empty")));
            }
            for &w in cell {
                if w >= n {
                    return Err(Error::Contract(format!("scenario index {w} out of range")));
                }
                if cell_of[w] != usize::MAX {
                    return Err(Error::Contract(format!("scenario {w} appears in two cells")));
                }
                cell_of[w] = c;
            }
        }
        if let Some(w) = cell_of.iter().position(|&c| c == usize::MAX) {
            return Err(Error::Contract(format!("scenario {w} is not covered")));
        }
        Ok(Partition { cells, cell_of })
    }

    pub fn trivial(n: usize) -> Self {
        Partition {
            cells: vec![(0..n).collect()],
            cell_of: vec![0; n],
        }
    }

    pub fn discrete(n: usize) -> Self {
        Partition {
            cells: (0..n).map(|w| vec![w]).collect(),
            cell_of: (0..n).collect(),
        }
    }

    pub fn cells(&self) -> &[Vec<usize>] {
        &self.cells
    }

    pub fn cell(&self, c: usize) -> &[usize] {
        &self.cells[c]
    }

    pub fn cell_of(&self, scenario: usize) -> usize {
        self.cell_of[scenario]
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// Every cell of `self` lies inside one cell of `coarser`.
    pub fn refines(&self, coarser: &Partition) -> bool {
        self.cells.iter().all(|cell| {
            let c = coarser.cell_of(cell[0]);
            cell.iter().all(|&w| coarser.cell_of(w) == c)
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioTree {
    labels: Vec<String>,
    probabilities: Vec<f64>,
    horizon: f64,
    layers: Vec<Partition>,
    event_times: Vec<f64>,
}

impl ScenarioTree {
    /// `events` holds `(t_k, F_{t_k})` in increasing time order.
    pub fn new(
        labels: Vec<String>,
        probabilities: Vec<f64>,
        horizon: f64,
        root: Partition,
        events: Vec<(f64, Partition)>,
    ) -> Result<Self> {
        let n = labels.len();
        if n == 0 {
            return Err(Error::spec("scenarios.labels", "at least one scenario is required"));
        }
        for (i, l) in labels.iter().enumerate() {
            if labels[..i].contains(l) {
                return Err(Error::spec("scenarios.labels", format!("duplicate label {l:?}")));
            }
        }
        if probabilities.len() != n {
            return Err(Error::spec(
                "scenarios.probabilities",
                format!("expected {n} probabilities, got {}", probabilities.len()),
            ));
        }
        if let Some(p) = probabilities.iter().find(|p| !(p.is_finite() && **p > 0.0)) {
            return Err(Error::spec(
                "scenarios.probabilities",
                format!("probabilities must be positive, got {p}"),
            ));
        }
        let total: f64 = probabilities.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::spec(
                "scenarios.probabilities",
                format!("probabilities must sum to 1, got {total}"),
            ));
        }
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::spec("horizon", format!("must be positive, got {horizon}")));
        }
        if root.cell_of.len() != n {
            return Err(Error::spec("root_partition", "partition size does not match scenarios"));
        }
        let mut layers = vec![root];
        let mut event_times = Vec::with_capacity(events.len());
        let mut prev = 0.0;
        for (k, (t, post)) in events.into_iter().enumerate() {
            if !(t > prev && t <= horizon) {
                return Err(Error::spec(
                    format!("events[{k}].time"),
                    format!("event times must increase strictly within (0, {horizon}], got {t}"),
                ));
            }
            if post.cell_of.len() != n {
                return Err(Error::spec(
                    format!("events[{k}].post"),
                    "partition size does not match scenarios",
                ));
            }
            if !post.refines(layers.last().expect("root")) {
                return Err(Error::spec(
                    format!("events[{k}].post"),
                    "partition must refine the previous information partition",
                ));
            }
            layers.push(post);
            event_times.push(t);
            prev = t;
        }
        Ok(ScenarioTree {
            labels,
            probabilities,
            horizon,
            layers,
            event_times,
        })
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn num_scenarios(&self) -> usize {
        self.labels.len()
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn event_times(&self) -> &[f64] {
        &self.event_times
    }

    pub fn num_events(&self) -> usize {
        self.event_times.len()
    }

    /// Layer `0` is `F_0`, layer `k ≥ 1` is `F_{t_k}`.
    pub fn layer(&self, k: usize) -> &Partition {
        &self.layers[k]
    }

    pub fn layers(&self) -> &[Partition] {
        &self.layers
    }

    /// Information layer in force at `(t, kind)`.
    pub fn layer_at(&self, t: f64, kind: LimitKind) -> usize {
        match kind {
            LimitKind::Left => self.event_times.iter().filter(|&&e| e < t).count(),
            _ => self.event_times.iter().filter(|&&e| e <= t).count(),
        }
    }

    pub fn terminal_layer(&self) -> usize {
        self.layers.len() - 1
    }

    pub fn horizon_is_event(&self) -> bool {
        self.event_times.last() == Some(&self.horizon)
    }

    pub fn cell_probability(&self, layer: usize, cell: usize) -> f64 {
        self.layers[layer]
            .cell(cell)
            .iter()
            .map(|&w| self.probabilities[w])
            .sum()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelFamily {
    labels: Vec<String>,
    /// `paths[θ][ω]`.
    paths: Vec<Vec<LadlagPath>>,
    lambda: f64,
    lambda_prime: Option<f64>,
}

impl ModelFamily {
    pub fn new(
        labels: Vec<String>,
        paths: Vec<Vec<LadlagPath>>,
        lambda: f64,
        lambda_prime: Option<f64>,
    ) -> Result<Self> {
        if labels.is_empty() || labels.len() != paths.len() {
            return Err(Error::spec("models", "at least one model with one path per label"));
        }
        if !(lambda > 0.0 && lambda < 1.0) {
            return Err(Error::spec("lambda", format!("must lie in (0, 1), got {lambda}")));
        }
        if let Some(lp) = lambda_prime {
            if !(lp > 0.0 && lp < lambda) {
                return Err(Error::spec(
                    "lambda_prime",
                    format!("must lie in (0, lambda), got {lp}"),
                ));
            }
        }
        Ok(ModelFamily {
            labels,
            paths,
            lambda,
            lambda_prime,
        })
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn num_models(&self) -> usize {
        self.labels.len()
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn lambda_prime(&self) -> Option<f64> {
        self.lambda_prime
    }

    pub fn path(&self, theta: usize, scenario: usize) -> &LadlagPath {
        &self.paths[theta][scenario]
    }

    pub fn with_lambda(&self, lambda: f64) -> Result<Self> {
        let lambda_prime = self.lambda_prime.filter(|&lp| lp < lambda);
        ModelFamily::new(self.labels.clone(), self.paths.clone(), lambda, lambda_prime)
    }

    /// The family restricted to a single model.
    pub fn single(&self, theta: usize) -> ModelFamily {
        ModelFamily {
            labels: vec![self.labels[theta].clone()],
            paths: vec![self.paths[theta].clone()],
            lambda: self.lambda,
            lambda_prime: self.lambda_prime,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SlotSide {
    Left,
    Right,
}

/// A trading opportunity at a single time: a left jump (decided on
/// `F_{t−}`, priced at `S_{t−}`) or a right jump (decided on `F_t`, priced
/// at `S_t`).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Slot {
    pub time: f64,
    pub side: SlotSide,
    pub layer: usize,
    /// Index into the timeline points after which the trade executes.
    pub after_point: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ObservationPoint {
    pub time: f64,
    pub kind: LimitKind,
    pub layer: usize,
}

/// Open interval between consecutive knots, on which continuous trading
/// at a constant rate is possible.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Interval {
    pub start: f64,
    pub end: f64,
    pub layer: usize,
}

/// The sequence `0, 0+, t_1−, t_1, t_1+, …, T` of observation points with
/// the trading slots between them.
#[derive(Clone, Debug, PartialEq)]
pub struct Timeline {
    pub points: Vec<ObservationPoint>,
    pub slots: Vec<Slot>,
    pub intervals: Vec<Interval>,
}

impl Timeline {
    fn new(tree: &ScenarioTree) -> Self {
        let horizon = tree.horizon();
        let mut points = vec![ObservationPoint {
            time: 0.0,
            kind: LimitKind::Value,
            layer: 0,
        }];
        let mut slots = vec![Slot {
            time: 0.0,
            side: SlotSide::Right,
            layer: 0,
            after_point: 0,
        }];
        points.push(ObservationPoint {
            time: 0.0,
            kind: LimitKind::Right,
            layer: 0,
        });
        let mut intervals = Vec::new();
        let mut start = 0.0;
        for (i, &t) in tree.event_times().iter().enumerate() {
            let k = i + 1;
            intervals.push(Interval {
                start,
                end: t,
                layer: k - 1,
            });
            points.push(ObservationPoint {
                time: t,
                kind: LimitKind::Left,
                layer: k - 1,
            });
            slots.push(Slot {
                time: t,
                side: SlotSide::Left,
                layer: k - 1,
                after_point: points.len() - 1,
            });
            points.push(ObservationPoint {
                time: t,
                kind: LimitKind::Value,
                layer: k,
            });
            if t < horizon {
                slots.push(Slot {
                    time: t,
                    side: SlotSide::Right,
                    layer: k,
                    after_point: points.len() - 1,
                });
                points.push(ObservationPoint {
                    time: t,
                    kind: LimitKind::Right,
                    layer: k,
                });
            }
            start = t;
        }
        if !tree.horizon_is_event() {
            intervals.push(Interval {
                start,
                end: horizon,
                layer: tree.terminal_layer(),
            });
            points.push(ObservationPoint {
                time: horizon,
                kind: LimitKind::Value,
                layer: tree.terminal_layer(),
            });
        }
        Timeline {
            points,
            slots,
            intervals,
        }
    }

    pub fn terminal_point(&self) -> usize {
        self.points.len() - 1
    }
}

/// A scenario tree with a model family adapted to it.
#[derive(Clone, Debug, PartialEq)]
pub struct Market {
    tree: ScenarioTree,
    family: ModelFamily,
    timeline: Timeline,
    slot_offsets: Vec<usize>,
    num_jump_vars: usize,
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= ADAPTED_RTOL * a.abs().max(b.abs()).max(1.0)
}

impl Market {
    /// Validates the family against the tree (horizons, positivity,
    /// adaptedness) and refines every price path onto the event grid.
    pub fn new(tree: ScenarioTree, family: ModelFamily) -> Result<Self> {
        let n = tree.num_scenarios();
        let times = tree.event_times().to_vec();
        let mut refined = Vec::with_capacity(family.num_models());
        for (theta, row) in family.paths.iter().enumerate() {
            let tl = &family.labels[theta];
            if row.len() != n {
                return Err(Error::spec(
                    format!("models.{tl}"),
                    format!("expected {n} scenario paths, got {}", row.len()),
                ));
            }
            let mut out = Vec::with_capacity(n);
            for (w, p) in row.iter().enumerate() {
                let at = format!("models.{tl}.{}", tree.labels()[w]);
                if p.horizon() != tree.horizon() {
                    return Err(Error::spec(at, "path horizon differs from the tree horizon"));
                }
                if !p.is_cadlag() {
                    return Err(Error::spec(at, "price paths must be càdlàg (no right jumps)"));
                }
                if !p.is_piecewise_linear() {
                    return Err(Error::spec(at, "price paths must be piecewise linear"));
                }
                if let Some(e) = p.events().iter().find(|e| !times.contains(&e.time)) {
                    return Err(Error::spec(
                        format!("{at}.events"),
                        format!("time {} is not an event time of the tree", e.time),
                    ));
                }
                let r = p.refine(&times)?;
                for &t in r.knot_times().iter() {
                    let mut vals = vec![r.value_at(t)?];
                    if t > 0.0 {
                        vals.push(r.left_limit_at(t)?);
                    }
                    if vals.iter().any(|v| !(*v > 0.0)) {
                        return Err(Error::spec(at, format!("price must be strictly positive at {t}")));
                    }
                }
                out.push(r);
            }
            refined.push(out);
        }
        let timeline = Timeline::new(&tree);
        for (theta, row) in refined.iter().enumerate() {
            let tl = &family.labels[theta];
            for p in &timeline.points {
                if p.time == 0.0 && p.kind == LimitKind::Left {
                    continue;
                }
                let kind = if p.kind == LimitKind::Right {
                    LimitKind::Value
                } else {
                    p.kind
                };
                for cell in tree.layer(p.layer).cells() {
                    let v0 = row[cell[0]].limit_at(p.time, kind)?;
                    for &w in &cell[1..] {
                        if !close(row[w].limit_at(p.time, kind)?, v0) {
                            return Err(Error::spec(
                                format!("models.{tl}.{}", tree.labels()[w]),
                                format!(
                                    "price is not adapted at time {} ({:?}): differs within an information cell",
                                    p.time, p.kind
                                ),
                            ));
                        }
                    }
                }
            }
            for (j, iv) in timeline.intervals.iter().enumerate() {
                for cell in tree.layer(iv.layer).cells() {
                    let s0 = row[cell[0]].slopes()[j];
                    for &w in &cell[1..] {
                        if !close(row[w].slopes()[j], s0) {
                            return Err(Error::spec(
                                format!("models.{tl}.{}.slopes", tree.labels()[w]),
                                format!("slope on ({}, {}) differs within an information cell", iv.start, iv.end),
                            ));
                        }
                    }
                }
            }
        }
        let mut slot_offsets = Vec::with_capacity(timeline.slots.len());
        let mut num_jump_vars = 0;
        for s in &timeline.slots {
            slot_offsets.push(num_jump_vars);
            num_jump_vars += 2 * tree.layer(s.layer).len();
        }
        let family = ModelFamily {
            paths: refined,
            ..family
        };
        Ok(Market {
            tree,
            family,
            timeline,
            slot_offsets,
            num_jump_vars,
        })
    }

    pub fn tree(&self) -> &ScenarioTree {
        &self.tree
    }

    pub fn family(&self) -> &ModelFamily {
        &self.family
    }

    pub fn timeline(&self) -> &Timeline {
        &self.timeline
    }

    pub fn lambda(&self) -> f64 {
        self.family.lambda
    }

    pub fn num_models(&self) -> usize {
        self.family.num_models()
    }

    pub fn num_scenarios(&self) -> usize {
        self.tree.num_scenarios()
    }

    pub fn price(&self, theta: usize, scenario: usize) -> &LadlagPath {
        self.family.path(theta, scenario)
    }

    /// Price at a timeline point; right limits equal values for càdlàg `S`.
    pub fn price_at_point(&self, theta: usize, scenario: usize, point: usize) -> f64 {
        let p = self.timeline.points[point];
        let kind = match p.kind {
            LimitKind::Right => LimitKind::Value,
            k => k,
        };
        self.price(theta, scenario)
            .limit_at(p.time, kind)
            .expect("timeline points lie in the horizon")
    }

    /// `S_{t−}` for left slots, `S_t` for right slots.
    pub fn slot_price(&self, theta: usize, scenario: usize, slot: usize) -> f64 {
        let s = self.timeline.slots[slot];
        let path = self.price(theta, scenario);
        match s.side {
            SlotSide::Left => path.left_limit_at(s.time),
            SlotSide::Right => path.value_at(s.time),
        }
        .expect("slots lie in the horizon")
    }

    /// Same tree and prices, different cost level.
    pub fn with_lambda(&self, lambda: f64) -> Result<Self> {
        Ok(Market {
            family: self.family.with_lambda(lambda)?,
            ..self.clone()
        })
    }

    /// The market restricted to a single model.
    pub fn single_model(&self, theta: usize) -> Market {
        Market {
            family: self.family.single(theta),
            ..self.clone()
        }
    }

    /// Number of jump-trade variables: one buy and one sell per slot cell.
    pub fn num_jump_vars(&self) -> usize {
        self.num_jump_vars
    }

    pub fn buy_var(&self, slot: usize, cell: usize) -> usize {
        self.slot_offsets[slot] + 2 * cell
    }

    pub fn sell_var(&self, slot: usize, cell: usize) -> usize {
        self.slot_offsets[slot] + 2 * cell + 1
    }

    /// Cell of the slot's information partition that contains `scenario`.
    pub fn slot_cell(&self, slot: usize, scenario: usize) -> usize {
        self.tree
            .layer(self.timeline.slots[slot].layer)
            .cell_of(scenario)
    }

    /// Affine forms of `(H^0, H^1)` at every timeline point in terms of the
    /// jump variables, for strategies without continuous trading.
    pub fn linear_forms(&self, theta: usize, scenario: usize) -> Vec<NodeForm> {
        let nv = self.num_jump_vars;
        let lambda = self.lambda();
        let mut h0 = vec![0.0; nv];
        let mut h1 = vec![0.0; nv];
        let mut out = Vec::with_capacity(self.timeline.points.len());
        let mut next_slot = 0;
        for p in 0..self.timeline.points.len() {
            out.push(NodeForm {
                h0: h0.clone(),
                h1: h1.clone(),
                price: self.price_at_point(theta, scenario, p),
            });
            while next_slot < self.timeline.slots.len()
                && self.timeline.slots[next_slot].after_point == p
            {
                let c = self.slot_cell(next_slot, scenario);
                let s = self.slot_price(theta, scenario, next_slot);
                let (b, d) = (self.buy_var(next_slot, c), self.sell_var(next_slot, c));
                h0[b] -= s;
                h0[d] += (1.0 - lambda) * s;
                h1[b] += 1.0;
                h1[d] -= 1.0;
                next_slot += 1;
            }
        }
        out
    }
}

/// `H^0 = x + h0·v`, `H^1 = h1·v` at one observation point, with the price
/// `S` there.
#[derive(Clone, Debug, PartialEq)]
pub struct NodeForm {
    pub h0: Vec<f64>,
    pub h1: Vec<f64>,
    pub price: f64,
}

impl NodeForm {
    pub fn eval(&self, x: f64, v: &[f64]) -> (f64, f64) {
        let dot = |a: &[f64]| a.iter().zip(v).map(|(a, b)| a * b).sum::<f64>();
        (x + dot(&self.h0), dot(&self.h1))
    }
}

/// Nonnegative buy and sell amounts per cell of one slot or interval.
#[derive(Clone, Debug, PartialEq)]
pub struct Trades {
    pub buy: Vec<f64>,
    pub sell: Vec<f64>,
}

impl Trades {
    pub fn zeros(cells: usize) -> Self {
        Trades {
            buy: vec![0.0; cells],
            sell: vec![0.0; cells],
        }
    }

    fn is_zero(&self) -> bool {
        self.buy.iter().chain(&self.sell).all(|&v| v == 0.0)
    }
}

/// Predictable share strategy with endowment `(x, 0)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Strategy {
    pub initial_cash: f64,
    /// One entry per timeline slot.
    pub jumps: Vec<Trades>,
    /// Trading rates, one entry per timeline interval.
    pub rates: Vec<Trades>,
}

impl Strategy {
    pub fn no_trade(market: &Market, initial_cash: f64) -> Self {
        let tl = market.timeline();
        Strategy {
            initial_cash,
            jumps: tl
                .slots
                .iter()
                .map(|s| Trades::zeros(market.tree().layer(s.layer).len()))
                .collect(),
            rates: tl
                .intervals
                .iter()
                .map(|iv| Trades::zeros(market.tree().layer(iv.layer).len()))
                .collect(),
        }
    }

    /// Jump strategy from a variable vector laid out as in
    /// [`Market::buy_var`]/[`Market::sell_var`].
    pub fn from_vars(market: &Market, initial_cash: f64, v: &[f64]) -> Self {
        let mut s = Strategy::no_trade(market, initial_cash);
        for (j, t) in s.jumps.iter_mut().enumerate() {
            for c in 0..t.buy.len() {
                t.buy[c] = v[market.buy_var(j, c)];
                t.sell[c] = v[market.sell_var(j, c)];
            }
        }
        s
    }

    pub fn jump_vars(&self, market: &Market) -> Vec<f64> {
        let mut v = vec![0.0; market.num_jump_vars()];
        for (j, t) in self.jumps.iter().enumerate() {
            for c in 0..t.buy.len() {
                v[market.buy_var(j, c)] = t.buy[c];
                v[market.sell_var(j, c)] = t.sell[c];
            }
        }
        v
    }

    pub fn has_rates(&self) -> bool {
        !self.rates.iter().all(Trades::is_zero)
    }

    /// Shape, sign and finiteness checks against the market layout.
    pub fn validate(&self, market: &Market) -> Result<()> {
        if !(self.initial_cash.is_finite() && self.initial_cash > 0.0) {
            return Err(Error::spec("initial_cash", "must be positive"));
        }
        let tl = market.timeline();
        if self.jumps.len() != tl.slots.len() || self.rates.len() != tl.intervals.len() {
            return Err(Error::spec("trades", "strategy layout does not match the market"));
        }
        let layers = tl
            .slots
            .iter()
            .map(|s| s.layer)
            .zip(&self.jumps)
            .chain(tl.intervals.iter().map(|iv| iv.layer).zip(&self.rates));
        for (layer, t) in layers {
            let cells = market.tree().layer(layer).len();
            if t.buy.len() != cells || t.sell.len() != cells {
                return Err(Error::spec("trades", "cell count does not match the partition"));
            }
            if t.buy.iter().chain(&t.sell).any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(Error::spec("trades", "buy and sell amounts must be finite and >= 0"));
            }
        }
        Ok(())
    }

    /// `Σ w_k · strategy_k`, applied to the endowment and every increment.
    pub fn linear_combination(terms: &[(f64, &Strategy)]) -> Result<Strategy> {
        let Some((_, first)) = terms.first() else {
            return Err(Error::Contract("empty combination".into()));
        };
        let mut out = (*first).clone();
        let comb = |get: &dyn Fn(&Strategy) -> &Vec<Trades>, out: &mut Vec<Trades>| -> Result<()> {
            for (j, t) in out.iter_mut().enumerate() {
                for c in 0..t.buy.len() {
                    let mut b = 0.0;
                    let mut s = 0.0;
                    for (w, st) in terms {
                        let tr = get(st).get(j).ok_or_else(|| {
                            Error::Contract("strategies have different layouts".into())
                        })?;
                        if tr.buy.len() != t.buy.len() {
                            return Err(Error::Contract("strategies have different layouts".into()));
                        }
                        b += w * tr.buy[c];
                        s += w * tr.sell[c];
                    }
                    t.buy[c] = b;
                    t.sell[c] = s;
                }
            }
            Ok(())
        };
        comb(&|s| &s.jumps, &mut out.jumps)?;
        comb(&|s| &s.rates, &mut out.rates)?;
        out.initial_cash = terms.iter().map(|(w, s)| w * s.initial_cash).sum();
        Ok(out)
    }

    /// Share position `H^1_T` before terminal liquidation, per scenario.
    pub fn terminal_position(&self, market: &Market, scenario: usize) -> f64 {
        let (up, down) = share_parts(self, market, scenario);
        up.terminal_value() - down.terminal_value()
    }
}

/// Increasing paths `(H^{1,↑}, H^{1,↓})` of a strategy in one scenario.
pub fn share_parts(strategy: &Strategy, market: &Market, scenario: usize) -> (LadlagPath, LadlagPath) {
    let tree = market.tree();
    let tl = market.timeline();
    let cell = |slot: usize| market.slot_cell(slot, scenario);
    let build = |pick: &dyn Fn(&Trades, usize) -> f64| -> LadlagPath {
        let mut events: Vec<PathEvent> = tree
            .event_times()
            .iter()
            .map(|&t| PathEvent::new(t, 0.0, 0.0))
            .collect();
        let mut initial_right = 0.0;
        for (j, s) in tl.slots.iter().enumerate() {
            let amount = pick(&strategy.jumps[j], cell(j));
            if s.time == 0.0 {
                initial_right += amount;
                continue;
            }
            let e = events
                .iter_mut()
                .find(|e| e.time == s.time)
                .expect("slot times are event times");
            match s.side {
                SlotSide::Left => e.left_jump += amount,
                SlotSide::Right => e.right_jump += amount,
            }
        }
        let slopes = tl
            .intervals
            .iter()
            .zip(&strategy.rates)
            .map(|(iv, r)| pick(r, tree.layer(iv.layer).cell_of(scenario)))
            .collect();
        LadlagPath::new(tree.horizon(), 0.0, initial_right, events, slopes)
            .expect("strategy increments form a valid path")
    };
    (
        build(&|t, c| t.buy[c]),
        build(&|t, c| t.sell[c]),
    )
}

/// `H^1 = H^{1,↑} − H^{1,↓}` in one scenario.
pub fn share_path(strategy: &Strategy, market: &Market, scenario: usize) -> LadlagPath {
    let (up, down) = share_parts(strategy, market, scenario);
    up.sub(&down).expect("same horizon")
}

/// `H^{0,θ} = x + ∫(1−λ)S dH^{1,↓} − ∫S dH^{1,↑}` in one scenario.
pub fn bond_ledger(strategy: &Strategy, market: &Market, theta: usize, scenario: usize) -> LadlagPath {
    let tree = market.tree();
    let tl = market.timeline();
    let lambda = market.lambda();
    let s_path = market.price(theta, scenario);
    let net = |t: &Trades, c: usize| -t.buy[c] + (1.0 - lambda) * t.sell[c];
    let mut events: Vec<PathEvent> = tree
        .event_times()
        .iter()
        .map(|&t| PathEvent::new(t, 0.0, 0.0))
        .collect();
    let mut initial_right = 0.0;
    for (j, s) in tl.slots.iter().enumerate() {
        let cash = market.slot_price(theta, scenario, j) * net(&strategy.jumps[j], market.slot_cell(j, scenario));
        if s.time == 0.0 {
            initial_right += cash;
            continue;
        }
        let e = events
            .iter_mut()
            .find(|e| e.time == s.time)
            .expect("slot times are event times");
        match s.side {
            SlotSide::Left => e.left_jump += cash,
            SlotSide::Right => e.right_jump += cash,
        }
    }
    let mut slopes = Vec::with_capacity(tl.intervals.len());
    let mut curvatures = Vec::with_capacity(tl.intervals.len());
    for (j, iv) in tl.intervals.iter().enumerate() {
        let r = net(&strategy.rates[j], tree.layer(iv.layer).cell_of(scenario));
        let seg = s_path.segment(j);
        slopes.push(r * seg.value);
        curvatures.push(0.5 * r * seg.slope);
    }
    LadlagPath::with_curvatures(
        tree.horizon(),
        strategy.initial_cash,
        initial_right,
        events,
        slopes,
        curvatures,
    )
    .expect("ledger of a valid strategy is a valid path")
}

/// `V^liq = H^0 + (H^1)⁺(1−λ)S − (H^1)⁻S`.
pub fn liquidation(h0: f64, h1: f64, price: f64, lambda: f64) -> f64 {
    h0 + ((1.0 - lambda) * price * h1).min(price * h1)
}

/// Liquidation value at `(t, kind)` in one model and scenario.
pub fn liquidation_value(
    strategy: &Strategy,
    market: &Market,
    theta: usize,
    scenario: usize,
    t: f64,
    kind: LimitKind,
) -> Result<f64> {
    let h0 = bond_ledger(strategy, market, theta, scenario);
    let h1 = share_path(strategy, market, scenario);
    let s = market.price(theta, scenario);
    let s_kind = if kind == LimitKind::Right {
        LimitKind::Value
    } else {
        kind
    };
    Ok(liquidation(
        h0.limit_at(t, kind)?,
        h1.limit_at(t, kind)?,
        s.limit_at(t, s_kind)?,
        market.lambda(),
    ))
}

/// Liquidation values at every timeline point.
pub fn liquidation_values(strategy: &Strategy, market: &Market, theta: usize, scenario: usize) -> Vec<f64> {
    let h0 = bond_ledger(strategy, market, theta, scenario);
    let h1 = share_path(strategy, market, scenario);
    market
        .timeline()
        .points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            liquidation(
                h0.limit_at(p.time, p.kind).expect("in range"),
                h1.limit_at(p.time, p.kind).expect("in range"),
                market.price_at_point(theta, scenario, i),
                market.lambda(),
            )
        })
        .collect()
}

/// `V^liq_T(θ, ω)` after terminal liquidation.
pub fn terminal_liquidation_value(strategy: &Strategy, market: &Market, theta: usize, scenario: usize) -> f64 {
    *liquidation_values(strategy, market, theta, scenario)
        .last()
        .expect("timeline has points")
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Violation {
    pub theta: usize,
    pub scenario: usize,
    pub time: f64,
    pub kind: LimitKind,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdmissibilityReport {
    pub admissible: bool,
    pub violation: Option<Violation>,
    /// Smallest liquidation value over all models, scenarios and times.
    pub min_value: f64,
}

/// Minimum over `[start, end]` of `H^0 + c·S·H^1` on one interval.
fn branch_min(h0: &Segment, h1: &Segment, s: &Segment, c: f64) -> (f64, f64) {
    // S·H^1 = s k + (σ k + s r) d + σ r d²
    let seg = Segment {
        start: h0.start,
        end: h0.end,
        value: h0.value + c * s.value * h1.value,
        slope: h0.slope + c * (s.slope * h1.value + s.value * h1.slope),
        curvature: h0.curvature + c * s.slope * h1.slope,
    };
    seg.min_on_closure()
}

/// Checks `V^liq ≥ −tol` at every left limit, value and right limit of every
/// event and everywhere in between, for every model and scenario.
pub fn is_admissible(strategy: &Strategy, market: &Market, tol: f64) -> AdmissibilityReport {
    let mut report = AdmissibilityReport {
        admissible: true,
        violation: None,
        min_value: f64::INFINITY,
    };
    let lambda = market.lambda();
    let rates = strategy.has_rates();
    for theta in 0..market.num_models() {
        for w in 0..market.num_scenarios() {
            let mut record = |time: f64, kind: LimitKind, value: f64| {
                report.min_value = report.min_value.min(value);
                if value < -tol && report.violation.is_none() {
                    report.admissible = false;
                    report.violation = Some(Violation {
                        theta,
                        scenario: w,
                        time,
                        kind,
                        value,
                    });
                }
            };
            let values = liquidation_values(strategy, market, theta, w);
            for (p, v) in market.timeline().points.iter().zip(&values) {
                record(p.time, p.kind, *v);
            }
            if rates {
                let h0 = bond_ledger(strategy, market, theta, w);
                let h1 = share_path(strategy, market, w);
                let s = market.price(theta, w);
                for j in 0..market.timeline().intervals.len() {
                    let (a, b, c) = (h0.segment(j), h1.segment(j), s.segment(j));
                    for coef in [1.0 - lambda, 1.0] {
                        let (v, t) = branch_min(&a, &b, &c, coef);
                        if t > a.start && t < a.end {
                            record(t, LimitKind::Value, v);
                        }
                    }
                }
            }
        }
    }
    report
}

/// Verifies the self-financing inequalities for a candidate bond account
/// (one path per scenario) against the strategy's share trades in model
/// `theta`: continuous part, left jumps and right jumps, each within `tol`.
pub fn check_self_financing(
    h0: &[LadlagPath],
    strategy: &Strategy,
    market: &Market,
    theta: usize,
    tol: f64,
) -> Result<bool> {
    if h0.len() != market.num_scenarios() {
        return Err(Error::Contract("one bond path per scenario is required".into()));
    }
    let tree = market.tree();
    let tl = market.timeline();
    let lambda = market.lambda();
    let net = |t: &Trades, c: usize| -t.buy[c] + (1.0 - lambda) * t.sell[c];
    for (w, b) in h0.iter().enumerate() {
        if b.horizon() != tree.horizon() {
            return Err(Error::Contract("bond path horizon differs".into()));
        }
        if b.initial_value() > strategy.initial_cash + tol {
            return Ok(false);
        }
        let s_path = market.price(theta, w);
        let mut allowed_left: Vec<(f64, f64)> = Vec::new();
        let mut allowed_right: Vec<(f64, f64)> = Vec::new();
        for (j, s) in tl.slots.iter().enumerate() {
            let cash = market.slot_price(theta, w, j) * net(&strategy.jumps[j], market.slot_cell(j, w));
            match s.side {
                SlotSide::Left => allowed_left.push((s.time, cash)),
                SlotSide::Right => allowed_right.push((s.time, cash)),
            }
        }
        let allowed = |list: &[(f64, f64)], t: f64| {
            list.iter().find(|(u, _)| *u == t).map_or(0.0, |(_, c)| *c)
        };
        if b.initial_right_jump() > allowed(&allowed_right, 0.0) + tol {
            return Ok(false);
        }
        for e in b.events() {
            if e.left_jump > allowed(&allowed_left, e.time) + tol
                || e.right_jump > allowed(&allowed_right, e.time) + tol
            {
                return Ok(false);
            }
        }
        // continuous part: dH^0 − r S dt must be a nonpositive density
        let mut breaks: Vec<f64> = b.knot_times();
        breaks.extend(s_path.knot_times());
        breaks.sort_by(|x, y| x.partial_cmp(y).expect("finite"));
        breaks.dedup();
        for win in breaks.windows(2) {
            let (lo, hi) = (win[0], win[1]);
            let mid = 0.5 * (lo + hi);
            let j = tl
                .intervals
                .iter()
                .position(|iv| iv.start <= mid && mid < iv.end)
                .expect("intervals cover the horizon");
            let r = net(&strategy.rates[j], tree.layer(tl.intervals[j].layer).cell_of(w));
            let bs = b.segment_at(mid);
            let ss = s_path.segment_at(mid);
            for u in [lo, hi] {
                if bs.derivative(u) - r * ss.eval(u) > tol {
                    return Ok(false);
                }
            }
        }
    }
    Ok(true)
}
