//! JSON file formats: market specifications, strategies, claims and
//! consistent-price-system certificates.
//!
//! Every validation failure is an [`Error::Spec`] naming the offending field
//! path, e.g. `scenarios.probabilities` or `events[1].post[0][2]`.

use std::collections::HashMap;
use std::path::Path;

use indexmap::IndexMap;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::cps::ConsistentPriceSystem;
use crate::market::{Market, ModelFamily, Partition, ScenarioTree, SlotSide, Strategy};
use crate::paths::{LadlagPath, PathEvent};
use crate::{Error, Result};

/// Deserialises `text`, reporting the field path of the first error.
pub fn parse_json<T: DeserializeOwned>(text: &str) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let mut path = e.path().to_string();
        let inner = e.into_inner();
        let msg = inner.to_string();
        if let Some(field) = msg
            .strip_prefix("missing field `")
            .and_then(|rest| rest.split('`').next())
        {
            path = if path == "." { field.to_string() } else { format!("{path}.{field}") };
        }
        let path = if path == "." { "(root)".to_string() } else { path };
        Error::spec(path, msg)
    })
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_json(&text)
}

pub fn to_json_pretty<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serialisable value");
    s.push('\n');
    s
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenariosSpec {
    pub labels: Vec<String>,
    pub probabilities: Vec<f64>,
}

pub type PartitionSpec = Vec<Vec<String>>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventSpec {
    pub time: f64,
    /// Information just before the event; must equal the previous `post`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pre: Option<PartitionSpec>,
    pub post: PartitionSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathEventSpec {
    pub time: f64,
    #[serde(default)]
    pub left_jump: f64,
    #[serde(default)]
    pub right_jump: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathSpec {
    pub initial_value: f64,
    #[serde(default)]
    pub events: Vec<PathEventSpec>,
    pub slopes: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketSpec {
    pub horizon: f64,
    pub scenarios: ScenariosSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub root_partition: Option<PartitionSpec>,
    pub events: Vec<EventSpec>,
    /// Model label → scenario label → price path.
    pub models: IndexMap<String, IndexMap<String, PathSpec>>,
    pub lambda: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_prime: Option<f64>,
}

fn label_index(labels: &[String]) -> HashMap<&str, usize> {
    labels.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect()
}

fn partition(spec: &PartitionSpec, index: &HashMap<&str, usize>, at: &str) -> Result<Partition> {
    let n = index.len();
    let mut cells = Vec::with_capacity(spec.len());
    let mut seen = vec![false; n];
    for (c, cell) in spec.iter().enumerate() {
        if cell.is_empty() {
            return Err(Error::spec(format!("{at}[{c}]"), "cells must be nonempty"));
        }
        let mut ids = Vec::with_capacity(cell.len());
        for (j, l) in cell.iter().enumerate() {
            let Some(&w) = index.get(l.as_str()) else {
                return Err(Error::spec(format!("{at}[{c}][{j}]"), format!("unknown scenario label {l:?}")));
            };
            if seen[w] {
                return Err(Error::spec(format!("{at}[{c}][{j}]"), format!("scenario {l:?} appears twice")));
            }
            seen[w] = true;
            ids.push(w);
        }
        cells.push(ids);
    }
    if let Some(w) = seen.iter().position(|s| !s) {
        let label = index.iter().find(|(_, &i)| i == w).map(|(l, _)| *l).unwrap_or("?");
        return Err(Error::spec(at, format!("scenario {label:?} is not covered")));
    }
    Partition::new(cells, n).map_err(|e| Error::spec(at, e.to_string()))
}

fn partition_spec(p: &Partition, labels: &[String]) -> PartitionSpec {
    p.cells()
        .iter()
        .map(|c| c.iter().map(|&w| labels[w].clone()).collect())
        .collect()
}

impl MarketSpec {
    pub fn tree(&self) -> Result<ScenarioTree> {
        let labels = &self.scenarios.labels;
        let index = label_index(labels);
        if index.len() != labels.len() {
            return Err(Error::spec("scenarios.labels", "labels must be distinct"));
        }
        let root = match &self.root_partition {
            Some(p) => partition(p, &index, "root_partition")?,
            None => Partition::trivial(labels.len()),
        };
        let mut events = Vec::with_capacity(self.events.len());
        let mut prev = root.clone();
        for (k, e) in self.events.iter().enumerate() {
            let post = partition(&e.post, &index, &format!("events[{k}].post"))?;
            if let Some(pre) = &e.pre {
                let at = format!("events[{k}].pre");
                let pre = partition(pre, &index, &at)?;
                if !(pre.refines(&prev) && prev.refines(&pre)) {
                    return Err(Error::spec(at, "must equal the information partition after the previous event"));
                }
            }
            events.push((e.time, post.clone()));
            prev = post;
        }
        ScenarioTree::new(labels.clone(), self.scenarios.probabilities.clone(), self.horizon, root, events)
    }

    pub fn build(&self) -> Result<Market> {
        let tree = self.tree()?;
        let labels = tree.labels().to_vec();
        if self.models.is_empty() {
            return Err(Error::spec("models", "at least one model is required"));
        }
        let mut paths = Vec::with_capacity(self.models.len());
        for (name, per) in &self.models {
            for l in per.keys() {
                if !labels.contains(l) {
                    return Err(Error::spec(format!("models.{name}.{l}"), "unknown scenario label"));
                }
            }
            let mut row = Vec::with_capacity(labels.len());
            for l in &labels {
                let at = format!("models.{name}.{l}");
                let p = per.get(l).ok_or_else(|| Error::spec(&at, "missing price path"))?;
                let events = p
                    .events
                    .iter()
                    .map(|e| PathEvent::new(e.time, e.left_jump, e.right_jump))
                    .collect();
                let path = LadlagPath::new(self.horizon, p.initial_value, 0.0, events, p.slopes.clone())
                    .map_err(|e| Error::spec(&at, e.to_string()))?;
                row.push(path);
            }
            paths.push(row);
        }
        let family = ModelFamily::new(self.models.keys().cloned().collect(), paths, self.lambda, self.lambda_prime)?;
        Market::new(tree, family)
    }

    pub fn from_market(market: &Market) -> Self {
        let tree = market.tree();
        let labels = tree.labels();
        let fam = market.family();
        let root = tree.layer(0);
        let models = fam
            .labels()
            .iter()
            .enumerate()
            .map(|(theta, name)| {
                let per = labels
                    .iter()
                    .enumerate()
                    .map(|(w, l)| {
                        let p = market.price(theta, w);
                        let spec = PathSpec {
                            initial_value: p.initial_value(),
                            events: p
                                .events()
                                .iter()
                                .map(|e| PathEventSpec {
                                    time: e.time,
                                    left_jump: e.left_jump,
                                    right_jump: e.right_jump,
                                })
                                .collect(),
                            slopes: p.slopes().to_vec(),
                        };
                        (l.clone(), spec)
                    })
                    .collect();
                (name.clone(), per)
            })
            .collect();
        MarketSpec {
            horizon: tree.horizon(),
            scenarios: ScenariosSpec {
                labels: labels.to_vec(),
                probabilities: tree.probabilities().to_vec(),
            },
            root_partition: (root.len() > 1).then(|| partition_spec(root, labels)),
            events: tree
                .event_times()
                .iter()
                .enumerate()
                .map(|(i, &t)| EventSpec {
                    time: t,
                    pre: None,
                    post: partition_spec(tree.layer(i + 1), labels),
                })
                .collect(),
            models,
            lambda: fam.lambda(),
            lambda_prime: fam.lambda_prime(),
        }
    }
}

pub fn parse_market(text: &str) -> Result<Market> {
    parse_json::<MarketSpec>(text)?.build()
}

pub fn load_market(path: &Path) -> Result<Market> {
    read_json::<MarketSpec>(path)?.build()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TradeKind {
    /// Trade at `S_{t−}` on the information before the event.
    Left,
    /// Trade at `S_t` on the information after the event.
    Right,
    /// Constant trading rate on the interval `time_index`.
    Rate,
}

/// A cell of the relevant information partition, by index or by any
/// scenario label it contains.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CellRef {
    Index(usize),
    Label(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TradeSpec {
    /// 0 is time 0, `k` is the `k`-th event; for rates, the interval index.
    pub time_index: usize,
    pub kind: TradeKind,
    pub cell: CellRef,
    #[serde(default)]
    pub buy: f64,
    #[serde(default)]
    pub sell: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrategySpec {
    pub initial_cash: f64,
    #[serde(default)]
    pub trades: Vec<TradeSpec>,
}

impl StrategySpec {
    pub fn to_strategy(&self, market: &Market) -> Result<Strategy> {
        let tree = market.tree();
        let tl = market.timeline();
        let index = label_index(tree.labels());
        let mut s = Strategy::no_trade(market, self.initial_cash);
        for (i, t) in self.trades.iter().enumerate() {
            let at = |f: &str| format!("trades[{i}].{f}");
            let time = match t.time_index {
                0 => 0.0,
                k => *tree
                    .event_times()
                    .get(k - 1)
                    .filter(|_| t.kind != TradeKind::Rate)
                    .unwrap_or(&f64::NAN),
            };
            let (layer, target) = match t.kind {
                TradeKind::Rate => {
                    let iv = tl
                        .intervals
                        .get(t.time_index)
                        .ok_or_else(|| Error::spec(at("time_index"), "no such interval"))?;
                    (iv.layer, &mut s.rates[t.time_index])
                }
                kind => {
                    let side = if kind == TradeKind::Left { SlotSide::Left } else { SlotSide::Right };
                    let j = tl
                        .slots
                        .iter()
                        .position(|sl| sl.time == time && sl.side == side)
                        .ok_or_else(|| Error::spec(at("time_index"), format!("no {kind:?} trading slot at this index")))?;
                    (tl.slots[j].layer, &mut s.jumps[j])
                }
            };
            let part = tree.layer(layer);
            let cell = match &t.cell {
                CellRef::Index(c) if *c < part.len() => *c,
                CellRef::Index(c) => {
                    return Err(Error::spec(at("cell"), format!("cell {c} out of range (partition has {})", part.len())))
                }
                CellRef::Label(l) => part.cell_of(
                    *index
                        .get(l.as_str())
                        .ok_or_else(|| Error::spec(at("cell"), format!("unknown scenario label {l:?}")))?,
                ),
            };
            for (name, v) in [("buy", t.buy), ("sell", t.sell)] {
                if !(v.is_finite() && v >= 0.0) {
                    return Err(Error::spec(at(name), "must be finite and >= 0"));
                }
            }
            target.buy[cell] += t.buy;
            target.sell[cell] += t.sell;
        }
        s.validate(market)?;
        Ok(s)
    }

    pub fn from_strategy(strategy: &Strategy, market: &Market) -> Self {
        let tree = market.tree();
        let tl = market.timeline();
        let time_index = |t: f64| {
            tree.event_times()
                .iter()
                .position(|&e| e == t)
                .map_or(0, |k| k + 1)
        };
        let mut trades = Vec::new();
        let mut push = |time_index: usize, kind: TradeKind, t: &crate::market::Trades| {
            for c in 0..t.buy.len() {
                if t.buy[c] != 0.0 || t.sell[c] != 0.0 {
                    trades.push(TradeSpec {
                        time_index,
                        kind,
                        cell: CellRef::Index(c),
                        buy: t.buy[c],
                        sell: t.sell[c],
                    });
                }
            }
        };
        for (slot, t) in tl.slots.iter().zip(&strategy.jumps) {
            let kind = match slot.side {
                SlotSide::Left => TradeKind::Left,
                SlotSide::Right => TradeKind::Right,
            };
            push(time_index(slot.time), kind, t);
        }
        for (j, t) in strategy.rates.iter().enumerate() {
            push(j, TradeKind::Rate, t);
        }
        StrategySpec {
            initial_cash: strategy.initial_cash,
            trades,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClaimSpec {
    /// Scenario label → terminal payoff.
    pub payoff: IndexMap<String, f64>,
}

impl ClaimSpec {
    pub fn to_claim(&self, market: &Market) -> Result<Vec<f64>> {
        let labels = market.tree().labels();
        for l in self.payoff.keys() {
            if !labels.contains(l) {
                return Err(Error::spec(format!("payoff.{l}"), "unknown scenario label"));
            }
        }
        labels
            .iter()
            .map(|l| {
                let at = format!("payoff.{l}");
                match self.payoff.get(l) {
                    Some(&g) if g.is_finite() && g >= 0.0 => Ok(g),
                    Some(_) => Err(Error::spec(at, "payoff must be finite and >= 0")),
                    None => Err(Error::spec(at, "missing payoff")),
                }
            })
            .collect()
    }
}

/// Certificates are stored as the price system itself; shape and
/// consistency are re-verified by the consumer.
pub type Certificate = ConsistentPriceSystem;
