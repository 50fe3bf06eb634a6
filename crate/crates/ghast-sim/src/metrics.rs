//! Per-block records and run aggregates collected from the observer (honest
//! node 0), with their CSV and JSON encodings.
//!
//! `blocks.csv` columns: `block_id, creator, born_round, exposure_round,
//! confirm_round, weight, strategy, pivot_enter_round, pivot_exit_round`.
//! Empty cells mean "never". `metrics.json` holds one [`Aggregates`]
//! object.

use std::collections::BTreeSet;

use fixedbitset::FixedBitSet;
use ghast_core::confirm::{ConfirmError, Confirmer};
use ghast_core::{Creator, Ix, Strategy};
use serde::{Deserialize, Serialize};

use crate::config::ConfirmOptions;
use crate::world::World;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockRecord {
    pub block_id: String,
    pub creator: String,
    pub born_round: u64,
    pub exposure_round: Option<u64>,
    pub confirm_round: Option<u64>,
    pub weight: u64,
    pub strategy: Option<String>,
    pub pivot_enter_round: Option<u64>,
    pub pivot_exit_round: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
pub struct Aggregates {
    pub rounds: u64,
    pub blocks: u64,
    pub honest_blocks: u64,
    pub malicious_blocks: u64,
    pub exposed_blocks: u64,
    pub confirmed_blocks: u64,
    /// Confirmation minus exposure, over confirmed exposed blocks.
    pub latency_p50: Option<f64>,
    pub latency_p95: Option<f64>,
    pub latency_max: Option<f64>,
    /// Observer pivot switches that dropped at least one block.
    pub reorgs: u64,
    /// Switches that dropped two or more blocks.
    pub deep_reorgs: u64,
    pub max_reorg_depth: u64,
    pub reorg_rate: f64,
    pub con_blocks: u64,
    /// Share of honest blocks mined with the conservative strategy.
    pub adapt_con_fraction: f64,
    /// Rounds in which the observer's graph dictated the conservative strategy.
    pub con_rounds: u64,
    /// Maximal runs of such rounds, as inclusive `[start, end]` pairs.
    pub con_spans: Vec<(u64, u64)>,
    /// Confirmed pivot heights later dropped from the observer's pivot.
    pub safety_reverts: u64,
    /// Pivot blocks whose assumption-break risk alone exceeds the target.
    /// That risk never falls as the graph grows, so the observer skips them
    /// and waits for a descendant to confirm.
    pub unconfirmable: u64,
    /// First round at which all honest nodes agree on the top-level pivot
    /// block and its margin is at least twice η_a everywhere.
    pub contest_round: Option<u64>,
    pub oracle_events: u64,
    pub oracle_violations: u64,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct MetricsRecord {
    pub blocks: Vec<BlockRecord>,
    pub agg: Aggregates,
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum MetricsError {
    #[error("csv: {0}")]
    Csv(String),
    #[error("json: {0}")]
    Json(String),
}

impl MetricsRecord {
    pub fn to_csv(&self) -> Result<String, MetricsError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for b in &self.blocks {
            w.serialize(b).map_err(|e| MetricsError::Csv(e.to_string()))?;
        }
        if self.blocks.is_empty() {
            w.write_record([
                "block_id",
                "creator",
                "born_round",
                "exposure_round",
                "confirm_round",
                "weight",
                "strategy",
                "pivot_enter_round",
                "pivot_exit_round",
            ])
            .map_err(|e| MetricsError::Csv(e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| MetricsError::Csv(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| MetricsError::Csv(e.to_string()))
    }

    pub fn blocks_from_csv(text: &str) -> Result<Vec<BlockRecord>, MetricsError> {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        r.deserialize().collect::<Result<_, _>>().map_err(|e| MetricsError::Csv(e.to_string()))
    }

    pub fn to_json(&self) -> Result<String, MetricsError> {
        serde_json::to_string_pretty(&self.agg).map_err(|e| MetricsError::Json(e.to_string())).map(|s| s + "\n")
    }

    pub fn aggregates_from_json(text: &str) -> Result<Aggregates, MetricsError> {
        serde_json::from_str(text).map_err(|e| MetricsError::Json(e.to_string()))
    }
}

/// Nearest-rank percentile of a sorted slice.
pub fn percentile(sorted: &[u64], q: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let rank = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    Some(sorted[rank - 1] as f64)
}

/// Watches the observer's pivot chain round by round: reorganisations,
/// pivot membership, confirmations, adaptation spans and the top-level
/// contest.
pub struct Observer {
    confirm: Option<(Confirmer, ConfirmOptions)>,
    confirmed: FixedBitSet,
    confirm_round: Vec<u64>,
    pivot_enter: Vec<u64>,
    pivot_exit: Vec<u64>,
    confirmed_height: usize,
    last_tip: Ix,
    reorgs: u64,
    deep_reorgs: u64,
    max_reorg_depth: u64,
    safety_reverts: u64,
    unconfirmable: BTreeSet<Ix>,
    con_rounds: u64,
    con_spans: Vec<(u64, u64)>,
    contest_margin: i64,
    contest_round: Option<u64>,
    confirm_error: Option<ConfirmError>,
}

const UNSET: u64 = u64::MAX;

impl Observer {
    pub fn new(confirm: Option<&ConfirmOptions>, w: &World) -> Observer {
        let confirm = confirm.filter(|c| c.enabled).map(|c| (Confirmer::new(c.cfg.clone(), w.params().clone()), c.clone()));
        Observer {
            confirm,
            confirmed: FixedBitSet::new(),
            confirm_round: Vec::new(),
            pivot_enter: vec![0],
            pivot_exit: Vec::new(),
            confirmed_height: 0,
            last_tip: 0,
            reorgs: 0,
            deep_reorgs: 0,
            max_reorg_depth: 0,
            safety_reverts: 0,
            unconfirmable: BTreeSet::new(),
            con_rounds: 0,
            con_spans: Vec::new(),
            contest_margin: 2 * w.cfg().params.eta_a as i64,
            contest_round: None,
            confirm_error: None,
        }
    }

    fn grow(&mut self, n: usize) {
        if self.confirm_round.len() < n {
            self.confirm_round.resize(n, UNSET);
            self.pivot_enter.resize(n, UNSET);
            self.pivot_exit.resize(n, UNSET);
            self.confirmed.grow(n);
        }
    }

    /// First error the confirmation rule raised, if any.
    pub fn confirm_error(&self) -> Option<&ConfirmError> {
        self.confirm_error.as_ref()
    }

    pub fn confirm_round(&self, ix: Ix) -> Option<u64> {
        self.confirm_round.get(ix as usize).copied().filter(|&r| r != UNSET)
    }

    pub fn contest_round(&self) -> Option<u64> {
        self.contest_round
    }

    /// Call after every finished round; `w.round()` is then one past it.
    pub fn after_round(&mut self, w: &World) {
        let r = w.round() - 1;
        let store = w.store();
        let view = &w.nodes()[0];
        self.grow(store.len());
        let pivot = view.pivot();
        let tip = *pivot.last().expect("genesis");
        let old_h = store.height(self.last_tip) as usize;
        let fork_h = if pivot.get(old_h) == Some(&self.last_tip) {
            old_h
        } else {
            let mut x = self.last_tip;
            while pivot.get(store.height(x) as usize) != Some(&x) {
                self.pivot_exit[x as usize] = r;
                x = store.parent(x);
            }
            let f = store.height(x) as usize;
            let depth = (old_h - f) as u64;
            self.reorgs += 1;
            if depth >= 2 {
                self.deep_reorgs += 1;
            }
            self.max_reorg_depth = self.max_reorg_depth.max(depth);
            f
        };
        for &b in &pivot[fork_h + 1..] {
            if self.pivot_enter[b as usize] == UNSET {
                self.pivot_enter[b as usize] = r;
            }
        }
        self.last_tip = tip;
        if self.confirmed_height > fork_h {
            self.safety_reverts += (self.confirmed_height - fork_h) as u64;
            self.confirmed_height = fork_h;
        }
        if let Some((confirmer, opts)) = self.confirm.as_mut() {
            if r % opts.every == 0 && self.confirm_error.is_none() {
                let mut budget = opts.max_per_round;
                let mut h = self.confirmed_height + 1;
                while budget > 0 && h < pivot.len() {
                    let b = pivot[h];
                    if self.unconfirmable.contains(&b) {
                        h += 1;
                        continue;
                    }
                    budget -= 1;
                    match confirmer.decide(store, view, b) {
                        Ok(d) if d.confirmed => {
                            self.confirmed_height = h;
                            h += 1;
                            let mut stack = vec![b];
                            if !self.confirmed.put(b as usize) {
                                while let Some(x) = stack.pop() {
                                    self.confirm_round[x as usize] = r;
                                    for dep in store.deps(x) {
                                        if !self.confirmed.put(dep as usize) {
                                            stack.push(dep);
                                        }
                                    }
                                }
                            }
                        }
                        Ok(d) => {
                            log::debug!(
                                "round {r}: height {h} unconfirmed, m {} n {} risk {:e} (confirmation {:e}, break {:e})",
                                d.m,
                                d.n,
                                d.risk,
                                d.confirmation_risk,
                                d.break_risk
                            );
                            if d.break_risk > opts.cfg.target_risk {
                                self.unconfirmable.insert(b);
                                h += 1;
                            } else {
                                break;
                            }
                        }
                        Err(e) => {
                            self.confirm_error = Some(e);
                            break;
                        }
                    }
                }
            }
        }
        if w.observer_strategy() == Strategy::Con {
            self.con_rounds += 1;
            match self.con_spans.last_mut() {
                Some(s) if s.1 + 1 == r => s.1 = r,
                _ => self.con_spans.push((r, r)),
            }
        }
        if self.contest_round.is_none() {
            let mut agreed: Option<Ix> = None;
            let mut ok = true;
            for v in w.nodes() {
                let Some(&c) = v.pivot().get(1) else {
                    ok = false;
                    break;
                };
                if agreed.is_some_and(|a| a != c) || v.margin(store, c) < self.contest_margin {
                    ok = false;
                    break;
                }
                agreed = Some(c);
            }
            if ok {
                self.contest_round = Some(r);
            }
        }
    }

    pub fn finish(&self, w: &World) -> MetricsRecord {
        let store = w.store();
        let n = store.len();
        let opt = |v: &Vec<u64>, i: usize| v.get(i).copied().filter(|&r| r != UNSET);
        let mut blocks = Vec::with_capacity(n);
        let mut latencies = Vec::new();
        let mut agg = Aggregates { rounds: w.round(), ..Aggregates::default() };
        for i in 0..n {
            let ix = i as Ix;
            let exposure = if i == 0 { None } else { w.exposure(ix) };
            let confirm = opt(&self.confirm_round, i);
            let strategy = w.strategy(ix);
            if i > 0 {
                agg.blocks += 1;
                match store.creator(ix) {
                    Creator::Honest => {
                        agg.honest_blocks += 1;
                        if strategy == Some(Strategy::Con) {
                            agg.con_blocks += 1;
                        }
                    }
                    Creator::Malicious => agg.malicious_blocks += 1,
                }
                if let Some(e) = exposure {
                    agg.exposed_blocks += 1;
                    if let Some(c) = confirm {
                        agg.confirmed_blocks += 1;
                        latencies.push(c.saturating_sub(e));
                    }
                }
            }
            blocks.push(BlockRecord {
                block_id: store.id(ix).to_string(),
                creator: store.creator(ix).as_str().to_string(),
                born_round: store.born_round(ix),
                exposure_round: exposure,
                confirm_round: confirm,
                weight: store.weight(ix),
                strategy: strategy.map(|s| match s {
                    Strategy::Opt => "opt".to_string(),
                    Strategy::Con => "con".to_string(),
                }),
                pivot_enter_round: opt(&self.pivot_enter, i),
                pivot_exit_round: opt(&self.pivot_exit, i),
            });
        }
        latencies.sort_unstable();
        agg.latency_p50 = percentile(&latencies, 0.5);
        agg.latency_p95 = percentile(&latencies, 0.95);
        agg.latency_max = latencies.last().map(|&x| x as f64);
        agg.reorgs = self.reorgs;
        agg.deep_reorgs = self.deep_reorgs;
        agg.max_reorg_depth = self.max_reorg_depth;
        agg.reorg_rate = if agg.rounds == 0 { 0.0 } else { self.reorgs as f64 / agg.rounds as f64 };
        agg.adapt_con_fraction =
            if agg.honest_blocks == 0 { 0.0 } else { agg.con_blocks as f64 / agg.honest_blocks as f64 };
        agg.con_rounds = self.con_rounds;
        agg.con_spans = self.con_spans.clone();
        agg.safety_reverts = self.safety_reverts;
        agg.unconfirmable = self.unconfirmable.len() as u64;
        agg.contest_round = self.contest_round;
        if let Some(o) = w.oracle() {
            agg.oracle_events = o.report().events_checked;
            agg.oracle_violations = o.report().violation_count;
        }
        MetricsRecord { blocks, agg }
    }
}
