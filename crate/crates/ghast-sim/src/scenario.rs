//! Scenario runner: builds the world from a config, runs it to the
//! horizon, and writes the event log, block table, aggregates and oracle
//! report. Also hosts parameter sweeps and batch risk queries.

use std::path::Path;

use ghast_core::confirm::{confirmation_risk, RiskQuery};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adversary;
use crate::config::{RawConfig, ScenarioConfig};
use crate::events::{format_log, Event};
use crate::metrics::{MetricsRecord, Observer};
use crate::report::ReportFile;
use crate::world::{Adversary, World};
use crate::SimError;

/// A world with its adversary and observer, advanced one round at a time.
pub struct Simulation {
    pub world: World,
    pub adversary: Box<dyn Adversary>,
    pub observer: Observer,
}

impl Simulation {
    pub fn new(cfg: &ScenarioConfig) -> Result<Simulation, SimError> {
        let world = World::new(&cfg.sim, Some(&cfg.oracle))?;
        let adversary = adversary::build(&cfg.adversary)?;
        let observer = Observer::new(Some(&cfg.confirm), &world);
        Ok(Simulation { world, adversary, observer })
    }

    pub fn step(&mut self) -> Result<(), SimError> {
        self.world.step(self.adversary.as_mut())?;
        self.observer.after_round(&self.world);
        Ok(())
    }

    /// Runs the remaining rounds up to the horizon.
    pub fn run(&mut self) -> Result<(), SimError> {
        while self.world.round() < self.world.cfg().horizon {
            self.step()?;
        }
        Ok(())
    }

    pub fn output(&self) -> Result<RunOutput, SimError> {
        if let Some(e) = self.observer.confirm_error() {
            return Err(SimError::Confirm(e.clone()));
        }
        let report = match self.world.oracle() {
            Some(o) => ReportFile::from_report(o.report()),
            None => ReportFile::disabled(),
        };
        Ok(RunOutput { events: self.world.events().to_vec(), metrics: self.observer.finish(&self.world), report })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunOutput {
    pub events: Vec<Event>,
    pub metrics: MetricsRecord,
    pub report: ReportFile,
}

pub fn run_scenario(cfg: &ScenarioConfig) -> Result<RunOutput, SimError> {
    let mut sim = Simulation::new(cfg)?;
    sim.run()?;
    sim.output()
}

/// Writes the four artifacts under `dir` using the configured file names.
pub fn write_outputs(out: &RunOutput, cfg: &ScenarioConfig, dir: &Path) -> Result<(), SimError> {
    std::fs::create_dir_all(dir).map_err(|e| SimError::io(dir, e))?;
    let enc = |e: crate::metrics::MetricsError| SimError::Encode(e.to_string());
    let files = [
        (&cfg.output.event_log, format_log(&out.events)),
        (&cfg.output.blocks_csv, out.metrics.to_csv().map_err(enc)?),
        (&cfg.output.metrics_json, out.metrics.to_json().map_err(enc)?),
        (&cfg.output.report, out.report.to_json()),
    ];
    for (name, body) in files {
        let path = dir.join(name);
        std::fs::write(&path, body).map_err(|e| SimError::io(&path, e))?;
    }
    Ok(())
}

/// One aggregate row of a sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub axis: String,
    pub value: String,
    pub seed: u64,
    pub rounds: u64,
    pub blocks: u64,
    pub confirmed_blocks: u64,
    pub latency_p50: Option<f64>,
    pub latency_p95: Option<f64>,
    pub reorg_rate: f64,
    pub adapt_con_fraction: f64,
    pub oracle_violations: u64,
}

/// Runs `raw` once per value of `axis` (a numeric `section.key` field).
/// Run `i` uses seed `base_seed + i`. Runs execute in parallel; rows come
/// back in value order.
pub fn sweep(raw: &RawConfig, axis: &str, values: &[String], base_seed: u64) -> Result<Vec<SweepRow>, SimError> {
    if values.is_empty() {
        return Err(crate::ConfigError { line: 0, msg: "sweep needs at least one value".into() }.into());
    }
    let mut cfgs = Vec::with_capacity(values.len());
    for (i, v) in values.iter().enumerate() {
        if v.trim().parse::<f64>().is_err() {
            return Err(crate::ConfigError { line: 0, msg: format!("sweep value `{v}` is not numeric") }.into());
        }
        let mut r = raw.clone();
        r.set(axis, v.trim())?;
        r.set("sim.seed", &(base_seed + i as u64).to_string())?;
        cfgs.push(ScenarioConfig::from_raw(&r)?);
    }
    cfgs.par_iter()
        .zip(values.par_iter())
        .map(|(cfg, v)| {
            let out = run_scenario(cfg)?;
            let a = &out.metrics.agg;
            Ok(SweepRow {
                axis: axis.to_string(),
                value: v.trim().to_string(),
                seed: cfg.sim.seed,
                rounds: a.rounds,
                blocks: a.blocks,
                confirmed_blocks: a.confirmed_blocks,
                latency_p50: a.latency_p50,
                latency_p95: a.latency_p95,
                reorg_rate: a.reorg_rate,
                adapt_con_fraction: a.adapt_con_fraction,
                oracle_violations: a.oracle_violations,
            })
        })
        .collect()
}

pub fn sweep_to_csv(rows: &[SweepRow]) -> Result<String, SimError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| SimError::Encode(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| SimError::Encode(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| SimError::Encode(e.to_string()))
}

pub fn sweep_from_csv(text: &str) -> Result<Vec<SweepRow>, SimError> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    r.deserialize().collect::<Result<_, _>>().map_err(|e| SimError::Encode(e.to_string()))
}

/// Risk query file: one query per line, whitespace separated
/// `m n theta t beta eta_w`; `#` starts a comment.
pub fn parse_risk_queries(text: &str) -> Result<Vec<RiskQuery>, crate::ConfigError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let bad = |msg: &str| crate::ConfigError { line: i + 1, msg: msg.to_string() };
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 6 {
            return Err(bad("expected `m n theta t beta eta_w`"));
        }
        let int = |s: &str| s.parse::<u64>().map_err(|_| bad("expected a non-negative integer"));
        let beta = f[4].parse::<f64>().map_err(|_| bad("expected a number for beta"))?;
        let q = RiskQuery { m: int(f[0])?, n: int(f[1])?, theta: int(f[2])?, t: int(f[3])?, beta, eta_w: int(f[5])? };
        q.validate().map_err(|e| bad(&e.to_string()))?;
        out.push(q);
    }
    Ok(out)
}

/// One output line per query: the inputs followed by the risk.
pub fn answer_risk_queries(qs: &[RiskQuery]) -> Result<String, SimError> {
    let mut s = String::from("# m n theta t beta eta_w risk\n");
    for q in qs {
        let r = confirmation_risk(q)?;
        s.push_str(&format!("{} {} {} {} {} {} {:e}\n", q.m, q.n, q.theta, q.t, q.beta, q.eta_w, r));
    }
    Ok(s)
}

/// Reads the answers written by [`answer_risk_queries`].
pub fn parse_risk_answers(text: &str) -> Result<Vec<(RiskQuery, f64)>, crate::ConfigError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (head, risk) = line.rsplit_once(' ').ok_or(crate::ConfigError { line: i + 1, msg: "missing risk".into() })?;
        let q = parse_risk_queries(head).map_err(|e| crate::ConfigError { line: i + 1, msg: e.msg })?;
        let r = risk.parse::<f64>().map_err(|_| crate::ConfigError { line: i + 1, msg: "bad risk".into() })?;
        out.push((q[0], r));
    }
    Ok(out)
}
