//! Scenario configuration: flat `key = value` text with `[section]` headers.
//!
//! ```text
//! [sim]
//! nodes = 32
//! beta = 0.1
//! delay = 1
//! lambda = 60        # or eta_d = ...; eta_d = nodes*(delay+1)/lambda
//! horizon = 20000
//! seed = 7
//! mode = ghast       # ghast | plain_ghost | nakamoto_ref
//! backend = direct   # weight backend of honest views: direct | lct
//! observer_backend = direct
//!
//! [protocol]
//! eta_w = 600
//! eta_a = 1800
//! eta_t = 360
//! eta_b = 160
//! s_m = 90           # defaults to ceil(1.5*lambda)
//! s_h = 180          # defaults to ceil(3*lambda)
//!
//! [adversary]
//! kind = null        # null | withhold | balance | script
//! script = attack.txt # relative to the config file
//! release_lead = 0   # withhold: publish once the private branch leads by this much (0 = never)
//!
//! [oracle]
//! enabled = false
//! child_sweep_every = 1024
//! reference_every = 4096
//!
//! [confirm]
//! enabled = false
//! target_risk = 2e-5
//! theta = 20000
//! t = 5000
//! beta = 0.1
//! slice_size = 50
//! z_gap = 10
//! extra_m = auto     # or an integer
//! every = 1
//! max_per_round = 64
//!
//! [output]
//! event_log = events.log
//! blocks_csv = blocks.csv
//! metrics_json = metrics.json
//! report = oracle_report.json
//! ```
//!
//! Unknown sections and keys are errors, so typos never pass silently.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use ghast_core::confirm::ConfirmConfig;
use ghast_core::{ProtocolParams, WeightBackend};

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("config line {line}: {msg}")]
pub struct ConfigError {
    /// 1-based line, 0 when the problem is not tied to one line.
    pub line: usize,
    pub msg: String,
}

impl ConfigError {
    fn new(line: usize, msg: impl Into<String>) -> ConfigError {
        ConfigError { line, msg: msg.into() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Ghast,
    PlainGhost,
    NakamotoRef,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Ghast => "ghast",
            Mode::PlainGhost => "plain_ghost",
            Mode::NakamotoRef => "nakamoto_ref",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum AdversaryKind {
    Null,
    Withhold { release_lead: u64 },
    Balance,
    Script(PathBuf),
}

/// Parameters of the round model.
#[derive(Clone, Debug, PartialEq)]
pub struct SimConfig {
    pub m: usize,
    pub beta: f64,
    pub d: u64,
    pub eta_d: f64,
    pub params: ProtocolParams,
    pub horizon: u64,
    pub seed: u64,
    pub mode: Mode,
    pub backend: WeightBackend,
    pub observer_backend: WeightBackend,
}

impl SimConfig {
    /// Corrupted nodes: `round(β·m)`.
    pub fn corrupted(&self) -> usize {
        (self.beta * self.m as f64).round() as usize
    }

    pub fn honest(&self) -> usize {
        self.m - self.corrupted()
    }

    /// Expected blocks per `d + 1` rounds.
    pub fn lambda(&self) -> f64 {
        self.m as f64 * (self.d + 1) as f64 / self.eta_d
    }

    /// Rounds between first exposure and guaranteed arrival everywhere.
    pub fn arrival_delay(&self) -> u64 {
        self.d.max(1)
    }

    /// Parameters the weight rule actually runs with.
    pub fn effective_params(&self) -> ProtocolParams {
        match self.mode {
            Mode::Ghast => self.params.clone(),
            Mode::PlainGhost | Mode::NakamotoRef => self.params.clone().plain_ghost(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OracleOptions {
    pub enabled: bool,
    pub child_sweep_every: u64,
    pub reference_every: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConfirmOptions {
    pub enabled: bool,
    pub cfg: ConfirmConfig,
    pub every: u64,
    pub max_per_round: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OutputOptions {
    pub event_log: PathBuf,
    pub blocks_csv: PathBuf,
    pub metrics_json: PathBuf,
    pub report: PathBuf,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioConfig {
    pub sim: SimConfig,
    pub adversary: AdversaryKind,
    pub oracle: OracleOptions,
    pub confirm: ConfirmOptions,
    pub output: OutputOptions,
}

/// Ordered `section.key → (value, line)` map kept alongside the typed
/// config so sweeps can rewrite single fields.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RawConfig {
    entries: BTreeMap<String, (String, usize)>,
}

const KEYS: &[&str] = &[
    "sim.nodes",
    "sim.beta",
    "sim.delay",
    "sim.lambda",
    "sim.eta_d",
    "sim.horizon",
    "sim.seed",
    "sim.mode",
    "sim.backend",
    "sim.observer_backend",
    "protocol.eta_w",
    "protocol.eta_a",
    "protocol.eta_t",
    "protocol.eta_b",
    "protocol.s_m",
    "protocol.s_h",
    "adversary.kind",
    "adversary.script",
    "adversary.release_lead",
    "oracle.enabled",
    "oracle.child_sweep_every",
    "oracle.reference_every",
    "confirm.enabled",
    "confirm.target_risk",
    "confirm.theta",
    "confirm.t",
    "confirm.beta",
    "confirm.slice_size",
    "confirm.z_gap",
    "confirm.extra_m",
    "confirm.every",
    "confirm.max_per_round",
    "output.event_log",
    "output.blocks_csv",
    "output.metrics_json",
    "output.report",
];

impl RawConfig {
    pub fn parse(text: &str) -> Result<RawConfig, ConfigError> {
        let mut raw = RawConfig::default();
        let mut section: Option<String> = None;
        for (i, line) in text.lines().enumerate() {
            let n = i + 1;
            let line = match line.find('#') {
                Some(p) => &line[..p],
                None => line,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| ConfigError::new(n, "unterminated section header"))?
                    .trim();
                if !KEYS.iter().any(|k| k.split('.').next() == Some(name)) {
                    return Err(ConfigError::new(n, format!("unknown section [{name}]")));
                }
                section = Some(name.to_string());
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| ConfigError::new(n, "expected key = value"))?;
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() {
                return Err(ConfigError::new(n, "empty key"));
            }
            let sec = section.as_deref().ok_or_else(|| ConfigError::new(n, "key outside of any section"))?;
            let full = format!("{sec}.{k}");
            if !KEYS.contains(&full.as_str()) {
                return Err(ConfigError::new(n, format!("unknown key `{k}` in [{sec}]")));
            }
            if raw.entries.insert(full, (v.to_string(), n)).is_some() {
                return Err(ConfigError::new(n, format!("duplicate key `{k}`")));
            }
        }
        Ok(raw)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|(v, _)| v.as_str())
    }

    /// Overrides `section.key`; the entry keeps line 0 in diagnostics.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        if !KEYS.contains(&key) {
            return Err(ConfigError::new(0, format!("unknown config field `{key}`")));
        }
        self.entries.insert(key.to_string(), (value.to_string(), 0));
        Ok(())
    }

    pub fn remove(&mut self, key: &str) {
        self.entries.remove(key);
    }

    fn line(&self, key: &str) -> usize {
        self.entries.get(key).map_or(0, |e| e.1)
    }

    fn value<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T, ConfigError> {
        match self.entries.get(key) {
            None => Ok(default),
            Some((v, line)) => v.parse().map_err(|_| ConfigError::new(*line, format!("invalid value `{v}` for {key}"))),
        }
    }

    fn opt<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>, ConfigError> {
        match self.entries.get(key) {
            None => Ok(None),
            Some((v, line)) => {
                v.parse().map(Some).map_err(|_| ConfigError::new(*line, format!("invalid value `{v}` for {key}")))
            }
        }
    }

    fn flag(&self, key: &str, default: bool) -> Result<bool, ConfigError> {
        match self.entries.get(key) {
            None => Ok(default),
            Some((v, line)) => match v.as_str() {
                "true" | "yes" | "on" | "1" => Ok(true),
                "false" | "no" | "off" | "0" => Ok(false),
                _ => Err(ConfigError::new(*line, format!("invalid boolean `{v}` for {key}"))),
            },
        }
    }

    fn backend(&self, key: &str, default: WeightBackend) -> Result<WeightBackend, ConfigError> {
        match self.get(key) {
            None => Ok(default),
            Some("lct") => Ok(WeightBackend::LinkCut),
            Some("direct") => Ok(WeightBackend::Direct),
            Some(v) => Err(ConfigError::new(self.line(key), format!("unknown backend `{v}`"))),
        }
    }
}

impl fmt::Display for RawConfig {
    /// Canonical text: sections in key order, one key per line.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut current = "";
        for (k, (v, _)) in &self.entries {
            let (sec, key) = k.split_once('.').expect("keys carry a section");
            if sec != current {
                if !current.is_empty() {
                    writeln!(f)?;
                }
                writeln!(f, "[{sec}]")?;
                current = sec;
            }
            writeln!(f, "{key} = {v}")?;
        }
        Ok(())
    }
}

impl ScenarioConfig {
    pub fn parse(text: &str) -> Result<ScenarioConfig, ConfigError> {
        ScenarioConfig::from_raw(&RawConfig::parse(text)?)
    }

    pub fn load(path: &Path) -> Result<(RawConfig, ScenarioConfig), crate::SimError> {
        let text = std::fs::read_to_string(path).map_err(|e| crate::SimError::io(path, e))?;
        let mut raw = RawConfig::parse(&text)?;
        if let (Some(script), Some(dir)) = (raw.get("adversary.script"), path.parent()) {
            if Path::new(script).is_relative() {
                let full = dir.join(script).display().to_string();
                raw.set("adversary.script", &full)?;
            }
        }
        let cfg = ScenarioConfig::from_raw(&raw)?;
        Ok((raw, cfg))
    }

    pub fn from_raw(raw: &RawConfig) -> Result<ScenarioConfig, ConfigError> {
        let m: usize = raw.value("sim.nodes", 4)?;
        let beta: f64 = raw.value("sim.beta", 0.0)?;
        let d: u64 = raw.value("sim.delay", 1)?;
        let lambda: Option<f64> = raw.opt("sim.lambda")?;
        let eta_d_given: Option<f64> = raw.opt("sim.eta_d")?;
        let eta_d = match (eta_d_given, lambda) {
            (Some(_), Some(_)) => {
                return Err(ConfigError::new(raw.line("sim.lambda"), "give either sim.lambda or sim.eta_d, not both"))
            }
            (Some(e), None) => e,
            (None, Some(l)) => {
                if !(l > 0.0 && l.is_finite()) {
                    return Err(ConfigError::new(raw.line("sim.lambda"), "sim.lambda must be positive"));
                }
                m as f64 * (d + 1) as f64 / l
            }
            (None, None) => m as f64 * (d + 1) as f64,
        };
        let lambda = m as f64 * (d + 1) as f64 / eta_d;
        if m == 0 {
            return Err(ConfigError::new(raw.line("sim.nodes"), "sim.nodes must be positive"));
        }
        if !(0.0..0.5).contains(&beta) {
            return Err(ConfigError::new(raw.line("sim.beta"), "sim.beta must lie in [0, 0.5)"));
        }
        let mode = match raw.get("sim.mode").unwrap_or("ghast") {
            "ghast" => Mode::Ghast,
            "plain_ghost" => Mode::PlainGhost,
            "nakamoto_ref" => Mode::NakamotoRef,
            v => return Err(ConfigError::new(raw.line("sim.mode"), format!("unknown mode `{v}`"))),
        };
        let conflux = ProtocolParams::conflux();
        let lambda_thr = conflux.clone().with_analysis_thresholds(lambda);
        let params = ProtocolParams {
            eta_d,
            eta_w: raw.value("protocol.eta_w", conflux.eta_w)?,
            eta_a: raw.value("protocol.eta_a", conflux.eta_a)?,
            eta_t: raw.value("protocol.eta_t", conflux.eta_t)?,
            eta_b: raw.value("protocol.eta_b", conflux.eta_b)?,
            s_m: raw.value("protocol.s_m", lambda_thr.s_m)?,
            s_h: raw.value("protocol.s_h", lambda_thr.s_h)?,
            adapt_disabled: false,
        };
        params.validate(false).map_err(|e| ConfigError::new(raw.line("sim.eta_d"), e.to_string()))?;
        let sim = SimConfig {
            m,
            beta,
            d,
            eta_d,
            params,
            horizon: raw.value("sim.horizon", 100)?,
            seed: raw.value("sim.seed", 0)?,
            mode,
            backend: raw.backend("sim.backend", WeightBackend::Direct)?,
            observer_backend: raw.backend("sim.observer_backend", WeightBackend::Direct)?,
        };
        if sim.honest() == 0 {
            return Err(ConfigError::new(raw.line("sim.nodes"), "no honest node left after corruption"));
        }
        let adversary = match raw.get("adversary.kind").unwrap_or("null") {
            "null" => AdversaryKind::Null,
            "withhold" => AdversaryKind::Withhold { release_lead: raw.value("adversary.release_lead", 0)? },
            "balance" => {
                if sim.honest() < 2 {
                    return Err(ConfigError::new(raw.line("adversary.kind"), "balance attack needs two honest nodes"));
                }
                AdversaryKind::Balance
            }
            "script" => match raw.get("adversary.script") {
                Some(p) => AdversaryKind::Script(PathBuf::from(p)),
                None => return Err(ConfigError::new(raw.line("adversary.kind"), "script adversary needs adversary.script")),
            },
            v => return Err(ConfigError::new(raw.line("adversary.kind"), format!("unknown adversary `{v}`"))),
        };
        let oracle = OracleOptions {
            enabled: raw.flag("oracle.enabled", false)?,
            child_sweep_every: raw.value("oracle.child_sweep_every", 1024)?,
            reference_every: raw.value("oracle.reference_every", 4096)?,
        };
        if oracle.enabled {
            let line = raw.line("oracle.enabled");
            if mode != Mode::Ghast {
                return Err(ConfigError::new(line, "the oracle runs in ghast mode only"));
            }
            sim.params.validate(true).map_err(|e| ConfigError::new(line, e.to_string()))?;
            if sim.params.eta_w < 2 {
                return Err(ConfigError::new(line, "the oracle needs eta_w >= 2"));
            }
        }
        let rate = sim.m as f64 / sim.eta_d;
        let auto_extra = (2.0 * sim.arrival_delay() as f64 * rate).ceil() as u64;
        let extra_m = match raw.get("confirm.extra_m") {
            None | Some("auto") => auto_extra,
            Some(_) => raw.value("confirm.extra_m", 0)?,
        };
        let dflt = ConfirmConfig::default();
        let ccfg = ConfirmConfig {
            theta: raw.value("confirm.theta", dflt.theta)?,
            t: raw.value("confirm.t", dflt.t)?,
            beta: raw.value("confirm.beta", dflt.beta)?,
            slice_size: raw.value("confirm.slice_size", dflt.slice_size)?,
            z_gap: raw.value("confirm.z_gap", dflt.z_gap)?,
            extra_m,
            target_risk: raw.value("confirm.target_risk", dflt.target_risk)?,
        };
        if !(0.0..0.5).contains(&ccfg.beta) || ccfg.t > ccfg.theta {
            return Err(ConfigError::new(raw.line("confirm.beta"), "confirm needs beta in [0, 0.5) and t <= theta"));
        }
        let confirm = ConfirmOptions {
            enabled: raw.flag("confirm.enabled", false)?,
            cfg: ccfg,
            every: raw.value::<u64>("confirm.every", 1)?.max(1),
            max_per_round: raw.value("confirm.max_per_round", 64)?,
        };
        let path = |k: &str, d: &str| PathBuf::from(raw.get(k).unwrap_or(d));
        let output = OutputOptions {
            event_log: path("output.event_log", "events.log"),
            blocks_csv: path("output.blocks_csv", "blocks.csv"),
            metrics_json: path("output.metrics_json", "metrics.json"),
            report: path("output.report", "oracle_report.json"),
        };
        Ok(ScenarioConfig { sim, adversary, oracle, confirm, output })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_uses_defaults() {
        let c = ScenarioConfig::parse("[sim]\nnodes = 4\nbeta = 0\ndelay = 1\nhorizon = 100\n").unwrap();
        assert_eq!(c.sim.m, 4);
        assert_eq!(c.sim.horizon, 100);
        assert_eq!(c.adversary, AdversaryKind::Null);
        assert!(!c.oracle.enabled);
        assert_eq!(c.sim.eta_d, 8.0);
    }

    #[test]
    fn lambda_derives_eta_d() {
        let c = ScenarioConfig::parse("[sim]\nnodes = 32\ndelay = 1\nlambda = 60\n").unwrap();
        assert!((c.sim.eta_d - 64.0 / 60.0).abs() < 1e-12);
        assert!((c.sim.lambda() - 60.0).abs() < 1e-9);
        assert_eq!(c.sim.params.s_m, 90);
        assert_eq!(c.sim.params.s_h, 180);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let e = ScenarioConfig::parse("[sim]\nnodes = 4\n\nbeta = 0.5\n").unwrap_err();
        assert_eq!(e.line, 4);
        let e = ScenarioConfig::parse("[sim]\nnodes 4\n").unwrap_err();
        assert_eq!(e.line, 2);
        let e = ScenarioConfig::parse("[sim]\nnodez = 4\n").unwrap_err();
        assert_eq!(e.line, 2);
        let e = ScenarioConfig::parse("nodes = 4\n").unwrap_err();
        assert_eq!(e.line, 1);
        let e = ScenarioConfig::parse("[simulation]\n").unwrap_err();
        assert_eq!(e.line, 1);
        let e = ScenarioConfig::parse("[sim]\nnodes = 4\nnodes = 5\n").unwrap_err();
        assert_eq!(e.line, 3);
        let e = ScenarioConfig::parse("[sim]\nnodes = four\n").unwrap_err();
        assert_eq!(e.line, 2);
    }

    #[test]
    fn oracle_requires_analysis_constraints() {
        let text = "[sim]\nnodes = 4\n[protocol]\neta_a = 1000\n[oracle]\nenabled = true\n";
        assert!(ScenarioConfig::parse(text).is_err());
        let ok = "[sim]\nnodes = 4\nlambda = 1\n[protocol]\neta_w = 20\neta_a = 60\n[oracle]\nenabled = true\n";
        assert!(ScenarioConfig::parse(ok).is_ok());
    }

    #[test]
    fn raw_round_trips_through_text() {
        let text = "# c\n[sim]\nnodes = 4 # four\nbeta = 0.1\n\n[adversary]\nkind = withhold\n";
        let raw = RawConfig::parse(text).unwrap();
        let again = RawConfig::parse(&raw.to_string()).unwrap();
        assert_eq!(raw.to_string(), again.to_string());
        assert_eq!(again.get("sim.nodes"), Some("4"));
        assert_eq!(
            ScenarioConfig::from_raw(&raw).unwrap().adversary,
            AdversaryKind::Withhold { release_lead: 0 }
        );
    }
}
