//! Analysis oracle: tracks the adversary state `(G_gen, G_max, G_min, M, f,
//! C, S, v)` along an event trace and checks the structural claims and
//! potential-value inequalities after every event.

use alloc::collections::BTreeSet;
use alloc::vec;
use alloc::vec::Vec;
use fixedbitset::FixedBitSet;

use crate::block::Creator;
use crate::rules::ProtocolParams;
use crate::store::{BlockStore, Ix, NIL};
use crate::view::{ForkChoice, View, WeightBackend};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EventKind {
    HGenRls,
    MGen,
    MRls,
    Arvl,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::HGenRls => "hGenRls",
            EventKind::MGen => "mGen",
            EventKind::MRls => "mRls",
            EventKind::Arvl => "Arvl",
        }
    }

    pub fn parse(s: &str) -> Option<EventKind> {
        match s {
            "hGenRls" => Some(EventKind::HGenRls),
            "mGen" => Some(EventKind::MGen),
            "mRls" => Some(EventKind::MRls),
            "Arvl" => Some(EventKind::Arvl),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct OracleEvent {
    pub kind: EventKind,
    pub block: Ix,
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum OracleError {
    #[error("illegal event sequence at event {event_index}: {reason}")]
    IllegalEventSequence { event_index: u64, reason: &'static str },
    #[error("invalid oracle parameters: {0}")]
    Params(&'static str),
}

pub mod names {
    pub const HONEST_CONTAINMENT: &str = "honest_containment";
    pub const FLAG_BLOCK: &str = "flag_block";
    pub const ONE_POSITIVE_CHILD: &str = "one_positive_child";
    pub const CHAIN_PREFIX: &str = "chain_c_prefix";
    pub const CHAIN_MARGIN: &str = "chain_c_margin";
    pub const CHAIN_TIP_CHILDREN: &str = "chain_c_tip_children";
    pub const SV_MONOTONE: &str = "sv_set_monotone";
    pub const SV_INCREMENT: &str = "sv_increment_bound";
    pub const SV_WEIGHT: &str = "sv_weight_bound";
    pub const SV_SUBSET: &str = "sv_new_blocks_subset";
    pub const DELTA_DECOMPOSITION: &str = "delta_decomposition";
    pub const POTENTIAL_STEP: &str = "potential_step";
    pub const GLOBAL_POTENTIAL_STEP: &str = "global_potential_step";
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Violation {
    pub event_index: u64,
    pub invariant_name: &'static str,
}

/// `P_with + P_adv + P_sp`, with `total = None` standing for ⊥.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub struct PotentialBreakdown {
    pub p_with: i64,
    pub p_adv: i64,
    pub p_sp: i64,
    pub total: Option<i64>,
}

/// Event value and its four components.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EventValue {
    pub delta: i64,
    pub delta_m: f64,
    pub delta_h: f64,
    pub delta_f: f64,
    pub delta_t: f64,
}

impl EventValue {
    pub fn component_sum(&self) -> f64 {
        self.delta_m + self.delta_h + self.delta_f + self.delta_t
    }
}

/// Summary written as the assertion report.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct OracleReport {
    pub events_checked: u64,
    pub violations: Vec<Violation>,
    pub violation_count: u64,
    pub side_condition_skips: u64,
    pub potential_checks: u64,
    pub global_potential_checks: u64,
}

const MAX_RECORDED: usize = 10_000;

#[derive(Clone, Debug)]
pub struct AnalysisOracle {
    params: ProtocolParams,
    gen: View,
    max: View,
    min: View,
    delta: BTreeSet<Ix>,
    delta_honest_w1: u64,
    delta_honest_heavy: u64,
    flag: Option<Ix>,
    chain: Vec<Ix>,
    adv: Vec<i64>,
    s_member: FixedBitSet,
    s_weight: u64,
    v: i64,
    pots: Vec<Option<i64>>,
    ref_block: Ix,
    ref_every: u64,
    gpot: i64,
    child_sweep_every: u64,
    report: OracleReport,
    recorded_this_event: Vec<&'static str>,
}

fn adv_view() -> View {
    View::new(WeightBackend::Direct, ForkChoice::Ghost)
}

impl AnalysisOracle {
    /// Starts from `{genesis}`; `store` must hold genesis at index 0.
    pub fn new(store: &BlockStore, params: ProtocolParams) -> Result<AnalysisOracle, OracleError> {
        if params.eta_w < 2 {
            return Err(OracleError::Params("the oracle needs eta_w >= 2"));
        }
        if params.validate(true).is_err() {
            return Err(OracleError::Params("analysis constraints on s_m, s_h, eta_w, eta_a violated"));
        }
        if store.is_empty() {
            return Err(OracleError::Params("store has no genesis"));
        }
        let (mut gen, mut max, mut min) = (adv_view(), adv_view(), adv_view());
        gen.insert(store, 0);
        max.insert(store, 0);
        min.insert(store, 0);
        Ok(AnalysisOracle {
            params,
            gen,
            max,
            min,
            delta: BTreeSet::new(),
            delta_honest_w1: 0,
            delta_honest_heavy: 0,
            flag: None,
            chain: vec![0],
            adv: vec![0],
            s_member: FixedBitSet::new(),
            s_weight: 0,
            v: 0,
            pots: vec![None],
            ref_block: 0,
            ref_every: 4096,
            gpot: 0,
            child_sweep_every: 1024,
            report: OracleReport::default(),
            recorded_this_event: Vec::new(),
        })
    }

    /// How often a full positive-child sweep over `G_max` runs (0 disables it).
    pub fn set_child_sweep_every(&mut self, every: u64) {
        self.child_sweep_every = every;
    }

    /// How often the reference graph of the global potential moves.
    pub fn set_reference_refresh(&mut self, every: u64) {
        self.ref_every = every.max(1);
    }

    pub fn g_gen(&self) -> &View {
        &self.gen
    }
    pub fn g_max(&self) -> &View {
        &self.max
    }
    pub fn g_min(&self) -> &View {
        &self.min
    }
    pub fn flag(&self) -> Option<Ix> {
        self.flag
    }
    pub fn chain_c(&self) -> &[Ix] {
        &self.chain
    }
    pub fn v(&self) -> i64 {
        self.v
    }
    pub fn s_contains(&self, ix: Ix) -> bool {
        self.s_member.contains(ix as usize)
    }
    pub fn s_weight(&self) -> u64 {
        self.s_weight
    }
    pub fn in_transit(&self) -> &BTreeSet<Ix> {
        &self.delta
    }
    pub fn report(&self) -> &OracleReport {
        &self.report
    }
    pub fn params(&self) -> &ProtocolParams {
        &self.params
    }

    fn is_m(&self, store: &BlockStore, ix: Ix) -> bool {
        store.creator(ix) == Creator::Malicious && self.gen.contains(ix)
    }

    fn record(&mut self, name: &'static str) {
        if self.recorded_this_event.contains(&name) {
            return;
        }
        self.recorded_this_event.push(name);
        self.report.violation_count += 1;
        if self.report.violations.len() < MAX_RECORDED {
            self.report.violations.push(Violation { event_index: self.report.events_checked, invariant_name: name });
        }
    }

    /// Records a containment failure observed outside the oracle, e.g. an
    /// honest view holding a block outside `G_max`.
    pub fn report_containment_failure(&mut self) {
        self.recorded_this_event.clear();
        self.record(names::HONEST_CONTAINMENT);
    }

    /// Checks that an honest node may hold `ix` (upper side of containment).
    pub fn check_local_insert(&mut self, ix: Ix) -> bool {
        let ok = self.max.contains(ix);
        if !ok {
            self.report_containment_failure();
        }
        ok
    }

    fn is_desc(store: &BlockStore, anc: Ix, x: Ix) -> bool {
        store.height(anc) <= store.height(x) && store.ancestor_at(x, store.height(anc)) == anc
    }

    /// Special status of the current state.
    pub fn spe(&self, store: &BlockStore) -> bool {
        if self.delta_honest_w1 >= self.params.s_h || self.delta_honest_heavy >= 3 {
            return true;
        }
        let tip = *self.chain.last().expect("chain holds genesis");
        let w: u64 = self
            .delta
            .iter()
            .filter(|&&d| self.is_m(store, d) && Self::is_desc(store, tip, d))
            .map(|&d| store.weight(d))
            .sum();
        w >= self.params.s_m
    }

    fn flag_term(&self, store: &BlockStore, b: Ix) -> u64 {
        match self.flag {
            Some(f) if !self.min.contains(f) && Self::is_desc(store, b, f) => store.weight(f),
            _ => 0,
        }
    }

    /// `SubTW(G_min ∪ {f}, b) − SibSubTW(G_max, b)`.
    pub fn adv_margin(&self, store: &BlockStore, b: Ix) -> i64 {
        self.min.subtree_weight(b) as i64 + self.flag_term(store, b) as i64
            - self.max.sib_subtree_weight(store, b) as i64
    }

    fn old_in_min(&self, store: &BlockStore, b: Ix) -> bool {
        self.min.is_old(store, b, self.params.eta_b)
    }

    /// Block potential evaluated straight from the set definitions.
    pub fn potential(&self, store: &BlockStore, b: Ix) -> PotentialBreakdown {
        let h = store.height(b) as usize;
        if self.chain.get(h) != Some(&b) || !self.old_in_min(store, b) {
            return PotentialBreakdown::default();
        }
        let p_with = self.gen.subtree_weight(b) as i64 - self.max.subtree_weight(b) as i64;
        let (p_adv, p_sp) = match self.chain.get(h + 1) {
            None => (0, 0),
            Some(&c) => {
                let mut n_delta = 0u64;
                let mut m_delta = 0u64;
                for &d in &self.delta {
                    if !Self::is_desc(store, c, d) {
                        continue;
                    }
                    if self.is_m(store, d) {
                        if !self.s_contains(d) {
                            m_delta += store.weight(d);
                        }
                    } else if store.weight(d) == 1 {
                        n_delta += 1;
                    }
                }
                let p = &self.params;
                let adv = self.adv_margin(store, c);
                ((p.s_h + p.s_m) as i64 - adv - n_delta.min(p.s_h) as i64, m_delta as i64)
            }
        };
        PotentialBreakdown { p_with, p_adv, p_sp, total: Some(p_with + p_adv + p_sp) }
    }

    /// Largest defined potential over chain blocks whose past misses
    /// `cl(reference)`; 0 when there is none.
    pub fn global_potential(&self, store: &BlockStore, reference: Ix) -> i64 {
        let end = Self::ref_prefix_len(store, &self.chain, reference);
        self.chain[..end].iter().filter_map(|&b| self.potential(store, b).total).max().unwrap_or(0)
    }

    /// Number of leading chain blocks `b` with `reference ∉ past(b)`.
    fn ref_prefix_len(store: &BlockStore, chain: &[Ix], reference: Ix) -> usize {
        let h = store.height(reference) as usize;
        let mut fork = h.min(chain.len() - 1);
        while store.ancestor_at(reference, fork as u32) != chain[fork] {
            fork -= 1;
        }
        if fork == h {
            return h + 1;
        }
        // Positions after the fork may or may not see the reference; the
        // property is monotone along the chain.
        let (mut lo, mut hi) = (fork + 1, chain.len());
        while lo < hi {
            let mid = (lo + hi) / 2;
            if store.in_past(reference, chain[mid]) {
                hi = mid;
            } else {
                lo = mid + 1;
            }
        }
        lo
    }

    /// Event value and components against the current (pre-event) state.
    pub fn event_value(&self, store: &BlockStore, e: OracleEvent) -> EventValue {
        let spe = self.spe(store);
        self.event_value_with(store, e, spe)
    }

    fn event_value_with(&self, store: &BlockStore, e: OracleEvent, spe_prev: bool) -> EventValue {
        let p = &self.params;
        let w = store.weight(e.block);
        let zero = EventValue { delta: 0, delta_m: 0.0, delta_h: 0.0, delta_f: 0.0, delta_t: 0.0 };
        match e.kind {
            EventKind::MRls | EventKind::Arvl => zero,
            EventKind::MGen => EventValue { delta: w as i64, delta_m: w as f64, ..zero },
            EventKind::HGenRls => {
                let (eta_w, s_h, s_m) = (p.eta_w as i64, p.s_h as i64, p.s_m as i64);
                let delta_h = if spe_prev { 0.0 } else { -((eta_w - 2 * s_h - 2 * s_m) as f64) / eta_w as f64 * w as f64 };
                if w == 0 {
                    return zero;
                }
                if w == 1 {
                    return EventValue { delta: if spe_prev { 0 } else { -1 }, delta_h, ..zero };
                }
                let h_prev = self.delta_honest_heavy;
                let delta = if h_prev == 0 {
                    if spe_prev {
                        0
                    } else {
                        2 * s_h + 2 * s_m - eta_w
                    }
                } else if self.flag.is_none() {
                    0
                } else {
                    eta_w + s_m
                };
                let delta_f = if h_prev >= 1 { (2 * eta_w - 2 * s_h - s_m) as f64 } else { 0.0 };
                let delta_t = if h_prev >= 2 { -(s_m as f64) } else { 0.0 };
                EventValue { delta, delta_m: 0.0, delta_h, delta_f, delta_t }
            }
        }
    }

    fn check_legal(&self, store: &BlockStore, e: OracleEvent) -> Result<(), &'static str> {
        let x = e.block;
        if x as usize >= store.len() {
            return Err("unknown block");
        }
        let deps_in = |v: &View| store.deps(x).all(|d| v.contains(d));
        match e.kind {
            EventKind::HGenRls => {
                if store.creator(x) != Creator::Honest {
                    return Err("hGenRls of a malicious block");
                }
                if self.gen.contains(x) {
                    return Err("block generated twice");
                }
                if !deps_in(&self.max) {
                    return Err("honest block depends on unreleased blocks");
                }
            }
            EventKind::MGen => {
                if store.creator(x) != Creator::Malicious {
                    return Err("mGen of an honest block");
                }
                if self.gen.contains(x) {
                    return Err("block generated twice");
                }
                if !deps_in(&self.gen) {
                    return Err("malicious block depends on ungenerated blocks");
                }
            }
            EventKind::MRls => {
                if store.creator(x) != Creator::Malicious || !self.gen.contains(x) || self.max.contains(x) {
                    return Err("mRls must follow mGen exactly once");
                }
                if !deps_in(&self.max) {
                    return Err("released block depends on unreleased blocks");
                }
            }
            EventKind::Arvl => {
                if !self.max.contains(x) || self.min.contains(x) {
                    return Err("Arvl must follow release exactly once");
                }
                if !deps_in(&self.min) {
                    return Err("arrived block depends on blocks that have not arrived");
                }
            }
        }
        Ok(())
    }

    fn add_to_max(&mut self, store: &BlockStore, x: Ix) {
        self.max.insert(store, x);
        self.delta.insert(x);
        if store.creator(x) == Creator::Honest {
            match store.weight(x) {
                1 => self.delta_honest_w1 += 1,
                w if w == self.params.eta_w => self.delta_honest_heavy += 1,
                _ => {}
            }
        }
    }

    fn add_to_min(&mut self, store: &BlockStore, x: Ix) {
        self.min.insert(store, x);
        self.delta.remove(&x);
        if store.creator(x) == Creator::Honest {
            match store.weight(x) {
                1 => self.delta_honest_w1 -= 1,
                w if w == self.params.eta_w => self.delta_honest_heavy -= 1,
                _ => {}
            }
        }
    }

    /// Positive-weight children of `b` in `G_max` with the two largest
    /// `G_max` subtree weights among them.
    fn max_children(&self, store: &BlockStore, b: Ix) -> (Vec<Ix>, Option<Ix>, u64, u64) {
        let kids: Vec<Ix> = self.max.chldn(store, b).collect();
        let (mut top, mut w1, mut w2) = (None, 0u64, 0u64);
        for &c in &kids {
            let w = self.max.subtree_weight(c);
            if top.is_none() || w > w1 {
                w2 = w1;
                w1 = w;
                top = Some(c);
            } else if w > w2 {
                w2 = w;
            }
        }
        (kids, top, w1, w2)
    }

    fn child_advs(&self, store: &BlockStore, b: Ix, fpath: &[Ix]) -> Vec<(Ix, i64)> {
        let (kids, top, w1, w2) = self.max_children(store, b);
        let f_w = self.flag.filter(|f| !self.min.contains(*f)).map(|f| store.weight(f)).unwrap_or(0);
        kids.into_iter()
            .map(|c| {
                let sib = if Some(c) == top { w2 } else { w1 };
                let under_f = fpath.get(store.height(c) as usize) == Some(&c);
                let a = self.min.subtree_weight(c) as i64 + if under_f { f_w as i64 } else { 0 } - sib as i64;
                (c, a)
            })
            .collect()
    }

    fn flag_path(&self, store: &BlockStore) -> Vec<Ix> {
        match self.flag {
            Some(f) if !self.min.contains(f) => {
                let mut p = vec![NIL; store.height(f) as usize + 1];
                let mut y = f;
                while y != NIL {
                    p[store.height(y) as usize] = y;
                    y = store.parent(y);
                }
                p
            }
            _ => Vec::new(),
        }
    }

    fn rebuild_chain(&mut self, store: &BlockStore) -> (Vec<Ix>, Vec<i64>) {
        let fpath = self.flag_path(store);
        let sm_sh = (self.params.s_m + self.params.s_h) as i64;
        let mut chain = vec![0];
        let mut adv = vec![0];
        let mut cur = 0;
        loop {
            let advs = self.child_advs(store, cur, &fpath);
            let mut pos = advs.iter().filter(|(_, a)| *a > 0);
            let first = pos.next().copied();
            let next = match (first, pos.next()) {
                (None, _) => break,
                (Some(one), None) => one,
                (Some(_), Some(_)) => {
                    self.record(names::ONE_POSITIVE_CHILD);
                    *advs
                        .iter()
                        .filter(|(_, a)| *a > 0)
                        .min_by_key(|(c, _)| store.id(*c))
                        .expect("two positive children")
                }
            };
            chain.push(next.0);
            adv.push(next.1);
            cur = next.0;
        }
        // Step 2: cut the first block beyond the previous tip whose margin
        // does not exceed s_m + s_h.
        let old_tip = *self.chain.last().expect("chain holds genesis");
        let h = store.height(old_tip) as usize;
        if chain.get(h) == Some(&old_tip) {
            if let Some(j) = (h + 1..chain.len()).find(|&j| adv[j] <= sm_sh) {
                chain.truncate(j);
                adv.truncate(j);
            }
        }
        (chain, adv)
    }

    fn sweep_positive_children(&mut self, store: &BlockStore) {
        let fpath = self.flag_path(store);
        let members: Vec<Ix> = self.max.members().collect();
        for b in members {
            if self.child_advs(store, b, &fpath).iter().filter(|(_, a)| *a > 0).count() > 1 {
                self.record(names::ONE_POSITIVE_CHILD);
                return;
            }
        }
    }

    /// Potentials of all chain positions via fork-point suffix sums.
    fn chain_potentials(&self, store: &BlockStore, chain: &[Ix], adv: &[i64]) -> Vec<Option<i64>> {
        let len = chain.len();
        let mut n_at = vec![0u64; len + 1];
        let mut m_at = vec![0u64; len + 1];
        for &d in &self.delta {
            let malicious = self.is_m(store, d);
            let counts_n = !malicious && store.weight(d) == 1;
            let counts_m = malicious && !self.s_contains(d) && store.weight(d) > 0;
            if !counts_n && !counts_m {
                continue;
            }
            let mut y = d;
            loop {
                let hy = store.height(y) as usize;
                if hy < len && chain[hy] == y {
                    break;
                }
                y = store.parent(y);
            }
            let k = store.height(y) as usize;
            if counts_n {
                n_at[k] += 1;
            } else {
                m_at[k] += store.weight(d);
            }
        }
        for j in (0..len).rev() {
            n_at[j] += n_at[j + 1];
            m_at[j] += m_at[j + 1];
        }
        let p = &self.params;
        let max_th = self.min.max_timer_height() as u64;
        (0..len)
            .map(|i| {
                let b = chain[i];
                if store.timer_height(b) as u64 + p.eta_b > max_th {
                    return None;
                }
                let with = self.gen.subtree_weight(b) as i64 - self.max.subtree_weight(b) as i64;
                if i + 1 == len {
                    return Some(with);
                }
                let padv = (p.s_h + p.s_m) as i64 - adv[i + 1] - n_at[i + 1].min(p.s_h) as i64;
                Some(with + padv + m_at[i + 1] as i64)
            })
            .collect()
    }

    fn gpot_of(chain_len_prefix: usize, pots: &[Option<i64>]) -> i64 {
        pots[..chain_len_prefix].iter().filter_map(|p| *p).max().unwrap_or(0)
    }

    /// Applies one event and runs every check. Returns the event value.
    pub fn apply_event(&mut self, store: &BlockStore, e: OracleEvent) -> Result<EventValue, OracleError> {
        let idx = self.report.events_checked;
        self.check_legal(store, e).map_err(|reason| OracleError::IllegalEventSequence { event_index: idx, reason })?;
        self.recorded_this_event.clear();
        let x = e.block;

        // Pre-state quantities.
        let spe_prev = self.spe(store);
        let ev = self.event_value_with(store, e, spe_prev);
        let h_prev = self.delta_honest_heavy;
        let f_prev = self.flag;
        let v_prev = self.v;
        let s_weight_prev = self.s_weight;
        let min_th_prev = self.min.max_timer_height() as u64;
        if self.report.events_checked % self.ref_every == 0 {
            self.ref_block = self.chain[self.chain.len() / 2];
            let end = Self::ref_prefix_len(store, &self.chain, self.ref_block);
            self.gpot = Self::gpot_of(end, &self.pots);
        }
        let gpot_prev = self.gpot;

        // Graph sets.
        match e.kind {
            EventKind::HGenRls => {
                self.gen.insert(store, x);
                self.add_to_max(store, x);
            }
            EventKind::MGen => self.gen.insert(store, x),
            EventKind::MRls => self.add_to_max(store, x),
            EventKind::Arvl => self.add_to_min(store, x),
        }
        if !(self.min.len() <= self.max.len() && self.max.len() <= self.gen.len()) {
            self.record(names::HONEST_CONTAINMENT);
        }

        // Flag block, driven by the pre-state special status.
        let w = store.weight(x);
        if e.kind == EventKind::HGenRls && w == self.params.eta_w {
            if !spe_prev && h_prev == 0 {
                self.flag = Some(x);
            } else if f_prev.is_some() {
                self.flag = None;
            }
        }
        if e.kind == EventKind::Arvl && f_prev == Some(x) {
            self.flag = None;
        }
        if let Some(f) = self.flag {
            let ok = store.creator(f) == Creator::Honest
                && store.weight(f) == self.params.eta_w
                && self.max.contains(f)
                && !self.min.contains(f);
            if !ok {
                self.record(names::FLAG_BLOCK);
            }
        }

        // Chain C.
        let old_chain = core::mem::take(&mut self.chain);
        let old_pots = core::mem::take(&mut self.pots);
        self.chain = old_chain.clone();
        let (chain, adv) = self.rebuild_chain(store);
        self.chain = chain;
        self.adv = adv;
        let common = old_chain.len().min(self.chain.len());
        if old_chain[common - 1] != self.chain[common - 1] {
            self.record(names::CHAIN_PREFIX);
        }
        let sm_sh = (self.params.s_m + self.params.s_h) as i64;
        let old_tip = *old_chain.last().expect("non-empty");
        let old_tip_pos = store.height(old_tip) as usize;
        let old_tip_kept = self.chain.get(old_tip_pos) == Some(&old_tip);
        for j in 1..self.chain.len() {
            let beyond = old_tip_kept && j > old_tip_pos;
            if self.adv[j] <= 0 || (beyond && self.adv[j] <= sm_sh) {
                self.record(names::CHAIN_MARGIN);
                break;
            }
        }
        let tip = *self.chain.last().expect("non-empty");
        let fpath = self.flag_path(store);
        for (c, a) in self.child_advs(store, tip, &fpath) {
            if a > sm_sh || (Self::is_desc(store, c, old_tip) && a > 0) {
                self.record(names::CHAIN_TIP_CHILDREN);
                break;
            }
        }

        // S and v.
        let mut added = 0u64;
        let mut t_cap_m: Vec<Ix> = Vec::new();
        for &d in &self.delta {
            if self.is_m(store, d) && Self::is_desc(store, tip, d) {
                t_cap_m.push(d);
            }
        }
        let mut new_in_s = 0usize;
        for &d in &t_cap_m {
            if self.s_member.len() <= d as usize {
                self.s_member.grow((d as usize + 1).max(self.s_member.len() * 2));
            }
            if !self.s_member.put(d as usize) {
                added += store.weight(d);
                new_in_s += 1;
            }
        }
        self.s_weight += added;
        self.v += added.min(self.params.s_m) as i64;
        let dv = self.v - v_prev;
        if self.s_weight < s_weight_prev {
            self.record(names::SV_MONOTONE);
        }
        if dv < 0 || dv > self.params.s_m as i64 {
            self.record(names::SV_INCREMENT);
        }
        if dv > (self.s_weight - s_weight_prev) as i64 {
            self.record(names::SV_WEIGHT);
        }
        if new_in_s > t_cap_m.len() || t_cap_m.iter().any(|&d| !self.s_contains(d)) {
            self.record(names::SV_SUBSET);
        }

        // Event value decomposition.
        if ev.delta as f64 > ev.component_sum() + 1e-9 {
            self.record(names::DELTA_DECOMPOSITION);
        }

        // Potentials and the per-block step bound.
        self.pots = self.chain_potentials(store, &self.chain, &self.adv);
        let delta = ev.delta;
        let tip_prev_pot = old_pots.last().copied().flatten();
        let mut potential_violation = false;
        for i in 0..self.chain.len() {
            let Some(p) = self.pots[i] else { continue };
            let b = self.chain[i];
            let prev = if i < old_chain.len() && old_chain[i] == b { old_pots[i] } else { None };
            match prev {
                Some(pp) => {
                    self.report.potential_checks += 1;
                    if (p + self.v) - (pp + v_prev) > delta {
                        potential_violation = true;
                    }
                }
                None => {
                    let old_prev = store.timer_height(b) as u64 + self.params.eta_b <= min_th_prev;
                    if let (true, Some(tp)) = (old_prev, tip_prev_pot) {
                        self.report.potential_checks += 1;
                        if (p + self.v) - (tp + v_prev) > delta {
                            potential_violation = true;
                        }
                    }
                }
            }
        }
        if potential_violation {
            self.record(names::POTENTIAL_STEP);
        }

        // Global potential against the reference graph.
        let end = Self::ref_prefix_len(store, &self.chain, self.ref_block);
        self.gpot = Self::gpot_of(end, &self.pots);
        let genesis_old = self.params.eta_b <= min_th_prev;
        let side_ok = genesis_old
            && (0..end).all(|i| {
                let b = self.chain[i];
                let th = store.timer_height(b) as u64 + self.params.eta_b;
                let old_now = th <= self.min.max_timer_height() as u64;
                let old_before = th <= min_th_prev;
                !old_now || old_before || self.pots[i] != Some(self.gpot)
            });
        if side_ok {
            self.report.global_potential_checks += 1;
            if (self.gpot + self.v) - (gpot_prev + v_prev) > delta {
                self.record(names::GLOBAL_POTENTIAL_STEP);
            }
        } else {
            self.report.side_condition_skips += 1;
        }

        self.report.events_checked += 1;
        if self.child_sweep_every > 0 && self.report.events_checked % self.child_sweep_every == 0 {
            self.sweep_positive_children(store);
        }
        Ok(ev)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::block::{Block, BlockId, GENESIS_ID};
    use crate::store::ClosureHint;

    fn params() -> ProtocolParams {
        ProtocolParams { eta_d: 1.0, eta_w: 4, eta_a: 12, eta_t: 2, eta_b: 1, s_m: 1, s_h: 1, adapt_disabled: false }
    }

    struct Rng(u64);
    impl Rng {
        fn next(&mut self) -> u64 {
            self.0 ^= self.0 << 13;
            self.0 ^= self.0 >> 7;
            self.0 ^= self.0 << 17;
            self.0
        }
        fn below(&mut self, n: usize) -> usize {
            (self.next() % n as u64) as usize
        }
    }

    fn pick(rng: &mut Rng, v: &View) -> Ix {
        let m: Vec<Ix> = v.members().collect();
        m[rng.below(m.len())]
    }

    fn add(store: &mut BlockStore, next_id: &mut u64, parent: Ix, r: Option<Ix>, creator: Creator, w: u64) -> Ix {
        *next_id += 1;
        let refs: Vec<BlockId> = r.filter(|&r| r != parent).map(|r| store.id(r)).into_iter().collect();
        let b = Block { id: BlockId(*next_id), parent: Some(store.id(parent)), refs, creator, born_round: 0 };
        store.insert(&b, w, ClosureHint::Compute).unwrap()
    }

    /// Generates a random legal event and applies it.
    fn random_event(rng: &mut Rng, store: &mut BlockStore, o: &AnalysisOracle, next_id: &mut u64) -> OracleEvent {
        let eta_w = o.params().eta_w;
        let weight = |rng: &mut Rng| match rng.below(10) {
            0 => 0,
            1 | 2 => eta_w,
            _ => 1,
        };
        loop {
            match rng.below(4) {
                0 => {
                    let (p, r) = (pick(rng, o.g_max()), pick(rng, o.g_max()));
                    let w = weight(rng);
                    let x = add(store, next_id, p, Some(r), Creator::Honest, w);
                    return OracleEvent { kind: EventKind::HGenRls, block: x };
                }
                1 => {
                    let p = pick(rng, o.g_gen());
                    let w = weight(rng);
                    let x = add(store, next_id, p, None, Creator::Malicious, w);
                    return OracleEvent { kind: EventKind::MGen, block: x };
                }
                2 => {
                    let cand: Vec<Ix> = o
                        .g_gen()
                        .members()
                        .filter(|&x| !o.g_max().contains(x) && store.deps(x).all(|d| o.g_max().contains(d)))
                        .collect();
                    if !cand.is_empty() {
                        return OracleEvent { kind: EventKind::MRls, block: cand[rng.below(cand.len())] };
                    }
                }
                _ => {
                    let cand: Vec<Ix> = o
                        .in_transit()
                        .iter()
                        .copied()
                        .filter(|&x| store.deps(x).all(|d| o.g_min().contains(d)))
                        .collect();
                    if !cand.is_empty() {
                        return OracleEvent { kind: EventKind::Arvl, block: cand[rng.below(cand.len())] };
                    }
                }
            }
        }
    }

    /// Chain C straight from its two-step definition.
    fn brute_chain(o: &AnalysisOracle, store: &BlockStore, prev: &[Ix]) -> Vec<Ix> {
        let mut c = vec![0];
        loop {
            let cur = *c.last().unwrap();
            let pos: Vec<Ix> = o.g_max().chldn(store, cur).filter(|&x| o.adv_margin(store, x) > 0).collect();
            match pos.iter().min_by_key(|&&x| store.id(x)) {
                Some(&x) => c.push(x),
                None => break,
            }
        }
        let t = *prev.last().unwrap();
        let h = store.height(t) as usize;
        if c.get(h) == Some(&t) {
            let lim = (o.params().s_m + o.params().s_h) as i64;
            if let Some(j) = (h + 1..c.len()).find(|&j| o.adv_margin(store, c[j]) <= lim) {
                c.truncate(j);
            }
        }
        c
    }

    #[test]
    fn incremental_state_matches_definitions_on_random_traces() {
        for seed in 1..=12u64 {
            let mut rng = Rng(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) | 1);
            let mut store = BlockStore::new(2);
            store.insert(&Block::genesis(), 1, ClosureHint::Compute).unwrap();
            let mut o = AnalysisOracle::new(&store, params()).unwrap();
            o.set_child_sweep_every(7);
            o.set_reference_refresh(13);
            let mut next_id = 0;
            for _ in 0..250 {
                let e = random_event(&mut rng, &mut store, &o, &mut next_id);
                let prev_chain = o.chain_c().to_vec();
                let direct = o.event_value(&store, e);
                let got = o.apply_event(&store, e).unwrap();
                assert_eq!(got, direct);
                assert!(o.report().violations.iter().all(|v| v.invariant_name != names::ONE_POSITIVE_CHILD));
                assert_eq!(o.chain_c(), &brute_chain(&o, &store, &prev_chain)[..]);
                for (i, &b) in o.chain_c().iter().enumerate() {
                    assert_eq!(o.pots[i], o.potential(&store, b).total, "seed {seed} pos {i}");
                }
                assert_eq!(o.gpot, o.global_potential(&store, o.ref_block));
                let mut s_direct = 0;
                for x in o.g_gen().members() {
                    if o.s_contains(x) {
                        assert_eq!(store.creator(x), Creator::Malicious);
                        s_direct += store.weight(x);
                    }
                }
                assert_eq!(s_direct, o.s_weight());
                assert!(o.v() as u64 <= o.s_weight());
            }
            assert_eq!(o.report().events_checked, 250);
        }
    }

    #[test]
    fn illegal_sequences_are_rejected() {
        let mut store = BlockStore::new(2);
        store.insert(&Block::genesis(), 1, ClosureHint::Compute).unwrap();
        let mut id = 0;
        let m = add(&mut store, &mut id, 0, None, Creator::Malicious, 1);
        let h = add(&mut store, &mut id, m, None, Creator::Honest, 1);
        let mut o = AnalysisOracle::new(&store, params()).unwrap();
        let err = |o: &mut AnalysisOracle, kind, block| o.apply_event(&store, OracleEvent { kind, block }).is_err();
        assert!(err(&mut o, EventKind::HGenRls, m));
        assert!(err(&mut o, EventKind::MRls, m));
        assert!(err(&mut o, EventKind::Arvl, m));
        o.apply_event(&store, OracleEvent { kind: EventKind::MGen, block: m }).unwrap();
        assert!(err(&mut o, EventKind::HGenRls, h));
        assert!(err(&mut o, EventKind::MGen, m));
        o.apply_event(&store, OracleEvent { kind: EventKind::MRls, block: m }).unwrap();
        o.apply_event(&store, OracleEvent { kind: EventKind::HGenRls, block: h }).unwrap();
        assert!(err(&mut o, EventKind::Arvl, h));
        assert!(matches!(
            o.apply_event(&store, OracleEvent { kind: EventKind::MRls, block: m }),
            Err(OracleError::IllegalEventSequence { event_index: 3, .. })
        ));
    }

    #[test]
    fn flag_block_lifecycle_and_event_values() {
        let mut store = BlockStore::new(2);
        store.insert(&Block::genesis(), 1, ClosureHint::Compute).unwrap();
        let mut id = 0;
        let a = add(&mut store, &mut id, 0, None, Creator::Honest, 4);
        let b = add(&mut store, &mut id, 0, None, Creator::Honest, 4);
        let c = add(&mut store, &mut id, 0, None, Creator::Honest, 1);
        let mut o = AnalysisOracle::new(&store, params()).unwrap();
        let p = params();
        let ev = |o: &mut AnalysisOracle, block| o.apply_event(&store, OracleEvent { kind: EventKind::HGenRls, block }).unwrap();
        // No special status and nothing in transit: the heavy block is flagged.
        let e1 = ev(&mut o, a);
        assert_eq!(e1.delta, (2 * p.s_m + 2 * p.s_h) as i64 - p.eta_w as i64);
        assert_eq!(o.flag(), Some(a));
        // One heavy honest block in transit with a flag: Δ = η_w + s_m and the flag clears.
        let e2 = ev(&mut o, b);
        assert_eq!(e2.delta, (p.eta_w + p.s_m) as i64);
        assert_eq!(o.flag(), None);
        assert!(e2.delta as f64 <= e2.component_sum());
        let spe_before = o.spe(&store);
        let e3 = ev(&mut o, c);
        assert_eq!(e3.delta, if spe_before { 0 } else { -1 });
        assert_eq!(EventKind::parse(EventKind::MRls.as_str()), Some(EventKind::MRls));
        assert_eq!(store.id(0), GENESIS_ID);
    }

    #[test]
    fn arrival_of_flag_clears_it() {
        let mut store = BlockStore::new(2);
        store.insert(&Block::genesis(), 1, ClosureHint::Compute).unwrap();
        let mut id = 0;
        let a = add(&mut store, &mut id, 0, None, Creator::Honest, 4);
        let mut o = AnalysisOracle::new(&store, params()).unwrap();
        o.apply_event(&store, OracleEvent { kind: EventKind::HGenRls, block: a }).unwrap();
        assert_eq!(o.flag(), Some(a));
        assert!(o.adv_margin(&store, a) >= 4);
        o.apply_event(&store, OracleEvent { kind: EventKind::Arvl, block: a }).unwrap();
        assert_eq!(o.flag(), None);
        assert_eq!(o.chain_c(), &[0, a]);
    }
}
