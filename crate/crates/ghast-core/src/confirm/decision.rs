//! Confirmation decisions for pivot blocks of a local view.

use alloc::vec::Vec;

use super::breaks::{break_risk_within, BreakQuery, Slice};
use super::risk::{RiskCache, RiskQuery};
use super::ConfirmError;
use crate::rules::ProtocolParams;
use crate::store::{BlockStore, Ix, NIL};
use crate::treegraph::Graph;
use crate::view::View;

#[derive(Clone, Debug, PartialEq)]
pub struct ConfirmConfig {
    /// Assumption horizon in blocks.
    pub theta: u64,
    /// Tail split point, `t ≤ θ`.
    pub t: u64,
    /// Adversary fraction assumed by the estimator.
    pub beta: f64,
    pub slice_size: usize,
    pub z_gap: i64,
    /// Honest blocks the observer may not have seen yet (observation lag).
    pub extra_m: u64,
    pub target_risk: f64,
}

impl Default for ConfirmConfig {
    fn default() -> Self {
        ConfirmConfig { theta: 20_000, t: 5_000, beta: 0.1, slice_size: 50, z_gap: 10, extra_m: 0, target_risk: 2e-5 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Decision {
    pub confirmed: bool,
    /// Upper bound on the total risk, refined only as far as the decision needs.
    pub risk: f64,
    pub confirmation_risk: f64,
    /// NaN when the confirmation risk alone exceeds the target.
    pub break_risk: f64,
    pub m: u64,
    pub n: u64,
}

/// Confirmation evaluator holding the memoised random-walk series.
#[derive(Clone, Debug)]
pub struct Confirmer {
    pub cfg: ConfirmConfig,
    pub params: ProtocolParams,
    cache: RiskCache,
}

impl Confirmer {
    pub fn new(cfg: ConfirmConfig, params: ProtocolParams) -> Confirmer {
        let eta_w = if params.adapt_disabled { 1 } else { params.eta_w };
        let cache = RiskCache::new(cfg.beta, eta_w);
        Confirmer { cfg, params, cache }
    }

    fn eta_w(&self) -> u64 {
        if self.params.adapt_disabled {
            1
        } else {
            self.params.eta_w
        }
    }

    /// `(m, n)` for pivot block `b`: blocks of `{b} ∪ past(b)` outside
    /// `past(b.parent)` plus the lag allowance, and the margin of `b`.
    pub fn risk_query(&self, store: &BlockStore, view: &View, b: Ix) -> RiskQuery {
        let p = store.parent(b);
        let m = store.closure_size(b) - (store.closure_size(p) - 1) + self.cfg.extra_m;
        let n = view.margin(store, b).max(0) as u64;
        RiskQuery { m, n, theta: self.cfg.theta, t: self.cfg.t, beta: self.cfg.beta, eta_w: self.eta_w() }
    }

    /// Slices over `Chain(b.parent)` without genesis, youngest first.
    pub fn break_query(&self, store: &BlockStore, view: &View, b: Ix) -> BreakQuery {
        let p = store.parent(b);
        let past_p_weight = store.closure_weight(p) - store.weight(p);
        let unseen = view.total_weight().saturating_sub(past_p_weight);
        let th_p = store.timer_height(p) as i64;
        let size_p = store.closure_size(p);
        let mut slices = Vec::new();
        let mut cur: Option<Slice> = None;
        let mut count = 0usize;
        let mut a = p;
        while store.parent(a) != NIL {
            let ap = store.parent(a);
            let gap = th_p - store.timer_height(ap) as i64;
            let m = size_p - store.closure_size(ap) + self.cfg.extra_m;
            let l = view.sib_subtree_weight(store, a) + self.cfg.extra_m;
            let w = view.subtree_weight(a).saturating_sub(unseen);
            cur = Some(match cur {
                None => Slice { gap, m, l, w },
                Some(s) => Slice { gap: s.gap.max(gap), m: s.m.max(m), l: s.l.max(l), w: s.w.min(w) },
            });
            count += 1;
            if count == self.cfg.slice_size.max(1) {
                slices.extend(cur.take());
                count = 0;
            }
            a = ap;
        }
        slices.extend(cur);
        BreakQuery {
            theta: self.cfg.theta,
            eta_t: self.params.eta_t,
            eta_b: self.params.eta_b,
            eta_a: self.params.eta_a,
            eta_w: self.params.eta_w,
            beta: self.cfg.beta,
            slices,
            z_gap: self.cfg.z_gap,
        }
    }

    pub fn decide(&mut self, store: &BlockStore, view: &View, b: Ix) -> Result<Decision, ConfirmError> {
        if !view.on_pivot(store, b) {
            return Err(ConfirmError::NotOnPivot(store.id(b)));
        }
        if store.parent(b) == NIL {
            return Ok(Decision { confirmed: true, risk: 0.0, confirmation_risk: 0.0, break_risk: 0.0, m: 0, n: 0 });
        }
        let q = self.risk_query(store, view, b);
        let confirmation_risk = self.cache.confirmation_risk(&q)?;
        if confirmation_risk > self.cfg.target_risk {
            let risk = confirmation_risk.min(1.0);
            return Ok(Decision { confirmed: false, risk, confirmation_risk, break_risk: f64::NAN, m: q.m, n: q.n });
        }
        let break_risk = if self.params.adapt_disabled {
            0.0
        } else {
            let budget = self.cfg.target_risk - confirmation_risk;
            break_risk_within(&self.break_query(store, view, b), budget)?.1
        };
        let risk = (confirmation_risk + break_risk).min(1.0);
        Ok(Decision { confirmed: risk <= self.cfg.target_risk, risk, confirmation_risk, break_risk, m: q.m, n: q.n })
    }
}

/// One-shot decision for a block of any graph.
pub fn confirm_decision<G: Graph>(
    g: &G,
    b: crate::block::BlockId,
    target_risk: f64,
    cfg: &ConfirmConfig,
    params: &ProtocolParams,
) -> Result<(bool, f64), ConfirmError> {
    let ix = g.ix_of(b).map_err(|_| ConfirmError::NotOnPivot(b))?;
    let mut c = Confirmer::new(ConfirmConfig { target_risk, ..cfg.clone() }, params.clone());
    let d = c.decide(g.store(), g.view(), ix)?;
    Ok((d.confirmed, d.risk))
}
