//! GHAST rules: weight and timer tags, block age, the `Adapt` detector and
//! the block-weight function.

use crate::block::{Block, BlockId};
use crate::store::{is_heavy_id, is_timer_id, BlockStore, GraphError, Ix};
use crate::treegraph::Graph;
use crate::view::View;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Strategy {
    Opt,
    Con,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum WeightTag {
    Heavy,
    Light,
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("invalid protocol parameters: {0}")]
pub struct ParamError(pub &'static str);

/// Protocol parameters. `s_m` and `s_h` are only read by the analysis oracle.
#[derive(Clone, Debug, PartialEq)]
pub struct ProtocolParams {
    /// Expected oracle queries per block.
    pub eta_d: f64,
    pub eta_w: u64,
    pub eta_a: u64,
    pub eta_t: u64,
    pub eta_b: u64,
    pub s_m: u64,
    pub s_h: u64,
    /// Forces every block to weight 1 (plain GHOST).
    pub adapt_disabled: bool,
}

impl Default for ProtocolParams {
    fn default() -> Self {
        ProtocolParams::conflux()
    }
}

impl ProtocolParams {
    /// Production parameter set: η_w = 600, η_t = 360, η_a = 3·η_w, η_b = 160,
    /// with analysis thresholds for λ = 60.
    pub fn conflux() -> ProtocolParams {
        ProtocolParams {
            eta_d: 1.0,
            eta_w: 600,
            eta_a: 1800,
            eta_t: 360,
            eta_b: 160,
            s_m: 0,
            s_h: 0,
            adapt_disabled: false,
        }
        .with_analysis_thresholds(60.0)
    }

    /// `s_m = ⌈1.5λ⌉`, `s_h = ⌈3λ⌉`.
    pub fn with_analysis_thresholds(mut self, lambda: f64) -> ProtocolParams {
        self.s_m = libm::ceil(1.5 * lambda) as u64;
        self.s_h = libm::ceil(3.0 * lambda) as u64;
        self
    }

    /// Plain GHOST: unit weights and no adaptation.
    pub fn plain_ghost(mut self) -> ProtocolParams {
        self.eta_w = 1;
        self.adapt_disabled = true;
        self
    }

    pub fn validate(&self, analysis: bool) -> Result<(), ParamError> {
        if !(self.eta_d.is_finite() && self.eta_d >= 1.0) {
            return Err(ParamError("eta_d must be a finite number >= 1"));
        }
        if self.eta_w < 1 || self.eta_t < 1 {
            return Err(ParamError("eta_w and eta_t must be >= 1"));
        }
        if analysis {
            if 2 * self.s_h + 2 * self.s_m > self.eta_w {
                return Err(ParamError("analysis requires 2*s_h + 2*s_m <= eta_w"));
            }
            if self.eta_a < 2 * self.s_m + 2 * self.s_h + 2 * self.eta_w {
                return Err(ParamError("analysis requires eta_a >= 2*s_m + 2*s_h + 2*eta_w"));
            }
        }
        Ok(())
    }
}

pub fn weight_tag(id: BlockId, params: &ProtocolParams) -> WeightTag {
    if is_heavy_id(id, params.eta_w) {
        WeightTag::Heavy
    } else {
        WeightTag::Light
    }
}

pub fn timer_tag(id: BlockId, params: &ProtocolParams) -> bool {
    is_timer_id(id, params.eta_t)
}

/// Highest timer height in the closure of `b`, counting `b` itself when it
/// is a timer block.
pub fn timer_height<G: Graph>(g: &G, b: BlockId) -> Result<u32, GraphError> {
    let ix = g.ix_of(b)?;
    Ok(g.store().timer_height(ix))
}

pub fn max_timer_height<G: Graph>(g: &G) -> u32 {
    g.view().max_timer_height()
}

/// Block age speculation. `b` only has to exist in the underlying store.
pub fn is_old<G: Graph>(g: &G, b: BlockId, params: &ProtocolParams) -> Result<bool, GraphError> {
    let th = g.store().timer_height(g.store().ix_of(b)?);
    Ok(max_timer_height(g) as u64 >= th as u64 + params.eta_b)
}

pub fn adapt<G: Graph>(past_g: &G, params: &ProtocolParams) -> Strategy {
    past_g.view().adapt_scratch(past_g.store(), params)
}

pub fn weight_for(strategy: Strategy, id: BlockId, params: &ProtocolParams) -> u64 {
    match (strategy, weight_tag(id, params)) {
        (Strategy::Opt, _) => 1,
        (Strategy::Con, WeightTag::Heavy) => params.eta_w,
        (Strategy::Con, WeightTag::Light) => 0,
    }
}

pub fn block_weight<G: Graph>(b: &Block, past_g: &G, params: &ProtocolParams) -> u64 {
    weight_for(adapt(past_g, params), b.id, params)
}

/// Checks a declared weight against the one its past graph dictates.
pub fn validate_strategy<G: Graph>(
    b: &Block,
    declared_weight: u64,
    past_g: &G,
    params: &ProtocolParams,
) -> Result<(), GraphError> {
    if block_weight(b, past_g, params) == declared_weight {
        Ok(())
    } else {
        Err(GraphError::StrategyMismatch(b.id))
    }
}

/// Weight of an arena block computed from a freshly materialised past view.
pub fn weight_from_past(store: &BlockStore, ix: Ix, params: &ProtocolParams) -> u64 {
    if params.adapt_disabled {
        return 1;
    }
    let past = View::past_of(store, ix, crate::view::WeightBackend::Direct);
    weight_for(past.adapt_scratch(store, params), store.id(ix), params)
}
