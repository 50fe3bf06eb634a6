//! Round-based world: honest local graphs, delivery deadlines, mining and
//! event emission.
//!
//! Each round runs delivery (scheduled and adversary-chosen deliveries,
//! then forced delivery of every block whose deadline is this round), then
//! honest mining, then adversary mining. A block first shown to an honest
//! node in round `r` reaches every honest node in round `r + max(d, 1)`,
//! which is also the round of its `Arvl` event.

use std::collections::{BTreeMap, BTreeSet};

use ghast_core::oracle::{AnalysisOracle, EventKind, OracleEvent};
use ghast_core::rules::weight_for;
use ghast_core::store::ClosureHint;
use ghast_core::treegraph::topo_sort_into;
use ghast_core::{Block, BlockStore, Creator, DigestKey, ForkChoice, Ix, ProtocolParams, Strategy, View, WeightBackend};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{Mode, OracleOptions, SimConfig};
use crate::events::Event;
use crate::SimError;

/// Exposure round of a block no honest node has seen.
pub const NEVER: u64 = u64::MAX;

/// Honest recipients of a delivery.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Target {
    All,
    Node(usize),
    Group(usize),
}

/// Hand `block` (with its missing dependencies) to `to` in round `round`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Delivery {
    pub block: Ix,
    pub to: Target,
    pub round: u64,
}

/// Past graph of a malicious block.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PastSpec {
    /// Every generated block: refs are all tips of the full graph.
    All,
    /// Exactly the local graph of an honest node, which must hold the parent.
    NodeView(usize),
    /// Only the parent and its past.
    ParentOnly,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MinePlan {
    pub parent: Ix,
    pub past: PastSpec,
}

/// Strategy interface of the adversary. It sees the whole world but acts
/// only through deliveries and mining plans.
pub trait Adversary: Send {
    fn name(&self) -> &'static str;
    /// Phase 2: deliveries for this round or later ones.
    fn deliver(&mut self, w: &World) -> Result<Vec<Delivery>, SimError>;
    /// Phase 3(b): where to attach the next malicious block.
    fn mine(&mut self, w: &World) -> MinePlan;
    /// Called after the adversary's block `ix` entered the store.
    fn on_mined(&mut self, _w: &World, _ix: Ix) {}
}

pub struct World {
    cfg: SimConfig,
    params: ProtocolParams,
    key: DigestKey,
    store: BlockStore,
    nodes: Vec<View>,
    all: View,
    groups: Vec<usize>,
    round: u64,
    rng: ChaCha8Rng,
    exposure: Vec<u64>,
    strategy: Vec<Option<Strategy>>,
    miner: Vec<u32>,
    arrivals: BTreeMap<u64, Vec<Ix>>,
    scheduled: BTreeMap<u64, Vec<(Ix, Target)>>,
    withheld: BTreeSet<Ix>,
    events: Vec<Event>,
    oracle: Option<AnalysisOracle>,
    nonce: u64,
    observer_strategy: Strategy,
    honest_per_round: Vec<u32>,
}

impl World {
    pub fn new(cfg: &SimConfig, oracle: Option<&OracleOptions>) -> Result<World, SimError> {
        let params = cfg.effective_params();
        let fork = match cfg.mode {
            Mode::NakamotoRef => ForkChoice::Longest,
            Mode::Ghast | Mode::PlainGhost => ForkChoice::Ghost,
        };
        let mut store = BlockStore::new(params.eta_t);
        let g = store.insert(&Block::genesis(), 1, ClosureHint::Compute)?;
        let mk = |backend| {
            let mut v = View::new(backend, fork).with_margin_tracking(params.eta_a);
            v.insert(&store, g);
            v
        };
        let h = cfg.honest();
        let mut nodes = Vec::with_capacity(h);
        for i in 0..h {
            nodes.push(mk(if i == 0 { cfg.observer_backend } else { cfg.backend }));
        }
        let all = mk(WeightBackend::LinkCut);
        let oracle = match oracle {
            Some(o) if o.enabled => {
                let mut a = AnalysisOracle::new(&store, params.clone())?;
                a.set_child_sweep_every(o.child_sweep_every);
                a.set_reference_refresh(o.reference_every);
                Some(a)
            }
            _ => None,
        };
        Ok(World {
            cfg: cfg.clone(),
            params,
            key: DigestKey::new(cfg.seed),
            store,
            nodes,
            all,
            groups: (0..h).map(|i| usize::from(i >= h.div_ceil(2))).collect(),
            round: 0,
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            exposure: vec![0],
            strategy: vec![None],
            miner: vec![u32::MAX],
            arrivals: BTreeMap::new(),
            scheduled: BTreeMap::new(),
            withheld: BTreeSet::new(),
            events: Vec::new(),
            oracle,
            nonce: 0,
            observer_strategy: Strategy::Opt,
            honest_per_round: Vec::new(),
        })
    }

    pub fn cfg(&self) -> &SimConfig {
        &self.cfg
    }

    /// Parameters of the weight rule in force (unit weights outside GHAST mode).
    pub fn params(&self) -> &ProtocolParams {
        &self.params
    }

    pub fn store(&self) -> &BlockStore {
        &self.store
    }

    /// Local graphs of the honest nodes; node 0 is the observer.
    pub fn nodes(&self) -> &[View] {
        &self.nodes
    }

    /// Every generated block, as the omniscient adversary sees it.
    pub fn all(&self) -> &View {
        &self.all
    }

    /// Group of each honest node: the first half is group 0, the rest group 1.
    pub fn groups(&self) -> &[usize] {
        &self.groups
    }

    /// Current round: the next one to run, or the total after a run.
    pub fn round(&self) -> u64 {
        self.round
    }

    pub fn exposure(&self, ix: Ix) -> Option<u64> {
        let r = self.exposure[ix as usize];
        (r != NEVER).then_some(r)
    }

    /// Strategy an honest or adversary block was mined with in GHAST mode.
    pub fn strategy(&self, ix: Ix) -> Option<Strategy> {
        self.strategy[ix as usize]
    }

    /// Honest node that mined `ix`; `None` for genesis and malicious blocks.
    pub fn miner(&self, ix: Ix) -> Option<usize> {
        let m = self.miner[ix as usize];
        (m != u32::MAX).then_some(m as usize)
    }

    /// Round in which an exposed block reaches all honest nodes.
    pub fn arrival_round(&self, ix: Ix) -> Option<u64> {
        self.exposure(ix).map(|r| r + self.cfg.arrival_delay())
    }

    /// Malicious blocks no honest node has seen.
    pub fn withheld(&self) -> &BTreeSet<Ix> {
        &self.withheld
    }

    /// Exposed blocks whose arrival is still pending, keyed by arrival round.
    pub fn pending_arrivals(&self) -> &BTreeMap<u64, Vec<Ix>> {
        &self.arrivals
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn oracle(&self) -> Option<&AnalysisOracle> {
        self.oracle.as_ref()
    }

    /// Strategy the observer's local graph dictated at the end of the last round.
    pub fn observer_strategy(&self) -> Strategy {
        self.observer_strategy
    }

    /// Honest blocks mined in each finished round.
    pub fn honest_per_round(&self) -> &[u32] {
        &self.honest_per_round
    }

    fn targets(&self, t: Target) -> Vec<usize> {
        match t {
            Target::All => (0..self.nodes.len()).collect(),
            Target::Node(i) => vec![i],
            Target::Group(g) => (0..self.nodes.len()).filter(|&i| self.groups[i] == g).collect(),
        }
    }

    fn emit(&mut self, kind: EventKind, ix: Ix) -> Result<(), SimError> {
        self.events.push(Event { round: self.round, kind, block: self.store.id(ix) });
        if let Some(o) = self.oracle.as_mut() {
            o.apply_event(&self.store, OracleEvent { kind, block: ix })?;
        }
        Ok(())
    }

    fn topo(&self, set: &[Ix]) -> Vec<Ix> {
        let mut out = Vec::with_capacity(set.len());
        topo_sort_into(&self.store, set, &mut out);
        out
    }

    /// Accepts adversary deliveries, rejecting any that would land after the
    /// block's arrival deadline.
    fn accept(&mut self, ds: Vec<Delivery>, now: &mut Vec<(Ix, Target)>) -> Result<(), SimError> {
        for d in ds {
            if d.block as usize >= self.store.len() {
                return Err(SimError::UnknownBlock(d.block));
            }
            if let Target::Node(i) = d.to {
                if i >= self.nodes.len() {
                    return Err(SimError::UnknownNode(i));
                }
            }
            if d.round < self.round {
                return Err(SimError::DeadlineViolation {
                    block: self.store.id(d.block),
                    requested: d.round,
                    deadline: self.round,
                });
            }
            if let Some(deadline) = self.arrival_round(d.block) {
                if d.round > deadline {
                    return Err(SimError::DeadlineViolation { block: self.store.id(d.block), requested: d.round, deadline });
                }
            }
            if d.round == self.round {
                now.push((d.block, d.to));
            } else {
                self.scheduled.entry(d.round).or_default().push((d.block, d.to));
            }
        }
        Ok(())
    }

    /// Phase 2. Deliveries are dependency-closed: a node receiving a block
    /// also receives whatever part of its past it lacks.
    fn deliver(&mut self, mut due: Vec<(Ix, Target)>) -> Result<(), SimError> {
        let r = self.round;
        due.extend(self.scheduled.remove(&r).unwrap_or_default());
        let arriving = self.arrivals.remove(&r).unwrap_or_default();
        due.extend(arriving.iter().map(|&ix| (ix, Target::All)));
        let mut per_node: Vec<Vec<Ix>> = vec![Vec::new(); self.nodes.len()];
        let mut marked: Vec<BTreeSet<Ix>> = vec![BTreeSet::new(); self.nodes.len()];
        let mut stack = Vec::new();
        for (ix, t) in due {
            for n in self.targets(t) {
                let view = &self.nodes[n];
                if view.contains(ix) || !marked[n].insert(ix) {
                    continue;
                }
                stack.push(ix);
                while let Some(x) = stack.pop() {
                    per_node[n].push(x);
                    for d in self.store.deps(x) {
                        if !view.contains(d) && marked[n].insert(d) {
                            stack.push(d);
                        }
                    }
                }
            }
        }
        let mut fresh: Vec<Ix> = per_node.iter().flatten().copied().filter(|&x| self.exposure[x as usize] == NEVER).collect();
        fresh.sort_unstable();
        fresh.dedup();
        let arrival = r + self.cfg.arrival_delay();
        for x in self.topo(&fresh) {
            self.exposure[x as usize] = r;
            self.withheld.remove(&x);
            self.arrivals.entry(arrival).or_default().push(x);
            self.emit(EventKind::MRls, x)?;
        }
        for (n, mut blocks) in per_node.into_iter().enumerate() {
            blocks.sort_unstable();
            for x in blocks {
                self.nodes[n].insert(&self.store, x);
                if let Some(o) = self.oracle.as_mut() {
                    o.check_local_insert(x);
                }
            }
        }
        let mut arriving = arriving;
        arriving.sort_unstable();
        for x in self.topo(&arriving) {
            if let Some(n) = self.nodes.iter().position(|v| !v.contains(x)) {
                return Err(SimError::Admissibility { block: self.store.id(x), node: n, round: r });
            }
            self.emit(EventKind::Arvl, x)?;
        }
        Ok(())
    }

    fn new_block(&mut self, parent: Ix, refs: Vec<Ix>, creator: Creator) -> Block {
        let ids: Vec<_> = refs.iter().map(|&x| self.store.id(x)).collect();
        loop {
            let id = self.key.digest(Some(self.store.id(parent)), &ids, creator, self.nonce);
            self.nonce += 1;
            if self.store.ix(id).is_none() {
                return Block { id, parent: Some(self.store.id(parent)), refs: ids, creator, born_round: self.round };
            }
        }
    }

    fn weight(&self, strategy: Strategy, b: &Block) -> u64 {
        match self.cfg.mode {
            Mode::Ghast => weight_for(strategy, b.id, &self.params),
            Mode::PlainGhost | Mode::NakamotoRef => 1,
        }
    }

    fn push_block(&mut self, b: &Block, w: u64, hint: ClosureHint, strategy: Strategy) -> Result<Ix, SimError> {
        let ix = self.store.insert(b, w, hint)?;
        self.exposure.push(NEVER);
        self.strategy.push((self.cfg.mode == Mode::Ghast).then_some(strategy));
        self.miner.push(u32::MAX);
        self.all.insert(&self.store, ix);
        Ok(ix)
    }

    /// Honest block of node `n`: parent is the pivot tip, refs are all other
    /// tips, so its past is the node's whole local graph.
    fn honest_block(&mut self, n: usize) -> Result<Ix, SimError> {
        let view = &self.nodes[n];
        let parent = view.pivot_tip().expect("views hold genesis");
        let refs: Vec<Ix> = view.tips().iter().copied().filter(|&t| t != parent).collect();
        let hint = ClosureHint::Known { size: view.len() as u64, weight: view.total_weight() };
        let b = self.new_block(parent, refs, Creator::Honest);
        let strategy = self.nodes[n].adapt(&self.store, &self.params);
        let w = self.weight(strategy, &b);
        let ix = self.push_block(&b, w, hint, strategy)?;
        self.miner[ix as usize] = n as u32;
        self.exposure[ix as usize] = self.round;
        let arrival = self.round + self.cfg.arrival_delay();
        self.arrivals.entry(arrival).or_default().push(ix);
        self.emit(EventKind::HGenRls, ix)?;
        self.nodes[n].insert(&self.store, ix);
        if let Some(o) = self.oracle.as_mut() {
            o.check_local_insert(ix);
        }
        Ok(ix)
    }

    fn malicious_block(&mut self, plan: MinePlan) -> Result<Ix, SimError> {
        let parent = plan.parent;
        let (refs, hint, strategy) = match plan.past {
            PastSpec::All => {
                let refs = self.all.tips().iter().copied().filter(|&t| t != parent).collect();
                let hint = ClosureHint::Known { size: self.all.len() as u64, weight: self.all.total_weight() };
                (refs, hint, self.all.adapt(&self.store, &self.params))
            }
            PastSpec::NodeView(n) => {
                let view = self.nodes.get(n).ok_or(SimError::UnknownNode(n))?;
                if !view.contains(parent) {
                    return Err(SimError::BadPlan("parent outside the chosen node view"));
                }
                let refs = view.tips().iter().copied().filter(|&t| t != parent).collect();
                let hint = ClosureHint::Known { size: view.len() as u64, weight: view.total_weight() };
                (refs, hint, self.nodes[n].adapt(&self.store, &self.params))
            }
            PastSpec::ParentOnly => {
                let strategy = if self.cfg.mode == Mode::Ghast && !self.params.adapt_disabled {
                    let mut past = View::past_of(&self.store, parent, WeightBackend::Direct);
                    past.insert(&self.store, parent);
                    past.adapt_scratch(&self.store, &self.params)
                } else {
                    Strategy::Opt
                };
                (Vec::new(), ClosureHint::Compute, strategy)
            }
        };
        if parent as usize >= self.store.len() {
            return Err(SimError::UnknownBlock(parent));
        }
        let b = self.new_block(parent, refs, Creator::Malicious);
        let w = self.weight(strategy, &b);
        let ix = self.push_block(&b, w, hint, strategy)?;
        self.withheld.insert(ix);
        self.emit(EventKind::MGen, ix)?;
        Ok(ix)
    }

    /// Runs one round.
    pub fn step(&mut self, adv: &mut dyn Adversary) -> Result<(), SimError> {
        if self.round >= self.cfg.horizon {
            return Err(SimError::HorizonExceeded(self.cfg.horizon));
        }
        let mut now = Vec::new();
        let ds = adv.deliver(self)?;
        self.accept(ds, &mut now)?;
        self.deliver(now)?;
        let p = 1.0 / self.cfg.eta_d;
        let mut mined = 0u32;
        for n in 0..self.nodes.len() {
            if self.rng.gen_bool(p) {
                self.honest_block(n)?;
                mined += 1;
            }
        }
        self.honest_per_round.push(mined);
        for _ in 0..self.cfg.corrupted() {
            if self.rng.gen_bool(p) {
                let plan = adv.mine(self);
                let ix = self.malicious_block(plan)?;
                adv.on_mined(self, ix);
            }
        }
        self.observer_strategy = self.nodes[0].adapt(&self.store, &self.params);
        self.round += 1;
        Ok(())
    }

    /// Checks that every block whose deadline has passed is in every honest
    /// local graph.
    pub fn check_admissibility(&self) -> Result<(), SimError> {
        let delay = self.cfg.arrival_delay();
        for (ix, &r) in self.exposure.iter().enumerate() {
            if r != NEVER && r + delay < self.round {
                if let Some(n) = self.nodes.iter().position(|v| !v.contains(ix as Ix)) {
                    return Err(SimError::Admissibility { block: self.store.id(ix as Ix), node: n, round: self.round });
                }
            }
        }
        Ok(())
    }
}
