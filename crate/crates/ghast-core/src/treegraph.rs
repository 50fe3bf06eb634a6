//! Tree-Graph queries (chains, subtree weights, GHOST pivot, total order,
//! past graphs) and the owned `TreeGraph` container with its snapshot format.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write;
use fixedbitset::FixedBitSet;

use crate::block::{Block, BlockId, Creator};
pub use crate::store::GraphError;
use crate::rules::{weight_for, ProtocolParams};
use crate::store::{BlockStore, ClosureHint, Ix, NIL};
use crate::view::{ForkChoice, View, WeightBackend};

/// Blocks from genesis to a tip along parent edges.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct ChainView {
    pub blocks: Vec<BlockId>,
}

impl ChainView {
    pub fn tip(&self) -> Option<BlockId> {
        self.blocks.last().copied()
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }
}

/// Read access shared by whole graphs and past graphs.
pub trait Graph {
    fn store(&self) -> &BlockStore;
    fn view(&self) -> &View;

    /// Arena index of a member block.
    fn ix_of(&self, id: BlockId) -> Result<Ix, GraphError> {
        match self.store().ix(id) {
            Some(ix) if self.view().contains(ix) => Ok(ix),
            _ => Err(GraphError::UnknownBlock(id)),
        }
    }

    fn contains(&self, id: BlockId) -> bool {
        self.ix_of(id).is_ok()
    }

    fn len(&self) -> usize {
        self.view().len()
    }

    fn is_empty(&self) -> bool {
        self.view().is_empty()
    }

    fn block(&self, id: BlockId) -> Result<Block, GraphError> {
        Ok(self.store().block(self.ix_of(id)?))
    }

    fn weight(&self, id: BlockId) -> Result<u64, GraphError> {
        Ok(self.store().weight(self.ix_of(id)?))
    }

    fn height(&self, id: BlockId) -> Result<u32, GraphError> {
        Ok(self.store().height(self.ix_of(id)?))
    }

    fn chain_of(&self, id: BlockId) -> Result<ChainView, GraphError> {
        let mut ix = self.ix_of(id)?;
        let s = self.store();
        let mut blocks = Vec::with_capacity(s.height(ix) as usize + 1);
        while ix != NIL {
            blocks.push(s.id(ix));
            ix = s.parent(ix);
        }
        blocks.reverse();
        Ok(ChainView { blocks })
    }

    fn subtree_weight(&self, id: BlockId) -> Result<u64, GraphError> {
        Ok(self.view().subtree_weight(self.ix_of(id)?))
    }

    /// Positive-weight children.
    fn children(&self, id: BlockId) -> Result<BTreeSet<BlockId>, GraphError> {
        let ix = self.ix_of(id)?;
        Ok(self.view().chldn(self.store(), ix).map(|c| self.store().id(c)).collect())
    }

    fn best_child(&self, id: BlockId) -> Result<Option<BlockId>, GraphError> {
        let ix = self.ix_of(id)?;
        Ok(self.view().best_child(self.store(), ix).map(|c| self.store().id(c)))
    }

    fn sib_subtree_weight(&self, id: BlockId) -> Result<u64, GraphError> {
        let ix = self.ix_of(id)?;
        if self.store().parent(ix) == NIL {
            return Err(GraphError::GenesisHasNoSiblings);
        }
        Ok(self.view().sib_subtree_weight(self.store(), ix))
    }

    fn pivot(&self) -> Result<ChainView, GraphError> {
        if self.view().is_empty() {
            return Err(GraphError::EmptyGraph);
        }
        Ok(ChainView { blocks: self.view().pivot().iter().map(|&i| self.store().id(i)).collect() })
    }

    fn pivot_tip(&self) -> Option<BlockId> {
        self.view().pivot_tip().map(|i| self.store().id(i))
    }

    /// Total order: pivot epochs, each topologically sorted with the
    /// ready set drained in ascending digest order.
    fn order(&self) -> Vec<BlockId> {
        order_ix(self.store(), self.view().pivot()).into_iter().map(|i| self.store().id(i)).collect()
    }

    /// Past graph of a member block as an index view over the same store.
    fn past(&self, id: BlockId) -> Result<SubGraph<'_>, GraphError> {
        let ix = self.ix_of(id)?;
        Ok(SubGraph { store: self.store(), view: View::past_of(self.store(), ix, WeightBackend::Direct) })
    }
}

/// Orders the closure of `pivot`'s tip epoch by epoch.
pub fn order_ix(store: &BlockStore, pivot: &[Ix]) -> Vec<Ix> {
    let mut ordered = FixedBitSet::with_capacity(store.len());
    let mut out = Vec::new();
    let mut epoch: Vec<Ix> = Vec::new();
    let mut stack: Vec<Ix> = Vec::new();
    for &p in pivot {
        epoch.clear();
        stack.push(p);
        ordered.insert(p as usize);
        while let Some(x) = stack.pop() {
            epoch.push(x);
            for d in store.deps(x) {
                if !ordered.put(d as usize) {
                    stack.push(d);
                }
            }
        }
        topo_sort_into(store, &epoch, &mut out);
    }
    out
}

/// Appends `set` in topological order, ties broken by smaller digest.
pub fn topo_sort_into(store: &BlockStore, set: &[Ix], out: &mut Vec<Ix>) {
    if set.len() == 1 {
        out.push(set[0]);
        return;
    }
    let pos: BTreeMap<Ix, usize> = set.iter().enumerate().map(|(i, &x)| (x, i)).collect();
    let mut indeg = alloc::vec![0usize; set.len()];
    let mut dependents: Vec<Vec<usize>> = alloc::vec![Vec::new(); set.len()];
    for (i, &x) in set.iter().enumerate() {
        for d in store.deps(x) {
            if let Some(&j) = pos.get(&d) {
                indeg[i] += 1;
                dependents[j].push(i);
            }
        }
    }
    let mut ready: BTreeSet<(BlockId, usize)> =
        (0..set.len()).filter(|&i| indeg[i] == 0).map(|i| (store.id(set[i]), i)).collect();
    while let Some((_, i)) = ready.pop_first() {
        out.push(set[i]);
        for &j in &dependents[i] {
            indeg[j] -= 1;
            if indeg[j] == 0 {
                ready.insert((store.id(set[j]), j));
            }
        }
    }
}

/// Borrowed view over another graph's store, e.g. a past graph.
#[derive(Clone, Debug)]
pub struct SubGraph<'a> {
    pub store: &'a BlockStore,
    pub view: View,
}

impl Graph for SubGraph<'_> {
    fn store(&self) -> &BlockStore {
        self.store
    }
    fn view(&self) -> &View {
        &self.view
    }
}

/// How `TreeGraph::insert_block` assigns weights.
#[derive(Clone, Debug, PartialEq)]
pub enum WeightRule {
    /// Every block weighs 1.
    Unit,
    /// GHAST adaptive weights computed from the block's past graph.
    Ghast(ProtocolParams),
}

/// Owned, append-only Tree-Graph.
#[derive(Clone, Debug)]
pub struct TreeGraph {
    store: BlockStore,
    view: View,
    rule: WeightRule,
    validate: bool,
}

impl Graph for TreeGraph {
    fn store(&self) -> &BlockStore {
        &self.store
    }
    fn view(&self) -> &View {
        &self.view
    }
}

impl TreeGraph {
    pub fn new(rule: WeightRule) -> TreeGraph {
        let eta_t = match &rule {
            WeightRule::Unit => u64::MAX,
            WeightRule::Ghast(p) => p.eta_t,
        };
        TreeGraph {
            store: BlockStore::new(eta_t),
            view: View::new(WeightBackend::Direct, ForkChoice::Ghost),
            rule,
            validate: false,
        }
    }

    /// Graph holding only genesis.
    pub fn with_genesis(rule: WeightRule) -> TreeGraph {
        let mut g = TreeGraph::new(rule);
        g.insert_block(Block::genesis()).expect("fresh graph accepts genesis");
        g
    }

    /// Enables the parent-is-pivot-tip check on insert.
    pub fn set_validation(&mut self, on: bool) {
        self.validate = on;
    }

    pub fn rule(&self) -> &WeightRule {
        &self.rule
    }

    fn deps_closure(&self, b: &Block) -> Result<FixedBitSet, GraphError> {
        let mut set = FixedBitSet::with_capacity(self.store.len());
        let mut stack = Vec::new();
        for d in b.deps() {
            let ix = self.store.ix(d).ok_or(GraphError::MissingDependency { block: b.id, missing: d })?;
            if !set.put(ix as usize) {
                stack.push(ix);
            }
        }
        while let Some(x) = stack.pop() {
            for d in self.store.deps(x) {
                if !set.put(d as usize) {
                    stack.push(d);
                }
            }
        }
        Ok(set)
    }

    /// Inserts a block, deriving its weight from the graph's weight rule.
    pub fn insert_block(&mut self, b: Block) -> Result<(), GraphError> {
        self.insert_inner(b, None)
    }

    /// Inserts a block with an explicit weight (the weight rule is bypassed).
    pub fn insert_with_weight(&mut self, b: Block, weight: u64) -> Result<(), GraphError> {
        self.insert_inner(b, Some(weight))
    }

    fn insert_inner(&mut self, b: Block, weight: Option<u64>) -> Result<(), GraphError> {
        if self.store.ix(b.id).is_some() {
            return Err(GraphError::DuplicateId(b.id));
        }
        let needs_past = b.parent.is_some() && (self.validate || (weight.is_none() && self.rule != WeightRule::Unit));
        let (w, hint) = if needs_past {
            let set = self.deps_closure(&b)?;
            let past = View::from_set(&self.store, &set, WeightBackend::Direct);
            if self.validate {
                let parent = self.store.ix(b.parent.expect("non-genesis")).expect("checked by closure");
                if past.pivot_tip() != Some(parent) {
                    return Err(GraphError::InvalidParent(b.id));
                }
            }
            let w = match (weight, &self.rule) {
                (Some(w), _) => w,
                (None, WeightRule::Unit) => 1,
                (None, WeightRule::Ghast(p)) => weight_for(past.adapt_scratch(&self.store, p), b.id, p),
            };
            (w, ClosureHint::Known { size: past.len() as u64, weight: past.total_weight() })
        } else {
            (weight.unwrap_or(1), ClosureHint::Compute)
        };
        let ix = self.store.insert(&b, w, hint)?;
        self.view.insert(&self.store, ix);
        #[cfg(debug_assertions)]
        if self.store.len() % 512 == 0 {
            self.check_consistency().expect("incremental caches diverged from recomputation");
        }
        Ok(())
    }

    /// Recomputes subtree weights and the pivot from scratch and compares
    /// them with the incremental caches.
    pub fn check_consistency(&self) -> Result<(), &'static str> {
        let n = self.store.len();
        let mut sub = alloc::vec![0u64; n];
        for i in (0..n as Ix).rev() {
            sub[i as usize] += self.store.weight(i);
            let p = self.store.parent(i);
            if p != NIL {
                sub[p as usize] += sub[i as usize];
            }
        }
        if (0..n as Ix).any(|i| sub[i as usize] != self.view.subtree_weight(i)) {
            return Err("subtree weight cache");
        }
        if self.view.pivot_scratch(&self.store) != self.view.pivot() {
            return Err("pivot cache");
        }
        Ok(())
    }

    /// One block per line: `id parent refs creator born_round weight`, with
    /// `-` for an absent parent or an empty reference list.
    pub fn to_snapshot(&self) -> String {
        let mut out = String::new();
        for ix in 0..self.store.len() as Ix {
            let s = &self.store;
            let p = s.parent(ix);
            let _ = write!(out, "{} ", s.id(ix));
            if p == NIL {
                out.push('-');
            } else {
                let _ = write!(out, "{}", s.id(p));
            }
            out.push(' ');
            if s.refs(ix).is_empty() {
                out.push('-');
            }
            for (k, &r) in s.refs(ix).iter().enumerate() {
                if k > 0 {
                    out.push(',');
                }
                let _ = write!(out, "{}", s.id(r));
            }
            let _ = writeln!(out, " {} {} {}", s.creator(ix).as_str(), s.born_round(ix), s.weight(ix));
        }
        out
    }

    /// Parses a snapshot; weights are taken as written.
    pub fn from_snapshot(text: &str, rule: WeightRule) -> Result<TreeGraph, GraphError> {
        let mut g = TreeGraph::new(rule);
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |msg| GraphError::Snapshot { line: n + 1, msg };
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 6 {
                return Err(bad("expected 6 fields"));
            }
            let id = BlockId::parse_hex(f[0]).ok_or(bad("bad id"))?;
            let parent = match f[1] {
                "-" => None,
                s => Some(BlockId::parse_hex(s).ok_or(bad("bad parent"))?),
            };
            let refs = match f[2] {
                "-" => Vec::new(),
                s => s.split(',').map(BlockId::parse_hex).collect::<Option<Vec<_>>>().ok_or(bad("bad ref"))?,
            };
            let creator = Creator::parse(f[3]).ok_or(bad("bad creator"))?;
            let born_round = f[4].parse().map_err(|_| bad("bad round"))?;
            let weight = f[5].parse().map_err(|_| bad("bad weight"))?;
            g.insert_with_weight(Block { id, parent, refs, creator, born_round }, weight)?;
        }
        Ok(g)
    }
}
