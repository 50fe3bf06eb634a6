//! Append-only arena holding every block of a run plus the intrinsic
//! per-block data (height, timer height, weight, closure statistics).
//!
//! Views over the arena (`View`) decide membership; the store itself never
//! forgets a block.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;
use fixedbitset::FixedBitSet;

use crate::block::{tag_sample, Block, BlockId, Creator, DOMAIN_TIMER, DOMAIN_WEIGHT};

/// Arena index of a block. Dependencies always have smaller indices.
pub type Ix = u32;
/// Absent index (parent of genesis, end of a child list).
pub const NIL: Ix = u32::MAX;

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum GraphError {
    #[error("unknown block {0}")]
    UnknownBlock(BlockId),
    #[error("block {block} depends on missing block {missing}")]
    MissingDependency { block: BlockId, missing: BlockId },
    #[error("duplicate block id {0}")]
    DuplicateId(BlockId),
    #[error("block {0}: parent is not the pivot tip of its past graph")]
    InvalidParent(BlockId),
    #[error("genesis has no siblings")]
    GenesisHasNoSiblings,
    #[error("block {0} has no parent but is not genesis, or genesis already exists")]
    InvalidGenesis(BlockId),
    #[error("graph is empty")]
    EmptyGraph,
    #[error("block {0} is not on the pivot chain")]
    NotOnPivot(BlockId),
    #[error("block {0} declares a weight that its past graph does not allow")]
    StrategyMismatch(BlockId),
    #[error("snapshot line {line}: {msg}")]
    Snapshot { line: usize, msg: &'static str },
}

/// How the closure statistics of a new block are obtained.
#[derive(Clone, Copy, Debug)]
pub enum ClosureHint {
    /// Walk the dependency closure.
    Compute,
    /// The past graph is known to hold `size` blocks of total weight `weight`.
    Known { size: u64, weight: u64 },
}

#[derive(Clone, Debug)]
pub struct BlockStore {
    ids: Vec<BlockId>,
    parent: Vec<Ix>,
    ref_off: Vec<u32>,
    refs: Vec<Ix>,
    creator: Vec<Creator>,
    born: Vec<u64>,
    height: Vec<u32>,
    weight: Vec<u64>,
    timer: Vec<bool>,
    th: Vec<u32>,
    closure_size: Vec<u64>,
    closure_weight: Vec<u64>,
    first_child: Vec<Ix>,
    next_sibling: Vec<Ix>,
    index: BTreeMap<BlockId, Ix>,
    eta_t: u64,
}

/// True with probability 1/ratio over uniform samples.
pub(crate) fn below_ratio(sample: u64, ratio: u64) -> bool {
    (sample as u128) * (ratio.max(1) as u128) < (1u128 << 64)
}

pub fn is_timer_id(id: BlockId, eta_t: u64) -> bool {
    id != crate::block::GENESIS_ID && below_ratio(tag_sample(DOMAIN_TIMER, id), eta_t)
}

pub fn is_heavy_id(id: BlockId, eta_w: u64) -> bool {
    below_ratio(tag_sample(DOMAIN_WEIGHT, id), eta_w)
}

impl BlockStore {
    /// Empty store; `eta_t` fixes the timer-tag ratio used for timer heights.
    pub fn new(eta_t: u64) -> BlockStore {
        BlockStore {
            ids: Vec::new(),
            parent: Vec::new(),
            ref_off: vec![0],
            refs: Vec::new(),
            creator: Vec::new(),
            born: Vec::new(),
            height: Vec::new(),
            weight: Vec::new(),
            timer: Vec::new(),
            th: Vec::new(),
            closure_size: Vec::new(),
            closure_weight: Vec::new(),
            first_child: Vec::new(),
            next_sibling: Vec::new(),
            index: BTreeMap::new(),
            eta_t,
        }
    }

    pub fn eta_t(&self) -> u64 {
        self.eta_t
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ix(&self, id: BlockId) -> Option<Ix> {
        self.index.get(&id).copied()
    }

    pub fn ix_of(&self, id: BlockId) -> Result<Ix, GraphError> {
        self.ix(id).ok_or(GraphError::UnknownBlock(id))
    }

    pub fn id(&self, ix: Ix) -> BlockId {
        self.ids[ix as usize]
    }

    pub fn parent(&self, ix: Ix) -> Ix {
        self.parent[ix as usize]
    }

    pub fn refs(&self, ix: Ix) -> &[Ix] {
        let i = ix as usize;
        &self.refs[self.ref_off[i] as usize..self.ref_off[i + 1] as usize]
    }

    /// Parent followed by refs.
    pub fn deps(&self, ix: Ix) -> impl Iterator<Item = Ix> + '_ {
        let p = self.parent(ix);
        (p != NIL).then_some(p).into_iter().chain(self.refs(ix).iter().copied())
    }

    pub fn creator(&self, ix: Ix) -> Creator {
        self.creator[ix as usize]
    }

    pub fn born_round(&self, ix: Ix) -> u64 {
        self.born[ix as usize]
    }

    /// Distance from genesis along parent edges.
    pub fn height(&self, ix: Ix) -> u32 {
        self.height[ix as usize]
    }

    pub fn weight(&self, ix: Ix) -> u64 {
        self.weight[ix as usize]
    }

    pub fn is_timer(&self, ix: Ix) -> bool {
        self.timer[ix as usize]
    }

    /// Highest timer height among timer blocks in the block's closure
    /// (itself included); 0 when there is none.
    pub fn timer_height(&self, ix: Ix) -> u32 {
        self.th[ix as usize]
    }

    /// Number of blocks in `{b} ∪ past(b)`.
    pub fn closure_size(&self, ix: Ix) -> u64 {
        self.closure_size[ix as usize]
    }

    /// Total weight of `{b} ∪ past(b)`.
    pub fn closure_weight(&self, ix: Ix) -> u64 {
        self.closure_weight[ix as usize]
    }

    /// All children along parent edges, regardless of weight or view.
    pub fn children(&self, ix: Ix) -> ChildIter<'_> {
        ChildIter { store: self, cur: self.first_child[ix as usize] }
    }

    pub fn block(&self, ix: Ix) -> Block {
        let p = self.parent(ix);
        Block {
            id: self.id(ix),
            parent: (p != NIL).then(|| self.id(p)),
            refs: self.refs(ix).iter().map(|&r| self.id(r)).collect(),
            creator: self.creator(ix),
            born_round: self.born_round(ix),
        }
    }

    /// Ancestor of `ix` at height `h` (itself when `h` equals its height).
    pub fn ancestor_at(&self, mut ix: Ix, h: u32) -> Ix {
        debug_assert!(h <= self.height(ix));
        while self.height(ix) > h {
            ix = self.parent(ix);
        }
        ix
    }

    /// Appends a block with an already decided weight.
    pub fn insert(&mut self, b: &Block, weight: u64, hint: ClosureHint) -> Result<Ix, GraphError> {
        if self.index.contains_key(&b.id) {
            return Err(GraphError::DuplicateId(b.id));
        }
        let parent = match b.parent {
            None => {
                if !self.ids.is_empty() || b.id != crate::block::GENESIS_ID || !b.refs.is_empty() {
                    return Err(GraphError::InvalidGenesis(b.id));
                }
                NIL
            }
            Some(p) => self.ix(p).ok_or(GraphError::MissingDependency { block: b.id, missing: p })?,
        };
        let mut ref_ix = Vec::with_capacity(b.refs.len());
        for &r in &b.refs {
            ref_ix.push(self.ix(r).ok_or(GraphError::MissingDependency { block: b.id, missing: r })?);
        }
        let ix = self.ids.len() as Ix;
        let timer = is_timer_id(b.id, self.eta_t);
        let dep_th = core::iter::once(parent)
            .chain(ref_ix.iter().copied())
            .filter(|&d| d != NIL)
            .map(|d| self.th[d as usize])
            .max()
            .unwrap_or(0);
        let (size, cw) = if parent == NIL {
            (1, weight)
        } else if ref_ix.is_empty() {
            (self.closure_size[parent as usize] + 1, self.closure_weight[parent as usize] + weight)
        } else {
            match hint {
                ClosureHint::Known { size, weight: w } => (size + 1, w + weight),
                ClosureHint::Compute => {
                    let (s, w) = self.closure_stats(parent, &ref_ix);
                    (s + 1, w + weight)
                }
            }
        };
        self.ids.push(b.id);
        self.parent.push(parent);
        self.refs.extend_from_slice(&ref_ix);
        self.ref_off.push(self.refs.len() as u32);
        self.creator.push(b.creator);
        self.born.push(b.born_round);
        self.height.push(if parent == NIL { 0 } else { self.height[parent as usize] + 1 });
        self.weight.push(weight);
        self.timer.push(timer);
        self.th.push(dep_th + timer as u32);
        self.closure_size.push(size);
        self.closure_weight.push(cw);
        self.first_child.push(NIL);
        self.next_sibling.push(NIL);
        if parent != NIL {
            self.next_sibling[ix as usize] = self.first_child[parent as usize];
            self.first_child[parent as usize] = ix;
        }
        self.index.insert(b.id, ix);
        Ok(ix)
    }

    fn closure_stats(&self, parent: Ix, refs: &[Ix]) -> (u64, u64) {
        let mut seen = FixedBitSet::with_capacity(self.len());
        let mut stack: Vec<Ix> = Vec::with_capacity(refs.len() + 1);
        let (mut size, mut weight) = (0u64, 0u64);
        for d in core::iter::once(parent).chain(refs.iter().copied()) {
            if !seen.put(d as usize) {
                stack.push(d);
            }
        }
        while let Some(x) = stack.pop() {
            size += 1;
            weight += self.weight(x);
            for d in self.deps(x) {
                if !seen.put(d as usize) {
                    stack.push(d);
                }
            }
        }
        (size, weight)
    }

    /// Membership bitset of `past(b)`, excluding `b`.
    pub fn past_set(&self, ix: Ix) -> FixedBitSet {
        let mut seen = FixedBitSet::with_capacity(self.len());
        let mut stack: Vec<Ix> = self.deps(ix).collect();
        for &d in &stack {
            seen.insert(d as usize);
        }
        while let Some(x) = stack.pop() {
            for d in self.deps(x) {
                if !seen.put(d as usize) {
                    stack.push(d);
                }
            }
        }
        seen
    }

    /// True when `a ∈ past(b)`. Only blocks with index above `a` are visited.
    pub fn in_past(&self, a: Ix, b: Ix) -> bool {
        if a >= b {
            return false;
        }
        let mut seen = FixedBitSet::with_capacity((b - a + 1) as usize);
        let mut stack = alloc::vec![b];
        while let Some(x) = stack.pop() {
            for d in self.deps(x) {
                if d == a {
                    return true;
                }
                if d > a && !seen.put((d - a) as usize) {
                    stack.push(d);
                }
            }
        }
        false
    }
}

pub struct ChildIter<'a> {
    store: &'a BlockStore,
    cur: Ix,
}

impl Iterator for ChildIter<'_> {
    type Item = Ix;

    fn next(&mut self) -> Option<Ix> {
        if self.cur == NIL {
            return None;
        }
        let c = self.cur;
        self.cur = self.store.next_sibling[c as usize];
        Some(c)
    }
}
