#![allow(dead_code)]

use std::collections::{BTreeSet, HashMap, HashSet};

use ghast_core::treegraph::{Graph, WeightRule};
use fixedbitset::FixedBitSet;
use ghast_core::{Block, BlockId, Creator, TreeGraph, View, WeightBackend};
use proptest::prelude::*;

/// One generated block: parent selector, ref selectors, weight class.
pub type Spec = (u16, Vec<u16>, u8);

pub fn specs(max_len: usize) -> impl Strategy<Value = (u64, Vec<Spec>)> {
    (any::<u64>(), prop::collection::vec((any::<u16>(), prop::collection::vec(any::<u16>(), 0..3), 0u8..10), 1..max_len))
}

pub fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn weight_class(c: u8, eta_w: u64) -> u64 {
    match c {
        0 => 0,
        1 | 2 => eta_w,
        _ => 1,
    }
}

/// Blocks in insertion order plus their weights.
pub fn build_blocks(seed: u64, specs: &[Spec], eta_w: u64) -> Vec<(Block, u64)> {
    let mut out: Vec<(Block, u64)> = Vec::new();
    let mut known = vec![BlockId(0)];
    for (i, (p, refs, w)) in specs.iter().enumerate() {
        let parent = known[*p as usize % known.len()];
        let mut rs: Vec<BlockId> = refs.iter().map(|r| known[*r as usize % known.len()]).filter(|&r| r != parent).collect();
        rs.sort();
        rs.dedup();
        let id = BlockId(mix(seed ^ (i as u64).wrapping_mul(0x1000_0001)) | 1);
        if known.contains(&id) {
            continue;
        }
        known.push(id);
        out.push((
            Block { id, parent: Some(parent), refs: rs, creator: Creator::Honest, born_round: i as u64 },
            weight_class(*w, eta_w),
        ));
    }
    out
}

pub fn graph_of(blocks: &[(Block, u64)]) -> TreeGraph {
    let mut g = TreeGraph::with_genesis(WeightRule::Unit);
    for (b, w) in blocks {
        g.insert_with_weight(b.clone(), *w).unwrap();
    }
    g
}

/// Plain map-based model of a weighted block DAG.
pub struct Model {
    pub parent: HashMap<BlockId, Option<BlockId>>,
    pub deps: HashMap<BlockId, Vec<BlockId>>,
    pub weight: HashMap<BlockId, u64>,
}

impl Model {
    pub fn new(blocks: &[(Block, u64)]) -> Model {
        let mut m = Model { parent: HashMap::new(), deps: HashMap::new(), weight: HashMap::new() };
        m.parent.insert(BlockId(0), None);
        m.deps.insert(BlockId(0), vec![]);
        m.weight.insert(BlockId(0), 1);
        for (b, w) in blocks {
            m.parent.insert(b.id, b.parent);
            m.deps.insert(b.id, b.deps().collect());
            m.weight.insert(b.id, *w);
        }
        m
    }

    pub fn ids(&self) -> Vec<BlockId> {
        let mut v: Vec<BlockId> = self.parent.keys().copied().collect();
        v.sort();
        v
    }

    pub fn chain(&self, mut b: BlockId) -> Vec<BlockId> {
        let mut c = vec![b];
        while let Some(p) = self.parent[&b] {
            c.push(p);
            b = p;
        }
        c.reverse();
        c
    }

    /// Members restricted to `within`.
    pub fn subtree_weight(&self, b: BlockId, within: &HashSet<BlockId>) -> u64 {
        within.iter().filter(|x| self.chain(**x).contains(&b)).map(|x| self.weight[x]).sum()
    }

    pub fn children(&self, b: BlockId, within: &HashSet<BlockId>) -> BTreeSet<BlockId> {
        within.iter().filter(|x| self.parent[x] == Some(b) && self.weight[x] > 0).copied().collect()
    }

    pub fn pivot(&self, within: &HashSet<BlockId>) -> Vec<BlockId> {
        let mut out = vec![BlockId(0)];
        loop {
            let cur = *out.last().unwrap();
            let kids = self.children(cur, within);
            let best = kids.iter().copied().max_by(|a, b| {
                self.subtree_weight(*a, within).cmp(&self.subtree_weight(*b, within)).then(b.cmp(a))
            });
            match best {
                Some(b) => out.push(b),
                None => return out,
            }
        }
    }

    pub fn past(&self, b: BlockId) -> HashSet<BlockId> {
        let mut seen = HashSet::new();
        let mut queue: Vec<BlockId> = self.deps[&b].clone();
        while let Some(x) = queue.pop() {
            if seen.insert(x) {
                queue.extend(self.deps[&x].iter().copied());
            }
        }
        seen
    }

    pub fn all(&self) -> HashSet<BlockId> {
        self.parent.keys().copied().collect()
    }
}

pub fn is_topological(order: &[BlockId], m: &Model) -> bool {
    let pos: HashMap<BlockId, usize> = order.iter().enumerate().map(|(i, b)| (*b, i)).collect();
    order.iter().all(|b| m.deps[b].iter().all(|d| pos.get(d).is_some_and(|&pd| pd < pos[b])))
}

/// Blocks whose parent is always the pivot tip of their past graph.
pub fn build_valid_blocks(seed: u64, specs: &[Spec], eta_w: u64) -> Vec<(Block, u64)> {
    let mut g = TreeGraph::with_genesis(WeightRule::Unit);
    g.set_validation(true);
    let mut known = vec![BlockId(0)];
    let mut out = Vec::new();
    for (i, (_, refs, w)) in specs.iter().enumerate() {
        let rs: Vec<BlockId> = refs.iter().map(|r| known[*r as usize % known.len()]).collect();
        let mut set = FixedBitSet::with_capacity(g.store().len());
        set.insert(0);
        for r in &rs {
            let ix = g.store().ix(*r).unwrap();
            set.union_with(&g.store().past_set(ix));
            set.grow(ix as usize + 1);
            set.insert(ix as usize);
        }
        let v = View::from_set(g.store(), &set, WeightBackend::Direct);
        let parent = g.store().id(v.pivot_tip().unwrap());
        let mut rs: Vec<BlockId> = rs.into_iter().filter(|&r| r != parent).collect();
        rs.sort();
        rs.dedup();
        let id = BlockId(mix(seed ^ (i as u64).wrapping_mul(0x1000_0001)) | 1);
        if known.contains(&id) {
            continue;
        }
        let b = Block { id, parent: Some(parent), refs: rs, creator: Creator::Honest, born_round: i as u64 };
        let w = weight_class(*w, eta_w);
        g.insert_with_weight(b.clone(), w).unwrap();
        known.push(id);
        out.push((b, w));
    }
    out
}
