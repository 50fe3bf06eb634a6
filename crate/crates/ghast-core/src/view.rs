//! A dependency-closed subset of a `BlockStore` with cached subtree
//! weights, tips, maximum timer height and an incrementally maintained
//! pivot chain.

use alloc::collections::BTreeSet;
use alloc::vec::Vec;
use core::cell::RefCell;
use fixedbitset::FixedBitSet;

use crate::lct::LinkCut;
use crate::rules::{ProtocolParams, Strategy};
use crate::store::{BlockStore, Ix, NIL};

/// Storage for subtree weights.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WeightBackend {
    /// Explicit per-block totals. An insert updates the ancestor path up to
    /// the first pivot block; pivot blocks keep the rest as a suffix sum
    /// over heights.
    Direct,
    /// Link-cut tree: logarithmic amortized update and query.
    LinkCut,
}

/// Rule that selects the main chain.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ForkChoice {
    /// Heaviest subtree, ties to the smaller digest.
    Ghost,
    /// Deepest block, ties to the smaller digest.
    Longest,
}

#[derive(Clone, Debug, Default)]
struct Direct {
    /// Weight below `ix` that reached it by an ancestor walk.
    own: Vec<u64>,
    height: Vec<u32>,
    /// `pend[k]`: weight whose walk stopped at the pivot block at height
    /// `k`; it counts for every pivot block at height `k` or below.
    pend: Fenwick,
    /// `off[h]`: largest subtree weight among the positive-weight siblings
    /// of the pivot block at height `h`.
    off: Vec<u64>,
}

#[derive(Clone, Debug)]
enum Weights {
    Direct(Direct),
    Lct(RefCell<LinkCut>),
}

/// Point updates and suffix sums over a growable index range.
#[derive(Clone, Debug, Default)]
struct Fenwick {
    raw: Vec<u64>,
    tree: Vec<u64>,
    total: u64,
}

impl Fenwick {
    fn add(&mut self, i: usize, x: u64) {
        if i >= self.raw.len() {
            self.raw.resize((i + 1).max(self.raw.len() * 2), 0);
            self.tree = self.raw.clone();
            for j in 0..self.tree.len() {
                let up = j | (j + 1);
                if up < self.tree.len() {
                    self.tree[up] += self.tree[j];
                }
            }
        }
        self.raw[i] += x;
        self.total += x;
        let mut j = i;
        while j < self.tree.len() {
            self.tree[j] += x;
            j |= j + 1;
        }
    }

    /// Sum over indices `< i`.
    fn prefix(&self, i: usize) -> u64 {
        let mut s = 0;
        let mut j = i.min(self.tree.len());
        while j > 0 {
            s += self.tree[j - 1];
            j &= j - 1;
        }
        s
    }

    fn suffix(&self, i: usize) -> u64 {
        self.total - self.prefix(i)
    }

    fn take(&mut self, i: usize) -> u64 {
        let x = self.raw.get(i).copied().unwrap_or(0);
        if x > 0 {
            self.raw[i] = 0;
            self.total -= x;
            let mut j = i;
            while j < self.tree.len() {
                self.tree[j] -= x;
                j |= j + 1;
            }
        }
        x
    }
}

#[derive(Clone, Debug)]
pub struct View {
    member: FixedBitSet,
    len: usize,
    total_weight: u64,
    weights: Weights,
    fork: ForkChoice,
    pivot: Vec<Ix>,
    max_th: u32,
    tips: BTreeSet<Ix>,
    /// Dominance threshold for margin tracking, with the pivot heights whose
    /// margin may be below it. Heights with a margin below the threshold are
    /// always present; entries may be stale in the other direction.
    weak: Option<(u64, BTreeSet<u32>)>,
}

impl View {
    pub fn new(backend: WeightBackend, fork: ForkChoice) -> View {
        View {
            member: FixedBitSet::new(),
            len: 0,
            total_weight: 0,
            weights: match backend {
                WeightBackend::Direct => Weights::Direct(Direct::default()),
                WeightBackend::LinkCut => Weights::Lct(RefCell::new(LinkCut::new())),
            },
            fork,
            pivot: Vec::new(),
            max_th: 0,
            tips: BTreeSet::new(),
            weak: None,
        }
    }

    /// Turns on cached dominance margins so `adapt` avoids a full pivot scan.
    /// Must be called on an empty view.
    pub fn with_margin_tracking(mut self, eta_a: u64) -> View {
        assert!(self.len == 0, "margin tracking must start on an empty view");
        self.weak = Some((eta_a, BTreeSet::new()));
        self
    }

    /// The past graph of `ix`, built from scratch.
    pub fn past_of(store: &BlockStore, ix: Ix, backend: WeightBackend) -> View {
        let set = store.past_set(ix);
        View::from_set(store, &set, backend)
    }

    /// View holding the given dependency-closed set.
    pub fn from_set(store: &BlockStore, set: &FixedBitSet, backend: WeightBackend) -> View {
        let mut v = View::new(backend, ForkChoice::Ghost);
        for i in set.ones() {
            v.insert(store, i as Ix);
        }
        v
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn contains(&self, ix: Ix) -> bool {
        self.member.contains(ix as usize)
    }

    pub fn members(&self) -> impl Iterator<Item = Ix> + '_ {
        self.member.ones().map(|i| i as Ix)
    }

    pub fn member_set(&self) -> &FixedBitSet {
        &self.member
    }

    pub fn total_weight(&self) -> u64 {
        self.total_weight
    }

    pub fn fork_choice(&self) -> ForkChoice {
        self.fork
    }

    /// Highest timer height in the view, 0 without timer blocks.
    pub fn max_timer_height(&self) -> u32 {
        self.max_th
    }

    /// Blocks not referenced by any member through a parent or ref edge.
    pub fn tips(&self) -> &BTreeSet<Ix> {
        &self.tips
    }

    /// Cached pivot chain, genesis first; empty for an empty view.
    pub fn pivot(&self) -> &[Ix] {
        &self.pivot
    }

    pub fn pivot_tip(&self) -> Option<Ix> {
        self.pivot.last().copied()
    }

    pub fn on_pivot(&self, store: &BlockStore, ix: Ix) -> bool {
        self.pivot.get(store.height(ix) as usize) == Some(&ix)
    }

    /// Total weight of members whose chain passes through `ix`.
    pub fn subtree_weight(&self, ix: Ix) -> u64 {
        match &self.weights {
            Weights::Direct(d) => {
                let Some(&own) = d.own.get(ix as usize) else { return 0 };
                let h = d.height[ix as usize] as usize;
                if self.pivot.get(h) == Some(&ix) {
                    own + d.pend.suffix(h)
                } else {
                    own
                }
            }
            Weights::Lct(l) => l.borrow_mut().get(ix) as u64,
        }
    }

    /// Members among the children of `ix` that carry positive weight.
    pub fn chldn<'a>(&'a self, store: &'a BlockStore, ix: Ix) -> impl Iterator<Item = Ix> + 'a {
        store.children(ix).filter(move |&c| self.contains(c) && store.weight(c) > 0)
    }

    fn better(&self, store: &BlockStore, a: Ix, wa: u64, b: Ix, wb: u64) -> bool {
        wa > wb || (wa == wb && store.id(a) < store.id(b))
    }

    pub fn best_child(&self, store: &BlockStore, ix: Ix) -> Option<Ix> {
        let mut best: Option<(Ix, u64)> = None;
        for c in self.chldn(store, ix) {
            let w = self.subtree_weight(c);
            match best {
                Some((b, bw)) if !self.better(store, c, w, b, bw) => {}
                _ => best = Some((c, w)),
            }
        }
        best.map(|(b, _)| b)
    }

    /// Largest subtree weight among the positive-weight siblings of `ix`.
    pub fn sib_subtree_weight(&self, store: &BlockStore, ix: Ix) -> u64 {
        let p = store.parent(ix);
        if p == NIL {
            return 0;
        }
        if let Weights::Direct(d) = &self.weights {
            let h = store.height(ix) as usize;
            if self.pivot.get(h) == Some(&ix) {
                return d.off[h];
            }
        }
        self.chldn(store, p).filter(|&c| c != ix).map(|c| self.subtree_weight(c)).max().unwrap_or(0)
    }

    /// `SubTW(b) − SibSubTW(b)`.
    pub fn margin(&self, store: &BlockStore, ix: Ix) -> i64 {
        self.subtree_weight(ix) as i64 - self.sib_subtree_weight(store, ix) as i64
    }

    /// Adds a block whose dependencies are all members.
    pub fn insert(&mut self, store: &BlockStore, ix: Ix) {
        debug_assert!(store.deps(ix).all(|d| self.contains(d)), "view must stay dependency-closed");
        if self.contains(ix) {
            return;
        }
        let i = ix as usize;
        if self.member.len() <= i {
            self.member.grow((i + 1).max(self.member.len() * 2));
        }
        self.member.insert(i);
        self.len += 1;
        let w = store.weight(ix);
        self.total_weight += w;
        let parent = store.parent(ix);
        match &mut self.weights {
            Weights::Direct(d) => {
                if d.own.len() <= i {
                    let n = (i + 1).max(d.own.len() * 2);
                    d.own.resize(n, 0);
                    d.height.resize(n, 0);
                }
                d.height[i] = store.height(ix);
                if w > 0 {
                    let mut y = ix;
                    let mut below = NIL;
                    while y != NIL {
                        let h = store.height(y) as usize;
                        if self.pivot.get(h) == Some(&y) {
                            d.pend.add(h, w);
                            if below != NIL && h + 1 < self.pivot.len() && store.weight(below) > 0 {
                                d.off[h + 1] = d.off[h + 1].max(d.own[below as usize]);
                            }
                            break;
                        }
                        d.own[y as usize] += w;
                        below = y;
                        y = store.parent(y);
                    }
                }
            }
            Weights::Lct(l) => {
                let l = l.get_mut();
                l.reserve_node(ix);
                if parent != NIL {
                    l.link(ix, parent);
                }
                if w > 0 {
                    l.path_add(ix, w as i64);
                }
            }
        }
        for d in store.deps(ix) {
            self.tips.remove(&d);
        }
        self.tips.insert(ix);
        self.max_th = self.max_th.max(store.timer_height(ix));
        if parent == NIL {
            self.cut_pivot(0);
            self.push_pivot(store, ix);
            return;
        }
        match self.fork {
            ForkChoice::Ghost => self.update_ghost_pivot(store, ix, w),
            ForkChoice::Longest => self.update_longest_pivot(store, ix),
        }
    }

    fn update_longest_pivot(&mut self, store: &BlockStore, ix: Ix) {
        let tip = *self.pivot.last().expect("genesis present");
        let (hx, ht) = (store.height(ix), store.height(tip));
        if hx < ht || (hx == ht && store.id(ix) > store.id(tip)) {
            return;
        }
        let mut path = Vec::new();
        let mut y = ix;
        while !self.on_pivot(store, y) {
            path.push(y);
            y = store.parent(y);
        }
        self.cut_pivot(store.height(y) as usize + 1);
        for x in path.into_iter().rev() {
            self.push_pivot(store, x);
        }
    }

    fn update_ghost_pivot(&mut self, store: &BlockStore, ix: Ix, w: u64) {
        if w == 0 {
            return;
        }
        let mut c = ix;
        let mut f = store.parent(ix);
        while !self.on_pivot(store, f) {
            c = f;
            f = store.parent(f);
        }
        if store.weight(c) == 0 {
            return;
        }
        let k = store.height(c) as usize;
        if k == self.pivot.len() {
            self.extend_pivot(store, c);
            return;
        }
        let p = self.pivot[k];
        if self.better(store, c, self.subtree_weight(c), p, self.subtree_weight(p)) {
            self.cut_pivot(k);
            if let Some((_, weak)) = &mut self.weak {
                let _ = weak.split_off(&(k as u32));
            }
            self.extend_pivot(store, c);
        } else {
            self.refresh_margin(store, k);
        }
    }

    /// Drops pivot heights `k..`, moving their suffix-sum weight into the
    /// dropped blocks and the new pivot tip.
    fn cut_pivot(&mut self, k: usize) {
        if let Weights::Direct(d) = &mut self.weights {
            let mut carry = 0;
            for h in (k..self.pivot.len()).rev() {
                carry += d.pend.take(h);
                d.own[self.pivot[h] as usize] += carry;
            }
            if k > 0 && carry > 0 {
                d.pend.add(k - 1, carry);
            }
        }
        self.pivot.truncate(k);
        if let Weights::Direct(d) = &mut self.weights {
            d.off.truncate(k);
        }
    }

    fn push_pivot(&mut self, store: &BlockStore, ix: Ix) {
        if let Weights::Direct(_) = self.weights {
            let p = store.parent(ix);
            let sib = if p == NIL {
                0
            } else {
                self.chldn(store, p).filter(|&c| c != ix).map(|c| self.subtree_weight(c)).max().unwrap_or(0)
            };
            if let Weights::Direct(d) = &mut self.weights {
                d.off.push(sib);
            }
        }
        self.pivot.push(ix);
    }

    fn extend_pivot(&mut self, store: &BlockStore, first: Ix) {
        let mut cur = first;
        loop {
            self.push_pivot(store, cur);
            self.refresh_margin(store, self.pivot.len() - 1);
            match self.best_child(store, cur) {
                Some(n) => cur = n,
                None => break,
            }
        }
    }

    fn refresh_margin(&mut self, store: &BlockStore, k: usize) {
        if k == 0 {
            return;
        }
        if let Some((eta_a, _)) = self.weak {
            let weak_now = self.margin(store, self.pivot[k]) < eta_a as i64;
            let set = &mut self.weak.as_mut().expect("tracking on").1;
            if weak_now {
                set.insert(k as u32);
            } else {
                set.remove(&(k as u32));
            }
        }
    }

    /// GHOST pivot recomputed from genesis, ignoring the cache.
    pub fn pivot_scratch(&self, store: &BlockStore) -> Vec<Ix> {
        let mut out = Vec::new();
        if self.len == 0 {
            return out;
        }
        let mut cur = 0;
        loop {
            out.push(cur);
            match self.best_child(store, cur) {
                Some(n) => cur = n,
                None => return out,
            }
        }
    }

    /// `MaxTH − TH(b) ≥ η_b` evaluated against this view.
    pub fn is_old(&self, store: &BlockStore, ix: Ix, eta_b: u64) -> bool {
        self.max_th as u64 >= store.timer_height(ix) as u64 + eta_b
    }

    /// Strategy bit for a block whose past graph is this view.
    pub fn adapt(&mut self, store: &BlockStore, params: &ProtocolParams) -> Strategy {
        if params.adapt_disabled {
            return Strategy::Opt;
        }
        match &self.weak {
            Some((eta_a, _)) if *eta_a == params.eta_a && self.fork == ForkChoice::Ghost => {}
            _ => return self.adapt_scratch(store, params),
        }
        let Some(&tip) = self.pivot.last() else { return Strategy::Opt };
        if self.is_old(store, tip, params.eta_b) {
            return Strategy::Con;
        }
        let max_th = self.max_th as u64;
        let old_prefix = self.pivot.partition_point(|&b| store.timer_height(b) as u64 + params.eta_b <= max_th);
        let upper = old_prefix.min(self.pivot.len() - 1) as u32;
        if upper == 0 {
            return Strategy::Opt;
        }
        let candidates: Vec<u32> = self.weak.as_ref().expect("tracking on").1.range(1..=upper).copied().collect();
        for k in candidates {
            if self.margin(store, self.pivot[k as usize]) < params.eta_a as i64 {
                return Strategy::Con;
            }
            self.weak.as_mut().expect("tracking on").1.remove(&k);
        }
        Strategy::Opt
    }

    /// Strategy bit computed by a full scan of the pivot chain.
    pub fn adapt_scratch(&self, store: &BlockStore, params: &ProtocolParams) -> Strategy {
        if params.adapt_disabled || self.len == 0 {
            return Strategy::Opt;
        }
        let pivot = self.pivot_scratch(store);
        let tip = *pivot.last().expect("non-empty");
        if self.is_old(store, tip, params.eta_b) {
            return Strategy::Con;
        }
        for k in 1..pivot.len() {
            if self.is_old(store, pivot[k - 1], params.eta_b) && self.margin(store, pivot[k]) < params.eta_a as i64 {
                return Strategy::Con;
            }
        }
        Strategy::Opt
    }
}
