mod common;

use std::collections::HashSet;

use common::*;
use ghast_core::store::Ix;
use ghast_core::treegraph::{Graph, WeightRule};
use ghast_core::{Block, BlockId, Creator, ForkChoice, GraphError, TreeGraph, View, WeightBackend};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn weights_children_and_siblings_match_enumeration((seed, sp) in specs(100)) {
        let blocks = build_blocks(seed, &sp, 5);
        let g = graph_of(&blocks);
        let m = Model::new(&blocks);
        let all = m.all();
        for b in m.ids() {
            prop_assert_eq!(g.subtree_weight(b).unwrap(), m.subtree_weight(b, &all));
            prop_assert_eq!(g.children(b).unwrap(), m.children(b, &all));
            let mut chain = m.chain(b);
            prop_assert_eq!(&g.chain_of(b).unwrap().blocks, &chain);
            prop_assert_eq!(chain.len() as u32, g.height(b).unwrap() + 1);
            // Recursive identity over all children, zero-weight ones included.
            let kids_all: u64 = all.iter().filter(|x| m.parent[x] == Some(b)).map(|x| g.subtree_weight(*x).unwrap()).sum();
            prop_assert_eq!(g.subtree_weight(b).unwrap(), m.weight[&b] + kids_all);
            if let Some(p) = m.parent[&b] {
                let sib = m.children(p, &all).into_iter().filter(|&c| c != b).map(|c| m.subtree_weight(c, &all)).max().unwrap_or(0);
                prop_assert_eq!(g.sib_subtree_weight(b).unwrap(), sib);
            } else {
                prop_assert_eq!(g.sib_subtree_weight(b), Err(GraphError::GenesisHasNoSiblings));
            }
            chain.clear();
        }
    }

    #[test]
    fn pivot_matches_recursive_argmax((seed, sp) in specs(200)) {
        let blocks = build_blocks(seed, &sp, 5);
        let g = graph_of(&blocks);
        let m = Model::new(&blocks);
        prop_assert_eq!(g.pivot().unwrap().blocks, m.pivot(&m.all()));
        prop_assert_eq!(g.view().pivot(), &g.view().pivot_scratch(g.store())[..]);
    }

    #[test]
    fn pivot_and_order_ignore_insertion_order((seed, sp) in specs(80), shuffle in any::<u64>()) {
        let blocks = build_blocks(seed, &sp, 5);
        let g = graph_of(&blocks);
        // Random topological re-ordering: repeatedly pick a ready block.
        let mut pending = blocks.clone();
        let mut placed: HashSet<BlockId> = [BlockId(0)].into_iter().collect();
        let mut reordered = Vec::new();
        let mut r = shuffle;
        while !pending.is_empty() {
            let ready: Vec<usize> = (0..pending.len()).filter(|&i| pending[i].0.deps().all(|d| placed.contains(&d))).collect();
            r = mix(r);
            let pick = ready[(r % ready.len() as u64) as usize];
            let b = pending.remove(pick);
            placed.insert(b.0.id);
            reordered.push(b);
        }
        let h = graph_of(&reordered);
        prop_assert_eq!(g.pivot().unwrap(), h.pivot().unwrap());
        prop_assert_eq!(g.order(), h.order());
    }

    #[test]
    fn order_prefix_is_stable_along_pivot((seed, sp) in specs(80)) {
        let blocks = build_valid_blocks(seed, &sp, 5);
        let g = graph_of(&blocks);
        let m = Model::new(&blocks);
        let order = g.order();
        for b in g.pivot().unwrap().blocks {
            let mut keep = m.past(b);
            keep.insert(b);
            let sub: Vec<(Block, u64)> = blocks.iter().filter(|(x, _)| keep.contains(&x.id)).cloned().collect();
            let h = graph_of(&sub);
            let end = order.iter().position(|&x| x == b).unwrap() + 1;
            prop_assert_eq!(&order[..end], &h.order()[..]);
        }
    }

    #[test]
    fn past_matches_reachability((seed, sp) in specs(100)) {
        let blocks = build_blocks(seed, &sp, 5);
        let g = graph_of(&blocks);
        let m = Model::new(&blocks);
        for b in m.ids() {
            let past = g.past(b).unwrap();
            let want = m.past(b);
            prop_assert_eq!(past.len(), want.len());
            for x in &want {
                prop_assert!(past.contains(*x));
            }
            // The past graph is itself closed under dependencies.
            for x in &want {
                prop_assert!(m.deps[x].iter().all(|d| want.contains(d)));
            }
            if !want.is_empty() {
                prop_assert_eq!(past.pivot().unwrap().blocks, m.pivot(&want));
            }
        }
    }

    #[test]
    fn valid_graphs_have_pivot_of_past_as_chain((seed, sp) in specs(80)) {
        let blocks = build_valid_blocks(seed, &sp, 5);
        let g = graph_of(&blocks);
        for (b, _) in &blocks {
            let mut chain = g.past(b.id).unwrap().pivot().unwrap().blocks;
            chain.push(b.id);
            prop_assert_eq!(chain, g.chain_of(b.id).unwrap().blocks);
        }
    }

    #[test]
    fn link_cut_and_longest_views_agree_with_oracles((seed, sp) in specs(150)) {
        let blocks = build_blocks(seed, &sp, 5);
        let g = graph_of(&blocks);
        let m = Model::new(&blocks);
        let mut lct = View::new(WeightBackend::LinkCut, ForkChoice::Ghost);
        let mut longest = View::new(WeightBackend::Direct, ForkChoice::Longest);
        let mut direct = View::new(WeightBackend::Direct, ForkChoice::Ghost);
        for i in 0..g.store().len() as Ix {
            lct.insert(g.store(), i);
            longest.insert(g.store(), i);
            direct.insert(g.store(), i);
            prop_assert_eq!(lct.pivot(), &lct.pivot_scratch(g.store())[..]);
            prop_assert_eq!(direct.pivot(), lct.pivot());
            for j in 0..=i {
                prop_assert_eq!(direct.subtree_weight(j), lct.subtree_weight(j));
                prop_assert_eq!(longest.subtree_weight(j), lct.subtree_weight(j));
                prop_assert_eq!(direct.sib_subtree_weight(g.store(), j), lct.sib_subtree_weight(g.store(), j));
                prop_assert_eq!(longest.sib_subtree_weight(g.store(), j), lct.sib_subtree_weight(g.store(), j));
            }
        }
        for i in 0..g.store().len() as Ix {
            prop_assert_eq!(lct.subtree_weight(i), g.view().subtree_weight(i));
        }
        prop_assert_eq!(lct.pivot(), g.view().pivot());
        let deepest = m.ids().into_iter().max_by(|a, b| m.chain(*a).len().cmp(&m.chain(*b).len()).then(b.cmp(a))).unwrap();
        let got: Vec<BlockId> = longest.pivot().iter().map(|&i| g.store().id(i)).collect();
        prop_assert_eq!(got, m.chain(deepest));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn order_is_topological_permutation_of_tip_closure((seed, sp) in specs(100)) {
        let blocks = build_blocks(seed, &sp, 5);
        let g = graph_of(&blocks);
        let m = Model::new(&blocks);
        let order = g.order();
        let tip = g.pivot_tip().unwrap();
        let mut closure = m.past(tip);
        closure.insert(tip);
        prop_assert_eq!(order.len(), closure.len());
        prop_assert_eq!(order.iter().copied().collect::<HashSet<_>>(), closure);
        prop_assert!(is_topological(&order, &m));
    }
}

#[test]
fn spec_examples() {
    let blk = |id: u64, parent: u64, refs: &[u64]| Block {
        id: BlockId(id),
        parent: Some(BlockId(parent)),
        refs: refs.iter().map(|&r| BlockId(r)).collect(),
        creator: Creator::Honest,
        born_round: 0,
    };
    let mut g = TreeGraph::with_genesis(WeightRule::Unit);
    g.insert_block(blk(1, 0, &[])).unwrap();
    g.insert_block(blk(2, 1, &[])).unwrap();
    assert_eq!(g.order(), vec![BlockId(0), BlockId(1), BlockId(2)]);

    // Pivot [g, p] where p refs x: order is [g, x, p].
    let mut g = TreeGraph::with_genesis(WeightRule::Unit);
    g.insert_block(blk(0x20, 0, &[])).unwrap();
    g.insert_block(blk(0x10, 0, &[])).unwrap();
    g.insert_with_weight(blk(0x30, 0x10, &[0x20]), 1).unwrap();
    assert_eq!(g.pivot().unwrap().blocks, vec![BlockId(0), BlockId(0x10), BlockId(0x30)]);
    assert_eq!(g.order(), vec![BlockId(0), BlockId(0x10), BlockId(0x20), BlockId(0x30)]);

    let past = g.past(BlockId(0x30)).unwrap();
    let ids: HashSet<BlockId> = [BlockId(0), BlockId(0x10), BlockId(0x20)].into_iter().collect();
    assert_eq!(past.len(), 3);
    assert!(ids.iter().all(|&b| past.contains(b)));
    assert!(g.past(BlockId(0)).unwrap().is_empty());

    let mut g = TreeGraph::with_genesis(WeightRule::Unit);
    g.insert_with_weight(blk(1, 0, &[]), 1).unwrap();
    g.insert_with_weight(blk(2, 1, &[]), 1).unwrap();
    g.insert_with_weight(blk(3, 0, &[]), 1).unwrap();
    for i in 4..10 {
        g.insert_with_weight(blk(i, 3, &[]), 1).unwrap();
    }
    assert_eq!(g.sib_subtree_weight(BlockId(1)).unwrap(), 7);
    assert_eq!(g.sib_subtree_weight(BlockId(2)).unwrap(), 0);
    assert_eq!(g.subtree_weight(BlockId(3)).unwrap(), 7);
}

#[test]
fn insert_errors() {
    let mut g = TreeGraph::with_genesis(WeightRule::Unit);
    g.set_validation(true);
    let b = |id: u64, parent: u64, refs: &[u64]| Block {
        id: BlockId(id),
        parent: Some(BlockId(parent)),
        refs: refs.iter().map(|&r| BlockId(r)).collect(),
        creator: Creator::Honest,
        born_round: 0,
    };
    g.insert_block(b(5, 0, &[])).unwrap();
    g.insert_block(b(6, 0, &[])).unwrap();
    assert_eq!(g.insert_block(b(5, 0, &[])), Err(GraphError::DuplicateId(BlockId(5))));
    assert_eq!(
        g.insert_block(b(7, 9, &[])),
        Err(GraphError::MissingDependency { block: BlockId(7), missing: BlockId(9) })
    );
    // Past {g, 5, 6}: best child of genesis is 5 (smaller digest), so 6 is an invalid parent.
    assert_eq!(g.insert_block(b(8, 6, &[5])), Err(GraphError::InvalidParent(BlockId(8))));
    g.insert_block(b(8, 5, &[6])).unwrap();
}
