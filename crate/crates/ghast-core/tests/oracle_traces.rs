use ghast_core::oracle::{names, AnalysisOracle, EventKind, OracleEvent};
use ghast_core::store::{ClosureHint, Ix};
use ghast_core::{Block, BlockId, BlockStore, Creator, ProtocolParams};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn params() -> ProtocolParams {
    ProtocolParams { eta_d: 1.0, eta_w: 8, eta_a: 30, eta_t: 3, eta_b: 2, s_m: 1, s_h: 2, adapt_disabled: false }
}

fn new_block(store: &mut BlockStore, rng: &mut ChaCha8Rng, parent: Ix, r: Ix, creator: Creator, eta_w: u64) -> Ix {
    let refs = if r != parent { vec![store.id(r)] } else { vec![] };
    let id = loop {
        let id = BlockId(rng.gen::<u64>() | 1);
        if store.ix(id).is_none() {
            break id;
        }
    };
    let w = match rng.gen_range(0..10) {
        0 => 0,
        1 | 2 => eta_w,
        _ => 1,
    };
    let b = Block { id, parent: Some(store.id(parent)), refs, creator, born_round: 0 };
    store.insert(&b, w, ClosureHint::Compute).unwrap()
}

/// Random legal trace; honest blocks extend recent `G_max` blocks.
#[test]
fn random_traces_keep_containment_and_flag_invariants() {
    let p = params();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut store = BlockStore::new(p.eta_t);
    store.insert(&Block::genesis(), 1, ClosureHint::Compute).unwrap();
    let mut o = AnalysisOracle::new(&store, p.clone()).unwrap();
    o.set_child_sweep_every(500);
    let mut withheld: Vec<Ix> = Vec::new();
    let mut max_order: Vec<Ix> = vec![0];
    let mut gen_order: Vec<Ix> = vec![0];
    for _ in 0..10_000 {
        let e = loop {
            match rng.gen_range(0..6) {
                0 | 1 => {
                    let recent = &max_order[max_order.len().saturating_sub(12)..];
                    let parent = *recent.choose(&mut rng).unwrap();
                    let r = *recent.choose(&mut rng).unwrap();
                    let x = new_block(&mut store, &mut rng, parent, r, Creator::Honest, p.eta_w);
                    max_order.push(x);
                    gen_order.push(x);
                    break OracleEvent { kind: EventKind::HGenRls, block: x };
                }
                2 => {
                    let recent = &gen_order[gen_order.len().saturating_sub(12)..];
                    let parent = *recent.choose(&mut rng).unwrap();
                    let x = new_block(&mut store, &mut rng, parent, parent, Creator::Malicious, p.eta_w);
                    withheld.push(x);
                    gen_order.push(x);
                    break OracleEvent { kind: EventKind::MGen, block: x };
                }
                3 => {
                    let ready: Vec<usize> = (0..withheld.len())
                        .filter(|&i| store.deps(withheld[i]).all(|d| o.g_max().contains(d)))
                        .collect();
                    if let Some(&i) = ready.choose(&mut rng) {
                        let x = withheld.swap_remove(i);
                        max_order.push(x);
                        break OracleEvent { kind: EventKind::MRls, block: x };
                    }
                }
                _ => {
                    let ready: Vec<Ix> = o
                        .in_transit()
                        .iter()
                        .copied()
                        .filter(|&x| store.deps(x).all(|d| o.g_min().contains(d)))
                        .collect();
                    if let Some(&x) = ready.choose(&mut rng) {
                        break OracleEvent { kind: EventKind::Arvl, block: x };
                    }
                }
            }
        };
        o.apply_event(&store, e).unwrap();
        assert!(o.g_min().len() <= o.g_max().len() && o.g_max().len() <= o.g_gen().len());
        assert!(o.g_min().members().all(|x| o.g_max().contains(x)));
        if let Some(f) = o.flag() {
            assert_eq!(store.creator(f), Creator::Honest);
            assert_eq!(store.weight(f), p.eta_w);
            assert!(o.g_max().contains(f) && !o.g_min().contains(f));
        }
    }
    assert!(o.g_max().members().all(|x| o.g_gen().contains(x)));
    let r = o.report();
    assert_eq!(r.events_checked, 10_000);
    for v in &r.violations {
        assert!(
            ![names::HONEST_CONTAINMENT, names::FLAG_BLOCK, names::ONE_POSITIVE_CHILD, names::SV_MONOTONE, names::SV_INCREMENT, names::SV_WEIGHT, names::SV_SUBSET, names::DELTA_DECOMPOSITION]
                .contains(&v.invariant_name),
            "{v:?}"
        );
    }
}
