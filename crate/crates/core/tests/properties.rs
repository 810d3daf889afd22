use std::collections::HashSet;

use proptest::prelude::*;

use crunch_core::analytic::{execution_time, model_energy, ModelInputs};
use crunch_core::bup::{banks_for_ways, bup_decide, knee_ways, BupParams, UtilityMonitor};
use crunch_core::geometry::{CacheGeometry, DecodedAddress};
use crunch_core::hier::DirtyRowTree;
use crunch_core::remap::{crunch_bank, remap_delta, ActiveBankMask, RegionId, Remapper};
use crunch_core::rrt::RegionRemapTable;

fn table() -> RegionRemapTable {
    RegionRemapTable::generate(8, 32, 2).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn hier_counters_track_leaves(ops in prop::collection::vec((0usize..2048, any::<bool>()), 2000)) {
        let mut t = DirtyRowTree::new(2048, 16).unwrap();
        let mut truth = vec![false; 2048];
        for (row, dirty) in ops {
            t.set(row, dirty).unwrap();
            truth[row] = dirty;
        }
        // every internal counter equals the number of dirty leaves beneath it
        for level in 1..t.depth() {
            let span = 16usize.pow(level as u32);
            for (i, &c) in t.level(level).iter().enumerate() {
                let lo = i * span;
                let hi = ((i + 1) * span).min(2048);
                let want = truth[lo..hi].iter().filter(|&&d| d).count() as u32;
                prop_assert_eq!(c, want);
            }
        }
        let walk = t.enumerate();
        let brute: Vec<usize> = (0..2048).filter(|&r| truth[r]).collect();
        prop_assert_eq!(walk.rows, brute);
    }

    #[test]
    fn decode_round_trips(line in 0u64..(1 << 40), ch in 0usize..3) {
        let geoms = [
            CacheGeometry::default(),
            CacheGeometry { channels: 1, banks_per_channel: 8, rows_per_bank: 1024, row_bytes: 2048, line_bytes: 64, data_ways: 29 },
            CacheGeometry { channels: 2, banks_per_channel: 4, rows_per_bank: 16, row_bytes: 256, line_bytes: 64, data_ways: 3 },
        ];
        let g = geoms[ch];
        let addr = line * g.line_bytes as u64;
        let d = g.decode(addr + 5);
        prop_assert_eq!(g.encode(&d), addr);
        prop_assert!(d.row_index < g.rows_per_bank);
        prop_assert!(d.channel < g.channels);
        prop_assert_eq!(d.tag, line);
    }

    #[test]
    fn crunch_moves_exactly_the_regions_of_dropped_banks(bits in 1u32..256, drop in 1u32..256) {
        let t = table();
        let before = ActiveBankMask::from_bits(bits, 8).unwrap();
        let after = ActiveBankMask::from_bits(bits & !drop, 8).unwrap();
        prop_assume!(!after.is_empty());
        let r = Remapper::crunch(t.clone(), Default::default()).unwrap();
        let delta = remap_delta(&r, &before, &after).unwrap();
        let oracle: Vec<usize> = (0..256)
            .filter(|&i| {
                let b = crunch_bank(RegionId::from_index(i, 8), &t, &before).unwrap();
                !after.is_active(b)
            })
            .collect();
        prop_assert_eq!(delta.changed, oracle);
    }

    #[test]
    fn bup_knee_is_scale_invariant(hist in prop::collection::vec(0u64..1000, 32), misses in 0u64..5000, k in 1u64..20) {
        let mut m = UtilityMonitor::new(32, 32, 1).unwrap();
        m.hit_counters = hist.clone();
        m.access_count = hist.iter().sum::<u64>() + misses;
        let mut scaled = m.clone();
        scaled.hit_counters.iter_mut().for_each(|c| *c *= k);
        scaled.access_count *= k;
        for w in 1..32 {
            prop_assert!(m.misses(w) >= m.misses(w + 1));
        }
        let p = BupParams::default();
        prop_assert_eq!(knee_ways(&m, 0.05), knee_ways(&scaled, 0.05));
        if m.access_count > 0 {
            let a = bup_decide(&m, 100_000, 1e6, &p).unwrap();
            let b = bup_decide(&scaled, 100_000, 1e6, &p).unwrap();
            prop_assert_eq!(a.recommended_banks, b.recommended_banks);
            prop_assert!((1..=8).contains(&a.recommended_banks));
        }
    }

    #[test]
    fn execution_time_is_affine_in_tpmi(
        n in 1.0f64..1e4, ipc8 in 0.1f64..4.0, ipcb in 0.1f64..4.0,
        up in 0.0f64..1e6, down in 0.0f64..1e6, x in 0.0f64..1000.0,
    ) {
        let m = ModelInputs { n_millions: n, ipc8, ipc_b: ipcb, t_up: up, t_down: down, ..Default::default() };
        let t0 = execution_time(&m).unwrap();
        let tx = execution_time(&ModelInputs { tpmi: x, ..m }).unwrap();
        let slope = n * (up + down);
        prop_assert!((tx - t0 - slope * x).abs() <= 1e-9 * tx.max(1.0));
        let e0 = model_energy(&m).unwrap();
        prop_assert!(e0 >= 0.0);
    }
}

#[test]
fn bank_count_nondecreasing_in_ways() {
    let mut last = 0;
    for w in 1..=32 {
        let b = banks_for_ways(w, 32, 8);
        assert!(b >= last);
        last = b;
    }
}

#[test]
fn crunch_minimal_remapping_over_every_mask_pair() {
    let t = table();
    let r = Remapper::crunch(t.clone(), Default::default()).unwrap();
    for before_bits in 1u32..256 {
        let before = ActiveBankMask::from_bits(before_bits, 8).unwrap();
        for b in before.active() {
            let after = before.without(b);
            if after.is_empty() {
                continue;
            }
            let delta = remap_delta(&r, &before, &after).unwrap();
            let owned: HashSet<usize> = (0..256)
                .filter(|&i| crunch_bank(RegionId::from_index(i, 8), &t, &before).unwrap() == b)
                .collect();
            assert_eq!(delta.changed.iter().copied().collect::<HashSet<_>>(), owned);
        }
    }
}

#[test]
fn decode_is_injective_on_a_dense_range() {
    let g = CacheGeometry { channels: 2, banks_per_channel: 4, rows_per_bank: 16, row_bytes: 256, line_bytes: 64, data_ways: 3 };
    let mut seen: HashSet<DecodedAddress> = HashSet::new();
    for line in 0..100_000u64 {
        assert!(seen.insert(g.decode(line * 64)));
    }
}

#[test]
fn hier_survives_a_long_random_sequence() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
    let mut t = DirtyRowTree::new(2048, 16).unwrap();
    let mut truth = vec![false; 2048];
    for i in 0..200_000 {
        let row = rng.gen_range(0..2048);
        let dirty = rng.gen_bool(0.3);
        t.set(row, dirty).unwrap();
        truth[row] = dirty;
        if i % 10_000 == 0 {
            let want: Vec<usize> = (0..2048).filter(|&r| truth[r]).collect();
            assert_eq!(t.enumerate().rows, want);
            assert_eq!(t.root() as usize, want.len());
        }
    }
}
