//! Random interleavings of accesses and bank reconfigurations checked against
//! an uncached reference memory.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crunch_core::geometry::CacheGeometry;
use crunch_core::remap::{ActiveBankMask, Remapper, Scheme};
use crunch_core::rrt::RegionRemapTable;
use crunch_core::system::CacheSystem;
use crunch_core::transition::{
    power_down, power_up, reconfigure, shutdown_all, DirtyHandling, Discovery, TransitionPolicy,
};

fn geometry() -> CacheGeometry {
    CacheGeometry { channels: 2, banks_per_channel: 8, rows_per_bank: 16, row_bytes: 256, line_bytes: 64, data_ways: 3 }
}

fn random_mask(rng: &mut ChaCha8Rng) -> ActiveBankMask {
    ActiveBankMask::from_bits(rng.gen_range(1..256u32), 8).unwrap()
}

fn check(sys: &CacheSystem, oracle: &HashMap<u64, u64>, ctx: &str) {
    sys.check_placement().unwrap_or_else(|e| panic!("{ctx}: {e}"));
    let image = sys.visible_image();
    for (tag, v) in &image {
        assert_eq!(oracle.get(tag).copied().unwrap_or(0), *v, "{ctx}: phantom value for line {tag:#x}");
    }
    for (tag, v) in oracle {
        assert_eq!(image.get(tag).copied().unwrap_or(0), *v, "{ctx}: lost value for line {tag:#x}");
    }
}

fn run_case(case: u64, table: &RegionRemapTable) {
    let mut rng = ChaCha8Rng::seed_from_u64(case);
    let scheme = Scheme::ALL[(case % 3) as usize];
    let policy = TransitionPolicy::new(
        if case % 2 == 0 { Discovery::Hier } else { Discovery::FullWalk },
        if (case / 2) % 2 == 0 { DirtyHandling::Migrate } else { DirtyHandling::Writeback },
    );
    let remapper = Remapper::new(scheme, 8, || Ok(table.clone()), Default::default()).unwrap();
    let start = random_mask(&mut rng);
    let mut sys = CacheSystem::new(geometry(), remapper, start).unwrap();
    let footprint = rng.gen_range(64..2048u64);
    let mut oracle: HashMap<u64, u64> = HashMap::new();
    let mut token = 1u64;
    let ctx = |step: usize| format!("case {case} ({scheme}, {}/{}) step {step}", policy.discovery, policy.handling);

    for step in 0..400 {
        let roll = rng.gen_range(0..100);
        if roll < 4 {
            let target = random_mask(&mut rng);
            let current = sys.mask();
            let r = if current.is_empty() {
                power_up(&mut sys, target, &policy)
            } else if target.is_subset_of(&current) {
                power_down(&mut sys, target, &policy)
            } else if current.is_subset_of(&target) {
                power_up(&mut sys, target, &policy)
            } else {
                reconfigure(&mut sys, target, &policy)
            }
            .unwrap_or_else(|e| panic!("{}: {e}", ctx(step)));
            assert!(r.conserves_dirty_lines());
            check(&sys, &oracle, &ctx(step));
        } else if roll < 5 {
            if !sys.mask().is_empty() {
                shutdown_all(&mut sys, &policy).unwrap();
                check(&sys, &oracle, &ctx(step));
            }
        } else {
            let line = rng.gen_range(0..footprint);
            let addr = line * 64;
            if rng.gen_bool(0.4) {
                sys.write(addr, token).unwrap();
                oracle.insert(line, token);
                token += 1;
            } else {
                let got = sys.read(addr).unwrap();
                assert_eq!(got, oracle.get(&line).copied().unwrap_or(0), "{}: read of {addr:#x}", ctx(step));
            }
        }
    }
    check(&sys, &oracle, &ctx(400));
}

#[test]
fn thousand_random_interleavings() {
    let table = RegionRemapTable::generate(8, 32, 2).unwrap();
    for case in 0..1000 {
        run_case(case, &table);
    }
}
