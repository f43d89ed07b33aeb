use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};
use std::collections::HashSet;
use wavemark_core::keying::{keyed_masks, keyed_selection};
use wavemark_core::{derive_nu, schedule_for_layer, ChunkPlan, DetailSpace, Error};

fn counting_seed() -> [u8; 32] {
    std::array::from_fn(|i| i as u8)
}

// Produced by a separate hashlib implementation of the keystream.
const GOLDEN_LAYER0: [usize; 16] = [
    241665, 23304, 535619, 81571, 196532, 38977, 370431, 437881, 69870, 185665, 474540, 580711, 69368, 334163, 174879,
    34183,
];
const GOLDEN_LAYER3: [usize; 16] = [
    325386, 390458, 273665, 6406, 462059, 256499, 219758, 504677, 99973, 333481, 394362, 199676, 28230, 554814, 401950,
    546982,
];

#[test]
fn golden_first_positions() {
    let key = derive_nu(&counting_seed()).unwrap();
    assert_eq!(key.nu()[0], 0x70f4003d52b6eb03);
    assert_eq!(key.nu()[255], 0xc60a928f830347b0);
    // detail space of a 4608×256 layer cut into 8192-sample chunks
    let space = DetailSpace::new(&ChunkPlan::new(4608 * 256, 8192).unwrap());
    assert_eq!(space.size(), 589_824);
    assert_eq!(keyed_selection(&key, 0, space.size(), 16).unwrap(), GOLDEN_LAYER0);
    assert_eq!(keyed_selection(&key, 3, space.size(), 16).unwrap(), GOLDEN_LAYER3);
    assert_eq!(
        keyed_masks(&key, 0, 6),
        [0x7191262fc4c60ae5, 0xa77a3f1bba2c7eb7, 0xace1ad9a9019e2d0, 0x448efabb1a42aa86, 0xc85eee929266fb79, 0x5ce144fa072911c9]
    );
    let sched = schedule_for_layer(&key, 0, &space, 16).unwrap();
    assert_eq!(sched.masks, keyed_masks(&key, 0, 16));
    assert_eq!(sched.positions[0], space.position(GOLDEN_LAYER0[0]));
}

#[test]
fn one_bit_seed_change_rewrites_nu() {
    let mut rng = ChaCha20Rng::seed_from_u64(11);
    for _ in 0..100 {
        let a: [u8; 32] = rng.random();
        let mut b = a;
        let bit = rng.random_range(0..256);
        b[bit / 8] ^= 1 << (bit % 8);
        let (ka, kb) = (derive_nu(&a).unwrap(), derive_nu(&b).unwrap());
        let differ = ka.nu().iter().zip(kb.nu()).filter(|(x, y)| x != y).count();
        assert!(differ >= 250, "{differ}");
    }
}

#[test]
fn bad_seed_length() {
    assert!(matches!(derive_nu(&[0u8; 31]), Err(Error::BadSeedLength(31))));
    assert!(matches!(derive_nu(&[0u8; 33]), Err(Error::BadSeedLength(33))));
}

#[test]
fn positions_unbiased_across_seeds() {
    const SPACE: usize = 4096;
    const PICKS: usize = 64;
    const BINS: usize = 64;
    let mut rng = ChaCha20Rng::seed_from_u64(2024);
    let mut counts = [0u64; BINS];
    for _ in 0..1000 {
        let key = derive_nu(&rng.random::<[u8; 32]>()).unwrap();
        for p in keyed_selection(&key, 0, SPACE, PICKS).unwrap() {
            counts[p * BINS / SPACE] += 1;
        }
    }
    let expected = (1000 * PICKS / BINS) as f64;
    let stat: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    let df = (BINS - 1) as f64;
    let limit = df + 3.0 * (2.0 * df).sqrt();
    let p = 1.0 - ChiSquared::new(df).unwrap().cdf(stat);
    assert!(stat <= limit, "chi-square {stat:.1} > {limit:.1} (p = {p:.4})");
}

#[test]
fn first_draw_uniform_across_seeds() {
    const BINS: usize = 16;
    let mut rng = ChaCha20Rng::seed_from_u64(77);
    let mut counts = [0u64; BINS];
    for _ in 0..1000 {
        let key = derive_nu(&rng.random::<[u8; 32]>()).unwrap();
        let first = keyed_selection(&key, 5, 4096, 1).unwrap()[0];
        counts[first * BINS / 4096] += 1;
    }
    let expected = 1000.0 / BINS as f64;
    let stat: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    let df = (BINS - 1) as f64;
    assert!(stat <= df + 3.0 * (2.0 * df).sqrt(), "{stat}");
}

#[test]
fn exhaustive_selection_is_a_permutation() {
    let key = derive_nu(&counting_seed()).unwrap();
    let mut all = keyed_selection(&key, 0, 4096, 4096).unwrap();
    all.sort_unstable();
    assert_eq!(all, (0..4096).collect::<Vec<_>>());
    assert!(matches!(
        keyed_selection(&key, 0, 4096, 4097),
        Err(Error::InsufficientCapacity { needed: 4097, available: 4096 })
    ));
}

#[test]
fn layers_get_different_schedules() {
    let key = derive_nu(&counting_seed()).unwrap();
    let space = DetailSpace::new(&ChunkPlan::new(8192 * 4, 8192).unwrap());
    let a = schedule_for_layer(&key, 0, &space, 4096).unwrap();
    let b = schedule_for_layer(&key, 1, &space, 4096).unwrap();
    assert_ne!(a.positions, b.positions);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn selection_distinct_and_in_range(seed in any::<[u8; 32]>(), layer in 0usize..300, space in 1usize..20_000, frac in 0.0f64..=1.0) {
        let key = derive_nu(&seed).unwrap();
        let count = ((space as f64 * frac) as usize).min(space);
        let picks = keyed_selection(&key, layer, space, count).unwrap();
        prop_assert_eq!(picks.len(), count);
        prop_assert!(picks.iter().all(|&p| p < space));
        prop_assert_eq!(picks.iter().collect::<HashSet<_>>().len(), count);
        prop_assert_eq!(&picks, &keyed_selection(&key, layer, space, count).unwrap());
    }

    #[test]
    fn prefix_stable(seed in any::<[u8; 32]>(), count in 1usize..500) {
        let key = derive_nu(&seed).unwrap();
        let long = keyed_selection(&key, 2, 10_000, count + 100).unwrap();
        prop_assert_eq!(&long[..count], &keyed_selection(&key, 2, 10_000, count).unwrap()[..]);
    }

    #[test]
    fn schedule_positions_lie_in_detail_bands(seed in any::<[u8; 32]>(), n in 8192usize..40_000) {
        let key = derive_nu(&seed).unwrap();
        let plan = ChunkPlan::new(n, 8192).unwrap();
        let space = DetailSpace::new(&plan);
        let count = space.size().min(4096);
        let sched = schedule_for_layer(&key, 0, &space, count).unwrap();
        let mut seen = HashSet::new();
        for p in &sched.positions {
            prop_assert!((17..=32).contains(&p.subband));
            prop_assert!(p.chunk < plan.chunk_count);
            prop_assert!(p.coeff < 256);
            // atoms in a padded tail stay clear of the padding
            if plan.padded_tail > 0 && p.chunk == plan.chunk_count - 1 {
                prop_assert!(32 * p.coeff + 94 <= plan.valid_len(p.chunk));
            }
            prop_assert!(seen.insert((p.chunk, p.subband, p.coeff)));
        }
    }
}
