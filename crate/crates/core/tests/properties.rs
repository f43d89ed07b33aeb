use proptest::collection::vec;
use proptest::prelude::*;
use std::collections::BTreeMap;
use wavemark_core::container::{unchunk, ModelContainer};
use wavemark_core::marker::{bits_to_fragments, fragments_to_bits, hide_bits, mark_coefficient, read_bits, rescale, scale};
use wavemark_core::payload::{bit_error_rate, bits_to_bytes, bytes_to_bits, MAX_USER_SECRET};
use wavemark_core::{
    parse_and_check, plan_chunks, reshape_to_2d, shape_to_nd, wpt_forward, wpt_inverse, DType, LayerTensor, ModelDigest,
    ScalingParams, SecretPayload, SubbandGrid, PAYLOAD_BITS,
};

fn shapes() -> impl Strategy<Value = Vec<usize>> {
    prop_oneof![
        (1usize..64).prop_map(|a| vec![a]),
        (1usize..16, 1usize..16).prop_map(|(a, b)| vec![a, b]),
        (1usize..8, 1usize..8, 1usize..8).prop_map(|(a, b, c)| vec![a, b, c]),
        (1usize..5, 1usize..5, 1usize..6, 1usize..6).prop_map(|(a, b, c, d)| vec![a, b, c, d]),
    ]
}

fn chunk(len: usize) -> impl Strategy<Value = Vec<f64>> {
    vec(-10.0f64..10.0, len)
}

fn chunk_lengths() -> impl Strategy<Value = usize> {
    (1usize..=375).prop_map(|m| m * 32)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn reshape_round_trip(shape in shapes(), f32_ in any::<bool>()) {
        let n: usize = shape.iter().product();
        let dtype = if f32_ { DType::Float32 } else { DType::Float64 };
        let data: Vec<f64> = (0..n).map(|i| i as f64 * 0.25 - 3.0).collect();
        let layer = LayerTensor::new("l", shape.clone(), dtype, data.clone()).unwrap();
        let m = reshape_to_2d(&layer).unwrap();
        prop_assert_eq!(m.rows * m.cols, n);
        prop_assert_eq!(&m.data, &data);
        let back = shape_to_nd(m, "l", &shape, dtype).unwrap();
        prop_assert_eq!(back.data, data);
        prop_assert_eq!(back.shape, shape);
    }

    #[test]
    fn chunking_round_trip(n in 1usize..30_000, chunk_length in chunk_lengths()) {
        let data: Vec<f64> = (0..n).map(|i| (i as f64).cos()).collect();
        let layer = LayerTensor::new("l", vec![n], DType::Float64, data.clone()).unwrap();
        let (plan, chunks) = plan_chunks(&layer, chunk_length).unwrap();
        prop_assert_eq!(plan.chunk_count, n.div_ceil(chunk_length));
        prop_assert_eq!(plan.padded_tail, plan.chunk_count * chunk_length - n);
        prop_assert!(plan.padded_tail < chunk_length);
        prop_assert!(chunks.iter().all(|c| c.len() == chunk_length));
        prop_assert!(chunks.last().unwrap()[chunk_length - plan.padded_tail..].iter().all(|&v| v == 0.0));
        prop_assert_eq!(unchunk(&plan, &chunks), data);
    }

    #[test]
    fn wavelet_perfect_reconstruction(x in (1usize..=64).prop_flat_map(|m| chunk(m * 32))) {
        let back = wpt_inverse(&wpt_forward(&x, 5).unwrap()).unwrap();
        let err = x.iter().zip(&back).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        prop_assert!(err <= 1e-10, "{}", err);
    }

    #[test]
    fn wavelet_parseval(x in chunk(8192)) {
        let g = wpt_forward(&x, 5).unwrap();
        let ex: f64 = x.iter().map(|v| v * v).sum();
        let ec: f64 = g.coefficients().iter().map(|v| v * v).sum();
        prop_assert!(((ex - ec) / ex).abs() <= 1e-10);
    }

    #[test]
    fn wavelet_linearity(x in chunk(1024), y in chunk(1024), a in -5.0f64..5.0, b in -5.0f64..5.0) {
        let mix: Vec<f64> = x.iter().zip(&y).map(|(p, q)| a * p + b * q).collect();
        let (gx, gy, gm) = (wpt_forward(&x, 5).unwrap(), wpt_forward(&y, 5).unwrap(), wpt_forward(&mix, 5).unwrap());
        for ((cx, cy), cm) in gx.coefficients().iter().zip(gy.coefficients()).zip(gm.coefficients()) {
            prop_assert!((a * cx + b * cy - cm).abs() <= 1e-10);
        }
    }

    #[test]
    fn detail_change_bounded_by_epsilon(x in chunk(8192), band in 17usize..=32, k in 0usize..256, eps in -1.0f64..1.0) {
        let mut g = wpt_forward(&x, 5).unwrap();
        let base = wpt_inverse(&g).unwrap();
        g.set(band, k, g.get(band, k) + eps);
        let moved = wpt_inverse(&g).unwrap();
        let max = base.iter().zip(&moved).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        prop_assert!(max <= eps.abs() + 1e-12);
    }

    #[test]
    fn payload_round_trip(layer in 0usize..65_536, secret in vec(any::<u8>(), 0..=MAX_USER_SECRET), digest in any::<[u8; 32]>()) {
        let p = SecretPayload::new(layer, &secret, ModelDigest(digest)).unwrap();
        let bits = p.to_bits();
        prop_assert_eq!(bits.len(), PAYLOAD_BITS);
        prop_assert_eq!(bits_to_bytes(&bits), p.to_bytes().to_vec());
        prop_assert_eq!(bytes_to_bits(&p.to_bytes()), bits.clone());
        let parsed = parse_and_check(&bits).unwrap();
        prop_assert!(parsed.hash_match);
        prop_assert_eq!(parsed.model_digest, ModelDigest(digest));
        prop_assert_eq!(&parsed.secret_bytes[2..], &secret[..]);
        prop_assert_eq!(p.to_bits(), SecretPayload::new(layer, &secret, ModelDigest(digest)).unwrap().to_bits());
    }

    #[test]
    fn payload_single_flip_detected(secret in vec(any::<u8>(), 0..64), flip in 0usize..PAYLOAD_BITS) {
        let mut bits = SecretPayload::new(1, &secret, ModelDigest([3; 32])).unwrap().to_bits();
        bits[flip] ^= 1;
        prop_assert!(!parse_and_check(&bits).unwrap().hash_match);
    }

    #[test]
    fn scale_round_trip(c in -15.99f64..1000.0) {
        let p = ScalingParams::default();
        let q = scale(c, &p).unwrap();
        prop_assert!((rescale(q, &p) - c).abs() <= 0.5 / p.rho + 1e-9);
    }

    #[test]
    fn hide_then_read(q in 1u64..(1 << 50), level in 1u32..=4, bits in any::<u64>()) {
        let bits = bits & ((1 << level) - 1);
        let h = hide_bits(q, bits, level);
        prop_assert_eq!(read_bits(h, level), bits);
        prop_assert_eq!(h >> level, q >> level);
        prop_assert_eq!(hide_bits(q, read_bits(q, level), level), q);
    }

    #[test]
    fn marked_coefficient_reads_back_within_half_step(c in -15.0f64..50.0, level in 1u32..=4, bits in any::<u64>()) {
        let params = ScalingParams::with_level(level);
        let bits = bits & ((1 << level) - 1);
        let m = mark_coefficient(c, bits, &params).unwrap();
        prop_assert_eq!(read_bits(scale(m, &params).unwrap(), level), bits);
        prop_assert!((m - c).abs() <= f64::from(1u32 << (level - 1)) / params.rho + 1e-9);
    }

    #[test]
    fn fragments_round_trip(bits in vec(0u8..=1, 1..500), level in 1u32..=4) {
        let frags = bits_to_fragments(&bits, level);
        prop_assert_eq!(frags.len(), bits.len().div_ceil(level as usize));
        prop_assert!(frags.iter().all(|&f| f < (1 << level)));
        prop_assert_eq!(fragments_to_bits(&frags, level, bits.len()), bits.clone());
        prop_assert_eq!(bit_error_rate(&bits, &bits), 0.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn container_save_load_identity(
        layers in vec((shapes(), any::<bool>(), any::<u64>()), 0..5),
        classes in vec("[a-z]{1,8}", 0..6),
        meta in proptest::collection::btree_map("[a-z.]{1,10}", ".{0,20}", 0..4),
    ) {
        let layers: Vec<LayerTensor> = layers
            .into_iter()
            .enumerate()
            .map(|(i, (shape, f32_, s))| {
                let n: usize = shape.iter().product();
                let data = (0..n).map(|j| ((j as u64 ^ s) % 1000) as f64 * 1e-3 - 0.5).collect();
                let dtype = if f32_ { DType::Float32 } else { DType::Float64 };
                LayerTensor::new(format!("l{i}"), shape, dtype, data).unwrap()
            })
            .collect();
        let mut c = ModelContainer::new(layers, classes).unwrap();
        c.metadata = meta.into_iter().collect::<BTreeMap<_, _>>();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.wmk");
        wavemark_core::save_container(&c, &path).unwrap();
        prop_assert_eq!(wavemark_core::load_container(&path).unwrap(), c.clone());
        prop_assert_eq!(ModelContainer::from_bytes(&c.to_bytes().unwrap()).unwrap(), c);
    }
}

#[test]
fn zero_grid_inverts_to_zero() {
    let g = SubbandGrid::from_subbands(vec![vec![0.0; 8]; 32]).unwrap();
    assert!(wpt_inverse(&g).unwrap().iter().all(|&v| v == 0.0));
}
