use proptest::prelude::*;
use unagan_core::container::Container;
use unagan_core::evalmetrics::{jsd, report_from_counts, z_crit};
use unagan_core::mel::{decode_mel, denormalize, encode_mel, normalize, MelSpectrogram, NormStats};
use unagan_core::training::{update_tau, EquilibriumState};
use unagan_core::Tensor;

fn distribution(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0u32..1000, n).prop_filter_map("non-zero mass", |w| {
        let s: u32 = w.iter().sum();
        (s > 0).then(|| w.iter().map(|&v| v as f64 / s as f64).collect())
    })
}

proptest! {
    #[test]
    fn tau_stays_in_unit_interval(
        tau in 0.0f64..=1.0,
        l_x in 0.0f64..1e6,
        l_gz in 0.0f64..1e6,
        beta in 1e-6f64..10.0,
        gamma in 1e-3f64..=1.0,
    ) {
        let s = update_tau(EquilibriumState { tau, step: 0 }, l_x, l_gz, beta, gamma);
        prop_assert!((0.0..=1.0).contains(&s.tau));
        prop_assert_eq!(s.tau, (tau + beta * (gamma * l_x - l_gz)).clamp(0.0, 1.0));
        prop_assert_eq!(s.step, 1);
    }

    #[test]
    fn jsd_is_symmetric_and_bounded((p, q) in (1usize..12).prop_flat_map(|n| (distribution(n), distribution(n)))) {
        let a = jsd(&p, &q).unwrap();
        prop_assert_eq!(a, jsd(&q, &p).unwrap());
        prop_assert!((0.0..=1.0).contains(&a));
        prop_assert_eq!(jsd(&p, &p).unwrap(), 0.0);
    }

    #[test]
    fn ndb_is_monotone_in_alpha(
        (train, gen) in (2usize..10).prop_flat_map(|n| (
            prop::collection::vec(1u64..300, n),
            prop::collection::vec(0u64..300, n),
        )),
        a1 in 0.001f64..0.5,
        a2 in 0.001f64..0.5,
    ) {
        prop_assume!(gen.iter().sum::<u64>() > 0);
        let (lo, hi) = if a1 < a2 { (a1, a2) } else { (a2, a1) };
        let strict = report_from_counts(&train, &gen, lo, z_crit(lo).unwrap()).unwrap();
        let loose = report_from_counts(&train, &gen, hi, z_crit(hi).unwrap()).unwrap();
        prop_assert!(strict.ndb <= loose.ndb);
    }

    #[test]
    fn bin_permutation_leaves_summary_unchanged(
        (train, gen, rot) in (2usize..10).prop_flat_map(|n| (
            prop::collection::vec(1u64..300, n),
            prop::collection::vec(1u64..300, n),
            0..n,
        )),
    ) {
        let zc = z_crit(0.05).unwrap();
        let a = report_from_counts(&train, &gen, 0.05, zc).unwrap();
        let mut t2 = train.clone();
        let mut g2 = gen.clone();
        t2.rotate_left(rot);
        g2.rotate_left(rot);
        let b = report_from_counts(&t2, &g2, 0.05, zc).unwrap();
        prop_assert_eq!(a.ndb, b.ndb);
        prop_assert!((a.jsd - b.jsd).abs() < 1e-12);
        let mut rotated = a.per_bin.clone();
        rotated.rotate_left(rot);
        prop_assert_eq!(rotated, b.per_bin);
    }

    #[test]
    fn normalization_round_trip(
        data in prop::collection::vec(-20.0f32..5.0, 12),
        mean in prop::collection::vec(-10.0f64..2.0, 3),
        std in prop::collection::vec(0.01f64..5.0, 3),
    ) {
        let mel = MelSpectrogram::new(3, 4, data).unwrap();
        let stats = NormStats { mean, std };
        let back = denormalize(&normalize(&mel, &stats).unwrap(), &stats).unwrap();
        for (a, b) in mel.data().iter().zip(back.data()) {
            prop_assert!((a - b).abs() <= 1e-6 * a.abs().max(1.0), "{} vs {}", a, b);
        }
    }

    #[test]
    fn mel_files_round_trip_bitwise(k in 1usize..6, t in 1usize..9, seed in any::<u64>()) {
        let data: Vec<f32> = (0..k * t).map(|i| f32::from_bits((seed as u32).wrapping_mul(2_654_435_761).wrapping_add(i as u32) & 0x7f7f_ffff)).collect();
        let mel = MelSpectrogram::new(k, t, data).unwrap();
        let bytes = encode_mel(&mel);
        let back = decode_mel(&bytes).unwrap();
        prop_assert_eq!(encode_mel(&back), bytes);
    }

    #[test]
    fn containers_round_trip_bitwise(
        dims in prop::collection::vec(1usize..4, 0..3),
        meta in "[ -~]{0,40}",
        version in any::<u32>(),
    ) {
        let n: usize = dims.iter().product();
        let t = Tensor::from_vec(&dims, (0..n).map(|i| i as f32 * 0.5 - 1.0).collect()).unwrap();
        let c = Container { magic: *b"TEST", version, digest: [3; 32], meta, tensors: vec![("t".into(), t)] };
        let bytes = c.encode();
        let back = Container::decode(&bytes, b"TEST").unwrap();
        prop_assert_eq!(&back, &c);
        prop_assert_eq!(back.encode(), bytes);
    }
}
