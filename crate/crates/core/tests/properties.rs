use proptest::prelude::*;
use qfreq::blowup::{average_free_part, average_part};
use qfreq::curve::homogeneous_branches;
use qfreq::frequency::{smoothed_i, Cutoff};
use qfreq::qfile::{read_qfunction, write_qfunction};
use qfreq::qvalue::{average_free, eta, metric_g, metric_g_exhaustive};
use qfreq::synthetic::random_qfunction;
use qfreq::{PolarGrid, QFunction64, QPoint64};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn qpoint(q: usize, n: usize) -> impl Strategy<Value = QPoint64> {
    prop::collection::vec(-10.0f64..10.0, q * n).prop_map(move |v| QPoint64::from_flat(q, n, v).unwrap())
}

fn triple() -> impl Strategy<Value = (QPoint64, QPoint64, QPoint64)> {
    (1usize..=5, 1usize..=3).prop_flat_map(|(q, n)| (qpoint(q, n), qpoint(q, n), qpoint(q, n)))
}

proptest! {
    #[test]
    fn metric_axioms((a, b, c) in triple()) {
        let ab = metric_g(&a, &b).unwrap();
        prop_assert_eq!(metric_g(&a, &a).unwrap(), 0.0);
        prop_assert!(ab >= 0.0);
        prop_assert!((ab - metric_g(&b, &a).unwrap()).abs() <= 1e-12 * (1.0 + ab));
        let ac = metric_g(&a, &c).unwrap();
        let cb = metric_g(&c, &b).unwrap();
        prop_assert!(ab <= ac + cb + 1e-12 * (1.0 + ab));
    }

    #[test]
    fn metric_matches_exhaustive_search((a, b, _) in triple()) {
        prop_assert_eq!(metric_g(&a, &b).unwrap(), metric_g_exhaustive(&a, &b).unwrap());
    }

    #[test]
    fn metric_ignores_labels((a, b, _) in triple(), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        let mut perm: Vec<usize> = (0..a.q()).collect();
        perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let d = metric_g(&a, &b).unwrap();
        prop_assert!((metric_g(&a.permuted(&perm), &b).unwrap() - d).abs() <= 1e-12 * (1.0 + d));
    }

    #[test]
    fn average_free_part_has_zero_mean((a, _, _) in triple()) {
        let free = average_free(&a);
        prop_assert!(eta(&free).iter().all(|m| m.abs() < 1e-12));
        // |a|^2 = |free|^2 + Q |eta|^2
        let e2: f64 = eta(&a).iter().map(|m| m * m).sum();
        let lhs = a.norm_sq();
        prop_assert!((lhs - free.norm_sq() - a.q() as f64 * e2).abs() < 1e-10 * (1.0 + lhs));
    }

    #[test]
    fn scaling_is_homogeneous((a, b, _) in triple(), s in 0.01f64..100.0) {
        let d = metric_g(&a, &b).unwrap();
        prop_assert!((metric_g(&a.scaled(s), &b.scaled(s)).unwrap() - s * d).abs() <= 1e-10 * (1.0 + s * d));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn homogeneous_frequency_is_the_exponent((num, den) in (1usize..5).prop_flat_map(|den| (1..=3 * den, Just(den)))) {
        let alpha = num as f64 / den as f64;
        let f: QFunction64 = homogeneous_branches(alpha, PolarGrid::new(1.0, 8, 6, 256).unwrap()).unwrap();
        for r in [0.25, 0.5, 1.0] {
            let i = smoothed_i(&f, [0.0, 0.0], r, Cutoff::Linear).unwrap();
            prop_assert!((i - alpha).abs() < 2e-3, "alpha {} r {} I {}", alpha, r, i);
        }
    }

    #[test]
    fn qfunction_files_round_trip(seed in any::<u64>(), q in 2usize..5, branched in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f: QFunction64 = random_qfunction(&mut rng, PolarGrid::new(1.0, 4, 2, 64).unwrap(), q, 2, branched).unwrap();
        let mut buf = Vec::new();
        write_qfunction(&f, &mut buf).unwrap();
        let g: QFunction64 = read_qfunction(&buf[..]).unwrap();
        prop_assert_eq!(f.values(), g.values());
        prop_assert_eq!(f.monodromy(), g.monodromy());
    }

    #[test]
    fn average_split_is_exact_pointwise(seed in any::<u64>(), q in 2usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f: QFunction64 = random_qfunction(&mut rng, PolarGrid::new(1.0, 4, 2, 64).unwrap(), q, 2, true).unwrap();
        let (free, avg) = (average_free_part(&f), average_part(&f));
        for ((s, v), m) in f.values().chunks(q * 2).zip(free.values().chunks(q * 2)).zip(avg.values().chunks(2)) {
            for i in 0..q {
                for c in 0..2 {
                    prop_assert!((s[2 * i + c] - v[2 * i + c] - m[c]).abs() < 1e-12);
                }
            }
        }
    }
}
