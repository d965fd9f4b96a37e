use proptest::prelude::*;
use valdesign::projectile::{Altitude, MaxAltitude};
use valdesign::validation::area_metric;
use valdesign::{
    influence_matrix, normalized_distance, spectral_distance, Distribution, EmpiricalCdf,
    InfluenceMatrix, RngSpec,
};

fn symmetric(n: usize, vals: &[f64]) -> InfluenceMatrix {
    let mut m = nalgebra::DMatrix::zeros(n, n);
    let mut k = 0;
    for i in 0..n {
        for j in i..n {
            m[(i, j)] = vals[k];
            m[(j, i)] = vals[k];
            k += 1;
        }
    }
    InfluenceMatrix::new(m, (0..n).map(|i| format!("p{i}")).collect()).unwrap()
}

fn theta() -> Distribution {
    Distribution::product(vec![
        Distribution::normal(9.81, 0.01).unwrap(),
        Distribution::normal(-11.5, 0.5).unwrap(),
    ])
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn spectral_distance_is_a_metric(
        a in prop::collection::vec(-5.0f64..5.0, 10),
        b in prop::collection::vec(-5.0f64..5.0, 10),
    ) {
        let (ma, mb) = (symmetric(4, &a), symmetric(4, &b));
        let dab = spectral_distance(&ma, &mb).unwrap();
        let dba = spectral_distance(&mb, &ma).unwrap();
        prop_assert!(dab >= 0.0);
        prop_assert!((dab - dba).abs() <= 1e-12 * (1.0 + dab));
        prop_assert!(spectral_distance(&ma, &ma).unwrap() < 1e-12);
    }

    #[test]
    fn influence_matrices_are_psd(
        m in 1.0f64..5.0, l in 0.05f64..0.1, u0 in 0.0f64..2.0, v0 in 10.0f64..120.0,
        seed in 0u64..1000,
    ) {
        let h = MaxAltitude::default();
        let mat = influence_matrix(&h, &[m, l, u0, v0], &[], &theta(), 20, RngSpec::seeded(seed)).unwrap();
        let e = valdesign::eig_sym(&mat).unwrap();
        let top = e.eigenvalues.iter().cloned().fold(0.0, f64::max);
        prop_assert!(e.eigenvalues.iter().all(|v| *v >= -1e-10 * top));
        prop_assert!((mat.entries() - mat.entries().transpose()).amax() <= 1e-12 * top.max(1e-300));
    }

    #[test]
    fn normalized_distance_is_scale_free(
        t in 0.5f64..15.0, c in 0.1f64..10.0, seed in 0u64..100,
    ) {
        let x = [1.0, 0.1, 0.5, 80.0];
        let th = theta();
        let q = influence_matrix(&MaxAltitude::default(), &[0.05, 0.01, 1.0, 100.0], &[], &th, 10, RngSpec::seeded(seed)).unwrap();
        let o = influence_matrix(&Altitude::default(), &x, &[t], &th, 10, RngSpec::seeded(seed)).unwrap();
        let scaled = InfluenceMatrix::new(o.entries() * c, o.labels().to_vec()).unwrap();
        let d1 = normalized_distance(&o, &q).unwrap();
        let d2 = normalized_distance(&scaled, &q).unwrap();
        prop_assert!((d1 - d2).abs() < 1e-9 * (1.0 + d1));
    }

    #[test]
    fn ecdf_is_monotone_and_bounded(
        s in prop::collection::vec(-100.0f64..100.0, 1..60),
        probes in prop::collection::vec(-150.0f64..150.0, 20),
    ) {
        let f = EmpiricalCdf::new(&s).unwrap();
        let mut p = probes.clone();
        p.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let vals: Vec<f64> = p.iter().map(|v| f.eval(*v)).collect();
        prop_assert!(vals.windows(2).all(|w| w[0] <= w[1]));
        prop_assert!(vals.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn area_metric_is_symmetric_and_shift_exact(
        s in prop::collection::vec(-10.0f64..10.0, 1..40), shift in -5.0f64..5.0,
    ) {
        let a = EmpiricalCdf::new(&s).unwrap();
        let shifted: Vec<f64> = s.iter().map(|v| v + shift).collect();
        let b = EmpiricalCdf::new(&shifted).unwrap();
        let ab = area_metric(&a, &b);
        prop_assert!((ab - area_metric(&b, &a)).abs() < 1e-12);
        prop_assert!((ab - shift.abs()).abs() < 1e-9);
    }

    #[test]
    fn streams_are_reproducible(seed in any::<u64>(), child in 0u64..1000) {
        use rand::Rng;
        let a: u64 = RngSpec::seeded(seed).child(child).rng().random();
        let b: u64 = RngSpec::seeded(seed).child(child).rng().random();
        let c: u64 = RngSpec::seeded(seed).child(child + 1).rng().random();
        prop_assert_eq!(a, b);
        prop_assert_ne!(a, c);
    }
}
