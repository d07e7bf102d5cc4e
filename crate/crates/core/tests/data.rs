use cfbound::data::{parse_csv, population_mean, to_csv};
use cfbound::{
    generate, read_csv, wasserstein1, write_csv, Arm, Dataset, DatasetSpec, DatasetTag,
    EmpiricalDist, Error,
};
use proptest::prelude::*;

fn dist(v: &[f64]) -> EmpiricalDist {
    EmpiricalDist::new(v.to_vec()).unwrap()
}

fn moments(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (
        m,
        v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0),
    )
}

#[test]
fn dataset1_arms_are_standard_normal() {
    let d = generate(&DatasetSpec {
        tag: DatasetTag::Dataset1,
        n_per_arm: 100_000,
        seed: 1,
    })
    .unwrap();
    for a in Arm::BOTH {
        let (m, v) = moments(&d.outcomes(a));
        assert!(
            m.abs() <= 0.02 && (v - 1.0).abs() <= 0.05,
            "arm {a}: mean {m}, var {v}"
        );
    }
}

#[test]
fn dataset2_arm_means_match_the_mixtures() {
    let d = generate(&DatasetSpec {
        tag: DatasetTag::Dataset2,
        n_per_arm: 100_000,
        seed: 2,
    })
    .unwrap();
    // 0.7·(−0.5) + 0.3·1.5 and 0.3·(−2.5) + 0.4·0.5 + 0.3·2.0
    for (a, expected) in [(Arm::Control, 0.10), (Arm::Treated, 0.05)] {
        let (m, _) = moments(&d.outcomes(a));
        assert!((m - expected).abs() <= 0.03, "arm {a}: {m}");
        assert!((population_mean(DatasetTag::Dataset2, a) - expected).abs() < 1e-12);
    }
}

#[test]
fn dataset2_control_variance_matches_the_mixture() {
    // E[Y²] − E[Y]² for 0.7 N(−0.5, 1.5²) + 0.3 N(1.5, 0.5²)
    let second = 0.7 * (1.5f64.powi(2) + 0.25) + 0.3 * (0.25 + 2.25);
    let var = second - 0.1f64.powi(2);
    let d = generate(&DatasetSpec {
        tag: DatasetTag::Dataset2,
        n_per_arm: 100_000,
        seed: 3,
    })
    .unwrap();
    let (_, v) = moments(&d.outcomes(Arm::Control));
    assert!((v - var).abs() <= 0.05, "{v} vs {var}");
}

#[test]
fn generation_is_reproducible_and_sized() {
    let spec = DatasetSpec {
        tag: DatasetTag::Dataset2,
        n_per_arm: 50,
        seed: 9,
    };
    let d = generate(&spec).unwrap();
    assert_eq!(d, generate(&spec).unwrap());
    assert_eq!(
        (d.len(), d.count(Arm::Control), d.count(Arm::Treated)),
        (100, 50, 50)
    );
    assert_ne!(d, generate(&DatasetSpec { seed: 10, ..spec }).unwrap());
    assert!(matches!(
        generate(&DatasetSpec {
            n_per_arm: 1,
            ..spec
        }),
        Err(Error::Precondition(_))
    ));
}

#[test]
fn ecdf_examples() {
    let d = dist(&[3.0, 1.0, 4.0, 2.0]);
    assert_eq!(d.ecdf(0.5), 0.0);
    assert_eq!(d.ecdf(4.0), 1.0);
    assert_eq!(d.ecdf(2.5), 0.5);
    assert_eq!((d.min(), d.max()), (1.0, 4.0));
}

#[test]
fn quantile_examples() {
    let d = dist(&[1.0, 2.0, 3.0, 4.0]);
    assert_eq!(d.quantile(0.5), 2.0);
    assert_eq!(d.quantile(1.0), 4.0);
    assert_eq!(d.quantile(0.0), 1.0);
    assert_eq!(d.quantile(0.51), 3.0);
}

#[test]
fn empty_or_nonfinite_samples_are_rejected() {
    assert!(matches!(
        EmpiricalDist::new(vec![]),
        Err(Error::Precondition(_))
    ));
    assert!(matches!(
        EmpiricalDist::new(vec![1.0, f64::NAN]),
        Err(Error::Precondition(_))
    ));
    assert!(matches!(
        Dataset::new(vec![(Arm::Control, f64::INFINITY)]),
        Err(Error::Precondition(_))
    ));
}

#[test]
fn wasserstein_examples() {
    let d = dist(&[0.3, -1.2, 2.5, 0.0]);
    assert_eq!(wasserstein1(&d, &d), 0.0);
    let shifted = dist(&d.values().iter().map(|v| v - 0.75).collect::<Vec<_>>());
    assert!((wasserstein1(&d, &shifted) - 0.75).abs() <= 1e-12);
    assert!((wasserstein1(&dist(&[0.0, 1.0]), &dist(&[0.0, 2.0])) - 0.5).abs() <= 1e-15);
}

#[test]
fn wasserstein_of_unequal_sizes_integrates_the_quantile_gap() {
    // quantiles: {0,1} steps at 1/2; {0,3,6} steps at 1/3, 2/3
    // ∫ = (1/3)·0 + (1/6)·3 + (1/6)·2 + (1/3)·5
    let w = wasserstein1(&dist(&[0.0, 1.0]), &dist(&[0.0, 3.0, 6.0]));
    assert!((w - (0.5 + 2.0 / 6.0 + 5.0 / 3.0)).abs() <= 1e-12, "{w}");
}

#[test]
fn csv_examples() {
    let d = parse_csv("a,y\n0,1.5\n1,-0.2").unwrap();
    assert_eq!(d.records, vec![(Arm::Control, 1.5), (Arm::Treated, -0.2)]);
    assert!(matches!(
        parse_csv("a,y\n2,0.0"),
        Err(Error::UnknownArm { line: 2, .. })
    ));
    assert!(matches!(
        parse_csv("a,y\n0,1.0\n1"),
        Err(Error::MalformedLine { line: 3, .. })
    ));
    assert!(matches!(
        parse_csv("a,y\n0,abc"),
        Err(Error::MalformedLine { line: 2, .. })
    ));
    assert!(matches!(
        parse_csv("x,y\n0,1"),
        Err(Error::MalformedLine { line: 1, .. })
    ));
    assert!(matches!(
        parse_csv(""),
        Err(Error::MalformedLine { line: 1, .. })
    ));
}

#[test]
fn csv_roundtrip_on_disk_is_exact() {
    let d = generate(&DatasetSpec {
        tag: DatasetTag::Dataset1,
        n_per_arm: 100,
        seed: 4,
    })
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.csv");
    write_csv(&d, &path).unwrap();
    assert_eq!(read_csv(&path).unwrap(), d);
    assert!(matches!(
        read_csv(dir.path().join("missing.csv")),
        Err(Error::Io(_))
    ));
}

proptest! {
    #[test]
    fn ecdf_is_a_nondecreasing_step(v in prop::collection::vec(-5.0f64..5.0, 1..40), probes in prop::collection::vec(-6.0f64..6.0, 2..30)) {
        let d = dist(&v);
        let mut p = probes;
        p.sort_by(f64::total_cmp);
        for w in p.windows(2) {
            prop_assert!(d.ecdf(w[0]) <= d.ecdf(w[1]));
        }
        // right-continuity: the value at a sample point already includes it
        for &x in d.values() {
            prop_assert_eq!(d.ecdf(x), d.ecdf(x + 1e-12_f64.max(x.abs() * 1e-15)));
            prop_assert!(d.quantile(d.ecdf(x)) <= x);
        }
    }

    #[test]
    fn wasserstein_is_a_metric(
        a in prop::collection::vec(-5.0f64..5.0, 1..20),
        b in prop::collection::vec(-5.0f64..5.0, 1..20),
        c in prop::collection::vec(-5.0f64..5.0, 1..20),
    ) {
        let (a, b, c) = (dist(&a), dist(&b), dist(&c));
        let ab = wasserstein1(&a, &b);
        prop_assert!(ab >= 0.0);
        prop_assert!((ab - wasserstein1(&b, &a)).abs() <= 1e-12);
        prop_assert!(ab <= wasserstein1(&a, &c) + wasserstein1(&c, &b) + 1e-12);
    }

    #[test]
    fn csv_text_roundtrip(v in prop::collection::vec((any::<bool>(), -1e6f64..1e6), 0..30)) {
        let d = Dataset::new(v.into_iter().map(|(t, y)| (if t { Arm::Treated } else { Arm::Control }, y)).collect()).unwrap();
        prop_assert_eq!(parse_csv(&to_csv(&d)).unwrap(), d);
    }
}
