use cfbound::scm::{m2_implicit, Fixture, Triangular};
use cfbound::{AnalyticScmId, Arm, EmpiricalDist, Error, Monotone1D, Scm2D};
use proptest::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};

/// CDF of the symmetric triangular law on `[c − 1, c + 1]`.
fn tri_cdf(c: f64, y: f64) -> f64 {
    let t = y - c;
    if t <= -1.0 {
        0.0
    } else if t <= 0.0 {
        0.5 * (t + 1.0).powi(2)
    } else if t < 1.0 {
        1.0 - 0.5 * (1.0 - t).powi(2)
    } else {
        1.0
    }
}

fn sup_distance(sample: Vec<f64>, cdf: impl Fn(f64) -> f64) -> f64 {
    let mut v = sample;
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    v.iter()
        .enumerate()
        .map(|(i, &y)| {
            let f = cdf(y);
            (f - i as f64 / n).abs().max((f - (i + 1) as f64 / n).abs())
        })
        .fold(0.0, f64::max)
}

fn central_gradient(scm: &Scm2D, a: Arm, u: [f64; 2], h: f64) -> [f64; 2] {
    let f = |p: [f64; 2]| scm.eval_f(a, p).unwrap();
    [
        (f([u[0] + h, u[1]]) - f([u[0] - h, u[1]])) / (2.0 * h),
        (f([u[0], u[1] + h]) - f([u[0], u[1] - h])) / (2.0 * h),
    ]
}

#[test]
fn m1_values_at_the_centre() {
    let m1 = Scm2D::m1();
    assert_eq!(m1.eval_f(Arm::Control, [0.5, 0.5]).unwrap(), 0.0);
    assert_eq!(m1.eval_f(Arm::Treated, [0.5, 0.5]).unwrap(), 1.0);
}

#[test]
fn box_muller_vanishes_when_the_radius_does() {
    let bm = Scm2D::box_muller();
    for a in Arm::BOTH {
        assert_eq!(bm.eval_f(a, [1.0, 0.3]).unwrap(), 0.0);
    }
}

#[test]
fn every_fixture_is_finite_on_the_closed_square() {
    let corners = [
        [0.0, 0.0],
        [0.0, 1.0],
        [1.0, 0.0],
        [1.0, 1.0],
        [0.5, 0.0],
        [0.0, 0.5],
    ];
    for scm in [
        Scm2D::m1(),
        Scm2D::m2(),
        Scm2D::box_muller(),
        Scm2D::new(AnalyticScmId::mperp_default()).unwrap(),
    ] {
        for a in Arm::BOTH {
            let (lo, hi) = scm.support(a);
            assert!(lo < hi);
            for u in corners {
                let y = scm.eval_f(a, u).unwrap();
                assert!(
                    y.is_finite() && y >= lo - 1e-9 && y <= hi + 1e-9,
                    "{:?} {a} {u:?} -> {y}",
                    scm.id()
                );
            }
        }
    }
}

#[test]
fn m1_gradients_are_constant() {
    let m1 = Scm2D::m1();
    for u in [[0.1, 0.9], [0.5, 0.5], [0.77, 0.21]] {
        assert_eq!(m1.grad_f(Arm::Control, u).unwrap(), [1.0, 1.0]);
        assert_eq!(m1.grad_f(Arm::Treated, u).unwrap(), [1.0, -1.0]);
    }
}

#[test]
fn box_muller_gradient_matches_differences_on_the_unit_radius_circle() {
    // u1 = e^{-1/2} puts the radius at 1; nudge u2 off the boundary of the square
    let bm = Scm2D::box_muller();
    let u = [(-0.5f64).exp(), 1e-3];
    let g = bm.grad_f(Arm::Control, u).unwrap();
    let fd = central_gradient(&bm, Arm::Control, u, 1e-5);
    // closed form: ∂₁ = −cos(πu₂)/(u₁ r), ∂₂ = −π r sin(πu₂)
    let r = 1.0;
    let exact = [
        -(std::f64::consts::PI * u[1]).cos() / (u[0] * r),
        -std::f64::consts::PI * r * (std::f64::consts::PI * u[1]).sin(),
    ];
    for i in 0..2 {
        assert!(
            (g[i] - fd[i]).abs() <= 1e-5 * fd[i].abs().max(1.0),
            "{g:?} vs {fd:?}"
        );
        assert!(
            (g[i] - exact[i]).abs() <= 1e-5 * exact[i].abs().max(1.0),
            "{g:?} vs {exact:?}"
        );
    }
}

#[test]
fn registered_gradients_match_differences_at_interior_points() {
    let mperp = Scm2D::new(AnalyticScmId::MPerp {
        g1: Monotone1D::Pow { exponent: 2.5 },
        g2: Monotone1D::Exp { rate: -0.7 },
    })
    .unwrap();
    for scm in [Scm2D::m1(), Scm2D::box_muller(), mperp] {
        for a in Arm::BOTH {
            for u in [[0.23, 0.61], [0.7, 0.35], [0.41, 0.12]] {
                let g = scm.grad_f(a, u).unwrap();
                let fd = central_gradient(&scm, a, u, 1e-5);
                for i in 0..2 {
                    assert!(
                        (g[i] - fd[i]).abs() <= 1e-5 * fd[i].abs().max(1.0),
                        "{:?} {a}: {g:?} vs {fd:?}",
                        scm.id()
                    );
                }
            }
        }
    }
}

#[test]
fn mperp_arms_depend_on_one_coordinate_each() {
    let scm = Scm2D::new(AnalyticScmId::mperp_default()).unwrap();
    for u in [[0.2, 0.3], [0.9, 0.05], [0.5, 0.5]] {
        assert_eq!(scm.grad_f(Arm::Treated, u).unwrap()[1], 0.0);
        assert_eq!(scm.grad_f(Arm::Control, u).unwrap()[0], 0.0);
        assert!(scm.grad_f(Arm::Treated, u).unwrap()[0] != 0.0);
        assert!(scm.grad_f(Arm::Control, u).unwrap()[1] != 0.0);
    }
}

#[test]
fn nonmonotone_mperp_maps_are_rejected() {
    let bad = AnalyticScmId::MPerp {
        g1: Monotone1D::Affine {
            scale: 0.0,
            shift: 1.0,
        },
        g2: Monotone1D::Exp { rate: 1.0 },
    };
    assert!(matches!(Scm2D::new(bad), Err(Error::Precondition(_))));
}

#[test]
fn m1_control_sample_is_triangular() {
    let s = Scm2D::m1()
        .sample_observational(Arm::Control, 100_000, 11)
        .unwrap();
    assert!(sup_distance(s, |y| tri_cdf(0.0, y)) <= 0.01);
}

#[test]
fn m1_treated_sample_is_triangular() {
    let s = Scm2D::m1()
        .sample_observational(Arm::Treated, 100_000, 12)
        .unwrap();
    assert!(sup_distance(s, |y| tri_cdf(1.0, y)) <= 0.01);
}

#[test]
fn box_muller_sample_is_standard_normal() {
    let n = Normal::new(0.0, 1.0).unwrap();
    for a in Arm::BOTH {
        let s = Scm2D::box_muller()
            .sample_observational(a, 100_000, 13)
            .unwrap();
        assert!(sup_distance(s, |y| n.cdf(y)) <= 0.01);
    }
}

#[test]
fn m1_and_m2_are_observationally_equivalent() {
    let grid: Vec<f64> = (0..101).map(|i| -1.0 + 3.0 * i as f64 / 100.0).collect();
    for a in Arm::BOTH {
        let d1 =
            EmpiricalDist::new(Scm2D::m1().sample_observational(a, 100_000, 21).unwrap()).unwrap();
        let d2 =
            EmpiricalDist::new(Scm2D::m2().sample_observational(a, 100_000, 22).unwrap()).unwrap();
        let sup = grid
            .iter()
            .map(|&y| (d1.ecdf(y) - d2.ecdf(y)).abs())
            .fold(0.0, f64::max);
        assert!(sup <= 0.02, "arm {a}: {sup}");
    }
}

#[test]
fn m2_bent_region_solves_its_implicit_equation() {
    let m2 = Scm2D::m2();
    for u in [[0.9, 0.1], [0.6, 0.2], [0.99, 0.01], [0.55, 0.45]] {
        let y = m2.eval_f(Arm::Treated, u).unwrap();
        assert!((1.0..=2.0).contains(&y));
        assert!(m2_implicit(y, u[0], u[1]).abs() < 1e-8, "residual at {u:?}");
    }
    // below the diagonal M2 coincides with M1
    for u in [[0.1, 0.9], [0.3, 0.31]] {
        assert_eq!(
            m2.eval_f(Arm::Treated, u).unwrap(),
            Scm2D::m1().eval_f(Arm::Treated, u).unwrap()
        );
    }
}

#[test]
fn single_draws_land_in_the_support() {
    for scm in [
        Scm2D::m1(),
        Scm2D::m2(),
        Scm2D::box_muller(),
        Scm2D::new(AnalyticScmId::mperp_default()).unwrap(),
    ] {
        for a in Arm::BOTH {
            let (lo, hi) = scm.support(a);
            let y = scm.sample_observational(a, 1, 5).unwrap()[0];
            assert!(y >= lo && y <= hi);
        }
    }
}

#[test]
fn sampling_is_deterministic_per_seed() {
    let m2 = Scm2D::m2();
    assert_eq!(
        m2.sample_observational(Arm::Treated, 50, 9).unwrap(),
        m2.sample_observational(Arm::Treated, 50, 9).unwrap()
    );
    assert_ne!(
        m2.sample_observational(Arm::Treated, 50, 9).unwrap(),
        m2.sample_observational(Arm::Treated, 50, 10).unwrap()
    );
    assert!(matches!(
        m2.sample_observational(Arm::Treated, 0, 9),
        Err(Error::Precondition(_))
    ));
}

#[test]
fn triangular_fixture_pushes_uniforms_to_triangular_laws() {
    let Fixture::Univariate(tri) = AnalyticScmId::MTri.build().unwrap() else {
        panic!("MTri is univariate");
    };
    for i in 1..20 {
        let u = i as f64 / 20.0;
        // treated arm increasing on [0,2], control arm decreasing on [-1,1]
        assert!((tri_cdf(1.0, tri.eval_f(Arm::Treated, u)) - u).abs() < 1e-12);
        assert!((tri_cdf(0.0, tri.eval_f(Arm::Control, u)) - (1.0 - u)).abs() < 1e-12);
    }
    for a in Arm::BOTH {
        let d: Triangular = tri.distribution(a);
        let c = if a == Arm::Treated { 1.0 } else { 0.0 };
        for i in 0..=40 {
            let y = c - 1.0 + i as f64 / 20.0;
            assert!((d.cdf(y) - tri_cdf(c, y)).abs() < 1e-12);
        }
    }
}

proptest! {
    #[test]
    fn eval_is_pure(u1 in 0.0f64..=1.0, u2 in 0.0f64..=1.0, treated in any::<bool>()) {
        let a = if treated { Arm::Treated } else { Arm::Control };
        for scm in [Scm2D::m1(), Scm2D::m2(), Scm2D::box_muller()] {
            let y1 = scm.eval_f(a, [u1, u2]).unwrap();
            let y2 = scm.eval_f(a, [u1, u2]).unwrap();
            prop_assert_eq!(y1.to_bits(), y2.to_bits());
        }
    }

    #[test]
    fn m2_stays_in_its_support(u1 in 0.0f64..=1.0, u2 in 0.0f64..=1.0) {
        let y = Scm2D::m2().eval_f(Arm::Treated, [u1, u2]).unwrap();
        prop_assert!((-1e-9..=2.0 + 1e-9).contains(&y));
    }
}
