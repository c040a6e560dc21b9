//! Invariants checked over random inputs.

use std::sync::{Arc, OnceLock};

use finsler_cut::atlas::{ChartPoint, ManifoldAtlas};
use finsler_cut::focal_cut::{DistancePlan, NormalFan};
use finsler_cut::geodesic::{integrate_geodesic, OdeTolerances};
use finsler_cut::metric::{Covector, MetricField, TangentVec};
use finsler_cut::scenario::round_sig;
use finsler_cut::submanifold::{ConeGrid, Sides, SubmanifoldSpec};
use nalgebra::DVector;
use proptest::prelude::*;

fn metrics() -> Vec<MetricField> {
    let plane = Arc::new(ManifoldAtlas::euclidean(2));
    vec![
        MetricField::euclidean(plane.clone()),
        MetricField::randers(plane.clone(), Some(vec![2.0, 0.3, 0.3, 1.0]), vec![0.2, -0.4]).unwrap(),
        MetricField::minkowski_quartic(plane, 0.1).unwrap(),
        MetricField::round_sphere(Arc::new(ManifoldAtlas::sphere_stereographic(2))),
    ]
}

fn direction() -> impl Strategy<Value = [f64; 2]> {
    (0.0..std::f64::consts::TAU, 0.1f64..3.0).prop_map(|(a, r)| [r * a.cos(), r * a.sin()])
}

fn point() -> impl Strategy<Value = [f64; 2]> {
    prop::array::uniform2(-1.5f64..1.5)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn norm_is_positively_homogeneous(m in 0usize..4, x in point(), v in direction(), s in 0.01f64..50.0) {
        let metric = &metrics()[m];
        let f = metric.f(0, &x, &v);
        let fs = metric.f(0, &x, &[s * v[0], s * v[1]]);
        prop_assert!(f > 0.0);
        prop_assert!((fs - s * f).abs() <= 1e-12 * s * f);
    }

    #[test]
    fn fundamental_tensor_reproduces_the_norm(m in 0usize..4, x in point(), v in direction()) {
        let metric = &metrics()[m];
        let g = metric.fundamental_tensor(&TangentVec::new(0, &x, &v)).unwrap();
        let vv = DVector::from_column_slice(&v);
        let gvv = (vv.transpose() * &g.g * &vv)[0];
        let f = metric.f(0, &x, &v);
        prop_assert!((gvv - f * f).abs() <= 1e-10 * f * f);
    }

    #[test]
    fn legendre_round_trip(m in 0usize..4, x in point(), v in direction()) {
        let metric = &metrics()[m];
        let p = TangentVec::new(0, &x, &v);
        let omega = metric.legendre(&p).unwrap();
        let back = metric.legendre_inverse(&omega, None).unwrap();
        prop_assert!((back.v - &p.v).norm() <= 1e-9 * (1.0 + p.v.norm()));
        // ω(v) = F(v)²
        let f = metric.f(0, &x, &v);
        prop_assert!((omega.omega.dot(&p.v) - f * f).abs() <= 1e-10 * f * f);
    }

    #[test]
    fn legendre_inverse_of_zero_is_zero(m in 0usize..4, x in point()) {
        let metric = &metrics()[m];
        let w = Covector { chart: 0, x: DVector::from_column_slice(&x), omega: DVector::zeros(2) };
        prop_assert_eq!(metric.legendre_inverse(&w, None).unwrap().v.norm(), 0.0);
    }

    #[test]
    fn reversal_is_an_involution(m in 0usize..4, x in point(), v in direction()) {
        let metric = &metrics()[m];
        let rev = metric.reverse();
        let minus = [-v[0], -v[1]];
        prop_assert!((rev.f(0, &x, &v) - metric.f(0, &x, &minus)).abs() <= 1e-14 * metric.f(0, &x, &minus));
        prop_assert_eq!(rev.reverse().f(0, &x, &v), metric.f(0, &x, &v));
    }

    #[test]
    fn torus_canonicalize_is_idempotent(x in prop::array::uniform2(-20.0f64..20.0)) {
        let atlas = ManifoldAtlas::torus(&[1.0, 2.0]).unwrap();
        let c = atlas.canonicalize(&ChartPoint::from_slice(0, &x));
        prop_assert!(c.x[0] >= -0.5 && c.x[0] < 0.5 && c.x[1] >= -1.0 && c.x[1] < 1.0);
        prop_assert_eq!(atlas.canonicalize(&c), c.clone());
        prop_assert!(atlas.separation(&c, &ChartPoint::from_slice(0, &x)) <= 1e-12);
    }

    #[test]
    fn sphere_charts_agree(x in prop::array::uniform2(-3.0f64..3.0)) {
        let atlas = ManifoldAtlas::sphere_stereographic(2);
        let p = ChartPoint::from_slice(0, &x);
        // the overlap: both images inside the cube of half-width 3
        prop_assume!(x[0] * x[0] + x[1] * x[1] > 0.12);
        let y = atlas.to_chart(&p, 1).unwrap();
        let q = ChartPoint::new(1, y);
        let (ep, eq) = (atlas.sphere_embedding(&p).unwrap(), atlas.sphere_embedding(&q).unwrap());
        prop_assert!((ep.norm() - 1.0).abs() <= 1e-12);
        prop_assert!((ep - eq).norm() <= 1e-12);
    }

    #[test]
    fn rounding_is_idempotent_and_close(x in prop::num::f64::NORMAL, d in 1usize..16) {
        let r = round_sig(x, d);
        prop_assert_eq!(round_sig(r, d), r);
        prop_assert!((r - x).abs() <= 0.5 * 10f64.powi(1 - d as i32) * x.abs() * (1.0 + 1e-12));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn geodesic_speed_is_conserved(m in 0usize..4, x in prop::array::uniform2(-0.8f64..0.8), v in direction()) {
        let metric = &metrics()[m];
        let path = integrate_geodesic(metric, &TangentVec::new(0, &x, &v), 1.0, OdeTolerances::default()).unwrap();
        prop_assert!(path.speed_drift() <= 1e-7, "drift {}", path.speed_drift());
    }
}

fn torus_fan() -> &'static NormalFan {
    static FAN: OnceLock<NormalFan> = OnceLock::new();
    FAN.get_or_init(|| {
        let metric = MetricField::euclidean(Arc::new(ManifoldAtlas::torus(&[1.0, 1.0]).unwrap()));
        let plan = DistancePlan { grid: ConeGrid::new(1, 64, Sides::Both), ..DistancePlan::new(1.0) };
        NormalFan::build(&metric, &SubmanifoldSpec::point(0, &[0.0, 0.0]), &plan).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn torus_distance_matches_lattice(q in prop::array::uniform2(-0.5f64..0.5)) {
        prop_assume!(q[0].hypot(q[1]) > 1e-3);
        let w = torus_fan().distance_to(&ChartPoint::from_slice(0, &q)).unwrap();
        let mut oracle = f64::INFINITY;
        for i in -1..=1 {
            for j in -1..=1 {
                oracle = oracle.min((q[0] - i as f64).hypot(q[1] - j as f64));
            }
        }
        prop_assert!((w.d - oracle).abs() <= 1e-8, "d {} vs {}", w.d, oracle);
    }

    #[test]
    fn cut_time_never_exceeds_focal_time(psi in -std::f64::consts::PI..std::f64::consts::PI) {
        let fan = torus_fan();
        let ray = finsler_cut::submanifold::unit_normal(fan.metric(), fan.spec(), &[], &[psi]).unwrap();
        let c = fan.cut_time(&ray).unwrap();
        prop_assert!(c.rho <= fan.focal_time(&ray, 2.0).unwrap() + 1e-9);
    }
}
