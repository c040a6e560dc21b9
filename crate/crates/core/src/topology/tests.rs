use std::f64::consts::{FRAC_PI_2, TAU};
use std::sync::Arc;

use approx::assert_relative_eq;

use super::*;
use crate::atlas::ManifoldAtlas;
use crate::focal_cut::DistancePlan;
use crate::submanifold::{ConeGrid, Sides, SubmanifoldSpec};

fn plane() -> MetricField {
    MetricField::euclidean(Arc::new(ManifoldAtlas::euclidean(2)))
}

fn torus_fan() -> NormalFan {
    let t = MetricField::euclidean(Arc::new(ManifoldAtlas::torus(&[1.0, 1.0]).unwrap()));
    let plan = DistancePlan { grid: ConeGrid::new(1, 64, Sides::Both), ..DistancePlan::new(1.0) };
    NormalFan::build(&t, &SubmanifoldSpec::point(0, &[0.0, 0.0]), &plan).unwrap()
}

fn circle_fan() -> NormalFan {
    let plan = DistancePlan { grid: ConeGrid::new(64, 1, Sides::Both), ..DistancePlan::new(2.0) };
    NormalFan::build(&plane(), &SubmanifoldSpec::circle(0, [0.0, 0.0], 1.0).unwrap(), &plan).unwrap()
}

fn pt(x: f64, y: f64) -> ChartPoint {
    ChartPoint::from_slice(0, &[x, y])
}

#[test]
fn inverse_exp_examples() {
    let fan = torus_fan();
    let r = fan.inverse_normal_exp(&pt(0.25, 0.0)).unwrap();
    assert_relative_eq!(r.t, 0.25, epsilon = 1e-8);
    assert!(r.ray.v[0] > 0.999_999);
    assert_relative_eq!(r.rho, 0.5, epsilon = 1e-6);
    assert_eq!(fan.inverse_normal_exp(&pt(0.0, 0.0)).unwrap().t, 0.0);
    assert!(matches!(fan.inverse_normal_exp(&pt(0.5, 0.1)), Err(Error::PointOnCutLocus { count: 2 })));

    let c = circle_fan();
    assert!(c.inverse_normal_exp(&pt(0.0, 1.0)).unwrap().t.abs() < 1e-9);

    let ellipse = SubmanifoldSpec::ellipse(0, [0.0, 0.0], 2.0, 1.0).unwrap();
    let plan = DistancePlan { grid: ConeGrid::new(128, 1, Sides::Both), ..DistancePlan::new(2.5) };
    let fan = NormalFan::build(&plane(), &ellipse, &plan).unwrap();
    let r = fan.inverse_normal_exp(&pt(0.0, 0.5)).unwrap();
    assert_relative_eq!(r.t, 0.5, epsilon = 1e-8);
    assert_relative_eq!(r.ray.theta[0], FRAC_PI_2, epsilon = 1e-7);
}

#[test]
fn retraction_endpoints() {
    let fan = torus_fan();
    let q = pt(0.25, 0.0);
    let at = |s| fan.retract_to_n(&q, s).unwrap();
    assert!(fan.metric().atlas().separation(&at(0.0), &q) < 1e-8);
    assert!(fan.metric().atlas().separation(&at(0.5), &pt(0.125, 0.0)) < 1e-8);
    assert!(fan.metric().atlas().separation(&at(1.0), &pt(0.0, 0.0)) < 1e-12);
    let end = fan.retract_to_cut(&q, 1.0).unwrap();
    assert!(fan.metric().atlas().separation(&end, &pt(0.5, 0.0)) < 1e-6);
    assert!(fan.metric().atlas().separation(&fan.retract_to_cut(&q, 0.0).unwrap(), &q) < 1e-8);
    // cut points stay put
    let cut = pt(0.5, 0.2);
    for s in [0.0, 0.3, 1.0] {
        assert_eq!(fan.retract_to_cut(&cut, s).unwrap(), cut);
    }
    assert!(matches!(fan.retract_to_n(&cut, 0.5), Err(Error::PointOnCutLocus { .. })));
    assert!(fan.retract_to_n(&q, 1.5).is_err());
    assert!(matches!(fan.retract_to_cut(&pt(0.0, 0.0), 0.5), Err(Error::Precondition(_))));

    let c = circle_fan();
    assert!(matches!(c.retract_to_cut(&pt(1.5, 0.0), 0.5), Err(Error::RetractionUndefined)));
    // inside, the homotopy onto the cut locus ends at the center
    let end = c.retract_to_cut(&pt(0.3, 0.4), 1.0).unwrap();
    assert!(end.x.norm() < 1e-6);
}

#[test]
fn traces_and_csv() {
    let fan = torus_fan();
    let r = fan.retraction(&pt(0.2, 0.1)).unwrap();
    let tr = r.trace(fan.metric(), Homotopy::ToN, 4, fan.plan().tol).unwrap();
    assert_eq!(tr.len(), 5);
    let csv = trace_csv(fan.metric(), &tr);
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "s,x1,x2");
    assert_eq!(lines.len(), 6);
    assert!(lines[5].starts_with("1,"));
}

#[test]
fn differential_examples() {
    let c = circle_fan();
    for r in [0.2, 0.4, 0.7] {
        let df = c.distance_sq_differential(&pt(r, 0.0), &[1.0, 0.0]).unwrap();
        assert_relative_eq!(df, -2.0 * (1.0 - r), epsilon = 1e-8);
    }
    // along the terminal velocity: 2ℓ F² = 2ℓ
    let q = pt(0.3, 0.4);
    let w = c.distance_to(&q).unwrap();
    let v = w.minimizers[0].terminal.v.clone();
    assert_relative_eq!(c.distance_sq_differential(&q, v.as_slice()).unwrap(), 2.0 * w.d, epsilon = 1e-8);

    match c.distance_sq_differential(&pt(0.0, 0.0), &[1.0, 0.0]) {
        Err(Error::NonDifferentiable { left, right, count }) => {
            assert!(count >= 2);
            // a sample of the circle of segments; the extremes are ±2
            assert!(left > 1.8 && left <= 2.0 + 1e-9, "{left}");
            assert!(right < -1.8 && right >= -2.0 - 1e-9, "{right}");
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn first_variation_report() {
    let c = circle_fan();
    let dirs: Vec<Vec<f64>> = (0..8).map(|k| {
        let a = TAU * k as f64 / 8.0;
        vec![a.cos(), a.sin()]
    }).collect();
    let rep = c.check_first_variation(&pt(0.4, 0.0), &dirs, 1e-5).unwrap();
    assert!(rep.differentiable);
    assert!(rep.max_deviation <= 1e-4, "{}", rep.max_deviation);
    let rep = c.check_first_variation(&pt(0.0, 0.0), &dirs[..1], 1e-5).unwrap();
    assert!(!rep.differentiable);
    assert!(rep.max_spread > 1.0);
    assert!(c.check_first_variation(&pt(0.4, 0.0), &dirs, 0.0).is_err());
}
