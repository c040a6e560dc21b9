use std::f64::consts::PI;
use std::sync::Arc;

use super::*;
use crate::atlas::ManifoldAtlas;
use crate::focal_cut::DistancePlan;
use crate::submanifold::{ConeGrid, Sides};

fn pt(x: f64, y: f64) -> ChartPoint {
    ChartPoint::from_slice(0, &[x, y])
}

fn origin() -> SubmanifoldSpec {
    SubmanifoldSpec::point(0, &[0.0, 0.0])
}

fn torus_fan(metric: &MetricField) -> NormalFan {
    let plan = DistancePlan { grid: ConeGrid::new(1, 64, Sides::Both), ..DistancePlan::new(1.0) };
    NormalFan::build(metric, &origin(), &plan).unwrap()
}

fn flat_torus() -> MetricField {
    MetricField::euclidean(Arc::new(ManifoldAtlas::torus(&[1.0, 1.0]).unwrap()))
}

fn records(fan: &NormalFan, grid: ConeGrid) -> Vec<CutRecord> {
    let locus = fan.cut_locus(&grid).unwrap();
    assert!(locus.failures.is_empty());
    locus.records
}

/// Distance from `(s, 0)` to the ellipse `x²/4 + y² = 1`, by dense sampling
/// polished with a few Newton steps on the squared distance.
fn ellipse_distance(s: f64) -> f64 {
    let f = |t: f64| ((2.0 * t.cos() - s).powi(2) + t.sin().powi(2)).sqrt();
    let mut best = (0.0, f64::INFINITY);
    for k in 0..4096 {
        let t = std::f64::consts::TAU * k as f64 / 4096.0;
        if f(t) < best.1 {
            best = (t, f(t));
        }
    }
    let (mut t, h) = (best.0, 1e-5);
    for _ in 0..20 {
        let d1 = (f(t + h).powi(2) - f(t - h).powi(2)) / (2.0 * h);
        let d2 = (f(t + h).powi(2) - 2.0 * f(t).powi(2) + f(t - h).powi(2)) / (h * h);
        if d2 <= 0.0 {
            break;
        }
        t -= d1 / d2;
    }
    f(t).min(best.1)
}

#[test]
fn torus_loop_and_functional() {
    let t = flat_torus();
    let fan = torus_fan(&t);
    let recs = records(&fan, ConeGrid::new(1, 32, Sides::Both));
    let m = fan.min_m_on_cut(&pt(0.0, 0.0), &recs).unwrap();
    assert!((m.value - 1.0).abs() < 1e-6, "{}", m.value);

    let search = fan.find_geodesic_loop(&recs).unwrap();
    let l = search.best().unwrap();
    assert!((l.length - 1.0).abs() < 1e-5, "{}", l.length);
    assert!(l.smoothness_residual <= 1e-4);
    assert!((l.t_mid - l.d).abs() <= 1e-5 && l.mid_gap < 1e-5);
    assert!(l.endpoint_gap < 1e-6 && l.speed_drift < 1e-7);
    let c = t.atlas().canonicalize(&l.x0);
    assert!(((c.x[0].abs() - 0.5).abs() < 1e-6 && c.x[1].abs() < 1e-6) || ((c.x[1].abs() - 0.5).abs() < 1e-6 && c.x[0].abs() < 1e-6));
    // the loop is the closed geodesic through x0: halfway it sits at x0
    assert!(t.atlas().separation(&l.point(0.5), &l.x0) < 1e-6);
    assert!(t.atlas().separation(&l.point(1.0), &pt(0.0, 0.0)) < 1e-6);
    assert_eq!(l.polyline(10).len(), 11);
    assert!(!search.focal_branch());
}

#[test]
fn two_segment_checks() {
    let t = flat_torus();
    let fan = torus_fan(&t);
    let r = fan.verify_two_segments(&pt(0.5, 0.0)).unwrap();
    assert!(r.pass && r.count == 2);
    let r = fan.verify_two_segments(&pt(0.5, 0.5)).unwrap();
    assert_eq!(r.count, 4);
    assert!(!r.pass && r.note.is_some());

    let plane = MetricField::euclidean(Arc::new(ManifoldAtlas::euclidean(2)));
    let circle = SubmanifoldSpec::circle(0, [0.0, 0.0], 1.0).unwrap();
    let plan = DistancePlan { grid: ConeGrid::new(64, 1, Sides::Both), ..DistancePlan::new(2.0) };
    let fan = NormalFan::build(&plane, &circle, &plan).unwrap();
    assert!(matches!(fan.verify_two_segments(&pt(0.0, 0.0)), Err(Error::Precondition(_))));
}

#[test]
fn second_geodesic_on_torus() {
    let t = flat_torus();
    let fan = torus_fan(&t);
    let recs = records(&fan, ConeGrid::new(1, 32, Sides::Both));
    let q = pt(0.3, 0.0);
    let TwoGeodesicsOutcome::Found(two) = fan.two_geodesics_to(&q, &recs).unwrap() else { panic!() };
    let seg = two.segment.as_ref().unwrap();
    assert!((seg.length - 0.3).abs() < 1e-8);
    assert!((two.second.length - 0.7).abs() < 1e-6, "{}", two.second.length);
    assert!(two.second.ray.v[0] < -0.999_999);
    assert!(two.second.miss(&t, &q, fan.plan()).unwrap() < 1e-8);
    let crossing = two.crossing.as_ref().unwrap();
    assert!((crossing.minimum.value - 0.7).abs() < 1e-6);
    assert_eq!(two.smooth_pairings(), 1);

    // q on N: constant curve plus a loop of length 1
    let TwoGeodesicsOutcome::Found(two) = fan.two_geodesics_to(&pt(0.0, 0.0), &recs).unwrap() else { panic!() };
    assert!(two.segment.is_none());
    assert!((two.second.length - 1.0).abs() < 1e-6);
}

#[test]
fn gates_and_focal_branch() {
    let r = MetricField::randers(Arc::new(ManifoldAtlas::torus(&[1.0, 1.0]).unwrap()), None, vec![0.3, 0.0]).unwrap();
    let fan = torus_fan(&r);
    assert!(matches!(fan.find_geodesic_loop(&[]), Err(Error::Precondition(_))));

    let s = MetricField::round_sphere(Arc::new(ManifoldAtlas::sphere_stereographic(2)));
    let equator = SubmanifoldSpec::circle(0, [0.0, 0.0], 1.0).unwrap();
    let plan = DistancePlan { grid: ConeGrid::new(32, 1, Sides::Both), ..DistancePlan::new(2.0) };
    let fan = NormalFan::build(&s, &equator, &plan).unwrap();
    let recs = records(&fan, ConeGrid::new(8, 1, Sides::Both));
    let search = fan.find_geodesic_loop(&recs).unwrap();
    assert!(search.focal_branch());
    for f in &search.focal {
        assert!((f.d - PI / 2.0).abs() < 1e-6 && (f.lambda - PI / 2.0).abs() < 1e-6);
    }
}

#[test]
fn sphere_antipode_functional() {
    let s = MetricField::round_sphere(Arc::new(ManifoldAtlas::sphere_stereographic(2)));
    let plan = DistancePlan { grid: ConeGrid::new(1, 32, Sides::Both), ..DistancePlan::new(3.5) };
    let fan = NormalFan::build(&s, &origin(), &plan).unwrap();
    let recs = records(&fan, ConeGrid::new(1, 8, Sides::Both));
    let m = fan.min_m_on_cut(&ChartPoint::from_slice(1, &[0.0, 0.0]), &recs).unwrap();
    assert!((m.value - PI).abs() < 1e-4, "{}", m.value);
}

#[test]
fn ellipse_functional_matches_dense_sampling() {
    let plane = MetricField::euclidean(Arc::new(ManifoldAtlas::euclidean(2)));
    let ellipse = SubmanifoldSpec::ellipse(0, [0.0, 0.0], 2.0, 1.0).unwrap();
    let plan = DistancePlan { grid: ConeGrid::new(64, 1, Sides::Both), ..DistancePlan::new(2.5) };
    let fan = NormalFan::build(&plane, &ellipse, &plan).unwrap();
    let recs = records(&fan, ConeGrid::new(32, 1, Sides::Minus));
    let m = fan.min_m_on_cut(&pt(0.0, 0.0), &recs).unwrap();
    let oracle = (0..=300)
        .map(|k| {
            let s = -1.5 + 3.0 * k as f64 / 300.0;
            ellipse_distance(s) + s.abs()
        })
        .fold(f64::INFINITY, f64::min);
    assert!((m.value - oracle).abs() < 1e-6, "{} vs {oracle}", m.value);
    assert!(m.x0.point.x.norm() < 1e-5);
    // the ellipse has non-separating focal cut points: first alternative
    assert!(matches!(fan.two_geodesics_to(&pt(0.3, 0.2), &recs).unwrap(), TwoGeodesicsOutcome::FocalBranch { .. }));
}
