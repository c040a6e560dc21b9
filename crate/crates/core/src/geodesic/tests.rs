use std::f64::consts::PI;
use std::sync::Arc;

use approx::assert_relative_eq;
use nalgebra::{DMatrix, DVector};

use super::*;
use crate::atlas::{ChartPoint, ManifoldAtlas};
use crate::metric::{MetricField, TangentVec};

fn plane() -> MetricField {
    MetricField::euclidean(Arc::new(ManifoldAtlas::euclidean(2)))
}

fn sphere() -> MetricField {
    MetricField::round_sphere(Arc::new(ManifoldAtlas::sphere_stereographic(2)))
}

fn tol() -> OdeTolerances {
    OdeTolerances::default()
}

#[test]
fn euclidean_straight_line() {
    let p = integrate_geodesic(&plane(), &TangentVec::new(0, &[0.0, 0.0], &[1.0, 0.0]), 2.0, tol()).unwrap();
    let e = p.end();
    assert_relative_eq!(e.x[0], 2.0, epsilon = 1e-12);
    assert_relative_eq!(e.x[1], 0.0, epsilon = 1e-12);
    assert!(p.unit_speed);
}

#[test]
fn sphere_half_great_circle_reaches_antipode() {
    let m = sphere();
    // unit speed at x: |v|_coord = (1+|x|²)/2
    let x = [0.3, -0.2];
    let s = (1.0 + 0.13) / 2.0;
    let dir = [0.6, 0.8];
    let v = [dir[0] * s, dir[1] * s];
    let path = integrate_geodesic(&m, &TangentVec::new(0, &x, &v), PI, tol()).unwrap();
    let end = m.atlas().sphere_embedding(&path.point(PI)).unwrap();
    let start = m.atlas().sphere_embedding(&ChartPoint::from_slice(0, &x)).unwrap();
    assert!((end + start).norm() < 1e-6);
    assert!(path.chart_segments().len() >= 2, "expected a chart switch");
    assert!(path.speed_drift() < 1e-7);
    assert!(parallelism_residual(&m, &path) < 1e-7);
}

#[test]
fn torus_wraparound() {
    let a = Arc::new(ManifoldAtlas::torus(&[1.0, 1.0]).unwrap());
    let m = MetricField::euclidean(a.clone());
    let path = integrate_geodesic(&m, &TangentVec::new(0, &[0.0, 0.0], &[1.0, 0.0]), 1.25, tol()).unwrap();
    assert!(a.separation(&path.point(1.25), &ChartPoint::from_slice(0, &[0.25, 0.0])) < 1e-12);
}

#[test]
fn exp_map_examples() {
    let m = plane();
    let p = ChartPoint::from_slice(0, &[0.5, -1.0]);
    assert_eq!(exp_map(&m, &p, &[0.0, 0.0], tol()).unwrap(), p);
    let q = exp_map(&m, &p, &[1.0, 2.0], tol()).unwrap();
    assert_relative_eq!(q.x[0], 1.5, epsilon = 1e-12);
    assert_relative_eq!(q.x[1], 1.0, epsilon = 1e-12);
    let s = sphere();
    let q = exp_map(&s, &ChartPoint::from_slice(0, &[0.0, 0.0]), &[0.0, PI / 2.0], tol()).unwrap();
    let e = s.atlas().sphere_embedding(&q).unwrap();
    assert!((e - DVector::from_column_slice(&[0.0, 0.0, 1.0])).norm() < 1e-6);
}

#[test]
fn length_and_energy() {
    let m = plane();
    let seg = ParametricCurve::segment(0, &[0.0, 0.0], &[3.0, 4.0]);
    assert_relative_eq!(path_length(&m, &seg), 5.0, epsilon = 1e-12);
    assert_relative_eq!(path_energy(&m, &seg), 12.5, epsilon = 1e-12);
    let r = MetricField::randers(Arc::new(ManifoldAtlas::euclidean(2)), None, vec![0.5, 0.0]).unwrap();
    assert_relative_eq!(path_length(&r, &ParametricCurve::segment(0, &[0.0, 0.0], &[1.0, 0.0])), 1.5, epsilon = 1e-12);
    assert_relative_eq!(path_length(&r, &ParametricCurve::segment(0, &[1.0, 0.0], &[0.0, 0.0])), 0.5, epsilon = 1e-12);
    // quadratic reparametrization s = t² of the segment: E > L²/(2T)
    let quadratic = ParametricCurve::new(0, 0.0, 1.0, 4, |t| {
        (
            DVector::from_column_slice(&[3.0 * t * t, 4.0 * t * t]),
            DVector::from_column_slice(&[6.0 * t, 8.0 * t]),
            DVector::from_column_slice(&[6.0, 8.0]),
        )
    });
    let l = path_length(&m, &quadratic);
    let e = path_energy(&m, &quadratic);
    assert_relative_eq!(l, 5.0, epsilon = 1e-12);
    assert!(e > l * l / 2.0 + 1.0);
    let s = sphere();
    let path = integrate_geodesic(&s, &TangentVec::new(0, &[0.0, 0.0], &[0.5, 0.0]), 2.5, tol()).unwrap();
    assert_relative_eq!(path_length(&s, &path), 2.5, epsilon = 1e-8);
    assert_relative_eq!(path_energy(&s, &path), 1.25, epsilon = 1e-8);
}

#[test]
fn residual_of_circle_is_curvature() {
    let m = plane();
    let r = 2.0;
    let circle = ParametricCurve::new(0, 0.0, 1.0, 8, move |t| {
        let (s, c) = (t / r).sin_cos();
        (
            DVector::from_column_slice(&[r * c, r * s]),
            DVector::from_column_slice(&[-s, c]),
            DVector::from_column_slice(&[-c / r, -s / r]),
        )
    });
    assert_relative_eq!(parallelism_residual(&m, &circle), 1.0 / r, epsilon = 1e-12);
    let rd = MetricField::randers(Arc::new(ManifoldAtlas::euclidean(2)), None, vec![0.5, 0.0]).unwrap();
    assert!(parallelism_residual(&rd, &ParametricCurve::segment(0, &[0.0, 0.0], &[1.0, 2.0])) < 1e-9);
}

#[test]
fn linearized_flow_examples() {
    let m = plane();
    let path = integrate_geodesic(&m, &TangentVec::new(0, &[0.0, 0.0], &[1.0, 0.0]), 2.0, tol()).unwrap();
    let j0 = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.5, 2.0]);
    let jd0 = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.3]);
    let f = linearized_flow(&m, &path, &j0, &jd0).unwrap();
    let (_, j, _, _) = f.jacobi(1.5);
    assert!((j - (&j0 + &jd0 * 1.5)).amax() < 1e-10);

    let s = sphere();
    let path = integrate_geodesic(&s, &TangentVec::new(0, &[0.0, 0.0], &[0.5, 0.0]), 3.0, tol()).unwrap();
    let f = linearized_flow(&s, &path, &DMatrix::zeros(2, 1), &DMatrix::from_column_slice(2, 1, &[0.0, 0.5])).unwrap();
    for t in [0.5, 1.0, 2.0, 2.9] {
        let (chart, j, _, _) = f.jacobi(t);
        let st = f.state(t);
        assert_eq!(chart, st.chart);
        let g = s.g_matrix(chart, st.x.as_slice(), st.v.as_slice()).unwrap();
        let norm = (j.transpose() * g * &j)[(0, 0)].sqrt();
        assert_relative_eq!(norm, t.sin(), epsilon = 1e-6);
    }
}

#[test]
fn linearized_flow_matches_finite_differences() {
    let q = MetricField::minkowski_quartic(Arc::new(ManifoldAtlas::euclidean(2)), 0.1).unwrap();
    let s = sphere();
    let cases: Vec<(MetricField, [f64; 2], [f64; 2])> =
        vec![(q, [0.1, 0.2], [0.7, 0.4]), (s, [0.2, -0.4], [0.5, 0.6])];
    let tol = OdeTolerances { rel: 1e-11, abs: 1e-13 };
    for (m, x, v) in cases {
        let t_end = 2.0;
        let j0 = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        let jd0 = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 1.0]);
        let f = integrate_with_frame(&m, &TangentVec::new(0, &x, &v), &j0, &jd0, t_end, tol).unwrap();
        let h = 1e-5;
        let end = |x: [f64; 2], v: [f64; 2]| {
            integrate_geodesic(&m, &TangentVec::new(0, &x, &v), t_end, tol).unwrap().point(t_end)
        };
        let fd_x = (end([x[0] + h, x[1]], v).x - end([x[0] - h, x[1]], v).x) / (2.0 * h);
        let fd_v = (end(x, [v[0], v[1] + h]).x - end(x, [v[0], v[1] - h]).x) / (2.0 * h);
        let (c, j, _, _) = f.jacobi(t_end);
        assert_eq!(c, end(x, v).chart);
        assert!((j.column(0) - fd_x).amax() < 1e-4);
        assert!((j.column(1) - fd_v).amax() < 1e-4);
    }
}

#[test]
fn conjugate_times() {
    let m = plane();
    assert!(conjugate_time(&m, &ChartPoint::from_slice(0, &[0.0, 0.0]), &[1.0, 0.0], 10.0, tol()).unwrap().is_infinite());
    let s = sphere();
    let t = conjugate_time(&s, &ChartPoint::from_slice(0, &[0.1, 0.0]), &[0.0, (1.0 + 0.01) / 2.0], 4.0, tol()).unwrap();
    assert_relative_eq!(t, PI, epsilon = 1e-6);
    let a = Arc::new(ManifoldAtlas::torus(&[1.0, 1.0]).unwrap());
    let tm = MetricField::euclidean(a);
    assert!(conjugate_time(&tm, &ChartPoint::from_slice(0, &[0.0, 0.0]), &[0.6, 0.8], 5.0, tol()).unwrap().is_infinite());
}

#[test]
fn reversed_geodesic_is_geodesic_of_reverse_metric() {
    let r = MetricField::randers(Arc::new(ManifoldAtlas::euclidean(2)), None, vec![0.5, 0.0]).unwrap();
    let s = sphere();
    let path = integrate_geodesic(&s, &TangentVec::new(0, &[0.2, 0.1], &[0.3, 0.4]), 2.0, tol()).unwrap();
    let end = path.end();
    let back = integrate_geodesic(&s, &TangentVec { chart: end.chart, x: end.x.clone(), v: -end.v.clone() }, 2.0, tol()).unwrap();
    let sep = s.atlas().separation(&back.point(2.0), &ChartPoint::from_slice(0, &[0.2, 0.1]));
    assert!(sep < 1e-7);
    let rr = r.reverse();
    let p = integrate_geodesic(&r, &TangentVec::new(0, &[0.0, 0.0], &[0.3, 0.4]), 1.0, tol()).unwrap();
    assert!(parallelism_residual(&rr, &p) < 1e-7);
}
