//! The seven scenario tasks. Each returns a summary (golden-compared), a
//! full document, extra files and the list of violated checks.

use std::f64::consts::TAU;

use nalgebra::DVector;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use super::build::Instance;
use super::output::{num, nums, Svg};
use super::{Format, ManifoldType};
use crate::atlas::ChartPoint;
use crate::error::{Error, Result};
use crate::focal_cut::{
    check_rho_continuity, check_rho_leq_lambda, check_se_dense, point_distance, CutLocus, CutRecord, DistancePlan,
    Minimizer, NormalFan,
};
use crate::geodesic::integrate_geodesic;
use crate::loops::TwoGeodesicsOutcome;
use crate::metric::{validate_metric, MetricField, SamplingPlan, TangentVec};
use crate::submanifold::{normal_exp, normal_frame, ray_residuals, unit_normal, ConeGrid, NormalRay, Sides};
use crate::topology::{trace_csv, Homotopy};

/// Largest accepted `|df(X) − central difference|`.
const DF_TOL: f64 = 1e-4;
/// Endpoint identities of the two homotopies.
const RETRACT_TOL: f64 = 1e-5;
const SPEED_TOL: f64 = 1e-7;
const FLOW_TOL: f64 = 1e-4;
const IDENTITY_TOL: f64 = 1e-9;
const LOOP_SMOOTH_TOL: f64 = 1e-4;
/// Finite-difference step for the linearized-flow check.
const FLOW_STEP: f64 = 1e-4;
/// Rays sampled by the per-ray theorem checks.
const SPEED_RAYS: usize = 16;
const FLOW_RAYS: usize = 4;
const IDENTITY_SAMPLES: usize = 64;

pub(crate) struct TaskOutput {
    pub summary: Value,
    pub document: Value,
    pub files: Vec<(String, Format, String)>,
    pub violations: Vec<String>,
}

impl TaskOutput {
    fn new(summary: Value, document: Value) -> Self {
        TaskOutput { summary, document, files: Vec::new(), violations: Vec::new() }
    }
}

/// Caches shared between tasks of one run.
pub(crate) struct Context<'a> {
    pub inst: &'a Instance,
    fan: Option<NormalFan>,
    locus: Option<CutLocus>,
}

impl<'a> Context<'a> {
    pub fn new(inst: &'a Instance) -> Self {
        Context { inst, fan: None, locus: None }
    }

    fn fan(&mut self) -> Result<&NormalFan> {
        if self.fan.is_none() {
            self.fan = Some(NormalFan::build(&self.inst.metric, &self.inst.spec, &self.inst.plan)?);
        }
        Ok(self.fan.as_ref().expect("fan built above"))
    }

    fn locus(&mut self) -> Result<(&NormalFan, &CutLocus)> {
        if self.locus.is_none() {
            let grid = self.inst.grid.clone();
            let locus = self.fan()?.cut_locus(&grid)?;
            self.locus = Some(locus);
        }
        Ok((self.fan.as_ref().expect("fan built with locus"), self.locus.as_ref().expect("locus built above")))
    }
}

/// Coordinates for output: lattice reduced, in the deepest chart.
fn coords(metric: &MetricField, p: &ChartPoint) -> (usize, Vec<f64>) {
    let atlas = metric.atlas();
    let c = atlas.canonicalize(p);
    if atlas.chart_count() > 1 {
        atlas.best_chart(c.chart, c.x.as_slice())
    } else {
        (c.chart, c.x.as_slice().to_vec())
    }
}

fn point_json(metric: &MetricField, p: &ChartPoint) -> Value {
    let (chart, x) = coords(metric, p);
    json!({"chart": chart, "x": nums(&x)})
}

fn minimizer_json(m: &Minimizer) -> Value {
    json!({"theta": nums(&m.ray.theta), "psi": nums(&m.ray.psi), "t": num(m.t), "residual": num(m.residual)})
}

fn record_json(metric: &MetricField, r: &CutRecord) -> Value {
    let (chart, x) = match &r.cut_point {
        Some(p) => {
            let (c, x) = coords(metric, p);
            (Value::from(c), nums(&x))
        }
        None => (Value::Null, Value::Null),
    };
    json!({
        "index": r.index,
        "theta": nums(&r.ray.theta),
        "psi": nums(&r.ray.psi),
        "rho": num(r.rho),
        "lambda": num(r.lambda),
        "horizon_limited": r.horizon_limited,
        "cut_point": x,
        "cut_chart": chart,
        "class": r.classification.iter().map(|c| c.name()).collect::<Vec<_>>(),
        "competitor": r.competitor.as_ref().map_or(Value::Null, minimizer_json),
        "minimizer_count": r.minimizer_count,
        "residual": num(r.residual),
        "violation": r.violation,
    })
}

fn failures_json(f: &[(Vec<f64>, Vec<f64>, Error)]) -> Value {
    Value::Array(f.iter().map(|(t, p, e)| json!({"theta": nums(t), "psi": nums(p), "error": e.to_string()})).collect())
}

fn fmt_num(x: f64) -> String {
    match num(x) {
        Value::String(s) => s,
        v => v.to_string(),
    }
}

fn joined(xs: &[f64]) -> String {
    xs.iter().map(|&x| fmt_num(x)).collect::<Vec<_>>().join(" ")
}

fn csv_text(header: Vec<String>, rows: Vec<Vec<String>>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Error::Io(e.to_string());
    w.write_record(&header).map_err(io)?;
    for r in rows {
        w.write_record(&r).map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
    Ok(String::from_utf8(bytes).unwrap_or_default())
}

fn records_csv(metric: &MetricField, records: &[CutRecord]) -> Result<String> {
    let n = metric.dim();
    let mut header: Vec<String> = ["theta", "psi", "rho", "lambda"].iter().map(|s| s.to_string()).collect();
    header.extend((1..=n).map(|i| format!("x{i}")));
    header.push("class".into());
    let rows = records
        .iter()
        .map(|r| {
            let mut row = vec![joined(&r.ray.theta), joined(&r.ray.psi), fmt_num(r.rho), fmt_num(r.lambda)];
            match &r.cut_point {
                Some(p) => row.extend(coords(metric, p).1.iter().map(|&x| fmt_num(x))),
                None => row.extend((0..n).map(|_| String::new())),
            }
            row.push(r.classification.iter().map(|c| c.name()).collect::<Vec<_>>().join("|"));
            row
        })
        .collect();
    csv_text(header, rows)
}

/// Chart-0 coordinates of `p` when it lies inside chart 0.
fn planar(metric: &MetricField, p: &ChartPoint) -> Option<[f64; 2]> {
    let x = metric.atlas().to_chart(p, 0)?;
    metric.atlas().contains(0, x.as_slice()).then(|| [x[0], x[1]])
}

/// `N`, the cut points and a few sampled normal geodesics.
fn cut_svg(inst: &Instance, records: &[CutRecord]) -> String {
    let metric = &inst.metric;
    let spec = &inst.spec;
    let mut n_pts: Vec<[f64; 2]> = Vec::new();
    if spec.param_dim == 1 {
        let (lo, hi) = spec.domain[0];
        for k in 0..=200 {
            let th = lo + (hi - lo) * k as f64 / 200.0;
            if let Some(p) = planar(metric, &spec.point_at(&[th])) {
                n_pts.push(p);
            }
        }
    } else if let Some(p) = planar(metric, &spec.point_at(&[])) {
        n_pts.push(p);
    }
    let cut: Vec<[f64; 2]> = records.iter().filter_map(|r| r.cut_point.as_ref()).filter_map(|p| planar(metric, p)).collect();
    let stride = (records.len() / 16).max(1);
    let paths: Vec<Vec<[f64; 2]>> = records
        .iter()
        .step_by(stride)
        .filter_map(|r| {
            let t_end = if r.rho.is_finite() { r.rho } else { inst.plan.horizon };
            let path = integrate_geodesic(metric, &r.ray.tangent(1.0), t_end, inst.plan.tol).ok()?;
            Some((0..=48).filter_map(|k| planar(metric, &path.point(t_end * k as f64 / 48.0))).collect())
        })
        .collect();
    let mut svg = Svg::new(n_pts.iter().chain(cut.iter()).chain(paths.iter().flatten()).cloned());
    for p in &paths {
        svg.polyline(p, "#9ab", 0.8);
    }
    if n_pts.len() > 1 {
        svg.polyline(&n_pts, "black", 2.0);
    } else if let Some(p) = n_pts.first() {
        svg.dot(*p, "black", 4.0);
    }
    for p in &cut {
        svg.dot(*p, "#c22", 2.0);
    }
    svg.finish(&inst.scenario.name)
}

pub(crate) fn validate(ctx: &mut Context) -> Result<TaskOutput> {
    let inst = ctx.inst;
    let metric = &inst.metric;
    let s = &inst.scenario;
    let report = validate_metric(metric, &SamplingPlan { samples: 200, seed: inst.seed, extent: 1.0 });
    let mut violations: Vec<String> = report.violations.iter().map(|v| format!("metric: {v}")).collect();

    let sample = crate::submanifold::sample_unit_cone(metric, &inst.spec, &inst.grid)?;
    let (mut max_unit, mut max_orth) = (0.0f64, 0.0f64);
    for ray in &sample.rays {
        let (u, o) = ray_residuals(metric, &inst.spec, ray)?;
        max_unit = max_unit.max(u);
        max_orth = max_orth.max(o);
    }
    if max_unit > 1e-9 || max_orth > 1e-9 {
        violations.push(format!("unit normal residuals {max_unit:e} / {max_orth:e}"));
    }

    let mut distances = Vec::new();
    for (i, c) in s.checks.distances.iter().enumerate() {
        let plan = DistancePlan {
            grid: ConeGrid::new(1, POINT_FAN_PSI, Sides::Both),
            ..DistancePlan { horizon: (2.0 * c.expected).max(inst.plan.horizon), ..inst.plan.clone() }
        };
        let p = ChartPoint::from_slice(0, &c.from);
        let q = ChartPoint::from_slice(0, &c.to);
        let d = point_distance(metric, &p, &q, &plan)?.d;
        let err = (d - c.expected).abs();
        if !(err <= c.tol) {
            violations.push(format!("distance check {i}: d = {d}, expected {} (tol {})", c.expected, c.tol));
        }
        distances.push(json!({"from": nums(&c.from), "to": nums(&c.to), "d": num(d), "expected": num(c.expected), "error": num(err), "pass": err <= c.tol}));
    }
    let mut normals = Vec::new();
    for (i, c) in s.checks.normals.iter().enumerate() {
        let ray = unit_normal(metric, &inst.spec, &c.theta, &c.psi)?;
        let err = ray.v.iter().zip(&c.expected).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        if !(err <= c.tol) || c.expected.len() != ray.v.len() {
            violations.push(format!("normal check {i}: v = {:?}, expected {:?}", ray.v.as_slice(), c.expected));
        }
        normals.push(json!({"theta": nums(&c.theta), "psi": nums(&c.psi), "v": nums(ray.v.as_slice()), "error": num(err), "pass": err <= c.tol}));
    }

    let summary = json!({
        "metric_pass": report.pass,
        "reversible": report.reversible,
        "min_eigenvalue": num(report.min_eigenvalue),
        "max_g_identity_residual": num(report.max_g_identity_residual),
        "max_unit_residual": num(max_unit),
        "max_orthogonality_residual": num(max_orth),
        "distances": distances.iter().map(|d| d["d"].clone()).collect::<Vec<_>>(),
        "normals": normals.iter().map(|d| d["v"].clone()).collect::<Vec<_>>(),
        "violations": violations.len(),
    });
    let document = json!({
        "metric": {
            "family": metric.family().tag(),
            "samples": report.samples,
            "max_homogeneity_residual": num(report.max_homogeneity_residual),
            "min_eigenvalue": num(report.min_eigenvalue),
            "max_cartan_contraction": num(report.max_cartan_contraction),
            "max_g_identity_residual": num(report.max_g_identity_residual),
            "max_reversibility_residual": num(report.max_reversibility_residual),
            "reversible": report.reversible,
            "violations": report.violations,
            "pass": report.pass,
        },
        "rays": sample.rays.len(),
        "ray_failures": failures_json(&sample.failures),
        "max_unit_residual": num(max_unit),
        "max_orthogonality_residual": num(max_orth),
        "distances": distances,
        "normals": normals,
        "violations": violations,
    });
    let mut out = TaskOutput::new(summary, document);
    out.violations = violations;
    Ok(out)
}

const POINT_FAN_PSI: usize = 64;

pub(crate) fn cutlocus(ctx: &mut Context) -> Result<TaskOutput> {
    let inst = ctx.inst;
    let (_, locus) = ctx.locus()?;
    let metric = &inst.metric;
    let recs = &locus.records;
    let finite: Vec<f64> = recs.iter().map(|r| r.rho).filter(|r| r.is_finite()).collect();
    let rho_min = finite.iter().cloned().fold(f64::INFINITY, f64::min);
    let rho_max = finite.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let rho_mean = if finite.is_empty() { f64::NAN } else { finite.iter().sum::<f64>() / finite.len() as f64 };
    let summary = json!({
        "records": recs.len(),
        "failures": locus.failures.len(),
        "finite": finite.len(),
        "horizon_limited": recs.iter().filter(|r| r.horizon_limited).count(),
        "rho_min": num(rho_min),
        "rho_max": num(rho_max),
        "rho_mean": num(rho_mean),
        "rho": recs.iter().map(|r| num(r.rho)).collect::<Vec<_>>(),
    });
    let document = json!({
        "records": recs.iter().map(|r| record_json(metric, r)).collect::<Vec<_>>(),
        "failures": failures_json(&locus.failures),
    });
    let mut out = TaskOutput::new(summary, document);
    out.files.push(("cutlocus.csv".into(), Format::Csv, records_csv(metric, recs)?));
    if inst.dim() == 2 {
        out.files.push(("cutlocus.svg".into(), Format::Svg, cut_svg(inst, recs)));
    }
    Ok(out)
}

pub(crate) fn classify(ctx: &mut Context) -> Result<TaskOutput> {
    let inst = ctx.inst;
    let (_, locus) = ctx.locus()?;
    let recs = &locus.records;
    let sep = recs.iter().filter(|r| r.is_separating()).count();
    let ff = recs.iter().filter(|r| r.is_first_focal()).count();
    let both = recs.iter().filter(|r| r.is_separating() && r.is_first_focal()).count();
    let ff_only = ff - both;
    let mut violations = Vec::new();
    for r in recs {
        if r.cut_point.is_some() && r.classification.is_empty() {
            violations.push(format!("record {}: finite cut time {} without classification", r.index, r.rho));
        }
        if let Some(v) = &r.violation {
            violations.push(format!("record {}: {v}", r.index));
        }
    }
    let density = check_se_dense(&inst.metric, recs, None);
    if !density.pass {
        violations.push(format!("{} first-focal-only points without a separating point within {}", density.violations.len(), density.delta));
    }
    let summary = json!({
        "separating": sep,
        "first_focal": ff,
        "both": both,
        "first_focal_only": ff_only,
        "unclassified": recs.iter().filter(|r| r.cut_point.is_some() && r.classification.is_empty()).count(),
        "density_pass": density.pass,
        "density_delta": num(density.delta),
        "violations": violations.len(),
    });
    let document = json!({
        "classes": recs.iter().map(|r| json!({
            "index": r.index,
            "class": r.classification.iter().map(|c| c.name()).collect::<Vec<_>>(),
            "minimizer_count": r.minimizer_count,
        })).collect::<Vec<_>>(),
        "density": {
            "delta": num(density.delta),
            "pitch": num(density.pitch),
            "first_focal_only": density.first_focal_only,
            "separating": density.separating,
            "violations": density.violations,
            "pass": density.pass,
        },
        "violations": violations,
    });
    let mut out = TaskOutput::new(summary, document);
    out.violations = violations;
    Ok(out)
}

/// Default probe box: one period on tori, `[-1, 1]^n` otherwise.
fn probe_box(inst: &Instance) -> Vec<[f64; 2]> {
    let p = &inst.scenario.probes;
    if let Some(b) = &p.bounds {
        return b.clone();
    }
    match (&inst.scenario.manifold.kind, &inst.scenario.manifold.periods) {
        (ManifoldType::Torus, Some(per)) => per.iter().map(|&l| [-0.5 * l, 0.5 * l]).collect(),
        _ => vec![[-1.0, 1.0]; inst.dim()],
    }
}

/// Seeded probe stream; `stream` separates the tasks.
fn probe_rng(inst: &Instance, stream: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(inst.seed ^ stream.wrapping_mul(0x9e37_79b9_7f4a_7c15))
}

fn draw(rng: &mut ChaCha8Rng, b: &[[f64; 2]], chart: usize) -> ChartPoint {
    let x: Vec<f64> = b.iter().map(|iv| rng.random_range(iv[0]..iv[1])).collect();
    ChartPoint::from_slice(chart, &x)
}

fn gap(metric: &MetricField, a: &ChartPoint, b: &ChartPoint) -> f64 {
    metric.atlas().separation(a, b)
}

pub(crate) fn retracts(ctx: &mut Context) -> Result<TaskOutput> {
    let inst = ctx.inst;
    let (fan, locus) = ctx.locus()?;
    let metric = &inst.metric;
    let tol = inst.plan.tol;
    let probes = &inst.scenario.probes;
    let bx = probe_box(inst);
    let mut rng = probe_rng(inst, 1);
    let mut points: Vec<ChartPoint> = (0..probes.count).map(|_| draw(&mut rng, &bx, probes.chart)).collect();
    points.extend(probes.points.iter().map(|x| ChartPoint::from_slice(probes.chart, x)));

    let mut rows = Vec::new();
    let mut violations = Vec::new();
    let (mut max_n, mut max_cut, mut on_cut, mut no_cut) = (0.0f64, 0.0f64, 0usize, 0usize);
    let mut traces = String::new();
    for (i, q) in points.iter().enumerate() {
        let r = match fan.retraction(q) {
            Ok(r) => r,
            Err(e) => {
                rows.push(json!({"probe": i, "x": point_json(metric, q), "error": e.to_string()}));
                violations.push(format!("probe {i}: {e}"));
                continue;
            }
        };
        let mut row = json!({"probe": i, "x": point_json(metric, q), "t": num(r.t), "rho": num(r.rho), "on_cut": r.on_cut, "segments": r.segments});
        if r.on_cut {
            on_cut += 1;
            // the homotopy onto the cut locus fixes q; the one onto N is undefined
            let moved = [0.0, 0.5, 1.0]
                .iter()
                .map(|&s| r.at(metric, Homotopy::ToCut, s, tol).map(|p| gap(metric, &p, q)))
                .collect::<Result<Vec<_>>>()?
                .into_iter()
                .fold(0.0, f64::max);
            max_cut = max_cut.max(moved);
            row["fixed_gap"] = num(moved);
            rows.push(row);
            continue;
        }
        let h0 = r.at(metric, Homotopy::ToN, 0.0, tol)?;
        let h1 = r.at(metric, Homotopy::ToN, 1.0, tol)?;
        let e_h0 = gap(metric, &h0, q);
        let e_h1 = gap(metric, &h1, &r.ray.base_point());
        max_n = max_n.max(e_h0).max(e_h1);
        row["to_n"] = json!({"start_gap": num(e_h0), "end_gap": num(e_h1)});
        if e_h0 > RETRACT_TOL || e_h1 > RETRACT_TOL {
            violations.push(format!("probe {i}: retraction onto N misses its endpoints by {e_h0:e} / {e_h1:e}"));
        }
        if r.rho.is_infinite() || r.t == 0.0 {
            no_cut += 1;
        } else {
            let c0 = r.at(metric, Homotopy::ToCut, 0.0, tol)?;
            let c1 = r.at(metric, Homotopy::ToCut, 1.0, tol)?;
            let e_c0 = gap(metric, &c0, q);
            // H(1, q) is the cut point of its ray, so d(N, H(1, q)) = ρ
            let d1 = fan.distance_to(&c1)?.d;
            let e_c1 = (d1 - r.rho).abs();
            max_cut = max_cut.max(e_c0).max(e_c1);
            row["to_cut"] = json!({"start_gap": num(e_c0), "end_distance": num(d1), "end_gap": num(e_c1)});
            if e_c0 > RETRACT_TOL || e_c1 > RETRACT_TOL {
                violations.push(format!("probe {i}: retraction onto the cut locus misses its endpoints by {e_c0:e} / {e_c1:e}"));
            }
        }
        if i < 3 {
            let tr = r.trace(metric, Homotopy::ToN, probes.homotopy_steps, tol)?;
            for line in trace_csv(metric, &tr).lines().skip(if traces.is_empty() { 0 } else { 1 }) {
                if traces.is_empty() {
                    traces.push_str("probe,");
                    traces.push_str(line);
                } else {
                    traces.push_str(&format!("{i},{line}"));
                }
                traces.push('\n');
            }
        }
        rows.push(row);
    }

    // fixed points: N under h, separating cut points under H
    let mut fixed_n = 0.0f64;
    let n_samples = crate::submanifold::sample_unit_cone(metric, &inst.spec, &ConeGrid::new(4, 1, Sides::Plus))?;
    for ray in n_samples.rays.iter().take(4) {
        let p = ray.base_point();
        let r = fan.retraction(&p)?;
        for s in [0.0, 0.5, 1.0] {
            fixed_n = fixed_n.max(gap(metric, &r.at(metric, Homotopy::ToN, s, tol)?, &p));
        }
    }
    let mut fixed_cut = 0.0f64;
    let mut fixed_cut_checked = 0;
    let seps: Vec<&CutRecord> = locus.records.iter().filter(|r| r.is_separating()).collect();
    for rec in seps.iter().step_by((seps.len() / 4).max(1)).take(4) {
        let p = rec.cut_point.as_ref().expect("separating records have cut points");
        let r = fan.retraction(p)?;
        fixed_cut_checked += 1;
        if !r.on_cut {
            violations.push(format!("cut point of record {} not recognised as a cut point", rec.index));
            continue;
        }
        for s in [0.0, 0.5, 1.0] {
            fixed_cut = fixed_cut.max(gap(metric, &r.at(metric, Homotopy::ToCut, s, tol)?, p));
        }
    }
    if fixed_n > RETRACT_TOL || fixed_cut > RETRACT_TOL {
        violations.push(format!("fixed points moved by {fixed_n:e} (N) / {fixed_cut:e} (cut locus)"));
    }
    // a non-rigorous Lipschitz surrogate of ρ between grid neighbours on
    // the same side
    let side = |r: &CutRecord| if inst.spec.is_hypersurface() { r.ray.psi.clone() } else { Vec::new() };
    let recs = &locus.records;
    let mut lip = 0.0f64;
    for (k, a) in recs.iter().enumerate() {
        let Some(b) = recs[k + 1..].iter().find(|b| side(b) == side(a)) else { continue };
        if a.rho.is_finite() && b.rho.is_finite() {
            let dv = (&a.ray.v - &b.ray.v).norm() + gap(metric, &a.ray.base_point(), &b.ray.base_point());
            lip = lip.max((a.rho - b.rho).abs() / dv.max(1e-12));
        }
    }

    let summary = json!({
        "probes": points.len(),
        "on_cut": on_cut,
        "without_cut_time": no_cut,
        "max_to_n_gap": num(max_n),
        "max_to_cut_gap": num(max_cut),
        "fixed_n_gap": num(fixed_n),
        "fixed_cut_gap": num(fixed_cut),
        "fixed_cut_checked": fixed_cut_checked,
        "rho_lipschitz_surrogate": num(lip),
        "violations": violations.len(),
    });
    let document = json!({"probes": rows, "violations": violations});
    let mut out = TaskOutput::new(summary, document);
    if !traces.is_empty() {
        out.files.push(("retracts.csv".into(), Format::Csv, traces));
    }
    out.violations = violations;
    Ok(out)
}

fn directions(n: usize, count: usize) -> Vec<Vec<f64>> {
    if n == 2 {
        return (0..count)
            .map(|k| {
                let a = TAU * k as f64 / count as f64;
                vec![a.cos(), a.sin()]
            })
            .collect();
    }
    (0..count)
        .map(|k| {
            let sign = if (k / n) % 2 == 0 { 1.0 } else { -1.0 };
            (0..n).map(|i| if i == k % n { sign } else { 0.0 }).collect()
        })
        .collect()
}

/// Probes too close to `N` or to the cut locus for a central difference.
fn near_singular(fan: &NormalFan, q: &ChartPoint, h: f64) -> Result<bool> {
    let w = fan.distance_to(q)?;
    let margin = (1000.0 * h).max(0.02);
    if w.d < margin || w.minimizers.len() > 1 {
        return Ok(true);
    }
    Ok(w.roots.iter().any(|m| m.t > w.d + 1e-7 && m.t < w.d + margin))
}

pub(crate) fn dfcheck(ctx: &mut Context) -> Result<TaskOutput> {
    let inst = ctx.inst;
    let fan = ctx.fan()?;
    let metric = &inst.metric;
    let probes = &inst.scenario.probes;
    let h = probes.fd_step;
    let dirs = directions(inst.dim(), probes.directions);
    let bx = probe_box(inst);
    let mut rng = probe_rng(inst, 2);
    let mut accepted = Vec::new();
    let mut skipped = 0;
    while accepted.len() < probes.count && skipped < 8 * probes.count.max(1) {
        let q = draw(&mut rng, &bx, probes.chart);
        if near_singular(fan, &q, h)? {
            skipped += 1;
        } else {
            accepted.push(q);
        }
    }
    let mut violations = Vec::new();
    if accepted.len() < probes.count {
        violations.push(format!("only {} of {} probes away from N and the cut locus", accepted.len(), probes.count));
    }
    let mut rows = Vec::new();
    let mut max_dev = 0.0f64;
    for (i, q) in accepted.iter().enumerate() {
        let rep = fan.check_first_variation(q, &dirs, h)?;
        max_dev = max_dev.max(rep.max_deviation);
        if rep.max_deviation > DF_TOL || !rep.differentiable {
            violations.push(format!("probe {i}: differential deviates by {:e}", rep.max_deviation));
        }
        rows.push(json!({"x": point_json(metric, q), "max_deviation": num(rep.max_deviation), "differentiable": rep.differentiable}));
    }
    let mut explicit = Vec::new();
    for x in &probes.points {
        let q = ChartPoint::from_slice(probes.chart, x);
        let rep = fan.check_first_variation(&q, &dirs, h)?;
        let one_sided: Vec<Value> = rep
            .entries
            .iter()
            .map(|e| match e.one_sided {
                Some((l, r, c)) => json!({"left": num(l), "right": num(r), "count": c, "spread": num(e.spread())}),
                None => json!({"analytic": e.analytic.map_or(Value::Null, num), "central": num(e.central)}),
            })
            .collect();
        explicit.push(json!({
            "x": point_json(metric, &q),
            "differentiable": rep.differentiable,
            "max_deviation": num(rep.max_deviation),
            "max_spread": num(rep.max_spread),
            "entries": one_sided,
        }));
    }
    let summary = json!({
        "probes": accepted.len(),
        "skipped": skipped,
        "max_deviation": num(max_dev),
        "explicit": explicit.iter().map(|e| json!({"differentiable": e["differentiable"], "max_spread": e["max_spread"]})).collect::<Vec<_>>(),
        "violations": violations.len(),
    });
    let document = json!({"step": num(h), "directions": dirs.len(), "probes": rows, "explicit": explicit, "violations": violations});
    let mut out = TaskOutput::new(summary, document);
    out.violations = violations;
    Ok(out)
}

pub(crate) fn loops(ctx: &mut Context) -> Result<TaskOutput> {
    let inst = ctx.inst;
    let (fan, locus) = ctx.locus()?;
    let metric = &inst.metric;
    let recs = &locus.records;
    let mut violations = Vec::new();
    let mut files = Vec::new();
    let (summary_loop, doc_loop) = match fan.find_geodesic_loop(recs) {
        Err(Error::Precondition(why)) => {
            (json!({"branch": "rejected"}), json!({"branch": "rejected", "reason": why}))
        }
        Err(e) => return Err(e),
        Ok(search) => {
            if let Some(l) = search.best() {
                if l.smoothness_residual > LOOP_SMOOTH_TOL {
                    violations.push(format!("loop through {:?} has smoothness residual {:e}", coords(metric, &l.x0).1, l.smoothness_residual));
                }
                let n = metric.dim();
                let mut header = vec!["t".to_string(), "chart".to_string()];
                header.extend((1..=n).map(|i| format!("x{i}")));
                let rows = l
                    .polyline(200)
                    .into_iter()
                    .map(|(t, p)| {
                        let mut row = vec![fmt_num(t), p.chart.to_string()];
                        row.extend(p.x.iter().map(|&x| fmt_num(x)));
                        row
                    })
                    .collect();
                files.push(("loops.csv".to_string(), Format::Csv, csv_text(header, rows)?));
                let body = json!({
                    "branch": "loop",
                    "x0": point_json(metric, &l.x0),
                    "d": num(l.d),
                    "length": num(l.length),
                    "smoothness_residual": num(l.smoothness_residual),
                    "t_mid": num(l.t_mid),
                    "mid_gap": num(l.mid_gap),
                    "endpoint_gap": num(l.endpoint_gap),
                    "speed_drift": num(l.speed_drift),
                });
                let doc = json!({
                    "branch": "loop",
                    "best": body.clone(),
                    "loops": search.loops.iter().map(|l| json!({"x0": point_json(metric, &l.x0), "length": num(l.length), "smoothness_residual": num(l.smoothness_residual)})).collect::<Vec<_>>(),
                    "focal": search.focal.iter().map(|f| json!({"x0": point_json(metric, &f.x0), "d": num(f.d), "lambda": num(f.lambda)})).collect::<Vec<_>>(),
                    "rejected": search.rejected.iter().map(|(p, e)| json!({"x0": point_json(metric, p), "reason": e})).collect::<Vec<_>>(),
                });
                (body, doc)
            } else {
                let f = &search.focal[0];
                let body = json!({"branch": "focal", "x0": point_json(metric, &f.x0), "d": num(f.d), "lambda": num(f.lambda)});
                (body.clone(), json!({"branch": "focal", "focal": [body]}))
            }
        }
    };
    let mut summary = json!({"loop": summary_loop});
    let mut document = json!({"loop": doc_loop});
    if let Some(target) = &inst.scenario.probes.target {
        let q = ChartPoint::from_slice(inst.scenario.probes.chart, target);
        let two = match fan.two_geodesics_to(&q, recs)? {
            TwoGeodesicsOutcome::FocalBranch { first_focal_only } => {
                json!({"branch": "focal", "first_focal_only": first_focal_only.len()})
            }
            TwoGeodesicsOutcome::Found(t) => json!({
                "branch": "found",
                "segment": t.segment.as_ref().map_or(Value::Null, |s| num(s.length)),
                "second": num(t.second.length),
                "second_residual": num(t.second.residual),
                "crossing_time": t.crossing.as_ref().map_or(Value::Null, |c| num(c.time)),
                "smooth_pairings": t.smooth_pairings(),
            }),
        };
        summary["two_geodesics"] = two.clone();
        document["two_geodesics"] = two;
    }
    summary["violations"] = Value::from(violations.len());
    document["violations"] = json!(violations);
    let mut out = TaskOutput::new(summary, document);
    out.files = files;
    out.violations = violations;
    Ok(out)
}

fn evenly<T>(xs: &[T], k: usize) -> impl Iterator<Item = &T> {
    xs.iter().step_by((xs.len() / k.max(1)).max(1)).take(k)
}

/// Largest relative gap between the Jacobi fields of `ray` and central
/// differences of `exp^ν` in its parameters, at half the usable length.
fn flow_deviation(inst: &Instance, ray: &NormalRay, rho: f64) -> Result<f64> {
    let (metric, spec, tol) = (&inst.metric, &inst.spec, inst.plan.tol);
    let t = 0.5 * if rho.is_finite() { rho } else { inst.plan.horizon };
    let frame = normal_frame(metric, spec, ray, t, tol)?;
    let (chart, j, _, _) = frame.jacobi(t);
    let k = spec.param_dim;
    let free = if spec.is_hypersurface() { 0 } else { spec.psi_free() };
    let mut worst = 0.0f64;
    for col in 0..k + free {
        let shifted = |sign: f64| -> Result<DVector<f64>> {
            let (mut th, mut ps) = (ray.theta.clone(), ray.psi.clone());
            if col < k {
                th[col] += sign * FLOW_STEP;
            } else {
                ps[col - k] += sign * FLOW_STEP;
            }
            let r = unit_normal(metric, spec, &th, &ps)?;
            let p = normal_exp(metric, &r, t, tol)?;
            metric.atlas().to_chart(&p, chart).ok_or_else(|| Error::Consistency("perturbed geodesic left the chart".into()))
        };
        let mut diff = shifted(1.0)? - shifted(-1.0)?;
        metric.atlas().reduce_displacement(diff.as_mut_slice());
        let fd = diff / (2.0 * FLOW_STEP);
        let jc = j.column(col);
        worst = worst.max((jc - fd).norm() / jc.norm().max(1.0));
    }
    Ok(worst)
}

pub(crate) fn theorems(ctx: &mut Context) -> Result<TaskOutput> {
    let inst = ctx.inst;
    let (_, locus) = ctx.locus()?;
    let metric = &inst.metric;
    let recs = &locus.records;
    let mut violations = Vec::new();

    let rl = check_rho_leq_lambda(recs);
    if !rl.pass {
        violations.push(format!("rho <= lambda or rho > 0 fails at records {:?}", rl.violations));
    }
    let unclassified: Vec<usize> =
        recs.iter().filter(|r| r.cut_point.is_some() && r.classification.is_empty()).map(|r| r.index).collect();
    if !unclassified.is_empty() {
        violations.push(format!("finite cut times without classification at records {unclassified:?}"));
    }
    let continuity = match check_rho_continuity(&inst.spec, recs, &inst.continuity) {
        Ok(c) => {
            if !c.pass {
                violations.push(format!("rho continuity flagged {} intervals", c.flagged.len()));
            }
            json!({
                "levels": c.levels.iter().map(|l| json!({"rays": l.rays, "max_jump": num(l.max_jump), "max_quotient": num(l.max_quotient)})).collect::<Vec<_>>(),
                "flagged": c.flagged.len(),
                "unresolved": c.unresolved,
                "pass": c.pass,
            })
        }
        Err(Error::Precondition(why)) => json!({"skipped": why}),
        Err(e) => return Err(e),
    };
    let density = check_se_dense(metric, recs, None);
    if !density.pass {
        violations.push(format!("Se density fails at records {:?}", density.violations));
    }

    let mut speed = 0.0f64;
    for r in evenly(recs, SPEED_RAYS) {
        let t_end = if r.rho.is_finite() { r.rho } else { inst.plan.horizon };
        let path = integrate_geodesic(metric, &r.ray.tangent(1.0), t_end, inst.plan.tol)?;
        speed = speed.max(path.speed_drift());
    }
    if speed > SPEED_TOL {
        violations.push(format!("geodesic speed drifts by {speed:e}"));
    }
    let mut flow = 0.0f64;
    let flow_applies = inst.spec.param_dim + if inst.spec.is_hypersurface() { 0 } else { inst.spec.psi_free() } > 0;
    if flow_applies {
        for r in evenly(recs, FLOW_RAYS) {
            flow = flow.max(flow_deviation(inst, &r.ray, r.rho)?);
        }
    }
    if flow > FLOW_TOL {
        violations.push(format!("linearized flow differs from finite differences by {flow:e}"));
    }

    let report = validate_metric(metric, &SamplingPlan { samples: IDENTITY_SAMPLES, seed: inst.seed, extent: 1.0 });
    if report.max_g_identity_residual > IDENTITY_TOL {
        violations.push(format!("g_v(v,v) differs from F^2 by {:e}", report.max_g_identity_residual));
    }
    let mut legendre = 0.0f64;
    let mut rng = probe_rng(inst, 3);
    let n = inst.dim();
    for _ in 0..IDENTITY_SAMPLES {
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let p = TangentVec::new(0, &x, &v);
        let back = metric.legendre_inverse(&metric.legendre(&p)?, None)?;
        legendre = legendre.max((&back.v - &p.v).norm() / p.v.norm().max(1e-12));
    }
    if legendre > IDENTITY_TOL {
        violations.push(format!("Legendre round trip misses by {legendre:e}"));
    }

    let summary = json!({
        "records": rl.checked,
        "rho_le_lambda": rl.pass,
        "max_rho_minus_lambda": num(rl.max_excess),
        "unclassified": unclassified.len(),
        "continuity": continuity["pass"].clone(),
        "density": density.pass,
        "speed_drift": num(speed),
        "flow_deviation": num(flow),
        "g_identity": num(report.max_g_identity_residual),
        "legendre_round_trip": num(legendre),
        "violations": violations.len(),
    });
    let document = json!({
        "rho_lambda": {"checked": rl.checked, "violations": rl.violations, "max_excess": num(rl.max_excess), "pass": rl.pass},
        "classification": {"unclassified": unclassified},
        "continuity": continuity,
        "density": {"delta": num(density.delta), "violations": density.violations, "pass": density.pass},
        "speed_drift": num(speed),
        "flow_deviation": num(flow),
        "g_identity": num(report.max_g_identity_residual),
        "legendre_round_trip": num(legendre),
        "violations": violations,
    });
    let mut out = TaskOutput::new(summary, document);
    out.violations = violations;
    Ok(out)
}
