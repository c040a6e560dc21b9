//! A cached fan of sampled normal geodesics, used to seed shooting.

use rayon::prelude::*;

use super::shoot::{distinct, shoot, DistanceWitness, Minimizer};
use crate::atlas::ChartPoint;
use crate::error::{Error, Result};
use crate::geodesic::{integrate_geodesic, OdeTolerances};
use crate::metric::MetricField;
use crate::submanifold::{normal_exp, sample_unit_cone, unit_normal, ConeGrid, NormalRay, Sides, SubmanifoldSpec};

/// Settings for multistart shooting and cut-time bisection.
#[derive(Clone, Debug, PartialEq)]
pub struct DistancePlan {
    /// Seed grid over `S(ν)`.
    pub grid: ConeGrid,
    /// Cut times are searched in `(0, horizon]`; the fan reaches twice as far
    /// so that unboundedness can be confirmed.
    pub horizon: f64,
    pub tol: OdeTolerances,
    /// Target position residual of shooting.
    pub newton_tol: f64,
    /// Largest residual accepted when shooting stalls.
    pub accept_tol: f64,
    pub max_iterations: usize,
    /// Threshold separating distinct minimizers (radians, or coordinate
    /// units between base points).
    pub distinct_angle: f64,
    pub max_seeds: usize,
    /// Fan samples per ray over `[0, 2·horizon]`.
    pub samples_per_ray: usize,
    pub bisection_tol: f64,
    /// `γ(t)` counts as minimizing when `d(N, γ(t)) ≥ t − slack`.
    pub minimality_slack: f64,
    /// `|ρ − λ|` below which a cut point counts as a first focal point.
    pub focal_match: f64,
}

impl DistancePlan {
    pub fn new(horizon: f64) -> Self {
        DistancePlan {
            grid: ConeGrid::new(128, 64, Sides::Both),
            horizon,
            tol: OdeTolerances::default(),
            newton_tol: 1e-10,
            accept_tol: 1e-8,
            max_iterations: 40,
            distinct_angle: 1e-3,
            max_seeds: 16,
            samples_per_ray: 256,
            bisection_tol: 1e-6,
            minimality_slack: 1e-6,
            focal_match: 1e-5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("horizon", self.horizon),
            ("newton_tol", self.newton_tol),
            ("accept_tol", self.accept_tol),
            ("distinct_angle", self.distinct_angle),
            ("bisection_tol", self.bisection_tol),
            ("minimality_slack", self.minimality_slack),
            ("focal_match", self.focal_match),
            ("ode rel", self.tol.rel),
            ("ode abs", self.tol.abs),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Precondition(format!("{name} must be positive, got {v}")));
            }
        }
        if self.max_iterations == 0 || self.max_seeds == 0 || self.samples_per_ray < 4 {
            return Err(Error::Precondition("iteration, seed and sample counts must be positive".into()));
        }
        Ok(())
    }
}

impl Default for DistancePlan {
    fn default() -> Self {
        Self::new(2.0)
    }
}

/// How fan samples are compared with a query point.
#[derive(Clone, Copy, Debug, PartialEq)]
enum KeyMode {
    /// Single chart, coordinates reduced modulo the lattice.
    Chart,
    /// Two-chart sphere, compared through the embedding.
    Sphere,
    /// Anything else: chart-aware separation.
    Generic,
}

#[derive(Clone, Debug)]
struct Track {
    keys: Vec<f64>,
    points: Vec<ChartPoint>,
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct Seed {
    pub ray: usize,
    pub t: f64,
    pub miss: f64,
}

/// The normal geodesics of a grid over `S(ν)`, sampled up to twice the
/// horizon. Built once and shared read-only by distance queries.
#[derive(Clone, Debug)]
pub struct NormalFan {
    metric: MetricField,
    spec: SubmanifoldSpec,
    plan: DistancePlan,
    rays: Vec<NormalRay>,
    neighbors: Vec<Vec<usize>>,
    tracks: Vec<Track>,
    dt: f64,
    mode: KeyMode,
    key_dim: usize,
    pub failures: Vec<(Vec<f64>, Vec<f64>, Error)>,
}

impl NormalFan {
    pub fn build(metric: &MetricField, spec: &SubmanifoldSpec, plan: &DistancePlan) -> Result<Self> {
        plan.validate()?;
        if spec.ambient_dim != metric.dim() {
            return Err(Error::Precondition(format!(
                "submanifold lives in dimension {}, manifold has dimension {}",
                spec.ambient_dim,
                metric.dim()
            )));
        }
        let atlas = metric.atlas();
        let mode = if atlas.chart_count() == 1 {
            KeyMode::Chart
        } else if atlas.sphere_embedding(&ChartPoint::from_slice(0, &vec![0.0; atlas.dim])).is_some() {
            KeyMode::Sphere
        } else {
            KeyMode::Generic
        };
        let key_dim = match mode {
            KeyMode::Chart => atlas.dim,
            KeyMode::Sphere => atlas.dim + 1,
            KeyMode::Generic => 0,
        };
        let mut grid = plan.grid.clone();
        grid.sides = Sides::Both;
        let sample = sample_unit_cone(metric, spec, &grid)?;
        if sample.rays.is_empty() {
            return Err(Error::Precondition("no unit normal could be constructed on the seed grid".into()));
        }
        let span = 2.0 * plan.horizon;
        let count = plan.samples_per_ray;
        let dt = span / count as f64;
        let mut failures = sample.failures;
        let integrated: Vec<(Track, Option<Error>)> = sample
            .rays
            .par_iter()
            .map(|ray| {
                let mut points = Vec::with_capacity(count + 1);
                let err = match integrate_geodesic(metric, &ray.tangent(1.0), span, plan.tol) {
                    Ok(path) => {
                        points.extend((0..=count).map(|i| path.point((i as f64 * dt).min(span))));
                        None
                    }
                    Err(e) => {
                        points.push(ray.base_point());
                        Some(e)
                    }
                };
                let mut keys = Vec::with_capacity(points.len() * key_dim);
                for p in &points {
                    keys.extend(key_of(metric, mode, p));
                }
                (Track { keys, points }, err)
            })
            .collect();
        let mut tracks = Vec::with_capacity(integrated.len());
        for (ray, (track, err)) in sample.rays.iter().zip(integrated) {
            if let Some(e) = err {
                failures.push((ray.theta.clone(), ray.psi.clone(), e));
            }
            tracks.push(track);
        }
        let neighbors = neighbor_lists(spec, &sample.rays);
        Ok(NormalFan {
            metric: metric.clone(),
            spec: spec.clone(),
            plan: plan.clone(),
            rays: sample.rays,
            neighbors,
            tracks,
            dt,
            mode,
            key_dim,
            failures,
        })
    }

    pub fn metric(&self) -> &MetricField {
        &self.metric
    }

    pub fn spec(&self) -> &SubmanifoldSpec {
        &self.spec
    }

    pub fn plan(&self) -> &DistancePlan {
        &self.plan
    }

    pub fn rays(&self) -> &[NormalRay] {
        &self.rays
    }

    /// Same geodesics with another plan (tolerances, thresholds). The grid
    /// and horizon of the original plan are kept.
    pub fn with_plan(&self, plan: &DistancePlan) -> Result<Self> {
        plan.validate()?;
        let mut out = self.clone();
        out.plan = DistancePlan { grid: self.plan.grid.clone(), horizon: self.plan.horizon, ..plan.clone() };
        Ok(out)
    }

    fn miss(&self, qk: &[f64], q: &ChartPoint, track: &Track, i: usize) -> f64 {
        match self.mode {
            KeyMode::Chart => {
                let k = &track.keys[i * self.key_dim..(i + 1) * self.key_dim];
                let mut d: Vec<f64> = k.iter().zip(qk).map(|(a, b)| a - b).collect();
                self.metric.atlas().reduce_displacement(&mut d);
                d.iter().map(|c| c * c).sum::<f64>().sqrt()
            }
            KeyMode::Sphere => {
                let k = &track.keys[i * self.key_dim..(i + 1) * self.key_dim];
                k.iter().zip(qk).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
            }
            KeyMode::Generic => self.metric.atlas().separation(&track.points[i], q),
        }
    }

    /// Closest approaches of fan geodesics to `q`, thinned so that each
    /// cluster of neighboring rays contributes one seed.
    pub(crate) fn seeds(&self, q: &ChartPoint) -> Vec<Seed> {
        let qk = key_of(&self.metric, self.mode, q);
        let point_source = !self.spec.is_hypersurface();
        let mut pool: Vec<Seed> = Vec::new();
        for (j, track) in self.tracks.iter().enumerate() {
            let len = track.points.len();
            if len < 2 {
                continue;
            }
            let miss: Vec<f64> = (0..len).map(|i| self.miss(&qk, q, track, i)).collect();
            let mut local: Vec<Seed> = Vec::new();
            for i in 0..len {
                let left = i == 0 || miss[i] <= miss[i - 1];
                let right = i + 1 == len || miss[i] <= miss[i + 1];
                if left && right {
                    let t = if i == 0 && point_source { 0.5 * self.dt } else { i as f64 * self.dt };
                    local.push(Seed { ray: j, t, miss: miss[i] });
                }
            }
            local.sort_by(|a, b| a.miss.total_cmp(&b.miss));
            pool.extend(local.into_iter().take(3));
        }
        pool.sort_by(|a, b| a.miss.total_cmp(&b.miss).then(a.t.total_cmp(&b.t)).then(a.ray.cmp(&b.ray)));
        let mut chosen: Vec<Seed> = Vec::new();
        for s in pool {
            if chosen.len() >= self.plan.max_seeds {
                break;
            }
            let near = chosen.iter().any(|c| {
                (c.ray == s.ray || self.neighbors[s.ray].contains(&c.ray)) && (c.t - s.t).abs() < 3.0 * self.dt
            });
            if !near {
                chosen.push(s);
            }
        }
        chosen
    }

    /// Multistart shooting from the fan seeds, keeping distinct roots.
    pub fn distance_to(&self, q: &ChartPoint) -> Result<DistanceWitness> {
        let atlas = self.metric.atlas();
        atlas.check(q.chart, q.x.as_slice())?;
        if let Some(w) = self.point_source_origin(q)? {
            return Ok(w);
        }
        let seeds = self.seeds(q);
        let shots: Vec<Option<Minimizer>> = seeds
            .par_iter()
            .map(|s| {
                let ray = &self.rays[s.ray];
                shoot(&self.metric, &self.spec, q, &ray.theta, &ray.psi, s.t, &self.plan)
            })
            .collect();
        let mut found: Vec<Minimizer> = shots.into_iter().flatten().collect();
        if found.is_empty() {
            let closest = seeds.iter().map(|s| s.miss).fold(f64::INFINITY, f64::min);
            let reason = if closest > 0.1 * self.plan.horizon {
                format!(
                    "no fan geodesic passes within {closest:.3e} of the point; the horizon {} is likely too small",
                    self.plan.horizon
                )
            } else {
                format!(
                    "shooting failed from all {} seeds; the grid of {} rays is likely too coarse",
                    seeds.len(),
                    self.rays.len()
                )
            };
            return Err(Error::Unreached { reason });
        }
        Ok(self.witness(q, &mut found))
    }

    pub(crate) fn witness(&self, q: &ChartPoint, found: &mut [Minimizer]) -> DistanceWitness {
        found.sort_by(|a, b| a.t.total_cmp(&b.t));
        let mut roots: Vec<Minimizer> = Vec::new();
        for m in found.iter() {
            if roots.iter().all(|r| distinct(&self.metric, r, m, self.plan.distinct_angle)) {
                roots.push(m.clone());
            }
        }
        let d = roots[0].t;
        let minimizers = roots.iter().filter(|r| r.t <= d + 1e-6).cloned().collect();
        DistanceWitness { q: q.clone(), d, minimizers, roots }
    }

    /// `q` equal to a point submanifold: distance zero along every ray.
    fn point_source_origin(&self, q: &ChartPoint) -> Result<Option<DistanceWitness>> {
        if !self.spec.is_point() {
            return Ok(None);
        }
        let p = self.spec.point_at(&[]);
        if self.metric.atlas().separation(&p, q) > 1e-12 {
            return Ok(None);
        }
        let psi = vec![0.0; self.spec.psi_dim()];
        let ray = unit_normal(&self.metric, &self.spec, &[], &psi)?;
        let terminal = ray.tangent(1.0);
        let m = Minimizer { ray, t: 0.0, residual: 0.0, terminal };
        Ok(Some(DistanceWitness { q: q.clone(), d: 0.0, minimizers: vec![m.clone()], roots: vec![m] }))
    }

    /// Whether the normal geodesic of `ray` still minimizes at time `t`,
    /// with the witness computed at `γ(t)`.
    pub fn minimality(&self, ray: &NormalRay, t: f64) -> Result<(bool, DistanceWitness)> {
        if !(t > 0.0) {
            return Err(Error::Precondition("minimality is tested at t > 0".into()));
        }
        let q = normal_exp(&self.metric, ray, t, self.plan.tol)?;
        let mut w = self.distance_to(&q)?;
        // the ray itself is always a candidate
        if let Some(own) = shoot(&self.metric, &self.spec, &q, &ray.theta, &ray.psi, t, &self.plan) {
            let mut all = w.roots.clone();
            all.push(own);
            w = self.witness(&q, &mut all);
        }
        Ok((w.d >= t - self.plan.minimality_slack, w))
    }

    pub fn is_minimizing(&self, ray: &NormalRay, t: f64) -> Result<bool> {
        Ok(self.minimality(ray, t)?.0)
    }
}

fn key_of(metric: &MetricField, mode: KeyMode, p: &ChartPoint) -> Vec<f64> {
    match mode {
        KeyMode::Chart => p.x.iter().cloned().collect(),
        KeyMode::Sphere => metric.atlas().sphere_embedding(p).map(|e| e.iter().cloned().collect()).unwrap_or_default(),
        KeyMode::Generic => Vec::new(),
    }
}

/// The `2·dim S(ν)` nearest grid rays of each ray, measured in the
/// parameters (wrapped when periodic) together with the coordinate
/// direction of the normal. Opposite sides of a hypersurface never neighbor.
fn neighbor_lists(spec: &SubmanifoldSpec, rays: &[NormalRay]) -> Vec<Vec<usize>> {
    let k = (2 * (spec.param_dim + spec.psi_free())).max(1);
    let dist = |a: &NormalRay, b: &NormalRay| -> f64 {
        if spec.is_hypersurface() && a.psi[0] != b.psi[0] {
            return f64::INFINITY;
        }
        let mut acc = 0.0;
        for i in 0..spec.param_dim {
            let (lo, hi) = spec.domain[i];
            let w = hi - lo;
            let mut d = a.theta[i] - b.theta[i];
            if spec.periodic[i] {
                d -= w * (d / w).round();
            }
            let s = std::f64::consts::TAU * d / w;
            acc += s * s;
        }
        let ua = &a.v / a.v.norm();
        let ub = &b.v / b.v.norm();
        acc + (ua - ub).norm_squared()
    };
    (0..rays.len())
        .map(|i| {
            let mut others: Vec<(f64, usize)> =
                (0..rays.len()).filter(|&j| j != i).map(|j| (dist(&rays[i], &rays[j]), j)).collect();
            others.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            others.into_iter().filter(|(d, _)| d.is_finite()).take(k).map(|(_, j)| j).collect()
        })
        .collect()
}
