//! Turns a parsed scenario into the metric, submanifold and plans it names.

use std::sync::Arc;

use super::{Grids, ManifoldType, MetricBlock, RiemannianKind, Scenario, SidesBlock, SubmanifoldBlock};
use crate::atlas::ManifoldAtlas;
use crate::error::{Error, Result};
use crate::focal_cut::{ContinuityPlan, DistancePlan};
use crate::geodesic::OdeTolerances;
use crate::metric::{MetricField, RiemannianModel};
use crate::submanifold::{ConeGrid, Sides, SubmanifoldSpec};

/// Fan size when the scenario leaves it open.
const POINT_FAN_PSI: usize = 64;
const CURVE_FAN_THETA: usize = 128;

/// Everything a run needs, built once from the scenario.
#[derive(Clone, Debug)]
pub struct Instance {
    pub scenario: Scenario,
    pub metric: MetricField,
    pub spec: SubmanifoldSpec,
    /// Multistart fan and shooting settings.
    pub plan: DistancePlan,
    /// Rays whose cut data is reported.
    pub grid: ConeGrid,
    pub continuity: ContinuityPlan,
    pub seed: u64,
}

fn config(pointer: &str, e: impl std::fmt::Display) -> Error {
    Error::Config { pointer: pointer.to_string(), message: e.to_string() }
}

impl Instance {
    /// `seed` and `refine` override the scenario values when given.
    pub fn new(scenario: &Scenario, seed: Option<u64>, refine: Option<usize>) -> Result<Self> {
        scenario.validate()?;
        let s = scenario;
        let atlas = Arc::new(match s.manifold.kind {
            ManifoldType::Flat => ManifoldAtlas::euclidean(s.manifold.dim),
            ManifoldType::Torus => ManifoldAtlas::torus(s.manifold.periods.as_deref().unwrap_or(&[]))?,
            ManifoldType::SphereStereo => ManifoldAtlas::sphere_stereographic(s.manifold.dim),
        });
        let metric = build_metric(s, atlas)?;
        let spec = build_spec(&s.submanifold)?;
        let n_grid = fan_grid(&s.grids, &spec);
        let t = &s.tolerances;
        let plan = DistancePlan {
            grid: n_grid,
            tol: OdeTolerances { rel: t.ode_rel, abs: t.ode_abs },
            newton_tol: t.newton,
            bisection_tol: t.bisection,
            distinct_angle: t.distinct_angle,
            ..DistancePlan::new(s.grids.horizon)
        };
        plan.validate().map_err(|e| config("/tolerances", e))?;
        let grid = ConeGrid::new(s.grids.theta_count, s.grids.psi_count, sides(s.grids.sides));
        let continuity = ContinuityPlan { levels: refine.unwrap_or(s.grids.refinement_levels), ..ContinuityPlan::default() };
        Ok(Instance {
            scenario: s.clone(),
            metric,
            spec,
            plan,
            grid,
            continuity,
            seed: seed.unwrap_or(s.seed),
        })
    }

    pub fn dim(&self) -> usize {
        self.metric.dim()
    }
}

fn sides(s: SidesBlock) -> Sides {
    match s {
        SidesBlock::Both => Sides::Both,
        SidesBlock::Plus => Sides::Plus,
        SidesBlock::Minus => Sides::Minus,
    }
}

fn fan_grid(g: &Grids, spec: &SubmanifoldSpec) -> ConeGrid {
    let (theta, psi) = if spec.param_dim == 0 {
        (1, g.fan_psi_count.unwrap_or(POINT_FAN_PSI))
    } else {
        (g.fan_theta_count.unwrap_or(CURVE_FAN_THETA), g.fan_psi_count.unwrap_or(1))
    };
    ConeGrid::new(theta, psi, Sides::Both)
}

fn build_metric(s: &Scenario, atlas: Arc<ManifoldAtlas>) -> Result<MetricField> {
    let on_sphere = s.manifold.kind == ManifoldType::SphereStereo;
    let family_ok = matches!(s.metric, MetricBlock::Riemannian { model: RiemannianKind::RoundSphere, .. });
    if on_sphere && !family_ok {
        return Err(config("/metric/family", "the sphere-stereo manifold carries the round-sphere metric only"));
    }
    match &s.metric {
        MetricBlock::Riemannian { model, matrix } => {
            let model = match model {
                RiemannianKind::Euclidean => RiemannianModel::Euclidean,
                RiemannianKind::RoundSphere => RiemannianModel::RoundSphere,
                RiemannianKind::Constant => RiemannianModel::Constant(matrix.clone().unwrap_or_default()),
            };
            MetricField::riemannian(atlas, model).map_err(|e| config("/metric/matrix", e))
        }
        MetricBlock::Randers { a, b } => MetricField::randers(atlas, a.clone(), b.clone()).map_err(|e| config("/metric/b", e)),
        MetricBlock::MinkowskiQuartic { epsilon } => {
            MetricField::minkowski_quartic(atlas, *epsilon).map_err(|e| config("/metric/epsilon", e))
        }
    }
}

fn build_spec(b: &SubmanifoldBlock) -> Result<SubmanifoldSpec> {
    let at = |e: Error| config("/submanifold", e);
    match b {
        SubmanifoldBlock::Point { chart, point } => Ok(SubmanifoldSpec::point(*chart, point)),
        SubmanifoldBlock::Circle { chart, center, radius } => SubmanifoldSpec::circle(*chart, *center, *radius).map_err(at),
        SubmanifoldBlock::Ellipse { chart, center, a, b } => SubmanifoldSpec::ellipse(*chart, *center, *a, *b).map_err(at),
        SubmanifoldBlock::AxisLine { chart, origin, axis, half_length } => {
            SubmanifoldSpec::axis_line(*chart, origin, *axis, *half_length).map_err(at)
        }
        SubmanifoldBlock::SampledCurve { chart, samples, csv, closed } => {
            if let Some(rows) = samples {
                let thetas: Vec<f64> = rows.iter().map(|r| r[0]).collect();
                let points: Vec<Vec<f64>> = rows.iter().map(|r| r[1..].to_vec()).collect();
                SubmanifoldSpec::sampled_curve(*chart, &thetas, &points, *closed).map_err(at)
            } else {
                let path = csv.as_deref().unwrap_or_default();
                let text = std::fs::read_to_string(path).map_err(|e| config("/submanifold/csv", format!("{path}: {e}")))?;
                SubmanifoldSpec::sampled_curve_csv(*chart, &text, *closed).map_err(at)
            }
        }
    }
}
