//! Single-BS positioning scenarios and the 2D least-squares solver.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channel::derive_seed;
use crate::exec::Exec;
use crate::features::{AodSelection, FeatureSet};
use crate::geometry::{
    bearing_from_anchor, wrap180, AnchorRef, PathSpec, Point2D, Room, ScenePlan,
};
use crate::{Error, Result};

/// Positioning scenario: which radio metrics feed the solver.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ScenarioId {
    S0,
    S1a,
    S1b,
    S1c,
    S1d,
    S2a,
    S2b,
    S2c,
    S2d,
    S2e,
    S2f,
}

impl ScenarioId {
    pub const ALL: [ScenarioId; 11] = [
        ScenarioId::S0,
        ScenarioId::S1a,
        ScenarioId::S1b,
        ScenarioId::S1c,
        ScenarioId::S1d,
        ScenarioId::S2a,
        ScenarioId::S2b,
        ScenarioId::S2c,
        ScenarioId::S2d,
        ScenarioId::S2e,
        ScenarioId::S2f,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ScenarioId::S0 => "0",
            ScenarioId::S1a => "1a",
            ScenarioId::S1b => "1b",
            ScenarioId::S1c => "1c",
            ScenarioId::S1d => "1d",
            ScenarioId::S2a => "2a",
            ScenarioId::S2b => "2b",
            ScenarioId::S2c => "2c",
            ScenarioId::S2d => "2d",
            ScenarioId::S2e => "2e",
            ScenarioId::S2f => "2f",
        }
    }

    /// Metric recipe: (anchors whose AoD is used, paths whose distance is
    /// used, whether the AoDs come from the overall channel gain).
    fn recipe(&self) -> (&'static [AnchorRef], &'static [PathSpec], bool) {
        use AnchorRef::{Bs, Ris};
        const DP: PathSpec = PathSpec::Direct;
        const RP1: PathSpec = PathSpec::Reflected { ris: 0 };
        const RP2: PathSpec = PathSpec::Reflected { ris: 1 };
        match self {
            ScenarioId::S0 => (&[Bs], &[DP], false),
            ScenarioId::S1a => (&[Bs, Ris(0)], &[], true),
            ScenarioId::S1b => (&[Bs, Ris(1)], &[], true),
            ScenarioId::S1c => (&[Bs, Ris(0), Ris(1)], &[], true),
            ScenarioId::S1d => (&[Ris(0), Ris(1)], &[], true),
            ScenarioId::S2a => (&[Bs, Ris(0)], &[DP, RP1], false),
            ScenarioId::S2b => (&[Bs, Ris(1)], &[DP, RP2], false),
            ScenarioId::S2c => (&[Bs, Ris(0), Ris(1)], &[DP, RP1, RP2], false),
            ScenarioId::S2d => (&[Ris(0)], &[RP1], false),
            ScenarioId::S2e => (&[Ris(1)], &[RP2], false),
            ScenarioId::S2f => (&[Ris(0), Ris(1)], &[RP1, RP2], false),
        }
    }

    /// True for scenarios relying on overall-gain (coarse) AoDs.
    pub fn uses_overall_gain(&self) -> bool {
        self.recipe().2
    }
}

impl fmt::Display for ScenarioId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScenarioId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        ScenarioId::ALL
            .into_iter()
            .find(|id| id.as_str().eq_ignore_ascii_case(t))
            .ok_or_else(|| Error::UnknownScenario(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeasurementKind {
    /// Angle of departure at an anchor [deg].
    Aod(AnchorRef),
    /// OTA distance of a path [m].
    Distance(PathSpec),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadioMeasurement {
    pub kind: MeasurementKind,
    pub value: f64,
    pub weight: f64,
}

/// Residual weights; angles are compared in radians, distances in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualWeights {
    pub angle: f64,
    pub distance: f64,
}

impl Default for ResidualWeights {
    fn default() -> Self {
        Self {
            angle: 1.0,
            distance: 1.0,
        }
    }
}

/// Measurement set of `scenario` from one UE's features.
pub fn build_measurements(
    scenario: ScenarioId,
    features: &FeatureSet,
    selection: AodSelection,
    weights: &ResidualWeights,
) -> Result<Vec<RadioMeasurement>> {
    let (anchors, paths, coarse) = scenario.recipe();
    let missing = |metric: String| Error::MissingMetric {
        scenario: scenario.to_string(),
        metric,
    };
    let mut out = Vec::with_capacity(anchors.len() + paths.len());
    for &anchor in anchors {
        let af = features
            .anchor(anchor)
            .ok_or_else(|| missing(format!("AoD_{}", anchor.label())))?;
        let value = if coarse {
            af.coarse_aod(selection)
        } else {
            af.fine_aod(selection)
                .ok_or_else(|| missing(format!("AoD_{} (SAGE)", anchor.label())))?
        };
        out.push(RadioMeasurement {
            kind: MeasurementKind::Aod(anchor),
            value,
            weight: weights.angle,
        });
    }
    for &path in paths {
        let value = features
            .anchor(path.anchor())
            .and_then(|af| af.distance)
            .ok_or_else(|| missing(format!("d_{}", path.label())))?;
        out.push(RadioMeasurement {
            kind: MeasurementKind::Distance(path),
            value,
            weight: weights.distance,
        });
    }
    Ok(out)
}

/// Residual assigned to an AoD whose anchor coincides with the evaluation
/// point: a half-turn, the largest possible wrapped angle error.
pub const COINCIDENT_PENALTY: f64 = std::f64::consts::PI;

/// Weighted residual vector at `p`.
pub fn residuals(
    measurements: &[RadioMeasurement],
    p: &Point2D,
    scene: &ScenePlan,
) -> Result<Vec<f64>> {
    measurements.iter().map(|m| residual(m, p, scene)).collect()
}

fn residual(m: &RadioMeasurement, p: &Point2D, scene: &ScenePlan) -> Result<f64> {
    match m.kind {
        MeasurementKind::Aod(anchor) => {
            let pose = scene.anchor(anchor)?;
            let r = match bearing_from_anchor(pose, p) {
                Ok(b) => wrap180(b - m.value).to_radians(),
                Err(_) => COINCIDENT_PENALTY,
            };
            Ok(r * m.weight)
        }
        MeasurementKind::Distance(path) => {
            let model = match path {
                PathSpec::Direct => scene.bs.position.distance(p),
                PathSpec::Reflected { ris } => {
                    let r = scene.anchor(AnchorRef::Ris(ris))?.position;
                    scene.bs_ris_distance(ris)? + r.distance(p)
                }
            };
            Ok((model - m.value) * m.weight)
        }
    }
}

/// Sum of squared residuals.
pub fn objective(measurements: &[RadioMeasurement], p: &Point2D, scene: &ScenePlan) -> Result<f64> {
    Ok(residuals(measurements, p, scene)?
        .iter()
        .map(|r| r * r)
        .sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverSettings {
    pub max_iters: usize,
    /// Stop once a step is shorter than this [m].
    pub step_tol: f64,
    /// Central-difference step for the Jacobian [m].
    pub fd_step: f64,
    /// Initial LM damping.
    pub damping: f64,
    /// Random starts per UE, shared by all scenarios; the first is the same
    /// guess for every value, so 1 gives a single-start solve.
    pub starts: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            max_iters: 100,
            step_tol: 1e-6,
            fd_step: 1e-3,
            damping: 1e-3,
            starts: 16,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LsProblem {
    pub measurements: Vec<RadioMeasurement>,
    pub room: Room,
    pub init: Point2D,
    pub settings: SolverSettings,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LsSolution {
    pub estimate: Point2D,
    pub cost: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Whether the (unclamped) estimate lies inside the room.
    pub in_room: bool,
}

const MAX_DAMPING: f64 = 1e16;

/// Levenberg-Marquardt minimization of the residual sum of squares.
///
/// The estimate is never clamped; `in_room` reports whether it left the
/// room. If the iteration budget runs out the best iterate is returned with
/// `converged = false`.
pub fn solve_ls(problem: &LsProblem, scene: &ScenePlan) -> Result<LsSolution> {
    if problem.measurements.len() < 2 {
        return Err(Error::domain(format!(
            "{} scalar measurements for 2 unknowns",
            problem.measurements.len()
        )));
    }
    if !problem.init.is_finite() {
        return Err(Error::domain("non-finite initial guess"));
    }
    let s = &problem.settings;
    let m = &problem.measurements;
    let h = s.fd_step;

    let mut x = problem.init;
    let mut r = residuals(m, &x, scene)?;
    let mut cost: f64 = r.iter().map(|v| v * v).sum();
    let mut lambda = s.damping;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < s.max_iters {
        iterations += 1;
        let rx_p = residuals(m, &Point2D::new(x.x + h, x.y), scene)?;
        let rx_m = residuals(m, &Point2D::new(x.x - h, x.y), scene)?;
        let ry_p = residuals(m, &Point2D::new(x.x, x.y + h), scene)?;
        let ry_m = residuals(m, &Point2D::new(x.x, x.y - h), scene)?;
        let (mut a11, mut a12, mut a22, mut g1, mut g2) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for i in 0..m.len() {
            let jx = (rx_p[i] - rx_m[i]) / (2.0 * h);
            let jy = (ry_p[i] - ry_m[i]) / (2.0 * h);
            a11 += jx * jx;
            a12 += jx * jy;
            a22 += jy * jy;
            g1 += jx * r[i];
            g2 += jy * r[i];
        }
        if g1 == 0.0 && g2 == 0.0 {
            converged = true;
            break;
        }

        let step = loop {
            let d11 = a11 + lambda * a11.max(1e-12);
            let d22 = a22 + lambda * a22.max(1e-12);
            let det = d11 * d22 - a12 * a12;
            let (dx, dy) = if det.abs() > 0.0 && det.is_finite() {
                ((-g1 * d22 + g2 * a12) / det, (-g2 * d11 + g1 * a12) / det)
            } else {
                (0.0, 0.0)
            };
            let norm = dx.hypot(dy);
            let cand = Point2D::new(x.x + dx, x.y + dy);
            let rc = residuals(m, &cand, scene)?;
            let cc: f64 = rc.iter().map(|v| v * v).sum();
            if cc < cost {
                x = cand;
                r = rc;
                cost = cc;
                lambda = (lambda / 10.0).max(1e-15);
                break norm;
            }
            lambda *= 10.0;
            if norm < s.step_tol || lambda > MAX_DAMPING {
                break 0.0;
            }
        };
        if step < s.step_tol {
            converged = true;
            break;
        }
    }

    Ok(LsSolution {
        estimate: x,
        cost,
        iterations,
        converged,
        in_room: problem.room.contains(&x),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioResult {
    pub scenario: ScenarioId,
    pub ue_index: usize,
    /// NaN coordinates when the scenario could not be solved.
    pub estimate: Point2D,
    /// Distance to the ground truth [m]; NaN when unsolved.
    pub error: f64,
    pub iterations: usize,
    pub converged: bool,
    pub in_room: bool,
    pub cost: f64,
    pub failure: Option<String>,
}

impl ScenarioResult {
    fn failed(scenario: ScenarioId, ue_index: usize, err: &Error) -> Self {
        Self {
            scenario,
            ue_index,
            estimate: Point2D::new(f64::NAN, f64::NAN),
            error: f64::NAN,
            iterations: 0,
            converged: false,
            in_room: false,
            cost: f64::NAN,
            failure: Some(err.to_string()),
        }
    }

    pub fn is_ok(&self) -> bool {
        self.failure.is_none()
    }
}

/// Campaign-level solver options.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CampaignOptions {
    pub selection: AodSelection,
    pub weights: ResidualWeights,
    pub solver: SolverSettings,
}

const INIT_STREAM: u64 = 0x1417;

/// Random initial guesses for one UE, uniform in the room.
pub fn initial_guesses(room: &Room, ue_index: usize, starts: usize, seed: u64) -> Vec<Point2D> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[INIT_STREAM, ue_index as u64]));
    (0..starts.max(1))
        .map(|_| {
            Point2D::new(
                rng.gen_range(room.x_min..=room.x_max),
                rng.gen_range(room.y_min..=room.y_max),
            )
        })
        .collect()
}

/// Solves one scenario for one UE from the given starts, keeping the best.
pub fn solve_scenario(
    scene: &ScenePlan,
    scenario: ScenarioId,
    features: &FeatureSet,
    inits: &[Point2D],
    opts: &CampaignOptions,
) -> ScenarioResult {
    let ue = features.ue_index;
    let attempt = || -> Result<(LsSolution, f64)> {
        let truth = scene.ue(ue)?;
        let measurements = build_measurements(scenario, features, opts.selection, &opts.weights)?;
        let mut best: Option<LsSolution> = None;
        for init in inits {
            let problem = LsProblem {
                measurements: measurements.clone(),
                room: scene.room,
                init: *init,
                settings: opts.solver,
            };
            let sol = solve_ls(&problem, scene)?;
            if best.is_none_or(|b| sol.cost < b.cost) {
                best = Some(sol);
            }
        }
        let best = best.ok_or_else(|| Error::domain("no initial guess"))?;
        Ok((best, best.estimate.distance(&truth)))
    };
    match attempt() {
        Ok((sol, error)) => ScenarioResult {
            scenario,
            ue_index: ue,
            estimate: sol.estimate,
            error,
            iterations: sol.iterations,
            converged: sol.converged,
            in_room: sol.in_room,
            cost: sol.cost,
            failure: None,
        },
        Err(e) => ScenarioResult::failed(scenario, ue, &e),
    }
}

/// Solves every scenario for every UE. Each UE gets one random initial
/// guess (or `solver.starts` guesses) shared by all scenarios. Results are
/// ordered scenario-major, then by UE; a failing scenario yields a result
/// with `failure` set and the campaign continues.
pub fn run_campaign(
    scene: &ScenePlan,
    features: &[FeatureSet],
    scenarios: &[ScenarioId],
    opts: &CampaignOptions,
    seed: u64,
    exec: Exec,
) -> Vec<ScenarioResult> {
    let inits: Vec<Vec<Point2D>> = features
        .iter()
        .map(|f| initial_guesses(&scene.room, f.ue_index, opts.solver.starts, seed))
        .collect();
    let jobs: Vec<(ScenarioId, usize)> = scenarios
        .iter()
        .flat_map(|&s| (0..features.len()).map(move |u| (s, u)))
        .collect();
    exec.map(&jobs, |&(s, u)| {
        solve_scenario(scene, s, &features[u], &inits[u], opts)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::FrequencyGrid;
    use crate::features::{exact_features, AnchorFeatures, AodCandidates};
    use crate::geometry::{AnchorKind, AnchorPose, SweepPlan};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn scene() -> ScenePlan {
        ScenePlan {
            bs: AnchorPose::new(Point2D::new(6.06, 11.6), -90.0, AnchorKind::Bs),
            ris: vec![
                AnchorPose::new(Point2D::new(4.0, 8.6), 0.0, AnchorKind::Ris),
                AnchorPose::new(Point2D::new(6.06, 5.7), 45.0, AnchorKind::Ris),
            ],
            ue_truths: vec![
                Point2D::new(7.06, 10.0),
                Point2D::new(7.06, 8.0),
                Point2D::new(7.06, 5.99),
                Point2D::new(9.06, 5.99),
                Point2D::new(11.06, 5.99),
            ],
            room: Room {
                x_min: 3.0,
                x_max: 12.0,
                y_min: 5.0,
                y_max: 12.5,
            },
            band: FrequencyGrid::new(25e9, 35e9, 10e6, 28e9).unwrap(),
            sweep: SweepPlan {
                start: -60.0,
                stop: 60.0,
                step: 5.0,
            },
        }
    }

    fn opts() -> CampaignOptions {
        CampaignOptions::default()
    }

    #[test]
    fn scenario_ids_parse() {
        for id in ScenarioId::ALL {
            assert_eq!(id.as_str().parse::<ScenarioId>().unwrap(), id);
        }
        assert!(matches!(
            "3z".parse::<ScenarioId>(),
            Err(Error::UnknownScenario(_))
        ));
        assert_eq!("2C".parse::<ScenarioId>().unwrap(), ScenarioId::S2c);
    }

    #[test]
    fn measurement_counts() {
        let s = scene();
        let f = exact_features(&s, 0, 0.0).unwrap();
        let count = |id| {
            build_measurements(id, &f, AodSelection::Genie, &ResidualWeights::default())
                .unwrap()
                .len()
        };
        assert_eq!(count(ScenarioId::S0), 2);
        assert_eq!(count(ScenarioId::S1d), 2);
        assert_eq!(count(ScenarioId::S2c), 6);
        assert_eq!(count(ScenarioId::S2f), 4);
        let m = build_measurements(
            ScenarioId::S1d,
            &f,
            AodSelection::Genie,
            &ResidualWeights::default(),
        )
        .unwrap();
        assert!(m
            .iter()
            .all(|m| !matches!(m.kind, MeasurementKind::Aod(AnchorRef::Bs))));
    }

    #[test]
    fn missing_metric_is_reported() {
        let s = scene();
        let mut f = exact_features(&s, 0, 0.0).unwrap();
        f.anchors.retain(|a| a.anchor != AnchorRef::Ris(1));
        let err = build_measurements(
            ScenarioId::S2e,
            &f,
            AodSelection::Genie,
            &ResidualWeights::default(),
        )
        .unwrap_err();
        assert!(
            err.to_string().contains("2e") && err.to_string().contains("RIS2"),
            "{err}"
        );
        let mut f = exact_features(&s, 0, 0.0).unwrap();
        f.anchors[0].distance = None;
        let err = build_measurements(
            ScenarioId::S0,
            &f,
            AodSelection::Genie,
            &ResidualWeights::default(),
        )
        .unwrap_err();
        assert!(err.to_string().contains("d_DP"), "{err}");
    }

    #[test]
    fn residual_examples() {
        let s = scene();
        let truth = s.ue_truths[0];
        let f = exact_features(&s, 0, 0.0).unwrap();
        let w = ResidualWeights {
            angle: 2.0,
            distance: 1.0,
        };
        let mut m = build_measurements(ScenarioId::S2c, &f, AodSelection::Genie, &w).unwrap();
        for r in residuals(&m, &truth, &s).unwrap() {
            assert_abs_diff_eq!(r, 0.0, epsilon = 1e-12);
        }
        m[0].value -= 5.0;
        let r = residuals(&m, &truth, &s).unwrap();
        assert_abs_diff_eq!(r[0], 5f64.to_radians() * 2.0, epsilon = 1e-12);

        // Wrapping: 179 deg measured, -179 deg modelled.
        let p = Point2D::new(-1.0, -0.01);
        let scene0 = ScenePlan {
            bs: AnchorPose::new(Point2D::new(0.0, 0.0), 0.0, AnchorKind::Bs),
            ..s.clone()
        };
        let b = bearing_from_anchor(&scene0.bs, &p).unwrap();
        let meas = [RadioMeasurement {
            kind: MeasurementKind::Aod(AnchorRef::Bs),
            value: b + 358.0 - 360.0 + 360.0 - 358.0 + 2.0 - 360.0 + 360.0,
            weight: 1.0,
        }];
        let r = residuals(&meas, &p, &scene0).unwrap();
        assert_abs_diff_eq!(r[0].abs(), 2f64.to_radians(), epsilon = 1e-9);

        let at_anchor = residuals(&m, &s.bs.position, &s).unwrap();
        assert_eq!(at_anchor[0], COINCIDENT_PENALTY * 2.0);
    }

    #[test]
    fn wrap_179_vs_minus_179() {
        let s = ScenePlan {
            bs: AnchorPose::new(Point2D::new(0.0, 0.0), 0.0, AnchorKind::Bs),
            ..scene()
        };
        let p = Point2D::new((-179f64).to_radians().cos(), (-179f64).to_radians().sin());
        let meas = [RadioMeasurement {
            kind: MeasurementKind::Aod(AnchorRef::Bs),
            value: 179.0,
            weight: 1.0,
        }];
        let r = residuals(&meas, &p, &s).unwrap();
        assert_abs_diff_eq!(r[0].abs(), 2f64.to_radians(), epsilon = 1e-9);
    }

    #[test]
    fn two_bearings_recover_truth() {
        let s = scene();
        let truth = s.ue_truths[0];
        let f = exact_features(&s, 0, 0.0).unwrap();
        let m = build_measurements(
            ScenarioId::S1a,
            &f,
            AodSelection::Genie,
            &ResidualWeights::default(),
        )
        .unwrap();
        let p = LsProblem {
            measurements: m,
            room: s.room,
            init: Point2D::new(10.0, 6.0),
            settings: SolverSettings::default(),
        };
        let sol = solve_ls(&p, &s).unwrap();
        assert!(sol.converged);
        assert!(sol.estimate.distance(&truth) < 1e-6, "{sol:?}");

        // Closed-form intersection of the two bearing lines.
        let a = s.bs.position;
        let b = s.ris[0].position;
        let ta = (f.anchors[0].ground_truth_aod + s.bs.boresight).to_radians();
        let tb = (f.anchors[1].ground_truth_aod + s.ris[0].boresight).to_radians();
        let (ux, uy, vx, vy) = (ta.cos(), ta.sin(), tb.cos(), tb.sin());
        let det = -ux * vy + uy * vx;
        let t = (-(b.x - a.x) * vy + (b.y - a.y) * vx) / det;
        let x = Point2D::new(a.x + t * ux, a.y + t * uy);
        assert!(sol.estimate.distance(&x) < 1e-6);
    }

    #[test]
    fn polar_fix_recovers_truth() {
        let s = scene();
        for ue in 0..5 {
            let f = exact_features(&s, ue, 0.0).unwrap();
            let m = build_measurements(
                ScenarioId::S0,
                &f,
                AodSelection::Genie,
                &ResidualWeights::default(),
            )
            .unwrap();
            let p = LsProblem {
                measurements: m,
                room: s.room,
                init: Point2D::new(3.5, 12.0),
                settings: SolverSettings::default(),
            };
            let sol = solve_ls(&p, &s).unwrap();
            assert!(
                sol.estimate.distance(&s.ue_truths[ue]) < 1e-6,
                "ue {ue}: {sol:?}"
            );
            assert!(sol.in_room);
        }
    }

    #[test]
    fn too_few_measurements() {
        let s = scene();
        let p = LsProblem {
            measurements: vec![RadioMeasurement {
                kind: MeasurementKind::Aod(AnchorRef::Bs),
                value: 0.0,
                weight: 1.0,
            }],
            room: s.room,
            init: Point2D::new(5.0, 5.0),
            settings: SolverSettings::default(),
        };
        assert!(solve_ls(&p, &s).is_err());
    }

    #[test]
    fn iteration_budget_is_flagged() {
        let s = scene();
        let f = exact_features(&s, 4, 0.0).unwrap();
        let m = build_measurements(
            ScenarioId::S1d,
            &f,
            AodSelection::Genie,
            &ResidualWeights::default(),
        )
        .unwrap();
        let p = LsProblem {
            measurements: m,
            room: s.room,
            init: Point2D::new(3.2, 12.3),
            settings: SolverSettings {
                max_iters: 1,
                ..SolverSettings::default()
            },
        };
        let sol = solve_ls(&p, &s).unwrap();
        assert!(!sol.converged);
        assert_eq!(sol.iterations, 1);
    }

    #[test]
    fn campaign_shape_and_determinism() {
        let s = scene();
        let feats: Vec<_> = (0..5)
            .map(|u| exact_features(&s, u, 0.0).unwrap())
            .collect();
        let a = run_campaign(&s, &feats, &ScenarioId::ALL, &opts(), 9, Exec::Sequential);
        let b = run_campaign(&s, &feats, &ScenarioId::ALL, &opts(), 9, Exec::Parallel);
        assert_eq!(a.len(), 55);
        assert_eq!(a, b);
        assert!(a.iter().all(|r| r.is_ok() && r.error < 1e-5), "{a:?}");
    }

    #[test]
    fn campaign_continues_past_failures() {
        let s = scene();
        let mut feats: Vec<_> = (0..5)
            .map(|u| exact_features(&s, u, 0.0).unwrap())
            .collect();
        feats[2].anchors[1].fine = None;
        let res = run_campaign(&s, &feats, &ScenarioId::ALL, &opts(), 1, Exec::Sequential);
        assert_eq!(res.len(), 55);
        let failed: Vec<_> = res.iter().filter(|r| !r.is_ok()).collect();
        // 2a, 2c, 2d, 2f at UE3 need the SAGE AoD of RIS1.
        assert_eq!(failed.len(), 4);
        assert!(failed.iter().all(|r| r.ue_index == 2 && r.error.is_nan()));
    }

    #[test]
    fn wrong_candidate_hurts_scenario_1_at_ue1() {
        let s = scene();
        let exact = exact_features(&s, 0, 0.0).unwrap();
        let inits = [Point2D::new(8.0, 9.0)];
        let cases = [
            (ScenarioId::S1a, 0),
            (ScenarioId::S1b, 1),
            (ScenarioId::S1c, 0),
            (ScenarioId::S1d, 0),
        ];
        for (id, ris) in cases {
            let good = solve_scenario(&s, id, &exact, &inits, &opts());
            let mut worse = exact.clone();
            let af: &mut AnchorFeatures = worse
                .anchors
                .iter_mut()
                .find(|a| a.anchor == AnchorRef::Ris(ris))
                .unwrap();
            af.coarse = AodCandidates {
                top: vec![af.ground_truth_aod - 30.0],
            };
            let bad = solve_scenario(&s, id, &worse, &inits, &opts());
            assert!(
                bad.error > good.error,
                "{id}: {} vs {}",
                bad.error,
                good.error
            );
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn translation_equivariance(dx in -20.0f64..20.0, dy in -20.0f64..20.0,
                                    ue in 0usize..5, sid in 0usize..11,
                                    ix in 3.0f64..12.0, iy in 5.0f64..12.5) {
            let s = scene();
            let id = ScenarioId::ALL[sid];
            let mut f = exact_features(&s, ue, 0.0).unwrap();
            // Perturb the metrics so the problem is not trivially exact.
            for a in f.anchors.iter_mut() {
                a.coarse.top[0] += 1.5;
                if let Some(fi) = a.fine.as_mut() { fi.top[0] -= 0.7; }
                a.distance = a.distance.map(|d| d + 0.05);
                a.ground_truth_aod = a.coarse.top[0];
            }
            let st = s.translated(dx, dy);
            let a = solve_scenario(&s, id, &f, &[Point2D::new(ix, iy)], &opts());
            let b = solve_scenario(&st, id, &f, &[Point2D::new(ix + dx, iy + dy)], &opts());
            prop_assert!((a.estimate.x + dx - b.estimate.x).abs() < 1e-4);
            prop_assert!((a.estimate.y + dy - b.estimate.y).abs() < 1e-4);
        }

        #[test]
        fn accepted_steps_never_raise_cost(ix in 3.0f64..12.0, iy in 5.0f64..12.5,
                                           ue in 0usize..5, sid in 0usize..11, iters in 1usize..8) {
            let s = scene();
            let f = exact_features(&s, ue, 0.0).unwrap();
            let m = build_measurements(ScenarioId::ALL[sid], &f, AodSelection::Genie, &ResidualWeights::default()).unwrap();
            let init = Point2D::new(ix, iy);
            let c0 = objective(&m, &init, &s).unwrap();
            let mut prev = c0;
            for k in 1..=iters {
                let p = LsProblem { measurements: m.clone(), room: s.room, init,
                    settings: SolverSettings { max_iters: k, ..SolverSettings::default() } };
                let sol = solve_ls(&p, &s).unwrap();
                prop_assert!(sol.cost <= prev + 1e-15);
                prev = sol.cost;
            }
        }
    }
}
