//! Location-dependent radio features from beam sweeps.
//!
//! Coarse AoDs rank pointing angles by the overall channel gain; fine AoDs
//! rank them by the power of the isolated path (direct path for the BS
//! sweep, reflected path for a RIS sweep). Isolation is genie-aided: the
//! strongest MPC inside a distance/AoA window around the geometric
//! expectation is kept.
//!
//! Every ranking keeps the three strongest pointing angles, breaking ties
//! toward the smaller |angle| and then toward the positive angle.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::geometry::{aoa_at_ue, ota_distance, path_aod, wrap180, AnchorRef, PathSpec, ScenePlan};
use crate::sage::MpcEstimate;
use crate::{Error, Result};

/// Genie isolation tolerances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IsolationWindow {
    /// Half-width in OTA distance [m].
    pub distance: f64,
    /// Half-width in AoA [deg].
    pub angle: f64,
}

impl Default for IsolationWindow {
    fn default() -> Self {
        Self {
            distance: 1.0,
            angle: 15.0,
        }
    }
}

/// Strongest MPC inside the window around the expected (distance, AoA).
pub fn isolate_mpc(
    mpcs: &[MpcEstimate],
    expected_distance: f64,
    expected_aoa: f64,
    window: &IsolationWindow,
) -> Option<MpcEstimate> {
    mpcs.iter()
        .filter(|m| {
            (m.ota_distance - expected_distance).abs() <= window.distance
                && wrap180(m.aoa - expected_aoa).abs() <= window.angle
        })
        .max_by(|a, b| a.power_db.total_cmp(&b.power_db))
        .copied()
}

/// One acquisition of a sweep after extraction.
#[derive(Debug, Clone, PartialEq)]
pub struct Acquisition {
    pub pointing: f64,
    pub overall_gain_db: f64,
    pub mpcs: Vec<MpcEstimate>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSeries {
    pub pointing_angles: Vec<f64>,
    pub overall_gain_db: Vec<f64>,
    pub isolated: Vec<Option<MpcEstimate>>,
}

impl SweepSeries {
    pub fn new(
        pointing_angles: Vec<f64>,
        overall_gain_db: Vec<f64>,
        isolated: Vec<Option<MpcEstimate>>,
    ) -> Result<Self> {
        if pointing_angles.len() != overall_gain_db.len() || pointing_angles.len() != isolated.len()
        {
            return Err(Error::Dimension {
                expected: format!("{} entries per column", pointing_angles.len()),
                actual: format!("{} / {}", overall_gain_db.len(), isolated.len()),
            });
        }
        if pointing_angles.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::domain("sweep angles must be strictly increasing"));
        }
        Ok(Self {
            pointing_angles,
            overall_gain_db,
            isolated,
        })
    }

    /// Builds the series of one path from extracted acquisitions.
    pub fn from_acquisitions(
        acqs: &[Acquisition],
        expected_distance: f64,
        expected_aoa: f64,
        window: &IsolationWindow,
    ) -> Result<Self> {
        let mut sorted: Vec<&Acquisition> = acqs.iter().collect();
        sorted.sort_by(|a, b| a.pointing.total_cmp(&b.pointing));
        Self::new(
            sorted.iter().map(|a| a.pointing).collect(),
            sorted.iter().map(|a| a.overall_gain_db).collect(),
            sorted
                .iter()
                .map(|a| isolate_mpc(&a.mpcs, expected_distance, expected_aoa, window))
                .collect(),
        )
    }

    pub fn isolated_at(&self, pointing: f64) -> Option<MpcEstimate> {
        self.pointing_angles
            .iter()
            .position(|&a| (a - pointing).abs() < 1e-9)
            .and_then(|i| self.isolated[i])
    }
}

// (angle, score): score descending, then |angle| ascending, then angle descending.
fn rank_order(a: (f64, f64), b: (f64, f64)) -> Ordering {
    b.1.total_cmp(&a.1)
        .then(a.0.abs().total_cmp(&b.0.abs()))
        .then(b.0.total_cmp(&a.0))
}

fn top3(scored: impl Iterator<Item = (f64, f64)>) -> Vec<f64> {
    let mut v: Vec<(f64, f64)> = scored.collect();
    v.sort_by(|a, b| rank_order(*a, *b));
    v.into_iter().take(3).map(|(a, _)| a).collect()
}

/// Up to three AoD candidates, strongest first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AodCandidates {
    pub top: Vec<f64>,
}

impl AodCandidates {
    pub fn top1(&self) -> f64 {
        self.top[0]
    }
}

/// Pointing angles ranked by overall channel gain.
pub fn coarse_aod(series: &SweepSeries) -> Result<AodCandidates> {
    if series.pointing_angles.is_empty() {
        return Err(Error::domain("empty sweep series"));
    }
    let top = top3(
        series
            .pointing_angles
            .iter()
            .copied()
            .zip(series.overall_gain_db.iter().copied()),
    );
    Ok(AodCandidates { top })
}

/// Pointing angles ranked by isolated-MPC power. Angles without an isolated
/// MPC rank below every angle with one and are never proposed.
pub fn fine_aod(series: &SweepSeries, path: &str) -> Result<AodCandidates> {
    let top = top3(
        series
            .pointing_angles
            .iter()
            .zip(&series.isolated)
            .filter_map(|(&a, m)| m.map(|m| (a, m.power_db))),
    );
    if top.is_empty() {
        return Err(Error::Unobservable(path.to_string()));
    }
    Ok(AodCandidates { top })
}

/// Genie selection: the candidate closest to the ground truth (ties toward
/// the smaller |angle|).
pub fn best_candidate(candidates: &[f64], ground_truth: f64) -> Option<f64> {
    candidates.iter().copied().min_by(|a, b| {
        wrap180(a - ground_truth)
            .abs()
            .total_cmp(&wrap180(b - ground_truth).abs())
            .then(a.abs().total_cmp(&b.abs()))
    })
}

/// OTA distance of the isolated MPC at the fine-AoD top pointing angle.
pub fn path_distance_estimate(
    series: &SweepSeries,
    fine: &AodCandidates,
    path: &str,
) -> Result<f64> {
    series
        .isolated_at(fine.top1())
        .map(|m| m.ota_distance)
        .ok_or_else(|| Error::Unobservable(path.to_string()))
}

/// How the single AoD fed to the solver is picked from the candidates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AodSelection {
    /// Closest of the three candidates to the ground truth.
    #[default]
    Genie,
    /// Strongest candidate only.
    Top1,
}

/// Features of one anchor (BS or RIS) for one UE.
#[derive(Debug, Clone, PartialEq)]
pub struct AnchorFeatures {
    pub anchor: AnchorRef,
    pub ground_truth_aod: f64,
    pub coarse: AodCandidates,
    /// `None` when the path was never isolated.
    pub fine: Option<AodCandidates>,
    /// OTA distance of the isolated path [m].
    pub distance: Option<f64>,
    /// AoA of the isolated path [deg].
    pub aoa: Option<f64>,
}

impl AnchorFeatures {
    pub fn coarse_aod(&self, mode: AodSelection) -> f64 {
        select(&self.coarse, self.ground_truth_aod, mode)
    }

    pub fn fine_aod(&self, mode: AodSelection) -> Option<f64> {
        self.fine
            .as_ref()
            .map(|c| select(c, self.ground_truth_aod, mode))
    }
}

fn select(c: &AodCandidates, gt: f64, mode: AodSelection) -> f64 {
    match mode {
        AodSelection::Genie => best_candidate(&c.top, gt).unwrap_or(c.top1()),
        AodSelection::Top1 => c.top1(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    pub ue_index: usize,
    pub anchors: Vec<AnchorFeatures>,
}

impl FeatureSet {
    pub fn anchor(&self, anchor: AnchorRef) -> Option<&AnchorFeatures> {
        self.anchors.iter().find(|a| a.anchor == anchor)
    }
}

pub fn path_of(anchor: AnchorRef) -> PathSpec {
    match anchor {
        AnchorRef::Bs => PathSpec::Direct,
        AnchorRef::Ris(ris) => PathSpec::Reflected { ris },
    }
}

/// Expected (OTA distance, AoA) of the path exposed by `anchor`'s sweep.
pub fn expected_path(
    scene: &ScenePlan,
    anchor: AnchorRef,
    ue_index: usize,
    ue_array_orientation: f64,
) -> Result<(f64, f64)> {
    let path = path_of(anchor);
    let ue = scene.ue(ue_index)?;
    Ok((
        ota_distance(scene, path, &ue)?,
        aoa_at_ue(scene, path, &ue, ue_array_orientation)?,
    ))
}

/// Features of one anchor from its sweep series.
pub fn anchor_features(
    scene: &ScenePlan,
    anchor: AnchorRef,
    ue_index: usize,
    series: &SweepSeries,
) -> Result<AnchorFeatures> {
    let path = path_of(anchor);
    let ue = scene.ue(ue_index)?;
    let coarse = coarse_aod(series)?;
    let fine = fine_aod(series, &path.label()).ok();
    let isolated = fine.as_ref().and_then(|f| series.isolated_at(f.top1()));
    Ok(AnchorFeatures {
        anchor,
        ground_truth_aod: path_aod(scene, path, &ue)?,
        coarse,
        fine,
        distance: isolated.map(|m| m.ota_distance),
        aoa: isolated.map(|m| m.aoa),
    })
}

/// Noiseless features: every candidate list is the exact ground truth.
pub fn exact_features(scene: &ScenePlan, ue_index: usize, orientation: f64) -> Result<FeatureSet> {
    let ue = scene.ue(ue_index)?;
    let anchors = std::iter::once(AnchorRef::Bs)
        .chain((0..scene.ris.len()).map(AnchorRef::Ris))
        .map(|anchor| {
            let path = path_of(anchor);
            let gt = path_aod(scene, path, &ue)?;
            let c = AodCandidates { top: vec![gt] };
            Ok(AnchorFeatures {
                anchor,
                ground_truth_aod: gt,
                coarse: c.clone(),
                fine: Some(c),
                distance: Some(ota_distance(scene, path, &ue)?),
                aoa: Some(aoa_at_ue(scene, path, &ue, orientation)?),
            })
        })
        .collect::<Result<_>>()?;
    Ok(FeatureSet { ue_index, anchors })
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;
    use proptest::prelude::*;

    fn mpc(d: f64, aoa: f64, db: f64) -> MpcEstimate {
        MpcEstimate::new(d, aoa, Complex64::new(10f64.powf(db / 20.0), 0.0))
    }

    fn series(gains: &[f64], iso: &[Option<f64>]) -> SweepSeries {
        let angles: Vec<f64> = (0..gains.len()).map(|i| -60.0 + 5.0 * i as f64).collect();
        SweepSeries::new(
            angles,
            gains.to_vec(),
            iso.iter().map(|g| g.map(|db| mpc(5.0, 0.0, db))).collect(),
        )
        .unwrap()
    }

    #[test]
    fn isolation_examples() {
        let w = IsolationWindow::default();
        let inside = mpc(5.5, 40.0, -80.0);
        assert_eq!(isolate_mpc(&[inside], 5.0, 30.0, &w), Some(inside));
        assert_eq!(isolate_mpc(&[mpc(6.2, 30.0, -60.0)], 5.0, 30.0, &w), None);
        assert_eq!(isolate_mpc(&[mpc(5.0, 50.0, -60.0)], 5.0, 30.0, &w), None);
        let strong = mpc(5.2, 28.0, -70.0);
        assert_eq!(
            isolate_mpc(&[mpc(4.9, 31.0, -80.0), strong], 5.0, 30.0, &w),
            Some(strong)
        );
        // window wraps across +/-180
        let wrapped = mpc(5.0, -175.0, -70.0);
        assert_eq!(isolate_mpc(&[wrapped], 5.0, 175.0, &w), Some(wrapped));
    }

    #[test]
    fn coarse_top3_and_ties() {
        let mut g = vec![-70.0; 25];
        g[12] = -55.0; // 0 deg
        g[17] = -50.0; // 25 deg
        g[18] = -60.0; // 30 deg
        let c = coarse_aod(&series(&g, &[None; 25])).unwrap();
        assert_eq!(c.top, vec![25.0, 0.0, 30.0]);

        let mut g = vec![-70.0; 25];
        g[7] = -50.0; // -25
        g[17] = -50.0; // 25
        g[14] = -50.0; // 10
        let c = coarse_aod(&series(&g, &[None; 25])).unwrap();
        assert_eq!(c.top, vec![10.0, 25.0, -25.0]);
    }

    #[test]
    fn unimodal_top1_is_argmax() {
        let g: Vec<f64> = (0..25).map(|i| -((i as f64 - 9.0).powi(2))).collect();
        let c = coarse_aod(&series(&g, &[None; 25])).unwrap();
        assert_eq!(c.top1(), -15.0);
    }

    #[test]
    fn fine_ranking_skips_missing() {
        let mut iso = vec![None; 25];
        iso[3] = Some(-90.0);
        let s = series(&[0.0; 25], &iso);
        let f = fine_aod(&s, "RP1").unwrap();
        assert_eq!(f.top, vec![-45.0]);
        assert!(matches!(
            fine_aod(&series(&[0.0; 25], &[None; 25]), "RP1"),
            Err(Error::Unobservable(_))
        ));
        assert_eq!(path_distance_estimate(&s, &f, "RP1").unwrap(), 5.0);
        let empty = AodCandidates { top: vec![0.0] };
        assert!(path_distance_estimate(&s, &empty, "RP1").is_err());
    }

    #[test]
    fn best_candidate_examples() {
        assert_eq!(best_candidate(&[25.0, 0.0, 30.0], 24.6), Some(25.0));
        assert_eq!(best_candidate(&[0.0, 35.0, 10.0], 31.9), Some(35.0));
        assert_eq!(best_candidate(&[7.0], -100.0), Some(7.0));
        assert_eq!(best_candidate(&[-5.0, 5.0], 0.0), Some(-5.0));
        assert_eq!(best_candidate(&[], 0.0), None);
    }

    #[test]
    fn selection_modes() {
        let f = AnchorFeatures {
            anchor: AnchorRef::Ris(0),
            ground_truth_aod: 24.6,
            coarse: AodCandidates {
                top: vec![0.0, 25.0, 30.0],
            },
            fine: None,
            distance: None,
            aoa: None,
        };
        assert_eq!(f.coarse_aod(AodSelection::Genie), 25.0);
        assert_eq!(f.coarse_aod(AodSelection::Top1), 0.0);
        assert_eq!(f.fine_aod(AodSelection::Genie), None);
    }

    #[test]
    fn series_validation() {
        assert!(SweepSeries::new(vec![0.0, 5.0], vec![0.0], vec![None, None]).is_err());
        assert!(SweepSeries::new(vec![5.0, 0.0], vec![0.0; 2], vec![None, None]).is_err());
    }

    proptest! {
        #[test]
        fn candidates_belong_to_sweep(gains in proptest::collection::vec(-100.0f64..0.0, 25),
                                      gt in -90.0f64..90.0) {
            let s = series(&gains, &[None; 25]);
            let c = coarse_aod(&s).unwrap();
            prop_assert_eq!(c.top.len(), 3);
            for a in &c.top {
                prop_assert!(s.pointing_angles.contains(a));
            }
            let b = best_candidate(&c.top, gt).unwrap();
            prop_assert!(c.top.contains(&b));
        }

        #[test]
        fn isolation_never_leaves_window(
            ds in proptest::collection::vec(0.0f64..20.0, 0..30),
            aoas in proptest::collection::vec(-180.0f64..180.0, 30),
            d0 in 0.0f64..20.0, a0 in -180.0f64..180.0,
        ) {
            let w = IsolationWindow::default();
            let mpcs: Vec<_> = ds.iter().zip(&aoas).map(|(&d, &a)| mpc(d, a, -d)).collect();
            if let Some(m) = isolate_mpc(&mpcs, d0, a0, &w) {
                prop_assert!((m.ota_distance - d0).abs() <= 1.0);
                prop_assert!(wrap180(m.aoa - a0).abs() <= 15.0);
            }
        }
    }
}
