//! 2D deployment geometry and angle conventions.
//!
//! All entities lie in one horizontal plane. Angles are in degrees, measured
//! anticlockwise, and wrapped to the half-open interval (-180, 180]. An
//! anchor's angle of departure is zero along its surface/array normal
//! (`boresight`) and positive anticlockwise from it.

use serde::{Deserialize, Serialize};

use crate::channel::FrequencyGrid;
use crate::{Error, Result};

/// Wraps an angle in degrees to (-180, 180].
pub fn wrap180(deg: f64) -> f64 {
    let r = deg.rem_euclid(360.0);
    if r > 180.0 {
        r - 360.0
    } else {
        r
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point2D {
    pub x: f64,
    pub y: f64,
}

impl Point2D {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Point2D) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn translate(&self, dx: f64, dy: f64) -> Point2D {
        Point2D::new(self.x + dx, self.y + dy)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    /// World-frame bearing of `target` seen from `self`, in degrees.
    fn world_bearing_to(&self, target: &Point2D) -> Result<f64> {
        let dx = target.x - self.x;
        let dy = target.y - self.y;
        if dx == 0.0 && dy == 0.0 {
            return Err(Error::domain(format!(
                "bearing between coincident points ({}, {})",
                self.x, self.y
            )));
        }
        Ok(dy.atan2(dx).to_degrees())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnchorKind {
    Bs,
    Ris,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnchorPose {
    pub position: Point2D,
    /// Direction of the surface/array normal in the world frame [deg].
    pub boresight: f64,
    pub kind: AnchorKind,
}

impl AnchorPose {
    pub fn new(position: Point2D, boresight: f64, kind: AnchorKind) -> Self {
        Self {
            position,
            boresight,
            kind,
        }
    }
}

/// Axis-aligned room rectangle [m].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Room {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Room {
    pub fn contains(&self, p: &Point2D) -> bool {
        p.x >= self.x_min && p.x <= self.x_max && p.y >= self.y_min && p.y <= self.y_max
    }

    pub fn clamp(&self, p: &Point2D) -> Point2D {
        Point2D::new(
            p.x.clamp(self.x_min, self.x_max),
            p.y.clamp(self.y_min, self.y_max),
        )
    }

    pub fn translate(&self, dx: f64, dy: f64) -> Room {
        Room {
            x_min: self.x_min + dx,
            x_max: self.x_max + dx,
            y_min: self.y_min + dy,
            y_max: self.y_max + dy,
        }
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }
}

/// Azimuth beam-sweep plan [deg].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPlan {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl SweepPlan {
    pub fn validate(&self) -> Result<()> {
        if !(self.step > 0.0) || !(self.stop >= self.start) {
            return Err(Error::config(format!(
                "sweep plan needs step > 0 and stop >= start, got {:?}",
                self
            )));
        }
        let n = (self.stop - self.start) / self.step;
        if (n - n.round()).abs() > 1e-9 {
            return Err(Error::config(format!(
                "sweep span {}..{} is not a multiple of step {}",
                self.start, self.stop, self.step
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        ((self.stop - self.start) / self.step).round() as usize + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn angles(&self) -> Vec<f64> {
        (0..self.len())
            .map(|i| self.start + i as f64 * self.step)
            .collect()
    }

    /// The sweep angle nearest to `deg` (ties toward the smaller magnitude).
    pub fn nearest(&self, deg: f64) -> f64 {
        self.angles()
            .into_iter()
            .min_by(|a, b| {
                ((a - deg).abs(), a.abs())
                    .partial_cmp(&((b - deg).abs(), b.abs()))
                    .unwrap()
            })
            .unwrap_or(self.start)
    }
}

/// Reference to a beamforming anchor of a scene.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AnchorRef {
    Bs,
    Ris(usize),
}

impl AnchorRef {
    /// Short label: `BS`, `RIS1`, `RIS2`, ...
    pub fn label(&self) -> String {
        match self {
            AnchorRef::Bs => "BS".to_string(),
            AnchorRef::Ris(i) => format!("RIS{}", i + 1),
        }
    }

    pub fn parse(s: &str) -> Option<AnchorRef> {
        let s = s.trim().to_ascii_uppercase();
        if s == "BS" {
            return Some(AnchorRef::Bs);
        }
        let idx: usize = s.strip_prefix("RIS")?.parse().ok()?;
        idx.checked_sub(1).map(AnchorRef::Ris)
    }
}

/// A geometric propagation path between the BS and a UE.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PathSpec {
    /// BS -> UE.
    Direct,
    /// BS -> RIS -> UE.
    Reflected { ris: usize },
}

impl PathSpec {
    pub fn label(&self) -> String {
        match self {
            PathSpec::Direct => "DP".to_string(),
            PathSpec::Reflected { ris } => format!("RP{}", ris + 1),
        }
    }

    /// The anchor whose beam sweep exposes the departure angle of this path.
    pub fn anchor(&self) -> AnchorRef {
        match self {
            PathSpec::Direct => AnchorRef::Bs,
            PathSpec::Reflected { ris } => AnchorRef::Ris(*ris),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenePlan {
    pub bs: AnchorPose,
    #[serde(default)]
    pub ris: Vec<AnchorPose>,
    pub ue_truths: Vec<Point2D>,
    pub room: Room,
    pub band: FrequencyGrid,
    pub sweep: SweepPlan,
}

impl ScenePlan {
    pub fn validate(&self) -> Result<()> {
        if self.ue_truths.is_empty() {
            return Err(Error::config("scene needs at least one UE"));
        }
        let anchors = std::iter::once(&self.bs).chain(&self.ris);
        for a in anchors {
            if !a.position.is_finite() || !a.boresight.is_finite() {
                return Err(Error::config("non-finite anchor pose"));
            }
        }
        if self.bs.kind != AnchorKind::Bs || self.ris.iter().any(|r| r.kind != AnchorKind::Ris) {
            return Err(Error::config("anchor kinds do not match their slots"));
        }
        for (i, ue) in self.ue_truths.iter().enumerate() {
            if !ue.is_finite() || !self.room.contains(ue) {
                return Err(Error::config(format!("UE{} outside the room", i + 1)));
            }
        }
        self.sweep.validate()?;
        self.band.validate()
    }

    pub fn anchor(&self, anchor: AnchorRef) -> Result<&AnchorPose> {
        match anchor {
            AnchorRef::Bs => Ok(&self.bs),
            AnchorRef::Ris(i) => self
                .ris
                .get(i)
                .ok_or_else(|| Error::domain(format!("no RIS{} in scene", i + 1))),
        }
    }

    pub fn ue(&self, index: usize) -> Result<Point2D> {
        self.ue_truths
            .get(index)
            .copied()
            .ok_or_else(|| Error::domain(format!("no UE{} in scene", index + 1)))
    }

    /// Fixed BS -> RIS leg of a reflected path [m].
    pub fn bs_ris_distance(&self, ris: usize) -> Result<f64> {
        Ok(self
            .bs
            .position
            .distance(&self.anchor(AnchorRef::Ris(ris))?.position))
    }

    /// Copy of the scene with every position shifted by `(dx, dy)`.
    pub fn translated(&self, dx: f64, dy: f64) -> ScenePlan {
        let shift = |a: &AnchorPose| AnchorPose {
            position: a.position.translate(dx, dy),
            ..*a
        };
        ScenePlan {
            bs: shift(&self.bs),
            ris: self.ris.iter().map(shift).collect(),
            ue_truths: self.ue_truths.iter().map(|p| p.translate(dx, dy)).collect(),
            room: self.room.translate(dx, dy),
            band: self.band,
            sweep: self.sweep,
        }
    }
}

/// Angle of departure of `target` from `pose`, in the anchor frame [deg].
pub fn bearing_from_anchor(pose: &AnchorPose, target: &Point2D) -> Result<f64> {
    let world = pose.position.world_bearing_to(target)?;
    Ok(wrap180(world - pose.boresight))
}

/// Over-the-air distance travelled along `path` to `ue` [m].
pub fn ota_distance(scene: &ScenePlan, path: PathSpec, ue: &Point2D) -> Result<f64> {
    match path {
        PathSpec::Direct => Ok(scene.bs.position.distance(ue)),
        PathSpec::Reflected { ris } => {
            let r = scene.anchor(AnchorRef::Ris(ris))?.position;
            Ok(scene.bs.position.distance(&r) + r.distance(ue))
        }
    }
}

/// Arrival azimuth of `path` at `ue`, in the UE array frame [deg].
///
/// The arrival direction points from the UE toward the last scattering point
/// (the BS for the direct path, the RIS for a reflected one).
pub fn aoa_at_ue(
    scene: &ScenePlan,
    path: PathSpec,
    ue: &Point2D,
    ue_array_orientation: f64,
) -> Result<f64> {
    let last = match path {
        PathSpec::Direct => scene.bs.position,
        PathSpec::Reflected { ris } => scene.anchor(AnchorRef::Ris(ris))?.position,
    };
    let world = ue.world_bearing_to(&last)?;
    Ok(wrap180(world - ue_array_orientation))
}

/// Departure angle of `path` at its own beamforming anchor [deg].
pub fn path_aod(scene: &ScenePlan, path: PathSpec, ue: &Point2D) -> Result<f64> {
    bearing_from_anchor(scene.anchor(path.anchor())?, ue)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn pose(x: f64, y: f64, boresight: f64) -> AnchorPose {
        AnchorPose::new(Point2D::new(x, y), boresight, AnchorKind::Bs)
    }

    fn toy_scene(bs: Point2D, ris: Vec<Point2D>) -> ScenePlan {
        ScenePlan {
            bs: AnchorPose::new(bs, 0.0, AnchorKind::Bs),
            ris: ris
                .into_iter()
                .map(|p| AnchorPose::new(p, 0.0, AnchorKind::Ris))
                .collect(),
            ue_truths: vec![Point2D::new(3.0, 4.0)],
            room: Room {
                x_min: -10.0,
                x_max: 10.0,
                y_min: -10.0,
                y_max: 10.0,
            },
            band: FrequencyGrid::new(27e9, 29e9, 10e6, 28e9).unwrap(),
            sweep: SweepPlan {
                start: -60.0,
                stop: 60.0,
                step: 5.0,
            },
        }
    }

    #[test]
    fn wrap_edges() {
        assert_eq!(wrap180(180.0), 180.0);
        assert_eq!(wrap180(-180.0), 180.0);
        assert_eq!(wrap180(540.0), 180.0);
        assert_eq!(wrap180(-190.0), 170.0);
        assert_eq!(wrap180(359.0), -1.0);
        assert_eq!(wrap180(0.0), 0.0);
    }

    #[test]
    fn bearing_examples() {
        let p = pose(0.0, 0.0, 0.0);
        assert_abs_diff_eq!(
            bearing_from_anchor(&p, &Point2D::new(1.0, 0.0)).unwrap(),
            0.0
        );
        assert_abs_diff_eq!(
            bearing_from_anchor(&p, &Point2D::new(0.0, 1.0)).unwrap(),
            90.0,
            epsilon = 1e-12
        );
        assert!(bearing_from_anchor(&p, &Point2D::new(0.0, 0.0)).is_err());
    }

    #[test]
    fn ota_examples() {
        let scene = toy_scene(Point2D::new(0.0, 0.0), vec![Point2D::new(3.0, 0.0)]);
        let ue = Point2D::new(3.0, 4.0);
        assert_abs_diff_eq!(ota_distance(&scene, PathSpec::Direct, &ue).unwrap(), 5.0);
        assert_abs_diff_eq!(
            ota_distance(&scene, PathSpec::Reflected { ris: 0 }, &ue).unwrap(),
            7.0
        );
        assert!(ota_distance(&scene, PathSpec::Reflected { ris: 3 }, &ue).is_err());
    }

    #[test]
    fn aoa_examples() {
        let scene = toy_scene(Point2D::new(0.0, 5.0), vec![Point2D::new(-1.0, 0.0)]);
        let ue = Point2D::new(0.0, 0.0);
        assert_abs_diff_eq!(
            aoa_at_ue(&scene, PathSpec::Direct, &ue, 0.0).unwrap(),
            90.0,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            aoa_at_ue(&scene, PathSpec::Reflected { ris: 0 }, &ue, 0.0).unwrap(),
            180.0
        );
        // Rotating the UE array by +30 deg lowers every AoA by 30 deg.
        assert_abs_diff_eq!(
            aoa_at_ue(&scene, PathSpec::Direct, &ue, 30.0).unwrap(),
            60.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn anchor_labels_round_trip() {
        for a in [AnchorRef::Bs, AnchorRef::Ris(0), AnchorRef::Ris(1)] {
            assert_eq!(AnchorRef::parse(&a.label()), Some(a));
        }
        assert_eq!(AnchorRef::parse("RIS0"), None);
    }

    #[test]
    fn sweep_plan_angles() {
        let s = SweepPlan {
            start: -60.0,
            stop: 60.0,
            step: 5.0,
        };
        s.validate().unwrap();
        let a = s.angles();
        assert_eq!(a.len(), 25);
        assert_eq!(a[0], -60.0);
        assert_eq!(a[24], 60.0);
        assert_eq!(s.nearest(-34.48), -35.0);
        assert_eq!(s.nearest(2.5), 0.0);
        assert!(SweepPlan {
            start: 0.0,
            stop: 7.0,
            step: 5.0
        }
        .validate()
        .is_err());
        assert!(SweepPlan {
            start: 0.0,
            stop: 5.0,
            step: 0.0
        }
        .validate()
        .is_err());
    }

    proptest! {
        #[test]
        fn wrap_is_idempotent_and_in_range(t in -1e4f64..1e4) {
            let w = wrap180(t);
            prop_assert!(w > -180.0 && w <= 180.0);
            prop_assert_eq!(wrap180(w), w);
        }

        #[test]
        fn boresight_rotation_covariance(
            bx in -5.0f64..5.0, by in -5.0f64..5.0,
            tx in -5.0f64..5.0, ty in -5.0f64..5.0,
            b0 in -180.0f64..180.0, delta in -720.0f64..720.0,
        ) {
            let t = Point2D::new(tx, ty);
            prop_assume!(Point2D::new(bx, by).distance(&t) > 1e-6);
            let a = bearing_from_anchor(&pose(bx, by, b0), &t).unwrap();
            let b = bearing_from_anchor(&pose(bx, by, b0 + delta), &t).unwrap();
            let d = wrap180(b - (a - delta));
            prop_assert!(d.abs() < 1e-9 || (d.abs() - 360.0).abs() < 1e-9);
        }

        #[test]
        fn small_anticlockwise_rotation_gives_positive_bearing(
            b0 in -180.0f64..180.0, eps in 1e-3f64..5.0, r in 0.5f64..10.0,
        ) {
            let target_dir = (b0 + eps).to_radians();
            let t = Point2D::new(r * target_dir.cos(), r * target_dir.sin());
            let got = bearing_from_anchor(&pose(0.0, 0.0, b0), &t).unwrap();
            prop_assert!((got - eps).abs() < 1e-9);
        }

        #[test]
        fn reflected_path_never_shorter(
            rx in -8.0f64..8.0, ry in -8.0f64..8.0,
            ux in -8.0f64..8.0, uy in -8.0f64..8.0,
        ) {
            let scene = toy_scene(Point2D::new(0.0, 0.0), vec![Point2D::new(rx, ry)]);
            let ue = Point2D::new(ux, uy);
            let dp = ota_distance(&scene, PathSpec::Direct, &ue).unwrap();
            let rp = ota_distance(&scene, PathSpec::Reflected { ris: 0 }, &ue).unwrap();
            prop_assert!(rp >= dp - 1e-12);
        }
    }

    #[test]
    fn collinear_ris_gives_equal_lengths() {
        let scene = toy_scene(Point2D::new(0.0, 0.0), vec![Point2D::new(1.5, 2.0)]);
        let ue = Point2D::new(3.0, 4.0);
        let dp = ota_distance(&scene, PathSpec::Direct, &ue).unwrap();
        let rp = ota_distance(&scene, PathSpec::Reflected { ris: 0 }, &ue).unwrap();
        assert_abs_diff_eq!(dp, rp, epsilon = 1e-12);
    }
}
