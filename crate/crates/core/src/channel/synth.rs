//! Geometric ray-sum channel synthesis.
//!
//! A channel tensor holds `H[f, p]` for every frequency bin `f` and RX grid
//! position `p` of one acquisition (one UE, one pointing angle of one sweep):
//!
//! ```text
//! H[f, p] = sum_paths g_beam * alpha * exp(-j 2 pi f tau) * exp(j k_c r_p . u(aoa)) + n[f, p]
//! ```
//!
//! where `g_beam` is the BS array factor for the direct path, the product of
//! the BS factor toward the RIS and the RIS departure factor for a reflected
//! path, and one for clutter.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use super::array::{array_factor, steering_codeword, ArrayGeometry, RxGrid};
use super::grid::FrequencyGrid;
use crate::exec::Exec;
use crate::geometry::{
    aoa_at_ue, bearing_from_anchor, ota_distance, AnchorRef, PathSpec, Point2D, Room, ScenePlan,
};
use crate::{Error, Result, SPEED_OF_LIGHT};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PathOrigin {
    Direct,
    Reflected(usize),
    Clutter,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathComponent {
    /// Over-the-air distance [m]; the delay is `ota_distance / c`.
    pub ota_distance: f64,
    /// Arrival azimuth in the UE array frame [deg].
    pub aoa_ue: f64,
    /// Departure angle at the beamforming anchor [deg] (BS for the direct
    /// path, RIS for a reflected path, BS for clutter).
    pub aod_anchor: f64,
    /// Propagation gain before beamforming.
    pub gain: Complex64,
    pub origin: PathOrigin,
}

impl PathComponent {
    pub fn delay(&self) -> f64 {
        self.ota_distance / SPEED_OF_LIGHT
    }
}

/// Which anchor is sweeping during an acquisition series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SweepRole {
    /// BS beam scan with every RIS switched off.
    BsScan,
    /// Scan of one RIS while the BS statically illuminates it.
    RisScan { ris: usize, bs_pointing: f64 },
}

impl SweepRole {
    /// One-byte tag used by the channel container: 0 for the BS scan,
    /// `i + 1` for a scan of RIS `i`.
    pub fn tag(&self) -> u8 {
        match self {
            SweepRole::BsScan => 0,
            SweepRole::RisScan { ris, .. } => (*ris + 1) as u8,
        }
    }

    pub fn anchor(&self) -> AnchorRef {
        match self {
            SweepRole::BsScan => AnchorRef::Bs,
            SweepRole::RisScan { ris, .. } => AnchorRef::Ris(*ris),
        }
    }

    pub fn label(&self) -> String {
        match self {
            SweepRole::BsScan => "bs".to_string(),
            SweepRole::RisScan { ris, .. } => format!("ris{}", ris + 1),
        }
    }
}

/// Beam states of one acquisition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeamState {
    /// BS pointing angle in its anchor frame [deg].
    pub bs_pointing: f64,
    /// Active RIS and its pointing angle, or `None` with every RIS off.
    pub ris: Option<(usize, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TensorMeta {
    pub ue_index: usize,
    /// Pointing angle of the sweeping anchor [deg].
    pub pointing: f64,
    pub role: SweepRole,
    pub seed: u64,
}

impl TensorMeta {
    pub fn ris_on(&self) -> bool {
        matches!(self.role, SweepRole::RisScan { .. })
    }
}

/// Complex frequency response `[n_freq x n_pos]`, row-major over frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelTensor {
    pub values: Vec<Complex64>,
    pub n_pos: usize,
    pub grid: FrequencyGrid,
    pub meta: TensorMeta,
}

impl ChannelTensor {
    pub fn new(
        values: Vec<Complex64>,
        n_pos: usize,
        grid: FrequencyGrid,
        meta: TensorMeta,
    ) -> Result<Self> {
        if n_pos == 0 || values.len() != grid.len() * n_pos {
            return Err(Error::Dimension {
                expected: format!("{} x {}", grid.len(), n_pos),
                actual: values.len().to_string(),
            });
        }
        if values
            .iter()
            .any(|v| !v.re.is_finite() || !v.im.is_finite())
        {
            return Err(Error::domain("channel tensor has non-finite entries"));
        }
        Ok(Self {
            values,
            n_pos,
            grid,
            meta,
        })
    }

    pub fn n_freq(&self) -> usize {
        self.grid.len()
    }

    pub fn at(&self, f: usize, p: usize) -> Complex64 {
        self.values[f * self.n_pos + p]
    }

    pub fn energy(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum()
    }
}

/// Amplitude laws of the synthetic propagation environment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PropagationModel {
    /// Direct path: `alpha = dp_gain * lambda / (4 pi d)`.
    pub dp_gain: f64,
    /// Reflected path: `alpha = ris_gain * lambda / (4 pi d_bs_ris d_ris_ue)`;
    /// absorbs the RIS aperture and the static illumination gain.
    pub ris_gain: f64,
    /// Clutter: `alpha = clutter_gain * d^-clutter_decay * 10^(jitter/20)`.
    pub clutter_gain: f64,
    pub clutter_decay: f64,
    /// Standard deviation of the log-normal reflectivity jitter [dB].
    pub clutter_jitter_db: f64,
    pub clutter_count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub bs_array: ArrayGeometry,
    pub ris_array: ArrayGeometry,
    pub rx_grid: RxGrid,
    pub propagation: PropagationModel,
    /// Per-entry SNR of the direct path at UE1 under a perfectly steered,
    /// unquantized BS beam [dB].
    pub snr_db: f64,
    /// Orientation of every UE's RX grid in the world frame [deg].
    pub ue_array_orientation: f64,
    /// Static BS pointing used while RIS `i` sweeps [deg].
    pub ris_bs_pointing: Vec<f64>,
}

impl SynthConfig {
    /// Noise standard deviation per tensor entry implied by `snr_db`.
    pub fn noise_sigma(&self, scene: &ScenePlan) -> Result<f64> {
        let ue1 = scene.ue(0)?;
        let d = scene.bs.position.distance(&ue1);
        let reference = self.propagation.dp_gain * scene.band.wavelength() / (4.0 * PI * d)
            * self.bs_array.n_elements as f64;
        Ok(reference * 10f64.powf(-self.snr_db / 20.0))
    }

    pub fn role_for(&self, anchor: AnchorRef) -> Result<SweepRole> {
        match anchor {
            AnchorRef::Bs => Ok(SweepRole::BsScan),
            AnchorRef::Ris(ris) => {
                let bs_pointing = *self.ris_bs_pointing.get(ris).ok_or_else(|| {
                    Error::config(format!("no static BS pointing for RIS{}", ris + 1))
                })?;
                Ok(SweepRole::RisScan { ris, bs_pointing })
            }
        }
    }
}

/// SplitMix64-style mixing of a base seed with stream identifiers.
pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    parts.iter().fold(mix(base), |acc, &p| {
        mix(acc ^ mix(p.wrapping_add(0x5851_F42D)))
    })
}

const CLUTTER_STREAM: u64 = 0xC1u64;

/// A static single-bounce scatterer of the room.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scatterer {
    pub position: Point2D,
    /// Reflectivity jitter as a linear amplitude factor.
    pub reflectivity: f64,
    pub phase: f64,
}

fn draw_scatterers(room: &Room, model: &PropagationModel, seed: u64) -> Vec<Scatterer> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..model.clutter_count)
        .map(|_| {
            let x = rng.gen_range(room.x_min..=room.x_max);
            let y = rng.gen_range(room.y_min..=room.y_max);
            let z: f64 = StandardNormal.sample(&mut rng);
            let phase = rng.gen_range(0.0..2.0 * PI);
            Scatterer {
                position: Point2D::new(x, y),
                reflectivity: 10f64.powf(model.clutter_jitter_db * z / 20.0),
                phase,
            }
        })
        .collect()
}

/// Random single-bounce clutter paths BS -> scatterer -> UE.
///
/// Scatterer positions and reflectivities depend only on the room and the
/// seed, so every UE of a campaign sees the same static room.
pub fn generate_clutter(
    scene: &ScenePlan,
    ue: &Point2D,
    model: &PropagationModel,
    ue_array_orientation: f64,
    seed: u64,
) -> Vec<PathComponent> {
    draw_scatterers(&scene.room, model, seed)
        .into_iter()
        .filter_map(|s| {
            let d1 = scene.bs.position.distance(&s.position);
            let d2 = s.position.distance(ue);
            if d1 < 1e-6 || d2 < 1e-6 {
                return None;
            }
            let dist = d1 + d2;
            let aoa = crate::geometry::wrap180(
                (s.position.y - ue.y)
                    .atan2(s.position.x - ue.x)
                    .to_degrees()
                    - ue_array_orientation,
            );
            let aod = bearing_from_anchor(&scene.bs, &s.position).ok()?;
            let amp = model.clutter_gain * dist.powf(-model.clutter_decay) * s.reflectivity;
            Some(PathComponent {
                ota_distance: dist,
                aoa_ue: aoa,
                aod_anchor: aod,
                gain: Complex64::from_polar(amp, s.phase),
                origin: PathOrigin::Clutter,
            })
        })
        .collect()
}

/// Direct path plus, when `active_ris` is set, the path reflected by that RIS.
pub fn geometric_paths(
    scene: &ScenePlan,
    ue_index: usize,
    active_ris: Option<usize>,
    model: &PropagationModel,
    ue_array_orientation: f64,
) -> Result<Vec<PathComponent>> {
    let ue = scene.ue(ue_index)?;
    let lambda = scene.band.wavelength();
    let mut out = Vec::with_capacity(2);
    let d = ota_distance(scene, PathSpec::Direct, &ue)?;
    out.push(PathComponent {
        ota_distance: d,
        aoa_ue: aoa_at_ue(scene, PathSpec::Direct, &ue, ue_array_orientation)?,
        aod_anchor: bearing_from_anchor(&scene.bs, &ue)?,
        gain: Complex64::new(model.dp_gain * lambda / (4.0 * PI * d), 0.0),
        origin: PathOrigin::Direct,
    });
    if let Some(ris) = active_ris {
        let path = PathSpec::Reflected { ris };
        let pose = scene.anchor(AnchorRef::Ris(ris))?;
        let d1 = scene.bs_ris_distance(ris)?;
        let d2 = pose.position.distance(&ue);
        out.push(PathComponent {
            ota_distance: ota_distance(scene, path, &ue)?,
            aoa_ue: aoa_at_ue(scene, path, &ue, ue_array_orientation)?,
            aod_anchor: bearing_from_anchor(pose, &ue)?,
            gain: Complex64::new(model.ris_gain * lambda / (4.0 * PI * d1 * d2), 0.0),
            origin: PathOrigin::Reflected(ris),
        });
    }
    Ok(out)
}

fn beam_gain(
    scene: &ScenePlan,
    cfg: &SynthConfig,
    beams: &BeamState,
    path: &PathComponent,
) -> Result<Complex64> {
    let fc = scene.band.carrier;
    match path.origin {
        PathOrigin::Clutter => Ok(Complex64::new(1.0, 0.0)),
        PathOrigin::Direct => {
            let bs = steering_codeword(&cfg.bs_array, fc, beams.bs_pointing)?;
            array_factor(&cfg.bs_array, fc, &bs.quantized, path.aod_anchor)
        }
        PathOrigin::Reflected(ris) => {
            let (active, ris_pointing) = beams.ris.ok_or_else(|| {
                Error::domain(format!(
                    "reflected path via RIS{} while RIS is off",
                    ris + 1
                ))
            })?;
            if active != ris {
                return Err(Error::domain(format!(
                    "reflected path via RIS{} while RIS{} is active",
                    ris + 1,
                    active + 1
                )));
            }
            let pose = scene.anchor(AnchorRef::Ris(ris))?;
            let toward_ris = bearing_from_anchor(&scene.bs, &pose.position)?;
            let bs = steering_codeword(&cfg.bs_array, fc, beams.bs_pointing)?;
            let rs = steering_codeword(&cfg.ris_array, fc, ris_pointing)?;
            Ok(array_factor(&cfg.bs_array, fc, &bs.quantized, toward_ris)?
                * array_factor(&cfg.ris_array, fc, &rs.quantized, path.aod_anchor)?)
        }
    }
}

/// Synthesizes one acquisition on `scene.band`.
///
/// Noise is circular complex Gaussian with total variance `noise_sigma^2`
/// per entry, drawn from a ChaCha8 stream seeded with `meta.seed`.
pub fn synthesize_channel(
    scene: &ScenePlan,
    cfg: &SynthConfig,
    beams: &BeamState,
    meta: TensorMeta,
    paths: &[PathComponent],
    noise_sigma: f64,
) -> Result<ChannelTensor> {
    if !(noise_sigma >= 0.0) {
        return Err(Error::domain(format!(
            "noise sigma {noise_sigma} must be >= 0"
        )));
    }
    if paths.is_empty() && noise_sigma == 0.0 {
        return Err(Error::domain("no paths and no noise"));
    }
    let grid = scene.band;
    let n_freq = grid.len();
    let n_pos = RxGrid::LEN;
    let fc = grid.carrier;

    // Per-path complex weight and spatial signature.
    let mut weights = Vec::with_capacity(paths.len());
    for path in paths {
        if !(path.ota_distance > 0.0) {
            return Err(Error::domain("path OTA distance must be positive"));
        }
        let w = beam_gain(scene, cfg, beams, path)? * path.gain;
        weights.push((w, path.delay(), cfg.rx_grid.steering(fc, path.aoa_ue)));
    }

    let mut values = vec![Complex64::new(0.0, 0.0); n_freq * n_pos];
    for (f, row) in values.chunks_exact_mut(n_pos).enumerate() {
        let freq = grid.freq(f);
        for (w, tau, steer) in &weights {
            let c = *w * Complex64::from_polar(1.0, -2.0 * PI * freq * tau);
            for (h, a) in row.iter_mut().zip(steer.iter()) {
                *h += c * a;
            }
        }
    }

    if noise_sigma > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(meta.seed);
        let normal = Normal::new(0.0, noise_sigma / 2f64.sqrt()).expect("finite sigma");
        for h in values.iter_mut() {
            let re = normal.sample(&mut rng);
            let im = normal.sample(&mut rng);
            *h += Complex64::new(re, im);
        }
    }
    ChannelTensor::new(values, n_pos, grid, meta)
}

fn role_code(role: &SweepRole) -> u64 {
    role.tag() as u64
}

/// All paths seen by `ue_index` during a sweep with the given role.
pub fn sweep_paths(
    scene: &ScenePlan,
    role: &SweepRole,
    ue_index: usize,
    cfg: &SynthConfig,
    seed: u64,
) -> Result<Vec<PathComponent>> {
    let active = match role {
        SweepRole::BsScan => None,
        SweepRole::RisScan { ris, .. } => {
            scene.anchor(AnchorRef::Ris(*ris))?;
            Some(*ris)
        }
    };
    let ue = scene.ue(ue_index)?;
    let mut paths = geometric_paths(
        scene,
        ue_index,
        active,
        &cfg.propagation,
        cfg.ue_array_orientation,
    )?;
    paths.extend(generate_clutter(
        scene,
        &ue,
        &cfg.propagation,
        cfg.ue_array_orientation,
        derive_seed(seed, &[CLUTTER_STREAM]),
    ));
    Ok(paths)
}

/// One tensor per pointing angle of `scene.sweep`.
///
/// Clutter is identical across pointing angles (static room) while beam
/// gains are re-evaluated for each angle. Each acquisition draws noise from
/// its own stream derived from `(seed, role, angle index, ue)`.
pub fn run_sweep(
    scene: &ScenePlan,
    role: SweepRole,
    ue_index: usize,
    cfg: &SynthConfig,
    seed: u64,
    exec: Exec,
) -> Result<Vec<ChannelTensor>> {
    if let SweepRole::RisScan { bs_pointing, .. } = role {
        if !(bs_pointing.abs() < 90.0) {
            return Err(Error::domain(format!(
                "static BS pointing {bs_pointing} deg out of range"
            )));
        }
    }
    let paths = sweep_paths(scene, &role, ue_index, cfg, seed)?;
    let sigma = cfg.noise_sigma(scene)?;
    let angles = scene.sweep.angles();
    exec.map_range(angles.len(), |i| {
        let pointing = angles[i];
        let beams = match role {
            SweepRole::BsScan => BeamState {
                bs_pointing: pointing,
                ris: None,
            },
            SweepRole::RisScan { ris, bs_pointing } => BeamState {
                bs_pointing,
                ris: Some((ris, pointing)),
            },
        };
        let meta = TensorMeta {
            ue_index,
            pointing,
            role,
            seed: derive_seed(seed, &[role_code(&role), i as u64, ue_index as u64]),
        };
        synthesize_channel(scene, cfg, &beams, meta, &paths, sigma)
    })
    .into_iter()
    .collect()
}
