//! Multipath extraction from one channel tensor with SAGE.
//!
//! Components are added one at a time by successive interference
//! cancellation: a coarse delay/AoA search on the residual (delay from a
//! zero-padded inverse-FFT profile, azimuth from a 1-degree steering scan
//! over the 3x3 grid), followed by golden-section polish of both parameters.
//! Once the stopping rule is met, SAGE cycles re-estimate every component in
//! turn on its expectation signal (residual plus its own contribution) until
//! the residual energy settles.
//!
//! Gains are ML complex amplitudes referenced to the first frequency bin of
//! the sub-band and the RX grid centroid.

use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::channel::{ChannelTensor, FrequencyGrid, RxGrid};
use crate::geometry::wrap180;
use crate::{Error, Result, SPEED_OF_LIGHT};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SageConfig {
    pub max_mpcs: usize,
    /// Fraction of the tensor energy the model must explain before stopping.
    pub energy_fraction: f64,
    /// Processed sub-band `[low, high]` [Hz].
    pub subband: (f64, f64),
    /// Coarse delay grid step [s]; `None` means `1 / (2 * sub-band width)`.
    #[serde(default)]
    pub delay_grid_step: Option<f64>,
    /// Coarse azimuth grid step [deg].
    pub angle_grid_step: f64,
    /// Maximum number of SAGE cycles over all components.
    pub refinement_iters: usize,
    /// Relative residual-energy change below which cycling stops.
    pub convergence_eps: f64,
}

impl Default for SageConfig {
    fn default() -> Self {
        Self {
            max_mpcs: 20,
            energy_fraction: 0.99,
            subband: (27e9, 29e9),
            delay_grid_step: None,
            angle_grid_step: 1.0,
            refinement_iters: 10,
            convergence_eps: 1e-4,
        }
    }
}

impl SageConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_mpcs == 0 {
            return Err(Error::config("max_mpcs must be >= 1"));
        }
        if !(self.energy_fraction > 0.0 && self.energy_fraction <= 1.0) {
            return Err(Error::config("energy_fraction must lie in (0, 1]"));
        }
        if !(self.subband.0 < self.subband.1) {
            return Err(Error::config("sub-band must satisfy low < high"));
        }
        if !(self.angle_grid_step > 0.0) || self.delay_grid_step.is_some_and(|s| !(s > 0.0)) {
            return Err(Error::config("grid steps must be positive"));
        }
        Ok(())
    }
}

/// One extracted multipath component.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MpcEstimate {
    /// Over-the-air distance, delay times c [m].
    pub ota_distance: f64,
    /// Arrival azimuth in the UE array frame [deg].
    pub aoa: f64,
    pub gain: Complex64,
    /// `20 log10 |gain|` [dB].
    pub power_db: f64,
}

impl MpcEstimate {
    pub fn new(ota_distance: f64, aoa: f64, gain: Complex64) -> Self {
        Self {
            ota_distance,
            aoa,
            gain,
            power_db: 20.0 * gain.norm().log10(),
        }
    }
}

/// Restricts a tensor to the bins inside `[f_lo, f_hi]`.
pub fn subband_select(tensor: &ChannelTensor, f_lo: f64, f_hi: f64) -> Result<ChannelTensor> {
    let (lo, hi) = tensor.grid.index_range(f_lo, f_hi).ok_or_else(|| {
        Error::domain(format!(
            "sub-band [{f_lo}, {f_hi}] Hz does not intersect the tensor grid"
        ))
    })?;
    if hi == lo {
        return Err(Error::domain("sub-band holds a single frequency bin"));
    }
    let g = &tensor.grid;
    let grid = FrequencyGrid {
        f_start: g.freq(lo),
        f_stop: g.freq(hi),
        f_step: g.f_step,
        carrier: g.carrier,
    };
    let n = tensor.n_pos;
    ChannelTensor::new(
        tensor.values[lo * n..(hi + 1) * n].to_vec(),
        n,
        grid,
        tensor.meta,
    )
}

/// Mean power over all entries of the tensor [dB].
pub fn overall_gain_db(tensor: &ChannelTensor) -> f64 {
    10.0 * (tensor.energy() / tensor.values.len() as f64).log10()
}

/// Re-synthesizes the model signal of `mpcs` on `grid` (bin 0 as phase reference).
pub fn reconstruct(mpcs: &[MpcEstimate], grid: &FrequencyGrid, rx: &RxGrid) -> Vec<Complex64> {
    let n_pos = RxGrid::LEN;
    let mut out = vec![Complex64::new(0.0, 0.0); grid.len() * n_pos];
    for m in mpcs {
        let a = rx.steering(grid.carrier, m.aoa);
        let tau = m.ota_distance / SPEED_OF_LIGHT;
        for (n, row) in out.chunks_exact_mut(n_pos).enumerate() {
            let c = m.gain * Complex64::from_polar(1.0, -2.0 * PI * n as f64 * grid.f_step * tau);
            for (h, ap) in row.iter_mut().zip(a.iter()) {
                *h += c * ap;
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy)]
struct Component {
    tau: f64,
    aoa: f64,
    gain: Complex64,
}

struct Extractor<'a> {
    n_freq: usize,
    f_step: f64,
    carrier: f64,
    rx: &'a RxGrid,
    fft_len: usize,
    /// Coarse azimuth grid and its steering vectors.
    angles: Vec<f64>,
    steer: Vec<[Complex64; RxGrid::LEN]>,
}

const P: usize = RxGrid::LEN;
const GOLDEN: f64 = 0.618_033_988_749_894_8;
const GOLDEN_ITERS: usize = 28;
const POLISH_ROUNDS: usize = 3;
const INIT_PEAKS: usize = 3;

impl<'a> Extractor<'a> {
    fn new(grid: &FrequencyGrid, rx: &'a RxGrid, cfg: &SageConfig) -> Self {
        let n_freq = grid.len();
        let delay_step = cfg
            .delay_grid_step
            .unwrap_or(1.0 / (2.0 * grid.bandwidth()));
        let min_len = (1.0 / (grid.f_step * delay_step)).ceil() as usize;
        let fft_len = min_len.max(n_freq).next_power_of_two();
        let n_angles = (360.0 / cfg.angle_grid_step).round().max(1.0) as usize;
        let angles: Vec<f64> = (0..n_angles)
            .map(|i| wrap180(-180.0 + (i as f64 + 1.0) * 360.0 / n_angles as f64))
            .collect();
        let steer = angles
            .iter()
            .map(|&a| rx.steering(grid.carrier, a))
            .collect();
        Self {
            n_freq,
            f_step: grid.f_step,
            carrier: grid.carrier,
            rx,
            fft_len,
            angles,
            steer,
        }
    }

    fn tau_step(&self) -> f64 {
        1.0 / (self.fft_len as f64 * self.f_step)
    }

    fn tau_max(&self) -> f64 {
        1.0 / self.f_step
    }

    /// Adds (`sign = 1`) or removes (`sign = -1`) a component from `buf`.
    fn apply(&self, buf: &mut [Complex64], c: &Component, sign: f64) {
        let a = self.rx.steering(self.carrier, c.aoa);
        let w = Complex64::from_polar(1.0, -2.0 * PI * self.f_step * c.tau);
        let mut phasor = c.gain * sign;
        for row in buf.chunks_exact_mut(P) {
            for (h, ap) in row.iter_mut().zip(a.iter()) {
                *h += phasor * ap;
            }
            phasor *= w;
        }
    }

    /// `y[n] = sum_p conj(a_p) X[n, p]`.
    fn beamform(&self, x: &[Complex64], aoa: f64) -> Vec<Complex64> {
        let a = self.rx.steering(self.carrier, aoa);
        x.chunks_exact(P)
            .map(|row| row.iter().zip(a.iter()).map(|(h, ap)| h * ap.conj()).sum())
            .collect()
    }

    /// `z[p] = sum_n X[n, p] exp(+j 2 pi n df tau)`.
    fn delay_match(&self, x: &[Complex64], tau: f64) -> [Complex64; P] {
        let w = Complex64::from_polar(1.0, 2.0 * PI * self.f_step * tau);
        let mut phasor = Complex64::new(1.0, 0.0);
        let mut z = [Complex64::new(0.0, 0.0); P];
        for row in x.chunks_exact(P) {
            for (zp, h) in z.iter_mut().zip(row) {
                *zp += h * phasor;
            }
            phasor *= w;
        }
        z
    }

    fn delay_objective(&self, y: &[Complex64], tau: f64) -> f64 {
        let w = Complex64::from_polar(1.0, 2.0 * PI * self.f_step * tau);
        y.iter()
            .rev()
            .fold(Complex64::new(0.0, 0.0), |acc, v| acc * w + v)
            .norm_sqr()
    }

    fn angle_objective(&self, z: &[Complex64; P], aoa: f64) -> f64 {
        let a = self.rx.steering(self.carrier, aoa);
        z.iter()
            .zip(a.iter())
            .map(|(zp, ap)| zp * ap.conj())
            .sum::<Complex64>()
            .norm_sqr()
    }

    /// ML amplitude `s^H x / ||s||^2`.
    fn ml_gain(&self, x: &[Complex64], tau: f64, aoa: f64) -> Complex64 {
        let z = self.delay_match(x, tau);
        let a = self.rx.steering(self.carrier, aoa);
        let c: Complex64 = z.iter().zip(a.iter()).map(|(zp, ap)| zp * ap.conj()).sum();
        c / (self.n_freq * P) as f64
    }

    /// Coarse 2D search on `x`: candidate delay bins from the incoherent
    /// profile, azimuth from the steering scan at and around each bin.
    fn coarse_search(&self, x: &[Complex64], planner: &mut FftPlanner<f64>) -> (f64, f64) {
        let n = self.fft_len;
        let ifft = planner.plan_fft_inverse(n);
        let mut profiles = vec![Complex64::new(0.0, 0.0); n * P];
        for p in 0..P {
            let col = &mut profiles[p * n..(p + 1) * n];
            for (f, slot) in col.iter_mut().take(self.n_freq).enumerate() {
                *slot = x[f * P + p];
            }
            ifft.process(col);
        }
        let power: Vec<f64> = (0..n)
            .map(|m| (0..P).map(|p| profiles[p * n + m].norm_sqr()).sum())
            .collect();
        let mut peaks: Vec<usize> = (0..n)
            .filter(|&m| {
                let l = power[(m + n - 1) % n];
                let r = power[(m + 1) % n];
                power[m] >= l && power[m] > r
            })
            .collect();
        peaks.sort_by(|a, b| power[*b].total_cmp(&power[*a]));
        peaks.truncate(INIT_PEAKS);
        if peaks.is_empty() {
            peaks.push(0);
        }

        let mut best = (f64::NEG_INFINITY, 0usize, 0.0f64);
        for &pk in &peaks {
            for m in [pk + n - 1, pk, pk + 1].map(|m| m % n) {
                for (ai, a) in self.steer.iter().enumerate() {
                    let c: Complex64 = (0..P).map(|p| profiles[p * n + m] * a[p].conj()).sum();
                    let v = c.norm_sqr();
                    if v > best.0 {
                        best = (v, m, self.angles[ai]);
                    }
                }
            }
        }
        (best.1 as f64 * self.tau_step(), best.2)
    }

    /// Coordinate-wise polish of (tau, aoa) on expectation signal `x`.
    /// Never returns parameters with a lower objective than the start.
    fn polish(&self, x: &[Complex64], tau0: f64, aoa0: f64, angle_step: f64) -> (f64, f64) {
        let (mut tau, mut aoa) = (tau0, aoa0);
        let dtau = self.tau_step();
        for _ in 0..POLISH_ROUNDS {
            let y = self.beamform(x, aoa);
            let lo = (tau - dtau).max(0.0);
            let hi = (tau + dtau).min(self.tau_max());
            let cand = golden_max(|t| self.delay_objective(&y, t), lo, hi);
            if self.delay_objective(&y, cand) >= self.delay_objective(&y, tau) {
                tau = cand;
            }
            let z = self.delay_match(x, tau);
            let cand = golden_max(
                |a| self.angle_objective(&z, a),
                aoa - angle_step,
                aoa + angle_step,
            );
            if self.angle_objective(&z, cand) >= self.angle_objective(&z, aoa) {
                aoa = cand;
            }
        }
        (tau, wrap180(aoa))
    }
}

fn golden_max<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64) -> f64 {
    let mut x1 = hi - GOLDEN * (hi - lo);
    let mut x2 = lo + GOLDEN * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..GOLDEN_ITERS {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + GOLDEN * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - GOLDEN * (hi - lo);
            f1 = f(x1);
        }
    }
    if f1 >= f2 {
        x1
    } else {
        x2
    }
}

fn energy(x: &[Complex64]) -> f64 {
    x.iter().map(|v| v.norm_sqr()).sum()
}

/// Extracts MPCs from `tensor`, sorted by descending power.
///
/// The tensor is first restricted to `cfg.subband`. Components are added
/// until the model explains `energy_fraction` of the sub-band energy or
/// `max_mpcs` components exist. An all-zero tensor yields no components.
pub fn sage_extract(
    tensor: &ChannelTensor,
    rx: &RxGrid,
    cfg: &SageConfig,
) -> Result<Vec<MpcEstimate>> {
    cfg.validate()?;
    if tensor.n_pos != P {
        return Err(Error::Dimension {
            expected: format!("{P} RX positions"),
            actual: tensor.n_pos.to_string(),
        });
    }
    let sub = subband_select(tensor, cfg.subband.0, cfg.subband.1)?;
    if sub.n_freq() < 2 {
        return Err(Error::domain("SAGE needs at least two frequency bins"));
    }
    let total = sub.energy();
    if total == 0.0 {
        return Ok(Vec::new());
    }
    let ex = Extractor::new(&sub.grid, rx, cfg);
    let mut planner = FftPlanner::new();
    let mut residual = sub.values.clone();
    let mut comps: Vec<Component> = Vec::new();
    let target = (1.0 - cfg.energy_fraction) * total;

    // Successive interference cancellation.
    while comps.len() < cfg.max_mpcs && energy(&residual) > target {
        let (tau0, aoa0) = ex.coarse_search(&residual, &mut planner);
        let (tau, aoa) = ex.polish(&residual, tau0, aoa0, cfg.angle_grid_step);
        let gain = ex.ml_gain(&residual, tau, aoa);
        if gain.norm_sqr() == 0.0 {
            break;
        }
        let c = Component { tau, aoa, gain };
        ex.apply(&mut residual, &c, -1.0);
        comps.push(c);
    }

    // SAGE cycles.
    let mut last = energy(&residual);
    for _ in 0..cfg.refinement_iters {
        for c in comps.iter_mut() {
            ex.apply(&mut residual, c, 1.0);
            let (tau, aoa) = ex.polish(&residual, c.tau, c.aoa, cfg.angle_grid_step);
            *c = Component {
                tau,
                aoa,
                gain: ex.ml_gain(&residual, tau, aoa),
            };
            ex.apply(&mut residual, c, -1.0);
        }
        let now = energy(&residual);
        let change = (last - now).abs() / last.max(f64::MIN_POSITIVE);
        last = now;
        if change < cfg.convergence_eps {
            break;
        }
    }

    let mut out: Vec<MpcEstimate> = comps
        .into_iter()
        .map(|c| MpcEstimate::new(c.tau * SPEED_OF_LIGHT, c.aoa, c.gain))
        .collect();
    out.sort_by(|a, b| b.power_db.total_cmp(&a.power_db));
    Ok(out)
}
