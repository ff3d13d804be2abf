//! Linear beamformers with 1-bit phase control, and the UE's virtual RX grid.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::geometry::SweepPlan;
use crate::{Error, Result, SPEED_OF_LIGHT};

/// Uniform linear array used for azimuth beam steering (BS or RIS).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArrayGeometry {
    pub n_elements: usize,
    /// Inter-element spacing [m].
    pub element_spacing: f64,
}

impl ArrayGeometry {
    /// Array with half-wavelength spacing at `carrier`.
    pub fn half_wavelength(n_elements: usize, carrier: f64) -> Self {
        Self {
            n_elements,
            element_spacing: 0.5 * SPEED_OF_LIGHT / carrier,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_elements == 0 || !(self.element_spacing > 0.0) {
            return Err(Error::config(format!("invalid array geometry {self:?}")));
        }
        Ok(())
    }
}

/// The 3x3 virtual receive lattice in the UE array's horizontal plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RxGrid {
    /// Lattice spacing [m].
    pub spacing: f64,
}

impl RxGrid {
    pub const SIDE: usize = 3;
    pub const LEN: usize = Self::SIDE * Self::SIDE;
    /// Default spacing in carrier wavelengths. At half a wavelength the
    /// square lattice aliases arrivals along its axes (0 and 180 deg, +-90
    /// deg) under narrowband steering; 0.4 keeps every in-plane azimuth
    /// distinct.
    pub const DEFAULT_SPACING_WAVELENGTHS: f64 = 0.4;

    /// The default lattice for `carrier`.
    pub fn for_carrier(carrier: f64) -> Self {
        Self {
            spacing: Self::DEFAULT_SPACING_WAVELENGTHS * SPEED_OF_LIGHT / carrier,
        }
    }

    /// Offsets from the lattice centroid, in the UE array frame. Position `p`
    /// is `(ix, iy) = (p % 3, p / 3)`.
    pub fn offsets(&self) -> [(f64, f64); Self::LEN] {
        let mut out = [(0.0, 0.0); Self::LEN];
        for (p, o) in out.iter_mut().enumerate() {
            let ix = (p % Self::SIDE) as f64 - 1.0;
            let iy = (p / Self::SIDE) as f64 - 1.0;
            *o = (ix * self.spacing, iy * self.spacing);
        }
        out
    }

    /// Narrowband spatial signature of a plane wave arriving from `aoa_deg`.
    pub fn steering(&self, carrier: f64, aoa_deg: f64) -> [Complex64; Self::LEN] {
        let k = 2.0 * PI * carrier / SPEED_OF_LIGHT;
        let (s, c) = aoa_deg.to_radians().sin_cos();
        let mut out = [Complex64::new(0.0, 0.0); Self::LEN];
        for (a, (x, y)) in out.iter_mut().zip(self.offsets()) {
            *a = Complex64::from_polar(1.0, k * (x * c + y * s));
        }
        out
    }
}

/// Maps a phase to the nearer of {0, pi}; an exact tie goes to 0.
pub fn quantize_1bit(ideal_phase: f64) -> f64 {
    let w = wrap_pi(ideal_phase).abs();
    if w <= PI - w {
        0.0
    } else {
        PI
    }
}

fn wrap_pi(x: f64) -> f64 {
    let r = x.rem_euclid(2.0 * PI);
    if r > PI {
        r - 2.0 * PI
    } else {
        r
    }
}

/// Element phases steering an array toward one angle.
#[derive(Debug, Clone, PartialEq)]
pub struct Codeword {
    /// Ideal phase-gradient phases, wrapped to (-pi, pi].
    pub ideal: Vec<f64>,
    /// 1-bit phases in {0, pi}.
    pub quantized: Vec<f64>,
}

pub fn steering_codeword(array: &ArrayGeometry, carrier: f64, aod_deg: f64) -> Result<Codeword> {
    if !(aod_deg.abs() < 90.0) {
        return Err(Error::domain(format!(
            "steering angle {aod_deg} deg outside (-90, 90)"
        )));
    }
    let k = 2.0 * PI * carrier / SPEED_OF_LIGHT;
    let slope = -k * array.element_spacing * aod_deg.to_radians().sin();
    let ideal: Vec<f64> = (0..array.n_elements)
        .map(|n| wrap_pi(slope * n as f64))
        .collect();
    let quantized = ideal.iter().map(|&p| quantize_1bit(p)).collect();
    Ok(Codeword { ideal, quantized })
}

/// Unnormalized array factor `sum_n exp(j(k n d sin(theta) + phase_n))`.
pub fn array_factor(
    array: &ArrayGeometry,
    carrier: f64,
    phases: &[f64],
    eval_deg: f64,
) -> Result<Complex64> {
    if phases.len() != array.n_elements {
        return Err(Error::Dimension {
            expected: format!("{} element phases", array.n_elements),
            actual: phases.len().to_string(),
        });
    }
    let k = 2.0 * PI * carrier / SPEED_OF_LIGHT;
    let psi = k * array.element_spacing * eval_deg.to_radians().sin();
    Ok(phases
        .iter()
        .enumerate()
        .map(|(n, &ph)| Complex64::from_polar(1.0, psi * n as f64 + ph))
        .sum())
}

/// 1-bit codewords for every pointing angle of a sweep plan.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamCodebook {
    pub pointing_angles: Vec<f64>,
    pub words: Vec<Vec<f64>>,
}

impl BeamCodebook {
    pub fn new(array: &ArrayGeometry, carrier: f64, sweep: &SweepPlan) -> Result<Self> {
        let pointing_angles = sweep.angles();
        let words = pointing_angles
            .iter()
            .map(|&a| steering_codeword(array, carrier, a).map(|c| c.quantized))
            .collect::<Result<_>>()?;
        Ok(Self {
            pointing_angles,
            words,
        })
    }

    pub fn word(&self, pointing: f64) -> Option<&[f64]> {
        self.pointing_angles
            .iter()
            .position(|&a| (a - pointing).abs() < 1e-9)
            .map(|i| self.words[i].as_slice())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    const FC: f64 = 28e9;

    fn ula() -> ArrayGeometry {
        ArrayGeometry::half_wavelength(32, FC)
    }

    fn db(x: f64) -> f64 {
        20.0 * x.log10()
    }

    #[test]
    fn quantizer_examples() {
        assert_eq!(quantize_1bit(0.3 * PI), 0.0);
        assert_eq!(quantize_1bit(0.6 * PI), PI);
        assert_eq!(quantize_1bit(PI / 2.0), 0.0);
        assert_eq!(quantize_1bit(-PI / 2.0), 0.0);
        assert_eq!(quantize_1bit(-0.9 * PI), PI);
        assert_eq!(quantize_1bit(2.0 * PI + 0.1), 0.0);
    }

    #[test]
    fn broadside_codeword_is_all_zero() {
        let cw = steering_codeword(&ula(), FC, 0.0).unwrap();
        assert!(cw.ideal.iter().all(|&p| p == 0.0));
        assert!(cw.quantized.iter().all(|&p| p == 0.0));
    }

    #[test]
    fn codeword_at_25_degrees() {
        let cw = steering_codeword(&ula(), FC, 25.0).unwrap();
        // -pi * sin(25 deg) = -1.3277 rad, which is closer to 0 than to pi.
        assert_abs_diff_eq!(cw.ideal[1], -PI * 25f64.to_radians().sin(), epsilon = 1e-12);
        assert_abs_diff_eq!(cw.ideal[1], -1.3277, epsilon = 1e-4);
        assert_eq!(cw.quantized[1], 0.0);
        // -2.6554 rad is closer to pi.
        assert_eq!(cw.quantized[2], PI);
    }

    #[test]
    fn steering_out_of_range_is_rejected() {
        assert!(steering_codeword(&ula(), FC, 90.0).is_err());
        assert!(steering_codeword(&ula(), FC, -95.0).is_err());
    }

    #[test]
    fn mirrored_pointing_gives_same_1bit_word() {
        // With elements indexed from the array edge the 1-bit word for -aod
        // equals the one for +aod; around the array centre it is the
        // element-reversed copy.
        for a in [5.0, 12.5, 25.0, 40.0, 60.0] {
            let p = steering_codeword(&ula(), FC, a).unwrap();
            let m = steering_codeword(&ula(), FC, -a).unwrap();
            assert_eq!(p.quantized, m.quantized, "aod {a}");
            for (x, y) in p.ideal.iter().zip(&m.ideal) {
                assert_abs_diff_eq!(wrap_pi(x + y), 0.0, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn coherent_peaks() {
        let zero = vec![0.0; 32];
        assert_abs_diff_eq!(
            array_factor(&ula(), FC, &zero, 0.0).unwrap().norm(),
            32.0,
            epsilon = 1e-9
        );
        let cw = steering_codeword(&ula(), FC, 37.0).unwrap();
        assert_abs_diff_eq!(
            array_factor(&ula(), FC, &cw.ideal, 37.0).unwrap().norm(),
            32.0,
            epsilon = 1e-9
        );
        assert!(array_factor(&ula(), FC, &zero[..5], 0.0).is_err());
    }

    #[test]
    fn mirror_lobe_of_1bit_steering() {
        let cw = steering_codeword(&ula(), FC, 25.0).unwrap();
        let scan = |lo: f64, hi: f64| {
            let n = ((hi - lo) / 0.1).round() as usize;
            (0..=n)
                .map(|i| lo + i as f64 * 0.1)
                .map(|t| array_factor(&ula(), FC, &cw.quantized, t).unwrap().norm())
                .fold(0.0, f64::max)
        };
        let main = scan(22.0, 28.0);
        let mirror = scan(-28.0, -22.0);
        assert!(
            (db(main) - db(mirror)).abs() <= 4.0,
            "main {main} mirror {mirror}"
        );
    }

    #[test]
    fn half_power_beamwidth_near_three_degrees() {
        let zero = vec![0.0; 32];
        let peak = 32.0;
        let mut t = 0.0;
        while array_factor(&ula(), FC, &zero, t).unwrap().norm() > peak / 2f64.sqrt() {
            t += 0.001;
        }
        let bw = 2.0 * t;
        assert!(bw > 2.8 && bw < 3.4, "beamwidth {bw}");
    }

    #[test]
    fn quantization_loss_at_steering_angles() {
        // Classical 1-bit loss is 2/pi (about 3.9 dB). Away from the few
        // angles where phases fall on the decision boundary the realised
        // peak stays within 2 dB of that figure.
        let floor = 2.0 / PI * 32.0 * 10f64.powf(-2.0 / 20.0);
        for a in [
            -55.0, -40.0, -25.0, -10.0, 5.0, 15.0, 20.0, 35.0, 45.0, 50.0,
        ] {
            let cw = steering_codeword(&ula(), FC, a).unwrap();
            let peak = (-20..=20)
                .map(|i| a + i as f64 * 0.1)
                .map(|t| array_factor(&ula(), FC, &cw.quantized, t).unwrap().norm())
                .fold(0.0, f64::max);
            assert!(peak >= floor, "aod {a}: peak {peak} < {floor}");
        }
    }

    #[test]
    fn codebook_covers_sweep() {
        let sweep = SweepPlan {
            start: -60.0,
            stop: 60.0,
            step: 5.0,
        };
        let cb = BeamCodebook::new(&ula(), FC, &sweep).unwrap();
        assert_eq!(cb.pointing_angles.len(), 25);
        assert!(cb.words.iter().flatten().all(|&p| p == 0.0 || p == PI));
        assert!(cb.word(25.0).is_some());
        assert!(cb.word(26.0).is_none());
    }

    #[test]
    fn rx_grid_layout() {
        let g = RxGrid { spacing: 0.005 };
        let o = g.offsets();
        assert_eq!(o[4], (0.0, 0.0));
        assert_eq!(o[0], (-0.005, -0.005));
        assert_eq!(o[8], (0.005, 0.005));
        let a = g.steering(FC, 33.0);
        assert_abs_diff_eq!(a[4].re, 1.0);
    }

    proptest! {
        #[test]
        fn zero_word_pattern_is_real_and_even(t in -89.0f64..89.0) {
            let zero = vec![0.0; 32];
            // Referenced to the array centre the all-zero pattern is real.
            let af = array_factor(&ula(), FC, &zero, t).unwrap();
            let k = 2.0 * PI * FC / SPEED_OF_LIGHT;
            let psi = k * ula().element_spacing * t.to_radians().sin();
            let centred = af * Complex64::from_polar(1.0, -psi * 31.0 / 2.0);
            prop_assert!(centred.im.abs() < 1e-9);
            let mirrored = array_factor(&ula(), FC, &zero, -t).unwrap();
            prop_assert!((af.norm() - mirrored.norm()).abs() < 1e-9);
        }

        #[test]
        fn pattern_depends_on_sine_only(t in -80.0f64..80.0, a in -60.0f64..60.0) {
            let cw = steering_codeword(&ula(), FC, a).unwrap();
            let supplementary = if t >= 0.0 { 180.0 - t } else { -180.0 - t };
            let x = array_factor(&ula(), FC, &cw.quantized, t).unwrap();
            let y = array_factor(&ula(), FC, &cw.quantized, supplementary).unwrap();
            prop_assert!((x - y).norm() < 1e-8);
        }
    }
}
