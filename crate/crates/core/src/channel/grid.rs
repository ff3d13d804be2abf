use serde::{Deserialize, Serialize};

use crate::{Error, Result, SPEED_OF_LIGHT};

/// Uniform frequency grid [Hz]; bin `i` sits at `f_start + i * f_step`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrequencyGrid {
    pub f_start: f64,
    pub f_stop: f64,
    pub f_step: f64,
    pub carrier: f64,
}

impl FrequencyGrid {
    pub fn new(f_start: f64, f_stop: f64, f_step: f64, carrier: f64) -> Result<Self> {
        let g = Self {
            f_start,
            f_stop,
            f_step,
            carrier,
        };
        g.validate()?;
        Ok(g)
    }

    /// Grid of `n_bins` bins starting at `f_start`.
    pub fn from_bins(f_start: f64, f_step: f64, n_bins: usize, carrier: f64) -> Result<Self> {
        if n_bins < 2 {
            return Err(Error::config("frequency grid needs at least two bins"));
        }
        Self::new(
            f_start,
            f_start + (n_bins - 1) as f64 * f_step,
            f_step,
            carrier,
        )
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.f_start, self.f_stop, self.f_step, self.carrier]
            .iter()
            .all(|v| v.is_finite());
        if !finite || !(self.f_step > 0.0) || !(self.f_start < self.f_stop) {
            return Err(Error::config(format!(
                "frequency grid needs f_start < f_stop and f_step > 0, got {self:?}"
            )));
        }
        let n = (self.f_stop - self.f_start) / self.f_step;
        if (n - n.round()).abs() > 1e-6 {
            return Err(Error::config(format!(
                "frequency span {}..{} Hz is not a multiple of {} Hz",
                self.f_start, self.f_stop, self.f_step
            )));
        }
        if self.carrier < self.f_start || self.carrier > self.f_stop {
            return Err(Error::config(format!(
                "carrier {} Hz outside {}..{} Hz",
                self.carrier, self.f_start, self.f_stop
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        ((self.f_stop - self.f_start) / self.f_step).round() as usize + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn freq(&self, i: usize) -> f64 {
        self.f_start + i as f64 * self.f_step
    }

    pub fn frequencies(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len()).map(|i| self.freq(i))
    }

    pub fn bandwidth(&self) -> f64 {
        self.f_stop - self.f_start
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier
    }

    /// Index range `[lo, hi]` of the bins inside `[f_lo, f_hi]`, if any.
    pub fn index_range(&self, f_lo: f64, f_hi: f64) -> Option<(usize, usize)> {
        if !(f_lo <= f_hi) {
            return None;
        }
        let eps = 1e-6;
        let lo = ((f_lo - self.f_start) / self.f_step - eps).ceil().max(0.0) as usize;
        let hi_f = ((f_hi - self.f_start) / self.f_step + eps).floor();
        if hi_f < 0.0 {
            return None;
        }
        let hi = (hi_f as usize).min(self.len() - 1);
        (lo <= hi).then_some((lo, hi))
    }
}
