use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Closed dosage interval `[min, max]` of one treatment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DosageRange {
    pub min: f64,
    pub max: f64,
}

impl DosageRange {
    /// The unit range used by every generator: `(0, 1]` represented as
    /// `[1e-3, 1]`.
    pub const UNIT: DosageRange = DosageRange { min: 1e-3, max: 1.0 };

    pub fn new(min: f64, max: f64) -> Result<Self> {
        if !(min.is_finite() && max.is_finite() && min < max) {
            return Err(Error::InvalidConfig(format!(
                "dosage range requires finite min < max, got [{min}, {max}]"
            )));
        }
        Ok(Self { min, max })
    }

    #[inline]
    pub fn width(&self) -> f64 {
        self.max - self.min
    }

    #[inline]
    pub fn contains(&self, s: f64) -> bool {
        s >= self.min && s <= self.max
    }

    pub fn check(&self, s: f64) -> Result<()> {
        if self.contains(s) {
            Ok(())
        } else {
            Err(Error::DosageOutOfRange {
                dosage: s,
                min: self.min,
                max: self.max,
            })
        }
    }

    #[inline]
    pub fn clamp(&self, s: f64) -> f64 {
        s.clamp(self.min, self.max)
    }

    /// `n + 1` equally spaced nodes covering the range, endpoints included.
    pub fn nodes(&self, intervals: usize) -> Vec<f64> {
        let h = self.width() / intervals as f64;
        (0..=intervals)
            .map(|i| {
                if i == intervals {
                    self.max
                } else {
                    self.min + h * i as f64
                }
            })
            .collect()
    }

    /// Index of the equal-width stratum holding `s`:
    /// `floor(E (s - min) / (max - min))`, with `s == max` mapped to `E - 1`.
    pub fn stratum_index(&self, s: f64, strata: usize) -> Result<usize> {
        if strata == 0 {
            return Err(Error::InvalidConfig("number of strata must be >= 1".into()));
        }
        self.check(s)?;
        let raw = ((s - self.min) / self.width() * strata as f64).floor() as usize;
        Ok(raw.min(strata - 1))
    }

    /// Bounds of stratum `e` out of `strata`.
    pub fn stratum_bounds(&self, e: usize, strata: usize) -> (f64, f64) {
        let w = self.width() / strata as f64;
        let lo = self.min + w * e as f64;
        let hi = if e + 1 == strata {
            self.max
        } else {
            self.min + w * (e + 1) as f64
        };
        (lo, hi)
    }
}
