//! Per-ray geometry correction: keep the density between the first salient sample seen
//! from the front and the first seen from the back (plus a margin), zero the rest.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::render::DensityProfile;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorrectionParams {
    /// Absolute density, or a fraction of the profile maximum when `relative`.
    pub threshold: f64,
    /// Samples retained on each side of the salient span.
    pub margin: usize,
    pub relative: bool,
    /// Lower bound on the effective threshold in relative mode.
    pub floor: f64,
}

impl Default for CorrectionParams {
    fn default() -> Self {
        CorrectionParams { threshold: 0.1, margin: 2, relative: true, floor: 1e-3 }
    }
}

impl CorrectionParams {
    pub fn absolute(threshold: f64, margin: usize) -> Self {
        CorrectionParams { threshold, margin, relative: false, floor: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = if self.relative {
            self.threshold > 0.0 && self.threshold <= 1.0 && self.floor >= 0.0
        } else {
            self.threshold > 0.0
        };
        if !ok || !self.threshold.is_finite() {
            return Err(Error::invalid(format!("correction parameters {self:?} out of range")));
        }
        Ok(())
    }

    /// Threshold actually compared against for this profile.
    pub fn effective_threshold(&self, sigma: &[f64]) -> f64 {
        if self.relative {
            let max = sigma.iter().copied().fold(0.0, f64::max);
            (self.threshold * max).max(self.floor)
        } else {
            self.threshold
        }
    }
}

/// Inclusive index range that survives correction, or `None` when no sample exceeds the
/// threshold (the profile is then left untouched).
pub fn retained_window(sigma: &[f64], params: &CorrectionParams) -> Option<(usize, usize)> {
    let thres = params.effective_threshold(sigma);
    let front = sigma.iter().position(|&s| s > thres)?;
    let back = sigma.iter().rposition(|&s| s > thres)?;
    let lo = front.saturating_sub(params.margin);
    let hi = back.saturating_add(params.margin).min(sigma.len() - 1);
    Some((lo, hi))
}

/// Zero everything outside `window`.
pub fn apply_window(sigma: &mut [f64], window: Option<(usize, usize)>) {
    if let Some((lo, hi)) = window {
        sigma[..lo].fill(0.0);
        sigma[hi + 1..].fill(0.0);
    }
}

pub fn correct_density(profile: &DensityProfile, params: &CorrectionParams) -> DensityProfile {
    let mut out = profile.clone();
    if !out.sigma.is_empty() {
        let window = retained_window(&out.sigma, params);
        apply_window(&mut out.sigma, window);
    }
    out
}
