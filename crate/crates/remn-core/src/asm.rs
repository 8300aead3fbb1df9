//! Adaptive sampling: decides per frame whether the query frame becomes a
//! memory frame, based on how much each object's mask moved or deformed since
//! the latest memory frame.

use crate::error::{Error, Result};
use crate::tensor::LabelMask;

/// Sampling threshold σ in (0, 1).
#[derive(Debug, Clone, Copy)]
pub struct SamplingConfig {
    pub sigma: f64,
}

impl SamplingConfig {
    pub fn new(sigma: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&sigma) || sigma <= 0.0 {
            return Err(Error::argument("sigma must lie in (0, 1)"));
        }
        Ok(SamplingConfig { sigma })
    }
}

impl Default for SamplingConfig {
    fn default() -> Self {
        SamplingConfig { sigma: 0.1 }
    }
}

/// D = 1 − IoU between two binary masks.
///
/// Both empty → 0 (no evidence of change); exactly one empty → 1.
pub fn variation_rate(current: &LabelMask, reference: &LabelMask) -> Result<f64> {
    if current.height() != reference.height() || current.width() != reference.width() {
        return Err(Error::argument("variation_rate shape mismatch"));
    }
    let mut intersection = 0usize;
    let mut union = 0usize;
    for (&a, &b) in current.data().iter().zip(reference.data()) {
        let (a, b) = (a > 0, b > 0);
        if a && b {
            intersection += 1;
        }
        if a || b {
            union += 1;
        }
    }
    if union == 0 {
        return Ok(0.0);
    }
    Ok(1.0 - intersection as f64 / union as f64)
}

/// Store iff any object's variation rate exceeds σ.
pub fn should_store(
    current: &LabelMask,
    reference: &LabelMask,
    cfg: &SamplingConfig,
) -> Result<bool> {
    if current.height() != reference.height() || current.width() != reference.width() {
        return Err(Error::argument("should_store shape mismatch"));
    }
    let labels = current.max_label().max(reference.max_label());
    for label in 1..=labels {
        let d = variation_rate(&current.binary_slice(label), &reference.binary_slice(label))?;
        if d > cfg.sigma {
            return Ok(true);
        }
    }
    Ok(false)
}
