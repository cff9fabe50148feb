//! Distortion metrics for compressed weight tensors.
//!
//! MSE is accumulated in wide integers and divided once, so equal tensors
//! give exactly 0.0 and comparisons between candidate constants are free of
//! float rounding. KL divergence works on 256-bin value histograms with a
//! small additive smoothing so empty bins never produce infinities.

use crate::error::{Error, Result};

/// Additive smoothing applied to each histogram bin before normalization.
pub const KL_SMOOTHING: f64 = 1e-6;

/// Value histogram over the full int8 range; bin b counts value b - 128.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Histogram256 {
    counts: [u64; 256],
    total: u64,
}

impl Histogram256 {
    pub fn from_values(values: &[i8]) -> Self {
        let mut counts = [0u64; 256];
        for &v in values {
            counts[(v as i16 + 128) as usize] += 1;
        }
        Histogram256 { counts, total: values.len() as u64 }
    }

    pub fn counts(&self) -> &[u64; 256] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    /// Smoothed, renormalized probability mass per bin.
    pub fn probabilities(&self) -> [f64; 256] {
        let denom = self.total as f64 + 256.0 * KL_SMOOTHING;
        let mut p = [0.0; 256];
        for (i, &c) in self.counts.iter().enumerate() {
            p[i] = (c as f64 + KL_SMOOTHING) / denom;
        }
        p
    }
}

/// Mean squared error between two equal-length int8 tensors.
pub fn mse(a: &[i8], b: &[i8]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!(
            "mse over tensors of different lengths ({} vs {})",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() {
        return Err(Error::Config("mse of empty tensors is undefined".into()));
    }
    let sum: i64 = a
        .iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x as i64 - y as i64;
            d * d
        })
        .sum();
    Ok(sum as f64 / a.len() as f64)
}

/// KL divergence D(original || compressed) between the value distributions,
/// in nats. Non-negative; exactly 0.0 for identical histograms.
pub fn kl_divergence(original: &Histogram256, compressed: &Histogram256) -> f64 {
    let p = original.probabilities();
    let q = compressed.probabilities();
    let mut kl = 0.0;
    for i in 0..256 {
        kl += p[i] * (p[i] / q[i]).ln();
    }
    // Smoothed distributions are strictly positive, so the sum is finite;
    // tiny negative float residue from identical inputs clamps to zero.
    kl.max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mse_of_identical_tensors_is_zero() {
        let t: Vec<i8> = (-128..=127).collect();
        assert_eq!(mse(&t, &t).unwrap(), 0.0);
    }

    #[test]
    fn mse_counts_squared_differences_exactly() {
        // Offsets 1 and -3: (1 + 9) / 2 = 5.
        assert_eq!(mse(&[10, -10], &[9, -7]).unwrap(), 5.0);
        // Extremes: (127 - (-128))^2 = 65025.
        assert_eq!(mse(&[127], &[-128]).unwrap(), 65025.0);
    }

    #[test]
    fn mse_rejects_mismatched_or_empty_inputs() {
        assert!(mse(&[1, 2], &[1]).is_err());
        assert!(mse(&[], &[]).is_err());
    }

    #[test]
    fn kl_of_identical_histograms_is_zero() {
        let h = Histogram256::from_values(&[0, 1, 1, -5, 100]);
        assert_eq!(kl_divergence(&h, &h), 0.0);
    }

    #[test]
    fn kl_is_nonnegative_and_finite_with_disjoint_support() {
        let a = Histogram256::from_values(&[-100; 32]);
        let b = Histogram256::from_values(&[100; 32]);
        let kl = kl_divergence(&a, &b);
        assert!(kl.is_finite());
        assert!(kl > 0.0);
    }

    #[test]
    fn kl_grows_as_distributions_diverge() {
        let orig = Histogram256::from_values(&(-64..64).collect::<Vec<i8>>());
        let near: Vec<i8> = (-64..64).map(|v| v.clamp(-60, 60) as i8).collect();
        let far: Vec<i8> = (-64..64).map(|v| (v / 16 * 16) as i8).collect();
        let kl_near = kl_divergence(&orig, &Histogram256::from_values(&near));
        let kl_far = kl_divergence(&orig, &Histogram256::from_values(&far));
        assert!(kl_near < kl_far);
    }

    #[test]
    fn histogram_covers_full_range_without_panic() {
        let h = Histogram256::from_values(&[-128, 127]);
        assert_eq!(h.counts()[0], 1);
        assert_eq!(h.counts()[255], 1);
        assert_eq!(h.total(), 2);
    }
}
