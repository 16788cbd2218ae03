//! Mean / 95% confidence-interval aggregation across experimental
//! settings. Student-t with n-1 degrees of freedom; with the small
//! setting counts used here a normal approximation would be far too
//! tight.

use statrs::distribution::{ContinuousCDF, StudentsT};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConfidenceInterval {
    pub mean: f64,
    pub low: f64,
    pub high: f64,
    /// False when only one value was available; the interval degenerates
    /// to mean +/- 0 and is flagged rather than invented.
    pub defined: bool,
}

/// Two-sided 97.5% Student-t quantile for the given degrees of freedom.
pub fn t_quantile_975(dof: usize) -> f64 {
    StudentsT::new(0.0, 1.0, dof as f64)
        .expect("valid dof")
        .inverse_cdf(0.975)
}

/// 95% t-interval around the sample mean. Identical values collapse to
/// a zero-width interval exactly, with no accumulation rounding.
pub fn mean_ci95(values: &[f64]) -> ConfidenceInterval {
    assert!(!values.is_empty(), "mean_ci95 needs at least one value");
    let n = values.len();
    if n == 1 {
        let mean = values[0];
        return ConfidenceInterval { mean, low: mean, high: mean, defined: false };
    }
    if values.iter().all(|v| *v == values[0]) {
        let mean = values[0];
        return ConfidenceInterval { mean, low: mean, high: mean, defined: true };
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    let sd = (ss / (n - 1) as f64).sqrt();
    let half = t_quantile_975(n - 1) * sd / (n as f64).sqrt();
    ConfidenceInterval { mean, low: mean - half, high: mean + half, defined: true }
}
