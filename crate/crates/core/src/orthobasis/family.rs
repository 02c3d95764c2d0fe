use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::erf;

use crate::error::{Error, Result};

/// Basis evaluations for Gaussian inputs clamp the standardized coordinate
/// to this many standard deviations.
pub(crate) const GAUSSIAN_Z_GUARD: f64 = 8.0;

/// Marginal distribution of one input, together with its orthonormal
/// polynomial family (Legendre for uniform, Hermite for Gaussian).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MarginalFamily {
    Uniform { lower: f64, upper: f64 },
    Gaussian { mean: f64, stddev: f64 },
}

impl MarginalFamily {
    pub fn uniform(lower: f64, upper: f64) -> Result<Self> {
        let fam = MarginalFamily::Uniform { lower, upper };
        fam.validate()?;
        Ok(fam)
    }

    pub fn gaussian(mean: f64, stddev: f64) -> Result<Self> {
        let fam = MarginalFamily::Gaussian { mean, stddev };
        fam.validate()?;
        Ok(fam)
    }

    /// Standard uniform on `[-1, 1]`.
    pub fn legendre() -> Self {
        MarginalFamily::Uniform { lower: -1.0, upper: 1.0 }
    }

    /// Standard normal.
    pub fn hermite() -> Self {
        MarginalFamily::Gaussian { mean: 0.0, stddev: 1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            MarginalFamily::Uniform { lower, upper } => {
                if !(lower.is_finite() && upper.is_finite()) {
                    return Err(Error::NonFinite("uniform bounds"));
                }
                if lower >= upper {
                    return Err(Error::invalid(format!(
                        "uniform family needs lower < upper, got [{lower}, {upper}]"
                    )));
                }
            }
            MarginalFamily::Gaussian { mean, stddev } => {
                if !(mean.is_finite() && stddev.is_finite()) {
                    return Err(Error::NonFinite("gaussian parameters"));
                }
                if stddev <= 0.0 {
                    return Err(Error::invalid(format!(
                        "gaussian family needs stddev > 0, got {stddev}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Maps a physical value to standardized coordinates.
    #[inline]
    pub fn standardize(&self, x: f64) -> f64 {
        match *self {
            MarginalFamily::Uniform { lower, upper } => (2.0 * x - (lower + upper)) / (upper - lower),
            MarginalFamily::Gaussian { mean, stddev } => (x - mean) / stddev,
        }
    }

    #[inline]
    pub fn physical(&self, z: f64) -> f64 {
        match *self {
            MarginalFamily::Uniform { lower, upper } => 0.5 * (lower + upper) + 0.5 * (upper - lower) * z,
            MarginalFamily::Gaussian { mean, stddev } => mean + stddev * z,
        }
    }

    /// `d z / d x` of the standardizing map.
    pub fn standardize_scale(&self) -> f64 {
        match *self {
            MarginalFamily::Uniform { lower, upper } => 2.0 / (upper - lower),
            MarginalFamily::Gaussian { stddev, .. } => 1.0 / stddev,
        }
    }

    /// Square root of the k-th recurrence coefficient of the monic family in
    /// standardized coordinates (`k >= 1`). Both families are symmetric, so
    /// the diagonal recurrence coefficients vanish.
    #[inline]
    pub(crate) fn sqrt_beta(&self, k: usize) -> f64 {
        let k = k as f64;
        match self {
            MarginalFamily::Uniform { .. } => k / (4.0 * k * k - 1.0).sqrt(),
            MarginalFamily::Gaussian { .. } => k.sqrt(),
        }
    }

    #[inline]
    fn guard(&self, z: f64) -> f64 {
        match self {
            MarginalFamily::Uniform { .. } => z,
            MarginalFamily::Gaussian { .. } => z.clamp(-GAUSSIAN_Z_GUARD, GAUSSIAN_Z_GUARD),
        }
    }

    /// Orthonormal `psi_k(x)` for a physical value `x`.
    pub fn eval(&self, k: usize, x: f64) -> Result<f64> {
        if !x.is_finite() {
            return Err(Error::NonFinite("univariate evaluation point"));
        }
        let mut vals = vec![0.0; k + 1];
        self.eval_all_std(self.standardize(x), &mut vals);
        Ok(vals[k])
    }

    /// Fills `out[k] = psi_k(z)` for `k < out.len()`, `z` standardized.
    #[inline]
    pub(crate) fn eval_all_std(&self, z: f64, out: &mut [f64]) {
        if out.is_empty() {
            return;
        }
        let z = self.guard(z);
        out[0] = 1.0;
        if out.len() == 1 {
            return;
        }
        out[1] = z / self.sqrt_beta(1);
        for k in 1..out.len() - 1 {
            out[k + 1] = (z * out[k] - self.sqrt_beta(k) * out[k - 1]) / self.sqrt_beta(k + 1);
        }
    }

    /// Values and derivatives with respect to the standardized coordinate.
    pub(crate) fn eval_all_with_derivative_std(&self, z: f64, vals: &mut [f64], ders: &mut [f64]) {
        debug_assert_eq!(vals.len(), ders.len());
        if vals.is_empty() {
            return;
        }
        let z = self.guard(z);
        vals[0] = 1.0;
        ders[0] = 0.0;
        if vals.len() == 1 {
            return;
        }
        let b1 = self.sqrt_beta(1);
        vals[1] = z / b1;
        ders[1] = 1.0 / b1;
        for k in 1..vals.len() - 1 {
            let bk = self.sqrt_beta(k);
            let bk1 = self.sqrt_beta(k + 1);
            vals[k + 1] = (z * vals[k] - bk * vals[k - 1]) / bk1;
            ders[k + 1] = (vals[k] + z * ders[k] - bk * ders[k - 1]) / bk1;
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            MarginalFamily::Uniform { lower, upper } => 0.5 * (lower + upper),
            MarginalFamily::Gaussian { mean, .. } => mean,
        }
    }

    pub fn variance(&self) -> f64 {
        match *self {
            MarginalFamily::Uniform { lower, upper } => (upper - lower).powi(2) / 12.0,
            MarginalFamily::Gaussian { stddev, .. } => stddev * stddev,
        }
    }

    /// Closed support, infinite for Gaussian families.
    pub fn support(&self) -> (f64, f64) {
        match *self {
            MarginalFamily::Uniform { lower, upper } => (lower, upper),
            MarginalFamily::Gaussian { .. } => (f64::NEG_INFINITY, f64::INFINITY),
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match *self {
            MarginalFamily::Uniform { lower, upper } => ((x - lower) / (upper - lower)).clamp(0.0, 1.0),
            MarginalFamily::Gaussian { mean, stddev } => std_normal_cdf((x - mean) / stddev),
        }
    }

    /// Inverse CDF; `u` is clamped into the open unit interval for Gaussian
    /// families.
    pub fn inverse_cdf(&self, u: f64) -> f64 {
        match *self {
            MarginalFamily::Uniform { lower, upper } => lower + (upper - lower) * u.clamp(0.0, 1.0),
            MarginalFamily::Gaussian { mean, stddev } => mean + stddev * std_normal_inverse_cdf(u),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            MarginalFamily::Uniform { lower, upper } => lower + (upper - lower) * rng.random::<f64>(),
            MarginalFamily::Gaussian { mean, stddev } => {
                let z: f64 = StandardNormal.sample(rng);
                mean + stddev * z
            }
        }
    }

    /// Short human-readable description, e.g. `U[0, 1]`.
    pub fn describe(&self) -> String {
        match *self {
            MarginalFamily::Uniform { lower, upper } => format!("U[{lower}, {upper}]"),
            MarginalFamily::Gaussian { mean, stddev } => format!("N({mean}, {stddev}^2)"),
        }
    }
}

pub(crate) fn std_normal_cdf(z: f64) -> f64 {
    0.5 * erf::erfc(-z / std::f64::consts::SQRT_2)
}

pub(crate) fn std_normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Inverse of the standard normal CDF, clamped to `[1e-300, 1 - 1e-16]`.
pub(crate) fn std_normal_inverse_cdf(u: f64) -> f64 {
    let u = u.clamp(1e-300, 1.0 - 1e-16);
    let z = -std::f64::consts::SQRT_2 * erf::erfc_inv(2.0 * u);
    // one Newton step; the series inverse alone is good to about 1e-11
    let pdf = std_normal_pdf(z);
    if pdf > 1e-290 {
        let err = if z > 0.0 { (1.0 - u) - std_normal_cdf(-z) } else { u - std_normal_cdf(z) };
        let step = err / pdf;
        if z > 0.0 { z - step } else { z + step }
    } else {
        z
    }
}
