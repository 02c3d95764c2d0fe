use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::orthobasis::{std_normal_cdf, std_normal_pdf};

/// Kernels farther than this many bandwidths from a point are ignored.
const KERNEL_REACH: f64 = 8.5;
/// Grid size of the tabulated CDF.
const TABLE_POINTS: usize = 2049;
/// Above this many samples the data are linearly binned before smoothing.
const BINNING_THRESHOLD: usize = 2048;
const BINS: usize = 2048;
/// Absolute tolerance of the numerical CDF inversion.
pub const INVERSION_TOL: f64 = 1e-10;

/// Bandwidth selection for the marginal density estimates.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BandwidthRule {
    /// `0.9 min(sd, IQR / 1.34) n^(-1/5)`.
    #[default]
    Silverman,
    Fixed(f64),
}

impl BandwidthRule {
    pub fn bandwidth(&self, samples: &[f64]) -> Result<f64> {
        match *self {
            BandwidthRule::Fixed(h) if h > 0.0 && h.is_finite() => Ok(h),
            BandwidthRule::Fixed(h) => Err(Error::invalid(format!("bandwidth must be positive, got {h}"))),
            BandwidthRule::Silverman => {
                let n = samples.len();
                if n < 2 {
                    return Err(Error::TooFewSamples { got: n, needed: 2, context: "bandwidth selection" });
                }
                let sd = crate::linalg::sample_variance(samples).sqrt();
                let mut sorted = samples.to_vec();
                sorted.sort_by(f64::total_cmp);
                let iqr = quantile(&sorted, 0.75) - quantile(&sorted, 0.25);
                let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
                if !(spread > 0.0) {
                    return Err(Error::invalid("degenerate marginal: retained samples have zero spread"));
                }
                Ok(0.9 * spread * (n as f64).powf(-0.2))
            }
        }
    }
}

/// Linear-interpolation quantile of sorted data.
pub(crate) fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Gaussian-kernel density estimate on an interval support. Mass that the
/// kernels would place beyond a finite bound is reflected back inside.
///
/// The CDF is tabulated once and interpolated by a monotone cubic Hermite
/// spline, which is what [`cdf`](Self::cdf), [`pdf`](Self::pdf) and
/// [`inverse_cdf`](Self::inverse_cdf) use.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct KernelDensity {
    bandwidth: f64,
    samples: usize,
    grid: Vec<f64>,
    cdf: Vec<f64>,
    slope: Vec<f64>,
}

impl KernelDensity {
    pub fn fit(samples: &[f64], support: (f64, f64), rule: BandwidthRule) -> Result<Self> {
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("density samples"));
        }
        let h = rule.bandwidth(samples)?;
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for &v in samples {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        let (a, b) = support;
        if lo < a || hi > b {
            return Err(Error::invalid("density samples fall outside the declared support"));
        }
        let (points, weights) = weighted_points(samples, lo, hi);
        // reflect mass near finite bounds
        let mut kernels: Vec<(f64, f64)> = Vec::with_capacity(points.len());
        for (&p, &w) in points.iter().zip(&weights) {
            kernels.push((p, w));
            if a.is_finite() && p - a < KERNEL_REACH * h {
                kernels.push((2.0 * a - p, w));
            }
            if b.is_finite() && b - p < KERNEL_REACH * h {
                kernels.push((2.0 * b - p, w));
            }
        }
        kernels.sort_by(|x, y| x.0.total_cmp(&y.0));
        let centers: Vec<f64> = kernels.iter().map(|k| k.0).collect();
        let mut prefix = Vec::with_capacity(kernels.len() + 1);
        prefix.push(0.0);
        for k in &kernels {
            prefix.push(prefix.last().unwrap() + k.1);
        }
        let g0 = a.max(lo - KERNEL_REACH * h);
        let g1 = b.min(hi + KERNEL_REACH * h);
        let step = (g1 - g0) / (TABLE_POINTS - 1) as f64;
        let grid: Vec<f64> = (0..TABLE_POINTS).map(|i| g0 + step * i as f64).collect();
        let mut cdf = Vec::with_capacity(TABLE_POINTS);
        let mut pdf = Vec::with_capacity(TABLE_POINTS);
        for &x in &grid {
            let start = centers.partition_point(|&c| c < x - KERNEL_REACH * h);
            let end = centers.partition_point(|&c| c <= x + KERNEL_REACH * h);
            let mut f = prefix[start];
            let mut p = 0.0;
            for &(c, w) in &kernels[start..end] {
                let z = (x - c) / h;
                f += w * std_normal_cdf(z);
                p += w * std_normal_pdf(z);
            }
            cdf.push(f);
            pdf.push(p / h);
        }
        let (f0, f1) = (cdf[0], cdf[TABLE_POINTS - 1]);
        let mass = f1 - f0;
        if !(mass > 0.0) {
            return Err(Error::Numerical("density estimate has no mass on its support".into()));
        }
        for (f, p) in cdf.iter_mut().zip(pdf.iter_mut()) {
            *f = ((*f - f0) / mass).clamp(0.0, 1.0);
            *p /= mass;
        }
        for i in 1..TABLE_POINTS {
            if cdf[i] < cdf[i - 1] {
                cdf[i] = cdf[i - 1];
            }
        }
        let slope = monotone_slopes(&grid, &cdf, &pdf);
        Ok(KernelDensity { bandwidth: h, samples: samples.len(), grid, cdf, slope })
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn sample_count(&self) -> usize {
        self.samples
    }

    /// Range outside which the density is zero.
    pub fn range(&self) -> (f64, f64) {
        (self.grid[0], self.grid[self.grid.len() - 1])
    }

    fn locate(&self, x: f64) -> usize {
        let n = self.grid.len();
        let step = (self.grid[n - 1] - self.grid[0]) / (n - 1) as f64;
        (((x - self.grid[0]) / step).floor() as usize).min(n - 2)
    }

    fn hermite(&self, i: usize, x: f64) -> (f64, f64) {
        let (x0, x1) = (self.grid[i], self.grid[i + 1]);
        let dx = x1 - x0;
        let t = (x - x0) / dx;
        let (y0, y1, m0, m1) = (self.cdf[i], self.cdf[i + 1], self.slope[i] * dx, self.slope[i + 1] * dx);
        let t2 = t * t;
        let t3 = t2 * t;
        let v = (2.0 * t3 - 3.0 * t2 + 1.0) * y0 + (t3 - 2.0 * t2 + t) * m0 + (-2.0 * t3 + 3.0 * t2) * y1 + (t3 - t2) * m1;
        let dv = ((6.0 * t2 - 6.0 * t) * y0 + (3.0 * t2 - 4.0 * t + 1.0) * m0 + (-6.0 * t2 + 6.0 * t) * y1
            + (3.0 * t2 - 2.0 * t) * m1)
            / dx;
        (v.clamp(y0, y1), dv.max(0.0))
    }

    pub fn cdf(&self, x: f64) -> f64 {
        let (lo, hi) = self.range();
        if x <= lo {
            0.0
        } else if x >= hi {
            1.0
        } else {
            self.hermite(self.locate(x), x).0
        }
    }

    pub fn pdf(&self, x: f64) -> f64 {
        let (lo, hi) = self.range();
        if x < lo || x > hi {
            0.0
        } else {
            self.hermite(self.locate(x), x).1
        }
    }

    /// Smallest `x` with `cdf(x) >= u` up to [`INVERSION_TOL`], by bisection
    /// on the interpolated CDF.
    pub fn inverse_cdf(&self, u: f64) -> f64 {
        let (lo, hi) = self.range();
        if !(u > 0.0) {
            return lo;
        }
        if u >= 1.0 {
            return hi;
        }
        let i = self.cdf.partition_point(|&f| f < u).clamp(1, self.cdf.len() - 1) - 1;
        let (mut a, mut b) = (self.grid[i], self.grid[i + 1]);
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            let f = self.hermite(i, m).0;
            if (f - u).abs() <= INVERSION_TOL * 1e-2 || b - a <= f64::EPSILON * m.abs().max(1e-300) {
                return m;
            }
            if f < u {
                a = m;
            } else {
                b = m;
            }
        }
        0.5 * (a + b)
    }
}

fn weighted_points(samples: &[f64], lo: f64, hi: f64) -> (Vec<f64>, Vec<f64>) {
    let n = samples.len();
    if n <= BINNING_THRESHOLD || hi <= lo {
        return (samples.to_vec(), vec![1.0 / n as f64; n]);
    }
    // linear binning onto a fine grid
    let step = (hi - lo) / (BINS - 1) as f64;
    let mut w = vec![0.0; BINS];
    for &v in samples {
        let pos = (v - lo) / step;
        let k = (pos.floor() as usize).min(BINS - 2);
        let frac = pos - k as f64;
        w[k] += (1.0 - frac) / n as f64;
        w[k + 1] += frac / n as f64;
    }
    let pts = (0..BINS).map(|k| lo + step * k as f64).collect();
    (pts, w)
}

/// Fritsch-Carlson limiting of the node derivatives so the Hermite spline
/// through nondecreasing data stays nondecreasing.
fn monotone_slopes(x: &[f64], y: &[f64], d: &[f64]) -> Vec<f64> {
    let mut m: Vec<f64> = d.iter().map(|v| v.max(0.0)).collect();
    for i in 0..x.len() - 1 {
        let delta = (y[i + 1] - y[i]) / (x[i + 1] - x[i]);
        if delta == 0.0 {
            m[i] = 0.0;
            m[i + 1] = 0.0;
            continue;
        }
        let (a, b) = (m[i] / delta, m[i + 1] / delta);
        let s = a * a + b * b;
        if s > 9.0 {
            let tau = 3.0 / s.sqrt();
            m[i] = tau * a * delta;
            m[i + 1] = tau * b * delta;
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::orthobasis::MarginalFamily;
    use crate::sampling::sample_product;
    use approx::assert_abs_diff_eq;

    #[test]
    fn silverman_bandwidth() {
        let x: Vec<f64> = (0..100).map(|i| i as f64 / 99.0).collect();
        let h = BandwidthRule::Silverman.bandwidth(&x).unwrap();
        let sd = crate::linalg::sample_variance(&x).sqrt();
        assert_abs_diff_eq!(h, 0.9 * sd.min(0.5 / 1.34) * 100f64.powf(-0.2), epsilon = 1e-12);
        assert!(BandwidthRule::Silverman.bandwidth(&[1.0]).is_err());
        assert!(BandwidthRule::Silverman.bandwidth(&[2.0; 10]).is_err());
    }

    #[test]
    fn inversion_roundtrip() {
        let x: Vec<f64> = sample_product(&[MarginalFamily::hermite()], 500, 3).iter().copied().collect();
        let k = KernelDensity::fit(&x, (f64::NEG_INFINITY, f64::INFINITY), BandwidthRule::Silverman).unwrap();
        let mut prev = f64::NEG_INFINITY;
        for i in 1..200 {
            let u = i as f64 / 200.0;
            let q = k.inverse_cdf(u);
            assert!(q >= prev);
            prev = q;
            assert_abs_diff_eq!(k.cdf(q), u, epsilon = INVERSION_TOL);
        }
    }

    #[test]
    fn reflected_uniform_is_flat() {
        let x: Vec<f64> = sample_product(&[MarginalFamily::uniform(0.0, 1.0).unwrap()], 50_000, 8).iter().copied().collect();
        let k = KernelDensity::fit(&x, (0.0, 1.0), BandwidthRule::Silverman).unwrap();
        assert_eq!(k.range(), (0.0, 1.0));
        for &t in &[0.0, 0.01, 0.25, 0.5, 0.9, 1.0] {
            assert_abs_diff_eq!(k.pdf(t), 1.0, epsilon = 0.06);
            assert_abs_diff_eq!(k.cdf(t), t, epsilon = 0.01);
        }
    }

    #[test]
    fn gaussian_density_matches() {
        let x: Vec<f64> = sample_product(&[MarginalFamily::hermite()], 20_000, 9).iter().copied().collect();
        let k = KernelDensity::fit(&x, (f64::NEG_INFINITY, f64::INFINITY), BandwidthRule::Silverman).unwrap();
        for &z in &[-2.0, -0.5, 0.0, 1.0, 1.5] {
            assert_abs_diff_eq!(k.cdf(z), std_normal_cdf(z), epsilon = 0.01);
            assert_abs_diff_eq!(k.pdf(z), std_normal_pdf(z), epsilon = 0.015);
        }
    }

    #[test]
    fn outside_support_rejected() {
        assert!(KernelDensity::fit(&[0.5, 1.5, 0.2], (0.0, 1.0), BandwidthRule::Fixed(0.1)).is_err());
    }
}
