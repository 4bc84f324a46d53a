//! Kernel density and normality diagnostics for replicated normalized errors.

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::numeric::{ks_critical, ks_statistic};

/// `f̂_h(x) = (1/(Mh)) Σ φ((x − s_ℓ)/h)` at every grid point.
pub fn kernel_density(samples: &[f64], h: f64, grid: &[f64]) -> Result<Vec<(f64, f64)>> {
    if samples.is_empty() {
        return Err(Error::invalid("samples", "must be nonempty"));
    }
    if !(h > 0.0) {
        return Err(Error::invalid("h", "bandwidth must be positive"));
    }
    let norm = 1.0 / (samples.len() as f64 * h * (2.0 * std::f64::consts::PI).sqrt());
    Ok(grid
        .iter()
        .map(|&x| {
            let s: f64 = samples
                .iter()
                .map(|&e| {
                    let z = (x - e) / h;
                    (-0.5 * z * z).exp()
                })
                .sum();
            (x, norm * s)
        })
        .collect())
}

/// Uniform grid wide enough to hold essentially all of the kernel mass.
pub fn density_grid(samples: &[f64], h: f64, points: usize) -> Vec<f64> {
    let lo = samples.iter().copied().fold(f64::INFINITY, f64::min) - 6.0 * h;
    let hi = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 6.0 * h;
    let points = points.max(2);
    (0..points)
        .map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NormalityStats {
    pub n: usize,
    /// KS distance of `samples/√σ²` to the standard normal law.
    pub ks_stat: f64,
    pub ks_critical_1pct: f64,
    pub ks_critical_5pct: f64,
    pub skewness: f64,
    pub skewness_se: f64,
    pub excess_kurtosis: f64,
    pub kurtosis_se: f64,
}

impl NormalityStats {
    pub fn ks_passes_1pct(&self) -> bool {
        self.ks_stat < self.ks_critical_1pct
    }

    pub fn skewness_within(&self, ses: f64) -> bool {
        self.skewness.abs() < ses * self.skewness_se
    }
}

pub fn normality_stats(samples: &[f64], sigma2: f64) -> Result<NormalityStats> {
    if !(sigma2 > 0.0) {
        return Err(Error::invalid("sigma2", "must be positive"));
    }
    let n = samples.len();
    if n < 100 {
        return Err(Error::invalid("samples", "need at least 100 samples"));
    }
    let sd = sigma2.sqrt();
    let std_normal = Normal::standard();
    let mut scaled: Vec<f64> = samples.iter().map(|x| x / sd).collect();
    let ks_stat = ks_statistic(&mut scaled, |z| std_normal.cdf(z));

    let nf = n as f64;
    let mean = samples.iter().sum::<f64>() / nf;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for &x in samples {
        let d = x - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    m2 /= nf;
    m3 /= nf;
    m4 /= nf;
    let (skewness, excess_kurtosis) = if m2 > 0.0 {
        (m3 / m2.powf(1.5), m4 / (m2 * m2) - 3.0)
    } else {
        (0.0, 0.0)
    };
    let skewness_se = (6.0 * nf * (nf - 1.0) / ((nf - 2.0) * (nf + 1.0) * (nf + 3.0))).sqrt();
    let kurtosis_se = 2.0 * skewness_se * ((nf * nf - 1.0) / ((nf - 3.0) * (nf + 5.0))).sqrt();
    Ok(NormalityStats {
        n,
        ks_stat,
        ks_critical_1pct: ks_critical(n, 0.01),
        ks_critical_5pct: ks_critical(n, 0.05),
        skewness,
        skewness_se,
        excess_kurtosis,
        kurtosis_se,
    })
}
