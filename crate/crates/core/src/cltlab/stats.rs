//! Empirical distances to a centered normal law, k-statistics and their
//! standard errors.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

pub const MIN_DISTANCE_SAMPLES: usize = 100;
pub const MIN_CUMULANT_SAMPLES: usize = 8;
pub const BOOTSTRAP_RESAMPLES: usize = 200;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Wasserstein,
    Kolmogorov,
}

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("unit normal")
}

pub fn normal_cdf(x: f64) -> f64 {
    std_normal().cdf(x)
}

pub fn normal_quantile(p: f64) -> f64 {
    std_normal().inverse_cdf(p)
}

fn check_distance_input(samples: &[f64], sd: f64) -> Result<()> {
    if samples.len() < MIN_DISTANCE_SAMPLES {
        return Err(Error::TooFewSamples {
            needed: MIN_DISTANCE_SAMPLES,
            got: samples.len(),
        });
    }
    if !(sd.is_finite() && sd > 0.0) {
        return Err(Error::invalid("target_sd", format!("must be positive, got {sd}")));
    }
    Ok(())
}

/// Distance between the empirical law of `samples` and `N(0, sd²)`.
///
/// Wasserstein pairs the order statistics with the midpoint quantiles
/// `sd · q((i - 1/2)/n)`; Kolmogorov is the largest ECDF gap.
pub fn empirical_distance(samples: &[f64], sd: f64, metric: Metric) -> Result<f64> {
    check_distance_input(samples, sd)?;
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let grid = quantile_grid(sorted.len(), sd, metric);
    Ok(sorted_distance(&sorted, &grid, sd, metric))
}

/// `sd · q((i - 1/2)/n)` for the Wasserstein metric, empty otherwise.
fn quantile_grid(n: usize, sd: f64, metric: Metric) -> Vec<f64> {
    match metric {
        Metric::Wasserstein => {
            let unit = std_normal();
            (0..n)
                .map(|i| sd * unit.inverse_cdf((i as f64 + 0.5) / n as f64))
                .collect()
        }
        Metric::Kolmogorov => Vec::new(),
    }
}

fn sorted_distance(sorted: &[f64], grid: &[f64], sd: f64, metric: Metric) -> f64 {
    let n = sorted.len() as f64;
    let unit = std_normal();
    match metric {
        Metric::Wasserstein => sorted.iter().zip(grid).map(|(x, q)| (x - q).abs()).sum::<f64>() / n,
        Metric::Kolmogorov => sorted.iter().enumerate().fold(0.0f64, |acc, (i, x)| {
            let f = unit.cdf(x / sd);
            acc.max(((i + 1) as f64 / n - f).max(f - i as f64 / n))
        }),
    }
}

/// Unbiased k-statistics `k₁ ..= k₄`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Cumulants {
    pub mean: f64,
    pub variance: f64,
    pub cum3: f64,
    pub cum4: f64,
}

fn central_moments(xs: &[f64]) -> (f64, f64, f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for x in xs {
        let d = x - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    (mean, m2 / n, m3 / n, m4 / n)
}

pub fn empirical_cumulants(samples: &[f64]) -> Result<Cumulants> {
    if samples.len() < MIN_CUMULANT_SAMPLES {
        return Err(Error::TooFewSamples {
            needed: MIN_CUMULANT_SAMPLES,
            got: samples.len(),
        });
    }
    let n = samples.len() as f64;
    let (mean, m2, m3, m4) = central_moments(samples);
    Ok(Cumulants {
        mean,
        variance: n / (n - 1.0) * m2,
        cum3: n * n / ((n - 1.0) * (n - 2.0)) * m3,
        cum4: n * n * ((n + 1.0) * m4 - 3.0 * (n - 1.0) * m2 * m2) / ((n - 1.0) * (n - 2.0) * (n - 3.0)),
    })
}

/// Standard errors of the k-statistics from their influence functions.
///
/// Consecutive runs of `cluster` samples are treated as one dependent block
/// (for instance the values of a single realization at several points), and
/// block sums of the influence values enter the variance.
pub fn cumulant_standard_errors(samples: &[f64], cluster: usize) -> Result<Cumulants> {
    if cluster == 0 || !samples.len().is_multiple_of(cluster) {
        return Err(Error::invalid(
            "cluster",
            format!("block size {cluster} does not divide {} samples", samples.len()),
        ));
    }
    let groups = samples.len() / cluster;
    if groups < MIN_CUMULANT_SAMPLES {
        return Err(Error::TooFewSamples {
            needed: MIN_CUMULANT_SAMPLES,
            got: groups,
        });
    }
    let n = samples.len() as f64;
    let (mean, m2, m3, m4) = central_moments(samples);
    let mut acc = [0.0f64; 4];
    for block in samples.chunks(cluster) {
        let mut s = [0.0f64; 4];
        for x in block {
            let d = x - mean;
            let d2 = d * d;
            s[0] += d;
            s[1] += d2 - m2;
            s[2] += d2 * d - m3 - 3.0 * m2 * d;
            s[3] += d2 * d2 - m4 - 4.0 * m3 * d - 6.0 * m2 * (d2 - m2);
        }
        for (a, v) in acc.iter_mut().zip(s) {
            *a += v * v;
        }
    }
    let g = groups as f64;
    let se = |a: f64| (a * g / (g - 1.0)).sqrt() / n;
    Ok(Cumulants {
        mean: se(acc[0]),
        variance: se(acc[1]),
        cum3: se(acc[2]),
        cum4: se(acc[3]),
    })
}

/// Bootstrap standard error of an empirical distance. Blocks of `cluster`
/// consecutive samples are resampled together.
pub fn bootstrap_distance_se(samples: &[f64], sd: f64, metric: Metric, cluster: usize, seed: u64) -> Result<f64> {
    check_distance_input(samples, sd)?;
    if cluster == 0 || !samples.len().is_multiple_of(cluster) {
        return Err(Error::invalid(
            "cluster",
            format!("block size {cluster} does not divide {} samples", samples.len()),
        ));
    }
    let groups = samples.len() / cluster;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut buf = Vec::with_capacity(samples.len());
    let grid = quantile_grid(samples.len(), sd, metric);
    let mut stats = Vec::with_capacity(BOOTSTRAP_RESAMPLES);
    for _ in 0..BOOTSTRAP_RESAMPLES {
        buf.clear();
        for _ in 0..groups {
            let g = rng.random_range(0..groups);
            buf.extend_from_slice(&samples[g * cluster..(g + 1) * cluster]);
        }
        buf.sort_by(f64::total_cmp);
        stats.push(sorted_distance(&buf, &grid, sd, metric));
    }
    let m = stats.iter().sum::<f64>() / stats.len() as f64;
    let v = stats.iter().map(|s| (s - m).powi(2)).sum::<f64>() / (stats.len() - 1) as f64;
    Ok(v.sqrt())
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::invalid("points", "need at least two paired values"));
    }
    if xs.iter().chain(ys).any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(Error::invalid("points", "log-log fit needs positive values"));
    }
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::invalid("points", "abscissae are all equal"));
    }
    Ok(sxy / sxx)
}
