//! Smooth spectral windows `b_j` with compact support `[S_{j-1}, S_{j+1}]`.
//!
//! `b_j²` rises through the smooth step `F(v) = h(v) / (h(v) + h(1 - v))`,
//! `h(v) = exp(-1/v)`, on `[S_{j-1}, S_j]` and falls through `F(1 - v)` on
//! `[S_j, S_{j+1}]`. Neighbouring levels evaluate the step on the same `v`, so
//! their squares sum to one up to a single rounding.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scaling::ScaleSequence;

/// Returns `(F(v), F(1 - v))` computed from one shared denominator.
fn smooth_step(v: f64) -> (f64, f64) {
    if v <= 0.0 {
        return (0.0, 1.0);
    }
    if v >= 1.0 {
        return (1.0, 0.0);
    }
    let a = (-1.0 / v).exp();
    let c = (-1.0 / (1.0 - v)).exp();
    let s = a + c;
    (a / s, c / s)
}

/// Sobolev weight `(1 + √(ℓ(ℓ+1)))^{2α}`.
pub fn sobolev_factor(ell: usize, alpha: f64) -> f64 {
    if alpha == 0.0 {
        return 1.0;
    }
    let l = ell as f64;
    (1.0 + (l * (l + 1.0)).sqrt()).powf(2.0 * alpha)
}

/// `(2ℓ + 1) / 4π`, the trace of the degree-`ℓ` projector.
pub fn harmonic_dim(ell: usize) -> f64 {
    (2.0 * ell as f64 + 1.0) / (4.0 * std::f64::consts::PI)
}

#[derive(Clone, Debug)]
pub struct WeightSystem {
    seq: ScaleSequence,
}

/// Integer multipoles of one level together with `b_j(ℓ)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Band {
    pub lo: usize,
    pub hi: usize,
    /// `b_j(ℓ)` for `ℓ = lo ..= hi`.
    pub b: Vec<f64>,
}

impl Band {
    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        (self.lo..=self.hi).zip(self.b.iter().copied())
    }

    /// Dense coefficients `c_ℓ = b_j(ℓ)^n (2ℓ+1)/4π (1 + √(ℓ(ℓ+1)))^{2α}` for
    /// `ℓ = 0 ..= hi`, zero below the band.
    pub fn coefficients(&self, n: u32, alpha: f64) -> Vec<f64> {
        let mut c = vec![0.0; self.hi + 1];
        for (ell, b) in self.iter() {
            c[ell] = b.powi(n as i32) * harmonic_dim(ell) * sobolev_factor(ell, alpha);
        }
        c
    }
}

impl WeightSystem {
    pub fn new(seq: ScaleSequence) -> Self {
        WeightSystem { seq }
    }

    pub fn seq(&self) -> &ScaleSequence {
        &self.seq
    }

    pub fn j_max(&self) -> usize {
        self.seq.j_max()
    }

    fn check_level(&self, j: usize) -> Result<()> {
        if j == 0 || j > self.j_max() {
            return Err(Error::OutOfRange {
                what: "level",
                value: j as f64,
                min: 1.0,
                max: self.j_max() as f64,
            });
        }
        Ok(())
    }

    /// `b_j(u)²`; zero outside the open support. Levels outside `1..=j_max`
    /// are treated as empty.
    pub fn b_sq(&self, j: usize, u: f64) -> f64 {
        if j == 0 || j > self.j_max() {
            return 0.0;
        }
        let lo = self.seq.center(j - 1);
        let mid = self.seq.center(j);
        let hi = self.seq.center(j + 1);
        if u <= lo || u >= hi {
            0.0
        } else if u <= mid {
            smooth_step((u - lo) / (mid - lo)).0
        } else {
            smooth_step((u - mid) / (hi - mid)).1
        }
    }

    pub fn eval_b(&self, j: usize, u: f64) -> f64 {
        self.b_sq(j, u).sqrt()
    }

    pub fn band(&self, j: usize) -> Result<Band> {
        let range = self.seq.band_multipoles(j)?;
        let (lo, hi) = (*range.start(), *range.end());
        let b = range.map(|ell| self.eval_b(j, ell as f64)).collect();
        Ok(Band { lo, hi, b })
    }

    /// `Σ_ℓ b_j(ℓ)^n (2ℓ+1)/4π (1 + √(ℓ(ℓ+1)))^{2α}` over the integer band.
    pub fn spectral_sum(&self, j: usize, n: u32, alpha: f64) -> Result<f64> {
        self.check_level(j)?;
        if n == 0 {
            return Err(Error::invalid("n", "power must be positive"));
        }
        if !(alpha.is_finite() && alpha >= 0.0) {
            return Err(Error::invalid("alpha", format!("must be nonnegative, got {alpha}")));
        }
        let band = self.band(j)?;
        Ok(band
            .iter()
            .map(|(ell, b)| b.powi(n as i32) * harmonic_dim(ell) * sobolev_factor(ell, alpha))
            .sum())
    }

    /// `σ_j² = Σ_ℓ b_j⁴(ℓ)(2ℓ+1)/4π`, the pointwise variance of the unnormalized field.
    pub fn sigma_sq(&self, j: usize) -> Result<f64> {
        self.spectral_sum(j, 4, 0.0)
    }

    /// `σ_j² π / (S_j² ε_j)`, which settles to the constant `C_b`.
    pub fn variance_ratio(&self, j: usize) -> Result<f64> {
        let s = self.seq.center(j);
        Ok(self.sigma_sq(j)? * std::f64::consts::PI / (s * s * self.seq.shift(j)?))
    }

    /// `C_b` estimated by the variance ratio at the highest level.
    pub fn c_b_estimate(&self) -> Result<f64> {
        self.variance_ratio(self.j_max())
    }

    /// Maximum of `|Σ_j b_j²(ℓ) - 1|` over integers `ℓ ∈ [S_1, S_{j_max}]`.
    pub fn partition_residual(&self) -> f64 {
        let lo = self.seq.center(1).ceil() as usize;
        let hi = self.seq.center(self.j_max()).floor() as usize;
        (lo..=hi)
            .map(|ell| {
                let u = ell as f64;
                let total: f64 = (1..=self.j_max()).map(|j| self.b_sq(j, u)).sum();
                (total - 1.0).abs()
            })
            .fold(0.0, f64::max)
    }

    pub fn diagnostics(&self) -> WeightDiagnostics {
        let levels = (1..=self.j_max())
            .map(|j| match self.band(j) {
                Ok(band) => LevelWeights {
                    j,
                    band: Some([band.lo, band.hi]),
                    sigma_sq: self.sigma_sq(j).ok(),
                    variance_ratio: self.variance_ratio(j).ok(),
                },
                Err(_) => LevelWeights {
                    j,
                    band: None,
                    sigma_sq: None,
                    variance_ratio: None,
                },
            })
            .collect();
        WeightDiagnostics {
            levels,
            partition_residual: self.partition_residual(),
            c_b_estimate: self.c_b_estimate().ok(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LevelWeights {
    pub j: usize,
    pub band: Option<[usize; 2]>,
    pub sigma_sq: Option<f64>,
    pub variance_ratio: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WeightDiagnostics {
    pub levels: Vec<LevelWeights>,
    pub partition_residual: f64,
    pub c_b_estimate: Option<f64>,
}
