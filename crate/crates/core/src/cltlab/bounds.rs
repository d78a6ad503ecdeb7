//! Theoretical distance bounds for needlet coefficients, point evaluations
//! and functional norms, with test-function moduli fixed to one.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::cubature::NeedletFrame;
use crate::error::{Error, Result};
use crate::field::{fourth_moment_rule, CumulantTarget, LevelField, NormalizationConstants};
use crate::harmonics::SpherePoint;
use crate::scaling::ResolutionContext;
use crate::weights::WeightSystem;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BoundKind {
    Coeff1dRaw,
    Coeff1dNormalized,
    CoeffMultiRaw,
    CoeffMultiNormalized,
    Fdd1d,
    FddMulti { dim: usize },
    FunctionalL2,
    Sobolev { alpha: f64 },
}

impl BoundKind {
    pub const NAMES: [&'static str; 8] = [
        "coeff_1d_raw",
        "coeff_1d_normalized",
        "coeff_multi_raw",
        "coeff_multi_normalized",
        "fdd_1d",
        "fdd_multi",
        "functional_l2",
        "sobolev",
    ];

    /// Parses a kind name; `dim` and `alpha` fill the parametrized kinds.
    pub fn parse(name: &str, dim: usize, alpha: f64) -> Result<Self> {
        let kind = match name {
            "coeff_1d_raw" => BoundKind::Coeff1dRaw,
            "coeff_1d_normalized" => BoundKind::Coeff1dNormalized,
            "coeff_multi_raw" => BoundKind::CoeffMultiRaw,
            "coeff_multi_normalized" => BoundKind::CoeffMultiNormalized,
            "fdd_1d" => BoundKind::Fdd1d,
            "fdd_multi" => BoundKind::FddMulti { dim },
            "functional_l2" => BoundKind::FunctionalL2,
            "sobolev" => BoundKind::Sobolev { alpha },
            other => {
                return Err(Error::invalid(
                    "kind",
                    format!("unknown kind `{other}`, expected one of {}", Self::NAMES.join(", ")),
                ))
            }
        };
        kind.validate()?;
        Ok(kind)
    }

    pub fn name(&self) -> &'static str {
        match self {
            BoundKind::Coeff1dRaw => "coeff_1d_raw",
            BoundKind::Coeff1dNormalized => "coeff_1d_normalized",
            BoundKind::CoeffMultiRaw => "coeff_multi_raw",
            BoundKind::CoeffMultiNormalized => "coeff_multi_normalized",
            BoundKind::Fdd1d => "fdd_1d",
            BoundKind::FddMulti { .. } => "fdd_multi",
            BoundKind::FunctionalL2 => "functional_l2",
            BoundKind::Sobolev { .. } => "sobolev",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            BoundKind::FddMulti { dim } if dim < 2 => Err(Error::invalid(
                "dim",
                format!("fdd_multi needs at least two points, got {dim}"),
            )),
            BoundKind::Sobolev { alpha } if !(alpha.is_finite() && alpha > 0.0) => Err(Error::invalid(
                "alpha",
                format!("Sobolev order must be positive, got {alpha}"),
            )),
            _ => Ok(()),
        }
    }

    /// Resolution context governing admissible levels; `None` when the rate
    /// does not depend on the level.
    pub fn resolution_context(&self) -> Option<ResolutionContext> {
        match *self {
            BoundKind::Coeff1dRaw | BoundKind::Coeff1dNormalized => Some(ResolutionContext::Coeff1d),
            BoundKind::CoeffMultiRaw => Some(ResolutionContext::CoeffMultiRaw),
            BoundKind::CoeffMultiNormalized => Some(ResolutionContext::CoeffMultiNormalized),
            BoundKind::Fdd1d | BoundKind::FddMulti { .. } => Some(ResolutionContext::Fdd),
            BoundKind::Sobolev { alpha } => Some(ResolutionContext::Sobolev { alpha }),
            BoundKind::FunctionalL2 => None,
        }
    }

    /// Name of the headline bound in [`bound_table`].
    pub fn primary_metric(&self) -> &'static str {
        match self {
            BoundKind::Coeff1dRaw | BoundKind::Coeff1dNormalized | BoundKind::Fdd1d => "wasserstein",
            _ => "d3",
        }
    }
}

/// `1/√(2π) + 2/3`.
pub fn wasserstein_constant() -> f64 {
    1.0 / (2.0 * PI).sqrt() + 2.0 / 3.0
}

/// `11 + √(E F⁴) + (E F⁴)^{1/4}` for a unit-variance `F` with the given fourth cumulant.
pub fn kolmogorov_prefactor(cum4: f64) -> f64 {
    let m4 = 3.0 + cum4.max(0.0);
    11.0 + m4.sqrt() + m4.sqrt().sqrt()
}

/// `√(2d)/4 · M₂ + (2/9)√(d Tr C) · M₃` with `M₂ = M₃ = 1`.
pub fn smooth3_factor(d: usize, trace: f64) -> f64 {
    let d = d as f64;
    (2.0 * d).sqrt() / 4.0 + 2.0 / 9.0 * (d * trace).sqrt()
}

/// `‖C^{-1/2}‖_op/√π · M₁ + √(2π)/6 · ‖C^{-1/2}‖_op Tr C · M₂` with `M₁ = M₂ = 1`.
pub fn smooth2_factor(cov: &DMatrix<f64>) -> Result<f64> {
    if !cov.is_square() || cov.nrows() == 0 {
        return Err(Error::invalid("covariance", "must be a nonempty square matrix"));
    }
    let eig = SymmetricEigen::new(cov.clone()).eigenvalues;
    let min = eig.iter().copied().fold(f64::INFINITY, f64::min);
    if !(min > 0.0) {
        return Err(Error::NotPositiveDefinite { min_eigenvalue: min });
    }
    let inv_sqrt_op = 1.0 / min.sqrt();
    Ok(inv_sqrt_op / PI.sqrt() + (2.0 * PI).sqrt() / 6.0 * inv_sqrt_op * cov.trace())
}

/// Level quantities shared by every bound at one resolution.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LevelConstants {
    pub j: usize,
    pub center: f64,
    pub shift: f64,
    pub localization: f64,
    pub normalization: NormalizationConstants,
    /// `ν · cum₄` of a field value, `∫Φ_j⁴ / σ_j⁴`.
    pub field_fourth: f64,
    /// `ν · cum₄` of a normalized coefficient.
    pub coefficient_fourth: f64,
    /// `max_l √(∫Φ_l⁴)/(σ_l² S_l² ε_l)` over the levels of the system.
    pub c_inf: f64,
}

fn field_fourth(ws: &WeightSystem, j: usize) -> Result<f64> {
    let field = LevelField::new(ws, j)?;
    let rule = fourth_moment_rule(ws, j)?;
    // at ν = 1 the cumulant is the ν-free integral
    crate::field::exact_fourth_cumulant(&field, 1.0, CumulantTarget::Point(SpherePoint::NORTH), &rule)
}

impl LevelConstants {
    pub fn compute(ws: &WeightSystem, j: usize) -> Result<Self> {
        let frame = NeedletFrame::new(ws, j)?;
        let normalization = NormalizationConstants::compute(ws, &frame)?;
        let seq = ws.seq();
        let mut c_inf = 0.0f64;
        let mut own = 0.0;
        for l in 1..=ws.j_max() {
            let f4 = field_fourth(ws, l)?;
            let s = seq.center(l);
            c_inf = c_inf.max(f4.sqrt() / (s * s * seq.shift(l)?));
            if l == j {
                own = f4;
            }
        }
        Ok(LevelConstants {
            j,
            center: seq.center(j),
            shift: seq.shift(j)?,
            localization: seq.sigma_loc(j)?,
            coefficient_fourth: normalization.kurtosis_ratio,
            normalization,
            field_fourth: own,
            c_inf,
        })
    }
}

/// Inputs of one bound evaluation.
#[derive(Clone, Debug)]
pub struct BoundContext {
    pub kind: BoundKind,
    pub j: usize,
    pub nu: f64,
    /// Exact covariance of the vector, for the multivariate kinds.
    pub covariance: Option<DMatrix<f64>>,
    /// Exact fourth cumulants of the components.
    pub fourth_cumulants: Option<Vec<f64>>,
}

impl BoundContext {
    pub fn new(kind: BoundKind, j: usize, nu: f64) -> Self {
        BoundContext {
            kind,
            j,
            nu,
            covariance: None,
            fourth_cumulants: None,
        }
    }

    pub fn validate(&self, consts: &LevelConstants) -> Result<()> {
        self.kind.validate()?;
        if !(self.nu.is_finite() && self.nu > 0.0) {
            return Err(Error::invalid(
                "nu",
                format!("intensity must be positive, got {}", self.nu),
            ));
        }
        if self.j != consts.j {
            return Err(Error::invalid("j", "level constants belong to another level"));
        }
        if let Some(c) = &self.covariance {
            if !c.is_square() {
                return Err(Error::invalid("covariance", "must be square"));
            }
            if let BoundKind::FddMulti { dim } = self.kind {
                if c.nrows() != dim {
                    return Err(Error::invalid(
                        "covariance",
                        format!("expected {dim} rows, got {}", c.nrows()),
                    ));
                }
            }
            if let Some(k) = &self.fourth_cumulants {
                if k.len() != c.nrows() {
                    return Err(Error::invalid("fourth_cumulants", "length differs from the covariance"));
                }
            }
        }
        Ok(())
    }
}

/// Every bound available for the context, keyed by name. The headline value
/// is under [`BoundKind::primary_metric`]. A covariance-based `d2` entry is
/// left out when the covariance is not positive definite.
pub fn bound_table(ctx: &BoundContext, ws: &WeightSystem, consts: &LevelConstants) -> Result<BTreeMap<String, f64>> {
    ctx.validate(consts)?;
    let c_w = wasserstein_constant();
    let nu = ctx.nu;
    let s = consts.center;
    let eps = consts.shift;
    let nc = &consts.normalization;
    let mut out = BTreeMap::new();
    let mut put = |k: &str, v: f64| {
        out.insert(k.to_string(), v);
    };
    // Kolmogorov analogue of a Wasserstein bound C̃ r, with r standing in for √cum₄
    let kol = |r: f64| kolmogorov_prefactor(r * r) * r;

    match ctx.kind {
        BoundKind::Coeff1dRaw => {
            let z4 = nc.zeta_4.upper.powi(4);
            let r = nc.sigma_bar_sq * nc.sigma_bar_sq * z4 / (s * nu.sqrt());
            put("wasserstein", c_w * r);
            put("kolmogorov", kol(r));
            let sd = (nc.sigma_tilde_sq_max / nc.sigma_sq).sqrt();
            let r_exact = (consts.coefficient_fourth / nu).sqrt();
            put("wasserstein_exact", sd * c_w * r_exact);
            put("kolmogorov_exact", kol(r_exact));
        }
        BoundKind::Coeff1dNormalized => {
            let r = nc.normalized_fourth_ratio(consts.localization) * (s * s * eps * eps / nu).sqrt();
            put("wasserstein", c_w * r);
            put("kolmogorov", kol(r));
            let r_exact = (consts.coefficient_fourth / nu).sqrt();
            put("wasserstein_exact", c_w * r_exact);
            put("kolmogorov_exact", kol(r_exact));
        }
        BoundKind::CoeffMultiRaw => {
            let rate = (s * s / nu).sqrt();
            put(
                "d3",
                (2f64.sqrt() * s / 4.0 + 2.0 * nc.sigma_bar_sq / 9.0 * s / eps.sqrt()) * rate,
            );
            put(
                "d2",
                (s * eps.sqrt() / PI.sqrt() + (2.0 * PI).sqrt() * s / (6.0 * eps.sqrt())) * rate,
            );
            covariance_bounds(ctx, &mut put)?;
        }
        BoundKind::CoeffMultiNormalized => {
            let rate = (s.powi(6) * eps * eps / nu).sqrt();
            put("d3", (2f64.sqrt() * s / 4.0 + 2.0 / 9.0 * s * s) * rate);
            put("d2", (1.0 / PI.sqrt() + (2.0 * PI).sqrt() * s * s / 6.0) * rate);
            covariance_bounds(ctx, &mut put)?;
        }
        BoundKind::Fdd1d => {
            let rate = (s.powi(4) * eps * eps / nu).sqrt();
            put("wasserstein", c_w * consts.c_inf * rate);
            put("kolmogorov", kol(consts.c_inf * rate));
            let r_exact = (consts.field_fourth / nu).sqrt();
            put("wasserstein_exact", c_w * r_exact);
            put("kolmogorov_exact", kol(r_exact));
        }
        BoundKind::FddMulti { dim } => {
            let rate = (s.powi(4) * eps * eps / nu).sqrt();
            let trace = ctx.covariance.as_ref().map_or(dim as f64, |c| c.trace());
            let b3 = smooth3_factor(dim, trace);
            put("d3", b3 * dim as f64 * rate);
            let sum_root = dim as f64 * (consts.field_fourth / nu).sqrt();
            put("d3_exact", b3 * sum_root);
            if let Some(c) = &ctx.covariance {
                match smooth2_factor(c) {
                    Ok(b2) => {
                        put("d2", b2 * dim as f64 * rate);
                        put("d2_exact", b2 * sum_root);
                    }
                    Err(Error::NotPositiveDefinite { .. }) => {}
                    Err(e) => return Err(e),
                }
            }
        }
        BoundKind::FunctionalL2 => {
            let rate = (4.0 * PI / nu).sqrt();
            put("d3", (0.25 + 4.0 * PI.sqrt()) * rate);
            put("d3_general", (0.25 + PI.sqrt()) * rate);
        }
        BoundKind::Sobolev { alpha } => {
            let s4 = ws.spectral_sum(ctx.j, 4, alpha)?;
            put("d3", 2.0 * PI.sqrt() * s4 / (nc.sigma_sq * nu.sqrt()));
        }
    }
    Ok(out)
}

fn covariance_bounds(ctx: &BoundContext, put: &mut impl FnMut(&str, f64)) -> Result<()> {
    let (Some(c), Some(k4)) = (&ctx.covariance, &ctx.fourth_cumulants) else {
        return Ok(());
    };
    let sum_root: f64 = k4.iter().map(|k| k.max(0.0).sqrt()).sum();
    put("d3_exact", smooth3_factor(c.nrows(), c.trace()) * sum_root);
    match smooth2_factor(c) {
        Ok(b2) => put("d2_exact", b2 * sum_root),
        Err(Error::NotPositiveDefinite { .. }) => {}
        Err(e) => return Err(e),
    }
    Ok(())
}

/// Headline bound of the context.
pub fn theoretical_bound(ctx: &BoundContext, ws: &WeightSystem, consts: &LevelConstants) -> Result<f64> {
    let table = bound_table(ctx, ws, consts)?;
    Ok(table[ctx.kind.primary_metric()])
}
