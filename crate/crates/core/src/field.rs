//! Spherical Poisson needlet fields and their exact moments.
//!
//! At level `j` and intensity `ν`, the field is
//! `Ψ(x) = (√ν σ_j)⁻¹ Σ_i Φ_j(x, z_i)` over the points `z_i` of a Poisson
//! sample, and the needlet coefficients are `β̂_k = (√ν σ_j)⁻¹ Σ_i ψ_k(z_i)`
//! (raw) or `β̃_k = (√ν σ̃_k)⁻¹ Σ_i ψ_k(z_i)` with `σ̃_k = ‖ψ_k‖₂` (normalized).
//! Both are first-chaos Poisson functionals, so their cumulants are plain
//! integrals of powers of the underlying kernel.

use std::io::Write;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::cubature::{neumaier_sum, CubatureRule, NeedletFrame};
use crate::error::{Error, Result};
use crate::harmonics::{accumulate_legendre_sums, LegendreSeries, LevelKernels, SpherePoint};
use crate::poisson::PoissonSample;
use crate::weights::{harmonic_dim, sobolev_factor, WeightSystem};

fn check_intensity(nu: f64) -> Result<()> {
    if !(nu.is_finite() && nu > 0.0) {
        return Err(Error::invalid(
            "nu",
            format!("field normalization needs a positive intensity, got {nu}"),
        ));
    }
    Ok(())
}

/// Kernels and normalization of one level.
#[derive(Clone, Debug)]
pub struct LevelField {
    kernels: LevelKernels,
    sigma_sq: f64,
}

impl LevelField {
    pub fn new(ws: &WeightSystem, j: usize) -> Result<Self> {
        let kernels = LevelKernels::new(ws, j)?;
        if kernels.band.lo == 0 {
            return Err(Error::Degenerate(format!(
                "band of level {j} contains the constant multipole; raise s0 to at least 1"
            )));
        }
        Ok(LevelField {
            sigma_sq: ws.sigma_sq(j)?,
            kernels,
        })
    }

    pub fn j(&self) -> usize {
        self.kernels.j
    }

    pub fn kernels(&self) -> &LevelKernels {
        &self.kernels
    }

    /// `σ_j² = Σ_ℓ b_j⁴(ℓ)(2ℓ+1)/4π`.
    pub fn sigma_sq(&self) -> f64 {
        self.sigma_sq
    }

    /// Highest multipole of the band.
    pub fn top(&self) -> usize {
        self.kernels.band.hi
    }

    /// `1 / (√ν σ_j)`.
    pub fn scale(&self, nu: f64) -> Result<f64> {
        check_intensity(nu)?;
        Ok(1.0 / (nu * self.sigma_sq).sqrt())
    }

    /// `Ψ(x)` for the given point set.
    pub fn value_at(&self, points: &[SpherePoint], nu: f64, x: &SpherePoint) -> Result<f64> {
        let scale = self.scale(nu)?;
        let ts: Vec<f64> = points.iter().map(|z| x.dot(z)).collect();
        Ok(scale * self.kernels.kernel.sum_at(&ts))
    }

    pub fn values(&self, sample: &PoissonSample, xs: &[SpherePoint]) -> Result<Vec<f64>> {
        let scale = self.scale(sample.nu)?;
        let mut ts = vec![0.0; sample.count()];
        Ok(xs
            .iter()
            .map(|x| {
                for (t, z) in ts.iter_mut().zip(&sample.points) {
                    *t = x.dot(z);
                }
                scale * self.kernels.kernel.sum_at(&ts)
            })
            .collect())
    }

    /// Field covariance `Γ(x, y) = σ_j⁻² Σ_ℓ b_j⁴(ℓ) Z_ℓ(⟨x, y⟩)`.
    pub fn correlation(&self, x: &SpherePoint, y: &SpherePoint) -> f64 {
        self.kernels.covariance.eval(x.dot(y)) / self.sigma_sq
    }
}

/// Field values at a set of evaluation points.
#[derive(Clone, Debug)]
pub struct FieldRealization {
    pub j: usize,
    pub nu: f64,
    pub points: Vec<SpherePoint>,
    pub values: Vec<f64>,
    pub coefficients: Option<Vec<f64>>,
}

impl FieldRealization {
    /// Writes `id,theta,phi,value` rows.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "id,theta,phi,value")?;
        for (i, (x, v)) in self.points.iter().zip(&self.values).enumerate() {
            writeln!(out, "{i},{:.16e},{:.16e},{:.16e}", x.theta(), x.phi(), v)?;
        }
        Ok(())
    }
}

pub fn eval_field(ws: &WeightSystem, j: usize, sample: &PoissonSample, xs: &[SpherePoint]) -> Result<FieldRealization> {
    let field = LevelField::new(ws, j)?;
    Ok(FieldRealization {
        j,
        nu: sample.nu,
        points: xs.to_vec(),
        values: field.values(sample, xs)?,
        coefficients: None,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoefficientMode {
    Raw,
    Normalized,
}

/// Coefficients `k ∈ indices` of a sample; `sigma_sq` is `σ_j²` of the frame's level.
pub fn coefficients_subset(
    frame: &NeedletFrame,
    sigma_sq: f64,
    sample: &PoissonSample,
    mode: CoefficientMode,
    indices: &[usize],
) -> Result<Vec<f64>> {
    check_intensity(sample.nu)?;
    indices
        .iter()
        .map(|&k| {
            let total = frame.psi_sum(k, &sample.points)?;
            let var = match mode {
                CoefficientMode::Raw => sigma_sq,
                CoefficientMode::Normalized => frame.norm_sq(k),
            };
            Ok(total / (sample.nu * var).sqrt())
        })
        .collect()
}

/// All `K_j` coefficients of a sample.
pub fn coefficients(
    frame: &NeedletFrame,
    ws: &WeightSystem,
    sample: &PoissonSample,
    mode: CoefficientMode,
) -> Result<Vec<f64>> {
    let all: Vec<usize> = (0..frame.count()).collect();
    coefficients_subset(frame, ws.sigma_sq(frame.level())?, sample, mode, &all)
}

/// `R[i, k] = ψ_k(x_i)`.
pub fn evaluation_matrix(frame: &NeedletFrame, xs: &[SpherePoint]) -> DMatrix<f64> {
    DMatrix::from_fn(xs.len(), frame.count(), |i, k| {
        frame.lambda(k).sqrt() * frame.profile().eval(xs[i].dot(frame.point(k)))
    })
}

/// `Σ_k c_k ψ_k(x)`.
pub fn reconstruct(frame: &NeedletFrame, coeffs: &[f64], x: &SpherePoint) -> Result<f64> {
    if coeffs.len() != frame.count() {
        return Err(Error::invalid(
            "coeffs",
            format!("expected {} coefficients, got {}", frame.count(), coeffs.len()),
        ));
    }
    let ts: Vec<f64> = (0..frame.count()).map(|k| x.dot(frame.point(k))).collect();
    let mut vals = vec![0.0; ts.len()];
    frame.profile().eval_batch(&ts, &mut vals);
    Ok(neumaier_sum(
        (0..frame.count()).map(|k| coeffs[k] * frame.lambda(k).sqrt() * vals[k]),
    ))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovarianceFlavor {
    FieldPoints,
    CoeffRaw,
    CoeffNormalized,
}

#[derive(Clone, Debug)]
pub struct CovarianceMatrix {
    pub flavor: CovarianceFlavor,
    pub matrix: DMatrix<f64>,
}

impl CovarianceMatrix {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = SymmetricEigen::new(self.matrix.clone())
            .eigenvalues
            .iter()
            .copied()
            .collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues().first().copied().unwrap_or(0.0)
    }

    pub fn trace(&self) -> f64 {
        self.matrix.trace()
    }

    /// Frobenius norm of the difference to `other`.
    pub fn frobenius_distance(&self, other: &DMatrix<f64>) -> f64 {
        (&self.matrix - other).norm()
    }
}

fn check_distinct(points: &[&SpherePoint]) -> Result<()> {
    for (a, x) in points.iter().enumerate() {
        for (b, y) in points.iter().enumerate().skip(a + 1) {
            if x.dot(y) >= 1.0 - 1e-15 {
                return Err(Error::DuplicatePoints(a, b));
            }
        }
    }
    Ok(())
}

/// `Γ(i₁, i₂) = σ_j⁻² Σ_ℓ b_j⁴(ℓ) Z_ℓ(⟨x_{i₁}, x_{i₂}⟩)`, unit diagonal.
pub fn field_covariance(field: &LevelField, xs: &[SpherePoint]) -> Result<CovarianceMatrix> {
    check_distinct(&xs.iter().collect::<Vec<_>>())?;
    let diag = field.kernels.covariance.at_one() / field.sigma_sq;
    let matrix = DMatrix::from_fn(xs.len(), xs.len(), |a, b| {
        if a == b {
            diag
        } else {
            field.correlation(&xs[a], &xs[b])
        }
    });
    Ok(CovarianceMatrix {
        flavor: CovarianceFlavor::FieldPoints,
        matrix,
    })
}

/// Covariance of the coefficients `k ∈ indices`.
pub fn coefficient_covariance(
    frame: &NeedletFrame,
    sigma_sq: f64,
    indices: &[usize],
    mode: CoefficientMode,
) -> Result<CovarianceMatrix> {
    if let Some(&k) = indices.iter().find(|&&k| k >= frame.count()) {
        return Err(Error::OutOfRange {
            what: "needlet index",
            value: k as f64,
            min: 0.0,
            max: frame.count() as f64 - 1.0,
        });
    }
    check_distinct(&indices.iter().map(|&k| frame.point(k)).collect::<Vec<_>>())?;
    let d = indices.len();
    let trace = frame.kernel_trace();
    // the needlet-squared kernel Σ b² Z_ℓ is the field kernel Φ_j
    let kernel = LegendreSeries::new(
        frame
            .profile()
            .coeffs()
            .iter()
            .enumerate()
            .map(|(l, c)| c * c / harmonic_dim(l))
            .collect(),
    );
    let matrix = DMatrix::from_fn(d, d, |a, b| {
        let (ka, kb) = (indices[a], indices[b]);
        let cross = if a == b {
            trace
        } else {
            kernel.eval(frame.point(ka).dot(frame.point(kb)))
        };
        let scale = match mode {
            CoefficientMode::Raw => sigma_sq,
            CoefficientMode::Normalized => (frame.norm_sq(ka) * frame.norm_sq(kb)).sqrt(),
        };
        let v = (frame.lambda(ka) * frame.lambda(kb)).sqrt() * cross / scale;
        if a == b && mode == CoefficientMode::Normalized {
            1.0
        } else {
            v
        }
    });
    Ok(CovarianceMatrix {
        flavor: match mode {
            CoefficientMode::Raw => CovarianceFlavor::CoeffRaw,
            CoefficientMode::Normalized => CovarianceFlavor::CoeffNormalized,
        },
        matrix,
    })
}

/// Rule exact for fourth powers of level-`j` kernels.
pub fn fourth_moment_rule(ws: &WeightSystem, j: usize) -> Result<CubatureRule> {
    Ok(CubatureRule::gauss_legendre_sphere(4 * ws.band(j)?.hi))
}

#[derive(Clone, Copy, Debug)]
pub enum CumulantTarget<'a> {
    Point(SpherePoint),
    Coefficient {
        frame: &'a NeedletFrame,
        k: usize,
        mode: CoefficientMode,
    },
}

/// Exact cumulant of order `n ≥ 2` of a field value or coefficient:
/// `ν^{1 - n/2} v^{-n/2} ∫ f^n`, with `f` the kernel and `v` its variance scale.
/// Needs a rule exact to degree `n · ⌊S_{j+1}⌋`.
pub fn exact_cumulant(
    field: &LevelField,
    nu: f64,
    order: u32,
    target: CumulantTarget<'_>,
    rule: &CubatureRule,
) -> Result<f64> {
    check_intensity(nu)?;
    if order < 2 {
        return Err(Error::invalid("order", "cumulant order must be at least 2"));
    }
    rule.require_degree(order as usize * field.top())?;
    let n = order as i32;
    let (integral, var) = match target {
        CumulantTarget::Point(x) => (
            rule.integrate_zonal(&field.kernels.kernel, &x, |v| v.powi(n)),
            field.sigma_sq,
        ),
        CumulantTarget::Coefficient { frame, k, mode } => {
            if frame.level() != field.j() {
                return Err(Error::invalid("frame", "frame and field levels differ"));
            }
            let xi = *frame.point(k);
            let lam = frame.lambda(k);
            let integral = lam.powf(order as f64 / 2.0) * rule.integrate_zonal(frame.profile(), &xi, |v| v.powi(n));
            let var = match mode {
                CoefficientMode::Raw => field.sigma_sq,
                CoefficientMode::Normalized => frame.norm_sq(k),
            };
            (integral, var)
        }
    };
    Ok(nu.powf(1.0 - order as f64 / 2.0) * var.powf(-(order as f64) / 2.0) * integral)
}

/// `cum₄ = (ν v²)⁻¹ ∫ f⁴`.
pub fn exact_fourth_cumulant(
    field: &LevelField,
    nu: f64,
    target: CumulantTarget<'_>,
    rule: &CubatureRule,
) -> Result<f64> {
    exact_cumulant(field, nu, 4, target, rule)
}

/// `‖Ψ‖²_{L²}` by cubature of the realized field; the rule must be exact to `2⌊S_{j+1}⌋`.
pub fn l2_norm_sq(field: &LevelField, sample: &PoissonSample, rule: &CubatureRule) -> Result<f64> {
    rule.require_degree(2 * field.top())?;
    if sample.count() == 0 {
        return Ok(0.0);
    }
    let values = field.values(sample, rule.nodes())?;
    Ok(rule.integrate_values(&values.iter().map(|v| v * v).collect::<Vec<_>>()))
}

/// Per-multipole energies `E_ℓ = b_j⁴(ℓ)/(ν σ_j²) Σ_{i,i'} Z_ℓ(⟨z_i, z_{i'}⟩)`
/// from the pairwise Legendre sums of a sample.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MultipoleEnergies {
    pub lo: usize,
    /// `E_ℓ` for `ℓ = lo ..= hi`.
    pub energies: Vec<f64>,
}

impl MultipoleEnergies {
    /// `Σ_ℓ (1 + √(ℓ(ℓ+1)))^{2α} E_ℓ`.
    pub fn norm_sq(&self, alpha: f64) -> f64 {
        self.energies
            .iter()
            .enumerate()
            .map(|(i, e)| sobolev_factor(self.lo + i, alpha) * e)
            .sum()
    }
}

pub fn multipole_energies(field: &LevelField, sample: &PoissonSample) -> Result<MultipoleEnergies> {
    check_intensity(sample.nu)?;
    let band = &field.kernels.band;
    let n = sample.count();
    let mut sums = vec![0.0; band.hi + 1];
    let mut ts = Vec::with_capacity(n);
    for (i, z) in sample.points.iter().enumerate() {
        ts.clear();
        ts.extend(sample.points[i + 1..].iter().map(|w| z.dot(w)));
        accumulate_legendre_sums(&ts, &mut sums);
    }
    let scale = 1.0 / (sample.nu * field.sigma_sq);
    let energies = band
        .iter()
        .map(|(ell, b)| {
            let pair_total = n as f64 + 2.0 * sums[ell];
            b.powi(4) * harmonic_dim(ell) * pair_total * scale
        })
        .collect();
    Ok(MultipoleEnergies { lo: band.lo, energies })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FunctionalKind {
    L2,
    Sobolev { alpha: f64 },
}

/// Squared functional norm of one realization. The `L²` norm is computed by
/// cubature, the Sobolev norm from the pairwise multipole energies.
pub fn functional_norm_sq(
    field: &LevelField,
    sample: &PoissonSample,
    kind: FunctionalKind,
    rule: &CubatureRule,
) -> Result<f64> {
    match kind {
        FunctionalKind::L2 => l2_norm_sq(field, sample, rule),
        FunctionalKind::Sobolev { alpha } => {
            if !(alpha.is_finite() && alpha >= 0.0) {
                return Err(Error::invalid("alpha", format!("must be nonnegative, got {alpha}")));
            }
            if sample.count() == 0 {
                return Ok(0.0);
            }
            Ok(multipole_energies(field, sample)?.norm_sq(alpha))
        }
    }
}

/// `E‖Ψ‖²`, `E‖Ψ‖⁴` and the squared Hilbert-Schmidt norm of the covariance
/// operator, in `W^{α,2}` (`α = 0` is `L²`).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FunctionalMoments {
    pub m2: f64,
    pub m4: f64,
    pub hs_sq: f64,
}

impl FunctionalMoments {
    /// `m4 - m2² - 2 hs_sq`, which equals `4π s₄(α)²/(ν σ_j⁴)`.
    pub fn fourth_moment_excess(&self) -> f64 {
        self.m4 - self.m2 * self.m2 - 2.0 * self.hs_sq
    }
}

/// With `s_n(α)` the spectral sum of `b^n` weighted by `(1 + √(ℓ(ℓ+1)))^{2α}`:
/// `m2 = 4π s₄(α)/σ²`, `hs_sq = 4π s₈(2α)/σ⁴`,
/// `m4 = (4π/ν + 16π²) s₄(α)²/σ⁴ + 8π s₈(2α)/σ⁴`.
pub fn expected_functional_moments(ws: &WeightSystem, j: usize, nu: f64, alpha: f64) -> Result<FunctionalMoments> {
    check_intensity(nu)?;
    let pi = std::f64::consts::PI;
    let sigma_sq = ws.sigma_sq(j)?;
    let s4 = ws.spectral_sum(j, 4, alpha)?;
    let s8 = ws.spectral_sum(j, 8, 2.0 * alpha)?;
    let sigma4 = sigma_sq * sigma_sq;
    let m2 = if alpha == 0.0 {
        4.0 * pi
    } else {
        4.0 * pi * s4 / sigma_sq
    };
    let lead = if alpha == 0.0 { 1.0 } else { s4 * s4 / sigma4 };
    Ok(FunctionalMoments {
        m2,
        m4: (4.0 * pi / nu + 16.0 * pi * pi) * lead + 8.0 * pi * s8 / sigma4,
        hs_sq: 4.0 * pi * s8 / sigma4,
    })
}

/// Observed range of `‖ψ_k‖_q / Σ_{j;p}^{1 - 2/q}` over the frame.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZetaRange {
    pub lower: f64,
    pub upper: f64,
}

/// Level constants feeding the bounds.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NormalizationConstants {
    pub j: usize,
    pub sigma_sq: f64,
    pub c_b: f64,
    /// `π ‖ψ_k‖₂² / C_b`, averaged over `k`.
    pub sigma_bar_sq: f64,
    /// Smallest and largest `σ̃_k² = ‖ψ_k‖₂²`.
    pub sigma_tilde_sq_min: f64,
    pub sigma_tilde_sq_max: f64,
    pub zeta_2: ZetaRange,
    pub zeta_3: ZetaRange,
    pub zeta_4: ZetaRange,
    pub zeta_inf: ZetaRange,
    /// `∫ψ⁴ / (∫ψ²)²`, the same for every `k`.
    pub kurtosis_ratio: f64,
}

impl NormalizationConstants {
    pub fn compute(ws: &WeightSystem, frame: &NeedletFrame) -> Result<Self> {
        let j = frame.level();
        let loc = ws.seq().sigma_loc(j)?;
        let rule = fourth_moment_rule(ws, j)?;
        let profile = frame.profile();
        let pole = SpherePoint::NORTH;
        // L^q norms of the unweighted profile; ψ_k is √λ_k times a rotated copy
        let p2 = rule.integrate_zonal(profile, &pole, |v| v * v);
        let p3 = rule.integrate_zonal(profile, &pole, |v| v.abs().powi(3));
        let p4 = rule.integrate_zonal(profile, &pole, |v| v.powi(4));
        let pinf = profile.at_one();
        let (lam_lo, lam_hi) = frame
            .rule()
            .weights()
            .iter()
            .fold((f64::INFINITY, 0.0f64), |(a, b), w| (a.min(*w), b.max(*w)));
        let range = |norm: f64, q_inv: f64| {
            let power = loc.powf(1.0 - 2.0 * q_inv);
            ZetaRange {
                lower: lam_lo.sqrt() * norm / power,
                upper: lam_hi.sqrt() * norm / power,
            }
        };
        let norms = frame.norms_sq();
        let mean_norm = neumaier_sum(norms.iter().copied()) / norms.len() as f64;
        let c_b = ws.c_b_estimate()?;
        Ok(NormalizationConstants {
            j,
            sigma_sq: ws.sigma_sq(j)?,
            c_b,
            sigma_bar_sq: std::f64::consts::PI * mean_norm / c_b,
            sigma_tilde_sq_min: lam_lo * frame.kernel_trace(),
            sigma_tilde_sq_max: lam_hi * frame.kernel_trace(),
            zeta_2: range(p2.sqrt(), 0.5),
            zeta_3: range(p3.cbrt(), 1.0 / 3.0),
            zeta_4: range(p4.powf(0.25), 0.25),
            zeta_inf: range(pinf, 0.0),
            kurtosis_ratio: p4 / (p2 * p2),
        })
    }

    /// `ζ₄⁴ / σ̃⁴`, independent of `k`.
    pub fn normalized_fourth_ratio(&self, loc: f64) -> f64 {
        self.kurtosis_ratio / (loc * loc)
    }
}
