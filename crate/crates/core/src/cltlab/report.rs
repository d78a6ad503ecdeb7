//! Report records and their JSON / CSV encodings.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::bounds::{BoundKind, LevelConstants};
use super::stats::Cumulants;
use crate::error::Result;
use crate::field::FunctionalMoments;
use crate::scaling::ScaleParams;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ReportContext {
    pub kind: BoundKind,
    pub j: usize,
    pub nu: f64,
    pub scale: ScaleParams,
    /// Number of pooled locations or vector components.
    pub points: usize,
    pub delta: Option<f64>,
    pub slack: f64,
    /// Largest admissible level for the kind at this intensity, `0` when none is.
    pub admissible_j: Option<usize>,
    /// `(theta, phi)` of the evaluation points or needlet centers.
    pub locations: Vec<[f64; 2]>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EmpiricalStats {
    /// Pooled sample size, `reps · points`.
    pub samples: usize,
    pub cumulants: Cumulants,
    pub cumulant_se: Cumulants,
    pub wasserstein: Option<f64>,
    pub wasserstein_se: Option<f64>,
    pub kolmogorov: Option<f64>,
    pub kolmogorov_se: Option<f64>,
    /// Frobenius distance between the sample and exact covariance.
    pub covariance_error: Option<f64>,
    /// Typical Frobenius size of the sampling error of the covariance.
    pub covariance_noise: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OracleValues {
    pub mean: f64,
    pub variance: f64,
    pub cum3: Option<f64>,
    pub cum4: Option<f64>,
    pub functional: Option<FunctionalMoments>,
    pub fourth_moment_excess: Option<f64>,
    pub covariance: Option<Vec<Vec<f64>>>,
    pub constants: LevelConstants,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PassFlags {
    pub admissible: bool,
    pub wasserstein_within_bound: Option<bool>,
    pub mean_agreement: bool,
    pub variance_agreement: bool,
    pub cum4_agreement: Option<bool>,
    pub covariance_agreement: Option<bool>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CltReport {
    pub context: ReportContext,
    pub seed: u64,
    pub reps: usize,
    pub empirical: EmpiricalStats,
    pub oracle: OracleValues,
    pub bounds: BTreeMap<String, f64>,
    pub flags: PassFlags,
}

/// One line of the long-format sweep table. For moment metrics the `bound`
/// column carries the exact value.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub j: usize,
    pub nu: f64,
    pub metric: &'static str,
    pub empirical: Option<f64>,
    pub bound: Option<f64>,
    pub se: Option<f64>,
}

impl CltReport {
    pub fn write_json<W: Write>(&self, mut out: W) -> Result<()> {
        serde_json::to_writer_pretty(&mut out, self)?;
        writeln!(out)?;
        Ok(())
    }

    /// Fixed set of rows per kind, so that sweeps have a predictable length.
    pub fn sweep_rows(&self) -> Vec<SweepRow> {
        let row = |metric, empirical, bound, se| SweepRow {
            j: self.context.j,
            nu: self.context.nu,
            metric,
            empirical,
            bound,
            se,
        };
        let e = &self.empirical;
        let b = |k: &str| self.bounds.get(k).copied();
        match self.context.kind {
            BoundKind::Coeff1dRaw | BoundKind::Coeff1dNormalized | BoundKind::Fdd1d => vec![
                row("wasserstein", e.wasserstein, b("wasserstein"), e.wasserstein_se),
                row("kolmogorov", e.kolmogorov, b("kolmogorov"), e.kolmogorov_se),
                row(
                    "variance",
                    Some(e.cumulants.variance),
                    Some(self.oracle.variance),
                    Some(e.cumulant_se.variance),
                ),
                row(
                    "cum4",
                    Some(e.cumulants.cum4),
                    self.oracle.cum4,
                    Some(e.cumulant_se.cum4),
                ),
            ],
            BoundKind::CoeffMultiRaw | BoundKind::CoeffMultiNormalized | BoundKind::FddMulti { .. } => vec![
                row("d3", None, b("d3"), None),
                row("covariance_error", e.covariance_error, None, e.covariance_noise),
                row(
                    "variance",
                    Some(e.cumulants.variance),
                    Some(self.oracle.variance),
                    Some(e.cumulant_se.variance),
                ),
                row(
                    "cum4",
                    Some(e.cumulants.cum4),
                    self.oracle.cum4,
                    Some(e.cumulant_se.cum4),
                ),
            ],
            BoundKind::FunctionalL2 | BoundKind::Sobolev { .. } => vec![
                row("d3", None, b("d3"), None),
                row(
                    "norm_sq_mean",
                    Some(e.cumulants.mean),
                    Some(self.oracle.mean),
                    Some(e.cumulant_se.mean),
                ),
                row(
                    "norm_sq_variance",
                    Some(e.cumulants.variance),
                    Some(self.oracle.variance),
                    Some(e.cumulant_se.variance),
                ),
                row("fourth_moment_excess", None, self.oracle.fourth_moment_excess, None),
            ],
        }
    }
}

/// Floats with 17 significant digits; missing values are empty fields.
pub fn format_float(v: Option<f64>) -> String {
    match v {
        Some(x) if x.is_finite() => format!("{x:.16e}"),
        Some(x) => format!("{x}"),
        None => String::new(),
    }
}

pub const SWEEP_HEADER: &str = "j,nu_t,metric,empirical,bound,se";

pub fn write_sweep_csv<W: Write>(reports: &[CltReport], mut out: W) -> Result<()> {
    writeln!(out, "{SWEEP_HEADER}")?;
    for r in reports {
        for row in r.sweep_rows() {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                row.j,
                format_float(Some(row.nu)),
                row.metric,
                format_float(row.empirical),
                format_float(row.bound),
                format_float(row.se)
            )?;
        }
    }
    Ok(())
}
