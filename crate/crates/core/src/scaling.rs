//! Center sequences `S_j` for flexible-bandwidth (shrinking) needlets.
//!
//! A sequence is driven by the shift `ε_j = γ(j) / j^p`, where `γ` is a slowly
//! varying function. Two constructors are provided: the recursive one sets
//! `S_j = S_{j-1}(1 + ε_j)` starting from `S_0 = s0`, the closed form uses the
//! explicit subexponential expression for `S_j`.
//!
//! The log-based `γ` descriptors evaluate their logarithm at `1 + j`, so that
//! `γ(1)` is strictly positive and finite.

use std::ops::RangeInclusive;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative slack used when comparing computed centers against integers or
/// thresholds. Products of the recursion carry a few ulps of rounding.
const SNAP_TOL: f64 = 1e-9;
const THRESHOLD_TOL: f64 = 1e-12;

/// Slowly varying factor `γ(j)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Gamma {
    /// `γ(j) = c`.
    Constant { c: f64 },
    /// `γ(j) = (log(1 + j))^a`.
    LogPower { a: f64 },
    /// `γ(j) = η / log(1 + j)`, `η > 1`.
    Critical { eta: f64 },
    /// `γ(j) = values[j - 1]`.
    Tabulated { values: Vec<f64> },
}

impl Gamma {
    pub fn eval(&self, j: usize) -> f64 {
        let jf = j as f64;
        match self {
            Gamma::Constant { c } => *c,
            Gamma::LogPower { a } => (1.0 + jf).ln().powf(*a),
            Gamma::Critical { eta } => eta / (1.0 + jf).ln(),
            Gamma::Tabulated { values } => values.get(j.wrapping_sub(1)).copied().unwrap_or(f64::NAN),
        }
    }

    fn validate(&self, j_max: usize) -> Result<()> {
        match self {
            Gamma::Constant { c } if !(c.is_finite() && *c > 0.0) => {
                return Err(Error::invalid("gamma", format!("constant must be positive, got {c}")))
            }
            Gamma::LogPower { a } if !a.is_finite() => {
                return Err(Error::invalid("gamma", "log-power exponent must be finite"))
            }
            Gamma::Critical { eta } if !(eta.is_finite() && *eta > 1.0) => {
                return Err(Error::invalid(
                    "gamma",
                    format!("critical eta must exceed 1, got {eta}"),
                ))
            }
            Gamma::Tabulated { values } if values.len() < j_max + 1 => {
                return Err(Error::invalid(
                    "gamma",
                    format!("table needs {} values, got {}", j_max + 1, values.len()),
                ))
            }
            _ => {}
        }
        for j in 1..=j_max + 1 {
            let g = self.eval(j);
            if !(g.is_finite() && g > 0.0) {
                return Err(Error::invalid(
                    "gamma",
                    format!("gamma({j}) = {g} is not positive and finite"),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Constructor {
    Recursive,
    ClosedForm,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScaleParams {
    pub p: f64,
    pub gamma: Gamma,
    pub s0: f64,
    pub constructor: Constructor,
    pub j_max: usize,
}

impl Default for ScaleParams {
    fn default() -> Self {
        ScaleParams {
            p: 1.0,
            gamma: Gamma::Constant { c: 2.0 },
            s0: 2.0,
            constructor: Constructor::Recursive,
            j_max: 8,
        }
    }
}

impl ScaleParams {
    /// The polynomial regime `p = 1`, `γ ≡ 2`, `S_0 = 1` whose centers are the
    /// triangular numbers `(j + 1)(j + 2) / 2`.
    pub fn triangular(j_max: usize) -> Self {
        ScaleParams {
            s0: 1.0,
            j_max,
            ..ScaleParams::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p.is_finite() && self.p > 0.0 && self.p <= 1.0) {
            return Err(Error::invalid("p", format!("must lie in (0, 1], got {}", self.p)));
        }
        if !(self.s0.is_finite() && self.s0 >= 1.0) {
            return Err(Error::invalid("s0", format!("must be at least 1, got {}", self.s0)));
        }
        if self.j_max < 2 {
            return Err(Error::invalid(
                "j_max",
                format!("must be at least 2, got {}", self.j_max),
            ));
        }
        self.gamma.validate(self.j_max)
    }

    fn is_power_law(&self) -> bool {
        self.p == 1.0
    }

    pub fn shift(&self, j: usize) -> f64 {
        self.gamma.eval(j) / (j as f64).powf(self.p)
    }

    fn closed_form_center(&self, j: usize) -> f64 {
        let g = self.gamma.eval(j);
        let jf = j as f64;
        if self.is_power_law() {
            (g * jf.ln()).exp()
        } else {
            (g * jf.powf(1.0 - self.p) / (1.0 - self.p)).exp()
        }
    }

    /// `Σ_{j;p}` as given by the regime-by-regime closed expressions. Reported
    /// next to the definitional product `ε_j S_j` for comparison.
    fn tabulated_localization(&self, j: usize) -> f64 {
        let g = self.gamma.eval(j);
        let jf = j as f64;
        match (&self.gamma, self.is_power_law()) {
            (_, false) => g / jf.powf(self.p) * (jf.powf(1.0 - self.p) * g / (1.0 - self.p)).exp(),
            (Gamma::Critical { eta }, true) => eta * (1.0 + jf).ln().powf(eta - 1.0),
            (_, true) => g * (jf.ln() * g).exp(),
        }
    }
}

/// Bound families whose admissible resolution is `S_j^e ≤ c ν_t`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "context", rename_all = "snake_case")]
pub enum ResolutionContext {
    Coeff1d,
    CoeffMultiRaw,
    CoeffMultiNormalized,
    Fdd,
    Sobolev { alpha: f64 },
}

impl ResolutionContext {
    pub fn exponent(&self) -> f64 {
        match self {
            ResolutionContext::Coeff1d => 2.0,
            ResolutionContext::CoeffMultiRaw => 4.0,
            ResolutionContext::CoeffMultiNormalized => 10.0,
            ResolutionContext::Fdd => 4.0,
            ResolutionContext::Sobolev { alpha } => 4.0 * alpha,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ResolutionContext::Coeff1d => "coeff_1d",
            ResolutionContext::CoeffMultiRaw => "coeff_multi_raw",
            ResolutionContext::CoeffMultiNormalized => "coeff_multi_normalized",
            ResolutionContext::Fdd => "fdd",
            ResolutionContext::Sobolev { .. } => "sobolev",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScaleSequence {
    params: ScaleParams,
    /// `S_0 ..= S_{j_max + 1}`.
    centers: Vec<f64>,
    /// `ε_1 ..= ε_{j_max + 1}` stored at index `j - 1`.
    shifts: Vec<f64>,
    /// `h_j = S_{j+1} / S_j` for `j = 0 ..= j_max`.
    dilations: Vec<f64>,
    /// `Σ_{j;p} = ε_j S_j` stored at index `j - 1`.
    loc: Vec<f64>,
}

impl ScaleSequence {
    pub fn build(params: ScaleParams) -> Result<Self> {
        params.validate()?;
        let top = params.j_max + 1;
        let shifts: Vec<f64> = (1..=top).map(|j| params.shift(j)).collect();

        let centers = match params.constructor {
            Constructor::Recursive => {
                let mut centers = Vec::with_capacity(top + 1);
                centers.push(params.s0);
                for eps in &shifts {
                    let prev = *centers.last().unwrap();
                    centers.push(prev * (1.0 + eps));
                }
                centers
            }
            Constructor::ClosedForm => {
                if params.is_power_law() && matches!(params.gamma, Gamma::Critical { .. }) {
                    return Err(Error::Degenerate(
                        "closed form with p = 1 and critical gamma keeps S_j constant; use the recursive constructor"
                            .into(),
                    ));
                }
                let mut centers = Vec::with_capacity(top + 1);
                // The p = 1 expression gives S_1 = s0, so S_0 is one recursive step below.
                let s_zero = if params.is_power_law() {
                    params.s0 / (1.0 + shifts[0])
                } else {
                    params.s0
                };
                centers.push(s_zero);
                centers.extend((1..=top).map(|j| params.s0 * params.closed_form_center(j)));
                centers
            }
        };

        if let Some(j) = centers.windows(2).position(|w| !(w[1].is_finite() && w[1] > w[0])) {
            return Err(Error::Degenerate(format!(
                "centers stop increasing at level {} (S_{} = {}, S_{} = {}) for p = {} and {:?}",
                j + 1,
                j,
                centers[j],
                j + 1,
                centers[j + 1],
                params.p,
                params.gamma
            )));
        }

        let dilations = centers.windows(2).map(|w| w[1] / w[0]).collect();
        let loc = shifts.iter().zip(&centers[1..]).map(|(e, s)| e * s).collect();

        Ok(ScaleSequence {
            params,
            centers,
            shifts,
            dilations,
            loc,
        })
    }

    pub fn params(&self) -> &ScaleParams {
        &self.params
    }

    pub fn j_max(&self) -> usize {
        self.params.j_max
    }

    /// `S_j` for `0 ≤ j ≤ j_max + 1`.
    pub fn center(&self, j: usize) -> f64 {
        self.centers[j]
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    fn check_shift_level(&self, j: usize) -> Result<()> {
        if j == 0 || j > self.j_max() + 1 {
            return Err(Error::OutOfRange {
                what: "level",
                value: j as f64,
                min: 1.0,
                max: (self.j_max() + 1) as f64,
            });
        }
        Ok(())
    }

    fn check_band_level(&self, j: usize) -> Result<()> {
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

    /// `ε_j = γ(j) / j^p`.
    pub fn shift(&self, j: usize) -> Result<f64> {
        self.check_shift_level(j)?;
        Ok(self.shifts[j - 1])
    }

    /// `h_j = S_{j+1} / S_j`, `0 ≤ j ≤ j_max`.
    pub fn dilation(&self, j: usize) -> f64 {
        self.dilations[j]
    }

    /// `Σ_{j;p} = ε_j S_j`.
    pub fn sigma_loc(&self, j: usize) -> Result<f64> {
        self.check_shift_level(j)?;
        Ok(self.loc[j - 1])
    }

    /// Integers `ℓ` with `⌈S_{j-1}⌉ ≤ ℓ ≤ ⌊S_{j+1}⌋`.
    pub fn band_multipoles(&self, j: usize) -> Result<RangeInclusive<usize>> {
        self.check_band_level(j)?;
        let lo_edge = self.centers[j - 1];
        let hi_edge = self.centers[j + 1];
        let lo = snap(lo_edge).ceil();
        let hi = snap(hi_edge).floor();
        if hi < lo || hi < 0.0 {
            return Err(Error::EmptyBand {
                level: j,
                lo: lo_edge,
                hi: hi_edge,
            });
        }
        Ok(lo as usize..=hi as usize)
    }

    /// Largest level `1 ≤ j ≤ j_max` with `S_j^e ≤ slack · ν_t`.
    pub fn max_resolution(&self, nu_t: f64, context: ResolutionContext, slack: f64) -> Result<usize> {
        if !(nu_t.is_finite() && nu_t > 0.0) {
            return Err(Error::invalid(
                "nu_t",
                format!("intensity must be positive, got {nu_t}"),
            ));
        }
        if !(slack > 0.0 && slack <= 1.0) {
            return Err(Error::invalid("slack", format!("must lie in (0, 1], got {slack}")));
        }
        let e = context.exponent();
        if !(e.is_finite() && e > 0.0) {
            return Err(Error::invalid("alpha", "Sobolev order must be positive"));
        }
        let threshold = slack * nu_t * (1.0 + THRESHOLD_TOL);
        (1..=self.j_max())
            .filter(|&j| self.centers[j].powf(e) <= threshold)
            .max()
            .ok_or_else(|| {
                Error::NoAdmissibleLevel(format!(
                    "S_1^{e} = {} exceeds {} for context {}",
                    self.centers[1].powf(e),
                    slack * nu_t,
                    context.name()
                ))
            })
    }

    pub fn diagnostics(&self) -> ScaleDiagnostics {
        let j_max = self.j_max();
        let loc_table = (1..=j_max + 1).map(|j| self.params.tabulated_localization(j)).collect();
        let degenerate_levels = (2..=j_max + 1).filter(|&j| self.loc[j - 1] < self.loc[j - 2]).collect();
        let shrinking_ratio = (1..=j_max)
            .map(|j| self.dilations[j].ln() / self.shifts[j - 1])
            .collect();
        ScaleDiagnostics {
            params: self.params.clone(),
            centers: self.centers[..=j_max].to_vec(),
            outer_edge: self.centers[j_max + 1],
            shifts: self.shifts.clone(),
            dilations: self.dilations.clone(),
            localization: self.loc.clone(),
            localization_table: loc_table,
            shrinking_ratio,
            degenerate_levels,
        }
    }
}

/// Exported view of a scale sequence. `centers` lists the level centers
/// `S_0 ..= S_{j_max}`; the support edge of the last level is `outer_edge`.
/// Arrays indexed by level start at `j = 1`, except `dilations` which starts at `j = 0`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScaleDiagnostics {
    pub params: ScaleParams,
    pub centers: Vec<f64>,
    pub outer_edge: f64,
    pub shifts: Vec<f64>,
    pub dilations: Vec<f64>,
    pub localization: Vec<f64>,
    pub localization_table: Vec<f64>,
    /// `log h_j / ε_j` for `j = 1 ..= j_max`.
    pub shrinking_ratio: Vec<f64>,
    /// Levels where `Σ_{j;p}` decreased from the previous level.
    pub degenerate_levels: Vec<usize>,
}

fn snap(x: f64) -> f64 {
    let r = x.round();
    if (x - r).abs() <= SNAP_TOL * x.abs().max(1.0) {
        r
    } else {
        x
    }
}
