//! Seeded Monte Carlo experiments: simulate replications in parallel, reduce
//! them in index order and compare against exact moments and bounds.

use std::f64::consts::PI;
use std::time::Instant;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::bounds::{bound_table, BoundContext, BoundKind, LevelConstants};
use super::report::{CltReport, EmpiricalStats, OracleValues, PassFlags, ReportContext};
use super::stats::{bootstrap_distance_se, cumulant_standard_errors, empirical_cumulants, empirical_distance, Metric};
use crate::cubature::{separated_subset, CubatureRule, NeedletFrame};
use crate::error::{Error, Result};
use crate::field::{
    coefficient_covariance, coefficients_subset, exact_cumulant, expected_functional_moments, field_covariance,
    fourth_moment_rule, functional_norm_sq, CoefficientMode, CovarianceMatrix, CumulantTarget, FunctionalKind,
    LevelField,
};
use crate::harmonics::SpherePoint;
use crate::poisson::{derive_seed, PoissonSample};
use crate::scaling::ScaleSequence;
use crate::weights::WeightSystem;

/// Environment variable capping the worker count.
pub const THREADS_ENV: &str = "NEEDLET_LAB_THREADS";

/// Standard errors allowed between an estimate and its target.
pub const DISTANCE_SIGMAS: f64 = 3.0;
pub const MOMENT_SIGMAS: f64 = 3.0;
pub const CUM4_SIGMAS: f64 = 4.0;

/// Degree of the product grid from which field evaluation points are picked.
const CANDIDATE_DEGREE: usize = 64;

const BOOTSTRAP_STREAM: u64 = 0xB0B5_7A9E_0000_0001;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub kind: BoundKind,
    pub j: usize,
    pub nu: f64,
    pub reps: usize,
    pub seed: u64,
    /// Locations pooled for the one-dimensional kinds, vector length for
    /// `coeff_multi_*`. `fdd_multi` takes its dimension from the kind.
    pub points: usize,
    /// Minimal geodesic separation of the locations; `Σ_{j;p}^{-1/2}` when unset.
    pub delta: Option<f64>,
    /// Slack `c` of the admissibility test `S_j^e ≤ c ν`.
    pub slack: f64,
}

impl ExperimentConfig {
    pub fn new(kind: BoundKind, j: usize, nu: f64, reps: usize, seed: u64) -> Self {
        ExperimentConfig {
            kind,
            j,
            nu,
            reps,
            seed,
            points: 1,
            delta: None,
            slack: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.kind.validate()?;
        if !(self.nu.is_finite() && self.nu > 0.0) {
            return Err(Error::invalid(
                "nu",
                format!("intensity must be positive, got {}", self.nu),
            ));
        }
        if self.reps < super::stats::MIN_CUMULANT_SAMPLES {
            return Err(Error::invalid(
                "reps",
                format!("need at least 8 replications, got {}", self.reps),
            ));
        }
        if self.points == 0 {
            return Err(Error::invalid("points", "must be positive"));
        }
        if matches!(self.kind, BoundKind::CoeffMultiRaw | BoundKind::CoeffMultiNormalized) && self.points < 2 {
            return Err(Error::invalid(
                "points",
                "multi-coefficient kinds need at least two coefficients",
            ));
        }
        if let Some(d) = self.delta {
            if !(d > 0.0 && d <= PI) {
                return Err(Error::invalid(
                    "delta",
                    format!("separation must lie in (0, π], got {d}"),
                ));
            }
        }
        if !(self.slack > 0.0 && self.slack <= 1.0) {
            return Err(Error::invalid(
                "slack",
                format!("must lie in (0, 1], got {}", self.slack),
            ));
        }
        Ok(())
    }

    fn components(&self) -> usize {
        match self.kind {
            BoundKind::FddMulti { dim } => dim,
            BoundKind::FunctionalL2 | BoundKind::Sobolev { .. } => 1,
            _ => self.points,
        }
    }
}

/// Runs `f` on a pool capped by [`THREADS_ENV`] when it is set.
pub fn with_thread_cap<T: Send>(f: impl FnOnce() -> T + Send) -> Result<T> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => {
            let n: usize = v.trim().parse().ok().filter(|n| *n > 0).ok_or_else(|| {
                Error::invalid("NEEDLET_LAB_THREADS", format!("expected a positive integer, got `{v}`"))
            })?;
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::invalid("NEEDLET_LAB_THREADS", e.to_string()))?;
            Ok(pool.install(f))
        }
        Err(_) => Ok(f()),
    }
}

/// What a replication measures.
enum Probe {
    Field {
        field: LevelField,
        xs: Vec<SpherePoint>,
    },
    Coefficients {
        frame: NeedletFrame,
        sigma_sq: f64,
        mode: CoefficientMode,
        indices: Vec<usize>,
    },
    Functional {
        field: LevelField,
        kind: FunctionalKind,
        rule: CubatureRule,
    },
}

impl Probe {
    fn measure(&self, sample: &PoissonSample) -> Result<Vec<f64>> {
        match self {
            Probe::Field { field, xs } => field.values(sample, xs),
            Probe::Coefficients {
                frame,
                sigma_sq,
                mode,
                indices,
            } => coefficients_subset(frame, *sigma_sq, sample, *mode, indices),
            Probe::Functional { field, kind, rule } => Ok(vec![functional_norm_sq(field, sample, *kind, rule)?]),
        }
    }
}

fn take_separated(points: &[SpherePoint], delta: f64, count: usize) -> Result<Vec<usize>> {
    let chosen = separated_subset(points, delta)?;
    if chosen.len() < count {
        return Err(Error::invalid(
            "points",
            format!(
                "only {} candidate locations are {delta}-separated, {count} requested",
                chosen.len()
            ),
        ));
    }
    Ok(chosen[..count].to_vec())
}

/// Frame indices on the cubature ring nearest the equator, where every
/// needlet has the same weight.
fn equatorial_ring(frame: &NeedletFrame) -> Vec<usize> {
    let (n_theta, n_phi) = frame.rule().shape();
    let ring = (0..n_theta)
        .min_by(|a, b| {
            let za = frame.point(a * n_phi).0[2].abs();
            let zb = frame.point(b * n_phi).0[2].abs();
            za.total_cmp(&zb)
        })
        .unwrap_or(0);
    (ring * n_phi..(ring + 1) * n_phi).collect()
}

struct Setup {
    probe: Probe,
    locations: Vec<SpherePoint>,
    covariance: Option<CovarianceMatrix>,
    /// Exact `(variance, cum₃, cum₄)` of each component.
    exact: Vec<(f64, f64, f64)>,
}

fn setup(cfg: &ExperimentConfig, ws: &WeightSystem, delta: f64) -> Result<Setup> {
    let j = cfg.j;
    let field = LevelField::new(ws, j)?;
    let m = cfg.components();
    match cfg.kind {
        BoundKind::Fdd1d | BoundKind::FddMulti { .. } => {
            let grid = CubatureRule::gauss_legendre_sphere(CANDIDATE_DEGREE.max(2 * field.top()));
            let idx = take_separated(grid.nodes(), delta, m)?;
            let xs: Vec<SpherePoint> = idx.iter().map(|&k| grid.nodes()[k]).collect();
            let rule = fourth_moment_rule(ws, j)?;
            let x0 = xs[0];
            // the field is isotropic, so one location gives every component
            let c3 = exact_cumulant(&field, cfg.nu, 3, CumulantTarget::Point(x0), &rule)?;
            let c4 = exact_cumulant(&field, cfg.nu, 4, CumulantTarget::Point(x0), &rule)?;
            let covariance = if m > 1 {
                Some(field_covariance(&field, &xs)?)
            } else {
                None
            };
            Ok(Setup {
                probe: Probe::Field { field, xs: xs.clone() },
                locations: xs,
                covariance,
                exact: vec![(1.0, c3, c4); m],
            })
        }
        BoundKind::Coeff1dRaw
        | BoundKind::Coeff1dNormalized
        | BoundKind::CoeffMultiRaw
        | BoundKind::CoeffMultiNormalized => {
            let mode = match cfg.kind {
                BoundKind::Coeff1dRaw | BoundKind::CoeffMultiRaw => CoefficientMode::Raw,
                _ => CoefficientMode::Normalized,
            };
            let frame = NeedletFrame::new(ws, j)?;
            let ring = equatorial_ring(&frame);
            let ring_points: Vec<SpherePoint> = ring.iter().map(|&k| *frame.point(k)).collect();
            let indices: Vec<usize> = take_separated(&ring_points, delta, m)?
                .iter()
                .map(|&i| ring[i])
                .collect();
            let rule = fourth_moment_rule(ws, j)?;
            let sigma_sq = field.sigma_sq();
            let mut exact = Vec::with_capacity(m);
            for &k in &indices {
                let target = CumulantTarget::Coefficient { frame: &frame, k, mode };
                let var = match mode {
                    CoefficientMode::Raw => frame.norm_sq(k) / sigma_sq,
                    CoefficientMode::Normalized => 1.0,
                };
                exact.push((
                    var,
                    exact_cumulant(&field, cfg.nu, 3, target, &rule)?,
                    exact_cumulant(&field, cfg.nu, 4, target, &rule)?,
                ));
            }
            let covariance = if m > 1 {
                Some(coefficient_covariance(&frame, sigma_sq, &indices, mode)?)
            } else {
                None
            };
            let locations = indices.iter().map(|&k| *frame.point(k)).collect();
            Ok(Setup {
                probe: Probe::Coefficients {
                    frame,
                    sigma_sq,
                    mode,
                    indices,
                },
                locations,
                covariance,
                exact,
            })
        }
        BoundKind::FunctionalL2 | BoundKind::Sobolev { .. } => {
            let (kind, alpha) = match cfg.kind {
                BoundKind::Sobolev { alpha } => (FunctionalKind::Sobolev { alpha }, alpha),
                _ => (FunctionalKind::L2, 0.0),
            };
            let moments = expected_functional_moments(ws, j, cfg.nu, alpha)?;
            let rule = CubatureRule::gauss_legendre_sphere(2 * field.top());
            Ok(Setup {
                probe: Probe::Functional { field, kind, rule },
                locations: Vec::new(),
                covariance: None,
                exact: vec![(moments.m4 - moments.m2 * moments.m2, f64::NAN, f64::NAN)],
            })
        }
    }
}

/// Sample covariance of `rows` stacked vectors of length `m`, together with
/// `√(Σ_ab Var(Ĉ_ab))`, the typical Frobenius size of its sampling error.
fn sample_covariance(values: &[f64], m: usize) -> (DMatrix<f64>, f64) {
    let n = values.len() / m;
    let nf = n as f64;
    let mut mean = vec![0.0; m];
    for row in values.chunks(m) {
        for (a, v) in mean.iter_mut().zip(row) {
            *a += v / nf;
        }
    }
    let mut cov = DMatrix::zeros(m, m);
    for row in values.chunks(m) {
        for a in 0..m {
            for b in 0..m {
                cov[(a, b)] += (row[a] - mean[a]) * (row[b] - mean[b]);
            }
        }
    }
    cov /= nf - 1.0;
    let mut noise = 0.0;
    for a in 0..m {
        for b in 0..m {
            let c = cov[(a, b)];
            let mut s = 0.0;
            for row in values.chunks(m) {
                let p = (row[a] - mean[a]) * (row[b] - mean[b]) - c;
                s += p * p;
            }
            noise += s / ((nf - 1.0) * nf);
        }
    }
    (cov, noise.sqrt())
}

/// Simulates `cfg.reps` replications and assembles the report.
pub fn run_experiment(scale: &ScaleSequence, cfg: &ExperimentConfig) -> Result<CltReport> {
    cfg.validate()?;
    let started = Instant::now();
    let ws = WeightSystem::new(scale.clone());
    let j = cfg.j;
    if j == 0 || j > ws.j_max() {
        return Err(Error::OutOfRange {
            what: "level",
            value: j as f64,
            min: 1.0,
            max: ws.j_max() as f64,
        });
    }
    let admissible_j = match cfg.kind.resolution_context() {
        Some(ctx) => match scale.max_resolution(cfg.nu, ctx, cfg.slack) {
            Ok(jm) => Some(jm),
            Err(Error::NoAdmissibleLevel(_)) => Some(0),
            Err(e) => return Err(e),
        },
        None => None,
    };
    let admissible = admissible_j.is_none_or(|jm| j <= jm);
    if !admissible {
        log::warn!(
            "level {j} exceeds the admissible level {} for {} at nu = {}, slack = {}",
            admissible_j.unwrap_or(0),
            cfg.kind.name(),
            cfg.nu,
            cfg.slack
        );
    }

    let consts = LevelConstants::compute(&ws, j)?;
    let delta = match cfg.delta {
        Some(d) => d,
        None => consts.localization.powf(-0.5).min(PI),
    };
    let Setup {
        probe,
        locations,
        covariance,
        exact,
    } = setup(cfg, &ws, delta)?;
    let m = exact.len();

    let rows: Vec<Vec<f64>> = with_thread_cap(|| {
        (0..cfg.reps)
            .into_par_iter()
            .map(|r| {
                let sample = PoissonSample::draw(cfg.nu, derive_seed(cfg.seed, r as u64))?;
                probe.measure(&sample)
            })
            .collect::<Result<Vec<_>>>()
    })??;
    let values: Vec<f64> = rows.into_iter().flatten().collect();

    let cumulants = empirical_cumulants(&values)?;
    let cumulant_se = cumulant_standard_errors(&values, m)?;
    let exact_var = exact.iter().map(|e| e.0).sum::<f64>() / m as f64;
    let exact_c3 = exact.iter().map(|e| e.1).sum::<f64>() / m as f64;
    let exact_c4 = exact.iter().map(|e| e.2).sum::<f64>() / m as f64;

    let functional = matches!(cfg.kind, BoundKind::FunctionalL2 | BoundKind::Sobolev { .. });
    let mut oracle = OracleValues {
        mean: 0.0,
        variance: exact_var,
        cum3: None,
        cum4: None,
        functional: None,
        fourth_moment_excess: None,
        covariance: covariance.as_ref().map(|c| matrix_rows(&c.matrix)),
        constants: consts.clone(),
    };
    let mut empirical = EmpiricalStats {
        samples: values.len(),
        cumulants,
        cumulant_se,
        wasserstein: None,
        wasserstein_se: None,
        kolmogorov: None,
        kolmogorov_se: None,
        covariance_error: None,
        covariance_noise: None,
    };
    if functional {
        let alpha = match cfg.kind {
            BoundKind::Sobolev { alpha } => alpha,
            _ => 0.0,
        };
        let moments = expected_functional_moments(&ws, j, cfg.nu, alpha)?;
        oracle.mean = moments.m2;
        oracle.functional = Some(moments);
        oracle.fourth_moment_excess = Some(moments.fourth_moment_excess());
    } else {
        oracle.cum3 = Some(exact_c3);
        oracle.cum4 = Some(exact_c4);
        if values.len() >= super::stats::MIN_DISTANCE_SAMPLES {
            let sd = exact_var.sqrt();
            let boot_seed = derive_seed(cfg.seed ^ BOOTSTRAP_STREAM, 0);
            empirical.wasserstein = Some(empirical_distance(&values, sd, Metric::Wasserstein)?);
            empirical.wasserstein_se = Some(bootstrap_distance_se(&values, sd, Metric::Wasserstein, m, boot_seed)?);
            empirical.kolmogorov = Some(empirical_distance(&values, sd, Metric::Kolmogorov)?);
            empirical.kolmogorov_se = Some(bootstrap_distance_se(&values, sd, Metric::Kolmogorov, m, boot_seed)?);
        }
        if let Some(c) = &covariance {
            let (sample_cov, noise) = sample_covariance(&values, m);
            empirical.covariance_error = Some(c.frobenius_distance(&sample_cov));
            empirical.covariance_noise = Some(noise);
        }
    }

    let mut bctx = BoundContext::new(cfg.kind, j, cfg.nu);
    bctx.covariance = covariance.as_ref().map(|c| c.matrix.clone());
    if covariance.is_some() {
        bctx.fourth_cumulants = Some(exact.iter().map(|e| e.2).collect());
    }
    let bounds = bound_table(&bctx, &ws, &consts)?;

    let within = |est: f64, target: f64, se: f64, k: f64| (est - target).abs() <= k * se;
    let wasserstein_within_bound = match (empirical.wasserstein, empirical.wasserstein_se) {
        (Some(w), Some(se)) => bounds
            .get(cfg.kind.primary_metric())
            .filter(|_| cfg.kind.primary_metric() == "wasserstein")
            .map(|b| w <= b + DISTANCE_SIGMAS * se),
        _ => None,
    };
    let flags = PassFlags {
        admissible,
        wasserstein_within_bound,
        mean_agreement: within(
            empirical.cumulants.mean,
            oracle.mean,
            empirical.cumulant_se.mean,
            MOMENT_SIGMAS,
        ),
        variance_agreement: within(
            empirical.cumulants.variance,
            exact_var,
            empirical.cumulant_se.variance,
            MOMENT_SIGMAS,
        ),
        cum4_agreement: oracle
            .cum4
            .map(|c4| within(empirical.cumulants.cum4, c4, empirical.cumulant_se.cum4, CUM4_SIGMAS)),
        covariance_agreement: match (empirical.covariance_error, empirical.covariance_noise) {
            (Some(e), Some(noise)) => Some(e <= MOMENT_SIGMAS * noise),
            _ => None,
        },
    };

    log::info!(
        "{} j={} nu={} reps={} finished in {:.2?}",
        cfg.kind.name(),
        j,
        cfg.nu,
        cfg.reps,
        started.elapsed()
    );
    Ok(CltReport {
        context: ReportContext {
            kind: cfg.kind,
            j,
            nu: cfg.nu,
            scale: scale.params().clone(),
            points: m,
            delta: if functional { None } else { Some(delta) },
            slack: cfg.slack,
            admissible_j,
            locations: locations.iter().map(|p| [p.theta(), p.phi()]).collect(),
        },
        seed: cfg.seed,
        reps: cfg.reps,
        empirical,
        oracle,
        bounds,
        flags,
    })
}

fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

/// Runs one experiment per `(j, ν)` pair, levels outermost.
pub fn run_sweep(
    scale: &ScaleSequence,
    base: &ExperimentConfig,
    levels: &[usize],
    nus: &[f64],
) -> Result<Vec<CltReport>> {
    let mut out = Vec::with_capacity(levels.len() * nus.len());
    for &j in levels {
        for &nu in nus {
            let cfg = ExperimentConfig { j, nu, ..base.clone() };
            out.push(run_experiment(scale, &cfg)?);
        }
    }
    Ok(out)
}
