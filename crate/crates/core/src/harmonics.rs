//! Points on the sphere, Legendre series and the needlet kernels built on them.
//!
//! Every kernel here is zonal, `K(x, y) = Σ_ℓ c_ℓ P_ℓ(⟨x, y⟩)`, so all the work
//! reduces to evaluating Legendre series at many inner products. The batched
//! path runs the three-term recurrence over a block of arguments at once so the
//! inner loop vectorizes.

use serde::{Deserialize, Serialize};

use crate::cubature::NeedletFrame;
use crate::error::{Error, Result};
use crate::scaling::ScaleSequence;
use crate::weights::{Band, WeightSystem};

/// Unit vector in R³.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpherePoint(pub [f64; 3]);

impl SpherePoint {
    pub const NORTH: SpherePoint = SpherePoint([0.0, 0.0, 1.0]);
    pub const SOUTH: SpherePoint = SpherePoint([0.0, 0.0, -1.0]);

    /// Colatitude `theta ∈ [0, π]`, longitude `phi`.
    pub fn from_angles(theta: f64, phi: f64) -> Self {
        let (st, ct) = theta.sin_cos();
        let (sp, cp) = phi.sin_cos();
        SpherePoint([st * cp, st * sp, ct])
    }

    /// Point with height `z = cos theta` and longitude `phi`.
    pub fn from_height(z: f64, phi: f64) -> Self {
        let r = (1.0 - z * z).max(0.0).sqrt();
        let (sp, cp) = phi.sin_cos();
        SpherePoint([r * cp, r * sp, z])
    }

    /// Normalizes `v`; fails for the zero vector.
    pub fn from_vector(v: [f64; 3]) -> Result<Self> {
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if !(n.is_finite() && n > 0.0) {
            return Err(Error::invalid("point", "cannot normalize a zero or non-finite vector"));
        }
        Ok(SpherePoint([v[0] / n, v[1] / n, v[2] / n]))
    }

    pub fn dot(&self, other: &SpherePoint) -> f64 {
        let (a, b) = (&self.0, &other.0);
        (a[0] * b[0] + a[1] * b[1] + a[2] * b[2]).clamp(-1.0, 1.0)
    }

    pub fn theta(&self) -> f64 {
        self.0[2].clamp(-1.0, 1.0).acos()
    }

    /// Longitude in `[0, 2π)`.
    pub fn phi(&self) -> f64 {
        let p = self.0[1].atan2(self.0[0]);
        if p < 0.0 {
            p + 2.0 * std::f64::consts::PI
        } else {
            p
        }
    }
}

/// Great-circle distance in `[0, π]`.
pub fn geodesic(x: &SpherePoint, y: &SpherePoint) -> f64 {
    x.dot(y).acos()
}

/// `P_ℓ(t)` by the three-term recurrence.
pub fn legendre_p(ell: usize, t: f64) -> Result<f64> {
    if !(t.abs() <= 1.0) {
        return Err(Error::OutOfRange {
            what: "t",
            value: t,
            min: -1.0,
            max: 1.0,
        });
    }
    let (mut p0, mut p1) = (1.0, t);
    if ell == 0 {
        return Ok(p0);
    }
    for l in 1..ell {
        let lf = l as f64;
        let p2 = ((2.0 * lf + 1.0) * t * p1 - lf * p0) / (lf + 1.0);
        p0 = p1;
        p1 = p2;
    }
    Ok(p1)
}

const LANES: usize = 8;

/// `f(t) = Σ_{ℓ=0}^{L} c_ℓ P_ℓ(t)` with the recurrence factors cached.
#[derive(Clone, Debug)]
pub struct LegendreSeries {
    coeffs: Vec<f64>,
    // P_{ℓ+1} = a_ℓ t P_ℓ - b_ℓ P_{ℓ-1}
    a: Vec<f64>,
    b: Vec<f64>,
}

impl LegendreSeries {
    pub fn new(coeffs: Vec<f64>) -> Self {
        let n = coeffs.len();
        let a = (0..n).map(|l| (2 * l + 1) as f64 / (l + 1) as f64).collect();
        let b = (0..n).map(|l| l as f64 / (l + 1) as f64).collect();
        LegendreSeries { coeffs, a, b }
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len().saturating_sub(1)
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// `f(1) = Σ c_ℓ`.
    pub fn at_one(&self) -> f64 {
        self.coeffs.iter().sum()
    }

    pub fn eval(&self, t: f64) -> f64 {
        let c = &self.coeffs;
        match c.len() {
            0 => return 0.0,
            1 => return c[0],
            _ => {}
        }
        let (mut p0, mut p1) = (1.0, t);
        let mut acc = c[0] + c[1] * t;
        for l in 1..c.len() - 1 {
            let p2 = self.a[l] * t * p1 - self.b[l] * p0;
            acc += c[l + 1] * p2;
            p0 = p1;
            p1 = p2;
        }
        acc
    }

    /// Writes `f(ts[i])` into `out[i]`.
    pub fn eval_batch(&self, ts: &[f64], out: &mut [f64]) {
        assert_eq!(ts.len(), out.len());
        let mut t_chunks = ts.chunks_exact(LANES);
        let mut o_chunks = out.chunks_exact_mut(LANES);
        for (t, o) in (&mut t_chunks).zip(&mut o_chunks) {
            let t: &[f64; LANES] = t.try_into().unwrap();
            *<&mut [f64; LANES]>::try_from(o).unwrap() = self.eval_lanes(t);
        }
        let rest = t_chunks.remainder();
        if !rest.is_empty() {
            let mut t = [0.0; LANES];
            t[..rest.len()].copy_from_slice(rest);
            let r = self.eval_lanes(&t);
            let n = rest.len();
            o_chunks.into_remainder().copy_from_slice(&r[..n]);
        }
    }

    /// `Σ_i f(ts[i])`, summed lane-wise then in a fixed order.
    pub fn sum_at(&self, ts: &[f64]) -> f64 {
        let mut lanes = [0.0; LANES];
        let mut chunks = ts.chunks_exact(LANES);
        for t in &mut chunks {
            let r = self.eval_lanes(t.try_into().unwrap());
            for k in 0..LANES {
                lanes[k] += r[k];
            }
        }
        let rest = chunks.remainder();
        let mut total = lanes.iter().sum::<f64>();
        for &t in rest {
            total += self.eval(t);
        }
        total
    }

    fn eval_lanes(&self, t: &[f64; LANES]) -> [f64; LANES] {
        let c = &self.coeffs;
        let mut acc = [0.0; LANES];
        if c.is_empty() {
            return acc;
        }
        let mut p0 = [1.0; LANES];
        let mut p1 = *t;
        let c1 = c.get(1).copied().unwrap_or(0.0);
        for k in 0..LANES {
            acc[k] = c[0] + c1 * t[k];
        }
        for l in 1..c.len().saturating_sub(1) {
            let (al, bl, cl) = (self.a[l], self.b[l], c[l + 1]);
            for k in 0..LANES {
                let p2 = al * t[k] * p1[k] - bl * p0[k];
                acc[k] += cl * p2;
                p0[k] = p1[k];
                p1[k] = p2;
            }
        }
        acc
    }
}

/// Per-degree sums `Σ_i P_ℓ(ts[i])` for `ℓ = 0 ..= degree`.
pub fn legendre_sums(degree: usize, ts: &[f64]) -> Vec<f64> {
    let mut sums = vec![0.0; degree + 1];
    accumulate_legendre_sums(ts, &mut sums);
    sums
}

/// Adds `Σ_i P_ℓ(ts[i])` to `sums[ℓ]` for every `ℓ < sums.len()`.
pub fn accumulate_legendre_sums(ts: &[f64], sums: &mut [f64]) {
    if sums.is_empty() {
        return;
    }
    let degree = sums.len() - 1;
    let block = |t: &[f64; LANES], live: usize, sums: &mut [f64]| {
        let mut p0 = [1.0; LANES];
        let mut p1 = *t;
        sums[0] += live as f64;
        if degree == 0 {
            return;
        }
        sums[1] += p1[..live].iter().sum::<f64>();
        for l in 1..degree {
            let lf = l as f64;
            let (a, b) = ((2.0 * lf + 1.0) / (lf + 1.0), lf / (lf + 1.0));
            for k in 0..LANES {
                let p2 = a * t[k] * p1[k] - b * p0[k];
                p0[k] = p1[k];
                p1[k] = p2;
            }
            sums[l + 1] += p1[..live].iter().sum::<f64>();
        }
    };
    let mut chunks = ts.chunks_exact(LANES);
    for t in &mut chunks {
        block(t.try_into().unwrap(), LANES, sums);
    }
    let rest = chunks.remainder();
    if !rest.is_empty() {
        let mut t = [0.0; LANES];
        t[..rest.len()].copy_from_slice(rest);
        block(&t, rest.len(), sums);
    }
}

/// The zonal kernels of one level.
#[derive(Clone, Debug)]
pub struct LevelKernels {
    pub j: usize,
    pub band: Band,
    /// `Φ_j`: coefficients `b_j²(ℓ)(2ℓ+1)/4π`.
    pub kernel: LegendreSeries,
    /// Needlet profile without the cubature weight: `b_j(ℓ)(2ℓ+1)/4π`.
    pub needlet: LegendreSeries,
    /// `b_j⁴(ℓ)(2ℓ+1)/4π`, the covariance of the unnormalized field.
    pub covariance: LegendreSeries,
}

impl LevelKernels {
    pub fn new(ws: &WeightSystem, j: usize) -> Result<Self> {
        let band = ws.band(j)?;
        Ok(LevelKernels {
            j,
            kernel: LegendreSeries::new(band.coefficients(2, 0.0)),
            needlet: LegendreSeries::new(band.coefficients(1, 0.0)),
            covariance: LegendreSeries::new(band.coefficients(4, 0.0)),
            band,
        })
    }

    pub fn phi(&self, x: &SpherePoint, y: &SpherePoint) -> f64 {
        self.kernel.eval(x.dot(y))
    }
}

/// `ψ_{j,k}(x)` of a frame.
pub fn needlet_psi(frame: &NeedletFrame, k: usize, x: &SpherePoint) -> Result<f64> {
    frame.psi(k, x)
}

/// `Φ_j(x, y) = Σ_ℓ b_j²(ℓ)(2ℓ+1)/4π P_ℓ(⟨x, y⟩)`.
pub fn kernel_phi(ws: &WeightSystem, j: usize, x: &SpherePoint, y: &SpherePoint) -> Result<f64> {
    Ok(LevelKernels::new(ws, j)?.phi(x, y))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvelopeMode {
    Kernel,
    Needlet,
}

/// Power-decay envelope for the kernel (`mode = Kernel`) or a single needlet.
pub fn localization_envelope(
    seq: &ScaleSequence,
    j: usize,
    m: u32,
    d: f64,
    mode: EnvelopeMode,
    constant: f64,
) -> Result<f64> {
    if j == 0 || j > seq.j_max() {
        return Err(Error::OutOfRange {
            what: "level",
            value: j as f64,
            min: 1.0,
            max: seq.j_max() as f64,
        });
    }
    if !(0.0..=std::f64::consts::PI).contains(&d) {
        return Err(Error::OutOfRange {
            what: "distance",
            value: d,
            min: 0.0,
            max: std::f64::consts::PI,
        });
    }
    if !(constant > 0.0) {
        return Err(Error::invalid("constant", "envelope constant must be positive"));
    }
    if m == 0 {
        return Err(Error::invalid("m", "decay order must be at least 1"));
    }
    let loc = seq.sigma_loc(j)?;
    let decay = (1.0 + loc * d).powi(m as i32);
    Ok(match mode {
        EnvelopeMode::Kernel => {
            let (lo, hi) = (seq.center(j - 1), seq.center(j + 1));
            constant * (hi * hi - lo * lo) / decay
        }
        EnvelopeMode::Needlet => 4.0 * constant * loc / decay,
    })
}

/// Smallest constant for which the kernel envelope of order `m` dominates
/// `|Φ_j(x, y)|` at every distance in `distances` (measured along a meridian from `x`).
pub fn fit_kernel_envelope(ws: &WeightSystem, j: usize, m: u32, x: &SpherePoint, distances: &[f64]) -> Result<f64> {
    let kernels = LevelKernels::new(ws, j)?;
    let mut worst: f64 = 0.0;
    for &d in distances {
        let y = rotate_away(x, d);
        let unit = localization_envelope(ws.seq(), j, m, d, EnvelopeMode::Kernel, 1.0)?;
        worst = worst.max(kernels.phi(x, &y).abs() / unit);
    }
    Ok(worst)
}

/// A point at geodesic distance `d` from `x`.
pub fn rotate_away(x: &SpherePoint, d: f64) -> SpherePoint {
    // any unit vector orthogonal to x
    let v = x.0;
    let helper = if v[2].abs() < 0.9 {
        [0.0, 0.0, 1.0]
    } else {
        [1.0, 0.0, 0.0]
    };
    let proj = v[0] * helper[0] + v[1] * helper[1] + v[2] * helper[2];
    let u = [
        helper[0] - proj * v[0],
        helper[1] - proj * v[1],
        helper[2] - proj * v[2],
    ];
    let n = (u[0] * u[0] + u[1] * u[1] + u[2] * u[2]).sqrt();
    let (s, c) = d.sin_cos();
    SpherePoint([
        c * v[0] + s * u[0] / n,
        c * v[1] + s * u[1] / n,
        c * v[2] + s * u[2] / n,
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scaling::ScaleParams;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn desk(j_max: usize) -> WeightSystem {
        WeightSystem::new(ScaleSequence::build(ScaleParams::triangular(j_max)).unwrap())
    }

    fn random_point(rng: &mut ChaCha8Rng) -> SpherePoint {
        SpherePoint::from_height(rng.random_range(-1.0..1.0), rng.random_range(0.0..2.0 * PI))
    }

    #[test]
    fn legendre_low_degree() {
        assert_eq!(legendre_p(1, 0.3).unwrap(), 0.3);
        assert_relative_eq!(legendre_p(2, 0.5).unwrap(), -0.125, epsilon = 1e-15);
        for ell in 0..=500 {
            assert_relative_eq!(legendre_p(ell, 1.0).unwrap(), 1.0, epsilon = 1e-12);
        }
        assert!(legendre_p(3, 1.0 + 1e-9).is_err());
        assert!(legendre_p(3, f64::NAN).is_err());

        let explicit = [
            |_: f64| 1.0,
            |t: f64| t,
            |t: f64| (3.0 * t * t - 1.0) / 2.0,
            |t: f64| (5.0 * t * t * t - 3.0 * t) / 2.0,
            |t: f64| (35.0 * t.powi(4) - 30.0 * t * t + 3.0) / 8.0,
        ];
        for i in 0..=200 {
            let t = -1.0 + i as f64 / 100.0;
            for (ell, f) in explicit.iter().enumerate() {
                assert!((legendre_p(ell, t).unwrap() - f(t)).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn batch_matches_scalar() {
        let coeffs: Vec<f64> = (0..40).map(|l| ((l * 7) % 5) as f64 - 2.0).collect();
        let series = LegendreSeries::new(coeffs.clone());
        let ts: Vec<f64> = (0..37).map(|i| (i as f64 * 0.37).sin()).collect();
        let mut out = vec![0.0; ts.len()];
        series.eval_batch(&ts, &mut out);
        for (t, o) in ts.iter().zip(&out) {
            let direct: f64 = coeffs
                .iter()
                .enumerate()
                .map(|(l, c)| c * legendre_p(l, *t).unwrap())
                .sum();
            assert_relative_eq!(*o, direct, epsilon = 1e-11);
            assert_relative_eq!(series.eval(*t), direct, epsilon = 1e-11);
        }
        assert_relative_eq!(series.sum_at(&ts), out.iter().sum::<f64>(), epsilon = 1e-10);

        let sums = legendre_sums(12, &ts);
        for (l, s) in sums.iter().enumerate() {
            let direct: f64 = ts.iter().map(|t| legendre_p(l, *t).unwrap()).sum();
            assert_relative_eq!(*s, direct, epsilon = 1e-12);
        }
        assert_eq!(LegendreSeries::new(vec![]).eval(0.3), 0.0);
        assert_eq!(LegendreSeries::new(vec![2.0]).eval(0.3), 2.0);
    }

    #[test]
    fn geodesic_examples() {
        let eq = SpherePoint::from_angles(FRAC_PI_2, 1.0);
        assert_eq!(geodesic(&SpherePoint::NORTH, &SpherePoint::NORTH), 0.0);
        assert_relative_eq!(geodesic(&SpherePoint::NORTH, &SpherePoint::SOUTH), PI);
        assert_relative_eq!(geodesic(&SpherePoint::NORTH, &eq), FRAC_PI_2, epsilon = 1e-15);
        let p = SpherePoint::from_angles(1.2, 5.5);
        assert_relative_eq!(p.theta(), 1.2, epsilon = 1e-14);
        assert_relative_eq!(p.phi(), 5.5, epsilon = 1e-14);
        assert!(SpherePoint::from_vector([0.0; 3]).is_err());
    }

    #[test]
    fn kernel_diagonal_is_spectral_sum() {
        let ws = desk(6);
        let x = SpherePoint::from_angles(0.4, 2.0);
        for j in 1..=6 {
            assert_relative_eq!(
                kernel_phi(&ws, j, &x, &x).unwrap(),
                ws.spectral_sum(j, 2, 0.0).unwrap(),
                max_relative = 1e-13
            );
        }
    }

    #[test]
    fn kernel_rotation_invariance() {
        let ws = desk(6);
        let k = LevelKernels::new(&ws, 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        // rotation about the axis (1, 1, 1)/√3 by 0.9 rad
        let rot = |p: &SpherePoint| {
            let n = [1.0 / 3f64.sqrt(); 3];
            let (s, c) = 0.9f64.sin_cos();
            let v = p.0;
            let d = n[0] * v[0] + n[1] * v[1] + n[2] * v[2];
            let cr = [
                n[1] * v[2] - n[2] * v[1],
                n[2] * v[0] - n[0] * v[2],
                n[0] * v[1] - n[1] * v[0],
            ];
            SpherePoint([
                v[0] * c + cr[0] * s + n[0] * d * (1.0 - c),
                v[1] * c + cr[1] * s + n[1] * d * (1.0 - c),
                v[2] * c + cr[2] * s + n[2] * d * (1.0 - c),
            ])
        };
        for _ in 0..20 {
            let x = random_point(&mut rng);
            let y = random_point(&mut rng);
            let v = k.phi(&x, &y);
            assert_eq!(v, k.phi(&y, &x));
            assert_relative_eq!(v, k.phi(&rot(&x), &rot(&y)), epsilon = 1e-11);
        }
    }

    #[test]
    fn empirical_localization() {
        let ws = desk(8);
        let x = SpherePoint::from_angles(0.7, 0.3);
        let grid: Vec<f64> = (0..=300).map(|i| PI * i as f64 / 300.0).collect();
        for m in [2, 3] {
            let fits: Vec<f64> = (2..=8)
                .map(|j| fit_kernel_envelope(&ws, j, m, &x, &grid).unwrap())
                .collect();
            // the constant does not grow with the level
            let early = fits[0].max(fits[1]);
            assert!(
                fits.iter().all(|f| f.is_finite() && *f > 0.0 && *f <= 1.5 * early),
                "M={m}: {fits:?}"
            );
        }
    }

    #[test]
    fn envelope_examples() {
        let seq = ScaleSequence::build(ScaleParams::triangular(8)).unwrap();
        // level 4: S_3 = 10, S_5 = 21, ε_4 S_4 = 0.5 * 15
        let e0 = localization_envelope(&seq, 4, 2, 0.0, EnvelopeMode::Kernel, 0.3).unwrap();
        assert_relative_eq!(e0, 0.3 * (441.0 - 100.0), max_relative = 1e-14);
        let loc = 7.5;
        let e_pi = localization_envelope(&seq, 4, 3, PI, EnvelopeMode::Kernel, 1.0).unwrap();
        assert_relative_eq!(e_pi, 341.0 / (1.0 + loc * PI).powi(3), max_relative = 1e-13);
        let n_pi = localization_envelope(&seq, 4, 3, PI, EnvelopeMode::Needlet, 1.0).unwrap();
        assert_relative_eq!(n_pi, 4.0 * loc / (1.0 + loc * PI).powi(3), max_relative = 1e-13);
        let mut prev = f64::INFINITY;
        for i in 0..=20 {
            let d = PI * i as f64 / 20.0;
            let e = localization_envelope(&seq, 4, 2, d, EnvelopeMode::Kernel, 1.0).unwrap();
            if i > 0 {
                assert!(e < prev);
                assert!(localization_envelope(&seq, 4, 3, d, EnvelopeMode::Kernel, 1.0).unwrap() < e);
            }
            prev = e;
        }
        assert!(localization_envelope(&seq, 4, 2, 4.0, EnvelopeMode::Kernel, 1.0).is_err());
        assert!(localization_envelope(&seq, 4, 2, 1.0, EnvelopeMode::Kernel, 0.0).is_err());
    }

    #[test]
    fn rotate_away_distance() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let x = random_point(&mut rng);
            let d = rng.random_range(0.0..PI);
            assert_relative_eq!(geodesic(&x, &rotate_away(&x, d)), d, epsilon = 1e-7);
        }
    }

    proptest! {
        #[test]
        fn legendre_bounded(ell in 0usize..300, t in -1.0f64..=1.0) {
            prop_assert!(legendre_p(ell, t).unwrap().abs() <= 1.0 + 1e-12);
        }
    }
}
