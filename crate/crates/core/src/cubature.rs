//! Product cubature on the sphere and the needlet frame built from it.
//!
//! The rule pairs Gauss-Legendre nodes in `cos theta` with equispaced
//! longitudes. With `n_theta = ⌈(L+1)/2⌉` and `n_phi = L + 1` it integrates
//! every spherical polynomial of degree at most `L` exactly.

use std::f64::consts::PI;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harmonics::{LegendreSeries, SpherePoint};
use crate::weights::WeightSystem;

/// Compensated (Neumaier) sum, independent of magnitudes ordering.
pub fn neumaier_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Gauss-Legendre nodes on `[-1, 1]` in decreasing order, with weights.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for l in 1..n {
                let lf = l as f64;
                let p2 = ((2.0 * lf + 1.0) * z * p1 - lf * p0) / (lf + 1.0);
                p0 = p1;
                p1 = p2;
            }
            let (pn, pn1) = if n == 1 { (z, 1.0) } else { (p1, p0) };
            dp = nf * (z * pn - pn1) / (z * z - 1.0);
            let step = pn / dp;
            z -= step;
            if step.abs() < 1e-16 {
                break;
            }
        }
        // recompute the derivative at the converged node
        let (mut p0, mut p1) = (1.0, z);
        for l in 1..n {
            let lf = l as f64;
            let p2 = ((2.0 * lf + 1.0) * z * p1 - lf * p0) / (lf + 1.0);
            p0 = p1;
            p1 = p2;
        }
        if n > 1 {
            dp = nf * (z * p1 - p0) / (z * z - 1.0);
        }
        let weight = 2.0 / ((1.0 - z * z) * dp * dp);
        x[i] = z;
        x[n - 1 - i] = -z;
        w[i] = weight;
        w[n - 1 - i] = weight;
    }
    if n % 2 == 1 {
        x[n / 2] = 0.0;
    }
    (x, w)
}

#[derive(Clone, Debug)]
pub struct CubatureRule {
    nodes: Vec<SpherePoint>,
    weights: Vec<f64>,
    degree: usize,
    n_theta: usize,
    n_phi: usize,
}

impl CubatureRule {
    /// Product rule exact up to degree `degree`.
    pub fn gauss_legendre_sphere(degree: usize) -> Self {
        let n_theta = (degree + 1).div_ceil(2);
        let n_phi = degree + 1;
        let (zs, ws) = gauss_legendre(n_theta);
        let dphi = 2.0 * PI / n_phi as f64;
        let mut nodes = Vec::with_capacity(n_theta * n_phi);
        let mut weights = Vec::with_capacity(n_theta * n_phi);
        for (z, w) in zs.iter().zip(&ws) {
            for k in 0..n_phi {
                nodes.push(SpherePoint::from_height(*z, k as f64 * dphi));
                weights.push(w * dphi);
            }
        }
        CubatureRule {
            nodes,
            weights,
            degree,
            n_theta,
            n_phi,
        }
    }

    pub fn nodes(&self) -> &[SpherePoint] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.n_theta, self.n_phi)
    }

    pub fn require_degree(&self, needed: usize) -> Result<()> {
        if self.degree < needed {
            return Err(Error::InsufficientDegree {
                needed,
                have: self.degree,
            });
        }
        Ok(())
    }

    pub fn integrate<F: Fn(&SpherePoint) -> f64>(&self, f: F) -> f64 {
        neumaier_sum(self.nodes.iter().zip(&self.weights).map(|(x, w)| w * f(x)))
    }

    /// `Σ_k w_k values[k]`.
    pub fn integrate_values(&self, values: &[f64]) -> f64 {
        assert_eq!(values.len(), self.weights.len());
        neumaier_sum(values.iter().zip(&self.weights).map(|(v, w)| v * w))
    }

    /// `∫ g(f(⟨x, y⟩)) dy` for a zonal series `f`, evaluated in batch.
    pub fn integrate_zonal<G: Fn(f64) -> f64>(&self, series: &LegendreSeries, x: &SpherePoint, g: G) -> f64 {
        let ts: Vec<f64> = self.nodes.iter().map(|y| x.dot(y)).collect();
        let mut vals = vec![0.0; ts.len()];
        series.eval_batch(&ts, &mut vals);
        neumaier_sum(vals.iter().zip(&self.weights).map(|(v, w)| w * g(*v)))
    }

    /// Writes `theta,phi,weight` rows with 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "theta,phi,weight")?;
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            writeln!(out, "{:.16e},{:.16e},{:.16e}", x.theta(), x.phi(), w)?;
        }
        Ok(())
    }
}

/// Cubature points `ξ_k` and weights `λ_k` of one level, with the needlet
/// profile `ψ_k(x) = √λ_k Σ_ℓ b_j(ℓ)(2ℓ+1)/4π P_ℓ(⟨x, ξ_k⟩)`.
#[derive(Clone, Debug)]
pub struct NeedletFrame {
    j: usize,
    rule: CubatureRule,
    profile: LegendreSeries,
    /// `Σ_ℓ b_j²(ℓ)(2ℓ+1)/4π`.
    kernel_trace: f64,
    norms_sq: Vec<f64>,
}

impl NeedletFrame {
    pub fn new(ws: &WeightSystem, j: usize) -> Result<Self> {
        let band = ws.band(j)?;
        let rule = CubatureRule::gauss_legendre_sphere(2 * band.hi);
        let kernel_trace = ws.spectral_sum(j, 2, 0.0)?;
        let norms_sq = rule.weights().iter().map(|l| l * kernel_trace).collect();
        Ok(NeedletFrame {
            j,
            profile: LegendreSeries::new(band.coefficients(1, 0.0)),
            rule,
            kernel_trace,
            norms_sq,
        })
    }

    pub fn level(&self) -> usize {
        self.j
    }

    pub fn rule(&self) -> &CubatureRule {
        &self.rule
    }

    pub fn count(&self) -> usize {
        self.rule.len()
    }

    pub fn point(&self, k: usize) -> &SpherePoint {
        &self.rule.nodes()[k]
    }

    pub fn lambda(&self, k: usize) -> f64 {
        self.rule.weights()[k]
    }

    /// The unweighted needlet profile `Σ_ℓ b_j(ℓ)(2ℓ+1)/4π P_ℓ`.
    pub fn profile(&self) -> &LegendreSeries {
        &self.profile
    }

    /// `‖ψ_k‖₂² = λ_k Σ_ℓ b_j²(ℓ)(2ℓ+1)/4π`.
    pub fn norm_sq(&self, k: usize) -> f64 {
        self.norms_sq[k]
    }

    pub fn norms_sq(&self) -> &[f64] {
        &self.norms_sq
    }

    pub fn kernel_trace(&self) -> f64 {
        self.kernel_trace
    }

    fn check_index(&self, k: usize) -> Result<()> {
        if k >= self.count() {
            return Err(Error::OutOfRange {
                what: "needlet index",
                value: k as f64,
                min: 0.0,
                max: self.count() as f64 - 1.0,
            });
        }
        Ok(())
    }

    pub fn psi(&self, k: usize, x: &SpherePoint) -> Result<f64> {
        self.check_index(k)?;
        Ok(self.lambda(k).sqrt() * self.profile.eval(x.dot(self.point(k))))
    }

    /// `Σ_i ψ_k(z_i)`.
    pub fn psi_sum(&self, k: usize, points: &[SpherePoint]) -> Result<f64> {
        self.check_index(k)?;
        let xi = self.point(k);
        let ts: Vec<f64> = points.iter().map(|z| xi.dot(z)).collect();
        Ok(self.lambda(k).sqrt() * self.profile.sum_at(&ts))
    }

    /// `sup |ψ_k| = √λ_k Σ_ℓ b_j(ℓ)(2ℓ+1)/4π`, attained at `ξ_k`.
    pub fn sup_norm(&self, k: usize) -> f64 {
        self.lambda(k).sqrt() * self.profile.at_one()
    }

    /// Greedy farthest-point subset with pairwise separation at least `delta`.
    pub fn separated_subset(&self, delta: f64) -> Result<Vec<usize>> {
        separated_subset(self.rule.nodes(), delta)
    }

    pub fn summary(&self, ws: &WeightSystem) -> FrameSummary {
        let s_next = ws.seq().center(self.j + 1);
        let (lo, hi) = self
            .norms_sq
            .iter()
            .fold((f64::INFINITY, 0.0f64), |(lo, hi), v| (lo.min(*v), hi.max(*v)));
        let (n_theta, n_phi) = self.rule.shape();
        FrameSummary {
            j: self.j,
            degree: self.rule.degree(),
            n_theta,
            n_phi,
            count: self.count(),
            count_ratio: self.count() as f64 / (s_next * s_next),
            weight_sum: neumaier_sum(self.rule.weights().iter().copied()),
            norm_sq_min: lo,
            norm_sq_max: hi,
        }
    }
}

/// Observed frame constants of one level.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FrameSummary {
    pub j: usize,
    pub degree: usize,
    pub n_theta: usize,
    pub n_phi: usize,
    pub count: usize,
    /// `K_j / S_{j+1}²`.
    pub count_ratio: f64,
    pub weight_sum: f64,
    pub norm_sq_min: f64,
    pub norm_sq_max: f64,
}

/// Greedy farthest-point selection: start at index 0, then repeatedly add the
/// point farthest from the current selection (lowest index on ties) while that
/// distance is at least `delta`.
pub fn separated_subset(points: &[SpherePoint], delta: f64) -> Result<Vec<usize>> {
    if !(delta > 0.0 && delta <= PI) {
        return Err(Error::OutOfRange {
            what: "delta",
            value: delta,
            min: 0.0,
            max: PI,
        });
    }
    if points.is_empty() {
        return Ok(Vec::new());
    }
    // work with chordal cosines: larger distance means smaller inner product
    let mut nearest = vec![f64::NEG_INFINITY; points.len()];
    let mut chosen = vec![0usize];
    let mut taken = vec![false; points.len()];
    taken[0] = true;
    let mut last = 0;
    loop {
        let mut best: Option<(usize, f64)> = None;
        for (i, p) in points.iter().enumerate() {
            if taken[i] {
                continue;
            }
            let c = p.dot(&points[last]);
            if c > nearest[i] {
                nearest[i] = c;
            }
            if best.is_none_or(|(_, bc)| nearest[i] < bc) {
                best = Some((i, nearest[i]));
            }
        }
        match best {
            Some((i, c)) if c.acos() >= delta => {
                chosen.push(i);
                taken[i] = true;
                last = i;
            }
            _ => break,
        }
    }
    Ok(chosen)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harmonics::{geodesic, legendre_p, LevelKernels};
    use crate::scaling::{ScaleParams, ScaleSequence};
    use crate::weights::harmonic_dim;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn desk(j_max: usize) -> WeightSystem {
        WeightSystem::new(ScaleSequence::build(ScaleParams::triangular(j_max)).unwrap())
    }

    fn random_point(rng: &mut ChaCha8Rng) -> SpherePoint {
        SpherePoint::from_height(rng.random_range(-1.0..1.0), rng.random_range(0.0..2.0 * PI))
    }

    fn zonal(ell: usize, x: &SpherePoint, y: &SpherePoint) -> f64 {
        harmonic_dim(ell) * legendre_p(ell, x.dot(y)).unwrap()
    }

    #[test]
    fn gauss_legendre_small() {
        let (x, w) = gauss_legendre(1);
        assert_eq!(x, vec![0.0]);
        assert_relative_eq!(w[0], 2.0);
        let (x, w) = gauss_legendre(2);
        assert_relative_eq!(x[0], 1.0 / 3f64.sqrt(), epsilon = 1e-15);
        assert_relative_eq!(w[1], 1.0, epsilon = 1e-15);
        let (x, w) = gauss_legendre(3);
        assert_relative_eq!(x[0], 0.6f64.sqrt(), epsilon = 1e-15);
        assert_relative_eq!(w[0], 5.0 / 9.0, epsilon = 1e-15);
        assert_relative_eq!(w[1], 8.0 / 9.0, epsilon = 1e-15);
        // exact for monomials up to degree 2n - 1
        let (x, w) = gauss_legendre(40);
        for d in 0..80 {
            let q: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(d)).sum();
            let exact = if d % 2 == 1 { 0.0 } else { 2.0 / (d as f64 + 1.0) };
            assert!((q - exact).abs() < 1e-13, "degree {d}: {q} vs {exact}");
        }
    }

    #[test]
    fn rule_constants_and_orthogonality() {
        let rule = CubatureRule::gauss_legendre_sphere(30);
        assert_relative_eq!(rule.integrate(|_| 1.0), 4.0 * PI, epsilon = 1e-12);
        assert_relative_eq!(rule.integrate(|_| 2.5), 10.0 * PI, epsilon = 1e-12);
        assert!(rule.weights().iter().all(|w| *w > 0.0));
        for ell in 1..=30 {
            let v = rule.integrate(|y| legendre_p(ell, SpherePoint::NORTH.dot(y)).unwrap());
            assert!(v.abs() < 1e-10);
        }
        // off-axis zonal functions too
        let x = SpherePoint::from_angles(0.9, 0.4);
        for ell in 1..=30 {
            assert!(rule.integrate(|y| legendre_p(ell, x.dot(y)).unwrap()).abs() < 1e-10);
        }
    }

    #[test]
    fn reproducing_kernel() {
        let degree = 40;
        let rule = CubatureRule::gauss_legendre_sphere(degree);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let x = random_point(&mut rng);
            let y = random_point(&mut rng);
            let l1 = rng.random_range(0..=degree / 2);
            let l2 = rng.random_range(0..=degree / 2);
            let v = rule.integrate(|z| zonal(l1, &x, z) * zonal(l2, z, &y));
            let expect = if l1 == l2 { zonal(l1, &x, &y) } else { 0.0 };
            assert!((v - expect).abs() < 1e-9, "{l1} {l2}: {v} vs {expect}");
        }
    }

    #[test]
    fn kernel_integrals() {
        let ws = desk(6);
        let x = SpherePoint::from_angles(1.1, 2.3);
        for j in 1..=5 {
            let k = LevelKernels::new(&ws, j).unwrap();
            let rule = CubatureRule::gauss_legendre_sphere(2 * k.band.hi);
            let sq = rule.integrate_zonal(&k.kernel, &x, |v| v * v);
            assert_relative_eq!(sq, ws.sigma_sq(j).unwrap(), max_relative = 1e-11);
            assert!(rule.integrate_zonal(&k.kernel, &x, |v| v).abs() < 1e-10);
        }
    }

    #[test]
    fn frame_counts() {
        let ws = desk(8);
        // ⌊S_3⌋ = 10
        let frame = NeedletFrame::new(&ws, 2).unwrap();
        assert_eq!(frame.rule().degree(), 20);
        assert_eq!(frame.rule().shape(), (11, 21));
        assert_eq!(frame.count(), 231);
        let mut ratios = Vec::new();
        for j in 1..=8 {
            let s = NeedletFrame::new(&ws, j).unwrap().summary(&ws);
            assert_relative_eq!(s.weight_sum, 4.0 * PI, epsilon = 1e-10);
            ratios.push(s.count_ratio);
        }
        assert!(ratios.iter().all(|r| (1.0..=4.0).contains(r)), "{ratios:?}");
    }

    #[test]
    fn needlet_values_and_norms() {
        let ws = desk(6);
        let j = 3;
        let frame = NeedletFrame::new(&ws, j).unwrap();
        let band = ws.band(j).unwrap();
        let sum_b: f64 = band.iter().map(|(l, b)| b * harmonic_dim(l)).sum();
        for k in [0, 17, frame.count() - 1] {
            let xi = *frame.point(k);
            assert_relative_eq!(
                frame.psi(k, &xi).unwrap(),
                frame.lambda(k).sqrt() * sum_b,
                max_relative = 1e-13
            );
            assert_relative_eq!(frame.sup_norm(k), frame.psi(k, &xi).unwrap(), max_relative = 1e-13);
            let sq = frame.rule().integrate(|y| frame.psi(k, y).unwrap().powi(2));
            assert_relative_eq!(sq, frame.norm_sq(k), max_relative = 1e-11);
            assert!(frame.rule().integrate(|y| frame.psi(k, y).unwrap()).abs() < 1e-10);
        }
        assert!(frame.psi(frame.count(), &SpherePoint::NORTH).is_err());
    }

    #[test]
    fn separated_subsets() {
        let ws = desk(6);
        let frame = NeedletFrame::new(&ws, 4).unwrap();
        assert!(frame.separated_subset(PI).unwrap().len() <= 2);
        assert_eq!(frame.separated_subset(1e-9).unwrap().len(), frame.count());
        assert!(frame.separated_subset(0.0).is_err());

        let delta = ws.seq().sigma_loc(4).unwrap().powf(-0.5);
        let idx = frame.separated_subset(delta).unwrap();
        assert!(idx.len() > 5);
        for (a, &i) in idx.iter().enumerate() {
            for &k in &idx[a + 1..] {
                assert!(geodesic(frame.point(i), frame.point(k)) >= delta);
            }
        }
        assert_eq!(idx, frame.separated_subset(delta).unwrap());
    }

    #[test]
    fn insufficient_degree() {
        let rule = CubatureRule::gauss_legendre_sphere(10);
        assert!(rule.require_degree(10).is_ok());
        assert!(matches!(
            rule.require_degree(11),
            Err(Error::InsufficientDegree { needed: 11, have: 10 })
        ));
    }

    #[test]
    fn csv_export() {
        let rule = CubatureRule::gauss_legendre_sphere(3);
        let mut buf = Vec::new();
        rule.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "theta,phi,weight");
        assert_eq!(lines.len(), 1 + rule.len());
    }

    #[test]
    fn neumaier_cancellation() {
        assert_eq!(neumaier_sum([1.0, 1e100, 1.0, -1e100]), 2.0);
    }
}
