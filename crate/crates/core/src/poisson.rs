//! Homogeneous Poisson point process on the unit sphere.
//!
//! The count is `Poisson(4π ν)` and, given the count, points are i.i.d. uniform
//! (`z = 2u - 1`, `phi = 2πv`). Everything flows from a 64-bit seed fed to
//! ChaCha8, so a sample is a pure function of `(nu, seed)`.

use std::f64::consts::PI;
use std::io::Write;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

use crate::error::{Error, Result};
use crate::harmonics::SpherePoint;

#[derive(Clone, Debug, PartialEq)]
pub struct PoissonSample {
    pub nu: f64,
    pub seed: u64,
    pub points: Vec<SpherePoint>,
}

impl PoissonSample {
    pub fn count(&self) -> usize {
        self.points.len()
    }

    /// Draws one realization with intensity `nu` per unit area.
    pub fn draw(nu: f64, seed: u64) -> Result<Self> {
        if !(nu.is_finite() && nu >= 0.0) {
            return Err(Error::invalid(
                "nu",
                format!("intensity must be finite and nonnegative, got {nu}"),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mean = 4.0 * PI * nu;
        let count = if mean > 0.0 {
            let dist = Poisson::new(mean).map_err(|e| Error::invalid("nu", e.to_string()))?;
            dist.sample(&mut rng) as usize
        } else {
            0
        };
        let points = uniform_points(count, &mut rng);
        Ok(PoissonSample { nu, seed, points })
    }

    /// Writes `theta,phi` rows.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "theta,phi")?;
        for p in &self.points {
            writeln!(out, "{:.16e},{:.16e}", p.theta(), p.phi())?;
        }
        Ok(())
    }
}

/// `n` independent uniform points.
pub fn uniform_points<R: Rng>(n: usize, rng: &mut R) -> Vec<SpherePoint> {
    (0..n)
        .map(|_| {
            let z = 2.0 * rng.random::<f64>() - 1.0;
            let phi = 2.0 * PI * rng.random::<f64>();
            SpherePoint::from_height(z, phi)
        })
        .collect()
}

fn splitmix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of replication `index` under `master`: the SplitMix64 finalizer applied
/// to `master + (index + 1) · 0x9E3779B97F4A7C15`.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    splitmix64(master.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15)))
}
