//! Synthetic data generation for the Monte-Carlo studies.
//!
//! The generating process draws, per observation, Z ~ Uniform(−1,1) and an
//! independent W ~ Uniform(−1,1), sets X = (W + Z)/2 and
//! Y = β⁽ʲ⁾X + f₀(Z) + σε with ε ~ N(0,1).  By construction
//! E[X|Z = z] = z/2 exactly, the residualized covariate variance is
//! Ω = Var(W/2) = 1/12, and the raw second moment is Σ = E[X²] = 1/6.
//! The shared function f₀ is a two-component Beta-density mixture evaluated
//! at t = (z+1)/2, so it is strictly positive inside the design range and
//! vanishes at both endpoints, making its periodic extension continuous.

use std::sync::OnceLock;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use statrs::distribution::{Beta, Continuous};

use crate::asymptotics::{AsymptoticQuantities, FourierCoeffs, QuantitySource};
use crate::data::PLDataset;
use crate::error::{Error, Result};
use crate::kernel::EigenSystem;
use crate::rng::{stream, StreamPath};

/// Shared nonparametric component of the generating process:
/// f₀(z) = 0.6·Beta(30,17).pdf(t) + 0.4·Beta(3,11).pdf(t) at t = (z+1)/2.
pub fn f0(z: f64) -> f64 {
    static MIX: OnceLock<(Beta, Beta)> = OnceLock::new();
    let (a, b) = MIX.get_or_init(|| {
        (Beta::new(30.0, 17.0).expect("valid shape"), Beta::new(3.0, 11.0).expect("valid shape"))
    });
    let t = (z + 1.0) / 2.0;
    if !(0.0..=1.0).contains(&t) {
        return 0.0;
    }
    0.6 * a.pdf(t) + 0.4 * b.pdf(t)
}

/// Specification of the synthetic generating process.
#[derive(Clone, Debug)]
pub struct DGPSpec {
    /// Total sample size N, split evenly across groups.
    pub n_total: usize,
    /// Number of groups s.
    pub s: usize,
    /// Per-group linear coefficients, length s.
    pub betas: Vec<f64>,
    /// Noise standard deviation.
    pub sigma: f64,
    /// Master seed; each replicate draws from its own substream.
    pub seed: u64,
}

impl DGPSpec {
    /// A process with group coefficients 1, 2, …, s.
    pub fn heterogeneous(n_total: usize, s: usize, seed: u64) -> Result<Self> {
        Self::custom(n_total, (1..=s).map(|j| j as f64).collect(), 1.0, seed)
    }

    /// A process with every group sharing the coefficient `beta`.
    pub fn homogeneous(n_total: usize, s: usize, beta: f64, seed: u64) -> Result<Self> {
        Self::custom(n_total, vec![beta; s], 1.0, seed)
    }

    /// A process with explicit per-group coefficients.
    pub fn custom(n_total: usize, betas: Vec<f64>, sigma: f64, seed: u64) -> Result<Self> {
        let s = betas.len();
        if s == 0 {
            return Err(Error::InvalidConfig("need at least one group".into()));
        }
        if n_total == 0 || n_total % s != 0 {
            return Err(Error::InvalidConfig(format!(
                "total sample size {n_total} must be a positive multiple of the {s} groups"
            )));
        }
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::InvalidConfig(format!("noise level must be positive, got {sigma}")));
        }
        if betas.iter().any(|b| !b.is_finite()) {
            return Err(Error::InvalidConfig("group coefficients must be finite".into()));
        }
        Ok(DGPSpec { n_total, s, betas, sigma, seed })
    }

    /// Group sample size n = N/s.
    pub fn n_per_group(&self) -> usize {
        self.n_total / self.s
    }
}

/// Draws replicate `rep` of the process deterministically: same spec and
/// replicate always produce the identical dataset, independent of what else
/// has been drawn.
pub fn generate(dgp: &DGPSpec, rep: u64) -> Result<PLDataset> {
    let mut rng = stream(dgp.seed, StreamPath::new("dgp", rep));
    let n_j = dgp.n_per_group();
    let mut groups = Vec::with_capacity(dgp.s);
    for &beta in &dgp.betas {
        let mut x = Vec::with_capacity(n_j);
        let mut z = Vec::with_capacity(n_j);
        let mut y = Vec::with_capacity(n_j);
        for _ in 0..n_j {
            let zi: f64 = rng.random_range(-1.0..1.0);
            let wi: f64 = rng.random_range(-1.0..1.0);
            let eps: f64 = StandardNormal.sample(&mut rng);
            let xi = 0.5 * (wi + zi);
            x.push(xi);
            z.push(zi);
            y.push(beta * xi + f0(zi) + dgp.sigma * eps);
        }
        groups.push((x, z, y));
    }
    PLDataset::from_groups(groups, 1)
}

/// Basis expansion of the conditional mean E[X|Z=z] = z/2 over the
/// eigensystem's penalized modes.  On the mapped variable t = (z+1)/2 this
/// is t − 1/2, whose trigonometric series has sine coefficients
/// −√2/(2πk) and no cosine or constant part.
pub fn conditional_mean_coeffs(es: &EigenSystem) -> FourierCoeffs {
    let mut pen = vec![0.0; es.penalized_len()];
    for k in 1..=es.penalized_len() / 2 {
        pen[2 * (k - 1)] = -2.0_f64.sqrt() / (2.0 * std::f64::consts::PI * k as f64);
    }
    FourierCoeffs::penalized(pen)
}

/// Basis expansion of an arbitrary function by midpoint quadrature against
/// the design density of Z ~ Uniform(−1,1), using `n_quad` nodes.
pub fn series_by_quadrature(
    es: &EigenSystem,
    g: impl Fn(f64) -> f64,
    n_quad: usize,
) -> FourierCoeffs {
    let mut pen = vec![0.0; es.penalized_len()];
    let mut null = vec![0.0; es.null_len()];
    let h = 2.0 / n_quad as f64;
    for i in 0..n_quad {
        let z = -1.0 + (i as f64 + 0.5) * h;
        let gz = g(z);
        for (l, c) in pen.iter_mut().enumerate() {
            *c += gz * es.phi(l, z);
        }
        for (u, c) in null.iter_mut().enumerate() {
            *c += gz * es.phi_null(u, z);
        }
    }
    for c in pen.iter_mut().chain(null.iter_mut()) {
        *c /= n_quad as f64;
    }
    FourierCoeffs { pen, null }
}

/// Exact asymptotic quantities of the generating process at penalty
/// `lambda` and evaluation point `z0`: Ω = 1/12, Σ = 1/6 and the
/// conditional-mean expansion above.  Supply `f0_coeffs` (for instance from
/// [`series_by_quadrature`]) to also populate the smoothing-bias field.
pub fn dgp_quantities(
    es: &EigenSystem,
    lambda: f64,
    z0: f64,
    f0_coeffs: Option<&FourierCoeffs>,
) -> Result<AsymptoticQuantities> {
    AsymptoticQuantities::new(
        DMatrix::from_element(1, 1, 1.0 / 12.0),
        DMatrix::from_element(1, 1, 1.0 / 6.0),
        vec![conditional_mean_coeffs(es)],
        f0_coeffs,
        es,
        lambda,
        z0,
        QuantitySource::Analytic,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::KernelFamily;
    use approx::assert_relative_eq;

    #[test]
    fn f0_matches_reference_values() {
        // References from an independent log-gamma evaluation of the
        // mixture density.
        assert_relative_eq!(f0(0.25), 3.292735240762857, max_relative = 1e-12);
        assert_relative_eq!(f0(0.5), 0.9896009661191471, max_relative = 1e-12);
        assert_relative_eq!(f0(0.75), 1.319583335350773e-3, max_relative = 1e-12);
        assert_relative_eq!(f0(0.0), 0.5910281636814358, max_relative = 1e-12);
        assert_relative_eq!(f0(-0.5), 1.207925511105649, max_relative = 1e-12);
    }

    #[test]
    fn f0_is_a_density_in_t() {
        // Nonnegative, vanishing at the endpoints, unit mass over t ∈ (0,1)
        // which is mean 1 over z ∈ (−1,1), and second moment matching the
        // frozen reference.
        assert_eq!(f0(-1.0), 0.0);
        assert_eq!(f0(1.0), 0.0);
        let n = 200_000;
        let mut mass = 0.0;
        let mut second = 0.0;
        for i in 0..n {
            let z = -1.0 + (i as f64 + 0.5) * 2.0 / n as f64;
            let v = f0(z);
            assert!(v >= 0.0);
            mass += v;
            second += v * v;
        }
        mass /= n as f64;
        second /= n as f64;
        assert_relative_eq!(mass, 1.0, max_relative = 1e-9);
        assert_relative_eq!(second, 1.917777631928, max_relative = 1e-9);
    }

    #[test]
    fn generate_is_deterministic_and_respects_spec() {
        let dgp = DGPSpec::heterogeneous(64, 4, 9).unwrap();
        let a = generate(&dgp, 3).unwrap();
        let b = generate(&dgp, 3).unwrap();
        assert_eq!(a.z_all(), b.z_all());
        assert_eq!(a.y_all(), b.y_all());
        let c = generate(&dgp, 4).unwrap();
        assert_ne!(a.z_all(), c.z_all());
        assert_eq!(a.n_groups(), 4);
        assert_eq!(a.n_total(), 64);
        assert_eq!(a.n_j(2), 16);
    }

    #[test]
    fn generated_moments_track_the_design() {
        // Coarse single-replicate check; the tight 3-SE test over 1e6 draws
        // runs in the integration suite.
        let dgp = DGPSpec::homogeneous(40_000, 1, 2.0, 17).unwrap();
        let data = generate(&dgp, 0).unwrap();
        let n = data.n_total() as f64;
        let sigma_xx: f64 = data.x_all().iter().map(|x| x * x).sum::<f64>() / n;
        let omega: f64 = data
            .x_all()
            .iter()
            .zip(data.z_all())
            .map(|(x, z)| (x - z / 2.0).powi(2))
            .sum::<f64>()
            / n;
        assert_relative_eq!(sigma_xx, 1.0 / 6.0, max_relative = 0.03);
        assert_relative_eq!(omega, 1.0 / 12.0, max_relative = 0.03);
    }

    #[test]
    fn spec_validation() {
        assert!(DGPSpec::heterogeneous(0, 2, 1).is_err());
        assert!(DGPSpec::heterogeneous(10, 3, 1).is_err(), "10 is not divisible by 3");
        assert!(DGPSpec::custom(8, vec![], 1.0, 1).is_err());
        assert!(DGPSpec::custom(8, vec![1.0, 2.0], 0.0, 1).is_err());
        assert!(DGPSpec::custom(8, vec![1.0, f64::NAN], 1.0, 1).is_err());
        let dgp = DGPSpec::heterogeneous(8, 2, 1).unwrap();
        assert_eq!(dgp.betas, vec![1.0, 2.0]);
        assert_eq!(dgp.n_per_group(), 4);
    }

    #[test]
    fn conditional_mean_series_evaluates_to_half_z() {
        let es = EigenSystem::new(KernelFamily::SobolevPeriodic { nu: 2 }, 4096).unwrap();
        let b = conditional_mean_coeffs(&es);
        // The sawtooth series converges slowly (O(1/k) tail), so a large
        // truncation is needed for pointwise agreement in the interior.
        for z in [-0.5, -0.1, 0.2, 0.6] {
            assert_relative_eq!(b.eval(&es, z), z / 2.0, epsilon = 2e-4);
        }
    }

    #[test]
    fn quadrature_series_recovers_known_coefficients() {
        let es = EigenSystem::new(KernelFamily::SobolevPeriodic { nu: 2 }, 16).unwrap();
        let exact = conditional_mean_coeffs(&es);
        let quad = series_by_quadrature(&es, |z| z / 2.0, 200_000);
        for l in 0..es.penalized_len() {
            assert_relative_eq!(quad.pen[l], exact.pen[l], epsilon = 1e-6);
        }
        assert!(quad.null[0].abs() < 1e-12, "z/2 has zero mean");
    }

    #[test]
    fn dgp_quantities_carry_design_moments() {
        let es = EigenSystem::with_default_truncation(KernelFamily::SobolevPeriodic { nu: 2 })
            .unwrap();
        let q = dgp_quantities(&es, 1e-5, 0.5, None).unwrap();
        assert_eq!(q.omega[(0, 0)], 1.0 / 12.0);
        assert_eq!(q.sigma_xx[(0, 0)], 1.0 / 6.0);
        assert!(q.sigma_lambda[(0, 0)] > 0.0);
        assert!(q.limits_vanish);
    }
}
