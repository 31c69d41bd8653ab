//! Mercer eigensystems for the supported kernel families.
//!
//! A kernel is represented through its eigen-decomposition
//! K(z₁,z₂) = Σ_ℓ μ_ℓ φ_ℓ(z₁) φ_ℓ(z₂): the solver, the effective dimension,
//! and all asymptotic quantities are written against (μ_ℓ, φ_ℓ) rather than
//! against kernel evaluations. Three families are provided:
//!
//! * [`KernelFamily::FiniteRank`]: a rank-r polynomial dictionary
//!   φ_ℓ(z) = z^{ℓ-1} with flat eigenvalues μ_ℓ = 1 on z ∈ [-1,1].
//! * [`KernelFamily::GaussianExp`]: the Gaussian kernel under a Gaussian
//!   design, whose eigenfunctions are scaled Hermite functions and whose
//!   eigenvalues decay geometrically, μ_ℓ = η^{2ℓ+1} with η = (√5-1)/2.
//! * [`KernelFamily::SobolevPeriodic`]: the order-ν periodic Sobolev space
//!   on the uniform design, eigenfunctions √2 sin(2πkt), √2 cos(2πkt) with
//!   μ = (2πk)^{-2ν} in pairs, plus an unpenalized constant mode. Inputs on
//!   z ∈ [-1,1] are mapped to t = (z+1)/2.
//!
//! Scalar spectral sums (effective dimension, pointwise variance sums, the
//! modified kernel) are evaluated adaptively over the full spectrum with
//! certified analytic tail bounds below `TAIL_TOL`; the `truncation` field
//! only caps finite basis representations used by the solver.

use crate::error::{Error, Result};
use nalgebra::DMatrix;
use std::f64::consts::PI;

/// Absolute tail bound at which adaptive spectral sums stop.
const TAIL_TOL: f64 = 1e-10;

/// Eigenvalue decay base for the Gaussian-design Gaussian kernel.
pub const GAUSSIAN_ETA: f64 = 0.618033988749894848;

/// Kernel family selector.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum KernelFamily {
    /// Polynomial dictionary of the given rank; μ ≡ 1.
    FiniteRank { rank: usize },
    /// Gaussian kernel / Gaussian design; μ_ℓ = η^{2ℓ+1}.
    GaussianExp,
    /// Periodic Sobolev space of smoothness `nu` on the uniform design.
    SobolevPeriodic { nu: u32 },
}

/// A kernel family together with the basis truncation used for fitting.
#[derive(Clone, Copy, Debug)]
pub struct EigenSystem {
    family: KernelFamily,
    truncation: usize,
    /// Input interval affinely mapped to [0,1] before evaluating the
    /// periodic Sobolev basis; ignored by the other families.
    z_range: (f64, f64),
}

impl EigenSystem {
    /// Builds an eigensystem; `truncation` is the number of penalized basis
    /// functions kept in finite representations (rounded down to a full
    /// sin/cos pair for the Sobolev family, ignored by `FiniteRank` which
    /// always uses its rank).
    pub fn new(family: KernelFamily, truncation: usize) -> Result<Self> {
        let truncation = match family {
            KernelFamily::FiniteRank { rank } => {
                if rank == 0 {
                    return Err(Error::InvalidConfig("FiniteRank rank must be positive".into()));
                }
                rank
            }
            KernelFamily::GaussianExp => truncation,
            KernelFamily::SobolevPeriodic { nu } => {
                if nu == 0 {
                    return Err(Error::InvalidConfig("SobolevPeriodic nu must be positive".into()));
                }
                truncation - truncation % 2
            }
        };
        if truncation == 0 {
            return Err(Error::InvalidConfig("truncation must be positive".into()));
        }
        Ok(EigenSystem { family, truncation, z_range: (-1.0, 1.0) })
    }

    /// Declares the input interval for the Sobolev domain map (default
    /// [-1, 1]); evaluation at z uses t = (z - lo)/(hi - lo).
    pub fn with_z_range(mut self, lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::InvalidConfig(format!("invalid z range [{lo}, {hi}]")));
        }
        self.z_range = (lo, hi);
        Ok(self)
    }

    /// Affine map of z onto the periodic domain [0, 1].
    #[inline]
    fn to_unit(&self, z: f64) -> f64 {
        (z - self.z_range.0) / (self.z_range.1 - self.z_range.0)
    }

    /// Default truncations: 410 trigonometric modes (205 pairs) for Sobolev,
    /// 64 Hermite modes for Gaussian (η^{2ℓ+1} < 1e-27 beyond), the rank for
    /// FiniteRank.
    pub fn with_default_truncation(family: KernelFamily) -> Result<Self> {
        let t = match family {
            KernelFamily::FiniteRank { rank } => rank,
            KernelFamily::GaussianExp => 64,
            KernelFamily::SobolevPeriodic { .. } => 410,
        };
        Self::new(family, t)
    }

    pub fn family(&self) -> KernelFamily {
        self.family
    }

    /// Number of penalized basis functions in finite representations.
    pub fn penalized_len(&self) -> usize {
        self.truncation
    }

    /// Number of unpenalized (null-space) basis functions.
    pub fn null_len(&self) -> usize {
        match self.family {
            KernelFamily::SobolevPeriodic { .. } => 1,
            _ => 0,
        }
    }

    /// Eigenvalue of the i-th penalized mode (0-based).
    pub fn mu(&self, i: usize) -> f64 {
        match self.family {
            KernelFamily::FiniteRank { .. } => 1.0,
            // ℓ = i+1 in 1-based mode numbering.
            KernelFamily::GaussianExp => GAUSSIAN_ETA.powi(2 * i as i32 + 3),
            KernelFamily::SobolevPeriodic { nu } => {
                let k = (i / 2 + 1) as f64;
                (2.0 * PI * k).powi(-2 * nu as i32)
            }
        }
    }

    /// Shrinkage factor λ/(λ+μ_ℓ) of the smoothing-bias operator on the i-th
    /// penalized mode. Unpenalized modes have factor 0.
    pub fn w_multiplier(&self, lambda: f64, i: usize) -> f64 {
        let mu = self.mu(i);
        lambda / (lambda + mu)
    }

    /// Uniform bound on |φ_ℓ| over the design domain.
    pub fn c_phi(&self) -> f64 {
        match self.family {
            KernelFamily::FiniteRank { .. } => 1.0,
            KernelFamily::GaussianExp => 1.336,
            KernelFamily::SobolevPeriodic { .. } => std::f64::consts::SQRT_2,
        }
    }

    /// i-th penalized eigenfunction at `z`.
    pub fn phi(&self, i: usize, z: f64) -> f64 {
        match self.family {
            KernelFamily::FiniteRank { .. } => z.powi(i as i32),
            KernelFamily::GaussianExp => hermite_phi(i + 1, z),
            KernelFamily::SobolevPeriodic { .. } => {
                let t = self.to_unit(z);
                let k = (i / 2 + 1) as f64;
                let ang = 2.0 * PI * k * t;
                if i % 2 == 0 {
                    std::f64::consts::SQRT_2 * ang.sin()
                } else {
                    std::f64::consts::SQRT_2 * ang.cos()
                }
            }
        }
    }

    /// u-th unpenalized eigenfunction at `z` (only the Sobolev constant).
    pub fn phi_null(&self, _u: usize, _z: f64) -> f64 {
        1.0
    }

    /// Feature matrix with the eigenvalue square roots folded in:
    /// entry (i, ℓ) = φ_ℓ(z_i) √μ_ℓ. With this scaling the RKHS penalty on
    /// the fitted function is the plain squared norm of its coefficients.
    pub fn weighted_features(&self, z: &[f64]) -> DMatrix<f64> {
        let n = z.len();
        let l = self.penalized_len();
        let mut out = DMatrix::zeros(n, l);
        match self.family {
            KernelFamily::SobolevPeriodic { .. } => {
                let sqmu: Vec<f64> = (0..l).map(|i| self.mu(i).sqrt()).collect();
                for (row, &zi) in z.iter().enumerate() {
                    let t = self.to_unit(zi);
                    for i in (0..l).step_by(2) {
                        let k = (i / 2 + 1) as f64;
                        let (s, c) = (2.0 * PI * k * t).sin_cos();
                        out[(row, i)] = std::f64::consts::SQRT_2 * s * sqmu[i];
                        if i + 1 < l {
                            out[(row, i + 1)] = std::f64::consts::SQRT_2 * c * sqmu[i + 1];
                        }
                    }
                }
            }
            _ => {
                let sqmu: Vec<f64> = (0..l).map(|i| self.mu(i).sqrt()).collect();
                for (row, &zi) in z.iter().enumerate() {
                    for (i, sm) in sqmu.iter().enumerate() {
                        out[(row, i)] = self.phi(i, zi) * sm;
                    }
                }
            }
        }
        out
    }

    /// Unpenalized feature columns (n × null_len).
    pub fn null_features(&self, z: &[f64]) -> DMatrix<f64> {
        DMatrix::from_element(z.len(), self.null_len(), 1.0)
    }

    /// Evaluates Σ_ℓ c_ℓ √μ_ℓ φ_ℓ(z) for coefficients in the weighted basis.
    pub fn eval_weighted(&self, coefs: &[f64], z: f64) -> f64 {
        let l = coefs.len().min(self.penalized_len());
        match self.family {
            KernelFamily::SobolevPeriodic { .. } => {
                let t = self.to_unit(z);
                let mut acc = 0.0;
                for i in (0..l).step_by(2) {
                    let k = (i / 2 + 1) as f64;
                    let (s, c) = (2.0 * PI * k * t).sin_cos();
                    acc += coefs[i] * std::f64::consts::SQRT_2 * s * self.mu(i).sqrt();
                    if i + 1 < l {
                        acc += coefs[i + 1] * std::f64::consts::SQRT_2 * c * self.mu(i + 1).sqrt();
                    }
                }
                acc
            }
            _ => (0..l).map(|i| coefs[i] * self.phi(i, z) * self.mu(i).sqrt()).sum(),
        }
    }

    /// Effective dimension d(λ) = Σ_ℓ 1/(1+λ/μ_ℓ), summed over the full
    /// spectrum (unpenalized modes count 1 each) with a certified tail below
    /// `TAIL_TOL`.
    pub fn d_lambda(&self, lambda: f64) -> f64 {
        assert!(lambda > 0.0, "d(lambda) requires lambda > 0");
        match self.family {
            KernelFamily::FiniteRank { rank } => rank as f64 / (1.0 + lambda),
            KernelFamily::GaussianExp => {
                let mut sum = 0.0;
                let mut i = 0usize;
                loop {
                    let mu = self.mu(i);
                    sum += 1.0 / (1.0 + lambda / mu);
                    // Remaining terms are below Σ_{j>i} μ_j/λ, a geometric
                    // series with ratio η².
                    let tail = mu * GAUSSIAN_ETA * GAUSSIAN_ETA
                        / (lambda * (1.0 - GAUSSIAN_ETA * GAUSSIAN_ETA));
                    if tail < TAIL_TOL {
                        break;
                    }
                    i += 1;
                }
                sum
            }
            KernelFamily::SobolevPeriodic { nu } => {
                let p2 = 2 * nu as i32;
                let mut sum = 1.0; // unpenalized constant mode
                let mut k = 1usize;
                loop {
                    let mu = (2.0 * PI * k as f64).powi(-p2);
                    sum += 2.0 / (1.0 + lambda / mu);
                    // Integral tail: Σ_{j>k} 2/(λ(2πj)^{2ν}) is bounded by
                    // 2 k^{1-2ν} / (λ (2π)^{2ν} (2ν-1)).
                    let tail = 2.0 * (k as f64).powi(1 - p2)
                        / (lambda * (2.0 * PI).powi(p2) * (p2 as f64 - 1.0));
                    if tail < TAIL_TOL {
                        break;
                    }
                    k += 1;
                }
                sum
            }
        }
    }

    /// Plain Mercer kernel K(z₁,z₂) = Σ_ℓ μ_ℓ φ_ℓ(z₁)φ_ℓ(z₂), truncated at
    /// the configured basis length (unpenalized modes are not part of K).
    pub fn kernel_k(&self, z1: f64, z2: f64) -> f64 {
        (0..self.penalized_len()).map(|i| self.mu(i) * self.phi(i, z1) * self.phi(i, z2)).sum()
    }

    /// Modified kernel K̃(z₁,z₂) = Σ_ℓ φ_ℓ(z₁)φ_ℓ(z₂)/(1+λ/μ_ℓ) induced by
    /// the penalized inner product, full spectrum with certified tail.
    pub fn ktilde(&self, z1: f64, z2: f64, lambda: f64) -> f64 {
        let cb = self.c_phi() * self.c_phi();
        match self.family {
            KernelFamily::FiniteRank { rank } => {
                let mut sum = 0.0;
                for i in 0..rank {
                    sum += self.phi(i, z1) * self.phi(i, z2);
                }
                sum / (1.0 + lambda)
            }
            KernelFamily::GaussianExp => {
                let mut sum = 0.0;
                let mut i = 0usize;
                loop {
                    let mu = self.mu(i);
                    sum += hermite_phi(i + 1, z1) * hermite_phi(i + 1, z2) / (1.0 + lambda / mu);
                    let tail = cb * mu * GAUSSIAN_ETA * GAUSSIAN_ETA
                        / (lambda * (1.0 - GAUSSIAN_ETA * GAUSSIAN_ETA));
                    if tail < TAIL_TOL {
                        break;
                    }
                    i += 1;
                }
                sum
            }
            KernelFamily::SobolevPeriodic { nu } => {
                let p2 = 2 * nu as i32;
                let t1 = self.to_unit(z1);
                let t2 = self.to_unit(z2);
                let mut sum = 1.0; // constant mode, weight 1
                let mut k = 1usize;
                loop {
                    let kk = k as f64;
                    let mu = (2.0 * PI * kk).powi(-p2);
                    let w = 1.0 / (1.0 + lambda / mu);
                    let (s1, c1) = (2.0 * PI * kk * t1).sin_cos();
                    let (s2, c2) = (2.0 * PI * kk * t2).sin_cos();
                    sum += 2.0 * (s1 * s2 + c1 * c2) * w;
                    let tail = 2.0 * cb * (kk).powi(1 - p2)
                        / (lambda * (2.0 * PI).powi(p2) * (p2 as f64 - 1.0));
                    if tail < TAIL_TOL {
                        break;
                    }
                    k += 1;
                }
                sum
            }
        }
    }

    /// Pointwise second spectral sum S₂(z₀, λ) = Σ_ℓ φ_ℓ(z₀)² (1+λ/μ_ℓ)^{-2}
    /// (unpenalized modes contribute φ² with weight 1), full spectrum.
    pub fn s2_pointwise(&self, z0: f64, lambda: f64) -> f64 {
        let cb = self.c_phi() * self.c_phi();
        match self.family {
            KernelFamily::FiniteRank { rank } => {
                let w = 1.0 / (1.0 + lambda);
                let mut sum = 0.0;
                for i in 0..rank {
                    let p = self.phi(i, z0);
                    sum += p * p;
                }
                sum * w * w
            }
            KernelFamily::GaussianExp => {
                let mut sum = 0.0;
                let mut i = 0usize;
                loop {
                    let mu = self.mu(i);
                    let w = 1.0 / (1.0 + lambda / mu);
                    let p = hermite_phi(i + 1, z0);
                    sum += p * p * w * w;
                    // (1+λ/μ)^{-2} ≤ (μ/λ)², geometric with ratio η⁴.
                    let r4 = GAUSSIAN_ETA.powi(4);
                    let tail = cb * (mu / lambda) * (mu / lambda) * r4 / (1.0 - r4);
                    if tail < TAIL_TOL {
                        break;
                    }
                    i += 1;
                }
                sum
            }
            KernelFamily::SobolevPeriodic { nu } => {
                let p2 = 2 * nu as i32;
                let mut sum = 1.0; // constant mode
                let mut k = 1usize;
                loop {
                    let kk = k as f64;
                    let mu = (2.0 * PI * kk).powi(-p2);
                    let w = 1.0 / (1.0 + lambda / mu);
                    // sin² + cos² pairs sum to 2 regardless of z₀.
                    sum += 2.0 * w * w;
                    let tail = 2.0 * cb / (lambda * lambda)
                        * (kk).powi(1 - 2 * p2)
                        * (2.0 * PI).powi(-2 * p2)
                        / (2.0 * p2 as f64 - 1.0);
                    if tail < TAIL_TOL {
                        break;
                    }
                    k += 1;
                }
                sum
            }
        }
    }

    /// Uniform midpoint evaluation grid of `n` points on z ∈ [-1, 1].
    pub fn eval_grid(n: usize) -> Vec<f64> {
        (0..n).map(|i| -1.0 + 2.0 * (i as f64 + 0.5) / n as f64).collect()
    }
}

/// Scaled Hermite eigenfunction of 1-based index ℓ for the Gaussian family,
/// φ_ℓ(x) = (√5/4)^{1/4} √2 e^{-(√5-1)x²/4} h̃_{ℓ-1}(x √(√5/2)), where h̃_k
/// is the orthonormal Hermite polynomial H_k/√(2^k k!) evaluated through the
/// stable normalized recurrence.
fn hermite_phi(ell: usize, x: f64) -> f64 {
    debug_assert!(ell >= 1);
    let sqrt5 = 5.0_f64.sqrt();
    let y = x * (sqrt5 / 2.0).sqrt();
    let k = ell - 1;
    let mut hm = 0.0; // h̃_{-1}
    let mut h = 1.0; // h̃_0
    for j in 0..k {
        let jf = j as f64;
        let next = y * (2.0 / (jf + 1.0)).sqrt() * h - (jf / (jf + 1.0)).sqrt() * hm;
        hm = h;
        h = next;
    }
    (sqrt5 / 4.0).powf(0.25)
        * std::f64::consts::SQRT_2
        * (-(sqrt5 - 1.0) * x * x / 4.0).exp()
        * h
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn sobolev() -> EigenSystem {
        EigenSystem::with_default_truncation(KernelFamily::SobolevPeriodic { nu: 2 }).unwrap()
    }

    #[test]
    fn sobolev_eigenvalues_pair_up() {
        let es = sobolev();
        assert_relative_eq!(es.mu(0), (2.0 * PI).powi(-4), max_relative = 1e-15);
        assert_eq!(es.mu(0), es.mu(1));
        assert_eq!(es.mu(2), es.mu(3));
        assert!(es.mu(2) < es.mu(0));
        assert_eq!(es.null_len(), 1);
        assert_eq!(es.penalized_len(), 410);
    }

    #[test]
    fn sobolev_basis_is_orthonormal_under_quadrature() {
        // Trapezoid-free check: the trig basis is exactly orthonormal under
        // the uniform measure; a midpoint rule with many nodes gets close.
        let es = EigenSystem::new(KernelFamily::SobolevPeriodic { nu: 2 }, 8).unwrap();
        let m = 20_000;
        let grid = EigenSystem::eval_grid(m);
        for a in 0..8 {
            for b in a..8 {
                let mut acc = 0.0;
                for &z in &grid {
                    acc += es.phi(a, z) * es.phi(b, z);
                }
                acc /= m as f64;
                let want = if a == b { 1.0 } else { 0.0 };
                assert!((acc - want).abs() < 1e-6, "modes {a},{b}: {acc}");
            }
        }
        // Constant mode against the others, and against itself.
        for a in 0..8 {
            let mut acc = 0.0;
            for &z in &grid {
                acc += es.phi(a, z) * es.phi_null(0, z);
            }
            acc /= m as f64;
            assert!(acc.abs() < 1e-6);
        }
    }

    #[test]
    fn finite_rank_closed_forms() {
        let es = EigenSystem::new(KernelFamily::FiniteRank { rank: 5 }, 5).unwrap();
        assert_relative_eq!(es.d_lambda(0.25), 4.0, max_relative = 1e-15);
        // K̃(z,z) at z=1: all monomials are 1.
        assert_relative_eq!(es.ktilde(1.0, 1.0, 0.25), 4.0, max_relative = 1e-15);
        assert_eq!(es.null_len(), 0);
    }

    #[test]
    fn gaussian_eigenvalues_decay_geometrically() {
        let es = EigenSystem::with_default_truncation(KernelFamily::GaussianExp).unwrap();
        assert_relative_eq!(es.mu(0), GAUSSIAN_ETA.powi(3), max_relative = 1e-15);
        assert_relative_eq!(es.mu(1) / es.mu(0), GAUSSIAN_ETA * GAUSSIAN_ETA, max_relative = 1e-15);
    }

    #[test]
    fn hermite_recurrence_matches_explicit_low_orders() {
        // h̃_0 = 1, h̃_1(y) = √2 y, h̃_2(y) = (2y²-1)/√2 in the normalized
        // convention H_k/√(2^k k!) with physicist H.
        let x = 0.73;
        let sqrt5 = 5.0_f64.sqrt();
        let y = x * (sqrt5 / 2.0).sqrt();
        let pref =
            (sqrt5 / 4.0).powf(0.25) * std::f64::consts::SQRT_2 * (-(sqrt5 - 1.0) * x * x / 4.0).exp();
        assert_relative_eq!(hermite_phi(1, x), pref, max_relative = 1e-14);
        assert_relative_eq!(hermite_phi(2, x), pref * std::f64::consts::SQRT_2 * y, max_relative = 1e-14);
        assert_relative_eq!(
            hermite_phi(3, x),
            pref * (2.0 * y * y - 1.0) / std::f64::consts::SQRT_2,
            max_relative = 1e-13
        );
    }

    #[test]
    fn weighted_features_match_pointwise_definition() {
        let es = sobolev();
        let z = [-0.9, -0.1, 0.4, 0.97];
        let f = es.weighted_features(&z);
        for (r, &zi) in z.iter().enumerate() {
            for i in [0usize, 1, 7, 100, 409] {
                assert_relative_eq!(f[(r, i)], es.phi(i, zi) * es.mu(i).sqrt(), max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn sobolev_ktilde_on_diagonal_equals_d_lambda() {
        // sin²+cos² pairing makes K̃(z,z) constant in z and equal to d(λ).
        let es = sobolev();
        for lambda in [1e-6, 1e-4, 1e-2] {
            let d = es.d_lambda(lambda);
            for z in [-0.7, 0.0, 0.31] {
                assert_relative_eq!(es.ktilde(z, z, lambda), d, max_relative = 1e-9);
            }
        }
    }

    #[test]
    fn domain_map_controls_basis_phase() {
        // On the identity range [0,1] the first cosine mode at z=0 is √2 and
        // the first sine mode is 0; the default [-1,1] range shifts both.
        let es = EigenSystem::new(KernelFamily::SobolevPeriodic { nu: 2 }, 8)
            .unwrap()
            .with_z_range(0.0, 1.0)
            .unwrap();
        assert_relative_eq!(es.phi(1, 0.0), std::f64::consts::SQRT_2, max_relative = 1e-15);
        assert!(es.phi(0, 0.0).abs() < 1e-15);
        let default = EigenSystem::new(KernelFamily::SobolevPeriodic { nu: 2 }, 8).unwrap();
        assert_relative_eq!(default.phi(1, 0.0), -std::f64::consts::SQRT_2, max_relative = 1e-12);
    }

    #[test]
    fn truncation_is_validated() {
        assert!(EigenSystem::new(KernelFamily::FiniteRank { rank: 0 }, 0).is_err());
        assert!(EigenSystem::new(KernelFamily::SobolevPeriodic { nu: 0 }, 10).is_err());
        let es = EigenSystem::new(KernelFamily::SobolevPeriodic { nu: 2 }, 11).unwrap();
        assert_eq!(es.penalized_len(), 10);
    }
}
