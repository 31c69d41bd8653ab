//! Penalized profile solver and aggregation.
//!
//! Each group solves the penalized least-squares problem
//!
//! min over (b, c) of  (1/n) ‖y − X̃b − Ψc‖² + λ ‖c‖²
//!
//! where Ψ holds the penalized eigenfunctions with √μ folded in (so the RKHS
//! penalty is the plain squared coefficient norm) and X̃ = [X | unpenalized
//! basis]. The solver profiles out b exactly and works on whichever side of
//! the kernel matrix is smaller: the n × n Gram ΨΨᵀ when n ≤ L, or the L × L
//! companion ΨᵀΨ when n > L, so the dense dimension is always min(n, L).
//!
//! First-order conditions characterize the solution: with residual
//! r = y − X̃b − Ψc, optimality is X̃ᵀr = 0 and Ψᵀr = nλ c. The implementation
//! maintains the equivalent dual vector α = r/(nλ), for which c = Ψᵀα.
//!
//! Aggregation across s groups averages the fitted nonparametric components
//! coefficient-wise into f̄ and refits each group's linear coefficient by
//! ordinary least squares against y − f̄(z), which removes the smoothing bias
//! of the per-group linear estimates when the groups share f.

use crate::data::PLDataset;
use crate::error::{Error, Result};
use crate::kernel::EigenSystem;
use nalgebra::{Cholesky, DMatrix, DVector};

/// Relative jitter levels tried when a Gram factorization fails.
const JITTER_LEVELS: [f64; 2] = [1e-12, 1e-8];

/// How per-group nonparametric fits are combined into f̄.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Weighting {
    /// Plain average (1/s) Σ f̂⁽ʲ⁾.
    Equal,
    /// Size-proportional average Σ (n_j/N) f̂⁽ʲ⁾ for unbalanced groups.
    BySize,
}

/// Which linear-coefficient estimate to read from an [`AggregateModel`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BetaEstimator {
    /// The per-group penalized estimate β̂⁽ʲ⁾.
    Raw,
    /// The refitted estimate β̌⁽ʲ⁾ (ordinary least squares against y − f̄).
    Boosted,
}

/// Cholesky with escalating diagonal jitter relative to the mean diagonal.
fn cholesky_jitter(a: DMatrix<f64>, n: usize, lambda: f64) -> Result<Cholesky<f64, nalgebra::Dyn>> {
    let dim = a.nrows();
    let scale = a.diagonal().mean().abs().max(f64::MIN_POSITIVE);
    if let Some(ch) = Cholesky::new(a.clone()) {
        return Ok(ch);
    }
    for level in JITTER_LEVELS {
        let mut aj = a.clone();
        for i in 0..dim {
            aj[(i, i)] += level * scale;
        }
        if let Some(ch) = Cholesky::new(aj) {
            return Ok(ch);
        }
    }
    Err(Error::Singular { n, lambda })
}

/// One group's fitted model.
#[derive(Clone, Debug)]
pub struct GroupFit {
    es: EigenSystem,
    /// Group sample size.
    pub n: usize,
    /// Linear covariate dimension (0 for a pure function fit).
    pub p: usize,
    pub lambda: f64,
    /// Linear coefficients, length p.
    pub beta: DVector<f64>,
    /// Coefficients of the unpenalized basis functions.
    pub null_coefs: DVector<f64>,
    /// Penalized coefficients in the √μ-weighted basis.
    pub f_coefs: DVector<f64>,
    /// Residual variance estimate; `None` when the residual degrees of
    /// freedom n − tr(H) fall below 1.
    pub sigma2: Option<f64>,
    /// Trace of the full hat operator (effective model dimension).
    pub trace_h: f64,
    /// Residual sum of squares.
    pub rss: f64,
    /// Inverse of the profile Gram M = X̃ᵀ(I−S)X̃, dimension (p+U)².
    m_inv: DMatrix<f64>,
    /// Sample second moment XᵀX/n of the linear covariates, p × p.
    pub sigma_hat: DMatrix<f64>,
}

impl GroupFit {
    /// Fitted nonparametric component at `z` (penalized plus unpenalized).
    pub fn eval_f(&self, z: f64) -> f64 {
        let mut v = self.es.eval_weighted(self.f_coefs.as_slice(), z);
        for u in 0..self.null_coefs.len() {
            v += self.null_coefs[u] * self.es.phi_null(u, z);
        }
        v
    }

    /// Covariance of √n (β̂ − β) per unit noise variance, the p × p block of
    /// n M⁻¹. Multiplying by σ² gives the asymptotic covariance of √n β̂.
    pub fn beta_cov_unit(&self) -> DMatrix<f64> {
        self.m_inv.view((0, 0), (self.p, self.p)) * self.n as f64
    }

    pub fn eigensystem(&self) -> &EigenSystem {
        &self.es
    }
}

/// Fits one group; `x` is the optional n × q linear-plus-unpenalized design
/// (pass `None` for a pure penalized-function fit).
fn fit_partial(
    x: Option<DMatrix<f64>>,
    z: &[f64],
    y: &[f64],
    es: &EigenSystem,
    lambda: f64,
    p: usize,
) -> Result<GroupFit> {
    let n = z.len();
    if n == 0 || y.len() != n {
        return Err(Error::InvalidData("empty group or mismatched response length".into()));
    }
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(Error::InvalidConfig(format!("lambda must be positive, got {lambda}")));
    }
    let l = es.penalized_len();
    let nl = n as f64 * lambda;

    let psi = es.weighted_features(z);
    let yv = DVector::from_column_slice(y);
    let q = x.as_ref().map_or(0, |m| m.ncols());

    // V = (I − S) X̃ / (nλ) columns and vy = (I − S) y / (nλ), plus the trace
    // of the penalized-only smoother S, computed on the cheaper side.
    let (v, vy, tr_s) = if n <= l {
        let mut a = &psi * psi.transpose();
        for i in 0..n {
            a[(i, i)] += nl;
        }
        let ch = cholesky_jitter(a, n, lambda)?;
        let tr_s = n as f64 - nl * ch.inverse().trace();
        let v = x.as_ref().map(|m| ch.solve(m));
        let vy = ch.solve(&yv);
        (v, vy, tr_s)
    } else {
        let mut al = psi.transpose() * &psi;
        for i in 0..l {
            al[(i, i)] += nl;
        }
        let ch = cholesky_jitter(al, n, lambda)?;
        let tr_s = l as f64 - nl * ch.inverse().trace();
        let v = x.as_ref().map(|m| (m - &psi * ch.solve(&(psi.transpose() * m))) / nl);
        let vy = (&yv - &psi * ch.solve(&(psi.transpose() * &yv))) / nl;
        (v, vy, tr_s)
    };

    let (btilde, alpha, tr_h, m_inv) = if q > 0 {
        let xm = x.as_ref().unwrap();
        let v = v.as_ref().unwrap();
        let mut m = xm.transpose() * v * nl;
        // M is symmetric up to round-off; symmetrize before factorizing.
        let mt = m.transpose();
        m = (m + mt) * 0.5;
        let chm = cholesky_jitter(m, n, lambda)?;
        let m_inv = chm.inverse();
        let btilde = chm.solve(&(xm.transpose() * &vy * nl));
        let alpha = &vy - v * &btilde;
        let tr_h = tr_s + nl * nl * (&m_inv * (v.transpose() * v)).trace();
        (btilde, alpha, tr_h, m_inv)
    } else {
        (DVector::zeros(0), vy, tr_s, DMatrix::zeros(0, 0))
    };

    let rss = nl * nl * alpha.norm_squared();
    let dof = n as f64 - tr_h;
    let sigma2 = if dof >= 1.0 { Some(rss / dof) } else { None };
    let f_coefs = psi.transpose() * &alpha;

    let sigma_hat = if p > 0 {
        let xm = x.as_ref().unwrap();
        let xp = xm.view((0, 0), (n, p));
        (xp.transpose() * xp) / n as f64
    } else {
        DMatrix::zeros(0, 0)
    };

    Ok(GroupFit {
        es: *es,
        n,
        p,
        lambda,
        beta: btilde.rows(0, p).into_owned(),
        null_coefs: btilde.rows(p, q - p).into_owned(),
        f_coefs,
        sigma2,
        trace_h: tr_h,
        rss,
        m_inv,
        sigma_hat,
    })
}

/// Fits one group with linear covariates `x` (row-major n × p).
pub fn fit_group(
    x: &[f64],
    z: &[f64],
    y: &[f64],
    p: usize,
    es: &EigenSystem,
    lambda: f64,
) -> Result<GroupFit> {
    let n = z.len();
    if p == 0 || x.len() != n * p {
        return Err(Error::InvalidData("covariate block does not match n × p".into()));
    }
    let u = es.null_len();
    let mut xt = DMatrix::zeros(n, p + u);
    for i in 0..n {
        for j in 0..p {
            xt[(i, j)] = x[i * p + j];
        }
        for j in 0..u {
            xt[(i, p + j)] = es.phi_null(j, z[i]);
        }
    }
    fit_partial(Some(xt), z, y, es, lambda, p)
}

/// Pure penalized-function fit (kernel ridge regression of `y` on `z` with
/// the unpenalized basis included unrestricted). Used for pooled reference
/// fits where the linear part is already removed from the response.
pub fn fit_function(z: &[f64], y: &[f64], es: &EigenSystem, lambda: f64) -> Result<GroupFit> {
    let n = z.len();
    let u = es.null_len();
    let xt = if u > 0 {
        let mut m = DMatrix::zeros(n, u);
        for i in 0..n {
            for j in 0..u {
                m[(i, j)] = es.phi_null(j, z[i]);
            }
        }
        Some(m)
    } else {
        None
    };
    fit_partial(xt, z, y, es, lambda, 0)
}

/// Joint model across all groups: per-group fits, the averaged nonparametric
/// component f̄, and the refitted (aggregation-boosted) linear coefficients.
#[derive(Clone, Debug)]
pub struct AggregateModel {
    es: EigenSystem,
    pub lambda: f64,
    pub groups: Vec<GroupFit>,
    /// Coefficients of f̄ in the weighted penalized basis.
    pub fbar_coefs: DVector<f64>,
    /// Coefficients of f̄ on the unpenalized basis.
    pub fbar_null: DVector<f64>,
    /// Boosted linear coefficients β̌⁽ʲ⁾, one per group.
    pub beta_check: Vec<DVector<f64>>,
}

impl AggregateModel {
    pub fn s(&self) -> usize {
        self.groups.len()
    }

    /// Averaged nonparametric component f̄(z) = (1/s) Σⱼ f̂⁽ʲ⁾(z).
    pub fn fbar(&self, z: f64) -> f64 {
        let mut v = self.es.eval_weighted(self.fbar_coefs.as_slice(), z);
        for u in 0..self.fbar_null.len() {
            v += self.fbar_null[u] * self.es.phi_null(u, z);
        }
        v
    }

    /// Average of the per-group linear coefficients (the natural estimator
    /// when all groups share one β).
    pub fn beta_bar(&self) -> DVector<f64> {
        let p = self.groups[0].p;
        let mut acc = DVector::zeros(p);
        for g in &self.groups {
            acc += &g.beta;
        }
        acc / self.s() as f64
    }

    /// Average residual variance over groups with at least one residual
    /// degree of freedom.
    pub fn sigma2_bar(&self) -> Result<f64> {
        let vals: Vec<f64> = self.groups.iter().filter_map(|g| g.sigma2).collect();
        if vals.is_empty() {
            return Err(Error::InvalidData(
                "no group has residual degrees of freedom for a variance estimate".into(),
            ));
        }
        Ok(vals.iter().sum::<f64>() / vals.len() as f64)
    }

    /// Indices of groups whose variance estimate was excluded (dof < 1).
    pub fn sigma2_excluded(&self) -> Vec<usize> {
        self.groups
            .iter()
            .enumerate()
            .filter(|(_, g)| g.sigma2.is_none())
            .map(|(j, _)| j)
            .collect()
    }

    pub fn eigensystem(&self) -> &EigenSystem {
        &self.es
    }

    /// Point prediction x₀ᵀβ⁽ʲ⁾ + f̄(z₀) for group `j` with the chosen
    /// coefficient estimate.
    pub fn predict(&self, j: usize, x0: &[f64], z0: f64, estimator: BetaEstimator) -> f64 {
        let beta = match estimator {
            BetaEstimator::Raw => &self.groups[j].beta,
            BetaEstimator::Boosted => &self.beta_check[j],
        };
        let mut v = self.fbar(z0);
        for (k, &x) in x0.iter().enumerate() {
            v += x * beta[k];
        }
        v
    }
}

/// Fits every group at the common `lambda`, averages the nonparametric
/// components with the requested weighting, and refits each group's linear
/// coefficients against the aggregate by ordinary least squares:
/// β̌⁽ʲ⁾ = (XᵀX)⁻¹ Xᵀ (y − f̄(z)).
pub fn fit_all(
    data: &PLDataset,
    es: &EigenSystem,
    lambda: f64,
    weighting: Weighting,
) -> Result<AggregateModel> {
    let s = data.n_groups();
    let p = data.p();
    let mut groups = Vec::with_capacity(s);
    for j in 0..s {
        let g = data.group(j);
        groups.push(fit_group(g.x, g.z, g.y, p, es, lambda).map_err(|e| e.in_group(j))?);
    }

    let l = es.penalized_len();
    let u = es.null_len();
    let mut fbar_coefs = DVector::zeros(l);
    let mut fbar_null = DVector::zeros(u);
    for (j, g) in groups.iter().enumerate() {
        let w = match weighting {
            Weighting::Equal => 1.0 / s as f64,
            Weighting::BySize => data.n_j(j) as f64 / data.n_total() as f64,
        };
        fbar_coefs.axpy(w, &g.f_coefs, 1.0);
        fbar_null.axpy(w, &g.null_coefs, 1.0);
    }

    let mut beta_check = Vec::with_capacity(s);
    for j in 0..s {
        let g = data.group(j);
        let n = g.n();
        let psi = es.weighted_features(g.z);
        let mut resid = DVector::from_column_slice(g.y);
        resid -= &psi * &fbar_coefs;
        for (i, &zi) in g.z.iter().enumerate() {
            for uu in 0..u {
                resid[i] -= fbar_null[uu] * es.phi_null(uu, zi);
            }
        }
        let xm = g.x_matrix();
        let gram = xm.transpose() * &xm;
        let ch = cholesky_jitter(gram, n, lambda).map_err(|e| e.in_group(j))?;
        beta_check.push(ch.solve(&(xm.transpose() * resid)));
    }

    Ok(AggregateModel { es: *es, lambda, groups, fbar_coefs, fbar_null, beta_check })
}

/// Reference fit with the per-group linear coefficients treated as known:
/// pools all N observations, removes each group's xᵀβ₀⁽ʲ⁾ from its
/// responses, and runs one penalized function fit on the residuals. This is
/// the benchmark the averaged estimator f̄ is compared against.
pub fn fit_reference(
    data: &PLDataset,
    es: &EigenSystem,
    lambda: f64,
    true_betas: &[DVector<f64>],
) -> Result<GroupFit> {
    if true_betas.len() != data.n_groups() {
        return Err(Error::InvalidData(format!(
            "expected {} coefficient vectors, got {}",
            data.n_groups(),
            true_betas.len()
        )));
    }
    let p = data.p();
    let mut resid = Vec::with_capacity(data.n_total());
    for j in 0..data.n_groups() {
        let g = data.group(j);
        if true_betas[j].len() != p {
            return Err(Error::InvalidData(format!("group {j}: coefficient length != p")));
        }
        for i in 0..g.n() {
            let mut r = g.y[i];
            for k in 0..p {
                r -= g.x[i * p + k] * true_betas[j][k];
            }
            resid.push(r);
        }
    }
    fit_function(data.z_all(), &resid, es, lambda)
}
