//! The finite-parameter Gaussian limit experiment.
//!
//! With `r` parameter points and `k` moments one observes `g ~ N(m, Sigma)` in
//! `R^{rk}`, where the block of `m` at the true point is zero. An anchor
//! `A` (`k x rk`) splits `g` into `xi = A g` and the residual `h = g - psi xi`
//! with `psi = Sigma A' (A Sigma A')^{-1}`; `xi` and `h` are independent.

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec;
use crate::linalg::{self, block, sub_vector};
use crate::moments::Ridge;
use crate::optim::NelderMeadConfig;
use crate::quasi_bayes::{decision_rule_weighted, LossSpec};
use crate::rng;
use crate::robust::{robust_test, GridProcess};

/// Serializable description of an experiment (matrices row-major).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub r: usize,
    pub k: usize,
    pub labels: Vec<f64>,
    pub m: Vec<f64>,
    pub sigma: Vec<f64>,
    /// `k x rk`; defaults to point evaluation at the first point.
    #[serde(default)]
    pub anchor: Option<Vec<f64>>,
    #[serde(default)]
    pub lambda: Option<f64>,
    /// Prior weights over the points; defaults to uniform.
    #[serde(default)]
    pub weights: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FiniteExperiment {
    pub r: usize,
    pub k: usize,
    pub labels: Vec<f64>,
    pub m: DVector<f64>,
    pub sigma: DMatrix<f64>,
    pub anchor: DMatrix<f64>,
    pub lambda: f64,
    pub weights: Vec<f64>,
    chol: DMatrix<f64>,
}

/// `A` selecting block `j`.
pub fn point_evaluation(r: usize, k: usize, j: usize) -> DMatrix<f64> {
    let mut a = DMatrix::zeros(k, r * k);
    for i in 0..k {
        a[(i, j * k + i)] = 1.0;
    }
    a
}

impl FiniteExperiment {
    pub fn new(labels: Vec<f64>, k: usize, m: DVector<f64>, sigma: DMatrix<f64>, anchor: DMatrix<f64>) -> Result<Self> {
        let r = labels.len();
        let rk = r * k;
        if r == 0 || k == 0 {
            return Err(Error::InvalidInput("experiment needs r >= 1 and k >= 1".into()));
        }
        if m.len() != rk {
            return Err(Error::DimensionMismatch {
                what: "mean vector",
                expected: rk,
                got: m.len(),
            });
        }
        if sigma.nrows() != rk || sigma.ncols() != rk {
            return Err(Error::DimensionMismatch {
                what: "covariance",
                expected: rk,
                got: sigma.nrows(),
            });
        }
        if anchor.nrows() != k || anchor.ncols() != rk {
            return Err(Error::DimensionMismatch {
                what: "anchor",
                expected: k * rk,
                got: anchor.nrows() * anchor.ncols(),
            });
        }
        if linalg::max_abs(&(&sigma - sigma.transpose())) > 1e-10 * linalg::max_abs(&sigma).max(1.0) {
            return Err(Error::InvalidInput("covariance is not symmetric".into()));
        }
        let sigma = linalg::symmetrize(&sigma);
        let chol = sigma
            .clone()
            .cholesky()
            .ok_or_else(|| Error::InvalidInput("covariance is not positive definite".into()))?
            .l();
        let exp = Self {
            r,
            k,
            labels,
            m,
            sigma,
            anchor,
            lambda: 1.0,
            weights: vec![1.0 / r as f64; r],
            chol,
        };
        exp.true_index()
            .ok_or_else(|| Error::InvalidInput("no block of the mean vector is zero".into()))?;
        validate_anchor(&exp.sigma, &exp.anchor, k)?;
        Ok(exp)
    }

    pub fn from_spec(spec: &ExperimentSpec) -> Result<Self> {
        let rk = spec.r * spec.k;
        if spec.labels.len() != spec.r {
            return Err(Error::DimensionMismatch {
                what: "labels",
                expected: spec.r,
                got: spec.labels.len(),
            });
        }
        if spec.sigma.len() != rk * rk {
            return Err(Error::DimensionMismatch {
                what: "covariance entries",
                expected: rk * rk,
                got: spec.sigma.len(),
            });
        }
        let anchor = match &spec.anchor {
            Some(a) if a.len() != spec.k * rk => {
                return Err(Error::DimensionMismatch {
                    what: "anchor entries",
                    expected: spec.k * rk,
                    got: a.len(),
                })
            }
            Some(a) => DMatrix::from_row_slice(spec.k, rk, a),
            None => point_evaluation(spec.r, spec.k, 0),
        };
        let mut exp = Self::new(
            spec.labels.clone(),
            spec.k,
            DVector::from_column_slice(&spec.m),
            DMatrix::from_row_slice(rk, rk, &spec.sigma),
            anchor,
        )?;
        if let Some(l) = spec.lambda {
            exp = exp.with_lambda(l)?;
        }
        if let Some(w) = &spec.weights {
            exp = exp.with_weights(w.clone())?;
        }
        Ok(exp)
    }

    pub fn to_spec(&self) -> ExperimentSpec {
        let rk = self.r * self.k;
        ExperimentSpec {
            r: self.r,
            k: self.k,
            labels: self.labels.clone(),
            m: self.m.iter().cloned().collect(),
            sigma: (0..rk * rk).map(|i| self.sigma[(i / rk, i % rk)]).collect(),
            anchor: Some((0..self.k * rk).map(|i| self.anchor[(i / rk, i % rk)]).collect()),
            lambda: Some(self.lambda),
            weights: Some(self.weights.clone()),
        }
    }

    pub fn with_lambda(mut self, lambda: f64) -> Result<Self> {
        if !(lambda >= 0.0) {
            return Err(Error::InvalidInput(format!("lambda {lambda} must be nonnegative")));
        }
        self.lambda = lambda;
        Ok(self)
    }

    pub fn with_weights(mut self, w: Vec<f64>) -> Result<Self> {
        if w.len() != self.r {
            return Err(Error::DimensionMismatch {
                what: "prior weights",
                expected: self.r,
                got: w.len(),
            });
        }
        if w.iter().any(|v| !(*v >= 0.0)) || !(w.iter().sum::<f64>() > 0.0) {
            return Err(Error::InvalidInput("prior weights must be nonnegative with positive sum".into()));
        }
        self.weights = w;
        Ok(self)
    }

    /// Same experiment with another mean vector.
    pub fn with_mean(&self, m: DVector<f64>) -> Result<Self> {
        let mut e = Self::new(self.labels.clone(), self.k, m, self.sigma.clone(), self.anchor.clone())?;
        e.lambda = self.lambda;
        e.weights = self.weights.clone();
        Ok(e)
    }

    /// First point whose mean block is exactly zero.
    pub fn true_index(&self) -> Option<usize> {
        (0..self.r).find(|&j| (0..self.k).all(|i| self.m[j * self.k + i] == 0.0))
    }

    pub fn reparam(&self) -> Result<Reparam> {
        reparameterize(&self.sigma, &self.anchor, self.k)
    }
}

/// `g = m + L z` with `L` the Cholesky factor of `Sigma`.
pub fn simulate_draw(exp: &FiniteExperiment, seed: u64) -> DVector<f64> {
    let mut r = rng::stream(seed, &[]);
    let z = DVector::from_fn(exp.m.len(), |_, _| StandardNormal.sample(&mut r));
    &exp.m + &exp.chol * z
}

/// Objects of the `(xi, h)` reparameterization.
#[derive(Debug, Clone)]
pub struct Reparam {
    pub k: usize,
    pub psi: DMatrix<f64>,
    pub sigma_xi: DMatrix<f64>,
    pub sigma_tilde: DMatrix<f64>,
    pub anchor: DMatrix<f64>,
}

fn check_anchor_shape(sigma: &DMatrix<f64>, anchor: &DMatrix<f64>, k: usize) -> Result<()> {
    let rk = sigma.nrows();
    if k == 0 || !rk.is_multiple_of(k) || anchor.ncols() != rk || anchor.nrows() != k {
        return Err(Error::DimensionMismatch {
            what: "anchor",
            expected: k * rk,
            got: anchor.nrows() * anchor.ncols(),
        });
    }
    Ok(())
}

/// Every `k x k` block of `A Sigma` must be invertible.
pub fn validate_anchor(sigma: &DMatrix<f64>, anchor: &DMatrix<f64>, k: usize) -> Result<()> {
    check_anchor_shape(sigma, anchor, k)?;
    let a_sigma = anchor * sigma;
    let scale = linalg::max_abs_eigen(sigma).max(f64::MIN_POSITIVE);
    for j in 0..sigma.nrows() / k {
        let sv = block(&a_sigma, 0, j, k, k).singular_values();
        let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
        if min <= linalg::RANK_TOL * scale {
            return Err(Error::InvalidInput(format!(
                "anchor invalid: block {j} of A*Sigma is singular"
            )));
        }
    }
    Ok(())
}

/// `psi = Sigma A'(A Sigma A')^{-1}`, `Sigma_xi = A Sigma A'`, `Sigma~ = Sigma - psi Sigma_xi psi'`.
///
/// Only `A Sigma A'` must be invertible here; [`validate_anchor`] checks the
/// stronger block condition that the likelihood computations rely on.
pub fn reparameterize(sigma: &DMatrix<f64>, anchor: &DMatrix<f64>, k: usize) -> Result<Reparam> {
    check_anchor_shape(sigma, anchor, k)?;
    let a_sigma = anchor * sigma;
    let sigma_xi = linalg::symmetrize(&(&a_sigma * anchor.transpose()));
    let inv = linalg::spd_inverse(&sigma_xi, "A Sigma A'")?;
    let psi = a_sigma.transpose() * inv;
    let sigma_tilde = linalg::symmetrize(&(sigma - &psi * &sigma_xi * psi.transpose()));
    Ok(Reparam {
        k,
        psi,
        sigma_xi,
        sigma_tilde,
        anchor: anchor.clone(),
    })
}

impl Reparam {
    pub fn r(&self) -> usize {
        self.psi.nrows() / self.k
    }

    /// `(xi, h)` with `xi = A g` and `h = g - psi xi`.
    pub fn decompose(&self, g: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let xi = &self.anchor * g;
        let h = g - &self.psi * &xi;
        (xi, h)
    }

    /// `mu = (I - psi A) m`.
    pub fn mu(&self, m: &DVector<f64>) -> DVector<f64> {
        m - &self.psi * (&self.anchor * m)
    }

    pub fn psi_block(&self, j: usize) -> DMatrix<f64> {
        block(&self.psi, j, 0, self.k, self.k)
    }

    fn psi_inv(&self, j: usize) -> Result<DMatrix<f64>> {
        linalg::inverse(&self.psi_block(j), "psi block")
    }
}

fn gaussian_log_kernel(u: &DVector<f64>, cov: &DMatrix<f64>) -> Result<f64> {
    let chol = cov
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Singular("likelihood covariance is not positive definite".into()))?;
    let log_det: f64 = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    let sol = chol.solve(u);
    Ok(-0.5 * log_det - 0.5 * u.dot(&sol))
}

/// `log l(theta_j; g, Sigma, lambda)` for the proportional prior `mu ~ N(0, lambda Sigma~)`,
/// without the `(2 pi)^{-k/2}` constant. `lambda = inf` gives the quasi-likelihood limit.
pub fn log_integrated_likelihood(
    rp: &Reparam,
    sigma: &DMatrix<f64>,
    g: &DVector<f64>,
    j: usize,
    lambda: f64,
) -> Result<f64> {
    if !(lambda >= 0.0) {
        return Err(Error::InvalidInput(format!("lambda {lambda} must be nonnegative")));
    }
    if lambda == f64::INFINITY {
        return log_quasi_likelihood(rp, sigma, g, j);
    }
    let k = rp.k;
    let pinv = rp.psi_inv(j)?;
    let (xi, _) = rp.decompose(g);
    let gj = sub_vector(g, j, k);
    let s = lambda / (1.0 + lambda);
    let t = 1.0 / (1.0 + lambda);
    let u = &pinv * gj * s + &xi * t;
    let big_lambda = &pinv * block(sigma, j, j, k, k) * pinv.transpose() * s + &rp.sigma_xi * t;
    gaussian_log_kernel(&u, &linalg::symmetrize(&big_lambda))
}

pub fn integrated_likelihood(rp: &Reparam, sigma: &DMatrix<f64>, g: &DVector<f64>, j: usize, lambda: f64) -> Result<f64> {
    Ok(log_integrated_likelihood(rp, sigma, g, j, lambda)?.exp())
}

/// The limit `|det psi_j| |Sigma_jj|^{-1/2} exp(-g_j' Sigma_jj^{-1} g_j / 2)`.
pub fn log_quasi_likelihood(rp: &Reparam, sigma: &DMatrix<f64>, g: &DVector<f64>, j: usize) -> Result<f64> {
    let k = rp.k;
    let det_psi = rp.psi_block(j).determinant().abs();
    if det_psi == 0.0 {
        return Err(Error::Singular("psi block".into()));
    }
    let gj = sub_vector(g, j, k);
    Ok(det_psi.ln() + gaussian_log_kernel(&gj, &block(sigma, j, j, k, k))?)
}

/// Likelihoods over all points, normalized to sum to one.
pub fn normalized_likelihoods(rp: &Reparam, sigma: &DMatrix<f64>, g: &DVector<f64>, lambda: f64) -> Result<Vec<f64>> {
    let logs = (0..rp.r())
        .map(|j| log_integrated_likelihood(rp, sigma, g, j, lambda))
        .collect::<Result<Vec<_>>>()?;
    Ok(normalize_logs(&logs))
}

fn normalize_logs(logs: &[f64]) -> Vec<f64> {
    let lse = linalg::log_sum_exp(logs.iter().cloned());
    logs.iter().map(|l| (l - lse).exp()).collect()
}

/// `log l*(theta_j)` for a general prior `mu ~ N(0, Omega)`: the density of
/// `xi` given `h` at point `j`, including the `(2 pi)^{-k/2}` constant.
pub fn log_likelihood_general(rp: &Reparam, omega: &DMatrix<f64>, g: &DVector<f64>, j: usize) -> Result<f64> {
    let k = rp.k;
    let (xi, h) = rp.decompose(g);
    let p = linalg::pinv_sym(&(omega + &rp.sigma_tilde));
    let post_mean = omega * &p * &h;
    let post_cov = omega - omega * &p * omega;
    let pinv = rp.psi_inv(j)?;
    let mean = -(&pinv * sub_vector(&post_mean, j, k));
    let cov = &rp.sigma_xi + &pinv * block(&post_cov, j, j, k, k) * pinv.transpose();
    let u = xi - mean;
    Ok(gaussian_log_kernel(&u, &linalg::symmetrize(&cov))? - 0.5 * k as f64 * (2.0 * std::f64::consts::PI).ln())
}

/// Whether `Omega_ii^{-1} Omega_ij = Sigma~_ii^{-1} Sigma~_ij` for every full-rank block row `i`.
pub fn invariance_holds(omega: &DMatrix<f64>, sigma_tilde: &DMatrix<f64>, k: usize, tol: f64) -> bool {
    let rk = sigma_tilde.nrows();
    let r = rk / k;
    let s_scale = linalg::max_abs_eigen(sigma_tilde);
    let o_scale = linalg::max_abs_eigen(omega);
    for i in 0..r {
        let s_ii = block(sigma_tilde, i, i, k, k);
        let o_ii = block(omega, i, i, k, k);
        if linalg::rank_with_scale(&s_ii, s_scale) < k || linalg::rank_with_scale(&o_ii, o_scale) < k {
            continue;
        }
        let (Ok(s_inv), Ok(o_inv)) = (linalg::inverse(&s_ii, "block"), linalg::inverse(&o_ii, "block")) else {
            continue;
        };
        for j in 0..r {
            let a = &o_inv * block(omega, i, j, k, k);
            let b = &s_inv * block(sigma_tilde, i, j, k, k);
            if linalg::max_abs(&(a - b)) > tol {
                return false;
            }
        }
    }
    true
}

/// Points whose `psi` block and `Sigma~` diagonal block are both full rank.
fn valid_points(rp: &Reparam) -> Vec<usize> {
    let k = rp.k;
    let scale = linalg::max_abs_eigen(&rp.sigma_tilde);
    (0..rp.r())
        .filter(|&j| {
            let s = block(&rp.sigma_tilde, j, j, k, k);
            linalg::rank_with_scale(&s, scale) == k && rp.psi_block(j).determinant().abs() > 1e-12
        })
        .collect()
}

/// Checks that `l*(theta*)` only depends on `(xi, h(theta*))`: data pairs that
/// share both but differ in `h` elsewhere must give the same likelihood
/// (relative difference below 1e-8). `theta_star = None` checks every valid point.
pub fn likelihood_locality_check(
    exp: &FiniteExperiment,
    omega: &DMatrix<f64>,
    theta_star: Option<usize>,
    trials: usize,
    seed: u64,
) -> Result<bool> {
    let rp = exp.reparam()?;
    let k = exp.k;
    let basis = linalg::range_basis(&rp.sigma_tilde);
    let points = match theta_star {
        Some(j) => vec![j],
        None => valid_points(&rp),
    };
    for t in 0..trials {
        let g1 = simulate_draw(exp, rng::child_seed(seed, &[t as u64, 0]));
        let mut r = rng::stream(seed, &[t as u64, 1]);
        for &j in &points {
            // directions in span(Sigma~) whose block j vanishes
            let rows = block(&basis, j, 0, k, basis.ncols());
            let free = linalg::null_basis(&rows);
            if free.ncols() == 0 {
                continue;
            }
            let c = DVector::from_fn(free.ncols(), |_, _| StandardNormal.sample(&mut r));
            let d = &basis * (&free * c);
            let g2 = &g1 + d;
            let l1 = log_likelihood_general(&rp, omega, &g1, j)?;
            let l2 = log_likelihood_general(&rp, omega, &g2, j)?;
            if (l1 - l2).abs() >= 1e-8 {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// A test case: the experiment mean and the hypothesized point.
#[derive(Debug, Clone)]
pub struct SimCase {
    pub label: String,
    pub m: DVector<f64>,
    pub null: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateRow {
    pub label: String,
    pub null: usize,
    pub is_null: bool,
    pub rejections: usize,
    pub reps: usize,
    pub rate: f64,
}

/// Rejection rates of the conditional test inside the Gaussian experiment.
/// Replication `i` of case `c` uses the streams `(seed, c, i, ..)`.
#[allow(clippy::too_many_arguments)]
pub fn similarity_power_sim(
    sigma: &DMatrix<f64>,
    k: usize,
    cases: &[SimCase],
    weights: &[f64],
    alpha: f64,
    reps: usize,
    cond_draws: usize,
    seed: u64,
) -> Result<Vec<RateRow>> {
    let chol = sigma
        .clone()
        .cholesky()
        .ok_or_else(|| Error::InvalidInput("covariance is not positive definite".into()))?
        .l();
    let mut out = Vec::with_capacity(cases.len());
    for (ci, case) in cases.iter().enumerate() {
        let rejects = exec::try_map_indexed(reps, |i| -> Result<bool> {
            let mut r = rng::stream(seed, &[ci as u64, i as u64, 0]);
            let z = DVector::from_fn(case.m.len(), |_, _| StandardNormal.sample(&mut r));
            let g = &case.m + &chol * z;
            let gp = GridProcess::from_gaussian(&g, sigma, k, case.null)?;
            let o = robust_test(
                &gp,
                weights,
                alpha,
                cond_draws,
                Ridge::default(),
                rng::child_seed(seed, &[ci as u64, i as u64, 1]),
            )?;
            Ok(o.reject)
        })?;
        let n_rej = rejects.iter().filter(|r| **r).count();
        let is_null = (0..k).all(|i| case.m[case.null * k + i] == 0.0);
        out.push(RateRow {
            label: case.label.clone(),
            null: case.null,
            is_null,
            rejections: n_rej,
            reps,
            rate: n_rej as f64 / reps as f64,
        });
    }
    Ok(out)
}

/// Rejection rates of testing every point of the experiment at its own mean.
pub fn rejection_table(exp: &FiniteExperiment, alpha: f64, reps: usize, cond_draws: usize, seed: u64) -> Result<Vec<RateRow>> {
    let cases: Vec<SimCase> = (0..exp.r)
        .map(|j| SimCase {
            label: format!("{}", exp.labels[j]),
            m: exp.m.clone(),
            null: j,
        })
        .collect();
    similarity_power_sim(&exp.sigma, exp.k, &cases, &exp.weights, alpha, reps, cond_draws, seed)
}

/// Bayes actions under the proportional-prior likelihood for each `lambda`,
/// the quasi-Bayes action under the limit likelihood, and their gaps.
#[derive(Debug, Clone, PartialEq)]
pub struct LimitOfBayes {
    pub lambdas: Vec<f64>,
    pub actions: Vec<Vec<f64>>,
    pub limit_action: Vec<f64>,
    pub gaps: Vec<f64>,
}

pub fn limit_of_bayes(
    exp: &FiniteExperiment,
    g: &DVector<f64>,
    loss: &LossSpec,
    lambdas: &[f64],
    cfg: &NelderMeadConfig,
) -> Result<LimitOfBayes> {
    if lambdas.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidInput("lambda list must be increasing".into()));
    }
    let rp = exp.reparam()?;
    let points: Vec<Vec<f64>> = exp.labels.iter().map(|l| vec![*l]).collect();
    let action = |lambda: f64| -> Result<Vec<f64>> {
        let post: Vec<f64> = normalized_likelihoods(&rp, &exp.sigma, g, lambda)?
            .iter()
            .zip(&exp.weights)
            .map(|(l, w)| l * w)
            .collect();
        decision_rule_weighted(&points, Some(&post), loss, cfg)
    };
    let limit_action = action(f64::INFINITY)?;
    let actions = lambdas.iter().map(|l| action(*l)).collect::<Result<Vec<_>>>()?;
    let gaps = actions
        .iter()
        .map(|a| a.iter().zip(&limit_action).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max))
        .collect();
    Ok(LimitOfBayes {
        lambdas: lambdas.to_vec(),
        actions,
        limit_action,
        gaps,
    })
}

/// A generic experiment: `Sigma = B B' + 0.1 I` with standard normal `B`,
/// zero mean, labels `0..r` and point evaluation at the first point.
pub fn generic_experiment(r: usize, k: usize, seed: u64) -> Result<FiniteExperiment> {
    let rk = r * k;
    let mut rr = rng::stream(seed, &[0x5E7]);
    let b = DMatrix::<f64>::from_fn(rk, rk, |_, _| StandardNormal.sample(&mut rr));
    let sigma = &b * b.transpose() + DMatrix::identity(rk, rk) * 0.1;
    FiniteExperiment::new(
        (0..r).map(|j| j as f64).collect(),
        k,
        DVector::zeros(rk),
        linalg::symmetrize(&sigma),
        point_evaluation(r, k, 0),
    )
}
