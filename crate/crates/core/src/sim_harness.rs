//! Calibrated simulation designs and Bernstein–von Mises checks for the
//! quantile IV model.
//!
//! `P*` resamples the base data with exponential-tilting weights and adds
//! normal noise to the outcome, so the quantile IV moments hold exactly at a
//! calibration point. `P0` multiplies the non-constant instruments by a
//! Rademacher sign, which destroys identification of the slope. Samples of
//! size `n` mix the two with weight `sqrt(n0/n)` on `P*`.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::distr::weighted::WeightedIndex;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::exec;
use crate::linalg::{self, quantile_type7};
use crate::moments::{
    cue_estimate, cue_estimate_from, regularized_inverse, sample_moments, CueEstimate, CueSearchConfig, Dataset, QuantileIv, Ridge,
};
use crate::param::ParamBox;
use crate::rng;

/// Standard normal distribution function.
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Exponential-tilting weights `omega_i ∝ exp(t' phi_i)` with `sum omega_i phi_i = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct TiltWeights {
    pub omega: Vec<f64>,
    pub t: Vec<f64>,
    pub iterations: usize,
}

impl TiltWeights {
    /// `|sum_i omega_i phi_i|` for the rows `phi` (row-major, `k` columns).
    pub fn residual_norm(&self, phi: &[f64], k: usize) -> f64 {
        let mut s = vec![0.0; k];
        for (w, row) in self.omega.iter().zip(phi.chunks_exact(k)) {
            for c in 0..k {
                s[c] += w * row[c];
            }
        }
        s.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

fn tilt_eval(phi: &[f64], k: usize, t: &DVector<f64>) -> (f64, Vec<f64>) {
    let logits: Vec<f64> = phi
        .chunks_exact(k)
        .map(|row| row.iter().zip(t.iter()).map(|(a, b)| a * b).sum())
        .collect();
    let lse = linalg::log_sum_exp(logits.iter().cloned());
    let omega = logits.iter().map(|l| (l - lse).exp()).collect();
    (lse, omega)
}

/// Damped Newton on the convex dual `t -> log sum_i exp(t' phi_i)`, starting at 0.
pub fn tilt_weights(phi: &[f64], k: usize) -> Result<TiltWeights> {
    if k == 0 || !phi.len().is_multiple_of(k) || phi.is_empty() {
        return Err(Error::InvalidInput("moment rows must be a nonempty n x k block".into()));
    }
    for c in 0..k {
        let col = phi.chunks_exact(k).map(|r| r[c]);
        let (lo, hi) = col.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
        if lo > 0.0 || hi < 0.0 {
            return Err(Error::NotInHull);
        }
    }
    let mut t = DVector::zeros(k);
    let (mut f, mut omega) = tilt_eval(phi, k, &t);
    for it in 0..200 {
        let mut grad = DVector::zeros(k);
        let mut hess = DMatrix::zeros(k, k);
        for (w, row) in omega.iter().zip(phi.chunks_exact(k)) {
            for a in 0..k {
                grad[a] += w * row[a];
                for b in 0..k {
                    hess[(a, b)] += w * row[a] * row[b];
                }
            }
        }
        if grad.norm() < 1e-10 {
            return Ok(TiltWeights {
                omega,
                t: t.iter().cloned().collect(),
                iterations: it,
            });
        }
        hess -= &grad * grad.transpose();
        let step = match regularized_inverse(&hess, Ridge::default()) {
            Ok(crate::moments::CovInverse::Full { inv, .. }) => -(inv * &grad),
            _ => -grad.clone(),
        };
        let slope = grad.dot(&step);
        let mut scale = 1.0;
        loop {
            let cand = &t + &step * scale;
            let (fc, oc) = tilt_eval(phi, k, &cand);
            // near the optimum f changes by less than rounding; allow for that
            if fc <= f + 1e-4 * scale * slope + 4.0 * f64::EPSILON * f.abs() || scale < 1e-12 {
                t = cand;
                f = fc;
                omega = oc;
                break;
            }
            scale *= 0.5;
        }
        if t.norm() > 1e8 {
            return Err(Error::NotInHull);
        }
    }
    Err(Error::Convergence("tilting did not reach the moment tolerance in 200 iterations".into()))
}

/// Population variance with divisor `n`.
fn variance(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n
}

/// `Y* = Y + e`, `e ~ N(0, Var(Y)/100)`.
pub fn jitter_outcomes(data: &Dataset, seed: u64) -> Result<Dataset> {
    if data.n() < 2 {
        return Err(Error::InsufficientData { n: data.n(), required: 2 });
    }
    let sd = (variance(data.y()) / 100.0).sqrt();
    let mut r = rng::stream(seed, &[]);
    let y = data
        .y()
        .iter()
        .map(|y| y + sd * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut r))
        .collect::<Vec<f64>>();
    data.with_outcomes(y)
}

/// The `P*` / `P0` / mixture design calibrated to a base dataset.
#[derive(Debug, Clone)]
pub struct CalibratedDesign {
    pub base: Dataset,
    pub tau: f64,
    pub theta_hat: Vec<f64>,
    pub tilt: TiltWeights,
    /// Standard deviation of the outcome noise, `sd(Y)/10`.
    pub jitter_sd: f64,
    pub n0: usize,
    index: WeightedIndex<f64>,
}

/// Which distribution a sample comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Source {
    PStar,
    P0,
    /// `P*` with probability `sqrt(n0/n)`, otherwise `P0`.
    Mixture,
}

impl CalibratedDesign {
    /// Tilt the base data so that the smoothed quantile IV moments
    /// `E[(Phi((alpha + w'beta - y)/s) - tau) z] = 0` hold exactly at `theta_hat`,
    /// where `s` is the noise scale: these are the moments of the jittered outcome.
    pub fn new(base: Dataset, tau: f64, theta_hat: Vec<f64>) -> Result<Self> {
        QuantileIv::new(tau, base.n_w(), base.n_z())?;
        if theta_hat.len() != base.n_w() + 1 {
            return Err(Error::DimensionMismatch {
                what: "calibration point",
                expected: base.n_w() + 1,
                got: theta_hat.len(),
            });
        }
        if base.n() < 2 {
            return Err(Error::InsufficientData { n: base.n(), required: 2 });
        }
        if base.n_z() == 0 || (0..base.n()).any(|i| base.obs(i).z[0] != base.obs(0).z[0]) {
            return Err(Error::InvalidInput("the first instrument column must be constant".into()));
        }
        let jitter_sd = (variance(base.y()) / 100.0).sqrt();
        if !(jitter_sd > 0.0) {
            return Err(Error::InvalidInput("outcome has zero variance".into()));
        }
        let phi = smoothed_moments(&base, tau, &theta_hat, jitter_sd);
        let tilt = tilt_weights(&phi, base.n_z())?;
        let index = WeightedIndex::new(&tilt.omega).map_err(|e| Error::InvalidInput(e.to_string()))?;
        Ok(Self {
            n0: base.n(),
            base,
            tau,
            theta_hat,
            tilt,
            jitter_sd,
            index,
        })
    }

    /// Estimate `theta_hat` by CUE on the base data, then calibrate.
    pub fn calibrate(base: Dataset, tau: f64, bounds: &ParamBox, cfg: &CueSearchConfig, seed: u64) -> Result<Self> {
        let model = QuantileIv::new(tau, base.n_w(), base.n_z())?;
        let est = cue_estimate(&base, &model, bounds, cfg, seed)?;
        Self::new(base, tau, est.theta)
    }

    pub fn model(&self) -> QuantileIv {
        QuantileIv {
            tau: self.tau,
            n_w: self.base.n_w(),
            n_z: self.base.n_z(),
        }
    }

    /// Weight on `P*` at sample size `n`.
    pub fn mixture_weight(&self, n: usize) -> f64 {
        (self.n0 as f64 / n as f64).sqrt()
    }

    /// A sample of size `n`. The mixture choice, the resampled row with its
    /// noise, and the Rademacher signs come from three separate streams, so a
    /// mixture sample at `n = n0` equals the `P*` sample with the same seed.
    pub fn sample(&self, n: usize, source: Source, seed: u64) -> Result<Dataset> {
        Ok(self.sample_tagged(n, source, seed)?.0)
    }

    /// [`Self::sample`] plus, per observation, whether it came from `P*`.
    pub fn sample_tagged(&self, n: usize, source: Source, seed: u64) -> Result<(Dataset, Vec<bool>)> {
        if source == Source::Mixture && n < self.n0 {
            return Err(Error::InvalidInput(format!(
                "sample size {n} below the calibration size {}",
                self.n0
            )));
        }
        let weight = self.mixture_weight(n);
        let mut sel = rng::stream(seed, &[0]);
        let mut obs = rng::stream(seed, &[1]);
        let mut signs = rng::stream(seed, &[2]);
        let (n_w, n_z) = (self.base.n_w(), self.base.n_z());
        let mut y = Vec::with_capacity(n);
        let mut w = Vec::with_capacity(n * n_w);
        let mut z = Vec::with_capacity(n * n_z);
        let mut tags = Vec::with_capacity(n);
        for _ in 0..n {
            let u: f64 = sel.random();
            let i = self.index.sample(&mut obs);
            let e: f64 = StandardNormal.sample(&mut obs);
            let s: f64 = if signs.random::<bool>() { 1.0 } else { -1.0 };
            let from_star = match source {
                Source::PStar => true,
                Source::P0 => false,
                Source::Mixture => u < weight,
            };
            tags.push(from_star);
            let o = self.base.obs(i);
            y.push(o.y + self.jitter_sd * e);
            w.extend_from_slice(o.w);
            z.push(o.z[0]);
            for v in &o.z[1..] {
                z.push(if from_star { *v } else { s * v });
            }
        }
        Ok((Dataset::new(y, w, z, n_w, n_z)?, tags))
    }

    /// Mixture sample (the local sequence at size `n`).
    pub fn draw_calibrated_sample(&self, n: usize, seed: u64) -> Result<Dataset> {
        self.sample(n, Source::Mixture, seed)
    }
}

/// `(Phi((alpha + w'beta - y)/s) - tau) z` for every row.
pub fn smoothed_moments(data: &Dataset, tau: f64, theta: &[f64], s: f64) -> Vec<f64> {
    let k = data.n_z();
    let mut out = Vec::with_capacity(data.n() * k);
    for i in 0..data.n() {
        let o = data.obs(i);
        let a = norm_cdf(-QuantileIv::residual(o, theta) / s) - tau;
        out.extend(o.z.iter().map(|z| a * z));
    }
    out
}

/// Per-coordinate summary of an estimator distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct CoordSummary {
    pub mean: f64,
    pub sd: f64,
    pub quantiles: [f64; 5],
    pub skewness: f64,
    /// Kolmogorov–Smirnov distance to the normal with the same mean and variance.
    pub ks_normal: f64,
}

pub const SUMMARY_QUANTILES: [f64; 5] = [0.05, 0.25, 0.5, 0.75, 0.95];

pub fn skewness(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let m2 = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
    let m3 = v.iter().map(|x| (x - m).powi(3)).sum::<f64>() / n;
    if m2 == 0.0 {
        0.0
    } else {
        m3 / m2.powf(1.5)
    }
}

/// Two-sample Kolmogorov–Smirnov distance.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// KS distance to the normal fitted by mean and variance.
pub fn ks_normal(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    ks_to_normal(v, v.iter().sum::<f64>() / n, variance(v).sqrt())
}

/// One-sample KS distance to `N(mean, sd^2)`.
pub fn ks_to_normal(v: &[f64], m: f64, sd: f64) -> f64 {
    let n = v.len() as f64;
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    if !(sd > 0.0) {
        return 1.0;
    }
    s.iter()
        .enumerate()
        .map(|(i, x)| {
            let f = norm_cdf((x - m) / sd);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

pub fn summarize(v: &[f64]) -> CoordSummary {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    CoordSummary {
        mean,
        sd: variance(v).sqrt(),
        quantiles: SUMMARY_QUANTILES.map(|q| quantile_type7(v, q)),
        skewness: skewness(v),
        ks_normal: ks_normal(v),
    }
}

/// Estimates from repeated samples of one design.
#[derive(Debug, Clone)]
pub struct EstimatorDistribution {
    pub n: usize,
    pub source: Source,
    /// `None` marks a failed replication.
    pub estimates: Vec<Option<CueEstimate>>,
    pub failures: usize,
    pub summaries: Vec<CoordSummary>,
}

impl EstimatorDistribution {
    /// Successful estimates of coordinate `j`.
    pub fn coordinate(&self, j: usize) -> Vec<f64> {
        self.estimates.iter().flatten().map(|e| e.theta[j]).collect()
    }

    /// Columns `rep, theta_hat_1..p, Q_min, failed`.
    pub fn write_csv(&self, path: impl AsRef<Path>, p: usize) -> Result<()> {
        let mut w = csv::Writer::from_path(path.as_ref())
            .map_err(|e| Error::Data(format!("{}: {e}", path.as_ref().display())))?;
        let mut header = vec!["rep".to_string()];
        header.extend((1..=p).map(|j| format!("theta_hat_{j}")));
        header.extend(["Q_min".to_string(), "failed".to_string()]);
        w.write_record(&header).map_err(|e| Error::Data(e.to_string()))?;
        for (i, e) in self.estimates.iter().enumerate() {
            let mut rec = vec![i.to_string()];
            match e {
                Some(e) => {
                    rec.extend(e.theta.iter().map(|v| format!("{v}")));
                    rec.push(format!("{}", e.q));
                    rec.push("0".into());
                }
                None => {
                    rec.extend((0..p + 1).map(|_| "NaN".to_string()));
                    rec.push("1".into());
                }
            }
            w.write_record(&rec).map_err(|e| Error::Data(e.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "n = {}", self.n);
        let _ = writeln!(s, "reps = {}", self.estimates.len());
        let _ = writeln!(s, "failures = {}", self.failures);
        for (j, c) in self.summaries.iter().enumerate() {
            let _ = writeln!(s, "theta_{}.mean = {}", j + 1, c.mean);
            let _ = writeln!(s, "theta_{}.sd = {}", j + 1, c.sd);
            for (q, v) in SUMMARY_QUANTILES.iter().zip(&c.quantiles) {
                let _ = writeln!(s, "theta_{}.q{:02} = {v}", j + 1, (q * 100.0) as u32);
            }
            let _ = writeln!(s, "theta_{}.skewness = {}", j + 1, c.skewness);
            let _ = writeln!(s, "theta_{}.ks_normal = {}", j + 1, c.ks_normal);
        }
        s
    }
}

/// Settings for [`estimator_distribution`].
#[derive(Debug, Clone)]
pub struct ReplicationConfig {
    pub reps: usize,
    pub cue: CueSearchConfig,
    /// Points on the slope axis for the exact profile scan that seeds each
    /// search (0 disables it). Needs a single regressor.
    pub profile_points: usize,
    /// How many of the best profile points are offered as starts.
    pub profile_keep: usize,
}

impl ReplicationConfig {
    pub fn new(reps: usize) -> Self {
        let mut cue = CueSearchConfig::fast();
        cue.slice.n_draws = 300;
        Self {
            reps,
            cue,
            profile_points: 201,
            profile_keep: 3,
        }
    }
}

/// CUE estimate with starts from the exact profile scan when configured.
pub fn seeded_cue_estimate(
    data: &Dataset,
    model: &QuantileIv,
    bounds: &ParamBox,
    cfg: &ReplicationConfig,
    seed: u64,
) -> Result<CueEstimate> {
    let starts: Vec<Vec<f64>> = if cfg.profile_points >= 2 && model.n_w == 1 {
        let betas = linspace(bounds.lower[1], bounds.upper[1], cfg.profile_points);
        profile_minima(data, model.tau, bounds, &betas, cfg.cue.ridge)?
            .into_iter()
            .filter(|(q, _)| q.is_finite())
            .take(cfg.profile_keep)
            .map(|(_, x)| x)
            .collect()
    } else {
        Vec::new()
    };
    cue_estimate_from(data, model, bounds, &cfg.cue, seed, &starts)
}

/// `count` evenly spaced points from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![lo];
    }
    (0..count).map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64).collect()
}

/// CUE estimates over `cfg.reps` samples of size `n`; replication `i` uses the
/// streams `(seed, i, ..)`. Failed estimates are recorded, not fatal.
pub fn estimator_distribution(
    design: &CalibratedDesign,
    n: usize,
    source: Source,
    bounds: &ParamBox,
    cfg: &ReplicationConfig,
    seed: u64,
) -> Result<EstimatorDistribution> {
    let reps = cfg.reps;
    if reps < 2 {
        return Err(Error::InvalidInput("need at least two replications".into()));
    }
    let model = design.model();
    let estimates = exec::try_map_indexed(reps, |i| -> Result<Option<CueEstimate>> {
        let data = design.sample(n, source, rng::child_seed(seed, &[i as u64, 0]))?;
        Ok(seeded_cue_estimate(&data, &model, bounds, cfg, rng::child_seed(seed, &[i as u64, 1])).ok())
    })?;
    let failures = estimates.iter().filter(|e| e.is_none()).count();
    let p = model.n_w + 1;
    let mut out = EstimatorDistribution {
        n,
        source,
        estimates,
        failures,
        summaries: Vec::new(),
    };
    if failures < reps {
        out.summaries = (0..p).map(|j| summarize(&out.coordinate(j))).collect();
    }
    Ok(out)
}

/// Strong-identification normal approximation for `theta_hat` at sample size `n`
/// under a fixed `P*`: mean `theta_hat` and covariance `(G' Sigma^{-1} G)^{-1} / n`,
/// with `G` the exact derivative of the smoothed `P*` moments.
pub fn strong_asymptotic_normal(design: &CalibratedDesign, n: usize) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let b = &design.base;
    let (k, p) = (b.n_z(), b.n_w() + 1);
    let s = design.jitter_sd;
    let tau = design.tau;
    let theta = &design.theta_hat;
    let mut g = DMatrix::<f64>::zeros(k, p);
    let mut sigma = DMatrix::<f64>::zeros(k, k);
    let mut mean = DVector::<f64>::zeros(k);
    for (i, w) in design.tilt.omega.iter().enumerate() {
        let o = b.obs(i);
        let r = -QuantileIv::residual(o, theta) / s;
        let cdf = norm_cdf(r);
        let dens = (-0.5 * r * r).exp() / (2.0 * std::f64::consts::PI).sqrt() / s;
        let a2 = cdf * (1.0 - 2.0 * tau) + tau * tau;
        for a in 0..k {
            mean[a] += w * (cdf - tau) * o.z[a];
            g[(a, 0)] += w * dens * o.z[a];
            for (j, x) in o.w.iter().enumerate() {
                g[(a, j + 1)] += w * dens * o.z[a] * x;
            }
            for c in 0..k {
                sigma[(a, c)] += w * a2 * o.z[a] * o.z[c];
            }
        }
    }
    sigma -= &mean * mean.transpose();
    let si = linalg::spd_inverse(&sigma, "moment covariance")?;
    let info = g.transpose() * si * &g;
    let v = linalg::spd_inverse(&info, "information matrix")? / n as f64;
    Ok((theta.clone(), linalg::symmetrize(&v)))
}

/// Rescale draws from a large sample of size `scale^2 * n` to the spread of size `n`:
/// `theta_hat + scale (theta_rep - theta_hat)`.
pub fn rescale_strong(values: &[f64], center: f64, scale: f64) -> Vec<f64> {
    values.iter().map(|v| center + scale * (v - center)).collect()
}

/// Exact `P0` population quantities for the scalar-regressor quantile IV design.
#[derive(Debug, Clone)]
pub struct P0Population<'a> {
    pub design: &'a CalibratedDesign,
}

impl<'a> P0Population<'a> {
    pub fn new(design: &'a CalibratedDesign) -> Result<Self> {
        if design.base.n_w() != 1 {
            return Err(Error::InvalidInput("population objects need exactly one regressor".into()));
        }
        Ok(Self { design })
    }

    fn rows(&self) -> impl Iterator<Item = (f64, crate::moments::Obs<'_>)> {
        let b = &self.design.base;
        self.design.tilt.omega.iter().cloned().zip((0..b.n()).map(move |i| b.obs(i)))
    }

    /// `P(Y* - alpha - W beta <= 0)`.
    pub fn cdf(&self, alpha: f64, beta: f64) -> f64 {
        let s = self.design.jitter_sd;
        self.rows().map(|(w, o)| w * norm_cdf((alpha + o.w[0] * beta - o.y) / s)).sum()
    }

    /// `Phi(theta) = E_P0 phi(X, theta)`: only the constant moment is nonzero.
    pub fn moments(&self, alpha: f64, beta: f64) -> DVector<f64> {
        let k = self.design.base.n_z();
        let c0 = self.design.base.obs(0).z[0];
        let mut v = DVector::zeros(k);
        v[0] = (self.cdf(alpha, beta) - self.design.tau) * c0;
        v
    }

    /// `Var_P0 phi(X, theta)`.
    pub fn covariance(&self, alpha: f64, beta: f64) -> DMatrix<f64> {
        let k = self.design.base.n_z();
        let tau = self.design.tau;
        let s = self.design.jitter_sd;
        let mut m = DMatrix::zeros(k, k);
        for (w, o) in self.rows() {
            let p = norm_cdf((alpha + o.w[0] * beta - o.y) / s);
            let a2 = p * (1.0 - 2.0 * tau) + tau * tau;
            // the Rademacher sign cancels in products of two non-constant entries
            // and zeroes products with the constant
            for r in 0..k {
                for c in 0..k {
                    let mixed = (r == 0) != (c == 0);
                    if !mixed {
                        m[(r, c)] += w * a2 * o.z[r] * o.z[c];
                    }
                }
            }
        }
        let mean = self.moments(alpha, beta);
        m - &mean * mean.transpose()
    }

    /// The `alpha` at which `P(Y* - W beta <= alpha) = tau`.
    pub fn alpha_of_beta(&self, beta: f64) -> f64 {
        let tau = self.design.tau;
        let (mut lo, mut hi) = self.rows().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), (_, o)| {
            let e = o.y - o.w[0] * beta;
            (a.min(e), b.max(e))
        });
        let pad = 10.0 * self.design.jitter_sd;
        lo -= pad;
        hi += pad;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.cdf(mid, beta) < tau {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo < 1e-13 {
                break;
            }
        }
        0.5 * (lo + hi)
    }

    /// `d Phi / d gamma` at `gamma = 0` along `alpha = alpha(beta) + gamma`, by central differences.
    pub fn jacobian(&self, beta: f64, step: f64) -> DMatrix<f64> {
        let a = self.alpha_of_beta(beta);
        let d = (self.moments(a + step, beta) - self.moments(a - step, beta)) / (2.0 * step);
        DMatrix::from_column_slice(d.len(), 1, d.as_slice())
    }

    /// `{alpha : Phi' Sigma^{-1} Phi < c} ` at `beta`, an interval around `alpha(beta)`.
    /// Relies on `(F - tau)^2 / (F (1 - F))` growing with `|F - tau|`, which holds for `tau >= 1/2`.
    pub fn concentration_interval(&self, beta: f64, c: f64) -> (f64, f64) {
        let tau = self.design.tau;
        let a0 = self.alpha_of_beta(beta);
        let stat = |alpha: f64| {
            let f = self.cdf(alpha, beta);
            if f <= 0.0 || f >= 1.0 {
                f64::INFINITY
            } else {
                (f - tau).powi(2) / (f * (1.0 - f))
            }
        };
        let edge = |dir: f64| {
            let mut near = a0;
            let mut step = self.design.jitter_sd;
            let mut far = a0 + dir * step;
            while stat(far) < c {
                near = far;
                step *= 2.0;
                far = a0 + dir * step;
                if step > 1e6 {
                    return far;
                }
            }
            for _ in 0..100 {
                let mid = 0.5 * (near + far);
                if stat(mid) < c {
                    near = mid;
                } else {
                    far = mid;
                }
            }
            0.5 * (near + far)
        };
        (edge(-1.0), edge(1.0))
    }
}

/// `J = nabla' Sigma^{-1} nabla` (times 1/2 when `half`) and
/// `M = Sigma^{-1} - Sigma^{-1} nabla J^{-1} nabla' Sigma^{-1}`.
pub fn bvm_matrices(nabla: &DMatrix<f64>, sigma: &DMatrix<f64>, half: bool) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let si = linalg::spd_inverse(sigma, "moment covariance")?;
    let mut j = nabla.transpose() * &si * nabla;
    if half {
        j *= 0.5;
    }
    let ji = linalg::spd_inverse(&j, "J").map_err(|_| Error::Singular("J is numerically singular".into()))?;
    let m = &si - &si * nabla * ji * nabla.transpose() * &si;
    Ok((linalg::symmetrize(&j), linalg::symmetrize(&m)))
}

/// Objects on a grid of `beta` values parameterizing the identified set.
#[derive(Debug, Clone)]
pub struct BvmSpec {
    pub betas: Vec<f64>,
    pub alphas: Vec<f64>,
    pub nabla: Vec<DMatrix<f64>>,
    pub sigma: Vec<DMatrix<f64>>,
    pub j: Vec<DMatrix<f64>>,
    pub m: Vec<DMatrix<f64>>,
    /// `log pi0(beta)` up to a constant: `-1/2 log|J|` inside the box, `-inf` outside.
    pub log_pi0: Vec<f64>,
}

pub fn bvm_spec(pop: &P0Population<'_>, betas: &[f64], bounds: &ParamBox, fd_step: f64, half_j: bool) -> Result<BvmSpec> {
    let mut spec = BvmSpec {
        betas: betas.to_vec(),
        alphas: Vec::new(),
        nabla: Vec::new(),
        sigma: Vec::new(),
        j: Vec::new(),
        m: Vec::new(),
        log_pi0: Vec::new(),
    };
    for &b in betas {
        let a = pop.alpha_of_beta(b);
        let nabla = pop.jacobian(b, fd_step);
        let sigma = pop.covariance(a, b);
        let (j, m) = bvm_matrices(&nabla, &sigma, half_j)?;
        let inside = bounds.contains(&[a, b]);
        spec.log_pi0.push(if inside {
            -0.5 * j.determinant().ln()
        } else {
            f64::NEG_INFINITY
        });
        spec.alphas.push(a);
        spec.nabla.push(nabla);
        spec.sigma.push(sigma);
        spec.j.push(j);
        spec.m.push(m);
    }
    Ok(spec)
}

/// Normalized weights `∝ exp(-g_n(beta)' M(beta) g_n(beta) / 2) pi0(beta)` on the grid.
pub fn infeasible_posterior(spec: &BvmSpec, data: &Dataset, model: &QuantileIv) -> Result<Vec<f64>> {
    let logs = spec
        .betas
        .iter()
        .enumerate()
        .map(|(i, b)| -> Result<f64> {
            if spec.log_pi0[i] == f64::NEG_INFINITY {
                return Ok(f64::NEG_INFINITY);
            }
            let g = sample_moments(data, model, &[spec.alphas[i], *b])?;
            Ok(-0.5 * g.dot(&(&spec.m[i] * &g)) + spec.log_pi0[i])
        })
        .collect::<Result<Vec<_>>>()?;
    let lse = linalg::log_sum_exp(logs.iter().cloned());
    if lse == f64::NEG_INFINITY {
        return Err(Error::InvalidInput("infeasible posterior has no mass".into()));
    }
    Ok(logs.iter().map(|l| (l - lse).exp()).collect())
}

/// Expectations of test functions under the flat-prior quasi-posterior,
/// integrated exactly in `alpha` and on a grid in `beta`.
#[derive(Debug, Clone)]
pub struct FeasiblePosterior {
    pub expectations: Vec<f64>,
    /// Posterior mass outside `{Phi' Sigma^{-1} Phi < c/n}` for each requested `c`.
    pub outside_mass: Vec<f64>,
}

type TestFn<'a> = &'a (dyn Fn(f64, f64) -> f64 + Sync);

/// For fixed `beta` the quantile IV objective is constant in `alpha` between
/// consecutive sorted values of `y_i - w_i beta`. Calls `f(start, end, g_n, Sigma_n)`
/// for each such piece of `[a_lo, a_hi]`.
fn alpha_pieces<F>(data: &Dataset, tau: f64, beta: f64, a_lo: f64, a_hi: f64, mut f: F) -> Result<()>
where
    F: FnMut(f64, f64, &DVector<f64>, &DMatrix<f64>) -> Result<()>,
{
    let n = data.n();
    let k = data.n_z();
    let nf = n as f64;
    let mut order: Vec<(f64, usize)> = (0..n)
        .map(|i| {
            let o = data.obs(i);
            (o.y - o.w[0] * beta, i)
        })
        .collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut z_all = vec![0.0; k];
    let mut zz_all = vec![0.0; k * k];
    for i in 0..n {
        let z = data.obs(i).z;
        for a in 0..k {
            z_all[a] += z[a];
            for b in 0..k {
                zz_all[a * k + b] += z[a] * z[b];
            }
        }
    }
    let mut z_on = vec![0.0; k];
    let mut zz_on = vec![0.0; k * k];
    let mut start = a_lo;
    let mut m = 0usize;
    let mut g = DVector::zeros(k);
    let mut s = DMatrix::zeros(k, k);
    loop {
        // the indicator is on for the first m sorted rows throughout (start, end)
        while m < n && order[m].0 <= start {
            let z = data.obs(order[m].1).z;
            for a in 0..k {
                z_on[a] += z[a];
                for b in 0..k {
                    zz_on[a * k + b] += z[a] * z[b];
                }
            }
            m += 1;
        }
        let end = if m < n { order[m].0.min(a_hi) } else { a_hi };
        if end > start {
            for a in 0..k {
                g[a] = ((1.0 - tau) * z_on[a] - tau * (z_all[a] - z_on[a])) / nf;
            }
            for a in 0..k {
                for b in 0..k {
                    let on = zz_on[a * k + b];
                    s[(a, b)] = ((1.0 - tau).powi(2) * on + tau * tau * (zz_all[a * k + b] - on)) / nf - g[a] * g[b];
                }
            }
            let gn = &g * nf.sqrt();
            f(start, end, &gn, &s)?;
        }
        if end >= a_hi {
            return Ok(());
        }
        start = end;
    }
}

fn check_scalar_regressor(data: &Dataset, bounds: &ParamBox) -> Result<()> {
    if data.n_w() != 1 || bounds.dim() != 2 {
        return Err(Error::InvalidInput("exact quadrature needs one regressor".into()));
    }
    Ok(())
}

/// Posterior pieces are integrated exactly in `alpha`; test functions are
/// evaluated at the piece midpoint.
pub fn feasible_posterior(
    data: &Dataset,
    tau: f64,
    bounds: &ParamBox,
    betas: &[f64],
    tests: &[TestFn<'_>],
    concentration: Option<(&P0Population<'_>, &[f64])>,
    ridge: Ridge,
) -> Result<FeasiblePosterior> {
    check_scalar_regressor(data, bounds)?;
    let nf = data.n() as f64;
    let cs: Vec<f64> = concentration.map_or(Vec::new(), |(_, c)| c.to_vec());
    let n_tests = tests.len();

    // Per-beta partial sums: total mass, test-function mass, mass outside each neighborhood.
    let per_beta = exec::try_map_indexed(betas.len(), |bi| -> Result<Vec<f64>> {
        let beta = betas[bi];
        let mut acc = vec![0.0; 1 + n_tests + cs.len()];
        if !(beta >= bounds.lower[1] && beta <= bounds.upper[1]) {
            return Ok(acc);
        }
        let intervals: Vec<(f64, f64)> = match concentration {
            Some((pop, c)) => c.iter().map(|c| pop.concentration_interval(beta, c / nf)).collect(),
            None => Vec::new(),
        };
        alpha_pieces(data, tau, beta, bounds.lower[0], bounds.upper[0], |start, end, g, s| {
            let q = regularized_inverse(s, ridge)?.quad(g);
            let wgt = (-0.5 * q).exp() * (end - start);
            if wgt > 0.0 {
                let mid = 0.5 * (start + end);
                acc[0] += wgt;
                for (t, f) in tests.iter().enumerate() {
                    acc[1 + t] += wgt * f(mid, beta);
                }
                for (ci, (lo, hi)) in intervals.iter().enumerate() {
                    let inside = (end.min(*hi) - start.max(*lo)).max(0.0);
                    acc[1 + n_tests + ci] += wgt * (1.0 - inside / (end - start));
                }
            }
            Ok(())
        })?;
        Ok(acc)
    })?;
    let mut total = vec![0.0; 1 + n_tests + cs.len()];
    for row in &per_beta {
        for (t, v) in total.iter_mut().zip(row) {
            *t += v;
        }
    }
    if !(total[0] > 0.0) {
        return Err(Error::InvalidInput("quasi-posterior has no mass on the grid".into()));
    }
    Ok(FeasiblePosterior {
        expectations: total[1..1 + n_tests].iter().map(|v| v / total[0]).collect(),
        outside_mass: total[1 + n_tests..].iter().map(|v| v / total[0]).collect(),
    })
}

/// `g' S^{-1} g` by Cholesky, falling back to the ridge policy when `S` is not
/// comfortably positive definite.
fn quick_quad(s: &DMatrix<f64>, g: &DVector<f64>, ridge: Ridge) -> f64 {
    let k = s.nrows();
    let scale = s.trace() / k as f64;
    if let Some(ch) = s.clone().cholesky() {
        let l = ch.l_dirty();
        if (0..k).all(|i| l[(i, i)] * l[(i, i)] > 1e-6 * scale) {
            let v = ch.solve(g);
            return g.dot(&v).max(0.0);
        }
    }
    regularized_inverse(s, ridge).map_or(f64::INFINITY, |inv| inv.quad(g))
}

/// Profile of the quantile IV objective: for each `beta`, the midpoint of the
/// `alpha` piece with the smallest `Q_n`. Returns `(Q_n, [alpha, beta])` sorted by `Q_n`.
pub fn profile_minima(data: &Dataset, tau: f64, bounds: &ParamBox, betas: &[f64], ridge: Ridge) -> Result<Vec<(f64, Vec<f64>)>> {
    check_scalar_regressor(data, bounds)?;
    let mut out = exec::try_map_indexed(betas.len(), |bi| -> Result<(f64, Vec<f64>)> {
        let beta = betas[bi];
        let mut best = (f64::INFINITY, vec![bounds.center()[0], beta]);
        alpha_pieces(data, tau, beta, bounds.lower[0], bounds.upper[0], |start, end, g, s| {
            let q = quick_quad(s, g, ridge);
            if q < best.0 {
                best = (q, vec![0.5 * (start + end), beta]);
            }
            Ok(())
        })?;
        Ok(best)
    })?;
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(out)
}

/// Gaps `|E_feasible c - E_infeasible c|` for each test function.
pub fn bvm_gap(feasible: &FeasiblePosterior, spec: &BvmSpec, infeasible: &[f64], tests: &[TestFn<'_>]) -> Vec<f64> {
    tests
        .iter()
        .zip(&feasible.expectations)
        .map(|(f, ef)| {
            let ei: f64 = spec
                .betas
                .iter()
                .zip(&spec.alphas)
                .zip(infeasible)
                .map(|((b, a), w)| w * f(*a, *b))
                .sum();
            (ef - ei).abs()
        })
        .collect()
}

/// A fish-market-like dataset of 111 days: log quantity `y`, log price `w1`,
/// and instruments (constant, mixed weather, stormy weather).
pub fn synthetic_fish_market(seed: u64) -> Result<Dataset> {
    let n = 111;
    let mut r = rng::stream(seed, &[0xF15]);
    let mut rows = Vec::with_capacity(n);
    for i in 0..n {
        // 43 fair, 36 mixed, 32 stormy days
        let (mixed, stormy) = if i < 43 {
            (0.0, 0.0)
        } else if i < 79 {
            (1.0, 0.0)
        } else {
            (0.0, 1.0)
        };
        let v: f64 = StandardNormal.sample(&mut r);
        let e: f64 = StandardNormal.sample(&mut r);
        let u = 0.5 * v + 0.866 * e;
        let w = -0.30 + 0.14 * mixed + 0.34 * stormy + 0.33 * v;
        let y = 8.35 - 1.0 * w + 0.70 * u;
        let round = |x: f64| (x * 1e6).round() / 1e6;
        rows.push((round(y), vec![round(w)], vec![1.0, mixed, stormy]));
    }
    Dataset::from_rows(&rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tilt_uniform_when_centered() {
        let phi = [1.0, -1.0, 2.0, -2.0];
        let t = tilt_weights(&phi, 1).unwrap();
        assert!(t.omega.iter().all(|w| (w - 0.25).abs() < 1e-15));
        assert_eq!(t.t, vec![0.0]);
    }

    #[test]
    fn tilt_two_points() {
        let t = tilt_weights(&[-1.0, 2.0], 1).unwrap();
        assert!((t.omega[0] - 2.0 / 3.0).abs() < 1e-10);
        assert!((t.omega[1] - 1.0 / 3.0).abs() < 1e-10);
        assert!(matches!(tilt_weights(&[1.0, 2.0], 1), Err(Error::NotInHull)));
    }

    #[test]
    fn tilt_exponential_form() {
        let phi = [0.3, -0.2, -0.5, 0.4, 0.9, 0.1, -0.4, -0.6, 0.2, 0.5];
        let t = tilt_weights(&phi, 2).unwrap();
        assert!(t.residual_norm(&phi, 2) < 1e-10);
        let raw: Vec<f64> = phi.chunks(2).map(|r| (r[0] * t.t[0] + r[1] * t.t[1]).exp()).collect();
        let s: f64 = raw.iter().sum();
        for (w, r) in t.omega.iter().zip(&raw) {
            assert!((w - r / s).abs() < 1e-14);
        }
    }

    #[test]
    fn jitter_scale() {
        // Var(y) = 100 exactly for y = +-10
        let y: Vec<f64> = (0..100_000).map(|i| if i % 2 == 0 { 10.0 } else { -10.0 }).collect();
        let d = Dataset::new(y.clone(), vec![], vec![], 0, 0).unwrap();
        let j = jitter_outcomes(&d, 3).unwrap();
        let diff: Vec<f64> = j.y().iter().zip(&y).map(|(a, b)| a - b).collect();
        assert!((variance(&diff) - 1.0).abs() < 0.05);
        assert_eq!(j, jitter_outcomes(&d, 3).unwrap());
    }

    #[test]
    fn bvm_projection_identity() {
        let (j, m) = bvm_matrices(&DMatrix::from_column_slice(2, 1, &[1.0, 0.0]), &DMatrix::identity(2, 2), false).unwrap();
        assert!((j[(0, 0)] - 1.0).abs() < 1e-15);
        assert!((m - DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 1.0])).amax() < 1e-15);
    }

    #[test]
    fn ks_distances() {
        let a = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(ks_two_sample(&a, &a), 0.0);
        assert_eq!(ks_two_sample(&[1.0, 2.0], &[3.0, 4.0]), 1.0);
        assert!((ks_two_sample(&[1.0, 2.0, 3.0, 4.0], &[2.5, 3.5, 4.5, 5.5]) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn synthetic_data_layout() {
        let d = synthetic_fish_market(1).unwrap();
        assert_eq!((d.n(), d.n_w(), d.n_z()), (111, 1, 3));
        let stormy: f64 = (0..111).map(|i| d.obs(i).z[2]).sum();
        assert_eq!(stormy, 32.0);
    }

    fn design() -> CalibratedDesign {
        CalibratedDesign::new(synthetic_fish_market(2016).unwrap(), 0.75, vec![8.8, -0.4]).unwrap()
    }

    #[test]
    fn calibration_moments_hold() {
        let d = design();
        let phi = smoothed_moments(&d.base, d.tau, &d.theta_hat, d.jitter_sd);
        assert!(d.tilt.residual_norm(&phi, 3) < 1e-8);
        assert!((d.tilt.omega.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        // the smoothed P* moments are the exact population moments of the jittered design
        let pop = P0Population::new(&d).unwrap();
        assert!((pop.cdf(8.8, -0.4) - 0.75).abs() < 1e-8);
    }

    #[test]
    fn constant_column_required() {
        let base = synthetic_fish_market(1).unwrap();
        let idx: Vec<usize> = (0..base.n()).collect();
        let rows: Vec<(f64, Vec<f64>, Vec<f64>)> = idx
            .iter()
            .map(|&i| {
                let o = base.obs(i);
                (o.y, o.w.to_vec(), vec![o.z[1], o.z[0], o.z[2]])
            })
            .collect();
        let swapped = Dataset::from_rows(&rows).unwrap();
        assert!(matches!(
            CalibratedDesign::new(swapped, 0.75, vec![8.8, -0.4]),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn p0_draws_degrade_instruments() {
        let d = design();
        let s = d.sample(100_000, Source::P0, 5).unwrap();
        assert!((0..s.n()).all(|i| s.obs(i).z[0] == 1.0));
        for c in 1..3 {
            let col: Vec<f64> = (0..s.n()).map(|i| s.obs(i).z[c]).collect();
            let m = col.iter().sum::<f64>() / col.len() as f64;
            let se = (variance(&col) / col.len() as f64).sqrt();
            assert!(m.abs() < 3.0 * se, "column {c}: mean {m}, se {se}");
        }
    }

    #[test]
    fn mixture_weights_and_replay() {
        let d = design();
        assert_eq!(d.mixture_weight(111), 1.0);
        assert_eq!(d.mixture_weight(444), 0.5);
        let tags: Vec<bool> = (0..100)
            .flat_map(|r| d.sample_tagged(999, Source::Mixture, r).unwrap().1)
            .collect();
        let share = tags.iter().filter(|t| **t).count() as f64 / tags.len() as f64;
        let se = (1.0 / 3.0 * 2.0 / 3.0 / tags.len() as f64).sqrt();
        assert!((share - 1.0 / 3.0).abs() < 3.0 * se);
        assert_eq!(d.draw_calibrated_sample(111, 9).unwrap(), d.sample(111, Source::PStar, 9).unwrap());
        assert!(d.draw_calibrated_sample(110, 9).is_err());
    }

    #[test]
    fn annihilator_on_grid() {
        let d = design();
        let pop = P0Population::new(&d).unwrap();
        let bounds = ParamBox::new(vec![0.0, -10.0], vec![30.0, 30.0]).unwrap();
        let spec = bvm_spec(&pop, &linspace(-10.0, 30.0, 21), &bounds, 0.05, false).unwrap();
        for (m, nabla) in spec.m.iter().zip(&spec.nabla) {
            assert!((m * nabla).amax() < 1e-8);
            assert!((m - m.transpose()).amax() < 1e-12);
            let (vals, _) = linalg::sym_eigen(m);
            assert!(vals.iter().all(|v| *v > -1e-8));
            assert_eq!(linalg::rank(m), 2);
        }
    }

    #[test]
    fn constant_test_function_has_no_gap() {
        let d = design();
        let pop = P0Population::new(&d).unwrap();
        let bounds = ParamBox::new(vec![0.0, -10.0], vec![30.0, 30.0]).unwrap();
        let spec = bvm_spec(&pop, &linspace(-10.0, 30.0, 41), &bounds, 0.05, false).unwrap();
        let data = d.draw_calibrated_sample(500, 3).unwrap();
        let inf = infeasible_posterior(&spec, &data, &d.model()).unwrap();
        let one = |_: f64, _: f64| 1.0;
        let tests: Vec<TestFn<'_>> = vec![&one];
        let fe = feasible_posterior(&data, 0.75, &bounds, &linspace(-10.0, 30.0, 81), &tests, None, Ridge::default()).unwrap();
        assert!((fe.expectations[0] - 1.0).abs() < 1e-12);
        assert!((inf.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(bvm_gap(&fe, &spec, &inf, &tests)[0] < 1e-12);
    }

    #[test]
    fn profile_matches_objective() {
        let d = design();
        let data = d.sample(300, Source::PStar, 4).unwrap();
        let bounds = ParamBox::new(vec![0.0, -10.0], vec![30.0, 30.0]).unwrap();
        let prof = profile_minima(&data, 0.75, &bounds, &[-0.4, 2.0], Ridge::default()).unwrap();
        for (q, x) in prof {
            let direct = crate::moments::cue_objective(&data, &d.model(), &x, Ridge::default()).unwrap();
            assert!((q - direct).abs() < 1e-8 * (1.0 + q), "{q} vs {direct}");
        }
    }

    #[test]
    fn strong_linear_iv_is_normal() {
        use crate::moments::LinearIv;
        let bounds = ParamBox::new(vec![-5.0, -5.0], vec![5.0, 5.0]).unwrap();
        let model = LinearIv { n_w: 1, n_z: 2 };
        let mut cfg = CueSearchConfig::fast();
        cfg.slice.n_draws = 200;
        let est: Vec<f64> = exec::map_indexed(300, |r| {
            let mut g = rng::stream(77, &[r as u64]);
            let rows: Vec<(f64, Vec<f64>, Vec<f64>)> = (0..1000)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut g);
                    let v: f64 = StandardNormal.sample(&mut g);
                    let e: f64 = StandardNormal.sample(&mut g);
                    let w = z + v;
                    (1.0 + 0.5 * w + e + 0.5 * v, vec![w], vec![1.0, z])
                })
                .collect();
            let data = Dataset::from_rows(&rows).unwrap();
            cue_estimate(&data, &model, &bounds, &cfg, r as u64).unwrap().theta[1]
        });
        assert!(summarize(&est).ks_normal < 0.05);
    }

    #[test]
    fn replay_gives_identical_summary() {
        let d = design();
        let bounds = ParamBox::new(vec![0.0, -10.0], vec![30.0, 30.0]).unwrap();
        let mut cfg = ReplicationConfig::new(4);
        cfg.cue.slice.n_draws = 50;
        let a = estimator_distribution(&d, 111, Source::PStar, &bounds, &cfg, 12).unwrap();
        let b = estimator_distribution(&d, 111, Source::PStar, &bounds, &cfg, 12).unwrap();
        assert_eq!(a.summary(), b.summary());
        assert_eq!(a.failures, 0);
    }
}
