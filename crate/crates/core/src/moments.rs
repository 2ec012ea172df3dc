//! Moment models, sample moment statistics and the continuously updating
//! GMM (CUE) objective.
//!
//! For a moment function `phi(x, theta)` with `k` components the sample
//! moment process is `g_n(theta) = n^{-1/2} sum_i phi(x_i, theta)`, its
//! covariance function is the centered sample covariance of the `phi` values,
//! and the CUE objective is `Q_n(theta) = g_n' Sigma_n(theta, theta)^{-1} g_n`.

use std::cell::RefCell;
use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::optim::{nelder_mead, NelderMeadConfig};
use crate::param::{GridSpec, ParamBox};
use crate::quasi_bayes::{slice_sample, SliceConfig};
use crate::rng;

/// Observations `(y, w, z)` stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    n: usize,
    n_w: usize,
    n_z: usize,
    y: Vec<f64>,
    w: Vec<f64>,
    z: Vec<f64>,
}

/// One observation row.
#[derive(Debug, Clone, Copy)]
pub struct Obs<'a> {
    pub y: f64,
    pub w: &'a [f64],
    pub z: &'a [f64],
}

impl Dataset {
    /// `w` holds `n * n_w` values and `z` holds `n * n_z` values, row-major.
    pub fn new(y: Vec<f64>, w: Vec<f64>, z: Vec<f64>, n_w: usize, n_z: usize) -> Result<Self> {
        let n = y.len();
        if n == 0 {
            return Err(Error::InsufficientData { n, required: 1 });
        }
        if w.len() != n * n_w {
            return Err(Error::DimensionMismatch {
                what: "regressor block",
                expected: n * n_w,
                got: w.len(),
            });
        }
        if z.len() != n * n_z {
            return Err(Error::DimensionMismatch {
                what: "instrument block",
                expected: n * n_z,
                got: z.len(),
            });
        }
        if let Some(pos) = y.iter().chain(&w).chain(&z).position(|v| !v.is_finite()) {
            return Err(Error::Data(format!("non-finite entry at flat position {pos}")));
        }
        Ok(Self { n, n_w, n_z, y, w, z })
    }

    /// Build from rows of `(y, w, z)`.
    pub fn from_rows(rows: &[(f64, Vec<f64>, Vec<f64>)]) -> Result<Self> {
        let n_w = rows.first().map_or(0, |r| r.1.len());
        let n_z = rows.first().map_or(0, |r| r.2.len());
        let mut y = Vec::with_capacity(rows.len());
        let mut w = Vec::with_capacity(rows.len() * n_w);
        let mut z = Vec::with_capacity(rows.len() * n_z);
        for (yy, ww, zz) in rows {
            y.push(*yy);
            w.extend_from_slice(ww);
            z.extend_from_slice(zz);
        }
        Self::new(y, w, z, n_w, n_z)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn n_w(&self) -> usize {
        self.n_w
    }

    pub fn n_z(&self) -> usize {
        self.n_z
    }

    pub fn obs(&self, i: usize) -> Obs<'_> {
        Obs {
            y: self.y[i],
            w: &self.w[i * self.n_w..(i + 1) * self.n_w],
            z: &self.z[i * self.n_z..(i + 1) * self.n_z],
        }
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn w_flat(&self) -> &[f64] {
        &self.w
    }

    pub fn z_flat(&self) -> &[f64] {
        &self.z
    }

    /// Same rows with the outcome replaced.
    pub fn with_outcomes(&self, y: Vec<f64>) -> Result<Self> {
        Self::new(y, self.w.clone(), self.z.clone(), self.n_w, self.n_z)
    }

    /// Rows `idx` (with repetition allowed), in the given order.
    pub fn select(&self, idx: &[usize]) -> Result<Self> {
        let mut y = Vec::with_capacity(idx.len());
        let mut w = Vec::with_capacity(idx.len() * self.n_w);
        let mut z = Vec::with_capacity(idx.len() * self.n_z);
        for &i in idx {
            let o = self.obs(i);
            y.push(o.y);
            w.extend_from_slice(o.w);
            z.extend_from_slice(o.z);
        }
        Self::new(y, w, z, self.n_w, self.n_z)
    }

    /// Load a CSV with a header row; roles come from `mapping`.
    pub fn from_csv(path: impl AsRef<Path>, mapping: &ColumnMapping) -> Result<Self> {
        let path = path.as_ref();
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
        let headers = rdr
            .headers()
            .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?
            .clone();
        let find = |name: &str| -> Result<usize> {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::Data(format!("missing column `{name}`")))
        };
        let y_col = find(&mapping.y)?;
        let w_cols = mapping.w.iter().map(|c| find(c)).collect::<Result<Vec<_>>>()?;
        let z_cols = mapping.z.iter().map(|c| find(c)).collect::<Result<Vec<_>>>()?;

        let (mut y, mut w, mut z) = (Vec::new(), Vec::new(), Vec::new());
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| Error::Data(format!("row {}: {e}", row + 1)))?;
            let cell = |col: usize| -> Result<f64> {
                let raw = rec.get(col).unwrap_or("");
                let v: f64 = raw.parse().map_err(|_| {
                    Error::Data(format!(
                        "row {} column `{}`: non-numeric value {raw:?}",
                        row + 1,
                        &headers[col]
                    ))
                })?;
                if !v.is_finite() {
                    return Err(Error::Data(format!(
                        "row {} column `{}`: non-finite value {raw:?}",
                        row + 1,
                        &headers[col]
                    )));
                }
                Ok(v)
            };
            y.push(cell(y_col)?);
            for &c in &w_cols {
                w.push(cell(c)?);
            }
            for &c in &z_cols {
                z.push(cell(c)?);
            }
        }
        if y.len() < 2 {
            return Err(Error::InsufficientData { n: y.len(), required: 2 });
        }
        Self::new(y, w, z, w_cols.len(), z_cols.len())
    }

    /// Write with the default header `y, w1.., z1..`.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut wtr = csv::Writer::from_path(path.as_ref())
            .map_err(|e| Error::Data(format!("{}: {e}", path.as_ref().display())))?;
        let map = ColumnMapping::standard(self.n_w + 1, self.n_z);
        let mut header = vec![map.y.clone()];
        header.extend(map.w.iter().cloned());
        header.extend(map.z.iter().cloned());
        wtr.write_record(&header).map_err(|e| Error::Data(e.to_string()))?;
        for i in 0..self.n {
            let o = self.obs(i);
            let mut rec = vec![format!("{}", o.y)];
            rec.extend(o.w.iter().map(|v| format!("{v}")));
            rec.extend(o.z.iter().map(|v| format!("{v}")));
            wtr.write_record(&rec).map_err(|e| Error::Data(e.to_string()))?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Which CSV columns play the outcome, regressor and instrument roles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnMapping {
    pub y: String,
    pub w: Vec<String>,
    pub z: Vec<String>,
}

impl ColumnMapping {
    /// `y`, `w1..w{p-1}`, `z1..zk`.
    pub fn standard(p: usize, k: usize) -> Self {
        Self {
            y: "y".into(),
            w: (1..p).map(|i| format!("w{i}")).collect(),
            z: (1..=k).map(|i| format!("z{i}")).collect(),
        }
    }
}

/// A moment function `phi(x, theta)` with `p` parameters and `k` moments.
pub trait MomentModel: Send + Sync {
    fn n_params(&self) -> usize;
    fn n_moments(&self) -> usize;
    /// Write `phi(obs, theta)` into `out` (length `k`). Dimensions are checked by callers.
    fn eval_into(&self, obs: Obs<'_>, theta: &[f64], out: &mut [f64]);
    /// Check that the dataset has the column layout this model needs.
    fn check_data(&self, _data: &Dataset) -> Result<()> {
        Ok(())
    }
    /// Optional one-pass `(sum_i phi_i, sum_i phi_i phi_i')` (the latter row-major `k x k`).
    /// Models with cheap moments override this to skip the row buffer.
    fn moment_sums(&self, _data: &Dataset, _theta: &[f64]) -> Option<(Vec<f64>, Vec<f64>)> {
        None
    }
}

fn check_layout(data: &Dataset, n_w: usize, n_z: usize) -> Result<()> {
    if data.n_w() != n_w {
        return Err(Error::DimensionMismatch {
            what: "regressor columns",
            expected: n_w,
            got: data.n_w(),
        });
    }
    if data.n_z() != n_z {
        return Err(Error::DimensionMismatch {
            what: "instrument columns",
            expected: n_z,
            got: data.n_z(),
        });
    }
    Ok(())
}

/// Quantile IV: `phi = (1{y - alpha - w'beta <= 0} - tau) z`, `theta = (alpha, beta)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantileIv {
    pub tau: f64,
    pub n_w: usize,
    pub n_z: usize,
}

impl QuantileIv {
    pub fn new(tau: f64, n_w: usize, n_z: usize) -> Result<Self> {
        if !(tau > 0.0 && tau < 1.0) {
            return Err(Error::InvalidInput(format!("quantile level {tau} outside (0,1)")));
        }
        Ok(Self { tau, n_w, n_z })
    }

    /// `y - alpha - w'beta`.
    #[inline]
    pub fn residual(obs: Obs<'_>, theta: &[f64]) -> f64 {
        obs.y - theta[0] - obs.w.iter().zip(&theta[1..]).map(|(w, b)| w * b).sum::<f64>()
    }
}

impl MomentModel for QuantileIv {
    fn n_params(&self) -> usize {
        self.n_w + 1
    }

    fn n_moments(&self) -> usize {
        self.n_z
    }

    #[inline]
    fn eval_into(&self, obs: Obs<'_>, theta: &[f64], out: &mut [f64]) {
        let ind = if Self::residual(obs, theta) <= 0.0 { 1.0 } else { 0.0 };
        let a = ind - self.tau;
        for (o, z) in out.iter_mut().zip(obs.z) {
            *o = a * z;
        }
    }

    fn check_data(&self, data: &Dataset) -> Result<()> {
        check_layout(data, self.n_w, self.n_z)
    }

    fn moment_sums(&self, data: &Dataset, theta: &[f64]) -> Option<(Vec<f64>, Vec<f64>)> {
        let k = self.n_z;
        // sums over the rows with the indicator on, and over all rows (branch-free)
        let mut z_on = vec![0.0; k];
        let mut zz_on = vec![0.0; k * k];
        let mut z_all = vec![0.0; k];
        let mut zz_all = vec![0.0; k * k];
        for i in 0..data.n() {
            let o = data.obs(i);
            let on = (Self::residual(o, theta) <= 0.0) as u8 as f64;
            for r in 0..k {
                z_all[r] += o.z[r];
                z_on[r] += on * o.z[r];
                for c in r..k {
                    let p = o.z[r] * o.z[c];
                    zz_all[r * k + c] += p;
                    zz_on[r * k + c] += on * p;
                }
            }
        }
        let z_off: Vec<f64> = z_all.iter().zip(&z_on).map(|(a, b)| a - b).collect();
        let zz_off: Vec<f64> = zz_all.iter().zip(&zz_on).map(|(a, b)| a - b).collect();
        let (a_on, a_off) = (1.0 - self.tau, -self.tau);
        let sum = (0..k).map(|r| a_on * z_on[r] + a_off * z_off[r]).collect();
        let mut outer = vec![0.0; k * k];
        for r in 0..k {
            for c in r..k {
                let v = a_on * a_on * zz_on[r * k + c] + a_off * a_off * zz_off[r * k + c];
                outer[r * k + c] = v;
                outer[c * k + r] = v;
            }
        }
        Some((sum, outer))
    }
}

/// Linear IV: `phi = (y - alpha - w'beta) z`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearIv {
    pub n_w: usize,
    pub n_z: usize,
}

impl MomentModel for LinearIv {
    fn n_params(&self) -> usize {
        self.n_w + 1
    }

    fn n_moments(&self) -> usize {
        self.n_z
    }

    #[inline]
    fn eval_into(&self, obs: Obs<'_>, theta: &[f64], out: &mut [f64]) {
        let e = QuantileIv::residual(obs, theta);
        for (o, z) in out.iter_mut().zip(obs.z) {
            *o = e * z;
        }
    }

    fn check_data(&self, data: &Dataset) -> Result<()> {
        check_layout(data, self.n_w, self.n_z)
    }
}

type MomentFn = dyn Fn(Obs<'_>, &[f64], &mut [f64]) + Send + Sync;

/// User-supplied moment function.
#[derive(Clone)]
pub struct CustomModel {
    p: usize,
    k: usize,
    f: Arc<MomentFn>,
}

impl CustomModel {
    pub fn new<F>(p: usize, k: usize, f: F) -> Self
    where
        F: Fn(Obs<'_>, &[f64], &mut [f64]) + Send + Sync + 'static,
    {
        Self { p, k, f: Arc::new(f) }
    }
}

impl std::fmt::Debug for CustomModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "CustomModel(p={}, k={})", self.p, self.k)
    }
}

impl MomentModel for CustomModel {
    fn n_params(&self) -> usize {
        self.p
    }

    fn n_moments(&self) -> usize {
        self.k
    }

    fn eval_into(&self, obs: Obs<'_>, theta: &[f64], out: &mut [f64]) {
        (self.f)(obs, theta, out)
    }
}

fn check_theta(model: &dyn MomentModel, theta: &[f64]) -> Result<()> {
    if theta.len() != model.n_params() {
        return Err(Error::DimensionMismatch {
            what: "parameter vector",
            expected: model.n_params(),
            got: theta.len(),
        });
    }
    Ok(())
}

/// `phi(x, theta)` for one observation.
pub fn eval_moment(model: &dyn MomentModel, obs: Obs<'_>, theta: &[f64]) -> Result<Vec<f64>> {
    check_theta(model, theta)?;
    let mut out = vec![0.0; model.n_moments()];
    model.eval_into(obs, theta, &mut out);
    if out.len() != model.n_moments() {
        return Err(Error::DimensionMismatch {
            what: "moment output",
            expected: model.n_moments(),
            got: out.len(),
        });
    }
    Ok(out)
}

/// The `n x k` matrix of `phi(x_i, theta)`, row-major in a flat vector.
pub fn moment_rows(data: &Dataset, model: &dyn MomentModel, theta: &[f64]) -> Result<Vec<f64>> {
    check_theta(model, theta)?;
    model.check_data(data)?;
    let k = model.n_moments();
    let mut rows = vec![0.0; data.n() * k];
    for (i, chunk) in rows.chunks_exact_mut(k).enumerate() {
        model.eval_into(data.obs(i), theta, chunk);
    }
    Ok(rows)
}

/// `g_n(theta) = n^{-1/2} sum_i phi(x_i, theta)`.
pub fn sample_moments(data: &Dataset, model: &dyn MomentModel, theta: &[f64]) -> Result<DVector<f64>> {
    let rows = moment_rows(data, model, theta)?;
    Ok(scaled_sum(&rows, model.n_moments(), data.n()))
}

fn scaled_sum(rows: &[f64], k: usize, n: usize) -> DVector<f64> {
    let mut g = DVector::zeros(k);
    for r in rows.chunks_exact(k) {
        for j in 0..k {
            g[j] += r[j];
        }
    }
    g / (n as f64).sqrt()
}

fn column_means(rows: &[f64], k: usize, n: usize) -> Vec<f64> {
    let mut m = vec![0.0; k];
    for r in rows.chunks_exact(k) {
        for j in 0..k {
            m[j] += r[j];
        }
    }
    m.iter_mut().for_each(|v| *v /= n as f64);
    m
}

/// Centered cross-covariance `(1/n) sum (a_i - a_bar)(b_i - b_bar)'` of two
/// `n x k` row blocks. Entry `(r, c)` accumulates in row order, so swapping the
/// arguments yields the exact transpose.
pub fn cross_covariance(a: &[f64], b: &[f64], k: usize, n: usize) -> DMatrix<f64> {
    let ma = column_means(a, k, n);
    let mb = column_means(b, k, n);
    let mut s = DMatrix::zeros(k, k);
    for (ra, rb) in a.chunks_exact(k).zip(b.chunks_exact(k)) {
        for r in 0..k {
            let da = ra[r] - ma[r];
            for c in 0..k {
                s[(r, c)] += da * (rb[c] - mb[c]);
            }
        }
    }
    s / n as f64
}

/// `Sigma_n(theta1, theta2)`, the centered sample cross-covariance with divisor `n`.
pub fn covariance(
    data: &Dataset,
    model: &dyn MomentModel,
    theta1: &[f64],
    theta2: &[f64],
) -> Result<DMatrix<f64>> {
    if data.n() < 2 {
        return Err(Error::InsufficientData { n: data.n(), required: 2 });
    }
    let a = moment_rows(data, model, theta1)?;
    let b = moment_rows(data, model, theta2)?;
    Ok(cross_covariance(&a, &b, model.n_moments(), data.n()))
}

/// Ridge policy: when the smallest eigenvalue of `Sigma` falls below
/// `floor * trace/k`, `eps * trace/k` is added to the diagonal.
/// `eps == 0` disables regularization and makes that case an error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ridge {
    pub eps: f64,
    pub floor: f64,
}

impl Default for Ridge {
    fn default() -> Self {
        Self { eps: 1e-8, floor: 1e-10 }
    }
}

impl Ridge {
    pub const fn disabled() -> Self {
        Self { eps: 0.0, floor: 1e-10 }
    }
}

/// Inverse of a (possibly ridged) covariance block.
#[derive(Debug, Clone)]
pub enum CovInverse {
    /// Regular inverse and the ridge actually added (0 when none).
    Full { inv: DMatrix<f64>, ridge: f64 },
    /// The covariance is exactly zero: every moment is constant in the sample.
    Zero,
}

impl CovInverse {
    /// `g' inv g`; with a zero covariance this is `0` for `g == 0` and `+inf` otherwise.
    pub fn quad(&self, g: &DVector<f64>) -> f64 {
        match self {
            CovInverse::Full { inv, .. } => {
                let v = g.dot(&(inv * g));
                v.max(0.0)
            }
            CovInverse::Zero => {
                if g.iter().all(|v| *v == 0.0) {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
        }
    }

    pub fn ridge(&self) -> f64 {
        match self {
            CovInverse::Full { ridge, .. } => *ridge,
            CovInverse::Zero => 0.0,
        }
    }
}

/// Invert `sigma` under the ridge policy.
pub fn regularized_inverse(sigma: &DMatrix<f64>, ridge: Ridge) -> Result<CovInverse> {
    let k = sigma.nrows();
    let (vals, vecs) = linalg::sym_eigen(sigma);
    let vals: Vec<f64> = vals.iter().map(|v| v.max(0.0)).collect();
    let trace: f64 = vals.iter().sum();
    if !(trace > 0.0) {
        if ridge.eps > 0.0 {
            return Ok(CovInverse::Zero);
        }
        return Err(Error::DegenerateCovariance("covariance is zero".into()));
    }
    let scale = trace / k as f64;
    let min = vals.iter().cloned().fold(f64::INFINITY, f64::min);
    let added = if min < ridge.floor * scale {
        if ridge.eps <= 0.0 {
            return Err(Error::DegenerateCovariance(format!(
                "smallest eigenvalue {min:e} below floor with ridge disabled"
            )));
        }
        ridge.eps * scale
    } else {
        0.0
    };
    let d = DMatrix::from_diagonal(&DVector::from_iterator(k, vals.iter().map(|v| 1.0 / (v + added))));
    let inv = &vecs * d * vecs.transpose();
    Ok(CovInverse::Full {
        inv: linalg::symmetrize(&inv),
        ridge: added,
    })
}

/// `g' (Sigma + ridge)^{-1} g`.
pub fn quadratic_form(g: &DVector<f64>, sigma: &DMatrix<f64>, ridge: Ridge) -> Result<f64> {
    Ok(regularized_inverse(sigma, ridge)?.quad(g))
}

/// `g_n`, `Sigma_n(theta, theta)`, `Q_n` and the ridge used, at one point.
#[derive(Debug, Clone)]
pub struct MomentStats {
    pub g: DVector<f64>,
    pub sigma: DMatrix<f64>,
    pub q: f64,
    pub ridge: f64,
}

pub fn moment_stats(
    data: &Dataset,
    model: &dyn MomentModel,
    theta: &[f64],
    ridge: Ridge,
) -> Result<MomentStats> {
    if data.n() < 2 {
        return Err(Error::InsufficientData { n: data.n(), required: 2 });
    }
    let k = model.n_moments();
    check_theta(model, theta)?;
    model.check_data(data)?;
    let (g, sigma) = match model.moment_sums(data, theta) {
        Some((sum, outer)) => {
            let n = data.n() as f64;
            let mean = DVector::from_iterator(k, sum.iter().map(|v| v / n));
            let second = DMatrix::from_row_slice(k, k, &outer) / n;
            (mean.clone() * n.sqrt(), linalg::symmetrize(&(second - &mean * mean.transpose())))
        }
        None => {
            let rows = moment_rows(data, model, theta)?;
            (scaled_sum(&rows, k, data.n()), cross_covariance(&rows, &rows, k, data.n()))
        }
    };
    let inv = regularized_inverse(&sigma, ridge)?;
    Ok(MomentStats {
        q: inv.quad(&g),
        ridge: inv.ridge(),
        g,
        sigma,
    })
}

/// `Q_n(theta) = g_n' (Sigma_n(theta, theta) [+ ridge])^{-1} g_n`.
pub fn cue_objective(data: &Dataset, model: &dyn MomentModel, theta: &[f64], ridge: Ridge) -> Result<f64> {
    Ok(moment_stats(data, model, theta, ridge)?.q)
}

/// Search settings for [`cue_estimate`].
#[derive(Debug, Clone)]
pub struct CueSearchConfig {
    /// Points per axis of the coarse scan used to pick the sampler start (0 skips the scan).
    pub scan_per_axis: usize,
    pub slice: SliceConfig,
    /// Number of best visited points refined by Nelder–Mead.
    pub n_refine: usize,
    pub nelder_mead: NelderMeadConfig,
    pub ridge: Ridge,
}

impl Default for CueSearchConfig {
    fn default() -> Self {
        Self {
            scan_per_axis: 21,
            slice: SliceConfig::default(),
            n_refine: 5,
            nelder_mead: NelderMeadConfig {
                max_evals: 400,
                xtol: 1e-8,
                ftol: 1e-10,
                restarts: 1,
            },
            ridge: Ridge::default(),
        }
    }
}

impl CueSearchConfig {
    /// A shorter search for Monte Carlo loops over many datasets.
    pub fn fast() -> Self {
        Self {
            scan_per_axis: 21,
            slice: SliceConfig {
                n_draws: 1500,
                burn_in: 0,
                thin: 1,
                ..SliceConfig::default()
            },
            n_refine: 5,
            nelder_mead: NelderMeadConfig {
                max_evals: 150,
                xtol: 1e-6,
                ftol: 1e-9,
                restarts: 0,
            },
            ridge: Ridge::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CueEstimate {
    pub theta: Vec<f64>,
    pub q: f64,
}

/// Keeps the `cap` lowest-objective distinct points offered to it.
struct BestPoints {
    cap: usize,
    items: Vec<(f64, Vec<f64>)>,
}

impl BestPoints {
    fn new(cap: usize) -> Self {
        Self { cap, items: Vec::new() }
    }

    fn offer(&mut self, q: f64, x: &[f64]) {
        if !q.is_finite() {
            return;
        }
        if self.items.len() == self.cap && q >= self.items[self.cap - 1].0 {
            return;
        }
        if self.items.iter().any(|(_, y)| y.as_slice() == x) {
            return;
        }
        let pos = self.items.partition_point(|(v, _)| *v <= q);
        self.items.insert(pos, (q, x.to_vec()));
        self.items.truncate(self.cap);
    }
}

/// CUE point estimate: flat-prior slice sampling of `exp(-Q/2)` over the box,
/// then Nelder–Mead from the best visited points. Returns the lowest `Q_n` seen.
pub fn cue_estimate(
    data: &Dataset,
    model: &dyn MomentModel,
    bounds: &ParamBox,
    cfg: &CueSearchConfig,
    seed: u64,
) -> Result<CueEstimate> {
    cue_estimate_from(data, model, bounds, cfg, seed, &[])
}

/// [`cue_estimate`] with extra candidate starting points, which compete with
/// the scan for the sampler start and for Nelder–Mead refinement.
pub fn cue_estimate_from(
    data: &Dataset,
    model: &dyn MomentModel,
    bounds: &ParamBox,
    cfg: &CueSearchConfig,
    seed: u64,
    starts: &[Vec<f64>],
) -> Result<CueEstimate> {
    if bounds.dim() != model.n_params() {
        return Err(Error::DimensionMismatch {
            what: "parameter box",
            expected: model.n_params(),
            got: bounds.dim(),
        });
    }
    model.check_data(data)?;
    let objective = |x: &[f64]| -> f64 {
        if !bounds.contains(x) {
            return f64::INFINITY;
        }
        cue_objective(data, model, x, cfg.ridge).unwrap_or(f64::INFINITY)
    };
    let best = RefCell::new(BestPoints::new(cfg.n_refine.max(1)));
    let tracked = |x: &[f64]| -> f64 {
        let q = objective(x);
        best.borrow_mut().offer(q, x);
        q
    };

    // Starting point: box center, then a coarse scan, then random points.
    let mut start: Option<(f64, Vec<f64>)> = None;
    let consider = |start: &mut Option<(f64, Vec<f64>)>, x: Vec<f64>| {
        let q = tracked(&x);
        if q.is_finite() && start.as_ref().is_none_or(|(s, _)| q < *s) {
            *start = Some((q, x));
        }
    };
    consider(&mut start, bounds.center());
    for x in starts {
        if x.len() != bounds.dim() {
            return Err(Error::DimensionMismatch {
                what: "starting point",
                expected: bounds.dim(),
                got: x.len(),
            });
        }
        consider(&mut start, x.clone());
    }
    if cfg.scan_per_axis > 0 {
        let grid = GridSpec::over_box(bounds, &vec![cfg.scan_per_axis; bounds.dim()])?;
        for i in 0..grid.len() {
            consider(&mut start, grid.point(i));
        }
    }
    if start.is_none() {
        use rand::Rng;
        let mut r = rng::stream(seed, &[0xC0E]);
        for _ in 0..64 {
            let x: Vec<f64> = bounds
                .lower
                .iter()
                .zip(&bounds.upper)
                .map(|(l, u)| l + (u - l) * r.random::<f64>())
                .collect();
            consider(&mut start, x);
        }
    }
    let (_, init) = start.ok_or_else(|| {
        Error::SamplerInit("objective is infinite at every initial point".into())
    })?;

    let mut log_density = |x: &[f64]| -0.5 * tracked(x);
    let mut slice_cfg = cfg.slice.clone();
    if slice_cfg.widths.is_none() {
        slice_cfg.widths = Some(bounds.widths().iter().map(|w| w / 20.0).collect());
    }
    slice_sample(&mut log_density, &init, &slice_cfg, rng::child_seed(seed, &[1]))?;

    let refine = best.borrow().items.clone();
    let step: Vec<f64> = bounds.widths().iter().map(|w| w / 100.0).collect();
    let mut winner = refine[0].clone();
    for (q0, x0) in refine {
        let m = nelder_mead(tracked, &x0, &step, Some(bounds), &cfg.nelder_mead);
        if m.value < winner.0 {
            winner = (m.value, m.x);
        } else if q0 < winner.0 {
            winner = (q0, x0);
        }
    }
    Ok(CueEstimate {
        theta: winner.1,
        q: winner.0,
    })
}
