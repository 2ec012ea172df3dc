//! Derivative-free local minimization (Nelder–Mead with box projection).

use crate::param::ParamBox;

#[derive(Debug, Clone)]
pub struct NelderMeadConfig {
    pub max_evals: usize,
    /// Stop once the simplex diameter (inf-norm) falls below this.
    pub xtol: f64,
    /// ... and the spread of simplex values falls below this.
    pub ftol: f64,
    /// Extra simplex rebuilds around the incumbent after convergence.
    pub restarts: usize,
}

impl Default for NelderMeadConfig {
    fn default() -> Self {
        Self {
            max_evals: 4000,
            xtol: 1e-10,
            ftol: 1e-12,
            restarts: 2,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub evals: usize,
}

/// Minimize `f` from `x0`. `step[i]` sets the initial simplex edge on axis `i`.
/// With `bounds`, trial points are clamped into the box.
pub fn nelder_mead<F>(
    mut f: F,
    x0: &[f64],
    step: &[f64],
    bounds: Option<&ParamBox>,
    cfg: &NelderMeadConfig,
) -> Minimum
where
    F: FnMut(&[f64]) -> f64,
{
    let n = x0.len();
    let mut evals = 0usize;
    let mut eval = |x: &mut Vec<f64>, evals: &mut usize| -> f64 {
        if let Some(b) = bounds {
            b.clamp(x);
        }
        *evals += 1;
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };

    let mut best_x = x0.to_vec();
    let mut best_f = eval(&mut best_x, &mut evals);
    let mut scale: Vec<f64> = step.iter().map(|s| if *s == 0.0 { 1e-3 } else { *s }).collect();

    for _round in 0..=cfg.restarts {
        let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
        simplex.push((best_x.clone(), best_f));
        for i in 0..n {
            let mut x = best_x.clone();
            x[i] += scale[i];
            if let Some(b) = bounds {
                if x[i] > b.upper[i] {
                    x[i] = best_x[i] - scale[i];
                }
            }
            let v = eval(&mut x, &mut evals);
            simplex.push((x, v));
        }

        loop {
            simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
            let diam = simplex[1..]
                .iter()
                .flat_map(|(x, _)| x.iter().zip(&simplex[0].0).map(|(a, b)| (a - b).abs()))
                .fold(0.0f64, f64::max);
            let spread = (simplex[n].1 - simplex[0].1).abs();
            let flat = spread <= cfg.ftol || (simplex[n].1.is_infinite() && simplex[0].1.is_infinite());
            if (diam <= cfg.xtol && flat) || diam <= cfg.xtol * 1e-3 || evals >= cfg.max_evals {
                break;
            }
            let centroid: Vec<f64> = (0..n)
                .map(|j| simplex[..n].iter().map(|(x, _)| x[j]).sum::<f64>() / n as f64)
                .collect();
            let worst = simplex[n].clone();
            let along = |t: f64| -> Vec<f64> {
                centroid
                    .iter()
                    .zip(&worst.0)
                    .map(|(c, w)| c + t * (c - w))
                    .collect()
            };
            let mut xr = along(1.0);
            let fr = eval(&mut xr, &mut evals);
            if fr < simplex[0].1 {
                let mut xe = along(2.0);
                let fe = eval(&mut xe, &mut evals);
                simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
            } else if fr < simplex[n - 1].1 {
                simplex[n] = (xr, fr);
            } else {
                let (mut xc, fc) = if fr < worst.1 {
                    let mut x = along(0.5);
                    let v = eval(&mut x, &mut evals);
                    (x, v)
                } else {
                    let mut x = along(-0.5);
                    let v = eval(&mut x, &mut evals);
                    (x, v)
                };
                if fc < worst.1.min(fr) {
                    simplex[n] = (std::mem::take(&mut xc), fc);
                } else {
                    let x0 = simplex[0].0.clone();
                    for item in simplex.iter_mut().skip(1) {
                        let mut x: Vec<f64> =
                            x0.iter().zip(&item.0).map(|(a, b)| a + 0.5 * (b - a)).collect();
                        let v = eval(&mut x, &mut evals);
                        *item = (x, v);
                    }
                }
            }
        }
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let improved = simplex[0].1 < best_f;
        if simplex[0].1 <= best_f {
            best_x = simplex[0].0.clone();
            best_f = simplex[0].1;
        }
        if evals >= cfg.max_evals || (!improved && _round > 0) {
            break;
        }
        for s in scale.iter_mut() {
            *s *= 0.1;
        }
    }
    Minimum {
        x: best_x,
        value: best_f,
        evals,
    }
}

/// Golden-section search for a unimodal function on `[lo, hi]`.
pub fn golden_section<F: FnMut(f64) -> f64>(mut f: F, mut lo: f64, mut hi: f64, tol: f64) -> (f64, f64) {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = hi - r * (hi - lo);
    let mut d = lo + r * (hi - lo);
    let mut fc = f(c);
    let mut fd = f(d);
    while (hi - lo).abs() > tol {
        if fc <= fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - r * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + r * (hi - lo);
            fd = f(d);
        }
    }
    if fc <= fd {
        (c, fc)
    } else {
        (d, fd)
    }
}
