//! Subcommand bodies. Each writes its artifacts and a `manifest.json` into the output directory.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use qbgmm::exec;
use qbgmm::limit_lab::{self, FiniteExperiment};
use qbgmm::moments::{self, ColumnMapping, CueSearchConfig, Dataset, LinearIv, MomentModel, QuantileIv, Ridge};
use qbgmm::optim::NelderMeadConfig;
use qbgmm::param::{GridSpec, ParamBox};
use qbgmm::quasi_bayes::{self, ActionSpace, Loss, LossSpec, Prior, SliceConfig};
use qbgmm::rng;
use qbgmm::robust::{self, TestConfig};
use qbgmm::sim_harness::{self, CalibratedDesign, ReplicationConfig, Source};
use serde::Serialize;

use crate::config::{Manifest, ModelKind, RunConfig, SourceName};
use crate::fail::Failure;
use crate::svg;
use crate::Command;

pub fn run(cmd: Command, cfg: RunConfig) -> Result<(), Failure> {
    cfg.validate_for(cmd)?;
    let out = cfg.out.clone();
    fs::create_dir_all(&out).map_err(|e| Failure::config(format!("{}: {e}", out.display())))?;
    let workers = cfg.workers;
    exec::with_workers(workers, || match cmd {
        Command::Fit => fit(&cfg, &out),
        Command::Posterior => posterior(&cfg, &out),
        Command::Test => test(&cfg, &out),
        Command::Confset => confset(&cfg, &out),
        Command::Limitlab => limitlab(&cfg, &out),
        Command::Simulate => simulate(&cfg, &out),
        Command::Plot => plot(&cfg, &out),
    })?;
    write_manifest(cmd, &cfg, &out)
}

impl RunConfig {
    /// Everything but `plot` draws on the seed, so only `plot` may omit it.
    fn validate_for(&self, cmd: Command) -> Result<(), Failure> {
        if cmd == Command::Plot {
            let mut c = self.clone();
            c.seed.get_or_insert(0);
            c.validate()
        } else {
            self.validate()
        }
    }
}

fn write_manifest(cmd: Command, cfg: &RunConfig, out: &Path) -> Result<(), Failure> {
    let m = Manifest {
        version: env!("CARGO_PKG_VERSION").into(),
        command: cmd.name().into(),
        seed: cfg.seed,
        config: cfg.clone(),
    };
    write_json(&out.join("manifest.json"), &m)
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(v).map_err(|e| Failure::numerical(e.to_string()))?;
    write_text(path, &(text + "\n"))
}

fn write_text(path: &Path, s: &str) -> Result<(), Failure> {
    fs::write(path, s).map_err(|e| Failure::data(format!("{}: {e}", path.display())))
}

/// Roles from the config mapping, or else from the header: `y`, then `w1, w2, ..`
/// and `z1, z2, ..` in numeric order.
pub fn column_mapping(path: &Path, given: Option<&ColumnMapping>) -> Result<ColumnMapping, Failure> {
    if let Some(m) = given {
        return Ok(m.clone());
    }
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Failure::data(format!("{}: {e}", path.display())))?;
    let headers = rdr
        .headers()
        .map_err(|e| Failure::data(format!("{}: {e}", path.display())))?
        .clone();
    let numbered = |prefix: char| -> Vec<String> {
        let mut v: Vec<(usize, String)> = headers
            .iter()
            .filter_map(|h| {
                let rest = h.strip_prefix(prefix)?;
                rest.parse::<usize>().ok().map(|i| (i, h.to_string()))
            })
            .collect();
        v.sort();
        v.into_iter().map(|(_, h)| h).collect()
    };
    let z = numbered('z');
    // Instruments are numbered from 1 without gaps; a hole is a missing column.
    for (i, name) in z.iter().enumerate() {
        let want = format!("z{}", i + 1);
        if *name != want {
            return Err(Failure::data(format!("missing column `{want}`")));
        }
    }
    let w = numbered('w');
    for (i, name) in w.iter().enumerate() {
        let want = format!("w{}", i + 1);
        if *name != want {
            return Err(Failure::data(format!("missing column `{want}`")));
        }
    }
    if z.is_empty() {
        return Err(Failure::data("missing column `z1`".into()));
    }
    Ok(ColumnMapping { y: "y".into(), w, z })
}

pub fn load_dataset(cfg: &RunConfig) -> Result<Dataset, Failure> {
    let d = cfg
        .data
        .as_ref()
        .ok_or_else(|| Failure::config("this command needs a dataset; pass --data".into()))?;
    let mapping = column_mapping(&d.path, d.columns.as_ref())?;
    Ok(Dataset::from_csv(&d.path, &mapping)?)
}

fn build_model(cfg: &RunConfig, data: &Dataset) -> Result<Box<dyn MomentModel>, Failure> {
    Ok(match cfg.model.kind {
        ModelKind::QuantileIv => Box::new(QuantileIv::new(cfg.model.tau, data.n_w(), data.n_z())?),
        ModelKind::LinearIv => Box::new(LinearIv {
            n_w: data.n_w(),
            n_z: data.n_z(),
        }),
    })
}

fn build_prior(cfg: &RunConfig, p: usize) -> Result<Prior, Failure> {
    let b = cfg.prior_box()?;
    if b.dim() != p {
        return Err(Failure::config(format!("prior box has {} coordinates, the model has {p}", b.dim())));
    }
    let density = cfg.prior.as_ref().map_or("flat", |p| p.density.as_str());
    Ok(match density {
        "normal" => {
            let center = b.center();
            let sd: Vec<f64> = b.widths().iter().map(|w| w / 4.0).collect();
            Prior::with_log_density(b, move |x| {
                -0.5 * x
                    .iter()
                    .zip(center.iter().zip(&sd))
                    .map(|(v, (c, s))| ((v - c) / s).powi(2))
                    .sum::<f64>()
            })
        }
        _ => Prior::flat(b),
    })
}

fn grid_for(cfg: &RunConfig, p: usize) -> Result<GridSpec, Failure> {
    let g = cfg.grid_spec()?;
    if g.dim() != p {
        return Err(Failure::config(format!("grid has {} axes, the model has {p} parameters", g.dim())));
    }
    Ok(g)
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x}")).collect::<Vec<_>>().join(",")
}

fn fit(cfg: &RunConfig, out: &Path) -> Result<(), Failure> {
    let data = load_dataset(cfg)?;
    let model = build_model(cfg, &data)?;
    let b = cfg.prior_box()?;
    let seed = cfg.seed()?;
    let mut search = CueSearchConfig::default();
    search.slice.n_draws = cfg.mcmc.draws.min(search.slice.n_draws);
    let est = moments::cue_estimate(&data, model.as_ref(), &b, &search, seed)?;

    #[derive(Serialize)]
    struct Fit<'a> {
        n: usize,
        theta: &'a [f64],
        q: f64,
    }
    write_json(&out.join("fit.json"), &Fit { n: data.n(), theta: &est.theta, q: est.q })?;
    let mut s = String::new();
    let _ = writeln!(s, "n = {}", data.n());
    let _ = writeln!(s, "theta_hat = {}", join(&est.theta));
    let _ = writeln!(s, "Q_min = {}", est.q);
    let _ = writeln!(s, "seed = {seed}");
    write_text(&out.join("summary.txt"), &s)?;

    if b.dim() == 2 {
        let grid = grid_for(cfg, 2)?;
        let q = exec::map_indexed(grid.len(), |i| {
            moments::cue_objective(&data, model.as_ref(), &grid.point(i), Ridge::default()).unwrap_or(f64::NAN)
        });
        let mut w = csv_writer(&out.join("objective.csv"))?;
        record(&mut w, ["theta_1", "theta_2", "Q"].map(String::from))?;
        for (i, v) in q.iter().enumerate() {
            let p = grid.point(i);
            record(&mut w, [format!("{}", p[0]), format!("{}", p[1]), format!("{v}")])?;
        }
        w.flush()?;
    }
    Ok(())
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>, Failure> {
    csv::Writer::from_path(path).map_err(|e| Failure::data(format!("{}: {e}", path.display())))
}

fn record<I, S>(w: &mut csv::Writer<fs::File>, rec: I) -> Result<(), Failure>
where
    I: IntoIterator<Item = S>,
    S: AsRef<[u8]>,
{
    w.write_record(rec).map_err(|e| Failure::data(e.to_string()))
}

fn posterior(cfg: &RunConfig, out: &Path) -> Result<(), Failure> {
    let data = load_dataset(cfg)?;
    let model = build_model(cfg, &data)?;
    let prior = build_prior(cfg, model.n_params())?;
    let seed = cfg.seed()?;
    let slice = SliceConfig {
        n_draws: cfg.mcmc.draws,
        burn_in: cfg.mcmc.burn_in,
        thin: cfg.mcmc.thin,
        ..SliceConfig::default()
    };
    let ridge = Ridge::default();
    let mc = quasi_bayes::sample_quasi_posterior(&data, model.as_ref(), &prior, ridge, &slice, cfg.mcmc.chains, seed)?;
    let draws = &mc.pooled;
    draws.write_csv(out.join("draws.csv"))?;

    let mut s = draws.summary();
    let _ = writeln!(s, "chains = {}", mc.chains.len());
    for (j, r) in mc.rhat.iter().enumerate() {
        let _ = writeln!(s, "theta_{}.rhat = {r}", j + 1);
    }
    let _ = writeln!(s, "converged = {}", mc.converged);
    let nm = NelderMeadConfig::default();
    let mean = quasi_bayes::decision_rule(
        draws,
        &LossSpec {
            actions: ActionSpace::Box(prior.support.clone()),
            loss: Loss::SquaredError,
        },
        &nm,
    )?;
    let median = quasi_bayes::decision_rule(
        draws,
        &LossSpec {
            actions: ActionSpace::Box(prior.support.clone()),
            loss: Loss::Check { tau: 0.5 },
        },
        &nm,
    )?;
    let _ = writeln!(s, "bayes_squared_error = {}", join(&mean));
    let _ = writeln!(s, "bayes_absolute_error = {}", join(&median));

    if cfg.grid.is_some() || prior.support.dim() <= 2 {
        let grid = grid_for(cfg, model.n_params())?;
        let ld = |x: &[f64]| quasi_bayes::log_quasi_posterior(&data, model.as_ref(), &prior, x, ridge);
        let hpd = quasi_bayes::hpd_region(draws, cfg.alpha, &grid, &ld)?;
        let _ = writeln!(s, "hpd.alpha = {}", cfg.alpha);
        let _ = writeln!(s, "hpd.fraction = {}", hpd.fraction);
        let _ = writeln!(s, "hpd.log_threshold = {}", hpd.log_threshold);
        let mut w = csv_writer(&out.join("hpd.csv"))?;
        let mut header: Vec<String> = (1..=grid.dim()).map(|j| format!("theta_{j}")).collect();
        header.push("member".into());
        record(&mut w, header)?;
        for (i, m) in hpd.members.iter().enumerate() {
            let mut rec: Vec<String> = grid.point(i).iter().map(|v| format!("{v}")).collect();
            rec.push(u8::from(*m).to_string());
            record(&mut w, rec)?;
        }
        w.flush()?;
    }
    write_text(&out.join("summary.txt"), &s)
}

fn test(cfg: &RunConfig, out: &Path) -> Result<(), Failure> {
    let data = load_dataset(cfg)?;
    let model = build_model(cfg, &data)?;
    let prior = build_prior(cfg, model.n_params())?;
    let grid = grid_for(cfg, model.n_params())?;
    let theta0 = cfg
        .theta0
        .as_ref()
        .ok_or_else(|| Failure::config("`test` needs --theta0".into()))?;
    if theta0.len() != model.n_params() {
        return Err(Failure::config(format!(
            "theta0 has {} coordinates, the model has {}",
            theta0.len(),
            model.n_params()
        )));
    }
    let weights = robust::grid_weights(&grid, &prior)?;
    let tc = TestConfig {
        alpha: cfg.alpha,
        draws: cfg.cond_draws,
        ridge: Ridge::default(),
    };
    let o = robust::robust_test_data(&data, model.as_ref(), &grid, &weights, theta0, &tc, cfg.seed()?)?;

    #[derive(Serialize)]
    struct TestJson<'a> {
        theta0: &'a [f64],
        t: f64,
        c_alpha: f64,
        reject: bool,
        tie: bool,
        alpha: f64,
        cond_draws: usize,
        seed: u64,
    }
    write_json(
        &out.join("test.json"),
        &TestJson {
            theta0,
            t: o.t,
            c_alpha: o.c_alpha,
            reject: o.reject,
            tie: o.tie,
            alpha: cfg.alpha,
            cond_draws: o.draws,
            seed: o.seed,
        },
    )?;
    let mut s = String::new();
    let _ = writeln!(s, "theta0 = {}", join(theta0));
    let _ = writeln!(s, "T = {}", o.t);
    let _ = writeln!(s, "c_alpha = {}", o.c_alpha);
    let _ = writeln!(s, "reject = {}", o.reject);
    let _ = writeln!(s, "tie = {}", o.tie);
    write_text(&out.join("summary.txt"), &s)
}

fn confset(cfg: &RunConfig, out: &Path) -> Result<(), Failure> {
    let data = load_dataset(cfg)?;
    let model = build_model(cfg, &data)?;
    let prior = build_prior(cfg, model.n_params())?;
    let grid = grid_for(cfg, model.n_params())?;
    let weights = robust::grid_weights(&grid, &prior)?;
    let tc = TestConfig {
        alpha: cfg.alpha,
        draws: cfg.cond_draws,
        ridge: Ridge::default(),
    };
    let cs = robust::confidence_set(&data, model.as_ref(), &grid, &weights, &tc, cfg.seed()?)?;
    cs.write_csv(out.join("confset.csv"))?;
    write_text(&out.join("summary.txt"), &cs.summary())
}

fn limitlab(cfg: &RunConfig, out: &Path) -> Result<(), Failure> {
    let spec = cfg
        .experiment
        .as_ref()
        .ok_or_else(|| Failure::config("`limitlab` needs an experiment spec; pass --experiment".into()))?;
    let exp = FiniteExperiment::from_spec(spec)?;
    let seed = cfg.seed()?;
    let rows = limit_lab::rejection_table(&exp, cfg.alpha, cfg.reps, cfg.cond_draws, rng::child_seed(seed, &[0]))?;
    let mut w = csv_writer(&out.join("rejection_rates.csv"))?;
    for r in &rows {
        w.serialize(r).map_err(|e| Failure::data(e.to_string()))?;
    }
    w.flush()?;

    // Bayes actions along increasing lambda for one draw of the experiment.
    let g = limit_lab::simulate_draw(&exp, rng::child_seed(seed, &[1]));
    let (lo, hi) = spec
        .labels
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
    let actions = if hi > lo {
        ActionSpace::Box(ParamBox::new(vec![lo], vec![hi])?)
    } else {
        ActionSpace::Finite(vec![vec![lo]])
    };
    let lambdas: Vec<f64> = (0..=8).map(|e| 10f64.powi(e)).collect();
    let lob = limit_lab::limit_of_bayes(
        &exp,
        &g,
        &LossSpec {
            actions,
            loss: Loss::SquaredError,
        },
        &lambdas,
        &NelderMeadConfig::default(),
    )?;
    let mut w = csv_writer(&out.join("gaps.csv"))?;
    record(&mut w, ["lambda", "action", "limit_action", "gap"].map(String::from))?;
    for ((l, a), gap) in lob.lambdas.iter().zip(&lob.actions).zip(&lob.gaps) {
        record(&mut w, [format!("{l}"), join(a), join(&lob.limit_action), format!("{gap}")])?;
    }
    w.flush()?;

    let mut s = String::new();
    let _ = writeln!(s, "r = {}", spec.r);
    let _ = writeln!(s, "k = {}", spec.k);
    let _ = writeln!(s, "reps = {}", cfg.reps);
    let _ = writeln!(s, "alpha = {}", cfg.alpha);
    let _ = writeln!(s, "cond_draws = {}", cfg.cond_draws);
    for r in &rows {
        let _ = writeln!(s, "rate.{} = {}", r.label, r.rate);
    }
    let _ = writeln!(s, "limit_action = {}", join(&lob.limit_action));
    let _ = writeln!(s, "seed = {seed}");
    write_text(&out.join("summary.txt"), &s)
}

fn simulate(cfg: &RunConfig, out: &Path) -> Result<(), Failure> {
    let data = load_dataset(cfg)?;
    if cfg.model.kind != ModelKind::QuantileIv {
        return Err(Failure::config("`simulate` supports the quantile IV model only".into()));
    }
    let b = cfg.prior_box()?;
    let seed = cfg.seed()?;
    let tau = cfg.model.tau;
    let sim = &cfg.simulate;
    let rep_cfg = ReplicationConfig::new(sim.reps);
    let theta_hat = match &sim.theta {
        Some(t) => t.clone(),
        None => {
            let model = QuantileIv::new(tau, data.n_w(), data.n_z())?;
            sim_harness::seeded_cue_estimate(&data, &model, &b, &rep_cfg, rng::child_seed(seed, &[0]))?.theta
        }
    };
    let design = CalibratedDesign::new(data, tau, theta_hat)?;
    let n = sim.n.unwrap_or(design.n0);
    let source = match sim.source {
        SourceName::Pstar => Source::PStar,
        SourceName::P0 => Source::P0,
        SourceName::Mixture => Source::Mixture,
    };
    let dist = sim_harness::estimator_distribution(&design, n, source, &b, &rep_cfg, rng::child_seed(seed, &[1]))?;
    let p = design.theta_hat.len();
    dist.write_csv(out.join("replications.csv"), p)?;
    let mut s = String::new();
    let _ = writeln!(s, "theta_calibration = {}", join(&design.theta_hat));
    let _ = writeln!(s, "n0 = {}", design.n0);
    let _ = writeln!(s, "jitter_sd = {}", design.jitter_sd);
    let _ = writeln!(s, "source = {:?}", sim.source);
    s.push_str(&dist.summary());
    let _ = writeln!(s, "seed = {seed}");
    write_text(&out.join("summary.txt"), &s)
}

/// Numeric columns of a CSV by header name.
struct Table {
    header: Vec<String>,
    cols: Vec<Vec<f64>>,
}

impl Table {
    fn read(path: &Path) -> Result<Self, Failure> {
        let mut rdr = csv::Reader::from_path(path).map_err(|e| Failure::data(format!("{}: {e}", path.display())))?;
        let header: Vec<String> = rdr
            .headers()
            .map_err(|e| Failure::data(format!("{}: {e}", path.display())))?
            .iter()
            .map(String::from)
            .collect();
        let mut cols = vec![Vec::new(); header.len()];
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| Failure::data(format!("{} row {}: {e}", path.display(), row + 1)))?;
            for (c, v) in rec.iter().enumerate().take(header.len()) {
                cols[c].push(v.parse().unwrap_or(f64::NAN));
            }
        }
        Ok(Self { header, cols })
    }

    fn col(&self, name: &str) -> Result<&[f64], Failure> {
        self.header
            .iter()
            .position(|h| h == name)
            .map(|i| self.cols[i].as_slice())
            .ok_or_else(|| Failure::data(format!("missing column `{name}`")))
    }
}

/// Sorted distinct values, which recover the axes of a row-major grid.
fn distinct(v: &[f64]) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(f64::total_cmp);
    u.dedup();
    u
}

fn plot(cfg: &RunConfig, out: &Path) -> Result<(), Failure> {
    let input: PathBuf = cfg
        .input
        .clone()
        .ok_or_else(|| Failure::config("`plot` needs --input, the directory of an earlier run".into()))?;
    let mut made = Vec::new();

    let draws = input.join("draws.csv");
    if draws.exists() {
        let t = Table::read(&draws)?;
        let svg = svg::posterior_scatter(t.col("theta_1")?, t.col("theta_2")?, "theta_1", "theta_2");
        write_text(&out.join("posterior.svg"), &svg)?;
        made.push("posterior.svg");
    }

    let objective = input.join("objective.csv");
    if objective.exists() {
        let t = Table::read(&objective)?;
        let xs = distinct(t.col("theta_1")?);
        let ys = distinct(t.col("theta_2")?);
        let values = t.col("Q")?;
        if xs.len() * ys.len() != values.len() {
            return Err(Failure::data("objective.csv is not a full grid".into()));
        }
        let top = values.iter().cloned().filter(|v| v.is_finite()).fold(f64::INFINITY, f64::min);
        let levels: Vec<f64> = (0..8).map(|e| top + 2f64.powi(e)).collect();
        let svg = svg::contours(
            &svg::GridValues { xs: &xs, ys: &ys, values },
            &levels,
            "theta_1",
            "theta_2",
            "CUE objective",
        );
        write_text(&out.join("objective.svg"), &svg)?;
        made.push("objective.svg");
    }

    let cs = input.join("confset.csv");
    let hpd = input.join("hpd.csv");
    let mut layers: Vec<(&str, &str, Vec<bool>)> = Vec::new();
    let mut axes = None;
    for (path, name, color, col) in [(&cs, "confidence set", "firebrick", "reject"), (&hpd, "HPD set", "steelblue", "member")] {
        if !path.exists() {
            continue;
        }
        let t = Table::read(path)?;
        if !t.header.iter().any(|h| h == "theta_2") {
            continue;
        }
        let xs = distinct(t.col("theta_1")?);
        let ys = distinct(t.col("theta_2")?);
        let flag = t.col(col)?;
        let members: Vec<bool> = flag.iter().map(|v| if col == "reject" { *v == 0.0 } else { *v == 1.0 }).collect();
        if xs.len() * ys.len() != members.len() {
            return Err(Failure::data(format!("{} is not a full grid", path.display())));
        }
        match &axes {
            None => axes = Some((xs, ys)),
            Some((ax, ay)) if *ax != xs || *ay != ys => {
                return Err(Failure::data("confidence set and HPD set use different grids".into()))
            }
            _ => {}
        }
        layers.push((name, color, members));
    }
    if let Some((xs, ys)) = axes {
        write_text(&out.join("setmap.svg"), &svg::set_map(&xs, &ys, &layers, "theta_1", "theta_2"))?;
        made.push("setmap.svg");
    }
    if made.is_empty() {
        return Err(Failure::data(format!("{} holds no plottable CSV", input.display())));
    }
    Ok(())
}
