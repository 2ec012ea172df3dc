use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use qbgmm::moments::{cue_objective, moment_stats, sample_moments, CustomModel, Dataset, LinearIv, MomentModel, Ridge};
use qbgmm::quasi_bayes::{hpd_log_threshold, PosteriorDraws};
use qbgmm::robust::{residual_process, wap_statistic, GridProcess};
use qbgmm::sim_harness::tilt_weights;

/// A dataset with one regressor and `k` instruments (first constant) from a flat list of draws.
fn dataset(vals: &[f64], n: usize, k: usize) -> Dataset {
    let width = 2 + (k - 1);
    let mut y = Vec::new();
    let mut w = Vec::new();
    let mut z = Vec::new();
    for i in 0..n {
        let r = &vals[i * width..(i + 1) * width];
        y.push(r[0]);
        w.push(r[1] + 0.5 * r[2]);
        z.push(1.0);
        z.extend_from_slice(&r[2..]);
    }
    Dataset::new(y, w, z, 1, k).unwrap()
}

fn sample(n: usize, k: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-3.0f64..3.0, n * (1 + k))
}

proptest! {
    #![proptest_config(ProptestConfig {
        cases: 64,
        failure_persistence: None,
        ..ProptestConfig::default()
    })]

    /// Q is unchanged when the moments are recombined by an invertible matrix.
    #[test]
    fn objective_invariant_to_moment_recombination(
        vals in sample(40, 3),
        a in prop::collection::vec(-1.0f64..1.0, 9),
        theta in prop::collection::vec(-2.0f64..2.0, 2),
    ) {
        let data = dataset(&vals, 40, 3);
        let base = LinearIv { n_w: 1, n_z: 3 };
        let m = DMatrix::from_row_slice(3, 3, &a) + DMatrix::identity(3, 3) * 3.0;
        let mix = m.clone();
        let mixed = CustomModel::new(2, 3, move |obs, th, out| {
            let mut raw = [0.0; 3];
            base.eval_into(obs, th, &mut raw);
            let v = &mix * DVector::from_column_slice(&raw);
            out.copy_from_slice(v.as_slice());
        });
        let q0 = cue_objective(&data, &base, &theta, Ridge::default()).unwrap();
        let q1 = cue_objective(&data, &mixed, &theta, Ridge::default()).unwrap();
        prop_assert!((q0 - q1).abs() <= 1e-7 * (1.0 + q0), "{q0} vs {q1}");
    }

    /// Stacking the sample on itself scales g_n by sqrt(2), keeps Sigma_n and doubles Q.
    #[test]
    fn duplicated_sample_scales_root_n(vals in sample(30, 2), theta in prop::collection::vec(-2.0f64..2.0, 2)) {
        let data = dataset(&vals, 30, 2);
        let idx: Vec<usize> = (0..30).chain(0..30).collect();
        let twice = data.select(&idx).unwrap();
        let model = LinearIv { n_w: 1, n_z: 2 };
        let s1 = moment_stats(&data, &model, &theta, Ridge::default()).unwrap();
        let s2 = moment_stats(&twice, &model, &theta, Ridge::default()).unwrap();
        prop_assert!((&s2.g - &s1.g * 2f64.sqrt()).amax() <= 1e-9 * (1.0 + s1.g.amax()));
        prop_assert!((&s2.sigma - &s1.sigma).amax() <= 1e-9 * (1.0 + s1.sigma.amax()));
        prop_assert!((s2.q - 2.0 * s1.q).abs() <= 1e-7 * (1.0 + s1.q));
    }

    /// The row path and the one-pass sums agree for the quantile model.
    #[test]
    fn quantile_moment_paths_agree(vals in sample(25, 3), theta in prop::collection::vec(-2.0f64..2.0, 2), tau in 0.05f64..0.95) {
        let data = dataset(&vals, 25, 3);
        let q = qbgmm::moments::QuantileIv::new(tau, 1, 3).unwrap();
        let generic = CustomModel::new(2, 3, move |obs, th, out| q.eval_into(obs, th, out));
        let a = moment_stats(&data, &q, &theta, Ridge::default()).unwrap();
        let b = moment_stats(&data, &generic, &theta, Ridge::default()).unwrap();
        prop_assert!((&a.g - &b.g).amax() < 1e-12);
        prop_assert!((&a.sigma - &b.sigma).amax() < 1e-12);
        let direct = sample_moments(&data, &q, &theta).unwrap();
        prop_assert!((direct - &a.g).amax() < 1e-12);
    }

    /// Shifting every log density by a constant shifts the HPD threshold by the same constant.
    #[test]
    fn hpd_threshold_shifts_with_log_density(
        logs in prop::collection::vec(-20.0f64..0.0, 10..200),
        c in -50.0f64..50.0,
        alpha in 0.01f64..0.5,
    ) {
        let mk = |l: Vec<f64>| PosteriorDraws {
            draws: l.iter().map(|_| vec![0.0]).collect(),
            logdens: l,
            seed: 0,
            burn_in: 0,
            thin: 1,
            n_iter: 0,
        };
        let t0 = hpd_log_threshold(&mk(logs.clone()), alpha).unwrap();
        let t1 = hpd_log_threshold(&mk(logs.iter().map(|l| l + c).collect()), alpha).unwrap();
        prop_assert!((t1 - t0 - c).abs() < 1e-9);
    }

    /// Exponential tilting of centered rows meets the moment constraint.
    #[test]
    fn tilt_meets_constraint(rows in prop::collection::vec(-2.0f64..2.0, 2 * 30), shift in prop::collection::vec(-0.3f64..0.3, 2)) {
        let k = 2;
        let n = rows.len() / k;
        let mut phi = rows.clone();
        for c in 0..k {
            let mean = (0..n).map(|i| rows[i * k + c]).sum::<f64>() / n as f64;
            for i in 0..n {
                phi[i * k + c] += shift[c] - mean;
            }
        }
        // only meaningful when zero is comfortably inside the hull
        let spread_ok = (0..k).all(|c| {
            let v: Vec<f64> = (0..n).map(|i| phi[i * k + c]).collect();
            v.iter().cloned().fold(f64::INFINITY, f64::min) < -0.5 && v.iter().cloned().fold(f64::NEG_INFINITY, f64::max) > 0.5
        });
        prop_assume!(spread_ok);
        let t = tilt_weights(&phi, k).unwrap();
        prop_assert!(t.residual_norm(&phi, k) < 1e-8);
        prop_assert!((t.omega.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    /// The WAP statistic ignores the overall scale of the weights, and h vanishes at the null.
    #[test]
    fn wap_statistic_scale_free(g in prop::collection::vec(-2.0f64..2.0, 6), w in prop::collection::vec(0.1f64..1.0, 3), s in 0.1f64..10.0) {
        let sigma = DMatrix::from_fn(6, 6, |i, j| if i == j { 1.0 } else { 0.3f64.powi((i as i32 - j as i32).abs()) });
        let gp = GridProcess::from_gaussian(&DVector::from_vec(g), &sigma, 2, 1).unwrap();
        let t0 = wap_statistic(&gp, &w, Ridge::default()).unwrap();
        let scaled: Vec<f64> = w.iter().map(|v| v * s).collect();
        let t1 = wap_statistic(&gp, &scaled, Ridge::default()).unwrap();
        prop_assert!((t0 - t1).abs() <= 1e-10 * t0.max(1.0));
        let h = residual_process(&gp, Ridge::default()).unwrap();
        prop_assert_eq!(h[1].amax(), 0.0);
    }
}
