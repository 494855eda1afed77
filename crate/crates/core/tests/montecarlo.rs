mod common;

use std::f64::consts::PI;
use std::time::Duration;

use approx::assert_relative_eq;
use common::{diagonal_noise, system, Builder};
use massrd::model::{preset, NoiseCoefficients};
use massrd::montecarlo::{
    binomial_half_width, convolution_moment_check, coupled_summaries, estimate_moments, exponent_a, holder_estimate,
    lp_functional, multiwindow_moments, power_mean, run_paths, Accumulator, EnsembleOptions, ExponentRecord,
};
use massrd::solver::{simulate_path, SimulationConfig};
use massrd::spectral::BoundaryCondition;
use massrd::truncation::TruncationLevel;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn levels(ns: &[f64]) -> Vec<TruncationLevel> {
    ns.iter().map(|&n| TruncationLevel::new(n).unwrap()).collect()
}

fn brusselator(b: &Builder, s: f64) -> SimulationConfig {
    let (sys, noise) = preset("brusselator", s).unwrap();
    b.build(sys, noise, vec![b.field(|x| 2.0 + 0.1 * (PI * x).cos()), vec![1.0; b.n]])
}

#[test]
fn constant_paths_have_unit_moments() {
    let b = Builder { horizon: 0.05, ..Default::default() };
    let cfg = b.build(system(&["0"]), NoiseCoefficients::zero(1, 1), vec![vec![1.0; 64]]);
    let table = estimate_moments(&cfg, &levels(&[2.0, 4.0, 8.0]), 8.0, &EnsembleOptions::new(5)).unwrap();
    // u_0 is projected onto the basis, which costs a few ulps
    for row in &table.rows {
        assert_relative_eq!(row.moment, 1.0, max_relative = 1e-12);
        assert_eq!(row.half_width, 0.0);
        assert_eq!(row.blowup, 0.0);
        assert!(row.markov_ok);
    }
    assert_eq!(table.flatness, 0.0);
}

#[test]
fn convolution_vanishes_without_noise() {
    let cfg = brusselator(&Builder::default(), 0.0);
    let run = coupled_summaries(&cfg, &levels(&[4.0]), &EnsembleOptions::new(3)).unwrap();
    assert!(run.results[0].iter().all(|s| s.z_sup == 0.0));
}

#[test]
fn doubling_additive_noise_scales_moments_by_two_to_the_p() {
    let b = Builder::default();
    let p = 6.0;
    let moment = |s: &str| {
        let cfg = b.build(system(&["-u1"]), diagonal_noise(&[s]), vec![vec![0.0; 64]]);
        let run = coupled_summaries(&cfg, &levels(&[1e9]), &EnsembleOptions::new(40)).unwrap();
        Accumulator::from_samples(run.results[0].iter().map(|r| r.z_sup.powf(p))).mean()
    };
    assert_relative_eq!(moment("0.6") / moment("0.3"), 2f64.powf(p), max_relative = 1e-10);
}

#[test]
fn lp_functional_of_known_fields() {
    let b = Builder { horizon: 0.1, stride: Some(1), ..Default::default() };
    let ones = b.build(system(&["0", "0"]), NoiseCoefficients::zero(2, 1), vec![vec![1.0; 64]; 2]);
    let traj = simulate_path(&ones, 0).unwrap().trajectory.unwrap();
    for (t, y) in lp_functional(&traj, &b.domain(), 3.0) {
        assert_relative_eq!(y, 2.0 * t, epsilon = 1e-12);
    }
    let zeros = b.build(system(&["0"]), NoiseCoefficients::zero(1, 1), vec![vec![0.0; 64]]);
    let traj = simulate_path(&zeros, 0).unwrap().trajectory.unwrap();
    assert!(lp_functional(&traj, &b.domain(), 3.0).iter().all(|(_, y)| *y == 0.0));
}

#[test]
fn lp_functional_is_nondecreasing() {
    let b = Builder { horizon: 0.2, stride: Some(1), ..Default::default() };
    let traj = simulate_path(&brusselator(&b, 0.5), 3).unwrap().trajectory.unwrap();
    let y = lp_functional(&traj, &b.domain(), 4.0);
    assert!(y.windows(2).all(|w| w[1].1 >= w[0].1));
    assert!(y.last().unwrap().1 > 0.0);
}

#[test]
fn power_means_increase_with_p() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let xs: Vec<f64> = (0..200).map(|_| rng.gen_range(0.1..5.0)).collect();
    let ps = [1.0, 2.0, 4.0, 8.0, 16.0];
    let means: Vec<f64> = ps.iter().map(|&p| power_mean(&xs, p)).collect();
    assert!(means.windows(2).all(|w| w[1] >= w[0]));
    assert_eq!(power_mean(&[2.0; 5], 7.0), 2.0);
}

#[test]
fn accumulators_merge_associatively() {
    let xs: Vec<f64> = (0..50).map(|i| (i as f64 * 0.37).sin() + 2.0).collect();
    let whole = Accumulator::from_samples(xs.iter().copied());
    let merged = Accumulator::from_samples(xs[..20].iter().copied()).merge(Accumulator::from_samples(xs[20..].iter().copied()));
    assert_eq!(whole.count, merged.count);
    assert_relative_eq!(whole.mean(), merged.mean(), max_relative = 1e-14);
    assert_relative_eq!(whole.variance(), merged.variance(), max_relative = 1e-12);
    assert_eq!(whole.max, merged.max);
    let mean = xs.iter().sum::<f64>() / 50.0;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 49.0;
    assert_relative_eq!(whole.half_width(), 1.96 * (var / 50.0).sqrt(), max_relative = 1e-12);
}

#[test]
fn exponent_bookkeeping() {
    assert_relative_eq!(exponent_a(0.5, 12.0, 1), 1.5);
    assert_eq!(binomial_half_width(0.0, 100), 0.0);
    assert_relative_eq!(binomial_half_width(0.5, 100), 0.098, epsilon = 1e-12);
    let r = ExponentRecord::new(12.0, 0.5, 1);
    assert!(r.useful && r.hypothesis_ok);
    // (d+2)/p + d/(p-2) = 3/8 + 1/6 > 1/2
    let r = ExponentRecord::new(8.0, 0.5, 1);
    assert!(!r.hypothesis_ok);
    assert!(!ExponentRecord::new(3.0, 0.9, 2).useful);
}

#[test]
fn disjoint_seed_ranges_agree() {
    let b = Builder { horizon: 0.5, ..Default::default() };
    let cfg = brusselator(&b, 0.3);
    let ls = levels(&[32.0]);
    let first = estimate_moments(&cfg, &ls, 4.0, &EnsembleOptions { paths: 40, ..Default::default() }).unwrap();
    let second =
        estimate_moments(&cfg, &ls, 4.0, &EnsembleOptions { paths: 40, first_path: 40, ..Default::default() }).unwrap();
    let (a, c) = (&first.rows[0], &second.rows[0]);
    assert_ne!(a.moment, c.moment);
    assert!((a.moment - c.moment).abs() <= 3.0 * (a.half_width.powi(2) + c.half_width.powi(2)).sqrt());
}

#[test]
fn coupled_blowup_probabilities_decrease_with_level() {
    let b = Builder { horizon: 0.5, ..Default::default() };
    let cfg = brusselator(&b, 0.8);
    let table = estimate_moments(&cfg, &levels(&[2.5, 3.0, 4.0, 8.0]), 8.0, &EnsembleOptions::new(30)).unwrap();
    let blowups: Vec<f64> = table.rows.iter().map(|r| r.blowup).collect();
    assert!(blowups.windows(2).all(|w| w[1] <= w[0]), "{blowups:?}");
    assert!(blowups[0] > 0.0);
    assert!(table.markov_ok());
}

#[test]
fn ensembles_do_not_depend_on_thread_count() {
    let cfg = brusselator(&Builder { horizon: 0.1, ..Default::default() }, 0.5);
    let ls = levels(&[4.0, 8.0]);
    let one = estimate_moments(&cfg, &ls, 8.0, &EnsembleOptions { paths: 12, threads: Some(1), ..Default::default() });
    let four = estimate_moments(&cfg, &ls, 8.0, &EnsembleOptions { paths: 12, threads: Some(4), ..Default::default() });
    assert_eq!(one.unwrap(), four.unwrap());
}

#[test]
fn exhausted_budget_marks_partial_runs() {
    let opts = EnsembleOptions { paths: 6, threads: Some(1), budget: Some(Duration::ZERO), ..Default::default() };
    let run = run_paths(&opts, |id| {
        std::thread::sleep(Duration::from_millis(2));
        Ok(id)
    })
    .unwrap();
    assert!(run.partial);
    assert!(run.results.len() < 6);
    assert!(run_paths(&EnsembleOptions::new(0), |id| Ok(id)).is_err());
}

#[test]
fn holder_fits_of_reference_fields() {
    let ramp: Vec<f64> = (0..256).map(|j| j as f64 / 256.0).collect();
    let fit = holder_estimate(&ramp, 1.0 / 256.0, 2, 32).unwrap();
    assert_relative_eq!(fit.theta.unwrap(), 1.0, epsilon = 1e-10);
    assert_eq!(fit.lags, vec![2, 4, 8, 16, 32]);

    assert!(holder_estimate(&[3.0; 256], 1.0 / 256.0, 2, 32).unwrap().exact_smooth());
    assert!(holder_estimate(&ramp, 1.0 / 256.0, 16, 32).is_err());

    // random walk: mean |increment| grows like sqrt(lag)
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut walk = vec![0.0f64; 4096];
    for j in 1..walk.len() {
        walk[j] = walk[j - 1] + if rng.gen::<bool>() { 1.0 } else { -1.0 };
    }
    let theta = holder_estimate(&walk, 1.0, 4, 64).unwrap().theta.unwrap();
    assert!((theta - 0.5).abs() < 0.05, "{theta}");
}

#[test]
fn decaying_system_has_decreasing_window_suprema() {
    let b = Builder { horizon: 0.1, ..Default::default() };
    let cfg = b.build(system(&["-u1"]), NoiseCoefficients::zero(1, 1), vec![b.field(|x| 1.0 + x)]);
    let r = multiwindow_moments(&cfg, 4, 0.1, 4.0, &EnsembleOptions::new(2)).unwrap();
    let sups: Vec<f64> = r.windows.iter().map(|w| w.sup_mean).collect();
    assert!(sups.windows(2).all(|w| w[1] < w[0]), "{sups:?}");
    assert!(r.all_finite);
    assert!(multiwindow_moments(&cfg, 2, 0.00015, 4.0, &EnsembleOptions::new(1)).is_err());
}

/// Window suprema from restarted paths equal those read off one long run.
#[test]
fn restarted_windows_match_one_long_run() {
    let b = Builder { horizon: 0.05, ..Default::default() };
    let cfg = brusselator(&b, 0.5);
    let r = multiwindow_moments(&cfg, 3, 0.05, 8.0, &EnsembleOptions::new(3)).unwrap();
    let long = cfg.with_horizon(0.15);
    for j in 0..3 {
        let sups: Vec<f64> = (0..3)
            .map(|id| {
                let h = simulate_path(&long, id).unwrap().state.history;
                h[j * 50..=(j + 1) * 50].iter().fold(0f64, |m, r| m.max(r.u_sup))
            })
            .collect();
        assert_eq!(r.windows[j].sup_mean, sups.iter().sum::<f64>() / 3.0);
    }
}

#[test]
fn brusselator_windows_stay_finite() {
    let b = Builder { horizon: 0.25, ..Default::default() };
    let r = multiwindow_moments(&brusselator(&b, 0.1), 4, 0.25, 8.0, &EnsembleOptions::new(8)).unwrap();
    assert!(r.all_finite);
    assert_eq!(r.windows.len(), 4);
    assert!(r.growth_constant.is_finite() && r.growth_constant > 0.0);
}

/// Additive white noise: `Z(t, x)` is Gaussian with variance of order
/// `t^(1/2)`, so `E int_0^t int_D |Z|^p` grows like `t^(p/4 + 1)` and the
/// normalizer `int_0^t (1 + int_D |sigma|^p)` like `t`.
#[test]
fn additive_convolution_exponents() {
    let b = Builder { bc: BoundaryCondition::Dirichlet, n: 128, k: 64, dt: 1e-4, horizon: 0.08, ..Default::default() };
    let cfg = b.build(system(&["0"]), diagonal_noise(&["1"]), vec![vec![0.0; 128]]);
    let p = 12.0;
    let horizons = [0.005, 0.01, 0.02, 0.04, 0.08];
    let check = convolution_moment_check(&cfg, p, 0.5, &horizons, &EnsembleOptions::new(200)).unwrap();
    let a = check.exponent.a;
    assert!(check.passed, "sup slope {} vs a = {a}", check.normalized_slope);
    assert!((check.lp_normalized_slope - p / 4.0).abs() < 0.3, "{}", check.lp_normalized_slope);
    assert!(check.lp_normalized_slope >= a + 1.0 - 0.3);
    assert!((check.lp_raw_slope - check.lp_normalized_slope - 1.0).abs() < 1e-6);
}
