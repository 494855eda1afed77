//! Ensemble statistics over independent paths.
//!
//! Paths run on a rayon pool; results are collected in path-id order and
//! reduced sequentially, so every estimate is independent of the thread count.

use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::fit_power_law;
use crate::solver::{continue_path, initial_state, simulate_path, PathState, SimulationConfig, StepRecord, Trajectory};
use crate::spectral::Domain;
use crate::truncation::TruncationLevel;

/// Two-sided normal quantile used for every half-width (95% bands).
pub const Z95: f64 = 1.96;

#[derive(Debug, Clone, Default)]
pub struct EnsembleOptions {
    pub paths: usize,
    /// Path ids are `first_path .. first_path + paths`.
    pub first_path: u64,
    /// Worker threads; `None` uses the available parallelism.
    pub threads: Option<usize>,
    /// Wall-clock cap; paths not started before it expires are skipped.
    pub budget: Option<Duration>,
}

impl EnsembleOptions {
    pub fn new(paths: usize) -> Self {
        EnsembleOptions { paths, ..Default::default() }
    }
}

#[derive(Debug, Clone)]
pub struct EnsembleRun<T> {
    /// One entry per completed path, in path-id order.
    pub results: Vec<T>,
    pub partial: bool,
}

/// Run `job` for every path id and return results in path-id order. The
/// first failing path (in id order) determines the error.
pub fn run_paths<T, F>(opts: &EnsembleOptions, job: F) -> Result<EnsembleRun<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync,
{
    if opts.paths == 0 {
        return Err(Error::Config("ensemble needs at least one path".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.threads.unwrap_or(0))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let start = Instant::now();
    let raw: Vec<Result<Option<T>>> = pool.install(|| {
        (0..opts.paths as u64)
            .into_par_iter()
            .map(|i| {
                if opts.budget.is_some_and(|b| start.elapsed() > b) {
                    return Ok(None);
                }
                job(opts.first_path + i).map(Some)
            })
            .collect()
    });
    let mut results = Vec::with_capacity(raw.len());
    let mut partial = false;
    for r in raw {
        match r? {
            Some(v) => results.push(v),
            None => partial = true,
        }
    }
    Ok(EnsembleRun { results, partial })
}

/// Mergeable running moments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Accumulator {
    pub count: u64,
    pub sum: f64,
    pub sum_sq: f64,
    pub max: f64,
}

impl Default for Accumulator {
    fn default() -> Self {
        Accumulator { count: 0, sum: 0.0, sum_sq: 0.0, max: f64::NEG_INFINITY }
    }
}

impl Accumulator {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        self.sum += x;
        self.sum_sq += x * x;
        self.max = self.max.max(x);
    }

    pub fn merge(mut self, other: Accumulator) -> Accumulator {
        self.count += other.count;
        self.sum += other.sum;
        self.sum_sq += other.sum_sq;
        self.max = self.max.max(other.max);
        self
    }

    pub fn from_samples(xs: impl IntoIterator<Item = f64>) -> Self {
        let mut acc = Accumulator::default();
        xs.into_iter().for_each(|x| acc.push(x));
        acc
    }

    pub fn mean(&self) -> f64 {
        self.sum / self.count as f64
    }

    /// Unbiased sample variance (zero for fewer than two samples).
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            return 0.0;
        }
        let n = self.count as f64;
        ((self.sum_sq - self.sum * self.sum / n) / (n - 1.0)).max(0.0)
    }

    /// CLT half-width `1.96 * s / sqrt(count)`.
    pub fn half_width(&self) -> f64 {
        Z95 * (self.variance() / self.count as f64).sqrt()
    }
}

/// `1.96 * sqrt(p (1 - p) / n)`.
pub fn binomial_half_width(p: f64, n: u64) -> f64 {
    Z95 * (p * (1.0 - p) / n as f64).sqrt()
}

/// `(mean x^p)^(1/p)` of nonnegative samples.
pub fn power_mean(samples: &[f64], p: f64) -> f64 {
    (samples.iter().map(|x| x.abs().powf(p)).sum::<f64>() / samples.len() as f64).powf(1.0 / p)
}

/// `a = (1 - eta)(p - 2)/2 - d`.
pub fn exponent_a(eta: f64, p: f64, d: usize) -> f64 {
    (1.0 - eta) * (p - 2.0) / 2.0 - d as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentRecord {
    pub p: f64,
    pub eta: f64,
    pub d: usize,
    pub a: f64,
    /// `a > -1`.
    pub useful: bool,
    /// `(d + 2)/p + d/(p - 2)`.
    pub hypothesis_lhs: f64,
    /// `1 - eta`.
    pub hypothesis_rhs: f64,
    pub hypothesis_ok: bool,
}

impl ExponentRecord {
    pub fn new(p: f64, eta: f64, d: usize) -> Self {
        let a = exponent_a(eta, p, d);
        let lhs = (d as f64 + 2.0) / p + d as f64 / (p - 2.0);
        ExponentRecord {
            p,
            eta,
            d,
            a,
            useful: a > -1.0,
            hypothesis_lhs: lhs,
            hypothesis_rhs: 1.0 - eta,
            hypothesis_ok: p > 2.0 && lhs < 1.0 - eta,
        }
    }
}

/// What one path contributes to a moment table at one truncation level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathSummary {
    pub path_id: u64,
    /// `sup_{t <= T} max_i sup_x |u_i|` on the step grid.
    pub sup: f64,
    pub tau: Option<f64>,
    pub min: f64,
    pub z_sup: f64,
}

impl PathSummary {
    pub fn of(state: &PathState) -> Self {
        PathSummary {
            path_id: state.path_id,
            sup: state.running_sup,
            tau: state.tau(),
            min: state.running_min,
            z_sup: state.z_sup,
        }
    }
}

/// Run every path at every level with shared seeds (coupled ensembles).
/// Returns `summaries[level][path]`.
pub fn coupled_summaries(
    cfg: &SimulationConfig,
    levels: &[TruncationLevel],
    opts: &EnsembleOptions,
) -> Result<EnsembleRun<Vec<PathSummary>>> {
    if levels.is_empty() {
        return Err(Error::Config("at least one truncation level is required".into()));
    }
    let configs: Vec<SimulationConfig> = levels.iter().map(|&n| cfg.with_truncation(n)).collect();
    let run = run_paths(opts, |id| {
        configs.iter().map(|c| simulate_path(c, id).map(|o| PathSummary::of(&o.state))).collect::<Result<Vec<_>>>()
    })?;
    let mut by_level = vec![Vec::with_capacity(run.results.len()); levels.len()];
    for per_path in run.results {
        for (l, s) in per_path.into_iter().enumerate() {
            by_level[l].push(s);
        }
    }
    Ok(EnsembleRun { results: by_level, partial: run.partial })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentRow {
    pub n: f64,
    pub paths: u64,
    pub p: f64,
    /// Estimate of `E sup_{t <= T} sup_x max_i |u_i,n|^p`.
    pub moment: f64,
    pub half_width: f64,
    /// Estimate of `P(tau_n <= T)`.
    pub blowup: f64,
    pub blowup_half_width: f64,
    /// `moment / n^p`.
    pub markov_bound: f64,
    /// `blowup <= markov_bound + 3 * blowup_half_width`.
    pub markov_ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentTable {
    pub p: f64,
    pub horizon: f64,
    pub seed: u64,
    pub rows: Vec<MomentRow>,
    /// `max_{i,j} |m_i - m_j| / sqrt(h_i^2 + h_j^2)` over level pairs.
    pub flatness: f64,
    pub partial: bool,
    pub exponent: Option<ExponentRecord>,
}

impl MomentTable {
    /// Build the table from per-level path summaries.
    pub fn from_summaries(
        levels: &[TruncationLevel],
        summaries: &[Vec<PathSummary>],
        p: f64,
        horizon: f64,
        seed: u64,
        partial: bool,
    ) -> Self {
        let rows: Vec<MomentRow> = levels
            .iter()
            .zip(summaries)
            .map(|(n, paths)| {
                let acc = Accumulator::from_samples(paths.iter().map(|s| s.sup.powf(p)));
                let count = acc.count;
                let hits = paths.iter().filter(|s| s.tau.is_some_and(|t| t <= horizon)).count();
                let blowup = hits as f64 / count as f64;
                let bhw = binomial_half_width(blowup, count);
                let markov_bound = acc.mean() / n.value().powf(p);
                MomentRow {
                    n: n.value(),
                    paths: count,
                    p,
                    moment: acc.mean(),
                    half_width: acc.half_width(),
                    blowup,
                    blowup_half_width: bhw,
                    markov_bound,
                    markov_ok: blowup <= markov_bound + 3.0 * bhw,
                }
            })
            .collect();
        let flatness = flatness(&rows);
        MomentTable { p, horizon, seed, rows, flatness, partial, exponent: None }
    }

    pub fn markov_ok(&self) -> bool {
        self.rows.iter().all(|r| r.markov_ok)
    }
}

/// Largest pairwise gap in units of pooled half-widths (0 when all agree exactly).
pub fn flatness(rows: &[MomentRow]) -> f64 {
    let mut worst = 0f64;
    for (i, a) in rows.iter().enumerate() {
        for b in &rows[i + 1..] {
            let gap = (a.moment - b.moment).abs();
            let pooled = (a.half_width.powi(2) + b.half_width.powi(2)).sqrt();
            let metric = if gap == 0.0 {
                0.0
            } else if pooled == 0.0 {
                f64::INFINITY
            } else {
                gap / pooled
            };
            worst = worst.max(metric);
        }
    }
    worst
}

/// Moment table over coupled levels.
pub fn estimate_moments(
    cfg: &SimulationConfig,
    levels: &[TruncationLevel],
    p: f64,
    opts: &EnsembleOptions,
) -> Result<MomentTable> {
    if !(p >= 1.0) {
        return Err(Error::Config(format!("moment exponent must be at least 1, got {p}")));
    }
    let run = coupled_summaries(cfg, levels, opts)?;
    Ok(MomentTable::from_summaries(levels, &run.results, p, cfg.horizon, cfg.seed, run.partial))
}

/// `Y(t_j) = int_0^t_j int_D sum_i |u_i|^p` by the trapezoid rule over the
/// frames of a trajectory (nondecreasing by construction).
pub fn lp_functional(traj: &Trajectory, domain: &Domain, p: f64) -> Vec<(f64, f64)> {
    let cell = domain.cell_volume();
    let density =
        |frame: &crate::solver::Frame| cell * frame.u.iter().flatten().map(|v| v.abs().powf(p)).sum::<f64>();
    let mut out = Vec::with_capacity(traj.frames.len());
    let mut y = 0.0;
    let mut prev: Option<(f64, f64)> = None;
    for frame in &traj.frames {
        let g = density(frame);
        if let Some((t0, g0)) = prev {
            y += 0.5 * (frame.time - t0) * (g0 + g);
        }
        out.push((frame.time, y));
        prev = Some((frame.time, g));
    }
    out
}

/// Record at the last step with `time <= t` (up to rounding).
fn record_at(history: &[StepRecord], t: f64) -> &StepRecord {
    let tol = 1e-9 * t.abs().max(1.0);
    let idx = history.partition_point(|r| r.time <= t + tol);
    &history[idx.saturating_sub(1)]
}

/// `max_{t_j <= t} z_sup(t_j)`.
fn z_sup_until(history: &[StepRecord], t: f64) -> f64 {
    let tol = 1e-9 * t.abs().max(1.0);
    history.iter().take_while(|r| r.time <= t + tol).fold(0.0, |m, r| m.max(r.z_sup))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvolutionCheck {
    pub p: f64,
    pub exponent: ExponentRecord,
    pub horizons: Vec<f64>,
    /// `E sup_{t <= T} sup_x max_i |Z_i|^p`.
    pub sup_moments: Vec<f64>,
    pub sup_half_widths: Vec<f64>,
    /// `E int_0^T int_D sum_i |Z_i|^p`.
    pub lp_moments: Vec<f64>,
    /// `E int_0^T (1 + int_D sum_ik |sigma_ik,n(u)|^p)`, the right-side integral.
    pub normalizers: Vec<f64>,
    pub raw_slope: f64,
    pub normalized_slope: f64,
    pub lp_raw_slope: f64,
    pub lp_normalized_slope: f64,
    pub residuals: Vec<f64>,
    /// `normalized_slope >= a - 0.3`.
    pub passed: bool,
}

/// Regress the `p`-th sup-moment of `Z` against the horizon. One ensemble is
/// run to the largest horizon; smaller horizons read its step history.
pub fn convolution_moment_check(
    cfg: &SimulationConfig,
    p: f64,
    eta: f64,
    horizons: &[f64],
    opts: &EnsembleOptions,
) -> Result<ConvolutionCheck> {
    if horizons.len() < 3 {
        return Err(Error::DegenerateFit("at least three horizons are required".into()));
    }
    let t_max = horizons.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let cfg = SimulationConfig { moment_p: p, ..cfg.with_horizon(t_max) };
    let run = run_paths(opts, |id| simulate_path(&cfg, id).map(|o| o.state.history))?;
    let mut sup_moments = Vec::new();
    let mut sup_half_widths = Vec::new();
    let mut lp_moments = Vec::new();
    let mut normalizers = Vec::new();
    for &t in horizons {
        let sup = Accumulator::from_samples(run.results.iter().map(|h| z_sup_until(h, t).powf(p)));
        let lp = Accumulator::from_samples(run.results.iter().map(|h| record_at(h, t).y_z));
        let norm = Accumulator::from_samples(run.results.iter().map(|h| record_at(h, t).y_sigma));
        sup_moments.push(sup.mean());
        sup_half_widths.push(sup.half_width());
        lp_moments.push(lp.mean());
        normalizers.push(norm.mean());
    }
    let ratio = |xs: &[f64]| xs.iter().zip(&normalizers).map(|(x, r)| x / r).collect::<Vec<_>>();
    let (raw, _) = fit_power_law(horizons, &sup_moments)?;
    let (normalized, _) = fit_power_law(horizons, &ratio(&sup_moments))?;
    let (lp_raw, _) = fit_power_law(horizons, &lp_moments)?;
    let (lp_norm, _) = fit_power_law(horizons, &ratio(&lp_moments))?;
    let exponent = ExponentRecord::new(p, eta, cfg.basis.domain().dim());
    Ok(ConvolutionCheck {
        p,
        exponent,
        horizons: horizons.to_vec(),
        sup_moments,
        sup_half_widths,
        lp_moments,
        normalizers,
        raw_slope: raw.slope,
        normalized_slope: normalized.slope,
        lp_raw_slope: lp_raw.slope,
        lp_normalized_slope: lp_norm.slope,
        residuals: normalized.residuals,
        passed: normalized.slope >= exponent.a - 0.3,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HolderFit {
    /// `None` when every increment vanishes (reported as exactly smooth).
    pub theta: Option<f64>,
    pub lags: Vec<usize>,
    pub increments: Vec<f64>,
    pub residuals: Vec<f64>,
}

impl HolderFit {
    pub fn exact_smooth(&self) -> bool {
        self.theta.is_none()
    }
}

/// Dyadic lag range for an `n`-point grid resolved by `k` modes: from the
/// smallest power of two at least twice the resolution scale `n / k` to `n / 8`.
pub fn default_lags(n: usize, k: usize) -> (usize, usize) {
    ((2 * n.div_ceil(k.max(1))).next_power_of_two(), (n / 8).max(1))
}

/// Slope of `log mean_x |f(x + h) - f(x)|` against `log h` over dyadic lags
/// `min_lag, 2 min_lag, ..., <= max_lag` (lags in grid points).
pub fn holder_estimate(field: &[f64], spacing: f64, min_lag: usize, max_lag: usize) -> Result<HolderFit> {
    let mut lags = Vec::new();
    let mut h = min_lag.max(1).next_power_of_two();
    while h <= max_lag && h < field.len() {
        lags.push(h);
        h *= 2;
    }
    if lags.len() < 3 {
        return Err(Error::DegenerateFit(format!("only {} dyadic lags in [{min_lag}, {max_lag}]", lags.len())));
    }
    let increments: Vec<f64> = lags
        .iter()
        .map(|&h| {
            let n = field.len() - h;
            (0..n).map(|x| (field[x + h] - field[x]).abs()).sum::<f64>() / n as f64
        })
        .collect();
    if increments.iter().all(|v| *v == 0.0) {
        return Ok(HolderFit { theta: None, lags, increments, residuals: vec![] });
    }
    let scales: Vec<f64> = lags.iter().map(|&h| h as f64 * spacing).collect();
    let (fit, _) = fit_power_law(&scales, &increments)?;
    Ok(HolderFit { theta: Some(fit.slope), lags, increments, residuals: fit.residuals })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HolderSummary {
    pub lags: (usize, usize),
    pub theta_z: Vec<f64>,
    pub theta_u: Vec<f64>,
    pub mean_theta_z: f64,
    pub mean_theta_u: f64,
    /// `d_i alpha_max dt`: above 1 the per-step damping suppresses the
    /// noise on the finest modes and the snapshots look smoother than they
    /// should at grid scale.
    pub damping: f64,
}

/// Hölder exponents of the final `Z_i` and `u_i` snapshots of every path.
pub fn holder_ensemble(cfg: &SimulationConfig, opts: &EnsembleOptions, species: usize) -> Result<HolderSummary> {
    let domain = cfg.basis.domain();
    if domain.dim() != 1 {
        return Err(Error::Unsupported("Hölder regression needs a one-dimensional grid".into()));
    }
    let lags = default_lags(domain.points(), cfg.basis.len());
    let h = domain.spacing(0);
    let alpha_max = cfg.basis.modes().iter().map(|m| m.alpha).fold(0.0, f64::max);
    let damping = cfg.system.diffusion()[species] * alpha_max * cfg.dt;
    let run = run_paths(opts, |id| {
        let s = simulate_path(cfg, id)?.state;
        let tz = holder_estimate(&s.z_grid[species], h, lags.0, lags.1)?.theta.unwrap_or(f64::NAN);
        let tu = holder_estimate(&s.u_grid[species], h, lags.0, lags.1)?.theta.unwrap_or(f64::NAN);
        Ok((tz, tu))
    })?;
    let (theta_z, theta_u): (Vec<f64>, Vec<f64>) = run.results.into_iter().unzip();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    Ok(HolderSummary { lags, mean_theta_z: mean(&theta_z), mean_theta_u: mean(&theta_u), theta_z, theta_u, damping })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowStat {
    pub index: usize,
    pub start: f64,
    pub end: f64,
    /// Mean over paths of `sup_{t in window} max_i sup_x |u_i|`.
    pub sup_mean: f64,
    pub sup_half_width: f64,
    /// Mean over paths of the `p`-th power of the window supremum.
    pub moment: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiWindowReport {
    pub p: f64,
    pub windows: Vec<WindowStat>,
    /// Smallest `C` with `s_(j+1) <= C (1 + s_j)` for consecutive window suprema.
    pub growth_constant: f64,
    pub all_finite: bool,
}

/// Advance each path over `windows` consecutive windows of length `t0`,
/// restarting from the saved state at every window boundary.
pub fn multiwindow_moments(
    cfg: &SimulationConfig,
    windows: usize,
    t0: f64,
    p: f64,
    opts: &EnsembleOptions,
) -> Result<MultiWindowReport> {
    if windows == 0 {
        return Err(Error::Config("at least one window is required".into()));
    }
    let ratio = t0 / cfg.dt;
    if (ratio - ratio.round()).abs() > 1e-9 * ratio.max(1.0) || ratio.round() < 1.0 {
        return Err(Error::Config(format!("window length {t0} must be a positive multiple of dt = {}", cfg.dt)));
    }
    let run = run_paths(opts, |id| {
        let mut state = initial_state(&cfg.with_horizon(t0), id)?;
        let mut sups = Vec::with_capacity(windows);
        for j in 0..windows {
            let c = cfg.with_horizon((j + 1) as f64 * t0);
            let start = state.history.len() - 1;
            state = continue_path(&c, state)?.state;
            sups.push(state.history[start..].iter().fold(0f64, |m, r| m.max(r.u_sup)));
        }
        Ok(sups)
    })?;
    let mut stats = Vec::with_capacity(windows);
    for j in 0..windows {
        let acc = Accumulator::from_samples(run.results.iter().map(|s| s[j]));
        let moment = run.results.iter().map(|s| s[j].powf(p)).sum::<f64>() / run.results.len() as f64;
        stats.push(WindowStat {
            index: j,
            start: j as f64 * t0,
            end: (j + 1) as f64 * t0,
            sup_mean: acc.mean(),
            sup_half_width: acc.half_width(),
            moment,
        });
    }
    let growth_constant =
        stats.windows(2).map(|w| w[1].sup_mean / (1.0 + w[0].sup_mean)).fold(0.0, f64::max);
    let all_finite = stats.iter().all(|s| s.sup_mean.is_finite() && s.moment.is_finite());
    Ok(MultiWindowReport { p, windows: stats, growth_constant, all_finite })
}
