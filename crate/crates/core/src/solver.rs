//! Exponential-Euler paths of the truncated mild solution.
//!
//! One step advances every species in mode space:
//!
//! ```text
//! u_k <- e_k (u_k + N_k) + w_k F_k        e_k = exp(-d alpha_k dt)
//! Z_k <- e_k (Z_k + N_k)                  w_k = (1 - e_k) / (d alpha_k)   (dt at alpha_k = 0)
//! ```
//!
//! where `F` and `N = sum_k sigma_ik(u) dW_k` are evaluated on the grid at the
//! retracted state and transformed. `Z` shares the draws of `u`, so `u - Z`
//! follows the noise-free recursion exactly.

use std::sync::Arc;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{NoiseCoefficients, ReactionSystem};
use crate::noise::{sample_increment, NoiseFactorization};
use crate::rng::path_streams;
use crate::spectral::EigenBasis;
use crate::truncation::{truncate_in_place, TruncationLevel};

/// Everything a path needs. Built once and shared by all paths of an ensemble.
#[derive(Debug, Clone)]
pub struct SimulationConfig {
    pub basis: Arc<EigenBasis>,
    pub system: Arc<ReactionSystem>,
    pub noise: Arc<NoiseCoefficients>,
    pub factorization: Arc<NoiseFactorization>,
    pub truncation: TruncationLevel,
    /// Per-species grid values of `u_0`.
    pub initial: Vec<Vec<f64>>,
    pub horizon: f64,
    pub dt: f64,
    pub seed: u64,
    /// Keep a snapshot every `dump_stride` steps (and at the final step).
    pub dump_stride: Option<usize>,
    /// Exponent of the running `L^p(Q_t)` functionals kept in the history.
    pub moment_p: f64,
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<()> {
        let m = self.system.species();
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Config(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.horizon >= self.dt && self.horizon.is_finite()) {
            return Err(Error::Config(format!("horizon {} must be at least dt = {}", self.horizon, self.dt)));
        }
        if self.noise.species() != m {
            return Err(Error::Config(format!("noise has {} rows for {m} species", self.noise.species())));
        }
        if self.factorization.modes() != self.basis.len() {
            return Err(Error::Config("noise factorization was built for a different basis".into()));
        }
        if self.initial.len() != m || self.initial.iter().any(|f| f.len() != self.basis.points()) {
            return Err(Error::Config(format!("initial data must be {m} fields of {} grid values", self.basis.points())));
        }
        for (i, field) in self.initial.iter().enumerate() {
            if let Some(j) = field.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(Error::Config(format!(
                    "initial value of species {} at grid point {j} is {} (must be finite and nonnegative)",
                    self.system.labels()[i],
                    field[j]
                )));
            }
        }
        if self.dump_stride == Some(0) {
            return Err(Error::Config("dump stride must be positive".into()));
        }
        if !(self.moment_p >= 1.0) {
            return Err(Error::Config(format!("moment exponent must be at least 1, got {}", self.moment_p)));
        }
        Ok(())
    }

    /// Number of steps to reach the horizon; the last one may be shorter.
    pub fn steps(&self) -> u64 {
        ((self.horizon / self.dt) - 1e-9).ceil().max(1.0) as u64
    }

    /// `t_k = k dt`, except that a shortened last step lands on `T`.
    pub fn time_of(&self, step: u64) -> f64 {
        let steps = self.steps();
        let t = step.min(steps) as f64 * self.dt;
        if step >= steps && (t - self.horizon).abs() > 1e-9 * self.dt {
            self.horizon
        } else {
            t
        }
    }

    pub fn with_truncation(&self, n: TruncationLevel) -> Self {
        SimulationConfig { truncation: n, ..self.clone() }
    }

    pub fn with_horizon(&self, horizon: f64) -> Self {
        SimulationConfig { horizon, ..self.clone() }
    }

    pub fn with_dt(&self, dt: f64) -> Self {
        SimulationConfig { dt, ..self.clone() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridLocation {
    pub time: f64,
    pub species: usize,
    pub point: usize,
}

/// First time `max_i sup_x |u_i| >= n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StopEvent {
    pub tau: f64,
    pub step: u64,
    pub species: usize,
    pub point: usize,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub time: f64,
    pub mass: f64,
    /// `max_i sup_x |u_i|`.
    pub u_sup: f64,
    pub u_min: f64,
    /// `max_i sup_x |Z_i|`.
    pub z_sup: f64,
    /// `int_D sum_i |u_i|^p`.
    pub u_density: f64,
    /// `int_D sum_i |Z_i|^p`.
    pub z_density: f64,
    /// Left-point approximation of `int_0^t int_D sum_i |u_i|^p`.
    pub y_u: f64,
    /// Left-point approximation of `int_0^t int_D sum_i |Z_i|^p`.
    pub y_z: f64,
    /// Left-point approximation of `int_0^t (1 + int_D sum_ik |sigma_ik,n(u)|^p)`.
    pub y_sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathState {
    pub path_id: u64,
    pub step: u64,
    pub time: f64,
    pub u_coeffs: Vec<Vec<f64>>,
    pub u_grid: Vec<Vec<f64>>,
    pub z_coeffs: Vec<Vec<f64>>,
    pub z_grid: Vec<Vec<f64>>,
    pub stop: Option<StopEvent>,
    pub running_min: f64,
    pub min_location: GridLocation,
    pub running_sup: f64,
    pub z_sup: f64,
    pub negative_points: u64,
    pub visited_points: u64,
    pub history: Vec<StepRecord>,
    pub rngs: Vec<ChaCha8Rng>,
}

impl PathState {
    pub fn tau(&self) -> Option<f64> {
        self.stop.map(|s| s.tau)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub step: u64,
    pub time: f64,
    pub u: Vec<Vec<f64>>,
    pub z: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub labels: Vec<String>,
    pub points: Vec<Vec<f64>>,
    pub frames: Vec<Frame>,
}

#[derive(Debug, Clone)]
pub struct PathOutput {
    pub state: PathState,
    pub trajectory: Option<Trajectory>,
}

/// Per-path caches and scratch buffers.
struct Stepper<'a> {
    cfg: &'a SimulationConfig,
    full: StepCoefficients,
    a: Vec<f64>,
    fa: Vec<f64>,
    sig: Vec<f64>,
    f_grid: Vec<Vec<f64>>,
    n_grid: Vec<Vec<f64>>,
    dw_coef: Vec<Vec<f64>>,
    dw_grid: Vec<Vec<f64>>,
    f_coef: Vec<f64>,
    n_coef: Vec<f64>,
}

/// `(e, w)` per species for one step length.
struct StepCoefficients {
    h: f64,
    e: Vec<Vec<f64>>,
    w: Vec<Vec<f64>>,
}

impl StepCoefficients {
    fn new(basis: &EigenBasis, diffusion: &[f64], h: f64) -> Self {
        let mut e = Vec::with_capacity(diffusion.len());
        let mut w = Vec::with_capacity(diffusion.len());
        for &d in diffusion {
            let (ei, wi): (Vec<f64>, Vec<f64>) = basis
                .modes()
                .iter()
                .map(|mode| {
                    let rate = d * mode.alpha;
                    ((-rate * h).exp(), integral_weight(rate, h))
                })
                .unzip();
            e.push(ei);
            w.push(wi);
        }
        StepCoefficients { h, e, w }
    }
}

/// `(1 - exp(-d alpha h)) / (d alpha)`, with the limit `h` at `d alpha = 0`.
pub fn integral_weight(rate: f64, h: f64) -> f64 {
    if rate == 0.0 {
        h
    } else {
        -(-rate * h).exp_m1() / rate
    }
}

impl<'a> Stepper<'a> {
    fn new(cfg: &'a SimulationConfig) -> Self {
        let m = cfg.system.species();
        let r = cfg.noise.channels();
        let n = cfg.basis.points();
        let k = cfg.basis.len();
        Stepper {
            cfg,
            full: StepCoefficients::new(&cfg.basis, cfg.system.diffusion(), cfg.dt),
            a: vec![0.0; m],
            fa: vec![0.0; m],
            sig: vec![0.0; m * r],
            f_grid: vec![vec![0.0; n]; m],
            n_grid: vec![vec![0.0; n]; m],
            dw_coef: vec![vec![0.0; k]; r],
            dw_grid: vec![vec![0.0; n]; r],
            f_coef: vec![0.0; k],
            n_coef: vec![0.0; k],
        }
    }

    fn step(&mut self, state: &mut PathState) -> Result<()> {
        let cfg = self.cfg;
        let basis = &*cfg.basis;
        let m = cfg.system.species();
        let r = cfg.noise.channels();
        let npts = basis.points();
        let cell = basis.domain().cell_volume();
        let p = cfg.moment_p;
        let t0 = state.time;
        let t1 = cfg.time_of(state.step + 1);
        let h = if state.step + 1 < cfg.steps() || ((t1 - t0) - cfg.dt).abs() <= 1e-9 * cfg.dt {
            cfg.dt
        } else {
            t1 - t0
        };
        let short;
        let coeffs = if h == self.full.h {
            &self.full
        } else {
            short = StepCoefficients::new(basis, cfg.system.diffusion(), h);
            &short
        };

        let noisy = !cfg.noise.is_zero();
        if noisy {
            for ((rng, coef), grid) in state.rngs.iter_mut().zip(&mut self.dw_coef).zip(&mut self.dw_grid) {
                sample_increment(&cfg.factorization, h, rng, coef);
                basis.inverse(coef, grid);
            }
        }

        let fault = |detail: String| Error::NumericalFault { step: state.step + 1, time: t1, detail };
        let mut sigma_density = 0.0;
        for j in 0..npts {
            for (a, u) in self.a.iter_mut().zip(&state.u_grid) {
                *a = u[j];
            }
            truncate_in_place(&mut self.a, cfg.truncation);
            cfg.system
                .eval_into(&self.a, &mut self.fa)
                .map_err(|e| fault(format!("reaction evaluation at grid point {j}: {e}")))?;
            for (f, v) in self.f_grid.iter_mut().zip(&self.fa) {
                f[j] = *v;
            }
            if noisy {
                cfg.noise
                    .eval_into(&self.a, &mut self.sig)
                    .map_err(|e| fault(format!("noise evaluation at grid point {j}: {e}")))?;
                for i in 0..m {
                    let mut acc = 0.0;
                    for k in 0..r {
                        let s = self.sig[i * r + k];
                        sigma_density += s.abs().powf(p);
                        acc += s * self.dw_grid[k][j];
                    }
                    self.n_grid[i][j] = acc;
                }
            }
        }

        for i in 0..m {
            basis.forward(&self.f_grid[i], &mut self.f_coef);
            if noisy {
                basis.forward(&self.n_grid[i], &mut self.n_coef);
            } else {
                self.n_coef.iter_mut().for_each(|v| *v = 0.0);
            }
            let (e, w) = (&coeffs.e[i], &coeffs.w[i]);
            let (u, z) = (&mut state.u_coeffs[i], &mut state.z_coeffs[i]);
            for q in 0..e.len() {
                u[q] = e[q] * (u[q] + self.n_coef[q]) + w[q] * self.f_coef[q];
                z[q] = e[q] * (z[q] + self.n_coef[q]);
            }
            basis.inverse(&state.u_coeffs[i], &mut state.u_grid[i]);
            basis.inverse(&state.z_coeffs[i], &mut state.z_grid[i]);
        }

        for (i, field) in state.u_grid.iter().enumerate() {
            if let Some(j) = field.iter().position(|v| !v.is_finite()) {
                return Err(fault(format!(
                    "species {} is {} at grid point {j}",
                    cfg.system.labels()[i],
                    field[j]
                )));
            }
        }

        let prev = *state.history.last().expect("history starts at t = 0");
        state.step += 1;
        state.time = t1;
        let y = Functionals {
            y_u: prev.y_u + h * prev.u_density,
            y_z: prev.y_z + h * prev.z_density,
            y_sigma: prev.y_sigma + h * (1.0 + sigma_density * cell),
        };
        record(state, cfg, y);
        Ok(())
    }
}

fn lp_density(grid: &[Vec<f64>], p: f64, cell: f64) -> f64 {
    cell * grid.iter().flatten().map(|v| v.abs().powf(p)).sum::<f64>()
}

#[derive(Default)]
struct Functionals {
    y_u: f64,
    y_z: f64,
    y_sigma: f64,
}

fn record(state: &mut PathState, cfg: &SimulationConfig, y: Functionals) {
    let basis = &*cfg.basis;
    let t = state.time;
    let mut sup = 0f64;
    let mut min = f64::INFINITY;
    let mut zsup = 0f64;
    let mut arg_sup = (0, 0);
    for (i, field) in state.u_grid.iter().enumerate() {
        for (j, &v) in field.iter().enumerate() {
            if v.abs() > sup {
                sup = v.abs();
                arg_sup = (i, j);
            }
            if v < min {
                min = v;
            }
            if v < state.running_min {
                state.running_min = v;
                state.min_location = GridLocation { time: t, species: i, point: j };
            }
            if v < 0.0 {
                state.negative_points += 1;
            }
        }
        state.visited_points += field.len() as u64;
    }
    for field in &state.z_grid {
        zsup = field.iter().fold(zsup, |s, v| s.max(v.abs()));
    }
    state.running_sup = state.running_sup.max(sup);
    state.z_sup = state.z_sup.max(zsup);
    if state.stop.is_none() && sup >= cfg.truncation.value() {
        state.stop = Some(StopEvent { tau: t, step: state.step, species: arg_sup.0, point: arg_sup.1, value: sup });
    }
    let mass = state.u_grid.iter().map(|f| basis.integrate(f)).sum();
    let cell = basis.domain().cell_volume();
    state.history.push(StepRecord {
        time: t,
        mass,
        u_sup: sup,
        u_min: min,
        z_sup: zsup,
        u_density: lp_density(&state.u_grid, cfg.moment_p, cell),
        z_density: lp_density(&state.z_grid, cfg.moment_p, cell),
        y_u: y.y_u,
        y_z: y.y_z,
        y_sigma: y.y_sigma,
    });
}

/// State at `t = 0`: `u_0` projected onto the basis, `Z = 0`, fresh streams.
pub fn initial_state(cfg: &SimulationConfig, path_id: u64) -> Result<PathState> {
    cfg.validate()?;
    let basis = &*cfg.basis;
    let (k, n) = (basis.len(), basis.points());
    let m = cfg.system.species();
    let mut u_coeffs = vec![vec![0.0; k]; m];
    let mut u_grid = vec![vec![0.0; n]; m];
    for i in 0..m {
        basis.forward(&cfg.initial[i], &mut u_coeffs[i]);
        basis.inverse(&u_coeffs[i], &mut u_grid[i]);
    }
    let mut state = PathState {
        path_id,
        step: 0,
        time: 0.0,
        u_coeffs,
        u_grid,
        z_coeffs: vec![vec![0.0; k]; m],
        z_grid: vec![vec![0.0; n]; m],
        stop: None,
        running_min: f64::INFINITY,
        min_location: GridLocation { time: 0.0, species: 0, point: 0 },
        running_sup: 0.0,
        z_sup: 0.0,
        negative_points: 0,
        visited_points: 0,
        history: Vec::with_capacity(cfg.steps() as usize + 1),
        rngs: path_streams(cfg.seed, path_id, cfg.noise.channels()),
    };
    record(&mut state, cfg, Functionals::default());
    Ok(state)
}

/// Advance one step (the last step is shortened to land on the horizon).
pub fn step(state: &mut PathState, cfg: &SimulationConfig) -> Result<()> {
    if state.step >= cfg.steps() {
        return Err(Error::Contract(format!("state at t = {} already reached the horizon", state.time)));
    }
    Stepper::new(cfg).step(state)
}

/// Run one path from `t = 0` to the horizon.
pub fn simulate_path(cfg: &SimulationConfig, path_id: u64) -> Result<PathOutput> {
    simulate_path_observed(cfg, path_id, &mut |_| {})
}

/// As [`simulate_path`], calling `observer` on the initial state and after every step.
pub fn simulate_path_observed(
    cfg: &SimulationConfig,
    path_id: u64,
    observer: &mut dyn FnMut(&PathState),
) -> Result<PathOutput> {
    let state = initial_state(cfg, path_id)?;
    continue_path_observed(cfg, state, observer)
}

/// Continue a saved state to the horizon of `cfg`. The state must come from
/// a configuration with the same discretization, seed and `dt`.
pub fn continue_path(cfg: &SimulationConfig, state: PathState) -> Result<PathOutput> {
    continue_path_observed(cfg, state, &mut |_| {})
}

pub fn continue_path_observed(
    cfg: &SimulationConfig,
    mut state: PathState,
    observer: &mut dyn FnMut(&PathState),
) -> Result<PathOutput> {
    cfg.validate()?;
    let (m, k, n) = (cfg.system.species(), cfg.basis.len(), cfg.basis.points());
    if state.u_coeffs.len() != m
        || state.u_coeffs.iter().any(|c| c.len() != k)
        || state.u_grid.iter().any(|g| g.len() != n)
        || state.rngs.len() != cfg.noise.channels()
    {
        return Err(Error::Config("saved state does not match the discretization".into()));
    }
    if (state.time - cfg.time_of(state.step)).abs() > 1e-12 * cfg.horizon.max(1.0) && state.step < cfg.steps() {
        return Err(Error::Config(format!("saved state at t = {} is not on the step grid of dt = {}", state.time, cfg.dt)));
    }
    let total = cfg.steps();
    let mut trajectory = cfg.dump_stride.map(|_| Trajectory {
        labels: cfg.system.labels().to_vec(),
        points: (0..n).map(|j| cfg.basis.domain().point(j)).collect(),
        frames: Vec::new(),
    });
    let keep = |state: &PathState, traj: &mut Option<Trajectory>| {
        if let (Some(stride), Some(t)) = (cfg.dump_stride, traj.as_mut()) {
            if state.step % stride as u64 == 0 || state.step == total {
                t.frames.push(Frame {
                    step: state.step,
                    time: state.time,
                    u: state.u_grid.clone(),
                    z: state.z_grid.clone(),
                });
            }
        }
    };
    observer(&state);
    keep(&state, &mut trajectory);
    let mut stepper = Stepper::new(cfg);
    while state.step < total {
        stepper.step(&mut state)?;
        observer(&state);
        keep(&state, &mut trajectory);
    }
    Ok(PathOutput { state, trajectory })
}

/// `v = u - Z` on the grid, per species.
pub fn decompose(state: &PathState) -> Vec<Vec<f64>> {
    state
        .u_grid
        .iter()
        .zip(&state.z_grid)
        .map(|(u, z)| u.iter().zip(z).map(|(a, b)| a - b).collect())
        .collect()
}

/// `(t_j, M(t_j))` with `M = sum_i int_D u_i` by the midpoint rule.
pub fn mass(state: &PathState) -> Vec<(f64, f64)> {
    state.history.iter().map(|r| (r.time, r.mass)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NonnegativityReport {
    pub min: f64,
    pub location: GridLocation,
    /// Fraction of visited (t, x, i) grid points with `u < 0`.
    pub negative_fraction: f64,
    pub tolerance: f64,
    /// `min < -tolerance`.
    pub flagged: bool,
}

pub fn nonnegativity_report(state: &PathState, tolerance: f64) -> NonnegativityReport {
    NonnegativityReport {
        min: state.running_min,
        location: state.min_location,
        negative_fraction: state.negative_points as f64 / state.visited_points.max(1) as f64,
        tolerance,
        flagged: state.running_min < -tolerance,
    }
}
