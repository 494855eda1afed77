//! Laplacian eigenbases on intervals and rectangles.
//!
//! Grids are cell-centered and integrals use the midpoint rule with weight
//! `|D| / N^d`. On such grids the sampled sine and cosine modes below the
//! Nyquist index are exactly orthonormal, which is why the mode count is
//! capped at `N / 2` per axis.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::{fit_power_law, LineFit};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryCondition {
    Dirichlet,
    Neumann,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub extents: Vec<f64>,
    pub bc: BoundaryCondition,
    pub grid: Vec<usize>,
}

impl Domain {
    pub fn interval(length: f64, bc: BoundaryCondition, n: usize) -> Result<Self> {
        Domain::new(vec![length], bc, vec![n])
    }

    pub fn rectangle(lx: f64, ly: f64, bc: BoundaryCondition, nx: usize, ny: usize) -> Result<Self> {
        Domain::new(vec![lx, ly], bc, vec![nx, ny])
    }

    pub fn new(extents: Vec<f64>, bc: BoundaryCondition, grid: Vec<usize>) -> Result<Self> {
        if !(1..=2).contains(&extents.len()) || extents.len() != grid.len() {
            return Err(Error::Contract("domain must be 1D or 2D with one grid size per axis".into()));
        }
        if extents.iter().any(|l| !(*l > 0.0 && l.is_finite())) {
            return Err(Error::Contract("domain extents must be positive".into()));
        }
        if grid.iter().any(|&n| n < 2) {
            return Err(Error::Contract("grid needs at least 2 points per axis".into()));
        }
        Ok(Domain { extents, bc, grid })
    }

    pub fn dim(&self) -> usize {
        self.extents.len()
    }

    pub fn points(&self) -> usize {
        self.grid.iter().product()
    }

    pub fn volume(&self) -> f64 {
        self.extents.iter().product()
    }

    /// Midpoint quadrature weight.
    pub fn cell_volume(&self) -> f64 {
        self.volume() / self.points() as f64
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        self.extents[axis] / self.grid[axis] as f64
    }

    /// Cell-center coordinates of flat grid index `j` (row-major, last axis fastest).
    pub fn point(&self, j: usize) -> Vec<f64> {
        match self.dim() {
            1 => vec![(j as f64 + 0.5) * self.spacing(0)],
            _ => {
                let (ix, iy) = (j / self.grid[1], j % self.grid[1]);
                vec![(ix as f64 + 0.5) * self.spacing(0), (iy as f64 + 0.5) * self.spacing(1)]
            }
        }
    }

    /// Per-axis mode cap.
    pub fn axis_mode_cap(&self, axis: usize) -> usize {
        self.grid[axis] / 2
    }

    /// Default mode count: 64 in 1D, 32^2 in 2D (clamped to the cap).
    pub fn default_modes(&self) -> usize {
        match self.dim() {
            1 => 64.min(self.axis_mode_cap(0)),
            _ => 32.min(self.axis_mode_cap(0)) * 32.min(self.axis_mode_cap(1)),
        }
    }
}

/// One-dimensional closed-form basis on `(0, L)`.
#[derive(Debug, Clone, PartialEq)]
struct AxisBasis {
    length: f64,
    bc: BoundaryCondition,
    /// Number of modes kept on this axis.
    modes: usize,
    /// `phi[k * n + j]` = mode `k` at cell `j`.
    phi: Vec<f64>,
    n: usize,
}

impl AxisBasis {
    fn new(length: f64, bc: BoundaryCondition, n: usize, modes: usize) -> Self {
        let h = length / n as f64;
        let mut phi = vec![0.0; modes * n];
        for k in 0..modes {
            for j in 0..n {
                phi[k * n + j] = axis_phi(bc, length, k, (j as f64 + 0.5) * h);
            }
        }
        AxisBasis { length, bc, modes, phi, n }
    }

    fn alpha(&self, k: usize) -> f64 {
        axis_alpha(self.bc, self.length, k)
    }

    fn row(&self, k: usize) -> &[f64] {
        &self.phi[k * self.n..(k + 1) * self.n]
    }
}

/// Wavenumber of the `k`-th mode (0-based) on an axis.
fn axis_wavenumber(bc: BoundaryCondition, k: usize) -> f64 {
    match bc {
        BoundaryCondition::Dirichlet => (k + 1) as f64,
        BoundaryCondition::Neumann => k as f64,
    }
}

fn axis_alpha(bc: BoundaryCondition, length: f64, k: usize) -> f64 {
    let w = axis_wavenumber(bc, k) * PI / length;
    w * w
}

fn axis_phi(bc: BoundaryCondition, length: f64, k: usize, x: f64) -> f64 {
    let w = axis_wavenumber(bc, k) * PI / length;
    match bc {
        BoundaryCondition::Dirichlet => (2.0 / length).sqrt() * (w * x).sin(),
        BoundaryCondition::Neumann if k == 0 => (1.0 / length).sqrt(),
        BoundaryCondition::Neumann => (2.0 / length).sqrt() * (w * x).cos(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mode {
    /// Per-axis 0-based mode indices (second entry unused in 1D).
    pub index: [usize; 2],
    pub alpha: f64,
}

/// Laplacian eigenpairs sampled on the grid, ordered by eigenvalue.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenBasis {
    domain: Domain,
    axes: Vec<AxisBasis>,
    modes: Vec<Mode>,
    /// 2D only: position of each `(kx, ky)` in `modes`, or `usize::MAX`.
    slot: Vec<usize>,
}

impl EigenBasis {
    pub fn new(domain: &Domain, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::Resolution("need at least one mode".into()));
        }
        match domain.dim() {
            1 => {
                let cap = domain.axis_mode_cap(0);
                if k > cap {
                    return Err(Error::Resolution(format!("{k} modes exceed the cap N/2 = {cap}")));
                }
                let axis = AxisBasis::new(domain.extents[0], domain.bc, domain.grid[0], k);
                let modes = (0..k).map(|i| Mode { index: [i, 0], alpha: axis.alpha(i) }).collect();
                Ok(EigenBasis { domain: domain.clone(), axes: vec![axis], modes, slot: Vec::new() })
            }
            _ => {
                let (cx, cy) = (domain.axis_mode_cap(0), domain.axis_mode_cap(1));
                if k > cx * cy {
                    return Err(Error::Resolution(format!("{k} modes exceed the cap (Nx/2)(Ny/2) = {}", cx * cy)));
                }
                let (bc, lx, ly) = (domain.bc, domain.extents[0], domain.extents[1]);
                let mut all: Vec<Mode> = (0..cx)
                    .flat_map(|i| (0..cy).map(move |j| (i, j)))
                    .map(|(i, j)| Mode { index: [i, j], alpha: axis_alpha(bc, lx, i) + axis_alpha(bc, ly, j) })
                    .collect();
                all.sort_by(|a, b| a.alpha.total_cmp(&b.alpha).then(a.index.cmp(&b.index)));
                all.truncate(k);
                let mx = all.iter().map(|m| m.index[0]).max().unwrap_or(0) + 1;
                let my = all.iter().map(|m| m.index[1]).max().unwrap_or(0) + 1;
                let mut slot = vec![usize::MAX; mx * my];
                for (p, m) in all.iter().enumerate() {
                    slot[m.index[0] * my + m.index[1]] = p;
                }
                let axes = vec![
                    AxisBasis::new(lx, bc, domain.grid[0], mx),
                    AxisBasis::new(ly, bc, domain.grid[1], my),
                ];
                Ok(EigenBasis { domain: domain.clone(), axes, modes: all, slot })
            }
        }
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn modes(&self) -> &[Mode] {
        &self.modes
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        self.modes.iter().map(|m| m.alpha).collect()
    }

    pub fn points(&self) -> usize {
        self.domain.points()
    }

    /// Mode `k` evaluated at an arbitrary point of the closed domain.
    pub fn phi_at(&self, k: usize, x: &[f64]) -> f64 {
        let m = self.modes[k];
        let mut v = axis_phi(self.domain.bc, self.domain.extents[0], m.index[0], x[0]);
        if self.domain.dim() == 2 {
            v *= axis_phi(self.domain.bc, self.domain.extents[1], m.index[1], x[1]);
        }
        v
    }

    /// Mode `k` at flat grid index `j`.
    pub fn phi_grid(&self, k: usize, j: usize) -> f64 {
        let m = self.modes[k];
        match self.domain.dim() {
            1 => self.axes[0].phi[m.index[0] * self.axes[0].n + j],
            _ => {
                let ny = self.domain.grid[1];
                let (ix, iy) = (j / ny, j % ny);
                self.axes[0].phi[m.index[0] * self.axes[0].n + ix] * self.axes[1].phi[m.index[1] * self.axes[1].n + iy]
            }
        }
    }

    /// Coefficients `c_k = sum_j w phi_k(x_j) u_j` (midpoint rule).
    pub fn forward(&self, field: &[f64], coeffs: &mut [f64]) {
        debug_assert_eq!(field.len(), self.points());
        debug_assert_eq!(coeffs.len(), self.len());
        let w = self.domain.cell_volume();
        match self.domain.dim() {
            1 => {
                let axis = &self.axes[0];
                for (k, c) in coeffs.iter_mut().enumerate() {
                    *c = w * dot(axis.row(k), field);
                }
            }
            _ => {
                let (ax, ay) = (&self.axes[0], &self.axes[1]);
                let (nx, ny) = (ax.n, ay.n);
                // contract y first: tmp[ix][ky]
                let mut tmp = vec![0.0; nx * ay.modes];
                for ix in 0..nx {
                    let row = &field[ix * ny..(ix + 1) * ny];
                    for ky in 0..ay.modes {
                        tmp[ix * ay.modes + ky] = dot(ay.row(ky), row);
                    }
                }
                for (p, m) in self.modes.iter().enumerate() {
                    let (kx, ky) = (m.index[0], m.index[1]);
                    let phx = ax.row(kx);
                    let mut s = 0.0;
                    for ix in 0..nx {
                        s += phx[ix] * tmp[ix * ay.modes + ky];
                    }
                    coeffs[p] = w * s;
                }
            }
        }
    }

    /// Grid values `u_j = sum_k c_k phi_k(x_j)`.
    pub fn inverse(&self, coeffs: &[f64], field: &mut [f64]) {
        debug_assert_eq!(field.len(), self.points());
        match self.domain.dim() {
            1 => {
                let axis = &self.axes[0];
                field.iter_mut().for_each(|v| *v = 0.0);
                for (k, &c) in coeffs.iter().enumerate() {
                    if c != 0.0 {
                        axpy(c, axis.row(k), field);
                    }
                }
            }
            _ => {
                let (ax, ay) = (&self.axes[0], &self.axes[1]);
                let (nx, ny) = (ax.n, ay.n);
                // tmp[ky][ix] = sum_kx c(kx,ky) phi_kx(ix)
                let mut tmp = vec![0.0; ay.modes * nx];
                for (p, m) in self.modes.iter().enumerate() {
                    let c = coeffs[p];
                    if c != 0.0 {
                        let ky = m.index[1];
                        axpy(c, ax.row(m.index[0]), &mut tmp[ky * nx..(ky + 1) * nx]);
                    }
                }
                for ix in 0..nx {
                    let out = &mut field[ix * ny..(ix + 1) * ny];
                    out.iter_mut().for_each(|v| *v = 0.0);
                    for ky in 0..ay.modes {
                        let c = tmp[ky * nx + ix];
                        if c != 0.0 {
                            axpy(c, ay.row(ky), out);
                        }
                    }
                }
            }
        }
    }

    /// Position of per-axis indices in the mode list (2D).
    pub fn mode_position(&self, index: [usize; 2]) -> Option<usize> {
        if self.domain.dim() == 1 {
            return (index[0] < self.len() && index[1] == 0).then_some(index[0]);
        }
        let my = self.axes[1].modes;
        if index[0] >= self.axes[0].modes || index[1] >= my {
            return None;
        }
        let p = self.slot[index[0] * my + index[1]];
        (p != usize::MAX).then_some(p)
    }

    /// Spectral heat kernel of `d * Laplacian`, truncated at the basis size.
    pub fn heat_kernel(&self, diffusivity: f64, t: f64, x: &[f64], y: &[f64]) -> Result<f64> {
        if !(t > 0.0) {
            return Err(Error::Contract(format!("heat kernel needs t > 0, got {t}")));
        }
        let mut g = 0.0;
        for k in 0..self.len() {
            let e = (-diffusivity * self.modes[k].alpha * t).exp();
            g += e * (self.phi_at(k, x) * self.phi_at(k, y));
        }
        Ok(g)
    }

    /// Kernel matrix `G(t, x_i, x_j)` over grid points, row-major.
    pub fn heat_kernel_matrix(&self, diffusivity: f64, t: f64) -> Result<Vec<f64>> {
        if !(t > 0.0) {
            return Err(Error::Contract(format!("heat kernel needs t > 0, got {t}")));
        }
        let n = self.points();
        let damp: Vec<f64> = self.modes.iter().map(|m| (-diffusivity * m.alpha * t).exp()).collect();
        let table = self.grid_table();
        let mut g = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                let mut s = 0.0;
                for (k, e) in damp.iter().enumerate() {
                    s += e * (table[k * n + i] * table[k * n + j]);
                }
                g[i * n + j] = s;
                g[j * n + i] = s;
            }
        }
        Ok(g)
    }

    /// `G(t, x_j, x_j)` for every grid point.
    pub fn heat_kernel_diagonal(&self, diffusivity: f64, t: f64) -> Vec<f64> {
        let n = self.points();
        let mut diag = vec![0.0; n];
        for (k, m) in self.modes.iter().enumerate() {
            let e = (-diffusivity * m.alpha * t).exp();
            for (j, d) in diag.iter_mut().enumerate() {
                let p = self.phi_grid(k, j);
                *d += e * (p * p);
            }
        }
        diag
    }

    /// `phi_k(x_j)` as a dense `K x N` table.
    pub fn grid_table(&self) -> Vec<f64> {
        let n = self.points();
        let mut t = vec![0.0; self.len() * n];
        for k in 0..self.len() {
            for j in 0..n {
                t[k * n + j] = self.phi_grid(k, j);
            }
        }
        t
    }

    /// Damping factors `exp(-d alpha_k t)`.
    pub fn damping(&self, diffusivity: f64, t: f64) -> Vec<f64> {
        self.modes.iter().map(|m| (-diffusivity * m.alpha * t).exp()).collect()
    }

    /// `S(t)` in coefficient space.
    pub fn semigroup_coeffs(&self, diffusivity: f64, t: f64, coeffs: &mut [f64]) {
        for (c, m) in coeffs.iter_mut().zip(&self.modes) {
            *c *= (-diffusivity * m.alpha * t).exp();
        }
    }

    /// `S(t) u` for a grid field; `t = 0` is the projection onto the basis.
    pub fn semigroup_apply(&self, diffusivity: f64, t: f64, field: &[f64]) -> Result<Vec<f64>> {
        if !(t >= 0.0) {
            return Err(Error::Contract(format!("semigroup needs t >= 0, got {t}")));
        }
        let mut c = vec![0.0; self.len()];
        self.forward(field, &mut c);
        self.semigroup_coeffs(diffusivity, t, &mut c);
        let mut out = vec![0.0; self.points()];
        self.inverse(&c, &mut out);
        Ok(out)
    }

    /// Midpoint integral of a grid field.
    pub fn integrate(&self, field: &[f64]) -> f64 {
        self.domain.cell_volume() * field.iter().sum::<f64>()
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingularityFit {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub slope: f64,
    #[serde(rename = "C")]
    pub constant: f64,
    pub residuals: Vec<f64>,
}

impl SingularityFit {
    fn from(times: &[f64], values: Vec<f64>) -> Result<Self> {
        let (LineFit { slope, residuals, .. }, constant) = fit_power_law(times, &values)?;
        Ok(SingularityFit { times: times.to_vec(), values, slope, constant, residuals })
    }
}

/// Log-log slope of `sup_{x,y} G(t, x, y)` over grid points.
///
/// The truncated kernel is a nonnegative combination of `phi_k(x) phi_k(y)`,
/// hence positive semidefinite, so `G(x, y) <= sqrt(G(x, x) G(y, y))` and the
/// supremum is attained on the diagonal.
pub fn verify_kernel_singularity(basis: &EigenBasis, diffusivity: f64, times: &[f64]) -> Result<SingularityFit> {
    if times.len() < 3 {
        return Err(Error::DegenerateFit("need at least 3 times".into()));
    }
    let values = times
        .iter()
        .map(|&t| basis.heat_kernel_diagonal(diffusivity, t).into_iter().fold(f64::NEG_INFINITY, f64::max))
        .collect();
    SingularityFit::from(times, values)
}

/// Log-log slope of `sup_x int_D G(t, x, y)^{p/(p-1)} dy`; negative ringing of
/// the truncated kernel is clipped at zero before taking the power.
pub fn verify_kernel_power_bound(basis: &EigenBasis, diffusivity: f64, times: &[f64], p: f64) -> Result<SingularityFit> {
    if times.len() < 3 {
        return Err(Error::DegenerateFit("need at least 3 times".into()));
    }
    if !(p > 1.0) {
        return Err(Error::Contract("power bound needs p > 1".into()));
    }
    let q = p / (p - 1.0);
    let n = basis.points();
    let w = basis.domain().cell_volume();
    let mut values = Vec::with_capacity(times.len());
    for &t in times {
        let g = basis.heat_kernel_matrix(diffusivity, t)?;
        let sup = (0..n)
            .map(|i| w * g[i * n..(i + 1) * n].iter().map(|v| v.max(0.0).powf(q)).sum::<f64>())
            .fold(f64::NEG_INFINITY, f64::max);
        values.push(sup);
    }
    SingularityFit::from(times, values)
}
