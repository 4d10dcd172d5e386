//! Curvature data of framed hermitian line bundles on grids, the Liouville action
//! of the conformal anomaly, and the index audit for Alvarez boundary conditions.

use crate::error::{Error, Result};
use crate::spectra::{enumerate_spectrum, zeta_det, BoundaryCondition, Bundle, ModelGeometry};
use nalgebra::DMatrix;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::sync::Arc;

/// Tensor-product grids. Polar grids are uniform in r (nodes r_in + i h, i = 0..=n_r)
/// times a uniform periodic angle; `r_in = 0` is the disk, with the origin as node 0.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Grid {
    Polar { r_in: f64, r_out: f64, n_r: usize, n_theta: usize },
    Torus { a: f64, b: f64, nx: usize, ny: usize },
}

const FD_POINTS: usize = 9;

impl Grid {
    pub fn disk(radius: f64, n_r: usize, n_theta: usize) -> Self {
        Grid::Polar { r_in: 0.0, r_out: radius, n_r, n_theta }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Grid::Polar { r_in, r_out, n_r, n_theta } => {
                r_in >= 0.0 && r_out > r_in && n_r >= FD_POINTS && n_theta >= 8 && n_theta % 2 == 0
            }
            Grid::Torus { a, b, nx, ny } => a > 0.0 && b > 0.0 && nx >= 4 && ny >= 4,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("bad grid {self:?}")))
        }
    }

    pub fn for_geometry(geom: &ModelGeometry, n1: usize, n2: usize) -> Result<Self> {
        match *geom {
            ModelGeometry::Disk { radius } => Ok(Grid::disk(radius, n1, n2)),
            ModelGeometry::Annulus { r_in, r_out } => Ok(Grid::Polar { r_in, r_out, n_r: n1, n_theta: n2 }),
            ModelGeometry::Torus { a, b } => Ok(Grid::Torus { a, b, nx: n1, ny: n2 }),
            other => Err(Error::Unsupported(format!("no flat grid chart for {other:?}"))),
        }
    }

    fn dims(&self) -> (usize, usize) {
        match *self {
            Grid::Polar { n_r, n_theta, .. } => (n_r + 1, n_theta),
            Grid::Torus { nx, ny, .. } => (nx, ny),
        }
    }

    pub fn len(&self) -> usize {
        let (m, n) = self.dims();
        m * n
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn is_disk(&self) -> bool {
        matches!(*self, Grid::Polar { r_in, .. } if r_in == 0.0)
    }

    fn step(&self) -> f64 {
        match *self {
            Grid::Polar { r_in, r_out, n_r, .. } => (r_out - r_in) / n_r as f64,
            Grid::Torus { a, nx, .. } => a / nx as f64,
        }
    }

    fn radius(&self, i: usize) -> f64 {
        match *self {
            Grid::Polar { r_in, .. } => r_in + i as f64 * self.step(),
            Grid::Torus { .. } => 1.0,
        }
    }

    /// Cartesian position of node (i, j).
    pub fn point(&self, i: usize, j: usize) -> (f64, f64) {
        match *self {
            Grid::Polar { n_theta, .. } => {
                let r = self.radius(i);
                let th = 2.0 * PI * j as f64 / n_theta as f64;
                (r * th.cos(), r * th.sin())
            }
            Grid::Torus { a, b, nx, ny } => (a * i as f64 / nx as f64, b * j as f64 / ny as f64),
        }
    }

    pub fn sample<F: Fn(f64, f64) -> f64>(&self, f: F) -> Vec<f64> {
        let (m, n) = self.dims();
        let mut v = Vec::with_capacity(m * n);
        for i in 0..m {
            for j in 0..n {
                let (x, y) = self.point(i, j);
                v.push(f(x, y));
            }
        }
        v
    }

    pub fn euler_characteristic(&self) -> i32 {
        if self.is_disk() {
            1
        } else {
            0
        }
    }

    /// Every other node in each direction, when that still leaves a valid grid.
    fn coarsened(&self) -> Option<Grid> {
        let g = match *self {
            Grid::Polar { r_in, r_out, n_r, n_theta } if n_r % 2 == 0 && n_theta % 4 == 0 => {
                Grid::Polar { r_in, r_out, n_r: n_r / 2, n_theta: n_theta / 2 }
            }
            Grid::Torus { a, b, nx, ny } if nx % 2 == 0 && ny % 2 == 0 => Grid::Torus { a, b, nx: nx / 2, ny: ny / 2 },
            _ => return None,
        };
        g.validate().ok().map(|_| g)
    }

    fn subsample(&self, v: &[f64]) -> Vec<f64> {
        let (m, n) = self.dims();
        let mut out = Vec::new();
        for i in (0..m).step_by(2) {
            for j in (0..n).step_by(2) {
                out.push(v[i * n + j]);
            }
        }
        out
    }

    /// Coordinate (flat) area weights.
    fn flat_weights(&self) -> Vec<f64> {
        match *self {
            Grid::Polar { n_r, n_theta, .. } => {
                let wr = gregory_weights(n_r, self.step());
                let dth = 2.0 * PI / n_theta as f64;
                let mut w = Vec::with_capacity(self.len());
                for (i, wi) in wr.iter().enumerate() {
                    let r = self.radius(i);
                    w.extend(std::iter::repeat(wi * r * dth).take(n_theta));
                }
                w
            }
            Grid::Torus { a, b, nx, ny } => vec![a * b / (nx * ny) as f64; nx * ny],
        }
    }

    /// Boundary circles as (node row, outward sign).
    fn boundary_rows(&self) -> Vec<(usize, f64)> {
        match *self {
            Grid::Polar { r_in, n_r, .. } => {
                let mut rows = vec![(n_r, 1.0)];
                if r_in > 0.0 {
                    rows.push((0, -1.0));
                }
                rows
            }
            Grid::Torus { .. } => vec![],
        }
    }
}

/// Trapezoid rule with Gregory end corrections, fourth order.
fn gregory_weights(n: usize, h: f64) -> Vec<f64> {
    let mut w = vec![h; n + 1];
    let ends = [3.0 / 8.0, 7.0 / 6.0, 23.0 / 24.0];
    for (k, e) in ends.iter().enumerate() {
        w[k] = e * h;
        w[n - k] = e * h;
    }
    w
}

/// Finite-difference weights (Fornberg) for derivatives 0..=m at z on nodes x.
fn fornberg(z: f64, x: &[f64], m: usize) -> Vec<Vec<f64>> {
    let n = x.len();
    let mut c = vec![vec![0.0; m + 1]; n];
    let mut c1 = 1.0;
    let mut c4 = x[0] - z;
    c[0][0] = 1.0;
    for i in 1..n {
        let mn = i.min(m);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = x[i] - z;
        for j in 0..i {
            let c3 = x[i] - x[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[i][k] = c1 * (k as f64 * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
                }
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
            }
            for k in (1..=mn).rev() {
                c[j][k] = (c4 * c[j][k] - k as f64 * c[j][k - 1]) / c3;
            }
            c[j][0] = c4 * c[j][0] / c3;
        }
        c1 = c2;
    }
    c
}

struct PeriodicDiff {
    n: usize,
    period: f64,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl PeriodicDiff {
    fn new(n: usize, period: f64) -> Self {
        let mut planner = FftPlanner::new();
        PeriodicDiff { n, period, fwd: planner.plan_fft_forward(n), inv: planner.plan_fft_inverse(n) }
    }

    /// First and second derivatives of a periodic sample.
    fn derivs(&self, u: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = self.n;
        let mut buf: Vec<Complex64> = u.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        self.fwd.process(&mut buf);
        let mut d1 = buf.clone();
        let mut d2 = buf;
        let scale = 2.0 * PI / self.period;
        for k in 0..n {
            let kk = if k <= n / 2 { k as f64 } else { k as f64 - n as f64 };
            let w = kk * scale;
            let nyquist = n % 2 == 0 && k == n / 2;
            d1[k] = if nyquist { Complex64::new(0.0, 0.0) } else { d1[k] * Complex64::new(0.0, w) };
            d2[k] *= -w * w;
        }
        self.inv.process(&mut d1);
        self.inv.process(&mut d2);
        let norm = 1.0 / n as f64;
        (d1.iter().map(|z| z.re * norm).collect(), d2.iter().map(|z| z.re * norm).collect())
    }
}

/// Partial derivatives on a grid: index 1 is r (or x), index 2 is theta (or y).
struct Partials {
    d1: Vec<f64>,
    d11: Vec<f64>,
    d2: Vec<f64>,
    d22: Vec<f64>,
}

fn partials(grid: &Grid, u: &[f64]) -> Partials {
    let (m, n) = grid.dims();
    let mut p = Partials { d1: vec![0.0; m * n], d11: vec![0.0; m * n], d2: vec![0.0; m * n], d22: vec![0.0; m * n] };
    let (period2, period1) = match *grid {
        Grid::Polar { .. } => (2.0 * PI, None),
        Grid::Torus { a, b, .. } => (b, Some(a)),
    };
    let pd = PeriodicDiff::new(n, period2);
    for i in 0..m {
        let (a, b) = pd.derivs(&u[i * n..(i + 1) * n]);
        p.d2[i * n..(i + 1) * n].copy_from_slice(&a);
        p.d22[i * n..(i + 1) * n].copy_from_slice(&b);
    }
    match period1 {
        Some(a) => {
            let pd = PeriodicDiff::new(m, a);
            for j in 0..n {
                let col: Vec<f64> = (0..m).map(|i| u[i * n + j]).collect();
                let (d1, d11) = pd.derivs(&col);
                for i in 0..m {
                    p.d1[i * n + j] = d1[i];
                    p.d11[i * n + j] = d11[i];
                }
            }
        }
        None => radial_fd(grid, u, &mut p),
    }
    p
}

// Ninth-order-stencil differences in r. On the disk the stencil crosses the origin
// onto the opposite ray; elsewhere it is shifted inside [0, n_r].
fn radial_fd(grid: &Grid, u: &[f64], p: &mut Partials) {
    let (m, n) = grid.dims();
    let n_r = m - 1;
    let h = grid.step();
    let half = FD_POINTS / 2;
    let disk = grid.is_disk();
    let nodes: Vec<f64> = (0..FD_POINTS).map(|k| k as f64).collect();
    let patterns: Vec<Vec<Vec<f64>>> = (0..FD_POINTS).map(|z| fornberg(z as f64, &nodes, 2)).collect();
    for i in 0..m {
        let lo = if disk {
            (i as i64 - half as i64).min(n_r as i64 - (FD_POINTS as i64 - 1))
        } else {
            (i as i64 - half as i64).clamp(0, n_r as i64 - (FD_POINTS as i64 - 1))
        };
        let w = &patterns[(i as i64 - lo) as usize];
        for j in 0..n {
            let (mut s1, mut s2) = (0.0, 0.0);
            for (k, wk) in w.iter().enumerate() {
                let idx = lo + k as i64;
                let v = if idx >= 0 { u[idx as usize * n + j] } else { u[(-idx) as usize * n + (j + n / 2) % n] };
                s1 += wk[1] * v;
                s2 += wk[2] * v;
            }
            p.d1[i * n + j] = s1 / h;
            p.d11[i * n + j] = s2 / (h * h);
        }
    }
}

fn flat_laplacian(grid: &Grid, u: &[f64]) -> Vec<f64> {
    let p = partials(grid, u);
    let (m, n) = grid.dims();
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let r = grid.radius(i);
        for j in 0..n {
            let k = i * n + j;
            out[k] = match grid {
                Grid::Torus { .. } => p.d11[k] + p.d22[k],
                Grid::Polar { .. } if r == 0.0 => {
                    // the mean second radial derivative at the origin is half the laplacian
                    2.0 * (0..n).map(|jj| p.d11[jj]).sum::<f64>() / n as f64
                }
                Grid::Polar { .. } => p.d11[k] + p.d1[k] / r + p.d22[k] / (r * r),
            };
        }
    }
    out
}

fn flat_grad_dot(grid: &Grid, u: &[f64], v: &[f64]) -> Vec<f64> {
    let pu = partials(grid, u);
    let pv = partials(grid, v);
    let (m, n) = grid.dims();
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let r = grid.radius(i);
        for j in 0..n {
            let k = i * n + j;
            out[k] = match grid {
                Grid::Torus { .. } => pu.d1[k] * pv.d1[k] + pu.d2[k] * pv.d2[k],
                Grid::Polar { .. } if r == 0.0 => 2.0 * (0..n).map(|jj| pu.d1[jj] * pv.d1[jj]).sum::<f64>() / n as f64,
                Grid::Polar { .. } => pu.d1[k] * pv.d1[k] + pu.d2[k] * pv.d2[k] / (r * r),
            };
        }
    }
    out
}

/// Boundary data on one circle; arrays are indexed by angle.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BoundaryData {
    pub radius: f64,
    pub outward: f64,
    pub kappa: Vec<f64>,
    pub nu: Vec<f64>,
    /// ds quadrature weights in the metric rho
    pub length_weights: Vec<f64>,
}

/// Metric rho |dz|^2 and bundle metric h = |e|^2 of a holomorphic frame e, with
/// framing tau = z^winding e at the boundary.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GeometryBundleData {
    pub grid: Grid,
    pub log_rho: Vec<f64>,
    pub log_h: Vec<f64>,
    pub winding: i32,
    pub scalar_curvature: Vec<f64>,
    pub omega: Vec<f64>,
    /// dA quadrature weights in the metric rho
    pub area_weights: Vec<f64>,
    pub boundary: Vec<BoundaryData>,
}

/// Curvature data from positive samples of rho and h.
pub fn curvature_data(grid: &Grid, rho: &[f64], h: &[f64], winding: i32) -> Result<GeometryBundleData> {
    if rho.len() != grid.len() || h.len() != grid.len() {
        return Err(Error::InvalidArgument("sample length does not match the grid".into()));
    }
    if rho.iter().chain(h).any(|&x| !(x > 0.0) || !x.is_finite()) {
        return Err(Error::InvalidArgument("metric factors must be positive".into()));
    }
    let log_rho: Vec<f64> = rho.iter().map(|x| x.ln()).collect();
    let log_h: Vec<f64> = h.iter().map(|x| x.ln()).collect();
    curvature_data_log(grid, log_rho, log_h, winding)
}

fn curvature_data_log(grid: &Grid, log_rho: Vec<f64>, log_h: Vec<f64>, winding: i32) -> Result<GeometryBundleData> {
    grid.validate()?;
    if matches!(grid, Grid::Torus { .. }) && winding != 0 {
        return Err(Error::InvalidArgument("framing winding needs a boundary".into()));
    }
    let lap_rho = flat_laplacian(grid, &log_rho);
    let lap_h = flat_laplacian(grid, &log_h);
    let scalar_curvature: Vec<f64> = lap_rho.iter().zip(&log_rho).map(|(l, lr)| -l * (-lr).exp()).collect();
    let omega: Vec<f64> = lap_h.iter().zip(&log_rho).map(|(l, lr)| -0.5 * l * (-lr).exp()).collect();
    let area_weights: Vec<f64> = grid.flat_weights().iter().zip(&log_rho).map(|(w, lr)| w * lr.exp()).collect();

    let (_, n) = grid.dims();
    let mut boundary = Vec::new();
    if !grid.boundary_rows().is_empty() {
        let pr = partials(grid, &log_rho);
        let ph = partials(grid, &log_h);
        for (row, s) in grid.boundary_rows() {
            let r = grid.radius(row);
            let mut b = BoundaryData { radius: r, outward: s, kappa: vec![], nu: vec![], length_weights: vec![] };
            for j in 0..n {
                let k = row * n + j;
                let scale = (-0.5 * log_rho[k]).exp();
                b.kappa.push(scale * s * (1.0 / r + 0.5 * pr.d1[k]));
                b.nu.push(-0.5 * scale * s * (ph.d1[k] + 2.0 * winding as f64 / r));
                b.length_weights.push(r * 2.0 * PI / n as f64 / scale);
            }
            boundary.push(b);
        }
    }
    Ok(GeometryBundleData {
        grid: *grid,
        log_rho,
        log_h,
        winding,
        scalar_curvature,
        omega,
        area_weights,
        boundary,
    })
}

impl GeometryBundleData {
    /// Flat metric on the grid coordinates with the trivial bundle.
    pub fn flat(grid: &Grid) -> Result<Self> {
        curvature_data_log(grid, vec![0.0; grid.len()], vec![0.0; grid.len()], 0)
    }

    /// K^q with the induced metric h = rho^{-q} on dz^q and framing (-i dz/z)^q.
    pub fn canonical_power(grid: &Grid, log_rho: Vec<f64>, q: i32) -> Result<Self> {
        let log_h = log_rho.iter().map(|l| -(q as f64) * l).collect();
        let winding = if grid.boundary_rows().is_empty() { 0 } else { -q };
        curvature_data_log(grid, log_rho, log_h, winding)
    }

    /// The data for rho e^{2 sigma}, h e^{2 f}.
    pub fn conformal(&self, pair: &ConformalPair) -> Result<Self> {
        pair.check(&self.grid)?;
        let lr = self.log_rho.iter().zip(&pair.sigma).map(|(a, s)| a + 2.0 * s).collect();
        let lh = self.log_h.iter().zip(&pair.f).map(|(a, f)| a + 2.0 * f).collect();
        curvature_data_log(&self.grid, lr, lh, self.winding)
    }

    pub fn area(&self) -> f64 {
        self.area_weights.iter().sum()
    }

    fn integrate_bulk(&self, v: &[f64]) -> f64 {
        v.iter().zip(&self.area_weights).map(|(a, w)| a * w).sum()
    }

    fn integrate_boundary<F: Fn(&BoundaryData, usize) -> f64>(&self, f: F) -> f64 {
        self.boundary.iter().map(|b| (0..b.kappa.len()).map(|j| f(b, j) * b.length_weights[j]).sum::<f64>()).sum()
    }

    /// (1/4 pi) int R dA + (1/2 pi) int kappa ds, which should equal chi(M).
    pub fn gauss_bonnet(&self) -> f64 {
        self.integrate_bulk(&self.scalar_curvature) / (4.0 * PI) + self.integrate_boundary(|b, j| b.kappa[j]) / (2.0 * PI)
    }

    /// (1/2 pi) (int Omega dA - int nu ds), the degree of the framing.
    pub fn degree_integral(&self) -> f64 {
        (self.integrate_bulk(&self.omega) - self.integrate_boundary(|b, j| b.nu[j])) / (2.0 * PI)
    }

    /// Rows `i,j,x,y,R,Omega` for plotting.
    pub fn to_csv(&self) -> String {
        let (m, n) = self.grid.dims();
        let mut s = String::from("i,j,x,y,scalar_curvature,omega\n");
        for i in 0..m {
            for j in 0..n {
                let (x, y) = self.grid.point(i, j);
                let k = i * n + j;
                s.push_str(&format!("{i},{j},{x},{y},{},{}\n", self.scalar_curvature[k], self.omega[k]));
            }
        }
        s
    }

    fn coarsened(&self) -> Option<Self> {
        let g = self.grid.coarsened()?;
        curvature_data_log(&g, self.grid.subsample(&self.log_rho), self.grid.subsample(&self.log_h), self.winding).ok()
    }
}

/// rho = e^{2 sigma} rho_hat, h = e^{2 f} h_hat, sampled on a grid.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConformalPair {
    pub sigma: Vec<f64>,
    pub f: Vec<f64>,
}

impl ConformalPair {
    pub fn from_fn<S: Fn(f64, f64) -> f64, F: Fn(f64, f64) -> f64>(grid: &Grid, sigma: S, f: F) -> Self {
        ConformalPair { sigma: grid.sample(sigma), f: grid.sample(f) }
    }

    pub fn zero(grid: &Grid) -> Self {
        ConformalPair { sigma: vec![0.0; grid.len()], f: vec![0.0; grid.len()] }
    }

    pub fn add(&self, other: &ConformalPair) -> Self {
        ConformalPair {
            sigma: self.sigma.iter().zip(&other.sigma).map(|(a, b)| a + b).collect(),
            f: self.f.iter().zip(&other.f).map(|(a, b)| a + b).collect(),
        }
    }

    fn check(&self, grid: &Grid) -> Result<()> {
        if self.sigma.len() != grid.len() || self.f.len() != grid.len() {
            return Err(Error::InvalidArgument("conformal pair does not match the grid".into()));
        }
        if self.sigma.iter().chain(&self.f).any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument("conformal pair has non-finite samples".into()));
        }
        Ok(())
    }

    fn subsample(&self, grid: &Grid) -> Self {
        ConformalPair { sigma: grid.subsample(&self.sigma), f: grid.subsample(&self.f) }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LiouvilleTerms {
    pub gradient: f64,
    pub curvature: f64,
    pub boundary: f64,
    pub total: f64,
    /// change of the total against the grid with every other node, when available
    pub refinement_change: Option<f64>,
}

const REFINEMENT_TOL: f64 = 1e-6;

/// S(sigma, f) relative to the base data, by quadrature on the base grid. Fails if
/// halving the grid moves the value by more than 1e-6 (1 + |S|).
pub fn liouville_action(pair: &ConformalPair, base: &GeometryBundleData) -> Result<LiouvilleTerms> {
    let mut t = liouville_terms(pair, base)?;
    if let Some(coarse) = base.coarsened() {
        let tc = liouville_terms(&pair.subsample(&base.grid), &coarse)?;
        let change = t.total - tc.total;
        if change.abs() > REFINEMENT_TOL * (1.0 + t.total.abs()) {
            return Err(Error::Quadrature(format!("liouville action moved by {change:e} under refinement")));
        }
        t.refinement_change = Some(change);
    }
    Ok(t)
}

fn liouville_terms(pair: &ConformalPair, base: &GeometryBundleData) -> Result<LiouvilleTerms> {
    pair.check(&base.grid)?;
    let grid = &base.grid;
    let (s, f) = (&pair.sigma, &pair.f);
    let s_plus_f: Vec<f64> = s.iter().zip(f).map(|(a, b)| a + b).collect();
    // the gradient term is conformally invariant, so flat coordinates suffice
    let fs = flat_grad_dot(grid, f, &s_plus_f);
    let ss = flat_grad_dot(grid, s, s);
    let wflat = grid.flat_weights();
    let grad: f64 = (0..grid.len()).map(|k| (6.0 * fs[k] + ss[k]) * wflat[k]).sum();
    let curv: f64 = (0..grid.len())
        .map(|k| {
            (6.0 * base.omega[k] * (s[k] + 2.0 * f[k]) + base.scalar_curvature[k] * (s[k] + 3.0 * f[k]))
                * base.area_weights[k]
        })
        .sum();
    let (_, n) = grid.dims();
    let rows = grid.boundary_rows();
    let mut bdry = 0.0;
    for (b, (row, _)) in base.boundary.iter().zip(rows) {
        for j in 0..n {
            let k = row * n + j;
            bdry += (3.0 * b.nu[j] * (s[k] + 2.0 * f[k]) - b.kappa[j] * (s[k] + 3.0 * f[k])) * b.length_weights[j];
        }
    }
    let gradient = -grad / (6.0 * PI);
    let curvature = -curv / (6.0 * PI);
    let boundary = bdry / (3.0 * PI);
    Ok(LiouvilleTerms { gradient, curvature, boundary, total: gradient + curvature + boundary, refinement_change: None })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "case", rename_all = "snake_case")]
pub enum AnomalyCase {
    /// sigma = c, f = 0 on a flat torus or disk
    ConstantRescaling { geometry: ModelGeometry, c: f64 },
    /// flat unit disk to the round unit hemisphere, sigma = log(2/(1+|z|^2)), trivial bundle
    DiskToHemisphere,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnomalyConfig {
    pub case: AnomalyCase,
    pub n_r: usize,
    pub n_theta: usize,
    pub lambda_max: f64,
}

impl AnomalyConfig {
    pub fn new(case: AnomalyCase) -> Self {
        AnomalyConfig { case, n_r: 512, n_theta: 256, lambda_max: 42000.0 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AnomalyReport {
    pub case: AnomalyCase,
    /// log Det* - log det Gram for the base metric
    pub log_ratio_base: f64,
    pub log_ratio_target: f64,
    pub liouville: LiouvilleTerms,
    pub residual: f64,
    pub tail_error: f64,
}

// log Det* D - log det(Gram of the kernel) for the trivial bundle with Alvarez
// conditions (or on the closed torus, both real and imaginary parts). The kernel
// is spanned by constants, so the Gram determinant is a power of the area.
fn gram_normalized(geom: &ModelGeometry, lambda_max: f64) -> Result<(f64, f64)> {
    let gen = match geom {
        ModelGeometry::Torus { .. } => enumerate_spectrum(geom, BoundaryCondition::Closed, 0, lambda_max)?.doubled(),
        _ => enumerate_spectrum(geom, BoundaryCondition::AlvarezTrivial, 0, lambda_max)?,
    };
    let z = zeta_det(&gen, 0.0)?;
    Ok((z.log_det - z.dim_ker as f64 * geom.area().ln(), z.tail_error))
}

/// Residual of log[Det*/Gram](target) - log[Det*/Gram](base) - S(sigma, f).
pub fn anomaly_verify(config: &AnomalyConfig) -> Result<AnomalyReport> {
    let (base_geom, target_geom, grid, pair) = match config.case {
        AnomalyCase::ConstantRescaling { geometry, c } => {
            if !c.is_finite() {
                return Err(Error::InvalidArgument("rescaling constant must be finite".into()));
            }
            let target = match geometry {
                ModelGeometry::Torus { a, b } => ModelGeometry::Torus { a: a * c.exp(), b: b * c.exp() },
                ModelGeometry::Disk { radius } => ModelGeometry::Disk { radius: radius * c.exp() },
                other => return Err(Error::Unsupported(format!("constant rescaling on {other:?}"))),
            };
            let grid = Grid::for_geometry(&geometry, config.n_r, config.n_theta)?;
            let pair = ConformalPair::from_fn(&grid, |_, _| c, |_, _| 0.0);
            (geometry, target, grid, pair)
        }
        AnomalyCase::DiskToHemisphere => {
            let grid = Grid::disk(1.0, config.n_r, config.n_theta);
            let pair = ConformalPair::from_fn(&grid, |x, y| (2.0 / (1.0 + x * x + y * y)).ln(), |_, _| 0.0);
            (ModelGeometry::Disk { radius: 1.0 }, ModelGeometry::Hemisphere { r: 1.0 }, grid, pair)
        }
    };
    let base = GeometryBundleData::flat(&grid)?;
    let liouville = liouville_action(&pair, &base)?;
    let (log_ratio_base, e1) = gram_normalized(&base_geom, config.lambda_max)?;
    let (log_ratio_target, e2) = gram_normalized(&target_geom, config.lambda_max)?;
    Ok(AnomalyReport {
        case: config.case,
        log_ratio_base,
        log_ratio_target,
        liouville,
        residual: log_ratio_target - log_ratio_base - liouville.total,
        tail_error: e1 + e2,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IndexAudit {
    /// 2 deg(tau) + chi(M)
    pub index: i32,
    pub degree: i32,
    pub euler_characteristic: i32,
    pub curvature_integral_value: f64,
    pub kernel_count: Option<u32>,
    pub cokernel_count: Option<u32>,
}

const INDEX_TOL: f64 = 1e-8;

/// Index of P_L for Alvarez conditions on a flat disk or annulus, L = O or K^q with the
/// canonical framing (-i dz/z)^q. The curvature-integral form is evaluated on an
/// (n_r, n_theta) grid and the kernel and cokernel are counted mode by mode; any
/// disagreement is an error.
pub fn index(geom: &ModelGeometry, bundle: Bundle, n_r: usize, n_theta: usize) -> Result<IndexAudit> {
    geom.validate()?;
    let (r_in, r_out) = match *geom {
        ModelGeometry::Disk { radius } => (0.0, radius),
        ModelGeometry::Annulus { r_in, r_out } => (r_in, r_out),
        other => return Err(Error::Unsupported(format!("index audit needs a flat surface with boundary, got {other:?}"))),
    };
    let q = match bundle {
        Bundle::Trivial => 0,
        Bundle::CanonicalPower(q) => q,
    };
    let grid = Grid::Polar { r_in, r_out, n_r, n_theta };
    let data = GeometryBundleData::canonical_power(&grid, vec![0.0; grid.len()], q)?;
    let chi = geom.euler_characteristic();
    // the framing z^w has degree w on each outer circle and -w on each inner one
    let degree = if r_in == 0.0 { data.winding } else { 0 };
    let formula = 2 * degree + chi;
    let integral = 2.0 * data.degree_integral() + data.gauss_bonnet();
    if (integral - formula as f64).abs() > INDEX_TOL {
        return Err(Error::Degenerate(format!("curvature integral {integral} disagrees with index {formula}")));
    }
    let radii: Vec<f64> = if r_in == 0.0 { vec![r_out] } else { vec![r_in, r_out] };
    let kernel = alvarez_kernel_dim(&radii, r_in == 0.0, data.winding);
    // Serre duality: the cokernel is the kernel for K L^* with the dual framing
    let cokernel = alvarez_kernel_dim(&radii, r_in == 0.0, -1 - data.winding);
    if kernel as i32 - cokernel as i32 != formula {
        return Err(Error::Degenerate(format!("mode count {kernel} - {cokernel} disagrees with index {formula}")));
    }
    Ok(IndexAudit {
        index: formula,
        degree,
        euler_characteristic: chi,
        curvature_integral_value: integral,
        kernel_count: Some(kernel),
        cokernel_count: Some(cokernel),
    })
}

/// Real dimension of holomorphic sections psi e with Im(psi / z^w) = 0 on every
/// boundary circle. On the disk psi is a power series, on the annulus a Laurent
/// series. With g = psi z^{-w} = sum b_m z^m, frequency k couples b_k and b_{-k}.
fn alvarez_kernel_dim(radii: &[f64], disk: bool, winding: i32) -> u32 {
    let allowed = |m: i64| !disk || m >= -(winding as i64);
    let kmax = winding.unsigned_abs() as i64 + 4;
    let mut dim = 0;
    for k in 0..=kmax {
        // real unknowns: (re b_k, im b_k, re b_-k, im b_-k), or (re b_0, im b_0)
        let mut cols: Vec<usize> = vec![];
        if allowed(k) {
            cols.extend([0, 1]);
        }
        if k > 0 && allowed(-k) {
            cols.extend([2, 3]);
        }
        if cols.is_empty() {
            continue;
        }
        let mut rows: Vec<[f64; 4]> = vec![];
        for &r in radii {
            if k == 0 {
                rows.push([0.0, 1.0, 0.0, 0.0]);
            } else {
                // b_k r^k - conj(b_-k) r^-k = 0, normalized
                let (p, m) = (r.powi(k as i32), r.powi(-(k as i32)));
                let s = p.max(m);
                rows.push([p / s, 0.0, -m / s, 0.0]);
                rows.push([0.0, p / s, 0.0, m / s]);
            }
        }
        let a = DMatrix::from_fn(rows.len(), cols.len(), |i, j| rows[i][cols[j]]);
        let sv = a.svd(false, false).singular_values;
        let rank = sv.iter().filter(|&&s| s > 1e-10).count();
        dim += (cols.len() - rank) as u32;
    }
    dim
}
