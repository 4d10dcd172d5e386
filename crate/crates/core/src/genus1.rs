//! Genus one: theta functions with characteristics, the Arakelov Green function and
//! metric, Landau-level determinants of degree-d bundles, and the bosonization and
//! insertion identities with Fay's constants.

use crate::error::{Error, Result};
use crate::special::{dedekind_eta, gauss_legendre, riemann_zeta, riemann_zeta_deriv, theta1, theta3};
use crate::spectra::{zeta_det, HeatCoefficients, SpectrumGenerator};
use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// theta[a, b](z | tau) = sum_n exp(i pi tau (n+a)^2 + 2 pi i (n+a)(z+b)).
pub fn theta_char(a: f64, b: f64, z: C64, tau: C64) -> C64 {
    assert!(tau.im > 0.0, "tau must lie in the upper half plane");
    let i = C64::i();
    let nmax = (8.0 + (40.0 / (PI * tau.im)).sqrt() + z.im.abs() / tau.im) as i64 + 2;
    let mut s = C64::new(0.0, 0.0);
    for n in -nmax..=nmax {
        let m = n as f64 + a;
        s += (i * PI * tau * m * m + 2.0 * PI * i * m * (z + b)).exp();
    }
    s
}

/// Level-d theta basis theta[k/d, 0](d z | d tau), k = 0..d.
pub fn level_theta(k: usize, d: usize, z: C64, tau: C64) -> C64 {
    let df = d as f64;
    theta_char(k as f64 / df, 0.0, df * z, df * tau)
}

/// Results of checking the candidate Green function against its defining properties.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GreenCertificate {
    /// max |G(z,w) - G(w,z)| over sample pairs
    pub symmetry: f64,
    /// int mu(z) log G(z, w) on the quadrature grid
    pub normalization: f64,
    /// max |laplacian log G + 2 pi / Im tau| at sample points (flat coordinates)
    pub curvature: f64,
    /// variance of log rho_Ar over sample points
    pub metric_variance: f64,
    /// log rho_Ar from the short-distance limit, averaged over sample points
    pub log_metric_limit: f64,
    pub grid: usize,
}

const CERT_TOL: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Genus1Data {
    pub tau: C64,
    pub eta: C64,
    /// Arakelov metric rho_Ar |dz|^2; constant at genus one
    pub rho_ar: f64,
    /// area in the Arakelov metric of the fundamental domain of Z + tau Z
    pub area: f64,
    pub certificate: GreenCertificate,
}

// Deterministic sample points inside the fundamental domain.
fn sample_points(tau: C64) -> Vec<C64> {
    (0..7)
        .map(|k| {
            let x = (0.137 + 0.618_034 * k as f64).fract();
            let y = (0.291 + 0.414_214 * k as f64).fract();
            x + y * tau
        })
        .collect()
}

impl Genus1Data {
    /// Builds the data and certifies the Green function on an n x n normalization grid.
    pub fn new(tau: C64) -> Result<Self> {
        Genus1Data::with_grid(tau, 512)
    }

    pub fn with_grid(tau: C64, grid: usize) -> Result<Self> {
        if !(tau.im > 0.0) || !tau.re.is_finite() {
            return Err(Error::InvalidArgument(format!("tau = {tau} is not in the upper half plane")));
        }
        if grid < 8 {
            return Err(Error::InvalidArgument("normalization grid too small".into()));
        }
        let eta = dedekind_eta(tau);
        let rho_ar = (2.0 * PI * eta.norm_sqr()).powi(2);
        let mut data = Genus1Data {
            tau,
            eta,
            rho_ar,
            area: rho_ar * tau.im,
            certificate: GreenCertificate {
                symmetry: 0.0,
                normalization: 0.0,
                curvature: 0.0,
                metric_variance: 0.0,
                log_metric_limit: 0.0,
                grid,
            },
        };
        data.certificate = data.certify(grid);
        let c = data.certificate;
        if c.symmetry > 1e-12
            || c.normalization.abs() > CERT_TOL
            || c.curvature > 1e-4
            || c.metric_variance > 1e-8
            || (c.log_metric_limit - data.rho_ar.ln()).abs() > CERT_TOL
        {
            return Err(Error::Degenerate(format!("Green function failed certification: {c:?}")));
        }
        Ok(data)
    }

    /// log G(z, w) as a function of u = z - w.
    pub fn log_green_diff(&self, u: C64) -> f64 {
        let t = self.tau.im;
        -PI * u.im * u.im / t + theta1(u, self.tau).norm().ln() - self.eta.norm().ln()
    }

    /// G(z, w) = exp(-pi (Im(z-w))^2 / Im tau) |theta_1(z-w)| / |eta|.
    pub fn green(&self, z: C64, w: C64) -> Result<f64> {
        let u = z - w;
        let n = (u.im / self.tau.im).round();
        let r = u - n * self.tau;
        if (r - r.re.round()).norm() < 1e-12 {
            return Err(Error::InvalidArgument("Green function evaluated on the diagonal".into()));
        }
        Ok(self.log_green_diff(u).exp())
    }

    /// Normed theta function ||theta||^2(Z) = exp(-2 pi (Im Z)^2 / Im tau) |theta_3(Z)|^2.
    pub fn normed_theta_sq(&self, z: C64) -> f64 {
        (-2.0 * PI * z.im * z.im / self.tau.im).exp() * theta3(z, self.tau).norm_sqr()
    }

    fn certify(&self, grid: usize) -> GreenCertificate {
        let pts = sample_points(self.tau);
        let mut symmetry: f64 = 0.0;
        for (i, &z) in pts.iter().enumerate() {
            for &w in &pts[i + 1..] {
                let a = self.log_green_diff(z - w).exp();
                let b = self.log_green_diff(w - z).exp();
                symmetry = symmetry.max((a - b).abs());
            }
        }
        let mut curvature: f64 = 0.0;
        let w0 = C64::new(0.05, 0.03);
        for &z in &pts {
            let lap = laplacian_fd(|dz| self.log_green_diff(z + dz - w0));
            curvature = curvature.max((lap + 2.0 * PI / self.tau.im).abs());
        }
        // short-distance limit, Richardson-extrapolated in |z - w|^2
        let limits: Vec<f64> = pts
            .iter()
            .enumerate()
            .map(|(k, _)| {
                let dir = C64::from_polar(1.0, 0.7 + 1.3 * k as f64);
                let l = |d: f64| 2.0 * (self.log_green_diff(dir * d) - d.ln());
                let d = 1e-4;
                (4.0 * l(d / 2.0) - l(d)) / 3.0
            })
            .collect();
        let mean = limits.iter().sum::<f64>() / limits.len() as f64;
        let var = limits.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / limits.len() as f64;
        GreenCertificate {
            symmetry,
            normalization: self.green_normalization(grid),
            curvature,
            metric_variance: var,
            log_metric_limit: mean,
            grid,
        }
    }

    /// int mu log G(., w) on an n x n grid in lattice coordinates u = x + y tau. Each row
    /// subtracts log|1 - e^{2 pi i u}| + log|1 - e^{2 pi i (tau - u)}|, whose row mean is
    /// zero for 0 <= y <= 1 and which carries the zeros of theta_1 at 0 and tau; the
    /// remainder is analytic in x. Rows are combined with Gregory weights.
    pub fn green_normalization(&self, n: usize) -> f64 {
        let tau = self.tau;
        let t = tau.im;
        let one = C64::new(1.0, 0.0);
        let i2pi = C64::new(0.0, 2.0 * PI);
        let wy = gregory(n);
        let mut total = 0.0;
        for (j, wyj) in wy.iter().enumerate() {
            let y = j as f64 / n as f64;
            let mut row = 0.0;
            for i in 0..n {
                let x = (i as f64 + 0.5) / n as f64;
                let u = x + y * tau;
                let local = (one - (i2pi * u).exp()).norm().ln() + (one - (i2pi * (tau - u)).exp()).norm().ln();
                row += theta1(u, tau).norm().ln() - local;
            }
            let s = y * t;
            total += wyj * (row / n as f64 - PI * s * s / t);
        }
        total - self.eta.norm().ln()
    }

    /// The degree-d admissible metric in the theta gauge, h(z) = exp(-2 pi d (Im z)^2 / Im tau).
    pub fn theta_gauge_metric(&self, d: usize, z: C64) -> f64 {
        (-2.0 * PI * d as f64 * z.im * z.im / self.tau.im).exp()
    }
}

fn gregory(n: usize) -> Vec<f64> {
    let h = 1.0 / n as f64;
    let mut w = vec![h; n + 1];
    for (k, e) in [3.0 / 8.0, 7.0 / 6.0, 23.0 / 24.0].iter().enumerate() {
        w[k] = e * h;
        w[n - k] = e * h;
    }
    w
}

/// Bundle of degree d with divisor D = sum p_i and the admissible metric ||1_D|| = prod G(., p_i).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdmissibleBundle {
    pub degree: usize,
    pub divisor: Vec<C64>,
}

impl AdmissibleBundle {
    pub fn new(divisor: Vec<C64>) -> Result<Self> {
        if divisor.is_empty() {
            return Err(Error::InvalidArgument("degree must be positive".into()));
        }
        Ok(AdmissibleBundle { degree: divisor.len(), divisor })
    }

    pub fn h0(&self) -> usize {
        self.degree
    }

    /// log ||1_D||^2 at z.
    pub fn log_norm_sq(&self, data: &Genus1Data, z: C64) -> f64 {
        self.divisor.iter().map(|&p| 2.0 * data.log_green_diff(z - p)).sum()
    }

    /// Omega dA / mu = -(1/2) laplacian(log h) * Im tau, by finite differences at z; equals 2 pi d.
    pub fn curvature_ratio(&self, data: &Genus1Data, z: C64) -> f64 {
        -0.5 * laplacian_fd(|dz| self.log_norm_sq(data, z + dz)) * data.tau.im
    }
}

// Fourth-order five-point-per-axis Laplacian with step 1e-3.
fn laplacian_fd<F: Fn(C64) -> f64>(f: F) -> f64 {
    let h = 1e-3;
    let c = C64::new;
    let axis = |e: C64| -f(e * 2.0 * h) + 16.0 * f(e * h) + 16.0 * f(-e * h) - f(-e * 2.0 * h);
    (axis(c(1.0, 0.0)) + axis(c(0.0, 1.0)) - 60.0 * f(c(0.0, 0.0))) / (12.0 * h * h)
}

/// Spectrum of 2 dbar^* dbar on a degree-d bundle with an admissible metric: (4 pi d / A) k,
/// k >= 0, each with multiplicity d.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LandauLadder {
    pub degree: usize,
    pub area: f64,
}

impl LandauLadder {
    pub fn spacing(&self) -> f64 {
        4.0 * PI * self.degree as f64 / self.area
    }

    /// -d [zeta'(0) - log(c) zeta(0)] with c the spacing.
    pub fn log_det_closed_form(&self) -> f64 {
        let d = self.degree as f64;
        -d * (riemann_zeta_deriv(0.0) - self.spacing().ln() * riemann_zeta(0.0))
    }

    pub fn spectrum(&self, lambda_max: f64) -> SpectrumGenerator {
        SpectrumGenerator::equally_spaced("landau", self.spacing(), self.degree as u64, lambda_max)
    }
}

/// Lowest eigenvalues of 2 dbar^* dbar at degree d on a rectangular torus by dense
/// diagonalization. In the theta gauge, Fourier modes in Re z unfold the operator onto
/// d copies of (1/rho)(-g'' + 2 a y g') on the line with weight exp(-a y^2), a = 2 pi d / t;
/// after g = phi exp(a y^2 / 2) this is solved in an n-point Fourier basis on [-Y, Y).
pub fn landau_dense_levels(d: usize, data: &Genus1Data, n: usize, count: usize) -> Result<Vec<f64>> {
    if d == 0 {
        return Err(Error::InvalidArgument("degree must be positive".into()));
    }
    if data.tau.re != 0.0 {
        return Err(Error::Unsupported("dense Landau oracle needs a rectangular torus".into()));
    }
    let t = data.tau.im;
    let alpha = 2.0 * PI * d as f64 / t;
    let half = 9.0 / alpha.sqrt();
    let h = 2.0 * half / n as f64;
    let hth = 2.0 * PI / n as f64;
    let scale = (PI / half).powi(2);
    let mut m = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        for k in 0..n {
            let d2 = if j == k {
                -PI * PI / (3.0 * hth * hth) - 1.0 / 6.0
            } else {
                let sgn = if (j + k) % 2 == 0 { 1.0 } else { -1.0 };
                -sgn / (2.0 * ((j as f64 - k as f64) * hth / 2.0).sin().powi(2))
            };
            m[(j, k)] = -scale * d2;
        }
        let y = -half + j as f64 * h;
        m[(j, j)] += alpha * alpha * y * y - alpha;
    }
    let mut ev: Vec<f64> = SymmetricEigen::new(m).eigenvalues.iter().map(|l| l / data.rho_ar).collect();
    ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(ev.into_iter().take(count).flat_map(|l| std::iter::repeat(l).take(d)).collect())
}

/// Spectrum of the scalar Laplacian of the Arakelov metric on C / (Z + tau Z).
pub fn scalar_laplacian_spectrum(data: &Genus1Data, lambda_max: f64) -> SpectrumGenerator {
    let tau = data.tau;
    let t = tau.im;
    let f = 4.0 * PI * PI / (data.rho_ar * t * t);
    let r = (lambda_max / f).sqrt();
    let mmax = (r / t) as i64 + 2;
    let mut levels = Vec::new();
    for m in -mmax..=mmax {
        let centre = (m as f64 * tau.re).round() as i64;
        for n in centre - r as i64 - 2..=centre + r as i64 + 2 {
            let l = f * (m as f64 * tau - n as f64).norm_sqr();
            if l <= lambda_max {
                levels.push((l, 1));
            }
        }
    }
    let heat = HeatCoefficients { c_minus1: data.area / (4.0 * PI), c_half: 0.0, c_zero: 0.0 };
    SpectrumGenerator::from_levels("arakelov-torus", levels, 1, heat, lambda_max)
}

/// log Det* of the scalar Laplacian for the Arakelov metric, Kronecker limit form
/// log(rho (Im tau)^2 |eta|^4).
pub fn scalar_log_det_closed_form(data: &Genus1Data) -> f64 {
    (data.rho_ar * data.tau.im * data.tau.im).ln() + 4.0 * data.eta.norm().ln()
}

/// Gram matrix <omega_i, omega_j> of the level-d theta basis in the theta-gauge metric,
/// by the n x n midpoint rule in lattice coordinates.
pub fn theta_basis_gram(d: usize, data: &Genus1Data, n: usize) -> DMatrix<C64> {
    gram_of(d, data, n, |z| (0..d).map(|k| level_theta(k, d, z, data.tau)).collect(), |z| data.theta_gauge_metric(d, z))
}

fn gram_of<F: Fn(C64) -> Vec<C64>, H: Fn(C64) -> f64>(m: usize, data: &Genus1Data, n: usize, sections: F, weight: H) -> DMatrix<C64> {
    let mut g = DMatrix::<C64>::zeros(m, m);
    for ix in 0..n {
        for iy in 0..n {
            let z = (ix as f64 + 0.5) / n as f64 + (iy as f64 + 0.5) / n as f64 * data.tau;
            let w = weight(z);
            let v = sections(z);
            for i in 0..m {
                for j in 0..m {
                    g[(i, j)] += w * v[i] * v[j].conj();
                }
            }
        }
    }
    g * C64::new(data.area / (n * n) as f64, 0.0)
}

fn log_abs_det(m: &DMatrix<C64>) -> f64 {
    m.clone().lu().determinant().norm().ln()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DolbeaultDet {
    pub degree: usize,
    pub dim_ker: u64,
    pub log_det_closed_form: f64,
    pub log_det_spectral: f64,
    pub tail_error: f64,
    pub log_gram: f64,
}

pub fn dolbeault_det_torus(d: usize, data: &Genus1Data, n_grid: usize) -> Result<DolbeaultDet> {
    if d == 0 {
        return Err(Error::InvalidArgument("degree must be positive".into()));
    }
    let ladder = LandauLadder { degree: d, area: data.area };
    let z = zeta_det(&ladder.spectrum(1e3 * ladder.spacing()), 0.0)?;
    Ok(DolbeaultDet {
        degree: d,
        dim_ker: z.dim_ker,
        log_det_closed_form: ladder.log_det_closed_form(),
        log_det_spectral: z.log_det,
        tail_error: z.tail_error,
        log_gram: log_abs_det(&theta_basis_gram(d, data, n_grid)),
    })
}

/// Fay's constants at genus one with c_1 = -8 log 2 pi.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FayConstants {
    pub degree: usize,
    pub c_g: f64,
    pub c_g_closed_form: String,
    pub delta_g: f64,
    pub delta_g_closed_form: String,
    pub epsilon_gd: f64,
    pub epsilon_gd_closed_form: String,
    pub exp_c_over_12: f64,
}

pub fn fay_constants(d: usize) -> FayConstants {
    let two_pi = 2.0 * PI;
    let c = -8.0 * two_pi.ln();
    FayConstants {
        degree: d,
        c_g: c,
        c_g_closed_form: "-8 log(2 pi)".into(),
        delta_g: two_pi.powi(2) * (c / 6.0).exp(),
        delta_g_closed_form: "(2 pi)^(2/3)".into(),
        epsilon_gd: two_pi.powi(-(d as i32)),
        epsilon_gd_closed_form: "(2 pi)^(-d)".into(),
        exp_c_over_12: (c / 12.0).exp(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BosonizationRhs {
    pub log_constants: f64,
    pub log_det_scalar: f64,
    pub log_area: f64,
    pub log_im_tau: f64,
    pub log_green_product: f64,
    pub log_norm_det_omega: f64,
    pub log_norm_theta: f64,
    pub total: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BosonizationReport {
    pub degree: usize,
    pub tau: C64,
    pub points: Vec<C64>,
    pub lhs_log_det: f64,
    pub lhs_log_gram: f64,
    pub lhs: f64,
    pub rhs: BosonizationRhs,
    pub residual: f64,
    /// scalar determinant: spectral minus Kronecker closed form
    pub scalar_det_check: f64,
    pub tail_error: f64,
    pub constants: FayConstants,
}

const DEGENERATE_TOL: f64 = 1e-10;

/// log of both sides of the bosonization identity for the theta-gauge bundle of degree d,
/// with m = d generic points.
pub fn bosonization_verify(d: usize, points: &[C64], data: &Genus1Data, n_grid: usize) -> Result<BosonizationReport> {
    if d == 0 {
        return Err(Error::InvalidArgument("degree must be positive".into()));
    }
    if points.len() != d {
        return Err(Error::InvalidArgument(format!("{} points for degree {d}", points.len())));
    }
    let tau = data.tau;
    let t = tau.im;
    let lhs_det = dolbeault_det_torus(d, data, n_grid)?;

    let mut green = 0.0;
    for (i, &p) in points.iter().enumerate() {
        for (j, &q) in points.iter().enumerate() {
            if i != j {
                let g = data.log_green_diff(p - q);
                if !g.is_finite() || g.exp() < DEGENERATE_TOL {
                    return Err(Error::Degenerate("coincident points".into()));
                }
                green += g;
            }
        }
    }
    let mat = DMatrix::from_fn(d, d, |i, j| level_theta(i, d, points[j], tau));
    let det = mat.lu().determinant().norm();
    let scale = points.iter().map(|&p| data.theta_gauge_metric(d, p)).product::<f64>();
    if !(det > DEGENERATE_TOL) {
        return Err(Error::Degenerate("det omega_i(p_j) vanishes".into()));
    }
    let log_norm_det_omega = 2.0 * det.ln() + scale.ln();
    // [L] - sum p - delta for the theta-gauge bundle, delta the half period (1 + tau)/2
    let zz = (d as f64 - 1.0) * (1.0 + tau) / 2.0 - points.iter().sum::<C64>();
    let nt = data.normed_theta_sq(zz);
    if !(nt > DEGENERATE_TOL) {
        return Err(Error::Degenerate("theta vanishes at the divisor".into()));
    }

    let scalar = zeta_det(&scalar_laplacian_spectrum(data, 2e5), 0.0)?;
    let fc = fay_constants(d);
    let log_constants = fc.epsilon_gd.ln() + fc.delta_g.ln() + fc.c_g / 12.0;
    let (log_area, log_im_tau) = (data.area.ln(), t.ln());
    let total = log_constants - 0.5 * (scalar.log_det - log_area - log_im_tau) + green - log_norm_det_omega + nt.ln();
    let lhs = lhs_det.log_det_closed_form - lhs_det.log_gram;
    Ok(BosonizationReport {
        degree: d,
        tau,
        points: points.to_vec(),
        lhs_log_det: lhs_det.log_det_closed_form,
        lhs_log_gram: lhs_det.log_gram,
        lhs,
        rhs: BosonizationRhs {
            log_constants,
            log_det_scalar: scalar.log_det,
            log_area,
            log_im_tau,
            log_green_product: green,
            log_norm_det_omega,
            log_norm_theta: nt.ln(),
            total,
        },
        residual: lhs - total,
        scalar_det_check: scalar.log_det - scalar_log_det_closed_form(data),
        tail_error: scalar.tail_error + lhs_det.tail_error,
        constants: fc,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InsertionConfig {
    pub degree: usize,
    pub p: C64,
    /// zeros of the extra section of L(p) other than the one fixed by the multiplier
    pub zeros: Vec<C64>,
    /// rows give the basis of H^0(L) in terms of the level-d theta basis
    pub basis: Option<Vec<Vec<C64>>>,
    pub n_grid: usize,
}

impl InsertionConfig {
    pub fn new(degree: usize, p: C64) -> Self {
        let zeros = (0..degree).map(|k| C64::new(0.11 + 0.41 * k as f64, 0.37 + 0.29 * k as f64)).collect();
        InsertionConfig { degree, p, zeros, basis: None, n_grid: 48 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InsertionReport {
    pub degree: usize,
    pub p: C64,
    pub log_norm_omega0_at_p: f64,
    pub log_det_l: f64,
    pub log_det_lp: f64,
    pub log_gram_l: f64,
    pub log_gram_lp: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub residual: f64,
}

/// Both sides of the insertion identity for L of degree d (theta gauge, admissible metric)
/// and L(p) with the induced metric h G(., p)^2. The extra section omega_0 of L(p) is
/// g / theta_1(z - p) with g = e^{2 pi i (d/2) z} prod theta_1(z - a_i), its last zero
/// fixed by the multiplier of L.
pub fn insertion_verify(cfg: &InsertionConfig, data: &Genus1Data) -> Result<InsertionReport> {
    let d = cfg.degree;
    if d == 0 {
        return Err(Error::InvalidArgument("degree must be positive".into()));
    }
    if cfg.zeros.len() != d {
        return Err(Error::InvalidArgument(format!("need {d} zeros for the extra section")));
    }
    let tau = data.tau;
    let p = cfg.p;
    let basis = match &cfg.basis {
        None => DMatrix::<C64>::identity(d, d),
        Some(rows) => {
            if rows.len() != d || rows.iter().any(|r| r.len() != d) {
                return Err(Error::InvalidArgument("basis must be d x d".into()));
            }
            DMatrix::from_fn(d, d, |i, j| rows[i][j])
        }
    };
    if !(basis.clone().lu().determinant().norm() > DEGENERATE_TOL) {
        return Err(Error::InvalidArgument("basis change is not invertible".into()));
    }
    let half_d = d as f64 / 2.0;
    let mut zeros = cfg.zeros.clone();
    zeros.push(p - half_d * tau + half_d - cfg.zeros.iter().sum::<C64>());
    let g = |z: C64| -> C64 {
        (C64::new(0.0, 2.0 * PI * half_d) * z).exp() * zeros.iter().map(|&a| theta1(z - a, tau)).product::<C64>()
    };
    let eta2 = data.eta.norm_sqr();
    let h = |z: C64| data.theta_gauge_metric(d, z);
    let norm0 = g(p).norm_sqr() * h(p) / eta2;
    if !(norm0 > DEGENERATE_TOL) {
        return Err(Error::Degenerate("omega_0 vanishes at p".into()));
    }
    let omegas = |z: C64| -> Vec<C64> {
        let th: Vec<C64> = (0..d).map(|k| level_theta(k, d, z, tau)).collect();
        (0..d).map(|i| (0..d).map(|j| basis[(i, j)] * th[j]).sum()).collect()
    };
    let gram_l = gram_of(d, data, cfg.n_grid, &omegas, h);
    // sections of L(p) as (section of L with at most a pole at p) x 1_p; the factor
    // theta_1(z - p) of G(z, p) multiplies through so every integrand is smooth
    let gram_lp = gram_of(
        d + 1,
        data,
        cfg.n_grid,
        |z| {
            let th1 = theta1(z - p, tau);
            let mut v = vec![g(z)];
            v.extend(omegas(z).into_iter().map(|w| w * th1));
            v
        },
        |z| h(z) * (-2.0 * PI * (z - p).im.powi(2) / tau.im).exp() / eta2,
    );
    let log_det_l = LandauLadder { degree: d, area: data.area }.log_det_closed_form();
    let log_det_lp = LandauLadder { degree: d + 1, area: data.area }.log_det_closed_form();
    let (log_gram_l, log_gram_lp) = (log_abs_det(&gram_l), log_abs_det(&gram_lp));
    let lhs = (2.0 * PI).ln() + norm0.ln() + log_det_lp - log_gram_lp;
    let rhs = log_det_l - log_gram_l;
    Ok(InsertionReport {
        degree: d,
        p,
        log_norm_omega0_at_p: norm0.ln(),
        log_det_l,
        log_det_lp,
        log_gram_l,
        log_gram_lp,
        lhs,
        rhs,
        residual: lhs - rhs,
    })
}

/// Gauss-Legendre check of the theta-gauge metric's periodicity: ||omega(z)||^2 is a
/// function on the torus, so its values at z, z + 1 and z + tau agree. Returns the max
/// relative discrepancy over the level-d basis along a segment.
pub fn theta_norm_periodicity(d: usize, data: &Genus1Data) -> f64 {
    let (x, _) = gauss_legendre(8);
    let tau = data.tau;
    let mut worst: f64 = 0.0;
    for &s in &x {
        let z = C64::new(0.5 + 0.3 * s, 0.2 + 0.1 * s);
        for k in 0..d {
            let v = |z: C64| level_theta(k, d, z, tau).norm_sqr() * data.theta_gauge_metric(d, z);
            let base = v(z);
            worst = worst.max(((v(z + 1.0) - base) / base).abs()).max(((v(z + tau) - base) / base).abs());
        }
    }
    worst
}
