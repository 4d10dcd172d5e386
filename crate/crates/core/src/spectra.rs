//! Model geometries with explicit spectra, heat traces, heat coefficients and
//! zeta-regularized determinants by Mellin splitting.

use crate::error::{Error, Result};
use crate::special::{bessel_deriv_zeros, bessel_j, bessel_jp, bessel_zeros, erf, gauss_legendre, EULER_GAMMA};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelGeometry {
    Torus { a: f64, b: f64 },
    /// [0, b] x (circle of length a)
    Cylinder { a: f64, b: f64 },
    Disk { radius: f64 },
    Annulus { r_in: f64, r_out: f64 },
    Sphere { r: f64 },
    Hemisphere { r: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryCondition {
    Closed,
    /// trivial bundle, trivial framing: Neumann on the real part, Dirichlet on the imaginary part
    AlvarezTrivial,
    Dirichlet,
    Neumann,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bundle {
    Trivial,
    /// K^q with the metric induced from the surface and framing (-i dz/z)^q
    CanonicalPower(i32),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeatCoefficients {
    pub c_minus1: f64,
    pub c_half: f64,
    pub c_zero: f64,
}

impl ModelGeometry {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            ModelGeometry::Torus { a, b } | ModelGeometry::Cylinder { a, b } => a > 0.0 && b > 0.0,
            ModelGeometry::Disk { radius } => radius > 0.0,
            ModelGeometry::Annulus { r_in, r_out } => r_in > 0.0 && r_out > r_in,
            ModelGeometry::Sphere { r } | ModelGeometry::Hemisphere { r } => r > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("bad geometry {self:?}")))
        }
    }

    pub fn area(&self) -> f64 {
        match *self {
            ModelGeometry::Torus { a, b } | ModelGeometry::Cylinder { a, b } => a * b,
            ModelGeometry::Disk { radius } => PI * radius * radius,
            ModelGeometry::Annulus { r_in, r_out } => PI * (r_out * r_out - r_in * r_in),
            ModelGeometry::Sphere { r } => 4.0 * PI * r * r,
            ModelGeometry::Hemisphere { r } => 2.0 * PI * r * r,
        }
    }

    pub fn boundary_length(&self) -> f64 {
        match *self {
            ModelGeometry::Torus { .. } | ModelGeometry::Sphere { .. } => 0.0,
            ModelGeometry::Cylinder { a, .. } => 2.0 * a,
            ModelGeometry::Disk { radius } => 2.0 * PI * radius,
            ModelGeometry::Annulus { r_in, r_out } => 2.0 * PI * (r_in + r_out),
            ModelGeometry::Hemisphere { r } => 2.0 * PI * r,
        }
    }

    /// Integral of the Gauss curvature.
    pub fn total_gauss_curvature(&self) -> f64 {
        match *self {
            ModelGeometry::Sphere { .. } => 4.0 * PI,
            ModelGeometry::Hemisphere { .. } => 2.0 * PI,
            _ => 0.0,
        }
    }

    /// Integral of the geodesic curvature of the boundary (outward normal convention).
    pub fn total_geodesic_curvature(&self) -> f64 {
        match *self {
            ModelGeometry::Disk { .. } => 2.0 * PI,
            _ => 0.0,
        }
    }

    pub fn euler_characteristic(&self) -> i32 {
        match self {
            ModelGeometry::Torus { .. } | ModelGeometry::Cylinder { .. } | ModelGeometry::Annulus { .. } => 0,
            ModelGeometry::Disk { .. } | ModelGeometry::Hemisphere { .. } => 1,
            ModelGeometry::Sphere { .. } => 2,
        }
    }

    pub fn is_closed(&self) -> bool {
        matches!(self, ModelGeometry::Torus { .. } | ModelGeometry::Sphere { .. })
    }
}

/// Heat coefficients of the real Alvarez operator D_L (closed surfaces: D_L itself).
/// c_{-1} = area/2pi, c_{1/2} = 0, c_0 = (1/12pi) int (6 Omega + R) + (1/6pi) int_bdry (kappa - 3 nu).
pub fn heat_coefficients(geom: &ModelGeometry, bundle: Bundle) -> HeatCoefficients {
    let q = match bundle {
        Bundle::Trivial => 0.0,
        Bundle::CanonicalPower(q) => q as f64,
    };
    // R = 2K; Omega = -(q/2) R; nu = q kappa
    let int_r = 2.0 * geom.total_gauss_curvature();
    let int_omega = -0.5 * q * int_r;
    let int_kappa = geom.total_geodesic_curvature();
    let int_nu = q * int_kappa;
    HeatCoefficients {
        c_minus1: geom.area() / (2.0 * PI),
        c_half: 0.0,
        c_zero: (6.0 * int_omega + int_r) / (12.0 * PI) + (int_kappa - 3.0 * int_nu) / (6.0 * PI),
    }
}

/// Heat coefficients of a scalar Laplacian spectrum.
pub fn scalar_heat_coefficients(geom: &ModelGeometry, bc: BoundaryCondition) -> HeatCoefficients {
    let len = geom.boundary_length();
    let sign = match bc {
        BoundaryCondition::Dirichlet => -1.0,
        BoundaryCondition::Neumann => 1.0,
        _ => 0.0,
    };
    HeatCoefficients {
        c_minus1: geom.area() / (4.0 * PI),
        c_half: sign * len / (8.0 * PI.sqrt()),
        c_zero: (geom.total_gauss_curvature() + geom.total_geodesic_curvature()) / (12.0 * PI),
    }
}

/// Eigenvalues with multiplicities, complete up to `lambda_max`.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectrumGenerator {
    pub label: String,
    /// (eigenvalue, multiplicity), ascending
    pub levels: Vec<(f64, u64)>,
    pub dim_ker: u64,
    pub heat: HeatCoefficients,
    pub real_doubled: bool,
    /// the list contains every eigenvalue <= lambda_max
    pub lambda_max: f64,
    analytic: Option<AnalyticTrace>,
    analytic_factor: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum AnalyticTrace {
    Torus { a: f64, b: f64 },
    CylinderNeumann { a: f64, b: f64 },
    CylinderDirichlet { a: f64, b: f64 },
    /// c k, k >= 0, each with multiplicity m
    Ladder { c: f64, m: f64 },
}

/// sum_{m in Z} exp(-t (2 pi m / l)^2), Jacobi-transformed for small t.
pub fn circle_theta(t: f64, l: f64) -> f64 {
    let w = 2.0 * PI / l;
    if t * w * w > 1.0 {
        let mut s = 1.0;
        for m in 1..200 {
            let term = (-t * (w * m as f64).powi(2)).exp();
            s += 2.0 * term;
            if term < 1e-20 {
                break;
            }
        }
        s
    } else {
        let mut s = 1.0;
        for k in 1..200 {
            let term = (-(l * k as f64).powi(2) / (4.0 * t)).exp();
            s += 2.0 * term;
            if term < 1e-20 {
                break;
            }
        }
        l / (4.0 * PI * t).sqrt() * s
    }
}

impl AnalyticTrace {
    fn eval(&self, t: f64) -> f64 {
        match *self {
            AnalyticTrace::Torus { a, b } => circle_theta(t, a) * circle_theta(t, b),
            AnalyticTrace::CylinderNeumann { a, b } => circle_theta(t, a) * 0.5 * (circle_theta(t, 2.0 * b) + 1.0),
            AnalyticTrace::CylinderDirichlet { a, b } => circle_theta(t, a) * 0.5 * (circle_theta(t, 2.0 * b) - 1.0),
            AnalyticTrace::Ladder { c, m } => -m / (-c * t).exp_m1(),
        }
    }
}

fn sort_levels(mut v: Vec<(f64, u64)>) -> Vec<(f64, u64)> {
    v.sort_by(|x, y| x.0.partial_cmp(&y.0).expect("finite eigenvalues"));
    // merge numerically equal levels
    let mut out: Vec<(f64, u64)> = Vec::with_capacity(v.len());
    for (l, m) in v {
        if let Some(last) = out.last_mut() {
            if (last.0 - l).abs() <= 1e-12 * l.abs().max(1.0) {
                last.1 += m;
                continue;
            }
        }
        out.push((l, m));
    }
    out
}

fn bessel_levels(radius: f64, lambda_max: f64, neumann: bool) -> Vec<(f64, u64)> {
    let xmax = lambda_max.sqrt() * radius;
    let mut out = Vec::new();
    let mut m = 0u32;
    loop {
        if (m as f64) > xmax + 1.0 {
            break;
        }
        let count = ((xmax - m as f64).max(0.0) / PI) as usize + 3;
        let zeros = if neumann { bessel_deriv_zeros(m, count) } else { bessel_zeros(m, count) };
        let mult = if m == 0 { 1 } else { 2 };
        let mut any = false;
        for z in zeros {
            if z <= xmax {
                out.push(((z / radius).powi(2), mult));
                any = true;
            }
        }
        if !any && m > 0 {
            break;
        }
        m += 1;
    }
    out
}

fn roots_of<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let mut x0 = lo;
    let mut f0 = f(x0);
    while x0 < hi {
        let x1 = (x0 + step).min(hi);
        let f1 = f(x1);
        if f0 * f1 < 0.0 {
            let (mut a, mut b, mut fa) = (x0, x1, f0);
            for _ in 0..200 {
                let mid = 0.5 * (a + b);
                let fm = f(mid);
                if fm * fa <= 0.0 {
                    b = mid;
                } else {
                    a = mid;
                    fa = fm;
                }
                if b - a < 1e-15 * b {
                    break;
                }
            }
            out.push(0.5 * (a + b));
        }
        if x1 >= hi {
            break;
        }
        x0 = x1;
        f0 = f1;
    }
    out
}

/// Real Alvarez spectrum of the canonical bundle on the disk with framing -i dz/z.
/// Sections g dz with w = z g satisfy Re w = 0 and d/dr Im w = 0 on the boundary;
/// angular frequencies p and -p of w couple through a 2x2 secular determinant.
fn disk_canonical_levels(radius: f64, lambda_max: f64) -> Vec<(f64, u64)> {
    let kmax = lambda_max.sqrt() * radius;
    let rj = |n: i32, k: f64| bessel_j(n, k) + k * bessel_jp(n, k);
    let mut out = Vec::new();
    let step = 0.05;
    for z in roots_of(|k| bessel_j(1, k), 0.5, kmax, step) {
        out.push(((z / radius).powi(2), 1));
    }
    for z in roots_of(|k| rj(1, k), 0.5, kmax, step) {
        out.push(((z / radius).powi(2), 1));
    }
    let mut p = 1i32;
    loop {
        let start = ((p - 1) as f64 * 0.9).max(0.3);
        if start > kmax {
            break;
        }
        let f = |k: f64| -bessel_j(p - 1, k) * rj(p + 1, k) - bessel_j(p + 1, k) * rj(p - 1, k);
        for z in roots_of(f, start, kmax, step) {
            out.push(((z / radius).powi(2), 2));
        }
        p += 1;
    }
    out
}

fn annulus_levels(r_in: f64, r_out: f64, lambda_max: f64, neumann: bool) -> Vec<(f64, u64)> {
    let kmax = lambda_max.sqrt();
    let step = 0.05 * PI / (r_out - r_in);
    let mut out = Vec::new();
    let mut m = 0i32;
    loop {
        let yp = |n: i32, x: f64| {
            if n == 0 {
                -libm::y1(x)
            } else {
                0.5 * (libm::yn(n - 1, x) - libm::yn(n + 1, x))
            }
        };
        let f = |k: f64| {
            if neumann {
                bessel_jp(m, k * r_in) * yp(m, k * r_out) - bessel_jp(m, k * r_out) * yp(m, k * r_in)
            } else {
                bessel_j(m, k * r_in) * libm::yn(m, k * r_out) - bessel_j(m, k * r_out) * libm::yn(m, k * r_in)
            }
        };
        let start = (m as f64 / r_out * 0.9).max(1e-3);
        if start > kmax {
            break;
        }
        let mult = if m == 0 { 1 } else { 2 };
        for z in roots_of(f, start, kmax, step) {
            out.push((z * z, mult));
        }
        m += 1;
    }
    out
}

impl SpectrumGenerator {
    /// From an explicit level list, complete up to `lambda_max`. `heat` are the small-t
    /// coefficients of the full trace, zero modes included.
    pub fn from_levels(label: &str, levels: Vec<(f64, u64)>, dim_ker: u64, heat: HeatCoefficients, lambda_max: f64) -> Self {
        SpectrumGenerator {
            label: label.to_string(),
            levels: sort_levels(levels),
            dim_ker,
            heat,
            real_doubled: false,
            lambda_max,
            analytic: None,
            analytic_factor: 1.0,
        }
    }

    /// lambda_k = k for k >= 1, multiplicity 1. Heat trace 1/(e^t - 1) = 1/t - 1/2 + O(t).
    pub fn synthetic_integers(lambda_max: f64) -> Self {
        let levels = (1..=lambda_max as u64).map(|k| (k as f64, 1)).collect();
        SpectrumGenerator::from_levels(
            "integers",
            levels,
            0,
            HeatCoefficients { c_minus1: 1.0, c_half: 0.0, c_zero: -0.5 },
            lambda_max,
        )
    }

    /// c k for k >= 0 with multiplicity m (the k = 0 level is the kernel), with the
    /// closed-form trace m / (1 - e^{-ct}).
    pub fn equally_spaced(label: &str, c: f64, m: u64, lambda_max: f64) -> Self {
        let levels = (0..=(lambda_max / c) as u64).map(|k| (c * k as f64, m)).collect();
        let heat = HeatCoefficients { c_minus1: m as f64 / c, c_half: 0.0, c_zero: m as f64 / 2.0 };
        let mut g = SpectrumGenerator::from_levels(label, levels, m, heat, lambda_max);
        g.analytic = Some(AnalyticTrace::Ladder { c, m: m as f64 });
        g
    }

    /// Same spectrum with every multiplicity doubled (the real operator of a complex one).
    pub fn doubled(&self) -> Self {
        let mut g = self.clone();
        for l in g.levels.iter_mut() {
            l.1 *= 2;
        }
        g.dim_ker *= 2;
        g.heat = HeatCoefficients {
            c_minus1: 2.0 * self.heat.c_minus1,
            c_half: 2.0 * self.heat.c_half,
            c_zero: 2.0 * self.heat.c_zero,
        };
        g.real_doubled = true;
        g.analytic_factor *= 2.0;
        g.label = format!("{} (doubled)", self.label);
        g
    }

    /// Union of two spectra on the same geometry.
    pub fn union(&self, other: &Self, label: &str) -> Self {
        let mut levels = self.levels.clone();
        levels.extend(other.levels.iter().copied());
        SpectrumGenerator {
            label: label.to_string(),
            levels: sort_levels(levels),
            dim_ker: self.dim_ker + other.dim_ker,
            heat: HeatCoefficients {
                c_minus1: self.heat.c_minus1 + other.heat.c_minus1,
                c_half: self.heat.c_half + other.heat.c_half,
                c_zero: self.heat.c_zero + other.heat.c_zero,
            },
            real_doubled: self.real_doubled || other.real_doubled,
            lambda_max: self.lambda_max.min(other.lambda_max),
            analytic: None,
            analytic_factor: 1.0,
        }
    }

    /// Eigenvalues listed with multiplicity, ascending.
    pub fn expanded(&self) -> Vec<f64> {
        self.levels.iter().flat_map(|&(l, m)| std::iter::repeat(l).take(m as usize)).collect()
    }

    pub fn count_zero(&self) -> u64 {
        self.levels.iter().filter(|l| l.0.abs() < 1e-12).map(|l| l.1).sum()
    }

    pub fn smallest_nonzero(&self) -> f64 {
        self.levels.iter().find(|l| l.0 > 1e-12).map(|l| l.0).unwrap_or(f64::INFINITY)
    }

    /// Counting function N(L) = #{lambda <= L}.
    pub fn counting(&self, l: f64) -> u64 {
        self.levels.iter().take_while(|x| x.0 <= l).map(|x| x.1).sum()
    }

    fn theta_enumerated(&self, t: f64) -> f64 {
        let mut s = 0.0;
        for &(l, m) in &self.levels {
            let e = (-t * l).exp();
            if e < 1e-300 {
                break;
            }
            s += m as f64 * e;
        }
        s
    }

    /// Upper bound on the neglected part of the heat trace past lambda_max (Weyl growth).
    pub fn heat_tail_bound(&self, t: f64) -> f64 {
        if self.analytic.is_some() {
            return 0.0;
        }
        let c = self.heat.c_minus1.abs() + self.heat.c_half.abs() + 1.0;
        let lm = self.lambda_max;
        (-t * lm).exp() * c * (lm + 1.0 / t + lm.sqrt()) * 2.0
    }

    fn theta(&self, t: f64) -> f64 {
        match &self.analytic {
            Some(a) => self.analytic_factor * a.eval(t),
            None => self.theta_enumerated(t),
        }
    }
}

pub fn enumerate_spectrum(
    geom: &ModelGeometry,
    bc: BoundaryCondition,
    degree: i32,
    lambda_max: f64,
) -> Result<SpectrumGenerator> {
    geom.validate()?;
    if degree != 0 {
        return Err(Error::Unsupported(format!(
            "degree {degree} spectra are generated in genus1 (Landau levels) or by disk_canonical_spectrum"
        )));
    }
    if !(lambda_max > 0.0) {
        return Err(Error::InvalidArgument("lambda_max must be positive".into()));
    }
    let unsupported = || Err(Error::Unsupported(format!("{geom:?} with {bc:?}")));
    let sh = |b| scalar_heat_coefficients(geom, b);
    let gen = match (*geom, bc) {
        (ModelGeometry::Torus { a, b }, BoundaryCondition::Closed) => {
            let mut levels = Vec::new();
            let mm = (lambda_max.sqrt() * a / (2.0 * PI)) as i64 + 1;
            let nn = (lambda_max.sqrt() * b / (2.0 * PI)) as i64 + 1;
            for m in -mm..=mm {
                for n in -nn..=nn {
                    let l = (2.0 * PI * m as f64 / a).powi(2) + (2.0 * PI * n as f64 / b).powi(2);
                    if l <= lambda_max {
                        levels.push((l, 1));
                    }
                }
            }
            let mut g = SpectrumGenerator::from_levels("torus", levels, 1, sh(BoundaryCondition::Closed), lambda_max);
            g.analytic = Some(AnalyticTrace::Torus { a, b });
            g
        }
        (ModelGeometry::Cylinder { a, b }, BoundaryCondition::Neumann | BoundaryCondition::Dirichlet) => {
            let neumann = bc == BoundaryCondition::Neumann;
            let mut levels = Vec::new();
            let mm = (lambda_max.sqrt() * a / (2.0 * PI)) as i64 + 1;
            let kk = (lambda_max.sqrt() * b / PI) as i64 + 1;
            for m in -mm..=mm {
                for k in (if neumann { 0 } else { 1 })..=kk {
                    let l = (2.0 * PI * m as f64 / a).powi(2) + (PI * k as f64 / b).powi(2);
                    if l <= lambda_max {
                        levels.push((l, 1));
                    }
                }
            }
            let mut g = SpectrumGenerator::from_levels(
                if neumann { "cylinder-neumann" } else { "cylinder-dirichlet" },
                levels,
                neumann as u64,
                sh(bc),
                lambda_max,
            );
            g.analytic = Some(if neumann {
                AnalyticTrace::CylinderNeumann { a, b }
            } else {
                AnalyticTrace::CylinderDirichlet { a, b }
            });
            g
        }
        (ModelGeometry::Disk { radius }, BoundaryCondition::Dirichlet) => {
            SpectrumGenerator::from_levels("disk-dirichlet", bessel_levels(radius, lambda_max, false), 0, sh(bc), lambda_max)
        }
        (ModelGeometry::Disk { radius }, BoundaryCondition::Neumann) => {
            let mut levels = bessel_levels(radius, lambda_max, true);
            levels.push((0.0, 1));
            SpectrumGenerator::from_levels("disk-neumann", levels, 1, sh(bc), lambda_max)
        }
        (ModelGeometry::Annulus { r_in, r_out }, BoundaryCondition::Dirichlet | BoundaryCondition::Neumann) => {
            let neumann = bc == BoundaryCondition::Neumann;
            let mut levels = annulus_levels(r_in, r_out, lambda_max, neumann);
            if neumann {
                levels.push((0.0, 1));
            }
            SpectrumGenerator::from_levels(
                if neumann { "annulus-neumann" } else { "annulus-dirichlet" },
                levels,
                neumann as u64,
                sh(bc),
                lambda_max,
            )
        }
        (ModelGeometry::Sphere { r }, BoundaryCondition::Closed) => {
            let mut levels = Vec::new();
            let mut l = 0u64;
            loop {
                let ev = (l * (l + 1)) as f64 / (r * r);
                if ev > lambda_max {
                    break;
                }
                levels.push((ev, 2 * l + 1));
                l += 1;
            }
            SpectrumGenerator::from_levels("sphere", levels, 1, sh(BoundaryCondition::Closed), lambda_max)
        }
        (ModelGeometry::Hemisphere { r }, BoundaryCondition::Dirichlet | BoundaryCondition::Neumann) => {
            let neumann = bc == BoundaryCondition::Neumann;
            let mut levels = Vec::new();
            let mut l = 0u64;
            loop {
                let ev = (l * (l + 1)) as f64 / (r * r);
                if ev > lambda_max {
                    break;
                }
                let mult = if neumann { l + 1 } else { l };
                if mult > 0 {
                    levels.push((ev, mult));
                }
                l += 1;
            }
            SpectrumGenerator::from_levels(
                if neumann { "hemisphere-neumann" } else { "hemisphere-dirichlet" },
                levels,
                neumann as u64,
                sh(bc),
                lambda_max,
            )
        }
        (
            g @ (ModelGeometry::Cylinder { .. }
            | ModelGeometry::Disk { .. }
            | ModelGeometry::Annulus { .. }
            | ModelGeometry::Hemisphere { .. }),
            BoundaryCondition::AlvarezTrivial,
        ) => {
            let n = enumerate_spectrum(&g, BoundaryCondition::Neumann, 0, lambda_max)?;
            let d = enumerate_spectrum(&g, BoundaryCondition::Dirichlet, 0, lambda_max)?;
            let mut u = n.union(&d, "alvarez-trivial");
            u.real_doubled = true;
            u
        }
        _ => return unsupported(),
    };
    Ok(gen)
}

/// Real Alvarez spectrum of K on the disk with framing -i dz/z.
pub fn disk_canonical_spectrum(radius: f64, lambda_max: f64) -> Result<SpectrumGenerator> {
    let geom = ModelGeometry::Disk { radius };
    geom.validate()?;
    let mut g = SpectrumGenerator::from_levels(
        "disk-canonical",
        disk_canonical_levels(radius, lambda_max),
        0,
        heat_coefficients(&geom, Bundle::CanonicalPower(1)),
        lambda_max,
    );
    g.real_doubled = true;
    Ok(g)
}

pub fn heat_trace(gen: &SpectrumGenerator, t: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::InvalidArgument("heat trace needs t > 0".into()));
    }
    let v = gen.theta(t);
    if gen.heat_tail_bound(t) > 1e-14 * v.abs().max(1.0) {
        return Err(Error::InsufficientTruncation);
    }
    Ok(v)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZetaResult {
    pub log_det: f64,
    pub dim_ker: u64,
    pub tail_error: f64,
    pub lambda_shift: f64,
}

fn gl_integrate<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, panels: usize, nodes: &(Vec<f64>, Vec<f64>)) -> f64 {
    let h = (b - a) / panels as f64;
    let mut total = 0.0;
    for p in 0..panels {
        let lo = a + p as f64 * h;
        let mut s = 0.0;
        for (x, w) in nodes.0.iter().zip(&nodes.1) {
            s += w * f(lo + 0.5 * h * (x + 1.0));
        }
        total += 0.5 * h * s;
    }
    total
}

/// int_0^1 (e^{-lt} - 1 + l t)/t^2 dt
fn j_minus1(l: f64, gl: &(Vec<f64>, Vec<f64>)) -> f64 {
    let f = |t: f64| {
        let x = l * t;
        if x < 0.1 {
            // series sum_{k>=2} (-x)^k/k! / t^2
            let mut term = x * x / 2.0;
            let mut s = term;
            for k in 3..30 {
                term *= -x / k as f64;
                s += term;
            }
            s / (t * t)
        } else {
            ((-x).exp_m1() + x) / (t * t)
        }
    };
    gl_integrate(&f, 0.0, 1.0, 8, gl)
}

/// int_0^1 (e^{-lt} - 1)/t dt
fn j_zero(l: f64, gl: &(Vec<f64>, Vec<f64>)) -> f64 {
    let f = |t: f64| if t == 0.0 { -l } else { (-l * t).exp_m1() / t };
    gl_integrate(&f, 0.0, 1.0, 8, gl)
}

struct MellinPieces {
    zeta_prime: f64,
    lambda_derivative: f64,
}

fn mellin(gen: &SpectrumGenerator, lambda: f64, t_min: f64) -> Result<MellinPieces> {
    let gl = gauss_legendre(20);
    let h = gen.heat;
    let dk = gen.dim_ker as f64;
    let theta = |t: f64| gen.theta(t);
    let rem = |t: f64| theta(t) - h.c_minus1 / t - h.c_half / t.sqrt() - h.c_zero;
    let weight = |t: f64| (-lambda * t).exp();

    // fit the remainder below t_min with t^{1/2}, t, t^{3/2}, t^2
    let npts = 40;
    let ts: Vec<f64> = (0..npts).map(|i| t_min * 20f64.powf(i as f64 / (npts - 1) as f64)).collect();
    let powers = [0.5, 1.0, 1.5, 2.0];
    let x = DMatrix::from_fn(npts, powers.len(), |i, j| ts[i].powf(powers[j]));
    let y = DVector::from_iterator(npts, ts.iter().map(|&t| rem(t)));
    let coef = x
        .clone()
        .svd(true, true)
        .solve(&y, 1e-14)
        .map_err(|e| Error::Quadrature(e.to_string()))?;
    // int_0^{t_min} t^{p-1} e^{-lambda t} dt with t = u^2
    let umax = t_min.sqrt();
    let mut head = 0.0;
    let mut head_d = 0.0;
    for (j, &p) in powers.iter().enumerate() {
        let f = |u: f64| 2.0 * u.powf(2.0 * p - 1.0) * (-lambda * u * u).exp();
        let fd = |u: f64| -2.0 * u.powf(2.0 * p + 1.0) * (-lambda * u * u).exp();
        head += coef[j] * gl_integrate(&f, 0.0, umax, 2, &gl);
        head_d += coef[j] * gl_integrate(&fd, 0.0, umax, 2, &gl);
    }

    // int_{t_min}^1 R(t) e^{-lambda t} dt/t in x = log t
    let fx = |x: f64| {
        let t = x.exp();
        rem(t) * weight(t)
    };
    let fxd = |x: f64| {
        let t = x.exp();
        -rem(t) * weight(t) * t
    };
    let panels = ((1.0 / t_min).ln() * 3.0).ceil() as usize + 4;
    let mid = gl_integrate(&fx, t_min.ln(), 0.0, panels, &gl);
    let mid_d = gl_integrate(&fxd, t_min.ln(), 0.0, panels, &gl);

    // int_1^inf (Theta - kernel) e^{-lambda t}/t
    let ker = if lambda > 0.0 { 0.0 } else { dk };
    let gap = if lambda > 0.0 { lambda.min(gen.smallest_nonzero() + lambda) } else { gen.smallest_nonzero() };
    if !gap.is_finite() || gap <= 0.0 {
        return Err(Error::InvalidArgument("spectrum has no positive eigenvalue".into()));
    }
    let t_end = 1.0 + 45.0 / gap;
    let ft = |t: f64| (theta(t) - ker) * weight(t) / t;
    let ftd = |t: f64| -(theta(t) - ker) * weight(t);
    let tail_panels = ((t_end - 1.0) * gap).ceil() as usize * 2 + 8;
    let tail = gl_integrate(&ft, 1.0, t_end, tail_panels, &gl);
    let tail_d = gl_integrate(&ftd, 1.0, t_end, tail_panels, &gl);

    let (closed, closed_d) = if lambda > 0.0 {
        let dm1 = j_minus1(lambda, &gl) - 1.0 - lambda * EULER_GAMMA;
        let sl = lambda.sqrt();
        let dh = -2.0 * (-lambda).exp() - 2.0 * (PI * lambda).sqrt() * erf(sl);
        let j0 = j_zero(lambda, &gl);
        let d0 = j0 + EULER_GAMMA;
        let dm1_d = -j0 - EULER_GAMMA;
        let dh_d = -(PI / lambda).sqrt() * erf(sl);
        let d0_d = -(1.0 - (-lambda).exp()) / lambda;
        (
            h.c_minus1 * dm1 + h.c_half * dh + h.c_zero * d0,
            h.c_minus1 * dm1_d + h.c_half * dh_d + h.c_zero * d0_d,
        )
    } else {
        (-h.c_minus1 - 2.0 * h.c_half + (h.c_zero - dk) * EULER_GAMMA, f64::NAN)
    };
    Ok(MellinPieces {
        zeta_prime: head + mid + tail + closed,
        lambda_derivative: -(head_d + mid_d + tail_d + closed_d),
    })
}

fn default_t_min(gen: &SpectrumGenerator) -> f64 {
    match gen.analytic {
        // winding terms exp(-l^2/4t) must stay invisible in the fit window
        Some(AnalyticTrace::Torus { a, b })
        | Some(AnalyticTrace::CylinderNeumann { a, b })
        | Some(AnalyticTrace::CylinderDirichlet { a, b }) => 1e-4 * a.min(b).min(1.0).powi(2),
        Some(AnalyticTrace::Ladder { .. }) => 1e-4,
        None => 42.0 / gen.lambda_max,
    }
}

/// Least-squares fit of the heat trace on [t_min, t_max] by t^-1, t^-1/2, 1, t^1/2, t.
pub fn fit_heat_coefficients(gen: &SpectrumGenerator, t_min: f64, t_max: f64) -> Result<HeatCoefficients> {
    if !(t_min > 0.0 && t_max > t_min) {
        return Err(Error::InvalidArgument("fit window must satisfy 0 < t_min < t_max".into()));
    }
    let npts = 60;
    let ratio = t_max / t_min;
    let ts: Vec<f64> = (0..npts).map(|i| t_min * ratio.powf(i as f64 / (npts - 1) as f64)).collect();
    let powers = [-1.0, -0.5, 0.0, 0.5, 1.0];
    let x = DMatrix::from_fn(npts, powers.len(), |i, j| ts[i].powf(powers[j]));
    let mut y = DVector::zeros(npts);
    for (i, &t) in ts.iter().enumerate() {
        if gen.analytic.is_none() && gen.heat_tail_bound(t) > 1e-12 * gen.theta(t).abs().max(1.0) {
            return Err(Error::InsufficientTruncation);
        }
        y[i] = gen.theta(t);
    }
    let coef = x.svd(true, true).solve(&y, 1e-15).map_err(|e| Error::Quadrature(e.to_string()))?;
    Ok(HeatCoefficients { c_minus1: coef[0], c_half: coef[1], c_zero: coef[2] })
}

/// Free fit on [t_min, 20 t_min]; error if any coefficient deviates by more than 5%.
pub fn check_heat_coefficients(gen: &SpectrumGenerator) -> Result<HeatCoefficients> {
    let t_min = default_t_min(gen);
    let fitted = fit_heat_coefficients(gen, t_min, 20.0 * t_min).map_err(|e| match e {
        Error::InsufficientTruncation => Error::CoefficientMismatch,
        e => e,
    })?;
    let h = gen.heat;
    let scale = h.c_minus1.abs() + h.c_half.abs() + h.c_zero.abs() + 1.0;
    for (f, g) in [(fitted.c_minus1, h.c_minus1), (fitted.c_half, h.c_half), (fitted.c_zero, h.c_zero)] {
        if (f - g).abs() > 0.05 * g.abs() + 1e-3 * scale {
            return Err(Error::CoefficientMismatch);
        }
    }
    Ok(fitted)
}

/// -zeta'(0) for Delta + lambda_shift; for lambda_shift = 0 zero modes are excluded.
pub fn zeta_det(gen: &SpectrumGenerator, lambda_shift: f64) -> Result<ZetaResult> {
    if lambda_shift < 0.0 {
        return Err(Error::InvalidArgument("lambda_shift must be >= 0".into()));
    }
    check_heat_coefficients(gen)?;
    let t_min = default_t_min(gen);
    let a = mellin(gen, lambda_shift, t_min)?;
    let b = mellin(gen, lambda_shift, 2.0 * t_min)?;
    Ok(ZetaResult {
        log_det: -a.zeta_prime,
        dim_ker: if lambda_shift > 0.0 { 0 } else { gen.dim_ker },
        tail_error: (a.zeta_prime - b.zeta_prime).abs(),
        lambda_shift,
    })
}

/// d/d lambda log Det(Delta + lambda), the zeta-regularized trace of (Delta + lambda)^{-1}.
pub fn log_det_lambda_derivative(gen: &SpectrumGenerator, lambda: f64) -> Result<f64> {
    if !(lambda > 0.0) {
        return Err(Error::InvalidArgument("lambda must be positive".into()));
    }
    Ok(mellin(gen, lambda, default_t_min(gen))?.lambda_derivative)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::special::riemann_zeta_deriv;

    #[test]
    fn torus_first_level() {
        let g = enumerate_spectrum(&ModelGeometry::Torus { a: 1.0, b: 1.0 }, BoundaryCondition::Closed, 0, 100.0).unwrap();
        assert_eq!(g.levels[0], (0.0, 1));
        assert!((g.levels[1].0 - 4.0 * PI * PI).abs() < 1e-12);
        assert_eq!(g.levels[1].1, 4);
    }

    #[test]
    fn sphere_and_disk_first_levels() {
        let s = enumerate_spectrum(&ModelGeometry::Sphere { r: 1.0 }, BoundaryCondition::Closed, 0, 50.0).unwrap();
        assert_eq!(s.levels[1], (2.0, 3));
        let d = enumerate_spectrum(&ModelGeometry::Disk { radius: 1.0 }, BoundaryCondition::Dirichlet, 0, 50.0).unwrap();
        assert!((d.levels[0].0 - 5.783_185_962_9).abs() < 1e-9);
    }

    #[test]
    fn nonzero_degree_rejected() {
        let e = enumerate_spectrum(&ModelGeometry::Disk { radius: 1.0 }, BoundaryCondition::Dirichlet, 1, 50.0);
        assert!(matches!(e, Err(Error::Unsupported(_))));
    }

    #[test]
    fn synthetic_integers_determinant() {
        let g = SpectrumGenerator::synthetic_integers(40000.0);
        let r = zeta_det(&g, 0.0).unwrap();
        assert!((r.log_det + riemann_zeta_deriv(0.0)).abs() < 1e-9, "{}", r.log_det);
    }

    #[test]
    fn wrong_coefficients_are_detected() {
        let mut g = SpectrumGenerator::synthetic_integers(40000.0);
        g.heat.c_minus1 = 0.0;
        assert_eq!(zeta_det(&g, 0.0).unwrap_err(), Error::CoefficientMismatch);
    }

    #[test]
    fn heat_coefficient_examples() {
        let d = heat_coefficients(&ModelGeometry::Disk { radius: 0.3 }, Bundle::Trivial);
        assert!((d.c_zero - 1.0 / 3.0).abs() < 1e-15);
        let t = heat_coefficients(&ModelGeometry::Torus { a: 1.0, b: 2.0 }, Bundle::Trivial);
        assert_eq!(t.c_zero, 0.0);
        let s = heat_coefficients(&ModelGeometry::Sphere { r: 1.0 }, Bundle::CanonicalPower(1));
        assert!((s.c_zero + 4.0 / 3.0).abs() < 1e-15);
    }
}
