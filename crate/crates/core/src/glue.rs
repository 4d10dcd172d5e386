//! Gluing checks: the BFK factorization on the torus cut into a cylinder, its
//! zero-mode version with a twisted framing, the sphere cut along the equator,
//! and the behaviour of Det*_Q of the jump across a shrinking circle.

use crate::circle_calculus::{
    apply_transfer, assemble_jump, chiral_symbol, disk_alvarez_operator, from_transfer_convention,
    to_transfer_convention, BlockCircleOperator, BoundaryData, ExceptionalBlock, ModeRole,
};
use crate::error::{Error, Result};
use crate::mat2::{c, Mat2};
use crate::regdet::{det_q, det_q_star, Regularizer};
use crate::special::{gauss_legendre, riemann_zeta};
use crate::spectra::{enumerate_spectrum, zeta_det, BoundaryCondition, ModelGeometry};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use std::f64::consts::{LN_2, PI};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "k")]
pub enum Framing {
    Trivial,
    /// holomorphic twist exp(2 pi i k z / a) along the cut
    Twist(i32),
    GlobalSection,
    MeromorphicSimplePole,
}

/// Closed surface, the circle it is cut along, and the pieces.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CutDecomposition {
    pub closed_geometry: ModelGeometry,
    pub cut_length: f64,
    pub pieces: Vec<ModelGeometry>,
    pub framing: Framing,
}

impl CutDecomposition {
    /// Torus a x b cut along a horizontal circle of length a.
    pub fn torus(a: f64, b: f64, framing: Framing) -> Self {
        CutDecomposition {
            closed_geometry: ModelGeometry::Torus { a, b },
            cut_length: a,
            pieces: vec![ModelGeometry::Cylinder { a, b }],
            framing,
        }
    }

    pub fn sphere_equator(r: f64) -> Self {
        CutDecomposition {
            closed_geometry: ModelGeometry::Sphere { r },
            cut_length: 2.0 * PI * r,
            pieces: vec![ModelGeometry::Hemisphere { r }, ModelGeometry::Hemisphere { r }],
            framing: Framing::Trivial,
        }
    }

    /// Euler characteristics of the pieces add up to the closed one.
    pub fn euler_additive(&self) -> bool {
        let s: i32 = self.pieces.iter().map(|p| p.euler_characteristic()).sum();
        s == self.closed_geometry.euler_characteristic()
    }
}

// value and y-derivative of the two exponential solutions of u'' = mu^2 u on [0, b]
fn phi_basis(mu: f64, b: f64, y: f64) -> ([f64; 2], [f64; 2]) {
    if mu < 1e-12 {
        return ([1.0, y], [0.0, 1.0]);
    }
    let p = (-mu * y).exp();
    let m = (-mu * (b - y)).exp();
    ([p, m], [-mu * p, mu * m])
}

/// Jump block at mode j of the torus a x b cut along y = 0, for the framing
/// twisted by exp(2 pi i k z / a). k = 0 is the trivial framing.
pub fn twisted_jump_block(a: f64, b: f64, lambda: f64, j: i64, k: i64) -> Result<Mat2> {
    let k0 = 2.0 * PI * k as f64 / a;
    let xi = 2.0 * PI * j as f64 / a;
    let mu1 = ((2.0 * PI * (k + j) as f64 / a).powi(2) + lambda).sqrt();
    let mu2 = ((2.0 * PI * (k - j) as f64 / a).powi(2) + lambda).sqrt();
    let i = C64::i();
    let mut d = DMatrix::<C64>::zeros(4, 4);
    let mut o = DMatrix::<C64>::zeros(4, 4);
    for (row, (y, top)) in [(0.0, false), (b, true)].into_iter().enumerate() {
        let (p, pd) = phi_basis(mu1, b, y);
        let (q, qd) = phi_basis(mu2, b, y);
        let sg = if top { 1.0 } else { -1.0 };
        let ds = if top { -i * xi } else { i * xi };
        for col in 0..4 {
            // unknowns: two coefficients for each frequency
            let (pv, pdv, qv, qdv) = if col < 2 {
                (p[col], pd[col], 0.0, 0.0)
            } else {
                (0.0, 0.0, q[col - 2], qd[col - 2])
            };
            let fn_ = sg * (pdv + k0 * pv);
            let fnc = sg * (qdv + k0 * qv);
            let u = c((pv + qv) / 2.0, 0.0);
            let v = c(pv - qv, 0.0) / (2.0 * i);
            let un = c((fn_ + fnc) / 2.0, 0.0);
            let vn = c(fn_ - fnc, 0.0) / (2.0 * i);
            d[(2 * row, col)] = v;
            d[(2 * row + 1, col)] = ds * v - un;
            o[(2 * row, col)] = ds * u + vn;
            o[(2 * row + 1, col)] = u;
        }
    }
    let dinv = d.try_inverse().ok_or(Error::SingularBlock(j))?;
    let am = o * dinv;
    let blk = |r: usize, cc: usize| {
        Mat2::new(am[(r, cc)], am[(r, cc + 1)], am[(r + 1, cc)], am[(r + 1, cc + 1)])
    };
    let kk = Mat2::k();
    Ok(blk(0, 0) + blk(0, 2) * kk + kk * blk(2, 0) + kk * blk(2, 2) * kk)
}

/// Neumann jump operator of the torus a x b across the circle y = 0.
pub fn neumann_jump_torus(a: f64, b: f64, lambda: f64, framing: Framing, n_max: usize) -> Result<BlockCircleOperator> {
    if !(lambda > 0.0) {
        return Err(Error::InvalidArgument("neumann_jump_torus needs lambda > 0".into()));
    }
    if !(a > 0.0 && b > 0.0) {
        return Err(Error::InvalidArgument("torus sides must be positive".into()));
    }
    let k = match framing {
        Framing::Trivial => 0,
        Framing::Twist(k) => k as i64,
        other => return Err(Error::Unsupported(format!("framing {other:?} on the torus cut"))),
    };
    let m = n_max as i64;
    let blocks: Result<Vec<Mat2>> = (-m..=m).map(|j| twisted_jump_block(a, b, lambda, j, k)).collect();
    let mut op = BlockCircleOperator::diagonal(n_max, |_| Mat2::zero(), chiral_symbol(1.0).scale_re(2.0), chiral_symbol(-1.0).scale_re(2.0));
    op.blocks = blocks?;
    Ok(op)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BfkTerms {
    pub cut_logdet: f64,
    pub log_detq_jump: f64,
    pub log_cq: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BfkTails {
    pub lhs: f64,
    pub cut: f64,
    pub jump: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BfkReport {
    pub lambda: f64,
    pub lhs_logdet: f64,
    pub rhs_terms: BfkTerms,
    pub residual: f64,
    pub tails: BfkTails,
    pub zeta_q0: f64,
}

const LAMBDA_MAX_FLAT: f64 = 2000.0;

/// log Det(D + lambda) on the torus against its cylinder factor, c_Q and Det_Q of the jump.
pub fn bfk_verify(cut: &CutDecomposition, lambda: f64, q: &Regularizer, n_max: usize) -> Result<BfkReport> {
    if !(lambda > 0.0) {
        return Err(Error::InvalidArgument("bfk_verify needs lambda > 0".into()));
    }
    let (a, b) = match cut.closed_geometry {
        ModelGeometry::Torus { a, b } => (a, b),
        g => return Err(Error::Unsupported(format!("bfk_verify on {g:?}; use sphere_equator_check"))),
    };
    let torus = enumerate_spectrum(&cut.closed_geometry, BoundaryCondition::Closed, 0, LAMBDA_MAX_FLAT)?.doubled();
    let cyl = ModelGeometry::Cylinder { a, b };
    let lhs = zeta_det(&torus, lambda)?;
    let cn = zeta_det(&enumerate_spectrum(&cyl, BoundaryCondition::Neumann, 0, LAMBDA_MAX_FLAT)?, lambda)?;
    let cd = zeta_det(&enumerate_spectrum(&cyl, BoundaryCondition::Dirichlet, 0, LAMBDA_MAX_FLAT)?, lambda)?;
    let jump = neumann_jump_torus(a, b, lambda, cut.framing, n_max)?;
    let dq = det_q(&jump, q)?;
    let log_cq = -q.zeta_q_at_0() * LN_2;
    let cut_logdet = cn.log_det + cd.log_det;
    let residual = lhs.log_det - (cut_logdet + log_cq + dq.log_det);
    Ok(BfkReport {
        lambda,
        lhs_logdet: lhs.log_det,
        rhs_terms: BfkTerms { cut_logdet, log_detq_jump: dq.log_det, log_cq },
        residual,
        tails: BfkTails { lhs: lhs.tail_error, cut: cn.tail_error + cd.tail_error, jump: dq.tail_bound },
        zeta_q0: dq.zeta_q0,
    })
}

/// Centered difference in lambda of log LHS - log(cut factor) - log Det_Q N.
pub fn bfk_lambda_derivative(cut: &CutDecomposition, lambda: f64, q: &Regularizer, n_max: usize, h: f64) -> Result<f64> {
    let f = |l: f64| -> Result<f64> {
        let r = bfk_verify(cut, l, q, n_max)?;
        Ok(r.lhs_logdet - r.rhs_terms.cut_logdet - r.rhs_terms.log_detq_jump)
    };
    Ok((f(lambda + h)? - f(lambda - h)?) / (2.0 * h))
}

// Gelfand-Yaglom log|det| of the twisted two-frequency boundary problem on
// [0, b], normalized by the growth of the exponential solutions.
fn gy_system(a: f64, b: f64, lambda: f64, j: i64, k: i64) -> f64 {
    let k0 = 2.0 * PI * k as f64 / a;
    let mus = [
        ((2.0 * PI * (k + j) as f64 / a).powi(2) + lambda).sqrt(),
        ((2.0 * PI * (k - j) as f64 / a).powi(2) + lambda).sqrt(),
    ];
    let mut m = DMatrix::<f64>::zeros(4, 4);
    for (r, y) in [0.0, b].into_iter().enumerate() {
        let (pa, pad) = phi_basis(mus[0], b, y);
        let (pb, pbd) = phi_basis(mus[1], b, y);
        for col in 0..2 {
            m[(2 * r, col)] = pa[col];
            m[(2 * r, col + 2)] = -pb[col];
            m[(2 * r + 1, col)] = pad[col] + k0 * pa[col];
            m[(2 * r + 1, col + 2)] = pbd[col] + k0 * pb[col];
        }
    }
    let ld = m.lu().determinant().abs().ln();
    let corr: f64 = mus.iter().filter(|&&mu| mu >= 1e-12).map(|&mu| (2.0 * mu).ln() - mu * b).sum();
    ld - corr
}

fn gy_scalar(b: f64, lambda: f64, omega: f64, robin: bool, k0: f64) -> f64 {
    let mu = (omega * omega + lambda).sqrt();
    let row = |y: f64| {
        let (p, pd) = phi_basis(mu, b, y);
        if robin {
            [pd[0] + k0 * p[0], pd[1] + k0 * p[1]]
        } else {
            p
        }
    };
    let r0 = row(0.0);
    let r1 = row(b);
    let ld = (r0[0] * r1[1] - r0[1] * r1[0]).abs().ln();
    let corr = if mu >= 1e-12 { (2.0 * mu).ln() - mu * b } else { 0.0 };
    ld - corr
}

/// log Det(D^A + lambda) on the cylinder with twisted framing minus the untwisted one.
pub fn cylinder_twist_difference(a: f64, b: f64, lambda: f64, k: i64, modes: usize) -> f64 {
    let k0 = 2.0 * PI * k as f64 / a;
    let om = |m: i64| 2.0 * PI * m as f64 / a;
    let h = |w: f64| gy_scalar(b, lambda, w, true, 0.0) + gy_scalar(b, lambda, w, false, 0.0);
    let mut s = gy_scalar(b, lambda, k0, true, k0) + gy_scalar(b, lambda, k0, false, 0.0) - h(k0);
    let terms: Vec<f64> = (1..=modes as i64)
        .map(|j| {
            2.0 * (gy_system(a, b, lambda, j, k) - gy_system(a, b, lambda, j, 0) + h(om(j))
                - 0.5 * (h(om(k + j)) + h(om(k - j))))
        })
        .collect();
    s += crate::regdet::pairwise_sum(&terms);
    s
}

/// Gram determinant on the cut circle of the imaginary parts of the closed
/// kernel {1, i} written in the twist(k) frame. Zero means the framing is not generic.
pub fn cut_gram_pp(a: f64, k: i64) -> f64 {
    let gl = gauss_legendre(32);
    let panels = 8 * (k.unsigned_abs() as usize + 1);
    let h = a / panels as f64;
    // Im(c e^{-2 pi i k x / a}) for c = 1 and c = i
    let f1 = |x: f64| -(2.0 * PI * k as f64 * x / a).sin();
    let f2 = |x: f64| (2.0 * PI * k as f64 * x / a).cos();
    let mut g = [[0.0; 2]; 2];
    for p in 0..panels {
        let lo = p as f64 * h;
        for (t, w) in gl.0.iter().zip(&gl.1) {
            let x = lo + 0.5 * h * (t + 1.0);
            let v = [f1(x), f2(x)];
            for r in 0..2 {
                for s in 0..2 {
                    g[r][s] += 0.5 * h * w * v[r] * v[s];
                }
            }
        }
    }
    g[0][0] * g[1][1] - g[0][1] * g[1][0]
}

pub fn framing_is_generic(a: f64, k: i64) -> bool {
    cut_gram_pp(a, k).abs() > 1e-10 * a * a
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GramLogs {
    pub closed: f64,
    pub cut: f64,
    pub delta: f64,
    pub pp: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZeroModeReport {
    pub lhs_logdet: f64,
    pub cut_logdet: f64,
    pub log_detq_jump_star: f64,
    pub log_cq: f64,
    pub gram_logs: GramLogs,
    pub residual: f64,
    pub n_max: usize,
    pub det_star_sign_convention: String,
}

/// Zero-mode gluing on the torus a x b cut along y = 0 with framing twist(k), k != 0.
pub fn zero_mode_bfk_verify(cut: &CutDecomposition, q: &Regularizer, n_max: usize) -> Result<ZeroModeReport> {
    let (a, b) = match cut.closed_geometry {
        ModelGeometry::Torus { a, b } => (a, b),
        g => return Err(Error::Unsupported(format!("zero-mode gluing on {g:?}"))),
    };
    let k = match cut.framing {
        Framing::Twist(k) => k as i64,
        Framing::Trivial => 0,
        f => return Err(Error::Unsupported(format!("framing {f:?}"))),
    };
    if !framing_is_generic(a, k) {
        return Err(Error::FramingNotGeneric);
    }
    if (k.unsigned_abs() as usize) >= n_max {
        return Err(Error::InvalidArgument("n_max must exceed the twist".into()));
    }
    let torus = enumerate_spectrum(&cut.closed_geometry, BoundaryCondition::Closed, 0, LAMBDA_MAX_FLAT)?;
    let area = a * b;
    // real operator: the complex determinant squared; kernel {1, i} with Gram (ab)^2
    let lhs = 2.0 * zeta_det(&torus, 0.0)?.log_det - 2.0 * area.ln();

    let cyl = ModelGeometry::Cylinder { a, b };
    let ln = zeta_det(&enumerate_spectrum(&cyl, BoundaryCondition::Neumann, 0, LAMBDA_MAX_FLAT)?, 0.0)?.log_det;
    let ld = zeta_det(&enumerate_spectrum(&cyl, BoundaryCondition::Dirichlet, 0, LAMBDA_MAX_FLAT)?, 0.0)?.log_det;
    // twisted minus untwisted at lambda -> 0, linear extrapolation from two small shifts
    let d1 = cylinder_twist_difference(a, b, 1e-6, k, n_max);
    let d2 = cylinder_twist_difference(a, b, 2e-6, k, n_max);
    let cut_logdet = ln + ld + 2.0 * d1 - d2;

    let kf = k.abs() as f64;
    let g_cut = (a * (1.0 - (-4.0 * PI * kf * b / a).exp()) / (4.0 * PI * kf / a)).ln();
    let g_delta = (a * (1.0 - (-2.0 * PI * kf * b / a).exp()).powi(2)).ln();
    let g_pp = cut_gram_pp(a, k).ln();

    // jump at lambda = 0: the constant mode keeps only its f component (the g
    // direction carries the eigenvalue that blows up like 1/lambda)
    let m = n_max as i64;
    let mut blocks = Vec::with_capacity(2 * n_max + 1);
    for j in -m..=m {
        let blk = if j == 0 {
            let b0 = twisted_jump_block(a, b, 1e-10, 0, k)?;
            Mat2::new(b0.a[0][0], c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0))
        } else {
            twisted_jump_block(a, b, 0.0, j, k)?
        };
        blocks.push(blk);
    }
    let mut jump = BlockCircleOperator::diagonal(n_max, |_| Mat2::zero(), chiral_symbol(1.0).scale_re(2.0), chiral_symbol(-1.0).scale_re(2.0))
        .with_exceptional(ExceptionalBlock { f: ModeRole::InDomain, g: ModeRole::Excluded });
    jump.blocks = blocks;
    // the boundary values of the cylinder kernel span the f components at modes +-k
    let mut cos_k = BoundaryData::zero(n_max, a);
    cos_k.f.set_mode(k, c(0.5, 0.0));
    let mut sin_k = BoundaryData::zero(n_max, a);
    sin_k.f.set_mode(k, c(0.0, -0.5));
    let dq = det_q_star(&jump, q, &[cos_k, sin_k])?;
    let log_cq = -q.zeta_q_at_0() * LN_2;

    let rhs = cut_logdet - g_cut + g_delta - g_pp + log_cq + dq.log_det;
    Ok(ZeroModeReport {
        lhs_logdet: lhs,
        cut_logdet,
        log_detq_jump_star: dq.log_det,
        log_cq,
        gram_logs: GramLogs { closed: 2.0 * area.ln(), cut: g_cut, delta: g_delta, pp: g_pp },
        residual: lhs - rhs,
        n_max,
        det_star_sign_convention: "absolute values; all Gram factors positive".into(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SphereReport {
    pub radius: f64,
    pub sphere_logdet: f64,
    pub neumann_logdet: f64,
    pub dirichlet_logdet: f64,
    pub residual: f64,
}

/// log Det* on the round sphere against Neumann and Dirichlet hemispheres.
pub fn sphere_equator_check(radius: f64) -> Result<SphereReport> {
    let lm = 42000.0 / (radius * radius);
    let s = zeta_det(&enumerate_spectrum(&ModelGeometry::Sphere { r: radius }, BoundaryCondition::Closed, 0, lm)?, 0.0)?;
    let h = ModelGeometry::Hemisphere { r: radius };
    let n = zeta_det(&enumerate_spectrum(&h, BoundaryCondition::Neumann, 0, lm)?, 0.0)?;
    let d = zeta_det(&enumerate_spectrum(&h, BoundaryCondition::Dirichlet, 0, lm)?, 0.0)?;
    Ok(SphereReport {
        radius,
        sphere_logdet: s.log_det,
        neumann_logdet: n.log_det,
        dirichlet_logdet: d.log_det,
        residual: s.log_det - n.log_det - d.log_det,
    })
}

// ---------------------------------------------------------------------------
// Torus minus a disk: multipole expansion of harmonic functions.

struct Lattice {
    g: Vec<f64>, // G_{2k} at index 2k, real for a rectangular lattice
    alpha: f64,
    beta: f64,
}

fn sigma(n: u64, p: i32) -> f64 {
    (1..=n).filter(|d| n % d == 0).map(|d| (d as f64).powi(p)).sum()
}

fn rectangular_lattice(a: f64, b: f64, kmax: usize) -> Lattice {
    let q = (-2.0 * PI * b / a).exp();
    let series = |p: i32, coef: f64| 1.0 + coef * (1..60u64).map(|n| sigma(n, p) * q.powi(n as i32)).sum::<f64>();
    let e2 = series(1, -24.0);
    let e4 = series(3, 240.0);
    let e6 = series(5, -504.0);
    let g4 = 2.0 * riemann_zeta(4.0) * e4 / a.powi(4);
    let g6 = 2.0 * riemann_zeta(6.0) * e6 / a.powi(6);
    let top = kmax / 2 + 2;
    let mut cc = vec![0.0; top + 1];
    cc[2] = 3.0 * g4;
    cc[3] = 5.0 * g6;
    for k in 4..=top {
        let s: f64 = (2..=k - 2).map(|m| cc[m] * cc[k - m]).sum();
        cc[k] = 3.0 / ((2 * k + 1) as f64 * (k - 3) as f64) * s;
    }
    let mut g = vec![0.0; 2 * top + 2];
    for k in 2..=top {
        g[2 * k] = cc[k] / (2 * k - 1) as f64;
    }
    let eta1 = PI * PI / (3.0 * a) * e2;
    let area = a * b;
    let beta = PI / area;
    // conj(w1)/w1 = 1 for w1 = a real
    Lattice { g, alpha: eta1 / a - beta, beta }
}

fn lattice_g(l: &Lattice, k: usize) -> f64 {
    if k % 2 == 0 && k >= 4 && k < l.g.len() {
        l.g[k]
    } else {
        0.0
    }
}

fn max_abs<R: nalgebra::Dim, C: nalgebra::Dim, S: nalgebra::RawStorage<C64, R, C>>(
    m: &nalgebra::Matrix<C64, R, C, S>,
) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

fn binom(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Alvarez boundary operator (own convention, trivial bundle and framing) of
/// the flat torus a x b minus the disk |z| < r, on modes 0 < |n| <= n_max.
pub fn torus_minus_disk_operator(a: f64, b: f64, r: f64, n_max: usize) -> Result<BlockCircleOperator> {
    if !(r > 0.0 && 2.0 * r < a.min(b)) {
        return Err(Error::InvalidArgument("disk must fit in the fundamental domain".into()));
    }
    let nm = n_max as i64;
    let mt = n_max + 40;
    let lat = rectangular_lattice(a, b, n_max + mt + 4);
    let p = n_max;
    let modes: Vec<i64> = (-nm..=nm).collect();
    let idx = |m: i64| (m + nm) as usize;
    let nmodes = modes.len();
    // Fourier vectors of value and radial derivative on |z| = r of each scaled multipole
    let mut val = vec![vec![C64::new(0.0, 0.0); nmodes]; p];
    let mut der = vec![vec![C64::new(0.0, 0.0); nmodes]; p];
    for i in 0..p {
        let n = i + 1;
        let sc = r.powi(n as i32);
        let mut add = |coef: f64, pw: i32, k: i64| {
            if k.abs() <= nm {
                val[i][idx(k)] += sc * coef * r.powi(pw);
                der[i][idx(k)] += sc * coef * pw as f64 * r.powi(pw - 1);
            }
        };
        add(1.0, -(n as i32), -(n as i64));
        for m in 0..mt {
            if n == 1 && m == 1 {
                add(-lat.alpha, 1, 1);
                continue;
            }
            if n + m >= 4 {
                let cf = if n % 2 == 0 { 1.0 } else { -1.0 } * binom(n + m - 1, m) * lattice_g(&lat, n + m);
                if cf != 0.0 {
                    add(cf, m as i32, m as i64);
                }
            }
        }
        if n == 1 {
            // -beta zbar
            let cz = -lat.beta * r;
            val[i][idx(-1)] += cz * r;
            der[i][idx(-1)] += cz;
        }
    }
    // real harmonic w = const + Re sum a_n P_n; columns for const, a_n = 1, a_n = i
    let cols = |x: &Vec<Vec<C64>>| -> DMatrix<C64> {
        let mut m = DMatrix::<C64>::zeros(nmodes, 2 * p + 1);
        m[(idx(0), 0)] = c(1.0, 0.0);
        for i in 0..p {
            for (t, &md) in modes.iter().enumerate() {
                let xr = (x[i][t] + x[i][idx(-md)].conj()) / 2.0;
                let xi = (C64::i() * x[i][t] - C64::i() * x[i][idx(-md)].conj()) / 2.0;
                m[(t, 1 + 2 * i)] = xr;
                m[(t, 2 + 2 * i)] = xi;
            }
        }
        m
    };
    let vc = cols(&val);
    let mut dc = cols(&der);
    dc[(idx(0), 0)] = c(0.0, 0.0);
    let realify = |m: &DMatrix<C64>| -> DMatrix<f64> {
        let mut out = DMatrix::<f64>::zeros(2 * n_max + 1, m.ncols());
        for cc in 0..m.ncols() {
            out[(0, cc)] = m[(idx(0), cc)].re;
            for k in 1..=nm {
                out[(2 * k as usize - 1, cc)] = m[(idx(k), cc)].re;
                out[(2 * k as usize, cc)] = m[(idx(k), cc)].im;
            }
        }
        out
    };
    let to_real = |v: &DVector<C64>| -> DVector<f64> {
        let mut out = DVector::<f64>::zeros(2 * n_max + 1);
        out[0] = v[idx(0)].re;
        for k in 1..=nm {
            out[2 * k as usize - 1] = v[idx(k)].re;
            out[2 * k as usize] = v[idx(k)].im;
        }
        out
    };
    let rv = realify(&vc).lu();
    let rd = realify(&dc).svd(true, true);
    let to_c = |x: DVector<f64>| x.map(|v| c(v, 0.0));
    let th: Vec<C64> = modes.iter().map(|&k| C64::i() * k as f64 / r).collect();
    let apply = |f: &DVector<C64>, g: &DVector<C64>| -> Result<(DVector<C64>, DVector<C64>)> {
        let xv = rv.solve(&to_real(f)).ok_or_else(|| Error::Quadrature("multipole Dirichlet system singular".into()))?;
        let vr = &dc * to_c(xv);
        let target = DVector::from_iterator(nmodes, (0..nmodes).map(|t| g[t] + th[t] * f[t]));
        let mut xu = rd.solve(&to_real(&target), 1e-13).map_err(|e| Error::Quadrature(e.to_string()))?;
        xu[0] = 0.0;
        let u = &vc * to_c(xu);
        let o1 = DVector::from_iterator(nmodes, (0..nmodes).map(|t| -th[t] * u[t] - vr[t]));
        Ok((o1, u))
    };
    let nz: Vec<i64> = modes.iter().copied().filter(|&m| m != 0).collect();
    let pos = |m: i64, comp: usize| -> usize {
        let i = if m < 0 { (m + nm) as usize } else { (m + nm - 1) as usize };
        2 * i + comp
    };
    let dim = 2 * nz.len();
    let mut m2 = DMatrix::<C64>::zeros(dim, dim);
    for m in 1..=nm {
        for comp in 0..2 {
            let mut outs = Vec::new();
            for ph in [c(1.0, 0.0), C64::i()] {
                let mut f = DVector::<C64>::zeros(nmodes);
                let mut g = DVector::<C64>::zeros(nmodes);
                let tgt = if comp == 0 { &mut f } else { &mut g };
                tgt[idx(m)] = ph;
                tgt[idx(-m)] = ph.conj();
                outs.push(apply(&f, &g)?);
            }
            for co in 0..2 {
                let (o1, oi) = if co == 0 { (&outs[0].0, &outs[1].0) } else { (&outs[0].1, &outs[1].1) };
                for &mo in &nz {
                    let x = (o1[idx(mo)] - C64::i() * oi[idx(mo)]) / 2.0;
                    let y = (o1[idx(mo)] + C64::i() * oi[idx(mo)]) / 2.0;
                    m2[(pos(mo, co), pos(m, comp))] = x;
                    m2[(pos(mo, co), pos(-m, comp))] = y;
                }
            }
        }
    }
    let herm = max_abs(&(&m2 - m2.adjoint()));
    if herm > 1e-6 {
        return Err(Error::InsufficientTruncation);
    }
    let mut op = BlockCircleOperator::from_dense(n_max, &nz, &m2, chiral_symbol(-1.0), chiral_symbol(1.0));
    op.exceptional = Some(ExceptionalBlock { f: ModeRole::Annihilated, g: ModeRole::Excluded });
    Ok(op)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticsReport {
    pub framing: Framing,
    pub eps: Vec<f64>,
    /// log Det*_Q N, plus log(eps/2) in the meromorphic case
    pub values: Vec<f64>,
    pub extrapolated: f64,
    pub target: f64,
    pub zeta_q0: f64,
    pub h0: u32,
    /// exponent p in tr(N_n^2 - 4) ~ n^-p, per eps
    pub decay_exponent_trace: Vec<f64>,
    /// exponent p in |N_n^2 - 4| ~ n^-p (Frobenius norm of the block), per eps
    pub decay_exponent_norm: Vec<f64>,
    /// max over eps and n of n^2 |tr(N_n^2 - 4)|
    pub trace_constant: f64,
    /// largest |A - A*| entry of the unit-radius operator
    pub hermitian_residual: f64,
}

fn richardson(eps: &[f64], vals: &[f64], order: i32) -> f64 {
    let n = vals.len();
    if n < 2 {
        return vals[n - 1];
    }
    let ratio = (eps[n - 2] / eps[n - 1]).powi(order);
    (ratio * vals[n - 1] - vals[n - 2]) / (ratio - 1.0)
}

fn decay_exponents(op: &BlockCircleOperator) -> (f64, f64, f64) {
    let n_max = op.n_max as i64;
    let four = Mat2::identity().scale_re(4.0);
    let d = |n: i64| {
        let b = op.block(n);
        b * b - four
    };
    let n1 = (n_max / 4).max(2);
    let n2 = n_max / 2;
    let tr = |n: i64| d(n).trace().re.abs();
    let nr = |n: i64| d(n).norm();
    let p_tr = (tr(n1) / tr(n2)).ln() / (n2 as f64 / n1 as f64).ln();
    let p_nr = (nr(n1) / nr(n2)).ln() / (n2 as f64 / n1 as f64).ln();
    let cst = (1..=n_max).map(|n| (n * n) as f64 * tr(n).max(tr(-n))).fold(0.0, f64::max);
    (p_tr, p_nr, cst)
}

/// Global trivial section on the torus a x b minus the disk |z| < eps.
pub fn jump_asymptotics_torus(a: f64, b: f64, eps_list: &[f64], q: &Regularizer, n_max: usize) -> Result<AsymptoticsReport> {
    check_eps(eps_list)?;
    let a1 = torus_minus_disk_operator(a, b, 1.0, n_max)?;
    let modes: Vec<i64> = a1.modes().filter(|&n| n != 0).collect();
    let dense = a1.to_dense(&modes);
    let herm = max_abs(&(&dense - dense.adjoint()));
    let a1_transfer = to_transfer_convention(&a1);
    let mut values = Vec::new();
    let mut p_tr = Vec::new();
    let mut p_nr = Vec::new();
    let mut cst: f64 = 0.0;
    for &e in eps_list {
        let mut ae = from_transfer_convention(&apply_transfer(&a1_transfer, e)?);
        ae.exceptional = Some(ExceptionalBlock { f: ModeRole::Annihilated, g: ModeRole::Excluded });
        let disk = disk_alvarez_operator(e, n_max)?;
        let mut jump = assemble_jump(&disk, &ae)?;
        jump.exceptional = Some(ExceptionalBlock { f: ModeRole::Annihilated, g: ModeRole::Excluded });
        let dq = det_q_star(&jump, q, &[])?;
        values.push(dq.log_det);
        let (pt, pn, cc) = decay_exponents(&jump);
        p_tr.push(pt);
        p_nr.push(pn);
        cst = cst.max(cc);
    }
    let z0 = q.zeta_q_at_0();
    let h0 = 1;
    Ok(AsymptoticsReport {
        framing: Framing::GlobalSection,
        eps: eps_list.to_vec(),
        extrapolated: richardson(eps_list, &values, 4),
        values,
        target: (z0 - 4.0 * h0 as f64 + 2.0) * LN_2,
        zeta_q0: z0,
        h0,
        decay_exponent_trace: p_tr,
        decay_exponent_norm: p_nr,
        trace_constant: cst,
        hermitian_residual: herm,
    })
}

fn check_eps(eps_list: &[f64]) -> Result<()> {
    if eps_list.is_empty() {
        return Err(Error::InvalidArgument("empty eps list".into()));
    }
    for w in eps_list.windows(2) {
        if w[1] >= w[0] {
            return Err(Error::InvalidArgument("eps values must be descending".into()));
        }
    }
    if eps_list[0] > 0.5 || eps_list[eps_list.len() - 1] <= 0.0 {
        return Err(Error::InvalidArgument("eps values must lie in (0, 1/2]".into()));
    }
    Ok(())
}

// Harmonic building blocks z * z^m, z * zbar^m (inside) and z * z^-m, z * zbar^-m
// (outside) of the sphere with the framing that has a simple pole at the origin.
// A term (p, k) has value r^p e^{i k theta}.
fn sphere_terms(m: usize, exterior: bool) -> Vec<(i32, i64)> {
    let mut t = Vec::new();
    for j in 0..m as i32 {
        t.push(if exterior { (1 - j, 1 - j as i64) } else { (j + 1, j as i64 + 1) });
    }
    for j in 1..m as i32 {
        t.push(if exterior { (1 - j, 1 + j as i64) } else { (j + 1, 1 - j as i64) });
    }
    t
}

// Data map D and output map O of a side at mode j; columns are the complex
// coefficients of the terms with angular mode +-j (real and imaginary parts for j = 0).
fn sphere_side(terms: &[(i32, i64)], j: i64, r: f64, exterior: bool) -> (DMatrix<C64>, DMatrix<C64>, Vec<(i32, i64, bool)>) {
    let mut sel: Vec<(i32, i64, bool)> = terms.iter().filter(|t| t.1 == j).map(|&(p, k)| (p, k, false)).collect();
    if j != 0 {
        sel.extend(terms.iter().filter(|t| t.1 == -j).map(|&(p, k)| (p, k, true)));
    }
    let n = sel.len();
    let sg = if exterior { -1.0 } else { 1.0 };
    let i = C64::i();
    let (cols, u, v, ur, vr, ut, vt): (usize, Vec<C64>, Vec<C64>, Vec<C64>, Vec<C64>, Vec<C64>, Vec<C64>);
    if j == 0 {
        cols = 2 * n;
        let f: Vec<f64> = sel.iter().map(|s| r.powi(s.0)).collect();
        let fr: Vec<f64> = sel.iter().map(|s| s.0 as f64 * r.powi(s.0 - 1)).collect();
        let z = vec![c(0.0, 0.0); n];
        let re = |x: &Vec<f64>| x.iter().map(|&v| c(v, 0.0)).collect::<Vec<_>>();
        u = [re(&f), z.clone()].concat();
        v = [z.clone(), re(&f)].concat();
        ur = [re(&fr), z.clone()].concat();
        vr = [z.clone(), re(&fr)].concat();
        ut = vec![c(0.0, 0.0); 2 * n];
        vt = vec![c(0.0, 0.0); 2 * n];
    } else {
        cols = n;
        let fj: Vec<C64> = sel.iter().map(|s| if s.2 { c(0.0, 0.0) } else { c(r.powi(s.0), 0.0) }).collect();
        let fc: Vec<C64> = sel.iter().map(|s| if s.2 { c(r.powi(s.0), 0.0) } else { c(0.0, 0.0) }).collect();
        let frj: Vec<C64> =
            sel.iter().map(|s| if s.2 { c(0.0, 0.0) } else { c(s.0 as f64 * r.powi(s.0 - 1), 0.0) }).collect();
        let frc: Vec<C64> =
            sel.iter().map(|s| if s.2 { c(s.0 as f64 * r.powi(s.0 - 1), 0.0) } else { c(0.0, 0.0) }).collect();
        u = (0..n).map(|t| (fj[t] + fc[t]) / 2.0).collect();
        v = (0..n).map(|t| (fj[t] - fc[t]) / (2.0 * i)).collect();
        ur = (0..n).map(|t| (frj[t] + frc[t]) / 2.0).collect();
        vr = (0..n).map(|t| (frj[t] - frc[t]) / (2.0 * i)).collect();
        ut = u.iter().map(|&x| i * j as f64 * x).collect();
        vt = v.iter().map(|&x| i * j as f64 * x).collect();
    }
    let mut d = DMatrix::<C64>::zeros(2, cols);
    let mut o = DMatrix::<C64>::zeros(2, cols);
    for t in 0..cols {
        let (un, vn, us, vs) = (ur[t] * sg, vr[t] * sg, ut[t] * sg / r, vt[t] * sg / r);
        d[(0, t)] = v[t];
        d[(1, t)] = vs - un;
        o[(0, t)] = us + vn;
        o[(1, t)] = u[t];
    }
    (d, o, sel)
}

fn null_space(m: &DMatrix<C64>, tol: f64) -> DMatrix<C64> {
    let cols = m.ncols();
    let rows = m.nrows();
    // pad to square so the SVD exposes the full right singular basis
    let mut sq = DMatrix::<C64>::zeros(cols.max(rows), cols);
    sq.view_mut((0, 0), (rows, cols)).copy_from(m);
    let svd = sq.svd(false, true);
    let vt = svd.v_t.expect("requested");
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max).max(1.0);
    let null: Vec<usize> = (0..cols).filter(|&i| svd.singular_values[i] <= tol * smax).collect();
    DMatrix::from_fn(cols, null.len(), |r, cc| vt[(null[cc], r)].conj())
}

/// Sphere cut along |z| = eps with the framing that has a simple pole at the origin.
/// Returns log Det*_Q N + log(eps/2) for each eps.
pub fn jump_asymptotics_sphere_meromorphic(eps_list: &[f64], q: &Regularizer, n_max: usize) -> Result<AsymptoticsReport> {
    check_eps(eps_list)?;
    let kk = Mat2::k();
    let kmat = DMatrix::from_fn(2, 2, |r, cc| kk.a[r][cc]);
    let nterms = n_max + 4;
    let tb = sphere_terms(nterms, false);
    let te = sphere_terms(nterms, true);
    let zp = q.zeta_half(0.0)?;
    let mut values = Vec::new();
    for &e in eps_list {
        let mut total = 0.0;
        for j in -(n_max as i64)..=(n_max as i64) {
            let (db, ob, _) = sphere_side(&tb, j, e, false);
            let (de, oe, sel) = sphere_side(&te, j, e, true);
            let mut vecs: Vec<DVector<C64>> = Vec::new();
            if j.abs() == 1 {
                // boundary data of the global section z, which lives on the exterior side
                if let Some(ix) = sel.iter().position(|s| s.0 == 1 && s.1 == 1) {
                    let mut ev = DVector::<C64>::zeros(sel.len());
                    ev[ix] = c(1.0, 0.0);
                    vecs.push(&de * ev);
                }
            }
            let ker = null_space(&de, 1e-10);
            for cc in 0..ker.ncols() {
                vecs.push(&kmat * (&oe * ker.column(cc)));
            }
            let comp = if vecs.is_empty() {
                DMatrix::<C64>::identity(2, 2)
            } else {
                let a = DMatrix::from_fn(vecs.len(), 2, |r, cc| vecs[r][cc].conj());
                null_space(&a, 1e-10)
            };
            let d = comp.ncols();
            if d == 0 {
                continue;
            }
            let dbi = db.clone().try_inverse().ok_or(Error::SingularBlock(j))?;
            let de_svd = de.clone().svd(true, true);
            let mut nst = DMatrix::<C64>::zeros(d, d);
            for cc in 0..d {
                let dat = comp.column(cc).into_owned();
                let xb = &dbi * &dat;
                let rhs = &kmat * &dat;
                let xr = de_svd.solve(&rhs, 1e-12).map_err(|s| Error::Quadrature(s.to_string()))?;
                if max_abs(&(&de * &xr - &rhs)) > 1e-9 {
                    return Err(Error::Degenerate(format!("exterior data not attainable at mode {j}")));
                }
                let out = &ob * xb + &kmat * (&oe * xr);
                let col = comp.adjoint() * out;
                nst.set_column(cc, &col);
            }
            total += nst.determinant().norm().ln();
        }
        // the symbol log 4 is removed from every nonzero mode and restored through z_+ and z_-
        total += -((2 * n_max) as f64) * 2.0 * LN_2 + 2.0 * (2.0 * LN_2) * zp;
        values.push(total + (e / 2.0).ln());
    }
    let z0 = q.zeta_q_at_0();
    let h0 = 1;
    Ok(AsymptoticsReport {
        framing: Framing::MeromorphicSimplePole,
        eps: eps_list.to_vec(),
        extrapolated: richardson(eps_list, &values, 4),
        values,
        target: (z0 - 4.0 * h0 as f64 - 2.0) * LN_2,
        zeta_q0: z0,
        h0,
        decay_exponent_trace: vec![],
        decay_exponent_norm: vec![],
        trace_constant: 0.0,
        hermitian_residual: 0.0,
    })
}
