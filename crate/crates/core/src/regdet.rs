//! Regularized determinants Det_Q of order-zero block operators on circles.
//!
//! log Det_Q T is the finite part at s = 0 of Tr(Q^{-s} Log T). For an
//! operator whose blocks approach constant symbols S_+ (n -> +inf) and S_-
//! (n -> -inf) with O(n^-2) trace defect, write tr Log T(n) = L_+- + r_n; then
//!
//!   log Det_Q T = tr Log T(0) + sum_{n != 0} r_n + L_+ z_+ + L_- z_-,
//!
//! where z_+- is the continued value at 0 of sum_{n >= 1} q_{+-n}^{-s}. The
//! real part of tr Log of a block is log|det| for either branch convention,
//! and it is what every routine here returns. The sum of r_n past the
//! truncation is added from a fitted tail in inverse powers n^-2 ... n^-6.

use crate::circle_calculus::{BlockCircleOperator, BoundaryData, ModeRole};
use crate::error::{Error, Result};
use crate::mat2::{c, Mat2};
use crate::special::{hurwitz_zeta, riemann_zeta};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use std::collections::BTreeSet;

/// Relative tolerance for the tail bound before "insufficient truncation" is reported.
pub const TAIL_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum RegularizerKind {
    /// q_n = max(|n|, 1)
    MaxAbs,
    /// q_n = sqrt(n^2 + m^2)
    SqrtShift { m: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Regularizer {
    pub kind: RegularizerKind,
    /// q_n is multiplied by this constant
    pub scale: f64,
    /// number of boundary circles (Q acts diagonally on the direct sum)
    pub circles: usize,
}

impl Default for Regularizer {
    fn default() -> Self {
        Regularizer { kind: RegularizerKind::MaxAbs, scale: 1.0, circles: 1 }
    }
}

fn binom_real(a: f64, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (a - i as f64) / (i + 1) as f64)
}

impl Regularizer {
    pub fn sqrt_shift(m: f64) -> Self {
        Regularizer { kind: RegularizerKind::SqrtShift { m }, ..Default::default() }
    }

    pub fn scaled(self, mu: f64) -> Self {
        Regularizer { scale: self.scale * mu, ..self }
    }

    pub fn with_circles(self, circles: usize) -> Self {
        Regularizer { circles, ..self }
    }

    pub fn q(&self, n: i64) -> f64 {
        let base = match self.kind {
            RegularizerKind::MaxAbs => (n.abs() as f64).max(1.0),
            RegularizerKind::SqrtShift { m } => ((n * n) as f64 + m * m).sqrt(),
        };
        self.scale * base
    }

    /// Continuation of sum_{n >= 1} q_n^{-s} for one direction of one component.
    pub fn zeta_half(&self, s: f64) -> Result<f64> {
        let base = match self.kind {
            RegularizerKind::MaxAbs => {
                if (s - 1.0).abs() < 1e-12 {
                    return Err(Error::InvalidArgument("zeta_Q has a pole at s = 1".into()));
                }
                riemann_zeta(s)
            }
            RegularizerKind::SqrtShift { m } => {
                // (n^2+m^2)^{-s/2} = n^{-s} sum_k binom(-s/2, k) m^{2k} n^{-2k}; subtract k < 4 and
                // add those back through Riemann zeta.
                let kmax = 4;
                let mut total = 0.0;
                for k in 0..kmax {
                    let bk = binom_real(-0.5 * s, k);
                    if bk == 0.0 {
                        continue;
                    }
                    let arg = s + 2.0 * k as f64;
                    if (arg - 1.0).abs() < 1e-12 {
                        return Err(Error::InvalidArgument(format!("zeta_Q has a pole at s = {s}")));
                    }
                    total += bk * m.powi(2 * k as i32) * riemann_zeta(arg);
                }
                let mut rest = 0.0;
                for n in (1..=400).rev() {
                    let x = n as f64;
                    let mut head = 0.0;
                    for k in 0..kmax {
                        head += binom_real(-0.5 * s, k) * (m * m / (x * x)).powi(k as i32);
                    }
                    rest += x.powf(-s) * ((1.0 + m * m / (x * x)).powf(-0.5 * s) - head);
                }
                total + rest
            }
        };
        Ok(self.scale.powf(-s) * base)
    }

    /// zeta_Q(s) on B'' of all circles: two components per mode.
    pub fn zeta_q(&self, s: f64) -> Result<f64> {
        let q0 = self.q(0).powf(-s);
        Ok(self.circles as f64 * 2.0 * (q0 + 2.0 * self.zeta_half(s)?))
    }

    pub fn zeta_q_at_0(&self) -> f64 {
        self.zeta_q(0.0).expect("zeta_Q is regular at 0")
    }
}

/// c_Q = 2^{-zeta_Q(0)}.
pub fn c_q(q: &Regularizer) -> f64 {
    2f64.powf(-q.zeta_q_at_0())
}

#[derive(Clone, Debug, PartialEq)]
pub struct DetReport {
    pub log_det: f64,
    /// analytic tail added past the truncation
    pub tail: f64,
    /// estimate of the error in that tail
    pub tail_bound: f64,
    /// log|det| of the symbol limits (n -> +inf, n -> -inf)
    pub symbol_log: (f64, f64),
    pub zeta_q0: f64,
    /// number of excluded real directions
    pub deflated: usize,
}

fn hermitian_eigen(b: &Mat2) -> ([f64; 2], Mat2) {
    let [l1, l2] = b.hermitian_eigenvalues();
    let a = b.a[0][0].re;
    let off = b.a[0][1];
    // eigenvector for l: (off, l - a) or (l - d, conj(off))
    let vec_for = |l: f64| -> [C64; 2] {
        let v1 = [off, c(l - a, 0.0)];
        let v2 = [c(l - b.a[1][1].re, 0.0), off.conj()];
        let n1 = (v1[0].norm_sqr() + v1[1].norm_sqr()).sqrt();
        let n2 = (v2[0].norm_sqr() + v2[1].norm_sqr()).sqrt();
        let (v, n) = if n1 >= n2 { (v1, n1) } else { (v2, n2) };
        [v[0] / n, v[1] / n]
    };
    if off.norm() <= 1e-300 {
        // already diagonal; keep ascending order
        let (d1, d2) = (b.a[0][0].re, b.a[1][1].re);
        return if d1 <= d2 {
            ([d1, d2], Mat2::identity())
        } else {
            ([d2, d1], Mat2::swap())
        };
    }
    let u = vec_for(l1);
    let w = vec_for(l2);
    ([l1, l2], Mat2::new(u[0], w[0], u[1], w[1]))
}

/// Log of a hermitian invertible block; indefinite blocks use (1/2) Log of the square.
pub fn log_block(b: &Mat2, mode: i64) -> Result<Mat2> {
    if !b.is_hermitian(1e-12) {
        return Err(Error::NonHermitian(mode));
    }
    let ([l1, l2], v) = hermitian_eigen(b);
    let scale = b.norm().max(1e-300);
    if l1.abs() <= 1e-14 * scale || l2.abs() <= 1e-14 * scale {
        return Err(Error::SingularBlock(mode));
    }
    let d = Mat2::real(l1.abs().ln(), 0.0, 0.0, l2.abs().ln());
    Ok(v * d * v.adjoint())
}

/// Block-wise Log. Symbol limits are logged the same way.
pub fn log_operator(t: &BlockCircleOperator) -> Result<BlockCircleOperator> {
    if !t.is_diagonal() {
        return Err(Error::Unsupported("log_operator needs a mode-diagonal operator".into()));
    }
    let blocks: Result<Vec<Mat2>> = t.modes().map(|n| log_block(&t.block(n), n)).collect();
    let mut out = t.clone();
    out.blocks = blocks?;
    out.symbol_plus = log_block(&t.symbol_plus, i64::MAX)?;
    out.symbol_minus = log_block(&t.symbol_minus, i64::MIN)?;
    Ok(out)
}

fn log_abs_det(b: &Mat2) -> f64 {
    b.det().norm().ln()
}

/// Pairwise summation with a fixed tree so results do not depend on scheduling.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 8 {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// Sum_{n > n_max} of r_n from a fit in powers n^-2 ... n^-6 on the last half of the window,
/// with an error estimate.
fn fitted_tail(r: &dyn Fn(i64) -> f64, n_max: i64) -> (f64, f64) {
    if n_max < 16 {
        return (0.0, r(n_max).abs() * n_max as f64);
    }
    let probe = [n_max / 2, (3 * n_max) / 4, n_max].iter().map(|&n| r(n).abs()).fold(0.0, f64::max);
    if probe <= 1e-14 {
        return (0.0, probe * n_max as f64);
    }
    let hz = |p: f64| hurwitz_zeta(p, (n_max + 1) as f64);
    // fits with 4 and 5 inverse powers starting at n^-2; their difference bounds the error
    let fit = |k: usize| -> f64 {
        let pts: Vec<i64> = (0..k).map(|i| n_max / 2 + (n_max / 2) * i as i64 / (k as i64 - 1)).collect();
        let m = DMatrix::from_fn(k, k, |i, j| (pts[i] as f64).powi(-(j as i32) - 2));
        let v = DVector::from_iterator(k, pts.iter().map(|&n| r(n)));
        match m.lu().solve(&v) {
            Some(coef) => (0..k).map(|j| coef[j] * hz(j as f64 + 2.0)).sum(),
            None => 0.0,
        }
    };
    let t4 = fit(4);
    let t5 = fit(5);
    (t5, (t5 - t4).abs() + 1e-16 * n_max as f64)
}

fn check_decay(r: &dyn Fn(i64) -> f64, n_max: i64, scale: f64) -> Result<()> {
    if n_max < 16 {
        return Ok(());
    }
    let a = r(n_max / 4).abs();
    let b = r(n_max).abs();
    let noise = 1e-12 * scale.max(1.0);
    if b <= noise {
        return Ok(());
    }
    // r ~ n^-p: p = log(a/b)/log 4
    let p = (a / b).ln() / 4f64.ln();
    if p < 1.6 {
        return Err(Error::NotTraceClassPerturbation);
    }
    Ok(())
}

/// Complex coefficient vector of a real datum restricted to the listed modes.
fn datum_vector(d: &BoundaryData, modes: &[i64]) -> DVector<C64> {
    let mut v = DVector::zeros(2 * modes.len());
    for (i, &n) in modes.iter().enumerate() {
        let [f, g] = d.mode(n);
        v[2 * i] = f;
        v[2 * i + 1] = g;
    }
    v
}

fn datum_support(d: &BoundaryData) -> Vec<i64> {
    let m = d.n_max() as i64;
    (-m..=m)
        .filter(|&n| {
            let [f, g] = d.mode(n);
            f.norm() > 0.0 || g.norm() > 0.0
        })
        .collect()
}

/// log|det| of the compression of `mat` to the orthogonal complement of the columns of `ex`.
fn compressed_log_det(mat: &DMatrix<C64>, ex: &[DVector<C64>]) -> Result<f64> {
    let dim = mat.nrows();
    if ex.is_empty() {
        return Ok(mat.clone().lu().determinant().norm().ln());
    }
    // orthonormalize the excluded vectors (modified Gram-Schmidt, twice)
    let mut basis: Vec<DVector<C64>> = Vec::new();
    for v in ex {
        let norm0 = v.norm();
        let mut w = v.clone();
        for _ in 0..2 {
            for b in &basis {
                let p = b.dotc(&w);
                w -= b * p;
            }
        }
        let nw = w.norm();
        if nw <= 1e-10 * norm0.max(1e-300) {
            return Err(Error::DependentExclusions);
        }
        basis.push(w / C64::new(nw, 0.0));
    }
    let mut proj = DMatrix::<C64>::identity(dim, dim);
    for b in &basis {
        proj -= b * b.adjoint();
    }
    let eig = nalgebra::SymmetricEigen::new(proj);
    let keep: Vec<usize> = (0..dim).filter(|&i| eig.eigenvalues[i] > 0.5).collect();
    if keep.len() != dim - basis.len() {
        return Err(Error::DependentExclusions);
    }
    if keep.is_empty() {
        return Ok(0.0);
    }
    let w = DMatrix::from_fn(dim, keep.len(), |i, j| eig.eigenvectors[(i, keep[j])]);
    let comp = w.adjoint() * mat * &w;
    let det = comp.lu().determinant().norm();
    if det == 0.0 {
        return Err(Error::SingularBlock(0));
    }
    Ok(det.ln())
}

/// Excluded real directions implied by the operator's n = 0 description.
fn exceptional_directions(t: &BlockCircleOperator, star: bool) -> Vec<BoundaryData> {
    let mut out = Vec::new();
    if let Some(ex) = t.exceptional {
        for (comp, role) in [(0usize, ex.f), (1usize, ex.g)] {
            let drop = match role {
                ModeRole::InDomain => false,
                ModeRole::Excluded => true,
                ModeRole::Annihilated => star,
            };
            if drop {
                let mut d = BoundaryData::zero(t.n_max, 1.0);
                if comp == 0 {
                    d.f.set_mode(0, c(1.0, 0.0));
                } else {
                    d.g.set_mode(0, c(1.0, 0.0));
                }
                out.push(d);
            }
        }
    }
    out
}

/// log Det_Q T. Components of mode 0 marked excluded are not part of the domain and are dropped.
pub fn det_q(t: &BlockCircleOperator, q: &Regularizer) -> Result<DetReport> {
    det_impl(t, q, &[], false)
}

/// log Det*_Q T on the pairing-orthogonal complement of `excluded` and of the
/// operator's exceptional mode-0 directions.
pub fn det_q_star(t: &BlockCircleOperator, q: &Regularizer, excluded: &[BoundaryData]) -> Result<DetReport> {
    det_impl(t, q, excluded, true)
}

fn det_impl(t: &BlockCircleOperator, q: &Regularizer, excluded: &[BoundaryData], star: bool) -> Result<DetReport> {
    let n_max = t.n_max as i64;
    for d in excluded {
        if d.n_max() != t.n_max {
            return Err(Error::TruncationMismatch(d.n_max(), t.n_max));
        }
    }
    let mut all_ex: Vec<BoundaryData> = exceptional_directions(t, star);
    all_ex.extend(excluded.iter().cloned());

    let lp = log_abs_det(&t.symbol_plus);
    let lm = log_abs_det(&t.symbol_minus);
    if !lp.is_finite() || !lm.is_finite() {
        return Err(Error::InvalidArgument("symbol limits must be invertible".into()));
    }
    let sym = |n: i64| if n > 0 { lp } else if n < 0 { lm } else { 0.0 };

    // group modes: dense operators form one group; otherwise modes touched by
    // excluded vectors form one group and every other mode stands alone
    let grouped: BTreeSet<i64> = if t.is_diagonal() {
        all_ex.iter().flat_map(datum_support).collect()
    } else {
        t.modes().collect()
    };
    let group: Vec<i64> = grouped.iter().copied().collect();

    let singles: Vec<i64> = t.modes().filter(|n| !grouped.contains(n)).collect();
    let single_terms: Vec<f64> = singles
        .par_iter()
        .map(|&n| {
            let v = log_abs_det(&t.block(n));
            if v.is_finite() {
                Ok(v - sym(n))
            } else {
                Err(Error::SingularBlock(n))
            }
        })
        .collect::<Result<Vec<f64>>>()?;

    let mut group_term = 0.0;
    if !group.is_empty() {
        let mat = t.to_dense(&group);
        let vecs: Vec<DVector<C64>> = all_ex.iter().map(|d| datum_vector(d, &group)).collect();
        group_term = compressed_log_det(&mat, &vecs)?;
        group_term -= group.iter().map(|&n| sym(n)).sum::<f64>();
    }

    let zp = q.zeta_half(0.0)?;
    let head = pairwise_sum(&single_terms) + group_term + lp * zp + lm * zp;

    // tail from the diagonal blocks; dense couplings are assumed to have decayed inside the window
    let (tail, tail_bound) = if n_max >= 16 && !grouped.contains(&n_max) && !grouped.contains(&-n_max) {
        let rp = |n: i64| log_abs_det(&t.block(n)) - lp;
        let rm = |n: i64| log_abs_det(&t.block(-n)) - lm;
        check_decay(&rp, n_max, lp.abs())?;
        check_decay(&rm, n_max, lm.abs())?;
        let (tp, bp) = fitted_tail(&rp, n_max);
        let (tm, bm) = fitted_tail(&rm, n_max);
        (tp + tm, bp + bm)
    } else {
        (0.0, 0.0)
    };
    let log_det = head + tail;
    if tail_bound > TAIL_TOLERANCE * log_det.abs().max(1.0) {
        return Err(Error::InsufficientTruncation);
    }
    Ok(DetReport {
        log_det,
        tail,
        tail_bound,
        symbol_log: (lp, lm),
        zeta_q0: q.zeta_q_at_0(),
        deflated: all_ex.len(),
    })
}

/// Max over `points` of |centered difference of log Det_Q T(eps)| - Re Tr(T^{-1} dT/deps)|.
/// `family` returns T(eps) and its derivative.
pub fn derivative_identity_check<F>(family: F, q: &Regularizer, points: &[f64], h: f64) -> Result<f64>
where
    F: Fn(f64) -> (BlockCircleOperator, BlockCircleOperator),
{
    let mut worst: f64 = 0.0;
    for &e in points {
        let lp = det_q(&family(e + h).0, q)?.log_det;
        let lm = det_q(&family(e - h).0, q)?.log_det;
        let fd = (lp - lm) / (2.0 * h);
        let (t, dt) = family(e);
        let tr = trace_inverse_times(&t, &dt)?;
        worst = worst.max((fd - tr).abs());
    }
    Ok(worst)
}

/// Re Tr(T^{-1} D) over the truncation window.
pub fn trace_inverse_times(t: &BlockCircleOperator, d: &BlockCircleOperator) -> Result<f64> {
    if t.n_max != d.n_max {
        return Err(Error::TruncationMismatch(t.n_max, d.n_max));
    }
    if t.is_diagonal() && d.is_diagonal() {
        let terms: Vec<f64> = t
            .modes()
            .map(|n| {
                let inv = t.block(n).inverse().ok_or(Error::SingularBlock(n))?;
                Ok((inv * d.block(n)).trace().re)
            })
            .collect::<Result<Vec<f64>>>()?;
        return Ok(pairwise_sum(&terms));
    }
    let modes: Vec<i64> = t.modes().collect();
    let tm = t.to_dense(&modes);
    let dm = d.to_dense(&modes);
    let x = tm.lu().solve(&dm).ok_or(Error::SingularBlock(0))?;
    Ok(x.trace().re)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circle_calculus::{chiral_symbol, half_space_operator};

    fn scalar_op(n_max: usize, x: f64) -> BlockCircleOperator {
        let m = Mat2::real(x, 0.0, 0.0, x);
        BlockCircleOperator::diagonal(n_max, |_| m, m, m)
    }

    #[test]
    fn identity_has_zero_log_det() {
        let r = det_q(&BlockCircleOperator::identity(64), &Regularizer::default()).unwrap();
        assert_eq!(r.log_det, 0.0);
    }

    #[test]
    fn twice_identity_default_q() {
        let r = det_q(&scalar_op(64, 2.0), &Regularizer::default()).unwrap();
        assert!(r.log_det.abs() < 1e-14);
    }

    #[test]
    fn zeta_q_default_matches_closed_form() {
        let q = Regularizer::default();
        for &s in &[0.0, -1.0, 2.0] {
            let want = 2.0 * (1.0 + 2.0 * riemann_zeta(s));
            assert!((q.zeta_q(s).unwrap() - want).abs() < 1e-12);
        }
        assert_eq!(c_q(&q), 1.0);
        assert!((c_q(&q.scaled(3.7)) - 1.0).abs() < 1e-15);
        assert!((q.with_circles(2).zeta_q_at_0()).abs() < 1e-15);
    }

    #[test]
    fn sqrt_regularizer_continuation() {
        // at s = 2 the series converges and can be summed directly
        let q = Regularizer::sqrt_shift(1.0);
        let direct: f64 = (1..200000).map(|n| 1.0 / ((n as f64).powi(2) + 1.0)).sum::<f64>() + 1.0 / 200000.0;
        assert!((q.zeta_half(2.0).unwrap() - direct).abs() < 1e-9);
        assert!((q.zeta_half(0.0).unwrap() + 0.5).abs() < 1e-13);
    }

    #[test]
    fn log_operator_examples() {
        let l = log_operator(&BlockCircleOperator::identity(4)).unwrap();
        assert!(l.blocks.iter().all(|b| b.norm() == 0.0));
        let l2 = log_operator(&scalar_op(4, 2.0)).unwrap();
        assert!((l2.block(1) - Mat2::real(2f64.ln(), 0.0, 0.0, 2f64.ln())).norm() < 1e-15);
        let ch = BlockCircleOperator::diagonal(4, |_| chiral_symbol(1.0), chiral_symbol(1.0), chiral_symbol(1.0));
        let l3 = log_operator(&ch).unwrap();
        assert!(l3.block(2).norm() < 1e-15);
        let sing = BlockCircleOperator::diagonal(2, |n| if n == 1 { Mat2::zero() } else { Mat2::identity() }, Mat2::identity(), Mat2::identity());
        assert_eq!(log_operator(&sing).unwrap_err(), Error::SingularBlock(1));
    }

    #[test]
    fn star_anti_symmetric_operator_has_unit_det() {
        // half-space model: star A = -A^{-1} star
        for &lam in &[0.5, 1.0, 2.0] {
            let a = half_space_operator(lam, 2.0 * std::f64::consts::PI, 256);
            let r = det_q(&a, &Regularizer::default()).unwrap();
            assert!(r.log_det.abs() < 1e-12, "lambda={lam}: {}", r.log_det);
        }
    }

    #[test]
    fn slow_decay_is_rejected() {
        let t = BlockCircleOperator::diagonal(
            256,
            |n| Mat2::real(1.0 + 1.0 / (n.abs() as f64 + 1.0), 0.0, 0.0, 1.0),
            Mat2::identity(),
            Mat2::identity(),
        );
        assert_eq!(det_q(&t, &Regularizer::default()).unwrap_err(), Error::NotTraceClassPerturbation);
    }

    #[test]
    fn tail_is_summed_analytically() {
        // blocks diag(1 + 1/(n^2+1), 1): log Det = sum_n log(1 + 1/(n^2+1)) in closed form
        // prod_{n in Z} (n^2+2)/(n^2+1) = (sinh(pi sqrt2)/sinh(pi))^2
        let t = BlockCircleOperator::diagonal(
            128,
            |n| Mat2::real(1.0 + 1.0 / ((n * n) as f64 + 1.0), 0.0, 0.0, 1.0),
            Mat2::identity(),
            Mat2::identity(),
        );
        let r = det_q(&t, &Regularizer::default()).unwrap();
        let pi = std::f64::consts::PI;
        let want = 2.0 * ((pi * 2f64.sqrt()).sinh() / pi.sinh()).ln();
        assert!((r.log_det - want).abs() < 1e-11, "{} vs {want}", r.log_det);
    }
}
