//! Fourier-mode representation of real boundary data on circles and of the
//! mode-wise boundary operators acting on it.
//!
//! Data on a circle is a pair (f, g) of real functions, f the section part and
//! g the 1-form part identified with a function through the Hodge star of the
//! circle's own orientation. Both are stored as hermitian-symmetric Fourier
//! coefficients f(theta) = sum_n fhat(n) e^{i n theta}.
//!
//! Operators act by 2x2 blocks on (fhat(n), ghat(n)). Blocks are complex
//! linear; a real operator satisfies B(-n) = conj(B(n)).
//!
//! Two sign conventions appear for A-operators. The "own" convention is the
//! one produced by `disk_alvarez_operator` and the direct solvers in `glue`:
//! outward normal n, tangent s = R90(n), data (V, V_s - U_n), output
//! (U_s + V_n, U), Fourier in the counterclockwise angle. The transfer formula
//! of `apply_transfer` is written in the conjugated convention
//! A_transfer = -K A_own K with K = diag(1, -1); `to_transfer_convention` and
//! `from_transfer_convention` convert.

use crate::error::{Error, Result};
use crate::mat2::{c, Mat2};
use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::f64::consts::PI;

const HERMITIAN_TOL: f64 = 1e-12;

/// Real function on a circle as hermitian-symmetric Fourier coefficients.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RealBoundaryField {
    pub n_max: usize,
    /// coefficient of mode n stored at index n + n_max
    pub coeffs: Vec<C64>,
}

impl RealBoundaryField {
    pub fn zero(n_max: usize) -> Self {
        RealBoundaryField { n_max, coeffs: vec![c(0.0, 0.0); 2 * n_max + 1] }
    }

    pub fn from_coeffs(n_max: usize, coeffs: Vec<C64>) -> Result<Self> {
        if coeffs.len() != 2 * n_max + 1 {
            return Err(Error::InvalidArgument(format!(
                "expected {} coefficients, got {}",
                2 * n_max + 1,
                coeffs.len()
            )));
        }
        let field = RealBoundaryField { n_max, coeffs };
        if !field.is_hermitian(HERMITIAN_TOL) {
            return Err(Error::InvalidArgument("coefficients are not hermitian symmetric".into()));
        }
        Ok(field)
    }

    /// Build from the nonnegative modes; negative modes are filled by conjugation.
    pub fn from_nonnegative(n_max: usize, positive: &[C64]) -> Self {
        let mut f = Self::zero(n_max);
        for (n, z) in positive.iter().enumerate().take(n_max + 1) {
            f.set_mode(n as i64, *z);
        }
        f
    }

    /// Set mode n to z and mode -n to conj(z). For n = 0 only the real part is kept.
    pub fn set_mode(&mut self, n: i64, z: C64) {
        let m = self.n_max as i64;
        assert!(n.abs() <= m, "mode {n} beyond truncation {m}");
        if n == 0 {
            self.coeffs[self.n_max] = c(z.re, 0.0);
        } else {
            self.coeffs[(n + m) as usize] = z;
            self.coeffs[(-n + m) as usize] = z.conj();
        }
    }

    /// Coefficient of mode n; zero beyond the truncation.
    pub fn coeff(&self, n: i64) -> C64 {
        if n.unsigned_abs() as usize > self.n_max {
            c(0.0, 0.0)
        } else {
            self.coeffs[(n + self.n_max as i64) as usize]
        }
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        let m = self.n_max as i64;
        let scale = self.coeffs.iter().map(|z| z.norm()).fold(1.0, f64::max);
        (0..=m).all(|n| (self.coeff(n) - self.coeff(-n).conj()).norm() <= tol * scale)
    }

    /// Value at angle theta.
    pub fn eval(&self, theta: f64) -> f64 {
        let m = self.n_max as i64;
        let mut s = c(0.0, 0.0);
        for n in -m..=m {
            s += self.coeff(n) * C64::from_polar(1.0, n as f64 * theta);
        }
        s.re
    }

    fn mirrored(&self) -> Self {
        let mut out = self.clone();
        out.coeffs.reverse();
        out
    }

    fn negated(&self) -> Self {
        RealBoundaryField { n_max: self.n_max, coeffs: self.coeffs.iter().map(|z| -z).collect() }
    }
}

/// Element of B''(Gamma) on a single circle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundaryData {
    pub f: RealBoundaryField,
    pub g: RealBoundaryField,
    pub circle_length: f64,
}

impl BoundaryData {
    pub fn new(f: RealBoundaryField, g: RealBoundaryField, circle_length: f64) -> Result<Self> {
        if f.n_max != g.n_max {
            return Err(Error::TruncationMismatch(f.n_max, g.n_max));
        }
        if !(circle_length > 0.0) {
            return Err(Error::InvalidArgument("circle length must be positive".into()));
        }
        Ok(BoundaryData { f, g, circle_length })
    }

    pub fn zero(n_max: usize, circle_length: f64) -> Self {
        BoundaryData {
            f: RealBoundaryField::zero(n_max),
            g: RealBoundaryField::zero(n_max),
            circle_length,
        }
    }

    pub fn n_max(&self) -> usize {
        self.f.n_max
    }

    pub fn mode(&self, n: i64) -> [C64; 2] {
        [self.f.coeff(n), self.g.coeff(n)]
    }
}

/// Real pairing 2 Re of the L^2 product over the circle (arclength measure).
pub fn pairing(u: &BoundaryData, v: &BoundaryData) -> Result<f64> {
    if u.n_max() != v.n_max() {
        return Err(Error::TruncationMismatch(u.n_max(), v.n_max()));
    }
    if (u.circle_length - v.circle_length).abs() > 1e-14 * u.circle_length {
        return Err(Error::InvalidArgument("circle lengths differ".into()));
    }
    let m = u.n_max() as i64;
    let mut s = 0.0;
    for n in -m..=m {
        s += (u.f.coeff(n) * v.f.coeff(n).conj()).re + (u.g.coeff(n) * v.g.coeff(n).conj()).re;
    }
    Ok(2.0 * u.circle_length * s)
}

/// Hodge star: (f, g) -> (g, f).
pub fn apply_star(u: &BoundaryData) -> BoundaryData {
    BoundaryData { f: u.g.clone(), g: u.f.clone(), circle_length: u.circle_length }
}

/// Mirror Sigma: fhat(n) -> fhat(-n) in both components.
pub fn apply_mirror(u: &BoundaryData) -> BoundaryData {
    BoundaryData { f: u.f.mirrored(), g: u.g.mirrored(), circle_length: u.circle_length }
}

/// Complex structure J(f, g) = (-g, f).
pub fn apply_j(u: &BoundaryData) -> BoundaryData {
    BoundaryData { f: u.g.negated(), g: u.f.clone(), circle_length: u.circle_length }
}

/// Orientation reversal of the 1-form component, K(f, g) = (f, -g).
pub fn apply_k(u: &BoundaryData) -> BoundaryData {
    BoundaryData { f: u.f.clone(), g: u.g.negated(), circle_length: u.circle_length }
}

/// Role of a component of the constant mode n = 0.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeRole {
    InDomain,
    Annihilated,
    Excluded,
}

/// Explicit description of the n = 0 block. `blocks[0]` holds the action on
/// the in-domain components; annihilated columns are zero and excluded
/// components are dropped from determinants.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExceptionalBlock {
    pub f: ModeRole,
    pub g: ModeRole,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BlockCircleOperator {
    pub n_max: usize,
    pub band_width: usize,
    /// diagonal blocks, mode n at index n + n_max
    pub blocks: Vec<Mat2>,
    /// off-diagonal couplings, keyed (row mode, column mode)
    pub couplings: BTreeMap<(i64, i64), Mat2>,
    pub symbol_plus: Mat2,
    pub symbol_minus: Mat2,
    pub exceptional: Option<ExceptionalBlock>,
}

impl BlockCircleOperator {
    pub fn diagonal<F: Fn(i64) -> Mat2>(
        n_max: usize,
        block: F,
        symbol_plus: Mat2,
        symbol_minus: Mat2,
    ) -> Self {
        let m = n_max as i64;
        BlockCircleOperator {
            n_max,
            band_width: 0,
            blocks: (-m..=m).map(block).collect(),
            couplings: BTreeMap::new(),
            symbol_plus,
            symbol_minus,
            exceptional: None,
        }
    }

    pub fn zero(n_max: usize) -> Self {
        Self::diagonal(n_max, |_| Mat2::zero(), Mat2::zero(), Mat2::zero())
    }

    pub fn identity(n_max: usize) -> Self {
        Self::diagonal(n_max, |_| Mat2::identity(), Mat2::identity(), Mat2::identity())
    }

    pub fn with_exceptional(mut self, ex: ExceptionalBlock) -> Self {
        self.exceptional = Some(ex);
        self
    }

    pub fn modes(&self) -> std::ops::RangeInclusive<i64> {
        let m = self.n_max as i64;
        -m..=m
    }

    pub fn block(&self, n: i64) -> Mat2 {
        self.blocks[(n + self.n_max as i64) as usize]
    }

    pub fn block_mut(&mut self, n: i64) -> &mut Mat2 {
        let i = (n + self.n_max as i64) as usize;
        &mut self.blocks[i]
    }

    /// Coupling from column mode `col` into row mode `row`; the diagonal for row == col.
    pub fn entry(&self, row: i64, col: i64) -> Mat2 {
        if row == col {
            self.block(row)
        } else {
            self.couplings.get(&(row, col)).copied().unwrap_or_else(Mat2::zero)
        }
    }

    pub fn is_diagonal(&self) -> bool {
        self.couplings.is_empty()
    }

    fn check_same(&self, other: &Self) -> Result<()> {
        if self.n_max != other.n_max {
            return Err(Error::TruncationMismatch(self.n_max, other.n_max));
        }
        Ok(())
    }

    /// Apply to real boundary data.
    pub fn apply(&self, u: &BoundaryData) -> Result<BoundaryData> {
        if u.n_max() != self.n_max {
            return Err(Error::TruncationMismatch(u.n_max(), self.n_max));
        }
        let mut f = RealBoundaryField::zero(self.n_max);
        let mut g = RealBoundaryField::zero(self.n_max);
        let input = |n: i64| -> [C64; 2] {
            let mut x = u.mode(n);
            if n == 0 {
                if let Some(ex) = self.exceptional {
                    if ex.f != ModeRole::InDomain {
                        x[0] = c(0.0, 0.0);
                    }
                    if ex.g != ModeRole::InDomain {
                        x[1] = c(0.0, 0.0);
                    }
                }
            }
            x
        };
        for n in self.modes() {
            let y = self.block(n).apply(input(n));
            f.coeffs[(n + self.n_max as i64) as usize] += y[0];
            g.coeffs[(n + self.n_max as i64) as usize] += y[1];
        }
        for (&(row, col), b) in &self.couplings {
            let y = b.apply(input(col));
            f.coeffs[(row + self.n_max as i64) as usize] += y[0];
            g.coeffs[(row + self.n_max as i64) as usize] += y[1];
        }
        Ok(BoundaryData { f, g, circle_length: u.circle_length })
    }

    /// Dense matrix over the listed modes, rows and columns ordered (mode, component).
    pub fn to_dense(&self, modes: &[i64]) -> DMatrix<C64> {
        let k = modes.len();
        let mut m = DMatrix::zeros(2 * k, 2 * k);
        for (i, &row) in modes.iter().enumerate() {
            for (j, &col) in modes.iter().enumerate() {
                if row != col && (row - col).unsigned_abs() as usize > self.band_width {
                    continue;
                }
                let b = self.entry(row, col);
                for a in 0..2 {
                    for bb in 0..2 {
                        m[(2 * i + a, 2 * j + bb)] = b.a[a][bb];
                    }
                }
            }
        }
        m
    }

    /// Inverse of `to_dense`; entries below 1e-300 are dropped from the coupling table.
    pub fn from_dense(
        n_max: usize,
        modes: &[i64],
        m: &DMatrix<C64>,
        symbol_plus: Mat2,
        symbol_minus: Mat2,
    ) -> Self {
        let mut op = Self::zero(n_max);
        op.symbol_plus = symbol_plus;
        op.symbol_minus = symbol_minus;
        for (i, &row) in modes.iter().enumerate() {
            for (j, &col) in modes.iter().enumerate() {
                let b = Mat2::new(
                    m[(2 * i, 2 * j)],
                    m[(2 * i, 2 * j + 1)],
                    m[(2 * i + 1, 2 * j)],
                    m[(2 * i + 1, 2 * j + 1)],
                );
                if row == col {
                    *op.block_mut(row) = b;
                } else if b.norm() > 1e-300 {
                    op.couplings.insert((row, col), b);
                    op.band_width = op.band_width.max((row - col).unsigned_abs() as usize);
                }
            }
        }
        op
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_same(other)?;
        let mut out = self.clone();
        for (b, o) in out.blocks.iter_mut().zip(&other.blocks) {
            *b = *b + *o;
        }
        for (k, v) in &other.couplings {
            let e = out.couplings.entry(*k).or_insert_with(Mat2::zero);
            *e = *e + *v;
        }
        out.band_width = self.band_width.max(other.band_width);
        out.symbol_plus = self.symbol_plus + other.symbol_plus;
        out.symbol_minus = self.symbol_minus + other.symbol_minus;
        if out.exceptional.is_none() {
            out.exceptional = other.exceptional;
        }
        Ok(out)
    }

    /// Left and right multiplication of every block by fixed 2x2 matrices.
    pub fn conjugate_by(&self, left: Mat2, right: Mat2) -> Self {
        let mut out = self.clone();
        for b in out.blocks.iter_mut() {
            *b = left * *b * right;
        }
        for b in out.couplings.values_mut() {
            *b = left * *b * right;
        }
        out.symbol_plus = left * self.symbol_plus * right;
        out.symbol_minus = left * self.symbol_minus * right;
        out
    }

    /// Sigma A Sigma: mode n -> -n.
    pub fn mirror_conjugate(&self) -> Self {
        let mut out = self.clone();
        out.blocks.reverse();
        out.couplings = self.couplings.iter().map(|(&(r, c), b)| ((-r, -c), *b)).collect();
        out.symbol_plus = self.symbol_minus;
        out.symbol_minus = self.symbol_plus;
        out
    }

    /// Hermitian symmetry of the operator as a map on mode space.
    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.blocks.iter().all(|b| b.is_hermitian(tol))
            && self.couplings.iter().all(|(&(r, c), b)| {
                let t = self.entry(c, r).adjoint();
                (*b - t).norm() <= tol * b.norm().max(1.0)
            })
    }

    /// Reality: B(-n) = conj(B(n)) for blocks and couplings.
    pub fn preserves_reality(&self, tol: f64) -> bool {
        self.modes().all(|n| (self.block(-n) - self.block(n).conj()).norm() <= tol * self.block(n).norm().max(1.0))
            && self.couplings.iter().all(|(&(r, c), b)| (self.entry(-r, -c) - b.conj()).norm() <= tol * b.norm().max(1.0))
    }

    /// Block-norm deviation from the symbol at mode n.
    pub fn symbol_defect(&self, n: i64) -> f64 {
        let s = if n >= 0 { self.symbol_plus } else { self.symbol_minus };
        (self.block(n) - s).norm()
    }

    /// diag(r, 1) A diag(1, 1/r): the operator seen after dilating the circle of radius r to radius 1.
    pub fn rescale(&self, r: f64) -> Self {
        self.conjugate_by(Mat2::real(r, 0.0, 0.0, 1.0), Mat2::real(1.0, 0.0, 0.0, 1.0 / r))
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(OperatorJson::from(self)).expect("operator serializes")
    }

    pub fn from_json(v: &serde_json::Value) -> Result<Self> {
        let j: OperatorJson = serde_json::from_value(v.clone()).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        j.try_into()
    }
}

#[derive(Serialize, Deserialize)]
struct OperatorJson {
    n_max: usize,
    band_width: usize,
    blocks: Vec<(i64, Mat2)>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    couplings: Vec<(i64, i64, Mat2)>,
    symbol_plus: Mat2,
    symbol_minus: Mat2,
    exceptional: Option<ExceptionalBlock>,
}

impl From<&BlockCircleOperator> for OperatorJson {
    fn from(op: &BlockCircleOperator) -> Self {
        OperatorJson {
            n_max: op.n_max,
            band_width: op.band_width,
            blocks: op.modes().map(|n| (n, op.block(n))).collect(),
            couplings: op.couplings.iter().map(|(&(r, c), b)| (r, c, *b)).collect(),
            symbol_plus: op.symbol_plus,
            symbol_minus: op.symbol_minus,
            exceptional: op.exceptional,
        }
    }
}

impl TryFrom<OperatorJson> for BlockCircleOperator {
    type Error = Error;
    fn try_from(j: OperatorJson) -> Result<Self> {
        let mut op = BlockCircleOperator::zero(j.n_max);
        op.band_width = j.band_width;
        op.symbol_plus = j.symbol_plus;
        op.symbol_minus = j.symbol_minus;
        op.exceptional = j.exceptional;
        let m = j.n_max as i64;
        for (n, b) in j.blocks {
            if n.abs() > m {
                return Err(Error::InvalidArgument(format!("block mode {n} beyond n_max")));
            }
            *op.block_mut(n) = b;
        }
        for (r, cc, b) in j.couplings {
            if r.abs() > m || cc.abs() > m || (r - cc).unsigned_abs() as usize > j.band_width {
                return Err(Error::InvalidArgument(format!("coupling ({r},{cc}) outside band")));
            }
            op.couplings.insert((r, cc), b);
        }
        Ok(op)
    }
}

fn sgn(n: i64) -> f64 {
    n.signum() as f64
}

/// Symbol [[0, -i s],[i s, 0]] for s = +1 (n -> +inf) or s = -1.
pub fn chiral_symbol(s: f64) -> Mat2 {
    Mat2::new(c(0.0, 0.0), c(0.0, -s), c(0.0, s), c(0.0, 0.0))
}

/// Alvarez boundary operator of the flat disk of radius eps, trivial bundle and framing.
pub fn disk_alvarez_operator(eps: f64, n_max: usize) -> Result<BlockCircleOperator> {
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument("disk radius must be positive".into()));
    }
    let op = BlockCircleOperator::diagonal(
        n_max,
        |n| {
            if n == 0 {
                Mat2::zero()
            } else {
                let s = sgn(n);
                Mat2::new(c(0.0, 0.0), c(0.0, -s), c(0.0, s), c(-eps / n.abs() as f64, 0.0))
            }
        },
        chiral_symbol(1.0),
        chiral_symbol(-1.0),
    );
    Ok(op.with_exceptional(ExceptionalBlock { f: ModeRole::Annihilated, g: ModeRole::Excluded }))
}

/// Alvarez boundary operator of the exterior {|z| >= r} of a disk in the plane
/// (bounded solutions), own convention.
pub fn plane_exterior_operator(r: f64, n_max: usize) -> Result<BlockCircleOperator> {
    if !(r > 0.0) {
        return Err(Error::InvalidArgument("radius must be positive".into()));
    }
    let op = BlockCircleOperator::diagonal(
        n_max,
        |n| {
            if n == 0 {
                Mat2::zero()
            } else {
                let s = sgn(n);
                Mat2::new(c(0.0, 0.0), c(0.0, s), c(0.0, -s), c(-r / n.abs() as f64, 0.0))
            }
        },
        chiral_symbol(-1.0),
        chiral_symbol(1.0),
    );
    Ok(op.with_exceptional(ExceptionalBlock { f: ModeRole::Annihilated, g: ModeRole::Excluded }))
}

fn annulus_c(eps: f64, n: i64) -> f64 {
    // (e^n - e^-n)/(e^n + e^-n) with e = eps
    (n as f64 * eps.ln()).tanh()
}

/// The three mode-diagonal operators S, U, T of the annulus {eps <= |z| <= 1}.
/// The constant mode is exceptional and set to zero in all three.
pub fn annulus_transfer(
    eps: f64,
    n_max: usize,
) -> Result<(BlockCircleOperator, BlockCircleOperator, BlockCircleOperator)> {
    if !(eps > 0.0 && eps <= 0.5) {
        return Err(Error::InvalidArgument(format!("annulus parameter {eps} outside (0, 1/2]")));
    }
    let ex = ExceptionalBlock { f: ModeRole::Excluded, g: ModeRole::Excluded };
    let s = BlockCircleOperator::diagonal(
        n_max,
        |n| {
            if n == 0 {
                return Mat2::zero();
            }
            let cn = annulus_c(eps, n);
            Mat2::new(c(0.0, 0.0), c(0.0, -1.0), c(0.0, 1.0), c(-eps / n as f64, 0.0)).scale_re(cn)
        },
        Mat2::new(c(0.0, 0.0), c(0.0, 1.0), c(0.0, -1.0), c(0.0, 0.0)),
        Mat2::new(c(0.0, 0.0), c(0.0, -1.0), c(0.0, 1.0), c(0.0, 0.0)),
    )
    .with_exceptional(ex);
    let u = BlockCircleOperator::diagonal(
        n_max,
        |n| {
            if n == 0 {
                return Mat2::zero();
            }
            // 2/(eps (eps^n + eps^-n)) = 1/(eps cosh(n log eps))
            let pref = 1.0 / (eps * (n as f64 * eps.ln()).cosh());
            Mat2::real(pref, 0.0, 0.0, pref * eps)
        },
        Mat2::zero(),
        Mat2::zero(),
    )
    .with_exceptional(ex);
    let t = BlockCircleOperator::diagonal(
        n_max,
        |n| {
            if n == 0 {
                return Mat2::zero();
            }
            let cn = annulus_c(eps, n);
            Mat2::new(c(1.0 / n as f64, 0.0), c(0.0, -1.0), c(0.0, 1.0), c(0.0, 0.0)).scale_re(cn)
        },
        Mat2::new(c(0.0, 0.0), c(0.0, 1.0), c(0.0, -1.0), c(0.0, 0.0)),
        Mat2::new(c(0.0, 0.0), c(0.0, -1.0), c(0.0, 1.0), c(0.0, 0.0)),
    )
    .with_exceptional(ex);
    Ok((s, u, t))
}

/// The eps -> 0 limit T_0 of the transfer block T.
pub fn transfer_t0(n_max: usize) -> BlockCircleOperator {
    BlockCircleOperator::diagonal(
        n_max,
        |n| {
            if n == 0 {
                return Mat2::zero();
            }
            let s = sgn(n);
            Mat2::new(c(-1.0 / n.abs() as f64, 0.0), c(0.0, s), c(0.0, -s), c(0.0, 0.0))
        },
        Mat2::new(c(0.0, 0.0), c(0.0, 1.0), c(0.0, -1.0), c(0.0, 0.0)),
        Mat2::new(c(0.0, 0.0), c(0.0, -1.0), c(0.0, 1.0), c(0.0, 0.0)),
    )
}

/// A_transfer = -K A_own K.
pub fn to_transfer_convention(a: &BlockCircleOperator) -> BlockCircleOperator {
    a.conjugate_by(-Mat2::k(), Mat2::k())
}

pub fn from_transfer_convention(a: &BlockCircleOperator) -> BlockCircleOperator {
    to_transfer_convention(a)
}

/// S + eps U A1 (I + T A1)^{-1} U, all operators in the transfer convention.
/// The constant mode is dropped (it is exceptional for the annulus).
pub fn apply_transfer(a1: &BlockCircleOperator, eps: f64) -> Result<BlockCircleOperator> {
    let n_max = a1.n_max;
    let (s, u, t) = annulus_transfer(eps, n_max)?;
    let ex = ExceptionalBlock { f: ModeRole::Excluded, g: ModeRole::Excluded };
    if a1.is_diagonal() {
        let mut out = s.clone();
        for n in a1.modes() {
            if n == 0 {
                continue;
            }
            let a = a1.block(n);
            let m = Mat2::identity() + t.block(n) * a;
            let inv = m.inverse().ok_or(Error::SingularBlock(n))?;
            *out.block_mut(n) = s.block(n) + (u.block(n) * a * inv * u.block(n)).scale_re(eps);
        }
        return Ok(out.with_exceptional(ex));
    }
    let modes: Vec<i64> = a1.modes().filter(|&n| n != 0).collect();
    let am = a1.to_dense(&modes);
    let sm = s.to_dense(&modes);
    let um = u.to_dense(&modes);
    let tm = t.to_dense(&modes);
    let dim = am.nrows();
    let m = DMatrix::<C64>::identity(dim, dim) + &tm * &am;
    let lu = m.lu();
    let rhs = &um;
    let solved = lu.solve(rhs).ok_or_else(|| {
        // name the first mode whose diagonal block is singular, else the first mode
        let bad = modes
            .iter()
            .copied()
            .find(|&n| (Mat2::identity() + t.block(n) * a1.block(n)).inverse().is_none())
            .unwrap_or(modes[0]);
        Error::SingularBlock(bad)
    })?;
    let res = &sm + (&um * &am * solved) * C64::new(eps, 0.0);
    let mut out = BlockCircleOperator::from_dense(n_max, &modes, &res, s.symbol_plus, s.symbol_minus);
    out.exceptional = Some(ex);
    Ok(out)
}

/// Neumann jump operator for a cut circle from the A-operators of the two
/// sides, both in their own convention and written in the common angular
/// parametrization: outside + K inside K. K reverses the orientation of the
/// 1-form component, which is how the second side sees the same data.
pub fn assemble_jump(outside: &BlockCircleOperator, inside: &BlockCircleOperator) -> Result<BlockCircleOperator> {
    outside.check_same(inside)?;
    let k = Mat2::k();
    outside.add(&inside.conjugate_by(k, k))
}

/// Half-space model A(lambda) at frequency xi: (1/mu)[[lambda, -i xi],[i xi, -1]], mu = sqrt(xi^2 + lambda).
pub fn half_space_symbol(xi: f64, lambda: f64) -> Mat2 {
    let mu = (xi * xi + lambda).sqrt();
    Mat2::new(c(lambda, 0.0), c(0.0, -xi), c(0.0, xi), c(-1.0, 0.0)).scale_re(1.0 / mu)
}

/// Apply the half-space model on a circle of length L, xi = 2 pi n / L.
pub fn half_space_operator(lambda: f64, circle_length: f64, n_max: usize) -> BlockCircleOperator {
    BlockCircleOperator::diagonal(
        n_max,
        |n| half_space_symbol(2.0 * PI * n as f64 / circle_length, lambda),
        chiral_symbol(1.0),
        chiral_symbol(-1.0),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn data_mode(n_max: usize, n: i64, z: C64, comp: usize) -> BoundaryData {
        let mut d = BoundaryData::zero(n_max, 2.0 * PI);
        if comp == 0 {
            d.f.set_mode(n, z);
        } else {
            d.g.set_mode(n, z);
        }
        d
    }

    #[test]
    fn constant_pairing() {
        let mut d = BoundaryData::zero(4, 2.0 * PI);
        d.f.set_mode(0, c(1.0, 0.0));
        assert!((pairing(&d, &d).unwrap() - 4.0 * PI).abs() < 1e-14);
    }

    #[test]
    fn cross_components_pair_to_zero() {
        let u = data_mode(8, 1, c(1.0, 0.0), 0);
        let v = data_mode(8, 3, c(0.2, -1.0), 1);
        assert_eq!(pairing(&u, &v).unwrap(), 0.0);
    }

    #[test]
    fn mismatched_truncation_is_an_error() {
        let u = BoundaryData::zero(4, 1.0);
        let v = BoundaryData::zero(5, 1.0);
        assert_eq!(pairing(&u, &v), Err(Error::TruncationMismatch(4, 5)));
    }

    #[test]
    fn mirror_moves_support() {
        let u = data_mode(6, 2, c(0.0, 1.0), 0);
        let m = apply_mirror(&u);
        // a real field at +-2 stays at +-2 but its positive-mode coefficient is conjugated
        assert_eq!(m.f.coeff(2), c(0.0, -1.0));
        assert_eq!(m.f.coeff(-2), c(0.0, 1.0));
    }

    #[test]
    fn disk_blocks() {
        let d = disk_alvarez_operator(1.0, 4).unwrap();
        assert_eq!(d.block(1), Mat2::new(c(0.0, 0.0), c(0.0, -1.0), c(0.0, 1.0), c(-1.0, 0.0)));
        assert_eq!(d.block(-1), Mat2::new(c(0.0, 0.0), c(0.0, 1.0), c(0.0, -1.0), c(-1.0, 0.0)));
        assert!(disk_alvarez_operator(0.0, 4).is_err());
        assert!(d.preserves_reality(0.0));
        assert!(d.is_hermitian(0.0));
    }

    #[test]
    fn transfer_blocks_at_half() {
        let (s, u, _) = annulus_transfer(0.5, 3).unwrap();
        let want_s = Mat2::new(c(0.0, 0.0), c(0.0, 0.6), c(0.0, -0.6), c(0.3, 0.0));
        assert!((s.block(1) - want_s).norm() < 1e-15);
        assert!((u.block(1) - Mat2::real(1.6, 0.0, 0.0, 0.8)).norm() < 1e-15);
        assert!(annulus_transfer(0.6, 3).is_err());
    }

    #[test]
    fn transfer_of_zero_is_s() {
        let z = BlockCircleOperator::zero(16);
        let out = apply_transfer(&z, 0.3).unwrap();
        let (s, _, _) = annulus_transfer(0.3, 16).unwrap();
        for n in -16..=16 {
            assert_eq!(out.block(n), s.block(n));
        }
    }

    #[test]
    fn transfer_reproduces_plane_exterior() {
        // exterior of the unit disk transfers to the exterior of the eps disk
        let n_max = 64;
        let a1 = to_transfer_convention(&plane_exterior_operator(1.0, n_max).unwrap());
        for &eps in &[0.5, 0.2, 0.05] {
            let out = from_transfer_convention(&apply_transfer(&a1, eps).unwrap());
            let want = plane_exterior_operator(eps, n_max).unwrap();
            for n in -64..=64i64 {
                if n != 0 {
                    assert!((out.block(n) - want.block(n)).norm() < 1e-12, "n={n} eps={eps}");
                }
            }
        }
    }

    #[test]
    fn jump_of_disk_and_exterior_is_hermitian() {
        let b = disk_alvarez_operator(0.25, 32).unwrap();
        let r = plane_exterior_operator(0.25, 32).unwrap();
        let n = assemble_jump(&r, &b).unwrap();
        assert!(n.is_hermitian(1e-15));
        let z = BlockCircleOperator::zero(32);
        assert_eq!(assemble_jump(&r, &z).unwrap().blocks, r.blocks);
    }

    #[test]
    fn half_space_star_relation() {
        let star = Mat2::swap();
        for &lam in &[0.5, 1.0, 2.0] {
            for n in -128..=128i64 {
                let a = half_space_symbol(n as f64, lam);
                let lhs = star * a;
                let rhs = -(a.inverse().unwrap() * star);
                assert!((lhs - rhs).norm() < 1e-13);
            }
        }
    }

    #[test]
    fn json_roundtrip() {
        let d = disk_alvarez_operator(0.5, 3).unwrap();
        let back = BlockCircleOperator::from_json(&d.to_json()).unwrap();
        assert_eq!(back, d);
    }
}
