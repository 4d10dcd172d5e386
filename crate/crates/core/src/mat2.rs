//! 2x2 complex matrices, the block type of every circle operator.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::ops::{Add, Mul, Neg, Sub};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mat2 {
    pub a: [[C64; 2]; 2],
}

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

impl Mat2 {
    pub fn new(a11: C64, a12: C64, a21: C64, a22: C64) -> Self {
        Mat2 { a: [[a11, a12], [a21, a22]] }
    }

    pub fn real(a11: f64, a12: f64, a21: f64, a22: f64) -> Self {
        Self::new(c(a11, 0.0), c(a12, 0.0), c(a21, 0.0), c(a22, 0.0))
    }

    pub fn zero() -> Self {
        Self::real(0.0, 0.0, 0.0, 0.0)
    }

    pub fn identity() -> Self {
        Self::real(1.0, 0.0, 0.0, 1.0)
    }

    pub fn diag(d1: C64, d2: C64) -> Self {
        Self::new(d1, c(0.0, 0.0), c(0.0, 0.0), d2)
    }

    /// K = diag(1, -1).
    pub fn k() -> Self {
        Self::real(1.0, 0.0, 0.0, -1.0)
    }

    /// The component swap [[0,1],[1,0]].
    pub fn swap() -> Self {
        Self::real(0.0, 1.0, 1.0, 0.0)
    }

    pub fn det(&self) -> C64 {
        self.a[0][0] * self.a[1][1] - self.a[0][1] * self.a[1][0]
    }

    pub fn trace(&self) -> C64 {
        self.a[0][0] + self.a[1][1]
    }

    pub fn inverse(&self) -> Option<Self> {
        let d = self.det();
        let scale = self.norm().max(1e-300);
        if d.norm() <= 1e-14 * scale * scale {
            return None;
        }
        Some(Mat2::new(self.a[1][1] / d, -self.a[0][1] / d, -self.a[1][0] / d, self.a[0][0] / d))
    }

    pub fn adjoint(&self) -> Self {
        Mat2::new(self.a[0][0].conj(), self.a[1][0].conj(), self.a[0][1].conj(), self.a[1][1].conj())
    }

    pub fn transpose(&self) -> Self {
        Mat2::new(self.a[0][0], self.a[1][0], self.a[0][1], self.a[1][1])
    }

    pub fn conj(&self) -> Self {
        Mat2::new(self.a[0][0].conj(), self.a[0][1].conj(), self.a[1][0].conj(), self.a[1][1].conj())
    }

    pub fn scale(&self, s: C64) -> Self {
        Mat2::new(self.a[0][0] * s, self.a[0][1] * s, self.a[1][0] * s, self.a[1][1] * s)
    }

    pub fn scale_re(&self, s: f64) -> Self {
        self.scale(c(s, 0.0))
    }

    /// Frobenius norm.
    pub fn norm(&self) -> f64 {
        self.a.iter().flatten().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        (*self - self.adjoint()).norm() <= tol * self.norm().max(1.0)
    }

    pub fn apply(&self, v: [C64; 2]) -> [C64; 2] {
        [
            self.a[0][0] * v[0] + self.a[0][1] * v[1],
            self.a[1][0] * v[0] + self.a[1][1] * v[1],
        ]
    }

    /// Eigenvalues of a hermitian block, ascending.
    pub fn hermitian_eigenvalues(&self) -> [f64; 2] {
        let p = 0.5 * (self.a[0][0].re + self.a[1][1].re);
        let q = 0.5 * (self.a[0][0].re - self.a[1][1].re);
        let r = (q * q + self.a[0][1].norm_sqr()).sqrt();
        [p - r, p + r]
    }

    pub fn to_pairs(&self) -> [[f64; 2]; 4] {
        let f = |z: C64| [z.re, z.im];
        [f(self.a[0][0]), f(self.a[0][1]), f(self.a[1][0]), f(self.a[1][1])]
    }

    pub fn from_pairs(p: [[f64; 2]; 4]) -> Self {
        Mat2::new(c(p[0][0], p[0][1]), c(p[1][0], p[1][1]), c(p[2][0], p[2][1]), c(p[3][0], p[3][1]))
    }
}

impl Add for Mat2 {
    type Output = Mat2;
    fn add(self, o: Mat2) -> Mat2 {
        let mut r = self;
        for i in 0..2 {
            for j in 0..2 {
                r.a[i][j] += o.a[i][j];
            }
        }
        r
    }
}

impl Sub for Mat2 {
    type Output = Mat2;
    fn sub(self, o: Mat2) -> Mat2 {
        self + (-o)
    }
}

impl Neg for Mat2 {
    type Output = Mat2;
    fn neg(self) -> Mat2 {
        self.scale_re(-1.0)
    }
}

impl Mul for Mat2 {
    type Output = Mat2;
    fn mul(self, o: Mat2) -> Mat2 {
        let mut r = Mat2::zero();
        for i in 0..2 {
            for j in 0..2 {
                r.a[i][j] = self.a[i][0] * o.a[0][j] + self.a[i][1] * o.a[1][j];
            }
        }
        r
    }
}

impl Serialize for Mat2 {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.to_pairs().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Mat2 {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let p = <[[f64; 2]; 4]>::deserialize(d)?;
        Ok(Mat2::from_pairs(p))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverse_roundtrip() {
        let m = Mat2::new(c(1.0, 2.0), c(0.5, 0.0), c(-1.0, 0.3), c(2.0, -1.0));
        let p = m * m.inverse().unwrap();
        assert!((p - Mat2::identity()).norm() < 1e-14);
    }

    #[test]
    fn hermitian_eigs_match_trace_det() {
        let m = Mat2::new(c(2.0, 0.0), c(0.0, -1.0), c(0.0, 1.0), c(-0.5, 0.0));
        let [l1, l2] = m.hermitian_eigenvalues();
        assert!((l1 + l2 - m.trace().re).abs() < 1e-14);
        assert!((l1 * l2 - m.det().re).abs() < 1e-14);
    }

    #[test]
    fn json_roundtrip() {
        let m = Mat2::new(c(1.0, 2.0), c(0.5, 0.0), c(-1.0, 0.3), c(2.0, -1.0));
        let s = serde_json::to_string(&m).unwrap();
        let back: Mat2 = serde_json::from_str(&s).unwrap();
        assert_eq!(m, back);
    }
}
