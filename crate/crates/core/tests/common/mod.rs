#![allow(dead_code)]

use gluedet::circle_calculus::{chiral_symbol, BlockCircleOperator};
use gluedet::mat2::{c, Mat2};

// A-operator (own convention) of {r_in <= |z| <= rho} on its inner circle, with
// U = V = 0 on the outer circle. Per mode both U and V are multiples of
// phi(r) = r^|n| - rho^{2|n|} r^{-|n|}.
pub fn annulus_inner_block(r_in: f64, rho: f64, n: i64) -> Mat2 {
    let m = n.unsigned_abs() as f64;
    // phi / phi' at r_in
    let q = -(r_in / m) * (m * (rho / r_in).ln()).tanh();
    let nn = n as f64;
    // out2 = q (g + i n f / r),  out1 = -i n q (g + i n f / r) / r - f / q
    let out2 = Mat2::new(c(0.0, 0.0), c(0.0, 0.0), c(0.0, nn * q / r_in), c(q, 0.0));
    let out1_f = c(nn * nn * q / (r_in * r_in) - 1.0 / q, 0.0);
    let out1_g = c(0.0, -nn * q / r_in);
    Mat2::new(out1_f, out1_g, out2.a[1][0], out2.a[1][1])
}

pub fn annulus_inner_operator(r_in: f64, rho: f64, n_max: usize) -> BlockCircleOperator {
    BlockCircleOperator::diagonal(
        n_max,
        |n| if n == 0 { Mat2::zero() } else { annulus_inner_block(r_in, rho, n) },
        chiral_symbol(-1.0),
        chiral_symbol(1.0),
    )
}

// Jump across the circle |z| = r between the disk of radius r and the annulus
// {r <= |z| <= 2} with U = V = 0 outside, with its r-derivative in closed form.
pub fn jump_family(r: f64, n_max: usize) -> (BlockCircleOperator, BlockCircleOperator) {
    let rho = 2.0f64;
    let block = |n: i64, deriv: bool| -> Mat2 {
        if n == 0 {
            return if deriv { Mat2::zero() } else { Mat2::identity() };
        }
        let m = n.unsigned_abs() as f64;
        let nn = n as f64;
        let th = (m * (rho / r).ln()).tanh();
        let q = -(r / m) * th;
        let dq = -th / m + (1.0 - th * th);
        let s = n.signum() as f64;
        if !deriv {
            let outer = Mat2::new(c(nn * nn * q / (r * r) - 1.0 / q, 0.0), c(0.0, -nn * q / r), c(0.0, nn * q / r), c(q, 0.0));
            let disk = Mat2::new(c(0.0, 0.0), c(0.0, s), c(0.0, -s), c(-r / m, 0.0));
            outer + disk
        } else {
            let d_qr = (dq * r - q) / (r * r);
            let d_qr2 = (dq * r - 2.0 * q) / (r * r * r);
            Mat2::new(c(nn * nn * d_qr2 + dq / (q * q), 0.0), c(0.0, -nn * d_qr), c(0.0, nn * d_qr), c(dq - 1.0 / m, 0.0))
        }
    };
    let two = chiral_symbol(-1.0).scale_re(2.0);
    let t = BlockCircleOperator::diagonal(n_max, |n| block(n, false), two, chiral_symbol(1.0).scale_re(2.0));
    let d = BlockCircleOperator::diagonal(n_max, |n| block(n, true), Mat2::zero(), Mat2::zero());
    (t, d)
}
