//! Scalar special functions used throughout: Hurwitz zeta and its s-derivative,
//! Gauss-Legendre rules, Bessel zeros, Jacobi theta and Dedekind eta.

use num_complex::Complex64 as C64;
use std::f64::consts::PI;

pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// B_2, B_4, ..., B_30.
const BERNOULLI_EVEN: [f64; 15] = [
    1.0 / 6.0,
    -1.0 / 30.0,
    1.0 / 42.0,
    -1.0 / 30.0,
    5.0 / 66.0,
    -691.0 / 2730.0,
    7.0 / 6.0,
    -3617.0 / 510.0,
    43867.0 / 798.0,
    -174611.0 / 330.0,
    854513.0 / 138.0,
    -236364091.0 / 2730.0,
    8553103.0 / 6.0,
    -23749461029.0 / 870.0,
    8615841276005.0 / 14322.0,
];

fn factorial(n: usize) -> f64 {
    (1..=n).fold(1.0, |acc, k| acc * k as f64)
}

/// Euler-Maclaurin evaluation of sum_{k>=0} (k+a)^{-s} and its s-derivative.
/// Valid for real s != 1, a > 0, |s| up to roughly 20.
fn hurwitz_em(s: f64, a: f64) -> (f64, f64) {
    assert!(a > 0.0, "hurwitz zeta needs a > 0");
    assert!((s - 1.0).abs() > 1e-14, "pole at s = 1");
    let n_head = 12usize + s.abs().ceil() as usize;
    let mut val = 0.0;
    let mut der = 0.0;
    for k in 0..n_head {
        let x = k as f64 + a;
        let p = x.powf(-s);
        val += p;
        der -= x.ln() * p;
    }
    let x = n_head as f64 + a;
    let lx = x.ln();
    let xs = x.powf(-s);
    // integral tail and half endpoint
    val += x * xs / (s - 1.0) + 0.5 * xs;
    der += -lx * x * xs / (s - 1.0) - x * xs / ((s - 1.0) * (s - 1.0)) - 0.5 * lx * xs;
    // Bernoulli corrections: B_{2j}/(2j)! * (s)_{2j-1} * x^{-s-2j+1}
    for (j0, b) in BERNOULLI_EVEN.iter().enumerate() {
        let j = j0 + 1;
        let m = 2 * j - 1;
        // rising product P = prod_{i<m}(s+i) and its derivative
        let mut p = 1.0;
        let mut dp = 0.0;
        for i in 0..m {
            let f = s + i as f64;
            dp = dp * f + p;
            p *= f;
        }
        let c = b / factorial(2 * j);
        let pw = x.powf(-s - m as f64);
        val += c * p * pw;
        der += c * (dp - lx * p) * pw;
    }
    (val, der)
}

/// Hurwitz zeta(s, a), analytically continued to real s != 1.
pub fn hurwitz_zeta(s: f64, a: f64) -> f64 {
    hurwitz_em(s, a).0
}

/// d/ds zeta(s, a).
pub fn hurwitz_zeta_deriv(s: f64, a: f64) -> f64 {
    hurwitz_em(s, a).1
}

pub fn riemann_zeta(s: f64) -> f64 {
    hurwitz_zeta(s, 1.0)
}

pub fn riemann_zeta_deriv(s: f64) -> f64 {
    hurwitz_zeta_deriv(s, 1.0)
}

pub fn erf(x: f64) -> f64 {
    libm::erf(x)
}

/// Gauss-Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = (n + 1) / 2;
    for i in 0..m {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let mut p0 = 1.0;
            let mut p1 = 0.0;
            for j in 0..n {
                let p2 = p1;
                p1 = p0;
                p0 = ((2 * j + 1) as f64 * z * p1 - j as f64 * p2) / (j + 1) as f64;
            }
            dp = n as f64 * (z * p0 - p1) / (z * z - 1.0);
            let dz = p0 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// Composite Gauss-Legendre integral of f over [a, b] with `panels` equal panels.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, panels: usize, order: usize) -> f64 {
    let (x, w) = gauss_legendre(order);
    let h = (b - a) / panels as f64;
    let mut total = 0.0;
    for p in 0..panels {
        let lo = a + p as f64 * h;
        let mut s = 0.0;
        for (xi, wi) in x.iter().zip(&w) {
            s += wi * f(lo + 0.5 * h * (xi + 1.0));
        }
        total += 0.5 * h * s;
    }
    total
}

/// Integral over [a, b] with geometrically graded panels towards `a`,
/// for integrands with an integrable endpoint singularity or boundary layer at a.
pub fn integrate_graded<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, levels: usize) -> f64 {
    let mut total = 0.0;
    let mut hi = b;
    for _ in 0..levels {
        let lo = a + 0.5 * (hi - a);
        total += integrate(&f, lo, hi, 1, 20);
        hi = lo;
    }
    total + integrate(&f, a, hi, 1, 20)
}

pub fn bessel_j(n: i32, x: f64) -> f64 {
    libm::jn(n, x)
}

pub fn bessel_jp(n: i32, x: f64) -> f64 {
    if n == 0 {
        -libm::j1(x)
    } else {
        0.5 * (libm::jn(n - 1, x) - libm::jn(n + 1, x))
    }
}

fn bracket_roots<F: Fn(f64) -> f64>(f: F, start: f64, count: usize, step: f64) -> Vec<f64> {
    let mut roots = Vec::with_capacity(count);
    let mut x0 = start;
    let mut f0 = f(x0);
    while roots.len() < count {
        let x1 = x0 + step;
        let f1 = f(x1);
        if f0 == 0.0 {
            roots.push(x0);
        } else if f0 * f1 < 0.0 {
            let (mut lo, mut hi, mut flo) = (x0, x1, f0);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                let fm = f(mid);
                if fm * flo <= 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                    flo = fm;
                }
                if hi - lo < 1e-15 * hi.max(1.0) {
                    break;
                }
            }
            roots.push(0.5 * (lo + hi));
        }
        x0 = x1;
        f0 = f1;
    }
    roots
}

/// First `count` positive zeros of J_m.
pub fn bessel_zeros(m: u32, count: usize) -> Vec<f64> {
    let start = (m as f64).max(0.5);
    bracket_roots(|x| bessel_j(m as i32, x), start, count, 0.25)
}

/// First `count` positive zeros of J_m'. For m = 0 the zero at x = 0 is not included.
pub fn bessel_deriv_zeros(m: u32, count: usize) -> Vec<f64> {
    let start = if m == 0 { 1.0 } else { (m as f64).max(0.5) };
    bracket_roots(|x| bessel_jp(m as i32, x), start, count, 0.25)
}

fn nome(tau: C64) -> C64 {
    (C64::i() * PI * tau).exp()
}

/// Jacobi theta_1(z | tau) = 2 sum (-1)^n q^{(n+1/2)^2} sin((2n+1) pi z), q = e^{i pi tau}.
pub fn theta1(z: C64, tau: C64) -> C64 {
    assert!(tau.im > 0.0, "tau must lie in the upper half plane");
    let mut s = C64::new(0.0, 0.0);
    let iz = C64::i() * PI * z;
    let ipt = C64::i() * PI * tau;
    let nmax = (8.0 + (40.0 / (PI * tau.im)).sqrt() + z.im.abs() / tau.im) as i64 + 2;
    for n in -nmax..=nmax {
        let h = n as f64 + 0.5;
        let sign = if n.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
        s += sign * (ipt * h * h + 2.0 * h * iz).exp();
    }
    -C64::i() * s
}

/// Jacobi theta_3(z | tau) = sum_n q^{n^2} e^{2 pi i n z}.
pub fn theta3(z: C64, tau: C64) -> C64 {
    assert!(tau.im > 0.0, "tau must lie in the upper half plane");
    let mut s = C64::new(0.0, 0.0);
    let iz = C64::i() * PI * z;
    let ipt = C64::i() * PI * tau;
    let nmax = (8.0 + (40.0 / (PI * tau.im)).sqrt() + z.im.abs() / tau.im) as i64 + 2;
    for n in -nmax..=nmax {
        let h = n as f64;
        s += (ipt * h * h + 2.0 * h * iz).exp();
    }
    s
}

/// Dedekind eta(tau) = q^{1/24} prod (1 - q^n), q = e^{2 pi i tau}.
pub fn dedekind_eta(tau: C64) -> C64 {
    assert!(tau.im > 0.0, "tau must lie in the upper half plane");
    let q = nome(2.0 * tau);
    let mut prod = C64::new(1.0, 0.0);
    let mut qn = q;
    for _ in 0..400 {
        prod *= C64::new(1.0, 0.0) - qn;
        qn *= q;
        if qn.norm() < 1e-18 {
            break;
        }
    }
    (C64::i() * PI * tau / 12.0).exp() * prod
}

fn divisor_power_sum(n: u64, p: u32) -> f64 {
    let mut s = 0.0;
    let mut d = 1;
    while d * d <= n {
        if n % d == 0 {
            s += (d as f64).powi(p as i32);
            let e = n / d;
            if e != d {
                s += (e as f64).powi(p as i32);
            }
        }
        d += 1;
    }
    s
}

/// Normalized Eisenstein series E_2, E_4, E_6 at tau.
pub fn eisenstein_e246(tau: C64) -> (C64, C64, C64) {
    let q = nome(2.0 * tau);
    let mut e2 = C64::new(1.0, 0.0);
    let mut e4 = C64::new(1.0, 0.0);
    let mut e6 = C64::new(1.0, 0.0);
    let mut qn = q;
    for n in 1..400u64 {
        e2 -= 24.0 * divisor_power_sum(n, 1) * qn;
        e4 += 240.0 * divisor_power_sum(n, 3) * qn;
        e6 -= 504.0 * divisor_power_sum(n, 5) * qn;
        qn *= q;
        if qn.norm() * (n as f64).powi(6) < 1e-20 {
            break;
        }
    }
    (e2, e4, e6)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zeta_known_values() {
        assert!((riemann_zeta(2.0) - PI * PI / 6.0).abs() < 1e-14);
        assert!((riemann_zeta(0.0) + 0.5).abs() < 1e-14);
        assert!((riemann_zeta(-1.0) + 1.0 / 12.0).abs() < 1e-14);
        assert!((riemann_zeta(-2.0)).abs() < 1e-14);
        assert!((riemann_zeta_deriv(0.0) + 0.5 * (2.0 * PI).ln()).abs() < 1e-13);
        // zeta'(-1) = 1/12 - log(Glaisher)
        let glaisher: f64 = 1.282_427_129_100_622_6;
        assert!((riemann_zeta_deriv(-1.0) - (1.0 / 12.0 - glaisher.ln())).abs() < 1e-13);
    }

    #[test]
    fn hurwitz_half_relation() {
        // zeta(s, 1/2) = (2^s - 1) zeta(s)
        for &s in &[-1.5, -0.5, 0.3, 2.5, 4.0] {
            let lhs = hurwitz_zeta(s, 0.5);
            let rhs = (2f64.powf(s) - 1.0) * riemann_zeta(s);
            assert!((lhs - rhs).abs() < 1e-12, "s={s}");
        }
        assert!((hurwitz_zeta(0.0, 0.3) - (0.5 - 0.3)).abs() < 1e-13);
    }

    #[test]
    fn derivative_matches_difference_quotient() {
        for &(s, a) in &[(-0.7, 1.3), (0.4, 0.25), (3.0, 2.0)] {
            let h = 1e-5;
            let fd = (hurwitz_zeta(s + h, a) - hurwitz_zeta(s - h, a)) / (2.0 * h);
            assert!((fd - hurwitz_zeta_deriv(s, a)).abs() < 1e-8);
        }
    }

    #[test]
    fn gauss_legendre_is_exact_on_polynomials() {
        let (x, w) = gauss_legendre(7);
        let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(12)).sum();
        assert!((s - 2.0 / 13.0).abs() < 1e-14);
    }

    #[test]
    fn bessel_zero_table() {
        let z = bessel_zeros(0, 3);
        assert!((z[0] - 2.404_825_557_695_773).abs() < 1e-12);
        assert!((z[2] - 8.653_727_912_911_013).abs() < 1e-11);
        let zp = bessel_deriv_zeros(1, 2);
        assert!((zp[0] - 1.841_183_781_340_659_3).abs() < 1e-12);
        let zp0 = bessel_deriv_zeros(0, 1);
        assert!((zp0[0] - 3.831_705_970_207_512).abs() < 1e-12);
    }

    #[test]
    fn eta_at_i() {
        // eta(i) = Gamma(1/4) / (2 pi^{3/4})
        let g14 = 3.625_609_908_221_908_4;
        let want = g14 / (2.0 * PI.powf(0.75));
        let e = dedekind_eta(C64::new(0.0, 1.0));
        assert!((e.re - want).abs() < 1e-14 && e.im.abs() < 1e-14);
    }

    #[test]
    fn jacobi_derivative_identity() {
        // theta_1'(0) = 2 pi eta^3
        let tau = C64::new(0.3, 0.8);
        let h = 1e-5;
        let d = (theta1(C64::new(h, 0.0), tau) - theta1(C64::new(-h, 0.0), tau)) / (2.0 * h);
        let e = dedekind_eta(tau);
        assert!((d - 2.0 * PI * e * e * e).norm() < 1e-8);
    }

    #[test]
    fn eisenstein_at_i() {
        let (_, _, e6) = eisenstein_e246(C64::new(0.0, 1.0));
        assert!(e6.norm() < 1e-13);
        let (e2, _, _) = eisenstein_e246(C64::new(0.0, 1.0));
        assert!((e2.re - 3.0 / PI).abs() < 1e-13);
    }
}
