use gluedet::error::Error;
use gluedet::glue::*;
use gluedet::mat2::{c, Mat2};
use gluedet::regdet::Regularizer;
use gluedet::special::riemann_zeta_deriv;
use std::f64::consts::{LN_2, PI};

// A-operator of the half-infinite strip y >= 0 (outward normal -y) at frequency xi,
// from the decaying solution e^{-mu y}: V = f, U = (i xi f - g)/mu.
fn half_line_a(xi: f64, lambda: f64) -> Mat2 {
    let mu = (xi * xi + lambda).sqrt();
    Mat2::new(c(lambda / mu, 0.0), c(0.0, -xi / mu), c(0.0, xi / mu), c(-1.0 / mu, 0.0))
}

#[test]
fn jump_blocks_invertible_and_hermitian() {
    for lambda in [0.1, 1.0, 10.0] {
        let op = neumann_jump_torus(1.0, 1.0, lambda, Framing::Trivial, 64).unwrap();
        for n in op.modes() {
            let b = op.block(n);
            assert!(b.is_hermitian(1e-13), "mode {n}");
            assert!(b.inverse().is_some(), "mode {n} at lambda {lambda}");
        }
    }
    assert!(neumann_jump_torus(1.0, 1.0, 0.0, Framing::Trivial, 8).is_err());
}

#[test]
fn long_cylinder_decouples_into_half_lines() {
    let (a, b, lambda) = (1.0, 60.0, 0.7);
    for n in [-5i64, -1, 0, 1, 3, 12] {
        let xi = 2.0 * PI * n as f64 / a;
        let k = Mat2::k();
        // the top end sees the circle with reversed tangent
        let oracle = half_line_a(xi, lambda) + k * half_line_a(-xi, lambda) * k;
        let blk = twisted_jump_block(a, b, lambda, n, 0).unwrap();
        assert!((blk - oracle).norm() < 1e-10, "mode {n}: {:?}", blk);
    }
}

#[test]
fn large_lambda_block_is_twice_half_space() {
    let xi = 2.0 * PI * 3.0;
    for lambda in [1e3, 1e5] {
        let blk = twisted_jump_block(1.0, 1.0, lambda, 3, 0).unwrap();
        let h = half_line_a(xi, lambda).scale_re(2.0);
        assert!((blk - h).norm() < 1e-10 * h.norm());
    }
}

#[test]
fn bfk_torus_positive_lambda() {
    let cut = CutDecomposition::torus(1.0, 1.0, Framing::Trivial);
    assert!(cut.euler_additive());
    for q in [Regularizer::default(), Regularizer::sqrt_shift(1.0)] {
        for lambda in [0.5, 1.0, 2.0] {
            let r = bfk_verify(&cut, lambda, &q, 128).unwrap();
            assert!(r.residual.abs() < 1e-7, "lambda {lambda}: {r:?}");
        }
    }
}

#[test]
fn bfk_non_square_torus_and_truncation_stability() {
    let cut = CutDecomposition::torus(1.3, 0.8, Framing::Trivial);
    let r1 = bfk_verify(&cut, 1.5, &Regularizer::default(), 64).unwrap();
    let r2 = bfk_verify(&cut, 1.5, &Regularizer::default(), 128).unwrap();
    assert!(r1.residual.abs() < 1e-7);
    assert!((r1.rhs_terms.log_detq_jump - r2.rhs_terms.log_detq_jump).abs() <= r1.tails.jump + r2.tails.jump + 1e-12);
}

#[test]
fn bfk_lambda_derivative_vanishes() {
    let cut = CutDecomposition::torus(1.0, 1.0, Framing::Trivial);
    let d = bfk_lambda_derivative(&cut, 1.0, &Regularizer::default(), 128, 1e-3).unwrap();
    assert!(d.abs() < 1e-6, "{d}");
}

#[test]
fn bfk_with_twisted_framing_at_positive_lambda() {
    // the jump changes with the framing but Det(D + lambda) of the cylinder does
    // not, so the untwisted cut determinant is compared through the difference
    let q = Regularizer::default();
    let r0 = bfk_verify(&CutDecomposition::torus(1.0, 1.0, Framing::Trivial), 0.5, &q, 150).unwrap();
    let r1 = bfk_verify(&CutDecomposition::torus(1.0, 1.0, Framing::Twist(1)), 0.5, &q, 150).unwrap();
    let diff = cylinder_twist_difference(1.0, 1.0, 0.5, 1, 400);
    let residual = r1.lhs_logdet - (r1.rhs_terms.cut_logdet + diff + r1.rhs_terms.log_detq_jump);
    assert!(residual.abs() < 1e-7, "{residual}");
    assert!(r0.residual.abs() < 1e-7);
}

#[test]
fn genericity_detector() {
    assert!(!framing_is_generic(1.0, 0));
    assert!(framing_is_generic(1.0, 1));
    // Gram of {1, i} under the twisted imaginary part is (a/2)^2
    assert!((cut_gram_pp(2.0, 1) - 1.0).abs() < 1e-12);
    let cut = CutDecomposition::torus(1.0, 1.0, Framing::Trivial);
    assert_eq!(zero_mode_bfk_verify(&cut, &Regularizer::default(), 64).unwrap_err(), Error::FramingNotGeneric);
}

#[test]
fn zero_mode_bfk_twisted() {
    let cut = CutDecomposition::torus(1.0, 1.0, Framing::Twist(1));
    let r = zero_mode_bfk_verify(&cut, &Regularizer::default(), 1024).unwrap();
    assert!(r.residual.abs() < 1e-5, "{r:?}");
}

#[test]
fn sphere_equator() {
    let r = sphere_equator_check(1.0).unwrap();
    assert!(r.residual.abs() < 1e-6, "{r:?}");
    assert!((r.sphere_logdet - (0.5 - 4.0 * riemann_zeta_deriv(-1.0))).abs() < 1e-7);
    // eigenvalues scale by R^-2 and zeta(0) = 1/3 - 1
    let r2 = sphere_equator_check(2.0).unwrap();
    assert!((r2.sphere_logdet - r.sphere_logdet - 4.0 / 3.0 * 2f64.ln()).abs() < 1e-7);
    assert!(r2.residual.abs() < 1e-6);
}

#[test]
fn shrinking_disk_global_section() {
    let eps = [0.5, 0.25, 0.125, 0.0625];
    let r = jump_asymptotics_torus(4.0, 4.0, &eps, &Regularizer::default(), 24).unwrap();
    assert!((r.target + 2.0 * LN_2).abs() < 1e-15);
    assert!((r.extrapolated - r.target).abs() < 1e-3, "{r:?}");
    // errors decrease monotonically
    let errs: Vec<f64> = r.values.iter().map(|v| (v - r.target).abs()).collect();
    assert!(errs.windows(2).all(|w| w[1] < w[0]), "{errs:?}");
    assert!(r.hermitian_residual < 1e-10);
    for p in &r.decay_exponent_trace {
        assert!(*p >= 1.9, "{r:?}");
    }
}

#[test]
fn transfer_matches_direct_multipole_solve() {
    let a1 = torus_minus_disk_operator(4.0, 4.0, 1.0, 16).unwrap();
    let direct = torus_minus_disk_operator(4.0, 4.0, 0.25, 16).unwrap();
    let conj = gluedet::circle_calculus::to_transfer_convention(&a1);
    let moved = gluedet::circle_calculus::from_transfer_convention(
        &gluedet::circle_calculus::apply_transfer(&conj, 0.25).unwrap(),
    );
    let modes: Vec<i64> = (-16..=16).filter(|&n| n != 0).collect();
    let d = moved.to_dense(&modes) - direct.to_dense(&modes);
    let err = d.iter().map(|z| z.norm()).fold(0.0, f64::max);
    assert!(err < 1e-10, "{err}");
}

#[test]
fn sphere_meromorphic_framing() {
    let eps = [0.5, 0.25, 0.125, 0.0625];
    let r = jump_asymptotics_sphere_meromorphic(&eps, &Regularizer::default(), 40).unwrap();
    assert!((r.target + 6.0 * LN_2).abs() < 1e-15);
    assert!((r.extrapolated - r.target).abs() < 1e-3, "{r:?}");
}

#[test]
fn bad_eps_lists_rejected() {
    let q = Regularizer::default();
    assert!(jump_asymptotics_torus(4.0, 4.0, &[0.25, 0.5], &q, 8).is_err());
    assert!(jump_asymptotics_torus(4.0, 4.0, &[0.75], &q, 8).is_err());
}
