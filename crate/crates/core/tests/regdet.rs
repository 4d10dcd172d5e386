use gluedet::circle_calculus::*;
use gluedet::mat2::Mat2;
use gluedet::regdet::*;
use proptest::prelude::*;

mod common;
use common::jump_family;

#[test]
fn identity_and_star_antisymmetric() {
    let q = Regularizer::default();
    assert_eq!(det_q(&BlockCircleOperator::identity(256), &q).unwrap().log_det, 0.0);
    for lambda in [0.5, 1.0, 2.0] {
        let a = half_space_operator(lambda, 1.0, 512);
        assert!(det_q(&a, &q).unwrap().log_det.abs() < 1e-10);
    }
}

#[test]
fn analytic_derivative_is_consistent() {
    let h = 1e-6;
    let (tp, _) = jump_family(0.5 + h, 8);
    let (tm, _) = jump_family(0.5 - h, 8);
    let (_, d) = jump_family(0.5, 8);
    for n in 1..=8 {
        let fd = (tp.block(n) - tm.block(n)).scale_re(0.5 / h);
        assert!((fd - d.block(n)).norm() < 1e-6 * d.block(n).norm().max(1.0), "mode {n}");
    }
}

#[test]
fn derivative_identity_on_jump_family() {
    let q = Regularizer::default();
    let worst = derivative_identity_check(|r| jump_family(r, 256), &q, &[0.3, 0.5, 0.8], 1e-4).unwrap();
    assert!(worst < 1e-6, "{worst}");
}

fn decaying(coeffs: &[f64]) -> BlockCircleOperator {
    let coeffs = coeffs.to_vec();
    BlockCircleOperator::diagonal(
        256,
        move |n| {
            let x = 1.0 / (1.0 + (n * n) as f64);
            Mat2::real(1.0 + coeffs[0] * x + coeffs[1] * x * x, 0.0, 0.0, 1.0 + coeffs[2] * x)
        },
        Mat2::identity(),
        Mat2::identity(),
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn scalar_multiples_have_unit_det(x in 0.05f64..20.0) {
        let m = Mat2::real(x, 0.0, 0.0, x);
        let t = BlockCircleOperator::diagonal(64, |_| m, m, m);
        prop_assert!(det_q(&t, &Regularizer::default()).unwrap().log_det.abs() < 1e-12);
    }

    #[test]
    fn multiplicative_for_identity_symbols(a in prop::collection::vec(-0.5f64..0.5, 3), b in prop::collection::vec(-0.5f64..0.5, 3)) {
        let q = Regularizer::default();
        let (ta, tb) = (decaying(&a), decaying(&b));
        let prod = BlockCircleOperator::diagonal(256, |n| ta.block(n) * tb.block(n), Mat2::identity(), Mat2::identity());
        let lhs = det_q(&prod, &q).unwrap().log_det;
        let rhs = det_q(&ta, &q).unwrap().log_det + det_q(&tb, &q).unwrap().log_det;
        prop_assert!((lhs - rhs).abs() < 1e-9, "{} vs {}", lhs, rhs);
    }

    #[test]
    fn zeta_q_scaling_leaves_c_q(mu in 0.1f64..10.0) {
        let q = Regularizer::sqrt_shift(1.0);
        prop_assert!((c_q(&q.scaled(mu)) - c_q(&q)).abs() < 1e-12);
    }
}
