use gluedet::circle_calculus::*;
use gluedet::mat2::{c, Mat2};
use proptest::prelude::*;

mod common;
use common::annulus_inner_operator;

fn max_block_diff(a: &BlockCircleOperator, b: &BlockCircleOperator) -> f64 {
    a.modes().filter(|&n| n != 0).map(|n| (a.block(n) - b.block(n)).norm()).fold(0.0, f64::max)
}

#[test]
fn oracle_reduces_to_plane_exterior() {
    // rho -> infinity
    let ext = plane_exterior_operator(1.0, 32).unwrap();
    let far = annulus_inner_operator(1.0, 1e6, 32);
    assert!(max_block_diff(&ext, &far) < 1e-10);
}

#[test]
fn transfer_matches_direct_annulus_solve() {
    let n_max = 256;
    let a1 = to_transfer_convention(&annulus_inner_operator(1.0, 2.0, n_max));
    for eps in [0.5, 0.25, 0.1] {
        let moved = from_transfer_convention(&apply_transfer(&a1, eps).unwrap());
        let direct = annulus_inner_operator(eps, 2.0, n_max);
        let err = max_block_diff(&moved, &direct);
        assert!(err < 1e-12, "eps {eps}: {err}");
    }
}

#[test]
fn transfer_semigroup() {
    let n_max = 256;
    let a = to_transfer_convention(&annulus_inner_operator(1.0, 2.0, n_max));
    let (r, eps) = (0.5, 0.125);
    let once = apply_transfer(&a, eps).unwrap();
    let mid = apply_transfer(&a, r).unwrap().rescale(r);
    let twice = apply_transfer(&mid, eps / r).unwrap();
    let err = max_block_diff(&twice, &once.rescale(r));
    assert!(err < 1e-10, "{err}");
}

#[test]
fn dilation_covariance_of_direct_solutions() {
    let a = annulus_inner_operator(0.4, 2.0, 64).rescale(0.4);
    let b = annulus_inner_operator(1.0, 5.0, 64);
    assert!(max_block_diff(&a, &b) < 1e-12);
}

fn field(n_max: usize) -> impl Strategy<Value = RealBoundaryField> {
    prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), n_max + 1)
        .prop_map(move |v| RealBoundaryField::from_nonnegative(n_max, &v.iter().map(|&(a, b)| c(a, b)).collect::<Vec<_>>()))
}

fn data(n_max: usize) -> impl Strategy<Value = BoundaryData> {
    (field(n_max), field(n_max)).prop_map(|(f, g)| BoundaryData::new(f, g, 2.0).unwrap())
}

fn hermitian_block() -> impl Strategy<Value = Mat2> {
    (-2.0f64..2.0, -2.0f64..2.0, -1.0f64..1.0, -1.0f64..1.0)
        .prop_map(|(p, q, x, y)| Mat2::new(c(p, 0.0), c(x, y), c(x, -y), c(q, 0.0)))
}

fn negated(u: &BoundaryData) -> BoundaryData {
    let neg = |f: &RealBoundaryField| RealBoundaryField::from_coeffs(f.n_max, f.coeffs.iter().map(|z| -z).collect()).unwrap();
    BoundaryData::new(neg(&u.f), neg(&u.g), u.circle_length).unwrap()
}

proptest! {
    #[test]
    fn involution_laws(u in data(6)) {
        prop_assert_eq!(apply_star(&apply_star(&u)), u.clone());
        prop_assert_eq!(apply_mirror(&apply_mirror(&u)), u.clone());
        prop_assert_eq!(apply_k(&apply_k(&u)), u.clone());
        prop_assert_eq!(apply_j(&apply_j(&u)), negated(&u));
    }

    #[test]
    fn pairing_symmetric_and_star_invariant(u in data(5), v in data(5)) {
        let uv = pairing(&u, &v).unwrap();
        prop_assert!((uv - pairing(&v, &u).unwrap()).abs() < 1e-12);
        prop_assert!((uv - pairing(&apply_star(&u), &apply_star(&v)).unwrap()).abs() < 1e-12);
        prop_assert!(pairing(&u, &u).unwrap() >= 0.0);
    }

    #[test]
    fn transfer_preserves_hermitian_blocks(blocks in prop::collection::vec(hermitian_block(), 8), eps in 0.05f64..0.5) {
        // a real operator: B(-n) = conj(B(n))
        let a1 = BlockCircleOperator::diagonal(
            8,
            |n| {
                if n == 0 {
                    return Mat2::zero();
                }
                let b = blocks[n.unsigned_abs() as usize - 1];
                if n > 0 { b } else { Mat2::new(b.a[0][0].conj(), b.a[0][1].conj(), b.a[1][0].conj(), b.a[1][1].conj()) }
            },
            chiral_symbol(1.0),
            chiral_symbol(-1.0),
        );
        match apply_transfer(&a1, eps) {
            Ok(out) => {
                prop_assert!(out.is_hermitian(1e-9));
                prop_assert!(out.preserves_reality(1e-9));
            }
            Err(gluedet::error::Error::SingularBlock(_)) => {}
            Err(e) => prop_assert!(false, "{e}"),
        }
    }

    #[test]
    fn jump_of_disk_pair_is_hermitian(eps in 0.01f64..2.0) {
        let inside = disk_alvarez_operator(eps, 16).unwrap();
        let outside = plane_exterior_operator(eps, 16).unwrap();
        let jump = assemble_jump(&outside, &inside).unwrap();
        prop_assert!(jump.is_hermitian(1e-14));
        // upper off-diagonal entry is 2i sgn n
        prop_assert!((jump.block(3).a[0][1] - c(0.0, 2.0)).norm() < 1e-14);
        prop_assert!((jump.block(3).a[1][1] + 2.0 * eps / 3.0).norm() < 1e-14);
    }
}
