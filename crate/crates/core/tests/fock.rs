mod common;

use fqw_core::fock::{wedge_gram, FockBasis, MultiIndex};
use fqw_core::linalg::{self, frob, CMatrix, CVector, ONE};
use proptest::prelude::*;

const TOL: f64 = 1e-10;

fn anticommutator(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a * b + b * a
}

#[test]
fn car_holds_for_all_site_pairs() {
    for d in 2..=4 {
        let basis = FockBasis::new(d).unwrap();
        let id = linalg::identity(basis.dim());
        for i in 1..=d {
            let ai = basis.annihilation_op(i).unwrap();
            for j in 1..=d {
                let aj = basis.annihilation_op(j).unwrap();
                let aj_star = basis.creation_op(j).unwrap();
                let expected = if i == j { id.clone() } else { CMatrix::zeros(id.nrows(), id.ncols()) };
                assert!(frob(&(anticommutator(&ai, &aj_star) - expected)) < TOL, "d={d} i={i} j={j}");
                assert!(frob(&anticommutator(&ai, &aj)) < TOL);
            }
        }
    }
}

#[test]
fn number_operators_sum_to_particle_number() {
    let basis = FockBasis::new(4).unwrap();
    let mut n = CMatrix::zeros(16, 16);
    for j in 1..=4 {
        let nj = basis.number_op(j).unwrap();
        let via_car = basis.creation_op(j).unwrap() * basis.annihilation_op(j).unwrap();
        assert!(frob(&(&nj - via_car)) < TOL);
        n += nj;
    }
    assert!(frob(&(n - basis.particle_number())) < TOL);
}

#[test]
fn basis_vectors_are_ordered_creation_products() {
    // |e_J⟩ = a*_{j_1} ⋯ a*_{j_n} Ω with j_1 < ⋯ < j_n
    let basis = FockBasis::new(4).unwrap();
    for i in 0..basis.dim() {
        let mut v = CVector::zeros(basis.dim());
        v[0] = ONE;
        for &s in basis.occupied(i).iter().rev() {
            v = basis.creation_op(s + 1).unwrap() * v;
        }
        let mut e = CVector::zeros(basis.dim());
        e[i] = ONE;
        assert!((v - e).norm() < TOL);
        let mi = basis.multi_index(i);
        assert_eq!(basis.index_of(&mi), Some(i));
        assert_eq!(mi.sector(), basis.sector_of(i));
    }
    assert!(MultiIndex::new(vec![2, 1]).is_err());
}

#[test]
fn gamma_on_top_sector_is_determinant() {
    for d in 2..=4 {
        let basis = FockBasis::new(d).unwrap();
        let u = common::unitary(d, d as u64);
        let g = basis.second_quantize_unitary(&u).unwrap();
        let top = basis.top();
        assert!((g[(top, top)] - linalg::det(&u)).norm() < TOL);
        assert!((g[(0, 0)] - ONE).norm() < TOL);
    }
}

#[test]
fn wedge_gram_matches_permutation_expansion() {
    let u: Vec<CVector> = (0..3).map(|k| common::vector(4, 10 + k)).collect();
    let v: Vec<CVector> = (0..3).map(|k| common::vector(4, 20 + k)).collect();
    // Σ_π sgn(π) Π_k ⟨u_k, v_{π(k)}⟩ over the 3! permutations
    let perms: [([usize; 3], f64); 6] = [
        ([0, 1, 2], 1.0),
        ([1, 2, 0], 1.0),
        ([2, 0, 1], 1.0),
        ([0, 2, 1], -1.0),
        ([2, 1, 0], -1.0),
        ([1, 0, 2], -1.0),
    ];
    let brute: linalg::C64 = perms
        .iter()
        .map(|(p, s)| (0..3).map(|k| u[k].dotc(&v[p[k]])).product::<linalg::C64>() * *s)
        .sum();
    assert!((wedge_gram(&u, &v).unwrap() - brute).norm() < TOL);

    let basis = FockBasis::new(4).unwrap();
    let mu = CMatrix::from_columns(&u);
    let mv = CMatrix::from_columns(&v);
    let wu = basis.wedge_vector(&mu).unwrap();
    let wv = basis.wedge_vector(&mv).unwrap();
    assert!((wu.dotc(&wv) - brute).norm() < TOL);
}

#[test]
fn input_validation() {
    assert!(FockBasis::new(0).is_err());
    assert!(FockBasis::new(13).is_err());
    let basis = FockBasis::new(3).unwrap();
    assert!(basis.creation_op(0).is_err());
    assert!(basis.creation_op(4).is_err());
    assert!(basis.second_quantize_unitary(&(linalg::identity(3) * linalg::real(2.0))).is_err());
    assert!(basis.second_quantize_generator(&common::matrix(3, 3, 1)).is_err());
}

fn sites() -> impl Strategy<Value = usize> {
    2usize..=4
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn gamma_is_a_unitary_homomorphism(d in sites(), s1 in any::<u64>(), s2 in any::<u64>()) {
        let basis = FockBasis::new(d).unwrap();
        let (u, w) = (common::unitary(d, s1), common::unitary(d, s2));
        let gu = basis.second_quantize_unitary(&u).unwrap();
        let gw = basis.second_quantize_unitary(&w).unwrap();
        let guw = basis.second_quantize_unitary(&(&u * &w)).unwrap();
        prop_assert!(frob(&(&gu * &gw - guw)) < TOL);
        prop_assert!(linalg::unitary_deviation(&gu) < TOL);
        let gu_inv = basis.second_quantize_unitary(&u.adjoint()).unwrap();
        prop_assert!(frob(&(gu_inv - gu.adjoint())) < TOL);
        prop_assert!(frob(&(&gu * basis.particle_number() - basis.particle_number() * &gu)) < TOL);
    }

    #[test]
    fn bogoliubov_relation(d in sites(), s in any::<u64>()) {
        let basis = FockBasis::new(d).unwrap();
        let u = common::unitary(d, s);
        let phi = common::vector(d, s ^ 0x55);
        let g = basis.second_quantize_unitary(&u).unwrap();
        let lhs = &g * basis.creation_of(&phi).unwrap() * g.adjoint();
        let rhs = basis.creation_of(&(&u * &phi)).unwrap();
        prop_assert!(frob(&(lhs - rhs)) < TOL);
        let lhs = &g * basis.annihilation_of(&phi).unwrap() * g.adjoint();
        prop_assert!(frob(&(lhs - basis.annihilation_of(&(&u * &phi)).unwrap())) < TOL);
    }

    #[test]
    fn minors_match_creation_products(d in sites(), s in any::<u64>()) {
        // Γ(U) ∧e_K = a*(U e_{k_1}) ⋯ a*(U e_{k_n}) Ω
        let basis = FockBasis::new(d).unwrap();
        let u = common::unitary(d, s);
        let g = basis.second_quantize_unitary(&u).unwrap();
        for k in 0..basis.dim() {
            let mut v = CVector::zeros(basis.dim());
            v[0] = ONE;
            for &site in basis.occupied(k).iter().rev() {
                v = basis.creation_of(&u.column(site).into_owned()).unwrap() * v;
            }
            prop_assert!((g.column(k) - v).norm() < TOL);
        }
    }

    #[test]
    fn exponential_of_generator(d in sites(), s in any::<u64>()) {
        let basis = FockBasis::new(d).unwrap();
        let h = common::hermitian(d, s);
        let dg = basis.second_quantize_generator(&h).unwrap();
        let lhs = common::exp_i(&dg);
        let rhs = basis.second_quantize_unitary(&common::exp_i(&h)).unwrap();
        prop_assert!(frob(&(lhs - rhs)) < 1e-9);
        // dΓ(H) = Σ H_ij a*_i a_j
        let mut direct = CMatrix::zeros(basis.dim(), basis.dim());
        for i in 0..d {
            for j in 0..d {
                direct += basis.creation_op(i + 1).unwrap() * basis.annihilation_op(j + 1).unwrap() * h[(i, j)];
            }
        }
        prop_assert!(frob(&(dg - direct)) < TOL);
    }

    #[test]
    fn wedge_gram_is_determinant_of_inner_products(n in 1usize..=3, s in any::<u64>()) {
        let basis = FockBasis::new(4).unwrap();
        let a = common::matrix(4, n, s);
        let b = common::matrix(4, n, s.wrapping_add(1));
        let u: Vec<CVector> = a.column_iter().map(|c| c.into_owned()).collect();
        let v: Vec<CVector> = b.column_iter().map(|c| c.into_owned()).collect();
        let via_fock = basis.wedge_vector(&a).unwrap().dotc(&basis.wedge_vector(&b).unwrap());
        prop_assert!((wedge_gram(&u, &v).unwrap() - via_fock).norm() < 1e-9);
    }
}
