mod common;

use fqw_core::coupling::{
    build_coupling, build_t_hop, check_mnd, coupling_from_operator, spectral_decompose, tau_hop, CLUSTER_TOL,
};
use fqw_core::error::Error;
use fqw_core::fock::FockBasis;
use fqw_core::linalg::{self, frob, CMatrix};
use proptest::prelude::*;

const TOL: f64 = 1e-10;

#[test]
fn hop_projectors_match_numerical_decomposition() {
    for d in 3..=4 {
        let basis = FockBasis::new(d).unwrap();
        for &phi in &[0.0, 0.3, 1.7] {
            let model = build_t_hop(&basis, phi).unwrap();
            let t = basis.second_quantize_generator(&tau_hop(d, phi)).unwrap();
            assert!(frob(&(&model.t - &t)) < TOL);
            let numeric = spectral_decompose(&t, CLUSTER_TOL).unwrap();
            assert_eq!(numeric.eigenvalues.len(), 3);
            assert_eq!(model.spectrum().len(), 3);
            for (k, mu) in model.spectrum().iter().enumerate() {
                assert!((mu - numeric.eigenvalues[k]).abs() < TOL);
                assert!(frob(&(model.projector(k) - &numeric.projectors[k])) < 1e-9);
            }
            assert!((model.gap - 1.0).abs() < TOL);
            assert!(model.top_in_kernel(&basis));
        }
    }
}

#[test]
fn projectors_resolve_identity_and_preserve_sectors() {
    let basis = FockBasis::new(4).unwrap();
    let model = build_coupling(&common::hermitian(4, 3), &basis, CLUSTER_TOL).unwrap();
    let id = linalg::identity(basis.dim());
    let sum = model.spec.projectors.iter().fold(CMatrix::zeros(16, 16), |a, p| a + p);
    assert!(frob(&(sum - &id)) < TOL);
    assert!(frob(&(model.spec.reconstruct() - &model.t)) < 1e-9);
    let n = basis.particle_number();
    for p in &model.spec.projectors {
        assert!(frob(&(p * p - p)) < TOL);
        assert!(frob(&(p * &n - &n * p)) < TOL);
    }
    let total: usize = (0..model.spec.len())
        .map(|k| (0..=4).map(|s| model.sector_rank(&basis, k, s)).sum::<usize>())
        .sum();
    assert_eq!(total, 16);
}

#[test]
fn structural_degeneracies_are_exact() {
    // ε = (1, −1, 0): the sums 1 + (−1) and 0 must land in one cluster
    let basis = FockBasis::new(3).unwrap();
    let model = build_coupling(&common::diag(&[1.0, -1.0, 0.0]), &basis, CLUSTER_TOL).unwrap();
    assert_eq!(model.spectrum(), &[-1.0, 0.0, 1.0]);
    assert_eq!(model.spec.multiplicities, vec![2, 4, 2]);
}

#[test]
fn ambiguous_and_degenerate_couplings_are_rejected() {
    let basis = FockBasis::new(2).unwrap();
    let near = common::diag(&[0.0, 5e-8]);
    assert!(matches!(
        build_coupling(&near, &basis, CLUSTER_TOL),
        Err(Error::DegeneracyAmbiguity { .. })
    ));
    assert!(matches!(
        build_coupling(&CMatrix::zeros(2, 2), &basis, CLUSTER_TOL),
        Err(Error::DegenerateCoupling)
    ));
    assert!(build_t_hop(&basis, 0.0).is_err());
    assert!(build_coupling(&common::matrix(2, 2, 1), &basis, CLUSTER_TOL).is_err());
}

#[test]
fn mnd_detects_scalar_restrictions() {
    let basis = FockBasis::new(3).unwrap();
    let hop = build_t_hop(&basis, 0.2).unwrap();
    let r = check_mnd(&hop, &basis);
    assert!(r.holds);
    assert_eq!(r.tau_not_scalar, Some(true));
    // T = N: every sector carries a single eigenvalue
    let number = coupling_from_operator(&basis.particle_number(), &basis, CLUSTER_TOL).unwrap();
    let r = check_mnd(&number, &basis);
    assert!(!r.holds);
    assert_eq!(r.per_sector, vec![false, false]);
    assert_eq!(r.tau_not_scalar, None);
    assert!(number.require_one_particle().is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn second_quantized_coupling_agrees_with_generic_path(d in 2usize..=4, s in any::<u64>()) {
        let basis = FockBasis::new(d).unwrap();
        let tau = common::hermitian(d, s);
        let model = build_coupling(&tau, &basis, CLUSTER_TOL).unwrap();
        let generic = coupling_from_operator(&model.t, &basis, CLUSTER_TOL).unwrap();
        prop_assert_eq!(model.spectrum().len(), generic.spectrum().len());
        for k in 0..model.spectrum().len() {
            prop_assert!(frob(&(model.projector(k) - generic.projector(k))) < 1e-8);
        }
        prop_assert!((model.gap - generic.gap).abs() < 1e-9);
        prop_assert!(frob(&(&model.t - basis.second_quantize_generator(&tau).unwrap())) < TOL);
    }
}
