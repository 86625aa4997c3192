use fqw_core::coupling::build_t_hop;
use fqw_core::fock::FockBasis;
use fqw_core::genericity::*;
use fqw_core::linalg::{self, CMatrix, ONE};
use proptest::prelude::*;

fn permutation(order: &[usize]) -> CMatrix {
    let n = order.len();
    let mut p = CMatrix::zeros(n, n);
    for (i, &j) in order.iter().enumerate() {
        p[(i, j)] = ONE;
    }
    p
}

#[test]
fn second_moment_of_entries() {
    // E|u_jk|² = 1/d, Var = 2/(d(d+1)) − 1/d²
    let d = 3;
    let n = 10_000;
    let mut sum = [[0.0f64; 3]; 3];
    for i in 0..n {
        let s = haar_sample(d, 2024, i).unwrap();
        for (j, row) in sum.iter_mut().enumerate() {
            for (k, acc) in row.iter_mut().enumerate() {
                *acc += entry_abs_sq(&s.u, j, k);
            }
        }
    }
    let var = 2.0 / (d * (d + 1)) as f64 - 1.0 / (d * d) as f64;
    let sigma = (var / n as f64).sqrt();
    for row in &sum {
        for &acc in row {
            assert!((acc / n as f64 - 1.0 / d as f64).abs() < 3.0 * sigma);
        }
    }
}

#[test]
fn one_dimensional_samples_are_uniform_phases() {
    let n = 4000;
    let mut mean = linalg::ZERO;
    let mut mean2 = linalg::ZERO;
    for i in 0..n {
        let z = haar_sample(1, 5, i).unwrap().u[(0, 0)];
        assert!((z.norm() - 1.0).abs() < 1e-14);
        mean += z;
        mean2 += z * z;
    }
    // |E z| and |E z²| are 0 with standard error 1/√n
    assert!(mean.norm() / (n as f64) < 4.0 / (n as f64).sqrt());
    assert!(mean2.norm() / (n as f64) < 4.0 / (n as f64).sqrt());
}

#[test]
fn minors_are_permutation_covariant() {
    let u = haar_sample(4, 11, 0).unwrap().u;
    let p = permutation(&[2, 0, 3, 1]);
    let q = permutation(&[1, 3, 0, 2]);
    let w = &p * &u * &q;
    let a = minor_scan(&u, 4).unwrap();
    let b = minor_scan(&w, 4).unwrap();
    for (x, y) in a.per_size.iter().zip(&b.per_size) {
        assert!((x.min_abs - y.min_abs).abs() < 1e-12);
    }
    // the minor of U at (J, K) is the corner minor of a permuted copy
    let rows = &a.per_size[1].rows;
    let cols = &a.per_size[1].cols;
    let mut row_order: Vec<usize> = rows.clone();
    row_order.extend((0..4).filter(|i| !rows.contains(i)));
    let mut col_order: Vec<usize> = cols.clone();
    col_order.extend((0..4).filter(|i| !cols.contains(i)));
    let moved = permutation(&row_order) * &u * permutation(&col_order).transpose();
    let corner = linalg::det(&moved.view((0, 0), (2, 2)).into_owned()).norm();
    assert!((corner - a.per_size[1].min_abs).abs() < 1e-12);
}

#[test]
fn corner_singular_values_have_no_atom_at_zero() {
    let n = 3000;
    let values: Vec<f64> = (0..n)
        .map(|i| corner_smallest_singular(&haar_sample(4, 77, i).unwrap().u, 2))
        .collect();
    assert!(values.iter().all(|&s| s > 1e-6));
    let h = 0.05;
    let low = values.iter().filter(|&&s| s < h).count() as f64;
    let next = values.iter().filter(|&&s| (h..2.0 * h).contains(&s)).count() as f64;
    assert!(low <= next + 3.0 * next.sqrt().max(1.0));
}

#[test]
fn study_is_order_independent_and_generic() {
    let basis = FockBasis::new(4).unwrap();
    let c = build_t_hop(&basis, 0.3).unwrap();
    let records = genericity_study(&c, &basis, 9, 60, 1e-10).unwrap();
    let serial: Vec<_> = (0..60)
        .map(|i| genericity_record(&haar_sample(4, 9, i).unwrap(), &c, &basis, 1e-10).unwrap())
        .collect();
    for (a, b) in records.iter().zip(&serial) {
        assert_eq!(a.index, b.index);
        assert_eq!(a.min_abs_minor, b.min_abs_minor);
    }
    let s = summarize(&records, 1e-12);
    assert_eq!(s.small_minor_count, 0);
    assert!(s.pass_rate > 0.95);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn samples_are_unitary_and_reproducible(d in 1usize..=6, seed in any::<u64>(), index in 0u64..1000) {
        let a = haar_sample(d, seed, index).unwrap();
        prop_assert!(linalg::unitary_deviation(&a.u) < 1e-12);
        prop_assert_eq!(&a.u, &haar_sample(d, seed, index).unwrap().u);
        prop_assert!(a.min_abs_minor().unwrap() > 0.0);
    }
}
