use approx::assert_relative_eq;
use nalgebra::DMatrix;
use proptest::prelude::*;
use sapd::numerics::{eig_general, jacobi_eigen, solve_linear, spectral_norm, spectral_radius, sym_eigen, Matrix, SymMatrix};

fn to_na(m: &Matrix) -> DMatrix<f64> {
    DMatrix::from_fn(m.rows(), m.cols(), |i, j| m[(i, j)])
}

fn square(n: usize) -> impl Strategy<Value = Matrix> {
    prop::collection::vec(-5.0f64..5.0, n * n).prop_map(move |v| Matrix::from_vec(n, n, v))
}

fn sized_square() -> impl Strategy<Value = Matrix> {
    (1usize..9).prop_flat_map(square)
}

fn symmetrize(m: &Matrix) -> Matrix {
    m.add(&m.transpose()).scale(0.5)
}

proptest! {
    #[test]
    fn symmetric_eigenvalues_match_nalgebra(m in sized_square()) {
        let s = symmetrize(&m);
        let ours = sym_eigen(&SymMatrix::from_dense_upper(&s)).unwrap();
        let mut theirs: Vec<f64> = to_na(&s).symmetric_eigenvalues().iter().copied().collect();
        theirs.sort_by(f64::total_cmp);
        for (a, b) in ours.iter().zip(&theirs) {
            prop_assert!((a - b).abs() <= 1e-9 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn jacobi_vectors_are_orthonormal_and_diagonalize(m in sized_square()) {
        let s = symmetrize(&m);
        let (vals, v) = jacobi_eigen(&s).unwrap();
        let n = s.rows();
        let vtv = v.transpose().matmul(&v);
        let back = v.matmul(&Matrix::diag(&vals)).matmul(&v.transpose());
        prop_assert!(vtv.sub(&Matrix::identity(n)).frobenius() <= 1e-10);
        prop_assert!(back.sub(&s).frobenius() <= 1e-9 * (1.0 + s.frobenius()));
    }

    #[test]
    fn spectral_norm_matches_singular_values(m in sized_square()) {
        let ours = spectral_norm(&m);
        let theirs = to_na(&m).singular_values().max();
        prop_assert!((ours - theirs).abs() <= 1e-8 * (1.0 + theirs));
    }

    #[test]
    fn spectral_radius_matches_nalgebra(m in sized_square()) {
        let ours = spectral_radius(&m).unwrap();
        let theirs = to_na(&m).complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max);
        prop_assert!((ours - theirs).abs() <= 1e-7 * (1.0 + theirs));
    }

    #[test]
    fn linear_solve_matches_nalgebra(m in sized_square(), seed in 0u64..1000) {
        let n = m.rows();
        let a = m.add(&Matrix::identity(n).scale(12.0));
        let b: Vec<f64> = (0..n).map(|i| ((i as u64 + seed) % 7) as f64 - 3.0).collect();
        let ours = solve_linear(&a, &b).unwrap();
        let theirs = to_na(&a).lu().solve(&nalgebra::DVector::from_vec(b.clone())).unwrap();
        for (x, y) in ours.iter().zip(theirs.iter()) {
            prop_assert!((x - y).abs() <= 1e-10 * (1.0 + y.abs()));
        }
    }
}

#[test]
fn general_eigenvalues_of_a_rotation() {
    let (c, s) = (0.6, 0.8);
    let m = Matrix::from_rows(&[&[c, -s], &[s, c]]);
    let mut eig = eig_general(&m).unwrap();
    eig.sort_by(|a, b| a.im.total_cmp(&b.im));
    assert_relative_eq!(eig[0].re, 0.6, epsilon = 1e-12);
    assert_relative_eq!(eig[0].im, -0.8, epsilon = 1e-12);
    assert_relative_eq!(spectral_radius(&m).unwrap(), 1.0, epsilon = 1e-12);
}

#[test]
fn general_eigenvalues_of_a_companion_matrix() {
    // Roots 1, 2, 3 of x³ − 6x² + 11x − 6.
    let m = Matrix::from_rows(&[&[6.0, -11.0, 6.0], &[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0]]);
    let mut re: Vec<f64> = eig_general(&m).unwrap().iter().map(|z| z.re).collect();
    re.sort_by(f64::total_cmp);
    for (a, b) in re.iter().zip([1.0, 2.0, 3.0]) {
        assert_relative_eq!(*a, b, epsilon = 1e-9);
    }
}
