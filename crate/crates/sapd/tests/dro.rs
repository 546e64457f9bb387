use std::io::Write;

use approx::assert_relative_eq;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use sapd::dro::{
    csv_classes, dro_gap, load_dataset, synthetic_dataset, test_error, DataFormat, DroConfig, DroDataset, DroProblem,
    Normalization,
};
use sapd::numerics::{dist_sq, dot, Matrix};
use sapd::problem::path_rng;
use sapd::solvers::solve_reference;
use sapd::tuning::scsc_explicit_params;
use sapd::SaddlePointProblem;

fn problem(n: usize, d: usize, batch: usize) -> DroProblem {
    let ds = synthetic_dataset(n, d, 0.1, 3).unwrap().normalized(Normalization::GlobalScale);
    let cfg = DroConfig { mu_x: 0.1, mu_y: 0.5, r: 2.0 * (n as f64).sqrt(), d_x: 100.0 * d as f64, batch };
    DroProblem::new(ds, cfg).unwrap()
}

fn gaussian(n: usize, rng: &mut impl rand::RngCore) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

fn file_with(contents: &str) -> tempfile::NamedTempFile {
    let mut f = tempfile::NamedTempFile::new().unwrap();
    f.write_all(contents.as_bytes()).unwrap();
    f
}

#[test]
fn exact_gradients_match_finite_differences() {
    let p = problem(15, 4, 15);
    let mut rng = path_rng(8);
    let x = gaussian(4, &mut rng);
    let y = p.project_y(&gaussian(15, &mut rng));
    let h = 1e-6;
    let mut gx = p.exact_grad_x(&x, &y).unwrap();
    gx.iter_mut().zip(p.reg_grad_x(&x)).for_each(|(g, r)| *g += r);
    for j in 0..4 {
        let (mut xp, mut xm) = (x.clone(), x.clone());
        xp[j] += h;
        xm[j] -= h;
        let fd = (p.lagrangian(&xp, &y) - p.lagrangian(&xm, &y)) / (2.0 * h);
        assert!((fd - gx[j]).abs() <= 1e-6, "x[{j}]: fd {fd}, exact {}", gx[j]);
    }
    let mut gy = p.exact_grad_y(&x, &y).unwrap();
    gy.iter_mut().zip(p.reg_grad_y(&y)).for_each(|(g, r)| *g -= r);
    for i in 0..15 {
        let (mut yp, mut ym) = (y.clone(), y.clone());
        yp[i] += h;
        ym[i] -= h;
        let fd = (p.lagrangian(&x, &yp) - p.lagrangian(&x, &ym)) / (2.0 * h);
        assert!((fd - gy[i]).abs() <= 1e-6, "y[{i}]: fd {fd}, exact {}", gy[i]);
    }
}

#[test]
fn minibatch_oracle_is_unbiased() {
    let p = problem(12, 3, 2);
    let x = vec![0.5, -1.0, 2.0];
    let y = p.project_y(&(0..12).map(|i| 0.05 + 0.01 * i as f64).collect::<Vec<_>>());
    let ex = p.exact_grad_x(&x, &y).unwrap();
    let ey = p.exact_grad_y(&x, &y).unwrap();
    let m = 100_000;
    let mut rng = path_rng(4);
    let (mut sx, mut sxx) = (vec![0.0; 3], vec![0.0; 3]);
    let (mut sy, mut syy) = (vec![0.0; 12], vec![0.0; 12]);
    for _ in 0..m {
        for (j, g) in p.grad_x(&x, &y, &mut rng).into_iter().enumerate() {
            sx[j] += g;
            sxx[j] += g * g;
        }
        for (i, g) in p.grad_y(&x, &y, &mut rng).into_iter().enumerate() {
            sy[i] += g;
            syy[i] += g * g;
        }
    }
    let check = |s: &[f64], ss: &[f64], exact: &[f64]| {
        for j in 0..exact.len() {
            let mean = s[j] / m as f64;
            let se = ((ss[j] / m as f64 - mean * mean) / m as f64).sqrt();
            assert!((mean - exact[j]).abs() <= 4.0 * se + 1e-12, "coord {j}: mean {mean}, exact {}, se {se}", exact[j]);
        }
    };
    check(&sx, &sxx, &ex);
    check(&sy, &syy, &ey);
}

#[test]
fn csv_loading_handles_headers_and_named_classes() {
    let f = file_with("f1,f2,label\n1.0,2.0,1\n3.0,2.0,-1\n2.0,2.0,0\n");
    let ds = load_dataset(f.path(), DataFormat::Csv, Normalization::ColumnMinmax, None).unwrap();
    assert_eq!((ds.n(), ds.d()), (3, 2));
    assert_eq!(ds.b, vec![1.0, -1.0, -1.0]);
    assert_eq!(ds.a.row(0), &[0.0, 0.0]);
    assert_eq!(ds.a.row(1), &[1.0, 0.0]);
    assert_eq!(ds.a.row(2), &[0.5, 0.0]);
    assert_eq!(ds.constant_columns, vec![1]);

    let f = file_with("1,2,setosa\n3,4,virginica\n5,6,versicolor\n");
    assert!(load_dataset(f.path(), DataFormat::Csv, Normalization::None, None).is_err());
    let classes: Vec<String> = csv_classes(f.path()).unwrap().into_iter().collect();
    assert_eq!(classes, vec!["setosa", "versicolor", "virginica"]);
    let ds = load_dataset(f.path(), DataFormat::Csv, Normalization::None, Some("virginica")).unwrap();
    assert_eq!(ds.b, vec![-1.0, 1.0, -1.0]);

    let f = file_with("1,2,1\n3,-1\n");
    assert!(load_dataset(f.path(), DataFormat::Csv, Normalization::None, None).is_err());
}

#[test]
fn libsvm_loading_densifies_sparse_rows() {
    let f = file_with("# comment\n+1 1:0.5 3:2\n-1 2:1.5\n\n1 3:-1\n");
    let ds = load_dataset(f.path(), DataFormat::Libsvm, Normalization::None, None).unwrap();
    assert_eq!((ds.n(), ds.d()), (3, 3));
    assert_eq!(ds.a.row(0), &[0.5, 0.0, 2.0]);
    assert_eq!(ds.a.row(1), &[0.0, 1.5, 0.0]);
    assert_eq!(ds.b, vec![1.0, -1.0, 1.0]);
    let scaled = ds.normalized(Normalization::GlobalScale);
    assert_relative_eq!(scaled.a.row(0)[2], 2.0 / 3f64.sqrt(), epsilon = 1e-15);
    assert!(load_dataset(file_with("1 0:1\n").path(), DataFormat::Libsvm, Normalization::None, None).is_err());
    assert!(load_dataset(file_with("1 1-2\n").path(), DataFormat::Libsvm, Normalization::None, None).is_err());
}

#[test]
fn gap_dominates_sampled_lagrangian_differences() {
    let p = problem(10, 3, 10);
    let mut rng = path_rng(21);
    for _ in 0..5 {
        let xb = gaussian(3, &mut rng);
        let yb = p.project_y(&gaussian(10, &mut rng));
        let gap = dro_gap(&p, &xb, &yb, 1e-10, 100_000).unwrap();
        for _ in 0..200 {
            let x = p.project_x(&gaussian(3, &mut rng).iter().map(|v| 4.0 * v).collect::<Vec<_>>());
            let y = p.project_y(&gaussian(10, &mut rng));
            assert!(p.lagrangian(&xb, &y) - p.lagrangian(&x, &yb) <= gap + 1e-9);
        }
    }
}

#[test]
fn dual_maximizer_is_attained_on_the_feasible_set() {
    // gap ≥ sup_y L(x̄, y) − L(x̄, ȳ) ≥ any sampled feasible excess.
    let p = problem(8, 2, 8);
    let x = vec![0.7, -0.4];
    let mut rng = path_rng(5);
    let best_sampled = (0..2000)
        .map(|_| {
            let y = p.project_y(&gaussian(8, &mut rng).iter().map(|v| 0.2 * v + 0.125).collect::<Vec<_>>());
            assert!(p.dual_spec().contains(&y, 1e-10));
            p.lagrangian(&x, &y)
        })
        .fold(f64::NEG_INFINITY, f64::max);
    let y_bar = p.uniform_y();
    let gap = dro_gap(&p, &x, &y_bar, 1e-10, 100_000).unwrap();
    assert!(gap >= best_sampled - p.lagrangian(&x, &y_bar) - 1e-9);
}

#[test]
fn gap_controls_distance_to_the_saddle_point() {
    let p = problem(20, 3, 20);
    let (d, n) = p.dims();
    let cp = scsc_explicit_params(p.profile(), None).unwrap();
    let (xs, ys, _) = solve_reference(&p, &cp.params, &vec![0.0; d], &p.uniform_y(), 1e-12, 200_000).unwrap();
    let gap_star = dro_gap(&p, &xs, &ys, 1e-11, 100_000).unwrap();
    assert!(gap_star.abs() < 1e-8, "gap at the reference {gap_star}");
    let mut rng = path_rng(30);
    let (mu_x, mu_y) = (p.config().mu_x, p.config().mu_y);
    for _ in 0..10 {
        let xb = gaussian(d, &mut rng);
        let yb = p.project_y(&gaussian(n, &mut rng));
        let gap = dro_gap(&p, &xb, &yb, 1e-10, 100_000).unwrap();
        let lower = 0.5 * mu_x * dist_sq(&xb, &xs) + 0.5 * mu_y * dist_sq(&yb, &ys);
        assert!(gap >= lower - 1e-8, "gap {gap} < {lower}");
    }
    let init = dro_gap(&p, &vec![0.0; d], &p.uniform_y(), 1e-10, 100_000).unwrap();
    assert!(init > 0.0);
}

#[test]
fn test_error_counts_sign_mistakes() {
    let w = [1.0, -2.0];
    let rows: Vec<[f64; 2]> = (0..40).map(|i| [(i as f64 * 0.37).sin(), (i as f64 * 0.91).cos()]).collect();
    let a = Matrix::from_fn(40, 2, |i, j| rows[i][j]);
    let b: Vec<f64> = rows.iter().map(|r| if dot(r, &w) >= 0.0 { 1.0 } else { -1.0 }).collect();
    let clean = DroDataset::new(a.clone(), b.clone()).unwrap();
    assert_eq!(test_error(&w, &clean).unwrap(), 0.0);

    let mut flipped = b.clone();
    (0..10).for_each(|i| flipped[i] = -flipped[i]);
    let noisy = DroDataset::new(a, flipped).unwrap();
    assert_relative_eq!(test_error(&w, &noisy).unwrap(), 0.25, epsilon = 1e-15);
    assert!(rows.iter().all(|r| dot(r, &w) != 0.0));
    assert_relative_eq!(test_error(&[-1.0, 2.0], &noisy).unwrap(), 0.75, epsilon = 1e-15);

    let mut rng = path_rng(2);
    let n = 20_000;
    let a = Matrix::from_fn(n, 3, |_, _| StandardNormal.sample(&mut rng));
    let b = (0..n).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect();
    let random = DroDataset::new(a, b).unwrap();
    assert!((test_error(&[0.3, 1.0, -0.5], &random).unwrap() - 0.5).abs() < 0.02);
    assert!(test_error(&[1.0], &random).is_err());
}

#[test]
fn configuration_is_validated() {
    let ds = synthetic_dataset(10, 2, 0.0, 1).unwrap();
    let ok = DroConfig::with_defaults(&ds, 0.1, 1.0).unwrap();
    assert_eq!(ok.mu_y, 0.5);
    assert_eq!(ok.batch, 1);
    assert!(DroProblem::new(ds.clone(), DroConfig { batch: 11, ..ok }).is_err());
    assert!(DroProblem::new(ds.clone(), DroConfig { batch: 0, ..ok }).is_err());
    assert!(DroProblem::new(ds.clone(), DroConfig { mu_x: 0.0, ..ok }).is_err());
    assert!(DroProblem::new(ds.clone(), DroConfig { r: -1.0, ..ok }).is_err());
    assert!(synthetic_dataset(10, 2, 1.5, 1).is_err());
    let (train, test) = ds.split(0.3, 4).unwrap();
    assert_eq!((train.n(), test.n()), (7, 3));
    assert!(ds.split(0.0, 4).is_err());
}
