use approx::assert_relative_eq;
use proptest::prelude::*;
use sapd::numerics::norm_sq;
use sapd::problem::{path_rng, ExactOracle};
use sapd::solvers::{
    estimate_smd_g, k_n, run_baseline, run_sapd, run_sgda, sapd_step, sgda_step, solve_reference, BaselineKind, ErgodicAverage,
    IterateState, RunConfig, SmdSetup,
};
use sapd::tuning::scsc_explicit_params;
use sapd::{QuadraticBilinearProblem, QuadraticSpec, SaddlePointProblem, SapdParams};

fn bench(delta: f64) -> QuadraticBilinearProblem {
    QuadraticBilinearProblem::from_spec(&QuadraticSpec::benchmark(delta, 1)).unwrap()
}

fn ones(d: usize) -> Vec<f64> {
    vec![1.0; d]
}

#[test]
fn zero_momentum_step_equals_sgda_step() {
    let q = bench(3.0);
    let params = SapdParams::new(0.05, 0.07, 0.0);
    let mut a = IterateState::new(ones(30), ones(30));
    let mut b = a.clone();
    let mut ra = path_rng(5);
    let mut rb = path_rng(5);
    for _ in 0..50 {
        sapd_step(&mut a, &params, &q, &mut ra);
        sgda_step(&mut b, params.tau, params.sigma, &q, &mut rb);
        assert_eq!(a.x, b.x);
        assert_eq!(a.y, b.y);
    }
}

#[test]
fn noiseless_step_matches_affine_recursion() {
    let q = bench(0.0);
    let k = q.k().clone();
    let (tau, sigma, theta) = (0.08, 0.09, 0.7);
    let params = SapdParams::new(tau, sigma, theta);
    let mut st = IterateState::new((0..30).map(|i| (i as f64).sin()).collect(), (0..30).map(|i| (i as f64).cos()).collect());
    let (mut x, mut y) = (st.x.clone(), st.y.clone());
    let mut x_prev = x.clone();
    let mut rng = path_rng(0);
    for _ in 0..40 {
        sapd_step(&mut st, &params, &q, &mut rng);
        let kx = k.mul_vec(&x);
        let kxp = k.mul_vec(&x_prev);
        let y_new: Vec<f64> =
            (0..30).map(|i| (y[i] + sigma * (1.0 + theta) * kx[i] - sigma * theta * kxp[i]) / (1.0 + sigma)).collect();
        let kty = k.tr_mul_vec(&y_new);
        let x_new: Vec<f64> = (0..30).map(|i| (x[i] - tau * kty[i]) / (1.0 + tau)).collect();
        x_prev = x;
        x = x_new;
        y = y_new;
        for i in 0..30 {
            assert_relative_eq!(st.x[i], x[i], epsilon = 1e-12);
            assert_relative_eq!(st.y[i], y[i], epsilon = 1e-12);
        }
    }
}

#[test]
fn certified_parameters_decay_at_the_certified_rate() {
    let q = bench(0.0);
    let cp = scsc_explicit_params(q.profile(), None).unwrap();
    let zero = vec![0.0; 30];
    let run = run_sapd(&q, &cp.params, &ones(30), &ones(30), &RunConfig::new(300, 0), Some((&zero, &zero))).unwrap();
    let d100 = run.trace[100].dist_sq;
    let d300 = run.trace[300].dist_sq;
    let rate = (d300 / d100).powf(1.0 / 200.0);
    assert!(rate <= 0.9049 + 0.01, "empirical rate {rate}");
}

#[test]
fn unit_rate_average_is_the_plain_mean() {
    let q = bench(2.0);
    let params = SapdParams::new(0.05, 0.05, 0.5);
    let mut cfg = RunConfig::new(25, 9);
    cfg.record_every = 0;
    let run = run_sapd(&q, &params, &ones(30), &ones(30), &cfg, None).unwrap();
    let mut st = IterateState::new(ones(30), ones(30));
    let mut rng = path_rng(9);
    let mut mean = vec![0.0; 30];
    for _ in 0..25 {
        sapd_step(&mut st, &params, &q, &mut rng);
        mean.iter_mut().zip(&st.x).for_each(|(m, v)| *m += v / 25.0);
    }
    for (a, b) in run.x_bar.iter().zip(&mean) {
        assert_relative_eq!(a, b, epsilon = 1e-12);
    }
    assert_eq!(run.state.x, st.x);
}

#[test]
fn single_step_average_is_the_iterate_for_any_rate() {
    let q = bench(2.0);
    let params = SapdParams::new(0.05, 0.05, 0.5);
    let mut cfg = RunConfig::new(1, 4);
    cfg.weighting_rho = 0.37;
    let run = run_sapd(&q, &params, &ones(30), &ones(30), &cfg, None).unwrap();
    assert_eq!(run.x_bar, run.state.x);
    assert_eq!(run.y_bar, run.state.y);
}

proptest! {
    #[test]
    fn ergodic_average_matches_direct_weighted_sum(rho in 0.5f64..1.0, n in 1usize..60) {
        let mut avg = ErgodicAverage::new(rho, 1, 1).unwrap();
        let mut num = 0.0;
        let mut den = 0.0;
        for k in 1..=n {
            let v = (k as f64 * 0.7).sin();
            avg.push(&[v], &[2.0 * v]);
            let w = rho.powi(-(k as i32) + 1);
            num += w * v;
            den += w;
        }
        prop_assert!((avg.x()[0] - num / den).abs() <= 1e-10);
        prop_assert!((avg.weight() - k_n(rho, n).unwrap()).abs() <= 1e-9 * avg.weight());
        // K_N(ρ) = Σ_{k≤N} ρ^{−k+1}.
        prop_assert!((k_n(rho, n).unwrap() - den).abs() <= 1e-9 * den);
    }
}

#[test]
fn runs_are_reproducible_per_seed() {
    let q = bench(5.0);
    let params = SapdParams::new(0.05, 0.05, 0.5);
    let zero = vec![0.0; 30];
    let cfg = RunConfig::new(200, 17);
    let a = run_sapd(&q, &params, &ones(30), &ones(30), &cfg, Some((&zero, &zero))).unwrap();
    let b = run_sapd(&q, &params, &ones(30), &ones(30), &cfg, Some((&zero, &zero))).unwrap();
    let da: Vec<f64> = a.trace.iter().map(|r| r.dist_sq).collect();
    let db: Vec<f64> = b.trace.iter().map(|r| r.dist_sq).collect();
    assert_eq!(da, db);
    let c = run_sapd(&q, &params, &ones(30), &ones(30), &RunConfig::new(200, 18), Some((&zero, &zero))).unwrap();
    assert_ne!(da.last(), c.trace.last().map(|r| r.dist_sq).as_ref());
}

#[test]
fn sgda_and_baselines_converge_without_noise() {
    let q = bench(0.0);
    let zero = vec![0.0; 30];
    let d0 = 60.0;
    let cfg = RunConfig::new(4000, 0);
    let sgda = run_sgda(&q, 0.01, 0.01, &ones(30), &ones(30), &cfg, Some((&zero, &zero))).unwrap();
    assert!(sgda.trace.last().unwrap().dist_sq < 1e-6 * d0);
    for kind in [BaselineKind::Sogda, BaselineKind::Smp] {
        let run = run_baseline(kind, &q, &ones(30), &ones(30), &cfg, None, Some((&zero, &zero))).unwrap();
        assert!(run.trace.last().unwrap().dist_sq < 1e-6 * d0, "{}", kind.name());
    }
}

#[test]
fn smd_stays_in_its_ball() {
    let q = bench(5.0);
    let radius = 30f64.sqrt();
    let g = estimate_smd_g(&q, radius, 200, 1);
    assert!(g > 0.0);
    let zero = vec![0.0; 30];
    let run = run_baseline(
        BaselineKind::Smd,
        &q,
        &ones(30),
        &ones(30),
        &RunConfig::new(500, 2),
        Some(SmdSetup { radius, g_bound: g }),
        Some((&zero, &zero)),
    )
    .unwrap();
    assert!(norm_sq(&run.state.x) <= radius * radius + 1e-9);
    assert!(run.trace.last().unwrap().dist_sq < run.trace[0].dist_sq);
}

#[test]
fn reference_solve_recovers_the_saddle_point() {
    let q = bench(5.0);
    let cp = scsc_explicit_params(q.profile(), None).unwrap();
    let (x, y, iters) = solve_reference(&q, &cp.params, &ones(30), &ones(30), 1e-12, 10_000).unwrap();
    assert!(iters > 0);
    assert!(norm_sq(&x) + norm_sq(&y) < 1e-18);
    let exact = ExactOracle::new(&q).unwrap();
    assert_eq!(exact.dims(), (30, 30));
}

#[test]
fn invalid_inputs_are_rejected() {
    let q = bench(1.0);
    let params = SapdParams::new(0.05, 0.05, 0.5);
    assert!(run_sapd(&q, &params, &ones(3), &ones(30), &RunConfig::new(5, 0), None).is_err());
    assert!(run_sapd(&q, &params, &ones(30), &ones(30), &RunConfig::new(0, 0), None).is_err());
    let mut cfg = RunConfig::new(5, 0);
    cfg.weighting_rho = 1.5;
    assert!(run_sapd(&q, &params, &ones(30), &ones(30), &cfg, None).is_err());
    assert!(run_sapd(&q, &SapdParams::new(-1.0, 0.1, 0.5), &ones(30), &ones(30), &RunConfig::new(5, 0), None).is_err());
    assert!(k_n(0.5, 0).is_err());
}
