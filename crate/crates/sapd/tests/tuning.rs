use proptest::prelude::*;
use sapd::robustness::{build_block_dynamics, exact_rho_true};
use sapd::tuning::{
    check_general, cp_params, cp_theta_interval, epsilon_params_scsc, feasibility_p_rho, rho_star, s_max,
    scsc_explicit_params, sgda_certificate, sgda_explicit_params, sgda_rho_star, t_max,
};
use sapd::{NoiseProfile, QuadraticBilinearProblem, QuadraticSpec, SmoothnessProfile};

fn profile() -> impl Strategy<Value = SmoothnessProfile> {
    (0.1f64..5.0, 0.1f64..5.0, 0.0f64..5.0, 0.1f64..10.0, 0.1f64..10.0, 0.0f64..5.0)
        .prop_map(|(mx, my, lxx, lxy, lyx, lyy)| SmoothnessProfile::new(mx, my, lxx, lxy, lyx, lyy))
}

fn example() -> SmoothnessProfile {
    SmoothnessProfile::bilinear(1.0, 10.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn explicit_parameters_pass_the_general_certificate(p in profile(), beta in 0.05f64..1.0) {
        let c = scsc_explicit_params(&p, Some(beta)).unwrap();
        let again = check_general(&p, &c.params, c.certificate.rho, c.certificate.alpha).unwrap();
        prop_assert!(again.feasible, "margin {}", again.psd_margin);
        prop_assert!(c.params.theta > 0.0 && c.params.theta < 1.0);
    }

    #[test]
    fn certified_rate_dominates_the_true_rate(mu_x in 0.2f64..3.0, mu_y in 0.2f64..3.0, norm in 0.5f64..10.0, seed in 0u64..1000) {
        let spec = QuadraticSpec { d: 6, spectral_norm: norm, mu_x, mu_y, delta: 0.0, seed };
        let q = QuadraticBilinearProblem::from_spec(&spec).unwrap();
        let c = scsc_explicit_params(sapd::SaddlePointProblem::profile(&q), None).unwrap();
        let rho_true = exact_rho_true(&build_block_dynamics(&q, &c.params).unwrap()).unwrap();
        prop_assert!(rho_true <= c.certificate.rho + 1e-9, "{} > {}", rho_true, c.certificate.rho);
    }

    #[test]
    fn noise_aware_momentum_is_at_least_the_explicit_one(p in profile(), eps in 0.01f64..10.0, delta in 0.0f64..5.0) {
        let noisy = epsilon_params_scsc(&p, &NoiseProfile::isotropic(delta), eps, None).unwrap();
        let plain = scsc_explicit_params(&p, None).unwrap();
        prop_assert!(noisy.params.theta >= plain.params.theta);
        prop_assert!(noisy.certificate.feasible);
    }

    #[test]
    fn sgda_explicit_construction_is_certified(p in profile(), b1 in 0.05f64..0.45, b2 in 0.05f64..0.45) {
        let c = sgda_explicit_params(&p, b1, b2).unwrap();
        let again = sgda_certificate(&p, c.params.tau, c.params.sigma, c.certificate.rho).unwrap();
        prop_assert!(again.feasible);
    }
}

#[test]
fn rho_star_is_monotone_in_the_coupling() {
    let mut last = 0.0;
    for l in [0.5, 1.0, 2.0, 4.0, 8.0] {
        let r = rho_star(&SmoothnessProfile::bilinear(1.0, l), 1e-3).unwrap().rho;
        assert!(r + 1e-3 >= last, "{r} < {last}");
        last = r;
    }
}

#[test]
fn rho_star_shrinks_with_vanishing_coupling() {
    let r = rho_star(&SmoothnessProfile::bilinear(1.0, 1e-3), 1e-4).unwrap().rho;
    assert!(r < 0.01, "{r}");
}

#[test]
fn rho_star_witness_is_certified_and_beats_the_explicit_rate() {
    let p = example();
    let star = rho_star(&p, 1e-4).unwrap();
    let w = star.witness;
    let cert = check_general(&p, &w.params(), star.rho, w.alpha).unwrap();
    assert!(cert.feasible);
    assert!(star.rho <= scsc_explicit_params(&p, None).unwrap().certificate.rho + 1e-4);
    assert!((star.rho - 0.9049).abs() < 1e-3);
}

#[test]
fn feasibility_examples() {
    let p = example();
    assert!(feasibility_p_rho(&p, 0.91).unwrap().feasible);
    assert!(!feasibility_p_rho(&p, 0.5).unwrap().feasible);
    assert!(feasibility_p_rho(&p, 0.9999).unwrap().feasible);
    // Step-size caps t ≥ μxρ/(1−ρ), s ≥ μyρ/(1−ρ).
    assert!((t_max(&p, 0.9) - 9.0).abs() < 1e-12);
    assert!((s_max(&p, 0.5) - 1.0).abs() < 1e-12);
}

#[test]
fn sgda_best_rate_is_slower_than_sapd() {
    let p = example();
    let sgda = sgda_rho_star(&p, 1e-5).unwrap();
    let sapd = rho_star(&p, 1e-4).unwrap();
    assert!(sgda.certificate.rho >= sapd.rho);
    assert!(sgda.certificate.feasible);
    assert_eq!(sgda.params.theta, 0.0);
}

#[test]
fn chambolle_pock_family() {
    let p = example();
    let (lo, hi) = cp_theta_interval(&p).unwrap();
    assert!((lo - 0.904875).abs() < 1e-6);
    assert_eq!(hi, 1.0);
    let params = cp_params(&p, 0.95).unwrap();
    // 1 + μxτ = 1 + μyσ = 1/θ and 1/τ ≥ θ Lyx² σ.
    assert!((1.0 + params.tau - 1.0 / 0.95).abs() < 1e-12);
    assert!((params.tau - params.sigma).abs() < 1e-15);
    assert!(1.0 / params.tau >= 0.95 * 100.0 * params.sigma);
    assert!(cp_params(&p, 0.5).is_err());
}
