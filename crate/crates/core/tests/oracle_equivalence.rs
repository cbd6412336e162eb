use cvqkd_core::covariance::CovarianceElements;
use cvqkd_core::protocol::{DetEffPlacement, SubtractionMode};
use cvqkd_core::verify::{
    oracle_case, run_verification, standard_cases, standard_modes, VerifyOptions,
};
use cvqkd_core::Error;

const TOL: f64 = 1e-9;

fn report(label: &str, errors: &[f64; 8], p_err: f64) {
    let worst = errors
        .iter()
        .zip(CovarianceElements::NAMES)
        .fold(("P", p_err), |w, (e, n)| if *e > w.1 { (n, *e) } else { w });
    println!("{label}: worst {} = {:.2e}", worst.0, worst.1);
}

#[test]
fn closed_forms_match_oracle() {
    for params in standard_cases(8) {
        for mode in standard_modes() {
            let r = oracle_case(&params, mode).unwrap();
            report(&format!("a2={} b2={} T={} {mode}", params.alpha_sq, params.beta_sq, params.channel_t),
                &r.element_errors, r.probability_error);
            assert!(r.max_error() < TOL, "{r:#?}");
            assert!(r.structure_residual < 1e-12, "{r:#?}");
        }
    }
}

#[test]
fn closed_forms_match_oracle_with_lossy_detector() {
    for params in standard_cases(6) {
        let params = cvqkd_core::ProtocolParams {
            det_eff: 0.68,
            det_eff_placement: DetEffPlacement::SubtractionTap,
            ..params
        };
        for mode in standard_modes() {
            let r = oracle_case(&params, mode).unwrap();
            assert!(r.max_error() < TOL, "{r:#?}");
        }
    }
}

#[test]
fn baseline_matches_oracle() {
    for params in standard_cases(10) {
        let r = oracle_case(&params, SubtractionMode::None).unwrap();
        assert!(r.max_error() < TOL, "{r:#?}");
        assert!(r.structure_residual < 1e-12);
    }
}

#[test]
fn higher_counter_outcomes_match_oracle() {
    let params = standard_cases(7)[2];
    for s in 3..=5 {
        let r = oracle_case(&params, SubtractionMode::Counter(s)).unwrap();
        assert!(r.max_error() < TOL, "s={s}: {r:#?}");
    }
}

#[test]
fn verification_suite_passes_and_catches_corruption() {
    let opts = VerifyOptions {
        n_max: 5,
        oracle_n_max: 5,
        ..Default::default()
    };
    assert!(run_verification(&opts).unwrap().passed());
    let corrupt = VerifyOptions {
        corrupt_tap: true,
        ..opts
    };
    assert!(!run_verification(&corrupt).unwrap().passed());
    let mismatch = VerifyOptions {
        oracle_n_max: 6,
        ..opts
    };
    assert!(matches!(run_verification(&mismatch), Err(Error::Contract(_))));
}
