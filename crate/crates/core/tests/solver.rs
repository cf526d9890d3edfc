mod common;

use nalgebra::{DMatrix, DVector};

use adjscore_core::betabin::{BetaBinData, BetaBinLinks, BetaBinModel};
use adjscore_core::betareg::{BetaRegData, BetaRegLinks, BetaRegModel};
use adjscore_core::links::Link;
use adjscore_core::report::FitReport;
use adjscore_core::{adjusted_score, solve, wald_bounds, Method, ModelContract, SolverOptions};

use common::*;

const METHODS: [Method; 3] = [Method::Ml, Method::MeanBr, Method::MedianBr];

#[test]
fn fits_solve_their_estimating_equations() {
    let reg = small_betareg(
        11,
        30,
        BetaRegLinks::new(Link::Logit, Link::Log).unwrap(),
        true,
    );
    let bb = small_betabin(
        12,
        25,
        8,
        BetaBinLinks::new(Link::Logit, Link::Logit).unwrap(),
    );
    let models: [&dyn ModelContract; 2] = [&reg, &bb];
    for model in models {
        for method in METHODS {
            let fit = solve(model, &SolverOptions::for_method(method)).unwrap();
            assert!(fit.converged && !fit.divergence_flag, "{method:?}");
            let (_, scaled) = adjusted_score(model, &fit.estimate.theta, method).unwrap();
            assert!(scaled.amax() < 1e-8);
            assert_eq!(fit.std_errors.len(), model.parameter_dimension());
        }
    }
}

#[test]
fn report_json_round_trip_preserves_the_root() {
    let model = small_betareg(
        5,
        25,
        BetaRegLinks::new(Link::Logit, Link::Log).unwrap(),
        false,
    );
    let fit = solve(&model, &SolverOptions::for_method(Method::MedianBr)).unwrap();
    let names: Vec<String> = ["b0", "b1", "g0"].map(String::from).to_vec();
    let report = FitReport::new("betareg", 25, names, &model, &fit, 0.95).unwrap();
    let parsed: FitReport = serde_json::from_str(&report.to_json()).unwrap();
    assert_eq!(parsed.estimate, fit.estimate.theta);
    let (_, scaled) = adjusted_score(&model, &parsed.estimate, Method::MedianBr).unwrap();
    assert!(scaled.amax() < 1e-8);
    assert!(
        (parsed.log_likelihood - model.log_likelihood(&parsed.estimate).unwrap()).abs() < 1e-12
    );
    assert_eq!(parsed.wald.len(), 3);
}

/// Rescaling a covariate by `c` divides its coefficient by `c` and leaves the
/// others unchanged, for every method.
#[test]
fn estimates_are_equivariant_under_covariate_scaling() {
    let links = BetaRegLinks::new(Link::Logit, Link::Log).unwrap();
    let base = small_betareg(21, 30, links, true);
    let c = 4.0;
    let mut x = base.data.x.clone();
    x.column_mut(1).scale_mut(c);
    let mut z = base.data.z.clone();
    z.column_mut(1).scale_mut(c);
    let scaled = BetaRegModel::new(BetaRegData::new(base.data.y.clone(), x, z).unwrap(), links);
    for method in METHODS {
        let a = solve(&base, &SolverOptions::for_method(method)).unwrap();
        let b = solve(&scaled, &SolverOptions::for_method(method)).unwrap();
        for r in 0..4 {
            let factor = if r == 1 || r == 3 { c } else { 1.0 };
            let want = a.estimate.theta[r] / factor;
            assert!(
                close(b.estimate.theta[r], want, 1e-6, 1e-3),
                "{method:?} {r}"
            );
        }
    }
}

/// Three groups of clusters; every cluster in the last group has no
/// successes, so the ML estimate of that group's effect is infinite.
fn quasi_separated() -> BetaBinModel {
    let groups = [0usize, 0, 0, 0, 1, 1, 1, 1, 2, 2, 2, 2];
    let y = vec![1, 6, 2, 8, 9, 3, 7, 2, 0, 0, 0, 0];
    let n = groups.len();
    let x = DMatrix::from_fn(n, 3, |i, j| match j {
        0 => 1.0,
        _ => f64::from(groups[i] == j),
    });
    let z = DMatrix::from_element(n, 1, 1.0);
    let data = BetaBinData::new(y, vec![10; n], x, z).unwrap();
    BetaBinModel::new(data, BetaBinLinks::new(Link::Logit, Link::Logit).unwrap())
}

#[test]
fn infinite_ml_estimate_is_flagged_and_br_stays_finite() {
    let model = quasi_separated();
    let ml = solve(&model, &SolverOptions::for_method(Method::Ml)).unwrap();
    assert!(ml.divergence_flag);
    assert!(!ml.converged);
    let report = ml.divergence.as_ref().unwrap();
    assert!(
        report.components.contains(&2) || report.eta_exceeded,
        "{report:?}"
    );
    assert!(ml.estimate.theta[2] < -5.0);

    for method in [Method::MeanBr, Method::MedianBr] {
        let fit = solve(&model, &SolverOptions::for_method(method)).unwrap();
        assert!(fit.converged && !fit.divergence_flag, "{method:?}");
        assert!(fit
            .estimate
            .theta
            .iter()
            .all(|v| v.is_finite() && v.abs() < 10.0));
        assert!(fit.std_errors.iter().all(|v| v.is_finite()));
    }
}

#[test]
fn iteration_cap_reports_non_convergence() {
    let model = small_betareg(
        3,
        20,
        BetaRegLinks::new(Link::Logit, Link::Log).unwrap(),
        false,
    );
    let opts = SolverOptions {
        max_iterations: 1,
        ..SolverOptions::for_method(Method::MedianBr)
    };
    let fit = solve(&model, &opts).unwrap();
    assert!(!fit.converged);
    assert_eq!(fit.iterations, 1);
    assert_eq!(fit.trace.len(), 2);
}

#[test]
fn supplied_start_is_used_and_checked() {
    let model = small_betareg(
        4,
        20,
        BetaRegLinks::new(Link::Logit, Link::Log).unwrap(),
        false,
    );
    let fit = solve(&model, &SolverOptions::for_method(Method::Ml)).unwrap();
    let opts = SolverOptions {
        start: Some(fit.estimate.clone()),
        ..SolverOptions::for_method(Method::Ml)
    };
    let again = solve(&model, &opts).unwrap();
    assert_eq!(again.iterations, 0);
    assert!(again.converged);

    let mut bad = fit.estimate.clone();
    bad.theta.push(0.0);
    bad.q += 1;
    let opts = SolverOptions {
        start: Some(bad),
        ..SolverOptions::for_method(Method::Ml)
    };
    assert!(solve(&model, &opts).is_err());
}

#[test]
fn wald_bounds_use_the_normal_quantile() {
    let (lo, hi) = wald_bounds(1.0, 0.5, 0.95).unwrap();
    assert!((lo - (1.0 - 0.5 * 1.959963984540054)).abs() < 1e-12);
    assert!((hi - (1.0 + 0.5 * 1.959963984540054)).abs() < 1e-12);
    assert!(wald_bounds(0.0, 1.0, 1.0).is_err());
}

#[test]
fn uniform_response_has_zero_log_density() {
    let y = DVector::from_vec(vec![0.2, 0.7]);
    let x = DMatrix::from_element(2, 1, 1.0);
    let model = BetaRegModel::new(
        BetaRegData::new(y, x.clone(), x).unwrap(),
        BetaRegLinks::new(Link::Logit, Link::Log).unwrap(),
    );
    // μ = 1/2 and φ = 2 give the uniform density.
    assert!(model.log_likelihood(&[0.0, 2f64.ln()]).unwrap().abs() < 1e-14);
}
