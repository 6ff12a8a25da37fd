use proptest::prelude::*;
use ss_yield_core::functionals::{compute_f0, compute_h0, compute_h0_via_mixture, evaluate_policy, frak_p};
use ss_yield_core::optimizer::{minimize_h0, OptimizerOptions};
use ss_yield_core::presets::{build_preset, logistic_model, ParamBag, PresetId};
use ss_yield_core::problem::ProblemSpec;
use ss_yield_core::yields::YieldFamily;

fn preset(id: PresetId) -> ProblemSpec {
    build_preset(id, &ParamBag::new()).unwrap()
}

fn close(got: f64, want: f64, tol: f64) {
    assert!((got - want).abs() <= tol, "{got} vs {want} (tol {tol})");
}

#[test]
fn logistic_table_optima() {
    let opts = OptimizerOptions::default();
    let m3 = minimize_h0(&logistic_model(3).unwrap(), &opts).unwrap();
    close(m3.y_star, 0.384973, 2e-3);
    close(m3.z_star, 0.6575, 2e-3);
    close(m3.h0_star, 1.33092, 1e-3);
    let m2 = minimize_h0(&logistic_model(2).unwrap(), &opts).unwrap();
    close(m2.y_star, 0.381724, 2e-3);
    close(m2.z_star, 0.56993, 2e-3);
    close(m2.h0_star, 1.00067, 1e-3);
    let spec = logistic_model(2).unwrap();
    close(evaluate_policy(&spec, m2.y_star, m2.z_star).unwrap().hat_bzeta, 15.2779, 2e-2);
    let m1 = minimize_h0(&logistic_model(1).unwrap(), &opts).unwrap();
    close(m1.h0_star, 0.938043, 2e-3);
}

#[test]
fn frozen_policy_values() {
    // regression values from this implementation
    let cases = [
        (PresetId::DriftedBmReflected, 0.5, 4.0, 5.151325165379529, 2.625, 2.625),
        (PresetId::GbmPowerCost, 0.4, 1.5, 2.942319708572517, 2.613416873551051, 0.825),
        (PresetId::GbmPiecewiseCost, 0.7, 2.0, 1.653157995655756, 2.037979637253007, 0.975),
        (PresetId::LogisticZskew, 0.3, 0.7, 1.753921308722393, 17.27071551602042, 0.20564950498),
    ];
    for (id, y, z, h0, bz, supply) in cases {
        let e = evaluate_policy(&preset(id), y, z).unwrap();
        close(e.h0, h0, 1e-9 * h0);
        close(e.hat_bzeta, bz, 1e-9 * bz);
        close(e.mean_supply, supply, 1e-10);
    }
}

#[test]
fn brownian_cycle_is_supply_over_drift() {
    // zeta(v) - zeta(y) = (v - y) / mu for constant drift -mu
    let spec = preset(PresetId::DriftedBm);
    for (y, z) in [(-1.0, 2.0), (0.5, 0.75), (-3.0, -1.0)] {
        let e = evaluate_policy(&spec, y, z).unwrap();
        close(e.hat_bzeta, 0.75 * (z - y), 1e-9);
        close(e.mean_supply, 0.75 * (z - y), 1e-12);
    }
}

#[test]
fn dirac_kernel_collapses_hats() {
    for id in PresetId::ALL {
        let spec = preset(id).with_yields(YieldFamily::Dirac).unwrap();
        let (lo, hi) = box_of(id);
        let e = evaluate_policy(&spec, lo + 0.3 * (hi - lo), lo + 0.7 * (hi - lo)).unwrap();
        close(e.h0, e.f0_at_yz, 1e-12 * e.h0.abs());
    }
}

fn box_of(id: PresetId) -> (f64, f64) {
    match id {
        PresetId::DriftedBm => (-3.0, 3.0),
        PresetId::DriftedBmReflected => (0.0, 5.0),
        PresetId::GbmPowerCost | PresetId::GbmPiecewiseCost => (0.1, 3.0),
        PresetId::LogisticZskew => (0.05, 0.95),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn mixture_form_and_renewal_identities(k in 0usize..5, u in 0.0f64..1.0, w in 0.05f64..1.0) {
        let id = PresetId::ALL[k];
        let spec = preset(id);
        let (lo, hi) = box_of(id);
        let y = lo + u * (hi - lo) * 0.9;
        let z = y + w * (hi - y);
        let h = compute_h0(&spec, y, z).unwrap();
        let m = compute_h0_via_mixture(&spec, y, z).unwrap();
        prop_assert!((h - m).abs() <= 1e-9 * h.abs(), "{h} vs {m}");
        let e = evaluate_policy(&spec, y, z).unwrap();
        prop_assert!((e.kappa_hat * e.hat_bzeta - 1.0).abs() < 1e-14);
        prop_assert!(e.mean_supply > 0.0 && e.mean_supply <= z - y + 1e-12);
        let p = frak_p(&spec, y, z, y, z).unwrap();
        prop_assert!((p - 1.0).abs() < 1e-12);
        // H0 averages F0(y, .) over the delivered level, so it cannot beat
        // the best non-deficient order from y
        let best = (1..=200)
            .map(|i| y + (z - y) * i as f64 / 200.0)
            .filter_map(|v| compute_f0(&spec, y, v).ok())
            .fold(f64::INFINITY, f64::min);
        prop_assert!(h >= best - 1e-9 * best.abs(), "{h} < {best}");
    }
}
