//! Desk-scale behavior checks: estimates center where they should, power
//! moves in the right direction, and the unidentified regime stays quiet.

use hdqlr::parallel::parallel_power;
use hdqlr_core::baselines::{dml_from_moments, MleConfig};
use hdqlr_core::crossfit::{repeat_crossfit, CrossfitConfig};
use hdqlr_core::dgp::{
    generate, true_nuisance_values, DesignPreset, DgpConfig, PowerConfig, TREATMENT_EFFECT,
};
use hdqlr_core::inference::InferenceConfig;
use hdqlr_core::score::{late_from_scores, score_from_values};
use hdqlr_core::stats::mean;
use hdqlr_core::Method;

#[test]
fn dml_point_estimates_center_on_the_truth() {
    let mut estimates = Vec::new();
    for seed in 0..8 {
        let ds = generate(&DgpConfig::preset(DesignPreset::Strong, 400, 5, 300 + seed)).unwrap();
        let runs = repeat_crossfit(&ds, 3, &CrossfitConfig::default(), 1, 42 + seed).unwrap();
        estimates.push(dml_from_moments(&runs[0].moments).unwrap().theta_hat);
    }
    let avg = mean(&estimates);
    assert!(
        (avg - TREATMENT_EFFECT).abs() < 0.25,
        "mean DML estimate {avg} drifted from the design effect: {estimates:?}"
    );
}

#[test]
fn power_rises_away_from_the_truth() {
    let design = DgpConfig::preset(DesignPreset::Strong, 300, 3, 77);
    let pcfg = PowerConfig {
        methods: vec![Method::Hdqlr],
        theta_grid: vec![0.0, TREATMENT_EFFECT, 2.0],
        reps: 40,
        alpha: 0.05,
        inference: InferenceConfig { critical_draws: 200, ..InferenceConfig::default() },
        mle: MleConfig::default(),
    };
    let curve = parallel_power(&design, &pcfg).unwrap();
    let r = &curve.rates[0];
    assert!(r[0] > r[1] + 0.2, "no power against theta = 0: rates {r:?}");
    assert!(r[2] > r[1] + 0.2, "no power against theta = 2: rates {r:?}");
}

#[test]
fn unidentified_design_keeps_the_rejection_curve_flat() {
    let design = DgpConfig::preset(DesignPreset::Unidentified, 300, 3, 78);
    let pcfg = PowerConfig {
        methods: vec![Method::Hdqlr],
        theta_grid: vec![-1.0, 0.0, 1.0, 2.0, 3.0],
        reps: 60,
        alpha: 0.05,
        inference: InferenceConfig { critical_draws: 200, ..InferenceConfig::default() },
        mle: MleConfig::default(),
    };
    let curve = parallel_power(&design, &pcfg).unwrap();
    let r = &curve.rates[0];
    let hi = r.iter().cloned().fold(0.0_f64, f64::max);
    let lo = r.iter().cloned().fold(1.0_f64, f64::min);
    assert!(hi <= 0.15, "unidentified design rejects too often: rates {r:?}");
    assert!(hi - lo <= 0.15, "rejection curve is not flat: rates {r:?}");
}

#[test]
fn the_plug_in_estimand_recovers_the_effect_at_scale() {
    let cfg = DgpConfig::preset(DesignPreset::Strong, 100_000, 4, 79);
    let ds = generate(&cfg).unwrap();
    let truth = true_nuisance_values(ds.x(), &cfg);
    let (psi_a, psi_b) = score_from_values(ds.y(), ds.d(), ds.z(), &truth).unwrap();
    let late = late_from_scores(&psi_a, &psi_b).unwrap();
    assert!(
        (late - TREATMENT_EFFECT).abs() < 0.05,
        "plug-in LATE {late} is far from the design effect"
    );
}
