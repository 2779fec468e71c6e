//! Rayon-parallel Monte Carlo power experiments.
//!
//! Each replication derives its own RNG streams from the design seed, so the
//! parallel map is a pure function of the replication index and the reduce
//! step is order-insensitive: results are bit-identical to the serial
//! reference `hdqlr_core::dgp::power_experiment` on any thread count.

use hdqlr_core::dgp::{power_replication, reduce_power, DgpConfig, DgpError, PowerConfig, PowerCurve, RepOutcome};
use rayon::prelude::*;

/// Run the experiment on the current rayon thread pool. Use
/// `rayon::ThreadPoolBuilder` + `install` to pin a worker count.
pub fn parallel_power(design: &DgpConfig, pcfg: &PowerConfig) -> Result<PowerCurve, DgpError> {
    design.validate()?;
    let outcomes: Vec<RepOutcome> = (1..=pcfg.reps)
        .into_par_iter()
        .map(|rep| power_replication(design, pcfg, rep))
        .collect();
    reduce_power(design, pcfg, &outcomes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use hdqlr_core::dgp::{power_experiment, DesignPreset};
    use hdqlr_core::inference::{InferenceConfig, ThetaGrid};
    use hdqlr_core::Method;

    #[test]
    fn parallel_matches_serial_bit_for_bit() {
        let design = DgpConfig::preset(DesignPreset::Strong, 250, 2, 19);
        let pcfg = PowerConfig {
            methods: vec![Method::Hdqlr, Method::Dml],
            theta_grid: vec![0.0, 1.0, 2.0],
            reps: 8,
            alpha: 0.05,
            inference: InferenceConfig {
                critical_draws: 120,
                grid: Some(ThetaGrid::new(-4.0, 6.0, 21).unwrap()),
                ..InferenceConfig::default()
            },
            mle: Default::default(),
        };
        let serial = power_experiment(&design, &pcfg).unwrap();
        let wide = parallel_power(&design, &pcfg).unwrap();
        assert_eq!(serial, wide);
        let narrow = rayon::ThreadPoolBuilder::new()
            .num_threads(2)
            .build()
            .unwrap()
            .install(|| parallel_power(&design, &pcfg))
            .unwrap();
        assert_eq!(serial, narrow);
    }
}
