//! The Neyman-orthogonal AR-type score for the LATE.
//!
//! With binary instrument Z and treatment D, outcome Y, instrument propensity
//! p(x), first-stage m(z, x) = P(D=1 | Z=z, x) and reduced form
//! g(z, x) = E[Y | Z=z, x], the moment function is linear in the target
//! parameter theta:
//!
//! `psi(W; theta, eta) = psi_a * theta + psi_b`
//!
//! where
//!
//! `psi_b =  (g1 - g0) + Z (Y - g1) / p - (1 - Z)(Y - g0) / (1 - p)`
//! `psi_a = -[(m1 - m0) + Z (D - m1) / p - (1 - Z)(D - m0) / (1 - p)]`
//!
//! The parametric layer plugs in logit/linear nuisance fits without
//! intercepts (`m1 = logistic(beta11 + x'beta12)`, `m0 = logistic(x'beta12)`,
//! `g1 = beta21 + x'beta22`, `g0 = x'beta22`, `p = clip(logistic(x'gamma))`);
//! the value layer accepts the five nuisance arrays directly, which is what
//! the orthogonality diagnostics drive.

use alloc::vec;
use alloc::vec::Vec;
use thiserror::Error;

use crate::data::Dataset;
use crate::lasso::logistic;

#[derive(Debug, Error, PartialEq)]
pub enum ScoreError {
    #[error("nuisance dimension mismatch: {what} has length {found}, expected {expected}")]
    Dimension { what: &'static str, found: usize, expected: usize },
    #[error("clip epsilon {0} outside (0, 0.5)")]
    BadClip(f64),
    #[error("row index {row} out of range for n = {n}")]
    RowRange { row: usize, n: usize },
    #[error("nuisance value arrays must share the row count")]
    ValueLength,
    #[error("propensity value {value} at row {row} leaves no usable denominator")]
    BadPropensity { row: usize, value: f64 },
    #[error("weak denominator: |mean(-psi_a)| = {0:e} < 1e-12")]
    WeakDenominator(f64),
}

/// Per-fold nuisance estimates in the no-intercept parameterization.
#[derive(Debug, Clone, PartialEq)]
pub struct NuisanceFit {
    /// First-stage instrument coefficient.
    pub beta11: f64,
    /// First-stage covariate coefficients.
    pub beta12: Vec<f64>,
    /// Reduced-form instrument coefficient.
    pub beta21: f64,
    /// Reduced-form covariate coefficients.
    pub beta22: Vec<f64>,
    /// Instrument-propensity covariate coefficients.
    pub gamma: Vec<f64>,
    /// Propensity clipping bound.
    pub clip_epsilon: f64,
}

/// Nuisance function values aligned with a row subset.
#[derive(Debug, Clone, PartialEq)]
pub struct NuisanceValues {
    pub phat: Vec<f64>,
    pub mhat1: Vec<f64>,
    pub mhat0: Vec<f64>,
    pub ghat1: Vec<f64>,
    pub ghat0: Vec<f64>,
}

/// Scores for a subset of rows, in `rows` order.
#[derive(Debug, Clone, PartialEq)]
pub struct PartialScores {
    pub rows: Vec<usize>,
    pub psi_a: Vec<f64>,
    pub psi_b: Vec<f64>,
}

/// Full-sample score decomposition with the fold id that produced each row's
/// nuisance values.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreDecomposition {
    pub psi_a: Vec<f64>,
    pub psi_b: Vec<f64>,
    pub fold_of: Vec<usize>,
}

impl ScoreDecomposition {
    pub fn n(&self) -> usize {
        self.psi_a.len()
    }

    /// `psi_i(theta) = psi_a_i * theta + psi_b_i`.
    pub fn psi_at(&self, theta: f64) -> Vec<f64> {
        self.psi_a.iter().zip(&self.psi_b).map(|(&a, &b)| a * theta + b).collect()
    }
}

/// Evaluate the score from explicit nuisance values. No clipping happens at
/// this layer; `phat` must stay strictly inside (0, 1).
pub fn score_from_values(
    y: &[f64],
    d: &[f64],
    z: &[f64],
    v: &NuisanceValues,
) -> Result<(Vec<f64>, Vec<f64>), ScoreError> {
    let n = y.len();
    if d.len() != n
        || z.len() != n
        || v.phat.len() != n
        || v.mhat1.len() != n
        || v.mhat0.len() != n
        || v.ghat1.len() != n
        || v.ghat0.len() != n
    {
        return Err(ScoreError::ValueLength);
    }
    let mut psi_a = vec![0.0; n];
    let mut psi_b = vec![0.0; n];
    for i in 0..n {
        let p = v.phat[i];
        if !(p > 0.0 && p < 1.0) {
            return Err(ScoreError::BadPropensity { row: i, value: p });
        }
        let (zi, yi, di) = (z[i], y[i], d[i]);
        let b = (v.ghat1[i] - v.ghat0[i]) + zi * (yi - v.ghat1[i]) / p
            - (1.0 - zi) * (yi - v.ghat0[i]) / (1.0 - p);
        let a_inner = (v.mhat1[i] - v.mhat0[i]) + zi * (di - v.mhat1[i]) / p
            - (1.0 - zi) * (di - v.mhat0[i]) / (1.0 - p);
        psi_b[i] = b;
        psi_a[i] = -a_inner;
    }
    Ok((psi_a, psi_b))
}

/// Nuisance values implied by a parametric fit on the listed rows, with the
/// propensity clipped to `[clip_epsilon, 1 - clip_epsilon]`.
pub fn nuisance_values(
    ds: &Dataset,
    fit: &NuisanceFit,
    rows: &[usize],
) -> Result<NuisanceValues, ScoreError> {
    let p_cov = ds.p();
    if fit.beta12.len() != p_cov {
        return Err(ScoreError::Dimension { what: "beta12", found: fit.beta12.len(), expected: p_cov });
    }
    if fit.beta22.len() != p_cov {
        return Err(ScoreError::Dimension { what: "beta22", found: fit.beta22.len(), expected: p_cov });
    }
    if fit.gamma.len() != p_cov {
        return Err(ScoreError::Dimension { what: "gamma", found: fit.gamma.len(), expected: p_cov });
    }
    if !(fit.clip_epsilon > 0.0 && fit.clip_epsilon < 0.5) {
        return Err(ScoreError::BadClip(fit.clip_epsilon));
    }
    for &r in rows {
        if r >= ds.n() {
            return Err(ScoreError::RowRange { row: r, n: ds.n() });
        }
    }
    let m = rows.len();
    // linear predictors accumulated column-wise; zero coefficients skipped
    let mut lp_m = vec![0.0_f64; m];
    let mut lp_g = vec![0.0_f64; m];
    let mut lp_p = vec![0.0_f64; m];
    for j in 0..p_cov {
        let col = ds.x().col(j);
        let (b12, b22, ga) = (fit.beta12[j], fit.beta22[j], fit.gamma[j]);
        if b12 != 0.0 {
            for (t, &r) in rows.iter().enumerate() {
                lp_m[t] += b12 * col[r];
            }
        }
        if b22 != 0.0 {
            for (t, &r) in rows.iter().enumerate() {
                lp_g[t] += b22 * col[r];
            }
        }
        if ga != 0.0 {
            for (t, &r) in rows.iter().enumerate() {
                lp_p[t] += ga * col[r];
            }
        }
    }
    let eps = fit.clip_epsilon;
    let mut out = NuisanceValues {
        phat: vec![0.0; m],
        mhat1: vec![0.0; m],
        mhat0: vec![0.0; m],
        ghat1: vec![0.0; m],
        ghat0: vec![0.0; m],
    };
    for t in 0..m {
        out.phat[t] = logistic(lp_p[t]).clamp(eps, 1.0 - eps);
        out.mhat1[t] = logistic(fit.beta11 + lp_m[t]);
        out.mhat0[t] = logistic(lp_m[t]);
        out.ghat1[t] = fit.beta21 + lp_g[t];
        out.ghat0[t] = lp_g[t];
    }
    Ok(out)
}

/// Parametric score evaluation on a row subset.
pub fn evaluate_score(
    ds: &Dataset,
    fit: &NuisanceFit,
    rows: &[usize],
) -> Result<PartialScores, ScoreError> {
    let values = nuisance_values(ds, fit, rows)?;
    let y: Vec<f64> = rows.iter().map(|&r| ds.y()[r]).collect();
    let d: Vec<f64> = rows.iter().map(|&r| ds.d()[r]).collect();
    let z: Vec<f64> = rows.iter().map(|&r| ds.z()[r]).collect();
    let (psi_a, psi_b) = score_from_values(&y, &d, &z, &values)?;
    Ok(PartialScores { rows: rows.to_vec(), psi_a, psi_b })
}

/// Point estimand `mean(psi_b) / mean(-psi_a)` from score arrays.
pub fn late_from_scores(psi_a: &[f64], psi_b: &[f64]) -> Result<f64, ScoreError> {
    let denom = -crate::stats::mean(psi_a);
    if libm::fabs(denom) < 1e-12 {
        return Err(ScoreError::WeakDenominator(libm::fabs(denom)));
    }
    Ok(crate::stats::mean(psi_b) / denom)
}

/// Plug-in LATE point estimand for a single full-sample fit.
pub fn late_point_estimand(ds: &Dataset, fit: &NuisanceFit) -> Result<f64, ScoreError> {
    let rows: Vec<usize> = (0..ds.n()).collect();
    let scores = evaluate_score(ds, fit, &rows)?;
    late_from_scores(&scores.psi_a, &scores.psi_b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Mat;
    use alloc::string::ToString;

    fn values_one(p: f64, m1: f64, m0: f64, g1: f64, g0: f64) -> NuisanceValues {
        NuisanceValues {
            phat: vec![p],
            mhat1: vec![m1],
            mhat0: vec![m0],
            ghat1: vec![g1],
            ghat0: vec![g0],
        }
    }

    #[test]
    fn psi_b_direct_substitution() {
        // Z=1, g1=2, g0=1, p=1/2, Y=3: psi_b = 1 + (3-2)/0.5 = 3
        let v = values_one(0.5, 0.6, 0.4, 2.0, 1.0);
        let (_, psi_b) = score_from_values(&[3.0], &[1.0], &[1.0], &v).unwrap();
        assert_eq!(psi_b[0], 3.0);
    }

    #[test]
    fn psi_a_with_zero_first_stage_residual() {
        // Z=1 and D = m1 exactly: psi_a = -(m1 - m0)
        let v = values_one(0.5, 0.75, 0.25, 0.0, 0.0);
        let (psi_a, _) = score_from_values(&[0.0], &[0.75], &[1.0], &v).unwrap();
        assert_eq!(psi_a[0], -0.5);
    }

    #[test]
    fn linearity_matches_direct_plugin() {
        // direct evaluation of psi(theta) must equal psi_a * theta + psi_b
        let y = [1.4, -0.3, 2.2, 0.0];
        let d = [1.0, 0.0, 1.0, 0.0];
        let z = [1.0, 1.0, 0.0, 0.0];
        let v = NuisanceValues {
            phat: vec![0.3, 0.6, 0.5, 0.45],
            mhat1: vec![0.7, 0.6, 0.8, 0.55],
            mhat0: vec![0.2, 0.3, 0.4, 0.25],
            ghat1: vec![1.0, 0.5, 1.5, 0.2],
            ghat0: vec![0.4, 0.1, 0.9, -0.2],
        };
        let (pa, pb) = score_from_values(&y, &d, &z, &v).unwrap();
        for &theta in &[-2.0, 0.0, 0.7, 3.3] {
            for i in 0..4 {
                let p = v.phat[i];
                let direct = (v.ghat1[i] - v.ghat0[i])
                    + z[i] * (y[i] - v.ghat1[i]) / p
                    - (1.0 - z[i]) * (y[i] - v.ghat0[i]) / (1.0 - p)
                    - theta
                        * ((v.mhat1[i] - v.mhat0[i])
                            + z[i] * (d[i] - v.mhat1[i]) / p
                            - (1.0 - z[i]) * (d[i] - v.mhat0[i]) / (1.0 - p));
                assert!((pa[i] * theta + pb[i] - direct).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn translation_of_outcome_and_reduced_form_cancels() {
        let y = [1.0, 2.0, -0.5];
        let d = [1.0, 0.0, 1.0];
        let z = [0.0, 1.0, 1.0];
        let v = NuisanceValues {
            phat: vec![0.4, 0.5, 0.6],
            mhat1: vec![0.8, 0.7, 0.9],
            mhat0: vec![0.1, 0.2, 0.3],
            ghat1: vec![0.9, 1.1, 0.3],
            ghat0: vec![0.2, 0.6, -0.1],
        };
        let (pa, pb) = score_from_values(&y, &d, &z, &v).unwrap();
        let c = 17.25;
        let y2: Vec<f64> = y.iter().map(|&v| v + c).collect();
        let v2 = NuisanceValues {
            ghat1: v.ghat1.iter().map(|&g| g + c).collect(),
            ghat0: v.ghat0.iter().map(|&g| g + c).collect(),
            ..v.clone()
        };
        let (pa2, pb2) = score_from_values(&y2, &d, &z, &v2).unwrap();
        assert_eq!(pa, pa2);
        for i in 0..3 {
            assert!((pb[i] - pb2[i]).abs() < 1e-12);
        }
    }

    fn tiny_dataset() -> Dataset {
        let x = Mat::from_columns(&[
            vec![0.5, -1.0, 0.25, 2.0, -0.75, 1.5],
            vec![-0.2, 0.3, 1.1, -0.6, 0.9, 0.05],
        ])
        .unwrap();
        Dataset::new(
            vec![1.0, 0.0, 2.0, 1.5, -0.5, 0.75],
            vec![1.0, 0.0, 1.0, 1.0, 0.0, 0.0],
            vec![1.0, 0.0, 0.0, 1.0, 1.0, 0.0],
            x,
            vec!["x1".to_string(), "x2".to_string()],
            None,
        )
        .unwrap()
    }

    #[test]
    fn parametric_layer_matches_hand_formula() {
        let ds = tiny_dataset();
        let fit = NuisanceFit {
            beta11: 0.8,
            beta12: vec![0.5, -0.25],
            beta21: 1.2,
            beta22: vec![0.3, 0.0],
            gamma: vec![0.1, 0.2],
            clip_epsilon: 0.01,
        };
        let rows = [0usize, 3, 5];
        let scores = evaluate_score(&ds, &fit, &rows).unwrap();
        for (t, &r) in rows.iter().enumerate() {
            let x1 = ds.x().get(r, 0);
            let x2 = ds.x().get(r, 1);
            let p = logistic(0.1 * x1 + 0.2 * x2).clamp(0.01, 0.99);
            let m1 = logistic(0.8 + 0.5 * x1 - 0.25 * x2);
            let m0 = logistic(0.5 * x1 - 0.25 * x2);
            let g1 = 1.2 + 0.3 * x1;
            let g0 = 0.3 * x1;
            let (zi, yi, di) = (ds.z()[r], ds.y()[r], ds.d()[r]);
            let want_b =
                (g1 - g0) + zi * (yi - g1) / p - (1.0 - zi) * (yi - g0) / (1.0 - p);
            let want_a = -((m1 - m0) + zi * (di - m1) / p - (1.0 - zi) * (di - m0) / (1.0 - p));
            assert!((scores.psi_b[t] - want_b).abs() < 1e-14);
            assert!((scores.psi_a[t] - want_a).abs() < 1e-14);
        }
    }

    #[test]
    fn clipping_neutrality_when_inactive() {
        let ds = tiny_dataset();
        let mk = |eps| NuisanceFit {
            beta11: 0.2,
            beta12: vec![0.1, 0.1],
            beta21: 0.5,
            beta22: vec![0.2, -0.1],
            gamma: vec![0.05, -0.04], // |lp| small: logistic stays well inside
            clip_epsilon: eps,
        };
        let rows: Vec<usize> = (0..ds.n()).collect();
        let a = evaluate_score(&ds, &mk(0.01), &rows).unwrap();
        let b = evaluate_score(&ds, &mk(1e-9), &rows).unwrap();
        assert_eq!(a.psi_a, b.psi_a);
        assert_eq!(a.psi_b, b.psi_b);
    }

    #[test]
    fn clipping_engages_on_extreme_propensity() {
        let ds = tiny_dataset();
        let fit = NuisanceFit {
            beta11: 0.0,
            beta12: vec![0.0, 0.0],
            beta21: 0.0,
            beta22: vec![0.0, 0.0],
            gamma: vec![50.0, 0.0], // saturates the propensity
            clip_epsilon: 0.01,
        };
        let rows: Vec<usize> = (0..ds.n()).collect();
        let vals = nuisance_values(&ds, &fit, &rows).unwrap();
        for &p in &vals.phat {
            assert!((0.01..=0.99).contains(&p));
        }
        assert!(vals.phat.iter().any(|&p| p == 0.99 || p == 0.01));
    }

    #[test]
    fn perfect_compliance_estimand_is_itt_mean() {
        // D = Z, m1 = 1, m0 = 0, p = 1/2: psi_a = -1 for every unit, so the
        // estimand is exactly mean(psi_b)
        let n = 8;
        let z: Vec<f64> = (0..n).map(|i| f64::from(i % 2 == 0)).collect();
        let d = z.clone();
        let y: Vec<f64> = (0..n).map(|i| i as f64 * 0.3 + z[i]).collect();
        let v = NuisanceValues {
            phat: vec![0.5; n],
            mhat1: vec![1.0; n],
            mhat0: vec![0.0; n],
            ghat1: vec![0.6; n],
            ghat0: vec![0.1; n],
        };
        let (pa, pb) = score_from_values(&y, &d, &z, &v).unwrap();
        assert!(pa.iter().all(|&a| (a + 1.0).abs() < 1e-15));
        let est = late_from_scores(&pa, &pb).unwrap();
        assert!((est - crate::stats::mean(&pb)).abs() < 1e-14);
    }

    #[test]
    fn weak_denominator_is_an_error() {
        let pa = vec![1.0, -1.0, 1.0, -1.0];
        let pb = vec![0.5, 0.5, 0.5, 0.5];
        assert!(matches!(late_from_scores(&pa, &pb), Err(ScoreError::WeakDenominator(_))));
    }

    #[test]
    fn dimension_mismatches_are_rejected() {
        let ds = tiny_dataset();
        let fit = NuisanceFit {
            beta11: 0.0,
            beta12: vec![0.0; 3], // wrong: p = 2
            beta21: 0.0,
            beta22: vec![0.0; 2],
            gamma: vec![0.0; 2],
            clip_epsilon: 0.01,
        };
        let rows: Vec<usize> = (0..ds.n()).collect();
        assert!(matches!(
            evaluate_score(&ds, &fit, &rows),
            Err(ScoreError::Dimension { .. })
        ));
        let fit_bad_eps = NuisanceFit { beta12: vec![0.0; 2], clip_epsilon: 0.6, ..fit };
        assert!(matches!(
            evaluate_score(&ds, &fit_bad_eps, &rows),
            Err(ScoreError::BadClip(_))
        ));
    }
}
