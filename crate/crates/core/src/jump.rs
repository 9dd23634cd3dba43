//! Intraday jump detection via the ratio of bipower variation to
//! realized variance.
//!
//! On a day of M intraday returns, realized variance converges to
//! integrated variance plus squared jumps while bipower variation is
//! jump-robust, so 1 - BV/RV concentrates above zero only when the day
//! jumped. The studentised statistic uses tripower quarticity for the
//! variance estimate and is compared against a one-sided normal
//! quantile.

use chrono::NaiveDate;
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::gamma::gamma;
use std::f64::consts::PI;
use std::sync::OnceLock;
use thiserror::Error;

use crate::market_data::ReturnPanel;

#[derive(Debug, Error)]
pub enum JumpError {
    #[error("day has no returns")]
    EmptyDay,
    #[error("statistic needs at least {needed} returns, got {got}")]
    TooFewReturns { needed: usize, got: usize },
    #[error("significance level {0} must lie in (0, 0.5)")]
    InvalidAlpha(f64),
    #[error("instrument index {0} out of range")]
    BadInstrument(usize),
}

/// `mu_{4/3} = 2^{2/3} Gamma(7/6) / Gamma(1/2)`, the 4/3 absolute moment
/// of a standard normal.
pub fn mu_four_thirds() -> f64 {
    static MU: OnceLock<f64> = OnceLock::new();
    *MU.get_or_init(|| 2f64.powf(2.0 / 3.0) * gamma(7.0 / 6.0) / gamma(0.5))
}

/// Variance constant of the studentised ratio statistic:
/// `(pi/2)^2 + pi - 5`.
pub fn bns_variance_constant() -> f64 {
    (PI / 2.0) * (PI / 2.0) + PI - 5.0
}

/// Sum of squared returns.
pub fn realized_variance(returns: &[f64]) -> Result<f64, JumpError> {
    if returns.is_empty() {
        return Err(JumpError::EmptyDay);
    }
    Ok(returns.iter().map(|r| r * r).sum())
}

/// `(pi/2) * (M/(M-1)) * sum_{i=2}^{M} |r_i| |r_{i-1}|`.
pub fn bipower_variation(returns: &[f64]) -> Result<f64, JumpError> {
    let m = returns.len();
    if m < 2 {
        return Err(JumpError::TooFewReturns { needed: 2, got: m });
    }
    let sum: f64 = returns.windows(2).map(|w| w[0].abs() * w[1].abs()).sum();
    Ok((PI / 2.0) * (m as f64 / (m as f64 - 1.0)) * sum)
}

/// `mu_{4/3}^{-3} * (M^2/(M-2)) * sum_{i=3}^{M} |r_{i-2} r_{i-1} r_i|^{4/3}`.
pub fn tripower_quarticity(returns: &[f64]) -> Result<f64, JumpError> {
    let m = returns.len();
    if m < 3 {
        return Err(JumpError::TooFewReturns { needed: 3, got: m });
    }
    let sum: f64 = returns
        .windows(3)
        .map(|w| {
            w[0].abs().powf(4.0 / 3.0) * w[1].abs().powf(4.0 / 3.0) * w[2].abs().powf(4.0 / 3.0)
        })
        .sum();
    let mf = m as f64;
    Ok(mu_four_thirds().powi(-3) * (mf * mf / (mf - 2.0)) * sum)
}

/// One-sided rejection threshold `Phi^{-1}(1 - alpha)`.
pub fn z_threshold(alpha: f64) -> Result<f64, JumpError> {
    if !(alpha > 0.0 && alpha < 0.5) {
        return Err(JumpError::InvalidAlpha(alpha));
    }
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    Ok(normal.inverse_cdf(1.0 - alpha))
}

/// Full test output for one day of returns.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BnsResult {
    pub m_intraday: usize,
    pub rv: f64,
    pub bv: f64,
    pub tp: f64,
    pub z: f64,
    pub alpha: f64,
    pub z_threshold: f64,
    pub is_jump: bool,
    /// A day with zero RV or zero BV has no identified ratio; z is
    /// reported as 0 and the day never counts as a jump.
    pub degenerate: bool,
}

/// Runs the jump test on one day of intraday returns.
pub fn bns_test(returns: &[f64], alpha: f64) -> Result<BnsResult, JumpError> {
    let m = returns.len();
    if m < 3 {
        return Err(JumpError::TooFewReturns { needed: 3, got: m });
    }
    let threshold = z_threshold(alpha)?;
    let rv = realized_variance(returns)?;
    let bv = bipower_variation(returns)?;
    let tp = tripower_quarticity(returns)?;

    if rv == 0.0 || bv == 0.0 {
        return Ok(BnsResult {
            m_intraday: m,
            rv,
            bv,
            tp,
            z: 0.0,
            alpha,
            z_threshold: threshold,
            is_jump: false,
            degenerate: true,
        });
    }
    let mf = m as f64;
    let quarticity_ratio = (tp / (bv * bv)).max(1.0);
    let z = (1.0 - bv / rv) / (bns_variance_constant() * (1.0 / mf) * quarticity_ratio).sqrt();
    Ok(BnsResult {
        m_intraday: m,
        rv,
        bv,
        tp,
        z,
        alpha,
        z_threshold: threshold,
        is_jump: z > threshold,
        degenerate: false,
    })
}

/// Jump test outcome for one trading day of a panel instrument.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JumpTestResult {
    pub date: NaiveDate,
    pub bns: BnsResult,
}

/// Runs the jump test on every day of one instrument in a return panel.
pub fn bns_by_day(
    panel: &ReturnPanel,
    instrument: usize,
    alpha: f64,
) -> Result<Vec<JumpTestResult>, JumpError> {
    if instrument >= panel.instruments().len() {
        return Err(JumpError::BadInstrument(instrument));
    }
    // Validate alpha and the day shape once up front so the parallel map
    // cannot fail.
    z_threshold(alpha)?;
    let m = panel.returns_per_day();
    if m < 3 {
        return Err(JumpError::TooFewReturns { needed: 3, got: m });
    }
    let dates = panel.dates();
    Ok((0..panel.n_days())
        .into_par_iter()
        .map(|d| {
            let bns =
                bns_test(panel.day_returns(instrument, d), alpha).expect("shape validated above");
            JumpTestResult {
                date: dates[d],
                bns,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    /// Standard-normal variates from a counter; deterministic and cheap.
    fn gaussian(seed: u64, n: usize) -> Vec<f64> {
        let mut state = seed.wrapping_mul(0x9E3779B97F4A7C15) | 1;
        let mut uniform = || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            ((state >> 11) as f64 + 0.5) / (1u64 << 53) as f64
        };
        (0..n)
            .map(|_| {
                let (u1, u2) = (uniform(), uniform());
                (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
            })
            .collect()
    }

    #[test]
    fn moment_constant_matches_gamma_oracle() {
        assert_abs_diff_eq!(mu_four_thirds(), 0.830860925029559, epsilon = 1e-12);
        assert_abs_diff_eq!(mu_four_thirds().powi(-3), 1.74347207453198, epsilon = 1e-11);
        assert_abs_diff_eq!(bns_variance_constant(), 0.608993753862133, epsilon = 1e-12);
    }

    #[test]
    fn thresholds_match_normal_quantiles() {
        assert_abs_diff_eq!(
            z_threshold(0.001).unwrap(),
            3.090232306167813,
            epsilon = 1e-6
        );
        assert_abs_diff_eq!(
            z_threshold(0.0025).unwrap(),
            2.807033768343811,
            epsilon = 1e-6
        );
        assert_abs_diff_eq!(
            z_threshold(0.05).unwrap(),
            1.6448536269514722,
            epsilon = 1e-6
        );
    }

    #[test]
    fn alpha_outside_its_range_errors() {
        for alpha in [0.0, -0.01, 0.5, 0.9] {
            assert!(matches!(
                z_threshold(alpha),
                Err(JumpError::InvalidAlpha(_))
            ));
        }
    }

    #[test]
    fn bipower_variation_on_a_two_return_day() {
        // (pi/2) * (2/1) * 0.01 * 0.01 = pi * 1e-4.
        let bv = bipower_variation(&[0.01, 0.01]).unwrap();
        assert_abs_diff_eq!(bv, PI * 1e-4, epsilon = 1e-18);
    }

    #[test]
    fn tripower_quarticity_on_constant_returns() {
        // All returns c: TP = mu^{-3} * M^2 * c^4.
        let c = 0.01f64;
        let tp = tripower_quarticity(&[c; 3]).unwrap();
        assert_abs_diff_eq!(tp, 15.6912486707879 * c.powi(4), epsilon = 1e-12);
    }

    #[test]
    fn shape_requirements() {
        assert!(matches!(realized_variance(&[]), Err(JumpError::EmptyDay)));
        assert!(matches!(
            bipower_variation(&[0.1]),
            Err(JumpError::TooFewReturns { needed: 2, .. })
        ));
        assert!(matches!(
            tripower_quarticity(&[0.1, 0.2]),
            Err(JumpError::TooFewReturns { needed: 3, .. })
        ));
        assert!(matches!(
            bns_test(&[0.1, 0.2], 0.01),
            Err(JumpError::TooFewReturns { needed: 3, .. })
        ));
    }

    #[test]
    fn zero_day_is_degenerate() {
        let out = bns_test(&[0.0; 47], 0.001).unwrap();
        assert!(out.degenerate);
        assert_eq!(out.z, 0.0);
        assert!(!out.is_jump);
        assert_eq!(out.rv, 0.0);
    }

    #[test]
    fn isolated_spike_with_zero_neighbours_is_degenerate() {
        // BV = 0 while RV > 0: the ratio statistic is not identified.
        let mut returns = vec![0.0; 47];
        returns[20] = 0.05;
        let out = bns_test(&returns, 0.001).unwrap();
        assert!(out.degenerate);
        assert!(out.rv > 0.0);
        assert_eq!(out.bv, 0.0);
        assert!(!out.is_jump);
    }

    #[test]
    fn constant_returns_hit_the_quarticity_floor() {
        // TP/BV^2 = mu^{-3}/(pi/2)^2 < 1, so the floor is active and the
        // denominator collapses to sqrt(C/M).
        let out = bns_test(&[0.01; 47], 0.001).unwrap();
        assert!(!out.degenerate);
        assert!(out.tp / (out.bv * out.bv) < 1.0);
        let expected = (1.0 - out.bv / out.rv) / (bns_variance_constant() * (1.0 / 47.0)).sqrt();
        assert_eq!(out.z, expected);
        assert!(out.z < 0.0, "pure bipower day must not look like a jump");
        assert!(!out.is_jump);
    }

    #[test]
    fn large_jump_on_a_diffusive_day_is_detected() {
        let sigma = 0.15f64 / (250f64 * 47f64).sqrt();
        for seed in 0..20u64 {
            let mut returns: Vec<f64> = gaussian(seed, 47).into_iter().map(|z| sigma * z).collect();
            returns[23] += 10.0 * sigma * 47f64.sqrt(); // ten daily sigmas
            let out = bns_test(&returns, 0.001).unwrap();
            assert!(out.is_jump, "seed {seed}: z = {}", out.z);
        }
    }

    #[test]
    fn z_grows_with_jump_size() {
        let sigma = 1e-3;
        let returns: Vec<f64> = gaussian(7, 47).into_iter().map(|z| sigma * z).collect();
        let mut last = f64::NEG_INFINITY;
        for mult in [0.0, 5.0, 15.0, 40.0] {
            let mut r = returns.clone();
            r[10] += mult * sigma;
            let z = bns_test(&r, 0.001).unwrap().z;
            assert!(z >= last, "z must not shrink as the jump grows");
            last = z;
        }
    }

    #[test]
    fn per_day_driver_attaches_dates() {
        use crate::market_data::{load_price_panel, LoadOptions};
        let path =
            std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/panel_missing.csv");
        let (panel, _) = load_price_panel(&path, &LoadOptions::default()).unwrap();
        let returns = crate::market_data::log_returns(&panel, 5).unwrap();
        let results = bns_by_day(&returns, 0, 0.001).unwrap();
        assert_eq!(results.len(), 2);
        assert_eq!(results[0].date, panel.dates()[0]);
        assert_eq!(results[0].bns.m_intraday, 47);
        for r in &results {
            assert!(r.bns.z.is_finite());
        }
        assert!(matches!(
            bns_by_day(&returns, 9, 0.001),
            Err(JumpError::BadInstrument(9))
        ));
    }

    #[test]
    fn rv_is_permutation_invariant_on_dyadic_returns() {
        // Returns that are small integers / 2^10: squares and their sums
        // are exact in f64, so any summation order agrees bitwise.
        let returns: Vec<f64> = (0..47).map(|i| ((i % 13) as f64 - 6.0) / 1024.0).collect();
        let mut reversed = returns.clone();
        reversed.reverse();
        assert_eq!(
            realized_variance(&returns).unwrap(),
            realized_variance(&reversed).unwrap()
        );
    }

    proptest! {
        #[test]
        fn quadratic_statistics_scale_exactly_under_dyadic_scaling(
            seed in 0u64..200,
            pow in -8i32..9,
        ) {
            let returns: Vec<f64> =
                gaussian(seed, 47).into_iter().map(|z| 1e-3 * z).collect();
            let c = (2f64).powi(pow);
            let scaled: Vec<f64> = returns.iter().map(|r| c * r).collect();
            // Power-of-two scaling commutes exactly with squares and
            // pairwise products; only the 4/3 power in TP rounds.
            prop_assert_eq!(
                realized_variance(&scaled).unwrap(),
                c * c * realized_variance(&returns).unwrap()
            );
            prop_assert_eq!(
                bipower_variation(&scaled).unwrap(),
                c * c * bipower_variation(&returns).unwrap()
            );
            let a = bns_test(&returns, 0.01).unwrap();
            let b = bns_test(&scaled, 0.01).unwrap();
            prop_assert!((a.z - b.z).abs() <= 1e-12 * a.z.abs().max(1.0));
            prop_assert_eq!(a.is_jump, b.is_jump);
        }

        #[test]
        fn floor_active_z_is_bitwise_scale_invariant(pow in -8i32..9) {
            // Constant returns keep TP/BV^2 below 1, so z depends only on
            // BV/RV, which dyadic scaling preserves exactly.
            let c = (2f64).powi(pow);
            let a = bns_test(&[0.01; 47], 0.01).unwrap();
            let b = bns_test(&[0.01 * c; 47], 0.01).unwrap();
            prop_assert_eq!(a.z, b.z);
        }

        #[test]
        fn z_is_nearly_invariant_under_generic_scaling(
            seed in 0u64..200,
            c in 0.01f64..100.0,
        ) {
            let returns: Vec<f64> =
                gaussian(seed, 47).into_iter().map(|z| 1e-3 * z).collect();
            let scaled: Vec<f64> = returns.iter().map(|r| c * r).collect();
            let a = bns_test(&returns, 0.01).unwrap();
            let b = bns_test(&scaled, 0.01).unwrap();
            prop_assert!((a.z - b.z).abs() <= 1e-9 * a.z.abs().max(1.0));
        }
    }
}
