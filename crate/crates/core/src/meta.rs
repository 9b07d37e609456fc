//! Inverse-variance pooling of log hazard ratios, fixed-effects and
//! random-effects with a REML between-study variance.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::survfit::EstimateRecord;

/// Normal quantile used for every confidence interval.
pub const Z_95: f64 = 1.96;

const REML_TOL: f64 = 1e-10;
const REML_MAX_ITER: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolingMethod {
    Fixed,
    RandomReml,
}

impl PoolingMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            PoolingMethod::Fixed => "fixed",
            PoolingMethod::RandomReml => "random_reml",
        }
    }
}

impl std::str::FromStr for PoolingMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fixed" => Ok(PoolingMethod::Fixed),
            "random_reml" => Ok(PoolingMethod::RandomReml),
            other => Err(Error::Config(format!("unknown pooling method {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetaResult {
    pub pooled_log_hr: f64,
    pub pooled_se: f64,
    pub tau2: f64,
    pub ci_low_hr: f64,
    pub ci_high_hr: f64,
    pub method: PoolingMethod,
    pub k: usize,
    /// False only when the REML iteration hit its cap.
    pub converged: bool,
}

impl MetaResult {
    pub fn pooled_hr(&self) -> f64 {
        self.pooled_log_hr.exp()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tau2Estimate {
    pub tau2: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn weighted(estimates: &[EstimateRecord], tau2: f64, method: PoolingMethod, converged: bool) -> MetaResult {
    let (mut sw, mut swy) = (0.0, 0.0);
    for e in estimates {
        let w = 1.0 / (e.se * e.se + tau2);
        sw += w;
        swy += w * e.log_hr;
    }
    let pooled = swy / sw;
    let se = sw.recip().sqrt();
    MetaResult {
        pooled_log_hr: pooled,
        pooled_se: se,
        tau2,
        ci_low_hr: (pooled - Z_95 * se).exp(),
        ci_high_hr: (pooled + Z_95 * se).exp(),
        method,
        k: estimates.len(),
        converged,
    }
}

/// Fixed-effects inverse-variance pool (between-study variance 0).
pub fn pool_fixed(estimates: &[EstimateRecord]) -> Result<MetaResult> {
    if estimates.is_empty() {
        return Err(Error::Empty("no studies to pool"));
    }
    Ok(weighted(estimates, 0.0, PoolingMethod::Fixed, true))
}

/// REML estimate of the between-study variance by Fisher scoring, clamped
/// at zero. Starts from the method-of-moments value `max(0, s_y^2 - mean(v))`.
pub fn estimate_tau2_reml(estimates: &[EstimateRecord]) -> Result<Tau2Estimate> {
    let k = estimates.len();
    if k < 2 {
        return Err(Error::TooFewStudies(k));
    }
    let y: Vec<f64> = estimates.iter().map(|e| e.log_hr).collect();
    let v: Vec<f64> = estimates.iter().map(|e| e.se * e.se).collect();

    let mean_y = y.iter().sum::<f64>() / k as f64;
    let var_y = y.iter().map(|yi| (yi - mean_y).powi(2)).sum::<f64>() / (k - 1) as f64;
    let mean_v = v.iter().sum::<f64>() / k as f64;
    let mut tau2 = (var_y - mean_v).max(0.0);

    for iteration in 1..=REML_MAX_ITER {
        let w: Vec<f64> = v.iter().map(|vi| 1.0 / (vi + tau2)).collect();
        let sw: f64 = w.iter().sum();
        let sw2: f64 = w.iter().map(|wi| wi * wi).sum();
        let sw3: f64 = w.iter().map(|wi| wi * wi * wi).sum();
        let mu = w.iter().zip(&y).map(|(wi, yi)| wi * yi).sum::<f64>() / sw;
        // P = W - W 1 1' W / sum(w); y'PPy, tr(P) and tr(PP) for diagonal W.
        let ypp_y: f64 = w.iter().zip(&y).map(|(wi, yi)| (wi * (yi - mu)).powi(2)).sum();
        let tr_p = sw - sw2 / sw;
        let tr_pp = sw2 - 2.0 * sw3 / sw + (sw2 / sw).powi(2);
        let next = (tau2 + (ypp_y - tr_p) / tr_pp).max(0.0);
        let delta = (next - tau2).abs();
        tau2 = next;
        if delta < REML_TOL {
            return Ok(Tau2Estimate { tau2, iterations: iteration, converged: true });
        }
    }
    Ok(Tau2Estimate { tau2, iterations: REML_MAX_ITER, converged: false })
}

/// Random-effects inverse-variance pool with REML between-study variance
/// and a plain normal-quantile interval.
pub fn pool_random(estimates: &[EstimateRecord]) -> Result<MetaResult> {
    let t = estimate_tau2_reml(estimates)?;
    Ok(weighted(estimates, t.tau2, PoolingMethod::RandomReml, t.converged))
}

pub fn pool(estimates: &[EstimateRecord], method: PoolingMethod) -> Result<MetaResult> {
    match method {
        PoolingMethod::Fixed => pool_fixed(estimates),
        PoolingMethod::RandomReml => pool_random(estimates),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trial::Strategy;
    use proptest::prelude::*;
    use proptest::strategy::Strategy as PropStrategy;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn est(y: f64, se: f64) -> EstimateRecord {
        EstimateRecord::new(Strategy::Hypothetical, y, se, 10)
    }

    /// Restricted log-likelihood of the normal-normal model, up to a constant.
    fn restricted_loglik(y: &[f64], v: &[f64], tau2: f64) -> f64 {
        let w: Vec<f64> = v.iter().map(|vi| 1.0 / (vi + tau2)).collect();
        let sw: f64 = w.iter().sum();
        let mu = w.iter().zip(y).map(|(a, b)| a * b).sum::<f64>() / sw;
        let log_det: f64 = v.iter().map(|vi| (vi + tau2).ln()).sum();
        let quad: f64 = w.iter().zip(y).map(|(wi, yi)| wi * (yi - mu).powi(2)).sum();
        -0.5 * (log_det + sw.ln() + quad)
    }

    fn grid_tau2(y: &[f64], v: &[f64]) -> f64 {
        (0..=1_000_000)
            .map(|i| i as f64 * 1e-5)
            .map(|t| (t, restricted_loglik(y, v, t)))
            .fold((0.0, f64::NEG_INFINITY), |best, cur| if cur.1 > best.1 { cur } else { best })
            .0
    }

    #[test]
    fn fixed_closed_forms() {
        let r = pool_fixed(&[est(0.5, 0.2), est(0.5, 0.2)]).unwrap();
        assert!((r.pooled_log_hr - 0.5).abs() < 1e-12);
        assert!((r.pooled_se - 0.2 / 2f64.sqrt()).abs() < 1e-12);

        let r = pool_fixed(&[est(0.0, 1.0), est(1.0, 1.0)]).unwrap();
        assert!((r.pooled_log_hr - 0.5).abs() < 1e-12);
        assert!((r.pooled_se - 0.5f64.sqrt()).abs() < 1e-12);

        let r = pool_fixed(&[est(-0.3, 0.15)]).unwrap();
        assert!((r.pooled_log_hr + 0.3).abs() < 1e-12);
        assert!((r.ci_low_hr - (-0.3 - 1.96 * 0.15f64).exp()).abs() < 1e-12);
        assert!((r.ci_high_hr - (-0.3 + 1.96 * 0.15f64).exp()).abs() < 1e-12);

        assert!(matches!(pool_fixed(&[]), Err(Error::Empty(_))));
    }

    #[test]
    fn reml_boundary_and_errors() {
        let same = [est(0.2, 0.1), est(0.2, 0.3), est(0.2, 0.2)];
        assert_eq!(estimate_tau2_reml(&same).unwrap().tau2, 0.0);
        assert!(matches!(estimate_tau2_reml(&[est(0.1, 0.1)]), Err(Error::TooFewStudies(1))));
        assert!(matches!(pool_random(&[]), Err(Error::TooFewStudies(0))));
    }

    #[test]
    fn reml_matches_grid_search() {
        let y = [-1.0, 1.0];
        let v = [1.0, 1.0];
        let oracle = grid_tau2(&y, &v);
        assert!((oracle - 1.0).abs() < 1e-4);
        let fit = estimate_tau2_reml(&[est(-1.0, 1.0), est(1.0, 1.0)]).unwrap();
        assert!(fit.converged);
        assert!((fit.tau2 - oracle).abs() < 1e-4, "{} vs {}", fit.tau2, oracle);

        let r = pool_random(&[est(-1.0, 1.0), est(1.0, 1.0)]).unwrap();
        assert!(r.pooled_log_hr.abs() < 1e-12);
        assert!((r.pooled_se - ((1.0 + oracle) / 2.0).sqrt()).abs() < 1e-4);
    }

    #[test]
    fn reml_matches_grid_search_unequal_variances() {
        let studies = [est(-0.6, 0.2), est(-0.1, 0.25), est(-0.9, 0.3), est(0.2, 0.15), est(-0.4, 0.4)];
        let y: Vec<f64> = studies.iter().map(|e| e.log_hr).collect();
        let v: Vec<f64> = studies.iter().map(|e| e.se * e.se).collect();
        let oracle = grid_tau2(&y, &v);
        let fit = estimate_tau2_reml(&studies).unwrap();
        assert!((fit.tau2 - oracle).abs() < 1e-4, "{} vs {}", fit.tau2, oracle);
    }

    #[test]
    fn reml_recovers_tau2() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let effect = Normal::new(0.6f64.ln(), 0.03f64.sqrt()).unwrap();
        let reps = 1_000;
        let mut total = 0.0;
        for _ in 0..reps {
            let studies: Vec<_> = (0..8)
                .map(|_| {
                    let theta = effect.sample(&mut rng);
                    let y = Normal::new(theta, 0.1).unwrap().sample(&mut rng);
                    est(y, 0.1)
                })
                .collect();
            total += estimate_tau2_reml(&studies).unwrap().tau2;
        }
        let mean = total / reps as f64;
        assert!((mean - 0.03).abs() < 0.01, "{mean}");
    }

    #[test]
    fn random_reduces_to_fixed_without_heterogeneity() {
        let same = [est(0.2, 0.1), est(0.2, 0.3), est(0.2, 0.2)];
        let f = pool_fixed(&same).unwrap();
        let r = pool_random(&same).unwrap();
        assert_eq!(f.pooled_log_hr, r.pooled_log_hr);
        assert_eq!(f.pooled_se, r.pooled_se);
        assert_eq!(f.ci_low_hr, r.ci_low_hr);
    }

    #[test]
    fn equal_se_gives_arithmetic_mean() {
        let studies = [est(-0.5, 0.2), est(0.3, 0.2), est(-0.1, 0.2), est(0.9, 0.2)];
        let r = pool_random(&studies).unwrap();
        assert!(r.tau2 > 0.0);
        assert!((r.pooled_log_hr - 0.15).abs() < 1e-12);
    }

    fn arb_studies() -> impl PropStrategy<Value = Vec<EstimateRecord>> {
        proptest::collection::vec((-2.0f64..2.0, 0.02f64..1.0), 2..12)
            .prop_map(|v| v.into_iter().map(|(y, se)| est(y, se)).collect())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(300))]

        #[test]
        fn pooling_invariants(studies in arb_studies(), rot in 0usize..12) {
            let f = pool_fixed(&studies).unwrap();
            let r = pool_random(&studies).unwrap();

            let sw: f64 = studies.iter().map(|e| e.se.powi(-2)).sum();
            let mean = studies.iter().map(|e| e.log_hr * e.se.powi(-2)).sum::<f64>() / sw;
            prop_assert!((f.pooled_log_hr - mean).abs() < 1e-12);

            prop_assert!(r.tau2 >= 0.0);
            prop_assert!(r.pooled_se >= f.pooled_se);
            for m in [f, r] {
                prop_assert!(m.pooled_se > 0.0);
                prop_assert!(m.ci_low_hr < m.pooled_hr() && m.pooled_hr() < m.ci_high_hr);
            }

            let mut permuted = studies.clone();
            permuted.rotate_left(rot % studies.len());
            permuted.reverse();
            let fp = pool_fixed(&permuted).unwrap();
            let rp = pool_random(&permuted).unwrap();
            prop_assert!((fp.pooled_log_hr - f.pooled_log_hr).abs() < 1e-12);
            prop_assert!((rp.tau2 - r.tau2).abs() < 1e-9);
            prop_assert!((rp.pooled_log_hr - r.pooled_log_hr).abs() < 1e-9);
        }
    }
}
