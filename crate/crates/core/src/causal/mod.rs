//! Causal return to trending: a quasi-Poisson fixed-effects model
//!
//! `log E[Y] = alpha + lambda D + tau t + gamma D t + beta E (+ rho D10) + xi_h`
//!
//! fitted on a hashtag by 5-minute-bin panel, with standard errors
//! clustered on hashtag.

pub mod glm;
pub mod panel;

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};
use thiserror::Error;

pub use glm::{fit_poisson, Design, GlmFit};
pub use panel::{
    build_panel, event_study_means, hashtag_panel, ModelSpec, OutcomeMode, Panel, PanelRow,
    Strategy,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CausalError {
    #[error("hashtag {0} never trended")]
    NoTrendingInterval(String),
    #[error("panel has no rows")]
    EmptyPanel,
    #[error("design is rank deficient in terms {0:?}")]
    RankDeficient(Vec<String>),
    #[error("IRLS did not converge after {iterations} iterations (score max-norm {score_max:e})")]
    NotConverged { iterations: usize, score_max: f64 },
    #[error("coefficient {term} = {value} suggests separation")]
    SeparationSuspected { term: String, value: f64 },
    #[error("need at least 2 clusters, found {0}")]
    TooFewClusters(usize),
    #[error("term {0} is not in the fit")]
    TermMissing(String),
    #[error("linear combination has zero variance")]
    ZeroVariance,
    #[error("invalid model specification: {0}")]
    InvalidSpec(String),
}

pub const ALPHA: &str = "alpha";
pub const LAMBDA: &str = "lambda";
pub const TAU: &str = "tau";
pub const GAMMA: &str = "gamma";
pub const BETA: &str = "beta";
pub const RHO: &str = "rho";
pub const FE_PREFIX: &str = "fe:";

/// Lays out the design for a panel. Hashtags are ordered by key; the first
/// is the reference level absorbed by `alpha`.
pub fn panel_design(rows: &[PanelRow], include_top10: bool) -> Result<Design, CausalError> {
    if rows.is_empty() {
        return Err(CausalError::EmptyPanel);
    }
    let mut hashtags: Vec<&str> = rows.iter().map(|r| r.hashtag.as_str()).collect();
    hashtags.sort_unstable();
    hashtags.dedup();
    let cluster_of: BTreeMap<&str, usize> =
        hashtags.iter().enumerate().map(|(i, h)| (*h, i)).collect();

    let mut terms: Vec<String> = [ALPHA, LAMBDA, TAU, GAMMA, BETA]
        .iter()
        .map(|s| s.to_string())
        .collect();
    if include_top10 {
        terms.push(RHO.into());
    }
    let core = terms.len();
    terms.extend(hashtags.iter().skip(1).map(|h| format!("{FE_PREFIX}{h}")));

    let mut x = DMatrix::<f64>::zeros(rows.len(), terms.len());
    for (i, r) in rows.iter().enumerate() {
        let d = f64::from(r.d);
        let t = r.t as f64;
        x[(i, 0)] = 1.0;
        x[(i, 1)] = d;
        x[(i, 2)] = t;
        x[(i, 3)] = d * t;
        x[(i, 4)] = r.e as f64;
        if include_top10 {
            x[(i, 5)] = f64::from(r.d10.unwrap_or(0));
        }
        let c = cluster_of[r.hashtag.as_str()];
        if c > 0 {
            x[(i, core + c - 1)] = 1.0;
        }
    }
    Ok(Design {
        terms,
        x,
        y: rows.iter().map(|r| r.y as f64).collect(),
        clusters: rows.iter().map(|r| cluster_of[r.hashtag.as_str()]).collect(),
    })
}

/// Fits the trending model on a panel.
pub fn fit_quasipoisson(panel: &[PanelRow], spec: &ModelSpec) -> Result<GlmFit, CausalError> {
    fit_poisson(&panel_design(panel, spec.include_top10)?)
}

/// Terms other than the hashtag fixed effects.
pub fn core_terms(fit: &GlmFit) -> Vec<&str> {
    fit.terms
        .iter()
        .map(String::as_str)
        .filter(|t| !t.starts_with(FE_PREFIX))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WaldTest {
    pub estimate: f64,
    pub se: f64,
    pub statistic: f64,
    pub p_value: f64,
}

/// Wald test of `sum_j w_j beta_j = 0` with the cluster-robust covariance,
/// referred to a chi-square with one degree of freedom.
pub fn wald_test(fit: &GlmFit, combination: &[(&str, f64)]) -> Result<WaldTest, CausalError> {
    let p = fit.terms.len();
    let mut c = nalgebra::DVector::<f64>::zeros(p);
    for (term, w) in combination {
        let i = fit
            .index(term)
            .ok_or_else(|| CausalError::TermMissing(term.to_string()))?;
        c[i] += w;
    }
    let beta = nalgebra::DVector::from_column_slice(&fit.coefficients);
    let estimate = c.dot(&beta);
    let var = (c.transpose() * &fit.cov_cluster * &c)[(0, 0)];
    if var.is_nan() || var <= 0.0 {
        return Err(CausalError::ZeroVariance);
    }
    let statistic = estimate * estimate / var;
    let chi2 = ChiSquared::new(1.0).expect("one degree of freedom");
    Ok(WaldTest {
        estimate,
        se: var.sqrt(),
        statistic,
        p_value: chi2.sf(statistic),
    })
}

pub const Z_95: f64 = 1.96;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EffectEstimate {
    pub effect: String,
    pub coefficient: f64,
    pub se: f64,
    /// 100 (exp(coef) - 1).
    pub percent_increase: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub p_value: f64,
}

fn effect(name: &str, test: WaldTest) -> EffectEstimate {
    let pct = |v: f64| 100.0 * (v.exp() - 1.0);
    EffectEstimate {
        effect: name.to_string(),
        coefficient: test.estimate,
        se: test.se,
        percent_increase: pct(test.estimate),
        ci_low: pct(test.estimate - Z_95 * test.se),
        ci_high: pct(test.estimate + Z_95 * test.se),
        p_value: test.p_value,
    }
}

/// Percent increase with 95% interval for the trending effect, and, when
/// the fit has a top-10 term, the top-10 boost and the total top-10 return.
pub fn trending_effect_report(fit: &GlmFit) -> Result<Vec<EffectEstimate>, CausalError> {
    let mut out = vec![effect(LAMBDA, wald_test(fit, &[(LAMBDA, 1.0)])?)];
    if fit.index(RHO).is_some() {
        out.push(effect(RHO, wald_test(fit, &[(RHO, 1.0)])?));
        out.push(effect(
            "lambda+rho",
            wald_test(fit, &[(LAMBDA, 1.0), (RHO, 1.0)])?,
        ));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TermSummary {
    pub term: String,
    pub estimate: f64,
    pub se: f64,
}

/// Serializable view of a fit, as written to `fit.json`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitSummary {
    pub spec: ModelSpec,
    pub coefficients: Vec<TermSummary>,
    pub fixed_effects: BTreeMap<String, f64>,
    /// Cluster-robust covariance over the non-fixed-effect terms, row-major.
    pub cov_cluster: Vec<Vec<f64>>,
    pub dispersion: f64,
    pub deviance: f64,
    pub n_obs: usize,
    pub n_clusters: usize,
    pub iterations: usize,
    pub converged: bool,
    pub score_max: f64,
    pub effects: Vec<EffectEstimate>,
    pub excluded_hashtags: Vec<String>,
}

pub fn summarize_fit(
    fit: &GlmFit,
    spec: &ModelSpec,
    excluded: &[String],
) -> Result<FitSummary, CausalError> {
    let core: Vec<usize> = (0..fit.terms.len())
        .filter(|&i| !fit.terms[i].starts_with(FE_PREFIX))
        .collect();
    Ok(FitSummary {
        spec: *spec,
        coefficients: core
            .iter()
            .map(|&i| TermSummary {
                term: fit.terms[i].clone(),
                estimate: fit.coefficients[i],
                se: fit.cov_cluster[(i, i)].sqrt(),
            })
            .collect(),
        fixed_effects: fit
            .terms
            .iter()
            .zip(&fit.coefficients)
            .filter_map(|(t, &c)| t.strip_prefix(FE_PREFIX).map(|h| (h.to_string(), c)))
            .collect(),
        cov_cluster: core
            .iter()
            .map(|&i| core.iter().map(|&j| fit.cov_cluster[(i, j)]).collect())
            .collect(),
        dispersion: fit.dispersion,
        deviance: fit.deviance,
        n_obs: fit.n_obs,
        n_clusters: fit.n_clusters,
        iterations: fit.iterations,
        converged: fit.converged,
        score_max: fit.score_max,
        effects: trending_effect_report(fit)?,
        excluded_hashtags: excluded.to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fake_fit(coefs: &[(&str, f64)], cov: DMatrix<f64>) -> GlmFit {
        GlmFit {
            terms: coefs.iter().map(|(t, _)| t.to_string()).collect(),
            coefficients: coefs.iter().map(|(_, c)| *c).collect(),
            cov_model: cov.clone(),
            cov_cluster: cov,
            dispersion: 1.0,
            deviance: 0.0,
            deviance_trace: vec![],
            score_max: 0.0,
            n_obs: 10,
            n_clusters: 2,
            iterations: 1,
            converged: true,
            fitted: vec![],
        }
    }

    #[test]
    fn single_term_wald_is_squared_z() {
        let cov = DMatrix::from_row_slice(2, 2, &[0.04, 0.01, 0.01, 0.09]);
        let fit = fake_fit(&[(LAMBDA, 0.5), (RHO, 0.1)], cov);
        let w = wald_test(&fit, &[(LAMBDA, 1.0)]).unwrap();
        assert!((w.statistic - (0.5f64 / 0.2).powi(2)).abs() < 1e-12);
        assert!((w.p_value - 0.012419330651552318).abs() < 1e-9);
    }

    #[test]
    fn null_combination() {
        let cov = DMatrix::from_row_slice(2, 2, &[0.04, 0.0, 0.0, 0.09]);
        let fit = fake_fit(&[(LAMBDA, 0.7), (RHO, -0.7)], cov);
        let w = wald_test(&fit, &[(LAMBDA, 1.0), (RHO, 1.0)]).unwrap();
        assert!(w.statistic.abs() < 1e-20);
        assert!((w.p_value - 1.0).abs() < 1e-9);
    }

    #[test]
    fn missing_term() {
        let fit = fake_fit(&[(LAMBDA, 0.7)], DMatrix::identity(1, 1));
        assert_eq!(
            wald_test(&fit, &[(RHO, 1.0)]),
            Err(CausalError::TermMissing(RHO.into()))
        );
    }

    #[test]
    fn effect_percentages() {
        let zero = fake_fit(&[(LAMBDA, 0.0)], DMatrix::from_element(1, 1, 0.01));
        let r = trending_effect_report(&zero).unwrap();
        assert_eq!(r[0].percent_increase, 0.0);
        assert!(r[0].ci_low < 0.0 && r[0].ci_high > 0.0);

        let turkey = fake_fit(
            &[(LAMBDA, 2.3f64.ln()), (RHO, 1.04f64.ln())],
            DMatrix::from_row_slice(2, 2, &[0.01, 0.0, 0.0, 0.01]),
        );
        let r = trending_effect_report(&turkey).unwrap();
        assert!((r[0].percent_increase - 130.0).abs() < 1e-9);
        assert!((r[1].percent_increase - 4.0).abs() < 1e-9);
        let ci = (r[0].ci_low, r[0].ci_high);
        let expect = (
            100.0 * ((2.3f64.ln() - 0.196).exp() - 1.0),
            100.0 * ((2.3f64.ln() + 0.196).exp() - 1.0),
        );
        assert!((ci.0 - expect.0).abs() < 1e-9 && (ci.1 - expect.1).abs() < 1e-9);
        assert_eq!(r[2].effect, "lambda+rho");
    }

    #[test]
    fn design_layout() {
        let rows = vec![
            PanelRow { hashtag: "b".into(), t: -1, y: 1, e: 0, d: 0, d10: None },
            PanelRow { hashtag: "a".into(), t: 0, y: 2, e: 3, d: 1, d10: None },
        ];
        let d = panel_design(&rows, false).unwrap();
        assert_eq!(d.terms, vec!["alpha", "lambda", "tau", "gamma", "beta", "fe:b"]);
        assert_eq!(d.x.row(0).iter().copied().collect::<Vec<_>>(), vec![1.0, 0.0, -1.0, -0.0, 0.0, 1.0]);
        assert_eq!(d.x.row(1).iter().copied().collect::<Vec<_>>(), vec![1.0, 1.0, 0.0, 0.0, 3.0, 0.0]);
        assert_eq!(d.clusters, vec![1, 0]);
    }
}
