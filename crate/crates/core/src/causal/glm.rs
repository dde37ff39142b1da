//! Poisson log-link GLM fitted by IRLS, with quasi-Poisson dispersion and
//! cluster-robust sandwich covariance.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::CausalError;

pub const MAX_ITERATIONS: usize = 50;
pub const DEVIANCE_TOLERANCE: f64 = 1e-8;
pub const SCORE_TOLERANCE: f64 = 1e-6;
pub const SEPARATION_BOUND: f64 = 30.0;
const MAX_HALVINGS: usize = 30;
/// Relative deviance change treated as rounding noise rather than an increase.
pub const DEVIANCE_SLACK: f64 = 1e-12;
const ETA_CAP: f64 = 700.0;

/// Dense design with named columns and a cluster label per row.
#[derive(Debug, Clone)]
pub struct Design {
    pub terms: Vec<String>,
    pub x: DMatrix<f64>,
    pub y: Vec<f64>,
    pub clusters: Vec<usize>,
}

impl Design {
    pub fn n_obs(&self) -> usize {
        self.x.nrows()
    }

    pub fn n_clusters(&self) -> usize {
        let mut c = self.clusters.clone();
        c.sort_unstable();
        c.dedup();
        c.len()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GlmFit {
    pub terms: Vec<String>,
    pub coefficients: Vec<f64>,
    /// Cluster-robust covariance over all terms, G/(G-1) corrected.
    #[serde(skip)]
    pub cov_cluster: DMatrix<f64>,
    /// Model-based quasi-Poisson covariance, dispersion times A^-1.
    #[serde(skip)]
    pub cov_model: DMatrix<f64>,
    pub dispersion: f64,
    pub deviance: f64,
    /// Deviance after each IRLS iteration.
    pub deviance_trace: Vec<f64>,
    pub score_max: f64,
    pub n_obs: usize,
    pub n_clusters: usize,
    pub iterations: usize,
    pub converged: bool,
    #[serde(skip)]
    pub fitted: Vec<f64>,
}

impl GlmFit {
    pub fn index(&self, term: &str) -> Option<usize> {
        self.terms.iter().position(|t| t == term)
    }

    pub fn coef(&self, term: &str) -> Option<f64> {
        self.index(term).map(|i| self.coefficients[i])
    }

    /// Cluster-robust standard error.
    pub fn se(&self, term: &str) -> Option<f64> {
        self.index(term).map(|i| self.cov_cluster[(i, i)].sqrt())
    }
}

fn poisson_deviance(y: &[f64], mu: &[f64]) -> f64 {
    2.0 * y
        .iter()
        .zip(mu)
        .map(|(&yi, &mi)| {
            let term = if yi > 0.0 { yi * (yi / mi).ln() } else { 0.0 };
            term - (yi - mi)
        })
        .sum::<f64>()
}

fn linear_predictor(x: &DMatrix<f64>, beta: &DVector<f64>) -> Vec<f64> {
    (x * beta).iter().map(|&e| e.min(ETA_CAP)).collect()
}

/// Columns that are (numerically) linear combinations of earlier columns,
/// found by modified Gram-Schmidt on max-scaled columns.
pub fn dependent_columns(x: &DMatrix<f64>) -> Vec<usize> {
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut dependent = Vec::new();
    for j in 0..x.ncols() {
        let col = x.column(j).into_owned();
        let scale = col.amax();
        if scale == 0.0 {
            dependent.push(j);
            continue;
        }
        let mut v = col / scale;
        let norm0 = v.norm();
        for q in &basis {
            let proj = q.dot(&v);
            v -= q * proj;
        }
        let norm = v.norm();
        if norm <= 1e-9 * norm0 {
            dependent.push(j);
        } else {
            basis.push(v / norm);
        }
    }
    dependent
}

/// Fits a Poisson GLM with log link by IRLS starting from mu = y + 0.5.
///
/// Iteration stops once the relative deviance change is below 1e-8 and the
/// score max-norm is below 1e-6, or after 50 iterations. Any deviance
/// increase beyond [`DEVIANCE_SLACK`] (relative) triggers step halving.
pub fn fit_poisson(design: &Design) -> Result<GlmFit, CausalError> {
    let n = design.n_obs();
    let p = design.x.ncols();
    let y = &design.y;
    if y.len() != n || design.clusters.len() != n {
        return Err(CausalError::InvalidSpec("design rows disagree in length".into()));
    }
    if y.iter().any(|&v| v < 0.0 || !v.is_finite()) {
        return Err(CausalError::InvalidSpec("outcome must be nonnegative counts".into()));
    }
    let g = design.n_clusters();
    if g < 2 {
        return Err(CausalError::TooFewClusters(g));
    }
    if n <= p {
        return Err(CausalError::InvalidSpec(format!("{n} observations for {p} terms")));
    }
    let dep = dependent_columns(&design.x);
    if !dep.is_empty() {
        return Err(CausalError::RankDeficient(
            dep.into_iter().map(|j| design.terms[j].clone()).collect(),
        ));
    }

    if let Some(j) = zero_outcome_indicator(design) {
        return Err(CausalError::SeparationSuspected {
            term: design.terms[j].clone(),
            value: f64::NEG_INFINITY,
        });
    }

    // column scaling keeps the normal equations well conditioned
    let scales: Vec<f64> = (0..p).map(|j| design.x.column(j).amax()).collect();
    let mut xs = design.x.clone();
    for (j, &s) in scales.iter().enumerate() {
        xs.column_mut(j).scale_mut(1.0 / s);
    }

    let mut mu: Vec<f64> = y.iter().map(|&v| v + 0.5).collect();
    let mut eta: Vec<f64> = mu.iter().map(|m| m.ln()).collect();
    let mut beta: Option<DVector<f64>> = None;
    let mut dev_old = f64::INFINITY;
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    let mut score_max = f64::INFINITY;

    for iter in 1..=MAX_ITERATIONS {
        iterations = iter;
        let mut xtwx = DMatrix::<f64>::zeros(p, p);
        let mut xtwz = DVector::<f64>::zeros(p);
        for i in 0..n {
            let w = mu[i];
            let z = eta[i] + (y[i] - mu[i]) / mu[i];
            let row = xs.row(i);
            for a in 0..p {
                let wa = w * row[a];
                xtwz[a] += wa * z;
                for b in a..p {
                    xtwx[(a, b)] += wa * row[b];
                }
            }
        }
        for a in 0..p {
            for b in 0..a {
                xtwx[(a, b)] = xtwx[(b, a)];
            }
        }
        let chol = xtwx
            .cholesky()
            .ok_or_else(|| CausalError::RankDeficient(design.terms.clone()))?;
        let mut candidate = chol.solve(&xtwz);
        let mut eta_new = linear_predictor(&xs, &candidate);
        let mut mu_new: Vec<f64> = eta_new.iter().map(|e| e.exp()).collect();
        let mut dev_new = poisson_deviance(y, &mu_new);
        if let Some(prev) = &beta {
            let ceiling = dev_old + DEVIANCE_SLACK * (dev_old.abs() + 1.0);
            // false for NaN as well as for an increase
            let descends = |d: f64| d <= ceiling;
            let mut halvings = 0;
            while !descends(dev_new) && halvings < MAX_HALVINGS {
                candidate = (prev + &candidate) * 0.5;
                eta_new = linear_predictor(&xs, &candidate);
                mu_new = eta_new.iter().map(|e| e.exp()).collect();
                dev_new = poisson_deviance(y, &mu_new);
                halvings += 1;
            }
            if !descends(dev_new) {
                // no descent possible from here; keep the previous iterate
                candidate = prev.clone();
                eta_new = linear_predictor(&xs, &candidate);
                mu_new = eta_new.iter().map(|e| e.exp()).collect();
                dev_new = dev_old;
            }
        }
        trace.push(dev_new);
        let rel_change = (dev_old - dev_new).abs() / (dev_new.abs() + 0.1);
        beta = Some(candidate);
        eta = eta_new;
        mu = mu_new;
        dev_old = dev_new;

        score_max = score_vector(&design.x, y, &mu).amax();
        if rel_change < DEVIANCE_TOLERANCE && score_max <= SCORE_TOLERANCE {
            converged = true;
            break;
        }
    }

    let beta_scaled = beta.expect("at least one iteration ran");
    let coefficients: Vec<f64> = beta_scaled
        .iter()
        .zip(&scales)
        .map(|(b, s)| b / s)
        .collect();
    if let Some(j) = coefficients.iter().position(|c| c.abs() > SEPARATION_BOUND) {
        return Err(CausalError::SeparationSuspected {
            term: design.terms[j].clone(),
            value: coefficients[j],
        });
    }
    if !converged {
        return Err(CausalError::NotConverged {
            iterations,
            score_max,
        });
    }

    let fisher = fisher_information(&design.x, &mu);
    let fisher_inv = fisher
        .clone()
        .cholesky()
        .ok_or_else(|| CausalError::RankDeficient(design.terms.clone()))?
        .inverse();
    let meat = cluster_meat(&design.x, y, &mu, &design.clusters);
    let correction = g as f64 / (g as f64 - 1.0);
    let mut cov_cluster = &fisher_inv * meat * &fisher_inv * correction;
    cov_cluster = (&cov_cluster + cov_cluster.transpose()) * 0.5;

    let pearson: f64 = y
        .iter()
        .zip(&mu)
        .map(|(&yi, &mi)| (yi - mi).powi(2) / mi)
        .sum();
    let dispersion = pearson / (n - p) as f64;
    let cov_model = &fisher_inv * dispersion;

    Ok(GlmFit {
        terms: design.terms.clone(),
        coefficients,
        cov_cluster,
        cov_model,
        dispersion,
        deviance: dev_old,
        deviance_trace: trace,
        score_max,
        n_obs: n,
        n_clusters: g,
        iterations,
        converged,
        fitted: mu,
    })
}

/// A 0/1 column (other than a constant) whose support has only zero
/// outcomes; its MLE diverges to minus infinity.
fn zero_outcome_indicator(design: &Design) -> Option<usize> {
    (0..design.x.ncols()).find(|&j| {
        let col = design.x.column(j);
        let indicator = col.iter().all(|&v| v == 0.0 || v == 1.0);
        let constant = col.iter().all(|&v| v == 1.0);
        indicator
            && !constant
            && col
                .iter()
                .zip(&design.y)
                .all(|(&v, &y)| v == 0.0 || y == 0.0)
    })
}

/// X^T (y - mu).
pub fn score_vector(x: &DMatrix<f64>, y: &[f64], mu: &[f64]) -> DVector<f64> {
    let resid = DVector::from_iterator(y.len(), y.iter().zip(mu).map(|(a, b)| a - b));
    x.transpose() * resid
}

/// X^T diag(mu) X.
pub fn fisher_information(x: &DMatrix<f64>, mu: &[f64]) -> DMatrix<f64> {
    let mut weighted = x.clone();
    for (i, &m) in mu.iter().enumerate() {
        weighted.row_mut(i).scale_mut(m);
    }
    x.transpose() * weighted
}

/// Sum over clusters of the outer product of within-cluster score sums.
pub fn cluster_meat(x: &DMatrix<f64>, y: &[f64], mu: &[f64], clusters: &[usize]) -> DMatrix<f64> {
    let p = x.ncols();
    let n_groups = clusters.iter().copied().max().map_or(0, |m| m + 1);
    let mut sums = vec![DVector::<f64>::zeros(p); n_groups];
    for i in 0..x.nrows() {
        let r = y[i] - mu[i];
        let s = &mut sums[clusters[i]];
        for j in 0..p {
            s[j] += x[(i, j)] * r;
        }
    }
    let mut meat = DMatrix::<f64>::zeros(p, p);
    for s in &sums {
        meat += s * s.transpose();
    }
    meat
}
