//! Analytics for astroturfed trending-topic campaigns: retweet cascades,
//! exposure classification, template penetration over embedding
//! neighborhoods, and a quasi-Poisson fixed-effects estimate of the return
//! to trending, plus a synthetic campaign generator with known ground truth.

pub mod cascade;
pub mod causal;
pub mod cli;
pub mod datastore;
pub mod ecdf;
pub mod exposure;
pub mod plot;
pub mod simgen;
pub mod tpr;
