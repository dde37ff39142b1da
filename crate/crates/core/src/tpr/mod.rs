//! Template Penetration Rate over embedding neighborhoods.
//!
//! Each unique cleaned tweet of a hashtag is compared with every other by
//! cosine similarity (a dot product on unit vectors). Its neighborhood is
//! the `k = max(1, round(fraction * N))` most similar tweets, itself
//! excluded, ties broken toward the smaller tweet id. Raw TPR is the share
//! of templates in the neighborhood; normalized TPR divides by the
//! hashtag-wide template share.

pub mod clean;
pub mod embedder;

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::datastore::{EmbeddingMatrix, TweetId};
use crate::ecdf::Ecdf;

pub use clean::{clean_corpus, clean_text, CleanCorpus, CleanTweet};
pub use embedder::TrigramEmbedder;

pub const DEFAULT_MIN_UNIQUE: usize = 3000;
pub const DEFAULT_NEIGHBORHOOD_FRACTION: f64 = 0.01;

#[derive(Debug, Error, PartialEq)]
pub enum TprError {
    #[error("HashtagTooSmall: {n} unique tweets, minimum is {min}")]
    HashtagTooSmall { n: usize, min: usize },
    #[error("no embedding for tweet {0}")]
    MissingEmbedding(TweetId),
    #[error("hashtag has no template tweets; normalized TPR is undefined")]
    DegenerateTemplateFraction,
    #[error("only {available} template tweets, {requested} requested")]
    NotEnoughTemplates { available: usize, requested: usize },
    #[error("tweet {0} is not in the neighborhood index")]
    UnknownQuery(TweetId),
    #[error("neighbor count identity failed: {outgoing} template links vs {incoming} template in-degree")]
    IdentityViolated { outgoing: u64, incoming: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TprConfig {
    pub min_unique: usize,
    pub neighborhood_fraction: f64,
}

impl Default for TprConfig {
    fn default() -> Self {
        TprConfig {
            min_unique: DEFAULT_MIN_UNIQUE,
            neighborhood_fraction: DEFAULT_NEIGHBORHOOD_FRACTION,
        }
    }
}

impl TprConfig {
    /// Neighborhood size for `n` unique tweets.
    pub fn k_for(&self, n: usize) -> usize {
        let k = (self.neighborhood_fraction * n as f64).round() as usize;
        k.max(1).min(n.saturating_sub(1))
    }
}

/// Exact exhaustive neighbor search over one hashtag's unique tweets.
pub struct NeighborIndex<'a> {
    tweets: &'a [CleanTweet],
    dim: usize,
    // row-major, one row per tweet in `tweets` order
    data: Vec<f32>,
    k: usize,
}

impl<'a> NeighborIndex<'a> {
    pub fn new(
        embeddings: &EmbeddingMatrix,
        tweets: &'a [CleanTweet],
        config: &TprConfig,
    ) -> Result<Self, TprError> {
        let n = tweets.len();
        if n < config.min_unique.max(2) {
            return Err(TprError::HashtagTooSmall {
                n,
                min: config.min_unique.max(2),
            });
        }
        let dim = embeddings.dim();
        let mut data = Vec::with_capacity(n * dim);
        for t in tweets {
            let row = embeddings
                .get(t.tweet_id)
                .ok_or(TprError::MissingEmbedding(t.tweet_id))?;
            data.extend_from_slice(row);
        }
        Ok(NeighborIndex {
            tweets,
            dim,
            data,
            k: config.k_for(n),
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.tweets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tweets.is_empty()
    }

    fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    /// Cosine similarity between rows `i` and `j`.
    pub fn similarity(&self, i: usize, j: usize) -> f64 {
        dot(self.row(i), self.row(j))
    }

    /// Positions of the `k` nearest tweets to position `query`, best first.
    pub fn neighbors_of(&self, query: usize) -> Vec<usize> {
        let mut scored: Vec<(f64, TweetId, usize)> = (0..self.len())
            .filter(|&j| j != query)
            .map(|j| (self.similarity(query, j), self.tweets[j].tweet_id, j))
            .collect();
        let rank = |a: &(f64, TweetId, usize), b: &(f64, TweetId, usize)| {
            b.0.total_cmp(&a.0).then(a.1.cmp(&b.1))
        };
        if self.k < scored.len() {
            scored.select_nth_unstable_by(self.k - 1, rank);
            scored.truncate(self.k);
        }
        scored.sort_unstable_by(rank);
        scored.into_iter().map(|(_, _, j)| j).collect()
    }

    /// Neighbor tweet ids of the tweet with id `query`, best first.
    pub fn neighborhood(&self, query: TweetId) -> Result<Vec<TweetId>, TprError> {
        let pos = self
            .tweets
            .iter()
            .position(|t| t.tweet_id == query)
            .ok_or(TprError::UnknownQuery(query))?;
        Ok(self
            .neighbors_of(pos)
            .into_iter()
            .map(|j| self.tweets[j].tweet_id)
            .collect())
    }
}

fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| f64::from(x) * f64::from(y))
        .sum()
}

/// The k nearest unique tweets to `query` within one hashtag.
pub fn knn_neighborhood(
    embeddings: &EmbeddingMatrix,
    tweets: &[CleanTweet],
    query: TweetId,
    config: &TprConfig,
) -> Result<Vec<TweetId>, TprError> {
    NeighborIndex::new(embeddings, tweets, config)?.neighborhood(query)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TprResult {
    pub tweet_id: TweetId,
    pub k: usize,
    pub template_neighbors: usize,
    pub raw_tpr: f64,
    /// `None` when the hashtag has no templates.
    pub normalized_tpr: Option<f64>,
    pub is_template: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TprReport {
    pub n: usize,
    pub k: usize,
    pub template_count: usize,
    pub template_fraction: f64,
    /// One entry per unique tweet, ascending by tweet id.
    pub results: Vec<TprResult>,
}

impl TprReport {
    /// Errors when normalized TPR is undefined for this hashtag.
    pub fn normalized_defined(&self) -> Result<(), TprError> {
        if self.template_count == 0 {
            Err(TprError::DegenerateTemplateFraction)
        } else {
            Ok(())
        }
    }
}

/// Raw and normalized TPR for every unique tweet of one hashtag.
pub fn compute_tpr(
    corpus: &CleanCorpus,
    embeddings: &EmbeddingMatrix,
    config: &TprConfig,
) -> Result<TprReport, TprError> {
    let tweets = &corpus.tweets;
    let index = NeighborIndex::new(embeddings, tweets, config)?;
    let n = index.len();
    let k = index.k();
    let template_count = corpus.template_count();

    let (counts, indegree) = (0..n)
        .into_par_iter()
        .fold(
            || (Vec::new(), vec![0u64; n]),
            |(mut counts, mut indeg), i| {
                let nbrs = index.neighbors_of(i);
                let c = nbrs.iter().filter(|&&j| tweets[j].is_template).count();
                for &j in &nbrs {
                    indeg[j] += 1;
                }
                counts.push((i, c));
                (counts, indeg)
            },
        )
        .reduce(
            || (Vec::new(), vec![0u64; n]),
            |(mut ca, mut ia), (cb, ib)| {
                ca.extend(cb);
                for (a, b) in ia.iter_mut().zip(ib) {
                    *a += b;
                }
                (ca, ia)
            },
        );
    let mut per_tweet = vec![0usize; n];
    for (i, c) in counts {
        per_tweet[i] = c;
    }

    let outgoing: u64 = per_tweet.iter().map(|&c| c as u64).sum();
    let incoming: u64 = (0..n)
        .filter(|&j| tweets[j].is_template)
        .map(|j| indegree[j])
        .sum();
    if outgoing != incoming {
        return Err(TprError::IdentityViolated { outgoing, incoming });
    }

    let results = tweets
        .iter()
        .zip(&per_tweet)
        .map(|(t, &c)| TprResult {
            tweet_id: t.tweet_id,
            k,
            template_neighbors: c,
            raw_tpr: c as f64 / k as f64,
            normalized_tpr: (template_count > 0)
                .then(|| (c as u128 * n as u128) as f64 / (k as u128 * template_count as u128) as f64),
            is_template: t.is_template,
        })
        .collect();
    Ok(TprReport {
        n,
        k,
        template_count,
        template_fraction: template_count as f64 / n as f64,
        results,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TprDistribution {
    /// ECDF of normalized TPR over template tweets; `None` if there are none.
    pub template: Option<Ecdf<f64>>,
    pub normal: Option<Ecdf<f64>>,
    /// Set when the template ECDF is absent.
    pub template_missing: bool,
}

pub fn tpr_distribution(results: &[TprResult]) -> TprDistribution {
    let values = |template: bool| {
        results
            .iter()
            .filter(|r| r.is_template == template)
            .filter_map(|r| r.normalized_tpr)
            .collect::<Vec<_>>()
    };
    let template = Ecdf::from_values(values(true));
    TprDistribution {
        template_missing: template.is_none(),
        template,
        normal: Ecdf::from_values(values(false)),
    }
}

/// The `m` template tweets with the smallest raw TPR, ascending by
/// (raw_tpr, tweet_id).
pub fn low_tpr_exemplars(results: &[TprResult], m: usize) -> Result<Vec<TweetId>, TprError> {
    let mut templates: Vec<&TprResult> = results.iter().filter(|r| r.is_template).collect();
    if templates.len() < m {
        return Err(TprError::NotEnoughTemplates {
            available: templates.len(),
            requested: m,
        });
    }
    templates.sort_by(|a, b| {
        a.raw_tpr
            .total_cmp(&b.raw_tpr)
            .then(a.tweet_id.cmp(&b.tweet_id))
    });
    Ok(templates.into_iter().take(m).map(|r| r.tweet_id).collect())
}

/// Share of normal tweets with no template in their neighborhood.
pub fn normal_zero_share(results: &[TprResult]) -> Option<f64> {
    let normals: Vec<_> = results.iter().filter(|r| !r.is_template).collect();
    (!normals.is_empty()).then(|| {
        normals.iter().filter(|r| r.template_neighbors == 0).count() as f64 / normals.len() as f64
    })
}

/// True when `upper` first-order stochastically dominates `lower`:
/// F_upper(x) <= F_lower(x) at every step point of either.
pub fn dominates(upper: &Ecdf<f64>, lower: &Ecdf<f64>) -> bool {
    upper
        .points
        .iter()
        .chain(lower.points.iter())
        .all(|&(x, _)| upper.eval(x).partial_cmp(&lower.eval(x)) != Some(Ordering::Greater))
}
