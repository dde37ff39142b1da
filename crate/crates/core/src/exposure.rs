//! Exposure through the friend network prior to first hashtag use.
//!
//! A user's exposures are the hashtag tweets (originals and retweets) posted
//! by accounts the user follows strictly before the user's own first use,
//! in (ts, tweet_id) order. Retweets carry their root's template label.
//! Users with no exposure are attributed to the trending topics page.

use std::collections::{BTreeMap, HashMap, HashSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::datastore::{CampaignDataset, TweetId, UserId};
use crate::ecdf::Ecdf;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ExposureError {
    #[error("user {0} has no tweets in this hashtag")]
    UserNotInDataset(UserId),
    #[error("user {0} has no followers")]
    NoFollowers(UserId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Classification {
    NetworkExposed,
    TrendingExposed,
}

impl Classification {
    pub fn as_str(self) -> &'static str {
        match self {
            Classification::NetworkExposed => "network_exposed",
            Classification::TrendingExposed => "trending_exposed",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    Template,
    Normal,
    Both,
}

impl Channel {
    pub const ALL: [Channel; 3] = [Channel::Template, Channel::Normal, Channel::Both];

    pub fn as_str(self) -> &'static str {
        match self {
            Channel::Template => "template",
            Channel::Normal => "normal",
            Channel::Both => "both",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ExposureRecord {
    pub user_id: UserId,
    pub first_use_ts: i64,
    pub first_use_tweet_id: TweetId,
    pub template_exposures: u64,
    pub normal_exposures: u64,
    /// Distinct friends with at least one exposing tweet.
    pub exposing_friends: u64,
    pub classification: Classification,
}

impl ExposureRecord {
    pub fn total(&self) -> u64 {
        self.template_exposures + self.normal_exposures
    }

    pub fn on(&self, channel: Channel) -> u64 {
        match channel {
            Channel::Template => self.template_exposures,
            Channel::Normal => self.normal_exposures,
            Channel::Both => self.total(),
        }
    }
}

/// One author's tweets in order with a running template count.
#[derive(Debug, Default)]
struct AuthorTimeline {
    keys: Vec<(i64, TweetId)>,
    // templates[i] = template tweets among keys[..i]
    templates: Vec<u64>,
}

/// Per-author tweet timelines for fast prefix counts.
pub struct ExposureIndex<'a> {
    dataset: &'a CampaignDataset,
    authors: HashMap<UserId, AuthorTimeline>,
    first_use: HashMap<UserId, (i64, TweetId)>,
}

impl<'a> ExposureIndex<'a> {
    pub fn new(dataset: &'a CampaignDataset) -> Self {
        let mut authors: HashMap<UserId, AuthorTimeline> = HashMap::new();
        for t in dataset.tweets() {
            let tl = authors.entry(t.user_id).or_insert_with(|| AuthorTimeline {
                keys: Vec::new(),
                templates: vec![0],
            });
            let last = *tl.templates.last().unwrap();
            tl.keys.push(t.order_key());
            tl.templates
                .push(last + u64::from(dataset.carries_template(t)));
        }
        ExposureIndex {
            dataset,
            authors,
            first_use: dataset.first_uses(),
        }
    }

    pub fn first_use(&self, user: UserId) -> Option<(i64, TweetId)> {
        self.first_use.get(&user).copied()
    }

    /// Counts exposures with an explicit cutoff key.
    fn counts_before(&self, user: UserId, cutoff: (i64, TweetId)) -> (u64, u64, u64) {
        let mut template = 0;
        let mut total = 0;
        let mut friends = 0;
        for f in self.dataset.graph.friends(user) {
            if let Some(tl) = self.authors.get(f) {
                let n = tl.keys.partition_point(|k| *k < cutoff);
                if n > 0 {
                    friends += 1;
                    total += n as u64;
                    template += tl.templates[n];
                }
            }
        }
        (template, total - template, friends)
    }

    pub fn record(&self, user: UserId) -> Result<ExposureRecord, ExposureError> {
        let first = self
            .first_use(user)
            .ok_or(ExposureError::UserNotInDataset(user))?;
        let (template_exposures, normal_exposures, exposing_friends) =
            self.counts_before(user, first);
        let classification = if template_exposures + normal_exposures == 0 {
            Classification::TrendingExposed
        } else {
            Classification::NetworkExposed
        };
        Ok(ExposureRecord {
            user_id: user,
            first_use_ts: first.0,
            first_use_tweet_id: first.1,
            template_exposures,
            normal_exposures,
            exposing_friends,
            classification,
        })
    }
}

pub fn count_exposures(
    user: UserId,
    dataset: &CampaignDataset,
) -> Result<ExposureRecord, ExposureError> {
    ExposureIndex::new(dataset).record(user)
}

/// Adopters eligible for classification: every author who is not a campaign
/// participant. Participants' tweets still act as exposure sources.
pub fn classified_population(dataset: &CampaignDataset) -> Vec<UserId> {
    let participants = dataset.participants();
    dataset
        .users()
        .into_iter()
        .filter(|u| !participants.contains(u))
        .collect()
}

/// Exposure records for the classified population, ascending by user id.
pub fn exposure_records(dataset: &CampaignDataset) -> Vec<ExposureRecord> {
    let index = ExposureIndex::new(dataset);
    classified_population(dataset)
        .par_iter()
        .map(|&u| index.record(u).expect("population users have tweets"))
        .collect()
}

pub fn classify_users(dataset: &CampaignDataset) -> BTreeMap<UserId, Classification> {
    exposure_records(dataset)
        .into_iter()
        .map(|r| (r.user_id, r.classification))
        .collect()
}

/// Classifications of every dataset, keyed by hashtag.
pub fn classify_corpus(datasets: &[CampaignDataset]) -> BTreeMap<String, BTreeMap<UserId, Classification>> {
    datasets
        .par_iter()
        .map(|d| (d.hashtag.clone(), classify_users(d)))
        .collect()
}

pub fn ecdf_of(records: &[ExposureRecord], channel: Channel) -> Option<Ecdf<u64>> {
    Ecdf::from_values(records.iter().map(|r| r.on(channel)).collect())
}

/// ECDF of prior exposures over the classified population.
pub fn exposure_ecdf(dataset: &CampaignDataset, channel: Channel) -> Vec<(u64, f64)> {
    ecdf_of(&exposure_records(dataset), channel).map_or_else(Vec::new, |e| e.points)
}

/// Share of classified users whose exposure came from at most
/// `max_friends` distinct friends. Zero gives the trending-exposed share;
/// one adds the single-friend users. Report-only.
pub fn low_exposure_share(records: &[ExposureRecord], max_friends: u64) -> f64 {
    if records.is_empty() {
        return 0.0;
    }
    let hits = records
        .iter()
        .filter(|r| r.exposing_friends <= max_friends)
        .count();
    hits as f64 / records.len() as f64
}

/// Fraction of `user`'s followers whose first use is strictly after the
/// user's first use.
pub fn exposure_effectiveness(user: UserId, dataset: &CampaignDataset) -> Result<f64, ExposureError> {
    let first_uses = dataset.first_uses();
    effectiveness_with(user, dataset, &first_uses)
}

fn effectiveness_with(
    user: UserId,
    dataset: &CampaignDataset,
    first_uses: &HashMap<UserId, (i64, TweetId)>,
) -> Result<f64, ExposureError> {
    let mine = *first_uses
        .get(&user)
        .ok_or(ExposureError::UserNotInDataset(user))?;
    let followers = dataset.graph.followers(user);
    if followers.is_empty() {
        return Err(ExposureError::NoFollowers(user));
    }
    let later = followers
        .iter()
        .filter(|f| first_uses.get(f).is_some_and(|k| *k > mine))
        .count();
    Ok(later as f64 / followers.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EffectivenessRecord {
    pub user_id: UserId,
    pub classification: Classification,
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EffectivenessSet {
    pub records: Vec<EffectivenessRecord>,
    /// Classified users skipped because nobody follows them.
    pub no_followers: usize,
}

/// Exposure effectiveness for every classified user with followers.
pub fn effectiveness_records(
    dataset: &CampaignDataset,
    classes: &BTreeMap<UserId, Classification>,
) -> EffectivenessSet {
    let first_uses = dataset.first_uses();
    let mut records = Vec::new();
    let mut no_followers = 0;
    for (&user, &classification) in classes {
        match effectiveness_with(user, dataset, &first_uses) {
            Ok(fraction) => records.push(EffectivenessRecord {
                user_id: user,
                classification,
                fraction,
            }),
            Err(ExposureError::NoFollowers(_)) => no_followers += 1,
            Err(ExposureError::UserNotInDataset(_)) => {}
        }
    }
    EffectivenessSet {
        records,
        no_followers,
    }
}

pub const PERMUTATIONS: usize = 10_000;
pub const PERMUTATION_SEED: u64 = 0x5eed_e77e;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EffectivenessSummary {
    pub trending_mean: Option<f64>,
    pub network_mean: Option<f64>,
    pub n_trending: usize,
    pub n_network: usize,
    /// trending mean minus network mean.
    pub difference: Option<f64>,
    /// Two-sided permutation p-value for the difference.
    pub p_value: Option<f64>,
    pub permutations: usize,
}

fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

/// Group means and a label-permutation test with a fixed seed.
pub fn summarize_effectiveness(
    records: &[EffectivenessRecord],
    permutations: usize,
    seed: u64,
) -> EffectivenessSummary {
    let values: Vec<f64> = records.iter().map(|r| r.fraction).collect();
    let is_trending: Vec<bool> = records
        .iter()
        .map(|r| r.classification == Classification::TrendingExposed)
        .collect();
    let group_diff = |labels: &[bool]| -> Option<f64> {
        let (mut st, mut nt, mut sn, mut nn) = (0.0, 0usize, 0.0, 0usize);
        for (&v, &t) in values.iter().zip(labels) {
            if t {
                st += v;
                nt += 1;
            } else {
                sn += v;
                nn += 1;
            }
        }
        (nt > 0 && nn > 0).then(|| st / nt as f64 - sn / nn as f64)
    };
    let trending: Vec<f64> = values
        .iter()
        .zip(&is_trending)
        .filter(|(_, &t)| t)
        .map(|(&v, _)| v)
        .collect();
    let network: Vec<f64> = values
        .iter()
        .zip(&is_trending)
        .filter(|(_, &t)| !t)
        .map(|(&v, _)| v)
        .collect();
    let difference = group_diff(&is_trending);
    let p_value = difference.map(|obs| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut labels = is_trending.clone();
        // relative slack so ties with the observed statistic count as extreme
        let threshold = obs.abs() * (1.0 - 1e-12);
        let mut extreme = 0usize;
        for _ in 0..permutations {
            labels.shuffle(&mut rng);
            if group_diff(&labels).expect("group sizes preserved").abs() >= threshold {
                extreme += 1;
            }
        }
        (extreme + 1) as f64 / (permutations + 1) as f64
    });
    EffectivenessSummary {
        trending_mean: mean(&trending),
        network_mean: mean(&network),
        n_trending: trending.len(),
        n_network: network.len(),
        difference,
        p_value,
        permutations,
    }
}

/// Number of adopters per class, plus the astroturfing participants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct ExposureShares {
    pub network_exposed: usize,
    pub trending_exposed: usize,
    pub participants: usize,
}

pub fn exposure_shares(dataset: &CampaignDataset, records: &[ExposureRecord]) -> ExposureShares {
    let participants: HashSet<UserId> = dataset.participants();
    let trending = records
        .iter()
        .filter(|r| r.classification == Classification::TrendingExposed)
        .count();
    ExposureShares {
        network_exposed: records.len() - trending,
        trending_exposed: trending,
        participants: participants.len(),
    }
}
