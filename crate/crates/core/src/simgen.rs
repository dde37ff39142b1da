//! Synthetic campaigns with known ground truth.
//!
//! A simulated corpus shares one follower graph. Each campaign (one hashtag)
//! has three adoption channels: participants posting template seeds, network
//! adoption through friends' tweets, and arrivals of unexposed users at a
//! per-bin Poisson rate `nu * exp(offset + lambda * D + rho * D10)`.
//!
//! Draw order. The graph uses `seed` on ChaCha stream [`GRAPH_STREAM`]:
//! preferential-attachment targets node by node, then (Turkey mode) the
//! friends of the dedicated seed accounts. Campaign `c` uses `seed + c` on
//! stream 0: participants, recorded-onset offset, one (template, time) pair
//! per participant, per-bin arrival counts each followed by its arrival
//! times, then the event loop. Inside the loop each arrival draws its user,
//! each adoption draws its retweet choice, each emitted original draws its
//! text tokens, and each follower of a new tweet draws adoption then delay.
//! Embeddings of campaign `c` use `seed + c` on [`EMBEDDING_STREAM`].

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap, HashMap, HashSet};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use indexmap::IndexSet;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Poisson, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::causal::{self, CausalError, GlmFit, ModelSpec};
use crate::datastore::{
    CampaignDataset, Corpus, DatastoreError, EmbeddingMatrix, FollowerGraph, RankBucket, TrendingInterval,
    TrendingTimeline, TweetId, TweetKind, TweetRecord, UserId,
};
use crate::exposure;

pub const GRAPH_STREAM: u64 = 0x0067_7261_7068;
pub const EMBEDDING_STREAM: u64 = 0x0065_6d62_6564;
/// Tweet ids of campaign `c` start at `(c + 1) * ID_STRIDE`.
pub const ID_STRIDE: u64 = 1 << 32;
pub const GROUND_TRUTH_FILE: &str = "ground_truth.json";
const NORMAL_TOKENS: usize = 6;
const VOCABULARY: u32 = 10_000;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("ConfigInvalid: {0}")]
    ConfigInvalid(String),
    #[error(transparent)]
    Datastore(#[from] DatastoreError),
    #[error(transparent)]
    Causal(#[from] CausalError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

fn invalid(msg: impl Into<String>) -> SimError {
    SimError::ConfigInvalid(msg.into())
}

/// True top-10 placement, relative to the true trending onset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Top10Config {
    pub delay_s: i64,
    pub duration_s: i64,
    pub rho_true: f64,
}

impl Default for Top10Config {
    fn default() -> Self {
        Top10Config {
            delay_s: 3600,
            duration_s: 7200,
            rho_true: 0.0,
        }
    }
}

/// Planted-cluster embedding geometry.
///
/// Centroid `i` is the normalized `separation * e_i + (1 - separation) * c`
/// with `c` the normalized all-ones vector, so separation 1 gives orthogonal
/// centroids and 0 a single shared centroid. Each vector is its centroid
/// plus i.i.d. `N(0, noise^2 / dim)` coordinates, renormalized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbeddingConfig {
    pub clusters: usize,
    pub separation: f64,
    pub dim: usize,
    pub noise: f64,
    /// Clusters that template tweets are drawn into.
    pub template_clusters: Vec<usize>,
    /// Probability that a normal tweet lands in a template cluster.
    pub normal_template_share: f64,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        EmbeddingConfig {
            clusters: 8,
            separation: 1.0,
            dim: 32,
            noise: 0.05,
            template_clusters: vec![0],
            normal_template_share: 0.0,
        }
    }
}

impl EmbeddingConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.dim < 2 {
            return Err(invalid(format!("embedding dim {} below minimum 2", self.dim)));
        }
        if self.clusters == 0 || self.clusters > self.dim {
            return Err(invalid(format!(
                "cluster count {} must be in 1..={}",
                self.clusters, self.dim
            )));
        }
        if self.template_clusters.is_empty() || self.template_clusters.iter().any(|&c| c >= self.clusters) {
            return Err(invalid("template clusters must be nonempty and below the cluster count"));
        }
        if !(0.0..=1.0).contains(&self.separation) {
            return Err(invalid("separation must be in [0, 1]"));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(invalid("noise must be finite and nonnegative"));
        }
        if !(0.0..=1.0).contains(&self.normal_template_share) {
            return Err(invalid("normal_template_share must be in [0, 1]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub seed: u64,
    pub n_users: usize,
    /// Friends chosen by each new node of the preferential-attachment graph.
    pub edges_per_user: usize,
    pub n_hashtags: usize,
    pub n_participants: usize,
    pub n_templates: usize,
    /// Conversion probability of one exposure.
    pub adoption_prob: f64,
    /// Adoption follows exposure after this minimum plus an exponential
    /// delay. A minimum of one bin keeps network adoptions out of the bin of
    /// the exposing tweet, so E never responds to the same bin's Y.
    pub min_adoption_delay_s: i64,
    pub adoption_delay_mean_s: f64,
    /// Unexposed arrivals per bin before trending (nu).
    pub base_trending_rate: f64,
    pub lambda_true: f64,
    pub trending_onset_ts: i64,
    pub trending_duration_s: i64,
    /// Reporting granularity of the recorded timeline; a multiple of the bin.
    pub uncertainty_s: i64,
    /// Participants post between `onset - lead` and `onset - lead + spread`.
    pub campaign_lead_s: i64,
    pub seed_spread_s: i64,
    /// Probability that a network adopter retweets the exposing tweet's root
    /// rather than writing a new original.
    pub retweet_prob: f64,
    /// Maximum retweets of one template.
    pub template_cascade_cap: usize,
    /// Panel window in bins, inclusive. The simulation covers it relative to
    /// the true onset, widened by `uncertainty_s` on both sides so that every
    /// strategy's window is fully simulated.
    pub window: (i64, i64),
    pub bin_seconds: i64,
    pub top10: Option<Top10Config>,
    /// Participants are dedicated accounts that nobody follows.
    pub turkey_mode: bool,
    /// Per-campaign additive log-rate offsets; missing entries are 0.
    pub rate_log_offsets: Vec<f64>,
    pub embeddings: Option<EmbeddingConfig>,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            seed: 7,
            n_users: 5000,
            edges_per_user: 3,
            n_hashtags: 20,
            n_participants: 20,
            n_templates: 5,
            adoption_prob: 0.1,
            min_adoption_delay_s: causal::panel::DEFAULT_BIN_SECONDS,
            adoption_delay_mean_s: 1800.0,
            base_trending_rate: 1.0,
            lambda_true: std::f64::consts::LN_2,
            trending_onset_ts: 1_600_000_200,
            trending_duration_s: 6 * 3600,
            uncertainty_s: 0,
            campaign_lead_s: 3600,
            seed_spread_s: 600,
            retweet_prob: 0.5,
            template_cascade_cap: 150,
            window: (causal::panel::DEFAULT_WINDOW_MIN, causal::panel::DEFAULT_WINDOW_MAX),
            bin_seconds: causal::panel::DEFAULT_BIN_SECONDS,
            top10: None,
            turkey_mode: false,
            rate_log_offsets: Vec::new(),
            embeddings: Some(EmbeddingConfig::default()),
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let prob = |name: &str, p: f64| {
            if (0.0..=1.0).contains(&p) {
                Ok(())
            } else {
                Err(invalid(format!("{name} = {p} is not a probability")))
            }
        };
        prob("adoption_prob", self.adoption_prob)?;
        prob("retweet_prob", self.retweet_prob)?;
        if self.n_users < 2 {
            return Err(invalid("need at least 2 users"));
        }
        if self.edges_per_user == 0 {
            return Err(invalid("edges_per_user must be positive"));
        }
        if self.n_participants > self.n_users {
            return Err(invalid(format!(
                "{} participants exceed {} users",
                self.n_participants, self.n_users
            )));
        }
        if self.n_participants > 0 && self.n_templates == 0 {
            return Err(invalid("participants need at least one template"));
        }
        if self.n_hashtags == 0 {
            return Err(invalid("need at least one hashtag"));
        }
        if !(self.base_trending_rate >= 0.0 && self.base_trending_rate.is_finite()) {
            return Err(invalid("base_trending_rate must be finite and nonnegative"));
        }
        if self.min_adoption_delay_s < 0 {
            return Err(invalid("min_adoption_delay_s must be nonnegative"));
        }
        if !(self.adoption_delay_mean_s > 0.0 && self.adoption_delay_mean_s.is_finite()) {
            return Err(invalid("adoption_delay_mean_s must be positive"));
        }
        if !self.lambda_true.is_finite() || self.rate_log_offsets.iter().any(|o| !o.is_finite()) {
            return Err(invalid("log-rate parameters must be finite"));
        }
        if self.bin_seconds <= 0 {
            return Err(invalid("bin_seconds must be positive"));
        }
        if self.uncertainty_s < 0 || self.uncertainty_s % self.bin_seconds != 0 {
            return Err(invalid("uncertainty_s must be a nonnegative multiple of bin_seconds"));
        }
        let (lo, hi) = self.window;
        if lo > 0 || hi < 0 {
            return Err(invalid("window must contain bin 0"));
        }
        if self.trending_duration_s <= 0 {
            return Err(invalid("trending_duration_s must be positive"));
        }
        if self.campaign_lead_s < 0 || self.seed_spread_s < 0 {
            return Err(invalid("campaign_lead_s and seed_spread_s must be nonnegative"));
        }
        if self.campaign_lead_s > -lo * self.bin_seconds {
            return Err(invalid("campaign starts before the simulated window"));
        }
        if let Some(t) = &self.top10 {
            if t.delay_s < 0 || t.duration_s <= 0 || t.delay_s + t.duration_s > self.trending_duration_s {
                return Err(invalid("top10 interval must lie inside the top50 interval"));
            }
            if !t.rho_true.is_finite() {
                return Err(invalid("rho_true must be finite"));
            }
        }
        if let Some(e) = &self.embeddings {
            e.validate()?;
        }
        Ok(())
    }

    /// Panel-style campaigns for estimator recovery: 20 hashtags on 5,000
    /// users, one unexposed arrival per bin before trending.
    pub fn recovery(seed: u64, lambda_true: f64) -> Self {
        SimConfig {
            seed,
            lambda_true,
            embeddings: None,
            ..Default::default()
        }
    }

    /// Network-dominated campaigns: 150 participants per hashtag and
    /// supercritical network adoption with sparse unexposed arrivals. Pooled
    /// over ten consecutive seeds, about 45% of adopters see no template
    /// before adopting and about 2.5% see nothing at all. Single corpora
    /// scatter by roughly 0.05 around these values because each seed draws
    /// its own graph.
    pub fn exposure_curve(seed: u64) -> Self {
        SimConfig {
            seed,
            n_participants: 150,
            adoption_prob: 0.4,
            retweet_prob: 0.64,
            base_trending_rate: 0.047,
            embeddings: None,
            ..Default::default()
        }
    }

    /// One topic-separated campaign large enough for the default TPR
    /// minimum: 300 distinct templates in cluster 0, normal tweets spread
    /// over the other seven orthogonal clusters except for 5% that drift
    /// onto the template topic.
    pub fn persistence(seed: u64) -> Self {
        SimConfig {
            seed,
            n_users: 20_000,
            n_hashtags: 1,
            n_participants: 600,
            n_templates: 300,
            adoption_prob: 0.02,
            base_trending_rate: 9.0,
            embeddings: Some(EmbeddingConfig {
                normal_template_share: 0.05,
                ..Default::default()
            }),
            ..Default::default()
        }
    }

    /// Simulated bin range relative to the true onset, inclusive.
    pub fn simulated_bins(&self) -> (i64, i64) {
        let pad = self.uncertainty_s / self.bin_seconds.max(1);
        (self.window.0 - pad, self.window.1 + pad)
    }

    fn rate_log_offset(&self, campaign: usize) -> f64 {
        self.rate_log_offsets.get(campaign).copied().unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AdoptionChannel {
    /// Participant posting a template.
    Seed,
    Network,
    Trending,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignTruth {
    pub hashtag: String,
    pub true_onset_ts: i64,
    pub recorded_onset_ts: i64,
    pub rate_log_offset: f64,
    pub participants: Vec<UserId>,
    /// Unexposed arrivals drawn per simulated bin, earliest first.
    pub arrivals: Vec<u64>,
    /// Arrivals lost because no unexposed user was left.
    pub arrivals_unfilled: u64,
    pub labels: BTreeMap<UserId, AdoptionChannel>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub seed: u64,
    pub lambda_true: f64,
    pub rho_true: Option<f64>,
    pub campaigns: Vec<CampaignTruth>,
}

#[derive(Debug, Clone)]
pub struct Simulation {
    pub corpus: Corpus,
    pub truth: GroundTruth,
}

impl Simulation {
    /// Writes the datastore files plus `ground_truth.json`.
    pub fn write_dir(&self, dir: &Path) -> Result<(), SimError> {
        self.corpus.write_dir(dir)?;
        let mut w = BufWriter::new(File::create(dir.join(GROUND_TRUTH_FILE))?);
        serde_json::to_writer_pretty(&mut w, &self.truth)?;
        w.write_all(b"\n")?;
        w.flush()?;
        Ok(())
    }
}

/// Directed preferential attachment: node `v` follows `min(m, v)` distinct
/// earlier nodes, each chosen with probability proportional to followers + 1.
/// Returns (follower, followee) pairs.
pub fn preferential_attachment<R: Rng>(n: usize, m: usize, rng: &mut R) -> Vec<(UserId, UserId)> {
    let mut urn: Vec<u32> = Vec::with_capacity(n * (m + 1));
    let mut edges = Vec::with_capacity(n * m);
    let mut chosen = Vec::with_capacity(m);
    for v in 0..n {
        chosen.clear();
        let k = m.min(v);
        while chosen.len() < k {
            let u = urn[rng.random_range(0..urn.len())];
            if !chosen.contains(&u) {
                chosen.push(u);
            }
        }
        for &u in &chosen {
            edges.push((v as UserId, u as UserId));
            urn.push(u);
        }
        urn.push(v as u32);
    }
    edges
}

/// Shared graph of a simulated corpus. Turkey mode adds the dedicated seed
/// accounts `n_users..n_users + n_participants`, each following
/// `edges_per_user` uniform regular users and followed by nobody.
pub fn generate_graph(config: &SimConfig) -> Result<FollowerGraph, SimError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(GRAPH_STREAM);
    let mut edges = preferential_attachment(config.n_users, config.edges_per_user, &mut rng);
    if config.turkey_mode {
        let k = config.edges_per_user.min(config.n_users);
        for p in seed_accounts(config) {
            for u in sample(&mut rng, config.n_users, k) {
                edges.push((p, u as UserId));
            }
        }
    }
    Ok(FollowerGraph::from_edges(edges))
}

fn seed_accounts(config: &SimConfig) -> impl Iterator<Item = UserId> {
    let n = config.n_users as UserId;
    n..n + config.n_participants as UserId
}

pub fn campaign_hashtag(index: usize) -> String {
    format!("sim{index:03}")
}

fn template_text(hashtag: &str, template: usize) -> String {
    format!("#{hashtag} stand with the movement today message {template} share widely")
}

fn normal_text<R: Rng>(hashtag: &str, rng: &mut R) -> String {
    let mut s = format!("#{hashtag}");
    for _ in 0..NORMAL_TOKENS {
        s.push_str(&format!(" w{}", rng.random_range(0..VOCABULARY)));
    }
    s
}

#[derive(Debug, Clone, Copy)]
enum Event {
    Seed { user: UserId, template: usize },
    Arrival,
    Adopt { user: UserId, source: usize },
}

struct EventQueue {
    heap: BinaryHeap<Reverse<(i64, usize)>>,
    events: Vec<Event>,
}

impl EventQueue {
    fn push(&mut self, ts: i64, e: Event) {
        self.heap.push(Reverse((ts, self.events.len())));
        self.events.push(e);
    }

    fn pop(&mut self) -> Option<(i64, Event)> {
        self.heap.pop().map(|Reverse((ts, seq))| (ts, self.events[seq]))
    }
}

/// True trending indicators of a bin starting `offset_s` after the true onset.
fn true_treatment(config: &SimConfig, offset_s: i64) -> (bool, bool) {
    let d = (0..config.trending_duration_s).contains(&offset_s);
    let d10 = config
        .top10
        .as_ref()
        .is_some_and(|t| (t.delay_s..t.delay_s + t.duration_s).contains(&offset_s));
    (d, d10)
}

fn recorded_timeline(config: &SimConfig, hashtag: &str, recorded: i64) -> Result<TrendingTimeline, SimError> {
    let mut intervals = vec![TrendingInterval {
        start_ts: recorded,
        end_ts: recorded + config.trending_duration_s,
        bucket: RankBucket::Top50,
    }];
    if let Some(t) = &config.top10 {
        intervals.push(TrendingInterval {
            start_ts: recorded + t.delay_s,
            end_ts: recorded + t.delay_s + t.duration_s,
            bucket: RankBucket::Top10,
        });
    }
    Ok(TrendingTimeline::new(hashtag, intervals, config.uncertainty_s)?)
}

struct CampaignOutput {
    tweets: Vec<TweetRecord>,
    timeline: TrendingTimeline,
    truth: CampaignTruth,
}

fn simulate_campaign(config: &SimConfig, graph: &FollowerGraph, index: usize) -> Result<CampaignOutput, SimError> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(index as u64));
    let hashtag = campaign_hashtag(index);
    let bin = config.bin_seconds;
    let onset = config.trending_onset_ts;
    let (lo, hi) = config.simulated_bins();
    let horizon_end = onset + (hi + 1) * bin;

    let participants: Vec<UserId> = if config.turkey_mode {
        seed_accounts(config).collect()
    } else {
        let mut p: Vec<UserId> = sample(&mut rng, config.n_users, config.n_participants)
            .into_iter()
            .map(|i| i as UserId)
            .collect();
        p.sort_unstable();
        p
    };
    let offset_bins = if config.uncertainty_s > 0 {
        rng.random_range(0..config.uncertainty_s / bin)
    } else {
        0
    };
    let recorded = onset - offset_bins * bin;

    let mut queue = EventQueue {
        heap: BinaryHeap::new(),
        events: Vec::new(),
    };
    for &user in &participants {
        let template = rng.random_range(0..config.n_templates);
        let ts = onset - config.campaign_lead_s + rng.random_range(0..config.seed_spread_s.max(1));
        queue.push(ts, Event::Seed { user, template });
    }
    let log_offset = config.rate_log_offset(index);
    let rho = config.top10.as_ref().map_or(0.0, |t| t.rho_true);
    let mut arrivals = Vec::with_capacity((hi - lo + 1) as usize);
    for k in lo..=hi {
        let (d, d10) = true_treatment(config, k * bin);
        let mean = config.base_trending_rate
            * (log_offset + config.lambda_true * f64::from(u8::from(d)) + rho * f64::from(u8::from(d10))).exp();
        let count = if mean > 0.0 {
            Poisson::new(mean)
                .map_err(|e| invalid(format!("arrival mean {mean}: {e}")))?
                .sample(&mut rng) as u64
        } else {
            0
        };
        let start = onset + k * bin;
        for _ in 0..count {
            queue.push(start + rng.random_range(0..bin), Event::Arrival);
        }
        arrivals.push(count);
    }

    let participant_set: HashSet<UserId> = participants.iter().copied().collect();
    let mut pool: IndexSet<UserId> = (0..config.n_users as UserId)
        .filter(|u| !participant_set.contains(u))
        .collect();
    let delay = Exp::new(1.0 / config.adoption_delay_mean_s).map_err(|e| invalid(e.to_string()))?;
    let base_id = (index as u64 + 1) * ID_STRIDE;
    let mut tweets: Vec<TweetRecord> = Vec::new();
    let mut adopted: HashSet<UserId> = HashSet::new();
    let mut retweets_of: HashMap<TweetId, usize> = HashMap::new();
    let mut labels = BTreeMap::new();
    let mut unfilled = 0;

    while let Some((ts, event)) = queue.pop() {
        if ts >= horizon_end {
            break;
        }
        let (user, kind, text, is_template) = match event {
            Event::Seed { user, template } => {
                labels.insert(user, AdoptionChannel::Seed);
                (user, TweetKind::Original, template_text(&hashtag, template), true)
            }
            Event::Arrival => {
                if pool.is_empty() {
                    unfilled += 1;
                    continue;
                }
                let pick = rng.random_range(0..pool.len());
                let user = pool.swap_remove_index(pick).expect("index in range");
                adopted.insert(user);
                labels.insert(user, AdoptionChannel::Trending);
                (user, TweetKind::Original, normal_text(&hashtag, &mut rng), false)
            }
            Event::Adopt { user, source } => {
                if !adopted.insert(user) {
                    continue;
                }
                labels.insert(user, AdoptionChannel::Network);
                let root_pos = tweets[source].root_id() - base_id;
                let root = &tweets[root_pos as usize];
                let retweet = rng.random_bool(config.retweet_prob);
                let capped = root.is_template
                    && retweets_of.get(&root.tweet_id).copied().unwrap_or(0) >= config.template_cascade_cap;
                if retweet && !capped {
                    *retweets_of.entry(root.tweet_id).or_default() += 1;
                    (
                        user,
                        TweetKind::Retweet { root_id: root.tweet_id },
                        String::new(),
                        false,
                    )
                } else {
                    (user, TweetKind::Original, normal_text(&hashtag, &mut rng), false)
                }
            }
        };
        let pos = tweets.len();
        tweets.push(TweetRecord {
            tweet_id: base_id + pos as u64,
            user_id: user,
            ts,
            hashtag: hashtag.clone(),
            kind,
            text,
            is_template,
        });
        for &f in graph.followers(user) {
            if participant_set.contains(&f) {
                continue;
            }
            pool.swap_remove(&f);
            if adopted.contains(&f) {
                continue;
            }
            if rng.random_bool(config.adoption_prob) {
                let wait = (config.min_adoption_delay_s as f64 + delay.sample(&mut rng)).ceil().max(1.0) as i64;
                queue.push(ts + wait, Event::Adopt { user: f, source: pos });
            }
        }
    }

    let timeline = recorded_timeline(config, &hashtag, recorded)?;
    Ok(CampaignOutput {
        tweets,
        timeline,
        truth: CampaignTruth {
            hashtag,
            true_onset_ts: onset,
            recorded_onset_ts: recorded,
            rate_log_offset: log_offset,
            participants,
            arrivals,
            arrivals_unfilled: unfilled,
            labels,
        },
    })
}

/// Draws planted-cluster unit vectors for `(tweet_id, is_template)` pairs.
pub fn generate_embeddings(
    config: &EmbeddingConfig,
    seed: u64,
    tweets: &[(TweetId, bool)],
) -> Result<EmbeddingMatrix, SimError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(EMBEDDING_STREAM);
    let dim = config.dim;
    let s = config.separation;
    let common = (1.0 - s) / (dim as f64).sqrt();
    let centroids: Vec<Vec<f64>> = (0..config.clusters)
        .map(|i| {
            let mut v = vec![common; dim];
            v[i] += s;
            normalize(&mut v);
            v
        })
        .collect();
    let normal_clusters: Vec<usize> = {
        let c: Vec<usize> = (0..config.clusters)
            .filter(|c| !config.template_clusters.contains(c))
            .collect();
        if c.is_empty() {
            (0..config.clusters).collect()
        } else {
            c
        }
    };
    let pick = |rng: &mut ChaCha8Rng, set: &[usize]| set[rng.random_range(0..set.len())];
    let sd = config.noise / (dim as f64).sqrt();
    let mut matrix = EmbeddingMatrix::new(dim);
    for &(id, is_template) in tweets {
        let cluster = if is_template || rng.random_bool(config.normal_template_share) {
            pick(&mut rng, &config.template_clusters)
        } else {
            pick(&mut rng, &normal_clusters)
        };
        let mut v: Vec<f64> = centroids[cluster]
            .iter()
            .map(|&c| {
                let z: f64 = StandardNormal.sample(&mut rng);
                c + sd * z
            })
            .collect();
        if !normalize(&mut v) {
            v.clone_from(&centroids[cluster]);
        }
        matrix.insert(id, v.into_iter().map(|x| x as f32).collect())?;
    }
    Ok(matrix)
}

fn normalize(v: &mut [f64]) -> bool {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return false;
    }
    v.iter_mut().for_each(|x| *x /= norm);
    true
}

/// Generates a full corpus. Campaigns run in parallel, each from its own
/// derived seed, so the result does not depend on the thread count.
pub fn generate(config: &SimConfig) -> Result<Simulation, SimError> {
    let graph = Arc::new(generate_graph(config)?);
    let outputs: Vec<CampaignOutput> = (0..config.n_hashtags)
        .into_par_iter()
        .map(|c| simulate_campaign(config, &graph, c))
        .collect::<Result<_, _>>()?;
    let mut embeddings = config.embeddings.as_ref().map(|e| EmbeddingMatrix::new(e.dim));
    let mut datasets = Vec::with_capacity(outputs.len());
    let mut campaigns = Vec::with_capacity(outputs.len());
    for (c, out) in outputs.into_iter().enumerate() {
        if let (Some(cfg), Some(matrix)) = (&config.embeddings, embeddings.as_mut()) {
            let originals: Vec<(TweetId, bool)> = out
                .tweets
                .iter()
                .filter(|t| t.is_original())
                .map(|t| (t.tweet_id, t.is_template))
                .collect();
            let part = generate_embeddings(cfg, config.seed.wrapping_add(c as u64), &originals)?;
            for (id, v) in part.iter() {
                matrix.insert(id, v.to_vec())?;
            }
        }
        datasets.push(CampaignDataset::new(
            out.truth.hashtag.clone(),
            out.tweets,
            Arc::clone(&graph),
            out.timeline,
        )?);
        campaigns.push(out.truth);
    }
    Ok(Simulation {
        corpus: Corpus {
            graph,
            datasets,
            embeddings,
        },
        truth: GroundTruth {
            seed: config.seed,
            lambda_true: config.lambda_true,
            rho_true: config.top10.as_ref().map(|t| t.rho_true),
            campaigns,
        },
    })
}

/// Classifies every campaign and fits each spec on the pooled panel.
pub fn fit_simulation(sim: &Simulation, specs: &[ModelSpec]) -> Result<Vec<GlmFit>, SimError> {
    let classes = exposure::classify_corpus(&sim.corpus.datasets);
    specs
        .iter()
        .map(|spec| {
            let panel = causal::build_panel(&sim.corpus.datasets, &classes, spec)?;
            Ok(causal::fit_quasipoisson(&panel.rows, spec)?)
        })
        .collect()
}
