//! Random instance generators and brute-force oracles shared by the
//! integration tests and the acceptance suite. Oracles use plain vectors and
//! edge sets only, never the library's indexes.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};

use trendforge::causal::PanelRow;
use trendforge::datastore::{
    CampaignDataset, EmbeddingMatrix, FollowerGraph, TrendingTimeline, TweetId, TweetKind, TweetRecord, UserId,
};
use trendforge::tpr::{CleanCorpus, CleanTweet};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn tweet(id: TweetId, user: UserId, ts: i64, root: Option<TweetId>, template: bool) -> TweetRecord {
    TweetRecord {
        tweet_id: id,
        user_id: user,
        ts,
        hashtag: "h".into(),
        kind: root.map_or(TweetKind::Original, |root_id| TweetKind::Retweet { root_id }),
        text: String::new(),
        is_template: template,
    }
}

/// Random (follower, followee) pairs without self-loops.
pub fn random_edges<R: Rng>(rng: &mut R, n_users: u64, p: f64) -> Vec<(UserId, UserId)> {
    let mut edges = Vec::new();
    for a in 0..n_users {
        for b in 0..n_users {
            if a != b && rng.random::<f64>() < p {
                edges.push((a, b));
            }
        }
    }
    edges
}

pub struct CascadeInstance {
    pub root: TweetRecord,
    /// Sorted by (ts, tweet_id).
    pub retweets: Vec<TweetRecord>,
    pub edges: Vec<(UserId, UserId)>,
}

/// One root and up to `max_retweets` retweets by up to `max_users` users.
/// Timestamps come from a narrow range so equal-ts ties are common, and
/// some users retweet more than once.
pub fn cascade_instance<R: Rng>(rng: &mut R, max_users: u64, max_retweets: usize) -> CascadeInstance {
    let n_users = rng.random_range(2..=max_users);
    let density = rng.random_range(0.005..0.15);
    let edges = random_edges(rng, n_users, density);
    let root_user = rng.random_range(0..n_users);
    let root_ts = 1000;
    let root = tweet(1, root_user, root_ts, None, rng.random_bool(0.5));
    let n_rt = rng.random_range(0..=max_retweets);
    let span = rng.random_range(1..=(n_rt as i64).max(1));
    // distinct ids in random order so id order and time order disagree
    let mut ids: Vec<TweetId> = (2..2 + n_rt as u64).collect();
    ids.shuffle(rng);
    let mut retweets: Vec<TweetRecord> = ids
        .into_iter()
        .map(|id| {
            let ts = root_ts + rng.random_range(0..=span);
            tweet(id, rng.random_range(0..n_users), ts, Some(1), false)
        })
        .filter(|t| t.order_key() > (root_ts, 1))
        .collect();
    retweets.sort_by_key(|t| t.order_key());
    CascadeInstance { root, retweets, edges }
}

/// Parent of every kept retweet and children of every node.
pub struct CascadeOracle {
    pub parent: BTreeMap<TweetId, TweetId>,
    pub children: BTreeMap<TweetId, BTreeSet<TweetId>>,
    pub duplicates: usize,
}

/// Last-retweeter rule by exhaustive scan: each retweet attaches to the
/// latest earlier cascade node authored by someone the retweeter follows,
/// the smaller tweet id winning equal timestamps, else to the root. Only a
/// user's first retweet of the root is kept.
pub fn cascade_oracle(inst: &CascadeInstance) -> CascadeOracle {
    let follows: HashSet<(UserId, UserId)> = inst.edges.iter().copied().collect();
    let mut nodes: Vec<&TweetRecord> = vec![&inst.root];
    let mut parent = BTreeMap::new();
    let mut children: BTreeMap<TweetId, BTreeSet<TweetId>> = BTreeMap::new();
    children.insert(inst.root.tweet_id, BTreeSet::new());
    let mut seen = HashSet::new();
    let mut duplicates = 0;
    for rt in &inst.retweets {
        if !seen.insert(rt.user_id) {
            duplicates += 1;
            continue;
        }
        let mut best: Option<&TweetRecord> = None;
        for cand in &nodes {
            if !follows.contains(&(rt.user_id, cand.user_id)) {
                continue;
            }
            best = match best {
                None => Some(cand),
                Some(b) if cand.ts > b.ts || (cand.ts == b.ts && cand.tweet_id < b.tweet_id) => Some(cand),
                keep => keep,
            };
        }
        let p = best.unwrap_or(&inst.root).tweet_id;
        parent.insert(rt.tweet_id, p);
        children.get_mut(&p).unwrap().insert(rt.tweet_id);
        children.insert(rt.tweet_id, BTreeSet::new());
        nodes.push(rt);
    }
    CascadeOracle {
        parent,
        children,
        duplicates,
    }
}

pub struct ExposureInstance {
    pub tweets: Vec<TweetRecord>,
    pub edges: Vec<(UserId, UserId)>,
    pub n_users: u64,
}

/// Random hashtag activity on up to `max_users` users: originals (some
/// templates) and retweets of earlier originals, with tied timestamps.
pub fn exposure_instance<R: Rng>(rng: &mut R, max_users: u64) -> ExposureInstance {
    let n_users = rng.random_range(2..=max_users);
    let density = rng.random_range(0.002..0.08);
    let edges = random_edges(rng, n_users, density);
    let n_tweets = rng.random_range(1..=(3 * n_users as usize));
    let span = rng.random_range(1..=n_tweets as i64);
    let mut ids: Vec<TweetId> = (1..=n_tweets as u64).collect();
    ids.shuffle(rng);
    let mut tweets: Vec<TweetRecord> = ids
        .into_iter()
        .map(|id| {
            let ts = rng.random_range(0..=span);
            tweet(id, rng.random_range(0..n_users), ts, None, rng.random_bool(0.3))
        })
        .collect();
    tweets.sort_by_key(|t| t.order_key());
    // turn some tweets into retweets of an earlier original
    for i in 1..tweets.len() {
        if rng.random_bool(0.4) {
            let j = rng.random_range(0..i);
            if let TweetKind::Original = tweets[j].kind {
                let root = tweets[j].tweet_id;
                tweets[i].kind = TweetKind::Retweet { root_id: root };
                tweets[i].is_template = false;
            }
        }
    }
    ExposureInstance {
        tweets,
        edges,
        n_users,
    }
}

impl ExposureInstance {
    pub fn dataset(&self) -> CampaignDataset {
        CampaignDataset::new(
            "h",
            self.tweets.clone(),
            Arc::new(FollowerGraph::from_edges(self.edges.iter().copied())),
            TrendingTimeline::default(),
        )
        .expect("generated instance is valid")
    }
}

/// (template, normal, distinct exposing friends) for `user`: a join of
/// every tweet against every follow edge, keeping tweets strictly before the
/// user's first (ts, tweet_id).
pub fn exposure_oracle(tweets: &[TweetRecord], edges: &[(UserId, UserId)], user: UserId) -> Option<(u64, u64, u64)> {
    let first = tweets
        .iter()
        .filter(|t| t.user_id == user)
        .map(|t| (t.ts, t.tweet_id))
        .min()?;
    let template_of = |t: &TweetRecord| match t.kind {
        TweetKind::Original => t.is_template,
        TweetKind::Retweet { root_id } => tweets.iter().any(|r| r.tweet_id == root_id && r.is_template),
    };
    let friends: BTreeSet<UserId> = edges
        .iter()
        .filter(|(f, g)| *f == user && f != g)
        .map(|&(_, g)| g)
        .collect();
    let (mut template, mut normal) = (0, 0);
    let mut exposing = BTreeSet::new();
    for t in tweets {
        if friends.contains(&t.user_id) && (t.ts, t.tweet_id) < first {
            exposing.insert(t.user_id);
            if template_of(t) {
                template += 1;
            } else {
                normal += 1;
            }
        }
    }
    Some((template, normal, exposing.len() as u64))
}

fn unit(v: Vec<f64>) -> Vec<f32> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter().map(|x| (x / n) as f32).collect()
}

/// `n` unique tweets with unit vectors in `dim` dimensions. With `ties`,
/// vectors are drawn from a small pool so many similarities coincide and
/// the tweet-id tie-break decides neighborhood boundaries.
pub fn tpr_instance<R: Rng>(rng: &mut R, n: usize, dim: usize, ties: bool) -> (CleanCorpus, EmbeddingMatrix) {
    let pool: Vec<Vec<f32>> = (0..if ties { 1 + n / 8 } else { n })
        .map(|_| unit((0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()))
        .collect();
    let mut ids: Vec<TweetId> = (0..n as u64).map(|i| 10 + 3 * i).collect();
    ids.shuffle(rng);
    let mut m = EmbeddingMatrix::new(dim);
    let mut tweets = Vec::with_capacity(n);
    for (i, id) in ids.into_iter().enumerate() {
        let v = if ties {
            pool[rng.random_range(0..pool.len())].clone()
        } else {
            pool[i].clone()
        };
        m.insert(id, v).unwrap();
        tweets.push(CleanTweet {
            tweet_id: id,
            cleaned_text: format!("t{id}"),
            is_template: rng.random_bool(0.3),
        });
    }
    tweets.sort_by_key(|t| t.tweet_id);
    (
        CleanCorpus {
            tweets,
            dropped_empty: 0,
            duplicates_collapsed: 0,
        },
        m,
    )
}

fn dot(a: &[f32], b: &[f32]) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        s += f64::from(a[i]) * f64::from(b[i]);
    }
    s
}

/// Exhaustive k-NN: sort every other tweet by (similarity desc, id asc).
pub fn knn_oracle(m: &EmbeddingMatrix, tweets: &[CleanTweet], query: TweetId, k: usize) -> Vec<TweetId> {
    let q = m.get(query).unwrap();
    let mut all: Vec<(f64, TweetId)> = tweets
        .iter()
        .filter(|t| t.tweet_id != query)
        .map(|t| (dot(q, m.get(t.tweet_id).unwrap()), t.tweet_id))
        .collect();
    all.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
    all.into_iter().take(k).map(|(_, id)| id).collect()
}

/// (tweet_id, template neighbors, raw TPR, normalized TPR) per tweet.
pub fn tpr_oracle(
    m: &EmbeddingMatrix,
    corpus: &CleanCorpus,
    k: usize,
) -> Vec<(TweetId, usize, f64, Option<f64>)> {
    let n = corpus.tweets.len();
    let templates: BTreeSet<TweetId> = corpus
        .tweets
        .iter()
        .filter(|t| t.is_template)
        .map(|t| t.tweet_id)
        .collect();
    let t_count = templates.len();
    corpus
        .tweets
        .iter()
        .map(|t| {
            let c = knn_oracle(m, &corpus.tweets, t.tweet_id, k)
                .iter()
                .filter(|id| templates.contains(id))
                .count();
            let normalized = (t_count > 0).then(|| (c * n) as f64 / (k * t_count) as f64);
            (t.tweet_id, c, c as f64 / k as f64, normalized)
        })
        .collect()
}

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
pub fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())
            .unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        let (top, rest) = a.split_at_mut(col + 1);
        let pivot = &top[col];
        for (k, r) in rest.iter_mut().enumerate() {
            let f = r[col] / pivot[col];
            for (x, p) in r[col..].iter_mut().zip(&pivot[col..]) {
                *x -= f * p;
            }
            b[col + 1 + k] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|c| a[row][c] * x[c]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    x
}

pub fn gauss_inverse(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let cols: Vec<Vec<f64>> = (0..n)
        .map(|j| gauss_solve(a.to_vec(), (0..n).map(|i| f64::from(u8::from(i == j))).collect()))
        .collect();
    (0..n).map(|i| (0..n).map(|j| cols[j][i]).collect()).collect()
}

fn mean_of(x: &[Vec<f64>], beta: &[f64]) -> Vec<f64> {
    x.iter()
        .map(|r| r.iter().zip(beta).map(|(a, b)| a * b).sum::<f64>().exp())
        .collect()
}

/// Newton-Raphson on the Poisson log-likelihood from a zero start with the
/// intercept at log(mean y); the first column must be the intercept.
pub fn newton_poisson(x: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
    let p = x[0].len();
    let mut beta = vec![0.0; p];
    beta[0] = (y.iter().sum::<f64>() / y.len() as f64).ln();
    for _ in 0..200 {
        let mu = mean_of(x, &beta);
        let mut grad = vec![0.0; p];
        let mut hess = vec![vec![0.0; p]; p];
        for i in 0..x.len() {
            for a in 0..p {
                grad[a] += x[i][a] * (y[i] - mu[i]);
                for b in 0..p {
                    hess[a][b] += mu[i] * x[i][a] * x[i][b];
                }
            }
        }
        let step = gauss_solve(hess, grad);
        let size = step.iter().fold(0.0f64, |m, s| m.max(s.abs()));
        for a in 0..p {
            beta[a] += step[a];
        }
        if size < 1e-13 {
            break;
        }
    }
    beta
}

/// G/(G-1) A^-1 B A^-1 with A = sum mu x x' and B the sum over clusters of
/// outer products of within-cluster score sums.
pub fn sandwich(x: &[Vec<f64>], y: &[f64], beta: &[f64], clusters: &[usize]) -> Vec<Vec<f64>> {
    let p = beta.len();
    let mu = mean_of(x, beta);
    let mut a = vec![vec![0.0; p]; p];
    for i in 0..x.len() {
        for r in 0..p {
            for c in 0..p {
                a[r][c] += mu[i] * x[i][r] * x[i][c];
            }
        }
    }
    let groups: BTreeSet<usize> = clusters.iter().copied().collect();
    let mut b = vec![vec![0.0; p]; p];
    for &g in &groups {
        let mut s = vec![0.0; p];
        for i in (0..x.len()).filter(|&i| clusters[i] == g) {
            for r in 0..p {
                s[r] += x[i][r] * (y[i] - mu[i]);
            }
        }
        for r in 0..p {
            for c in 0..p {
                b[r][c] += s[r] * s[c];
            }
        }
    }
    let ai = gauss_inverse(&a);
    let g = groups.len() as f64;
    let mul = |l: &[Vec<f64>], r: &[Vec<f64>]| -> Vec<Vec<f64>> {
        (0..p)
            .map(|i| (0..p).map(|j| (0..p).map(|k| l[i][k] * r[k][j]).sum()).collect())
            .collect()
    };
    mul(&mul(&ai, &b), &ai)
        .into_iter()
        .map(|row| row.into_iter().map(|v| v * g / (g - 1.0)).collect())
        .collect()
}

/// Panel of `n_hashtags` hashtags by `bins` bins centered on onset, with
/// Poisson outcomes from a known log-linear model.
pub fn glm_panel(seed: u64, n_hashtags: usize, bins: i64) -> Vec<PanelRow> {
    let mut rng = rng(seed);
    let mut rows = Vec::new();
    for h in 0..n_hashtags {
        let fe = 0.3 * h as f64;
        for t in -bins / 2..bins - bins / 2 {
            let d = u8::from(t >= 0);
            let e: u64 = rng.random_range(0..6);
            let eta = 1.5 + fe + 0.7 * f64::from(d) + 0.02 * t as f64 - 0.03 * f64::from(d) * t as f64
                + 0.05 * e as f64;
            let y = Poisson::new(eta.exp()).unwrap().sample(&mut rng) as u64;
            rows.push(PanelRow {
                hashtag: format!("h{h}"),
                t,
                y,
                e,
                d,
                d10: None,
            });
        }
    }
    rows
}
