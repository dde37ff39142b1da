//! Domain types and file loaders.
//!
//! Everything downstream works on the immutable types defined here. Loaders
//! validate completely: a malformed input yields an error and never a
//! partially populated value.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type TweetId = u64;
pub type UserId = u64;

/// Magic bytes that open an embeddings file.
pub const EMBEDDING_MAGIC: &[u8; 4] = b"EMB1";
/// Allowed deviation from unit norm before a vector is rejected.
pub const UNIT_NORM_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Error)]
pub enum DatastoreError {
    #[error("malformed line {line}: {reason}")]
    MalformedLine { line: usize, reason: String },
    #[error("duplicate tweet id {0}")]
    DuplicateTweetId(TweetId),
    #[error("retweet {tweet_id} references missing or non-original root {root_id}")]
    DanglingRetweetRoot { tweet_id: TweetId, root_id: TweetId },
    #[error("retweet {tweet_id} does not come after its root {root_id}")]
    RetweetBeforeRoot { tweet_id: TweetId, root_id: TweetId },
    #[error("bad magic bytes in embeddings file")]
    BadMagic,
    #[error("embedding payload does not match header: {0}")]
    DimMismatch(String),
    #[error("embedding for tweet {0} is not unit norm")]
    NonUnitVector(TweetId),
    #[error("duplicate embedding row for tweet {0}")]
    DuplicateEmbedding(TweetId),
    #[error("invalid trending timeline for {hashtag}: {reason}")]
    InvalidTimeline { hashtag: String, reason: String },
    #[error("dataset {hashtag} is invalid: {reason}")]
    InvalidDataset { hashtag: String, reason: String },
    #[error("missing input file {0}")]
    MissingInput(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, DatastoreError>;

/// Hashtags are case-insensitive on the platform; keys are folded at load.
pub fn fold_hashtag(raw: &str) -> String {
    raw.trim().trim_start_matches('#').to_lowercase()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TweetKind {
    Original,
    Retweet { root_id: TweetId },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TweetRecord {
    pub tweet_id: TweetId,
    pub user_id: UserId,
    pub ts: i64,
    pub hashtag: String,
    pub kind: TweetKind,
    pub text: String,
    pub is_template: bool,
}

impl TweetRecord {
    /// Total order used everywhere for "before" and "after".
    pub fn order_key(&self) -> (i64, TweetId) {
        (self.ts, self.tweet_id)
    }

    pub fn is_original(&self) -> bool {
        matches!(self.kind, TweetKind::Original)
    }

    /// The original this tweet belongs to (itself for originals).
    pub fn root_id(&self) -> TweetId {
        match self.kind {
            TweetKind::Original => self.tweet_id,
            TweetKind::Retweet { root_id } => root_id,
        }
    }
}

/// Wire form of one JSONL line.
#[derive(Debug, Serialize, Deserialize)]
struct TweetLine {
    tweet_id: u64,
    user_id: u64,
    ts: i64,
    hashtag: String,
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    root_id: Option<u64>,
    #[serde(default)]
    text: String,
    #[serde(default)]
    template: bool,
}

impl TweetLine {
    fn into_record(self, line: usize) -> Result<TweetRecord> {
        let malformed = |reason: &str| DatastoreError::MalformedLine {
            line,
            reason: reason.to_string(),
        };
        let kind = match (self.kind.as_str(), self.root_id) {
            ("original", None) => TweetKind::Original,
            ("original", Some(_)) => return Err(malformed("root_id given on an original")),
            ("retweet", Some(root_id)) => TweetKind::Retweet { root_id },
            ("retweet", None) => return Err(malformed("retweet without root_id")),
            _ => return Err(malformed("kind must be \"original\" or \"retweet\"")),
        };
        if self.template && kind != TweetKind::Original {
            return Err(malformed("template flag set on a retweet"));
        }
        let hashtag = fold_hashtag(&self.hashtag);
        if hashtag.is_empty() {
            return Err(malformed("empty hashtag"));
        }
        Ok(TweetRecord {
            tweet_id: self.tweet_id,
            user_id: self.user_id,
            ts: self.ts,
            hashtag,
            kind,
            text: self.text,
            is_template: self.template,
        })
    }

    fn from_record(r: &TweetRecord) -> Self {
        let (kind, root_id) = match r.kind {
            TweetKind::Original => ("original", None),
            TweetKind::Retweet { root_id } => ("retweet", Some(root_id)),
        };
        TweetLine {
            tweet_id: r.tweet_id,
            user_id: r.user_id,
            ts: r.ts,
            hashtag: r.hashtag.clone(),
            kind: kind.to_string(),
            root_id,
            text: r.text.clone(),
            template: r.is_template,
        }
    }
}

/// Parses tweets JSONL from any reader. Blank lines are skipped.
pub fn parse_tweets<R: Read>(reader: R) -> Result<Vec<TweetRecord>> {
    let mut records = Vec::new();
    for (idx, line) in BufReader::new(reader).lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: TweetLine =
            serde_json::from_str(&line).map_err(|e| DatastoreError::MalformedLine {
                line: line_no,
                reason: e.to_string(),
            })?;
        records.push(parsed.into_record(line_no)?);
    }
    validate_tweets(&mut records)?;
    Ok(records)
}

/// Sorts by (ts, tweet_id) and checks id uniqueness and root references.
fn validate_tweets(records: &mut [TweetRecord]) -> Result<()> {
    records.sort_by_key(TweetRecord::order_key);
    let mut by_id: HashMap<TweetId, usize> = HashMap::with_capacity(records.len());
    for (i, r) in records.iter().enumerate() {
        if by_id.insert(r.tweet_id, i).is_some() {
            return Err(DatastoreError::DuplicateTweetId(r.tweet_id));
        }
    }
    for r in records.iter() {
        if let TweetKind::Retweet { root_id } = r.kind {
            let dangling = DatastoreError::DanglingRetweetRoot {
                tweet_id: r.tweet_id,
                root_id,
            };
            let root = by_id.get(&root_id).map(|&i| &records[i]).ok_or(dangling)?;
            if !root.is_original() || root.hashtag != r.hashtag {
                return Err(DatastoreError::DanglingRetweetRoot {
                    tweet_id: r.tweet_id,
                    root_id,
                });
            }
            if root.order_key() >= r.order_key() {
                return Err(DatastoreError::RetweetBeforeRoot {
                    tweet_id: r.tweet_id,
                    root_id,
                });
            }
        }
    }
    Ok(())
}

pub fn load_tweets(path: &Path) -> Result<Vec<TweetRecord>> {
    parse_tweets(open(path)?)
}

pub fn write_tweets<W: Write>(writer: W, tweets: &[TweetRecord]) -> Result<()> {
    let mut w = BufWriter::new(writer);
    for t in tweets {
        let line = serde_json::to_string(&TweetLine::from_record(t))
            .expect("tweet line serialization is infallible");
        writeln!(w, "{line}")?;
    }
    w.flush()?;
    Ok(())
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => DatastoreError::MissingInput(path.display().to_string()),
        _ => DatastoreError::Io(e),
    })
}

/// Directed follow relation. `friends(u)` are the accounts `u` follows,
/// `followers(u)` the accounts following `u`. Adjacency lists are sorted.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FollowerGraph {
    friends: HashMap<UserId, Vec<UserId>>,
    followers: HashMap<UserId, Vec<UserId>>,
    edge_count: usize,
    self_edges_dropped: usize,
}

impl FollowerGraph {
    /// Builds a graph from (follower, followee) pairs, dropping duplicates
    /// and self-edges.
    pub fn from_edges<I: IntoIterator<Item = (UserId, UserId)>>(edges: I) -> Self {
        let mut friends: HashMap<UserId, Vec<UserId>> = HashMap::new();
        let mut self_edges_dropped = 0;
        for (follower, followee) in edges {
            if follower == followee {
                self_edges_dropped += 1;
                continue;
            }
            friends.entry(follower).or_default().push(followee);
        }
        let mut followers: HashMap<UserId, Vec<UserId>> = HashMap::new();
        let mut edge_count = 0;
        for (&u, list) in friends.iter_mut() {
            list.sort_unstable();
            list.dedup();
            edge_count += list.len();
            for &v in list.iter() {
                followers.entry(v).or_default().push(u);
            }
        }
        for list in followers.values_mut() {
            list.sort_unstable();
        }
        FollowerGraph {
            friends,
            followers,
            edge_count,
            self_edges_dropped,
        }
    }

    pub fn friends(&self, user: UserId) -> &[UserId] {
        self.friends.get(&user).map_or(&[], Vec::as_slice)
    }

    pub fn followers(&self, user: UserId) -> &[UserId] {
        self.followers.get(&user).map_or(&[], Vec::as_slice)
    }

    /// True when `follower` follows `followee`.
    pub fn follows(&self, follower: UserId, followee: UserId) -> bool {
        self.friends(follower).binary_search(&followee).is_ok()
    }

    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    pub fn self_edges_dropped(&self) -> usize {
        self.self_edges_dropped
    }

    /// All edges in ascending (follower, followee) order.
    pub fn edges(&self) -> Vec<(UserId, UserId)> {
        let mut out: Vec<_> = self
            .friends
            .iter()
            .flat_map(|(&u, vs)| vs.iter().map(move |&v| (u, v)))
            .collect();
        out.sort_unstable();
        out
    }

    /// Every user that appears on either end of an edge, ascending.
    pub fn users(&self) -> Vec<UserId> {
        let mut all: Vec<UserId> = self
            .friends
            .keys()
            .chain(self.followers.keys())
            .copied()
            .collect::<HashSet<_>>()
            .into_iter()
            .collect();
        all.sort_unstable();
        all
    }
}

pub fn parse_graph<R: Read>(reader: R) -> Result<FollowerGraph> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);
    let mut edges = Vec::new();
    for (idx, row) in rdr.records().enumerate() {
        let line = idx + 1;
        let row = row.map_err(|e| DatastoreError::MalformedLine {
            line,
            reason: e.to_string(),
        })?;
        let line = row.position().map_or(line, |p| p.line() as usize);
        if row.len() != 2 {
            return Err(DatastoreError::MalformedLine {
                line,
                reason: format!("expected 2 fields, found {}", row.len()),
            });
        }
        let parse = |s: &str| {
            s.parse::<u64>().map_err(|e| DatastoreError::MalformedLine {
                line,
                reason: format!("{s:?}: {e}"),
            })
        };
        edges.push((parse(&row[0])?, parse(&row[1])?));
    }
    let graph = FollowerGraph::from_edges(edges);
    if graph.self_edges_dropped() > 0 {
        log::warn!("dropped {} self-edges", graph.self_edges_dropped());
    }
    Ok(graph)
}

pub fn load_graph(path: &Path) -> Result<FollowerGraph> {
    parse_graph(open(path)?)
}

pub fn write_graph<W: Write>(writer: W, graph: &FollowerGraph) -> Result<()> {
    let mut w = BufWriter::new(writer);
    for (u, v) in graph.edges() {
        writeln!(w, "{u},{v}")?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RankBucket {
    Top50,
    Top10,
}

impl RankBucket {
    pub fn as_str(self) -> &'static str {
        match self {
            RankBucket::Top50 => "top50",
            RankBucket::Top10 => "top10",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrendingInterval {
    pub start_ts: i64,
    pub end_ts: i64,
    pub bucket: RankBucket,
}

/// Per-hashtag trending record. Times are as recorded; `uncertainty_s` is
/// the reporting granularity (0 for 5-minute data, 3600 for hourly).
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TrendingTimeline {
    pub hashtag: String,
    pub intervals: Vec<TrendingInterval>,
    pub uncertainty_s: i64,
}

impl TrendingTimeline {
    /// Builds and validates a timeline. Intervals are sorted by (bucket, start).
    pub fn new(
        hashtag: impl Into<String>,
        mut intervals: Vec<TrendingInterval>,
        uncertainty_s: i64,
    ) -> Result<Self> {
        let hashtag = hashtag.into();
        let invalid = |reason: String| DatastoreError::InvalidTimeline {
            hashtag: hashtag.clone(),
            reason,
        };
        if uncertainty_s < 0 {
            return Err(invalid("negative uncertainty".into()));
        }
        intervals.sort_by_key(|iv| (iv.bucket, iv.start_ts, iv.end_ts));
        for iv in &intervals {
            if iv.start_ts >= iv.end_ts {
                return Err(invalid(format!(
                    "interval [{}, {}) is empty",
                    iv.start_ts, iv.end_ts
                )));
            }
        }
        for pair in intervals.windows(2) {
            if pair[0].bucket == pair[1].bucket && pair[1].start_ts < pair[0].end_ts {
                return Err(invalid(format!(
                    "overlapping {} intervals at {}",
                    pair[0].bucket.as_str(),
                    pair[1].start_ts
                )));
            }
        }
        let timeline = TrendingTimeline {
            hashtag: hashtag.clone(),
            intervals,
            uncertainty_s,
        };
        for iv in timeline.bucket(RankBucket::Top10) {
            if !timeline.top50_covers(iv.start_ts, iv.end_ts) {
                return Err(invalid(format!(
                    "top10 interval [{}, {}) not inside top50 trending",
                    iv.start_ts, iv.end_ts
                )));
            }
        }
        Ok(timeline)
    }

    pub fn bucket(&self, bucket: RankBucket) -> impl Iterator<Item = &TrendingInterval> {
        self.intervals.iter().filter(move |iv| iv.bucket == bucket)
    }

    /// Earliest recorded top-50 start, if the hashtag ever trended.
    pub fn onset(&self) -> Option<i64> {
        self.bucket(RankBucket::Top50).map(|iv| iv.start_ts).min()
    }

    pub fn has_top10(&self) -> bool {
        self.bucket(RankBucket::Top10).next().is_some()
    }

    /// Whether [start, end) is covered by the union of top-50 intervals.
    fn top50_covers(&self, start: i64, end: i64) -> bool {
        let mut cursor = start;
        for iv in self.bucket(RankBucket::Top50) {
            if iv.start_ts > cursor {
                break;
            }
            cursor = cursor.max(iv.end_ts);
            if cursor >= end {
                return true;
            }
        }
        cursor >= end
    }
}

/// Parses trending CSV. A leading `hashtag,...` header row is optional.
pub fn parse_trending<R: Read>(reader: R) -> Result<BTreeMap<String, TrendingTimeline>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);
    let mut grouped: BTreeMap<String, (Vec<TrendingInterval>, i64)> = BTreeMap::new();
    for (idx, row) in rdr.records().enumerate() {
        let row = row.map_err(|e| DatastoreError::MalformedLine {
            line: idx + 1,
            reason: e.to_string(),
        })?;
        let line = row.position().map_or(idx + 1, |p| p.line() as usize);
        if idx == 0 && row.get(0) == Some("hashtag") {
            continue;
        }
        let malformed = |reason: String| DatastoreError::MalformedLine { line, reason };
        if row.len() != 5 {
            return Err(malformed(format!("expected 5 fields, found {}", row.len())));
        }
        let int = |s: &str| {
            s.parse::<i64>()
                .map_err(|e| malformed(format!("{s:?}: {e}")))
        };
        let bucket = match &row[3] {
            "top50" => RankBucket::Top50,
            "top10" => RankBucket::Top10,
            other => return Err(malformed(format!("unknown rank bucket {other:?}"))),
        };
        let hashtag = fold_hashtag(&row[0]);
        let uncertainty = int(&row[4])?;
        let interval = TrendingInterval {
            start_ts: int(&row[1])?,
            end_ts: int(&row[2])?,
            bucket,
        };
        let entry = grouped
            .entry(hashtag.clone())
            .or_insert_with(|| (Vec::new(), uncertainty));
        if entry.1 != uncertainty {
            return Err(malformed(format!(
                "uncertainty for {hashtag} changes from {} to {uncertainty}",
                entry.1
            )));
        }
        entry.0.push(interval);
    }
    grouped
        .into_iter()
        .map(|(h, (ivs, u))| TrendingTimeline::new(h.clone(), ivs, u).map(|t| (h, t)))
        .collect()
}

pub fn load_trending(path: &Path) -> Result<BTreeMap<String, TrendingTimeline>> {
    parse_trending(open(path)?)
}

pub fn write_trending<'a, W: Write>(
    writer: W,
    timelines: impl IntoIterator<Item = &'a TrendingTimeline>,
) -> Result<()> {
    let mut w = BufWriter::new(writer);
    writeln!(w, "hashtag,start_ts,end_ts,rank_bucket,uncertainty_s")?;
    for tl in timelines {
        for iv in &tl.intervals {
            writeln!(
                w,
                "{},{},{},{},{}",
                tl.hashtag,
                iv.start_ts,
                iv.end_ts,
                iv.bucket.as_str(),
                tl.uncertainty_s
            )?;
        }
    }
    w.flush()?;
    Ok(())
}

/// All tweets of one hashtag with the shared graph and its timeline.
#[derive(Debug, Clone)]
pub struct CampaignDataset {
    pub hashtag: String,
    tweets: Vec<TweetRecord>,
    index: HashMap<TweetId, usize>,
    pub graph: Arc<FollowerGraph>,
    pub timeline: TrendingTimeline,
}

impl CampaignDataset {
    /// Validates and wraps one hashtag's tweets. Tweets are sorted by
    /// (ts, tweet_id) if they are not already.
    pub fn new(
        hashtag: impl Into<String>,
        mut tweets: Vec<TweetRecord>,
        graph: Arc<FollowerGraph>,
        timeline: TrendingTimeline,
    ) -> Result<Self> {
        let hashtag = hashtag.into();
        if let Some(t) = tweets.iter().find(|t| t.hashtag != hashtag) {
            return Err(DatastoreError::InvalidDataset {
                hashtag: hashtag.clone(),
                reason: format!("tweet {} belongs to {}", t.tweet_id, t.hashtag),
            });
        }
        if timeline.hashtag != hashtag && !timeline.intervals.is_empty() {
            return Err(DatastoreError::InvalidDataset {
                hashtag: hashtag.clone(),
                reason: format!("timeline belongs to {}", timeline.hashtag),
            });
        }
        validate_tweets(&mut tweets)?;
        let index = tweets
            .iter()
            .enumerate()
            .map(|(i, t)| (t.tweet_id, i))
            .collect();
        Ok(CampaignDataset {
            hashtag,
            tweets,
            index,
            graph,
            timeline,
        })
    }

    /// Tweets in (ts, tweet_id) order.
    pub fn tweets(&self) -> &[TweetRecord] {
        &self.tweets
    }

    pub fn tweet(&self, id: TweetId) -> Option<&TweetRecord> {
        self.index.get(&id).map(|&i| &self.tweets[i])
    }

    /// Template flag a tweet carries for exposure purposes: its root's flag.
    pub fn carries_template(&self, t: &TweetRecord) -> bool {
        match t.kind {
            TweetKind::Original => t.is_template,
            TweetKind::Retweet { root_id } => self.tweet(root_id).is_some_and(|r| r.is_template),
        }
    }

    /// Users who authored at least one template tweet in this hashtag.
    pub fn participants(&self) -> HashSet<UserId> {
        self.tweets
            .iter()
            .filter(|t| t.is_template)
            .map(|t| t.user_id)
            .collect()
    }

    /// Distinct authors in ascending id order.
    pub fn users(&self) -> Vec<UserId> {
        let mut users: Vec<_> = self.tweets.iter().map(|t| t.user_id).collect();
        users.sort_unstable();
        users.dedup();
        users
    }

    /// Each author's first tweet key (ts, tweet_id).
    pub fn first_uses(&self) -> HashMap<UserId, (i64, TweetId)> {
        let mut first = HashMap::new();
        for t in &self.tweets {
            first.entry(t.user_id).or_insert_with(|| t.order_key());
        }
        first
    }
}

/// Unit-norm embedding vectors keyed by tweet id.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EmbeddingMatrix {
    dim: usize,
    rows: BTreeMap<TweetId, Vec<f32>>,
}

impl EmbeddingMatrix {
    pub fn new(dim: usize) -> Self {
        EmbeddingMatrix {
            dim,
            rows: BTreeMap::new(),
        }
    }

    /// Inserts a row after checking dimension and norm; near-unit vectors
    /// are renormalized.
    pub fn insert(&mut self, id: TweetId, mut vector: Vec<f32>) -> Result<()> {
        if vector.len() != self.dim {
            return Err(DatastoreError::DimMismatch(format!(
                "row {id} has {} values, expected {}",
                vector.len(),
                self.dim
            )));
        }
        let norm = vector
            .iter()
            .map(|&x| f64::from(x) * f64::from(x))
            .sum::<f64>()
            .sqrt();
        if !norm.is_finite() || (norm - 1.0).abs() > UNIT_NORM_TOLERANCE {
            return Err(DatastoreError::NonUnitVector(id));
        }
        for x in vector.iter_mut() {
            *x = (f64::from(*x) / norm) as f32;
        }
        if self.rows.insert(id, vector).is_some() {
            return Err(DatastoreError::DuplicateEmbedding(id));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn get(&self, id: TweetId) -> Option<&[f32]> {
        self.rows.get(&id).map(Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = (TweetId, &[f32])> {
        self.rows.iter().map(|(&id, v)| (id, v.as_slice()))
    }
}

pub fn parse_embeddings(bytes: &[u8]) -> Result<EmbeddingMatrix> {
    if bytes.len() < 16 || &bytes[..4] != EMBEDDING_MAGIC {
        return Err(DatastoreError::BadMagic);
    }
    let dim = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let count = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
    if dim == 0 {
        return Err(DatastoreError::DimMismatch("dim is zero".into()));
    }
    let record = 8 + 4 * dim;
    let payload = &bytes[16..];
    let expected = (count as u128) * (record as u128);
    if payload.len() as u128 != expected {
        return Err(DatastoreError::DimMismatch(format!(
            "header promises {count} rows of dim {dim} ({expected} bytes), payload has {}",
            payload.len()
        )));
    }
    let mut matrix = EmbeddingMatrix::new(dim);
    for chunk in payload.chunks_exact(record) {
        let id = u64::from_le_bytes(chunk[..8].try_into().unwrap());
        let vector = chunk[8..]
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect();
        matrix.insert(id, vector)?;
    }
    Ok(matrix)
}

pub fn load_embeddings(path: &Path) -> Result<EmbeddingMatrix> {
    let mut bytes = Vec::new();
    open(path)?.read_to_end(&mut bytes)?;
    parse_embeddings(&bytes)
}

pub fn encode_embeddings(matrix: &EmbeddingMatrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + matrix.len() * (8 + 4 * matrix.dim()));
    out.extend_from_slice(EMBEDDING_MAGIC);
    out.extend_from_slice(&(matrix.dim() as u32).to_le_bytes());
    out.extend_from_slice(&(matrix.len() as u64).to_le_bytes());
    for (id, v) in matrix.iter() {
        out.extend_from_slice(&id.to_le_bytes());
        for x in v {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    out
}

pub fn write_embeddings(path: &Path, matrix: &EmbeddingMatrix) -> Result<()> {
    std::fs::write(path, encode_embeddings(matrix))?;
    Ok(())
}

/// Standard file names inside an input directory.
pub mod files {
    pub const TWEETS: &str = "tweets.jsonl";
    pub const GRAPH: &str = "graph.csv";
    pub const TRENDING: &str = "trending.csv";
    pub const EMBEDDINGS: &str = "embeddings.bin";
}

/// Every hashtag dataset of an input directory, sharing one graph.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub graph: Arc<FollowerGraph>,
    pub datasets: Vec<CampaignDataset>,
    pub embeddings: Option<EmbeddingMatrix>,
}

impl Corpus {
    /// Groups tweets by hashtag and attaches timelines. Hashtags without a
    /// trending row get an empty timeline.
    pub fn assemble(
        tweets: Vec<TweetRecord>,
        graph: FollowerGraph,
        mut timelines: BTreeMap<String, TrendingTimeline>,
        embeddings: Option<EmbeddingMatrix>,
    ) -> Result<Self> {
        let graph = Arc::new(graph);
        let mut grouped: BTreeMap<String, Vec<TweetRecord>> = BTreeMap::new();
        for t in tweets {
            grouped.entry(t.hashtag.clone()).or_default().push(t);
        }
        let datasets = grouped
            .into_iter()
            .map(|(h, ts)| {
                let timeline = timelines.remove(&h).unwrap_or_else(|| TrendingTimeline {
                    hashtag: h.clone(),
                    ..Default::default()
                });
                CampaignDataset::new(h, ts, Arc::clone(&graph), timeline)
            })
            .collect::<Result<Vec<_>>>()?;
        for h in timelines.keys() {
            log::warn!("trending rows for {h} have no tweets");
        }
        Ok(Corpus {
            graph,
            datasets,
            embeddings,
        })
    }

    /// Loads `tweets.jsonl`, `graph.csv`, `trending.csv` and, when present,
    /// `embeddings.bin` from a directory.
    pub fn load_dir(dir: &Path) -> Result<Self> {
        let tweets = load_tweets(&dir.join(files::TWEETS))?;
        let graph = load_graph(&dir.join(files::GRAPH))?;
        let trending_path = dir.join(files::TRENDING);
        let timelines = if trending_path.exists() {
            load_trending(&trending_path)?
        } else {
            BTreeMap::new()
        };
        let emb_path = dir.join(files::EMBEDDINGS);
        let embeddings = if emb_path.exists() {
            Some(load_embeddings(&emb_path)?)
        } else {
            None
        };
        Self::assemble(tweets, graph, timelines, embeddings)
    }

    pub fn dataset(&self, hashtag: &str) -> Option<&CampaignDataset> {
        self.datasets.iter().find(|d| d.hashtag == hashtag)
    }

    /// All tweets across hashtags in (ts, tweet_id) order.
    pub fn all_tweets(&self) -> Vec<TweetRecord> {
        let mut all: Vec<_> = self
            .datasets
            .iter()
            .flat_map(|d| d.tweets().iter().cloned())
            .collect();
        all.sort_by_key(TweetRecord::order_key);
        all
    }

    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        write_tweets(File::create(dir.join(files::TWEETS))?, &self.all_tweets())?;
        write_graph(File::create(dir.join(files::GRAPH))?, &self.graph)?;
        write_trending(
            File::create(dir.join(files::TRENDING))?,
            self.datasets.iter().map(|d| &d.timeline),
        )?;
        if let Some(emb) = &self.embeddings {
            write_embeddings(&dir.join(files::EMBEDDINGS), emb)?;
        }
        Ok(())
    }
}
