//! Retweet cascade reconstruction with last-retweeter attribution.
//!
//! A retweet's parent is the cascade node, authored by one of the
//! retweeter's friends, that entered the cascade most recently. At equal
//! timestamps the smaller tweet id is preferred. Retweeters with no friend
//! in the cascade attach to the root.

use std::collections::{BTreeMap, HashMap, HashSet};

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::datastore::{CampaignDataset, FollowerGraph, TweetId, TweetKind, TweetRecord, UserId};

#[derive(Debug, Error)]
pub enum CascadeError {
    #[error("cascade root {0} is not an original tweet")]
    RootNotOriginal(TweetId),
    #[error("tweet {tweet_id} is not a retweet of root {root_id}")]
    ForeignRetweet { tweet_id: TweetId, root_id: TweetId },
    #[error("retweet {0} is out of (ts, tweet_id) order")]
    Unsorted(TweetId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum UserType {
    Participant,
    NonParticipant,
}

impl UserType {
    pub fn as_str(self) -> &'static str {
        match self {
            UserType::Participant => "participant",
            UserType::NonParticipant => "non_participant",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CascadeNode {
    pub tweet_id: TweetId,
    pub user_id: UserId,
    pub ts: i64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CascadeTree {
    pub root_tweet_id: TweetId,
    /// Retweet id to parent tweet id.
    pub parent: BTreeMap<TweetId, TweetId>,
    /// Children per node, including zero entries for leaves.
    pub children_count: BTreeMap<TweetId, usize>,
    /// Nodes in insertion order; the root is first.
    pub nodes: Vec<CascadeNode>,
    /// Repeat retweets of this root by the same user that were skipped.
    pub duplicates_dropped: usize,
}

impl CascadeTree {
    /// Number of retweets kept in the cascade.
    pub fn size(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn author(&self, tweet_id: TweetId) -> Option<UserId> {
        self.nodes
            .iter()
            .find(|n| n.tweet_id == tweet_id)
            .map(|n| n.user_id)
    }

    /// Depth of each node, computed by walking parents from the root.
    /// Returns `None` if a parent chain does not reach the root.
    pub fn depths(&self) -> Option<HashMap<TweetId, usize>> {
        let mut depth = HashMap::with_capacity(self.nodes.len());
        depth.insert(self.root_tweet_id, 0);
        for n in self.nodes.iter().skip(1) {
            let p = self.parent.get(&n.tweet_id)?;
            let d = *depth.get(p)? + 1;
            depth.insert(n.tweet_id, d);
        }
        Some(depth)
    }
}

/// Preference key for a candidate parent: later timestamp first, then the
/// smaller tweet id.
fn better(candidate: &CascadeNode, incumbent: &CascadeNode) -> bool {
    candidate.ts > incumbent.ts
        || (candidate.ts == incumbent.ts && candidate.tweet_id < incumbent.tweet_id)
}

/// Rebuilds one cascade. `retweets` must be sorted by (ts, tweet_id) and all
/// reference `root`.
pub fn reconstruct_cascade(
    root: &TweetRecord,
    retweets: &[&TweetRecord],
    graph: &FollowerGraph,
) -> Result<CascadeTree, CascadeError> {
    if !root.is_original() {
        return Err(CascadeError::RootNotOriginal(root.tweet_id));
    }
    let root_node = CascadeNode {
        tweet_id: root.tweet_id,
        user_id: root.user_id,
        ts: root.ts,
    };
    // best node per author under the preference key
    let mut best_by_user: HashMap<UserId, usize> = HashMap::new();
    best_by_user.insert(root.user_id, 0);
    let mut nodes = vec![root_node];
    let mut parent = BTreeMap::new();
    let mut children_count = BTreeMap::new();
    children_count.insert(root.tweet_id, 0usize);
    let mut retweeted: HashSet<UserId> = HashSet::new();
    let mut duplicates_dropped = 0;
    let mut last_key = root.order_key();

    for rt in retweets {
        if rt.kind != (TweetKind::Retweet { root_id: root.tweet_id }) {
            return Err(CascadeError::ForeignRetweet {
                tweet_id: rt.tweet_id,
                root_id: root.tweet_id,
            });
        }
        if rt.order_key() <= last_key {
            return Err(CascadeError::Unsorted(rt.tweet_id));
        }
        last_key = rt.order_key();
        if !retweeted.insert(rt.user_id) {
            duplicates_dropped += 1;
            continue;
        }

        let mut chosen: Option<usize> = None;
        for friend in graph.friends(rt.user_id) {
            if let Some(&idx) = best_by_user.get(friend) {
                if chosen.is_none_or(|c| better(&nodes[idx], &nodes[c])) {
                    chosen = Some(idx);
                }
            }
        }
        let parent_idx = chosen.unwrap_or(0);
        let parent_id = nodes[parent_idx].tweet_id;
        parent.insert(rt.tweet_id, parent_id);
        *children_count.get_mut(&parent_id).expect("parent is a node") += 1;
        children_count.insert(rt.tweet_id, 0);

        let node = CascadeNode {
            tweet_id: rt.tweet_id,
            user_id: rt.user_id,
            ts: rt.ts,
        };
        let idx = nodes.len();
        match best_by_user.get(&rt.user_id) {
            Some(&cur) if !better(&node, &nodes[cur]) => {}
            _ => {
                best_by_user.insert(rt.user_id, idx);
            }
        }
        nodes.push(node);
    }

    Ok(CascadeTree {
        root_tweet_id: root.tweet_id,
        parent,
        children_count,
        nodes,
        duplicates_dropped,
    })
}

/// Retweets grouped by root, each group in dataset order.
fn retweets_by_root(dataset: &CampaignDataset) -> HashMap<TweetId, Vec<&TweetRecord>> {
    let mut groups: HashMap<TweetId, Vec<&TweetRecord>> = HashMap::new();
    for t in dataset.tweets() {
        if let TweetKind::Retweet { root_id } = t.kind {
            groups.entry(root_id).or_default().push(t);
        }
    }
    groups
}

/// Reconstructs every cascade of a dataset (template roots only when
/// `template_only`), ordered by root (ts, tweet_id).
pub fn reconstruct_all(
    dataset: &CampaignDataset,
    template_only: bool,
) -> Result<Vec<CascadeTree>, CascadeError> {
    let groups = retweets_by_root(dataset);
    let roots: Vec<&TweetRecord> = dataset
        .tweets()
        .iter()
        .filter(|t| t.is_original() && (!template_only || t.is_template))
        .collect();
    roots
        .par_iter()
        .map(|root| {
            let rts = groups.get(&root.tweet_id).map_or(&[][..], Vec::as_slice);
            reconstruct_cascade(root, rts, &dataset.graph)
        })
        .collect()
}

pub fn user_types(dataset: &CampaignDataset) -> HashMap<UserId, UserType> {
    let participants = dataset.participants();
    dataset
        .users()
        .into_iter()
        .map(|u| {
            let ty = if participants.contains(&u) {
                UserType::Participant
            } else {
                UserType::NonParticipant
            };
            (u, ty)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ImpliedRetweets {
    pub user_type: UserType,
    pub count: usize,
}

/// Total children per user over all in-scope cascade nodes they authored.
/// Every author of an in-scope cascade node appears, possibly with zero.
pub fn implied_retweets_by_user(
    dataset: &CampaignDataset,
    template_only: bool,
) -> Result<BTreeMap<UserId, ImpliedRetweets>, CascadeError> {
    let types = user_types(dataset);
    let mut out: BTreeMap<UserId, ImpliedRetweets> = BTreeMap::new();
    for tree in reconstruct_all(dataset, template_only)? {
        for node in &tree.nodes {
            let entry = out.entry(node.user_id).or_insert(ImpliedRetweets {
                user_type: types[&node.user_id],
                count: 0,
            });
            entry.count += tree.children_count[&node.tweet_id];
        }
    }
    Ok(out)
}

/// Implied retweets summed per user type.
pub fn implied_by_type(implied: &BTreeMap<UserId, ImpliedRetweets>) -> BTreeMap<UserType, usize> {
    let mut out = BTreeMap::new();
    for v in implied.values() {
        *out.entry(v.user_type).or_insert(0) += v.count;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum TweetType {
    Template,
    Normal,
}

impl TweetType {
    pub fn as_str(self) -> &'static str {
        match self {
            TweetType::Template => "template",
            TweetType::Normal => "normal",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct CascadeHistogram {
    /// (size, frequency) pairs in ascending size.
    pub template: Vec<(usize, usize)>,
    pub normal: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CascadeSize {
    pub root_tweet_id: TweetId,
    pub tweet_type: TweetType,
    pub size: usize,
}

/// Retweet count per root, counting at most one retweet per user.
pub fn cascade_sizes(dataset: &CampaignDataset) -> Vec<CascadeSize> {
    let groups = retweets_by_root(dataset);
    dataset
        .tweets()
        .iter()
        .filter(|t| t.is_original())
        .map(|root| {
            let size = groups.get(&root.tweet_id).map_or(0, |rts| {
                rts.iter()
                    .map(|r| r.user_id)
                    .collect::<HashSet<_>>()
                    .len()
            });
            CascadeSize {
                root_tweet_id: root.tweet_id,
                tweet_type: if root.is_template {
                    TweetType::Template
                } else {
                    TweetType::Normal
                },
                size,
            }
        })
        .collect()
}

pub fn cascade_size_histogram(dataset: &CampaignDataset) -> CascadeHistogram {
    histogram_of(&cascade_sizes(dataset))
}

pub fn histogram_of(sizes: &[CascadeSize]) -> CascadeHistogram {
    let mut template: BTreeMap<usize, usize> = BTreeMap::new();
    let mut normal: BTreeMap<usize, usize> = BTreeMap::new();
    for s in sizes {
        let bins = match s.tweet_type {
            TweetType::Template => &mut template,
            TweetType::Normal => &mut normal,
        };
        *bins.entry(s.size).or_insert(0) += 1;
    }
    CascadeHistogram {
        template: template.into_iter().collect(),
        normal: normal.into_iter().collect(),
    }
}
