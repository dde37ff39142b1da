//! Hashtag by 5-minute-bin panel around trending onset.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::CausalError;
use crate::datastore::{CampaignDataset, RankBucket, TrendingTimeline, UserId};
use crate::exposure::Classification;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutcomeMode {
    /// Y counts tweets by trending-exposed users.
    TrendingExposedOnly,
    /// Y counts tweets by every classified (non-participant) user.
    AllNonAstroturfed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    /// Treatment starts at the beginning of the uncertainty window.
    Earliest,
    /// Bins touching the uncertainty window are dropped; treatment starts
    /// at its end.
    DonutHole,
}

pub const DEFAULT_BIN_SECONDS: i64 = 300;
/// -24 h in 5-minute bins.
pub const DEFAULT_WINDOW_MIN: i64 = -288;
/// +4 h in 5-minute bins.
pub const DEFAULT_WINDOW_MAX: i64 = 47;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSpec {
    pub outcome_mode: OutcomeMode,
    pub include_top10: bool,
    pub strategy: Strategy,
    /// Inclusive bin range relative to onset.
    pub window: (i64, i64),
    pub bin_seconds: i64,
}

impl Default for ModelSpec {
    fn default() -> Self {
        ModelSpec {
            outcome_mode: OutcomeMode::TrendingExposedOnly,
            include_top10: false,
            strategy: Strategy::Earliest,
            window: (DEFAULT_WINDOW_MIN, DEFAULT_WINDOW_MAX),
            bin_seconds: DEFAULT_BIN_SECONDS,
        }
    }
}

impl ModelSpec {
    pub fn validate(&self) -> Result<(), CausalError> {
        if self.bin_seconds <= 0 {
            return Err(CausalError::InvalidSpec("bin_seconds must be positive".into()));
        }
        if !(self.window.0 <= 0 && 0 <= self.window.1) {
            return Err(CausalError::InvalidSpec(format!(
                "window {:?} must contain bin 0",
                self.window
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PanelRow {
    pub hashtag: String,
    pub t: i64,
    pub y: u64,
    pub e: u64,
    pub d: u8,
    /// `None` when the hashtag's timeline carries no top-10 data.
    pub d10: Option<u8>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct Panel {
    pub rows: Vec<PanelRow>,
    /// Hashtags skipped because they never trended.
    pub excluded: Vec<String>,
    pub spec: Option<ModelSpec>,
}

/// Whether `ts` falls in any `bucket` interval, each extended by the
/// reporting uncertainty at its end.
fn active(timeline: &TrendingTimeline, bucket: RankBucket, ts: i64) -> bool {
    timeline
        .bucket(bucket)
        .any(|iv| iv.start_ts <= ts && ts < iv.end_ts + timeline.uncertainty_s)
}

/// Start of bin 0 under the given strategy.
pub fn treatment_onset(timeline: &TrendingTimeline, strategy: Strategy) -> Option<i64> {
    let recorded = timeline.onset()?;
    Some(match strategy {
        Strategy::Earliest => recorded,
        Strategy::DonutHole => recorded + timeline.uncertainty_s,
    })
}

/// Panel rows for one hashtag. Every bin of the window is present, zeros
/// included, except bins dropped by the donut hole.
pub fn hashtag_panel(
    dataset: &CampaignDataset,
    classes: &BTreeMap<UserId, Classification>,
    spec: &ModelSpec,
) -> Result<Vec<PanelRow>, CausalError> {
    spec.validate()?;
    let timeline = &dataset.timeline;
    let recorded = timeline
        .onset()
        .ok_or_else(|| CausalError::NoTrendingInterval(dataset.hashtag.clone()))?;
    let onset = treatment_onset(timeline, spec.strategy).expect("onset exists");
    let bin = spec.bin_seconds;
    let (lo, hi) = spec.window;
    let width = (hi - lo + 1) as usize;
    let mut y = vec![0u64; width];
    let mut e = vec![0u64; width];
    for tw in dataset.tweets() {
        let Some(class) = classes.get(&tw.user_id) else {
            continue;
        };
        let t = (tw.ts - onset).div_euclid(bin);
        if t < lo || t > hi {
            continue;
        }
        let slot = (t - lo) as usize;
        match (class, spec.outcome_mode) {
            (Classification::TrendingExposed, _) => y[slot] += 1,
            (Classification::NetworkExposed, OutcomeMode::AllNonAstroturfed) => {
                y[slot] += 1;
                e[slot] += 1;
            }
            (Classification::NetworkExposed, OutcomeMode::TrendingExposedOnly) => e[slot] += 1,
        }
    }
    let donut = (recorded, recorded + timeline.uncertainty_s);
    let has_top10 = spec.include_top10 && timeline.has_top10();
    let mut rows = Vec::with_capacity(width);
    for t in lo..=hi {
        let start = onset + t * bin;
        if spec.strategy == Strategy::DonutHole && start < donut.1 && start + bin > donut.0 {
            continue;
        }
        let slot = (t - lo) as usize;
        rows.push(PanelRow {
            hashtag: dataset.hashtag.clone(),
            t,
            y: y[slot],
            e: e[slot],
            d: u8::from(active(timeline, RankBucket::Top50, start)),
            d10: has_top10.then(|| u8::from(active(timeline, RankBucket::Top10, start))),
        });
    }
    Ok(rows)
}

/// Builds the pooled panel. Hashtags that never trended are skipped and
/// listed in `excluded`.
pub fn build_panel(
    datasets: &[CampaignDataset],
    classes: &BTreeMap<String, BTreeMap<UserId, Classification>>,
    spec: &ModelSpec,
) -> Result<Panel, CausalError> {
    spec.validate()?;
    let empty = BTreeMap::new();
    let mut rows = Vec::new();
    let mut excluded = Vec::new();
    for ds in datasets {
        let c = classes.get(&ds.hashtag).unwrap_or(&empty);
        match hashtag_panel(ds, c, spec) {
            Ok(r) => rows.extend(r),
            Err(CausalError::NoTrendingInterval(h)) => excluded.push(h),
            Err(other) => return Err(other),
        }
    }
    if rows.is_empty() {
        return Err(CausalError::EmptyPanel);
    }
    Ok(Panel {
        rows,
        excluded,
        spec: Some(*spec),
    })
}

/// Mean outcome and exposure per relative bin across hashtags.
pub fn event_study_means(rows: &[PanelRow]) -> Vec<(i64, f64, f64)> {
    let mut acc: BTreeMap<i64, (u64, u64, usize)> = BTreeMap::new();
    for r in rows {
        let a = acc.entry(r.t).or_default();
        a.0 += r.y;
        a.1 += r.e;
        a.2 += 1;
    }
    acc.into_iter()
        .map(|(t, (y, e, n))| (t, y as f64 / n as f64, e as f64 / n as f64))
        .collect()
}

pub fn write_panel_csv<W: std::io::Write>(w: W, rows: &[PanelRow]) -> csv::Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["hashtag", "t", "y", "e", "d", "d10"])?;
    for r in rows {
        wr.write_record([
            r.hashtag.clone(),
            r.t.to_string(),
            r.y.to_string(),
            r.e.to_string(),
            r.d.to_string(),
            r.d10.map_or_else(String::new, |v| v.to_string()),
        ])?;
    }
    wr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datastore::{FollowerGraph, TrendingInterval, TweetKind, TweetRecord};
    use std::sync::Arc;

    const TEN_AM: i64 = 36_000;

    fn dataset(tweets: Vec<TweetRecord>, uncertainty: i64) -> CampaignDataset {
        let timeline = TrendingTimeline::new(
            "h",
            vec![TrendingInterval {
                start_ts: TEN_AM,
                end_ts: TEN_AM + 3600,
                bucket: RankBucket::Top50,
            }],
            uncertainty,
        )
        .unwrap();
        CampaignDataset::new("h", tweets, Arc::new(FollowerGraph::default()), timeline).unwrap()
    }

    fn tweet(id: u64, ts: i64) -> TweetRecord {
        TweetRecord {
            tweet_id: id,
            user_id: id,
            ts,
            hashtag: "h".into(),
            kind: TweetKind::Original,
            text: String::new(),
            is_template: false,
        }
    }

    fn spec(strategy: Strategy) -> ModelSpec {
        ModelSpec {
            strategy,
            window: (-24, 24),
            ..Default::default()
        }
    }

    #[test]
    fn earliest_vs_donut_on_hourly_data() {
        let ds = dataset(vec![tweet(1, TEN_AM + 10)], 3600);
        let classes = BTreeMap::new();
        let early = hashtag_panel(&ds, &classes, &spec(Strategy::Earliest)).unwrap();
        let first_treated = early.iter().find(|r| r.d == 1).unwrap();
        assert_eq!(first_treated.t, 0);
        assert!(early.iter().filter(|r| r.t < 0).all(|r| r.d == 0));

        let donut = hashtag_panel(&ds, &classes, &spec(Strategy::DonutHole)).unwrap();
        // bin t starts at 11:00 + 300 t; the 12 bins covering 10:00-11:00 are gone
        assert!(donut.iter().all(|r| !(-12..0).contains(&r.t)));
        assert_eq!(donut.len(), 49 - 12);
        let first = donut.iter().find(|r| r.d == 1).unwrap();
        assert_eq!(first.t, 0);
        assert!(donut.iter().filter(|r| r.t < 0).all(|r| r.d == 0));
    }

    #[test]
    fn zero_bins_present() {
        let ds = dataset(vec![tweet(1, TEN_AM + 10)], 0);
        let mut classes = BTreeMap::new();
        classes.insert(1, Classification::TrendingExposed);
        let rows = hashtag_panel(&ds, &classes, &spec(Strategy::Earliest)).unwrap();
        assert_eq!(rows.len(), 49);
        assert_eq!(rows.iter().map(|r| r.y).sum::<u64>(), 1);
        assert_eq!(rows.iter().find(|r| r.t == 0).unwrap().y, 1);
        assert!(rows.iter().filter(|r| r.t != 0).all(|r| r.y == 0));
    }

    #[test]
    fn zero_uncertainty_strategies_agree() {
        let tweets = (0..50).map(|i| tweet(i + 1, TEN_AM - 3000 + 137 * i as i64)).collect();
        let ds = dataset(tweets, 0);
        let classes: BTreeMap<_, _> = (1..=50)
            .map(|u| {
                let c = if u % 3 == 0 {
                    Classification::NetworkExposed
                } else {
                    Classification::TrendingExposed
                };
                (u, c)
            })
            .collect();
        let a = hashtag_panel(&ds, &classes, &spec(Strategy::Earliest)).unwrap();
        let b = hashtag_panel(&ds, &classes, &spec(Strategy::DonutHole)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn outcome_modes() {
        let ds = dataset(vec![tweet(1, TEN_AM), tweet(2, TEN_AM + 1)], 0);
        let classes: BTreeMap<_, _> = [
            (1, Classification::TrendingExposed),
            (2, Classification::NetworkExposed),
        ]
        .into_iter()
        .collect();
        let te = hashtag_panel(&ds, &classes, &spec(Strategy::Earliest)).unwrap();
        let r0 = te.iter().find(|r| r.t == 0).unwrap();
        assert_eq!((r0.y, r0.e), (1, 1));
        let all = hashtag_panel(
            &ds,
            &classes,
            &ModelSpec {
                outcome_mode: OutcomeMode::AllNonAstroturfed,
                ..spec(Strategy::Earliest)
            },
        )
        .unwrap();
        let r0 = all.iter().find(|r| r.t == 0).unwrap();
        assert_eq!((r0.y, r0.e), (2, 1));
    }

    #[test]
    fn never_trending_excluded() {
        let quiet = CampaignDataset::new(
            "q",
            vec![TweetRecord {
                hashtag: "q".into(),
                ..tweet(9, 0)
            }],
            Arc::new(FollowerGraph::default()),
            TrendingTimeline::default(),
        )
        .unwrap();
        let ds = dataset(vec![tweet(1, TEN_AM)], 0);
        let panel = build_panel(&[quiet.clone(), ds], &BTreeMap::new(), &spec(Strategy::Earliest)).unwrap();
        assert_eq!(panel.excluded, vec!["q".to_string()]);
        assert!(matches!(
            build_panel(&[quiet], &BTreeMap::new(), &spec(Strategy::Earliest)),
            Err(CausalError::EmptyPanel)
        ));
    }

    #[test]
    fn top10_indicator_implies_top50() {
        let timeline = TrendingTimeline::new(
            "h",
            vec![
                TrendingInterval { start_ts: TEN_AM, end_ts: TEN_AM + 7200, bucket: RankBucket::Top50 },
                TrendingInterval { start_ts: TEN_AM + 1800, end_ts: TEN_AM + 3600, bucket: RankBucket::Top10 },
            ],
            0,
        )
        .unwrap();
        let ds = CampaignDataset::new("h", vec![tweet(1, TEN_AM)], Arc::new(FollowerGraph::default()), timeline).unwrap();
        let rows = hashtag_panel(
            &ds,
            &BTreeMap::new(),
            &ModelSpec { include_top10: true, ..spec(Strategy::Earliest) },
        )
        .unwrap();
        assert!(rows.iter().all(|r| r.d10 == Some(0) || r.d == 1));
        let treated10: Vec<_> = rows.iter().filter(|r| r.d10 == Some(1)).map(|r| r.t).collect();
        assert_eq!(treated10, (6..12).collect::<Vec<_>>());
    }

    #[test]
    fn window_must_contain_zero() {
        let ds = dataset(vec![tweet(1, TEN_AM)], 0);
        let bad = ModelSpec { window: (1, 5), ..Default::default() };
        assert!(matches!(
            hashtag_panel(&ds, &BTreeMap::new(), &bad),
            Err(CausalError::InvalidSpec(_))
        ));
    }
}
