//! CSV row layouts shared by the writers and the report reader.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::datastore::{TweetId, UserId};

/// Hashtag key of rows pooled over every hashtag.
pub const POOLED: &str = "*";

pub mod files {
    pub const CASCADE_SIZES: &str = "cascade_sizes.csv";
    pub const CASCADE_HISTOGRAM: &str = "cascade_histogram.csv";
    pub const IMPLIED_RETWEETS: &str = "implied_retweets.csv";
    pub const IMPLIED_RETWEETS_TEMPLATE: &str = "implied_retweets_template.csv";
    pub const CASCADE_SUMMARY: &str = "cascade_summary.json";
    pub const EXPOSURE_RECORDS: &str = "exposure_records.csv";
    pub const EXPOSURE_ECDF: &str = "exposure_ecdf.csv";
    pub const EFFECTIVENESS: &str = "effectiveness.csv";
    pub const EXPOSURE_SUMMARY: &str = "exposure_summary.json";
    pub const TPR: &str = "tpr.csv";
    pub const TPR_ECDF: &str = "tpr_ecdf.csv";
    pub const EXEMPLARS: &str = "exemplars.txt";
    pub const TPR_SUMMARY: &str = "tpr_summary.json";
    pub const FIT: &str = "fit.json";
    pub const PANEL: &str = "panel.csv";
    pub const EVENT_STUDY: &str = "event_study.csv";
    pub const VALIDATION: &str = "validation.json";
    pub const SIM_CONFIG: &str = "sim_config.json";
    pub const REPORT: &str = "report.json";
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CascadeSizeRow {
    pub hashtag: String,
    pub root_tweet_id: TweetId,
    pub tweet_type: String,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CascadeHistogramRow {
    pub hashtag: String,
    pub tweet_type: String,
    pub size: usize,
    pub frequency: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImpliedRow {
    pub hashtag: String,
    pub user_id: UserId,
    pub user_type: String,
    pub implied_retweets: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExposureRow {
    pub hashtag: String,
    pub user_id: UserId,
    pub first_use_ts: i64,
    pub first_use_tweet_id: TweetId,
    pub template_exposures: u64,
    pub normal_exposures: u64,
    pub exposing_friends: u64,
    pub classification: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExposureEcdfRow {
    pub hashtag: String,
    pub channel: String,
    pub x: u64,
    pub f: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectivenessRow {
    pub hashtag: String,
    pub user_id: UserId,
    pub classification: String,
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TprRow {
    pub hashtag: String,
    pub tweet_id: TweetId,
    pub is_template: bool,
    pub k: usize,
    pub template_neighbors: usize,
    pub raw_tpr: f64,
    pub normalized_tpr: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TprEcdfRow {
    pub hashtag: String,
    pub tweet_type: String,
    pub x: f64,
    pub f: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventStudyRow {
    pub t: i64,
    pub mean_y: f64,
    pub mean_e: f64,
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> csv::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Rows of a CSV file, or `None` when the file does not exist.
pub fn read_csv<T: DeserializeOwned>(path: &Path) -> csv::Result<Option<Vec<T>>> {
    if !path.exists() {
        return Ok(None);
    }
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().collect::<csv::Result<Vec<T>>>().map(Some)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rows_round_trip_with_missing_values() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        let rows = vec![
            TprRow {
                hashtag: "a".into(),
                tweet_id: 1,
                is_template: true,
                k: 3,
                template_neighbors: 2,
                raw_tpr: 2.0 / 3.0,
                normalized_tpr: None,
            },
            TprRow {
                hashtag: "a".into(),
                tweet_id: 2,
                is_template: false,
                k: 3,
                template_neighbors: 0,
                raw_tpr: 0.0,
                normalized_tpr: Some(0.0),
            },
        ];
        write_csv(&p, &rows).unwrap();
        assert_eq!(read_csv::<TprRow>(&p).unwrap().unwrap(), rows);
        assert!(read_csv::<TprRow>(&dir.path().join("none.csv")).unwrap().is_none());
    }
}
