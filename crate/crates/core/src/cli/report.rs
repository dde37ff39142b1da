//! Collates earlier subcommand outputs into `report.json` and SVG figures.

use std::collections::BTreeMap;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde_json::Value;

use super::commands::write_json;
use super::rows::{self, files, POOLED};
use super::{CliError, Paths};
use crate::plot::{interval_chart, Chart, Interval, Series, Style};

pub mod figures {
    pub const CASCADE_HISTOGRAM: &str = "cascade_histogram.svg";
    pub const EXPOSURE_ECDF: &str = "exposure_ecdf.svg";
    pub const TPR_ECDF: &str = "tpr_ecdf.svg";
    pub const EFFECTS: &str = "effects.svg";
    pub const EVENT_STUDY: &str = "event_study.svg";
}

fn malformed(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::data("MalformedOutput", format!("{}: {e}", path.display()))
}

fn read_json(path: &Path) -> Result<Option<Value>, CliError> {
    if !path.exists() {
        return Ok(None);
    }
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text)
        .map(Some)
        .map_err(|e| malformed(path, e))
}

fn read_rows<T: DeserializeOwned>(dir: &Path, name: &str) -> Result<Option<Vec<T>>, CliError> {
    let path = dir.join(name);
    rows::read_csv(&path).map_err(|e| malformed(&path, e))
}

/// Groups pooled rows into one series per key, in first-seen order.
fn pooled_series<T>(
    rows: &[T],
    hashtag: impl Fn(&T) -> &str,
    key: impl Fn(&T) -> &str,
    point: impl Fn(&T) -> (f64, f64),
    style: Style,
) -> Vec<Series> {
    let mut order: Vec<String> = Vec::new();
    let mut points: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
    for r in rows.iter().filter(|r| hashtag(r) == POOLED) {
        let k = key(r).to_string();
        if !points.contains_key(&k) {
            order.push(k.clone());
        }
        points.entry(k).or_default().push(point(r));
    }
    order
        .into_iter()
        .map(|k| {
            let p = points.remove(&k).unwrap_or_default();
            Series::new(k, p, style)
        })
        .collect()
}

fn chart_with(mut chart: Chart, series: Vec<Series>) -> Chart {
    for s in series {
        chart = chart.with(s);
    }
    chart
}

fn effect_intervals(fit: &Value) -> Vec<Interval> {
    fit.get("effects")
        .and_then(Value::as_array)
        .map(|effects| {
            effects
                .iter()
                .filter_map(|e| {
                    Some(Interval {
                        label: e.get("effect")?.as_str()?.to_string(),
                        estimate: e.get("percent_increase")?.as_f64()?,
                        low: e.get("ci_low")?.as_f64()?,
                        high: e.get("ci_high")?.as_f64()?,
                    })
                })
                .collect()
        })
        .unwrap_or_default()
}

pub fn report(paths: &Paths) -> Result<(), CliError> {
    let dir = &paths.input;
    let mut report = serde_json::Map::new();
    let mut svgs: Vec<(&str, String)> = Vec::new();

    for (key, name) in [
        ("validation", files::VALIDATION),
        ("cascade", files::CASCADE_SUMMARY),
        ("exposure", files::EXPOSURE_SUMMARY),
        ("tpr", files::TPR_SUMMARY),
        ("fit", files::FIT),
        ("simulation", files::SIM_CONFIG),
    ] {
        if let Some(v) = read_json(&dir.join(name))? {
            report.insert(key.to_string(), v);
        }
    }

    if let Some(hist) = read_rows::<rows::CascadeHistogramRow>(dir, files::CASCADE_HISTOGRAM)? {
        let series = pooled_series(
            &hist,
            |r| &r.hashtag,
            |r| &r.tweet_type,
            |r| (r.size as f64, r.frequency as f64),
            Style::Points,
        );
        let chart = chart_with(
            Chart::new("Cascade size distribution", "retweets per root", "roots").log_axes(true, true),
            series,
        );
        svgs.push((figures::CASCADE_HISTOGRAM, chart.to_svg()));
    }
    if let Some(ecdf) = read_rows::<rows::ExposureEcdfRow>(dir, files::EXPOSURE_ECDF)? {
        let series = pooled_series(
            &ecdf,
            |r| &r.hashtag,
            |r| &r.channel,
            |r| (r.x as f64, r.f),
            Style::Step,
        );
        let chart = chart_with(
            Chart::new("Exposures before adoption", "prior exposures", "ECDF"),
            series,
        );
        svgs.push((figures::EXPOSURE_ECDF, chart.to_svg()));
    }
    if let Some(ecdf) = read_rows::<rows::TprEcdfRow>(dir, files::TPR_ECDF)? {
        let series = pooled_series(
            &ecdf,
            |r| &r.hashtag,
            |r| &r.tweet_type,
            |r| (r.x, r.f),
            Style::Step,
        );
        let chart = chart_with(
            Chart::new("Template penetration rate", "normalized TPR", "ECDF"),
            series,
        );
        svgs.push((figures::TPR_ECDF, chart.to_svg()));
    }
    if let Some(fit) = report.get("fit") {
        let intervals = effect_intervals(fit);
        if !intervals.is_empty() {
            svgs.push((
                figures::EFFECTS,
                interval_chart("Trending effects", "percent increase", &intervals),
            ));
        }
    }
    if let Some(study) = read_rows::<rows::EventStudyRow>(dir, files::EVENT_STUDY)? {
        let y: Vec<(f64, f64)> = study.iter().map(|r| (r.t as f64, r.mean_y)).collect();
        let e: Vec<(f64, f64)> = study.iter().map(|r| (r.t as f64, r.mean_e)).collect();
        let chart = Chart::new("Event study", "bins from onset", "mean count per hashtag")
            .with(Series::new("outcome", y, Style::Line))
            .with(Series::new("exposed", e, Style::Line));
        svgs.push((figures::EVENT_STUDY, chart.to_svg()));
    }

    if report.is_empty() && svgs.is_empty() {
        return Err(CliError::data(
            "MissingInput",
            format!("no analysis outputs found in {}", dir.display()),
        ));
    }
    report.insert(
        "figures".to_string(),
        Value::from(svgs.iter().map(|(n, _)| *n).collect::<Vec<_>>()),
    );
    std::fs::create_dir_all(&paths.out)?;
    for (name, svg) in &svgs {
        std::fs::write(paths.out.join(name), svg)?;
    }
    write_json(&paths.out.join(files::REPORT), &Value::Object(report))?;
    Ok(())
}
