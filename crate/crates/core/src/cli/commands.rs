//! Subcommand bodies. Computation runs in parallel per hashtag; files are
//! written afterwards from one thread.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use super::rows::{self, files, POOLED};
use super::{CliError, EmbedderKind, Paths};
use crate::cascade::{self, TweetType, UserType};
use crate::causal::{self, ModelSpec};
use crate::datastore::{self, CampaignDataset, Corpus, EmbeddingMatrix};
use crate::ecdf::Ecdf;
use crate::exposure::{self, Channel, Classification, ExposureRecord};
use crate::simgen::{self, SimConfig};
use crate::tpr::{self, TprConfig, TprError, TrigramEmbedder};

pub(super) fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn create_out(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| {
        CliError::usage(
            "OutputNotWritable",
            format!("{}: {e}", dir.display()),
        )
    })
}

/// Loads the input directory and keeps the requested hashtags.
fn load(paths: &Paths) -> Result<Corpus, CliError> {
    let mut corpus = Corpus::load_dir(&paths.input)?;
    if !paths.hashtags.is_empty() {
        if let Some(h) = paths
            .hashtags
            .iter()
            .find(|h| corpus.dataset(h).is_none())
        {
            return Err(CliError::data(
                "UnknownHashtag",
                format!("hashtag {h} has no tweets in {}", paths.input.display()),
            ));
        }
        corpus
            .datasets
            .retain(|d| paths.hashtags.contains(&d.hashtag));
    }
    Ok(corpus)
}

pub fn validate(paths: &Paths) -> Result<(), CliError> {
    let corpus = load(paths)?;
    let hashtags: BTreeMap<&str, Value> = corpus
        .datasets
        .iter()
        .map(|d| {
            let originals = d.tweets().iter().filter(|t| t.is_original()).count();
            let templates = d.tweets().iter().filter(|t| t.is_template).count();
            (
                d.hashtag.as_str(),
                json!({
                    "tweets": d.tweets().len(),
                    "originals": originals,
                    "retweets": d.tweets().len() - originals,
                    "template_tweets": templates,
                    "users": d.users().len(),
                    "participants": d.participants().len(),
                    "trending_onset_ts": d.timeline.onset(),
                    "has_top10": d.timeline.has_top10(),
                    "uncertainty_s": d.timeline.uncertainty_s,
                }),
            )
        })
        .collect();
    let summary = json!({
        "tweets": corpus.datasets.iter().map(|d| d.tweets().len()).sum::<usize>(),
        "hashtags": hashtags,
        "graph": {
            "users": corpus.graph.users().len(),
            "edges": corpus.graph.edge_count(),
            "self_edges_dropped": corpus.graph.self_edges_dropped(),
        },
        "embeddings": corpus.embeddings.as_ref().map(|e| json!({"rows": e.len(), "dim": e.dim()})),
    });
    create_out(&paths.out)?;
    write_json(&paths.out.join(files::VALIDATION), &summary)?;
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}

fn user_type_counts(by_type: &BTreeMap<UserType, usize>) -> Value {
    json!({
        UserType::Participant.as_str(): by_type.get(&UserType::Participant).copied().unwrap_or(0),
        UserType::NonParticipant.as_str(): by_type.get(&UserType::NonParticipant).copied().unwrap_or(0),
    })
}

struct CascadeOutput {
    sizes: Vec<cascade::CascadeSize>,
    implied: BTreeMap<u64, cascade::ImpliedRetweets>,
    implied_template: BTreeMap<u64, cascade::ImpliedRetweets>,
    summary: Value,
}

fn cascade_one(d: &CampaignDataset) -> Result<CascadeOutput, CliError> {
    let trees = cascade::reconstruct_all(d, false)?;
    let sizes = cascade::cascade_sizes(d);
    let implied = cascade::implied_retweets_by_user(d, false)?;
    let implied_template = cascade::implied_retweets_by_user(d, true)?;
    let roots = |ty| sizes.iter().filter(|s| s.tweet_type == ty).count();
    let summary = json!({
        "template_roots": roots(TweetType::Template),
        "normal_roots": roots(TweetType::Normal),
        "retweets": d.tweets().iter().filter(|t| !t.is_original()).count(),
        "duplicate_retweets_dropped": trees.iter().map(|t| t.duplicates_dropped).sum::<usize>(),
        "implied_retweets": user_type_counts(&cascade::implied_by_type(&implied)),
        "implied_retweets_template": user_type_counts(&cascade::implied_by_type(&implied_template)),
    });
    Ok(CascadeOutput {
        sizes,
        implied,
        implied_template,
        summary,
    })
}

fn histogram_rows(hashtag: &str, h: &cascade::CascadeHistogram) -> Vec<rows::CascadeHistogramRow> {
    let side = |ty: TweetType, bins: &[(usize, usize)]| {
        bins.iter()
            .map(|&(size, frequency)| rows::CascadeHistogramRow {
                hashtag: hashtag.to_string(),
                tweet_type: ty.as_str().to_string(),
                size,
                frequency,
            })
            .collect::<Vec<_>>()
    };
    let mut out = side(TweetType::Template, &h.template);
    out.extend(side(TweetType::Normal, &h.normal));
    out
}

fn implied_rows(hashtag: &str, m: &BTreeMap<u64, cascade::ImpliedRetweets>) -> Vec<rows::ImpliedRow> {
    m.iter()
        .map(|(&user_id, v)| rows::ImpliedRow {
            hashtag: hashtag.to_string(),
            user_id,
            user_type: v.user_type.as_str().to_string(),
            implied_retweets: v.count,
        })
        .collect()
}

pub fn cascade(paths: &Paths) -> Result<(), CliError> {
    let corpus = load(paths)?;
    let outputs: Vec<CascadeOutput> = corpus
        .datasets
        .par_iter()
        .map(cascade_one)
        .collect::<Result<_, _>>()?;

    let mut size_rows = Vec::new();
    let mut hist_rows = Vec::new();
    let mut implied = Vec::new();
    let mut implied_template = Vec::new();
    let mut summary = BTreeMap::new();
    let mut all_sizes = Vec::new();
    for (d, o) in corpus.datasets.iter().zip(outputs) {
        size_rows.extend(o.sizes.iter().map(|s| rows::CascadeSizeRow {
            hashtag: d.hashtag.clone(),
            root_tweet_id: s.root_tweet_id,
            tweet_type: s.tweet_type.as_str().to_string(),
            size: s.size,
        }));
        hist_rows.extend(histogram_rows(&d.hashtag, &cascade::histogram_of(&o.sizes)));
        implied.extend(implied_rows(&d.hashtag, &o.implied));
        implied_template.extend(implied_rows(&d.hashtag, &o.implied_template));
        summary.insert(d.hashtag.clone(), o.summary);
        all_sizes.extend(o.sizes);
    }
    hist_rows.extend(histogram_rows(POOLED, &cascade::histogram_of(&all_sizes)));

    create_out(&paths.out)?;
    rows::write_csv(&paths.out.join(files::CASCADE_SIZES), &size_rows)?;
    rows::write_csv(&paths.out.join(files::CASCADE_HISTOGRAM), &hist_rows)?;
    rows::write_csv(&paths.out.join(files::IMPLIED_RETWEETS), &implied)?;
    rows::write_csv(&paths.out.join(files::IMPLIED_RETWEETS_TEMPLATE), &implied_template)?;
    write_json(&paths.out.join(files::CASCADE_SUMMARY), &json!({ "hashtags": summary }))?;
    Ok(())
}

pub struct ExposureOptions {
    pub permutations: usize,
    pub seed: u64,
    pub max_friends: u64,
}

fn ecdf_rows(hashtag: &str, records: &[ExposureRecord]) -> Vec<rows::ExposureEcdfRow> {
    Channel::ALL
        .iter()
        .flat_map(|&c| {
            exposure::ecdf_of(records, c)
                .map_or_else(Vec::new, |e| e.points)
                .into_iter()
                .map(move |(x, f)| rows::ExposureEcdfRow {
                    hashtag: hashtag.to_string(),
                    channel: c.as_str().to_string(),
                    x,
                    f,
                })
        })
        .collect()
}

fn exposure_block(
    records: &[ExposureRecord],
    effectiveness: &[exposure::EffectivenessRecord],
    no_followers: usize,
    participants: Option<usize>,
    opts: &ExposureOptions,
) -> Value {
    let trending = records
        .iter()
        .filter(|r| r.classification == Classification::TrendingExposed)
        .count();
    let at_zero: BTreeMap<&str, Option<f64>> = Channel::ALL
        .iter()
        .map(|&c| (c.as_str(), exposure::ecdf_of(records, c).map(|e| e.eval(0))))
        .collect();
    json!({
        "classified_users": records.len(),
        "network_exposed": records.len() - trending,
        "trending_exposed": trending,
        "participants": participants,
        "trending_share": exposure::low_exposure_share(records, 0),
        "low_exposure_share": {
            "max_friends": opts.max_friends,
            "share": exposure::low_exposure_share(records, opts.max_friends),
        },
        "ecdf_at_zero": at_zero,
        "effectiveness": exposure::summarize_effectiveness(effectiveness, opts.permutations, opts.seed),
        "no_followers": no_followers,
    })
}

pub fn exposure(paths: &Paths, opts: &ExposureOptions) -> Result<(), CliError> {
    let corpus = load(paths)?;
    let per: Vec<(Vec<ExposureRecord>, exposure::EffectivenessSet, Value)> = corpus
        .datasets
        .par_iter()
        .map(|d| {
            let records = exposure::exposure_records(d);
            let classes: BTreeMap<_, _> = records
                .iter()
                .map(|r| (r.user_id, r.classification))
                .collect();
            let eff = exposure::effectiveness_records(d, &classes);
            let block = exposure_block(
                &records,
                &eff.records,
                eff.no_followers,
                Some(d.participants().len()),
                opts,
            );
            (records, eff, block)
        })
        .collect();

    let mut record_rows = Vec::new();
    let mut ecdf = Vec::new();
    let mut eff_rows = Vec::new();
    let mut summary = BTreeMap::new();
    let mut all_records = Vec::new();
    let mut all_eff = Vec::new();
    let mut all_no_followers = 0;
    for (d, (records, eff, block)) in corpus.datasets.iter().zip(per) {
        record_rows.extend(records.iter().map(|r| rows::ExposureRow {
            hashtag: d.hashtag.clone(),
            user_id: r.user_id,
            first_use_ts: r.first_use_ts,
            first_use_tweet_id: r.first_use_tweet_id,
            template_exposures: r.template_exposures,
            normal_exposures: r.normal_exposures,
            exposing_friends: r.exposing_friends,
            classification: r.classification.as_str().to_string(),
        }));
        ecdf.extend(ecdf_rows(&d.hashtag, &records));
        eff_rows.extend(eff.records.iter().map(|e| rows::EffectivenessRow {
            hashtag: d.hashtag.clone(),
            user_id: e.user_id,
            classification: e.classification.as_str().to_string(),
            fraction: e.fraction,
        }));
        summary.insert(d.hashtag.clone(), block);
        all_records.extend(records);
        all_eff.extend(eff.records);
        all_no_followers += eff.no_followers;
    }
    ecdf.extend(ecdf_rows(POOLED, &all_records));
    let pooled = exposure_block(&all_records, &all_eff, all_no_followers, None, opts);

    create_out(&paths.out)?;
    rows::write_csv(&paths.out.join(files::EXPOSURE_RECORDS), &record_rows)?;
    rows::write_csv(&paths.out.join(files::EXPOSURE_ECDF), &ecdf)?;
    rows::write_csv(&paths.out.join(files::EFFECTIVENESS), &eff_rows)?;
    write_json(
        &paths.out.join(files::EXPOSURE_SUMMARY),
        &json!({ "hashtags": summary, "pooled": pooled }),
    )?;
    Ok(())
}

pub struct TprOptions {
    pub config: TprConfig,
    pub exemplars: usize,
    pub embedder: EmbedderKind,
    pub seed: u64,
}

struct TprOutput {
    clean: tpr::CleanCorpus,
    report: tpr::TprReport,
    exemplars: Vec<u64>,
}

fn tpr_one(
    d: &CampaignDataset,
    file_embeddings: Option<&EmbeddingMatrix>,
    opts: &TprOptions,
) -> Result<TprOutput, TprError> {
    let mut clean = tpr::clean_corpus(d.tweets());
    let report = match file_embeddings {
        Some(m) => tpr::compute_tpr(&clean, m, &opts.config)?,
        None => {
            let embedder = TrigramEmbedder {
                seed: opts.seed,
                ..Default::default()
            };
            let (m, skipped) =
                embedder.embed_all(clean.tweets.iter().map(|t| (t.tweet_id, t.cleaned_text.as_str())));
            if !skipped.is_empty() {
                log::warn!("{}: {} tweets embed to zero and are skipped", d.hashtag, skipped.len());
                clean.tweets.retain(|t| m.get(t.tweet_id).is_some());
            }
            tpr::compute_tpr(&clean, &m, &opts.config)?
        }
    };
    let m = opts.exemplars.min(report.template_count);
    let exemplars = tpr::low_tpr_exemplars(&report.results, m)?;
    Ok(TprOutput {
        clean,
        report,
        exemplars,
    })
}

fn tpr_ecdf_rows(hashtag: &str, results: &[tpr::TprResult]) -> Vec<rows::TprEcdfRow> {
    let dist = tpr::tpr_distribution(results);
    let side = |ty: TweetType, e: Option<Ecdf<f64>>| {
        e.map_or_else(Vec::new, |e| e.points)
            .into_iter()
            .map(|(x, f)| rows::TprEcdfRow {
                hashtag: hashtag.to_string(),
                tweet_type: ty.as_str().to_string(),
                x,
                f,
            })
            .collect::<Vec<_>>()
    };
    let mut out = side(TweetType::Template, dist.template);
    out.extend(side(TweetType::Normal, dist.normal));
    out
}

fn tpr_block(results: &[tpr::TprResult]) -> Value {
    let dist = tpr::tpr_distribution(results);
    json!({
        "normal_zero_share": tpr::normal_zero_share(results),
        "template_dominates_normal": match (&dist.template, &dist.normal) {
            (Some(t), Some(n)) => Some(tpr::dominates(t, n)),
            _ => None,
        },
        "template_missing": dist.template_missing,
    })
}

pub fn tpr(paths: &Paths, opts: &TprOptions) -> Result<(), CliError> {
    let corpus = load(paths)?;
    let file_embeddings = match opts.embedder {
        EmbedderKind::File => Some(corpus.embeddings.as_ref().ok_or_else(|| {
            CliError::data(
                "MissingInput",
                format!(
                    "{} not found in {}; pass --embedder trigram to embed locally",
                    datastore::files::EMBEDDINGS,
                    paths.input.display()
                ),
            )
        })?),
        EmbedderKind::Trigram => None,
    };
    let outcomes: Vec<Result<TprOutput, TprError>> = corpus
        .datasets
        .par_iter()
        .map(|d| tpr_one(d, file_embeddings, opts))
        .collect();

    let mut tpr_rows = Vec::new();
    let mut ecdf = Vec::new();
    let mut exemplars = String::new();
    let mut summary = BTreeMap::new();
    let mut skipped = BTreeMap::new();
    let mut first_small = None;
    let mut pooled = Vec::new();
    for (d, outcome) in corpus.datasets.iter().zip(outcomes) {
        let o = match outcome {
            Ok(o) => o,
            Err(e @ TprError::HashtagTooSmall { .. }) => {
                log::info!("{}: {e}", d.hashtag);
                skipped.insert(d.hashtag.clone(), e.to_string());
                first_small.get_or_insert(e);
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        let r = &o.report;
        tpr_rows.extend(r.results.iter().map(|t| rows::TprRow {
            hashtag: d.hashtag.clone(),
            tweet_id: t.tweet_id,
            is_template: t.is_template,
            k: t.k,
            template_neighbors: t.template_neighbors,
            raw_tpr: t.raw_tpr,
            normalized_tpr: t.normalized_tpr,
        }));
        ecdf.extend(tpr_ecdf_rows(&d.hashtag, &r.results));
        exemplars.push_str(&format!("# {}\n", d.hashtag));
        let text: BTreeMap<u64, &str> = o
            .clean
            .tweets
            .iter()
            .map(|t| (t.tweet_id, t.cleaned_text.as_str()))
            .collect();
        let raw: BTreeMap<u64, f64> = r.results.iter().map(|t| (t.tweet_id, t.raw_tpr)).collect();
        for id in &o.exemplars {
            exemplars.push_str(&format!("{id}\t{}\t{}\n", raw[id], text[id]));
        }
        let mut block = tpr_block(&r.results);
        let obj = block.as_object_mut().expect("object");
        obj.insert("n".into(), json!(r.n));
        obj.insert("k".into(), json!(r.k));
        obj.insert("template_count".into(), json!(r.template_count));
        obj.insert("template_fraction".into(), json!(r.template_fraction));
        obj.insert("dropped_empty".into(), json!(o.clean.dropped_empty));
        obj.insert("duplicates_collapsed".into(), json!(o.clean.duplicates_collapsed));
        obj.insert("exemplars".into(), json!(o.exemplars));
        summary.insert(d.hashtag.clone(), block);
        pooled.extend(o.report.results);
    }
    if summary.is_empty() {
        return Err(match first_small {
            Some(e) => e.into(),
            None => CliError::data("EmptyCorpus", "no hashtags to analyze"),
        });
    }
    ecdf.extend(tpr_ecdf_rows(POOLED, &pooled));

    create_out(&paths.out)?;
    rows::write_csv(&paths.out.join(files::TPR), &tpr_rows)?;
    rows::write_csv(&paths.out.join(files::TPR_ECDF), &ecdf)?;
    std::fs::write(paths.out.join(files::EXEMPLARS), exemplars)?;
    write_json(
        &paths.out.join(files::TPR_SUMMARY),
        &json!({
            "config": opts.config,
            "embedder": match opts.embedder {
                EmbedderKind::File => "file",
                EmbedderKind::Trigram => "trigram",
            },
            "hashtags": summary,
            "skipped": skipped,
            "pooled": tpr_block(&pooled),
        }),
    )?;
    Ok(())
}

pub fn fit(paths: &Paths, spec: &ModelSpec) -> Result<(), CliError> {
    spec.validate()?;
    let corpus = load(paths)?;
    let classes = exposure::classify_corpus(&corpus.datasets);
    let panel = causal::build_panel(&corpus.datasets, &classes, spec)?;
    create_out(&paths.out)?;
    let mut w = BufWriter::new(File::create(paths.out.join(files::PANEL))?);
    causal::panel::write_panel_csv(&mut w, &panel.rows)?;
    w.flush()?;
    let study: Vec<rows::EventStudyRow> = causal::event_study_means(&panel.rows)
        .into_iter()
        .map(|(t, mean_y, mean_e)| rows::EventStudyRow { t, mean_y, mean_e })
        .collect();
    rows::write_csv(&paths.out.join(files::EVENT_STUDY), &study)?;
    let fit = causal::fit_quasipoisson(&panel.rows, spec)?;
    let summary = causal::summarize_fit(&fit, spec, &panel.excluded)?;
    write_json(&paths.out.join(files::FIT), &summary)?;
    Ok(())
}

pub fn simulate(out: &Path, config: &SimConfig) -> Result<(), CliError> {
    let sim = simgen::generate(config)?;
    create_out(out)?;
    sim.write_dir(out)?;
    write_json(&out.join(files::SIM_CONFIG), config)?;
    log::info!(
        "simulated {} hashtags, {} tweets into {}",
        sim.corpus.datasets.len(),
        sim.corpus.datasets.iter().map(|d| d.tweets().len()).sum::<usize>(),
        out.display()
    );
    Ok(())
}
