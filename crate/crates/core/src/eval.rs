//! Benchmark sampling, metric computation and the reranking ablation.
//!
//! A dataset of `(query_id, query, ground_truth)` records is split into
//! equal-sized disjoint groups by seeded uniform sampling without
//! replacement. Each query is answered under both configurations, graded by
//! the judge on the 1-10 rubric, and reduced to four metrics per group:
//! average score, percentage of score 1, of score >= 8 and of score 10.
//! Aggregates are unweighted means of the group metrics plus the population
//! standard deviation of the group averages.
//!
//! Per-query gateway failures are recorded and excluded from the metrics
//! with an explicit count; they are never silently dropped and never
//! conflated with a wrong answer.

use std::collections::HashSet;
use std::io::BufRead;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gateway::AnswerJudge;
use crate::pipeline::{Engine, QueryTrace};

/// Wire form of one benchmark query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub query_id: String,
    pub query: String,
    pub ground_truth: String,
}

/// A benchmark query assigned to an evaluation group (1-based).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryRecord {
    pub query_id: String,
    pub query: String,
    pub ground_truth: String,
    pub group_id: usize,
}

/// Which pipeline configuration produced an answer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConfigLabel {
    WithRerank,
    WithoutRerank,
}

impl ConfigLabel {
    pub fn rerank_enabled(self) -> bool {
        matches!(self, ConfigLabel::WithRerank)
    }

    /// Short column label.
    pub fn short(self) -> &'static str {
        match self {
            ConfigLabel::WithRerank => "With",
            ConfigLabel::WithoutRerank => "No",
        }
    }
}

/// One judged answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub query_id: String,
    pub config: ConfigLabel,
    pub score: u8,
    pub answer: String,
    pub group_id: usize,
}

/// The four metrics for one group of judged answers. Values are kept at full
/// precision; rounding happens only at presentation via [`round1`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupMetrics {
    pub avg_score: f64,
    pub pct_score_1: f64,
    pub pct_score_ge8: f64,
    pub pct_score_10: f64,
    pub n: usize,
}

/// Round to one decimal, half away from zero. Presentation only.
pub fn round1(x: f64) -> f64 {
    (x * 10.0).round() / 10.0
}

/// Round to two decimals, half away from zero. Presentation only.
pub fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

/// Parse a line-delimited JSON dataset, rejecting duplicate query ids.
pub fn load_dataset_jsonl<R: BufRead>(reader: R) -> Result<Vec<DatasetRecord>> {
    let mut records = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(format!("line {}", i + 1), e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: DatasetRecord =
            serde_json::from_str(&line).map_err(|e| Error::MalformedRecord {
                line: i + 1,
                message: e.to_string(),
            })?;
        if !seen.insert(record.query_id.clone()) {
            return Err(Error::MalformedRecord {
                line: i + 1,
                message: format!("duplicate query_id {}", record.query_id),
            });
        }
        records.push(record);
    }
    Ok(records)
}

/// Sample `n_groups` disjoint groups of `group_size` records each, uniformly
/// without replacement, reproducibly from `seed`.
///
/// Records are ordered by `query_id` before shuffling so the grouping does
/// not depend on input file order.
pub fn sample_groups(
    dataset: &[DatasetRecord],
    n_groups: usize,
    group_size: usize,
    seed: u64,
) -> Result<Vec<Vec<QueryRecord>>> {
    let needed = n_groups
        .checked_mul(group_size)
        .ok_or_else(|| Error::Validation("group sizes overflow".into()))?;
    if n_groups == 0 || group_size == 0 {
        return Err(Error::Validation(
            "n_groups and group_size must be >= 1".into(),
        ));
    }
    if dataset.len() < needed {
        return Err(Error::InsufficientDataset {
            required: needed,
            available: dataset.len(),
        });
    }

    let mut ordered: Vec<&DatasetRecord> = dataset.iter().collect();
    ordered.sort_by(|a, b| a.query_id.cmp(&b.query_id));

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (sampled, _) = ordered.partial_shuffle(&mut rng, needed);

    Ok(sampled
        .chunks(group_size)
        .enumerate()
        .map(|(g, chunk)| {
            chunk
                .iter()
                .map(|r| QueryRecord {
                    query_id: r.query_id.clone(),
                    query: r.query.clone(),
                    ground_truth: r.ground_truth.clone(),
                    group_id: g + 1,
                })
                .collect()
        })
        .collect())
}

/// Reduce one group's score records to the four metrics.
///
/// All records must belong to one group and one configuration; the input may
/// not be empty.
pub fn compute_group_metrics(scores: &[ScoreRecord]) -> Result<GroupMetrics> {
    let first = scores
        .first()
        .ok_or_else(|| Error::Validation("no scores to reduce".into()))?;
    for s in scores {
        if s.group_id != first.group_id || s.config != first.config {
            return Err(Error::Validation(format!(
                "mixed groups or configs in one reduction: {}/{:?} vs {}/{:?}",
                first.group_id, first.config, s.group_id, s.config
            )));
        }
        if !(1..=10).contains(&s.score) {
            return Err(Error::Validation(format!(
                "score {} outside [1, 10] for {}",
                s.score, s.query_id
            )));
        }
    }

    let n = scores.len();
    let sum: u64 = scores.iter().map(|s| s.score as u64).sum();
    let count = |pred: fn(u8) -> bool| scores.iter().filter(|s| pred(s.score)).count();
    Ok(GroupMetrics {
        avg_score: sum as f64 / n as f64,
        pct_score_1: 100.0 * count(|s| s == 1) as f64 / n as f64,
        pct_score_ge8: 100.0 * count(|s| s >= 8) as f64 / n as f64,
        pct_score_10: 100.0 * count(|s| s == 10) as f64 / n as f64,
        n,
    })
}

/// Unweighted mean of each group metric, plus the population standard
/// deviation of the group average scores.
pub fn aggregate_metrics(groups: &[GroupMetrics]) -> Result<(GroupMetrics, f64)> {
    if groups.is_empty() {
        return Err(Error::Validation("no groups to aggregate".into()));
    }
    let n_groups = groups.len() as f64;
    let mean = |f: fn(&GroupMetrics) -> f64| groups.iter().map(f).sum::<f64>() / n_groups;

    let aggregate = GroupMetrics {
        avg_score: mean(|g| g.avg_score),
        pct_score_1: mean(|g| g.pct_score_1),
        pct_score_ge8: mean(|g| g.pct_score_ge8),
        pct_score_10: mean(|g| g.pct_score_10),
        n: groups.iter().map(|g| g.n).sum(),
    };
    let avg_mean = aggregate.avg_score;
    let variance = groups
        .iter()
        .map(|g| (g.avg_score - avg_mean).powi(2))
        .sum::<f64>()
        / n_groups;
    Ok((aggregate, variance.sqrt()))
}

/// A query dropped from the metrics, with its stage-attributed failure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExcludedQuery {
    pub query_id: String,
    pub config: ConfigLabel,
    pub group_id: usize,
    pub error: String,
}

/// Results of one configuration across all groups.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigReport {
    pub label: ConfigLabel,
    pub groups: Vec<GroupMetrics>,
    pub aggregate: GroupMetrics,
    pub avg_score_stddev: f64,
    pub excluded: Vec<ExcludedQuery>,
}

/// A trace keyed by the score record it belongs to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub query_id: String,
    pub config: ConfigLabel,
    pub group_id: usize,
    pub trace: QueryTrace,
}

/// Full ablation output: both configurations' metrics plus machine-readable
/// score records and traces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub configs: Vec<ConfigReport>,
    pub records: Vec<ScoreRecord>,
    pub traces: Vec<TraceRecord>,
}

fn run_group(
    engine: &Engine,
    group: &[QueryRecord],
    judge: &dyn AnswerJudge,
    label: ConfigLabel,
) -> (Vec<(ScoreRecord, TraceRecord)>, Vec<ExcludedQuery>) {
    use rayon::prelude::*;

    let mut sorted: Vec<&QueryRecord> = group.iter().collect();
    sorted.sort_by(|a, b| a.query_id.cmp(&b.query_id));

    let outcomes: Vec<std::result::Result<(ScoreRecord, TraceRecord), ExcludedQuery>> = sorted
        .par_iter()
        .map(|q| {
            let attempt = engine
                .answer_query(&q.query, label.rerank_enabled())
                .and_then(|(answer, trace)| {
                    let verdict = judge.judge(&q.query, &answer, &q.ground_truth)?;
                    Ok((answer, trace, verdict))
                });
            match attempt {
                Ok((answer, trace, verdict)) => Ok((
                    ScoreRecord {
                        query_id: q.query_id.clone(),
                        config: label,
                        score: verdict.score,
                        answer,
                        group_id: q.group_id,
                    },
                    TraceRecord {
                        query_id: q.query_id.clone(),
                        config: label,
                        group_id: q.group_id,
                        trace,
                    },
                )),
                Err(e) => Err(ExcludedQuery {
                    query_id: q.query_id.clone(),
                    config: label,
                    group_id: q.group_id,
                    error: e.to_string(),
                }),
            }
        })
        .collect();

    let mut scored = Vec::new();
    let mut excluded = Vec::new();
    for outcome in outcomes {
        match outcome {
            Ok(pair) => scored.push(pair),
            Err(ex) => excluded.push(ex),
        }
    }
    (scored, excluded)
}

/// Run one configuration over every group.
pub fn run_configuration(
    engine: &Engine,
    groups: &[Vec<QueryRecord>],
    judge: &dyn AnswerJudge,
    label: ConfigLabel,
) -> Result<(ConfigReport, Vec<ScoreRecord>, Vec<TraceRecord>)> {
    if groups.is_empty() {
        return Err(Error::Validation("no groups to evaluate".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(engine.config().gateway_parallelism)
        .build()
        .map_err(|e| Error::Config(format!("building thread pool: {e}")))?;

    let mut group_metrics = Vec::with_capacity(groups.len());
    let mut all_excluded = Vec::new();
    let mut records = Vec::new();
    let mut traces = Vec::new();

    for group in groups {
        let (scored, excluded) = pool.install(|| run_group(engine, group, judge, label));
        let group_scores: Vec<ScoreRecord> = scored.iter().map(|(s, _)| s.clone()).collect();
        if group_scores.is_empty() {
            let gid = group.first().map(|q| q.group_id).unwrap_or(0);
            return Err(Error::Validation(format!(
                "every query in group {gid} failed; no metrics to compute"
            )));
        }
        group_metrics.push(compute_group_metrics(&group_scores)?);
        all_excluded.extend(excluded);
        for (score, trace) in scored {
            records.push(score);
            traces.push(trace);
        }
    }

    let (aggregate, avg_score_stddev) = aggregate_metrics(&group_metrics)?;
    Ok((
        ConfigReport {
            label,
            groups: group_metrics,
            aggregate,
            avg_score_stddev,
            excluded: all_excluded,
        },
        records,
        traces,
    ))
}

/// Answer and judge every query under both configurations.
pub fn run_ablation(
    engine: &Engine,
    groups: &[Vec<QueryRecord>],
    judge: &dyn AnswerJudge,
) -> Result<AblationReport> {
    let mut configs = Vec::new();
    let mut records = Vec::new();
    let mut traces = Vec::new();
    for label in [ConfigLabel::WithRerank, ConfigLabel::WithoutRerank] {
        let (report, mut recs, mut trs) = run_configuration(engine, groups, judge, label)?;
        configs.push(report);
        records.append(&mut recs);
        traces.append(&mut trs);
    }
    Ok(AblationReport {
        configs,
        records,
        traces,
    })
}

impl AblationReport {
    /// Human-readable table: one row per (group, config) plus the aggregate
    /// rows, mirroring the four metric columns.
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{:<6} {:<6} {:>9} {:>8} {:>8} {:>8}\n",
            "Group", "Config", "Avg Score", "=1 (%)", ">=8 (%)", "=10 (%)"
        ));
        let n_groups = self.configs.first().map(|c| c.groups.len()).unwrap_or(0);
        for g in 0..n_groups {
            for config in &self.configs {
                let m = &config.groups[g];
                out.push_str(&format!(
                    "{:<6} {:<6} {:>9.2} {:>8.1} {:>8.1} {:>8.1}\n",
                    format!("{:02}", g + 1),
                    config.label.short(),
                    round2(m.avg_score),
                    round1(m.pct_score_1),
                    round1(m.pct_score_ge8),
                    round1(m.pct_score_10),
                ));
            }
        }
        for config in &self.configs {
            let m = &config.aggregate;
            out.push_str(&format!(
                "{:<6} {:<6} {:>9.2} {:>8.1} {:>8.1} {:>8.1}\n",
                "Avg",
                config.label.short(),
                round2(m.avg_score),
                round1(m.pct_score_1),
                round1(m.pct_score_ge8),
                round1(m.pct_score_10),
            ));
        }
        for config in &self.configs {
            out.push_str(&format!(
                "{} avg-score std dev: {:.2}; excluded queries: {}\n",
                config.label.short(),
                round2(config.avg_score_stddev),
                config.excluded.len()
            ));
        }
        out
    }

    /// Score records as line-delimited JSON, in deterministic order.
    pub fn records_jsonl(&self) -> String {
        let mut out = String::new();
        for record in &self.records {
            out.push_str(&serde_json::to_string(record).expect("record serializes"));
            out.push('\n');
        }
        out
    }

    /// Query traces as line-delimited JSON, keyed like the score records.
    pub fn traces_jsonl(&self) -> String {
        let mut out = String::new();
        for trace in &self.traces {
            out.push_str(&serde_json::to_string(trace).expect("trace serializes"));
            out.push('\n');
        }
        out
    }
}
