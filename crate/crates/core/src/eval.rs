//! Checkpointed evaluation of question-answering systems over a document
//! stream, bucketed by how many times each answer has changed.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::baselines::QaSystem;
use crate::data::{Dataset, Question, QuestionKind};
use crate::embed::fnv1a;
use crate::kb::Timestamp;
use crate::lm::parse::Answer;
use crate::pipeline::{IngestReport, PipelineError};

pub const FRACTIONS: [f64; 5] = [0.2, 0.4, 0.6, 0.8, 1.0];

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("dataset {0} has no answer changes to schedule checkpoints on")]
    NoChanges(String),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub ts: Timestamp,
    /// Largest fraction of changes that lands on this timestamp.
    pub fraction: f64,
    pub revealed_changes: usize,
}

/// Earliest timestamp by which at least `ceil(f * total)` changes are
/// revealed, for each fraction; fractions sharing a timestamp collapse.
pub fn schedule_checkpoints(dataset: &Dataset) -> Result<Vec<Checkpoint>, EvalError> {
    let schedule = dataset.change_schedule();
    let total: usize = schedule.iter().map(|(_, qs)| qs.len()).sum();
    if total == 0 {
        return Err(EvalError::NoChanges(dataset.id.clone()));
    }
    let mut out: Vec<Checkpoint> = Vec::new();
    for f in FRACTIONS {
        let need = ((f * total as f64) - 1e-9).ceil().max(1.0) as usize;
        let mut seen = 0;
        for (ts, qs) in &schedule {
            seen += qs.len();
            if seen >= need {
                match out.last_mut() {
                    Some(last) if &last.ts == ts => last.fraction = f,
                    _ => out.push(Checkpoint {
                        ts: ts.clone(),
                        fraction: f,
                        revealed_changes: seen,
                    }),
                }
                break;
            }
        }
    }
    Ok(out)
}

/// Which questions count as changed at a checkpoint.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChangedRule {
    /// Changed after the previous checkpoint, up to this one.
    #[default]
    SincePrevious,
    /// Changed at any point up to this checkpoint.
    Ever,
}

fn rng_for(seed: u64, salt: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ fnv1a(salt.as_bytes()))
}

/// `(changed, unchanged)` question sets for checkpoint `idx`, each sorted by
/// id. The unchanged set is a seeded sample as large as the changed one.
pub fn select_questions<'a>(
    dataset: &'a Dataset,
    checkpoints: &[Checkpoint],
    idx: usize,
    seed: u64,
    rule: ChangedRule,
) -> (Vec<&'a Question>, Vec<&'a Question>) {
    let ts = &checkpoints[idx].ts;
    let prev = match rule {
        ChangedRule::SincePrevious if idx > 0 => Some(&checkpoints[idx - 1].ts),
        _ => None,
    };
    let changed_in = |q: &Question| q.change_times().any(|t| t <= ts && prev.is_none_or(|p| t > p));
    let mut changed: Vec<&Question> = dataset.questions.iter().filter(|q| changed_in(q)).collect();
    let mut pool: Vec<&Question> = dataset
        .questions
        .iter()
        .filter(|q| !changed_in(q) && q.first_ts().is_some_and(|f| f <= ts))
        .filter(|q| rule == ChangedRule::SincePrevious || q.updates_before(ts) == 0)
        .collect();
    if pool.len() < changed.len() {
        log::info!(
            "checkpoint {ts}: only {} unchanged questions for {} changed",
            pool.len(),
            changed.len()
        );
    }
    let mut rng = rng_for(seed, &format!("{}#{idx}", dataset.id));
    pool.shuffle(&mut rng);
    pool.truncate(changed.len());
    changed.sort_by(|a, b| a.id.cmp(&b.id));
    pool.sort_by(|a, b| a.id.cmp(&b.id));
    (changed, pool)
}

/// Answer options offered for a question: every answer it ever had, in a
/// seeded order. Yes/no questions always offer both.
pub fn build_choices(question: &Question, seed: u64) -> Vec<String> {
    let mut set = BTreeSet::new();
    match question.kind {
        QuestionKind::YesNo => return vec!["yes".into(), "no".into()],
        QuestionKind::MultipleChoice => {
            for (a, _) in &question.answer_history {
                if let Answer::Single(s) = a {
                    set.insert(s.clone());
                }
            }
        }
        QuestionKind::List => {
            for (a, _) in &question.answer_history {
                if let Answer::List(items) = a {
                    set.extend(items.iter().cloned());
                }
            }
        }
    }
    if question.kind == QuestionKind::MultipleChoice && set.len() == 1 {
        log::debug!("question {} has a single choice", question.id);
    }
    let mut out: Vec<String> = set.into_iter().collect();
    out.shuffle(&mut rng_for(seed, &question.id));
    out
}

/// 1 on a normalized exact match (set equality for lists), else 0. A
/// missing prediction scores 0.
pub fn score(prediction: Option<&Answer>, gold: &Answer) -> u8 {
    u8::from(prediction.is_some_and(|p| p.matches(gold)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub dataset_id: String,
    pub system: String,
    pub question_id: String,
    pub checkpoint: Timestamp,
    pub fraction: f64,
    pub changed: bool,
    pub n_updates_so_far: usize,
    pub prediction: Option<Answer>,
    pub gold: Answer,
    pub correct: u8,
}

impl EvalRecord {
    pub fn bucket(&self) -> &'static str {
        match self.n_updates_so_far {
            0 => "0",
            1 => "1",
            _ => "2+",
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct EvalOptions {
    pub seed: u64,
    pub rule: ChangedRule,
}

/// Streams `dataset` through `system`, asking the selected questions at
/// each checkpoint once every document up to it has been ingested.
/// Documents after the last checkpoint are ingested too, so the system ends
/// in its final state.
pub fn run_eval(
    system: &mut dyn QaSystem,
    dataset: &Dataset,
    opts: &EvalOptions,
) -> Result<(Vec<EvalRecord>, IngestReport), EvalError> {
    let checkpoints = schedule_checkpoints(dataset)?;
    let mut docs = dataset.documents.iter().peekable();
    let mut ingest = IngestReport::default();
    let mut records = Vec::new();
    for (idx, ck) in checkpoints.iter().enumerate() {
        while let Some(d) = docs.next_if(|d| d.ts <= ck.ts) {
            ingest.absorb(&system.ingest(d)?);
        }
        let (changed, unchanged) = select_questions(dataset, &checkpoints, idx, opts.seed, opts.rule);
        let mut asked: Vec<(&Question, bool)> = changed.into_iter().map(|q| (q, true)).collect();
        asked.extend(unchanged.into_iter().map(|q| (q, false)));
        asked.sort_by(|a, b| a.0.id.cmp(&b.0.id));
        for (q, was_changed) in asked {
            let Some(gold) = q.answer_at(&ck.ts) else { continue };
            let choices = build_choices(q, opts.seed);
            let pred = system.answer(&q.text, &ck.ts, &choices, q.is_list())?;
            records.push(EvalRecord {
                dataset_id: dataset.id.clone(),
                system: system.name().to_string(),
                question_id: q.id.clone(),
                checkpoint: ck.ts.clone(),
                fraction: ck.fraction,
                changed: was_changed,
                n_updates_so_far: q.updates_before(&ck.ts),
                correct: score(pred.answer.as_ref(), gold),
                prediction: pred.answer,
                gold: gold.clone(),
            });
        }
    }
    for d in docs {
        ingest.absorb(&system.ingest(d)?);
    }
    Ok((records, ingest))
}

/// Mean and standard error over per-conversation means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub system: String,
    /// Update bucket (`0`, `1`, `2+`) or checkpoint fraction.
    pub group: String,
    pub mean: f64,
    pub stderr: f64,
    pub conversations: usize,
    pub records: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub total_records: usize,
    pub buckets: Vec<Stat>,
    pub curves: Vec<Stat>,
}

/// Sample standard deviation over `sqrt(n)`; zero for a single value.
pub fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt() / n.sqrt())
}

/// Correct and total counts per dataset, keyed by (system, group).
type Tally<'a> = BTreeMap<(String, String), BTreeMap<&'a str, (u32, u32)>>;

fn stats(records: &[EvalRecord], key: impl Fn(&EvalRecord) -> String) -> Vec<Stat> {
    let mut acc = Tally::new();
    for r in records {
        let slot = acc
            .entry((r.system.clone(), key(r)))
            .or_default()
            .entry(r.dataset_id.as_str())
            .or_default();
        slot.0 += u32::from(r.correct);
        slot.1 += 1;
    }
    acc.into_iter()
        .map(|((system, group), per_conv)| {
            let means: Vec<f64> = per_conv.values().map(|(c, n)| f64::from(*c) / f64::from(*n)).collect();
            let (mean, stderr) = mean_stderr(&means);
            Stat {
                system,
                group,
                mean,
                stderr,
                conversations: means.len(),
                records: per_conv.values().map(|(_, n)| *n as usize).sum(),
            }
        })
        .collect()
}

pub fn aggregate(records: &[EvalRecord]) -> EvalReport {
    EvalReport {
        total_records: records.len(),
        buckets: stats(records, |r| r.bucket().to_string()),
        curves: stats(records, |r| format!("{:.1}", r.fraction)),
    }
}

impl EvalReport {
    pub fn bucket(&self, system: &str, bucket: &str) -> Option<&Stat> {
        self.buckets.iter().find(|s| s.system == system && s.group == bucket)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    fn csv(rows: &[Stat], group: &str) -> String {
        let mut out = format!("system,{group},mean,stderr,conversations,records\n");
        for s in rows {
            out.push_str(&format!(
                "{},{},{:.4},{:.4},{},{}\n",
                s.system, s.group, s.mean, s.stderr, s.conversations, s.records
            ));
        }
        out
    }

    /// Per-bucket accuracy table.
    pub fn to_csv(&self) -> String {
        Self::csv(&self.buckets, "updates")
    }

    /// Accuracy against fraction of changes revealed.
    pub fn to_plot_csv(&self) -> String {
        Self::csv(&self.curves, "fraction")
    }

    pub fn write_dir(&self, dir: &std::path::Path) -> std::io::Result<()> {
        std::fs::write(dir.join("report.json"), self.to_json())?;
        std::fs::write(dir.join("report.csv"), self.to_csv())?;
        std::fs::write(dir.join("plot.csv"), self.to_plot_csv())
    }
}

pub fn write_records<W: Write>(records: &[EvalRecord], mut out: W) -> std::io::Result<()> {
    for r in records {
        writeln!(out, "{}", serde_json::to_string(r).expect("record serializes"))?;
    }
    Ok(())
}

pub fn read_records<R: std::io::BufRead>(input: R) -> Result<Vec<EvalRecord>, crate::data::DataError> {
    let mut out = Vec::new();
    for (n, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| crate::data::DataError::Schema {
            line: n + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}
