//! Alignment and objective-wise improvement measurement, plus the run report.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{objective_metrics, Corpus, Query};
use crate::encoder::EncoderModel;
use crate::error::{Error, Result};
use crate::index::RetrievalIndex;
use crate::pipeline::{MetricEvent, RunDir};
use crate::scoring::ndcg;
use crate::teacher::Teacher;

/// Mean NDCG of the teacher's scores in retriever order over held-out
/// queries: the proxy for how well the retriever's ranking matches the
/// teacher's preferences.
pub fn alignment_ndcg(
    model: &EncoderModel,
    index: &RetrievalIndex,
    teacher: &dyn Teacher,
    corpus: &Corpus,
    held_out: &[Query],
    k: usize,
) -> Result<f64> {
    if held_out.is_empty() {
        return Err(Error::Precondition("alignment over zero queries".into()));
    }
    let doc_map = corpus.document_map();
    let mut total = 0.0;
    for query in held_out {
        let hits = index.retrieve(model, &query.text, k)?;
        let docs: Vec<_> = hits
            .iter()
            .map(|(id, _)| {
                doc_map
                    .get(id.as_str())
                    .map(|d| (*d).clone())
                    .ok_or_else(|| Error::Corpus(format!("unknown document id '{id}'")))
            })
            .collect::<Result<_>>()?;
        let verdict = teacher.score_documents(query, &docs, &[])?;
        let gains: Vec<f64> = hits
            .iter()
            .map(|(id, _)| f64::from(verdict.scores[id]))
            .collect();
        total += ndcg(&gains)?;
    }
    Ok(total / held_out.len() as f64)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WinTieLoss {
    pub win: usize,
    pub tie: usize,
    pub loss: usize,
}

impl WinTieLoss {
    fn record(&mut self, after: f64, before: f64) {
        if after > before {
            self.win += 1;
        } else if after < before {
            self.loss += 1;
        } else {
            self.tie += 1;
        }
    }

    pub fn total(&self) -> usize {
        self.win + self.tie + self.loss
    }
}

/// Per-objective win/tie/loss counts over queries whose top-1 document
/// changed between the two models.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WinRates {
    pub changed: usize,
    pub relevance: WinTieLoss,
    pub comprehensiveness: WinTieLoss,
    pub purity: WinTieLoss,
}

/// Compare the top-1 retrievals of two models on exact ground-truth metrics.
/// Queries whose top-1 is unchanged are filtered out.
pub fn objective_winrates(
    model_before: &EncoderModel,
    model_after: &EncoderModel,
    queries: &[Query],
    corpus: &Corpus,
) -> Result<WinRates> {
    let index_before = RetrievalIndex::build(model_before, corpus)?;
    let index_after = RetrievalIndex::build(model_after, corpus)?;
    let doc_map = corpus.document_map();
    let mut rates = WinRates::default();
    for query in queries {
        let before_hit = index_before.retrieve(model_before, &query.text, 1)?;
        let after_hit = index_after.retrieve(model_after, &query.text, 1)?;
        let (Some((before_id, _)), Some((after_id, _))) =
            (before_hit.first(), after_hit.first())
        else {
            continue;
        };
        if before_id == after_id {
            continue;
        }
        let before_doc = doc_map
            .get(before_id.as_str())
            .ok_or_else(|| Error::Corpus(format!("unknown document id '{before_id}'")))?;
        let after_doc = doc_map
            .get(after_id.as_str())
            .ok_or_else(|| Error::Corpus(format!("unknown document id '{after_id}'")))?;
        let (rc_before, comp_before, pur_before) = objective_metrics(before_doc, query)?;
        let (rc_after, comp_after, pur_after) = objective_metrics(after_doc, query)?;
        rates.changed += 1;
        rates.relevance.record(rc_after as f64, rc_before as f64);
        rates.comprehensiveness.record(comp_after, comp_before);
        rates.purity.record(pur_after, pur_before);
    }
    Ok(rates)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationValue {
    pub iteration: usize,
    pub value: f64,
}

/// Aggregated view of a run directory: alignment curve, threshold history,
/// win rates, and pool status counts.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Report {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alignment_initial: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alignment_final: Option<f64>,
    pub alignment_per_iteration: Vec<IterationValue>,
    pub thresholds: Vec<IterationValue>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub winrates: Option<WinRates>,
    pub pool_statuses: BTreeMap<String, usize>,
    pub triplet_counts: BTreeMap<String, usize>,
}

fn status_name(status: crate::scoring::EntryStatus) -> &'static str {
    match status {
        crate::scoring::EntryStatus::Unscored => "unscored",
        crate::scoring::EntryStatus::Scored => "scored",
        crate::scoring::EntryStatus::Selected => "selected",
        crate::scoring::EntryStatus::WellLearned => "well_learned",
        crate::scoring::EntryStatus::Regressed => "regressed",
    }
}

/// Build the report purely from persisted artifacts. A fresh or empty run
/// directory yields an empty report.
pub fn build_report(run_root: &Path) -> Result<Report> {
    let run_dir = RunDir::new(run_root);
    let mut report = Report::default();
    let events: Vec<MetricEvent> = run_dir.read_metrics()?;
    for event in &events {
        match (event.stage.as_str(), event.key.as_str()) {
            ("assess", "holdout_alignment") => {
                if let Some(v) = event.value.as_f64() {
                    report.alignment_per_iteration.push(IterationValue {
                        iteration: event.iteration,
                        value: v,
                    });
                }
            }
            ("construct", "threshold") => {
                if let Some(v) = event.value.as_f64() {
                    report.thresholds.push(IterationValue {
                        iteration: event.iteration,
                        value: v,
                    });
                }
            }
            ("eval", "alignment_initial") => report.alignment_initial = event.value.as_f64(),
            ("eval", "alignment_final") => report.alignment_final = event.value.as_f64(),
            ("eval", "winrates") => {
                report.winrates = serde_json::from_value(event.value.clone()).ok();
            }
            ("construct", key) if key.starts_with("triplets_") => {
                if let Some(v) = event.value.as_u64() {
                    *report
                        .triplet_counts
                        .entry(key.trim_start_matches("triplets_").to_string())
                        .or_insert(0) += v as usize;
                }
            }
            _ => {}
        }
    }
    if run_dir.pool_path().exists() {
        for entry in run_dir.load_pool()? {
            *report
                .pool_statuses
                .entry(status_name(entry.status).to_string())
                .or_insert(0) += 1;
        }
    }
    Ok(report)
}

impl Report {
    /// Plain-text rendering for terminals.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str("run report\n==========\n");
        match (self.alignment_initial, self.alignment_final) {
            (Some(a), Some(b)) => {
                out.push_str(&format!(
                    "alignment NDCG: initial {a:.4} -> final {b:.4} ({:+.4})\n",
                    b - a
                ));
            }
            _ => out.push_str("alignment NDCG: not evaluated\n"),
        }
        for iv in &self.alignment_per_iteration {
            out.push_str(&format!(
                "  after iteration {}: {:.4}\n",
                iv.iteration, iv.value
            ));
        }
        if !self.thresholds.is_empty() {
            out.push_str("guidance thresholds:\n");
            for iv in &self.thresholds {
                out.push_str(&format!("  iteration {}: {:.4}\n", iv.iteration, iv.value));
            }
        }
        if let Some(w) = &self.winrates {
            out.push_str(&format!(
                "objective win rates over {} changed top-1 queries:\n",
                w.changed
            ));
            for (name, wtl) in [
                ("relevance", w.relevance),
                ("comprehensiveness", w.comprehensiveness),
                ("purity", w.purity),
            ] {
                out.push_str(&format!(
                    "  {name:<18} win {:>4}  tie {:>4}  loss {:>4}\n",
                    wtl.win, wtl.tie, wtl.loss
                ));
            }
        }
        if !self.pool_statuses.is_empty() {
            out.push_str("pool statuses:\n");
            for (status, count) in &self.pool_statuses {
                out.push_str(&format!("  {status:<14} {count}\n"));
            }
        }
        if !self.triplet_counts.is_empty() {
            out.push_str("triplets constructed (all iterations):\n");
            for (kind, count) in &self.triplet_counts {
                out.push_str(&format!("  {kind:<18} {count}\n"));
            }
        }
        out
    }
}
