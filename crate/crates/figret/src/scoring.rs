//! Teacher scores to rankings: NDCG against the ideal ordering, and the
//! guidance-selection threshold.

use serde::{Deserialize, Serialize};

use crate::corpus::{DocId, Document, Query, QueryId};
use crate::error::{Error, Result};
use crate::teacher::{Exemplar, Teacher};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntryStatus {
    Unscored,
    Scored,
    Selected,
    WellLearned,
    Regressed,
}

/// One query with its retrieved top-k, teacher scores, and NDCG. The unit of
/// mastery assessment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplePoolEntry {
    pub query_id: QueryId,
    pub query_text: String,
    /// Retrieved document ids in retriever order.
    pub doc_ids: Vec<DocId>,
    /// Teacher scores aligned with `doc_ids`; present once scored.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scores: Option<Vec<u8>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ndcg: Option<f64>,
    pub status: EntryStatus,
}

impl SamplePoolEntry {
    pub fn new(query_id: QueryId, query_text: String, doc_ids: Vec<DocId>) -> Self {
        SamplePoolEntry {
            query_id,
            query_text,
            doc_ids,
            scores: None,
            ndcg: None,
            status: EntryStatus::Unscored,
        }
    }

    pub fn is_scored(&self) -> bool {
        self.scores.is_some() && self.ndcg.is_some()
    }
}

fn dcg(gains: &[f64]) -> f64 {
    gains
        .iter()
        .enumerate()
        .map(|(i, &g)| ((2f64).powf(g) - 1.0) / ((i + 2) as f64).log2())
        .sum()
}

/// NDCG of relevance gains in retriever order: gain `2^g - 1`, discount
/// `log2(rank + 1)`, normalized by the ideal (sorted) ordering. All-zero
/// gains return 1.0 by convention.
pub fn ndcg(retriever_order_gains: &[f64]) -> Result<f64> {
    if retriever_order_gains.is_empty() {
        return Err(Error::Precondition("ndcg of an empty gain list".into()));
    }
    if retriever_order_gains.iter().any(|&g| g < 0.0 || !g.is_finite()) {
        return Err(Error::Domain("ndcg gains must be finite and >= 0".into()));
    }
    let actual = dcg(retriever_order_gains);
    let mut ideal_order = retriever_order_gains.to_vec();
    ideal_order.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let ideal = dcg(&ideal_order);
    if ideal == 0.0 {
        return Ok(1.0);
    }
    Ok(actual / ideal)
}

/// Ask the teacher to score an unscored entry's documents collectively, then
/// fill scores and NDCG. On teacher failure the entry is left untouched.
pub fn score_entry(
    entry: &mut SamplePoolEntry,
    teacher: &dyn Teacher,
    query: &Query,
    docs: &[Document],
    exemplars: &[Exemplar],
) -> Result<()> {
    if entry.status != EntryStatus::Unscored {
        return Err(Error::Precondition(format!(
            "entry '{}' is already scored",
            entry.query_id
        )));
    }
    if docs.len() != entry.doc_ids.len() {
        return Err(Error::Precondition(format!(
            "entry '{}': {} documents passed for {} retrieved ids",
            entry.query_id,
            docs.len(),
            entry.doc_ids.len()
        )));
    }
    let verdict = teacher.score_documents(query, docs, exemplars)?;
    let mut scores = Vec::with_capacity(entry.doc_ids.len());
    for id in &entry.doc_ids {
        let s = verdict.scores.get(id).ok_or_else(|| {
            Error::TeacherProtocol(format!("verdict missing score for document '{id}'"))
        })?;
        scores.push(*s);
    }
    let gains: Vec<f64> = scores.iter().map(|&s| f64::from(s)).collect();
    entry.ndcg = Some(ndcg(&gains)?);
    entry.scores = Some(scores);
    entry.status = EntryStatus::Scored;
    Ok(())
}

/// Whether the retriever's rank-1 document attains the maximum teacher score
/// (score ties count as a match).
pub fn top1_matches(entry: &SamplePoolEntry) -> bool {
    match &entry.scores {
        Some(scores) if !scores.is_empty() => {
            let max = scores.iter().copied().max().unwrap();
            scores[0] == max
        }
        _ => false,
    }
}

/// Select the guidance threshold: the minimum NDCG among entries whose top-1
/// matches the teacher's ranking. Entries strictly below it are marked
/// `selected`. Falls back to the pool median (with a loud warning) when no
/// entry qualifies.
pub fn select_threshold(pool: &mut [SamplePoolEntry]) -> Result<f64> {
    if pool.is_empty() {
        return Err(Error::Precondition("select_threshold on an empty pool".into()));
    }
    let mut ndcgs = Vec::with_capacity(pool.len());
    for entry in pool.iter() {
        match entry.ndcg {
            Some(v) => ndcgs.push(v),
            None => {
                return Err(Error::Precondition(format!(
                    "entry '{}' is unscored; score the pool first",
                    entry.query_id
                )))
            }
        }
    }
    let qualifying: Vec<f64> = pool
        .iter()
        .filter(|e| top1_matches(e))
        .map(|e| e.ndcg.unwrap())
        .collect();
    let threshold = if qualifying.is_empty() {
        let mut sorted = ndcgs.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mid = sorted.len() / 2;
        let median = if sorted.len() % 2 == 1 {
            sorted[mid]
        } else {
            0.5 * (sorted[mid - 1] + sorted[mid])
        };
        log::warn!(
            "no pool entry has a teacher-matching top-1 ranking; \
             falling back to median NDCG {median:.4} as the guidance threshold"
        );
        median
    } else {
        qualifying.iter().copied().fold(f64::INFINITY, f64::min)
    };
    for entry in pool.iter_mut() {
        if entry.status == EntryStatus::Scored && entry.ndcg.unwrap() < threshold {
            entry.status = EntryStatus::Selected;
        }
    }
    Ok(threshold)
}
