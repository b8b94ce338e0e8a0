//! The teacher abstraction: a chat-style judge that scores retrievals and
//! constructs guidance material. Two interchangeable backends implement it:
//! a deterministic mock grounded in synthetic-corpus ground truth, and an
//! HTTP client speaking the chat-completions wire dialect.

mod http;
mod json_extract;
mod mock;
pub mod prompts;

pub use http::{chat, HttpTeacher, HttpTeacherConfig};
pub use json_extract::extract_first_json;
pub use mock::{MockTeacher, MockTeacherConfig};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::corpus::{DocId, Document, Query, QueryId, UnitId};
use crate::encoder::EncoderModel;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeacherMessage {
    pub role: Role,
    pub content: String,
}

impl TeacherMessage {
    pub fn user(content: impl Into<String>) -> Self {
        TeacherMessage {
            role: Role::User,
            content: content.into(),
        }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        TeacherMessage {
            role: Role::Assistant,
            content: content.into(),
        }
    }
}

/// A chat request: ordered conversation plus sampling controls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeacherRequest {
    pub conversation: Vec<TeacherMessage>,
    pub temperature: f64,
    pub max_retries: u32,
}

impl TeacherRequest {
    pub fn new(conversation: Vec<TeacherMessage>) -> Self {
        TeacherRequest {
            conversation,
            temperature: 0.0,
            max_retries: 3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.conversation.is_empty() {
            return Err(Error::Precondition("empty teacher conversation".into()));
        }
        if self.max_retries == 0 {
            return Err(Error::Config("max_retries must be >= 1".into()));
        }
        Ok(())
    }
}

/// Integer 0-10 helpfulness score per submitted document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoresVerdict {
    pub scores: BTreeMap<DocId, u8>,
}

impl ScoresVerdict {
    /// Scores must cover exactly the submitted ids, each in 0..=10.
    pub fn validate_against(&self, submitted: &[DocId]) -> Result<()> {
        if self.scores.len() != submitted.len() {
            return Err(Error::TeacherProtocol(format!(
                "verdict covers {} documents, {} were submitted",
                self.scores.len(),
                submitted.len()
            )));
        }
        for id in submitted {
            match self.scores.get(id) {
                None => {
                    return Err(Error::TeacherProtocol(format!(
                        "verdict missing score for document '{id}'"
                    )))
                }
                Some(&s) if s > 10 => {
                    return Err(Error::TeacherProtocol(format!(
                        "score {s} for document '{id}' outside 0..=10"
                    )))
                }
                Some(_) => {}
            }
        }
        Ok(())
    }
}

/// Content present in a group of similar negatives but absent from the
/// positives. `unit_ids` is ground truth; the HTTP backend leaves it empty.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InfoDelta {
    pub summary: String,
    pub doc_ids: Vec<DocId>,
    #[serde(default)]
    pub unit_ids: Vec<UnitId>,
}

/// A rewritten query that flips one negative group into the relevant set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NewQuery {
    pub query: String,
    pub positive_ids: Vec<DocId>,
    pub negative_ids: Vec<DocId>,
    #[serde(default)]
    pub gold_unit_ids: Vec<UnitId>,
}

impl NewQuery {
    /// Positive and negative ids must partition the submitted ids.
    pub fn validate_partition(&self, submitted: &[DocId]) -> Result<()> {
        let mut seen = std::collections::HashSet::new();
        for id in self.positive_ids.iter().chain(&self.negative_ids) {
            if !seen.insert(id.as_str()) {
                return Err(Error::TeacherProtocol(format!(
                    "new query lists document '{id}' on both sides"
                )));
            }
        }
        if seen.len() != submitted.len()
            || !submitted.iter().all(|id| seen.contains(id.as_str()))
        {
            return Err(Error::TeacherProtocol(
                "new query ids do not partition the submitted documents".into(),
            ));
        }
        if self.positive_ids.is_empty() {
            return Err(Error::TeacherProtocol("new query has no positive documents".into()));
        }
        Ok(())
    }
}

/// A teacher-written document. `unit_ids` is ground truth on the mock path.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthDoc {
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unit_ids: Option<Vec<UnitId>>,
}

/// Purity rewrites of one positive document. A side is absent when it is not
/// constructible (no units to remove, or removal would not change purity);
/// both sides absent means the document yields no purity contrast at all.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PurityDocs {
    pub dense: Option<SynthDoc>,
    pub sparse: Option<SynthDoc>,
}

/// Any structured teacher response, as stored in exemplars and logs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TeacherVerdict {
    Scores(ScoresVerdict),
    InfoDeltas { deltas: Vec<InfoDelta> },
    NewQueries { queries: Vec<NewQuery> },
    CompDoc(SynthDoc),
    PurityDocs(PurityDocs),
}

/// The teacher interface. All methods are deterministic for the mock backend;
/// the HTTP backend is as deterministic as the remote model at temperature 0.
pub trait Teacher: Send + Sync {
    /// Score the retrieved documents collectively: 8-10 directly relevant,
    /// 4-7 indirectly relevant, 0-3 irrelevant, graded within the band by
    /// comprehensiveness and purity.
    fn score_documents(
        &self,
        query: &Query,
        docs: &[Document],
        exemplars: &[Exemplar],
    ) -> Result<ScoresVerdict>;

    /// Summarize content present in (groups of similar) negatives but absent
    /// from the positives.
    fn extract_info_deltas(
        &self,
        query: &Query,
        positives: &[Document],
        negatives: &[Document],
        exemplars: &[Exemplar],
    ) -> Result<Vec<InfoDelta>>;

    /// For each delta, rewrite the query so that delta's documents become the
    /// relevant set; positive/negative ids partition the submitted documents.
    fn make_new_queries(
        &self,
        query: &Query,
        submitted: &[Document],
        deltas: &[InfoDelta],
        exemplars: &[Exemplar],
    ) -> Result<Vec<NewQuery>>;

    /// Compose a document more comprehensive than any positive. `None` when no
    /// strictly more comprehensive document can be built.
    fn make_comprehensive_doc(
        &self,
        query: &Query,
        positives: &[Document],
        exemplars: &[Exemplar],
    ) -> Result<Option<SynthDoc>>;

    /// Rewrite one positive into a denser and a sparser variant.
    fn make_purity_docs(
        &self,
        query: &Query,
        positive: &Document,
        exemplars: &[Exemplar],
    ) -> Result<PurityDocs>;
}

/// A well-learned sample kept as an in-context worked example for the teacher.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exemplar {
    pub query_id: QueryId,
    pub query_text: String,
    pub docs: Vec<Document>,
    pub verdict: TeacherVerdict,
    pub embedding: Vec<f64>,
    pub encoder_version: u64,
}

/// In-memory exemplar store with embedding lookup. Embeddings are recomputed
/// whenever the encoder version moves.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExemplarStore {
    pub exemplars: Vec<Exemplar>,
}

impl ExemplarStore {
    pub fn len(&self) -> usize {
        self.exemplars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exemplars.is_empty()
    }

    pub fn insert(
        &mut self,
        model: &EncoderModel,
        query_id: QueryId,
        query_text: String,
        docs: Vec<Document>,
        verdict: TeacherVerdict,
    ) -> Result<()> {
        let embedding = model.embed(&query_text)?;
        self.exemplars.push(Exemplar {
            query_id,
            query_text,
            docs,
            verdict,
            embedding,
            encoder_version: model.version(),
        });
        Ok(())
    }

    /// Re-embed stored queries that were embedded by an older encoder.
    pub fn refresh(&mut self, model: &EncoderModel) -> Result<()> {
        for ex in &mut self.exemplars {
            if ex.encoder_version != model.version() {
                ex.embedding = model.embed(&ex.query_text)?;
                ex.encoder_version = model.version();
            }
        }
        Ok(())
    }

    /// The `k` stored exemplars most similar to `query_text` under the current
    /// encoder. Requires a store refreshed to the model's version.
    pub fn top_k(&self, model: &EncoderModel, query_text: &str, k: usize) -> Result<Vec<&Exemplar>> {
        if let Some(stale) = self
            .exemplars
            .iter()
            .find(|e| e.encoder_version != model.version())
        {
            return Err(Error::StaleIndex {
                index_version: stale.encoder_version,
                model_version: model.version(),
            });
        }
        let q = model.embed(query_text)?;
        let mut scored: Vec<(usize, f64)> = self
            .exemplars
            .iter()
            .enumerate()
            .map(|(i, e)| {
                let s: f64 = q.iter().zip(&e.embedding).map(|(a, b)| a * b).sum();
                (i, s)
            })
            .collect();
        scored.sort_by(|a, b| {
            b.1.partial_cmp(&a.1)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then_with(|| self.exemplars[a.0].query_id.cmp(&self.exemplars[b.0].query_id))
        });
        Ok(scored
            .into_iter()
            .take(k)
            .map(|(i, _)| &self.exemplars[i])
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::EncoderConfig;

    fn model() -> EncoderModel {
        EncoderModel::new(
            EncoderConfig {
                feature_dim: 256,
                embed_dim: 16,
                ..EncoderConfig::default()
            },
            1,
        )
        .unwrap()
    }

    fn verdict() -> TeacherVerdict {
        TeacherVerdict::Scores(ScoresVerdict {
            scores: BTreeMap::from([("d1".to_string(), 9u8)]),
        })
    }

    #[test]
    fn top_k_prefers_similar_queries() {
        let model = model();
        let mut store = ExemplarStore::default();
        store
            .insert(&model, "q1".into(), "red apples".into(), vec![], verdict())
            .unwrap();
        store
            .insert(&model, "q2".into(), "blue whales swim".into(), vec![], verdict())
            .unwrap();
        let hits = store.top_k(&model, "red apples taste", 1).unwrap();
        assert_eq!(hits[0].query_id, "q1");
    }

    #[test]
    fn stale_embeddings_must_be_refreshed() {
        let mut model = model();
        let mut store = ExemplarStore::default();
        store
            .insert(&model, "q1".into(), "alpha".into(), vec![], verdict())
            .unwrap();
        let t = crate::encoder::GuidanceTriplet::new(
            "q".into(),
            None,
            vec![crate::encoder::TripletDoc {
                id: None,
                text: "a".into(),
                unit_ids: None,
            }],
            vec![crate::encoder::TripletDoc {
                id: None,
                text: "b".into(),
                unit_ids: None,
            }],
            crate::encoder::TripletOrigin::Guidance,
            crate::encoder::ObjectiveTag::Relevance,
            0.5,
        );
        model.train_step(&[&t], 0.05, 0).unwrap();
        assert!(matches!(
            store.top_k(&model, "alpha", 1),
            Err(Error::StaleIndex { .. })
        ));
        store.refresh(&model).unwrap();
        assert!(store.top_k(&model, "alpha", 1).is_ok());
        assert_eq!(store.exemplars[0].encoder_version, model.version());
    }

    #[test]
    fn scores_verdict_coverage_is_enforced() {
        let v = ScoresVerdict {
            scores: BTreeMap::from([("a".to_string(), 5u8)]),
        };
        assert!(v.validate_against(&["a".to_string()]).is_ok());
        assert!(v.validate_against(&["a".to_string(), "b".to_string()]).is_err());
        assert!(v.validate_against(&["b".to_string()]).is_err());
    }

    #[test]
    fn new_query_partition_is_enforced() {
        let submitted = vec!["a".to_string(), "b".to_string(), "c".to_string()];
        let ok = NewQuery {
            query: "x".into(),
            positive_ids: vec!["b".into()],
            negative_ids: vec!["a".into(), "c".into()],
            gold_unit_ids: vec![],
        };
        assert!(ok.validate_partition(&submitted).is_ok());
        let missing = NewQuery {
            query: "x".into(),
            positive_ids: vec!["b".into()],
            negative_ids: vec!["a".into()],
            gold_unit_ids: vec![],
        };
        assert!(missing.validate_partition(&submitted).is_err());
        let overlap = NewQuery {
            query: "x".into(),
            positive_ids: vec!["b".into()],
            negative_ids: vec!["a".into(), "b".into(), "c".into()],
            gold_unit_ids: vec![],
        };
        assert!(overlap.validate_partition(&submitted).is_err());
    }
}
