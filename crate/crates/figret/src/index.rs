//! Exact top-k retrieval over embedded documents.
//!
//! A deliberate exact scan: at desk scale determinism matters more than ANN
//! speed, and tests need a total order.

use crate::corpus::{Corpus, DocId};
use crate::encoder::EncoderModel;
use crate::error::{Error, Result};

/// Embeddings of every corpus document, pinned to the encoder version that
/// produced them. Queries against a newer model are rejected as stale.
#[derive(Debug, Clone)]
pub struct RetrievalIndex {
    doc_ids: Vec<DocId>,
    embeddings: Vec<Vec<f64>>,
    model_version: u64,
}

impl RetrievalIndex {
    /// Embed every document in corpus order.
    pub fn build(model: &EncoderModel, corpus: &Corpus) -> Result<RetrievalIndex> {
        if corpus.documents.is_empty() {
            return Err(Error::Precondition("cannot index an empty corpus".into()));
        }
        let mut doc_ids = Vec::with_capacity(corpus.documents.len());
        let mut embeddings = Vec::with_capacity(corpus.documents.len());
        for doc in &corpus.documents {
            doc_ids.push(doc.id.clone());
            embeddings.push(model.embed(&doc.text)?);
        }
        Ok(RetrievalIndex {
            doc_ids,
            embeddings,
            model_version: model.version(),
        })
    }

    pub fn len(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.doc_ids.is_empty()
    }

    pub fn model_version(&self) -> u64 {
        self.model_version
    }

    pub fn embedding_of(&self, row: usize) -> &[f64] {
        &self.embeddings[row]
    }

    pub fn doc_id_of(&self, row: usize) -> &str {
        &self.doc_ids[row]
    }

    /// Top-k documents for a query, scores non-increasing, ties broken by
    /// ascending document id.
    pub fn retrieve(
        &self,
        model: &EncoderModel,
        query_text: &str,
        k: usize,
    ) -> Result<Vec<(DocId, f64)>> {
        if k == 0 {
            return Err(Error::Precondition("retrieve requires k >= 1".into()));
        }
        if self.model_version != model.version() {
            return Err(Error::StaleIndex {
                index_version: self.model_version,
                model_version: model.version(),
            });
        }
        let q = model.embed(query_text)?;
        let mut scored: Vec<(usize, f64)> = self
            .embeddings
            .iter()
            .enumerate()
            .map(|(i, d)| {
                let s = q.iter().zip(d).map(|(a, b)| a * b).sum::<f64>();
                (i, s)
            })
            .collect();
        scored.sort_by(|a, b| {
            b.1.partial_cmp(&a.1)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then_with(|| self.doc_ids[a.0].cmp(&self.doc_ids[b.0]))
        });
        scored.truncate(k.min(self.doc_ids.len()));
        Ok(scored
            .into_iter()
            .map(|(i, s)| (self.doc_ids[i].clone(), s))
            .collect())
    }
}
