//! Turns selected hard samples into training triplets: positive/negative
//! splits from score bands, teacher-constructed guidance for the three
//! objectives, and preference triplets straight from the scores.

use crate::corpus::{Document, Query};
use crate::encoder::{GuidanceTriplet, ObjectiveTag, TripletDoc, TripletOrigin};
use crate::error::{Error, Result};
use crate::scoring::SamplePoolEntry;
use crate::teacher::{Exemplar, Teacher};

fn as_triplet_doc(doc: &Document) -> TripletDoc {
    TripletDoc {
        id: Some(doc.id.clone()),
        text: doc.text.clone(),
        unit_ids: doc.unit_ids.clone(),
    }
}

fn entry_parts(entry: &SamplePoolEntry) -> Result<(&[u8], f64)> {
    match (&entry.scores, entry.ndcg) {
        (Some(scores), Some(ndcg)) => Ok((scores, ndcg)),
        _ => Err(Error::Precondition(format!(
            "entry '{}' must be scored before guidance construction",
            entry.query_id
        ))),
    }
}

/// Split the entry's documents by score band: positives scored >= 8,
/// negatives <= 3, mid-band documents excluded from both.
pub fn split_pos_neg<'d>(
    entry: &SamplePoolEntry,
    docs: &'d [Document],
) -> Result<(Vec<&'d Document>, Vec<&'d Document>)> {
    let (scores, _) = entry_parts(entry)?;
    if docs.len() != scores.len() {
        return Err(Error::Precondition(format!(
            "entry '{}': {} documents for {} scores",
            entry.query_id,
            docs.len(),
            scores.len()
        )));
    }
    let mut positives = Vec::new();
    let mut negatives = Vec::new();
    for (doc, &score) in docs.iter().zip(scores) {
        if score >= 8 {
            positives.push(doc);
        } else if score <= 3 {
            negatives.push(doc);
        }
    }
    Ok((positives, negatives))
}

/// Relevance guidance: the base `(x, D+, D-)` triplet plus, per info delta, a
/// reversed triplet whose rewritten query makes that delta's documents the
/// relevant set and everything else retrieved the negatives.
pub fn build_relevance(
    entry: &SamplePoolEntry,
    query: &Query,
    docs: &[Document],
    teacher: &dyn Teacher,
    exemplars: &[Exemplar],
) -> Result<Vec<GuidanceTriplet>> {
    let (_, ndcg) = entry_parts(entry)?;
    let (positives, negatives) = split_pos_neg(entry, docs)?;
    if positives.is_empty() || negatives.is_empty() {
        return Ok(Vec::new());
    }
    let pos_docs: Vec<Document> = positives.iter().map(|d| (*d).clone()).collect();
    let neg_docs: Vec<Document> = negatives.iter().map(|d| (*d).clone()).collect();

    let mut out = Vec::new();
    let base = GuidanceTriplet::new(
        query.text.clone(),
        Some(query.gold_unit_ids.clone()),
        positives.iter().map(|d| as_triplet_doc(d)).collect(),
        negatives.iter().map(|d| as_triplet_doc(d)).collect(),
        TripletOrigin::Guidance,
        ObjectiveTag::Relevance,
        ndcg,
    );
    base.validate()?;
    out.push(base);

    let deltas = teacher.extract_info_deltas(query, &pos_docs, &neg_docs, exemplars)?;
    if deltas.is_empty() {
        return Ok(out);
    }
    let new_queries = teacher.make_new_queries(query, docs, &deltas, exemplars)?;
    for nq in new_queries {
        let in_positive: std::collections::HashSet<&str> =
            nq.positive_ids.iter().map(String::as_str).collect();
        let reversed_pos: Vec<TripletDoc> = docs
            .iter()
            .filter(|d| in_positive.contains(d.id.as_str()))
            .map(as_triplet_doc)
            .collect();
        let reversed_neg: Vec<TripletDoc> = docs
            .iter()
            .filter(|d| !in_positive.contains(d.id.as_str()))
            .map(as_triplet_doc)
            .collect();
        let gold = if nq.gold_unit_ids.is_empty() {
            None
        } else {
            Some(nq.gold_unit_ids)
        };
        let triplet = GuidanceTriplet::new(
            nq.query,
            gold,
            reversed_pos,
            reversed_neg,
            TripletOrigin::Guidance,
            ObjectiveTag::Relevance,
            ndcg,
        );
        triplet.validate()?;
        out.push(triplet);
    }
    Ok(out)
}

/// Comprehensiveness guidance: the teacher-composed document as the positive
/// against all of `D+`. `None` when the teacher reports nothing strictly more
/// comprehensive can be built.
pub fn build_comprehensiveness(
    entry: &SamplePoolEntry,
    query: &Query,
    docs: &[Document],
    teacher: &dyn Teacher,
    exemplars: &[Exemplar],
) -> Result<Option<GuidanceTriplet>> {
    let (_, ndcg) = entry_parts(entry)?;
    let (positives, _) = split_pos_neg(entry, docs)?;
    if positives.is_empty() {
        return Ok(None);
    }
    let pos_docs: Vec<Document> = positives.iter().map(|d| (*d).clone()).collect();
    let Some(synth) = teacher.make_comprehensive_doc(query, &pos_docs, exemplars)? else {
        return Ok(None);
    };
    let triplet = GuidanceTriplet::new(
        query.text.clone(),
        Some(query.gold_unit_ids.clone()),
        vec![TripletDoc {
            id: None,
            text: synth.text,
            unit_ids: synth.unit_ids,
        }],
        positives.iter().map(|d| as_triplet_doc(d)).collect(),
        TripletOrigin::Guidance,
        ObjectiveTag::Comprehensiveness,
        ndcg,
    );
    triplet.validate()?;
    Ok(Some(triplet))
}

/// Purity guidance: per positive document, up to two triplets pitting the
/// dense rewrite above it and it above the sparse rewrite.
pub fn build_purity(
    entry: &SamplePoolEntry,
    query: &Query,
    docs: &[Document],
    teacher: &dyn Teacher,
    exemplars: &[Exemplar],
) -> Result<Vec<GuidanceTriplet>> {
    let (_, ndcg) = entry_parts(entry)?;
    let (positives, _) = split_pos_neg(entry, docs)?;
    let mut out = Vec::new();
    for positive in positives {
        let purity_docs = teacher.make_purity_docs(query, positive, exemplars)?;
        if let Some(dense) = purity_docs.dense {
            let triplet = GuidanceTriplet::new(
                query.text.clone(),
                Some(query.gold_unit_ids.clone()),
                vec![TripletDoc {
                    id: None,
                    text: dense.text,
                    unit_ids: dense.unit_ids,
                }],
                vec![as_triplet_doc(positive)],
                TripletOrigin::Guidance,
                ObjectiveTag::Purity,
                ndcg,
            );
            triplet.validate()?;
            out.push(triplet);
        }
        if let Some(sparse) = purity_docs.sparse {
            let triplet = GuidanceTriplet::new(
                query.text.clone(),
                Some(query.gold_unit_ids.clone()),
                vec![as_triplet_doc(positive)],
                vec![TripletDoc {
                    id: None,
                    text: sparse.text,
                    unit_ids: sparse.unit_ids,
                }],
                TripletOrigin::Guidance,
                ObjectiveTag::Purity,
                ndcg,
            );
            triplet.validate()?;
            out.push(triplet);
        }
    }
    Ok(out)
}

/// Preference data straight from the scores: best-scored documents against
/// worst-scored ones. Empty when all scores are equal.
pub fn build_preference(
    entry: &SamplePoolEntry,
    query: &Query,
    docs: &[Document],
) -> Result<Vec<GuidanceTriplet>> {
    let (scores, ndcg) = entry_parts(entry)?;
    if docs.len() != scores.len() {
        return Err(Error::Precondition(format!(
            "entry '{}': {} documents for {} scores",
            entry.query_id,
            docs.len(),
            scores.len()
        )));
    }
    let max = scores.iter().copied().max().unwrap_or(0);
    let min = scores.iter().copied().min().unwrap_or(0);
    if max == min {
        return Ok(Vec::new());
    }
    let positives: Vec<TripletDoc> = docs
        .iter()
        .zip(scores)
        .filter(|(_, &s)| s == max)
        .map(|(d, _)| as_triplet_doc(d))
        .collect();
    let negatives: Vec<TripletDoc> = docs
        .iter()
        .zip(scores)
        .filter(|(_, &s)| s == min)
        .map(|(d, _)| as_triplet_doc(d))
        .collect();
    let triplet = GuidanceTriplet::new(
        query.text.clone(),
        Some(query.gold_unit_ids.clone()),
        positives,
        negatives,
        TripletOrigin::Preference,
        ObjectiveTag::None,
        ndcg,
    );
    triplet.validate()?;
    Ok(vec![triplet])
}

/// All guidance for one selected entry: relevance, comprehensiveness, purity.
pub fn build_guidance(
    entry: &SamplePoolEntry,
    query: &Query,
    docs: &[Document],
    teacher: &dyn Teacher,
    exemplars: &[Exemplar],
) -> Result<Vec<GuidanceTriplet>> {
    let mut out = build_relevance(entry, query, docs, teacher, exemplars)?;
    if let Some(comp) = build_comprehensiveness(entry, query, docs, teacher, exemplars)? {
        out.push(comp);
    }
    out.extend(build_purity(entry, query, docs, teacher, exemplars)?);
    Ok(out)
}
