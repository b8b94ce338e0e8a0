//! Prompt templates and rendering.
//!
//! Templates live as text files under `templates/` with `{query}`,
//! `{documents}`-style placeholders; rendering is plain substitution.

use crate::corpus::Document;

use super::{Exemplar, InfoDelta, TeacherMessage, TeacherVerdict};

pub const SCORING: &str = include_str!("../../templates/scoring.txt");
pub const RELEVANCE_PART1: &str = include_str!("../../templates/relevance_part1.txt");
pub const RELEVANCE_PART2: &str = include_str!("../../templates/relevance_part2.txt");
pub const COMPREHENSIVENESS: &str = include_str!("../../templates/comprehensiveness.txt");
pub const PURITY: &str = include_str!("../../templates/purity.txt");

/// Render documents as `[id]` headers followed by their text.
pub fn document_block(docs: &[Document]) -> String {
    docs.iter()
        .map(|d| format!("[{}]\n{}", d.id, d.text))
        .collect::<Vec<_>>()
        .join("\n\n")
}

fn delta_block(deltas: &[InfoDelta]) -> String {
    deltas
        .iter()
        .enumerate()
        .map(|(i, d)| format!("{}. ({}) {}", i + 1, d.doc_ids.join(", "), d.summary))
        .collect::<Vec<_>>()
        .join("\n")
}

pub fn render_scoring(query: &str, docs: &[Document]) -> String {
    SCORING
        .replace("{query}", query)
        .replace("{documents}", &document_block(docs))
}

pub fn render_relevance_part1(
    query: &str,
    positives: &[Document],
    negatives: &[Document],
) -> String {
    RELEVANCE_PART1
        .replace("{query}", query)
        .replace("{positive_documents}", &document_block(positives))
        .replace("{negative_documents}", &document_block(negatives))
}

pub fn render_relevance_part2(query: &str, deltas: &[InfoDelta], docs: &[Document]) -> String {
    RELEVANCE_PART2
        .replace("{query}", query)
        .replace("{differences}", &delta_block(deltas))
        .replace("{documents}", &document_block(docs))
}

pub fn render_comprehensiveness(query: &str, positives: &[Document]) -> String {
    COMPREHENSIVENESS
        .replace("{query}", query)
        .replace("{documents}", &document_block(positives))
}

pub fn render_purity(query: &str, positive: &Document) -> String {
    PURITY
        .replace("{query}", query)
        .replace("{document}", &format!("[{}]\n{}", positive.id, positive.text))
}

/// Worked examples prepended to a conversation: each exemplar becomes a user
/// turn showing the sample and an assistant turn with the stored verdict.
pub fn exemplar_preamble(exemplars: &[Exemplar]) -> Vec<TeacherMessage> {
    let mut messages = Vec::with_capacity(exemplars.len() * 2);
    for ex in exemplars {
        messages.push(TeacherMessage::user(format!(
            "Worked example.\n\nQuery:\n{}\n\nDocuments:\n{}",
            ex.query_text,
            document_block(&ex.docs)
        )));
        let verdict_json = match &ex.verdict {
            TeacherVerdict::Scores(v) => serde_json::json!({ "scores": v.scores }).to_string(),
            other => serde_json::to_string(other).unwrap_or_default(),
        };
        messages.push(TeacherMessage::assistant(verdict_json));
    }
    messages
}

#[cfg(test)]
mod tests {
    use super::*;

    fn docs() -> Vec<Document> {
        vec![
            Document {
                id: "d1".into(),
                text: "first doc".into(),
                unit_ids: None,
            },
            Document {
                id: "d2".into(),
                text: "second doc".into(),
                unit_ids: None,
            },
        ]
    }

    #[test]
    fn placeholders_are_filled() {
        let rendered = render_scoring("my query", &docs());
        assert!(rendered.contains("my query"));
        assert!(rendered.contains("[d1]\nfirst doc"));
        assert!(rendered.contains("[d2]\nsecond doc"));
        assert!(!rendered.contains("{query}"));
        assert!(!rendered.contains("{documents}"));
    }

    #[test]
    fn all_templates_ship_with_their_placeholders() {
        assert!(SCORING.contains("{query}") && SCORING.contains("{documents}"));
        assert!(RELEVANCE_PART1.contains("{positive_documents}"));
        assert!(RELEVANCE_PART1.contains("{negative_documents}"));
        assert!(RELEVANCE_PART2.contains("{differences}"));
        assert!(COMPREHENSIVENESS.contains("{documents}"));
        assert!(PURITY.contains("{document}"));
    }

    #[test]
    fn exemplar_preamble_alternates_roles() {
        let ex = Exemplar {
            query_id: "q1".into(),
            query_text: "sample".into(),
            docs: docs(),
            verdict: TeacherVerdict::Scores(super::super::ScoresVerdict {
                scores: std::collections::BTreeMap::from([("d1".to_string(), 7u8)]),
            }),
            embedding: vec![],
            encoder_version: 0,
        };
        let pre = exemplar_preamble(&[ex]);
        assert_eq!(pre.len(), 2);
        assert_eq!(pre[0].role, super::super::Role::User);
        assert_eq!(pre[1].role, super::super::Role::Assistant);
        assert!(pre[1].content.contains("\"d1\":7"));
    }
}
