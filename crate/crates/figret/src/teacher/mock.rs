//! Deterministic teacher backed by synthetic-corpus ground truth.
//!
//! Implements the scoring bands and construction contracts exactly: a pure
//! function of (corpus ground truth, inputs, config), so every pipeline test
//! can run against it without network access.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::corpus::{objective_metrics, Corpus, Document, Query, UnitId};
use crate::error::{Error, Result};

use super::{
    Exemplar, InfoDelta, NewQuery, PurityDocs, ScoresVerdict, SynthDoc, Teacher,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MockTeacherConfig {
    /// Extra gold units the teacher contributes from outside the submitted
    /// documents when composing a comprehensive document.
    pub extra_units: usize,
    /// Fraction of noise units removed for the dense rewrite.
    pub rho_dense: f64,
    /// Fraction of gold units removed for the sparse rewrite.
    pub rho_sparse: f64,
    /// Single-linkage threshold for grouping content-similar negatives.
    pub jaccard_threshold: f64,
}

impl Default for MockTeacherConfig {
    fn default() -> Self {
        MockTeacherConfig {
            extra_units: 2,
            rho_dense: 1.0,
            rho_sparse: 1.0,
            jaccard_threshold: 0.5,
        }
    }
}

impl MockTeacherConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("rho_dense", self.rho_dense),
            ("rho_sparse", self.rho_sparse),
            ("jaccard_threshold", self.jaccard_threshold),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{name} must lie in [0, 1], got {v}")));
            }
        }
        Ok(())
    }
}

pub struct MockTeacher {
    unit_texts: HashMap<UnitId, String>,
    config: MockTeacherConfig,
}

impl MockTeacher {
    pub fn new(corpus: &Corpus, config: MockTeacherConfig) -> Result<Self> {
        config.validate()?;
        Ok(MockTeacher {
            unit_texts: corpus
                .units
                .iter()
                .map(|u| (u.id.clone(), u.text.clone()))
                .collect(),
            config,
        })
    }

    fn units_of<'d>(&self, doc: &'d Document) -> Result<&'d [UnitId]> {
        doc.unit_ids
            .as_deref()
            .ok_or_else(|| Error::UnsupportedCorpus(doc.id.clone()))
    }

    fn render_units(&self, unit_ids: &[UnitId]) -> Result<String> {
        let mut parts = Vec::with_capacity(unit_ids.len());
        for id in unit_ids {
            let text = self
                .unit_texts
                .get(id)
                .ok_or_else(|| Error::Corpus(format!("unknown unit id '{id}'")))?;
            parts.push(text.as_str());
        }
        Ok(parts.join(" "))
    }
}

fn jaccard(a: &HashSet<&str>, b: &HashSet<&str>) -> f64 {
    let inter = a.intersection(b).count();
    let union = a.len() + b.len() - inter;
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

/// Round half away from zero, matching the scoring rubric's grading.
fn band_score(lo: u8, comprehensiveness: f64, purity: f64) -> u8 {
    lo + (2.0 * (0.5 * comprehensiveness + 0.5 * purity)).round() as u8
}

impl Teacher for MockTeacher {
    fn score_documents(
        &self,
        query: &Query,
        docs: &[Document],
        _exemplars: &[Exemplar],
    ) -> Result<ScoresVerdict> {
        if docs.is_empty() {
            return Err(Error::Precondition("no documents to score".into()));
        }
        let mut scores = BTreeMap::new();
        for doc in docs {
            let units = self.units_of(doc)?;
            let (overlap, comp, purity) = objective_metrics(doc, query)?;
            let lo = if units.contains(&query.answer_unit_id) {
                8
            } else if overlap >= 1 {
                4
            } else {
                0
            };
            scores.insert(doc.id.clone(), band_score(lo, comp, purity));
        }
        let verdict = ScoresVerdict { scores };
        verdict.validate_against(&docs.iter().map(|d| d.id.clone()).collect::<Vec<_>>())?;
        Ok(verdict)
    }

    fn extract_info_deltas(
        &self,
        _query: &Query,
        positives: &[Document],
        negatives: &[Document],
        _exemplars: &[Exemplar],
    ) -> Result<Vec<InfoDelta>> {
        if positives.is_empty() || negatives.is_empty() {
            return Err(Error::Precondition(
                "info deltas need non-empty positives and negatives".into(),
            ));
        }
        let neg_units: Vec<HashSet<&str>> = negatives
            .iter()
            .map(|d| Ok(self.units_of(d)?.iter().map(String::as_str).collect()))
            .collect::<Result<_>>()?;
        let mut pos_units: HashSet<&str> = HashSet::new();
        for d in positives {
            pos_units.extend(self.units_of(d)?.iter().map(String::as_str));
        }

        // Single-linkage grouping of content-similar negatives.
        let n = negatives.len();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(parent: &mut Vec<usize>, i: usize) -> usize {
            if parent[i] != i {
                let root = find(parent, parent[i]);
                parent[i] = root;
            }
            parent[i]
        }
        for i in 0..n {
            for j in i + 1..n {
                if jaccard(&neg_units[i], &neg_units[j]) >= self.config.jaccard_threshold {
                    let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                    if ri != rj {
                        parent[rj.max(ri)] = rj.min(ri);
                    }
                }
            }
        }
        let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for i in 0..n {
            let root = find(&mut parent, i);
            groups.entry(root).or_default().push(i);
        }

        let mut deltas = Vec::new();
        for (_, members) in groups {
            let mut delta_units: BTreeSet<&str> = BTreeSet::new();
            for &m in &members {
                delta_units.extend(neg_units[m].difference(&pos_units).copied());
            }
            if delta_units.is_empty() {
                continue;
            }
            let unit_ids: Vec<UnitId> = delta_units.iter().map(|s| s.to_string()).collect();
            deltas.push(InfoDelta {
                summary: self.render_units(&unit_ids)?,
                doc_ids: members.iter().map(|&m| negatives[m].id.clone()).collect(),
                unit_ids,
            });
        }
        Ok(deltas)
    }

    fn make_new_queries(
        &self,
        query: &Query,
        submitted: &[Document],
        deltas: &[InfoDelta],
        _exemplars: &[Exemplar],
    ) -> Result<Vec<NewQuery>> {
        let submitted_ids: Vec<String> = submitted.iter().map(|d| d.id.clone()).collect();
        let mut out = Vec::with_capacity(deltas.len());
        for delta in deltas {
            let positive: HashSet<&str> = delta.doc_ids.iter().map(String::as_str).collect();
            let negative_ids: Vec<String> = submitted_ids
                .iter()
                .filter(|id| !positive.contains(id.as_str()))
                .cloned()
                .collect();
            let text = self.render_units(&delta.unit_ids)?;
            let nq = NewQuery {
                query: text,
                positive_ids: delta.doc_ids.clone(),
                negative_ids,
                gold_unit_ids: delta.unit_ids.clone(),
            };
            nq.validate_partition(&submitted_ids)?;
            if nq.query == query.text {
                return Err(Error::TeacherProtocol(
                    "rewritten query collides with the original".into(),
                ));
            }
            out.push(nq);
        }
        Ok(out)
    }

    fn make_comprehensive_doc(
        &self,
        query: &Query,
        positives: &[Document],
        _exemplars: &[Exemplar],
    ) -> Result<Option<SynthDoc>> {
        if positives.is_empty() {
            return Err(Error::Precondition(
                "comprehensive doc needs at least one positive".into(),
            ));
        }
        let gold: BTreeSet<&str> = query.gold_unit_ids.iter().map(String::as_str).collect();
        let mut submitted_units: HashSet<&str> = HashSet::new();
        let mut per_doc_overlap = Vec::with_capacity(positives.len());
        for d in positives {
            let units = self.units_of(d)?;
            per_doc_overlap.push(units.iter().filter(|u| gold.contains(u.as_str())).count());
            submitted_units.extend(units.iter().map(String::as_str));
        }
        let covered: BTreeSet<&str> = gold
            .iter()
            .copied()
            .filter(|g| submitted_units.contains(g))
            .collect();
        let extras: Vec<&str> = gold
            .iter()
            .copied()
            .filter(|g| !submitted_units.contains(g))
            .take(self.config.extra_units)
            .collect();
        let mut unit_ids: Vec<UnitId> = covered.iter().map(|s| s.to_string()).collect();
        unit_ids.extend(extras.iter().map(|s| s.to_string()));
        unit_ids.sort();

        // Only worth emitting when it strictly beats some positive on
        // comprehensiveness; otherwise the contrast teaches nothing.
        let comp_count = unit_ids.len();
        if comp_count == 0 || per_doc_overlap.iter().all(|&c| c >= comp_count) {
            return Ok(None);
        }
        Ok(Some(SynthDoc {
            text: self.render_units(&unit_ids)?,
            unit_ids: Some(unit_ids),
        }))
    }

    fn make_purity_docs(
        &self,
        query: &Query,
        positive: &Document,
        _exemplars: &[Exemplar],
    ) -> Result<PurityDocs> {
        let units = self.units_of(positive)?;
        let gold: HashSet<&str> = query.gold_unit_ids.iter().map(String::as_str).collect();
        let mut gold_in: Vec<&UnitId> = units.iter().filter(|u| gold.contains(u.as_str())).collect();
        let mut noise_in: Vec<&UnitId> =
            units.iter().filter(|u| !gold.contains(u.as_str())).collect();
        gold_in.sort();
        noise_in.sort();

        // A side is constructible only when removal actually changes purity:
        // the document must mix gold and noise and the rounded removal count
        // must be positive.
        let build = |removed: &HashSet<&str>| -> Result<SynthDoc> {
            let kept: Vec<UnitId> = units
                .iter()
                .filter(|u| !removed.contains(u.as_str()))
                .cloned()
                .collect();
            Ok(SynthDoc {
                text: self.render_units(&kept)?,
                unit_ids: Some(kept),
            })
        };
        let mixed = !gold_in.is_empty() && !noise_in.is_empty();

        let k_dense = (self.config.rho_dense * noise_in.len() as f64).round() as usize;
        let dense = if mixed && k_dense >= 1 {
            let removed: HashSet<&str> = noise_in[..k_dense].iter().map(|u| u.as_str()).collect();
            Some(build(&removed)?)
        } else {
            None
        };

        let k_sparse = (self.config.rho_sparse * gold_in.len() as f64).round() as usize;
        let sparse = if mixed && k_sparse >= 1 {
            let removed: HashSet<&str> = gold_in[..k_sparse].iter().map(|u| u.as_str()).collect();
            Some(build(&removed)?)
        } else {
            None
        };

        Ok(PurityDocs { dense, sparse })
    }
}
