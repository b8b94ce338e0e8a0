//! Documents, queries, and information units.
//!
//! A document is modeled as a collection of atomic information units. Synthetic
//! corpora carry the unit composition of every document and the gold unit set
//! of every query, which makes the three retrieval objectives (relevance,
//! comprehensiveness, purity) exactly measurable.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type UnitId = String;
pub type DocId = String;
pub type QueryId = String;

/// One atomic fact. Documents are sets of these.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InfoUnit {
    pub id: UnitId,
    pub text: String,
}

/// A retrievable document. `unit_ids` is the ground-truth unit composition,
/// present only for synthetic corpora.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: DocId,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unit_ids: Option<Vec<UnitId>>,
}

/// A query with its gold unit set and the single unit that directly answers it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Query {
    pub id: QueryId,
    pub text: String,
    pub gold_unit_ids: Vec<UnitId>,
    pub answer_unit_id: UnitId,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    pub units: Vec<InfoUnit>,
    pub documents: Vec<Document>,
    pub queries: Vec<Query>,
}

/// Exact objective metrics of a document with respect to a query:
/// `(relevance_count, comprehensiveness, purity)`.
///
/// relevance_count = |units(d) ∩ gold(q)|, comprehensiveness = that count over
/// |gold(q)|, purity = that count over |units(d)|.
pub fn objective_metrics(doc: &Document, query: &Query) -> Result<(usize, f64, f64)> {
    let unit_ids = doc
        .unit_ids
        .as_ref()
        .ok_or_else(|| Error::UnsupportedCorpus(doc.id.clone()))?;
    let gold: HashSet<&str> = query.gold_unit_ids.iter().map(String::as_str).collect();
    let overlap = unit_ids.iter().filter(|u| gold.contains(u.as_str())).count();
    let comprehensiveness = if gold.is_empty() {
        0.0
    } else {
        overlap as f64 / gold.len() as f64
    };
    let purity = if unit_ids.is_empty() {
        0.0
    } else {
        overlap as f64 / unit_ids.len() as f64
    };
    Ok((overlap, comprehensiveness, purity))
}

/// Deterministic document rendering: unit texts joined by single spaces.
pub fn render_document(units: &[&InfoUnit]) -> String {
    units
        .iter()
        .map(|u| u.text.as_str())
        .collect::<Vec<_>>()
        .join(" ")
}

/// Generation parameters for synthetic corpora.
///
/// `units_per_doc` sizes the noise-only documents; gold-bearing documents get
/// one gold chunk plus noise according to `noise_frac`. Each query's gold
/// units are scattered across `scatter_docs` distinct documents so no single
/// document is fully comprehensive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenProfile {
    pub units_per_doc_min: usize,
    pub units_per_doc_max: usize,
    pub noise_frac_min: f64,
    pub noise_frac_max: f64,
    pub gold_per_query_min: usize,
    pub gold_per_query_max: usize,
    pub scatter_docs_min: usize,
    pub scatter_docs_max: usize,
    /// Vocabulary pool sizes; 0 lets the generator size them automatically.
    /// A small subject pool makes subjects ambient (shared across many facts)
    /// while objects stay discriminative, so term weighting is worth learning.
    pub subject_vocab: usize,
    pub relation_vocab: usize,
    pub object_vocab: usize,
}

impl Default for GenProfile {
    fn default() -> Self {
        GenProfile {
            units_per_doc_min: 4,
            units_per_doc_max: 8,
            noise_frac_min: 0.25,
            noise_frac_max: 0.5,
            gold_per_query_min: 3,
            gold_per_query_max: 6,
            scatter_docs_min: 2,
            scatter_docs_max: 3,
            subject_vocab: 0,
            relation_vocab: 0,
            object_vocab: 0,
        }
    }
}

impl GenProfile {
    pub fn validate(&self) -> Result<()> {
        let ranges = [
            ("units_per_doc", self.units_per_doc_min as f64, self.units_per_doc_max as f64),
            ("noise_frac", self.noise_frac_min, self.noise_frac_max),
            ("gold_per_query", self.gold_per_query_min as f64, self.gold_per_query_max as f64),
            ("scatter_docs", self.scatter_docs_min as f64, self.scatter_docs_max as f64),
        ];
        for (name, lo, hi) in ranges {
            if lo > hi {
                return Err(Error::Config(format!("profile {name}: min {lo} > max {hi}")));
            }
        }
        if self.noise_frac_min < 0.0 || self.noise_frac_max >= 1.0 {
            return Err(Error::Config("profile noise_frac must lie in [0, 1)".into()));
        }
        if self.units_per_doc_min < 1 {
            return Err(Error::Config("profile units_per_doc_min must be >= 1".into()));
        }
        if self.gold_per_query_min < 2 {
            return Err(Error::Config(
                "profile gold_per_query_min must be >= 2 so gold sets can scatter".into(),
            ));
        }
        if self.scatter_docs_min < 2 {
            return Err(Error::Config(
                "profile scatter_docs_min must be >= 2 so no document covers a full gold set".into(),
            ));
        }
        Ok(())
    }
}

const CONSONANTS: &[u8] = b"bcdfghklmnprstvz";
const VOWELS: &[u8] = b"aeiou";

fn random_word(rng: &mut ChaCha8Rng, syllables: usize) -> String {
    let mut w = String::new();
    for _ in 0..syllables {
        w.push(CONSONANTS[rng.random_range(0..CONSONANTS.len())] as char);
        w.push(VOWELS[rng.random_range(0..VOWELS.len())] as char);
    }
    w
}

fn seeded_vocab(rng: &mut ChaCha8Rng, count: usize, syllables: usize) -> Vec<String> {
    let mut seen = HashSet::new();
    let mut words = Vec::with_capacity(count);
    while words.len() < count {
        let w = random_word(rng, syllables);
        if seen.insert(w.clone()) {
            words.push(w);
        }
    }
    words
}

/// Generate a synthetic corpus with exact ground truth.
///
/// Deterministic for a fixed `(seed, profile)`. Every unit lives in at most one
/// document and every gold-bearing document carries exactly one query's chunk,
/// so document-level objective metrics are fully controlled by construction.
pub fn generate_synthetic(
    seed: u64,
    n_units: usize,
    n_docs: usize,
    n_queries: usize,
    profile: &GenProfile,
) -> Result<Corpus> {
    profile.validate()?;
    if n_units < 10 {
        return Err(Error::Config(format!("n_units must be >= 10, got {n_units}")));
    }
    if n_docs < 2 {
        return Err(Error::Config(format!("n_docs must be >= 2, got {n_docs}")));
    }
    if n_queries < 1 {
        return Err(Error::Config(format!("n_queries must be >= 1, got {n_queries}")));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // Vocabulary sized so distinct (subject, relation, object) triples are easy
    // to sample without long rejection loops.
    let (mut ns, mut nr, mut no) = (16usize, 8usize, 16usize);
    while ns * nr * no < 4 * n_units {
        ns += 8;
        nr += 4;
        no += 8;
    }
    if profile.subject_vocab > 0 {
        ns = profile.subject_vocab;
    }
    if profile.relation_vocab > 0 {
        nr = profile.relation_vocab;
    }
    if profile.object_vocab > 0 {
        no = profile.object_vocab;
    }
    if ns * nr * no < 2 * n_units {
        return Err(Error::Config(format!(
            "vocabulary pools {ns}x{nr}x{no} cannot seat {n_units} distinct facts; \
             raise the pool sizes or lower n_units"
        )));
    }
    let subjects = seeded_vocab(&mut rng, ns, 3);
    let relations = seeded_vocab(&mut rng, nr, 2);
    let objects = seeded_vocab(&mut rng, no, 3);

    let mut triple_set = HashSet::new();
    let mut triples = Vec::with_capacity(n_units);
    while triples.len() < n_units {
        let t = (
            rng.random_range(0..ns),
            rng.random_range(0..nr),
            rng.random_range(0..no),
        );
        if triple_set.insert(t) {
            triples.push(t);
        }
    }

    let units: Vec<InfoUnit> = triples
        .iter()
        .enumerate()
        .map(|(i, &(s, r, o))| InfoUnit {
            id: format!("u{i:05}"),
            text: format!("fact u{i:05}: {} {} {}.", subjects[s], relations[r], objects[o]),
        })
        .collect();

    // Disjoint gold sets, drawn from a shuffled unit pool.
    let mut pool: Vec<usize> = (0..n_units).collect();
    pool.shuffle(&mut rng);

    let mut gold_sizes = Vec::with_capacity(n_queries);
    let mut chunk_counts = Vec::with_capacity(n_queries);
    let mut total_gold = 0usize;
    let mut total_chunks = 0usize;
    for _ in 0..n_queries {
        let g = rng.random_range(profile.gold_per_query_min..=profile.gold_per_query_max);
        let c_hi = profile.scatter_docs_max.min(g);
        let c_lo = profile.scatter_docs_min.min(c_hi);
        let c = rng.random_range(c_lo..=c_hi);
        gold_sizes.push(g);
        chunk_counts.push(c);
        total_gold += g;
        total_chunks += c;
    }
    if total_gold > n_units {
        return Err(Error::Config(format!(
            "not enough units for disjoint gold sets: need {total_gold}, have {n_units}; \
             raise n_units or shrink gold_per_query"
        )));
    }
    if total_chunks > n_docs {
        return Err(Error::Config(format!(
            "not enough documents to scatter gold sets: need {total_chunks}, have {n_docs}; \
             raise n_docs or shrink scatter_docs"
        )));
    }

    // Per-query gold slices and their chunk split.
    let mut queries = Vec::with_capacity(n_queries);
    let mut chunks: Vec<Vec<usize>> = Vec::with_capacity(total_chunks);
    let mut cursor = 0usize;
    for qi in 0..n_queries {
        let g = gold_sizes[qi];
        let c = chunk_counts[qi];
        let slice = &pool[cursor..cursor + g];
        cursor += g;

        let answer = slice[0];
        let (as_, ar, ao) = triples[answer];
        // The direct-answer fact leads and repeats, so its tokens dominate
        // the query's lexical mass the way the answer drives teacher scores.
        let answer_phrase = format!("{} {} {}", subjects[as_], relations[ar], objects[ao]);
        let mut text = format!("{answer_phrase} {answer_phrase}");
        for &u in &slice[1..] {
            let (s, _, o) = triples[u];
            text.push_str(&format!(" {} {}", subjects[s], objects[o]));
        }
        queries.push(Query {
            id: format!("q{qi:05}"),
            text,
            gold_unit_ids: slice.iter().map(|&u| units[u].id.clone()).collect(),
            answer_unit_id: units[answer].id.clone(),
        });

        // Near-equal contiguous chunks; c <= g so each chunk is non-empty.
        let base = g / c;
        let extra = g % c;
        let mut at = 0usize;
        for k in 0..c {
            let len = base + usize::from(k < extra);
            chunks.push(slice[at..at + len].to_vec());
            at += len;
        }
    }
    let noise_pool: Vec<usize> = pool[cursor..].to_vec();

    // One chunk per document, assigned to a shuffled prefix of the doc list.
    let mut doc_order: Vec<usize> = (0..n_docs).collect();
    doc_order.shuffle(&mut rng);
    let mut doc_gold: Vec<Vec<usize>> = vec![Vec::new(); n_docs];
    for (ci, chunk) in chunks.iter().enumerate() {
        doc_gold[doc_order[ci]] = chunk.clone();
    }

    // Desired noise counts, then trim largest-over-minimum first if the pool
    // cannot cover them.
    let mut desired = vec![0usize; n_docs];
    let mut minimum = vec![0usize; n_docs];
    for d in 0..n_docs {
        if doc_gold[d].is_empty() {
            desired[d] = rng.random_range(profile.units_per_doc_min..=profile.units_per_doc_max);
            minimum[d] = 1;
        } else {
            let f = rng.random_range(profile.noise_frac_min..=profile.noise_frac_max);
            let want = (doc_gold[d].len() as f64 * f / (1.0 - f)).round() as usize;
            desired[d] = if f > 0.0 { want.max(1) } else { want };
            minimum[d] = usize::from(profile.noise_frac_min > 0.0);
        }
    }
    let min_total: usize = minimum.iter().sum();
    if min_total > noise_pool.len() {
        return Err(Error::Config(format!(
            "not enough noise units: need at least {min_total}, have {}; raise n_units",
            noise_pool.len()
        )));
    }
    let mut over: usize = desired.iter().sum::<usize>().saturating_sub(noise_pool.len());
    while over > 0 {
        let mut best = None;
        let mut best_slack = 0usize;
        for d in 0..n_docs {
            let slack = desired[d] - minimum[d];
            if slack > best_slack {
                best_slack = slack;
                best = Some(d);
            }
        }
        match best {
            Some(d) => {
                let cut = over.min(best_slack.div_ceil(2)).max(1);
                desired[d] -= cut;
                over -= cut;
            }
            None => break,
        }
    }

    let mut noise_at = 0usize;
    let mut documents = Vec::with_capacity(n_docs);
    for d in 0..n_docs {
        let take = desired[d].min(noise_pool.len() - noise_at);
        let mut members = doc_gold[d].clone();
        members.extend_from_slice(&noise_pool[noise_at..noise_at + take]);
        noise_at += take;
        members.shuffle(&mut rng);
        let refs: Vec<&InfoUnit> = members.iter().map(|&u| &units[u]).collect();
        documents.push(Document {
            id: format!("d{d:05}"),
            text: render_document(&refs),
            unit_ids: Some(members.iter().map(|&u| units[u].id.clone()).collect()),
        });
    }

    let corpus = Corpus {
        units,
        documents,
        queries,
    };
    corpus.validate()?;
    Ok(corpus)
}

impl Corpus {
    /// Check referential integrity and per-record invariants.
    pub fn validate(&self) -> Result<()> {
        let mut unit_ids = HashSet::new();
        for u in &self.units {
            if u.text.is_empty() {
                return Err(Error::Corpus(format!("unit '{}' has empty text", u.id)));
            }
            if !unit_ids.insert(u.id.as_str()) {
                return Err(Error::Corpus(format!("duplicate unit id '{}'", u.id)));
            }
        }
        let mut doc_ids = HashSet::new();
        for d in &self.documents {
            if !doc_ids.insert(d.id.as_str()) {
                return Err(Error::Corpus(format!("duplicate document id '{}'", d.id)));
            }
            if let Some(ids) = &d.unit_ids {
                let mut seen = HashSet::new();
                for uid in ids {
                    if !unit_ids.contains(uid.as_str()) {
                        return Err(Error::Corpus(format!(
                            "document '{}' references unknown unit '{uid}'",
                            d.id
                        )));
                    }
                    if !seen.insert(uid.as_str()) {
                        return Err(Error::Corpus(format!(
                            "document '{}' lists unit '{uid}' twice",
                            d.id
                        )));
                    }
                }
            }
        }
        let mut query_ids = HashSet::new();
        for q in &self.queries {
            if !query_ids.insert(q.id.as_str()) {
                return Err(Error::Corpus(format!("duplicate query id '{}'", q.id)));
            }
            if q.gold_unit_ids.is_empty() {
                return Err(Error::Corpus(format!("query '{}' has empty gold set", q.id)));
            }
            for uid in &q.gold_unit_ids {
                if !unit_ids.contains(uid.as_str()) {
                    return Err(Error::Corpus(format!(
                        "query '{}' references unknown unit '{uid}'",
                        q.id
                    )));
                }
            }
            if !q.gold_unit_ids.contains(&q.answer_unit_id) {
                return Err(Error::Corpus(format!(
                    "query '{}': answer unit '{}' not in gold set",
                    q.id, q.answer_unit_id
                )));
            }
        }
        Ok(())
    }

    pub fn unit_map(&self) -> HashMap<&str, &InfoUnit> {
        self.units.iter().map(|u| (u.id.as_str(), u)).collect()
    }

    pub fn document_map(&self) -> HashMap<&str, &Document> {
        self.documents.iter().map(|d| (d.id.as_str(), d)).collect()
    }

    /// Write the corpus as `units.jsonl`, `documents.jsonl`, `queries.jsonl`
    /// under `dir`.
    pub fn write_jsonl(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        write_jsonl_records(&dir.join("units.jsonl"), &self.units)?;
        write_jsonl_records(&dir.join("documents.jsonl"), &self.documents)?;
        write_jsonl_records(&dir.join("queries.jsonl"), &self.queries)?;
        Ok(())
    }

    /// Read a corpus written by [`Corpus::write_jsonl`] and validate it.
    pub fn read_jsonl(dir: &Path) -> Result<Corpus> {
        let corpus = Corpus {
            units: read_jsonl_records(&dir.join("units.jsonl"))?,
            documents: read_jsonl_records(&dir.join("documents.jsonl"))?,
            queries: read_jsonl_records(&dir.join("queries.jsonl"))?,
        };
        corpus.validate()?;
        Ok(corpus)
    }
}

/// Read one record per line. Parse failures name the 1-based line number.
pub fn read_jsonl_records<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = fs::File::open(path)?;
    let reader = BufReader::new(file);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: i + 1,
            msg: e.to_string(),
        })?;
        out.push(record);
    }
    Ok(out)
}

/// Write records one JSON object per line, via a temp file and rename.
pub fn write_jsonl_records<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let tmp = path.with_extension("jsonl.tmp");
    {
        let mut file = fs::File::create(&tmp)?;
        for item in items {
            serde_json::to_writer(&mut file, item)?;
            file.write_all(b"\n")?;
        }
        file.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}
