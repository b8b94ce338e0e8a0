//! The trainable student retriever: a linear embedding over hashed lexical
//! features, pairwise contrastive loss with exact analytic gradients, and a
//! plain SGD step.

mod checkpoint;
mod features;

pub use features::{featurize, FeatureVector};

use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{DocId, UnitId};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SimilarityKind {
    Dot,
    Cosine,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncoderConfig {
    pub feature_dim: usize,
    pub embed_dim: usize,
    pub similarity: SimilarityKind,
    /// Loss temperature. 0.05 suits cosine similarities; use 1.0 for dot.
    pub tau: f64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            feature_dim: 1 << 15,
            embed_dim: 128,
            similarity: SimilarityKind::Cosine,
            tau: 0.05,
        }
    }
}

impl EncoderConfig {
    pub fn dot(feature_dim: usize, embed_dim: usize) -> Self {
        EncoderConfig {
            feature_dim,
            embed_dim,
            similarity: SimilarityKind::Dot,
            tau: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.feature_dim == 0 || self.feature_dim > u32::MAX as usize {
            return Err(Error::Config(format!(
                "feature_dim must be in 1..=u32::MAX, got {}",
                self.feature_dim
            )));
        }
        if self.embed_dim == 0 {
            return Err(Error::Config("embed_dim must be >= 1".into()));
        }
        if self.tau.is_nan() || self.tau <= 0.0 {
            return Err(Error::Config(format!("tau must be > 0, got {}", self.tau)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TripletOrigin {
    Guidance,
    Preference,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObjectiveTag {
    Relevance,
    Comprehensiveness,
    Purity,
    None,
}

/// One side of a training triplet. Constructed documents have no corpus id;
/// `unit_ids` is ground truth carried along on synthetic corpora.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripletDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<DocId>,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unit_ids: Option<Vec<UnitId>>,
}

impl TripletDoc {
    fn identity(&self) -> &str {
        self.id.as_deref().unwrap_or(&self.text)
    }
}

/// A training example: query, positive documents, negative documents, plus the
/// curriculum coordinates (origin label `y`, difficulty `s`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuidanceTriplet {
    pub query: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_unit_ids: Option<Vec<UnitId>>,
    pub positives: Vec<TripletDoc>,
    pub negatives: Vec<TripletDoc>,
    pub origin: TripletOrigin,
    pub objective: ObjectiveTag,
    /// Difficulty: the parent sample's NDCG, in [0, 1].
    pub s: f64,
    /// 1 for guidance examples, 0 for preference data.
    pub y: u8,
}

impl GuidanceTriplet {
    pub fn new(
        query: String,
        gold_unit_ids: Option<Vec<UnitId>>,
        positives: Vec<TripletDoc>,
        negatives: Vec<TripletDoc>,
        origin: TripletOrigin,
        objective: ObjectiveTag,
        s: f64,
    ) -> Self {
        let y = match origin {
            TripletOrigin::Guidance => 1,
            TripletOrigin::Preference => 0,
        };
        GuidanceTriplet {
            query,
            gold_unit_ids,
            positives,
            negatives,
            origin,
            objective,
            s,
            y,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.positives.is_empty() || self.negatives.is_empty() {
            return Err(Error::Precondition(format!(
                "triplet for '{}' has an empty side",
                self.query
            )));
        }
        let pos: std::collections::HashSet<&str> =
            self.positives.iter().map(TripletDoc::identity).collect();
        if self.negatives.iter().any(|d| pos.contains(d.identity())) {
            return Err(Error::Precondition(format!(
                "triplet for '{}' has overlapping positive and negative documents",
                self.query
            )));
        }
        if !(0.0..=1.0).contains(&self.s) {
            return Err(Error::Precondition(format!(
                "triplet difficulty {} outside [0, 1]",
                self.s
            )));
        }
        let expect_y = match self.origin {
            TripletOrigin::Guidance => 1,
            TripletOrigin::Preference => 0,
        };
        if self.y != expect_y {
            return Err(Error::Precondition(format!(
                "triplet label y={} inconsistent with origin",
                self.y
            )));
        }
        Ok(())
    }
}

/// Gradient of the loss with respect to the embedding matrix, stored by the
/// feature columns it touches. Untouched columns are exactly zero.
#[derive(Debug, Clone)]
pub struct SparseGradient {
    embed_dim: usize,
    cols: BTreeMap<u32, Vec<f64>>,
}

impl SparseGradient {
    fn new(embed_dim: usize) -> Self {
        SparseGradient {
            embed_dim,
            cols: BTreeMap::new(),
        }
    }

    fn axpy_col(&mut self, col: u32, coeff: f64, vec: &[f64]) {
        if coeff == 0.0 {
            return;
        }
        let slot = self
            .cols
            .entry(col)
            .or_insert_with(|| vec![0.0; self.embed_dim]);
        for (s, v) in slot.iter_mut().zip(vec) {
            *s += coeff * v;
        }
    }

    fn accumulate(&mut self, other: &SparseGradient) {
        for (&col, vec) in &other.cols {
            self.axpy_col(col, 1.0, vec);
        }
    }

    /// dL/dE at (row, col); zero for untouched columns.
    pub fn entry(&self, row: usize, col: u32) -> f64 {
        self.cols.get(&col).map_or(0.0, |v| v[row])
    }

    pub fn touched_columns(&self) -> impl Iterator<Item = u32> + '_ {
        self.cols.keys().copied()
    }

    pub fn is_empty(&self) -> bool {
        self.cols.is_empty()
    }
}

/// The student model: an `embed_dim x feature_dim` real matrix. Stored
/// feature-major so embedding and gradient updates touch contiguous memory.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderModel {
    config: EncoderConfig,
    cols: Vec<f64>,
    version: u64,
    seed: u64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn l2(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

/// Numerically stable -log sigma(z) and sigma(-z).
fn logistic_loss(z: f64) -> (f64, f64) {
    if z >= 0.0 {
        let e = (-z).exp();
        (e.ln_1p(), e / (1.0 + e))
    } else {
        let e = z.exp();
        (-z + e.ln_1p(), 1.0 / (1.0 + e))
    }
}

/// Pairwise logistic loss on a similarity margin: `-log sigma((s_pos - s_neg) / tau)`.
/// Returns `(loss, dloss_dz)` where `z` is the scaled margin.
pub fn pairwise_loss(sim_pos: f64, sim_neg: f64, tau: f64) -> Result<(f64, f64)> {
    if tau.is_nan() || tau <= 0.0 {
        return Err(Error::Config(format!("tau must be > 0, got {tau}")));
    }
    let z = (sim_pos - sim_neg) / tau;
    let (loss, sigma_neg) = logistic_loss(z);
    Ok((loss, -sigma_neg))
}

/// Dot product of two equal-length embeddings.
pub fn similarity(x: &[f64], d: &[f64]) -> Result<f64> {
    if x.len() != d.len() {
        return Err(Error::DimensionMismatch(format!(
            "similarity between vectors of length {} and {}",
            x.len(),
            d.len()
        )));
    }
    Ok(dot(x, d))
}

impl EncoderModel {
    /// Fresh model with uniform random weights of variance `1/embed_dim`, so
    /// the initial embedding acts as a random projection of the features.
    pub fn new(config: EncoderConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = (3.0 / config.embed_dim as f64).sqrt();
        let cols = (0..config.feature_dim * config.embed_dim)
            .map(|_| rng.random_range(-scale..=scale))
            .collect();
        Ok(EncoderModel {
            config,
            cols,
            version: 0,
            seed,
        })
    }

    /// All-zero model. Useful for tests; it cannot learn (zero gradients).
    pub fn zeros(config: EncoderConfig) -> Result<Self> {
        config.validate()?;
        let cols = vec![0.0; config.feature_dim * config.embed_dim];
        Ok(EncoderModel {
            config,
            cols,
            version: 0,
            seed: 0,
        })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn weight(&self, row: usize, col: usize) -> f64 {
        self.cols[col * self.config.embed_dim + row]
    }

    pub fn set_weight(&mut self, row: usize, col: usize, value: f64) {
        self.cols[col * self.config.embed_dim + row] = value;
    }

    /// Scale every weight; keeps rankings intact in cosine mode.
    pub fn scale_weights(&mut self, factor: f64) {
        for w in &mut self.cols {
            *w *= factor;
        }
    }

    pub fn featurize(&self, text: &str) -> FeatureVector {
        featurize(text, self.config.feature_dim as u32)
    }

    /// Embed a feature vector: `E * f`, L2-normalized in cosine mode.
    pub fn embed_features(&self, fv: &FeatureVector) -> Result<Vec<f64>> {
        let m = self.config.embed_dim;
        let mut out = vec![0.0; m];
        for &(j, w) in fv.entries() {
            let col = &self.cols[j as usize * m..(j as usize + 1) * m];
            for (o, c) in out.iter_mut().zip(col) {
                *o += w * c;
            }
        }
        if self.config.similarity == SimilarityKind::Cosine {
            let norm = l2(&out);
            if norm > 0.0 {
                for o in &mut out {
                    *o /= norm;
                }
            }
        }
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(
                "embedding produced non-finite values; model is corrupted".into(),
            ));
        }
        Ok(out)
    }

    pub fn embed(&self, text: &str) -> Result<Vec<f64>> {
        self.embed_features(&self.featurize(text))
    }

    /// Loss and exact gradient for one `(query, positive, negative)` text triplet.
    pub fn triplet_loss(
        &self,
        query: &str,
        positive: &str,
        negative: &str,
    ) -> Result<(f64, SparseGradient)> {
        let fx = self.featurize(query);
        let fp = self.featurize(positive);
        let fneg = self.featurize(negative);
        let m = self.config.embed_dim;
        let tau = self.config.tau;

        let raw = |fv: &FeatureVector| -> Vec<f64> {
            let mut out = vec![0.0; m];
            for &(j, w) in fv.entries() {
                let col = &self.cols[j as usize * m..(j as usize + 1) * m];
                for (o, c) in out.iter_mut().zip(col) {
                    *o += w * c;
                }
            }
            out
        };
        let u = raw(&fx);
        let v = raw(&fp);
        let w = raw(&fneg);

        let mut grad = SparseGradient::new(m);
        let (loss, dz);
        match self.config.similarity {
            SimilarityKind::Dot => {
                let (l, d) = pairwise_loss(dot(&u, &v), dot(&u, &w), tau)?;
                loss = l;
                dz = d;
                // d(s+ - s-)/dE = (v - w) fx^T + u (fp - fn)^T
                let vw: Vec<f64> = v.iter().zip(&w).map(|(a, b)| a - b).collect();
                let coeff = dz / tau;
                for &(j, wt) in fx.entries() {
                    grad.axpy_col(j, coeff * wt, &vw);
                }
                for &(j, wt) in fp.entries() {
                    grad.axpy_col(j, coeff * wt, &u);
                }
                for &(j, wt) in fneg.entries() {
                    grad.axpy_col(j, -coeff * wt, &u);
                }
            }
            SimilarityKind::Cosine => {
                let (nu, nv, nw) = (l2(&u), l2(&v), l2(&w));
                let hat = |x: &[f64], n: f64| -> Vec<f64> {
                    if n > 0.0 {
                        x.iter().map(|a| a / n).collect()
                    } else {
                        vec![0.0; m]
                    }
                };
                let (hu, hv, hw) = (hat(&u, nu), hat(&v, nv), hat(&w, nw));
                let sp = dot(&hu, &hv);
                let sn = dot(&hu, &hw);
                let (l, d) = pairwise_loss(sp, sn, tau)?;
                loss = l;
                dz = d;
                let coeff = dz / tau;
                // d(s+ - s-)/du = ((hv - sp*hu) - (hw - sn*hu)) / |u|, and
                // analogously for v and w; zero-norm vectors contribute nothing.
                if nu > 0.0 {
                    let gu: Vec<f64> = (0..m)
                        .map(|a| ((hv[a] - sp * hu[a]) - (hw[a] - sn * hu[a])) / nu)
                        .collect();
                    for &(j, wt) in fx.entries() {
                        grad.axpy_col(j, coeff * wt, &gu);
                    }
                }
                if nv > 0.0 {
                    let gv: Vec<f64> = (0..m).map(|a| (hu[a] - sp * hv[a]) / nv).collect();
                    for &(j, wt) in fp.entries() {
                        grad.axpy_col(j, coeff * wt, &gv);
                    }
                }
                if nw > 0.0 {
                    let gw: Vec<f64> = (0..m).map(|a| -(hu[a] - sn * hw[a]) / nw).collect();
                    for &(j, wt) in fneg.entries() {
                        grad.axpy_col(j, coeff * wt, &gw);
                    }
                }
            }
        }
        if !loss.is_finite() {
            return Err(Error::Numeric(format!(
                "non-finite loss for query '{query}'"
            )));
        }
        Ok((loss, grad))
    }

    /// One SGD step over a batch. For each triplet one positive and one
    /// negative document are drawn uniformly with the given seed, gradients
    /// are averaged in batch order, and the version counter is bumped.
    /// Returns the mean loss.
    pub fn train_step(
        &mut self,
        batch: &[&GuidanceTriplet],
        learning_rate: f64,
        seed: u64,
    ) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::Precondition("train_step on an empty batch".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut total = SparseGradient::new(self.config.embed_dim);
        let mut loss_sum = 0.0;
        for (i, triplet) in batch.iter().enumerate() {
            triplet.validate()?;
            let pos = &triplet.positives[rng.random_range(0..triplet.positives.len())];
            let neg = &triplet.negatives[rng.random_range(0..triplet.negatives.len())];
            let (loss, grad) = self
                .triplet_loss(&triplet.query, &pos.text, &neg.text)
                .map_err(|e| match e {
                    Error::Numeric(msg) => Error::Numeric(format!(
                        "aborting step at batch item {i} (query '{}'): {msg}",
                        triplet.query
                    )),
                    other => other,
                })?;
            loss_sum += loss;
            total.accumulate(&grad);
        }
        let n = batch.len() as f64;
        let step = learning_rate / n;
        let m = self.config.embed_dim;
        for (&col, vec) in &total.cols {
            let base = col as usize * m;
            for (a, g) in vec.iter().enumerate() {
                self.cols[base + a] -= step * g;
            }
        }
        self.version += 1;
        Ok(loss_sum / n)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        checkpoint::save(self, path)
    }

    pub fn load(path: &Path) -> Result<EncoderModel> {
        checkpoint::load(path)
    }

    pub(crate) fn raw_parts(&self) -> (&EncoderConfig, &[f64], u64, u64) {
        (&self.config, &self.cols, self.version, self.seed)
    }

    pub(crate) fn from_raw_parts(
        config: EncoderConfig,
        cols: Vec<f64>,
        version: u64,
        seed: u64,
    ) -> Result<Self> {
        config.validate()?;
        if cols.len() != config.feature_dim * config.embed_dim {
            return Err(Error::Config(format!(
                "weight count {} does not match {}x{}",
                cols.len(),
                config.embed_dim,
                config.feature_dim
            )));
        }
        Ok(EncoderModel {
            config,
            cols,
            version,
            seed,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config(kind: SimilarityKind) -> EncoderConfig {
        EncoderConfig {
            feature_dim: 64,
            embed_dim: 8,
            similarity: kind,
            tau: if kind == SimilarityKind::Dot { 1.0 } else { 0.05 },
        }
    }

    fn triplet(query: &str, pos: &str, neg: &str) -> GuidanceTriplet {
        GuidanceTriplet::new(
            query.into(),
            None,
            vec![TripletDoc {
                id: None,
                text: pos.into(),
                unit_ids: None,
            }],
            vec![TripletDoc {
                id: None,
                text: neg.into(),
                unit_ids: None,
            }],
            TripletOrigin::Guidance,
            ObjectiveTag::Relevance,
            0.5,
        )
    }

    #[test]
    fn zero_model_embeds_to_zero() {
        let model = EncoderModel::zeros(small_config(SimilarityKind::Dot)).unwrap();
        let e = model.embed("some text").unwrap();
        assert!(e.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn cosine_embeddings_have_unit_norm() {
        let model = EncoderModel::new(small_config(SimilarityKind::Cosine), 3).unwrap();
        let e = model.embed("alpha beta gamma").unwrap();
        let norm = e.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-12);
    }

    #[test]
    fn dot_mode_is_linear_in_weights() {
        let model = EncoderModel::new(small_config(SimilarityKind::Dot), 3).unwrap();
        let mut doubled = model.clone();
        doubled.scale_weights(2.0);
        let a = model.embed("alpha beta").unwrap();
        let b = doubled.embed("alpha beta").unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(2.0 * x, *y);
        }
    }

    #[test]
    fn cosine_mode_is_scale_invariant() {
        let model = EncoderModel::new(small_config(SimilarityKind::Cosine), 5).unwrap();
        let mut scaled = model.clone();
        scaled.scale_weights(2.0);
        let a = model.embed("alpha beta gamma").unwrap();
        let b = scaled.embed("alpha beta gamma").unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn similarity_matches_naive_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100 {
            let n = rng.random_range(1..32);
            let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let d: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mut oracle = 0.0;
            for i in 0..n {
                oracle += x[i] * d[i];
            }
            assert!((similarity(&x, &d).unwrap() - oracle).abs() < 1e-12);
        }
    }

    #[test]
    fn similarity_of_vector_with_itself_is_squared_norm() {
        let v = vec![1.0, -2.0, 3.0];
        assert_eq!(similarity(&v, &v).unwrap(), 14.0);
        assert_eq!(similarity(&[1.0, 0.0], &[0.0, 5.0]).unwrap(), 0.0);
    }

    #[test]
    fn similarity_rejects_length_mismatch() {
        assert!(matches!(
            similarity(&[1.0], &[1.0, 2.0]),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn equal_similarities_give_ln2_loss() {
        let (loss, _) = pairwise_loss(0.3, 0.3, 1.0).unwrap();
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn loss_vanishes_monotonically_with_margin() {
        let mut prev = f64::INFINITY;
        for k in 0..40 {
            let margin = k as f64;
            let (loss, _) = pairwise_loss(margin, 0.0, 1.0).unwrap();
            assert!(loss < prev);
            prev = loss;
        }
        assert!(prev < 1e-15);
    }

    #[test]
    fn loss_depends_only_on_the_margin() {
        for c in [-10.0, -1.0, 0.0, 2.5, 1000.0] {
            let (a, _) = pairwise_loss(0.7, 0.2, 0.5).unwrap();
            // the shifted sims round, so compare to within a few ulps
            let (b, _) = pairwise_loss(0.7 + c, 0.2 + c, 0.5).unwrap();
            assert!((a - b).abs() < 1e-9, "c={c}: {a} vs {b}");
        }
    }

    #[test]
    fn nonpositive_tau_is_a_config_error() {
        assert!(matches!(pairwise_loss(1.0, 0.0, 0.0), Err(Error::Config(_))));
        assert!(matches!(pairwise_loss(1.0, 0.0, -1.0), Err(Error::Config(_))));
    }

    fn finite_difference_check(kind: SimilarityKind, seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let config = small_config(kind);
        let mut model = EncoderModel::new(config.clone(), seed).unwrap();
        let words = ["ax", "by", "cz", "dw", "ev", "fu", "gt", "hs"];
        let text = |rng: &mut ChaCha8Rng| -> String {
            let n = rng.random_range(1..5);
            (0..n)
                .map(|_| words[rng.random_range(0..words.len())])
                .collect::<Vec<_>>()
                .join(" ")
        };
        let (q, p, n) = (text(&mut rng), text(&mut rng), text(&mut rng));
        let (_, grad) = model.triplet_loss(&q, &p, &n).unwrap();
        let h = 1e-5;
        let mut max_rel = 0.0f64;
        for col in 0..config.feature_dim {
            for row in 0..config.embed_dim {
                let orig = model.weight(row, col);
                model.set_weight(row, col, orig + h);
                let (lp, _) = model.triplet_loss(&q, &p, &n).unwrap();
                model.set_weight(row, col, orig - h);
                let (lm, _) = model.triplet_loss(&q, &p, &n).unwrap();
                model.set_weight(row, col, orig);
                let fd = (lp - lm) / (2.0 * h);
                let an = grad.entry(row, col as u32);
                let denom = an.abs().max(fd.abs()).max(1e-6);
                max_rel = max_rel.max((an - fd).abs() / denom);
            }
        }
        max_rel
    }

    #[test]
    fn gradient_matches_finite_differences_dot() {
        for seed in 0..5 {
            let err = finite_difference_check(SimilarityKind::Dot, 100 + seed);
            assert!(err < 1e-4, "dot gradient error {err}");
        }
    }

    #[test]
    fn gradient_matches_finite_differences_cosine() {
        for seed in 0..5 {
            let err = finite_difference_check(SimilarityKind::Cosine, 200 + seed);
            assert!(err < 1e-4, "cosine gradient error {err}");
        }
    }

    #[test]
    fn zero_learning_rate_leaves_weights_unchanged() {
        let mut model = EncoderModel::new(small_config(SimilarityKind::Cosine), 1).unwrap();
        let before = model.clone();
        let t = triplet("ax by", "ax cz", "dw ev");
        let loss = model.train_step(&[&t], 0.0, 7).unwrap();
        assert!(loss > 0.0);
        assert_eq!(before.cols, model.cols);
        assert_eq!(model.version(), 1);
    }

    #[test]
    fn separable_triplet_loss_drops_below_threshold() {
        let mut model = EncoderModel::new(small_config(SimilarityKind::Dot), 11).unwrap();
        let t = triplet("ax by", "ax by cz", "fu gt hs");
        let mut prev = f64::INFINITY;
        let mut last = f64::INFINITY;
        for step in 0..200 {
            let loss = model.train_step(&[&t], 0.05, step).unwrap();
            assert!(loss <= prev + 1e-9, "loss increased at step {step}");
            prev = loss;
            last = loss;
        }
        assert!(last < 0.05, "final loss {last}");
    }

    #[test]
    fn same_seed_gives_bitwise_identical_weights() {
        let t1 = triplet("ax by", "ax cz", "dw ev");
        let t2 = triplet("fu gt", "fu hs", "ax by");
        let run = || {
            let mut model = EncoderModel::new(small_config(SimilarityKind::Cosine), 42).unwrap();
            for step in 0..20 {
                model.train_step(&[&t1, &t2], 0.05, 1000 + step).unwrap();
            }
            model
        };
        let a = run();
        let b = run();
        assert_eq!(a.cols, b.cols);
        assert_eq!(a.version(), b.version());
    }

    #[test]
    fn corrupted_model_aborts_the_step_naming_the_triplet() {
        let mut model = EncoderModel::new(small_config(SimilarityKind::Dot), 2).unwrap();
        model.scale_weights(f64::NAN);
        let t = triplet("ax", "ax by", "cz");
        let err = model.train_step(&[&t], 0.05, 0).unwrap_err();
        match err {
            Error::Numeric(msg) => assert!(msg.contains("batch item 0"), "msg: {msg}"),
            other => panic!("expected numeric error, got {other:?}"),
        }
    }

    #[test]
    fn triplet_validation_rejects_overlap_and_bad_fields() {
        let mut t = triplet("q", "same", "same");
        assert!(t.validate().is_err());
        t = triplet("q", "a", "b");
        t.s = 1.5;
        assert!(t.validate().is_err());
        t = triplet("q", "a", "b");
        t.y = 0;
        assert!(t.validate().is_err());
        assert!(triplet("q", "a", "b").validate().is_ok());
    }

    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
}
