//! Hashed lexical features: unigram + bigram counts, L2-normalized.

/// FNV-1a 64-bit. Fixed multiplier keeps feature indices identical across
/// platforms and runs.
const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h = FNV_OFFSET;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

/// Sparse L2-normalized feature vector with entries sorted by index.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    dim: u32,
    entries: Vec<(u32, f64)>,
}

impl FeatureVector {
    pub fn dim(&self) -> u32 {
        self.dim
    }

    pub fn entries(&self) -> &[(u32, f64)] {
        &self.entries
    }

    pub fn is_zero(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn l2_norm(&self) -> f64 {
        self.entries.iter().map(|(_, w)| w * w).sum::<f64>().sqrt()
    }
}

fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Hash unigram and bigram counts of `text` into `dim` buckets and normalize.
/// Empty or token-free text maps to the zero vector. Deterministic.
pub fn featurize(text: &str, dim: u32) -> FeatureVector {
    assert!(dim > 0, "feature dimension must be positive");
    let tokens = tokenize(text);
    let mut counts: std::collections::HashMap<u32, f64> = std::collections::HashMap::new();
    for t in &tokens {
        let idx = (fnv1a(t.as_bytes()) % u64::from(dim)) as u32;
        *counts.entry(idx).or_insert(0.0) += 1.0;
    }
    for pair in tokens.windows(2) {
        let joined = format!("{} {}", pair[0], pair[1]);
        let idx = (fnv1a(joined.as_bytes()) % u64::from(dim)) as u32;
        *counts.entry(idx).or_insert(0.0) += 1.0;
    }
    let mut entries: Vec<(u32, f64)> = counts.into_iter().collect();
    entries.sort_unstable_by_key(|&(i, _)| i);
    let norm = entries.iter().map(|(_, w)| w * w).sum::<f64>().sqrt();
    if norm > 0.0 {
        for (_, w) in &mut entries {
            *w /= norm;
        }
    }
    FeatureVector { dim, entries }
}
