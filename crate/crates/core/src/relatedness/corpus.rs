use std::collections::{BTreeMap, HashMap, HashSet};

use crate::error::{Error, Result};
use crate::io::Document;

/// Splits on Unicode whitespace, strips leading and trailing ASCII
/// punctuation and lowercases. No stemming.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|t| t.trim_matches(|c: char| c.is_ascii_punctuation()))
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Inverted index over a tokenized corpus.
///
/// Token sequences are kept so that window co-occurrence can be counted.
#[derive(Debug, Clone)]
pub struct CorpusIndex {
    doc_ids: Vec<String>,
    terms: Vec<String>,
    vocab: HashMap<String, u32>,
    docs: Vec<Vec<u32>>,
    /// term -> (doc, term frequency), ascending by doc.
    postings: Vec<Vec<(u32, u32)>>,
}

/// Co-occurrence window for [`dice_snippet`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Window {
    /// Sliding window of this many tokens.
    Tokens(usize),
    /// Whole documents; equivalent to document-level hit counts.
    Unbounded,
}

impl CorpusIndex {
    pub fn build(documents: &[Document]) -> Result<Self> {
        if documents.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let mut seen = HashSet::new();
        let mut index = CorpusIndex {
            doc_ids: Vec::with_capacity(documents.len()),
            terms: Vec::new(),
            vocab: HashMap::new(),
            docs: Vec::with_capacity(documents.len()),
            postings: Vec::new(),
        };
        for (d, doc) in documents.iter().enumerate() {
            let id = doc.id.trim();
            if !seen.insert(id.to_string()) {
                return Err(Error::DuplicateId(id.to_string()));
            }
            index.doc_ids.push(id.to_string());
            let mut seq = Vec::new();
            for tok in tokenize(&doc.text) {
                let t = match index.vocab.get(&tok) {
                    Some(&t) => t,
                    None => {
                        let t = index.terms.len() as u32;
                        index.vocab.insert(tok.clone(), t);
                        index.terms.push(tok);
                        index.postings.push(Vec::new());
                        t
                    }
                };
                seq.push(t);
                let list = &mut index.postings[t as usize];
                match list.last_mut() {
                    Some((last, tf)) if *last == d as u32 => *tf += 1,
                    _ => list.push((d as u32, 1)),
                }
            }
            index.docs.push(seq);
        }
        Ok(index)
    }

    pub fn doc_count(&self) -> usize {
        self.docs.len()
    }

    pub fn doc_ids(&self) -> &[String] {
        &self.doc_ids
    }

    pub fn vocabulary_size(&self) -> usize {
        self.terms.len()
    }

    /// Number of documents matching `term` (all of its tokens present).
    pub fn doc_frequency(&self, term: &str) -> usize {
        self.matching_docs(term).len()
    }

    /// Token sequence of document `doc`.
    pub fn tokens(&self, doc: usize) -> impl Iterator<Item = &str> + '_ {
        self.docs[doc].iter().map(|&t| self.terms[t as usize].as_str())
    }

    /// Distinct token ids of `term`, or `None` if some token never occurs
    /// (or the term has no tokens at all).
    fn query(&self, term: &str) -> Option<Vec<u32>> {
        let mut ids = Vec::new();
        for tok in tokenize(term) {
            let id = *self.vocab.get(&tok)?;
            if !ids.contains(&id) {
                ids.push(id);
            }
        }
        (!ids.is_empty()).then_some(ids)
    }

    /// Sorted ids of documents containing every token of `term`.
    pub fn matching_docs(&self, term: &str) -> Vec<u32> {
        match self.query(term) {
            Some(q) => self.docs_with_all(&q),
            None => Vec::new(),
        }
    }

    fn docs_with_all(&self, query: &[u32]) -> Vec<u32> {
        let mut lists: Vec<&Vec<(u32, u32)>> =
            query.iter().map(|&t| &self.postings[t as usize]).collect();
        lists.sort_by_key(|l| l.len());
        let mut docs: Vec<u32> = lists[0].iter().map(|&(d, _)| d).collect();
        for list in &lists[1..] {
            docs = intersect_sorted(&docs, list.iter().map(|&(d, _)| d));
        }
        docs
    }

    /// tf*idf concept vector of `term` over documents: tf is the raw count,
    /// idf = ln(N / df). Multi-token terms sum their token vectors.
    fn concept_vector(&self, term: &str) -> BTreeMap<u32, f64> {
        let n = self.doc_count() as f64;
        let mut vec = BTreeMap::new();
        for tok in tokenize(term) {
            let Some(&t) = self.vocab.get(&tok) else { continue };
            let list = &self.postings[t as usize];
            let idf = (n / list.len() as f64).ln();
            for &(d, tf) in list {
                *vec.entry(d).or_insert(0.0) += tf as f64 * idf;
            }
        }
        vec
    }
}

fn intersect_sorted(a: &[u32], b: impl Iterator<Item = u32>) -> Vec<u32> {
    let mut out = Vec::new();
    let mut i = 0;
    for d in b {
        while i < a.len() && a[i] < d {
            i += 1;
        }
        if i == a.len() {
            break;
        }
        if a[i] == d {
            out.push(d);
        }
    }
    out
}

fn dice(joint: usize, count_a: usize, count_b: usize) -> f64 {
    if count_a == 0 || count_b == 0 {
        return 0.0;
    }
    (2 * joint) as f64 / (count_a + count_b) as f64
}

/// Dice coefficient over the document sets of two terms:
/// `2 |D_a ∩ D_b| / (|D_a| + |D_b|)`, 0 if either set is empty.
pub fn dice_hitcount(index: &CorpusIndex, term_a: &str, term_b: &str) -> f64 {
    let da = index.matching_docs(term_a);
    let db = index.matching_docs(term_b);
    let joint = intersect_sorted(&da, db.iter().copied()).len();
    dice(joint, da.len(), db.len())
}

/// Dice coefficient over sliding token windows.
///
/// A document of `L` tokens contributes `L - w + 1` windows, or a single
/// window when `L <= w`. A term is present in a window when all of its tokens
/// are.
pub fn dice_snippet(index: &CorpusIndex, window: Window, term_a: &str, term_b: &str) -> Result<f64> {
    let width = match window {
        Window::Tokens(0) => {
            return Err(Error::InvalidValue("snippet window must be at least 1 token".into()))
        }
        Window::Tokens(w) => w,
        Window::Unbounded => usize::MAX,
    };
    let (Some(qa), Some(qb)) = (index.query(term_a), index.query(term_b)) else {
        return Ok(0.0);
    };
    // Only documents containing one of the terms can hold a matching window.
    let da = index.docs_with_all(&qa);
    let db = index.docs_with_all(&qb);
    let mut candidates: Vec<u32> = da.iter().chain(&db).copied().collect();
    candidates.sort_unstable();
    candidates.dedup();

    let mut slots: Vec<u32> = qa.clone();
    for &t in &qb {
        if !slots.contains(&t) {
            slots.push(t);
        }
    }
    let a_slots: Vec<usize> = qa.iter().map(|t| slots.iter().position(|s| s == t).unwrap()).collect();
    let b_slots: Vec<usize> = qb.iter().map(|t| slots.iter().position(|s| s == t).unwrap()).collect();

    let (mut count_a, mut count_b, mut joint) = (0usize, 0usize, 0usize);
    let mut counts = vec![0usize; slots.len()];
    for &d in &candidates {
        let seq = &index.docs[d as usize];
        let w = width.min(seq.len());
        let slot_of = |t: u32| slots.iter().position(|&s| s == t);
        counts.iter_mut().for_each(|c| *c = 0);
        for &t in &seq[..w] {
            if let Some(s) = slot_of(t) {
                counts[s] += 1;
            }
        }
        let n_windows = seq.len() - w + 1;
        for start in 0..n_windows {
            if start > 0 {
                if let Some(s) = slot_of(seq[start - 1]) {
                    counts[s] -= 1;
                }
                if let Some(s) = slot_of(seq[start + w - 1]) {
                    counts[s] += 1;
                }
            }
            let has_a = a_slots.iter().all(|&s| counts[s] > 0);
            let has_b = b_slots.iter().all(|&s| counts[s] > 0);
            count_a += has_a as usize;
            count_b += has_b as usize;
            joint += (has_a && has_b) as usize;
        }
    }
    Ok(dice(joint, count_a, count_b))
}

/// Explicit semantic analysis: cosine of the two terms' tf*idf vectors over
/// documents; 0 when either vector is zero.
pub fn esa_relatedness(index: &CorpusIndex, term_a: &str, term_b: &str) -> f64 {
    let va = index.concept_vector(term_a);
    let vb = index.concept_vector(term_b);
    let norm_a: f64 = va.values().map(|w| w * w).sum();
    let norm_b: f64 = vb.values().map(|w| w * w).sum();
    if norm_a == 0.0 || norm_b == 0.0 {
        return 0.0;
    }
    let dot: f64 = va
        .iter()
        .filter_map(|(d, wa)| vb.get(d).map(|wb| wa * wb))
        .sum();
    (dot / (norm_a * norm_b).sqrt()).clamp(0.0, 1.0)
}
