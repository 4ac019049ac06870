//! Topic extraction over grant titles and abstracts: collapsed Gibbs
//! sampling for latent Dirichlet allocation.

use std::collections::{BTreeMap, HashSet};

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct Corpus {
    /// Token index lists per document.
    pub docs: Vec<Vec<usize>>,
    pub vocab: Vec<String>,
    pub vocab_index: BTreeMap<String, usize>,
    pub doc_ids: Vec<String>,
    /// Documents left empty after stop-word removal.
    pub empty_docs: Vec<usize>,
}

impl Corpus {
    pub fn n_docs(&self) -> usize {
        self.docs.len()
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }
}

/// Lowercases, tokenizes on non-alphanumerics, and removes stop words.
pub fn preprocess(raw_docs: &[(String, String)], stopwords: &HashSet<String>) -> Result<Corpus> {
    if raw_docs.is_empty() {
        return Err(Error::InvalidDesign("empty document list".into()));
    }
    let mut vocab_index: BTreeMap<String, usize> = BTreeMap::new();
    let mut vocab: Vec<String> = Vec::new();
    let mut docs = Vec::with_capacity(raw_docs.len());
    let mut doc_ids = Vec::with_capacity(raw_docs.len());
    let mut empty_docs = Vec::new();

    for (i, (id, text)) in raw_docs.iter().enumerate() {
        let mut tokens = Vec::new();
        for raw in text.split(|c: char| !c.is_ascii_alphanumeric()) {
            if raw.is_empty() {
                continue;
            }
            let tok = raw.to_ascii_lowercase();
            if stopwords.contains(&tok) {
                continue;
            }
            let idx = *vocab_index.entry(tok.clone()).or_insert_with(|| {
                vocab.push(tok);
                vocab.len() - 1
            });
            tokens.push(idx);
        }
        if tokens.is_empty() {
            empty_docs.push(i);
        }
        docs.push(tokens);
        doc_ids.push(id.clone());
    }

    if docs.iter().all(|d| d.is_empty()) {
        return Err(Error::InvalidDesign(
            "corpus empty after preprocessing".into(),
        ));
    }
    Ok(Corpus {
        docs,
        vocab,
        vocab_index,
        doc_ids,
        empty_docs,
    })
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LdaConfig {
    pub k: usize,
    /// Symmetric document-topic prior; defaults to 50/K when `None`.
    pub alpha: Option<f64>,
    pub eta: f64,
    pub iterations: usize,
    pub burn_in: usize,
    pub seed: u64,
}

impl Default for LdaConfig {
    fn default() -> Self {
        LdaConfig {
            k: 30,
            alpha: None,
            eta: 0.01,
            iterations: 1000,
            burn_in: 200,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TopicModel {
    pub k: usize,
    pub vocab: Vec<String>,
    /// K x V row-stochastic topic-word distributions.
    pub topic_word: Vec<Vec<f64>>,
    /// M x K row-stochastic document-topic distributions.
    pub doc_topic: Vec<Vec<f64>>,
    pub alpha: f64,
    pub eta: f64,
    pub seed: u64,
    pub iterations: usize,
    /// Final-sample topic assignment per token per document.
    pub assignments: Vec<Vec<usize>>,
    pub warnings: Vec<String>,
}

/// Collapsed Gibbs sampler. Deterministic under a fixed seed: the final
/// sample after `iterations` sweeps provides both assignments and the
/// smoothed count estimates.
pub fn fit_lda(corpus: &Corpus, config: &LdaConfig) -> Result<TopicModel> {
    let k = config.k;
    if k < 1 {
        return Err(Error::InvalidConfig("K must be >= 1".into()));
    }
    if config.iterations < 1 {
        return Err(Error::InvalidConfig("iterations must be >= 1".into()));
    }
    let v = corpus.vocab_size();
    let m = corpus.n_docs();
    let alpha = config.alpha.unwrap_or(50.0 / k as f64);
    let eta = config.eta;

    let mut warnings = Vec::new();
    if v < k {
        warnings.push(format!("vocabulary size {} smaller than K = {}", v, k));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let mut n_dk = vec![0.0f64; m * k];
    let mut n_kw = vec![0.0f64; k * v];
    let mut n_k = vec![0.0f64; k];
    let mut assignments: Vec<Vec<usize>> = corpus
        .docs
        .iter()
        .map(|doc| doc.iter().map(|_| 0usize).collect())
        .collect();

    // random initialization
    for (d, doc) in corpus.docs.iter().enumerate() {
        for (pos, &w) in doc.iter().enumerate() {
            let z = rng.gen_range(0..k);
            assignments[d][pos] = z;
            n_dk[d * k + z] += 1.0;
            n_kw[z * v + w] += 1.0;
            n_k[z] += 1.0;
        }
    }

    let v_eta = v as f64 * eta;
    let mut probs = vec![0.0f64; k];
    for _sweep in 0..config.iterations {
        for (d, doc) in corpus.docs.iter().enumerate() {
            for (pos, &w) in doc.iter().enumerate() {
                let old = assignments[d][pos];
                n_dk[d * k + old] -= 1.0;
                n_kw[old * v + w] -= 1.0;
                n_k[old] -= 1.0;

                let mut total = 0.0;
                for t in 0..k {
                    let p = (n_dk[d * k + t] + alpha) * (n_kw[t * v + w] + eta)
                        / (n_k[t] + v_eta);
                    probs[t] = p;
                    total += p;
                }
                let mut u = rng.gen::<f64>() * total;
                let mut z = k - 1;
                for (t, p) in probs.iter().enumerate() {
                    u -= p;
                    if u <= 0.0 {
                        z = t;
                        break;
                    }
                }

                assignments[d][pos] = z;
                n_dk[d * k + z] += 1.0;
                n_kw[z * v + w] += 1.0;
                n_k[z] += 1.0;
            }
        }
    }

    let topic_word: Vec<Vec<f64>> = (0..k)
        .map(|t| {
            let denom = n_k[t] + v_eta;
            (0..v).map(|w| (n_kw[t * v + w] + eta) / denom).collect()
        })
        .collect();
    let doc_topic: Vec<Vec<f64>> = (0..m)
        .map(|d| {
            let n_d: f64 = (0..k).map(|t| n_dk[d * k + t]).sum();
            let denom = n_d + k as f64 * alpha;
            (0..k).map(|t| (n_dk[d * k + t] + alpha) / denom).collect()
        })
        .collect();

    Ok(TopicModel {
        k,
        vocab: corpus.vocab.clone(),
        topic_word,
        doc_topic,
        alpha,
        eta,
        seed: config.seed,
        iterations: config.iterations,
        assignments,
        warnings,
    })
}

/// Most probable topic for one document; ties break to the lowest index.
pub fn assign_topic(model: &TopicModel, doc_index: usize) -> Result<usize> {
    let row = model
        .doc_topic
        .get(doc_index)
        .ok_or_else(|| Error::InvalidState(format!("no document {}", doc_index)))?;
    let mut best = 0;
    for (t, &p) in row.iter().enumerate() {
        if p > row[best] {
            best = t;
        }
    }
    Ok(best)
}

/// Top-`n` vocabulary items per topic, by probability, descending. Requests
/// beyond the vocabulary are clamped.
pub fn top_keywords(model: &TopicModel, n: usize) -> (Vec<Vec<String>>, bool) {
    let v = model.vocab.len();
    let clamped = n > v;
    let n = n.min(v);
    let lists = model
        .topic_word
        .iter()
        .map(|row| {
            let mut idx: Vec<usize> = (0..v).collect();
            idx.sort_by(|&a, &b| {
                row[b]
                    .partial_cmp(&row[a])
                    .unwrap()
                    .then_with(|| a.cmp(&b))
            });
            idx[..n].iter().map(|&w| model.vocab[w].clone()).collect()
        })
        .collect();
    (lists, clamped)
}

/// Corpus log-likelihood under the fitted mixtures. Per-document
/// contributions are accumulated in a canonical (sorted) order, so permuting
/// document order (with matching doc_topic rows) leaves the result
/// bit-for-bit unchanged.
pub fn log_likelihood(corpus: &Corpus, model: &TopicModel) -> f64 {
    let mut per_doc: Vec<f64> = corpus
        .docs
        .iter()
        .enumerate()
        .map(|(d, doc)| {
            let mut ll = 0.0;
            for &w in doc {
                let p: f64 = (0..model.k)
                    .map(|t| model.doc_topic[d][t] * model.topic_word[t][w])
                    .sum();
                ll += p.ln();
            }
            ll
        })
        .collect();
    per_doc.sort_by(f64::total_cmp);
    per_doc.iter().sum()
}

impl TopicModel {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<TopicModel> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Reads a one-token-per-line stop-word file.
pub fn read_stopwords(path: &std::path::Path) -> Result<HashSet<String>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(text
        .lines()
        .map(|l| l.trim().to_ascii_lowercase())
        .filter(|l| !l.is_empty())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stopset(words: &[&str]) -> HashSet<String> {
        words.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn preprocess_lowercases_and_strips() {
        let docs = vec![("d1".to_string(), "The Human Species".to_string())];
        let c = preprocess(&docs, &stopset(&["the"])).unwrap();
        let tokens: Vec<&str> = c.docs[0].iter().map(|&i| c.vocab[i].as_str()).collect();
        assert_eq!(tokens, vec!["human", "species"]);
    }

    #[test]
    fn all_stopword_doc_flagged() {
        let docs = vec![
            ("d1".to_string(), "the of".to_string()),
            ("d2".to_string(), "climate water".to_string()),
        ];
        let c = preprocess(&docs, &stopset(&["the", "of"])).unwrap();
        assert_eq!(c.empty_docs, vec![0]);
    }

    #[test]
    fn fully_empty_corpus_is_error() {
        let docs = vec![("d1".to_string(), "the".to_string())];
        assert!(preprocess(&docs, &stopset(&["the"])).is_err());
    }

    #[test]
    fn k1_gives_unigram_distribution() {
        let docs = vec![
            ("d1".to_string(), "alpha beta alpha".to_string()),
            ("d2".to_string(), "beta gamma".to_string()),
        ];
        let c = preprocess(&docs, &HashSet::new()).unwrap();
        let model = fit_lda(
            &c,
            &LdaConfig { k: 1, iterations: 5, burn_in: 0, seed: 1, alpha: None, eta: 0.01 },
        )
        .unwrap();
        for d in 0..2 {
            assert_eq!(assign_topic(&model, d).unwrap(), 0);
        }
        // topic-word approximates the corpus unigram distribution (smoothed)
        let counts = [2.0, 2.0, 1.0]; // alpha, beta, gamma in vocab order of first occurrence
        let total = 5.0;
        let v = 3.0;
        for (w, &cnt) in counts.iter().enumerate() {
            let expect = (cnt + 0.01) / (total + v * 0.01);
            assert!((model.topic_word[0][w] - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn rows_stochastic() {
        let docs: Vec<(String, String)> = (0..10)
            .map(|i| (format!("d{}", i), format!("w{} w{} w{}", i % 4, (i + 1) % 4, (i + 2) % 4)))
            .collect();
        let c = preprocess(&docs, &HashSet::new()).unwrap();
        let model = fit_lda(
            &c,
            &LdaConfig { k: 3, iterations: 20, burn_in: 5, seed: 7, alpha: None, eta: 0.01 },
        )
        .unwrap();
        for row in model.topic_word.iter().chain(model.doc_topic.iter()) {
            let s: f64 = row.iter().sum();
            assert!((s - 1.0).abs() < 1e-9);
            assert!(row.iter().all(|&p| p >= 0.0));
        }
    }

    #[test]
    fn seed_determinism() {
        let docs: Vec<(String, String)> = (0..8)
            .map(|i| (format!("d{}", i), format!("a{} b{} c{}", i % 3, i % 5, i % 2)))
            .collect();
        let c = preprocess(&docs, &HashSet::new()).unwrap();
        let cfg = LdaConfig { k: 2, iterations: 30, burn_in: 10, seed: 42, alpha: None, eta: 0.01 };
        let m1 = fit_lda(&c, &cfg).unwrap();
        let m2 = fit_lda(&c, &cfg).unwrap();
        assert_eq!(m1.assignments, m2.assignments);
        assert_eq!(m1.topic_word, m2.topic_word);
    }

    #[test]
    fn assign_topic_argmax_and_ties() {
        let mut model = TopicModel {
            k: 3,
            vocab: vec![],
            topic_word: vec![],
            doc_topic: vec![vec![0.1, 0.8, 0.1], vec![0.5, 0.5, 0.0]],
            alpha: 1.0,
            eta: 0.01,
            seed: 0,
            iterations: 0,
            assignments: vec![],
            warnings: vec![],
        };
        assert_eq!(assign_topic(&model, 0).unwrap(), 1);
        // tie breaks to the lowest index
        assert_eq!(assign_topic(&model, 1).unwrap(), 0);
        model.doc_topic.clear();
        assert!(assign_topic(&model, 0).is_err());
    }

    #[test]
    fn keywords_sorted_and_clamped() {
        let model = TopicModel {
            k: 1,
            vocab: vec!["a".into(), "b".into(), "c".into()],
            topic_word: vec![vec![0.2, 0.5, 0.3]],
            doc_topic: vec![],
            alpha: 1.0,
            eta: 0.01,
            seed: 0,
            iterations: 0,
            assignments: vec![],
            warnings: vec![],
        };
        let (kw, clamped) = top_keywords(&model, 2);
        assert!(!clamped);
        assert_eq!(kw[0], vec!["b".to_string(), "c".to_string()]);
        let (kw, clamped) = top_keywords(&model, 10);
        assert!(clamped);
        assert_eq!(kw[0].len(), 3);
        // full-sort oracle
        assert_eq!(kw[0], vec!["b".to_string(), "c".to_string(), "a".to_string()]);
    }

    #[test]
    fn log_likelihood_permutation_invariant() {
        let docs: Vec<(String, String)> = (0..6)
            .map(|i| (format!("d{}", i), format!("x{} y{} x{}", i % 2, i % 3, (i + 1) % 2)))
            .collect();
        let c = preprocess(&docs, &HashSet::new()).unwrap();
        let cfg = LdaConfig { k: 2, iterations: 20, burn_in: 5, seed: 3, alpha: None, eta: 0.01 };
        let model = fit_lda(&c, &cfg).unwrap();
        let ll = log_likelihood(&c, &model);

        // permute documents and the matching doc_topic rows
        let perm = [3usize, 1, 5, 0, 4, 2];
        let c2 = Corpus {
            docs: perm.iter().map(|&i| c.docs[i].clone()).collect(),
            vocab: c.vocab.clone(),
            vocab_index: c.vocab_index.clone(),
            doc_ids: perm.iter().map(|&i| c.doc_ids[i].clone()).collect(),
            empty_docs: vec![],
        };
        let mut model2 = model.clone();
        model2.doc_topic = perm.iter().map(|&i| model.doc_topic[i].clone()).collect();
        let ll2 = log_likelihood(&c2, &model2);
        assert_eq!(ll.to_bits(), ll2.to_bits());
    }

    #[test]
    fn small_vocab_warns() {
        let docs = vec![("d1".to_string(), "only two".to_string())];
        let c = preprocess(&docs, &HashSet::new()).unwrap();
        let model = fit_lda(
            &c,
            &LdaConfig { k: 5, iterations: 3, burn_in: 0, seed: 1, alpha: None, eta: 0.01 },
        )
        .unwrap();
        assert!(!model.warnings.is_empty());
    }

    #[test]
    fn json_roundtrip() {
        let docs = vec![("d1".to_string(), "alpha beta".to_string())];
        let c = preprocess(&docs, &HashSet::new()).unwrap();
        let m = fit_lda(
            &c,
            &LdaConfig { k: 2, iterations: 5, burn_in: 0, seed: 9, alpha: None, eta: 0.01 },
        )
        .unwrap();
        let j = m.to_json().unwrap();
        let back = TopicModel::from_json(&j).unwrap();
        assert_eq!(back.topic_word, m.topic_word);
        assert_eq!(back.vocab, m.vocab);
    }
}
