//! Short-text topic model: a collapsed Gibbs sampler that assigns a single
//! topic per document (Dirichlet-multinomial mixture), plus deterministic
//! fold-in inference for unseen documents.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::IdIndex;
use crate::error::{Error, Result};
use crate::linalg::softmax;
use crate::store::Container;

#[derive(Debug, Clone, PartialEq)]
pub struct LdaParams {
    pub num_topics: usize,
    /// Dirichlet prior on topic proportions. `None` means `50 / num_topics`.
    pub alpha: Option<f64>,
    pub beta: f64,
    pub iterations: usize,
    pub seed: u64,
}

impl Default for LdaParams {
    fn default() -> Self {
        LdaParams {
            num_topics: 60,
            alpha: None,
            beta: 0.01,
            iterations: 200,
            seed: 0,
        }
    }
}

impl LdaParams {
    pub fn alpha(&self) -> f64 {
        self.alpha.unwrap_or(50.0 / self.num_topics as f64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TopicModel {
    num_topics: usize,
    vocabulary: IdIndex,
    /// `num_topics × vocabulary.len()`, row-major; every row sums to 1.
    topic_word: Vec<f64>,
    alpha: f64,
    beta: f64,
}

impl TopicModel {
    /// Assembles a model from an explicit topic-word matrix, normalizing rows.
    pub fn from_parts(vocabulary: IdIndex, topic_word: Vec<f64>, alpha: f64, beta: f64) -> Result<Self> {
        let v = vocabulary.len();
        if v == 0 {
            return Err(Error::EmptyVocabulary);
        }
        if topic_word.is_empty() || !topic_word.len().is_multiple_of(v) {
            return Err(Error::DimensionMismatch {
                expected: v,
                actual: topic_word.len(),
            });
        }
        if topic_word.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::InvalidArgument(
                "topic-word entries must be finite and non-negative".into(),
            ));
        }
        let num_topics = topic_word.len() / v;
        let mut topic_word = topic_word;
        for row in topic_word.chunks_exact_mut(v) {
            let s: f64 = row.iter().sum();
            if s <= 0.0 {
                return Err(Error::InvalidArgument("topic with zero mass".into()));
            }
            row.iter_mut().for_each(|p| *p /= s);
        }
        Ok(TopicModel {
            num_topics,
            vocabulary,
            topic_word,
            alpha,
            beta,
        })
    }

    pub fn num_topics(&self) -> usize {
        self.num_topics
    }

    pub fn vocabulary(&self) -> &IdIndex {
        &self.vocabulary
    }

    pub fn topic_word(&self) -> &[f64] {
        &self.topic_word
    }

    pub fn topic(&self, z: usize) -> &[f64] {
        let v = self.vocabulary.len();
        &self.topic_word[z * v..(z + 1) * v]
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Posterior topic distribution of one document under a uniform topic
    /// prior, with the topic-word matrix held fixed. Out-of-vocabulary tokens
    /// are ignored; a document with no known tokens gets the uniform
    /// distribution.
    pub fn infer_topics<S: AsRef<str>>(&self, document: &[S]) -> Vec<f64> {
        let v = self.vocabulary.len();
        let words: Vec<usize> = document
            .iter()
            .filter_map(|t| self.vocabulary.index_of(t.as_ref()))
            .collect();
        if words.is_empty() {
            return vec![1.0 / self.num_topics as f64; self.num_topics];
        }
        let log_lik: Vec<f64> = (0..self.num_topics)
            .map(|z| {
                let row = &self.topic_word[z * v..(z + 1) * v];
                words.iter().map(|&w| row[w].ln()).sum()
            })
            .collect();
        softmax(&log_lik)
    }
}

impl TopicModel {
    pub fn to_container(&self) -> Container {
        let mut c = Container::default();
        c.put_meta("kind", "topic-model");
        c.put_meta("alpha", self.alpha);
        c.put_meta("beta", self.beta);
        c.put_list("vocabulary", self.vocabulary.ids().to_vec());
        c.put_tensor(
            "topic_word",
            self.num_topics,
            self.vocabulary.len(),
            self.topic_word.clone(),
        );
        c
    }

    pub fn from_container(c: &Container) -> Result<Self> {
        if c.meta("kind")? != "topic-model" {
            return Err(Error::Checkpoint("not a topic model".into()));
        }
        let vocabulary = IdIndex::from_ordered(c.list("vocabulary")?.to_vec())?;
        let tw = c.tensor("topic_word")?;
        if tw.cols != vocabulary.len() || tw.rows == 0 {
            return Err(Error::Checkpoint(
                "topic_word shape disagrees with the vocabulary".into(),
            ));
        }
        Ok(TopicModel {
            num_topics: tw.rows,
            vocabulary,
            topic_word: tw.data.clone(),
            alpha: c.meta_parse("alpha")?,
            beta: c.meta_parse("beta")?,
        })
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        self.to_container().write(path)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Self::from_container(&Container::read(path)?)
    }
}

/// Fits the one-topic-per-document sampler. Bit-reproducible for a seed.
pub fn fit_lda<S: AsRef<str>>(corpus: &[Vec<S>], params: &LdaParams) -> Result<TopicModel> {
    if params.num_topics == 0 {
        return Err(Error::InvalidArgument("num_topics must be >= 1".into()));
    }
    if params.iterations == 0 {
        return Err(Error::InvalidArgument("iterations must be >= 1".into()));
    }
    let alpha = params.alpha();
    let beta = params.beta;
    if !(alpha > 0.0 && beta > 0.0) {
        return Err(Error::InvalidArgument(
            "Dirichlet hyperparameters must be positive".into(),
        ));
    }

    let vocabulary = IdIndex::from_ids(corpus.iter().flatten().map(|t| t.as_ref().to_string()));
    if vocabulary.is_empty() {
        return Err(Error::EmptyVocabulary);
    }
    let k = params.num_topics;
    let v = vocabulary.len();
    let vbeta = v as f64 * beta;

    // Each document as sorted (word, count) pairs; empty documents carry no
    // information and are left out of the sampler.
    let docs: Vec<Vec<(usize, u32)>> = corpus
        .iter()
        .map(|doc| {
            let mut ids: Vec<usize> = doc
                .iter()
                .map(|t| vocabulary.index_of(t.as_ref()).expect("built from corpus"))
                .collect();
            ids.sort_unstable();
            let mut pairs: Vec<(usize, u32)> = Vec::new();
            for id in ids {
                match pairs.last_mut() {
                    Some((w, c)) if *w == id => *c += 1,
                    _ => pairs.push((id, 1)),
                }
            }
            pairs
        })
        .filter(|d| !d.is_empty())
        .collect();
    let lens: Vec<u32> = docs.iter().map(|d| d.iter().map(|(_, c)| c).sum()).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut assign = vec![0usize; docs.len()];
    let mut docs_in = vec![0u32; k];
    let mut words_in = vec![0u32; k];
    let mut word_topic = vec![0u32; k * v];

    let add = |z: usize, d: usize, sign: i64, docs_in: &mut [u32], words_in: &mut [u32], word_topic: &mut [u32]| {
        let apply = |x: &mut u32, by: u32| {
            if sign > 0 {
                *x += by
            } else {
                *x -= by
            }
        };
        apply(&mut docs_in[z], 1);
        apply(&mut words_in[z], lens[d]);
        for &(w, c) in &docs[d] {
            apply(&mut word_topic[z * v + w], c);
        }
    };

    for d in 0..docs.len() {
        let z = rng.random_range(0..k);
        assign[d] = z;
        add(z, d, 1, &mut docs_in, &mut words_in, &mut word_topic);
    }

    let mut logp = vec![0.0; k];
    for _ in 0..params.iterations {
        for d in 0..docs.len() {
            add(assign[d], d, -1, &mut docs_in, &mut words_in, &mut word_topic);
            for (z, lp) in logp.iter_mut().enumerate() {
                let mut s = (docs_in[z] as f64 + alpha).ln();
                for &(w, c) in &docs[d] {
                    let base = word_topic[z * v + w] as f64 + beta;
                    for j in 0..c {
                        s += (base + j as f64).ln();
                    }
                }
                let base = words_in[z] as f64 + vbeta;
                for i in 0..lens[d] {
                    s -= (base + i as f64).ln();
                }
                *lp = s;
            }
            let probs = softmax(&logp);
            let mut u: f64 = rng.random();
            let mut z_new = k - 1;
            for (z, p) in probs.iter().enumerate() {
                if u < *p {
                    z_new = z;
                    break;
                }
                u -= p;
            }
            assign[d] = z_new;
            add(z_new, d, 1, &mut docs_in, &mut words_in, &mut word_topic);
        }
    }

    let mut topic_word = vec![0.0; k * v];
    for z in 0..k {
        let denom = words_in[z] as f64 + vbeta;
        for w in 0..v {
            topic_word[z * v + w] = (word_topic[z * v + w] as f64 + beta) / denom;
        }
    }
    Ok(TopicModel {
        num_topics: k,
        vocabulary,
        topic_word,
        alpha,
        beta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Two document groups over disjoint vocabularies.
    fn planted_corpus() -> Vec<Vec<String>> {
        let sports = ["goal", "match", "league", "striker", "keeper", "derby"];
        let music = ["guitar", "album", "chorus", "drummer", "concert", "vinyl"];
        let mut corpus = Vec::new();
        for i in 0..40 {
            let words = if i % 2 == 0 { &sports } else { &music };
            let doc = (0..5).map(|j| words[(i / 2 + j) % words.len()].to_string()).collect();
            corpus.push(doc);
        }
        corpus
    }

    #[test]
    fn save_load_round_trip() {
        let params = LdaParams {
            num_topics: 3,
            iterations: 10,
            ..LdaParams::default()
        };
        let model = fit_lda(&planted_corpus(), &params).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("topics.bin");
        model.save(&p).unwrap();
        assert_eq!(TopicModel::load(&p).unwrap(), model);
    }

    #[test]
    fn rows_are_distributions() {
        let params = LdaParams {
            num_topics: 3,
            iterations: 20,
            ..LdaParams::default()
        };
        let model = fit_lda(&planted_corpus(), &params).unwrap();
        for z in 0..3 {
            assert!((model.topic(z).iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
        assert!((model.alpha() - 50.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn single_topic_infers_certainty() {
        let params = LdaParams {
            num_topics: 1,
            iterations: 5,
            ..LdaParams::default()
        };
        let model = fit_lda(&planted_corpus(), &params).unwrap();
        assert_eq!(model.infer_topics(&["goal", "album"]), vec![1.0]);
        assert_eq!(model.infer_topics(&["unseen"]), vec![1.0]);
    }

    #[test]
    fn planted_groups_separate() {
        let params = LdaParams {
            num_topics: 2,
            iterations: 200,
            seed: 11,
            ..LdaParams::default()
        };
        let corpus = planted_corpus();
        let model = fit_lda(&corpus, &params).unwrap();
        let mut group_topic = [None, None];
        for (i, doc) in corpus.iter().enumerate() {
            let theta = model.infer_topics(doc);
            assert!((theta.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            let (best, mass) = theta
                .iter()
                .copied()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(&b.1))
                .unwrap();
            assert!(mass >= 0.9, "doc {i} mass {mass}");
            let g = i % 2;
            match group_topic[g] {
                None => group_topic[g] = Some(best),
                Some(t) => assert_eq!(t, best),
            }
        }
        assert_ne!(group_topic[0], group_topic[1]);
    }

    #[test]
    fn oov_document_is_uniform() {
        let params = LdaParams {
            num_topics: 4,
            iterations: 3,
            ..LdaParams::default()
        };
        let model = fit_lda(&planted_corpus(), &params).unwrap();
        assert_eq!(model.infer_topics(&["nothing", "known"]), vec![0.25; 4]);
    }

    #[test]
    fn fixed_seed_is_reproducible() {
        let params = LdaParams {
            num_topics: 3,
            iterations: 30,
            seed: 5,
            ..LdaParams::default()
        };
        let a = fit_lda(&planted_corpus(), &params).unwrap();
        let b = fit_lda(&planted_corpus(), &params).unwrap();
        assert_eq!(a, b);
        let doc = ["goal", "vinyl"];
        assert_eq!(a.infer_topics(&doc), a.infer_topics(&doc));
    }

    #[test]
    fn empty_vocabulary_is_error() {
        let corpus: Vec<Vec<String>> = vec![vec![], vec![]];
        assert!(matches!(
            fit_lda(&corpus, &LdaParams::default()),
            Err(Error::EmptyVocabulary)
        ));
        let none: Vec<Vec<String>> = Vec::new();
        assert!(fit_lda(&none, &LdaParams::default()).is_err());
    }
}
