//! In-process model backends: a small sentiment classifier, random linear and
//! MLP classifiers for oracle-style tests, a bigram masked LM and perplexity
//! scorer built from a fixed corpus, and lookup stubs.
//!
//! These back the default CLI configuration and every test that must run
//! without model weights or network access. They are deliberately small but
//! implement the full backend contracts, gradients included.

use std::collections::HashMap;
use std::sync::Arc;

use ndarray::{Array1, Array2};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::gateway::types::{
    ClassifierOutput, GradientMatrix, Label, MlmCandidate, TokenSequence, Vocabulary,
};
use crate::gateway::{CausalScorer, MaskedLm, TextClassifier};

pub const UNK_TOKEN: &str = "[UNK]";
pub const SEP_TOKEN: &str = "[SEP]";
pub const UNK_ID: u32 = 0;
pub const SEP_ID: u32 = 1;

/// Sentiment lexicon behind the built-in toy classifier. Also the swap table
/// used by [`MockChat`](crate::gateway::chat::MockChat) so mocked chat methods
/// actually flip this classifier.
pub const SENTIMENT_WORDS: &[(&str, f64)] = &[
    ("loved", 2.0),
    ("adored", 2.0),
    ("wonderful", 2.0),
    ("great", 1.6),
    ("amazing", 1.8),
    ("brilliant", 1.8),
    ("enjoyed", 1.4),
    ("liked", 1.2),
    ("good", 1.0),
    ("hated", -2.0),
    ("despised", -2.0),
    ("terrible", -2.0),
    ("awful", -1.8),
    ("dreaded", -1.8),
    ("boring", -1.4),
    ("disliked", -1.2),
    ("bad", -1.0),
    ("dull", -1.0),
    ("not", -0.6),
    ("never", -0.6),
];

const NEUTRAL_WORDS: &[&str] = &[
    "i", "you", "we", "the", "a", "this", "it", "movie", "film", "book", "plot", "acting",
    "story", "was", "is", "and", "really", "very", "watched", "what", "who", "why", "how",
    "yes", "no", "question", "answer", "contains", "does", "sentence",
];

/// Fixed corpus behind the bigram masked LM and perplexity scorer.
const TOY_CORPUS: &[&str] = &[
    "i loved the movie",
    "i hated the movie",
    "i liked the film",
    "i disliked the film",
    "i enjoyed the acting",
    "i adored this book",
    "i despised the plot",
    "i watched the movie",
    "i dreaded the plot",
    "the movie was great",
    "the movie was terrible",
    "the film was wonderful",
    "the film was awful",
    "the plot was boring",
    "the acting was brilliant",
    "the story was amazing",
    "the book was dull",
    "this movie is good",
    "this film is bad",
    "it was not good",
    "it was never boring",
    "we really enjoyed this movie",
    "you watched a great film",
    "what a wonderful story",
    "the sentence contains the answer",
    "does the sentence answer the question",
    "the answer is yes",
    "the answer is no",
];

/// Vocabulary shared by the sentiment classifier and the toy language models:
/// `[UNK]` and `[SEP]` specials followed by the lexicon and neutral words.
pub fn toy_vocabulary() -> Vocabulary {
    let mut surfaces = vec![UNK_TOKEN.to_string(), SEP_TOKEN.to_string()];
    surfaces.extend(SENTIMENT_WORDS.iter().map(|(w, _)| w.to_string()));
    surfaces.extend(NEUTRAL_WORDS.iter().map(|w| w.to_string()));
    Vocabulary::new(surfaces, &[UNK_ID, SEP_ID])
}

/// Whitespace tokenizer over a fixed vocabulary; unknown words map to `[UNK]`
/// while keeping their surface form, so detokenize/retokenize is stable.
fn whitespace_tokenize(vocab: &Vocabulary, text: &str) -> Result<TokenSequence> {
    let mut ids = Vec::new();
    let mut surfaces = Vec::new();
    let mut offsets = Vec::new();
    let mut start: Option<usize> = None;
    let push = |ids: &mut Vec<u32>,
                surfaces: &mut Vec<String>,
                offsets: &mut Vec<(usize, usize)>,
                word: &str,
                span: (usize, usize)| {
        let id = vocab.id_of(word).unwrap_or(UNK_ID);
        ids.push(id);
        surfaces.push(word.to_string());
        offsets.push(span);
    };
    for (idx, ch) in text.char_indices() {
        if ch.is_whitespace() {
            if let Some(s) = start.take() {
                push(&mut ids, &mut surfaces, &mut offsets, &text[s..idx], (s, idx));
            }
        } else if start.is_none() {
            start = Some(idx);
        }
    }
    if let Some(s) = start {
        push(&mut ids, &mut surfaces, &mut offsets, &text[s..], (s, text.len()));
    }
    if ids.is_empty() {
        return Err(Error::InvalidInput("no tokens in input".into()));
    }
    TokenSequence::new(ids, surfaces, offsets)
}

fn lookup_surfaces(vocab: &Vocabulary, ids: &[u32]) -> Vec<String> {
    ids.iter()
        .map(|&id| vocab.surface(id).unwrap_or(UNK_TOKEN).to_string())
        .collect()
}

// ---------------------------------------------------------------------------
// Linear classifier
// ---------------------------------------------------------------------------

/// Bag-of-embeddings linear classifier:
/// `logits = (w0 . sum_i e_i + b0, w1 . sum_i e_i + b1)`.
pub struct ToyLinearClassifier {
    id: String,
    vocab: Vocabulary,
    embeddings: Arc<Array2<f64>>,
    weights: [Array1<f64>; 2],
    biases: [f64; 2],
}

impl ToyLinearClassifier {
    /// The built-in sentiment model: score lives in embedding dimension 0,
    /// logits are `(-z, z)` for `z` = sum of lexicon scores.
    pub fn sentiment() -> Self {
        let vocab = toy_vocabulary();
        let dim = 8;
        let mut emb = Array2::<f64>::zeros((vocab.len(), dim));
        let mut rng = ChaCha8Rng::seed_from_u64(0x5e47);
        for id in 0..vocab.len() {
            let surface = vocab.surface(id as u32).unwrap().to_string();
            let score = SENTIMENT_WORDS
                .iter()
                .find(|(w, _)| *w == surface)
                .map(|(_, s)| *s)
                .unwrap_or(0.0);
            emb[(id, 0)] = score;
            for d in 1..dim {
                emb[(id, d)] = rng.random_range(-0.5..0.5);
            }
        }
        let mut w1 = Array1::<f64>::zeros(dim);
        w1[0] = 1.0;
        let w0 = -&w1;
        ToyLinearClassifier {
            id: "toy-sentiment-linear".into(),
            vocab,
            embeddings: Arc::new(emb),
            weights: [w0, w1],
            biases: [0.0, 0.0],
        }
    }

    /// Random binary linear classifier in the single-score (antisymmetric)
    /// form `logits = (-z - c, z + c)`: the canonical logistic-regression
    /// shape for a binary model.
    pub fn random_antisymmetric(seed: u64, n_words: usize, dim: usize) -> Self {
        Self::random(seed, n_words, dim, true)
    }

    /// Random linear classifier with two independent logit rows.
    pub fn random_general(seed: u64, n_words: usize, dim: usize) -> Self {
        Self::random(seed, n_words, dim, false)
    }

    fn random(seed: u64, n_words: usize, dim: usize, antisymmetric: bool) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut surfaces = vec![UNK_TOKEN.to_string()];
        surfaces.extend((0..n_words).map(|i| format!("w{i}")));
        let vocab = Vocabulary::new(surfaces, &[UNK_ID]);
        let mut emb = Array2::<f64>::zeros((vocab.len(), dim));
        for v in 0..vocab.len() {
            for d in 0..dim {
                emb[(v, d)] = rng.random_range(-1.0..1.0);
            }
        }
        let w1 = Array1::from_iter((0..dim).map(|_| rng.random_range(-1.0..1.0)));
        let b1: f64 = rng.random_range(-0.5..0.5);
        let (w0, b0) = if antisymmetric {
            (-&w1, -b1)
        } else {
            (
                Array1::from_iter((0..dim).map(|_| rng.random_range(-1.0..1.0))),
                rng.random_range(-0.5..0.5),
            )
        };
        ToyLinearClassifier {
            id: format!("toy-linear-{seed}"),
            vocab,
            embeddings: Arc::new(emb),
            weights: [w0, w1],
            biases: [b0, b1],
        }
    }

    fn pooled(&self, token_ids: &[u32]) -> Result<Array1<f64>> {
        let mut sum = Array1::<f64>::zeros(self.embeddings.ncols());
        for &id in token_ids {
            if id as usize >= self.embeddings.nrows() {
                return Err(Error::InvalidInput(format!("token id {id} out of vocabulary")));
            }
            sum += &self.embeddings.row(id as usize);
        }
        Ok(sum)
    }
}

impl TextClassifier for ToyLinearClassifier {
    fn model_id(&self) -> &str {
        &self.id
    }

    fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    fn tokenize(&self, text: &str) -> Result<TokenSequence> {
        whitespace_tokenize(&self.vocab, text)
    }

    fn detokenize(&self, surfaces: &[String]) -> String {
        surfaces.join(" ")
    }

    fn classify_tokens(&self, token_ids: &[u32]) -> Result<ClassifierOutput> {
        let pooled = self.pooled(token_ids)?;
        let logits = [
            self.weights[0].dot(&pooled) + self.biases[0],
            self.weights[1].dot(&pooled) + self.biases[1],
        ];
        Ok(ClassifierOutput::from_logits(logits))
    }

    fn gradients(&self, token_ids: &[u32], target: Label) -> Result<GradientMatrix> {
        // d logit_t / d e_i = w_t for every position of a bag-of-embeddings model.
        let row = &self.weights[target as usize];
        let mut values = Array2::<f64>::zeros((token_ids.len(), row.len()));
        for mut r in values.rows_mut() {
            r.assign(row);
        }
        GradientMatrix::new(values, target)
    }

    fn embeddings(&self) -> Result<Arc<Array2<f64>>> {
        Ok(Arc::clone(&self.embeddings))
    }
}

// ---------------------------------------------------------------------------
// MLP classifier
// ---------------------------------------------------------------------------

/// Position-weighted tanh MLP over pooled embeddings. Nonlinear, with exact
/// closed-form input gradients, for finite-difference and search tests where
/// first-order scores must be approximate rather than exact:
/// `logits = W2 tanh(W1 m + b1) + b2`, `m = sum_i e_i / (1 + i)`.
pub struct ToyMlpClassifier {
    id: String,
    vocab: Vocabulary,
    embeddings: Arc<Array2<f64>>,
    w1: Array2<f64>,
    b1: Array1<f64>,
    w2: Array2<f64>,
    b2: Array1<f64>,
}

impl ToyMlpClassifier {
    pub fn random(seed: u64, n_words: usize, dim: usize, hidden: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut surfaces = vec![UNK_TOKEN.to_string()];
        surfaces.extend((0..n_words).map(|i| format!("w{i}")));
        let vocab = Vocabulary::new(surfaces, &[UNK_ID]);
        let mut emb = Array2::<f64>::zeros((vocab.len(), dim));
        for v in 0..vocab.len() {
            for d in 0..dim {
                emb[(v, d)] = rng.random_range(-1.0..1.0);
            }
        }
        let mut mat = |r: usize, c: usize| {
            let mut m = Array2::<f64>::zeros((r, c));
            for i in 0..r {
                for j in 0..c {
                    m[(i, j)] = rng.random_range(-1.0..1.0);
                }
            }
            m
        };
        let w1 = mat(hidden, dim);
        let w2 = mat(2, hidden);
        let b1 = Array1::from_iter((0..hidden).map(|_| rng.random_range(-0.3..0.3)));
        let b2 = Array1::from_iter((0..2).map(|_| rng.random_range(-0.3..0.3)));
        ToyMlpClassifier {
            id: format!("toy-mlp-{seed}"),
            vocab,
            embeddings: Arc::new(emb),
            w1,
            b1,
            w2,
            b2,
        }
    }

    fn position_weight(i: usize) -> f64 {
        1.0 / (1.0 + i as f64)
    }

    fn forward(&self, token_ids: &[u32]) -> Result<(Array1<f64>, [f64; 2])> {
        let dim = self.embeddings.ncols();
        let mut m = Array1::<f64>::zeros(dim);
        for (i, &id) in token_ids.iter().enumerate() {
            if id as usize >= self.embeddings.nrows() {
                return Err(Error::InvalidInput(format!("token id {id} out of vocabulary")));
            }
            m.scaled_add(Self::position_weight(i), &self.embeddings.row(id as usize));
        }
        let activation = (self.w1.dot(&m) + &self.b1).mapv(f64::tanh);
        let logits_arr = self.w2.dot(&activation) + &self.b2;
        Ok((activation, [logits_arr[0], logits_arr[1]]))
    }
}

impl TextClassifier for ToyMlpClassifier {
    fn model_id(&self) -> &str {
        &self.id
    }

    fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    fn tokenize(&self, text: &str) -> Result<TokenSequence> {
        whitespace_tokenize(&self.vocab, text)
    }

    fn detokenize(&self, surfaces: &[String]) -> String {
        surfaces.join(" ")
    }

    fn classify_tokens(&self, token_ids: &[u32]) -> Result<ClassifierOutput> {
        let (_, logits) = self.forward(token_ids)?;
        Ok(ClassifierOutput::from_logits(logits))
    }

    fn gradients(&self, token_ids: &[u32], target: Label) -> Result<GradientMatrix> {
        let (activation, _) = self.forward(token_ids)?;
        // d logit_t / d m = W1^T ((1 - a^2) * W2[t, :])
        let gate = activation.mapv(|a| 1.0 - a * a);
        let weighted = &gate * &self.w2.row(target as usize);
        let dm = self.w1.t().dot(&weighted);
        let mut values = Array2::<f64>::zeros((token_ids.len(), dm.len()));
        for (i, mut row) in values.rows_mut().into_iter().enumerate() {
            row.assign(&(&dm * Self::position_weight(i)));
        }
        GradientMatrix::new(values, target)
    }

    fn embeddings(&self) -> Result<Arc<Array2<f64>>> {
        Ok(Arc::clone(&self.embeddings))
    }
}

// ---------------------------------------------------------------------------
// Fixed-output stubs
// ---------------------------------------------------------------------------

/// Classifier returning the same logits for every input. Its gradients are
/// exactly zero everywhere.
pub struct ConstantClassifier {
    vocab: Vocabulary,
    logits: [f64; 2],
    dim: usize,
}

impl ConstantClassifier {
    pub fn new(logits: [f64; 2]) -> Self {
        ConstantClassifier {
            vocab: toy_vocabulary(),
            logits,
            dim: 8,
        }
    }
}

impl TextClassifier for ConstantClassifier {
    fn model_id(&self) -> &str {
        "constant-classifier"
    }

    fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    fn tokenize(&self, text: &str) -> Result<TokenSequence> {
        whitespace_tokenize(&self.vocab, text)
    }

    fn detokenize(&self, surfaces: &[String]) -> String {
        surfaces.join(" ")
    }

    fn classify_tokens(&self, _token_ids: &[u32]) -> Result<ClassifierOutput> {
        Ok(ClassifierOutput::from_logits(self.logits))
    }

    fn gradients(&self, token_ids: &[u32], target: Label) -> Result<GradientMatrix> {
        GradientMatrix::new(Array2::zeros((token_ids.len(), self.dim)), target)
    }

    fn embeddings(&self) -> Result<Arc<Array2<f64>>> {
        Ok(Arc::new(Array2::zeros((self.vocab.len(), self.dim))))
    }
}

/// Classifier whose logit is a lookup over which of a fixed set of per-position
/// substitutions have been applied: `logits = (-v(S), v(S))`. Used to drive
/// the substitution-value estimator against games with known exact values.
pub struct TableClassifier {
    vocab: Vocabulary,
    base_ids: Vec<u32>,
    alt_ids: Vec<u32>,
    /// `table[mask]` = score when exactly the substitutions in `mask` are applied.
    table: Vec<f64>,
}

impl TableClassifier {
    pub fn new(base_ids: Vec<u32>, alt_ids: Vec<u32>, table: Vec<f64>) -> Self {
        assert_eq!(base_ids.len(), alt_ids.len());
        assert_eq!(table.len(), 1 << base_ids.len());
        let max_id = base_ids.iter().chain(alt_ids.iter()).max().copied().unwrap_or(0);
        let surfaces = (0..=max_id).map(|i| format!("t{i}")).collect();
        TableClassifier {
            vocab: Vocabulary::new(surfaces, &[]),
            base_ids,
            alt_ids,
            table,
        }
    }

    /// Score for an explicit substitution subset, bit `p` = position `p` substituted.
    pub fn score(&self, mask: usize) -> f64 {
        self.table[mask]
    }

    fn mask_of(&self, token_ids: &[u32]) -> Result<usize> {
        if token_ids.len() != self.base_ids.len() {
            return Err(Error::InvalidInput("sequence length mismatch".into()));
        }
        let mut mask = 0usize;
        for (p, &id) in token_ids.iter().enumerate() {
            if id == self.alt_ids[p] && id != self.base_ids[p] {
                mask |= 1 << p;
            } else if id != self.base_ids[p] {
                return Err(Error::InvalidInput(format!(
                    "token id {id} at position {p} is neither base nor alternative"
                )));
            }
        }
        Ok(mask)
    }
}

impl TextClassifier for TableClassifier {
    fn model_id(&self) -> &str {
        "table-classifier"
    }

    fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    fn tokenize(&self, text: &str) -> Result<TokenSequence> {
        whitespace_tokenize(&self.vocab, text)
    }

    fn detokenize(&self, surfaces: &[String]) -> String {
        surfaces.join(" ")
    }

    fn classify_tokens(&self, token_ids: &[u32]) -> Result<ClassifierOutput> {
        let v = self.score(self.mask_of(token_ids)?);
        Ok(ClassifierOutput::from_logits([-v, v]))
    }

    fn gradients(&self, _token_ids: &[u32], _target: Label) -> Result<GradientMatrix> {
        Err(Error::Capability("table classifier has no gradients".into()))
    }

    fn embeddings(&self) -> Result<Arc<Array2<f64>>> {
        Err(Error::Capability("table classifier has no embeddings".into()))
    }
}

// ---------------------------------------------------------------------------
// Toy language models
// ---------------------------------------------------------------------------

const SMOOTHING: f64 = 0.1;

/// Add-k smoothed bigram statistics over [`TOY_CORPUS`], shared by the masked
/// LM and the perplexity scorer. Start and end of sentence are virtual states.
struct BigramTable {
    vocab: Vocabulary,
    /// (prev, next) counts; `u32::MAX` marks start-of-sentence, `u32::MAX - 1` end.
    counts: HashMap<(u32, u32), f64>,
    totals: HashMap<u32, f64>,
}

const BOS: u32 = u32::MAX;
const EOS: u32 = u32::MAX - 1;

impl BigramTable {
    fn build() -> Self {
        let vocab = toy_vocabulary();
        let mut counts: HashMap<(u32, u32), f64> = HashMap::new();
        let mut totals: HashMap<u32, f64> = HashMap::new();
        for sentence in TOY_CORPUS {
            let ids: Vec<u32> = sentence
                .split_whitespace()
                .map(|w| vocab.id_of(w).unwrap_or(UNK_ID))
                .collect();
            let mut prev = BOS;
            for &id in &ids {
                *counts.entry((prev, id)).or_insert(0.0) += 1.0;
                *totals.entry(prev).or_insert(0.0) += 1.0;
                prev = id;
            }
            *counts.entry((prev, EOS)).or_insert(0.0) += 1.0;
            *totals.entry(prev).or_insert(0.0) += 1.0;
        }
        BigramTable {
            vocab,
            counts,
            totals,
        }
    }

    /// Smoothed conditional probability of `next` given `prev`.
    fn prob(&self, prev: u32, next: u32) -> f64 {
        let c = self.counts.get(&(prev, next)).copied().unwrap_or(0.0);
        let t = self.totals.get(&prev).copied().unwrap_or(0.0);
        let classes = self.vocab.len() as f64 + 1.0; // plus end-of-sentence
        (c + SMOOTHING) / (t + SMOOTHING * classes)
    }
}

/// Masked LM proposing substitutes scored by bigram fit with both neighbors.
pub struct ToyMaskedLm {
    table: BigramTable,
}

impl ToyMaskedLm {
    pub fn new() -> Self {
        ToyMaskedLm {
            table: BigramTable::build(),
        }
    }
}

impl Default for ToyMaskedLm {
    fn default() -> Self {
        Self::new()
    }
}

impl MaskedLm for ToyMaskedLm {
    fn model_id(&self) -> &str {
        "toy-bigram-mlm"
    }

    fn topk(&self, token_ids: &[u32], position: usize, k: usize) -> Result<Vec<MlmCandidate>> {
        let prev = if position == 0 {
            BOS
        } else {
            token_ids[position - 1]
        };
        let next = if position + 1 == token_ids.len() {
            EOS
        } else {
            token_ids[position + 1]
        };
        let vocab = &self.table.vocab;
        let mut scored: Vec<(u32, f64)> = (0..vocab.len() as u32)
            .filter(|&id| !vocab.is_special(id))
            .map(|id| (id, self.table.prob(prev, id) * self.table.prob(id, next)))
            .collect();
        let z: f64 = scored.iter().map(|(_, s)| s).sum();
        for (_, s) in scored.iter_mut() {
            *s /= z;
        }
        scored.sort_by(|a, b| {
            b.1.partial_cmp(&a.1)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.0.cmp(&b.0))
        });
        scored.truncate(k);
        Ok(scored
            .into_iter()
            .map(|(id, p)| MlmCandidate {
                token_id: id,
                surface: vocab.surface(id).unwrap_or(UNK_TOKEN).to_string(),
                probability: p,
            })
            .collect())
    }
}

/// Masked LM stub that proposes the whole (non-special) vocabulary for every
/// position with a flat ranking; pairs with random toy classifiers in search
/// tests where the candidate pool must not restrict the reachable flips.
pub struct FullVocabMaskedLm {
    vocab: Vocabulary,
}

impl FullVocabMaskedLm {
    pub fn for_classifier(classifier: &dyn TextClassifier) -> Self {
        FullVocabMaskedLm {
            vocab: classifier.vocab().clone(),
        }
    }
}

impl MaskedLm for FullVocabMaskedLm {
    fn model_id(&self) -> &str {
        "stub-full-vocab-mlm"
    }

    fn topk(&self, _token_ids: &[u32], _position: usize, k: usize) -> Result<Vec<MlmCandidate>> {
        let ids: Vec<u32> = (0..self.vocab.len() as u32)
            .filter(|&id| !self.vocab.is_special(id))
            .collect();
        let n = ids.len() as f64;
        Ok(ids
            .into_iter()
            .enumerate()
            .take(k)
            .map(|(rank, id)| MlmCandidate {
                token_id: id,
                surface: self.vocab.surface(id).unwrap_or(UNK_TOKEN).to_string(),
                // strictly decreasing so ordering is well defined
                probability: (n - rank as f64) / (n * (n + 1.0) / 2.0),
            })
            .collect())
    }
}

/// Bigram causal scorer over the toy corpus. The first token is scored against
/// the start-of-sentence distribution, which also covers one-token inputs.
pub struct BigramScorer {
    table: BigramTable,
}

impl BigramScorer {
    pub fn new() -> Self {
        BigramScorer {
            table: BigramTable::build(),
        }
    }
}

impl Default for BigramScorer {
    fn default() -> Self {
        Self::new()
    }
}

impl CausalScorer for BigramScorer {
    fn model_id(&self) -> &str {
        "toy-bigram-lm"
    }

    fn sequence_perplexity(&self, text: &str) -> Result<f64> {
        let ids: Vec<u32> = text
            .split_whitespace()
            .map(|w| self.table.vocab.id_of(w).unwrap_or(UNK_ID))
            .collect();
        if ids.is_empty() {
            return Err(Error::InvalidInput("cannot score empty text".into()));
        }
        if ids.len() == 1 {
            log::debug!("single-token input scored against the start-of-sentence distribution");
        }
        let mut nll = 0.0;
        let mut prev = BOS;
        for &id in &ids {
            nll -= self.table.prob(prev, id).ln();
            prev = id;
        }
        Ok((nll / ids.len() as f64).exp())
    }
}

/// Scorer whose conditional distribution is uniform over a fixed vocabulary
/// size: perplexity is exactly that size for any text.
pub struct UniformScorer {
    pub vocab_size: usize,
}

impl CausalScorer for UniformScorer {
    fn model_id(&self) -> &str {
        "stub-uniform-lm"
    }

    fn sequence_perplexity(&self, text: &str) -> Result<f64> {
        if text.split_whitespace().next().is_none() {
            return Err(Error::InvalidInput("cannot score empty text".into()));
        }
        Ok(self.vocab_size as f64)
    }
}
