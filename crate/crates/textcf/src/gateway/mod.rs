//! Uniform access to the models the generation methods need: the binary
//! classifier under explanation (predictions, logits, input-embedding
//! gradients), a masked language model for substitute proposals, a causal
//! language model for perplexity, and a chat endpoint with a persistent
//! response cache.
//!
//! Backends are trait objects so the same search and metric code runs against
//! in-process toy models (tests, CI, the `--mock-llm` mode) or a model server
//! speaking the HTTP protocol in [`http`].

pub mod cache;
pub mod chat;
pub mod http;
pub mod toy;
pub mod types;

use std::sync::{Arc, Mutex};

use ndarray::Array2;

use crate::error::{Error, Result};
pub use chat::{ChatBackend, ChatClient, ChatClientConfig, MockChat, OpenAiChat};
pub use types::{
    ChatExchange, ClassifierOutput, DecodingParams, GradientMatrix, Label, MlmCandidate,
    TokenSequence, Vocabulary,
};

/// Binary text classifier with white-box access where the backend supports it.
pub trait TextClassifier: Send + Sync {
    fn model_id(&self) -> &str;

    /// Maximum input length in tokens; longer inputs are truncated upstream.
    fn max_tokens(&self) -> usize {
        512
    }

    fn vocab(&self) -> &Vocabulary;

    fn tokenize(&self, text: &str) -> Result<TokenSequence>;

    /// Inverse of tokenization for surface forms (joins subwords where the
    /// backend uses them).
    fn detokenize(&self, surfaces: &[String]) -> String;

    fn classify_tokens(&self, token_ids: &[u32]) -> Result<ClassifierOutput>;

    /// Gradient of the `target` label's logit with respect to each input
    /// embedding. Backends without gradient access return a capability error.
    fn gradients(&self, token_ids: &[u32], target: Label) -> Result<GradientMatrix>;

    /// Full input-embedding table, one row per vocabulary id.
    fn embeddings(&self) -> Result<Arc<Array2<f64>>>;

    /// Whether concurrent inference calls are safe.
    fn reentrant(&self) -> bool {
        true
    }
}

/// Masked language model proposing in-vocabulary substitutes for one position.
pub trait MaskedLm: Send + Sync {
    fn model_id(&self) -> &str;

    /// Top candidates for `position` with the current token masked. Returned
    /// token ids live in the classifier vocabulary.
    fn topk(&self, token_ids: &[u32], position: usize, k: usize) -> Result<Vec<MlmCandidate>>;

    fn reentrant(&self) -> bool {
        true
    }
}

/// Causal language model used only to score text fluency.
pub trait CausalScorer: Send + Sync {
    fn model_id(&self) -> &str;

    fn sequence_perplexity(&self, text: &str) -> Result<f64>;

    fn reentrant(&self) -> bool {
        true
    }
}

/// Facade over the configured backends. Cheap to clone; backends are shared.
#[derive(Clone)]
pub struct Gateway {
    classifier: Arc<dyn TextClassifier>,
    masked_lm: Option<Arc<dyn MaskedLm>>,
    scorer: Option<Arc<dyn CausalScorer>>,
    chat: Option<Arc<ChatClient>>,
    /// Serializes inference when a backend declares itself non-reentrant.
    inference_lock: Arc<Mutex<()>>,
}

impl Gateway {
    pub fn new(classifier: Arc<dyn TextClassifier>) -> Self {
        Gateway {
            classifier,
            masked_lm: None,
            scorer: None,
            chat: None,
            inference_lock: Arc::new(Mutex::new(())),
        }
    }

    pub fn with_masked_lm(mut self, mlm: Arc<dyn MaskedLm>) -> Self {
        self.masked_lm = Some(mlm);
        self
    }

    pub fn with_scorer(mut self, scorer: Arc<dyn CausalScorer>) -> Self {
        self.scorer = Some(scorer);
        self
    }

    pub fn with_chat(mut self, chat: ChatClient) -> Self {
        self.chat = Some(Arc::new(chat));
        self
    }

    pub fn classifier(&self) -> &Arc<dyn TextClassifier> {
        &self.classifier
    }

    pub fn classifier_model_id(&self) -> &str {
        self.classifier.model_id()
    }

    pub fn scorer_model_id(&self) -> Option<&str> {
        self.scorer.as_deref().map(|s| s.model_id())
    }

    pub fn chat_model_id(&self) -> Option<String> {
        self.chat.as_deref().map(|c| c.model_id().to_string())
    }

    pub fn has_masked_lm(&self) -> bool {
        self.masked_lm.is_some()
    }

    pub fn has_scorer(&self) -> bool {
        self.scorer.is_some()
    }

    pub fn has_chat(&self) -> bool {
        self.chat.is_some()
    }

    fn guard<T>(&self, reentrant: bool, f: impl FnOnce() -> Result<T>) -> Result<T> {
        if reentrant {
            f()
        } else {
            let _lock = self.inference_lock.lock().expect("inference lock poisoned");
            f()
        }
    }

    /// Classify raw text. Deterministic for fixed weights and text.
    pub fn classify(&self, text: &str) -> Result<ClassifierOutput> {
        let (tokens, _) = self.tokenize_checked(text)?;
        self.classify_tokens(&tokens.token_ids)
    }

    /// Classify an explicit token-id sequence (search-internal path).
    pub fn classify_tokens(&self, token_ids: &[u32]) -> Result<ClassifierOutput> {
        if token_ids.is_empty() {
            return Err(Error::InvalidInput("cannot classify an empty sequence".into()));
        }
        self.guard(self.classifier.reentrant(), || {
            self.classifier.classify_tokens(token_ids)
        })
    }

    /// Tokenize text, truncating to the classifier's maximum length.
    pub fn tokenize(&self, text: &str) -> Result<TokenSequence> {
        Ok(self.tokenize_checked(text)?.0)
    }

    /// Tokenize and report whether truncation happened so callers can record
    /// the warning in result metadata.
    pub fn tokenize_checked(&self, text: &str) -> Result<(TokenSequence, bool)> {
        if text.trim().is_empty() {
            return Err(Error::InvalidInput("input text is empty".into()));
        }
        let mut tokens = self.classifier.tokenize(text)?;
        let max = self.classifier.max_tokens();
        let truncated = tokens.len() > max;
        if truncated {
            log::warn!(
                "input of {} tokens truncated to classifier maximum {}",
                tokens.len(),
                max
            );
            tokens.token_ids.truncate(max);
            tokens.surface_tokens.truncate(max);
            tokens.char_offsets.truncate(max);
        }
        Ok((tokens, truncated))
    }

    pub fn detokenize(&self, surfaces: &[String]) -> String {
        self.classifier.detokenize(surfaces)
    }

    /// Gradient of the target-label logit with respect to each position's
    /// input embedding.
    pub fn embedding_gradients(
        &self,
        tokens: &TokenSequence,
        target: Label,
    ) -> Result<GradientMatrix> {
        self.embedding_gradients_for_ids(&tokens.token_ids, target)
    }

    /// Gradient computation on an explicit id sequence (search-internal path
    /// for edited states).
    pub fn embedding_gradients_for_ids(
        &self,
        token_ids: &[u32],
        target: Label,
    ) -> Result<GradientMatrix> {
        let grads = self.guard(self.classifier.reentrant(), || {
            self.classifier.gradients(token_ids, target)
        })?;
        if grads.rows() != token_ids.len() {
            return Err(Error::Capability(format!(
                "backend returned {} gradient rows for {} tokens",
                grads.rows(),
                token_ids.len()
            )));
        }
        Ok(grads)
    }

    /// Top-k substitute candidates for one position, current token masked.
    /// Sorted by probability descending with no duplicate tokens.
    pub fn mlm_topk(
        &self,
        tokens: &TokenSequence,
        position: usize,
        k: usize,
    ) -> Result<Vec<MlmCandidate>> {
        let mlm = self
            .masked_lm
            .as_ref()
            .ok_or_else(|| Error::Capability("no masked language model configured".into()))?;
        if position >= tokens.len() {
            return Err(Error::InvalidInput(format!(
                "mask position {} out of range for {} tokens",
                position,
                tokens.len()
            )));
        }
        if k == 0 {
            return Err(Error::InvalidInput("k must be at least 1".into()));
        }
        let mut cands =
            self.guard(mlm.reentrant(), || mlm.topk(&tokens.token_ids, position, k))?;
        cands.retain(|c| c.probability > 0.0 && c.probability <= 1.0);
        cands.sort_by(|a, b| {
            b.probability
                .partial_cmp(&a.probability)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.token_id.cmp(&b.token_id))
        });
        cands.dedup_by_key(|c| c.token_id);
        cands.truncate(k);
        Ok(cands)
    }

    /// Exponentiated mean token negative log-likelihood under the causal LM.
    pub fn sequence_perplexity(&self, text: &str) -> Result<f64> {
        let scorer = self
            .scorer
            .as_ref()
            .ok_or_else(|| Error::Capability("no perplexity scorer configured".into()))?;
        if text.trim().is_empty() {
            return Err(Error::InvalidInput("cannot score empty text".into()));
        }
        self.guard(scorer.reentrant(), || scorer.sequence_perplexity(text))
    }

    /// Chat completion through the cache, retry, and rate-limit stack.
    pub fn chat_complete(
        &self,
        system_prompt: &str,
        user_prompt: &str,
        decoding: &DecodingParams,
    ) -> Result<String> {
        let chat = self
            .chat
            .as_ref()
            .ok_or_else(|| Error::Capability("no chat endpoint configured".into()))?;
        chat.complete(system_prompt, user_prompt, decoding)
    }
}

#[cfg(test)]
mod tests {
    use super::toy::ToyLinearClassifier;
    use super::*;

    fn sentiment_gateway() -> Gateway {
        Gateway::new(Arc::new(ToyLinearClassifier::sentiment()))
    }

    #[test]
    fn classify_rejects_empty_text() {
        let gw = sentiment_gateway();
        assert!(matches!(gw.classify(""), Err(Error::InvalidInput(_))));
        assert!(matches!(gw.classify("   "), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn classify_sentiment_examples() {
        let gw = sentiment_gateway();
        // Positive-sentiment regression fixtures for the built-in toy model.
        assert_eq!(gw.classify("i loved the movie").unwrap().label, 1);
        assert_eq!(gw.classify("i liked the movie").unwrap().label, 1);
        assert_eq!(gw.classify("i hated the movie").unwrap().label, 0);
    }

    #[test]
    fn classify_is_deterministic() {
        let gw = sentiment_gateway();
        let first = gw.classify("i loved the movie").unwrap();
        for _ in 0..100 {
            let again = gw.classify("i loved the movie").unwrap();
            assert_eq!(again.label, first.label);
            assert_eq!(again.logits, first.logits);
            assert_eq!(again.probabilities, first.probabilities);
        }
    }

    #[test]
    fn tokenize_reports_truncation() {
        let gw = sentiment_gateway();
        let long = vec!["movie"; 600].join(" ");
        let (tokens, truncated) = gw.tokenize_checked(&long).unwrap();
        assert!(truncated);
        assert_eq!(tokens.len(), gw.classifier().max_tokens());
    }

    #[test]
    fn mlm_topk_requires_backend() {
        let gw = sentiment_gateway();
        let tokens = gw.tokenize("i loved the movie").unwrap();
        assert!(matches!(
            gw.mlm_topk(&tokens, 1, 5),
            Err(Error::Capability(_))
        ));
    }
}
