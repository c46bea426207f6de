//! Domain types shared by all model backends.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Binary class label.
pub type Label = u8;

/// A tokenized text: parallel vectors of vocabulary ids, surface forms and
/// character spans into the source text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSequence {
    pub token_ids: Vec<u32>,
    pub surface_tokens: Vec<String>,
    /// Half-open `(start, end)` byte offsets, non-overlapping and increasing.
    pub char_offsets: Vec<(usize, usize)>,
}

impl TokenSequence {
    pub fn new(
        token_ids: Vec<u32>,
        surface_tokens: Vec<String>,
        char_offsets: Vec<(usize, usize)>,
    ) -> Result<Self> {
        let seq = TokenSequence {
            token_ids,
            surface_tokens,
            char_offsets,
        };
        seq.validate()?;
        Ok(seq)
    }

    pub fn len(&self) -> usize {
        self.token_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.token_ids.is_empty()
    }

    fn validate(&self) -> Result<()> {
        let l = self.token_ids.len();
        if l == 0 {
            return Err(Error::InvalidInput("token sequence is empty".into()));
        }
        if self.surface_tokens.len() != l || self.char_offsets.len() != l {
            return Err(Error::InvalidInput(format!(
                "token sequence field lengths disagree: {} ids, {} surfaces, {} offsets",
                l,
                self.surface_tokens.len(),
                self.char_offsets.len()
            )));
        }
        let mut prev_end = 0usize;
        for &(start, end) in &self.char_offsets {
            if start < prev_end || end < start {
                return Err(Error::InvalidInput(
                    "char offsets must be non-overlapping and increasing".into(),
                ));
            }
            prev_end = end;
        }
        Ok(())
    }
}

/// A classifier verdict: label plus the probability/logit pair behind it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassifierOutput {
    pub label: Label,
    pub probabilities: [f64; 2],
    pub logits: [f64; 2],
}

impl ClassifierOutput {
    /// Build from raw logits; probabilities via softmax, label via argmax.
    pub fn from_logits(logits: [f64; 2]) -> Self {
        let m = logits[0].max(logits[1]);
        let e0 = (logits[0] - m).exp();
        let e1 = (logits[1] - m).exp();
        let z = e0 + e1;
        let probabilities = [e0 / z, e1 / z];
        let label = if logits[1] > logits[0] { 1 } else { 0 };
        ClassifierOutput {
            label,
            probabilities,
            logits,
        }
    }

    pub fn logit(&self, label: Label) -> f64 {
        self.logits[label as usize]
    }

    pub fn probability(&self, label: Label) -> f64 {
        self.probabilities[label as usize]
    }
}

/// Per-position gradient of a target-label logit with respect to the input
/// embeddings: one row per token, one column per embedding dimension.
#[derive(Debug, Clone)]
pub struct GradientMatrix {
    pub values: Array2<f64>,
    pub target_label: Label,
}

impl GradientMatrix {
    pub fn new(values: Array2<f64>, target_label: Label) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(
                "gradient matrix contains non-finite entries".into(),
            ));
        }
        Ok(GradientMatrix {
            values,
            target_label,
        })
    }

    pub fn rows(&self) -> usize {
        self.values.nrows()
    }
}

/// One chat request/response pair as persisted in the response cache.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChatExchange {
    pub cache_key: String,
    pub model_id: String,
    pub system_prompt: String,
    pub user_prompt: String,
    pub response: String,
    pub timestamp: u64,
}

/// Decoding parameters for chat completions. Defaults favor reproducibility.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodingParams {
    pub temperature: f64,
    pub max_tokens: u32,
}

impl Default for DecodingParams {
    fn default() -> Self {
        DecodingParams {
            temperature: 0.0,
            max_tokens: 256,
        }
    }
}

/// Classifier vocabulary: surface forms plus the set of special ids that are
/// never substitution targets or candidates.
#[derive(Debug, Clone)]
pub struct Vocabulary {
    surfaces: Vec<String>,
    special: Vec<bool>,
}

impl Vocabulary {
    pub fn new(surfaces: Vec<String>, special_ids: &[u32]) -> Self {
        let mut special = vec![false; surfaces.len()];
        for &id in special_ids {
            if let Some(flag) = special.get_mut(id as usize) {
                *flag = true;
            }
        }
        Vocabulary { surfaces, special }
    }

    pub fn len(&self) -> usize {
        self.surfaces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.surfaces.is_empty()
    }

    pub fn surface(&self, id: u32) -> Option<&str> {
        self.surfaces.get(id as usize).map(|s| s.as_str())
    }

    pub fn is_special(&self, id: u32) -> bool {
        self.special.get(id as usize).copied().unwrap_or(false)
    }

    pub fn id_of(&self, surface: &str) -> Option<u32> {
        self.surfaces.iter().position(|s| s == surface).map(|i| i as u32)
    }
}

/// Candidate substitute proposed by a masked language model, already mapped
/// into the classifier vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct MlmCandidate {
    pub token_id: u32,
    pub surface: String,
    pub probability: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::arr2;

    #[test]
    fn classifier_output_softmax_is_consistent() {
        let out = ClassifierOutput::from_logits([0.3, 1.7]);
        assert_eq!(out.label, 1);
        assert!((out.probabilities[0] + out.probabilities[1] - 1.0).abs() < 1e-12);
        assert!(out.probabilities.iter().all(|p| (0.0..=1.0).contains(p)));
        // argmax(logits) == argmax(probabilities) == label
        assert_eq!(out.logits[1] > out.logits[0], out.label == 1);
        assert_eq!(
            out.probabilities[1] > out.probabilities[0],
            out.label == 1
        );
    }

    #[test]
    fn token_sequence_rejects_overlapping_offsets() {
        let err = TokenSequence::new(
            vec![1, 2],
            vec!["a".into(), "b".into()],
            vec![(0, 3), (2, 4)],
        );
        assert!(err.is_err());
    }

    #[test]
    fn token_sequence_rejects_empty() {
        assert!(TokenSequence::new(vec![], vec![], vec![]).is_err());
    }

    #[test]
    fn gradient_matrix_rejects_nan() {
        let m = arr2(&[[0.0, f64::NAN]]);
        assert!(GradientMatrix::new(m, 0).is_err());
    }
}
