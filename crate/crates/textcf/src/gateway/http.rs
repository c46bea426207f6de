//! Backends that talk to an external model server over a small JSON protocol,
//! so the toolkit can drive real classifier/MLM/LM weights hosted by any
//! process (see `scripts/serve_models.py` for a reference server).
//!
//! Endpoints, all rooted at a configured base URL:
//!
//! - `GET  /info`            -> `{model_id, max_tokens, vocab: [..], special_ids: [..]}`
//! - `POST /classify_tokens` -> `{token_ids}` to `{logits: [f64; 2]}`
//! - `POST /tokenize`        -> `{text}` to `{token_ids, surface_tokens, char_offsets}`
//! - `POST /gradients`       -> `{token_ids, target_label}` to `{values: [[f64]]}`
//! - `GET  /embeddings`      -> `{vocab_size, dim, data_b64}` (little-endian f32)
//! - `POST /mlm_topk`        -> `{token_ids, position, k}` to `{candidates: [..]}`
//! - `POST /perplexity`      -> `{text}` to `{perplexity}`

use std::sync::{Arc, OnceLock};
use std::time::Duration;

use ndarray::Array2;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::gateway::types::{
    ClassifierOutput, GradientMatrix, Label, MlmCandidate, TokenSequence, Vocabulary,
};
use crate::gateway::{CausalScorer, MaskedLm, TextClassifier};

fn http_client() -> reqwest::blocking::Client {
    reqwest::blocking::Client::builder()
        .timeout(Duration::from_secs(600))
        .build()
        .expect("reqwest client")
}

fn post_json<T: for<'de> Deserialize<'de>>(
    client: &reqwest::blocking::Client,
    url: &str,
    body: &serde_json::Value,
) -> Result<T> {
    let response = client
        .post(url)
        .json(body)
        .send()
        .map_err(|e| Error::GatewayUnavailable(format!("{url}: {e}")))?;
    let status = response.status();
    if status.as_u16() == 501 {
        return Err(Error::Capability(format!("{url}: not supported by server")));
    }
    if !status.is_success() {
        let detail = response.text().unwrap_or_default();
        return Err(Error::GatewayUnavailable(format!("{url}: {status} {detail}")));
    }
    response
        .json()
        .map_err(|e| Error::GatewayUnavailable(format!("{url}: bad response: {e}")))
}

fn get_json<T: for<'de> Deserialize<'de>>(
    client: &reqwest::blocking::Client,
    url: &str,
) -> Result<T> {
    let response = client
        .get(url)
        .send()
        .map_err(|e| Error::GatewayUnavailable(format!("{url}: {e}")))?;
    if !response.status().is_success() {
        return Err(Error::GatewayUnavailable(format!(
            "{url}: {}",
            response.status()
        )));
    }
    response
        .json()
        .map_err(|e| Error::GatewayUnavailable(format!("{url}: bad response: {e}")))
}

#[derive(Deserialize)]
struct InfoResponse {
    model_id: String,
    max_tokens: usize,
    vocab: Vec<String>,
    special_ids: Vec<u32>,
}

#[derive(Deserialize)]
struct EmbeddingsResponse {
    vocab_size: usize,
    dim: usize,
    data_b64: String,
}

/// Classifier served over HTTP. Vocabulary and limits are fetched once at
/// connect time; the embedding table on first use.
pub struct HttpClassifier {
    base: String,
    client: reqwest::blocking::Client,
    model_id: String,
    max_tokens: usize,
    vocab: Vocabulary,
    embeddings: OnceLock<Arc<Array2<f64>>>,
}

impl HttpClassifier {
    pub fn connect(base_url: &str) -> Result<Self> {
        let base = base_url.trim_end_matches('/').to_string();
        let client = http_client();
        let info: InfoResponse = get_json(&client, &format!("{base}/info"))?;
        Ok(HttpClassifier {
            base,
            client,
            model_id: info.model_id,
            max_tokens: info.max_tokens,
            vocab: Vocabulary::new(info.vocab, &info.special_ids),
            embeddings: OnceLock::new(),
        })
    }

    fn fetch_embeddings(&self) -> Result<Arc<Array2<f64>>> {
        let resp: EmbeddingsResponse =
            get_json(&self.client, &format!("{}/embeddings", self.base))?;
        let bytes = decode_base64(&resp.data_b64)
            .ok_or_else(|| Error::GatewayUnavailable("embeddings: invalid base64".into()))?;
        let expected = resp.vocab_size * resp.dim * 4;
        if bytes.len() != expected {
            return Err(Error::GatewayUnavailable(format!(
                "embeddings: expected {expected} bytes, got {}",
                bytes.len()
            )));
        }
        let mut values = Vec::with_capacity(resp.vocab_size * resp.dim);
        for chunk in bytes.chunks_exact(4) {
            values.push(f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]) as f64);
        }
        let table = Array2::from_shape_vec((resp.vocab_size, resp.dim), values)
            .map_err(|e| Error::GatewayUnavailable(format!("embeddings: bad shape: {e}")))?;
        Ok(Arc::new(table))
    }
}

impl TextClassifier for HttpClassifier {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn max_tokens(&self) -> usize {
        self.max_tokens
    }

    fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    fn tokenize(&self, text: &str) -> Result<TokenSequence> {
        #[derive(Deserialize)]
        struct TokenizeResponse {
            token_ids: Vec<u32>,
            surface_tokens: Vec<String>,
            char_offsets: Vec<(usize, usize)>,
        }
        let resp: TokenizeResponse = post_json(
            &self.client,
            &format!("{}/tokenize", self.base),
            &serde_json::json!({ "text": text }),
        )?;
        TokenSequence::new(resp.token_ids, resp.surface_tokens, resp.char_offsets)
    }

    fn detokenize(&self, surfaces: &[String]) -> String {
        // WordPiece joining: continuation pieces glue onto the previous token.
        let mut out = String::new();
        for s in surfaces {
            if let Some(rest) = s.strip_prefix("##") {
                out.push_str(rest);
            } else {
                if !out.is_empty() {
                    out.push(' ');
                }
                out.push_str(s);
            }
        }
        out
    }

    fn classify_tokens(&self, token_ids: &[u32]) -> Result<ClassifierOutput> {
        #[derive(Deserialize)]
        struct ClassifyResponse {
            logits: [f64; 2],
        }
        let resp: ClassifyResponse = post_json(
            &self.client,
            &format!("{}/classify_tokens", self.base),
            &serde_json::json!({ "token_ids": token_ids }),
        )?;
        Ok(ClassifierOutput::from_logits(resp.logits))
    }

    fn gradients(&self, token_ids: &[u32], target: Label) -> Result<GradientMatrix> {
        #[derive(Deserialize)]
        struct GradientsResponse {
            values: Vec<Vec<f64>>,
        }
        let resp: GradientsResponse = post_json(
            &self.client,
            &format!("{}/gradients", self.base),
            &serde_json::json!({ "token_ids": token_ids, "target_label": target }),
        )?;
        let rows = resp.values.len();
        let cols = resp.values.first().map(|r| r.len()).unwrap_or(0);
        let flat: Vec<f64> = resp.values.into_iter().flatten().collect();
        let values = Array2::from_shape_vec((rows, cols), flat)
            .map_err(|e| Error::GatewayUnavailable(format!("gradients: bad shape: {e}")))?;
        GradientMatrix::new(values, target)
    }

    fn embeddings(&self) -> Result<Arc<Array2<f64>>> {
        if let Some(table) = self.embeddings.get() {
            return Ok(Arc::clone(table));
        }
        let table = self.fetch_embeddings()?;
        Ok(Arc::clone(self.embeddings.get_or_init(|| table)))
    }
}

/// Masked LM endpoint on a model server.
pub struct HttpMaskedLm {
    base: String,
    client: reqwest::blocking::Client,
    model_id: String,
}

impl HttpMaskedLm {
    pub fn connect(base_url: &str) -> Result<Self> {
        let base = base_url.trim_end_matches('/').to_string();
        let client = http_client();
        let info: InfoResponse = get_json(&client, &format!("{base}/info"))?;
        Ok(HttpMaskedLm {
            base,
            client,
            model_id: info.model_id,
        })
    }
}

impl MaskedLm for HttpMaskedLm {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn topk(&self, token_ids: &[u32], position: usize, k: usize) -> Result<Vec<MlmCandidate>> {
        #[derive(Deserialize)]
        struct Candidate {
            token_id: u32,
            surface: String,
            probability: f64,
        }
        #[derive(Deserialize)]
        struct TopkResponse {
            candidates: Vec<Candidate>,
        }
        let resp: TopkResponse = post_json(
            &self.client,
            &format!("{}/mlm_topk", self.base),
            &serde_json::json!({ "token_ids": token_ids, "position": position, "k": k }),
        )?;
        Ok(resp
            .candidates
            .into_iter()
            .map(|c| MlmCandidate {
                token_id: c.token_id,
                surface: c.surface,
                probability: c.probability,
            })
            .collect())
    }
}

/// Perplexity endpoint on a model server.
pub struct HttpScorer {
    base: String,
    client: reqwest::blocking::Client,
    model_id: String,
}

impl HttpScorer {
    pub fn connect(base_url: &str) -> Result<Self> {
        let base = base_url.trim_end_matches('/').to_string();
        let client = http_client();
        let info: InfoResponse = get_json(&client, &format!("{base}/info"))?;
        Ok(HttpScorer {
            base,
            client,
            model_id: info.model_id,
        })
    }
}

impl CausalScorer for HttpScorer {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn sequence_perplexity(&self, text: &str) -> Result<f64> {
        #[derive(Deserialize)]
        struct PerplexityResponse {
            perplexity: f64,
        }
        let resp: PerplexityResponse = post_json(
            &self.client,
            &format!("{}/perplexity", self.base),
            &serde_json::json!({ "text": text }),
        )?;
        Ok(resp.perplexity)
    }
}

/// Minimal standard base64 decoder (RFC 4648, with padding).
fn decode_base64(input: &str) -> Option<Vec<u8>> {
    fn value(c: u8) -> Option<u32> {
        match c {
            b'A'..=b'Z' => Some((c - b'A') as u32),
            b'a'..=b'z' => Some((c - b'a') as u32 + 26),
            b'0'..=b'9' => Some((c - b'0') as u32 + 52),
            b'+' => Some(62),
            b'/' => Some(63),
            _ => None,
        }
    }
    let stripped: Vec<u8> = input
        .bytes()
        .filter(|b| !b.is_ascii_whitespace())
        .collect();
    let data = stripped.strip_suffix(b"==").or_else(|| stripped.strip_suffix(b"=")).unwrap_or(&stripped);
    let pad = stripped.len() - data.len();
    let mut out = Vec::with_capacity(data.len() * 3 / 4);
    let mut acc: u32 = 0;
    let mut bits = 0u32;
    for &b in data {
        acc = (acc << 6) | value(b)?;
        bits += 6;
        if bits >= 8 {
            bits -= 8;
            out.push(((acc >> bits) & 0xff) as u8);
        }
    }
    if pad > 2 {
        return None;
    }
    Some(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wordpiece_detokenize_merges_continuations() {
        let clf = HttpClassifier {
            base: String::new(),
            client: http_client(),
            model_id: "x".into(),
            max_tokens: 512,
            vocab: Vocabulary::new(vec![], &[]),
            embeddings: OnceLock::new(),
        };
        let parts: Vec<String> = ["un", "##believ", "##able", "movie"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        assert_eq!(clf.detokenize(&parts), "unbelievable movie");
    }

    #[test]
    fn base64_round_trip() {
        assert_eq!(decode_base64("aGVsbG8=").unwrap(), b"hello");
        assert_eq!(decode_base64("aGVsbG8h").unwrap(), b"hello!");
        assert_eq!(decode_base64("aA==").unwrap(), b"h");
        assert!(decode_base64("!!!").is_none());
    }
}
