//! Gradient-guided substitution beam search shared by the white-box methods:
//! first-order candidate scoring from input-embedding gradients, deterministic
//! beam expansion with exact re-classification of survivors, and the result
//! record every generation method produces.

pub mod hotflip;

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::Arc;

use ndarray::ArrayView1;
use serde::{Deserialize, Serialize};

use crate::data::DatasetName;
use crate::error::{Error, Result};
use crate::gateway::{ClassifierOutput, Gateway, GradientMatrix, Label, TokenSequence};

/// Result record schema version, bumped on any persisted-field change.
pub const RESULT_SCHEMA: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Hotflip,
    Closs,
    Polyjuice,
    FizleNaive,
    FizleGuided,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Hotflip,
        Method::Closs,
        Method::Polyjuice,
        Method::FizleNaive,
        Method::FizleGuided,
    ];
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Method::Hotflip => "hotflip",
            Method::Closs => "closs",
            Method::Polyjuice => "polyjuice",
            Method::FizleNaive => "fizle-naive",
            Method::FizleGuided => "fizle-guided",
        };
        write!(f, "{name}")
    }
}

/// Search hyperparameters. Defaults are the reference experiment's settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchConfig {
    /// Monte-Carlo draws per substitution-value estimate.
    pub w: usize,
    /// Beam width.
    pub b: usize,
    /// Candidate substitutions kept per position.
    pub k: usize,
    /// Maximum fraction of tokens the gradient search may modify.
    pub t: f64,
    /// Maximum fraction of tokens the candidate-pool search may modify.
    pub substitutions_after_loc: f64,
    pub seed: u64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            w: 5,
            b: 15,
            k: 30,
            t: 0.3,
            substitutions_after_loc: 0.3,
            seed: 0,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.w == 0 || self.b == 0 || self.k == 0 {
            return Err(Error::InvalidInput("w, b, and k must be positive".into()));
        }
        for (name, v) in [("t", self.t), ("substitutions_after_loc", self.substitutions_after_loc)] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::InvalidInput(format!("{name} must lie in (0, 1]")));
            }
        }
        Ok(())
    }

    /// Edit budget for a sequence of `len` tokens; at least one edit is always
    /// allowed even when the fraction rounds down to zero.
    pub fn max_edits(&self, len: usize) -> usize {
        ((self.t * len as f64).floor() as usize).max(1)
    }

    /// Edit budget under the candidate-pool cap.
    pub fn max_pool_edits(&self, len: usize) -> usize {
        ((self.substitutions_after_loc * len as f64).floor() as usize).max(1)
    }
}

/// Memoizes exact classifier calls on token-id sequences within one search.
#[derive(Default)]
pub struct ClassifyCache {
    map: HashMap<Vec<u32>, ClassifierOutput>,
    calls: usize,
}

impl ClassifyCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn classify(&mut self, gw: &Gateway, ids: &[u32]) -> Result<ClassifierOutput> {
        if let Some(hit) = self.map.get(ids) {
            return Ok(*hit);
        }
        let out = gw.classify_tokens(ids)?;
        self.calls += 1;
        self.map.insert(ids.to_vec(), out);
        Ok(out)
    }

    pub fn model_calls(&self) -> usize {
        self.calls
    }
}

/// A partial solution: the base tokens plus applied substitutions, with the
/// classifier output for the edited sequence always kept current.
#[derive(Debug, Clone)]
pub struct SubstitutionState {
    base: Arc<TokenSequence>,
    edits: BTreeMap<usize, u32>,
    output: ClassifierOutput,
    /// Ranking value: the exact flip-class logit of the edited sequence.
    score: f64,
}

impl SubstitutionState {
    /// The unedited root state.
    pub fn root(
        gw: &Gateway,
        cache: &mut ClassifyCache,
        base: Arc<TokenSequence>,
        flip_label: Label,
    ) -> Result<Self> {
        Self::with_edits(gw, cache, base, BTreeMap::new(), flip_label)
    }

    /// Build a state for an explicit edit set, classifying the edited
    /// sequence so the cached output can never be stale.
    pub fn with_edits(
        gw: &Gateway,
        cache: &mut ClassifyCache,
        base: Arc<TokenSequence>,
        edits: BTreeMap<usize, u32>,
        flip_label: Label,
    ) -> Result<Self> {
        for &pos in edits.keys() {
            if pos >= base.len() {
                return Err(Error::InvalidInput(format!(
                    "edit position {pos} out of range for {} tokens",
                    base.len()
                )));
            }
        }
        let ids = apply_edits(&base, &edits);
        let output = cache.classify(gw, &ids)?;
        let score = output.logit(flip_label);
        Ok(SubstitutionState {
            base,
            edits,
            output,
            score,
        })
    }

    pub fn base(&self) -> &TokenSequence {
        &self.base
    }

    pub fn edits(&self) -> &BTreeMap<usize, u32> {
        &self.edits
    }

    pub fn edit_count(&self) -> usize {
        self.edits.len()
    }

    pub fn output(&self) -> ClassifierOutput {
        self.output
    }

    pub fn score(&self) -> f64 {
        self.score
    }

    /// Token ids of the edited sequence.
    pub fn token_ids(&self) -> Vec<u32> {
        apply_edits(&self.base, &self.edits)
    }

    /// Surface forms of the edited sequence.
    pub fn surfaces(&self, gw: &Gateway) -> Vec<String> {
        let vocab = gw.classifier().vocab();
        self.base
            .surface_tokens
            .iter()
            .enumerate()
            .map(|(i, s)| match self.edits.get(&i) {
                Some(&id) => vocab.surface(id).unwrap_or(s).to_string(),
                None => s.clone(),
            })
            .collect()
    }

    pub fn current_token(&self, position: usize) -> u32 {
        self.edits
            .get(&position)
            .copied()
            .unwrap_or(self.base.token_ids[position])
    }
}

fn apply_edits(base: &TokenSequence, edits: &BTreeMap<usize, u32>) -> Vec<u32> {
    let mut ids = base.token_ids.clone();
    for (&pos, &id) in edits {
        ids[pos] = id;
    }
    ids
}

/// Ranked substitution candidates for one position.
#[derive(Debug, Clone)]
pub struct PositionCandidates {
    pub position: usize,
    /// `(token id, estimated flip-logit gain)`, best first.
    pub candidates: Vec<(u32, f64)>,
}

/// First-order value of swapping `current` for `candidate` at a position with
/// gradient row `grad_row`: the inner product of the embedding displacement
/// with the gradient. Exact for linear models, an estimate otherwise.
pub fn substitution_value(
    embeddings: &ndarray::Array2<f64>,
    grad_row: ArrayView1<'_, f64>,
    current: u32,
    candidate: u32,
) -> f64 {
    let displacement = &embeddings.row(candidate as usize) - &embeddings.row(current as usize);
    displacement.dot(&grad_row)
}

/// Rank the top-k substitutions per position by first-order flip-logit gain.
/// Positions already edited and special-token positions produce no entries;
/// special tokens and the incumbent token are never candidates.
pub fn score_candidates(
    gw: &Gateway,
    state: &SubstitutionState,
    gradients: &GradientMatrix,
    k: usize,
) -> Result<Vec<PositionCandidates>> {
    let classifier = gw.classifier();
    let vocab = classifier.vocab();
    let embeddings = classifier.embeddings()?;
    let len = state.base().len();
    if gradients.rows() != len {
        return Err(Error::InvalidInput(format!(
            "gradient rows ({}) do not match sequence length ({len})",
            gradients.rows()
        )));
    }
    let mut out = Vec::new();
    for position in 0..len {
        if state.edits().contains_key(&position) {
            continue;
        }
        let current = state.current_token(position);
        if vocab.is_special(current) {
            continue;
        }
        let row = gradients.values.row(position);
        // score every vocabulary embedding against this row in one pass
        let projected = embeddings.dot(&row);
        let current_score = projected[current as usize];
        let mut ranked: Vec<(u32, f64)> = (0..vocab.len() as u32)
            .filter(|&id| id != current && !vocab.is_special(id))
            .map(|id| (id, projected[id as usize] - current_score))
            .collect();
        ranked.sort_by(|a, b| {
            b.1.partial_cmp(&a.1)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.0.cmp(&b.0))
        });
        ranked.truncate(k);
        if !ranked.is_empty() {
            out.push(PositionCandidates {
                position,
                candidates: ranked,
            });
        }
    }
    Ok(out)
}

/// Expand every beam state by one new edit, rank children by estimated score
/// (parent's exact score plus the candidate value), keep the top `b`, and
/// classify each survivor exactly. Ties break on (position, token id); equal
/// edit sets reached through different parents are merged.
pub fn beam_step(
    gw: &Gateway,
    cache: &mut ClassifyCache,
    beams: &[SubstitutionState],
    candidates: &[Vec<PositionCandidates>],
    b: usize,
    max_edits: usize,
    flip_label: Label,
) -> Result<Vec<SubstitutionState>> {
    debug_assert_eq!(beams.len(), candidates.len());
    struct Child {
        parent: usize,
        position: usize,
        token: u32,
        estimate: f64,
    }
    let mut children: Vec<Child> = Vec::new();
    for (parent_idx, (parent, per_position)) in beams.iter().zip(candidates).enumerate() {
        if parent.edit_count() >= max_edits {
            continue;
        }
        for pc in per_position {
            if parent.edits().contains_key(&pc.position) {
                continue;
            }
            for &(token, value) in &pc.candidates {
                children.push(Child {
                    parent: parent_idx,
                    position: pc.position,
                    token,
                    estimate: parent.score() + value,
                });
            }
        }
    }
    // Merge duplicates (same resulting edit set), keeping the best estimate.
    let mut best: HashMap<Vec<(usize, u32)>, usize> = HashMap::new();
    let mut merged: Vec<(Vec<(usize, u32)>, Child)> = Vec::new();
    for child in children {
        let mut key: Vec<(usize, u32)> = beams[child.parent]
            .edits()
            .iter()
            .map(|(&p, &t)| (p, t))
            .collect();
        key.push((child.position, child.token));
        key.sort_unstable();
        match best.get(&key) {
            Some(&idx) if merged[idx].1.estimate >= child.estimate => {}
            Some(&idx) => merged[idx].1 = child,
            None => {
                best.insert(key.clone(), merged.len());
                merged.push((key, child));
            }
        }
    }
    merged.sort_by(|(ka, a), (kb, b)| {
        b.estimate
            .partial_cmp(&a.estimate)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| (a.position, a.token).cmp(&(b.position, b.token)))
            .then_with(|| ka.cmp(kb))
    });
    merged.truncate(b);

    let mut out = Vec::with_capacity(merged.len());
    for (_, child) in merged {
        let parent = &beams[child.parent];
        let mut edits = parent.edits().clone();
        edits.insert(child.position, child.token);
        out.push(SubstitutionState::with_edits(
            gw,
            cache,
            Arc::clone(&parent.base),
            edits,
            flip_label,
        )?);
    }
    Ok(out)
}

/// One generated counterfactual (or recorded failure) for one example.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterfactualResult {
    pub schema: u32,
    pub example_id: String,
    pub dataset: DatasetName,
    pub method: Method,
    pub original_text: String,
    pub counterfactual_text: Option<String>,
    pub original_label: u8,
    pub counterfactual_label: Option<u8>,
    pub flipped: bool,
    pub edits_made: Option<usize>,
    /// Seconds spent generating; excluded from reproducibility comparisons.
    pub wall_time: f64,
    pub failure_reason: Option<String>,
    /// Fluency of the counterfactual, scored once at generation time so
    /// report rendering is a pure function of the persisted results.
    pub counterfactual_perplexity: Option<f64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub metadata: BTreeMap<String, String>,
}

/// What a generation attempt produced, before result bookkeeping.
#[derive(Debug, Clone)]
pub enum Outcome {
    Generated {
        text: String,
        label: u8,
        edits_made: Option<usize>,
    },
    Failed {
        reason: String,
    },
}

impl CounterfactualResult {
    pub fn new(
        example_id: impl Into<String>,
        dataset: DatasetName,
        method: Method,
        original_text: impl Into<String>,
        original_label: u8,
        outcome: Outcome,
        wall_time: f64,
        metadata: BTreeMap<String, String>,
    ) -> Self {
        let (counterfactual_text, counterfactual_label, flipped, edits_made, failure_reason) =
            match outcome {
                Outcome::Generated {
                    text,
                    label,
                    edits_made,
                } => {
                    let flipped = label != original_label;
                    let reason = if flipped {
                        None
                    } else {
                        Some("no_flip".to_string())
                    };
                    (Some(text), Some(label), flipped, edits_made, reason)
                }
                Outcome::Failed { reason } => (None, None, false, None, Some(reason)),
            };
        CounterfactualResult {
            schema: RESULT_SCHEMA,
            example_id: example_id.into(),
            dataset,
            method,
            original_text: original_text.into(),
            counterfactual_text,
            original_label,
            counterfactual_label,
            flipped,
            edits_made,
            wall_time,
            failure_reason,
            counterfactual_perplexity: None,
            metadata,
        }
    }

    /// Structural invariants every result must satisfy.
    pub fn validate(&self) -> Result<()> {
        let flip_consistent = self.flipped
            == (self.counterfactual_text.is_some()
                && self.counterfactual_label.is_some()
                && self.counterfactual_label != Some(self.original_label));
        if !flip_consistent {
            return Err(Error::InvalidInput(format!(
                "result {}: flipped flag inconsistent with labels",
                self.example_id
            )));
        }
        let needs_reason = self.counterfactual_text.is_none() || !self.flipped;
        if needs_reason != self.failure_reason.is_some() {
            return Err(Error::InvalidInput(format!(
                "result {}: failure_reason presence inconsistent",
                self.example_id
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::toy::ToyLinearClassifier;
    use crate::gateway::TextClassifier;

    fn toy_gateway() -> Gateway {
        Gateway::new(Arc::new(ToyLinearClassifier::sentiment()))
    }

    #[test]
    fn defaults_match_reference_settings() {
        let c = SearchConfig::default();
        assert_eq!(c.w, 5);
        assert_eq!(c.b, 15);
        assert_eq!(c.k, 30);
        assert_eq!(c.t, 0.3);
        assert_eq!(c.substitutions_after_loc, 0.3);
    }

    #[test]
    fn max_edits_is_floor_with_minimum_one() {
        let c = SearchConfig::default();
        assert_eq!(c.max_edits(1), 1);
        assert_eq!(c.max_edits(3), 1); // floor(0.9) = 0, clamped to 1
        assert_eq!(c.max_edits(4), 1);
        assert_eq!(c.max_edits(10), 3);
        assert_eq!(c.max_edits(20), 6);
    }

    #[test]
    fn substituting_a_token_for_itself_scores_zero() {
        let clf = ToyLinearClassifier::sentiment();
        let emb = clf.embeddings().unwrap();
        let grads = clf.gradients(&[2, 3], 1).unwrap();
        let v = substitution_value(&emb, grads.values.row(0), 2, 2);
        assert_eq!(v, 0.0);
    }

    #[test]
    fn zero_gradients_zero_values() {
        let gw = Gateway::new(Arc::new(crate::gateway::toy::ConstantClassifier::new([
            0.5, -0.5,
        ])));
        let mut cache = ClassifyCache::new();
        let tokens = Arc::new(gw.tokenize("i loved the movie").unwrap());
        let state = SubstitutionState::root(&gw, &mut cache, tokens.clone(), 1).unwrap();
        let grads = gw.embedding_gradients(&tokens, 1).unwrap();
        let scored = score_candidates(&gw, &state, &grads, 5).unwrap();
        for pc in scored {
            for (_, value) in pc.candidates {
                assert_eq!(value, 0.0);
            }
        }
    }

    #[test]
    fn first_order_value_is_exact_on_linear_model() {
        // On a bag-of-embeddings linear model the first-order value equals the
        // exact target-logit change of the substitution.
        let clf = Arc::new(ToyLinearClassifier::random_general(42, 10, 6));
        let gw = Gateway::new(clf.clone());
        let mut cache = ClassifyCache::new();
        let tokens = Arc::new(gw.tokenize("w0 w3 w7").unwrap());
        let flip = 1u8;
        let state = SubstitutionState::root(&gw, &mut cache, tokens.clone(), flip).unwrap();
        let grads = gw.embedding_gradients(&tokens, flip).unwrap();
        let scored = score_candidates(&gw, &state, &grads, 20).unwrap();
        for pc in &scored {
            for &(token, value) in &pc.candidates {
                let mut ids = tokens.token_ids.clone();
                ids[pc.position] = token;
                let exact = gw.classify_tokens(&ids).unwrap().logit(flip)
                    - state.output().logit(flip);
                assert!(
                    (value - exact).abs() < 1e-9,
                    "pos {} token {token}: first-order {value} vs exact {exact}",
                    pc.position
                );
            }
        }
    }

    #[test]
    fn score_candidates_skips_edited_and_special_positions() {
        let gw = toy_gateway();
        let mut cache = ClassifyCache::new();
        let tokens = Arc::new(gw.tokenize("i loved the [SEP] movie").unwrap());
        let mut edits = BTreeMap::new();
        edits.insert(0usize, gw.classifier().vocab().id_of("you").unwrap());
        let state =
            SubstitutionState::with_edits(&gw, &mut cache, tokens.clone(), edits, 0).unwrap();
        let grads = gw.embedding_gradients(&tokens, 0).unwrap();
        let scored = score_candidates(&gw, &state, &grads, 5).unwrap();
        let positions: Vec<usize> = scored.iter().map(|pc| pc.position).collect();
        assert!(!positions.contains(&0), "edited position must be excluded");
        assert!(!positions.contains(&3), "separator position must be excluded");
    }

    #[test]
    fn beam_step_matches_exhaustive_single_extensions() {
        // 3-token input over a small vocabulary: beam contents must equal the
        // top-b single extensions found by brute force.
        let clf = Arc::new(ToyLinearClassifier::random_general(7, 5, 4));
        let gw = Gateway::new(clf);
        let mut cache = ClassifyCache::new();
        let tokens = Arc::new(gw.tokenize("w0 w1 w2").unwrap());
        let flip = 1u8;
        let root = SubstitutionState::root(&gw, &mut cache, tokens.clone(), flip).unwrap();
        let grads = gw.embedding_gradients(&tokens, flip).unwrap();
        let scored = score_candidates(&gw, &root, &grads, 10).unwrap();

        // brute force: every (position, replacement) pair ranked by estimate
        let vocab = gw.classifier().vocab();
        let emb = gw.classifier().embeddings().unwrap();
        let mut exhaustive: Vec<(usize, u32, f64)> = Vec::new();
        for pos in 0..3 {
            let cur = tokens.token_ids[pos];
            for id in 0..vocab.len() as u32 {
                if id == cur || vocab.is_special(id) {
                    continue;
                }
                let value =
                    substitution_value(&emb, grads.values.row(pos), cur, id);
                exhaustive.push((pos, id, root.score() + value));
            }
        }
        exhaustive.sort_by(|a, b| {
            b.2.partial_cmp(&a.2)
                .unwrap()
                .then((a.0, a.1).cmp(&(b.0, b.1)))
        });

        for b in [1usize, 3, 8, 100] {
            let children =
                beam_step(&gw, &mut cache, &[root.clone()], &[scored.clone()], b, 3, flip)
                    .unwrap();
            let expect = exhaustive.len().min(b);
            assert_eq!(children.len(), expect, "beam width {b}");
            for (child, (pos, id, _)) in children.iter().zip(&exhaustive) {
                let edits: Vec<(usize, u32)> =
                    child.edits().iter().map(|(&p, &t)| (p, t)).collect();
                assert_eq!(edits, vec![(*pos, *id)], "beam width {b}");
            }
        }
    }

    #[test]
    fn beam_step_empty_when_budget_exhausted() {
        let gw = toy_gateway();
        let mut cache = ClassifyCache::new();
        let tokens = Arc::new(gw.tokenize("i loved the movie").unwrap());
        let mut edits = BTreeMap::new();
        edits.insert(1usize, gw.classifier().vocab().id_of("hated").unwrap());
        let state =
            SubstitutionState::with_edits(&gw, &mut cache, tokens.clone(), edits, 0).unwrap();
        let grads = gw.embedding_gradients(&tokens, 0).unwrap();
        let scored = score_candidates(&gw, &state, &grads, 5).unwrap();
        // max_edits = 1 and the state already has one edit: no legal children
        let children =
            beam_step(&gw, &mut cache, &[state], &[scored], 15, 1, 0).unwrap();
        assert!(children.is_empty());
    }

    #[test]
    fn state_output_is_never_stale() {
        let gw = toy_gateway();
        let mut cache = ClassifyCache::new();
        let tokens = Arc::new(gw.tokenize("i loved the movie").unwrap());
        let hated = gw.classifier().vocab().id_of("hated").unwrap();
        let mut edits = BTreeMap::new();
        edits.insert(1usize, hated);
        let state =
            SubstitutionState::with_edits(&gw, &mut cache, tokens, edits, 0).unwrap();
        let fresh = gw.classify_tokens(&state.token_ids()).unwrap();
        assert_eq!(state.output().label, fresh.label);
        assert_eq!(state.output().logits, fresh.logits);
        assert_eq!(state.output().label, 0);
    }

    #[test]
    fn result_invariants_hold_by_construction() {
        let flipped = CounterfactualResult::new(
            "sst2-1",
            DatasetName::Sst2,
            Method::Hotflip,
            "i loved the movie",
            1,
            Outcome::Generated {
                text: "i hated the movie".into(),
                label: 0,
                edits_made: Some(1),
            },
            0.01,
            BTreeMap::new(),
        );
        flipped.validate().unwrap();
        assert!(flipped.flipped);
        assert!(flipped.failure_reason.is_none());

        let unflipped = CounterfactualResult::new(
            "sst2-2",
            DatasetName::Sst2,
            Method::Polyjuice,
            "i loved the movie",
            1,
            Outcome::Generated {
                text: "i loved the movie".into(),
                label: 1,
                edits_made: None,
            },
            0.01,
            BTreeMap::new(),
        );
        unflipped.validate().unwrap();
        assert!(!unflipped.flipped);
        assert_eq!(unflipped.failure_reason.as_deref(), Some("no_flip"));

        let failed = CounterfactualResult::new(
            "sst2-3",
            DatasetName::Sst2,
            Method::Hotflip,
            "i loved the movie",
            1,
            Outcome::Failed {
                reason: "budget_exhausted".into(),
            },
            0.01,
            BTreeMap::new(),
        );
        failed.validate().unwrap();
        assert!(failed.counterfactual_text.is_none());
    }
}
