//! Token-level gradient beam search over the full classifier vocabulary:
//! substitute the tokens with the highest first-order impact until the
//! classifier flips or the edit budget runs out.

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Instant;

use crate::data::ExampleRecord;
use crate::error::Result;
use crate::gateway::{Gateway, Label};
use crate::search::{
    beam_step, score_candidates, ClassifyCache, CounterfactualResult, Method, Outcome,
    SearchConfig, SubstitutionState,
};

/// Generate a counterfactual for one example by gradient-guided beam search.
///
/// The original label is always recomputed from the classifier, never taken
/// from the dataset. The search stops at the first depth where any surviving
/// state flips the classifier, so returned flips use the fewest edits the
/// beam found; ties go to the highest flip-class probability.
pub fn hotflip_generate(
    gw: &Gateway,
    example: &ExampleRecord,
    config: &SearchConfig,
) -> Result<CounterfactualResult> {
    config.validate()?;
    let start = Instant::now();
    let text = example.classifier_input()?;
    let (tokens, truncated) = gw.tokenize_checked(&text)?;
    let max_edits = config.max_edits(tokens.len());

    let mut metadata = BTreeMap::new();
    metadata.insert("classifier".into(), gw.classifier_model_id().to_string());
    if truncated {
        metadata.insert("truncated".into(), "true".into());
    }

    let mut cache = ClassifyCache::new();
    let outcome = search_flip(gw, &mut cache, tokens, max_edits, config)?;
    metadata.insert("classifier_calls".into(), cache.model_calls().to_string());

    let original_label = outcome.original_label;
    Ok(CounterfactualResult::new(
        example.id.clone(),
        example.dataset,
        Method::Hotflip,
        text,
        original_label,
        outcome.into_outcome(gw),
        start.elapsed().as_secs_f64(),
        metadata,
    ))
}

/// Internal search verdict shared with the candidate-pool method.
pub(crate) struct SearchVerdict {
    pub original_label: Label,
    pub flipped_state: Option<SubstitutionState>,
}

impl SearchVerdict {
    pub(crate) fn into_outcome(self, gw: &Gateway) -> Outcome {
        match self.flipped_state {
            Some(state) => Outcome::Generated {
                text: gw.detokenize(&state.surfaces(gw)),
                label: state.output().label,
                edits_made: Some(state.edit_count()),
            },
            None => Outcome::Failed {
                reason: "budget_exhausted".into(),
            },
        }
    }
}

fn search_flip(
    gw: &Gateway,
    cache: &mut ClassifyCache,
    tokens: crate::gateway::TokenSequence,
    max_edits: usize,
    config: &SearchConfig,
) -> Result<SearchVerdict> {
    let base = Arc::new(tokens);
    let original = cache.classify(gw, &base.token_ids)?;
    let flip_label: Label = 1 - original.label;

    let mut beams = vec![SubstitutionState::root(gw, cache, Arc::clone(&base), flip_label)?];
    for _depth in 1..=max_edits {
        // one backward pass per surviving state per depth scores every
        // (position, candidate) pair at once
        let mut per_beam_candidates = Vec::with_capacity(beams.len());
        for state in &beams {
            let ids = state.token_ids();
            let gradients = gw.embedding_gradients_for_ids(&ids, flip_label)?;
            per_beam_candidates.push(score_candidates(gw, state, &gradients, config.k)?);
        }
        let children = beam_step(
            gw,
            cache,
            &beams,
            &per_beam_candidates,
            config.b,
            max_edits,
            flip_label,
        )?;
        if children.is_empty() {
            break;
        }
        if let Some(flip) = best_flip(&children, flip_label) {
            return Ok(SearchVerdict {
                original_label: original.label,
                flipped_state: Some(flip.clone()),
            });
        }
        beams = children;
    }
    Ok(SearchVerdict {
        original_label: original.label,
        flipped_state: None,
    })
}

/// Pick the flipped state with the highest flip-class probability; the caller
/// guarantees all candidates share the same (minimal) edit count.
pub(crate) fn best_flip(
    children: &[SubstitutionState],
    flip_label: Label,
) -> Option<&SubstitutionState> {
    let mut best: Option<&SubstitutionState> = None;
    for child in children {
        if child.output().label != flip_label {
            continue;
        }
        let better = match best {
            None => true,
            Some(current) => {
                child.output().probability(flip_label) > current.output().probability(flip_label)
            }
        };
        if better {
            best = Some(child);
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{DatasetName, ExampleContent};
    use crate::gateway::toy::ToyLinearClassifier;

    fn example(text: &str) -> ExampleRecord {
        ExampleRecord {
            id: "sst2-0".into(),
            dataset: DatasetName::Sst2,
            content: ExampleContent::Text { text: text.into() },
            gold_label: 1,
        }
    }

    #[test]
    fn dominant_word_is_substituted_in_one_edit() {
        // "loved" carries all of the weight; a single substitution flips.
        let gw = Gateway::new(Arc::new(ToyLinearClassifier::sentiment()));
        let config = SearchConfig::default();
        let result = hotflip_generate(&gw, &example("i loved the movie"), &config).unwrap();
        result.validate().unwrap();
        assert!(result.flipped, "{result:?}");
        assert_eq!(result.edits_made, Some(1));
        assert_eq!(result.original_label, 1);
        assert_eq!(result.counterfactual_label, Some(0));
        let cf = result.counterfactual_text.unwrap();
        // flip soundness: re-classifying the text from scratch agrees
        assert_eq!(gw.classify(&cf).unwrap().label, 0);

        // exhaustive single-edit oracle: some single substitution must flip,
        // and the search is required to find a 1-edit flip whenever one exists
        let tokens = gw.tokenize("i loved the movie").unwrap();
        let vocab = gw.classifier().vocab();
        let mut single_edit_flip = false;
        'outer: for pos in 0..tokens.len() {
            for id in 0..vocab.len() as u32 {
                if vocab.is_special(id) || id == tokens.token_ids[pos] {
                    continue;
                }
                let mut ids = tokens.token_ids.clone();
                ids[pos] = id;
                if gw.classify_tokens(&ids).unwrap().label == 0 {
                    single_edit_flip = true;
                    break 'outer;
                }
            }
        }
        assert!(single_edit_flip);
    }

    #[test]
    fn original_label_is_recomputed_not_trusted() {
        let gw = Gateway::new(Arc::new(ToyLinearClassifier::sentiment()));
        let mut ex = example("i loved the movie");
        ex.gold_label = 0; // wrong on purpose
        let result = hotflip_generate(&gw, &ex, &SearchConfig::default()).unwrap();
        assert_eq!(result.original_label, 1, "label must come from the classifier");
    }

    #[test]
    fn budget_is_never_exceeded() {
        let gw = Gateway::new(Arc::new(ToyLinearClassifier::sentiment()));
        let config = SearchConfig::default();
        for text in [
            "movie",
            "the movie was good",
            "i really liked this movie and the acting was great",
        ] {
            let result = hotflip_generate(&gw, &example(text), &config).unwrap();
            let len = gw.tokenize(text).unwrap().len();
            if let Some(edits) = result.edits_made {
                assert!(edits <= config.max_edits(len));
            }
        }
    }

    #[test]
    fn search_is_deterministic() {
        let gw = Gateway::new(Arc::new(ToyLinearClassifier::sentiment()));
        let config = SearchConfig::default();
        let a = hotflip_generate(&gw, &example("the movie was great and the acting was good"), &config).unwrap();
        let b = hotflip_generate(&gw, &example("the movie was great and the acting was good"), &config).unwrap();
        assert_eq!(a.counterfactual_text, b.counterfactual_text);
        assert_eq!(a.edits_made, b.edits_made);
        assert_eq!(a.flipped, b.flipped);
    }

    #[test]
    fn failure_reports_budget_exhausted() {
        // A neutral-only vocabulary sequence cannot cross the margin when
        // every candidate is also neutral, except through lexicon words; use
        // a strongly positive sentence with a tiny budget instead.
        let gw = Gateway::new(Arc::new(ToyLinearClassifier::sentiment()));
        let config = SearchConfig {
            t: 0.05, // floor(0.05 * 6) = 0 -> clamped to 1 edit
            ..SearchConfig::default()
        };
        let text = "loved loved loved loved loved loved";
        let result = hotflip_generate(&gw, &example(text), &config).unwrap();
        result.validate().unwrap();
        assert!(!result.flipped);
        assert_eq!(result.failure_reason.as_deref(), Some("budget_exhausted"));
        assert!(result.counterfactual_text.is_none());
    }
}
