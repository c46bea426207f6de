//! Evaluation metrics: label flip score, mean normalized Levenshtein
//! similarity, median perplexity, and percentile-bootstrap confidence
//! intervals over per-example values.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::DatasetName;
use crate::error::{Error, Result};
use crate::gateway::Gateway;
use crate::search::{CounterfactualResult, Method};

/// Which results feed the similarity and perplexity averages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum MetricPopulation {
    /// Every result that produced any counterfactual text, valid or not.
    #[default]
    AllGenerated,
    /// Only results whose counterfactual actually flipped the classifier.
    ValidOnly,
}

/// Aggregated metrics for one method on one dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub method: Method,
    pub dataset: DatasetName,
    pub n: usize,
    pub lfs: f64,
    pub lfs_ci: (f64, f64),
    /// Absent when no result produced a counterfactual to compare.
    pub mean_similarity: Option<f64>,
    pub similarity_ci: Option<(f64, f64)>,
    pub median_perplexity: Option<f64>,
    pub perplexity_ci: Option<(f64, f64)>,
    pub scorer_model_id: String,
    pub config_fingerprint: String,
}

impl MetricsReport {
    pub fn validate(&self) -> Result<()> {
        let check = |name: &str, value: f64, ci: (f64, f64)| -> Result<()> {
            if ci.0 > value || ci.1 < value {
                return Err(Error::InvalidInput(format!(
                    "{name} interval ({}, {}) does not contain the estimate {value}",
                    ci.0, ci.1
                )));
            }
            Ok(())
        };
        if !(0.0..=1.0).contains(&self.lfs) {
            return Err(Error::InvalidInput(format!("lfs {} outside [0,1]", self.lfs)));
        }
        check("lfs", self.lfs, self.lfs_ci)?;
        if let (Some(v), Some(ci)) = (self.mean_similarity, self.similarity_ci) {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidInput(format!("similarity {v} outside [0,1]")));
            }
            check("similarity", v, ci)?;
        }
        if let (Some(v), Some(ci)) = (self.median_perplexity, self.perplexity_ci) {
            if v <= 0.0 {
                return Err(Error::InvalidInput(format!("perplexity {v} not positive")));
            }
            check("perplexity", v, ci)?;
        }
        Ok(())
    }
}

/// Fraction of results whose counterfactual received a different label than
/// the original; results without a counterfactual count as non-flips.
pub fn label_flip_score(results: &[CounterfactualResult]) -> Result<f64> {
    if results.is_empty() {
        return Err(Error::InvalidInput(
            "label flip score needs at least one result".into(),
        ));
    }
    let flips = results.iter().filter(|r| r.flipped).count();
    Ok(flips as f64 / results.len() as f64)
}

/// Character-level edit distance (insertions, deletions, substitutions).
pub fn levenshtein_distance(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    if a.is_empty() {
        return b.len();
    }
    if b.is_empty() {
        return a.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0usize; b.len() + 1];
    for (i, &ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, &cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// `1 - distance / max(|a|, |b|)`, character counts. Two empty strings are
/// identical by definition.
pub fn normalized_similarity(a: &str, b: &str) -> f64 {
    let la = a.chars().count();
    let lb = b.chars().count();
    let longest = la.max(lb);
    if longest == 0 {
        log::debug!("similarity of two empty strings defined as 1.0");
        return 1.0;
    }
    1.0 - levenshtein_distance(a, b) as f64 / longest as f64
}

/// Per-result similarity values for the selected population.
pub fn similarity_values(
    results: &[CounterfactualResult],
    population: MetricPopulation,
) -> Vec<f64> {
    results
        .iter()
        .filter(|r| population == MetricPopulation::AllGenerated || r.flipped)
        .filter_map(|r| {
            r.counterfactual_text
                .as_ref()
                .map(|cf| normalized_similarity(&r.original_text, cf))
        })
        .collect()
}

/// Mean similarity over results that produced a counterfactual; `None` when
/// no result did.
pub fn mean_similarity(
    results: &[CounterfactualResult],
    population: MetricPopulation,
) -> Result<Option<f64>> {
    if results.is_empty() {
        return Err(Error::InvalidInput(
            "mean similarity needs at least one result".into(),
        ));
    }
    let values = similarity_values(results, population);
    Ok(mean(&values))
}

/// Per-result perplexities for the selected population: the value stored at
/// generation time when present, otherwise scored now through the gateway.
pub fn perplexity_values(
    results: &[CounterfactualResult],
    scorer: Option<&Gateway>,
    population: MetricPopulation,
) -> Result<Vec<f64>> {
    let mut values = Vec::new();
    for r in results {
        if population == MetricPopulation::ValidOnly && !r.flipped {
            continue;
        }
        let Some(cf) = r.counterfactual_text.as_ref() else {
            continue;
        };
        let value = match r.counterfactual_perplexity {
            Some(p) => p,
            None => match scorer {
                Some(gw) => gw.sequence_perplexity(cf)?,
                None => {
                    return Err(Error::Capability(
                        "results carry no stored perplexity and no scorer is configured".into(),
                    ))
                }
            },
        };
        values.push(value);
    }
    Ok(values)
}

/// Median perplexity of generated counterfactuals; `None` when no result
/// produced one. The median resists the extreme outliers broken generations
/// cause.
pub fn median_perplexity(
    results: &[CounterfactualResult],
    scorer: Option<&Gateway>,
    population: MetricPopulation,
) -> Result<Option<f64>> {
    if results.is_empty() {
        return Err(Error::InvalidInput(
            "median perplexity needs at least one result".into(),
        ));
    }
    let values = perplexity_values(results, scorer, population)?;
    Ok(median(&values))
}

fn mean(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        None
    } else {
        Some(values.iter().sum::<f64>() / values.len() as f64)
    }
}

/// Sample median: mean of the two middle values for even counts.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let n = sorted.len();
    Some(if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    })
}

/// Statistic resampled by [`bootstrap_ci`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Statistic {
    Mean,
    Median,
    /// Mean of indicator values; identical computation to `Mean`, named
    /// separately because the inputs are 0/1 flags.
    Proportion,
}

impl Statistic {
    fn apply(&self, values: &[f64]) -> f64 {
        match self {
            Statistic::Mean | Statistic::Proportion => {
                values.iter().sum::<f64>() / values.len() as f64
            }
            Statistic::Median => median(values).expect("non-empty by construction"),
        }
    }
}

/// Percentile bootstrap interval: resample with replacement `n_boot` times and
/// take the `alpha/2` and `1 - alpha/2` quantiles of the statistic.
/// Deterministic given `seed`.
pub fn bootstrap_ci(
    values: &[f64],
    statistic: Statistic,
    n_boot: usize,
    alpha: f64,
    seed: u64,
) -> Result<(f64, f64)> {
    if values.is_empty() {
        return Err(Error::InvalidInput("bootstrap needs at least one value".into()));
    }
    if n_boot == 0 {
        return Err(Error::InvalidInput("n_boot must be positive".into()));
    }
    if !(0.0 < alpha && alpha < 1.0) {
        return Err(Error::InvalidInput("alpha must lie in (0, 1)".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stats = Vec::with_capacity(n_boot);
    let mut resample = vec![0.0; values.len()];
    for _ in 0..n_boot {
        for slot in resample.iter_mut() {
            *slot = values[rng.random_range(0..values.len())];
        }
        stats.push(statistic.apply(&resample));
    }
    stats.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    Ok((
        quantile(&stats, alpha / 2.0),
        quantile(&stats, 1.0 - alpha / 2.0),
    ))
}

/// Linear-interpolation quantile of an already sorted slice.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let rank = q * (n - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    let frac = rank - lo as f64;
    sorted[lo] * (1.0 - frac) + sorted[hi] * frac
}

/// Settings for report aggregation.
#[derive(Debug, Clone)]
pub struct ReportOptions {
    pub n_boot: usize,
    pub alpha: f64,
    pub seed: u64,
    pub population: MetricPopulation,
    pub config_fingerprint: String,
}

impl Default for ReportOptions {
    fn default() -> Self {
        ReportOptions {
            n_boot: 1000,
            alpha: 0.05,
            seed: 0,
            population: MetricPopulation::AllGenerated,
            config_fingerprint: String::new(),
        }
    }
}

fn mix_seed(seed: u64, tag: u64) -> u64 {
    seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(tag)
}

/// Compute the full report for one method x dataset result set. Bootstrap
/// intervals resample per-example values: flip indicators, per-pair
/// similarities, per-counterfactual perplexities.
pub fn compute_report(
    method: Method,
    dataset: DatasetName,
    results: &[CounterfactualResult],
    scorer: Option<&Gateway>,
    scorer_model_id: &str,
    options: &ReportOptions,
) -> Result<MetricsReport> {
    let lfs = label_flip_score(results)?;
    let indicators: Vec<f64> = results
        .iter()
        .map(|r| if r.flipped { 1.0 } else { 0.0 })
        .collect();
    let lfs_ci = bootstrap_ci(
        &indicators,
        Statistic::Proportion,
        options.n_boot,
        options.alpha,
        mix_seed(options.seed, 1),
    )?;

    let sims = similarity_values(results, options.population);
    let (mean_similarity, similarity_ci) = match mean(&sims) {
        Some(v) => (
            Some(v),
            Some(bootstrap_ci(
                &sims,
                Statistic::Mean,
                options.n_boot,
                options.alpha,
                mix_seed(options.seed, 2),
            )?),
        ),
        None => (None, None),
    };

    let ppls = perplexity_values(results, scorer, options.population)?;
    let (median_perplexity, perplexity_ci) = match median(&ppls) {
        Some(v) => (
            Some(v),
            Some(bootstrap_ci(
                &ppls,
                Statistic::Median,
                options.n_boot,
                options.alpha,
                mix_seed(options.seed, 3),
            )?),
        ),
        None => (None, None),
    };

    let report = MetricsReport {
        method,
        dataset,
        n: results.len(),
        lfs,
        lfs_ci,
        mean_similarity,
        similarity_ci,
        median_perplexity,
        perplexity_ci,
        scorer_model_id: scorer_model_id.to_string(),
        config_fingerprint: options.config_fingerprint.clone(),
    };
    report.validate()?;
    Ok(report)
}
