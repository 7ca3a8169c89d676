//! Node-count complexity, strata and stratified sampling.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::ingest::{Category, InvocationSite};

/// Named nodes strictly below the site subtree root. No body means zero.
pub fn count_d(site: &InvocationSite) -> usize {
    site.subtree.as_ref().map_or(0, |s| s.count_descendants())
}

/// `tanh(log10 d)`, and -1 for `d = 0`.
pub fn score(d: usize) -> f64 {
    if d == 0 {
        -1.0
    } else {
        (d as f64).log10().tanh()
    }
}

/// Round for presentation (6 decimals).
pub fn round6(x: f64) -> f64 {
    (x * 1e6).round() / 1e6
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StrataMode {
    Exact,
    Ranged,
}

impl StrataMode {
    pub fn for_category(c: Category) -> Self {
        match c {
            Category::Restrictive => StrataMode::Exact,
            Category::Flexible => StrataMode::Ranged,
        }
    }

    /// Exact mode keys by `d`; ranged mode keys by -1 for empty, else
    /// the tenth of the score interval (0..=9).
    pub fn key(self, d: usize) -> i64 {
        match self {
            StrataMode::Exact => d as i64,
            StrataMode::Ranged if d == 0 => -1,
            StrataMode::Ranged => ((score(d) * 10.0).floor() as i64).clamp(0, 9),
        }
    }

    pub fn describe(self, key: i64) -> String {
        match self {
            StrataMode::Exact => format!("{:.6}", round6(score(key as usize))),
            StrataMode::Ranged if key < 0 => "-1".to_string(),
            StrataMode::Ranged => format!("[{:.1},{:.1})", key as f64 / 10.0, (key + 1) as f64 / 10.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComplexityScore {
    pub d: usize,
    pub score: f64,
    pub stratum_key: i64,
}

impl ComplexityScore {
    pub fn new(d: usize, mode: StrataMode) -> Self {
        ComplexityScore { d, score: score(d), stratum_key: mode.key(d) }
    }

    pub fn of(site: &InvocationSite) -> Self {
        Self::new(count_d(site), StrataMode::for_category(site.category()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stratum {
    pub key: i64,
    pub label: String,
    pub population: usize,
    pub sample_size: usize,
    pub member_ids: Vec<String>,
}

/// Group `(id, d)` pairs into strata ordered by key. Sample sizes start at 0;
/// see [`assign_sample_sizes`].
pub fn stratify<'a, I>(members: I, mode: StrataMode) -> Vec<Stratum>
where
    I: IntoIterator<Item = (&'a str, usize)>,
{
    let mut groups: BTreeMap<i64, Vec<String>> = BTreeMap::new();
    for (id, d) in members {
        groups.entry(mode.key(d)).or_default().push(id.to_string());
    }
    groups
        .into_iter()
        .map(|(key, member_ids)| Stratum {
            key,
            label: mode.describe(key),
            population: member_ids.len(),
            sample_size: 0,
            member_ids,
        })
        .collect()
}

/// Two-sided normal quantile for a confidence level.
pub fn z_value(confidence: f64) -> f64 {
    let normal = Normal::standard();
    normal.inverse_cdf(1.0 - (1.0 - confidence) / 2.0)
}

/// Cochran's sample size (p = 0.5) with finite population correction.
/// Populations no larger than the infinite-population size are sampled whole.
pub fn sample_size(population: usize, confidence: f64, margin: f64) -> Result<usize> {
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(Error::Contract(format!("confidence must lie in (0,1), got {confidence}")));
    }
    if !(margin > 0.0 && margin.is_finite()) {
        return Err(Error::Contract(format!("margin must be positive, got {margin}")));
    }
    if population == 0 {
        return Ok(0);
    }
    let z = z_value(confidence);
    let n0 = z * z * 0.25 / (margin * margin);
    let n = population as f64;
    if n <= n0 {
        return Ok(population);
    }
    let corrected = (n0 / (1.0 + (n0 - 1.0) / n)).ceil() as usize;
    Ok(corrected.clamp(1, population))
}

pub fn assign_sample_sizes(strata: &mut [Stratum], confidence: f64, margin: f64) -> Result<()> {
    for s in strata.iter_mut() {
        s.sample_size = sample_size(s.population, confidence, margin)?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplePlan {
    pub confidence: f64,
    pub margin: f64,
    pub seed: u64,
    pub strata: Vec<Stratum>,
    pub selected_ids: Vec<String>,
}

/// Uniform selection without replacement inside each stratum. One seeded
/// generator walks the strata in key order, so the plan depends only on
/// `(strata, seed)`.
pub fn draw_sample(strata: &[Stratum], seed: u64, confidence: f64, margin: f64) -> SamplePlan {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut selected_ids = Vec::new();
    for s in strata {
        let k = s.sample_size.min(s.member_ids.len());
        let mut picked: Vec<&String> = s.member_ids.choose_multiple(&mut rng, k).collect();
        picked.sort();
        selected_ids.extend(picked.into_iter().cloned());
    }
    SamplePlan { confidence, margin, seed, strata: strata.to_vec(), selected_ids }
}
