//! Assignment of factorised terms and their products to `beta` or `gamma`.
//!
//! Every term in a decomposed computation carries a [`Source`]. A product of
//! terms is assigned to `beta` when every factor is relevant under the
//! policy and at least one factor is a genuine relevant signal (`Beta` or an
//! in-span input). The zero-input baseline of a gate (`sigmoid(0)`) always
//! rides along with a relevant signal, so a constant gate carries `beta`
//! forward unchanged. Lone bias and baseline terms go to `beta` only when
//! the policy says so.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{max_scaled_error, Vector};

use super::DecomposedPair;

/// Where a term came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Source {
    Beta,
    Gamma,
    InputInSpan,
    InputOutOfSpan,
    Bias,
    /// `f(0)` of a factorised nonlinearity.
    Baseline,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Part {
    Beta,
    Gamma,
}

/// Component labels that a policy may declare relevant.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RelevantSource {
    Beta,
    InputInSpan,
    Bias,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PolicyPreset {
    /// Only products of `beta`/in-span factors go to `beta`.
    GcdDefault,
    /// As `GcdDefault`, and `beta x bias` products also go to `beta`.
    Murdoch,
}

impl PolicyPreset {
    pub fn name(self) -> &'static str {
        match self {
            PolicyPreset::GcdDefault => "gcd-default",
            PolicyPreset::Murdoch => "murdoch",
        }
    }
}

impl FromStr for PolicyPreset {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gcd-default" | "gcd" => Ok(PolicyPreset::GcdDefault),
            "murdoch" => Ok(PolicyPreset::Murdoch),
            other => Err(Error::InvalidInput(format!(
                "unknown policy `{other}` (expected gcd-default or murdoch)"
            ))),
        }
    }
}

impl fmt::Display for PolicyPreset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl Serialize for PolicyPreset {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InteractionPolicy {
    pub name: String,
    pub relevant_sources: BTreeSet<RelevantSource>,
    pub baseline_to: Part,
    pub decoder_bias_to: Part,
}

impl Default for InteractionPolicy {
    fn default() -> Self {
        InteractionPolicy::preset(PolicyPreset::GcdDefault)
    }
}

impl InteractionPolicy {
    pub fn preset(preset: PolicyPreset) -> Self {
        let mut relevant_sources = BTreeSet::from([RelevantSource::Beta, RelevantSource::InputInSpan]);
        if preset == PolicyPreset::Murdoch {
            relevant_sources.insert(RelevantSource::Bias);
        }
        InteractionPolicy {
            name: preset.name().to_string(),
            relevant_sources,
            baseline_to: Part::Gamma,
            decoder_bias_to: Part::Gamma,
        }
    }

    pub fn gcd_default() -> Self {
        Self::preset(PolicyPreset::GcdDefault)
    }

    pub fn murdoch() -> Self {
        Self::preset(PolicyPreset::Murdoch)
    }

    pub fn is_relevant(&self, source: Source) -> bool {
        match source {
            Source::Beta => self.relevant_sources.contains(&RelevantSource::Beta),
            Source::InputInSpan => self.relevant_sources.contains(&RelevantSource::InputInSpan),
            Source::Bias => self.relevant_sources.contains(&RelevantSource::Bias),
            Source::Baseline => self.baseline_to == Part::Beta,
            Source::Gamma | Source::InputOutOfSpan => false,
        }
    }

    fn is_signal(&self, source: Source) -> bool {
        matches!(source, Source::Beta | Source::InputInSpan) && self.is_relevant(source)
    }

    /// Part for a term that is the product of `factors` (a single factor for
    /// an unmultiplied term).
    pub fn assign(&self, factors: &[Source]) -> Part {
        if let [lone] = factors {
            return if self.is_relevant(*lone) { Part::Beta } else { Part::Gamma };
        }
        let all_relevant = factors.iter().all(|&s| s == Source::Baseline || self.is_relevant(s));
        if all_relevant && factors.iter().any(|&s| self.is_signal(s)) {
            Part::Beta
        } else {
            Part::Gamma
        }
    }
}

/// A labelled additive term.
#[derive(Clone, Debug, PartialEq)]
pub struct Term {
    pub source: Source,
    pub value: Vector,
}

impl Term {
    pub fn new(source: Source, value: Vector) -> Self {
        Term { source, value }
    }
}

pub fn sum_terms(terms: &[Term]) -> Vector {
    let mut total = Vector::zeros(terms.first().map_or(0, |t| t.value.len()));
    for t in terms {
        total.add_assign(&t.value);
    }
    total
}

/// Assigns unmultiplied terms.
pub fn split_terms(terms: &[Term], policy: &InteractionPolicy) -> DecomposedPair {
    let len = terms.first().map_or(0, |t| t.value.len());
    let mut pair = DecomposedPair::zeros(len);
    for t in terms {
        pair.part_mut(policy.assign(&[t.source])).add_assign(&t.value);
    }
    pair
}

/// Expands `(sum a) * (sum b)` elementwise into all cross terms and assigns
/// each one. In debug builds the assigned parts are audited against the
/// undecomposed product.
pub fn multiply_terms(a: &[Term], b: &[Term], policy: &InteractionPolicy) -> DecomposedPair {
    let len = a.first().map_or(0, |t| t.value.len());
    let mut pair = DecomposedPair::zeros(len);
    for ta in a {
        for tb in b {
            let part = pair.part_mut(policy.assign(&[ta.source, tb.source]));
            for ((p, x), y) in part.iter_mut().zip(ta.value.iter()).zip(tb.value.iter()) {
                *p += x * y;
            }
        }
    }
    debug_assert!(
        audit_product(a, b, &pair) < 1e-9,
        "cross-term accounting mismatch: {}",
        audit_product(a, b, &pair)
    );
    pair
}

/// Scaled error between `beta + gamma` and the full product of the summed
/// factors.
pub fn audit_product(a: &[Term], b: &[Term], pair: &DecomposedPair) -> f64 {
    let full = sum_terms(a).mul(&sum_terms(b));
    max_scaled_error(&pair.total(), &full)
}
