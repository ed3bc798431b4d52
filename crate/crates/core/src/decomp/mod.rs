//! Contextual decomposition: forward passes over `(beta, gamma)` pairs, where
//! `beta` is the part of an activation attributable to a relevant token span
//! and `gamma` the rest. At every site `beta + gamma` reconstructs the plain
//! activation.

pub mod forward;
pub mod layers;
pub mod lstm;
pub mod policy;

use crate::error::{Error, Result};
use crate::numerics::{max_scaled_error, Vector};

pub use forward::{decomposed_forward, logit_attribution, DecomposedTrace, Decomposer};
pub use layers::{decompose_attention, decompose_boom, decompose_layer_norm, decompose_softmax, factorize};
pub use lstm::{decompose_lstm_step, StepInput};
pub use policy::{InteractionPolicy, Part, PolicyPreset, RelevantSource, Source, Term};

#[derive(Clone, Debug, PartialEq)]
pub struct DecomposedPair {
    pub beta: Vector,
    pub gamma: Vector,
}

impl DecomposedPair {
    pub fn new(beta: Vector, gamma: Vector) -> Self {
        assert_eq!(beta.len(), gamma.len(), "beta/gamma length mismatch");
        DecomposedPair { beta, gamma }
    }

    pub fn zeros(len: usize) -> Self {
        DecomposedPair { beta: Vector::zeros(len), gamma: Vector::zeros(len) }
    }

    /// Everything in `gamma`.
    pub fn irrelevant(v: Vector) -> Self {
        let len = v.len();
        DecomposedPair { beta: Vector::zeros(len), gamma: v }
    }

    /// Everything in `beta`.
    pub fn relevant(v: Vector) -> Self {
        let len = v.len();
        DecomposedPair { beta: v, gamma: Vector::zeros(len) }
    }

    pub fn len(&self) -> usize {
        self.beta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.beta.is_empty()
    }

    pub fn total(&self) -> Vector {
        self.beta.add(&self.gamma)
    }

    pub fn part(&self, part: Part) -> &Vector {
        match part {
            Part::Beta => &self.beta,
            Part::Gamma => &self.gamma,
        }
    }

    pub fn part_mut(&mut self, part: Part) -> &mut Vector {
        match part {
            Part::Beta => &mut self.beta,
            Part::Gamma => &mut self.gamma,
        }
    }

    /// Componentwise sum; additions never create interaction terms.
    pub fn add(&self, other: &DecomposedPair) -> DecomposedPair {
        DecomposedPair { beta: self.beta.add(&other.beta), gamma: self.gamma.add(&other.gamma) }
    }

    pub fn terms(&self) -> [Term; 2] {
        [Term::new(Source::Beta, self.beta.clone()), Term::new(Source::Gamma, self.gamma.clone())]
    }

    pub fn map_linear(&self, f: impl Fn(&Vector) -> Vector) -> DecomposedPair {
        DecomposedPair { beta: f(&self.beta), gamma: f(&self.gamma) }
    }

    /// Scaled reconstruction error against the plain activation.
    pub fn reconstruction_error(&self, full: &[f64]) -> f64 {
        max_scaled_error(&self.total(), full)
    }
}

/// Half-open token range `[start, end)` whose contribution is measured.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct RelevantSpan {
    pub start: usize,
    pub end: usize,
}

impl RelevantSpan {
    pub fn new(start: usize, end: usize) -> Result<Self> {
        if start >= end {
            return Err(Error::InvalidInput(format!("empty span {start}:{end}")));
        }
        Ok(RelevantSpan { start, end })
    }

    pub fn single(position: usize) -> Self {
        RelevantSpan { start: position, end: position + 1 }
    }

    pub fn contains(&self, position: usize) -> bool {
        (self.start..self.end).contains(&position)
    }

    /// Checks `end <= len`.
    pub fn check_within(&self, len: usize) -> Result<()> {
        if self.end > len {
            return Err(Error::InvalidInput(format!(
                "span {}:{} exceeds sentence length {len}",
                self.start, self.end
            )));
        }
        Ok(())
    }
}

impl std::fmt::Display for RelevantSpan {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}", self.start, self.end)
    }
}

impl serde::Serialize for RelevantSpan {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl std::str::FromStr for RelevantSpan {
    type Err = Error;
    /// Parses `a:b`.
    fn from_str(s: &str) -> Result<Self> {
        let (a, b) = s
            .split_once(':')
            .ok_or_else(|| Error::InvalidInput(format!("span `{s}` is not of the form a:b")))?;
        let parse = |x: &str| {
            x.trim()
                .parse::<usize>()
                .map_err(|_| Error::InvalidInput(format!("bad span bound `{x}`")))
        };
        RelevantSpan::new(parse(a)?, parse(b)?)
    }
}
