use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::lexicon::Category;
use crate::error::{Error, Result};

/// The five number-agreement templates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TemplateId {
    Simple,
    NounPP,
    NamePP,
    SConj,
    ThatNounPP,
}

impl TemplateId {
    pub const ALL: [TemplateId; 5] =
        [TemplateId::Simple, TemplateId::NounPP, TemplateId::NamePP, TemplateId::SConj, TemplateId::ThatNounPP];

    pub fn name(self) -> &'static str {
        match self {
            TemplateId::Simple => "Simple",
            TemplateId::NounPP => "NounPP",
            TemplateId::NamePP => "NamePP",
            TemplateId::SConj => "SConj",
            TemplateId::ThatNounPP => "ThatNounPP",
        }
    }

    /// Slot sequence, ending with the target verb.
    pub fn slots(self) -> &'static [Category] {
        use Category::*;
        match self {
            TemplateId::Simple => &[Det, Noun, Verb],
            TemplateId::NounPP => &[Det, Noun, Prep, Det, Noun, Verb],
            TemplateId::NamePP => &[Det, Noun, Prep, Name, Verb],
            TemplateId::SConj => &[Det, Noun, Verb, Conj, Det, Noun, Verb],
            TemplateId::ThatNounPP => &[Det, Noun, ClauseVerb, Comp, Det, Noun, Prep, Det, Noun, Verb],
        }
    }

    /// Slots of the prefix (everything before the target verb).
    pub fn prefix_slots(self) -> &'static [Category] {
        let s = self.slots();
        &s[..s.len() - 1]
    }

    /// Number of independently inflected nouns.
    pub fn arity(self) -> usize {
        self.slots().iter().filter(|&&c| c == Category::Noun).count()
    }

    /// Which noun (in surface order) is the subject of the target verb.
    pub fn target_noun(self) -> usize {
        match self {
            TemplateId::SConj | TemplateId::ThatNounPP => 1,
            _ => 0,
        }
    }

    /// Slot position of the target subject noun.
    pub fn subject_slot(self) -> usize {
        self.slots()
            .iter()
            .enumerate()
            .filter(|(_, &c)| c == Category::Noun)
            .nth(self.target_noun())
            .map(|(i, _)| i)
            .expect("target noun exists")
    }

    pub fn condition_count(self) -> usize {
        1 << self.arity()
    }
}

impl FromStr for TemplateId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        TemplateId::ALL
            .into_iter()
            .find(|t| t.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidInput(format!("unknown template `{s}`")))
    }
}

impl fmt::Display for TemplateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Number {
    Singular,
    Plural,
}

impl Number {
    pub fn letter(self) -> char {
        match self {
            Number::Singular => 'S',
            Number::Plural => 'P',
        }
    }

    pub fn flip(self) -> Number {
        match self {
            Number::Singular => Number::Plural,
            Number::Plural => Number::Singular,
        }
    }
}

/// Number of every noun, left to right, and which one the target verb
/// agrees with.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Condition {
    pub numbers: Vec<Number>,
    pub target: usize,
}

impl Condition {
    /// All `2^arity` conditions for a template, singular before plural with
    /// the leftmost noun most significant.
    pub fn all(template: TemplateId) -> Vec<Condition> {
        let n = template.arity();
        (0..1usize << n)
            .map(|bits| Condition {
                numbers: (0..n)
                    .map(|i| if bits >> (n - 1 - i) & 1 == 1 { Number::Plural } else { Number::Singular })
                    .collect(),
                target: template.target_noun(),
            })
            .collect()
    }

    pub fn code(&self) -> String {
        self.numbers.iter().map(|n| n.letter()).collect()
    }

    pub fn target_number(&self) -> Number {
        self.numbers[self.target]
    }

    /// Position of this condition in [`Condition::all`].
    pub fn ordinal(&self) -> usize {
        self.numbers.iter().fold(0, |acc, n| acc << 1 | (*n == Number::Plural) as usize)
    }

    pub fn parse(code: &str, target: usize) -> Result<Self> {
        let numbers = code
            .chars()
            .map(|c| match c {
                'S' => Ok(Number::Singular),
                'P' => Ok(Number::Plural),
                other => Err(Error::Parse(format!("bad condition letter `{other}` in `{code}`"))),
            })
            .collect::<Result<Vec<_>>>()?;
        if target >= numbers.len() {
            return Err(Error::Parse(format!("target index {target} outside condition `{code}`")));
        }
        Ok(Condition { numbers, target })
    }
}
