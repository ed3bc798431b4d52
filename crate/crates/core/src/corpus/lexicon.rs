use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Language {
    En,
    Nl,
}

impl Language {
    pub fn code(self) -> &'static str {
        match self {
            Language::En => "en",
            Language::Nl => "nl",
        }
    }
}

impl FromStr for Language {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "en" | "english" => Ok(Language::En),
            "nl" | "dutch" => Ok(Language::Nl),
            other => Err(Error::InvalidInput(format!("unknown language `{other}`"))),
        }
    }
}

impl fmt::Display for Language {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Category {
    Noun,
    Verb,
    /// Verb taking a clausal complement ("thinks", "denkt").
    ClauseVerb,
    Name,
    Prep,
    Det,
    Conj,
    Comp,
}

impl Category {
    pub const ALL: [Category; 8] = [
        Category::Noun,
        Category::Verb,
        Category::ClauseVerb,
        Category::Name,
        Category::Prep,
        Category::Det,
        Category::Conj,
        Category::Comp,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Category::Noun => "noun",
            Category::Verb => "verb",
            Category::ClauseVerb => "cverb",
            Category::Name => "name",
            Category::Prep => "prep",
            Category::Det => "det",
            Category::Conj => "conj",
            Category::Comp => "comp",
        }
    }

    fn inflects(self) -> bool {
        matches!(self, Category::Noun | Category::Verb | Category::ClauseVerb | Category::Det)
    }
}

impl FromStr for Category {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Category::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::Parse(format!("unknown lexicon category `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LexiconEntry {
    pub category: Category,
    pub singular: String,
    /// Equal to `singular` for uninflected categories.
    pub plural: String,
    /// Singular determiner carried by a noun; plural nouns use the
    /// language's plural determiner.
    pub determiner: Option<String>,
}

impl LexiconEntry {
    pub fn form(&self, number: super::Number) -> &str {
        match number {
            super::Number::Singular => &self.singular,
            super::Number::Plural => &self.plural,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Lexicon {
    pub language: Language,
    pub entries: Vec<LexiconEntry>,
}

const EN_DATA: &str = include_str!("../../data/lexicon_en.tsv");
const NL_DATA: &str = include_str!("../../data/lexicon_nl.tsv");

impl Lexicon {
    /// Lexicon shipped with the crate.
    pub fn builtin(language: Language) -> Self {
        let text = match language {
            Language::En => EN_DATA,
            Language::Nl => NL_DATA,
        };
        Lexicon::parse(language, text).expect("bundled lexicon parses")
    }

    pub fn load(language: Language, path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Lexicon::parse(language, &text)
    }

    /// Tab-separated rows: `category, singular[, plural[, determiner]]`.
    /// Blank lines and lines starting with `#` are skipped.
    pub fn parse(language: Language, text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').map(str::trim).collect();
            let err = |m: &str| Error::Parse(format!("lexicon line {}: {m}", lineno + 1));
            let category: Category = cols[0].parse()?;
            let singular = cols.get(1).filter(|s| !s.is_empty()).ok_or_else(|| err("missing form"))?;
            let plural = match cols.get(2).filter(|s| !s.is_empty()) {
                Some(p) => p.to_string(),
                None if category.inflects() => return Err(err("inflected category needs a plural form")),
                None => singular.to_string(),
            };
            let determiner = cols.get(3).filter(|s| !s.is_empty()).map(|s| s.to_string());
            if category == Category::Noun && determiner.is_none() {
                return Err(err("nouns need a determiner column"));
            }
            entries.push(LexiconEntry { category, singular: singular.to_string(), plural, determiner });
        }
        Ok(Lexicon { language, entries })
    }

    pub fn of(&self, category: Category) -> Vec<&LexiconEntry> {
        self.entries.iter().filter(|e| e.category == category).collect()
    }

    pub fn first(&self, category: Category) -> Result<&LexiconEntry> {
        self.entries
            .iter()
            .find(|e| e.category == category)
            .ok_or_else(|| Error::InvalidInput(format!("lexicon has no `{}` entries", category.name())))
    }

    /// Looks up an entry by any of its forms.
    pub fn find(&self, category: Category, form: &str) -> Option<&LexiconEntry> {
        self.entries
            .iter()
            .find(|e| e.category == category && (e.singular == form || e.plural == form))
    }

    /// Every surface form a generated sentence can contain, including
    /// capitalised sentence-initial determiners.
    pub fn surface_forms(&self) -> Vec<String> {
        let mut out = Vec::new();
        for e in &self.entries {
            out.push(e.singular.clone());
            out.push(e.plural.clone());
            if let Some(d) = &e.determiner {
                out.push(d.clone());
                out.push(capitalize(d));
            }
            if e.category == Category::Det {
                out.push(capitalize(&e.singular));
                out.push(capitalize(&e.plural));
            }
        }
        let mut seen = std::collections::HashSet::new();
        out.retain(|f| seen.insert(f.clone()));
        out
    }
}

pub fn capitalize(s: &str) -> String {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) => c.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}
