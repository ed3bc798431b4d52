//! Synthetic number-agreement corpora built from small per-language
//! lexicons and five sentence templates.
//!
//! Corpus files hold one item per line with nine tab-separated fields:
//! `language, template, condition, target_index, prefix, congruent,
//! incongruent, span_start, span_end`, where `prefix` is the space-joined
//! token sequence before the target verb and the span covers the target
//! subject noun.

pub mod lexicon;
pub mod template;

use std::collections::HashSet;
use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::decomp::RelevantSpan;
use crate::error::{Error, Result};
use crate::model_io::Vocab;

pub use lexicon::{capitalize, Category, Language, Lexicon, LexiconEntry};
pub use template::{Condition, Number, TemplateId};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CorpusItem {
    pub language: Language,
    pub template: TemplateId,
    pub condition: Condition,
    /// Tokens up to, not including, the target verb.
    pub tokens: Vec<String>,
    pub congruent: String,
    pub incongruent: String,
    pub subject_span: RelevantSpan,
}

/// A corpus item resolved against a model vocabulary.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EncodedItem {
    pub tokens: Vec<usize>,
    pub congruent: usize,
    pub incongruent: usize,
    pub span: RelevantSpan,
}

impl CorpusItem {
    pub fn sentence(&self) -> String {
        format!("{} {}", self.tokens.join(" "), self.congruent)
    }

    /// Strict encoding: any token missing from `vocab` is an error.
    pub fn encode(&self, vocab: &Vocab) -> Result<EncodedItem> {
        Ok(EncodedItem {
            tokens: self.tokens.iter().map(|t| vocab.id(t)).collect::<Result<_>>()?,
            congruent: vocab.id(&self.congruent)?,
            incongruent: vocab.id(&self.incongruent)?,
            span: self.subject_span,
        })
    }

    /// Same sentence with congruent and incongruent verbs swapped.
    pub fn swapped(&self) -> CorpusItem {
        CorpusItem { congruent: self.incongruent.clone(), incongruent: self.congruent.clone(), ..self.clone() }
    }

    pub fn to_tsv(&self) -> String {
        format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            self.language,
            self.template,
            self.condition.code(),
            self.condition.target,
            self.tokens.join(" "),
            self.congruent,
            self.incongruent,
            self.subject_span.start,
            self.subject_span.end
        )
    }

    pub fn from_tsv(line: &str) -> Result<Self> {
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 9 {
            return Err(Error::Parse(format!("corpus line has {} fields, expected 9", f.len())));
        }
        let num = |s: &str| s.parse::<usize>().map_err(|_| Error::Parse(format!("bad integer `{s}`")));
        let template: TemplateId = f[1].parse()?;
        let condition = Condition::parse(f[2], num(f[3])?)?;
        if condition.numbers.len() != template.arity() {
            return Err(Error::Parse(format!("condition `{}` does not fit template {template}", f[2])));
        }
        let tokens: Vec<String> = f[4].split(' ').filter(|t| !t.is_empty()).map(str::to_string).collect();
        let subject_span = RelevantSpan::new(num(f[7])?, num(f[8])?)?;
        subject_span.check_within(tokens.len())?;
        Ok(CorpusItem {
            language: f[0].parse()?,
            template,
            condition,
            tokens,
            congruent: f[5].to_string(),
            incongruent: f[6].to_string(),
            subject_span,
        })
    }
}

pub fn write_corpus(items: &[CorpusItem], mut out: impl Write) -> std::io::Result<()> {
    for item in items {
        writeln!(out, "{}", item.to_tsv())?;
    }
    Ok(())
}

pub fn parse_corpus(text: &str) -> Result<Vec<CorpusItem>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| CorpusItem::from_tsv(l).map_err(|e| Error::Parse(format!("line {}: {e}", i + 1))))
        .collect()
}

/// Vocabulary covering every surface form of the given lexicons.
pub fn vocabulary(lexicons: &[&Lexicon]) -> Vocab {
    let forms: Vec<String> = lexicons.iter().flat_map(|l| l.surface_forms()).collect();
    Vocab::from_words(forms.iter().map(String::as_str))
}

/// Categories of the template that get a lexical filler chosen per item.
fn filler_categories(template: TemplateId) -> Vec<Category> {
    template
        .slots()
        .iter()
        .copied()
        .filter(|c| matches!(c, Category::Noun | Category::Verb | Category::ClauseVerb | Category::Name | Category::Prep))
        .collect()
}

/// Lexical choices for one sentence, one entry per filler slot.
struct Fillers<'a> {
    entries: Vec<&'a LexiconEntry>,
}

/// Enumerates filler tuples in mixed radix. Nouns within a sentence are
/// pairwise distinct, as are verbs.
struct FillerSpace<'a> {
    categories: Vec<Category>,
    pools: Vec<Vec<&'a LexiconEntry>>,
    radices: Vec<usize>,
}

impl<'a> FillerSpace<'a> {
    fn new(template: TemplateId, lexicon: &'a Lexicon) -> Result<Self> {
        let categories = filler_categories(template);
        let mut used = std::collections::HashMap::new();
        let mut pools = Vec::new();
        let mut radices = Vec::new();
        for &c in &categories {
            let pool = lexicon.of(c);
            let k = used.entry(c).or_insert(0usize);
            let distinct = matches!(c, Category::Noun | Category::Verb);
            let radix = if distinct { pool.len().saturating_sub(*k) } else { pool.len() };
            if radix == 0 {
                return Err(Error::InvalidInput(format!(
                    "lexicon has too few `{}` entries for template {template}",
                    c.name()
                )));
            }
            *k += 1;
            pools.push(pool);
            radices.push(radix);
        }
        Ok(FillerSpace { categories, pools, radices })
    }

    fn size(&self) -> usize {
        self.radices.iter().product()
    }

    fn decode(&self, mut index: usize) -> Fillers<'a> {
        let mut taken: Vec<(Category, usize)> = Vec::new();
        let mut entries = Vec::with_capacity(self.radices.len());
        for ((&c, pool), &radix) in self.categories.iter().zip(&self.pools).zip(&self.radices) {
            let digit = index % radix;
            index /= radix;
            let pick = if matches!(c, Category::Noun | Category::Verb) {
                (0..pool.len())
                    .filter(|i| !taken.contains(&(c, *i)))
                    .nth(digit)
                    .expect("radix bounds the remaining pool")
            } else {
                digit
            };
            taken.push((c, pick));
            entries.push(pool[pick]);
        }
        Fillers { entries }
    }
}

fn plural_determiner(lexicon: &Lexicon) -> Result<&str> {
    Ok(&lexicon.first(Category::Det)?.plural)
}

fn instantiate_with(
    template: TemplateId,
    lexicon: &Lexicon,
    fillers: &Fillers<'_>,
    condition: &Condition,
) -> Result<CorpusItem> {
    let slots = template.slots();
    let plural_det = plural_determiner(lexicon)?;
    let mut fill = fillers.entries.iter();
    let mut words: Vec<String> = Vec::with_capacity(slots.len());
    let mut noun_index = 0usize;
    let mut last_noun = Number::Singular;
    let mut verb_pair = None;
    for (pos, &cat) in slots.iter().enumerate() {
        let is_target_verb = pos + 1 == slots.len();
        let word = match cat {
            Category::Det => {
                // agrees with the next noun
                let number = condition.numbers[noun_index];
                let noun_pos = fillers
                    .entries
                    .iter()
                    .filter(|e| e.category == Category::Noun)
                    .nth(noun_index)
                    .expect("det precedes a noun");
                match number {
                    Number::Singular => noun_pos.determiner.clone().expect("nouns carry a determiner"),
                    Number::Plural => plural_det.to_string(),
                }
            }
            Category::Conj => lexicon.first(Category::Conj)?.singular.clone(),
            Category::Comp => lexicon.first(Category::Comp)?.singular.clone(),
            Category::Noun => {
                let e = fill.next().expect("filler per slot");
                let number = condition.numbers[noun_index];
                noun_index += 1;
                last_noun = number;
                e.form(number).to_string()
            }
            Category::Verb | Category::ClauseVerb => {
                let e = fill.next().expect("filler per slot");
                if is_target_verb {
                    let n = condition.target_number();
                    verb_pair = Some((e.form(n).to_string(), e.form(n.flip()).to_string()));
                    continue;
                }
                e.form(last_noun).to_string()
            }
            Category::Name | Category::Prep => fill.next().expect("filler per slot").singular.clone(),
        };
        words.push(if pos == 0 { capitalize(&word) } else { word });
    }
    let (congruent, incongruent) = verb_pair.expect("templates end in a verb");
    let subject = template.subject_slot();
    Ok(CorpusItem {
        language: lexicon.language,
        template,
        condition: condition.clone(),
        tokens: words,
        congruent,
        incongruent,
        subject_span: RelevantSpan::single(subject),
    })
}

/// Builds one item from explicitly chosen lexical fillers, given in slot
/// order by singular form (nouns, verbs, clause verbs, names, prepositions).
pub fn instantiate(
    template: TemplateId,
    lexicon: &Lexicon,
    fillers: &[&str],
    condition: &Condition,
) -> Result<CorpusItem> {
    let categories = filler_categories(template);
    if categories.len() != fillers.len() {
        return Err(Error::InvalidInput(format!(
            "template {template} takes {} fillers, got {}",
            categories.len(),
            fillers.len()
        )));
    }
    let entries = categories
        .iter()
        .zip(fillers)
        .map(|(&c, &f)| {
            lexicon
                .find(c, f)
                .ok_or_else(|| Error::InvalidInput(format!("`{f}` is not a {} in the lexicon", c.name())))
        })
        .collect::<Result<Vec<_>>>()?;
    instantiate_with(template, lexicon, &Fillers { entries }, condition)
}

fn check_vocab(template: TemplateId, lexicon: &Lexicon, vocab: &Vocab) -> Result<()> {
    let mut needed: Vec<Category> = template.slots().to_vec();
    needed.push(Category::Det);
    for c in needed {
        let entries = lexicon.of(c);
        if entries.is_empty() {
            return Err(Error::InvalidInput(format!("lexicon category `{}` is empty", c.name())));
        }
        for e in entries {
            let mut forms = vec![e.singular.clone(), e.plural.clone()];
            if let Some(d) = &e.determiner {
                forms.push(d.clone());
                forms.push(capitalize(d));
            }
            if c == Category::Det {
                forms.push(capitalize(&e.plural));
            }
            if let Some(missing) = forms.iter().find(|f| vocab.get(f).is_none()) {
                return Err(Error::OutOfVocabulary(missing.clone()));
            }
        }
    }
    Ok(())
}

/// Generates up to `limit` items per condition. Filler tuples are drawn
/// without replacement from the full cross product in a seed-determined
/// order, and the same tuples are reused across every condition.
pub fn generate_corpus(
    language: Language,
    template: TemplateId,
    lexicon: &Lexicon,
    vocab: &Vocab,
    limit: usize,
    seed: u64,
) -> Result<Vec<CorpusItem>> {
    if lexicon.language != language {
        return Err(Error::InvalidInput(format!(
            "lexicon is for `{}`, requested `{language}`",
            lexicon.language
        )));
    }
    check_vocab(template, lexicon, vocab)?;
    let space = FillerSpace::new(template, lexicon)?;
    let total = space.size();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picks = rand::seq::index::sample(&mut rng, total, limit.min(total));

    let mut items = Vec::with_capacity(picks.len() * template.condition_count());
    let mut seen = HashSet::new();
    for condition in Condition::all(template) {
        for index in picks.iter() {
            let item = instantiate_with(template, lexicon, &space.decode(index), &condition)?;
            if seen.insert(item.sentence()) {
                items.push(item);
            }
        }
    }
    Ok(items)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lex(lang: Language) -> Lexicon {
        Lexicon::builtin(lang)
    }

    fn cond(code: &str, template: TemplateId) -> Condition {
        Condition::parse(code, template.target_noun()).unwrap()
    }

    #[test]
    fn simple_english_row() {
        let l = lex(Language::En);
        let item = instantiate(TemplateId::Simple, &l, &["boy", "greets"], &cond("S", TemplateId::Simple)).unwrap();
        assert_eq!(item.tokens, ["The", "boy"]);
        assert_eq!(item.congruent, "greets");
        assert_eq!(item.incongruent, "greet");
        assert_eq!(item.subject_span, RelevantSpan::single(1));
    }

    #[test]
    fn noun_pp_dutch_row() {
        let l = lex(Language::Nl);
        let t = TemplateId::NounPP;
        let item = instantiate(t, &l, &["jongen", "bij", "auto", "groet"], &cond("PS", t)).unwrap();
        assert_eq!(item.sentence(), "De jongens bij de auto groeten");
        assert_eq!(item.incongruent, "groet");
    }

    #[test]
    fn that_noun_pp_english_sps() {
        let l = lex(Language::En);
        let t = TemplateId::ThatNounPP;
        let item = instantiate(t, &l, &["boy", "thinks", "mother", "at", "car", "misses"], &cond("SPS", t)).unwrap();
        assert_eq!(item.sentence(), "The boy thinks that the mothers at the car miss");
        assert_eq!(item.congruent, "miss");
        assert_eq!(item.tokens[item.subject_span.start], "mothers");
        let spp = instantiate(t, &l, &["boy", "thinks", "mother", "at", "car", "misses"], &cond("SPP", t)).unwrap();
        assert_eq!(spp.sentence(), "The boy thinks that the mothers at the cars miss");
        assert_eq!(spp.incongruent, "misses");
    }

    #[test]
    fn dutch_het_nouns() {
        let l = lex(Language::Nl);
        let t = TemplateId::Simple;
        let sg = instantiate(t, &l, &["meisje", "groet"], &cond("S", t)).unwrap();
        let pl = instantiate(t, &l, &["meisje", "groet"], &cond("P", t)).unwrap();
        assert_eq!(sg.sentence(), "Het meisje groet");
        assert_eq!(pl.sentence(), "De meisjes groeten");
    }

    #[test]
    fn counts_per_condition() {
        let l = lex(Language::En);
        let v = vocabulary(&[&l]);
        let items = generate_corpus(Language::En, TemplateId::Simple, &l, &v, 5, 1).unwrap();
        assert_eq!(items.len(), 10);
        let nl = lex(Language::Nl);
        let v = vocabulary(&[&nl]);
        let items = generate_corpus(Language::Nl, TemplateId::ThatNounPP, &nl, &v, 2, 1).unwrap();
        assert_eq!(items.len(), 16);
    }

    #[test]
    fn full_enumeration_contains_table_rows() {
        let l = lex(Language::Nl);
        let v = vocabulary(&[&l]);
        let items = generate_corpus(Language::Nl, TemplateId::NounPP, &l, &v, usize::MAX, 3).unwrap();
        // 10 nouns * 9 attractors * 4 preps * 10 verbs per condition
        assert_eq!(items.len(), 4 * 10 * 9 * 4 * 10);
        assert!(items.iter().any(|i| i.sentence() == "De jongens bij de auto groeten"));
    }

    #[test]
    fn oov_form_is_named() {
        let l = lex(Language::En);
        let v = Vocab::from_words(["The", "the", "boy", "boys"]);
        let err = generate_corpus(Language::En, TemplateId::Simple, &l, &v, 1, 0).unwrap_err();
        assert!(matches!(err, Error::OutOfVocabulary(_)), "{err}");
    }

    #[test]
    fn empty_category_rejected() {
        let l = Lexicon::parse(Language::En, "det\tthe\tthe\nnoun\tboy\tboys\tthe\n").unwrap();
        let v = vocabulary(&[&l]);
        assert!(generate_corpus(Language::En, TemplateId::Simple, &l, &v, 1, 0).is_err());
    }

    #[test]
    fn tsv_round_trip() {
        let l = lex(Language::En);
        let v = vocabulary(&[&l]);
        let items = generate_corpus(Language::En, TemplateId::SConj, &l, &v, 3, 9).unwrap();
        let mut buf = Vec::new();
        write_corpus(&items, &mut buf).unwrap();
        assert_eq!(parse_corpus(std::str::from_utf8(&buf).unwrap()).unwrap(), items);
    }
}
