//! Number-agreement accuracy and subject attribution over corpus items,
//! reported per template and condition.
//!
//! Both scores compare the congruent and incongruent verb at the last
//! prefix position, using logits. A tie counts as incorrect.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::corpus::{Category, CorpusItem, EncodedItem, TemplateId};
use crate::decomp::{decomposed_forward, logit_attribution, InteractionPolicy, RelevantSpan};
use crate::error::{Error, Result};
use crate::model::Model;
use crate::parallel::{par_map, Jobs};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    Correct,
    Incorrect,
    Tie,
}

impl Outcome {
    pub fn compare(congruent: f64, incongruent: f64) -> Outcome {
        if congruent > incongruent {
            Outcome::Correct
        } else if congruent == incongruent {
            Outcome::Tie
        } else {
            Outcome::Incorrect
        }
    }

    pub fn is_correct(self) -> bool {
        self == Outcome::Correct
    }
}

/// Prediction point: the last prefix token.
fn prediction_point(item: &EncodedItem) -> Result<usize> {
    item.tokens
        .len()
        .checked_sub(1)
        .ok_or_else(|| Error::InvalidInput("corpus item has an empty prefix".into()))
}

fn encode_all(model: &Model, items: &[CorpusItem]) -> Result<Vec<EncodedItem>> {
    if items.is_empty() {
        return Err(Error::InvalidInput("no corpus items to evaluate".into()));
    }
    items
        .iter()
        .map(|item| {
            let enc = item.encode(&model.vocab)?;
            model.check_tokens(&enc.tokens)?;
            model.check_tokens(&[enc.congruent, enc.incongruent])?;
            Ok(enc)
        })
        .collect()
}

fn collect<T>(results: Vec<Result<T>>) -> Result<Vec<T>> {
    results.into_iter().collect()
}

pub fn na_outcome(model: &Model, item: &EncodedItem) -> Result<Outcome> {
    let t = prediction_point(item)?;
    let logits = model.forward(&item.tokens)?;
    Ok(Outcome::compare(logits[t][item.congruent], logits[t][item.incongruent]))
}

pub fn attribution_outcome(model: &Model, item: &EncodedItem, policy: &InteractionPolicy) -> Result<Outcome> {
    let t = prediction_point(item)?;
    let logits = decomposed_forward(model, &item.tokens, item.span, policy)?;
    Ok(Outcome::compare(
        logit_attribution(&logits, t, item.congruent)?,
        logit_attribution(&logits, t, item.incongruent)?,
    ))
}

/// One report row: a template and condition.
#[derive(Clone, Debug, PartialEq)]
pub struct ReportRow {
    pub template: TemplateId,
    pub condition: String,
    pub target_index: usize,
    pub n: usize,
    pub na_accuracy: Option<f64>,
    pub attribution_score: Option<f64>,
    pub attribution_ties: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AttributionReport {
    pub policy: Option<String>,
    pub model: String,
    pub rows: Vec<ReportRow>,
}

pub const REPORT_COLUMNS: &str =
    "template,condition,target_index,n,na_accuracy,attribution_score,attribution_ties,policy,model";

fn percent(outcomes: &[Outcome]) -> f64 {
    let correct = outcomes.iter().filter(|o| o.is_correct()).count();
    100.0 * correct as f64 / outcomes.len() as f64
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|p| format!("{p:.2}")).unwrap_or_default()
}

impl AttributionReport {
    /// Groups per-item outcomes into rows ordered by template, then
    /// condition. `na` and `attribution`, when given, align with `items`.
    pub fn build(
        items: &[CorpusItem],
        na: Option<&[Outcome]>,
        attribution: Option<&[Outcome]>,
        policy: Option<&InteractionPolicy>,
        model: &str,
    ) -> Result<Self> {
        let mut groups: BTreeMap<(TemplateId, usize, usize), (String, Vec<usize>)> = BTreeMap::new();
        for (i, item) in items.iter().enumerate() {
            let key = (item.template, item.condition.target, item.condition.ordinal());
            groups.entry(key).or_insert_with(|| (item.condition.code(), Vec::new())).1.push(i);
        }
        for outcomes in [na, attribution].into_iter().flatten() {
            if outcomes.len() != items.len() {
                return Err(Error::DimensionMismatch(format!(
                    "{} outcomes for {} items",
                    outcomes.len(),
                    items.len()
                )));
            }
        }
        let pick = |o: &[Outcome], idx: &[usize]| idx.iter().map(|&i| o[i]).collect::<Vec<_>>();
        let rows = groups
            .into_iter()
            .map(|((template, target_index, _), (condition, idx))| {
                let na_cell = na.map(|o| pick(o, &idx));
                let attr_cell = attribution.map(|o| pick(o, &idx));
                ReportRow {
                    template,
                    condition,
                    target_index,
                    n: idx.len(),
                    na_accuracy: na_cell.as_deref().map(percent),
                    attribution_score: attr_cell.as_deref().map(percent),
                    attribution_ties: attr_cell
                        .as_deref()
                        .map_or(0, |c| c.iter().filter(|o| **o == Outcome::Tie).count()),
                }
            })
            .collect();
        Ok(AttributionReport { policy: policy.map(|p| p.name.clone()), model: model.to_string(), rows })
    }

    pub fn total_ties(&self) -> usize {
        self.rows.iter().map(|r| r.attribution_ties).sum()
    }

    /// Human-readable warnings, e.g. rows where every attribution tied.
    pub fn warnings(&self) -> Vec<String> {
        self.rows
            .iter()
            .filter(|r| r.attribution_ties > 0)
            .map(|r| {
                format!(
                    "{} {}: {} of {} attribution comparisons tied (counted as incorrect)",
                    r.template, r.condition, r.attribution_ties, r.n
                )
            })
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(REPORT_COLUMNS);
        out.push('\n');
        let policy = self.policy.as_deref().unwrap_or("");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                r.template,
                r.condition,
                r.target_index,
                r.n,
                fmt_opt(r.na_accuracy),
                fmt_opt(r.attribution_score),
                r.attribution_ties,
                policy,
                self.model
            );
        }
        out
    }
}

/// NA accuracy per condition.
pub fn na_accuracy(model: &Model, items: &[CorpusItem], model_id: &str, jobs: Jobs) -> Result<AttributionReport> {
    let encoded = encode_all(model, items)?;
    let outcomes = collect(par_map(&encoded, jobs, |e| na_outcome(model, e)))?;
    AttributionReport::build(items, Some(&outcomes), None, None, model_id)
}

/// Subject attribution per condition; NA accuracy is filled in too.
pub fn subject_attribution(
    model: &Model,
    items: &[CorpusItem],
    policy: &InteractionPolicy,
    model_id: &str,
    jobs: Jobs,
) -> Result<AttributionReport> {
    let encoded = encode_all(model, items)?;
    let both = collect(par_map(&encoded, jobs, |e| {
        Ok((na_outcome(model, e)?, attribution_outcome(model, e, policy)?))
    }))?;
    let (na, attr): (Vec<_>, Vec<_>) = both.into_iter().unzip();
    AttributionReport::build(items, Some(&na), Some(&attr), Some(policy), model_id)
}

/// Beta logits of the congruent and incongruent verb at the prediction
/// point, with each prefix position in turn as the relevant span.
pub fn slot_attributions(model: &Model, item: &EncodedItem, policy: &InteractionPolicy) -> Result<Vec<(f64, f64)>> {
    let t = prediction_point(item)?;
    (0..item.tokens.len())
        .map(|slot| {
            let logits = decomposed_forward(model, &item.tokens, RelevantSpan::single(slot), policy)?;
            Ok((logit_attribution(&logits, t, item.congruent)?, logit_attribution(&logits, t, item.incongruent)?))
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct SlotRow {
    pub template: TemplateId,
    pub condition: String,
    pub slot: usize,
    pub category: Category,
    pub n: usize,
    pub congruent: f64,
    pub incongruent: f64,
}

pub const SLOT_COLUMNS: &str = "template,condition,slot,category,n,mean_congruent,mean_incongruent,policy,model";

/// Mean per-slot attributions for each condition of a single template.
pub fn aggregate_attributions(
    model: &Model,
    items: &[CorpusItem],
    policy: &InteractionPolicy,
    jobs: Jobs,
) -> Result<Vec<SlotRow>> {
    let encoded = encode_all(model, items)?;
    let template = items[0].template;
    if let Some(other) = items.iter().find(|i| i.template != template) {
        return Err(Error::InvalidInput(format!(
            "per-slot aggregation needs a single template, found {template} and {}",
            other.template
        )));
    }
    let per_item = collect(par_map(&encoded, jobs, |e| slot_attributions(model, e, policy)))?;
    let categories = template.prefix_slots();

    let mut groups: BTreeMap<(usize, usize), (String, Vec<usize>)> = BTreeMap::new();
    for (i, item) in items.iter().enumerate() {
        if item.tokens.len() != categories.len() {
            return Err(Error::InvalidInput(format!("item `{}` does not fit template {template}", item.sentence())));
        }
        let key = (item.condition.target, item.condition.ordinal());
        groups.entry(key).or_insert_with(|| (item.condition.code(), Vec::new())).1.push(i);
    }
    let mut rows = Vec::new();
    for (condition, idx) in groups.into_values() {
        let n = idx.len();
        for (slot, &category) in categories.iter().enumerate() {
            let (c, ic) = idx
                .iter()
                .map(|&i| per_item[i][slot])
                .fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
            rows.push(SlotRow {
                template,
                condition: condition.clone(),
                slot,
                category,
                n,
                congruent: c / n as f64,
                incongruent: ic / n as f64,
            });
        }
    }
    Ok(rows)
}

pub fn slot_rows_to_csv(rows: &[SlotRow], policy: &InteractionPolicy, model_id: &str) -> String {
    let mut out = String::from(SLOT_COLUMNS);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{:e},{:e},{},{}",
            r.template,
            r.condition,
            r.slot,
            r.category.name(),
            r.n,
            r.congruent,
            r.incongruent,
            policy.name,
            model_id
        );
    }
    out
}
