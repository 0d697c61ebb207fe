//! Prompt catalog and slot rendering.
//!
//! Templates carry named slots in bracket notation (`[agent]`, `[K_0]`,
//! `[the list of variables by Defender]`). [`render`] binds every slot from
//! the query, letting caller-supplied `extra` bindings override, and fails
//! with the full list of unbound slots rather than emitting a half-filled
//! prompt.

mod catalog;
mod diff;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::causal_model::{CausalQuery, Covariates};

pub use diff::diff_words;

/// Catalog identifier. Declaration order is the catalog's stable order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TemplateId {
    P1,
    P2,
    P2X,
    P1X,
    A0,
    A1,
    A2,
    A3,
    C1,
    C2,
    #[serde(rename = "DID_EMPH")]
    DidEmph,
    R1,
    R2,
    R3,
    AD1,
    P3,
    #[serde(rename = "V_UNQUANT")]
    VUnquant,
    #[serde(rename = "V_CHOOSE_ALL")]
    VChooseAll,
    #[serde(rename = "V_CONTRAST")]
    VContrast,
    #[serde(rename = "V_EXPLAIN_EXCL")]
    VExplainExcl,
    #[serde(rename = "M_PROBE")]
    MProbe,
}

impl TemplateId {
    pub const ALL: [TemplateId; 21] = [
        TemplateId::P1,
        TemplateId::P2,
        TemplateId::P2X,
        TemplateId::P1X,
        TemplateId::A0,
        TemplateId::A1,
        TemplateId::A2,
        TemplateId::A3,
        TemplateId::C1,
        TemplateId::C2,
        TemplateId::DidEmph,
        TemplateId::R1,
        TemplateId::R2,
        TemplateId::R3,
        TemplateId::AD1,
        TemplateId::P3,
        TemplateId::VUnquant,
        TemplateId::VChooseAll,
        TemplateId::VContrast,
        TemplateId::VExplainExcl,
        TemplateId::MProbe,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            TemplateId::P1 => "P1",
            TemplateId::P2 => "P2",
            TemplateId::P2X => "P2X",
            TemplateId::P1X => "P1X",
            TemplateId::A0 => "A0",
            TemplateId::A1 => "A1",
            TemplateId::A2 => "A2",
            TemplateId::A3 => "A3",
            TemplateId::C1 => "C1",
            TemplateId::C2 => "C2",
            TemplateId::DidEmph => "DID_EMPH",
            TemplateId::R1 => "R1",
            TemplateId::R2 => "R2",
            TemplateId::R3 => "R3",
            TemplateId::AD1 => "AD1",
            TemplateId::P3 => "P3",
            TemplateId::VUnquant => "V_UNQUANT",
            TemplateId::VChooseAll => "V_CHOOSE_ALL",
            TemplateId::VContrast => "V_CONTRAST",
            TemplateId::VExplainExcl => "V_EXPLAIN_EXCL",
            TemplateId::MProbe => "M_PROBE",
        }
    }
}

impl fmt::Display for TemplateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TemplateId {
    type Err = PromptError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TemplateId::ALL
            .into_iter()
            .find(|id| id.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| PromptError::UnknownTemplate(s.to_string()))
    }
}

/// Channel a template is sent on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StepRole {
    System,
    User,
}

/// How a template combines with others.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateKind {
    /// A complete message.
    Standalone,
    /// Substitutes the given phrase inside a base template.
    Replaces(&'static str),
    /// Appended as a trailing sentence to a refinement template.
    Appended,
}

/// A named slot and the bracket marker it occupies in template bodies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Slot {
    Agent,
    Scenario,
    Setting,
    Treatment,
    Outcome,
    OutcomeT,
    OutcomeLevel,
    Confounders,
    Covariates,
    InitialCount,
    RefinedCount,
    ControlCount,
    CriteriaCount,
    DefenderList,
    AdversaryArguments,
    ConfoundersCovariates,
    Excluded,
}

impl Slot {
    pub const ALL: [Slot; 17] = [
        Slot::Agent,
        Slot::Scenario,
        Slot::Setting,
        Slot::Treatment,
        Slot::Outcome,
        Slot::OutcomeT,
        Slot::OutcomeLevel,
        Slot::Confounders,
        Slot::Covariates,
        Slot::InitialCount,
        Slot::RefinedCount,
        Slot::ControlCount,
        Slot::CriteriaCount,
        Slot::DefenderList,
        Slot::AdversaryArguments,
        Slot::ConfoundersCovariates,
        Slot::Excluded,
    ];

    /// Binding key used in `extra` maps and `slot_bindings`.
    pub fn key(&self) -> &'static str {
        match self {
            Slot::Agent => "agent",
            Slot::Scenario => "scenario",
            Slot::Setting => "setting",
            Slot::Treatment => "treatment",
            Slot::Outcome => "outcome",
            Slot::OutcomeT => "outcome_t",
            Slot::OutcomeLevel => "outcome_level",
            Slot::Confounders => "confounders",
            Slot::Covariates => "covariates",
            Slot::InitialCount => "K_0",
            Slot::RefinedCount => "K",
            Slot::ControlCount => "L_0",
            Slot::CriteriaCount => "J_0",
            Slot::DefenderList => "defender_list",
            Slot::AdversaryArguments => "adversary_arguments",
            Slot::ConfoundersCovariates => "confounders_covariates",
            Slot::Excluded => "excluded",
        }
    }

    /// Text between the brackets in a template body.
    pub fn marker_name(&self) -> &'static str {
        match self {
            Slot::DefenderList => "the list of variables by Defender",
            Slot::AdversaryArguments => "the arguments by Adversary",
            Slot::ConfoundersCovariates => "confounders, covariates",
            other => other.key(),
        }
    }

    pub fn marker(&self) -> String {
        format!("[{}]", self.marker_name())
    }

    fn from_marker_name(name: &str) -> Option<Slot> {
        Slot::ALL.into_iter().find(|s| s.marker_name() == name)
    }

    fn from_key_or_marker(name: &str) -> Option<Slot> {
        Slot::ALL
            .into_iter()
            .find(|s| s.key() == name || s.marker_name() == name)
    }
}

/// A catalog entry.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PromptTemplate {
    pub id: TemplateId,
    pub body: &'static str,
    pub slots: BTreeSet<String>,
    pub step_role: StepRole,
    pub kind: TemplateKind,
}

/// A fully substituted message body.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderedPrompt {
    pub template_id: TemplateId,
    pub text: String,
    pub slot_bindings: BTreeMap<String, String>,
}

impl RenderedPrompt {
    /// Prefix the prompt with carried-forward context, separated by a blank line.
    pub fn with_context(mut self, context: &str) -> Self {
        self.text = format!("{}\n\n{}", context.trim_end(), self.text);
        self.slot_bindings
            .insert("carried_context".to_string(), context.to_string());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PromptError {
    #[error("template {template} has unbound slots: {}", .slots.join(", "))]
    MissingSlots {
        template: TemplateId,
        slots: Vec<String>,
    },
    #[error("unknown template `{0}`")]
    UnknownTemplate(String),
    #[error("unknown fixture `{0}`")]
    UnknownFixture(String),
}

/// How budget counts appear in rendered text.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NumberStyle {
    #[default]
    Digits,
    Words,
}

/// Variant switches applied on top of the base template.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderOptions {
    pub number_style: NumberStyle,
    /// Swap "choose [K] factors" for "choose all factors".
    pub choose_all: bool,
    /// Append the contrast sanity-check sentence to refinement prompts.
    pub contrast: bool,
    /// Ask for factors that are hard to quantify in the search prompt.
    pub hard_to_quantify: bool,
    /// Request one list per category label.
    pub category_split: Vec<String>,
    /// Response-format instruction carried on the system message.
    pub format_instruction: Option<String>,
}

fn entry(id: TemplateId) -> &'static catalog::Entry {
    catalog::CATALOG
        .iter()
        .find(|e| e.id == id)
        .expect("every id has a catalog entry")
}

/// Slot marker names appearing in `body`, in first-occurrence order.
fn slots_in(body: &str) -> Vec<Slot> {
    let mut out = Vec::new();
    for (_, name) in markers(body) {
        if let Some(slot) = Slot::from_marker_name(name) {
            if !out.contains(&slot) {
                out.push(slot);
            }
        }
    }
    out
}

/// Every `[...]` span as (byte offset of '[', inner text).
fn markers(body: &str) -> Vec<(usize, &str)> {
    let mut out = Vec::new();
    let mut rest = 0;
    while let Some(open) = body[rest..].find('[') {
        let start = rest + open;
        match body[start + 1..].find(|c| c == ']' || c == '[') {
            Some(len) if body.as_bytes()[start + 1 + len] == b']' => {
                out.push((start, &body[start + 1..start + 1 + len]));
                rest = start + len + 2;
            }
            Some(len) => rest = start + 1 + len,
            None => break,
        }
    }
    out
}

/// Single-pass substitution; bound values are never re-scanned.
fn substitute(body: &str, bindings: &BTreeMap<Slot, String>) -> String {
    let mut out = String::with_capacity(body.len() + 64);
    let mut cursor = 0;
    for (start, name) in markers(body) {
        let Some(slot) = Slot::from_marker_name(name) else {
            continue;
        };
        let Some(value) = bindings.get(&slot) else {
            continue;
        };
        out.push_str(&body[cursor..start]);
        out.push_str(value);
        cursor = start + name.len() + 2;
    }
    out.push_str(&body[cursor..]);
    out
}

pub fn template(id: TemplateId) -> PromptTemplate {
    let e = entry(id);
    PromptTemplate {
        id: e.id,
        body: e.body,
        slots: slots_in(e.body)
            .into_iter()
            .map(|s| s.marker_name().to_string())
            .collect(),
        step_role: e.role,
        kind: e.kind,
    }
}

/// The full catalog in stable order.
pub fn list_templates() -> Vec<PromptTemplate> {
    TemplateId::ALL.into_iter().map(template).collect()
}

/// Join with commas and a final "and" ("a", "a and b", "a, b, and c").
pub fn join_list(items: &[&str]) -> String {
    match items {
        [] => String::new(),
        [one] => one.to_string(),
        [a, b] => format!("{a} and {b}"),
        [init @ .., last] => format!("{}, and {}", init.join(", "), last),
    }
}

/// The clause that fills `[covariates]`.
pub fn covariate_clause(c: &Covariates) -> String {
    let terms = c.terms();
    if !c.specific_values.iter().all(|v| v.trim().is_empty()) {
        terms.join(", ")
    } else {
        format!("specific {}", join_list(&terms))
    }
}

/// The substituted outcome used to adapt C2 to parallel trends.
pub fn did_outcome(outcome_t: &str, treatment: &str) -> String {
    format!("average temporal changes in {outcome_t} during the time of no {treatment}")
}

pub fn format_count(n: u32, style: NumberStyle) -> String {
    match style {
        NumberStyle::Digits => n.to_string(),
        NumberStyle::Words => number_words(n),
    }
}

fn number_words(n: u32) -> String {
    const ONES: [&str; 20] = [
        "zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten",
        "eleven", "twelve", "thirteen", "fourteen", "fifteen", "sixteen", "seventeen", "eighteen",
        "nineteen",
    ];
    const TENS: [&str; 10] = [
        "", "", "twenty", "thirty", "forty", "fifty", "sixty", "seventy", "eighty", "ninety",
    ];
    match n {
        0..=19 => ONES[n as usize].to_string(),
        20..=99 => {
            let (t, o) = (n / 10, n % 10);
            if o == 0 {
                TENS[t as usize].to_string()
            } else {
                format!("{}-{}", TENS[t as usize], ONES[o as usize])
            }
        }
        100..=999 => {
            let (h, r) = (n / 100, n % 100);
            if r == 0 {
                format!("{} hundred", ONES[h as usize])
            } else {
                format!("{} hundred {}", ONES[h as usize], number_words(r))
            }
        }
        _ => n.to_string(),
    }
}

fn query_bindings(q: &CausalQuery, style: NumberStyle) -> BTreeMap<Slot, String> {
    let mut b = BTreeMap::new();
    b.insert(Slot::Agent, q.agent.trim().to_string());
    b.insert(Slot::Scenario, q.scenario.trim().to_string());
    b.insert(Slot::Setting, q.scenario.trim().to_string());
    b.insert(Slot::Treatment, q.treatment.trim().to_string());
    b.insert(Slot::Outcome, q.outcome.trim().to_string());
    if let Some(t) = q.outcome_t.as_deref().filter(|t| !t.trim().is_empty()) {
        b.insert(Slot::OutcomeT, t.trim().to_string());
        let level = q
            .outcome_level
            .as_deref()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map_or_else(|| format!("level of {}", t.trim()), str::to_string);
        b.insert(Slot::OutcomeLevel, level);
    }
    if let Some(c) = q.confounders.as_deref().filter(|c| !c.trim().is_empty()) {
        b.insert(Slot::Confounders, c.trim().to_string());
    }
    if let Some(cov) = q.effective_covariates() {
        b.insert(Slot::Covariates, covariate_clause(cov));
    }
    let mut cc: Vec<&str> = q
        .confounders
        .as_deref()
        .map(str::trim)
        .filter(|c| !c.is_empty())
        .into_iter()
        .collect();
    if let Some(cov) = q.effective_covariates() {
        cc.extend(cov.terms());
    }
    if !cc.is_empty() {
        b.insert(Slot::ConfoundersCovariates, join_list(&cc));
    }
    let counts = [
        (Slot::InitialCount, q.budgets.k0),
        (Slot::RefinedCount, q.budgets.k),
        (Slot::ControlCount, q.budgets.l0),
        (Slot::CriteriaCount, q.budgets.j0),
    ];
    for (slot, value) in counts {
        if let Some(n) = value {
            b.insert(slot, format_count(n, style));
        }
    }
    b
}

fn apply_variants(id: TemplateId, opts: &RenderOptions) -> String {
    let mut body = entry(id).body.to_string();
    if opts.hard_to_quantify && body.contains(catalog::QUANTIFIABLE_PHRASE) {
        body = body.replace(catalog::QUANTIFIABLE_PHRASE, entry(TemplateId::VUnquant).body);
    }
    if opts.choose_all && body.contains(catalog::CHOOSE_K_PHRASE) {
        body = body.replace(catalog::CHOOSE_K_PHRASE, entry(TemplateId::VChooseAll).body);
    }
    let refinement = matches!(id, TemplateId::P2 | TemplateId::P2X | TemplateId::A3);
    if opts.contrast && refinement {
        body.push(' ');
        body.push_str(entry(TemplateId::VContrast).body);
    }
    let splits: Vec<&str> = opts
        .category_split
        .iter()
        .map(|s| s.trim())
        .filter(|s| !s.is_empty())
        .collect();
    let listing = matches!(
        id,
        TemplateId::P1
            | TemplateId::P2
            | TemplateId::P2X
            | TemplateId::A1
            | TemplateId::A2
            | TemplateId::A3
            | TemplateId::C1
            | TemplateId::C2
    );
    if listing && splits.len() > 1 {
        body.push_str(&format!(" create separate lists for {}.", join_list(&splits)));
    }
    if id == TemplateId::A0 {
        if let Some(instr) = opts.format_instruction.as_deref().filter(|s| !s.trim().is_empty()) {
            body.push(' ');
            body.push_str(instr.trim());
        }
    }
    body
}

/// Render with default options (digits, no variants).
pub fn render(
    id: TemplateId,
    q: &CausalQuery,
    extra: &BTreeMap<String, String>,
) -> Result<RenderedPrompt, PromptError> {
    render_with(id, q, extra, &RenderOptions::default())
}

pub fn render_with(
    id: TemplateId,
    q: &CausalQuery,
    extra: &BTreeMap<String, String>,
    opts: &RenderOptions,
) -> Result<RenderedPrompt, PromptError> {
    let body = apply_variants(id, opts);
    let mut bindings = query_bindings(q, opts.number_style);
    for (k, v) in extra {
        if let Some(slot) = Slot::from_key_or_marker(k) {
            bindings.insert(slot, v.clone());
        }
    }
    let needed = slots_in(&body);
    let missing: Vec<String> = needed
        .iter()
        .filter(|s| !bindings.contains_key(s))
        .map(|s| s.key().to_string())
        .collect();
    if !missing.is_empty() {
        return Err(PromptError::MissingSlots {
            template: id,
            slots: missing,
        });
    }
    bindings.retain(|slot, _| needed.contains(slot));
    let text = substitute(&body, &bindings);
    Ok(RenderedPrompt {
        template_id: id,
        text,
        slot_bindings: bindings
            .into_iter()
            .map(|(s, v)| (s.key().to_string(), v))
            .collect(),
    })
}

/// Identifiers of the stored example prompts.
pub fn fixture_ids() -> Vec<&'static str> {
    catalog::FIXTURES.iter().map(|(id, _, _)| *id).collect()
}

/// A stored example prompt, byte-for-byte.
pub fn render_fixture(example_id: &str) -> Result<RenderedPrompt, PromptError> {
    catalog::FIXTURES
        .iter()
        .find(|(id, _, _)| id.eq_ignore_ascii_case(example_id.trim()))
        .map(|(_, template_id, text)| RenderedPrompt {
            template_id: *template_id,
            text: (*text).to_string(),
            slot_bindings: BTreeMap::new(),
        })
        .ok_or_else(|| PromptError::UnknownFixture(example_id.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::causal_model::{Design, SearchBudget};

    fn placeholder_query() -> CausalQuery {
        CausalQuery::new(Design::Iv, "[agent]", "[scenario]", "[treatment]", "[outcome]")
            .with_confounders("[confounders]")
    }

    fn extra(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
        pairs
            .iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect()
    }

    #[test]
    fn catalog_has_twenty_one_entries_in_stable_order() {
        let a = list_templates();
        assert_eq!(a.len(), 21);
        assert_eq!(a, list_templates());
        assert!(a.iter().any(|t| t.id == TemplateId::P2X));
        let ids: Vec<_> = a.iter().map(|t| t.id).collect();
        let mut sorted = ids.clone();
        sorted.sort();
        assert_eq!(ids, sorted);
    }

    #[test]
    fn slot_sets_agree_with_bodies() {
        for t in list_templates() {
            let in_body: BTreeSet<String> = markers(t.body)
                .into_iter()
                .map(|(_, n)| n.to_string())
                .collect();
            assert_eq!(in_body, t.slots, "{}", t.id);
        }
    }

    #[test]
    fn placeholder_render_reproduces_p1_body() {
        let r = render(TemplateId::P1, &placeholder_query(), &extra(&[("K_0", "[K_0]")])).unwrap();
        assert_eq!(r.text, template(TemplateId::P1).body);
        assert!(r.text.contains("list [K_0] factors that are quantifiable"));
    }

    #[test]
    fn p2_without_confounders_reports_missing_slot() {
        let mut q = placeholder_query();
        q.confounders = None;
        q.budgets.k = Some(5);
        let err = render(TemplateId::P2, &q, &BTreeMap::new()).unwrap_err();
        assert_eq!(
            err,
            PromptError::MissingSlots {
                template: TemplateId::P2,
                slots: vec!["confounders".into()]
            }
        );
    }

    #[test]
    fn missing_slots_are_all_named() {
        let q = placeholder_query();
        let err = render(TemplateId::P3, &q, &BTreeMap::new()).unwrap_err();
        assert_eq!(err.to_string(), "template P3 has unbound slots: adversary_arguments");
        let err = render(TemplateId::P2, &CausalQuery { confounders: None, ..q }, &BTreeMap::new())
            .unwrap_err();
        match err {
            PromptError::MissingSlots { slots, .. } => {
                assert_eq!(slots, vec!["K".to_string(), "confounders".to_string()])
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn ad1_ends_with_defender_list_after_colon() {
        let r = render(
            TemplateId::AD1,
            &placeholder_query(),
            &extra(&[("defender_list", "1. A\n2. B")]),
        )
        .unwrap();
        assert!(r.text.ends_with("valid instrument:\n\n1. A\n2. B"));
    }

    #[test]
    fn extra_accepts_marker_names_and_overrides_query() {
        let r = render(
            TemplateId::AD1,
            &placeholder_query(),
            &extra(&[("the list of variables by Defender", "X"), ("treatment", "price")]),
        )
        .unwrap();
        assert!(r.text.starts_with("you are a researcher who wants to find instrumental variables to estimate the effect of price on [outcome]"));
        assert_eq!(r.slot_bindings["treatment"], "price");
    }

    #[test]
    fn unknown_template_and_fixture() {
        assert_eq!(
            "XYZ".parse::<TemplateId>(),
            Err(PromptError::UnknownTemplate("XYZ".into()))
        );
        assert_eq!(
            render_fixture("XYZ"),
            Err(PromptError::UnknownFixture("XYZ".into()))
        );
        assert_eq!("did_emph".parse::<TemplateId>(), Ok(TemplateId::DidEmph));
    }

    #[test]
    fn fixtures_are_verbatim() {
        assert_eq!(fixture_ids().len(), 12);
        assert!(render_fixture("P1-1")
            .unwrap()
            .text
            .starts_with("you are a high school graduate."));
        assert!(render_fixture("C2-1")
            .unwrap()
            .text
            .contains("temporal changes in average wages at fast food restaurants"));
        assert!(!render_fixture("P1-1").unwrap().text.ends_with('\n'));
    }

    #[test]
    fn choose_all_and_contrast_variants() {
        let q = placeholder_query();
        let opts = RenderOptions {
            choose_all: true,
            contrast: true,
            ..RenderOptions::default()
        };
        let r = render_with(TemplateId::P2, &q, &BTreeMap::new(), &opts).unwrap();
        assert!(r.text.contains("among the 40 factors listed above, choose all factors that are most likely"));
        assert!(r.text.ends_with("explain your reasoning. also choose factors that are, in contrast, associated with [confounders]."));
        assert!(!r.slot_bindings.contains_key("K"));
    }

    #[test]
    fn hard_to_quantify_variant() {
        let q = placeholder_query();
        let opts = RenderOptions {
            hard_to_quantify: true,
            ..RenderOptions::default()
        };
        let r = render_with(TemplateId::P1, &q, &BTreeMap::new(), &opts).unwrap();
        assert!(r.text.contains("list 40 factors that are hard to quantify. explain the answers."));
    }

    #[test]
    fn number_words_style() {
        assert_eq!(number_words(40), "forty");
        assert_eq!(number_words(21), "twenty-one");
        assert_eq!(number_words(7), "seven");
        assert_eq!(number_words(120), "one hundred twenty");
        let opts = RenderOptions {
            number_style: NumberStyle::Words,
            ..RenderOptions::default()
        };
        let r = render_with(TemplateId::C2, &placeholder_query(), &BTreeMap::new(), &opts).unwrap();
        assert!(r.text.starts_with("among the forty factors listed above"));
    }

    #[test]
    fn covariate_rendering() {
        assert_eq!(
            covariate_clause(&Covariates::loose(["gender", "race", "regional origin"])),
            "specific gender, race, and regional origin"
        );
        assert_eq!(
            covariate_clause(&Covariates::specific(["family income $10K per year", "asian female"])),
            "family income $10K per year, asian female"
        );
        let q = placeholder_query().with_covariates(Covariates::loose(["gender"]));
        let r = render_with(
            TemplateId::P2X,
            &q,
            &BTreeMap::new(),
            &RenderOptions { choose_all: true, ..Default::default() },
        )
        .unwrap();
        assert!(r.text.starts_with("suppose you are [agent] in [scenario] with specific gender."));
    }

    #[test]
    fn did_emphasis_level_phrase() {
        let q = CausalQuery::new(Design::DiffInDiff, "a", "b", "law", "wages").with_outcome_t("wages");
        let r = render(TemplateId::DidEmph, &q, &BTreeMap::new()).unwrap();
        assert!(r.text.contains("do not determine the level of wages but only"));
        let q = CausalQuery {
            outcome_level: Some("wage level".into()),
            ..q
        };
        let r = render(TemplateId::DidEmph, &q, &BTreeMap::new()).unwrap();
        assert!(r.text.contains("do not determine the wage level but only"));
    }

    #[test]
    fn did_outcome_binding() {
        let q = CausalQuery::new(Design::DiffInDiff, "a", "b", "minimum wage law", "wages");
        let outcome = did_outcome("average wages", &q.treatment);
        let r = render(TemplateId::C2, &q, &extra(&[("outcome", &outcome)])).unwrap();
        assert!(r.text.contains("directly determine your average temporal changes in average wages during the time of no minimum wage law"));
    }

    #[test]
    fn r3_binds_confounders_and_covariates() {
        let q = CausalQuery::new(Design::RegressionDiscontinuity, "a", "b", "medicaid", "coverage")
            .with_confounders("health status")
            .with_covariates(Covariates::loose(["age"]));
        let r = render(TemplateId::R3, &q, &BTreeMap::new()).unwrap();
        assert!(r.text.contains("difficult for you to manipulate"));
        assert!(r.text.contains("health status and age just below the cutoff and health status and age just above"));
    }

    #[test]
    fn category_split_appends_request() {
        let q = placeholder_query();
        let opts = RenderOptions {
            category_split: vec!["school factors".into(), "factors of yourself".into()],
            ..Default::default()
        };
        let r = render_with(TemplateId::P1, &q, &BTreeMap::new(), &opts).unwrap();
        assert!(r.text.ends_with("explain the answers. create separate lists for school factors and factors of yourself."));
    }

    #[test]
    fn format_instruction_only_on_system_message() {
        let q = placeholder_query();
        let opts = RenderOptions {
            format_instruction: Some("answer as a numbered list.".into()),
            ..Default::default()
        };
        let a0 = render_with(TemplateId::A0, &q, &BTreeMap::new(), &opts).unwrap();
        assert!(a0.text.ends_with("instructions given to you? answer as a numbered list."));
        let a1 = render_with(TemplateId::A1, &q, &BTreeMap::new(), &opts).unwrap();
        assert!(!a1.text.contains("numbered list"));
    }

    #[test]
    fn sentinel_round_trip_recovers_every_body() {
        for t in list_templates() {
            let sentinels: BTreeMap<String, String> = Slot::ALL
                .iter()
                .map(|s| (s.key().to_string(), format!("\u{e000}{}\u{e001}", s.key())))
                .collect();
            let q = CausalQuery::new(Design::Iv, "a", "b", "c", "d")
                .with_budgets(SearchBudget::default());
            let r = render(t.id, &q, &sentinels).unwrap();
            let mut back = r.text.clone();
            for s in Slot::ALL {
                back = back.replace(&format!("\u{e000}{}\u{e001}", s.key()), &s.marker());
            }
            assert_eq!(back, t.body, "{}", t.id);
        }
    }

    #[test]
    fn rendered_text_has_no_unbound_markers() {
        let q = CausalQuery::new(Design::Iv, "a student", "ohio", "college", "earnings")
            .with_confounders("ability")
            .with_outcome_t("wages")
            .with_covariates(Covariates::loose(["gender"]));
        let fill = extra(&[
            ("K", "5"),
            ("L_0", "9"),
            ("J_0", "9"),
            ("defender_list", "1. A"),
            ("adversary_arguments", "no"),
            ("excluded", "labor costs"),
        ]);
        for t in list_templates() {
            let r = render(t.id, &q, &fill).unwrap();
            for s in Slot::ALL {
                assert!(!r.text.contains(&s.marker()), "{} still has {}", t.id, s.marker());
            }
        }
    }

    #[test]
    fn brackets_in_values_are_not_rescanned() {
        let q = CausalQuery::new(Design::Iv, "[outcome]", "s", "t", "y");
        let r = render(TemplateId::A0, &q, &BTreeMap::new()).unwrap();
        assert!(r.text.starts_with("you are [outcome] who needs"));
    }
}
