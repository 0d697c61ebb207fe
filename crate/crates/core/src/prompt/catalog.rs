//! Template bodies, kept in the all-lowercase style they were written in.
//!
//! Every body is golden-hashed in the test suite; edits here are
//! deliberate release-level changes.

use super::{StepRole, TemplateId, TemplateKind};

pub(super) struct Entry {
    pub id: TemplateId,
    pub body: &'static str,
    pub role: StepRole,
    pub kind: TemplateKind,
}

const P1: &str = "you are [agent] who needs to make a [treatment] decision in [scenario]. what are factors that can determine your decision but do not directly affect your [outcome], except through [treatment] (that is, factors that affect your [outcome] only through [treatment])? list [K_0] factors that are quantifiable. explain the answers.";

const P2: &str = "you are [agent] in [scenario], as previously described. among the [K_0] factors listed above, choose [K] factors that are most likely to be unassociated with [confounders], which determine your [outcome]. the chosen factors can still influence your [treatment]. for each chosen factor, explain your reasoning.";

const P2X: &str = "suppose you are [agent] in [scenario] with [covariates]. among the [K_0] factors listed above, choose [K] factors that are most likely to be unassociated with [confounders], which determine your [outcome]. the chosen factors can still influence your [treatment]. for each chosen factor, explain your reasoning.";

const P1X: &str = "you are [agent] who needs to make a [treatment] decision in [setting]. what are factors that can determine your decision but that do not directly affect your [outcome], except through [treatment] (that is, factors that affect your [outcome] only through [treatment])? list [K_0] factors. also, what are your characteristics that directly influence [treatment] and directly influence [outcome] (not just through [treatment])? list [L_0] characteristics. explain the answers.";

const A0: &str = "you are [agent] who needs to make a [treatment] decision in [scenario]. you will be given questions on your decisions and related outcomes. in answering the questions, always provide explanations for your answers. each answer should be within five words and each explanation should be within twenty words. do you understand your role, the scenario you are in, and the instructions given to you?";

const A1: &str = "what are factors that can determine your decision? list [K_0] factors that are quantifiable. explain the answers.";

const A2: &str = "among [K_0] factors listed above, what are factors that affect your [outcome] only through [treatment]? explain the answers.";

const A3: &str = "among the factors listed above, choose [K] factors that are most likely to be unassociated with [confounders], which determine your [outcome]. the chosen factors can still influence your [treatment]. for each factor chosen, explain your reasoning.";

const C1: &str = "you are [agent] who needs to make a [treatment] decision in [scenario]. what factors determine your decision? list [L_0] factors that are quantifiable. explain the answers.";

const C2: &str = "among the [L_0] factors listed above, choose all factors that directly determine your [outcome], not only indirectly through [treatment]. the chosen factors can still influence your [treatment]. for each factor chosen, explain your reasoning.";

const DID_EMPH: &str = "be sure to choose all factors that do not determine the [outcome_level] but only determine the temporal changes in [outcome_t].";

const R1: &str = "you are [agent] who needs to make a [treatment] decision in [scenario]. what would be the possible criteria based on which your eligibility for [treatment] is determined? provide [J_0] of the most relevant criteria that are (1) quantifiable and (2) have specific cutoffs determining eligibility. explain the answers.";

const R2: &str = "among the [J_0] criteria listed above, choose all criteria that involve continuous or ordered measures and have precise cutoffs determining eligibility. also report the cutoff value for each criterion from verifiable sources only (ensuring no fabricated or hypothetical numbers are used). explain the answers.";

const R3: &str = "among the criteria listed in the last answer above, choose all criteria that are difficult for you to manipulate. the chosen criteria should satisfy the following: [confounders, covariates] just below the cutoff and [confounders, covariates] just above the cutoff are not systematically different. explain the answers.";

const AD1: &str = "you are a researcher who wants to find instrumental variables to estimate the effect of [treatment] on [outcome]. below is a list of candidate instrumental variables. for each variable in the list, provide arguments as to why it may not be a valid instrument:\n\n[the list of variables by Defender]";

const P3: &str = "below are counter-arguments for each of your previous answers. based on these arguments, revise your selection and provide a list:\n\n[the arguments by Adversary]";

const V_UNQUANT: &str = "list [K_0] factors that are hard to quantify";

const V_CHOOSE_ALL: &str = "choose all factors";

const V_CONTRAST: &str = "also choose factors that are, in contrast, associated with [confounders].";

const V_EXPLAIN_EXCL: &str = "explain why you didn't include \"[excluded]\" in the final list";

const M_PROBE: &str = "did you have sources for your previous responses?";

/// Phrase in P1/A1 that [`V_UNQUANT`] replaces.
pub(super) const QUANTIFIABLE_PHRASE: &str = "list [K_0] factors that are quantifiable";
/// Phrase in P2/P2X/A3 that [`V_CHOOSE_ALL`] replaces.
pub(super) const CHOOSE_K_PHRASE: &str = "choose [K] factors";

pub(super) const CATALOG: [Entry; 21] = [
    Entry { id: TemplateId::P1, body: P1, role: StepRole::User, kind: TemplateKind::Standalone },
    Entry { id: TemplateId::P2, body: P2, role: StepRole::User, kind: TemplateKind::Standalone },
    Entry { id: TemplateId::P2X, body: P2X, role: StepRole::User, kind: TemplateKind::Standalone },
    Entry { id: TemplateId::P1X, body: P1X, role: StepRole::User, kind: TemplateKind::Standalone },
    Entry { id: TemplateId::A0, body: A0, role: StepRole::System, kind: TemplateKind::Standalone },
    Entry { id: TemplateId::A1, body: A1, role: StepRole::User, kind: TemplateKind::Standalone },
    Entry { id: TemplateId::A2, body: A2, role: StepRole::User, kind: TemplateKind::Standalone },
    Entry { id: TemplateId::A3, body: A3, role: StepRole::User, kind: TemplateKind::Standalone },
    Entry { id: TemplateId::C1, body: C1, role: StepRole::User, kind: TemplateKind::Standalone },
    Entry { id: TemplateId::C2, body: C2, role: StepRole::User, kind: TemplateKind::Standalone },
    Entry { id: TemplateId::DidEmph, body: DID_EMPH, role: StepRole::User, kind: TemplateKind::Standalone },
    Entry { id: TemplateId::R1, body: R1, role: StepRole::User, kind: TemplateKind::Standalone },
    Entry { id: TemplateId::R2, body: R2, role: StepRole::User, kind: TemplateKind::Standalone },
    Entry { id: TemplateId::R3, body: R3, role: StepRole::User, kind: TemplateKind::Standalone },
    Entry { id: TemplateId::AD1, body: AD1, role: StepRole::User, kind: TemplateKind::Standalone },
    Entry { id: TemplateId::P3, body: P3, role: StepRole::User, kind: TemplateKind::Standalone },
    Entry { id: TemplateId::VUnquant, body: V_UNQUANT, role: StepRole::User, kind: TemplateKind::Replaces(QUANTIFIABLE_PHRASE) },
    Entry { id: TemplateId::VChooseAll, body: V_CHOOSE_ALL, role: StepRole::User, kind: TemplateKind::Replaces(CHOOSE_K_PHRASE) },
    Entry { id: TemplateId::VContrast, body: V_CONTRAST, role: StepRole::User, kind: TemplateKind::Appended },
    Entry { id: TemplateId::VExplainExcl, body: V_EXPLAIN_EXCL, role: StepRole::User, kind: TemplateKind::Standalone },
    Entry { id: TemplateId::MProbe, body: M_PROBE, role: StepRole::User, kind: TemplateKind::Standalone },
];

/// Example prompts reproduced verbatim, paired with the template they adapt.
pub(super) const FIXTURES: [(&str, TemplateId, &str); 12] = [
    ("P1-1", TemplateId::P1, include_str!("../../fixtures/prompts/P1-1.txt")),
    ("P2X-1", TemplateId::P2X, include_str!("../../fixtures/prompts/P2X-1.txt")),
    ("P1-2-1", TemplateId::P1, include_str!("../../fixtures/prompts/P1-2-1.txt")),
    ("P2X-2-1", TemplateId::P2X, include_str!("../../fixtures/prompts/P2X-2-1.txt")),
    ("P1-2-2", TemplateId::P1, include_str!("../../fixtures/prompts/P1-2-2.txt")),
    ("P2-2-2", TemplateId::P2, include_str!("../../fixtures/prompts/P2-2-2.txt")),
    ("P1-3-1", TemplateId::P1, include_str!("../../fixtures/prompts/P1-3-1.txt")),
    ("P2X-3-1", TemplateId::P2X, include_str!("../../fixtures/prompts/P2X-3-1.txt")),
    ("P1-3-2", TemplateId::P1, include_str!("../../fixtures/prompts/P1-3-2.txt")),
    ("P2X-3-2", TemplateId::P2X, include_str!("../../fixtures/prompts/P2X-3-2.txt")),
    ("C1-1", TemplateId::C1, include_str!("../../fixtures/prompts/C1-1.txt")),
    ("C2-1", TemplateId::C2, include_str!("../../fixtures/prompts/C2-1.txt")),
];
