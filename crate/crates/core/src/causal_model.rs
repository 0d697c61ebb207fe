//! Causal design queries, assumption tags, and the valid-IV graph.
//!
//! A [`CausalQuery`] is the user's design problem: who decides, in what
//! setting, which treatment is chosen and which outcome is of interest.
//! Everything downstream (prompt rendering, pipeline flows, aggregation)
//! is keyed off this value.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Confounder text used when the user prefers not to name latent confounders.
pub const AGNOSTIC_CONFOUNDERS: &str = "other possible factors";

pub const DEFAULT_K0: u32 = 40;
pub const DEFAULT_L0: u32 = 40;
pub const DEFAULT_J0: u32 = 20;

/// Research design the query is searching variables for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Design {
    #[serde(rename = "iv")]
    Iv,
    #[serde(rename = "ci")]
    ConditionalIndependence,
    #[serde(rename = "did")]
    DiffInDiff,
    #[serde(rename = "rdd")]
    RegressionDiscontinuity,
}

impl Design {
    pub fn as_str(&self) -> &'static str {
        match self {
            Design::Iv => "iv",
            Design::ConditionalIndependence => "ci",
            Design::DiffInDiff => "did",
            Design::RegressionDiscontinuity => "rdd",
        }
    }
}

impl fmt::Display for Design {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Conditioning variables used to qualify the agent and scenario.
///
/// `specific_values` are concrete attribute assignments ("asian female",
/// "from california"); `loose_descriptors` are attribute names that render
/// as "specific gender, race, and regional origin". When both are present
/// the specific values win.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Covariates {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub specific_values: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub loose_descriptors: Vec<String>,
}

impl Covariates {
    pub fn specific<I, S>(values: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Covariates {
            specific_values: values.into_iter().map(Into::into).collect(),
            loose_descriptors: Vec::new(),
        }
    }

    pub fn loose<I, S>(descriptors: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Covariates {
            specific_values: Vec::new(),
            loose_descriptors: descriptors.into_iter().map(Into::into).collect(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.specific_values.iter().all(|v| v.trim().is_empty())
            && self.loose_descriptors.iter().all(|v| v.trim().is_empty())
    }

    /// Attribute names or values without the "specific" qualifier.
    pub fn terms(&self) -> Vec<&str> {
        let source = if !self.specific_values.is_empty() {
            &self.specific_values
        } else {
            &self.loose_descriptors
        };
        source
            .iter()
            .map(|s| s.trim())
            .filter(|s| !s.is_empty())
            .collect()
    }
}

/// Initial and refined list sizes for each search family.
///
/// `None` on a refined count means "let the model choose".
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SearchBudget {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k0: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l0: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub j0: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub j: Option<u32>,
}

impl SearchBudget {
    /// Budgets used when a query carries no `budgets` object at all.
    pub fn standard_defaults() -> Self {
        SearchBudget {
            k0: Some(DEFAULT_K0),
            l0: Some(DEFAULT_L0),
            j0: Some(DEFAULT_J0),
            ..SearchBudget::default()
        }
    }

    fn pairs(&self) -> [(&'static str, Option<u32>, &'static str, Option<u32>); 3] {
        [
            ("budgets.k0", self.k0, "budgets.k", self.k),
            ("budgets.l0", self.l0, "budgets.l", self.l),
            ("budgets.j0", self.j0, "budgets.j", self.j),
        ]
    }
}

fn default_budgets() -> SearchBudget {
    SearchBudget::standard_defaults()
}

/// The user's causal design problem.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CausalQuery {
    pub design: Design,
    pub agent: String,
    pub scenario: String,
    pub treatment: String,
    pub outcome: String,
    /// Per-period outcome label used by difference-in-differences flows.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outcome_t: Option<String>,
    /// How the level of `outcome_t` is phrased, e.g. "average wage level".
    /// Defaults to "level of <outcome_t>".
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outcome_level: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confounders: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub covariates: Option<Covariates>,
    #[serde(default = "default_budgets")]
    pub budgets: SearchBudget,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category_split: Option<Vec<String>>,
}

impl CausalQuery {
    /// A query with default budgets and no optional fields.
    pub fn new(
        design: Design,
        agent: impl Into<String>,
        scenario: impl Into<String>,
        treatment: impl Into<String>,
        outcome: impl Into<String>,
    ) -> Self {
        CausalQuery {
            design,
            agent: agent.into(),
            scenario: scenario.into(),
            treatment: treatment.into(),
            outcome: outcome.into(),
            outcome_t: None,
            outcome_level: None,
            confounders: None,
            covariates: None,
            budgets: SearchBudget::standard_defaults(),
            category_split: None,
        }
    }

    pub fn with_confounders(mut self, confounders: impl Into<String>) -> Self {
        self.confounders = Some(confounders.into());
        self
    }

    pub fn with_covariates(mut self, covariates: Covariates) -> Self {
        self.covariates = Some(covariates);
        self
    }

    pub fn with_budgets(mut self, budgets: SearchBudget) -> Self {
        self.budgets = budgets;
        self
    }

    pub fn with_outcome_t(mut self, outcome_t: impl Into<String>) -> Self {
        self.outcome_t = Some(outcome_t.into());
        self
    }

    pub fn with_category_split<I, S>(mut self, categories: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.category_split = Some(categories.into_iter().map(Into::into).collect());
        self
    }

    /// Covariates that carry at least one non-blank term.
    pub fn effective_covariates(&self) -> Option<&Covariates> {
        self.covariates.as_ref().filter(|c| !c.is_empty())
    }

    /// SHA-256 over the canonical JSON form, used to check that runs share a query.
    pub fn content_hash(&self) -> String {
        let value = serde_json::to_value(self).expect("query serializes");
        let bytes = serde_json::to_vec(&value).expect("value serializes");
        hex::encode(Sha256::digest(&bytes))
    }
}

/// Which rule a query field failed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Rule {
    NonEmpty,
    RequiredForDesign,
    Positive,
    RefinedNotAboveInitial,
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Rule::NonEmpty => "non-empty",
            Rule::RequiredForDesign => "required-for-design",
            Rule::Positive => "positive",
            Rule::RefinedNotAboveInitial => "refined-not-above-initial",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Violation {
    pub field: String,
    pub rule: Rule,
}

impl Violation {
    fn new(field: &str, rule: Rule) -> Self {
        Violation {
            field: field.to_string(),
            rule,
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.rule)
    }
}

/// Check every query invariant; an empty list means the query is usable.
pub fn validate_query(q: &CausalQuery) -> Vec<Violation> {
    let mut out = Vec::new();
    for (field, value) in [
        ("agent", &q.agent),
        ("scenario", &q.scenario),
        ("treatment", &q.treatment),
        ("outcome", &q.outcome),
    ] {
        if value.trim().is_empty() {
            out.push(Violation::new(field, Rule::NonEmpty));
        }
    }
    for (field, value) in [("confounders", &q.confounders), ("outcome_level", &q.outcome_level)] {
        if value.as_deref().is_some_and(|v| v.trim().is_empty()) {
            out.push(Violation::new(field, Rule::NonEmpty));
        }
    }

    let b = &q.budgets;
    let required: &[(&str, Option<u32>)] = match q.design {
        Design::Iv => &[("budgets.k0", b.k0)],
        Design::ConditionalIndependence | Design::DiffInDiff => &[("budgets.l0", b.l0)],
        Design::RegressionDiscontinuity => &[("budgets.j0", b.j0)],
    };
    for (field, value) in required {
        if value.is_none() {
            out.push(Violation::new(field, Rule::RequiredForDesign));
        }
    }
    if q.design == Design::DiffInDiff && q.outcome_t.as_deref().map_or(true, |s| s.trim().is_empty())
    {
        out.push(Violation::new("outcome_t", Rule::RequiredForDesign));
    }

    for (initial_field, initial, refined_field, refined) in b.pairs() {
        if initial == Some(0) {
            out.push(Violation::new(initial_field, Rule::Positive));
        }
        if refined == Some(0) {
            out.push(Violation::new(refined_field, Rule::Positive));
        }
        if let (Some(i), Some(r)) = (initial, refined) {
            if r > i {
                out.push(Violation::new(refined_field, Rule::RefinedNotAboveInitial));
            }
        }
    }
    out
}

/// Identification assumption a pipeline step targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AssumptionTag {
    /// Relevance: the treatment depends on the instrument.
    REL,
    /// Exclusion: no direct instrument-to-outcome path.
    EX,
    /// Independence from the latent confounders.
    IND,
    /// Joint relevance of instrument and covariates.
    REL2,
    /// Conditional independence of treatment given controls.
    CI,
    /// Parallel trends.
    PT,
    /// Sharp cutoff in a running variable.
    RD,
}

pub fn tags(list: &[AssumptionTag]) -> BTreeSet<AssumptionTag> {
    list.iter().copied().collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DagNode {
    /// Candidate instrument.
    Z,
    /// Treatment.
    D,
    /// Outcome.
    Y,
    /// Latent confounders.
    U,
}

impl DagNode {
    pub const ALL: [DagNode; 4] = [DagNode::Z, DagNode::D, DagNode::Y, DagNode::U];
}

/// The causal graph a valid instrument must fit.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct IvDag {
    pub nodes: BTreeSet<DagNode>,
    pub edges: BTreeSet<(DagNode, DagNode)>,
}

impl IvDag {
    pub fn has_edge(&self, from: DagNode, to: DagNode) -> bool {
        self.edges.contains(&(from, to))
    }

    /// Kahn's algorithm over the four nodes.
    pub fn is_acyclic(&self) -> bool {
        let mut indegree: std::collections::BTreeMap<DagNode, usize> =
            self.nodes.iter().map(|n| (*n, 0)).collect();
        for (_, to) in &self.edges {
            *indegree.entry(*to).or_default() += 1;
        }
        let mut ready: Vec<DagNode> = indegree
            .iter()
            .filter(|(_, d)| **d == 0)
            .map(|(n, _)| *n)
            .collect();
        let mut visited = 0;
        while let Some(node) = ready.pop() {
            visited += 1;
            for (from, to) in &self.edges {
                if *from == node {
                    let d = indegree.get_mut(to).expect("edge endpoint is a node");
                    *d -= 1;
                    if *d == 0 {
                        ready.push(*to);
                    }
                }
            }
        }
        visited == self.nodes.len()
    }

    /// No direct instrument-to-outcome edge.
    pub fn encodes_exclusion(&self) -> bool {
        !self.has_edge(DagNode::Z, DagNode::Y)
    }

    /// No edge between the instrument and the latent confounders.
    pub fn encodes_independence(&self) -> bool {
        !self.has_edge(DagNode::U, DagNode::Z) && !self.has_edge(DagNode::Z, DagNode::U)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ModelError {
    #[error("operation requires a {expected} query, got {actual}")]
    WrongDesign { expected: Design, actual: Design },
}

pub fn iv_dag_for(q: &CausalQuery) -> Result<IvDag, ModelError> {
    if q.design != Design::Iv {
        return Err(ModelError::WrongDesign {
            expected: Design::Iv,
            actual: q.design,
        });
    }
    use DagNode::*;
    Ok(IvDag {
        nodes: DagNode::ALL.into_iter().collect(),
        edges: [(Z, D), (D, Y), (U, D), (U, Y)].into_iter().collect(),
    })
}
