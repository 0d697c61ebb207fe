//! Turning assistant replies into candidate sets.
//!
//! Replies arrive as loosely formatted lists: numbered or bulleted, with
//! bold names, assorted separators, category headings, and prose before and
//! after. [`parse_candidates`] accepts all of these and reports anything odd
//! as a [`ParseWarning`] instead of failing. [`match_subset`] then checks a
//! refined list against the list it was chosen from.

mod normalize;
mod parse;
mod subset;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::causal_model::AssumptionTag;

pub use normalize::{normalize_name, token_overlap};
pub use parse::{
    extract_cutoff, parse_candidates, split_at_heading, split_at_restart, ParseExpectations,
    ParseWarning, Parsed,
};
pub use subset::{match_subset, MatchedItem, RenamedItem, SubsetReport, DEFAULT_RENAME_THRESHOLD};

/// Which step of a flow produced a candidate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OriginStep {
    Search,
    Refine,
    AdversaryRevised,
    RddRefined,
}

/// Eligibility threshold reported for a running variable.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Cutoff {
    pub value_text: String,
    #[serde(default)]
    pub source_text: Option<String>,
}

/// Where in a transcript a candidate was read from.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Provenance {
    pub session_id: String,
    pub message_index: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateVariable {
    pub ordinal: u32,
    pub name: String,
    #[serde(default)]
    pub rationale: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<String>,
    pub origin_step: OriginStep,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cutoff: Option<Cutoff>,
    /// Chosen only for its effect on outcome trends (difference-in-differences).
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub trend_only: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
}

impl CandidateVariable {
    pub fn new(ordinal: u32, name: impl Into<String>, rationale: impl Into<String>) -> Self {
        CandidateVariable {
            ordinal,
            name: name.into(),
            rationale: rationale.into(),
            category: None,
            origin_step: OriginStep::Search,
            cutoff: None,
            trend_only: false,
            provenance: None,
        }
    }

    pub fn key(&self) -> String {
        normalize_name(&self.name)
    }
}

/// An ordered list of candidates read from one reply (or assembled by a flow).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateSet {
    pub items: Vec<CandidateVariable>,
    pub step_tag: BTreeSet<AssumptionTag>,
    pub session_id: String,
}

impl CandidateSet {
    pub fn new(items: Vec<CandidateVariable>) -> Self {
        CandidateSet {
            items,
            step_tag: BTreeSet::new(),
            session_id: String::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn names(&self) -> Vec<&str> {
        self.items.iter().map(|c| c.name.as_str()).collect()
    }

    pub fn keys(&self) -> Vec<String> {
        self.items.iter().map(CandidateVariable::key).collect()
    }

    pub fn contains_key(&self, key: &str) -> bool {
        self.items.iter().any(|c| c.key() == key)
    }

    /// Record the transcript location every item was parsed from.
    pub fn with_provenance(mut self, session_id: &str, message_index: usize) -> Self {
        self.session_id = session_id.to_string();
        for item in &mut self.items {
            item.provenance = Some(Provenance {
                session_id: session_id.to_string(),
                message_index,
            });
        }
        self
    }

    pub fn with_tags(mut self, tags: &[AssumptionTag]) -> Self {
        self.step_tag = tags.iter().copied().collect();
        self
    }

    /// Number items 1..=n in their current order.
    pub fn renumber(&mut self) {
        for (i, item) in self.items.iter_mut().enumerate() {
            item.ordinal = i as u32 + 1;
        }
    }

    /// Serialize as a numbered list that [`parse_candidates`] reads back unchanged.
    pub fn to_list_text(&self) -> String {
        let mut out = String::new();
        let mut current: Option<&str> = None;
        for item in &self.items {
            let cat = item.category.as_deref();
            if cat != current {
                if let Some(c) = cat {
                    if !out.is_empty() {
                        out.push('\n');
                    }
                    out.push_str(&format!("### {c}\n\n"));
                }
                current = cat;
            }
            out.push_str(&format!("{}. **{}**", item.ordinal, item.name));
            if !item.rationale.is_empty() {
                out.push_str(": ");
                out.push_str(&item.rationale);
            }
            out.push('\n');
        }
        out
    }

    /// The list body quoted to a critic or defender: `1. name: rationale` lines.
    pub fn to_prompt_list(&self) -> String {
        self.items
            .iter()
            .map(|c| {
                if c.rationale.is_empty() {
                    format!("{}. {}", c.ordinal, c.name)
                } else {
                    format!("{}. {}: {}", c.ordinal, c.name, c.rationale)
                }
            })
            .collect::<Vec<_>>()
            .join("\n")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("candidate set serializes")
    }

    /// CSV with columns ordinal, name, category, rationale, cutoff_value, cutoff_source.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["ordinal", "name", "category", "rationale", "cutoff_value", "cutoff_source"])
            .expect("in-memory csv write");
        for c in &self.items {
            let (value, source) = match &c.cutoff {
                Some(cut) => (cut.value_text.as_str(), cut.source_text.as_deref().unwrap_or("")),
                None => ("", ""),
            };
            w.write_record([
                c.ordinal.to_string().as_str(),
                c.name.as_str(),
                c.category.as_deref().unwrap_or(""),
                c.rationale.as_str(),
                value,
                source,
            ])
            .expect("in-memory csv write");
        }
        String::from_utf8(w.into_inner().expect("flush in-memory csv")).expect("csv is utf-8")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ExtractionError {
    #[error("expected an assistant reply, got a {0} message")]
    NotAssistant(&'static str),
    #[error("no candidates recognized in reply starting `{preview}`")]
    EmptyParse { preview: String },
}
