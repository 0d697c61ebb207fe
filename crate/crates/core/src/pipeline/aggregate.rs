use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::causal_model::CausalQuery;
use crate::extraction::{CandidateSet, CandidateVariable};

use super::{DiscoveryRun, FlowKind, ModelSummary, PipelineError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AggregateMode {
    Union,
    Intersection,
}

impl fmt::Display for AggregateMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AggregateMode::Union => "union",
            AggregateMode::Intersection => "intersection",
        })
    }
}

impl FromStr for AggregateMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "union" => Ok(AggregateMode::Union),
            "intersection" => Ok(AggregateMode::Intersection),
            other => Err(format!("unknown aggregation mode `{other}`")),
        }
    }
}

/// Final sets of several runs of one query, combined.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub aggregate_id: String,
    pub mode: AggregateMode,
    pub run_ids: Vec<String>,
    pub query: CausalQuery,
    pub flow: FlowKind,
    pub model: ModelSummary,
    pub set: CandidateSet,
    pub created_at: DateTime<Utc>,
}

/// Combine sets by normalized name.
///
/// Items keep the display name, category, cutoff and provenance of their
/// first occurrence; distinct rationales are joined with " / ". The result is
/// numbered 1..=n in first-seen order.
pub fn combine_sets(sets: &[&CandidateSet], mode: AggregateMode) -> CandidateSet {
    let mut order: Vec<String> = Vec::new();
    let mut merged: BTreeMap<String, CandidateVariable> = BTreeMap::new();
    let mut seen_in: BTreeMap<String, BTreeSet<usize>> = BTreeMap::new();
    for (i, set) in sets.iter().enumerate() {
        for item in &set.items {
            let key = item.key();
            seen_in.entry(key.clone()).or_default().insert(i);
            match merged.get_mut(&key) {
                Some(existing) => {
                    let r = item.rationale.trim();
                    if !r.is_empty() && !existing.rationale.split(" / ").any(|p| p == r) {
                        if existing.rationale.is_empty() {
                            existing.rationale = r.to_string();
                        } else {
                            existing.rationale = format!("{} / {}", existing.rationale, r);
                        }
                    }
                    existing.trend_only &= item.trend_only;
                }
                None => {
                    order.push(key.clone());
                    merged.insert(key, item.clone());
                }
            }
        }
    }
    let keep = |key: &String| match mode {
        AggregateMode::Union => true,
        AggregateMode::Intersection => seen_in[key].len() == sets.len(),
    };
    let items = order
        .iter()
        .filter(|k| keep(k))
        .map(|k| merged.remove(k).expect("ordered keys are merged"))
        .collect();
    let mut out = CandidateSet::new(items);
    out.step_tag = sets.first().map(|s| s.step_tag.clone()).unwrap_or_default();
    out.renumber();
    out
}

/// Combine the final sets of runs that share one query and one flow.
pub fn aggregate_runs(runs: &[DiscoveryRun], mode: AggregateMode) -> Result<CandidateSet, PipelineError> {
    let first = runs.first().ok_or(PipelineError::NoRuns)?;
    let hash = first.query.content_hash();
    for r in &runs[1..] {
        let other = r.query.content_hash();
        if other != hash {
            return Err(PipelineError::MixedQuery {
                first: hash,
                other,
            });
        }
        if r.flow != first.flow {
            return Err(PipelineError::MixedFlow {
                first: first.flow,
                other: r.flow,
            });
        }
    }
    let sets: Vec<&CandidateSet> = runs.iter().map(|r| &r.final_set).collect();
    Ok(combine_sets(&sets, mode))
}

pub fn aggregate(
    runs: &[DiscoveryRun],
    mode: AggregateMode,
    aggregate_id: impl Into<String>,
) -> Result<Aggregate, PipelineError> {
    let set = aggregate_runs(runs, mode)?;
    let first = &runs[0];
    Ok(Aggregate {
        aggregate_id: aggregate_id.into(),
        mode,
        run_ids: runs.iter().map(|r| r.run_id.clone()).collect(),
        query: first.query.clone(),
        flow: first.flow,
        model: first.model.clone(),
        set,
        created_at: Utc::now(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn set(names: &[&str]) -> CandidateSet {
        CandidateSet::new(
            names
                .iter()
                .enumerate()
                .map(|(i, n)| CandidateVariable::new(i as u32 + 1, *n, format!("why {n}")))
                .collect(),
        )
    }

    fn keys(s: &CandidateSet) -> BTreeSet<String> {
        s.keys().into_iter().collect()
    }

    #[test]
    fn union_and_intersection_examples() {
        let (a, b) = (set(&["A", "B"]), set(&["B", "C"]));
        let u = combine_sets(&[&a, &b], AggregateMode::Union);
        assert_eq!(u.names(), vec!["A", "B", "C"]);
        let i = combine_sets(&[&a, &b], AggregateMode::Intersection);
        assert_eq!(i.names(), vec!["B"]);
        assert_eq!(i.items[0].ordinal, 1);
        let single = combine_sets(&[&a], AggregateMode::Intersection);
        assert_eq!(single.names(), a.names());
    }

    #[test]
    fn union_keeps_first_display_name_and_joins_rationales() {
        let mut a = set(&["**Fuel Costs**"]);
        a.items[0].rationale = "r1".into();
        let mut b = set(&["fuel costs."]);
        b.items[0].rationale = "r2".into();
        let mut c = set(&["Fuel costs"]);
        c.items[0].rationale = "r1".into();
        let u = combine_sets(&[&a, &b, &c], AggregateMode::Union);
        assert_eq!(u.names(), vec!["**Fuel Costs**"]);
        assert_eq!(u.items[0].rationale, "r1 / r2");
    }

    fn arb_set() -> impl Strategy<Value = CandidateSet> {
        proptest::collection::btree_set("[a-e]{1,2}", 0..8).prop_map(|names| {
            let names: Vec<&str> = names.iter().map(String::as_str).collect();
            set(&names)
        })
    }

    proptest! {
        #[test]
        fn intersection_within_union(a in arb_set(), b in arb_set()) {
            let u = keys(&combine_sets(&[&a, &b], AggregateMode::Union));
            let i = keys(&combine_sets(&[&a, &b], AggregateMode::Intersection));
            prop_assert!(i.is_subset(&u));
        }
    }
}
