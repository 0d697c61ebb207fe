use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{normalize_name, token_overlap, CandidateSet};

/// Overlap score at which an unmatched name is reported as a likely rename.
pub const DEFAULT_RENAME_THRESHOLD: f64 = 0.6;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchedItem {
    pub name: String,
    pub key: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenamedItem {
    pub name: String,
    pub likely_source: String,
    pub score: f64,
}

/// How a refined list relates to the list it was chosen from.
///
/// `injected` names have no plausible source in the initial list and break
/// the refinement contract. `renamed` is informational: the heuristic never
/// merges names on its own.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetReport {
    pub matched: Vec<MatchedItem>,
    pub renamed: Vec<RenamedItem>,
    pub injected: Vec<MatchedItem>,
    pub dropped: Vec<MatchedItem>,
    pub threshold: f64,
}

impl SubsetReport {
    pub fn is_compliant(&self) -> bool {
        self.injected.is_empty()
    }

    pub fn dropped_keys(&self) -> Vec<&str> {
        self.dropped.iter().map(|m| m.key.as_str()).collect()
    }

    pub fn injected_keys(&self) -> Vec<&str> {
        self.injected.iter().map(|m| m.key.as_str()).collect()
    }
}

/// Classify every refined item against `initial` by normalized name.
pub fn match_subset(refined: &CandidateSet, initial: &CandidateSet, threshold: f64) -> SubsetReport {
    let initial_keys: Vec<(String, &str)> = initial
        .items
        .iter()
        .map(|c| (normalize_name(&c.name), c.name.as_str()))
        .collect();
    let mut used: BTreeSet<String> = BTreeSet::new();
    let mut matched = Vec::new();
    let mut pending = Vec::new();

    for item in &refined.items {
        let key = normalize_name(&item.name);
        if initial_keys.iter().any(|(k, _)| *k == key) {
            used.insert(key.clone());
            matched.push(MatchedItem {
                name: item.name.clone(),
                key,
            });
        } else {
            pending.push((item.name.clone(), key));
        }
    }

    let mut renamed = Vec::new();
    let mut injected = Vec::new();
    for (name, key) in pending {
        let best = initial_keys
            .iter()
            .filter(|(k, _)| !used.contains(k))
            .map(|(k, display)| (token_overlap(&name, display), k, *display))
            .fold(None::<(f64, &String, &str)>, |acc, cand| match acc {
                Some(a) if a.0 >= cand.0 => Some(a),
                _ => Some(cand),
            });
        match best {
            Some((score, k, display)) if score >= threshold => {
                used.insert(k.clone());
                renamed.push(RenamedItem {
                    name,
                    likely_source: display.to_string(),
                    score,
                });
            }
            _ => injected.push(MatchedItem { name, key }),
        }
    }

    let dropped = initial_keys
        .iter()
        .filter(|(k, _)| !used.contains(k))
        .map(|(k, display)| MatchedItem {
            name: display.to_string(),
            key: k.clone(),
        })
        .collect();

    SubsetReport {
        matched,
        renamed,
        injected,
        dropped,
        threshold,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::extraction::CandidateVariable;
    use proptest::prelude::*;

    fn set(names: &[&str]) -> CandidateSet {
        CandidateSet::new(
            names
                .iter()
                .enumerate()
                .map(|(i, n)| CandidateVariable::new(i as u32 + 1, *n, ""))
                .collect(),
        )
    }

    #[test]
    fn matched_and_dropped() {
        let r = match_subset(&set(&["A"]), &set(&["A", "B"]), DEFAULT_RENAME_THRESHOLD);
        assert_eq!(r.matched.len(), 1);
        assert_eq!(r.dropped_keys(), vec!["b"]);
        assert!(r.is_compliant());
    }

    #[test]
    fn injected() {
        let r = match_subset(&set(&["C"]), &set(&["A", "B"]), DEFAULT_RENAME_THRESHOLD);
        assert_eq!(r.injected_keys(), vec!["c"]);
        assert!(!r.is_compliant());
        assert_eq!(r.dropped.len(), 2);
    }

    #[test]
    fn rename_is_reported_not_injected() {
        let r = match_subset(
            &set(&["Distance to the College"]),
            &set(&["Distance from Home to College", "Tuition"]),
            DEFAULT_RENAME_THRESHOLD,
        );
        assert!(r.injected.is_empty());
        assert_eq!(r.renamed[0].likely_source, "Distance from Home to College");
        assert_eq!(r.dropped_keys(), vec!["tuition"]);

        let strict = match_subset(
            &set(&["Distance to the College"]),
            &set(&["Distance from Home to College"]),
            1.1,
        );
        assert_eq!(strict.injected.len(), 1);
    }

    #[test]
    fn normalization_absorbs_formatting() {
        let r = match_subset(&set(&["fuel costs."]), &set(&["**Fuel Costs**"]), DEFAULT_RENAME_THRESHOLD);
        assert_eq!(r.matched.len(), 1);
    }

    proptest! {
        #[test]
        fn self_match_is_total(names in proptest::collection::btree_set("[A-Za-z]{1,8}( [A-Za-z]{1,8}){0,3}", 1..15)) {
            let names: Vec<&str> = names.iter().map(String::as_str).collect();
            let s = set(&names);
            let r = match_subset(&s, &s, DEFAULT_RENAME_THRESHOLD);
            prop_assert_eq!(r.matched.len(), s.len());
            prop_assert!(r.dropped.is_empty());
            prop_assert!(r.injected.is_empty());
            prop_assert!(r.renamed.is_empty());
        }
    }
}
