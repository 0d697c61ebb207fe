use std::collections::BTreeSet;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{
    normalize_name, CandidateSet, CandidateVariable, Cutoff, ExtractionError, OriginStep,
};
use crate::causal_model::AssumptionTag;
use crate::gateway::{ChatMessage, Role};

/// What the caller asked the model for, used to judge the reply.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseExpectations {
    /// Number of items requested; fewer yields a warning.
    pub max_items: Option<u32>,
    /// Requested category labels; headings are mapped onto these.
    pub categories: Vec<String>,
    /// Look for eligibility cutoffs in each item.
    pub expect_cutoffs: bool,
    pub origin: OriginStep,
    pub step_tag: BTreeSet<AssumptionTag>,
}

impl Default for ParseExpectations {
    fn default() -> Self {
        ParseExpectations {
            max_items: None,
            categories: Vec::new(),
            expect_cutoffs: false,
            origin: OriginStep::Search,
            step_tag: BTreeSet::new(),
        }
    }
}

impl ParseExpectations {
    pub fn origin(origin: OriginStep) -> Self {
        ParseExpectations {
            origin,
            ..Self::default()
        }
    }

    pub fn with_max_items(mut self, n: Option<u32>) -> Self {
        self.max_items = n;
        self
    }

    pub fn with_categories(mut self, categories: &[String]) -> Self {
        self.categories = categories.to_vec();
        self
    }

    pub fn with_cutoffs(mut self) -> Self {
        self.expect_cutoffs = true;
        self
    }

    pub fn with_tags(mut self, tags: &[AssumptionTag]) -> Self {
        self.step_tag = tags.iter().copied().collect();
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ParseWarning {
    CountBelowBudget { expected: u32, found: usize },
    CountAboveBudget { expected: u32, found: usize },
    DuplicateName { name: String, ordinal: u32 },
    TrailingProse { text: String },
    MissingCutoff { name: String },
}

impl std::fmt::Display for ParseWarning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ParseWarning::CountBelowBudget { expected, found } => {
                write!(f, "count below budget: {found} of {expected} requested")
            }
            ParseWarning::CountAboveBudget { expected, found } => {
                write!(f, "count above budget: {found} for {expected} requested")
            }
            ParseWarning::DuplicateName { name, ordinal } => {
                write!(f, "duplicate name `{name}` at item {ordinal} dropped")
            }
            ParseWarning::TrailingProse { text } => {
                let preview: String = text.chars().take(60).collect();
                write!(f, "unparsed trailing prose: `{preview}`")
            }
            ParseWarning::MissingCutoff { name } => write!(f, "no cutoff found for `{name}`"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Parsed {
    pub set: CandidateSet,
    pub warnings: Vec<ParseWarning>,
}

struct RawItem {
    ordinal: Option<u32>,
    indent: usize,
    text: String,
    heading: Option<String>,
}

enum Line<'a> {
    Blank,
    Numbered { n: u32, indent: usize, rest: &'a str },
    Bullet { indent: usize, rest: &'a str },
    Heading(String),
    Text { indent: usize, text: &'a str },
}

fn numbered_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^(\s*)(\d{1,3})[.)]\s+(\S.*)$").unwrap())
}

fn bullet_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^(\s*)[-*•+]\s+(\S.*)$").unwrap())
}

fn classify(line: &str) -> Line<'_> {
    if line.trim().is_empty() {
        return Line::Blank;
    }
    if let Some(c) = numbered_re().captures(line) {
        if let Ok(n) = c[2].parse::<u32>() {
            if n >= 1 {
                return Line::Numbered {
                    n,
                    indent: c[1].len(),
                    rest: c.get(3).unwrap().as_str(),
                };
            }
        }
    }
    if let Some(c) = bullet_re().captures(line) {
        return Line::Bullet {
            indent: c[1].len(),
            rest: c.get(2).unwrap().as_str(),
        };
    }
    if let Some(h) = heading_text(line) {
        return Line::Heading(h);
    }
    let indent = line.len() - line.trim_start().len();
    Line::Text {
        indent,
        text: line.trim(),
    }
}

/// Markdown headings, whole-line bold, or a short line ending in a colon.
fn heading_text(line: &str) -> Option<String> {
    let t = line.trim();
    let inner = if let Some(h) = t.strip_prefix('#') {
        h.trim_start_matches('#').trim()
    } else if t.starts_with("**") && (t.ends_with("**") || t.ends_with("**:")) && t.len() > 4 {
        let body = t.trim_end_matches(':');
        let body = &body[2..body.len() - 2];
        if body.contains("**") {
            return None;
        }
        body.trim()
    } else if t.ends_with(':') && t.split_whitespace().count() <= 8 && !t.contains(". ") {
        t
    } else {
        return None;
    };
    let cleaned = inner.trim_matches(|c: char| c == ':' || c == '*' || c.is_whitespace());
    (!cleaned.is_empty()).then(|| cleaned.to_string())
}

/// Split a reply at the first heading accepted by `is_second`.
///
/// Everything before that heading is the first part; the heading and the
/// lines after it are the second. Returns the whole text and `None` when no
/// heading qualifies.
pub fn split_at_heading(text: &str, is_second: impl Fn(&str) -> bool) -> (String, Option<String>) {
    let lines: Vec<&str> = text.lines().collect();
    let at = lines.iter().position(|l| match classify(l) {
        Line::Heading(h) => is_second(&h),
        _ => false,
    });
    split_lines(&lines, at, text)
}

/// Split a reply where top-level numbering starts again at 1.
///
/// Headings and blank lines directly above the restart travel with the
/// second part.
pub fn split_at_restart(text: &str) -> (String, Option<String>) {
    let lines: Vec<&str> = text.lines().collect();
    let mut seen_item = false;
    let mut at = None;
    for (i, l) in lines.iter().enumerate() {
        if let Line::Numbered { n, indent: 0, .. } = classify(l) {
            if n == 1 && seen_item {
                at = Some(i);
                break;
            }
            seen_item = true;
        }
    }
    let at = at.map(|mut i| {
        while i > 0 && matches!(classify(lines[i - 1]), Line::Blank | Line::Heading(_)) {
            i -= 1;
        }
        i
    });
    split_lines(&lines, at, text)
}

fn split_lines(lines: &[&str], at: Option<usize>, text: &str) -> (String, Option<String>) {
    match at {
        Some(i) if i > 0 => (lines[..i].join("\n"), Some(lines[i..].join("\n"))),
        Some(_) => (String::new(), Some(text.to_string())),
        None => (text.to_string(), None),
    }
}

/// Parse an assistant reply into candidates.
///
/// Recognized item forms are `1.`/`1)` numbered lines and `-`/`*`/`•`
/// bullets. Indented bullets under a numbered item, and unindented lines
/// directly below an item, are folded into that item. Each item is split
/// into a name and a rationale at the first top-level separator (an em or
/// en dash, ` - `, or `: `), or after a leading `**bold**` name, or before a
/// trailing `(e.g., ...)` group. A numbering restart begins a new scope, so
/// panels numbered independently keep their own ordinals.
pub fn parse_candidates(
    reply: &ChatMessage,
    expectations: &ParseExpectations,
) -> Result<Parsed, ExtractionError> {
    if reply.role != Role::Assistant {
        return Err(ExtractionError::NotAssistant(reply.role.as_str()));
    }
    let mut raw: Vec<RawItem> = Vec::new();
    let mut heading: Option<String> = None;
    let mut open = false;
    let mut blank_since_item = false;
    let mut trailing: Vec<String> = Vec::new();

    for line in reply.content.lines() {
        match classify(line) {
            Line::Blank => {
                blank_since_item = true;
            }
            Line::Heading(h) => {
                heading = Some(h);
                open = false;
                trailing.clear();
            }
            Line::Numbered { n, indent, rest } => {
                raw.push(RawItem {
                    ordinal: Some(n),
                    indent,
                    text: rest.trim().to_string(),
                    heading: heading.clone(),
                });
                open = true;
                blank_since_item = false;
                trailing.clear();
            }
            Line::Bullet { indent, rest } => {
                let nested = open && raw.last().is_some_and(|last| indent > last.indent);
                if nested {
                    let last = raw.last_mut().unwrap();
                    last.text.push(' ');
                    last.text.push_str(rest.trim());
                } else {
                    raw.push(RawItem {
                        ordinal: None,
                        indent,
                        text: rest.trim().to_string(),
                        heading: heading.clone(),
                    });
                    open = true;
                    blank_since_item = false;
                    trailing.clear();
                }
            }
            Line::Text { indent, text } => {
                if open && (!blank_since_item || indent > 0) {
                    let last = raw.last_mut().unwrap();
                    last.text.push(' ');
                    last.text.push_str(text);
                } else {
                    open = false;
                    if !raw.is_empty() {
                        trailing.push(text.to_string());
                    }
                }
            }
        }
    }

    let mut warnings = Vec::new();
    let mut items: Vec<CandidateVariable> = Vec::new();
    let mut seen: BTreeSet<String> = BTreeSet::new();
    let mut last_ordinal = 0u32;

    for r in raw {
        let ordinal = r.ordinal.unwrap_or(last_ordinal + 1);
        last_ordinal = ordinal;

        let (name, rationale) = split_item(&r.text);
        if name.is_empty() {
            continue;
        }
        let key = normalize_name(&name);
        if key.is_empty() {
            continue;
        }
        if !seen.insert(key) {
            warnings.push(ParseWarning::DuplicateName { name, ordinal });
            continue;
        }
        let category = if expectations.categories.is_empty() {
            None
        } else {
            r.heading
                .as_deref()
                .map(|h| match_category(h, &expectations.categories))
        };
        let cutoff = if expectations.expect_cutoffs {
            let found = extract_cutoff(&rationale).or_else(|| extract_cutoff(&r.text));
            if found.is_none() {
                warnings.push(ParseWarning::MissingCutoff { name: name.clone() });
            }
            found
        } else {
            None
        };
        items.push(CandidateVariable {
            ordinal,
            name,
            rationale,
            category,
            origin_step: expectations.origin,
            cutoff,
            trend_only: false,
            provenance: None,
        });
    }

    if items.is_empty() {
        let preview: String = reply.content.trim().chars().take(60).collect();
        return Err(ExtractionError::EmptyParse { preview });
    }
    if !trailing.is_empty() {
        warnings.push(ParseWarning::TrailingProse {
            text: trailing.join(" "),
        });
    }
    if let Some(expected) = expectations.max_items {
        let found = items.len();
        if found < expected as usize {
            warnings.push(ParseWarning::CountBelowBudget { expected, found });
        } else if found > expected as usize {
            warnings.push(ParseWarning::CountAboveBudget { expected, found });
        }
    }
    let mut set = CandidateSet::new(items);
    set.step_tag = expectations.step_tag.clone();
    Ok(Parsed { set, warnings })
}

fn match_category(heading: &str, labels: &[String]) -> String {
    let h = normalize_name(heading);
    if let Some(l) = labels.iter().find(|l| normalize_name(l) == h) {
        return l.clone();
    }
    let words: BTreeSet<&str> = h.split_whitespace().collect();
    labels
        .iter()
        .find(|l| {
            normalize_name(l)
                .split_whitespace()
                .all(|w| words.contains(w))
        })
        .cloned()
        .unwrap_or(h)
}

/// Split an item into display name and rationale.
fn split_item(text: &str) -> (String, String) {
    let text = text.trim();
    if let Some(after) = text.strip_prefix("**") {
        if let Some(end) = after.find("**") {
            let name = clean_name(&after[..end]);
            let rest = after[end + 2..]
                .trim_start_matches(|c: char| {
                    c.is_whitespace() || matches!(c, ':' | '-' | '\u{2013}' | '\u{2014}')
                })
                .trim();
            return (name, rest.to_string());
        }
    }
    if let Some((at, len)) = find_separator(text) {
        let name = clean_name(&text[..at]);
        let rest = text[at + len..].trim();
        return (name, rest.to_string());
    }
    if let Some(open) = trailing_example_group(text) {
        let name = clean_name(&text[..open]);
        let rest = text[open + 1..text.len() - 1].trim();
        return (name, rest.to_string());
    }
    (clean_name(text), String::new())
}

fn clean_name(s: &str) -> String {
    s.trim()
        .trim_matches(|c: char| c == '*' || c == '_')
        .trim()
        .trim_end_matches([':', ';', ','])
        .trim()
        .to_string()
}

/// Byte offset and length of the first separator outside parentheses.
fn find_separator(text: &str) -> Option<(usize, usize)> {
    let mut depth = 0i32;
    let bytes = text.as_bytes();
    for (i, c) in text.char_indices() {
        match c {
            '(' | '[' => depth += 1,
            ')' | ']' => depth -= 1,
            _ if depth > 0 => {}
            '\u{2014}' | '\u{2013}' if i > 0 => return Some((i, c.len_utf8())),
            '-' if i > 0 && bytes[i - 1] == b' ' && bytes.get(i + 1) == Some(&b' ') => {
                return Some((i, 1))
            }
            ':' if i > 0 && bytes.get(i + 1).is_none_or(|b| b.is_ascii_whitespace()) => {
                return Some((i, 1))
            }
            _ => {}
        }
    }
    None
}

/// Start of a final `( e.g. ... )` group, if the text ends with one.
fn trailing_example_group(text: &str) -> Option<usize> {
    if !text.ends_with(')') {
        return None;
    }
    let mut depth = 0i32;
    for (i, c) in text.char_indices().rev() {
        match c {
            ')' => depth += 1,
            '(' => {
                depth -= 1;
                if depth == 0 {
                    let inner = text[i + 1..].trim_start().to_lowercase();
                    return (i > 0 && inner.starts_with("e.g")).then_some(i);
                }
            }
            _ => {}
        }
    }
    None
}

fn cutoff_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(concat!(
            r"(?i)\b(?:(?:below|above|under|over|at least|at most|up to|less than|more than|greater than)",
            r"\s+[$£€]?\d[\d,./]*%?(?:\s+(?:months?|years?|weeks?|days?|hours?)\b)?",
            r"|by\s+(?:january|february|march|april|may|june|july|august|september|october|november|december)",
            r"\s+\d{1,2}(?:st|nd|rd|th)?)"
        ))
        .unwrap()
    })
}

fn source_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)\bsource:\s*([^;)]+)").unwrap())
}

/// First threshold phrase in `text`, with its source when one is named.
///
/// The source is an explicit `source: X`, or else the text between `e.g.,`
/// and the threshold.
pub fn extract_cutoff(text: &str) -> Option<Cutoff> {
    let m = cutoff_re().find(text)?;
    let value_text = m.as_str().trim_end_matches([',', '.', '/']).to_string();
    let source_text = source_re()
        .captures(text)
        .map(|c| c[1].trim().trim_end_matches('.').to_string())
        .or_else(|| {
            let lower = text[..m.start()].to_lowercase();
            let at = lower.rfind("e.g.")?;
            let ctx = text[at + 4..m.start()]
                .trim_matches(|c: char| c.is_whitespace() || matches!(c, ',' | ':' | ';'));
            (!ctx.is_empty()).then(|| ctx.to_string())
        })
        .filter(|s| !s.is_empty());
    Some(Cutoff {
        value_text,
        source_text,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reply(text: &str) -> ChatMessage {
        ChatMessage::assistant(text)
    }

    fn names(p: &Parsed) -> Vec<&str> {
        p.set.names()
    }

    #[test]
    fn minimal_list_with_em_dashes() {
        let p = parse_candidates(&reply("1. A — r1\n2. B — r2"), &ParseExpectations::default()).unwrap();
        assert_eq!(names(&p), vec!["A", "B"]);
        assert_eq!(p.set.items[0].rationale, "r1");
        assert!(p.warnings.is_empty());
    }

    #[test]
    fn separators_and_numbering_styles() {
        let text = "1) Fuel Costs: cost of fuel\n2) Weather - storms at sea\n3. **Interest Rates** – borrowing\n- Bullet Item: text\n* Star Item";
        let p = parse_candidates(&reply(text), &ParseExpectations::default()).unwrap();
        assert_eq!(
            names(&p),
            vec!["Fuel Costs", "Weather", "Interest Rates", "Bullet Item", "Star Item"]
        );
        assert_eq!(p.set.items[2].rationale, "borrowing");
    }

    #[test]
    fn separators_inside_parentheses_are_ignored() {
        let (n, r) = split_item("Campus Facilities Quality (Gyms, Labs: etc.) - investment");
        assert_eq!(n, "Campus Facilities Quality (Gyms, Labs: etc.)");
        assert_eq!(r, "investment");
        let (n, _) = split_item("Long-term Strategy - plans");
        assert_eq!(n, "Long-term Strategy");
    }

    #[test]
    fn continuation_lines_and_nested_bullets_fold_into_item() {
        let text = "1. **Distance**\n   The drive is long.\n   - also costly\n2. **Savings**: money\nset aside";
        let p = parse_candidates(&reply(text), &ParseExpectations::default()).unwrap();
        assert_eq!(names(&p), vec!["Distance", "Savings"]);
        assert_eq!(p.set.items[0].rationale, "The drive is long. also costly");
        assert_eq!(p.set.items[1].rationale, "money set aside");
    }

    #[test]
    fn headings_assign_requested_categories() {
        let text = "### Factors of Yourself\n1. A: x\n\n**School Factors:**\n2. B: y\n";
        let exp = ParseExpectations::default()
            .with_categories(&["school factors".into(), "factors of yourself".into()]);
        let p = parse_candidates(&reply(text), &exp).unwrap();
        assert_eq!(p.set.items[0].category.as_deref(), Some("factors of yourself"));
        assert_eq!(p.set.items[1].category.as_deref(), Some("school factors"));

        let p = parse_candidates(&reply(text), &ParseExpectations::default()).unwrap();
        assert!(p.set.items.iter().all(|c| c.category.is_none()));
    }

    #[test]
    fn warnings_for_duplicates_count_and_trailing_prose() {
        let text = "Intro line.\n\n1. A: x\n2. a.: y\n\nIn summary, these are good.";
        let exp = ParseExpectations::default().with_max_items(Some(40));
        let p = parse_candidates(&reply(text), &exp).unwrap();
        assert_eq!(names(&p), vec!["A"]);
        assert!(p.warnings.contains(&ParseWarning::DuplicateName { name: "a.".into(), ordinal: 2 }));
        assert!(p.warnings.contains(&ParseWarning::CountBelowBudget { expected: 40, found: 1 }));
        assert!(p
            .warnings
            .contains(&ParseWarning::TrailingProse { text: "In summary, these are good.".into() }));
    }

    #[test]
    fn empty_parse_and_wrong_role() {
        let err = parse_candidates(&reply("I cannot help with that."), &ParseExpectations::default());
        assert!(matches!(err, Err(ExtractionError::EmptyParse { .. })));
        let user = ChatMessage::new(Role::User, "1. A");
        assert_eq!(
            parse_candidates(&user, &ParseExpectations::default()),
            Err(ExtractionError::NotAssistant("user"))
        );
    }

    #[test]
    fn ordinal_restart_keeps_listed_numbers() {
        let text = "**Market Factors:**\n9. A - x\n10. B - y\n\n**Managerial Factors:**\n10. C - z\n11. D - w";
        let p = parse_candidates(&reply(text), &ParseExpectations::default()).unwrap();
        let ords: Vec<u32> = p.set.items.iter().map(|c| c.ordinal).collect();
        assert_eq!(ords, vec![9, 10, 10, 11]);
    }

    #[test]
    fn cutoffs_from_example_groups() {
        let c = extract_cutoff("e.g., the Pell Grant 2023-2024: below $6,656").unwrap();
        assert_eq!(c.value_text, "below $6,656");
        assert_eq!(c.source_text.as_deref(), Some("the Pell Grant 2023-2024"));
        let c = extract_cutoff("e.g., JSA: above 18, with exceptions; source: UK Rules").unwrap();
        assert_eq!(c.value_text, "above 18");
        assert_eq!(c.source_text.as_deref(), Some("UK Rules"));
        let c = extract_cutoff("e.g., JSA: above 3 months prior to claim").unwrap();
        assert_eq!(c.value_text, "above 3 months");
        let c = extract_cutoff("e.g., TK expansion, 15th b-day by April 2").unwrap();
        assert_eq!(c.value_text, "by April 2");
        assert!(extract_cutoff("expressed as % of FPL, adjusted by 5% FPL disregard").is_none());
    }

    #[test]
    fn missing_cutoff_is_warned_when_expected() {
        let text = "- Age (e.g., below 35; source: Platform)\n- Household Size";
        let p = parse_candidates(&reply(text), &ParseExpectations::default().with_cutoffs()).unwrap();
        assert_eq!(names(&p), vec!["Age", "Household Size"]);
        assert_eq!(p.set.items[0].cutoff.as_ref().unwrap().value_text, "below 35");
        assert_eq!(
            p.warnings,
            vec![ParseWarning::MissingCutoff { name: "Household Size".into() }]
        );
    }

    #[test]
    fn split_by_heading_and_by_restart() {
        let text = "1. A: a\n2. B: b\n\n**Associated factors:**\n1. C: c";
        let (first, second) = split_at_heading(text, |h| h.to_lowercase().contains("associated"));
        assert_eq!(first, "1. A: a\n2. B: b\n");
        assert_eq!(second.as_deref(), Some("**Associated factors:**\n1. C: c"));
        assert_eq!(split_at_heading("1. A", |_| true), ("1. A".to_string(), None));

        let text = "Factors:\n1. A: a\n2. B: b\n\nCharacteristics:\n1. C: c\n2. D: d";
        let (first, second) = split_at_restart(text);
        assert_eq!(first, "Factors:\n1. A: a\n2. B: b");
        assert_eq!(second.as_deref(), Some("\nCharacteristics:\n1. C: c\n2. D: d"));
        assert_eq!(split_at_restart("1. A\n2. B").1, None);
    }

    #[test]
    fn deterministic() {
        let text = "1. A: x\n- B\n### H\n3) C — z";
        let a = parse_candidates(&reply(text), &ParseExpectations::default()).unwrap();
        let b = parse_candidates(&reply(text), &ParseExpectations::default()).unwrap();
        assert_eq!(a, b);
    }
}
