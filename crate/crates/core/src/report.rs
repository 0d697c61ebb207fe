//! Tables of suggested variables in the layout of the source tables, with
//! provenance back to the transcript message each row came from.
//!
//! Markdown is the human format; JSON carries the same [`Report`] value; CSV
//! flattens the rows. [`rows_from_markdown`] reads the main table back, so
//! the Markdown row model round-trips through JSON.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::causal_model::{Design, SearchBudget};
use crate::extraction::{CandidateSet, CandidateVariable};
use crate::pipeline::{Aggregate, DiscoveryRun, FlowKind, ModelSummary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Markdown,
    Json,
    Csv,
}

impl ReportFormat {
    pub fn extension(&self) -> &'static str {
        match self {
            ReportFormat::Markdown => "md",
            ReportFormat::Json => "json",
            ReportFormat::Csv => "csv",
        }
    }
}

impl fmt::Display for ReportFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ReportFormat::Markdown => "markdown",
            ReportFormat::Json => "json",
            ReportFormat::Csv => "csv",
        })
    }
}

impl FromStr for ReportFormat {
    type Err = ReportError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            _ => Err(ReportError::UnknownFormat(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ReportError {
    #[error("unknown report format `{0}` (expected markdown, json, or csv)")]
    UnknownFormat(String),
    #[error("no variable table found in report")]
    NoTable,
    #[error("report table line {line}: {message}")]
    Table { line: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportSubject {
    Run,
    Aggregate,
}

/// Where a row was read from: a session and a message index within it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowProvenance {
    pub session_id: String,
    pub message_index: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportRow {
    pub ordinal: u32,
    pub name: String,
    pub rationale: String,
    #[serde(default)]
    pub category: Option<String>,
    #[serde(default)]
    pub cutoff: Option<String>,
    #[serde(default)]
    pub cutoff_source: Option<String>,
    #[serde(default)]
    pub trend_only: bool,
    /// Literature match, filled in by hand.
    #[serde(default)]
    pub citation: String,
    #[serde(default)]
    pub provenance: Option<RowProvenance>,
}

impl ReportRow {
    fn from_candidate(c: &CandidateVariable) -> Self {
        ReportRow {
            ordinal: c.ordinal,
            name: c.name.clone(),
            rationale: c.rationale.clone(),
            category: c.category.clone(),
            cutoff: c.cutoff.as_ref().map(|k| k.value_text.clone()),
            cutoff_source: c.cutoff.as_ref().and_then(|k| k.source_text.clone()),
            trend_only: c.trend_only,
            citation: String::new(),
            provenance: c.provenance.as_ref().map(|p| RowProvenance {
                session_id: p.session_id.clone(),
                message_index: p.message_index,
            }),
        }
    }
}

/// The footer echoed under the table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportNotes {
    pub flow: FlowKind,
    pub budgets: String,
    pub model: String,
    pub temperature: Option<f64>,
    pub sessions: usize,
    pub elapsed_ms: Option<u64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub remarks: Vec<String>,
}

/// A titled block of extra Markdown rendered after the main table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportSection {
    pub title: String,
    pub body: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub id: String,
    pub subject: ReportSubject,
    pub variable_label: String,
    pub rows: Vec<ReportRow>,
    pub flags: Vec<String>,
    pub notes: ReportNotes,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sections: Vec<ReportSection>,
}

fn rows_of(set: &CandidateSet) -> Vec<ReportRow> {
    set.items.iter().map(ReportRow::from_candidate).collect()
}

fn count(n: Option<u32>) -> String {
    n.map_or_else(|| "all".to_string(), |n| n.to_string())
}

/// Budget summary for the design's search family.
pub fn budget_summary(design: Design, b: &SearchBudget) -> String {
    let unset = |n: Option<u32>| n.map_or_else(|| "unset".to_string(), |n| n.to_string());
    match design {
        Design::Iv => format!("K_0 = {}, K = {}", unset(b.k0), count(b.k)),
        Design::ConditionalIndependence | Design::DiffInDiff => {
            format!("L_0 = {}, L = {}", unset(b.l0), count(b.l))
        }
        Design::RegressionDiscontinuity => format!("J_0 = {}, J = {}", unset(b.j0), count(b.j)),
    }
}

impl Report {
    pub fn from_run(run: &DiscoveryRun) -> Report {
        let mut sections = Vec::new();
        if let Some(contrast) = &run.contrast_set {
            sections.push(ReportSection {
                title: "Contrast list".into(),
                body: plain_list(contrast),
            });
        }
        if let Some(cov) = &run.covariate_set {
            sections.push(ReportSection {
                title: "Characteristics listed".into(),
                body: if cov.is_empty() { "(none)".into() } else { plain_list(cov) },
            });
        }
        for e in &run.explanations {
            sections.push(ReportSection {
                title: format!("Why \"{}\" was excluded", e.excluded),
                body: format!(
                    "{}\n\n_Source: {}#{}_",
                    quote(&e.text),
                    e.session_id,
                    e.message_index
                ),
            });
        }
        for p in &run.probes {
            sections.push(ReportSection {
                title: "Sources probe".into(),
                body: format!("{}\n\n_Source: {}#{}_", quote(&p.text), p.session_id, p.message_index),
            });
        }
        if let Some(adv) = &run.adversary_material {
            let mut body = format!(
                "Critic session {}; defender session {}.\n\n",
                adv.critic_session_id, adv.defender_session_id
            );
            for c in &adv.critiques {
                let arg = if c.argument.is_empty() { "(no argument matched)" } else { &c.argument };
                body.push_str(&format!("- **{}**: {}\n", c.candidate, one_line(arg)));
            }
            body.push_str(&format!(
                "\nRevised list ({} items): {}",
                adv.revised_set.len(),
                if adv.revised_set.is_empty() {
                    "empty".to_string()
                } else {
                    adv.revised_set.names().join("; ")
                }
            ));
            sections.push(ReportSection {
                title: "Adversarial round".into(),
                body,
            });
        }
        Report {
            id: run.run_id.clone(),
            subject: ReportSubject::Run,
            variable_label: run.flow.variable_label().to_string(),
            rows: rows_of(&run.final_set),
            flags: run.flags.iter().map(ToString::to_string).collect(),
            notes: ReportNotes {
                flow: run.flow,
                budgets: budget_summary(run.query.design, &run.query.budgets),
                model: run.model.model.clone(),
                temperature: run.model.temperature,
                sessions: run.sessions.len(),
                elapsed_ms: Some(run.elapsed_ms),
                remarks: run.notes.clone(),
            },
            sections,
        }
    }

    pub fn from_aggregate(agg: &Aggregate) -> Report {
        let ModelSummary { model, temperature } = agg.model.clone();
        Report {
            id: agg.aggregate_id.clone(),
            subject: ReportSubject::Aggregate,
            variable_label: agg.flow.variable_label().to_string(),
            rows: rows_of(&agg.set),
            flags: Vec::new(),
            notes: ReportNotes {
                flow: agg.flow,
                budgets: budget_summary(agg.query.design, &agg.query.budgets),
                model,
                temperature,
                sessions: agg.run_ids.len(),
                elapsed_ms: None,
                remarks: vec![format!("{} of runs {}", agg.mode, agg.run_ids.join(", "))],
            },
            sections: Vec::new(),
        }
    }

    pub fn render(&self, format: ReportFormat) -> String {
        match format {
            ReportFormat::Markdown => self.to_markdown(),
            ReportFormat::Json => self.to_json(),
            ReportFormat::Csv => self.to_csv(),
        }
    }

    fn columns(&self) -> Columns {
        Columns {
            category: self.rows.iter().any(|r| r.category.is_some()),
            cutoff: self
                .rows
                .iter()
                .any(|r| r.cutoff.is_some() || r.cutoff_source.is_some()),
            trend: self.rows.iter().any(|r| r.trend_only),
        }
    }

    pub fn to_markdown(&self) -> String {
        let subject = match self.subject {
            ReportSubject::Run => "Run",
            ReportSubject::Aggregate => "Aggregate",
        };
        let mut out = format!("# {subject} {} ({})\n\n", self.id, self.notes.flow);
        let cols = self.columns();
        let mut header = vec!["#", self.variable_label.as_str(), "Rationale Provided"];
        if cols.category {
            header.push("Category");
        }
        if cols.cutoff {
            header.extend(["Cutoff", "Source"]);
        }
        if cols.trend {
            header.push("Trend-only");
        }
        header.extend(["Citations", "Provenance"]);
        out.push_str(&format!("| {} |\n", header.join(" | ")));
        out.push_str(&format!("|{}\n", "---|".repeat(header.len())));
        for r in &self.rows {
            let mut cells = vec![r.ordinal.to_string(), escape(&r.name), escape(&r.rationale)];
            if cols.category {
                cells.push(escape(r.category.as_deref().unwrap_or("")));
            }
            if cols.cutoff {
                cells.push(escape(r.cutoff.as_deref().unwrap_or("")));
                cells.push(escape(r.cutoff_source.as_deref().unwrap_or("")));
            }
            if cols.trend {
                cells.push(if r.trend_only { "yes".into() } else { String::new() });
            }
            cells.push(escape(&r.citation));
            cells.push(
                r.provenance
                    .as_ref()
                    .map(|p| escape(&format!("{}#{}", p.session_id, p.message_index)))
                    .unwrap_or_default(),
            );
            out.push_str(&format!("| {} |\n", cells.join(" | ")));
        }
        if self.rows.is_empty() {
            out.push_str("\n_No variables were suggested._\n");
        }

        out.push_str("\n**Flags:**");
        if self.flags.is_empty() {
            out.push_str(" none\n");
        } else {
            out.push('\n');
            for f in &self.flags {
                out.push_str(&format!("- {}\n", one_line(f)));
            }
        }

        let n = &self.notes;
        let temperature = n
            .temperature
            .map_or_else(|| "provider default".to_string(), |t| t.to_string());
        out.push_str(&format!(
            "\n**Notes:** flow {}; budgets {}; model {}; temperature {}; sessions {}",
            n.flow, n.budgets, n.model, temperature, n.sessions
        ));
        if let Some(ms) = n.elapsed_ms {
            out.push_str(&format!("; total running time {:.1} s", ms as f64 / 1000.0));
        }
        out.push_str(".\n");
        for r in &n.remarks {
            out.push_str(&format!("\n- {}", one_line(r)));
        }
        if !n.remarks.is_empty() {
            out.push('\n');
        }
        for s in &self.sections {
            out.push_str(&format!("\n## {}\n\n{}\n", s.title, s.body.trim_end()));
        }
        out
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "ordinal",
            "name",
            "rationale",
            "category",
            "cutoff_value",
            "cutoff_source",
            "trend_only",
            "citation",
            "session_id",
            "message_index",
        ])
        .expect("in-memory csv write");
        for r in &self.rows {
            let (sid, idx) = match &r.provenance {
                Some(p) => (p.session_id.clone(), p.message_index.to_string()),
                None => (String::new(), String::new()),
            };
            w.write_record([
                r.ordinal.to_string().as_str(),
                &r.name,
                &r.rationale,
                r.category.as_deref().unwrap_or(""),
                r.cutoff.as_deref().unwrap_or(""),
                r.cutoff_source.as_deref().unwrap_or(""),
                if r.trend_only { "true" } else { "false" },
                &r.citation,
                &sid,
                &idx,
            ])
            .expect("in-memory csv write");
        }
        String::from_utf8(w.into_inner().expect("flush in-memory csv")).expect("csv is utf-8")
    }
}

/// Render a run in the requested format.
pub fn emit_report(run: &DiscoveryRun, format: ReportFormat) -> String {
    Report::from_run(run).render(format)
}

struct Columns {
    category: bool,
    cutoff: bool,
    trend: bool,
}

fn plain_list(set: &CandidateSet) -> String {
    set.items
        .iter()
        .map(|c| format!("{}. **{}**: {}", c.ordinal, escape(&c.name), one_line(&c.rationale)))
        .collect::<Vec<_>>()
        .join("\n")
}

fn quote(text: &str) -> String {
    text.trim()
        .lines()
        .map(|l| if l.is_empty() { ">".to_string() } else { format!("> {l}") })
        .collect::<Vec<_>>()
        .join("\n")
}

fn one_line(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Make text safe for a table cell. Reversed by [`unescape`].
fn escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('\\', "\\\\")
        .replace('|', "\\|")
        .replace("\r\n", "\n")
        .replace('\n', "<br>")
}

fn unescape(cell: &str) -> String {
    let mut out = String::with_capacity(cell.len());
    let mut chars = cell.chars();
    while let Some(c) = chars.next() {
        if c == '\\' {
            if let Some(n) = chars.next() {
                out.push(n);
            }
        } else {
            out.push(c);
        }
    }
    out.replace("<br>", "\n").replace("&lt;", "<").replace("&amp;", "&")
}

/// Split a table line on unescaped pipes.
fn split_cells(line: &str) -> Vec<String> {
    let inner = line.trim();
    let inner = inner.strip_prefix('|').unwrap_or(inner);
    let mut cells = Vec::new();
    let mut cur = String::new();
    let mut chars = inner.chars().peekable();
    while let Some(c) = chars.next() {
        match c {
            '\\' => {
                cur.push(c);
                if let Some(n) = chars.next() {
                    cur.push(n);
                }
            }
            '|' => cells.push(std::mem::take(&mut cur)),
            _ => cur.push(c),
        }
    }
    if !cur.trim().is_empty() {
        cells.push(cur);
    }
    cells.iter().map(|c| c.trim().to_string()).collect()
}

/// Read the first variable table of a Markdown report back into rows.
pub fn rows_from_markdown(md: &str) -> Result<Vec<ReportRow>, ReportError> {
    let lines: Vec<&str> = md.lines().collect();
    let start = lines
        .iter()
        .position(|l| l.starts_with("| # |"))
        .ok_or(ReportError::NoTable)?;
    let header = split_cells(lines[start]);
    let col = |name: &str| header.iter().position(|h| h == name);
    let (cat, cut, src, trend, cite, prov) = (
        col("Category"),
        col("Cutoff"),
        col("Source"),
        col("Trend-only"),
        col("Citations"),
        col("Provenance"),
    );
    let mut rows = Vec::new();
    for (offset, line) in lines.get(start + 2..).unwrap_or(&[]).iter().enumerate() {
        if !line.starts_with('|') {
            break;
        }
        let lineno = start + 3 + offset;
        let cells = split_cells(line);
        if cells.len() != header.len() {
            return Err(ReportError::Table {
                line: lineno,
                message: format!("expected {} cells, found {}", header.len(), cells.len()),
            });
        }
        let get = |i: Option<usize>| i.map(|i| unescape(&cells[i])).unwrap_or_default();
        let opt = |i: Option<usize>| Some(get(i)).filter(|s| !s.is_empty());
        let ordinal = cells[0].parse().map_err(|_| ReportError::Table {
            line: lineno,
            message: format!("bad ordinal `{}`", cells[0]),
        })?;
        let provenance = match opt(prov) {
            Some(p) => {
                let (sid, idx) = p.rsplit_once('#').ok_or_else(|| ReportError::Table {
                    line: lineno,
                    message: format!("bad provenance `{p}`"),
                })?;
                Some(RowProvenance {
                    session_id: sid.to_string(),
                    message_index: idx.parse().map_err(|_| ReportError::Table {
                        line: lineno,
                        message: format!("bad message index in `{p}`"),
                    })?,
                })
            }
            None => None,
        };
        rows.push(ReportRow {
            ordinal,
            name: unescape(&cells[1]),
            rationale: unescape(&cells[2]),
            category: opt(cat),
            cutoff: opt(cut),
            cutoff_source: opt(src),
            trend_only: get(trend) == "yes",
            citation: get(cite),
            provenance,
        });
    }
    Ok(rows)
}
