//! Run reports: the numbers a finished run is judged by, printable as
//! a table and appended to the log file as a machine-readable trailer.
//!
//! The trailer reuses the log's record framing with `RunSummary` in
//! the cause position:
//!
//! ```text
//! entry|<entries_logged>|<total_ticks>|RunSummary|<measurements_taken>|<violations>|<period_trace>
//! ```
//!
//! `violations` is a `;`-separated list of
//! `name,component,operation,kind,first_detection_tick`; `period_trace`
//! is a `;`-separated list of `tick:period` pairs, starting with the
//! initial period at tick 0 and then one pair per change. Loading the
//! file as a log skips this record; [`RunReport::parse_record`] reads
//! it back.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::knowledge::codec;
use crate::knowledge::LogEntry;
use crate::property::{PropertyId, ViolationKind};
use crate::Tick;

/// First sighting of one violation kind on one property.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ViolationSummary {
    pub property: PropertyId,
    pub kind: ViolationKind,
    /// Tick of the first log entry carrying the violation: the moment
    /// it became visible downstream, not the measurement tick.
    pub first_detection_tick: Tick,
}

/// What a run produced, in numbers.
#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub total_ticks: Tick,
    pub entries_logged: u64,
    pub measurements_taken: u64,
    pub violations: Vec<ViolationSummary>,
    /// `(tick, period)` pairs when a period-adjusting policy ran;
    /// empty otherwise.
    pub period_trace: Vec<(Tick, Tick)>,
}

impl RunReport {
    /// Fold detection summaries out of logged entries: for every
    /// `(property, kind)` pair, the tick of the first entry whose
    /// event list contains it.
    pub fn first_detections(entries: &[LogEntry]) -> Vec<ViolationSummary> {
        let mut first: BTreeMap<(PropertyId, ViolationKind), Tick> = BTreeMap::new();
        for entry in entries {
            for event in &entry.events {
                first
                    .entry((event.property.clone(), event.violation))
                    .or_insert(entry.tick);
            }
        }
        first
            .into_iter()
            .map(|((property, kind), tick)| ViolationSummary {
                property,
                kind,
                first_detection_tick: tick,
            })
            .collect()
    }

    /// The trailer record, without a trailing newline.
    pub fn render_record(&self) -> String {
        let mut out = String::from("entry|");
        out.push_str(&self.entries_logged.to_string());
        out.push('|');
        out.push_str(&self.total_ticks.to_string());
        out.push_str("|RunSummary|");
        out.push_str(&self.measurements_taken.to_string());
        out.push('|');
        let mut first = true;
        for v in &self.violations {
            if !first {
                out.push(';');
            }
            first = false;
            out.push_str(&codec::escape(v.property.name()));
            out.push(',');
            out.push_str(&codec::escape(v.property.component()));
            out.push(',');
            out.push_str(&codec::escape(v.property.operation()));
            out.push(',');
            out.push_str(&v.kind.to_string());
            out.push(',');
            out.push_str(&v.first_detection_tick.to_string());
        }
        out.push('|');
        let mut first = true;
        for (tick, period) in &self.period_trace {
            if !first {
                out.push(';');
            }
            first = false;
            let _ = write!(out, "{tick}:{period}");
        }
        out
    }

    /// Parse a trailer record produced by [`RunReport::render_record`].
    pub fn parse_record(line: &str) -> Result<RunReport, ReportError> {
        let fields: Vec<&str> = line.split('|').collect();
        if fields.len() != 7 {
            return Err(ReportError::Parse(format!(
                "expected 7 fields, found {}",
                fields.len()
            )));
        }
        if fields[0] != "entry" || fields[3] != "RunSummary" {
            return Err(ReportError::Parse("not a RunSummary record".into()));
        }
        let entries_logged = codec::parse_u64(fields[1]).map_err(ReportError::Parse)?;
        let total_ticks = codec::parse_u64(fields[2]).map_err(ReportError::Parse)?;
        let measurements_taken = codec::parse_u64(fields[4]).map_err(ReportError::Parse)?;

        let mut violations = Vec::new();
        if !fields[5].is_empty() {
            for item in fields[5].split(';') {
                let parts: Vec<&str> = item.split(',').collect();
                if parts.len() != 5 {
                    return Err(ReportError::Parse(format!(
                        "violation item needs 5 parts, found {}",
                        parts.len()
                    )));
                }
                let property = PropertyId::new(
                    codec::unescape(parts[0]).map_err(ReportError::Parse)?,
                    codec::unescape(parts[1]).map_err(ReportError::Parse)?,
                    codec::unescape(parts[2]).map_err(ReportError::Parse)?,
                )
                .map_err(|e| ReportError::Parse(e.to_string()))?;
                violations.push(ViolationSummary {
                    property,
                    kind: codec::parse_violation_kind(parts[3]).map_err(ReportError::Parse)?,
                    first_detection_tick: codec::parse_u64(parts[4]).map_err(ReportError::Parse)?,
                });
            }
        }

        let mut period_trace = Vec::new();
        if !fields[6].is_empty() {
            for item in fields[6].split(';') {
                let (tick, period) = item.split_once(':').ok_or_else(|| {
                    ReportError::Parse(format!("'{item}' is not a tick:period pair"))
                })?;
                period_trace.push((
                    codec::parse_u64(tick).map_err(ReportError::Parse)?,
                    codec::parse_u64(period).map_err(ReportError::Parse)?,
                ));
            }
        }

        Ok(RunReport {
            total_ticks,
            entries_logged,
            measurements_taken,
            violations,
            period_trace,
        })
    }

    /// Human-readable summary for standard output.
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "total ticks         {}", self.total_ticks);
        let _ = writeln!(out, "entries logged      {}", self.entries_logged);
        let _ = writeln!(out, "measurements taken  {}", self.measurements_taken);
        if self.violations.is_empty() {
            let _ = writeln!(out, "violations          none");
        } else {
            let _ = writeln!(out, "violations          {}", self.violations.len());
            for v in &self.violations {
                let _ = writeln!(
                    out,
                    "  {} {} first detected at tick {}",
                    v.property.qualified(),
                    v.kind,
                    v.first_detection_tick
                );
            }
        }
        if !self.period_trace.is_empty() {
            let trace = self
                .period_trace
                .iter()
                .map(|(t, p)| format!("{t}:{p}"))
                .collect::<Vec<_>>()
                .join(" -> ");
            let _ = writeln!(out, "period trace        {trace}");
        }
        out
    }

    /// Earliest detection tick across all violations, if any.
    pub fn first_detection(&self) -> Option<Tick> {
        self.violations.iter().map(|v| v.first_detection_tick).min()
    }
}

/// Side-by-side table for mode/policy comparison runs.
pub fn render_comparison(rows: &[(String, RunReport)]) -> String {
    let mut out = String::new();
    let label_width = rows
        .iter()
        .map(|(label, _)| label.len())
        .max()
        .unwrap_or(0)
        .max("variant".len());
    let _ = writeln!(
        out,
        "{:<label_width$}  {:>9}  {:>13}  {:>15}",
        "variant", "entries", "measurements", "first detection"
    );
    for (label, report) in rows {
        let detection = report
            .first_detection()
            .map(|t| t.to_string())
            .unwrap_or_else(|| "-".into());
        let _ = writeln!(
            out,
            "{label:<label_width$}  {:>9}  {:>13}  {detection:>15}",
            report.entries_logged, report.measurements_taken
        );
    }
    out
}

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("summary record: {0}")]
    Parse(String),
}
