//! Append-only knowledge log: the repository the monitor writes
//! composed state snapshots and violation events into, and the place
//! downstream analysis hangs its trigger.
//!
//! # On-disk format (`.ndlog`)
//!
//! Newline-delimited records, one per line, fields separated by `|`:
//!
//! ```text
//! ndlog|1
//! entry|<seq>|<tick>|<cause>|<overhead>|<composed_at>|<state>|<events>
//! ```
//!
//! The first line is the header with the format version. `cause` is
//! `PeriodicTick` or `Violation`. `state` is a `;`-separated list of
//! `name,component,operation,value,tick,sensor_id` items; `events` is a
//! `;`-separated list of `name,component,operation,kind,observed,`
//! `reference,tick` items with an empty `reference` when there is no
//! baseline value. Strings are percent-escaped so the delimiters stay
//! unambiguous; numbers are rendered in their shortest decimal form
//! that parses back to the same value, which makes identical logs
//! produce byte-identical files.
//!
//! A runner may append one trailer record whose cause field is
//! `RunSummary`; [`KnowledgeLog::load`] skips such records (they are
//! not entries) and [`load_with_trailer`] hands the raw line back for
//! the report layer to decode.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::sync::{Arc, Mutex, RwLock};

use crate::property::{Measurement, PropertyId, SystemState, ViolationEvent, ViolationKind};
use crate::Tick;

/// Why an entry was written.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LogCause {
    /// The periodic logging point came up, events or not.
    PeriodicTick,
    /// Event-triggered logging: violations were pending.
    Violation,
}

impl fmt::Display for LogCause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LogCause::PeriodicTick => "PeriodicTick",
            LogCause::Violation => "Violation",
        })
    }
}

/// One logged record: a state snapshot, the violation events attached
/// to it, and the number of sensor reads taken during its tick.
#[derive(Debug, Clone, PartialEq)]
pub struct LogEntry {
    pub seq: u64,
    pub tick: Tick,
    pub cause: LogCause,
    pub state: SystemState,
    pub events: Vec<ViolationEvent>,
    pub measurements_taken_this_tick: u64,
}

/// Subscriber callback invoked synchronously, in sequence order, once
/// per appended entry.
pub type AnalyzerTrigger = Arc<Mutex<dyn FnMut(&LogEntry) + Send>>;

/// The append-only log. Appends and reads are linearizable; a reader
/// never observes a partially appended entry. Entries are never
/// mutated or removed.
#[derive(Default)]
pub struct KnowledgeLog {
    entries: RwLock<Vec<LogEntry>>,
    subscribers: Mutex<Vec<AnalyzerTrigger>>,
}

impl std::fmt::Debug for KnowledgeLog {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("KnowledgeLog")
            .field("entries", &self.entries.read().expect("log lock poisoned"))
            .field("subscribers", &self.subscriber_count())
            .finish()
    }
}

impl KnowledgeLog {
    pub fn new() -> Self {
        Self::default()
    }

    /// Append an entry built from its parts and return its sequence
    /// number. All subscribers are notified before this returns.
    pub fn log(
        &self,
        state: SystemState,
        events: Vec<ViolationEvent>,
        cause: LogCause,
        tick: Tick,
        measurements_taken_this_tick: u64,
    ) -> Result<u64, KnowledgeError> {
        if cause == LogCause::Violation && events.is_empty() {
            return Err(KnowledgeError::EmptyViolationEntry { tick });
        }
        let entry = {
            let mut entries = self.entries.write().expect("log lock poisoned");
            if let Some(last) = entries.last() {
                if tick < last.tick {
                    return Err(KnowledgeError::AppendRegression {
                        tick,
                        last: last.tick,
                    });
                }
            }
            let entry = LogEntry {
                seq: entries.len() as u64,
                tick,
                cause,
                state,
                events,
                measurements_taken_this_tick,
            };
            entries.push(entry.clone());
            entry
        };
        // Entries lock is released before subscribers run, so a
        // subscriber may read the log from its callback.
        let subscribers: Vec<AnalyzerTrigger> = {
            let subs = self.subscribers.lock().expect("subscriber lock poisoned");
            subs.clone()
        };
        for sub in subscribers {
            (sub.lock().expect("subscriber lock poisoned"))(&entry);
        }
        Ok(entry.seq)
    }

    /// The most recent entry, or `None` while the log is empty.
    pub fn get_data(&self) -> Option<LogEntry> {
        self.entries
            .read()
            .expect("log lock poisoned")
            .last()
            .cloned()
    }

    /// All entries whose tick falls in `from_tick..=to_tick`, in
    /// sequence order.
    pub fn history(&self, from_tick: Tick, to_tick: Tick) -> Result<Vec<LogEntry>, KnowledgeError> {
        if from_tick > to_tick {
            return Err(KnowledgeError::InvertedRange {
                from: from_tick,
                to: to_tick,
            });
        }
        Ok(self
            .entries
            .read()
            .expect("log lock poisoned")
            .iter()
            .filter(|e| (from_tick..=to_tick).contains(&e.tick))
            .cloned()
            .collect())
    }

    pub fn len(&self) -> u64 {
        self.entries.read().expect("log lock poisoned").len() as u64
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Snapshot of the whole log.
    pub fn entries(&self) -> Vec<LogEntry> {
        self.entries.read().expect("log lock poisoned").clone()
    }

    pub fn subscribe(&self, trigger: AnalyzerTrigger) {
        self.subscribers
            .lock()
            .expect("subscriber lock poisoned")
            .push(trigger);
    }

    pub fn subscriber_count(&self) -> usize {
        self.subscribers
            .lock()
            .expect("subscriber lock poisoned")
            .len()
    }

    pub fn unsubscribe(&self, trigger: &AnalyzerTrigger) -> Result<(), KnowledgeError> {
        let mut subs = self.subscribers.lock().expect("subscriber lock poisoned");
        let before = subs.len();
        subs.retain(|s| !Arc::ptr_eq(s, trigger));
        if subs.len() == before {
            return Err(KnowledgeError::NotSubscribed);
        }
        Ok(())
    }

    /// Write the log to `path` in the `.ndlog` format.
    pub fn persist(&self, path: impl AsRef<Path>) -> Result<(), KnowledgeError> {
        let path = path.as_ref();
        let mut out = String::new();
        self.render(&mut out);
        let mut file = std::fs::File::create(path).map_err(|source| KnowledgeError::Io {
            path: path.display().to_string(),
            source,
        })?;
        file.write_all(out.as_bytes())
            .map_err(|source| KnowledgeError::Io {
                path: path.display().to_string(),
                source,
            })
    }

    /// The serialized form, header plus one line per entry.
    pub fn render(&self, out: &mut String) {
        out.push_str("ndlog|1\n");
        for entry in self.entries.read().expect("log lock poisoned").iter() {
            codec::render_entry(entry, out);
            out.push('\n');
        }
    }

    /// Read a log back from `path`. Trailer records (cause
    /// `RunSummary`) are skipped.
    pub fn load(path: impl AsRef<Path>) -> Result<KnowledgeLog, KnowledgeError> {
        Ok(load_with_trailer(path)?.0)
    }
}

/// Read a log and, when the file carries a `RunSummary` trailer record,
/// the raw trailer line.
pub fn load_with_trailer(
    path: impl AsRef<Path>,
) -> Result<(KnowledgeLog, Option<String>), KnowledgeError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| KnowledgeError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let parse_err = |line: usize, message: String| KnowledgeError::Parse {
        path: path.display().to_string(),
        line,
        message,
    };

    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, "ndlog|1")) => {}
        Some((_, other)) => {
            return Err(parse_err(
                1,
                format!("expected header 'ndlog|1', found '{other}'"),
            ));
        }
        None => return Err(parse_err(1, "missing 'ndlog|1' header".into())),
    }

    let mut entries: Vec<LogEntry> = Vec::new();
    let mut trailer = None;
    for (idx, line) in lines {
        let line_no = idx + 1;
        if line.is_empty() {
            return Err(parse_err(line_no, "empty record line".into()));
        }
        match codec::parse_record(line).map_err(|m| parse_err(line_no, m))? {
            codec::Record::Entry(entry) => {
                if trailer.is_some() {
                    return Err(parse_err(line_no, "entry after RunSummary trailer".into()));
                }
                let expected_seq = entries.len() as u64;
                if entry.seq != expected_seq {
                    return Err(parse_err(
                        line_no,
                        format!(
                            "sequence gap: expected seq {expected_seq}, found {}",
                            entry.seq
                        ),
                    ));
                }
                if let Some(last) = entries.last() {
                    if entry.tick < last.tick {
                        return Err(parse_err(
                            line_no,
                            format!("tick regression: {} after {}", entry.tick, last.tick),
                        ));
                    }
                }
                if entry.cause == LogCause::Violation && entry.events.is_empty() {
                    return Err(parse_err(line_no, "Violation entry without events".into()));
                }
                entries.push(entry);
            }
            codec::Record::Summary(raw) => {
                if trailer.is_some() {
                    return Err(parse_err(line_no, "multiple RunSummary trailers".into()));
                }
                trailer = Some(raw);
            }
        }
    }
    Ok((
        KnowledgeLog {
            entries: RwLock::new(entries),
            subscribers: Mutex::new(Vec::new()),
        },
        trailer,
    ))
}

#[derive(Debug, thiserror::Error)]
pub enum KnowledgeError {
    #[error("append at tick {tick} regresses behind the last entry at tick {last}")]
    AppendRegression { tick: Tick, last: Tick },
    #[error("violation entry at tick {tick} carries no events")]
    EmptyViolationEntry { tick: Tick },
    #[error("inverted history range: from_tick {from} exceeds to_tick {to}")]
    InvertedRange { from: Tick, to: Tick },
    #[error("subscriber is not subscribed")]
    NotSubscribed,
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
}

/// Line-level encoding shared with the report trailer.
pub(crate) mod codec {
    use super::*;

    pub(crate) enum Record {
        Entry(LogEntry),
        /// Raw trailer line, cause field `RunSummary`.
        Summary(String),
    }

    /// Percent-escape the characters that act as delimiters in the
    /// format, plus line breaks.
    pub(crate) fn escape(s: &str) -> String {
        let mut out = String::with_capacity(s.len());
        for ch in s.chars() {
            match ch {
                '%' | '|' | ',' | ';' | ':' => {
                    out.push('%');
                    out.push_str(&format!("{:02X}", ch as u32));
                }
                '\n' => out.push_str("%0A"),
                '\r' => out.push_str("%0D"),
                _ => out.push(ch),
            }
        }
        out
    }

    pub(crate) fn unescape(s: &str) -> Result<String, String> {
        let mut out = String::with_capacity(s.len());
        let mut chars = s.chars();
        while let Some(ch) = chars.next() {
            if ch != '%' {
                out.push(ch);
                continue;
            }
            let hi = chars.next().ok_or("truncated escape sequence")?;
            let lo = chars.next().ok_or("truncated escape sequence")?;
            let code = u32::from_str_radix(&format!("{hi}{lo}"), 16)
                .map_err(|_| format!("bad escape sequence %{hi}{lo}"))?;
            out.push(char::from_u32(code).ok_or("bad escape code point")?);
        }
        Ok(out)
    }

    /// Shortest decimal rendering that parses back to the same value.
    pub(crate) fn fmt_f64(v: f64) -> String {
        format!("{v}")
    }

    pub(crate) fn parse_f64(s: &str) -> Result<f64, String> {
        s.parse::<f64>().map_err(|_| format!("bad number '{s}'"))
    }

    pub(crate) fn parse_u64(s: &str) -> Result<u64, String> {
        s.parse::<u64>().map_err(|_| format!("bad integer '{s}'"))
    }

    fn render_property(id: &PropertyId, out: &mut String) {
        out.push_str(&escape(id.name()));
        out.push(',');
        out.push_str(&escape(id.component()));
        out.push(',');
        out.push_str(&escape(id.operation()));
    }

    pub(crate) fn render_entry(entry: &LogEntry, out: &mut String) {
        out.push_str("entry|");
        out.push_str(&entry.seq.to_string());
        out.push('|');
        out.push_str(&entry.tick.to_string());
        out.push('|');
        out.push_str(&entry.cause.to_string());
        out.push('|');
        out.push_str(&entry.measurements_taken_this_tick.to_string());
        out.push('|');
        out.push_str(&entry.state.composed_at().to_string());
        out.push('|');
        let mut first = true;
        for (_, m) in entry.state.iter() {
            if !first {
                out.push(';');
            }
            first = false;
            render_property(&m.property, out);
            out.push(',');
            out.push_str(&fmt_f64(m.value));
            out.push(',');
            out.push_str(&m.tick.to_string());
            out.push(',');
            out.push_str(&escape(&m.sensor_id));
        }
        out.push('|');
        let mut first = true;
        for ev in &entry.events {
            if !first {
                out.push(';');
            }
            first = false;
            render_property(&ev.property, out);
            out.push(',');
            out.push_str(&ev.violation.to_string());
            out.push(',');
            out.push_str(&fmt_f64(ev.observed));
            out.push(',');
            if let Some(r) = ev.reference {
                out.push_str(&fmt_f64(r));
            }
            out.push(',');
            out.push_str(&ev.tick.to_string());
        }
    }

    fn parse_property(name: &str, component: &str, operation: &str) -> Result<PropertyId, String> {
        PropertyId::new(unescape(name)?, unescape(component)?, unescape(operation)?)
            .map_err(|e| e.to_string())
    }

    pub(crate) fn parse_violation_kind(s: &str) -> Result<ViolationKind, String> {
        match s {
            "Lower" => Ok(ViolationKind::Lower),
            "Upper" => Ok(ViolationKind::Upper),
            "RelativeChange" => Ok(ViolationKind::RelativeChange),
            other => Err(format!("unknown violation kind '{other}'")),
        }
    }

    pub(crate) fn parse_record(line: &str) -> Result<Record, String> {
        let fields: Vec<&str> = line.split('|').collect();
        if fields[0] != "entry" {
            return Err(format!("unknown record tag '{}'", fields[0]));
        }
        if fields.len() >= 4 && fields[3] == "RunSummary" {
            return Ok(Record::Summary(line.to_string()));
        }
        if fields.len() != 8 {
            return Err(format!("expected 8 fields, found {}", fields.len()));
        }
        let seq = parse_u64(fields[1])?;
        let tick = parse_u64(fields[2])?;
        let cause = match fields[3] {
            "PeriodicTick" => LogCause::PeriodicTick,
            "Violation" => LogCause::Violation,
            other => return Err(format!("unknown cause '{other}'")),
        };
        let overhead = parse_u64(fields[4])?;
        let composed_at = parse_u64(fields[5])?;

        let mut state = SystemState::empty(0);
        if !fields[6].is_empty() {
            for item in fields[6].split(';') {
                let parts: Vec<&str> = item.split(',').collect();
                if parts.len() != 6 {
                    return Err(format!("state item needs 6 parts, found {}", parts.len()));
                }
                let property = parse_property(parts[0], parts[1], parts[2])?;
                state.add(Measurement {
                    property,
                    value: parse_f64(parts[3])?,
                    tick: parse_u64(parts[4])?,
                    sensor_id: unescape(parts[5])?,
                });
            }
        }
        if state.composed_at() > composed_at {
            return Err(format!(
                "composed_at {composed_at} lags a state measurement at {}",
                state.composed_at()
            ));
        }
        let state = {
            // Rebuild at the recorded composition time; add() above only
            // advanced it to the max measurement tick.
            let mut s = SystemState::empty(composed_at);
            for (_, m) in state.iter() {
                s.add(m.clone());
            }
            s
        };

        let mut events = Vec::new();
        if !fields[7].is_empty() {
            for item in fields[7].split(';') {
                let parts: Vec<&str> = item.split(',').collect();
                if parts.len() != 7 {
                    return Err(format!("event item needs 7 parts, found {}", parts.len()));
                }
                let property = parse_property(parts[0], parts[1], parts[2])?;
                let reference = if parts[5].is_empty() {
                    None
                } else {
                    Some(parse_f64(parts[5])?)
                };
                events.push(ViolationEvent {
                    property,
                    violation: parse_violation_kind(parts[3])?,
                    observed: parse_f64(parts[4])?,
                    reference,
                    tick: parse_u64(parts[6])?,
                });
            }
        }

        Ok(Record::Entry(LogEntry {
            seq,
            tick,
            cause,
            state,
            events,
            measurements_taken_this_tick: overhead,
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::property::PropertyId;

    fn pid(name: &str) -> PropertyId {
        PropertyId::new(name, "web", "").unwrap()
    }

    fn state_with(name: &str, value: f64, tick: Tick) -> SystemState {
        let mut s = SystemState::empty(tick);
        s.add(Measurement {
            property: pid(name),
            value,
            tick,
            sensor_id: "s1".into(),
        });
        s
    }

    fn upper_event(name: &str, observed: f64, tick: Tick) -> ViolationEvent {
        ViolationEvent {
            property: pid(name),
            violation: ViolationKind::Upper,
            observed,
            reference: None,
            tick,
        }
    }

    #[test]
    fn sequence_numbers_are_dense_from_zero() {
        let log = KnowledgeLog::new();
        for i in 0..3u64 {
            let seq = log
                .log(
                    SystemState::empty(i),
                    Vec::new(),
                    LogCause::PeriodicTick,
                    i,
                    0,
                )
                .unwrap();
            assert_eq!(seq, i);
        }
        assert_eq!(log.len(), 3);
        assert_eq!(log.get_data().unwrap().seq, 2);
    }

    #[test]
    fn append_rejects_tick_regression() {
        let log = KnowledgeLog::new();
        log.log(
            SystemState::empty(5),
            Vec::new(),
            LogCause::PeriodicTick,
            5,
            0,
        )
        .unwrap();
        let err = log.log(
            SystemState::empty(4),
            Vec::new(),
            LogCause::PeriodicTick,
            4,
            0,
        );
        assert!(matches!(
            err,
            Err(KnowledgeError::AppendRegression { tick: 4, last: 5 })
        ));
    }

    #[test]
    fn violation_cause_requires_events() {
        let log = KnowledgeLog::new();
        let err = log.log(SystemState::empty(0), Vec::new(), LogCause::Violation, 0, 0);
        assert!(matches!(
            err,
            Err(KnowledgeError::EmptyViolationEntry { tick: 0 })
        ));
    }

    #[test]
    fn get_data_on_empty_log_is_absent() {
        assert!(KnowledgeLog::new().get_data().is_none());
    }

    #[test]
    fn get_data_is_stable_without_appends() {
        let log = KnowledgeLog::new();
        log.log(
            state_with("load", 30.0, 1),
            Vec::new(),
            LogCause::PeriodicTick,
            1,
            2,
        )
        .unwrap();
        assert_eq!(log.get_data(), log.get_data());
    }

    #[test]
    fn history_filters_by_tick_window() {
        let log = KnowledgeLog::new();
        for t in [0u64, 10, 20, 30] {
            log.log(
                SystemState::empty(t),
                Vec::new(),
                LogCause::PeriodicTick,
                t,
                0,
            )
            .unwrap();
        }
        assert_eq!(log.history(0, 30).unwrap().len(), 4);
        assert_eq!(log.history(11, 19).unwrap().len(), 0);
        let one = log.history(10, 10).unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!(one[0].tick, 10);
        assert!(matches!(
            log.history(20, 10),
            Err(KnowledgeError::InvertedRange { from: 20, to: 10 })
        ));
    }

    #[test]
    fn subscribers_see_every_entry_in_order() {
        let log = KnowledgeLog::new();
        let seen: Arc<Mutex<Vec<u64>>> = Arc::new(Mutex::new(Vec::new()));
        let seen_cb = Arc::clone(&seen);
        let trigger: AnalyzerTrigger = Arc::new(Mutex::new(move |e: &LogEntry| {
            seen_cb.lock().unwrap().push(e.seq)
        }));
        log.subscribe(trigger);
        for t in 0..5u64 {
            log.log(
                SystemState::empty(t),
                Vec::new(),
                LogCause::PeriodicTick,
                t,
                0,
            )
            .unwrap();
        }
        assert_eq!(*seen.lock().unwrap(), vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn unsubscribed_trigger_sees_nothing_more() {
        let log = KnowledgeLog::new();
        let count = Arc::new(Mutex::new(0u32));
        let count_cb = Arc::clone(&count);
        let trigger: AnalyzerTrigger = Arc::new(Mutex::new(move |_: &LogEntry| {
            *count_cb.lock().unwrap() += 1
        }));
        log.subscribe(Arc::clone(&trigger));
        log.log(
            SystemState::empty(0),
            Vec::new(),
            LogCause::PeriodicTick,
            0,
            0,
        )
        .unwrap();
        log.unsubscribe(&trigger).unwrap();
        log.log(
            SystemState::empty(1),
            Vec::new(),
            LogCause::PeriodicTick,
            1,
            0,
        )
        .unwrap();
        assert_eq!(*count.lock().unwrap(), 1);
        assert!(matches!(
            log.unsubscribe(&trigger),
            Err(KnowledgeError::NotSubscribed)
        ));
    }

    #[test]
    fn each_subscriber_gets_each_entry_once() {
        let log = KnowledgeLog::new();
        let counts = Arc::new(Mutex::new((0u32, 0u32)));
        let c1 = Arc::clone(&counts);
        let c2 = Arc::clone(&counts);
        log.subscribe(Arc::new(Mutex::new(move |_: &LogEntry| {
            c1.lock().unwrap().0 += 1
        })));
        log.subscribe(Arc::new(Mutex::new(move |_: &LogEntry| {
            c2.lock().unwrap().1 += 1
        })));
        for t in 0..3u64 {
            log.log(
                SystemState::empty(t),
                Vec::new(),
                LogCause::PeriodicTick,
                t,
                0,
            )
            .unwrap();
        }
        assert_eq!(*counts.lock().unwrap(), (3, 3));
    }

    #[test]
    fn subscriber_may_read_the_log_reentrantly() {
        let log = Arc::new(KnowledgeLog::new());
        let log_cb = Arc::clone(&log);
        let latest = Arc::new(Mutex::new(None));
        let latest_cb = Arc::clone(&latest);
        log.subscribe(Arc::new(Mutex::new(move |_: &LogEntry| {
            *latest_cb.lock().unwrap() = log_cb.get_data().map(|e| e.seq);
        })));
        log.log(
            SystemState::empty(0),
            Vec::new(),
            LogCause::PeriodicTick,
            0,
            0,
        )
        .unwrap();
        assert_eq!(*latest.lock().unwrap(), Some(0));
    }

    fn sample_log() -> KnowledgeLog {
        let log = KnowledgeLog::new();
        log.log(
            state_with("load", 30.5, 0),
            Vec::new(),
            LogCause::PeriodicTick,
            0,
            2,
        )
        .unwrap();
        log.log(
            state_with("load", 62.25, 7),
            vec![
                upper_event("load", 62.25, 7),
                ViolationEvent {
                    property: pid("load"),
                    violation: ViolationKind::RelativeChange,
                    observed: 62.25,
                    reference: Some(30.5),
                    tick: 7,
                },
            ],
            LogCause::Violation,
            7,
            1,
        )
        .unwrap();
        log
    }

    #[test]
    fn persist_load_round_trips_entries_and_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.ndlog");
        let log = sample_log();
        log.persist(&path).unwrap();
        let loaded = KnowledgeLog::load(&path).unwrap();
        assert_eq!(loaded.entries(), log.entries());

        let repath = dir.path().join("again.ndlog");
        loaded.persist(&repath).unwrap();
        assert_eq!(
            std::fs::read(&path).unwrap(),
            std::fs::read(&repath).unwrap()
        );
    }

    #[test]
    fn empty_log_round_trips_through_header_only_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.ndlog");
        KnowledgeLog::new().persist(&path).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "ndlog|1\n");
        let loaded = KnowledgeLog::load(&path).unwrap();
        assert!(loaded.is_empty());
    }

    #[test]
    fn truncated_file_reports_the_offending_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trunc.ndlog");
        let log = sample_log();
        let mut text = String::new();
        log.render(&mut text);
        // Drop the tail of the final record.
        let cut = text.trim_end().len() - 10;
        std::fs::write(&path, &text[..cut]).unwrap();
        match KnowledgeLog::load(&path) {
            Err(KnowledgeError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn missing_header_is_a_parse_error_on_line_one() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.ndlog");
        std::fs::write(&path, "entry|0|0|PeriodicTick|0|0||\n").unwrap();
        match KnowledgeLog::load(&path) {
            Err(KnowledgeError::Parse { line, .. }) => assert_eq!(line, 1),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn sequence_gap_rejected_on_load() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("gap.ndlog");
        std::fs::write(
            &path,
            "ndlog|1\nentry|0|0|PeriodicTick|0|0||\nentry|2|1|PeriodicTick|0|1||\n",
        )
        .unwrap();
        match KnowledgeLog::load(&path) {
            Err(KnowledgeError::Parse { line, message, .. }) => {
                assert_eq!(line, 3);
                assert!(message.contains("sequence gap"));
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn delimiter_heavy_names_survive_round_trip() {
        let log = KnowledgeLog::new();
        let mut state = SystemState::empty(0);
        let odd = PropertyId::new("a|b,c;d%e", "svc:1", "op,2").unwrap();
        state.add(Measurement {
            property: odd.clone(),
            value: -0.1,
            tick: 0,
            sensor_id: "s|;1".into(),
        });
        log.log(state, Vec::new(), LogCause::PeriodicTick, 0, 1)
            .unwrap();

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("odd.ndlog");
        log.persist(&path).unwrap();
        let loaded = KnowledgeLog::load(&path).unwrap();
        assert_eq!(loaded.entries(), log.entries());
        assert!(loaded.entries()[0].state.get(&odd).is_some());
    }

    #[test]
    fn float_rendering_round_trips_extremes() {
        for v in [
            0.1,
            1.0 / 3.0,
            f64::MAX,
            f64::MIN_POSITIVE,
            -1e-300,
            12345.6789,
        ] {
            let s = codec::fmt_f64(v);
            assert_eq!(codec::parse_f64(&s).unwrap(), v);
        }
    }

    #[test]
    fn append_only_interface_never_loses_entries_on_mode_concerns() {
        // Appends with equal ticks are allowed; the log only rejects
        // regressions.
        let log = KnowledgeLog::new();
        log.log(
            SystemState::empty(3),
            Vec::new(),
            LogCause::PeriodicTick,
            3,
            0,
        )
        .unwrap();
        log.log(
            state_with("load", 70.0, 3),
            vec![upper_event("load", 70.0, 3)],
            LogCause::Violation,
            3,
            1,
        )
        .unwrap();
        assert_eq!(log.len(), 2);
    }
}
