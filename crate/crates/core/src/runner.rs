//! Run orchestration: the feedback loop's outer shell.
//!
//! A [`Run`] wires the pieces together in the monitoring pipeline's
//! data-flow order: simulator gauges feed instrumented sensors, the
//! controller composes measurements into state and logs per its mode,
//! and the knowledge log's subscription hook drives both the analyzer
//! stub and the adaptive policies. The loop visits tick points
//! `0..=duration`; the simulator is stepped before every tick except
//! the first, so tick 0 observes the freshly built system.
//!
//! Policy cadence:
//! * frequency and load policies react to every new log entry (each
//!   entry closes a window) and re-tune the log period and every
//!   time-triggered sensor together;
//! * the stage policy evaluates fixed windows of `window_ticks` ticks.
//!
//! After the final tick, violations still buffered under periodic mode
//! are flushed as one closing entry (delayed, never lost), the summary
//! trailer is appended, and the `.ndlog` file is written.

use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use crate::adaptive::{
    adjust_frequency, load_band_period, FrequencyPolicy, LoadProportionalPolicy, PolicyError,
    StagePolicy, WindowOutcome,
};
use crate::config::{apply_overrides, ConfigError, Overrides, PolicyChoice, RunConfig};
use crate::controller::{ControllerError, MonitorController, MonitoringMode};
use crate::knowledge::{KnowledgeError, KnowledgeLog, LogEntry};
use crate::property::PropertyId;
use crate::report::RunReport;
use crate::sensing::{instrument, SensingError, SensorStatus};
use crate::sim::{SimError, Simulator};
use crate::Tick;

enum PolicyRuntime {
    None,
    Frequency {
        policy: FrequencyPolicy,
        period: Tick,
        quiet_streak: u32,
    },
    Stage {
        policy: StagePolicy,
    },
    Load {
        policy: LoadProportionalPolicy,
        period: Tick,
    },
}

/// One configured run, steppable tick by tick.
pub struct Run {
    config: RunConfig,
    sim: Simulator,
    controller: MonitorController,
    log: Arc<KnowledgeLog>,
    policy: PolicyRuntime,
    new_entries: Arc<Mutex<Vec<LogEntry>>>,
    period_trace: Vec<(Tick, Tick)>,
    next_tick: Tick,
    realtime: Option<Duration>,
}

impl Run {
    /// Build the whole pipeline from a validated config.
    pub fn new(config: RunConfig) -> Result<Run, RunError> {
        let sim = Simulator::build(&config.domain, &config.script)?;
        let log = Arc::new(KnowledgeLog::new());
        let mut controller =
            MonitorController::new(config.mode, config.properties.clone(), Arc::clone(&log))?;
        let source = sim.gauge_source();
        for descriptor in &config.sensors {
            let hook = instrument(&descriptor.property, Arc::clone(&source))?;
            controller.deploy_sensor(descriptor.clone(), hook)?;
            if descriptor.status == SensorStatus::Inactive {
                controller.retire_sensor(&descriptor.sensor_id)?;
            }
        }

        let mut period_trace = Vec::new();
        let policy = match &config.policy {
            PolicyChoice::None => PolicyRuntime::None,
            PolicyChoice::Frequency(policy) => {
                let period = initial_period(&config)?;
                controller.retune_time_triggered(period)?;
                period_trace.push((0, period));
                PolicyRuntime::Frequency {
                    policy: *policy,
                    period,
                    quiet_streak: 0,
                }
            }
            PolicyChoice::Stage(policy) => {
                let policy = policy.clone();
                // Start in the configured stage: install retires the
                // non-core sensors.
                policy.install(&mut controller)?;
                PolicyRuntime::Stage { policy }
            }
            PolicyChoice::LoadProportional(policy) => {
                let period = initial_period(&config)?;
                controller.retune_time_triggered(period)?;
                period_trace.push((0, period));
                PolicyRuntime::Load {
                    policy: policy.clone(),
                    period,
                }
            }
        };

        let new_entries: Arc<Mutex<Vec<LogEntry>>> = Arc::new(Mutex::new(Vec::new()));
        // The analyzer stub: out-of-scope analysis is represented by
        // this subscription; the run loop drains it to drive policies.
        let buffer = Arc::clone(&new_entries);
        log.subscribe(Arc::new(Mutex::new(move |entry: &LogEntry| {
            buffer
                .lock()
                .expect("analyzer buffer poisoned")
                .push(entry.clone());
        })));

        Ok(Run {
            config,
            sim,
            controller,
            log,
            policy,
            new_entries,
            period_trace,
            next_tick: 0,
            realtime: None,
        })
    }

    /// Sleep this long after every tick (demo pacing; excluded from
    /// acceptance paths).
    pub fn set_realtime(&mut self, pause: Option<Duration>) {
        self.realtime = pause;
    }

    pub fn log(&self) -> &Arc<KnowledgeLog> {
        &self.log
    }

    pub fn controller(&self) -> &MonitorController {
        &self.controller
    }

    pub fn current_period(&self) -> Option<Tick> {
        match &self.policy {
            PolicyRuntime::Frequency { period, .. } | PolicyRuntime::Load { period, .. } => {
                Some(*period)
            }
            _ => None,
        }
    }

    pub fn current_stage(&self) -> Option<crate::adaptive::Stage> {
        match &self.policy {
            PolicyRuntime::Stage { policy } => Some(policy.current_stage()),
            _ => None,
        }
    }

    /// Execute the next tick point. Returns the tick executed, or
    /// `None` when the scenario is exhausted.
    pub fn tick_once(&mut self) -> Result<Option<Tick>, RunError> {
        if self.next_tick > self.config.script.duration {
            return Ok(None);
        }
        let now = self.next_tick;
        if now > 0 {
            self.sim.step()?;
        }
        self.controller.tick(now)?;
        self.react_to_new_entries(now)?;
        self.react_to_window_boundary(now)?;
        if let Some(pause) = self.realtime {
            std::thread::sleep(pause);
        }
        self.next_tick = now + 1;
        Ok(Some(now))
    }

    /// Frequency and load policies: every new entry closes a window.
    fn react_to_new_entries(&mut self, now: Tick) -> Result<(), RunError> {
        let entries: Vec<LogEntry> = {
            let mut buffer = self.new_entries.lock().expect("analyzer buffer poisoned");
            std::mem::take(&mut *buffer)
        };
        if entries.is_empty() {
            return Ok(());
        }
        match &mut self.policy {
            PolicyRuntime::None | PolicyRuntime::Stage { .. } => Ok(()),
            PolicyRuntime::Frequency {
                policy,
                period,
                quiet_streak,
            } => {
                let mut current = *period;
                let mut streak = *quiet_streak;
                for entry in &entries {
                    let outcome = if entry.events.is_empty() {
                        WindowOutcome::Quiet
                    } else {
                        WindowOutcome::Alarm
                    };
                    let (next, next_streak) = adjust_frequency(policy, current, outcome, streak);
                    if next != current {
                        self.period_trace.push((now, next));
                    }
                    current = next;
                    streak = next_streak;
                }
                if current != *period {
                    self.controller
                        .set_monitoring_mode(MonitoringMode::Periodic {
                            log_period: current,
                        })?;
                    self.controller.retune_time_triggered(current)?;
                }
                *period = current;
                *quiet_streak = streak;
                Ok(())
            }
            PolicyRuntime::Load { policy, period } => {
                let load_property: PropertyId = policy.load_property().clone();
                let mut current = *period;
                for entry in &entries {
                    // Without a load reading in the snapshot the period
                    // stays as it is.
                    if let Some(m) = entry.state.get(&load_property) {
                        let next = load_band_period(policy, m.value);
                        if next != current {
                            self.period_trace.push((now, next));
                        }
                        current = next;
                    }
                }
                if current != *period {
                    self.controller
                        .set_monitoring_mode(MonitoringMode::Periodic {
                            log_period: current,
                        })?;
                    self.controller.retune_time_triggered(current)?;
                }
                *period = current;
                Ok(())
            }
        }
    }

    /// Stage policy: evaluate each completed fixed-size window.
    fn react_to_window_boundary(&mut self, now: Tick) -> Result<(), RunError> {
        let PolicyRuntime::Stage { policy } = &mut self.policy else {
            return Ok(());
        };
        let window_ticks = policy.window_ticks();
        if !(now + 1).is_multiple_of(window_ticks) {
            return Ok(());
        }
        let from = now + 1 - window_ticks;
        let window = self.log.history(from, now)?;
        policy.apply(&mut self.controller, &window)?;
        Ok(())
    }

    /// Run to completion, flush, write the `.ndlog` file with its
    /// summary trailer, and return the report.
    pub fn finish(mut self) -> Result<RunReport, RunError> {
        while self.tick_once()?.is_some() {}
        let duration = self.config.script.duration;
        self.controller.flush(duration)?;

        let entries = self.log.entries();
        let report = RunReport {
            total_ticks: duration,
            entries_logged: self.log.len(),
            measurements_taken: self.controller.total_measurements(),
            violations: RunReport::first_detections(&entries),
            period_trace: self.period_trace.clone(),
        };

        let mut text = String::new();
        self.log.render(&mut text);
        text.push_str(&report.render_record());
        text.push('\n');
        let path = &self.config.output_path;
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                std::fs::create_dir_all(parent).map_err(|source| RunError::Io {
                    path: parent.display().to_string(),
                    source,
                })?;
            }
        }
        std::fs::write(path, text).map_err(|source| RunError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Ok(report)
    }
}

fn initial_period(config: &RunConfig) -> Result<Tick, RunError> {
    match config.mode {
        MonitoringMode::Periodic { log_period } => Ok(log_period),
        // Config validation rejects period policies under
        // event-triggered mode; this guards direct library use.
        MonitoringMode::EventTriggered => Err(RunError::Config(ConfigError::Invalid(
            "period policies require periodic monitor mode".into(),
        ))),
    }
}

/// Parse, run, write, report.
pub fn run(config: RunConfig) -> Result<RunReport, RunError> {
    Run::new(config)?.finish()
}

/// One column of a comparison: a mode substitute or the configured
/// policy as-is.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Variant {
    Periodic(Tick),
    Event,
    ConfiguredPolicy,
}

impl Variant {
    /// Parse a `--modes` item: `periodic:<p>`, `event`, or `policy`.
    pub fn parse(token: &str) -> Result<Variant, ConfigError> {
        if token == "policy" {
            return Ok(Variant::ConfiguredPolicy);
        }
        match crate::config::parse_mode_token(token)? {
            MonitoringMode::Periodic { log_period } => Ok(Variant::Periodic(log_period)),
            MonitoringMode::EventTriggered => Ok(Variant::Event),
        }
    }

    pub fn label(&self) -> String {
        match self {
            Variant::Periodic(p) => format!("periodic:{p}"),
            Variant::Event => "event".into(),
            Variant::ConfiguredPolicy => "policy".into(),
        }
    }

    /// Derive this variant's config from the base one. Mode variants
    /// drop the policy; `policy` keeps the config as parsed and
    /// requires one to be declared.
    pub fn apply(&self, base: &RunConfig) -> Result<RunConfig, ConfigError> {
        let mut config = base.clone();
        match self {
            Variant::Periodic(p) => {
                config.policy = PolicyChoice::None;
                apply_overrides(
                    &mut config,
                    &Overrides {
                        mode: Some(MonitoringMode::Periodic { log_period: *p }),
                        ..Overrides::default()
                    },
                )?;
            }
            Variant::Event => {
                config.policy = PolicyChoice::None;
                apply_overrides(
                    &mut config,
                    &Overrides {
                        mode: Some(MonitoringMode::EventTriggered),
                        ..Overrides::default()
                    },
                )?;
            }
            Variant::ConfiguredPolicy => {
                if matches!(config.policy, PolicyChoice::None) {
                    return Err(ConfigError::Invalid(
                        "variant 'policy' needs a [policy ...] section in the config".into(),
                    ));
                }
            }
        }
        config.output_path = variant_path(&base.output_path, &self.label());
        Ok(config)
    }
}

/// `out.ndlog` plus variant `periodic:10` becomes
/// `out.periodic-10.ndlog`.
fn variant_path(base: &Path, label: &str) -> PathBuf {
    let sanitized: String = label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '-' })
        .collect();
    let stem = base
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("compare");
    let extension = base.extension().and_then(|s| s.to_str()).unwrap_or("ndlog");
    base.with_file_name(format!("{stem}.{sanitized}.{extension}"))
}

/// Run every variant over the identical scenario and seed; returns
/// `(label, report)` rows in the given order.
pub fn compare(
    base: &RunConfig,
    variants: &[Variant],
) -> Result<Vec<(String, RunReport)>, RunError> {
    let mut rows = Vec::new();
    for variant in variants {
        let config = variant.apply(base)?;
        let report = run(config)?;
        rows.push((variant.label(), report));
    }
    Ok(rows)
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Controller(#[from] ControllerError),
    #[error(transparent)]
    Sensing(#[from] SensingError),
    #[error(transparent)]
    Knowledge(#[from] KnowledgeError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}
