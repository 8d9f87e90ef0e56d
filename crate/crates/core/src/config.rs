//! Configuration document parsing and validation.
//!
//! A run is described by a sectioned plain-text document. A section
//! opens with a bracketed header naming the entity kind and, for named
//! entities, the entity itself; the body is one `key = value` pair per
//! line. `#` starts a comment line and blank lines are ignored.
//!
//! ```text
//! [scenario]
//! seed = 42
//! duration = 200
//!
//! [domain]
//! name = webshop
//!
//! [task serve]
//! services = web
//! composite = web
//!
//! [gauge web/server_load]
//! baseline = 30
//! noise_amplitude = 0
//!
//! [event spike1]
//! at = 103
//! gauge = web/server_load
//! kind = spike          # step | ramp | spike
//! to = 80
//! width = 5             # ramp uses `over` instead
//!
//! [property web/server_load]
//! kind = system         # system | environment
//! unit = percent
//! qos = self_healing
//! upper = 50
//!
//! [sensor s1]
//! property = web/server_load
//! mode = time:10        # time:<period> | event | demand
//!
//! [monitor]
//! mode = 0              # 0 = periodic (needs period), 1 = event-triggered
//! period = 10
//!
//! [output]
//! path = run.ndlog
//! ```
//!
//! Properties are addressed by path: `component/name`, or
//! `component/operation/name` for operation-scoped metrics. At most
//! one `[policy frequency|stage|load]` section may be present.
//!
//! Parsing validates everything it can see: syntax, key spelling,
//! value types, and the cross-references (sensor to property, property
//! to gauge, script to domain), so a config that parses will run.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::adaptive::{FrequencyPolicy, LoadProportionalPolicy, StagePolicy};
use crate::controller::{ControllerConfig, MonitoringMode};
use crate::property::{PropertyId, PropertyKind, PropertySpec, QosPurpose, Threshold};
use crate::sensing::{SensorDescriptor, SensorStatus, TriggerMode};
use crate::sim::{
    Composite, DomainModel, EventKind, GaugeProfile, InjectedEvent, ScenarioScript, Service,
    Simulator, Task,
};
use crate::Tick;

/// Everything a run needs, fully cross-validated.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub domain: DomainModel,
    pub script: ScenarioScript,
    pub properties: Vec<PropertySpec>,
    pub sensors: Vec<SensorDescriptor>,
    pub mode: MonitoringMode,
    pub policy: PolicyChoice,
    pub output_path: PathBuf,
}

/// The run's adaptive policy, if any.
#[derive(Debug, Clone)]
pub enum PolicyChoice {
    None,
    Frequency(FrequencyPolicy),
    Stage(StagePolicy),
    LoadProportional(LoadProportionalPolicy),
}

impl PolicyChoice {
    pub fn label(&self) -> &'static str {
        match self {
            PolicyChoice::None => "none",
            PolicyChoice::Frequency(_) => "frequency",
            PolicyChoice::Stage(_) => "stage",
            PolicyChoice::LoadProportional(_) => "load",
        }
    }
}

/// Command-line overrides applied on top of a parsed document. The
/// config is revalidated afterwards, so an override can never smuggle
/// in an inconsistency (e.g. shortening the run below an event tick).
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub ticks: Option<Tick>,
    pub mode: Option<MonitoringMode>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("line {line}: unknown section kind '{kind}'")]
    UnknownSection { line: usize, kind: String },
    #[error("line {line}: section '{name}' declared more than once")]
    DuplicateSection { line: usize, name: String },
    #[error("missing required section '{name}'")]
    MissingSection { name: String },
    #[error("line {line}: unknown key '{key}' in section '{section}'")]
    UnknownKey {
        line: usize,
        section: String,
        key: String,
    },
    #[error("section '{section}' is missing required key '{key}'")]
    MissingKey { section: String, key: String },
    #[error("line {line}: key '{key}': {message}")]
    InvalidValue {
        line: usize,
        key: String,
        message: String,
    },
    #[error("{0}")]
    Invalid(String),
}

pub fn parse_config_file(path: impl AsRef<Path>) -> Result<RunConfig, ConfigError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_config(&text)
}

pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let sections = tokenize(text)?;
    let config = assemble(sections)?;
    cross_validate(&config)?;
    Ok(config)
}

/// Apply CLI overrides, then re-run the full cross-validation.
pub fn apply_overrides(config: &mut RunConfig, overrides: &Overrides) -> Result<(), ConfigError> {
    if let Some(seed) = overrides.seed {
        config.script.seed = seed;
    }
    if let Some(ticks) = overrides.ticks {
        if ticks == 0 {
            return Err(ConfigError::Invalid(
                "override 'ticks' must be at least 1".into(),
            ));
        }
        config.script.duration = ticks;
    }
    if let Some(mode) = overrides.mode {
        config.mode = mode;
    }
    if let Some(out) = &overrides.out {
        config.output_path = out.clone();
    }
    cross_validate(config)
}

/// Parse a `periodic:<p>` / `event` mode token (the `--mode` flag).
pub fn parse_mode_token(token: &str) -> Result<MonitoringMode, ConfigError> {
    if token == "event" {
        return Ok(MonitoringMode::EventTriggered);
    }
    if let Some(period) = token.strip_prefix("periodic:") {
        let period: Tick = period.parse().map_err(|_| {
            ConfigError::Invalid(format!("mode token '{token}': period must be an integer"))
        })?;
        if period == 0 {
            return Err(ConfigError::Invalid(format!(
                "mode token '{token}': period must be at least 1"
            )));
        }
        return Ok(MonitoringMode::Periodic { log_period: period });
    }
    Err(ConfigError::Invalid(format!(
        "unknown mode token '{token}' (expected 'periodic:<p>' or 'event')"
    )))
}

// ---------------------------------------------------------------------------
// Tokenizer

struct Section {
    kind: String,
    arg: Option<String>,
    line: usize,
    entries: BTreeMap<String, (String, usize)>,
}

impl Section {
    fn label(&self) -> String {
        match &self.arg {
            Some(arg) => format!("{} {}", self.kind, arg),
            None => self.kind.clone(),
        }
    }

    fn allow(&self, keys: &[&str]) -> Result<(), ConfigError> {
        for (key, (_, line)) in &self.entries {
            if !keys.contains(&key.as_str()) {
                return Err(ConfigError::UnknownKey {
                    line: *line,
                    section: self.label(),
                    key: key.clone(),
                });
            }
        }
        Ok(())
    }

    fn get(&self, key: &str) -> Option<(&str, usize)> {
        self.entries.get(key).map(|(v, l)| (v.as_str(), *l))
    }

    fn require(&self, key: &str) -> Result<(&str, usize), ConfigError> {
        self.get(key).ok_or_else(|| ConfigError::MissingKey {
            section: self.label(),
            key: key.to_string(),
        })
    }

    fn require_u64(&self, key: &str) -> Result<u64, ConfigError> {
        let (value, line) = self.require(key)?;
        parse_u64(value, key, line)
    }

    fn require_f64(&self, key: &str) -> Result<f64, ConfigError> {
        let (value, line) = self.require(key)?;
        parse_f64(value, key, line)
    }

    fn optional_u64(&self, key: &str) -> Result<Option<u64>, ConfigError> {
        self.get(key).map(|(v, l)| parse_u64(v, key, l)).transpose()
    }

    fn optional_f64(&self, key: &str) -> Result<Option<f64>, ConfigError> {
        self.get(key).map(|(v, l)| parse_f64(v, key, l)).transpose()
    }
}

fn parse_u64(value: &str, key: &str, line: usize) -> Result<u64, ConfigError> {
    value.parse::<u64>().map_err(|_| ConfigError::InvalidValue {
        line,
        key: key.to_string(),
        message: format!("'{value}' is not a non-negative integer"),
    })
}

fn parse_f64(value: &str, key: &str, line: usize) -> Result<f64, ConfigError> {
    let parsed = value
        .parse::<f64>()
        .map_err(|_| ConfigError::InvalidValue {
            line,
            key: key.to_string(),
            message: format!("'{value}' is not a number"),
        })?;
    if !parsed.is_finite() {
        return Err(ConfigError::InvalidValue {
            line,
            key: key.to_string(),
            message: format!("'{value}' is not finite"),
        });
    }
    Ok(parsed)
}

fn parse_bool(value: &str, key: &str, line: usize) -> Result<bool, ConfigError> {
    match value {
        "true" => Ok(true),
        "false" => Ok(false),
        other => Err(ConfigError::InvalidValue {
            line,
            key: key.to_string(),
            message: format!("'{other}' is not 'true' or 'false'"),
        }),
    }
}

fn parse_list(value: &str) -> Vec<String> {
    value
        .split(',')
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .collect()
}

/// Parse a `component/name` or `component/operation/name` path.
fn parse_property_path(value: &str, key: &str, line: usize) -> Result<PropertyId, ConfigError> {
    let parts: Vec<&str> = value.split('/').collect();
    let built = match parts.as_slice() {
        [component, name] => PropertyId::new(*name, *component, ""),
        [component, operation, name] => PropertyId::new(*name, *component, *operation),
        _ => {
            return Err(ConfigError::InvalidValue {
                line,
                key: key.to_string(),
                message: format!(
                    "'{value}' is not a property path (component/name or component/operation/name)"
                ),
            })
        }
    };
    built.map_err(|e| ConfigError::InvalidValue {
        line,
        key: key.to_string(),
        message: e.to_string(),
    })
}

fn tokenize(text: &str) -> Result<Vec<Section>, ConfigError> {
    let mut sections: Vec<Section> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let column = raw.len() - raw.trim_start().len() + 1;
        if let Some(rest) = line.strip_prefix('[') {
            let inner = rest.strip_suffix(']').ok_or_else(|| ConfigError::Syntax {
                line: line_no,
                column: raw.len(),
                message: "section header is missing the closing ']'".into(),
            })?;
            let inner = inner.trim();
            if inner.is_empty() {
                return Err(ConfigError::Syntax {
                    line: line_no,
                    column,
                    message: "empty section header".into(),
                });
            }
            let (kind, arg) = match inner.split_once(char::is_whitespace) {
                Some((kind, arg)) => (kind.to_string(), Some(arg.trim().to_string())),
                None => (inner.to_string(), None),
            };
            sections.push(Section {
                kind,
                arg,
                line: line_no,
                entries: BTreeMap::new(),
            });
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
            line: line_no,
            column,
            message: "expected 'key = value' or a '[section]' header".into(),
        })?;
        let key = key.trim();
        let value = value.trim();
        if key.is_empty() {
            return Err(ConfigError::Syntax {
                line: line_no,
                column,
                message: "empty key before '='".into(),
            });
        }
        let section = sections.last_mut().ok_or_else(|| ConfigError::Syntax {
            line: line_no,
            column,
            message: format!("key '{key}' appears before any section header"),
        })?;
        if section
            .entries
            .insert(key.to_string(), (value.to_string(), line_no))
            .is_some()
        {
            return Err(ConfigError::InvalidValue {
                line: line_no,
                key: key.to_string(),
                message: format!("duplicate key in section '{}'", section.label()),
            });
        }
    }
    Ok(sections)
}

// ---------------------------------------------------------------------------
// Assembly

const SECTION_KINDS: &[&str] = &[
    "scenario", "domain", "task", "gauge", "event", "property", "sensor", "monitor", "policy",
    "output",
];

fn assemble(sections: Vec<Section>) -> Result<RunConfig, ConfigError> {
    let mut seen: BTreeMap<String, usize> = BTreeMap::new();
    for section in &sections {
        if !SECTION_KINDS.contains(&section.kind.as_str()) {
            return Err(ConfigError::UnknownSection {
                line: section.line,
                kind: section.kind.clone(),
            });
        }
        let named = matches!(
            section.kind.as_str(),
            "task" | "gauge" | "event" | "property" | "sensor"
        );
        if named && section.arg.is_none() {
            return Err(ConfigError::Syntax {
                line: section.line,
                column: 1,
                message: format!("section '{}' needs a name argument", section.kind),
            });
        }
        if !named && section.kind != "policy" && section.arg.is_some() {
            return Err(ConfigError::Syntax {
                line: section.line,
                column: 1,
                message: format!("section '{}' does not take a name argument", section.kind),
            });
        }
        // One section per distinct label; policy is one per document.
        let dedup_key = if section.kind == "policy" {
            "policy".to_string()
        } else {
            section.label()
        };
        if seen.insert(dedup_key, section.line).is_some() {
            return Err(ConfigError::DuplicateSection {
                line: section.line,
                name: section.label(),
            });
        }
    }

    let find = |kind: &str| sections.iter().find(|s| s.kind == kind);
    let require_section = |kind: &str| {
        find(kind).ok_or_else(|| ConfigError::MissingSection {
            name: kind.to_string(),
        })
    };

    let scenario = require_section("scenario")?;
    scenario.allow(&["seed", "duration"])?;
    let seed = scenario.require_u64("seed")?;
    let duration = scenario.require_u64("duration")?;
    if duration == 0 {
        let (_, line) = scenario.require("duration")?;
        return Err(ConfigError::InvalidValue {
            line,
            key: "duration".into(),
            message: "must be at least 1 tick".into(),
        });
    }

    let domain_section = require_section("domain")?;
    domain_section.allow(&["name"])?;
    let domain_name = domain_section.require("name")?.0.to_string();

    // Gauges first, so tasks can attach them to services.
    let mut gauges: Vec<(PropertyId, GaugeProfile, usize)> = Vec::new();
    for section in sections.iter().filter(|s| s.kind == "gauge") {
        section.allow(&["baseline", "noise_amplitude"])?;
        let arg = section.arg.as_deref().expect("named section checked");
        let id = parse_property_path(arg, "gauge", section.line)?;
        let baseline = section.require_f64("baseline")?;
        let noise_amplitude = section.optional_f64("noise_amplitude")?.unwrap_or(0.0);
        if noise_amplitude < 0.0 {
            let (_, line) = section.require("noise_amplitude")?;
            return Err(ConfigError::InvalidValue {
                line,
                key: "noise_amplitude".into(),
                message: "must be non-negative".into(),
            });
        }
        gauges.push((
            id,
            GaugeProfile {
                baseline,
                noise_amplitude,
            },
            section.line,
        ));
    }

    let mut tasks = Vec::new();
    for section in sections.iter().filter(|s| s.kind == "task") {
        section.allow(&["services", "composite"])?;
        let task_name = section.arg.clone().expect("named section checked");
        let (services_value, services_line) = section.require("services")?;
        let service_names = parse_list(services_value);
        if service_names.is_empty() {
            return Err(ConfigError::InvalidValue {
                line: services_line,
                key: "services".into(),
                message: "needs at least one service name".into(),
            });
        }
        let (composite_value, composite_line) = section.require("composite")?;
        let members = parse_list(composite_value);
        if members.is_empty() {
            return Err(ConfigError::InvalidValue {
                line: composite_line,
                key: "composite".into(),
                message: "needs at least one member service".into(),
            });
        }
        let services = service_names
            .into_iter()
            .map(|name| Service {
                gauges: gauges
                    .iter()
                    .filter(|(id, _, _)| id.component() == name)
                    .map(|(id, _, _)| id.clone())
                    .collect(),
                name,
            })
            .collect();
        tasks.push(Task {
            name: task_name,
            services,
            composite: Composite {
                member_services: members,
            },
        });
    }
    if tasks.is_empty() {
        return Err(ConfigError::MissingSection {
            name: "task".into(),
        });
    }
    let domain = DomainModel { domain_name, tasks };
    // Gauges whose component names no declared service would silently
    // drop out of the domain; surface them instead.
    for (id, _, line) in &gauges {
        let owned = domain
            .tasks
            .iter()
            .flat_map(|t| t.services.iter())
            .any(|s| s.name == id.component());
        if !owned {
            return Err(ConfigError::InvalidValue {
                line: *line,
                key: "gauge".into(),
                message: format!(
                    "gauge {} names component '{}', which is not a declared service",
                    id.qualified(),
                    id.component()
                ),
            });
        }
    }

    let mut events = Vec::new();
    for section in sections.iter().filter(|s| s.kind == "event") {
        section.allow(&["at", "gauge", "kind", "to", "width", "over"])?;
        let tick = section.require_u64("at")?;
        let (gauge_value, gauge_line) = section.require("gauge")?;
        let gauge = parse_property_path(gauge_value, "gauge", gauge_line)?;
        let (kind_value, kind_line) = section.require("kind")?;
        let to = section.require_f64("to")?;
        let reject = |key: &str| -> Result<(), ConfigError> {
            if let Some((_, line)) = section.get(key) {
                return Err(ConfigError::InvalidValue {
                    line,
                    key: key.to_string(),
                    message: format!("does not apply to '{kind_value}' events"),
                });
            }
            Ok(())
        };
        let kind = match kind_value {
            "step" => {
                reject("width")?;
                reject("over")?;
                EventKind::StepTo { value: to }
            }
            "spike" => {
                reject("over")?;
                EventKind::SpikeTo {
                    value: to,
                    width_ticks: section.require_u64("width")?,
                }
            }
            "ramp" => {
                reject("width")?;
                EventKind::RampTo {
                    value: to,
                    over_ticks: section.require_u64("over")?,
                }
            }
            other => {
                return Err(ConfigError::InvalidValue {
                    line: kind_line,
                    key: "kind".into(),
                    message: format!("'{other}' is not 'step', 'ramp', or 'spike'"),
                })
            }
        };
        events.push(InjectedEvent { tick, gauge, kind });
    }

    let script = ScenarioScript {
        seed,
        duration,
        profiles: gauges
            .iter()
            .map(|(id, profile, _)| (id.clone(), *profile))
            .collect(),
        events,
    };

    let mut properties = Vec::new();
    for section in sections.iter().filter(|s| s.kind == "property") {
        section.allow(&[
            "kind",
            "unit",
            "qos",
            "core",
            "lower",
            "upper",
            "relative_change_pct",
        ])?;
        let arg = section.arg.as_deref().expect("named section checked");
        let id = parse_property_path(arg, "property", section.line)?;
        let (kind_value, kind_line) = section.require("kind")?;
        let kind = match kind_value {
            "system" => PropertyKind::System,
            "environment" => PropertyKind::Environment,
            other => {
                return Err(ConfigError::InvalidValue {
                    line: kind_line,
                    key: "kind".into(),
                    message: format!("'{other}' is not 'system' or 'environment'"),
                })
            }
        };
        let unit = section.require("unit")?.0.to_string();
        let (qos_value, qos_line) = section.require("qos")?;
        let qos = match qos_value {
            "self_healing" => QosPurpose::SelfHealing,
            "self_protecting" => QosPurpose::SelfProtecting,
            "self_optimizing" => QosPurpose::SelfOptimizing,
            "self_configuring" => QosPurpose::SelfConfiguring,
            other => {
                return Err(ConfigError::InvalidValue {
                    line: qos_line,
                    key: "qos".into(),
                    message: format!(
                        "'{other}' is not one of self_healing, self_protecting, self_optimizing, self_configuring"
                    ),
                })
            }
        };
        let core = match section.get("core") {
            Some((value, line)) => parse_bool(value, "core", line)?,
            None => true,
        };
        let threshold = Threshold::new(
            section.optional_f64("lower")?,
            section.optional_f64("upper")?,
            section.optional_f64("relative_change_pct")?,
        )
        .map_err(|e| ConfigError::Invalid(format!("property {}: {e}", id.qualified())))?;
        let spec = PropertySpec::new(id.clone(), kind, unit, qos, threshold, core)
            .map_err(|e| ConfigError::Invalid(format!("property {}: {e}", id.qualified())))?;
        properties.push(spec);
    }

    let mut sensors = Vec::new();
    for section in sections.iter().filter(|s| s.kind == "sensor") {
        section.allow(&["property", "mode", "status"])?;
        let sensor_id = section.arg.clone().expect("named section checked");
        let (property_value, property_line) = section.require("property")?;
        let property = parse_property_path(property_value, "property", property_line)?;
        let (mode_value, mode_line) = section.require("mode")?;
        let mode = parse_sensor_mode(mode_value, mode_line)?;
        let status = match section.get("status") {
            Some(("active", _)) | None => SensorStatus::Active,
            Some(("inactive", _)) => SensorStatus::Inactive,
            Some((other, line)) => {
                return Err(ConfigError::InvalidValue {
                    line,
                    key: "status".into(),
                    message: format!("'{other}' is not 'active' or 'inactive'"),
                })
            }
        };
        sensors.push(SensorDescriptor {
            sensor_id,
            property,
            mode,
            status,
        });
    }

    let monitor = require_section("monitor")?;
    monitor.allow(&["mode", "period"])?;
    let mode_code = monitor.require_u64("mode")?;
    let mode = match mode_code {
        0 => {
            let period = monitor
                .require("period")
                .map_err(|_| ConfigError::MissingKey {
                    section: "monitor".into(),
                    key: "period".into(),
                })?;
            let period = parse_u64(period.0, "period", period.1)?;
            if period == 0 {
                let (_, line) = monitor.require("period")?;
                return Err(ConfigError::InvalidValue {
                    line,
                    key: "period".into(),
                    message: "must be at least 1 tick".into(),
                });
            }
            MonitoringMode::Periodic { log_period: period }
        }
        1 => {
            if let Some((_, line)) = monitor.get("period") {
                return Err(ConfigError::InvalidValue {
                    line,
                    key: "period".into(),
                    message: "only applies to periodic mode (mode = 0)".into(),
                });
            }
            MonitoringMode::EventTriggered
        }
        other => {
            let (_, line) = monitor.require("mode")?;
            return Err(ConfigError::InvalidValue {
                line,
                key: "mode".into(),
                message: format!(
                    "'{other}' is not a mode code (0 = periodic, 1 = event-triggered)"
                ),
            });
        }
    };

    let policy = match find("policy") {
        None => PolicyChoice::None,
        Some(section) => parse_policy(section, mode)?,
    };

    let output_path = match find("output") {
        None => PathBuf::from("run.ndlog"),
        Some(section) => {
            section.allow(&["path"])?;
            PathBuf::from(section.require("path")?.0)
        }
    };

    Ok(RunConfig {
        domain,
        script,
        properties,
        sensors,
        mode,
        policy,
        output_path,
    })
}

fn parse_sensor_mode(value: &str, line: usize) -> Result<TriggerMode, ConfigError> {
    if value == "event" {
        return Ok(TriggerMode::EventTriggered);
    }
    if value == "demand" {
        return Ok(TriggerMode::OnDemand);
    }
    if let Some(period) = value.strip_prefix("time:") {
        let period = parse_u64(period, "mode", line)?;
        if period == 0 {
            return Err(ConfigError::InvalidValue {
                line,
                key: "mode".into(),
                message: "time-triggered period must be at least 1".into(),
            });
        }
        return Ok(TriggerMode::TimeTriggered { period });
    }
    Err(ConfigError::InvalidValue {
        line,
        key: "mode".into(),
        message: format!("'{value}' is not 'time:<period>', 'event', or 'demand'"),
    })
}

fn parse_policy(section: &Section, mode: MonitoringMode) -> Result<PolicyChoice, ConfigError> {
    let variant = section.arg.as_deref().unwrap_or("");
    let require_periodic = |what: &str| -> Result<Tick, ConfigError> {
        match mode {
            MonitoringMode::Periodic { log_period } => Ok(log_period),
            MonitoringMode::EventTriggered => Err(ConfigError::Invalid(format!(
                "policy '{what}' requires periodic monitor mode (mode = 0)"
            ))),
        }
    };
    match variant {
        "frequency" => {
            section.allow(&[
                "p_min",
                "p_max",
                "decrease_factor",
                "increase_factor",
                "quiet_windows",
            ])?;
            let p_min = section.optional_u64("p_min")?.unwrap_or(1);
            let p_max = section.optional_u64("p_max")?.unwrap_or(32);
            let dec = section.optional_f64("decrease_factor")?.unwrap_or(0.5);
            let inc = section.optional_f64("increase_factor")?.unwrap_or(2.0);
            let k = section.optional_u64("quiet_windows")?.unwrap_or(3);
            let k = u32::try_from(k).map_err(|_| {
                ConfigError::Invalid("policy 'frequency': quiet_windows too large".into())
            })?;
            let policy = FrequencyPolicy::new(p_min, p_max, dec, inc, k)
                .map_err(|e| ConfigError::Invalid(format!("policy 'frequency': {e}")))?;
            let period = require_periodic("frequency")?;
            if period < p_min || period > p_max {
                return Err(ConfigError::Invalid(format!(
                    "policy 'frequency': monitor period {period} lies outside [{p_min}, {p_max}]"
                )));
            }
            Ok(PolicyChoice::Frequency(policy))
        }
        "stage" => {
            section.allow(&["core", "extended", "stability_windows", "window_ticks"])?;
            let (core_value, core_line) = section.require("core")?;
            let core = parse_list(core_value)
                .iter()
                .map(|p| parse_property_path(p, "core", core_line))
                .collect::<Result<_, _>>()?;
            let (ext_value, ext_line) = section.require("extended")?;
            let extended = parse_list(ext_value)
                .iter()
                .map(|p| parse_property_path(p, "extended", ext_line))
                .collect::<Result<_, _>>()?;
            let stability = section.optional_u64("stability_windows")?.unwrap_or(2);
            let stability = u32::try_from(stability).map_err(|_| {
                ConfigError::Invalid("policy 'stage': stability_windows too large".into())
            })?;
            let window = section
                .optional_u64("window_ticks")?
                .unwrap_or(StagePolicy::DEFAULT_WINDOW_TICKS);
            let policy = StagePolicy::new(core, extended, stability, window)
                .map_err(|e| ConfigError::Invalid(format!("policy 'stage': {e}")))?;
            Ok(PolicyChoice::Stage(policy))
        }
        "load" => {
            section.allow(&["load_property", "bands"])?;
            let (prop_value, prop_line) = section.require("load_property")?;
            let load_property = parse_property_path(prop_value, "load_property", prop_line)?;
            let (bands_value, bands_line) = section.require("bands")?;
            let mut bands = Vec::new();
            for item in parse_list(bands_value) {
                let (bound, period) =
                    item.split_once(':')
                        .ok_or_else(|| ConfigError::InvalidValue {
                            line: bands_line,
                            key: "bands".into(),
                            message: format!("'{item}' is not a '<load_bound>:<period>' pair"),
                        })?;
                bands.push((
                    parse_f64(bound.trim(), "bands", bands_line)?,
                    parse_u64(period.trim(), "bands", bands_line)?,
                ));
            }
            let policy = LoadProportionalPolicy::new(load_property, bands)
                .map_err(|e| ConfigError::Invalid(format!("policy 'load': {e}")))?;
            require_periodic("load")?;
            Ok(PolicyChoice::LoadProportional(policy))
        }
        other => Err(ConfigError::Invalid(format!(
            "unknown policy variant '{other}' (expected 'frequency', 'stage', or 'load')"
        ))),
    }
}

// ---------------------------------------------------------------------------
// Cross-validation

fn cross_validate(config: &RunConfig) -> Result<(), ConfigError> {
    // The simulator's own build checks the domain/script invariants
    // (dangling gauges, event ticks past duration, ...).
    Simulator::build(&config.domain, &config.script)
        .map_err(|e| ConfigError::Invalid(e.to_string()))?;

    let declared_gauges: Vec<&PropertyId> = config.domain.gauges().collect();
    for spec in &config.properties {
        if !declared_gauges.contains(&&spec.id) {
            return Err(ConfigError::Invalid(format!(
                "property {} has no matching gauge in the domain",
                spec.id.qualified()
            )));
        }
    }

    let controller_config = ControllerConfig {
        mode: config.mode,
        properties: config.properties.clone(),
        sensors: config.sensors.clone(),
    };
    controller_config
        .validate()
        .map_err(|e| ConfigError::Invalid(e.to_string()))?;

    let declared_property = |id: &PropertyId| config.properties.iter().any(|s| &s.id == id);
    match &config.policy {
        PolicyChoice::None | PolicyChoice::Frequency(_) => {}
        PolicyChoice::Stage(policy) => {
            for id in policy.extended_set() {
                if !declared_property(id) {
                    return Err(ConfigError::Invalid(format!(
                        "policy 'stage': staged property {} is not declared",
                        id.qualified()
                    )));
                }
            }
        }
        PolicyChoice::LoadProportional(policy) => {
            if !declared_property(policy.load_property()) {
                return Err(ConfigError::Invalid(format!(
                    "policy 'load': load property {} is not declared",
                    policy.load_property().qualified()
                )));
            }
        }
    }
    Ok(())
}
