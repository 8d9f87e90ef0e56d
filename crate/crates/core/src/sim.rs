//! Deterministic simulated managed system.
//!
//! The simulated system is described by a domain model (tasks built
//! from services, wired into a composite) whose services expose
//! real-valued gauges, and a scenario script that gives every gauge a
//! baseline, a noise amplitude, and a list of injected events. Gauge
//! values are a pure function of (domain, script, tick):
//!
//! ```text
//! value(g, t) = fold(baseline(g), events on g in script order, t) + noise(g, t)
//! ```
//!
//! where the fold applies each event active at `t` in script order
//! (later script position wins for overlapping ticks), and `noise` is
//! drawn from a per-gauge splitmix stream seeded from the script seed
//! and the gauge name, uniform in [-amplitude, +amplitude], one draw
//! per gauge per tick starting at tick 0. Two runs with the same
//! inputs therefore produce bit-identical traces.
//!
//! Discrete domain events (a product going out of stock, a node going
//! offline) are modeled as step events on 0/1-valued gauges so they
//! flow through the same measurement pipeline as continuous metrics.

use std::collections::BTreeMap;
use std::sync::{Arc, RwLock};

use crate::property::PropertyId;
use crate::rng::{fnv1a64, SplitMix64};
use crate::sensing::{GaugeReadError, GaugeSource};
use crate::Tick;

/// A unit of functionality exposed by the managed system, owning the
/// gauges it can be observed through.
#[derive(Debug, Clone)]
pub struct Service {
    pub name: String,
    pub gauges: Vec<PropertyId>,
}

/// The service composition a task runs as.
#[derive(Debug, Clone)]
pub struct Composite {
    pub member_services: Vec<String>,
}

/// A domain task realized by services and their composite.
#[derive(Debug, Clone)]
pub struct Task {
    pub name: String,
    pub services: Vec<Service>,
    pub composite: Composite,
}

/// The whole modeled domain.
#[derive(Debug, Clone)]
pub struct DomainModel {
    pub domain_name: String,
    pub tasks: Vec<Task>,
}

impl DomainModel {
    /// Every gauge declared by any service, in declaration order.
    pub fn gauges(&self) -> impl Iterator<Item = &PropertyId> {
        self.tasks
            .iter()
            .flat_map(|t| t.services.iter())
            .flat_map(|s| s.gauges.iter())
    }

    fn validate(&self) -> Result<(), SimError> {
        let mut seen = BTreeMap::new();
        for task in &self.tasks {
            if task.composite.member_services.is_empty() {
                return Err(SimError::EmptyComposite {
                    task: task.name.clone(),
                });
            }
            for member in &task.composite.member_services {
                if !task.services.iter().any(|s| &s.name == member) {
                    return Err(SimError::UnknownCompositeMember {
                        task: task.name.clone(),
                        member: member.clone(),
                    });
                }
            }
            for service in &task.services {
                for gauge in &service.gauges {
                    if gauge.component() != service.name {
                        return Err(SimError::GaugeComponentMismatch {
                            gauge: gauge.qualified(),
                            service: service.name.clone(),
                        });
                    }
                    if seen.insert(gauge.clone(), ()).is_some() {
                        return Err(SimError::DuplicateGauge(gauge.qualified()));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Baseline and noise settings for a gauge.
#[derive(Debug, Clone, Copy)]
pub struct GaugeProfile {
    pub baseline: f64,
    pub noise_amplitude: f64,
}

/// How an injected event perturbs its gauge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EventKind {
    /// Permanent level change.
    StepTo { value: f64 },
    /// Linear interpolation from the pre-event level, reaching `value`
    /// after `over_ticks` and staying there.
    RampTo { value: f64, over_ticks: Tick },
    /// Hold `value` for `width_ticks`, then revert.
    SpikeTo { value: f64, width_ticks: Tick },
}

/// One scripted perturbation.
#[derive(Debug, Clone)]
pub struct InjectedEvent {
    pub tick: Tick,
    pub gauge: PropertyId,
    pub kind: EventKind,
}

/// The scenario: seed, length, gauge profiles, and events in script
/// order (position in `events` breaks ties on overlapping ticks).
#[derive(Debug, Clone)]
pub struct ScenarioScript {
    pub seed: u64,
    pub duration: Tick,
    pub profiles: BTreeMap<PropertyId, GaugeProfile>,
    pub events: Vec<InjectedEvent>,
}

/// An event with its ramp origin resolved at build time. The origin is
/// the gauge's noise-free value at the event tick under all earlier
/// events, so evaluation at any tick never recurses.
#[derive(Debug, Clone, Copy)]
enum PreparedKind {
    Step { to: f64 },
    Ramp { to: f64, over: Tick, from: f64 },
    Spike { to: f64, width: Tick },
}

#[derive(Debug, Clone, Copy)]
struct PreparedEvent {
    tick: Tick,
    kind: PreparedKind,
}

fn fold_events(baseline: f64, events: &[PreparedEvent], t: Tick) -> f64 {
    let mut value = baseline;
    for ev in events {
        if t < ev.tick {
            continue;
        }
        let offset = t - ev.tick;
        match ev.kind {
            PreparedKind::Step { to } => value = to,
            PreparedKind::Ramp { to, over, from } => {
                value = if offset >= over {
                    to
                } else {
                    from + (to - from) * offset as f64 / over as f64
                };
            }
            PreparedKind::Spike { to, width } => {
                if offset < width {
                    value = to;
                }
            }
        }
    }
    value
}

struct SimInner {
    now: Tick,
    duration: Tick,
    profiles: BTreeMap<PropertyId, GaugeProfile>,
    events: BTreeMap<PropertyId, Vec<PreparedEvent>>,
    streams: BTreeMap<PropertyId, SplitMix64>,
    current: BTreeMap<PropertyId, f64>,
}

impl SimInner {
    fn advance_values(&mut self) {
        for (gauge, profile) in &self.profiles {
            let folded = fold_events(
                profile.baseline,
                self.events.get(gauge).map(Vec::as_slice).unwrap_or(&[]),
                self.now,
            );
            let stream = self.streams.get_mut(gauge).expect("stream per gauge");
            let noise = (stream.next_unit() * 2.0 - 1.0) * profile.noise_amplitude;
            self.current.insert(gauge.clone(), folded + noise);
        }
    }
}

/// The simulator: cheap to clone, shareable with sensors via
/// [`Simulator::gauge_source`]. Stepping and reading go through one
/// lock, so readers always see a whole tick's values.
#[derive(Clone)]
pub struct Simulator {
    inner: Arc<RwLock<SimInner>>,
}

impl Simulator {
    /// Validate the model and script, then stand the system up at tick
    /// 0 with every gauge at baseline plus its first noise draw.
    pub fn build(domain: &DomainModel, script: &ScenarioScript) -> Result<Simulator, SimError> {
        domain.validate()?;
        let declared: Vec<&PropertyId> = domain.gauges().collect();
        for gauge in script.profiles.keys() {
            if !declared.contains(&gauge) {
                return Err(SimError::UnknownScriptGauge(gauge.qualified()));
            }
        }
        for gauge in &declared {
            let profile = script
                .profiles
                .get(gauge)
                .ok_or_else(|| SimError::MissingGaugeProfile(gauge.qualified()))?;
            if !profile.baseline.is_finite() || !profile.noise_amplitude.is_finite() {
                return Err(SimError::NonFiniteScriptValue(gauge.qualified()));
            }
            if profile.noise_amplitude < 0.0 {
                return Err(SimError::NegativeNoise {
                    gauge: gauge.qualified(),
                    amplitude: profile.noise_amplitude,
                });
            }
        }
        let mut events: BTreeMap<PropertyId, Vec<PreparedEvent>> = BTreeMap::new();
        for event in &script.events {
            let profile = script
                .profiles
                .get(&event.gauge)
                .filter(|_| declared.contains(&&event.gauge))
                .ok_or_else(|| SimError::UnknownScriptGauge(event.gauge.qualified()))?;
            if event.tick >= script.duration {
                return Err(SimError::EventPastDuration {
                    gauge: event.gauge.qualified(),
                    tick: event.tick,
                    duration: script.duration,
                });
            }
            let prior = events.entry(event.gauge.clone()).or_default();
            let kind = match event.kind {
                EventKind::StepTo { value } => {
                    ensure_finite(value, &event.gauge)?;
                    PreparedKind::Step { to: value }
                }
                EventKind::SpikeTo { value, width_ticks } => {
                    ensure_finite(value, &event.gauge)?;
                    if width_ticks == 0 {
                        return Err(SimError::ZeroEventSpan {
                            gauge: event.gauge.qualified(),
                            tick: event.tick,
                        });
                    }
                    PreparedKind::Spike {
                        to: value,
                        width: width_ticks,
                    }
                }
                EventKind::RampTo { value, over_ticks } => {
                    ensure_finite(value, &event.gauge)?;
                    if over_ticks == 0 {
                        return Err(SimError::ZeroEventSpan {
                            gauge: event.gauge.qualified(),
                            tick: event.tick,
                        });
                    }
                    PreparedKind::Ramp {
                        to: value,
                        over: over_ticks,
                        from: fold_events(profile.baseline, prior, event.tick),
                    }
                }
            };
            prior.push(PreparedEvent {
                tick: event.tick,
                kind,
            });
        }
        let streams = script
            .profiles
            .keys()
            .map(|gauge| {
                let stream = SplitMix64::new(script.seed ^ fnv1a64(gauge.qualified().as_bytes()));
                (gauge.clone(), stream)
            })
            .collect();
        let mut inner = SimInner {
            now: 0,
            duration: script.duration,
            profiles: script.profiles.clone(),
            events,
            streams,
            current: BTreeMap::new(),
        };
        inner.advance_values();
        Ok(Simulator {
            inner: Arc::new(RwLock::new(inner)),
        })
    }

    pub fn now(&self) -> Tick {
        self.inner.read().expect("sim lock poisoned").now
    }

    pub fn duration(&self) -> Tick {
        self.inner.read().expect("sim lock poisoned").duration
    }

    /// Advance the clock by one tick and recompute every gauge.
    pub fn step(&self) -> Result<Tick, SimError> {
        let mut inner = self.inner.write().expect("sim lock poisoned");
        if inner.now >= inner.duration {
            return Err(SimError::EndOfScenario {
                duration: inner.duration,
            });
        }
        inner.now += 1;
        inner.advance_values();
        Ok(inner.now)
    }

    /// The gauge's value at the current tick. Pure: repeated reads
    /// within a tick are identical and never perturb the trace.
    pub fn read_gauge(&self, id: &PropertyId) -> Result<f64, SimError> {
        self.inner
            .read()
            .expect("sim lock poisoned")
            .current
            .get(id)
            .copied()
            .ok_or_else(|| SimError::UnknownGauge(id.qualified()))
    }

    /// The simulator as a sensor-facing gauge source.
    pub fn gauge_source(&self) -> Arc<dyn GaugeSource> {
        Arc::new(SimSource {
            inner: Arc::clone(&self.inner),
        })
    }

    /// Declared gauges in id order.
    pub fn gauge_ids(&self) -> Vec<PropertyId> {
        self.inner
            .read()
            .expect("sim lock poisoned")
            .profiles
            .keys()
            .cloned()
            .collect()
    }
}

fn ensure_finite(value: f64, gauge: &PropertyId) -> Result<(), SimError> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(SimError::NonFiniteScriptValue(gauge.qualified()))
    }
}

struct SimSource {
    inner: Arc<RwLock<SimInner>>,
}

impl GaugeSource for SimSource {
    fn has_gauge(&self, id: &PropertyId) -> bool {
        self.inner
            .read()
            .expect("sim lock poisoned")
            .current
            .contains_key(id)
    }

    fn read_gauge(&self, id: &PropertyId, now: Tick) -> Result<f64, GaugeReadError> {
        let inner = self.inner.read().expect("sim lock poisoned");
        if now != inner.now {
            return Err(GaugeReadError::TickMismatch {
                property: id.qualified(),
                requested: now,
                current: inner.now,
            });
        }
        inner
            .current
            .get(id)
            .copied()
            .ok_or_else(|| GaugeReadError::UnknownGauge(id.qualified()))
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("task '{task}' declares an empty composite")]
    EmptyComposite { task: String },
    #[error("task '{task}' composite references undeclared service '{member}'")]
    UnknownCompositeMember { task: String, member: String },
    #[error("gauge {gauge} is owned by service '{service}' but names a different component")]
    GaugeComponentMismatch { gauge: String, service: String },
    #[error("gauge {0} declared more than once")]
    DuplicateGauge(String),
    #[error("script references undeclared gauge {0}")]
    UnknownScriptGauge(String),
    #[error("gauge {0} has no baseline/noise profile")]
    MissingGaugeProfile(String),
    #[error("gauge {gauge} has negative noise amplitude {amplitude}")]
    NegativeNoise { gauge: String, amplitude: f64 },
    #[error("gauge {0} has a non-finite script value")]
    NonFiniteScriptValue(String),
    #[error("event on gauge {gauge} at tick {tick} lies past the scenario duration {duration}")]
    EventPastDuration {
        gauge: String,
        tick: Tick,
        duration: Tick,
    },
    #[error("event on gauge {gauge} at tick {tick} has a zero-tick span")]
    ZeroEventSpan { gauge: String, tick: Tick },
    #[error("stepping past the scenario duration {duration}")]
    EndOfScenario { duration: Tick },
    #[error("unknown gauge {0}")]
    UnknownGauge(String),
}
