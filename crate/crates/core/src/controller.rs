//! Monitoring controller: deploys sensors, receives their measurements
//! as the observing party, keeps the composed system state current,
//! and writes log entries according to the monitoring mode.
//!
//! Two modes exist. `Periodic(p)` is the passive style: a snapshot
//! entry is written at every tick divisible by `p`, and violations
//! detected between log points are buffered and attached to the next
//! entry rather than dropped. `EventTriggered` is the active style: an
//! entry is written exactly at the ticks where violations occur.
//!
//! Within a tick, sensors are processed in ascending sensor-id order
//! and a later measurement for the same property overwrites an earlier
//! one, so when several sensors cover one property the
//! lexicographically last sensor id wins the snapshot slot.

use std::collections::BTreeMap;
use std::sync::{Arc, Mutex};

use crate::knowledge::{KnowledgeError, KnowledgeLog, LogCause};
use crate::property::{
    check_threshold, Measurement, PropertyId, PropertySpec, SystemState, ViolationEvent,
    ViolationKind,
};
use crate::sensing::{
    InstrumentationHook, MeasurementObserver, MeasurementSubject, SensingError, Sensor,
    SensorDescriptor, SensorStatus, SharedObserver, TriggerMode,
};
use crate::Tick;

/// When entries get written.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MonitoringMode {
    /// Snapshot every `log_period` ticks regardless of events.
    Periodic { log_period: Tick },
    /// Log only at ticks with at least one violation.
    EventTriggered,
}

/// Declarative controller setup: mode, the monitored properties, and
/// the sensors that feed them.
#[derive(Debug, Clone)]
pub struct ControllerConfig {
    pub mode: MonitoringMode,
    pub properties: Vec<PropertySpec>,
    pub sensors: Vec<SensorDescriptor>,
}

impl ControllerConfig {
    /// Check the cross-references: valid mode, unique property ids,
    /// unique sensor ids, every sensor on a declared property, every
    /// property covered by at least one sensor.
    pub fn validate(&self) -> Result<(), ControllerError> {
        if let MonitoringMode::Periodic { log_period: 0 } = self.mode {
            return Err(ControllerError::InvalidLogPeriod);
        }
        let mut declared = BTreeMap::new();
        for spec in &self.properties {
            if declared.insert(spec.id.clone(), ()).is_some() {
                return Err(ControllerError::DuplicatePropertySpec(spec.id.qualified()));
            }
        }
        let mut sensor_ids = BTreeMap::new();
        for desc in &self.sensors {
            if !declared.contains_key(&desc.property) {
                return Err(ControllerError::UndeclaredProperty(
                    desc.property.qualified(),
                ));
            }
            if sensor_ids.insert(desc.sensor_id.clone(), ()).is_some() {
                return Err(ControllerError::DuplicateSensor(desc.sensor_id.clone()));
            }
        }
        for spec in &self.properties {
            if !self.sensors.iter().any(|d| d.property == spec.id) {
                return Err(ControllerError::PropertyWithoutSensor(spec.id.qualified()));
            }
        }
        Ok(())
    }
}

/// Buffer the controller registers as observer on every deployed
/// sensor's subject; drained once per tick.
#[derive(Default)]
struct Inbox {
    queue: Vec<Measurement>,
}

impl MeasurementObserver for Inbox {
    fn on_measurement(&mut self, measurement: &Measurement) {
        self.queue.push(measurement.clone());
    }
}

struct DeployedSensor {
    sensor: Sensor,
    subject: MeasurementSubject,
}

pub struct MonitorController {
    mode: MonitoringMode,
    specs: BTreeMap<PropertyId, PropertySpec>,
    sensors: BTreeMap<String, DeployedSensor>,
    current: SystemState,
    previous_values: BTreeMap<PropertyId, f64>,
    pending: Vec<ViolationEvent>,
    log: Arc<KnowledgeLog>,
    inbox: Arc<Mutex<Inbox>>,
    observer: SharedObserver,
    last_tick: Option<Tick>,
    total_measurements: u64,
    dropped_measurements: u64,
}

impl MonitorController {
    pub fn new(
        mode: MonitoringMode,
        properties: Vec<PropertySpec>,
        log: Arc<KnowledgeLog>,
    ) -> Result<Self, ControllerError> {
        if let MonitoringMode::Periodic { log_period: 0 } = mode {
            return Err(ControllerError::InvalidLogPeriod);
        }
        let mut specs = BTreeMap::new();
        for spec in properties {
            if specs.contains_key(&spec.id) {
                return Err(ControllerError::DuplicatePropertySpec(spec.id.qualified()));
            }
            specs.insert(spec.id.clone(), spec);
        }
        let inbox = Arc::new(Mutex::new(Inbox::default()));
        let observer: SharedObserver = inbox.clone();
        Ok(Self {
            mode,
            specs,
            sensors: BTreeMap::new(),
            current: SystemState::empty(0),
            previous_values: BTreeMap::new(),
            pending: Vec::new(),
            log,
            inbox,
            observer,
            last_tick: None,
            total_measurements: 0,
            dropped_measurements: 0,
        })
    }

    pub fn mode(&self) -> MonitoringMode {
        self.mode
    }

    /// Switch the logging mode; takes effect from the next tick.
    /// Already-logged entries are untouched.
    pub fn set_monitoring_mode(&mut self, mode: MonitoringMode) -> Result<(), ControllerError> {
        if let MonitoringMode::Periodic { log_period: 0 } = mode {
            return Err(ControllerError::InvalidLogPeriod);
        }
        self.mode = mode;
        Ok(())
    }

    /// Replace the composed state wholesale.
    pub fn set_system_state(&mut self, state: SystemState) -> Result<(), ControllerError> {
        for id in state.property_ids() {
            if !self.specs.contains_key(id) {
                return Err(ControllerError::UndeclaredProperty(id.qualified()));
            }
        }
        self.current = state;
        Ok(())
    }

    pub fn current_state(&self) -> &SystemState {
        &self.current
    }

    /// Register a sensor, attach the controller as its observer, and
    /// put it in service. Deployed sensors start Active regardless of
    /// the descriptor's status field.
    pub fn deploy_sensor(
        &mut self,
        descriptor: SensorDescriptor,
        hook: InstrumentationHook,
    ) -> Result<String, ControllerError> {
        if !self.specs.contains_key(&descriptor.property) {
            return Err(ControllerError::UndeclaredProperty(
                descriptor.property.qualified(),
            ));
        }
        if self.sensors.contains_key(&descriptor.sensor_id) {
            return Err(ControllerError::DuplicateSensor(descriptor.sensor_id));
        }
        let sensor_id = descriptor.sensor_id.clone();
        let mut sensor = Sensor::new(descriptor, hook)?;
        sensor.activate();
        let mut subject = MeasurementSubject::new();
        subject.attach(self.observer.clone())?;
        self.sensors
            .insert(sensor_id.clone(), DeployedSensor { sensor, subject });
        Ok(sensor_id)
    }

    /// Mark the sensor Inactive and stop observing it. Its baseline
    /// for relative-change checks is cleared.
    pub fn retire_sensor(&mut self, sensor_id: &str) -> Result<(), ControllerError> {
        let deployed = self
            .sensors
            .get_mut(sensor_id)
            .ok_or_else(|| ControllerError::UnknownSensor(sensor_id.to_string()))?;
        if deployed.sensor.status() == SensorStatus::Active {
            deployed.sensor.deactivate();
            deployed.subject.detach(&self.observer)?;
        }
        Ok(())
    }

    /// Put a retired sensor back in service; measurements flow again
    /// from the next tick.
    pub fn activate_sensor(&mut self, sensor_id: &str) -> Result<(), ControllerError> {
        let deployed = self
            .sensors
            .get_mut(sensor_id)
            .ok_or_else(|| ControllerError::UnknownSensor(sensor_id.to_string()))?;
        if deployed.sensor.status() == SensorStatus::Inactive {
            deployed.sensor.activate();
            deployed.subject.attach(self.observer.clone())?;
        }
        Ok(())
    }

    pub fn sensor_status(&self, sensor_id: &str) -> Result<SensorStatus, ControllerError> {
        self.sensors
            .get(sensor_id)
            .map(|d| d.sensor.status())
            .ok_or_else(|| ControllerError::UnknownSensor(sensor_id.to_string()))
    }

    /// Sensor ids in deployment registry order.
    pub fn sensor_ids(&self) -> Vec<String> {
        self.sensors.keys().cloned().collect()
    }

    /// Ids of the sensors covering one property, registry order.
    pub fn sensors_for(&self, property: &PropertyId) -> Vec<String> {
        self.sensors
            .iter()
            .filter(|(_, d)| &d.sensor.descriptor().property == property)
            .map(|(id, _)| id.clone())
            .collect()
    }

    /// Properties currently covered by at least one Active sensor.
    pub fn active_properties(&self) -> Vec<PropertyId> {
        let mut out: Vec<PropertyId> = self
            .sensors
            .values()
            .filter(|d| d.sensor.status() == SensorStatus::Active)
            .map(|d| d.sensor.descriptor().property.clone())
            .collect();
        out.sort();
        out.dedup();
        out
    }

    /// Re-period every time-triggered sensor; the frequency policy
    /// drives sampling and logging cadence together.
    pub fn retune_time_triggered(&mut self, period: Tick) -> Result<(), ControllerError> {
        for deployed in self.sensors.values_mut() {
            deployed.sensor.retune_period(period)?;
        }
        Ok(())
    }

    /// Observer callback: fold one measurement into the composed state,
    /// evaluate its property's threshold against the previous value,
    /// and buffer any violations. Measurements for undeclared
    /// properties are dropped (counted, never fatal).
    pub fn on_measurement(&mut self, measurement: Measurement) {
        let spec = match self.specs.get(&measurement.property) {
            Some(spec) => spec,
            None => {
                self.dropped_measurements += 1;
                return;
            }
        };
        let previous = self.previous_values.get(&measurement.property).copied();
        for kind in check_threshold(&spec.threshold, previous, measurement.value) {
            self.pending.push(ViolationEvent {
                property: measurement.property.clone(),
                violation: kind,
                observed: measurement.value,
                reference: if kind == ViolationKind::RelativeChange {
                    previous
                } else {
                    None
                },
                tick: measurement.tick,
            });
        }
        self.previous_values
            .insert(measurement.property.clone(), measurement.value);
        self.current.add(measurement);
    }

    /// One scheduler step: poll due time-triggered sensors, evaluate
    /// event-triggered sensors, deliver all resulting measurements,
    /// then log according to the mode. Returns the number of sensor
    /// reads taken this tick.
    pub fn tick(&mut self, now: Tick) -> Result<u64, ControllerError> {
        if let Some(last) = self.last_tick {
            if now <= last {
                return Err(ControllerError::NonMonotonicTick { now, last });
            }
        }
        self.last_tick = Some(now);

        let mut reads = 0u64;
        for deployed in self.sensors.values_mut() {
            if deployed.sensor.status() != SensorStatus::Active || !deployed.sensor.due(now) {
                continue;
            }
            match deployed.sensor.descriptor().mode {
                TriggerMode::TimeTriggered { .. } => {
                    let measurement = deployed.sensor.poll(now)?;
                    reads += 1;
                    deployed.subject.notify(&measurement);
                }
                TriggerMode::EventTriggered => {
                    let property = deployed.sensor.descriptor().property.clone();
                    let spec = self
                        .specs
                        .get(&property)
                        .ok_or_else(|| ControllerError::UndeclaredProperty(property.qualified()))?;
                    let threshold = spec.threshold.clone();
                    let emitted = deployed.sensor.emit_if_violation(&threshold, now)?;
                    reads += 1;
                    if let Some(measurement) = emitted {
                        deployed.subject.notify(&measurement);
                    }
                }
                TriggerMode::OnDemand => {}
            }
        }
        self.total_measurements += reads;

        let delivered: Vec<Measurement> = {
            let mut inbox = self.inbox.lock().expect("inbox lock poisoned");
            std::mem::take(&mut inbox.queue)
        };
        for measurement in delivered {
            self.on_measurement(measurement);
        }

        match self.mode {
            MonitoringMode::Periodic { log_period } => {
                if now.is_multiple_of(log_period) {
                    let events = std::mem::take(&mut self.pending);
                    self.log.log(
                        self.current.clone(),
                        events,
                        LogCause::PeriodicTick,
                        now,
                        reads,
                    )?;
                }
            }
            MonitoringMode::EventTriggered => {
                if !self.pending.is_empty() {
                    let events = std::mem::take(&mut self.pending);
                    self.log.log(
                        self.current.clone(),
                        events,
                        LogCause::Violation,
                        now,
                        reads,
                    )?;
                }
            }
        }
        Ok(reads)
    }

    /// Poll a sensor outside the scheduled cadence (the on-demand
    /// path). `now` must be the current tick; the measurement is
    /// delivered through the normal observer route.
    pub fn poll_on_demand(
        &mut self,
        sensor_id: &str,
        now: Tick,
    ) -> Result<Measurement, ControllerError> {
        let deployed = self
            .sensors
            .get_mut(sensor_id)
            .ok_or_else(|| ControllerError::UnknownSensor(sensor_id.to_string()))?;
        let measurement = deployed.sensor.poll(now)?;
        self.total_measurements += 1;
        deployed.subject.notify(&measurement);
        let delivered: Vec<Measurement> = {
            let mut inbox = self.inbox.lock().expect("inbox lock poisoned");
            std::mem::take(&mut inbox.queue)
        };
        for m in delivered {
            self.on_measurement(m);
        }
        Ok(measurement)
    }

    /// Write out any violations still buffered under Periodic mode as
    /// a closing snapshot. No-op when nothing is pending; the run
    /// orchestrator calls this after the final tick so buffered events
    /// are delayed, never lost.
    pub fn flush(&mut self, now: Tick) -> Result<(), ControllerError> {
        if self.pending.is_empty() {
            return Ok(());
        }
        let events = std::mem::take(&mut self.pending);
        self.log
            .log(self.current.clone(), events, LogCause::PeriodicTick, now, 0)?;
        Ok(())
    }

    /// Total sensor reads taken across all ticks (the overhead proxy).
    pub fn total_measurements(&self) -> u64 {
        self.total_measurements
    }

    /// Measurements dropped for naming undeclared properties.
    pub fn dropped_measurements(&self) -> u64 {
        self.dropped_measurements
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ControllerError {
    #[error("periodic log period must be at least 1")]
    InvalidLogPeriod,
    #[error("property {0} is not declared to the controller")]
    UndeclaredProperty(String),
    #[error("property {0} declared more than once")]
    DuplicatePropertySpec(String),
    #[error("sensor id '{0}' already deployed")]
    DuplicateSensor(String),
    #[error("unknown sensor id '{0}'")]
    UnknownSensor(String),
    #[error("property {0} has no sensor")]
    PropertyWithoutSensor(String),
    #[error("tick {now} is not after the previous tick {last}")]
    NonMonotonicTick { now: Tick, last: Tick },
    #[error(transparent)]
    Sensing(#[from] SensingError),
    #[error(transparent)]
    Knowledge(#[from] KnowledgeError),
}
