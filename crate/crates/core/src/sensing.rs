//! Sensors and their binding to the managed system.
//!
//! A sensor watches exactly one property through an
//! [`InstrumentationHook`], a read-only binding obtained from whatever
//! implements [`GaugeSource`]. Sensors come in three trigger modes:
//! time-triggered sensors sample on a fixed tick period,
//! event-triggered sensors read every tick but emit only on a
//! threshold violation, and on-demand sensors read only when the
//! controller asks. Emitted measurements reach the monitor through a
//! [`MeasurementSubject`], the subject half of an observer pair.

use std::sync::{Arc, Mutex};

use crate::property::{check_threshold, Measurement, PropertyId, Threshold};
use crate::Tick;

/// When a sensor takes its readings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TriggerMode {
    /// Sample whenever `now` is a multiple of `period` (first sample at
    /// tick 0). The period must be at least 1.
    TimeTriggered { period: Tick },
    /// Read every tick, emit only when the reading violates the
    /// property's threshold.
    EventTriggered,
    /// Read only when explicitly polled by the controller.
    OnDemand,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SensorStatus {
    Active,
    Inactive,
}

/// Static description of one deployed sensor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SensorDescriptor {
    pub sensor_id: String,
    pub property: PropertyId,
    pub mode: TriggerMode,
    pub status: SensorStatus,
}

impl SensorDescriptor {
    /// Whether the schedule calls for an evaluation of this sensor at
    /// `now`. Event-triggered sensors are due every tick (they decide
    /// internally whether to emit); on-demand sensors are never due on
    /// the schedule.
    pub fn due(&self, now: Tick) -> bool {
        match self.mode {
            TriggerMode::TimeTriggered { period } => period > 0 && now.is_multiple_of(period),
            TriggerMode::EventTriggered => true,
            TriggerMode::OnDemand => false,
        }
    }
}

/// Failure to read a gauge through a hook.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GaugeReadError {
    #[error("unknown gauge {0}")]
    UnknownGauge(String),
    #[error("gauge {property} read at tick {requested} but the source is at tick {current}")]
    TickMismatch {
        property: String,
        requested: Tick,
        current: Tick,
    },
}

/// Anything that exposes readable gauges, addressed by property id.
/// Reads must be free of side effects on the source.
pub trait GaugeSource: Send + Sync {
    fn has_gauge(&self, id: &PropertyId) -> bool;
    fn read_gauge(&self, id: &PropertyId, now: Tick) -> Result<f64, GaugeReadError>;
}

/// A read-only binding of one property to its gauge source.
#[derive(Clone)]
pub struct InstrumentationHook {
    property: PropertyId,
    source: Arc<dyn GaugeSource>,
}

impl std::fmt::Debug for InstrumentationHook {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("InstrumentationHook")
            .field("property", &self.property)
            .finish_non_exhaustive()
    }
}

impl InstrumentationHook {
    /// Build a hook from a plain read function; the function receives
    /// the tick being read. Mostly useful for wiring tests without a
    /// full managed system behind the hook.
    pub fn from_fn<F>(property: PropertyId, read: F) -> Self
    where
        F: Fn(Tick) -> f64 + Send + Sync + 'static,
    {
        struct FnSource<F>(F);
        impl<F> GaugeSource for FnSource<F>
        where
            F: Fn(Tick) -> f64 + Send + Sync,
        {
            fn has_gauge(&self, _id: &PropertyId) -> bool {
                true
            }
            fn read_gauge(&self, _id: &PropertyId, now: Tick) -> Result<f64, GaugeReadError> {
                Ok((self.0)(now))
            }
        }
        Self {
            property,
            source: Arc::new(FnSource(read)),
        }
    }

    pub fn property(&self) -> &PropertyId {
        &self.property
    }

    pub fn read(&self, now: Tick) -> Result<f64, GaugeReadError> {
        self.source.read_gauge(&self.property, now)
    }
}

/// Bind `property` to a gauge source, failing when the source exposes
/// no such gauge.
pub fn instrument(
    property: &PropertyId,
    source: Arc<dyn GaugeSource>,
) -> Result<InstrumentationHook, SensingError> {
    if !source.has_gauge(property) {
        return Err(SensingError::UnknownProperty(property.qualified()));
    }
    Ok(InstrumentationHook {
        property: property.clone(),
        source,
    })
}

/// A deployed sensor: its descriptor, its hook, and (for
/// event-triggered sensors) the record of the previous reading used as
/// the relative-change baseline.
#[derive(Debug)]
pub struct Sensor {
    descriptor: SensorDescriptor,
    hook: InstrumentationHook,
    previous: Option<f64>,
}

impl Sensor {
    pub fn new(
        descriptor: SensorDescriptor,
        hook: InstrumentationHook,
    ) -> Result<Self, SensingError> {
        if let TriggerMode::TimeTriggered { period } = descriptor.mode {
            if period == 0 {
                return Err(SensingError::InvalidPeriod(descriptor.sensor_id));
            }
        }
        if hook.property() != &descriptor.property {
            return Err(SensingError::HookPropertyMismatch {
                sensor: descriptor.property.qualified(),
                hook: hook.property().qualified(),
            });
        }
        Ok(Self {
            descriptor,
            hook,
            previous: None,
        })
    }

    pub fn descriptor(&self) -> &SensorDescriptor {
        &self.descriptor
    }

    pub fn status(&self) -> SensorStatus {
        self.descriptor.status
    }

    pub fn activate(&mut self) {
        self.descriptor.status = SensorStatus::Active;
    }

    /// Deactivation also clears the previous-value record, so a later
    /// reactivation starts without a relative-change baseline.
    pub fn deactivate(&mut self) {
        self.descriptor.status = SensorStatus::Inactive;
        self.previous = None;
    }

    pub fn due(&self, now: Tick) -> bool {
        self.descriptor.due(now)
    }

    /// Change the sampling period of a time-triggered sensor. No-op
    /// for other modes.
    pub fn retune_period(&mut self, period: Tick) -> Result<(), SensingError> {
        if period == 0 {
            return Err(SensingError::InvalidPeriod(
                self.descriptor.sensor_id.clone(),
            ));
        }
        if let TriggerMode::TimeTriggered { period: p } = &mut self.descriptor.mode {
            *p = period;
        }
        Ok(())
    }

    /// Read the property now and wrap it as a measurement.
    pub fn poll(&self, now: Tick) -> Result<Measurement, SensingError> {
        if self.descriptor.status != SensorStatus::Active {
            return Err(SensingError::InactiveSensor(
                self.descriptor.sensor_id.clone(),
            ));
        }
        let value = self.hook.read(now)?;
        Ok(Measurement {
            property: self.descriptor.property.clone(),
            value,
            tick: now,
            sensor_id: self.descriptor.sensor_id.clone(),
        })
    }

    /// Event-triggered evaluation: read the current value, emit a
    /// measurement only when it violates `threshold` against the
    /// previous reading. The previous-value record advances to the
    /// current reading either way, so consecutive violating ticks each
    /// emit and the relative baseline is always the prior tick's
    /// reading.
    pub fn emit_if_violation(
        &mut self,
        threshold: &Threshold,
        now: Tick,
    ) -> Result<Option<Measurement>, SensingError> {
        if self.descriptor.status != SensorStatus::Active {
            return Err(SensingError::InactiveSensor(
                self.descriptor.sensor_id.clone(),
            ));
        }
        if self.descriptor.mode != TriggerMode::EventTriggered {
            return Err(SensingError::NotEventTriggered(
                self.descriptor.sensor_id.clone(),
            ));
        }
        let value = self.hook.read(now)?;
        let violations = check_threshold(threshold, self.previous, value);
        self.previous = Some(value);
        if violations.is_empty() {
            return Ok(None);
        }
        Ok(Some(Measurement {
            property: self.descriptor.property.clone(),
            value,
            tick: now,
            sensor_id: self.descriptor.sensor_id.clone(),
        }))
    }
}

/// Receiver half of the measurement channel; the monitor implements
/// this.
pub trait MeasurementObserver: Send {
    fn on_measurement(&mut self, measurement: &Measurement);
}

pub type SharedObserver = Arc<Mutex<dyn MeasurementObserver>>;

/// Subject half of the observer pair. Notifies every attached observer
/// exactly once per measurement, in attachment order.
#[derive(Default)]
pub struct MeasurementSubject {
    observers: Vec<SharedObserver>,
}

impl MeasurementSubject {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn attach(&mut self, observer: SharedObserver) -> Result<(), SensingError> {
        if self.observers.iter().any(|o| Arc::ptr_eq(o, &observer)) {
            return Err(SensingError::AlreadyAttached);
        }
        self.observers.push(observer);
        Ok(())
    }

    pub fn detach(&mut self, observer: &SharedObserver) -> Result<(), SensingError> {
        let before = self.observers.len();
        self.observers.retain(|o| !Arc::ptr_eq(o, observer));
        if self.observers.len() == before {
            return Err(SensingError::NotAttached);
        }
        Ok(())
    }

    pub fn notify(&self, measurement: &Measurement) {
        for observer in &self.observers {
            observer
                .lock()
                .expect("observer lock poisoned")
                .on_measurement(measurement);
        }
    }

    pub fn observer_count(&self) -> usize {
        self.observers.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SensingError {
    #[error("cannot instrument {0}: the managed system exposes no such gauge")]
    UnknownProperty(String),
    #[error("sensor {0} is inactive")]
    InactiveSensor(String),
    #[error("sensor {0} is not event-triggered")]
    NotEventTriggered(String),
    #[error("sensor watches {sensor} but the hook reads {hook}")]
    HookPropertyMismatch { sensor: String, hook: String },
    #[error("time-triggered sensor {0} requires a period of at least 1 tick")]
    InvalidPeriod(String),
    #[error("observer is already attached")]
    AlreadyAttached,
    #[error("observer is not attached")]
    NotAttached,
    #[error(transparent)]
    Read(#[from] GaugeReadError),
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pid(name: &str) -> PropertyId {
        PropertyId::new(name, "web", "").unwrap()
    }

    fn descriptor(id: &str, mode: TriggerMode) -> SensorDescriptor {
        SensorDescriptor {
            sensor_id: id.into(),
            property: pid("server_load"),
            mode,
            status: SensorStatus::Active,
        }
    }

    fn constant_hook(value: f64) -> InstrumentationHook {
        InstrumentationHook::from_fn(pid("server_load"), move |_| value)
    }

    fn trace_hook(values: Vec<f64>) -> InstrumentationHook {
        InstrumentationHook::from_fn(pid("server_load"), move |t| values[t as usize])
    }

    #[test]
    fn time_triggered_due_on_multiples() {
        let d = descriptor("s1", TriggerMode::TimeTriggered { period: 10 });
        assert!(d.due(30));
        assert!(!d.due(31));
        assert!(d.due(0));
    }

    #[test]
    fn on_demand_never_due() {
        let d = descriptor("s1", TriggerMode::OnDemand);
        for t in 0..100 {
            assert!(!d.due(t));
        }
    }

    #[test]
    fn event_triggered_evaluated_every_tick() {
        let d = descriptor("s1", TriggerMode::EventTriggered);
        for t in 0..100 {
            assert!(d.due(t));
        }
    }

    #[test]
    fn poll_passes_reading_through() {
        let s = Sensor::new(
            descriptor("s1", TriggerMode::TimeTriggered { period: 1 }),
            constant_hook(30.0),
        )
        .unwrap();
        let m = s.poll(7).unwrap();
        assert_eq!(m.property, pid("server_load"));
        assert_eq!(m.value, 30.0);
        assert_eq!(m.tick, 7);
        assert_eq!(m.sensor_id, "s1");
    }

    #[test]
    fn poll_inactive_sensor_fails() {
        let mut d = descriptor("s1", TriggerMode::TimeTriggered { period: 1 });
        d.status = SensorStatus::Inactive;
        let s = Sensor::new(d, constant_hook(30.0)).unwrap();
        assert_eq!(s.poll(0), Err(SensingError::InactiveSensor("s1".into())));
    }

    #[test]
    fn two_sensors_same_property_same_tick_agree() {
        let a = Sensor::new(
            descriptor("a", TriggerMode::TimeTriggered { period: 1 }),
            constant_hook(42.0),
        )
        .unwrap();
        let b = Sensor::new(
            descriptor("b", TriggerMode::TimeTriggered { period: 1 }),
            constant_hook(42.0),
        )
        .unwrap();
        let (ma, mb) = (a.poll(3).unwrap(), b.poll(3).unwrap());
        assert_eq!(ma.value, mb.value);
        assert_ne!(ma.sensor_id, mb.sensor_id);
    }

    #[test]
    fn hook_reads_are_pure() {
        let hook = constant_hook(12.0);
        assert_eq!(hook.read(5).unwrap(), hook.read(5).unwrap());
    }

    #[test]
    fn zero_period_rejected() {
        let err = Sensor::new(
            descriptor("s1", TriggerMode::TimeTriggered { period: 0 }),
            constant_hook(0.0),
        );
        assert_eq!(err.err(), Some(SensingError::InvalidPeriod("s1".into())));
    }

    #[test]
    fn emission_only_when_threshold_crossed() {
        // 40, 45 stay under the bound; 55 crosses it on the third tick.
        let mut s = Sensor::new(
            descriptor("s1", TriggerMode::EventTriggered),
            trace_hook(vec![0.0, 40.0, 45.0, 55.0]),
        )
        .unwrap();
        let threshold = Threshold::upper_only(50.0);
        assert_eq!(s.emit_if_violation(&threshold, 1).unwrap(), None);
        assert_eq!(s.emit_if_violation(&threshold, 2).unwrap(), None);
        let m = s.emit_if_violation(&threshold, 3).unwrap().unwrap();
        assert_eq!((m.value, m.tick), (55.0, 3));
    }

    #[test]
    fn quiet_trace_never_emits() {
        let mut s = Sensor::new(
            descriptor("s1", TriggerMode::EventTriggered),
            constant_hook(30.0),
        )
        .unwrap();
        let threshold = Threshold::upper_only(50.0);
        for t in 0..100 {
            assert_eq!(s.emit_if_violation(&threshold, t).unwrap(), None);
        }
    }

    #[test]
    fn relative_change_emits_on_second_tick() {
        // 100 * (50 - 40) / 40 = 25 > 20
        let mut s = Sensor::new(
            descriptor("s1", TriggerMode::EventTriggered),
            trace_hook(vec![40.0, 50.0]),
        )
        .unwrap();
        let threshold = Threshold::new(None, None, Some(20.0)).unwrap();
        assert_eq!(s.emit_if_violation(&threshold, 0).unwrap(), None);
        let m = s.emit_if_violation(&threshold, 1).unwrap().unwrap();
        assert_eq!(m.value, 50.0);
    }

    #[test]
    fn emit_on_inactive_sensor_fails() {
        let mut d = descriptor("s1", TriggerMode::EventTriggered);
        d.status = SensorStatus::Inactive;
        let mut s = Sensor::new(d, constant_hook(99.0)).unwrap();
        let threshold = Threshold::upper_only(50.0);
        assert_eq!(
            s.emit_if_violation(&threshold, 0),
            Err(SensingError::InactiveSensor("s1".into()))
        );
    }

    #[test]
    fn deactivate_clears_relative_baseline() {
        let mut s = Sensor::new(
            descriptor("s1", TriggerMode::EventTriggered),
            trace_hook(vec![40.0, 50.0, 50.0, 65.0]),
        )
        .unwrap();
        let threshold = Threshold::new(None, None, Some(20.0)).unwrap();
        assert_eq!(s.emit_if_violation(&threshold, 0).unwrap(), None);
        s.deactivate();
        s.activate();
        // Baseline was cleared: 50 vs nothing cannot fire, 50 vs 50 is
        // zero change, 65 vs 50 is 30% and fires.
        assert_eq!(s.emit_if_violation(&threshold, 1).unwrap(), None);
        assert_eq!(s.emit_if_violation(&threshold, 2).unwrap(), None);
        assert!(s.emit_if_violation(&threshold, 3).unwrap().is_some());
    }

    struct Recorder {
        label: &'static str,
        seen: Arc<Mutex<Vec<(&'static str, Measurement)>>>,
    }

    impl MeasurementObserver for Recorder {
        fn on_measurement(&mut self, measurement: &Measurement) {
            self.seen
                .lock()
                .unwrap()
                .push((self.label, measurement.clone()));
        }
    }

    fn recorder(
        label: &'static str,
        seen: &Arc<Mutex<Vec<(&'static str, Measurement)>>>,
    ) -> SharedObserver {
        Arc::new(Mutex::new(Recorder {
            label,
            seen: Arc::clone(seen),
        }))
    }

    fn sample_measurement() -> Measurement {
        Measurement {
            property: pid("server_load"),
            value: 1.0,
            tick: 0,
            sensor_id: "s1".into(),
        }
    }

    #[test]
    fn notify_delivers_in_attachment_order() {
        let seen = Arc::new(Mutex::new(Vec::new()));
        let mut subject = MeasurementSubject::new();
        subject.attach(recorder("a", &seen)).unwrap();
        subject.attach(recorder("b", &seen)).unwrap();
        subject.notify(&sample_measurement());
        let order: Vec<&str> = seen.lock().unwrap().iter().map(|(l, _)| *l).collect();
        assert_eq!(order, vec!["a", "b"]);
    }

    #[test]
    fn detached_observer_receives_nothing() {
        let seen = Arc::new(Mutex::new(Vec::new()));
        let mut subject = MeasurementSubject::new();
        let a = recorder("a", &seen);
        subject.attach(Arc::clone(&a)).unwrap();
        subject.detach(&a).unwrap();
        subject.notify(&sample_measurement());
        assert!(seen.lock().unwrap().is_empty());
    }

    #[test]
    fn notify_without_observers_is_noop() {
        let subject = MeasurementSubject::new();
        subject.notify(&sample_measurement());
    }

    #[test]
    fn double_attach_rejected() {
        let seen = Arc::new(Mutex::new(Vec::new()));
        let mut subject = MeasurementSubject::new();
        let a = recorder("a", &seen);
        subject.attach(Arc::clone(&a)).unwrap();
        assert_eq!(subject.attach(a), Err(SensingError::AlreadyAttached));
    }

    #[test]
    fn detach_unattached_rejected() {
        let seen = Arc::new(Mutex::new(Vec::new()));
        let mut subject = MeasurementSubject::new();
        let a = recorder("a", &seen);
        assert_eq!(subject.detach(&a), Err(SensingError::NotAttached));
    }

    proptest! {
        #[test]
        fn time_triggered_sample_count(period in 1u64..50, total in 0u64..500) {
            let s = Sensor::new(
                descriptor("s1", TriggerMode::TimeTriggered { period }),
                constant_hook(1.0),
            ).unwrap();
            let samples = (0..=total).filter(|t| s.due(*t)).count() as u64;
            prop_assert_eq!(samples, total / period + 1);
        }

        #[test]
        fn emission_set_matches_offline_replay(
            values in proptest::collection::vec(0.0f64..100.0, 1..60),
            upper in 20.0f64..80.0,
            rel in proptest::option::of(1.0f64..100.0),
        ) {
            let threshold = Threshold::new(None, Some(upper), rel).unwrap();
            let mut sensor = Sensor::new(
                descriptor("s1", TriggerMode::EventTriggered),
                trace_hook(values.clone()),
            ).unwrap();

            let mut emitted = Vec::new();
            for t in 0..values.len() as u64 {
                if sensor.emit_if_violation(&threshold, t).unwrap().is_some() {
                    emitted.push(t);
                }
            }

            // Offline replay: tick t violates iff the check against the
            // previous tick's value is non-empty.
            let expected: Vec<u64> = (0..values.len())
                .filter(|&t| {
                    let prev = if t == 0 { None } else { Some(values[t - 1]) };
                    !check_threshold(&threshold, prev, values[t]).is_empty()
                })
                .map(|t| t as u64)
                .collect();
            prop_assert_eq!(emitted, expected);
        }
    }
}
