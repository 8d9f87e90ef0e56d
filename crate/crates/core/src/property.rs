//! Monitored-property data model: property identities and specs,
//! thresholds, measurements, composed system state, and violation
//! events, plus the pure threshold check evaluated over them.
//!
//! Everything in this module is a plain value. Nothing here touches
//! the managed system, the clock, or the log; evaluation is total and
//! deterministic given its inputs.

use std::collections::BTreeMap;
use std::fmt;

use crate::Tick;

/// Identity of a monitorable property. A property is addressed by the
/// triple (name, component, operation); the triple must be unique
/// within one monitoring configuration. `operation` may be empty for
/// component-level gauges.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PropertyId {
    name: String,
    component: String,
    operation: String,
}

impl PropertyId {
    pub fn new(
        name: impl Into<String>,
        component: impl Into<String>,
        operation: impl Into<String>,
    ) -> Result<Self, PropertyError> {
        let name = name.into();
        if name.is_empty() {
            return Err(PropertyError::EmptyPropertyName);
        }
        Ok(Self {
            name,
            component: component.into(),
            operation: operation.into(),
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn component(&self) -> &str {
        &self.component
    }

    pub fn operation(&self) -> &str {
        &self.operation
    }

    /// Path form used in config documents and diagnostics:
    /// `component/name` when the operation is empty, otherwise
    /// `component/operation/name`.
    pub fn qualified(&self) -> String {
        if self.operation.is_empty() {
            format!("{}/{}", self.component, self.name)
        } else {
            format!("{}/{}/{}", self.component, self.operation, self.name)
        }
    }
}

impl fmt::Display for PropertyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.qualified())
    }
}

/// Whether a property describes the system itself or its operating
/// environment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PropertyKind {
    System,
    Environment,
}

/// The management concern a property serves. Carried as metadata only;
/// no behavior is attached to it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QosPurpose {
    SelfHealing,
    SelfProtecting,
    SelfOptimizing,
    SelfConfiguring,
}

/// Acceptable-range bounds for a property's value: an optional lower
/// bound, an optional upper bound, and an optional bound on relative
/// change (in percent) against the previous value. At least one field
/// must be present.
#[derive(Debug, Clone, PartialEq)]
pub struct Threshold {
    lower: Option<f64>,
    upper: Option<f64>,
    relative_change_pct: Option<f64>,
}

impl Threshold {
    pub fn new(
        lower: Option<f64>,
        upper: Option<f64>,
        relative_change_pct: Option<f64>,
    ) -> Result<Self, PropertyError> {
        if lower.is_none() && upper.is_none() && relative_change_pct.is_none() {
            return Err(PropertyError::EmptyThreshold);
        }
        if let (Some(lo), Some(hi)) = (lower, upper) {
            if lo >= hi {
                return Err(PropertyError::InvertedBounds {
                    lower: lo,
                    upper: hi,
                });
            }
        }
        if let Some(pct) = relative_change_pct {
            if pct <= 0.0 {
                return Err(PropertyError::NonPositiveRelativeChange(pct));
            }
        }
        for v in [lower, upper, relative_change_pct].into_iter().flatten() {
            if !v.is_finite() {
                return Err(PropertyError::NonFiniteBound(v));
            }
        }
        Ok(Self {
            lower,
            upper,
            relative_change_pct,
        })
    }

    pub fn upper_only(upper: f64) -> Self {
        Self::new(None, Some(upper), None).expect("single upper bound is always valid")
    }

    pub fn lower_only(lower: f64) -> Self {
        Self::new(Some(lower), None, None).expect("single lower bound is always valid")
    }

    pub fn lower(&self) -> Option<f64> {
        self.lower
    }

    pub fn upper(&self) -> Option<f64> {
        self.upper
    }

    pub fn relative_change_pct(&self) -> Option<f64> {
        self.relative_change_pct
    }
}

/// A declared monitorable property: its identity, classification,
/// threshold, and whether it belongs to the stage-one core metric set.
#[derive(Debug, Clone)]
pub struct PropertySpec {
    pub id: PropertyId,
    pub kind: PropertyKind,
    pub unit: String,
    pub qos_purpose: QosPurpose,
    pub threshold: Threshold,
    pub core_metric: bool,
}

impl PropertySpec {
    pub fn new(
        id: PropertyId,
        kind: PropertyKind,
        unit: impl Into<String>,
        qos_purpose: QosPurpose,
        threshold: Threshold,
        core_metric: bool,
    ) -> Result<Self, PropertyError> {
        let unit = unit.into();
        if unit.is_empty() {
            return Err(PropertyError::EmptyUnit(id.qualified()));
        }
        Ok(Self {
            id,
            kind,
            unit,
            qos_purpose,
            threshold,
            core_metric,
        })
    }
}

/// One timestamped sensor reading of one property.
#[derive(Debug, Clone, PartialEq)]
pub struct Measurement {
    pub property: PropertyId,
    pub value: f64,
    pub tick: Tick,
    pub sensor_id: String,
}

/// The kinds of threshold violation, in their canonical reporting
/// order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ViolationKind {
    Lower,
    Upper,
    RelativeChange,
}

impl fmt::Display for ViolationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ViolationKind::Lower => "Lower",
            ViolationKind::Upper => "Upper",
            ViolationKind::RelativeChange => "RelativeChange",
        };
        f.write_str(s)
    }
}

/// A detected threshold violation. `reference` carries the previous
/// value when the violation is a relative change; it is absent for
/// plain bound violations.
#[derive(Debug, Clone, PartialEq)]
pub struct ViolationEvent {
    pub property: PropertyId,
    pub violation: ViolationKind,
    pub observed: f64,
    pub reference: Option<f64>,
    pub tick: Tick,
}

/// The composed snapshot of all monitored property values at a logical
/// time. Entries are keyed by property; `composed_at` never lags any
/// entry's measurement tick.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SystemState {
    entries: BTreeMap<PropertyId, Measurement>,
    composed_at: Tick,
}

/// Composition failures for [`compose_state`].
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ComposeError {
    #[error("duplicate measurement for property {0}")]
    DuplicateProperty(String),
    #[error("measurement for {property} at tick {tick} is ahead of composition time {now}")]
    MeasurementAhead {
        property: String,
        tick: Tick,
        now: Tick,
    },
}

/// Build a [`SystemState`] from one measurement per property.
pub fn compose_state(
    measurements: Vec<Measurement>,
    now: Tick,
) -> Result<SystemState, ComposeError> {
    let mut entries = BTreeMap::new();
    for m in measurements {
        if m.tick > now {
            return Err(ComposeError::MeasurementAhead {
                property: m.property.qualified(),
                tick: m.tick,
                now,
            });
        }
        let key = m.property.clone();
        if entries.contains_key(&key) {
            return Err(ComposeError::DuplicateProperty(key.qualified()));
        }
        entries.insert(key, m);
    }
    Ok(SystemState {
        entries,
        composed_at: now,
    })
}

impl SystemState {
    pub fn empty(composed_at: Tick) -> Self {
        Self {
            entries: BTreeMap::new(),
            composed_at,
        }
    }

    pub fn composed_at(&self) -> Tick {
        self.composed_at
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Insert or overwrite the entry for the measurement's property.
    /// The composition time advances to the measurement tick when the
    /// measurement is newer.
    pub fn add(&mut self, measurement: Measurement) {
        if measurement.tick > self.composed_at {
            self.composed_at = measurement.tick;
        }
        self.entries
            .insert(measurement.property.clone(), measurement);
    }

    /// Remove the entry for `id`, returning it, or `None` when absent.
    pub fn remove(&mut self, id: &PropertyId) -> Option<Measurement> {
        self.entries.remove(id)
    }

    pub fn get(&self, id: &PropertyId) -> Option<&Measurement> {
        self.entries.get(id)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&PropertyId, &Measurement)> {
        self.entries.iter()
    }

    pub fn property_ids(&self) -> impl Iterator<Item = &PropertyId> {
        self.entries.keys()
    }
}

/// Errors from constructing property-model values.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PropertyError {
    #[error("property name must be non-empty")]
    EmptyPropertyName,
    #[error("property {0} has an empty unit")]
    EmptyUnit(String),
    #[error("threshold must set at least one of lower, upper, relative_change_pct")]
    EmptyThreshold,
    #[error("threshold lower bound {lower} must be below upper bound {upper}")]
    InvertedBounds { lower: f64, upper: f64 },
    #[error("relative change bound must be positive, got {0}")]
    NonPositiveRelativeChange(f64),
    #[error("threshold bound must be finite, got {0}")]
    NonFiniteBound(f64),
}

/// Evaluate `value` against a threshold, given the previous accepted
/// value of the same property when one exists.
///
/// All comparisons are strict: a value equal to a bound does not
/// violate it, and a relative change of exactly the configured percent
/// does not violate it. A relative-change check without a usable
/// baseline (no previous value, or a previous value of zero) never
/// fires. The returned kinds are always ordered Lower, Upper,
/// RelativeChange.
pub fn check_threshold(
    threshold: &Threshold,
    previous: Option<f64>,
    value: f64,
) -> Vec<ViolationKind> {
    let mut violations = Vec::new();
    if let Some(lower) = threshold.lower() {
        if value < lower {
            violations.push(ViolationKind::Lower);
        }
    }
    if let Some(upper) = threshold.upper() {
        if value > upper {
            violations.push(ViolationKind::Upper);
        }
    }
    if let Some(pct) = threshold.relative_change_pct() {
        if let Some(prev) = previous {
            if prev != 0.0 && 100.0 * (value - prev).abs() / prev.abs() > pct {
                violations.push(ViolationKind::RelativeChange);
            }
        }
    }
    violations
}
