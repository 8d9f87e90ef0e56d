//! Adaptive monitoring policies: runtime adjustment of how often and
//! how much is measured, trading overhead against detection assurance.
//!
//! Three mutually exclusive policies are provided:
//!
//! * [`FrequencyPolicy`]: multiplicative decrease of the sampling
//!   period when a window raised an alarm (sample faster), and
//!   multiplicative increase after enough consecutive quiet windows
//!   (back off), always clamped to `[p_min, p_max]`.
//! * [`StagePolicy`]: watch a core metric set until something violates,
//!   then extend to the full set; contract back after a configured
//!   number of clean windows.
//! * [`LoadProportionalPolicy`]: pick the logging period from a band
//!   table keyed by the current load reading.
//!
//! The policies are pure state machines; the run loop owns the mutable
//! period/streak and feeds window outcomes in.

use std::collections::BTreeSet;

use crate::controller::{ControllerError, MonitorController};
use crate::knowledge::LogEntry;
use crate::property::PropertyId;
use crate::Tick;

/// What a finished window reported.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WindowOutcome {
    /// At least one violation event was logged in the window.
    Alarm,
    /// No violation events in the window.
    Quiet,
}

/// Parameters for frequency modulation.
#[derive(Debug, Clone, Copy)]
pub struct FrequencyPolicy {
    p_min: Tick,
    p_max: Tick,
    decrease_factor: f64,
    increase_factor: f64,
    quiet_windows_required: u32,
}

impl FrequencyPolicy {
    pub fn new(
        p_min: Tick,
        p_max: Tick,
        decrease_factor: f64,
        increase_factor: f64,
        quiet_windows_required: u32,
    ) -> Result<Self, PolicyError> {
        if p_min == 0 {
            return Err(PolicyError::ZeroMinPeriod);
        }
        if p_min > p_max {
            return Err(PolicyError::InvalidPeriodRange { p_min, p_max });
        }
        if !(decrease_factor > 0.0 && decrease_factor <= 1.0) {
            return Err(PolicyError::DecreaseFactorOutOfRange(decrease_factor));
        }
        if !(increase_factor >= 1.0 && increase_factor.is_finite()) {
            return Err(PolicyError::IncreaseFactorOutOfRange(increase_factor));
        }
        if quiet_windows_required == 0 {
            return Err(PolicyError::ZeroQuietWindows);
        }
        Ok(Self {
            p_min,
            p_max,
            decrease_factor,
            increase_factor,
            quiet_windows_required,
        })
    }

    pub fn p_min(&self) -> Tick {
        self.p_min
    }

    pub fn p_max(&self) -> Tick {
        self.p_max
    }

    /// Clamp a starting period into the policy's range.
    pub fn clamp(&self, period: Tick) -> Tick {
        period.clamp(self.p_min, self.p_max)
    }
}

/// One frequency update. An alarm window shrinks the period to
/// `max(p_min, floor(period * decrease_factor))` and resets the quiet
/// streak. A quiet window grows the streak; once it reaches
/// `quiet_windows_required` the period grows to
/// `min(p_max, floor(period * increase_factor))` and the streak
/// resets. Returns the new `(period, quiet_streak)`.
pub fn adjust_frequency(
    policy: &FrequencyPolicy,
    period: Tick,
    outcome: WindowOutcome,
    quiet_streak: u32,
) -> (Tick, u32) {
    match outcome {
        WindowOutcome::Alarm => {
            let shrunk = (period as f64 * policy.decrease_factor).floor() as Tick;
            (shrunk.max(policy.p_min), 0)
        }
        WindowOutcome::Quiet => {
            let streak = quiet_streak + 1;
            if streak >= policy.quiet_windows_required {
                let grown = (period as f64 * policy.increase_factor).floor() as Tick;
                (grown.min(policy.p_max).max(policy.p_min), 0)
            } else {
                (period, streak)
            }
        }
    }
}

/// Which metric set is in force.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    CoreOnly,
    Extended,
}

/// Two-stage metric-set policy. Stage one watches `core_set`; a
/// violation window escalates to `extended_set`; `stability_windows`
/// consecutive clean windows de-escalate. Windows are fixed spans of
/// `window_ticks` ticks.
#[derive(Debug, Clone)]
pub struct StagePolicy {
    core_set: BTreeSet<PropertyId>,
    extended_set: BTreeSet<PropertyId>,
    stability_windows: u32,
    window_ticks: Tick,
    current_stage: Stage,
    clean_streak: u32,
}

impl StagePolicy {
    pub const DEFAULT_WINDOW_TICKS: Tick = 20;

    pub fn new(
        core_set: BTreeSet<PropertyId>,
        extended_set: BTreeSet<PropertyId>,
        stability_windows: u32,
        window_ticks: Tick,
    ) -> Result<Self, PolicyError> {
        for id in &core_set {
            if !extended_set.contains(id) {
                return Err(PolicyError::CoreNotSubset(id.qualified()));
            }
        }
        if stability_windows == 0 {
            return Err(PolicyError::ZeroStabilityWindows);
        }
        if window_ticks == 0 {
            return Err(PolicyError::ZeroWindowTicks);
        }
        Ok(Self {
            core_set,
            extended_set,
            stability_windows,
            window_ticks,
            current_stage: Stage::CoreOnly,
            clean_streak: 0,
        })
    }

    pub fn current_stage(&self) -> Stage {
        self.current_stage
    }

    pub fn window_ticks(&self) -> Tick {
        self.window_ticks
    }

    pub fn core_set(&self) -> &BTreeSet<PropertyId> {
        &self.core_set
    }

    pub fn extended_set(&self) -> &BTreeSet<PropertyId> {
        &self.extended_set
    }

    /// The property set the current stage prescribes as Active.
    pub fn prescribed_set(&self) -> &BTreeSet<PropertyId> {
        match self.current_stage {
            Stage::CoreOnly => &self.core_set,
            Stage::Extended => &self.extended_set,
        }
    }

    /// Validate the policy against the deployed sensors and put the
    /// controller into the starting stage (core only). Every extended
    /// property must have a sensor, and every sensor-covered property
    /// must be staged, so the Active set always equals the
    /// prescription.
    pub fn install(&self, controller: &mut MonitorController) -> Result<(), PolicyError> {
        for id in &self.extended_set {
            if controller.sensors_for(id).is_empty() {
                return Err(PolicyError::MissingStageSensor(id.qualified()));
            }
        }
        for sensor_id in controller.sensor_ids() {
            let covered = self
                .extended_set
                .iter()
                .any(|p| controller.sensors_for(p).contains(&sensor_id));
            if !covered {
                return Err(PolicyError::UnstagedSensor(sensor_id));
            }
        }
        self.enforce(controller)
    }

    /// Consume one finished window of log entries and transition if
    /// warranted. Sensor activation changes land before the next tick.
    pub fn apply(
        &mut self,
        controller: &mut MonitorController,
        window: &[LogEntry],
    ) -> Result<(), PolicyError> {
        let alarmed = window.iter().any(|e| !e.events.is_empty());
        match self.current_stage {
            Stage::CoreOnly => {
                if alarmed {
                    self.current_stage = Stage::Extended;
                    self.clean_streak = 0;
                    self.enforce(controller)?;
                }
            }
            Stage::Extended => {
                if alarmed {
                    self.clean_streak = 0;
                } else {
                    self.clean_streak += 1;
                    if self.clean_streak >= self.stability_windows {
                        self.current_stage = Stage::CoreOnly;
                        self.clean_streak = 0;
                        self.enforce(controller)?;
                    }
                }
            }
        }
        Ok(())
    }

    /// Activate exactly the prescribed set's sensors.
    fn enforce(&self, controller: &mut MonitorController) -> Result<(), PolicyError> {
        let prescribed = self.prescribed_set();
        for id in &self.extended_set {
            for sensor_id in controller.sensors_for(id) {
                if prescribed.contains(id) {
                    controller.activate_sensor(&sensor_id)?;
                } else {
                    controller.retire_sensor(&sensor_id)?;
                }
            }
        }
        Ok(())
    }
}

/// Band table keyed by a load property: heavier load, sparser logging.
#[derive(Debug, Clone)]
pub struct LoadProportionalPolicy {
    load_property: PropertyId,
    bands: Vec<(f64, Tick)>,
}

impl LoadProportionalPolicy {
    /// `bands` pairs are `(load_upper_bound, period)`, bounds strictly
    /// ascending, periods positive.
    pub fn new(load_property: PropertyId, bands: Vec<(f64, Tick)>) -> Result<Self, PolicyError> {
        if bands.is_empty() {
            return Err(PolicyError::EmptyBands);
        }
        for (position, (bound, period)) in bands.iter().enumerate() {
            if !bound.is_finite() {
                return Err(PolicyError::NonFiniteBound(*bound));
            }
            if *period == 0 {
                return Err(PolicyError::ZeroBandPeriod { bound: *bound });
            }
            if position > 0 && bands[position - 1].0 >= *bound {
                return Err(PolicyError::UnsortedBands { position });
            }
        }
        Ok(Self {
            load_property,
            bands,
        })
    }

    pub fn load_property(&self) -> &PropertyId {
        &self.load_property
    }

    pub fn bands(&self) -> &[(f64, Tick)] {
        &self.bands
    }
}

/// The period of the first band whose bound covers `current_load`;
/// loads beyond the last bound use the last band.
pub fn load_band_period(policy: &LoadProportionalPolicy, current_load: f64) -> Tick {
    for (bound, period) in &policy.bands {
        if *bound >= current_load {
            return *period;
        }
    }
    policy.bands.last().expect("bands validated non-empty").1
}

#[derive(Debug, thiserror::Error)]
pub enum PolicyError {
    #[error("minimum period must be at least 1")]
    ZeroMinPeriod,
    #[error("period range inverted: p_min {p_min} exceeds p_max {p_max}")]
    InvalidPeriodRange { p_min: Tick, p_max: Tick },
    #[error("decrease factor {0} outside (0, 1]")]
    DecreaseFactorOutOfRange(f64),
    #[error("increase factor {0} outside [1, inf)")]
    IncreaseFactorOutOfRange(f64),
    #[error("quiet-window requirement must be at least 1")]
    ZeroQuietWindows,
    #[error("core property {0} is missing from the extended set")]
    CoreNotSubset(String),
    #[error("stability-window requirement must be at least 1")]
    ZeroStabilityWindows,
    #[error("stage window length must be at least 1 tick")]
    ZeroWindowTicks,
    #[error("extended-set property {0} has no deployed sensor")]
    MissingStageSensor(String),
    #[error("sensor '{0}' covers a property outside the staged set")]
    UnstagedSensor(String),
    #[error("load band table is empty")]
    EmptyBands,
    #[error("load band at position {position} breaks ascending bound order")]
    UnsortedBands { position: usize },
    #[error("load band with bound {bound} has a zero period")]
    ZeroBandPeriod { bound: f64 },
    #[error("load band bound {0} is not finite")]
    NonFiniteBound(f64),
    #[error(transparent)]
    Controller(#[from] ControllerError),
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::controller::{MonitorController, MonitoringMode};
    use crate::knowledge::{KnowledgeLog, LogCause};
    use crate::property::{
        PropertyKind, PropertySpec, QosPurpose, SystemState, Threshold, ViolationEvent,
        ViolationKind,
    };
    use crate::sensing::{InstrumentationHook, SensorDescriptor, SensorStatus, TriggerMode};
    use std::sync::Arc;

    fn default_policy() -> FrequencyPolicy {
        FrequencyPolicy::new(1, 32, 0.5, 2.0, 3).unwrap()
    }

    #[test]
    fn alarm_halves_the_period() {
        assert_eq!(
            adjust_frequency(&default_policy(), 8, WindowOutcome::Alarm, 0),
            (4, 0)
        );
    }

    #[test]
    fn third_quiet_window_doubles_the_period() {
        assert_eq!(
            adjust_frequency(&default_policy(), 8, WindowOutcome::Quiet, 2),
            (16, 0)
        );
    }

    #[test]
    fn early_quiet_windows_only_grow_the_streak() {
        assert_eq!(
            adjust_frequency(&default_policy(), 8, WindowOutcome::Quiet, 0),
            (8, 1)
        );
        assert_eq!(
            adjust_frequency(&default_policy(), 8, WindowOutcome::Quiet, 1),
            (8, 2)
        );
    }

    #[test]
    fn period_clamps_at_both_ends() {
        assert_eq!(
            adjust_frequency(&default_policy(), 1, WindowOutcome::Alarm, 0),
            (1, 0)
        );
        assert_eq!(
            adjust_frequency(&default_policy(), 32, WindowOutcome::Quiet, 2),
            (32, 0)
        );
    }

    #[test]
    fn alarm_resets_an_accumulated_streak() {
        assert_eq!(
            adjust_frequency(&default_policy(), 16, WindowOutcome::Alarm, 2),
            (8, 0)
        );
    }

    #[test]
    fn frequency_policy_parameters_are_validated() {
        assert!(matches!(
            FrequencyPolicy::new(0, 32, 0.5, 2.0, 3),
            Err(PolicyError::ZeroMinPeriod)
        ));
        assert!(matches!(
            FrequencyPolicy::new(8, 4, 0.5, 2.0, 3),
            Err(PolicyError::InvalidPeriodRange { p_min: 8, p_max: 4 })
        ));
        assert!(matches!(
            FrequencyPolicy::new(1, 32, 0.0, 2.0, 3),
            Err(PolicyError::DecreaseFactorOutOfRange(_))
        ));
        assert!(matches!(
            FrequencyPolicy::new(1, 32, 1.5, 2.0, 3),
            Err(PolicyError::DecreaseFactorOutOfRange(_))
        ));
        assert!(matches!(
            FrequencyPolicy::new(1, 32, 0.5, 0.5, 3),
            Err(PolicyError::IncreaseFactorOutOfRange(_))
        ));
        assert!(matches!(
            FrequencyPolicy::new(1, 32, 0.5, 2.0, 0),
            Err(PolicyError::ZeroQuietWindows)
        ));
    }

    proptest::proptest! {
        #[test]
        fn adjusted_period_never_leaves_the_range(
            p_min in 1u64..20,
            span in 0u64..40,
            dec in 0.05f64..=1.0,
            inc in 1.0f64..4.0,
            k in 1u32..5,
            start_offset in 0u64..60,
            outcomes in proptest::collection::vec(proptest::bool::ANY, 0..30),
        ) {
            let p_max = p_min + span;
            let policy = FrequencyPolicy::new(p_min, p_max, dec, inc, k).unwrap();
            let mut period = policy.clamp(p_min + start_offset);
            let mut streak = 0u32;
            for alarmed in outcomes {
                let outcome = if alarmed { WindowOutcome::Alarm } else { WindowOutcome::Quiet };
                let (new_period, new_streak) = adjust_frequency(&policy, period, outcome, streak);
                proptest::prop_assert!((p_min..=p_max).contains(&new_period));
                proptest::prop_assert!(new_streak < k);
                period = new_period;
                streak = new_streak;
            }
        }

        #[test]
        fn band_lookup_is_monotone_for_non_increasing_periods(
            bounds in proptest::collection::btree_set(0u32..1000, 1..6),
            loads in proptest::collection::vec(0.0f64..1200.0, 2),
        ) {
            // Strictly ascending bounds paired with strictly descending
            // periods (descending index keeps them non-increasing).
            let bands: Vec<(f64, Tick)> = bounds
                .iter()
                .enumerate()
                .map(|(i, b)| (*b as f64, (bounds.len() - i) as Tick))
                .collect();
            let policy = LoadProportionalPolicy::new(
                PropertyId::new("load", "web", "").unwrap(),
                bands,
            )
            .unwrap();
            let (lo, hi) = if loads[0] <= loads[1] {
                (loads[0], loads[1])
            } else {
                (loads[1], loads[0])
            };
            proptest::prop_assert!(load_band_period(&policy, lo) >= load_band_period(&policy, hi));
        }
    }

    fn lp_policy() -> LoadProportionalPolicy {
        LoadProportionalPolicy::new(
            PropertyId::new("load", "web", "").unwrap(),
            vec![(50.0, 10), (80.0, 5), (100.0, 1)],
        )
        .unwrap()
    }

    #[test]
    fn band_lookup_picks_first_covering_bound() {
        assert_eq!(load_band_period(&lp_policy(), 30.0), 10);
        assert_eq!(load_band_period(&lp_policy(), 80.0), 5);
        assert_eq!(load_band_period(&lp_policy(), 120.0), 1);
    }

    #[test]
    fn band_table_is_validated() {
        let load = PropertyId::new("load", "web", "").unwrap();
        assert!(matches!(
            LoadProportionalPolicy::new(load.clone(), Vec::new()),
            Err(PolicyError::EmptyBands)
        ));
        assert!(matches!(
            LoadProportionalPolicy::new(load.clone(), vec![(80.0, 5), (50.0, 10)]),
            Err(PolicyError::UnsortedBands { position: 1 })
        ));
        assert!(matches!(
            LoadProportionalPolicy::new(load, vec![(50.0, 0)]),
            Err(PolicyError::ZeroBandPeriod { .. })
        ));
    }

    fn pid(name: &str) -> PropertyId {
        PropertyId::new(name, "web", "").unwrap()
    }

    fn staged_controller() -> (MonitorController, StagePolicy) {
        let log = Arc::new(KnowledgeLog::new());
        let specs: Vec<PropertySpec> = ["server_load", "response_time", "bandwidth"]
            .iter()
            .map(|name| {
                PropertySpec::new(
                    pid(name),
                    PropertyKind::System,
                    "unit",
                    QosPurpose::SelfOptimizing,
                    Threshold::upper_only(50.0),
                    *name == "server_load",
                )
                .unwrap()
            })
            .collect();
        let mut ctl =
            MonitorController::new(MonitoringMode::Periodic { log_period: 1 }, specs, log).unwrap();
        for name in ["server_load", "response_time", "bandwidth"] {
            ctl.deploy_sensor(
                SensorDescriptor {
                    sensor_id: format!("s_{name}"),
                    property: pid(name),
                    mode: TriggerMode::TimeTriggered { period: 1 },
                    status: SensorStatus::Active,
                },
                InstrumentationHook::from_fn(pid(name), |_| 30.0),
            )
            .unwrap();
        }
        let core: BTreeSet<PropertyId> = [pid("server_load")].into_iter().collect();
        let extended: BTreeSet<PropertyId> =
            [pid("server_load"), pid("response_time"), pid("bandwidth")]
                .into_iter()
                .collect();
        let policy = StagePolicy::new(core, extended, 2, 20).unwrap();
        (ctl, policy)
    }

    fn window_entry(tick: Tick, with_violation: bool) -> LogEntry {
        let events = if with_violation {
            vec![ViolationEvent {
                property: pid("server_load"),
                violation: ViolationKind::Upper,
                observed: 80.0,
                reference: None,
                tick,
            }]
        } else {
            Vec::new()
        };
        let cause = if with_violation {
            LogCause::Violation
        } else {
            LogCause::PeriodicTick
        };
        LogEntry {
            seq: 0,
            tick,
            cause,
            state: SystemState::empty(tick),
            events,
            measurements_taken_this_tick: 1,
        }
    }

    #[test]
    fn install_leaves_only_core_sensors_active() {
        let (mut ctl, policy) = staged_controller();
        policy.install(&mut ctl).unwrap();
        assert_eq!(ctl.active_properties(), vec![pid("server_load")]);
        assert_eq!(
            ctl.sensor_status("s_response_time").unwrap(),
            SensorStatus::Inactive
        );
    }

    #[test]
    fn violation_window_escalates_to_extended() {
        let (mut ctl, mut policy) = staged_controller();
        policy.install(&mut ctl).unwrap();
        policy.apply(&mut ctl, &[window_entry(5, true)]).unwrap();
        assert_eq!(policy.current_stage(), Stage::Extended);
        assert_eq!(ctl.active_properties().len(), 3);
    }

    #[test]
    fn two_clean_windows_contract_back_to_core() {
        let (mut ctl, mut policy) = staged_controller();
        policy.install(&mut ctl).unwrap();
        policy.apply(&mut ctl, &[window_entry(5, true)]).unwrap();
        policy.apply(&mut ctl, &[window_entry(25, false)]).unwrap();
        assert_eq!(policy.current_stage(), Stage::Extended);
        policy.apply(&mut ctl, &[window_entry(45, false)]).unwrap();
        assert_eq!(policy.current_stage(), Stage::CoreOnly);
        assert_eq!(ctl.active_properties(), vec![pid("server_load")]);
    }

    #[test]
    fn alarm_while_extended_resets_the_clean_streak() {
        let (mut ctl, mut policy) = staged_controller();
        policy.install(&mut ctl).unwrap();
        policy.apply(&mut ctl, &[window_entry(5, true)]).unwrap();
        policy.apply(&mut ctl, &[window_entry(25, false)]).unwrap();
        policy.apply(&mut ctl, &[window_entry(45, true)]).unwrap();
        policy.apply(&mut ctl, &[window_entry(65, false)]).unwrap();
        assert_eq!(policy.current_stage(), Stage::Extended);
        policy.apply(&mut ctl, &[window_entry(85, false)]).unwrap();
        assert_eq!(policy.current_stage(), Stage::CoreOnly);
    }

    #[test]
    fn clean_window_in_core_stage_is_a_no_op() {
        let (mut ctl, mut policy) = staged_controller();
        policy.install(&mut ctl).unwrap();
        policy.apply(&mut ctl, &[window_entry(5, false)]).unwrap();
        assert_eq!(policy.current_stage(), Stage::CoreOnly);
        assert_eq!(ctl.active_properties(), vec![pid("server_load")]);
    }

    #[test]
    fn stage_policy_validates_sets_and_sensors() {
        let core: BTreeSet<PropertyId> = [pid("server_load")].into_iter().collect();
        let narrow: BTreeSet<PropertyId> = [pid("response_time")].into_iter().collect();
        assert!(matches!(
            StagePolicy::new(core.clone(), narrow, 2, 20),
            Err(PolicyError::CoreNotSubset(_))
        ));
        assert!(matches!(
            StagePolicy::new(core.clone(), core.clone(), 0, 20),
            Err(PolicyError::ZeroStabilityWindows)
        ));
        assert!(matches!(
            StagePolicy::new(core.clone(), core.clone(), 2, 0),
            Err(PolicyError::ZeroWindowTicks)
        ));

        // A policy naming a property with no sensor fails at install.
        let (mut ctl, _) = staged_controller();
        let ghost: BTreeSet<PropertyId> = [pid("server_load"), pid("ghost")].into_iter().collect();
        let policy = StagePolicy::new(core, ghost, 2, 20).unwrap();
        assert!(matches!(
            policy.install(&mut ctl),
            Err(PolicyError::MissingStageSensor(_))
        ));
    }

    #[test]
    fn install_rejects_sensors_outside_the_staged_set() {
        let (mut ctl, _) = staged_controller();
        let core: BTreeSet<PropertyId> = [pid("server_load")].into_iter().collect();
        let policy = StagePolicy::new(core.clone(), core, 2, 20).unwrap();
        assert!(matches!(
            policy.install(&mut ctl),
            Err(PolicyError::UnstagedSensor(_))
        ));
    }
}
