//! Alarm decisions and delayed phase-broadcast verification.
//!
//! Two statistics are tracked over a sliding window of the last `N`
//! heralds:
//!
//! * `Θ = n₁ / (n₁ + n₂)`, the share of clicks landing in the bright port.
//!   It sits near one during normal operation and falls toward one half
//!   under every modelled intrusion. An alarm fires when `Θ < ν`.
//! * `Γᵢ = (pᵢ − nᵢ/N) / I₀`, the calibrated expected click rate minus the
//!   measured one in units of `I₀`. An alarm fires when `|Γᵢ| ≥ εᵢ`.
//!
//! With QRNG corner phases the bright port changes herald by herald, so
//! port 1 is read as "the port the broadcast phases predict" and port 2 as
//! the other one.

use serde::{Deserialize, Serialize};
use std::collections::VecDeque;
use thiserror::Error;

use crate::detection::{DetectionRecord, Outcome};
use crate::interferometer::{binary_phase, PhaseSchedule};
use crate::units::reduce_phase;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MonitorError {
    #[error("calibration needs at least one herald")]
    EmptyCalibration,
    #[error("{processed} heralds processed, alarm window needs {needed}")]
    InsufficientData { processed: usize, needed: usize },
    #[error("phase {0} rad is not 0 or π")]
    NonBinaryPhase(f64),
    #[error("schedule mismatch: {0}")]
    ScheduleMismatch(String),
    #[error("invalid alarm configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Port {
    W1,
    W2,
}

/// Port that lights up under ideal physics for QRNG corner phases:
/// `w1` when φ₁ = φ₂, `w2` otherwise.
pub fn expected_port(phi1: f64, phi2: f64) -> Result<Port, MonitorError> {
    let a = binary_phase(phi1).map_err(|_| MonitorError::NonBinaryPhase(phi1))?;
    let b = binary_phase(phi2).map_err(|_| MonitorError::NonBinaryPhase(phi2))?;
    Ok(if a == b { Port::W1 } else { Port::W2 })
}

/// Which physical port counts as bright for a record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PortLabeling {
    /// Compensated bottom arm: `w1` is always bright.
    FixedBright,
    /// QRNG phases: bright port from [`expected_port`].
    FromPhases,
}

impl PortLabeling {
    /// (bright click, dark click) for a record.
    pub fn clicks(self, record: &DetectionRecord) -> Result<(bool, bool), MonitorError> {
        let (c1, c2) = (record.outcome.clicked_w1(), record.outcome.clicked_w2());
        match self {
            PortLabeling::FixedBright => Ok((c1, c2)),
            PortLabeling::FromPhases => match expected_port(record.phi1, record.phi2)? {
                Port::W1 => Ok((c1, c2)),
                Port::W2 => Ok((c2, c1)),
            },
        }
    }
}

/// Baseline click probabilities (bright, dark) from a no-intrusion run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub p1: f64,
    pub p2: f64,
}

pub fn calibrate(
    records: &[DetectionRecord],
    labeling: PortLabeling,
) -> Result<Calibration, MonitorError> {
    if records.is_empty() {
        return Err(MonitorError::EmptyCalibration);
    }
    let (mut n1, mut n2) = (0usize, 0usize);
    for r in records {
        let (a, b) = labeling.clicks(r)?;
        n1 += a as usize;
        n2 += b as usize;
    }
    let n = records.len() as f64;
    Ok(Calibration {
        p1: n1 as f64 / n,
        p2: n2 as f64 / n,
    })
}

/// Θ = n₁/(n₁+n₂), undefined without clicks.
pub fn theta_of(n1: usize, n2: usize) -> Option<f64> {
    let total = n1 + n2;
    (total > 0).then(|| n1 as f64 / total as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlarmConfig {
    /// Θ tolerance ν ∈ (0, 1].
    pub nu: f64,
    /// Γ tolerances ε₁, ε₂ ≥ 0.
    pub epsilon: [f64; 2],
    /// Evaluation window N in heralds.
    pub window: usize,
    /// Broadcast match threshold; `None` uses the binomial 3σ default.
    pub match_threshold: Option<f64>,
}

impl Default for AlarmConfig {
    /// ν = 0.9, ε = 0.1, N = 1000. Arbitrary; tune against measured Γ.
    fn default() -> Self {
        AlarmConfig {
            nu: 0.9,
            epsilon: [0.1, 0.1],
            window: 1000,
            match_threshold: None,
        }
    }
}

impl AlarmConfig {
    pub fn validate(&self) -> Result<(), MonitorError> {
        if !(self.nu > 0.0 && self.nu <= 1.0) {
            return Err(MonitorError::InvalidConfig(format!(
                "ν must lie in (0, 1], got {}",
                self.nu
            )));
        }
        if self.epsilon.iter().any(|e| !(*e >= 0.0)) {
            return Err(MonitorError::InvalidConfig(format!(
                "ε must be ≥ 0, got {:?}",
                self.epsilon
            )));
        }
        if self.window == 0 {
            return Err(MonitorError::InvalidConfig("window N must be ≥ 1".into()));
        }
        if let Some(t) = self.match_threshold {
            if !(0.0..=1.0).contains(&t) {
                return Err(MonitorError::InvalidConfig(format!(
                    "match threshold must lie in [0, 1], got {t}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlarmReason {
    Theta,
    Gamma1,
    Gamma2,
    /// No clicks at all in the window.
    NoSignal,
    /// Broadcast verification failed.
    Broadcast,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlarmDecision {
    pub alarm: bool,
    pub reasons: Vec<AlarmReason>,
}

/// Sliding-window monitor for one perimeter.
#[derive(Debug, Clone, PartialEq)]
pub struct MonitorState {
    window: usize,
    labeling: PortLabeling,
    baseline: Calibration,
    i0: f64,
    recent: VecDeque<(bool, bool)>,
    n1: usize,
    n2: usize,
    processed: usize,
}

impl MonitorState {
    pub fn new(
        window: usize,
        labeling: PortLabeling,
        baseline: Calibration,
        i0: f64,
    ) -> Result<Self, MonitorError> {
        if window == 0 {
            return Err(MonitorError::InvalidConfig("window N must be ≥ 1".into()));
        }
        if !(i0 > 0.0 && i0 <= 1.0) {
            return Err(MonitorError::InvalidConfig(format!(
                "I₀ must lie in (0, 1], got {i0}"
            )));
        }
        Ok(MonitorState {
            window,
            labeling,
            baseline,
            i0,
            recent: VecDeque::with_capacity(window),
            n1: 0,
            n2: 0,
            processed: 0,
        })
    }

    pub fn update(&mut self, record: &DetectionRecord) -> Result<(), MonitorError> {
        let (a, b) = self.labeling.clicks(record)?;
        if self.recent.len() == self.window {
            if let Some((old_a, old_b)) = self.recent.pop_front() {
                self.n1 -= old_a as usize;
                self.n2 -= old_b as usize;
            }
        }
        self.recent.push_back((a, b));
        self.n1 += a as usize;
        self.n2 += b as usize;
        self.processed += 1;
        Ok(())
    }

    pub fn counts(&self) -> (usize, usize) {
        (self.n1, self.n2)
    }

    pub fn processed(&self) -> usize {
        self.processed
    }

    pub fn baseline(&self) -> Calibration {
        self.baseline
    }

    pub fn theta(&self) -> Option<f64> {
        theta_of(self.n1, self.n2)
    }

    /// Click-indicator averages over the current window.
    pub fn measured(&self) -> [f64; 2] {
        let len = self.recent.len();
        if len == 0 {
            return [0.0, 0.0];
        }
        [self.n1 as f64 / len as f64, self.n2 as f64 / len as f64]
    }

    /// Γᵢ = (pᵢ − measured average)/I₀; zero before any herald.
    pub fn gamma(&self) -> [f64; 2] {
        if self.recent.is_empty() {
            return [0.0, 0.0];
        }
        let m = self.measured();
        [
            (self.baseline.p1 - m[0]) / self.i0,
            (self.baseline.p2 - m[1]) / self.i0,
        ]
    }

    pub fn summary(
        &self,
        decision: Option<&AlarmDecision>,
        match_fraction: Option<f64>,
    ) -> MonitorSummary {
        let gamma = self.gamma();
        MonitorSummary {
            n1: self.n1,
            n2: self.n2,
            theta: self.theta(),
            gamma1: gamma[0],
            gamma2: gamma[1],
            alarm: decision.is_some_and(|d| d.alarm),
            reasons: decision.map(|d| d.reasons.clone()).unwrap_or_default(),
            match_fraction,
        }
    }
}

pub fn evaluate_alarm(
    state: &MonitorState,
    config: &AlarmConfig,
) -> Result<AlarmDecision, MonitorError> {
    if state.processed < config.window {
        return Err(MonitorError::InsufficientData {
            processed: state.processed,
            needed: config.window,
        });
    }
    let mut reasons = Vec::new();
    match state.theta() {
        None => reasons.push(AlarmReason::NoSignal),
        Some(theta) if theta < config.nu => reasons.push(AlarmReason::Theta),
        Some(_) => {}
    }
    let gamma = state.gamma();
    if gamma[0].abs() >= config.epsilon[0] {
        reasons.push(AlarmReason::Gamma1);
    }
    if gamma[1].abs() >= config.epsilon[1] {
        reasons.push(AlarmReason::Gamma2);
    }
    Ok(AlarmDecision {
        alarm: !reasons.is_empty(),
        reasons,
    })
}

/// Structured snapshot of the monitor and verdict.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitorSummary {
    pub n1: usize,
    pub n2: usize,
    pub theta: Option<f64>,
    pub gamma1: f64,
    pub gamma2: f64,
    pub alarm: bool,
    pub reasons: Vec<AlarmReason>,
    pub match_fraction: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    InsufficientData,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BroadcastVerdict {
    pub clicked: usize,
    pub matched: usize,
    pub match_fraction: Option<f64>,
    pub threshold: f64,
    pub verdict: Verdict,
}

/// `1 − 3σ` for a fair coin over `clicked` trials, never below `½ + 3σ`.
pub fn default_match_threshold(clicked: usize) -> f64 {
    if clicked == 0 {
        return 1.0;
    }
    let sigma = 0.5 / (clicked as f64).sqrt();
    (1.0 - 3.0 * sigma).max(0.5 + 3.0 * sigma).min(1.0)
}

/// Compares each clicked record with the port its broadcast phases predict.
pub fn verify_broadcast(
    records: &[DetectionRecord],
    schedule: &PhaseSchedule,
    config: &AlarmConfig,
) -> Result<BroadcastVerdict, MonitorError> {
    let (mut clicked, mut matched) = (0usize, 0usize);
    for r in records {
        let (phi1, phi2) = schedule.get(r.index).ok_or_else(|| {
            MonitorError::ScheduleMismatch(format!(
                "record {} has no broadcast phases ({} published)",
                r.index,
                schedule.len()
            ))
        })?;
        let same = |x: f64, y: f64| {
            let d = (reduce_phase(x) - reduce_phase(y)).abs();
            d < 1e-12 || (d - 2.0 * std::f64::consts::PI).abs() < 1e-12
        };
        if !same(phi1, r.phi1) || !same(phi2, r.phi2) {
            return Err(MonitorError::ScheduleMismatch(format!(
                "record {} logged phases ({}, {}) but broadcast says ({phi1}, {phi2})",
                r.index, r.phi1, r.phi2
            )));
        }
        let expected = expected_port(phi1, phi2)?;
        let hit = match r.outcome {
            Outcome::None => continue,
            Outcome::W1 => expected == Port::W1,
            Outcome::W2 => expected == Port::W2,
            Outcome::Both => false,
        };
        clicked += 1;
        matched += hit as usize;
    }
    let threshold = config
        .match_threshold
        .unwrap_or_else(|| default_match_threshold(clicked));
    if clicked == 0 {
        return Ok(BroadcastVerdict {
            clicked,
            matched,
            match_fraction: None,
            threshold,
            verdict: Verdict::InsufficientData,
        });
    }
    let fraction = matched as f64 / clicked as f64;
    Ok(BroadcastVerdict {
        clicked,
        matched,
        match_fraction: Some(fraction),
        threshold,
        verdict: if fraction >= threshold {
            Verdict::Pass
        } else {
            Verdict::Fail
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interferometer::PhaseMode;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn record(index: usize, outcome: Outcome, phases: (f64, f64)) -> DetectionRecord {
        DetectionRecord {
            index,
            t_j: index as f64,
            window_center: index as f64 + 100.0,
            outcome,
            phi1: phases.0,
            phi2: phases.1,
        }
    }

    fn stream(outcomes: &[Outcome]) -> Vec<DetectionRecord> {
        outcomes
            .iter()
            .enumerate()
            .map(|(i, &o)| record(i, o, (0.0, 0.0)))
            .collect()
    }

    fn state_from(outcomes: &[Outcome], baseline: Calibration) -> MonitorState {
        let mut s = MonitorState::new(
            outcomes.len().max(1),
            PortLabeling::FixedBright,
            baseline,
            1.0,
        )
        .unwrap();
        for r in stream(outcomes) {
            s.update(&r).unwrap();
        }
        s
    }

    #[test]
    fn expected_port_table() {
        assert_eq!(expected_port(0.0, 0.0), Ok(Port::W1));
        assert_eq!(expected_port(PI, 0.0), Ok(Port::W2));
        assert_eq!(expected_port(0.0, PI), Ok(Port::W2));
        assert_eq!(expected_port(PI, PI), Ok(Port::W1));
        assert_eq!(expected_port(-PI, 3.0 * PI), Ok(Port::W1));
        assert!(matches!(
            expected_port(1.0, 0.0),
            Err(MonitorError::NonBinaryPhase(_))
        ));
    }

    #[test]
    fn calibration_values() {
        assert_eq!(
            calibrate(&[], PortLabeling::FixedBright),
            Err(MonitorError::EmptyCalibration)
        );
        let none = stream(&[Outcome::None; 10]);
        assert_eq!(
            calibrate(&none, PortLabeling::FixedBright).unwrap(),
            Calibration { p1: 0.0, p2: 0.0 }
        );
        let mixed = stream(&[Outcome::W1, Outcome::W1, Outcome::W2, Outcome::Both]);
        assert_eq!(
            calibrate(&mixed, PortLabeling::FixedBright).unwrap(),
            Calibration { p1: 0.75, p2: 0.5 }
        );
    }

    #[test]
    fn labeling_follows_phases() {
        let r = record(0, Outcome::W2, (PI, 0.0));
        assert_eq!(PortLabeling::FromPhases.clicks(&r), Ok((true, false)));
        assert_eq!(PortLabeling::FixedBright.clicks(&r), Ok((false, true)));
    }

    #[test]
    fn sliding_window_forgets() {
        let base = Calibration { p1: 1.0, p2: 0.0 };
        let mut s = MonitorState::new(4, PortLabeling::FixedBright, base, 1.0).unwrap();
        for r in stream(&[Outcome::W1; 4]) {
            s.update(&r).unwrap();
        }
        assert_eq!(s.counts(), (4, 0));
        for i in 0..4 {
            s.update(&record(4 + i, Outcome::W2, (0.0, 0.0))).unwrap();
        }
        assert_eq!(s.counts(), (0, 4));
        assert_eq!(s.theta(), Some(0.0));
        assert_eq!(s.gamma(), [1.0, -1.0]);
        assert_eq!(s.processed(), 8);
    }

    #[test]
    fn no_clicks_is_its_own_alarm() {
        let s = state_from(&[Outcome::None; 5], Calibration { p1: 1.0, p2: 0.0 });
        assert_eq!(s.theta(), None);
        let cfg = AlarmConfig {
            window: 5,
            ..AlarmConfig::default()
        };
        let d = evaluate_alarm(&s, &cfg).unwrap();
        assert!(d.alarm);
        assert!(d.reasons.contains(&AlarmReason::NoSignal));
    }

    #[test]
    fn alarm_needs_full_window() {
        let s = state_from(&[Outcome::W1; 5], Calibration { p1: 1.0, p2: 0.0 });
        assert!(matches!(
            evaluate_alarm(&s, &AlarmConfig::default()),
            Err(MonitorError::InsufficientData {
                processed: 5,
                needed: 1000
            })
        ));
    }

    #[test]
    fn theta_rule() {
        let mut outcomes = vec![Outcome::W1; 99];
        outcomes.push(Outcome::W2);
        let s = state_from(&outcomes, Calibration { p1: 0.99, p2: 0.01 });
        let cfg = AlarmConfig {
            window: 100,
            ..AlarmConfig::default()
        };
        assert_eq!(evaluate_alarm(&s, &cfg).unwrap().alarm, false);
        let half: Vec<Outcome> = (0..100)
            .map(|i| if i % 2 == 0 { Outcome::W1 } else { Outcome::W2 })
            .collect();
        let s = state_from(&half, Calibration { p1: 1.0, p2: 0.0 });
        let d = evaluate_alarm(&s, &cfg).unwrap();
        assert_eq!(
            d.reasons,
            vec![AlarmReason::Theta, AlarmReason::Gamma1, AlarmReason::Gamma2]
        );
    }

    #[test]
    fn config_validation() {
        assert!(AlarmConfig::default().validate().is_ok());
        for bad in [
            AlarmConfig {
                nu: 0.0,
                ..AlarmConfig::default()
            },
            AlarmConfig {
                nu: 1.1,
                ..AlarmConfig::default()
            },
            AlarmConfig {
                epsilon: [-0.1, 0.1],
                ..AlarmConfig::default()
            },
            AlarmConfig {
                window: 0,
                ..AlarmConfig::default()
            },
            AlarmConfig {
                match_threshold: Some(1.5),
                ..AlarmConfig::default()
            },
        ] {
            assert!(bad.validate().is_err(), "{bad:?}");
        }
    }

    #[test]
    fn broadcast_verification() {
        let schedule = PhaseSchedule::qrng(400, 11, 10.0);
        let perfect: Vec<DetectionRecord> = schedule
            .phases
            .iter()
            .enumerate()
            .map(|(i, &p)| {
                let o = match expected_port(p.0, p.1).unwrap() {
                    Port::W1 => Outcome::W1,
                    Port::W2 => Outcome::W2,
                };
                record(i, o, p)
            })
            .collect();
        let v = verify_broadcast(&perfect, &schedule, &AlarmConfig::default()).unwrap();
        assert_eq!(v.match_fraction, Some(1.0));
        assert_eq!(v.verdict, Verdict::Pass);

        let fixed_port: Vec<DetectionRecord> = schedule
            .phases
            .iter()
            .enumerate()
            .map(|(i, &p)| record(i, Outcome::W1, p))
            .collect();
        let v = verify_broadcast(&fixed_port, &schedule, &AlarmConfig::default()).unwrap();
        assert_eq!(v.verdict, Verdict::Fail);
        assert!((v.match_fraction.unwrap() - 0.5).abs() < 0.1);

        let silent: Vec<DetectionRecord> = schedule
            .phases
            .iter()
            .enumerate()
            .map(|(i, &p)| record(i, Outcome::None, p))
            .collect();
        let v = verify_broadcast(&silent, &schedule, &AlarmConfig::default()).unwrap();
        assert_eq!(v.verdict, Verdict::InsufficientData);
        assert_eq!(v.match_fraction, None);

        let truncated =
            PhaseSchedule::from_pairs(PhaseMode::QrngBinary, schedule.phases[..10].to_vec(), 10.0)
                .unwrap();
        assert!(matches!(
            verify_broadcast(&perfect, &truncated, &AlarmConfig::default()),
            Err(MonitorError::ScheduleMismatch(_))
        ));
        let mut tampered = perfect.clone();
        tampered[3].phi1 = reduce_phase(tampered[3].phi1 + PI);
        assert!(matches!(
            verify_broadcast(&tampered, &schedule, &AlarmConfig::default()),
            Err(MonitorError::ScheduleMismatch(_))
        ));
    }

    #[test]
    fn default_threshold_shape() {
        assert_eq!(default_match_threshold(4), 1.0);
        let t = default_match_threshold(100_000);
        assert!((t - (1.0 - 1.5 / 100_000f64.sqrt())).abs() < 1e-15);
    }

    fn outcome_strategy() -> impl Strategy<Value = Outcome> {
        prop_oneof![
            Just(Outcome::W1),
            Just(Outcome::W2),
            Just(Outcome::None),
            Just(Outcome::Both)
        ]
    }

    proptest! {
        #[test]
        fn theta_in_unit_interval(outcomes in prop::collection::vec(outcome_strategy(), 1..200)) {
            let s = state_from(&outcomes, Calibration { p1: 0.9, p2: 0.05 });
            if let Some(t) = s.theta() {
                prop_assert!((0.0..=1.0).contains(&t));
            }
            let (n1, n2) = s.counts();
            prop_assert!(n1 <= outcomes.len() && n2 <= outcomes.len());
        }

        #[test]
        fn theta_scale_invariant(n1 in 0usize..10_000, n2 in 0usize..10_000, k in 1usize..50) {
            // same rational, correctly rounded: bit-identical
            prop_assert_eq!(theta_of(n1, n2), theta_of(n1 * k, n2 * k));
        }

        #[test]
        fn expected_port_symmetric(a in any::<bool>(), b in any::<bool>()) {
            let p = |x: bool| if x { PI } else { 0.0 };
            prop_assert_eq!(expected_port(p(a), p(b)), expected_port(p(b), p(a)));
            prop_assert_eq!(expected_port(p(a), p(b)), expected_port(p(!a), p(!b)));
        }

        #[test]
        fn alarm_monotone(
            outcomes in prop::collection::vec(outcome_strategy(), 20..120),
            nu in 0.01f64..1.0,
            e1 in 0.0f64..1.0,
            e2 in 0.0f64..1.0,
            lower in 0.0f64..1.0,
            raise in 0.0f64..1.0,
        ) {
            let s = state_from(&outcomes, Calibration { p1: 0.8, p2: 0.1 });
            let cfg = AlarmConfig { nu, epsilon: [e1, e2], window: outcomes.len(), match_threshold: None };
            let relaxed = AlarmConfig {
                nu: (nu * lower).max(1e-9),
                epsilon: [e1 + raise, e2 + raise],
                ..cfg.clone()
            };
            let strict = evaluate_alarm(&s, &cfg).unwrap();
            let loose = evaluate_alarm(&s, &relaxed).unwrap();
            prop_assert!(strict.alarm || !loose.alarm);
        }
    }
}
