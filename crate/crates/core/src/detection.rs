//! Monte Carlo click streams.
//!
//! Each herald's analytic window counts become click probabilities after
//! per-port efficiency thinning; an optional dark-count process adds
//! independent false clicks per port per window.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::interferometer::{
    AnalyticModel, DetectorWindow, InterferometerError, IntrusionScenario, PerimeterGeometry,
    PhaseMode, PhaseSchedule,
};
use crate::source::HeraldEvent;
use crate::units::seeded_rng;

const DETECTION_STREAM: u64 = 0x0043_4c49_434b;
/// Slack for rounding in the analytic counts before they are called out of range.
const PROBABILITY_SLACK: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DetectionError {
    #[error("phase schedule has {len} entries but herald {index} needs one")]
    ScheduleExhausted { index: usize, len: usize },
    #[error("click probability {value} at {port} is outside [0, 1]")]
    ProbabilityOverflow { port: &'static str, value: f64 },
    #[error("invalid detector: {0}")]
    InvalidDetector(String),
    #[error("schedule mode {schedule:?} does not match interferometer mode {model:?}")]
    ModeMismatch {
        schedule: PhaseMode,
        model: PhaseMode,
    },
    #[error(transparent)]
    Interferometer(#[from] InterferometerError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorModel {
    pub efficiency_w1: f64,
    pub efficiency_w2: f64,
    /// False clicks per ns per port.
    pub dark_count_rate: f64,
    pub window: DetectorWindow,
}

impl DetectorModel {
    pub fn ideal(window: DetectorWindow) -> Self {
        DetectorModel {
            efficiency_w1: 1.0,
            efficiency_w2: 1.0,
            dark_count_rate: 0.0,
            window,
        }
    }

    pub fn validate(&self) -> Result<(), DetectionError> {
        for (name, e) in [
            ("efficiency_w1", self.efficiency_w1),
            ("efficiency_w2", self.efficiency_w2),
        ] {
            if !(0.0..=1.0).contains(&e) {
                return Err(DetectionError::InvalidDetector(format!(
                    "{name} must lie in [0, 1], got {e}"
                )));
            }
        }
        if !(self.dark_count_rate >= 0.0 && self.dark_count_rate.is_finite()) {
            return Err(DetectionError::InvalidDetector(format!(
                "dark count rate must be ≥ 0, got {}",
                self.dark_count_rate
            )));
        }
        if self.dark_count_probability() > 1.0 {
            return Err(DetectionError::InvalidDetector(
                "dark count rate × resolving time exceeds 1".into(),
            ));
        }
        Ok(())
    }

    /// Probability of a false click in one window at one port.
    pub fn dark_count_probability(&self) -> f64 {
        if self.dark_count_rate == 0.0 {
            0.0
        } else {
            self.dark_count_rate * self.window.resolving_time
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    W1,
    W2,
    None,
    /// Both ports clicked; only possible with dark counts.
    Both,
}

impl Outcome {
    pub fn clicked_w1(self) -> bool {
        matches!(self, Outcome::W1 | Outcome::Both)
    }

    pub fn clicked_w2(self) -> bool {
        matches!(self, Outcome::W2 | Outcome::Both)
    }

    fn from_clicks(w1: bool, w2: bool) -> Self {
        match (w1, w2) {
            (true, true) => Outcome::Both,
            (true, false) => Outcome::W1,
            (false, true) => Outcome::W2,
            (false, false) => Outcome::None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::W1 => "w1",
            Outcome::W2 => "w2",
            Outcome::None => "none",
            Outcome::Both => "both",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "w1" => Some(Outcome::W1),
            "w2" => Some(Outcome::W2),
            "none" => Some(Outcome::None),
            "both" => Some(Outcome::Both),
            _ => None,
        }
    }
}

/// Outcome of one herald's detection window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionRecord {
    pub index: usize,
    /// Herald time t_j (ns).
    pub t_j: f64,
    /// Window centre t_j + t_B (ns).
    pub window_center: f64,
    pub outcome: Outcome,
    pub phi1: f64,
    pub phi2: f64,
}

/// Per-herald click probabilities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClickProbabilities {
    /// Photon click at w1.
    pub q1: f64,
    /// Photon click at w2.
    pub q2: f64,
    /// Independent dark click, per port.
    pub dark: f64,
}

pub fn click_probabilities(
    scenario: &IntrusionScenario,
    model: &AnalyticModel,
    phases: (f64, f64),
    detector: &DetectorModel,
) -> Result<ClickProbabilities, DetectionError> {
    let counts = model.port_counts(scenario, detector.window, phases);
    let check = |port: &'static str, v: f64| {
        if (-PROBABILITY_SLACK..=1.0 + PROBABILITY_SLACK).contains(&v) {
            Ok(v.clamp(0.0, 1.0))
        } else {
            Err(DetectionError::ProbabilityOverflow { port, value: v })
        }
    };
    let c1 = check("w1", counts.w1)?;
    let c2 = check("w2", counts.w2)?;
    check("w1+w2", c1 + c2)?;
    Ok(ClickProbabilities {
        q1: detector.efficiency_w1 * c1,
        q2: detector.efficiency_w2 * c2,
        dark: detector.dark_count_probability(),
    })
}

/// Fixed apparatus for a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunSetup {
    pub model: AnalyticModel,
    pub geometry: PerimeterGeometry,
    pub detector: DetectorModel,
}

/// One record per herald, with `scenario` held fixed for the whole run.
pub fn simulate_run(
    setup: &RunSetup,
    scenario: &IntrusionScenario,
    heralds: &[HeraldEvent],
    schedule: &PhaseSchedule,
    seed: u64,
) -> Result<Vec<DetectionRecord>, DetectionError> {
    scenario.validate()?;
    setup.detector.validate()?;
    if schedule.mode != setup.model.phase_mode {
        return Err(DetectionError::ModeMismatch {
            schedule: schedule.mode,
            model: setup.model.phase_mode,
        });
    }
    let t_bottom = setup.geometry.t_bottom();
    let mut rng = seeded_rng(seed, DETECTION_STREAM);
    let mut records = Vec::with_capacity(heralds.len());
    for herald in heralds {
        let phases = schedule
            .get(herald.index)
            .ok_or(DetectionError::ScheduleExhausted {
                index: herald.index,
                len: schedule.len(),
            })?;
        let p = click_probabilities(scenario, &setup.model, phases, &setup.detector)?;
        let u: f64 = rng.random();
        let mut w1 = u < p.q1;
        let mut w2 = !w1 && u < p.q1 + p.q2;
        if p.dark > 0.0 {
            w1 |= rng.random::<f64>() < p.dark;
            w2 |= rng.random::<f64>() < p.dark;
        }
        records.push(DetectionRecord {
            index: herald.index,
            t_j: herald.time,
            window_center: herald.time + t_bottom,
            outcome: Outcome::from_clicks(w1, w2),
            phi1: phases.0,
            phi2: phases.1,
        });
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interferometer::window_count_normal;

    const OMEGA_P: f64 = 749_481.145;

    fn setup(mode: PhaseMode, detector: DetectorModel) -> RunSetup {
        RunSetup {
            model: AnalyticModel::new(0.01, OMEGA_P, mode).unwrap(),
            geometry: PerimeterGeometry::balanced(10.0, 10.0, 10.0).unwrap(),
            detector,
        }
    }

    fn window() -> DetectorWindow {
        DetectorWindow::new(0.1).unwrap()
    }

    fn heralds(n: usize) -> Vec<HeraldEvent> {
        (0..n)
            .map(|i| HeraldEvent {
                index: i,
                time: i as f64,
            })
            .collect()
    }

    #[test]
    fn probabilities() {
        let model = AnalyticModel::new(0.01, OMEGA_P, PhaseMode::FixedSecret).unwrap();
        let i0 = window_count_normal(0.01, window());
        let ideal = DetectorModel::ideal(window());
        let p =
            click_probabilities(&IntrusionScenario::Normal, &model, (0.0, 0.0), &ideal).unwrap();
        assert!((p.q1 - i0).abs() < 1e-15 && p.q2 < 1e-15 && p.dark == 0.0);
        let lossy = DetectorModel {
            efficiency_w1: 0.8,
            ..ideal
        };
        let p =
            click_probabilities(&IntrusionScenario::Normal, &model, (0.0, 0.0), &lossy).unwrap();
        assert!((p.q1 - 0.8 * i0).abs() < 1e-15);
        let p = click_probabilities(
            &IntrusionScenario::InterceptResend,
            &model,
            (0.0, 0.0),
            &ideal,
        )
        .unwrap();
        assert_eq!((p.q1, p.q2), (i0 / 2.0, i0 / 2.0));
    }

    #[test]
    fn invalid_detectors() {
        let bad = DetectorModel {
            efficiency_w2: 1.5,
            ..DetectorModel::ideal(window())
        };
        assert!(bad.validate().is_err());
        let dark = DetectorModel {
            dark_count_rate: 20.0,
            ..DetectorModel::ideal(window())
        };
        assert!(dark.validate().is_err());
    }

    #[test]
    fn empty_herald_list() {
        let s = setup(PhaseMode::FixedSecret, DetectorModel::ideal(window()));
        let sched = PhaseSchedule::fixed_constant(0, 0.0, 0.0);
        let r = simulate_run(&s, &IntrusionScenario::Normal, &[], &sched, 1).unwrap();
        assert!(r.is_empty());
    }

    #[test]
    fn schedule_exhausted_and_mode_mismatch() {
        let s = setup(PhaseMode::QrngBinary, DetectorModel::ideal(window()));
        let short = PhaseSchedule::qrng(5, 1, 0.0);
        assert!(matches!(
            simulate_run(&s, &IntrusionScenario::Normal, &heralds(10), &short, 1),
            Err(DetectionError::ScheduleExhausted { index: 5, len: 5 })
        ));
        let fixed = PhaseSchedule::fixed_constant(10, 0.0, 0.0);
        assert!(matches!(
            simulate_run(&s, &IntrusionScenario::Normal, &heralds(10), &fixed, 1),
            Err(DetectionError::ModeMismatch { .. })
        ));
    }

    #[test]
    fn deterministic_and_no_double_clicks_without_dark_counts() {
        let s = setup(PhaseMode::QrngBinary, DetectorModel::ideal(window()));
        let h = heralds(5000);
        let sched = PhaseSchedule::qrng(h.len(), 2, 10.0);
        let a = simulate_run(&s, &IntrusionScenario::InterceptResend, &h, &sched, 77).unwrap();
        let b = simulate_run(&s, &IntrusionScenario::InterceptResend, &h, &sched, 77).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|r| r.outcome != Outcome::Both));
        let c = simulate_run(&s, &IntrusionScenario::InterceptResend, &h, &sched, 78).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn dark_counts_produce_both() {
        let det = DetectorModel {
            dark_count_rate: 4.0,
            ..DetectorModel::ideal(window())
        };
        let s = setup(PhaseMode::FixedSecret, det);
        let h = heralds(4000);
        let sched = PhaseSchedule::fixed_constant(h.len(), 0.0, 0.0);
        let r = simulate_run(&s, &IntrusionScenario::Normal, &h, &sched, 3).unwrap();
        let both = r.iter().filter(|r| r.outcome == Outcome::Both).count() as f64;
        // P(both) = P(w1 photon or dark) · P(w2 dark) ≈ 0.4
        assert!((both / 4000.0 - 0.4).abs() < 0.04, "{both}");
    }

    #[test]
    fn window_center_uses_bottom_transit() {
        let s = setup(PhaseMode::FixedSecret, DetectorModel::ideal(window()));
        let h = heralds(3);
        let sched = PhaseSchedule::fixed_constant(3, 0.5, 0.25);
        let r = simulate_run(&s, &IntrusionScenario::Normal, &h, &sched, 3).unwrap();
        assert_eq!(r[2].window_center, 2.0 + s.geometry.t_bottom());
        assert_eq!((r[1].phi1, r[1].phi2), (0.5, 0.25));
    }

    #[test]
    fn outcome_text_roundtrip() {
        for o in [Outcome::W1, Outcome::W2, Outcome::None, Outcome::Both] {
            assert_eq!(Outcome::parse(o.as_str()), Some(o));
        }
        assert_eq!(Outcome::parse("W1"), None);
    }
}
