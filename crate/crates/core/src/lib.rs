//! Simulator for a Mach-Zehnder interferometric quantum tripwire.
//!
//! A heralded single-photon source feeds a balanced Mach-Zehnder
//! interferometer whose upper branch (left, top and right arms) forms the
//! guarded perimeter. Under normal operation every photon leaves through the
//! bright port `w1`; blocking, lengthening, re-routing or intercepting the
//! fence branch destroys the interference and pushes flux into the dark port
//! `w2`.
//!
//! The crate is organised bottom-up:
//!
//! * [`source`]: wavepacket width, normalisation and herald sampling.
//! * [`interferometer`]: closed-form windowed counts for every scenario.
//! * [`oracle`]: brute-force amplitude propagation and quadrature, used to
//!   certify the closed forms.
//! * [`detection`]: Monte Carlo click streams with detector imperfections.
//! * [`monitor`]: the Θ / Γ alarm logic and delayed phase-broadcast check.
//!
//! Units are nanoseconds, millimetres (metres for perimeter arms) and
//! ordinary frequency in cycles per nanosecond.

pub mod detection;
pub mod interferometer;
pub mod io;
pub mod monitor;
pub mod oracle;
pub mod source;
pub mod units;

pub use detection::{
    click_probabilities, simulate_run, ClickProbabilities, DetectionError, DetectionRecord,
    DetectorModel, Outcome, RunSetup,
};
pub use interferometer::{
    cross_intrusion_phase_average, two_photon_window_count, window_count_block,
    window_count_cross_intrusion, window_count_intercept_resend, window_count_normal,
    window_count_side_intrusion, xi_from_delta, AnalyticModel, Corner, DetectorWindow,
    InterferometerError, IntrusionScenario, PerimeterGeometry, PhaseMode, PhaseSchedule,
    PortCounts, TwoPhotonCount,
};
pub use monitor::{
    calibrate, evaluate_alarm, expected_port, verify_broadcast, AlarmConfig, AlarmDecision,
    AlarmReason, BroadcastVerdict, Calibration, MonitorError, MonitorState, MonitorSummary, Port,
    PortLabeling,
};
pub use oracle::{
    numeric_two_photon_total, numeric_window_count, numeric_window_count_with_phases,
};
pub use source::{
    compensation_delay, derive_beta, normalization_constant, sample_herald_count, sample_heralds,
    temporal_intensity, HeraldEvent, SourceError, SourceParams,
};
