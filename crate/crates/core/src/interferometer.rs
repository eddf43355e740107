//! Closed-form windowed detection counts for the four-arm perimeter.
//!
//! The source port `s` and the vacuum port `a` meet at the first beam
//! splitter. The lower output `g` runs along the secured bottom arm `B`; the
//! upper output `u1` runs along the fence arms `L`, `T`, `R`, picking up the
//! corner phases φ₁ and φ₂. The second beam splitter recombines them:
//!
//! ```text
//! w1(t) = [e^{iΦ_B} g(t − t_B) + i u3(t − t_R)] / √2
//! w2(t) = [e^{i(Φ_B + π/2)} g(t − t_B) + u3(t − t_R)] / √2
//! ```
//!
//! With a balanced perimeter and matched phases all flux leaves through
//! `w1`. Every count here is the expected number of photons per herald
//! falling inside the detector window `[t_j + t_B − T_R/2, t_j + t_B + T_R/2]`.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

use crate::source::{HeraldEvent, SourceError, SourceParams};
use crate::units::{self, reduce_phase, seeded_rng};

const SCHEDULE_STREAM: u64 = 0x0050_4841_5345;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InterferometerError {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),
    #[error("perimeter is unbalanced: fence {fence_m} m vs bottom {bottom_m} m")]
    Unbalanced { fence_m: f64, bottom_m: f64 },
    #[error("detector resolving time must be positive, got {0} ns")]
    InvalidWindow(f64),
    #[error("invalid intrusion scenario: {0}")]
    InvalidScenario(String),
    #[error("phase {0} rad is not 0 or π")]
    NonBinaryPhase(f64),
    #[error("grid of {0} points per √β is too coarse (need at least 64)")]
    GridTooCoarse(usize),
    #[error("heralds {separation} ns apart are closer than √β = {min_separation} ns")]
    HeraldsTooClose {
        separation: f64,
        min_separation: f64,
    },
    #[error(transparent)]
    Source(#[from] SourceError),
}

/// Arm lengths of the perimeter in metres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerimeterGeometry {
    pub left_m: f64,
    pub top_m: f64,
    pub right_m: f64,
    pub bottom_m: f64,
}

impl PerimeterGeometry {
    pub fn new(
        left_m: f64,
        top_m: f64,
        right_m: f64,
        bottom_m: f64,
    ) -> Result<Self, InterferometerError> {
        let geometry = PerimeterGeometry {
            left_m,
            top_m,
            right_m,
            bottom_m,
        };
        for (name, v) in [
            ("left", left_m),
            ("top", top_m),
            ("right", right_m),
            ("bottom", bottom_m),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(InterferometerError::InvalidGeometry(format!(
                    "{name} arm length must be positive, got {v} m"
                )));
            }
        }
        Ok(geometry)
    }

    /// A balanced perimeter whose bottom arm equals the fence length.
    pub fn balanced(left_m: f64, top_m: f64, right_m: f64) -> Result<Self, InterferometerError> {
        Self::new(left_m, top_m, right_m, left_m + top_m + right_m)
    }

    pub fn fence_length_m(&self) -> f64 {
        self.left_m + self.top_m + self.right_m
    }

    /// Asserts `l_L + l_T + l_R = l_B` to 1e-12 relative.
    pub fn check_balanced(&self) -> Result<(), InterferometerError> {
        let fence = self.fence_length_m();
        if (fence - self.bottom_m).abs() <= 1e-12 * self.bottom_m {
            Ok(())
        } else {
            Err(InterferometerError::Unbalanced {
                fence_m: fence,
                bottom_m: self.bottom_m,
            })
        }
    }

    pub fn t_left(&self) -> f64 {
        self.left_m / units::SPEED_OF_LIGHT_M_PER_NS
    }
    pub fn t_top(&self) -> f64 {
        self.top_m / units::SPEED_OF_LIGHT_M_PER_NS
    }
    pub fn t_right(&self) -> f64 {
        self.right_m / units::SPEED_OF_LIGHT_M_PER_NS
    }
    pub fn t_bottom(&self) -> f64 {
        self.bottom_m / units::SPEED_OF_LIGHT_M_PER_NS
    }
    pub fn t_fence(&self) -> f64 {
        self.t_left() + self.t_top() + self.t_right()
    }
}

/// Detector integration window of width T_R centred on `t_j + t_B`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorWindow {
    pub resolving_time: f64,
}

impl DetectorWindow {
    pub fn new(resolving_time: f64) -> Result<Self, InterferometerError> {
        if resolving_time > 0.0 && !resolving_time.is_nan() {
            Ok(DetectorWindow { resolving_time })
        } else {
            Err(InterferometerError::InvalidWindow(resolving_time))
        }
    }

    /// Window integrating over all time.
    pub fn unbounded() -> Self {
        DetectorWindow {
            resolving_time: f64::INFINITY,
        }
    }

    pub fn is_unbounded(&self) -> bool {
        self.resolving_time.is_infinite()
    }

    pub fn bounds(&self, center: f64) -> (f64, f64) {
        let half = self.resolving_time / 2.0;
        (center - half, center + half)
    }
}

/// Which fence corner a cross intrusion routes around.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Corner {
    /// The L→T corner carrying φ₁.
    First,
    /// The T→R corner carrying φ₂.
    Second,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum IntrusionScenario {
    Normal,
    /// Fence path fully absorbed.
    Block,
    /// Diversion along one arm adding flight time `delta` (ns).
    SideIntrusion {
        delta: f64,
        /// Explicit ξ in rad; otherwise `2π c Δ / xi_wavelength`.
        xi_override: Option<f64>,
        xi_wavelength_nm: f64,
    },
    /// Length-matched diversion across a corner, replacing its phase by `phi_int`.
    CrossIntrusion {
        phi_int: f64,
        corner: Corner,
    },
    /// Fence photon measured and a substitute injected.
    InterceptResend,
}

impl IntrusionScenario {
    pub fn side_intrusion(delta: f64, xi_wavelength_nm: f64) -> Self {
        IntrusionScenario::SideIntrusion {
            delta,
            xi_override: None,
            xi_wavelength_nm,
        }
    }

    pub fn validate(&self) -> Result<(), InterferometerError> {
        let bad = |m: String| Err(InterferometerError::InvalidScenario(m));
        match *self {
            IntrusionScenario::SideIntrusion {
                delta,
                xi_override,
                xi_wavelength_nm,
            } => {
                if !(delta >= 0.0 && delta.is_finite()) {
                    return bad(format!("side intrusion Δ must be ≥ 0, got {delta} ns"));
                }
                if let Some(xi) = xi_override {
                    if !xi.is_finite() {
                        return bad(format!("ξ override must be finite, got {xi}"));
                    }
                } else if !(xi_wavelength_nm > 0.0 && xi_wavelength_nm.is_finite()) {
                    return bad(format!(
                        "ξ wavelength must be positive, got {xi_wavelength_nm} nm"
                    ));
                }
                Ok(())
            }
            IntrusionScenario::CrossIntrusion { phi_int, .. } if !phi_int.is_finite() => {
                bad(format!("φ_int must be finite, got {phi_int}"))
            }
            _ => Ok(()),
        }
    }

    /// ξ for a side intrusion (unreduced), zero otherwise.
    pub fn xi(&self) -> f64 {
        match *self {
            IntrusionScenario::SideIntrusion {
                delta,
                xi_override,
                xi_wavelength_nm,
            } => xi_override.unwrap_or_else(|| xi_from_delta(delta, xi_wavelength_nm)),
            _ => 0.0,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            IntrusionScenario::Normal => "normal",
            IntrusionScenario::Block => "block",
            IntrusionScenario::SideIntrusion { .. } => "side_intrusion",
            IntrusionScenario::CrossIntrusion { .. } => "cross_intrusion",
            IntrusionScenario::InterceptResend => "intercept_resend",
        }
    }
}

/// How the corner phases are chosen and whether the bottom arm compensates them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseMode {
    /// Pre-shared phase string; the bottom arm applies φ₁ + φ₂ so `w1` stays bright.
    FixedSecret,
    /// Corner phases drawn from {0, π} and revealed after detection; no
    /// bottom-arm compensation, so the bright port follows the phases.
    QrngBinary,
}

/// Per-herald corner phases (φ₁,ⱼ, φ₂,ⱼ).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseSchedule {
    pub mode: PhaseMode,
    pub phases: Vec<(f64, f64)>,
    /// Delay (ns) after detection at which the phases are published.
    pub broadcast_delay: f64,
}

impl PhaseSchedule {
    pub fn from_pairs(
        mode: PhaseMode,
        pairs: Vec<(f64, f64)>,
        broadcast_delay: f64,
    ) -> Result<Self, InterferometerError> {
        let mut phases = Vec::with_capacity(pairs.len());
        for (a, b) in pairs {
            let (a, b) = (reduce_phase(a), reduce_phase(b));
            if mode == PhaseMode::QrngBinary {
                binary_phase(a)?;
                binary_phase(b)?;
            }
            phases.push((a, b));
        }
        Ok(PhaseSchedule {
            mode,
            phases,
            broadcast_delay,
        })
    }

    /// The same secret pair for every herald.
    pub fn fixed_constant(len: usize, phi1: f64, phi2: f64) -> Self {
        PhaseSchedule {
            mode: PhaseMode::FixedSecret,
            phases: vec![(reduce_phase(phi1), reduce_phase(phi2)); len],
            broadcast_delay: 0.0,
        }
    }

    /// A pre-generated secret string, uniform on [0, 2π).
    pub fn fixed_random(len: usize, seed: u64) -> Self {
        use rand::Rng;
        let mut rng = seeded_rng(seed, SCHEDULE_STREAM);
        let phases = (0..len)
            .map(|_| {
                let a: f64 = rng.random::<f64>() * 2.0 * PI;
                let b: f64 = rng.random::<f64>() * 2.0 * PI;
                (reduce_phase(a), reduce_phase(b))
            })
            .collect();
        PhaseSchedule {
            mode: PhaseMode::FixedSecret,
            phases,
            broadcast_delay: 0.0,
        }
    }

    /// Independent fair {0, π} choices at each corner.
    pub fn qrng(len: usize, seed: u64, broadcast_delay: f64) -> Self {
        use rand::Rng;
        let mut rng = seeded_rng(seed, SCHEDULE_STREAM + 1);
        let pick = |bit: bool| if bit { PI } else { 0.0 };
        let phases = (0..len)
            .map(|_| (pick(rng.random()), pick(rng.random())))
            .collect();
        PhaseSchedule {
            mode: PhaseMode::QrngBinary,
            phases,
            broadcast_delay,
        }
    }

    pub fn len(&self) -> usize {
        self.phases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phases.is_empty()
    }

    pub fn get(&self, index: usize) -> Option<(f64, f64)> {
        self.phases.get(index).copied()
    }
}

/// `true` for π, `false` for 0 (mod 2π, to 1e-9 rad).
pub fn binary_phase(phase: f64) -> Result<bool, InterferometerError> {
    let r = reduce_phase(phase);
    const TOL: f64 = 1e-9;
    if r < TOL || 2.0 * PI - r < TOL {
        Ok(false)
    } else if (r - PI).abs() < TOL {
        Ok(true)
    } else {
        Err(InterferometerError::NonBinaryPhase(phase))
    }
}

/// Expected photon counts per herald at each output port.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PortCounts {
    pub w1: f64,
    pub w2: f64,
}

impl PortCounts {
    pub fn total(&self) -> f64 {
        self.w1 + self.w2
    }
}

fn erf(x: f64) -> f64 {
    libm::erf(x)
}

/// I₀ = Erf(π T_R / √(2β)).
pub fn window_count_normal(beta: f64, window: DetectorWindow) -> f64 {
    erf(PI * window.resolving_time / (2.0 * beta).sqrt())
}

/// Fence blocked: the surviving bottom-arm half splits evenly.
pub fn window_count_block(i0: f64) -> PortCounts {
    PortCounts {
        w1: i0 / 4.0,
        w2: i0 / 4.0,
    }
}

/// ξ = 2π c Δ / λ, unreduced.
pub fn xi_from_delta(delta: f64, wavelength_nm: f64) -> f64 {
    2.0 * PI * units::SPEED_OF_LIGHT_MM_PER_NS * delta / (wavelength_nm * 1e-6)
}

/// Counts when the fence amplitude arrives `delta` late with an extra
/// phase `fence_phase` relative to the bottom arm.
///
/// The cross term carries `cos(π Δ ω_p − fence_phase)`; `w2` differs only
/// in its sign.
pub fn interference_counts(
    delta: f64,
    fence_phase: f64,
    beta: f64,
    pump_frequency: f64,
    window: DetectorWindow,
) -> PortCounts {
    let i0 = window_count_normal(beta, window);
    let scale = PI / (2.0 * beta).sqrt();
    let t = window.resolving_time;
    let e2 = erf(scale * (2.0 * delta + t)) - erf(scale * (2.0 * delta - t));
    let e1 = erf(scale * (delta + t)) - erf(scale * (delta - t));
    let envelope = (-PI * PI * delta * delta / (2.0 * beta)).exp();
    // reduce before taking the cosine so both terms of a large argument stay exact-ish
    let carrier = (PI * delta * pump_frequency).rem_euclid(2.0 * PI);
    let cross = 2.0 * envelope * (carrier - fence_phase.rem_euclid(2.0 * PI)).cos() * e1;
    let base = 2.0 * i0 + e2;
    PortCounts {
        w1: (base + cross) / 8.0,
        w2: (base - cross) / 8.0,
    }
}

/// Side intrusion of extra flight time Δ and extra phase ξ.
pub fn window_count_side_intrusion(
    delta: f64,
    xi: f64,
    beta: f64,
    pump_frequency: f64,
    window: DetectorWindow,
) -> PortCounts {
    interference_counts(delta, xi, beta, pump_frequency, window)
}

/// Length-matched cross intrusion: `(I₀/2)(1 ± cos(φ_int − φ_bypassed))`.
pub fn window_count_cross_intrusion(
    phi_int: f64,
    phi_bypassed: f64,
    beta: f64,
    window: DetectorWindow,
) -> PortCounts {
    let i0 = window_count_normal(beta, window);
    let c = (phi_int - phi_bypassed).cos();
    PortCounts {
        w1: i0 / 2.0 * (1.0 + c),
        w2: i0 / 2.0 * (1.0 - c),
    }
}

/// Mean bright-port fraction of a cross intrusion with φ_int uniform on
/// [0, 2π): the cosine averages out, leaving one half.
pub fn cross_intrusion_phase_average() -> f64 {
    0.5
}

/// The resent photon reaches the second splitter through one input only.
pub fn window_count_intercept_resend(i0: f64) -> PortCounts {
    PortCounts {
        w1: i0 / 2.0,
        w2: i0 / 2.0,
    }
}

/// Windowed `w1` count for the two-photon state of heralds `j` and `k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoPhotonCount {
    pub count_w1: f64,
    /// The herald separation is within √β of a multiple of Δ, the
    /// low-probability alignment a long-path amplitude would need to overlap
    /// a later photon.
    pub coincidence: bool,
}

/// Sum of the single-photon `w1` counts of heralds `j` and `k`, each in
/// its own window. No cross term survives once the heralds are ≥ √β apart.
pub fn two_photon_window_count(
    herald_j: &HeraldEvent,
    herald_k: &HeraldEvent,
    delta: f64,
    xi: f64,
    beta: f64,
    pump_frequency: f64,
    window: DetectorWindow,
) -> Result<TwoPhotonCount, InterferometerError> {
    let min_separation = beta.sqrt();
    let separation = (herald_j.time - herald_k.time).abs();
    if separation < min_separation {
        return Err(InterferometerError::HeraldsTooClose {
            separation,
            min_separation,
        });
    }
    let single = interference_counts(delta, xi, beta, pump_frequency, window).w1;
    let coincidence = delta > 0.0 && {
        let m = (separation / delta).round().max(1.0);
        (separation - m * delta).abs() < min_separation
    };
    Ok(TwoPhotonCount {
        count_w1: 2.0 * single,
        coincidence,
    })
}

/// β and pump frequency plus the phase convention; evaluates any scenario.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalyticModel {
    pub beta: f64,
    pub pump_frequency: f64,
    pub phase_mode: PhaseMode,
}

impl AnalyticModel {
    pub fn new(
        beta: f64,
        pump_frequency: f64,
        phase_mode: PhaseMode,
    ) -> Result<Self, InterferometerError> {
        if !(beta > 0.0) {
            return Err(SourceError::NonPositiveBeta(beta).into());
        }
        Ok(AnalyticModel {
            beta,
            pump_frequency,
            phase_mode,
        })
    }

    pub fn from_source(
        params: &SourceParams,
        phase_mode: PhaseMode,
    ) -> Result<Self, InterferometerError> {
        Self::new(params.beta()?, params.pump_frequency, phase_mode)
    }

    pub fn i0(&self, window: DetectorWindow) -> f64 {
        window_count_normal(self.beta, window)
    }

    /// Phase applied in the bottom arm for the given corner phases.
    pub fn bottom_phase(&self, phases: (f64, f64)) -> f64 {
        match self.phase_mode {
            PhaseMode::FixedSecret => phases.0 + phases.1,
            PhaseMode::QrngBinary => 0.0,
        }
    }

    /// Expected windowed counts for one herald carrying `phases`.
    pub fn port_counts(
        &self,
        scenario: &IntrusionScenario,
        window: DetectorWindow,
        phases: (f64, f64),
    ) -> PortCounts {
        let i0 = self.i0(window);
        let bottom = self.bottom_phase(phases);
        let (phi1, phi2) = phases;
        match *scenario {
            IntrusionScenario::Normal => {
                window_count_cross_intrusion(phi1 + phi2, bottom, self.beta, window)
            }
            IntrusionScenario::Block => window_count_block(i0),
            IntrusionScenario::SideIntrusion { delta, .. } => interference_counts(
                delta,
                scenario.xi() + phi1 + phi2 - bottom,
                self.beta,
                self.pump_frequency,
                window,
            ),
            IntrusionScenario::CrossIntrusion { phi_int, corner } => {
                let kept = match corner {
                    Corner::First => phi2,
                    Corner::Second => phi1,
                };
                window_count_cross_intrusion(phi_int + kept, bottom, self.beta, window)
            }
            IntrusionScenario::InterceptResend => window_count_intercept_resend(i0),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const OMEGA_P: f64 = 749_481.145;

    fn window() -> DetectorWindow {
        DetectorWindow::new(0.1).unwrap()
    }

    #[test]
    fn i0_at_sqrt_beta() {
        // erf(π/√2) at 40 digits
        let i0 = window_count_normal(0.01, window());
        assert!((i0 - 0.998_319_683_663_473_3).abs() < 1e-15);
    }

    #[test]
    fn i0_limits() {
        assert_eq!(window_count_normal(0.01, DetectorWindow::unbounded()), 1.0);
        assert!(window_count_normal(0.01, DetectorWindow::new(1e-12).unwrap()) < 1e-9);
        assert!(DetectorWindow::new(0.0).is_err());
        assert!(DetectorWindow::new(-1.0).is_err());
    }

    #[test]
    fn block_values() {
        assert_eq!(window_count_block(1.0), PortCounts { w1: 0.25, w2: 0.25 });
        assert_eq!(window_count_block(0.0).total(), 0.0);
    }

    #[test]
    fn xi_values() {
        assert_eq!(xi_from_delta(0.0, 400.0), 0.0);
        let one_wave = 400e-6 / units::SPEED_OF_LIGHT_MM_PER_NS;
        assert!((xi_from_delta(one_wave, 400.0) - 2.0 * PI).abs() < 1e-12);
        let xi = xi_from_delta(0.1, 400.0);
        assert!((xi / (2.0 * PI) - 74_948.1145).abs() < 1e-8);
    }

    #[test]
    fn side_intrusion_identity() {
        let c = window_count_side_intrusion(0.0, 0.0, 0.01, OMEGA_P, window());
        assert_eq!(c.w1, window_count_normal(0.01, window()));
        assert!(c.w2.abs() < 1e-16);
    }

    #[test]
    fn side_intrusion_frozen_values() {
        // 40-digit evaluations of the closed form with ξ from the 400 nm pump
        let cases = [
            (0.05, 0.509_512_075_162_995_5, 0.239_647_766_585_814_8),
            (0.1, 0.251_472_857_770_821_6, 0.248_107_063_145_046_7),
            (0.2, 0.249_579_920_916_713_6, 0.249_579_920_915_023),
        ];
        for (delta, w1, w2) in cases {
            let xi = xi_from_delta(delta, 400.0);
            let c = window_count_side_intrusion(delta, xi, 0.01, OMEGA_P, window());
            assert!((c.w1 - w1).abs() < 1e-9, "Δ={delta}: {} vs {w1}", c.w1);
            assert!((c.w2 - w2).abs() < 1e-9, "Δ={delta}: {} vs {w2}", c.w2);
        }
        let c = window_count_side_intrusion(0.05, 0.7, 0.01, OMEGA_P, window());
        assert!((c.w1 - 0.493_586_634_682_141_6).abs() < 1e-9);
        assert!((c.w2 - 0.255_573_207_066_668_7).abs() < 1e-9);
    }

    #[test]
    fn side_intrusion_plateau() {
        let i0 = window_count_normal(0.01, window());
        let mut delta = 0.4;
        while delta < 2.0 {
            let c = window_count_side_intrusion(delta, 1.3, 0.01, OMEGA_P, window());
            assert!((c.w1 - i0 / 4.0).abs() <= 1e-3);
            delta += 0.05;
        }
    }

    #[test]
    fn cross_intrusion_values() {
        let i0 = window_count_normal(0.01, window());
        let matched = window_count_cross_intrusion(1.1, 1.1, 0.01, window());
        assert_eq!(matched, PortCounts { w1: i0, w2: 0.0 });
        let opposite = window_count_cross_intrusion(PI, 0.0, 0.01, window());
        assert!(opposite.w1.abs() < 1e-16 && (opposite.w2 - i0).abs() < 1e-16);
        let binary_avg =
            (window_count_cross_intrusion(0.0, 0.0, 0.01, DetectorWindow::unbounded()).w1
                + window_count_cross_intrusion(PI, 0.0, 0.01, DetectorWindow::unbounded()).w1)
                / 2.0;
        assert!((binary_avg - 0.5).abs() < 1e-15);
        assert_eq!(cross_intrusion_phase_average(), 0.5);
    }

    #[test]
    fn cross_intrusion_average_by_sampling() {
        let n = 10_000;
        let avg = (0..n)
            .map(|i| {
                let phi = 2.0 * PI * (i as f64 + 0.5) / n as f64;
                window_count_cross_intrusion(phi, 0.4, 0.01, DetectorWindow::unbounded()).w1
            })
            .sum::<f64>()
            / n as f64;
        assert!((avg - 0.5).abs() < 1e-3);
    }

    #[test]
    fn intercept_resend_values() {
        assert_eq!(
            window_count_intercept_resend(1.0),
            PortCounts { w1: 0.5, w2: 0.5 }
        );
        let c = window_count_intercept_resend(0.9983);
        assert!((c.w1 - 0.49915).abs() < 1e-15 && (c.w2 - 0.49915).abs() < 1e-15);
    }

    #[test]
    fn two_photon_counts() {
        let j = HeraldEvent {
            index: 1,
            time: 5.0,
        };
        let k = HeraldEvent {
            index: 0,
            time: 2.0,
        };
        let full =
            two_photon_window_count(&j, &k, 0.0, 0.0, 0.01, OMEGA_P, DetectorWindow::unbounded())
                .unwrap();
        assert_eq!(full.count_w1, 2.0);
        assert!(!full.coincidence);
        let std = two_photon_window_count(&j, &k, 0.0, 0.0, 0.01, OMEGA_P, window()).unwrap();
        assert_eq!(std.count_w1, 2.0 * window_count_normal(0.01, window()));
        // separation equals Δ: additive, but flagged
        let aligned = two_photon_window_count(&j, &k, 3.0, 0.0, 0.01, OMEGA_P, window()).unwrap();
        assert!(aligned.coincidence);
        let close = HeraldEvent {
            index: 2,
            time: 5.05,
        };
        assert!(matches!(
            two_photon_window_count(&j, &close, 0.0, 0.0, 0.01, OMEGA_P, window()),
            Err(InterferometerError::HeraldsTooClose { .. })
        ));
    }

    #[test]
    fn geometry_checks() {
        let g = PerimeterGeometry::balanced(10.0, 20.0, 10.0).unwrap();
        g.check_balanced().unwrap();
        assert!((g.t_bottom() - 40.0 / 0.299_792_458).abs() < 1e-9);
        assert!((g.t_fence() - g.t_bottom()).abs() < 1e-9);
        let off = PerimeterGeometry::new(10.0, 20.0, 10.0, 40.001).unwrap();
        assert!(matches!(
            off.check_balanced(),
            Err(InterferometerError::Unbalanced { .. })
        ));
        assert!(PerimeterGeometry::new(0.0, 1.0, 1.0, 2.0).is_err());
    }

    #[test]
    fn schedules() {
        let q = PhaseSchedule::qrng(1000, 4, 50.0);
        assert_eq!(q, PhaseSchedule::qrng(1000, 4, 50.0));
        assert!(q
            .phases
            .iter()
            .all(|&(a, b)| binary_phase(a).is_ok() && binary_phase(b).is_ok()));
        let ones = q.phases.iter().filter(|p| p.0 == PI).count();
        assert!((400..600).contains(&ones));
        assert!(matches!(
            PhaseSchedule::from_pairs(PhaseMode::QrngBinary, vec![(0.0, 1.0)], 0.0),
            Err(InterferometerError::NonBinaryPhase(_))
        ));
        let wrapped =
            PhaseSchedule::from_pairs(PhaseMode::QrngBinary, vec![(-PI, 2.0 * PI)], 0.0).unwrap();
        assert_eq!(binary_phase(wrapped.phases[0].0), Ok(true));
        assert_eq!(binary_phase(wrapped.phases[0].1), Ok(false));
    }

    #[test]
    fn model_normal_and_qrng() {
        let fixed = AnalyticModel::new(0.01, OMEGA_P, PhaseMode::FixedSecret).unwrap();
        let i0 = fixed.i0(window());
        let c = fixed.port_counts(&IntrusionScenario::Normal, window(), (0.3, 2.9));
        assert!((c.w1 - i0).abs() < 1e-15 && c.w2.abs() < 1e-15);
        let qrng = AnalyticModel::new(0.01, OMEGA_P, PhaseMode::QrngBinary).unwrap();
        for (phases, bright) in [
            ((0.0, 0.0), true),
            ((PI, PI), true),
            ((0.0, PI), false),
            ((PI, 0.0), false),
        ] {
            let c = qrng.port_counts(&IntrusionScenario::Normal, window(), phases);
            let (hi, lo) = if bright { (c.w1, c.w2) } else { (c.w2, c.w1) };
            assert!((hi - i0).abs() < 1e-15 && lo.abs() < 1e-15, "{phases:?}");
        }
    }

    #[test]
    fn model_cross_intrusion_leaked_phase_is_silent() {
        let fixed = AnalyticModel::new(0.01, OMEGA_P, PhaseMode::FixedSecret).unwrap();
        let i0 = fixed.i0(window());
        let leaked = IntrusionScenario::CrossIntrusion {
            phi_int: 0.8,
            corner: Corner::First,
        };
        let c = fixed.port_counts(&leaked, window(), (0.8, 2.0));
        assert!((c.w1 - i0).abs() < 1e-15);
        let c = fixed.port_counts(&leaked, window(), (0.8 + PI, 2.0));
        assert!((c.w2 - i0).abs() < 1e-15);
    }

    #[test]
    fn scenario_validation() {
        assert!(IntrusionScenario::side_intrusion(-0.1, 400.0)
            .validate()
            .is_err());
        assert!(IntrusionScenario::side_intrusion(0.1, 0.0)
            .validate()
            .is_err());
        assert!(IntrusionScenario::SideIntrusion {
            delta: 0.1,
            xi_override: Some(0.2),
            xi_wavelength_nm: 0.0
        }
        .validate()
        .is_ok());
        let s: IntrusionScenario =
            serde_json::from_str(r#"{"kind":"cross_intrusion","phi_int":1.0,"corner":"first"}"#)
                .unwrap();
        assert_eq!(
            s,
            IntrusionScenario::CrossIntrusion {
                phi_int: 1.0,
                corner: Corner::First
            }
        );
    }

    proptest! {
        #[test]
        fn cross_intrusion_conserves(phi in -10.0f64..10.0, bypassed in 0.0f64..6.3) {
            let c = window_count_cross_intrusion(phi, bypassed, 0.01, window());
            let i0 = window_count_normal(0.01, window());
            prop_assert!((c.total() - i0).abs() <= 4.0 * f64::EPSILON);
        }

        #[test]
        fn side_intrusion_port_sum(delta in 0.0f64..0.5, xi in -7.0f64..7.0, wp in 1e3f64..1e6) {
            let c = window_count_side_intrusion(delta, xi, 0.01, wp, window());
            let i0 = window_count_normal(0.01, window());
            let s = PI / 0.02f64.sqrt();
            let e2 = libm::erf(s * (2.0 * delta + 0.1)) - libm::erf(s * (2.0 * delta - 0.1));
            prop_assert!((c.total() - (2.0 * i0 + e2) / 4.0).abs() < 1e-14);
            prop_assert!(c.w1 >= -1e-15 && c.w2 >= -1e-15);
        }
    }
}
