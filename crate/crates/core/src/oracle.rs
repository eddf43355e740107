//! Brute-force evaluation of the windowed counts.
//!
//! Each herald's wavepacket is pushed through both beam splitters as a
//! complex amplitude on a time grid: the bottom copy and the delayed,
//! phase-shifted fence copy are superposed at the second splitter, squared,
//! and integrated over the detector window with the trapezoid rule. Nothing
//! here calls `erf`, so agreement with [`crate::interferometer`] checks the
//! closed forms from an independent direction.

use num_complex::Complex64;
use std::f64::consts::FRAC_1_SQRT_2;

use crate::interferometer::{
    AnalyticModel, Corner, DetectorWindow, InterferometerError, IntrusionScenario,
    PerimeterGeometry, PhaseMode, PortCounts,
};
use crate::source::{HeraldEvent, Wavepacket};

const MIN_POINTS_PER_WIDTH: usize = 64;
/// Padding, in units of √β, for integrals over all time.
const FULL_TIME_PAD: f64 = 6.0;

/// `((x + i y)/√2, (y + i x)/√2)`: both splitters share this transform.
fn beam_splitter(x: Complex64, y: Complex64) -> (Complex64, Complex64) {
    let i = Complex64::i();
    ((x + i * y) * FRAC_1_SQRT_2, (y + i * x) * FRAC_1_SQRT_2)
}

/// One pure-state branch of the light reaching the second splitter.
struct Branch {
    weight: f64,
    /// Coefficient multiplying the bottom-arm copy ψ(x) at the `g` input.
    bottom: Complex64,
    /// Coefficient multiplying the fence copy ψ(x − delay) at the `u3` input.
    fence: Complex64,
}

struct Propagation {
    wavepacket: Wavepacket,
    fence_delay: f64,
    branches: Vec<Branch>,
}

impl Propagation {
    fn build(
        scenario: &IntrusionScenario,
        model: &AnalyticModel,
        geometry: &PerimeterGeometry,
        phases: (f64, f64),
    ) -> Result<Self, InterferometerError> {
        scenario.validate()?;
        let wavepacket = Wavepacket::new(model.beta, model.pump_frequency, 0.0)?;
        let (phi1, phi2) = phases;
        let bottom_phase = match model.phase_mode {
            PhaseMode::FixedSecret => phi1 + phi2,
            PhaseMode::QrngBinary => 0.0,
        };
        let imbalance = geometry.t_fence() - geometry.t_bottom();

        // amplitudes leaving the first splitter for a photon entering at s
        let (u1, g) = beam_splitter(Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0));
        let bottom = Complex64::from_polar(1.0, bottom_phase) * g;
        let fence_through = |phase: f64| Complex64::from_polar(1.0, phase) * u1;

        let mut fence_delay = imbalance;
        let branches = match *scenario {
            IntrusionScenario::Normal => vec![Branch {
                weight: 1.0,
                bottom,
                fence: fence_through(phi1 + phi2),
            }],
            IntrusionScenario::Block => vec![Branch {
                weight: 1.0,
                bottom,
                fence: Complex64::new(0.0, 0.0),
            }],
            IntrusionScenario::SideIntrusion { delta, .. } => {
                fence_delay += delta;
                vec![Branch {
                    weight: 1.0,
                    bottom,
                    fence: fence_through(phi1 + phi2 + scenario.xi()),
                }]
            }
            IntrusionScenario::CrossIntrusion { phi_int, corner } => {
                let kept = match corner {
                    Corner::First => phi2,
                    Corner::Second => phi1,
                };
                vec![Branch {
                    weight: 1.0,
                    bottom,
                    fence: fence_through(phi_int + kept),
                }]
            }
            IntrusionScenario::InterceptResend => {
                // The intruder's measurement collapses the photon into one
                // arm with probability ½ each; a detected fence photon is
                // replaced by an identical one, an empty fence by vacuum.
                let norm = 1.0 / FRAC_1_SQRT_2;
                vec![
                    Branch {
                        weight: 0.5,
                        bottom: bottom * norm,
                        fence: Complex64::new(0.0, 0.0),
                    },
                    Branch {
                        weight: 0.5,
                        bottom: Complex64::new(0.0, 0.0),
                        fence: fence_through(phi1 + phi2) * norm,
                    },
                ]
            }
        };
        Ok(Propagation {
            wavepacket,
            fence_delay,
            branches,
        })
    }

    /// Flux density at (w1, w2) a time `x` after the bright-port arrival.
    fn flux(&self, x: f64) -> (f64, f64) {
        let psi_bottom = self.wavepacket.amplitude_at_offset(x);
        let psi_fence = self.wavepacket.amplitude_at_offset(x - self.fence_delay);
        self.branches.iter().fold((0.0, 0.0), |(f1, f2), b| {
            let (w1, w2) = beam_splitter(b.bottom * psi_bottom, b.fence * psi_fence);
            (f1 + b.weight * w1.norm_sqr(), f2 + b.weight * w2.norm_sqr())
        })
    }

    fn span(&self, window: DetectorWindow) -> (f64, f64) {
        if window.is_unbounded() {
            let pad = FULL_TIME_PAD * self.wavepacket.beta.sqrt();
            (
                self.fence_delay.min(0.0) - pad,
                self.fence_delay.max(0.0) + pad,
            )
        } else {
            window.bounds(0.0)
        }
    }
}

fn trapezoid<F: FnMut(f64) -> (f64, f64)>(a: f64, b: f64, n: usize, mut f: F) -> (f64, f64) {
    let h = (b - a) / n as f64;
    let (mut s1, mut s2) = (0.0, 0.0);
    for i in 0..=n {
        let w = if i == 0 || i == n { 0.5 } else { 1.0 };
        let (v1, v2) = f(a + h * i as f64);
        s1 += w * v1;
        s2 += w * v2;
    }
    (s1 * h, s2 * h)
}

fn intervals(span: f64, width: f64, points_per_width: usize) -> usize {
    ((span / width) * points_per_width as f64).ceil().max(1.0) as usize
}

/// Numeric port counts for an arbitrary phase setting.
pub fn numeric_window_count_with_phases(
    scenario: &IntrusionScenario,
    model: &AnalyticModel,
    geometry: &PerimeterGeometry,
    window: DetectorWindow,
    phases: (f64, f64),
    grid_resolution: usize,
) -> Result<PortCounts, InterferometerError> {
    if grid_resolution < MIN_POINTS_PER_WIDTH {
        return Err(InterferometerError::GridTooCoarse(grid_resolution));
    }
    let prop = Propagation::build(scenario, model, geometry, phases)?;
    let (a, b) = prop.span(window);
    let n = intervals(b - a, model.beta.sqrt(), grid_resolution);
    let (w1, w2) = trapezoid(a, b, n, |x| prop.flux(x));
    Ok(PortCounts { w1, w2 })
}

/// Numeric port counts with zero corner phases and a compensated bottom arm.
///
/// `grid_resolution` is the number of grid intervals per √β.
pub fn numeric_window_count(
    scenario: &IntrusionScenario,
    beta: f64,
    pump_frequency: f64,
    geometry: &PerimeterGeometry,
    window: DetectorWindow,
    grid_resolution: usize,
) -> Result<PortCounts, InterferometerError> {
    let model = AnalyticModel::new(beta, pump_frequency, PhaseMode::FixedSecret)?;
    numeric_window_count_with_phases(
        scenario,
        &model,
        geometry,
        window,
        (0.0, 0.0),
        grid_resolution,
    )
}

/// Integral over all time of the two-photon `w1` flux
/// `‖w1(t)Ψ_j‖² + ‖w1(t)Ψ_k‖²` under a side intrusion (Δ, ξ).
#[allow(clippy::too_many_arguments)]
pub fn numeric_two_photon_total(
    herald_j: &HeraldEvent,
    herald_k: &HeraldEvent,
    delta: f64,
    xi: f64,
    beta: f64,
    pump_frequency: f64,
    geometry: &PerimeterGeometry,
    grid_resolution: usize,
) -> Result<f64, InterferometerError> {
    if grid_resolution < MIN_POINTS_PER_WIDTH {
        return Err(InterferometerError::GridTooCoarse(grid_resolution));
    }
    let min_separation = beta.sqrt();
    let separation = (herald_j.time - herald_k.time).abs();
    if separation < min_separation {
        return Err(InterferometerError::HeraldsTooClose {
            separation,
            min_separation,
        });
    }
    let model = AnalyticModel::new(beta, pump_frequency, PhaseMode::FixedSecret)?;
    let scenario = IntrusionScenario::SideIntrusion {
        delta,
        xi_override: Some(xi),
        xi_wavelength_nm: 0.0,
    };
    let prop = Propagation::build(&scenario, &model, geometry, (0.0, 0.0))?;
    // shared time axis, origin at herald j's bright-port arrival
    let offset_k = herald_k.time - herald_j.time;
    let (lo, hi) = prop.span(DetectorWindow::unbounded());
    let a = lo + offset_k.min(0.0);
    let b = hi + offset_k.max(0.0);
    let n = intervals(b - a, min_separation, grid_resolution);
    let (total, _) = trapezoid(a, b, n, |x| {
        let j = prop.flux(x).0;
        let k = prop.flux(x - offset_k).0;
        (j + k, 0.0)
    });
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interferometer::{window_count_normal, window_count_side_intrusion, xi_from_delta};

    const OMEGA_P: f64 = 749_481.145;

    fn geometry() -> PerimeterGeometry {
        PerimeterGeometry::balanced(100.0, 50.0, 100.0).unwrap()
    }

    #[test]
    fn rejects_coarse_grid() {
        let w = DetectorWindow::new(0.1).unwrap();
        assert_eq!(
            numeric_window_count(
                &IntrusionScenario::Normal,
                0.01,
                OMEGA_P,
                &geometry(),
                w,
                32
            ),
            Err(InterferometerError::GridTooCoarse(32))
        );
    }

    #[test]
    fn normal_all_flux_bright_port() {
        let w = DetectorWindow::new(0.1).unwrap();
        let c = numeric_window_count(
            &IntrusionScenario::Normal,
            0.01,
            OMEGA_P,
            &geometry(),
            w,
            2048,
        )
        .unwrap();
        let i0 = window_count_normal(0.01, w);
        assert!((c.w1 - i0).abs() < 1e-6 * i0);
        assert!(c.w2 < 1e-12);
    }

    #[test]
    fn full_time_normalisation() {
        let c = numeric_window_count(
            &IntrusionScenario::Normal,
            0.01,
            OMEGA_P,
            &geometry(),
            DetectorWindow::unbounded(),
            256,
        )
        .unwrap();
        assert!((c.total() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn block_and_resend_split() {
        let w = DetectorWindow::new(0.1).unwrap();
        let i0 = window_count_normal(0.01, w);
        let b = numeric_window_count(
            &IntrusionScenario::Block,
            0.01,
            OMEGA_P,
            &geometry(),
            w,
            2048,
        )
        .unwrap();
        assert!((b.w1 - i0 / 4.0).abs() < 1e-7 && (b.w2 - i0 / 4.0).abs() < 1e-7);
        let r = numeric_window_count(
            &IntrusionScenario::InterceptResend,
            0.01,
            OMEGA_P,
            &geometry(),
            w,
            2048,
        )
        .unwrap();
        assert!((r.w1 - i0 / 2.0).abs() < 1e-7 && (r.w2 - i0 / 2.0).abs() < 1e-7);
    }

    #[test]
    fn side_intrusion_agrees_with_closed_form() {
        let w = DetectorWindow::new(0.1).unwrap();
        for &delta in &[0.0, 0.013, 0.05, 0.1, 0.17, 0.3] {
            let scenario = IntrusionScenario::side_intrusion(delta, 400.0);
            let numeric =
                numeric_window_count(&scenario, 0.01, OMEGA_P, &geometry(), w, 4096).unwrap();
            let closed =
                window_count_side_intrusion(delta, xi_from_delta(delta, 400.0), 0.01, OMEGA_P, w);
            assert!(
                (numeric.w1 - closed.w1).abs() < 1e-6 * closed.w1.max(1e-9),
                "Δ={delta}"
            );
            assert!(
                (numeric.w2 - closed.w2).abs() < 1e-6 * closed.w2.max(1e-9),
                "Δ={delta}"
            );
        }
    }

    #[test]
    fn two_photon_total_is_two() {
        let j = HeraldEvent {
            index: 1,
            time: 3.0,
        };
        let k = HeraldEvent {
            index: 0,
            time: 1.0,
        };
        let total =
            numeric_two_photon_total(&j, &k, 0.0, 0.0, 0.01, OMEGA_P, &geometry(), 256).unwrap();
        assert!((total - 2.0).abs() < 1e-9);
    }
}
