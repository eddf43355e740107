//! Heralded single-photon source.
//!
//! The signal photon of a down-converted pair is injected into the
//! interferometer when its idler partner is detected. With a cw pump, a
//! Gaussian idler pass band of width σ and the Gaussian fit to the
//! phase-matching sinc, the injected photon is a Gaussian wavepacket
//! carrying the degenerate frequency `ω_p / 2`. Its temporal width is set
//! by
//!
//! ```text
//! β = 1/σ² − γ 𝓛² J² / 4
//! ```
//!
//! and the flux it delivers at the bright port is
//! `(π 𝓜² / β) exp(−2π² (t_c − t)² / β)` with `𝓜 = (2β/π)^{1/4}`.

use num_complex::Complex64;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

use crate::units::{self, seeded_rng};

/// RNG stream used for the herald arrival process.
const HERALD_STREAM: u64 = 0x4845_5241_4c44;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SourceError {
    #[error("β = {0} ns² is not positive; the Gaussian wavepacket approximation breaks down")]
    NonPositiveBeta(f64),
    #[error("invalid source parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
}

/// Down-conversion, pump and idler-filter parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceParams {
    /// Pump frequency ω_p in cycles per ns.
    pub pump_frequency: f64,
    /// Pump vacuum wavelength in nm; must agree with `pump_frequency`.
    pub pump_wavelength_nm: f64,
    /// Idler pass-band width σ in cycles per ns.
    pub idler_bandwidth: f64,
    /// Crystal length 𝓛 in mm.
    pub crystal_length_mm: f64,
    /// Group-velocity mismatch J = k'_idler − k'_signal in ns per mm.
    pub group_velocity_mismatch: f64,
    /// γ in `sinc(x) ≈ exp(−γ x²)`.
    pub sinc_gaussian_factor: f64,
    /// Mean heralds per ns before separation thinning.
    pub herald_rate: f64,
    /// Treat the crystal delay t′ as removed by external compensators.
    pub compensate_delay: bool,
}

impl SourceParams {
    /// Parameters for a thin (𝓛 = 0) crystal pumped at `pump_wavelength_nm`.
    pub fn from_pump_wavelength(
        pump_wavelength_nm: f64,
        idler_bandwidth: f64,
        herald_rate: f64,
    ) -> Result<Self, SourceError> {
        let params = SourceParams {
            pump_frequency: units::frequency_from_wavelength_nm(pump_wavelength_nm),
            pump_wavelength_nm,
            idler_bandwidth,
            crystal_length_mm: 0.0,
            group_velocity_mismatch: 0.0,
            sinc_gaussian_factor: units::SINC_GAUSSIAN_FACTOR,
            herald_rate,
            compensate_delay: true,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn with_crystal(
        mut self,
        crystal_length_mm: f64,
        group_velocity_mismatch: f64,
    ) -> Result<Self, SourceError> {
        self.crystal_length_mm = crystal_length_mm;
        self.group_velocity_mismatch = group_velocity_mismatch;
        self.validate()?;
        Ok(self)
    }

    /// Checks every field invariant, including β > 0.
    pub fn validate(&self) -> Result<(), SourceError> {
        fn invalid(name: &'static str, reason: impl Into<String>) -> SourceError {
            SourceError::InvalidParameter {
                name,
                reason: reason.into(),
            }
        }
        if !(self.pump_frequency > 0.0 && self.pump_frequency.is_finite()) {
            return Err(invalid("pump_frequency", "must be positive and finite"));
        }
        if !(self.pump_wavelength_nm > 0.0 && self.pump_wavelength_nm.is_finite()) {
            return Err(invalid("pump_wavelength", "must be positive and finite"));
        }
        let implied = units::frequency_from_wavelength_nm(self.pump_wavelength_nm);
        if ((implied - self.pump_frequency) / self.pump_frequency).abs() > 1e-9 {
            return Err(invalid(
                "pump_frequency",
                format!(
                    "{} cycles/ns disagrees with c/λ = {} for λ = {} nm",
                    self.pump_frequency, implied, self.pump_wavelength_nm
                ),
            ));
        }
        if !(self.crystal_length_mm >= 0.0 && self.crystal_length_mm.is_finite()) {
            return Err(invalid("crystal_length", "must be non-negative and finite"));
        }
        if !self.group_velocity_mismatch.is_finite() {
            return Err(invalid("group_velocity_mismatch", "must be finite"));
        }
        if !(self.sinc_gaussian_factor >= 0.0 && self.sinc_gaussian_factor.is_finite()) {
            return Err(invalid("sinc_gaussian_factor", "must be non-negative"));
        }
        if !(self.herald_rate > 0.0 && self.herald_rate.is_finite()) {
            return Err(invalid("herald_rate", "must be positive and finite"));
        }
        derive_beta(self).map(|_| ())
    }

    pub fn beta(&self) -> Result<f64, SourceError> {
        derive_beta(self)
    }

    /// Time offset of the wavepacket centre relative to the herald: t′, or
    /// zero when compensation is on.
    pub fn effective_delay(&self) -> f64 {
        if self.compensate_delay {
            0.0
        } else {
            compensation_delay(self)
        }
    }

    /// Normalised wavepacket injected by a herald at `herald_time`.
    pub fn wavepacket(&self, herald_time: f64) -> Result<Wavepacket, SourceError> {
        Wavepacket::new(
            self.beta()?,
            self.pump_frequency,
            herald_time + self.effective_delay(),
        )
    }
}

/// Squared temporal width β (ns²) of the heralded signal wavepacket.
pub fn derive_beta(params: &SourceParams) -> Result<f64, SourceError> {
    let sigma = params.idler_bandwidth;
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(SourceError::InvalidParameter {
            name: "idler_bandwidth",
            reason: format!("σ must be positive, got {sigma}"),
        });
    }
    let lj = params.crystal_length_mm * params.group_velocity_mismatch;
    let beta = 1.0 / (sigma * sigma) - params.sinc_gaussian_factor * lj * lj / 4.0;
    if beta > 0.0 {
        Ok(beta)
    } else {
        Err(SourceError::NonPositiveBeta(beta))
    }
}

/// Crystal-induced shift t′ = −𝓛J/(4π) of the wavepacket centre.
pub fn compensation_delay(params: &SourceParams) -> f64 {
    -params.crystal_length_mm * params.group_velocity_mismatch / (4.0 * PI)
}

/// 𝓜 = (2β/π)^{1/4}.
pub fn normalization_constant(beta: f64) -> Result<f64, SourceError> {
    if beta > 0.0 {
        Ok((2.0 * beta / PI).powf(0.25))
    } else {
        Err(SourceError::NonPositiveBeta(beta))
    }
}

/// Photon flux density (per ns) of a normalised wavepacket centred at `t_center`.
pub fn temporal_intensity(beta: f64, t_center: f64, t: f64) -> f64 {
    let m_sq = (2.0 * beta / PI).sqrt();
    let dt = t_center - t;
    PI * m_sq / beta * (-2.0 * PI * PI * dt * dt / beta).exp()
}

/// Complex temporal amplitude of one heralded signal photon.
///
/// `amplitude(t)` is `⟨vac| s(t) |Ψ_j⟩`, so `|amplitude(t)|²` is the flux
/// density and integrates to one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Wavepacket {
    pub beta: f64,
    pub pump_frequency: f64,
    pub center: f64,
    prefactor: f64,
}

impl Wavepacket {
    pub fn new(beta: f64, pump_frequency: f64, center: f64) -> Result<Self, SourceError> {
        let m = normalization_constant(beta)?;
        Ok(Wavepacket {
            beta,
            pump_frequency,
            center,
            prefactor: m * (PI / beta).sqrt(),
        })
    }

    /// Amplitude at `center + offset`. Taking the offset directly avoids
    /// cancellation when the centre is far from the origin.
    pub fn amplitude_at_offset(&self, offset: f64) -> Complex64 {
        // carrier at ω_p/2: exp(−2πi (ω_p/2)(t_c − t)) = exp(iπ ω_p offset)
        let envelope = self.prefactor * (-PI * PI * offset * offset / self.beta).exp();
        Complex64::from_polar(envelope, PI * self.pump_frequency * offset)
    }

    pub fn amplitude(&self, t: f64) -> Complex64 {
        self.amplitude_at_offset(t - self.center)
    }

    pub fn intensity(&self, t: f64) -> f64 {
        temporal_intensity(self.beta, self.center, t)
    }
}

/// One idler detection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeraldEvent {
    pub index: usize,
    /// Herald time t_j in ns.
    pub time: f64,
}

/// Poisson arrivals at `herald_rate`, keeping an arrival only if the raw
/// arrival before it is at least √β earlier. The accepted fraction is
/// `exp(−rate·√β)` and every accepted gap is ≥ √β.
struct HeraldProcess {
    rng: rand_chacha::ChaCha8Rng,
    gaps: Exp<f64>,
    min_gap: f64,
    last_raw: Option<f64>,
    now: f64,
    next_index: usize,
}

impl HeraldProcess {
    fn new(params: &SourceParams, seed: u64) -> Result<Self, SourceError> {
        params.validate()?;
        let gaps = Exp::new(params.herald_rate).map_err(|e| SourceError::InvalidParameter {
            name: "herald_rate",
            reason: e.to_string(),
        })?;
        Ok(HeraldProcess {
            rng: seeded_rng(seed, HERALD_STREAM),
            gaps,
            min_gap: params.beta()?.sqrt(),
            last_raw: None,
            now: 0.0,
            next_index: 0,
        })
    }

    /// Next accepted herald, or `None` once arrivals pass `horizon`.
    fn next_before(&mut self, horizon: f64) -> Option<HeraldEvent> {
        loop {
            self.now += self.gaps.sample(&mut self.rng);
            if self.now > horizon {
                return None;
            }
            let accept = match self.last_raw {
                None => true,
                Some(prev) => self.now - prev >= self.min_gap,
            };
            self.last_raw = Some(self.now);
            if accept {
                let event = HeraldEvent {
                    index: self.next_index,
                    time: self.now,
                };
                self.next_index += 1;
                return Some(event);
            }
        }
    }
}

/// Herald times in `(0, duration]`, sorted and at least √β apart.
pub fn sample_heralds(
    params: &SourceParams,
    duration: f64,
    seed: u64,
) -> Result<Vec<HeraldEvent>, SourceError> {
    let mut process = HeraldProcess::new(params, seed)?;
    if !(duration > 0.0) {
        return Ok(Vec::new());
    }
    let mut out = Vec::new();
    while let Some(event) = process.next_before(duration) {
        out.push(event);
    }
    Ok(out)
}

/// The first `count` heralds of the same process used by [`sample_heralds`].
pub fn sample_herald_count(
    params: &SourceParams,
    count: usize,
    seed: u64,
) -> Result<Vec<HeraldEvent>, SourceError> {
    let mut process = HeraldProcess::new(params, seed)?;
    Ok((0..count)
        .map_while(|_| process.next_before(f64::INFINITY))
        .collect())
}
