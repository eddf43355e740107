//! Physical constants, unit conversions and seeded generators.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Speed of light in millimetres per nanosecond.
pub const SPEED_OF_LIGHT_MM_PER_NS: f64 = 299.792458;

/// Speed of light in metres per nanosecond.
pub const SPEED_OF_LIGHT_M_PER_NS: f64 = 0.299792458;

/// Default Gaussian fit constant for `sinc(x) ≈ exp(-γ x²)`.
pub const SINC_GAUSSIAN_FACTOR: f64 = 0.193;

const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

/// Ordinary frequency (cycles/ns) of light with the given vacuum wavelength in nm.
pub fn frequency_from_wavelength_nm(wavelength_nm: f64) -> f64 {
    SPEED_OF_LIGHT_MM_PER_NS / (wavelength_nm * 1e-6)
}

pub fn wavelength_nm_from_frequency(frequency: f64) -> f64 {
    SPEED_OF_LIGHT_MM_PER_NS / frequency * 1e6
}

/// Reduce a phase into `[0, 2π)`.
pub fn reduce_phase(phase: f64) -> f64 {
    let r = phase.rem_euclid(TWO_PI);
    // rem_euclid can round up to exactly 2π for tiny negative inputs
    if r >= TWO_PI {
        0.0
    } else {
        r
    }
}

/// Independent, reproducible generator for one purpose (`stream`) of a run.
pub fn seeded_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
