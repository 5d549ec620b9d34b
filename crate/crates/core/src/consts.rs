//! Physical constants (CODATA exact SI values where defined).

/// Speed of light, m/s.
pub const C: f64 = 299_792_458.0;
/// Reduced Planck constant, J·s.
pub const HBAR: f64 = 1.054_571_817e-34;
/// Boltzmann constant, J/K.
pub const K_B: f64 = 1.380_649e-23;

pub const TAU: f64 = std::f64::consts::TAU;
pub const PI: f64 = std::f64::consts::PI;

/// Photon energy ħω at vacuum wavelength `lambda` (m).
pub fn photon_energy(lambda: f64) -> f64 {
    HBAR * TAU * C / lambda
}
