//! Physical constants and unit conversions.
//!
//! Energies are electron-volts, delays attoseconds (1 as = 1e-3 fs), delay
//! axes femtoseconds, momenta Hartree atomic units.

use crate::real::{real, Real};

/// hbar in eV * fs.
pub const HBAR_EV_FS: f64 = 0.6582119569;
/// hbar in eV * as.
pub const HBAR_EV_AS: f64 = 658.2119569;
/// h * c in eV * nm.
pub const HC_EV_NM: f64 = 1239.8419843320026;
/// One Hartree in eV.
pub const HARTREE_EV: f64 = 27.211386245988;

/// Photon energy (eV) of light with the given vacuum wavelength (nm).
pub fn photon_energy_ev<R: Real>(wavelength_nm: R) -> R {
    real::<R>(HC_EV_NM) / wavelength_nm
}

/// Electron momentum k (atomic units) at kinetic energy `e_ev` > 0.
pub fn electron_momentum_au<R: Real>(e_ev: R) -> R {
    (real::<R>(2.0) * e_ev / real::<R>(HARTREE_EV)).sqrt()
}

/// Angular frequency (rad/fs) of a photon of energy `omega_ev`.
pub fn angular_frequency_per_fs<R: Real>(omega_ev: R) -> R {
    omega_ev / real::<R>(HBAR_EV_FS)
}

/// Optical period (fs) of a photon of energy `omega_ev`.
pub fn optical_period_fs<R: Real>(omega_ev: R) -> R {
    crate::real::two_pi::<R>() * real::<R>(HBAR_EV_FS) / omega_ev
}

/// Group delay (attoseconds) from a spectral phase slope (rad/eV).
pub fn delay_as_from_slope<R: Real>(dphi_dev: R) -> R {
    real::<R>(HBAR_EV_AS) * dphi_dev
}

/// Phase (rad) accumulated by `2 omega` over a delay given in attoseconds.
pub fn two_omega_phase<R: Real>(omega_ev: R, delay_as: R) -> R {
    real::<R>(2.0) * omega_ev * delay_as / real::<R>(HBAR_EV_AS)
}
