//! Unit conventions.
//!
//! Everything internal is in Hartree atomic units; conversion to wavenumbers
//! happens only at I/O boundaries.

/// Wavenumbers per hartree.
pub const HARTREE_TO_INV_CM: f64 = 219474.6313632;

pub fn hartree_to_inv_cm(energy: f64) -> f64 {
    energy * HARTREE_TO_INV_CM
}

pub fn inv_cm_to_hartree(wavenumber: f64) -> f64 {
    wavenumber / HARTREE_TO_INV_CM
}
