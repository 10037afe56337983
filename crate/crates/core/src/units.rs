//! Unit conventions and physical constants.
//!
//! Internal units are fixed: energies in eV (phonon energies in meV), lengths
//! in Å, masses in amu, times in fs. Every conversion in the crate goes
//! through this table.

/// Reduced Planck constant, meV·fs.
pub const HBAR_MEV_FS: f64 = 658.2119569;

/// 1 eV/(amu·Å²) expressed in (rad/fs)².
pub const EV_PER_AMU_A2_IN_FS2: f64 = 9.64853322e-3;

/// Reduced Planck constant in amu·Å²/fs.
pub const HBAR_AMU_A2_PER_FS: f64 = HBAR_MEV_FS * 1.0e-3 * EV_PER_AMU_A2_IN_FS2;

/// e²/(4πε₀) in eV·Å.
pub const COULOMB_EV_A: f64 = 14.399645;

/// Madelung constant of a simple-cubic lattice of point charges.
pub const MADELUNG_SIMPLE_CUBIC: f64 = 2.8373;

pub const MEV_PER_EV: f64 = 1.0e3;

/// Isotope-averaged atomic masses (amu) used when a structure omits them.
pub fn default_mass(species: &str) -> Option<f64> {
    let m = match species {
        "H" => 1.008,
        "B" => 10.81,
        "C" => 12.011,
        "N" => 14.007,
        "O" => 15.999,
        "Al" => 26.982,
        "Si" => 28.085,
        "P" => 30.974,
        "Ga" => 69.723,
        "Ge" => 72.630,
        _ => return None,
    };
    Some(m)
}

/// Eigenvalue of the mass-weighted Hessian (eV/(amu·Å²)) to ℏω in meV.
///
/// Negative eigenvalues map to negative energies (imaginary modes).
pub fn eigenvalue_to_mev(lambda: f64) -> f64 {
    let w = (lambda.abs() * EV_PER_AMU_A2_IN_FS2).sqrt() * HBAR_MEV_FS;
    if lambda < 0.0 {
        -w
    } else {
        w
    }
}

/// ℏω in meV to angular frequency in rad/fs.
pub fn mev_to_rad_per_fs(e: f64) -> f64 {
    e / HBAR_MEV_FS
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hbar_in_mechanical_units() {
        // 0.6582119569 eV·fs × 9.64853322e-3 amu·Å²/(fs²·eV)
        assert!((HBAR_AMU_A2_PER_FS - 6.350_779_931_950_858_5e-3).abs() < 1e-15);
    }

    #[test]
    fn imaginary_sign_convention() {
        assert!(eigenvalue_to_mev(-1.0) < 0.0);
        assert_eq!(eigenvalue_to_mev(-1.0), -eigenvalue_to_mev(1.0));
        assert_eq!(eigenvalue_to_mev(0.0), 0.0);
    }
}
