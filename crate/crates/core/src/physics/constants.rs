//! Physical constants (CODATA 2018) and the unit system used throughout: lengths in nm, energies in eV.

pub const HBAR_JS: f64 = 1.054_571_817e-34;
pub const ELECTRON_MASS_KG: f64 = 9.109_383_701_5e-31;
pub const ELECTRON_VOLT_J: f64 = 1.602_176_634e-19;
pub const NM2_PER_M2: f64 = 1e18;

/// hbar^2 / (2 m_e) expressed in eV nm^2 (about 0.0381).
pub const HBAR2_OVER_2ME: f64 = HBAR_JS * HBAR_JS / (2.0 * ELECTRON_MASS_KG) / ELECTRON_VOLT_J * NM2_PER_M2;

/// Euler-Mascheroni constant.
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// m / hbar^2 in eV^-1 nm^-2 for an effective mass given in units of m_e.
#[inline]
pub fn mass_over_hbar2(m_eff: f64) -> f64 {
    m_eff / (2.0 * HBAR2_OVER_2ME)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kinetic_constant_matches_tabulated_value() {
        // 3.80998 eV A^2
        assert!((HBAR2_OVER_2ME - 0.038_099_821).abs() < 1e-8);
    }
}
