//! Brute-force lattice reference for the LDOS.
//!
//! The surface band is discretised on a square tight-binding lattice with hard-wall edges,
//! `H = H0 + V`, and the retarded Green's function is formed either from the full eigen
//! decomposition (sum over states) or by inverting `omega + i eta - H` directly. Both routes are
//! capped at 64 x 64 sites.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::constants::HBAR2_OVER_2ME;
use super::greens::SurfaceModel;
use super::tmatrix::ImpuritySet;
use crate::error::{CoreError, Result};
use crate::field::{Extent, ScalarField2D};
use crate::linalg::{complex_inverse, symmetric_eigen};

pub const MAX_LATTICE_SITES: usize = 64 * 64;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatticeSpec {
    pub nx: usize,
    pub ny: usize,
    pub spacing_nm: f64,
    /// Lower-left corner of the covered window; site `(x, y)` sits at the centre of its cell.
    pub origin: (f64, f64),
}

impl LatticeSpec {
    pub fn square(n: usize, spacing_nm: f64) -> Self {
        LatticeSpec { nx: n, ny: n, spacing_nm, origin: (0.0, 0.0) }
    }

    pub fn sites(&self) -> usize {
        self.nx * self.ny
    }

    pub fn extent(&self) -> Extent {
        Extent {
            width_nm: self.nx as f64 * self.spacing_nm,
            height_nm: self.ny as f64 * self.spacing_nm,
            x0: self.origin.0,
            y0: self.origin.1,
        }
    }

    pub fn site_position(&self, site: usize) -> (f64, f64) {
        let (x, y) = (site % self.nx, site / self.nx);
        (self.origin.0 + (x as f64 + 0.5) * self.spacing_nm, self.origin.1 + (y as f64 + 0.5) * self.spacing_nm)
    }

    /// Site nearest to a physical position.
    pub fn nearest_site(&self, p: (f64, f64)) -> usize {
        let ix = (((p.0 - self.origin.0) / self.spacing_nm) - 0.5).round().clamp(0.0, (self.nx - 1) as f64) as usize;
        let iy = (((p.1 - self.origin.1) / self.spacing_nm) - 0.5).round().clamp(0.0, (self.ny - 1) as f64) as usize;
        iy * self.nx + ix
    }

    fn validate(&self) -> Result<()> {
        if self.nx < 2 || self.ny < 2 || !(self.spacing_nm > 0.0) {
            return Err(CoreError::Validation(format!("invalid lattice {self:?}")));
        }
        if self.sites() > MAX_LATTICE_SITES {
            return Err(CoreError::Resource(format!(
                "lattice {}x{} has {} sites; dense solve is capped at {MAX_LATTICE_SITES}",
                self.nx,
                self.ny,
                self.sites()
            )));
        }
        Ok(())
    }

    /// Nearest-neighbour hopping that reproduces the effective mass near the band bottom.
    pub fn hopping(&self, model: &SurfaceModel) -> f64 {
        HBAR2_OVER_2ME / (model.m_eff * self.spacing_nm * self.spacing_nm)
    }
}

/// Dense lattice Hamiltonian (row-major, eV). Point strengths `v` (eV nm^2) become on-site
/// energies `v / a^2` on the nearest site.
pub fn lattice_hamiltonian(spec: &LatticeSpec, imps: &ImpuritySet, model: &SurfaceModel) -> Result<Vec<f64>> {
    spec.validate()?;
    model.validate()?;
    imps.validate()?;
    let n = spec.sites();
    let t = spec.hopping(model);
    let mut h = vec![0.0; n * n];
    for y in 0..spec.ny {
        for x in 0..spec.nx {
            let i = y * spec.nx + x;
            h[i * n + i] = 4.0 * t - model.mu;
            if x + 1 < spec.nx {
                h[i * n + i + 1] = -t;
                h[(i + 1) * n + i] = -t;
            }
            if y + 1 < spec.ny {
                h[i * n + i + spec.nx] = -t;
                h[(i + spec.nx) * n + i] = -t;
            }
        }
    }
    for s in impurity_couplings(spec, imps) {
        h[s.0 * n + s.0] += s.1;
    }
    Ok(h)
}

/// `(site, on-site energy)` for every impurity.
pub fn impurity_couplings(spec: &LatticeSpec, imps: &ImpuritySet) -> Vec<(usize, f64)> {
    let area = spec.spacing_nm * spec.spacing_nm;
    imps.positions.iter().zip(&imps.strengths).map(|(&p, &v)| (spec.nearest_site(p), v / area)).collect()
}

fn to_field(spec: &LatticeSpec, diag_im: impl Iterator<Item = f64>) -> Result<ScalarField2D<f64>> {
    let area = spec.spacing_nm * spec.spacing_nm;
    let values = diag_im.map(|im| -im / (PI * area)).collect();
    ScalarField2D::new(spec.ny, spec.nx, values, spec.extent())
}

/// LDOS by the sum over eigenstates, `G_ii = sum_a |psi_a(i)|^2 / (omega - E_a + i eta)`.
pub fn spectral_ldos_oracle(spec: &LatticeSpec, imps: &ImpuritySet, model: &SurfaceModel) -> Result<ScalarField2D<f64>> {
    let h = lattice_hamiltonian(spec, imps, model)?;
    let n = spec.sites();
    let (energies, vectors) = symmetric_eigen(&h, n)?;
    let weights: Vec<Complex64> = energies.iter().map(|&e| 1.0 / Complex64::new(model.omega - e, model.eta)).collect();
    let mut diag = vec![Complex64::new(0.0, 0.0); n];
    for (a, w) in weights.iter().enumerate() {
        let psi = &vectors[a * n..(a + 1) * n];
        for (d, &c) in diag.iter_mut().zip(psi) {
            *d += w * (c * c);
        }
    }
    to_field(spec, diag.into_iter().map(|g| g.im))
}

/// Full retarded Green's matrix `(omega + i eta - H)^-1`, row-major.
pub fn lattice_green_matrix(spec: &LatticeSpec, imps: &ImpuritySet, model: &SurfaceModel) -> Result<Vec<Complex64>> {
    let h = lattice_hamiltonian(spec, imps, model)?;
    let n = spec.sites();
    let mut a: Vec<Complex64> = h.iter().map(|&v| Complex64::new(-v, 0.0)).collect();
    for i in 0..n {
        a[i * n + i] += Complex64::new(model.omega, model.eta);
    }
    complex_inverse(&a, n, "lattice resolvent")
}

/// LDOS from the diagonal of the resolvent `(omega + i eta - H)^-1`.
///
/// `H` couples only neighbouring rows of the lattice, so the resolvent is inverted row block
/// by row block: left- and right-connected Green's functions are built by Schur complements
/// and combined into the diagonal blocks. This is exact and costs `ny` small inversions
/// instead of one of size `nx * ny`.
pub fn resolvent_ldos(spec: &LatticeSpec, imps: &ImpuritySet, model: &SurfaceModel) -> Result<ScalarField2D<f64>> {
    let h = lattice_hamiltonian(spec, imps, model)?;
    let (n, m, rows) = (spec.sites(), spec.nx, spec.ny);
    let z = Complex64::new(model.omega, model.eta);
    // Block (r, c) of z - H, m x m row-major.
    let block = |r: usize, c: usize| -> Vec<Complex64> {
        let mut b = vec![Complex64::new(0.0, 0.0); m * m];
        for i in 0..m {
            for j in 0..m {
                let v = -h[(r * m + i) * n + c * m + j];
                b[i * m + j] = if r == c && i == j { z + v } else { Complex64::new(v, 0.0) };
            }
        }
        b
    };
    let mul = |a: &[Complex64], b: &[Complex64]| -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); m * m];
        for i in 0..m {
            for k in 0..m {
                let aik = a[i * m + k];
                for j in 0..m {
                    out[i * m + j] += aik * b[k * m + j];
                }
            }
        }
        out
    };
    // Self-energy of the rows on one side seen through the coupling blocks, `C g C'`.
    let sigma = |r: usize, other: usize, g: &[Complex64]| mul(&mul(&block(r, other), g), &block(other, r));
    let sub = |a: &mut [Complex64], b: &[Complex64]| a.iter_mut().zip(b).for_each(|(x, y)| *x -= y);
    let context = "lattice resolvent";

    let mut left: Vec<Vec<Complex64>> = Vec::with_capacity(rows);
    for r in 0..rows {
        let mut a = block(r, r);
        if r > 0 {
            sub(&mut a, &sigma(r, r - 1, &left[r - 1]));
        }
        left.push(complex_inverse(&a, m, context)?);
    }
    let mut right: Vec<Vec<Complex64>> = vec![Vec::new(); rows];
    for r in (0..rows).rev() {
        let mut a = block(r, r);
        if r + 1 < rows {
            sub(&mut a, &sigma(r, r + 1, &right[r + 1]));
        }
        right[r] = complex_inverse(&a, m, context)?;
    }
    let mut diag = Vec::with_capacity(n);
    for r in 0..rows {
        let mut a = block(r, r);
        if r > 0 {
            sub(&mut a, &sigma(r, r - 1, &left[r - 1]));
        }
        if r + 1 < rows {
            sub(&mut a, &sigma(r, r + 1, &right[r + 1]));
        }
        let g = complex_inverse(&a, m, context)?;
        diag.extend((0..m).map(|i| g[i * m + i].im));
    }
    to_field(spec, diag.into_iter())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::physics::tmatrix::solve_t_matrix;

    fn small() -> (LatticeSpec, SurfaceModel) {
        (LatticeSpec::square(12, 0.3), SurfaceModel { eta: 0.05, ..SurfaceModel::default() })
    }

    #[test]
    fn eigen_sum_equals_inversion() {
        let (spec, model) = small();
        let imps = ImpuritySet::new(vec![(1.0, 1.2), (2.5, 2.0)], vec![0.4, -0.7]).unwrap();
        let a = spectral_ldos_oracle(&spec, &imps, &model).unwrap();
        let b = resolvent_ldos(&spec, &imps, &model).unwrap();
        for (x, y) in a.values().iter().zip(b.values()) {
            assert!((x - y).abs() <= 1e-8 * y.abs(), "{x} vs {y}");
        }
    }

    #[test]
    fn t_matrix_closure_reproduces_lattice_resolvent() {
        let (spec, model) = small();
        let imps = ImpuritySet::new(vec![(0.9, 1.4), (2.6, 2.3), (1.7, 3.1)], vec![0.5, -0.3, 0.8]).unwrap();
        let n = spec.sites();
        let g0 = lattice_green_matrix(&spec, &ImpuritySet::empty(), &model).unwrap();
        let couplings = impurity_couplings(&spec, &imps);
        let m = couplings.len();
        let mut g_imp = vec![Complex64::new(0.0, 0.0); m * m];
        for (j, &(sj, _)) in couplings.iter().enumerate() {
            for (l, &(sl, _)) in couplings.iter().enumerate() {
                g_imp[j * m + l] = g0[sj * n + sl];
            }
        }
        let v: Vec<f64> = couplings.iter().map(|c| c.1).collect();
        let t = solve_t_matrix(&g_imp, &v).unwrap();
        let full = resolvent_ldos(&spec, &imps, &model).unwrap();
        let area = spec.spacing_nm * spec.spacing_nm;
        let (mut num, mut den) = (0.0, 0.0);
        for i in 0..n {
            let left: Vec<Complex64> = couplings.iter().map(|&(s, _)| g0[i * n + s]).collect();
            let right: Vec<Complex64> = couplings.iter().map(|&(s, _)| g0[s * n + i]).collect();
            let g = g0[i * n + i] + t.bilinear(&left, &right);
            let a = -g.im / (PI * area);
            num += (a - full.values()[i]).powi(2);
            den += full.values()[i].powi(2);
        }
        assert!((num / den).sqrt() < 1e-10);
    }

    #[test]
    fn clean_lattice_interior_is_nearly_uniform() {
        let spec = LatticeSpec::square(24, 0.25);
        let model = SurfaceModel { eta: 0.2, ..SurfaceModel::default() };
        let a = spectral_ldos_oracle(&spec, &ImpuritySet::empty(), &model).unwrap();
        // Away from the hard walls, broadening washes out box modes.
        let centre = a.get(12, 12);
        for (y, x) in [(8, 8), (8, 15), (15, 8), (12, 9)] {
            assert!((a.get(y, x) - centre).abs() / centre < 0.15, "{} vs {centre}", a.get(y, x));
        }
    }

    #[test]
    fn row_blocked_resolvent_equals_dense_inverse() {
        let spec = LatticeSpec { nx: 9, ny: 7, spacing_nm: 0.3, origin: (0.0, 0.0) };
        let model = SurfaceModel { eta: 0.03, ..SurfaceModel::default() };
        let imps = ImpuritySet::new(vec![(1.0, 0.4), (2.2, 1.9)], vec![0.6, -0.9]).unwrap();
        let g = lattice_green_matrix(&spec, &imps, &model).unwrap();
        let n = spec.sites();
        let dense = to_field(&spec, (0..n).map(|i| g[i * n + i].im)).unwrap();
        let blocked = resolvent_ldos(&spec, &imps, &model).unwrap();
        for (x, y) in dense.values().iter().zip(blocked.values()) {
            assert!((x - y).abs() <= 1e-10 * x.abs().max(1e-3), "{x} vs {y}");
        }
    }

    #[test]
    fn oversize_lattice_is_a_resource_error() {
        let spec = LatticeSpec::square(65, 0.25);
        let err = spectral_ldos_oracle(&spec, &ImpuritySet::empty(), &SurfaceModel::default()).unwrap_err();
        assert!(matches!(err, CoreError::Resource(_)));
    }
}
