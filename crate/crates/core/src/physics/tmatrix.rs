//! Multiple scattering off point impurities.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::greens::{FreePropagator, SurfaceModel};
use crate::error::{CoreError, Result};
use crate::field::Extent;
use crate::linalg::complex_solve;

/// Reciprocal condition numbers below this are treated as singular.
const MIN_RCOND: f64 = 1e-12;

/// Point scatterers `V(r) = sum_j v_j delta(r - R_j)`; positions in nm, strengths in eV nm^2.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ImpuritySet {
    pub positions: Vec<(f64, f64)>,
    pub strengths: Vec<f64>,
}

impl ImpuritySet {
    pub fn new(positions: Vec<(f64, f64)>, strengths: Vec<f64>) -> Result<Self> {
        let set = ImpuritySet { positions, strengths };
        set.validate()?;
        Ok(set)
    }

    pub fn empty() -> Self {
        ImpuritySet::default()
    }

    pub fn validate(&self) -> Result<()> {
        if self.positions.len() != self.strengths.len() {
            return Err(CoreError::Validation(format!(
                "{} impurity positions but {} strengths",
                self.positions.len(),
                self.strengths.len()
            )));
        }
        for (i, (&(x, y), &v)) in self.positions.iter().zip(&self.strengths).enumerate() {
            if !x.is_finite() || !y.is_finite() {
                return Err(CoreError::Validation(format!("impurity {i} has non-finite position")));
            }
            if !v.is_finite() || v == 0.0 {
                return Err(CoreError::Validation(format!("impurity {i} strength must be finite and nonzero, got {v}")));
            }
        }
        Ok(())
    }

    /// Every impurity must lie inside the field of view (boundary inclusive).
    pub fn validate_within(&self, extent: &Extent) -> Result<()> {
        self.validate()?;
        for (i, &(x, y)) in self.positions.iter().enumerate() {
            let inside = x >= extent.x0 && x <= extent.x0 + extent.width_nm && y >= extent.y0 && y <= extent.y0 + extent.height_nm;
            if !inside {
                return Err(CoreError::Validation(format!("impurity {i} at ({x:.3}, {y:.3}) nm lies outside the field of view")));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

/// Scattering matrix over impurity indices, row-major.
#[derive(Clone, Debug)]
pub struct TMatrix {
    pub n: usize,
    pub values: Vec<Complex64>,
    /// Reciprocal 1-norm condition estimate of `I - V G0`.
    pub rcond: f64,
}

impl TMatrix {
    #[inline]
    pub fn get(&self, j: usize, l: usize) -> Complex64 {
        self.values[j * self.n + l]
    }

    /// `sum_jl a_j T_jl b_l`.
    pub fn bilinear(&self, a: &[Complex64], b: &[Complex64]) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for j in 0..self.n {
            let row = &self.values[j * self.n..(j + 1) * self.n];
            let inner: Complex64 = row.iter().zip(b).map(|(t, g)| t * g).sum();
            acc += a[j] * inner;
        }
        acc
    }
}

/// `T = (I - V G)^-1 V` for an arbitrary inter-impurity propagator matrix `g_imp` (row-major,
/// diagonal holding the on-site values) and diagonal couplings `v`.
///
/// This closure is exact for any reference Green's function, which is what lets the lattice
/// resolvent check it independently.
pub fn solve_t_matrix(g_imp: &[Complex64], v: &[f64]) -> Result<TMatrix> {
    let n = v.len();
    assert_eq!(g_imp.len(), n * n);
    if n == 0 {
        return Ok(TMatrix { n, values: Vec::new(), rcond: 1.0 });
    }
    let mut a = vec![Complex64::new(0.0, 0.0); n * n];
    let mut rhs = vec![Complex64::new(0.0, 0.0); n * n];
    for j in 0..n {
        for l in 0..n {
            a[j * n + l] = -g_imp[j * n + l] * v[j];
        }
        a[j * n + j] += 1.0;
        rhs[j * n + j] = Complex64::new(v[j], 0.0);
    }
    let values = complex_solve(&a, &rhs, n, n, MIN_RCOND, "t-matrix (I - V G0)")?;
    // rcond only matters for diagnostics; recompute cheaply from the solve inputs.
    let rcond = estimate_rcond(&a, &values, v);
    Ok(TMatrix { n, values, rcond })
}

fn estimate_rcond(a: &[Complex64], t: &[Complex64], v: &[f64]) -> f64 {
    let n = v.len();
    let norm1 = |m: &dyn Fn(usize, usize) -> Complex64| (0..n).map(|c| (0..n).map(|r| m(r, c).norm()).sum::<f64>()).fold(0.0, f64::max);
    // (I - V G)^-1 = T V^-1
    let inv_norm = norm1(&|r, c| t[r * n + c] / v[c]);
    let a_norm = norm1(&|r, c| a[r * n + c]);
    1.0 / (a_norm * inv_norm)
}

/// Continuum T-matrix with the regularised on-site propagator (cutoff `a` in nm).
pub fn t_matrix_solve(imps: &ImpuritySet, model: &SurfaceModel, cutoff_nm: f64) -> Result<TMatrix> {
    imps.validate()?;
    if !(cutoff_nm > 0.0) {
        return Err(CoreError::Validation(format!("physics.cutoff_nm must be > 0, got {cutoff_nm}")));
    }
    let prop = FreePropagator::new(model)?;
    let n = imps.len();
    let mut g = vec![Complex64::new(0.0, 0.0); n * n];
    let onsite = prop.onsite(cutoff_nm);
    for j in 0..n {
        g[j * n + j] = onsite;
        for l in j + 1..n {
            let (a, b) = (imps.positions[j], imps.positions[l]);
            let d = (a.0 - b.0).hypot(a.1 - b.1).max(cutoff_nm);
            let val = prop.at_distance(d);
            g[j * n + l] = val;
            g[l * n + j] = val;
        }
    }
    solve_t_matrix(&g, &imps.strengths)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_impurity_is_scalar_closure() {
        let model = SurfaceModel::default();
        let imps = ImpuritySet::new(vec![(5.0, 5.0)], vec![2.0]).unwrap();
        let t = t_matrix_solve(&imps, &model, 0.25).unwrap();
        let g0 = FreePropagator::new(&model).unwrap().onsite(0.25);
        let expect = 2.0 / (1.0 - 2.0 * g0);
        assert!((t.get(0, 0) - expect).norm() < 1e-12 * expect.norm());
    }

    #[test]
    fn symmetric_pair_is_index_symmetric() {
        let model = SurfaceModel::default();
        let imps = ImpuritySet::new(vec![(3.0, 5.0), (7.0, 5.0)], vec![1.5, 1.5]).unwrap();
        let t = t_matrix_solve(&imps, &model, 0.25).unwrap();
        assert!((t.get(0, 1) - t.get(1, 0)).norm() < 1e-12);
        assert!((t.get(0, 0) - t.get(1, 1)).norm() < 1e-12);
        assert!(t.rcond > 0.0 && t.rcond <= 1.0);
    }

    #[test]
    fn rejects_bad_sets() {
        assert!(ImpuritySet::new(vec![(0.0, 0.0)], vec![0.0]).is_err());
        assert!(ImpuritySet::new(vec![(0.0, 0.0)], vec![]).is_err());
        let s = ImpuritySet::new(vec![(11.0, 1.0)], vec![1.0]).unwrap();
        assert!(s.validate_within(&Extent::new(10.0, 10.0)).is_err());
    }

    #[test]
    fn resonant_coupling_is_reported_singular() {
        // Choose v so that 1 - v g = 0 exactly for a real-valued toy propagator.
        let g = [Complex64::new(0.5, 0.0)];
        let err = solve_t_matrix(&g, &[2.0]).unwrap_err();
        assert!(matches!(err, CoreError::SingularMatrix { .. }));
    }
}
