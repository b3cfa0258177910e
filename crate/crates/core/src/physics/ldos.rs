//! Local density of states maps from the T-matrix Green's function.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::greens::{FreePropagator, SurfaceModel};
use super::tmatrix::{t_matrix_solve, ImpuritySet, TMatrix};
use crate::error::{CoreError, Result};
use crate::field::{Extent, ScalarField2D};

/// Pixel grid over a physical window. Samples sit at pixel centres.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RasterSpec {
    pub height: usize,
    pub width: usize,
    pub extent: Extent,
}

impl RasterSpec {
    pub fn square(pixels: usize, size_nm: f64) -> Self {
        RasterSpec { height: pixels, width: pixels, extent: Extent::new(size_nm, size_nm) }
    }

    pub fn validate(&self) -> Result<()> {
        if self.height < 2 || self.width < 2 {
            return Err(CoreError::Validation(format!("grid must be at least 2x2, got {}x{}", self.height, self.width)));
        }
        if !(self.extent.width_nm > 0.0 && self.extent.height_nm > 0.0) {
            return Err(CoreError::Validation("field of view must have positive size".into()));
        }
        Ok(())
    }

    pub fn point(&self, y: usize, x: usize) -> (f64, f64) {
        let dx = self.extent.width_nm / self.width as f64;
        let dy = self.extent.height_nm / self.height as f64;
        (self.extent.x0 + (x as f64 + 0.5) * dx, self.extent.y0 + (y as f64 + 0.5) * dy)
    }
}

/// LDOS raster plus the value range recorded before any normalisation.
#[derive(Clone, Debug)]
pub struct LdosMap {
    pub field: ScalarField2D<f64>,
    pub min: f64,
    pub max: f64,
}

/// Evaluates `A(r) = -Im G(r, r) / pi` at arbitrary points for one solved scene.
pub struct LdosEvaluator<'a> {
    imps: &'a ImpuritySet,
    prop: FreePropagator,
    t: TMatrix,
    cutoff: f64,
    background: f64,
}

impl<'a> LdosEvaluator<'a> {
    pub fn new(imps: &'a ImpuritySet, model: &SurfaceModel, cutoff_nm: f64) -> Result<Self> {
        let prop = FreePropagator::new(model)?;
        let t = t_matrix_solve(imps, model, cutoff_nm)?;
        // Im of the coincident propagator does not depend on the cutoff.
        let background = -prop.onsite(cutoff_nm).im / PI;
        Ok(LdosEvaluator { imps, prop, t, cutoff: cutoff_nm, background })
    }

    pub fn t_matrix(&self) -> &TMatrix {
        &self.t
    }

    /// Green's function on the diagonal, `G0(r,r) + sum_jl G0(r,R_j) T_jl G0(R_l,r)`, minus its
    /// cutoff-dependent real background.
    pub fn scattered(&self, r: (f64, f64), scratch: &mut Vec<Complex64>) -> Complex64 {
        scratch.clear();
        scratch.extend(self.imps.positions.iter().map(|&(x, y)| {
            // Grid points closer than the cutoff see the propagator at the cutoff radius.
            let d = (r.0 - x).hypot(r.1 - y).max(self.cutoff);
            self.prop.at_distance(d)
        }));
        self.t.bilinear(scratch, scratch)
    }

    pub fn at(&self, r: (f64, f64), scratch: &mut Vec<Complex64>) -> f64 {
        self.background - self.scattered(r, scratch).im / PI
    }
}

/// LDOS at every pixel centre of `grid`.
pub fn ldos_map(grid: &RasterSpec, imps: &ImpuritySet, model: &SurfaceModel, cutoff_nm: f64) -> Result<LdosMap> {
    grid.validate()?;
    imps.validate_within(&grid.extent)?;
    let eval = LdosEvaluator::new(imps, model, cutoff_nm)?;
    let rows: Vec<Vec<f64>> = (0..grid.height)
        .into_par_iter()
        .map(|y| {
            let mut scratch = Vec::with_capacity(imps.len());
            (0..grid.width).map(|x| eval.at(grid.point(y, x), &mut scratch)).collect()
        })
        .collect();
    let values: Vec<f64> = rows.into_iter().flatten().collect();
    let field = ScalarField2D::new(grid.height, grid.width, values, grid.extent)?;
    let (min, max) = (field.min(), field.max());
    Ok(LdosMap { field, min, max })
}

/// LDOS along arbitrary sample points (same physics as [`ldos_map`], no field-of-view check).
pub fn ldos_at(points: &[(f64, f64)], imps: &ImpuritySet, model: &SurfaceModel, cutoff_nm: f64) -> Result<Vec<f64>> {
    let eval = LdosEvaluator::new(imps, model, cutoff_nm)?;
    let mut scratch = Vec::with_capacity(imps.len());
    Ok(points.iter().map(|&p| eval.at(p, &mut scratch)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clean_gas_is_uniform_at_rho0() {
        let model = SurfaceModel { eta: 0.001, ..SurfaceModel::default() };
        let map = ldos_map(&RasterSpec::square(32, 20.0), &ImpuritySet::empty(), &model, 0.25).unwrap();
        let rho0 = model.clean_dos();
        assert!((map.max - map.min) / rho0 < 1e-12);
        assert!((map.field.mean() - rho0).abs() / rho0 < 0.02);
    }

    #[test]
    fn mirror_symmetric_scene_gives_mirror_symmetric_map() {
        let model = SurfaceModel::default();
        let grid = RasterSpec::square(40, 20.0);
        // mirror x -> 20 - x
        let imps = ImpuritySet::new(vec![(4.0, 6.0), (16.0, 6.0), (10.0, 15.0)], vec![2.0, 2.0, -3.0]).unwrap();
        let map = ldos_map(&grid, &imps, &model, 0.25).unwrap().field;
        let mut worst: f64 = 0.0;
        for y in 0..40 {
            for x in 0..40 {
                worst = worst.max((map.get(y, x) - map.get(y, 39 - x)).abs());
            }
        }
        assert!(worst < 1e-10, "{worst}");
    }

    #[test]
    fn impurity_outside_window_is_rejected() {
        let imps = ImpuritySet::new(vec![(25.0, 1.0)], vec![1.0]).unwrap();
        assert!(ldos_map(&RasterSpec::square(8, 20.0), &imps, &SurfaceModel::default(), 0.25).is_err());
    }
}
