//! Real-valued rasters with a physical extent.

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::scalar::Scalar;

/// Physical placement of a raster: size of the covered rectangle and its lower-left corner, in nm.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Extent {
    pub width_nm: f64,
    pub height_nm: f64,
    pub x0: f64,
    pub y0: f64,
}

impl Extent {
    pub fn new(width_nm: f64, height_nm: f64) -> Self {
        Extent { width_nm, height_nm, x0: 0.0, y0: 0.0 }
    }

    /// Extent of a unit-spaced pixel raster, used when no physical size is known.
    pub fn pixels(height: usize, width: usize) -> Self {
        Extent::new(width as f64, height as f64)
    }
}

/// H x W real grid stored row-major (row index = y).
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField2D<T> {
    values: Vec<T>,
    height: usize,
    width: usize,
    extent: Extent,
}

impl<T: Scalar> ScalarField2D<T> {
    pub fn new(height: usize, width: usize, values: Vec<T>, extent: Extent) -> Result<Self> {
        if height < 2 || width < 2 {
            return Err(CoreError::Validation(format!("raster must be at least 2x2, got {height}x{width}")));
        }
        if values.len() != height * width {
            return Err(CoreError::Validation(format!(
                "raster {height}x{width} needs {} values, got {}",
                height * width,
                values.len()
            )));
        }
        if !(extent.width_nm > 0.0 && extent.height_nm > 0.0) || !extent.width_nm.is_finite() || !extent.height_nm.is_finite() {
            return Err(CoreError::Validation(format!("non-positive extent {extent:?}")));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(CoreError::Numeric(format!("non-finite raster value at index {i}")));
        }
        Ok(ScalarField2D { values, height, width, extent })
    }

    pub fn filled(height: usize, width: usize, value: T, extent: Extent) -> Result<Self> {
        Self::new(height, width, vec![value; height * width], extent)
    }

    pub fn from_fn(height: usize, width: usize, extent: Extent, mut f: impl FnMut(usize, usize) -> T) -> Result<Self> {
        let mut values = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                values.push(f(y, x));
            }
        }
        Self::new(height, width, values, extent)
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn extent(&self) -> Extent {
        self.extent
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> T {
        self.values[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, v: T) {
        self.values[y * self.width + x] = v;
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    pub fn row(&self, y: usize) -> &[T] {
        &self.values[y * self.width..(y + 1) * self.width]
    }

    /// Same geometry, new values. Values are not re-validated; callers keep them finite.
    pub fn with_values(&self, values: Vec<T>) -> Self {
        assert_eq!(values.len(), self.values.len());
        ScalarField2D { values, height: self.height, width: self.width, extent: self.extent }
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        self.with_values(self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn min(&self) -> T {
        self.values.iter().copied().fold(T::infinity(), T::min)
    }

    pub fn max(&self) -> T {
        self.values.iter().copied().fold(T::neg_infinity(), T::max)
    }

    pub fn mean(&self) -> T {
        self.values.iter().copied().sum::<T>() / T::from_usize(self.values.len()).unwrap()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn cast<U: Scalar>(&self) -> ScalarField2D<U> {
        ScalarField2D {
            values: self.values.iter().map(|&v| U::lit(v.as_f64())).collect(),
            height: self.height,
            width: self.width,
            extent: self.extent,
        }
    }

    /// Physical coordinate (nm) of the centre of pixel `(y, x)`.
    pub fn pixel_center(&self, y: usize, x: usize) -> (f64, f64) {
        let dx = self.extent.width_nm / self.width as f64;
        let dy = self.extent.height_nm / self.height as f64;
        (self.extent.x0 + (x as f64 + 0.5) * dx, self.extent.y0 + (y as f64 + 0.5) * dy)
    }

    /// Rectangular sub-raster; the extent shrinks accordingly.
    pub fn crop(&self, top: usize, left: usize, height: usize, width: usize) -> Result<Self> {
        if top + height > self.height || left + width > self.width {
            return Err(CoreError::Validation(format!(
                "crop {height}x{width}@({top},{left}) exceeds {}x{}",
                self.height, self.width
            )));
        }
        let dx = self.extent.width_nm / self.width as f64;
        let dy = self.extent.height_nm / self.height as f64;
        let extent = Extent {
            width_nm: dx * width as f64,
            height_nm: dy * height as f64,
            x0: self.extent.x0 + dx * left as f64,
            y0: self.extent.y0 + dy * top as f64,
        };
        let mut values = Vec::with_capacity(height * width);
        for y in top..top + height {
            values.extend_from_slice(&self.values[y * self.width + left..y * self.width + left + width]);
        }
        Self::new(height, width, values, extent)
    }

    /// Mirror left-right.
    pub fn flip_horizontal(&self) -> Self {
        let mut out = self.values.clone();
        for row in out.chunks_mut(self.width) {
            row.reverse();
        }
        self.with_values(out)
    }

    /// Mirror top-bottom.
    pub fn flip_vertical(&self) -> Self {
        let mut out = Vec::with_capacity(self.values.len());
        for y in (0..self.height).rev() {
            out.extend_from_slice(self.row(y));
        }
        self.with_values(out)
    }

    /// Rotate by 90 degrees counter-clockwise; height and width swap.
    pub fn rotate90(&self) -> Self {
        let (h, w) = (self.height, self.width);
        let mut values = Vec::with_capacity(h * w);
        for y in 0..w {
            for x in 0..h {
                values.push(self.get(x, w - 1 - y));
            }
        }
        let e = self.extent;
        ScalarField2D {
            values,
            height: w,
            width: h,
            extent: Extent { width_nm: e.height_nm, height_nm: e.width_nm, x0: e.y0, y0: e.x0 },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp() -> ScalarField2D<f64> {
        ScalarField2D::from_fn(3, 4, Extent::new(4.0, 3.0), |y, x| (y * 10 + x) as f64).unwrap()
    }

    #[test]
    fn rejects_degenerate_shapes_and_nan() {
        assert!(ScalarField2D::<f64>::new(1, 4, vec![0.0; 4], Extent::new(1.0, 1.0)).is_err());
        assert!(ScalarField2D::<f64>::new(2, 2, vec![0.0; 3], Extent::new(1.0, 1.0)).is_err());
        assert!(ScalarField2D::<f64>::new(2, 2, vec![0.0; 4], Extent::new(0.0, 1.0)).is_err());
        assert!(ScalarField2D::<f64>::new(2, 2, vec![0.0, f64::NAN, 0.0, 0.0], Extent::new(1.0, 1.0)).is_err());
    }

    #[test]
    fn rotate_four_times_is_identity() {
        let f = ramp();
        let r = f.rotate90();
        assert_eq!(r.shape(), (4, 3));
        // top-left of a CCW rotation is the original top-right
        assert_eq!(r.get(0, 0), f.get(0, 3));
        assert_eq!(r.rotate90().rotate90().rotate90(), f);
    }

    #[test]
    fn flips_are_involutions() {
        let f = ramp();
        assert_eq!(f.flip_horizontal().flip_horizontal(), f);
        assert_eq!(f.flip_vertical().flip_vertical(), f);
        assert_eq!(f.flip_horizontal().get(1, 0), 13.0);
    }

    #[test]
    fn crop_tracks_extent() {
        let f = ramp();
        let c = f.crop(1, 2, 2, 2).unwrap();
        assert_eq!(c.values(), &[12.0, 13.0, 22.0, 23.0]);
        assert_eq!(c.extent().x0, 2.0);
        assert!(f.crop(2, 0, 2, 2).is_err());
    }
}
