//! Core field types, discrete differential operators, norms and reductions.
//!
//! Images are stored row-major with `(row, col)` indexing. The gradient is
//! the forward difference with replicate (Neumann) boundary; the divergence
//! is its exact negative adjoint, so `<grad u, g> + <u, div g> = 0` holds in
//! exact arithmetic. All reductions run in a fixed row-major order so that
//! results are bit-reproducible.

use crate::error::{Error, Result};

/// 2D real-valued image grid, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl ScalarField {
    /// Build a field from row-major values, validating shape and finiteness.
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::EmptyField { width, height });
        }
        if values.len() != width * height {
            return Err(Error::BadLength {
                len: values.len(),
                width,
                height,
            });
        }
        if !values.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self {
            width,
            height,
            values,
        })
    }

    /// Constant field. Panics on non-finite `value` or zero dimensions.
    pub fn constant(width: usize, height: usize, value: f64) -> Self {
        assert!(value.is_finite(), "constant field value must be finite");
        Self::new(width, height, vec![value; width * height]).expect("positive dimensions")
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self::constant(width, height, 0.0)
    }

    /// Internal constructor for values already known to be finite.
    pub(crate) fn from_raw(width: usize, height: usize, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), width * height);
        Self {
            width,
            height,
            values,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.width + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.values[row * self.width + col] = value;
    }

    pub fn same_shape(&self, other: &ScalarField) -> Result<()> {
        if self.width != other.width || self.height != other.height {
            return Err(Error::DimensionMismatch {
                expected: (self.width, self.height),
                actual: (other.width, other.height),
            });
        }
        Ok(())
    }

    /// FNV-1a over dimensions and value bytes; used as a provenance tag.
    pub fn checksum(&self) -> u64 {
        const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
        const PRIME: u64 = 0x100_0000_01b3;
        let mut h = OFFSET;
        let mut eat = |bytes: &[u8]| {
            for &b in bytes {
                h ^= u64::from(b);
                h = h.wrapping_mul(PRIME);
            }
        };
        eat(&(self.width as u64).to_le_bytes());
        eat(&(self.height as u64).to_le_bytes());
        for v in &self.values {
            eat(&v.to_le_bytes());
        }
        h
    }

    pub fn l1_norm(&self) -> f64 {
        self.values.iter().map(|v| v.abs()).sum()
    }

    pub fn l2_norm_sq(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }

    pub fn inner_product(&self, other: &ScalarField) -> Result<f64> {
        self.same_shape(other)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .sum())
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Median with the lower-midpoint convention for even pixel counts, so
    /// the result is always an attained image value.
    pub fn median(&self) -> f64 {
        let mut sorted = self.values.clone();
        let mid = (sorted.len() - 1) / 2;
        let (_, m, _) = sorted.select_nth_unstable_by(mid, f64::total_cmp);
        *m
    }

    /// Pointwise difference; fields must share dimensions.
    pub fn sub(&self, other: &ScalarField) -> Result<ScalarField> {
        self.same_shape(other)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a - b)
            .collect();
        Ok(ScalarField::from_raw(self.width, self.height, values))
    }
}

/// Per-pixel 2-vector field (x and y components), row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    width: usize,
    height: usize,
    x_comp: Vec<f64>,
    y_comp: Vec<f64>,
}

impl VectorField {
    pub fn new(width: usize, height: usize, x_comp: Vec<f64>, y_comp: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::EmptyField { width, height });
        }
        if x_comp.len() != width * height || y_comp.len() != x_comp.len() {
            return Err(Error::BadLength {
                len: x_comp.len().max(y_comp.len()),
                width,
                height,
            });
        }
        if !x_comp.iter().chain(&y_comp).all(|v| v.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self {
            width,
            height,
            x_comp,
            y_comp,
        })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        assert!(width > 0 && height > 0);
        Self {
            width,
            height,
            x_comp: vec![0.0; width * height],
            y_comp: vec![0.0; width * height],
        }
    }

    pub(crate) fn from_raw(width: usize, height: usize, x_comp: Vec<f64>, y_comp: Vec<f64>) -> Self {
        debug_assert_eq!(x_comp.len(), width * height);
        debug_assert_eq!(y_comp.len(), width * height);
        Self {
            width,
            height,
            x_comp,
            y_comp,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn x_comp(&self) -> &[f64] {
        &self.x_comp
    }

    pub fn y_comp(&self) -> &[f64] {
        &self.y_comp
    }

    /// Largest pointwise Euclidean magnitude.
    pub fn max_magnitude(&self) -> f64 {
        self.x_comp
            .iter()
            .zip(&self.y_comp)
            .map(|(x, y)| x.hypot(*y))
            .fold(0.0, f64::max)
    }

    /// Componentwise L1 norm, used for relative-change measurements.
    pub fn l1_norm(&self) -> f64 {
        self.x_comp
            .iter()
            .chain(&self.y_comp)
            .map(|v| v.abs())
            .sum()
    }
}

/// Forward-difference gradient with replicate boundary: the last column of
/// `x_comp` and the last row of `y_comp` are zero.
pub fn gradient(u: &ScalarField) -> VectorField {
    let (w, h) = (u.width, u.height);
    let v = &u.values;
    let mut gx = vec![0.0; w * h];
    let mut gy = vec![0.0; w * h];
    for i in 0..h {
        let row = i * w;
        for j in 0..w - 1 {
            gx[row + j] = v[row + j + 1] - v[row + j];
        }
    }
    for i in 0..h - 1 {
        let row = i * w;
        for j in 0..w {
            gy[row + j] = v[row + w + j] - v[row + j];
        }
    }
    VectorField::from_raw(w, h, gx, gy)
}

/// Exact negative adjoint of [`gradient`]: backward differences with the
/// matching boundary convention, so `<grad u, g> + <u, div g> = 0`.
pub fn divergence(g: &VectorField) -> ScalarField {
    let (w, h) = (g.width, g.height);
    let (gx, gy) = (&g.x_comp, &g.y_comp);
    let mut d = vec![0.0; w * h];
    for i in 0..h {
        let row = i * w;
        for j in 0..w {
            let idx = row + j;
            let mut acc = 0.0;
            if j < w - 1 {
                acc += gx[idx];
            }
            if j > 0 {
                acc -= gx[idx - 1];
            }
            if i < h - 1 {
                acc += gy[idx];
            }
            if i > 0 {
                acc -= gy[idx - w];
            }
            d[idx] = acc;
        }
    }
    ScalarField::from_raw(w, h, d)
}

/// Isotropic total variation: sum of pointwise Euclidean gradient magnitudes.
pub fn tv_energy(u: &ScalarField) -> f64 {
    let (w, h) = (u.width, u.height);
    let v = &u.values;
    let mut sum = 0.0;
    for i in 0..h {
        let row = i * w;
        for j in 0..w {
            let idx = row + j;
            let dx = if j < w - 1 { v[idx + 1] - v[idx] } else { 0.0 };
            let dy = if i < h - 1 { v[idx + w] - v[idx] } else { 0.0 };
            sum += dx.hypot(dy);
        }
    }
    sum
}
