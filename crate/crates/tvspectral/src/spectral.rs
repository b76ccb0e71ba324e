//! Spectral transform, response, reconstruction, filtering and segmentation
//! on top of a computed scale-space.
//!
//! In L1 mode the spectral slices are plain increments of the scale-space
//! solutions (the zero-scale solution is the data itself), so they already
//! integrate to `f - tail` and need no quadrature weights. In L2 mode the
//! slices follow the continuum definition (second scale derivative times t)
//! and reconstruction applies trapezoidal weights.

use crate::error::{Error, Result};
use crate::grid::ScalarField;
use crate::scale_space::{ScaleGrid, ScaleSpace};
use crate::solver::Fidelity;

/// Guard for relative residual denominators.
const RESIDUAL_EPS: f64 = 1e-30;

/// Spectral slice stack with per-scale response values.
///
/// `response` stores the raw inner product `<phi_i, f>` in L1 mode (this is
/// the squared response, and may be slightly negative numerically; it is
/// kept raw so that exact summation identities hold) and the L1 norm
/// `||phi_i||_1` in L2 mode.
#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    grid: ScaleGrid,
    phi: Vec<ScalarField>,
    response: Vec<f64>,
    mode: Fidelity,
    c_hat: f64,
    tail: ScalarField,
}

impl SpectralDecomposition {
    pub fn grid(&self) -> &ScaleGrid {
        &self.grid
    }

    pub fn phi(&self) -> &[ScalarField] {
        &self.phi
    }

    pub fn response(&self) -> &[f64] {
        &self.response
    }

    pub fn mode(&self) -> Fidelity {
        self.mode
    }

    /// Residual constant of the reconstruction formula: the median of the
    /// data in L1 mode, its mean in L2 mode.
    pub fn c_hat(&self) -> f64 {
        self.c_hat
    }

    /// Final-stage solution: the unresolved remainder of the sweep.
    pub fn tail(&self) -> &ScalarField {
        &self.tail
    }

    /// Response on the S(t) scale, suitable for peak picking and
    /// clustering: the square root of the clamped raw response in L1 mode,
    /// the stored value in L2 mode.
    pub fn response_magnitude(&self) -> Vec<f64> {
        match self.mode {
            Fidelity::L1 => self.response.iter().map(|s| s.max(0.0).sqrt()).collect(),
            Fidelity::L2 => self.response.clone(),
        }
    }

    /// Rebuild a decomposition from stored parts (deserialization support).
    pub fn from_parts(
        grid: ScaleGrid,
        phi: Vec<ScalarField>,
        response: Vec<f64>,
        mode: Fidelity,
        c_hat: f64,
        tail: ScalarField,
    ) -> Result<Self> {
        if phi.len() != grid.len() || response.len() != grid.len() {
            return Err(Error::InvalidGrid(format!(
                "expected {} slices and responses, got {} and {}",
                grid.len(),
                phi.len(),
                response.len()
            )));
        }
        for slice in &phi {
            tail.same_shape(slice)?;
        }
        if !response.iter().all(|v| v.is_finite()) || !c_hat.is_finite() {
            return Err(Error::NonFinite);
        }
        Ok(Self {
            grid,
            phi,
            response,
            mode,
            c_hat,
            tail,
        })
    }
}

fn check_source(space: &ScaleSpace, f: &ScalarField, expected: Fidelity) -> Result<()> {
    if space.fidelity() != expected {
        return Err(Error::FidelityMismatch {
            expected,
            actual: space.fidelity(),
        });
    }
    if space.source_checksum() != f.checksum() {
        return Err(Error::ForeignScaleSpace);
    }
    Ok(())
}

/// First-derivative transform of an L1 scale-space: slice `i` is the
/// increment lost between consecutive scales, with the zero-scale solution
/// taken as `f`; the response is the raw inner product with `f`.
pub fn transform_l1(space: &ScaleSpace, f: &ScalarField) -> Result<SpectralDecomposition> {
    check_source(space, f, Fidelity::L1)?;
    let solutions = space.solutions();
    let mut phi = Vec::with_capacity(solutions.len());
    let mut response = Vec::with_capacity(solutions.len());
    let mut prev = f;
    for u in solutions {
        let slice = prev.sub(u)?;
        response.push(slice.inner_product(f)?);
        phi.push(slice);
        prev = u;
    }
    Ok(SpectralDecomposition {
        grid: space.grid().clone(),
        phi,
        response,
        mode: Fidelity::L1,
        c_hat: f.median(),
        tail: solutions[solutions.len() - 1].clone(),
    })
}

/// Second-derivative transform of an L2 scale-space: slice `i` is the
/// three-point divided-difference second derivative in the scale variable,
/// times the scale; endpoints use the one-sided variant. The response is
/// the slice's L1 norm.
pub fn transform_l2(space: &ScaleSpace, f: &ScalarField) -> Result<SpectralDecomposition> {
    check_source(space, f, Fidelity::L2)?;
    let n = space.grid().len();
    if n < 3 {
        return Err(Error::GridTooShort { min: 3, len: n });
    }
    let t = space.grid().values();
    let u = space.solutions();
    let npix = f.len();
    let mut phi = Vec::with_capacity(n);
    let mut response = Vec::with_capacity(n);
    for i in 0..n {
        let (a, b, c) = if i == 0 {
            (0, 1, 2)
        } else if i == n - 1 {
            (n - 3, n - 2, n - 1)
        } else {
            (i - 1, i, i + 1)
        };
        // Second divided difference times 2 approximates u_tt on a
        // nonuniform grid; exact for quadratic data.
        let ca = 2.0 / ((t[b] - t[a]) * (t[c] - t[a]));
        let cb = -2.0 / ((t[c] - t[b]) * (t[b] - t[a]));
        let cc = 2.0 / ((t[c] - t[b]) * (t[c] - t[a]));
        let (ua, ub, uc) = (u[a].values(), u[b].values(), u[c].values());
        let mut values = Vec::with_capacity(npix);
        let mut norm = 0.0;
        for p in 0..npix {
            let v = (ca * ua[p] + cb * ub[p] + cc * uc[p]) * t[i];
            norm += v.abs();
            values.push(v);
        }
        phi.push(ScalarField::from_raw(f.width(), f.height(), values));
        response.push(norm);
    }
    Ok(SpectralDecomposition {
        grid: space.grid().clone(),
        phi,
        response,
        mode: Fidelity::L2,
        c_hat: f.mean(),
        tail: u[n - 1].clone(),
    })
}

/// Piecewise-constant filter weights over scale indices plus the weight of
/// the residual constant.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterSpec {
    weights: Vec<f64>,
    weight_inf: f64,
}

impl FilterSpec {
    pub fn new(weights: Vec<f64>, weight_inf: f64) -> Result<Self> {
        if !weights.iter().all(|w| w.is_finite()) || !weight_inf.is_finite() {
            return Err(Error::NonFinite);
        }
        Ok(Self {
            weights,
            weight_inf,
        })
    }

    /// All-pass filter: every weight 1 including the residual constant.
    pub fn all_pass(n: usize) -> Self {
        Self {
            weights: vec![1.0; n],
            weight_inf: 1.0,
        }
    }

    /// Indicator of the inclusive index interval `[first, last]`, residual
    /// weight zero.
    pub fn band(n: usize, first: usize, last: usize) -> Result<Self> {
        if first > last || last >= n {
            return Err(Error::InvalidBands(format!(
                "band [{first}, {last}] out of range for {n} scales"
            )));
        }
        let mut weights = vec![0.0; n];
        for w in &mut weights[first..=last] {
            *w = 1.0;
        }
        Ok(Self {
            weights,
            weight_inf: 0.0,
        })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weight_inf(&self) -> f64 {
        self.weight_inf
    }
}

fn check_filter(dec: &SpectralDecomposition, filter: &FilterSpec) -> Result<()> {
    if filter.weights.len() != dec.grid.len() {
        return Err(Error::FilterLength {
            len: filter.weights.len(),
            grid: dec.grid.len(),
        });
    }
    Ok(())
}

/// Weighted sum of the filtered slices, without the residual constant. L1
/// slices carry no scale-step factor; L2 slices are integrated with
/// trapezoidal weights.
fn weighted_slice_sum(dec: &SpectralDecomposition, weights: &[f64]) -> Vec<f64> {
    let npix = dec.tail.len();
    let quad = match dec.mode {
        Fidelity::L1 => None,
        Fidelity::L2 => Some(dec.grid.quadrature_weights()),
    };
    let mut acc = vec![0.0; npix];
    for (i, slice) in dec.phi.iter().enumerate() {
        let w = match &quad {
            None => weights[i],
            Some(q) => weights[i] * q[i],
        };
        if w == 0.0 {
            continue;
        }
        for (a, v) in acc.iter_mut().zip(slice.values()) {
            *a += w * v;
        }
    }
    acc
}

/// Filtered reconstruction: weighted slice sum plus the weighted residual
/// constant.
pub fn reconstruct(dec: &SpectralDecomposition, filter: &FilterSpec) -> Result<ScalarField> {
    check_filter(dec, filter)?;
    let mut values = weighted_slice_sum(dec, &filter.weights);
    let offset = filter.weight_inf * dec.c_hat;
    for v in &mut values {
        *v += offset;
    }
    Ok(ScalarField::from_raw(
        dec.tail.width(),
        dec.tail.height(),
        values,
    ))
}

/// Binary mask of pixels whose filtered slice sum exceeds `epsilon`; the
/// residual constant is excluded.
pub fn segment(
    dec: &SpectralDecomposition,
    filter: &FilterSpec,
    epsilon: f64,
) -> Result<ScalarField> {
    check_filter(dec, filter)?;
    if !(epsilon.is_finite() && epsilon >= 0.0) {
        return Err(Error::InvalidConfig(format!(
            "segmentation epsilon must be nonnegative, got {epsilon}"
        )));
    }
    let sum = weighted_slice_sum(dec, &filter.weights);
    let values = sum
        .into_iter()
        .map(|v| if v > epsilon { 1.0 } else { 0.0 })
        .collect();
    Ok(ScalarField::from_raw(
        dec.tail.width(),
        dec.tail.height(),
        values,
    ))
}

/// Relative gap between the summed squared response and the squared norm of
/// the data. Zero data gives zero by convention.
pub fn parseval_residual(dec: &SpectralDecomposition, f: &ScalarField) -> Result<f64> {
    if dec.mode != Fidelity::L1 {
        return Err(Error::FidelityMismatch {
            expected: Fidelity::L1,
            actual: dec.mode,
        });
    }
    f.same_shape(&dec.tail)?;
    let sum: f64 = dec.response.iter().sum();
    let norm_sq = f.l2_norm_sq();
    Ok((sum - norm_sq).abs() / norm_sq.max(RESIDUAL_EPS))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scale_space::{make_scale_grid, Spacing};
    use crate::solver::EnergyReport;

    fn dummy_report() -> EnergyReport {
        EnergyReport {
            fidelity_term: 0.0,
            tv_term: 0.0,
            total: 0.0,
            iterations_used: 0,
        }
    }

    fn space_from(
        f: &ScalarField,
        solutions: Vec<ScalarField>,
        fidelity: Fidelity,
    ) -> ScaleSpace {
        let grid = make_scale_grid(solutions.len(), 1.0, solutions.len() as f64, Spacing::Linear)
            .unwrap();
        let n = solutions.len();
        ScaleSpace::from_parts(grid, solutions, fidelity, f, vec![dummy_report(); n]).unwrap()
    }

    fn seeded_field(w: usize, h: usize, seed: u64) -> ScalarField {
        let mut state = seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).max(1);
        let values = (0..w * h)
            .map(|_| {
                state ^= state << 13;
                state ^= state >> 7;
                state ^= state << 17;
                (state % 1000) as f64 / 1000.0
            })
            .collect();
        ScalarField::new(w, h, values).unwrap()
    }

    #[test]
    fn constant_data_has_zero_transform() {
        let f = ScalarField::constant(5, 4, 0.6);
        let space = space_from(&f, vec![f.clone(); 3], Fidelity::L1);
        let dec = transform_l1(&space, &f).unwrap();
        for slice in dec.phi() {
            assert!(slice.values().iter().all(|&v| v == 0.0));
        }
        assert!(dec.response().iter().all(|&s| s == 0.0));
        assert_eq!(dec.c_hat(), 0.6);
    }

    #[test]
    fn telescoping_and_response_sum_identities() {
        let f = seeded_field(7, 6, 3);
        let sols: Vec<ScalarField> = (0..4).map(|k| seeded_field(7, 6, 10 + k)).collect();
        let space = space_from(&f, sols.clone(), Fidelity::L1);
        let dec = transform_l1(&space, &f).unwrap();
        // Slices sum to f - tail pixelwise.
        let mut acc = vec![0.0; f.len()];
        for slice in dec.phi() {
            for (a, v) in acc.iter_mut().zip(slice.values()) {
                *a += v;
            }
        }
        for ((a, fv), tv) in acc.iter().zip(f.values()).zip(dec.tail().values()) {
            assert!((a - (fv - tv)).abs() <= 1e-12);
        }
        // Responses sum to <f - tail, f>.
        let sum: f64 = dec.response().iter().sum();
        let expect = f.sub(dec.tail()).unwrap().inner_product(&f).unwrap();
        assert!((sum - expect).abs() <= 1e-10 * expect.abs().max(1.0));
    }

    #[test]
    fn transform_rejects_foreign_space_and_wrong_mode() {
        let f = seeded_field(4, 4, 1);
        let other = seeded_field(4, 4, 2);
        let space = space_from(&f, vec![f.clone(); 3], Fidelity::L1);
        assert!(matches!(
            transform_l1(&space, &other),
            Err(Error::ForeignScaleSpace)
        ));
        assert!(matches!(
            transform_l2(&space, &f),
            Err(Error::FidelityMismatch { .. })
        ));
    }

    #[test]
    fn l2_transform_of_scale_linear_data_vanishes_inside() {
        // u(t) linear in t across uniform stages: interior second
        // differences are exactly zero, and here the one-sided endpoint
        // formulas agree as well.
        let f = ScalarField::constant(3, 3, 1.0);
        let sols: Vec<ScalarField> = (0..4)
            .map(|k| ScalarField::constant(3, 3, 1.0 - 0.2 * k as f64))
            .collect();
        let space = space_from(&f, sols, Fidelity::L2);
        let dec = transform_l2(&space, &f).unwrap();
        for slice in dec.phi() {
            for v in slice.values() {
                assert!(v.abs() < 1e-12);
            }
        }
        assert_eq!(dec.c_hat(), 1.0);
    }

    #[test]
    fn l2_transform_needs_three_stages() {
        let f = ScalarField::constant(3, 3, 1.0);
        let space = space_from(&f, vec![f.clone(); 2], Fidelity::L2);
        assert!(matches!(
            transform_l2(&space, &f),
            Err(Error::GridTooShort { min: 3, .. })
        ));
    }

    #[test]
    fn reconstruct_zero_weights_gives_constant() {
        let f = seeded_field(5, 5, 9);
        let space = space_from(&f, vec![seeded_field(5, 5, 11), f.clone()], Fidelity::L1);
        let dec = transform_l1(&space, &f).unwrap();
        let filter = FilterSpec::new(vec![0.0, 0.0], 1.0).unwrap();
        let out = reconstruct(&dec, &filter).unwrap();
        for v in out.values() {
            assert_eq!(*v, dec.c_hat());
        }
    }

    #[test]
    fn reconstruct_rejects_length_mismatch() {
        let f = seeded_field(4, 3, 5);
        let space = space_from(&f, vec![f.clone(); 3], Fidelity::L1);
        let dec = transform_l1(&space, &f).unwrap();
        assert!(matches!(
            reconstruct(&dec, &FilterSpec::all_pass(2)),
            Err(Error::FilterLength { .. })
        ));
    }

    #[test]
    fn reconstruction_is_linear_in_the_filter() {
        let f = seeded_field(6, 5, 21);
        let sols: Vec<ScalarField> = (0..3).map(|k| seeded_field(6, 5, 30 + k)).collect();
        let space = space_from(&f, sols, Fidelity::L1);
        let dec = transform_l1(&space, &f).unwrap();
        let fa = FilterSpec::new(vec![0.25, -1.0, 0.5], 0.75).unwrap();
        let fb = FilterSpec::new(vec![1.5, 0.0, -0.25], 0.25).unwrap();
        let fsum = FilterSpec::new(vec![1.75, -1.0, 0.25], 1.0).unwrap();
        let ra = reconstruct(&dec, &fa).unwrap();
        let rb = reconstruct(&dec, &fb).unwrap();
        let rsum = reconstruct(&dec, &fsum).unwrap();
        for ((a, b), s) in ra.values().iter().zip(rb.values()).zip(rsum.values()) {
            assert!((a + b - s).abs() <= 1e-12);
        }
    }

    #[test]
    fn complementary_filters_sum_to_all_pass() {
        let f = seeded_field(6, 6, 40);
        let sols: Vec<ScalarField> = (0..4).map(|k| seeded_field(6, 6, 50 + k)).collect();
        let space = space_from(&f, sols, Fidelity::L1);
        let dec = transform_l1(&space, &f).unwrap();
        let h = FilterSpec::new(vec![1.0, 0.0, 1.0, 0.0], 0.3).unwrap();
        let hc = FilterSpec::new(vec![0.0, 1.0, 0.0, 1.0], 0.7).unwrap();
        let rh = reconstruct(&dec, &h).unwrap();
        let rhc = reconstruct(&dec, &hc).unwrap();
        // Together they reconstruct f - tail + c_hat.
        for (((a, b), fv), tv) in rh
            .values()
            .iter()
            .zip(rhc.values())
            .zip(f.values())
            .zip(dec.tail().values())
        {
            assert!((a + b - (fv - tv + dec.c_hat())).abs() <= 1e-10);
        }
    }

    #[test]
    fn segment_zero_weights_is_empty() {
        let f = seeded_field(5, 4, 60);
        let space = space_from(&f, vec![seeded_field(5, 4, 61), f.clone()], Fidelity::L1);
        let dec = transform_l1(&space, &f).unwrap();
        let mask = segment(&dec, &FilterSpec::new(vec![0.0, 0.0], 1.0).unwrap(), 1e-3).unwrap();
        assert!(mask.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn parseval_residual_conventions() {
        // Constant nonzero data: every slice vanishes, the identity fails
        // completely, residual is exactly 1.
        let f = ScalarField::constant(4, 4, 0.5);
        let space = space_from(&f, vec![f.clone(); 3], Fidelity::L1);
        let dec = transform_l1(&space, &f).unwrap();
        assert_eq!(parseval_residual(&dec, &f).unwrap(), 1.0);
        // Zero data: guarded denominator gives 0.
        let z = ScalarField::zeros(4, 4);
        let space = space_from(&z, vec![z.clone(); 3], Fidelity::L1);
        let dec = transform_l1(&space, &z).unwrap();
        assert_eq!(parseval_residual(&dec, &z).unwrap(), 0.0);
        // Mode mismatch is rejected.
        let sols: Vec<ScalarField> = vec![z.clone(); 3];
        let space = space_from(&z, sols, Fidelity::L2);
        let dec = transform_l2(&space, &z).unwrap();
        assert!(matches!(
            parseval_residual(&dec, &z),
            Err(Error::FidelityMismatch { .. })
        ));
    }
}
