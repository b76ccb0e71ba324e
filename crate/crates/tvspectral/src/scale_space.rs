//! Forward variational scale-space: denoising solutions swept over an
//! increasing grid of regularization strengths.
//!
//! Stage 0 warm-starts from the data itself (the scale-space treats the
//! zero-scale solution as `f`), every later stage from the previous primal
//! and dual iterates. Stages are sequentially dependent; separate sweeps
//! are independent.

use crate::error::{Error, Result};
use crate::grid::{ScalarField, VectorField};
use crate::solver::{solve_denoise, EnergyReport, Fidelity, SolverConfig};

/// How a scale grid was constructed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Spacing {
    Linear,
    Logarithmic,
    Explicit,
}

impl Spacing {
    pub fn as_str(self) -> &'static str {
        match self {
            Spacing::Linear => "linear",
            Spacing::Logarithmic => "logarithmic",
            Spacing::Explicit => "explicit",
        }
    }
}

impl std::str::FromStr for Spacing {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "linear" => Ok(Spacing::Linear),
            "logarithmic" | "log" => Ok(Spacing::Logarithmic),
            "explicit" => Ok(Spacing::Explicit),
            other => Err(Error::MalformedConfig(format!(
                "unknown spacing {other:?} (expected linear or logarithmic)"
            ))),
        }
    }
}

/// Strictly increasing grid of positive regularization strengths.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaleGrid {
    t_values: Vec<f64>,
    spacing: Spacing,
}

impl ScaleGrid {
    /// Wrap explicit scale values; they must be finite, positive and
    /// strictly increasing, with at least two entries.
    pub fn explicit(t_values: Vec<f64>) -> Result<Self> {
        Self::validated(t_values, Spacing::Explicit)
    }

    /// Wrap scale values that carry a known spacing tag (deserialization).
    pub fn from_values(t_values: Vec<f64>, spacing: Spacing) -> Result<Self> {
        Self::validated(t_values, spacing)
    }

    fn validated(t_values: Vec<f64>, spacing: Spacing) -> Result<Self> {
        if t_values.len() < 2 {
            return Err(Error::GridTooShort {
                min: 2,
                len: t_values.len(),
            });
        }
        if !t_values.iter().all(|t| t.is_finite() && *t > 0.0) {
            return Err(Error::InvalidGrid(
                "scale values must be positive and finite".into(),
            ));
        }
        if !t_values.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::InvalidGrid(
                "scale values must be strictly increasing".into(),
            ));
        }
        Ok(Self { t_values, spacing })
    }

    pub fn values(&self) -> &[f64] {
        &self.t_values
    }

    pub fn len(&self) -> usize {
        self.t_values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t_values.is_empty()
    }

    pub fn spacing(&self) -> Spacing {
        self.spacing
    }

    /// Trapezoidal quadrature weights over the (possibly nonuniform) grid.
    pub fn quadrature_weights(&self) -> Vec<f64> {
        let t = &self.t_values;
        let n = t.len();
        let mut w = vec![0.0; n];
        w[0] = (t[1] - t[0]) / 2.0;
        w[n - 1] = (t[n - 1] - t[n - 2]) / 2.0;
        for i in 1..n - 1 {
            w[i] = (t[i + 1] - t[i - 1]) / 2.0;
        }
        w
    }
}

/// Build an `n`-point grid from `t_min` to `t_max` with equal increments
/// (linear) or equal ratios (logarithmic); endpoints are hit exactly.
pub fn make_scale_grid(n: usize, t_min: f64, t_max: f64, spacing: Spacing) -> Result<ScaleGrid> {
    if n < 2 {
        return Err(Error::GridTooShort { min: 2, len: n });
    }
    if !(t_min.is_finite() && t_max.is_finite() && t_min > 0.0 && t_min < t_max) {
        return Err(Error::InvalidGrid(format!(
            "need 0 < t_min < t_max, got t_min={t_min}, t_max={t_max}"
        )));
    }
    let steps = (n - 1) as f64;
    let mut t_values: Vec<f64> = match spacing {
        Spacing::Linear => (0..n)
            .map(|i| t_min + (t_max - t_min) * (i as f64 / steps))
            .collect(),
        Spacing::Logarithmic => (0..n)
            .map(|i| t_min * (t_max / t_min).powf(i as f64 / steps))
            .collect(),
        Spacing::Explicit => {
            return Err(Error::InvalidGrid(
                "explicit spacing needs explicit values; use ScaleGrid::explicit".into(),
            ))
        }
    };
    t_values[0] = t_min;
    t_values[n - 1] = t_max;
    ScaleGrid::validated(t_values, spacing)
}

/// Scale grid together with the solution field and energy report per scale.
#[derive(Debug, Clone)]
pub struct ScaleSpace {
    grid: ScaleGrid,
    solutions: Vec<ScalarField>,
    fidelity: Fidelity,
    source_checksum: u64,
    reports: Vec<EnergyReport>,
}

impl ScaleSpace {
    /// Assemble a scale space from precomputed parts, validating lengths and
    /// dimensions against the source image.
    pub fn from_parts(
        grid: ScaleGrid,
        solutions: Vec<ScalarField>,
        fidelity: Fidelity,
        source: &ScalarField,
        reports: Vec<EnergyReport>,
    ) -> Result<Self> {
        if solutions.len() != grid.len() || reports.len() != grid.len() {
            return Err(Error::InvalidGrid(format!(
                "expected {} solutions and reports, got {} and {}",
                grid.len(),
                solutions.len(),
                reports.len()
            )));
        }
        for u in &solutions {
            source.same_shape(u)?;
        }
        Ok(Self {
            grid,
            solutions,
            fidelity,
            source_checksum: source.checksum(),
            reports,
        })
    }

    pub fn grid(&self) -> &ScaleGrid {
        &self.grid
    }

    pub fn solutions(&self) -> &[ScalarField] {
        &self.solutions
    }

    pub fn fidelity(&self) -> Fidelity {
        self.fidelity
    }

    pub fn source_checksum(&self) -> u64 {
        self.source_checksum
    }

    pub fn reports(&self) -> &[EnergyReport] {
        &self.reports
    }
}

/// Sweep the denoising solver over the grid, warm-starting each stage from
/// the previous one. Solver failures carry the failing stage index.
pub fn compute_scale_space(
    f: &ScalarField,
    grid: &ScaleGrid,
    fidelity: Fidelity,
    config: &SolverConfig,
) -> Result<ScaleSpace> {
    let mut solutions = Vec::with_capacity(grid.len());
    let mut reports = Vec::with_capacity(grid.len());
    let mut warm_u = f.clone();
    let mut warm_g = VectorField::zeros(f.width(), f.height());
    for (stage, &t) in grid.values().iter().enumerate() {
        let sol = solve_denoise(f, t, fidelity, config, Some((&warm_u, &warm_g))).map_err(
            |source| Error::Stage {
                stage,
                source: Box::new(source),
            },
        )?;
        solutions.push(sol.u.clone());
        reports.push(sol.report);
        warm_u = sol.u;
        warm_g = sol.dual;
    }
    Ok(ScaleSpace {
        grid: grid.clone(),
        solutions,
        fidelity,
        source_checksum: f.checksum(),
        reports,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_grid_examples() {
        let g = make_scale_grid(3, 1.0, 3.0, Spacing::Linear).unwrap();
        assert_eq!(g.values(), &[1.0, 2.0, 3.0]);
        let g = make_scale_grid(20, 0.5, 14.0, Spacing::Linear).unwrap();
        assert_eq!(g.len(), 20);
        assert_eq!(g.values()[0], 0.5);
        assert_eq!(g.values()[19], 14.0);
        let incs: Vec<f64> = g.values().windows(2).map(|w| w[1] - w[0]).collect();
        for inc in &incs {
            assert!((inc - incs[0]).abs() <= 1e-12);
        }
    }

    #[test]
    fn logarithmic_grid_has_equal_ratios() {
        let g = make_scale_grid(3, 1.0, 4.0, Spacing::Logarithmic).unwrap();
        assert!((g.values()[1] - 2.0).abs() < 1e-12);
        assert_eq!(g.values()[0], 1.0);
        assert_eq!(g.values()[2], 4.0);
    }

    #[test]
    fn grid_construction_errors() {
        assert!(make_scale_grid(1, 1.0, 2.0, Spacing::Linear).is_err());
        assert!(make_scale_grid(5, 2.0, 2.0, Spacing::Linear).is_err());
        assert!(make_scale_grid(5, 3.0, 2.0, Spacing::Linear).is_err());
        assert!(make_scale_grid(5, 0.0, 2.0, Spacing::Linear).is_err());
        assert!(ScaleGrid::explicit(vec![1.0]).is_err());
        assert!(ScaleGrid::explicit(vec![1.0, 1.0]).is_err());
        assert!(ScaleGrid::explicit(vec![1.0, 0.5]).is_err());
        assert!(ScaleGrid::explicit(vec![-1.0, 0.5]).is_err());
        assert!(ScaleGrid::explicit(vec![0.5, 1.0, 7.0]).is_ok());
    }

    #[test]
    fn quadrature_weights_on_uniform_grid() {
        let g = make_scale_grid(4, 1.0, 4.0, Spacing::Linear).unwrap();
        assert_eq!(g.quadrature_weights(), vec![0.5, 1.0, 1.0, 0.5]);
    }

    #[test]
    fn constant_data_yields_constant_scale_space() {
        let f = ScalarField::constant(6, 5, 0.3);
        let grid = make_scale_grid(4, 0.5, 4.0, Spacing::Linear).unwrap();
        let config = SolverConfig::test_profile();
        let space = compute_scale_space(&f, &grid, Fidelity::L1, &config).unwrap();
        assert_eq!(space.solutions().len(), 4);
        for u in space.solutions() {
            assert_eq!(u.values(), f.values());
        }
        assert_eq!(space.source_checksum(), f.checksum());
        for report in space.reports() {
            assert_eq!(report.total, 0.0);
        }
    }

    #[test]
    fn from_parts_validates_lengths_and_shapes() {
        let f = ScalarField::zeros(3, 3);
        let grid = make_scale_grid(3, 1.0, 3.0, Spacing::Linear).unwrap();
        let report = EnergyReport {
            fidelity_term: 0.0,
            tv_term: 0.0,
            total: 0.0,
            iterations_used: 0,
        };
        assert!(ScaleSpace::from_parts(
            grid.clone(),
            vec![f.clone(); 2],
            Fidelity::L1,
            &f,
            vec![report; 3],
        )
        .is_err());
        assert!(ScaleSpace::from_parts(
            grid.clone(),
            vec![f.clone(), f.clone(), ScalarField::zeros(2, 2)],
            Fidelity::L1,
            &f,
            vec![report; 3],
        )
        .is_err());
        assert!(
            ScaleSpace::from_parts(grid, vec![f.clone(); 3], Fidelity::L1, &f, vec![report; 3])
                .is_ok()
        );
    }
}
