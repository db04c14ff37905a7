//! Reference measures for the supported domains.

use serde::{Deserialize, Serialize};

use crate::geom::{CellGeometry, Point};
use crate::special::gaussian_interval_mass;

/// The measure the kernels act against: Lebesgue on the line or half-line,
/// or the standard planar Gaussian (1/pi) e^{-|x|^2} dx.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ReferenceMeasure {
    Lebesgue1D,
    LebesgueHalfLine,
    GaussianPlane,
}

impl ReferenceMeasure {
    pub fn dimension(&self) -> usize {
        match self {
            ReferenceMeasure::Lebesgue1D | ReferenceMeasure::LebesgueHalfLine => 1,
            ReferenceMeasure::GaussianPlane => 2,
        }
    }

    /// Density with respect to Lebesgue measure; strictly positive on the
    /// domain of the measure.
    pub fn density(&self, p: Point) -> f64 {
        match (self, p) {
            (ReferenceMeasure::Lebesgue1D, Point::One(_)) => 1.0,
            (ReferenceMeasure::LebesgueHalfLine, Point::One(x)) => {
                if x >= 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            (ReferenceMeasure::GaussianPlane, Point::Two(x, y)) => {
                (-(x * x + y * y)).exp() / std::f64::consts::PI
            }
            _ => 0.0,
        }
    }

    /// Measure of a cell. For the Gaussian plane the density factorizes, so
    /// the mass is a product of exact one-dimensional erf differences.
    pub fn cell_mass(&self, cell: &CellGeometry) -> f64 {
        match (self, cell) {
            (
                ReferenceMeasure::Lebesgue1D | ReferenceMeasure::LebesgueHalfLine,
                CellGeometry::Interval { lo, hi },
            ) => hi - lo,
            (ReferenceMeasure::GaussianPlane, CellGeometry::Rect { x0, x1, y0, y1 }) => {
                gaussian_interval_mass(*x0, *x1) * gaussian_interval_mass(*y0, *y1)
            }
            _ => 0.0,
        }
    }
}

impl std::fmt::Display for ReferenceMeasure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ReferenceMeasure::Lebesgue1D => write!(f, "lebesgue"),
            ReferenceMeasure::LebesgueHalfLine => write!(f, "lebesgue-half-line"),
            ReferenceMeasure::GaussianPlane => write!(f, "gaussian-plane"),
        }
    }
}
