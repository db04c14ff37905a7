//! Points, dyadic cells, and windows.
//!
//! All cell endpoints are dyadic rationals with small denominators, so they
//! are exact in f64 and set operations (containment, intersection) are
//! exact comparisons, not tolerance checks.

use serde::{Deserialize, Serialize};

/// A point of the underlying domain: an interval point or a plane point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Point {
    One(f64),
    Two(f64, f64),
}

impl Point {
    pub fn dimension(&self) -> usize {
        match self {
            Point::One(_) => 1,
            Point::Two(..) => 2,
        }
    }
}

impl std::fmt::Display for Point {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Point::One(x) => write!(f, "{x}"),
            Point::Two(x, y) => write!(f, "{x},{y}"),
        }
    }
}

/// Half-open dyadic cell: an interval [lo, hi) or a rectangle
/// [x0, x1) x [y0, y1).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CellGeometry {
    Interval { lo: f64, hi: f64 },
    Rect { x0: f64, x1: f64, y0: f64, y1: f64 },
}

impl CellGeometry {
    pub fn contains(&self, p: Point) -> bool {
        match (self, p) {
            (CellGeometry::Interval { lo, hi }, Point::One(x)) => *lo <= x && x < *hi,
            (CellGeometry::Rect { x0, x1, y0, y1 }, Point::Two(x, y)) => {
                *x0 <= x && x < *x1 && *y0 <= y && y < *y1
            }
            _ => false,
        }
    }

    /// Set intersection; None when empty. Dyadic cells of the same tree are
    /// always nested or disjoint, but this handles general overlaps too.
    pub fn intersect(&self, other: &CellGeometry) -> Option<CellGeometry> {
        match (self, other) {
            (CellGeometry::Interval { lo: a, hi: b }, CellGeometry::Interval { lo: c, hi: d }) => {
                let lo = a.max(*c);
                let hi = b.min(*d);
                (lo < hi).then_some(CellGeometry::Interval { lo, hi })
            }
            (
                CellGeometry::Rect {
                    x0: a0,
                    x1: a1,
                    y0: b0,
                    y1: b1,
                },
                CellGeometry::Rect {
                    x0: c0,
                    x1: c1,
                    y0: d0,
                    y1: d1,
                },
            ) => {
                let x0 = a0.max(*c0);
                let x1 = a1.min(*c1);
                let y0 = b0.max(*d0);
                let y1 = b1.min(*d1);
                (x0 < x1 && y0 < y1).then_some(CellGeometry::Rect { x0, x1, y0, y1 })
            }
            _ => None,
        }
    }

    /// True when `self` is a subset of `other` (exact endpoint comparisons).
    pub fn subset_of(&self, other: &CellGeometry) -> bool {
        match (self, other) {
            (CellGeometry::Interval { lo: a, hi: b }, CellGeometry::Interval { lo: c, hi: d }) => {
                c <= a && b <= d
            }
            (
                CellGeometry::Rect {
                    x0: a0,
                    x1: a1,
                    y0: b0,
                    y1: b1,
                },
                CellGeometry::Rect {
                    x0: c0,
                    x1: c1,
                    y0: d0,
                    y1: d1,
                },
            ) => c0 <= a0 && a1 <= c1 && d0 <= b0 && b1 <= d1,
            _ => false,
        }
    }

    pub fn dimension(&self) -> usize {
        match self {
            CellGeometry::Interval { .. } => 1,
            CellGeometry::Rect { .. } => 2,
        }
    }
}

impl std::fmt::Display for CellGeometry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CellGeometry::Interval { lo, hi } => write!(f, "[{lo},{hi})"),
            CellGeometry::Rect { x0, x1, y0, y1 } => {
                write!(f, "[{x0},{x1})x[{y0},{y1})")
            }
        }
    }
}

/// Integer-aligned observation window: level-1 cells are the unit cells it
/// contains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Window {
    One { lo: i64, hi: i64 },
    Two { x0: i64, x1: i64, y0: i64, y1: i64 },
}

impl Window {
    pub fn unit_cell_count(&self) -> usize {
        match self {
            Window::One { lo, hi } => (hi - lo).max(0) as usize,
            Window::Two { x0, x1, y0, y1 } => ((x1 - x0).max(0) * (y1 - y0).max(0)) as usize,
        }
    }

    pub fn geometry(&self) -> CellGeometry {
        match *self {
            Window::One { lo, hi } => CellGeometry::Interval {
                lo: lo as f64,
                hi: hi as f64,
            },
            Window::Two { x0, x1, y0, y1 } => CellGeometry::Rect {
                x0: x0 as f64,
                x1: x1 as f64,
                y0: y0 as f64,
                y1: y1 as f64,
            },
        }
    }

    pub fn contains(&self, p: Point) -> bool {
        self.geometry().contains(p)
    }

    pub fn dimension(&self) -> usize {
        match self {
            Window::One { .. } => 1,
            Window::Two { .. } => 2,
        }
    }
}

impl std::fmt::Display for Window {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Window::One { lo, hi } => write!(f, "{lo}..{hi}"),
            Window::Two { x0, x1, y0, y1 } => write!(f, "{x0}..{x1}x{y0}..{y1}"),
        }
    }
}
