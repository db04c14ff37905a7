//! Gauss-Legendre quadrature over cells and cell pairs.
//!
//! The line kernels are analytic across the diagonal once the continuity
//! branch is in place, so plain tensor rules converge spectrally. Same-cell
//! pairs are nevertheless split at x = y into two triangles (collapsed to
//! tensor form), which keeps nodes off the diagonal ridge; by Hermitian
//! symmetry the two triangles contribute equally. Every integral is
//! computed at two orders and the difference is reported as the error
//! estimate.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::kernel::ContinuousKernel;
use crate::partition::{PartitionCell, TreeIndex};

/// Node-pair distances below this use the full kernel evaluation instead
/// of the factored divided difference.
const FACTOR_NEAR: f64 = 1e-2;

/// Gauss-Legendre rule on [-1, 1].
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> GaussLegendre {
        assert!(n >= 1);
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        for i in 1..=m {
            let mut z = (std::f64::consts::PI * (i as f64 - 0.25) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let mut p0 = 1.0;
                let mut p1 = z;
                for k in 2..=n {
                    let kf = k as f64;
                    let pk = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
                    p0 = p1;
                    p1 = pk;
                }
                dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
                let dz = p1 / dp;
                z -= dz;
                if dz.abs() < 1e-15 {
                    break;
                }
            }
            nodes[i - 1] = -z;
            nodes[n - i] = z;
            let w = 2.0 / ((1.0 - z * z) * dp * dp);
            weights[i - 1] = w;
            weights[n - i] = w;
        }
        GaussLegendre { nodes, weights }
    }

    /// Integrates f over [a, b].
    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&t, &w)| w * f(mid + half * t))
            .sum::<f64>()
            * half
    }

    /// Nodes and weights mapped to [a, b].
    pub fn mapped(&self, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let xs = self.nodes.iter().map(|&t| mid + half * t).collect();
        let ws = self.weights.iter().map(|&w| w * half).collect();
        (xs, ws)
    }
}

/// A cell-pair integral with its two-order error estimate.
#[derive(Debug, Clone, Copy)]
pub struct PairIntegral {
    pub value: f64,
    pub error: f64,
}

struct CellNodes {
    bounds: (f64, f64),
    xs: Vec<f64>,
    ws: Vec<f64>,
    factors: Option<Vec<(f64, f64)>>,
    /// Cell touches an endpoint where the kernel is only Hoelder smooth;
    /// nodes were placed through the quadratic substitution x = lo + w s^2.
    substituted: bool,
}

struct OrderData {
    rule: GaussLegendre,
    cells: HashMap<TreeIndex, CellNodes>,
}

/// Precomputed quadrature data for a fixed kernel over a fixed family of
/// interval cells. Immutable after construction, safe to share across
/// threads.
pub struct LineQuadEngine<'k> {
    kernel: &'k ContinuousKernel,
    lo: OrderData,
    hi: OrderData,
    scale: Option<f64>,
}

impl<'k> LineQuadEngine<'k> {
    /// `order` is the base Gauss-Legendre order per axis; the error
    /// estimate compares against order + 8.
    pub fn new(
        kernel: &'k ContinuousKernel,
        cells: &[&PartitionCell],
        order: usize,
    ) -> Result<LineQuadEngine<'k>> {
        if order < 2 {
            return Err(Error::Config("quadrature order must be >= 2".into()));
        }
        let scale = kernel.factor_scale();
        let build = |n: usize| -> Result<OrderData> {
            let rule = GaussLegendre::new(n);
            let mut map = HashMap::with_capacity(cells.len());
            for cell in cells {
                let (a, b) = interval_of(cell)?;
                let substituted = a == 0.0 && kernel.sqrt_singular_at_zero();
                let (xs, ws) = if substituted {
                    // x = w s^2 turns x^{1/2}-type behaviour smooth in s
                    let (ss, sw) = rule.mapped(0.0, 1.0);
                    let w = b - a;
                    let xs: Vec<f64> = ss.iter().map(|&s| w * s * s).collect();
                    let ws = ss
                        .iter()
                        .zip(&sw)
                        .map(|(&s, &wt)| wt * 2.0 * w * s)
                        .collect();
                    (xs, ws)
                } else {
                    rule.mapped(a, b)
                };
                let factors = if scale.is_some() {
                    Some(
                        xs.iter()
                            .map(|&x| kernel.node_factor(x))
                            .collect::<Result<Vec<_>>>()?,
                    )
                } else {
                    None
                };
                map.insert(
                    cell.index,
                    CellNodes {
                        bounds: (a, b),
                        xs,
                        ws,
                        factors,
                        substituted,
                    },
                );
            }
            Ok(OrderData { rule, cells: map })
        };
        Ok(LineQuadEngine {
            kernel,
            lo: build(order)?,
            hi: build(order + 8)?,
            scale,
        })
    }

    /// Integral of K over C x D with error estimate. C and D must be cells
    /// passed to the constructor.
    pub fn pair_integral(&self, c: &TreeIndex, d: &TreeIndex) -> Result<PairIntegral> {
        let lo = self.pair_at(&self.lo, c, d)?;
        let hi = self.pair_at(&self.hi, c, d)?;
        Ok(PairIntegral {
            value: hi,
            error: (hi - lo).abs(),
        })
    }

    /// Integral of x -> K(x, x) over a cell, with error estimate.
    pub fn diagonal_integral(&self, c: &TreeIndex) -> Result<PairIntegral> {
        let lo = self.diag_at(&self.lo, c)?;
        let hi = self.diag_at(&self.hi, c)?;
        Ok(PairIntegral {
            value: hi,
            error: (hi - lo).abs(),
        })
    }

    fn cell<'a>(data: &'a OrderData, c: &TreeIndex) -> Result<&'a CellNodes> {
        data.cells
            .get(c)
            .ok_or_else(|| Error::Quadrature(format!("cell {c} not registered with the engine")))
    }

    fn diag_at(&self, data: &OrderData, c: &TreeIndex) -> Result<f64> {
        let cn = Self::cell(data, c)?;
        let mut acc = 0.0;
        for (i, &x) in cn.xs.iter().enumerate() {
            acc += cn.ws[i] * self.kernel.line_eval(x, x)?;
        }
        Ok(acc)
    }

    fn pair_at(&self, data: &OrderData, c: &TreeIndex, d: &TreeIndex) -> Result<f64> {
        if c == d {
            return self.same_cell_at(data, c);
        }
        let cn = Self::cell(data, c)?;
        let dn = Self::cell(data, d)?;
        let mut acc = 0.0;
        match (self.scale, &cn.factors, &dn.factors) {
            (Some(s), Some(fc), Some(fd)) => {
                for (i, &x) in cn.xs.iter().enumerate() {
                    let (px, qx) = fc[i];
                    let wi = cn.ws[i];
                    for (j, &y) in dn.xs.iter().enumerate() {
                        let t = x - y;
                        let v = if t.abs() < FACTOR_NEAR {
                            self.kernel.line_eval(x, y)?
                        } else {
                            let (py, qy) = fd[j];
                            (px * qy - qx * py) / (s * t)
                        };
                        acc += wi * dn.ws[j] * v;
                    }
                }
            }
            _ => {
                for (i, &x) in cn.xs.iter().enumerate() {
                    let wi = cn.ws[i];
                    for (j, &y) in dn.xs.iter().enumerate() {
                        acc += wi * dn.ws[j] * self.kernel.line_eval(x, y)?;
                    }
                }
            }
        }
        Ok(acc)
    }

    /// Same-cell square, split at the diagonal. The kernel is symmetric,
    /// so the square integral is twice the lower triangle
    /// {(x, y) : a <= y <= x <= b}, collapsed to a tensor rule by
    /// y = a + (x - a) t with Jacobian (x - a).
    fn same_cell_at(&self, data: &OrderData, c: &TreeIndex) -> Result<f64> {
        let cn = Self::cell(data, c)?;
        let (a, _b) = cn.bounds;
        let mut acc = 0.0;
        for (i, &x) in cn.xs.iter().enumerate() {
            let mut inner = 0.0;
            for (j, &t) in data.rule.nodes.iter().enumerate() {
                let u = 0.5 * (t + 1.0); // node on [0, 1]
                let w = 0.5 * data.rule.weights[j];
                if cn.substituted {
                    // a = 0 here; y = x u^2 keeps the inner integrand smooth
                    let y = x * u * u;
                    inner += w * 2.0 * x * u * self.kernel.line_eval(x, y)?;
                } else {
                    let y = a + (x - a) * u;
                    inner += w * (x - a) * self.kernel.line_eval(x, y)?;
                }
            }
            acc += cn.ws[i] * inner;
        }
        Ok(2.0 * acc)
    }
}

fn interval_of(cell: &PartitionCell) -> Result<(f64, f64)> {
    match cell.geometry {
        crate::geom::CellGeometry::Interval { lo, hi } => Ok((lo, hi)),
        _ => Err(Error::Quadrature(
            "line quadrature needs interval cells".into(),
        )),
    }
}

/// Quadrature nodes and weights for one interval cell, honoring the same
/// endpoint substitution the engine applies for kernels that are only
/// Hoelder continuous at zero.
pub(crate) fn line_cell_nodes(
    kernel: &ContinuousKernel,
    cell: &PartitionCell,
    rule: &GaussLegendre,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let (a, b) = interval_of(cell)?;
    if a == 0.0 && kernel.sqrt_singular_at_zero() {
        let (ss, sw) = rule.mapped(0.0, 1.0);
        let w = b - a;
        let xs = ss.iter().map(|&s| w * s * s).collect();
        let ws = ss
            .iter()
            .zip(&sw)
            .map(|(&s, &wt)| wt * 2.0 * w * s)
            .collect();
        Ok((xs, ws))
    } else {
        Ok(rule.mapped(a, b))
    }
}
