//! Exact sampling and exact probability computation for determinantal
//! point processes on finite ground sets.
//!
//! The sampler is the standard spectral algorithm: draw an independent
//! Bernoulli(lambda_k) for every eigenvalue to select a set of
//! eigenvectors, then thin the resulting projection kernel one point at a
//! time, eliminating the chosen coordinate and re-orthonormalizing after
//! each pick. Subset probabilities of the draw match det K|_A exactly.
//!
//! `enumerate_law` is the brute-force companion: for every subset A it
//! evaluates |det M_A| where M_A takes K's columns on A and (K - I)'s on
//! the complement, which is the exact point probability P(X = A). It is
//! the oracle the sampler is tested against.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;

use crate::error::{Error, Result};
use crate::project::ProjectedKernel;

/// Selection weights are sums of squared magnitudes, so they cannot go
/// negative; what can drift is their total, which must equal the remaining
/// rank. Drift beyond this aborts the draw.
const MASS_DRIFT_LIMIT: f64 = 1e-6;

/// A determinantal point process on a finite ground set, ready to sample.
pub struct DiscreteDpp {
    matrix: DMatrix<Complex64>,
    eigenvalues: Vec<f64>,
    eigenvectors: DMatrix<Complex64>,
}

impl DiscreteDpp {
    /// Wraps a projected kernel (clipped spectrum, eigenpairs reused).
    pub fn from_projected(p: &ProjectedKernel) -> DiscreteDpp {
        DiscreteDpp {
            matrix: p.matrix.clone(),
            eigenvalues: p.eigenvalues.clone(),
            eigenvectors: p.eigenvectors.clone(),
        }
    }

    /// Validates and eigendecomposes an arbitrary Hermitian matrix with
    /// spectrum in [-slack, 1 + slack].
    pub fn from_matrix(matrix: DMatrix<Complex64>, slack: f64) -> Result<DiscreteDpp> {
        let n = matrix.nrows();
        if matrix.ncols() != n {
            return Err(Error::Domain("kernel matrix must be square".into()));
        }
        let mut defect = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                defect = defect.max((matrix[(i, j)] - matrix[(j, i)].conj()).norm());
            }
        }
        if defect > 1e-12 {
            return Err(Error::Domain(format!(
                "matrix not Hermitian: defect {defect:.3e}"
            )));
        }
        let eig = nalgebra::SymmetricEigen::new(matrix.clone());
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| {
            eig.eigenvalues[b]
                .partial_cmp(&eig.eigenvalues[a])
                .unwrap()
                .then(a.cmp(&b))
        });
        let mut values = Vec::with_capacity(n);
        for &k in &order {
            let lam = eig.eigenvalues[k];
            if lam < -slack || lam > 1.0 + slack {
                return Err(Error::Spectrum {
                    value: lam,
                    lo: -slack,
                    hi: 1.0 + slack,
                });
            }
            values.push(lam.clamp(0.0, 1.0));
        }
        let vectors = DMatrix::<Complex64>::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
        Ok(DiscreteDpp {
            matrix,
            eigenvalues: values,
            eigenvectors: vectors,
        })
    }

    pub fn n(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn kernel_matrix(&self) -> &DMatrix<Complex64> {
        &self.matrix
    }

    /// One exact draw; returns the selected positions in increasing order.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Vec<usize>> {
        let n = self.n();
        // phase 1: Bernoulli selection of eigenvectors
        let mut selected: Vec<usize> = Vec::new();
        for (k, &lam) in self.eigenvalues.iter().enumerate() {
            if lam <= 0.0 || k >= self.eigenvectors.ncols() {
                continue;
            }
            if lam >= 1.0 || rng.gen::<f64>() < lam {
                selected.push(k);
            }
        }
        if selected.is_empty() {
            return Ok(Vec::new());
        }
        // phase 2: sequential thinning of the projection onto the span
        let mut v = DMatrix::<Complex64>::from_fn(n, selected.len(), |r, c| {
            self.eigenvectors[(r, selected[c])]
        });
        let mut points = Vec::with_capacity(selected.len());
        while v.ncols() > 0 {
            let k = v.ncols();
            // selection probabilities: row norms / remaining rank
            let mut cum = Vec::with_capacity(n);
            let mut total = 0.0;
            for i in 0..n {
                let mut p = 0.0;
                for j in 0..k {
                    p += v[(i, j)].norm_sqr();
                }
                if p < 0.0 {
                    p = 0.0;
                }
                total += p;
                cum.push(total);
            }
            if total <= 0.0 || (total - k as f64).abs() > MASS_DRIFT_LIMIT * k as f64 {
                return Err(Error::Numeric(format!(
                    "selection mass {total} drifted from remaining rank {k}"
                )));
            }
            let u = rng.gen::<f64>() * total;
            let pick = cum.partition_point(|&c| c <= u).min(n - 1);

            points.push(pick);
            if k == 1 {
                break;
            }
            // eliminate coordinate `pick`: pivot on the column with the
            // largest entry there, clear the row from the others, drop it
            let mut pivot = 0usize;
            let mut best = -1.0;
            for j in 0..k {
                let m = v[(pick, j)].norm();
                if m > best {
                    best = m;
                    pivot = j;
                }
            }
            if best <= 0.0 {
                return Err(Error::Numeric(
                    "selected a coordinate with no support in the span".into(),
                ));
            }
            let pcol = v.column(pivot).into_owned();
            let pval = pcol[pick];
            let mut next = DMatrix::<Complex64>::zeros(n, k - 1);
            let mut out = 0usize;
            for j in 0..k {
                if j == pivot {
                    continue;
                }
                let fac = v[(pick, j)] / pval;
                for r in 0..n {
                    next[(r, out)] = v[(r, j)] - fac * pcol[r];
                }
                out += 1;
            }
            // re-orthonormalize to keep row norms exact probabilities
            for c in 0..next.ncols() {
                for prev in 0..c {
                    let proj: Complex64 = next.column(prev).dotc(&next.column(c));
                    let prevcol = next.column(prev).into_owned();
                    let mut col = next.column_mut(c);
                    col.zip_apply(&prevcol, |x, p| *x -= proj * p);
                }
                let norm = next.column(c).norm();
                if norm <= 0.0 {
                    return Err(Error::Numeric("degenerate span while thinning".into()));
                }
                let mut col = next.column_mut(c);
                col.apply(|x| *x /= norm);
            }
            v = next;
        }
        points.sort_unstable();
        // duplicates would mean the elimination failed to zero a row
        for w in points.windows(2) {
            if w[0] == w[1] {
                return Err(Error::Numeric(
                    "duplicate point in determinantal draw".into(),
                ));
            }
        }
        Ok(points)
    }

    /// Correlation of a tuple of distinct positions: det of the submatrix.
    pub fn correlation(&self, tuple: &[usize]) -> Result<f64> {
        let mut seen = std::collections::HashSet::new();
        for &i in tuple {
            if i >= self.n() {
                return Err(Error::Domain(format!("index {i} out of range")));
            }
            if !seen.insert(i) {
                return Err(Error::Domain(
                    "correlation tuples must have distinct indices".into(),
                ));
            }
        }
        if tuple.is_empty() {
            return Ok(1.0);
        }
        let m = tuple.len();
        let sub = DMatrix::<Complex64>::from_fn(m, m, |r, c| self.matrix[(tuple[r], tuple[c])]);
        let det = sub.determinant();
        Ok(det.re)
    }

    /// Exact law over all 2^n subsets; ground sets above 20 are refused.
    /// Probabilities are |det M_A| with M_A described in the module docs.
    pub fn enumerate_law(&self) -> Result<Vec<(u32, f64)>> {
        let n = self.n();
        if n > 20 {
            return Err(Error::Domain(format!(
                "enumeration over 2^{n} subsets refused (max ground set 20)"
            )));
        }
        let mut out = Vec::with_capacity(1 << n);
        for mask in 0u32..(1u32 << n) {
            let m = DMatrix::<Complex64>::from_fn(n, n, |r, c| {
                let v = self.matrix[(r, c)];
                if mask >> c & 1 == 1 {
                    v
                } else {
                    v - if r == c {
                        Complex64::new(1.0, 0.0)
                    } else {
                        Complex64::new(0.0, 0.0)
                    }
                }
            });
            out.push((mask, m.determinant().norm()));
        }
        Ok(out)
    }

    /// Probability that the draw is empty.
    pub fn void_probability(&self) -> f64 {
        self.eigenvalues.iter().map(|l| 1.0 - l).product()
    }

    /// Expected number of points (the trace).
    pub fn expected_points(&self) -> f64 {
        self.eigenvalues.iter().sum()
    }

    /// Histogram of grouped counts over seeded draws: `groups[i]` is the
    /// group of ground-set position i, the histogram keys are per-group
    /// count vectors.
    pub fn sample_count_statistics<R: Rng + ?Sized>(
        &self,
        groups: &[usize],
        draws: u64,
        rng: &mut R,
    ) -> Result<std::collections::BTreeMap<Vec<u32>, u64>> {
        if groups.len() != self.n() {
            return Err(Error::Domain(
                "group map length must match ground set".into(),
            ));
        }
        let n_groups = groups.iter().copied().max().map_or(0, |g| g + 1);
        let mut hist = std::collections::BTreeMap::new();
        for _ in 0..draws {
            let pts = self.sample(rng)?;
            let mut counts = vec![0u32; n_groups];
            for p in pts {
                counts[groups[p]] += 1;
            }
            *hist.entry(counts).or_insert(0) += 1;
        }
        Ok(hist)
    }
}

/// A random Hermitian matrix with spectrum drawn uniformly from [0, 1]:
/// eigenvectors from the QR factor of a complex Gaussian matrix. A test
/// fixture generator for the sampler-versus-enumeration comparisons.
pub fn random_hermitian_kernel<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DMatrix<Complex64> {
    use rand_distr::StandardNormal;
    let g = DMatrix::<Complex64>::from_fn(n, n, |_, _| {
        Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
    });
    let qr = g.qr();
    let q = qr.q();
    let lambda = DVector::<Complex64>::from_fn(n, |_, _| Complex64::new(rng.gen::<f64>(), 0.0));
    let mut m = DMatrix::<Complex64>::zeros(n, n);
    for k in 0..n {
        let col = q.column(k);
        for r in 0..n {
            for c in 0..n {
                m[(r, c)] += lambda[k] * col[r] * col[c].conj();
            }
        }
    }
    // clean the Hermitian defect left by accumulation order
    let adj = m.adjoint();
    (m + adj) * Complex64::new(0.5, 0.0)
}
