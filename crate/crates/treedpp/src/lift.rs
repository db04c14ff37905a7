//! The lifted point process: tree indices drawn from the discrete process,
//! each index independently marked with a point from |f_i|^2 dm on its
//! support cell, then unlabeled to a configuration on the domain.
//!
//! Restricted to level-l cell counts, the unlabeled law does not depend on
//! the level the lift was built at: a finer lift refines the same
//! underlying process. The consistency experiment drives two lifts at
//! different levels with matched resolution and compares the coarse count
//! laws, exactly where the ground sets are small enough to enumerate and
//! empirically otherwise.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dpp::DiscreteDpp;
use crate::error::{Error, Result};
use crate::geom::Point;
use crate::kernel::ContinuousKernel;
use crate::partition::{TreeIndex, TreeSpace};
use crate::project::{project_kernel, ProjectedKernel, ProjectionConfig};
use crate::special::gamma_q;
use crate::stream::replica_rng;

/// One draw of the lift: selected indices with their marks.
#[derive(Debug, Clone)]
pub struct LiftedSample {
    pub pairs: Vec<(TreeIndex, Point)>,
}

/// An unlabeled finite configuration (a multiset of points).
#[derive(Debug, Clone)]
pub struct PointConfiguration {
    pub points: Vec<Point>,
}

impl LiftedSample {
    /// Forgets the indices.
    pub fn unlabel(&self) -> PointConfiguration {
        PointConfiguration {
            points: self.pairs.iter().map(|(_, p)| *p).collect(),
        }
    }
}

/// Samples the lift of a projected kernel.
pub struct LiftSampler<'a> {
    space: &'a TreeSpace,
    projected: &'a ProjectedKernel,
    dpp: DiscreteDpp,
}

impl<'a> LiftSampler<'a> {
    pub fn new(space: &'a TreeSpace, projected: &'a ProjectedKernel) -> LiftSampler<'a> {
        LiftSampler {
            space,
            projected,
            dpp: DiscreteDpp::from_projected(projected),
        }
    }

    pub fn dpp(&self) -> &DiscreteDpp {
        &self.dpp
    }

    /// Index draw plus independent marks.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<LiftedSample> {
        let positions = self.dpp.sample(rng)?;
        let mut pairs = Vec::with_capacity(positions.len());
        for pos in positions {
            let f = &self.projected.basis[pos];
            let mark = self.space.sample_mark(f, rng);
            debug_assert!(f.support.geometry.contains(mark));
            pairs.push((self.projected.indices[pos], mark));
        }
        Ok(LiftedSample { pairs })
    }
}

/// Counts per level-l cell in canonical cell order; points outside the
/// window are an error.
pub fn cell_counts(space: &TreeSpace, config: &PointConfiguration, level: u8) -> Result<Vec<u32>> {
    let cells = space.cells(level)?;
    let slot: std::collections::HashMap<TreeIndex, usize> = cells
        .iter()
        .enumerate()
        .map(|(k, c)| (c.index, k))
        .collect();
    let mut counts = vec![0u32; cells.len()];
    for &p in &config.points {
        let idx = space.locate(p, level)?;
        counts[slot[&idx]] += 1;
    }
    Ok(counts)
}

/// Recomputes coarse counts from fine counts through the nesting map.
pub fn coarsen_counts(
    space: &TreeSpace,
    fine_counts: &[u32],
    fine: u8,
    coarse: u8,
) -> Result<Vec<u32>> {
    if coarse > fine {
        return Err(Error::Domain(
            "coarse level must not exceed fine level".into(),
        ));
    }
    let fine_cells = space.cells(fine)?;
    if fine_cells.len() != fine_counts.len() {
        return Err(Error::Domain("fine count vector length mismatch".into()));
    }
    let coarse_cells = space.cells(coarse)?;
    let slot: std::collections::HashMap<TreeIndex, usize> = coarse_cells
        .iter()
        .enumerate()
        .map(|(k, c)| (c.index, k))
        .collect();
    let mut out = vec![0u32; coarse_cells.len()];
    for (cell, &n) in fine_cells.iter().zip(fine_counts) {
        let anc = TreeIndex::new(
            cell.index.root,
            cell.index.path.prefix(coarse as usize - 1),
            coarse,
        )?;
        out[slot[&anc]] += n;
    }
    Ok(out)
}

/// The coarse-level cell containing an index's support.
fn coarse_cell_of_index(index: &TreeIndex, coarse: u8) -> Result<TreeIndex> {
    if (index.level as usize) < coarse as usize || index.depth() < coarse as usize {
        return Err(Error::Domain(format!(
            "index {index} cannot be classified at level {coarse}"
        )));
    }
    TreeIndex::new(index.root, index.path.prefix(coarse as usize - 1), coarse)
}

// ---------------------------------------------------------------------------
// Two-level consistency experiment
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConsistencyConfig {
    pub coarse_level: u8,
    pub fine_level: u8,
    /// Rank bound at the coarse level. The fine level uses
    /// rank_max - (fine - coarse) so both truncations span the same
    /// resolution and therefore compress the identical operator.
    pub rank_max: u8,
    pub draws: u64,
    pub seed: u64,
    pub quad_order: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OutcomeRow {
    pub counts: Vec<u32>,
    pub coarse_freq: u64,
    pub fine_freq: u64,
    /// Pooled binomial 3-sigma band on the frequency difference.
    pub band: f64,
    pub within_band: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConsistencyReport {
    pub kernel: String,
    pub coarse_level: u8,
    pub fine_level: u8,
    pub coarse_rank_max: u8,
    pub fine_rank_max: u8,
    pub draws: u64,
    pub seed: u64,
    pub outcomes: Vec<OutcomeRow>,
    pub chi_square: f64,
    pub dof: usize,
    pub p_value: f64,
    /// Total-variation distance between the exact pushforward laws, when
    /// both ground sets are small enough to enumerate.
    pub exact_distance: Option<f64>,
    pub pass: bool,
}

/// Runs the lift at two levels and compares the coarse cell-count laws.
pub fn consistency_experiment(
    space: &TreeSpace,
    kernel: &ContinuousKernel,
    cfg: &ConsistencyConfig,
) -> Result<ConsistencyReport> {
    if cfg.fine_level <= cfg.coarse_level {
        return Err(Error::Config("fine level must exceed coarse level".into()));
    }
    let gap = cfg.fine_level - cfg.coarse_level;
    if cfg.rank_max <= gap {
        return Err(Error::Config(format!(
            "rank_max {} too small to match resolution across levels {} and {}",
            cfg.rank_max, cfg.coarse_level, cfg.fine_level
        )));
    }
    let fine_rank = cfg.rank_max - gap;

    if let ContinuousKernel::FiniteRank(fr) = kernel {
        // the fixture must lie inside both truncated spans
        let max_depth = cfg.coarse_level as usize + cfg.rank_max as usize - 1;
        for f in &fr.functions {
            if f.index.depth() > max_depth {
                return Err(Error::Config(format!(
                    "fixture element {} finer than the truncation",
                    f.index
                )));
            }
        }
    }

    let coarse = project_kernel(
        space,
        kernel,
        &ProjectionConfig {
            quad_order: cfg.quad_order,
            ..ProjectionConfig::new(cfg.coarse_level, cfg.rank_max)
        },
    )?;
    let fine = project_kernel(
        space,
        kernel,
        &ProjectionConfig {
            quad_order: cfg.quad_order,
            ..ProjectionConfig::new(cfg.fine_level, fine_rank)
        },
    )?;

    // empirical histograms over coarse count vectors
    let hist_coarse =
        lift_count_histogram(space, &coarse, cfg.coarse_level, cfg.draws, cfg.seed, 0)?;
    let hist_fine = lift_count_histogram(space, &fine, cfg.coarse_level, cfg.draws, cfg.seed, 1)?;

    // exact pushforward comparison when enumerable
    let exact_distance = if coarse.n() <= 16 && fine.n() <= 16 {
        let a = exact_count_law(space, &coarse, cfg.coarse_level)?;
        let b = exact_count_law(space, &fine, cfg.coarse_level)?;
        let keys: std::collections::BTreeSet<Vec<u32>> =
            a.keys().chain(b.keys()).cloned().collect();
        let tv = 0.5
            * keys
                .iter()
                .map(|k| (a.get(k).unwrap_or(&0.0) - b.get(k).unwrap_or(&0.0)).abs())
                .sum::<f64>();
        Some(tv)
    } else {
        None
    };

    // per-outcome binomial bands
    let n = cfg.draws as f64;
    let keys: std::collections::BTreeSet<Vec<u32>> = hist_coarse
        .keys()
        .chain(hist_fine.keys())
        .cloned()
        .collect();
    let mut outcomes = Vec::new();
    let mut all_within = true;
    for key in &keys {
        let a = *hist_coarse.get(key).unwrap_or(&0);
        let b = *hist_fine.get(key).unwrap_or(&0);
        let pooled = (a + b) as f64 / (2.0 * n);
        let band = 3.0 * (pooled * (1.0 - pooled) * 2.0 / n).sqrt();
        let diff = (a as f64 - b as f64) / n;
        let within = diff.abs() <= band + 1e-12;
        all_within &= within;
        outcomes.push(OutcomeRow {
            counts: key.clone(),
            coarse_freq: a,
            fine_freq: b,
            band,
            within_band: within,
        });
    }

    // two-sample chi-square with rare outcomes pooled
    let (chi_square, dof) = two_sample_chi_square(&hist_coarse, &hist_fine, &keys);
    let p_value = if dof == 0 {
        1.0
    } else {
        gamma_q(dof as f64 / 2.0, chi_square / 2.0)?
    };
    let pass = all_within && p_value > 1e-3 && exact_distance.is_none_or(|d| d < 1e-10);

    Ok(ConsistencyReport {
        kernel: kernel.name(),
        coarse_level: cfg.coarse_level,
        fine_level: cfg.fine_level,
        coarse_rank_max: cfg.rank_max,
        fine_rank_max: fine_rank,
        draws: cfg.draws,
        seed: cfg.seed,
        outcomes,
        chi_square,
        dof,
        p_value,
        exact_distance,
        pass,
    })
}

/// Histogram of coarse-level count vectors over seeded lift draws.
pub fn lift_count_histogram(
    space: &TreeSpace,
    projected: &ProjectedKernel,
    count_level: u8,
    draws: u64,
    seed: u64,
    stream_tag: u64,
) -> Result<std::collections::BTreeMap<Vec<u32>, u64>> {
    let sampler = LiftSampler::new(space, projected);
    let mut rng = replica_rng(seed, stream_tag);
    let mut hist = std::collections::BTreeMap::new();
    for _ in 0..draws {
        let s = sampler.sample(&mut rng)?;
        for (idx, p) in &s.pairs {
            let sup = space.support_cell(idx)?;
            if !sup.geometry.contains(*p) {
                return Err(Error::Numeric(format!("mark {p} escaped support of {idx}")));
            }
        }
        let counts = cell_counts(space, &s.unlabel(), count_level)?;
        *hist.entry(counts).or_insert(0) += 1;
    }
    Ok(hist)
}

/// Exact law of the coarse count vector by subset enumeration: every
/// index's support sits inside one coarse cell, so the count vector is a
/// deterministic function of the drawn subset.
pub fn exact_count_law(
    space: &TreeSpace,
    projected: &ProjectedKernel,
    count_level: u8,
) -> Result<std::collections::BTreeMap<Vec<u32>, f64>> {
    let cells = space.cells(count_level)?;
    let slot: std::collections::HashMap<TreeIndex, usize> = cells
        .iter()
        .enumerate()
        .map(|(k, c)| (c.index, k))
        .collect();
    let assign: Vec<usize> = projected
        .indices
        .iter()
        .map(|i| {
            let anc = coarse_cell_of_index(i, count_level)?;
            slot.get(&anc)
                .copied()
                .ok_or_else(|| Error::Domain(format!("index {i} outside the window")))
        })
        .collect::<Result<Vec<_>>>()?;
    let dpp = DiscreteDpp::from_projected(projected);
    let law = dpp.enumerate_law()?;
    let mut out = std::collections::BTreeMap::new();
    for (mask, p) in law {
        let mut counts = vec![0u32; cells.len()];
        for (pos, &cell) in assign.iter().enumerate() {
            if mask >> pos & 1 == 1 {
                counts[cell] += 1;
            }
        }
        *out.entry(counts).or_insert(0.0) += p;
    }
    Ok(out)
}

fn two_sample_chi_square(
    a: &std::collections::BTreeMap<Vec<u32>, u64>,
    b: &std::collections::BTreeMap<Vec<u32>, u64>,
    keys: &std::collections::BTreeSet<Vec<u32>>,
) -> (f64, usize) {
    let na: u64 = a.values().sum();
    let nb: u64 = b.values().sum();
    // pool outcomes with combined count below 10
    let mut buckets: Vec<(u64, u64)> = Vec::new();
    let mut rare = (0u64, 0u64);
    for key in keys {
        let ca = *a.get(key).unwrap_or(&0);
        let cb = *b.get(key).unwrap_or(&0);
        if ca + cb < 10 {
            rare.0 += ca;
            rare.1 += cb;
        } else {
            buckets.push((ca, cb));
        }
    }
    if rare.0 + rare.1 > 0 {
        buckets.push(rare);
    }
    if buckets.len() < 2 {
        return (0.0, 0);
    }
    let total = (na + nb) as f64;
    let mut chi = 0.0;
    for &(ca, cb) in &buckets {
        let combined = (ca + cb) as f64;
        let ea = combined * na as f64 / total;
        let eb = combined * nb as f64 / total;
        if ea > 0.0 {
            chi += (ca as f64 - ea).powi(2) / ea;
        }
        if eb > 0.0 {
            chi += (cb as f64 - eb).powi(2) / eb;
        }
    }
    (chi, buckets.len() - 1)
}
