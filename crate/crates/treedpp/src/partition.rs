//! Nested binary partitions of the window and their tree indices.
//!
//! A tree index is a unit-cell root plus a bit string. Bit n (the first bit
//! being n = 2) selects one of the two children created when a depth-(n-1)
//! cell splits, so root + bits pins down a dyadic cell of any depth. The
//! same data reinterpreted against a level context l describes a basis
//! element: its rank is depth - l + 1, rank 1 being a level-l cell
//! indicator and rank >= 2 a two-cell split function. Reinterpreting the
//! level is a pure relabelling, so the level shift and its inverse cost
//! nothing and are bijective by construction.
//!
//! In one dimension a cell at depth d is [J, J + 2^{1-d}) with
//! J = root + sum_{n=2}^{d} bit_n 2^{-(n-1)}. In two dimensions unit
//! squares split along alternating axes: x when the parent depth is odd,
//! y when it is even.

use crate::error::{Error, Result};
use crate::geom::{CellGeometry, Point, Window};
use crate::measure::ReferenceMeasure;

/// Packed bit string, most significant split first. Holds up to 56 bits,
/// far beyond any usable depth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BitPath {
    len: u8,
    bits: u64,
}

impl BitPath {
    pub const EMPTY: BitPath = BitPath { len: 0, bits: 0 };

    pub fn len(&self) -> usize {
        self.len as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn get(&self, i: usize) -> bool {
        debug_assert!(i < self.len());
        (self.bits >> i) & 1 == 1
    }

    pub fn push(&self, bit: bool) -> BitPath {
        assert!(self.len < 56, "bit path overflow");
        BitPath {
            len: self.len + 1,
            bits: self.bits | ((bit as u64) << self.len),
        }
    }

    /// Drops the final bit; None on the empty path.
    pub fn pop(&self) -> Option<BitPath> {
        if self.len == 0 {
            None
        } else {
            let len = self.len - 1;
            Some(BitPath {
                len,
                bits: self.bits & ((1u64 << len) - 1),
            })
        }
    }

    pub fn last(&self) -> Option<bool> {
        if self.len == 0 {
            None
        } else {
            Some(self.get(self.len() - 1))
        }
    }

    pub fn prefix(&self, n: usize) -> BitPath {
        assert!(n <= self.len());
        BitPath {
            len: n as u8,
            bits: if n == 0 {
                0
            } else {
                self.bits & ((1u64 << n) - 1)
            },
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        (0..self.len()).map(move |i| self.get(i))
    }

    pub fn starts_with(&self, other: &BitPath) -> bool {
        other.len() <= self.len() && self.prefix(other.len()) == *other
    }

    /// All paths of the given length, in lexicographic order.
    pub fn enumerate(len: usize) -> impl Iterator<Item = BitPath> {
        assert!(len < 56);
        (0u64..(1u64 << len)).map(move |k| {
            // lexicographic order = first bit most significant
            let mut bits = 0u64;
            for i in 0..len {
                if (k >> (len - 1 - i)) & 1 == 1 {
                    bits |= 1 << i;
                }
            }
            BitPath {
                len: len as u8,
                bits,
            }
        })
    }

    pub fn parse(s: &str) -> Result<BitPath> {
        let mut p = BitPath::EMPTY;
        for c in s.chars() {
            match c {
                '0' => p = p.push(false),
                '1' => p = p.push(true),
                _ => return Err(Error::Domain(format!("bad bit path {s:?}"))),
            }
        }
        Ok(p)
    }
}

impl std::fmt::Display for BitPath {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for b in self.iter() {
            write!(f, "{}", if b { '1' } else { '0' })?;
        }
        Ok(())
    }
}

impl PartialOrd for BitPath {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for BitPath {
    /// Lexicographic with shorter-prefix-first, so sorting a mixed-rank
    /// index set groups parents before their descendants.
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        let n = self.len().min(other.len());
        for i in 0..n {
            match (self.get(i), other.get(i)) {
                (false, true) => return std::cmp::Ordering::Less,
                (true, false) => return std::cmp::Ordering::Greater,
                _ => {}
            }
        }
        self.len().cmp(&other.len())
    }
}

/// Root of a tree: a unit cell of the line or of the plane.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Root {
    One(i64),
    Two(i64, i64),
}

impl std::fmt::Display for Root {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Root::One(j) => write!(f, "{j}"),
            Root::Two(a, b) => write!(f, "{a};{b}"),
        }
    }
}

/// A tree index against a level context.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TreeIndex {
    pub root: Root,
    pub path: BitPath,
    pub level: u8,
}

impl TreeIndex {
    pub fn new(root: Root, path: BitPath, level: u8) -> Result<TreeIndex> {
        if level == 0 {
            return Err(Error::Domain("level must be >= 1".into()));
        }
        let idx = TreeIndex { root, path, level };
        if idx.depth() < level as usize {
            return Err(Error::Domain(format!(
                "index of depth {} cannot sit at level {level}",
                idx.depth()
            )));
        }
        Ok(idx)
    }

    /// Absolute refinement depth of the underlying cell: 1 + number of bits.
    pub fn depth(&self) -> usize {
        1 + self.path.len()
    }

    /// Rank within the level context: depth - level + 1.
    pub fn rank(&self) -> usize {
        self.depth() - self.level as usize + 1
    }

    /// Basis-index membership: rank 1, or final bit 0.
    pub fn is_basis_index(&self) -> bool {
        self.rank() == 1 || self.path.last() == Some(false)
    }

    /// Drops the final bit. Defined exactly when rank >= 2.
    pub fn parent(&self) -> Option<TreeIndex> {
        if self.rank() < 2 {
            return None;
        }
        Some(TreeIndex {
            root: self.root,
            path: self.path.pop().expect("rank >= 2 has bits"),
            level: self.level,
        })
    }

    /// The rank-1 index of the level-context cell containing this index's
    /// support.
    pub fn root_block(&self) -> TreeIndex {
        TreeIndex {
            root: self.root,
            path: self.path.prefix(self.level as usize - 1),
            level: self.level,
        }
    }

    /// Reinterprets the index against a different level context. Pure
    /// relabelling of the same tree node; requires depth >= level.
    pub fn shift_to_level(&self, level: u8) -> Result<TreeIndex> {
        TreeIndex::new(self.root, self.path, level)
    }

    /// Inverse of `shift_to_level`: back to the level-1 view.
    pub fn shift_inverse(&self) -> TreeIndex {
        TreeIndex {
            root: self.root,
            path: self.path,
            level: 1,
        }
    }

    /// Canonical text form `root[.bits]@level`, used in CSV and sample
    /// output.
    pub fn display_compact(&self) -> String {
        if self.path.is_empty() {
            format!("{}@{}", self.root, self.level)
        } else {
            format!("{}.{}@{}", self.root, self.path, self.level)
        }
    }
}

impl PartialOrd for TreeIndex {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for TreeIndex {
    /// Canonical ordering: root, then depth (rank within a fixed level),
    /// then bit string lexicographically.
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.root
            .cmp(&other.root)
            .then(self.depth().cmp(&other.depth()))
            .then(self.path.cmp(&other.path))
            .then(self.level.cmp(&other.level))
    }
}

impl std::fmt::Display for TreeIndex {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.display_compact())
    }
}

/// A cell of the level-d partition together with its measure.
#[derive(Debug, Clone)]
pub struct PartitionCell {
    /// Rank-1 index at level = depth of the cell.
    pub index: TreeIndex,
    pub geometry: CellGeometry,
    pub mass: f64,
}

/// The domain, window, and reference measure everything else is built on.
#[derive(Debug, Clone)]
pub struct TreeSpace {
    window: Window,
    measure: ReferenceMeasure,
}

impl TreeSpace {
    /// Lebesgue measure on an integer-aligned interval window of the line.
    pub fn line(lo: i64, hi: i64) -> Result<TreeSpace> {
        if lo >= hi {
            return Err(Error::Config(format!("empty window {lo}..{hi}")));
        }
        Ok(TreeSpace {
            window: Window::One { lo, hi },
            measure: ReferenceMeasure::Lebesgue1D,
        })
    }

    /// Lebesgue measure on a window of the half-line [0, inf).
    pub fn half_line(lo: i64, hi: i64) -> Result<TreeSpace> {
        if lo < 0 {
            return Err(Error::Config(format!(
                "half-line window must start at >= 0, got {lo}"
            )));
        }
        if lo >= hi {
            return Err(Error::Config(format!("empty window {lo}..{hi}")));
        }
        Ok(TreeSpace {
            window: Window::One { lo, hi },
            measure: ReferenceMeasure::LebesgueHalfLine,
        })
    }

    /// Standard planar Gaussian measure on a square window [-w, w)^2.
    pub fn gaussian_square(half_width: i64) -> Result<TreeSpace> {
        if half_width < 1 {
            return Err(Error::Config("square window needs half width >= 1".into()));
        }
        Ok(TreeSpace {
            window: Window::Two {
                x0: -half_width,
                x1: half_width,
                y0: -half_width,
                y1: half_width,
            },
            measure: ReferenceMeasure::GaussianPlane,
        })
    }

    pub fn window(&self) -> Window {
        self.window
    }

    pub fn measure(&self) -> ReferenceMeasure {
        self.measure
    }

    pub fn dimension(&self) -> usize {
        self.window.dimension()
    }

    /// Roots of the unit cells inside the window, in canonical order.
    pub fn roots(&self) -> Vec<Root> {
        match self.window {
            Window::One { lo, hi } => (lo..hi).map(Root::One).collect(),
            Window::Two { x0, x1, y0, y1 } => {
                let mut v = Vec::new();
                for a in x0..x1 {
                    for b in y0..y1 {
                        v.push(Root::Two(a, b));
                    }
                }
                v
            }
        }
    }

    /// Geometry of the cell identified by root + bit path.
    pub fn cell_geometry(&self, root: Root, path: &BitPath) -> CellGeometry {
        match root {
            Root::One(j) => {
                let mut lo = j as f64;
                let mut hi = lo + 1.0;
                for b in path.iter() {
                    let mid = 0.5 * (lo + hi);
                    if b {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                CellGeometry::Interval { lo, hi }
            }
            Root::Two(a, b) => {
                let (mut x0, mut x1) = (a as f64, a as f64 + 1.0);
                let (mut y0, mut y1) = (b as f64, b as f64 + 1.0);
                for (i, bit) in path.iter().enumerate() {
                    // bit i splits the depth-(i+1) cell; odd depth splits x
                    let parent_depth = i + 1;
                    if parent_depth % 2 == 1 {
                        let mid = 0.5 * (x0 + x1);
                        if bit {
                            x0 = mid;
                        } else {
                            x1 = mid;
                        }
                    } else {
                        let mid = 0.5 * (y0 + y1);
                        if bit {
                            y0 = mid;
                        } else {
                            y1 = mid;
                        }
                    }
                }
                CellGeometry::Rect { x0, x1, y0, y1 }
            }
        }
    }

    /// The partition cell of a rank-1 view of `index`'s underlying node.
    pub fn cell_of(&self, index: &TreeIndex) -> Result<PartitionCell> {
        let geometry = self.cell_geometry(index.root, &index.path);
        let mass = self.measure.cell_mass(&geometry);
        if mass <= 0.0 || mass.is_nan() {
            return Err(Error::Partition(format!(
                "cell {} has non-positive mass {mass}",
                geometry
            )));
        }
        Ok(PartitionCell {
            index: TreeIndex {
                root: index.root,
                path: index.path,
                level: index.depth() as u8,
            },
            geometry,
            mass,
        })
    }

    /// All cells of the level-l partition of the window, canonical order.
    pub fn cells(&self, level: u8) -> Result<Vec<PartitionCell>> {
        if level == 0 {
            return Err(Error::Domain("level must be >= 1".into()));
        }
        let mut out = Vec::new();
        for root in self.roots() {
            for path in BitPath::enumerate(level as usize - 1) {
                out.push(self.cell_of(&TreeIndex { root, path, level })?);
            }
        }
        Ok(out)
    }

    /// The two children of a cell, in bit order.
    pub fn children(&self, cell: &PartitionCell) -> Result<[PartitionCell; 2]> {
        let i = &cell.index;
        let left = TreeIndex {
            root: i.root,
            path: i.path.push(false),
            level: i.level + 1,
        };
        let right = TreeIndex {
            root: i.root,
            path: i.path.push(true),
            level: i.level + 1,
        };
        Ok([self.cell_of(&left)?, self.cell_of(&right)?])
    }

    /// Replaces every cell of a level-l partition by its two children.
    pub fn refine(&self, cells: &[PartitionCell]) -> Result<Vec<PartitionCell>> {
        let mut out = Vec::with_capacity(cells.len() * 2);
        for c in cells {
            let [a, b] = self.children(c)?;
            out.push(a);
            out.push(b);
        }
        Ok(out)
    }

    /// The truncated basis index set: all indices of the level-l family
    /// with rank <= rank_max and root cell inside the window, in canonical
    /// order (root, rank, bits).
    pub fn truncated_index_set(&self, level: u8, rank_max: u8) -> Result<Vec<TreeIndex>> {
        if level == 0 || rank_max == 0 {
            return Err(Error::Domain("level and rank_max must be >= 1".into()));
        }
        let mut out = Vec::new();
        for root in self.roots() {
            for rank in 1..=rank_max as usize {
                let bit_len = level as usize - 1 + rank - 1;
                for path in BitPath::enumerate(bit_len) {
                    let idx = TreeIndex { root, path, level };
                    if idx.is_basis_index() {
                        out.push(idx);
                    }
                }
            }
        }
        Ok(out)
    }

    /// Support cell of a basis index: its own cell at rank 1, the parent
    /// cell at rank >= 2.
    pub fn support_cell(&self, index: &TreeIndex) -> Result<PartitionCell> {
        if index.rank() == 1 {
            self.cell_of(index)
        } else {
            self.cell_of(&index.parent().expect("rank >= 2"))
        }
    }

    /// Indices of the level family whose support cell is contained in the
    /// level-context cell `cell` (a rank-1 index), up to rank_max.
    pub fn indices_supported_in(&self, cell: &TreeIndex, rank_max: u8) -> Result<Vec<TreeIndex>> {
        if cell.rank() != 1 {
            return Err(Error::Domain(
                "support filter wants a rank-1 cell index".into(),
            ));
        }
        let level = cell.level;
        let mut out = vec![*cell];
        // rank r >= 2: supports are depth (level + r - 2) descendants of the
        // cell; the index appends a 0 bit to the support path
        for rank in 2..=rank_max as usize {
            let extra = rank - 2;
            for tail in BitPath::enumerate(extra) {
                let mut path = cell.path;
                for b in tail.iter() {
                    path = path.push(b);
                }
                out.push(TreeIndex {
                    root: cell.root,
                    path: path.push(false),
                    level,
                });
            }
        }
        out.sort();
        Ok(out)
    }

    /// The rank-1 index of the level-l cell containing the point.
    pub fn locate(&self, p: Point, level: u8) -> Result<TreeIndex> {
        if !self.window.contains(p) {
            return Err(Error::Domain(format!(
                "point {p} outside window {}",
                self.window
            )));
        }
        match (p, self.window) {
            (Point::One(x), Window::One { .. }) => {
                let j = x.floor() as i64;
                let mut lo = j as f64;
                let mut hi = lo + 1.0;
                let mut path = BitPath::EMPTY;
                for _ in 1..level {
                    let mid = 0.5 * (lo + hi);
                    if x < mid {
                        hi = mid;
                        path = path.push(false);
                    } else {
                        lo = mid;
                        path = path.push(true);
                    }
                }
                Ok(TreeIndex {
                    root: Root::One(j),
                    path,
                    level,
                })
            }
            (Point::Two(x, y), Window::Two { .. }) => {
                let a = x.floor() as i64;
                let b = y.floor() as i64;
                let (mut x0, mut x1) = (a as f64, a as f64 + 1.0);
                let (mut y0, mut y1) = (b as f64, b as f64 + 1.0);
                let mut path = BitPath::EMPTY;
                for depth in 1..level as usize {
                    if depth % 2 == 1 {
                        let mid = 0.5 * (x0 + x1);
                        if x < mid {
                            x1 = mid;
                            path = path.push(false);
                        } else {
                            x0 = mid;
                            path = path.push(true);
                        }
                    } else {
                        let mid = 0.5 * (y0 + y1);
                        if y < mid {
                            y1 = mid;
                            path = path.push(false);
                        } else {
                            y0 = mid;
                            path = path.push(true);
                        }
                    }
                }
                Ok(TreeIndex {
                    root: Root::Two(a, b),
                    path,
                    level,
                })
            }
            _ => Err(Error::Domain(
                "point dimension does not match window".into(),
            )),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn unit_line() -> TreeSpace {
        TreeSpace::line(0, 1).unwrap()
    }

    #[test]
    fn cell_of_level_one_is_unit_interval() {
        let sp = unit_line();
        let idx = TreeIndex {
            root: Root::One(0),
            path: BitPath::EMPTY,
            level: 1,
        };
        let c = sp.cell_of(&idx).unwrap();
        assert_eq!(c.geometry, CellGeometry::Interval { lo: 0.0, hi: 1.0 });
        assert_eq!(c.mass, 1.0);
    }

    #[test]
    fn cell_of_level_two_children() {
        let sp = unit_line();
        let left = TreeIndex {
            root: Root::One(0),
            path: BitPath::parse("0").unwrap(),
            level: 2,
        };
        let right = TreeIndex {
            root: Root::One(0),
            path: BitPath::parse("1").unwrap(),
            level: 2,
        };
        assert_eq!(
            sp.cell_of(&left).unwrap().geometry,
            CellGeometry::Interval { lo: 0.0, hi: 0.5 }
        );
        assert_eq!(
            sp.cell_of(&right).unwrap().geometry,
            CellGeometry::Interval { lo: 0.5, hi: 1.0 }
        );
    }

    /// Brute-force oracle: enumerate all level-3 cells of [-1, 0) by
    /// repeated bisection and match the addressed cell by nesting.
    #[test]
    fn cell_of_negative_root_matches_enumeration() {
        let sp = TreeSpace::line(-1, 0).unwrap();
        let idx = TreeIndex {
            root: Root::One(-1),
            path: BitPath::parse("10").unwrap(),
            level: 3,
        };
        let got = sp.cell_of(&idx).unwrap();
        assert_eq!(
            got.geometry,
            CellGeometry::Interval {
                lo: -0.5,
                hi: -0.25
            }
        );

        // oracle: bisect [-1,0) twice, follow bits 1 then 0
        let (mut lo, mut hi) = (-1.0f64, 0.0f64);
        for b in [true, false] {
            let mid = 0.5 * (lo + hi);
            if b {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        assert_eq!(got.geometry, CellGeometry::Interval { lo, hi });
    }

    #[test]
    fn refine_splits_into_exactly_two_and_masses_halve() {
        let sp = unit_line();
        let level1 = sp.cells(1).unwrap();
        assert_eq!(level1.len(), 1);
        let level2 = sp.refine(&level1).unwrap();
        assert_eq!(level2.len(), 2);
        assert_eq!(
            level2[0].geometry,
            CellGeometry::Interval { lo: 0.0, hi: 0.5 }
        );
        assert_eq!(
            level2[1].geometry,
            CellGeometry::Interval { lo: 0.5, hi: 1.0 }
        );
        for c in &level2 {
            assert_eq!(c.mass, 0.5);
        }
    }

    /// Adaptive-Simpson oracle for the planar Gaussian cell masses.
    fn simpson_1d(f: &dyn Fn(f64) -> f64, a: f64, b: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let coarse = (b - a) / 6.0 * (f(a) + 4.0 * f(m) + f(b));
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let fine = (b - a) / 12.0 * (f(a) + 4.0 * f(lm) + 2.0 * f(m) + 4.0 * f(rm) + f(b));
        if depth == 0 || (fine - coarse).abs() < 1e-14 {
            fine
        } else {
            simpson_1d(f, a, m, depth - 1) + simpson_1d(f, m, b, depth - 1)
        }
    }

    #[test]
    fn gaussian_children_masses_sum_to_parent() {
        let sp = TreeSpace::gaussian_square(2).unwrap();
        let mut cells = sp.cells(1).unwrap();
        for _ in 0..3 {
            let next = sp.refine(&cells).unwrap();
            for (parent, pair) in cells.iter().zip(next.chunks(2)) {
                let s = pair[0].mass + pair[1].mass;
                assert!(
                    (s - parent.mass).abs() <= 1e-12 * parent.mass,
                    "child masses {s} vs parent {}",
                    parent.mass
                );
            }
            cells = next;
        }
        // spot-check one refined cell against the independent Simpson oracle
        let c = &cells[5];
        if let CellGeometry::Rect { x0, x1, y0, y1 } = c.geometry {
            let gx = simpson_1d(&|t: f64| (-t * t).exp(), x0, x1, 20) / std::f64::consts::PI.sqrt();
            let gy = simpson_1d(&|t: f64| (-t * t).exp(), y0, y1, 20) / std::f64::consts::PI.sqrt();
            assert!((c.mass - gx * gy).abs() < 1e-12);
        } else {
            panic!("expected rect");
        }
    }

    #[test]
    fn shift_is_identity_at_level_one_and_roundtrips() {
        let sp = TreeSpace::line(0, 2).unwrap();
        for idx in sp.truncated_index_set(1, 6).unwrap() {
            assert_eq!(idx.shift_to_level(1).unwrap(), idx);
            for level in 1..=idx.depth() as u8 {
                let shifted = idx.shift_to_level(level).unwrap();
                assert_eq!(shifted.shift_inverse(), idx);
                assert_eq!(shifted.rank(), idx.rank() + 1 - level as usize);
            }
        }
    }

    #[test]
    fn shift_rejects_insufficient_depth() {
        let idx = TreeIndex {
            root: Root::One(0),
            path: BitPath::EMPTY,
            level: 1,
        };
        assert!(idx.shift_to_level(2).is_err());
    }

    /// Independent enumeration of the truncated index set: walk every node
    /// of every binary tree to the rank bound and filter by membership.
    fn brute_force_index_set(sp: &TreeSpace, level: u8, rank_max: u8) -> Vec<TreeIndex> {
        let mut out = Vec::new();
        for root in sp.roots() {
            let max_bits = level as usize - 1 + rank_max as usize - 1;
            for len in (level as usize - 1)..=max_bits {
                for path in BitPath::enumerate(len) {
                    let idx = TreeIndex { root, path, level };
                    if idx.rank() == 1 || path.last() == Some(false) {
                        out.push(idx);
                    }
                }
            }
        }
        out.sort();
        out
    }

    #[test]
    fn truncated_index_set_minimal_cases() {
        let sp = unit_line();
        let r1 = sp.truncated_index_set(1, 1).unwrap();
        assert_eq!(r1.len(), 1);
        assert_eq!(r1[0].rank(), 1);

        let r2 = sp.truncated_index_set(1, 2).unwrap();
        assert_eq!(r2.len(), 2);
        assert_eq!(r2[1].rank(), 2);
        assert_eq!(r2[1].path.last(), Some(false));
    }

    #[test]
    fn truncated_index_set_counts_and_matches_oracle() {
        for w in 1..=4i64 {
            let sp = TreeSpace::line(0, w).unwrap();
            for rank_max in 1..=5u8 {
                let got = sp.truncated_index_set(1, rank_max).unwrap();
                let expect = (w as usize) * (1usize << (rank_max as usize - 1));
                assert_eq!(got.len(), expect, "W={w} R={rank_max}");
                let mut sorted = got.clone();
                sorted.sort();
                assert_eq!(sorted, got, "canonical order is sorted order");
                assert_eq!(got, brute_force_index_set(&sp, 1, rank_max));
            }
        }
        // a level-2 case against the oracle as well
        let sp = TreeSpace::line(-1, 1).unwrap();
        for rank_max in 1..=4u8 {
            assert_eq!(
                sp.truncated_index_set(2, rank_max).unwrap(),
                brute_force_index_set(&sp, 2, rank_max)
            );
        }
    }

    #[test]
    fn partition_property_every_point_in_exactly_one_cell() {
        let sp = TreeSpace::line(-2, 2).unwrap();
        let mut rng = rand_pcg::Pcg64::seed_from_u64(31);
        for level in 1..=8u8 {
            let cells = sp.cells(level).unwrap();
            for _ in 0..1000 {
                let x = rng.gen_range(-2.0..2.0);
                let hits = cells
                    .iter()
                    .filter(|c| c.geometry.contains(Point::One(x)))
                    .count();
                assert_eq!(hits, 1, "x={x} level={level}");
                let loc = sp.locate(Point::One(x), level).unwrap();
                assert!(sp.cell_of(&loc).unwrap().geometry.contains(Point::One(x)));
            }
        }
        // 2D partition property
        let sq = TreeSpace::gaussian_square(2).unwrap();
        for level in 1..=6u8 {
            let cells = sq.cells(level).unwrap();
            for _ in 0..400 {
                let x = rng.gen_range(-2.0..2.0);
                let y = rng.gen_range(-2.0..2.0);
                let hits = cells
                    .iter()
                    .filter(|c| c.geometry.contains(Point::Two(x, y)))
                    .count();
                assert_eq!(hits, 1);
                let loc = sq.locate(Point::Two(x, y), level).unwrap();
                assert!(sq
                    .cell_of(&loc)
                    .unwrap()
                    .geometry
                    .contains(Point::Two(x, y)));
            }
        }
    }

    #[test]
    fn refinement_chain_is_exact_on_endpoints() {
        let sp = TreeSpace::line(-1, 1).unwrap();
        for level in 1..=9u8 {
            let coarse = sp.cells(level).unwrap();
            let fine = sp.refine(&coarse).unwrap();
            for (k, parent) in coarse.iter().enumerate() {
                let (a, b) = (&fine[2 * k], &fine[2 * k + 1]);
                if let (
                    CellGeometry::Interval { lo, hi },
                    CellGeometry::Interval { lo: alo, hi: ahi },
                    CellGeometry::Interval { lo: blo, hi: bhi },
                ) = (parent.geometry, a.geometry, b.geometry)
                {
                    assert_eq!(lo, alo);
                    assert_eq!(ahi, blo);
                    assert_eq!(bhi, hi);
                } else {
                    panic!("expected intervals");
                }
            }
        }
    }

    #[test]
    fn cell_of_injective_on_rank_one_indices() {
        let sp = TreeSpace::line(-2, 2).unwrap();
        for level in 1..=6u8 {
            let cells = sp.cells(level).unwrap();
            let mut seen = std::collections::HashSet::new();
            for c in &cells {
                let key = format!("{}", c.geometry);
                assert!(seen.insert(key), "duplicate cell at level {level}");
            }
        }
    }

    #[test]
    fn support_cells_nest_inside_level_cells() {
        let sp = TreeSpace::line(0, 2).unwrap();
        for level in 1..=3u8 {
            for idx in sp.truncated_index_set(level, 5).unwrap() {
                let sup = sp.support_cell(&idx).unwrap();
                let block = sp.cell_of(&idx.root_block()).unwrap();
                assert!(
                    sup.geometry.subset_of(&block.geometry),
                    "support {} not inside level cell {}",
                    sup.geometry,
                    block.geometry
                );
            }
        }
    }

    #[test]
    fn indices_supported_in_matches_filter() {
        let sp = TreeSpace::line(0, 2).unwrap();
        for level in 1..=3u8 {
            for cell in sp.cells(level).unwrap() {
                let fast = sp.indices_supported_in(&cell.index, 5).unwrap();
                let slow: Vec<TreeIndex> = sp
                    .truncated_index_set(level, 5)
                    .unwrap()
                    .into_iter()
                    .filter(|i| {
                        sp.support_cell(i)
                            .unwrap()
                            .geometry
                            .subset_of(&cell.geometry)
                    })
                    .collect();
                assert_eq!(fast, slow);
                assert_eq!(fast.len(), 1usize << (5 - 1));
            }
        }
    }

    #[test]
    fn alternating_axis_splits_in_two_dimensions() {
        let sp = TreeSpace::gaussian_square(1).unwrap();
        let cells2 = sp.cells(2).unwrap();
        // depth-1 cell is a unit square; level 2 must be x-split halves
        for c in &cells2 {
            if let CellGeometry::Rect { x0, x1, y0, y1 } = c.geometry {
                assert_eq!(x1 - x0, 0.5);
                assert_eq!(y1 - y0, 1.0);
            }
        }
        let cells3 = sp.cells(3).unwrap();
        for c in &cells3 {
            if let CellGeometry::Rect { x0, x1, y0, y1 } = c.geometry {
                assert_eq!(x1 - x0, 0.5);
                assert_eq!(y1 - y0, 0.5);
            }
        }
    }

    #[test]
    fn bit_path_ordering_is_prefix_first_lexicographic() {
        let p = |s: &str| BitPath::parse(s).unwrap();
        assert!(p("0") < p("1"));
        assert!(p("0") < p("00"));
        assert!(p("01") < p("1"));
        assert!(p("10") > p("011"));
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn locate_returns_the_containing_cell(
                x in -4.0f64..4.0,
                level in 1u8..=10,
            ) {
                let sp = TreeSpace::line(-4, 4).unwrap();
                let idx = sp.locate(Point::One(x), level).unwrap();
                let cell = sp.cell_of(&idx).unwrap();
                prop_assert!(cell.geometry.contains(Point::One(x)));
                prop_assert_eq!(idx.rank(), 1);
                // the parent cell at every coarser level contains it too
                for coarser in 1..level {
                    let up = sp.locate(Point::One(x), coarser).unwrap();
                    let up_cell = sp.cell_of(&up).unwrap();
                    prop_assert!(cell.geometry.subset_of(&up_cell.geometry));
                }
            }

            #[test]
            fn shift_roundtrips_and_preserves_the_cell(
                root in -8i64..8,
                bits in 0u64..64,
                len in 0usize..6,
                level in 1u8..=4,
            ) {
                let mut path = BitPath::EMPTY;
                for i in 0..len {
                    path = path.push((bits >> i) & 1 == 1);
                }
                let idx = TreeIndex { root: Root::One(root), path, level: 1 };
                prop_assume!(idx.depth() >= level as usize);
                let shifted = idx.shift_to_level(level).unwrap();
                prop_assert_eq!(shifted.shift_inverse(), idx);
                prop_assert_eq!(
                    shifted.rank() as i64,
                    idx.rank() as i64 - level as i64 + 1
                );
                // relabelling does not move the underlying cell
                let sp = TreeSpace::line(-8, 8).unwrap();
                prop_assert_eq!(
                    sp.cell_geometry(idx.root, &idx.path),
                    sp.cell_geometry(shifted.root, &shifted.path)
                );
            }

            #[test]
            fn bit_path_order_is_total_and_prefix_first(
                a in 0u64..256, la in 0usize..8,
                b in 0u64..256, lb in 0usize..8,
            ) {
                let mk = |bits: u64, len: usize| {
                    let mut p = BitPath::EMPTY;
                    for i in 0..len {
                        p = p.push((bits >> i) & 1 == 1);
                    }
                    p
                };
                let (pa, pb) = (mk(a, la), mk(b, lb));
                match pa.cmp(&pb) {
                    std::cmp::Ordering::Equal => prop_assert_eq!(pa, pb),
                    std::cmp::Ordering::Less => prop_assert!(pb > pa),
                    std::cmp::Ordering::Greater => prop_assert!(pb < pa),
                }
                if pa.starts_with(&pb) && pa != pb {
                    prop_assert!(pb < pa, "prefixes sort first");
                }
            }
        }
    }
}
