//! Chunk-grid geometry of a multiresolution pyramid.
//!
//! Level 0 is the finest level. Every level up halves the chunk count along
//! each axis, so a chunk at level `k >= 1` covers exactly `2^dim` chunks at
//! level `k - 1`. Chunk indices are linearized row-major (axis 0 slowest).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest supported spatial dimension.
pub const MAX_DIM: usize = 16;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PyramidSpec {
    dim: usize,
    levels: usize,
    l0_chunks_per_axis: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ChunkIndex {
    pub level: usize,
    pub coords: Vec<usize>,
}

impl ChunkIndex {
    pub fn new(level: usize, coords: impl Into<Vec<usize>>) -> Self {
        Self {
            level,
            coords: coords.into(),
        }
    }
}

impl PyramidSpec {
    /// Axis counts must be positive and divisible by `2^(levels - 1)`;
    /// non-divisible grids are rejected rather than padded.
    pub fn new(dim: usize, levels: usize, l0_chunks_per_axis: Vec<usize>) -> Result<Self> {
        if dim == 0 || dim > MAX_DIM {
            return Err(Error::domain(format!("dim must be in 1..={MAX_DIM}")));
        }
        if levels == 0 {
            return Err(Error::domain("levels must be >= 1"));
        }
        if l0_chunks_per_axis.len() != dim {
            return Err(Error::domain(format!(
                "expected {dim} axis chunk counts, got {}",
                l0_chunks_per_axis.len()
            )));
        }
        if dim * (levels - 1) >= usize::BITS as usize {
            return Err(Error::domain("too many levels for this dimension"));
        }
        let factor = 1usize << (levels - 1);
        for (axis, &count) in l0_chunks_per_axis.iter().enumerate() {
            if count == 0 || count % factor != 0 {
                return Err(Error::domain(format!(
                    "axis {axis} has {count} chunks, not a positive multiple of 2^(levels-1) = {factor}"
                )));
            }
        }
        l0_chunks_per_axis
            .iter()
            .try_fold(1usize, |acc, &c| acc.checked_mul(c))
            .ok_or_else(|| Error::domain("chunk count overflows usize"))?;
        Ok(Self {
            dim,
            levels,
            l0_chunks_per_axis,
        })
    }

    /// The smallest pyramid for `dim`/`levels`: a single top-level chunk.
    pub fn single_root(dim: usize, levels: usize) -> Result<Self> {
        if levels == 0 || levels > usize::BITS as usize {
            return Err(Error::domain("levels out of range"));
        }
        Self::new(dim, levels, vec![1usize << (levels - 1); dim])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn top_level(&self) -> usize {
        self.levels - 1
    }

    pub fn l0_chunks_per_axis(&self) -> &[usize] {
        &self.l0_chunks_per_axis
    }

    /// Children per parent chunk, `2^dim`.
    pub fn branching(&self) -> usize {
        1 << self.dim
    }

    /// Total number of level-0 chunks (`n`).
    pub fn n_l0(&self) -> usize {
        self.l0_chunks_per_axis.iter().product()
    }

    fn check_level(&self, level: usize) -> Result<()> {
        if level >= self.levels {
            return Err(Error::domain(format!(
                "level {level} out of range (pyramid has {} levels)",
                self.levels
            )));
        }
        Ok(())
    }

    pub fn axes_at(&self, level: usize) -> Result<Vec<usize>> {
        self.check_level(level)?;
        Ok(self.l0_chunks_per_axis.iter().map(|&c| c >> level).collect())
    }

    pub fn chunk_count(&self, level: usize) -> Result<usize> {
        Ok(self.axes_at(level)?.iter().product())
    }

    fn check_index(&self, idx: &ChunkIndex) -> Result<Vec<usize>> {
        let axes = self.axes_at(idx.level)?;
        if idx.coords.len() != self.dim {
            return Err(Error::domain(format!(
                "chunk index has {} coords, pyramid is {}-dimensional",
                idx.coords.len(),
                self.dim
            )));
        }
        if let Some(axis) = idx.coords.iter().zip(&axes).position(|(c, a)| c >= a) {
            return Err(Error::domain(format!(
                "coordinate {} on axis {axis} out of range at level {} (extent {})",
                idx.coords[axis], idx.level, axes[axis]
            )));
        }
        Ok(axes)
    }

    /// Row-major linear position of `idx` within its level.
    pub fn linear_index(&self, idx: &ChunkIndex) -> Result<usize> {
        let axes = self.check_index(idx)?;
        Ok(idx
            .coords
            .iter()
            .zip(&axes)
            .fold(0, |acc, (&c, &a)| acc * a + c))
    }

    pub fn index_from_linear(&self, level: usize, linear: usize) -> Result<ChunkIndex> {
        let axes = self.axes_at(level)?;
        let count: usize = axes.iter().product();
        if linear >= count {
            return Err(Error::domain(format!(
                "linear index {linear} out of range at level {level} ({count} chunks)"
            )));
        }
        let mut coords = vec![0; self.dim];
        let mut rest = linear;
        for axis in (0..self.dim).rev() {
            coords[axis] = rest % axes[axis];
            rest /= axes[axis];
        }
        Ok(ChunkIndex { level, coords })
    }

    /// The `2^dim` chunks one level down that tile `idx`, in ascending
    /// linear order.
    pub fn children(&self, idx: &ChunkIndex) -> Result<Vec<ChunkIndex>> {
        self.check_index(idx)?;
        if idx.level == 0 {
            return Err(Error::domain("level-0 chunks have no children"));
        }
        let level = idx.level - 1;
        let out = (0..self.branching())
            .map(|offset| {
                let coords = idx
                    .coords
                    .iter()
                    .enumerate()
                    .map(|(axis, &c)| 2 * c + ((offset >> (self.dim - 1 - axis)) & 1))
                    .collect();
                ChunkIndex { level, coords }
            })
            .collect();
        Ok(out)
    }

    pub fn parent(&self, idx: &ChunkIndex) -> Result<ChunkIndex> {
        self.check_index(idx)?;
        if idx.level + 1 >= self.levels {
            return Err(Error::domain(format!(
                "level {} is the top level and has no parent",
                idx.level
            )));
        }
        Ok(ChunkIndex {
            level: idx.level + 1,
            coords: idx.coords.iter().map(|c| c / 2).collect(),
        })
    }

    /// Linear indices (at `level - 1`) of the children of the chunk with
    /// linear index `parent` at `level`. Allocation-free fast path used by
    /// the engine and the simulators.
    pub(crate) fn child_linears(&self, level: usize, parent: usize, out: &mut Vec<usize>) {
        let axes = &self.l0_chunks_per_axis;
        let mut pc = [0usize; MAX_DIM];
        let mut rest = parent;
        for axis in (0..self.dim).rev() {
            let extent = axes[axis] >> level;
            pc[axis] = rest % extent;
            rest /= extent;
        }
        for offset in 0..self.branching() {
            let mut lin = 0;
            for (axis, &p) in pc.iter().enumerate().take(self.dim) {
                let extent = axes[axis] >> (level - 1);
                lin = lin * extent + 2 * p + ((offset >> (self.dim - 1 - axis)) & 1);
            }
            out.push(lin);
        }
    }

    /// For each level-`level` chunk (by linear index), the linear index of its
    /// ancestor at `level + 1`.
    pub(crate) fn parent_map(&self, level: usize) -> Vec<usize> {
        let axes: Vec<usize> = self.l0_chunks_per_axis.iter().map(|&c| c >> level).collect();
        let up: Vec<usize> = axes.iter().map(|&c| c / 2).collect();
        let count: usize = axes.iter().product();
        let mut coords = vec![0usize; self.dim];
        (0..count)
            .map(|lin| {
                let mut rest = lin;
                for axis in (0..self.dim).rev() {
                    coords[axis] = rest % axes[axis];
                    rest /= axes[axis];
                }
                coords
                    .iter()
                    .zip(&up)
                    .fold(0, |acc, (&c, &a)| acc * a + c / 2)
            })
            .collect()
    }
}
