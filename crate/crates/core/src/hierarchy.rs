//! The temporal hierarchy over the hours of a delivery day and its
//! mean-based summing matrix.
//!
//! Rows are ordered coarsest level first (baseload), finest last (hourly),
//! and chronologically within a level. The bottom `period` rows of the
//! summing matrix therefore form the identity.

use alloc::vec::Vec;
use core::fmt;
use core::ops::{Deref, DerefMut};

use crate::error::{check_finite, Error, Result};
use crate::linalg::Matrix;

/// Block lengths (hours) of the daily hierarchy, coarsest first.
pub const DAILY_LEVELS: [usize; 8] = [24, 12, 8, 6, 4, 3, 2, 1];

/// Number of nodes in the daily hierarchy.
pub const DAILY_NODES: usize = 60;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LevelSpec {
    pub block_length: usize,
    pub block_count: usize,
}

impl LevelSpec {
    pub fn new(block_length: usize, period: usize) -> Result<Self> {
        if block_length == 0 || period % block_length != 0 {
            return Err(Error::InvalidInput(alloc::format!(
                "block length {block_length} does not divide {period}"
            )));
        }
        Ok(Self {
            block_length,
            block_count: period / block_length,
        })
    }

    pub fn label(&self) -> alloc::string::String {
        alloc::format!("{}H", self.block_length)
    }
}

/// A block of consecutive hours `[index * block_length, (index + 1) * block_length)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BlockId {
    pub block_length: usize,
    pub index: usize,
}

impl BlockId {
    pub const fn new(block_length: usize, index: usize) -> Self {
        Self {
            block_length,
            index,
        }
    }

    pub fn hours(&self) -> core::ops::Range<usize> {
        self.index * self.block_length..(self.index + 1) * self.block_length
    }

    /// True when `other` lies inside `self` on a strictly finer level.
    pub fn contains(&self, other: &BlockId) -> bool {
        other.block_length < self.block_length
            && self.block_length % other.block_length == 0
            && self.hours().start <= other.hours().start
            && other.hours().end <= self.hours().end
    }
}

impl fmt::Display for BlockId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}H, {})", self.block_length, self.index)
    }
}

/// A non-overlapping temporal hierarchy over `period` bottom-level slots.
#[derive(Debug, Clone, PartialEq)]
pub struct Hierarchy {
    period: usize,
    levels: Vec<LevelSpec>,
    blocks: Vec<BlockId>,
}

impl Hierarchy {
    /// The 24-hour hierarchy with levels 24H, 12H, 8H, 6H, 4H, 3H, 2H and 1H.
    pub fn daily() -> Self {
        Self::from_block_lengths(24, &DAILY_LEVELS).expect("divisors of 24 form a valid hierarchy")
    }

    /// Builds a hierarchy from a set of block lengths, each dividing
    /// `period`. Length 1 must be present so the bottom level is complete.
    pub fn from_block_lengths(period: usize, lengths: &[usize]) -> Result<Self> {
        let mut lengths: Vec<usize> = lengths.to_vec();
        lengths.sort_unstable_by(|a, b| b.cmp(a));
        lengths.dedup();
        if lengths.last() != Some(&1) {
            return Err(Error::InvalidInput("hierarchy needs the 1-slot level".into()));
        }
        let levels = lengths
            .iter()
            .map(|&l| LevelSpec::new(l, period))
            .collect::<Result<Vec<_>>>()?;
        let blocks = levels
            .iter()
            .flat_map(|lv| (0..lv.block_count).map(move |i| BlockId::new(lv.block_length, i)))
            .collect();
        Ok(Self {
            period,
            levels,
            blocks,
        })
    }

    pub fn period(&self) -> usize {
        self.period
    }

    pub fn levels(&self) -> &[LevelSpec] {
        &self.levels
    }

    pub fn level(&self, block_length: usize) -> Option<LevelSpec> {
        self.levels
            .iter()
            .copied()
            .find(|l| l.block_length == block_length)
    }

    /// Blocks in canonical row order.
    pub fn blocks(&self) -> &[BlockId] {
        &self.blocks
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    /// Number of aggregate (non-bottom) blocks.
    pub fn aggregate_len(&self) -> usize {
        self.blocks.len() - self.period
    }

    /// Row of `block` in canonical order.
    pub fn position(&self, block: BlockId) -> Result<usize> {
        let mut offset = 0;
        for lv in &self.levels {
            if lv.block_length == block.block_length {
                if block.index < lv.block_count {
                    return Ok(offset + block.index);
                }
                break;
            }
            offset += lv.block_count;
        }
        Err(Error::UnknownBlock(block))
    }

    /// Rows belonging to one level, in chronological order.
    pub fn level_rows(&self, block_length: usize) -> core::ops::Range<usize> {
        let mut offset = 0;
        for lv in &self.levels {
            if lv.block_length == block_length {
                return offset..offset + lv.block_count;
            }
            offset += lv.block_count;
        }
        0..0
    }

    /// Every (parent, child level) pair: the parent row and the rows of its
    /// descendants on one finer level whose length divides the parent's.
    pub fn parent_child_sets(&self) -> Vec<(usize, Vec<usize>)> {
        let mut out = Vec::new();
        for (pi, parent) in self.blocks.iter().enumerate() {
            for lv in &self.levels {
                if lv.block_length >= parent.block_length
                    || parent.block_length % lv.block_length != 0
                {
                    continue;
                }
                let children: Vec<usize> = self
                    .level_rows(lv.block_length)
                    .filter(|&r| parent.contains(&self.blocks[r]))
                    .collect();
                out.push((pi, children));
            }
        }
        out
    }

    /// Mean of the hours in each block.
    pub fn aggregate(&self, hourly: &[f64]) -> Result<HierarchyVector> {
        if hourly.len() != self.period {
            return Err(Error::Dimension {
                expected: self.period,
                got: hourly.len(),
            });
        }
        check_finite(hourly)?;
        Ok(HierarchyVector(
            self.blocks
                .iter()
                .map(|b| block_mean(hourly, *b))
                .collect(),
        ))
    }

    /// Largest relative violation of the parent-equals-mean-of-children
    /// identity across all parent/child-level pairs.
    pub fn coherence_error(&self, v: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for (parent, children) in self.parent_child_sets() {
            let mean = children.iter().map(|&c| v[c]).sum::<f64>() / children.len() as f64;
            let scale = v[parent].abs().max(mean.abs()).max(1.0);
            worst = worst.max((v[parent] - mean).abs() / scale);
        }
        worst
    }

    pub fn summing_matrix(&self) -> SummingMatrix {
        let entries = Matrix::from_fn(self.len(), self.period, |r, c| {
            let b = self.blocks[r];
            if b.hours().contains(&c) {
                1.0 / b.block_length as f64
            } else {
                0.0
            }
        });
        SummingMatrix {
            entries,
            hierarchy: self.clone(),
        }
    }
}

pub(crate) fn block_mean(hourly: &[f64], block: BlockId) -> f64 {
    hourly[block.hours()].iter().sum::<f64>() / block.block_length as f64
}

/// The `nodes x period` mean-aggregation operator.
#[derive(Debug, Clone, PartialEq)]
pub struct SummingMatrix {
    entries: Matrix,
    hierarchy: Hierarchy,
}

impl SummingMatrix {
    pub fn daily() -> Self {
        Hierarchy::daily().summing_matrix()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.entries
    }

    pub fn hierarchy(&self) -> &Hierarchy {
        &self.hierarchy
    }

    pub fn block_order(&self) -> &[BlockId] {
        self.hierarchy.blocks()
    }

    pub fn nodes(&self) -> usize {
        self.entries.rows()
    }

    pub fn bottom(&self) -> usize {
        self.entries.cols()
    }

    /// `S p` as a plain matrix product.
    pub fn apply(&self, bottom: &[f64]) -> Result<HierarchyVector> {
        self.entries.matvec(bottom).map(HierarchyVector)
    }
}

/// A value per hierarchy node in canonical block order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct HierarchyVector(pub Vec<f64>);

impl HierarchyVector {
    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    /// The bottom-level (hourly) entries.
    pub fn bottom(&self, period: usize) -> &[f64] {
        &self.0[self.0.len() - period..]
    }
}

impl Deref for HierarchyVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for HierarchyVector {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

impl From<Vec<f64>> for HierarchyVector {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}
