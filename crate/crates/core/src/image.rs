//! Image containers, block partitioning and Frobenius algebra.

use std::collections::HashSet;

use crate::{Error, Result};

/// Anything that can be viewed as a dense row-major 2D array of reals.
pub trait Plane {
    fn rows(&self) -> usize;
    fn cols(&self) -> usize;
    fn values(&self) -> &[f64];
}

/// A 2D real array with bit-depth metadata.
///
/// Intensity images hold integers in `[0, 2^l - 1]`; transform-domain arrays
/// hold arbitrary reals and keep `bit_depth` only for later PSNR computation.
/// Storage is row-major with `height` rows of `width` samples.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageArray {
    width: usize,
    height: usize,
    bit_depth: u8,
    data: Vec<f64>,
}

impl ImageArray {
    pub fn new(width: usize, height: usize, bit_depth: u8, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid("image dimensions must be positive"));
        }
        if !(1..=16).contains(&bit_depth) {
            return Err(Error::invalid(format!("unsupported bit depth {bit_depth}")));
        }
        if data.len() != width * height {
            return Err(Error::invalid(format!(
                "expected {} samples for {width}x{height}, got {}",
                width * height,
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            bit_depth,
            data,
        })
    }

    pub fn zeros(width: usize, height: usize, bit_depth: u8) -> Result<Self> {
        Self::new(width, height, bit_depth, vec![0.0; width * height])
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        bit_depth: u8,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height);
        for r in 0..height {
            for c in 0..width {
                data.push(f(r, c));
            }
        }
        Self::new(width, height, bit_depth, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bit_depth(&self) -> u8 {
        self.bit_depth
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    /// Largest representable intensity, `2^l - 1`.
    pub fn peak(&self) -> f64 {
        peak_value(self.bit_depth)
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.data[row * self.width + col] = value;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn same_shape(&self, other: &ImageArray) -> bool {
        self.width == other.width && self.height == other.height
    }

    /// True when every sample is an integer inside the intensity range.
    pub fn is_intensity(&self) -> bool {
        let peak = self.peak();
        self.data
            .iter()
            .all(|&v| v.fract() == 0.0 && (0.0..=peak).contains(&v))
    }

    /// Round half away from zero, then clamp to `[0, 2^l - 1]`.
    pub fn to_intensity(&self) -> ImageArray {
        let peak = self.peak();
        ImageArray {
            width: self.width,
            height: self.height,
            bit_depth: self.bit_depth,
            data: self.data.iter().map(|v| v.round().clamp(0.0, peak)).collect(),
        }
    }
}

impl Plane for ImageArray {
    fn rows(&self) -> usize {
        self.height
    }
    fn cols(&self) -> usize {
        self.width
    }
    fn values(&self) -> &[f64] {
        &self.data
    }
}

pub fn peak_value(bit_depth: u8) -> f64 {
    ((1u32 << bit_depth) - 1) as f64
}

/// Square `n x n` real array, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    size: usize,
    data: Vec<f64>,
}

impl Block {
    pub fn zeros(size: usize) -> Self {
        Self {
            size,
            data: vec![0.0; size * size],
        }
    }

    pub fn from_vec(size: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != size * size {
            return Err(Error::invalid(format!(
                "block of size {size} needs {} values, got {}",
                size * size,
                data.len()
            )));
        }
        Ok(Self { size, data })
    }

    /// Outer product `x y^T`; entry `(r, c)` is `x[r] * y[c]`.
    pub fn outer(x: &[f64], y: &[f64]) -> Self {
        debug_assert_eq!(x.len(), y.len());
        let size = x.len();
        let mut data = Vec::with_capacity(size * size);
        for &xr in x {
            data.extend(y.iter().map(|&yc| xr * yc));
        }
        Self { size, data }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.size + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.data[row * self.size + col] = value;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn norm_sq(&self) -> f64 {
        dot(&self.data, &self.data)
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    /// `self += alpha * x y^T`
    pub fn add_outer(&mut self, alpha: f64, x: &[f64], y: &[f64]) {
        for (row, &xr) in self.data.chunks_exact_mut(self.size).zip(x) {
            let s = alpha * xr;
            for (v, &yc) in row.iter_mut().zip(y) {
                *v += s * yc;
            }
        }
    }

    /// `self += alpha * other`
    pub fn axpy(&mut self, alpha: f64, other: &Block) {
        for (v, &o) in self.data.iter_mut().zip(&other.data) {
            *v += alpha * o;
        }
    }

    /// `x^T self y`, i.e. the Frobenius product of `self` with `x y^T`.
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        let mut acc = 0.0;
        for (row, &xr) in self.data.chunks_exact(self.size).zip(x) {
            acc += xr * dot(row, y);
        }
        acc
    }
}

impl Plane for Block {
    fn rows(&self) -> usize {
        self.size
    }
    fn cols(&self) -> usize {
        self.size
    }
    fn values(&self) -> &[f64] {
        &self.data
    }
}

/// Sequential dot product. Summation order is fixed so results are
/// reproducible across runs and thread counts.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `sum_{i,j} G1(i,j) G2(i,j)`
pub fn frobenius_inner<A, B>(g1: &A, g2: &B) -> Result<f64>
where
    A: Plane + ?Sized,
    B: Plane + ?Sized,
{
    if g1.rows() != g2.rows() || g1.cols() != g2.cols() {
        return Err(Error::invalid(format!(
            "dimension mismatch: {}x{} vs {}x{}",
            g1.rows(),
            g1.cols(),
            g2.rows(),
            g2.cols()
        )));
    }
    Ok(dot(g1.values(), g2.values()))
}

pub fn frobenius_norm<A: Plane + ?Sized>(g: &A) -> f64 {
    dot(g.values(), g.values()).sqrt()
}

/// How the out-of-image part of edge blocks is filled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PadPolicy {
    #[default]
    Zero,
}

/// Geometry of a block grid laid over an image. Blocks are numbered
/// row-major over the grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockGrid {
    pub block_size: usize,
    pub grid_rows: usize,
    pub grid_cols: usize,
    pub width: usize,
    pub height: usize,
}

impl BlockGrid {
    pub fn new(width: usize, height: usize, block_size: usize) -> Result<Self> {
        if block_size < 2 {
            return Err(Error::invalid("block size must be at least 2"));
        }
        if width == 0 || height == 0 {
            return Err(Error::invalid("cannot partition an empty array"));
        }
        if block_size > width && block_size > height {
            return Err(Error::invalid(format!(
                "block size {block_size} exceeds both image dimensions {width}x{height}"
            )));
        }
        Ok(Self {
            block_size,
            grid_rows: height.div_ceil(block_size),
            grid_cols: width.div_ceil(block_size),
            width,
            height,
        })
    }

    /// Number of blocks `Q`.
    pub fn block_count(&self) -> usize {
        self.grid_rows * self.grid_cols
    }

    /// Top-left pixel `(row, col)` of block `q`.
    pub fn origin(&self, q: usize) -> (usize, usize) {
        (
            (q / self.grid_cols) * self.block_size,
            (q % self.grid_cols) * self.block_size,
        )
    }

    pub fn is_padded(&self) -> bool {
        self.grid_rows * self.block_size != self.height
            || self.grid_cols * self.block_size != self.width
    }
}

/// The set of blocks `U_q` cut from an array, plus what is needed to put it
/// back together.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockPartition {
    pub grid: BlockGrid,
    pub bit_depth: u8,
    pub pad: PadPolicy,
    pub blocks: Vec<Block>,
}

impl BlockPartition {
    pub fn block_size(&self) -> usize {
        self.grid.block_size
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    /// Same geometry, new block contents.
    pub fn with_blocks(&self, blocks: Vec<Block>) -> BlockPartition {
        BlockPartition {
            grid: self.grid,
            bit_depth: self.bit_depth,
            pad: self.pad,
            blocks,
        }
    }
}

/// Cut `arr` into disjoint `block_size x block_size` blocks, zero-padding on
/// the right and bottom edges.
pub fn partition(arr: &ImageArray, block_size: usize) -> Result<BlockPartition> {
    let grid = BlockGrid::new(arr.width(), arr.height(), block_size)?;
    let blocks = (0..grid.block_count())
        .map(|q| {
            let (r0, c0) = grid.origin(q);
            let mut block = Block::zeros(block_size);
            let rows = block_size.min(arr.height() - r0);
            let cols = block_size.min(arr.width() - c0);
            for r in 0..rows {
                let src = &arr.data()[(r0 + r) * arr.width() + c0..][..cols];
                block.data_mut()[r * block_size..][..cols].copy_from_slice(src);
            }
            block
        })
        .collect();
    Ok(BlockPartition {
        grid,
        bit_depth: arr.bit_depth(),
        pad: PadPolicy::Zero,
        blocks,
    })
}

/// Inverse of [`partition`]: every pixel comes from its owning block and the
/// padding is discarded.
pub fn assemble(p: &BlockPartition) -> Result<ImageArray> {
    let grid = &p.grid;
    let nb = grid.block_size;
    if p.blocks.len() != grid.block_count() {
        return Err(Error::InvalidState(format!(
            "partition has {} blocks, grid needs {}",
            p.blocks.len(),
            grid.block_count()
        )));
    }
    if let Some((q, b)) = p.blocks.iter().enumerate().find(|(_, b)| b.size() != nb) {
        return Err(Error::InvalidState(format!(
            "block {q} is {}x{}, expected {nb}x{nb}",
            b.size(),
            b.size()
        )));
    }
    let mut out = ImageArray::zeros(grid.width, grid.height, p.bit_depth)?;
    let width = grid.width;
    for (q, block) in p.blocks.iter().enumerate() {
        let (r0, c0) = grid.origin(q);
        let rows = nb.min(grid.height - r0);
        let cols = nb.min(width - c0);
        for r in 0..rows {
            out.data_mut()[(r0 + r) * width + c0..][..cols]
                .copy_from_slice(&block.data()[r * nb..][..cols]);
        }
    }
    Ok(out)
}

/// Index pair `(l^x, l^y)` of a separable 2D atom `d^x_{l^x} (d^y_{l^y})^T`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AtomPair {
    pub x: usize,
    pub y: usize,
}

impl AtomPair {
    pub fn new(x: usize, y: usize) -> Self {
        Self { x, y }
    }
}

/// Atoms and coefficients approximating block `q`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AtomicDecomposition {
    pub block: usize,
    pub atoms: Vec<AtomPair>,
    pub coefficients: Vec<f64>,
}

impl AtomicDecomposition {
    pub fn new(block: usize) -> Self {
        Self {
            block,
            ..Default::default()
        }
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn push(&mut self, pair: AtomPair, coefficient: f64) {
        self.atoms.push(pair);
        self.coefficients.push(coefficient);
    }

    /// Remove term `j`, shifting the later terms down.
    pub fn remove(&mut self, j: usize) -> (AtomPair, f64) {
        (self.atoms.remove(j), self.coefficients.remove(j))
    }

    /// Checks the structural invariants: matching lengths, no repeated pair,
    /// at most `block_size^2` terms.
    pub fn validate(&self, block_size: usize) -> Result<()> {
        if self.atoms.len() != self.coefficients.len() {
            return Err(Error::InvalidState(format!(
                "block {}: {} atoms but {} coefficients",
                self.block,
                self.atoms.len(),
                self.coefficients.len()
            )));
        }
        if self.atoms.len() > block_size * block_size {
            return Err(Error::InvalidState(format!(
                "block {}: {} atoms exceed block dimension {}",
                self.block,
                self.atoms.len(),
                block_size * block_size
            )));
        }
        let mut seen = HashSet::with_capacity(self.atoms.len());
        for a in &self.atoms {
            if !seen.insert(*a) {
                return Err(Error::InvalidState(format!(
                    "block {}: duplicate atom ({}, {})",
                    self.block, a.x, a.y
                )));
            }
        }
        Ok(())
    }
}
