use std::ops::Range;

use crate::error::{KkmError, Result};
use crate::fabric::Grid;

/// `[s·len/parts, (s+1)·len/parts)` for `parts | len`.
pub fn even_block(len: usize, parts: usize, s: usize) -> Range<usize> {
    let w = len / parts;
    s * w..(s + 1) * w
}

/// Chunk `s` of `0..d` cut into `q` pieces of width `⌈d/q⌉`; trailing chunks
/// may be short or empty.
pub fn ceil_chunk(d: usize, q: usize, s: usize) -> Range<usize> {
    let w = d.div_ceil(q);
    (s * w).min(d)..((s + 1) * w).min(d)
}

/// Row set of grid row `i` in the strided 2D layout: within every point
/// block `b` of width `n/q`, the `i`-th sub-block of width `n/P`.
pub fn strided_rows(n: usize, q: usize, i: usize) -> Vec<usize> {
    let nq = n / q;
    let nb = nq / q;
    (0..q)
        .flat_map(|b| {
            let start = b * nq + i * nb;
            start..start + nb
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TileScheme {
    /// Rank `p` owns columns `[p·n/P, (p+1)·n/P)`.
    OneDColumns,
    /// Rank at grid position `(i, j)` owns the `(i, j)` tile of a `q×q` blocking.
    TwoDGrid,
}

/// Which rank owns which rectangle of a matrix.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TileMap {
    rows: usize,
    cols: usize,
    scheme: TileScheme,
    tiles: Vec<(Range<usize>, Range<usize>)>,
}

impl TileMap {
    pub fn one_d_columns(rows: usize, cols: usize, ranks: usize) -> Result<Self> {
        if ranks == 0 || !cols.is_multiple_of(ranks) {
            return Err(KkmError::Divisibility(format!(
                "{ranks} ranks do not evenly divide {cols} columns"
            )));
        }
        Ok(Self {
            rows,
            cols,
            scheme: TileScheme::OneDColumns,
            tiles: (0..ranks).map(|p| (0..rows, even_block(cols, ranks, p))).collect(),
        })
    }

    pub fn two_d_grid(rows: usize, cols: usize, grid: &Grid) -> Result<Self> {
        let q = grid.side();
        if grid.ranks() != q * q || !rows.is_multiple_of(q) || !cols.is_multiple_of(q) {
            return Err(KkmError::Divisibility(format!(
                "a {q}×{q} grid does not evenly tile a {rows}×{cols} matrix"
            )));
        }
        Ok(Self {
            rows,
            cols,
            scheme: TileScheme::TwoDGrid,
            tiles: (0..grid.ranks())
                .map(|r| {
                    let (i, j) = grid.coords(r);
                    (even_block(rows, q, i), even_block(cols, q, j))
                })
                .collect(),
        })
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn scheme(&self) -> TileScheme {
        self.scheme
    }

    pub fn ranks(&self) -> usize {
        self.tiles.len()
    }

    /// `(row range, column range)` owned by `rank`.
    pub fn tile(&self, rank: usize) -> (Range<usize>, Range<usize>) {
        self.tiles[rank].clone()
    }

    pub fn owner(&self, row: usize, col: usize) -> Option<usize> {
        self.tiles
            .iter()
            .position(|(r, c)| r.contains(&row) && c.contains(&col))
    }
}
