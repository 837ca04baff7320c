// SPDX-License-Identifier: Apache-2.0

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::init;

/// Patch keep/drop pattern for one image. `grid[r][c]` is true when the
/// patch is kept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskGrid {
    pub patch_size: usize,
    pub grid: Vec<Vec<bool>>,
    pub mask_ratio: f64,
    pub seed: u64,
}

impl MaskGrid {
    /// A grid with every patch set to `kept`.
    pub fn uniform(rows: usize, cols: usize, patch_size: usize, kept: bool) -> Self {
        Self {
            patch_size,
            grid: vec![vec![kept; cols]; rows],
            mask_ratio: if kept { 0.0 } else { 1.0 },
            seed: 0,
        }
    }

    pub fn from_grid(grid: Vec<Vec<bool>>, patch_size: usize) -> Result<Self> {
        let cols = grid.first().map_or(0, Vec::len);
        if grid.is_empty() || cols == 0 || grid.iter().any(|r| r.len() != cols) {
            return Err(Error::invalid("mask grid", "rows must be non-empty and of equal length"));
        }
        if patch_size == 0 {
            return Err(Error::invalid("mask grid", "patch size must be positive"));
        }
        let masked = grid.iter().flatten().filter(|k| !**k).count();
        let total = grid.len() * cols;
        Ok(Self {
            patch_size,
            grid,
            mask_ratio: masked as f64 / total as f64,
            seed: 0,
        })
    }

    pub fn rows(&self) -> usize {
        self.grid.len()
    }

    pub fn cols(&self) -> usize {
        self.grid.first().map_or(0, Vec::len)
    }

    pub fn image_hw(&self) -> (usize, usize) {
        (self.rows() * self.patch_size, self.cols() * self.patch_size)
    }

    pub fn kept(&self, r: usize, c: usize) -> bool {
        self.grid[r][c]
    }

    pub fn kept_count(&self) -> usize {
        self.grid.iter().flatten().filter(|k| **k).count()
    }

    pub fn masked_count(&self) -> usize {
        self.rows() * self.cols() - self.kept_count()
    }

    pub fn kept_fraction(&self) -> f64 {
        self.kept_count() as f64 / (self.rows() * self.cols()) as f64
    }

    /// Keep flags for an `h x w` feature map, row-major.
    ///
    /// Maps at least as fine as the grid replicate each cell; coarser maps
    /// OR-pool the cells they cover.
    pub fn at_resolution(&self, h: usize, w: usize) -> Result<Vec<bool>> {
        let (rows, cols) = (self.rows(), self.cols());
        let mismatch = || {
            Error::invalid(
                "mask",
                format!("feature map {h}x{w} does not align with a {rows}x{cols} patch grid"),
            )
        };
        if h == 0 || w == 0 {
            return Err(mismatch());
        }
        let coarse = if h >= rows {
            if !h.is_multiple_of(rows) || w < cols || !w.is_multiple_of(cols) || h / rows != w / cols {
                return Err(mismatch());
            }
            let k = h / rows;
            return Ok((0..h * w).map(|i| self.grid[i / w / k][i % w / k]).collect());
        } else {
            if rows % h != 0 || cols % w != 0 || rows / h != cols / w {
                return Err(mismatch());
            }
            mask_downsample(self, rows / h)?
        };
        Ok(coarse.grid.into_iter().flatten().collect())
    }

    /// Text bitmap: `#` masked, `.` kept, one grid row per line.
    pub fn to_bitmap(&self) -> String {
        let mut s = String::with_capacity(self.rows() * (self.cols() + 1));
        for row in &self.grid {
            s.extend(row.iter().map(|&k| if k { '.' } else { '#' }));
            s.push('\n');
        }
        s
    }
}

/// Masks each patch independently with probability `mask_ratio`.
pub fn generate_mask(h: usize, w: usize, patch_size: usize, mask_ratio: f64, seed: u64) -> Result<MaskGrid> {
    if patch_size == 0 || h == 0 || w == 0 || !h.is_multiple_of(patch_size) || !w.is_multiple_of(patch_size) {
        return Err(Error::invalid(
            "generate_mask",
            format!("{h}x{w} is not divisible into {patch_size}-pixel patches"),
        ));
    }
    if !(0.0..=1.0).contains(&mask_ratio) {
        return Err(Error::invalid("generate_mask", format!("mask ratio {mask_ratio} outside [0, 1]")));
    }
    let mut rng = init::rng(seed);
    let grid = (0..h / patch_size)
        .map(|_| (0..w / patch_size).map(|_| rng.gen::<f64>() >= mask_ratio).collect())
        .collect();
    Ok(MaskGrid {
        patch_size,
        grid,
        mask_ratio,
        seed,
    })
}

/// OR-pools `factor x factor` blocks: a coarse cell is kept if any of its
/// cells is.
pub fn mask_downsample(mask: &MaskGrid, factor: usize) -> Result<MaskGrid> {
    let (rows, cols) = (mask.rows(), mask.cols());
    if factor == 0 || rows % factor != 0 || cols % factor != 0 {
        return Err(Error::invalid(
            "mask_downsample",
            format!("{rows}x{cols} grid is not divisible by factor {factor}"),
        ));
    }
    let grid = (0..rows / factor)
        .map(|r| {
            (0..cols / factor)
                .map(|c| {
                    (0..factor).any(|dy| (0..factor).any(|dx| mask.grid[r * factor + dy][c * factor + dx]))
                })
                .collect()
        })
        .collect();
    Ok(MaskGrid {
        patch_size: mask.patch_size * factor,
        grid,
        mask_ratio: mask.mask_ratio,
        seed: mask.seed,
    })
}
