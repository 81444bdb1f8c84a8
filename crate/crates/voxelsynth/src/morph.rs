//! Connected components (26-connectivity) and cube-kernel morphology.

use std::collections::VecDeque;

use crate::error::Result;
use crate::grid::VoxelGrid;

/// Which components survive denoising.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KeepRule {
    /// Keep only the largest component (ties broken by smallest minimum
    /// linear index, i.e. first encountered in raster order).
    LargestComponent,
    /// Keep every component with at least this many voxels.
    MinSize(u64),
}

/// Per-voxel component labels (0 = background, components numbered from 1 in
/// raster order of their first voxel) and the size of each component.
pub fn label_components(grid: &VoxelGrid) -> (Vec<u32>, Vec<u64>) {
    let (nx, ny, nz) = grid.dims();
    let n = grid.len();
    let mut labels = vec![0u32; n];
    let mut sizes = Vec::new();
    let mut queue = VecDeque::new();

    for start in 0..n {
        if !grid.get_linear(start) || labels[start] != 0 {
            continue;
        }
        let label = sizes.len() as u32 + 1;
        let mut size = 0u64;
        labels[start] = label;
        queue.push_back(start);
        while let Some(i) = queue.pop_front() {
            size += 1;
            let x = (i % nx) as i64;
            let y = ((i / nx) % ny) as i64;
            let z = (i / (nx * ny)) as i64;
            for dz in -1..=1i64 {
                for dy in -1..=1i64 {
                    for dx in -1..=1i64 {
                        if dx == 0 && dy == 0 && dz == 0 {
                            continue;
                        }
                        let (px, py, pz) = (x + dx, y + dy, z + dz);
                        if px < 0
                            || py < 0
                            || pz < 0
                            || px >= nx as i64
                            || py >= ny as i64
                            || pz >= nz as i64
                        {
                            continue;
                        }
                        let j = px as usize + nx * (py as usize + ny * pz as usize);
                        if grid.get_linear(j) && labels[j] == 0 {
                            labels[j] = label;
                            queue.push_back(j);
                        }
                    }
                }
            }
        }
        sizes.push(size);
    }
    (labels, sizes)
}

fn separable_pass(
    src: &[u8],
    dst: &mut [u8],
    dims: (usize, usize, usize),
    axis: usize,
    radius: usize,
    all: bool, // true = erosion (AND over window incl. out-of-bounds zeros)
) {
    let (nx, ny, nz) = dims;
    let stride = [1, nx, nx * ny][axis];
    let len = [nx, ny, nz][axis];
    let r = radius as i64;
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let pos = [x, y, z][axis] as i64;
                let base = x + nx * (y + ny * z);
                let mut acc = all;
                for d in -r..=r {
                    let p = pos + d;
                    let v = if p < 0 || p >= len as i64 {
                        false
                    } else {
                        src[(base as i64 + d * stride as i64) as usize] != 0
                    };
                    if all {
                        acc &= v;
                    } else {
                        acc |= v;
                    }
                }
                dst[base] = acc as u8;
            }
        }
    }
}

fn cube_filter(grid: &VoxelGrid, radius: usize, erode: bool) -> VoxelGrid {
    if radius == 0 {
        return grid.clone();
    }
    let dims = grid.dims();
    let mut a = grid.to_bytes();
    let mut b = vec![0u8; a.len()];
    for axis in 0..3 {
        separable_pass(&a, &mut b, dims, axis, radius, erode);
        std::mem::swap(&mut a, &mut b);
    }
    let mut out = VoxelGrid::new(dims, grid.spacing()).expect("dims already validated");
    for (i, &v) in a.iter().enumerate() {
        if v != 0 {
            out.set_linear(i, true);
        }
    }
    out
}

/// Morphological erosion with a cubic structuring element of half-width
/// `radius`; voxels outside the grid count as background.
pub fn erode_cube(grid: &VoxelGrid, radius: usize) -> VoxelGrid {
    cube_filter(grid, radius, true)
}

/// Morphological dilation with a cubic structuring element of half-width
/// `radius`.
pub fn dilate_cube(grid: &VoxelGrid, radius: usize) -> VoxelGrid {
    cube_filter(grid, radius, false)
}

/// Erosion followed by dilation with the same cubic element.
pub fn opening_cube(grid: &VoxelGrid, radius: usize) -> VoxelGrid {
    dilate_cube(&erode_cube(grid, radius), radius)
}

/// Remove components failing `keep`, then apply a morphological opening with
/// a cubic element of half-width `morph_radius` (0 = no-op).
pub fn denoise(grid: &VoxelGrid, keep: KeepRule, morph_radius: usize) -> Result<VoxelGrid> {
    let (labels, sizes) = label_components(grid);
    let mut survivors = vec![false; sizes.len() + 1];
    match keep {
        KeepRule::LargestComponent => {
            let mut best: Option<(u64, usize)> = None;
            for (i, &s) in sizes.iter().enumerate() {
                // strict > keeps the first (smallest min linear index) on ties
                if best.is_none_or(|(bs, _)| s > bs) {
                    best = Some((s, i));
                }
            }
            if let Some((_, i)) = best {
                survivors[i + 1] = true;
            }
        }
        KeepRule::MinSize(min) => {
            for (i, &s) in sizes.iter().enumerate() {
                if s >= min {
                    survivors[i + 1] = true;
                }
            }
        }
    }
    let mut filtered = VoxelGrid::new(grid.dims(), grid.spacing())?;
    for (i, &label) in labels.iter().enumerate() {
        if label != 0 && survivors[label as usize] {
            filtered.set_linear(i, true);
        }
    }
    Ok(opening_cube(&filtered, morph_radius))
}
