//! Patch tiling and stitching for processing large volumes piecewise.
//!
//! Offsets form a regular non-overlapping grid of `dim / patch` steps per
//! axis; when a dimension is not a multiple of the patch size, one trailing
//! layer is anchored at `dim - patch` so the union covers every voxel.
//! Offsets are enumerated x-fastest, then y, then z, with each axis's
//! trailing offset last; stitching writes patches back in that same
//! sequence, later patches overwriting earlier ones in overlap zones.

use crate::error::{Error, Result};
use crate::grid::VoxelGrid;

#[derive(Debug, Clone, PartialEq)]
pub struct PatchLayout {
    pub patch_dims: (usize, usize, usize),
    pub offsets: Vec<(usize, usize, usize)>,
    pub source_dims: (usize, usize, usize),
    pub spacing: (f64, f64, f64),
}

fn axis_offsets(n: usize, p: usize) -> Vec<usize> {
    let mut v: Vec<usize> = (0..n / p).map(|i| i * p).collect();
    if !n.is_multiple_of(p) {
        v.push(n - p);
    }
    v
}

/// Split a volume into patches of `patch_dims` with trailing-layer coverage.
pub fn tile_volume(
    grid: &VoxelGrid,
    patch_dims: (usize, usize, usize),
) -> Result<(PatchLayout, Vec<VoxelGrid>)> {
    let (nx, ny, nz) = grid.dims();
    let (px, py, pz) = patch_dims;
    if px == 0 || py == 0 || pz == 0 {
        return Err(Error::validation("patch dims must be >= 1 per axis"));
    }
    if px > nx || py > ny || pz > nz {
        return Err(Error::validation(format!(
            "patch {patch_dims:?} larger than volume {:?}",
            grid.dims()
        )));
    }
    let xs = axis_offsets(nx, px);
    let ys = axis_offsets(ny, py);
    let zs = axis_offsets(nz, pz);
    let mut offsets = Vec::with_capacity(xs.len() * ys.len() * zs.len());
    for &z in &zs {
        for &y in &ys {
            for &x in &xs {
                offsets.push((x, y, z));
            }
        }
    }
    let mut patches = Vec::with_capacity(offsets.len());
    for &corner in &offsets {
        patches.push(grid.extract_block(corner, patch_dims)?);
    }
    Ok((
        PatchLayout {
            patch_dims,
            offsets,
            source_dims: grid.dims(),
            spacing: grid.spacing(),
        },
        patches,
    ))
}

/// Reassemble patches in layout order; `stitch_volume(tile_volume(g)) == g`.
pub fn stitch_volume(layout: &PatchLayout, patches: &[VoxelGrid]) -> Result<VoxelGrid> {
    if patches.len() != layout.offsets.len() {
        return Err(Error::validation(format!(
            "layout expects {} patches, got {}",
            layout.offsets.len(),
            patches.len()
        )));
    }
    for p in patches {
        if p.dims() != layout.patch_dims {
            return Err(Error::DimsMismatch {
                left: layout.patch_dims,
                right: p.dims(),
            });
        }
    }
    let mut out = VoxelGrid::new(layout.source_dims, layout.spacing)?;
    for (&corner, patch) in layout.offsets.iter().zip(patches) {
        out.write_block(corner, patch)?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_grid(dims: (usize, usize, usize), seed: u64) -> VoxelGrid {
        let mut g = VoxelGrid::new(dims, (1.0, 1.0, 1.0)).unwrap();
        let mut state = seed;
        for i in 0..g.len() {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            if state >> 63 == 1 {
                g.set_linear(i, true);
            }
        }
        g
    }

    #[test]
    fn regular_tiling_counts() {
        // 512x512x128 with 128x128x64 patches: 4x4x2 = 32, no trailing layer
        let g = VoxelGrid::new((512, 512, 128), (1.0, 1.0, 1.0)).unwrap();
        let (layout, patches) = tile_volume(&g, (128, 128, 64)).unwrap();
        assert_eq!(patches.len(), 32);
        assert_eq!(layout.offsets.len(), 32);
    }

    #[test]
    fn trailing_z_layer_counts_and_anchor() {
        // 512x512x200: 4x4x3 = 48 regular plus 16 trailing at z = 136
        let g = VoxelGrid::new((512, 512, 200), (1.0, 1.0, 1.0)).unwrap();
        let (layout, patches) = tile_volume(&g, (128, 128, 64)).unwrap();
        assert_eq!(patches.len(), 64);
        let trailing: Vec<_> = layout
            .offsets
            .iter()
            .filter(|&&(_, _, z)| z == 136)
            .collect();
        assert_eq!(trailing.len(), 16);
        // trailing layer is enumerated last
        assert!(layout.offsets[48..].iter().all(|&(_, _, z)| z == 136));
        assert!(layout.offsets[..48].iter().all(|&(_, _, z)| z % 64 == 0));
    }

    #[test]
    fn single_patch_is_identity() {
        let g = random_grid((16, 12, 10), 3);
        let (layout, patches) = tile_volume(&g, g.dims()).unwrap();
        assert_eq!(patches.len(), 1);
        assert_eq!(patches[0], g);
        assert_eq!(stitch_volume(&layout, &patches).unwrap(), g);
    }

    #[test]
    fn roundtrip_with_trailing_layer() {
        let g = random_grid((256, 256, 96), 17);
        let (layout, patches) = tile_volume(&g, (128, 128, 64)).unwrap();
        assert_eq!(patches.len(), 2 * 2 * 2); // z offsets [0, 32]
        let back = stitch_volume(&layout, &patches).unwrap();
        assert_eq!(back, g);
    }

    #[test]
    fn all_empty_patches_stitch_to_empty() {
        let g = random_grid((32, 32, 20), 9);
        let (layout, patches) = tile_volume(&g, (16, 16, 8)).unwrap();
        let empties: Vec<VoxelGrid> = patches
            .iter()
            .map(|p| VoxelGrid::new(p.dims(), p.spacing()).unwrap())
            .collect();
        let out = stitch_volume(&layout, &empties).unwrap();
        assert!(out.is_empty());
    }

    #[test]
    fn patch_larger_than_volume_rejected() {
        let g = random_grid((8, 8, 8), 1);
        assert!(tile_volume(&g, (16, 8, 8)).is_err());
    }

    #[test]
    fn stitch_validates_count_and_dims() {
        let g = random_grid((16, 16, 16), 5);
        let (layout, mut patches) = tile_volume(&g, (8, 8, 8)).unwrap();
        patches.pop();
        assert!(stitch_volume(&layout, &patches).is_err());

        let (layout, _) = tile_volume(&g, (8, 8, 8)).unwrap();
        let wrong = vec![VoxelGrid::new((4, 4, 4), (1.0, 1.0, 1.0)).unwrap(); 8];
        assert!(stitch_volume(&layout, &wrong).is_err());
    }
}
