//! Bit-packed binary voxel grid.
//!
//! One bit per voxel, raster order with x fastest, then y, then z. Bits are
//! packed little-endian within 64-bit words: linear index `i` lives at bit
//! `i % 64` of word `i / 64`. Unused bits of the last word are always zero,
//! so popcount, XOR diffs and equality work on whole words.

use crate::error::{Error, Result};

#[derive(Clone, PartialEq)]
pub struct VoxelGrid {
    dims: (usize, usize, usize),
    spacing: (f64, f64, f64),
    words: Vec<u64>,
}

impl std::fmt::Debug for VoxelGrid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("VoxelGrid")
            .field("dims", &self.dims)
            .field("spacing", &self.spacing)
            .field("occupied", &self.count_occupied())
            .finish()
    }
}

impl VoxelGrid {
    /// Empty (all-zero) grid. Dims must be >= 1 per axis, spacing > 0.
    pub fn new(dims: (usize, usize, usize), spacing: (f64, f64, f64)) -> Result<Self> {
        let (nx, ny, nz) = dims;
        if nx == 0 || ny == 0 || nz == 0 {
            return Err(Error::validation(format!(
                "grid dims must be >= 1 per axis, got {dims:?}"
            )));
        }
        let (sx, sy, sz) = spacing;
        if !(sx > 0.0 && sy > 0.0 && sz > 0.0) {
            return Err(Error::validation(format!(
                "grid spacing must be > 0 per axis, got {spacing:?}"
            )));
        }
        let total = nx
            .checked_mul(ny)
            .and_then(|v| v.checked_mul(nz))
            .and_then(|v| v.checked_add(63))
            .ok_or(Error::DimsOverflow { dims })?;
        Ok(VoxelGrid {
            dims,
            spacing,
            words: vec![0u64; total / 64],
        })
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        self.dims
    }

    pub fn spacing(&self) -> (f64, f64, f64) {
        self.spacing
    }

    /// Total voxel count.
    pub fn len(&self) -> usize {
        self.dims.0 * self.dims.1 * self.dims.2
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    #[inline]
    pub fn linear(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims.0 * (y + self.dims.1 * z)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> bool {
        debug_assert!(x < self.dims.0 && y < self.dims.1 && z < self.dims.2);
        self.get_linear(self.linear(x, y, z))
    }

    #[inline]
    pub fn get_linear(&self, i: usize) -> bool {
        (self.words[i / 64] >> (i % 64)) & 1 == 1
    }

    /// Occupancy at a signed coordinate; out-of-bounds reads as 0.
    #[inline]
    pub fn get_padded(&self, x: i64, y: i64, z: i64) -> bool {
        if x < 0
            || y < 0
            || z < 0
            || x as usize >= self.dims.0
            || y as usize >= self.dims.1
            || z as usize >= self.dims.2
        {
            return false;
        }
        self.get(x as usize, y as usize, z as usize)
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, z: usize, value: bool) {
        debug_assert!(x < self.dims.0 && y < self.dims.1 && z < self.dims.2);
        self.set_linear(self.linear(x, y, z), value);
    }

    #[inline]
    pub fn set_linear(&mut self, i: usize, value: bool) {
        let mask = 1u64 << (i % 64);
        if value {
            self.words[i / 64] |= mask;
        } else {
            self.words[i / 64] &= !mask;
        }
    }

    /// Occupied-voxel count via popcount over packed words.
    pub fn count_occupied(&self) -> u64 {
        self.words.iter().map(|w| w.count_ones() as u64).sum()
    }

    /// Fraction of occupied voxels.
    pub fn occupancy_rate(&self) -> f64 {
        self.count_occupied() as f64 / self.len() as f64
    }

    pub fn fill(&mut self, value: bool) {
        let w = if value { u64::MAX } else { 0 };
        for word in &mut self.words {
            *word = w;
        }
        if value {
            self.mask_tail();
        }
    }

    /// Number of voxels on which the two grids disagree.
    pub fn xor_count(&self, other: &VoxelGrid) -> Result<u64> {
        self.check_same_dims(other)?;
        Ok(self
            .words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a ^ b).count_ones() as u64)
            .sum())
    }

    /// Iterator over occupied coordinates in raster order (z, then y, then x
    /// lexicographic — x fastest).
    pub fn occupied_coords(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        let (nx, ny, _) = self.dims;
        (0..self.len()).filter_map(move |i| {
            if self.get_linear(i) {
                Some((i % nx, (i / nx) % ny, i / (nx * ny)))
            } else {
                None
            }
        })
    }

    /// One byte per voxel (0 or 1) in raster order.
    pub fn to_bytes(&self) -> Vec<u8> {
        (0..self.len()).map(|i| self.get_linear(i) as u8).collect()
    }

    /// Build from a byte-per-voxel payload. Bytes must already be 0 or 1.
    pub fn from_binary_bytes(
        dims: (usize, usize, usize),
        spacing: (f64, f64, f64),
        bytes: &[u8],
    ) -> Result<Self> {
        let mut grid = VoxelGrid::new(dims, spacing)?;
        if bytes.len() != grid.len() {
            return Err(Error::validation(format!(
                "payload length {} does not match dims {:?} ({} voxels)",
                bytes.len(),
                dims,
                grid.len()
            )));
        }
        for (i, &b) in bytes.iter().enumerate() {
            if b == 1 {
                grid.set_linear(i, true);
            }
        }
        Ok(grid)
    }

    /// Copy of this grid with new dims, zero-padded at the high end of each
    /// axis. New dims must be >= current dims.
    pub fn pad_to(&self, new_dims: (usize, usize, usize)) -> Result<VoxelGrid> {
        let (nx, ny, nz) = self.dims;
        if new_dims.0 < nx || new_dims.1 < ny || new_dims.2 < nz {
            return Err(Error::validation(format!(
                "pad target {new_dims:?} smaller than source {:?}",
                self.dims
            )));
        }
        let mut out = VoxelGrid::new(new_dims, self.spacing)?;
        for (x, y, z) in self.occupied_coords() {
            out.set(x, y, z, true);
        }
        Ok(out)
    }

    /// Low-corner crop to `new_dims` (undoes `pad_to`).
    pub fn crop_to(&self, new_dims: (usize, usize, usize)) -> Result<VoxelGrid> {
        let (nx, ny, nz) = self.dims;
        if new_dims.0 > nx || new_dims.1 > ny || new_dims.2 > nz {
            return Err(Error::validation(format!(
                "crop target {new_dims:?} larger than source {:?}",
                self.dims
            )));
        }
        let mut out = VoxelGrid::new(new_dims, self.spacing)?;
        for z in 0..new_dims.2 {
            for y in 0..new_dims.1 {
                for x in 0..new_dims.0 {
                    if self.get(x, y, z) {
                        out.set(x, y, z, true);
                    }
                }
            }
        }
        Ok(out)
    }

    /// Rectangular sub-block copy; `corner + size` must fit inside the grid.
    pub fn extract_block(
        &self,
        corner: (usize, usize, usize),
        size: (usize, usize, usize),
    ) -> Result<VoxelGrid> {
        let (cx, cy, cz) = corner;
        let (bx, by, bz) = size;
        if cx + bx > self.dims.0 || cy + by > self.dims.1 || cz + bz > self.dims.2 {
            return Err(Error::validation(format!(
                "block corner {corner:?} size {size:?} exceeds dims {:?}",
                self.dims
            )));
        }
        let mut out = VoxelGrid::new(size, self.spacing)?;
        for z in 0..bz {
            for y in 0..by {
                for x in 0..bx {
                    if self.get(cx + x, cy + y, cz + z) {
                        out.set(x, y, z, true);
                    }
                }
            }
        }
        Ok(out)
    }

    /// Write `block` into this grid at `corner`, overwriting (both 0s and 1s).
    pub fn write_block(&mut self, corner: (usize, usize, usize), block: &VoxelGrid) -> Result<()> {
        let (cx, cy, cz) = corner;
        let (bx, by, bz) = block.dims;
        if cx + bx > self.dims.0 || cy + by > self.dims.1 || cz + bz > self.dims.2 {
            return Err(Error::validation(format!(
                "block corner {corner:?} size {:?} exceeds dims {:?}",
                block.dims, self.dims
            )));
        }
        for z in 0..bz {
            for y in 0..by {
                for x in 0..bx {
                    self.set(cx + x, cy + y, cz + z, block.get(x, y, z));
                }
            }
        }
        Ok(())
    }

    pub(crate) fn words(&self) -> &[u64] {
        &self.words
    }

    pub(crate) fn check_same_dims(&self, other: &VoxelGrid) -> Result<()> {
        if self.dims != other.dims {
            return Err(Error::DimsMismatch {
                left: self.dims,
                right: other.dims,
            });
        }
        Ok(())
    }

    pub(crate) fn check_same_geometry(&self, other: &VoxelGrid) -> Result<()> {
        self.check_same_dims(other)?;
        if self.spacing != other.spacing {
            return Err(Error::SpacingMismatch {
                left: self.spacing,
                right: other.spacing,
            });
        }
        Ok(())
    }

    fn mask_tail(&mut self) {
        let used = self.len() % 64;
        if used != 0 {
            if let Some(last) = self.words.last_mut() {
                *last &= (1u64 << used) - 1;
            }
        }
    }
}

/// Voxel-wise `complete AND NOT defective`; the implant-extraction primitive.
pub fn subtract(complete: &VoxelGrid, defective: &VoxelGrid) -> Result<VoxelGrid> {
    complete.check_same_geometry(defective)?;
    let mut out = complete.clone();
    for (w, d) in out.words.iter_mut().zip(&defective.words) {
        *w &= !d;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(dims: (usize, usize, usize)) -> VoxelGrid {
        VoxelGrid::new(dims, (1.0, 1.0, 1.0)).unwrap()
    }

    #[test]
    fn raster_order_is_x_fastest() {
        let g = grid((4, 3, 2));
        assert_eq!(g.linear(1, 0, 0), 1);
        assert_eq!(g.linear(0, 1, 0), 4);
        assert_eq!(g.linear(0, 0, 1), 12);
        assert_eq!(g.linear(3, 2, 1), 23);
    }

    #[test]
    fn set_get_roundtrip_and_popcount() {
        let mut g = grid((5, 5, 5));
        g.set(1, 2, 3, true);
        g.set(4, 4, 4, true);
        assert!(g.get(1, 2, 3));
        assert!(!g.get(0, 0, 0));
        assert_eq!(g.count_occupied(), 2);
        g.set(1, 2, 3, false);
        assert_eq!(g.count_occupied(), 1);
    }

    #[test]
    fn fill_masks_tail_bits() {
        let mut g = grid((5, 5, 5)); // 125 bits: tail word partially used
        g.fill(true);
        assert_eq!(g.count_occupied(), 125);
        let other = {
            let mut o = grid((5, 5, 5));
            for i in 0..125 {
                o.set_linear(i, true);
            }
            o
        };
        assert_eq!(g, other);
    }

    #[test]
    fn rejects_zero_dims_and_nonpositive_spacing() {
        assert!(VoxelGrid::new((0, 1, 1), (1.0, 1.0, 1.0)).is_err());
        assert!(VoxelGrid::new((1, 1, 1), (0.0, 1.0, 1.0)).is_err());
        assert!(VoxelGrid::new((1, 1, 1), (1.0, -1.0, 1.0)).is_err());
    }

    #[test]
    fn dims_overflow_is_reported() {
        let err = VoxelGrid::new((usize::MAX, 2, 2), (1.0, 1.0, 1.0)).unwrap_err();
        assert!(matches!(err, Error::DimsOverflow { .. }));
    }

    #[test]
    fn subtract_identity_and_self() {
        let mut a = grid((3, 3, 3));
        a.fill(true);
        let empty = grid((3, 3, 3));

        // subtract(a, empty) == a
        assert_eq!(subtract(&a, &empty).unwrap(), a);
        // subtract(a, a) == empty
        assert_eq!(subtract(&a, &a).unwrap(), empty);
    }

    #[test]
    fn subtract_leaves_center_voxel() {
        // complete = 3^3 full, defective = full except center -> center only
        let mut complete = grid((3, 3, 3));
        complete.fill(true);
        let mut defective = complete.clone();
        defective.set(1, 1, 1, false);
        let implant = subtract(&complete, &defective).unwrap();
        assert_eq!(implant.count_occupied(), 1);
        assert!(implant.get(1, 1, 1));
    }

    #[test]
    fn subtract_rejects_dims_mismatch() {
        let a = grid((3, 3, 3));
        let b = grid((3, 3, 4));
        assert!(matches!(subtract(&a, &b), Err(Error::DimsMismatch { .. })));
    }

    #[test]
    fn pad_and_crop_roundtrip() {
        let mut g = grid((3, 4, 5));
        g.set(2, 3, 4, true);
        g.set(0, 0, 0, true);
        let padded = g.pad_to((8, 8, 8)).unwrap();
        assert_eq!(padded.count_occupied(), 2);
        assert!(padded.get(2, 3, 4));
        let back = padded.crop_to((3, 4, 5)).unwrap();
        assert_eq!(back, g);
    }

    #[test]
    fn block_extract_write_roundtrip() {
        let mut g = grid((6, 6, 6));
        g.set(2, 2, 2, true);
        g.set(3, 4, 5, true);
        let block = g.extract_block((2, 2, 2), (4, 4, 4)).unwrap();
        assert!(block.get(0, 0, 0));
        assert!(block.get(1, 2, 3));
        let mut h = grid((6, 6, 6));
        h.write_block((2, 2, 2), &block).unwrap();
        assert_eq!(h, g);
    }
}
