//! Bit-string encoding of cubic voxel neighborhoods and Hamming-space
//! primitives.
//!
//! A voxel's size^3 neighborhood (center included, out-of-bounds cells read
//! as 0) packs into a 27- or 125-bit key. Bit `i` corresponds to offset
//! `(dx,dy,dz)` in `[-r,r]^3` via `i = (dz+r)(2r+1)^2 + (dy+r)(2r+1) + (dx+r)`
//! — x fastest, matching grid raster order — so the center occupies bit
//! `(width-1)/2`.

use crate::error::{Error, Result};
use crate::grid::VoxelGrid;
use crate::morph::dilate_cube;

/// Grid coordinate carried through active sets and index coordinate lists.
pub type Coord = (u32, u32, u32);

/// Neighborhood edge length; 3^3 = 27-bit keys or 5^3 = 125-bit keys.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NbhdSize {
    Three,
    Five,
}

impl NbhdSize {
    pub fn edge(self) -> usize {
        match self {
            NbhdSize::Three => 3,
            NbhdSize::Five => 5,
        }
    }

    pub fn radius(self) -> i64 {
        match self {
            NbhdSize::Three => 1,
            NbhdSize::Five => 2,
        }
    }

    pub fn width(self) -> usize {
        let e = self.edge();
        e * e * e
    }

    pub fn center_bit(self) -> usize {
        (self.width() - 1) / 2
    }
}

/// Fixed-width bit string; at most 128 bits, stored in two machine words.
/// Equality and hashing consider exactly the `width` payload bits (bits above
/// `width` are kept zero).
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct BitKey {
    words: [u64; 2],
    width: u16,
}

impl BitKey {
    pub fn zero(width: usize) -> BitKey {
        assert!((1..=128).contains(&width), "BitKey width must be 1..=128");
        BitKey {
            words: [0, 0],
            width: width as u16,
        }
    }

    pub fn width(&self) -> usize {
        self.width as usize
    }

    #[inline]
    pub fn get(&self, bit: usize) -> bool {
        debug_assert!(bit < self.width());
        (self.words[bit / 64] >> (bit % 64)) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, bit: usize, value: bool) {
        debug_assert!(bit < self.width());
        let mask = 1u64 << (bit % 64);
        if value {
            self.words[bit / 64] |= mask;
        } else {
            self.words[bit / 64] &= !mask;
        }
    }

    #[inline]
    pub fn flip(&mut self, bit: usize) {
        debug_assert!(bit < self.width());
        self.words[bit / 64] ^= 1u64 << (bit % 64);
    }

    pub fn popcount(&self) -> u32 {
        self.words[0].count_ones() + self.words[1].count_ones()
    }

    /// Flip every payload bit.
    pub fn complement(&self) -> BitKey {
        let mut out = *self;
        out.words[0] = !out.words[0];
        out.words[1] = !out.words[1];
        out.mask_payload();
        out
    }

    /// Bytes needed to store the payload bits in whole machine words.
    pub fn packed_bytes(&self) -> usize {
        self.width().div_ceil(64) * 8
    }

    fn mask_payload(&mut self) {
        let w = self.width();
        if w < 64 {
            self.words[0] &= (1u64 << w) - 1;
            self.words[1] = 0;
        } else if w < 128 {
            self.words[1] &= (1u64 << (w - 64)) - 1;
        }
    }
}

impl std::fmt::Debug for BitKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "BitKey<{}>(", self.width)?;
        for bit in (0..self.width()).rev() {
            write!(f, "{}", self.get(bit) as u8)?;
        }
        write!(f, ")")
    }
}

/// Popcount of XOR — the number of differing bits. Errors on width mismatch.
pub fn hamming(a: &BitKey, b: &BitKey) -> Result<u32> {
    if a.width != b.width {
        return Err(Error::WidthMismatch {
            left: a.width(),
            right: b.width(),
        });
    }
    Ok((a.words[0] ^ b.words[0]).count_ones() + (a.words[1] ^ b.words[1]).count_ones())
}

/// All keys at Hamming distance 1..=radius from `key` (the key itself is
/// excluded). Size is `sum_{d=1..radius} C(width, d)`, independent of `key`.
pub fn hamming_ball(key: &BitKey, radius: usize) -> Vec<BitKey> {
    let width = key.width();
    let radius = radius.min(width);
    let mut out = Vec::new();
    // enumerate bit-position combinations of each size d in lexicographic order
    for d in 1..=radius {
        let mut combo: Vec<usize> = (0..d).collect();
        loop {
            let mut k = *key;
            for &p in &combo {
                k.flip(p);
            }
            out.push(k);
            // rightmost position that can still advance
            let mut i = d as isize - 1;
            while i >= 0 && combo[i as usize] == width - d + i as usize {
                i -= 1;
            }
            if i < 0 {
                break;
            }
            let i = i as usize;
            combo[i] += 1;
            for j in i + 1..d {
                combo[j] = combo[j - 1] + 1;
            }
        }
    }
    out
}

/// Pack the size^3 neighborhood of `coord` into a key; out-of-bounds cells
/// read as 0. Errors if `coord` itself lies outside the grid.
pub fn encode_neighborhood(
    grid: &VoxelGrid,
    coord: (usize, usize, usize),
    size: NbhdSize,
) -> Result<BitKey> {
    let (nx, ny, nz) = grid.dims();
    let (x, y, z) = coord;
    if x >= nx || y >= ny || z >= nz {
        return Err(Error::CoordOutOfBounds {
            coord,
            dims: grid.dims(),
        });
    }
    Ok(encode_unchecked(grid, x, y, z, size))
}

#[inline]
pub(crate) fn encode_unchecked(
    grid: &VoxelGrid,
    x: usize,
    y: usize,
    z: usize,
    size: NbhdSize,
) -> BitKey {
    let r = size.radius();
    let mut key = BitKey::zero(size.width());
    let mut bit = 0usize;
    for dz in -r..=r {
        for dy in -r..=r {
            for dx in -r..=r {
                if grid.get_padded(x as i64 + dx, y as i64 + dy, z as i64 + dz) {
                    key.set(bit, true);
                }
                bit += 1;
            }
        }
    }
    key
}

/// Voxels whose neighborhood contains at least one occupied cell, with their
/// keys, in raster order (lexicographic by z, then y, then x).
#[derive(Debug, Clone)]
pub struct ActiveSet {
    pub coords: Vec<Coord>,
    pub keys: Vec<BitKey>,
}

impl ActiveSet {
    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (Coord, &BitKey)> + '_ {
        self.coords.iter().copied().zip(self.keys.iter())
    }
}

/// Compute the active set: exactly the coords whose size^3 neighborhood
/// popcount is >= 1. Equivalent to a cube dilation of the occupancy mask.
pub fn active_voxels(grid: &VoxelGrid, size: NbhdSize) -> ActiveSet {
    let dilated = dilate_cube(grid, size.radius() as usize);
    let n = dilated.count_occupied() as usize;
    let mut coords = Vec::with_capacity(n);
    let mut keys = Vec::with_capacity(n);
    for (x, y, z) in dilated.occupied_coords() {
        coords.push((x as u32, y as u32, z as u32));
        keys.push(encode_unchecked(grid, x, y, z, size));
    }
    ActiveSet { coords, keys }
}
