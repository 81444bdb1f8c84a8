//! Resolution changes: pyramid downsampling, interpolating upsampling, and
//! power-of-two padding.
//!
//! All operations return strictly binary grids: smoothed or interpolated
//! values are thresholded at 0.5, with exact ties mapping to occupied.

use crate::error::{Error, Result};
use crate::grid::VoxelGrid;

/// Smoothing filter applied before 2x decimation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SmoothMode {
    /// Separable 3-tap Gaussian evaluated at even sample points, kernel
    /// renormalized at borders so constant fields stay constant.
    Gaussian { sigma: f64 },
    /// Plain 2x2x2 block mean.
    Mean,
}

impl SmoothMode {
    pub fn gaussian() -> Self {
        SmoothMode::Gaussian { sigma: 0.8 }
    }
}

impl Default for SmoothMode {
    fn default() -> Self {
        SmoothMode::gaussian()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InterpOrder {
    Nearest,
    Trilinear,
    CubicSpline,
}

/// Halve every dimension. All dims must be even; spacing doubles.
pub fn downsample2x(grid: &VoxelGrid, smooth: SmoothMode) -> Result<VoxelGrid> {
    let (nx, ny, nz) = grid.dims();
    for (axis, n) in [('x', nx), ('y', ny), ('z', nz)] {
        if n % 2 != 0 {
            return Err(Error::OddDimension { axis, value: n });
        }
    }
    let (sx, sy, sz) = grid.spacing();
    let out_dims = (nx / 2, ny / 2, nz / 2);
    let mut out = VoxelGrid::new(out_dims, (sx * 2.0, sy * 2.0, sz * 2.0))?;

    match smooth {
        SmoothMode::Mean => {
            for oz in 0..out_dims.2 {
                for oy in 0..out_dims.1 {
                    for ox in 0..out_dims.0 {
                        let mut count = 0u32;
                        for dz in 0..2 {
                            for dy in 0..2 {
                                for dx in 0..2 {
                                    count += grid.get(2 * ox + dx, 2 * oy + dy, 2 * oz + dz) as u32;
                                }
                            }
                        }
                        // mean >= 0.5 <=> at least 4 of 8 occupied; ties to 1
                        if count >= 4 {
                            out.set(ox, oy, oz, true);
                        }
                    }
                }
            }
        }
        SmoothMode::Gaussian { sigma } => {
            if sigma.is_nan() || sigma <= 0.0 {
                return Err(Error::validation(format!("sigma must be > 0, got {sigma}")));
            }
            // 4 taps per axis at offsets +-0.5 and +-1.5 around the block
            // center, so decimation stays phase-aligned with block pooling
            let w_near = (-0.125 / (sigma * sigma)).exp();
            let w_far = (-1.125 / (sigma * sigma)).exp();
            let kernel = [w_far, w_near, w_near, w_far];
            for oz in 0..out_dims.2 {
                for oy in 0..out_dims.1 {
                    for ox in 0..out_dims.0 {
                        // fine-grid indices 2o-1 .. 2o+2 per axis
                        let (cx, cy, cz) =
                            (2 * ox as i64 - 1, 2 * oy as i64 - 1, 2 * oz as i64 - 1);
                        let mut num = 0.0;
                        let mut den = 0.0;
                        for dz in 0..4i64 {
                            let z = cz + dz;
                            if z < 0 || z >= nz as i64 {
                                continue;
                            }
                            for dy in 0..4i64 {
                                let y = cy + dy;
                                if y < 0 || y >= ny as i64 {
                                    continue;
                                }
                                for dx in 0..4i64 {
                                    let x = cx + dx;
                                    if x < 0 || x >= nx as i64 {
                                        continue;
                                    }
                                    let w = kernel[dx as usize]
                                        * kernel[dy as usize]
                                        * kernel[dz as usize];
                                    den += w;
                                    if grid.get(x as usize, y as usize, z as usize) {
                                        num += w;
                                    }
                                }
                            }
                        }
                        if num / den >= 0.5 {
                            out.set(ox, oy, oz, true);
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Per-output-sample interpolation taps along one axis.
struct AxisTaps {
    // flattened (index, weight) runs, `stride` entries per output sample
    taps: Vec<(usize, f64)>,
    stride: usize,
}

impl AxisTaps {
    fn build(n_in: usize, factor: usize, order: InterpOrder) -> AxisTaps {
        let stride = match order {
            InterpOrder::Nearest => 1,
            InterpOrder::Trilinear => 2,
            InterpOrder::CubicSpline => 4,
        };
        let n_out = n_in * factor;
        let mut taps = Vec::with_capacity(n_out * stride);
        for xo in 0..n_out {
            // center-aligned source coordinate, the same convention as the
            // pyramid's block-centered decimation
            let u = (xo as f64 + 0.5) / factor as f64 - 0.5;
            let i = u.floor();
            let t = u - i;
            let i = i as i64;
            let clamp = |j: i64| -> usize { j.clamp(0, n_in as i64 - 1) as usize };
            match order {
                InterpOrder::Nearest => {
                    taps.push((xo / factor, 1.0));
                }
                InterpOrder::Trilinear => {
                    taps.push((clamp(i), 1.0 - t));
                    taps.push((clamp(i + 1), t));
                }
                InterpOrder::CubicSpline => {
                    // Catmull-Rom weights at offsets -1..2
                    let t2 = t * t;
                    let t3 = t2 * t;
                    let w = [
                        -0.5 * t3 + t2 - 0.5 * t,
                        1.5 * t3 - 2.5 * t2 + 1.0,
                        -1.5 * t3 + 2.0 * t2 + 0.5 * t,
                        0.5 * t3 - 0.5 * t2,
                    ];
                    for (k, &wk) in w.iter().enumerate() {
                        taps.push((clamp(i - 1 + k as i64), wk));
                    }
                }
            }
        }
        AxisTaps { taps, stride }
    }

    #[inline]
    fn of(&self, out_index: usize) -> &[(usize, f64)] {
        &self.taps[out_index * self.stride..(out_index + 1) * self.stride]
    }
}

/// Multiply every dimension by `factor` (a power of two), interpolating the
/// binary field and re-thresholding at 0.5. Spacing divides by `factor`.
pub fn upsample_interp(grid: &VoxelGrid, factor: usize, order: InterpOrder) -> Result<VoxelGrid> {
    if factor < 2 || !factor.is_power_of_two() {
        return Err(Error::validation(format!(
            "upsample factor must be a power of two >= 2, got {factor}"
        )));
    }
    let (nx, ny, nz) = grid.dims();
    let (sx, sy, sz) = grid.spacing();
    let f = factor as f64;
    let out_dims = (nx * factor, ny * factor, nz * factor);
    let mut out = VoxelGrid::new(out_dims, (sx / f, sy / f, sz / f))?;

    if order == InterpOrder::Nearest {
        for z in 0..out_dims.2 {
            for y in 0..out_dims.1 {
                for x in 0..out_dims.0 {
                    if grid.get(x / factor, y / factor, z / factor) {
                        out.set(x, y, z, true);
                    }
                }
            }
        }
        return Ok(out);
    }

    let tx = AxisTaps::build(nx, factor, order);
    let ty = AxisTaps::build(ny, factor, order);
    let tz = AxisTaps::build(nz, factor, order);

    // Stream output z-slices, caching xy-upsampled source planes. The sweep
    // is monotone in z so at most `stride` planes are live at a time.
    let plane_len = out_dims.0 * out_dims.1;
    let mut plane_cache: Vec<(usize, Vec<f64>)> = Vec::new();
    let mut rows = vec![0.0f64; out_dims.0 * ny]; // x-upsampled source rows
    let mut acc = vec![0.0f64; plane_len];

    for zo in 0..out_dims.2 {
        let z_taps = tz.of(zo);
        for &(sz_idx, _) in z_taps {
            if plane_cache.iter().any(|(k, _)| *k == sz_idx) {
                continue;
            }
            // upsample source plane sz_idx along x then y
            for y in 0..ny {
                for xo in 0..out_dims.0 {
                    let mut v = 0.0;
                    for &(sx_idx, w) in tx.of(xo) {
                        if grid.get(sx_idx, y, sz_idx) {
                            v += w;
                        }
                    }
                    rows[y * out_dims.0 + xo] = v;
                }
            }
            let mut plane = vec![0.0f64; plane_len];
            for yo in 0..out_dims.1 {
                let dst_range = yo * out_dims.0..(yo + 1) * out_dims.0;
                for &(sy_idx, w) in ty.of(yo) {
                    let src = &rows[sy_idx * out_dims.0..(sy_idx + 1) * out_dims.0];
                    for (d, s) in plane[dst_range.clone()].iter_mut().zip(src) {
                        *d += w * s;
                    }
                }
            }
            plane_cache.push((sz_idx, plane));
        }
        // evict planes no longer reachable (z taps are monotone in zo)
        let min_needed = z_taps.iter().map(|&(i, _)| i).min().unwrap();
        plane_cache.retain(|(k, _)| *k >= min_needed);

        acc.iter_mut().for_each(|v| *v = 0.0);
        for &(sz_idx, w) in z_taps {
            let plane = &plane_cache.iter().find(|(k, _)| *k == sz_idx).unwrap().1;
            for (a, p) in acc.iter_mut().zip(plane.iter()) {
                *a += w * p;
            }
        }
        let base = zo * plane_len;
        for (i, &v) in acc.iter().enumerate() {
            if v >= 0.5 {
                out.set_linear(base + i, true);
            }
        }
    }
    Ok(out)
}

/// Zero-pad each dimension up to the next multiple of `2^levels` (at the high
/// end), returning the padded grid and the original dims for later cropping.
pub fn pad_to_pow2(grid: &VoxelGrid, levels: u32) -> Result<(VoxelGrid, (usize, usize, usize))> {
    if levels == 0 {
        return Err(Error::validation("levels must be >= 1"));
    }
    let m = 1usize << levels;
    let (nx, ny, nz) = grid.dims();
    let round_up = |n: usize| n.div_ceil(m) * m;
    let target = (round_up(nx), round_up(ny), round_up(nz));
    if target == grid.dims() {
        return Ok((grid.clone(), grid.dims()));
    }
    Ok((grid.pad_to(target)?, grid.dims()))
}

/// Template pyramid: `levels + 1` grids from coarsest (index 0) to finest
/// (index `levels`, the input itself). Every dim of `full` must be divisible
/// by `2^levels`.
pub struct Pyramid {
    pub levels: Vec<VoxelGrid>,
}

impl Pyramid {
    pub fn build(full: &VoxelGrid, levels: u32, smooth: SmoothMode) -> Result<Pyramid> {
        let m = 1usize << levels;
        let (nx, ny, nz) = full.dims();
        if nx % m != 0 || ny % m != 0 || nz % m != 0 {
            return Err(Error::validation(format!(
                "dims {:?} not divisible by 2^{levels}; pad_to_pow2 first",
                full.dims()
            )));
        }
        let mut stack = vec![full.clone()];
        for _ in 0..levels {
            let next = downsample2x(stack.last().unwrap(), smooth)?;
            stack.push(next);
        }
        stack.reverse();
        Ok(Pyramid { levels: stack })
    }

    pub fn num_levels(&self) -> usize {
        self.levels.len() - 1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(dims: (usize, usize, usize)) -> VoxelGrid {
        VoxelGrid::new(dims, (1.0, 1.0, 1.0)).unwrap()
    }

    #[test]
    fn downsample_empty_and_full() {
        for smooth in [SmoothMode::Mean, SmoothMode::gaussian()] {
            let empty = grid((8, 8, 8));
            let down = downsample2x(&empty, smooth).unwrap();
            assert_eq!(down.dims(), (4, 4, 4));
            assert_eq!(down.count_occupied(), 0);

            let mut full = grid((8, 8, 8));
            full.fill(true);
            let down = downsample2x(&full, smooth).unwrap();
            assert_eq!(down.count_occupied(), 64, "{smooth:?}");
            assert_eq!(down.spacing(), (2.0, 2.0, 2.0));
        }
    }

    #[test]
    fn downsample_mean_single_block() {
        // one occupied 2x2x2 block aligned to even coordinates -> exactly one
        // output voxel
        let mut g = grid((8, 8, 8));
        for dz in 0..2 {
            for dy in 0..2 {
                for dx in 0..2 {
                    g.set(2 + dx, 4 + dy, 6 + dz, true);
                }
            }
        }
        let down = downsample2x(&g, SmoothMode::Mean).unwrap();
        assert_eq!(down.count_occupied(), 1);
        assert!(down.get(1, 2, 3));
    }

    #[test]
    fn downsample_rejects_odd_dims() {
        let g = grid((7, 8, 8));
        assert!(matches!(
            downsample2x(&g, SmoothMode::Mean),
            Err(Error::OddDimension { axis: 'x', .. })
        ));
    }

    #[test]
    fn downsample_mean_block_support_property() {
        // every output-occupied voxel's 2x2x2 source block holds >= 4 voxels
        let mut g = grid((16, 16, 16));
        let mut state = 0x12345678u64;
        for i in 0..g.len() {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1);
            if state >> 62 == 3 {
                g.set_linear(i, true);
            }
        }
        let down = downsample2x(&g, SmoothMode::Mean).unwrap();
        for (ox, oy, oz) in down.occupied_coords() {
            let mut count = 0;
            for dz in 0..2 {
                for dy in 0..2 {
                    for dx in 0..2 {
                        count += g.get(2 * ox + dx, 2 * oy + dy, 2 * oz + dz) as u32;
                    }
                }
            }
            assert!(count >= 4);
        }
    }

    #[test]
    fn upsample_empty_and_full() {
        for order in [
            InterpOrder::Nearest,
            InterpOrder::Trilinear,
            InterpOrder::CubicSpline,
        ] {
            let empty = grid((4, 4, 4));
            let up = upsample_interp(&empty, 2, order).unwrap();
            assert_eq!(up.dims(), (8, 8, 8));
            assert_eq!(up.count_occupied(), 0);

            let mut full = grid((4, 4, 4));
            full.fill(true);
            let up = upsample_interp(&full, 2, order).unwrap();
            assert_eq!(up.count_occupied(), 8 * 8 * 8, "{order:?}");
            assert_eq!(up.spacing(), (0.5, 0.5, 0.5));
        }
    }

    #[test]
    fn upsample_nearest_replicates_blocks() {
        let mut g = grid((4, 4, 4));
        g.set(1, 1, 1, true);
        let up = upsample_interp(&g, 2, InterpOrder::Nearest).unwrap();
        assert_eq!(up.count_occupied(), 8);
        for z in 2..4 {
            for y in 2..4 {
                for x in 2..4 {
                    assert!(up.get(x, y, z));
                }
            }
        }
    }

    #[test]
    fn upsample_rejects_bad_factor() {
        let g = grid((4, 4, 4));
        assert!(upsample_interp(&g, 1, InterpOrder::Nearest).is_err());
        assert!(upsample_interp(&g, 3, InterpOrder::Nearest).is_err());
    }

    #[test]
    fn upsample_factor4_matches_dims_and_stays_binary() {
        let mut g = grid((4, 4, 4));
        g.set(2, 2, 2, true);
        g.set(1, 2, 2, true);
        for order in [InterpOrder::Trilinear, InterpOrder::CubicSpline] {
            let up = upsample_interp(&g, 4, order).unwrap();
            assert_eq!(up.dims(), (16, 16, 16));
            assert!(up.count_occupied() > 0);
        }
    }

    #[test]
    fn pad_to_pow2_examples() {
        // 200 is already a multiple of 4 -> no-op
        let g = grid((512, 512, 200));
        let (p, orig) = pad_to_pow2(&g, 2).unwrap();
        assert_eq!(p.dims(), (512, 512, 200));
        assert_eq!(orig, (512, 512, 200));

        // 199 rounds up to 200
        let g = grid((512, 512, 199));
        let (p, orig) = pad_to_pow2(&g, 2).unwrap();
        assert_eq!(p.dims(), (512, 512, 200));
        assert_eq!(orig, (512, 512, 199));

        // exact multiples return an identical grid
        let mut g = grid((8, 16, 32));
        g.set(3, 3, 3, true);
        let (p, _) = pad_to_pow2(&g, 3).unwrap();
        assert_eq!(p, g);
    }

    #[test]
    fn pyramid_builds_doubling_chain() {
        let mut g = grid((16, 16, 16));
        g.fill(true);
        let pyr = Pyramid::build(&g, 2, SmoothMode::Mean).unwrap();
        assert_eq!(pyr.levels.len(), 3);
        assert_eq!(pyr.levels[0].dims(), (4, 4, 4));
        assert_eq!(pyr.levels[1].dims(), (8, 8, 8));
        assert_eq!(pyr.levels[2].dims(), (16, 16, 16));
        assert!(Pyramid::build(&grid((10, 16, 16)), 2, SmoothMode::Mean).is_err());
    }
}
