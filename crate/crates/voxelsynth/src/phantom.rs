//! Deterministic test phantoms: spherical shells, staircases, and cubes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grid::VoxelGrid;

#[derive(Debug, Clone, PartialEq)]
pub enum PhantomSpec {
    /// Voxels whose Euclidean index-space distance to the volume center lies
    /// in `[r_in, r_out]`. `perturb_rate` flips that fraction of two-sided
    /// surface voxels with a seeded RNG.
    SphereShell {
        r_in: f64,
        r_out: f64,
        perturb_rate: f64,
    },
    /// Height profile along x extruded over y: voxel (x, y, z) occupied when
    /// `z <= f(x)`. Monotone (`f = base + step*x`) or alternating between
    /// `base + step` (even x) and `base` (odd x).
    Staircase {
        base: usize,
        step: usize,
        alternating: bool,
    },
    /// Axis-aligned solid cube of the given side, centered.
    Cube { side: usize },
}

pub fn make_phantom(
    spec: &PhantomSpec,
    dims: (usize, usize, usize),
    spacing: (f64, f64, f64),
    seed: u64,
) -> Result<VoxelGrid> {
    let mut grid = VoxelGrid::new(dims, spacing)?;
    let (nx, ny, nz) = dims;
    match *spec {
        PhantomSpec::SphereShell {
            r_in,
            r_out,
            perturb_rate,
        } => {
            if !(0.0 <= r_in && r_in <= r_out) {
                return Err(Error::validation(format!(
                    "need 0 <= r_in <= r_out, got r_in={r_in}, r_out={r_out}"
                )));
            }
            let min_dim = nx.min(ny).min(nz) as f64;
            if 2.0 * r_out + 1.0 > min_dim {
                return Err(Error::validation(format!(
                    "shell radius {r_out} exceeds dims {dims:?}"
                )));
            }
            if !(0.0..=1.0).contains(&perturb_rate) {
                return Err(Error::validation(format!(
                    "perturb_rate must be in [0,1], got {perturb_rate}"
                )));
            }
            let c = (
                (nx as f64 - 1.0) / 2.0,
                (ny as f64 - 1.0) / 2.0,
                (nz as f64 - 1.0) / 2.0,
            );
            for z in 0..nz {
                for y in 0..ny {
                    for x in 0..nx {
                        let d = ((x as f64 - c.0).powi(2)
                            + (y as f64 - c.1).powi(2)
                            + (z as f64 - c.2).powi(2))
                        .sqrt();
                        if d >= r_in && d <= r_out {
                            grid.set(x, y, z, true);
                        }
                    }
                }
            }
            if perturb_rate > 0.0 {
                perturb_surface(&mut grid, perturb_rate, seed);
            }
        }
        PhantomSpec::Staircase {
            base,
            step,
            alternating,
        } => {
            let height = |x: usize| -> usize {
                if alternating {
                    base + step * ((x + 1) % 2)
                } else {
                    base + step * x
                }
            };
            let max_h = (0..nx).map(height).max().unwrap();
            if max_h >= nz {
                return Err(Error::validation(format!(
                    "staircase height {max_h} exceeds nz={nz}"
                )));
            }
            for x in 0..nx {
                let h = height(x);
                for y in 0..ny {
                    for z in 0..=h {
                        grid.set(x, y, z, true);
                    }
                }
            }
        }
        PhantomSpec::Cube { side } => {
            if side > nx.min(ny).min(nz) {
                return Err(Error::validation(format!(
                    "cube side {side} exceeds dims {dims:?}"
                )));
            }
            let corner = ((nx - side) / 2, (ny - side) / 2, (nz - side) / 2);
            for z in corner.2..corner.2 + side {
                for y in corner.1..corner.1 + side {
                    for x in corner.0..corner.0 + side {
                        grid.set(x, y, z, true);
                    }
                }
            }
        }
    }
    Ok(grid)
}

/// Flip two-sided surface voxels (cells with at least one differing
/// 6-neighbor, counting out-of-bounds as background for occupied cells) with
/// probability `rate`, in raster order with a seeded RNG.
fn perturb_surface(grid: &mut VoxelGrid, rate: f64, seed: u64) {
    let (nx, ny, nz) = grid.dims();
    let mut candidates = Vec::new();
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let v = grid.get(x, y, z);
                let mut boundary = false;
                for (dx, dy, dz) in [
                    (-1i64, 0i64, 0i64),
                    (1, 0, 0),
                    (0, -1, 0),
                    (0, 1, 0),
                    (0, 0, -1),
                    (0, 0, 1),
                ] {
                    let n = grid.get_padded(x as i64 + dx, y as i64 + dy, z as i64 + dz);
                    if n != v {
                        boundary = true;
                        break;
                    }
                }
                // only cells in the surface band of the object, not the empty
                // far field (an empty voxel qualifies via an occupied neighbor,
                // an occupied voxel via an empty or out-of-bounds neighbor)
                if boundary && (v || has_occupied_6_neighbor(grid, x, y, z)) {
                    candidates.push((x, y, z));
                }
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for (x, y, z) in candidates {
        if rng.gen_bool(rate) {
            let v = grid.get(x, y, z);
            grid.set(x, y, z, !v);
        }
    }
}

fn has_occupied_6_neighbor(grid: &VoxelGrid, x: usize, y: usize, z: usize) -> bool {
    [
        (-1i64, 0i64, 0i64),
        (1, 0, 0),
        (0, -1, 0),
        (0, 1, 0),
        (0, 0, -1),
        (0, 0, 1),
    ]
    .iter()
    .any(|&(dx, dy, dz)| grid.get_padded(x as i64 + dx, y as i64 + dy, z as i64 + dz))
}
