//! Segmentation evaluation: Dice similarity coefficient and Hausdorff
//! distance over occupied-voxel point sets.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::VoxelGrid;

/// Dice similarity coefficient `2|A∩B| / (|A|+|B|)`; 1.0 when both empty.
pub fn dsc(a: &VoxelGrid, b: &VoxelGrid) -> Result<f64> {
    a.check_same_dims(b)?;
    let inter: u64 = a
        .words()
        .iter()
        .zip(b.words())
        .map(|(x, y)| (x & y).count_ones() as u64)
        .sum();
    let total = a.count_occupied() + b.count_occupied();
    if total == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * inter as f64 / total as f64)
}

/// Exact 1D lower-envelope distance transform (Felzenszwalb-Huttenlocher)
/// over samples at positions `i * step`. `f` holds source costs (+inf where
/// no feature reaches); `d` receives `min_p (x_q - x_p)^2 + f[p]`.
fn edt_1d(f: &[f64], d: &mut [f64], step: f64, v: &mut Vec<usize>, zb: &mut Vec<f64>) {
    let len = f.len();
    v.clear();
    v.resize(len, 0);
    zb.clear();
    zb.resize(len + 1, 0.0);

    let mut k: isize = -1; // top of the envelope stack; -1 = no sites yet
    for q in 0..len {
        if f[q].is_infinite() {
            continue;
        }
        let xq = q as f64 * step;
        loop {
            if k < 0 {
                k = 0;
                v[0] = q;
                zb[0] = f64::NEG_INFINITY;
                zb[1] = f64::INFINITY;
                break;
            }
            let p = v[k as usize];
            let xp = p as f64 * step;
            let s = ((f[q] + xq * xq) - (f[p] + xp * xp)) / (2.0 * xq - 2.0 * xp);
            if s <= zb[k as usize] {
                k -= 1;
                continue;
            }
            k += 1;
            v[k as usize] = q;
            zb[k as usize] = s;
            zb[k as usize + 1] = f64::INFINITY;
            break;
        }
    }

    if k < 0 {
        d.fill(f64::INFINITY);
        return;
    }
    let mut j = 0usize;
    for (q, dq) in d.iter_mut().enumerate() {
        let xq = q as f64 * step;
        while zb[j + 1] < xq {
            j += 1;
        }
        let p = v[j];
        let xp = p as f64 * step;
        *dq = (xq - xp) * (xq - xp) + f[p];
    }
}

/// Exact squared Euclidean distance transform, anisotropic via per-axis
/// spacing. Output: squared distance in mm^2 to the nearest occupied voxel
/// (+inf if the grid is empty).
fn edt_sq(grid: &VoxelGrid) -> Vec<f64> {
    let (nx, ny, nz) = grid.dims();
    let (sx, sy, sz) = grid.spacing();
    let n = grid.len();
    let mut dist = vec![f64::INFINITY; n];
    for (i, slot) in dist.iter_mut().enumerate() {
        if grid.get_linear(i) {
            *slot = 0.0;
        }
    }

    let mut f = Vec::new();
    let mut d = Vec::new();
    let mut v = Vec::new();
    let mut zb = Vec::new();

    // x-lines: one per (y, z)
    for z in 0..nz {
        for y in 0..ny {
            let base = nx * (y + ny * z);
            f.clear();
            f.extend((0..nx).map(|x| dist[base + x]));
            d.resize(nx, 0.0);
            edt_1d(&f, &mut d, sx, &mut v, &mut zb);
            dist[base..base + nx].copy_from_slice(&d);
        }
    }
    // y-lines: one per (x, z)
    for z in 0..nz {
        for x in 0..nx {
            let base = x + nx * ny * z;
            f.clear();
            f.extend((0..ny).map(|y| dist[base + y * nx]));
            d.resize(ny, 0.0);
            edt_1d(&f, &mut d, sy, &mut v, &mut zb);
            for y in 0..ny {
                dist[base + y * nx] = d[y];
            }
        }
    }
    // z-lines: one per (x, y)
    for y in 0..ny {
        for x in 0..nx {
            let base = x + nx * y;
            f.clear();
            f.extend((0..nz).map(|z| dist[base + z * nx * ny]));
            d.resize(nz, 0.0);
            edt_1d(&f, &mut d, sz, &mut v, &mut zb);
            for z in 0..nz {
                dist[base + z * nx * ny] = d[z];
            }
        }
    }
    dist
}

/// Symmetric Hausdorff distance in mm between occupied-voxel point sets,
/// computed from exact distance transforms. `percentile` is in (0, 100];
/// 100 gives the classical max, 95 the HD95 variant (nearest-rank over the
/// union of both directed distance sets).
pub fn hausdorff(a: &VoxelGrid, b: &VoxelGrid, percentile: f64) -> Result<f64> {
    a.check_same_dims(b)?;
    if a.spacing() != b.spacing() {
        return Err(Error::SpacingMismatch {
            left: a.spacing(),
            right: b.spacing(),
        });
    }
    if !(0.0 < percentile && percentile <= 100.0) {
        return Err(Error::validation(format!(
            "percentile must be in (0, 100], got {percentile}"
        )));
    }
    if a.is_empty() || b.is_empty() {
        return Err(Error::validation(
            "hausdorff distance is undefined for empty masks",
        ));
    }

    let dt_a = edt_sq(a);
    let dt_b = edt_sq(b);
    let mut dists = Vec::new();
    for i in 0..a.len() {
        if a.get_linear(i) {
            dists.push(dt_b[i]);
        }
        if b.get_linear(i) {
            dists.push(dt_a[i]);
        }
    }
    if percentile == 100.0 {
        let max = dists.iter().cloned().fold(0.0f64, f64::max);
        return Ok(max.sqrt());
    }
    dists.sort_unstable_by(|x, y| x.partial_cmp(y).expect("squared distances are finite"));
    let rank = ((percentile / 100.0) * dists.len() as f64).ceil() as usize;
    Ok(dists[rank.clamp(1, dists.len()) - 1].sqrt())
}

/// Stage timings and quality measures of one pipeline run.
///
/// `stable_json` serializes everything except the stage runtimes with sorted
/// keys, so reports diff cleanly across runs with a fixed seed; runtimes are
/// serialized separately by `timings_json`.
#[derive(Debug, Clone, Default, Serialize)]
pub struct MetricReport {
    pub backend: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bytes_features: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bytes_index: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dsc: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hd95_mm: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hd_mm: Option<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub hit_rate: Vec<f64>,
    pub seed: u64,
    #[serde(skip_serializing)]
    pub runtime_s: BTreeMap<String, f64>,
}

impl MetricReport {
    /// Deterministic report body (runtimes excluded), one key per line.
    pub fn stable_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization cannot fail")
    }

    /// Stage-name -> seconds, for the separate timings file.
    pub fn timings_json(&self) -> String {
        serde_json::to_string_pretty(&self.runtime_s).expect("timings serialization cannot fail")
    }
}
