//! Exact-NNS comparison baseline: PCA projection of neighborhood bit vectors
//! to a low-dimensional float space and a kd-tree over the projections.
//!
//! Unlike the hash path there is no fallback branch — exact nearest-neighbor
//! search always returns a point. Exactness holds within the projected
//! space: PCA to d < width discards variance, so projected neighbors are not
//! guaranteed to be Hamming-nearest.

use rayon::prelude::*;

use crate::encode::{active_voxels, hamming, BitKey, Coord, NbhdSize};
use crate::error::{Error, Result};
use crate::grid::VoxelGrid;
use crate::resample::{upsample_interp, InterpOrder, Pyramid};
use crate::synth::{IndexStats, SynthesisConfig, SynthesisRun};

/// PCA model over `width`-bit binary feature vectors.
#[derive(Debug, Clone)]
pub struct PcaModel {
    mean: Vec<f64>,
    /// column-major width x d, columns orthonormal
    basis: Vec<f64>,
    width: usize,
    d: usize,
}

impl PcaModel {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn basis_column(&self, c: usize) -> &[f64] {
        &self.basis[c * self.width..(c + 1) * self.width]
    }
}

/// Cyclic Jacobi eigen-decomposition of a symmetric matrix (row-major n x n).
/// Returns (eigenvalues, eigenvectors column-major). Deterministic: fixed
/// sweep order, fixed convergence threshold.
fn jacobi_eigen(mut a: Vec<f64>, n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut v = vec![0.0f64; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    let scale: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-300);
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|p| ((p + 1)..n).map(move |q| (p, q)))
            .map(|(p, q)| a[p * n + q] * a[p * n + q])
            .sum();
        if off.sqrt() <= 1e-13 * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                if apq.abs() <= 1e-300 {
                    continue;
                }
                let theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                let t = if theta >= 0.0 {
                    1.0 / (theta + (theta * theta + 1.0).sqrt())
                } else {
                    -1.0 / (-theta + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                // A <- G^T A G on rows/columns p and q
                for i in 0..n {
                    let aip = a[i * n + p];
                    let aiq = a[i * n + q];
                    a[i * n + p] = c * aip - s * aiq;
                    a[i * n + q] = s * aip + c * aiq;
                }
                for i in 0..n {
                    let api = a[p * n + i];
                    let aqi = a[q * n + i];
                    a[p * n + i] = c * api - s * aqi;
                    a[q * n + i] = s * api + c * aqi;
                }
                for i in 0..n {
                    let vip = v[i * n + p];
                    let viq = v[i * n + q];
                    v[i * n + p] = c * vip - s * viq;
                    v[i * n + q] = s * vip + c * viq;
                }
            }
        }
    }
    let eigvals: Vec<f64> = (0..n).map(|i| a[i * n + i]).collect();
    (eigvals, v)
}

fn key_bit(key: &BitKey, j: usize) -> f64 {
    key.get(j) as u8 as f64
}

/// Fit PCA on n binary feature vectors. Requires `n >= d >= 1`; rejects a
/// zero-variance (all-identical) feature set. The basis spans the top-d
/// eigenvectors of the covariance, eigenvalues descending, each basis vector
/// signed so its largest-magnitude component is positive.
pub fn pca_fit(features: &[BitKey], d: usize) -> Result<PcaModel> {
    let n = features.len();
    if d < 1 {
        return Err(Error::validation("pca target dimension must be >= 1"));
    }
    if n < d {
        return Err(Error::validation(format!(
            "pca needs at least d={d} samples, got {n}"
        )));
    }
    let width = features[0].width();
    if d > width {
        return Err(Error::validation(format!(
            "pca target dimension {d} exceeds feature width {width}"
        )));
    }
    for f in features {
        if f.width() != width {
            return Err(Error::WidthMismatch {
                left: width,
                right: f.width(),
            });
        }
    }

    // second moments as exact integer co-occurrence counts
    let mut ones = vec![0u64; width];
    let mut co = vec![0u64; width * width];
    for f in features {
        let set: Vec<usize> = (0..width).filter(|&j| f.get(j)).collect();
        for (i, &j) in set.iter().enumerate() {
            ones[j] += 1;
            for &k in &set[i..] {
                co[j * width + k] += 1;
            }
        }
    }
    let nf = n as f64;
    let mean: Vec<f64> = ones.iter().map(|&c| c as f64 / nf).collect();
    let mut cov = vec![0.0f64; width * width];
    for j in 0..width {
        for k in j..width {
            let c = co[j * width + k] as f64 / nf - mean[j] * mean[k];
            cov[j * width + k] = c;
            cov[k * width + j] = c;
        }
    }
    if cov.iter().all(|&c| c == 0.0) {
        return Err(Error::validation(
            "zero variance: all feature vectors are identical",
        ));
    }

    let (eigvals, eigvecs) = jacobi_eigen(cov, width);
    let mut order: Vec<usize> = (0..width).collect();
    order.sort_by(|&i, &j| eigvals[j].partial_cmp(&eigvals[i]).unwrap().then(i.cmp(&j)));

    let mut basis = vec![0.0f64; width * d];
    for (c, &src) in order[..d].iter().enumerate() {
        let col = &mut basis[c * width..(c + 1) * width];
        for (j, slot) in col.iter_mut().enumerate() {
            *slot = eigvecs[j * width + src];
        }
        // deterministic sign: largest-magnitude component positive
        let mut arg = 0usize;
        for (j, &x) in col.iter().enumerate() {
            if x.abs() > col[arg].abs() {
                arg = j;
            }
        }
        if col[arg] < 0.0 {
            for x in col.iter_mut() {
                *x = -*x;
            }
        }
    }
    Ok(PcaModel {
        mean,
        basis,
        width,
        d,
    })
}

/// Project a key: `(bits - mean) . basis`. The result is no longer binary.
pub fn pca_project(model: &PcaModel, key: &BitKey) -> Result<Vec<f64>> {
    if key.width() != model.width {
        return Err(Error::WidthMismatch {
            left: key.width(),
            right: model.width,
        });
    }
    let mut out = vec![0.0f64; model.d];
    for (c, slot) in out.iter_mut().enumerate() {
        let col = model.basis_column(c);
        let mut acc = 0.0;
        for (j, (&m, &b)) in model.mean.iter().zip(col).enumerate() {
            acc += (key_bit(key, j) - m) * b;
        }
        *slot = acc;
    }
    Ok(out)
}

/// Reconstruct a feature vector from its projection: `mean + basis . proj`.
/// Exact (to rounding) when the training data has rank <= d.
pub fn pca_reconstruct(model: &PcaModel, projection: &[f64]) -> Result<Vec<f64>> {
    if projection.len() != model.d {
        return Err(Error::validation(format!(
            "projection has {} components, model expects {}",
            projection.len(),
            model.d
        )));
    }
    let mut out = model.mean.clone();
    for (c, &p) in projection.iter().enumerate() {
        let col = model.basis_column(c);
        for j in 0..model.width {
            out[j] += p * col[j];
        }
    }
    Ok(out)
}

const LEAF_SIZE: usize = 8;

enum KdNode {
    Split {
        dim: usize,
        value: f64,
        left: u32,
        right: u32,
    },
    Leaf {
        start: u32,
        end: u32,
    },
}

/// Exact nearest-neighbor tree over n x d float points. Query results equal
/// a brute-force scan, including the smallest-index tie-break.
pub struct KdTree {
    points: Vec<f64>,
    n: usize,
    d: usize,
    nodes: Vec<KdNode>,
    order: Vec<u32>,
    root: u32,
}

pub fn kdtree_build(points: Vec<Vec<f64>>) -> Result<KdTree> {
    let n = points.len();
    if n == 0 {
        return Err(Error::validation("kd-tree needs at least one point"));
    }
    let d = points[0].len();
    if d == 0 || d > 32 {
        return Err(Error::validation(format!(
            "kd-tree dimension must be 1..=32, got {d}"
        )));
    }
    let mut flat = Vec::with_capacity(n * d);
    for p in &points {
        if p.len() != d {
            return Err(Error::validation("kd-tree points must share one dimension"));
        }
        if p.iter().any(|x| !x.is_finite()) {
            return Err(Error::validation("kd-tree points must be finite"));
        }
        flat.extend_from_slice(p);
    }
    let mut tree = KdTree {
        points: flat,
        n,
        d,
        nodes: Vec::new(),
        order: (0..n as u32).collect(),
        root: 0,
    };
    tree.root = tree.build_range(0, n, 0);
    Ok(tree)
}

impl KdTree {
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    /// Bytes of the stored float feature matrix (n x d x 8).
    pub fn bytes_points(&self) -> u64 {
        (self.n * self.d * std::mem::size_of::<f64>()) as u64
    }

    #[inline]
    fn coord(&self, id: u32, dim: usize) -> f64 {
        self.points[id as usize * self.d + dim]
    }

    fn build_range(&mut self, start: usize, end: usize, depth: usize) -> u32 {
        if end - start <= LEAF_SIZE {
            self.nodes.push(KdNode::Leaf {
                start: start as u32,
                end: end as u32,
            });
            return (self.nodes.len() - 1) as u32;
        }
        let dim = depth % self.d;
        let slice = &mut self.order[start..end];
        slice.sort_unstable_by(|&a, &b| {
            self.points[a as usize * self.d + dim]
                .partial_cmp(&self.points[b as usize * self.d + dim])
                .unwrap()
                .then(a.cmp(&b))
        });
        let mid = (end - start) / 2;
        let value = self.coord(self.order[start + mid], dim);
        let node_id = self.nodes.len() as u32;
        self.nodes.push(KdNode::Leaf { start: 0, end: 0 }); // patched below
        let left = self.build_range(start, start + mid, depth + 1);
        let right = self.build_range(start + mid, end, depth + 1);
        self.nodes[node_id as usize] = KdNode::Split {
            dim,
            value,
            left,
            right,
        };
        node_id
    }

    #[inline]
    fn dist2(&self, id: u32, q: &[f64]) -> f64 {
        let base = id as usize * self.d;
        let mut acc = 0.0;
        for (k, &qk) in q.iter().enumerate() {
            let diff = qk - self.points[base + k];
            acc += diff * diff;
        }
        acc
    }

    fn search(&self, node: u32, q: &[f64], best: &mut (f64, u32)) {
        match self.nodes[node as usize] {
            KdNode::Leaf { start, end } => {
                for &id in &self.order[start as usize..end as usize] {
                    let d2 = self.dist2(id, q);
                    if d2 < best.0 || (d2 == best.0 && id < best.1) {
                        *best = (d2, id);
                    }
                }
            }
            KdNode::Split {
                dim,
                value,
                left,
                right,
            } => {
                let delta = q[dim] - value;
                let (near, far) = if delta < 0.0 {
                    (left, right)
                } else {
                    (right, left)
                };
                self.search(near, q, best);
                // the far side may still hold an equal-distance point with a
                // smaller index, so prune only on strict excess
                if delta * delta <= best.0 {
                    self.search(far, q, best);
                }
            }
        }
    }
}

/// Exact nearest point under Euclidean distance; ties broken by smallest
/// point index. Returns (index, distance).
pub fn kdtree_query(tree: &KdTree, q: &[f64]) -> Result<(usize, f64)> {
    if q.len() != tree.d {
        return Err(Error::validation(format!(
            "query has {} components, tree stores {}-d points",
            q.len(),
            tree.d
        )));
    }
    if q.iter().any(|x| !x.is_finite()) {
        return Err(Error::validation("query must be finite"));
    }
    let mut best = (f64::INFINITY, u32::MAX);
    tree.search(tree.root, q, &mut best);
    Ok((best.1 as usize, best.0.sqrt()))
}

/// Brute-force nearest stored point by (squared distance, index) — the
/// ground-truth oracle for `kdtree_query`.
pub fn linear_scan(points: &[Vec<f64>], q: &[f64]) -> Option<(usize, f64)> {
    let mut best: Option<(f64, usize)> = None;
    for (i, p) in points.iter().enumerate() {
        let mut acc = 0.0;
        for (k, &qk) in q.iter().enumerate() {
            let diff = qk - p[k];
            acc += diff * diff;
        }
        if best.is_none_or(|(bd, _)| acc < bd) {
            best = Some((acc, i));
        }
    }
    best.map(|(d2, i)| (i, d2.sqrt()))
}

/// Globally minimal Hamming distance over a key list; smallest index on
/// ties. The desk-scale ground truth that hash lookups are checked against.
pub fn linear_nns(template_keys: &[BitKey], query: &BitKey) -> Result<(usize, u32)> {
    if template_keys.is_empty() {
        return Err(Error::validation("linear_nns needs a non-empty key list"));
    }
    let mut best = (usize::MAX, u32::MAX);
    for (i, k) in template_keys.iter().enumerate() {
        let d = hamming(k, query)?;
        if d < best.1 {
            best = (i, d);
        }
    }
    Ok(best)
}

/// The kd-tree analogue of `HashIndex`: PCA model, tree over the projected
/// template active keys, and the coordinate of each stored point.
pub struct KdIndex {
    pub model: PcaModel,
    pub tree: KdTree,
    pub coords: Vec<Coord>,
}

impl KdIndex {
    pub fn bytes_features(&self) -> u64 {
        self.tree.bytes_points()
    }
}

/// Build the kd index from a template level's active voxels.
pub fn build_kd_index(template_level: &VoxelGrid, nbhd: NbhdSize, d: usize) -> Result<KdIndex> {
    let active = active_voxels(template_level, nbhd);
    if active.is_empty() {
        return Err(Error::validation(
            "kd index needs a non-empty template level",
        ));
    }
    let model = pca_fit(&active.keys, d)?;
    let points: Vec<Vec<f64>> = active
        .keys
        .iter()
        .map(|k| pca_project(&model, k))
        .collect::<Result<_>>()?;
    let tree = kdtree_build(points)?;
    Ok(KdIndex {
        model,
        tree,
        coords: active.coords,
    })
}

/// Same contract as `synthesize_level`, but matching is exact in projected
/// space and there is no fallback branch.
pub fn synthesize_level_kdtree(
    coarse_up: &VoxelGrid,
    template_level: &VoxelGrid,
    index: &KdIndex,
    cfg: &SynthesisConfig,
) -> Result<(VoxelGrid, IndexStats)> {
    coarse_up.check_same_dims(template_level)?;
    if index.model.width() != cfg.nbhd.width() {
        return Err(Error::WidthMismatch {
            left: cfg.nbhd.width(),
            right: index.model.width(),
        });
    }
    let threads = match cfg.parallel {
        crate::synth::ParallelMode::Serial => 1,
        crate::synth::ParallelMode::SharedIndex(p)
        | crate::synth::ParallelMode::PartitionedIndex(p) => p,
    };
    if threads == 0 {
        return Err(Error::validation("parallel worker count must be >= 1"));
    }

    let active = active_voxels(coarse_up, cfg.nbhd);
    let mut out = coarse_up.clone();

    let process = |coords: &[Coord], keys: &[BitKey]| -> Result<Vec<(u64, bool)>> {
        let mut writes = Vec::with_capacity(coords.len());
        for (&(x, y, z), key) in coords.iter().zip(keys) {
            let q = pca_project(&index.model, key)?;
            let (point_id, _) = kdtree_query(&index.tree, &q)?;
            let c = index.coords[point_id];
            let value = template_level.get(c.0 as usize, c.1 as usize, c.2 as usize);
            let linear = coarse_up.linear(x as usize, y as usize, z as usize) as u64;
            writes.push((linear, value));
        }
        Ok(writes)
    };

    let results: Vec<Result<Vec<(u64, bool)>>> = if threads == 1 {
        vec![process(&active.coords, &active.keys)]
    } else {
        let chunk = active.len().div_ceil(threads).max(1);
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| Error::validation(format!("thread pool: {e}")))?;
        pool.install(|| {
            active
                .coords
                .par_chunks(chunk)
                .zip(active.keys.par_chunks(chunk))
                .map(|(c, k)| process(c, k))
                .collect()
        })
    };

    let queries = active.len() as u64;
    for writes in results {
        for (linear, value) in writes? {
            out.set_linear(linear as usize, value);
        }
    }
    Ok((
        out,
        IndexStats {
            bytes_features: Some(index.bytes_features()),
            bytes_index: 0,
            d: Some(index.tree.dim()),
            fallbacks: 0,
            hits_actual: queries,
            hits_neighbor: 0,
            keys_actual: index.tree.len() as u64,
            keys_neighbor: 0,
            queries,
        },
    ))
}

/// Hierarchical synthesis with the kd-tree backend: the same
/// upsample-then-replace loop as the hash path, with a fresh kd index per
/// level.
pub fn synthesize_hierarchical_kdtree(
    coarse_l0: &VoxelGrid,
    template_full: &VoxelGrid,
    cfg: &SynthesisConfig,
    d: usize,
) -> Result<SynthesisRun> {
    if cfg.levels == 0 {
        return Err(Error::validation("levels must be >= 1"));
    }
    let (cx, cy, cz) = coarse_l0.dims();
    let m = 1usize << cfg.levels;
    let expect = (cx * m, cy * m, cz * m);
    if template_full.dims() != expect {
        return Err(Error::validation(format!(
            "dimension chain mismatch: coarse {:?} x 2^{} = {:?}, template is {:?}",
            coarse_l0.dims(),
            cfg.levels,
            expect,
            template_full.dims()
        )));
    }
    let pyramid = Pyramid::build(template_full, cfg.levels, cfg.pyramid_smooth)?;
    let mut result = coarse_l0.clone();
    let mut level_stats = Vec::new();
    for level in 1..=cfg.levels as usize {
        let up = upsample_interp(&result, 2, InterpOrder::Trilinear)?;
        let template_level = &pyramid.levels[level];
        let index = build_kd_index(template_level, cfg.nbhd, d)?;
        let (next, stats) = synthesize_level_kdtree(&up, template_level, &index, cfg)?;
        result = next;
        level_stats.push(stats);
    }
    Ok(SynthesisRun {
        output: result,
        level_stats,
    })
}
