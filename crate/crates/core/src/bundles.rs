//! Automated endmember bundle extraction: random subsets, VCA on each, and
//! spectral-angle k-means over the pooled signatures.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{HsiError, Result};
use crate::model::{EndmemberDictionary, GroupStructure, SpectralImage};

const KMEANS_RESTARTS: usize = 20;
const KMEANS_MAX_ITER: usize = 200;

#[derive(Debug, Clone, PartialEq)]
pub struct BundleExtractionConfig {
    /// Number of random subsets (VCA runs).
    pub subsets: usize,
    /// Fraction of the pixels drawn into each subset.
    pub fraction: f64,
    /// Endmembers extracted per run, which is also the number of bundles.
    pub endmembers: usize,
    pub seed: u64,
}

impl BundleExtractionConfig {
    pub fn new(endmembers: usize) -> Self {
        Self {
            subsets: 10,
            fraction: 0.10,
            endmembers,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.subsets == 0 {
            return Err(HsiError::invalid("subsets", "must be at least 1"));
        }
        if !(self.fraction > 0.0 && self.fraction <= 1.0) {
            return Err(HsiError::invalid(
                "fraction",
                format!("{} is outside (0, 1]", self.fraction),
            ));
        }
        if self.endmembers == 0 {
            return Err(HsiError::invalid("endmembers", "must be at least 1"));
        }
        Ok(())
    }

    /// Pixels per subset for an image of `n` pixels.
    pub fn subset_size(&self, n: usize) -> usize {
        (self.fraction * n as f64 + 1e-9).floor() as usize
    }
}

/// `m` index sets of `floor(fraction * n)` distinct pixels each, sorted.
/// Different sets may overlap.
pub fn sample_subsets<R: Rng + ?Sized>(
    n: usize,
    cfg: &BundleExtractionConfig,
    rng: &mut R,
) -> Result<Vec<Vec<usize>>> {
    cfg.validate()?;
    let size = cfg.subset_size(n);
    if size == 0 || size < cfg.endmembers {
        return Err(HsiError::invalid(
            "subset size",
            format!(
                "{size} pixels per subset ({} of {n}) is fewer than the {} endmembers",
                cfg.fraction, cfg.endmembers
            ),
        ));
    }
    Ok((0..cfg.subsets)
        .map(|_| {
            let mut set = index::sample(rng, n, size).into_vec();
            set.sort_unstable();
            set
        })
        .collect())
}

/// Angle between two nonzero vectors, in radians.
///
/// Computed as `2 atan2(|a - b|, |a + b|)` on the normalized vectors, which
/// stays accurate near 0 and pi.
pub fn spectral_angle(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(HsiError::dim("spectral_angle", u.len(), v.len()));
    }
    let nu = u.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nv = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !(nu > 0.0 && nv > 0.0) || !nu.is_finite() || !nv.is_finite() {
        return Err(HsiError::invalid("spectral_angle", "zero or non-finite vector"));
    }
    let (mut diff, mut sum) = (0.0, 0.0);
    for (a, b) in u.iter().zip(v) {
        let (a, b) = (a / nu, b / nv);
        diff += (a - b) * (a - b);
        sum += (a + b) * (a + b);
    }
    Ok(2.0 * diff.sqrt().atan2(sum.sqrt()))
}

/// Eigenpairs of a symmetric matrix, sorted by decreasing eigenvalue, each
/// eigenvector signed so that its largest-magnitude entry is positive.
fn sorted_eigen(m: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = DMatrix::zeros(eig.eigenvectors.nrows(), order.len());
    for (c, &i) in order.iter().enumerate() {
        let mut col = eig.eigenvectors.column(i).into_owned();
        let pivot = col.iter().copied().fold(0.0f64, |acc, x| if x.abs() > acc.abs() { x } else { acc });
        if pivot < 0.0 {
            col.neg_mut();
        }
        vectors.set_column(c, &col);
    }
    (values, vectors)
}

fn check_rank(values: &[f64], needed: usize) -> Result<()> {
    let top = values.first().copied().unwrap_or(0.0).max(0.0);
    let tol = top * 1e-12 + f64::MIN_POSITIVE;
    let rank = values.iter().filter(|&&v| v > tol).count();
    if rank < needed {
        return Err(HsiError::Degenerate(format!(
            "VCA needs a signal subspace of dimension {needed}, data spans {rank}"
        )));
    }
    Ok(())
}

/// Indices (columns of `x`) selected by vertex component analysis.
pub fn vca_indices<R: Rng + ?Sized>(x: &DMatrix<f64>, p: usize, rng: &mut R) -> Result<Vec<usize>> {
    let (l, n) = x.shape();
    if p == 0 {
        return Err(HsiError::invalid("endmembers", "must be at least 1"));
    }
    if n < p {
        return Err(HsiError::invalid(
            "vca",
            format!("{n} pixels cannot provide {p} endmembers"),
        ));
    }
    if p > l {
        return Err(HsiError::invalid(
            "vca",
            format!("{p} endmembers exceed the {l} bands"),
        ));
    }
    let nf = n as f64;
    let mean: DVector<f64> = x.column_mean();
    let centered = DMatrix::from_fn(l, n, |i, k| x[(i, k)] - mean[i]);
    let (cvals, cvecs) = sorted_eigen(&centered * centered.transpose() / nf);

    if p == 1 {
        let (vals, vecs) = sorted_eigen(x * x.transpose() / nf);
        check_rank(&vals, 1)?;
        let proj = vecs.column(0).transpose() * x;
        return Ok(vec![argmax_abs(proj.iter().copied())]);
    }
    check_rank(&cvals, p - 1)?;

    let ud = cvecs.columns(0, p).into_owned();
    let xp = ud.transpose() * &centered;
    let p_y = x.norm_squared() / nf;
    let p_x = xp.norm_squared() / nf + mean.norm_squared();
    let noise = p_y - p_x;
    let snr = if noise > p_y * 1e-12 {
        Some(10.0 * ((p_x - p as f64 / l as f64 * p_y) / noise).log10())
    } else {
        None
    };
    let threshold = 15.0 + 10.0 * (p as f64).log10();

    let y = match snr {
        Some(s) if s >= threshold && s.is_finite() => {
            let (vals, vecs) = sorted_eigen(x * x.transpose() / nf);
            check_rank(&vals, p)?;
            let ud = vecs.columns(0, p).into_owned();
            let xp = ud.transpose() * x;
            let u = xp.column_mean();
            let mut y = xp;
            for mut col in y.column_iter_mut() {
                let scale = col.dot(&u);
                if scale.abs() < f64::MIN_POSITIVE {
                    return Err(HsiError::Degenerate(
                        "VCA projective scaling vanished for a pixel".into(),
                    ));
                }
                col /= scale;
            }
            y
        }
        // Low or unmeasurably large SNR: affine projection onto the leading
        // p - 1 centered directions, lifted by a constant coordinate.
        _ => {
            let d = p - 1;
            let xd = xp.rows(0, d).into_owned();
            let c = xd
                .column_iter()
                .map(|col| col.norm())
                .fold(0.0f64, f64::max);
            let mut y = DMatrix::from_element(p, n, c);
            y.rows_mut(0, d).copy_from(&xd);
            y
        }
    };

    let mut a = DMatrix::<f64>::zeros(p, p);
    a[(p - 1, 0)] = 1.0;
    let mut indices = Vec::with_capacity(p);
    for i in 0..p {
        let w = DVector::<f64>::from_fn(p, |_, _| rng.sample(StandardNormal));
        let pinv = a
            .clone()
            .pseudo_inverse(1e-12)
            .map_err(|e| HsiError::Degenerate(format!("VCA pseudo-inverse failed: {e}")))?;
        let mut f = &w - &a * (pinv * &w);
        let norm = f.norm();
        if norm <= 1e-12 * w.norm() {
            return Err(HsiError::Degenerate(
                "VCA search direction collapsed".into(),
            ));
        }
        f /= norm;
        let v = f.transpose() * &y;
        let idx = argmax_abs(v.iter().copied());
        a.set_column(i, &y.column(idx));
        indices.push(idx);
    }
    Ok(indices)
}

fn argmax_abs(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in values.enumerate() {
        if v.abs() > best.1 {
            best = (i, v.abs());
        }
    }
    best.0
}

/// `p` signatures extracted by VCA; each one is a column of `x`.
pub fn vca<R: Rng + ?Sized>(x: &DMatrix<f64>, p: usize, rng: &mut R) -> Result<DMatrix<f64>> {
    let idx = vca_indices(x, p, rng)?;
    Ok(x.select_columns(&idx))
}

/// Result of spectral-angle k-means.
#[derive(Debug, Clone)]
pub struct BundleClustering {
    /// Input signatures reordered so that every group is contiguous.
    pub dictionary: EndmemberDictionary,
    pub groups: GroupStructure,
    /// Input column of each dictionary atom.
    pub source_columns: Vec<usize>,
    /// Sum of angles to the assigned centroids after every k-means step of
    /// the retained restart.
    pub objective_history: Vec<f64>,
}

struct KmeansRun {
    assignment: Vec<usize>,
    history: Vec<f64>,
}

fn angle_unit(a: &[f64], b: &[f64]) -> f64 {
    // inputs are unit vectors
    let (mut diff, mut sum) = (0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        diff += (x - y) * (x - y);
        sum += (x + y) * (x + y);
    }
    2.0 * diff.sqrt().atan2(sum.sqrt())
}

fn nearest(point: &[f64], centers: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, center) in centers.iter().enumerate() {
        let d = angle_unit(point, center);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn kmeans_once(points: &[Vec<f64>], p: usize, first: usize) -> Option<KmeansRun> {
    let n = points.len();
    let mut centers = vec![points[first].clone()];
    while centers.len() < p {
        let mut far = (0, -1.0);
        for (i, pt) in points.iter().enumerate() {
            let d = nearest(pt, &centers).1;
            if d > far.1 {
                far = (i, d);
            }
        }
        centers.push(points[far.0].clone());
    }

    let assign = |centers: &[Vec<f64>]| -> (Vec<usize>, Vec<f64>) {
        points.iter().map(|pt| nearest(pt, centers)).unzip()
    };
    let (mut assignment, mut dist) = assign(&centers);
    let mut history = vec![dist.iter().sum::<f64>()];

    for _ in 0..KMEANS_MAX_ITER {
        // repair empty clusters from the worst-served signature
        for _ in 0..p {
            let mut counts = vec![0usize; p];
            for &a in &assignment {
                counts[a] += 1;
            }
            let Some(empty) = counts.iter().position(|&c| c == 0) else {
                break;
            };
            let candidate = (0..n)
                .filter(|&i| counts[assignment[i]] > 1)
                .max_by(|&i, &j| dist[i].total_cmp(&dist[j]).then(j.cmp(&i)))?;
            if dist[candidate] <= 0.0 {
                return None;
            }
            centers[empty] = points[candidate].clone();
            (assignment, dist) = assign(&centers);
        }
        if (0..p).any(|c| !assignment.contains(&c)) {
            return None;
        }

        // centroid step: normalized mean, kept only when it lowers the
        // cluster's sum of angles
        let l = points[0].len();
        for c in 0..p {
            let members: Vec<usize> = (0..n).filter(|&i| assignment[i] == c).collect();
            let mut mean = vec![0.0; l];
            for &i in &members {
                for (m, v) in mean.iter_mut().zip(&points[i]) {
                    *m += v;
                }
            }
            let norm = mean.iter().map(|v| v * v).sum::<f64>().sqrt();
            if !(norm > 0.0) {
                continue;
            }
            mean.iter_mut().for_each(|m| *m /= norm);
            let old: f64 = members.iter().map(|&i| dist[i]).sum();
            let new: f64 = members.iter().map(|&i| angle_unit(&points[i], &mean)).sum();
            if new < old {
                for &i in &members {
                    dist[i] = angle_unit(&points[i], &mean);
                }
                centers[c] = mean;
            }
        }
        history.push(dist.iter().sum());

        let (next, next_dist) = assign(&centers);
        let changed = next != assignment;
        assignment = next;
        dist = next_dist;
        history.push(dist.iter().sum());
        if !changed && history[history.len() - 1] >= history[history.len() - 3] {
            break;
        }
    }
    Some(KmeansRun { assignment, history })
}

/// Groups relabelled by smallest member index.
fn canonical(assignment: &[usize], p: usize) -> Vec<usize> {
    let mut label = vec![usize::MAX; p];
    let mut next = 0;
    for &a in assignment {
        if label[a] == usize::MAX {
            label[a] = next;
            next += 1;
        }
    }
    assignment.iter().map(|&a| label[a]).collect()
}

/// k-means with spectral-angle assignment on unit-normalized signatures.
///
/// Farthest-point initialization, [`KMEANS_RESTARTS`] restarts from random
/// first centres; the restart with the smallest final objective is kept.
pub fn cluster_bundles<R: Rng + ?Sized>(
    signatures: &DMatrix<f64>,
    p: usize,
    rng: &mut R,
) -> Result<BundleClustering> {
    let n = signatures.ncols();
    if p == 0 || n < p {
        return Err(HsiError::invalid(
            "cluster_bundles",
            format!("{n} signatures cannot form {p} groups"),
        ));
    }
    let mut points = Vec::with_capacity(n);
    for (k, col) in signatures.column_iter().enumerate() {
        let norm = col.norm();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(HsiError::invalid(
                "cluster_bundles",
                format!("signature {k} has zero or non-finite norm"),
            ));
        }
        points.push(col.iter().map(|v| v / norm).collect::<Vec<f64>>());
    }

    let mut best: Option<KmeansRun> = None;
    for _ in 0..KMEANS_RESTARTS {
        let first = rng.random_range(0..n);
        if let Some(run) = kmeans_once(&points, p, first) {
            let better = best
                .as_ref()
                .is_none_or(|b| run.history.last() < b.history.last());
            if better {
                best = Some(run);
            }
        }
    }
    let run = best.ok_or_else(|| {
        HsiError::Clustering(format!(
            "every restart left an empty cluster ({n} signatures, {p} groups)"
        ))
    })?;

    let labels = canonical(&run.assignment, p);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&i| (labels[i], i));
    let sizes: Vec<usize> = (0..p).map(|g| labels.iter().filter(|&&l| l == g).count()).collect();
    Ok(BundleClustering {
        dictionary: EndmemberDictionary::new(signatures.select_columns(&order))?,
        groups: GroupStructure::contiguous(&sizes)?,
        source_columns: order,
        objective_history: run.history,
    })
}

/// Output of the full extraction pipeline.
#[derive(Debug, Clone)]
pub struct BundleExtraction {
    pub dictionary: EndmemberDictionary,
    pub groups: GroupStructure,
    /// Pixel index in the input image of every dictionary atom.
    pub source_pixels: Vec<usize>,
    pub subsets: Vec<Vec<usize>>,
}

/// Subsets, then VCA on each, then clustering of the pooled `m * P` signatures.
pub fn extract_bundles<R: Rng + ?Sized>(
    x: &SpectralImage,
    cfg: &BundleExtractionConfig,
    rng: &mut R,
) -> Result<BundleExtraction> {
    let data = x.data();
    let subsets = sample_subsets(data.ncols(), cfg, rng)?;
    let mut pooled = Vec::with_capacity(cfg.subsets * cfg.endmembers);
    for (s, subset) in subsets.iter().enumerate() {
        let sub = data.select_columns(subset);
        let idx = vca_indices(&sub, cfg.endmembers, rng).map_err(|e| match e {
            HsiError::Degenerate(msg) => HsiError::Degenerate(format!("subset {s}: {msg}")),
            other => other,
        })?;
        pooled.extend(idx.into_iter().map(|i| subset[i]));
    }
    let signatures = data.select_columns(&pooled);
    let clustering = cluster_bundles(&signatures, cfg.endmembers, rng)?;
    Ok(BundleExtraction {
        dictionary: clustering.dictionary,
        groups: clustering.groups,
        source_pixels: clustering.source_columns.iter().map(|&c| pooled[c]).collect(),
        subsets,
    })
}

/// [`extract_bundles`] driven by `cfg.seed`.
pub fn extract_bundles_seeded(x: &SpectralImage, cfg: &BundleExtractionConfig) -> Result<BundleExtraction> {
    extract_bundles(x, cfg, &mut ChaCha8Rng::seed_from_u64(cfg.seed))
}
