//! Evaluation measures, with and without abundance ground truth.

use std::fmt::Write as _;

use nalgebra::DMatrix;

use crate::bundles::spectral_angle;
use crate::error::{HsiError, Result};
use crate::model::{
    collapse_abundances, equivalent_endmembers, AbundanceMatrix, EndmemberDictionary,
    GroupStructure,
};

/// Normalization inside the root of the per-atom RMSE.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GroupRmseNormalization {
    /// Divide by the number of groups `P`, although the sum runs over all atoms.
    #[default]
    Groups,
    /// Divide by the number of atoms `Q`.
    Atoms,
}

fn check_same_shape(context: &'static str, a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(HsiError::dim(
            context,
            format!("{:?}", b.shape()),
            format!("{:?}", a.shape()),
        ));
    }
    if a.ncols() == 0 || a.nrows() == 0 {
        return Err(HsiError::invalid(context, "empty matrix"));
    }
    Ok(())
}

fn mean_column_rms(est: &DMatrix<f64>, truth: &DMatrix<f64>, divisor: f64) -> f64 {
    let n = est.ncols();
    est.column_iter()
        .zip(truth.column_iter())
        .map(|(e, t)| ((e - t).norm_squared() / divisor).sqrt())
        .sum::<f64>()
        / n as f64
}

/// `(1/N) sum_k sqrt((1/P) sum_p (a_pk - â_pk)^2)` on collapsed abundances.
pub fn rmse_abundance(est: &DMatrix<f64>, truth: &DMatrix<f64>) -> Result<f64> {
    check_same_shape("rmse_abundance", est, truth)?;
    Ok(mean_column_rms(est, truth, est.nrows() as f64))
}

/// The same measure over every dictionary atom.
pub fn rmse_group(
    est: &DMatrix<f64>,
    truth: &DMatrix<f64>,
    groups: &GroupStructure,
    normalization: GroupRmseNormalization,
) -> Result<f64> {
    check_same_shape("rmse_group", est, truth)?;
    groups.check_atoms("rmse_group", est.nrows())?;
    let divisor = match normalization {
        GroupRmseNormalization::Groups => groups.groups(),
        GroupRmseNormalization::Atoms => groups.atoms(),
    };
    Ok(mean_column_rms(est, truth, divisor as f64))
}

/// A mean over the (pixel, material) pairs that could be evaluated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairAverage {
    pub value: f64,
    pub pairs: usize,
}

fn check_pairs(
    est: &[DMatrix<f64>],
    truth: &[DMatrix<f64>],
    mask: &[Vec<bool>],
) -> Result<()> {
    if est.len() != truth.len() || est.len() != mask.len() {
        return Err(HsiError::dim(
            "endmember metrics: pixel count",
            truth.len(),
            format!("{} estimates, {} masks", est.len(), mask.len()),
        ));
    }
    for (k, ((e, t), m)) in est.iter().zip(truth).zip(mask).enumerate() {
        if e.shape() != t.shape() || m.len() != t.ncols() {
            return Err(HsiError::dim(
                "endmember metrics: pixel shape",
                format!("{:?} with {} flags", t.shape(), t.ncols()),
                format!("{:?} with {} flags at pixel {k}", e.shape(), m.len()),
            ));
        }
    }
    Ok(())
}

/// Mean of `(1/sqrt(L)) ||b_pk - ŝ_pk||_2` over the pairs flagged in `mask`.
///
/// `est[k]` and `truth[k]` are `L x P` per-pixel endmember matrices.
pub fn rmse_endmembers(
    est: &[DMatrix<f64>],
    truth: &[DMatrix<f64>],
    mask: &[Vec<bool>],
) -> Result<PairAverage> {
    check_pairs(est, truth, mask)?;
    let mut total = 0.0;
    let mut pairs = 0;
    for ((e, t), m) in est.iter().zip(truth).zip(mask) {
        let scale = 1.0 / (t.nrows() as f64).sqrt();
        for p in (0..t.ncols()).filter(|&p| m[p]) {
            total += scale * (e.column(p) - t.column(p)).norm();
            pairs += 1;
        }
    }
    if pairs == 0 {
        return Err(HsiError::invalid("rmse_endmembers", "no evaluable pairs"));
    }
    Ok(PairAverage {
        value: total / pairs as f64,
        pairs,
    })
}

/// Mean spectral angle, in degrees, over the pairs flagged in `mask`.
pub fn sam_endmembers(
    est: &[DMatrix<f64>],
    truth: &[DMatrix<f64>],
    mask: &[Vec<bool>],
) -> Result<PairAverage> {
    check_pairs(est, truth, mask)?;
    let mut total = 0.0;
    let mut pairs = 0;
    for (k, ((e, t), m)) in est.iter().zip(truth).zip(mask).enumerate() {
        for p in (0..t.ncols()).filter(|&p| m[p]) {
            let angle = spectral_angle(t.column(p).as_slice(), e.column(p).as_slice()).map_err(
                |_| {
                    HsiError::invalid(
                        "sam_endmembers",
                        format!("zero-norm endmember for material {p} in pixel {k}"),
                    )
                },
            )?;
            total += angle.to_degrees();
            pairs += 1;
        }
    }
    if pairs == 0 {
        return Err(HsiError::invalid("sam_endmembers", "no evaluable pairs"));
    }
    Ok(PairAverage {
        value: total / pairs as f64,
        pairs,
    })
}

/// Pixelwise RMSE `(1/sqrt(L)) ||x_k - x̂_k||` and mean pixelwise SAM (degrees)
/// between `X` and `B A`.
pub fn reconstruction_metrics(
    x: &DMatrix<f64>,
    dictionary: &EndmemberDictionary,
    a: &AbundanceMatrix,
) -> Result<(f64, f64)> {
    let xhat = crate::model::reconstruct(dictionary, a)?;
    check_same_shape("reconstruction_metrics", &xhat, x)?;
    let n = x.ncols() as f64;
    let scale = 1.0 / (x.nrows() as f64).sqrt();
    let mut rmse = 0.0;
    let mut sam = 0.0;
    for (k, (xk, rk)) in x.column_iter().zip(xhat.column_iter()).enumerate() {
        rmse += scale * (xk - rk).norm();
        let angle = spectral_angle(xk.as_slice(), rk.as_slice()).map_err(|_| {
            HsiError::invalid(
                "reconstruction_metrics",
                format!("zero-norm pixel or reconstruction at pixel {k}"),
            )
        })?;
        sam += angle.to_degrees();
    }
    Ok((rmse / n, sam / n))
}

/// Every measure that applies to one unmixing result. Absent fields could not
/// be computed from the inputs that were available.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricReport {
    pub rmse_abundance: Option<f64>,
    pub rmse_group: Option<f64>,
    pub rmse_endmembers: Option<f64>,
    pub sam_endmembers_degrees: Option<f64>,
    pub reconstruction_rmse: Option<f64>,
    pub reconstruction_sam_degrees: Option<f64>,
    /// Number of (pixel, material) pairs behind the endmember measures.
    pub evaluated_pairs: Option<usize>,
}

impl MetricReport {
    pub const FIELDS: [&'static str; 7] = [
        "rmse_abundance",
        "rmse_group",
        "rmse_endmembers",
        "sam_endmembers_degrees",
        "reconstruction_rmse",
        "reconstruction_sam_degrees",
        "evaluated_pairs",
    ];

    fn values(&self) -> [Option<String>; 7] {
        let f = |v: Option<f64>| v.map(|x| format!("{x:?}"));
        [
            f(self.rmse_abundance),
            f(self.rmse_group),
            f(self.rmse_endmembers),
            f(self.sam_endmembers_degrees),
            f(self.reconstruction_rmse),
            f(self.reconstruction_sam_degrees),
            self.evaluated_pairs.map(|n| n.to_string()),
        ]
    }

    /// Metric values by name, in [`Self::FIELDS`] order (excluding the pair count).
    pub fn named_values(&self) -> [(&'static str, Option<f64>); 6] {
        [
            ("rmse_abundance", self.rmse_abundance),
            ("rmse_group", self.rmse_group),
            ("rmse_endmembers", self.rmse_endmembers),
            ("sam_endmembers_degrees", self.sam_endmembers_degrees),
            ("reconstruction_rmse", self.reconstruction_rmse),
            ("reconstruction_sam_degrees", self.reconstruction_sam_degrees),
        ]
    }

    pub fn csv_header() -> String {
        Self::FIELDS.join(",")
    }

    /// Absent values are written as empty cells.
    pub fn csv_row(&self) -> String {
        self.values()
            .iter()
            .map(|v| v.clone().unwrap_or_default())
            .collect::<Vec<_>>()
            .join(",")
    }

    /// `key=value` lines; absent values are omitted.
    pub fn to_key_value(&self) -> String {
        let mut out = String::new();
        for (key, value) in Self::FIELDS.iter().zip(self.values()) {
            if let Some(v) = value {
                let _ = writeln!(out, "{key}={v}");
            }
        }
        out
    }
}

/// Per-pixel equivalent endmembers of an abundance matrix, plus defined flags.
pub fn per_pixel_endmembers(
    a: &AbundanceMatrix,
    dictionary: &EndmemberDictionary,
    groups: &GroupStructure,
) -> Result<(Vec<DMatrix<f64>>, Vec<Vec<bool>>)> {
    let mut signatures = Vec::with_capacity(a.pixels());
    let mut defined = Vec::with_capacity(a.pixels());
    for k in 0..a.pixels() {
        let eq = equivalent_endmembers(a, dictionary, groups, k)?;
        signatures.push(eq.signatures);
        defined.push(eq.defined);
    }
    Ok((signatures, defined))
}

/// Full evaluation of per-atom estimated abundances.
///
/// With ground truth (per-atom abundances over the same dictionary) every
/// measure is computed; the true per-pixel endmembers are the equivalent
/// endmembers of the truth. Without it only the reconstruction measures are.
pub fn evaluate(
    x: &DMatrix<f64>,
    dictionary: &EndmemberDictionary,
    groups: &GroupStructure,
    estimate: &AbundanceMatrix,
    truth: Option<&AbundanceMatrix>,
    normalization: GroupRmseNormalization,
) -> Result<MetricReport> {
    let (rmse, sam) = reconstruction_metrics(x, dictionary, estimate)?;
    let mut report = MetricReport {
        reconstruction_rmse: Some(rmse),
        reconstruction_sam_degrees: Some(sam),
        ..MetricReport::default()
    };
    let Some(truth) = truth else {
        return Ok(report);
    };
    let est_collapsed = collapse_abundances(estimate, groups)?;
    let true_collapsed = collapse_abundances(truth, groups)?;
    report.rmse_abundance = Some(rmse_abundance(est_collapsed.data(), true_collapsed.data())?);
    report.rmse_group = Some(rmse_group(
        estimate.data(),
        truth.data(),
        groups,
        normalization,
    )?);
    let (est_s, est_def) = per_pixel_endmembers(estimate, dictionary, groups)?;
    let (true_s, true_def) = per_pixel_endmembers(truth, dictionary, groups)?;
    let mask: Vec<Vec<bool>> = est_def
        .iter()
        .zip(&true_def)
        .map(|(e, t)| e.iter().zip(t).map(|(a, b)| *a && *b).collect())
        .collect();
    if mask.iter().flatten().any(|m| *m) {
        let r = rmse_endmembers(&est_s, &true_s, &mask)?;
        let s = sam_endmembers(&est_s, &true_s, &mask)?;
        report.rmse_endmembers = Some(r.value);
        report.sam_endmembers_degrees = Some(s.value);
        report.evaluated_pairs = Some(r.pairs);
    } else {
        report.evaluated_pairs = Some(0);
    }
    Ok(report)
}
