//! Synthetic scenes with spectral variability and full ground truth.
//!
//! Each material has a smooth base spectrum and a bundle of variants built by
//! random scaling, a quadratic perturbation and small noise. Abundances come
//! from smoothed random fields with a few active materials per pixel, and every
//! active material contributes exactly one of its variants.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{HsiError, Result};
use crate::model::{AbundanceMatrix, EndmemberDictionary, GroupStructure, SpectralImage};

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub materials: usize,
    pub variants: usize,
    pub width: usize,
    pub height: usize,
    pub bands: usize,
    pub k_min: usize,
    pub k_max: usize,
    pub psi_min: f64,
    pub psi_max: f64,
    pub beta_min: f64,
    pub beta_max: f64,
    pub sigma_v: f64,
    /// Pixel SNR in dB; `None` gives a noiseless scene.
    pub snr_db: Option<f64>,
    pub seed: u64,
}

impl Default for SceneSpec {
    /// Desk-scale scene: 5 materials with 5 variants, 30x30 pixels, 100 bands, 30 dB.
    fn default() -> Self {
        Self {
            materials: 5,
            variants: 5,
            width: 30,
            height: 30,
            bands: 100,
            k_min: 1,
            k_max: 3,
            psi_min: 0.75,
            psi_max: 1.25,
            beta_min: -0.1,
            beta_max: 0.1,
            sigma_v: 0.005,
            snr_db: Some(30.0),
            seed: 0,
        }
    }
}

impl SceneSpec {
    pub const KEYS: [&'static str; 14] = [
        "materials",
        "variants",
        "width",
        "height",
        "bands",
        "k_min",
        "k_max",
        "psi_min",
        "psi_max",
        "beta_min",
        "beta_max",
        "sigma_v",
        "snr_db",
        "seed",
    ];

    /// 20 materials with 20 variants each, 50x50 pixels, 224 bands.
    pub fn paper_scale() -> Self {
        Self {
            materials: 20,
            variants: 20,
            width: 50,
            height: 50,
            bands: 224,
            ..Self::default()
        }
    }

    pub fn pixels(&self) -> usize {
        self.width * self.height
    }

    pub fn atoms(&self) -> usize {
        self.materials * self.variants
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &'static str, reason: String| Err(HsiError::invalid(what, reason));
        if self.materials == 0 {
            return bad("materials", "must be at least 1".into());
        }
        if self.variants == 0 {
            return bad("variants", "must be at least 1".into());
        }
        if self.width == 0 || self.height == 0 {
            return bad("layout", format!("{}x{} has no pixels", self.width, self.height));
        }
        if self.bands < 2 {
            return bad("bands", format!("{} is fewer than 2", self.bands));
        }
        if !(1 <= self.k_min && self.k_min <= self.k_max && self.k_max <= self.materials) {
            return bad(
                "active materials",
                format!(
                    "need 1 <= k_min <= k_max <= materials, got {}..{} with {} materials",
                    self.k_min, self.k_max, self.materials
                ),
            );
        }
        let finite = [
            self.psi_min,
            self.psi_max,
            self.beta_min,
            self.beta_max,
            self.sigma_v,
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            return bad("scene parameters", "must be finite".into());
        }
        if !(self.psi_min > 0.0 && self.psi_min <= self.psi_max) {
            return bad(
                "psi",
                format!("need 0 < psi_min <= psi_max, got [{}, {}]", self.psi_min, self.psi_max),
            );
        }
        if self.beta_min > self.beta_max {
            return bad(
                "beta",
                format!("empty range [{}, {}]", self.beta_min, self.beta_max),
            );
        }
        if self.sigma_v < 0.0 {
            return bad("sigma_v", format!("{} is negative", self.sigma_v));
        }
        if let Some(snr) = self.snr_db {
            if !snr.is_finite() {
                return bad("snr_db", "must be finite; use 'none' for a noiseless scene".into());
            }
        }
        Ok(())
    }

    /// Sets one parameter from its text form. Returns `Ok(false)` for an
    /// unknown key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
            value.trim().parse().map_err(|_| {
                HsiError::invalid("scene parameter", format!("{key}: cannot parse '{value}'"))
            })
        }
        match key {
            "materials" => self.materials = parse(key, value)?,
            "variants" => self.variants = parse(key, value)?,
            "width" => self.width = parse(key, value)?,
            "height" => self.height = parse(key, value)?,
            "bands" => self.bands = parse(key, value)?,
            "k_min" => self.k_min = parse(key, value)?,
            "k_max" => self.k_max = parse(key, value)?,
            "psi_min" => self.psi_min = parse(key, value)?,
            "psi_max" => self.psi_max = parse(key, value)?,
            "beta_min" => self.beta_min = parse(key, value)?,
            "beta_max" => self.beta_max = parse(key, value)?,
            "sigma_v" => self.sigma_v = parse(key, value)?,
            "snr_db" => {
                self.snr_db = match value.trim() {
                    "none" | "inf" => None,
                    v => Some(parse(key, v)?),
                }
            }
            "seed" => self.seed = parse(key, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    /// Every parameter as `key=value` lines, with the generator defaults that
    /// were not changed marked as such.
    pub fn to_key_value(&self) -> String {
        let d = Self::default();
        let mut out = String::from("# synthetic scene parameters\n");
        let mut line = |key: &str, value: String, default: bool| {
            let _ = if default {
                writeln!(out, "{key}={value}  # generator default")
            } else {
                writeln!(out, "{key}={value}")
            };
        };
        line("materials", self.materials.to_string(), false);
        line("variants", self.variants.to_string(), false);
        line("width", self.width.to_string(), false);
        line("height", self.height.to_string(), false);
        line("bands", self.bands.to_string(), false);
        line("k_min", self.k_min.to_string(), false);
        line("k_max", self.k_max.to_string(), false);
        line("psi_min", format!("{:?}", self.psi_min), self.psi_min == d.psi_min);
        line("psi_max", format!("{:?}", self.psi_max), self.psi_max == d.psi_max);
        line("beta_min", format!("{:?}", self.beta_min), self.beta_min == d.beta_min);
        line("beta_max", format!("{:?}", self.beta_max), self.beta_max == d.beta_max);
        line("sigma_v", format!("{:?}", self.sigma_v), self.sigma_v == d.sigma_v);
        line(
            "snr_db",
            self.snr_db.map_or("none".into(), |s| format!("{s:?}")),
            false,
        );
        line("seed", self.seed.to_string(), false);
        out
    }

    /// Parses the output of [`Self::to_key_value`].
    pub fn from_key_value(text: &str) -> Result<Self> {
        let mut spec = Self::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                HsiError::invalid("scene spec", format!("line {}: expected key=value", n + 1))
            })?;
            if !spec.set(key.trim(), value)? {
                return Err(HsiError::invalid(
                    "scene spec",
                    format!("line {}: unknown key '{}'", n + 1, key.trim()),
                ));
            }
        }
        spec.validate()?;
        Ok(spec)
    }
}

/// Complete ground truth of a generated scene.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    /// `L x P` base spectra.
    pub base_signatures: DMatrix<f64>,
    /// `L x (P m_v)` variants, grouped contiguously by material.
    pub dictionary: EndmemberDictionary,
    pub groups: GroupStructure,
    /// `Q x N`, at most one nonzero atom per group in every pixel.
    pub abundances_atom: AbundanceMatrix,
    /// `P x N`.
    pub abundances: AbundanceMatrix,
    /// Atom chosen for each (material, pixel), stored as `choice[k * P + p]`;
    /// `None` for inactive materials.
    pub choice: Vec<Option<usize>>,
    pub width: usize,
    pub height: usize,
}

impl GroundTruth {
    pub fn materials(&self) -> usize {
        self.base_signatures.ncols()
    }

    /// Atom used for material `p` in pixel `k`.
    pub fn chosen_atom(&self, pixel: usize, material: usize) -> Option<usize> {
        self.choice[pixel * self.materials() + material]
    }

    /// `L x P` true endmembers of one pixel plus the active flags; inactive
    /// materials get a zero column.
    pub fn pixel_endmembers(&self, pixel: usize) -> (DMatrix<f64>, Vec<bool>) {
        let p = self.materials();
        let b = self.dictionary.signatures();
        let mut s = DMatrix::zeros(b.nrows(), p);
        let mut active = vec![false; p];
        for m in 0..p {
            if let Some(j) = self.chosen_atom(pixel, m) {
                s.set_column(m, &b.column(j));
                active[m] = true;
            }
        }
        (s, active)
    }
}

/// `L x P` smooth spectra with entries in `(0, 1]`.
///
/// Each is a constant offset plus 3 to 6 Gaussian bumps on a unit band axis,
/// scaled so its maximum is 1.
pub fn generate_base_signatures<R: Rng + ?Sized>(
    p: usize,
    l: usize,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    if p == 0 {
        return Err(HsiError::invalid("materials", "must be at least 1"));
    }
    if l < 2 {
        return Err(HsiError::invalid("bands", format!("{l} is fewer than 2")));
    }
    let mut out = DMatrix::zeros(l, p);
    for m in 0..p {
        let offset = rng.random_range(0.05..0.3);
        let bumps: Vec<(f64, f64, f64)> = (0..rng.random_range(3..=6))
            .map(|_| {
                (
                    rng.random_range(-0.1..1.1),
                    rng.random_range(0.1..0.25),
                    rng.random_range(0.2..1.0),
                )
            })
            .collect();
        let mut col: Vec<f64> = (0..l)
            .map(|i| {
                let t = i as f64 / (l - 1) as f64;
                offset
                    + bumps
                        .iter()
                        .map(|(c, w, a)| a * (-(t - c) * (t - c) / (2.0 * w * w)).exp())
                        .sum::<f64>()
            })
            .collect();
        let max = col.iter().copied().fold(0.0, f64::max);
        col.iter_mut().for_each(|v| *v /= max);
        out.set_column(m, &nalgebra::DVector::from_vec(col));
    }
    Ok(out)
}

/// `L x m_v` variants `psi s + beta s.^2 + eps`, clipped below at 0.
pub fn generate_variants<R: Rng + ?Sized>(
    s: &[f64],
    m_v: usize,
    spec: &SceneSpec,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    spec.validate()?;
    let l = s.len();
    let mut out = DMatrix::zeros(l, m_v);
    for j in 0..m_v {
        let psi = rng.random_range(spec.psi_min..=spec.psi_max);
        let beta = rng.random_range(spec.beta_min..=spec.beta_max);
        for (i, &v) in s.iter().enumerate() {
            let eps = if spec.sigma_v > 0.0 {
                spec.sigma_v * rng.sample::<f64, _>(StandardNormal)
            } else {
                0.0
            };
            out[(i, j)] = (psi * v + beta * v * v + eps).max(0.0);
        }
    }
    Ok(out)
}

/// Sparse collapsed abundances with their active material sets.
#[derive(Debug, Clone, PartialEq)]
pub struct AbundanceField {
    /// `P x N`, columns on the simplex.
    pub abundances: DMatrix<f64>,
    /// Materials with nonzero abundance, per pixel, ascending.
    pub active: Vec<Vec<usize>>,
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil().max(1.0) as isize;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

/// White noise smoothed by a separable Gaussian, edges clamped. Row-major.
fn random_field<R: Rng + ?Sized>(w: usize, h: usize, kernel: &[f64], rng: &mut R) -> Vec<f64> {
    let noise: Vec<f64> = (0..w * h).map(|_| rng.sample(StandardNormal)).collect();
    let r = (kernel.len() / 2) as isize;
    let clamp = |i: isize, n: usize| i.clamp(0, n as isize - 1) as usize;
    let mut rows = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            rows[y * w + x] = kernel
                .iter()
                .enumerate()
                .map(|(t, kv)| kv * noise[y * w + clamp(x as isize + t as isize - r, w)])
                .sum();
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            out[y * w + x] = kernel
                .iter()
                .enumerate()
                .map(|(t, kv)| kv * rows[clamp(y as isize + t as isize - r, h) * w + x])
                .sum();
        }
    }
    out
}

/// Spatially smooth abundances with `k_min..=k_max` active materials per
/// pixel (fewer when some of the top fields are negative).
///
/// Each material gets a random field (kernel sigma `min(w, h) / 10`). In every
/// pixel the `k` largest field values are kept, negatives clamped to 0, and the
/// result renormalized; when all kept values clamp to 0 they share equally.
pub fn generate_abundance_field<R: Rng + ?Sized>(spec: &SceneSpec, rng: &mut R) -> Result<AbundanceField> {
    spec.validate()?;
    let (w, h, p) = (spec.width, spec.height, spec.materials);
    let sigma = (w.min(h) as f64 / 10.0).max(0.5);
    let kernel = gaussian_kernel(sigma);
    let fields: Vec<Vec<f64>> = (0..p).map(|_| random_field(w, h, &kernel, rng)).collect();

    let n = w * h;
    let mut abundances = DMatrix::zeros(p, n);
    let mut active = Vec::with_capacity(n);
    let mut order: Vec<usize> = Vec::with_capacity(p);
    for k in 0..n {
        let count = rng.random_range(spec.k_min..=spec.k_max);
        order.clear();
        order.extend(0..p);
        order.sort_by(|&a, &b| fields[b][k].total_cmp(&fields[a][k]).then(a.cmp(&b)));
        let kept = &order[..count];
        let total: f64 = kept.iter().map(|&m| fields[m][k].max(0.0)).sum();
        for &m in kept {
            abundances[(m, k)] = if total > 0.0 {
                fields[m][k].max(0.0) / total
            } else {
                1.0 / count as f64
            };
        }
        let mut set: Vec<usize> = kept.iter().copied().filter(|&m| abundances[(m, k)] > 0.0).collect();
        set.sort_unstable();
        active.push(set);
    }
    Ok(AbundanceField { abundances, active })
}

/// Scene and ground truth, fully determined by `spec` (including its seed).
pub fn generate_scene(spec: &SceneSpec) -> Result<(SpectralImage, GroundTruth)> {
    generate_scene_with(spec, &mut ChaCha8Rng::seed_from_u64(spec.seed))
}

pub fn generate_scene_with<R: Rng + ?Sized>(
    spec: &SceneSpec,
    rng: &mut R,
) -> Result<(SpectralImage, GroundTruth)> {
    spec.validate()?;
    let (p, mv, l, n) = (spec.materials, spec.variants, spec.bands, spec.pixels());
    let base = generate_base_signatures(p, l, rng)?;
    let mut dict = DMatrix::zeros(l, p * mv);
    for m in 0..p {
        let v = generate_variants(base.column(m).as_slice(), mv, spec, rng)?;
        dict.columns_mut(m * mv, mv).copy_from(&v);
    }
    let field = generate_abundance_field(spec, rng)?;

    let mut atom = DMatrix::zeros(p * mv, n);
    let mut choice = vec![None; n * p];
    for k in 0..n {
        for &m in &field.active[k] {
            let j = m * mv + rng.random_range(0..mv);
            atom[(j, k)] = field.abundances[(m, k)];
            choice[k * p + m] = Some(j);
        }
    }

    let clean = &dict * &atom;
    let x = match spec.snr_db {
        None => clean,
        Some(snr) => {
            let signal = clean.norm_squared() / (l * n) as f64;
            let sigma = (signal / 10f64.powf(snr / 10.0)).sqrt();
            clean.map(|v| v + sigma * rng.sample::<f64, _>(StandardNormal))
        }
    };

    let image = SpectralImage::new(x)?.with_layout(spec.width, spec.height)?;
    let truth = GroundTruth {
        base_signatures: base,
        dictionary: EndmemberDictionary::new(dict)?,
        groups: GroupStructure::contiguous(&vec![mv; p])?,
        abundances_atom: AbundanceMatrix::per_atom(atom)?,
        abundances: AbundanceMatrix::collapsed(field.abundances)?,
        choice,
        width: spec.width,
        height: spec.height,
    };
    Ok((image, truth))
}
