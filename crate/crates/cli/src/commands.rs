use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use hsi_core::bundles::extract_bundles_seeded;
use hsi_core::io::{load_groups, load_matrix_auto, save_groups, save_matrix_auto};
use hsi_core::metrics::{evaluate, MetricReport};
use hsi_core::simgen::generate_scene;
use hsi_core::solvers::{solve, SolverReport};
use hsi_core::{
    collapse_abundances, equivalent_endmembers, AbundanceMatrix, EndmemberDictionary,
    GroupStructure, Penalty, SolverConfig, SpectralImage,
};
use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::config::ExperimentConfig;
use crate::error::{CliError, Result};
use crate::pgm::write_pgm16;

/// Abundance level above which an atom or material counts as present.
pub const ACTIVE_THRESHOLD: f64 = 0.01;

pub const SIMULATE_FILES: [&str; 6] = [
    "image.bin",
    "dictionary.bin",
    "groups.txt",
    "truth_atom.bin",
    "truth.bin",
    "scene.cfg",
];

fn out_dir(cfg: &ExperimentConfig) -> Result<PathBuf> {
    let dir = cfg.out_dir();
    fs::create_dir_all(&dir)
        .map_err(|e| CliError::Data(format!("cannot create output directory {}: {e}", dir.display())))?;
    Ok(dir)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))
}

fn context(path: &Path) -> impl FnOnce(hsi_core::HsiError) -> CliError + '_ {
    move |e| match CliError::from(e) {
        CliError::Data(m) => CliError::Data(format!("{}: {m}", path.display())),
        other => other,
    }
}

fn load_image(cfg: &ExperimentConfig) -> Result<SpectralImage> {
    let path = cfg.require_path("image", "as the input image")?;
    let data = load_matrix_auto(&path).map_err(context(&path))?;
    SpectralImage::new(data).map_err(context(&path))
}

fn load_dictionary(cfg: &ExperimentConfig) -> Result<EndmemberDictionary> {
    let path = cfg.require_path("dictionary", "as the endmember dictionary")?;
    let data = load_matrix_auto(&path).map_err(context(&path))?;
    EndmemberDictionary::new(data).map_err(context(&path))
}

fn load_group_file(cfg: &ExperimentConfig, atoms: usize) -> Result<Option<GroupStructure>> {
    let Some(path) = cfg.path("groups") else {
        return Ok(None);
    };
    let groups = load_groups(&path).map_err(context(&path))?;
    if groups.atoms() != atoms {
        return Err(CliError::Data(format!(
            "{}: {} atoms listed, dictionary has {atoms}",
            path.display(),
            groups.atoms()
        )));
    }
    Ok(Some(groups))
}

fn load_abundances(path: &Path, atoms: usize, pixels: usize) -> Result<AbundanceMatrix> {
    let data = load_matrix_auto(path).map_err(context(path))?;
    if data.shape() != (atoms, pixels) {
        return Err(CliError::Data(format!(
            "{}: abundances are {}x{}, expected {atoms}x{pixels}",
            path.display(),
            data.nrows(),
            data.ncols()
        )));
    }
    AbundanceMatrix::per_atom(data).map_err(context(path))
}

fn check_bands(image: &SpectralImage, dict: &EndmemberDictionary) -> Result<()> {
    if image.bands() != dict.bands() {
        return Err(CliError::Data(format!(
            "image has {} bands, dictionary has {}",
            image.bands(),
            dict.bands()
        )));
    }
    Ok(())
}

/// Synthetic scene with ground truth.
pub fn simulate(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    let spec = cfg.scene_spec()?;
    let (image, truth) = generate_scene(&spec)?;
    let dir = out_dir(cfg)?;
    let paths: Vec<PathBuf> = SIMULATE_FILES.iter().map(|f| dir.join(f)).collect();
    save_matrix_auto(image.data(), &paths[0])?;
    save_matrix_auto(truth.dictionary.signatures(), &paths[1])?;
    save_groups(&truth.groups, &paths[2])?;
    save_matrix_auto(truth.abundances_atom.data(), &paths[3])?;
    save_matrix_auto(truth.abundances.data(), &paths[4])?;
    write_text(&paths[5], &spec.to_key_value())?;
    Ok(paths)
}

/// Bundle extraction from an image.
pub fn extract(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    let ecfg = cfg.extraction()?;
    let image = load_image(cfg)?;
    let out = extract_bundles_seeded(&image, &ecfg).map_err(|e| match e {
        hsi_core::HsiError::Degenerate(m) | hsi_core::HsiError::Clustering(m) => {
            CliError::Data(format!("bundle extraction failed: {m}"))
        }
        other => other.into(),
    })?;
    let dir = out_dir(cfg)?;
    let dict_path = dir.join("dictionary.bin");
    let groups_path = dir.join("groups.txt");
    save_matrix_auto(out.dictionary.signatures(), &dict_path)?;
    save_groups(&out.groups, &groups_path)?;
    Ok(vec![dict_path, groups_path])
}

struct UnmixInputs {
    image: SpectralImage,
    dict: EndmemberDictionary,
    groups: Option<GroupStructure>,
}

fn unmix_inputs(cfg: &ExperimentConfig, penalty: Penalty) -> Result<UnmixInputs> {
    let image = load_image(cfg)?;
    let dict = load_dictionary(cfg)?;
    check_bands(&image, &dict)?;
    let groups = load_group_file(cfg, dict.atoms())?;
    if penalty.needs_groups() && groups.is_none() {
        return Err(CliError::Config(format!(
            "penalty `{penalty}` needs a group file (`groups`)"
        )));
    }
    Ok(UnmixInputs { image, dict, groups })
}

/// Group structure used for collapsing: the file, or one group per atom.
fn grouping(inputs: &UnmixInputs) -> Result<GroupStructure> {
    match &inputs.groups {
        Some(g) => Ok(g.clone()),
        None => Ok(GroupStructure::singletons(inputs.dict.atoms())?),
    }
}

pub fn solver_report_text(cfg: &SolverConfig, r: &SolverReport) -> String {
    let mut out = String::new();
    let mut kv = |k: &str, v: String| {
        let _ = writeln!(out, "{k}={v}");
    };
    kv("penalty", r.penalty.to_string());
    kv("lambda", format!("{:?}", r.lambda));
    if r.penalty == Penalty::Fractional {
        kv("fraction", format!("{:?}", cfg.fraction));
    }
    kv("rho", format!("{:?}", cfg.rho));
    kv("max_iter", cfg.max_iter.to_string());
    kv("tol", format!("{:?}", cfg.rel_tol));
    kv("status", r.status.name().to_string());
    kv("iterations", r.iterations.to_string());
    kv("final_rel_change", format!("{:?}", r.final_rel_change));
    kv("data_fit", format!("{:?}", r.data_fit));
    kv("penalty_value", format!("{:?}", r.penalty_value));
    kv("objective", format!("{:?}", r.objective()));
    kv("wall_time_seconds", format!("{:.6}", r.wall_time.as_secs_f64()));
    kv("seconds_per_iteration", format!("{:.9}", r.seconds_per_iteration()));
    let join = |v: &[f64]| v.iter().map(|x| format!("{x:e}")).collect::<Vec<_>>().join(",");
    kv("rel_change_history", join(&r.rel_change_history));
    kv("primal_u_history", join(&r.primal_u_history));
    kv("primal_v_history", join(&r.primal_v_history));
    out
}

/// Per-pixel equivalent endmembers as an `L x (P N)` matrix, column `k P + p`
/// for pixel `k` and material `p` (zero where undefined), plus the `P x N`
/// defined mask as 0/1.
pub fn endmember_matrices(
    a: &AbundanceMatrix,
    dict: &EndmemberDictionary,
    groups: &GroupStructure,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let (p, n) = (groups.groups(), a.pixels());
    let mut s = DMatrix::zeros(dict.bands(), p * n);
    let mut mask = DMatrix::zeros(p, n);
    for k in 0..n {
        let eq = equivalent_endmembers(a, dict, groups, k)?;
        for g in 0..p {
            s.column_mut(k * p + g).copy_from(&eq.signatures.column(g));
            mask[(g, k)] = if eq.defined[g] { 1.0 } else { 0.0 };
        }
    }
    Ok((s, mask))
}

/// Unmixing with the configured penalty.
pub fn unmix(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    let scfg = cfg.solver()?;
    let write_endmembers = cfg.write_endmembers()?;
    let inputs = unmix_inputs(cfg, scfg.penalty)?;
    let report = solve(&inputs.image, &inputs.dict, inputs.groups.as_ref(), &scfg)?;
    let groups = grouping(&inputs)?;
    let collapsed = collapse_abundances(&report.abundances, &groups)?;

    let dir = out_dir(cfg)?;
    let mut written = vec![
        dir.join("abundances_atom.bin"),
        dir.join("abundances.bin"),
        dir.join("solver_report.txt"),
    ];
    save_matrix_auto(&report.abundances.clamped(), &written[0])?;
    save_matrix_auto(&collapsed.clamped(), &written[1])?;
    write_text(&written[2], &solver_report_text(&scfg, &report))?;
    if write_endmembers {
        let (s, mask) = endmember_matrices(&report.abundances, &inputs.dict, &groups)?;
        let s_path = dir.join("endmembers.bin");
        let m_path = dir.join("endmembers_defined.bin");
        save_matrix_auto(&s, &s_path)?;
        save_matrix_auto(&mask, &m_path)?;
        written.extend([s_path, m_path]);
    }
    Ok(written)
}

/// Metrics for stored per-atom abundances.
pub fn eval_report(cfg: &ExperimentConfig) -> Result<MetricReport> {
    let norm = cfg.normalization()?;
    let image = load_image(cfg)?;
    let dict = load_dictionary(cfg)?;
    check_bands(&image, &dict)?;
    let groups = match load_group_file(cfg, dict.atoms())? {
        Some(g) => g,
        None => GroupStructure::singletons(dict.atoms())?,
    };
    let est_path = cfg.require_path("abundances", "as the estimated abundances")?;
    let estimate = load_abundances(&est_path, dict.atoms(), image.pixels())?;
    let truth = match cfg.path("truth") {
        Some(p) => Some(load_abundances(&p, dict.atoms(), image.pixels())?),
        None => None,
    };
    Ok(evaluate(image.data(), &dict, &groups, &estimate, truth.as_ref(), norm)?)
}

pub fn eval(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    let report = eval_report(cfg)?;
    let dir = out_dir(cfg)?;
    let csv = dir.join("metrics.csv");
    let txt = dir.join("metrics.txt");
    write_text(&csv, &format!("{}\n{}\n", MetricReport::csv_header(), report.csv_row()))?;
    write_text(&txt, &report.to_key_value())?;
    Ok(vec![csv, txt])
}

/// One grid point of a sweep.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub lambda: f64,
    pub fraction: Option<f64>,
    pub outcome: std::result::Result<SweepPoint, String>,
}

#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub status: String,
    pub iterations: usize,
    pub objective: f64,
    pub metrics: MetricReport,
    /// Mean number of atoms per pixel above [`ACTIVE_THRESHOLD`].
    pub active_atoms: f64,
    /// Mean number of materials per pixel above [`ACTIVE_THRESHOLD`].
    pub active_groups: f64,
}

pub fn mean_active(m: &DMatrix<f64>) -> f64 {
    m.iter().filter(|v| **v > ACTIVE_THRESHOLD).count() as f64 / m.ncols().max(1) as f64
}

/// Solves and evaluates every grid point; failing points are kept as error rows.
pub fn sweep_rows(cfg: &ExperimentConfig) -> Result<Vec<SweepRow>> {
    let base = {
        // lambda is taken from the grid, so a placeholder keeps validation happy
        let mut c = cfg.clone();
        if !c.contains("lambda") {
            c.set("lambda", "0")?;
        }
        c.solver()?
    };
    let lambdas = cfg.lambdas()?;
    let fractions: Vec<Option<f64>> = if base.penalty == Penalty::Fractional {
        cfg.fractions()?.into_iter().map(Some).collect()
    } else {
        vec![None]
    };
    let grid: Vec<(f64, Option<f64>)> = lambdas
        .iter()
        .flat_map(|&l| fractions.iter().map(move |&q| (l, q)))
        .collect();
    if grid.is_empty() {
        return Err(CliError::Config("sweep grid is empty".into()));
    }
    let norm = cfg.normalization()?;
    let inputs = unmix_inputs(cfg, base.penalty)?;
    let groups = grouping(&inputs)?;
    let truth = match cfg.path("truth") {
        Some(p) => Some(load_abundances(&p, inputs.dict.atoms(), inputs.image.pixels())?),
        None => None,
    };

    let point = |lambda: f64, fraction: Option<f64>| -> std::result::Result<SweepPoint, String> {
        let mut scfg = base.clone();
        scfg.lambda = lambda;
        if let Some(q) = fraction {
            scfg.fraction = q;
        }
        scfg.validate().map_err(|e| e.to_string())?;
        let r = solve(&inputs.image, &inputs.dict, inputs.groups.as_ref(), &scfg)
            .map_err(|e| e.to_string())?;
        // evaluate what unmix would have written
        let a = AbundanceMatrix::per_atom(r.abundances.clamped()).map_err(|e| e.to_string())?;
        let metrics = evaluate(inputs.image.data(), &inputs.dict, &groups, &a, truth.as_ref(), norm)
            .map_err(|e| e.to_string())?;
        let collapsed = collapse_abundances(&a, &groups).map_err(|e| e.to_string())?;
        Ok(SweepPoint {
            status: r.status.name().to_string(),
            iterations: r.iterations,
            objective: r.objective(),
            metrics,
            active_atoms: mean_active(a.data()),
            active_groups: mean_active(collapsed.data()),
        })
    };

    let run = || -> Vec<SweepRow> {
        grid.par_iter()
            .map(|&(lambda, fraction)| SweepRow {
                lambda,
                fraction,
                outcome: point(lambda, fraction),
            })
            .collect()
    };
    match cfg.threads()? {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| CliError::Config(format!("cannot start {t} worker threads: {e}")))
            .map(|pool| pool.install(run)),
        None => Ok(run()),
    }
}

/// Index of the smallest value of each metric over the successful rows.
pub fn best_rows(rows: &[SweepRow]) -> Vec<(&'static str, Option<usize>)> {
    MetricReport::default()
        .named_values()
        .iter()
        .enumerate()
        .map(|(m, (name, _))| {
            let best = rows
                .iter()
                .enumerate()
                .filter_map(|(i, r)| {
                    let v = r.outcome.as_ref().ok()?.metrics.named_values()[m].1?;
                    Some((i, v))
                })
                .fold(None, |acc: Option<(usize, f64)>, (i, v)| match acc {
                    Some((_, b)) if b <= v => acc,
                    _ => Some((i, v)),
                });
            (*name, best.map(|(i, _)| i))
        })
        .collect()
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let best = best_rows(rows);
    let mut out = String::from("lambda,fraction,status,iterations,objective,");
    out.push_str(&MetricReport::csv_header());
    out.push_str(",mean_active_atoms,mean_active_groups");
    for (name, _) in &best {
        let _ = write!(out, ",best_{name}");
    }
    out.push('\n');
    for (i, row) in rows.iter().enumerate() {
        let fraction = row.fraction.map(|q| format!("{q:?}")).unwrap_or_default();
        let _ = write!(out, "{:?},{fraction},", row.lambda);
        match &row.outcome {
            Ok(p) => {
                let _ = write!(
                    out,
                    "{},{},{:?},{},{:?},{:?}",
                    p.status,
                    p.iterations,
                    p.objective,
                    p.metrics.csv_row(),
                    p.active_atoms,
                    p.active_groups
                );
            }
            Err(e) => {
                let msg = e.replace([',', '\n'], ";");
                let blanks = ",".repeat(MetricReport::FIELDS.len() + 2);
                let _ = write!(out, "error: {msg},,{blanks}");
            }
        }
        for (_, b) in &best {
            out.push(',');
            if b.is_some() {
                out.push(if *b == Some(i) { '1' } else { '0' });
            }
        }
        out.push('\n');
    }
    out
}

pub fn sweep(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    let rows = sweep_rows(cfg)?;
    let dir = out_dir(cfg)?;
    let path = dir.join("sweep.csv");
    write_text(&path, &sweep_csv(&rows))?;
    Ok(vec![path])
}

/// Abundance maps and a summary table.
pub fn report(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    let per_atom = cfg.per_atom_maps()?;
    let (width, height) = match (cfg.get("width"), cfg.get("height")) {
        (Some(_), Some(_)) => {
            let spec_w: usize = parse_dim(cfg, "width")?;
            (spec_w, parse_dim(cfg, "height")?)
        }
        _ => {
            return Err(CliError::Config(
                "no spatial layout: set `width` and `height` (for a simulated scene, pass its scene.cfg with --config)".into(),
            ))
        }
    };
    let path = cfg.require_path("abundances", "as the abundances to render")?;
    let data = load_matrix_auto(&path).map_err(context(&path))?;
    if data.ncols() != width * height {
        return Err(CliError::Data(format!(
            "{}: {} pixels do not fit a {width}x{height} layout",
            path.display(),
            data.ncols()
        )));
    }
    let a = AbundanceMatrix::per_atom(data).map_err(context(&path))?;
    let groups = match load_group_file(cfg, a.rows())? {
        Some(g) => g,
        None => GroupStructure::singletons(a.rows())?,
    };
    let collapsed = collapse_abundances(&a, &groups)?.clamped();

    let dir = out_dir(cfg)?;
    let mut written = Vec::new();
    for g in 0..groups.groups() {
        let p = dir.join(format!("material_{}.pgm", g + 1));
        let row: Vec<f64> = collapsed.row(g).iter().copied().collect();
        write_pgm16(&p, width, height, &row)?;
        written.push(p);
    }
    if per_atom {
        let clamped = a.clamped();
        for j in 0..a.rows() {
            let p = dir.join(format!("atom_{}.pgm", j + 1));
            let row: Vec<f64> = clamped.row(j).iter().copied().collect();
            write_pgm16(&p, width, height, &row)?;
            written.push(p);
        }
    }
    let summary = dir.join("summary.txt");
    write_text(&summary, &summary_table(&collapsed, &groups))?;
    written.push(summary);
    Ok(written)
}

fn parse_dim(cfg: &ExperimentConfig, key: &str) -> Result<usize> {
    let v = cfg.get(key).unwrap_or_default();
    match v.parse::<usize>() {
        Ok(n) if n > 0 => Ok(n),
        _ => Err(CliError::Config(format!("`{key}`: expected a positive integer, got `{v}`"))),
    }
}

pub fn summary_table(collapsed: &DMatrix<f64>, groups: &GroupStructure) -> String {
    let n = collapsed.ncols().max(1) as f64;
    let mut out = format!(
        "{:>8} {:>6} {:>10} {:>10} {:>10}\n",
        "material", "atoms", "mean", "max", "active"
    );
    for g in 0..collapsed.nrows() {
        let row = collapsed.row(g);
        let mean = row.sum() / n;
        let max = row.iter().copied().fold(0.0, f64::max);
        let active = row.iter().filter(|v| **v > ACTIVE_THRESHOLD).count() as f64 / n;
        let _ = writeln!(
            out,
            "{:>8} {:>6} {:>10.4} {:>10.4} {:>10.4}",
            g + 1,
            groups.members(g).len(),
            mean,
            max,
            active
        );
    }
    out
}
