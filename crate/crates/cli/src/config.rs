//! Flat `key=value` experiment configuration.
//!
//! One pair per line, `#` starts a comment. Every key must appear in
//! [`KEYS`]; anything else is rejected. Values are parsed lazily by the
//! command that needs them, so a config can carry keys another command uses.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use hsi_core::bundles::BundleExtractionConfig;
use hsi_core::metrics::GroupRmseNormalization;
use hsi_core::simgen::SceneSpec;
use hsi_core::{Penalty, SolverConfig};

use crate::error::{CliError, Result};

/// Recognized keys with a one-line description.
pub const KEYS: &[(&str, &str)] = &[
    ("seed", "seed for every random choice (u64, default 0)"),
    ("out", "output directory (default: current directory)"),
    ("threads", "worker threads for sweeps (default: all cores)"),
    // scene
    ("materials", "number of materials P"),
    ("variants", "variants per material"),
    ("width", "image width in pixels"),
    ("height", "image height in pixels"),
    ("bands", "number of spectral bands L"),
    ("k_min", "fewest active materials per pixel"),
    ("k_max", "most active materials per pixel"),
    ("psi_min", "lower bound of variant scaling"),
    ("psi_max", "upper bound of variant scaling"),
    ("beta_min", "lower bound of the quadratic perturbation"),
    ("beta_max", "upper bound of the quadratic perturbation"),
    ("sigma_v", "standard deviation of per-band variant noise"),
    ("snr_db", "pixel SNR in dB, or `none` for a noiseless scene"),
    // data files
    ("image", "L x N image matrix file"),
    ("dictionary", "L x Q dictionary matrix file"),
    ("groups", "group file, one 1-based group id per atom"),
    ("abundances", "Q x N per-atom abundance matrix file"),
    ("truth", "Q x N per-atom ground-truth abundance file"),
    // bundle extraction
    ("endmembers", "endmembers per VCA run (default: materials)"),
    ("subsets", "number of random subsets (default 10)"),
    ("subset_fraction", "fraction of pixels in each subset (default 0.1)"),
    // solver
    ("penalty", "none | l1 | collaborative | group | elitist | fractional"),
    ("lambda", "regularization weight (required unless penalty=none)"),
    ("fraction", "exponent q of the fractional penalty (default 0.1)"),
    ("rho", "ADMM penalty parameter (default 10)"),
    ("max_iter", "iteration cap (default 1000)"),
    ("tol", "relative-change stopping tolerance (default 1e-6)"),
    ("write_endmembers", "unmix: also write per-pixel equivalent endmembers (true/false)"),
    // sweep and evaluation
    ("lambdas", "comma-separated lambda grid"),
    ("fractions", "comma-separated q grid, or `default` for the 27-point grid"),
    ("rmse_group_normalization", "groups (default) | atoms"),
    // report
    ("per_atom_maps", "report: also write one image per atom (true/false)"),
];

pub fn is_known(key: &str) -> bool {
    KEYS.iter().any(|(k, _)| *k == key)
}

/// `{k 10^-d : k = 1..9, d = 3, 2, 1}`, ascending.
pub fn default_fraction_grid() -> Vec<f64> {
    [1000.0, 100.0, 10.0]
        .iter()
        .flat_map(|scale| (1..=9).map(move |k| k as f64 / scale))
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExperimentConfig {
    values: BTreeMap<String, String>,
}

impl ExperimentConfig {
    pub fn new() -> Self {
        Self::default()
    }

    /// Parses config text. `origin` names the source in error messages.
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut cfg = Self::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CliError::Config(format!("{origin}:{}: expected key=value, got `{line}`", n + 1))
            })?;
            let key = key.trim();
            if cfg.values.contains_key(key) {
                return Err(CliError::Config(format!(
                    "{origin}:{}: duplicate key `{key}`",
                    n + 1
                )));
            }
            cfg.set(key, value.trim())
                .map_err(|e| CliError::Config(format!("{origin}:{}: {}", n + 1, strip(&e))))?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text, &path.display().to_string())
    }

    /// Sets one key, replacing any earlier value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if !is_known(key) {
            return Err(CliError::Config(format!("unknown key `{key}`")));
        }
        self.values.insert(key.to_string(), value.trim().to_string());
        Ok(())
    }

    /// Applies a `KEY=VALUE` override.
    pub fn set_pair(&mut self, pair: &str) -> Result<()> {
        let (key, value) = pair
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("expected KEY=VALUE, got `{pair}`")))?;
        self.set(key.trim(), value)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn contains(&self, key: &str) -> bool {
        self.values.contains_key(key)
    }

    fn parsed<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.get(key) {
            None => Ok(None),
            Some(v) => v.parse().map(Some).map_err(|_| {
                CliError::Config(format!("`{key}`: cannot parse `{v}`"))
            }),
        }
    }

    fn parsed_or<T: FromStr>(&self, key: &str, default: T) -> Result<T> {
        Ok(self.parsed(key)?.unwrap_or(default))
    }

    fn bool(&self, key: &str) -> Result<bool> {
        match self.get(key) {
            None | Some("false") | Some("0") | Some("no") => Ok(false),
            Some("true") | Some("1") | Some("yes") => Ok(true),
            Some(v) => Err(CliError::Config(format!("`{key}`: expected true or false, got `{v}`"))),
        }
    }

    pub fn seed(&self) -> Result<u64> {
        self.parsed_or("seed", 0)
    }

    pub fn out_dir(&self) -> PathBuf {
        PathBuf::from(self.get("out").unwrap_or("."))
    }

    pub fn threads(&self) -> Result<Option<usize>> {
        let t: Option<usize> = self.parsed("threads")?;
        if t == Some(0) {
            return Err(CliError::Config("`threads` must be at least 1".into()));
        }
        Ok(t)
    }

    pub fn path(&self, key: &str) -> Option<PathBuf> {
        self.get(key).map(PathBuf::from)
    }

    pub fn require_path(&self, key: &str, purpose: &str) -> Result<PathBuf> {
        self.path(key)
            .ok_or_else(|| CliError::Config(format!("`{key}` is required {purpose}")))
    }

    /// Scene parameters over the desk-scale defaults.
    pub fn scene_spec(&self) -> Result<SceneSpec> {
        let mut spec = SceneSpec::default();
        for key in SceneSpec::KEYS {
            if let Some(v) = self.get(key) {
                spec.set(key, v).map_err(CliError::config)?;
            }
        }
        spec.seed = self.seed()?;
        spec.validate().map_err(CliError::config)?;
        Ok(spec)
    }

    pub fn extraction(&self) -> Result<BundleExtractionConfig> {
        let p: usize = match self.parsed("endmembers")? {
            Some(p) => p,
            None => self.parsed("materials")?.ok_or_else(|| {
                CliError::Config("`endmembers` (or `materials`) is required for extraction".into())
            })?,
        };
        let mut cfg = BundleExtractionConfig::new(p);
        cfg.subsets = self.parsed_or("subsets", cfg.subsets)?;
        cfg.fraction = self.parsed_or("subset_fraction", cfg.fraction)?;
        cfg.seed = self.seed()?;
        cfg.validate().map_err(CliError::config)?;
        Ok(cfg)
    }

    pub fn penalty(&self) -> Result<Penalty> {
        match self.get("penalty") {
            None => Ok(Penalty::None),
            Some(v) => v.parse().map_err(CliError::config),
        }
    }

    /// Solver settings. `lambda` is required for every penalized solver.
    pub fn solver(&self) -> Result<SolverConfig> {
        let penalty = self.penalty()?;
        let lambda = match self.parsed::<f64>("lambda")? {
            Some(l) => l,
            None if penalty.has_lambda() => {
                return Err(CliError::Config(format!(
                    "`lambda` is required for penalty `{penalty}`"
                )))
            }
            None => 0.0,
        };
        let mut cfg = SolverConfig::new(penalty, lambda);
        cfg.fraction = self.parsed_or("fraction", cfg.fraction)?;
        cfg.rho = self.parsed_or("rho", cfg.rho)?;
        cfg.max_iter = self.parsed_or("max_iter", cfg.max_iter)?;
        cfg.rel_tol = self.parsed_or("tol", cfg.rel_tol)?;
        cfg.seed = self.seed()?;
        cfg.validate().map_err(CliError::config)?;
        if penalty == Penalty::Fractional && cfg.fraction >= 1.0 {
            return Err(CliError::Config(format!(
                "fractional penalty needs 0 < fraction < 1, got {}",
                cfg.fraction
            )));
        }
        Ok(cfg)
    }

    fn list(&self, key: &str) -> Result<Option<Vec<f64>>> {
        let Some(v) = self.get(key) else {
            return Ok(None);
        };
        let values = v
            .split(',')
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| CliError::Config(format!("`{key}`: cannot parse `{}`", s.trim())))
            })
            .collect::<Result<Vec<_>>>()?;
        if values.is_empty() {
            return Err(CliError::Config(format!("`{key}` is empty")));
        }
        Ok(Some(values))
    }

    /// Lambda grid for sweeps; falls back to the single `lambda`.
    pub fn lambdas(&self) -> Result<Vec<f64>> {
        if let Some(l) = self.list("lambdas")? {
            return Ok(l);
        }
        match self.parsed::<f64>("lambda")? {
            Some(l) => Ok(vec![l]),
            None if !self.penalty()?.has_lambda() => Ok(vec![0.0]),
            None => Err(CliError::Config("`lambdas` (or `lambda`) is required for a sweep".into())),
        }
    }

    /// q grid for fractional sweeps: `fractions`, the single `fraction`, or
    /// the default 27-point grid.
    pub fn fractions(&self) -> Result<Vec<f64>> {
        match self.get("fractions") {
            Some("default") => Ok(default_fraction_grid()),
            Some(_) => Ok(self.list("fractions")?.unwrap_or_default()),
            None => match self.parsed::<f64>("fraction")? {
                Some(q) => Ok(vec![q]),
                None => Ok(default_fraction_grid()),
            },
        }
    }

    pub fn normalization(&self) -> Result<GroupRmseNormalization> {
        match self.get("rmse_group_normalization") {
            None | Some("groups") => Ok(GroupRmseNormalization::Groups),
            Some("atoms") => Ok(GroupRmseNormalization::Atoms),
            Some(v) => Err(CliError::Config(format!(
                "`rmse_group_normalization`: expected groups or atoms, got `{v}`"
            ))),
        }
    }

    pub fn write_endmembers(&self) -> Result<bool> {
        self.bool("write_endmembers")
    }

    pub fn per_atom_maps(&self) -> Result<bool> {
        self.bool("per_atom_maps")
    }

    /// Every set key as sorted `key=value` lines.
    pub fn to_key_value(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.values {
            let _ = writeln!(out, "{k}={v}");
        }
        out
    }
}

fn strip(err: &CliError) -> String {
    match err {
        CliError::Config(m) | CliError::Data(m) | CliError::Divergence(m) => m.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_blank_lines() {
        let cfg = ExperimentConfig::parse(
            "# scene\nmaterials = 4\n\nbands=20  # fewer bands\nsnr_db=none\n",
            "test",
        )
        .unwrap();
        assert_eq!(cfg.get("materials"), Some("4"));
        assert_eq!(cfg.get("bands"), Some("20"));
        let spec = cfg.scene_spec().unwrap();
        assert_eq!((spec.materials, spec.bands, spec.snr_db), (4, 20, None));
    }

    #[test]
    fn rejects_unknown_and_malformed_lines() {
        let err = ExperimentConfig::parse("materials=4\ncolour=blue\n", "f.cfg").unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("f.cfg:2"), "{err}");
        assert!(err.to_string().contains("colour"));
        assert!(ExperimentConfig::parse("materials\n", "f").is_err());
        assert!(ExperimentConfig::parse("seed=1\nseed=2\n", "f").is_err());
        assert!(ExperimentConfig::new().set_pair("lambda").is_err());
    }

    #[test]
    fn solver_requires_lambda_for_penalties() {
        let mut cfg = ExperimentConfig::new();
        assert_eq!(cfg.solver().unwrap().penalty, Penalty::None);
        cfg.set("penalty", "group").unwrap();
        assert!(matches!(cfg.solver(), Err(CliError::Config(_))));
        cfg.set("lambda", "0.5").unwrap();
        let s = cfg.solver().unwrap();
        assert_eq!((s.lambda, s.rho, s.max_iter, s.fraction), (0.5, 10.0, 1000, 0.1));
        cfg.set("penalty", "fractional").unwrap();
        cfg.set("fraction", "1").unwrap();
        assert!(cfg.solver().is_err());
        cfg.set("penalty", "nonsense").unwrap();
        assert!(cfg.solver().is_err());
        cfg.set("penalty", "l1").unwrap();
        cfg.set("lambda", "abc").unwrap();
        assert!(cfg.solver().is_err());
    }

    #[test]
    fn default_grid_has_27_points_over_three_decades() {
        let g = default_fraction_grid();
        assert_eq!(g.len(), 27);
        assert_eq!(g[0], 0.001);
        assert_eq!(g[8], 0.009);
        assert_eq!(g[9], 0.01);
        assert_eq!(g[26], 0.9);
        assert!(g.windows(2).all(|w| w[0] < w[1]));
        let cfg = ExperimentConfig::parse("fractions=default", "t").unwrap();
        assert_eq!(cfg.fractions().unwrap(), g);
        let cfg = ExperimentConfig::parse("fractions=0.1, 0.5", "t").unwrap();
        assert_eq!(cfg.fractions().unwrap(), vec![0.1, 0.5]);
    }

    #[test]
    fn lambda_grid_fallbacks() {
        let cfg = ExperimentConfig::parse("lambdas=0.1,1,10", "t").unwrap();
        assert_eq!(cfg.lambdas().unwrap(), vec![0.1, 1.0, 10.0]);
        let cfg = ExperimentConfig::parse("lambda=0.3", "t").unwrap();
        assert_eq!(cfg.lambdas().unwrap(), vec![0.3]);
        let cfg = ExperimentConfig::parse("penalty=group", "t").unwrap();
        assert!(cfg.lambdas().is_err());
        let cfg = ExperimentConfig::parse("lambdas=0.1,x", "t").unwrap();
        assert!(cfg.lambdas().is_err());
    }

    #[test]
    fn extraction_defaults() {
        let cfg = ExperimentConfig::parse("materials=5", "t").unwrap();
        let e = cfg.extraction().unwrap();
        assert_eq!((e.endmembers, e.subsets, e.fraction), (5, 10, 0.1));
        assert!(ExperimentConfig::new().extraction().is_err());
        let cfg = ExperimentConfig::parse("endmembers=3\nsubset_fraction=1.5", "t").unwrap();
        assert!(cfg.extraction().is_err());
    }

    #[test]
    fn echo_round_trips() {
        let cfg = ExperimentConfig::parse("seed=9\npenalty=group\nlambda=0.25", "t").unwrap();
        let again = ExperimentConfig::parse(&cfg.to_key_value(), "echo").unwrap();
        assert_eq!(cfg, again);
    }

    #[test]
    fn every_scene_key_is_registered() {
        for key in SceneSpec::KEYS {
            assert!(is_known(key), "{key}");
        }
    }
}
