//! Domain types shared by every stage of the pipeline: images, bundle
//! dictionaries, group partitions, abundance matrices and solver settings,
//! plus the handful of operations that only depend on these types.
//!
//! All matrices are `nalgebra::DMatrix<f64>`, which is column-major, so a
//! pixel (one column) is a contiguous slice. Every penalty in this crate acts
//! column by column, which is what makes that layout the natural one.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::error::{HsiError, Result};

/// Numerical slack tolerated on negative abundance entries.
pub const NEG_SLACK: f64 = 1e-9;

/// Collapsed group abundance above which a per-pixel equivalent endmember is
/// considered defined.
pub const DEFINED_THRESHOLD: f64 = 1e-8;

/// An `L x N` reflectance matrix, one pixel per column.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralImage {
    data: DMatrix<f64>,
    layout: Option<(usize, usize)>,
}

impl SpectralImage {
    pub fn new(data: DMatrix<f64>) -> Result<Self> {
        if data.nrows() < 2 {
            return Err(HsiError::invalid(
                "image",
                format!("need at least 2 bands, got {}", data.nrows()),
            ));
        }
        if data.ncols() == 0 {
            return Err(HsiError::invalid("image", "no pixels"));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            let (band, pixel) = (pos % data.nrows(), pos / data.nrows());
            return Err(HsiError::invalid(
                "image",
                format!("non-finite value at band {band}, pixel {pixel}"),
            ));
        }
        Ok(Self { data, layout: None })
    }

    /// Attaches a `(width, height)` layout. Pixels are ordered row-major:
    /// pixel `k` sits at row `k / width`, column `k % width`.
    pub fn with_layout(mut self, width: usize, height: usize) -> Result<Self> {
        if width * height != self.pixels() {
            return Err(HsiError::dim(
                "image layout",
                format!("width*height = {}", self.pixels()),
                format!("{width}x{height} = {}", width * height),
            ));
        }
        self.layout = Some((width, height));
        Ok(self)
    }

    pub fn bands(&self) -> usize {
        self.data.nrows()
    }

    pub fn pixels(&self) -> usize {
        self.data.ncols()
    }

    pub fn layout(&self) -> Option<(usize, usize)> {
        self.layout
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn into_data(self) -> DMatrix<f64> {
        self.data
    }
}

/// An `L x Q` matrix of candidate signatures (the bundle dictionary).
#[derive(Debug, Clone, PartialEq)]
pub struct EndmemberDictionary {
    signatures: DMatrix<f64>,
}

impl EndmemberDictionary {
    pub fn new(signatures: DMatrix<f64>) -> Result<Self> {
        if signatures.ncols() == 0 {
            return Err(HsiError::invalid("dictionary", "no atoms"));
        }
        for (j, col) in signatures.column_iter().enumerate() {
            if col.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(HsiError::invalid(
                    "dictionary",
                    format!("atom {j} has a negative or non-finite entry"),
                ));
            }
            if col.norm() == 0.0 {
                return Err(HsiError::invalid(
                    "dictionary",
                    format!("atom {j} has zero norm"),
                ));
            }
        }
        Ok(Self { signatures })
    }

    pub fn bands(&self) -> usize {
        self.signatures.nrows()
    }

    pub fn atoms(&self) -> usize {
        self.signatures.ncols()
    }

    pub fn signatures(&self) -> &DMatrix<f64> {
        &self.signatures
    }

    pub fn into_signatures(self) -> DMatrix<f64> {
        self.signatures
    }
}

/// A partition of the `Q` dictionary atoms into `P` material groups.
///
/// Group ids are 0-based in memory; the text file format uses 1-based ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupStructure {
    assignment: Vec<usize>,
    members: Vec<Vec<usize>>,
}

impl GroupStructure {
    /// Builds a partition from 0-based group ids, one per atom.
    pub fn from_assignment(assignment: Vec<usize>) -> Result<Self> {
        if assignment.is_empty() {
            return Err(HsiError::invalid("group structure", "no atoms"));
        }
        let groups = assignment.iter().max().map_or(0, |m| m + 1);
        let mut members = vec![Vec::new(); groups];
        for (atom, &g) in assignment.iter().enumerate() {
            members[g].push(atom);
        }
        if let Some(empty) = members.iter().position(Vec::is_empty) {
            return Err(HsiError::invalid(
                "group structure",
                format!("group {} has no atoms", empty + 1),
            ));
        }
        Ok(Self {
            assignment,
            members,
        })
    }

    /// Builds a partition from 1-based group ids as stored in group files.
    pub fn from_group_ids(ids: &[usize]) -> Result<Self> {
        if let Some(pos) = ids.iter().position(|&id| id == 0) {
            return Err(HsiError::invalid(
                "group structure",
                format!("atom {pos} has group id 0; ids are 1-based"),
            ));
        }
        Self::from_assignment(ids.iter().map(|id| id - 1).collect())
    }

    /// Consecutive groups of the given sizes: atoms `0..sizes[0]` form group 0, etc.
    pub fn contiguous(sizes: &[usize]) -> Result<Self> {
        let assignment = sizes
            .iter()
            .enumerate()
            .flat_map(|(g, &m)| std::iter::repeat_n(g, m))
            .collect();
        Self::from_assignment(assignment)
    }

    /// Every atom in its own group.
    pub fn singletons(atoms: usize) -> Result<Self> {
        Self::from_assignment((0..atoms).collect())
    }

    pub fn groups(&self) -> usize {
        self.members.len()
    }

    pub fn atoms(&self) -> usize {
        self.assignment.len()
    }

    /// Group of an atom (0-based).
    pub fn group_of(&self, atom: usize) -> usize {
        self.assignment[atom]
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    /// Atom indices belonging to group `g`, ascending.
    pub fn members(&self, g: usize) -> &[usize] {
        &self.members[g]
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.members.iter().map(Vec::len).collect()
    }

    /// 1-based ids, the representation written to group files.
    pub fn group_ids(&self) -> Vec<usize> {
        self.assignment.iter().map(|g| g + 1).collect()
    }

    /// The `P x Q` binary matrix `M` with `M[g, j] = 1` iff atom `j` is in group `g`.
    pub fn indicator_matrix(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.groups(), self.atoms());
        for (j, &g) in self.assignment.iter().enumerate() {
            m[(g, j)] = 1.0;
        }
        m
    }

    pub(crate) fn check_atoms(&self, context: &'static str, atoms: usize) -> Result<()> {
        if atoms != self.atoms() {
            return Err(HsiError::dim(
                context,
                format!("{} atoms (group structure)", self.atoms()),
                atoms,
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AbundanceMode {
    /// One row per dictionary atom.
    PerAtom,
    /// One row per material group.
    Collapsed,
}

/// Abundance coefficients, one column per pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct AbundanceMatrix {
    data: DMatrix<f64>,
    mode: AbundanceMode,
}

impl AbundanceMatrix {
    pub fn new(data: DMatrix<f64>, mode: AbundanceMode) -> Result<Self> {
        if let Some(pos) = data.iter().position(|v| !v.is_finite() || *v < -NEG_SLACK) {
            let (row, pixel) = (pos % data.nrows(), pos / data.nrows());
            return Err(HsiError::invalid(
                "abundances",
                format!(
                    "entry ({row}, {pixel}) = {} is non-finite or negative",
                    data[(row, pixel)]
                ),
            ));
        }
        Ok(Self { data, mode })
    }

    pub fn per_atom(data: DMatrix<f64>) -> Result<Self> {
        Self::new(data, AbundanceMode::PerAtom)
    }

    pub fn collapsed(data: DMatrix<f64>) -> Result<Self> {
        Self::new(data, AbundanceMode::Collapsed)
    }

    pub fn mode(&self) -> AbundanceMode {
        self.mode
    }

    pub fn rows(&self) -> usize {
        self.data.nrows()
    }

    pub fn pixels(&self) -> usize {
        self.data.ncols()
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn into_data(self) -> DMatrix<f64> {
        self.data
    }

    /// Copy with the numerical slack on negative entries clamped to zero.
    pub fn clamped(&self) -> DMatrix<f64> {
        self.data.map(|v| v.max(0.0))
    }

    fn require_per_atom(&self, context: &'static str) -> Result<()> {
        if self.mode != AbundanceMode::PerAtom {
            return Err(HsiError::invalid(
                context,
                "expected per-atom abundances, got collapsed",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Penalty {
    /// Fully constrained least squares, no sparsity term.
    None,
    /// Plain L1 with nonnegativity only (sum-to-one dropped).
    L1,
    /// L2,1 over dictionary rows across all pixels.
    Collaborative,
    /// Group lasso, L_{G,2,1}.
    Group,
    /// Elitist lasso, L_{G,1,2}.
    Elitist,
    /// Fractional L_{G,1,q}^q with 0 < q < 1.
    Fractional,
}

impl Penalty {
    pub const ALL: [Penalty; 6] = [
        Penalty::None,
        Penalty::L1,
        Penalty::Collaborative,
        Penalty::Group,
        Penalty::Elitist,
        Penalty::Fractional,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Penalty::None => "none",
            Penalty::L1 => "l1",
            Penalty::Collaborative => "collaborative",
            Penalty::Group => "group",
            Penalty::Elitist => "elitist",
            Penalty::Fractional => "fractional",
        }
    }

    /// Whether the solver needs a group structure.
    pub fn needs_groups(self) -> bool {
        matches!(self, Penalty::Group | Penalty::Elitist | Penalty::Fractional)
    }

    /// Whether the solver enforces the sum-to-one constraint.
    pub fn enforces_sum_to_one(self) -> bool {
        self != Penalty::L1
    }

    pub fn has_lambda(self) -> bool {
        self != Penalty::None
    }
}

impl fmt::Display for Penalty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Penalty {
    type Err = HsiError;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        Penalty::ALL
            .into_iter()
            .find(|p| p.name() == lower)
            .or(match lower.as_str() {
                "fclsu" => Some(Penalty::None),
                _ => None,
            })
            .ok_or_else(|| {
                HsiError::invalid(
                    "penalty",
                    format!(
                        "unknown penalty `{s}` (expected one of none, l1, collaborative, group, elitist, fractional)"
                    ),
                )
            })
    }
}

/// Settings shared by all ADMM solvers.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub penalty: Penalty,
    pub lambda: f64,
    pub rho: f64,
    /// Exponent `q` of the fractional penalty.
    pub fraction: f64,
    pub max_iter: usize,
    pub rel_tol: f64,
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            penalty: Penalty::None,
            lambda: 0.0,
            rho: 10.0,
            fraction: 0.1,
            max_iter: 1000,
            rel_tol: 1e-6,
            seed: 0,
        }
    }
}

impl SolverConfig {
    pub fn new(penalty: Penalty, lambda: f64) -> Self {
        Self {
            penalty,
            lambda,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(HsiError::invalid(
                "solver config",
                format!("lambda must be finite and >= 0, got {}", self.lambda),
            ));
        }
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            return Err(HsiError::invalid(
                "solver config",
                format!("rho must be finite and > 0, got {}", self.rho),
            ));
        }
        if !(self.fraction > 0.0 && self.fraction <= 1.0) {
            return Err(HsiError::invalid(
                "solver config",
                format!("fraction must lie in (0, 1], got {}", self.fraction),
            ));
        }
        if self.max_iter == 0 {
            return Err(HsiError::invalid("solver config", "max_iter must be >= 1"));
        }
        if !(self.rel_tol >= 0.0) {
            return Err(HsiError::invalid(
                "solver config",
                format!("rel_tol must be >= 0, got {}", self.rel_tol),
            ));
        }
        Ok(())
    }
}

/// Sums per-atom abundances within each group, giving the `P x N` material abundances.
pub fn collapse_abundances(a: &AbundanceMatrix, groups: &GroupStructure) -> Result<AbundanceMatrix> {
    a.require_per_atom("collapse_abundances")?;
    groups.check_atoms("collapse_abundances", a.rows())?;
    Ok(AbundanceMatrix {
        data: collapse_matrix(a.data(), groups),
        mode: AbundanceMode::Collapsed,
    })
}

pub(crate) fn collapse_matrix(a: &DMatrix<f64>, groups: &GroupStructure) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(groups.groups(), a.ncols());
    for (k, col) in a.column_iter().enumerate() {
        for (j, v) in col.iter().enumerate() {
            out[(groups.group_of(j), k)] += v;
        }
    }
    out
}

/// Per-pixel equivalent endmembers: one column per group, flagged when defined.
#[derive(Debug, Clone, PartialEq)]
pub struct EquivalentEndmembers {
    /// `L x P`; column `p` is zero when `defined[p]` is false.
    pub signatures: DMatrix<f64>,
    pub defined: Vec<bool>,
    /// Collapsed abundance of each group in this pixel.
    pub abundances: Vec<f64>,
    /// Convex weights of each group's atoms (in member order); empty for
    /// undefined groups.
    pub weights: Vec<Vec<f64>>,
}

/// Abundance-weighted mean of each group's atoms in pixel `k`.
///
/// A group whose collapsed abundance is at most [`DEFINED_THRESHOLD`] has no
/// equivalent endmember; its column is left at zero and flagged.
pub fn equivalent_endmembers(
    a: &AbundanceMatrix,
    dictionary: &EndmemberDictionary,
    groups: &GroupStructure,
    pixel: usize,
) -> Result<EquivalentEndmembers> {
    a.require_per_atom("equivalent_endmembers")?;
    groups.check_atoms("equivalent_endmembers", a.rows())?;
    groups.check_atoms("equivalent_endmembers", dictionary.atoms())?;
    if pixel >= a.pixels() {
        return Err(HsiError::dim(
            "equivalent_endmembers pixel",
            format!("< {}", a.pixels()),
            pixel,
        ));
    }
    let b = dictionary.signatures();
    let col = a.data().column(pixel);
    let p = groups.groups();
    let mut signatures = DMatrix::zeros(b.nrows(), p);
    let mut defined = vec![false; p];
    let mut abundances = vec![0.0; p];
    let mut weights = vec![Vec::new(); p];
    for g in 0..p {
        let members = groups.members(g);
        let total: f64 = members.iter().map(|&j| col[j]).sum();
        abundances[g] = total;
        if total <= DEFINED_THRESHOLD {
            continue;
        }
        defined[g] = true;
        let mut s = signatures.column_mut(g);
        for &j in members {
            let w = col[j] / total;
            s.axpy(w, &b.column(j), 1.0);
            weights[g].push(w);
        }
    }
    Ok(EquivalentEndmembers {
        signatures,
        defined,
        abundances,
        weights,
    })
}

/// Noiseless forward model `B * A`.
pub fn reconstruct(dictionary: &EndmemberDictionary, a: &AbundanceMatrix) -> Result<DMatrix<f64>> {
    a.require_per_atom("reconstruct")?;
    if dictionary.atoms() != a.rows() {
        return Err(HsiError::dim(
            "reconstruct",
            format!("{} abundance rows", dictionary.atoms()),
            a.rows(),
        ));
    }
    Ok(dictionary.signatures() * a.data())
}

/// Column sums, one per pixel.
pub fn column_sums(m: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_iterator(m.ncols(), m.column_iter().map(|c| c.sum()))
}
