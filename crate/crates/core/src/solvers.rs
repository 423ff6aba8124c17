//! ADMM abundance solvers.
//!
//! All six solvers share one iteration skeleton. The data term
//! `1/2 ||X - B A||_F^2` is split from the sparsity term through `U` and from
//! the constraint set through `V`:
//!
//! ```text
//! A <- (B'B + rho S'S + rho I)^-1 (B'X + rho S'(U + C) + rho (V + D))
//! U <- prox_{(lambda/rho) phi}(S A - C)
//! V <- proj(A - D)
//! C <- C + U - S A
//! D <- D + V - A
//! ```
//!
//! where `S` is the identity for the convex penalties and the group indicator
//! matrix `M` for the fractional one. FCLSU drops the `U` branch entirely.
//! The linear system is factored once per solve.
//!
//! The returned abundances are the `V` iterate, which is feasible by
//! construction.

use std::time::{Duration, Instant};

use nalgebra::{Cholesky, DMatrix};

use crate::error::{HsiError, Result};
use crate::model::{
    collapse_matrix, AbundanceMatrix, EndmemberDictionary, GroupStructure, Penalty, SolverConfig,
    SpectralImage,
};
use crate::prox;

/// How `U` is tied to `A`.
#[derive(Debug, Clone)]
pub enum Split {
    /// `U = A`, `Q x N`.
    Identity,
    /// `U = M A`, `P x N`: one row per group holding the group sums.
    GroupSum(GroupStructure),
}

#[derive(Debug, Clone)]
pub enum Shrinkage {
    Soft,
    Group(GroupStructure),
    Elitist(GroupStructure),
    CollaborativeRows,
    QShrink { q: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Projection {
    Simplex,
    Orthant,
}

#[derive(Debug, Clone)]
pub struct SparsityBranch {
    pub split: Split,
    pub shrinkage: Shrinkage,
    pub lambda: f64,
}

/// Everything the skeleton needs besides the data.
#[derive(Debug, Clone)]
pub struct AdmmProblem {
    pub sparsity: Option<SparsityBranch>,
    pub projection: Projection,
    pub rho: f64,
    pub max_iter: usize,
    pub rel_tol: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverStatus {
    Converged,
    IterationLimited,
}

impl SolverStatus {
    pub fn name(self) -> &'static str {
        match self {
            SolverStatus::Converged => "converged",
            SolverStatus::IterationLimited => "iteration-limited",
        }
    }
}

/// Iterates of one ADMM run.
#[derive(Debug, Clone)]
pub struct SolverState {
    pub a: DMatrix<f64>,
    /// Empty (0 x N) when the sparsity branch is disabled.
    pub u: DMatrix<f64>,
    pub v: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub d: DMatrix<f64>,
    pub iteration: usize,
    /// Relative change of `V` at each iteration.
    pub rel_change: Vec<f64>,
    /// `||U - S A||_F` at each iteration (zero without a sparsity branch).
    pub primal_u: Vec<f64>,
    /// `||V - A||_F` at each iteration.
    pub primal_v: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct SolverReport {
    pub penalty: Penalty,
    /// Per-atom abundances (the `V` iterate).
    pub abundances: AbundanceMatrix,
    pub iterations: usize,
    pub status: SolverStatus,
    pub final_rel_change: f64,
    pub rel_change_history: Vec<f64>,
    pub primal_u_history: Vec<f64>,
    pub primal_v_history: Vec<f64>,
    /// `1/2 ||X - B A||_F^2`.
    pub data_fit: f64,
    /// Unscaled penalty at the returned abundances. For the fractional solver
    /// this is the `L_{G,1,q}^q` surrogate.
    pub penalty_value: f64,
    pub lambda: f64,
    pub wall_time: Duration,
    /// Time spent in the iteration loop only.
    pub iteration_time: Duration,
}

impl SolverReport {
    pub fn objective(&self) -> f64 {
        self.data_fit + self.lambda * self.penalty_value
    }

    pub fn seconds_per_iteration(&self) -> f64 {
        self.iteration_time.as_secs_f64() / self.iterations.max(1) as f64
    }

    pub fn converged(&self) -> bool {
        self.status == SolverStatus::Converged
    }
}

/// Runs the shared ADMM iteration.
pub fn admm_skeleton(
    x: &DMatrix<f64>,
    b: &DMatrix<f64>,
    problem: &AdmmProblem,
) -> Result<(SolverState, SolverStatus)> {
    let (bands, pixels) = x.shape();
    let atoms = b.ncols();
    if b.nrows() != bands {
        return Err(HsiError::dim(
            "solver: dictionary bands",
            bands,
            b.nrows(),
        ));
    }
    if let Some(branch) = &problem.sparsity {
        if let Split::GroupSum(g) = &branch.split {
            g.check_atoms("solver: group structure", atoms)?;
        }
        match &branch.shrinkage {
            Shrinkage::Group(g) | Shrinkage::Elitist(g) => {
                g.check_atoms("solver: group structure", atoms)?
            }
            _ => {}
        }
    }
    let rho = problem.rho;

    let mut system = b.transpose() * b;
    for i in 0..atoms {
        system[(i, i)] += rho;
    }
    match problem.sparsity.as_ref().map(|s| &s.split) {
        None => {}
        Some(Split::Identity) => {
            for i in 0..atoms {
                system[(i, i)] += rho;
            }
        }
        Some(Split::GroupSum(g)) => {
            // M'M has a one wherever two atoms share a group.
            for i in 0..atoms {
                for j in 0..atoms {
                    if g.group_of(i) == g.group_of(j) {
                        system[(i, j)] += rho;
                    }
                }
            }
        }
    }
    let inverse = Cholesky::new(system)
        .ok_or_else(|| HsiError::Degenerate("A-update system is not positive definite".into()))?
        .inverse();
    let btx = b.transpose() * x;

    let init = 1.0 / atoms as f64;
    let a = DMatrix::from_element(atoms, pixels, init);
    let v = a.clone();
    let u = match problem.sparsity.as_ref().map(|s| &s.split) {
        None => DMatrix::zeros(0, pixels),
        Some(Split::Identity) => a.clone(),
        Some(Split::GroupSum(g)) => collapse_matrix(&a, g),
    };
    let c = DMatrix::zeros(u.nrows(), pixels);
    let d = DMatrix::zeros(atoms, pixels);
    let mut state = SolverState {
        a,
        u,
        v,
        c,
        d,
        iteration: 0,
        rel_change: Vec::new(),
        primal_u: Vec::new(),
        primal_v: Vec::new(),
    };

    let split = problem.sparsity.as_ref().map(|s| &s.split);
    // The row prox couples pixels, so that branch cannot run column by column.
    let by_rows = matches!(
        problem.sparsity.as_ref().map(|s| &s.shrinkage),
        Some(Shrinkage::CollaborativeRows)
    );
    let height = state.u.nrows();
    let mut rhs = DMatrix::zeros(atoms, pixels);
    let mut sa = vec![0.0; height];
    let mut v_prev = vec![0.0; atoms];
    let mut scratch = Vec::with_capacity(atoms);
    let mut status = SolverStatus::IterationLimited;

    for it in 1..=problem.max_iter {
        // A-update
        let (u_all, c_all) = (state.u.as_slice(), state.c.as_slice());
        for (k, r) in rhs.as_mut_slice().chunks_mut(atoms).enumerate() {
            let cols = k * atoms..(k + 1) * atoms;
            let btx_k = &btx.as_slice()[cols.clone()];
            let v_k = &state.v.as_slice()[cols.clone()];
            let d_k = &state.d.as_slice()[cols];
            for j in 0..atoms {
                r[j] = btx_k[j] + rho * (v_k[j] + d_k[j]);
            }
            let u_k = &u_all[k * height..(k + 1) * height];
            let c_k = &c_all[k * height..(k + 1) * height];
            match split {
                None => {}
                Some(Split::Identity) => {
                    for j in 0..atoms {
                        r[j] += rho * (u_k[j] + c_k[j]);
                    }
                }
                Some(Split::GroupSum(g)) => {
                    for (j, rj) in r.iter_mut().enumerate() {
                        let gi = g.group_of(j);
                        *rj += rho * (u_k[gi] + c_k[gi]);
                    }
                }
            }
        }
        state.a.gemm(1.0, &inverse, &rhs, 0.0);

        let mut primal_u = 0.0;
        let mut u_finite = true;
        if by_rows {
            if state.a.iter().any(|v| !v.is_finite()) {
                return Err(HsiError::Diverged {
                    iteration: it,
                    variable: "A",
                });
            }
            let branch = problem.sparsity.as_ref().expect("row prox has a branch");
            state.u.copy_from(&state.a);
            state.u -= &state.c;
            shrink_rows(&mut state.u, branch.lambda / rho);
            u_finite = state.u.iter().all(|v| v.is_finite());
            state
                .c
                .zip_zip_apply(&state.u, &state.a, |c, u, a| *c += u - a);
            primal_u = distance(&state.u, &state.a).powi(2);
        }

        // U, V and both duals, one pixel at a time
        let mut primal_v = 0.0;
        let mut change = 0.0;
        let mut prev_norm = 0.0;
        let a_all = state.a.as_slice();
        let u_all = state.u.as_mut_slice();
        let c_all = state.c.as_mut_slice();
        let v_all = state.v.as_mut_slice();
        let d_all = state.d.as_mut_slice();
        for k in 0..pixels {
            let cols = k * atoms..(k + 1) * atoms;
            let a_k = &a_all[cols.clone()];
            if a_k.iter().any(|v| !v.is_finite()) {
                return Err(HsiError::Diverged {
                    iteration: it,
                    variable: "A",
                });
            }
            if let (Some(branch), false) = (&problem.sparsity, by_rows) {
                let u_k = &mut u_all[k * height..(k + 1) * height];
                let c_k = &mut c_all[k * height..(k + 1) * height];
                match &branch.split {
                    Split::Identity => sa.copy_from_slice(a_k),
                    Split::GroupSum(g) => {
                        sa.fill(0.0);
                        for (j, &a) in a_k.iter().enumerate() {
                            sa[g.group_of(j)] += a;
                        }
                    }
                }
                for i in 0..height {
                    u_k[i] = sa[i] - c_k[i];
                }
                shrink_column(u_k, &branch.shrinkage, branch.lambda / rho);
                for i in 0..height {
                    u_finite &= u_k[i].is_finite();
                    let r = u_k[i] - sa[i];
                    c_k[i] += r;
                    primal_u += r * r;
                }
            }
            let v_k = &mut v_all[cols.clone()];
            let d_k = &mut d_all[cols];
            v_prev.copy_from_slice(v_k);
            for j in 0..atoms {
                v_k[j] = a_k[j] - d_k[j];
            }
            match problem.projection {
                Projection::Simplex => prox::project_simplex_in_place(v_k, &mut scratch),
                Projection::Orthant => prox::project_nonneg_in_place(v_k),
            }
            for j in 0..atoms {
                let r = v_k[j] - a_k[j];
                d_k[j] += r;
                primal_v += r * r;
                let step = v_k[j] - v_prev[j];
                change += step * step;
                prev_norm += v_prev[j] * v_prev[j];
            }
        }
        if !u_finite {
            return Err(HsiError::Diverged {
                iteration: it,
                variable: "U",
            });
        }

        let (change, prev_norm) = (change.sqrt(), prev_norm.sqrt());
        let rel = if change == 0.0 {
            0.0
        } else {
            change / prev_norm.max(f64::MIN_POSITIVE)
        };
        if !rel.is_finite() {
            return Err(HsiError::Diverged {
                iteration: it,
                variable: "V",
            });
        }
        state.iteration = it;
        state.rel_change.push(rel);
        state.primal_u.push(primal_u.sqrt());
        state.primal_v.push(primal_v.sqrt());
        if rel < problem.rel_tol {
            status = SolverStatus::Converged;
            break;
        }
    }
    Ok((state, status))
}

/// Frobenius norm of `x - y` without a temporary.
fn distance(x: &DMatrix<f64>, y: &DMatrix<f64>) -> f64 {
    x.iter()
        .zip(y.iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
}

fn shrink_rows(u: &mut DMatrix<f64>, tau: f64) {
    prox::prox_collaborative_rows_in_place(u, tau);
}

fn shrink_column(col: &mut [f64], shrinkage: &Shrinkage, tau: f64) {
    match shrinkage {
        Shrinkage::Soft => prox::soft_threshold_in_place(col, tau),
        Shrinkage::Group(g) => prox::prox_group_in_place(col, g, tau),
        Shrinkage::Elitist(g) => prox::prox_elitist_in_place(col, g, tau),
        Shrinkage::QShrink { q } => prox::q_shrink_in_place(col, *q, tau),
        Shrinkage::CollaborativeRows => unreachable!(),
    }
}

/// `1/2 ||X - B A||_F^2`.
pub fn data_fit(x: &DMatrix<f64>, b: &DMatrix<f64>, a: &DMatrix<f64>) -> f64 {
    0.5 * (x - b * a).norm_squared()
}

/// Unscaled penalty value for a solver's penalty, evaluated at `a`.
pub fn penalty_value(
    penalty: Penalty,
    a: &DMatrix<f64>,
    groups: Option<&GroupStructure>,
    fraction: f64,
) -> Result<f64> {
    let need = || {
        groups.ok_or_else(|| {
            HsiError::invalid("penalty", format!("{penalty} penalty needs a group structure"))
        })
    };
    Ok(match penalty {
        Penalty::None => 0.0,
        Penalty::L1 => prox::l1_penalty(a).value,
        Penalty::Collaborative => prox::collaborative_penalty(a).value,
        Penalty::Group => prox::group_penalty(a, need()?)?.value,
        Penalty::Elitist => prox::elitist_penalty(a, need()?)?.value,
        Penalty::Fractional => prox::fractional_penalty(a, need()?, fraction)?.value,
    })
}

fn check_inputs(x: &SpectralImage, b: &EndmemberDictionary, cfg: &SolverConfig) -> Result<()> {
    cfg.validate()?;
    if x.bands() != b.bands() {
        return Err(HsiError::dim(
            "solver: image vs dictionary bands",
            x.bands(),
            b.bands(),
        ));
    }
    Ok(())
}

fn run(
    penalty: Penalty,
    x: &SpectralImage,
    b: &EndmemberDictionary,
    groups: Option<&GroupStructure>,
    cfg: &SolverConfig,
    sparsity: Option<SparsityBranch>,
    projection: Projection,
) -> Result<SolverReport> {
    let start = Instant::now();
    check_inputs(x, b, cfg)?;
    if let Some(g) = groups {
        g.check_atoms("solver: group structure", b.atoms())?;
    }
    let problem = AdmmProblem {
        sparsity,
        projection,
        rho: cfg.rho,
        max_iter: cfg.max_iter,
        rel_tol: cfg.rel_tol,
    };
    let loop_start = Instant::now();
    let (state, status) = admm_skeleton(x.data(), b.signatures(), &problem)?;
    let iteration_time = loop_start.elapsed();
    let fit = data_fit(x.data(), b.signatures(), &state.v);
    let penalty_value = penalty_value(penalty, &state.v, groups, cfg.fraction)?;
    Ok(SolverReport {
        penalty,
        iterations: state.iteration,
        status,
        final_rel_change: state.rel_change.last().copied().unwrap_or(f64::NAN),
        rel_change_history: state.rel_change,
        primal_u_history: state.primal_u,
        primal_v_history: state.primal_v,
        abundances: AbundanceMatrix::per_atom(state.v)?,
        data_fit: fit,
        penalty_value,
        lambda: if penalty.has_lambda() { cfg.lambda } else { 0.0 },
        wall_time: start.elapsed(),
        iteration_time,
    })
}

/// Fully constrained least squares: columns of `A` on the unit simplex.
pub fn solve_fclsu(
    x: &SpectralImage,
    b: &EndmemberDictionary,
    cfg: &SolverConfig,
) -> Result<SolverReport> {
    run(Penalty::None, x, b, None, cfg, None, Projection::Simplex)
}

/// `1/2 ||X - BA||^2 + lambda ||A||_1` with `A >= 0` (no sum-to-one).
pub fn solve_l1(x: &SpectralImage, b: &EndmemberDictionary, cfg: &SolverConfig) -> Result<SolverReport> {
    let branch = SparsityBranch {
        split: Split::Identity,
        shrinkage: Shrinkage::Soft,
        lambda: cfg.lambda,
    };
    run(Penalty::L1, x, b, None, cfg, Some(branch), Projection::Orthant)
}

/// Row-sparse (collaborative) unmixing on the simplex.
pub fn solve_collaborative(
    x: &SpectralImage,
    b: &EndmemberDictionary,
    cfg: &SolverConfig,
) -> Result<SolverReport> {
    let branch = SparsityBranch {
        split: Split::Identity,
        shrinkage: Shrinkage::CollaborativeRows,
        lambda: cfg.lambda,
    };
    run(Penalty::Collaborative, x, b, None, cfg, Some(branch), Projection::Simplex)
}

/// Group lasso on the simplex.
pub fn solve_group(
    x: &SpectralImage,
    b: &EndmemberDictionary,
    groups: &GroupStructure,
    cfg: &SolverConfig,
) -> Result<SolverReport> {
    let branch = SparsityBranch {
        split: Split::Identity,
        shrinkage: Shrinkage::Group(groups.clone()),
        lambda: cfg.lambda,
    };
    run(Penalty::Group, x, b, Some(groups), cfg, Some(branch), Projection::Simplex)
}

/// Elitist lasso on the simplex.
pub fn solve_elitist(
    x: &SpectralImage,
    b: &EndmemberDictionary,
    groups: &GroupStructure,
    cfg: &SolverConfig,
) -> Result<SolverReport> {
    let branch = SparsityBranch {
        split: Split::Identity,
        shrinkage: Shrinkage::Elitist(groups.clone()),
        lambda: cfg.lambda,
    };
    run(Penalty::Elitist, x, b, Some(groups), cfg, Some(branch), Projection::Simplex)
}

/// Fractional `L_{G,1,q}^q` penalty, `0 < q < 1`, through the group-sum split
/// `U = M A` and approximate q-shrinkage.
pub fn solve_fractional(
    x: &SpectralImage,
    b: &EndmemberDictionary,
    groups: &GroupStructure,
    cfg: &SolverConfig,
) -> Result<SolverReport> {
    if !(cfg.fraction > 0.0 && cfg.fraction < 1.0) {
        return Err(HsiError::invalid(
            "solver config",
            format!("fractional penalty needs 0 < q < 1, got {}", cfg.fraction),
        ));
    }
    let branch = SparsityBranch {
        split: Split::GroupSum(groups.clone()),
        shrinkage: Shrinkage::QShrink { q: cfg.fraction },
        lambda: cfg.lambda,
    };
    run(Penalty::Fractional, x, b, Some(groups), cfg, Some(branch), Projection::Simplex)
}

/// Dispatches on `cfg.penalty`.
pub fn solve(
    x: &SpectralImage,
    b: &EndmemberDictionary,
    groups: Option<&GroupStructure>,
    cfg: &SolverConfig,
) -> Result<SolverReport> {
    let need = || {
        groups.ok_or_else(|| {
            HsiError::invalid(
                "solver config",
                format!("{} penalty needs a group structure", cfg.penalty),
            )
        })
    };
    match cfg.penalty {
        Penalty::None => solve_fclsu(x, b, cfg),
        Penalty::L1 => solve_l1(x, b, cfg),
        Penalty::Collaborative => solve_collaborative(x, b, cfg),
        Penalty::Group => solve_group(x, b, need()?, cfg),
        Penalty::Elitist => solve_elitist(x, b, need()?, cfg),
        Penalty::Fractional => solve_fractional(x, b, need()?, cfg),
    }
}
