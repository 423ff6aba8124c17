mod common;

use common::oracle::*;
use hsi_core::prox::*;
use hsi_core::GroupStructure;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const HALF: i64 = 500;
const SCALE: f64 = 100.0;

fn half_sq(x: &[f64], v: &[f64]) -> f64 {
    x.iter().zip(v).map(|(a, b)| 0.5 * (a - b) * (a - b)).sum()
}

fn draw(rng: &mut ChaCha8Rng) -> (Vec<f64>, f64) {
    let n = rng.random_range(1..=3);
    let v = (0..n).map(|_| rng.random_range(-4.0..4.0)).collect();
    (v, rng.random_range(0.0..3.0))
}

#[test]
fn oracle_matches_exhaustive_search_on_a_coarse_grid() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..20 {
        let v: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
        let tau = rng.random_range(0.0..2.0);
        let f = |x: &[f64]| half_sq(x, &v) + tau * x.iter().map(|t| t * t).sum::<f64>().sqrt();
        let lower = |lo: &[f64], hi: &[f64]| box_min_half_sq_dist(lo, hi, &v) + tau * box_min_norm(lo, hi, &[0, 1, 2]);
        let bb = grid_min_bb(3, 30, 10.0, f, lower);
        let mut brute = f64::INFINITY;
        for i in -30..=30 {
            for j in -30..=30 {
                for k in -30..=30 {
                    brute = brute.min(f(&[i as f64 / 10.0, j as f64 / 10.0, k as f64 / 10.0]));
                }
            }
        }
        assert_eq!(bb, brute);
    }
}

#[test]
fn convex_bisection_matches_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..10 {
        let c: Vec<f64> = (0..3).map(|_| rng.random_range(-0.5..1.5)).collect();
        let f = |x: &[f64]| x.iter().zip(&c).map(|(a, b)| (a - b).powi(2)).sum::<f64>() + 0.3 * x.iter().sum::<f64>();
        let (bis, _) = unit_box_grid_min_convex(3, 40, f);
        let mut brute = f64::INFINITY;
        for i in 0..=40 {
            for j in 0..=40 {
                for k in 0..=40 {
                    brute = brute.min(f(&[i as f64 / 40.0, j as f64 / 40.0, k as f64 / 40.0]));
                }
            }
        }
        assert_eq!(bis, brute);
    }
}

#[test]
fn soft_threshold_is_grid_optimal() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..50 {
        let (v, tau) = draw(&mut rng);
        let x = soft_threshold(&v, tau);
        let got = half_sq(&x, &v) + tau * l1(&x);
        let grid: f64 = v
            .iter()
            .map(|&vi| grid_min_1d(HALF, SCALE, |t| 0.5 * (t - vi).powi(2) + tau * t.abs()))
            .sum();
        assert!(got <= grid + 1e-6, "v {v:?} tau {tau}: {got} vs {grid}");
    }
}

fn l1(x: &[f64]) -> f64 {
    x.iter().map(|t| t.abs()).sum()
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|t| t * t).sum::<f64>().sqrt()
}

#[test]
fn block_soft_threshold_is_grid_optimal() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..30 {
        let (v, tau) = draw(&mut rng);
        let n = v.len();
        let all: Vec<usize> = (0..n).collect();
        let x = block_soft_threshold(&v, tau);
        let got = half_sq(&x, &v) + tau * norm(&x);
        let grid = grid_min_bb(
            n,
            HALF,
            SCALE,
            |p| half_sq(p, &v) + tau * norm(p),
            |lo, hi| box_min_half_sq_dist(lo, hi, &v) + tau * box_min_norm(lo, hi, &all),
        );
        assert!(got <= grid + 1e-6, "v {v:?} tau {tau}: {got} vs {grid}");
    }
}

#[test]
fn group_prox_is_grid_optimal() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..30 {
        let (v, tau) = draw(&mut rng);
        let n = v.len();
        let ids: Vec<usize> = (0..n).map(|_| rng.random_range(0..2)).collect();
        let Ok(g) = GroupStructure::from_assignment(compact(&ids)) else {
            continue;
        };
        let members: Vec<Vec<usize>> = (0..g.groups()).map(|i| g.members(i).to_vec()).collect();
        let phi = |p: &[f64]| members.iter().map(|m| norm(&m.iter().map(|&j| p[j]).collect::<Vec<_>>())).sum::<f64>();
        let x = prox_group(&v, &g, tau).unwrap();
        let got = half_sq(&x, &v) + tau * phi(&x);
        let grid = grid_min_bb(
            n,
            HALF,
            SCALE,
            |p| half_sq(p, &v) + tau * phi(p),
            |lo, hi| {
                box_min_half_sq_dist(lo, hi, &v)
                    + tau * members.iter().map(|m| box_min_norm(lo, hi, m)).sum::<f64>()
            },
        );
        assert!(got <= grid + 1e-6, "v {v:?} tau {tau}: {got} vs {grid}");
    }
}

fn compact(ids: &[usize]) -> Vec<usize> {
    let mut seen = Vec::new();
    ids.iter()
        .map(|id| match seen.iter().position(|s| s == id) {
            Some(i) => i,
            None => {
                seen.push(*id);
                seen.len() - 1
            }
        })
        .collect()
}

#[test]
fn collaborative_prox_is_grid_optimal() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..30 {
        let (rows, cols) = [(1, 1), (1, 2), (2, 1), (1, 3), (3, 1)][rng.random_range(0..5)];
        let vals: Vec<f64> = (0..rows * cols).map(|_| rng.random_range(-4.0..4.0)).collect();
        let tau = rng.random_range(0.0..3.0);
        // column-major flattening, row r holds entries r, r + rows, ...
        let v = DMatrix::from_column_slice(rows, cols, &vals);
        let row_sets: Vec<Vec<usize>> = (0..rows).map(|r| (0..cols).map(|c| r + c * rows).collect()).collect();
        let phi = |p: &[f64]| row_sets.iter().map(|s| norm(&s.iter().map(|&j| p[j]).collect::<Vec<_>>())).sum::<f64>();
        let x = prox_collaborative_rows(&v, tau);
        let got = half_sq(x.as_slice(), &vals) + tau * phi(x.as_slice());
        let grid = grid_min_bb(
            vals.len(),
            HALF,
            SCALE,
            |p| half_sq(p, &vals) + tau * phi(p),
            |lo, hi| {
                box_min_half_sq_dist(lo, hi, &vals)
                    + tau * row_sets.iter().map(|s| box_min_norm(lo, hi, s)).sum::<f64>()
            },
        );
        assert!(got <= grid + 1e-6, "{v} tau {tau}: {got} vs {grid}");
    }
}

#[test]
fn simplex_projection_is_grid_optimal() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..50 {
        let (v, _) = draw(&mut rng);
        let x = project_simplex(&v).unwrap();
        let got = half_sq(&x, &v);
        let (grid, _) = simplex_grid_min(v.len(), 100, |p| half_sq(p, &v));
        assert!(got <= grid + 1e-6, "v {v:?}: {got} vs {grid}");
    }
}

#[test]
fn orthant_projection_is_grid_optimal() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..50 {
        let (v, _) = draw(&mut rng);
        let x = project_nonneg(&v);
        let got = half_sq(&x, &v);
        let grid: f64 = v
            .iter()
            .map(|&vi| grid_min_1d(HALF, SCALE, |t| if t >= 0.0 { 0.5 * (t - vi).powi(2) } else { f64::INFINITY }))
            .sum();
        assert!(got <= grid + 1e-6, "v {v:?}: {got} vs {grid}");
    }
}
