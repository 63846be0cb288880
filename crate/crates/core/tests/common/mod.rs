//! Test-only reference solvers, kept independent of the library's SMO path.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Population z-scoring, recomputed here rather than taken from the model.
pub fn standardize(x: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = x.len() as f64;
    let d = x[0].len();
    let mut out = x.to_vec();
    for k in 0..d {
        let mean = x.iter().map(|r| r[k]).sum::<f64>() / n;
        let sd = (x.iter().map(|r| (r[k] - mean).powi(2)).sum::<f64>() / n).sqrt();
        let sd = if sd > 0.0 { sd } else { 1.0 };
        for row in out.iter_mut() {
            row[k] = (row[k] - mean) / sd;
        }
    }
    out
}

pub fn gram(z: &[Vec<f64>], y: &[f64]) -> Vec<Vec<f64>> {
    let n = z.len();
    let mut q = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            let k: f64 = z[i].iter().zip(&z[j]).map(|(a, b)| a * b).sum();
            q[i][j] = y[i] * y[j] * k;
        }
    }
    q
}

/// `sum(alpha) - 0.5 alpha^T Q alpha`
pub fn dual_objective(q: &[Vec<f64>], alpha: &[f64]) -> f64 {
    let n = alpha.len();
    let mut quad = 0.0;
    for i in 0..n {
        for j in 0..n {
            quad += alpha[i] * q[i][j] * alpha[j];
        }
    }
    alpha.iter().sum::<f64>() - 0.5 * quad
}

/// Euclidean projection onto `{0 <= a <= c, y.a = 0}` by bisection on the
/// multiplier of the equality constraint.
fn project(v: &[f64], y: &[f64], c: f64) -> Vec<f64> {
    let at = |lambda: f64| -> (Vec<f64>, f64) {
        let a: Vec<f64> = v
            .iter()
            .zip(y)
            .map(|(vi, yi)| (vi - lambda * yi).clamp(0.0, c))
            .collect();
        let s = a.iter().zip(y).map(|(ai, yi)| ai * yi).sum();
        (a, s)
    };
    // y.a(lambda) is non-increasing in lambda
    let bound = v.iter().fold(0.0f64, |m, x| m.max(x.abs())) + c + 1.0;
    let (mut lo, mut hi) = (-bound, bound);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if at(mid).1 > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    at(0.5 * (lo + hi)).0
}

/// Maximizes the soft-margin dual with accelerated projected gradient ascent.
pub fn projected_gradient_dual(q: &[Vec<f64>], y: &[f64], c: f64) -> Vec<f64> {
    let n = y.len();
    // step from a Frobenius bound on the largest eigenvalue
    let lip: f64 = q
        .iter()
        .flatten()
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt()
        .max(1e-12);
    let step = 1.0 / lip;
    let mut alpha = vec![0.0; n];
    let mut prev = alpha.clone();
    let mut t = 1.0f64;
    for _ in 0..200_000 {
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let mom = (t - 1.0) / t_next;
        let look: Vec<f64> = alpha
            .iter()
            .zip(&prev)
            .map(|(a, p)| a + mom * (a - p))
            .collect();
        let grad: Vec<f64> = (0..n)
            .map(|i| {
                1.0 - q[i]
                    .iter()
                    .zip(&look)
                    .map(|(qij, aj)| qij * aj)
                    .sum::<f64>()
            })
            .collect();
        let cand: Vec<f64> = look.iter().zip(&grad).map(|(a, g)| a + step * g).collect();
        let next = project(&cand, y, c);
        let moved = next
            .iter()
            .zip(&alpha)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        prev = std::mem::replace(&mut alpha, next);
        // restart momentum if the objective dropped
        if dual_objective(q, &alpha) < dual_objective(q, &prev) {
            t = 1.0;
        } else {
            t = t_next;
        }
        if moved < 1e-13 {
            break;
        }
    }
    alpha
}

/// Random two-cluster instance; `gap` > 0 pushes the clusters apart.
pub fn random_instance(
    seed: u64,
    n: usize,
    d: usize,
    gap: f64,
) -> (Vec<Vec<f64>>, Vec<tdgs_core::Class>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let positive = i % 2 == 0;
        let shift = if positive { gap } else { -gap };
        x.push(
            (0..d)
                .map(|k| rng.gen_range(-1.0..1.0) + if k == 0 { shift } else { 0.0 })
                .collect(),
        );
        y.push(if positive {
            tdgs_core::Class::Dissimilar
        } else {
            tdgs_core::Class::Similar
        });
    }
    (x, y)
}

/// Distance from `p` to segment `[a, b]` in the plane.
fn point_segment(p: &[f64], a: &[f64], b: &[f64]) -> f64 {
    let ab = [b[0] - a[0], b[1] - a[1]];
    let ap = [p[0] - a[0], p[1] - a[1]];
    let len2 = ab[0] * ab[0] + ab[1] * ab[1];
    let t = if len2 > 0.0 {
        ((ap[0] * ab[0] + ap[1] * ab[1]) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let dx = ap[0] - t * ab[0];
    let dy = ap[1] - t * ab[1];
    (dx * dx + dy * dy).sqrt()
}

/// Distance between the convex hulls of two disjoint planar point sets, by
/// exhaustive point-to-segment search. For separable data this is the
/// hard-margin width `2 / |w|`.
pub fn hull_distance(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    let mut best = f64::INFINITY;
    for (pts, others) in [(a, b), (b, a)] {
        for p in pts {
            for i in 0..others.len() {
                for j in i..others.len() {
                    best = best.min(point_segment(p, &others[i], &others[j]));
                }
            }
        }
    }
    best
}
