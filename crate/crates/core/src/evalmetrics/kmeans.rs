use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::real::{gemm, Trans};

pub const MAX_ITERATIONS: usize = 300;
pub const TOLERANCE: f64 = 1e-6;

/// Squared Euclidean distances from `n` points to `k` centers, `[n, k]`,
/// via `|x|² + |c|² − 2 x·c`, clamped at zero.
pub fn squared_distances(
    points: &[f64],
    point_norms: &[f64],
    centers: &[f64],
    dim: usize,
) -> Vec<f64> {
    let n = point_norms.len();
    let k = centers.len() / dim;
    let mut d = vec![0.0; n * k];
    gemm(
        n,
        k,
        dim,
        -2.0,
        points,
        Trans::No,
        centers,
        Trans::Yes,
        0.0,
        &mut d,
    );
    let cn = norms(centers, dim);
    for (row, &pn) in d.chunks_exact_mut(k).zip(point_norms) {
        for (v, &c) in row.iter_mut().zip(&cn) {
            *v = (*v + pn + c).max(0.0);
        }
    }
    d
}

pub fn norms(points: &[f64], dim: usize) -> Vec<f64> {
    points
        .chunks_exact(dim)
        .map(|p| p.iter().map(|v| v * v).sum())
        .collect()
}

/// Index and distance of the nearest center per point; ties go to the
/// lowest index.
pub fn nearest(dist: &[f64], k: usize) -> Vec<(usize, f64)> {
    dist.chunks_exact(k)
        .map(|row| {
            let mut best = (0, row[0]);
            for (j, &v) in row.iter().enumerate().skip(1) {
                if v < best.1 {
                    best = (j, v);
                }
            }
            best
        })
        .collect()
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// k-means++ seeding.
fn seed_centers(points: &[f64], dim: usize, k: usize, rng: &mut impl Rng) -> Vec<f64> {
    let n = points.len() / dim;
    let mut centers = Vec::with_capacity(k * dim);
    let first = rng.random_range(0..n);
    centers.extend_from_slice(&points[first * dim..(first + 1) * dim]);
    let mut closest: Vec<f64> = points
        .chunks_exact(dim)
        .map(|p| squared_distance(p, &centers[..dim]))
        .collect();
    for _ in 1..k {
        let total: f64 = closest.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut idx = n - 1;
            for (i, &d) in closest.iter().enumerate() {
                acc += d;
                if acc > target {
                    idx = i;
                    break;
                }
            }
            idx
        } else {
            rng.random_range(0..n)
        };
        let c = &points[pick * dim..(pick + 1) * dim];
        for (d, p) in closest.iter_mut().zip(points.chunks_exact(dim)) {
            *d = d.min(squared_distance(p, c));
        }
        centers.extend_from_slice(c);
    }
    centers
}

/// Lloyd iterations from k-means++ seeds. Stops when no center moves by
/// more than [`TOLERANCE`] (and no cluster is empty) or after
/// [`MAX_ITERATIONS`]. An empty cluster takes over the point farthest from
/// its current center.
pub fn kmeans(points: &[f64], dim: usize, k: usize, rng: &mut impl Rng) -> Vec<f64> {
    let n = points.len() / dim;
    let pn = norms(points, dim);
    let mut centers = seed_centers(points, dim, k, rng);
    for _ in 0..MAX_ITERATIONS {
        let assign = nearest(&squared_distances(points, &pn, &centers, dim), k);
        let mut sums = vec![0.0; k * dim];
        let mut counts = vec![0usize; k];
        for (p, &(c, _)) in points.chunks_exact(dim).zip(&assign) {
            counts[c] += 1;
            for (s, v) in sums[c * dim..(c + 1) * dim].iter_mut().zip(p) {
                *s += v;
            }
        }
        let mut taken = vec![false; n];
        let mut reseeded = false;
        for c in 0..k {
            if counts[c] == 0 {
                let far = (0..n)
                    .filter(|&i| !taken[i])
                    .max_by(|&a, &b| assign[a].1.total_cmp(&assign[b].1).then(b.cmp(&a)));
                if let Some(i) = far {
                    taken[i] = true;
                    sums[c * dim..(c + 1) * dim].copy_from_slice(&points[i * dim..(i + 1) * dim]);
                    counts[c] = 1;
                    reseeded = true;
                }
            }
        }
        let mut shift: f64 = 0.0;
        for c in 0..k {
            let inv = 1.0 / counts[c].max(1) as f64;
            let mut moved = 0.0;
            for (old, s) in centers[c * dim..(c + 1) * dim]
                .iter_mut()
                .zip(&sums[c * dim..(c + 1) * dim])
            {
                let new = s * inv;
                moved += (new - *old) * (new - *old);
                *old = new;
            }
            shift = shift.max(libm::sqrt(moved));
        }
        if shift <= TOLERANCE && !reseeded {
            break;
        }
    }
    centers
}
