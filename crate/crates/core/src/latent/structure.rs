use super::Graph;
use crate::error::{Error, Result};
use crate::sparse::SparsePrecision;

/// Diagonal jitter added to intrinsic structure matrices before scaling.
pub const INTRINSIC_JITTER: f64 = 1e-5;

/// `DᵀD` for a banded difference operator given by its stencil.
fn difference_gram(n: usize, stencil: &[f64]) -> SparsePrecision {
    let w = stencil.len();
    let mut trip = Vec::with_capacity((n - w + 1) * w * (w + 1) / 2);
    for r in 0..=(n - w) {
        for a in 0..w {
            for b in 0..=a {
                trip.push((r + a, r + b, stencil[a] * stencil[b]));
            }
        }
    }
    SparsePrecision::from_triplets(n, &trip).expect("indices in range")
}

/// First-order random walk: `DᵀD` with `D` the first-difference matrix.
pub fn structure_rw1(n: usize) -> Result<SparsePrecision> {
    if n < 2 {
        return Err(Error::SizeTooSmall {
            kind: "rw1",
            min: 2,
            got: n,
        });
    }
    Ok(difference_gram(n, &[-1.0, 1.0]))
}

/// Second-order random walk: `DᵀD` with `D` the second-difference matrix.
pub fn structure_rw2(n: usize) -> Result<SparsePrecision> {
    if n < 3 {
        return Err(Error::SizeTooSmall {
            kind: "rw2",
            min: 3,
            got: n,
        });
    }
    Ok(difference_gram(n, &[1.0, -2.0, 1.0]))
}

/// Besag structure: degree matrix minus adjacency matrix.
pub fn structure_besag(graph: &Graph) -> Result<SparsePrecision> {
    graph.validate()?;
    let n = graph.n();
    if n < 2 {
        return Err(Error::SizeTooSmall {
            kind: "besag",
            min: 2,
            got: n,
        });
    }
    let mut trip = Vec::new();
    for (i, nbrs) in graph.neighbours().iter().enumerate() {
        trip.push((i, i, nbrs.len() as f64));
        trip.extend(nbrs.iter().filter(|&&j| j < i).map(|&j| (i, j, -1.0)));
    }
    SparsePrecision::from_triplets(n, &trip)
}

/// Precision of a stationary AR(1) process with unit marginal variance.
pub fn structure_ar1(n: usize, phi: f64) -> Result<SparsePrecision> {
    if n < 1 {
        return Err(Error::SizeTooSmall {
            kind: "ar1",
            min: 1,
            got: n,
        });
    }
    if !(phi.abs() < 1.0) {
        return Err(Error::InvalidCorrelation(phi));
    }
    if n == 1 {
        return Ok(SparsePrecision::identity(1));
    }
    let s = 1.0 / (1.0 - phi * phi);
    let mut trip = Vec::with_capacity(2 * n);
    for i in 0..n {
        let d = if i == 0 || i == n - 1 { 1.0 } else { 1.0 + phi * phi };
        trip.push((i, i, s * d));
        if i > 0 && phi != 0.0 {
            trip.push((i, i - 1, -s * phi));
        }
    }
    SparsePrecision::from_triplets(n, &trip)
}

/// `Qa ⊗ Qb`.
pub fn kronecker(qa: &SparsePrecision, qb: &SparsePrecision) -> SparsePrecision {
    qa.kronecker(qb)
}
