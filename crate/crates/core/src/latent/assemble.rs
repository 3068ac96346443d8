use nalgebra::DMatrix;

use super::{structure_ar1, structure_besag, structure_rw1, structure_rw2, ComponentKind, Constraint};
use super::{LatentModelSpec, INTRINSIC_JITTER};
use crate::error::{Error, Result};
use crate::sparse::SparsePrecision;

/// Joint latent prior at one hyperparameter value.
#[derive(Debug, Clone)]
pub struct PriorAssembly {
    pub q: SparsePrecision,
    pub mean: Vec<f64>,
    /// Added to `log det Q`: removes the scaling of the jittered null-space
    /// directions that no constraint pins down, so the prior scales with the
    /// rank of the intrinsic structure.
    pub logdet_correction: f64,
    /// Linear constraints `C x = 0`, one row per constraint (k × n).
    pub constraints: DMatrix<f64>,
}

/// Assemble the block-diagonal prior precision for hyper values `theta`
/// (internal scale, one entry per hyper slot).
pub fn assemble_prior(spec: &LatentModelSpec, theta: &[f64]) -> Result<PriorAssembly> {
    let hypers = spec.hypers();
    if theta.len() != hypers.len() {
        return Err(Error::DimensionMismatch {
            expected: hypers.len(),
            found: theta.len(),
        });
    }
    let natural = |slot: usize| hypers[slot].transform.to_natural(theta[slot]);

    let n = spec.total_dim();
    let mut blocks: Vec<SparsePrecision> = Vec::new();
    let mut logdet_correction = 0.0;
    let mut constraint_rows: Vec<Vec<(usize, f64)>> = Vec::new();

    for (c, range) in spec.components().iter().zip(spec.ranges()) {
        if c.copy_of.is_some() {
            continue;
        }
        if c.kind == ComponentKind::Fixed {
            blocks.push(SparsePrecision::diagonal(&vec![spec.fixed_prior_precision(); c.dim()]));
        } else {
            let slot = c.precision.expect("validated");
            let log_tau = theta[slot];
            let structure = match &c.kind {
                ComponentKind::Iid => SparsePrecision::identity(c.size),
                ComponentKind::Rw1 => structure_rw1(c.size)?.with_added_diagonal(INTRINSIC_JITTER),
                ComponentKind::Rw2 => structure_rw2(c.size)?.with_added_diagonal(INTRINSIC_JITTER),
                ComponentKind::Besag(g) => structure_besag(g)?.with_added_diagonal(INTRINSIC_JITTER),
                ComponentKind::Ar1 => structure_ar1(c.size, natural(c.rho.expect("validated")))?,
                ComponentKind::Fixed => unreachable!(),
            };
            let (block, group_logdet) = match c.group {
                Some(g) => {
                    let rho = natural(g.rho);
                    let qg = structure_ar1(g.size, rho)?;
                    (qg.kronecker(&structure), ar1_logdet(g.size, rho))
                }
                None => (structure, 0.0),
            };
            let block = block.scaled(log_tau.exp());
            for _ in 0..c.replicate {
                blocks.push(block.clone());
            }

            let pinned = usize::from(c.constraint == Constraint::SumToZero);
            let free_null = c.kind.nullity().saturating_sub(pinned);
            logdet_correction -=
                (free_null * c.replicate) as f64 * (c.group_size() as f64 * log_tau + group_logdet);
        }

        if c.constraint == Constraint::SumToZero {
            for r in 0..c.replicate {
                for g in 0..c.group_size() {
                    let start = range.start + c.local_index(0, g, r);
                    constraint_rows.push((start..start + c.size).map(|j| (j, 1.0)).collect());
                }
            }
        }
    }

    let refs: Vec<&SparsePrecision> = blocks.iter().collect();
    let q = SparsePrecision::block_diag(&refs);
    debug_assert_eq!(q.n(), n);
    let mut constraints = DMatrix::zeros(constraint_rows.len(), n);
    for (k, row) in constraint_rows.iter().enumerate() {
        for &(j, v) in row {
            constraints[(k, j)] = v;
        }
    }
    Ok(PriorAssembly {
        q,
        mean: vec![0.0; n],
        logdet_correction,
        constraints,
    })
}

/// `log det` of the unit-variance AR(1) precision: `−(n − 1) log(1 − φ²)`.
fn ar1_logdet(n: usize, phi: f64) -> f64 {
    -((n - 1) as f64) * (1.0 - phi * phi).ln()
}

/// How a copy component maps its predictor slots onto its source.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CopyMap {
    /// Index of the copy component.
    pub component: usize,
    /// Index of the source component.
    pub source: usize,
    /// First latent index of the source.
    pub source_start: usize,
    pub beta: f64,
}

impl CopyMap {
    /// Observation-matrix column and weight for a copy slot.
    pub fn column(&self, local: usize) -> (usize, f64) {
        (self.source_start + local, self.beta)
    }
}

/// Observation-matrix augmentation for every copy component.
pub fn copy_extension(spec: &LatentModelSpec) -> Result<Vec<CopyMap>> {
    let mut out = Vec::new();
    for (k, c) in spec.components().iter().enumerate() {
        let Some(copy) = &c.copy_of else { continue };
        let (src, sc) = spec
            .component(&copy.source)
            .ok_or_else(|| Error::UnknownComponent(copy.source.clone()))?;
        if src >= k || sc.copy_of.is_some() {
            return Err(Error::CycleInCopy(c.name.clone()));
        }
        out.push(CopyMap {
            component: k,
            source: src,
            source_start: spec.ranges()[src].start,
            beta: copy.beta,
        });
    }
    Ok(out)
}
