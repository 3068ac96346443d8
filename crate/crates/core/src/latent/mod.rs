//! Latent Gaussian field: component structure matrices and assembly of the
//! joint prior precision `Q(θ)`.

mod assemble;
mod graph;
mod hyper;
mod structure;

use std::collections::BTreeMap;
use std::ops::Range;

pub use assemble::{assemble_prior, copy_extension, CopyMap, PriorAssembly};
pub use graph::Graph;
pub use hyper::{HyperParam, HyperPrior, HyperTransform};
pub use structure::{
    kronecker, structure_ar1, structure_besag, structure_rw1, structure_rw2, INTRINSIC_JITTER,
};

use crate::error::{Error, Result};

/// Default prior precision of fixed effects.
pub const DEFAULT_FIXED_PRIOR_PRECISION: f64 = 0.001;

#[derive(Debug, Clone, PartialEq)]
pub enum ComponentKind {
    Fixed,
    Iid,
    Rw1,
    Rw2,
    Besag(Graph),
    Ar1,
}

impl ComponentKind {
    pub fn label(&self) -> &'static str {
        match self {
            ComponentKind::Fixed => "fixed",
            ComponentKind::Iid => "iid",
            ComponentKind::Rw1 => "rw1",
            ComponentKind::Rw2 => "rw2",
            ComponentKind::Besag(_) => "besag",
            ComponentKind::Ar1 => "ar1",
        }
    }

    /// Dimension of the null space of the structure matrix.
    pub fn nullity(&self) -> usize {
        match self {
            ComponentKind::Rw1 => 1,
            ComponentKind::Rw2 => 2,
            ComponentKind::Besag(g) => g.n_components(),
            _ => 0,
        }
    }

    pub fn is_intrinsic(&self) -> bool {
        self.nullity() > 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Constraint {
    #[default]
    None,
    SumToZero,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CopyOf {
    pub source: String,
    pub beta: f64,
}

/// Kronecker grouping `Q_group(ρ) ⊗ Q_component` with an AR(1) group model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GroupSpec {
    pub size: usize,
    /// Hyper slot of the group correlation.
    pub rho: usize,
}

/// One latent component. Build with the kind-specific constructors.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentSpec {
    pub name: String,
    pub kind: ComponentKind,
    pub size: usize,
    /// Log-precision hyper slot; `None` only for fixed effects and copies.
    pub precision: Option<usize>,
    /// AR(1) correlation hyper slot.
    pub rho: Option<usize>,
    pub constraint: Constraint,
    pub replicate: usize,
    pub copy_of: Option<CopyOf>,
    pub group: Option<GroupSpec>,
}

impl ComponentSpec {
    fn base(name: impl Into<String>, kind: ComponentKind, size: usize, precision: Option<usize>) -> Self {
        ComponentSpec {
            name: name.into(),
            kind,
            size,
            precision,
            rho: None,
            constraint: Constraint::None,
            replicate: 1,
            copy_of: None,
            group: None,
        }
    }

    pub fn fixed(name: impl Into<String>) -> Self {
        Self::base(name, ComponentKind::Fixed, 1, None)
    }

    pub fn iid(name: impl Into<String>, size: usize, precision: usize) -> Self {
        Self::base(name, ComponentKind::Iid, size, Some(precision))
    }

    pub fn rw1(name: impl Into<String>, size: usize, precision: usize) -> Self {
        Self::base(name, ComponentKind::Rw1, size, Some(precision))
    }

    pub fn rw2(name: impl Into<String>, size: usize, precision: usize) -> Self {
        Self::base(name, ComponentKind::Rw2, size, Some(precision))
    }

    pub fn besag(name: impl Into<String>, graph: Graph, precision: usize) -> Self {
        let n = graph.n();
        Self::base(name, ComponentKind::Besag(graph), n, Some(precision))
    }

    pub fn ar1(name: impl Into<String>, size: usize, precision: usize, rho: usize) -> Self {
        let mut c = Self::base(name, ComponentKind::Ar1, size, Some(precision));
        c.rho = Some(rho);
        c
    }

    /// Re-use of `source` scaled by `beta`; contributes no latent variables.
    pub fn copy(name: impl Into<String>, source: impl Into<String>, beta: f64) -> Self {
        let mut c = Self::base(name, ComponentKind::Iid, 0, None);
        c.copy_of = Some(CopyOf {
            source: source.into(),
            beta,
        });
        c
    }

    pub fn with_constraint(mut self, constraint: Constraint) -> Self {
        self.constraint = constraint;
        self
    }

    pub fn with_replicate(mut self, replicate: usize) -> Self {
        self.replicate = replicate;
        self
    }

    pub fn with_group(mut self, size: usize, rho: usize) -> Self {
        self.group = Some(GroupSpec { size, rho });
        self
    }

    pub fn group_size(&self) -> usize {
        self.group.map_or(1, |g| g.size)
    }

    /// Number of latent variables this component owns.
    pub fn dim(&self) -> usize {
        if self.copy_of.is_some() {
            0
        } else {
            self.span()
        }
    }

    /// Size of the index space `replicate × group × size`; for a copy this is
    /// the index space of its source.
    pub fn span(&self) -> usize {
        self.size * self.group_size() * self.replicate
    }

    /// Position inside the index space; `index`, `group` and `replicate` are
    /// 0-based and replicate-major.
    pub fn local_index(&self, index: usize, group: usize, replicate: usize) -> usize {
        (replicate * self.group_size() + group) * self.size + index
    }
}

/// Ordered latent components plus the hyperparameter slots they refer to.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentModelSpec {
    components: Vec<ComponentSpec>,
    hypers: Vec<HyperParam>,
    fixed_prior_precision: f64,
    ranges: Vec<Range<usize>>,
    total_dim: usize,
}

impl LatentModelSpec {
    pub fn new(
        mut components: Vec<ComponentSpec>,
        hypers: Vec<HyperParam>,
        fixed_prior_precision: f64,
    ) -> Result<Self> {
        if !(fixed_prior_precision > 0.0) {
            return Err(Error::DomainError(format!(
                "fixed effect prior precision must be positive, got {fixed_prior_precision}"
            )));
        }
        let slot = |s: usize| -> Result<()> {
            if s >= hypers.len() {
                Err(Error::UnknownHyperSlot {
                    slot: s,
                    len: hypers.len(),
                })
            } else {
                Ok(())
            }
        };
        let mut names = BTreeMap::new();
        for (k, c) in components.iter().enumerate() {
            if names.insert(c.name.clone(), k).is_some() {
                return Err(Error::DomainError(format!("duplicate component name `{}`", c.name)));
            }
        }
        // copies take the size of their source; sources must come first
        for k in 0..components.len() {
            let Some(copy) = components[k].copy_of.clone() else {
                continue;
            };
            match names.get(&copy.source) {
                Some(&src) if src < k && components[src].copy_of.is_none() => {
                    components[k].size = components[src].size;
                    components[k].group = components[src].group;
                    components[k].replicate = components[src].replicate;
                }
                Some(_) => return Err(Error::CycleInCopy(components[k].name.clone())),
                None => return Err(Error::UnknownComponent(copy.source)),
            }
        }
        for c in &components {
            if c.copy_of.is_some() {
                continue;
            }
            if c.size == 0 || c.replicate == 0 {
                return Err(Error::SizeTooSmall {
                    kind: c.kind.label(),
                    min: 1,
                    got: c.size.min(c.replicate),
                });
            }
            match c.kind {
                ComponentKind::Fixed => {
                    if c.group.is_some() {
                        return Err(Error::DomainError(format!("fixed effect `{}` cannot be grouped", c.name)));
                    }
                }
                _ => slot(c.precision.ok_or_else(|| {
                    Error::DomainError(format!("component `{}` needs a precision slot", c.name))
                })?)?,
            }
            match c.kind {
                ComponentKind::Rw1 if c.size < 2 => {
                    return Err(Error::SizeTooSmall {
                        kind: "rw1",
                        min: 2,
                        got: c.size,
                    })
                }
                ComponentKind::Rw2 if c.size < 3 => {
                    return Err(Error::SizeTooSmall {
                        kind: "rw2",
                        min: 3,
                        got: c.size,
                    })
                }
                ComponentKind::Besag(ref g) => {
                    g.validate()?;
                    if g.n() != c.size {
                        return Err(Error::DimensionMismatch {
                            expected: g.n(),
                            found: c.size,
                        });
                    }
                }
                ComponentKind::Ar1 => slot(c.rho.ok_or_else(|| {
                    Error::DomainError(format!("ar1 component `{}` needs a correlation slot", c.name))
                })?)?,
                _ => {}
            }
            if let Some(g) = c.group {
                slot(g.rho)?;
                if g.size == 0 {
                    return Err(Error::SizeTooSmall {
                        kind: "group",
                        min: 1,
                        got: 0,
                    });
                }
            }
        }

        let mut ranges = Vec::with_capacity(components.len());
        let mut off = 0;
        for c in &components {
            ranges.push(off..off + c.dim());
            off += c.dim();
        }
        Ok(LatentModelSpec {
            components,
            hypers,
            fixed_prior_precision,
            ranges,
            total_dim: off,
        })
    }

    pub fn components(&self) -> &[ComponentSpec] {
        &self.components
    }

    pub fn hypers(&self) -> &[HyperParam] {
        &self.hypers
    }

    pub fn fixed_prior_precision(&self) -> f64 {
        self.fixed_prior_precision
    }

    pub fn total_dim(&self) -> usize {
        self.total_dim
    }

    /// Latent index range of each component, in declaration order. Copies
    /// have empty ranges.
    pub fn ranges(&self) -> &[Range<usize>] {
        &self.ranges
    }

    pub fn component(&self, name: &str) -> Option<(usize, &ComponentSpec)> {
        self.components.iter().enumerate().find(|(_, c)| c.name == name)
    }

    pub fn index_map(&self) -> BTreeMap<String, Range<usize>> {
        self.components
            .iter()
            .zip(&self.ranges)
            .map(|(c, r)| (c.name.clone(), r.clone()))
            .collect()
    }

    /// Hyper values with every fixed slot set to its fixed value and the
    /// free slots filled from `free` in order.
    pub fn expand_theta(&self, free: &[f64]) -> Result<Vec<f64>> {
        let n_free = self.free_slots().len();
        if free.len() != n_free {
            return Err(Error::DimensionMismatch {
                expected: n_free,
                found: free.len(),
            });
        }
        let mut it = free.iter();
        Ok(self
            .hypers
            .iter()
            .map(|h| if h.fixed { h.initial } else { *it.next().expect("counted") })
            .collect())
    }

    /// Indices of hyper slots that are integrated over.
    pub fn free_slots(&self) -> Vec<usize> {
        (0..self.hypers.len()).filter(|&k| !self.hypers[k].fixed).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranges_cover_total_dim() {
        let spec = LatentModelSpec::new(
            vec![
                ComponentSpec::fixed("intercept"),
                ComponentSpec::iid("u", 3, 0).with_replicate(2),
                ComponentSpec::copy("w", "u", 2.0),
                ComponentSpec::rw1("t", 4, 1).with_group(3, 2),
                ComponentSpec::copy("t2", "t", 0.5),
            ],
            vec![
                HyperParam::log_precision("prec_u"),
                HyperParam::log_precision("prec_t"),
                HyperParam::correlation("rho_t"),
            ],
            DEFAULT_FIXED_PRIOR_PRECISION,
        )
        .unwrap();
        assert_eq!(spec.total_dim(), 1 + 6 + 12);
        assert_eq!(spec.ranges()[2], 7..7);
        assert_eq!(spec.ranges()[3], 7..19);
        assert_eq!(spec.components()[2].size, 3);
        assert_eq!(spec.components()[2].span(), 6);
        assert_eq!(spec.components()[4].span(), 12);
        assert_eq!(spec.components()[3].local_index(1, 2, 0), 9);
    }

    #[test]
    fn copy_validation() {
        let h = vec![HyperParam::log_precision("p")];
        let forward = LatentModelSpec::new(
            vec![ComponentSpec::copy("w", "u", 1.0), ComponentSpec::iid("u", 2, 0)],
            h.clone(),
            1.0,
        );
        assert!(matches!(forward, Err(Error::CycleInCopy(_))));
        let selfref = LatentModelSpec::new(vec![ComponentSpec::copy("w", "w", 1.0)], h.clone(), 1.0);
        assert!(matches!(selfref, Err(Error::CycleInCopy(_))));
        let missing = LatentModelSpec::new(vec![ComponentSpec::copy("w", "zz", 1.0)], h, 1.0);
        assert!(matches!(missing, Err(Error::UnknownComponent(_))));
    }

    #[test]
    fn unknown_slot_is_rejected() {
        let r = LatentModelSpec::new(vec![ComponentSpec::iid("u", 2, 3)], vec![], 1.0);
        assert!(matches!(r, Err(Error::UnknownHyperSlot { slot: 3, len: 0 })));
    }
}
