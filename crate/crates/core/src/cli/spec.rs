use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::latent::{
    ComponentSpec, Constraint, Graph, HyperParam, HyperPrior, HyperTransform, LatentModelSpec,
    DEFAULT_FIXED_PRIOR_PRECISION,
};
use crate::likelihood::Family;

pub const SCHEMA_VERSION: u32 = 1;
/// Bins used when a random component is indexed by a binned covariate.
pub const DEFAULT_BINS: usize = 25;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelDoc {
    schema: u32,
    likelihoods: Vec<LikelihoodDoc>,
    #[serde(default)]
    hyper: Vec<HyperDoc>,
    components: Vec<ComponentDoc>,
    #[serde(default)]
    graphs: BTreeMap<String, PathBuf>,
    #[serde(default)]
    ntrials: Option<String>,
    #[serde(default)]
    offset: Option<String>,
    #[serde(default)]
    fixed_prior_precision: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct LikelihoodDoc {
    family: String,
    response: String,
    #[serde(default)]
    precision: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct HyperDoc {
    name: String,
    #[serde(default)]
    transform: Option<HyperTransform>,
    #[serde(default)]
    prior: Option<HyperPrior>,
    /// Starting value on the natural scale.
    #[serde(default)]
    initial: Option<f64>,
    /// Fixed value on the natural scale.
    #[serde(default)]
    fixed: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ComponentDoc {
    name: String,
    #[serde(default)]
    model: Option<String>,
    #[serde(default)]
    index: Option<String>,
    #[serde(default)]
    covariate: Option<String>,
    #[serde(default)]
    bins: Option<usize>,
    #[serde(default)]
    size: Option<usize>,
    #[serde(default)]
    weight: Option<String>,
    #[serde(default)]
    graph: Option<String>,
    #[serde(default)]
    precision: Option<String>,
    #[serde(default)]
    rho: Option<String>,
    #[serde(default)]
    constr: bool,
    #[serde(default)]
    replicate: Option<ReplicateDoc>,
    #[serde(default)]
    group: Option<GroupDoc>,
    #[serde(default)]
    copy: Option<String>,
    #[serde(default)]
    beta: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ReplicateDoc {
    index: String,
    #[serde(default)]
    count: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct GroupDoc {
    index: String,
    #[serde(default)]
    size: Option<usize>,
    #[serde(default)]
    model: Option<String>,
    #[serde(default)]
    rho: Option<String>,
}

/// Where the per-row value of a term comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum TermSource {
    /// Constant 1 on every row.
    Intercept,
    /// Fixed-effect slope on a numeric column.
    Covariate(String),
    /// 1-based integer index column.
    Index(String),
    /// Covariate cut into equal-width bins; the bin number is the index.
    Binned { column: String, bins: usize },
}

/// One additive term of the linear predictor: a block of latent columns
/// and how a data row selects one of them.
#[derive(Debug, Clone, PartialEq)]
pub struct Term {
    pub component: String,
    /// First latent column of the block (the source block for a copy).
    pub start: usize,
    pub scale: f64,
    pub source: TermSource,
    pub weight: Option<String>,
    pub size: usize,
    /// Group index column and group count.
    pub group: Option<(String, usize)>,
    /// Replicate index column and replicate count.
    pub replicate: Option<(String, usize)>,
}

impl Term {
    /// Latent column for 0-based `(index, group, replicate)`.
    pub fn column(&self, index: usize, group: usize, replicate: usize) -> usize {
        let g = self.group.as_ref().map_or(1, |g| g.1);
        self.start + (replicate * g + group) * self.size + index
    }
}

/// Everything the data loader needs besides the latent model.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationTemplate {
    pub families: Vec<Family>,
    /// Response column per family.
    pub responses: Vec<String>,
    pub ntrials: Option<String>,
    pub offset: Option<String>,
    pub terms: Vec<Term>,
}

/// A validated model document.
#[derive(Debug, Clone)]
pub struct ModelSpec {
    pub latent: LatentModelSpec,
    pub template: ObservationTemplate,
    /// Resolved graph files by name.
    pub graph_files: BTreeMap<String, PathBuf>,
}

/// Parse a model document. Graph paths are resolved against `base_dir`.
pub fn parse_model_spec(text: &str, base_dir: &Path) -> Result<ModelSpec> {
    parse_model_spec_with(text, base_dir, &BTreeMap::new())
}

/// Read and parse a model file; `graph_overrides` replaces graph paths
/// named in the document.
pub fn read_model_spec(path: &Path, graph_overrides: &BTreeMap<String, PathBuf>) -> Result<ModelSpec> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse_model_spec_with(&text, base, graph_overrides)
}

/// [`parse_model_spec`] with graph paths taken from `graph_overrides`
/// where present.
pub fn parse_model_spec_with(
    text: &str,
    base_dir: &Path,
    graph_overrides: &BTreeMap<String, PathBuf>,
) -> Result<ModelSpec> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let doc: ModelDoc = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        Error::schema(if path == "." { "$".into() } else { path }, e.into_inner().to_string())
    })?;
    Builder::default().build(doc, base_dir, graph_overrides)
}

#[derive(Default)]
struct Builder {
    hypers: Vec<HyperParam>,
    by_name: BTreeMap<String, usize>,
    declared: BTreeMap<String, HyperDoc>,
}

impl Builder {
    fn build(
        mut self,
        doc: ModelDoc,
        base_dir: &Path,
        graph_overrides: &BTreeMap<String, PathBuf>,
    ) -> Result<ModelSpec> {
        if doc.schema != SCHEMA_VERSION {
            return Err(Error::schema(
                "schema",
                format!("unsupported schema version {}, expected {SCHEMA_VERSION}", doc.schema),
            ));
        }
        if doc.likelihoods.is_empty() {
            return Err(Error::schema("likelihoods", "at least one likelihood is required"));
        }
        if doc.components.is_empty() {
            return Err(Error::schema("components", "at least one component is required"));
        }
        for (k, h) in doc.hyper.into_iter().enumerate() {
            if self.declared.contains_key(&h.name) {
                return Err(Error::schema(format!("hyper[{k}].name"), format!("duplicate hyperparameter `{}`", h.name)));
            }
            self.declared.insert(h.name.clone(), h);
        }

        let mut families = Vec::new();
        let mut responses = Vec::new();
        for (k, l) in doc.likelihoods.iter().enumerate() {
            let path = format!("likelihoods[{k}]");
            let family = match l.family.as_str() {
                "gaussian" => {
                    let name = l.precision.clone().unwrap_or_else(|| format!("precision_{}", l.response));
                    Family::Gaussian {
                        precision: self.slot(&name, HyperTransform::LogPrecision, &format!("{path}.precision"))?,
                    }
                }
                "poisson" | "binomial" if l.precision.is_some() => {
                    return Err(Error::schema(
                        format!("{path}.precision"),
                        format!("family `{}` has no precision", l.family),
                    ))
                }
                "poisson" => Family::Poisson,
                "binomial" => Family::Binomial,
                other => return Err(Error::UnsupportedFamily(other.to_string())),
            };
            if responses.contains(&l.response) {
                return Err(Error::schema(
                    format!("{path}.response"),
                    format!("column `{}` is used by two likelihoods", l.response),
                ));
            }
            families.push(family);
            responses.push(l.response.clone());
        }

        let mut graphs: BTreeMap<String, PathBuf> = doc
            .graphs
            .iter()
            .map(|(name, p)| (name.clone(), base_dir.join(p)))
            .collect();
        for (name, p) in graph_overrides {
            graphs.insert(name.clone(), p.clone());
        }

        let mut components = Vec::new();
        let mut sources = Vec::new();
        for (k, c) in doc.components.iter().enumerate() {
            let path = format!("components[{k}]");
            let (spec, source) = if c.copy.is_some() {
                self.copy_component(c, &path)?
            } else {
                self.component(c, &path, &graphs)?
            };
            components.push(spec);
            sources.push(source);
        }

        for name in self.declared.keys() {
            if !self.by_name.contains_key(name) {
                return Err(Error::schema("hyper", format!("hyperparameter `{name}` is declared but never used")));
            }
        }

        let latent = LatentModelSpec::new(
            components,
            self.hypers,
            doc.fixed_prior_precision.unwrap_or(DEFAULT_FIXED_PRIOR_PRECISION),
        )?;
        let terms = terms(&latent, &doc.components, sources)?;
        Ok(ModelSpec {
            latent,
            template: ObservationTemplate {
                families,
                responses,
                ntrials: doc.ntrials,
                offset: doc.offset,
                terms,
            },
            graph_files: graphs,
        })
    }

    /// Hyper slot for `name`, created on first reference.
    fn slot(&mut self, name: &str, transform: HyperTransform, path: &str) -> Result<usize> {
        if let Some(&s) = self.by_name.get(name) {
            if self.hypers[s].transform != transform {
                return Err(Error::schema(path, format!("hyperparameter `{name}` is used with two different roles")));
            }
            return Ok(s);
        }
        let mut h = match transform {
            HyperTransform::LogPrecision => HyperParam::log_precision(name),
            HyperTransform::LogitCorrelation => HyperParam::correlation(name),
        };
        if let Some(d) = self.declared.get(name) {
            if d.transform.is_some_and(|t| t != transform) {
                return Err(Error::schema(path, format!("hyperparameter `{name}` is declared with another transform")));
            }
            if let Some(p) = d.prior {
                if !p.is_valid() {
                    return Err(Error::schema(format!("hyper.{name}.prior"), "invalid prior parameters"));
                }
                h = h.with_prior(p);
            }
            let internal = |v: f64, field: &str| -> Result<f64> {
                let t = transform.to_internal(v);
                if t.is_finite() {
                    Ok(t)
                } else {
                    Err(Error::schema(format!("hyper.{name}.{field}"), format!("{v} is outside the parameter range")))
                }
            };
            if let Some(v) = d.initial {
                h = h.with_initial(internal(v, "initial")?);
            }
            if let Some(v) = d.fixed {
                h = h.fixed_at(internal(v, "fixed")?);
            }
        }
        self.hypers.push(h);
        self.by_name.insert(name.to_string(), self.hypers.len() - 1);
        Ok(self.hypers.len() - 1)
    }

    fn component(
        &mut self,
        c: &ComponentDoc,
        path: &str,
        graphs: &BTreeMap<String, PathBuf>,
    ) -> Result<(ComponentSpec, TermSource)> {
        let model = c
            .model
            .as_deref()
            .ok_or_else(|| Error::schema(format!("{path}.model"), "missing field `model`"))?;
        if c.beta.is_some() {
            return Err(Error::schema(format!("{path}.beta"), "`beta` only applies to copies"));
        }
        if model == "fixed" {
            for (set, field) in [
                (c.index.is_some(), "index"),
                (c.bins.is_some(), "bins"),
                (c.size.is_some(), "size"),
                (c.weight.is_some(), "weight"),
                (c.graph.is_some(), "graph"),
                (c.precision.is_some(), "precision"),
                (c.rho.is_some(), "rho"),
                (c.constr, "constr"),
                (c.replicate.is_some(), "replicate"),
                (c.group.is_some(), "group"),
            ] {
                if set {
                    return Err(Error::schema(format!("{path}.{field}"), "not allowed for a fixed effect"));
                }
            }
            let source = c
                .covariate
                .clone()
                .map_or(TermSource::Intercept, TermSource::Covariate);
            return Ok((ComponentSpec::fixed(&c.name), source));
        }
        if !matches!(model, "iid" | "rw1" | "rw2" | "besag" | "ar1") {
            return Err(Error::UnknownModelKind(model.to_string()));
        }

        let source = match (&c.index, &c.covariate) {
            (Some(i), None) => {
                if c.bins.is_some() {
                    return Err(Error::schema(format!("{path}.bins"), "`bins` needs `covariate`"));
                }
                TermSource::Index(i.clone())
            }
            (None, Some(col)) => {
                let bins = c.bins.unwrap_or(DEFAULT_BINS);
                if bins == 0 {
                    return Err(Error::schema(format!("{path}.bins"), "need at least one bin"));
                }
                TermSource::Binned {
                    column: col.clone(),
                    bins,
                }
            }
            (Some(_), Some(_)) => {
                return Err(Error::schema(format!("{path}.covariate"), "give either `index` or `covariate`, not both"))
            }
            (None, None) => return Err(Error::schema(format!("{path}.index"), "missing field `index`")),
        };

        let graph = match (model, &c.graph) {
            ("besag", Some(name)) => {
                let file = graphs.get(name).ok_or_else(|| {
                    Error::schema(format!("{path}.graph"), format!("graph `{name}` is not listed under `graphs`"))
                })?;
                if !file.is_file() {
                    return Err(Error::MissingGraphFile {
                        name: name.clone(),
                        path: file.clone(),
                    });
                }
                Some(Graph::from_file(file)?)
            }
            ("besag", None) => return Err(Error::schema(format!("{path}.graph"), "besag needs a graph")),
            (_, Some(_)) => return Err(Error::schema(format!("{path}.graph"), format!("{model} takes no graph"))),
            (_, None) => None,
        };
        if model != "ar1" && c.rho.is_some() {
            return Err(Error::schema(format!("{path}.rho"), format!("{model} has no correlation")));
        }

        let size = match (&source, &graph, c.size) {
            (_, Some(g), Some(s)) if s != g.n() => {
                return Err(Error::schema(
                    format!("{path}.size"),
                    format!("size {s} disagrees with the graph's {} nodes", g.n()),
                ))
            }
            (_, Some(g), _) => g.n(),
            (TermSource::Binned { bins, .. }, None, Some(s)) if s != *bins => {
                return Err(Error::schema(format!("{path}.size"), format!("size {s} disagrees with {bins} bins")))
            }
            (TermSource::Binned { bins, .. }, None, _) => *bins,
            (_, None, Some(s)) => s,
            (_, None, None) => return Err(Error::schema(format!("{path}.size"), "missing field `size`")),
        };

        let prec_name = c.precision.clone().unwrap_or_else(|| format!("precision_{}", c.name));
        let prec = self.slot(&prec_name, HyperTransform::LogPrecision, &format!("{path}.precision"))?;
        let mut spec = match (model, graph) {
            ("iid", _) => ComponentSpec::iid(&c.name, size, prec),
            ("rw1", _) => ComponentSpec::rw1(&c.name, size, prec),
            ("rw2", _) => ComponentSpec::rw2(&c.name, size, prec),
            ("besag", Some(g)) => ComponentSpec::besag(&c.name, g, prec),
            _ => {
                let rho_name = c.rho.clone().unwrap_or_else(|| format!("rho_{}", c.name));
                let rho = self.slot(&rho_name, HyperTransform::LogitCorrelation, &format!("{path}.rho"))?;
                ComponentSpec::ar1(&c.name, size, prec, rho)
            }
        };
        if c.constr {
            spec = spec.with_constraint(Constraint::SumToZero);
        }
        if let Some(r) = &c.replicate {
            let count = r
                .count
                .ok_or_else(|| Error::schema(format!("{path}.replicate.count"), "missing field `count`"))?;
            spec = spec.with_replicate(count);
        }
        if let Some(g) = &c.group {
            let model = g.model.as_deref().unwrap_or("ar1");
            if model != "ar1" {
                return Err(Error::UnknownModelKind(format!("group model {model}")));
            }
            let size = g
                .size
                .ok_or_else(|| Error::schema(format!("{path}.group.size"), "missing field `size`"))?;
            let rho_name = g.rho.clone().unwrap_or_else(|| format!("group_rho_{}", c.name));
            let rho = self.slot(&rho_name, HyperTransform::LogitCorrelation, &format!("{path}.group.rho"))?;
            spec = spec.with_group(size, rho);
        }
        Ok((spec, source))
    }

    fn copy_component(&mut self, c: &ComponentDoc, path: &str) -> Result<(ComponentSpec, TermSource)> {
        for (set, field) in [
            (c.model.is_some(), "model"),
            (c.covariate.is_some(), "covariate"),
            (c.bins.is_some(), "bins"),
            (c.size.is_some(), "size"),
            (c.graph.is_some(), "graph"),
            (c.precision.is_some(), "precision"),
            (c.rho.is_some(), "rho"),
            (c.constr, "constr"),
            (c.replicate.as_ref().is_some_and(|r| r.count.is_some()), "replicate.count"),
            (c.group.as_ref().is_some_and(|g| g.size.is_some()), "group.size"),
            (c.group.as_ref().is_some_and(|g| g.model.is_some()), "group.model"),
            (c.group.as_ref().is_some_and(|g| g.rho.is_some()), "group.rho"),
        ] {
            if set {
                return Err(Error::schema(format!("{path}.{field}"), "a copy inherits this from its source"));
            }
        }
        let index = c
            .index
            .clone()
            .ok_or_else(|| Error::schema(format!("{path}.index"), "missing field `index`"))?;
        let source = c.copy.clone().expect("copy component");
        let beta = c.beta.unwrap_or(1.0);
        if !beta.is_finite() {
            return Err(Error::schema(format!("{path}.beta"), "must be finite"));
        }
        Ok((ComponentSpec::copy(&c.name, source, beta), TermSource::Index(index)))
    }
}

/// Predictor terms once the latent layout is known. Copies use the index
/// space of their source; their group and replicate columns default to the
/// source's.
fn terms(latent: &LatentModelSpec, docs: &[ComponentDoc], sources: Vec<TermSource>) -> Result<Vec<Term>> {
    let comps = latent.components();
    let ranges = latent.ranges();
    docs.iter()
        .zip(sources)
        .enumerate()
        .map(|(k, (doc, source))| {
            let (owner, odoc) = match &comps[k].copy_of {
                Some(copy) => {
                    let (s, _) = latent.component(&copy.source).expect("validated copy source");
                    (s, &docs[s])
                }
                None => (k, doc),
            };
            let spec = &comps[owner];
            if owner != k && (doc.group.is_some() && spec.group.is_none() || doc.replicate.is_some() && odoc.replicate.is_none()) {
                return Err(Error::schema(
                    format!("components[{k}]"),
                    format!("copy `{}` sets group or replicate columns its source does not have", doc.name),
                ));
            }
            let group = spec.group.map(|g| {
                let col = doc.group.as_ref().or(odoc.group.as_ref()).expect("grouped component").index.clone();
                (col, g.size)
            });
            let replicate = (odoc.replicate.is_some()).then(|| {
                let col = doc.replicate.as_ref().or(odoc.replicate.as_ref()).expect("replicated").index.clone();
                (col, spec.replicate)
            });
            Ok(Term {
                component: doc.name.clone(),
                start: ranges[owner].start,
                scale: comps[k].copy_of.as_ref().map_or(1.0, |c| c.beta),
                source,
                weight: doc.weight.clone(),
                size: spec.size,
                group,
                replicate,
            })
        })
        .collect()
}
