use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use csv::StringRecord;

use super::spec::{ModelSpec, Term, TermSource};
use crate::error::{Error, Result};
use crate::likelihood::{Family, ObservationModel};
use crate::sparse::SparseMatrix;

/// Missing-value sentinel in data files.
pub const NA: &str = "NA";

/// Observation model built from a data file, plus the bin edges of every
/// binned covariate.
#[derive(Debug, Clone)]
pub struct LoadedData {
    pub obs: ObservationModel,
    /// `bins + 1` equal-width edges per binned component.
    pub bins: BTreeMap<String, Vec<f64>>,
}

pub fn load_data(path: &Path, spec: &ModelSpec) -> Result<LoadedData> {
    let file = std::fs::File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    load_data_from_reader(file, spec)
}

/// Comma-separated data with a header row. `"NA"` marks a missing value;
/// rows are reported 1-based, counting data rows only.
pub fn load_data_from_reader<R: Read>(reader: R, spec: &ModelSpec) -> Result<LoadedData> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr.headers()?.clone();
    let records = rdr.records().collect::<std::result::Result<Vec<_>, _>>()?;
    let table = Table { header, records };
    let tpl = &spec.template;
    let n = table.records.len();

    let mut y_matrix = vec![vec![None; tpl.families.len()]; n];
    for (f, col) in tpl.responses.iter().enumerate() {
        for (r, v) in table.column(col)?.into_iter().enumerate() {
            y_matrix[r][f] = v;
        }
    }

    let ntrials = match &tpl.ntrials {
        None => vec![1.0; n],
        Some(col) => {
            let values = table.column(col)?;
            let mut out = Vec::with_capacity(n);
            for (r, v) in values.into_iter().enumerate() {
                let binomial_row = y_matrix[r]
                    .iter()
                    .zip(&tpl.families)
                    .any(|(y, f)| y.is_some() && *f == Family::Binomial);
                match v {
                    Some(v) => out.push(v),
                    None if binomial_row => return Err(table.bad(r, col)),
                    None => out.push(1.0),
                }
            }
            out
        }
    };
    let offset = match &tpl.offset {
        None => vec![0.0; n],
        Some(col) => table.column(col)?.into_iter().map(|v| v.unwrap_or(0.0)).collect(),
    };

    let mut triplets = Vec::new();
    let mut bins = BTreeMap::new();
    for term in &tpl.terms {
        add_term(&table, term, &mut triplets, &mut bins)?;
    }
    let a = SparseMatrix::from_triplets(n, spec.latent.total_dim(), &triplets)?;
    let obs = ObservationModel::new(tpl.families.clone(), y_matrix, ntrials, offset, a).map_err(|e| match e {
        Error::ResponseOverlap { row } => Error::ResponseOverlap { row: row + 1 },
        Error::Row { row, source } => Error::Row { row: row + 1, source },
        e => e,
    })?;
    Ok(LoadedData { obs, bins })
}

struct Table {
    header: StringRecord,
    records: Vec<StringRecord>,
}

impl Table {
    fn position(&self, col: &str) -> Result<usize> {
        self.header
            .iter()
            .position(|h| h == col)
            .ok_or_else(|| Error::schema(format!("data.{col}"), "column not found in the header"))
    }

    /// Numeric column with `NA` as `None`.
    fn column(&self, col: &str) -> Result<Vec<Option<f64>>> {
        let j = self.position(col)?;
        self.records
            .iter()
            .enumerate()
            .map(|(r, rec)| {
                let s = rec.get(j).unwrap_or("");
                if s == NA {
                    return Ok(None);
                }
                match s.parse::<f64>() {
                    Ok(v) if v.is_finite() => Ok(Some(v)),
                    _ => Err(Error::BadNumeric {
                        row: r + 1,
                        column: col.to_string(),
                        value: s.to_string(),
                    }),
                }
            })
            .collect()
    }

    /// 0-based index from a 1-based integer column; `None` for `NA`.
    fn index_column(&self, col: &str, size: usize) -> Result<Vec<Option<usize>>> {
        self.column(col)?
            .into_iter()
            .enumerate()
            .map(|(r, v)| match v {
                None => Ok(None),
                Some(v) if v.fract() == 0.0 && v >= 1.0 && v <= size as f64 => Ok(Some(v as usize - 1)),
                Some(v) => Err(Error::DomainError(format!("`{col}` = {v} is not an integer in 1..={size}")).at_row(r + 1)),
            })
            .collect()
    }

    fn bad(&self, r: usize, col: &str) -> Error {
        let value = self
            .position(col)
            .ok()
            .and_then(|j| self.records[r].get(j))
            .unwrap_or("")
            .to_string();
        Error::BadNumeric {
            row: r + 1,
            column: col.to_string(),
            value,
        }
    }
}

fn add_term(
    table: &Table,
    term: &Term,
    triplets: &mut Vec<(usize, usize, f64)>,
    bins: &mut BTreeMap<String, Vec<f64>>,
) -> Result<()> {
    let n = table.records.len();
    let weight = match &term.weight {
        Some(col) => table.column(col)?,
        None => vec![Some(1.0); n],
    };
    let index: Vec<Option<usize>> = match &term.source {
        TermSource::Intercept => vec![Some(0); n],
        TermSource::Covariate(col) => {
            for (r, v) in table.column(col)?.into_iter().enumerate() {
                if let Some(v) = v {
                    triplets.push((r, term.start, term.scale * v));
                }
            }
            return Ok(());
        }
        TermSource::Index(col) => table.index_column(col, term.size)?,
        TermSource::Binned { column, bins: count } => {
            let values = table.column(column)?;
            let (edges, idx) = bin_equal_width(&values, *count).ok_or_else(|| {
                Error::schema(format!("data.{column}"), "binned covariate has no observed values")
            })?;
            bins.insert(term.component.clone(), edges);
            idx
        }
    };
    let group = match &term.group {
        Some((col, size)) => table.index_column(col, *size)?,
        None => vec![Some(0); n],
    };
    let replicate = match &term.replicate {
        Some((col, count)) => table.index_column(col, *count)?,
        None => vec![Some(0); n],
    };
    for r in 0..n {
        if let (Some(i), Some(g), Some(k), Some(w)) = (index[r], group[r], replicate[r], weight[r]) {
            triplets.push((r, term.column(i, g, k), term.scale * w));
        }
    }
    Ok(())
}

/// Equal-width bins over the observed range: edges and the 0-based bin of
/// every value. The top edge belongs to the last bin.
pub fn bin_equal_width(values: &[Option<f64>], bins: usize) -> Option<(Vec<f64>, Vec<Option<usize>>)> {
    let (lo, hi) = values
        .iter()
        .flatten()
        .fold(None, |acc: Option<(f64, f64)>, &v| match acc {
            None => Some((v, v)),
            Some((lo, hi)) => Some((lo.min(v), hi.max(v))),
        })?;
    let width = (hi - lo) / bins as f64;
    let edges = (0..=bins)
        .map(|k| if k == bins { hi } else { lo + k as f64 * width })
        .collect();
    let idx = values
        .iter()
        .map(|v| {
            v.map(|v| {
                if width > 0.0 {
                    (((v - lo) / width).floor() as usize).min(bins - 1)
                } else {
                    0
                }
            })
        })
        .collect();
    Some((edges, idx))
}
