//! CSV ingestion, covariate standardization and the JSON fit report.
//!
//! Input header: `cluster,y,roleA:<name>...,roleB:<name>...`. An intercept
//! is always prepended to the A block, so a file without `roleA` columns
//! gives the location-shift model.

use std::io::Read;

use indexmap::IndexMap;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::estimation::FitResult;
use crate::model::{Cluster, ClusteredDataset, MemParams, Observation, ThresholdPlan};

pub const INTERCEPT: &str = "intercept";

#[derive(Debug, Clone, PartialEq)]
pub struct InputTable {
    pub dataset: ClusteredDataset,
    /// A-block names, starting with [`INTERCEPT`].
    pub a_names: Vec<String>,
    pub b_names: Vec<String>,
}

enum Role {
    A,
    B,
}

pub fn read_table(reader: impl Read) -> Result<InputTable> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_reader(reader);
    let mut records = rdr.records();
    let header = match records.next() {
        None => return Err(Error::Parse("empty input: no header line".into())),
        Some(h) => h.map_err(|e| Error::Parse(format!("line 1: {e}")))?,
    };
    if header.len() < 2 || &header[0] != "cluster" || &header[1] != "y" {
        return Err(Error::Parse("line 1: header must start with 'cluster,y'".into()));
    }
    let mut roles = Vec::new();
    let mut a_names = vec![INTERCEPT.to_string()];
    let mut b_names = Vec::new();
    for col in header.iter().skip(2) {
        let (role, name) = if let Some(n) = col.strip_prefix("roleA:") {
            (Role::A, n)
        } else if let Some(n) = col.strip_prefix("roleB:") {
            (Role::B, n)
        } else {
            return Err(Error::Parse(format!("line 1: column '{col}' must be 'roleA:<name>' or 'roleB:<name>'")));
        };
        if name.is_empty() || a_names.iter().chain(&b_names).any(|n| n == name) {
            return Err(Error::Parse(format!("line 1: empty or duplicate covariate name in '{col}'")));
        }
        match role {
            Role::A => a_names.push(name.to_string()),
            Role::B => b_names.push(name.to_string()),
        }
        roles.push(role);
    }
    let mut groups: IndexMap<String, Vec<Observation>> = IndexMap::new();
    for (i, rec) in records.enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| Error::Parse(format!("line {line}: {e}")))?;
        if rec.len() != header.len() {
            return Err(Error::Parse(format!(
                "line {line}: expected {} fields, found {}",
                header.len(),
                rec.len()
            )));
        }
        let num = |k: usize| -> Result<f64> {
            let v: f64 = rec[k]
                .parse()
                .map_err(|_| Error::Parse(format!("line {line}: '{}' is not a number", &rec[k])))?;
            if !v.is_finite() {
                return Err(Error::Parse(format!("line {line}: non-finite value '{}'", &rec[k])));
            }
            Ok(v)
        };
        let cluster = &rec[0];
        if cluster.is_empty() {
            return Err(Error::Parse(format!("line {line}: empty cluster label")));
        }
        let y = num(1)?;
        if y <= 0.0 {
            return Err(Error::Parse(format!("line {line}: response must be positive, got {y}")));
        }
        let mut x_a = vec![1.0];
        let mut x_b = Vec::new();
        for (k, role) in roles.iter().enumerate() {
            let v = num(k + 2)?;
            match role {
                Role::A => x_a.push(v),
                Role::B => x_b.push(v),
            }
        }
        let obs = Observation::new(y, x_a, x_b).map_err(|e| Error::Parse(format!("line {line}: {e}")))?;
        groups.entry(cluster.to_string()).or_default().push(obs);
    }
    if groups.is_empty() {
        return Err(Error::Parse("no data rows".into()));
    }
    let (p_a, p_b) = (a_names.len(), b_names.len());
    let clusters = groups.into_iter().map(|(id, obs)| Cluster::new(id, obs)).collect();
    Ok(InputTable {
        dataset: ClusteredDataset::new(clusters, p_a, p_b)?,
        a_names,
        b_names,
    })
}

pub fn read_table_path(path: &std::path::Path) -> Result<InputTable> {
    let file = std::fs::File::open(path).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
    read_table(std::io::BufReader::new(file))
}

pub fn write_table(table: &InputTable) -> String {
    let mut s = String::from("cluster,y");
    for n in &table.a_names[1..] {
        s.push_str(&format!(",roleA:{n}"));
    }
    for n in &table.b_names {
        s.push_str(&format!(",roleB:{n}"));
    }
    s.push('\n');
    for c in table.dataset.clusters() {
        for o in &c.observations {
            s.push_str(&format!("{},{}", c.id, o.y));
            for v in o.x_a[1..].iter().chain(&o.x_b) {
                s.push_str(&format!(",{v}"));
            }
            s.push('\n');
        }
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColumnScale {
    pub mean: f64,
    pub sd: f64,
}

/// Center/scale factors for every covariate except the intercept.
pub type Scaling = IndexMap<String, ColumnScale>;

/// Zero sample mean and unit unbiased sample variance for each covariate,
/// computed over all rows.
pub fn fit_scaling(table: &InputTable) -> Result<Scaling> {
    let rows: Vec<&Observation> = table.dataset.clusters().iter().flat_map(|c| &c.observations).collect();
    if rows.len() < 2 {
        return Err(Error::Precondition("standardization needs at least two rows".into()));
    }
    let n = rows.len() as f64;
    let mut out = Scaling::new();
    let columns = (1..table.a_names.len())
        .map(|k| (table.a_names[k].clone(), true, k))
        .chain(table.b_names.iter().enumerate().map(|(k, name)| (name.clone(), false, k)));
    for (name, is_a, k) in columns {
        let get = |o: &Observation| if is_a { o.x_a[k] } else { o.x_b[k] };
        let mean = rows.iter().map(|o| get(o)).sum::<f64>() / n;
        let var = rows.iter().map(|o| (get(o) - mean).powi(2)).sum::<f64>() / (n - 1.0);
        if !(var > 0.0) {
            return Err(Error::Precondition(format!("covariate '{name}' is constant")));
        }
        out.insert(name, ColumnScale { mean, sd: var.sqrt() });
    }
    Ok(out)
}

pub fn apply_scaling(table: &InputTable, scaling: &Scaling) -> Result<InputTable> {
    let lookup = |name: &str| {
        scaling
            .get(name)
            .copied()
            .ok_or_else(|| Error::Precondition(format!("no scaling recorded for covariate '{name}'")))
    };
    let a: Vec<ColumnScale> = table.a_names[1..].iter().map(|n| lookup(n)).collect::<Result<_>>()?;
    let b: Vec<ColumnScale> = table.b_names.iter().map(|n| lookup(n)).collect::<Result<_>>()?;
    let clusters = table
        .dataset
        .clusters()
        .iter()
        .map(|c| {
            let obs = c
                .observations
                .iter()
                .map(|o| {
                    let mut x_a = o.x_a.clone();
                    for (k, s) in a.iter().enumerate() {
                        x_a[k + 1] = (x_a[k + 1] - s.mean) / s.sd;
                    }
                    let x_b = o.x_b.iter().zip(&b).map(|(v, s)| (v - s.mean) / s.sd).collect();
                    Observation::new(o.y, x_a, x_b)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(Cluster::new(c.id.clone(), obs))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(InputTable {
        dataset: ClusteredDataset::new(clusters, table.dataset.p_a(), table.dataset.p_b())?,
        a_names: table.a_names.clone(),
        b_names: table.b_names.clone(),
    })
}

/// SHA-256 of the column roles and the cluster labels (in file order).
pub fn schema_hash(table: &InputTable) -> String {
    let mut h = Sha256::new();
    for n in &table.a_names {
        h.update(b"A:");
        h.update(n.as_bytes());
        h.update(b"\n");
    }
    for n in &table.b_names {
        h.update(b"B:");
        h.update(n.as_bytes());
        h.update(b"\n");
    }
    for id in table.dataset.cluster_ids() {
        h.update(b"C:");
        h.update(id.as_bytes());
        h.update(b"\n");
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportParams {
    pub beta_a: IndexMap<String, f64>,
    pub beta_b: IndexMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitReport {
    pub params: ReportParams,
    /// Row-major random-effect covariance.
    pub sigma: Vec<Vec<f64>>,
    pub loglik: f64,
    pub thresholds: IndexMap<String, f64>,
    pub n_j0: IndexMap<String, usize>,
    pub n_0: f64,
    pub converged: bool,
    pub boundary_sigma: bool,
    pub schema_hash: String,
    pub scaling: Option<Scaling>,
}

impl FitReport {
    pub fn new(fit: &FitResult, table: &InputTable, scaling: Option<Scaling>) -> Self {
        let p = &fit.params;
        let sigma = p.sigma();
        Self {
            params: ReportParams {
                beta_a: table.a_names.iter().cloned().zip(p.beta_a().iter().copied()).collect(),
                beta_b: table.b_names.iter().cloned().zip(p.beta_b().iter().copied()).collect(),
            },
            sigma: (0..sigma.nrows())
                .map(|i| (0..sigma.ncols()).map(|k| sigma[(i, k)]).collect())
                .collect(),
            loglik: fit.loglik,
            thresholds: fit.threshold_plan.omega.clone(),
            n_j0: fit.threshold_plan.n_j0.clone(),
            n_0: fit.threshold_plan.n_0,
            converged: fit.converged,
            boundary_sigma: fit.boundary_sigma,
            schema_hash: schema_hash(table),
            scaling,
        }
    }

    pub fn to_params(&self) -> Result<MemParams> {
        let d = self.sigma.len();
        if self.sigma.iter().any(|r| r.len() != d) {
            return Err(Error::Parse("sigma must be a square matrix".into()));
        }
        let sigma = DMatrix::from_fn(d, d, |i, k| self.sigma[i][k]);
        MemParams::new(
            self.params.beta_a.values().copied().collect(),
            self.params.beta_b.values().copied().collect(),
            sigma,
        )
    }

    pub fn to_plan(&self) -> ThresholdPlan {
        ThresholdPlan {
            omega: self.thresholds.clone(),
            n_j0: self.n_j0.clone(),
            n_0: self.n_0,
        }
    }

    /// Ingest-side check that `table` is the data this report was fitted to.
    pub fn check_table(&self, table: &InputTable) -> Result<()> {
        let h = schema_hash(table);
        if h != self.schema_hash {
            return Err(Error::Precondition(format!(
                "data schema {h} does not match the fit report ({})",
                self.schema_hash
            )));
        }
        Ok(())
    }

    /// Parse input and apply the recorded scaling, then verify the pairing.
    pub fn prepare_table(&self, raw: &InputTable) -> Result<InputTable> {
        self.check_table(raw)?;
        match &self.scaling {
            Some(s) => apply_scaling(raw, s),
            None => Ok(raw.clone()),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self)
            .map(|s| s + "\n")
            .map_err(|e| Error::Numerical(format!("report serialization: {e}")))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse(format!("fit report: {e}")))
    }
}
