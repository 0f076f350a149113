//! Experiment configuration: flags, JSON files, and their merge.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, ValueEnum};
use cpp_core::complex::Complex;
use cpp_core::gfq::Prime;
use cpp_core::measures::{parse_rational, Coupling, ModelParams};
use cpp_core::Error;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum GeometryKind {
    Box,
    Torus,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Measure {
    Mu,
    Rho,
    Kappa,
}

/// Every option of every task. Unset fields fall back to the config file,
/// then to per-task defaults.
#[derive(Args, Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Opts {
    /// JSON config file (or a run manifest); flags override its values
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,

    /// Task name, used by `run`
    #[arg(skip)]
    pub task: Option<String>,

    /// Ambient dimension
    #[arg(long)]
    pub d: Option<usize>,
    /// Field size (prime)
    #[arg(long)]
    pub q: Option<u32>,
    /// Cochain degree
    #[arg(long)]
    pub i: Option<usize>,
    #[arg(long, value_enum)]
    pub geometry: Option<GeometryKind>,
    /// Box widths, comma separated
    #[arg(long, value_delimiter = ',')]
    pub extents: Option<Vec<usize>>,
    /// Box width in every direction, or torus period
    #[arg(long)]
    pub side: Option<usize>,

    /// Coupling on (i+1)-cells: rational or "inf"
    #[arg(long)]
    pub k2: Option<String>,
    /// Coupling on i-cells: rational or "inf"
    #[arg(long)]
    pub k1: Option<String>,
    /// Open probability on (i+1)-cells
    #[arg(long)]
    pub p2: Option<String>,
    /// Open probability on i-cells
    #[arg(long)]
    pub p1: Option<String>,
    /// Base of the cohomology factor (auxiliary model); defaults to q
    #[arg(long)]
    pub r: Option<String>,

    #[arg(long, value_enum)]
    pub measure: Option<Measure>,
    /// Loop side length
    #[arg(long = "loop")]
    #[serde(rename = "loop")]
    pub loop_side: Option<usize>,
    /// Loop sides for an MF-ratio scan, comma separated
    #[arg(long = "n", value_delimiter = ',')]
    #[serde(rename = "n")]
    pub loop_sides: Option<Vec<usize>>,
    /// Use exact enumeration instead of Monte Carlo
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub exact: Option<bool>,
    /// Use V-events instead of Wilson variables in the MF ratio
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub topological: Option<bool>,
    /// Monte Carlo duality check instead of exact enumeration
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub mc: Option<bool>,

    /// Recorded samples per chain
    #[arg(long)]
    pub samples: Option<u64>,
    #[arg(long)]
    pub burn_in: Option<u64>,
    #[arg(long)]
    pub thinning: Option<u64>,
    #[arg(long)]
    pub chains: Option<usize>,
    #[arg(long)]
    pub batches: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads (default: serial)
    #[arg(long)]
    pub threads: Option<usize>,
    /// Search budget for min-area (subsets examined)
    #[arg(long)]
    pub budget: Option<u64>,

    /// Result file; stdout when absent
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Run manifest path; defaults to `<out>.manifest.json` when --out is set
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Sample series CSV (sample task)
    #[arg(long)]
    pub series: Option<PathBuf>,
}

macro_rules! merge_fields {
    ($dst:ident, $src:ident; $($f:ident),*) => {
        $( if $dst.$f.is_none() { $dst.$f = $src.$f; } )*
    };
}

impl Opts {
    /// Fills unset fields from the config file, if any.
    pub fn resolve(mut self) -> anyhow::Result<Opts> {
        let Some(path) = self.config.clone() else {
            return Ok(self);
        };
        let file = load_config(&path)?;
        merge_fields!(self, file; task, d, q, i, geometry, extents, side, k2, k1, p2, p1, r,
            measure, loop_side, loop_sides, exact, topological, mc, samples, burn_in, thinning,
            chains, batches, seed, threads, budget, out, manifest, series);
        Ok(self)
    }

    pub fn flag(v: Option<bool>) -> bool {
        v.unwrap_or(false)
    }

    pub fn prime(&self) -> cpp_core::Result<Prime> {
        Prime::new(self.q.unwrap_or(2))
    }

    pub fn dim(&self) -> usize {
        self.d.unwrap_or(2)
    }

    pub fn degree(&self) -> usize {
        self.i.unwrap_or(1)
    }

    /// Builds the complex; `default_side` applies when neither extents nor
    /// side is given.
    pub fn complex(&self, default_side: usize) -> cpp_core::Result<Complex> {
        let d = self.dim();
        match self.geometry.unwrap_or(GeometryKind::Box) {
            GeometryKind::Box => {
                let widths = match (&self.extents, self.side) {
                    (Some(e), _) => e.clone(),
                    (None, side) => vec![side.unwrap_or(default_side); d],
                };
                Complex::cubical_box(d, &widths)
            }
            GeometryKind::Torus => {
                if self.extents.is_some() {
                    return Err(Error::InvalidParameter("--extents applies to boxes; use --side".into()));
                }
                Complex::torus(d, self.side.unwrap_or(default_side))
            }
        }
    }

    /// Model parameters from exactly one of the k-pair and the p-pair.
    pub fn model(&self) -> cpp_core::Result<ModelParams> {
        let q = self.prime()?;
        let (k2, k1) = match (&self.k2, &self.k1, &self.p2, &self.p1) {
            (Some(k2), Some(k1), None, None) => (k2.parse::<Coupling>()?, k1.parse::<Coupling>()?),
            (None, None, Some(p2), Some(p1)) => (
                Coupling::from_p(&parse_rational(p2)?)?,
                Coupling::from_p(&parse_rational(p1)?)?,
            ),
            _ => {
                return Err(Error::InvalidParameter(
                    "give exactly one of the pairs (--k2, --k1) and (--p2, --p1)".into(),
                ))
            }
        };
        let params = ModelParams::new(q, self.degree(), k2, k1);
        match &self.r {
            Some(r) => params.with_r(parse_rational(r)?),
            None => Ok(params),
        }
    }
}

fn load_config(path: &Path) -> anyhow::Result<Opts> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    // A run manifest carries the resolved config under "config".
    let value = match value.get("config") {
        Some(inner) if value.get("schema_version").is_some() => inner.clone(),
        _ => value,
    };
    if !value.is_object() {
        bail!("{}: expected a JSON object", path.display());
    }
    serde_json::from_value(value)
        .map_err(|e| anyhow::Error::new(Error::InvalidParameter(format!("{}: {e}", path.display()))))
}
