//! Configuration file handling, truth construction and shared output
//! helpers.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Deserialize;
use serde::Serialize;

use gcm::datagen::{derive_seed, empirical_truth, make_factor_truth, GroundTruth};
use gcm::kernels::{CorrelationMatrix, EstimatorKind};

/// CLI failure classes mapped to exit codes: configuration errors exit 2,
/// runtime (numerical or i/o) errors exit 3.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Runtime(String),
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    pub fn runtime(err: impl std::fmt::Display) -> Self {
        CliError::Runtime(err.to_string())
    }
}

/// Top-level TOML file layout: one optional table per subcommand plus the
/// global knobs.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub out: Option<String>,
    #[serde(default)]
    pub simulate: SimulateFile,
    #[serde(default)]
    pub estimate: EstimateFile,
    #[serde(default)]
    pub eigs: EigsFile,
    #[serde(default)]
    pub duplicate: DuplicateFile,
    #[serde(default)]
    pub fcm: FcmFile,
    #[serde(default)]
    pub backtest: BacktestFile,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| {
                    CliError::config(format!("cannot read config {}: {e}", p.display()))
                })?;
                toml::from_str(&text)
                    .map_err(|e| CliError::config(format!("bad config {}: {e}", p.display())))
            }
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateFile {
    pub n: Option<usize>,
    pub t: Option<usize>,
    pub nu: Option<f64>,
    pub scale_convention: Option<String>,
    #[serde(flatten)]
    pub truth: TruthFile,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimateFile {
    pub input: Option<String>,
    pub methods: Option<Vec<String>>,
    pub eta: Option<f64>,
    pub n_folds: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EigsFile {
    pub n: Option<usize>,
    pub q_list: Option<Vec<f64>>,
    pub nu: Option<f64>,
    pub methods: Option<Vec<String>>,
    pub eta: Option<f64>,
    pub n_folds: Option<usize>,
    #[serde(flatten)]
    pub truth: TruthFile,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DuplicateFile {
    pub n: Option<usize>,
    pub q_list: Option<Vec<f64>>,
    pub nu: Option<f64>,
    pub rho_dup: Option<f64>,
    pub asset: Option<usize>,
    pub n_seeds: Option<usize>,
    pub methods: Option<Vec<String>>,
    #[serde(flatten)]
    pub truth: TruthFile,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FcmFile {
    pub n: Option<usize>,
    pub q_list: Option<Vec<f64>>,
    pub nu_list: Option<Vec<f64>>,
    pub mode_sides: Option<Vec<String>>,
    pub n_seeds: Option<usize>,
    pub benchmark_draws: Option<usize>,
    pub methods: Option<Vec<String>>,
    pub eta: Option<f64>,
    pub n_folds: Option<usize>,
    #[serde(flatten)]
    pub truth: TruthFile,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BacktestFile {
    pub input: Option<String>,
    pub n: Option<usize>,
    pub t_tot: Option<usize>,
    pub nu: Option<f64>,
    pub n_seeds: Option<usize>,
    pub t_in: Option<usize>,
    pub t_out: Option<usize>,
    pub methods: Option<Vec<String>>,
    pub strategies: Option<Vec<String>>,
    pub eta: Option<f64>,
    pub n_folds: Option<usize>,
    pub gain: Option<f64>,
    pub annualization: Option<f64>,
    #[serde(flatten)]
    pub truth: TruthFile,
}

/// Ground-truth description shared by the synthetic commands.
#[derive(Debug, Default, Clone, Deserialize)]
pub struct TruthFile {
    pub truth: Option<String>,
    pub market_beta: Option<f64>,
    pub n_sectors: Option<usize>,
    pub sector_rho: Option<f64>,
    pub truth_csv: Option<String>,
    pub truth_t0: Option<usize>,
}

/// Fully resolved truth parameters.
#[derive(Debug, Clone, Serialize)]
pub struct TruthSpec {
    pub kind: String,
    pub market_beta: f64,
    pub n_sectors: usize,
    pub sector_rho: f64,
    pub truth_csv: Option<String>,
    pub truth_t0: Option<usize>,
}

/// Shared truth-related command-line flags.
#[derive(Debug, Clone, clap::Args)]
pub struct TruthArgs {
    /// Ground truth kind: factor | empirical | csv.
    #[arg(long)]
    pub truth: Option<String>,
    /// Uniform market loading beta (off-diagonal beta^2).
    #[arg(long)]
    pub market_beta: Option<f64>,
    /// Number of contiguous equal sectors (0 = none).
    #[arg(long)]
    pub n_sectors: Option<usize>,
    /// Extra within-sector correlation scale in [0, 1].
    #[arg(long)]
    pub sector_rho: Option<f64>,
    /// Ground-truth correlation matrix CSV (for --truth csv).
    #[arg(long)]
    pub truth_csv: Option<PathBuf>,
    /// Auxiliary sample length for the empirical truth (default 3N).
    #[arg(long)]
    pub truth_t0: Option<usize>,
}

impl TruthArgs {
    /// Merges flags over file values and applies defaults.
    pub fn resolve(&self, file: &TruthFile, default_kind: &str) -> Result<TruthSpec, CliError> {
        let kind = self
            .truth
            .clone()
            .or_else(|| file.truth.clone())
            .unwrap_or_else(|| default_kind.to_string());
        if !["factor", "empirical", "csv"].contains(&kind.as_str()) {
            return Err(CliError::config(format!(
                "truth kind must be factor, empirical or csv, got '{kind}'"
            )));
        }
        let spec = TruthSpec {
            kind,
            market_beta: self.market_beta.or(file.market_beta).unwrap_or(0.5),
            n_sectors: self.n_sectors.or(file.n_sectors).unwrap_or(0),
            sector_rho: self.sector_rho.or(file.sector_rho).unwrap_or(0.0),
            truth_csv: self
                .truth_csv
                .as_ref()
                .map(|p| p.display().to_string())
                .or_else(|| file.truth_csv.clone()),
            truth_t0: self.truth_t0.or(file.truth_t0),
        };
        if !(0.0..1.0).contains(&spec.market_beta.abs()) {
            return Err(CliError::config(format!(
                "market beta must satisfy |beta| < 1, got {}",
                spec.market_beta
            )));
        }
        if spec.n_sectors > 0 && !(0.0..=1.0).contains(&spec.sector_rho) {
            return Err(CliError::config(format!(
                "sector correlation must lie in [0, 1], got {}",
                spec.sector_rho
            )));
        }
        if spec.kind == "csv" && spec.truth_csv.is_none() {
            return Err(CliError::config("--truth csv requires --truth-csv PATH"));
        }
        Ok(spec)
    }
}

impl TruthSpec {
    /// Builds the ground truth for `n` assets. The `empirical` kind samples
    /// an auxiliary Gaussian panel from the factor model and keeps its
    /// Pearson correlation, producing a fully spread spectrum.
    pub fn build(&self, n: usize, seed: u64) -> Result<GroundTruth<f64>, CliError> {
        match self.kind.as_str() {
            "factor" => make_factor_truth(n, self.market_beta, self.n_sectors, self.sector_rho)
                .map_err(CliError::runtime),
            "empirical" => {
                let base = make_factor_truth(n, self.market_beta, self.n_sectors, self.sector_rho)
                    .map_err(CliError::runtime)?;
                let t0 = self.truth_t0.unwrap_or(3 * n).max(n + 2);
                empirical_truth(&base, t0, f64::INFINITY, derive_seed(seed, 0x7457))
                    .map_err(CliError::runtime)
            }
            "csv" => {
                let path = PathBuf::from(self.truth_csv.as_ref().expect("validated"));
                let (ids, values) =
                    gcm::io::read_matrix_csv::<f64>(&path).map_err(CliError::runtime)?;
                if ids.len() != n {
                    return Err(CliError::config(format!(
                        "truth csv has {} assets but n = {n}",
                        ids.len()
                    )));
                }
                let corr =
                    CorrelationMatrix::new(values, EstimatorKind::External("csv_truth".into()))
                        .map_err(CliError::runtime)?;
                GroundTruth::new(corr).map_err(CliError::runtime)
            }
            _ => unreachable!("validated"),
        }
    }
}

/// Writes pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut out = BufWriter::new(File::create(path).map_err(CliError::runtime)?);
    serde_json::to_writer_pretty(&mut out, value).map_err(CliError::runtime)?;
    writeln!(out).map_err(CliError::runtime)?;
    out.flush().map_err(CliError::runtime)?;
    Ok(())
}

/// Writes a CSV table from a header and formatted rows.
pub fn write_csv(path: &Path, header: &str, rows: &[String]) -> Result<(), CliError> {
    let mut out = BufWriter::new(File::create(path).map_err(CliError::runtime)?);
    writeln!(out, "{header}").map_err(CliError::runtime)?;
    for row in rows {
        writeln!(out, "{row}").map_err(CliError::runtime)?;
    }
    out.flush().map_err(CliError::runtime)?;
    Ok(())
}

/// Compact, filesystem-safe rendering of a float parameter (e.g. 0.5 ->
/// "0p5", 10 -> "10").
pub fn fmt_param(v: f64) -> String {
    let s = format!("{v}");
    s.replace('.', "p").replace('-', "m")
}

/// Parses and validates a method list.
pub fn parse_methods(tags: &[String]) -> Result<Vec<gcm::portfolio::Method<f64>>, CliError> {
    if tags.is_empty() {
        return Err(CliError::config("method list is empty"));
    }
    tags.iter()
        .map(|t| gcm::portfolio::Method::parse(t).map_err(|e| CliError::config(e.to_string())))
        .collect()
}

/// Validates a degrees-of-freedom parameter (`inf` accepted).
pub fn validate_nu(nu: f64) -> Result<(), CliError> {
    if nu > 2.0 {
        Ok(())
    } else {
        Err(CliError::config(format!(
            "student degrees of freedom must exceed 2 (or be inf for Gaussian), got {nu}"
        )))
    }
}
