//! `gcm estimate` — correlation matrices from a panel CSV, one file per
//! method.

use std::path::{Path, PathBuf};

use serde::Serialize;

use gcm::io::{read_panel_csv, write_matrix_csv};
use gcm::portfolio::{EstimateParams, Method};
use gcm::preprocess::standardize;

use crate::config::{parse_methods, write_json, CliError, FileConfig};

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Input panel CSV (assets × time).
    #[arg(long)]
    input: Option<PathBuf>,
    /// Comma-separated method tags: `pearson`, `spearman`,
    /// `clipped_pearson[:q]`, `kendall`, `gcc:sign`, `gcc:identity`,
    /// `tanh[:beta]`, `clipped`, `rie`, `rie_gamma`, `rie_id`, `icvc`,
    /// `kendall_clipped`, `kendall_icvc`, `tanh_icvc[:beta]`.
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<String>>,
    /// Spectral broadening for the RIE family (default N^-1/2).
    #[arg(long)]
    eta: Option<f64>,
    /// Fold count for the cross-validated methods.
    #[arg(long)]
    n_folds: Option<usize>,
}

#[derive(Serialize)]
struct Meta {
    schema: &'static str,
    input: String,
    n: usize,
    t: usize,
    q: f64,
    methods: Vec<String>,
    eta: Option<f64>,
    n_folds: usize,
    files: Vec<String>,
}

pub fn run(args: Args, file: &FileConfig, _seed: u64, out: &Path) -> Result<(), CliError> {
    let input = args
        .input
        .or_else(|| file.estimate.input.clone().map(PathBuf::from))
        .ok_or_else(|| CliError::config("estimate requires --input PANEL_CSV"))?;
    let tags = args
        .methods
        .or_else(|| file.estimate.methods.clone())
        .unwrap_or_else(|| vec!["pearson".into(), "kendall".into()]);
    let methods = parse_methods(&tags)?;
    let eta = args.eta.or(file.estimate.eta);
    if let Some(eta) = eta {
        if eta <= 0.0 {
            return Err(CliError::config(format!("eta must be positive, got {eta}")));
        }
    }
    let n_folds = args.n_folds.or(file.estimate.n_folds).unwrap_or(10);
    if n_folds < 2 {
        return Err(CliError::config("n_folds must be at least 2"));
    }

    let panel = read_panel_csv::<f64>(&input).map_err(CliError::runtime)?;
    let std_panel = standardize(&panel).map_err(CliError::runtime)?;
    let (n, t) = (std_panel.n_assets(), std_panel.n_obs());
    let q = n as f64 / t as f64;
    let uses_folds = methods.iter().any(|m| {
        matches!(
            m,
            Method::Icvc | Method::KendallIcvc | Method::TanhIcvc { .. }
        )
    });
    if uses_folds && n_folds > t {
        return Err(CliError::config(format!(
            "n_folds = {n_folds} exceeds the {t} observations"
        )));
    }

    let params = EstimateParams { eta, n_folds };
    let mut files = Vec::new();
    for method in &methods {
        if matches!(method, Method::Rie) && q > 1.0 {
            eprintln!(
                "warning: rie with q = {q:.3} > 1 leaves the zero modes at zero; \
                 rie_id restores the trace"
            );
        }
        let cleaned = method
            .estimate(std_panel.x(), &params)
            .map_err(CliError::runtime)?;
        let fname = format!("corr_{}.csv", method.label());
        let path = out.join(&fname);
        write_matrix_csv(&path, std_panel.asset_ids(), cleaned.values())
            .map_err(CliError::runtime)?;
        files.push(fname);
        println!("wrote {}", path.display());
    }

    write_json(
        &out.join("estimate.meta.json"),
        &Meta {
            schema: "gcm.estimate.v1",
            input: input.display().to_string(),
            n,
            t,
            q,
            methods: methods.iter().map(|m| m.label()).collect(),
            eta,
            n_folds,
            files,
        },
    )?;
    Ok(())
}
