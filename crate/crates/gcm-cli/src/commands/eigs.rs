//! `gcm eigs` — tables of true versus estimated eigenvalues per method over
//! a q sweep.

use std::path::Path;

use serde::Serialize;

use gcm::datagen::{derive_seed, sample_student, StudentConfig};
use gcm::metrics::eigenvalue_comparison;
use gcm::portfolio::EstimateParams;
use gcm::preprocess::standardize;
use gcm::spectral::eig_sym;

use crate::config::{
    fmt_param, parse_methods, validate_nu, write_csv, write_json, CliError, FileConfig, TruthArgs,
    TruthSpec,
};

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Number of assets.
    #[arg(long)]
    n: Option<usize>,
    /// Aspect ratios q = N/T to sweep.
    #[arg(long, value_delimiter = ',')]
    q_list: Option<Vec<f64>>,
    /// Student degrees of freedom.
    #[arg(long)]
    nu: Option<f64>,
    /// Method tags.
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<String>>,
    /// Spectral broadening for the RIE family.
    #[arg(long)]
    eta: Option<f64>,
    /// Fold count for the cross-validated methods.
    #[arg(long)]
    n_folds: Option<usize>,
    #[command(flatten)]
    truth: TruthArgs,
}

#[derive(Serialize)]
struct Index {
    schema: &'static str,
    n: usize,
    nu: f64,
    seed: u64,
    methods: Vec<String>,
    truth: TruthSpec,
    points: Vec<IndexPoint>,
}

#[derive(Serialize)]
struct IndexPoint {
    q: f64,
    t: usize,
    file: String,
}

pub fn run(args: Args, file: &FileConfig, seed: u64, out: &Path) -> Result<(), CliError> {
    let n = args.n.or(file.eigs.n).unwrap_or(100);
    let q_list = args
        .q_list
        .or_else(|| file.eigs.q_list.clone())
        .unwrap_or_else(|| vec![0.5, 2.0]);
    let nu = args.nu.or(file.eigs.nu).unwrap_or(3.0);
    let tags = args
        .methods
        .or_else(|| file.eigs.methods.clone())
        .unwrap_or_else(|| {
            ["pearson", "clipped", "rie", "rie_id", "kendall", "tanh"]
                .map(String::from)
                .to_vec()
        });
    let methods = parse_methods(&tags)?;
    let params = EstimateParams {
        eta: args.eta.or(file.eigs.eta),
        n_folds: args.n_folds.or(file.eigs.n_folds).unwrap_or(10),
    };

    if n < 2 {
        return Err(CliError::config("need at least 2 assets"));
    }
    validate_nu(nu)?;
    for &q in &q_list {
        if q <= 0.0 {
            return Err(CliError::config(format!("q must be positive, got {q}")));
        }
        if (n as f64 / q).round() < 3.0 {
            return Err(CliError::config(format!(
                "q = {q} leaves fewer than 3 observations"
            )));
        }
    }

    let truth_spec = args.truth.resolve(&file.eigs.truth, "factor")?;
    let truth = truth_spec.build(n, seed)?;

    let mut points = Vec::new();
    for (qi, &q) in q_list.iter().enumerate() {
        let t = (n as f64 / q).round() as usize;
        let cfg = StudentConfig::new(nu, t, derive_seed(seed, qi as u64));
        let panel = sample_student(&truth, &cfg).map_err(CliError::runtime)?;
        let std_panel = standardize(&panel).map_err(CliError::runtime)?;

        let mut estimates = Vec::new();
        for method in &methods {
            let cleaned = method
                .estimate(std_panel.x(), &params)
                .map_err(CliError::runtime)?;
            let spec = eig_sym(cleaned.values()).map_err(CliError::runtime)?;
            estimates.push((method.label(), spec));
        }
        let table =
            eigenvalue_comparison(truth.spectrum(), &estimates).map_err(CliError::runtime)?;

        let header = format!("rank,truth,{}", table.methods.join(","));
        let rows: Vec<String> = (0..table.n())
            .map(|k| {
                let ests: Vec<String> = table
                    .estimates
                    .iter()
                    .map(|col| col[k].to_string())
                    .collect();
                format!("{},{},{}", k + 1, table.truth[k], ests.join(","))
            })
            .collect();
        let fname = format!("eigs_q{}.csv", fmt_param(q));
        write_csv(&out.join(&fname), &header, &rows)?;
        println!("wrote {}", out.join(&fname).display());
        points.push(IndexPoint { q, t, file: fname });
    }

    write_json(
        &out.join("eigs_index.json"),
        &Index {
            schema: "gcm.eigs.v1",
            n,
            nu,
            seed,
            methods: methods.iter().map(|m| m.label()).collect(),
            truth: truth_spec,
            points,
        },
    )?;
    Ok(())
}
