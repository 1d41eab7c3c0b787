//! `gcm duplicate` — duplicate-pair weight concentration against sample
//! size, averaged over seeds.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use gcm::datagen::{derive_seed, inject_duplicate, sample_student, StudentConfig};
use gcm::kernels::{clipped_pearson_matrix, gcc_matrix, pearson_matrix, spearman_matrix};
use gcm::metrics::duplicate_weight_sum;
use gcm::portfolio::{EstimatorChoice, Method};
use gcm::preprocess::standardize;

use crate::config::{
    fmt_param, parse_methods, validate_nu, write_csv, write_json, CliError, FileConfig, TruthArgs,
    TruthSpec,
};

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Number of assets before the duplicate is appended.
    #[arg(long)]
    n: Option<usize>,
    /// Aspect ratios q = N/T to sweep.
    #[arg(long, value_delimiter = ',')]
    q_list: Option<Vec<f64>>,
    /// Student degrees of freedom.
    #[arg(long)]
    nu: Option<f64>,
    /// Correlation between the duplicated pair.
    #[arg(long)]
    rho_dup: Option<f64>,
    /// Index of the asset to duplicate.
    #[arg(long)]
    asset: Option<usize>,
    /// Number of seeds averaged per q.
    #[arg(long)]
    n_seeds: Option<usize>,
    /// Raw estimator tags: `pearson`, `spearman`, `clipped_pearson`,
    /// `kendall`, `tanh[:beta]`, `gcc:identity`.
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<String>>,
    #[command(flatten)]
    truth: TruthArgs,
}

#[derive(Serialize)]
struct Index {
    schema: &'static str,
    n: usize,
    nu: f64,
    rho_dup: f64,
    asset: usize,
    n_seeds: usize,
    seed: u64,
    truth: TruthSpec,
    points: Vec<IndexPoint>,
}

#[derive(Serialize)]
struct IndexPoint {
    q: f64,
    t: usize,
    file: String,
    mean_weight: BTreeMap<String, f64>,
}

pub fn run(args: Args, file: &FileConfig, seed: u64, out: &Path) -> Result<(), CliError> {
    let n = args.n.or(file.duplicate.n).unwrap_or(100);
    let q_list = args
        .q_list
        .or_else(|| file.duplicate.q_list.clone())
        .unwrap_or_else(|| vec![1.0, 2.0, 5.0, 10.0]);
    let nu = args.nu.or(file.duplicate.nu).unwrap_or(3.0);
    let rho_dup = args.rho_dup.or(file.duplicate.rho_dup).unwrap_or(0.99);
    let asset = args.asset.or(file.duplicate.asset).unwrap_or(0);
    let n_seeds = args.n_seeds.or(file.duplicate.n_seeds).unwrap_or(20);
    let tags = args
        .methods
        .or_else(|| file.duplicate.methods.clone())
        .unwrap_or_else(|| ["pearson", "kendall", "tanh"].map(String::from).to_vec());
    let methods = parse_methods(&tags)?;

    if n < 2 {
        return Err(CliError::config("need at least 2 assets"));
    }
    validate_nu(nu)?;
    if !(0.0 < rho_dup && rho_dup < 1.0) {
        return Err(CliError::config(format!(
            "duplicate correlation must lie in (0, 1), got {rho_dup}"
        )));
    }
    if asset >= n {
        return Err(CliError::config(format!(
            "asset index {asset} out of range"
        )));
    }
    if n_seeds == 0 {
        return Err(CliError::config("n_seeds must be positive"));
    }
    let choices: Vec<(String, EstimatorChoice<f64>)> = methods
        .iter()
        .map(|m| match m {
            Method::Estimator(c) => Ok((m.label(), c.clone())),
            other => Err(CliError::config(format!(
                "duplicate detection works on raw estimators; '{}' is a cleaning pipeline",
                other.label()
            ))),
        })
        .collect::<Result<_, _>>()?;

    let truth_spec = args.truth.resolve(&file.duplicate.truth, "factor")?;
    let base = truth_spec.build(n, seed)?;
    let truth = inject_duplicate(&base, asset, rho_dup).map_err(CliError::runtime)?;
    let n_total = truth.n();
    let pair = (asset, n_total - 1);

    let mut points = Vec::new();
    for (qi, &q) in q_list.iter().enumerate() {
        if q <= 0.0 {
            return Err(CliError::config(format!("q must be positive, got {q}")));
        }
        let t = ((n_total as f64 / q).round() as usize).max(3);

        let runs: Vec<Result<Vec<(String, f64)>, CliError>> = (0..n_seeds as u64)
            .into_par_iter()
            .map(|k| {
                let cfg =
                    StudentConfig::new(nu, t, derive_seed(seed, 1 + qi as u64 * 0x1_0000 + k));
                let panel = sample_student(&truth, &cfg).map_err(CliError::runtime)?;
                let std_panel = standardize(&panel).map_err(CliError::runtime)?;
                let rp = std_panel.to_return_panel();
                let mut row = Vec::new();
                for (label, choice) in &choices {
                    let est = match choice {
                        EstimatorChoice::Pearson => pearson_matrix(&rp),
                        EstimatorChoice::Spearman => spearman_matrix(&rp),
                        EstimatorChoice::ClippedPearson { quantile } => {
                            clipped_pearson_matrix(&rp, *quantile)
                        }
                        EstimatorChoice::Gcc { kernel } => gcc_matrix(&rp, kernel),
                    }
                    .map_err(CliError::runtime)?;
                    let w = duplicate_weight_sum(&est, pair).map_err(CliError::runtime)?;
                    row.push((label.clone(), w));
                }
                Ok(row)
            })
            .collect();

        let mut rows = Vec::new();
        let mut sums: BTreeMap<String, f64> = BTreeMap::new();
        for (k, run) in runs.into_iter().enumerate() {
            for (label, w) in run? {
                rows.push(format!("{k},{label},{w}"));
                *sums.entry(label).or_insert(0.0) += w;
            }
        }
        let mean_weight: BTreeMap<String, f64> = sums
            .into_iter()
            .map(|(k, v)| (k, v / n_seeds as f64))
            .collect();

        let fname = format!("duplicate_q{}.csv", fmt_param(q));
        write_csv(&out.join(&fname), "seed,method,weight_sum", &rows)?;
        println!("wrote {}", out.join(&fname).display());
        points.push(IndexPoint {
            q,
            t,
            file: fname,
            mean_weight,
        });
    }

    write_json(
        &out.join("duplicate_index.json"),
        &Index {
            schema: "gcm.duplicate.v1",
            n,
            nu,
            rho_dup,
            asset,
            n_seeds,
            seed,
            truth: truth_spec,
            points,
        },
    )?;
    Ok(())
}
