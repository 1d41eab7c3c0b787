//! `gcm backtest` — rolling out-of-sample Markowitz backtest on a panel CSV
//! or on synthetic Student panels.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use gcm::datagen::{derive_seed, sample_student, StudentConfig};
use gcm::io::read_panel_csv;
use gcm::portfolio::{run_backtest, BacktestConfig, BacktestReport, EstimateParams, Strategy};
use gcm::preprocess::standardize;

use crate::config::{
    parse_methods, validate_nu, write_csv, write_json, CliError, FileConfig, TruthArgs, TruthSpec,
};

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Input panel CSV; omit to generate synthetic panels.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Number of assets (synthetic runs).
    #[arg(long)]
    n: Option<usize>,
    /// Total history length (synthetic runs).
    #[arg(long)]
    t_tot: Option<usize>,
    /// Student degrees of freedom (synthetic runs).
    #[arg(long)]
    nu: Option<f64>,
    /// Number of independent synthetic histories.
    #[arg(long)]
    n_seeds: Option<usize>,
    /// In-sample window length.
    #[arg(long)]
    t_in: Option<usize>,
    /// Out-of-sample period length.
    #[arg(long)]
    t_out: Option<usize>,
    /// Method tags.
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<String>>,
    /// Strategies: min_variance, omniscient, mean_reversion,
    /// random_long_short.
    #[arg(long, value_delimiter = ',')]
    strategies: Option<Vec<String>>,
    /// Spectral broadening for the RIE family.
    #[arg(long)]
    eta: Option<f64>,
    /// Fold count for the cross-validated methods.
    #[arg(long)]
    n_folds: Option<usize>,
    /// Expected-gain constraint level.
    #[arg(long)]
    gain: Option<f64>,
    /// Annualization factor for volatilities.
    #[arg(long)]
    annualization: Option<f64>,
    #[command(flatten)]
    truth: TruthArgs,
}

#[derive(Serialize)]
struct ReportDoc<'a> {
    schema: &'static str,
    #[serde(flatten)]
    report: &'a BacktestReport<f64>,
}

#[derive(Serialize)]
struct Index {
    schema: &'static str,
    source: String,
    t_in: usize,
    t_out: usize,
    n_windows: usize,
    seed: u64,
    n_seeds: usize,
    methods: Vec<String>,
    strategies: Vec<String>,
    truth: Option<TruthSpec>,
    reports: Vec<String>,
    /// Mean annualized volatility per "method/strategy" across histories.
    mean_ann_vol: BTreeMap<String, f64>,
}

pub fn run(args: Args, file: &FileConfig, seed: u64, out: &Path) -> Result<(), CliError> {
    let input = args
        .input
        .or_else(|| file.backtest.input.clone().map(PathBuf::from));
    let t_in = args.t_in.or(file.backtest.t_in).unwrap_or(1000);
    let t_out = args.t_out.or(file.backtest.t_out).unwrap_or(60);
    let tags = args
        .methods
        .or_else(|| file.backtest.methods.clone())
        .unwrap_or_else(|| {
            [
                "kendall",
                "kendall_clipped",
                "kendall_icvc",
                "rie",
                "rie_gamma",
                "rie_id",
                "clipped",
                "icvc",
            ]
            .map(String::from)
            .to_vec()
        });
    let methods = parse_methods(&tags)?;
    let strategy_names = args
        .strategies
        .or_else(|| file.backtest.strategies.clone())
        .unwrap_or_else(|| {
            Strategy::ALL
                .iter()
                .map(|s| s.label().to_string())
                .collect()
        });
    let strategies: Vec<Strategy> = strategy_names
        .iter()
        .map(|s| Strategy::parse(s).map_err(|e| CliError::config(e.to_string())))
        .collect::<Result<_, _>>()?;

    if t_in < 2 || t_out < 1 {
        return Err(CliError::config("need t_in >= 2 and t_out >= 1"));
    }
    let gain = args.gain.or(file.backtest.gain).unwrap_or(1.0);
    let annualization = args
        .annualization
        .or(file.backtest.annualization)
        .unwrap_or(252.0);
    if annualization <= 0.0 {
        return Err(CliError::config("annualization factor must be positive"));
    }
    let eta = args.eta.or(file.backtest.eta);
    if let Some(eta) = eta {
        if eta <= 0.0 {
            return Err(CliError::config(format!("eta must be positive, got {eta}")));
        }
    }
    let n_folds = args.n_folds.or(file.backtest.n_folds).unwrap_or(10);
    if n_folds < 2 {
        return Err(CliError::config("n_folds must be at least 2"));
    }

    let mut cfg = BacktestConfig::<f64>::new(t_in);
    cfg.t_out = t_out;
    cfg.gain = gain;
    cfg.annualization = annualization;
    cfg.params = EstimateParams { eta, n_folds };

    let (source, truth_spec, reports) = match input {
        Some(path) => {
            let panel = read_panel_csv::<f64>(&path).map_err(CliError::runtime)?;
            let std_panel = standardize(&panel).map_err(CliError::runtime)?;
            cfg.seed = derive_seed(seed, 0);
            let report =
                run_backtest(&std_panel, &cfg, &methods, &strategies).map_err(CliError::runtime)?;
            (path.display().to_string(), None, vec![report])
        }
        None => {
            let n = args.n.or(file.backtest.n).unwrap_or(100);
            let nu = args.nu.or(file.backtest.nu).unwrap_or(3.0);
            let n_seeds = args.n_seeds.or(file.backtest.n_seeds).unwrap_or(1);
            let t_tot = args
                .t_tot
                .or(file.backtest.t_tot)
                .unwrap_or(t_in + 40 * t_out + 1);
            if n < 2 {
                return Err(CliError::config("need at least 2 assets"));
            }
            validate_nu(nu)?;
            if n_seeds == 0 {
                return Err(CliError::config("n_seeds must be positive"));
            }
            if t_tot < t_in + t_out + 1 {
                return Err(CliError::config(format!(
                    "t_tot = {t_tot} too short for t_in = {t_in} plus t_out = {t_out}"
                )));
            }
            let truth_spec = args.truth.resolve(&file.backtest.truth, "empirical")?;
            let truth = truth_spec.build(n, seed)?;
            let reports: Vec<Result<BacktestReport<f64>, CliError>> = (0..n_seeds as u64)
                .into_par_iter()
                .map(|k| {
                    let scfg = StudentConfig::new(nu, t_tot, derive_seed(seed, 100 + k));
                    let panel = sample_student(&truth, &scfg).map_err(CliError::runtime)?;
                    let std_panel = standardize(&panel).map_err(CliError::runtime)?;
                    let mut cfg_k = cfg;
                    cfg_k.seed = derive_seed(seed, 200 + k);
                    run_backtest(&std_panel, &cfg_k, &methods, &strategies)
                        .map_err(CliError::runtime)
                })
                .collect();
            let reports = reports.into_iter().collect::<Result<Vec<_>, _>>()?;
            (
                format!("synthetic(n={n}, t_tot={t_tot}, nu={nu})"),
                Some(truth_spec),
                reports,
            )
        }
    };

    // one report + flat window CSV per history
    let mut report_files = Vec::new();
    let mut vol_sums: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for (k, report) in reports.iter().enumerate() {
        let tag = if reports.len() == 1 {
            String::new()
        } else {
            format!("_seed{k}")
        };
        let json_name = format!("backtest{tag}.json");
        write_json(
            &out.join(&json_name),
            &ReportDoc {
                schema: "gcm.backtest.report.v1",
                report,
            },
        )?;
        let rows: Vec<String> = report
            .records
            .iter()
            .map(|r| {
                format!(
                    "{},{},{},{},{}",
                    r.window, r.method, r.strategy, r.risk, r.ann_vol
                )
            })
            .collect();
        write_csv(
            &out.join(format!("backtest_windows{tag}.csv")),
            "window,method,strategy,risk,ann_vol",
            &rows,
        )?;
        println!("wrote {}", out.join(&json_name).display());
        report_files.push(json_name);

        for s in &report.summaries {
            let key = format!("{}/{}", s.method, s.strategy);
            let entry = vol_sums.entry(key).or_insert((0.0, 0));
            entry.0 += s.mean_ann_vol;
            entry.1 += 1;
        }
    }
    let mean_ann_vol: BTreeMap<String, f64> = vol_sums
        .into_iter()
        .map(|(k, (sum, cnt))| (k, sum / cnt as f64))
        .collect();

    write_json(
        &out.join("backtest_index.json"),
        &Index {
            schema: "gcm.backtest.v1",
            source,
            t_in,
            t_out,
            n_windows: reports.first().map(|r| r.n_windows).unwrap_or(0),
            seed,
            n_seeds: reports.len(),
            methods: methods.iter().map(|m| m.label()).collect(),
            strategies: strategy_names,
            truth: truth_spec,
            reports: report_files,
            mean_ann_vol,
        },
    )?;
    Ok(())
}
