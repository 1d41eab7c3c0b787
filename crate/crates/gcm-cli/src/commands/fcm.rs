//! `gcm fcm` — fraction-of-common-modes sweeps over (nu, q), with the
//! Haar-random benchmark.

use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use gcm::datagen::{derive_seed, sample_student, StudentConfig};
use gcm::metrics::{fcm, fcm_random_benchmark, ModeSide};
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
    /// Degrees-of-freedom values to sweep (`inf` for Gaussian).
    #[arg(long, value_delimiter = ',')]
    nu_list: Option<Vec<f64>>,
    /// Mode sides to evaluate: large, small.
    #[arg(long, value_delimiter = ',')]
    mode_sides: Option<Vec<String>>,
    /// Seeds averaged per parameter point.
    #[arg(long)]
    n_seeds: Option<usize>,
    /// Draws for the Haar-random benchmark curve.
    #[arg(long)]
    benchmark_draws: Option<usize>,
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
    n_seeds: usize,
    benchmark_draws: usize,
    seed: u64,
    methods: Vec<String>,
    truth: TruthSpec,
    points: Vec<IndexPoint>,
}

#[derive(Serialize)]
struct IndexPoint {
    nu: f64,
    q: f64,
    t: usize,
    mode_side: String,
    file: String,
}

/// Per-seed curves indexed `[method][side]`.
type SeedCurves = Vec<Vec<Vec<f64>>>;

pub fn run(args: Args, file: &FileConfig, seed: u64, out: &Path) -> Result<(), CliError> {
    let n = args.n.or(file.fcm.n).unwrap_or(100);
    let q_list = args
        .q_list
        .or_else(|| file.fcm.q_list.clone())
        .unwrap_or_else(|| vec![1.0]);
    let nu_list = args
        .nu_list
        .or_else(|| file.fcm.nu_list.clone())
        .unwrap_or_else(|| vec![3.0]);
    let side_names = args
        .mode_sides
        .or_else(|| file.fcm.mode_sides.clone())
        .unwrap_or_else(|| vec!["large".into(), "small".into()]);
    let n_seeds = args.n_seeds.or(file.fcm.n_seeds).unwrap_or(20);
    let benchmark_draws = args
        .benchmark_draws
        .or(file.fcm.benchmark_draws)
        .unwrap_or(50);
    let tags = args
        .methods
        .or_else(|| file.fcm.methods.clone())
        .unwrap_or_else(|| ["pearson", "kendall", "tanh"].map(String::from).to_vec());
    let methods = parse_methods(&tags)?;
    let params = EstimateParams {
        eta: args.eta.or(file.fcm.eta),
        n_folds: args.n_folds.or(file.fcm.n_folds).unwrap_or(10),
    };

    if n < 2 {
        return Err(CliError::config("need at least 2 assets"));
    }
    if n_seeds == 0 || benchmark_draws == 0 {
        return Err(CliError::config(
            "n_seeds and benchmark_draws must be positive",
        ));
    }
    let sides: Vec<ModeSide> = side_names
        .iter()
        .map(|s| match s.as_str() {
            "large" => Ok(ModeSide::Large),
            "small" => Ok(ModeSide::Small),
            other => Err(CliError::config(format!(
                "mode side must be large or small, got '{other}'"
            ))),
        })
        .collect::<Result<_, _>>()?;
    for &nu in &nu_list {
        validate_nu(nu)?;
    }
    for &q in &q_list {
        if q <= 0.0 || (n as f64 / q).round() < 3.0 {
            return Err(CliError::config(format!("unusable aspect ratio q = {q}")));
        }
    }

    // the benchmark depends only on N; share it across parameter points
    let benchmark = fcm_random_benchmark::<f64>(n, benchmark_draws, derive_seed(seed, 0xBE));

    let truth_spec = args.truth.resolve(&file.fcm.truth, "empirical")?;
    let truth = truth_spec.build(n, seed)?;

    let grid: Vec<(f64, f64)> = nu_list
        .iter()
        .flat_map(|&nu| q_list.iter().map(move |&q| (nu, q)))
        .collect();

    let mut points = Vec::new();
    for (pi, &(nu, q)) in grid.iter().enumerate() {
        let t = (n as f64 / q).round() as usize;

        let per_seed: Vec<Result<SeedCurves, CliError>> = (0..n_seeds as u64)
            .into_par_iter()
            .map(|k| {
                let cfg =
                    StudentConfig::new(nu, t, derive_seed(seed, 2 + pi as u64 * 0x1_0000 + k));
                let panel = sample_student(&truth, &cfg).map_err(CliError::runtime)?;
                let std_panel = standardize(&panel).map_err(CliError::runtime)?;
                methods
                    .iter()
                    .map(|method| {
                        let cleaned = method
                            .estimate(std_panel.x(), &params)
                            .map_err(CliError::runtime)?;
                        let spec = eig_sym(cleaned.values()).map_err(CliError::runtime)?;
                        sides
                            .iter()
                            .map(|&side| {
                                Ok(fcm(truth.spectrum(), &spec, side)
                                    .map_err(CliError::runtime)?
                                    .values)
                            })
                            .collect::<Result<Vec<_>, CliError>>()
                    })
                    .collect()
            })
            .collect();

        // mean curve per (method, side), accumulated in seed order
        let mut mean = vec![vec![vec![0.0f64; n]; sides.len()]; methods.len()];
        for seed_curves in per_seed {
            let seed_curves = seed_curves?;
            for (mi, m_curves) in seed_curves.iter().enumerate() {
                for (si, curve) in m_curves.iter().enumerate() {
                    for (acc, v) in mean[mi][si].iter_mut().zip(curve.iter()) {
                        *acc += v;
                    }
                }
            }
        }
        for m_curves in mean.iter_mut() {
            for curve in m_curves.iter_mut() {
                for v in curve.iter_mut() {
                    *v /= n_seeds as f64;
                }
            }
        }

        for (si, side) in sides.iter().enumerate() {
            let labels: Vec<String> = methods.iter().map(|m| m.label()).collect();
            let header = format!("n,{},random", labels.join(","));
            let rows: Vec<String> = (0..n)
                .map(|k| {
                    let cols: Vec<String> = (0..methods.len())
                        .map(|mi| mean[mi][si][k].to_string())
                        .collect();
                    format!("{},{},{}", k + 1, cols.join(","), benchmark.values[k])
                })
                .collect();
            let fname = format!(
                "fcm_nu{}_q{}_{}.csv",
                fmt_param(nu),
                fmt_param(q),
                side.label()
            );
            write_csv(&out.join(&fname), &header, &rows)?;
            println!("wrote {}", out.join(&fname).display());
            points.push(IndexPoint {
                nu,
                q,
                t,
                mode_side: side.label().to_string(),
                file: fname,
            });
        }
    }

    write_json(
        &out.join("fcm_index.json"),
        &Index {
            schema: "gcm.fcm.v1",
            n,
            n_seeds,
            benchmark_draws,
            seed,
            methods: methods.iter().map(|m| m.label()).collect(),
            truth: truth_spec,
            points,
        },
    )?;
    Ok(())
}
