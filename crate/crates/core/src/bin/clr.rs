use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::info;

use clr::bench::{self, CodeTableSpec, FitReport};
use clr::codec::stream_size;
use clr::config::RunConfig;
use clr::data::{load_csv, load_features_csv, RawDataset, SimSpec};
use clr::ratcode::{fit_alpha_constants, AlphaFitGrid};
use clr::{ClrError, Result};

#[derive(Parser)]
#[command(name = "clr", version, about = "Compressive linear regression")]
struct Cli {
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for the optimizer, simulations and splits.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file or directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Name of the target column (default: last column).
    #[arg(long = "target-col", global = true)]
    target_col: Option<String>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Loss-lessly encode a dataset's target.
    Encode {
        input: PathBuf,
        /// Model from `clr fit`; fitted on the fly when omitted.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Restore the target from a stream and the feature columns.
    Decode {
        stream: PathBuf,
        /// CSV holding the feature columns used at encode time.
        #[arg(long)]
        features: PathBuf,
    },
    /// Fit a CLR model and print the report as JSON.
    Fit { input: PathBuf },
    /// Replicate the simulated-data study.
    Sim {
        /// sim1, sim2, sim3 or all.
        #[arg(long, default_value = "all")]
        name: String,
        #[arg(long)]
        replications: Option<usize>,
        /// JSON SimSpec overriding the named preset.
        #[arg(long)]
        spec: Option<PathBuf>,
    },
    /// Train/test comparison on local CSV datasets.
    Generalize {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
    /// Emit code-length tables as CSV.
    Codetables {
        /// JSON CodeTableSpec.
        #[arg(long)]
        grid: Option<PathBuf>,
    },
    /// Fit the constants of the smooth α length.
    Fitalpha {
        #[arg(long)]
        samples: Option<usize>,
    },
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => bench::write_text(p, text),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn out_dir(out: Option<&Path>) -> PathBuf {
    out.map_or_else(|| PathBuf::from("."), Path::to_path_buf)
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.optimizer.seed = s;
    }
    let seed = cli.seed.unwrap_or(0);
    let target = cli.target_col.as_deref();
    let out = cli.out.as_deref();

    match cli.cmd {
        Cmd::Fit { input } => {
            let ds = load_csv(&input, target)?;
            let report = bench::fit_dataset(&ds, &cfg)?;
            emit(out, &serde_json::to_string_pretty(&report)?)
        }
        Cmd::Encode { input, model } => {
            let ds = load_csv(&input, target)?;
            let model = match model {
                Some(p) => Some(FitReport::from_json(&std::fs::read_to_string(p)?)?.model),
                None => None,
            };
            let (stream, _) = bench::encode_dataset(&ds, &cfg, model.as_ref())?;
            let path = out.ok_or_else(|| ClrError::Config("encode needs --out".into()))?;
            bench::write_bytes(path, &stream.bytes)?;
            let summary = serde_json::json!({
                "bytes": stream.bytes.len(),
                "expected_bytes": stream_size(stream.exact.total_bits()),
                "param_bits": stream.exact.param_bits,
                "residual_bits": stream.exact.residual_bits,
                "exact_bits": stream.exact.total_bits(),
            });
            println!("{}", serde_json::to_string_pretty(&summary)?);
            Ok(())
        }
        Cmd::Decode { stream, features } => {
            let bytes = std::fs::read(&stream)?;
            let (obs, names) = load_features_csv(&features, target)?;
            let dec = bench::decode_dataset(&bytes, &obs, &names, &cfg)?;
            let ds = RawDataset::new(
                obs,
                nalgebra::DVector::from_vec(dec.target),
                names,
                target.unwrap_or("target"),
            )?;
            let path = out.ok_or_else(|| ClrError::Config("decode needs --out".into()))?;
            clr::data::write_csv(&ds, path)
        }
        Cmd::Sim {
            name,
            replications,
            spec,
        } => {
            let names: Vec<String> = if name == "all" {
                vec!["sim1".into(), "sim2".into(), "sim3".into()]
            } else {
                vec![name]
            };
            let dir = out_dir(out);
            let mut table = String::new();
            for n in names {
                let mut s = match &spec {
                    Some(p) => serde_json::from_str(&std::fs::read_to_string(p)?)
                        .map_err(|e| ClrError::Config(format!("sim spec: {e}")))?,
                    None => SimSpec::by_name(&n, seed)?,
                };
                if let Some(r) = replications {
                    s.n_datasets = r;
                }
                let rep = bench::run_sim(&n, &s, &cfg)?;
                bench::write_text(&dir.join(format!("{n}.json")), &serde_json::to_string_pretty(&rep)?)?;
                bench::write_text(&dir.join(format!("{n}_rows.csv")), &rep.rows_csv())?;
                let t = rep.table_csv();
                if table.is_empty() {
                    table = t;
                } else {
                    table.extend(t.lines().skip(1).map(|l| format!("{l}\n")));
                }
            }
            bench::write_text(&dir.join("table1.csv"), &table)?;
            print!("{table}");
            Ok(())
        }
        Cmd::Generalize { inputs } => {
            if cfg.features == clr::config::FeatureChoice::Identity && cli.config.is_none() {
                cfg.features = clr::config::FeatureChoice::Squares;
            }
            let datasets = bench::load_datasets(&inputs, target)?;
            let rep = bench::run_generalize(&datasets, &cfg, seed);
            let dir = out_dir(out);
            bench::write_text(&dir.join("generalize.json"), &serde_json::to_string_pretty(&rep)?)?;
            bench::write_text(&dir.join("generalize.csv"), &rep.csv())?;
            print!("{}", rep.csv());
            Ok(())
        }
        Cmd::Codetables { grid } => {
            let spec: CodeTableSpec = match grid {
                Some(p) => serde_json::from_str(&std::fs::read_to_string(p)?)
                    .map_err(|e| ClrError::Config(format!("grid: {e}")))?,
                None => CodeTableSpec::default(),
            };
            let t = bench::code_tables(&spec, &cfg.alpha, &cfg.sphere)?;
            let dir = out_dir(out);
            bench::write_text(&dir.join("u_lengths.csv"), &t.u)?;
            bench::write_text(&dir.join("alpha_lengths.csv"), &t.alpha)?;
            bench::write_text(&dir.join("sphere_lengths.csv"), &t.sphere)?;
            info!("tables written to {}", dir.display());
            Ok(())
        }
        Cmd::Fitalpha { samples } => {
            let mut grid = AlphaFitGrid::default();
            if let Some(s) = samples {
                grid.samples = s;
            }
            let fit = fit_alpha_constants(&grid)?;
            eprintln!(
                "mean abs error {:.4} bits over {} points",
                fit.mean_abs_error, fit.samples
            );
            emit(out, &fit.constants.to_json()?)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
