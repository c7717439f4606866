//! `reid-lab`: train, evaluate, re-rank and compare re-identification models.
//!
//! Exit codes: 0 on success, 1 when a check or run fails, 2 when the
//! configuration or an input file is invalid.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use reid_core::experiment::{run_compare, run_evaluate, run_synth, run_train, ExperimentConfig};
use reid_core::gradcheck::{run_gradcheck, GradcheckOptions};
use reid_core::{EvalReport, Error};

#[derive(Parser)]
#[command(name = "reid-lab", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one model; writes checkpoint.json and train_report.csv.
    Train(Common),
    /// Evaluate a checkpoint or feature files; writes metrics.csv, cmc.csv, cmc.svg.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        eval: EvalFlags,
        /// Defaults to <out>/checkpoint.json.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Evaluate with k-reciprocal re-ranking switched on.
    Rerank {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        eval: EvalFlags,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Finite-difference check of every loss gradient.
    Gradcheck {
        /// Keep only cases containing this component, e.g. `vib` or `e2e`.
        #[arg(long)]
        only: Option<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Negate the analytic gradients; the run must then fail.
        #[arg(long, hide = true)]
        inject_sign_fault: bool,
    },
    /// Train and evaluate every configured loss variant; writes compare.csv.
    Compare(Common),
    /// Write the configured synthetic dataset to <out>/synthetic.csv.
    Synth(Common),
}

#[derive(Args)]
struct Common {
    /// JSON experiment config; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; overrides `output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalFlags {
    #[arg(long)]
    rerank: bool,
    #[arg(long)]
    k1: Option<usize>,
    #[arg(long)]
    k2: Option<usize>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    max_rank: Option<usize>,
}

impl Common {
    fn load(&self) -> reid_core::Result<ExperimentConfig> {
        let mut config = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if let Some(out) = &self.out {
            config.output_dir = out.clone();
        }
        Ok(config)
    }
}

impl EvalFlags {
    fn apply(&self, config: &mut ExperimentConfig, force_rerank: bool) {
        let eval = &mut config.eval;
        eval.rerank |= self.rerank || force_rerank;
        if let Some(k1) = self.k1 {
            eval.rerank_params.k1 = k1;
        }
        if let Some(k2) = self.k2 {
            eval.rerank_params.k2 = k2;
        }
        if let Some(lambda) = self.lambda {
            eval.rerank_params.lambda = lambda;
        }
        if let Some(max_rank) = self.max_rank {
            eval.max_rank = max_rank;
        }
    }
}

fn print_report(label: &str, r: &EvalReport) {
    println!(
        "{label:<8} mAP {:.4}  rank-1 {:.4}  rank-5 {:.4}  rank-10 {:.4}  ({} queries, {} excluded)",
        r.map,
        r.rank(1),
        r.rank(5),
        r.rank(10),
        r.num_evaluated,
        r.num_excluded
    );
}

fn evaluate(common: &Common, eval: &EvalFlags, checkpoint: Option<&PathBuf>, force_rerank: bool) -> anyhow::Result<u8> {
    let mut config = common.load()?;
    eval.apply(&mut config, force_rerank);
    let run = run_evaluate(&config, checkpoint.map(PathBuf::as_path))?;
    print_report("L2", &run.base);
    if let Some(r) = &run.reranked {
        print_report("rerank", r);
    }
    println!("wrote {}", run.metrics.display());
    Ok(0)
}

/// Runs one command and returns its exit status.
fn run(cli: Cli) -> anyhow::Result<u8> {
    match cli.command {
        Command::Train(common) => {
            let run = run_train(&common.load()?)?;
            if let Some(last) = run.outcome.report.epochs.last() {
                println!("epoch {} loss {:.6} entropy {:.6}", last.epoch, last.mean_loss, last.mean_entropy);
            }
            println!("wrote {} and {}", run.checkpoint.display(), run.report.display());
            Ok(0)
        }
        Command::Evaluate { common, eval, checkpoint } => evaluate(&common, &eval, checkpoint.as_ref(), false),
        Command::Rerank { common, eval, checkpoint } => evaluate(&common, &eval, checkpoint.as_ref(), true),
        Command::Gradcheck {
            only,
            seed,
            inject_sign_fault,
        } => {
            let results = run_gradcheck(&GradcheckOptions {
                only,
                seed,
                inject_sign_fault,
                ..GradcheckOptions::default()
            })?;
            if results.is_empty() {
                return Err(Error::Config("--only matched no gradient check".into()).into());
            }
            println!("{:<14} {:>9} {:>12} {:>9}  result", "case", "instances", "max_rel_err", "tolerance");
            for r in &results {
                println!(
                    "{:<14} {:>9} {:>12.3e} {:>9.0e}  {}",
                    r.name,
                    r.instances,
                    r.max_error,
                    r.tolerance,
                    if r.passed { "PASS" } else { "FAIL" }
                );
            }
            Ok(if results.iter().all(|r| r.passed) { 0 } else { 1 })
        }
        Command::Compare(common) => {
            let config = common.load()?;
            let rows = run_compare(&config)?;
            println!("{:<10} {:>8} {:>8} {:>14} {:>11}", "variant", "mAP", "rank-1", "final_entropy", "final_loss");
            for r in &rows {
                println!("{:<10} {:>8.4} {:>8.4} {:>14.6} {:>11.6}", r.variant, r.map, r.rank1, r.final_entropy, r.final_loss);
            }
            println!("wrote {}", config.output_dir.join("compare.csv").display());
            Ok(0)
        }
        Command::Synth(common) => {
            let config = common.load()?;
            let path = config.output_dir.join("synthetic.csv");
            let ds = run_synth(&config, &path)?;
            println!("wrote {} ({} samples)", path.display(), ds.train.len() + ds.query.len() + ds.gallery.len());
            Ok(0)
        }
    }
}

fn init_threads() -> anyhow::Result<()> {
    let Ok(value) = std::env::var("REID_LAB_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::Config(format!("REID_LAB_THREADS must be a positive integer, got {value:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .context("configuring the worker pool")
}

/// Maps a failure to exit status 2 for invalid input and 1 otherwise.
fn status(result: anyhow::Result<u8>) -> u8 {
    result.unwrap_or_else(|err| {
        eprintln!("error: {err:#}");
        if err.downcast_ref::<Error>().is_some_and(Error::is_validation) {
            2
        } else {
            1
        }
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    ExitCode::from(status(init_threads().and_then(|()| run(cli))))
}

#[cfg(test)]
mod tests {
    use std::path::Path;

    use reid_core::eval::{read_cmc_csv, read_metrics_csv, write_features, FeatureSet};
    use reid_core::experiment::read_train_report;
    use reid_core::{Matrix, SampleMeta};

    use super::*;

    fn cli(args: &[&str]) -> u8 {
        let cli = Cli::try_parse_from(std::iter::once("reid-lab").chain(args.iter().copied())).unwrap();
        status(run(cli))
    }

    fn write_config(dir: &Path, dataset: &str, extra: &str) -> String {
        let path = dir.join("exp.json");
        let text = format!(
            r#"{{"dataset": {dataset}, "model": {{"hidden": [16], "feature_dim": 8}}, "train": {{"epochs": 3}}{extra}}}"#
        );
        std::fs::write(&path, text).unwrap();
        path.to_str().unwrap().to_owned()
    }

    const SMALL: &str = r#"{"synthetic": {"num_identities": 12, "confusable_pairs": 2, "dim": 8}}"#;

    fn metric(rows: &[(String, f64)], name: &str) -> f64 {
        rows.iter().find(|(k, _)| k == name).unwrap().1
    }

    #[test]
    fn train_is_deterministic_and_evaluates() {
        let tmp = tempfile::tempdir().unwrap();
        let config = write_config(tmp.path(), SMALL, "");
        let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
        for out in [&a, &b] {
            assert_eq!(cli(&["train", "--config", &config, "--seed", "3", "--out", out.to_str().unwrap()]), 0);
            assert!(out.join("checkpoint.json").exists());
        }
        let report = std::fs::read(a.join("train_report.csv")).unwrap();
        assert_eq!(report, std::fs::read(b.join("train_report.csv")).unwrap());
        assert_eq!(read_train_report(a.join("train_report.csv")).unwrap().len(), 3);

        let out = a.to_str().unwrap();
        assert_eq!(cli(&["evaluate", "--config", &config, "--seed", "3", "--out", out, "--rerank", "--lambda", "1.0"]), 0);
        let rows = read_metrics_csv(a.join("metrics.csv")).unwrap();
        assert!((metric(&rows, "map") - metric(&rows, "map_rerank")).abs() <= 1e-9);
        let (base, reranked) = read_cmc_csv(a.join("cmc.csv")).unwrap();
        assert_eq!(base.len(), 20);
        assert!(reranked.is_some());
        assert!(a.join("cmc.svg").exists());

        assert_eq!(cli(&["rerank", "--config", &config, "--seed", "3", "--out", out, "--k1", "5", "--k2", "2"]), 0);
        assert!(read_metrics_csv(a.join("metrics.csv")).unwrap().iter().any(|(k, _)| k == "rank1_rerank"));
        assert_eq!(cli(&["evaluate", "--config", &config, "--out", out, "--checkpoint", "/no/such/checkpoint.json"]), 2);
    }

    #[test]
    fn missing_dataset_is_a_validation_error() {
        let tmp = tempfile::tempdir().unwrap();
        let config = write_config(tmp.path(), r#"{"market_dir": "/no/such/market"}"#, "");
        let out = tmp.path().join("out");
        let cli_args = Cli::try_parse_from(["reid-lab", "train", "--config", &config, "--out", out.to_str().unwrap()]).unwrap();
        let err = run(cli_args).unwrap_err();
        assert!(err.to_string().contains("/no/such/market"));
        assert_eq!(cli(&["train", "--config", &config, "--out", out.to_str().unwrap()]), 2);
        assert!(!out.exists());
        assert_eq!(cli(&["train", "--config", tmp.path().join("absent.json").to_str().unwrap()]), 2);
        std::fs::write(tmp.path().join("typo.json"), r#"{"train": {"epoch": 3}}"#).unwrap();
        assert_eq!(cli(&["train", "--config", tmp.path().join("typo.json").to_str().unwrap()]), 2);
    }

    fn feature_file(path: &Path, rows: &[(Vec<f64>, u32, u32)]) -> String {
        let features = Matrix::from_rows(&rows.iter().map(|r| r.0.clone()).collect::<Vec<_>>()).unwrap();
        let meta = rows.iter().map(|r| SampleMeta { identity: r.1, camera: r.2 }).collect();
        write_features(&FeatureSet::new(features, meta).unwrap(), path).unwrap();
        path.to_str().unwrap().to_owned()
    }

    #[test]
    fn separated_features_give_perfect_map() {
        let tmp = tempfile::tempdir().unwrap();
        let center = |id: u32| vec![100.0 * id as f64, -50.0 * id as f64];
        let jitter = |id: u32, k: u32| center(id).into_iter().map(|v| v + 0.01 * k as f64).collect::<Vec<_>>();
        let query: Vec<_> = (0..4).map(|id| (jitter(id, 0), id, 0)).collect();
        let gallery: Vec<_> = (0..4).flat_map(|id| (1..4).map(move |k| (jitter(id, k), id, 1))).collect();
        let q = feature_file(&tmp.path().join("q.bin"), &query);
        let g = feature_file(&tmp.path().join("g.bin"), &gallery);
        let config = write_config(tmp.path(), &format!(r#"{{"features": {{"query": "{q}", "gallery": "{g}"}}}}"#), "");
        let out = tmp.path().join("out");
        assert_eq!(cli(&["evaluate", "--config", &config, "--out", out.to_str().unwrap(), "--max-rank", "5"]), 0);
        let rows = read_metrics_csv(out.join("metrics.csv")).unwrap();
        assert_eq!(metric(&rows, "map"), 1.0);
        assert_eq!(metric(&rows, "rank1"), 1.0);

        let narrow: Vec<_> = gallery.iter().map(|(f, id, cam)| (f[..1].to_vec(), *id, *cam)).collect();
        let g1 = feature_file(&tmp.path().join("g1.bin"), &narrow);
        let config = write_config(tmp.path(), &format!(r#"{{"features": {{"query": "{q}", "gallery": "{g1}"}}}}"#), "");
        assert_eq!(cli(&["evaluate", "--config", &config, "--out", out.to_str().unwrap()]), 2);
    }

    #[test]
    fn gradcheck_filter_and_fault() {
        assert_eq!(cli(&["gradcheck", "--only", "vib"]), 0);
        assert_eq!(cli(&["gradcheck", "--only", "e2e/xent", "--inject-sign-fault"]), 1);
        assert_eq!(cli(&["gradcheck", "--only", "nothing"]), 2);
    }

    #[test]
    fn compare_needs_two_variants() {
        let tmp = tempfile::tempdir().unwrap();
        let one = r#", "variants": [{"name": "xent", "loss": {"alpha": 1.0}}]"#;
        let config = write_config(tmp.path(), SMALL, one);
        let out = tmp.path().join("out");
        assert_eq!(cli(&["compare", "--config", &config, "--out", out.to_str().unwrap()]), 2);

        let two = r#", "variants": [{"name": "xent", "loss": {"alpha": 1.0}},
            {"name": "cp", "loss": {"alpha": 1.0, "penalties": [{"confidence_penalty": {"beta": 0.085}}]}}]"#;
        let config = write_config(tmp.path(), SMALL, two);
        assert_eq!(cli(&["compare", "--config", &config, "--out", out.to_str().unwrap()]), 0);
        let mut reader = csv::Reader::from_path(out.join("compare.csv")).unwrap();
        assert_eq!(reader.headers().unwrap(), vec!["variant", "map", "rank1", "final_entropy", "final_loss"]);
        let rows: Vec<csv::StringRecord> = reader.records().map(Result::unwrap).collect();
        assert_eq!(rows.len(), 2);
        assert_eq!(&rows[1][0], "cp");
        for row in &rows {
            for field in row.iter().skip(1) {
                let v: f64 = field.parse().unwrap();
                assert_eq!(v.to_string(), field);
            }
        }
    }

    #[test]
    fn synth_writes_dataset_table() {
        let tmp = tempfile::tempdir().unwrap();
        let config = write_config(tmp.path(), SMALL, "");
        assert_eq!(cli(&["synth", "--config", &config, "--out", tmp.path().to_str().unwrap()]), 0);
        let ds = reid_core::data::read_dataset_table(tmp.path().join("synthetic.csv")).unwrap();
        assert_eq!(ds.query.len(), 12);
    }
}
