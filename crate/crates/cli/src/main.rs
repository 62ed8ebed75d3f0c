use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use nclass::alcla::{self, AlClaConfig, Checkpoint, DecisionRule, EpochRecord};
use nclass::baselines::{lambda_sweep, write_curves, AccuracyReport, DEFAULT_LAMBDA_GRID};
use nclass::dataset::{preset, simulate, witness_curve, write_atomic, Dataset, DatasetConfig};
use nclass::detectors::DetectorModel;
use nclass::fockstats::Label;
use nclass::witnesses::WitnessKind;
use thiserror::Error;

#[derive(Parser)]
#[command(name = "nclass", version, about = "Nonclassicality datasets, witnesses and the algebraic classifier")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a dataset from a config file or a built-in preset.
    Simulate {
        #[arg(long, conflicts_with = "preset")]
        config: Option<PathBuf>,
        /// table1, table2, table3 or table4.
        #[arg(long)]
        preset: Option<String>,
        /// Samples per state for presets.
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a classifier; writes a checkpoint and a per-epoch history CSV.
    Train {
        #[arg(long)]
        dataset: PathBuf,
        /// Model config JSON; missing fields take defaults, d_x comes from the dataset.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        /// Defaults to <out>.history.csv.
        #[arg(long)]
        history: Option<PathBuf>,
    },
    /// Score a checkpoint on a dataset; writes per-state predictions CSV.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Bias sweep of a classical witness.
    Witness {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        witness: String,
        /// Comma list or lo:hi:count.
        #[arg(long, default_value = "-0.5:0.5:21", allow_hyphen_values = true)]
        bias_grid: String,
        /// Dataset config supplying the detector when the dataset records lack one.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// λ sweep of the classifier.
    Sweep {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, allow_hyphen_values = true)]
        lambda_grid: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] nclass::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        use nclass::Error as E;
        match self {
            CliError::Usage(_) => 1,
            CliError::Core(E::Io(_) | E::Truncation { .. } | E::BasisOverflow { .. }) => 2,
            CliError::Core(_) => 1,
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Simulate { config, preset: name, samples, seed, out } => {
            let mut cfg = match (config, name) {
                (Some(path), None) => DatasetConfig::load(path)?,
                (None, Some(name)) => preset(&name, samples, seed.unwrap_or(0))?,
                _ => return Err(CliError::Usage("simulate needs --config or --preset".into())),
            };
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let data = simulate(&cfg)?;
            data.write(&out)?;
            let ncl = data.count(Label::Nonclassical);
            println!("{} states ({} classical, {ncl} nonclassical) -> {}", data.len(), data.len() - ncl, out.display());
            Ok(())
        }
        Command::Train { dataset, config, seed, out, history } => {
            let data = read_dataset(&dataset)?;
            let cfg = model_config(config.as_deref(), data.d_x()?, seed)?;
            let outcome = alcla::train(&data.sample_sets()?, &cfg)?;
            let ckpt = Checkpoint::new(&cfg, &outcome);
            write_atomic(&out, ckpt.to_json()?.as_bytes())?;
            let history = history.unwrap_or_else(|| out.with_extension("history.csv"));
            write_atomic(&history, history_csv(&outcome.history).as_bytes())?;
            let last = match outcome.selected_epoch {
                Some(e) => &outcome.history[e],
                None => outcome.last(),
            };
            println!("rule: {}", DecisionRule::extract(&outcome.params, &outcome.basis));
            println!("train {}", describe(&last.train));
            if let Some(t) = &last.test {
                println!("test  {}", describe(t));
            }
            println!("checkpoint -> {}, history -> {}", out.display(), history.display());
            Ok(())
        }
        Command::Evaluate { checkpoint, dataset, out } => {
            let ckpt = Checkpoint::load(&checkpoint)?;
            let data = read_dataset(&dataset)?;
            if data.d_x()? != ckpt.config.d_x {
                return Err(nclass::Error::Dimension(format!(
                    "dataset has {} modes, checkpoint {}",
                    data.d_x()?,
                    ckpt.config.d_x
                ))
                .into());
            }
            let (params, basis) = (ckpt.params(), ckpt.basis()?);
            let mut csv = String::from("state_id,family,label,f,y,predicted\n");
            let mut preds = Vec::with_capacity(data.len());
            for (rec, s) in data.records.iter().zip(data.sample_sets()?) {
                let p = alcla::forward(&s, &params, &basis)?;
                preds.push(p.label());
                let _ = writeln!(
                    csv,
                    "{},{},{},{},{},{}",
                    rec.state_id,
                    rec.family,
                    rec.label,
                    p.f,
                    p.y,
                    p.label().as_u8()
                );
            }
            let report = nclass::baselines::accuracy_report(&preds, &data.labels()?)?;
            write_atomic(&out, csv.as_bytes())?;
            println!("{}", describe(&report));
            Ok(())
        }
        Command::Witness { dataset, witness, bias_grid, config, out } => {
            let data = read_dataset(&dataset)?;
            let w: WitnessKind = witness.parse()?;
            let detector = detector_for(&data, config.as_deref())?;
            let curve = witness_curve(&data, &detector, w, &parse_grid(&bias_grid)?)?;
            write_curves(&out, std::slice::from_ref(&curve))?;
            print_curve(&curve);
            Ok(())
        }
        Command::Sweep { dataset, config, lambda_grid, seed, out } => {
            let data = read_dataset(&dataset)?;
            let cfg = model_config(config.as_deref(), data.d_x()?, seed)?;
            let grid = match lambda_grid {
                Some(g) => parse_grid(&g)?,
                None => DEFAULT_LAMBDA_GRID.to_vec(),
            };
            let (curve, _) = lambda_sweep(&data.sample_sets()?, &cfg, &grid)?;
            write_curves(&out, std::slice::from_ref(&curve))?;
            print_curve(&curve);
            Ok(())
        }
    }
}

fn read_dataset(path: &Path) -> Result<Dataset> {
    let data = Dataset::read(path)?;
    if data.is_empty() {
        return Err(nclass::Error::Empty(format!("dataset {}", path.display())).into());
    }
    Ok(data)
}

fn model_config(path: Option<&Path>, d_x: usize, seed: Option<u64>) -> Result<AlClaConfig> {
    let mut cfg = match path {
        Some(p) => {
            let mut v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(p).map_err(nclass::Error::from)?)
                .map_err(nclass::Error::from)?;
            if let Some(obj) = v.as_object_mut() {
                obj.entry("d_x").or_insert(d_x.into());
            }
            serde_json::from_value::<AlClaConfig>(v).map_err(nclass::Error::from)?
        }
        None => AlClaConfig::new(d_x, 2),
    };
    if cfg.d_x != d_x {
        return Err(nclass::Error::Dimension(format!("model config has d_x = {}, dataset {d_x}", cfg.d_x)).into());
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn detector_for(data: &Dataset, config: Option<&Path>) -> Result<DetectorModel> {
    if let Some(p) = config {
        return Ok(DatasetConfig::load(p)?.detector);
    }
    data.detector().cloned().ok_or_else(|| {
        CliError::Usage("dataset records carry no detector; pass the dataset config with --config".into())
    })
}

/// "a,b,c" or "lo:hi:count" (inclusive, linear).
fn parse_grid(s: &str) -> Result<Vec<f64>> {
    let bad = || CliError::Usage(format!("bad grid '{s}'; use a,b,c or lo:hi:count"));
    let parts: Vec<&str> = s.split(':').collect();
    let grid = if parts.len() == 3 {
        let lo: f64 = parts[0].trim().parse().map_err(|_| bad())?;
        let hi: f64 = parts[1].trim().parse().map_err(|_| bad())?;
        let n: usize = parts[2].trim().parse().map_err(|_| bad())?;
        match n {
            0 => return Err(bad()),
            1 => vec![lo],
            _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
        }
    } else {
        s.split(',').map(|t| t.trim().parse::<f64>().map_err(|_| bad())).collect::<Result<Vec<_>>>()?
    };
    if grid.is_empty() || grid.iter().any(|v| !v.is_finite()) {
        return Err(bad());
    }
    Ok(grid)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |x| format!("{x:.4}"))
}

fn describe(r: &AccuracyReport) -> String {
    format!(
        "accuracy classical {} nonclassical {} total {:.4}",
        fmt_opt(r.classical),
        fmt_opt(r.nonclassical),
        r.total
    )
}

fn history_csv(history: &[EpochRecord]) -> String {
    let mut s = String::from(
        "epoch,loss,lr,train_acc_classical,train_acc_nonclassical,train_total,test_acc_classical,test_acc_nonclassical,test_total\n",
    );
    let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
    for e in history {
        let (tc, tn, tt) = match &e.test {
            Some(t) => (opt(t.classical), opt(t.nonclassical), t.total.to_string()),
            None => (String::new(), String::new(), String::new()),
        };
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{tc},{tn},{tt}",
            e.epoch,
            e.loss,
            e.lr,
            opt(e.train.classical),
            opt(e.train.nonclassical),
            e.train.total
        );
    }
    s
}

fn print_curve(curve: &nclass::baselines::TradeoffCurve) {
    println!("{:>10} {:>10} {:>10} {:>8}", "param", "classical", "nonclass", "total");
    for p in &curve.points {
        println!("{:>10.4} {:>10.4} {:>10.4} {:>8.4}", p.param, p.acc_classical, p.acc_nonclassical, p.total);
    }
}
