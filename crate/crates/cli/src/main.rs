//! `rawsense` — synthetic CSI generation, preprocessing, training,
//! cross-validation, ablations, and diagnostics over CSIT dataset files.
//!
//! Exit codes: 0 success, 1 failed verification (gradcheck), 2 usage or
//! config error, 3 data error, 4 diverged training loss.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use rawsense_core::config::{ConfigError, ConfigFile};
use rawsense_core::csi::{read_dataset, write_dataset, CsiDataset};
use rawsense_core::framework::{self, AblationKnob, ArchitectureSpec};
use rawsense_core::harness::{
    self, cross_validate, emit_ablation_table, emit_report, preprocess_dataset, read_report,
    run_ablation, train_once, HarnessError, InputMode, ReportFormat, RunReport, TrainConfig,
};
use rawsense_core::nn::{
    check_network_gradients, check_softmax_gradients, save_checkpoint, sweep_layer_checks,
    CheckTarget,
};
use rawsense_core::sigproc::{straddling_pair, unwrap};

const EXIT_CHECK_FAILED: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_DATA: u8 = 3;
const EXIT_DIVERGED: u8 = 4;

#[derive(Parser)]
#[command(
    name = "rawsense",
    version,
    about = "Radio-based context awareness from raw complex CSI"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Run configuration file (INI-style; see README for the grammar).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override the seed of every stage in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output path; stdout when omitted (reports) or required (datasets).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Report format: json or csv.
    #[arg(long, global = true, default_value = "json")]
    format: String,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic CSI dataset as a CSIT file.
    Synth {
        /// Write a per-class train/test split instead of one file.
        #[arg(long)]
        train_out: Option<PathBuf>,
        #[arg(long)]
        test_out: Option<PathBuf>,
        /// Train instances per class for the split (default from config).
        #[arg(long)]
        train_per_class: Option<usize>,
    },
    /// Apply an input-mode transform to a CSIT dataset.
    Preprocess {
        #[arg(long)]
        input: PathBuf,
        /// raw_complex, amplitude_only, or sanitized_complex.
        #[arg(long)]
        mode: String,
    },
    /// Train on a train/test split and emit a run report.
    Train {
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        test: PathBuf,
        /// Also save the trained model as a CSIM checkpoint.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Stratified k-fold cross-validation over one dataset.
    Crossval {
        #[arg(long)]
        data: PathBuf,
        /// Fold count (default from config, then 5).
        #[arg(long)]
        k: Option<usize>,
    },
    /// Run the baseline plus ablated variants and emit a comparison table.
    Ablate {
        #[arg(long)]
        data: PathBuf,
        /// Comma list: conv_depth=K, batch_norm_off, avg_pool_off.
        #[arg(long)]
        knobs: String,
        #[arg(long)]
        k: Option<usize>,
    },
    /// Verify every layer's gradients against central finite differences.
    Gradcheck {
        /// Random configurations per layer family.
        #[arg(long, default_value_t = 20)]
        configs: usize,
    },
    /// Emit the unwrap-instability demonstration as CSV.
    DemoUnwrap,
    /// Re-emit a stored JSON run report (e.g. as CSV).
    Report {
        #[arg(long)]
        input: PathBuf,
    },
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Failure {
        Failure {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }

    fn data(message: impl Into<String>) -> Failure {
        Failure {
            code: EXIT_DATA,
            message: message.into(),
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Failure {
        Failure::usage(e.to_string())
    }
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Failure {
        let code = match &e {
            HarnessError::Usage(_) => EXIT_USAGE,
            HarnessError::DivergedLoss { .. } => EXIT_DIVERGED,
            _ => EXIT_DATA,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

impl From<rawsense_core::csi::CsiError> for Failure {
    fn from(e: rawsense_core::csi::CsiError) -> Failure {
        Failure::data(e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Failure {
        Failure::data(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn load_config(path: &Option<PathBuf>) -> Result<ConfigFile, Failure> {
    match path {
        None => Ok(ConfigFile::default()),
        Some(p) => ConfigFile::load(p)
            .map_err(|e| Failure::usage(format!("cannot read config {}: {e}", p.display())))?
            .map_err(Failure::from),
    }
}

fn load_dataset(path: &Path) -> Result<CsiDataset, Failure> {
    let file = File::open(path)
        .map_err(|e| Failure::data(format!("cannot open {}: {e}", path.display())))?;
    Ok(read_dataset(BufReader::new(file))?)
}

fn save_dataset(ds: &CsiDataset, path: &Path) -> Result<(), Failure> {
    let file = File::create(path)
        .map_err(|e| Failure::data(format!("cannot create {}: {e}", path.display())))?;
    write_dataset(ds, BufWriter::new(file))?;
    Ok(())
}

/// Architecture from the config's `[architecture]` section; the activity
/// preset over the dataset's shape when the section is absent.
fn resolve_arch(cf: &ConfigFile, ds: &CsiDataset) -> Result<ArchitectureSpec, Failure> {
    if cf.section("architecture").is_empty() {
        framework::activity_preset(ds.input_shape(), ds.num_classes())
            .map_err(|e| Failure::data(e.to_string()))
    } else {
        Ok(cf.architecture(Some(ds.input_shape()), Some(ds.num_classes()))?)
    }
}

fn train_config(cf: &ConfigFile, seed: &Option<u64>) -> Result<TrainConfig, Failure> {
    let mut tc = cf.train_config()?;
    if let Some(s) = seed {
        tc.seed = *s;
    }
    Ok(tc)
}

fn emit_to_out<F>(out: &Option<PathBuf>, emit: F) -> Result<(), Failure>
where
    F: FnOnce(&mut dyn Write) -> Result<(), Failure>,
{
    match out {
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            emit(&mut lock)
        }
        Some(path) => {
            let file = File::create(path)
                .map_err(|e| Failure::data(format!("cannot create {}: {e}", path.display())))?;
            let mut writer = BufWriter::new(file);
            emit(&mut writer)
        }
    }
}

fn emit_run_report(
    report: &RunReport,
    format: ReportFormat,
    out: &Option<PathBuf>,
) -> Result<(), Failure> {
    emit_to_out(out, |w| {
        emit_report(report, format, w)?;
        Ok(())
    })
}

fn parse_knobs(raw: &str) -> Result<Vec<AblationKnob>, Failure> {
    raw.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|item| {
            if item == "batch_norm_off" {
                Ok(AblationKnob::BatchNormOff)
            } else if item == "avg_pool_off" {
                Ok(AblationKnob::AvgPoolOff)
            } else if let Some(k) = item.strip_prefix("conv_depth=") {
                k.parse()
                    .map(AblationKnob::ConvDepth)
                    .map_err(|_| Failure::usage(format!("bad conv_depth in '{item}'")))
            } else {
                Err(Failure::usage(format!(
                    "unknown knob '{item}' (expected conv_depth=K, batch_norm_off, avg_pool_off)"
                )))
            }
        })
        .collect()
}

fn run(cli: Cli) -> Result<(), Failure> {
    // Fail on a bad --format before any work or bytes.
    let format = ReportFormat::parse(&cli.format)?;
    let cf = load_config(&cli.config)?;

    match cli.command {
        Command::Synth {
            train_out,
            test_out,
            train_per_class,
        } => {
            let mut synth_cfg = cf.synth_config()?;
            if let Some(s) = cli.seed {
                synth_cfg.seed = s;
            }
            let ds = rawsense_core::synth::generate(&synth_cfg).map_err(HarnessError::from)?;
            match (&cli.out, &train_out, &test_out) {
                (Some(out), None, None) => {
                    save_dataset(&ds, out)?;
                    eprintln!(
                        "wrote {} instances ({} classes) to {}",
                        ds.len(),
                        ds.num_classes(),
                        out.display()
                    );
                }
                (None, Some(train_path), Some(test_path)) => {
                    let per_class = match train_per_class {
                        Some(n) => n,
                        None => cf.train_per_class()?,
                    };
                    let (train, test) = ds.split_per_class(per_class)?;
                    save_dataset(&train, train_path)?;
                    save_dataset(&test, test_path)?;
                    eprintln!(
                        "wrote {} train / {} test instances",
                        train.len(),
                        test.len()
                    );
                }
                _ => {
                    return Err(Failure::usage(
                        "synth needs either --out FILE or both --train-out and --test-out",
                    ))
                }
            }
            Ok(())
        }
        Command::Preprocess { input, mode } => {
            let out = cli
                .out
                .as_ref()
                .ok_or_else(|| Failure::usage("preprocess needs --out FILE"))?;
            let mode = InputMode::parse(&mode)?;
            let pipeline = cf.pipeline_config()?;
            let ds = load_dataset(&input)?;
            let cooked = preprocess_dataset(&ds, mode, &pipeline)?;
            save_dataset(&cooked, out)
        }
        Command::Train {
            train,
            test,
            checkpoint,
        } => {
            let tc = train_config(&cf, &cli.seed)?;
            let pipeline = cf.pipeline_config()?;
            let train_ds = preprocess_dataset(&load_dataset(&train)?, tc.input_mode, &pipeline)?;
            let test_ds = preprocess_dataset(&load_dataset(&test)?, tc.input_mode, &pipeline)?;
            let arch = resolve_arch(&cf, &train_ds)?;
            let (fold, net) = train_once(&train_ds, &test_ds, &arch, &tc)?;
            if let Some(path) = checkpoint {
                let file = File::create(&path)
                    .map_err(|e| Failure::data(format!("cannot create {}: {e}", path.display())))?;
                save_checkpoint(&net, BufWriter::new(file)).map_err(HarnessError::from)?;
            }
            let report = harness::single_run_report(fold, &arch, &tc);
            emit_run_report(&report, format, &cli.out)
        }
        Command::Crossval { data, k } => {
            let tc = train_config(&cf, &cli.seed)?;
            let pipeline = cf.pipeline_config()?;
            let ds = preprocess_dataset(&load_dataset(&data)?, tc.input_mode, &pipeline)?;
            let arch = resolve_arch(&cf, &ds)?;
            let k = match k {
                Some(k) => k,
                None => cf.folds()?,
            };
            let report = cross_validate(&ds, &arch, &tc, k)?;
            emit_run_report(&report, format, &cli.out)?;
            if report
                .per_fold
                .iter()
                .any(|f| f.diverged_at_epoch.is_some())
            {
                return Err(Failure {
                    code: EXIT_DIVERGED,
                    message: "one or more folds diverged (see report)".into(),
                });
            }
            Ok(())
        }
        Command::Ablate { data, knobs, k } => {
            let tc = train_config(&cf, &cli.seed)?;
            let pipeline = cf.pipeline_config()?;
            let ds = preprocess_dataset(&load_dataset(&data)?, tc.input_mode, &pipeline)?;
            let arch = resolve_arch(&cf, &ds)?;
            let knobs = parse_knobs(&knobs)?;
            let k = match k {
                Some(k) => k,
                None => cf.folds()?,
            };
            let table = run_ablation(&ds, &arch, &knobs, &tc, k)?;
            emit_to_out(&cli.out, |w| {
                emit_ablation_table(&table, format, w)?;
                Ok(())
            })
        }
        Command::Gradcheck { configs } => {
            let seed = cli.seed.unwrap_or(1000);
            let tol = 1e-4;
            let h = 1e-5;
            let mut all_ok = true;
            for target in CheckTarget::ALL {
                let report =
                    sweep_layer_checks(target, configs, seed, h).map_err(HarnessError::from)?;
                let ok = report.passes(tol);
                all_ok &= ok;
                println!(
                    "{:<11} max rel err {:.3e} over {} elements [{}]",
                    target.name(),
                    report.max_rel_err,
                    report.checked,
                    if ok { "PASS" } else { "FAIL" }
                );
            }
            let mut softmax_err = 0.0f64;
            for i in 0..configs {
                softmax_err =
                    softmax_err.max(check_softmax_gradients(2 + (i % 7), seed + i as u64, h));
            }
            let ok = softmax_err < tol;
            all_ok &= ok;
            println!(
                "{:<11} max rel err {:.3e} over {} configs [{}]",
                "softmax",
                softmax_err,
                configs,
                if ok { "PASS" } else { "FAIL" }
            );
            // Composed end-to-end network, dropout disabled.
            let spec = ArchitectureSpec {
                input_shape: (6, 8, 2),
                num_classes: 3,
                conv_stages: vec![
                    framework::ConvStage {
                        kernel: (2, 1),
                        stride: (2, 1),
                        filters: 3,
                        batch_norm: true,
                    },
                    framework::ConvStage {
                        kernel: (1, 3),
                        stride: (1, 1),
                        filters: 3,
                        batch_norm: true,
                    },
                ],
                pool_bank: vec![(1, 2), (3, 4)],
                fc_stages: vec![framework::FcStage {
                    units: 10,
                    dropout: 0.0,
                }],
            };
            let net = framework::build(&spec, seed).map_err(|e| Failure::data(e.to_string()))?;
            let mut rng = rawsense_core::rng::Rng::substream(seed, &[0xe2e]);
            let batch = rawsense_core::Tensor::from_fn(&[4, 6, 8, 2], |_| rng.uniform(-1.0, 1.0));
            let labels = vec![0, 1, 2, 0];
            let report =
                check_network_gradients(&net, &batch, &labels, h).map_err(HarnessError::from)?;
            let ok = report.passes(tol);
            all_ok &= ok;
            println!(
                "{:<11} max rel err {:.3e} over {} elements [{}]",
                "end_to_end",
                report.max_rel_err,
                report.checked,
                if ok { "PASS" } else { "FAIL" }
            );
            if all_ok {
                Ok(())
            } else {
                Err(Failure {
                    code: EXIT_CHECK_FAILED,
                    message: format!("gradient check exceeded tolerance {tol}"),
                })
            }
        }
        Command::DemoUnwrap => {
            let threshold = cf.pipeline_config()?.unwrap_threshold;
            let (a, b) = straddling_pair();
            let (ua, ub) = (unwrap(&a, threshold), unwrap(&b, threshold));
            emit_to_out(&cli.out, |w| {
                writeln!(w, "subcarrier,rawA,rawB,unwrappedA,unwrappedB").map_err(Failure::from)?;
                for j in 0..a.len() {
                    writeln!(
                        w,
                        "{},{},{},{},{}",
                        j, a.values[j], b.values[j], ua.values[j], ub.values[j]
                    )
                    .map_err(Failure::from)?;
                }
                Ok(())
            })
        }
        Command::Report { input } => {
            let file = File::open(&input)
                .map_err(|e| Failure::data(format!("cannot open {}: {e}", input.display())))?;
            let report = read_report(BufReader::new(file))?;
            emit_run_report(&report, format, &cli.out)
        }
    }
}
