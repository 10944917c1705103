//! The `expandnet` command line: build, expand, train, compress, verify, eval.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::compression::compress_network;
use crate::data::{load_cifar, synthetic_split, CifarFlavor, Dataset};
use crate::error::Error;
use crate::expansion::{expand_network, ExpansionPlan, Strategies, DEFAULT_FC_DEPTH};
use crate::graph::{Mode, NetworkGraph};
use crate::persist::{blob_path, AnyNetwork};
use crate::tensor::{DType, Scalar, Tensor4};
use crate::train::{evaluate, train, train_with_counterpart_init, TrainConfig, TrainReport};
use crate::with_network;
use crate::zoo::ArchId;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_VERIFY: i32 = 4;

#[derive(Parser, Debug)]
#[command(name = "expandnet", version, about = "Expand, train and compress compact CNNs")]
pub struct Cli {
    /// Seed for every random choice made by the command.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Write a freshly initialized zoo architecture.
    Build {
        /// Architecture id, e.g. smallnet7-3conv-c10.
        arch: String,
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long, value_enum, default_value_t = DTypeArg::F32)]
        dtype: DTypeArg,
    },
    /// Expand a compact model into its linear over-parameterization.
    Expand {
        /// Model manifest path or architecture id.
        model: String,
        #[arg(short, long)]
        output: PathBuf,
        #[command(flatten)]
        plan: PlanArgs,
        #[arg(long, value_enum, default_value_t = DTypeArg::F32)]
        dtype: DTypeArg,
    },
    /// Train a model with SGD and write a JSONL report.
    Train {
        model: String,
        #[arg(short, long)]
        output: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        train: TrainArgs,
        /// Train the nonlinear counterpart first and start from its weights.
        #[arg(long)]
        init_from_counterpart: bool,
        /// Epochs for the counterpart run (defaults to --epochs).
        #[arg(long)]
        counterpart_epochs: Option<usize>,
        /// JSONL report path; printed to stdout when omitted.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Collapse every expansion unit back into a single layer.
    Compress {
        model: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Compare two models' outputs on random inputs. Passes when every
    /// output satisfies |a - b| <= tol * max(1, |a|, |b|).
    Verify {
        model_a: PathBuf,
        model_b: PathBuf,
        #[arg(long, default_value_t = 10)]
        trials: usize,
        #[arg(long, default_value_t = 1e-4)]
        tol: f64,
    },
    /// Top-1 accuracy on the eval split.
    Eval {
        model: String,
        #[command(flatten)]
        data: DataArgs,
    },
    /// Print a model's layers and parameter count.
    Info { model: String },
}

#[derive(Args, Debug)]
pub struct PlanArgs {
    #[arg(long)]
    pub fc: bool,
    #[arg(long)]
    pub cl: bool,
    #[arg(long)]
    pub ck: bool,
    #[arg(long, default_value_t = 4)]
    pub rate: usize,
    /// Number of layers an FC expansion produces.
    #[arg(long, default_value_t = DEFAULT_FC_DEPTH)]
    pub depth: usize,
    /// Keep the input width of the network's first convolution.
    #[arg(long)]
    pub table1_channels: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum DatasetKind {
    Cifar10,
    Cifar100,
    Synthetic,
}

#[derive(Args, Debug)]
pub struct DataArgs {
    #[arg(long, value_enum, default_value_t = DatasetKind::Cifar10)]
    pub dataset: DatasetKind,
    /// Directory holding the CIFAR binary files.
    #[arg(long, env = "EXPANDNET_DATA_DIR")]
    pub data_dir: Option<PathBuf>,
    /// Stratified subset size of the training split.
    #[arg(long)]
    pub subset: Option<usize>,
    #[arg(long, default_value_t = 1000)]
    pub synthetic_train: usize,
    #[arg(long, default_value_t = 200)]
    pub synthetic_eval: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum DTypeArg {
    F32,
    F64,
}

impl From<DTypeArg> for DType {
    fn from(d: DTypeArg) -> Self {
        match d {
            DTypeArg::F32 => DType::F32,
            DTypeArg::F64 => DType::F64,
        }
    }
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long, default_value_t = 150)]
    pub epochs: usize,
    #[arg(long, default_value_t = 128)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 0.01)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.9)]
    pub momentum: f64,
    #[arg(long, default_value_t = 0.0)]
    pub weight_decay: f64,
    /// Epochs at which the learning rate is multiplied by --lr-decay.
    /// Comma separated; an empty string disables decay.
    #[arg(long, default_value = "50,100", value_parser = parse_milestones)]
    pub lr_milestones: Milestones,
    #[arg(long, default_value_t = 0.1)]
    pub lr_decay: f64,
    /// Precision to train in; defaults to the model's own.
    #[arg(long, value_enum)]
    pub dtype: Option<DTypeArg>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Milestones(pub Vec<usize>);

fn parse_milestones(s: &str) -> Result<Milestones, String> {
    s.split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| p.parse().map_err(|_| format!("'{p}' is not an epoch number")))
        .collect::<Result<_, _>>()
        .map(Milestones)
}

enum Failure {
    Lib(Error),
    Verify(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

/// Exit code for a library error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::InvalidArgument(_) | Error::Plan(_) => EXIT_USAGE,
        _ => EXIT_DATA,
    }
}

/// Parses `args` and runs the command, returning the process exit code.
pub fn run<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match execute(cli) {
        Ok(()) => EXIT_OK,
        Err(Failure::Lib(e)) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
        Err(Failure::Verify(msg)) => {
            eprintln!("verification failed: {msg}");
            EXIT_VERIFY
        }
    }
}

fn execute(cli: Cli) -> Result<(), Failure> {
    let seed = cli.seed;
    match cli.command {
        Command::Build { arch, output, dtype } => {
            let net = build_any(&arch.parse()?, dtype.into(), seed);
            net.save(&output)?;
            println!("{} parameters -> {}", net.param_count(), output.display());
        }
        Command::Expand {
            model,
            output,
            plan,
            dtype,
        } => cmd_expand(&model, &output, &plan, dtype.into(), seed)?,
        Command::Train {
            model,
            output,
            data,
            train,
            init_from_counterpart,
            counterpart_epochs,
            report,
        } => {
            let cfg = TrainConfig {
                epochs: train.epochs,
                batch_size: train.batch_size,
                lr: train.lr,
                momentum: train.momentum,
                weight_decay: train.weight_decay,
                lr_milestones: train.lr_milestones.0,
                lr_decay: train.lr_decay,
                seed,
                dtype: DType::F32,
            };
            let mut net = resolve_model(&model, train.dtype.map(Into::into).unwrap_or(DType::F32), seed)?;
            if let Some(d) = train.dtype {
                net = convert(net, d.into());
            }
            let cfg = TrainConfig {
                dtype: net.dtype(),
                ..cfg
            };
            cfg.validate()?;
            let (train_set, eval_set) = load_data(&data, net.num_classes(), seed)?;
            let counterpart_epochs = init_from_counterpart.then(|| counterpart_epochs.unwrap_or(cfg.epochs));
            let (cp_report, main_report) =
                with_network!(&mut net, n => run_training(n, &train_set, &eval_set, &cfg, counterpart_epochs))?;
            match report {
                Some(path) => {
                    write(&path, main_report.to_jsonl().as_bytes())?;
                    if let Some(cp) = &cp_report {
                        write(&counterpart_report_path(&path), cp.to_jsonl().as_bytes())?;
                    }
                }
                None => {
                    if let Some(cp) = &cp_report {
                        print!("{}", cp.to_jsonl());
                    }
                    print!("{}", main_report.to_jsonl());
                }
            }
            net.save(&output)?;
            if let Some(acc) = main_report.final_accuracy() {
                eprintln!("final top-1 {acc:.2}% -> {}", output.display());
            }
        }
        Command::Compress { model, output } => {
            let net = AnyNetwork::load(&model)?;
            let compact: AnyNetwork = with_network!(&net, n => compress_network(n)?.into());
            compact.save(&output)?;
            println!(
                "{} -> {} parameters -> {}",
                net.param_count(),
                compact.param_count(),
                output.display()
            );
        }
        Command::Verify {
            model_a,
            model_b,
            trials,
            tol,
        } => {
            let a = AnyNetwork::load(&model_a)?;
            let b = AnyNetwork::load(&model_b)?;
            let d = compare_outputs(&a, &b, trials, seed)?;
            println!(
                "max_abs_diff={:e} max_rel_diff={:e} trials={trials} tol={tol:e}",
                d.max_abs, d.max_rel
            );
            if d.max_scaled.is_nan() || d.max_scaled > tol {
                return Err(Failure::Verify(format!(
                    "outputs differ by {:e} at magnitude {:e}, beyond tolerance {tol:e}",
                    d.worst_abs, d.worst_magnitude
                )));
            }
        }
        Command::Eval { model, data } => {
            let net = resolve_model(&model, DType::F32, seed)?;
            let (_, mut eval_set) = load_data(&data, net.num_classes(), seed)?;
            let acc = with_network!(&net, n => {
                if let Some(norm) = &n.preprocessing {
                    eval_set.renormalize(norm);
                }
                evaluate(n, &eval_set)?
            });
            println!("top1={acc:.2}% images={}", eval_set.len());
        }
        Command::Info { model } => {
            let net = resolve_model(&model, DType::F32, seed)?;
            with_network!(&net, n => {
                println!("{} {:?} -> {} classes, {}", n.name, n.input_shape, n.num_classes, net.dtype().name());
                for (i, spec) in n.specs().iter().enumerate() {
                    println!("{i:>3} {}", serde_json::to_string(spec).map_err(Error::from)?);
                }
                if let Some(units) = &n.units {
                    println!("{} expansion units", units.len());
                }
                println!("{} trainable parameters", n.param_count());
            });
        }
    }
    Ok(())
}

fn build_any(arch: &ArchId, dtype: DType, seed: u64) -> AnyNetwork {
    let build = |seed| match dtype {
        DType::F32 => crate::zoo::build_smallnet::<f32>(arch.kernel_size, arch.num_classes, arch.depth, seed)
            .map(AnyNetwork::from),
        DType::F64 => crate::zoo::build_smallnet::<f64>(arch.kernel_size, arch.num_classes, arch.depth, seed)
            .map(AnyNetwork::from),
    };
    build(seed).expect("zoo ids are validated on parse")
}

/// A manifest path if it exists, otherwise an architecture id.
fn resolve_model(model: &str, dtype: DType, seed: u64) -> Result<AnyNetwork, Error> {
    let path = Path::new(model);
    if path.exists() {
        return AnyNetwork::load(path);
    }
    match model.parse::<ArchId>() {
        Ok(id) => {
            crate::zoo::smallnet_specs(id.kernel_size, id.num_classes, id.depth)?;
            Ok(build_any(&id, dtype, seed))
        }
        Err(_) => Err(Error::io(
            path,
            std::io::Error::new(std::io::ErrorKind::NotFound, "no such model file or architecture id"),
        )),
    }
}

fn convert(net: AnyNetwork, dtype: DType) -> AnyNetwork {
    match (net, dtype) {
        (AnyNetwork::F32(n), DType::F64) => AnyNetwork::F64(n.cast()),
        (AnyNetwork::F64(n), DType::F32) => AnyNetwork::F32(n.cast()),
        (n, _) => n,
    }
}

fn cmd_expand(model: &str, output: &Path, plan: &PlanArgs, dtype: DType, seed: u64) -> Result<(), Error> {
    let strategies = Strategies {
        fc: plan.fc,
        cl: plan.cl,
        ck: plan.ck,
    };
    let path = Path::new(model);
    if !(plan.fc || plan.cl || plan.ck) {
        // nothing to expand: copy the files untouched
        if path.exists() {
            let manifest = fs::read(path).map_err(|e| Error::io(path, e))?;
            let blob = fs::read(blob_path(path)).map_err(|e| Error::io(blob_path(path), e))?;
            write(output, &manifest)?;
            write(&blob_path(output), &blob)?;
        } else {
            resolve_model(model, dtype, seed)?.save(output)?;
        }
        println!("no expansion requested -> {}", output.display());
        return Ok(());
    }
    let net = resolve_model(model, dtype, seed)?;
    let expanded: AnyNetwork = with_network!(&net, n => {
        let p = ExpansionPlan::for_network(n, strategies, plan.rate, plan.depth, plan.table1_channels, seed)?;
        let mut e = expand_network(n, &p)?;
        e.name = format!("{}-{}", n.name, p.suffix());
        e.into()
    });
    expanded.save(output)?;
    println!(
        "{} -> {} parameters -> {}",
        net.param_count(),
        expanded.param_count(),
        output.display()
    );
    Ok(())
}

fn load_data(args: &DataArgs, num_classes: usize, seed: u64) -> Result<(Dataset, Dataset), Error> {
    let flavor = match args.dataset {
        DatasetKind::Synthetic => {
            let n_train = args.subset.unwrap_or(args.synthetic_train);
            return synthetic_split(num_classes, n_train, args.synthetic_eval, seed);
        }
        DatasetKind::Cifar10 => CifarFlavor::Cifar10,
        DatasetKind::Cifar100 => CifarFlavor::Cifar100,
    };
    let dir = args
        .data_dir
        .as_ref()
        .ok_or_else(|| Error::Dataset("no data directory: pass --data-dir or set EXPANDNET_DATA_DIR".into()))?;
    let (train_set, eval_set) = load_cifar(dir, flavor, args.subset, seed)?;
    if train_set.num_classes != num_classes {
        return Err(Error::Dataset(format!(
            "{} has {} classes but the model predicts {num_classes}",
            train_set.name, train_set.num_classes
        )));
    }
    Ok((train_set, eval_set))
}

fn run_training<T: Scalar>(
    net: &mut NetworkGraph<T>,
    train_set: &Dataset,
    eval_set: &Dataset,
    cfg: &TrainConfig,
    counterpart_epochs: Option<usize>,
) -> Result<(Option<TrainReport>, TrainReport), Error> {
    let out = match counterpart_epochs {
        Some(epochs) => {
            if net.units.is_none() {
                return Err(Error::InvalidArgument(
                    "--init-from-counterpart needs an expanded model".into(),
                ));
            }
            let (cp, main) = train_with_counterpart_init(net, train_set, Some(eval_set), cfg, epochs)?;
            (Some(cp), main)
        }
        None => (None, train(net, train_set, Some(eval_set), cfg)?),
    };
    net.preprocessing = Some(train_set.normalization.clone());
    Ok(out)
}

fn counterpart_report_path(report: &Path) -> PathBuf {
    let stem = report
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    report.with_file_name(format!("{stem}.counterpart.jsonl"))
}

/// Output disagreement between two models. `max_scaled` is the largest
/// `|a - b| / max(1, |a|, |b|)`, which is what `--tol` bounds.
#[derive(Clone, Copy, Debug, Default)]
pub struct OutputDiff {
    pub max_abs: f64,
    pub max_rel: f64,
    pub max_scaled: f64,
    pub worst_abs: f64,
    pub worst_magnitude: f64,
}

pub fn compare_outputs(a: &AnyNetwork, b: &AnyNetwork, trials: usize, seed: u64) -> Result<OutputDiff, Error> {
    if a.input_shape() != b.input_shape() || a.num_classes() != b.num_classes() {
        return Err(Error::Shape(format!(
            "models disagree on shape: {:?}->{} vs {:?}->{}",
            a.input_shape(),
            a.num_classes(),
            b.input_shape(),
            b.num_classes()
        )));
    }
    match (a, b) {
        (AnyNetwork::F32(x), AnyNetwork::F32(y)) => output_diff(x, y, trials, seed),
        _ => output_diff(&a.to_f64(), &b.to_f64(), trials, seed),
    }
}

fn output_diff<T: Scalar>(
    a: &NetworkGraph<T>,
    b: &NetworkGraph<T>,
    trials: usize,
    seed: u64,
) -> Result<OutputDiff, Error> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let [c, h, w] = a.input_shape;
    let mut out = OutputDiff::default();
    for _ in 0..trials {
        let x = Tensor4::from_fn([1, c, h, w], |_| {
            let v: f64 = StandardNormal.sample(&mut rng);
            T::of(v)
        });
        let ya = a.forward(&x, Mode::Eval)?;
        let yb = b.forward(&x, Mode::Eval)?;
        for (&p, &q) in ya.data().iter().zip(yb.data()) {
            let (p, q) = (p.as_f64(), q.as_f64());
            let d = (p - q).abs();
            if d.is_nan() {
                return Ok(OutputDiff {
                    max_abs: f64::INFINITY,
                    max_rel: f64::INFINITY,
                    max_scaled: f64::INFINITY,
                    worst_abs: f64::NAN,
                    worst_magnitude: f64::NAN,
                });
            }
            let magnitude = p.abs().max(q.abs());
            out.max_abs = out.max_abs.max(d);
            out.max_rel = out.max_rel.max(d / magnitude.max(1e-12));
            let scaled = d / magnitude.max(1.0);
            if scaled > out.max_scaled {
                out.max_scaled = scaled;
                out.worst_abs = d;
                out.worst_magnitude = magnitude;
            }
        }
    }
    Ok(out)
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), Error> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}
