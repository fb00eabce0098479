//! Command-line front end: closed-form bound evaluation, Monte-Carlo sweeps,
//! range batch-norm property runs, and trainer runs. Data goes to stdout or
//! the requested files; diagnostics go to stderr. Exit codes: 0 success,
//! 1 property failure, 2 usage/config error, 3 unwritable output, 4 aborted
//! training run.

use clap::{Args, Parser, Subcommand};
use serde_json::json;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use quantgeom::bounds;
use quantgeom::config::parse_train_config;
use quantgeom::error::Error;
use quantgeom::manifest::RunManifest;
use quantgeom::montecarlo::{sweep_bits, sweep_threshold, McConfig, SweepResult};
use quantgeom::quantize::QuantizerSpec;
use quantgeom::range_bn::{range_bn_forward, sandwich_mean_ratio, BatchMatrix, BnParams};
use quantgeom::rng::RngState;
use quantgeom::train::train;

/// Quantization-geometry toolkit: theory curves, seeded Monte-Carlo sweeps,
/// range batch-norm checks, and a desk-scale quantized trainer.
#[derive(Parser)]
#[command(name = "quantgeom", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate a closed-form bound and print it with 10 significant digits.
    Theory {
        /// Also write a JSON record (value plus run manifest) to this path.
        #[arg(long, global = true)]
        json: Option<PathBuf>,
        #[command(subcommand)]
        formula: TheoryCmd,
    },
    /// Run a Monte-Carlo sweep and write CSV plus a manifest sidecar.
    Sweep {
        #[command(subcommand)]
        kind: SweepCmd,
    },
    /// Range batch-norm property run: expectation sandwich and scale
    /// invariance; exits 1 if a property fails.
    Rangebn(RangebnArgs),
    /// Train on synthetic data from a config file; writes a JSON report and
    /// CSV histograms.
    Train(TrainArgs),
}

#[derive(Subcommand)]
enum TheoryCmd {
    /// Binary cosine floor sqrt(2/pi).
    Binary,
    /// Ternary cosine floor at threshold t (sigma units).
    Ternary {
        #[arg(long)]
        t: f64,
    },
    /// Grid argmin of the ternary angle over [lo, hi] with the given step.
    TernaryOpt {
        #[arg(long, default_value_t = 0.0)]
        lo: f64,
        #[arg(long, default_value_t = 1.2)]
        hi: f64,
        #[arg(long, default_value_t = 0.01)]
        step: f64,
    },
    /// M-bit cosine floor 2^M / (2^M + sqrt(ln N)/sqrt(6)).
    Nbit {
        #[arg(long = "M")]
        m: u32,
        #[arg(long = "N")]
        n: u64,
    },
    /// Alternate draft-convention M-bit floor.
    NbitDraft {
        #[arg(long = "M")]
        m: u32,
        #[arg(long = "N")]
        n: u64,
    },
    /// Quantization-noise norm ceiling sqrt(N/12)*delta.
    EpsNorm {
        #[arg(long = "N")]
        n: u64,
        #[arg(long)]
        delta: f64,
    },
    /// Gaussian L2-norm expectation ceiling sqrt(N)*sigma.
    L2Expect {
        #[arg(long = "N")]
        n: u64,
        #[arg(long, default_value_t = 1.0)]
        sigma: f64,
    },
    /// Sandwich on the expected maximum of N Gaussians; prints both edges.
    MaxGauss {
        #[arg(long = "N")]
        n: u64,
        #[arg(long, default_value_t = 1.0)]
        sigma: f64,
    },
    /// Draft closed form for the MSE-minimizing quantization step.
    DeltaOpt {
        #[arg(long)]
        k: u32,
        #[arg(long)]
        max_w: f64,
        #[arg(long = "N")]
        n: u64,
    },
}

#[derive(Args)]
struct SweepCommon {
    /// Vector dimension per trial.
    #[arg(long, default_value_t = 10_000)]
    n: usize,
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    #[arg(long, default_value_t = 100)]
    trials: usize,
    /// Master seed; omitted = drawn from entropy and echoed on stderr.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (output independent of this).
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Output CSV path; a `<out>.manifest.json` sidecar is written next to it.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum SweepCmd {
    /// Ternary threshold sweep; grid `lo:hi:step` in sigma units.
    Threshold {
        #[arg(long)]
        grid: String,
        #[command(flatten)]
        common: SweepCommon,
    },
    /// Bit-width sweep with the uniform midrise quantizer; grid `lo:hi[:step]`.
    Bits {
        #[arg(long)]
        grid: String,
        #[command(flatten)]
        common: SweepCommon,
    },
}

#[derive(Args)]
struct RangebnArgs {
    /// Batch size.
    #[arg(long, default_value_t = 256)]
    n: usize,
    /// Feature count.
    #[arg(long, default_value_t = 1)]
    d: usize,
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    #[arg(long, default_value_t = 10_000)]
    batches: usize,
    #[arg(long)]
    seed: Option<u64>,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    /// Run configuration file (see README for the grammar).
    #[arg(long)]
    config: PathBuf,
    /// Compute weight gradients from the low-precision gradient copy.
    #[arg(long)]
    no_bifurcation: bool,
    /// Output directory; defaults to $QUANTGEOM_OUT_DIR, then ".".
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

fn format_sig(v: f64, sig: usize) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{v}");
    }
    let exponent = v.abs().log10().floor() as i32;
    let decimals = sig as i32 - 1 - exponent;
    if (0..=18).contains(&decimals) {
        format!("{:.*}", decimals as usize, v)
    } else {
        format!("{:.*e}", sig - 1, v)
    }
}

fn parse_float_grid(text: &str) -> Result<Vec<f64>, Error> {
    let parts: Vec<&str> = text.split(':').collect();
    let bad = || Error::Domain(format!("grid must be lo:hi:step, got '{text}'"));
    let (lo, hi, step) = match parts.as_slice() {
        [lo, hi, step] => (
            lo.parse::<f64>().map_err(|_| bad())?,
            hi.parse::<f64>().map_err(|_| bad())?,
            step.parse::<f64>().map_err(|_| bad())?,
        ),
        [single] => {
            let v = single.parse::<f64>().map_err(|_| bad())?;
            return Ok(vec![v]);
        }
        _ => return Err(bad()),
    };
    if step.is_nan() || step <= 0.0 || hi < lo {
        return Err(bad());
    }
    let mut grid = Vec::new();
    let mut k = 0usize;
    loop {
        let v = lo + step * k as f64;
        if v > hi + step * 1e-9 {
            break;
        }
        grid.push(v);
        k += 1;
    }
    Ok(grid)
}

fn parse_bit_grid(text: &str) -> Result<Vec<u8>, Error> {
    let bad = || Error::Domain(format!("bit grid must be lo:hi[:step], got '{text}'"));
    let parts: Vec<&str> = text.split(':').collect();
    let (lo, hi, step) = match parts.as_slice() {
        [single] => {
            let v: u8 = single.parse().map_err(|_| bad())?;
            return Ok(vec![v]);
        }
        [lo, hi] => (
            lo.parse::<u8>().map_err(|_| bad())?,
            hi.parse::<u8>().map_err(|_| bad())?,
            1u8,
        ),
        [lo, hi, step] => (
            lo.parse::<u8>().map_err(|_| bad())?,
            hi.parse::<u8>().map_err(|_| bad())?,
            step.parse::<u8>().map_err(|_| bad())?,
        ),
        _ => return Err(bad()),
    };
    if step == 0 || hi < lo {
        return Err(bad());
    }
    Ok((lo..=hi).step_by(usize::from(step)).collect())
}

fn resolve_seed(seed: Option<u64>) -> u64 {
    match seed {
        Some(s) => s,
        None => {
            let s = std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_nanos() as u64)
                .unwrap_or(0)
                ^ u64::from(std::process::id());
            eprintln!("seed: {s} (pass --seed {s} to reproduce)");
            s
        }
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), Error> {
    std::fs::write(path, bytes)
        .map_err(|e| Error::Io(format!("cannot write {}: {e}", path.display())))
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::Config(_) => 2,
        Error::Domain(_) | Error::LengthMismatch { .. } | Error::ShapeMismatch(_) => 2,
        Error::Io(_) => 3,
        Error::TrainAbort(_) => 4,
        Error::Degenerate(_) | Error::Overflow(_) => 2,
    }
}

fn run_theory(cmd: TheoryCmd, json: Option<PathBuf>) -> Result<(), Error> {
    let (name, params, values, line) = match cmd {
        TheoryCmd::Binary => {
            let v = bounds::binary_bound();
            ("binary", json!({}), json!({ "value": v }), format_sig(v, 10))
        }
        TheoryCmd::Ternary { t } => {
            let v = bounds::ternary_bound(t)?;
            ("ternary", json!({ "t": t }), json!({ "value": v }), format_sig(v, 10))
        }
        TheoryCmd::TernaryOpt { lo, hi, step } => {
            let (t_star, angle) = bounds::ternary_optimal_threshold(lo, hi, step)?;
            (
                "ternary-opt",
                json!({ "lo": lo, "hi": hi, "step": step }),
                json!({ "t_star": t_star, "angle_deg": angle }),
                format!(
                    "t_star={} angle_deg={}",
                    format_sig(t_star, 10),
                    format_sig(angle, 10)
                ),
            )
        }
        TheoryCmd::Nbit { m, n } => {
            let v = bounds::nbit_bound_final(m, n)?;
            ("nbit", json!({ "M": m, "N": n }), json!({ "value": v }), format_sig(v, 10))
        }
        TheoryCmd::NbitDraft { m, n } => {
            let v = bounds::nbit_bound_draft(m, n)?;
            (
                "nbit-draft",
                json!({ "M": m, "N": n }),
                json!({ "value": v }),
                format_sig(v, 10),
            )
        }
        TheoryCmd::EpsNorm { n, delta } => {
            let v = bounds::eps_norm_bound(n, delta)?;
            (
                "eps-norm",
                json!({ "N": n, "delta": delta }),
                json!({ "value": v }),
                format_sig(v, 10),
            )
        }
        TheoryCmd::L2Expect { n, sigma } => {
            let v = bounds::l2_norm_expectation(n, sigma)?;
            (
                "l2-expect",
                json!({ "N": n, "sigma": sigma }),
                json!({ "value": v }),
                format_sig(v, 10),
            )
        }
        TheoryCmd::MaxGauss { n, sigma } => {
            let (lo, hi) = bounds::max_gaussian_bound(n, sigma)?;
            (
                "max-gauss",
                json!({ "N": n, "sigma": sigma }),
                json!({ "lower": lo, "upper": hi }),
                format!("lower={} upper={}", format_sig(lo, 10), format_sig(hi, 10)),
            )
        }
        TheoryCmd::DeltaOpt { k, max_w, n } => {
            let v = bounds::delta_opt_draft(k, max_w, n)?;
            (
                "delta-opt",
                json!({ "k": k, "max_w": max_w, "N": n }),
                json!({ "value": v }),
                format_sig(v, 10),
            )
        }
    };
    println!("{line}");
    if let Some(path) = json {
        // value record with its manifest embedded
        let manifest = RunManifest::new(format!("theory {name}"), params, 0);
        let mut record = serde_json::to_value(&manifest).expect("manifest serializes");
        record["result"] = values;
        write_file(
            &path,
            serde_json::to_string_pretty(&record)
                .expect("record serializes")
                .as_bytes(),
        )?;
    }
    Ok(())
}

fn run_sweep(kind: SweepCmd) -> Result<(), Error> {
    let (result, common, command, config): (SweepResult, SweepCommon, String, serde_json::Value) =
        match kind {
            SweepCmd::Threshold { grid, common } => {
                let seed = resolve_seed(common.seed);
                let t_grid = parse_float_grid(&grid)?;
                let cfg = McConfig {
                    n: common.n,
                    sigma: common.sigma,
                    trials: common.trials,
                    master_seed: seed,
                    spec: QuantizerSpec::ternary(0.0),
                    jobs: common.jobs,
                };
                let config = json!({
                    "kind": "threshold", "grid": grid, "n": common.n,
                    "sigma": common.sigma, "trials": common.trials, "jobs": common.jobs,
                });
                let result = sweep_threshold(&cfg, &t_grid)?;
                let mut common = common;
                common.seed = Some(seed);
                (result, common, "sweep threshold".into(), config)
            }
            SweepCmd::Bits { grid, common } => {
                let seed = resolve_seed(common.seed);
                let m_grid = parse_bit_grid(&grid)?;
                let cfg = McConfig {
                    n: common.n,
                    sigma: common.sigma,
                    trials: common.trials,
                    master_seed: seed,
                    spec: QuantizerSpec::midrise(8),
                    jobs: common.jobs,
                };
                let config = json!({
                    "kind": "bits", "grid": grid, "n": common.n,
                    "sigma": common.sigma, "trials": common.trials, "jobs": common.jobs,
                });
                let result = sweep_bits(&cfg, &m_grid)?;
                let mut common = common;
                common.seed = Some(seed);
                (result, common, "sweep bits".into(), config)
            }
        };
    let manifest = RunManifest::new(command, config, common.seed.unwrap_or(0));
    write_file(&common.out, result.to_csv().as_bytes())?;
    let sidecar = PathBuf::from(format!("{}.manifest.json", common.out.display()));
    write_file(&sidecar, manifest.to_json_pretty().as_bytes())?;
    eprintln!(
        "wrote {} ({} rows) and {}",
        common.out.display(),
        result.rows.len(),
        sidecar.display()
    );
    Ok(())
}

fn run_rangebn(args: RangebnArgs) -> Result<bool, Error> {
    let seed = resolve_seed(args.seed);
    let mean_ratio = sandwich_mean_ratio(args.n, args.d, args.sigma, args.batches, seed)?;
    let sandwich_pass = (0.325..=2.0).contains(&mean_ratio);

    // scale invariance of the forward pass at several magnitudes
    let mut rng = RngState::from_master(seed, 1);
    let rows = args.n.max(4);
    let data: Vec<f64> = (0..rows * 2)
        .map(|_| args.sigma * rng.standard_normal())
        .collect();
    let x = BatchMatrix::new(data.clone(), rows, 2)?;
    let params = BnParams::identity(2);
    let base = range_bn_forward(&x, &params, false)?;
    let mut max_dev = 0.0f64;
    for c in [0.5, 3.0, 100.0] {
        let scaled: Vec<f64> = data.iter().map(|v| v * c).collect();
        let sx = BatchMatrix::new(scaled, rows, 2)?;
        let out = range_bn_forward(&sx, &params, false)?;
        for (a, b) in out.data().iter().zip(base.data()) {
            max_dev = max_dev.max((a - b).abs());
        }
    }
    let invariance_pass = max_dev <= 1e-9;

    let pass = sandwich_pass && invariance_pass;
    let config = json!({
        "n": args.n,
        "d": args.d,
        "sigma": args.sigma,
        "batches": args.batches,
    });
    let manifest = RunManifest::new("rangebn", config.clone(), seed);
    let report = json!({
        "n": args.n,
        "d": args.d,
        "sigma": args.sigma,
        "batches": args.batches,
        "seed": seed,
        "mean_ratio": mean_ratio,
        "sandwich_interval": [0.325, 2.0],
        "sandwich_pass": sandwich_pass,
        "scale_invariance_max_deviation": max_dev,
        "scale_invariance_pass": invariance_pass,
        "pass": pass,
        "tool_version": manifest.tool_version,
        "timestamp": manifest.timestamp,
    });
    let pretty = serde_json::to_string_pretty(&report).expect("report serializes");
    match &args.json {
        Some(path) => write_file(path, pretty.as_bytes())?,
        None => println!("{pretty}"),
    }
    Ok(pass)
}

fn run_train(args: TrainArgs) -> Result<(), Error> {
    let text = std::fs::read_to_string(&args.config)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", args.config.display())))?;
    let mut cfg = parse_train_config(&text)?;
    if args.no_bifurcation {
        cfg.quant.bifurcation.enabled = false;
    }
    cfg.validate().map_err(|e| match e {
        Error::Domain(m) => Error::Config(m),
        other => other,
    })?;
    let out_dir = args
        .out_dir
        .or_else(|| std::env::var_os("QUANTGEOM_OUT_DIR").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&out_dir)
        .map_err(|e| Error::Io(format!("cannot create {}: {e}", out_dir.display())))?;

    let report = train(&cfg)?;
    let manifest = RunManifest::new(
        "train",
        serde_json::to_value(&cfg).expect("config serializes"),
        cfg.seed,
    );
    let report_json = serde_json::to_string_pretty(&report).expect("report serializes");
    write_file(&out_dir.join("training_report.json"), report_json.as_bytes())?;
    write_file(
        &out_dir.join("training_report.manifest.json"),
        manifest.to_json_pretty().as_bytes(),
    )?;
    for h in &report.histograms {
        write_file(
            &out_dir.join(format!("hist_{}.csv", h.name)),
            h.to_csv().as_bytes(),
        )?;
    }
    eprintln!(
        "wrote training_report.json and {} histograms to {}",
        report.histograms.len(),
        out_dir.display()
    );
    println!(
        "{}",
        json!({
            "final_train_accuracy": report.final_train_accuracy,
            "final_loss": report.final_loss,
            "mean_backward_cos": report.mean_backward_cos,
        })
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Theory { formula, json } => run_theory(formula, json).map(|_| true),
        Command::Sweep { kind } => run_sweep(kind).map(|_| true),
        Command::Rangebn(args) => run_rangebn(args),
        Command::Train(args) => run_train(args).map(|_| true),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}
