//! The `sgc` command line.
//!
//! Exit status: 0 on success, 1 for usage and configuration errors, 2 for runtime
//! failures (unreadable data, diverged runs, unwritable output).

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use sgc_core::experiment::{run_cell, scheme_assignment, zero_start, CellCoord, CellRun, Instance};
use sgc_core::{Assignment, SchemeKind, SchemeSpec};

use crate::config::ExperimentConfig;
use crate::output::{self, fmt_f64, read_traces, write_traces};
use crate::report::bound_rows;
use crate::runner::{build_instance, run_experiment};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "sgc", version, about = "Stochastic gradient coding simulator")]
struct Cli {
    /// Experiment config (TOML).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory for traces.csv / summary.csv.
    #[arg(long, global = true, value_name = "DIR", default_value = "out")]
    out: PathBuf,
    /// Master seed; overrides the config's master_seed (default 2019).
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,
    /// Worker threads for sweeps (0 = one per core).
    #[arg(long, global = true, value_name = "N", default_value_t = 1)]
    threads: usize,
    /// Override a config entry, e.g. --set data.m=200 (repeatable).
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one (scheme, p, nu) cell and print its final error.
    Run {
        /// Scheme id; defaults to the first configured scheme.
        #[arg(long)]
        scheme: Option<String>,
        /// Straggle probability; defaults to the first configured value.
        #[arg(long)]
        p: Option<f64>,
        /// Straggler redraw period; defaults to the first configured value.
        #[arg(long)]
        nu: Option<usize>,
        /// Repetition index (selects the cell's random draws).
        #[arg(long, default_value_t = 0)]
        rep: usize,
    },
    /// Run the full sweep and write traces.csv and summary.csv.
    Sweep,
    /// Evaluate the thm3 and thm4 error bounds for the configured instance.
    Bounds,
    /// Print the placement each scheme would use.
    InspectAssignment {
        #[arg(long)]
        scheme: Option<String>,
        #[arg(long, default_value_t = 0)]
        rep: usize,
    },
}

struct Failure {
    code: i32,
    message: String,
}

fn usage(message: impl std::fmt::Display) -> Failure {
    Failure {
        code: EXIT_USAGE,
        message: message.to_string(),
    }
}

fn runtime(message: impl std::fmt::Display) -> Failure {
    Failure {
        code: EXIT_RUNTIME,
        message: message.to_string(),
    }
}

/// Runs the CLI with the process's stdout and stderr.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    dispatch_to(argv, &mut stdout.lock(), &mut stderr.lock())
}

pub fn dispatch_to<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{text}");
                    EXIT_OK
                }
                _ => {
                    let _ = write!(err, "{text}");
                    EXIT_USAGE
                }
            };
        }
    };
    match execute(&cli, out) {
        Ok(()) => EXIT_OK,
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.message);
            f.code
        }
    }
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, Failure> {
    let path = cli
        .config
        .as_deref()
        .ok_or_else(|| usage("--config PATH is required"))?;
    let mut overrides = cli.overrides.clone();
    if let Some(seed) = cli.seed {
        overrides.push(format!("master_seed={seed}"));
    }
    ExperimentConfig::load(path, &overrides).map_err(usage)
}

fn echo_config(out: &mut dyn Write, cfg: &ExperimentConfig) -> std::io::Result<()> {
    writeln!(out, "--- resolved config ---")?;
    write!(out, "{}", cfg.to_toml_string())?;
    writeln!(out, "--- end config ---")
}

fn execute(cli: &Cli, out: &mut dyn Write) -> Result<(), Failure> {
    let cfg = load_config(cli)?;
    let io = |e: std::io::Error| runtime(format!("writing output: {e}"));
    echo_config(out, &cfg).map_err(io)?;
    let inst = build_instance(&cfg).map_err(runtime)?;
    match &cli.command {
        Command::Run { scheme, p, nu, rep } => {
            cmd_run(&cfg, &inst, scheme.as_deref(), *p, *nu, *rep, out)
        }
        Command::Sweep => cmd_sweep(&cfg, &inst, &cli.out, cli.threads, out),
        Command::Bounds => cmd_bounds(&cfg, &inst, &cli.out, out),
        Command::InspectAssignment { scheme, rep } => {
            cmd_inspect(&cfg, &inst, scheme.as_deref(), *rep, out)
        }
    }
}

fn parse_kind(name: &str) -> Result<SchemeKind, Failure> {
    name.parse().map_err(usage)
}

/// Index of `value` in `list`, or the next free index if it is not listed, so a
/// `run` of a configured cell reproduces that cell of the sweep.
fn coordinate<T: PartialEq>(list: &[T], value: &T) -> usize {
    list.iter().position(|v| v == value).unwrap_or(list.len())
}

fn cmd_run(
    cfg: &ExperimentConfig,
    inst: &Instance,
    scheme: Option<&str>,
    p: Option<f64>,
    nu: Option<usize>,
    rep: usize,
    out: &mut dyn Write,
) -> Result<(), Failure> {
    let specs = cfg.scheme_specs(inst);
    let spec = match scheme {
        None => specs[0],
        Some(name) => {
            let kind = parse_kind(name)?;
            specs
                .iter()
                .copied()
                .find(|s| s.kind == kind)
                .unwrap_or_else(|| SchemeSpec::new(kind, cfg.schedule.resolve(inst)))
        }
    };
    let p = p.unwrap_or(cfg.p_values[0]);
    if !(0.0..1.0).contains(&p) {
        return Err(usage(format!("--p {p} is outside [0, 1)")));
    }
    let nu = nu.unwrap_or(cfg.nu_values[0]);
    if nu == 0 {
        return Err(usage("--nu must be >= 1"));
    }
    let cell = CellRun {
        spec,
        n: cfg.n,
        d: cfg.d,
        p,
        nu,
        iterations: cfg.iterations,
        projection: cfg.projection_spec(),
        coord: CellCoord {
            p_index: coordinate(&cfg.p_values, &p),
            nu_index: coordinate(&cfg.nu_values, &nu),
            run: rep,
        },
        master_seed: cfg.master_seed,
    };
    let trace = run_cell(inst, &zero_start(inst), &cell).map_err(runtime)?;
    writeln!(
        out,
        "scheme={} p={} nu={} run={} iterations={}",
        spec.kind, p, nu, rep, cfg.iterations
    )
    .and_then(|_| writeln!(out, "final_error = {}", fmt_f64(trace.final_error())))
    .map_err(|e| runtime(format!("writing output: {e}")))
}

fn cmd_sweep(
    cfg: &ExperimentConfig,
    inst: &Instance,
    out_dir: &Path,
    threads: usize,
    out: &mut dyn Write,
) -> Result<(), Failure> {
    let result = run_experiment(cfg, inst, threads).map_err(runtime)?;
    write_traces(&result.traces, &result.summary, out_dir).map_err(runtime)?;
    let io = |e: std::io::Error| runtime(format!("writing output: {e}"));
    writeln!(out, "scheme,p,nu,runs,mean_final_error,mean_floor_error").map_err(io)?;
    for c in &result.summary {
        writeln!(
            out,
            "{},{},{},{},{:.4e},{:.4e}",
            c.scheme, c.p, c.nu, c.runs, c.mean_final_error, c.mean_floor_error
        )
        .map_err(io)?;
    }
    writeln!(
        out,
        "wrote {} and {}",
        out_dir.join(output::TRACES_FILE).display(),
        out_dir.join(output::SUMMARY_FILE).display()
    )
    .map_err(io)?;
    if let Some(f) = result.failures.first() {
        return Err(runtime(format!(
            "{} run(s) failed; first: scheme={} p={} nu={} run={}: {}",
            result.failures.len(),
            f.scheme,
            f.p,
            f.nu,
            f.run,
            f.message
        )));
    }
    Ok(())
}

fn cmd_bounds(
    cfg: &ExperimentConfig,
    inst: &Instance,
    out_dir: &Path,
    out: &mut dyn Write,
) -> Result<(), Failure> {
    let traces_path = out_dir.join(output::TRACES_FILE);
    let traces = if traces_path.exists() {
        Some(read_traces(&traces_path).map_err(runtime)?)
    } else {
        None
    };
    let rows = bound_rows(cfg, inst, traces.as_deref()).map_err(runtime)?;
    let io = |e: std::io::Error| runtime(format!("writing output: {e}"));
    let b = rows[0].inputs;
    writeln!(
        out,
        "m={} ell={} n={} T={} epsilon={} d={} d_min={} mu={} spectral_norm={} lambda={} \
         residual_norm_sq={} beta0_err_sq={} c_sq={}",
        b.m,
        inst.data.dim(),
        b.n,
        b.iterations,
        b.epsilon,
        fmt_f64(b.d),
        b.d_min,
        fmt_f64(b.mu),
        fmt_f64(b.spectral_norm),
        fmt_f64(b.lambda),
        fmt_f64(b.residual_norm_sq),
        fmt_f64(b.beta0_err_sq),
        fmt_f64(b.c_sq),
    )
    .map_err(io)?;
    for r in &rows {
        let thm3 = match &r.thm3 {
            Ok(v) => fmt_f64(*v),
            Err(e) => format!("n/a ({e})"),
        };
        let thm4 = match &r.thm4 {
            Some(Ok(v)) => fmt_f64(*v),
            Some(Err(e)) => format!("n/a ({e})"),
            None => "n/a (needs projection.radius or bounds.c_sq)".to_string(),
        };
        let empirical = match r.empirical_mse {
            Some(v) => fmt_f64(v),
            None => "n/a (no sgc traces)".to_string(),
        };
        writeln!(
            out,
            "p={} thm3_bound = {thm3} thm4_bound = {thm4} empirical_sgc_mse = {empirical}",
            r.p
        )
        .map_err(io)?;
    }
    Ok(())
}

fn cmd_inspect(
    cfg: &ExperimentConfig,
    inst: &Instance,
    scheme: Option<&str>,
    rep: usize,
    out: &mut dyn Write,
) -> Result<(), Failure> {
    let kinds = match scheme {
        Some(name) => vec![parse_kind(name)?],
        None => cfg.scheme_kinds(),
    };
    let seed = CellCoord {
        p_index: 0,
        nu_index: 0,
        run: rep,
    }
    .seed(cfg.master_seed);
    let io = |e: std::io::Error| runtime(format!("writing output: {e}"));
    for kind in kinds {
        let a = scheme_assignment(
            kind,
            &inst.data,
            cfg.n,
            cfg.d,
            sgc_core::rng::derive_seed(seed, sgc_core::rng::tag::ASSIGNMENT, &[]),
        )
        .map_err(runtime)?;
        write_inspection(out, kind, &a).map_err(io)?;
    }
    Ok(())
}

fn write_inspection(out: &mut dyn Write, kind: SchemeKind, a: &Assignment) -> std::io::Result<()> {
    let prof = a.profile();
    let (m, n) = (a.rows(), a.workers());
    writeln!(out, "scheme={kind} m={m} n={n}")?;
    if let Some(sigma) = prof.sigma() {
        writeln!(out, "  sigma={}", fmt_f64(sigma))?;
    }
    writeln!(
        out,
        "  avg_degree={:.6} min_degree={} max_degree={}",
        prof.avg_degree(),
        prof.min_degree(),
        prof.max_degree()
    )?;
    let mut hist = vec![0usize; prof.max_degree() + 1];
    for &d in prof.degrees() {
        hist[d] += 1;
    }
    let hist: Vec<String> = hist
        .iter()
        .enumerate()
        .filter(|(_, &c)| c > 0)
        .map(|(d, c)| format!("{d}:{c}"))
        .collect();
    writeln!(out, "  degree_histogram {}", hist.join(" "))?;
    let loads: Vec<String> = a.worker_sets().iter().map(|s| s.len().to_string()).collect();
    writeln!(out, "  worker_loads {}", loads.join(" "))?;

    // Pairwise overlaps against the pair-wise balanced target d_i d_j / n.
    let degrees = prof.degrees();
    let (mut sum, mut target, mut max, mut pairs) = (0.0, 0.0, 0usize, 0usize);
    let mut dev: f64 = 0.0;
    for i in 0..m {
        for j in i + 1..m {
            let o = a.pairwise_overlap(i, j);
            let t = (degrees[i] * degrees[j]) as f64 / n as f64;
            sum += o as f64;
            target += t;
            max = max.max(o);
            dev = dev.max((o as f64 - t).abs());
            pairs += 1;
        }
    }
    if pairs > 0 {
        writeln!(
            out,
            "  overlap mean={:.6} target_mean={:.6} max={} max_abs_deviation={:.6} pairs={}",
            sum / pairs as f64,
            target / pairs as f64,
            max,
            dev,
            pairs
        )?;
    }
    let degs: Vec<String> = degrees.iter().map(usize::to_string).collect();
    writeln!(out, "  degrees {}", degs.join(" "))
}

