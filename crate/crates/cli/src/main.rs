use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use oistab::structure::ModePolicy;
use oistab::symbolic::ExpansionGuard;
use oistab_cli::commands::{
    analyze_many, certify_text, collect_inputs, gen_linear, simulate_text, source_name,
    AnalyzeOptions, BoundOptions, CertifyOptions, Failure, SimulateOptions, EXIT_ERROR,
};
use oistab_cli::{emit_report, emit_reports, Analysis, Format};

#[derive(Parser)]
#[command(name = "oistab", version, about = "Structure-algorithm analysis of input-affine polynomial systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the structure algorithm and build the left inverse.
    Analyze(AnalyzeArgs),
    /// Integrate the system, then recover the input from the outputs.
    Simulate(SimulateArgs),
    /// Sample a dissipation certificate for output-input stability.
    Certify(CertifyArgs),
    /// Print a seeded random linear system file.
    GenLinear(GenLinearArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Auto,
    AffineOnly,
}

#[derive(Args)]
struct Common {
    #[arg(long, value_enum, default_value = "auto")]
    mode: ModeArg,
    /// Continue past rank drops instead of stopping with exit code 2.
    #[arg(long)]
    permissive: bool,
    /// Iteration cap (default n + p).
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long)]
    json: bool,
}

impl Common {
    fn options(&self) -> AnalyzeOptions {
        AnalyzeOptions {
            policy: match self.mode {
                ModeArg::Auto => ModePolicy::Auto,
                ModeArg::AffineOnly => ModePolicy::AffineOnly,
            },
            strict: !self.permissive,
            max_iter: self.max_iter,
            bounds: None,
            guard: ExpansionGuard::from_env(),
        }
    }

    fn format(&self) -> Format {
        if self.json {
            Format::Json
        } else {
            Format::Text
        }
    }
}

#[derive(Args)]
struct BoundArgs {
    /// Half-width of the state box [-r, r]^n.
    #[arg(long = "box", default_value_t = 4.0)]
    half_width: f64,
    #[arg(long, default_value_t = 10_000)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 17)]
    grid_points: usize,
}

impl BoundArgs {
    fn options(&self) -> BoundOptions {
        BoundOptions {
            half_width: self.half_width,
            samples: self.samples,
            seed: self.seed,
            grid_points: self.grid_points,
        }
    }
}

#[derive(Args)]
struct AnalyzeArgs {
    /// System files or directories of `.sys` files.
    #[arg(required = true)]
    paths: Vec<PathBuf>,
    #[command(flatten)]
    common: Common,
    /// Estimate the input-bounding tables on the state box.
    #[arg(long)]
    bounds: bool,
    #[command(flatten)]
    bound_args: BoundArgs,
}

#[derive(Args)]
struct SimulateArgs {
    path: PathBuf,
    #[command(flatten)]
    common: Common,
    /// Initial state as comma-separated values.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    x0: Vec<f64>,
    /// Input channel as `i=poly-in-t`; also accepted as `--u<i> poly`.
    #[arg(long = "input", allow_hyphen_values = true)]
    inputs: Vec<String>,
    #[arg(long, default_value_t = 1e-3)]
    dt: f64,
    #[arg(long, default_value_t = 1.0)]
    t_final: f64,
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    /// Check the input-bounding inequality on the box [-r, r]^n.
    #[arg(long = "box")]
    half_width: Option<f64>,
    #[arg(long, default_value_t = 10_000)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct CertifyArgs {
    path: PathBuf,
    #[command(flatten)]
    common: Common,
    /// Storage function V(x).
    #[arg(long = "V", allow_hyphen_values = true)]
    v: String,
    /// Decay comparison function as `c,q` for c*s^q.
    #[arg(long, allow_hyphen_values = true)]
    alpha: String,
    /// Output gain as `c,q` for c*s^q.
    #[arg(long, allow_hyphen_values = true)]
    chi: String,
    /// Number of output derivatives in the gain.
    #[arg(long, default_value_t = 0)]
    order: usize,
    /// Sampling interval `lo,hi` for every coordinate.
    #[arg(long = "box", default_value = "-10,10", allow_hyphen_values = true)]
    range: String,
    #[arg(long, default_value_t = 1000)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct GenLinearArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 3)]
    states: usize,
    #[arg(long, default_value_t = 1)]
    inputs: usize,
    #[arg(long)]
    name: Option<String>,
}

/// `--u2 expr` and `--u2=expr` become `--input 2=expr`.
fn rewrite_input_flags(args: impl Iterator<Item = String>) -> Vec<String> {
    let mut out = Vec::new();
    let mut pending: Option<String> = None;
    for a in args {
        if let Some(idx) = pending.take() {
            out.push(format!("{idx}={a}"));
            continue;
        }
        let channel = a.strip_prefix("--u").and_then(|rest| {
            let (idx, value) = match rest.split_once('=') {
                Some((i, v)) => (i, Some(v)),
                None => (rest, None),
            };
            (!idx.is_empty() && idx.chars().all(|c| c.is_ascii_digit())).then(|| (idx.to_string(), value.map(str::to_string)))
        });
        match channel {
            Some((idx, Some(value))) => {
                out.push("--input".into());
                out.push(format!("{idx}={value}"));
            }
            Some((idx, None)) => {
                out.push("--input".into());
                pending = Some(idx);
            }
            None => out.push(a),
        }
    }
    if let Some(idx) = pending {
        out.push(format!("{idx}="));
    }
    out
}

fn parse_inputs(raw: &[String]) -> Result<Vec<(usize, String)>, Failure> {
    raw.iter()
        .map(|s| {
            let (i, e) = s
                .split_once('=')
                .ok_or_else(|| Failure::new(EXIT_ERROR, format!("--input expects i=expr, got {s:?}")))?;
            let i = i
                .parse()
                .map_err(|_| Failure::new(EXIT_ERROR, format!("bad input channel {i:?}")))?;
            Ok((i, e.to_string()))
        })
        .collect()
}

fn read(path: &PathBuf) -> Result<String, Failure> {
    std::fs::read_to_string(path)
        .map_err(|e| Failure::new(EXIT_ERROR, format!("{}: {e}", path.display())))
}

fn print_analysis(a: &Analysis, format: Format) {
    for n in &a.notes {
        eprintln!("{n}");
    }
    let mut stdout = std::io::stdout().lock();
    let _ = stdout.write_all(emit_report(&a.report, format).as_bytes());
}

fn run(cli: Cli) -> Result<i32, Failure> {
    match cli.command {
        Command::Analyze(args) => {
            let mut opts = args.common.options();
            if args.bounds {
                opts.bounds = Some(args.bound_args.options());
            }
            let paths = collect_inputs(&args.paths)?;
            let results = analyze_many(&paths, &opts);
            let mut code = 0;
            let mut reports = Vec::new();
            for r in results {
                match r {
                    Ok(a) => {
                        for n in &a.notes {
                            eprintln!("{n}");
                        }
                        code = code.max(a.exit_code());
                        reports.push(a.report);
                    }
                    Err(f) => {
                        eprintln!("error: {f}");
                        code = code.max(f.code);
                    }
                }
            }
            let out = if args.paths.len() == 1 && !args.paths[0].is_dir() {
                reports
                    .first()
                    .map(|r| emit_report(r, args.common.format()))
                    .unwrap_or_default()
            } else {
                emit_reports(&reports, args.common.format())
            };
            let _ = std::io::stdout().lock().write_all(out.as_bytes());
            Ok(code)
        }
        Command::Simulate(args) => {
            let text = read(&args.path)?;
            let sim = SimulateOptions {
                x0: args.x0.clone(),
                inputs: parse_inputs(&args.inputs)?,
                dt: args.dt,
                t_final: args.t_final,
                tol: args.tol,
                bounds: args.half_width.map(|r| BoundOptions {
                    half_width: r,
                    samples: args.samples,
                    seed: args.seed,
                    ..BoundOptions::default()
                }),
            };
            let a = simulate_text(&text, &source_name(&args.path), &args.common.options(), &sim)?;
            print_analysis(&a, args.common.format());
            Ok(a.exit_code())
        }
        Command::Certify(args) => {
            let text = read(&args.path)?;
            let cert = CertifyOptions {
                v: args.v.clone(),
                alpha: args.alpha.clone(),
                chi: args.chi.clone(),
                order: args.order,
                range: args.range.clone(),
                samples: args.samples,
                seed: args.seed,
            };
            let a = certify_text(&text, &source_name(&args.path), &args.common.options(), &cert)?;
            print_analysis(&a, args.common.format());
            Ok(a.certify_exit_code())
        }
        Command::GenLinear(args) => {
            let text = gen_linear(args.seed, args.states, args.inputs, args.name)?;
            let _ = std::io::stdout().lock().write_all(text.as_bytes());
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    // usage errors share exit code 1 with other input errors; 2 is an outcome
    let cli = match Cli::try_parse_from(rewrite_input_flags(std::env::args())) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_ERROR as u8 } else { 0 });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code as u8)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn strings(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn input_flags_are_rewritten() {
        let got = rewrite_input_flags(strings(&["oistab", "simulate", "f", "--u1", "1+t", "--u12=t^2", "--dt", "0.1"]).into_iter());
        assert_eq!(
            got,
            strings(&["oistab", "simulate", "f", "--input", "1=1+t", "--input", "12=t^2", "--dt", "0.1"])
        );
        let untouched = strings(&["oistab", "--user", "--u", "x"]);
        assert_eq!(rewrite_input_flags(untouched.clone().into_iter()), untouched);
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
