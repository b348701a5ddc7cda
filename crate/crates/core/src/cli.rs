//! Command-line front end: `generate`, `fit`, `canonicalize`, `benchmark`.
//!
//! Exit codes: 0 on success, 1 for usage and input errors, 2 for runtime
//! failures. Outputs are written to a temporary file in the target directory
//! and renamed into place only on success.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::OsbmError;
use crate::eval::{run_benchmark, BenchmarkConfig, Topology};
use crate::graph::Graph;
use crate::identifiability::canonicalize;
use crate::inference::{fit, FitConfig};
use crate::model::{sample_graph, sample_latent, OsbmParams};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "osbm", version, about = "Overlapping stochastic block models for directed graphs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sample memberships and a graph from a parameter file.
    Generate {
        #[arg(long)]
        params: PathBuf,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Edge-list output.
        #[arg(long)]
        out: PathBuf,
        /// Membership matrix output.
        #[arg(long)]
        z_out: PathBuf,
    },
    /// Fit an OSBM to an edge-list graph.
    Fit {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        q: usize,
        #[command(flatten)]
        fit: FitFlags,
        #[arg(long)]
        out: PathBuf,
    },
    /// Rewrite a parameter file as its canonical representative.
    Canonicalize {
        #[arg(long)]
        params: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the simulation benchmark on a planted topology.
    Benchmark {
        /// `community` or `stars`.
        topology: String,
        #[arg(long, default_value_t = 4)]
        q: usize,
        #[arg(long, default_value_t = 4.0, allow_negative_numbers = true)]
        lambda: f64,
        #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
        eps: f64,
        #[arg(long, default_value_t = -5.5, allow_negative_numbers = true)]
        w_star: f64,
        #[arg(long, default_value_t = 0.25)]
        alpha: f64,
        #[arg(long, default_value_t = 100)]
        n: usize,
        #[arg(long, default_value_t = 20)]
        replicates: usize,
        #[command(flatten)]
        fit: FitFlags,
        /// JSON report output; the text table goes to standard output.
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
struct FitFlags {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 200)]
    max_iters: usize,
    #[arg(long, default_value_t = 1e-4)]
    bound_tol: f64,
    #[arg(long, default_value_t = 1e-4)]
    tau_tol: f64,
    #[arg(long, default_value_t = 50)]
    inner_sweeps: usize,
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
}

impl FitFlags {
    fn config(&self) -> FitConfig {
        FitConfig {
            max_outer_iters: self.max_iters,
            inner_tau_sweeps: self.inner_sweeps,
            bound_tol: self.bound_tol,
            tau_tol: self.tau_tol,
            map_threshold: self.threshold,
            seed: self.seed,
            ..FitConfig::default()
        }
    }
}

/// A failure with the exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }

    fn runtime(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_RUNTIME,
            message: message.into(),
        }
    }

    /// Errors about what the user supplied are usage errors; the rest are runtime.
    fn from_library(context: &str, e: OsbmError) -> Self {
        let code = match e {
            OsbmError::Parse { .. }
            | OsbmError::VertexRange { .. }
            | OsbmError::SelfLoop { .. }
            | OsbmError::Domain(_)
            | OsbmError::InvalidField { .. }
            | OsbmError::Json(_) => EXIT_USAGE,
            OsbmError::Capacity(_) | OsbmError::Numerical(_) | OsbmError::Io(_) => EXIT_RUNTIME,
        };
        Self {
            code,
            message: format!("{context}: {e}"),
        }
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

/// Parses `args` (program name first), runs the subcommand and returns the
/// exit code. Results go to `stdout`, diagnostics to `stderr`.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let sink: &mut dyn Write = if e.use_stderr() { stderr } else { stdout };
            let _ = sink.write_all(text.as_bytes());
            return code;
        }
    };
    match dispatch(cli.command, stdout) {
        Ok(()) => EXIT_OK,
        Err(f) => {
            let _ = writeln!(stderr, "error: {}", f.message);
            f.code
        }
    }
}

fn dispatch(command: Command, stdout: &mut dyn Write) -> CliResult<()> {
    match command {
        Command::Generate {
            params,
            n,
            seed,
            out,
            z_out,
        } => cmd_generate(&params, n, seed, &out, &z_out, stdout),
        Command::Fit { graph, q, fit, out } => cmd_fit(&graph, q, &fit.config(), &out, stdout),
        Command::Canonicalize { params, out } => cmd_canonicalize(&params, &out, stdout),
        Command::Benchmark {
            topology,
            q,
            lambda,
            eps,
            w_star,
            alpha,
            n,
            replicates,
            fit,
            out,
        } => {
            let topology: Topology = topology
                .parse()
                .map_err(|e| Failure::from_library("benchmark", e))?;
            let cfg = BenchmarkConfig {
                topology,
                q,
                lambda,
                eps,
                w_star,
                alpha_value: alpha,
                n_vertices: n,
                replicates,
                seed: fit.seed,
            };
            cmd_benchmark(&cfg, &fit.config(), &out, stdout)
        }
    }
}

fn read_input(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| Failure::usage(format!("cannot read {}: {e}", path.display())))
}

fn read_params(path: &Path) -> CliResult<OsbmParams> {
    OsbmParams::from_json(&read_input(path)?).map_err(|e| Failure::from_library(&path.display().to_string(), e))
}

fn read_graph(path: &Path) -> CliResult<Graph> {
    Graph::from_edge_list(&read_input(path)?).map_err(|e| Failure::from_library(&path.display().to_string(), e))
}

/// Stages every output in a temporary file beside its target, then renames
/// all of them; nothing is renamed unless every file was staged.
fn write_outputs(outputs: &[(&Path, &str)]) -> CliResult<()> {
    let mut staged = Vec::with_capacity(outputs.len());
    for (path, contents) in outputs {
        let dir = match path.parent() {
            Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
            _ => PathBuf::from("."),
        };
        let mut tmp = tempfile::NamedTempFile::new_in(&dir)
            .map_err(|e| Failure::runtime(format!("cannot create a file in {}: {e}", dir.display())))?;
        tmp.write_all(contents.as_bytes())
            .and_then(|()| tmp.flush())
            .map_err(|e| Failure::runtime(format!("cannot write {}: {e}", path.display())))?;
        staged.push((tmp, *path));
    }
    for (tmp, path) in staged {
        tmp.persist(path)
            .map_err(|e| Failure::runtime(format!("cannot write {}: {}", path.display(), e.error)))?;
    }
    Ok(())
}

fn say(stdout: &mut dyn Write, text: std::fmt::Arguments<'_>) -> CliResult<()> {
    stdout
        .write_fmt(text)
        .map_err(|e| Failure::runtime(format!("cannot write to standard output: {e}")))
}

fn cmd_generate(params: &Path, n: usize, seed: u64, out: &Path, z_out: &Path, stdout: &mut dyn Write) -> CliResult<()> {
    let p = read_params(params)?;
    if n < 2 {
        return Err(Failure::usage("--n must be at least 2"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z = sample_latent(&p, n, &mut rng).map_err(|e| Failure::from_library("generate", e))?;
    let g = sample_graph(&z, &p, &mut rng).map_err(|e| Failure::from_library("generate", e))?;
    let density = g.density().map_err(|e| Failure::from_library("generate", e))?;
    write_outputs(&[(out, &g.to_edge_list()), (z_out, &z.to_json())])?;
    say(
        stdout,
        format_args!(
            "density {density:.6}\nedges {}\noverlaps {}\noutliers {}\n",
            g.edge_count(),
            z.overlap_count(),
            z.outlier_count()
        ),
    )
}

fn cmd_fit(graph: &Path, q: usize, cfg: &FitConfig, out: &Path, stdout: &mut dyn Write) -> CliResult<()> {
    cfg.validate().map_err(|e| Failure::from_library("fit", e))?;
    let g = read_graph(graph)?;
    if q == 0 {
        return Err(Failure::usage("--q must be at least 1"));
    }
    if q > g.n_vertices() {
        return Err(Failure::usage(format!(
            "--q {q} exceeds the number of vertices ({})",
            g.n_vertices()
        )));
    }
    if g.n_vertices() < 2 {
        return Err(Failure::usage("the graph needs at least two vertices"));
    }
    let result = fit(&g, q, cfg).map_err(|e| Failure::runtime(format!("fit: {e}")))?;
    let json = result.to_json().map_err(|e| Failure::runtime(format!("fit: {e}")))?;
    write_outputs(&[(out, &json)])?;
    say(
        stdout,
        format_args!(
            "bound {:.6}\niterations {}\nconverged {}\n",
            result.final_bound(),
            result.iterations,
            result.converged
        ),
    )
}

fn cmd_canonicalize(params: &Path, out: &Path, stdout: &mut dyn Write) -> CliResult<()> {
    let p = read_params(params)?;
    let c = canonicalize(&p);
    write_outputs(&[(out, &c.params.to_json())])?;
    say(
        stdout,
        format_args!(
            "permutation {:?}\ninversion {:?}\n",
            c.permutation.as_slice(),
            c.inversion.bits()
        ),
    )
}

fn cmd_benchmark(cfg: &BenchmarkConfig, fit_cfg: &FitConfig, out: &Path, stdout: &mut dyn Write) -> CliResult<()> {
    cfg.validate().map_err(|e| Failure::from_library("benchmark", e))?;
    fit_cfg.validate().map_err(|e| Failure::from_library("benchmark", e))?;
    let report = run_benchmark(cfg, fit_cfg).map_err(|e| Failure::runtime(format!("benchmark: {e}")))?;
    let json = report.to_json().map_err(|e| Failure::runtime(format!("benchmark: {e}")))?;
    write_outputs(&[(out, &json)])?;
    say(stdout, format_args!("{}", report.to_table()))
}
