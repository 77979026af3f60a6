//! Command-line front end.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use mflqr_core::finite::quadratic_value;
use mflqr_core::linalg::{max_abs_diff, sup_norm};
use mflqr_core::oracle::{probe_initial_states, truncated_cost};
use mflqr_core::{
    brute_force_optimize, empirical_cost, is_mean_square_stable, optimal_cost, scalar_are_roots,
    simulate, solve_are, solve_finite, stabilization_verdict, verify_maximum_principle, AreOptions,
    AreSolution, BruteForceOptions, Feedback, GainPair, InitialState, Matrix, MeanMode, Noise,
    SimulationConfig, Vector,
};

use crate::error::{CliError, Result};
use crate::format::Precision;
use crate::golden::{self, GoldenRow, Status};
use crate::manifest::RunManifest;
use crate::parallel::Rayon;
use crate::problem::{load_problem, to_matrix, Problem, Rows};
use crate::report::{
    to_json, CheckReport, FiniteReport, InfiniteReport, OracleCheck, SimulationReport,
    StabilityReport, VerifyReport,
};
use crate::svg::line_chart;

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_VERDICT: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "mflqr",
    version,
    about = "Mean-field LQ control: Riccati solvers, stabilizability checks, simulation"
)]
pub struct Cli {
    /// Emit JSON on stdout instead of text.
    #[arg(long, global = true)]
    pub json: bool,
    /// `csv` or `json` selects the stdout format; anything else is a file
    /// path (CSV for a `.csv` extension, JSON otherwise).
    #[arg(long, global = true, value_name = "FORMAT|PATH")]
    pub out: Option<String>,
    /// Suppress text output on stdout.
    #[arg(long, global = true)]
    pub quiet: bool,
    /// Significant digits of every emitted number.
    #[arg(long, global = true, default_value_t = 6, value_parser = clap::value_parser!(u8).range(1..=17))]
    pub precision: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Backward Riccati recursion over a finite horizon.
    SolveFinite { problem: PathBuf },
    /// Value iteration on the algebraic Riccati equations.
    SolveInfinite {
        problem: PathBuf,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        #[arg(long, default_value_t = 100_000)]
        max_iter: usize,
    },
    /// Observability, detectability and the stabilizability verdict.
    Check {
        problem: PathBuf,
        /// Also test these constant gains for mean-square stability.
        #[arg(long)]
        gains_file: Option<PathBuf>,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        #[arg(long, default_value_t = 100_000)]
        max_iter: usize,
    },
    /// Monte Carlo simulation of the closed loop.
    Simulate {
        problem: PathBuf,
        #[arg(long, value_enum, default_value_t = GainSource::FromAre)]
        gains: GainSource,
        #[arg(long)]
        gains_file: Option<PathBuf>,
        #[arg(long, default_value_t = 10_000)]
        paths: usize,
        /// Defaults to 50, or to the horizon length for Riccati gains of a
        /// finite-horizon problem.
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = NoiseArg::Gaussian)]
        noise: NoiseArg,
        #[arg(long, value_enum, default_value_t = MeanArg::Analytic)]
        mean: MeanArg,
        /// Write k, Ex_1..Ex_n, msq, stderr per step.
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Write a line chart of the mean-square path.
        #[arg(long)]
        svg: Option<PathBuf>,
    },
    /// Runs the maximum-principle, brute-force and Monte Carlo oracles.
    Verify {
        problem: PathBuf,
        #[arg(long, default_value_t = 4000)]
        paths: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
    },
    /// Writes the bundled example problems and checks them against the
    /// published values.
    Examples {
        /// Print every compared value.
        #[arg(long)]
        golden: bool,
        /// Target directory; defaults to `--out`, then `mflqr-examples`.
        #[arg(long)]
        dir: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GainSource {
    FromAre,
    FromFile,
    Zero,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum NoiseArg {
    Gaussian,
    Rademacher,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MeanArg {
    Analytic,
    Ensemble,
}

/// Constant gains on disk: `{"K": [[...]], "Kbar": [[...]]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GainsFile {
    #[serde(rename = "K")]
    pub k: Rows,
    #[serde(rename = "Kbar")]
    pub k_bar: Rows,
}

pub fn load_gains(path: &Path, n: usize, m: usize) -> Result<GainPair> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let file: GainsFile = serde_json::from_str(&text).map_err(|e| CliError::Parse {
        origin: path.display().to_string(),
        line: e.line(),
        column: e.column(),
        message: crate::problem::strip_position(&e),
    })?;
    Ok(GainPair::new(
        to_matrix("K", &file.k, m, n)?,
        to_matrix("Kbar", &file.k_bar, m, n)?,
    )?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Format {
    Text,
    Json,
    Csv,
}

struct Ctx {
    json: bool,
    out: Option<String>,
    quiet: bool,
    pr: Precision,
}

impl Ctx {
    fn destination(&self) -> (Option<PathBuf>, Format) {
        match self.out.as_deref() {
            Some("csv") => (None, Format::Csv),
            Some("json") => (None, Format::Json),
            Some(path) => {
                let p = PathBuf::from(path);
                let fmt = if p.extension().is_some_and(|e| e == "csv") {
                    Format::Csv
                } else {
                    Format::Json
                };
                (Some(p), fmt)
            }
            None if self.json => (None, Format::Json),
            None => (None, Format::Text),
        }
    }

    fn print(&self, fmt: Format, body: &str) {
        if !(self.quiet && fmt == Format::Text) {
            print!("{body}");
        }
    }

    /// Sends the main output to stdout or to a file with its manifest.
    fn emit(
        &self,
        manifest: &RunManifest,
        text: impl FnOnce() -> String,
        json: impl FnOnce() -> String,
        csv: Option<&dyn Fn() -> String>,
    ) -> Result<()> {
        let (path, fmt) = self.destination();
        let body = match fmt {
            Format::Text => text(),
            Format::Json => json(),
            Format::Csv => match csv {
                Some(f) => f(),
                None => {
                    return Err(CliError::Invalid(
                        "CSV output is not available for this command".into(),
                    ))
                }
            },
        };
        match path {
            Some(p) => write_output(&p, &body, manifest),
            None => {
                self.print(fmt, &body);
                Ok(())
            }
        }
    }
}

fn write_output(path: &Path, body: &str, manifest: &RunManifest) -> Result<()> {
    std::fs::write(path, body).map_err(|e| CliError::io(path, e))?;
    manifest.write_beside(path)
}

/// Parses `args` (program name first), runs the command and returns the exit
/// code: 0 on success, 1 on usage, I/O or parse errors, 2 when the problem is
/// unsolvable, diverges, is not stabilizable or fails a check.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
        }
    };
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_ERROR
        }
    }
}

fn dispatch(cli: Cli) -> Result<i32> {
    let ctx = Ctx {
        json: cli.json,
        out: cli.out,
        quiet: cli.quiet,
        pr: Precision(cli.precision as usize),
    };
    match cli.command {
        Command::SolveFinite { problem } => solve_finite_cmd(&ctx, &problem),
        Command::SolveInfinite {
            problem,
            tol,
            max_iter,
        } => solve_infinite_cmd(&ctx, &problem, tol, max_iter),
        Command::Check {
            problem,
            gains_file,
            tol,
            max_iter,
        } => check_cmd(&ctx, &problem, gains_file.as_deref(), tol, max_iter),
        Command::Simulate {
            problem,
            gains,
            gains_file,
            paths,
            steps,
            seed,
            noise,
            mean,
            csv,
            svg,
        } => {
            let opts = SimulateArgs {
                gains,
                gains_file,
                paths,
                steps,
                seed,
                noise,
                mean,
                csv,
                svg,
            };
            simulate_cmd(&ctx, &problem, &opts)
        }
        Command::Verify {
            problem,
            paths,
            seed,
            tol,
        } => verify_cmd(&ctx, &problem, paths, seed, tol),
        Command::Examples { golden, dir } => examples_cmd(&ctx, golden, dir),
    }
}

fn manifest(ctx: &Ctx, command: &str, problem: &Problem) -> RunManifest {
    RunManifest::new(command, Some(problem.sha256.clone())).option("precision", ctx.pr.0)
}

/// Long-format CSV: one row per matrix entry.
struct LongCsv(String);

impl LongCsv {
    fn new() -> Self {
        Self("quantity,k,row,col,value\n".to_string())
    }

    fn matrix(&mut self, pr: Precision, name: &str, k: Option<usize>, m: &Matrix) {
        let k = k.map_or(String::new(), |k| k.to_string());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                let _ = writeln!(
                    self.0,
                    "{name},{k},{},{},{}",
                    i + 1,
                    j + 1,
                    pr.show(m[(i, j)])
                );
            }
        }
    }

    fn scalar(&mut self, pr: Precision, name: &str, k: Option<usize>, v: f64) {
        let k = k.map_or(String::new(), |k| k.to_string());
        let _ = writeln!(self.0, "{name},{k},,,{}", pr.show(v));
    }
}

fn solve_finite_cmd(ctx: &Ctx, path: &Path) -> Result<i32> {
    let problem = load_problem(path)?;
    let traj = solve_finite(&problem.system, &problem.cost, None)?;
    let cost = match (&problem.initial_state, traj.solvable) {
        (Some(init), true) => Some(optimal_cost(&traj, init)?),
        _ => None,
    };
    let pr = ctx.pr;
    let text = || {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "horizon N = {} (stages 0..={}), solvable: {}",
            traj.horizon,
            traj.horizon,
            yes(traj.solvable)
        );
        if !traj.assumptions.holds() {
            let _ = writeln!(s, "warning: weight assumptions do not hold");
        }
        if let Some(f) = traj.failure {
            let _ = writeln!(
                s,
                "curvature block {:?} not positive definite at k = {} (min eigenvalue {})",
                f.block,
                f.step,
                pr.show(f.min_eigenvalue)
            );
        }
        for st in traj.steps.iter().rev() {
            let _ = writeln!(s, "k = {}", st.k);
            let _ = writeln!(s, "  P     {}", pr.show_matrix(&st.p));
            let _ = writeln!(s, "  Pbar  {}", pr.show_matrix(&st.p_bar));
            let _ = writeln!(
                s,
                "  Ups1  {}  det {}",
                pr.show_matrix(&st.ups1),
                pr.show(st.ups1.determinant())
            );
            let _ = writeln!(
                s,
                "  Ups2  {}  det {}",
                pr.show_matrix(&st.ups2),
                pr.show(st.ups2.determinant())
            );
            let _ = writeln!(s, "  K     {}", pr.show_matrix(&st.gains.k));
            let _ = writeln!(s, "  Kbar  {}", pr.show_matrix(&st.gains.k_bar));
        }
        if let Some(c) = cost {
            let _ = writeln!(s, "optimal cost: {}", pr.show(c));
        }
        s
    };
    let json = || to_json(&FiniteReport::new(&traj, cost, pr));
    let csv = || {
        let mut c = LongCsv::new();
        for st in &traj.steps {
            let k = Some(st.k);
            c.matrix(pr, "P", k, &st.p);
            c.matrix(pr, "Pbar", k, &st.p_bar);
            c.matrix(pr, "Ups1", k, &st.ups1);
            c.matrix(pr, "Ups2", k, &st.ups2);
            c.scalar(pr, "det_Ups1", k, st.ups1.determinant());
            c.scalar(pr, "det_Ups2", k, st.ups2.determinant());
            c.matrix(pr, "K", k, &st.gains.k);
            c.matrix(pr, "Kbar", k, &st.gains.k_bar);
        }
        if let Some(v) = cost {
            c.scalar(pr, "optimal_cost", None, v);
        }
        c.0
    };
    ctx.emit(
        &manifest(ctx, "solve-finite", &problem),
        text,
        json,
        Some(&csv),
    )?;
    Ok(if traj.solvable { EXIT_OK } else { EXIT_VERDICT })
}

fn are_options(tol: f64, max_iter: usize) -> Result<AreOptions<'static>> {
    if !(tol.is_finite() && tol > 0.0) {
        return Err(CliError::Invalid("--tol must be positive".into()));
    }
    Ok(AreOptions {
        tol,
        max_iter,
        cancel: None,
    })
}

fn scalar_roots(problem: &Problem) -> Result<Option<Vec<mflqr_core::ScalarRootBranch>>> {
    if problem.system.n() == 1 && problem.system.m() == 1 {
        Ok(Some(scalar_are_roots(
            &problem.system,
            &problem.cost.weights,
        )?))
    } else {
        Ok(None)
    }
}

fn solve_infinite_cmd(ctx: &Ctx, path: &Path, tol: f64, max_iter: usize) -> Result<i32> {
    let problem = load_problem(path)?;
    let cost = problem.infinite_cost();
    let sol = solve_are(&problem.system, &cost, &are_options(tol, max_iter)?)?;
    let roots = scalar_roots(&problem)?;
    let opt = match (&problem.initial_state, sol.converged) {
        (Some(init), true) => Some(quadratic_value(&sol.p, &sol.p_bar, init)),
        _ => None,
    };
    let pr = ctx.pr;
    let text = || {
        let mut s = String::new();
        if problem.horizon().is_some() {
            let _ = writeln!(
                s,
                "note: finite horizon in the file ignored; stage weights used"
            );
        }
        let _ = writeln!(
            s,
            "termination: {} after {} iterations",
            crate::report::termination_name(sol.termination),
            sol.iterations
        );
        let _ = writeln!(
            s,
            "residuals: {} {}  last delta: {}",
            pr.show(sol.residual1),
            pr.show(sol.residual2),
            pr.show(sol.last_delta)
        );
        if !sol.assumptions.holds() {
            let _ = writeln!(s, "warning: weight assumptions do not hold");
        }
        let _ = writeln!(s, "P     {}", pr.show_matrix(&sol.p));
        let _ = writeln!(s, "Pbar  {}", pr.show_matrix(&sol.p_bar));
        let _ = writeln!(s, "Ups1  {}", pr.show_matrix(&sol.ups1));
        let _ = writeln!(s, "M1    {}", pr.show_matrix(&sol.m1));
        let _ = writeln!(s, "Ups2  {}", pr.show_matrix(&sol.ups2));
        let _ = writeln!(s, "M2    {}", pr.show_matrix(&sol.m2));
        if let Some(g) = &sol.gains {
            let _ = writeln!(s, "K     {}", pr.show_matrix(&g.k));
            let _ = writeln!(s, "Kbar  {}", pr.show_matrix(&g.k_bar));
        }
        if let Some(rs) = &roots {
            for b in rs {
                let pbs: Vec<String> = b.p_bar.iter().map(|v| pr.show(*v)).collect();
                let _ = writeln!(
                    s,
                    "root P = {}: Pbar in {{{}}}",
                    pr.show(b.p),
                    pbs.join(", ")
                );
            }
        }
        if let Some(c) = opt {
            let _ = writeln!(s, "optimal cost: {}", pr.show(c));
        }
        s
    };
    let json = || to_json(&InfiniteReport::new(&sol, roots.as_deref(), opt, pr));
    let csv = || {
        let mut c = LongCsv::new();
        for (name, m) in [
            ("P", &sol.p),
            ("Pbar", &sol.p_bar),
            ("Ups1", &sol.ups1),
            ("M1", &sol.m1),
            ("Ups2", &sol.ups2),
            ("M2", &sol.m2),
        ] {
            c.matrix(pr, name, None, m);
        }
        if let Some(g) = &sol.gains {
            c.matrix(pr, "K", None, &g.k);
            c.matrix(pr, "Kbar", None, &g.k_bar);
        }
        c.scalar(pr, "residual1", None, sol.residual1);
        c.scalar(pr, "residual2", None, sol.residual2);
        c.scalar(pr, "iterations", None, sol.iterations as f64);
        c.0
    };
    let m = manifest(ctx, "solve-infinite", &problem)
        .option("tol", tol)
        .option("max_iter", max_iter);
    ctx.emit(&m, text, json, Some(&csv))?;
    Ok(if sol.converged { EXIT_OK } else { EXIT_VERDICT })
}

fn check_cmd(
    ctx: &Ctx,
    path: &Path,
    gains_file: Option<&Path>,
    tol: f64,
    max_iter: usize,
) -> Result<i32> {
    let problem = load_problem(path)?;
    let sys = &problem.system;
    let cost = problem.infinite_cost();
    let are = solve_are(sys, &cost, &are_options(tol, max_iter)?)?;
    let roots = scalar_roots(&problem)?;
    let verdict = stabilization_verdict(sys, &cost, &are, roots.as_deref())?;
    let supplied = match gains_file {
        Some(p) => Some(is_mean_square_stable(
            sys,
            &load_gains(p, sys.n(), sys.m())?,
        )?),
        None => None,
    };
    let report = CheckReport::new(&verdict, &are, supplied.as_ref(), ctx.pr);
    let text = || check_text(&report);
    let json = || to_json(&report);
    let mut m = manifest(ctx, "check", &problem)
        .option("tol", tol)
        .option("max_iter", max_iter);
    if let Some(p) = gains_file {
        m = m.option("gains_file", p.display());
    }
    ctx.emit(&m, text, json, None)?;
    let supplied_ok = supplied.is_none_or(|s| s.stable);
    Ok(if verdict.stabilizable && supplied_ok {
        EXIT_OK
    } else {
        EXIT_VERDICT
    })
}

fn stability_line(s: &StabilityReport) -> String {
    format!(
        "{} (mean radius {}, moment radius {})",
        s.class, s.spectral_radius_mean, s.spectral_radius_moment
    )
}

fn check_text(r: &CheckReport) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "exactly observable: {} (unobservable dimension {} of {})",
        yes(r.observable),
        r.unobservable_dim,
        r.moment_dim
    );
    let _ = writeln!(s, "exactly detectable: {}", yes(r.detectable));
    for m in &r.unstable_unobservable_modes {
        let _ = writeln!(
            s,
            "  unstable unobservable mode ({}): {}{:+}i, |.| = {}",
            m.block, m.re, m.im, m.modulus
        );
    }
    let _ = writeln!(s, "algebraic Riccati iteration: {}", r.are_termination);
    if let Some(c) = &r.certificate {
        let _ = writeln!(
            s,
            "certificate: min eig P = {}, min eig P+Pbar = {}",
            c.min_eig_p, c.min_eig_p_sum
        );
    }
    if let Some(g) = &r.synthesized_gains {
        let _ = writeln!(s, "synthesized gains: {}", stability_line(g));
    }
    if let Some(g) = &r.supplied_gains {
        let _ = writeln!(s, "supplied gains: {}", stability_line(g));
    }
    for [p, pb] in &r.admissible_roots {
        let _ = writeln!(s, "admissible root pair: P = {p}, Pbar = {pb}");
    }
    let _ = writeln!(
        s,
        "mean-square stabilizable: {}{} [{} regime]",
        yes(r.stabilizable),
        if r.conditional { " (conditional)" } else { "" },
        r.regime
    );
    if !r.consistent {
        let _ = writeln!(
            s,
            "warning: verdict disagrees with the closed-loop stability test"
        );
    }
    s
}

struct SimulateArgs {
    gains: GainSource,
    gains_file: Option<PathBuf>,
    paths: usize,
    steps: Option<usize>,
    seed: u64,
    noise: NoiseArg,
    mean: MeanArg,
    csv: Option<PathBuf>,
    svg: Option<PathBuf>,
}

enum Law {
    Zero,
    Constant(GainPair),
    Schedule(Vec<GainPair>),
}

fn simulate_cmd(ctx: &Ctx, path: &Path, a: &SimulateArgs) -> Result<i32> {
    let problem = load_problem(path)?;
    let sys = &problem.system;
    let init = problem.initial_state.clone().ok_or_else(|| {
        CliError::Invalid("simulate needs `initial_state` in the problem file".into())
    })?;
    let law = match a.gains {
        GainSource::Zero => Law::Zero,
        GainSource::FromFile => {
            let p = a
                .gains_file
                .as_deref()
                .ok_or_else(|| CliError::Invalid("--gains from-file needs --gains-file".into()))?;
            Law::Constant(load_gains(p, sys.n(), sys.m())?)
        }
        GainSource::FromAre => match problem.horizon() {
            Some(_) => {
                let traj = solve_finite(sys, &problem.cost, None)?;
                if !traj.solvable {
                    eprintln!("error: the Riccati recursion is not solvable");
                    return Ok(EXIT_VERDICT);
                }
                Law::Schedule(traj.gain_schedule())
            }
            None => {
                let sol = solve_are(sys, &problem.cost, &AreOptions::default())?;
                match sol.gains {
                    Some(g) if sol.converged => Law::Constant(g),
                    _ => {
                        eprintln!(
                            "error: algebraic Riccati iteration {}; no gains to simulate",
                            crate::report::termination_name(sol.termination)
                        );
                        return Ok(EXIT_VERDICT);
                    }
                }
            }
        },
    };
    let steps = match (&law, a.steps) {
        (_, Some(s)) => s,
        (Law::Schedule(s), None) => s.len(),
        _ => 50,
    };
    if let Law::Schedule(s) = &law {
        if steps > s.len() {
            return Err(CliError::Invalid(format!(
                "--steps {steps} exceeds the {} stages of the finite horizon",
                s.len()
            )));
        }
    }
    let feedback = match &law {
        Law::Zero => Feedback::Zero,
        Law::Constant(g) => Feedback::Constant(g),
        Law::Schedule(s) => Feedback::Schedule(s),
    };
    let cfg = SimulationConfig {
        horizon: steps,
        n_paths: a.paths,
        seed: a.seed,
        noise: match a.noise {
            NoiseArg::Gaussian => Noise::Gaussian,
            NoiseArg::Rademacher => Noise::Rademacher,
        },
        mean_mode: match a.mean {
            MeanArg::Analytic => MeanMode::Analytic,
            MeanArg::Ensemble => MeanMode::EnsembleAverage,
        },
        record_paths: false,
    };
    let result = simulate(sys, feedback, &init, &cfg, &Rayon::from_env())?;

    let gains_name = match a.gains {
        GainSource::FromAre => "from-are",
        GainSource::FromFile => "from-file",
        GainSource::Zero => "zero",
    };
    let noise_name = match a.noise {
        NoiseArg::Gaussian => "gaussian",
        NoiseArg::Rademacher => "rademacher",
    };
    let mean_name = match a.mean {
        MeanArg::Analytic => "analytic",
        MeanArg::Ensemble => "ensemble",
    };
    let mut m = manifest(ctx, "simulate", &problem)
        .seed(a.seed)
        .option("gains", gains_name)
        .option("paths", a.paths)
        .option("steps", steps)
        .option("noise", noise_name)
        .option("mean", mean_name);
    if let Some(p) = &a.gains_file {
        let text = std::fs::read(p).map_err(|e| CliError::io(p, e))?;
        m = m.option("gains_sha256", crate::problem::sha256_hex(&text));
    }

    let pr = ctx.pr;
    if let Some(p) = &a.csv {
        let mut s = String::from("k");
        for i in 1..=sys.n() {
            let _ = write!(s, ",Ex_{i}");
        }
        s.push_str(",msq,stderr\n");
        for (k, mean) in result.mean_path.iter().enumerate() {
            let _ = write!(s, "{k}");
            for v in mean.iter() {
                let _ = write!(s, ",{}", pr.show(*v));
            }
            let _ = writeln!(
                s,
                ",{},{}",
                pr.show(result.msq_path[k]),
                pr.show(result.msq_stderr[k])
            );
        }
        write_output(p, &s, &m)?;
    }
    if let Some(p) = &a.svg {
        let chart = line_chart(&result.msq_path, "E(x'x)", "k", "mean square");
        write_output(p, &chart, &m)?;
    }
    let last = result.msq_path.len() - 1;
    let report = SimulationReport {
        steps,
        paths: a.paths,
        seed: a.seed,
        gains: gains_name.to_string(),
        noise: noise_name.to_string(),
        mean_mode: mean_name.to_string(),
        diverged: result.diverged,
        msq_initial: pr.round(result.msq_path[0]),
        msq_final: pr.round(result.msq_path[last]),
        msq_stderr_final: pr.round(result.msq_stderr[last]),
    };
    let text = || {
        let mut s = format!(
            "{} paths, {} steps, seed {}, gains {}\nE(x'x): {} at k = 0, {} at k = {} (stderr {})\n",
            report.paths,
            report.steps,
            report.seed,
            report.gains,
            pr.show(report.msq_initial),
            pr.show(report.msq_final),
            last,
            pr.show(report.msq_stderr_final)
        );
        if report.diverged {
            s.push_str("run diverged (state overflow)\n");
        }
        s
    };
    ctx.emit(&m, text, || to_json(&report), None)?;
    Ok(if result.diverged {
        EXIT_VERDICT
    } else {
        EXIT_OK
    })
}

fn oracle(
    name: &str,
    passed: Option<bool>,
    value: f64,
    tolerance: f64,
    detail: String,
) -> OracleCheck {
    OracleCheck {
        name: name.to_string(),
        passed,
        value,
        tolerance,
        detail,
    }
}

/// Gaussian start with unit mean and identity covariance.
fn default_initial(n: usize) -> InitialState {
    InitialState::Gaussian {
        mean: Vector::from_element(n, 1.0),
        cov: Matrix::identity(n, n),
    }
}

fn verify_cmd(ctx: &Ctx, path: &Path, paths: usize, seed: u64, tol: f64) -> Result<i32> {
    let problem = load_problem(path)?;
    let init = problem
        .initial_state
        .clone()
        .unwrap_or_else(|| default_initial(problem.system.n()));
    let executor = Rayon::from_env();
    let pr = ctx.pr;
    let checks = match problem.horizon() {
        Some(h) => verify_finite(&problem, h, &init, paths, seed, tol, &executor)?,
        None => verify_infinite(&problem, &init, paths, seed, tol, &executor)?,
    };
    let checks: Vec<OracleCheck> = checks
        .into_iter()
        .map(|c| OracleCheck {
            value: pr.round(c.value),
            tolerance: pr.round(c.tolerance),
            ..c
        })
        .collect();
    let passed = checks.iter().all(|c| c.passed != Some(false));
    let report = VerifyReport { checks, passed };
    let text = || {
        let mut s = format!(
            "{:<28} {:<6} {:>14} {:>14}  detail\n",
            "check", "result", "value", "tolerance"
        );
        for c in &report.checks {
            let status = match c.passed {
                Some(true) => "PASS",
                Some(false) => "FAIL",
                None => "skip",
            };
            let _ = writeln!(
                s,
                "{:<28} {:<6} {:>14} {:>14}  {}",
                c.name,
                status,
                pr.show(c.value),
                pr.show(c.tolerance),
                c.detail
            );
        }
        let _ = writeln!(
            s,
            "{}",
            if report.passed {
                "all checks passed"
            } else {
                "some checks FAILED"
            }
        );
        s
    };
    let m = manifest(ctx, "verify", &problem)
        .seed(seed)
        .option("paths", paths)
        .option("tol", tol);
    ctx.emit(&m, text, || to_json(&report), None)?;
    Ok(if report.passed { EXIT_OK } else { EXIT_VERDICT })
}

fn monte_carlo_check(estimate: f64, stderr: f64, exact: f64, detail: &str) -> OracleCheck {
    let tolerance = 4.0 * stderr + 1e-9 * exact.abs().max(1.0);
    let gap = (estimate - exact).abs();
    oracle(
        "monte carlo cost",
        Some(gap <= tolerance),
        gap,
        tolerance,
        format!("{detail}: sampled {estimate:.6e} vs exact {exact:.6e}"),
    )
}

fn verify_finite(
    problem: &Problem,
    horizon: usize,
    init: &InitialState,
    paths: usize,
    seed: u64,
    tol: f64,
    executor: &Rayon,
) -> Result<Vec<OracleCheck>> {
    let (sys, cost) = (&problem.system, &problem.cost);
    let traj = solve_finite(sys, cost, None)?;
    if !traj.solvable {
        let step = traj.failure_step().unwrap_or(0);
        return Ok(vec![oracle(
            "riccati solvability",
            Some(false),
            step as f64,
            0.0,
            format!("curvature not positive definite at k = {step}"),
        )]);
    }
    let mut out = Vec::new();

    let scale = traj
        .steps
        .iter()
        .flat_map(|s| [&s.ups1, &s.ups2, &s.m1, &s.m2, &s.p, &s.p_bar])
        .map(sup_norm)
        .fold(1.0, f64::max);
    let mp = verify_maximum_principle(sys, cost, &traj, None, tol * scale)?;
    let worst = mp.residuals.iter().map(|r| r.residual).fold(0.0, f64::max);
    out.push(oracle(
        "maximum principle",
        Some(mp.passed()),
        worst,
        tol * scale,
        "costate block sum and equilibrium residuals".into(),
    ));

    let (n, m) = (sys.n(), sys.m());
    if n <= 3 && m <= 2 && horizon <= 4 {
        let inits = probe_initial_states(n, &Matrix::identity(n, n));
        let riccati: f64 = inits
            .iter()
            .map(|i| optimal_cost(&traj, i))
            .sum::<mflqr_core::Result<f64>>()?;
        let res = brute_force_optimize(sys, cost, &inits, &BruteForceOptions::default())?;
        let gain_gap = res
            .gains
            .iter()
            .zip(&traj.steps)
            .map(|(g, s)| {
                max_abs_diff(&g.k, &s.gains.k).max(max_abs_diff(&g.k_bar, &s.gains.k_bar))
            })
            .fold(0.0, f64::max);
        let no_better = res.cost >= riccati - 1e-6 * riccati.abs().max(1.0);
        out.push(oracle(
            "brute-force optimum",
            Some(no_better && gain_gap <= 1e-3),
            gain_gap,
            1e-3,
            format!(
                "search cost {:.9e} vs Riccati {:.9e}; value is the max gain gap",
                res.cost, riccati
            ),
        ));
    } else {
        out.push(oracle(
            "brute-force optimum",
            None,
            f64::NAN,
            f64::NAN,
            "only for n <= 3, m <= 2, N <= 4".into(),
        ));
    }

    let schedule = traj.gain_schedule();
    let cfg = SimulationConfig {
        horizon: horizon + 1,
        n_paths: paths.max(2),
        seed,
        record_paths: true,
        ..Default::default()
    };
    let sim = simulate(sys, Feedback::Schedule(&schedule), init, &cfg, executor)?;
    let est = empirical_cost(&sim, cost, horizon + 1)?;
    let exact = optimal_cost(&traj, init)?;
    out.push(monte_carlo_check(
        est.estimate,
        est.stderr,
        exact,
        "optimal cost",
    ));
    Ok(out)
}

const MONTE_CARLO_STEPS: usize = 50;

fn verify_infinite(
    problem: &Problem,
    init: &InitialState,
    paths: usize,
    seed: u64,
    tol: f64,
    executor: &Rayon,
) -> Result<Vec<OracleCheck>> {
    let sys = &problem.system;
    let cost = problem.infinite_cost();
    let opts = AreOptions::default();
    let sol: AreSolution = solve_are(sys, &cost, &opts)?;
    let residual = sol.residual1.max(sol.residual2);
    let mut out = vec![oracle(
        "riccati residuals",
        Some(sol.converged && residual <= 10.0 * opts.tol),
        residual,
        10.0 * opts.tol,
        format!(
            "{} after {} iterations",
            crate::report::termination_name(sol.termination),
            sol.iterations
        ),
    )];
    let Some(gains) = sol.gains.clone().filter(|_| sol.converged) else {
        return Ok(out);
    };
    let scale = [&sol.ups1, &sol.ups2, &sol.m1, &sol.m2]
        .into_iter()
        .map(sup_norm)
        .fold(1.0, f64::max);
    let eq = sup_norm(&(&sol.ups1 * &gains.k + &sol.m1))
        .max(sup_norm(&(&sol.ups2 * gains.total() + &sol.m2)));
    out.push(oracle(
        "equilibrium conditions",
        Some(eq <= tol * scale),
        eq,
        tol * scale,
        "Ups1 K + M1 and Ups2 (K + Kbar) + M2".into(),
    ));
    let ms = is_mean_square_stable(sys, &gains)?;
    out.push(oracle(
        "closed-loop stability",
        Some(ms.stable),
        ms.spectral_radius_moment.max(ms.spectral_radius_mean),
        1.0,
        "largest spectral radius of the mean and moment operators".into(),
    ));
    let cfg = SimulationConfig {
        horizon: MONTE_CARLO_STEPS,
        n_paths: paths.max(2),
        seed,
        record_paths: true,
        ..Default::default()
    };
    let sim = simulate(sys, Feedback::Constant(&gains), init, &cfg, executor)?;
    let est = empirical_cost(&sim, &cost, MONTE_CARLO_STEPS)?;
    let exact = truncated_cost(sys, &cost.weights, &gains, init, MONTE_CARLO_STEPS);
    out.push(monte_carlo_check(
        est.estimate,
        est.stderr,
        exact,
        &format!("first {MONTE_CARLO_STEPS} stages"),
    ));
    Ok(out)
}

#[derive(Serialize)]
struct GoldenJson<'a> {
    rows: &'a [GoldenRow],
    max_deviation: Vec<(&'a str, f64)>,
    mismatches: usize,
    errata: usize,
}

fn examples_cmd(ctx: &Ctx, show_all: bool, dir: Option<PathBuf>) -> Result<i32> {
    let dir = dir
        .or_else(|| ctx.out.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("mflqr-examples"));
    std::fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    for (name, text) in golden::EXAMPLES {
        let p = dir.join(name);
        std::fs::write(&p, text).map_err(|e| CliError::io(&p, e))?;
    }
    let rows = golden::all_rows()?;
    let pr = ctx.pr;
    let max_deviation: Vec<(&str, f64)> = golden::EXAMPLES
        .iter()
        .map(|(name, _)| {
            let worst = rows
                .iter()
                .filter(|r| r.example == *name)
                .map(GoldenRow::deviation)
                .fold(0.0, f64::max);
            (*name, worst)
        })
        .collect();
    let count = |s| rows.iter().filter(|r| r.status() == s).count();
    let (mismatches, errata) = (count(Status::Mismatch), count(Status::Erratum));

    if ctx.json {
        print!(
            "{}",
            to_json(&GoldenJson {
                rows: &rows,
                max_deviation: max_deviation.clone(),
                mismatches,
                errata,
            })
        );
    } else if !ctx.quiet {
        let mut s = format!(
            "wrote {} example problems to {}\n",
            golden::EXAMPLES.len(),
            dir.display()
        );
        if show_all {
            let _ = writeln!(
                s,
                "{:<28} {:<40} {:>12} {:>12} {:>10} {:>8}  {:<8} note",
                "example", "quantity", "reference", "computed", "|dev|", "tol", "status"
            );
            for r in &rows {
                let _ = writeln!(
                    s,
                    "{:<28} {:<40} {:>12} {:>12} {:>10} {:>8}  {:<8} {}",
                    r.example,
                    r.quantity,
                    pr.show(r.reference),
                    pr.show(r.computed),
                    pr.show(r.deviation()),
                    pr.show(r.tol),
                    match r.status() {
                        Status::Match => "ok",
                        Status::Erratum => "erratum",
                        Status::Mismatch => "MISMATCH",
                    },
                    r.erratum
                        .as_deref()
                        .filter(|_| r.status() != Status::Match)
                        .unwrap_or("")
                );
            }
        }
        for (name, worst) in &max_deviation {
            let n = rows.iter().filter(|r| r.example == *name).count();
            let _ = writeln!(
                s,
                "{name}: {n} values, max abs deviation {}",
                pr.show(*worst)
            );
        }
        let _ = writeln!(
            s,
            "{} values: {} within tolerance, {} explained errata, {} mismatches",
            rows.len(),
            count(Status::Match),
            errata,
            mismatches
        );
        print!("{s}");
    }
    Ok(if mismatches == 0 {
        EXIT_OK
    } else {
        EXIT_VERDICT
    })
}

fn yes(b: bool) -> &'static str {
    if b {
        "yes"
    } else {
        "no"
    }
}
