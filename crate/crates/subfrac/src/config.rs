//! Argument parsing and validation.

use std::env;
use std::fmt;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use subfrac_core::manifolds::ManifoldModel;
use subfrac_core::subordination::KernelFamily;
use subfrac_core::QuadratureSpec;

/// Process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exit {
    Ok = 0,
    VerificationFailed = 1,
    InputError = 2,
    AccuracyError = 3,
}

impl Exit {
    pub fn code(self) -> i32 {
        self as i32
    }
}

/// An error that ends the run with a specific exit code.
#[derive(Debug, Clone, PartialEq)]
pub struct CliError {
    pub exit: Exit,
    pub message: String,
}

impl CliError {
    pub fn input(message: impl Into<String>) -> Self {
        CliError {
            exit: Exit::InputError,
            message: message.into(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<subfrac_core::Error> for CliError {
    fn from(e: subfrac_core::Error) -> Self {
        use subfrac_core::Error as E;
        let exit = match e {
            E::Domain { .. } | E::Unsupported(_) => Exit::InputError,
            E::Accuracy { .. } => Exit::AccuracyError,
            E::Infeasible { .. } => Exit::VerificationFailed,
        };
        CliError {
            exit,
            message: e.to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Command {
    /// Evaluate a kernel at one (t, r).
    Kernel,
    /// Tabulate the stable subordinator density against its envelope.
    Subordinator,
    /// Kernel-to-envelope ratios on a (t, s) grid.
    Bounds,
    /// Check the class axioms for one family.
    ClassCheck,
    /// L¹ and weighted sup distances over a time list.
    Converge,
    /// Fitted decay rates against the predicted exponent.
    Rate,
    /// Quantities attached to the Poisson kernel on H³.
    Hyperbolic,
    /// Initial data whose convergence is slower than a given rate.
    PrescribeRate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FamilyName {
    Heat,
    Extension,
    FracHeat,
    HypPoisson,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Datum {
    /// Unit point mass at distance --y from the base point.
    Dirac,
    /// Unit-mass radial bump of radius --radius about the base point.
    Bump,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum HyperbolicTask {
    CriticalRegion,
    Shape,
    Quotient,
    Busemann,
    Deficiency,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Phi {
    /// φ(t) = 1/log t
    InvLog,
    /// φ(t) = t^{-p}
    Power,
}

#[derive(Debug, Parser)]
#[command(
    name = "subfrac",
    about = "Heat-subordinated kernels: evaluation, verification and long-time experiments",
    arg_required_else_help = true
)]
struct Cli {
    #[command(subcommand)]
    command: Sub,
    #[command(flatten)]
    opts: Opts,
}

#[derive(Debug, Subcommand)]
enum Sub {
    Kernel,
    Subordinator,
    Bounds,
    ClassCheck,
    Converge,
    Rate,
    Hyperbolic,
    PrescribeRate,
}

#[derive(Debug, Clone, clap::Args)]
struct Opts {
    /// euclid1, euclid2, euclid3 or h3
    #[arg(long, global = true, default_value = "euclid1")]
    model: String,
    #[arg(long, global = true, value_enum)]
    family: Option<FamilyName>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    sigma: Option<f64>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    alpha: Option<f64>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    t: Option<f64>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    r: Option<f64>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    u: Option<f64>,
    /// Comma-separated list of times.
    #[arg(long, global = true, value_delimiter = ',', allow_negative_numbers = true)]
    times: Option<Vec<f64>>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    eps: Option<f64>,
    /// Distance of the point mass from the base point.
    #[arg(long, global = true, allow_negative_numbers = true)]
    y: Option<f64>,
    #[arg(long, global = true, value_enum, default_value = "dirac")]
    datum: Datum,
    #[arg(long, global = true, allow_negative_numbers = true)]
    radius: Option<f64>,
    #[arg(long, global = true, value_enum, default_value = "critical-region")]
    task: HyperbolicTask,
    #[arg(long, global = true)]
    k: Option<usize>,
    #[arg(long, global = true, value_enum, default_value = "inv-log")]
    phi: Phi,
    #[arg(long, global = true, allow_negative_numbers = true)]
    p: Option<f64>,
    #[arg(long, global = true, value_enum, default_value = "csv")]
    format: Format,
    /// Output file; standard output when absent.
    #[arg(long, global = true)]
    output: Option<PathBuf>,
}

/// Validated numeric parameters; absent keys fall back per command.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Params {
    pub t: Option<f64>,
    pub r: Option<f64>,
    pub u: Option<f64>,
    pub times: Option<Vec<f64>>,
    pub eps: Option<f64>,
    pub y: Option<f64>,
    pub radius: Option<f64>,
    pub k: Option<usize>,
    pub p: Option<f64>,
    pub alpha: Option<f64>,
    pub sigma: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    pub model_name: String,
    pub model: ManifoldModel,
    pub family: Option<KernelFamily>,
    pub params: Params,
    pub datum: Datum,
    pub task: HyperbolicTask,
    pub phi: Phi,
    pub output: Option<PathBuf>,
    pub format: Format,
    pub quad: QuadratureSpec,
}

fn in_open(name: &str, v: Option<f64>, lo: f64, hi: f64, shown: &str) -> Result<(), CliError> {
    match v {
        Some(x) if !(x > lo && x < hi) => Err(CliError::input(format!("{name} must lie in {shown}"))),
        _ => Ok(()),
    }
}

fn nonneg(name: &str, v: Option<f64>) -> Result<(), CliError> {
    match v {
        Some(x) if !(x >= 0.0 && x.is_finite()) => {
            Err(CliError::input(format!("{name} must lie in [0, inf)")))
        }
        _ => Ok(()),
    }
}

fn model_from(name: &str) -> Result<ManifoldModel, CliError> {
    let m = match name {
        "euclid1" => ManifoldModel::euclidean(1),
        "euclid2" => ManifoldModel::euclidean(2),
        "euclid3" => ManifoldModel::euclidean(3),
        "h3" => Ok(ManifoldModel::hyperbolic3()),
        _ => {
            return Err(CliError::input(format!(
                "model must be one of euclid1, euclid2, euclid3, h3 (got {name})"
            )))
        }
    };
    Ok(m?)
}

fn family_from(
    name: Option<FamilyName>,
    model: ManifoldModel,
    p: &Params,
) -> Result<Option<KernelFamily>, CliError> {
    let name = match name {
        Some(n) => n,
        None if p.sigma.is_some() => FamilyName::Extension,
        None if p.alpha.is_some() => FamilyName::FracHeat,
        None if model.is_hyperbolic() => FamilyName::HypPoisson,
        None => return Ok(None),
    };
    let need = |v: Option<f64>, flag: &str| {
        v.ok_or_else(|| CliError::input(format!("--{flag} is required for this family")))
    };
    let fam = match name {
        FamilyName::Heat => KernelFamily::heat(model),
        FamilyName::Extension => KernelFamily::extension(need(p.sigma, "sigma")?, model)?,
        FamilyName::FracHeat => KernelFamily::frac_heat(need(p.alpha, "alpha")?, model)?,
        FamilyName::HypPoisson => {
            if !model.is_hyperbolic() {
                return Err(CliError::input("family hyp-poisson needs --model h3"));
            }
            KernelFamily::hyp_poisson()
        }
    };
    Ok(Some(fam))
}

fn quad_from_env() -> Result<QuadratureSpec, CliError> {
    let mut q = QuadratureSpec::default();
    if let Ok(v) = env::var("SUBFRAC_MAX_PANELS") {
        match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => q.max_panels = n,
            _ => {
                return Err(CliError::input(format!(
                    "SUBFRAC_MAX_PANELS must be a positive integer (got {v})"
                )))
            }
        }
    }
    Ok(q)
}

/// Parses the arguments that follow the program name.
///
/// Help and usage requests come back as errors carrying the text to print;
/// `--help` exits 0, everything else exits 2.
pub fn parse_args<S: AsRef<str>>(argv: &[S]) -> Result<RunConfig, CliError> {
    let full = std::iter::once("subfrac").chain(argv.iter().map(|s| s.as_ref()));
    let cli = Cli::try_parse_from(full).map_err(|e| {
        use clap::error::ErrorKind;
        let exit = match e.kind() {
            ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => Exit::Ok,
            _ => Exit::InputError,
        };
        CliError {
            exit,
            message: e.render().to_string(),
        }
    })?;
    let o = cli.opts;
    let params = Params {
        t: o.t,
        r: o.r,
        u: o.u,
        times: o.times,
        eps: o.eps,
        y: o.y,
        radius: o.radius,
        k: o.k,
        p: o.p,
        alpha: o.alpha,
        sigma: o.sigma,
    };
    in_open("alpha", params.alpha, 0.0, 2.0, "(0,2)")?;
    in_open("sigma", params.sigma, 0.0, 1.0, "(0,1)")?;
    in_open("t", params.t, 0.0, f64::INFINITY, "(0, inf)")?;
    in_open("u", params.u, 0.0, f64::INFINITY, "(0, inf)")?;
    in_open("eps", params.eps, 0.0, 2.0, "(0,2)")?;
    in_open("radius", params.radius, 0.0, f64::INFINITY, "(0, inf)")?;
    in_open("p", params.p, 0.0, f64::INFINITY, "(0, inf)")?;
    nonneg("r", params.r)?;
    nonneg("y", params.y)?;
    if let Some(ts) = &params.times {
        if ts.is_empty() || ts.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
            return Err(CliError::input("times must be positive numbers"));
        }
        if ts.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(CliError::input("times must be strictly increasing"));
        }
    }
    if let Some(k) = params.k {
        if !(1..=8).contains(&k) {
            return Err(CliError::input("k must lie in {1, ..., 8}"));
        }
    }
    let model = model_from(&o.model)?;
    let family = family_from(o.family, model, &params)?;
    let command = match cli.command {
        Sub::Kernel => Command::Kernel,
        Sub::Subordinator => Command::Subordinator,
        Sub::Bounds => Command::Bounds,
        Sub::ClassCheck => Command::ClassCheck,
        Sub::Converge => Command::Converge,
        Sub::Rate => Command::Rate,
        Sub::Hyperbolic => Command::Hyperbolic,
        Sub::PrescribeRate => Command::PrescribeRate,
    };
    Ok(RunConfig {
        command,
        model_name: o.model,
        model,
        family,
        params,
        datum: o.datum,
        task: o.task,
        phi: o.phi,
        output: o.output,
        format: o.format,
        quad: quad_from_env()?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_example_parses() {
        let c = parse_args(&[
            "kernel", "--model", "euclid1", "--family", "frac-heat", "--alpha", "1", "--t", "1",
            "--r", "0",
        ])
        .unwrap();
        assert_eq!(c.command, Command::Kernel);
        assert_eq!(c.params.t, Some(1.0));
        assert_eq!(c.family.unwrap().param(), Some(1.0));
    }

    #[test]
    fn alpha_outside_domain() {
        let e = parse_args(&["kernel", "--alpha", "3"]).unwrap_err();
        assert_eq!(e.exit, Exit::InputError);
        assert!(e.message.contains("alpha must lie in (0,2)"));
    }

    #[test]
    fn empty_argv_gives_usage() {
        let e = parse_args::<&str>(&[]).unwrap_err();
        assert_eq!(e.exit, Exit::InputError);
        assert!(e.message.contains("Usage"));
    }

    #[test]
    fn help_exits_cleanly() {
        let e = parse_args(&["--help"]).unwrap_err();
        assert_eq!(e.exit, Exit::Ok);
    }

    #[test]
    fn family_inference_and_errors() {
        let c = parse_args(&["kernel", "--sigma", "0.3", "--t", "1"]).unwrap();
        assert_eq!(c.family.unwrap().param(), Some(0.3));
        let c = parse_args(&["hyperbolic", "--model", "h3"]).unwrap();
        assert!(c.family.unwrap().model.is_hyperbolic());
        assert!(parse_args(&["kernel", "--family", "extension"]).is_err());
        assert!(parse_args(&["kernel", "--family", "hyp-poisson"]).is_err());
        assert!(parse_args(&["kernel", "--model", "euclid4"]).is_err());
        assert!(parse_args(&["converge", "--times", "10,5"]).is_err());
        assert!(parse_args(&["bogus"]).is_err());
    }
}
