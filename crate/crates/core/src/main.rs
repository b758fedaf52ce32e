use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use nystrom_svgp::data::{to_csv_string, write_csv, TestFunction};
use nystrom_svgp::exact::{fit_krr, log_marginal_likelihood};
use nystrom_svgp::harness::{run_checks, run_verification, Check, Context, DataSource, ExperimentConfig};
use nystrom_svgp::kernels::KernelFamily;
use nystrom_svgp::nystrom::{fit_nystrom, select_inducing, SelectionStrategy};
use nystrom_svgp::report::{emit_report, ReportFormat, VerificationReport};
use nystrom_svgp::svgp::{optimal_elbo, optimal_parameters};

#[derive(Parser)]
#[command(name = "nystrom-svgp", version, about = "Nyström KRR / SVGP equivalence and bound verifier")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit one model and print its parameters as JSON.
    Fit {
        #[arg(long, value_enum)]
        model: Model,
        #[command(flatten)]
        exp: ExperimentArgs,
    },
    /// Run the full verification suite.
    Verify {
        #[command(flatten)]
        exp: ExperimentArgs,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Run a single named check.
    Bounds {
        #[arg(long, value_parser = check_names())]
        name: String,
        #[command(flatten)]
        exp: ExperimentArgs,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Generate a dataset and write it as CSV.
    Synth {
        #[command(flatten)]
        exp: ExperimentArgs,
        /// Output file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Model {
    Exact,
    Nystrom,
    Svgp,
}

#[derive(Clone, Copy, ValueEnum)]
enum KernelArg {
    Gaussian,
    Polynomial,
}

#[derive(Clone, Copy, ValueEnum)]
enum SelectArg {
    GreedyTrace,
    Uniform,
}

#[derive(Clone, Copy, ValueEnum)]
enum FunctionArg {
    Zero,
    Sine,
    Quadratic,
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(long, value_enum, default_value = "gaussian")]
    kernel: KernelArg,
    /// Gaussian lengthscale.
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    /// Polynomial degree.
    #[arg(long, default_value_t = 2)]
    degree: u32,
    /// Polynomial offset.
    #[arg(long, default_value_t = 1.0)]
    offset: f64,
    #[arg(long, default_value_t = 60)]
    n: usize,
    #[arg(long, default_value_t = 1)]
    d: usize,
    #[arg(long, default_value_t = 8)]
    m: usize,
    /// Noise variance; defaults to 0.1 when neither this nor --ridge is given.
    #[arg(long)]
    noise_var: Option<f64>,
    #[arg(long)]
    ridge: Option<f64>,
    /// Require noise variance = n * ridge.
    #[arg(long)]
    link_noise_ridge: bool,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, value_enum, default_value = "greedy-trace")]
    select: SelectArg,
    #[arg(long, default_value_t = 2000)]
    mc_samples: usize,
    /// Read `x1,...,xd,y` from CSV instead of synthesizing.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Synthesize `y = f0(x) + noise` instead of prior draws.
    #[arg(long, value_enum)]
    function: Option<FunctionArg>,
    #[arg(long, default_value_t = 100)]
    probes: usize,
}

#[derive(Args)]
struct OutputArgs {
    #[arg(long, value_enum, default_value = "json")]
    format: ReportFormat,
    /// Record wall-clock time per check.
    #[arg(long)]
    timings: bool,
}

fn check_names() -> clap::builder::PossibleValuesParser {
    clap::builder::PossibleValuesParser::new(Check::ALL.map(Check::name))
}

impl ExperimentArgs {
    fn config(&self, timings: bool) -> ExperimentConfig {
        let kernel = match self.kernel {
            KernelArg::Gaussian => KernelFamily::Gaussian { lengthscale: self.gamma },
            KernelArg::Polynomial => KernelFamily::Polynomial {
                degree: self.degree,
                offset: self.offset,
            },
        };
        let noise_var = match (self.noise_var, self.ridge) {
            (None, None) => Some(0.1),
            (s, _) => s,
        };
        let data = match (&self.data, self.function) {
            (Some(path), _) => DataSource::Csv { path: path.clone() },
            (None, Some(f)) => DataSource::Function {
                function: match f {
                    FunctionArg::Zero => TestFunction::Zero,
                    FunctionArg::Sine => TestFunction::Sine,
                    FunctionArg::Quadratic => TestFunction::Quadratic,
                },
            },
            (None, None) => DataSource::Prior,
        };
        ExperimentConfig {
            kernel,
            n: self.n,
            d: self.d,
            m: self.m,
            noise_var,
            ridge: self.ridge,
            link_noise_ridge: self.link_noise_ridge,
            selection: match self.select {
                SelectArg::GreedyTrace => SelectionStrategy::GreedyTrace,
                SelectArg::Uniform => SelectionStrategy::Uniform { seed: self.seed },
            },
            seed: self.seed,
            mc_samples: self.mc_samples,
            data,
            probes: self.probes,
            record_timings: timings,
            ..ExperimentConfig::default()
        }
    }
}

fn print_report(report: &VerificationReport, format: ReportFormat) -> ExitCode {
    let bytes = emit_report(report, format);
    if std::io::stdout().write_all(&bytes).is_err() {
        return ExitCode::from(2);
    }
    if report.overall_pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn fit(model: Model, config: &ExperimentConfig) -> nystrom_svgp::Result<serde_json::Value> {
    let ctx = Context::build(config)?;
    let (data, ind) = (&ctx.data, &ctx.inducing);
    let reg = ctx.reg;
    let rmse = |fitted: &nalgebra::DVector<f64>| ((data.targets() - fitted).norm_squared() / data.len() as f64).sqrt();
    Ok(match model {
        Model::Exact => {
            let krr = fit_krr(&ctx.kernel, data, reg.ridge)?;
            json!({
                "model": "exact",
                "ridge": reg.ridge,
                "noise_var": reg.noise_var,
                "coefficients": krr.coefficients().as_slice(),
                "rkhs_norm_sq": krr.rkhs_norm_sq(),
                "train_rmse": rmse(&krr.fitted()),
                "log_marginal_likelihood": log_marginal_likelihood(&ctx.kernel, data, reg.noise_var)?,
            })
        }
        Model::Nystrom => {
            let sel = select_inducing(&ctx.kernel, data.inputs(), config.m, config.selection)?;
            let nys = fit_nystrom(data, &sel.inducing, reg.ridge)?;
            json!({
                "model": "nystrom",
                "ridge": reg.ridge,
                "inducing_indices": sel.indices,
                "beta": nys.beta().as_slice(),
                "rkhs_norm_sq": nys.rkhs_norm_sq(),
                "train_rmse": rmse(&nys.fitted(data.inputs())?),
                "trace_gap": ind.trace_gap(data.inputs())?,
            })
        }
        Model::Svgp => {
            let state = optimal_parameters(data, ind, reg.noise_var)?;
            let sigma: Vec<Vec<f64>> = state.sigma().row_iter().map(|r| r.iter().copied().collect()).collect();
            json!({
                "model": "svgp",
                "noise_var": reg.noise_var,
                "inducing_points": ind.points().as_slice(),
                "mu": state.mu().as_slice(),
                "sigma": sigma,
                "elbo": optimal_elbo(data, ind, reg.noise_var)?,
                "trace_gap": ind.trace_gap(data.inputs())?,
            })
        }
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Verify { exp, out } => {
            let report = run_verification(&exp.config(out.timings));
            print_report(&report, out.format)
        }
        Command::Bounds { name, exp, out } => {
            let check = Check::from_name(&name).expect("validated by clap");
            let report = run_checks(&exp.config(out.timings), &[check]);
            print_report(&report, out.format)
        }
        Command::Fit { model, exp } => match fit(model, &exp.config(false)) {
            Ok(v) => {
                println!("{}", serde_json::to_string_pretty(&v).expect("json value"));
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::FAILURE
            }
        },
        Command::Synth { exp, out } => {
            let config = exp.config(false);
            let result = config
                .regularization(config.n.max(1))
                .and_then(|r| config.build_dataset(r.noise_var));
            let data = match result {
                Ok(d) => d,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::FAILURE;
                }
            };
            let written = match out {
                Some(path) => write_csv(&data, path),
                None => std::io::stdout()
                    .write_all(to_csv_string(&data).as_bytes())
                    .map_err(Into::into),
            };
            match written {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::FAILURE
                }
            }
        }
    }
}
