use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use num_complex::Complex64;
use serde::Serialize;
use serde_json::json;

use spectral_demix::admm::{admm_solve, AdmmConfig, SolveReport};
use spectral_demix::baselines::{music, periodogram, PeriodogramConfig, Window};
use spectral_demix::certificate::{certify_instance, VerifyConfig};
use spectral_demix::decode::{demix, DecodeConfig};
use spectral_demix::experiment::{run_grid, ExperimentGrid, LambdaChoice};
use spectral_demix::greedy::{greedy_demix, GreedyConfig};
use spectral_demix::model::{
    generate_instance, picket_fence, recovery_score, AmplitudeLaw, Instance, InstanceParams, LineSpectrum,
    RecoveryScore, SpikeSupport, SpikeVector,
};
use spectral_demix::DemixError;

const THREADS_ENV: &str = "SPECTRAL_DEMIX_THREADS";

#[derive(Parser)]
#[command(name = "spectral-demix", version, about = "Line spectral estimation with sparse outliers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Seed for subcommands that draw random instances.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Output file; stdout when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum AmpArg {
    UnitPhase,
    Gaussian,
}

#[derive(Clone, Copy, ValueEnum)]
enum BaselineMethod {
    Periodogram,
    Music,
}

#[derive(Clone, Copy, ValueEnum)]
enum WindowArg {
    None,
    Hann,
    Hamming,
}

#[derive(clap::Args)]
struct InstanceArgs {
    #[arg(long, default_value_t = 61)]
    n: usize,
    #[arg(long, default_value_t = 5)]
    k: usize,
    #[arg(long, default_value_t = 10)]
    s: usize,
    /// Minimum separation in units of 1/(n-1).
    #[arg(long, default_value_t = 2.52)]
    delta: f64,
    #[arg(long, value_enum, default_value_t = AmpArg::UnitPhase)]
    amplitudes: AmpArg,
    /// Draw each outlier location independently with probability s/n.
    #[arg(long)]
    bernoulli: bool,
    /// Euclidean norm of additive Gaussian noise.
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
}

impl InstanceArgs {
    fn params(&self, seed: u64) -> Result<InstanceParams, DemixError> {
        if self.n < 2 {
            return Err(DemixError::InvalidParameter("n must be at least 2".into()));
        }
        let mut p = InstanceParams::new(self.n, self.k, self.s, self.delta / (self.n - 1) as f64, seed);
        p.amp_law = match self.amplitudes {
            AmpArg::UnitPhase => AmplitudeLaw::UnitPhase,
            AmpArg::Gaussian => AmplitudeLaw::ComplexGaussian,
        };
        if self.bernoulli {
            p.spike_support = SpikeSupport::Bernoulli;
        }
        p.noise_level = self.noise;
        Ok(p)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Draw a random instance.
    Synth(InstanceArgs),
    /// Exact demixing by ADMM, support decoding and amplitude fitting.
    Demix {
        #[arg(long = "in")]
        input: PathBuf,
        /// Number or "auto" for 1/sqrt(n).
        #[arg(long, default_value = "auto")]
        lambda: String,
        #[arg(long)]
        rho: Option<f64>,
        #[arg(long)]
        max_iters: Option<usize>,
    },
    /// Atomic-norm denoising with outliers at a finite penalty gamma.
    Denoise {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value = "auto")]
        lambda: String,
        #[arg(long)]
        gamma: f64,
        #[arg(long)]
        rho: Option<f64>,
    },
    /// Greedy demixing with optional joint frequency refinement.
    Greedy {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        tau: Option<f64>,
        #[arg(long)]
        no_local_opt: bool,
    },
    /// Construct and verify the dual certificate of an instance.
    Certificate {
        /// Instance file; a random instance is drawn when absent.
        #[arg(long = "in")]
        input: Option<PathBuf>,
        #[command(flatten)]
        instance: InstanceArgs,
        #[arg(long, default_value = "auto")]
        lambda: String,
    },
    /// Periodogram or MUSIC estimate.
    Baseline {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = BaselineMethod::Periodogram)]
        method: BaselineMethod,
        #[arg(long, value_enum, default_value_t = WindowArg::None)]
        window: WindowArg,
        /// Model order for MUSIC; defaults to the number of true lines.
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        grid_size: Option<usize>,
    },
    /// Success-rate grid from a JSON configuration.
    Grid {
        #[arg(long)]
        config: PathBuf,
    },
    /// Picket-fence instance whose samples vanish identically.
    Picket {
        #[arg(long, default_value_t = 16)]
        n: usize,
    },
}

enum CliError {
    Config(String),
    Solver(String),
    Other(String),
}

impl From<DemixError> for CliError {
    fn from(e: DemixError) -> Self {
        match e {
            DemixError::InvalidParameter(_)
            | DemixError::DimensionMismatch { .. }
            | DemixError::InfeasibleSeparation { .. }
            | DemixError::SamplingFailed { .. }
            | DemixError::Json(_)
            | DemixError::Io(_) => CliError::Config(e.to_string()),
            DemixError::NotConverged { .. } => CliError::Solver(e.to_string()),
            _ => CliError::Other(e.to_string()),
        }
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Solver(_) => 3,
            CliError::Other(_) => 1,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Solver(m) | CliError::Other(m) => m,
        }
    }
}

type CliResult<T> = Result<T, CliError>;

fn read_instance(path: &Path) -> CliResult<Instance> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn parse_lambda(s: &str, n: usize) -> CliResult<f64> {
    let l = s.parse::<LambdaChoice>()?.resolve(n);
    if !(l > 0.0 && l.is_finite()) {
        return Err(CliError::Config("lambda must be positive".into()));
    }
    Ok(l)
}

fn has_truth(inst: &Instance) -> bool {
    !inst.spectrum.is_empty() || !inst.spikes.is_empty()
}

fn score(inst: &Instance, spectrum: &LineSpectrum, spikes: &SpikeVector) -> CliResult<Option<RecoveryScore>> {
    if !has_truth(inst) {
        return Ok(None);
    }
    Ok(Some(recovery_score(inst, spectrum, spikes)?))
}

struct Output {
    path: Option<PathBuf>,
    format: Format,
}

impl Output {
    fn write_text(&self, text: &str) -> CliResult<()> {
        match &self.path {
            Some(p) => fs::write(p, text).map_err(|e| CliError::Config(format!("{}: {e}", p.display()))),
            None => {
                let mut out = std::io::stdout().lock();
                out.write_all(text.as_bytes())
                    .and_then(|_| out.flush())
                    .map_err(|e| CliError::Other(e.to_string()))
            }
        }
    }

    fn json<T: Serialize>(&self, value: &T) -> CliResult<()> {
        let mut text = serde_json::to_string_pretty(value).map_err(DemixError::from)?;
        text.push('\n');
        self.write_text(&text)
    }

    /// Emit JSON or CSV depending on the selected format.
    fn emit<T: Serialize>(&self, value: &T, header: &[&str], rows: Vec<Vec<String>>) -> CliResult<()> {
        match self.format {
            Format::Json => self.json(value),
            Format::Csv => self.write_text(&csv_text(header, rows)?),
        }
    }
}

fn csv_text(header: &[&str], rows: Vec<Vec<String>>) -> CliResult<String> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    let to_err = |e: csv::Error| CliError::Other(e.to_string());
    w.write_record(header).map_err(to_err)?;
    for r in rows {
        w.write_record(&r).map_err(to_err)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Other(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| CliError::Other(e.to_string()))
}

fn complex_row(kind: &str, pos: String, v: Complex64) -> Vec<String> {
    vec![kind.to_string(), pos, v.re.to_string(), v.im.to_string()]
}

/// Rows `kind,position,re,im` for an estimate.
fn estimate_rows(spectrum: &LineSpectrum, spikes: &SpikeVector) -> Vec<Vec<String>> {
    spectrum
        .entries()
        .iter()
        .map(|e| complex_row("line", e.freq.to_string(), e.amp))
        .chain(spikes.iter().map(|(l, v)| complex_row("spike", l.to_string(), v)))
        .collect()
}

const ESTIMATE_HEADER: [&str; 4] = ["kind", "position", "re", "im"];

fn solver_summary(r: &SolveReport) -> serde_json::Value {
    json!({
        "converged": r.converged,
        "iterations": r.iterations,
        "gamma_final": r.gamma_final,
        "residual_norm": r.residual_norm,
        "objective": r.objective,
        "duality_gap": r.duality_gap,
        "dual_feasibility": r.dual_feasibility,
    })
}

fn run(cli: Cli) -> CliResult<()> {
    let out = Output {
        path: cli.out.clone(),
        format: cli.format,
    };
    match cli.command {
        Command::Synth(args) => {
            let inst = generate_instance(&args.params(cli.seed)?)?;
            let rows = inst
                .y
                .as_slice()
                .iter()
                .enumerate()
                .map(|(i, v)| vec![(i + 1).to_string(), v.re.to_string(), v.im.to_string()])
                .collect();
            out.emit(&inst, &["l", "re", "im"], rows)
        }
        Command::Demix {
            input,
            lambda,
            rho,
            max_iters,
        } => {
            let inst = read_instance(&input)?;
            let lambda = parse_lambda(&lambda, inst.n())?;
            let mut cfg = AdmmConfig::equality(lambda);
            if let Some(r) = rho {
                cfg.rho = r;
            }
            if let Some(m) = max_iters {
                cfg.max_iters = m;
            }
            let res = demix(&inst.y, &cfg, &DecodeConfig::default())?;
            let value = json!({
                "lambda": lambda,
                "spectrum": res.spectrum,
                "spikes": res.spikes,
                "t_hat": res.t_hat,
                "omega_hat": res.omega_hat,
                "eta": res.report.eta,
                "solver": solver_summary(&res.report),
                "score": score(&inst, &res.spectrum, &res.spikes)?,
            });
            out.emit(&value, &ESTIMATE_HEADER, estimate_rows(&res.spectrum, &res.spikes))?;
            res.report.ensure_converged()?;
            Ok(())
        }
        Command::Denoise {
            input,
            lambda,
            gamma,
            rho,
        } => {
            let inst = read_instance(&input)?;
            let lambda = parse_lambda(&lambda, inst.n())?;
            let mut cfg = AdmmConfig::denoise(lambda, gamma);
            if let Some(r) = rho {
                cfg.rho = r;
            }
            let report = admm_solve(&inst.y, &cfg)?;
            let value = json!({
                "lambda": lambda,
                "gamma": gamma,
                "g_hat": report.g_hat,
                "z_hat": report.z_hat,
                "solver": solver_summary(&report),
            });
            let rows = report
                .g_hat
                .iter()
                .zip(&report.z_hat)
                .enumerate()
                .map(|(i, (g, z))| {
                    vec![
                        (i + 1).to_string(),
                        g.re.to_string(),
                        g.im.to_string(),
                        z.re.to_string(),
                        z.im.to_string(),
                    ]
                })
                .collect();
            out.emit(&value, &["l", "g_re", "g_im", "z_re", "z_im"], rows)?;
            report.ensure_converged()?;
            Ok(())
        }
        Command::Greedy {
            input,
            tau,
            no_local_opt,
        } => {
            let inst = read_instance(&input)?;
            let cfg = GreedyConfig {
                tau,
                local_opt: !no_local_opt,
                ..GreedyConfig::default()
            };
            let res = greedy_demix(&inst.y, &cfg)?;
            match out.format {
                Format::Csv => out.write_text(&res.trace_csv()),
                Format::Json => out.json(&json!({
                    "spectrum": res.spectrum,
                    "spikes": res.spikes,
                    "converged": res.converged,
                    "residual_norm": res.residual_norm,
                    "trace": res.trace,
                    "score": score(&inst, &res.spectrum, &res.spikes)?,
                })),
            }
        }
        Command::Certificate {
            input,
            instance,
            lambda,
        } => {
            let inst = match input {
                Some(p) => read_instance(&p)?,
                None => generate_instance(&instance.params(cli.seed)?)?,
            };
            let n = inst.n();
            let lambda = parse_lambda(&lambda, n)?;
            let (_, report) = certify_instance(&inst, lambda, &VerifyConfig::for_n(n))?;
            let fields = serde_json::to_value(&report).map_err(DemixError::from)?;
            let rows = fields
                .as_object()
                .map(|m| m.iter().map(|(k, v)| vec![k.clone(), v.to_string()]).collect())
                .unwrap_or_default();
            out.emit(&report, &["field", "value"], rows)
        }
        Command::Baseline {
            input,
            method,
            window,
            k,
            grid_size,
        } => {
            let inst = read_instance(&input)?;
            let n = inst.n();
            match method {
                BaselineMethod::Periodogram => {
                    let mut cfg = PeriodogramConfig::for_n(n);
                    cfg.window = match window {
                        WindowArg::None => Window::None,
                        WindowArg::Hann => Window::Hann,
                        WindowArg::Hamming => Window::Hamming,
                    };
                    if let Some(g) = grid_size {
                        cfg.grid_size = g;
                    }
                    let p = periodogram(&inst.y, &cfg)?;
                    match out.format {
                        Format::Csv => out.write_text(&p.to_csv()),
                        Format::Json => out.json(&p),
                    }
                }
                BaselineMethod::Music => {
                    let k = k
                        .or_else(|| has_truth(&inst).then(|| inst.spectrum.len()))
                        .ok_or_else(|| CliError::Config("--k is required without ground truth".into()))?;
                    let freqs = music(&inst.y, k)?;
                    let rows = freqs.iter().map(|f| vec![f.to_string()]).collect();
                    out.emit(&json!({ "frequencies": freqs }), &["f"], rows)
                }
            }
        }
        Command::Grid { config } => {
            let text =
                fs::read_to_string(&config).map_err(|e| CliError::Config(format!("{}: {e}", config.display())))?;
            let grid: ExperimentGrid =
                serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", config.display())))?;
            let result = run_grid(&grid)?;
            match out.format {
                Format::Json => out.json(&result),
                Format::Csv => {
                    let slabs = result.slabs();
                    match (&out.path, slabs.len()) {
                        (Some(p), many) if many > 1 => {
                            let stem = p.file_stem().and_then(|s| s.to_str()).unwrap_or("grid");
                            for slab in &slabs {
                                let [ni, si, li] = slab.index;
                                let file = p.with_file_name(format!("{stem}_n{ni}_s{si}_l{li}.csv"));
                                fs::write(&file, &slab.csv)
                                    .map_err(|e| CliError::Config(format!("{}: {e}", file.display())))?;
                            }
                            Ok(())
                        }
                        _ => {
                            let joined = slabs.iter().map(|s| s.csv.as_str()).collect::<Vec<_>>().join("\n");
                            out.write_text(&joined)
                        }
                    }
                }
            }
        }
        Command::Picket { n } => {
            let inst = picket_fence(n)?;
            let lambda = AdmmConfig::default_lambda(n);
            let res = demix(&inst.y, &AdmmConfig::equality(lambda), &DecodeConfig::default())?;
            let sc = recovery_score(&inst, &res.spectrum, &res.spikes)?;
            let value = json!({
                "n": n,
                "y": inst.y.as_slice(),
                "spectrum": res.spectrum,
                "spikes": res.spikes,
                "exact_demix": sc.exact_demix,
                "truth": {"spectrum": inst.spectrum, "spikes": inst.spikes},
            });
            let rows = inst
                .y
                .as_slice()
                .iter()
                .enumerate()
                .map(|(i, v)| vec![(i + 1).to_string(), v.re.to_string(), v.im.to_string()])
                .collect();
            out.emit(&value, &["l", "re", "im"], rows)
        }
    }
}

fn configure_threads() -> CliResult<()> {
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let threads: usize = v
            .parse()
            .map_err(|_| CliError::Config(format!("{THREADS_ENV} must be a positive integer")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| CliError::Other(e.to_string()))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match configure_threads().and_then(|_| run(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.exit_code())
        }
    }
}
