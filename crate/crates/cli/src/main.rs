//! Multi-command front-end for the toolchain: waveform generation, reference
//! PA simulation, identification, evaluation, two-tone initialization, and
//! closed-loop DPD. Every command is deterministic for fixed flags and seeds.
//!
//! Exit codes: 2 usage error, 3 data/format error, 4 numerical error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use ltpa_core::basis::BasisSpec;
use ltpa_core::ident::FitReport;
use ltpa_core::metrics::{block_nmse, error_spectrum, BlockNmseProfile, Psd, DEFAULT_BLOCK_SIZE, DEFAULT_SKIP_BLOCKS};
use ltpa_core::signal::BurstProfile;
use ltpa_core::state::StateFilter;
use ltpa_core::twotone::{read_measurements, InitialFilterKind};
use ltpa_core::{
    acepr_db, acpr_db, default_doherty_like, fit, generate_bursty, generate_two_tone, load_model,
    mismatched_doherty_like, nmse_db, read_iq, run_dpd_loop, save_model, write_iq,
    DpdConfig, Error, FitConfig, IqSignal, LtModel,
};

mod filterio;

#[derive(Parser)]
#[command(name = "ltpa", version, about = "PA behavioral modeling with long-term memory states")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a test waveform (bursty noise or two-tone).
    Gen(GenArgs),
    /// Run a waveform through the synthetic reference PA.
    Sim(SimArgs),
    /// Identify a model from input/output waveforms.
    Fit(FitArgs),
    /// Evaluate a model against a measured waveform.
    Eval(EvalArgs),
    /// Estimate an initial state filter from two-tone measurements.
    TwotoneInit(TwotoneInitArgs),
    /// Closed-loop digital predistortion against the synthetic PA.
    Dpd(DpdArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum GenKind {
    Bursty,
    Twotone,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, value_enum)]
    kind: GenKind,
    /// Per-segment power steps in dB, comma separated (bursty).
    #[arg(long, default_value = "0,-10,0,-10", allow_hyphen_values = true)]
    steps: String,
    /// Samples per power segment (bursty).
    #[arg(long, default_value_t = 61_440)]
    seglen: usize,
    /// RMS amplitude of the 0 dB segments (bursty).
    #[arg(long, default_value_t = 0.025)]
    rms: f64,
    /// Occupied bandwidth as a fraction of the sample rate (bursty).
    #[arg(long, default_value_t = 0.2)]
    bw: f64,
    /// Tone amplitudes (twotone).
    #[arg(long, default_value_t = 0.5)]
    a: f64,
    #[arg(long, default_value_t = 0.5)]
    b: f64,
    /// Tone spacing in Hz (twotone).
    #[arg(long, default_value_t = 1e3)]
    offset: f64,
    /// Record length in samples (twotone).
    #[arg(long, default_value_t = 61_440)]
    len: usize,
    #[arg(long, default_value_t = 30.72e6)]
    rate: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PaKind {
    Default,
    Mismatched,
}

#[derive(Args)]
struct SimArgs {
    #[arg(long)]
    input: PathBuf,
    /// Which built-in reference PA to use. Ignored when --model is given.
    #[arg(long, value_enum, default_value_t = PaKind::Default)]
    pa: PaKind,
    /// Simulate this model file instead of the built-in fixture.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Disable the additive noise generator.
    #[arg(long)]
    noiseless: bool,
    /// Override the fixture noise seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BasisArg {
    Mp,
    Gmp,
    Volterra,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum StateArg {
    None,
    Ar1,
    Arma11,
    Fir,
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    meas: PathBuf,
    #[arg(long, value_enum, default_value_t = BasisArg::Mp)]
    basis: BasisArg,
    /// Basis orders P,M (and G for gmp), comma separated.
    #[arg(long, default_value = "5,2")]
    orders: String,
    #[arg(long, value_enum, default_value_t = StateArg::Ar1)]
    state: StateArg,
    /// Initial filter file written by twotone-init; overrides --state.
    #[arg(long)]
    state_file: Option<PathBuf>,
    #[arg(long, default_value_t = 0.99)]
    init_alpha: f64,
    #[arg(long, default_value_t = 0.0)]
    init_beta: f64,
    /// FIR averaging window (--state fir).
    #[arg(long, default_value_t = 100)]
    window: usize,
    /// Gauss-Newton dampening.
    #[arg(long, default_value_t = 0.4)]
    lambda: f64,
    #[arg(long, default_value_t = 30)]
    max_outer: usize,
    #[arg(long, default_value_t = 50)]
    max_gn: usize,
    /// Outer convergence tolerance on NMSE change, dB.
    #[arg(long, default_value_t = 0.01)]
    outer_tol: f64,
    #[arg(long, default_value_t = 1e-6)]
    gn_tol: f64,
    #[arg(long, default_value_t = 0.0)]
    ridge: f64,
    #[arg(long)]
    allow_complex_poles: bool,
    /// Output model file.
    #[arg(long)]
    out: PathBuf,
    /// Fit report (text).
    #[arg(long)]
    report: Option<PathBuf>,
    /// Per-block NMSE profile (CSV).
    #[arg(long)]
    blocks_csv: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ReportFormat {
    Text,
    Csv,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    meas: PathBuf,
    /// Block size for the per-block NMSE profile.
    #[arg(long, default_value_t = DEFAULT_BLOCK_SIZE)]
    block: usize,
    /// Initial blocks excluded from the worst-case figure (state settling).
    #[arg(long, default_value_t = DEFAULT_SKIP_BLOCKS)]
    skip: usize,
    /// Channel bandwidth as a fraction of the sample rate (ACPR/ACEPR).
    #[arg(long, default_value_t = 0.25)]
    channel_bw: f64,
    /// Adjacent-channel offset as a fraction of the sample rate.
    #[arg(long, default_value_t = 0.25)]
    adjacent_offset: f64,
    #[arg(long, value_enum, default_value_t = ReportFormat::Text)]
    format: ReportFormat,
    #[arg(long)]
    out: PathBuf,
    /// Per-block NMSE profile (CSV).
    #[arg(long)]
    blocks_csv: Option<PathBuf>,
    /// Error spectrum of the full record (CSV).
    #[arg(long)]
    psd_csv: Option<PathBuf>,
}

#[derive(Args)]
struct TwotoneInitArgs {
    /// CSV of two-tone measurements (offset_hz,a,b,mag_dc,mag_offset).
    #[arg(long)]
    measurements: PathBuf,
    #[arg(long, default_value_t = 30.72e6)]
    rate: f64,
    #[arg(long = "fit", value_enum, default_value_t = FilterKindArg::Ar1)]
    fit_kind: FilterKindArg,
    #[arg(long)]
    allow_complex_poles: bool,
    /// Output filter file, consumable by `fit --state-file`.
    #[arg(long)]
    out: PathBuf,
    /// Estimated static parameters and |G| response (CSV).
    #[arg(long)]
    response_csv: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FilterKindArg {
    Ar1,
    Arma11,
}

#[derive(Args)]
struct DpdArgs {
    #[arg(long)]
    input: PathBuf,
    /// Which built-in reference PA to linearize.
    #[arg(long, value_enum, default_value_t = PaKind::Default)]
    pa: PaKind,
    /// Model file whose state filters are frozen into the predistorter.
    #[arg(long)]
    freeze_filters: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = BasisArg::Mp)]
    basis: BasisArg,
    #[arg(long, default_value = "5,2")]
    orders: String,
    #[arg(long, default_value_t = 5)]
    iterations: usize,
    #[arg(long, default_value_t = 0.0)]
    ridge: f64,
    /// Output-power matching tolerance, dB.
    #[arg(long, default_value_t = 0.1)]
    power_tol: f64,
    /// Predistorted drive waveform.
    #[arg(long)]
    out_drive: Option<PathBuf>,
    /// Linearized PA output waveform.
    #[arg(long)]
    out_signal: Option<PathBuf>,
    /// Per-iteration metrics report (text).
    #[arg(long)]
    report: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Gen(a) => cmd_gen(a),
        Command::Sim(a) => cmd_sim(a),
        Command::Fit(a) => cmd_fit(a),
        Command::Eval(a) => cmd_eval(a),
        Command::TwotoneInit(a) => cmd_twotone_init(a),
        Command::Dpd(a) => cmd_dpd(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("ltpa: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidArgument(_) | Error::Unsupported(_) => 2,
        Error::Format { .. } | Error::Io(_) => 3,
        Error::Numerical(_) | Error::Diverged(_) => 4,
    }
}

fn parse_f64_list(s: &str, what: &str) -> Result<Vec<f64>, Error> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| Error::invalid(format!("bad {what} entry {t:?}")))
        })
        .collect()
}

fn parse_orders(s: &str, kind: BasisArg) -> Result<BasisSpec, Error> {
    let parts: Vec<usize> = s
        .split(',')
        .map(|t| {
            t.trim()
                .parse::<usize>()
                .map_err(|_| Error::invalid(format!("bad order entry {t:?}")))
        })
        .collect::<Result<_, _>>()?;
    let spec = match (kind, parts.as_slice()) {
        (BasisArg::Mp, [p, m]) => BasisSpec::mp(*p, *m),
        (BasisArg::Gmp, [p, m, g]) => BasisSpec::gmp(*p, *m, *g),
        (BasisArg::Volterra, [p, m]) => BasisSpec::volterra(*p, *m),
        (BasisArg::Gmp, _) => return Err(Error::invalid("gmp needs --orders P,M,G")),
        _ => return Err(Error::invalid("expected --orders P,M")),
    };
    spec.validate()?;
    Ok(spec)
}

fn cmd_gen(a: GenArgs) -> Result<(), Error> {
    let signal = match a.kind {
        GenKind::Bursty => {
            let profile = BurstProfile {
                segment_length: a.seglen,
                power_steps_db: parse_f64_list(&a.steps, "power step")?,
                rms_level: a.rms,
            };
            generate_bursty(&profile, a.bw, a.rate, a.seed)?
        }
        GenKind::Twotone => generate_two_tone(a.a, a.b, a.offset, a.len, a.rate)?,
    };
    write_iq(&signal, &a.out)
}

fn cmd_sim(a: SimArgs) -> Result<(), Error> {
    let x = read_iq(&a.input)?;
    let mut pa = match a.pa {
        PaKind::Default => default_doherty_like(),
        PaKind::Mismatched => mismatched_doherty_like(),
    };
    if let Some(path) = &a.model {
        pa.true_model = load_model(path)?;
    }
    if let Some(seed) = a.seed {
        pa.seed = seed;
    }
    if a.noiseless {
        pa = pa.noiseless();
    }
    let y = pa.evaluate(&x)?;
    write_iq(&y, &a.out)
}

fn initial_filters(a: &FitArgs) -> Result<Vec<StateFilter>, Error> {
    if let Some(path) = &a.state_file {
        return Ok(vec![filterio::read_filter(path)?]);
    }
    Ok(match a.state {
        StateArg::None => vec![],
        StateArg::Ar1 => vec![StateFilter::ar1(a.init_alpha)?],
        StateArg::Arma11 => vec![StateFilter::arma11(a.init_alpha, a.init_beta)?],
        StateArg::Fir => vec![StateFilter::fir(a.window)?],
    })
}

fn cmd_fit(a: FitArgs) -> Result<(), Error> {
    let x = read_iq(&a.input)?;
    let y = read_iq(&a.meas)?;
    let basis = parse_orders(&a.orders, a.basis)?;
    let filters = initial_filters(&a)?;
    let config = FitConfig {
        dampening: a.lambda,
        max_outer_iters: a.max_outer,
        max_gn_iters: a.max_gn,
        outer_tol_db: a.outer_tol,
        gn_tol: a.gn_tol,
        ridge: a.ridge,
        allow_complex_poles: a.allow_complex_poles,
    };
    let (report, diverged) = match fit(&basis, &filters, &x, &y, &config) {
        Ok(r) => (r, false),
        // Divergence still writes the best model found, flagged in the
        // report, and exits nonzero.
        Err(Error::Diverged(r)) => (*r, true),
        Err(e) => return Err(e),
    };
    save_model(&report.final_model, &a.out)?;
    if let Some(path) = &a.report {
        let mut text = report.to_text();
        if diverged {
            text.push_str("diverged = true\n");
        }
        std::fs::write(path, text)?;
    }
    if let Some(path) = &a.blocks_csv {
        let pred = report.final_model.predict(&x)?;
        let profile = block_nmse(&pred, &y, DEFAULT_BLOCK_SIZE, DEFAULT_SKIP_BLOCKS)?;
        write_blocks_csv(path, &profile)?;
    }
    print_fit_summary(&report);
    if diverged {
        return Err(Error::Diverged(Box::new(report)));
    }
    Ok(())
}

fn print_fit_summary(report: &FitReport) {
    println!(
        "fit: {} outer iterations, NMSE {:.2} dB, converged {}",
        report.outer_trace.len(),
        report.final_nmse_db(),
        report.converged
    );
}

fn write_blocks_csv(path: &Path, profile: &BlockNmseProfile) -> Result<(), Error> {
    let mut out = String::from("block,start_sample,nmse_db,skipped\n");
    for (i, nmse) in profile.per_block_nmse_db.iter().enumerate() {
        out.push_str(&format!(
            "{},{},{:.6},{}\n",
            i,
            i * profile.block_size,
            nmse,
            i < profile.skip_initial_blocks
        ));
    }
    std::fs::write(path, out)?;
    Ok(())
}

fn write_psd_csv(path: &Path, psd: &Psd) -> Result<(), Error> {
    let mut out = String::from("freq_hz,psd\n");
    for (f, p) in psd.freq_hz.iter().zip(&psd.psd) {
        out.push_str(&format!("{f:.6},{p:.9e}\n"));
    }
    std::fs::write(path, out)?;
    Ok(())
}

fn cmd_eval(a: EvalArgs) -> Result<(), Error> {
    let model: LtModel = load_model(&a.model)?;
    let x = read_iq(&a.input)?;
    let y = read_iq(&a.meas)?;
    let pred = model.predict(&x)?;
    let nmse = nmse_db(&pred, &y)?;
    let profile = block_nmse(&pred, &y, a.block, a.skip)?;
    let acepr = acepr_db(&pred, &y, a.channel_bw, a.adjacent_offset)?;
    let acpr = acpr_db(&y, a.channel_bw, a.adjacent_offset)?;
    let report = match a.format {
        ReportFormat::Text => format!(
            "ltpa-eval-report-version = 1\n\
             nmse_db = {nmse:.6}\n\
             worst_block_nmse_db = {:.6}\n\
             acepr_db = {acepr:.6}\n\
             acpr_db = {acpr:.6}\n\
             block_size = {}\n\
             skip_initial_blocks = {}\n",
            profile.max_nmse_db, profile.block_size, profile.skip_initial_blocks
        ),
        ReportFormat::Csv => format!(
            "metric,value\nnmse_db,{nmse:.6}\nworst_block_nmse_db,{:.6}\nacepr_db,{acepr:.6}\nacpr_db,{acpr:.6}\n",
            profile.max_nmse_db
        ),
    };
    std::fs::write(&a.out, report)?;
    if let Some(path) = &a.blocks_csv {
        write_blocks_csv(path, &profile)?;
    }
    if let Some(path) = &a.psd_csv {
        let psd = error_spectrum(&pred, &y, 0..y.len())?;
        write_psd_csv(path, &psd)?;
    }
    println!("eval: NMSE {nmse:.2} dB, worst block {:.2} dB", profile.max_nmse_db);
    Ok(())
}

fn cmd_twotone_init(a: TwotoneInitArgs) -> Result<(), Error> {
    let measurements = read_measurements(&a.measurements, a.rate)?;
    let (theta0, theta1) = ltpa_core::solve_static_params(&measurements)?;
    let with_offset: Vec<_> = measurements
        .iter()
        .filter(|m| m.offset != 0.0)
        .cloned()
        .collect();
    let response = ltpa_core::response_from_measurements(&with_offset, theta0, theta1)?;
    let kind = match a.fit_kind {
        FilterKindArg::Ar1 => InitialFilterKind::Ar1,
        FilterKindArg::Arma11 => InitialFilterKind::Arma11,
    };
    let filter = ltpa_core::fit_initial_filter(&response, kind, a.allow_complex_poles)?;
    filterio::write_filter(&a.out, &filter)?;
    if let Some(path) = &a.response_csv {
        let mut out = format!("# theta0 = {theta0:.9e}, theta1 = {theta1:.9e}\nomega,gain\n");
        for (w, g) in response.omegas.iter().zip(&response.magnitudes) {
            out.push_str(&format!("{w:.9e},{g:.9e}\n"));
        }
        std::fs::write(path, out)?;
    }
    println!(
        "twotone-init: theta0 {theta0:.4e}, theta1 {theta1:.4e}, filter {}",
        filterio::describe(&filter)
    );
    Ok(())
}

fn cmd_dpd(a: DpdArgs) -> Result<(), Error> {
    let x = read_iq(&a.input)?;
    let pa = match a.pa {
        PaKind::Default => default_doherty_like(),
        PaKind::Mismatched => mismatched_doherty_like(),
    };
    let frozen = match &a.freeze_filters {
        Some(path) => load_model(path)?.state_filters,
        None => vec![],
    };
    let basis = parse_orders(&a.orders, a.basis)?;
    let mut config = DpdConfig::new(basis, frozen);
    config.iterations = a.iterations;
    config.ridge = a.ridge;
    config.power_tol_db = a.power_tol;
    config.validate()?;
    let outcome = run_dpd_loop(&|sig: &IqSignal| pa.evaluate(sig), &x, &config)?;
    std::fs::write(&a.report, outcome.to_text())?;
    if let Some(path) = &a.out_drive {
        write_iq(&outcome.predistorted, path)?;
    }
    if let Some(path) = &a.out_signal {
        write_iq(&outcome.output, path)?;
    }
    let best = outcome
        .metrics
        .iter()
        .map(|m| m.nmse_to_linear_db)
        .fold(f64::INFINITY, f64::min);
    println!(
        "dpd: {} iterations, best NMSE-to-linear {best:.2} dB, converged {}",
        outcome.metrics.len().saturating_sub(1),
        outcome.converged
    );
    Ok(())
}
