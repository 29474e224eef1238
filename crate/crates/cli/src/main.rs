mod config;

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use evup::eval::{metrics_of_image, synth_scene, MetricReport, Pattern, SceneSpec};
use evup::io::{read_events, write_event_slice, StreamFormat, WriteOptions};
use evup::optimizer::estimate_trajectory;
use evup::point_process::write_intensity_csv;
use evup::upsampler::{upsample, UpsampleReport};
use evup::warp::{accumulate, reference_time, Accumulation};
use evup::{EventWindow, Velocity};

use config::{PatternArg, Settings};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
}

impl From<evup::Error> for CliError {
    fn from(e: evup::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

#[derive(Parser)]
#[command(name = "evup", version, about = "Temporal up-sampling of event-camera streams")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Input event file; `-` or absent reads stdin.
    #[arg(long, short)]
    input: Option<PathBuf>,
    /// Output file; `-` or absent writes stdout.
    #[arg(long, short)]
    output: Option<PathBuf>,
    /// TOML file of `key = value` settings; flags win over it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    settings: Settings,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate the dominant velocity of each window (one JSON line each).
    Estimate {
        #[command(flatten)]
        common: Common,
    },
    /// Write the up-sampled event stream.
    Upsample {
        #[command(flatten)]
        common: Common,
        /// Write one JSON summary line per window here.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Write per-trajectory intensity derivations as CSV here.
        #[arg(long)]
        dump_trajectories: Option<PathBuf>,
    },
    /// Variance and gradient of the projected count image per window.
    Metrics {
        #[command(flatten)]
        common: Common,
        /// Write the projected image as PGM; batch windows get `-<index>`.
        #[arg(long)]
        dump_pgm: Option<PathBuf>,
    },
    /// Generate a synthetic moving-pattern scene.
    Synth {
        #[command(flatten)]
        common: Common,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Data(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn settings(common: &Common) -> Result<Settings, CliError> {
    let base = match &common.config {
        Some(path) => Settings::load(path)?,
        None => Settings::default(),
    };
    Ok(base.overridden_by(&common.settings))
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Estimate { common } => estimate_cmd(&common),
        Command::Upsample {
            common,
            report,
            dump_trajectories,
        } => upsample_cmd(&common, report.as_deref(), dump_trajectories.as_deref()),
        Command::Metrics { common, dump_pgm } => metrics_cmd(&common, dump_pgm.as_deref()),
        Command::Synth { common } => synth_cmd(&common),
    }
}

fn is_stdio(path: Option<&Path>) -> bool {
    path.is_none_or(|p| p == Path::new("-"))
}

fn open_output(path: Option<&Path>) -> Result<Box<dyn Write>, CliError> {
    if is_stdio(path) {
        Ok(Box::new(BufWriter::new(io::stdout().lock())))
    } else {
        let path = path.expect("checked above");
        let file = File::create(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        Ok(Box::new(BufWriter::new(file)))
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

/// Reads the input and cuts it into the windows to process.
fn load_windows(common: &Common, s: &Settings) -> Result<Vec<EventWindow>, CliError> {
    let geometry = s.geometry()?;
    let (t0, t1) = s.range()?;
    let batch = s.window_seconds()?;
    let source: Box<dyn BufRead> = if is_stdio(common.input.as_deref()) {
        Box::new(BufReader::new(io::stdin().lock()))
    } else {
        let path = common.input.as_deref().expect("checked above");
        let file = File::open(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        Box::new(BufReader::new(file))
    };
    let mut window = read_events(source, StreamFormat::TextV1, geometry)?;
    if s.t0.is_some() || s.t1.is_some() {
        window = window.slice(t0, t1)?;
    }
    match batch {
        Some(step) => Ok(window.batches(step)?),
        None => Ok(vec![window]),
    }
}

fn usable(window: &EventWindow) -> bool {
    window.len() >= 2 && window.duration() > 0.0
}

/// In batch mode degenerate windows are skipped; a lone window must work.
fn check_window(window: &EventWindow, batch: bool, index: usize) -> Result<bool, CliError> {
    if usable(window) {
        return Ok(true);
    }
    if batch {
        eprintln!(
            "warning: window {index} [{}, {}] has {} events, skipped",
            window.t_start(),
            window.t_end(),
            window.len()
        );
        return Ok(false);
    }
    if window.len() < 2 {
        Err(evup::Error::TooFewEvents(window.len()).into())
    } else {
        Err(evup::Error::ZeroTimeSpan.into())
    }
}

fn json_line<T: Serialize, W: Write>(out: &mut W, value: &T) -> Result<(), CliError> {
    serde_json::to_writer(&mut *out, value).map_err(|e| CliError::Data(e.to_string()))?;
    out.write_all(b"\n")?;
    Ok(())
}

#[derive(Serialize)]
struct EstimateLine {
    vx: f64,
    vy: f64,
    f: f64,
    converged: bool,
}

fn estimate_cmd(common: &Common) -> Result<(), CliError> {
    let s = settings(common)?;
    let cfg = s.optimizer()?;
    let batch = s.window_seconds()?.is_some();
    let windows = load_windows(common, &s)?;
    let mut out = open_output(common.output.as_deref())?;
    for (i, w) in windows.iter().enumerate() {
        if !check_window(w, batch, i)? {
            continue;
        }
        let est = estimate_trajectory(w, &cfg)?;
        json_line(
            &mut out,
            &EstimateLine {
                vx: est.theta_star.vx,
                vy: est.theta_star.vy,
                f: est.f_star,
                converged: est.converged,
            },
        )?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct ReportLine {
    t_start: f64,
    t_end: f64,
    vx: f64,
    vy: f64,
    f: f64,
    k: usize,
    main_trajectories: usize,
    noise_trajectories: usize,
    original: usize,
    generated_main: usize,
    generated_noise: usize,
    dropped_out_of_bounds: usize,
    output: usize,
}

fn upsample_cmd(common: &Common, report: Option<&Path>, dump: Option<&Path>) -> Result<(), CliError> {
    let s = settings(common)?;
    let cfg = s.upsample()?;
    let options = WriteOptions {
        origin_column: s.emit_origin_column.unwrap_or(false),
    };
    let batch = s.window_seconds()?.is_some();
    let windows = load_windows(common, &s)?;
    let mut out = open_output(common.output.as_deref())?;
    let mut report_out = report.map(create).transpose()?;
    let mut dump_out = dump.map(create).transpose()?;
    let mut dump_rows = Vec::new();
    for (i, w) in windows.iter().enumerate() {
        if !check_window(w, batch, i)? {
            // nothing to up-sample; keep the stream intact
            if cfg.include_originals {
                write_event_slice(&mut out, w.events(), StreamFormat::TextV1, options)?;
            }
            continue;
        }
        let (result, rep) = upsample(w, &cfg)?;
        write_event_slice(&mut out, result.events(), StreamFormat::TextV1, options)?;
        if let Some(sink) = report_out.as_mut() {
            json_line(sink, &report_line(w, &rep, result.len()))?;
        }
        if dump_out.is_some() {
            dump_rows.extend(rep.trajectories.iter().map(|t| (t.anchor, t.intensity)));
        }
    }
    out.flush()?;
    if let Some(sink) = report_out.as_mut() {
        sink.flush()?;
    }
    if let Some(sink) = dump_out.as_mut() {
        write_intensity_csv(sink, &dump_rows)?;
    }
    Ok(())
}

fn report_line(w: &EventWindow, rep: &UpsampleReport, output: usize) -> ReportLine {
    ReportLine {
        t_start: w.t_start(),
        t_end: w.t_end(),
        vx: rep.theta_star.vx,
        vy: rep.theta_star.vy,
        f: rep.f_star,
        k: rep.k,
        main_trajectories: rep.main_trajectories,
        noise_trajectories: rep.noise_trajectories,
        original: rep.original,
        generated_main: rep.generated_main,
        generated_noise: rep.generated_noise,
        dropped_out_of_bounds: rep.dropped_out_of_bounds,
        output,
    }
}

#[derive(Serialize)]
struct MetricsLine {
    variance: f64,
    gradient: f64,
    variance_per_event: f64,
    gradient_per_event: f64,
    events: usize,
    vx: f64,
    vy: f64,
}

impl From<&MetricReport> for MetricsLine {
    fn from(m: &MetricReport) -> Self {
        MetricsLine {
            variance: m.variance,
            gradient: m.gradient,
            variance_per_event: m.variance_per_event,
            gradient_per_event: m.gradient_per_event,
            events: m.events,
            vx: m.theta.vx,
            vy: m.theta.vy,
        }
    }
}

#[derive(Serialize)]
struct MetricsSummary {
    windows: usize,
    mean: Option<MetricsLine>,
}

fn pgm_path(base: &Path, index: usize, batch: bool) -> PathBuf {
    if !batch {
        return base.to_path_buf();
    }
    let stem = base.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let name = match base.extension() {
        Some(ext) => format!("{stem}-{index}.{}", ext.to_string_lossy()),
        None => format!("{stem}-{index}"),
    };
    base.with_file_name(name)
}

fn metrics_cmd(common: &Common, dump_pgm: Option<&Path>) -> Result<(), CliError> {
    let s = settings(common)?;
    let fixed = s.fixed_velocity()?;
    let cfg = s.optimizer()?;
    let op = s.gradient_operator();
    let batch = s.window_seconds()?.is_some();
    let windows = load_windows(common, &s)?;
    let mut out = open_output(common.output.as_deref())?;
    let mut reports = Vec::new();
    for (i, w) in windows.iter().enumerate() {
        if !check_window(w, batch, i)? {
            continue;
        }
        let theta = match fixed {
            Some(v) => v,
            None => estimate_trajectory(w, &cfg)?.theta_star,
        };
        let img = accumulate(w, theta, reference_time(w)?, Accumulation::Signed);
        let report = metrics_of_image(&img, w.len(), theta, op);
        if let Some(base) = dump_pgm {
            let mut sink = create(&pgm_path(base, i, batch))?;
            img.write_pgm(&mut sink)?;
        }
        json_line(&mut out, &MetricsLine::from(&report))?;
        reports.push(report);
    }
    let summary = MetricsSummary {
        windows: reports.len(),
        mean: MetricReport::mean(&reports).as_ref().map(MetricsLine::from),
    };
    json_line(&mut out, &summary)?;
    out.flush()?;
    Ok(())
}

fn synth_cmd(common: &Common) -> Result<(), CliError> {
    let s = settings(common)?;
    let geometry = s.geometry()?;
    let length = s.length.unwrap_or(geometry.height / 2);
    let width = s.pattern_width.unwrap_or(4);
    let pattern = match s.pattern.unwrap_or(PatternArg::Edge) {
        PatternArg::Edge => Pattern::Edge { length },
        PatternArg::Bar => Pattern::Bar { length, width },
        PatternArg::Strip => Pattern::TexturedStrip { length, width },
    };
    let spec = SceneSpec {
        geometry,
        duration: s.duration.unwrap_or(1.0),
        pattern,
        true_velocity: Velocity::new(s.vx.unwrap_or(0.0), s.vy.unwrap_or(0.0)),
        edge_rate: s.edge_rate.unwrap_or(60.0),
        noise_rate: s.noise_rate.unwrap_or(0.0),
        polarity: s.polarity_scheme(),
        seed: s.seed.unwrap_or(0),
    };
    let window = synth_scene(&spec).map_err(|e| CliError::Usage(e.to_string()))?;
    let mut out = open_output(common.output.as_deref())?;
    let options = WriteOptions {
        origin_column: s.emit_origin_column.unwrap_or(false),
    };
    write_event_slice(&mut out, window.events(), StreamFormat::TextV1, options)?;
    out.flush()?;
    Ok(())
}
