//! Command-line front end: simulate playback sessions, compute offline
//! optimal bounds, sweep parameters, compare policies against the bound and
//! generate traces/manifests.
//!
//! Exit codes: 0 success, 1 usage error, 2 bad input, 3 simulation or
//! oracle failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};

use bola_core::metrics::{self, Metrics};
use bola_core::model::{PlayerConfig, Variant, VideoManifest};
use bola_core::oracle::{offline_optimal, OracleConfig};
use bola_core::simulator::{simulate, NetworkTrace, SessionLog};
use bola_core::traces::{gen_profile, gen_vbr_manifest, parse_trace, trace_to_csv, trace_warnings};
use bola_core::Error;

/// Environment variable naming the default output directory.
const OUT_DIR_ENV: &str = "BOLA_OUT_DIR";

#[derive(Parser)]
#[command(name = "bola", version, about = "Buffer-based adaptive bitrate simulation toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one playback session and report its metrics.
    Simulate(SimulateArgs),
    /// Compute the offline optimal bound for a trace.
    Oracle(OracleArgs),
    /// Run a grid of sessions and emit one report row per point.
    Sweep(SweepArgs),
    /// Ratio of achieved utility to the offline bound, per profile.
    Compare(CompareArgs),
    /// Write one of the canned bandwidth profiles as a trace file.
    GenProfile(GenProfileArgs),
    /// Generate a seeded variable-bitrate manifest.
    GenManifest(GenManifestArgs),
}

/// Inputs shared by every session-running subcommand.
#[derive(Args, Clone)]
struct SessionInputs {
    /// Manifest JSON; omitted means a seeded generated manifest.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Trace CSV file.
    #[arg(long, conflicts_with = "profile")]
    trace: Option<PathBuf>,
    /// Canned profile id, 1..=12.
    #[arg(long)]
    profile: Option<usize>,
    /// Treat a file trace as ending instead of repeating.
    #[arg(long)]
    no_loop: bool,
    /// Rebuffer penalty times chunk duration.
    #[arg(long, default_value_t = 5.0)]
    gamma_p: f64,
    /// Video length; the manifest repeats to cover it.
    #[arg(long, default_value_t = 10.0)]
    minutes: f64,
    /// Seed for generated manifests.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Chunk duration for generated manifests, seconds.
    #[arg(long, default_value_t = 3.0)]
    chunk_duration: f64,
    /// Output directory; defaults to $BOLA_OUT_DIR, then the working dir.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    inputs: SessionInputs,
    /// Decision rule: basic, finite, o or u.
    #[arg(long, default_value = "finite")]
    variant: String,
    /// Maximum buffer in seconds.
    #[arg(long, default_value_t = 25.0)]
    buffer_s: f64,
    /// Explicit control parameter; overrides the buffer-derived value.
    #[arg(long)]
    v: Option<f64>,
    /// Disable download abandonment.
    #[arg(long)]
    no_abandonment: bool,
}

#[derive(Args)]
struct OracleArgs {
    #[command(flatten)]
    inputs: SessionInputs,
    /// Time quantization, seconds.
    #[arg(long, default_value_t = 0.25)]
    delta: f64,
    /// Buffer cap in seconds.
    #[arg(long, default_value_t = 25.0)]
    b_max: f64,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    inputs: SessionInputs,
    /// Comma-separated variant list.
    #[arg(long, default_value = "basic,finite,o,u")]
    variants: String,
    /// Comma-separated buffer sizes in seconds.
    #[arg(long, default_value = "10,25,60,120")]
    buffers_s: String,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    inputs: SessionInputs,
    /// Profiles to cover: comma list and/or ranges, e.g. 1-6,9.
    #[arg(long, default_value = "1-12")]
    profiles: String,
    /// Comma-separated variant list.
    #[arg(long, default_value = "finite,u")]
    variants: String,
    /// Maximum buffer in seconds.
    #[arg(long, default_value_t = 25.0)]
    buffer_s: f64,
    /// Oracle time quantization, seconds.
    #[arg(long, default_value_t = 0.25)]
    delta: f64,
}

#[derive(Args)]
struct GenProfileArgs {
    /// Profile id, 1..=12.
    #[arg(long)]
    id: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GenManifestArgs {
    #[arg(long, default_value_t = 200)]
    chunks: usize,
    #[arg(long, default_value_t = 3.0)]
    chunk_duration: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Simulate(args) => cmd_simulate(args),
        Command::Oracle(args) => cmd_oracle(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Compare(args) => cmd_compare(args),
        Command::GenProfile(args) => cmd_gen_profile(args),
        Command::GenManifest(args) => cmd_gen_manifest(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let code = match e {
                Error::Simulation(_) | Error::Resource(_) => 3,
                _ => 2,
            };
            ExitCode::from(code)
        }
    }
}

fn out_dir(explicit: &Option<PathBuf>) -> PathBuf {
    explicit
        .clone()
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."))
}

fn write_out(dir: &Path, name: &str, contents: &str) -> Result<PathBuf, Error> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(name);
    std::fs::write(&path, contents)?;
    Ok(path)
}

struct Session {
    manifest: VideoManifest,
    trace: NetworkTrace,
    /// "profile-N" or the trace file name, for report headers.
    trace_label: String,
}

impl SessionInputs {
    fn chunk_count(&self, p: f64) -> Result<usize, Error> {
        if self.minutes <= 0.0 {
            return Err(Error::InvalidParameter("minutes must be positive".into()));
        }
        Ok((self.minutes * 60.0 / p).ceil() as usize)
    }

    fn load(&self) -> Result<Session, Error> {
        let manifest = match &self.manifest {
            Some(path) => {
                let text = std::fs::read_to_string(path)?;
                let m = VideoManifest::from_json(&text)?;
                let n = self.chunk_count(m.chunk_duration_s)?;
                m.repeat_to(n)
            }
            None => {
                let n = self.chunk_count(self.chunk_duration)?;
                gen_vbr_manifest(n, self.chunk_duration, self.seed)?
            }
        };
        let (trace, trace_label) = match (&self.trace, self.profile) {
            (Some(path), None) => {
                let text = std::fs::read_to_string(path)?;
                let trace = parse_trace(&text, !self.no_loop)?;
                let label = path
                    .file_name()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_else(|| path.display().to_string());
                (trace, label)
            }
            (None, Some(id)) => (gen_profile(id)?, format!("profile-{id}")),
            (None, None) => {
                return Err(Error::InvalidParameter(
                    "either --trace or --profile is required".into(),
                ))
            }
            (Some(_), Some(_)) => unreachable!("clap conflict"),
        };
        Ok(Session {
            manifest,
            trace,
            trace_label,
        })
    }
}

fn player_config(variant: &str, gamma_p: f64, buffer_s: f64, p: f64) -> Result<PlayerConfig, Error> {
    let variant = Variant::from_str(variant)?;
    Ok(PlayerConfig::new(variant, gamma_p, buffer_s / p))
}

fn metrics_report(
    inputs: &SessionInputs,
    trace_label: &str,
    variant: Variant,
    buffer_s: f64,
    log: &SessionLog,
    metrics: &Metrics,
) -> Result<String, Error> {
    let mut report = serde_json::to_value(metrics)?;
    let obj = report.as_object_mut().unwrap();
    obj.insert("seed".into(), inputs.seed.into());
    obj.insert("trace".into(), trace_label.into());
    obj.insert("variant".into(), variant.as_str().into());
    obj.insert("gamma_p".into(), inputs.gamma_p.into());
    obj.insert("buffer_s".into(), buffer_s.into());
    obj.insert(
        "warnings".into(),
        serde_json::Value::from(log.warnings.clone()),
    );
    Ok(serde_json::to_string_pretty(&report)?)
}

fn cmd_simulate(args: SimulateArgs) -> Result<(), Error> {
    let session = args.inputs.load()?;
    let mut config = player_config(
        &args.variant,
        args.inputs.gamma_p,
        args.buffer_s,
        session.manifest.chunk_duration_s,
    )?;
    config.v = args.v;
    if args.no_abandonment {
        config.abandonment_enabled = false;
    }
    if let Some(w) = config.precondition_warning(session.manifest.top_utility()) {
        eprintln!("warning: {w}");
    }
    for w in trace_warnings(&session.trace, &session.manifest) {
        eprintln!("warning: {w}");
    }
    let log = simulate(&session.manifest, &session.trace, &config)?;
    for w in &log.warnings {
        eprintln!("warning: {w}");
    }
    let metrics = metrics::compute(&log, &session.manifest, args.inputs.gamma_p)?;
    let report = metrics_report(
        &args.inputs,
        &session.trace_label,
        config.variant,
        args.buffer_s,
        &log,
        &metrics,
    )?;
    println!("{report}");
    let dir = out_dir(&args.inputs.out);
    write_out(&dir, "session.csv", &log.to_csv())?;
    write_out(&dir, "report.json", &report)?;
    Ok(())
}

fn cmd_oracle(args: OracleArgs) -> Result<(), Error> {
    let session = args.inputs.load()?;
    let config = OracleConfig::new(args.delta, args.b_max);
    let result = offline_optimal(&session.manifest, &session.trace, args.inputs.gamma_p, &config)?;
    let mut out = format!(
        "# seed: {}\n# trace: {}\n# delta_s: {}\n# b_max_s: {}\n# r_star: {}\n",
        args.inputs.seed, session.trace_label, args.delta, args.b_max, result.r_star
    );
    out.push_str("chunk,m,finish_s,buffer_s\n");
    for (i, (&m, &(t, b))) in result.path.iter().zip(&result.schedule).enumerate() {
        out.push_str(&format!("{},{},{},{}\n", i + 1, m, t, b));
    }
    print!("{out}");
    let dir = out_dir(&args.inputs.out);
    write_out(&dir, "oracle.csv", &out)?;
    Ok(())
}

fn parse_list<T: FromStr>(text: &str, what: &str) -> Result<Vec<T>, Error>
where
    T::Err: std::fmt::Display,
{
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<T>()
                .map_err(|e| Error::InvalidParameter(format!("bad {what} `{s}`: {e}")))
        })
        .collect()
}

/// Comma list with ranges: "1-6,9" -> [1, 2, 3, 4, 5, 6, 9].
fn parse_id_list(text: &str) -> Result<Vec<usize>, Error> {
    let mut ids = Vec::new();
    for part in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        match part.split_once('-') {
            Some((a, b)) => {
                let a: usize = parse_list(a, "profile id")?[0];
                let b: usize = parse_list(b, "profile id")?[0];
                if a > b {
                    return Err(Error::InvalidParameter(format!("empty range `{part}`")));
                }
                ids.extend(a..=b);
            }
            None => ids.push(parse_list(part, "profile id")?[0]),
        }
    }
    if ids.is_empty() {
        return Err(Error::InvalidParameter("no profiles requested".into()));
    }
    Ok(ids)
}

fn cmd_sweep(args: SweepArgs) -> Result<(), Error> {
    let session = args.inputs.load()?;
    let variants: Vec<Variant> = parse_list(&args.variants, "variant")?;
    let buffers: Vec<f64> = parse_list(&args.buffers_s, "buffer size")?;
    if buffers.iter().any(|&b| b <= 0.0) {
        return Err(Error::InvalidParameter("buffer sizes must be positive".into()));
    }
    let mut out = format!(
        "# seed: {}\n# trace: {}\n# gamma_p: {}\nvariant,buffer_s,{}\n",
        args.inputs.seed,
        session.trace_label,
        args.inputs.gamma_p,
        metrics::CSV_HEADER
    );
    for &variant in &variants {
        for &buffer_s in &buffers {
            let config = PlayerConfig::new(
                variant,
                args.inputs.gamma_p,
                buffer_s / session.manifest.chunk_duration_s,
            );
            let log = simulate(&session.manifest, &session.trace, &config)?;
            let metrics = metrics::compute(&log, &session.manifest, args.inputs.gamma_p)?;
            out.push_str(&format!(
                "{},{},{}\n",
                variant.as_str(),
                buffer_s,
                metrics.to_csv_row()
            ));
        }
    }
    print!("{out}");
    let dir = out_dir(&args.inputs.out);
    write_out(&dir, "sweep.csv", &out)?;
    Ok(())
}

fn cmd_compare(args: CompareArgs) -> Result<(), Error> {
    if args.inputs.trace.is_some() || args.inputs.profile.is_some() {
        return Err(Error::InvalidParameter(
            "compare selects traces via --profiles".into(),
        ));
    }
    let profiles = parse_id_list(&args.profiles)?;
    let variants: Vec<Variant> = parse_list(&args.variants, "variant")?;
    let n = args.inputs.chunk_count(args.inputs.chunk_duration)?;
    let manifest = gen_vbr_manifest(n, args.inputs.chunk_duration, args.inputs.seed)?;
    let mut out = format!(
        "# seed: {}\n# gamma_p: {}\n# buffer_s: {}\n# delta_s: {}\n\
         profile,variant,utility,r_star,ratio\n",
        args.inputs.seed, args.inputs.gamma_p, args.buffer_s, args.delta
    );
    let mut notes = Vec::new();
    for &id in &profiles {
        let trace = gen_profile(id)?;
        let oracle_config = OracleConfig::new(args.delta, args.buffer_s);
        let bound = offline_optimal(&manifest, &trace, args.inputs.gamma_p, &oracle_config)?;
        for &variant in &variants {
            let config = PlayerConfig::new(
                variant,
                args.inputs.gamma_p,
                args.buffer_s / manifest.chunk_duration_s,
            );
            let log = simulate(&manifest, &trace, &config)?;
            let metrics = metrics::compute(&log, &manifest, args.inputs.gamma_p)?;
            let ratio = metrics.oracle_form / bound.r_star;
            if ratio > 1.0 {
                notes.push(format!(
                    "# note: profile {id} {} exceeds the bound (ratio {ratio}); \
                     the bound is only {}-second exact",
                    variant.as_str(),
                    args.delta
                ));
            }
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                id,
                variant.as_str(),
                metrics.oracle_form,
                bound.r_star,
                ratio
            ));
        }
    }
    for note in notes {
        out.push_str(&note);
        out.push('\n');
    }
    print!("{out}");
    let dir = out_dir(&args.inputs.out);
    write_out(&dir, "compare.csv", &out)?;
    Ok(())
}

fn cmd_gen_profile(args: GenProfileArgs) -> Result<(), Error> {
    let trace = gen_profile(args.id)?;
    let text = trace_to_csv(&trace);
    let dir = out_dir(&args.out);
    let path = write_out(&dir, &format!("profile-{}.csv", args.id), &text)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_gen_manifest(args: GenManifestArgs) -> Result<(), Error> {
    let manifest = gen_vbr_manifest(args.chunks, args.chunk_duration, args.seed)?;
    let text = manifest.to_json()?;
    let dir = out_dir(&args.out);
    let path = write_out(&dir, &format!("manifest-{}.json", args.seed), &text)?;
    println!("wrote {}", path.display());
    Ok(())
}
