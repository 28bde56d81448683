use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{self, BufReader, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use xlr_core::channel::{apply_channel, GilbertParams, PRESET_BURST_LEN};
use xlr_core::fr::{xlr_sequence, FrComparisonConfig, RawLumaReader};
use xlr_core::ingest::{build_trace, PacketizationModel};
use xlr_core::nr::estimate_xlr;
use xlr_core::oracle::{simulate_with_masks, DriftConfig};
use xlr_core::series_io::{parse_series, write_series};
use xlr_core::stats::{evaluate_pair, ReportRow, REPORT_HEADER};
use xlr_core::sweep::{run_sweep, SweepConfig};
use xlr_core::trace_io::{parse_trace, serialize_trace_with_header};
use xlr_core::{
    Error, ErrorClass, PredictionStructure, Provenance, Series, StructureName, RNG_ALGORITHM,
};

const EXIT_VALIDATION: u8 = 3;
const EXIT_IO: u8 = 4;
const EXIT_DATA: u8 = 5;

/// Pixel loss rate toolkit.
#[derive(Debug, Parser)]
#[command(name = "xlr", version)]
struct Cli {
    /// Master seed for every random component.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads for sweeps; 0 uses every core.
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
    /// Output file; standard output when absent.
    #[arg(long, short, global = true)]
    output: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Full-reference XLR from two raw 8-bit luma files.
    Fr(FrArgs),
    /// Build a packet trace from an H.264 Annex-B elementary stream.
    Ingest(IngestArgs),
    /// Mark packet losses with a Gilbert channel.
    Channel(ChannelArgs),
    /// No-reference XLR estimate from a trace.
    Nr(NrArgs),
    /// Pixel propagation ground truth for a trace.
    Oracle(OracleArgs),
    /// Compare a measured series with an estimated one.
    Eval(EvalArgs),
    /// Run an experiment grid described by a TOML file.
    Sweep(SweepArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Mode {
    Exact,
    Threshold,
}

#[derive(Debug, Args)]
struct FrArgs {
    original: PathBuf,
    distorted: PathBuf,
    #[arg(long)]
    width: usize,
    #[arg(long)]
    height: usize,
    #[arg(long, value_enum, default_value_t = Mode::Exact)]
    mode: Mode,
    /// Minimum absolute difference counted in threshold mode.
    #[arg(long, default_value_t = FrComparisonConfig::DEFAULT_Q)]
    q: u8,
}

#[derive(Debug, Args)]
struct IngestArgs {
    /// Annex-B file, or `-` for standard input.
    stream: PathBuf,
    #[arg(long, default_value = "ipp")]
    structure: String,
    #[arg(long, default_value_t = 25)]
    period: usize,
    /// `mtu:<bytes>` or `ts188`.
    #[arg(long, default_value = "mtu:1400")]
    pack: String,
}

#[derive(Debug, Args)]
struct ChannelArgs {
    trace: PathBuf,
    #[arg(long)]
    plr: f64,
    #[arg(long, default_value_t = PRESET_BURST_LEN)]
    burst_len: f64,
    /// Keep losses already present in the input.
    #[arg(long)]
    compose: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Order {
    Decode,
    Display,
}

#[derive(Debug, Args)]
struct NrArgs {
    trace: PathBuf,
    #[arg(long, value_enum, default_value_t = Order::Decode)]
    order: Order,
}

#[derive(Debug, Args)]
struct OracleArgs {
    trace: PathBuf,
    #[arg(long)]
    width: usize,
    #[arg(long)]
    height: usize,
    /// Per-hop probability that an impaired pixel recovers.
    #[arg(long, default_value_t = 0.0)]
    heal: f64,
    /// Per-hop probability that a clean pixel next to damage is impaired.
    #[arg(long, default_value_t = 0.0)]
    grow: f64,
    /// Write each frame's mask as a PGM image into this directory.
    #[arg(long)]
    mask_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Format {
    Csv,
    Text,
}

#[derive(Debug, Args)]
struct EvalArgs {
    real: PathBuf,
    estimated: PathBuf,
    #[arg(long, default_value = "-")]
    sequence: String,
    #[arg(long, default_value = "-")]
    structure: String,
    #[arg(long, default_value = "-")]
    plr: String,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Debug, Args)]
struct SweepArgs {
    config: PathBuf,
}

/// Everything needed to reproduce an output file.
#[derive(Debug, Serialize)]
struct RunManifest {
    tool: &'static str,
    version: &'static str,
    subcommand: &'static str,
    params: Value,
    seeds: BTreeMap<&'static str, u64>,
    inputs: BTreeMap<String, String>,
    rng: &'static str,
}

impl RunManifest {
    fn new(subcommand: &'static str, params: Value) -> Self {
        Self {
            tool: "xlr",
            version: env!("CARGO_PKG_VERSION"),
            subcommand,
            params,
            seeds: BTreeMap::new(),
            inputs: BTreeMap::new(),
            rng: RNG_ALGORITHM,
        }
    }

    fn seed(mut self, name: &'static str, value: u64) -> Self {
        self.seeds.insert(name, value);
        self
    }

    fn comment(&self) -> String {
        format!(
            "manifest: {}",
            serde_json::to_string(self).expect("manifest serializes")
        )
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Reads an input fully and records its digest.
fn read_input(path: &Path, manifest: &mut RunManifest) -> xlr_core::Result<Vec<u8>> {
    let bytes = if path == Path::new("-") {
        let mut buf = Vec::new();
        io::stdin().lock().read_to_end(&mut buf)?;
        buf
    } else {
        fs::read(path).map_err(|e| io::Error::new(e.kind(), format!("{}: {e}", path.display())))?
    };
    manifest
        .inputs
        .insert(path.display().to_string(), sha256_hex(&bytes));
    Ok(bytes)
}

fn read_text(path: &Path, manifest: &mut RunManifest) -> xlr_core::Result<String> {
    String::from_utf8(read_input(path, manifest)?).map_err(|_| Error::Parse {
        line: 0,
        msg: format!("{} is not UTF-8 text", path.display()),
    })
}

fn digest_file(path: &Path, manifest: &mut RunManifest) -> xlr_core::Result<()> {
    let mut file = open(path)?;
    let mut h = Sha256::new();
    io::copy(&mut file, &mut h)?;
    let hex = h.finalize().iter().map(|b| format!("{b:02x}")).collect();
    manifest.inputs.insert(path.display().to_string(), hex);
    Ok(())
}

fn open(path: &Path) -> xlr_core::Result<File> {
    File::open(path)
        .map_err(|e| io::Error::new(e.kind(), format!("{}: {e}", path.display())).into())
}

fn with_manifest(manifest: &RunManifest, body: &str) -> String {
    format!("# {}\n{body}", manifest.comment())
}

fn cmd_fr(a: &FrArgs) -> xlr_core::Result<String> {
    let config = match a.mode {
        Mode::Exact => FrComparisonConfig::exact(),
        Mode::Threshold => FrComparisonConfig::threshold(a.q)?,
    };
    let mut m = RunManifest::new(
        "fr",
        json!({ "width": a.width, "height": a.height, "mode": a.mode, "q": a.q }),
    );
    digest_file(&a.original, &mut m)?;
    digest_file(&a.distorted, &mut m)?;
    let orig = RawLumaReader::new(BufReader::new(open(&a.original)?), a.width, a.height)?;
    let dist = RawLumaReader::new(BufReader::new(open(&a.distorted)?), a.width, a.height)?;
    let series: Series = xlr_sequence(orig, dist, config)?;
    Ok(with_manifest(&m, &write_series(&series)))
}

fn cmd_ingest(a: &IngestArgs) -> xlr_core::Result<String> {
    let structure = PredictionStructure::new(a.structure.parse::<StructureName>()?, a.period)?;
    let pack: PacketizationModel = a.pack.parse()?;
    let mut m = RunManifest::new(
        "ingest",
        json!({ "structure": structure.name().as_str(), "period": a.period, "pack": pack.to_string() }),
    );
    let bytes = read_input(&a.stream, &mut m)?;
    let trace = build_trace(&bytes, &structure, pack)?;
    Ok(serialize_trace_with_header(&trace, &[m.comment()]))
}

fn cmd_channel(a: &ChannelArgs, seed: u64) -> xlr_core::Result<String> {
    let params = GilbertParams::new(a.plr, a.burst_len, seed)?;
    let mut m = RunManifest::new(
        "channel",
        json!({ "plr": a.plr, "burst_len": a.burst_len, "compose": a.compose }),
    )
    .seed("channel", seed);
    let trace = parse_trace(&read_text(&a.trace, &mut m)?)?;
    trace.ensure_valid()?;
    let out = apply_channel(&trace, &params, a.compose)?;
    Ok(serialize_trace_with_header(&out, &[m.comment()]))
}

fn cmd_nr(a: &NrArgs) -> xlr_core::Result<String> {
    let mut m = RunManifest::new("nr", json!({ "order": a.order }));
    let trace = parse_trace(&read_text(&a.trace, &mut m)?)?;
    let mut series: Series = estimate_xlr(&trace)?;
    if let Order::Display = a.order {
        series = series.reordered(&trace.display_order());
    }
    Ok(with_manifest(&m, &write_series(&series)))
}

fn cmd_oracle(a: &OracleArgs, seed: u64) -> xlr_core::Result<String> {
    let drift = DriftConfig::new(a.heal, a.grow, seed)?;
    let mut m = RunManifest::new(
        "oracle",
        json!({ "width": a.width, "height": a.height, "heal": a.heal, "grow": a.grow }),
    )
    .seed("drift", seed);
    let trace = parse_trace(&read_text(&a.trace, &mut m)?)?;
    let run = simulate_with_masks::<f64>(&trace, a.width, a.height, drift)?;
    if let Some(dir) = &a.mask_dir {
        fs::create_dir_all(dir)?;
        for (meta, mask) in trace.frames.iter().zip(&run.masks) {
            let path = dir.join(format!("frame_{:06}.pgm", meta.decode_index));
            let mut out = io::BufWriter::new(File::create(path)?);
            mask.write_pgm(&mut out)?;
            out.flush()?;
        }
    }
    Ok(with_manifest(&m, &write_series(&run.series)))
}

fn cmd_eval(a: &EvalArgs) -> xlr_core::Result<String> {
    let mut m = RunManifest::new(
        "eval",
        json!({ "sequence": a.sequence, "structure": a.structure, "plr": a.plr, "format": a.format }),
    );
    let real: Series = parse_series(&read_text(&a.real, &mut m)?, Provenance::Fr)?;
    let est: Series = parse_series(&read_text(&a.estimated, &mut m)?, Provenance::Nr)?;
    let report = evaluate_pair(&real, &est)?;
    let body = match a.format {
        Format::Text => format!("{report}\n"),
        Format::Csv => {
            let row = ReportRow {
                sequence: a.sequence.clone(),
                structure: a.structure.clone(),
                plr: a.plr.clone(),
                report,
            };
            format!("{REPORT_HEADER}\n{}\n", row.to_csv())
        }
    };
    Ok(with_manifest(&m, &body))
}

fn cmd_sweep(a: &SweepArgs, seed: u64, jobs: usize) -> xlr_core::Result<String> {
    let mut m = RunManifest::new("sweep", Value::Null).seed("master", seed);
    let text = read_text(&a.config, &mut m)?;
    let base = a.config.parent().unwrap_or(Path::new("."));
    let cfg = SweepConfig::from_toml(&text, base)?;
    m.params = json!({
        "width": cfg.width,
        "height": cfg.height,
        "seeds": cfg.seeds,
        "plr": cfg.plrs,
        "burst_len": cfg.burst_len,
        "structures": cfg.structures.iter().map(|s| s.name().as_str()).collect::<Vec<_>>(),
        "period": cfg.structures.first().map(|s| s.period()),
        "pack": cfg.pack.to_string(),
        "drift": cfg.drift.map(|(heal, grow)| json!({ "heal": heal, "grow": grow })),
    });
    for src in &cfg.sources {
        if let xlr_core::sweep::SourceKind::Stream(p) | xlr_core::sweep::SourceKind::Trace(p) =
            &src.kind
        {
            if p.exists() {
                digest_file(p, &mut m)?;
            }
        }
    }
    let report = run_sweep(&cfg, seed, jobs)?;
    Ok(with_manifest(&m, &report.to_csv()))
}

fn run(cli: &Cli) -> xlr_core::Result<()> {
    let out = match &cli.command {
        Command::Fr(a) => cmd_fr(a)?,
        Command::Ingest(a) => cmd_ingest(a)?,
        Command::Channel(a) => cmd_channel(a, cli.seed)?,
        Command::Nr(a) => cmd_nr(a)?,
        Command::Oracle(a) => cmd_oracle(a, cli.seed)?,
        Command::Eval(a) => cmd_eval(a)?,
        Command::Sweep(a) => cmd_sweep(a, cli.seed, cli.jobs)?,
    };
    match &cli.output {
        Some(path) => fs::write(path, out)?,
        None => io::stdout().lock().write_all(out.as_bytes())?,
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("xlr: {e}");
            if let Error::InvalidTrace(violations) = &e {
                for v in violations.iter().take(20) {
                    eprintln!("  {v}");
                }
            }
            ExitCode::from(match e.class() {
                ErrorClass::Validation => EXIT_VALIDATION,
                ErrorClass::Io => EXIT_IO,
                ErrorClass::Data => EXIT_DATA,
            })
        }
    }
}
