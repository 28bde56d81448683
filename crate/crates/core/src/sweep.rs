//! Experiment grid runner. The grid crosses sources with prediction
//! structures and loss rates, repeated per seed index. Each cell puts the source trace
//! through the loss channel, then compares the no-reference estimate against
//! the pixel oracle.
//!
//! Configuration is TOML:
//!
//! ```toml
//! width = 320
//! height = 180
//! seeds = 2                       # seed indices per cell, default 1
//! plr = [0.001, 0.005, 0.01]
//! burst_len = 2.0                 # default 2
//! structures = ["ipp", "ibbp", "hier"]   # default: all three
//! period = 25                     # default 25
//! pack = "mtu:1400"               # or "ts188"; default mtu:1400
//!
//! [drift]                         # optional; exact oracle when absent
//! heal = 0.02
//! grow = 0.02
//!
//! [[source]]
//! name = "synth"
//! synthetic = { frames = 300 }
//!
//! [[source]]
//! name = "clip"
//! stream = "clip.264"             # Annex-B, laid out per structure
//!
//! [[source]]
//! name = "captured"
//! trace = "captured.trace"        # used as is; the structure axis is skipped
//! ```
//!
//! Relative paths resolve against the configuration file's directory.
//! Every cell draws its randomness from `hash(master_seed, cell_key)`, so the
//! output does not depend on the number of worker threads.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Deserialize;
use sha2::{Digest, Sha256};

use crate::channel::{apply_channel, GilbertParams, PRESET_BURST_LEN};
use crate::error::{Error, Result};
use crate::fixtures::{synthetic_trace, TraceSpec};
use crate::ingest::{build_trace, PacketizationModel};
use crate::nr::estimate_xlr;
use crate::oracle::{simulate_drift, simulate_exact, DriftConfig};
use crate::stats::{evaluate_pair, pooled_pcc, EvalReport, ReportRow, REPORT_HEADER};
use crate::structure::{PredictionStructure, StructureName};
use crate::trace::StreamTrace;
use crate::trace_io::parse_trace;

pub const POOLED_TRAILER_HEADER: &str = "pcc_mxlr,pcc_msxlr";

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    width: usize,
    height: usize,
    seeds: Option<usize>,
    plr: Vec<f64>,
    burst_len: Option<f64>,
    structures: Option<Vec<String>>,
    period: Option<usize>,
    pack: Option<String>,
    drift: Option<RawDrift>,
    #[serde(default)]
    source: Vec<RawSource>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDrift {
    heal: f64,
    grow: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSource {
    name: String,
    stream: Option<PathBuf>,
    trace: Option<PathBuf>,
    synthetic: Option<RawSynthetic>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSynthetic {
    frames: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SourceKind {
    Stream(PathBuf),
    Trace(PathBuf),
    Synthetic { frames: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Source {
    pub name: String,
    pub kind: SourceKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub width: usize,
    pub height: usize,
    pub seeds: usize,
    pub plrs: Vec<f64>,
    pub burst_len: f64,
    pub structures: Vec<PredictionStructure>,
    pub pack: PacketizationModel,
    /// `(heal, grow)` rates; `None` selects the exact oracle.
    pub drift: Option<(f64, f64)>,
    pub sources: Vec<Source>,
}

impl SweepConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        if raw.source.is_empty() {
            return Err(Error::Config("no [[source]] entries".into()));
        }
        if raw.plr.is_empty() {
            return Err(Error::Config("plr list is empty".into()));
        }
        if raw.width == 0 || raw.height == 0 {
            return Err(Error::Config("width and height must be positive".into()));
        }
        let seeds = raw.seeds.unwrap_or(1);
        if seeds == 0 {
            return Err(Error::Config("seeds must be at least 1".into()));
        }
        let burst_len = raw.burst_len.unwrap_or(PRESET_BURST_LEN);
        for &plr in &raw.plr {
            GilbertParams::new(plr, burst_len, 0)?;
        }
        let period = raw.period.unwrap_or(25);
        let names = raw
            .structures
            .unwrap_or_else(|| vec!["ipp".into(), "ibbp".into(), "hier".into()]);
        if names.is_empty() {
            return Err(Error::Config("structures list is empty".into()));
        }
        let structures = names
            .iter()
            .map(|n| PredictionStructure::new(n.parse::<StructureName>()?, period))
            .collect::<Result<Vec<_>>>()?;
        let pack = match raw.pack {
            Some(p) => p.parse()?,
            None => PacketizationModel::default(),
        };
        let drift = match raw.drift {
            Some(d) => {
                DriftConfig::new(d.heal, d.grow, 0)?;
                Some((d.heal, d.grow))
            }
            None => None,
        };
        let mut sources = Vec::new();
        for s in raw.source {
            let kind = match (s.stream, s.trace, s.synthetic) {
                (Some(p), None, None) => SourceKind::Stream(base_dir.join(p)),
                (None, Some(p), None) => SourceKind::Trace(base_dir.join(p)),
                (None, None, Some(syn)) if syn.frames > 0 => {
                    SourceKind::Synthetic { frames: syn.frames }
                }
                (None, None, Some(_)) => {
                    return Err(Error::Config(format!(
                        "source `{}` has zero frames",
                        s.name
                    )))
                }
                _ => {
                    return Err(Error::Config(format!(
                        "source `{}` needs exactly one of stream, trace, synthetic",
                        s.name
                    )))
                }
            };
            if s.name.is_empty() || s.name.contains([',', '\n']) {
                return Err(Error::Config(format!("invalid source name `{}`", s.name)));
            }
            sources.push(Source { name: s.name, kind });
        }
        Ok(Self {
            width: raw.width,
            height: raw.height,
            seeds,
            plrs: raw.plr,
            burst_len,
            structures,
            pack,
            drift,
            sources,
        })
    }
}

/// First eight bytes of `SHA-256(master_seed_le || key)`, little endian.
pub fn derive_seed(master_seed: u64, key: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(master_seed.to_le_bytes());
    h.update(key.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("digest is 32 bytes"))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellOutcome {
    pub key: String,
    pub seed: u64,
    pub sequence: String,
    pub structure: String,
    pub plr: f64,
    pub result: std::result::Result<EvalReport<f64>, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub cells: Vec<CellOutcome>,
    pub pooled_pcc_mxlr: Option<f64>,
    pub pooled_pcc_msxlr: Option<f64>,
}

impl SweepReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{REPORT_HEADER}");
        for c in &self.cells {
            match &c.result {
                Ok(report) => {
                    let row = ReportRow {
                        sequence: c.sequence.clone(),
                        structure: c.structure.clone(),
                        plr: c.plr.to_string(),
                        report: report.clone(),
                    };
                    let _ = writeln!(out, "{}", row.to_csv());
                }
                Err(msg) => {
                    let _ = writeln!(out, "# cell {} failed: {}", c.key, msg.replace('\n', " "));
                    let _ = writeln!(
                        out,
                        "{},{},{}{}",
                        c.sequence,
                        c.structure,
                        c.plr,
                        ",nan".repeat(7)
                    );
                }
            }
        }
        let opt = |v: Option<f64>| v.map_or_else(|| "nan".into(), |x: f64| x.to_string());
        let _ = writeln!(out, "{POOLED_TRAILER_HEADER}");
        let _ = writeln!(
            out,
            "{},{}",
            opt(self.pooled_pcc_mxlr),
            opt(self.pooled_pcc_msxlr)
        );
        out
    }

    pub fn failures(&self) -> usize {
        self.cells.iter().filter(|c| c.result.is_err()).count()
    }
}

struct Base {
    source: usize,
    structure: Option<usize>,
    seed_index: usize,
    label: String,
}

fn base_key(cfg: &SweepConfig, b: &Base) -> String {
    format!(
        "{}|{}|s{}",
        cfg.sources[b.source].name, b.label, b.seed_index
    )
}

fn build_base(cfg: &SweepConfig, b: &Base, master_seed: u64) -> Result<StreamTrace> {
    let source = &cfg.sources[b.source];
    let structure = b.structure.map(|i| &cfg.structures[i]);
    match (&source.kind, structure) {
        (SourceKind::Synthetic { frames }, Some(s)) => {
            let spec = TraceSpec {
                structure: s.clone(),
                frames: *frames,
                sizes: Default::default(),
                pack: cfg.pack,
            };
            let seed = derive_seed(master_seed, &format!("{}|trace", base_key(cfg, b)));
            Ok(synthetic_trace(&spec, seed))
        }
        (SourceKind::Stream(path), Some(s)) => build_trace(&std::fs::read(path)?, s, cfg.pack),
        (SourceKind::Trace(path), _) => parse_trace(&std::fs::read_to_string(path)?),
        _ => unreachable!("structure axis present for every non-trace source"),
    }
}

fn run_cell(cfg: &SweepConfig, base: &StreamTrace, plr: f64, seed: u64) -> Result<EvalReport<f64>> {
    let params = GilbertParams::new(plr, cfg.burst_len, derive_seed(seed, "channel"))?;
    let lossy = apply_channel(base, &params, true)?;
    let est = estimate_xlr::<f64>(&lossy)?;
    let real = match cfg.drift {
        Some((heal, grow)) => {
            let drift = DriftConfig::new(heal, grow, derive_seed(seed, "drift"))?;
            simulate_drift::<f64>(&lossy, cfg.width, cfg.height, drift)?
        }
        None => simulate_exact::<f64>(&lossy, cfg.width, cfg.height)?,
    };
    evaluate_pair(&real, &est)
}

/// Runs every cell on at most `jobs` threads (`0` lets the pool decide) and
/// reports them in grid order. Cell failures are kept in the report.
pub fn run_sweep(cfg: &SweepConfig, master_seed: u64, jobs: usize) -> Result<SweepReport> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;

    let mut bases = Vec::new();
    for (si, src) in cfg.sources.iter().enumerate() {
        let axis: Vec<(Option<usize>, String)> = match src.kind {
            SourceKind::Trace(_) => vec![(None, "trace".into())],
            _ => cfg
                .structures
                .iter()
                .enumerate()
                .map(|(i, s)| (Some(i), s.name().as_str().to_string()))
                .collect(),
        };
        for (structure, label) in axis {
            for seed_index in 0..cfg.seeds {
                bases.push(Base {
                    source: si,
                    structure,
                    seed_index,
                    label: label.clone(),
                });
            }
        }
    }

    let cells = pool.install(|| {
        let traces: Vec<std::result::Result<StreamTrace, String>> = bases
            .par_iter()
            .map(|b| build_base(cfg, b, master_seed).map_err(|e| e.to_string()))
            .collect();
        let jobs: Vec<(usize, f64)> = (0..bases.len())
            .flat_map(|i| cfg.plrs.iter().map(move |&p| (i, p)))
            .collect();
        jobs.par_iter()
            .map(|&(i, plr)| {
                let b = &bases[i];
                let key = format!("{}|{plr}", base_key(cfg, b));
                let seed = derive_seed(master_seed, &key);
                let result = traces[i]
                    .clone()
                    .and_then(|t| run_cell(cfg, &t, plr, seed).map_err(|e| e.to_string()));
                CellOutcome {
                    sequence: format!("{}/s{}", cfg.sources[b.source].name, b.seed_index),
                    structure: b.label.clone(),
                    plr,
                    key,
                    seed,
                    result,
                }
            })
            .collect::<Vec<_>>()
    });

    let ok: Vec<&EvalReport<f64>> = cells
        .iter()
        .filter_map(|c| c.result.as_ref().ok())
        .collect();
    let (pooled_pcc_mxlr, pooled_pcc_msxlr) = pooled_pcc(&ok);
    Ok(SweepReport {
        cells,
        pooled_pcc_mxlr,
        pooled_pcc_msxlr,
    })
}
