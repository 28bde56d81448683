use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use tempfile::TempDir;
use xlr_core::fixtures::annexb_fixture;
use xlr_core::PredictionStructure;

fn xlr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_xlr"))
        .args(args)
        .output()
        .unwrap()
}

fn xlr_stdin(args: &[&str], input: &[u8]) -> Output {
    let mut child = Command::new(env!("CARGO_BIN_EXE_xlr"))
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(input).unwrap();
    child.wait_with_output().unwrap()
}

fn ok(out: Output) -> String {
    assert!(
        out.status.success(),
        "status {:?}, stderr: {}",
        out.status,
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Rows of a series CSV without comments and headers.
fn rows(csv: &str) -> Vec<String> {
    csv.lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .take_while(|l| *l != "mxlr,msxlr")
        .map(String::from)
        .collect()
}

struct Fixture {
    dir: TempDir,
}

impl Fixture {
    fn new() -> Self {
        Self {
            dir: TempDir::new().unwrap(),
        }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn write(&self, name: &str, bytes: &[u8]) -> PathBuf {
        let path = self.path(name);
        fs::write(&path, bytes).unwrap();
        path
    }

    fn stream(&self, structure: &PredictionStructure, frames: usize) -> PathBuf {
        self.write("clip.264", &annexb_fixture(structure, frames, 11).bytes)
    }

    /// A lossy trace of a 60-frame IBBP stream.
    fn lossy_trace(&self) -> PathBuf {
        let s = PredictionStructure::ibbp(25).unwrap();
        let es = self.stream(&s, 60);
        let clean = self.path("clean.trace");
        ok(xlr(&[
            "ingest",
            p(&es),
            "--structure",
            "ibbp",
            "-o",
            p(&clean),
        ]));
        let lossy = self.path("lossy.trace");
        ok(xlr(&[
            "channel",
            p(&clean),
            "--plr",
            "0.1",
            "--seed",
            "3",
            "-o",
            p(&lossy),
        ]));
        lossy
    }
}

#[test]
fn fr_identical_files_are_all_zero() {
    let f = Fixture::new();
    let a = f.write("a.y", &[7u8; 4 * 3 * 5]);
    let out = ok(xlr(&["fr", p(&a), p(&a), "--width", "4", "--height", "3"]));
    assert!(out.starts_with("# manifest: {"));
    let r = rows(&out);
    assert_eq!(r.len(), 5);
    assert!(r.iter().enumerate().all(|(i, l)| *l == format!("{i},0")));
    assert!(out.ends_with("mxlr,msxlr\n0,0\n"));
}

#[test]
fn fr_known_differences_in_both_modes() {
    let f = Fixture::new();
    let orig = vec![100u8; 4 * 3];
    let mut dist = orig.clone();
    dist.extend(orig.clone());
    dist.extend(orig.clone());
    let mut distorted = dist.clone();
    distorted[0] = 101;
    distorted[12] = 130;
    distorted[13] = 90;
    distorted[24..36].fill(0);
    let a = f.write("a.y", &dist);
    let b = f.write("b.y", &distorted);
    let exact = ok(xlr(&["fr", p(&a), p(&b), "--width", "4", "--height", "3"]));
    assert_eq!(
        rows(&exact),
        vec!["0,0.08333333333333333", "1,0.16666666666666666", "2,1"]
    );
    let q = ok(xlr(&[
        "fr",
        p(&a),
        p(&b),
        "--width",
        "4",
        "--height",
        "3",
        "--mode",
        "threshold",
    ]));
    assert_eq!(rows(&q), vec!["0,0", "1,0.08333333333333333", "2,1"]);
}

#[test]
fn fr_truncated_input_reports_offset() {
    let f = Fixture::new();
    let a = f.write("a.y", &[0u8; 24]);
    let b = f.write("b.y", &[0u8; 17]);
    let out = xlr(&["fr", p(&a), p(&b), "--width", "4", "--height", "3"]);
    assert_eq!(out.status.code(), Some(4));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("byte offset 12"), "{err}");
}

#[test]
fn ingest_builds_a_valid_trace_from_file_and_stdin() {
    let f = Fixture::new();
    let s = PredictionStructure::ipp(25).unwrap();
    let es = f.stream(&s, 25);
    let from_file = ok(xlr(&[
        "ingest",
        p(&es),
        "--structure",
        "ipp",
        "--period",
        "25",
    ]));
    let trace = xlr_core::trace_io::parse_trace(&from_file).unwrap();
    assert_eq!(trace.frames.len(), 25);
    assert!(xlr_core::validate_trace(&trace).is_empty());
    assert_eq!(trace.frames[0].frame_type, xlr_core::FrameType::Idr);

    let bytes = fs::read(&es).unwrap();
    let from_stdin = ok(xlr_stdin(&["ingest", "-", "--structure", "ipp"], &bytes));
    let strip = |t: &str| {
        t.lines()
            .filter(|l| !l.starts_with('#'))
            .collect::<Vec<_>>()
            .join("\n")
    };
    assert_eq!(strip(&from_file), strip(&from_stdin));

    let ts = ok(xlr(&["ingest", p(&es), "--pack", "ts188"]));
    let ts = xlr_core::trace_io::parse_trace(&ts).unwrap();
    assert!(ts.packets.iter().all(|p| p.size_octets <= 184));
}

#[test]
fn ingest_idr_only_stream_has_no_references() {
    let f = Fixture::new();
    let s = PredictionStructure::ipp(1).unwrap();
    let es = f.stream(&s, 6);
    let out = ok(xlr(&["ingest", p(&es), "--period", "1"]));
    let trace = xlr_core::trace_io::parse_trace(&out).unwrap();
    assert!(trace.frames.iter().all(|fr| fr.direct_refs.is_empty()));
}

#[test]
fn ingest_garbage_is_a_data_error() {
    let f = Fixture::new();
    let g = f.write("junk.bin", b"definitely not a video stream");
    let out = xlr(&["ingest", p(&g)]);
    assert_eq!(out.status.code(), Some(5));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no start code"));
}

#[test]
fn channel_is_seeded() {
    let f = Fixture::new();
    let t = f.lossy_trace();
    let clean = f.path("clean.trace");
    let a = ok(xlr(&["channel", p(&clean), "--plr", "0.1", "--seed", "3"]));
    assert_eq!(a, fs::read_to_string(&t).unwrap());
    let b = ok(xlr(&["channel", p(&clean), "--plr", "0.1", "--seed", "4"]));
    assert_ne!(a, b);
    assert!(a.contains(" 1\n"));
    let none = ok(xlr(&["channel", p(&clean), "--plr", "0"]));
    assert!(!none
        .lines()
        .any(|l| l.starts_with("packet") && l.ends_with(" 1")));
}

#[test]
fn oracle_agrees_with_estimator_and_dumps_masks() {
    let f = Fixture::new();
    let t = f.lossy_trace();
    let nr = f.path("nr.csv");
    let oracle = f.path("oracle.csv");
    let masks = f.path("masks");
    ok(xlr(&["nr", p(&t), "-o", p(&nr)]));
    ok(xlr(&[
        "oracle",
        p(&t),
        "--width",
        "64",
        "--height",
        "64",
        "--mask-dir",
        p(&masks),
        "-o",
        p(&oracle),
    ]));
    assert_eq!(fs::read_dir(&masks).unwrap().count(), 60);
    let pgm = fs::read(masks.join("frame_000000.pgm")).unwrap();
    assert!(pgm.starts_with(b"P5\n64 64\n255\n"));

    let report = ok(xlr(&[
        "eval",
        p(&oracle),
        p(&nr),
        "--sequence",
        "clip",
        "--structure",
        "ibbp",
        "--plr",
        "0.1",
    ]));
    let row = report.lines().last().unwrap();
    let fields: Vec<&str> = row.split(',').collect();
    assert_eq!(&fields[..3], ["clip", "ibbp", "0.1"]);
    let mae: f64 = fields[7].parse().unwrap();
    assert!(mae <= 1.0 / 4096.0, "{row}");
}

#[test]
fn nr_display_order_permutes_rows() {
    let f = Fixture::new();
    let t = f.lossy_trace();
    let decode = rows(&ok(xlr(&["nr", p(&t)])));
    let display = rows(&ok(xlr(&["nr", p(&t), "--order", "display"])));
    assert_ne!(decode, display);
    let mut a = decode.clone();
    let mut b = display.clone();
    a.sort();
    b.sort();
    assert_eq!(a, b);
    assert!(display[1].starts_with("2,"), "{:?}", &display[..4]);
}

#[test]
fn oracle_drift_depends_on_seed() {
    let f = Fixture::new();
    let t = f.lossy_trace();
    let run = |seed: &str| {
        ok(xlr(&[
            "oracle",
            p(&t),
            "--width",
            "64",
            "--height",
            "64",
            "--heal",
            "0.1",
            "--grow",
            "0.1",
            "--seed",
            seed,
        ]))
    };
    assert_eq!(run("1"), run("1"));
    assert_ne!(rows(&run("1")), rows(&run("2")));
}

#[test]
fn eval_identical_and_text_format() {
    let f = Fixture::new();
    let s = f.write("s.csv", b"decode_index,xlr\n0,0\n1,0.5\n2,0.25\n");
    let csv = ok(xlr(&["eval", p(&s), p(&s)]));
    assert!(csv.contains(
        "sequence,structure,plr,real_mxlr,est_mxlr,real_msxlr,est_msxlr,mae,pcc,srocc\n"
    ));
    assert!(csv.ends_with(",0,1,1\n"), "{csv}");
    let text = ok(xlr(&["eval", p(&s), p(&s), "--format", "text"]));
    assert!(text.contains("mae         0\n"));
    let short = f.write("short.csv", b"decode_index,xlr\n0,0\n");
    assert_eq!(xlr(&["eval", p(&s), p(&short)]).status.code(), Some(5));
}

#[test]
fn sweep_single_cell_matches_eval() {
    let f = Fixture::new();
    let t = f.lossy_trace();
    let cfg = f.write(
        "one.toml",
        b"width = 64\nheight = 64\nplr = [0.0]\n[[source]]\nname = \"clip\"\ntrace = \"lossy.trace\"\n",
    );
    let sweep = ok(xlr(&["sweep", p(&cfg)]));
    let body: Vec<&str> = sweep.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(body.len(), 4, "{sweep}");

    let nr = f.path("nr.csv");
    let oracle = f.path("oracle.csv");
    ok(xlr(&["nr", p(&t), "-o", p(&nr)]));
    ok(xlr(&[
        "oracle",
        p(&t),
        "--width",
        "64",
        "--height",
        "64",
        "-o",
        p(&oracle),
    ]));
    let eval = ok(xlr(&[
        "eval",
        p(&oracle),
        p(&nr),
        "--sequence",
        "clip/s0",
        "--structure",
        "trace",
        "--plr",
        "0",
    ]));
    let eval_body: Vec<&str> = eval.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(body[..2], eval_body[..]);
    assert_eq!(body[2], "pcc_mxlr,pcc_msxlr");
    assert_eq!(body[3], "nan,nan");
}

#[test]
fn sweep_grid_is_deterministic_across_job_counts() {
    let f = Fixture::new();
    let cfg = f.write(
        "grid.toml",
        b"width = 64\nheight = 64\nplr = [0.005, 0.01, 0.05]\n[drift]\nheal = 0.02\ngrow = 0.02\n[[source]]\nname = \"s\"\nsynthetic = { frames = 100 }\n",
    );
    let a = ok(xlr(&["sweep", p(&cfg), "--seed", "9", "--jobs", "1"]));
    let b = ok(xlr(&["sweep", p(&cfg), "--seed", "9", "--jobs", "3"]));
    assert_eq!(a, b);
    let data: Vec<&str> = a.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(data.len(), 1 + 9 + 2);
    assert!(a.lines().next().unwrap().contains("\"master\":9"));
}

#[test]
fn sweep_without_sources_fails() {
    let f = Fixture::new();
    let cfg = f.write("empty.toml", b"");
    assert_eq!(xlr(&["sweep", p(&cfg)]).status.code(), Some(5));
}

#[test]
fn invalid_trace_is_a_validation_error() {
    let f = Fixture::new();
    let t = f.write("bad.trace", b"frame 0 0 P -\npacket 0 0 1 100 1\n");
    let out = xlr(&["nr", p(&t)]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("first frame"));
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(xlr(&[]).status.code(), Some(2));
    assert_eq!(xlr(&["fr", "a", "b"]).status.code(), Some(2));
    assert_eq!(
        xlr(&["nr", "x", "--order", "sideways"]).status.code(),
        Some(2)
    );
}

#[test]
fn missing_file_is_an_io_error() {
    assert_eq!(xlr(&["nr", "/nonexistent/trace"]).status.code(), Some(4));
}

#[test]
fn manifest_records_inputs_and_parameters() {
    let f = Fixture::new();
    let t = f.lossy_trace();
    let out = ok(xlr(&[
        "oracle",
        p(&t),
        "--width",
        "64",
        "--height",
        "64",
        "--seed",
        "5",
    ]));
    let line = out.lines().next().unwrap();
    let json: serde_json::Value =
        serde_json::from_str(line.strip_prefix("# manifest: ").unwrap()).unwrap();
    assert_eq!(json["subcommand"], "oracle");
    assert_eq!(json["rng"], "ChaCha8");
    assert_eq!(json["seeds"]["drift"], 5);
    assert_eq!(json["params"]["width"], 64);
    let digest = json["inputs"][p(&t)].as_str().unwrap();
    assert_eq!(digest.len(), 64);
}
