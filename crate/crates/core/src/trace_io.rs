//! Line-oriented trace files.
//!
//! ```text
//! # comment
//! frame <decode_index> <display_index> <type> <ref,ref,...|->
//! packet <global_index> <frame_decode_index> <index_in_frame> <size_octets> <lost:0|1>
//! ```
//!
//! The canonical form writes each frame line followed by that frame's packet
//! lines and nothing else; parsing and re-serializing a canonical file
//! reproduces it byte for byte.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::io::BufRead;

use crate::error::{Error, Result};
use crate::trace::{FrameMeta, FrameType, PacketRecord, StreamTrace};

pub fn parse_trace(text: &str) -> Result<StreamTrace> {
    read_trace(text.as_bytes())
}

pub fn read_trace<R: BufRead>(reader: R) -> Result<StreamTrace> {
    let mut trace = StreamTrace::default();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = n + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        match fields[0] {
            "frame" => trace.frames.push(parse_frame(&fields, lineno)?),
            "packet" => trace.packets.push(parse_packet(&fields, lineno)?),
            other => {
                return Err(Error::parse(
                    lineno,
                    format!("unknown record kind `{other}`"),
                ))
            }
        }
    }
    Ok(trace)
}

fn num<T: std::str::FromStr>(s: &str, what: &str, line: usize) -> Result<T> {
    s.parse()
        .map_err(|_| Error::parse(line, format!("bad {what} `{s}`")))
}

fn parse_frame(fields: &[&str], line: usize) -> Result<FrameMeta> {
    if fields.len() != 5 {
        return Err(Error::parse(
            line,
            format!("frame record needs 4 fields, got {}", fields.len() - 1),
        ));
    }
    let frame_type: FrameType = fields[3]
        .parse()
        .map_err(|e: String| Error::parse(line, e))?;
    let direct_refs = if fields[4] == "-" {
        Vec::new()
    } else {
        fields[4]
            .split(',')
            .map(|r| num(r, "reference", line))
            .collect::<Result<_>>()?
    };
    Ok(FrameMeta {
        decode_index: num(fields[1], "decode_index", line)?,
        display_index: num(fields[2], "display_index", line)?,
        frame_type,
        direct_refs,
    })
}

fn parse_packet(fields: &[&str], line: usize) -> Result<PacketRecord> {
    if fields.len() != 6 {
        return Err(Error::parse(
            line,
            format!("packet record needs 5 fields, got {}", fields.len() - 1),
        ));
    }
    let lost = match fields[5] {
        "0" => false,
        "1" => true,
        other => {
            return Err(Error::parse(
                line,
                format!("lost flag must be 0 or 1, got `{other}`"),
            ))
        }
    };
    Ok(PacketRecord {
        global_index: num(fields[1], "global_index", line)?,
        frame_decode_index: num(fields[2], "frame_decode_index", line)?,
        index_in_frame: num(fields[3], "index_in_frame", line)?,
        size_octets: num(fields[4], "size_octets", line)?,
        lost,
    })
}

fn frame_line(out: &mut String, f: &FrameMeta) {
    let refs = if f.direct_refs.is_empty() {
        "-".to_string()
    } else {
        f.direct_refs
            .iter()
            .map(|r| r.to_string())
            .collect::<Vec<_>>()
            .join(",")
    };
    let _ = writeln!(
        out,
        "frame {} {} {} {}",
        f.decode_index, f.display_index, f.frame_type, refs
    );
}

fn packet_line(out: &mut String, p: &PacketRecord) {
    let _ = writeln!(
        out,
        "packet {} {} {} {} {}",
        p.global_index,
        p.frame_decode_index,
        p.index_in_frame,
        p.size_octets,
        u8::from(p.lost)
    );
}

/// Canonical text for the trace (no comments).
pub fn serialize_trace(trace: &StreamTrace) -> String {
    let mut out = String::new();
    let mut by_frame: Vec<Vec<&PacketRecord>> = vec![Vec::new(); trace.frames.len()];
    let mut orphans = Vec::new();
    let slot: HashMap<usize, usize> = trace
        .frames
        .iter()
        .enumerate()
        .map(|(i, f)| (f.decode_index, i))
        .collect();
    for p in &trace.packets {
        match slot.get(&p.frame_decode_index) {
            Some(&i) => by_frame[i].push(p),
            None => orphans.push(p),
        }
    }
    for (f, packets) in trace.frames.iter().zip(&by_frame) {
        frame_line(&mut out, f);
        for p in packets {
            packet_line(&mut out, p);
        }
    }
    for p in orphans {
        packet_line(&mut out, p);
    }
    out
}

/// Canonical text preceded by warnings and extra header lines as comments.
pub fn serialize_trace_with_header(trace: &StreamTrace, header: &[String]) -> String {
    let mut out = String::new();
    for line in header {
        let _ = writeln!(out, "# {line}");
    }
    for w in &trace.warnings {
        let _ = writeln!(out, "# warning: {w}");
    }
    out.push_str(&serialize_trace(trace));
    out
}
