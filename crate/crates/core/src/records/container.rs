//! On-disk record container.
//!
//! A record is a directory holding:
//!
//! * `meta`: whitespace-separated lines `record <id>`, `epoch_length 30` and
//!   one `channel <KIND> <rate_hz> <unit>` line per channel;
//! * `<KIND>.f32`: the channel samples as little-endian 32-bit floats;
//! * `stages`: one stage code `0..=4` per line, one line per 30 s epoch.
//!
//! Normalization statistics are a text file of `<KIND> <mean> <std>` lines,
//! numbers printed with 9 significant digits.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::{Channel, ChannelKind, NormalizationStats, PsgRecord, StageLabel, EPOCH_SECONDS};
use crate::error::{Error, Result};

const META_FILE: &str = "meta";
const STAGES_FILE: &str = "stages";

fn channel_file(kind: ChannelKind) -> String {
    format!("{}.f32", kind.name())
}

struct ChannelMeta {
    kind: ChannelKind,
    rate: f64,
    unit: String,
}

fn parse_meta(path: &Path, text: &str) -> Result<(String, Vec<ChannelMeta>)> {
    let mut id = None;
    let mut epoch_length = None;
    let mut channels = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let bad = |detail: String| Error::format("meta", path, format!("line {}: {detail}", n + 1));
        match fields[0] {
            "record" if fields.len() == 2 => id = Some(fields[1].to_string()),
            "epoch_length" if fields.len() == 2 => {
                let len: usize = fields[1]
                    .parse()
                    .map_err(|_| bad(format!("bad epoch length {:?}", fields[1])))?;
                epoch_length = Some(len);
            }
            "channel" if fields.len() == 4 => {
                let kind: ChannelKind = fields[1].parse().map_err(bad)?;
                let rate: f64 = fields[2]
                    .parse()
                    .map_err(|_| bad(format!("bad sample rate {:?}", fields[2])))?;
                if channels.iter().any(|c: &ChannelMeta| c.kind == kind) {
                    return Err(bad(format!("duplicate channel {kind}")));
                }
                channels.push(ChannelMeta {
                    kind,
                    rate,
                    unit: fields[3].to_string(),
                });
            }
            _ => return Err(bad(format!("unrecognized entry {line:?}"))),
        }
    }
    let id = id.ok_or_else(|| Error::format("meta", path, "missing `record` line"))?;
    match epoch_length {
        Some(EPOCH_SECONDS) => {}
        Some(other) => {
            return Err(Error::format(
                "meta",
                path,
                format!("epoch length {other} s is unsupported, expected {EPOCH_SECONDS}"),
            ))
        }
        None => return Err(Error::format("meta", path, "missing `epoch_length` line")),
    }
    Ok((id, channels))
}

fn read_f32_file(path: &Path) -> Result<Vec<f64>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() % 4 != 0 {
        return Err(Error::format(
            "sample file",
            path,
            format!("{} bytes is not a whole number of f32 samples", bytes.len()),
        ));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
        .collect())
}

fn parse_stages(text: &str) -> Result<Vec<StageLabel>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let code: i64 = line.parse().map_err(|_| Error::BadAnnotation {
            line: n + 1,
            detail: format!("not an integer: {line:?}"),
        })?;
        let label = usize::try_from(code)
            .ok()
            .and_then(StageLabel::from_index)
            .ok_or_else(|| Error::BadAnnotation {
                line: n + 1,
                detail: format!("stage code {code} outside 0..=4"),
            })?;
        out.push(label);
    }
    Ok(out)
}

/// Reads a record directory and validates channel/annotation alignment.
pub fn load_record(dir: impl AsRef<Path>) -> Result<PsgRecord> {
    let dir = dir.as_ref();
    let meta_path = dir.join(META_FILE);
    let meta = fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
    let (id, metas) = parse_meta(&meta_path, &meta)?;

    let mut channels = BTreeMap::new();
    for m in metas {
        let path = dir.join(channel_file(m.kind));
        if !path.exists() {
            return Err(Error::ChannelAbsent(format!(
                "{} declared in {} but {} is missing",
                m.kind,
                meta_path.display(),
                path.display()
            )));
        }
        let samples = read_f32_file(&path)?;
        channels.insert(m.kind, Channel::new(m.rate, m.unit, samples));
    }

    let stages_path = dir.join(STAGES_FILE);
    let stages = fs::read_to_string(&stages_path).map_err(|e| Error::io(&stages_path, e))?;
    let annotations = parse_stages(&stages)?;

    PsgRecord::new(id, channels, annotations)
}

/// Writes a record directory. Samples are stored as f32.
pub fn save_record(record: &PsgRecord, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let mut meta = format!("record {}\nepoch_length {}\n", record.id, EPOCH_SECONDS);
    for (kind, ch) in &record.channels {
        writeln!(meta, "channel {} {} {}", kind, ch.rate, ch.unit).unwrap();
    }
    let meta_path = dir.join(META_FILE);
    fs::write(&meta_path, meta).map_err(|e| Error::io(&meta_path, e))?;

    for (kind, ch) in &record.channels {
        let path = dir.join(channel_file(*kind));
        let mut bytes = Vec::with_capacity(ch.samples.len() * 4);
        for &v in &ch.samples {
            bytes.extend_from_slice(&(v as f32).to_le_bytes());
        }
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
    }

    let mut stages = String::with_capacity(record.annotations.len() * 2);
    for s in &record.annotations {
        writeln!(stages, "{}", s.index()).unwrap();
    }
    let stages_path = dir.join(STAGES_FILE);
    fs::write(&stages_path, stages).map_err(|e| Error::io(&stages_path, e))
}

/// Record directories directly below `root`, sorted by name.
pub fn list_records(root: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let root = root.as_ref();
    let mut dirs = Vec::new();
    for entry in fs::read_dir(root).map_err(|e| Error::io(root, e))? {
        let entry = entry.map_err(|e| Error::io(root, e))?;
        let path = entry.path();
        if path.join(META_FILE).is_file() {
            dirs.push(path);
        }
    }
    dirs.sort();
    Ok(dirs)
}

pub fn save_stats(stats: &NormalizationStats, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut text = String::new();
    for (kind, (mean, std)) in ChannelKind::MODEL_INPUTS.iter().zip(stats.iter()) {
        writeln!(text, "{} {:.8e} {:.8e}", kind, mean, std).unwrap();
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_stats(path: impl AsRef<Path>) -> Result<NormalizationStats> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut entries = [None; 5];
    for (n, line) in text.lines().enumerate() {
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        let bad = |d: String| Error::format("stats file", path, format!("line {}: {d}", n + 1));
        if fields.len() != 3 {
            return Err(bad(format!("expected `channel mean std`, got {line:?}")));
        }
        let kind: ChannelKind = fields[0].parse().map_err(bad)?;
        let col = kind
            .column()
            .ok_or_else(|| bad(format!("{kind} is not a model input")))?;
        let mean: f64 = fields[1].parse().map_err(|_| bad(format!("bad mean {:?}", fields[1])))?;
        let std: f64 = fields[2].parse().map_err(|_| bad(format!("bad std {:?}", fields[2])))?;
        entries[col] = Some((mean, std));
    }
    let mut means = [0.0; 5];
    let mut stds = [0.0; 5];
    for (col, e) in entries.iter().enumerate() {
        let (m, s) = e.ok_or_else(|| {
            Error::ChannelAbsent(format!(
                "{} missing from {}",
                ChannelKind::MODEL_INPUTS[col],
                path.display()
            ))
        })?;
        means[col] = m;
        stds[col] = s;
    }
    NormalizationStats::new(means, stds)
}
