//! Tag file formats.
//!
//! Binary: the 4-byte magic `FTT1`, then 9-byte little-endian records
//! (1 byte channel 1..=4, 8 bytes unsigned picosecond timestamp).
//! CSV: header `channel,t_ps`, one tag per line.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

use super::TimeTag;

pub const MAGIC: &[u8; 4] = b"FTT1";
const RECORD_LEN: usize = 9;

#[derive(Debug, Error)]
pub enum TagFileError {
    #[error("not a tag file")]
    NotATagFile,
    #[error("truncated record at byte offset {offset}")]
    Truncated { offset: u64 },
    #[error("invalid channel {channel} at byte offset {offset}")]
    BadChannel { offset: u64, channel: u8 },
    #[error("malformed header at byte offset {offset}: expected `channel,t_ps`")]
    BadHeader { offset: u64 },
    #[error("malformed record at byte offset {offset}: {message}")]
    Malformed { offset: u64, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TagFormat {
    Binary,
    Csv,
}

impl TagFormat {
    pub fn extension(self) -> &'static str {
        match self {
            TagFormat::Binary => "ftt",
            TagFormat::Csv => "csv",
        }
    }
}

pub fn write_tags<W: Write>(writer: W, tags: &[TimeTag], format: TagFormat) -> Result<(), TagFileError> {
    let mut w = BufWriter::new(writer);
    match format {
        TagFormat::Binary => {
            w.write_all(MAGIC)?;
            for t in tags {
                w.write_all(&[t.channel])?;
                w.write_all(&t.t_ps.to_le_bytes())?;
            }
        }
        TagFormat::Csv => {
            let mut out = csv::Writer::from_writer(&mut w);
            out.write_record(["channel", "t_ps"]).map_err(csv_io)?;
            for t in tags {
                out.write_record([t.channel.to_string(), t.t_ps.to_string()]).map_err(csv_io)?;
            }
            out.flush()?;
        }
    }
    w.flush()?;
    Ok(())
}

fn csv_io(e: csv::Error) -> TagFileError {
    TagFileError::Io(e.into())
}

pub fn read_tags<R: Read>(mut reader: R, format: TagFormat) -> Result<Vec<TimeTag>, TagFileError> {
    let mut bytes = Vec::new();
    reader.read_to_end(&mut bytes)?;
    match format {
        TagFormat::Binary => parse_binary(&bytes),
        TagFormat::Csv => parse_csv(&bytes),
    }
}

fn check_channel(channel: u8, offset: u64) -> Result<(), TagFileError> {
    if (1..=4).contains(&channel) {
        Ok(())
    } else {
        Err(TagFileError::BadChannel { offset, channel })
    }
}

fn parse_binary(bytes: &[u8]) -> Result<Vec<TimeTag>, TagFileError> {
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        return Err(TagFileError::NotATagFile);
    }
    let body = &bytes[MAGIC.len()..];
    let mut tags = Vec::with_capacity(body.len() / RECORD_LEN);
    for (i, rec) in body.chunks(RECORD_LEN).enumerate() {
        let offset = (MAGIC.len() + i * RECORD_LEN) as u64;
        if rec.len() < RECORD_LEN {
            return Err(TagFileError::Truncated { offset });
        }
        check_channel(rec[0], offset)?;
        let t_ps = u64::from_le_bytes(rec[1..].try_into().expect("8-byte slice"));
        tags.push(TimeTag { channel: rec[0], t_ps });
    }
    Ok(tags)
}

fn parse_csv(bytes: &[u8]) -> Result<Vec<TimeTag>, TagFileError> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(bytes);
    let header_ok = reader.headers().map(|h| h.iter().eq(["channel", "t_ps"])).unwrap_or(false);
    if !header_ok {
        return Err(TagFileError::BadHeader { offset: 0 });
    }
    let mut tags = Vec::new();
    let mut record = csv::StringRecord::new();
    loop {
        let offset = reader.position().byte();
        match reader.read_record(&mut record) {
            Ok(false) => break,
            Ok(true) => {}
            Err(e) => {
                let offset = e.position().map_or(offset, |p| p.byte());
                return Err(TagFileError::Malformed { offset, message: e.to_string() });
            }
        }
        let parse = |field: usize| -> Result<u64, TagFileError> {
            record
                .get(field)
                .ok_or_else(|| TagFileError::Malformed { offset, message: "missing field".into() })?
                .trim()
                .parse::<u64>()
                .map_err(|e| TagFileError::Malformed { offset, message: e.to_string() })
        };
        let channel =
            u8::try_from(parse(0)?).map_err(|e| TagFileError::Malformed { offset, message: e.to_string() })?;
        check_channel(channel, offset)?;
        tags.push(TimeTag { channel, t_ps: parse(1)? });
    }
    Ok(tags)
}

/// Parses either format, chosen by content: `FTT1` magic or a `channel,t_ps` header.
pub fn parse_any(bytes: &[u8]) -> Result<Vec<TimeTag>, TagFileError> {
    if bytes.starts_with(MAGIC) {
        parse_binary(bytes)
    } else if bytes.starts_with(b"channel") {
        parse_csv(bytes)
    } else {
        Err(TagFileError::NotATagFile)
    }
}

pub fn write_tags_path(path: impl AsRef<Path>, tags: &[TimeTag], format: TagFormat) -> Result<(), TagFileError> {
    write_tags(File::create(path)?, tags, format)
}

pub fn read_tags_path(path: impl AsRef<Path>, format: TagFormat) -> Result<Vec<TimeTag>, TagFileError> {
    read_tags(BufReader::new(File::open(path)?), format)
}

/// Reads a tag file of either format.
pub fn read_tags_any(path: impl AsRef<Path>) -> Result<Vec<TimeTag>, TagFileError> {
    parse_any(&std::fs::read(path)?)
}
