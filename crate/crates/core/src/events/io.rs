//! Event file formats.
//!
//! `.evb` layout, all integers little-endian:
//!
//! ```text
//! [16] magic "EVOC0001" followed by 8 zero bytes
//! [2]  width  u16
//! [2]  height u16
//! [8]  record count u64
//! then per record (14 bytes, packed):
//! [8] t_us u64 | [2] x u16 | [2] y u16 | [1] p i8 | [1] pad = 0
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;

use super::{EventRecord, EventStream, StreamMetadata};
use crate::error::{Error, Result};

pub const EVB_MAGIC: &[u8; 8] = b"EVOC0001";
pub const EVB_HEADER_LEN: usize = 16 + 2 + 2 + 8;
pub const EVB_RECORD_LEN: usize = 8 + 2 + 2 + 1 + 1;

pub fn encode_evb(stream: &EventStream) -> Vec<u8> {
    let mut out = Vec::with_capacity(EVB_HEADER_LEN + stream.len() * EVB_RECORD_LEN);
    out.extend_from_slice(EVB_MAGIC);
    out.extend_from_slice(&[0u8; 8]);
    out.extend_from_slice(&(stream.width as u16).to_le_bytes());
    out.extend_from_slice(&(stream.height as u16).to_le_bytes());
    out.extend_from_slice(&(stream.len() as u64).to_le_bytes());
    for e in &stream.records {
        out.extend_from_slice(&e.t.to_le_bytes());
        out.extend_from_slice(&e.x.to_le_bytes());
        out.extend_from_slice(&e.y.to_le_bytes());
        out.push(e.p as u8);
        out.push(0);
    }
    out
}

/// Decodes and validates an `.evb` buffer. The stream span is taken from the
/// first and last records since the format does not carry it.
pub fn decode_evb(bytes: &[u8]) -> Result<EventStream> {
    let bad = |detail: String| Error::format("evb", detail);
    if bytes.len() < EVB_HEADER_LEN {
        return Err(bad(format!("{} bytes is shorter than the header", bytes.len())));
    }
    if &bytes[..8] != EVB_MAGIC || bytes[8..16].iter().any(|&b| b != 0) {
        return Err(bad("bad magic".into()));
    }
    let width = u16::from_le_bytes([bytes[16], bytes[17]]) as usize;
    let height = u16::from_le_bytes([bytes[18], bytes[19]]) as usize;
    let count = u64::from_le_bytes(bytes[20..28].try_into().expect("8 bytes"));
    let body = &bytes[EVB_HEADER_LEN..];
    if count.checked_mul(EVB_RECORD_LEN as u64) != Some(body.len() as u64) {
        return Err(bad(format!("header says {count} records, body holds {} bytes", body.len())));
    }
    let mut records = Vec::with_capacity(count as usize);
    for (i, r) in body.chunks_exact(EVB_RECORD_LEN).enumerate() {
        if r[13] != 0 {
            return Err(bad(format!("record {i} has non-zero padding")));
        }
        records.push(EventRecord {
            t: u64::from_le_bytes(r[0..8].try_into().expect("8 bytes")),
            x: u16::from_le_bytes([r[8], r[9]]),
            y: u16::from_le_bytes([r[10], r[11]]),
            p: r[12] as i8,
        });
    }
    let t_begin = records.first().map_or(0, |e| e.t);
    let t_end = records.last().map_or(0, |e| e.t);
    let stream = EventStream {
        width,
        height,
        records,
        t_begin,
        t_end,
        metadata: StreamMetadata::default(),
    };
    stream.validate()?;
    Ok(stream)
}

pub fn write_evb(path: impl AsRef<Path>, stream: &EventStream) -> Result<()> {
    let mut file = fs::File::create(path)?;
    file.write_all(&encode_evb(stream))?;
    file.sync_all()?;
    Ok(())
}

pub fn read_evb(path: impl AsRef<Path>) -> Result<EventStream> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    decode_evb(&fs::read(path)?)
}

/// CSV form with header `t_us,x,y,p`.
pub fn write_csv(path: impl AsRef<Path>, stream: &EventStream) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(csv_error)?;
    writer.write_record(["t_us", "x", "y", "p"]).map_err(csv_error)?;
    for e in &stream.records {
        writer
            .write_record([e.t.to_string(), e.x.to_string(), e.y.to_string(), e.p.to_string()])
            .map_err(csv_error)?;
    }
    writer.flush()?;
    Ok(())
}

/// Reads the CSV form. Frame dimensions are not part of the format.
pub fn read_csv(path: impl AsRef<Path>, width: usize, height: usize) -> Result<EventStream> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let mut reader = csv::Reader::from_path(path).map_err(csv_error)?;
    let mut records = Vec::new();
    for row in reader.deserialize::<(u64, u16, u16, i8)>() {
        let (t, x, y, p) = row.map_err(csv_error)?;
        records.push(EventRecord { t, x, y, p });
    }
    let t_begin = records.iter().map(|e| e.t).min().unwrap_or(0);
    let t_end = records.iter().map(|e| e.t).max().unwrap_or(0);
    EventStream::from_unsorted(width, height, records, t_begin, t_end)
}

fn csv_error(e: csv::Error) -> Error {
    Error::format("event csv", e.to_string())
}
