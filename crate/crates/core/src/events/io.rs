//! EVT1 binary and `t,x,y,p` CSV event files.
//!
//! EVT1 (little-endian, packed): `"EVT1"`, u16 width, u16 height, u64 count,
//! then `count` records of u64 t, u16 x, u16 y, i8 p.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

use super::{Event, EventStream};

pub const EVT_MAGIC: &[u8; 4] = b"EVT1";
const RECORD_LEN: usize = 13;

pub fn write_evt1<W: Write>(stream: &EventStream, mut w: W) -> Result<()> {
    let wrap = |e| Error::io("<evt1 stream>", e);
    w.write_all(EVT_MAGIC).map_err(wrap)?;
    w.write_all(&stream.width().to_le_bytes()).map_err(wrap)?;
    w.write_all(&stream.height().to_le_bytes()).map_err(wrap)?;
    w.write_all(&(stream.len() as u64).to_le_bytes())
        .map_err(wrap)?;
    let mut rec = [0u8; RECORD_LEN];
    for e in stream.events() {
        rec[..8].copy_from_slice(&e.t.to_le_bytes());
        rec[8..10].copy_from_slice(&e.x.to_le_bytes());
        rec[10..12].copy_from_slice(&e.y.to_le_bytes());
        rec[12] = e.p as u8;
        w.write_all(&rec).map_err(wrap)?;
    }
    Ok(())
}

pub fn read_evt1<R: Read>(mut r: R) -> Result<EventStream> {
    let short = |_| Error::format("EVT1", "truncated stream");
    let mut head = [0u8; 16];
    r.read_exact(&mut head).map_err(short)?;
    if &head[..4] != EVT_MAGIC {
        return Err(Error::format("EVT1", "bad magic"));
    }
    let width = u16::from_le_bytes([head[4], head[5]]);
    let height = u16::from_le_bytes([head[6], head[7]]);
    let count = u64::from_le_bytes(head[8..16].try_into().unwrap());
    let count = usize::try_from(count).map_err(|_| Error::format("EVT1", "count too large"))?;
    let mut payload = Vec::new();
    r.read_to_end(&mut payload)
        .map_err(|e| Error::io("<evt1 stream>", e))?;
    if payload.len() != count * RECORD_LEN {
        return Err(Error::format(
            "EVT1",
            format!(
                "header declares {count} events, payload holds {} bytes",
                payload.len()
            ),
        ));
    }
    let events = payload
        .chunks_exact(RECORD_LEN)
        .map(|c| Event {
            t: u64::from_le_bytes(c[..8].try_into().unwrap()),
            x: u16::from_le_bytes([c[8], c[9]]),
            y: u16::from_le_bytes([c[10], c[11]]),
            p: c[12] as i8,
        })
        .collect::<Vec<_>>();
    if events.windows(2).any(|p| p[0].t > p[1].t) {
        return Err(Error::format("EVT1", "events not sorted by timestamp"));
    }
    EventStream::new(events, width, height)
}

/// Writes `t,x,y,p` lines after a `#` header.
pub fn write_csv<W: Write>(stream: &EventStream, mut w: W) -> Result<()> {
    let wrap = |e| Error::io("<csv stream>", e);
    writeln!(
        w,
        "# t,x,y,p width={} height={}",
        stream.width(),
        stream.height()
    )
    .map_err(wrap)?;
    for e in stream.events() {
        writeln!(w, "{},{},{},{}", e.t, e.x, e.y, e.p).map_err(wrap)?;
    }
    Ok(())
}

/// Reads `t,x,y,p` lines; lines starting with `#` and blank lines are skipped.
pub fn read_csv<R: BufRead>(r: R, width: u16, height: u16) -> Result<EventStream> {
    let mut events = Vec::new();
    for (lineno, line) in r.lines().enumerate() {
        let line = line.map_err(|e| Error::io("<csv stream>", e))?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = || Error::format("CSV", format!("line {}: {line:?}", lineno + 1));
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let [t, x, y, p] = fields[..] else {
            return Err(bad());
        };
        events.push(Event {
            t: t.parse().map_err(|_| bad())?,
            x: x.parse().map_err(|_| bad())?,
            y: y.parse().map_err(|_| bad())?,
            p: p.parse().map_err(|_| bad())?,
        });
    }
    EventStream::new(events, width, height)
}

pub fn save_evt1(stream: &EventStream, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_evt1(stream, &mut w)?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_evt1(path: &Path) -> Result<EventStream> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_evt1(BufReader::new(file))
}

pub fn save_csv(stream: &EventStream, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_csv(stream, &mut w)?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_csv(path: &Path, width: u16, height: u16) -> Result<EventStream> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(BufReader::new(file), width, height)
}
