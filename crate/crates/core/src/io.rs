//! Plain-text event streams.
//!
//! `TextV1` holds one event per line as `t x y p`: `t` in decimal seconds,
//! `p` is 1 for ON and 0 for OFF. Fields are whitespace separated and lines
//! starting with `#` are comments. Writers print timestamps with nine
//! decimals. An optional fifth column marks generated events (`1`) and is
//! honoured on read.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::event::{Event, EventWindow, Geometry, Origin, Polarity};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StreamFormat {
    #[default]
    TextV1,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct WriteOptions {
    /// Append a fifth column: 0 = original, 1 = generated.
    pub origin_column: bool,
}

pub fn read_events<R: BufRead>(
    source: R,
    format: StreamFormat,
    geometry: Geometry,
) -> Result<EventWindow> {
    match format {
        StreamFormat::TextV1 => read_text_v1(source, geometry),
    }
}

fn read_text_v1<R: BufRead>(source: R, geometry: Geometry) -> Result<EventWindow> {
    let mut events = Vec::new();
    for (idx, line) in source.lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        events.push(parse_line(trimmed, lineno, geometry)?);
    }
    Ok(EventWindow::new(events, geometry))
}

fn parse_line(line: &str, lineno: usize, geometry: Geometry) -> Result<Event> {
    let malformed = |reason: &str| Error::Parse {
        line: lineno,
        reason: reason.to_string(),
    };
    let fields: Vec<&str> = line.split_whitespace().collect();
    if fields.len() != 4 && fields.len() != 5 {
        return Err(malformed(&format!(
            "expected 4 or 5 fields, found {}",
            fields.len()
        )));
    }
    let t: f64 = fields[0]
        .parse()
        .map_err(|_| malformed(&format!("bad timestamp {:?}", fields[0])))?;
    if !t.is_finite() || t < 0.0 {
        return Err(Error::InvalidTimestamp { line: lineno });
    }
    let x: i64 = fields[1]
        .parse()
        .map_err(|_| malformed(&format!("bad x {:?}", fields[1])))?;
    let y: i64 = fields[2]
        .parse()
        .map_err(|_| malformed(&format!("bad y {:?}", fields[2])))?;
    if !geometry.contains(x, y) {
        return Err(Error::OutOfGeometry {
            line: lineno,
            x,
            y,
            width: geometry.width,
            height: geometry.height,
        });
    }
    let polarity = fields[3]
        .parse::<u8>()
        .ok()
        .and_then(Polarity::from_bit)
        .ok_or_else(|| malformed(&format!("bad polarity {:?}", fields[3])))?;
    let origin = match fields.get(4) {
        None | Some(&"0") => Origin::Original,
        Some(&"1") => Origin::Generated,
        Some(other) => return Err(malformed(&format!("bad origin flag {other:?}"))),
    };
    Ok(Event {
        x: x as u16,
        y: y as u16,
        t,
        polarity,
        origin,
    })
}

pub fn write_events<W: Write>(
    sink: W,
    window: &EventWindow,
    format: StreamFormat,
    options: WriteOptions,
) -> Result<()> {
    write_event_slice(sink, window.events(), format, options)
}

/// Writes already time-sorted events.
pub fn write_event_slice<W: Write>(
    mut sink: W,
    events: &[Event],
    format: StreamFormat,
    options: WriteOptions,
) -> Result<()> {
    match format {
        StreamFormat::TextV1 => {
            for e in events {
                write!(sink, "{:.9} {} {} {}", e.t, e.x, e.y, e.polarity.bit())?;
                if options.origin_column {
                    let flag = match e.origin {
                        Origin::Original => 0,
                        Origin::Generated => 1,
                    };
                    write!(sink, " {flag}")?;
                }
                sink.write_all(b"\n")?;
            }
        }
    }
    sink.flush()?;
    Ok(())
}

/// Convenience wrapper returning the encoded bytes.
pub fn encode_events(window: &EventWindow, options: WriteOptions) -> Vec<u8> {
    let mut buf = Vec::new();
    write_events(&mut buf, window, StreamFormat::TextV1, options)
        .expect("writing to a Vec cannot fail");
    buf
}
