//! Event stream files.
//!
//! CSV: header `x,y,t,p`, one event per line in decimal.
//!
//! Packed binary (little-endian, no padding):
//!
//! ```text
//! magic   "EVPC"
//! version u8 = 1
//! width   u16
//! height  u16
//! count   u64
//! count x { x: u16, y: u16, t: u64, p: u8 }
//! ```
//!
//! Camera geometry lives in a `key=value` sidecar next to the stream (same
//! path, extension `cam`) with `width`, `height` and `p00`..`p23`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use super::{validate_stream, CameraGeometry, Event, DEFAULT_HEIGHT, DEFAULT_WIDTH};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"EVPC";
const VERSION: u8 = 1;
const HEADER_LEN: usize = 4 + 1 + 2 + 2 + 8;
const RECORD_LEN: usize = 2 + 2 + 8 + 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamFormat {
    Csv,
    Binary,
}

impl StreamFormat {
    /// `.csv` is CSV, anything else packed binary.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => StreamFormat::Csv,
            _ => StreamFormat::Binary,
        }
    }
}

/// Events of one camera plus the sensor header.
#[derive(Debug, Clone, PartialEq)]
pub struct EventStream {
    pub events: Vec<Event>,
    pub width: u32,
    pub height: u32,
    /// Full geometry, present when a sidecar was found.
    pub camera: Option<CameraGeometry>,
}

fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("cam")
}

pub fn read_event_stream(path: &Path, format: StreamFormat) -> Result<EventStream> {
    let sidecar = sidecar_path(path);
    let camera = if sidecar.exists() {
        Some(read_camera(&sidecar)?)
    } else {
        None
    };
    let stream = match format {
        StreamFormat::Csv => {
            let (width, height) = camera
                .as_ref()
                .map_or((DEFAULT_WIDTH, DEFAULT_HEIGHT), |c| (c.width, c.height));
            let file = File::open(path).map_err(|e| Error::io(path, e))?;
            let events = parse_csv(BufReader::new(file), path)?;
            EventStream {
                events,
                width,
                height,
                camera,
            }
        }
        StreamFormat::Binary => {
            let mut bytes = Vec::new();
            File::open(path)
                .and_then(|mut f| f.read_to_end(&mut bytes))
                .map_err(|e| Error::io(path, e))?;
            let (width, height, events) = decode_binary(&bytes)?;
            if let Some(cam) = &camera {
                if cam.width != width || cam.height != height {
                    return Err(Error::Invalid(format!(
                        "sidecar size {}x{} disagrees with stream header {width}x{height}",
                        cam.width, cam.height
                    )));
                }
            }
            EventStream {
                events,
                width,
                height,
                camera,
            }
        }
    };
    validate_stream(&stream.events, stream.width, stream.height)?;
    Ok(stream)
}

fn parse_csv<R: BufRead>(reader: R, path: &Path) -> Result<Vec<Event>> {
    let mut events = Vec::new();
    let loc = |line: usize| format!("{}:{}", path.display(), line);
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if i == 0 && line.starts_with(|c: char| c.is_ascii_alphabetic()) {
            if line.replace(' ', "") != "x,y,t,p" {
                return Err(Error::parse(loc(lineno), format!("unexpected header {line:?}")));
            }
            continue;
        }
        let mut fields = line.split(',').map(str::trim);
        let mut next = |name: &str| {
            fields
                .next()
                .ok_or_else(|| Error::parse(loc(lineno), format!("missing field {name}")))
        };
        let x = next("x")?;
        let y = next("y")?;
        let t = next("t")?;
        let p = next("p")?;
        if fields.next().is_some() {
            return Err(Error::parse(loc(lineno), "too many fields"));
        }
        let bad = |name: &str, v: &str| Error::parse(loc(lineno), format!("bad {name} {v:?}"));
        events.push(Event {
            x: x.parse().map_err(|_| bad("x", x))?,
            y: y.parse().map_err(|_| bad("y", y))?,
            t: t.parse().map_err(|_| bad("t", t))?,
            p: p.parse().map_err(|_| bad("p", p))?,
        });
    }
    Ok(events)
}

fn decode_binary(bytes: &[u8]) -> Result<(u32, u32, Vec<Event>)> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::parse("offset 0", "truncated header"));
    }
    if &bytes[0..4] != MAGIC {
        return Err(Error::parse("offset 0", "bad magic, expected EVPC"));
    }
    if bytes[4] != VERSION {
        return Err(Error::parse(
            "offset 4",
            format!("unsupported version {}", bytes[4]),
        ));
    }
    let width = u16::from_le_bytes([bytes[5], bytes[6]]);
    let height = u16::from_le_bytes([bytes[7], bytes[8]]);
    let count = u64::from_le_bytes(bytes[9..17].try_into().unwrap());
    let body = &bytes[HEADER_LEN..];
    let expected = (count as usize).checked_mul(RECORD_LEN);
    if expected != Some(body.len()) {
        return Err(Error::parse(
            format!("offset {HEADER_LEN}"),
            format!(
                "header declares {count} records but body holds {} bytes",
                body.len()
            ),
        ));
    }
    let events = body
        .chunks_exact(RECORD_LEN)
        .map(|r| Event {
            x: u16::from_le_bytes([r[0], r[1]]),
            y: u16::from_le_bytes([r[2], r[3]]),
            t: u64::from_le_bytes(r[4..12].try_into().unwrap()),
            p: r[12],
        })
        .collect();
    Ok((width.into(), height.into(), events))
}

pub fn write_event_stream(path: &Path, format: StreamFormat, stream: &EventStream) -> Result<()> {
    validate_stream(&stream.events, stream.width, stream.height)?;
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    match format {
        StreamFormat::Csv => {
            writeln!(w, "x,y,t,p").map_err(io)?;
            for e in &stream.events {
                writeln!(w, "{},{},{},{}", e.x, e.y, e.t, e.p).map_err(io)?;
            }
        }
        StreamFormat::Binary => {
            let width = u16::try_from(stream.width)
                .map_err(|_| Error::Invalid("width does not fit u16".into()))?;
            let height = u16::try_from(stream.height)
                .map_err(|_| Error::Invalid("height does not fit u16".into()))?;
            w.write_all(MAGIC).map_err(io)?;
            w.write_all(&[VERSION]).map_err(io)?;
            w.write_all(&width.to_le_bytes()).map_err(io)?;
            w.write_all(&height.to_le_bytes()).map_err(io)?;
            w.write_all(&(stream.events.len() as u64).to_le_bytes())
                .map_err(io)?;
            let mut rec = [0u8; RECORD_LEN];
            for e in &stream.events {
                rec[0..2].copy_from_slice(&e.x.to_le_bytes());
                rec[2..4].copy_from_slice(&e.y.to_le_bytes());
                rec[4..12].copy_from_slice(&e.t.to_le_bytes());
                rec[12] = e.p;
                w.write_all(&rec).map_err(io)?;
            }
        }
    }
    w.flush().map_err(io)?;
    if let Some(cam) = &stream.camera {
        write_camera(&sidecar_path(path), cam)?;
    }
    Ok(())
}

pub fn read_camera(path: &Path) -> Result<CameraGeometry> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut width = None;
    let mut height = None;
    let mut projection = [[None::<f64>; 4]; 3];
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let loc = format!("{}:{}", path.display(), i + 1);
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::parse(&loc, "expected key=value"))?;
        let (key, value) = (key.trim(), value.trim());
        let num = |v: &str| -> Result<f64> {
            v.parse()
                .map_err(|_| Error::parse(&loc, format!("bad number {v:?}")))
        };
        match key {
            "width" => width = Some(num(value)? as u32),
            "height" => height = Some(num(value)? as u32),
            k if k.len() == 3 && k.starts_with('p') => {
                let r = k.as_bytes()[1].wrapping_sub(b'0') as usize;
                let c = k.as_bytes()[2].wrapping_sub(b'0') as usize;
                if r >= 3 || c >= 4 {
                    return Err(Error::parse(&loc, format!("unknown key {k:?}")));
                }
                projection[r][c] = Some(num(value)?);
            }
            k => return Err(Error::parse(&loc, format!("unknown key {k:?}"))),
        }
    }
    let loc = path.display().to_string();
    let mut p = [[0.0; 4]; 3];
    for r in 0..3 {
        for c in 0..4 {
            p[r][c] = projection[r][c]
                .ok_or_else(|| Error::parse(&loc, format!("missing p{r}{c}")))?;
        }
    }
    CameraGeometry::new(
        p,
        width.ok_or_else(|| Error::parse(&loc, "missing width"))?,
        height.ok_or_else(|| Error::parse(&loc, "missing height"))?,
    )
}

pub fn write_camera(path: &Path, cam: &CameraGeometry) -> Result<()> {
    let mut out = format!("width={}\nheight={}\n", cam.width, cam.height);
    for (r, row) in cam.projection.iter().enumerate() {
        for (c, v) in row.iter().enumerate() {
            // {:?} on f64 prints the shortest string that round-trips
            out.push_str(&format!("p{r}{c}={v:?}\n"));
        }
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn stream(events: Vec<Event>) -> EventStream {
        EventStream {
            events,
            width: DEFAULT_WIDTH,
            height: DEFAULT_HEIGHT,
            camera: None,
        }
    }

    #[test]
    fn csv_line_maps_fields() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ev.csv");
        std::fs::write(&path, "x,y,t,p\n12,34,1000,1\n").unwrap();
        let s = read_event_stream(&path, StreamFormat::Csv).unwrap();
        assert_eq!(s.events, vec![Event::new(12, 34, 1000, 1)]);
    }

    #[test]
    fn empty_file_is_empty_stream() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ev.csv");
        std::fs::write(&path, "").unwrap();
        assert!(read_event_stream(&path, StreamFormat::Csv)
            .unwrap()
            .events
            .is_empty());
    }

    #[test]
    fn decreasing_timestamp_is_ordering_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ev.csv");
        std::fs::write(&path, "x,y,t,p\n0,0,5,1\n0,0,3,0\n").unwrap();
        let err = read_event_stream(&path, StreamFormat::Csv).unwrap_err();
        assert!(matches!(err, Error::Ordering { index: 1, .. }), "{err}");
    }

    #[test]
    fn malformed_record_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ev.csv");
        std::fs::write(&path, "x,y,t,p\n0,0,5,1\n0,zz,6,0\n").unwrap();
        match read_event_stream(&path, StreamFormat::Csv) {
            Err(Error::Parse { location, .. }) => assert!(location.ends_with(":3")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn out_of_bounds_names_index() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ev.csv");
        std::fs::write(&path, "x,y,t,p\n0,0,5,1\n346,0,6,0\n").unwrap();
        assert!(matches!(
            read_event_stream(&path, StreamFormat::Csv),
            Err(Error::OutOfBounds { index: 1, .. })
        ));
    }

    #[test]
    fn binary_layout_is_packed() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ev.evpc");
        let s = stream(vec![Event::new(0x0102, 3, 0x0a0b, 1)]);
        write_event_stream(&path, StreamFormat::Binary, &s).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(bytes.len(), HEADER_LEN + RECORD_LEN);
        assert_eq!(&bytes[..5], b"EVPC\x01");
        assert_eq!(&bytes[5..9], &[0x5a, 0x01, 0x04, 0x01]);
        assert_eq!(&bytes[9..17], &1u64.to_le_bytes());
        assert_eq!(&bytes[17..21], &[0x02, 0x01, 0x03, 0x00]);
        assert_eq!(&bytes[21..29], &0x0a0bu64.to_le_bytes());
        assert_eq!(bytes[29], 1);
    }

    #[test]
    fn binary_truncated_body_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ev.evpc");
        let s = stream(vec![Event::new(1, 2, 3, 1), Event::new(1, 2, 4, 0)]);
        write_event_stream(&path, StreamFormat::Binary, &s).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes.pop();
        std::fs::write(&path, bytes).unwrap();
        assert!(matches!(
            read_event_stream(&path, StreamFormat::Binary),
            Err(Error::Parse { .. })
        ));
    }

    #[test]
    fn camera_sidecar_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.cam");
        let cam = CameraGeometry::look_at(
            287.3,
            [1234.5, -20.0, -2900.0],
            [0.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            346,
            260,
        )
        .unwrap();
        write_camera(&path, &cam).unwrap();
        assert_eq!(read_camera(&path).unwrap(), cam);
    }

    fn arb_events() -> impl Strategy<Value = Vec<Event>> {
        prop::collection::vec((0u16..346, 0u16..260, 0u64..1000, 0u8..2), 0..200).prop_map(
            |raw| {
                let mut t = 0u64;
                raw.into_iter()
                    .map(|(x, y, dt, p)| {
                        t += dt;
                        Event::new(x, y, t, p)
                    })
                    .collect()
            },
        )
    }

    proptest! {
        #[test]
        fn both_formats_round_trip(events in arb_events()) {
            let dir = tempfile::tempdir().unwrap();
            for (name, fmt) in [("e.csv", StreamFormat::Csv), ("e.evpc", StreamFormat::Binary)] {
                let path = dir.path().join(name);
                let s = stream(events.clone());
                write_event_stream(&path, fmt, &s).unwrap();
                let back = read_event_stream(&path, fmt).unwrap();
                prop_assert_eq!(&back.events, &events);
            }
        }
    }
}
