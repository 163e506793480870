//! Frame, map and eye-tracker log I/O.
//!
//! HDR frames are Portable Float Maps (one file per frame), maps are 16-bit
//! binary PGM, and fixation logs are comma-separated text with the header
//! `subject_id,start_time_ms,duration_ms,x,y`.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::field::Field2D;
use crate::scalar::Real;

/// Linear-light RGB frame with an absolute luminance calibration.
#[derive(Debug, Clone, PartialEq)]
pub struct HdrFrame<T> {
    width: usize,
    height: usize,
    rgb: Vec<T>,
    luminance_scale: T,
    frame_index: usize,
}

impl<T: Real> HdrFrame<T> {
    /// Builds a frame from interleaved RGB samples, top row first.
    pub fn new(
        width: usize,
        height: usize,
        rgb: Vec<T>,
        luminance_scale: T,
        frame_index: usize,
    ) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::param(format!(
                "frame dimensions must be positive, got {width}x{height}"
            )));
        }
        if rgb.len() != width * height * 3 {
            return Err(Error::LengthMismatch {
                what: "rgb samples",
                left: rgb.len(),
                right: width * height * 3,
            });
        }
        if let Some((index, v)) = rgb
            .iter()
            .enumerate()
            .find(|(_, v)| !v.is_finite() || **v < T::zero())
        {
            return Err(Error::InvalidSample {
                index,
                value: v.to_f64_lossy(),
            });
        }
        if !(luminance_scale > T::zero()) || !luminance_scale.is_finite() {
            return Err(Error::param("luminance_scale must be positive and finite"));
        }
        Ok(Self {
            width,
            height,
            rgb,
            luminance_scale,
            frame_index,
        })
    }

    /// Builds a frame by evaluating `f(x, y) -> [r, g, b]`.
    pub fn from_fn(
        width: usize,
        height: usize,
        luminance_scale: T,
        frame_index: usize,
        mut f: impl FnMut(usize, usize) -> [T; 3],
    ) -> Result<Self> {
        let mut rgb = Vec::with_capacity(width * height * 3);
        for y in 0..height {
            for x in 0..width {
                rgb.extend_from_slice(&f(x, y));
            }
        }
        Self::new(width, height, rgb, luminance_scale, frame_index)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn rgb(&self) -> &[T] {
        &self.rgb
    }

    pub fn pixel(&self, x: usize, y: usize) -> [T; 3] {
        let i = 3 * (y * self.width + x);
        [self.rgb[i], self.rgb[i + 1], self.rgb[i + 2]]
    }

    pub fn luminance_scale(&self) -> T {
        self.luminance_scale
    }

    pub fn frame_index(&self) -> usize {
        self.frame_index
    }
}

/// Reads a PFM file (`PF` colour or `Pf` grayscale, either byte order).
pub fn read_pfm<T: Real>(path: impl AsRef<Path>) -> Result<HdrFrame<T>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let frame_index = frame_index_from_path(path).unwrap_or(0);
    decode_pfm(&bytes, frame_index)
}

/// Decodes an in-memory PFM image.
pub fn decode_pfm<T: Real>(bytes: &[u8], frame_index: usize) -> Result<HdrFrame<T>> {
    let mut cursor = HeaderCursor::new(bytes);
    let magic = cursor.token()?;
    let channels = match magic.as_str() {
        "PF" => 3,
        "Pf" => 1,
        other => return Err(Error::BadMagic(other.to_string())),
    };
    let width: usize = cursor.parse("width")?;
    let height: usize = cursor.parse("height")?;
    let scale: f64 = cursor.parse("scale")?;
    cursor.single_whitespace()?;
    if width == 0 || height == 0 {
        return Err(Error::BadHeader(format!("zero dimension {width}x{height}")));
    }
    if !scale.is_finite() {
        return Err(Error::BadHeader("non-finite scale".into()));
    }
    let little_endian = scale < 0.0;
    let luminance_scale = if scale == 0.0 { 1.0 } else { scale.abs() };

    let expected = width * height * channels;
    let payload = &bytes[cursor.pos..];
    let found = payload.len() / 4;
    if found < expected {
        return Err(Error::TruncatedPayload { expected, found });
    }
    let mut rgb = vec![T::zero(); width * height * 3];
    for (i, chunk) in payload.chunks_exact(4).take(expected).enumerate() {
        let raw = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if little_endian {
            f32::from_le_bytes(raw)
        } else {
            f32::from_be_bytes(raw)
        };
        if !v.is_finite() || v < 0.0 {
            return Err(Error::InvalidSample {
                index: i,
                value: v as f64,
            });
        }
        // Scanlines are stored bottom-to-top.
        let file_row = i / (width * channels);
        let rest = i % (width * channels);
        let (x, c) = (rest / channels, rest % channels);
        let y = height - 1 - file_row;
        let v = T::from_f32(v).expect("f32 representable");
        let base = 3 * (y * width + x);
        if channels == 3 {
            rgb[base + c] = v;
        } else {
            rgb[base..base + 3].fill(v);
        }
    }
    HdrFrame::new(width, height, rgb, T::of(luminance_scale), frame_index)
}

/// Writes a little-endian colour PFM; the scale field carries the
/// luminance calibration.
pub fn write_pfm<T: Real>(frame: &HdrFrame<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_pfm(frame)).map_err(|e| Error::io(path, e))
}

pub fn encode_pfm<T: Real>(frame: &HdrFrame<T>) -> Vec<u8> {
    let (w, h) = frame.dims();
    let scale = frame.luminance_scale().to_f64_lossy();
    let mut out = format!("PF\n{w} {h}\n{}\n", -scale).into_bytes();
    out.reserve(w * h * 12);
    for y in (0..h).rev() {
        for x in 0..w {
            for v in frame.pixel(x, y) {
                let v = v.to_f32().expect("finite sample");
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    out
}

/// Writes a normalized map as a 16-bit binary PGM, `round(65535·v)`.
pub fn write_map<T: Real>(map: &Field2D<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_pgm16(map)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn encode_pgm16<T: Real>(map: &Field2D<T>) -> Result<Vec<u8>> {
    let (w, h) = map.dims();
    let mut out = format!("P5\n{w} {h}\n65535\n").into_bytes();
    out.reserve(w * h * 2);
    for (i, &v) in map.values().iter().enumerate() {
        if !(v >= T::zero() && v <= T::one()) {
            return Err(Error::InvalidSample {
                index: i,
                value: v.to_f64_lossy(),
            });
        }
        out.extend_from_slice(&quantize16(v).to_be_bytes());
    }
    Ok(out)
}

/// Round-half-up quantization of a `[0, 1]` value to 16 bits.
pub fn quantize16<T: Real>(v: T) -> u16 {
    let q = (v.to_f64_lossy() * 65535.0 + 0.5).floor();
    q.clamp(0.0, 65535.0) as u16
}

/// Reads a binary PGM (8- or 16-bit) into a field scaled to `[0, 1]`.
pub fn read_map<T: Real>(path: impl AsRef<Path>) -> Result<Field2D<T>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pgm(&bytes)
}

pub fn decode_pgm<T: Real>(bytes: &[u8]) -> Result<Field2D<T>> {
    let mut cursor = HeaderCursor::new(bytes);
    let magic = cursor.token()?;
    if magic != "P5" {
        return Err(Error::BadMagic(magic));
    }
    let width: usize = cursor.parse("width")?;
    let height: usize = cursor.parse("height")?;
    let maxval: u32 = cursor.parse("maxval")?;
    cursor.single_whitespace()?;
    if maxval == 0 || maxval > 65535 {
        return Err(Error::BadHeader(format!("maxval {maxval}")));
    }
    let bytes_per = if maxval > 255 { 2 } else { 1 };
    let expected = width * height;
    let payload = &bytes[cursor.pos..];
    let found = payload.len() / bytes_per;
    if found < expected {
        return Err(Error::TruncatedPayload { expected, found });
    }
    let denom = T::of(maxval as f64);
    let values = (0..expected)
        .map(|i| {
            let raw = if bytes_per == 2 {
                u16::from_be_bytes([payload[2 * i], payload[2 * i + 1]]) as u32
            } else {
                payload[i] as u32
            };
            T::of(raw.min(maxval) as f64) / denom
        })
        .collect();
    Field2D::new(width, height, values)
}

fn frame_index_from_path(path: &Path) -> Option<usize> {
    let stem = path.file_stem()?.to_str()?;
    let digits: String = stem
        .chars()
        .rev()
        .take_while(|c| c.is_ascii_digit())
        .collect::<Vec<_>>()
        .into_iter()
        .rev()
        .collect();
    digits.parse().ok()
}

struct HeaderCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> HeaderCursor<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    fn token(&mut self) -> Result<String> {
        loop {
            while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
                self.pos += 1;
            }
            // PGM permits comment lines in the header.
            if self.pos < self.bytes.len() && self.bytes[self.pos] == b'#' {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
                continue;
            }
            break;
        }
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::BadHeader("unexpected end of header".into()));
        }
        Ok(String::from_utf8_lossy(&self.bytes[start..self.pos]).into_owned())
    }

    fn parse<V: std::str::FromStr>(&mut self, what: &str) -> Result<V> {
        let tok = self.token()?;
        tok.parse()
            .map_err(|_| Error::BadHeader(format!("invalid {what}: {tok:?}")))
    }

    fn single_whitespace(&mut self) -> Result<()> {
        match self.bytes.get(self.pos) {
            Some(b) if b.is_ascii_whitespace() => {
                self.pos += 1;
                Ok(())
            }
            _ => Err(Error::BadHeader("missing header terminator".into())),
        }
    }
}

/// One fixation event, in frame pixel coordinates (top-left origin).
#[derive(Debug, Clone, PartialEq)]
pub struct FixationRecord {
    pub subject_id: String,
    pub start_time: f64,
    pub duration: f64,
    pub x: f64,
    pub y: f64,
}

impl FixationRecord {
    /// Integer pixel containing the fixation.
    pub fn pixel(&self) -> (usize, usize) {
        (self.x.floor() as usize, self.y.floor() as usize)
    }

    /// Frame indices whose display interval `[k/fps, (k+1)/fps)` overlaps
    /// `[start, start + duration)`, restricted to `0..num_frames`.
    pub fn overlapped_frames(&self, frame_rate: f64, num_frames: usize) -> std::ops::Range<usize> {
        // frame k overlaps iff k·1000 < end·fps and start·fps < (k+1)·1000
        let s = self.start_time * frame_rate;
        let e = (self.start_time + self.duration) * frame_rate;
        let mut first = (s / 1000.0).floor().max(0.0) as usize;
        while first > 0 && s < first as f64 * 1000.0 {
            first -= 1;
        }
        while s >= (first + 1) as f64 * 1000.0 {
            first += 1;
        }
        let mut last = (e / 1000.0).ceil().max(0.0) as usize;
        while last > 0 && (last - 1) as f64 * 1000.0 >= e {
            last -= 1;
        }
        while (last as f64) * 1000.0 < e {
            last += 1;
        }
        let last = last.min(num_frames);
        first.min(last)..last
    }
}

/// Fixation records with their frame assignment.
#[derive(Debug, Clone, PartialEq)]
pub struct FixationSet {
    records: Vec<FixationRecord>,
    per_frame: Vec<Vec<usize>>,
    dropped: usize,
    frame_rate: f64,
}

impl FixationSet {
    /// Assigns each record to every frame it overlaps; records that overlap
    /// no frame in `0..num_frames` are dropped and counted.
    pub fn from_records(records: Vec<FixationRecord>, frame_rate: f64, num_frames: usize) -> Result<Self> {
        if !(frame_rate > 0.0) || !frame_rate.is_finite() {
            return Err(Error::param(format!("frame rate must be positive, got {frame_rate}")));
        }
        let mut per_frame = vec![Vec::new(); num_frames];
        let mut kept = Vec::with_capacity(records.len());
        let mut dropped = 0;
        for rec in records {
            let frames = rec.overlapped_frames(frame_rate, num_frames);
            if frames.is_empty() {
                dropped += 1;
                continue;
            }
            let idx = kept.len();
            for k in frames {
                per_frame[k].push(idx);
            }
            kept.push(rec);
        }
        Ok(Self {
            records: kept,
            per_frame,
            dropped,
            frame_rate,
        })
    }

    pub fn records(&self) -> &[FixationRecord] {
        &self.records
    }

    pub fn num_frames(&self) -> usize {
        self.per_frame.len()
    }

    pub fn frame_rate(&self) -> f64 {
        self.frame_rate
    }

    /// Records that fell entirely outside the sequence.
    pub fn dropped(&self) -> usize {
        self.dropped
    }

    /// Records assigned to frame `k`, in log order.
    pub fn frame(&self, k: usize) -> impl Iterator<Item = &FixationRecord> + '_ {
        self.per_frame
            .get(k)
            .map(|v| v.as_slice())
            .unwrap_or(&[])
            .iter()
            .map(move |&i| &self.records[i])
    }

    /// Total number of (record, frame) assignments.
    pub fn assignment_count(&self) -> usize {
        self.per_frame.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// Parses a fixation log and assigns records to frames.
pub fn parse_fixation_log(
    path: impl AsRef<Path>,
    frame_rate: f64,
    num_frames: usize,
) -> Result<FixationSet> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_fixation_text(&text, frame_rate, num_frames)
}

pub fn parse_fixation_text(text: &str, frame_rate: f64, num_frames: usize) -> Result<FixationSet> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| Error::Parse {
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    if header.len() != 5 {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected 5 header columns, found {}", header.len()),
        });
    }
    let mut records = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| Error::Parse {
            line: e.position().map(|p| p.line() as usize).unwrap_or(0),
            message: e.to_string(),
        })?;
        let line = row.position().map(|p| p.line() as usize).unwrap_or(0);
        if row.len() == 1 && row[0].is_empty() {
            continue;
        }
        if row.len() != 5 {
            return Err(Error::Parse {
                line,
                message: format!("expected 5 fields, found {}", row.len()),
            });
        }
        let num = |i: usize, name: &str| -> Result<f64> {
            row[i]
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::Parse {
                    line,
                    message: format!("{name} is not a number: {:?}", &row[i]),
                })
        };
        let start_time = num(1, "start_time_ms")?;
        let duration = num(2, "duration_ms")?;
        let x = num(3, "x")?;
        let y = num(4, "y")?;
        if duration <= 0.0 {
            return Err(Error::Parse {
                line,
                message: format!("duration must be positive, got {duration}"),
            });
        }
        if x < 0.0 || y < 0.0 {
            return Err(Error::Parse {
                line,
                message: format!("negative coordinate ({x}, {y})"),
            });
        }
        records.push(FixationRecord {
            subject_id: row[0].to_string(),
            start_time,
            duration,
            x,
            y,
        });
    }
    FixationSet::from_records(records, frame_rate, num_frames)
}

/// Writes `frame,x,y` rows, the negative-pool exchange format.
pub fn write_points_csv(points: &[(usize, usize, usize)], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::from("frame,x,y\n");
    for (f, x, y) in points {
        out.push_str(&format!("{f},{x},{y}\n"));
    }
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}

pub fn read_points_csv(path: impl AsRef<Path>) -> Result<Vec<(usize, usize, usize)>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut out = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| Error::Parse {
            line: e.position().map(|p| p.line() as usize).unwrap_or(0),
            message: e.to_string(),
        })?;
        let line = row.position().map(|p| p.line() as usize).unwrap_or(0);
        let field = |i: usize| -> Result<usize> {
            row.get(i)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::Parse {
                    line,
                    message: "expected three non-negative integers".into(),
                })
        };
        out.push((field(0)?, field(1)?, field(2)?));
    }
    Ok(out)
}
