//! PNG and NPY file I/O.
//!
//! PNG input accepts 8- and 16-bit gray or RGB, with or without alpha (alpha
//! is dropped). Output is always 8-bit. NPY support is the v1.0 subset with
//! little-endian `f32` data in C order, rank at most 4; anything else is
//! rejected with an error naming the violated constraint.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::{Image, Tensor, MAX_RANK};

/// Raw decoded samples of a PNG, before any scaling.
pub(crate) struct RawPng {
    pub height: usize,
    pub width: usize,
    /// Color channels kept (1 or 3); alpha already removed.
    pub channels: usize,
    pub max_value: u32,
    pub samples: Vec<u16>,
}

pub(crate) fn read_png_raw(path: &Path) -> Result<RawPng> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut decoder = png::Decoder::new(BufReader::new(file));
    decoder.set_transformations(png::Transformations::IDENTITY);
    let mut reader = decoder
        .read_info()
        .map_err(|e| Error::format(path, e.to_string()))?;
    let (color, depth) = reader.output_color_type();
    let (src_channels, keep) = match color {
        png::ColorType::Grayscale => (1, 1),
        png::ColorType::GrayscaleAlpha => (2, 1),
        png::ColorType::Rgb => (3, 3),
        png::ColorType::Rgba => (4, 3),
        png::ColorType::Indexed => {
            return Err(Error::format(
                path,
                "palette PNGs are not supported; convert to gray or RGB",
            ))
        }
    };
    let (bytes_per_sample, max_value) = match depth {
        png::BitDepth::Eight => (1, 255),
        png::BitDepth::Sixteen => (2, 65535),
        other => {
            return Err(Error::format(
                path,
                format!("bit depth {other:?} is not supported; expected 8 or 16"),
            ))
        }
    };
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| Error::format(path, "image too large"))?;
    let mut buf = vec![0u8; size];
    let info = reader
        .next_frame(&mut buf)
        .map_err(|e| Error::format(path, e.to_string()))?;
    let (width, height) = (info.width as usize, info.height as usize);
    let mut samples = Vec::with_capacity(width * height * keep);
    for row in buf.chunks_exact(info.line_size).take(height) {
        for px in row[..width * src_channels * bytes_per_sample]
            .chunks_exact(src_channels * bytes_per_sample)
        {
            for c in 0..keep {
                let s = if bytes_per_sample == 1 {
                    px[c] as u16
                } else {
                    u16::from_be_bytes([px[2 * c], px[2 * c + 1]])
                };
                samples.push(s);
            }
        }
    }
    Ok(RawPng {
        height,
        width,
        channels: keep,
        max_value,
        samples,
    })
}

/// Reads a PNG, scaling samples to `[0, 1]` by `v / 255` or `v / 65535`.
pub fn read_png(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    let raw = read_png_raw(path)?;
    let scale = raw.max_value as f32;
    let data = raw.samples.iter().map(|&s| s as f32 / scale).collect();
    Image::new(raw.height, raw.width, raw.channels, data)
}

/// Quantizes a `[0, 1]` value to a byte with `round(v * 255)`, ties up.
pub fn quantize_u8(v: f32) -> u8 {
    (v * 255.0 + 0.5).floor().clamp(0.0, 255.0) as u8
}

/// Writes an 8-bit gray or RGB PNG.
pub fn write_png(image: &Image, path: impl AsRef<Path>) -> Result<()> {
    let bytes: Vec<u8> = image.data().iter().map(|&v| quantize_u8(v)).collect();
    let color = if image.channels() == 1 {
        png::ColorType::Grayscale
    } else {
        png::ColorType::Rgb
    };
    write_png_bytes(path.as_ref(), image.width(), image.height(), color, &bytes)
}

pub(crate) fn write_png_bytes(
    path: &Path,
    width: usize,
    height: usize,
    color: png::ColorType,
    bytes: &[u8],
) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut encoder = png::Encoder::new(BufWriter::new(file), width as u32, height as u32);
    encoder.set_color(color);
    encoder.set_depth(png::BitDepth::Eight);
    let to_io = |e: png::EncodingError| match e {
        png::EncodingError::IoError(e) => Error::io(path, e),
        other => Error::format(path, other.to_string()),
    };
    let mut writer = encoder.write_header().map_err(to_io)?;
    writer.write_image_data(bytes).map_err(to_io)?;
    writer.finish().map_err(to_io)
}

const NPY_MAGIC: &[u8; 6] = b"\x93NUMPY";

/// Reads a tensor from an NPY file.
pub fn read_npy(path: impl AsRef<Path>) -> Result<Tensor> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_npy_from(BufReader::new(file)).map_err(|e| e.at(path))
}

/// Writes a tensor as an NPY v1.0 file.
pub fn write_npy(tensor: &Tensor, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if !tensor.is_finite() {
        return Err(Error::format(path, "refusing to write non-finite values"));
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_npy_to(&mut w, tensor)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

/// Format violation found while parsing an NPY stream.
#[derive(Debug)]
pub enum NpyError {
    Io(std::io::Error),
    Format(String),
}

impl NpyError {
    fn at(self, path: &Path) -> Error {
        match self {
            NpyError::Io(e) => Error::io(path, e),
            NpyError::Format(reason) => Error::format(path, reason),
        }
    }
}

impl std::fmt::Display for NpyError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            NpyError::Io(e) => e.fmt(f),
            NpyError::Format(s) => f.write_str(s),
        }
    }
}

impl std::error::Error for NpyError {}

impl From<std::io::Error> for NpyError {
    fn from(e: std::io::Error) -> Self {
        NpyError::Io(e)
    }
}

/// Serializes the NPY header and data.
pub fn write_npy_to<W: Write>(w: &mut W, tensor: &Tensor) -> std::io::Result<()> {
    let shape = match tensor.shape() {
        [] => "()".to_string(),
        [d] => format!("({d},)"),
        dims => format!(
            "({})",
            dims.iter()
                .map(|d| d.to_string())
                .collect::<Vec<_>>()
                .join(", ")
        ),
    };
    let mut header = format!("{{'descr': '<f4', 'fortran_order': False, 'shape': {shape}}}");
    // magic + version + u16 length + header + '\n' must be a multiple of 64
    let unpadded = NPY_MAGIC.len() + 2 + 2 + header.len() + 1;
    header.push_str(&" ".repeat((64 - unpadded % 64) % 64));
    header.push('\n');

    w.write_all(NPY_MAGIC)?;
    w.write_all(&[1, 0])?;
    w.write_all(&(header.len() as u16).to_le_bytes())?;
    w.write_all(header.as_bytes())?;
    let mut bytes = Vec::with_capacity(tensor.len() * 4);
    for v in tensor.data() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&bytes)
}

/// Parses an NPY stream.
pub fn read_npy_from<R: Read>(mut r: R) -> Result<Tensor, NpyError> {
    let bad = |s: String| NpyError::Format(s);
    let mut preamble = [0u8; 10];
    r.read_exact(&mut preamble)?;
    if &preamble[..6] != NPY_MAGIC {
        return Err(bad("missing NPY magic string".into()));
    }
    if preamble[6..8] != [1, 0] {
        return Err(bad(format!(
            "NPY version {}.{} is not supported; expected 1.0",
            preamble[6], preamble[7]
        )));
    }
    let header_len = u16::from_le_bytes([preamble[8], preamble[9]]) as usize;
    let mut header = vec![0u8; header_len];
    r.read_exact(&mut header)?;
    let header = std::str::from_utf8(&header).map_err(|_| bad("header is not ASCII".into()))?;
    let dict = HeaderDict::parse(header).map_err(bad)?;

    if dict.descr != "<f4" {
        return Err(bad(format!(
            "dtype '{}' is not supported; expected '<f4'",
            dict.descr
        )));
    }
    if dict.fortran_order {
        return Err(bad(
            "fortran_order True is not supported; expected C order".into()
        ));
    }
    if dict.shape.len() > MAX_RANK {
        return Err(bad(format!(
            "rank {} exceeds the maximum of {MAX_RANK}",
            dict.shape.len()
        )));
    }
    let n: usize = dict.shape.iter().product();
    let mut bytes = vec![0u8; n * 4];
    r.read_exact(&mut bytes)?;
    let data: Vec<f32> = bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect();
    if data.iter().any(|v| !v.is_finite()) {
        return Err(bad("data contains NaN or infinite values".into()));
    }
    Tensor::new(dict.shape, data).map_err(|e| bad(e.to_string()))
}

#[derive(Debug)]
struct HeaderDict {
    descr: String,
    fortran_order: bool,
    shape: Vec<usize>,
}

#[derive(Debug, PartialEq)]
enum Literal {
    Str(String),
    Bool(bool),
    Tuple(Vec<usize>),
}

impl HeaderDict {
    fn parse(src: &str) -> std::result::Result<Self, String> {
        let mut p = LiteralParser {
            s: src.trim_end().as_bytes(),
            pos: 0,
        };
        let mut descr = None;
        let mut fortran_order = None;
        let mut shape = None;
        p.expect(b'{')?;
        loop {
            p.skip_ws();
            if p.eat(b'}') {
                break;
            }
            let key = match p.literal()? {
                Literal::Str(k) => k,
                other => return Err(format!("header key must be a string, got {other:?}")),
            };
            p.expect(b':')?;
            let value = p.literal()?;
            match (key.as_str(), value) {
                ("descr", Literal::Str(s)) => descr = Some(s),
                ("fortran_order", Literal::Bool(b)) => fortran_order = Some(b),
                ("shape", Literal::Tuple(t)) => shape = Some(t),
                (k, v) => return Err(format!("unexpected header entry {k:?}: {v:?}")),
            }
            p.skip_ws();
            if !p.eat(b',') {
                p.expect(b'}')?;
                break;
            }
        }
        Ok(Self {
            descr: descr.ok_or("header is missing 'descr'")?,
            fortran_order: fortran_order.ok_or("header is missing 'fortran_order'")?,
            shape: shape.ok_or("header is missing 'shape'")?,
        })
    }
}

struct LiteralParser<'a> {
    s: &'a [u8],
    pos: usize,
}

impl LiteralParser<'_> {
    fn skip_ws(&mut self) {
        while self.pos < self.s.len() && self.s[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn eat(&mut self, c: u8) -> bool {
        self.skip_ws();
        if self.s.get(self.pos) == Some(&c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: u8) -> std::result::Result<(), String> {
        if self.eat(c) {
            Ok(())
        } else {
            Err(format!(
                "malformed header: expected '{}' at byte {}",
                c as char, self.pos
            ))
        }
    }

    fn literal(&mut self) -> std::result::Result<Literal, String> {
        self.skip_ws();
        let rest = &self.s[self.pos..];
        if let Some(&q) = rest.first().filter(|&&c| c == b'\'' || c == b'"') {
            let end = rest[1..]
                .iter()
                .position(|&c| c == q)
                .ok_or("malformed header: unterminated string")?;
            self.pos += end + 2;
            return Ok(Literal::Str(
                String::from_utf8_lossy(&rest[1..end + 1]).into_owned(),
            ));
        }
        for (word, value) in [("True", true), ("False", false)] {
            if rest.starts_with(word.as_bytes()) {
                self.pos += word.len();
                return Ok(Literal::Bool(value));
            }
        }
        if self.eat(b'(') {
            let mut dims = Vec::new();
            loop {
                if self.eat(b')') {
                    break;
                }
                self.skip_ws();
                let start = self.pos;
                while self.pos < self.s.len() && self.s[self.pos].is_ascii_digit() {
                    self.pos += 1;
                }
                let digits = std::str::from_utf8(&self.s[start..self.pos]).unwrap_or_default();
                let dim = digits
                    .parse::<usize>()
                    .map_err(|_| format!("malformed shape entry at byte {start}"))?;
                dims.push(dim);
                if !self.eat(b',') {
                    self.expect(b')')?;
                    break;
                }
            }
            return Ok(Literal::Tuple(dims));
        }
        Err(format!(
            "malformed header: unexpected token at byte {}",
            self.pos
        ))
    }
}
