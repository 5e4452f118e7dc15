//! Netpbm graymap (PGM) reading and writing, binary `P5` and ASCII `P2`,
//! maxval 255.

use std::io::{Read, Write};

use thiserror::Error;

use super::{FeatureError, GrayImage};

#[derive(Debug, Error)]
pub enum PgmError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a PGM file (magic {0:?})")]
    BadMagic(String),
    #[error("malformed PGM header: {0}")]
    BadHeader(String),
    #[error("unsupported maxval {0}, only 255 is accepted")]
    UnsupportedMaxval(u32),
    #[error("truncated pixel data: expected {expected} samples, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("pixel value {0} exceeds maxval")]
    ValueOutOfRange(u32),
    #[error(transparent)]
    Image(#[from] FeatureError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PgmFormat {
    #[default]
    Binary,
    Ascii,
}

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    /// Skips whitespace and `#` comments running to end of line.
    fn skip_separators(&mut self) {
        while let Some(&b) = self.data.get(self.pos) {
            if b == b'#' {
                while self.data.get(self.pos).is_some_and(|&c| c != b'\n') {
                    self.pos += 1;
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn token(&mut self) -> Option<&'a [u8]> {
        self.skip_separators();
        let start = self.pos;
        while self
            .data
            .get(self.pos)
            .is_some_and(|b| !b.is_ascii_whitespace() && *b != b'#')
        {
            self.pos += 1;
        }
        (self.pos > start).then(|| &self.data[start..self.pos])
    }

    fn number(&mut self, what: &str) -> Result<u32, PgmError> {
        let tok = self
            .token()
            .ok_or_else(|| PgmError::BadHeader(format!("missing {what}")))?;
        std::str::from_utf8(tok)
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| PgmError::BadHeader(format!("bad {what} {:?}", String::from_utf8_lossy(tok))))
    }
}

pub fn parse_pgm(data: &[u8]) -> Result<GrayImage, PgmError> {
    let mut cur = Cursor { data, pos: 0 };
    let magic = cur.token().unwrap_or_default();
    let format = match magic {
        b"P5" => PgmFormat::Binary,
        b"P2" => PgmFormat::Ascii,
        other => return Err(PgmError::BadMagic(String::from_utf8_lossy(other).into_owned())),
    };
    let width = cur.number("width")? as usize;
    let height = cur.number("height")? as usize;
    let maxval = cur.number("maxval")?;
    if maxval != 255 {
        return Err(PgmError::UnsupportedMaxval(maxval));
    }
    if width == 0 || height == 0 {
        return Err(PgmError::BadHeader(format!("empty image {width}x{height}")));
    }
    let expected = width * height;
    let pixels = match format {
        PgmFormat::Binary => {
            // exactly one whitespace byte separates maxval from the raster
            if !data.get(cur.pos).is_some_and(|b| b.is_ascii_whitespace()) {
                return Err(PgmError::BadHeader("missing separator before raster".into()));
            }
            let raster = &data[cur.pos + 1..];
            if raster.len() < expected {
                return Err(PgmError::Truncated {
                    expected,
                    found: raster.len(),
                });
            }
            raster[..expected].to_vec()
        }
        PgmFormat::Ascii => {
            let mut pixels = Vec::with_capacity(expected);
            while pixels.len() < expected {
                let tok = cur.token().ok_or(PgmError::Truncated {
                    expected,
                    found: pixels.len(),
                })?;
                let value: u32 = std::str::from_utf8(tok)
                    .ok()
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| PgmError::BadHeader("bad pixel value".into()))?;
                if value > maxval {
                    return Err(PgmError::ValueOutOfRange(value));
                }
                pixels.push(value as u8);
            }
            pixels
        }
    };
    Ok(GrayImage::new(width, height, pixels)?)
}

pub fn read_pgm(mut reader: impl Read) -> Result<GrayImage, PgmError> {
    let mut data = Vec::new();
    reader.read_to_end(&mut data)?;
    parse_pgm(&data)
}

pub fn write_pgm(mut writer: impl Write, img: &GrayImage, format: PgmFormat) -> Result<(), PgmError> {
    let (w, h) = (img.width(), img.height());
    match format {
        PgmFormat::Binary => {
            write!(writer, "P5\n{w} {h}\n255\n")?;
            writer.write_all(img.pixels())?;
        }
        PgmFormat::Ascii => {
            write!(writer, "P2\n{w} {h}\n255\n")?;
            for row in img.pixels().chunks(w) {
                let line: Vec<String> = row.iter().map(u8::to_string).collect();
                writeln!(writer, "{}", line.join(" "))?;
            }
        }
    }
    writer.flush()?;
    Ok(())
}
