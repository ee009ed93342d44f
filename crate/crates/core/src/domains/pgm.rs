//! Binary PGM (P5) reading and writing, plus the on-disk corpus layout
//! `<root>/<domain>/<dose>/<pose-id>_<k>.pgm`.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

struct Header {
    width: usize,
    height: usize,
    maxval: u32,
    data_start: usize,
}

fn parse_err(offset: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        offset,
        message: message.into(),
    }
}

fn skip_space_and_comments(bytes: &[u8], mut pos: usize) -> usize {
    while pos < bytes.len() {
        match bytes[pos] {
            b'#' => {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            }
            c if c.is_ascii_whitespace() => pos += 1,
            _ => break,
        }
    }
    pos
}

fn read_uint(bytes: &[u8], pos: usize, what: &str) -> Result<(u32, usize)> {
    let start = skip_space_and_comments(bytes, pos);
    let mut end = start;
    while end < bytes.len() && bytes[end].is_ascii_digit() {
        end += 1;
    }
    if end == start {
        return Err(parse_err(start, format!("expected {what}")));
    }
    let text = std::str::from_utf8(&bytes[start..end]).expect("ascii digits");
    let v = text
        .parse::<u32>()
        .map_err(|_| parse_err(start, format!("{what} `{text}` is out of range")))?;
    Ok((v, end))
}

fn parse_header(bytes: &[u8]) -> Result<Header> {
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(parse_err(0, "missing P5 magic"));
    }
    let (width, pos) = read_uint(bytes, 2, "width")?;
    let (height, pos) = read_uint(bytes, pos, "height")?;
    let (maxval, pos) = read_uint(bytes, pos, "maxval")?;
    if width == 0 || height == 0 {
        return Err(parse_err(pos, format!("empty image {width}x{height}")));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(parse_err(pos, format!("maxval {maxval} outside 1..=65535")));
    }
    match bytes.get(pos) {
        Some(c) if c.is_ascii_whitespace() => {}
        _ => return Err(parse_err(pos, "expected a single whitespace byte after maxval")),
    }
    Ok(Header {
        width: width as usize,
        height: height as usize,
        maxval,
        data_start: pos + 1,
    })
}

/// Decodes a P5 image into a `[height, width]` tensor with values in [0, 1].
pub fn decode_pgm(bytes: &[u8]) -> Result<Tensor> {
    let h = parse_header(bytes)?;
    let bytes_per = match h.maxval {
        255 => 1,
        65535 => 2,
        m => return Err(Error::Format(format!("unsupported PGM maxval {m} (expected 255 or 65535)"))),
    };
    let n = h.width * h.height;
    let payload = &bytes[h.data_start..];
    if payload.len() < n * bytes_per {
        return Err(parse_err(
            bytes.len(),
            format!("truncated payload: expected {} bytes, found {}", n * bytes_per, payload.len()),
        ));
    }
    let scale = h.maxval as f32;
    let data = if bytes_per == 1 {
        payload[..n].iter().map(|&b| b as f32 / scale).collect()
    } else {
        payload[..2 * n]
            .chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]) as f32 / scale)
            .collect()
    };
    Tensor::new(vec![h.height, h.width], data)
}

/// Encodes a `[height, width]` image in [0, 1] with the given maxval (255 or 65535).
pub fn encode_pgm(image: &Tensor, maxval: u32) -> Result<Vec<u8>> {
    if image.shape().len() != 2 {
        return Err(Error::Contract(format!("PGM needs a [h, w] image, got {:?}", image.shape())));
    }
    if maxval != 255 && maxval != 65535 {
        return Err(Error::Format(format!("unsupported PGM maxval {maxval}")));
    }
    if let Some(v) = image.data().iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::Contract(format!("pixel value {v} outside [0, 1]")));
    }
    let (h, w) = (image.shape()[0], image.shape()[1]);
    let mut out = format!("P5\n{w} {h}\n{maxval}\n").into_bytes();
    let scale = maxval as f32;
    for &v in image.data() {
        let q = (v * scale).round() as u32;
        if maxval == 255 {
            out.push(q as u8);
        } else {
            out.extend_from_slice(&(q as u16).to_be_bytes());
        }
    }
    Ok(out)
}

pub fn load_pgm(path: &Path) -> Result<Tensor> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pgm(&bytes).map_err(|e| match e {
        Error::Parse { offset, message } => Error::Parse {
            offset,
            message: format!("{}: {message}", path.display()),
        },
        other => other,
    })
}

/// Writes an 8-bit PGM.
pub fn save_pgm(image: &Tensor, path: &Path) -> Result<()> {
    let bytes = encode_pgm(image, 255)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn corpus_path(root: &Path, domain: &str, dose: &str, pose_id: &str, shot: u64) -> PathBuf {
    root.join(domain).join(dose).join(format!("{pose_id}_{shot}.pgm"))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusImage {
    pub pose_id: String,
    pub shot: u64,
    pub image: Tensor,
}

/// Loads every `<pose-id>_<k>.pgm` under `<root>/<domain>/<dose>`, sorted by (pose, shot).
pub fn load_corpus_dir(root: &Path, domain: &str, dose: &str) -> Result<Vec<CorpusImage>> {
    let dir = root.join(domain).join(dose);
    let entries = fs::read_dir(&dir).map_err(|e| Error::io(&dir, e))?;
    let mut out = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(&dir, e))?.path();
        if path.extension().and_then(|e| e.to_str()) != Some("pgm") {
            continue;
        }
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
        let (pose_id, shot) = stem
            .rsplit_once('_')
            .and_then(|(p, k)| k.parse::<u64>().ok().map(|k| (p.to_string(), k)))
            .ok_or_else(|| Error::Format(format!("{}: expected <pose-id>_<k>.pgm", path.display())))?;
        out.push(CorpusImage {
            pose_id,
            shot,
            image: load_pgm(&path)?,
        });
    }
    if out.is_empty() {
        return Err(Error::Format(format!("no .pgm images in {}", dir.display())));
    }
    out.sort_by(|a, b| (&a.pose_id, a.shot).cmp(&(&b.pose_id, b.shot)));
    Ok(out)
}
