//! Image and mask files: 8-bit PNG (RGB or gray) and binary PPM (P6) / PGM (P5).
//!
//! Formats are detected from the file contents, not the extension. Savers pick
//! the format from the extension (`.png`, otherwise PNM).

use std::collections::BTreeMap;
use std::fs;
use std::io::Cursor;
use std::path::Path;

use crate::error::{Error, Result};
use crate::raster::{Image, Label, SegmentationMask};

const PNG_SIGNATURE: [u8; 8] = [0x89, b'P', b'N', b'G', 0x0d, 0x0a, 0x1a, 0x0a];

/// A decoded 8-bit raster before interpretation.
#[derive(Debug, Clone, PartialEq, Eq)]
struct Raster {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<u8>,
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn decode(bytes: &[u8]) -> Result<Raster> {
    if bytes.starts_with(&PNG_SIGNATURE) {
        decode_png(bytes)
    } else if bytes.starts_with(b"P6") {
        decode_pnm(bytes, 3)
    } else if bytes.starts_with(b"P5") {
        decode_pnm(bytes, 1)
    } else {
        Err(Error::UnsupportedFormat(
            "expected PNG, binary PPM (P6) or binary PGM (P5)".into(),
        ))
    }
}

fn decode_png(bytes: &[u8]) -> Result<Raster> {
    let decoder = png::Decoder::new(Cursor::new(bytes));
    let mut reader = decoder.read_info().map_err(|e| Error::CorruptHeader(e.to_string()))?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| Error::CorruptHeader("image too large".into()))?;
    let mut buf = vec![0; size];
    let info = reader.next_frame(&mut buf).map_err(|e| match e {
        png::DecodingError::Format(_) | png::DecodingError::IoError(_) => Error::CorruptPayload {
            expected: size,
            found: 0,
        },
        other => Error::UnsupportedFormat(other.to_string()),
    })?;
    if info.bit_depth != png::BitDepth::Eight {
        return Err(Error::UnsupportedFormat(format!(
            "PNG bit depth {:?}, only 8-bit is supported",
            info.bit_depth
        )));
    }
    let channels = match info.color_type {
        png::ColorType::Rgb => 3,
        png::ColorType::Grayscale => 1,
        other => {
            return Err(Error::UnsupportedFormat(format!(
                "PNG color type {other:?}, only RGB and gray are supported"
            )))
        }
    };
    let (width, height) = (info.width as usize, info.height as usize);
    let row = width * channels;
    let mut data = Vec::with_capacity(row * height);
    for y in 0..height {
        let start = y * info.line_size;
        data.extend_from_slice(&buf[start..start + row]);
    }
    Ok(Raster {
        width,
        height,
        channels,
        data,
    })
}

/// Parses a P5/P6 header and returns (width, height, payload offset).
fn parse_pnm_header(bytes: &[u8]) -> Result<(usize, usize, usize)> {
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        // whitespace and comments
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while !matches!(bytes.get(pos), None | Some(b'\n')) {
                        pos += 1;
                    }
                }
                Some(_) => break,
                None => return Err(Error::CorruptHeader("truncated PNM header".into())),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err(Error::CorruptHeader("expected a decimal number in PNM header".into()));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::CorruptHeader("PNM header number out of range".into()))?;
    }
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => return Err(Error::CorruptHeader("missing separator after maxval".into())),
    }
    let [width, height, maxval] = fields;
    if maxval != 255 {
        return Err(Error::UnsupportedFormat(format!(
            "PNM maxval {maxval}, only 255 is supported"
        )));
    }
    if width == 0 || height == 0 {
        return Err(Error::InvalidDimensions { width, height });
    }
    Ok((width, height, pos))
}

fn decode_pnm(bytes: &[u8], channels: usize) -> Result<Raster> {
    let (width, height, offset) = parse_pnm_header(bytes)?;
    let expected = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(channels))
        .ok_or_else(|| Error::CorruptHeader("PNM dimensions overflow".into()))?;
    let payload = &bytes[offset..];
    if payload.len() < expected {
        return Err(Error::CorruptPayload {
            expected,
            found: payload.len(),
        });
    }
    Ok(Raster {
        width,
        height,
        channels,
        data: payload[..expected].to_vec(),
    })
}

fn encode_pnm(magic: &str, width: usize, height: usize, data: &[u8]) -> Vec<u8> {
    let mut out = format!("{magic}\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(data);
    out
}

fn encode_png(width: usize, height: usize, color: png::ColorType, data: &[u8]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, width as u32, height as u32);
        enc.set_color(color);
        enc.set_depth(png::BitDepth::Eight);
        let mut writer = enc
            .write_header()
            .map_err(|e| Error::UnsupportedFormat(e.to_string()))?;
        writer
            .write_image_data(data)
            .map_err(|e| Error::UnsupportedFormat(e.to_string()))?;
        writer.finish().map_err(|e| Error::UnsupportedFormat(e.to_string()))?;
    }
    Ok(out)
}

fn is_png_path(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("png"))
}

pub fn decode_image(bytes: &[u8]) -> Result<Image> {
    let r = decode(bytes)?;
    if r.channels != 3 {
        return Err(Error::UnsupportedFormat(
            "expected an RGB image, found single-channel data".into(),
        ));
    }
    Image::new(r.width, r.height, r.data)
}

pub fn load_image(path: impl AsRef<Path>) -> Result<Image> {
    decode_image(&read_file(path.as_ref())?)
}

/// Writes `.png` as 8-bit RGB PNG and anything else as binary PPM (P6).
pub fn save_image(image: &Image, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = if is_png_path(path) {
        encode_png(image.width(), image.height(), png::ColorType::Rgb, image.as_bytes())?
    } else {
        encode_pnm("P6", image.width(), image.height(), image.as_bytes())
    };
    write_file(path, &bytes)
}

/// Raster value to label table, with an optional fallback for unlisted values.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    entries: BTreeMap<u8, Label>,
    default: Option<Label>,
}

impl Default for LabelMap {
    /// 0 = other, 1 = road, 255 = void, no fallback.
    fn default() -> Self {
        Self::new()
            .with(0, Label::Other)
            .with(1, Label::Road)
            .with(255, Label::Void)
    }
}

impl LabelMap {
    /// Empty table without a fallback.
    pub fn new() -> Self {
        Self {
            entries: BTreeMap::new(),
            default: None,
        }
    }

    pub fn with(mut self, value: u8, label: Label) -> Self {
        self.entries.insert(value, label);
        self
    }

    pub fn with_default(mut self, label: Label) -> Self {
        self.default = Some(label);
        self
    }

    /// Cityscapes `labelIds`: 7 is road, ids 0..=6 are void-like, everything else other.
    pub fn cityscapes_label_ids() -> Self {
        let mut map = Self::new().with(7, Label::Road).with_default(Label::Other);
        for id in 0..=6 {
            map = map.with(id, Label::Void);
        }
        map
    }

    pub fn lookup(&self, value: u8) -> Option<Label> {
        self.entries.get(&value).copied().or(self.default)
    }

    /// Parses `value:label` pairs separated by commas, e.g. `0:other,1:road,255:void,*:other`.
    /// The key `*` sets the fallback.
    pub fn parse(spec: &str) -> Result<Self> {
        let mut map = Self::new();
        for part in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let (key, label) = part
                .split_once(':')
                .ok_or_else(|| Error::config("label-map", format!("`{part}` is not value:label")))?;
            let label = match label.trim().to_ascii_lowercase().as_str() {
                "road" => Label::Road,
                "other" => Label::Other,
                "void" => Label::Void,
                other => {
                    return Err(Error::config(
                        "label-map",
                        format!("unknown label `{other}`, expected road, other or void"),
                    ))
                }
            };
            match key.trim() {
                "*" => map.default = Some(label),
                k => {
                    let v = k
                        .parse::<u8>()
                        .map_err(|_| Error::config("label-map", format!("`{k}` is not a value in 0..=255")))?;
                    map.entries.insert(v, label);
                }
            }
        }
        Ok(map)
    }
}

pub fn decode_mask(bytes: &[u8], label_map: &LabelMap) -> Result<SegmentationMask> {
    let r = decode(bytes)?;
    if r.channels != 1 {
        return Err(Error::UnsupportedFormat(
            "expected a single-channel mask, found RGB data".into(),
        ));
    }
    let mut labels = Vec::with_capacity(r.data.len());
    for (i, &v) in r.data.iter().enumerate() {
        let label = label_map.lookup(v).ok_or(Error::UnmappedValue {
            value: v,
            x: i % r.width,
            y: i / r.width,
        })?;
        labels.push(label);
    }
    SegmentationMask::new(r.width, r.height, labels)
}

pub fn load_mask(path: impl AsRef<Path>, label_map: &LabelMap) -> Result<SegmentationMask> {
    decode_mask(&read_file(path.as_ref())?, label_map)
}

/// Writes the default encoding (0/1/255) as gray PNG or binary PGM (P5).
pub fn save_mask(mask: &SegmentationMask, path: impl AsRef<Path>) -> Result<()> {
    save_gray(mask.width(), mask.height(), &mask.codes(), path)
}

pub fn save_gray(width: usize, height: usize, data: &[u8], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = if is_png_path(path) {
        encode_png(width, height, png::ColorType::Grayscale, data)?
    } else {
        encode_pnm("P5", width, height, data)
    };
    write_file(path, &bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p6(width: usize, height: usize, payload: &[u8]) -> Vec<u8> {
        encode_pnm("P6", width, height, payload)
    }

    #[test]
    fn black_2x2_ppm() {
        let img = decode_image(&p6(2, 2, &[0; 12])).unwrap();
        assert_eq!(img.dims(), (2, 2));
        assert!(img.as_bytes().iter().all(|&b| b == 0));
    }

    #[test]
    fn truncated_payload() {
        let err = decode_image(&p6(2, 2, &[0; 7])).unwrap_err();
        assert!(err.to_string().contains("corrupt payload"), "{err}");
    }

    #[test]
    fn header_with_comments() {
        let mut bytes = b"P6\n# made by hand\n1 1\n# another\n255\n".to_vec();
        bytes.extend_from_slice(&[1, 2, 3]);
        let img = decode_image(&bytes).unwrap();
        assert_eq!(img.get(0, 0), [1, 2, 3]);
    }

    #[test]
    fn corrupt_headers() {
        assert!(matches!(decode_image(b"P6\n2"), Err(Error::CorruptHeader(_))));
        assert!(matches!(decode_image(b"P6\nx 2 255\n"), Err(Error::CorruptHeader(_))));
        assert!(matches!(
            decode_image(b"P6 1 1 65535\n\0\0\0\0\0\0"),
            Err(Error::UnsupportedFormat(_))
        ));
        assert!(matches!(decode_image(b"GIF89a"), Err(Error::UnsupportedFormat(_))));
    }

    #[test]
    fn gray_file_is_not_an_image() {
        let bytes = encode_pnm("P5", 1, 1, &[9]);
        assert!(matches!(decode_image(&bytes), Err(Error::UnsupportedFormat(_))));
    }

    #[test]
    fn mask_default_mapping() {
        let bytes = encode_pnm("P5", 3, 1, &[0, 1, 255]);
        let m = decode_mask(&bytes, &LabelMap::default()).unwrap();
        assert_eq!(m.labels(), &[Label::Other, Label::Road, Label::Void]);
    }

    #[test]
    fn mask_remap_with_default() {
        let bytes = encode_pnm("P5", 2, 2, &[7, 3, 7, 11]);
        let map = LabelMap::new().with(7, Label::Road).with_default(Label::Other);
        let m = decode_mask(&bytes, &map).unwrap();
        assert_eq!(m.labels(), &[Label::Road, Label::Other, Label::Road, Label::Other]);
    }

    #[test]
    fn mask_unmapped_value() {
        let bytes = encode_pnm("P5", 2, 1, &[0, 9]);
        let err = decode_mask(&bytes, &LabelMap::default()).unwrap_err();
        assert!(matches!(err, Error::UnmappedValue { value: 9, x: 1, y: 0 }));
    }

    #[test]
    fn mask_zero_dimension() {
        let bytes = b"P5\n0 4\n255\n".to_vec();
        assert!(matches!(
            decode_mask(&bytes, &LabelMap::default()),
            Err(Error::InvalidDimensions { .. })
        ));
    }

    #[test]
    fn label_map_parse() {
        let map = LabelMap::parse("7:road, 0:void, *:other").unwrap();
        assert_eq!(map.lookup(7), Some(Label::Road));
        assert_eq!(map.lookup(0), Some(Label::Void));
        assert_eq!(map.lookup(200), Some(Label::Other));
        assert!(LabelMap::parse("7=road").is_err());
        assert!(LabelMap::parse("300:road").is_err());
        assert!(LabelMap::parse("1:sky").is_err());
    }

    #[test]
    fn png_round_trip_in_memory() {
        let img = Image::from_fn(5, 3, |x, y| [x as u8 * 40, y as u8 * 80, 7]).unwrap();
        let bytes = encode_png(5, 3, png::ColorType::Rgb, img.as_bytes()).unwrap();
        assert_eq!(decode_image(&bytes).unwrap(), img);
    }
}
