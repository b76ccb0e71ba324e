//! File formats and run configuration: PGM/PPM images, grayscale PNG input,
//! the response CSV, the binary decomposition container and the phantom
//! description format.
//!
//! All writers are pure functions of their in-memory inputs, emit LF line
//! endings and fixed number formatting, so reruns are byte-identical.

use std::fs;
use std::io::Read;
use std::path::Path;

use crate::analysis::{colorize_bands, Band, BandMethod, RgbField};
use crate::error::{Error, Result};
use crate::grid::ScalarField;
use crate::scale_space::{ScaleGrid, Spacing};
use crate::solver::{Fidelity, SolverConfig};
use crate::spectral::{reconstruct, FilterSpec, SpectralDecomposition};

/// Format a float with 12 significant digits, deterministically.
pub fn fmt_sig12(x: f64) -> String {
    format!("{x:.11e}")
}

// ---------------------------------------------------------------------------
// PGM / PPM / PNG
// ---------------------------------------------------------------------------

/// Read a grayscale image: PGM (P2 or P5, maxval up to 65535) or 8/16-bit
/// grayscale PNG. Values are normalized by the format's maximum into [0, 1],
/// row-major top-to-bottom.
pub fn read_image(path: &Path) -> Result<ScalarField> {
    let bytes = fs::read(path)?;
    image_from_bytes(&bytes)
}

/// Decode image bytes; see [`read_image`].
pub fn image_from_bytes(bytes: &[u8]) -> Result<ScalarField> {
    match bytes {
        [b'P', b'2', ..] | [b'P', b'5', ..] => parse_pgm(bytes),
        [0x89, b'P', b'N', b'G', ..] => parse_png(bytes),
        _ => Err(Error::UnknownImageFormat),
    }
}

struct PnmTokens<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> PnmTokens<'a> {
    fn new(bytes: &'a [u8], pos: usize) -> Self {
        Self { bytes, pos }
    }

    fn skip_filler(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b' ' | b'\t' | b'\r' | b'\n' => self.pos += 1,
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                _ => break,
            }
        }
    }

    fn next_uint(&mut self) -> Result<u32> {
        self.skip_filler();
        if self.pos >= self.bytes.len() {
            return Err(Error::TruncatedImage);
        }
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if self.pos == start {
            return Err(Error::MalformedImage(format!(
                "expected an integer at byte {start}"
            )));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::MalformedImage("integer out of range".into()))
    }
}

fn parse_pgm(bytes: &[u8]) -> Result<ScalarField> {
    let binary = bytes[1] == b'5';
    let mut tokens = PnmTokens::new(bytes, 2);
    let width = tokens.next_uint()? as usize;
    let height = tokens.next_uint()? as usize;
    let maxval = tokens.next_uint()?;
    if width == 0 || height == 0 {
        return Err(Error::ZeroImageDimensions);
    }
    if maxval == 0 || maxval > 65535 {
        return Err(Error::MalformedImage(format!("invalid maxval {maxval}")));
    }
    let n = width * height;
    let scale = f64::from(maxval);
    let mut values = Vec::with_capacity(n);
    if binary {
        // Exactly one whitespace byte separates the header from the data.
        tokens.pos += 1;
        let two_byte = maxval > 255;
        let per = if two_byte { 2 } else { 1 };
        let data = bytes
            .get(tokens.pos..tokens.pos + n * per)
            .ok_or(Error::TruncatedImage)?;
        for k in 0..n {
            let raw = if two_byte {
                u32::from(u16::from_be_bytes([data[2 * k], data[2 * k + 1]]))
            } else {
                u32::from(data[k])
            };
            if raw > maxval {
                return Err(Error::MalformedImage(format!(
                    "sample {raw} exceeds maxval {maxval}"
                )));
            }
            values.push(f64::from(raw) / scale);
        }
    } else {
        for _ in 0..n {
            let raw = tokens.next_uint()?;
            if raw > maxval {
                return Err(Error::MalformedImage(format!(
                    "sample {raw} exceeds maxval {maxval}"
                )));
            }
            values.push(f64::from(raw) / scale);
        }
    }
    ScalarField::new(width, height, values)
}

fn parse_png(bytes: &[u8]) -> Result<ScalarField> {
    let img = image::load_from_memory_with_format(bytes, image::ImageFormat::Png)
        .map_err(|e| Error::MalformedImage(e.to_string()))?;
    let (width, height) = (img.width() as usize, img.height() as usize);
    if width == 0 || height == 0 {
        return Err(Error::ZeroImageDimensions);
    }
    let values: Vec<f64> = match img {
        image::DynamicImage::ImageLuma8(buf) => {
            buf.into_raw().iter().map(|&v| f64::from(v) / 255.0).collect()
        }
        image::DynamicImage::ImageLuma16(buf) => buf
            .into_raw()
            .iter()
            .map(|&v| f64::from(v) / 65535.0)
            .collect(),
        _ => {
            return Err(Error::MalformedImage(
                "PNG must be 8-bit or 16-bit grayscale".into(),
            ))
        }
    };
    ScalarField::new(width, height, values)
}

fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Write a field as binary PGM (P5, maxval 255), clamping values to [0, 1].
pub fn write_pgm(path: &Path, field: &ScalarField) -> Result<()> {
    let mut out = format!("P5\n{} {}\n255\n", field.width(), field.height()).into_bytes();
    out.extend(field.values().iter().map(|&v| quantize(v)));
    fs::write(path, out)?;
    Ok(())
}

/// Write an RGB field as binary PPM (P6, maxval 255).
pub fn write_ppm(path: &Path, image: &RgbField) -> Result<()> {
    let mut out = format!("P6\n{} {}\n255\n", image.width(), image.height()).into_bytes();
    for px in image.pixels() {
        out.extend(px.iter().map(|&v| quantize(v)));
    }
    fs::write(path, out)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Response CSV
// ---------------------------------------------------------------------------

/// Render the per-scale response table. L1 mode keeps the raw (possibly
/// slightly negative) squared response next to a clamped display column.
pub fn response_csv(dec: &SpectralDecomposition) -> String {
    let mut out = String::new();
    let t = dec.grid().values();
    match dec.mode() {
        Fidelity::L1 => {
            out.push_str("index,t_alpha,S_sq_raw,S_sq_clamped\n");
            for (i, &s) in dec.response().iter().enumerate() {
                out.push_str(&format!(
                    "{},{},{},{}\n",
                    i,
                    fmt_sig12(t[i]),
                    fmt_sig12(s),
                    fmt_sig12(s.max(0.0)),
                ));
            }
        }
        Fidelity::L2 => {
            out.push_str("index,t_alpha,S\n");
            for (i, &s) in dec.response().iter().enumerate() {
                out.push_str(&format!("{},{},{}\n", i, fmt_sig12(t[i]), fmt_sig12(s)));
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Run configuration
// ---------------------------------------------------------------------------

/// Everything a pipeline run depends on; echoed verbatim into
/// `run_config.txt` so runs can be reproduced.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub fidelity: Fidelity,
    pub n_scales: usize,
    pub t_min: f64,
    pub t_max: f64,
    pub spacing: Spacing,
    pub solver: SolverConfig,
    pub band_method: BandMethod,
    pub epsilon_seg: f64,
    pub seed: u64,
    pub output_dir: String,
}

impl RunConfig {
    /// `key = value` rendering with one line per parameter.
    pub fn render(&self) -> String {
        let (method, params) = match &self.band_method {
            BandMethod::Peaks { min_prominence } => ("peaks", fmt_sig12(*min_prominence)),
            BandMethod::Otsu => ("otsu", String::new()),
            BandMethod::Manual(iv) => (
                "manual",
                iv.iter()
                    .map(|(a, b)| format!("{a}-{b}"))
                    .collect::<Vec<_>>()
                    .join(","),
            ),
        };
        let mut s = String::new();
        s.push_str(&format!("fidelity = {}\n", self.fidelity.as_str()));
        s.push_str(&format!("n_scales = {}\n", self.n_scales));
        s.push_str(&format!("t_min = {}\n", fmt_sig12(self.t_min)));
        s.push_str(&format!("t_max = {}\n", fmt_sig12(self.t_max)));
        s.push_str(&format!("spacing = {}\n", self.spacing.as_str()));
        s.push_str(&format!("tau = {}\n", fmt_sig12(self.solver.tau())));
        s.push_str(&format!("sigma = {}\n", fmt_sig12(self.solver.sigma())));
        s.push_str(&format!("theta = {}\n", fmt_sig12(self.solver.theta())));
        s.push_str(&format!("max_its = {}\n", self.solver.max_its()));
        s.push_str(&format!("rel_tol = {}\n", fmt_sig12(self.solver.rel_tol())));
        s.push_str(&format!("band_method = {method}\n"));
        s.push_str(&format!("band_params = {params}\n"));
        s.push_str(&format!("epsilon_seg = {}\n", fmt_sig12(self.epsilon_seg)));
        s.push_str(&format!("seed = {}\n", self.seed));
        s.push_str(&format!("output_dir = {}\n", self.output_dir));
        s
    }
}

// ---------------------------------------------------------------------------
// Decomposition container
// ---------------------------------------------------------------------------

const DECOMP_MAGIC: &[u8; 4] = b"TVSD";
const DECOMP_VERSION: u32 = 1;

/// File name of the decomposition container inside an output directory.
pub const DECOMP_FILE: &str = "decomposition.bin";

fn push_f64s(out: &mut Vec<u8>, values: &[f64]) {
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

/// Serialize a decomposition together with its source image, so that
/// filtering and segmentation can run later without recomputing the sweep.
pub fn save_decomposition(path: &Path, dec: &SpectralDecomposition, f: &ScalarField) -> Result<()> {
    f.same_shape(dec.tail())?;
    let n = dec.grid().len();
    let npix = f.len();
    let mut out = Vec::with_capacity(32 + 8 * (n + 2 * npix + n * npix));
    out.extend_from_slice(DECOMP_MAGIC);
    out.extend_from_slice(&DECOMP_VERSION.to_le_bytes());
    out.push(match dec.mode() {
        Fidelity::L1 => 0,
        Fidelity::L2 => 1,
    });
    out.push(match dec.grid().spacing() {
        Spacing::Linear => 0,
        Spacing::Logarithmic => 1,
        Spacing::Explicit => 2,
    });
    out.extend_from_slice(&(f.width() as u64).to_le_bytes());
    out.extend_from_slice(&(f.height() as u64).to_le_bytes());
    out.extend_from_slice(&(n as u64).to_le_bytes());
    out.extend_from_slice(&dec.c_hat().to_le_bytes());
    push_f64s(&mut out, dec.grid().values());
    push_f64s(&mut out, f.values());
    push_f64s(&mut out, dec.tail().values());
    for slice in dec.phi() {
        push_f64s(&mut out, slice.values());
    }
    push_f64s(&mut out, dec.response());
    fs::write(path, out)?;
    Ok(())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let chunk = self
            .bytes
            .get(self.pos..self.pos + n)
            .ok_or_else(|| Error::MalformedDecomposition("file is truncated".into()))?;
        self.pos += n;
        Ok(chunk)
    }

    fn take_u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn take_f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(8 * n)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

/// Load a decomposition container; returns the decomposition and the source
/// image it was computed from.
pub fn load_decomposition(path: &Path) -> Result<(SpectralDecomposition, ScalarField)> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    let mut cur = Cursor {
        bytes: &bytes,
        pos: 0,
    };
    if cur.take(4)? != DECOMP_MAGIC {
        return Err(Error::MalformedDecomposition("bad magic".into()));
    }
    let version = u32::from_le_bytes(cur.take(4)?.try_into().unwrap());
    if version != DECOMP_VERSION {
        return Err(Error::MalformedDecomposition(format!(
            "unsupported version {version}"
        )));
    }
    let mode = match cur.take(1)?[0] {
        0 => Fidelity::L1,
        1 => Fidelity::L2,
        other => {
            return Err(Error::MalformedDecomposition(format!(
                "unknown mode byte {other}"
            )))
        }
    };
    let spacing = match cur.take(1)?[0] {
        0 => Spacing::Linear,
        1 => Spacing::Logarithmic,
        2 => Spacing::Explicit,
        other => {
            return Err(Error::MalformedDecomposition(format!(
                "unknown spacing byte {other}"
            )))
        }
    };
    let width = cur.take_u64()? as usize;
    let height = cur.take_u64()? as usize;
    let n = cur.take_u64()? as usize;
    let npix = width
        .checked_mul(height)
        .ok_or_else(|| Error::MalformedDecomposition("dimensions overflow".into()))?;
    let c_hat = f64::from_le_bytes(cur.take(8)?.try_into().unwrap());
    let t_values = cur.take_f64s(n)?;
    let f = ScalarField::new(width, height, cur.take_f64s(npix)?)?;
    let tail = ScalarField::new(width, height, cur.take_f64s(npix)?)?;
    let mut phi = Vec::with_capacity(n);
    for _ in 0..n {
        phi.push(ScalarField::new(width, height, cur.take_f64s(npix)?)?);
    }
    let response = cur.take_f64s(n)?;
    if cur.pos != bytes.len() {
        return Err(Error::MalformedDecomposition("trailing bytes".into()));
    }
    let grid = ScaleGrid::from_values(t_values, spacing)?;
    let dec = SpectralDecomposition::from_parts(grid, phi, response, mode, c_hat, tail)?;
    Ok((dec, f))
}

// ---------------------------------------------------------------------------
// Phantom description files
// ---------------------------------------------------------------------------

/// Parse the line-based phantom description: `key = value` pairs for
/// `width`, `height` and `background`, plus one `disc = cx,cy,r,c` line per
/// disc. `#` starts a comment.
pub fn parse_phantom_spec(text: &str) -> Result<crate::phantom::PhantomSpec> {
    let mut width: Option<usize> = None;
    let mut height: Option<usize> = None;
    let mut background = 0.0;
    let mut discs = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::MalformedConfig(format!("line {}: expected key = value", lineno + 1))
        })?;
        let (key, value) = (key.trim(), value.trim());
        let bad = |what: &str| {
            Error::MalformedConfig(format!("line {}: invalid {what}: {value:?}", lineno + 1))
        };
        match key {
            "width" => width = Some(value.parse().map_err(|_| bad("width"))?),
            "height" => height = Some(value.parse().map_err(|_| bad("height"))?),
            "background" => background = value.parse().map_err(|_| bad("background"))?,
            "disc" => {
                let parts: Vec<&str> = value.split(',').map(str::trim).collect();
                if parts.len() != 4 {
                    return Err(bad("disc (expected cx,cy,r,c)"));
                }
                let nums: Vec<f64> = parts
                    .iter()
                    .map(|p| p.parse().map_err(|_| bad("disc value")))
                    .collect::<Result<_>>()?;
                discs.push(crate::phantom::Disc {
                    center_x: nums[0],
                    center_y: nums[1],
                    radius: nums[2],
                    contrast: nums[3],
                });
            }
            other => {
                return Err(Error::MalformedConfig(format!(
                    "line {}: unknown key {other:?}",
                    lineno + 1
                )))
            }
        }
    }
    let width = width.ok_or_else(|| Error::MalformedConfig("missing width".into()))?;
    let height = height.ok_or_else(|| Error::MalformedConfig("missing height".into()))?;
    Ok(crate::phantom::PhantomSpec {
        width,
        height,
        background,
        discs,
    })
}

// ---------------------------------------------------------------------------
// Output bundle
// ---------------------------------------------------------------------------

/// Write the standard output bundle into `dir`: `response.csv` and
/// `run_config.txt` always; per-band reconstructions, the color composite
/// and per-band masks only when bands or masks are provided.
pub fn write_outputs(
    dir: &Path,
    dec: &SpectralDecomposition,
    f: &ScalarField,
    bands: &[Band],
    masks: &[(u32, ScalarField)],
    config: &RunConfig,
) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("response.csv"), response_csv(dec))?;
    fs::write(dir.join("run_config.txt"), config.render())?;
    for band in bands {
        let filter = FilterSpec::band(dec.grid().len(), band.first, band.last)?;
        let recon = reconstruct(dec, &filter)?;
        write_pgm(&dir.join(format!("band_{}.pgm", band.label)), &recon)?;
    }
    if !bands.is_empty() {
        let composite = colorize_bands(dec, bands, f, config.epsilon_seg)?;
        write_ppm(&dir.join("composite.ppm"), &composite)?;
    }
    for (label, mask) in masks {
        write_pgm(&dir.join(format!("mask_{label}.pgm")), mask)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pgm_p2_is_normalized_by_maxval() {
        let f = image_from_bytes(b"P2\n2 1\n255\n0 255\n").unwrap();
        assert_eq!((f.width(), f.height()), (2, 1));
        assert_eq!(f.values(), &[0.0, 1.0]);
    }

    #[test]
    fn pgm_p5_16bit_big_endian() {
        let mut bytes = b"P5\n1 1\n65535\n".to_vec();
        bytes.extend_from_slice(&32768u16.to_be_bytes());
        let f = image_from_bytes(&bytes).unwrap();
        assert!((f.values()[0] - 32768.0 / 65535.0).abs() < 1e-15);
    }

    #[test]
    fn pgm_header_comments_are_skipped() {
        let f = image_from_bytes(b"P2\n# a comment\n2 2 # inline\n10\n1 2 3 4\n").unwrap();
        assert_eq!(f.values(), &[0.1, 0.2, 0.3, 0.4]);
    }

    #[test]
    fn image_error_diagnostics_are_distinct() {
        assert!(matches!(
            image_from_bytes(b"GIF89a"),
            Err(Error::UnknownImageFormat)
        ));
        assert!(matches!(
            image_from_bytes(b"P5\n2 2\n255\nab"),
            Err(Error::TruncatedImage)
        ));
        assert!(matches!(
            image_from_bytes(b"P2\n0 4\n255\n"),
            Err(Error::ZeroImageDimensions)
        ));
        assert!(matches!(
            image_from_bytes(b"P2\n1 1\n70000\n1\n"),
            Err(Error::MalformedImage(_))
        ));
        assert!(matches!(
            image_from_bytes(b"P2\n1 1\n10\n11\n"),
            Err(Error::MalformedImage(_))
        ));
    }

    #[test]
    fn read_image_missing_file_is_io_error() {
        let err = read_image(Path::new("/nonexistent/proof.pgm")).unwrap_err();
        assert!(matches!(err, Error::Io(_)));
    }

    #[test]
    fn pgm_round_trip_stays_within_quantization() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.pgm");
        let values: Vec<f64> = (0..64).map(|k| k as f64 / 63.0).collect();
        let f = ScalarField::new(8, 8, values).unwrap();
        write_pgm(&path, &f).unwrap();
        let g = read_image(&path).unwrap();
        for (a, b) in f.values().iter().zip(g.values()) {
            assert!((a - b).abs() <= 0.5 / 255.0 + 1e-12);
        }
    }

    #[test]
    fn png_round_trip_via_image_crate() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.png");
        let buf = image::GrayImage::from_fn(4, 2, |x, y| image::Luma([(x * 60 + y * 30) as u8]));
        buf.save(&path).unwrap();
        let f = read_image(&path).unwrap();
        assert_eq!((f.width(), f.height()), (4, 2));
        assert!((f.get(1, 2) - 150.0 / 255.0).abs() < 1e-12);
        // Color PNG is rejected.
        let rgb = image::RgbImage::new(2, 2);
        let color_path = dir.path().join("c.png");
        rgb.save(&color_path).unwrap();
        assert!(matches!(
            read_image(&color_path),
            Err(Error::MalformedImage(_))
        ));
    }

    #[test]
    fn phantom_spec_parsing() {
        let spec = parse_phantom_spec(
            "# phantom\nwidth = 128\nheight = 96\nbackground = 0.1\ndisc = 64, 48, 16, 1.0\ndisc = 10,10,4,-0.1\n",
        )
        .unwrap();
        assert_eq!((spec.width, spec.height), (128, 96));
        assert_eq!(spec.background, 0.1);
        assert_eq!(spec.discs.len(), 2);
        assert_eq!(spec.discs[1].contrast, -0.1);
        assert!(parse_phantom_spec("width = 10\n").is_err());
        assert!(parse_phantom_spec("width = 10\nheight = 5\nwat = 1\n").is_err());
        assert!(parse_phantom_spec("width = 10\nheight = 5\ndisc = 1,2\n").is_err());
    }

    #[test]
    fn fmt_sig12_is_stable() {
        assert_eq!(fmt_sig12(0.0), "0.00000000000e0");
        assert_eq!(fmt_sig12(7.684210526315789), "7.68421052632e0");
        assert_eq!(fmt_sig12(-0.125), "-1.25000000000e-1");
    }
}
