//! Clustering of the spectral response into scale bands and color-coded
//! band composites.

use crate::error::{Error, Result};
use crate::grid::ScalarField;
use crate::spectral::{reconstruct, FilterSpec, SpectralDecomposition};

/// Fixed palette cycled by band label, chosen for distinguishability.
pub const PALETTE: [[f64; 3]; 8] = [
    [1.0, 0.0, 0.0],  // red
    [1.0, 0.55, 0.0], // orange
    [1.0, 1.0, 0.0],  // yellow
    [0.0, 0.8, 0.0],  // green
    [0.0, 0.8, 0.8],  // turquoise
    [0.15, 0.3, 1.0], // blue
    [0.6, 0.0, 0.8],  // purple
    [1.0, 0.0, 0.6],  // magenta
];

/// Default prominence floor for automatic peak clustering.
pub const DEFAULT_MIN_PROMINENCE: f64 = 0.1;

/// Labeled inclusive interval of scale indices.
#[derive(Debug, Clone, PartialEq)]
pub struct Band {
    /// First scale index of the band (inclusive).
    pub first: usize,
    /// Last scale index of the band (inclusive).
    pub last: usize,
    pub label: u32,
    pub color: [f64; 3],
}

/// How to split the response into bands.
#[derive(Debug, Clone, PartialEq)]
pub enum BandMethod {
    /// One band per detected peak, split at interior minima.
    Peaks { min_prominence: f64 },
    /// Threshold the response by Otsu's criterion; bands are maximal runs
    /// of above-threshold indices.
    Otsu,
    /// Explicit inclusive intervals, validated for order and disjointness.
    Manual(Vec<(usize, usize)>),
}

impl Default for BandMethod {
    fn default() -> Self {
        BandMethod::Peaks {
            min_prominence: DEFAULT_MIN_PROMINENCE,
        }
    }
}

/// Indices of strict local maxima whose prominence (height above the higher
/// of the two flanking minima) reaches `min_prominence` times the response
/// maximum. Plateau maxima report their leftmost index; endpoints are never
/// peaks.
pub fn detect_peaks(response: &[f64], min_prominence: f64) -> Vec<usize> {
    let n = response.len();
    if n < 3 {
        return Vec::new();
    }
    let floor = min_prominence * response.iter().cloned().fold(f64::MIN, f64::max);
    let mut peaks = Vec::new();
    let mut i = 0;
    while i < n {
        // Extend over a plateau of equal values.
        let mut j = i;
        while j + 1 < n && response[j + 1] == response[i] {
            j += 1;
        }
        if i > 0 && j < n - 1 && response[i - 1] < response[i] && response[j + 1] < response[i] {
            let peak = response[i];
            let mut left_min = peak;
            let mut k = i;
            while k > 0 && response[k - 1] < peak {
                k -= 1;
                left_min = left_min.min(response[k]);
            }
            let mut right_min = peak;
            let mut k = j;
            while k + 1 < n && response[k + 1] < peak {
                k += 1;
                right_min = right_min.min(response[k]);
            }
            let prominence = peak - left_min.max(right_min);
            if prominence >= floor {
                peaks.push(i);
            }
        }
        i = j + 1;
    }
    peaks
}

/// Exhaustive-search Otsu threshold over the distinct response values:
/// maximizes the between-class variance, ties broken toward the lower
/// threshold. Returns the threshold; values strictly above are foreground.
fn otsu_threshold(response: &[f64]) -> f64 {
    let mut sorted: Vec<f64> = response.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    if sorted.len() < 2 {
        return sorted.first().copied().unwrap_or(0.0);
    }
    let n = response.len() as f64;
    let total: f64 = response.iter().sum();
    let mut best = (f64::MIN, sorted[0]);
    for &cand in &sorted[..sorted.len() - 1] {
        let (mut w_b, mut sum_b) = (0.0, 0.0);
        for &v in response {
            if v <= cand {
                w_b += 1.0;
                sum_b += v;
            }
        }
        let w_f = n - w_b;
        let m_b = sum_b / w_b;
        let m_f = (total - sum_b) / w_f;
        let var_between = w_b * w_f * (m_b - m_f) * (m_b - m_f);
        if var_between > best.0 {
            best = (var_between, cand);
        }
    }
    best.1
}

fn make_band(first: usize, last: usize, label: u32) -> Band {
    Band {
        first,
        last,
        label,
        color: PALETTE[label as usize % PALETTE.len()],
    }
}

/// Cluster the response into labeled bands. The peaks method partitions the
/// whole index range, splitting between adjacent peaks at the leftmost
/// interior minimum.
pub fn cluster_bands(response: &[f64], method: &BandMethod) -> Result<Vec<Band>> {
    if !response.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite);
    }
    let n = response.len();
    match method {
        BandMethod::Peaks { min_prominence } => {
            let peaks = detect_peaks(response, *min_prominence);
            if peaks.is_empty() {
                return Ok(Vec::new());
            }
            let mut bands = Vec::with_capacity(peaks.len());
            let mut start = 0;
            for (k, pair) in peaks.windows(2).enumerate() {
                let (a, b) = (pair[0], pair[1]);
                let split = (a + 1..b)
                    .min_by(|&x, &y| response[x].total_cmp(&response[y]).then(x.cmp(&y)))
                    .unwrap_or(a);
                bands.push(make_band(start, split, k as u32));
                start = split + 1;
            }
            bands.push(make_band(start, n - 1, (peaks.len() - 1) as u32));
            Ok(bands)
        }
        BandMethod::Otsu => {
            let threshold = otsu_threshold(response);
            let mut bands = Vec::new();
            let mut run_start: Option<usize> = None;
            for i in 0..=n {
                let above = i < n && response[i] > threshold;
                match (above, run_start) {
                    (true, None) => run_start = Some(i),
                    (false, Some(s)) => {
                        bands.push(make_band(s, i - 1, bands.len() as u32));
                        run_start = None;
                    }
                    _ => {}
                }
            }
            Ok(bands)
        }
        BandMethod::Manual(intervals) => {
            let mut bands = Vec::with_capacity(intervals.len());
            let mut prev_end: Option<usize> = None;
            for (k, &(first, last)) in intervals.iter().enumerate() {
                if first > last || last >= n {
                    return Err(Error::InvalidBands(format!(
                        "interval [{first}, {last}] out of range for {n} scales"
                    )));
                }
                if let Some(pe) = prev_end {
                    if first <= pe {
                        return Err(Error::InvalidBands(format!(
                            "interval [{first}, {last}] overlaps or is out of order"
                        )));
                    }
                }
                prev_end = Some(last);
                bands.push(make_band(first, last, k as u32));
            }
            Ok(bands)
        }
    }
}

/// RGB image with channels in `[0, 1]`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct RgbField {
    width: usize,
    height: usize,
    pixels: Vec<[f64; 3]>,
}

impl RgbField {
    pub fn black(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            pixels: vec![[0.0; 3]; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[[f64; 3]] {
        &self.pixels
    }
}

/// Color-coded band composite: each pixel takes the color of the band with
/// the largest band reconstruction there (if it exceeds `epsilon`), scaled
/// by the original gray value so intensity changes stay visible.
pub fn colorize_bands(
    dec: &SpectralDecomposition,
    bands: &[Band],
    f: &ScalarField,
    epsilon: f64,
) -> Result<RgbField> {
    f.same_shape(dec.tail())?;
    let mut out = RgbField::black(f.width(), f.height());
    if bands.is_empty() {
        return Ok(out);
    }
    let recons: Vec<ScalarField> = bands
        .iter()
        .map(|b| {
            let filter = FilterSpec::band(dec.grid().len(), b.first, b.last)?;
            reconstruct(dec, &filter)
        })
        .collect::<Result<_>>()?;
    for (p, pixel) in out.pixels.iter_mut().enumerate() {
        let mut best: Option<(usize, f64)> = None;
        for (k, recon) in recons.iter().enumerate() {
            let v = recon.values()[p];
            if v > epsilon && best.map_or(true, |(_, bv)| v > bv) {
                best = Some((k, v));
            }
        }
        if let Some((k, _)) = best {
            let gray = f.values()[p];
            for (c, out_c) in bands[k].color.iter().zip(pixel.iter_mut()) {
                *out_c = c * gray;
            }
        }
    }
    Ok(out)
}
