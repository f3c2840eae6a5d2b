//! Quality and sparsity measures.

use std::fmt;
use std::str::FromStr;

use crate::image::ImageArray;
use crate::{Error, Result};

fn check_same(a: &ImageArray, b: &ImageArray) -> Result<()> {
    if !a.same_shape(b) {
        return Err(Error::invalid(format!(
            "image sizes differ: {}x{} vs {}x{}",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )));
    }
    Ok(())
}

/// `||I - I^K||_F^2 / (N_x N_y)`
pub fn mse(reference: &ImageArray, approx: &ImageArray) -> Result<f64> {
    check_same(reference, approx)?;
    let sum: f64 = reference
        .data()
        .iter()
        .zip(approx.data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(sum / reference.pixel_count() as f64)
}

/// `10 log10((2^l - 1)^2 / MSE)` in dB; `+inf` for identical images.
///
/// `approx` is expected to be an intensity image already (rounded and
/// clamped); the bit depth of `reference` sets the peak.
pub fn psnr(reference: &ImageArray, approx: &ImageArray) -> Result<f64> {
    if reference.bit_depth() != approx.bit_depth() {
        return Err(Error::invalid("bit depths differ"));
    }
    let m = mse(reference, approx)?;
    Ok(psnr_from_mse(m, reference.bit_depth()))
}

pub fn psnr_from_mse(mse: f64, bit_depth: u8) -> f64 {
    if mse == 0.0 {
        return f64::INFINITY;
    }
    let peak = crate::image::peak_value(bit_depth);
    10.0 * (peak * peak / mse).log10()
}

/// Structural similarity parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MssimParams {
    pub window: usize,
    pub sigma: f64,
    pub k1: f64,
    pub k2: f64,
}

impl Default for MssimParams {
    fn default() -> Self {
        Self {
            window: 11,
            sigma: 1.5,
            k1: 0.01,
            k2: 0.03,
        }
    }
}

/// Mean SSIM with the default 11x11 Gaussian window (sigma 1.5),
/// `K1 = 0.01`, `K2 = 0.03` and `L = 2^l - 1`.
pub fn mssim(reference: &ImageArray, approx: &ImageArray) -> Result<f64> {
    mssim_with(reference, approx, &MssimParams::default())
}

/// Local statistics are taken over every fully-contained window position
/// (no border padding), and the SSIM map is averaged.
pub fn mssim_with(reference: &ImageArray, approx: &ImageArray, params: &MssimParams) -> Result<f64> {
    check_same(reference, approx)?;
    let win = params.window;
    let (w, h) = (reference.width(), reference.height());
    if win == 0 || w < win || h < win {
        return Err(Error::invalid(format!(
            "image {w}x{h} is smaller than the {win}x{win} SSIM window"
        )));
    }
    let l = reference.peak();
    let c1 = (params.k1 * l).powi(2);
    let c2 = (params.k2 * l).powi(2);
    let kernel = gaussian_kernel(win, params.sigma);

    let x = reference.data();
    let y = approx.data();
    let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.iter().zip(y).map(|(a, b)| a * b).collect();

    let mu_x = filter_valid(x, w, h, &kernel);
    let mu_y = filter_valid(y, w, h, &kernel);
    let e_xx = filter_valid(&xx, w, h, &kernel);
    let e_yy = filter_valid(&yy, w, h, &kernel);
    let e_xy = filter_valid(&xy, w, h, &kernel);

    let n = mu_x.len();
    let mut total = 0.0;
    for i in 0..n {
        let (mx, my) = (mu_x[i], mu_y[i]);
        let sxx = e_xx[i] - mx * mx;
        let syy = e_yy[i] - my * my;
        let sxy = e_xy[i] - mx * my;
        total += ((2.0 * mx * my + c1) * (2.0 * sxy + c2))
            / ((mx * mx + my * my + c1) * (sxx + syy + c2));
    }
    Ok(total / n as f64)
}

fn gaussian_kernel(size: usize, sigma: f64) -> Vec<f64> {
    let center = (size as f64 - 1.0) / 2.0;
    let k: Vec<f64> = (0..size)
        .map(|i| {
            let d = i as f64 - center;
            (-d * d / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let s: f64 = k.iter().sum();
    k.into_iter().map(|v| v / s).collect()
}

/// Separable correlation with `kernel` in both directions, keeping only
/// positions where the window fits.
fn filter_valid(data: &[f64], w: usize, h: usize, kernel: &[f64]) -> Vec<f64> {
    let win = kernel.len();
    let ow = w - win + 1;
    let oh = h - win + 1;
    let mut horiz = vec![0.0; h * ow];
    for r in 0..h {
        let row = &data[r * w..(r + 1) * w];
        for c in 0..ow {
            horiz[r * ow + c] = kernel.iter().zip(&row[c..c + win]).map(|(k, v)| k * v).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for r in 0..oh {
        for c in 0..ow {
            out[r * ow + c] = kernel
                .iter()
                .enumerate()
                .map(|(i, k)| k * horiz[(r + i) * ow + c])
                .sum();
        }
    }
    out
}

/// `SR = N_x N_y / K` over the true (unpadded) pixel count.
pub fn sparsity_ratio(width: usize, height: usize, atoms: usize) -> Result<f64> {
    if atoms == 0 {
        return Err(Error::invalid("sparsity ratio undefined for K = 0"));
    }
    Ok((width * height) as f64 / atoms as f64)
}

/// Relative gain of `sr_a` over `sr_b`, in percent.
pub fn gain(sr_a: f64, sr_b: f64) -> Result<f64> {
    if sr_b.is_nan() || sr_b <= 0.0 {
        return Err(Error::invalid(format!("reference SR must be positive, got {sr_b}")));
    }
    Ok((sr_a - sr_b) / sr_b * 100.0)
}

/// Every way of producing an approximation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Omp2d,
    Spmp2d,
    HbwOmp2d,
    HbwSpmp2d,
    Prune,
    DwtBaseline,
    DctBaseline,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::Omp2d,
        Method::Spmp2d,
        Method::HbwOmp2d,
        Method::HbwSpmp2d,
        Method::Prune,
        Method::DwtBaseline,
        Method::DctBaseline,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Omp2d => "omp2d",
            Method::Spmp2d => "spmp2d",
            Method::HbwOmp2d => "hbw-omp2d",
            Method::HbwSpmp2d => "hbw-spmp2d",
            Method::Prune => "prune",
            Method::DwtBaseline => "dwt-baseline",
            Method::DctBaseline => "dct-baseline",
        }
    }

    pub fn is_dictionary(&self) -> bool {
        !matches!(self, Method::DwtBaseline | Method::DctBaseline)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .iter()
            .copied()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown method {s:?}")))
    }
}

/// Outcome of one approximation run.
#[derive(Debug, Clone, PartialEq)]
pub struct QualityReport {
    pub method: Method,
    pub psnr: f64,
    pub mse: f64,
    pub mssim: f64,
    pub sr: f64,
    pub atoms_total: usize,
    pub elapsed_secs: f64,
    pub block_size: Option<usize>,
    pub levels: Option<usize>,
}

impl QualityReport {
    /// Fill in PSNR, MSE, MSSIM and SR for a reconstruction already rounded
    /// to the intensity range. MSSIM is NaN for images smaller than the
    /// window, SR is infinite for `K = 0`.
    pub fn measure(
        method: Method,
        reference: &ImageArray,
        reconstruction: &ImageArray,
        atoms_total: usize,
        block_size: Option<usize>,
        levels: Option<usize>,
    ) -> Result<Self> {
        let m = mse(reference, reconstruction)?;
        let ssim = match mssim(reference, reconstruction) {
            Ok(v) => v,
            Err(Error::InvalidArgument(_)) => f64::NAN,
            Err(e) => return Err(e),
        };
        Ok(Self {
            method,
            psnr: psnr_from_mse(m, reference.bit_depth()),
            mse: m,
            mssim: ssim,
            sr: if atoms_total == 0 {
                f64::INFINITY
            } else {
                sparsity_ratio(reference.width(), reference.height(), atoms_total)?
            },
            atoms_total,
            elapsed_secs: 0.0,
            block_size,
            levels,
        })
    }
}

/// Version of the CSV layout below; bumped whenever columns change.
pub const CSV_SCHEMA_VERSION: u32 = 1;

pub const CSV_COLUMNS: [&str; 11] = [
    "image",
    "method",
    "N_b",
    "levels",
    "psnr_target",
    "psnr",
    "mssim",
    "K",
    "sr",
    "gain_vs_dwt",
    "seconds",
];

/// One CSV line: a single run, or a MEAN/STDDEV aggregate over runs.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub image: String,
    pub method: Method,
    pub block_size: Option<usize>,
    pub levels: Option<usize>,
    pub psnr_target: f64,
    pub psnr: f64,
    pub mssim: f64,
    /// Atom count; fractional only in aggregate rows.
    pub atoms: f64,
    pub sr: f64,
    pub gain_vs_dwt: Option<f64>,
    pub seconds: f64,
}

impl ReportRow {
    pub fn from_report(image: impl Into<String>, psnr_target: f64, report: &QualityReport, gain_vs_dwt: Option<f64>) -> Self {
        Self {
            image: image.into(),
            method: report.method,
            block_size: report.block_size,
            levels: report.levels,
            psnr_target,
            psnr: report.psnr,
            mssim: report.mssim,
            atoms: report.atoms_total as f64,
            sr: report.sr,
            gain_vs_dwt,
            seconds: report.elapsed_secs,
        }
    }

    /// Fields in [`CSV_COLUMNS`] order. Infinities print as `inf`, missing
    /// or undefined values as empty fields.
    pub fn to_record(&self) -> Vec<String> {
        let opt = |v: Option<usize>| v.map(|x| x.to_string()).unwrap_or_default();
        vec![
            self.image.clone(),
            self.method.to_string(),
            opt(self.block_size),
            opt(self.levels),
            fmt_real(self.psnr_target, 4),
            fmt_real(self.psnr, 4),
            fmt_real(self.mssim, 6),
            if self.atoms.fract() == 0.0 {
                format!("{}", self.atoms)
            } else {
                fmt_real(self.atoms, 2)
            },
            fmt_real(self.sr, 4),
            self.gain_vs_dwt.map(|g| fmt_real(g, 2)).unwrap_or_default(),
            fmt_real(self.seconds, 4),
        ]
    }
}

pub fn fmt_real(v: f64, decimals: usize) -> String {
    if v.is_nan() {
        String::new()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v:.decimals$}")
    }
}
