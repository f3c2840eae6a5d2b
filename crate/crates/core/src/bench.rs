//! Corpus benchmark harness.
//!
//! A manifest lists one image per line as `path[,psnr_target]`, or
//! `synthetic:<seed>[,psnr_target]` for a generated wavelet-sparse image.
//! Blank lines and lines starting with `#` are skipped; relative paths are
//! resolved against the manifest's directory.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::dictionary::{build_mixed, DictionaryConfig};
use crate::image::ImageArray;
use crate::metrics::{gain, Method, ReportRow, CSV_COLUMNS};
use crate::pipeline::{approximate_image, RunConfig, DEFAULT_LEVELS};
use crate::pursuit::{StopRule, Tolerance};
use crate::synthetic::{wavelet_sparse_image, SyntheticSpec};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum ImageSource {
    File(PathBuf),
    Synthetic(u64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub source: ImageSource,
    pub psnr_target: Option<f64>,
}

impl ManifestEntry {
    pub fn name(&self) -> String {
        match &self.source {
            ImageSource::File(p) => p.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default(),
            ImageSource::Synthetic(seed) => format!("synthetic:{seed}"),
        }
    }

    pub fn load(&self) -> Result<ImageArray> {
        match &self.source {
            ImageSource::File(p) => load_image(p),
            ImageSource::Synthetic(seed) => {
                let dict = build_mixed(&DictionaryConfig::with_block_size(8))?;
                Ok(wavelet_sparse_image(&SyntheticSpec::standard(*seed), &dict)?.image)
            }
        }
    }
}

/// PGM (`.pgm`) or raw float (`.rf64`, `.raw`) by extension.
pub fn load_image(path: &Path) -> Result<ImageArray> {
    let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
    match ext.as_deref() {
        Some("pgm") => crate::io::read_pgm(path),
        Some("rf64") | Some("raw") => crate::io::read_raw(path),
        _ => Err(Error::invalid(format!("unsupported image format: {}", path.display()))),
    }
}

pub fn parse_manifest(text: &str, base: &Path) -> Result<Vec<ManifestEntry>> {
    let mut entries = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (what, psnr) = match line.split_once(',') {
            Some((w, p)) => {
                let db: f64 = p
                    .trim()
                    .parse()
                    .map_err(|_| Error::format(format!("manifest line {}: bad PSNR {p:?}", n + 1)))?;
                (w.trim(), Some(db))
            }
            None => (line, None),
        };
        if what.contains("://") {
            return Err(Error::format(format!(
                "manifest line {}: URLs are not fetched, download the image and list its path",
                n + 1
            )));
        }
        let source = match what.strip_prefix("synthetic:") {
            Some(seed) => ImageSource::Synthetic(
                seed.parse()
                    .map_err(|_| Error::format(format!("manifest line {}: bad seed {seed:?}", n + 1)))?,
            ),
            None => {
                let p = Path::new(what);
                ImageSource::File(if p.is_absolute() { p.to_path_buf() } else { base.join(p) })
            }
        };
        entries.push(ManifestEntry {
            source,
            psnr_target: psnr,
        });
    }
    Ok(entries)
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let text = std::fs::read_to_string(path)?;
    parse_manifest(&text, path.parent().unwrap_or(Path::new(".")))
}

/// What to run on every image.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchMatrix {
    pub methods: Vec<Method>,
    pub block_sizes: Vec<usize>,
    pub levels: Vec<usize>,
    /// Used for entries without their own target.
    pub psnr_target: f64,
    pub prune_overshoot: f64,
    pub eps_proj: Tolerance,
    /// Threads inside each run.
    pub threads: usize,
    /// Images processed concurrently. Timings are only comparable with 1.
    pub jobs: usize,
}

impl Default for BenchMatrix {
    fn default() -> Self {
        Self {
            methods: Method::ALL.to_vec(),
            block_sizes: vec![crate::pipeline::DEFAULT_BLOCK_SIZE],
            levels: vec![DEFAULT_LEVELS],
            psnr_target: 45.0,
            prune_overshoot: 2.0,
            eps_proj: Tolerance::default(),
            threads: 1,
            jobs: 1,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct BenchReport {
    pub rows: Vec<ReportRow>,
    pub summary: Vec<ReportRow>,
    /// `(image, run description, error)` for every run that failed.
    pub failures: Vec<(String, String, String)>,
}

impl BenchReport {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        write_rows(self.rows.iter().chain(&self.summary), out)
    }
}

/// Header line followed by one line per row.
pub fn write_rows<'a, W: Write>(rows: impl IntoIterator<Item = &'a ReportRow>, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_COLUMNS)?;
    for row in rows {
        w.write_record(row.to_record())?;
    }
    w.flush()?;
    Ok(())
}

/// Run every method of `matrix` on every entry. Failing runs are recorded
/// and skipped.
pub fn benchmark_corpus(entries: &[ManifestEntry], matrix: &BenchMatrix) -> Result<BenchReport> {
    if matrix.methods.is_empty() || matrix.block_sizes.is_empty() || matrix.levels.is_empty() {
        return Err(Error::invalid("empty benchmark matrix"));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(matrix.jobs.max(1))
        .build()
        .map_err(|e| Error::InvalidState(e.to_string()))?;
    let per_image: Vec<BenchReport> =
        pool.install(|| entries.par_iter().map(|e| bench_one(e, matrix)).collect());
    let mut report = BenchReport::default();
    for r in per_image {
        report.rows.extend(r.rows);
        report.failures.extend(r.failures);
    }
    report.summary = summarize(&report.rows);
    Ok(report)
}

fn bench_one(entry: &ManifestEntry, matrix: &BenchMatrix) -> BenchReport {
    let name = entry.name();
    let mut out = BenchReport::default();
    let image = match entry.load() {
        Ok(i) => i,
        Err(e) => {
            out.failures.push((name, "load".into(), e.to_string()));
            return out;
        }
    };
    let db = entry.psnr_target.unwrap_or(matrix.psnr_target);
    let config_for = |method, block_size, levels| RunConfig {
        method,
        block_size,
        levels,
        dictionary: None,
        stop: StopRule::TargetPsnr {
            db,
            bit_depth: image.bit_depth(),
        },
        prune_overshoot: matrix.prune_overshoot,
        threads: matrix.threads,
        seed: 0,
        eps_proj: matrix.eps_proj,
        engine: None,
    };

    // DWT reference SR per level count, for the gain column
    let mut dwt_sr: BTreeMap<usize, Option<f64>> = BTreeMap::new();
    for &levels in &matrix.levels {
        match approximate_image(&image, &config_for(Method::DwtBaseline, 8, levels)) {
            Ok(o) => {
                if matrix.methods.contains(&Method::DwtBaseline) {
                    let g = gain(o.report.sr, o.report.sr).ok();
                    out.rows.push(ReportRow::from_report(&name, db, &o.report, g));
                }
                dwt_sr.insert(levels, Some(o.report.sr));
            }
            Err(e) => {
                out.failures.push((name.clone(), format!("dwt-baseline L={levels}"), e.to_string()));
                dwt_sr.insert(levels, None);
            }
        }
    }
    let reference = |levels: usize| dwt_sr.get(&levels).copied().flatten();

    if matrix.methods.contains(&Method::DctBaseline) {
        match approximate_image(&image, &config_for(Method::DctBaseline, 8, matrix.levels[0])) {
            Ok(o) => {
                let g = reference(matrix.levels[0]).and_then(|r| gain(o.report.sr, r).ok());
                out.rows.push(ReportRow::from_report(&name, db, &o.report, g));
            }
            Err(e) => out.failures.push((name.clone(), "dct-baseline".into(), e.to_string())),
        }
    }

    for &levels in &matrix.levels {
        for &nb in &matrix.block_sizes {
            for &method in matrix.methods.iter().filter(|m| m.is_dictionary()) {
                match approximate_image(&image, &config_for(method, nb, levels)) {
                    Ok(o) if o.target_met => {
                        let g = reference(levels).and_then(|r| gain(o.report.sr, r).ok());
                        out.rows.push(ReportRow::from_report(&name, db, &o.report, g));
                    }
                    Ok(o) => out.failures.push((
                        name.clone(),
                        format!("{method} N_b={nb} L={levels}"),
                        format!("target {db} dB not met, reached {:.4} dB", o.report.psnr),
                    )),
                    Err(e) => out
                        .failures
                        .push((name.clone(), format!("{method} N_b={nb} L={levels}"), e.to_string())),
                }
            }
        }
    }
    out
}

type GroupKey = (Method, Option<usize>, Option<usize>);

/// MEAN and STDDEV (sample) rows per method, block size and level count.
pub fn summarize(rows: &[ReportRow]) -> Vec<ReportRow> {
    let mut groups: BTreeMap<GroupKey, Vec<&ReportRow>> = BTreeMap::new();
    for r in rows {
        groups.entry((r.method, r.block_size, r.levels)).or_default().push(r);
    }
    let mut out = Vec::new();
    for ((method, block_size, levels), rs) in groups {
        let col = |f: &dyn Fn(&ReportRow) -> f64| -> Vec<f64> { rs.iter().map(|r| f(r)).collect() };
        let gains: Vec<f64> = rs.iter().filter_map(|r| r.gain_vs_dwt).collect();
        let targets = col(&|r| r.psnr_target);
        let target = if targets.iter().all(|t| *t == targets[0]) { targets[0] } else { f64::NAN };
        let make = |image: &str, stat: fn(&[f64]) -> f64| ReportRow {
            image: image.into(),
            method,
            block_size,
            levels,
            psnr_target: target,
            psnr: stat(&col(&|r| r.psnr)),
            mssim: stat(&col(&|r| r.mssim)),
            atoms: stat(&col(&|r| r.atoms)),
            sr: stat(&col(&|r| r.sr)),
            gain_vs_dwt: if gains.len() == rs.len() { Some(stat(&gains)) } else { None },
            seconds: stat(&col(&|r| r.seconds)),
        };
        out.push(make("MEAN", mean));
        out.push(make("STDDEV", sample_std));
    }
    out
}

pub fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.iter().sum::<f64>() / v.len() as f64
}

/// Sample standard deviation; undefined (NaN) below two values or when any
/// value is infinite.
pub fn sample_std(v: &[f64]) -> f64 {
    if v.len() < 2 || v.iter().any(|x| !x.is_finite()) {
        return f64::NAN;
    }
    let m = mean(v);
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_parsing() {
        let text = "# corpus\n\nhand1.pgm, 48.1\n/abs/x.pgm\nsynthetic:7,45\n";
        let e = parse_manifest(text, Path::new("/data")).unwrap();
        assert_eq!(e.len(), 3);
        assert_eq!(e[0].source, ImageSource::File(PathBuf::from("/data/hand1.pgm")));
        assert_eq!(e[0].psnr_target, Some(48.1));
        assert_eq!(e[1].source, ImageSource::File(PathBuf::from("/abs/x.pgm")));
        assert_eq!(e[2].source, ImageSource::Synthetic(7));
        assert_eq!(e[2].name(), "synthetic:7");
        assert!(parse_manifest("a.pgm,x\n", Path::new(".")).is_err());
        assert!(parse_manifest("https://host/a.pgm\n", Path::new(".")).is_err());
    }

    #[test]
    fn statistics() {
        assert_eq!(mean(&[1.0, 2.0, 3.0]), 2.0);
        assert_eq!(sample_std(&[1.0, 2.0, 3.0]), 1.0);
        assert!(sample_std(&[1.0]).is_nan());
    }

    #[test]
    fn summary_averages_gain() {
        let row = |image: &str, sr: f64, g: f64| ReportRow {
            image: image.into(),
            method: Method::Omp2d,
            block_size: Some(8),
            levels: Some(3),
            psnr_target: 40.0,
            psnr: 40.5,
            mssim: 0.99,
            atoms: 10.0,
            sr,
            gain_vs_dwt: Some(g),
            seconds: 1.0,
        };
        let s = summarize(&[row("a", 10.0, 100.0), row("b", 30.0, 50.0)]);
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].image, "MEAN");
        assert_eq!(s[0].sr, 20.0);
        assert_eq!(s[0].gain_vs_dwt, Some(75.0));
        assert_eq!(s[1].image, "STDDEV");
    }
}
