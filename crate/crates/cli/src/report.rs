//! `report`: time-trace strips, histograms and the overlaid phase-noise PSD
//! of a finished run, as SVG and plain CSV.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use jpo_core::spectra::NoiseSpectra;
use jpo_core::trace_io;

use crate::config::Format;
use crate::pipeline::{Manifest, HISTOGRAM_FILE, SPECTRA_FILE, TRACE_FILE};
use crate::svg::{self, Axis, Plot, Series};
use crate::CliError;

/// Length of the time-trace strips.
pub const STRIP_SECONDS: f64 = 0.015;

/// Frequency at which the 1/f and 1/f^2 guides meet the data.
pub const GUIDE_ANCHOR_HZ: f64 = 1e3;

#[derive(Debug, Clone, Serialize)]
pub struct ReportSummary {
    pub run_dir: String,
    pub output_dir: String,
    pub members_plotted: Vec<usize>,
    pub gaps: Vec<String>,
    pub guide_anchor: Option<(f64, f64)>,
    pub guide_exponents: [f64; 2],
}

struct MemberData {
    index: usize,
    label: String,
    strip: Option<Vec<(f64, f64)>>,
    histogram: Option<Vec<(f64, f64)>>,
    psd: Option<Vec<(f64, f64)>>,
}

fn read_histogram(path: &Path) -> Result<Vec<(f64, f64)>, String> {
    let text = fs::read_to_string(path).map_err(|e| e.to_string())?;
    text.lines()
        .skip(1)
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let (a, b) = l.split_once(',').ok_or("malformed row")?;
            Ok((
                a.trim().parse::<f64>().map_err(|e| e.to_string())?,
                b.trim().parse::<f64>().map_err(|e| e.to_string())?,
            ))
        })
        .collect()
}

fn read_psd(path: &Path) -> Result<Vec<(f64, f64)>, String> {
    let file = fs::File::open(path).map_err(|e| e.to_string())?;
    let sp = NoiseSpectra::read_csv(file).map_err(|e| e.to_string())?;
    let s_aa = sp.s_aa.ok_or("spectra file has no S_aa column")?;
    Ok(sp.freqs.into_iter().zip(s_aa).collect())
}

/// Roughly log-uniform subset of a spectrum for plotting.
fn thin_log(points: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    let mut k = 1;
    while k < points.len() {
        out.push(points[k]);
        k = (k + 1).max((k as f64 * 1.01) as usize);
    }
    out
}

fn thin_linear(points: &[(f64, f64)], max: usize) -> Vec<(f64, f64)> {
    let stride = points.len().div_ceil(max).max(1);
    points.iter().step_by(stride).copied().collect()
}

/// Builds the figure bundle for `run_dir` in `out` (default: a sibling
/// directory named `<run>_report`). Run inputs are only read.
pub fn cmd_report(run_dir: &Path, out: Option<&Path>, formats: &[Format]) -> Result<ReportSummary, CliError> {
    let manifest = Manifest::load(run_dir)?;
    let ok: Vec<_> = manifest.members.iter().filter(|m| m.ok).collect();
    if ok.is_empty() {
        return Err(CliError::Io(format!("{} holds no successful members", run_dir.display())));
    }
    let out: PathBuf = match out {
        Some(o) => o.to_path_buf(),
        None => {
            let name = run_dir
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_else(|| "run".into());
            run_dir.with_file_name(format!("{name}_report"))
        }
    };
    if out.starts_with(run_dir) {
        return Err(CliError::Io("report output must lie outside the run directory".into()));
    }

    let mut gaps = Vec::new();
    for m in manifest.members.iter().filter(|m| !m.ok) {
        gaps.push(format!("{}: failed ({})", m.dir, m.error.as_deref().unwrap_or("unknown")));
    }
    let mut data = Vec::new();
    for m in &ok {
        let dir = run_dir.join(&m.dir);
        let mut note = |what: &str, e: String| gaps.push(format!("{}: {what} unavailable ({e})", m.dir));
        let strip = match trace_io::load(&dir.join(TRACE_FILE)) {
            Ok(t) => {
                let n = ((STRIP_SECONDS * t.sample_rate).round() as usize).clamp(1, t.len());
                Some(
                    (0..n)
                        .map(|k| (1e3 * k as f64 / t.sample_rate, t.i_samples[k]))
                        .collect::<Vec<_>>(),
                )
            }
            Err(e) => {
                note(TRACE_FILE, e.to_string());
                None
            }
        };
        let histogram = read_histogram(&dir.join(HISTOGRAM_FILE)).map_err(|e| note(HISTOGRAM_FILE, e)).ok();
        let psd = read_psd(&dir.join(SPECTRA_FILE)).map_err(|e| note(SPECTRA_FILE, e)).ok();
        data.push(MemberData {
            index: m.index,
            label: format!("N_p = {}", m.photon_number),
            strip,
            histogram,
            psd,
        });
    }

    let anchor = data
        .iter()
        .filter_map(|d| d.psd.as_ref())
        .filter_map(|p| {
            p.iter()
                .skip(1)
                .min_by(|a, b| (a.0 - GUIDE_ANCHOR_HZ).abs().total_cmp(&(b.0 - GUIDE_ANCHOR_HZ).abs()))
                .copied()
        })
        .reduce(|a, b| if b.1 > a.1 { b } else { a });
    let freqs: Vec<f64> = data
        .iter()
        .filter_map(|d| d.psd.as_ref())
        .next()
        .map(|p| thin_log(p).into_iter().map(|x| x.0).collect())
        .unwrap_or_default();
    let guides: Vec<(f64, f64, f64)> = match anchor {
        Some((fa, sa)) => freqs.iter().map(|&f| (f, sa * fa / f, sa * (fa / f).powi(2))).collect(),
        None => Vec::new(),
    };

    fs::create_dir_all(&out)?;
    let want = |f: Format| formats.contains(&f);
    if want(Format::Csv) {
        let mut w = std::io::BufWriter::new(fs::File::create(out.join("traces.csv"))?);
        writeln!(w, "member,t_ms,i")?;
        for d in &data {
            for (t, i) in d.strip.iter().flatten() {
                writeln!(w, "{},{t:e},{i:e}", d.index)?;
            }
        }
        let mut w = std::io::BufWriter::new(fs::File::create(out.join("histograms.csv"))?);
        writeln!(w, "member,bin_center,count")?;
        for d in &data {
            for (c, n) in d.histogram.iter().flatten() {
                writeln!(w, "{},{c:e},{n}", d.index)?;
            }
        }
        let mut w = std::io::BufWriter::new(fs::File::create(out.join("psd.csv"))?);
        writeln!(w, "member,freq_hz,s_aa")?;
        for d in &data {
            for (f, s) in d.psd.iter().flatten() {
                writeln!(w, "{},{f:e},{s:e}", d.index)?;
            }
        }
        let mut w = std::io::BufWriter::new(fs::File::create(out.join("guides.csv"))?);
        writeln!(w, "freq_hz,guide_1f,guide_1f2")?;
        for (f, a, b) in &guides {
            writeln!(w, "{f:e},{a:e},{b:e}")?;
        }
    }
    if want(Format::Svg) {
        let strips: Vec<Plot> = data
            .iter()
            .filter_map(|d| {
                let s = d.strip.as_ref()?;
                let mut p = Plot::new(
                    format!("{} (first {} ms)", d.label, 1e3 * STRIP_SECONDS),
                    Axis::linear("t (ms)"),
                    Axis::linear("I"),
                );
                p.push(Series::new(&d.label, svg::color(d.index), thin_linear(s, 3000)));
                Some(p)
            })
            .collect();
        fs::write(out.join("traces.svg"), svg::render_stack(&strips))?;

        let mut hist = Plot::new("I histograms", Axis::linear("I"), Axis::linear("count"));
        let mut psd = Plot::new("phase noise S_aa", Axis::log("f (Hz)"), Axis::log("S_aa (1/Hz)"));
        for d in &data {
            if let Some(h) = &d.histogram {
                hist.push(Series::new(&d.label, svg::color(d.index), h.clone()));
            }
            if let Some(p) = &d.psd {
                psd.push(Series::new(&d.label, svg::color(d.index), thin_log(p)));
            }
        }
        if !guides.is_empty() {
            psd.push(Series::new("1/f", "#777777", guides.iter().map(|g| (g.0, g.1)).collect()).dashed());
            psd.push(Series::new("1/f^2", "#000000", guides.iter().map(|g| (g.0, g.2)).collect()).dashed());
            // keep the axis on the data, not on the guides
            let (lo, hi) = data
                .iter()
                .filter_map(|d| d.psd.as_ref())
                .flat_map(|p| p.iter().skip(1).map(|x| x.1))
                .filter(|v| *v > 0.0)
                .fold((f64::INFINITY, 0.0f64), |(lo, hi), v| (lo.min(v), hi.max(v)));
            if lo < hi {
                psd.y.range = Some((lo, hi));
            }
        }
        fs::write(out.join("histograms.svg"), hist.render())?;
        fs::write(out.join("psd.svg"), psd.render())?;
    }
    let summary = ReportSummary {
        run_dir: run_dir.display().to_string(),
        output_dir: out.display().to_string(),
        members_plotted: data.iter().map(|d| d.index).collect(),
        gaps,
        guide_anchor: anchor,
        guide_exponents: [-1.0, -2.0],
    };
    let mut text = serde_json::to_string_pretty(&summary)?;
    text.push('\n');
    fs::write(out.join("report.json"), text)?;
    Ok(summary)
}
