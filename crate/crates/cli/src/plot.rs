//! SVG plots from report CSVs. The kind of each report is read from its
//! header: training losses, bench results or step sweeps from `eval`.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use lumenlab_core::annotation::Attribute;
use lumenlab_core::evalbench::bench_csv_header;
use lumenlab_core::trainer::LOSS_CSV_HEADER;
use lumenlab_core::{Error, Result};

use crate::commands::EVAL_CSV_HEADER;

const W: f64 = 640.0;
const H: f64 = 400.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

#[derive(Debug, Clone, PartialEq)]
pub struct LossPoint {
    pub iteration: f64,
    pub l0: f64,
    pub l_fast: f64,
    pub l_phy: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub model: String,
    pub per_attribute: [f64; 6],
    pub avg: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub model: String,
    pub steps: usize,
    pub psnr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Report {
    Loss(Vec<LossPoint>),
    Bench(Vec<BenchRow>),
    Eval(Vec<EvalRow>),
}

fn field<T: std::str::FromStr>(path: &Path, line: u64, rec: &csv::StringRecord, i: usize, name: &str) -> Result<T> {
    rec.get(i)
        .and_then(|v| v.trim().parse().ok())
        .ok_or_else(|| Error::parse(path, format!("line {line}: bad or missing {name}")))
}

/// Parse one report; errors name the file and line.
pub fn parse_report(path: &Path) -> Result<Report> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let header = text.lines().next().unwrap_or("").trim().to_string();
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let mut records = Vec::new();
    for r in rdr.records() {
        let r = r.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            Error::parse(path, format!("line {line}: {e}"))
        })?;
        let line = r.position().map_or(0, |p| p.line());
        records.push((line, r));
    }
    let report = if header == LOSS_CSV_HEADER {
        let mut pts = Vec::new();
        for (line, r) in &records {
            pts.push(LossPoint {
                iteration: field(path, *line, r, 0, "iteration")?,
                l0: field(path, *line, r, 1, "L0")?,
                l_fast: field(path, *line, r, 2, "Lfast")?,
                l_phy: field(path, *line, r, 3, "Lphy")?,
                total: field(path, *line, r, 4, "total")?,
            });
        }
        Report::Loss(pts)
    } else if header == bench_csv_header() {
        let mut rows = Vec::new();
        for (line, r) in &records {
            let mut per = [0.0; 6];
            for (i, a) in Attribute::ALL.iter().enumerate() {
                per[i] = field(path, *line, r, 2 + i, a.name())?;
            }
            rows.push(BenchRow {
                model: r.get(0).unwrap_or("").to_string(),
                per_attribute: per,
                avg: field(path, *line, r, 8, "avg")?,
            });
        }
        Report::Bench(rows)
    } else if header == EVAL_CSV_HEADER {
        let mut rows = Vec::new();
        for (line, r) in &records {
            rows.push(EvalRow {
                model: r.get(0).unwrap_or("").to_string(),
                steps: field(path, *line, r, 1, "steps")?,
                psnr: field(path, *line, r, 3, "psnr")?,
            });
        }
        Report::Eval(rows)
    } else {
        return Err(Error::parse(path, "line 1: unrecognised report header"));
    };
    let empty = match &report {
        Report::Loss(v) => v.is_empty(),
        Report::Bench(v) => v.is_empty(),
        Report::Eval(v) => v.is_empty(),
    };
    if empty {
        return Err(Error::parse(path, "line 2: report has no rows"));
    }
    Ok(report)
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        let span = (self.x1 - self.x0).max(1e-12);
        LEFT + (x - self.x0) / span * (W - LEFT - RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        let span = (self.y1 - self.y0).max(1e-12);
        H - BOTTOM - (y - self.y0) / span * (H - TOP - BOTTOM)
    }
}

fn open_svg(title: &str, xlabel: &str, ylabel: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#, W / 2.0, esc(title));
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, W / 2.0, H - 12.0, esc(xlabel));
    let _ = writeln!(
        s,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
        H / 2.0,
        H / 2.0,
        esc(ylabel)
    );
    s
}

fn axes(s: &mut String, f: &Frame) {
    let _ = writeln!(
        s,
        r#"<path d="M{LEFT} {TOP} V{} H{}" fill="none" stroke="black"/>"#,
        H - BOTTOM,
        W - RIGHT
    );
    for k in 0..=4 {
        let v = f.y0 + (f.y1 - f.y0) * k as f64 / 4.0;
        let y = f.py(v);
        let _ = writeln!(
            s,
            r#"<line x1="{}" y1="{y}" x2="{LEFT}" y2="{y}" stroke="black"/><text x="{}" y="{}" text-anchor="end">{}</text>"#,
            LEFT - 4.0,
            LEFT - 6.0,
            y + 4.0,
            tick(v)
        );
    }
}

fn tick(v: f64) -> String {
    if v != 0.0 && (v.abs() < 1e-2 || v.abs() >= 1e4) {
        format!("{v:.1e}")
    } else {
        format!("{v:.3}")
    }
}

fn legend(s: &mut String, names: &[&str]) {
    for (i, n) in names.iter().enumerate() {
        let y = TOP + 14.0 * i as f64;
        let x = W - RIGHT - 150.0;
        let _ = writeln!(
            s,
            r#"<rect x="{x}" y="{}" width="10" height="10" fill="{}"/><text x="{}" y="{}">{}</text>"#,
            y - 9.0,
            COLORS[i % COLORS.len()],
            x + 14.0,
            y,
            esc(n)
        );
    }
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

fn polyline(s: &mut String, f: &Frame, pts: &[(f64, f64)], color: &str, dashed: bool) {
    let mut d = String::new();
    for (x, y) in pts.iter().filter(|(_, y)| y.is_finite()) {
        let _ = write!(d, "{:.2},{:.2} ", f.px(*x), f.py(*y));
    }
    let dash = if dashed { r#" stroke-dasharray="6 4""# } else { "" };
    let _ = writeln!(
        s,
        r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"{dash}/>"#,
        d.trim_end()
    );
}

pub fn loss_svg(title: &str, pts: &[LossPoint]) -> String {
    let series: [(&str, Vec<(f64, f64)>); 4] = [
        ("total", pts.iter().map(|p| (p.iteration, p.total)).collect()),
        ("L0", pts.iter().map(|p| (p.iteration, p.l0)).collect()),
        ("Lfast", pts.iter().map(|p| (p.iteration, p.l_fast)).collect()),
        ("Lphy", pts.iter().map(|p| (p.iteration, p.l_phy)).collect()),
    ];
    let (x0, x1) = bounds(pts.iter().map(|p| p.iteration));
    let (_, y1) = bounds(series.iter().flat_map(|(_, v)| v.iter().map(|p| p.1)));
    let f = Frame { x0, x1, y0: 0.0, y1 };
    let mut s = open_svg(title, "iteration", "loss");
    axes(&mut s, &f);
    for (i, (_, v)) in series.iter().enumerate() {
        polyline(&mut s, &f, v, COLORS[i], false);
    }
    legend(&mut s, &series.iter().map(|(n, _)| *n).collect::<Vec<_>>());
    s.push_str("</svg>\n");
    s
}

/// Grouped bars: six attribute groups, one bar per report row. Each bar
/// carries its exact value in `data-value`.
pub fn attribute_svg(title: &str, rows: &[BenchRow]) -> String {
    let f = Frame {
        x0: 0.0,
        x1: 6.0,
        y0: 0.0,
        y1: 1.0,
    };
    let mut s = open_svg(title, "attribute", "accuracy");
    axes(&mut s, &f);
    let group = f.px(1.0) - f.px(0.0);
    let bar = group * 0.8 / rows.len() as f64;
    for (ai, a) in Attribute::ALL.iter().enumerate() {
        let gx = f.px(ai as f64) + group * 0.1;
        for (ri, r) in rows.iter().enumerate() {
            let v = r.per_attribute[ai];
            let top = f.py(v.clamp(0.0, 1.0));
            let _ = writeln!(
                s,
                r#"<rect class="bar" data-attribute="{}" data-model="{}" data-value="{}" x="{:.2}" y="{top:.2}" width="{bar:.2}" height="{:.2}" fill="{}"/>"#,
                a.name(),
                esc(&r.model),
                v,
                gx + bar * ri as f64,
                f.py(0.0) - top,
                COLORS[ri % COLORS.len()]
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{}" text-anchor="middle" font-size="10">{}</text>"#,
            f.px(ai as f64 + 0.5),
            H - BOTTOM + 16.0,
            a.name()
        );
    }
    let names: Vec<String> = rows.iter().map(|r| format!("{} (avg {:.3})", r.model, r.avg)).collect();
    legend(&mut s, &names.iter().map(String::as_str).collect::<Vec<_>>());
    s.push_str("</svg>\n");
    s
}

/// PSNR against the number of sampling steps (log scale). Rows with zero
/// steps are baselines and drawn as dashed horizontal lines.
pub fn steps_svg(title: &str, rows: &[EvalRow]) -> String {
    let stepped: Vec<&EvalRow> = rows.iter().filter(|r| r.steps > 0).collect();
    let (x0, x1) = bounds(stepped.iter().map(|r| (r.steps as f64).log2()));
    let (y0, y1) = bounds(rows.iter().map(|r| r.psnr));
    let pad = (y1 - y0) * 0.1;
    let f = Frame {
        x0,
        x1,
        y0: y0 - pad,
        y1: y1 + pad,
    };
    let mut s = open_svg(title, "sampling steps", "PSNR (dB)");
    axes(&mut s, &f);
    let mut models: Vec<&str> = Vec::new();
    for r in rows {
        if !models.contains(&r.model.as_str()) {
            models.push(&r.model);
        }
    }
    for (i, m) in models.iter().enumerate() {
        let mine: Vec<&EvalRow> = rows.iter().filter(|r| r.model == *m).collect();
        let color = COLORS[i % COLORS.len()];
        if mine.iter().all(|r| r.steps == 0) {
            let y = mine[0].psnr;
            polyline(&mut s, &f, &[(f.x0, y), (f.x1, y)], color, true);
        } else {
            let pts: Vec<(f64, f64)> = mine
                .iter()
                .filter(|r| r.steps > 0)
                .map(|r| ((r.steps as f64).log2(), r.psnr))
                .collect();
            polyline(&mut s, &f, &pts, color, false);
        }
    }
    for r in &stepped {
        let x = f.px((r.steps as f64).log2());
        let _ = writeln!(
            s,
            r#"<text x="{x:.2}" y="{}" text-anchor="middle">{}</text>"#,
            H - BOTTOM + 16.0,
            r.steps
        );
    }
    legend(&mut s, &models);
    s.push_str("</svg>\n");
    s
}

/// Parse every report, then write one plot per report into `out`. Nothing
/// is written unless all reports parse.
pub fn emit_plots(reports: &[PathBuf], out: &Path) -> Result<Vec<PathBuf>> {
    if reports.is_empty() {
        return Err(Error::Empty("no reports given".into()));
    }
    let parsed: Vec<Report> = reports.iter().map(|p| parse_report(p)).collect::<Result<_>>()?;
    let mut files = Vec::new();
    for (i, (p, r)) in reports.iter().zip(&parsed).enumerate() {
        let stem = p.file_stem().map_or_else(|| "report".into(), |s| s.to_string_lossy().into_owned());
        let (suffix, svg) = match r {
            Report::Loss(v) => ("loss", loss_svg(&format!("Training losses ({stem})"), v)),
            Report::Bench(v) => ("attributes", attribute_svg(&format!("Attribute accuracy ({stem})"), v)),
            Report::Eval(v) => ("steps_psnr", steps_svg(&format!("PSNR against sampling steps ({stem})"), v)),
        };
        files.push((out.join(format!("{i:02}_{stem}_{suffix}.svg")), svg));
    }
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    for (path, svg) in &files {
        std::fs::write(path, svg).map_err(|e| Error::io(path, e))?;
    }
    Ok(files.into_iter().map(|(p, _)| p).collect())
}
