//! Self-contained SVG charts from table and sweep CSV files.

use std::fmt::Write as _;
use std::str::FromStr;

use crate::{CliError, Result};

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 420.0;
const MARGIN: (f64, f64, f64, f64) = (60.0, 150.0, 30.0, 50.0); // left, right, top, bottom
const PALETTE: [&str; 8] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"];

/// Headline columns drawn by bar charts of table CSVs.
pub const BAR_COLUMNS: [&str; 5] = ["utility", "item_unfairness", "user_fairness", "diversity", "diversity_ub"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    /// One polyline per method; x is the first column, y the column after `method`.
    Lines,
    /// Grouped bars of the headline columns, one group per row.
    Bars,
}

impl FromStr for PlotKind {
    type Err = CliError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lines" => Ok(PlotKind::Lines),
            "bars" => Ok(PlotKind::Bars),
            _ => Err(CliError::Plot(format!("unknown plot kind `{s}`; expected lines or bars"))),
        }
    }
}

struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

fn read_table(csv_text: &str) -> Result<Table> {
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(csv_text.as_bytes());
    let header = r.headers()?.iter().map(str::to_string).collect();
    let rows = r
        .records()
        .map(|rec| rec.map(|r| r.iter().map(str::to_string).collect()))
        .collect::<std::result::Result<Vec<Vec<String>>, _>>()?;
    Ok(Table { header, rows })
}

fn number(s: &str, what: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| CliError::Plot(format!("{what}: `{s}` is not a number")))
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn span(lo: f64, hi: f64) -> (f64, f64) {
    if hi > lo {
        (lo, hi)
    } else {
        let pad = if lo == 0.0 { 1.0 } else { lo.abs() * 0.05 };
        (lo - pad, hi + pad)
    }
}

struct Frame {
    x: (f64, f64),
    y: (f64, f64),
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        MARGIN.0 + (x - self.x.0) / (self.x.1 - self.x.0) * (WIDTH - MARGIN.0 - MARGIN.1)
    }
    fn py(&self, y: f64) -> f64 {
        HEIGHT - MARGIN.3 - (y - self.y.0) / (self.y.1 - self.y.0) * (HEIGHT - MARGIN.2 - MARGIN.3)
    }
}

fn open_svg(svg: &mut String, title: &str, frame: &Frame, x_label: &str, y_label: &str) {
    let (l, r, t, b) = MARGIN;
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(svg, r#"<text x="{}" y="18" text-anchor="middle">{}</text>"#, WIDTH / 2.0, escape(title));
    let _ = writeln!(
        svg,
        r#"<path d="M{l},{t} V{} H{}" stroke="black" fill="none"/>"#,
        HEIGHT - b,
        WIDTH - r
    );
    for (v, anchor) in [(frame.y.0, HEIGHT - b), (frame.y.1, t)] {
        let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#, l - 4.0, anchor + 4.0, fmt_tick(v));
    }
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        (l + WIDTH - r) / 2.0,
        HEIGHT - 10.0,
        escape(x_label)
    );
    let _ = writeln!(
        svg,
        r#"<text x="14" y="{}" text-anchor="middle" transform="rotate(-90 14 {})">{}</text>"#,
        (t + HEIGHT - b) / 2.0,
        (t + HEIGHT - b) / 2.0,
        escape(y_label)
    );
}

fn fmt_tick(v: f64) -> String {
    format!("{:.4}", v).trim_end_matches('0').trim_end_matches('.').to_string()
}

fn legend(svg: &mut String, names: &[String]) {
    let x = WIDTH - MARGIN.1 + 15.0;
    for (k, name) in names.iter().enumerate() {
        let y = MARGIN.2 + 10.0 + 18.0 * k as f64;
        let c = PALETTE[k % PALETTE.len()];
        let _ = writeln!(svg, r#"<rect x="{x}" y="{}" width="12" height="12" fill="{c}"/>"#, y - 10.0);
        let _ = writeln!(svg, r#"<text x="{}" y="{y}">{}</text>"#, x + 18.0, escape(name));
    }
}

/// Renders `csv_text` (as written by the table or sweep commands) as SVG.
pub fn plot_csv(csv_text: &str, kind: PlotKind) -> Result<String> {
    let table = read_table(csv_text)?;
    if table.rows.is_empty() {
        return Err(CliError::Plot("no data rows".into()));
    }
    match kind {
        PlotKind::Lines => lines(&table),
        PlotKind::Bars => bars(&table),
    }
}

fn lines(table: &Table) -> Result<String> {
    let m = table
        .header
        .iter()
        .position(|h| h == "method")
        .ok_or_else(|| CliError::Plot("line charts need a `method` column".into()))?;
    let y_col = m + 1;
    if m == 0 || y_col >= table.header.len() {
        return Err(CliError::Plot("line charts need x, method and value columns".into()));
    }
    let mut series: Vec<(String, Vec<(f64, f64)>)> = Vec::new();
    for row in &table.rows {
        let x = number(&row[0], &table.header[0])?;
        let y = number(&row[y_col], &table.header[y_col])?;
        let name = row[m].clone();
        match series.iter_mut().find(|s| s.0 == name) {
            Some(s) => s.1.push((x, y)),
            None => series.push((name, vec![(x, y)])),
        }
    }
    let finite = series.iter().flat_map(|s| &s.1).filter(|p| p.0.is_finite() && p.1.is_finite());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in finite {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        return Err(CliError::Plot("no finite points".into()));
    }
    let frame = Frame { x: span(x0, x1), y: span(y0, y1) };
    let mut svg = String::new();
    open_svg(&mut svg, &table.header[y_col], &frame, &table.header[0], &table.header[y_col]);
    for (v, anchor) in [(frame.x.0, "start"), (frame.x.1, "end")] {
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" text-anchor="{anchor}">{}</text>"#,
            frame.px(v),
            HEIGHT - MARGIN.3 + 16.0,
            fmt_tick(v)
        );
    }
    for (k, (_, pts)) in series.iter().enumerate() {
        let c = PALETTE[k % PALETTE.len()];
        let coords: Vec<String> = pts
            .iter()
            .filter(|p| p.0.is_finite() && p.1.is_finite())
            .map(|&(x, y)| format!("{:.2},{:.2}", frame.px(x), frame.py(y)))
            .collect();
        let _ = writeln!(svg, r#"<polyline points="{}" fill="none" stroke="{c}" stroke-width="2"/>"#, coords.join(" "));
        for p in &coords {
            let (x, y) = p.split_once(',').expect("formatted pair");
            let _ = writeln!(svg, r#"<circle cx="{x}" cy="{y}" r="3" fill="{c}"/>"#);
        }
    }
    legend(&mut svg, &series.iter().map(|s| s.0.clone()).collect::<Vec<_>>());
    svg.push_str("</svg>\n");
    Ok(svg)
}

fn bars(table: &Table) -> Result<String> {
    let cols: Vec<usize> = BAR_COLUMNS
        .iter()
        .filter_map(|c| table.header.iter().position(|h| h == c))
        .collect();
    if cols.is_empty() {
        return Err(CliError::Plot("bar charts need at least one headline metric column".into()));
    }
    let values = table
        .rows
        .iter()
        .map(|row| cols.iter().map(|&c| number(&row[c], &table.header[c])).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;
    let hi = values.iter().flatten().copied().filter(|v| v.is_finite()).fold(0.0, f64::max);
    let lo = values.iter().flatten().copied().filter(|v| v.is_finite()).fold(0.0, f64::min);
    let frame = Frame {
        x: (0.0, table.rows.len() as f64),
        y: span(lo, hi),
    };
    let mut svg = String::new();
    open_svg(&mut svg, "metrics by method", &frame, &table.header[0], "value");
    let group = frame.px(1.0) - frame.px(0.0);
    let bar = group * 0.8 / cols.len() as f64;
    for (i, (row, vals)) in table.rows.iter().zip(&values).enumerate() {
        let left = frame.px(i as f64) + group * 0.1;
        for (k, &v) in vals.iter().enumerate() {
            if !v.is_finite() {
                continue;
            }
            let (y_top, y_bot) = (frame.py(v.max(0.0)), frame.py(v.min(0.0)));
            let _ = writeln!(
                svg,
                r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{}"/>"#,
                left + bar * k as f64,
                y_top,
                bar,
                (y_bot - y_top).max(0.5),
                PALETTE[k % PALETTE.len()]
            );
        }
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{}" text-anchor="middle">{}</text>"#,
            left + group * 0.4,
            HEIGHT - MARGIN.3 + 16.0,
            escape(&row[0])
        );
    }
    legend(&mut svg, &cols.iter().map(|&c| table.header[c].clone()).collect::<Vec<_>>());
    svg.push_str("</svg>\n");
    Ok(svg)
}
