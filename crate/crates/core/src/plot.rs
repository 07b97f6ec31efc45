//! Static SVG line charts. Plots are a pure function of their CSV input, so
//! they can be regenerated without rerunning anything.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::{Error, Result};

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 500.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 160.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 60.0;
const COLORS: [&str; 8] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"];

#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LineChart {
    pub title: Option<String>,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Round tick step covering `span` in about five intervals.
fn tick_step(span: f64) -> f64 {
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    [1.0, 2.0, 5.0, 10.0].into_iter().map(|m| m * mag).find(|s| *s >= raw).unwrap_or(10.0 * mag)
}

fn padded_range(lo: f64, hi: f64) -> (f64, f64) {
    if hi > lo {
        (lo, hi)
    } else {
        let pad = if lo == 0.0 { 1.0 } else { lo.abs() * 0.1 };
        (lo - pad, hi + pad)
    }
}

impl LineChart {
    pub fn render(&self) -> Result<String> {
        let points = || self.series.iter().flat_map(|s| s.points.iter());
        if points().next().is_none() {
            return Err(Error::invalid("nothing to plot: no data points"));
        }
        if let Some((x, y)) = points().find(|(x, y)| !x.is_finite() || !y.is_finite()) {
            return Err(Error::NonFinite(format!("cannot plot point ({x}, {y})")));
        }
        let (x0, x1) = padded_range(
            points().map(|p| p.0).fold(f64::INFINITY, f64::min),
            points().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max),
        );
        let (y0, y1) = padded_range(
            points().map(|p| p.1).fold(f64::INFINITY, f64::min),
            points().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max),
        );
        let plot_w = WIDTH - LEFT - RIGHT;
        let plot_h = HEIGHT - TOP - BOTTOM;
        let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * plot_w;
        let sy = |y: f64| TOP + (y1 - y) / (y1 - y0) * plot_h;

        let mut svg = String::new();
        writeln!(svg, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#).ok();
        writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#).ok();
        if let Some(title) = &self.title {
            writeln!(svg, r#"<text x="{}" y="18" text-anchor="middle" font-size="14">{}</text>"#, LEFT + plot_w / 2.0, escape(title)).ok();
        }
        writeln!(svg, r#"<g class="axes" stroke="black" fill="none">"#).ok();
        writeln!(svg, r#"<line x1="{LEFT}" y1="{}" x2="{}" y2="{}"/>"#, TOP + plot_h, LEFT + plot_w, TOP + plot_h).ok();
        writeln!(svg, r#"<line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{}"/>"#, TOP + plot_h).ok();
        writeln!(svg, "</g>").ok();

        writeln!(svg, r#"<g class="ticks" fill="black">"#).ok();
        let step = tick_step(x1 - x0);
        let mut t = (x0 / step).ceil() * step;
        while t <= x1 + step * 1e-9 {
            writeln!(svg, r#"<line x1="{0:.2}" y1="{1}" x2="{0:.2}" y2="{2}" stroke="black"/><text x="{0:.2}" y="{3}" text-anchor="middle">{4}</text>"#, sx(t), TOP + plot_h, TOP + plot_h + 5.0, TOP + plot_h + 18.0, trim(t)).ok();
            t += step;
        }
        let step = tick_step(y1 - y0);
        let mut t = (y0 / step).ceil() * step;
        while t <= y1 + step * 1e-9 {
            writeln!(svg, r#"<line x1="{0}" y1="{1:.2}" x2="{2}" y2="{1:.2}" stroke="black"/><text x="{3}" y="{1:.2}" text-anchor="end" dominant-baseline="middle">{4}</text>"#, LEFT - 5.0, sy(t), LEFT, LEFT - 8.0, trim(t)).ok();
            t += step;
        }
        writeln!(svg, "</g>").ok();

        writeln!(svg, r#"<text class="x-label" x="{}" y="{}" text-anchor="middle">{}</text>"#, LEFT + plot_w / 2.0, HEIGHT - 15.0, escape(&self.x_label)).ok();
        writeln!(svg, r#"<text class="y-label" x="20" y="{0}" text-anchor="middle" transform="rotate(-90 20 {0})">{1}</text>"#, TOP + plot_h / 2.0, escape(&self.y_label)).ok();

        for (i, s) in self.series.iter().enumerate() {
            let color = COLORS[i % COLORS.len()];
            let pts: Vec<String> = s.points.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
            writeln!(svg, r#"<polyline data-series="{}" fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#, escape(&s.name), pts.join(" ")).ok();
        }

        writeln!(svg, r#"<g class="legend">"#).ok();
        for (i, s) in self.series.iter().enumerate() {
            let y = TOP + 10.0 + 20.0 * i as f64;
            let x = WIDTH - RIGHT + 15.0;
            writeln!(svg, r#"<line x1="{x}" y1="{y}" x2="{}" y2="{y}" stroke="{}" stroke-width="3"/><text x="{}" y="{y}" dominant-baseline="middle">{}</text>"#, x + 20.0, COLORS[i % COLORS.len()], x + 26.0, escape(&s.name)).ok();
        }
        writeln!(svg, "</g>").ok();
        writeln!(svg, "</svg>").ok();
        Ok(svg)
    }

    /// Renders, then writes. Nothing is written if rendering fails.
    pub fn write(&self, path: &Path) -> Result<()> {
        let svg = self.render()?;
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent)?;
        }
        fs::write(path, svg)?;
        Ok(())
    }
}

fn trim(x: f64) -> String {
    let s = format!("{x:.6}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" { "0".into() } else { s.into() }
}

/// Reads a CSV whose first column is `episode` and whose other columns are
/// one series each.
pub fn parse_series_csv(text: &str) -> Result<Vec<Series>> {
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(text.as_bytes());
    let header: Vec<String> = reader.headers().map_err(|e| Error::Csv(e.to_string()))?.iter().map(str::to_string).collect();
    if header.first().map(String::as_str) != Some("episode") {
        return Err(Error::Csv(format!("first column must be `episode`, found {:?}", header.first())));
    }
    if header.len() < 2 {
        return Err(Error::Csv("no series columns after `episode`".into()));
    }
    let mut series: Vec<Series> = header[1..].iter().map(|n| Series { name: n.clone(), points: Vec::new() }).collect();
    for (i, record) in reader.records().enumerate() {
        let row = i + 2;
        let record = record.map_err(|e| Error::Csv(format!("row {row}: {e}")))?;
        if record.len() != header.len() {
            return Err(Error::Csv(format!("row {row}: expected {} columns, found {}", header.len(), record.len())));
        }
        let parse = |col: usize| -> Result<f64> {
            record[col]
                .trim()
                .parse::<f64>()
                .map_err(|_| Error::Csv(format!("row {row}, column `{}`: `{}` is not a number", header[col], &record[col])))
        };
        let x = parse(0)?;
        for (col, s) in series.iter_mut().enumerate() {
            s.points.push((x, parse(col + 1)?));
        }
    }
    if series[0].points.is_empty() {
        return Err(Error::Csv("no data rows".into()));
    }
    Ok(series)
}

/// Plots an aggregate experiment CSV. Fails without writing on malformed input.
pub fn emit_plot(aggregate_csv: &Path, output_svg: &Path) -> Result<()> {
    let text = fs::read_to_string(aggregate_csv)?;
    let chart = LineChart {
        title: None,
        x_label: "episode".into(),
        y_label: "smoothed average reward".into(),
        series: parse_series_csv(&text)?,
    };
    chart.write(output_svg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_series_three_vertices() {
        let series = parse_series_csv("episode,bellman\n1,-200\n2,-190\n3,-150\n").unwrap();
        let svg = LineChart { title: None, x_label: "episode".into(), y_label: "smoothed average reward".into(), series }
            .render()
            .unwrap();
        assert_eq!(svg.matches("<polyline").count(), 1);
        let points = svg.split("points=\"").nth(1).unwrap().split('"').next().unwrap();
        assert_eq!(points.split(' ').count(), 3);
        assert!(svg.contains(">episode</text>") && svg.contains(">smoothed average reward</text>"));
    }

    #[test]
    fn legend_names() {
        let series = parse_series_csv("episode,bellman,consistent,advantage\n1,1,2,3\n2,2,3,4\n").unwrap();
        let svg = LineChart { title: None, x_label: "x".into(), y_label: "y".into(), series }.render().unwrap();
        for name in ["bellman", "consistent", "advantage"] {
            assert!(svg.contains(&format!(">{name}</text>")));
        }
        assert_eq!(svg.matches("<polyline").count(), 3);
    }

    #[test]
    fn malformed_inputs() {
        let msg = |t: &str| parse_series_csv(t).unwrap_err().to_string();
        assert!(msg("episode,bellman\n").contains("no data rows"));
        assert!(msg("step,bellman\n1,2\n").contains("episode"));
        assert!(msg("episode,bellman\n1,2\n2\n").contains("row 3"));
        assert!(msg("episode,bellman\n1,abc\n").contains("column `bellman`"));
    }

    #[test]
    fn empty_input_writes_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let csv = dir.path().join("a.csv");
        fs::write(&csv, "episode,bellman\n").unwrap();
        let svg = dir.path().join("a.svg");
        assert!(emit_plot(&csv, &svg).is_err());
        assert!(!svg.exists());
    }

    #[test]
    fn flat_series_still_renders() {
        let series = vec![Series { name: "c".into(), points: vec![(1.0, 5.0), (2.0, 5.0)] }];
        assert!(LineChart { title: Some("t".into()), x_label: "x".into(), y_label: "y".into(), series }.render().is_ok());
    }

    #[test]
    fn tick_steps() {
        assert_eq!(tick_step(2000.0), 500.0);
        assert_eq!(tick_step(1.0), 0.2);
    }
}
