//! Static SVG charts. Each file carries its plotted data as a CSV block in
//! a leading comment and contains nothing run-dependent, so identical data
//! gives identical bytes.

use std::fmt::Write;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 160.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const TICKS: usize = 5;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Style {
    /// Right-continuous step function, as for an ECDF.
    Step,
    Points,
    Line,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
    pub style: Style,
}

impl Series {
    pub fn new(name: impl Into<String>, points: Vec<(f64, f64)>, style: Style) -> Self {
        Series {
            name: name.into(),
            points,
            style,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Chart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_x: bool,
    pub log_y: bool,
    pub series: Vec<Series>,
}

/// One labelled estimate with its interval.
#[derive(Debug, Clone, PartialEq)]
pub struct Interval {
    pub label: String,
    pub estimate: f64,
    pub low: f64,
    pub high: f64,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Text safe inside an XML comment.
fn comment_safe(s: &str) -> String {
    let mut out = s.replace("--", "- -");
    if out.ends_with('-') {
        out.push(' ');
    }
    out
}

fn num(v: f64) -> String {
    format!("{:.2}", v)
}

fn tick_label(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let a = v.abs();
    if (1e-3..1e6).contains(&a) {
        let s = format!("{:.3}", v);
        let s = s.trim_end_matches('0').trim_end_matches('.');
        s.to_string()
    } else {
        format!("{:.1e}", v)
    }
}

struct Axis {
    lo: f64,
    hi: f64,
    log: bool,
}

impl Axis {
    fn fit(values: impl Iterator<Item = f64>, log: bool) -> Axis {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in values {
            let v = if log { v.log10() } else { v };
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if !lo.is_finite() {
            (lo, hi) = (0.0, 1.0);
        }
        if hi - lo < 1e-12 {
            lo -= 0.5;
            hi += 0.5;
        } else {
            let pad = 0.04 * (hi - lo);
            lo -= pad;
            hi += pad;
        }
        Axis { lo, hi, log }
    }

    fn frac(&self, v: f64) -> f64 {
        let v = if self.log { v.log10() } else { v };
        (v - self.lo) / (self.hi - self.lo)
    }

    fn ticks(&self) -> Vec<(f64, String)> {
        (0..TICKS)
            .map(|i| {
                let t = self.lo + (self.hi - self.lo) * i as f64 / (TICKS - 1) as f64;
                let shown = if self.log { 10f64.powf(t) } else { t };
                (t, tick_label(shown))
            })
            .collect()
    }
}

fn usable(v: f64, log: bool) -> bool {
    v.is_finite() && (!log || v > 0.0)
}

fn header(svg: &mut String, data: &str, title: &str) {
    let _ = writeln!(svg, "<?xml version=\"1.0\" encoding=\"UTF-8\"?>");
    let _ = writeln!(svg, "<!-- data\n{}-->", comment_safe(data));
    let _ = writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\" font-family=\"sans-serif\" font-size=\"12\">",
        w = WIDTH,
        h = HEIGHT
    );
    let _ = writeln!(svg, "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>");
    let _ = writeln!(
        svg,
        "<text x=\"{}\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">{}</text>",
        num((LEFT + WIDTH - RIGHT) / 2.0),
        escape(title)
    );
}

fn frame(svg: &mut String, x: Option<&Axis>, y: &Axis, x_label: &str, y_label: &str) {
    let (x0, x1, y0, y1) = (LEFT, WIDTH - RIGHT, HEIGHT - BOTTOM, TOP);
    let _ = writeln!(
        svg,
        "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#444\"/>",
        num(x0),
        num(y1),
        num(x1 - x0),
        num(y0 - y1)
    );
    for (t, label) in y.ticks() {
        let py = y0 - (t - y.lo) / (y.hi - y.lo) * (y0 - y1);
        let _ = writeln!(
            svg,
            "<line x1=\"{a}\" y1=\"{p}\" x2=\"{b}\" y2=\"{p}\" stroke=\"#ddd\"/><text x=\"{c}\" y=\"{q}\" text-anchor=\"end\">{l}</text>",
            a = num(x0),
            b = num(x1),
            p = num(py),
            c = num(x0 - 6.0),
            q = num(py + 4.0),
            l = escape(&label)
        );
    }
    if let Some(x) = x {
        for (t, label) in x.ticks() {
            let px = x0 + (t - x.lo) / (x.hi - x.lo) * (x1 - x0);
            let _ = writeln!(
                svg,
                "<line x1=\"{p}\" y1=\"{a}\" x2=\"{p}\" y2=\"{b}\" stroke=\"#ddd\"/><text x=\"{p}\" y=\"{q}\" text-anchor=\"middle\">{l}</text>",
                p = num(px),
                a = num(y1),
                b = num(y0),
                q = num(y0 + 16.0),
                l = escape(&label)
            );
        }
    }
    let _ = writeln!(
        svg,
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>",
        num((x0 + x1) / 2.0),
        num(HEIGHT - 12.0),
        escape(x_label)
    );
    let _ = writeln!(
        svg,
        "<text x=\"16\" y=\"{c}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {c})\">{}</text>",
        escape(y_label),
        c = num((y0 + y1) / 2.0)
    );
}

fn legend(svg: &mut String, names: &[&str]) {
    for (i, name) in names.iter().enumerate() {
        let y = TOP + 14.0 + 18.0 * i as f64;
        let x = WIDTH - RIGHT + 14.0;
        let _ = writeln!(
            svg,
            "<rect x=\"{}\" y=\"{}\" width=\"12\" height=\"12\" fill=\"{}\"/><text x=\"{}\" y=\"{}\">{}</text>",
            num(x),
            num(y - 10.0),
            PALETTE[i % PALETTE.len()],
            num(x + 18.0),
            num(y),
            escape(name)
        );
    }
}

impl Chart {
    pub fn new(title: impl Into<String>, x_label: impl Into<String>, y_label: impl Into<String>) -> Self {
        Chart {
            title: title.into(),
            x_label: x_label.into(),
            y_label: y_label.into(),
            log_x: false,
            log_y: false,
            series: Vec::new(),
        }
    }

    pub fn log_axes(mut self, log_x: bool, log_y: bool) -> Self {
        self.log_x = log_x;
        self.log_y = log_y;
        self
    }

    pub fn with(mut self, series: Series) -> Self {
        self.series.push(series);
        self
    }

    /// Plotted points as CSV; points unusable on a log axis are omitted
    /// from the drawing but kept here.
    pub fn data_csv(&self) -> String {
        let mut s = String::from("series,x,y\n");
        for series in &self.series {
            for &(x, y) in &series.points {
                let _ = writeln!(s, "{},{},{}", series.name, x, y);
            }
        }
        s
    }

    pub fn to_svg(&self) -> String {
        let kept: Vec<Vec<(f64, f64)>> = self
            .series
            .iter()
            .map(|s| {
                s.points
                    .iter()
                    .copied()
                    .filter(|&(x, y)| usable(x, self.log_x) && usable(y, self.log_y))
                    .collect()
            })
            .collect();
        let xa = Axis::fit(kept.iter().flatten().map(|p| p.0), self.log_x);
        let ya = Axis::fit(kept.iter().flatten().map(|p| p.1), self.log_y);
        let mut svg = String::new();
        header(&mut svg, &self.data_csv(), &self.title);
        frame(&mut svg, Some(&xa), &ya, &self.x_label, &self.y_label);
        let px = |x: f64| LEFT + xa.frac(x) * (WIDTH - RIGHT - LEFT);
        let py = |y: f64| HEIGHT - BOTTOM - ya.frac(y) * (HEIGHT - BOTTOM - TOP);
        for (i, (series, points)) in self.series.iter().zip(&kept).enumerate() {
            let color = PALETTE[i % PALETTE.len()];
            match series.style {
                Style::Points => {
                    for &(x, y) in points {
                        let _ = writeln!(
                            svg,
                            "<circle cx=\"{}\" cy=\"{}\" r=\"3\" fill=\"{color}\"/>",
                            num(px(x)),
                            num(py(y))
                        );
                    }
                }
                Style::Line | Style::Step => {
                    if points.is_empty() {
                        continue;
                    }
                    let mut d = String::new();
                    let mut prev_y = None;
                    for (j, &(x, y)) in points.iter().enumerate() {
                        let cmd = if j == 0 { 'M' } else { 'L' };
                        if let (Style::Step, Some(py0)) = (series.style, prev_y) {
                            let _ = write!(d, "L{},{} ", num(px(x)), num(py0));
                        }
                        let _ = write!(d, "{cmd}{},{} ", num(px(x)), num(py(y)));
                        prev_y = Some(py(y));
                    }
                    let _ = writeln!(
                        svg,
                        "<path d=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"/>",
                        d.trim_end()
                    );
                }
            }
        }
        let names: Vec<&str> = self.series.iter().map(|s| s.name.as_str()).collect();
        legend(&mut svg, &names);
        svg.push_str("</svg>\n");
        svg
    }
}

/// Estimates with interval bars, one column per item.
pub fn interval_chart(title: &str, y_label: &str, items: &[Interval]) -> String {
    let mut data = String::from("label,estimate,low,high\n");
    for it in items {
        let _ = writeln!(data, "{},{},{},{}", it.label, it.estimate, it.low, it.high);
    }
    let ya = Axis::fit(
        items
            .iter()
            .flat_map(|i| [i.low, i.high, i.estimate, 0.0])
            .filter(|v| v.is_finite()),
        false,
    );
    let mut svg = String::new();
    header(&mut svg, &data, title);
    frame(&mut svg, None, &ya, "", y_label);
    let py = |y: f64| HEIGHT - BOTTOM - ya.frac(y) * (HEIGHT - BOTTOM - TOP);
    let zero = py(0.0);
    let _ = writeln!(
        svg,
        "<line x1=\"{}\" y1=\"{z}\" x2=\"{}\" y2=\"{z}\" stroke=\"#888\" stroke-dasharray=\"4 3\"/>",
        num(LEFT),
        num(WIDTH - RIGHT),
        z = num(zero)
    );
    let span = WIDTH - RIGHT - LEFT;
    for (i, it) in items.iter().enumerate() {
        let x = LEFT + span * (i as f64 + 0.5) / items.len().max(1) as f64;
        let color = PALETTE[i % PALETTE.len()];
        let _ = writeln!(
            svg,
            "<line x1=\"{x}\" y1=\"{a}\" x2=\"{x}\" y2=\"{b}\" stroke=\"{color}\" stroke-width=\"2\"/><circle cx=\"{x}\" cy=\"{c}\" r=\"4\" fill=\"{color}\"/><text x=\"{x}\" y=\"{t}\" text-anchor=\"middle\">{l}</text>",
            x = num(x),
            a = num(py(it.low)),
            b = num(py(it.high)),
            c = num(py(it.estimate)),
            t = num(HEIGHT - BOTTOM + 16.0),
            l = escape(&it.label)
        );
    }
    svg.push_str("</svg>\n");
    svg
}
