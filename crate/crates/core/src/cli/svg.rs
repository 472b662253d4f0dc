//! Minimal SVG line/stem plots. Output is a pure function of the data.

use std::fmt::Write as _;

const W: f64 = 640.0;
const H: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 55.0;

const PALETTE: [&str; 10] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Style {
    Line,
    Markers,
    /// Vertical bars from zero, slightly offset per series.
    Stems,
}

#[derive(Clone, Debug)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    pub style: Style,
}

#[derive(Clone, Debug)]
pub struct Plot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_y: bool,
    pub series: Vec<Series>,
}

impl Plot {
    pub fn new(title: &str, x_label: &str, y_label: &str) -> Self {
        Plot {
            title: title.into(),
            x_label: x_label.into(),
            y_label: y_label.into(),
            log_y: false,
            series: Vec::new(),
        }
    }

    pub fn series(mut self, label: &str, points: Vec<(f64, f64)>, style: Style) -> Self {
        self.series.push(Series {
            label: label.into(),
            points,
            style,
        });
        self
    }

    pub fn log_y(mut self) -> Self {
        self.log_y = true;
        self
    }

    pub fn render(&self) -> String {
        let y_of = |y: f64| if self.log_y { y.max(1e-300).log10() } else { y };
        let pts = self.series.iter().flat_map(|s| s.points.iter());
        let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
        for &(x, y) in pts {
            if self.log_y && y <= 0.0 {
                continue;
            }
            x0 = x0.min(x);
            x1 = x1.max(x);
            y0 = y0.min(y_of(y));
            y1 = y1.max(y_of(y));
        }
        if x0 > x1 {
            (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
        }
        if !self.log_y {
            y0 = y0.min(0.0);
        } else {
            y0 = y0.floor().max(y1 - 12.0);
            y1 = y1.ceil();
        }
        let pad = |a: f64, b: f64| if b > a { (b - a) * 0.05 } else { 0.5 };
        let (px, py) = (pad(x0, x1), pad(y0, y1));
        let (x0, x1) = (x0 - px, x1 + px);
        let y1 = y1 + if self.log_y { 0.0 } else { py };
        let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * (W - LEFT - RIGHT);
        let sy = |y: f64| H - BOTTOM - (y_of(y).max(y0) - y0) / (y1 - y0) * (H - TOP - BOTTOM);

        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
        let _ = writeln!(s, r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#, (W - RIGHT + LEFT) / 2.0, esc(&self.title));
        let (bx, by) = (sx(x0), H - BOTTOM);
        let _ = writeln!(
            s,
            r#"<rect x="{bx:.2}" y="{TOP}" width="{:.2}" height="{:.2}" fill="none" stroke="black"/>"#,
            sx(x1) - bx,
            H - TOP - BOTTOM
        );
        for x in nice_ticks(x0, x1) {
            let _ = writeln!(
                s,
                r#"<line x1="{0:.2}" y1="{by}" x2="{0:.2}" y2="{1}" stroke="black"/><text x="{0:.2}" y="{2}" text-anchor="middle">{3}</text>"#,
                sx(x),
                by + 5.0,
                by + 18.0,
                tick(x)
            );
        }
        for yv in nice_ticks(y0, y1) {
            let ypix = H - BOTTOM - (yv - y0) / (y1 - y0) * (H - TOP - BOTTOM);
            let label = if self.log_y { format!("1e{}", tick(yv)) } else { tick(yv) };
            let _ = writeln!(
                s,
                r#"<line x1="{bx:.2}" y1="{0:.2}" x2="{1:.2}" y2="{0:.2}" stroke="black"/><text x="{2:.2}" y="{3:.2}" text-anchor="end">{4}</text>"#,
                ypix,
                bx - 5.0,
                bx - 8.0,
                ypix + 4.0,
                label
            );
        }
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, (W - RIGHT + LEFT) / 2.0, H - 15.0, esc(&self.x_label));
        let _ = writeln!(
            s,
            r#"<text x="18" y="{0}" text-anchor="middle" transform="rotate(-90 18 {0})">{1}</text>"#,
            (H - BOTTOM + TOP) / 2.0,
            esc(&self.y_label)
        );

        let n_stems = self.series.iter().filter(|x| x.style == Style::Stems).count().max(1) as f64;
        let mut stem_idx = 0.0;
        for (k, ser) in self.series.iter().enumerate() {
            let color = PALETTE[k % PALETTE.len()];
            match ser.style {
                Style::Line => {
                    let path: Vec<String> = ser
                        .points
                        .iter()
                        .filter(|p| !self.log_y || p.1 > 0.0)
                        .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
                        .collect();
                    let _ = writeln!(s, r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#, path.join(" "));
                }
                Style::Markers => {
                    for &(x, y) in ser.points.iter().filter(|p| !self.log_y || p.1 > 0.0) {
                        let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#, sx(x), sy(y));
                    }
                }
                Style::Stems => {
                    let offset = (stem_idx - (n_stems - 1.0) / 2.0) * 4.0;
                    stem_idx += 1.0;
                    for &(x, y) in &ser.points {
                        let _ = writeln!(
                            s,
                            r#"<line x1="{0:.2}" y1="{1:.2}" x2="{0:.2}" y2="{2:.2}" stroke="{color}" stroke-width="3"/>"#,
                            sx(x) + offset,
                            sy(0.0),
                            sy(y)
                        );
                    }
                }
            }
            let ly = TOP + 10.0 + 18.0 * k as f64;
            let lx = W - RIGHT + 12.0;
            let _ = writeln!(
                s,
                r#"<rect x="{lx}" y="{}" width="12" height="4" fill="{color}"/><text x="{}" y="{ly}">{}</text>"#,
                ly - 6.0,
                lx + 16.0,
                esc(&ser.label)
            );
        }
        s.push_str("</svg>\n");
        s
    }
}

/// Ticks at multiples of 1, 2 or 5 × 10^k, about five across `[lo, hi]`.
fn nice_ticks(lo: f64, hi: f64) -> Vec<f64> {
    let raw = (hi - lo) / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|f| f * mag)
        .find(|&st| st >= raw)
        .unwrap_or(10.0 * mag);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last).map(|k| k as f64 * step).collect()
}

fn tick(x: f64) -> String {
    let r = (x * 1e6).round() / 1e6;
    let r = if r == 0.0 { 0.0 } else { r };
    format!("{r}")
}

fn esc(t: &str) -> String {
    t.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
