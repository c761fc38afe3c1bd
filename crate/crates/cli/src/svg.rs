//! Minimal SVG 1.1 charts. Every data point is its own element carrying its
//! values as `data-*` attributes, so outputs can be checked by string search.

use std::fmt::Write as _;

use topodepth::format::fmt_f64;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 30.0;
const TOP: f64 = 50.0;
const BOTTOM: f64 = 60.0;
const TICKS: usize = 5;

#[derive(Debug, Clone, Copy)]
pub enum Marker {
    Circle,
    Square,
    Triangle,
}

/// Series styles, indexed by homology dimension where that applies.
pub const STYLES: [(&str, Marker); 3] = [
    ("#1f77b4", Marker::Circle),
    ("#d62728", Marker::Square),
    ("#2ca02c", Marker::Triangle),
];

pub struct Chart {
    title: String,
    x_label: String,
    y_label: String,
    x: (f64, f64),
    y: (f64, f64),
    body: String,
    legend: Vec<(String, String)>,
}

/// Widens a range so it is non-empty and has a little headroom.
pub fn padded(lo: f64, hi: f64) -> (f64, f64) {
    if !(lo.is_finite() && hi.is_finite()) {
        return (0.0, 1.0);
    }
    if hi <= lo {
        let pad = if lo == 0.0 { 1.0 } else { lo.abs() * 0.1 };
        return (lo - pad, lo + pad);
    }
    let pad = (hi - lo) * 0.05;
    (lo - pad, hi + pad)
}

pub fn range_of(values: impl IntoIterator<Item = f64>) -> (f64, f64) {
    values
        .into_iter()
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
}

pub fn escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

impl Chart {
    pub fn new(title: &str, x_label: &str, y_label: &str, x: (f64, f64), y: (f64, f64)) -> Self {
        Self {
            title: title.into(),
            x_label: x_label.into(),
            y_label: y_label.into(),
            x,
            y,
            body: String::new(),
            legend: Vec::new(),
        }
    }

    fn px(&self, x: f64) -> f64 {
        LEFT + (x - self.x.0) / (self.x.1 - self.x.0) * (WIDTH - LEFT - RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - BOTTOM - (y - self.y.0) / (self.y.1 - self.y.0) * (HEIGHT - TOP - BOTTOM)
    }

    pub fn point(&mut self, class: &str, style: (&str, Marker), at: (f64, f64), data: &[(&str, String)]) {
        let (cx, cy) = (self.px(at.0), self.py(at.1));
        let attrs: String = data
            .iter()
            .map(|(k, v)| format!(" data-{k}=\"{}\"", escape(v)))
            .collect();
        let (color, marker) = style;
        let _ = match marker {
            Marker::Circle => writeln!(
                self.body,
                r#"<circle class="{class}" cx="{cx:.2}" cy="{cy:.2}" r="4" fill="{color}"{attrs}/>"#
            ),
            Marker::Square => writeln!(
                self.body,
                r#"<rect class="{class}" x="{:.2}" y="{:.2}" width="8" height="8" fill="{color}"{attrs}/>"#,
                cx - 4.0,
                cy - 4.0
            ),
            Marker::Triangle => writeln!(
                self.body,
                r#"<polygon class="{class}" points="{:.2},{:.2} {:.2},{:.2} {:.2},{:.2}" fill="{color}"{attrs}/>"#,
                cx,
                cy - 5.0,
                cx - 5.0,
                cy + 4.0,
                cx + 5.0,
                cy + 4.0
            ),
        };
    }

    pub fn polyline(&mut self, class: &str, color: &str, points: &[(f64, f64)]) {
        let coords: Vec<String> = points
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", self.px(x), self.py(y)))
            .collect();
        let _ = writeln!(
            self.body,
            r#"<polyline class="{class}" points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
            coords.join(" ")
        );
    }

    pub fn line(&mut self, class: &str, from: (f64, f64), to: (f64, f64), dashed: bool) {
        let dash = if dashed { r#" stroke-dasharray="4 3""# } else { "" };
        let _ = writeln!(
            self.body,
            r##"<line class="{class}" x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="#555"{dash}/>"##,
            self.px(from.0),
            self.py(from.1),
            self.px(to.0),
            self.py(to.1)
        );
    }

    /// Text label at data coordinates.
    pub fn label(&mut self, at: (f64, f64), text: &str) {
        let _ = writeln!(
            self.body,
            r#"<text x="{:.2}" y="{:.2}" font-size="11">{}</text>"#,
            self.px(at.0) + 4.0,
            self.py(at.1) - 4.0,
            escape(text)
        );
    }

    pub fn legend(&mut self, color: &str, text: &str) {
        self.legend.push((color.into(), text.into()));
    }

    fn axes(&self, out: &mut String) {
        let (x0, x1) = (LEFT, WIDTH - RIGHT);
        let (y0, y1) = (HEIGHT - BOTTOM, TOP);
        let _ = writeln!(
            out,
            r#"<g class="axes" stroke="black" fill="none"><line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}"/><line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}"/></g>"#
        );
        let _ = writeln!(out, r#"<g class="ticks" font-size="10">"#);
        for i in 0..=TICKS {
            let f = i as f64 / TICKS as f64;
            let xv = self.x.0 + f * (self.x.1 - self.x.0);
            let yv = self.y.0 + f * (self.y.1 - self.y.0);
            let _ = writeln!(
                out,
                r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
                self.px(xv),
                y0 + 15.0,
                tick(xv)
            );
            let _ = writeln!(
                out,
                r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
                x0 - 6.0,
                self.py(yv) + 3.0,
                tick(yv)
            );
        }
        let _ = writeln!(out, "</g>");
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-size="12">{}</text>"#,
            (x0 + x1) / 2.0,
            HEIGHT - 20.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            out,
            r#"<text x="18" y="{:.2}" text-anchor="middle" font-size="12" transform="rotate(-90 18 {:.2})">{}</text>"#,
            (y0 + y1) / 2.0,
            (y0 + y1) / 2.0,
            escape(&self.y_label)
        );
    }

    /// Renders the document. A timestamp comment is added when `stamp` is set.
    pub fn render(&self, stamp: Option<u64>) -> String {
        let mut out = String::new();
        out.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
        if let Some(secs) = stamp {
            let _ = writeln!(out, "<!-- generated at unix time {secs} -->");
        }
        let _ = writeln!(
            out,
            r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
        );
        let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(
            out,
            r#"<text class="title" x="{:.2}" y="28" text-anchor="middle" font-size="15">{}</text>"#,
            WIDTH / 2.0,
            escape(&self.title)
        );
        self.axes(&mut out);
        out.push_str(&self.body);
        for (i, (color, text)) in self.legend.iter().enumerate() {
            let y = TOP + 6.0 + 16.0 * i as f64;
            let _ = writeln!(
                out,
                r#"<g class="legend"><rect x="{:.2}" y="{y:.2}" width="10" height="10" fill="{color}"/><text x="{:.2}" y="{:.2}" font-size="11">{}</text></g>"#,
                WIDTH - RIGHT - 110.0,
                WIDTH - RIGHT - 95.0,
                y + 9.0,
                escape(text)
            );
        }
        out.push_str("</svg>\n");
        out
    }
}

fn tick(v: f64) -> String {
    let r = (v * 1000.0).round() / 1000.0;
    fmt_f64(if r == 0.0 { 0.0 } else { r })
}
