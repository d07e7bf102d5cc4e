//! Minimal SVG emitter: axes, polylines, markers, rectangles and text.

use std::fmt::Write as _;

pub const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf",
];

pub fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Plot area in pixels together with the data ranges it shows.
#[derive(Clone, Copy, Debug)]
pub struct Frame {
    pub left: f64,
    pub top: f64,
    pub width: f64,
    pub height: f64,
    pub x: (f64, f64),
    pub y: (f64, f64),
}

impl Frame {
    pub fn px(&self, x: f64) -> f64 {
        self.left + (x - self.x.0) / (self.x.1 - self.x.0) * self.width
    }

    pub fn py(&self, y: f64) -> f64 {
        self.top + self.height - (y - self.y.0) / (self.y.1 - self.y.0) * self.height
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct Stroke<'a> {
    pub color: &'a str,
    pub width: f64,
    pub dash: Option<&'a str>,
}

impl Stroke<'_> {
    fn attrs(&self) -> String {
        let mut s = format!(r#"stroke="{}" stroke-width="{}""#, self.color, self.width);
        if let Some(d) = self.dash {
            let _ = write!(s, r#" stroke-dasharray="{d}""#);
        }
        s
    }
}

pub struct Svg {
    width: f64,
    height: f64,
    body: String,
}

impl Svg {
    pub fn new(width: f64, height: f64) -> Self {
        Svg {
            width,
            height,
            body: String::new(),
        }
    }

    pub fn comment(&mut self, text: &str) {
        let _ = writeln!(self.body, "<!-- {} -->", text.replace("--", "- -"));
    }

    pub fn rect(&mut self, x: f64, y: f64, w: f64, h: f64, fill: &str) {
        let _ = writeln!(
            self.body,
            r#"<rect x="{x:.2}" y="{y:.2}" width="{w:.2}" height="{h:.2}" fill="{fill}" stroke="none"/>"#
        );
    }

    pub fn outline(&mut self, x: f64, y: f64, w: f64, h: f64, stroke: Stroke) {
        let _ = writeln!(
            self.body,
            r#"<rect x="{x:.2}" y="{y:.2}" width="{w:.2}" height="{h:.2}" fill="none" {}/>"#,
            stroke.attrs()
        );
    }

    pub fn line(&mut self, a: (f64, f64), b: (f64, f64), stroke: Stroke) {
        let _ = writeln!(
            self.body,
            r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" {}/>"#,
            a.0,
            a.1,
            b.0,
            b.1,
            stroke.attrs()
        );
    }

    pub fn polyline(&mut self, pts: &[(f64, f64)], stroke: Stroke) {
        if pts.len() < 2 {
            return;
        }
        let coords: Vec<String> = pts.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
        let _ = writeln!(
            self.body,
            r#"<polyline points="{}" fill="none" {}/>"#,
            coords.join(" "),
            stroke.attrs()
        );
    }

    pub fn polygon(&mut self, pts: &[(f64, f64)], fill: &str, opacity: f64) {
        let coords: Vec<String> = pts.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
        let _ = writeln!(
            self.body,
            r#"<polygon points="{}" fill="{fill}" fill-opacity="{opacity}" stroke="none"/>"#,
            coords.join(" ")
        );
    }

    pub fn circle(&mut self, c: (f64, f64), r: f64, fill: &str) {
        let _ = writeln!(
            self.body,
            r#"<circle cx="{:.2}" cy="{:.2}" r="{r}" fill="{fill}"/>"#,
            c.0, c.1
        );
    }

    pub fn text(&mut self, at: (f64, f64), s: &str, size: f64, anchor: &str) {
        let _ = writeln!(
            self.body,
            r#"<text x="{:.2}" y="{:.2}" font-size="{size}" font-family="sans-serif" text-anchor="{anchor}">{}</text>"#,
            at.0,
            at.1,
            escape(s)
        );
    }

    pub fn vertical_text(&mut self, at: (f64, f64), s: &str, size: f64) {
        let _ = writeln!(
            self.body,
            r#"<text x="{x:.2}" y="{y:.2}" font-size="{size}" font-family="sans-serif" text-anchor="middle" transform="rotate(-90 {x:.2} {y:.2})">{}</text>"#,
            escape(s),
            x = at.0,
            y = at.1,
        );
    }

    /// Frame outline, ticks with labels, axis titles and optionally grid lines.
    pub fn axes(&mut self, f: &Frame, xlabel: &str, ylabel: &str, gridlines: bool) {
        let black = Stroke {
            color: "#000",
            width: 1.0,
            dash: None,
        };
        let grid = Stroke {
            color: "#ddd",
            width: 0.5,
            dash: None,
        };
        for t in ticks(f.x.0, f.x.1, 6) {
            let x = f.px(t);
            if gridlines {
                self.line((x, f.top), (x, f.top + f.height), grid);
            }
            self.line((x, f.top + f.height), (x, f.top + f.height + 5.0), black);
            self.text((x, f.top + f.height + 18.0), &tick_label(t), 11.0, "middle");
        }
        for t in ticks(f.y.0, f.y.1, 6) {
            let y = f.py(t);
            if gridlines {
                self.line((f.left, y), (f.left + f.width, y), grid);
            }
            self.line((f.left - 5.0, y), (f.left, y), black);
            self.text((f.left - 8.0, y + 4.0), &tick_label(t), 11.0, "end");
        }
        self.outline(f.left, f.top, f.width, f.height, black);
        self.text(
            (f.left + f.width / 2.0, f.top + f.height + 38.0),
            xlabel,
            13.0,
            "middle",
        );
        self.vertical_text((f.left - 48.0, f.top + f.height / 2.0), ylabel, 13.0);
    }

    pub fn finish(self) -> String {
        format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n\
             <rect width=\"100%\" height=\"100%\" fill=\"#fff\"/>\n{}</svg>\n",
            self.body,
            w = self.width,
            h = self.height
        )
    }
}

/// Round tick positions (steps of 1, 2 or 5 times a power of ten) inside `[lo, hi]`.
pub fn ticks(lo: f64, hi: f64, target: usize) -> Vec<f64> {
    if !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
        return vec![lo];
    }
    let raw = (hi - lo) / target.max(1) as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| *s >= raw)
        .unwrap_or(10.0 * mag);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last).map(|k| k as f64 * step).collect()
}

pub fn tick_label(t: f64) -> String {
    let s = format!("{:.3}", t);
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.into()
    }
}

/// Blue–white–red colour for `t ∈ [−1, 1]`.
pub fn diverging(t: f64) -> String {
    let t = t.clamp(-1.0, 1.0);
    let (r, g, b) = if t < 0.0 {
        let s = -t;
        (
            255.0 * (1.0 - s) + 33.0 * s,
            255.0 * (1.0 - s) + 102.0 * s,
            255.0 * (1.0 - s) + 172.0 * s,
        )
    } else {
        (
            255.0 * (1.0 - t) + 178.0 * t,
            255.0 * (1.0 - t) + 24.0 * t,
            255.0 * (1.0 - t) + 43.0 * t,
        )
    };
    format!(
        "#{:02x}{:02x}{:02x}",
        r.round() as u8,
        g.round() as u8,
        b.round() as u8
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ticks_are_round_and_inside() {
        let t = ticks(0.0, 1.0, 5);
        assert_eq!(t.len(), 6);
        assert!(t
            .iter()
            .enumerate()
            .all(|(k, v)| (v - 0.2 * k as f64).abs() < 1e-12));
        let t = ticks(-3.2, 2.7, 6);
        assert!(t.iter().all(|v| (-3.2..=2.7).contains(v)));
        assert_eq!(t.first(), Some(&-3.0));
    }

    #[test]
    fn colour_scale_endpoints() {
        assert_eq!(diverging(0.0), "#ffffff");
        assert_eq!(diverging(-1.0), "#2166ac");
        assert_eq!(diverging(1.0), "#b2182b");
        assert_eq!(diverging(7.0), diverging(1.0));
    }

    #[test]
    fn text_is_escaped() {
        assert_eq!(escape("a<b & \"c\""), "a&lt;b &amp; &quot;c&quot;");
        assert_eq!(tick_label(-0.0), "0");
        assert_eq!(tick_label(2.5), "2.5");
    }
}
