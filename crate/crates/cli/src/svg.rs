//! Minimal deterministic SVG writer.

use std::fmt::Write as _;

/// Fixed-precision number, trailing zeros trimmed.
pub fn n(v: f64) -> String {
    let mut s = format!("{v:.6}");
    if s.contains('.') {
        while s.ends_with('0') {
            s.pop();
        }
        if s.ends_with('.') {
            s.pop();
        }
    }
    if s == "-0" {
        s = "0".into();
    }
    s
}

pub fn esc(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

pub struct Svg {
    width: f64,
    height: f64,
    body: String,
}

impl Svg {
    pub fn new(width: f64, height: f64) -> Svg {
        Svg {
            width,
            height,
            body: String::new(),
        }
    }

    pub fn push(&mut self, element: impl AsRef<str>) {
        self.body.push_str(element.as_ref());
        self.body.push('\n');
    }

    pub fn text(&mut self, x: f64, y: f64, anchor: &str, size: f64, s: &str) {
        self.push(format!(
            r#"<text x="{}" y="{}" text-anchor="{anchor}" font-size="{}">{}</text>"#,
            n(x),
            n(y),
            n(size),
            esc(s)
        ));
    }

    pub fn finish(self, title: &str) -> String {
        let mut out = String::new();
        writeln!(
            out,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif">"#,
            w = n(self.width),
            h = n(self.height)
        )
        .unwrap();
        writeln!(out, "<title>{}</title>", esc(title)).unwrap();
        writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#).unwrap();
        out.push_str(&self.body);
        out.push_str("</svg>\n");
        out
    }
}

/// Rounded tick positions covering `[lo, hi]`.
pub fn ticks(lo: f64, hi: f64, target: usize) -> Vec<f64> {
    let span = hi - lo;
    if !(span > 0.0) || !span.is_finite() {
        return vec![lo];
    }
    let raw = span / target.max(1) as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .into_iter()
        .map(|m| m * mag)
        .find(|s| *s >= raw)
        .unwrap_or(10.0 * mag);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last).map(|k| k as f64 * step).collect()
}

/// A plotting rectangle in pixels with data ranges on both axes.
#[derive(Clone, Copy, Debug)]
pub struct Frame {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
    pub xr: (f64, f64),
    pub yr: (f64, f64),
}

impl Frame {
    pub fn new(x: f64, y: f64, w: f64, h: f64, xr: (f64, f64), yr: (f64, f64)) -> Frame {
        let widen = |(lo, hi): (f64, f64)| if hi > lo { (lo, hi) } else { (lo - 0.5, hi + 0.5) };
        Frame {
            x,
            y,
            w,
            h,
            xr: widen(xr),
            yr: widen(yr),
        }
    }

    fn sx(&self) -> f64 {
        self.w / (self.xr.1 - self.xr.0)
    }

    fn sy(&self) -> f64 {
        self.h / (self.yr.1 - self.yr.0)
    }

    pub fn px(&self, v: f64) -> f64 {
        self.x + (v - self.xr.0) * self.sx()
    }

    pub fn py(&self, v: f64) -> f64 {
        self.y + self.h - (v - self.yr.0) * self.sy()
    }

    /// Opening tag of a group whose children are drawn in data coordinates.
    /// Strokes inside it should use `vector-effect="non-scaling-stroke"`.
    pub fn data_group(&self, class: &str) -> String {
        let (sx, sy) = (self.sx(), self.sy());
        format!(
            r#"<g class="{class}" transform="matrix({} 0 0 {} {} {})">"#,
            n(sx),
            n(-sy),
            n(self.x - self.xr.0 * sx),
            n(self.y + self.h + self.yr.0 * sy)
        )
    }

    pub fn axes(&self, svg: &mut Svg, xlabel: &str, ylabel: &str) {
        svg.push(format!(
            r##"<rect x="{}" y="{}" width="{}" height="{}" fill="none" stroke="#333"/>"##,
            n(self.x),
            n(self.y),
            n(self.w),
            n(self.h)
        ));
        for t in ticks(self.xr.0, self.xr.1, 5) {
            let x = self.px(t);
            svg.push(format!(
                r##"<line x1="{0}" y1="{1}" x2="{0}" y2="{2}" stroke="#333"/>"##,
                n(x),
                n(self.y + self.h),
                n(self.y + self.h + 4.0)
            ));
            svg.text(x, self.y + self.h + 16.0, "middle", 10.0, &n(t));
        }
        for t in ticks(self.yr.0, self.yr.1, 5) {
            let y = self.py(t);
            svg.push(format!(
                r##"<line x1="{0}" y1="{1}" x2="{2}" y2="{1}" stroke="#333"/>"##,
                n(self.x - 4.0),
                n(y),
                n(self.x)
            ));
            svg.text(self.x - 6.0, y + 3.5, "end", 10.0, &n(t));
        }
        svg.text(self.x + self.w / 2.0, self.y + self.h + 32.0, "middle", 12.0, xlabel);
        svg.push(format!(
            r#"<text x="{0}" y="{1}" text-anchor="middle" font-size="12" transform="rotate(-90 {0} {1})">{2}</text>"#,
            n(self.x - 36.0),
            n(self.y + self.h / 2.0),
            esc(ylabel)
        ));
    }
}

/// Polyline in data coordinates (inside a [`Frame::data_group`]).
pub fn polyline(class: &str, name: &str, color: &str, width: f64, pts: impl IntoIterator<Item = (f64, f64)>) -> String {
    let mut s = format!(
        r#"<polyline class="{class}" data-name="{}" fill="none" stroke="{color}" stroke-width="{}" vector-effect="non-scaling-stroke" points=""#,
        esc(name),
        n(width)
    );
    let mut first = true;
    for (x, y) in pts {
        if !first {
            s.push(' ');
        }
        first = false;
        write!(s, "{},{}", n(x), n(y)).unwrap();
    }
    s.push_str(r#""/>"#);
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_are_trimmed() {
        assert_eq!(n(1.5), "1.5");
        assert_eq!(n(2.0), "2");
        assert_eq!(n(-0.0000001), "0");
        assert_eq!(n(1.0 / 3.0), "0.333333");
    }

    #[test]
    fn ticks_are_round() {
        assert_eq!(ticks(0.0, 1.0, 5), vec![0.0, 0.2, 0.4, 0.6000000000000001, 0.8, 1.0]);
        assert_eq!(ticks(-1.0, 1.0, 4), vec![-1.0, -0.5, 0.0, 0.5, 1.0]);
    }

    #[test]
    fn frame_maps_corners() {
        let f = Frame::new(10.0, 20.0, 100.0, 50.0, (0.0, 2.0), (-1.0, 1.0));
        assert_eq!((f.px(0.0), f.py(-1.0)), (10.0, 70.0));
        assert_eq!((f.px(2.0), f.py(1.0)), (110.0, 20.0));
    }
}
