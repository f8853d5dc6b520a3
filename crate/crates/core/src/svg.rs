//! Minimal static SVG plots: scatter layers, polylines and arrows on one
//! pair of data axes. Coordinates are printed with fixed precision so the
//! output is byte-stable.

use std::fmt::Write;

enum Mark {
    Points {
        points: Vec<[f64; 2]>,
        color: String,
        radius: f64,
        opacity: f64,
    },
    Line {
        points: Vec<[f64; 2]>,
        color: String,
        width: f64,
    },
    Arrow {
        from: [f64; 2],
        to: [f64; 2],
        color: String,
    },
}

pub struct Plot {
    width: f64,
    height: f64,
    title: String,
    marks: Vec<Mark>,
    legend: Vec<(String, String)>,
}

const MARGIN: f64 = 40.0;

impl Plot {
    pub fn new(width: f64, height: f64, title: &str) -> Self {
        Self {
            width,
            height,
            title: title.to_string(),
            marks: Vec::new(),
            legend: Vec::new(),
        }
    }

    pub fn scatter(&mut self, points: Vec<[f64; 2]>, color: &str, radius: f64, label: &str) {
        self.marks.push(Mark::Points {
            points,
            color: color.into(),
            radius,
            opacity: 0.5,
        });
        self.legend.push((label.into(), color.into()));
    }

    pub fn polyline(&mut self, points: Vec<[f64; 2]>, color: &str, width: f64, label: &str) {
        self.marks.push(Mark::Line {
            points: points.clone(),
            color: color.into(),
            width,
        });
        self.marks.push(Mark::Points {
            points,
            color: color.into(),
            radius: width,
            opacity: 1.0,
        });
        self.legend.push((label.into(), color.into()));
    }

    pub fn arrow(&mut self, from: [f64; 2], to: [f64; 2], color: &str) {
        self.marks.push(Mark::Arrow {
            from,
            to,
            color: color.into(),
        });
    }

    /// Data bounds over every mark, padded by 5%.
    fn bounds(&self) -> ([f64; 2], [f64; 2]) {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        let mut add = |p: &[f64; 2]| {
            for a in 0..2 {
                if p[a].is_finite() {
                    lo[a] = lo[a].min(p[a]);
                    hi[a] = hi[a].max(p[a]);
                }
            }
        };
        for m in &self.marks {
            match m {
                Mark::Points { points, .. } | Mark::Line { points, .. } => {
                    points.iter().for_each(&mut add)
                }
                Mark::Arrow { from, to, .. } => {
                    add(from);
                    add(to);
                }
            }
        }
        for a in 0..2 {
            if !lo[a].is_finite() {
                lo[a] = -1.0;
                hi[a] = 1.0;
            }
            let pad = ((hi[a] - lo[a]) * 0.05).max(1e-9);
            lo[a] -= pad;
            hi[a] += pad;
        }
        (lo, hi)
    }

    pub fn render(&self) -> String {
        let (lo, hi) = self.bounds();
        let (w, h) = (self.width, self.height);
        let sx = |x: f64| MARGIN + (x - lo[0]) / (hi[0] - lo[0]) * (w - 2.0 * MARGIN);
        let sy = |y: f64| h - MARGIN - (y - lo[1]) / (hi[1] - lo[1]) * (h - 2.0 * MARGIN);
        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0}" height="{h:.0}" viewBox="0 0 {w:.0} {h:.0}">"#
        );
        let _ = writeln!(
            s,
            r#"<defs><marker id="head" markerWidth="8" markerHeight="8" refX="7" refY="4" orient="auto"><path d="M0,0 L8,4 L0,8 z" fill="context-stroke"/></marker></defs>"#
        );
        let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="24" font-family="sans-serif" font-size="14" text-anchor="middle">{}</text>"#,
            w / 2.0,
            escape(&self.title)
        );
        // Zero axes when in view.
        if lo[1] < 0.0 && hi[1] > 0.0 {
            let _ = writeln!(
                s,
                r##"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="#bbbbbb" stroke-width="1"/>"##,
                sx(lo[0]),
                sy(0.0),
                sx(hi[0]),
                sy(0.0)
            );
        }
        if lo[0] < 0.0 && hi[0] > 0.0 {
            let _ = writeln!(
                s,
                r##"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="#bbbbbb" stroke-width="1"/>"##,
                sx(0.0),
                sy(lo[1]),
                sx(0.0),
                sy(hi[1])
            );
        }
        for m in &self.marks {
            match m {
                Mark::Points {
                    points,
                    color,
                    radius,
                    opacity,
                } => {
                    let _ = writeln!(s, r#"<g fill="{color}" fill-opacity="{opacity}">"#);
                    for p in points {
                        let _ = writeln!(
                            s,
                            r#"<circle cx="{:.2}" cy="{:.2}" r="{radius}"/>"#,
                            sx(p[0]),
                            sy(p[1])
                        );
                    }
                    s.push_str("</g>\n");
                }
                Mark::Line {
                    points,
                    color,
                    width,
                } => {
                    let coords: Vec<String> = points
                        .iter()
                        .map(|p| format!("{:.2},{:.2}", sx(p[0]), sy(p[1])))
                        .collect();
                    let _ = writeln!(
                        s,
                        r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="{width}"/>"#,
                        coords.join(" ")
                    );
                }
                Mark::Arrow { from, to, color } => {
                    let _ = writeln!(
                        s,
                        r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{color}" stroke-width="2.5" marker-end="url(#head)"/>"#,
                        sx(from[0]),
                        sy(from[1]),
                        sx(to[0]),
                        sy(to[1])
                    );
                }
            }
        }
        for (i, (label, color)) in self.legend.iter().enumerate() {
            let y = MARGIN + 16.0 * i as f64;
            let _ = writeln!(
                s,
                r#"<rect x="{:.1}" y="{:.1}" width="10" height="10" fill="{color}"/><text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="11">{}</text>"#,
                w - MARGIN - 150.0,
                y,
                w - MARGIN - 135.0,
                y + 9.0,
                escape(label)
            );
        }
        s.push_str("</svg>\n");
        s
    }
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_each_mark() {
        let mut p = Plot::new(400.0, 300.0, "a < b");
        p.scatter(vec![[0.0, 0.0], [1.0, 1.0]], "#1f77b4", 2.0, "ID");
        p.polyline(vec![[0.0, 1.0], [1.0, 0.0]], "#d62728", 1.5, "path");
        p.arrow([0.0, 0.0], [0.5, 0.0], "black");
        let s = p.render();
        assert!(s.starts_with("<svg"));
        assert!(s.ends_with("</svg>\n"));
        assert_eq!(s.matches("<circle").count(), 4);
        assert_eq!(s.matches("<polyline").count(), 1);
        assert!(s.contains("marker-end"));
        assert!(s.contains("a &lt; b"));
        assert_eq!(s, p.render());
    }

    #[test]
    fn empty_plot_still_renders() {
        let s = Plot::new(100.0, 100.0, "").render();
        assert!(s.contains("</svg>"));
    }
}
