//! Minimal SVG emission for the pipeline's plot artifacts: heatmaps of
//! delay-angle traces and line charts with optional error bars.  Output is a
//! pure function of the input numbers, so re-runs are byte-identical.

// element fragments carry their own line breaks inside larger format strings,
// and `!(hi > lo)` deliberately catches NaN/empty ranges
#![allow(clippy::write_with_newline, clippy::neg_cmp_op_on_partial_ord)]

use std::fmt::Write;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 480.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 30.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 55.0;

pub struct Series<'a> {
    pub name: &'a str,
    /// (x, y) points, drawn in order.
    pub points: Vec<(f64, f64)>,
    /// Half-height of a vertical error bar per point; empty for none.
    pub sigma: Vec<f64>,
    pub color: &'a str,
    /// Draw markers only (no connecting line).
    pub markers_only: bool,
}

fn header(out: &mut String) {
    let _ = write!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n\
         <rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"#ffffff\"/>\n"
    );
}

fn fmt(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let a = v.abs();
    if !(1e-3..1e4).contains(&a) {
        format!("{v:.2e}")
    } else if a >= 100.0 {
        format!("{v:.1}")
    } else {
        format!("{v:.3}")
    }
}

fn text(out: &mut String, x: f64, y: f64, size: f64, anchor: &str, s: &str) {
    let _ = write!(
        out,
        "<text x=\"{x:.1}\" y=\"{y:.1}\" font-size=\"{size}\" font-family=\"sans-serif\" \
         text-anchor=\"{anchor}\" fill=\"#222222\">{s}</text>\n"
    );
}

fn vertical_text(out: &mut String, x: f64, y: f64, size: f64, s: &str) {
    let _ = write!(
        out,
        "<text x=\"{x:.1}\" y=\"{y:.1}\" font-size=\"{size}\" font-family=\"sans-serif\" \
         text-anchor=\"middle\" fill=\"#222222\" transform=\"rotate(-90 {x:.1} {y:.1})\">{s}</text>\n"
    );
}

/// Five-anchor dark-to-bright colormap, linearly interpolated.
fn colormap(t: f64) -> String {
    const STOPS: [(f64, [u8; 3]); 5] = [
        (0.00, [13, 8, 135]),
        (0.25, [126, 3, 168]),
        (0.50, [204, 71, 120]),
        (0.75, [248, 149, 64]),
        (1.00, [240, 249, 33]),
    ];
    let t = t.clamp(0.0, 1.0);
    let mut lo = STOPS[0];
    let mut hi = STOPS[4];
    for w in STOPS.windows(2) {
        if t >= w[0].0 && t <= w[1].0 {
            lo = w[0];
            hi = w[1];
            break;
        }
    }
    let f = if hi.0 > lo.0 { (t - lo.0) / (hi.0 - lo.0) } else { 0.0 };
    let mix = |a: u8, b: u8| -> u8 { (a as f64 + f * (b as f64 - a as f64)).round() as u8 };
    format!("#{:02x}{:02x}{:02x}", mix(lo.1[0], hi.1[0]), mix(lo.1[1], hi.1[1]), mix(lo.1[2], hi.1[2]))
}

struct Axes {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Axes {
    fn px(&self, x: f64) -> f64 {
        MARGIN_L + (x - self.x0) / (self.x1 - self.x0) * (WIDTH - MARGIN_L - MARGIN_R)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - MARGIN_B - (y - self.y0) / (self.y1 - self.y0) * (HEIGHT - MARGIN_T - MARGIN_B)
    }

    fn draw(&self, out: &mut String, title: &str, x_label: &str, y_label: &str) {
        let (px0, px1) = (MARGIN_L, WIDTH - MARGIN_R);
        let (py0, py1) = (HEIGHT - MARGIN_B, MARGIN_T);
        let _ = write!(
            out,
            "<rect x=\"{px0}\" y=\"{py1}\" width=\"{:.1}\" height=\"{:.1}\" fill=\"none\" \
             stroke=\"#444444\" stroke-width=\"1\"/>\n",
            px1 - px0,
            py0 - py1
        );
        text(out, WIDTH / 2.0, MARGIN_T - 14.0, 15.0, "middle", title);
        text(out, WIDTH / 2.0, HEIGHT - 12.0, 13.0, "middle", x_label);
        vertical_text(out, 18.0, HEIGHT / 2.0, 13.0, y_label);
        for i in 0..=4 {
            let fx = self.x0 + (self.x1 - self.x0) * i as f64 / 4.0;
            let fy = self.y0 + (self.y1 - self.y0) * i as f64 / 4.0;
            let gx = self.px(fx);
            let gy = self.py(fy);
            let _ = write!(
                out,
                "<line x1=\"{gx:.1}\" y1=\"{py0}\" x2=\"{gx:.1}\" y2=\"{:.1}\" \
                 stroke=\"#444444\" stroke-width=\"1\"/>\n",
                py0 + 4.0
            );
            text(out, gx, py0 + 18.0, 11.0, "middle", &fmt(fx));
            let _ = write!(
                out,
                "<line x1=\"{:.1}\" y1=\"{gy:.1}\" x2=\"{px0}\" y2=\"{gy:.1}\" \
                 stroke=\"#444444\" stroke-width=\"1\"/>\n",
                px0 - 4.0
            );
            text(out, px0 - 8.0, gy + 4.0, 11.0, "end", &fmt(fy));
        }
    }
}

fn pad_range(lo: f64, hi: f64) -> (f64, f64) {
    if !(hi > lo) {
        let c = lo;
        return (c - 1.0, c + 1.0);
    }
    let pad = 0.06 * (hi - lo);
    (lo - pad, hi + pad)
}

/// Line/marker chart with optional per-point error bars and a legend.
pub fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let mut xs: Vec<f64> = Vec::new();
    let mut ys: Vec<f64> = Vec::new();
    for s in series {
        for (i, (x, y)) in s.points.iter().enumerate() {
            xs.push(*x);
            let e = s.sigma.get(i).copied().unwrap_or(0.0);
            let e = if e.is_finite() { e } else { 0.0 };
            ys.push(*y - e);
            ys.push(*y + e);
        }
    }
    let (x0, x1) = pad_range(
        xs.iter().copied().fold(f64::INFINITY, f64::min),
        xs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    );
    let (y0, y1) = pad_range(
        ys.iter().copied().fold(f64::INFINITY, f64::min),
        ys.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    );
    let ax = Axes { x0, x1, y0, y1 };
    let mut out = String::new();
    header(&mut out);
    ax.draw(&mut out, title, x_label, y_label);
    for (si, s) in series.iter().enumerate() {
        if !s.markers_only && s.points.len() > 1 {
            let pts: Vec<String> =
                s.points.iter().map(|(x, y)| format!("{:.1},{:.1}", ax.px(*x), ax.py(*y))).collect();
            let _ = write!(
                out,
                "<polyline points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\"/>\n",
                pts.join(" "),
                s.color
            );
        }
        for (i, (x, y)) in s.points.iter().enumerate() {
            let (gx, gy) = (ax.px(*x), ax.py(*y));
            if let Some(&e) = s.sigma.get(i) {
                if e.is_finite() && e > 0.0 {
                    let (top, bot) = (ax.py(*y + e), ax.py(*y - e));
                    let _ = write!(
                        out,
                        "<line x1=\"{gx:.1}\" y1=\"{top:.1}\" x2=\"{gx:.1}\" y2=\"{bot:.1}\" \
                         stroke=\"{}\" stroke-width=\"1\"/>\n\
                         <line x1=\"{:.1}\" y1=\"{top:.1}\" x2=\"{:.1}\" y2=\"{top:.1}\" \
                         stroke=\"{}\" stroke-width=\"1\"/>\n\
                         <line x1=\"{:.1}\" y1=\"{bot:.1}\" x2=\"{:.1}\" y2=\"{bot:.1}\" \
                         stroke=\"{}\" stroke-width=\"1\"/>\n",
                        s.color,
                        gx - 3.0,
                        gx + 3.0,
                        s.color,
                        gx - 3.0,
                        gx + 3.0,
                        s.color
                    );
                }
            }
            let _ = write!(
                out,
                "<circle cx=\"{gx:.1}\" cy=\"{gy:.1}\" r=\"3\" fill=\"{}\"/>\n",
                s.color
            );
        }
        // legend entry
        let ly = MARGIN_T + 16.0 + 16.0 * si as f64;
        let _ = write!(
            out,
            "<line x1=\"{:.1}\" y1=\"{ly:.1}\" x2=\"{:.1}\" y2=\"{ly:.1}\" stroke=\"{}\" \
             stroke-width=\"2\"/>\n",
            WIDTH - MARGIN_R - 130.0,
            WIDTH - MARGIN_R - 110.0,
            s.color
        );
        text(&mut out, WIDTH - MARGIN_R - 104.0, ly + 4.0, 11.0, "start", s.name);
    }
    out.push_str("</svg>\n");
    out
}

/// Heatmap of `rows[y][x]` with the given axis spans; row 0 sits at `y_lo`.
pub fn heatmap(
    title: &str,
    x_label: &str,
    y_label: &str,
    x_span: (f64, f64),
    y_span: (f64, f64),
    rows: &[Vec<f64>],
) -> String {
    let ax = Axes { x0: x_span.0, x1: x_span.1, y0: y_span.0, y1: y_span.1 };
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for r in rows {
        for &v in r {
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    if !(hi > lo) {
        hi = lo + 1.0;
    }
    let mut out = String::new();
    header(&mut out);
    let ny = rows.len();
    let nx = rows.first().map_or(0, |r| r.len());
    for (iy, row) in rows.iter().enumerate() {
        // rows span equal slices of the y range
        let yb = y_span.0 + (y_span.1 - y_span.0) * iy as f64 / ny as f64;
        let yt = y_span.0 + (y_span.1 - y_span.0) * (iy + 1) as f64 / ny as f64;
        for (ix, &v) in row.iter().enumerate() {
            let xl = x_span.0 + (x_span.1 - x_span.0) * ix as f64 / nx as f64;
            let xr = x_span.0 + (x_span.1 - x_span.0) * (ix + 1) as f64 / nx as f64;
            let t = (v - lo) / (hi - lo);
            let _ = write!(
                out,
                "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"{}\"/>\n",
                ax.px(xl),
                ax.py(yt),
                ax.px(xr) - ax.px(xl),
                ax.py(yb) - ax.py(yt),
                colormap(t)
            );
        }
    }
    ax.draw(&mut out, title, x_label, y_label);
    // scale annotation in place of a color bar
    text(
        &mut out,
        WIDTH - MARGIN_R,
        MARGIN_T - 14.0,
        11.0,
        "end",
        &format!("range [{}, {}]", fmt(lo), fmt(hi)),
    );
    out.push_str("</svg>\n");
    out
}
