//! Minimal SVG figures: posterior scatter with marginals, objective contours, set maps.

use std::fmt::Write as _;

const W: f64 = 560.0;
const H: f64 = 560.0;
const MARGIN: f64 = 60.0;

/// Linear map from data range to pixel range.
#[derive(Debug, Clone, Copy)]
struct Scale {
    d0: f64,
    d1: f64,
    p0: f64,
    p1: f64,
}

impl Scale {
    fn new(d0: f64, d1: f64, p0: f64, p1: f64) -> Self {
        let (d0, d1) = if d1 > d0 { (d0, d1) } else { (d0 - 0.5, d0 + 0.5) };
        Self { d0, d1, p0, p1 }
    }

    fn at(&self, v: f64) -> f64 {
        self.p0 + (v - self.d0) / (self.d1 - self.d0) * (self.p1 - self.p0)
    }
}

fn header(s: &mut String, title: &str) {
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<title>{}</title>"#, escape(title));
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn axes(s: &mut String, x: Scale, y: Scale, xlabel: &str, ylabel: &str) {
    let _ = writeln!(
        s,
        r#"<g class="axes" stroke="black" fill="none"><rect x="{:.1}" y="{:.1}" width="{:.1}" height="{:.1}"/></g>"#,
        x.p0,
        y.p1,
        x.p1 - x.p0,
        y.p0 - y.p1
    );
    for i in 0..=4 {
        let t = i as f64 / 4.0;
        let xv = x.d0 + t * (x.d1 - x.d0);
        let yv = y.d0 + t * (y.d1 - y.d0);
        let _ = writeln!(
            s,
            r#"<text class="tick" x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            x.at(xv),
            y.p0 + 16.0,
            tick(xv)
        );
        let _ = writeln!(
            s,
            r#"<text class="tick" x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
            x.p0 - 6.0,
            y.at(yv) + 4.0,
            tick(yv)
        );
    }
    let _ = writeln!(
        s,
        r#"<text class="xlabel" x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
        0.5 * (x.p0 + x.p1),
        y.p0 + 36.0,
        escape(xlabel)
    );
    let _ = writeln!(
        s,
        r#"<text class="ylabel" transform="translate({:.1},{:.1}) rotate(-90)" text-anchor="middle">{}</text>"#,
        x.p0 - 44.0,
        0.5 * (y.p0 + y.p1),
        escape(ylabel)
    );
}

fn tick(v: f64) -> String {
    if v.abs() >= 100.0 || v == v.round() {
        format!("{v:.0}")
    } else {
        format!("{v:.2}")
    }
}

fn range(v: impl Iterator<Item = f64>) -> (f64, f64) {
    v.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)))
}

fn histogram(v: &[f64], lo: f64, hi: f64, bins: usize) -> Vec<f64> {
    let mut h = vec![0.0; bins];
    let width = (hi - lo) / bins as f64;
    for x in v {
        if width > 0.0 {
            let b = (((x - lo) / width) as usize).min(bins - 1);
            h[b] += 1.0;
        } else {
            h[0] += 1.0;
        }
    }
    h
}

/// Scatter of two coordinates with marginal histograms above and to the right.
pub fn posterior_scatter(xs: &[f64], ys: &[f64], xlabel: &str, ylabel: &str) -> String {
    let mut s = String::new();
    header(&mut s, "quasi-posterior draws");
    let (x0, x1) = range(xs.iter().cloned());
    let (y0, y1) = range(ys.iter().cloned());
    let main_right = W - MARGIN - 90.0;
    let main_top = MARGIN + 90.0;
    let x = Scale::new(x0, x1, MARGIN + 10.0, main_right);
    let y = Scale::new(y0, y1, H - MARGIN, main_top);
    axes(&mut s, x, y, xlabel, ylabel);
    let _ = writeln!(s, r#"<g class="points" fill="steelblue" fill-opacity="0.3">"#);
    // at most ~4000 points keep the file small
    let step = (xs.len() / 4000).max(1);
    for (a, b) in xs.iter().zip(ys).step_by(step) {
        let _ = writeln!(s, r#"<circle cx="{:.1}" cy="{:.1}" r="1.5"/>"#, x.at(*a), y.at(*b));
    }
    let _ = writeln!(s, "</g>");
    let bins = 40;
    let hx = histogram(xs, x.d0, x.d1, bins);
    let hy = histogram(ys, y.d0, y.d1, bins);
    let mx = hx.iter().cloned().fold(1.0, f64::max);
    let my = hy.iter().cloned().fold(1.0, f64::max);
    let _ = writeln!(s, r#"<g class="marginal-x" fill="gray">"#);
    let bw = (x.p1 - x.p0) / bins as f64;
    for (i, c) in hx.iter().enumerate() {
        let h = 80.0 * c / mx;
        let _ = writeln!(
            s,
            r#"<rect x="{:.1}" y="{:.1}" width="{:.1}" height="{:.1}"/>"#,
            x.p0 + i as f64 * bw,
            main_top - 5.0 - h,
            bw,
            h
        );
    }
    let _ = writeln!(s, "</g>");
    let _ = writeln!(s, r#"<g class="marginal-y" fill="gray">"#);
    let bh = (y.p0 - y.p1) / bins as f64;
    for (i, c) in hy.iter().enumerate() {
        let w = 80.0 * c / my;
        let _ = writeln!(
            s,
            r#"<rect x="{:.1}" y="{:.1}" width="{:.1}" height="{:.1}"/>"#,
            main_right + 5.0,
            y.p0 - (i + 1) as f64 * bh,
            w,
            bh
        );
    }
    let _ = writeln!(s, "</g>");
    s.push_str("</svg>\n");
    s
}

/// Values on a tensor grid, `values[i * ny + j]` at `(xs[i], ys[j])`.
pub struct GridValues<'a> {
    pub xs: &'a [f64],
    pub ys: &'a [f64],
    pub values: &'a [f64],
}

impl GridValues<'_> {
    fn at(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.ys.len() + j]
    }
}

/// Contour lines of a grid function at the given levels (marching squares).
pub fn contours(g: &GridValues<'_>, levels: &[f64], xlabel: &str, ylabel: &str, title: &str) -> String {
    let mut s = String::new();
    header(&mut s, title);
    let (nx, ny) = (g.xs.len(), g.ys.len());
    let x = Scale::new(g.xs[0], g.xs[nx - 1], MARGIN, W - MARGIN);
    let y = Scale::new(g.ys[0], g.ys[ny - 1], H - MARGIN, MARGIN);
    axes(&mut s, x, y, xlabel, ylabel);
    for (li, level) in levels.iter().enumerate() {
        let shade = 30 + (li * 180) / levels.len().max(1);
        let _ = writeln!(
            s,
            r#"<g class="contour" data-level="{level}" stroke="rgb({shade},{shade},200)" fill="none">"#
        );
        for i in 0..nx.saturating_sub(1) {
            for j in 0..ny.saturating_sub(1) {
                let corners = [
                    (g.xs[i], g.ys[j], g.at(i, j)),
                    (g.xs[i + 1], g.ys[j], g.at(i + 1, j)),
                    (g.xs[i + 1], g.ys[j + 1], g.at(i + 1, j + 1)),
                    (g.xs[i], g.ys[j + 1], g.at(i, j + 1)),
                ];
                let mut pts = Vec::new();
                for e in 0..4 {
                    let (ax, ay, av) = corners[e];
                    let (bx, by, bv) = corners[(e + 1) % 4];
                    if !(av.is_finite() && bv.is_finite()) {
                        continue;
                    }
                    if (av < *level) != (bv < *level) {
                        let t = (level - av) / (bv - av);
                        pts.push((ax + t * (bx - ax), ay + t * (by - ay)));
                    }
                }
                for pair in pts.chunks_exact(2) {
                    let _ = writeln!(
                        s,
                        r#"<line x1="{:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}"/>"#,
                        x.at(pair[0].0),
                        y.at(pair[0].1),
                        x.at(pair[1].0),
                        y.at(pair[1].1)
                    );
                }
            }
        }
        let _ = writeln!(s, "</g>");
    }
    s.push_str("</svg>\n");
    s
}

/// Grid cells colored by membership; `layers` are `(name, color, members)` drawn in order.
pub fn set_map(xs: &[f64], ys: &[f64], layers: &[(&str, &str, Vec<bool>)], xlabel: &str, ylabel: &str) -> String {
    let mut s = String::new();
    header(&mut s, "set map");
    let (nx, ny) = (xs.len(), ys.len());
    let x = Scale::new(xs[0], xs[nx - 1], MARGIN, W - MARGIN);
    let y = Scale::new(ys[0], ys[ny - 1], H - MARGIN, MARGIN);
    let cw = (x.p1 - x.p0) / nx.max(2).saturating_sub(1) as f64;
    let ch = (y.p0 - y.p1) / ny.max(2).saturating_sub(1) as f64;
    for (name, color, members) in layers {
        let _ = writeln!(s, r#"<g class="set" data-name="{}" fill="{color}" fill-opacity="0.5">"#, escape(name));
        for i in 0..nx {
            for j in 0..ny {
                if members[i * ny + j] {
                    let _ = writeln!(
                        s,
                        r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}"/>"#,
                        x.at(xs[i]) - 0.5 * cw,
                        y.at(ys[j]) - 0.5 * ch,
                        cw,
                        ch
                    );
                }
            }
        }
        let _ = writeln!(s, "</g>");
    }
    axes(&mut s, x, y, xlabel, ylabel);
    for (k, (name, color, _)) in layers.iter().enumerate() {
        let ly = MARGIN - 30.0 + 14.0 * k as f64;
        let _ = writeln!(
            s,
            r#"<rect x="{:.1}" y="{:.1}" width="10" height="10" fill="{color}"/><text x="{:.1}" y="{:.1}">{}</text>"#,
            W - MARGIN - 120.0,
            ly,
            W - MARGIN - 105.0,
            ly + 9.0,
            escape(name)
        );
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scatter_structure() {
        let s = posterior_scatter(&[0.0, 1.0, 2.0], &[1.0, 0.0, 1.0], "alpha", "beta");
        assert!(s.starts_with("<svg"));
        assert!(s.trim_end().ends_with("</svg>"));
        assert_eq!(s.matches("<circle").count(), 3);
        assert!(s.contains(r#"class="marginal-x""#) && s.contains(r#"class="marginal-y""#));
    }

    #[test]
    fn contour_of_a_plane_is_straight() {
        let xs = [0.0, 1.0, 2.0];
        let ys = [0.0, 1.0, 2.0];
        let values: Vec<f64> = (0..3).flat_map(|i| (0..3).map(move |j| (i + j) as f64)).collect();
        let s = contours(&GridValues { xs: &xs, ys: &ys, values: &values }, &[1.5], "x", "y", "plane");
        // level 1.5 crosses the three cells whose corner sums straddle it
        assert_eq!(s.matches("<line").count(), 3);
    }

    #[test]
    fn set_map_draws_members_only() {
        let s = set_map(&[0.0, 1.0], &[0.0, 1.0], &[("CS", "red", vec![true, false, false, true])], "a", "b");
        let group = s.split(r#"class="set""#).nth(1).unwrap().split("</g>").next().unwrap();
        assert_eq!(group.matches("<rect").count(), 2);
    }
}
