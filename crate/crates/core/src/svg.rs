//! Minimal SVG emitters for traces and heat maps.

use std::fmt::Write;

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];
const WIDTH: f64 = 720.0;
const PANEL_H: f64 = 170.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 150.0;
const MAX_POINTS: usize = 1500;

pub struct Series<'a> {
    pub name: &'a str,
    pub values: &'a [f64],
}

pub struct Panel<'a> {
    pub label: &'a str,
    pub series: Vec<Series<'a>>,
}

fn fmt(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && !(1e-3..1e5).contains(&a) {
        format!("{v:.3e}")
    } else {
        format!("{v:.4}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.filter(|v| v.is_finite()).fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(v), h.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 * lo.abs().max(1.0) {
        let pad = 1e-6 * lo.abs().max(1.0);
        (lo - pad, hi + pad)
    } else {
        (lo, hi)
    }
}

/// Stacked line plots sharing the time axis.
pub fn line_panels(title: &str, t: &[f64], panels: &[Panel]) -> String {
    let height = 40.0 + PANEL_H * panels.len() as f64 + 30.0;
    let plot_w = WIDTH - MARGIN_L - MARGIN_R;
    let (t0, t1) = range(t.iter().copied());
    let stride = (t.len() / MAX_POINTS).max(1);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="20" font-size="14" text-anchor="middle">{}</text>"#, WIDTH / 2.0, escape(title));
    for (k, panel) in panels.iter().enumerate() {
        let top = 35.0 + PANEL_H * k as f64;
        let h = PANEL_H - 30.0;
        let (lo, hi) = range(panel.series.iter().flat_map(|se| se.values.iter().copied()));
        let _ = writeln!(
            s,
            r##"<rect x="{MARGIN_L}" y="{top}" width="{plot_w}" height="{h}" fill="none" stroke="#444"/>"##
        );
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#, MARGIN_L - 4.0, top + 10.0, fmt(hi));
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#, MARGIN_L - 4.0, top + h, fmt(lo));
        let _ = writeln!(
            s,
            r#"<text x="12" y="{}" transform="rotate(-90 12 {})" text-anchor="middle">{}</text>"#,
            top + h / 2.0,
            top + h / 2.0,
            escape(panel.label)
        );
        for (i, se) in panel.series.iter().enumerate() {
            let color = PALETTE[i % PALETTE.len()];
            let mut pts = String::new();
            let n = se.values.len().min(t.len());
            let mut idx: Vec<usize> = (0..n).step_by(stride).collect();
            if n > 0 && idx.last() != Some(&(n - 1)) {
                idx.push(n - 1);
            }
            for j in idx {
                let x = MARGIN_L + (t[j] - t0) / (t1 - t0) * plot_w;
                let y = top + h - (se.values[j] - lo) / (hi - lo) * h;
                let _ = write!(pts, "{x:.2},{y:.2} ");
            }
            let _ = writeln!(
                s,
                r#"<polyline fill="none" stroke="{color}" stroke-width="1.2" points="{}"/>"#,
                pts.trim_end()
            );
            let _ = writeln!(
                s,
                r#"<text x="{}" y="{}" fill="{color}">{}</text>"#,
                WIDTH - MARGIN_R + 8.0,
                top + 12.0 + 14.0 * i as f64,
                escape(se.name)
            );
        }
    }
    let bottom = 35.0 + PANEL_H * panels.len() as f64 - 15.0;
    let _ = writeln!(s, r#"<text x="{MARGIN_L}" y="{bottom}">{}</text>"#, fmt(t0));
    let _ = writeln!(s, r#"<text x="{}" y="{bottom}" text-anchor="end">{}</text>"#, WIDTH - MARGIN_R, fmt(t1));
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">t (s)</text>"#, MARGIN_L + plot_w / 2.0, bottom + 14.0);
    s.push_str("</svg>\n");
    s
}

fn color_scale(u: f64) -> String {
    // white to dark blue
    let u = u.clamp(0.0, 1.0);
    let r = (255.0 * (1.0 - 0.85 * u)).round() as u8;
    let g = (255.0 * (1.0 - 0.65 * u)).round() as u8;
    let b = (255.0 * (1.0 - 0.25 * u)).round() as u8;
    format!("#{r:02x}{g:02x}{b:02x}")
}

/// Heat map with `x` as columns and `y` as rows. `value(i, j)` is indexed by
/// `(x, y)`; missing cells are hatched grey.
pub fn heatmap(title: &str, x_label: &str, y_label: &str, x: &[f64], y: &[f64], value: impl Fn(usize, usize) -> Option<f64>) -> String {
    let cell_w = (520.0 / x.len().max(1) as f64).min(60.0);
    let cell_h = (300.0 / y.len().max(1) as f64).min(50.0);
    let left = 70.0;
    let top = 40.0;
    let w = left + cell_w * x.len() as f64 + 120.0;
    let h = top + cell_h * y.len() as f64 + 50.0;
    let vals: Vec<f64> = (0..x.len()).flat_map(|i| (0..y.len()).filter_map({ let v = &value; move |j| v(i, j) })).collect();
    let (lo, hi) = range(vals.iter().copied());
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="11">"#);
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="20" font-size="14" text-anchor="middle">{}</text>"#, w / 2.0, escape(title));
    for (i, xv) in x.iter().enumerate() {
        for (j, _) in y.iter().enumerate() {
            let px = left + cell_w * i as f64;
            // first y value at the bottom
            let py = top + cell_h * (y.len() - 1 - j) as f64;
            let (fill, text) = match value(i, j) {
                Some(v) => (color_scale((v - lo) / (hi - lo)), fmt(v)),
                None => ("#cccccc".to_string(), "n/a".to_string()),
            };
            let _ = writeln!(
                s,
                r##"<rect x="{px:.2}" y="{py:.2}" width="{cell_w:.2}" height="{cell_h:.2}" fill="{fill}" stroke="#fff"><title>{}</title></rect>"##,
                text
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            left + cell_w * (i as f64 + 0.5),
            top + cell_h * y.len() as f64 + 14.0,
            fmt(*xv)
        );
    }
    for (j, yv) in y.iter().enumerate() {
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            left - 4.0,
            top + cell_h * ((y.len() - 1 - j) as f64 + 0.6),
            fmt(*yv)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        left + cell_w * x.len() as f64 / 2.0,
        top + cell_h * y.len() as f64 + 34.0,
        escape(x_label)
    );
    let _ = writeln!(s, r#"<text x="14" y="{:.2}" transform="rotate(-90 14 {:.2})" text-anchor="middle">{}</text>"#, top + cell_h * y.len() as f64 / 2.0, top + cell_h * y.len() as f64 / 2.0, escape(y_label));
    let lx = left + cell_w * x.len() as f64 + 20.0;
    let _ = writeln!(s, r#"<rect x="{lx:.2}" y="{top}" width="16" height="16" fill="{}"/>"#, color_scale(1.0));
    let _ = writeln!(s, r#"<text x="{:.2}" y="{}">{}</text>"#, lx + 20.0, top + 12.0, fmt(hi));
    let _ = writeln!(s, r#"<rect x="{lx:.2}" y="{}" width="16" height="16" fill="{}"/>"#, top + 22.0, color_scale(0.0));
    let _ = writeln!(s, r#"<text x="{:.2}" y="{}">{}</text>"#, lx + 20.0, top + 34.0, fmt(lo));
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn panels_are_well_formed() {
        let t = [0.0, 1.0, 2.0];
        let a = [1.0, 2.0, 1.5];
        let svg = line_panels("x & y", &t, &[Panel { label: "f", series: vec![Series { name: "a", values: &a }] }]);
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert!(svg.contains("x &amp; y"));
        assert_eq!(svg.matches("<polyline").count(), 1);
    }

    #[test]
    fn heatmap_cells() {
        let svg = heatmap("m", "v", "eta", &[1.0, 2.0], &[0.5, 0.6, 0.7], |i, j| if j == 2 { None } else { Some((i + j) as f64) });
        assert_eq!(svg.matches("<title>").count(), 6);
        assert_eq!(svg.matches("n/a").count(), 2);
    }

    #[test]
    fn constant_series_does_not_divide_by_zero() {
        let t = [0.0, 1.0];
        let a = [2.0, 2.0];
        let svg = line_panels("c", &t, &[Panel { label: "c", series: vec![Series { name: "c", values: &a }] }]);
        assert!(!svg.contains("NaN"));
    }
}
