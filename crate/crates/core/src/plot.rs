//! Standalone SVG renderings: the 2D map, degree histograms with a log-normal
//! overlay, and the cluster scatter with its regression band.
//!
//! Output is a pure function of the inputs, with coordinates printed to three
//! decimals, so files are byte-identical across runs.

use std::fmt::Write;

use crate::atlas::{InvestigationPartition, LogNormalFit, PartitionClass};

const W: f64 = 640.0;
const H: f64 = 480.0;
const MARGIN: f64 = 56.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum MapCategory {
    AiNonScience,
    ScienceNonAi,
    Ai4Science,
}

impl MapCategory {
    fn colour(self) -> &'static str {
        match self {
            MapCategory::Ai4Science => "#2ca02c",
            MapCategory::ScienceNonAi => "#ff7f0e",
            MapCategory::AiNonScience => "#9467bd",
        }
    }

    fn name(self) -> &'static str {
        match self {
            MapCategory::Ai4Science => "AI4Science",
            MapCategory::ScienceNonAi => "science, non-AI",
            MapCategory::AiNonScience => "AI, non-science",
        }
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn header(out: &mut String, title: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(out, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(out, r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#, W / 2.0, escape(title));
}

/// Linear map from a data range onto a pixel range; a degenerate range maps to the middle.
#[derive(Clone, Copy)]
struct Axis {
    lo: f64,
    hi: f64,
    from: f64,
    to: f64,
}

impl Axis {
    fn new(lo: f64, hi: f64, from: f64, to: f64) -> Self {
        Axis { lo, hi, from, to }
    }

    fn at(&self, v: f64) -> f64 {
        if self.hi > self.lo {
            self.from + (v - self.lo) / (self.hi - self.lo) * (self.to - self.from)
        } else {
            (self.from + self.to) / 2.0
        }
    }
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
}

fn frame(out: &mut String, x_label: &str, y_label: &str) {
    let _ = writeln!(
        out,
        r##"<rect x="{MARGIN}" y="{MARGIN}" width="{}" height="{}" fill="none" stroke="#444"/>"##,
        W - 2.0 * MARGIN,
        H - 2.0 * MARGIN
    );
    let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, W / 2.0, H - 16.0, escape(x_label));
    let _ = writeln!(
        out,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
        H / 2.0,
        H / 2.0,
        escape(y_label)
    );
}

fn tick_labels(out: &mut String, x: (f64, f64), y: (f64, f64), fmt_x: impl Fn(f64) -> String) {
    let _ = writeln!(out, r#"<text x="{MARGIN}" y="{}" text-anchor="start">{}</text>"#, H - MARGIN + 14.0, fmt_x(x.0));
    let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#, W - MARGIN, H - MARGIN + 14.0, fmt_x(x.1));
    let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#, MARGIN - 4.0, H - MARGIN, short(y.0));
    let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#, MARGIN - 4.0, MARGIN + 8.0, short(y.1));
}

fn short(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.3}").trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        "0".into()
    }
}

/// Publications on the 2D layout, coloured by category; AI4Science points drawn last.
pub fn map_svg(points: &[([f64; 2], MapCategory)], title: &str) -> String {
    let mut out = String::new();
    header(&mut out, title);
    let (x0, x1) = bounds(points.iter().map(|p| p.0[0]));
    let (y0, y1) = bounds(points.iter().map(|p| p.0[1]));
    let ax = Axis::new(x0, x1, MARGIN, W - MARGIN);
    let ay = Axis::new(y0, y1, H - MARGIN, MARGIN);
    frame(&mut out, "layout x", "layout y");
    let mut order: Vec<&([f64; 2], MapCategory)> = points.iter().collect();
    order.sort_by_key(|p| p.1);
    for cat in [MapCategory::AiNonScience, MapCategory::ScienceNonAi, MapCategory::Ai4Science] {
        let _ = writeln!(out, r#"<g class="{}" fill="{}" fill-opacity="0.7">"#, cat.name().replace([' ', ','], ""), cat.colour());
        for (xy, _) in order.iter().filter(|p| p.1 == cat) {
            let _ = writeln!(out, r#"<circle cx="{:.3}" cy="{:.3}" r="2"/>"#, ax.at(xy[0]), ay.at(xy[1]));
        }
        let _ = writeln!(out, "</g>");
    }
    for (i, cat) in [MapCategory::Ai4Science, MapCategory::ScienceNonAi, MapCategory::AiNonScience].iter().enumerate() {
        let y = MARGIN + 14.0 + 16.0 * i as f64;
        let n = points.iter().filter(|p| p.1 == *cat).count();
        let _ = writeln!(out, r#"<circle cx="{}" cy="{}" r="4" fill="{}"/>"#, W - MARGIN - 120.0, y - 4.0, cat.colour());
        let _ = writeln!(out, r#"<text x="{}" y="{y}">{} ({n})</text>"#, W - MARGIN - 110.0, cat.name());
    }
    out.push_str("</svg>\n");
    out
}

/// Logarithmic bin edges, `per_decade` per factor of ten, covering the positive values.
pub fn log_bins(values: &[f64], per_decade: usize) -> Vec<f64> {
    let (lo, hi) = bounds(values.iter().copied().filter(|v| *v > 0.0));
    if !lo.is_finite() {
        return Vec::new();
    }
    let step = 1.0 / per_decade as f64;
    let start = (lo.log10() / step).floor() as i64;
    let end = ((hi.log10() / step).floor() as i64 + 1).max(start + 1);
    (start..=end).map(|k| 10f64.powf(k as f64 * step)).collect()
}

/// Density histogram over logarithmic bins with the fitted log-normal density
/// drawn over it. The x axis is log10(degree).
pub fn degree_hist_svg(degrees: &[f64], fit: Option<&LogNormalFit>, title: &str) -> String {
    let mut out = String::new();
    header(&mut out, title);
    frame(&mut out, "degree (log scale)", "density");
    let edges = log_bins(degrees, 5);
    let positive: Vec<f64> = degrees.iter().copied().filter(|d| *d > 0.0).collect();
    if edges.len() < 2 || positive.is_empty() {
        out.push_str("</svg>\n");
        return out;
    }
    let n = positive.len() as f64;
    let mut density = vec![0.0; edges.len() - 1];
    for d in &positive {
        let b = edges.windows(2).position(|w| *d >= w[0] && *d < w[1]).unwrap_or(density.len() - 1);
        density[b] += 1.0;
    }
    for (b, w) in density.iter_mut().zip(edges.windows(2)) {
        *b /= n * (w[1] - w[0]);
    }
    let pdf = |x: f64| {
        fit.map_or(0.0, |f| {
            if f.sigma > 0.0 {
                let z = (x.ln() - f.mu) / f.sigma;
                (-0.5 * z * z).exp() / (x * f.sigma * (2.0 * std::f64::consts::PI).sqrt())
            } else {
                0.0
            }
        })
    };
    let (lx0, lx1) = (edges[0].log10(), edges[edges.len() - 1].log10());
    let samples: Vec<(f64, f64)> = (0..=100)
        .map(|i| {
            let lx = lx0 + (lx1 - lx0) * i as f64 / 100.0;
            (lx, pdf(10f64.powf(lx)))
        })
        .collect();
    let ymax = density.iter().copied().chain(samples.iter().map(|s| s.1)).fold(0.0, f64::max);
    let ax = Axis::new(lx0, lx1, MARGIN, W - MARGIN);
    let ay = Axis::new(0.0, ymax, H - MARGIN, MARGIN);
    let _ = writeln!(out, r##"<g class="bars" fill="#1f77b4" fill-opacity="0.6">"##);
    for (d, w) in density.iter().zip(edges.windows(2)) {
        let (xa, xb) = (ax.at(w[0].log10()), ax.at(w[1].log10()));
        let y = ay.at(*d);
        let _ = writeln!(out, r#"<rect x="{xa:.3}" y="{y:.3}" width="{:.3}" height="{:.3}"/>"#, xb - xa, (H - MARGIN) - y);
    }
    out.push_str("</g>\n");
    if let Some(f) = fit {
        let pts: Vec<String> = samples.iter().map(|(lx, y)| format!("{:.3},{:.3}", ax.at(*lx), ay.at(*y))).collect();
        let _ = writeln!(
            out,
            r##"<polyline class="lognormal" data-mu="{}" data-sigma="{}" fill="none" stroke="#d62728" stroke-width="2" points="{}"/>"##,
            f.mu,
            f.sigma,
            pts.join(" ")
        );
    }
    tick_labels(&mut out, (edges[0], edges[edges.len() - 1]), (0.0, ymax), short);
    out.push_str("</svg>\n");
    out
}

/// AI4Science count against total count per cluster, coloured by class, with
/// the regression line (endpoints in data units as `data-*` attributes) and the
/// 95% band of the mean response.
pub fn cluster_scatter_svg(partition: &InvestigationPartition, title: &str) -> String {
    let mut out = String::new();
    header(&mut out, title);
    frame(&mut out, "cluster size", "AI4Science publications");
    let rows = &partition.rows;
    let (x0, x1) = bounds(rows.iter().map(|r| r.total));
    let (y0, y1) = bounds(rows.iter().flat_map(|r| [r.ai4science, r.lower, r.upper]));
    if !x0.is_finite() {
        out.push_str("</svg>\n");
        return out;
    }
    let ax = Axis::new(x0, x1, MARGIN, W - MARGIN);
    let ay = Axis::new(y0, y1, H - MARGIN, MARGIN);
    let mut sorted: Vec<_> = rows.iter().collect();
    sorted.sort_by(|a, b| a.total.total_cmp(&b.total).then(a.cluster.cmp(&b.cluster)));
    let upper: Vec<String> = sorted.iter().map(|r| format!("{:.3},{:.3}", ax.at(r.total), ay.at(r.upper))).collect();
    let lower: Vec<String> = sorted.iter().rev().map(|r| format!("{:.3},{:.3}", ax.at(r.total), ay.at(r.lower))).collect();
    let _ = writeln!(
        out,
        r##"<polygon class="band" fill="#999" fill-opacity="0.3" points="{} {}"/>"##,
        upper.join(" "),
        lower.join(" ")
    );
    let line = |x: f64| partition.intercept + partition.slope * x;
    let _ = writeln!(
        out,
        r#"<line class="regression" data-x1="{x0}" data-y1="{}" data-x2="{x1}" data-y2="{}" x1="{:.3}" y1="{:.3}" x2="{:.3}" y2="{:.3}" stroke="black" stroke-width="1.5"/>"#,
        line(x0),
        line(x1),
        ax.at(x0),
        ay.at(line(x0)),
        ax.at(x1),
        ay.at(line(x1))
    );
    for (class, colour) in [(PartitionClass::Excluded, "#7f7f7f"), (PartitionClass::Well, "#2ca02c"), (PartitionClass::Under, "#d62728")] {
        let _ = writeln!(out, r#"<g class="{class}" fill="{colour}">"#);
        for r in sorted.iter().filter(|r| r.class == class) {
            let _ = writeln!(
                out,
                r#"<circle data-cluster="{}" cx="{:.3}" cy="{:.3}" r="3"><title>{}</title></circle>"#,
                r.cluster,
                ax.at(r.total),
                ay.at(r.ai4science),
                escape(&r.label)
            );
        }
        out.push_str("</g>\n");
    }
    tick_labels(&mut out, (x0, x1), (y0, y1), short);
    out.push_str("</svg>\n");
    out
}
