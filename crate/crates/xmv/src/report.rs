//! Standalone SVG charts for evaluation tables, training curves, and score
//! histograms. Rendering is deterministic: fixed canvas geometry and fixed
//! decimal formatting, so identical inputs produce byte-identical files.

use std::fmt::Write as _;

use crate::error::{Error, Result};

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 420.0;
const MARGIN_LEFT: f64 = 60.0;
const MARGIN_RIGHT: f64 = 20.0;
const MARGIN_TOP: f64 = 40.0;
const MARGIN_BOTTOM: f64 = 70.0;

const PALETTE: [&str; 6] = [
    "#4878d0", "#ee854a", "#6acc64", "#d65f5f", "#956cb4", "#8c613c",
];

fn fmt(v: f64) -> String {
    format!("{v:.2}")
}

fn svg_open(out: &mut String, title: &str) {
    let _ = write!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         viewBox=\"0 0 {WIDTH} {HEIGHT}\" font-family=\"sans-serif\">\n\
         <rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">{}</text>\n",
        WIDTH / 2.0,
        escape(title)
    );
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn axes(out: &mut String, y_label: &str) {
    let x0 = MARGIN_LEFT;
    let y0 = HEIGHT - MARGIN_BOTTOM;
    let x1 = WIDTH - MARGIN_RIGHT;
    let y1 = MARGIN_TOP;
    let _ = write!(
        out,
        "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n\
         <line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n\
         <text x=\"16\" y=\"{}\" transform=\"rotate(-90 16 {})\" text-anchor=\"middle\" font-size=\"12\">{}</text>\n",
        fmt(x0), fmt(y0), fmt(x1), fmt(y0),
        fmt(x0), fmt(y0), fmt(x0), fmt(y1),
        fmt((y0 + y1) / 2.0), fmt((y0 + y1) / 2.0),
        escape(y_label)
    );
}

/// Grouped bar chart: one cluster per category, one bar per series.
pub fn grouped_bar_chart(
    title: &str,
    y_label: &str,
    categories: &[String],
    series: &[(String, Vec<f64>)],
) -> Result<String> {
    if categories.is_empty() || series.is_empty() {
        return Err(Error::EmptyInput("chart data"));
    }
    for (name, values) in series {
        if values.len() != categories.len() {
            return Err(Error::Dimension {
                expected: categories.len(),
                got: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Range(format!("series {name} has non-finite values")));
        }
    }
    let mut out = String::new();
    svg_open(&mut out, title);
    axes(&mut out, y_label);

    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let y0 = HEIGHT - MARGIN_BOTTOM;
    // Bars are fractions in [0, 1]; the axis is fixed to that range.
    for tick in 0..=5 {
        let v = tick as f64 / 5.0;
        let y = y0 - v * plot_h;
        let _ = write!(
            out,
            "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"#dddddd\"/>\n\
             <text x=\"{}\" y=\"{}\" text-anchor=\"end\" font-size=\"11\">{}</text>\n",
            fmt(MARGIN_LEFT),
            fmt(y),
            fmt(WIDTH - MARGIN_RIGHT),
            fmt(y),
            fmt(MARGIN_LEFT - 6.0),
            fmt(y + 4.0),
            fmt(v)
        );
    }

    let cluster_w = plot_w / categories.len() as f64;
    let bar_w = cluster_w * 0.8 / series.len() as f64;
    for (ci, cat) in categories.iter().enumerate() {
        let cx = MARGIN_LEFT + cluster_w * (ci as f64 + 0.5);
        let _ = writeln!(
            out,
            "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-size=\"12\">{}</text>",
            fmt(cx),
            fmt(y0 + 18.0),
            escape(cat)
        );
        for (si, (_, values)) in series.iter().enumerate() {
            let v = values[ci].clamp(0.0, 1.0);
            let h = v * plot_h;
            let x = cx - cluster_w * 0.4 + bar_w * si as f64;
            let _ = write!(
                out,
                "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"{}\"/>\n\
                 <text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-size=\"9\">{:.3}</text>\n",
                fmt(x),
                fmt(y0 - h),
                fmt(bar_w - 2.0),
                fmt(h),
                PALETTE[si % PALETTE.len()],
                fmt(x + (bar_w - 2.0) / 2.0),
                fmt(y0 - h - 3.0),
                values[ci]
            );
        }
    }
    legend(&mut out, series.iter().map(|(n, _)| n.as_str()));
    out.push_str("</svg>\n");
    Ok(out)
}

/// Two-series training curve: mean batch loss and validation TAR by iteration.
pub fn training_curve(
    title: &str,
    points: &[(u64, f64, f64)],
) -> Result<String> {
    if points.is_empty() {
        return Err(Error::EmptyInput("training history"));
    }
    let mut out = String::new();
    svg_open(&mut out, title);
    axes(&mut out, "loss / validation TAR");

    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let y0 = HEIGHT - MARGIN_BOTTOM;
    let max_iter = points.iter().map(|p| p.0).max().unwrap().max(1) as f64;
    let max_loss = points
        .iter()
        .map(|p| p.1)
        .fold(0.0f64, f64::max)
        .max(1e-12);

    let x_of = |iter: u64| MARGIN_LEFT + (iter as f64 / max_iter) * plot_w;
    let polyline = |out: &mut String, values: Vec<(f64, f64)>, color: &str| {
        let pts: Vec<String> = values
            .iter()
            .map(|&(x, y)| format!("{},{}", fmt(x), fmt(y)))
            .collect();
        let _ = writeln!(
            out,
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\"/>",
            pts.join(" "),
            color
        );
    };
    polyline(
        &mut out,
        points
            .iter()
            .map(|&(i, loss, _)| (x_of(i), y0 - (loss / max_loss) * plot_h))
            .collect(),
        PALETTE[0],
    );
    polyline(
        &mut out,
        points
            .iter()
            .map(|&(i, _, tar)| (x_of(i), y0 - tar.clamp(0.0, 1.0) * plot_h))
            .collect(),
        PALETTE[1],
    );
    for tick in 0..=4 {
        let frac = tick as f64 / 4.0;
        let _ = writeln!(
            out,
            "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-size=\"11\">{}</text>",
            fmt(MARGIN_LEFT + frac * plot_w),
            fmt(y0 + 18.0),
            (frac * max_iter).round() as u64
        );
    }
    legend(
        &mut out,
        [
            format!("mean batch loss (max {})", fmt(max_loss)).as_str(),
            "validation TAR",
        ]
        .into_iter(),
    );
    out.push_str("</svg>\n");
    Ok(out)
}

/// Histogram bins shared by analysis outputs: `count` over `[lo, hi)`.
#[derive(Debug, Clone, PartialEq)]
pub struct HistogramBins {
    pub lo: f64,
    pub hi: f64,
    pub authentic: Vec<u64>,
    pub impostor: Vec<u64>,
}

/// Fixed-range histogram of authentic and impostor scores.
pub fn histogram_bins(
    authentic: &[f64],
    impostor: &[f64],
    lo: f64,
    hi: f64,
    n_bins: usize,
) -> Result<HistogramBins> {
    if n_bins == 0 || hi <= lo || !hi.is_finite() || !lo.is_finite() {
        return Err(Error::Config("histogram needs bins and lo < hi".into()));
    }
    let mut bins = HistogramBins {
        lo,
        hi,
        authentic: vec![0; n_bins],
        impostor: vec![0; n_bins],
    };
    let width = (hi - lo) / n_bins as f64;
    let fill = |scores: &[f64], counts: &mut Vec<u64>| {
        for &s in scores {
            let idx = (((s - lo) / width).floor() as isize).clamp(0, n_bins as isize - 1);
            counts[idx as usize] += 1;
        }
    };
    fill(authentic, &mut bins.authentic);
    fill(impostor, &mut bins.impostor);
    Ok(bins)
}

/// Overlaid authentic/impostor histogram chart.
pub fn histogram_chart(title: &str, bins: &HistogramBins) -> Result<String> {
    if bins.authentic.is_empty() {
        return Err(Error::EmptyInput("histogram bins"));
    }
    let mut out = String::new();
    svg_open(&mut out, title);
    axes(&mut out, "count");
    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let y0 = HEIGHT - MARGIN_BOTTOM;
    let n = bins.authentic.len();
    let max_count = bins
        .authentic
        .iter()
        .chain(&bins.impostor)
        .copied()
        .max()
        .unwrap_or(0)
        .max(1) as f64;
    let bar_w = plot_w / n as f64;
    for (series, color) in [(&bins.authentic, PALETTE[2]), (&bins.impostor, PALETTE[3])] {
        for (i, &count) in series.iter().enumerate() {
            if count == 0 {
                continue;
            }
            let h = (count as f64 / max_count) * plot_h;
            let _ = writeln!(
                out,
                "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"{}\" fill-opacity=\"0.55\"/>",
                fmt(MARGIN_LEFT + bar_w * i as f64),
                fmt(y0 - h),
                fmt(bar_w),
                fmt(h),
                color
            );
        }
    }
    for tick in 0..=4 {
        let frac = tick as f64 / 4.0;
        let v = bins.lo + frac * (bins.hi - bins.lo);
        let _ = writeln!(
            out,
            "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-size=\"11\">{}</text>",
            fmt(MARGIN_LEFT + frac * plot_w),
            fmt(y0 + 18.0),
            fmt(v)
        );
    }
    legend(&mut out, ["authentic", "impostor"].into_iter());
    out.push_str("</svg>\n");
    Ok(out)
}

fn legend<'a>(out: &mut String, names: impl Iterator<Item = &'a str>) {
    for (i, name) in names.enumerate() {
        let x = MARGIN_LEFT + 10.0 + 180.0 * (i % 3) as f64;
        let y = HEIGHT - 28.0 + 14.0 * (i / 3) as f64;
        let _ = write!(
            out,
            "<rect x=\"{}\" y=\"{}\" width=\"10\" height=\"10\" fill=\"{}\"/>\n\
             <text x=\"{}\" y=\"{}\" font-size=\"11\">{}</text>\n",
            fmt(x),
            fmt(y - 9.0),
            PALETTE[i % PALETTE.len()],
            fmt(x + 14.0),
            fmt(y),
            escape(name)
        );
    }
}
