//! Minimal native SVG plotting: median lines with quantile bands, no
//! external dependencies. Plots are presentation artifacts; the CSVs are the
//! contract.

use std::io::Write;
use std::path::Path;

const WIDTH: f64 = 860.0;
const HEIGHT: f64 = 520.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 160.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 50.0;

const PALETTE: [&str; 11] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf", "#aec7e8",
];

/// One plotted series: a median line plus a lower/upper band.
pub struct Curve {
    pub label: String,
    pub xs: Vec<f64>,
    pub median: Vec<f64>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

fn nice_num(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    let a = x.abs();
    if !(0.01..1000.0).contains(&a) {
        format!("{x:.1e}")
    } else {
        format!("{x:.3}")
            .trim_end_matches('0')
            .trim_end_matches('.')
            .to_string()
    }
}

pub fn render_curves(
    path: &Path,
    title: &str,
    x_label: &str,
    y_label: &str,
    curves: &[Curve],
) -> std::io::Result<()> {
    let mut xs_min = f64::INFINITY;
    let mut xs_max = f64::NEG_INFINITY;
    let mut y_min = f64::INFINITY;
    let mut y_max = f64::NEG_INFINITY;
    for c in curves {
        for &x in &c.xs {
            xs_min = xs_min.min(x);
            xs_max = xs_max.max(x);
        }
        for v in c.median.iter().chain(&c.lo).chain(&c.hi) {
            if v.is_finite() {
                y_min = y_min.min(*v);
                y_max = y_max.max(*v);
            }
        }
    }
    if !xs_min.is_finite() || !y_min.is_finite() {
        xs_min = 0.0;
        xs_max = 1.0;
        y_min = 0.0;
        y_max = 1.0;
    }
    if (y_max - y_min).abs() < 1e-12 {
        y_min -= 0.5;
        y_max += 0.5;
    }
    if (xs_max - xs_min).abs() < 1e-12 {
        xs_max = xs_min + 1.0;
    }
    let pad = 0.05 * (y_max - y_min);
    let (y_min, y_max) = (y_min - pad, y_max + pad);

    let plot_w = WIDTH - MARGIN_L - MARGIN_R;
    let plot_h = HEIGHT - MARGIN_T - MARGIN_B;
    let px = |x: f64| MARGIN_L + (x - xs_min) / (xs_max - xs_min) * plot_w;
    let py = |y: f64| MARGIN_T + (1.0 - (y - y_min) / (y_max - y_min)) * plot_h;

    let mut s = String::new();
    s.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         viewBox=\"0 0 {WIDTH} {HEIGHT}\" font-family=\"sans-serif\" font-size=\"12\">\n"
    ));
    s.push_str(&format!(
        "<rect x=\"0\" y=\"0\" width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>\n"
    ));
    s.push_str(&format!(
        "<text x=\"{}\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">{}</text>\n",
        MARGIN_L + plot_w / 2.0,
        title
    ));
    // frame
    s.push_str(&format!(
        "<rect x=\"{MARGIN_L}\" y=\"{MARGIN_T}\" width=\"{plot_w}\" height=\"{plot_h}\" \
         fill=\"none\" stroke=\"#333\"/>\n"
    ));
    // ticks
    for i in 0..=4 {
        let fx = xs_min + (xs_max - xs_min) * i as f64 / 4.0;
        let fy = y_min + (y_max - y_min) * i as f64 / 4.0;
        s.push_str(&format!(
            "<line x1=\"{0}\" y1=\"{1}\" x2=\"{0}\" y2=\"{2}\" stroke=\"#999\"/>\n",
            px(fx),
            MARGIN_T + plot_h,
            MARGIN_T + plot_h + 5.0
        ));
        s.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n",
            px(fx),
            MARGIN_T + plot_h + 20.0,
            nice_num(fx)
        ));
        s.push_str(&format!(
            "<line x1=\"{0}\" y1=\"{1}\" x2=\"{2}\" y2=\"{1}\" stroke=\"#999\"/>\n",
            MARGIN_L - 5.0,
            py(fy),
            MARGIN_L
        ));
        s.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{}</text>\n",
            MARGIN_L - 9.0,
            py(fy) + 4.0,
            nice_num(fy)
        ));
    }
    s.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n",
        MARGIN_L + plot_w / 2.0,
        HEIGHT - 12.0,
        x_label
    ));
    s.push_str(&format!(
        "<text x=\"16\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {})\">{}</text>\n",
        MARGIN_T + plot_h / 2.0,
        MARGIN_T + plot_h / 2.0,
        y_label
    ));

    for (i, c) in curves.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        if c.xs.len() > 1 {
            // quantile band
            let mut band = String::from("<polygon points=\"");
            for (x, y) in c.xs.iter().zip(&c.hi) {
                band.push_str(&format!("{:.2},{:.2} ", px(*x), py(*y)));
            }
            for (x, y) in c.xs.iter().zip(&c.lo).rev() {
                band.push_str(&format!("{:.2},{:.2} ", px(*x), py(*y)));
            }
            band.push_str(&format!("\" fill=\"{color}\" fill-opacity=\"0.15\" stroke=\"none\"/>\n"));
            s.push_str(&band);
        }
        let mut line = String::from("<polyline points=\"");
        for (x, y) in c.xs.iter().zip(&c.median) {
            line.push_str(&format!("{:.2},{:.2} ", px(*x), py(*y)));
        }
        line.push_str(&format!(
            "\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.6\"/>\n"
        ));
        s.push_str(&line);
        // legend
        let ly = MARGIN_T + 14.0 * i as f64 + 8.0;
        if ly < HEIGHT - MARGIN_B {
            s.push_str(&format!(
                "<line x1=\"{0}\" y1=\"{ly}\" x2=\"{1}\" y2=\"{ly}\" stroke=\"{color}\" stroke-width=\"2\"/>\n",
                WIDTH - MARGIN_R + 10.0,
                WIDTH - MARGIN_R + 34.0
            ));
            s.push_str(&format!(
                "<text x=\"{}\" y=\"{}\">{}</text>\n",
                WIDTH - MARGIN_R + 40.0,
                ly + 4.0,
                c.label
            ));
        }
    }
    s.push_str("</svg>\n");

    let mut f = std::fs::File::create(path)?;
    f.write_all(s.as_bytes())
}
