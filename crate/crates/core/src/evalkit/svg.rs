//! Dependency-free SVG line charts with deterministic layout.

/// One line: points are (x, y); `band` optionally draws a (lo, hi)
/// confidence region behind the line.
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
    pub band: Option<Vec<(f64, f64)>>,
}

pub struct ChartSpec {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_x: bool,
}

const W: f64 = 800.0;
const H: f64 = 500.0;
const MARGIN_L: f64 = 80.0;
const MARGIN_R: f64 = 160.0;
const MARGIN_T: f64 = 50.0;
const MARGIN_B: f64 = 60.0;
const PALETTE: [&str; 6] = ["#c0392b", "#8e44ad", "#27ae60", "#808000", "#2980b9", "#d35400"];

fn fmt(v: f64) -> String {
    format!("{v:.2}")
}

fn tick_label(v: f64) -> String {
    if v == 0.0 {
        "0".to_string()
    } else if v.abs() >= 0.01 && v.abs() < 10000.0 {
        format!("{v:.3}")
    } else {
        format!("{v:.2e}")
    }
}

pub fn line_chart(spec: &ChartSpec, series: &[Series]) -> String {
    let xs: Vec<f64> = series
        .iter()
        .flat_map(|s| s.points.iter().map(|p| p.0))
        .map(|x| if spec.log_x { x.log10() } else { x })
        .collect();
    let mut ys: Vec<f64> = series.iter().flat_map(|s| s.points.iter().map(|p| p.1)).collect();
    for s in series {
        if let Some(band) = &s.band {
            ys.extend(band.iter().flat_map(|&(lo, hi)| [lo, hi]));
        }
    }
    let (x_min, x_max) = bounds(&xs);
    let (y_min, y_max) = bounds(&ys);

    let sx = |x: f64| {
        let x = if spec.log_x { x.log10() } else { x };
        MARGIN_L + (x - x_min) / (x_max - x_min) * (W - MARGIN_L - MARGIN_R)
    };
    let sy = |y: f64| H - MARGIN_B - (y - y_min) / (y_max - y_min) * (H - MARGIN_T - MARGIN_B);

    let mut out = String::new();
    out.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {W} {H}\" font-family=\"monospace\" font-size=\"13\">\n"
    ));
    out.push_str(&format!(
        "<rect x=\"0\" y=\"0\" width=\"{W}\" height=\"{H}\" fill=\"white\"/>\n"
    ));
    out.push_str(&format!(
        "<text x=\"{}\" y=\"28\" text-anchor=\"middle\" font-size=\"16\">{}</text>\n",
        (MARGIN_L + W - MARGIN_R) / 2.0,
        escape(&spec.title)
    ));

    // axes
    out.push_str(&format!(
        "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
        fmt(MARGIN_L),
        fmt(H - MARGIN_B),
        fmt(W - MARGIN_R),
        fmt(H - MARGIN_B)
    ));
    out.push_str(&format!(
        "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
        fmt(MARGIN_L),
        fmt(MARGIN_T),
        fmt(MARGIN_L),
        fmt(H - MARGIN_B)
    ));

    // ticks
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let xv = x_min + f * (x_max - x_min);
        let xpix = MARGIN_L + f * (W - MARGIN_L - MARGIN_R);
        let label = if spec.log_x { tick_label(10f64.powf(xv)) } else { tick_label(xv) };
        out.push_str(&format!(
            "<line x1=\"{0}\" y1=\"{1}\" x2=\"{0}\" y2=\"{2}\" stroke=\"black\"/>\n",
            fmt(xpix),
            fmt(H - MARGIN_B),
            fmt(H - MARGIN_B + 6.0)
        ));
        out.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n",
            fmt(xpix),
            fmt(H - MARGIN_B + 22.0),
            label
        ));
        let yv = y_min + f * (y_max - y_min);
        let ypix = sy(yv);
        out.push_str(&format!(
            "<line x1=\"{0}\" y1=\"{2}\" x2=\"{1}\" y2=\"{2}\" stroke=\"black\"/>\n",
            fmt(MARGIN_L - 6.0),
            fmt(MARGIN_L),
            fmt(ypix)
        ));
        out.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{}</text>\n",
            fmt(MARGIN_L - 10.0),
            fmt(ypix + 4.0),
            tick_label(yv)
        ));
    }
    out.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n",
        (MARGIN_L + W - MARGIN_R) / 2.0,
        fmt(H - 14.0),
        escape(&spec.x_label)
    ));
    out.push_str(&format!(
        "<text x=\"18\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 18 {})\">{}</text>\n",
        fmt((MARGIN_T + H - MARGIN_B) / 2.0),
        fmt((MARGIN_T + H - MARGIN_B) / 2.0),
        escape(&spec.y_label)
    ));

    for (idx, s) in series.iter().enumerate() {
        let color = PALETTE[idx % PALETTE.len()];
        if let Some(band) = &s.band {
            let mut pts = String::new();
            for (p, b) in s.points.iter().zip(band) {
                pts.push_str(&format!("{},{} ", fmt(sx(p.0)), fmt(sy(b.1))));
            }
            for (p, b) in s.points.iter().zip(band).rev() {
                pts.push_str(&format!("{},{} ", fmt(sx(p.0)), fmt(sy(b.0))));
            }
            out.push_str(&format!(
                "<polygon points=\"{}\" fill=\"{}\" opacity=\"0.15\"/>\n",
                pts.trim_end(),
                color
            ));
        }
        let pts: Vec<String> =
            s.points.iter().map(|p| format!("{},{}", fmt(sx(p.0)), fmt(sy(p.1)))).collect();
        out.push_str(&format!(
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"2\"/>\n",
            pts.join(" "),
            color
        ));
        for p in &s.points {
            out.push_str(&format!(
                "<circle cx=\"{}\" cy=\"{}\" r=\"3\" fill=\"{}\"/>\n",
                fmt(sx(p.0)),
                fmt(sy(p.1)),
                color
            ));
        }
        let ly = MARGIN_T + 18.0 * idx as f64;
        out.push_str(&format!(
            "<line x1=\"{0}\" y1=\"{1}\" x2=\"{2}\" y2=\"{1}\" stroke=\"{3}\" stroke-width=\"2\"/>\n",
            fmt(W - MARGIN_R + 10.0),
            fmt(ly),
            fmt(W - MARGIN_R + 34.0),
            color
        ));
        out.push_str(&format!(
            "<text x=\"{}\" y=\"{}\">{}</text>\n",
            fmt(W - MARGIN_R + 40.0),
            fmt(ly + 4.0),
            escape(&s.name)
        ));
    }
    out.push_str("</svg>\n");
    out
}

fn bounds(vals: &[f64]) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for v in vals {
        if v.is_finite() {
            lo = lo.min(*v);
            hi = hi.max(*v);
        }
    }
    if !lo.is_finite() || !hi.is_finite() {
        return (0.0, 1.0);
    }
    if lo == hi {
        return (lo - 0.5, hi + 0.5);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
