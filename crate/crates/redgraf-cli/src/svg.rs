//! Hand-emitted SVG line charts: mean lines, +/- one standard deviation
//! bands, dashed baselines, log or linear y axis. Output is deterministic
//! (fixed float formatting) so plots can be regression-tested bytewise.

/// One plotted series: mean values with an optional deviation band.
pub struct Series {
    pub label: String,
    pub color: String,
    /// `(k, mean)` points.
    pub mean: Vec<(f64, f64)>,
    /// `(k, lo, hi)` band, drawn when present.
    pub band: Option<Vec<(f64, f64, f64)>>,
}

/// Dashed horizontal reference line.
pub struct Baseline {
    pub label: String,
    pub value: f64,
}

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 500.0;
const MARGIN_LEFT: f64 = 72.0;
const MARGIN_RIGHT: f64 = 28.0;
const MARGIN_TOP: f64 = 42.0;
const MARGIN_BOTTOM: f64 = 54.0;
const LOG_FLOOR: f64 = 1e-12;

fn fmt(v: f64) -> String {
    format!("{v:.2}")
}

fn fmt_tick(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    let a = v.abs();
    if (1e-3..1e4).contains(&a) {
        let s = format!("{v:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        format!("{v:.1e}")
    }
}

struct Axis {
    min: f64,
    max: f64,
    log: bool,
}

impl Axis {
    fn project(&self, v: f64, lo_px: f64, hi_px: f64) -> f64 {
        let v = if self.log { v.max(LOG_FLOOR).log10() } else { v };
        let (min, max) = if self.log {
            (self.min.max(LOG_FLOOR).log10(), self.max.max(LOG_FLOOR).log10())
        } else {
            (self.min, self.max)
        };
        let span = (max - min).max(1e-12);
        lo_px + (v - min) / span * (hi_px - lo_px)
    }

    fn ticks(&self, count: usize) -> Vec<f64> {
        if self.log {
            let lo = self.min.max(LOG_FLOOR).log10().floor() as i32;
            let hi = self.max.max(LOG_FLOOR).log10().ceil() as i32;
            let step = (((hi - lo) as usize / count.max(1)).max(1)) as i32;
            (lo..=hi)
                .step_by(step as usize)
                .map(|e| 10f64.powi(e))
                .collect()
        } else {
            let span = (self.max - self.min).max(1e-12);
            (0..=count)
                .map(|i| self.min + span * i as f64 / count as f64)
                .collect()
        }
    }
}

/// Renders one chart.
pub fn render(
    title: &str,
    x_label: &str,
    y_label: &str,
    log_y: bool,
    series: &[Series],
    baselines: &[Baseline],
) -> String {
    let mut x_min = f64::INFINITY;
    let mut x_max = f64::NEG_INFINITY;
    let mut y_min = f64::INFINITY;
    let mut y_max = f64::NEG_INFINITY;
    let mut cover = |x: f64, y: f64| {
        if x.is_finite() {
            x_min = x_min.min(x);
            x_max = x_max.max(x);
        }
        let y = if log_y { y.max(LOG_FLOOR) } else { y };
        if y.is_finite() {
            y_min = y_min.min(y);
            y_max = y_max.max(y);
        }
    };
    for s in series {
        for &(x, y) in &s.mean {
            cover(x, y);
        }
        if let Some(band) = &s.band {
            for &(x, lo, hi) in band {
                cover(x, lo);
                cover(x, hi);
            }
        }
    }
    for b in baselines {
        cover(0.0, b.value);
    }
    if !x_min.is_finite() {
        x_min = 0.0;
        x_max = 1.0;
    }
    if !y_min.is_finite() {
        y_min = 0.0;
        y_max = 1.0;
    }
    if y_min == y_max {
        y_min -= 0.5;
        y_max += 0.5;
    }
    if !log_y {
        let pad = (y_max - y_min) * 0.05;
        y_min -= pad;
        y_max += pad;
    }

    let x_axis = Axis {
        min: x_min,
        max: x_max,
        log: false,
    };
    let y_axis = Axis {
        min: y_min,
        max: y_max,
        log: log_y,
    };
    let px = |x: f64| x_axis.project(x, MARGIN_LEFT, WIDTH - MARGIN_RIGHT);
    let py = |y: f64| y_axis.project(y, HEIGHT - MARGIN_BOTTOM, MARGIN_TOP);

    let mut out = String::new();
    out.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {WIDTH} {HEIGHT}\" \
         font-family=\"Helvetica, Arial, sans-serif\" font-size=\"13\">\n"
    ));
    out.push_str(&format!(
        "  <text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">{}</text>\n",
        WIDTH / 2.0,
        title
    ));

    // Axes.
    out.push_str(&format!(
        "  <line x1=\"{l}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\" stroke=\"#333\"/>\n  <line x1=\"{l}\" y1=\"{t}\" x2=\"{l}\" y2=\"{b}\" stroke=\"#333\"/>\n",
        l = MARGIN_LEFT,
        r = WIDTH - MARGIN_RIGHT,
        t = MARGIN_TOP,
        b = HEIGHT - MARGIN_BOTTOM
    ));
    for tick in x_axis.ticks(6) {
        let x = px(tick);
        out.push_str(&format!(
            "  <line x1=\"{x}\" y1=\"{b}\" x2=\"{x}\" y2=\"{b2}\" stroke=\"#333\"/>\n  <text x=\"{x}\" y=\"{ty}\" text-anchor=\"middle\">{label}</text>\n",
            x = fmt(x),
            b = HEIGHT - MARGIN_BOTTOM,
            b2 = HEIGHT - MARGIN_BOTTOM + 5.0,
            ty = HEIGHT - MARGIN_BOTTOM + 20.0,
            label = fmt_tick(tick)
        ));
    }
    for tick in y_axis.ticks(5) {
        let y = py(tick);
        out.push_str(&format!(
            "  <line x1=\"{x1}\" y1=\"{y}\" x2=\"{x2}\" y2=\"{y}\" stroke=\"#333\"/>\n  <text x=\"{tx}\" y=\"{ty}\" text-anchor=\"end\">{label}</text>\n",
            x1 = MARGIN_LEFT - 5.0,
            x2 = MARGIN_LEFT,
            y = fmt(y),
            tx = MARGIN_LEFT - 8.0,
            ty = fmt(y + 4.0),
            label = fmt_tick(tick)
        ));
    }
    out.push_str(&format!(
        "  <text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n",
        (MARGIN_LEFT + WIDTH - MARGIN_RIGHT) / 2.0,
        HEIGHT - 12.0,
        x_label
    ));
    out.push_str(&format!(
        "  <text x=\"18\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 18 {})\">{}</text>\n",
        (MARGIN_TOP + HEIGHT - MARGIN_BOTTOM) / 2.0,
        (MARGIN_TOP + HEIGHT - MARGIN_BOTTOM) / 2.0,
        y_label
    ));

    // Bands under the mean lines.
    for s in series {
        if let Some(band) = &s.band {
            if !band.is_empty() {
                let mut d = String::from("M");
                for (i, &(x, _, hi)) in band.iter().enumerate() {
                    if i > 0 {
                        d.push('L');
                    }
                    d.push_str(&format!("{},{}", fmt(px(x)), fmt(py(hi))));
                }
                for &(x, lo, _) in band.iter().rev() {
                    d.push_str(&format!("L{},{}", fmt(px(x)), fmt(py(lo))));
                }
                d.push('Z');
                out.push_str(&format!(
                    "  <path class=\"band\" d=\"{d}\" fill=\"{}\" fill-opacity=\"0.18\" stroke=\"none\"/>\n",
                    s.color
                ));
            }
        }
    }
    for s in series {
        if s.mean.is_empty() {
            continue;
        }
        let mut d = String::from("M");
        for (i, &(x, y)) in s.mean.iter().enumerate() {
            if i > 0 {
                d.push('L');
            }
            d.push_str(&format!("{},{}", fmt(px(x)), fmt(py(y))));
        }
        out.push_str(&format!(
            "  <path class=\"mean\" d=\"{d}\" fill=\"none\" stroke=\"{}\" stroke-width=\"1.8\"/>\n",
            s.color
        ));
    }
    for b in baselines {
        let y = fmt(py(b.value));
        out.push_str(&format!(
            "  <path class=\"baseline\" d=\"M{x1},{y}L{x2},{y}\" fill=\"none\" stroke=\"#555\" stroke-width=\"1.2\" stroke-dasharray=\"5 4\"/>\n",
            x1 = MARGIN_LEFT,
            x2 = WIDTH - MARGIN_RIGHT,
        ));
        out.push_str(&format!(
            "  <text x=\"{}\" y=\"{}\" fill=\"#555\">{}</text>\n",
            MARGIN_LEFT + 6.0,
            fmt(py(b.value) - 5.0),
            b.label
        ));
    }

    // Legend, top right.
    let legend_x = WIDTH - MARGIN_RIGHT - 150.0;
    for (i, s) in series.iter().enumerate() {
        let y = MARGIN_TOP + 14.0 + 18.0 * i as f64;
        out.push_str(&format!(
            "  <line x1=\"{x1}\" y1=\"{y}\" x2=\"{x2}\" y2=\"{y}\" stroke=\"{c}\" stroke-width=\"2\"/>\n  <text x=\"{tx}\" y=\"{ty}\">{label}</text>\n",
            x1 = legend_x,
            x2 = legend_x + 26.0,
            y = fmt(y),
            c = s.color,
            tx = legend_x + 32.0,
            ty = fmt(y + 4.0),
            label = s.label
        ));
    }

    out.push_str("</svg>\n");
    out
}

/// Paper legend order and colors.
pub fn algorithm_color(name: &str) -> &'static str {
    match name {
        "sdmmfd" => "#1f77b4",
        "sdfd" => "#ff7f0e",
        "cwtm" => "#2ca02c",
        "rvo" => "#d62728",
        _ => "#777777",
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(label: &str) -> Series {
        Series {
            label: label.into(),
            color: algorithm_color(label).into(),
            mean: (0..20).map(|k| (k as f64, 1.0 / (k + 1) as f64)).collect(),
            band: Some(
                (0..20)
                    .map(|k| {
                        let m = 1.0 / (k + 1) as f64;
                        (k as f64, m * 0.9, m * 1.1)
                    })
                    .collect(),
            ),
        }
    }

    #[test]
    fn path_counts_match_series() {
        let svg = render(
            "distance",
            "round",
            "distance",
            true,
            &[series("cwtm"), series("rvo")],
            &[Baseline {
                label: "min_local".into(),
                value: 0.05,
            }],
        );
        assert_eq!(svg.matches("class=\"mean\"").count(), 2);
        assert_eq!(svg.matches("class=\"band\"").count(), 2);
        assert_eq!(svg.matches("class=\"baseline\"").count(), 1);
        assert!(svg.contains("#2ca02c") && svg.contains("#d62728"));
    }

    #[test]
    fn zero_width_band_renders() {
        let flat = Series {
            label: "sdfd".into(),
            color: algorithm_color("sdfd").into(),
            mean: vec![(0.0, 1.0), (1.0, 1.0)],
            band: Some(vec![(0.0, 1.0, 1.0), (1.0, 1.0, 1.0)]),
        };
        let svg = render("diameter", "round", "diameter", false, &[flat], &[]);
        assert_eq!(svg.matches("class=\"band\"").count(), 1);
    }

    #[test]
    fn render_is_deterministic() {
        let a = render("t", "x", "y", false, &[series("sdmmfd")], &[]);
        let b = render("t", "x", "y", false, &[series("sdmmfd")], &[]);
        assert_eq!(a, b);
    }
}
