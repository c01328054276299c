//! Minimal deterministic SVG rendering of posterior and scan results.

use std::fmt::Write;

use crate::diagnostics::FitReport;
use crate::error::{Error, Result};
use crate::models::ModelKind;
use crate::pipeline::ScanOutcome;

const W: f64 = 640.0;
const H: f64 = 400.0;
const PAD: f64 = 50.0;

struct Axis {
    lo: f64,
    hi: f64,
    px_lo: f64,
    px_hi: f64,
}

impl Axis {
    fn new(lo: f64, hi: f64, px_lo: f64, px_hi: f64) -> Self {
        let (lo, hi) = if hi > lo { (lo, hi) } else { (lo - 0.5, hi + 0.5) };
        Self { lo, hi, px_lo, px_hi }
    }

    fn map(&self, v: f64) -> f64 {
        self.px_lo + (v - self.lo) / (self.hi - self.lo) * (self.px_hi - self.px_lo)
    }
}

fn header(out: &mut String, title: &str) {
    let _ = write!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">\n\
         <rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"15\">{}</text>\n",
        W / 2.0,
        escape(title)
    );
    let _ = writeln!(
        out,
        "<line x1=\"{PAD}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>",
        H - PAD,
        W - PAD,
        H - PAD
    );
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn finite(what: &str, v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::MalformedReport(format!("{what} is not finite")))
    }
}

/// Histogram of the effect-size posterior with its mean, the 94% HDI and the
/// zero reference, annotated with the posterior mass on either side of zero.
pub fn posterior_svg(r: &FitReport) -> Result<String> {
    let h = &r.d_histogram;
    if h.counts.is_empty() || h.counts.iter().all(|c| *c == 0) {
        return Err(Error::MalformedReport("empty effect-size histogram".into()));
    }
    let lo = finite("histogram low", h.low)?;
    let width = finite("histogram width", h.width)?;
    if width <= 0.0 {
        return Err(Error::MalformedReport("histogram width must be positive".into()));
    }
    let mean = finite("d_mean", r.d_mean)?;
    let (hl, hh) = (finite("hdi low", r.hdi94.low)?, finite("hdi high", r.hdi94.high)?);
    let below = finite("prob_below_ref", r.prob_below_ref)?;
    if !(0.0..=1.0).contains(&below) {
        return Err(Error::MalformedReport(format!("prob_below_ref {below} outside [0, 1]")));
    }
    let hi = lo + width * h.counts.len() as f64;
    let xa = Axis::new(lo.min(0.0).min(hl), hi.max(0.0).max(hh), PAD, W - PAD);
    let top = *h.counts.iter().max().unwrap() as f64;
    let ya = Axis::new(0.0, top * 1.1, H - PAD, PAD + 20.0);

    let mut out = String::new();
    header(&mut out, &format!("{} {} posterior of d", r.meta.index, r.meta.model));
    for (k, c) in h.counts.iter().enumerate() {
        let x0 = xa.map(lo + k as f64 * width);
        let x1 = xa.map(lo + (k + 1) as f64 * width);
        let y = ya.map(*c as f64);
        let _ = writeln!(
            out,
            "<rect x=\"{x0:.2}\" y=\"{y:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"#7fa7d9\" stroke=\"#3b6fb0\" stroke-width=\"0.5\"/>",
            (x1 - x0).max(0.0),
            (H - PAD - y).max(0.0)
        );
    }
    let bar_y = H - PAD - 12.0;
    let _ = writeln!(
        out,
        "<line x1=\"{:.2}\" y1=\"{bar_y}\" x2=\"{:.2}\" y2=\"{bar_y}\" stroke=\"black\" stroke-width=\"4\"/>",
        xa.map(hl),
        xa.map(hh)
    );
    let _ = writeln!(
        out,
        "<text x=\"{:.2}\" y=\"{}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">94% HDI [{hl:.3}, {hh:.3}]</text>",
        xa.map(0.5 * (hl + hh)),
        bar_y - 6.0
    );
    let _ = writeln!(
        out,
        "<line x1=\"{x:.2}\" y1=\"{}\" x2=\"{x:.2}\" y2=\"{}\" stroke=\"#c0392b\" stroke-dasharray=\"5,3\"/>",
        PAD + 20.0,
        H - PAD,
        x = xa.map(0.0)
    );
    let _ = writeln!(
        out,
        "<line x1=\"{x:.2}\" y1=\"{}\" x2=\"{x:.2}\" y2=\"{}\" stroke=\"black\"/>",
        PAD + 20.0,
        H - PAD,
        x = xa.map(mean)
    );
    let _ = writeln!(
        out,
        "<text x=\"{:.2}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\">mean = {mean:.3}</text>",
        xa.map(mean) + 4.0,
        PAD + 34.0
    );
    let _ = writeln!(
        out,
        "<text x=\"{:.2}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\" fill=\"#c0392b\">{:.1}% below 0 &lt; {:.1}% above</text>",
        xa.map(0.0) + 4.0,
        PAD + 50.0,
        100.0 * below,
        100.0 * (1.0 - below)
    );
    axis_labels(&mut out, &xa);
    out.push_str("</svg>\n");
    Ok(out)
}

fn axis_labels(out: &mut String, xa: &Axis) {
    for k in 0..=4 {
        let v = xa.lo + (xa.hi - xa.lo) * k as f64 / 4.0;
        let _ = writeln!(
            out,
            "<text x=\"{:.2}\" y=\"{}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">{v:.3}</text>",
            xa.map(v),
            H - PAD + 16.0
        );
    }
}

/// Mean and HDI bounds of `d` across a scan grid for one index, one polyline
/// triple per model. Failed grid points are left out of the lines.
pub fn scan_svg(scan: &ScanOutcome, index: &str) -> Result<String> {
    let rows: Vec<_> = scan.rows.iter().filter(|r| r.index == index).collect();
    if rows.is_empty() {
        return Err(Error::MalformedReport(format!("no scan rows for index {index}")));
    }
    let mut grid = Vec::new();
    for r in &rows {
        if !grid.contains(&r.grid) {
            grid.push(r.grid);
        }
    }
    let ok: Vec<_> = rows.iter().filter_map(|r| r.result.as_ref().ok().map(|s| (r, s))).collect();
    if ok.is_empty() {
        return Err(Error::MalformedReport(format!("every scan point failed for index {index}")));
    }
    let mut lo = 0.0f64;
    let mut hi = 0.0f64;
    for (_, s) in &ok {
        lo = lo.min(finite("hdi low", s.hdi94.low)?);
        hi = hi.max(finite("hdi high", s.hdi94.high)?);
        finite("d_mean", s.d_mean)?;
    }
    let n = grid.len();
    let xpos = |g| {
        let k = grid.iter().position(|x| *x == g).unwrap();
        if n == 1 {
            W / 2.0
        } else {
            PAD + (W - 2.0 * PAD) * k as f64 / (n - 1) as f64
        }
    };
    let ya = Axis::new(lo, hi, H - PAD, PAD + 20.0);

    let mut out = String::new();
    header(&mut out, &format!("{index}: effect size across the scan"));
    let _ = writeln!(
        out,
        "<line x1=\"{PAD}\" y1=\"{y:.2}\" x2=\"{}\" y2=\"{y:.2}\" stroke=\"#888\" stroke-dasharray=\"5,3\"/>",
        W - PAD,
        y = ya.map(0.0)
    );
    for (mi, (model, colour)) in [(ModelKind::StudentT, "#1f77b4"), (ModelKind::InverseGamma, "#d62728")]
        .iter()
        .enumerate()
    {
        let pts: Vec<_> = ok.iter().filter(|(r, _)| r.model == *model).collect();
        if pts.is_empty() {
            continue;
        }
        for (pick, dash) in [
            (0usize, ""),
            (1, " stroke-dasharray=\"3,3\""),
            (2, " stroke-dasharray=\"3,3\""),
        ] {
            let coords: Vec<String> = pts
                .iter()
                .map(|(r, s)| {
                    let v = [s.d_mean, s.hdi94.low, s.hdi94.high][pick];
                    format!("{:.2},{:.2}", xpos(r.grid), ya.map(v))
                })
                .collect();
            let _ = writeln!(
                out,
                "<polyline fill=\"none\" stroke=\"{colour}\"{dash} points=\"{}\"/>",
                coords.join(" ")
            );
        }
        let _ = writeln!(
            out,
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\" fill=\"{colour}\">{model}</text>",
            W - PAD - 100.0,
            PAD + 20.0 + 16.0 * mi as f64
        );
    }
    for g in &grid {
        let _ = writeln!(
            out,
            "<text x=\"{:.2}\" y=\"{}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">{}</text>",
            xpos(*g),
            H - PAD + 16.0,
            g.label()
        );
    }
    out.push_str("</svg>\n");
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagnostics::{Histogram, Interval, ReportMeta};
    use crate::pipeline::{GridPoint, ScanRow, ScanStats};

    fn report() -> FitReport {
        let samples: Vec<f64> = (0..1000).map(|i| -0.5 + i as f64 / 2000.0).collect();
        FitReport {
            meta: ReportMeta {
                index: "DJIA".into(),
                model: ModelKind::StudentT,
                rho: 0.1,
                filter_size: 252,
                n_plus: 10,
                n_minus: 10,
                n_dropped: 0,
            },
            d_mean: -0.25,
            d_std: 0.14,
            hdi94: Interval { low: -0.47, high: -0.03 },
            prob_below_ref: 1.0,
            d_rhat: None,
            d_ess: None,
            waic: None,
            params: Vec::new(),
            max_rhat: None,
            n_chains: 1,
            n_draw: 1000,
            divergences: 0,
            seed: 0,
            d_histogram: Histogram::new(&samples, 20),
        }
    }

    #[test]
    fn posterior_plot_is_deterministic_and_annotated() {
        let a = posterior_svg(&report()).unwrap();
        assert_eq!(a, posterior_svg(&report()).unwrap());
        assert!(a.starts_with("<svg"));
        assert!(a.contains("100.0% below 0"));
        assert!(a.contains("94% HDI [-0.470, -0.030]"));
        assert_eq!(a.matches("<rect").count(), 21);
    }

    #[test]
    fn malformed_reports_rejected() {
        let mut r = report();
        r.d_histogram.counts.clear();
        assert!(matches!(posterior_svg(&r), Err(Error::MalformedReport(_))));
        let mut r = report();
        r.d_mean = f64::NAN;
        assert!(matches!(posterior_svg(&r), Err(Error::MalformedReport(_))));
        let mut r = report();
        r.prob_below_ref = 1.5;
        assert!(posterior_svg(&r).is_err());
    }

    #[test]
    fn scan_plot_has_one_vertex_per_point() {
        let stats = |m: f64| ScanStats {
            rho: 0.1,
            n_plus: 5,
            n_minus: 5,
            d_mean: m,
            d_std: 0.1,
            hdi94: Interval {
                low: m - 0.2,
                high: m + 0.2,
            },
            ess: None,
            rhat: None,
            waic: None,
            waic_se: None,
        };
        let mut rows = Vec::new();
        for (k, f) in [150usize, 200, 252].iter().enumerate() {
            for model in [ModelKind::StudentT, ModelKind::InverseGamma] {
                rows.push(ScanRow {
                    index: "X".into(),
                    grid: GridPoint::FilterSize(*f),
                    model,
                    result: if k == 1 && model == ModelKind::InverseGamma {
                        Err("fail".into())
                    } else {
                        Ok(stats(-0.1 * k as f64))
                    },
                });
            }
        }
        let scan = ScanOutcome {
            rows,
            notices: Vec::new(),
        };
        let svg = scan_svg(&scan, "X").unwrap();
        assert_eq!(svg.matches("<polyline").count(), 6);
        let first = svg.lines().find(|l| l.contains("<polyline")).unwrap();
        assert_eq!(first.split("points=\"").nth(1).unwrap().split(' ').count(), 3);
        assert!(scan_svg(&scan, "Y").is_err());
    }
}
