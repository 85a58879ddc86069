//! Deterministic SVG line plots of output bundles.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::oracle::m2_haar;
use crate::output::{Table, AVERAGES_CSV, DEVIATIONS_CSV, FITS_CSV, TIMESERIES_CSV};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 440.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 150.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 55.0;
const PALETTE: [&str; 8] =
    ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf"];

#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    pub dashed: bool,
    /// Index into the palette.
    pub color: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Figure {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
}

fn nice_step(range: f64) -> f64 {
    let raw = range / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let f = raw / mag;
    let nice = if f < 1.5 { 1.0 } else if f < 3.5 { 2.0 } else if f < 7.5 { 5.0 } else { 10.0 };
    nice * mag
}

fn bounds(values: impl Iterator<Item = f64>) -> Option<(f64, f64)> {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if lo > hi {
        return None;
    }
    if hi - lo < 1e-12 {
        return Some((lo - 0.5, hi + 0.5));
    }
    let pad = 0.05 * (hi - lo);
    Some((lo - pad, hi + pad))
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

impl Figure {
    pub fn new(title: &str, x_label: &str, y_label: &str) -> Self {
        Self { title: title.into(), x_label: x_label.into(), y_label: y_label.into(), series: Vec::new() }
    }

    pub fn is_empty(&self) -> bool {
        self.series.iter().all(|s| s.points.iter().all(|(x, y)| !(x.is_finite() && y.is_finite())))
    }

    pub fn to_svg(&self) -> String {
        let pts = || self.series.iter().flat_map(|s| s.points.iter().copied());
        let (x0, x1) = bounds(pts().map(|p| p.0)).unwrap_or((0.0, 1.0));
        let (y0, y1) = bounds(pts().map(|p| p.1)).unwrap_or((0.0, 1.0));
        let pw = WIDTH - MARGIN_L - MARGIN_R;
        let ph = HEIGHT - MARGIN_T - MARGIN_B;
        let sx = |x: f64| MARGIN_L + (x - x0) / (x1 - x0) * pw;
        let sy = |y: f64| MARGIN_T + (y1 - y) / (y1 - y0) * ph;

        let mut svg = String::new();
        let _ = writeln!(
            svg,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(svg, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
            MARGIN_L + pw / 2.0,
            escape(&self.title)
        );
        let _ = writeln!(
            svg,
            r#"<rect x="{MARGIN_L}" y="{MARGIN_T}" width="{pw:.2}" height="{ph:.2}" fill="none" stroke="black"/>"#
        );

        let tick_fmt = |v: f64, step: f64| {
            if step >= 1.0 { format!("{v:.0}") } else { format!("{v:.*}", (-step.log10().floor()) as usize) }
        };
        let step = nice_step(x1 - x0);
        let mut v = (x0 / step).ceil() * step;
        while v <= x1 + 1e-9 * step {
            let x = sx(v);
            let _ = writeln!(
                svg,
                r#"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="black"/><text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
                MARGIN_T + ph,
                MARGIN_T + ph + 5.0,
                MARGIN_T + ph + 18.0,
                tick_fmt(v, step)
            );
            v += step;
        }
        let step = nice_step(y1 - y0);
        let mut v = (y0 / step).ceil() * step;
        while v <= y1 + 1e-9 * step {
            let y = sy(v);
            let _ = writeln!(
                svg,
                r#"<line x1="{:.2}" y1="{y:.2}" x2="{MARGIN_L}" y2="{y:.2}" stroke="black"/><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
                MARGIN_L - 5.0,
                MARGIN_L - 8.0,
                y + 4.0,
                tick_fmt(v, step)
            );
            v += step;
        }
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            MARGIN_L + pw / 2.0,
            HEIGHT - 12.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            svg,
            r#"<text x="18" y="{:.2}" text-anchor="middle" transform="rotate(-90 18 {:.2})">{}</text>"#,
            MARGIN_T + ph / 2.0,
            MARGIN_T + ph / 2.0,
            escape(&self.y_label)
        );

        let mut legend = 0;
        for s in &self.series {
            let color = PALETTE[s.color % PALETTE.len()];
            let coords: Vec<String> = s
                .points
                .iter()
                .filter(|(x, y)| x.is_finite() && y.is_finite())
                .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
                .collect();
            if coords.is_empty() {
                continue;
            }
            let dash = if s.dashed { r#" stroke-dasharray="6 4""# } else { "" };
            let _ = writeln!(
                svg,
                r#"<polyline fill="none" stroke="{color}" stroke-width="1.5"{dash} points="{}"/>"#,
                coords.join(" ")
            );
            if !s.dashed {
                for c in &coords {
                    let (cx, cy) = c.split_once(',').unwrap_or(("0", "0"));
                    let _ = writeln!(svg, r#"<circle cx="{cx}" cy="{cy}" r="2.5" fill="{color}"/>"#);
                }
            }
            if !s.label.is_empty() {
                let ly = MARGIN_T + 10.0 + 16.0 * legend as f64;
                let lx = WIDTH - MARGIN_R + 10.0;
                let _ = writeln!(
                    svg,
                    r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="1.5"{dash}/><text x="{:.2}" y="{:.2}">{}</text>"#,
                    lx + 20.0,
                    lx + 25.0,
                    ly + 4.0,
                    escape(&s.label)
                );
                legend += 1;
            }
        }
        svg.push_str("</svg>\n");
        svg
    }
}

/// Rows of `table` grouped by the given key columns, in first-seen order.
fn grouped<'a>(table: &'a Table, keys: &[&str]) -> Result<Vec<(Vec<&'a str>, Vec<usize>)>> {
    let cols: Vec<Vec<&str>> = keys.iter().map(|k| table.strings(k)).collect::<Result<_>>()?;
    let mut order: Vec<(Vec<&str>, Vec<usize>)> = Vec::new();
    for i in 0..table.rows.len() {
        let key: Vec<&str> = cols.iter().map(|c| c[i]).collect();
        match order.iter_mut().find(|(k, _)| *k == key) {
            Some((_, rows)) => rows.push(i),
            None => order.push((key, vec![i])),
        }
    }
    Ok(order)
}

fn read_nonempty(path: &Path) -> Result<Option<Table>> {
    if !path.exists() {
        return Ok(None);
    }
    let table = Table::read(path)?;
    if table.is_empty() {
        log::warn!("{} has no data rows; skipping its plots", path.display());
        return Ok(None);
    }
    Ok(Some(table))
}

/// Fit lines `(slope, intercept)` keyed by `(N, chi, order)` for one model.
fn fit_lines(dir: &Path, model: &str) -> Result<BTreeMap<(String, String, String), (f64, f64)>> {
    let mut out = BTreeMap::new();
    let Some(fits) = read_nonempty(&dir.join(FITS_CSV))? else {
        return Ok(out);
    };
    let (ns, chis, orders, models, status) = (
        fits.strings("N")?,
        fits.strings("chi")?,
        fits.strings("order")?,
        fits.strings("model")?,
        fits.strings("status")?,
    );
    let (slope, intercept) = (fits.floats("slope")?, fits.floats("intercept")?);
    for i in 0..fits.rows.len() {
        if models[i] == model && status[i] == "ok" {
            out.insert((ns[i].into(), chis[i].into(), orders[i].into()), (slope[i], intercept[i]));
        }
    }
    Ok(out)
}

fn save(dir: &Path, name: &str, fig: &Figure, written: &mut Vec<PathBuf>) -> Result<()> {
    if fig.is_empty() {
        log::warn!("{name}: nothing to draw");
        return Ok(());
    }
    let path = dir.join(name);
    fs::write(&path, fig.to_svg())?;
    written.push(path);
    Ok(())
}

fn plot_exp1(dir: &Path, avg: &Table, written: &mut Vec<PathBuf>) -> Result<()> {
    let chi = avg.floats("chi")?;
    let groups = grouped(avg, &["N"])?;
    for (order, col) in [(1, "m1_bar"), (2, "m2_bar")] {
        let ys = avg.floats(col)?;
        let mut fig = Figure::new(&format!("Mean M{order} against bond dimension"), "chi", &format!("M{order}"));
        for (k, (key, rows)) in groups.iter().enumerate() {
            let pts: Vec<(f64, f64)> = rows.iter().map(|&i| (chi[i], ys[i])).collect();
            fig.series.push(Series { label: format!("N={}", key[0]), points: pts.clone(), dashed: false, color: k });
            if order == 2 {
                let n: usize = key[0].parse().unwrap_or(1).max(1);
                let (lo, hi) = pts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |a, p| (a.0.min(p.0), a.1.max(p.0)));
                let h = m2_haar(n);
                fig.series.push(Series { label: String::new(), points: vec![(lo, h), (hi, h)], dashed: true, color: k });
            }
        }
        save(dir, &format!("m{order}_vs_chi.svg"), &fig, written)?;
    }

    let Some(dev) = read_nonempty(&dir.join(DEVIATIONS_CSV))? else {
        return Ok(());
    };
    let lines = fit_lines(dir, "log-linear-chi")?;
    let x = dev.floats("chi_axis")?;
    let groups = grouped(&dev, &["N"])?;
    for order in [1, 2] {
        let d = dev.floats(&format!("delta_m{order}"))?;
        let mut fig = Figure::new(&format!("ln dM{order} against bond dimension"), "chi", &format!("ln dM{order}"));
        for (k, (key, rows)) in groups.iter().enumerate() {
            let pts: Vec<(f64, f64)> =
                rows.iter().filter(|&&i| d[i] > 0.0).map(|&i| (x[i], d[i].ln())).collect();
            if let Some(&(slope, icpt)) = lines.get(&(key[0].to_string(), "all".into(), order.to_string())) {
                let (lo, hi) = pts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |a, p| (a.0.min(p.0), a.1.max(p.0)));
                if lo <= hi {
                    let line = vec![(lo, slope * lo + icpt), (hi, slope * hi + icpt)];
                    fig.series.push(Series { label: String::new(), points: line, dashed: true, color: k });
                }
            }
            fig.series.push(Series { label: format!("N={}", key[0]), points: pts, dashed: false, color: k });
        }
        save(dir, &format!("ln_delta_m{order}_vs_chi.svg"), &fig, written)?;
    }

    let mut fig = Figure::new("Amplitude against system size", "N", "beta");
    let betas = lines_amplitudes(&lines);
    let beta_fits = fit_lines(dir, "linear-N")?;
    for order in [1u32, 2] {
        let pts: Vec<(f64, f64)> = betas.iter().filter(|b| b.0 == order).map(|b| (b.1, b.2)).collect();
        if let Some(&(slope, icpt)) = beta_fits.get(&("all".into(), "all".into(), order.to_string())) {
            let (lo, hi) = pts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |a, p| (a.0.min(p.0), a.1.max(p.0)));
            if lo <= hi {
                let line = vec![(lo, slope * lo + icpt), (hi, slope * hi + icpt)];
                fig.series.push(Series { label: String::new(), points: line, dashed: true, color: order as usize });
            }
        }
        fig.series.push(Series { label: format!("n={order}"), points: pts, dashed: false, color: order as usize });
    }
    save(dir, "beta_vs_n.svg", &fig, written)
}

/// `(order, N, exp(intercept))` of the per-size exponential fits.
fn lines_amplitudes(lines: &BTreeMap<(String, String, String), (f64, f64)>) -> Vec<(u32, f64, f64)> {
    let mut out: Vec<(u32, f64, f64)> = lines
        .iter()
        .filter_map(|((n, _, order), &(_, icpt))| Some((order.parse().ok()?, n.parse().ok()?, icpt.exp())))
        .collect();
    out.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    out
}

fn plot_exp2(dir: &Path, ts: &Table, written: &mut Vec<PathBuf>) -> Result<()> {
    let t = ts.floats("t")?;
    let groups = grouped(ts, &["N", "chi"])?;
    let panels = [
        ("m1_bar", "Mean M1 against time", "M1", "m1_vs_t.svg", false),
        ("m2_bar", "Mean M2 against time", "M2", "m2_vs_t.svg", true),
        ("s_bar", "Mean max-cut entanglement against time", "S (bits)", "s_vs_t.svg", false),
        ("required_bond_mean", "Required bond dimension against time", "ln required bond", "bond_vs_t.svg", false),
    ];
    for (col, title, ylab, file, haar) in panels {
        let ys = ts.floats(col)?;
        let mut fig = Figure::new(title, "t", ylab);
        for (k, (key, rows)) in groups.iter().enumerate() {
            let pts: Vec<(f64, f64)> = rows
                .iter()
                .map(|&i| (t[i], if col == "required_bond_mean" { ys[i].ln() } else { ys[i] }))
                .collect();
            if haar {
                let n: usize = key[0].parse().unwrap_or(1).max(1);
                let hi = pts.iter().map(|p| p.0).fold(0.0, f64::max);
                let h = m2_haar(n);
                fig.series.push(Series { label: String::new(), points: vec![(0.0, h), (hi, h)], dashed: true, color: k });
            }
            let label = format!("N={} chi={}", key[0], key[1]);
            fig.series.push(Series { label, points: pts, dashed: false, color: k });
        }
        save(dir, file, &fig, written)?;
    }

    let Some(dev) = read_nonempty(&dir.join(DEVIATIONS_CSV))? else {
        return Ok(());
    };
    let lines = fit_lines(dir, "log-linear-t")?;
    let x = dev.floats("t")?;
    let groups = grouped(&dev, &["N", "chi"])?;
    for order in [1, 2] {
        let d = dev.floats(&format!("delta_m{order}"))?;
        let mut fig = Figure::new(&format!("ln dM{order} against time"), "t", &format!("ln dM{order}"));
        for (k, (key, rows)) in groups.iter().enumerate() {
            let pts: Vec<(f64, f64)> =
                rows.iter().filter(|&&i| d[i] > 0.0).map(|&i| (x[i], d[i].ln())).collect();
            if let Some(&(slope, icpt)) = lines.get(&(key[0].to_string(), key[1].to_string(), order.to_string())) {
                let hi = pts.iter().map(|p| p.0).fold(0.0, f64::max);
                let line = vec![(1.0, slope + icpt), (hi, slope * hi + icpt)];
                fig.series.push(Series { label: String::new(), points: line, dashed: true, color: k });
            }
            fig.series.push(Series { label: format!("N={} chi={}", key[0], key[1]), points: pts, dashed: false, color: k });
        }
        save(dir, &format!("ln_delta_m{order}_vs_t.svg"), &fig, written)?;
    }
    Ok(())
}

/// Writes every figure the bundle in `dir` supports and returns their paths.
///
/// Tables without data rows are skipped with a warning.
pub fn plot_bundle(dir: &Path) -> Result<Vec<PathBuf>> {
    let (avg_path, ts_path) = (dir.join(AVERAGES_CSV), dir.join(TIMESERIES_CSV));
    if !avg_path.exists() && !ts_path.exists() {
        return Err(Error::Format {
            path: dir.to_path_buf(),
            msg: format!("neither {AVERAGES_CSV} nor {TIMESERIES_CSV} found"),
        });
    }
    let mut written = Vec::new();
    if let Some(avg) = read_nonempty(&avg_path)? {
        plot_exp1(dir, &avg, &mut written)?;
    }
    if let Some(ts) = read_nonempty(&ts_path)? {
        plot_exp2(dir, &ts, &mut written)?;
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::output::write_csv;

    #[test]
    fn svg_is_deterministic_and_well_formed() {
        let mut fig = Figure::new("a <b>", "x", "y");
        fig.series.push(Series { label: "s".into(), points: vec![(0.0, 1.0), (1.0, 2.0)], dashed: false, color: 0 });
        fig.series.push(Series { label: String::new(), points: vec![(0.0, 1.5), (1.0, 1.5)], dashed: true, color: 1 });
        let a = fig.to_svg();
        assert_eq!(a, fig.clone().to_svg());
        assert!(a.starts_with("<svg") && a.trim_end().ends_with("</svg>"));
        assert!(a.contains("a &lt;b&gt;"));
        assert!(a.contains("stroke-dasharray"));
    }

    #[test]
    fn empty_table_writes_nothing() {
        let dir = tempfile::tempdir().unwrap();
        write_csv(&dir.path().join(AVERAGES_CSV), "averages", &["N", "chi", "m1_bar"], &[]).unwrap();
        assert!(plot_bundle(dir.path()).unwrap().is_empty());
        let fresh = tempfile::tempdir().unwrap();
        assert!(plot_bundle(fresh.path()).is_err());
    }

    #[test]
    fn missing_column_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        write_csv(&dir.path().join(AVERAGES_CSV), "averages", &["N", "m1_bar"], &[vec!["4".into(), "1".into()]])
            .unwrap();
        assert!(matches!(plot_bundle(dir.path()), Err(Error::Format { .. })));
    }

    #[test]
    fn nice_steps() {
        assert_eq!(nice_step(10.0), 2.0);
        assert_eq!(nice_step(1.0), 0.2);
        assert_eq!(nice_step(30.0), 5.0);
    }
}
