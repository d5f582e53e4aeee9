//! SVG figures: distance heatmaps, density-versus-histogram panels and the
//! Monte Carlo exact density overlay.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use wf_core::densities::{
    evaluate_model, model_density, normalize, DensityModel, GridDensity, GridSpec,
};
use wf_core::io;
use wf_core::kde::lepski_select;

use crate::config::ExperimentConfig;
use crate::error::{HarnessError, Result};
use crate::pipeline::{self, compare_dir, load_ensemble, resolve_model};
use crate::svg::{viridis, Svg};

const COLORS: [(&str, &str); 6] = [
    ("ADE", "#1f4fd6"),
    ("AE", "#d62728"),
    ("GaussA", "#2ca02c"),
    ("BetaMoment", "#9467bd"),
    ("GaussianMoment", "#ff7f0e"),
    ("ExactMC", "#111111"),
];

fn color(label: &str) -> &'static str {
    COLORS
        .iter()
        .find(|(l, _)| *l == label)
        .map_or("#7f7f7f", |(_, c)| c)
}

/// Rows of `distances.csv` as `(x0, t, model, hellinger, l2)`.
type Row = (f64, f64, String, f64, f64);

fn read_rows(cfg: &ExperimentConfig) -> Result<Vec<Row>> {
    let path = compare_dir(cfg).join("distances.csv");
    if !path.exists() {
        return Err(HarnessError::MissingInput(format!(
            "{} (run `compare` first)",
            path.display()
        )));
    }
    Ok(io::read_distance_rows(&path)?)
}

fn write_svg(path: &Path, svg: Svg) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir.display().to_string(), e))?;
    }
    std::fs::write(path, svg.finish()).map_err(|e| HarnessError::io(path.display().to_string(), e))
}

fn stamp(cfg: &ExperimentConfig, svg: &mut Svg) {
    if cfg.figures.timestamp {
        let secs = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map_or(0, |d| d.as_secs());
        svg.comment(&format!("generated-at: {secs}"));
    }
}

fn sorted_unique(values: impl Iterator<Item = f64>) -> Vec<f64> {
    let set: BTreeSet<u64> = values.map(f64::to_bits).collect();
    let mut v: Vec<f64> = set.into_iter().map(f64::from_bits).collect();
    v.sort_by(f64::total_cmp);
    v
}

/// One heatmap per model over `(x0, t)`, sharing a colour scale. Values are
/// `-log10 H` or `log10 L2`.
fn heatmap(cfg: &ExperimentConfig, rows: &[Row], hellinger: bool) -> Svg {
    let value = |r: &Row| if hellinger { -r.3.log10() } else { r.4.log10() };
    let mut models: Vec<String> = Vec::new();
    for r in rows {
        if !models.contains(&r.2) {
            models.push(r.2.clone());
        }
    }
    let xs = sorted_unique(rows.iter().map(|r| r.0));
    let ts = sorted_unique(rows.iter().map(|r| r.1));
    let finite: Vec<f64> = rows.iter().map(value).filter(|v| v.is_finite()).collect();
    let lo = finite.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = finite.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };

    let (cell_w, cell_h) = (6.0f64.max(300.0 / ts.len() as f64), 24.0);
    let (pw, ph) = (cell_w * ts.len() as f64, cell_h * xs.len() as f64);
    let (left, top, gap) = (50.0, 40.0, 40.0);
    let width = left + models.len() as f64 * (pw + gap) + 60.0;
    let height = top + ph + 60.0;
    let mut svg = Svg::new(width, height);
    stamp(cfg, &mut svg);
    let title = if hellinger {
        "-log10 H(ADE, model)"
    } else {
        "log10 L2(ADE, model)"
    };
    svg.text(width / 2.0, 18.0, 13.0, "middle", title);

    for (m, model) in models.iter().enumerate() {
        let ox = left + m as f64 * (pw + gap);
        svg.text(ox + pw / 2.0, top - 6.0, 11.0, "middle", model);
        for r in rows.iter().filter(|r| &r.2 == model) {
            let i = xs.iter().position(|&x| x == r.0).expect("x0 present");
            let j = ts.iter().position(|&t| t == r.1).expect("t present");
            let v = value(r);
            let fill = if v.is_finite() {
                viridis((v - lo) / span)
            } else {
                "#cccccc".to_string()
            };
            svg.rect(
                ox + j as f64 * cell_w,
                top + i as f64 * cell_h,
                cell_w,
                cell_h,
                &fill,
                None,
            );
        }
        if m == 0 {
            for (i, x) in xs.iter().enumerate() {
                svg.text(
                    ox - 4.0,
                    top + (i as f64 + 0.65) * cell_h,
                    9.0,
                    "end",
                    &format!("{x:.2}"),
                );
            }
        }
        let ticks = [0, ts.len() / 2, ts.len() - 1];
        for &j in ticks.iter().collect::<BTreeSet<_>>() {
            svg.text(
                ox + (j as f64 + 0.5) * cell_w,
                top + ph + 14.0,
                9.0,
                "middle",
                &format!("{:.3}", ts[j]),
            );
        }
        svg.text(ox + pw / 2.0, top + ph + 30.0, 10.0, "middle", "t");
    }
    svg.text(14.0, top + ph / 2.0, 10.0, "middle", "x0");

    // Colour bar.
    let bx = width - 40.0;
    for k in 0..20 {
        let v = 1.0 - k as f64 / 19.0;
        svg.rect(
            bx,
            top + k as f64 * ph / 20.0,
            12.0,
            ph / 20.0 + 0.5,
            &viridis(v),
            None,
        );
    }
    svg.text(bx + 6.0, top - 4.0, 8.0, "middle", &format!("{hi:.2}"));
    svg.text(
        bx + 6.0,
        top + ph + 10.0,
        8.0,
        "middle",
        &format!("{lo:.2}"),
    );
    svg
}

struct Curve {
    label: String,
    points: Vec<(f64, f64)>,
}

struct Panel {
    title: String,
    /// Bin edges and density-scaled heights.
    histogram: Option<(Vec<f64>, Vec<f64>)>,
    /// `(x, lower, upper)` band.
    band: Option<Vec<(f64, f64, f64)>>,
    curves: Vec<Curve>,
    /// Curves that set the vertical scale.
    scale_labels: Vec<&'static str>,
}

fn histogram(sample: &[f64], bins: usize) -> (Vec<f64>, Vec<f64>) {
    let edges: Vec<f64> = (0..=bins).map(|k| k as f64 / bins as f64).collect();
    let mut counts = vec![0usize; bins];
    for &x in sample {
        let k = ((x * bins as f64).floor() as usize).min(bins - 1);
        counts[k] += 1;
    }
    let scale = bins as f64 / sample.len() as f64;
    (edges, counts.iter().map(|&c| c as f64 * scale).collect())
}

fn curve(label: &str, d: &GridDensity) -> Curve {
    Curve {
        label: label.to_string(),
        points: d
            .grid
            .iter()
            .copied()
            .zip(d.values.iter().copied())
            .collect(),
    }
}

fn draw_panel(svg: &mut Svg, panel: &Panel, ox: f64, oy: f64, w: f64, h: f64) {
    let mut ymax: f64 = 0.0;
    if let Some((_, heights)) = &panel.histogram {
        ymax = heights.iter().copied().fold(ymax, f64::max);
    }
    for c in panel
        .curves
        .iter()
        .filter(|c| panel.scale_labels.contains(&c.label.as_str()))
    {
        ymax = c
            .points
            .iter()
            .map(|p| p.1)
            .filter(|v| v.is_finite())
            .fold(ymax, f64::max);
    }
    if let Some(band) = &panel.band {
        ymax = band
            .iter()
            .map(|b| b.2)
            .filter(|v| v.is_finite())
            .fold(ymax, f64::max);
    }
    let ymax = if ymax > 0.0 { ymax * 1.1 } else { 1.0 };
    let px = |x: f64| ox + x * w;
    let py = |y: f64| oy + h - (y / ymax).min(1.05) * h;

    svg.rect(ox, oy, w, h, "none", Some("#333333"));
    svg.text(ox + w / 2.0, oy - 5.0, 10.0, "middle", &panel.title);
    let clip = svg.clip(ox, oy, w, h);
    if let Some((edges, heights)) = &panel.histogram {
        for (k, &v) in heights.iter().enumerate() {
            let (x0, x1) = (px(edges[k]), px(edges[k + 1]));
            let top = py(v).max(oy);
            svg.rect(x0, top, x1 - x0, oy + h - top, "#d9d9d9", Some("#bdbdbd"));
        }
    }
    if let Some(band) = &panel.band {
        let mut pts: Vec<(f64, f64)> = band.iter().map(|b| (px(b.0), py(b.2))).collect();
        pts.extend(band.iter().rev().map(|b| (px(b.0), py(b.1))));
        svg.polygon(&pts, "#888888", 0.35, Some(&clip));
    }
    for c in &panel.curves {
        let pts: Vec<(f64, f64)> = c
            .points
            .iter()
            .filter(|p| p.1.is_finite())
            .map(|p| (px(p.0), py(p.1)))
            .collect();
        svg.polyline(&pts, color(&c.label), 1.4, Some(&clip));
    }
    for (k, x) in [0.0, 0.5, 1.0].iter().enumerate() {
        let anchor = ["start", "middle", "end"][k];
        svg.text(px(*x), oy + h + 11.0, 8.0, anchor, &format!("{x}"));
    }
    svg.text(ox - 3.0, oy + 8.0, 8.0, "end", &format!("{ymax:.1}"));
}

fn legend(svg: &mut Svg, labels: &[&str], x: f64, y: f64) {
    let mut cx = x;
    for l in labels {
        svg.line(cx, y - 3.0, cx + 16.0, y - 3.0, color(l));
        svg.text(cx + 20.0, y, 9.0, "start", l);
        cx += 30.0 + 6.0 * l.len() as f64;
    }
}

fn grid_svg(
    cfg: &ExperimentConfig,
    panels: &[Panel],
    cols: usize,
    title: &str,
    labels: &[&str],
) -> Svg {
    let (w, h, gx, gy) = (220.0, 150.0, 45.0, 45.0);
    let rows = panels.len().div_ceil(cols);
    let width = 40.0 + cols as f64 * (w + gx);
    let height = 70.0 + rows as f64 * (h + gy);
    let mut svg = Svg::new(width, height);
    stamp(cfg, &mut svg);
    svg.text(width / 2.0, 16.0, 13.0, "middle", title);
    legend(&mut svg, labels, 40.0, 34.0);
    for (k, p) in panels.iter().enumerate() {
        let (r, c) = (k / cols, k % cols);
        draw_panel(
            &mut svg,
            p,
            40.0 + c as f64 * (w + gx),
            60.0 + r as f64 * (h + gy),
            w,
            h,
        );
    }
    svg
}

fn t_in_range(cfg: &ExperimentConfig, t: f64) -> bool {
    (t * cfg.protocol.two_n as f64).round() <= cfg.protocol.n_gen as f64
}

/// Histogram panels with the reference estimate and every comparison model.
fn comparison_panels(cfg: &ExperimentConfig) -> Result<Svg> {
    let f = &cfg.figures;
    let mut panels = Vec::new();
    for &x0 in &f.panel_x0 {
        if !cfg.protocol.x0.iter().any(|&p| (p - x0).abs() < 1e-12) {
            log::warn!("figures.panel_x0: {x0} is not a simulated starting frequency, skipped");
            continue;
        }
        let ens = load_ensemble(cfg, x0)?;
        for &t in &f.panel_t {
            if !t_in_range(cfg, t) {
                return Err(HarnessError::Config(format!(
                    "figures.panel_t: {t} is beyond the simulated time"
                )));
            }
            let sample = ens.marginal_at(t)?;
            let ade = lepski_select(&sample, &cfg.kde)?;
            let mut curves = vec![curve("ADE", &ade.to_grid_density()?)];
            for m in DensityModel::comparison_set() {
                match model_density(&m, &cfg.spec, x0, t, &cfg.quadrature) {
                    Ok(d) => curves.push(curve(m.name(), &d)),
                    Err(e) => log::warn!("{} at x0 = {x0}, t = {t}: {e}", m.name()),
                }
            }
            panels.push(Panel {
                title: format!("x0 = {x0}, t = {t}"),
                histogram: Some(histogram(&sample, f.bins)),
                band: None,
                curves,
                scale_labels: vec!["ADE"],
            });
        }
    }
    Ok(grid_svg(
        cfg,
        &panels,
        f.panel_t.len().max(1),
        "Simulated frequencies and candidate densities",
        &["ADE", "AE", "GaussA", "BetaMoment", "GaussianMoment"],
    ))
}

/// Monte Carlo exact density with its 95% band, against AE.
fn exact_panels(cfg: &ExperimentConfig) -> Result<Svg> {
    let f = &cfg.figures;
    let model = resolve_model(
        &DensityModel::ExactMc {
            n_paths: cfg.mc.n_paths,
            k_steps: cfg.mc.k_steps,
            seed: 0,
        },
        cfg,
        true,
    );
    let grid = GridSpec {
        eps: 1e-3,
        n_points: f.exact_points,
    };
    let ens = load_ensemble(cfg, f.exact_x0).ok();
    let mut panels = Vec::new();
    for &t in &f.exact_t {
        let exact = normalize(evaluate_model(
            &model,
            &cfg.spec,
            f.exact_x0,
            t,
            &grid.points(),
        )?)?;
        let se = exact.std_error.clone().unwrap_or_default();
        let band = exact
            .grid
            .iter()
            .zip(&exact.values)
            .zip(&se)
            .map(|((&x, &v), &s)| (x, (v - io::CI_Z * s).max(0.0), v + io::CI_Z * s))
            .collect();
        let ae = model_density(&DensityModel::Ae, &cfg.spec, f.exact_x0, t, &cfg.quadrature)?;
        let histogram = match &ens {
            Some(e) if t_in_range(cfg, t) => Some(histogram(&e.marginal_at(t)?, f.bins)),
            _ => None,
        };
        panels.push(Panel {
            title: format!("x0 = {}, t = {t}", f.exact_x0),
            histogram,
            band: Some(band),
            curves: vec![curve("ExactMC", &exact), curve("AE", &ae)],
            scale_labels: vec!["ExactMC"],
        });
    }
    Ok(grid_svg(
        cfg,
        &panels,
        f.exact_t.len().max(1),
        "Bridge Monte Carlo density (95% band) and AE",
        &["ExactMC", "AE"],
    ))
}

pub fn figures_dir(cfg: &ExperimentConfig) -> PathBuf {
    cfg.output_dir.join("figures")
}

/// Writes every figure. Fails without writing anything when the distance
/// table is missing or empty.
pub fn cmd_figures(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    let rows = read_rows(cfg)?;
    if rows.is_empty() {
        return Err(HarnessError::EmptyReport(format!(
            "{} has no rows",
            compare_dir(cfg).join("distances.csv").display()
        )));
    }
    let panels = comparison_panels(cfg)?;
    let exact = exact_panels(cfg)?;
    pipeline::prepare(cfg)?;
    let dir = figures_dir(cfg);
    let outputs = [
        (dir.join("heatmap_hellinger.svg"), heatmap(cfg, &rows, true)),
        (dir.join("heatmap_l2.svg"), heatmap(cfg, &rows, false)),
        (dir.join("comparison_panels.svg"), panels),
        (dir.join("exact_density.svg"), exact),
    ];
    let mut written = Vec::new();
    for (path, svg) in outputs {
        write_svg(&path, svg)?;
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn histogram_is_density_scaled() {
        let (edges, h) = histogram(&[0.0, 0.1, 0.55, 1.0], 10);
        assert_eq!(edges.len(), 11);
        let mass: f64 = h.iter().sum::<f64>() / 10.0;
        assert!((mass - 1.0).abs() < 1e-12);
        assert_eq!(h[0], 2.5);
        assert_eq!(h[9], 2.5);
    }

    #[test]
    fn unique_values_sorted() {
        assert_eq!(
            sorted_unique([0.3, 0.1, 0.3, 0.2].into_iter()),
            vec![0.1, 0.2, 0.3]
        );
    }
}
