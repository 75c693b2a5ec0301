//! SVG curves of per-iteration medians.

use std::path::Path;

use plotters::prelude::*;

use crate::error::{Error, Result};
use crate::harness::AggregateRow;

const PALETTE: [RGBColor; 4] = [
    RGBColor(31, 119, 180),
    RGBColor(214, 39, 40),
    RGBColor(44, 160, 44),
    RGBColor(148, 103, 189),
];

struct Series<'a> {
    label: &'a str,
    points: Vec<(f64, f64)>,
    band: Option<Vec<(f64, f64, f64)>>,
}

fn draw(path: &Path, caption: &str, y_label: &str, series: &[Series<'_>]) -> Result<()> {
    let err = |e: &dyn std::fmt::Display| Error::Plot(e.to_string());
    let x_max = series
        .iter()
        .flat_map(|s| s.points.iter().map(|p| p.0))
        .fold(1.0f64, f64::max);
    let mut y_max = 0.0f64;
    for s in series {
        for p in &s.points {
            y_max = y_max.max(p.1);
        }
        for b in s.band.iter().flatten() {
            y_max = y_max.max(b.2);
        }
    }
    if !(y_max.is_finite() && y_max > 0.0) {
        y_max = 1.0;
    }
    let root = SVGBackend::new(path, (720, 480)).into_drawing_area();
    root.fill(&WHITE).map_err(|e| err(&e))?;
    let mut chart = ChartBuilder::on(&root)
        .caption(caption, ("sans-serif", 20))
        .margin(12)
        .x_label_area_size(36)
        .y_label_area_size(56)
        .build_cartesian_2d(1.0..x_max.max(2.0), 0.0..y_max * 1.05)
        .map_err(|e| err(&e))?;
    chart
        .configure_mesh()
        .x_desc("iteration")
        .y_desc(y_label)
        .draw()
        .map_err(|e| err(&e))?;
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        if let Some(band) = &s.band {
            let mut poly: Vec<(f64, f64)> = band.iter().map(|&(x, lo, _)| (x, lo)).collect();
            poly.extend(band.iter().rev().map(|&(x, _, hi)| (x, hi)));
            chart
                .draw_series(std::iter::once(Polygon::new(poly, color.mix(0.15).filled())))
                .map_err(|e| err(&e))?;
        }
        chart
            .draw_series(LineSeries::new(s.points.iter().copied(), color.stroke_width(2)))
            .map_err(|e| err(&e))?
            .label(s.label)
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 18, y)], color.stroke_width(2)));
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()
        .map_err(|e| err(&e))?;
    root.present().map_err(|e| err(&e))
}

/// Median instantaneous regret with a one-standard-deviation band.
pub fn regret_plot(path: &Path, series: &[(&str, &[AggregateRow])]) -> Result<()> {
    let s: Vec<Series<'_>> = series
        .iter()
        .map(|(label, rows)| Series {
            label,
            points: rows.iter().map(|r| (r.t as f64, r.median_regret)).collect(),
            band: Some(
                rows.iter()
                    .map(|r| {
                        let lo = (r.median_regret - r.std_regret).max(0.0);
                        (r.t as f64, lo, r.median_regret + r.std_regret)
                    })
                    .collect(),
            ),
        })
        .collect();
    draw(path, "regret", "median instantaneous regret", &s)
}

/// Median cumulative query-selection time.
pub fn runtime_plot(path: &Path, series: &[(&str, &[AggregateRow])]) -> Result<()> {
    let s: Vec<Series<'_>> = series
        .iter()
        .map(|(label, rows)| Series {
            label,
            points: rows.iter().map(|r| (r.t as f64, r.median_cumulative_runtime_s)).collect(),
            band: None,
        })
        .collect();
    draw(path, "runtime", "median cumulative time (s)", &s)
}
