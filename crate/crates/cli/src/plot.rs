//! SVG charts: polylines with markers, and per-battery schedule panes.

use plotters::prelude::*;
use std::ops::Range;
use std::path::Path;

pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

pub struct LineChart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
}

/// One pane of the schedule figure.
pub struct SchedulePane {
    pub title: String,
    /// `(hour, net power MW)`; positive is charging.
    pub net_power: Vec<(f64, f64)>,
    /// `(hour, state of charge MWh)`
    pub soc: Vec<(f64, f64)>,
}

type PlotResult = Result<(), String>;

fn padded(values: impl Iterator<Item = f64>) -> Range<f64> {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        return 0.0..1.0;
    }
    let pad = if hi > lo { 0.06 * (hi - lo) } else { 0.5 * lo.abs().max(1.0) };
    lo - pad..hi + pad
}

fn color(i: usize) -> RGBColor {
    const COLORS: [RGBColor; 6] = [
        RGBColor(31, 119, 180),
        RGBColor(214, 39, 40),
        RGBColor(44, 160, 44),
        RGBColor(148, 103, 189),
        RGBColor(255, 127, 14),
        RGBColor(140, 86, 75),
    ];
    COLORS[i % COLORS.len()]
}

pub fn line_chart(path: &Path, chart: &LineChart) -> PlotResult {
    let root = SVGBackend::new(path, (860, 560)).into_drawing_area();
    root.fill(&WHITE).map_err(|e| e.to_string())?;
    let all = || chart.series.iter().flat_map(|s| s.points.iter());
    let xr = padded(all().map(|p| p.0));
    let yr = padded(all().map(|p| p.1));
    let mut ctx = ChartBuilder::on(&root)
        .caption(&chart.title, ("sans-serif", 22))
        .margin(16)
        .x_label_area_size(48)
        .y_label_area_size(84)
        .build_cartesian_2d(xr, yr)
        .map_err(|e| e.to_string())?;
    ctx.configure_mesh()
        .x_desc(chart.x_label.as_str())
        .y_desc(chart.y_label.as_str())
        .draw()
        .map_err(|e| e.to_string())?;
    for (i, s) in chart.series.iter().enumerate() {
        let c = color(i);
        ctx.draw_series(LineSeries::new(s.points.iter().copied(), c.stroke_width(2)))
            .map_err(|e| e.to_string())?
            .label(s.name.as_str())
            .legend(move |(x, y)| Rectangle::new([(x, y - 4), (x + 16, y + 4)], c.filled()));
        ctx.draw_series(s.points.iter().map(|p| Circle::new(*p, 3, c.filled())))
            .map_err(|e| e.to_string())?;
    }
    ctx.configure_series_labels()
        .background_style(WHITE.mix(0.85))
        .border_style(BLACK)
        .draw()
        .map_err(|e| e.to_string())?;
    root.present().map_err(|e| e.to_string())
}

/// Bars for net battery power against the left axis and the state of charge
/// as a line against the right axis, one pane per battery.
pub fn schedule_chart(path: &Path, title: &str, panes: &[SchedulePane]) -> PlotResult {
    let height = 120 + 300 * panes.len() as u32;
    let root = SVGBackend::new(path, (860, height)).into_drawing_area();
    root.fill(&WHITE).map_err(|e| e.to_string())?;
    let root = root.titled(title, ("sans-serif", 22)).map_err(|e| e.to_string())?;
    let areas = root.split_evenly((panes.len().max(1), 1));
    for (pane, area) in panes.iter().zip(&areas) {
        let hours = pane.net_power.len().max(1) as f64;
        let xr = 0.5..hours + 0.5;
        let pr = padded(pane.net_power.iter().map(|p| p.1).chain([0.0]));
        let sr = padded(pane.soc.iter().map(|p| p.1).chain([0.0]));
        let mut ctx = ChartBuilder::on(area)
            .caption(&pane.title, ("sans-serif", 18))
            .margin(12)
            .x_label_area_size(40)
            .y_label_area_size(72)
            .right_y_label_area_size(72)
            .build_cartesian_2d(xr.clone(), pr)
            .map_err(|e| e.to_string())?
            .set_secondary_coord(xr, sr);
        ctx.configure_mesh()
            .x_desc("hour")
            .y_desc("net charging power (MW)")
            .draw()
            .map_err(|e| e.to_string())?;
        ctx.configure_secondary_axes()
            .y_desc("state of charge (MWh)")
            .draw()
            .map_err(|e| e.to_string())?;
        let bar = color(0);
        ctx.draw_series(
            pane.net_power
                .iter()
                .map(|&(h, p)| Rectangle::new([(h - 0.35, 0.0), (h + 0.35, p)], bar.mix(0.75).filled())),
        )
        .map_err(|e| e.to_string())?
        .label("net power")
        .legend(move |(x, y)| Rectangle::new([(x, y - 4), (x + 16, y + 4)], bar.filled()));
        let line = color(1);
        ctx.draw_secondary_series(LineSeries::new(pane.soc.iter().copied(), line.stroke_width(2)))
            .map_err(|e| e.to_string())?
            .label("state of charge")
            .legend(move |(x, y)| Rectangle::new([(x, y - 1), (x + 16, y + 1)], line.filled()));
        ctx.configure_series_labels()
            .background_style(WHITE.mix(0.85))
            .border_style(BLACK)
            .draw()
            .map_err(|e| e.to_string())?;
    }
    root.present().map_err(|e| e.to_string())
}
