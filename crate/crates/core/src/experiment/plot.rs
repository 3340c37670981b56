use std::path::Path;

use plotters::prelude::*;

use super::results::{AggregateRow, Metric};
use super::ExperimentError;

const PALETTE: [RGBColor; 10] = [
    RGBColor(31, 119, 180),
    RGBColor(255, 127, 14),
    RGBColor(44, 160, 44),
    RGBColor(214, 39, 40),
    RGBColor(148, 103, 189),
    RGBColor(140, 86, 75),
    RGBColor(227, 119, 194),
    RGBColor(127, 127, 127),
    RGBColor(188, 189, 34),
    RGBColor(23, 190, 207),
];

/// A heuristic's `(k, mean, std)` points.
pub type Series = (String, Vec<(usize, f64, f64)>);

/// One series per heuristic, in aggregate order.
pub fn series(rows: &[AggregateRow], metric: Metric) -> Vec<Series> {
    let mut out: Vec<Series> = Vec::new();
    for row in rows {
        let stat = row.get(metric);
        let point = (row.k, stat.mean, stat.std);
        match out.iter_mut().find(|(h, _)| *h == row.heuristic) {
            Some((_, points)) => points.push(point),
            None => out.push((row.heuristic.clone(), vec![point])),
        }
    }
    for (_, points) in &mut out {
        points.sort_by_key(|p| p.0);
    }
    out
}

/// Renders the mean of `metric` against k as an SVG line chart, one line per
/// heuristic with a shaded band of one standard deviation.
pub fn emit_plot(rows: &[AggregateRow], metric: Metric, path: &Path) -> Result<(), ExperimentError> {
    let plot_err = |e: &dyn std::fmt::Display| ExperimentError::Plot {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    let lines = series(rows, metric);
    let k_min = rows.iter().map(|r| r.k).min().unwrap_or(0) as f64;
    let k_max = rows.iter().map(|r| r.k).max().unwrap_or(1) as f64;
    let x_range = if k_max > k_min { k_min..k_max } else { (k_min - 0.5)..(k_max + 0.5) };

    let root = SVGBackend::new(path, (800, 500)).into_drawing_area();
    root.fill(&WHITE).map_err(|e| plot_err(&e))?;
    let mut chart = ChartBuilder::on(&root)
        .caption(format!("Mean {} vs. retrieved sentences", metric.as_str()), ("sans-serif", 22))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(50)
        .build_cartesian_2d(x_range, 0f64..1f64)
        .map_err(|e| plot_err(&e))?;
    chart
        .configure_mesh()
        .x_desc("k")
        .y_desc(metric.as_str())
        .draw()
        .map_err(|e| plot_err(&e))?;

    for (i, (name, points)) in lines.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let mut band: Vec<(f64, f64)> = points.iter().map(|&(k, m, s)| (k as f64, (m + s).min(1.0))).collect();
        band.extend(points.iter().rev().map(|&(k, m, s)| (k as f64, (m - s).max(0.0))));
        chart
            .draw_series(std::iter::once(Polygon::new(band, color.mix(0.15).filled())))
            .map_err(|e| plot_err(&e))?;
        chart
            .draw_series(LineSeries::new(
                points.iter().map(|&(k, m, _)| (k as f64, m)),
                color.stroke_width(2),
            ))
            .map_err(|e| plot_err(&e))?
            .label(name.as_str())
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 18, y)], color.stroke_width(2)));
        chart
            .draw_series(points.iter().map(|&(k, m, _)| Circle::new((k as f64, m), 3, color.filled())))
            .map_err(|e| plot_err(&e))?;
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .position(SeriesLabelPosition::LowerRight)
        .draw()
        .map_err(|e| plot_err(&e))?;
    root.present().map_err(|e| plot_err(&e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn agg(h: &str, k: usize, f1: f64) -> AggregateRow {
        AggregateRow {
            heuristic: h.into(),
            k,
            n: 2,
            precision_mean: f1,
            precision_std: 0.05,
            recall_mean: f1,
            recall_std: 0.05,
            f1_mean: f1,
            f1_std: 0.05,
        }
    }

    #[test]
    fn two_heuristics_three_points_each() {
        let rows: Vec<AggregateRow> = ["bm25", "before"]
            .iter()
            .flat_map(|h| [1, 2, 4].map(|k| agg(h, k, 0.5 + k as f64 / 20.0)))
            .collect();
        let s = series(&rows, Metric::F1);
        assert_eq!(s.len(), 2);
        assert!(s.iter().all(|(_, p)| p.len() == 3));

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f1.svg");
        emit_plot(&rows, Metric::F1, &path).unwrap();
        let svg = std::fs::read_to_string(&path).unwrap();
        assert!(svg.starts_with("<svg"));
        assert!(svg.contains("bm25") && svg.contains("before"));
        assert_eq!(svg.matches("<circle").count(), 6);
        assert_eq!(svg.matches("<polygon").count(), 2);
    }

    #[test]
    fn single_k_and_empty_input_still_render() {
        let dir = tempfile::tempdir().unwrap();
        emit_plot(&[agg("none", 1, 0.4)], Metric::Recall, &dir.path().join("a.svg")).unwrap();
        emit_plot(&[], Metric::Precision, &dir.path().join("b.svg")).unwrap();
    }

    #[test]
    fn unwritable_path_is_an_error() {
        let err = emit_plot(&[agg("none", 1, 0.4)], Metric::F1, Path::new("/nonexistent/dir/f1.svg"));
        assert!(err.is_err());
    }
}
