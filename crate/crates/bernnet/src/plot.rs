//! Minimal self-contained SVG line charts for the experiment CSVs. Data is
//! the contract; these renders are a convenience behind `--plot`.

use crate::error::Result;
use std::io::Write;
use std::path::Path;

const COLORS: &[&str] = &[
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

/// Render one chart; `log_y` plots log10 of positive y values (zeros are
/// clipped to the smallest positive point).
pub fn line_chart_svg(
    title: &str,
    x_label: &str,
    y_label: &str,
    series: &[Series],
    log_y: bool,
    path: &Path,
) -> Result<()> {
    let (w, h) = (760.0, 480.0);
    let (ml, mr, mt, mb) = (70.0, 150.0, 40.0, 50.0);
    let transform = |v: f64, floor: f64| if log_y { v.max(floor).log10() } else { v };

    let mut pos_floor = f64::INFINITY;
    for s in series {
        for &(_, y) in &s.points {
            if y > 0.0 {
                pos_floor = pos_floor.min(y);
            }
        }
    }
    if !pos_floor.is_finite() {
        pos_floor = 1e-12;
    }

    let mut xmin = f64::INFINITY;
    let mut xmax = f64::NEG_INFINITY;
    let mut ymin = f64::INFINITY;
    let mut ymax = f64::NEG_INFINITY;
    for s in series {
        for &(x, y) in &s.points {
            xmin = xmin.min(x);
            xmax = xmax.max(x);
            let t = transform(y, pos_floor);
            ymin = ymin.min(t);
            ymax = ymax.max(t);
        }
    }
    if xmin >= xmax {
        xmax = xmin + 1.0;
    }
    if ymin >= ymax {
        ymax = ymin + 1.0;
    }
    let sx = |x: f64| ml + (x - xmin) / (xmax - xmin) * (w - ml - mr);
    let sy = |y: f64| h - mb - (transform(y, pos_floor) - ymin) / (ymax - ymin) * (h - mt - mb);

    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(
        f,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="12">"#
    )?;
    writeln!(f, r#"<rect width="{w}" height="{h}" fill="white"/>"#)?;
    writeln!(
        f,
        r#"<text x="{}" y="20" text-anchor="middle" font-size="15">{}</text>"#,
        w / 2.0,
        title
    )?;
    // axes
    writeln!(
        f,
        r#"<line x1="{ml}" y1="{mt}" x2="{ml}" y2="{}" stroke="black"/>"#,
        h - mb
    )?;
    writeln!(
        f,
        r#"<line x1="{ml}" y1="{}" x2="{}" y2="{}" stroke="black"/>"#,
        h - mb,
        w - mr,
        h - mb
    )?;
    writeln!(
        f,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        (ml + w - mr) / 2.0,
        h - 12.0,
        x_label
    )?;
    writeln!(
        f,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}{}</text>"#,
        (mt + h - mb) / 2.0,
        (mt + h - mb) / 2.0,
        if log_y { "log10 " } else { "" },
        y_label
    )?;
    // y ticks
    for i in 0..=4 {
        let ty = ymin + (ymax - ymin) * i as f64 / 4.0;
        let y = h - mb - (ty - ymin) / (ymax - ymin) * (h - mt - mb);
        writeln!(
            f,
            r#"<text x="{}" y="{}" text-anchor="end" font-size="10">{:.3}</text>"#,
            ml - 6.0,
            y + 3.0,
            ty
        )?;
        writeln!(
            f,
            r#"<line x1="{ml}" y1="{y}" x2="{}" y2="{y}" stroke="#dddddd"/>"#,
            w - mr
        )?;
    }
    // x ticks
    for i in 0..=4 {
        let tx = xmin + (xmax - xmin) * i as f64 / 4.0;
        writeln!(
            f,
            r#"<text x="{}" y="{}" text-anchor="middle" font-size="10">{:.1}</text>"#,
            sx(tx),
            h - mb + 16.0,
            tx
        )?;
    }
    for (i, s) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let pts: Vec<String> = s
            .points
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        writeln!(
            f,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
            pts.join(" ")
        )?;
        writeln!(
            f,
            r#"<text x="{}" y="{}" fill="{color}" font-size="11">{}</text>"#,
            w - mr + 8.0,
            mt + 14.0 * i as f64 + 10.0,
            s.name
        )?;
    }
    writeln!(f, "</svg>")?;
    Ok(())
}
