//! Chart series for distribution reports, and a static SVG rendering.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{DistributionReport, DistributionSlice};
use crate::model::AttributeId;

const PALETTE: [&str; 10] = [
    "#4e79a7", "#f28e2b", "#e15759", "#76b7b2", "#59a14f", "#edc948", "#b07aa1", "#ff9da7", "#9c755f", "#bab0ac",
];

/// Colour for `label`, fixed by its position in the attribute alphabet so
/// every dataset uses the same key. Literal colour names use themselves.
fn color_for(attribute: AttributeId, label: &str, index: usize) -> String {
    let literal = match (attribute, label) {
        (AttributeId::Colour, "black") => Some("#222222"),
        (AttributeId::Colour, "white") => Some("#f4f4f4"),
        (AttributeId::Colour, "grey") => Some("#9a9a9a"),
        (AttributeId::Colour, "blue") => Some("#2f6fdf"),
        (AttributeId::Colour, "red") => Some("#d62d20"),
        (AttributeId::Colour, "yellow") => Some("#f5c518"),
        (AttributeId::Colour, "green") => Some("#3a9d42"),
        (AttributeId::Skin, "light") => Some("#f1c27d"),
        (AttributeId::Skin, "dark") => Some("#8d5524"),
        (_, "unknown") => Some("#cccccc"),
        _ => None,
    };
    literal.unwrap_or(PALETTE[index % PALETTE.len()]).to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub label: String,
    pub color: String,
    pub count: u64,
    pub percent: f64,
    pub underrepresented: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bar {
    pub dataset_id: String,
    pub total: u64,
    pub segments: Vec<Segment>,
}

/// One stacked bar per dataset for a single attribute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackedBars {
    pub attribute: AttributeId,
    pub labels: Vec<String>,
    pub colors: Vec<String>,
    pub bars: Vec<Bar>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PieSeries {
    pub dataset_id: String,
    pub attribute: AttributeId,
    pub segments: Vec<Segment>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChartData {
    pub stacked: Vec<StackedBars>,
    pub pies: Vec<PieSeries>,
}

fn segments(slice: &DistributionSlice) -> Vec<Segment> {
    slice
        .labels
        .iter()
        .enumerate()
        .map(|(i, l)| Segment {
            label: l.label.clone(),
            color: color_for(slice.attribute, &l.label, i),
            count: l.count,
            percent: l.percent,
            underrepresented: l.underrepresented,
        })
        .collect()
}

pub fn chart_data(report: &DistributionReport) -> ChartData {
    let mut stacked: Vec<StackedBars> = Vec::new();
    let mut pies = Vec::new();
    for slice in &report.slices {
        let segs = segments(slice);
        pies.push(PieSeries {
            dataset_id: slice.dataset_id.clone(),
            attribute: slice.attribute,
            segments: segs.clone(),
        });
        let bar = Bar {
            dataset_id: slice.dataset_id.clone(),
            total: slice.total,
            segments: segs,
        };
        match stacked.iter_mut().find(|s| s.attribute == slice.attribute) {
            Some(s) => s.bars.push(bar),
            None => {
                let labels = slice.attribute.alphabet(false);
                let colors = labels.iter().enumerate().map(|(i, l)| color_for(slice.attribute, l, i)).collect();
                stacked.push(StackedBars {
                    attribute: slice.attribute,
                    labels,
                    colors,
                    bars: vec![bar],
                });
            }
        }
    }
    stacked.sort_by_key(|s| s.attribute);
    ChartData { stacked, pies }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Horizontal 100% stacked bars, one row per dataset, with a legend.
pub fn render_svg(chart: &StackedBars) -> String {
    const LEFT: f64 = 140.0;
    const WIDTH: f64 = 480.0;
    const ROW: f64 = 28.0;
    const TOP: f64 = 30.0;
    let rows = chart.bars.len() as f64;
    let legend_y = TOP + rows * ROW + 16.0;
    let height = legend_y + 20.0 * chart.labels.len().div_ceil(4) as f64 + 10.0;
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{:.0}" height="{height:.0}" viewBox="0 0 {:.0} {height:.0}" data-attribute="{}">"#,
        LEFT + WIDTH + 20.0,
        LEFT + WIDTH + 20.0,
        chart.attribute
    );
    let _ = writeln!(
        out,
        r#"<text x="10" y="18" font-family="sans-serif" font-size="14">{}</text>"#,
        escape(chart.attribute.as_str())
    );
    for (r, bar) in chart.bars.iter().enumerate() {
        let y = TOP + r as f64 * ROW;
        let _ = writeln!(
            out,
            r#"<text x="10" y="{:.1}" font-family="sans-serif" font-size="12">{}</text>"#,
            y + 15.0,
            escape(&bar.dataset_id)
        );
        let mut x = LEFT;
        for s in &bar.segments {
            let w = WIDTH * s.percent / 100.0;
            let _ = writeln!(
                out,
                r#"<rect x="{x:.2}" y="{y:.1}" width="{w:.2}" height="20" fill="{}" data-dataset="{}" data-label="{}" data-count="{}" data-percent="{:.2}" data-underrepresented="{}"><title>{} {:.2}%</title></rect>"#,
                s.color,
                escape(&bar.dataset_id),
                escape(&s.label),
                s.count,
                s.percent,
                s.underrepresented,
                escape(&s.label),
                s.percent
            );
            x += w;
        }
    }
    for (i, (label, color)) in chart.labels.iter().zip(&chart.colors).enumerate() {
        let x = LEFT + (i % 4) as f64 * 120.0;
        let y = legend_y + (i / 4) as f64 * 20.0;
        let _ = writeln!(out, r#"<rect x="{x:.0}" y="{y:.0}" width="12" height="12" fill="{color}"/>"#);
        let _ = writeln!(
            out,
            r#"<text x="{:.0}" y="{:.0}" font-family="sans-serif" font-size="11">{}</text>"#,
            x + 16.0,
            y + 10.0,
            escape(label)
        );
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bias::LabelShare;

    fn slice(dataset: &str, attribute: AttributeId, counts: &[u64]) -> DistributionSlice {
        let total: u64 = counts.iter().sum();
        DistributionSlice {
            dataset_id: dataset.into(),
            attribute,
            total,
            labels: attribute
                .alphabet(false)
                .into_iter()
                .zip(counts)
                .map(|(label, &count)| {
                    let percent = count as f64 / total as f64 * 100.0;
                    LabelShare {
                        label,
                        count,
                        percent,
                        display: format!("{percent:.2}"),
                        underrepresented: percent < 1.0,
                    }
                })
                .collect(),
        }
    }

    #[test]
    fn two_datasets_three_labels() {
        let report = DistributionReport {
            threshold_percent: 1.0,
            slices: vec![slice("a", AttributeId::Age, &[80, 15, 5]), slice("b", AttributeId::Age, &[995, 4, 1])],
        };
        let c = chart_data(&report);
        assert_eq!(c.stacked.len(), 1);
        let bars = &c.stacked[0].bars;
        assert_eq!(bars.len(), 2);
        for b in bars {
            assert_eq!(b.segments.len(), 3);
            let sum: f64 = b.segments.iter().map(|s| s.percent).sum();
            assert!((sum - 100.0).abs() < 1e-9);
        }
        assert_eq!(bars[0].segments[1].color, bars[1].segments[1].color);
        let svg = render_svg(&c.stacked[0]);
        assert_eq!(svg.matches(r#"data-underrepresented="true""#).count(), 2);
        assert_eq!(c.pies.len(), 2);
    }

    #[test]
    fn group_is_binary() {
        let report = DistributionReport {
            threshold_percent: 1.0,
            slices: vec![slice("a", AttributeId::Group, &[30, 70])],
        };
        let c = chart_data(&report);
        assert_eq!(c.stacked[0].labels, ["group", "no_group"]);
        assert_eq!(c.stacked[0].bars[0].segments.len(), 2);
    }
}
