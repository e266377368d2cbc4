//! Deterministic CSV and SVG output.
//!
//! Every CSV starts with a one-line header naming units. Charts are
//! single-file SVGs with the plotted data embedded as an XML comment table,
//! so figures are diffable and byte-stable across runs.

use std::fmt::Write as _;

use crate::mask::HistoryRow;
use crate::sim::SimTrace;

/// One line of a sweep output file.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub sweep_value: f64,
    pub method: String,
    pub total_delay_s: f64,
    pub comm_overhead_bits: f64,
}

/// Formats a float deterministically (shortest roundtrip representation).
fn num(v: f64) -> String {
    if v.is_nan() {
        "nan".to_string()
    } else {
        format!("{v}")
    }
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("sweep_value,method,total_delay_s,comm_overhead_bits\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            num(r.sweep_value),
            r.method,
            num(r.total_delay_s),
            num(r.comm_overhead_bits)
        );
    }
    out
}

/// Trace export: one row per (batch, stage) with all timestamps in seconds.
pub fn trace_csv(trace: &SimTrace) -> String {
    let mut out = String::from("batch,stage,start_compute_s,end_compute_s,start_tx_s,end_tx_s\n");
    let mut rows = trace.rows.clone();
    rows.sort_by_key(|r| (r.batch, r.stage));
    for r in &rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.batch,
            r.stage,
            num(r.start_compute),
            num(r.end_compute),
            num(r.start_tx),
            num(r.end_tx)
        );
    }
    out
}

/// Mask-training history export.
pub fn history_csv(rows: &[HistoryRow]) -> String {
    let mut out = String::from("epoch,task_loss,sparsity_loss,keep_fraction,toy_acc\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.epoch,
            num(r.task_loss),
            num(r.sparsity_loss),
            num(r.keep_fraction),
            num(r.accuracy)
        );
    }
    out
}

/// Codec benchmark export: cumulative compression ratio per codec stage.
pub fn codec_bench_csv(stages: &[(&str, f64)]) -> String {
    let mut out = String::from("stage,compression_ratio_x\n");
    for (name, ratio) in stages {
        let _ = writeln!(out, "{},{}", name, num(*ratio));
    }
    out
}

const CHART_W: f64 = 640.0;
const CHART_H: f64 = 420.0;
const MARGIN: f64 = 60.0;

fn svg_header(title: &str) -> String {
    format!(
        "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<svg xmlns=\"http://www.w3.org/2000/svg\" \
         width=\"{CHART_W}\" height=\"{CHART_H}\" viewBox=\"0 0 {CHART_W} {CHART_H}\">\n\
         <rect width=\"{CHART_W}\" height=\"{CHART_H}\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" \
         font-size=\"16\">{}</text>\n",
        CHART_W / 2.0,
        xml_escape(title)
    )
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

const PALETTE: [&str; 6] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b",
];

/// Line chart of one or more (x, y) series, with the data table embedded as
/// an XML comment.
pub fn line_chart_svg(
    title: &str,
    x_label: &str,
    y_label: &str,
    series: &[(String, Vec<(f64, f64)>)],
) -> String {
    let mut svg = svg_header(title);
    let _ = writeln!(svg, "<!-- data: series,x,y");
    for (name, pts) in series {
        for (x, y) in pts {
            let _ = writeln!(svg, "{},{},{}", name, num(*x), num(*y));
        }
    }
    let _ = writeln!(svg, "-->");

    let all: Vec<(f64, f64)> = series.iter().flat_map(|(_, p)| p.iter().copied()).collect();
    if !all.is_empty() {
        let (mut x0, mut x1) = (f64::INFINITY, f64::NEG_INFINITY);
        let (mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY);
        for (x, y) in &all {
            x0 = x0.min(*x);
            x1 = x1.max(*x);
            y0 = y0.min(*y).min(0.0);
            y1 = y1.max(*y);
        }
        if x1 == x0 {
            x1 = x0 + 1.0;
        }
        if y1 == y0 {
            y1 = y0 + 1.0;
        }
        let px = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (CHART_W - 2.0 * MARGIN);
        let py = |y: f64| CHART_H - MARGIN - (y - y0) / (y1 - y0) * (CHART_H - 2.0 * MARGIN);
        // Axes.
        let _ = writeln!(
            svg,
            "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n\
             <line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>",
            num(MARGIN),
            num(CHART_H - MARGIN),
            num(CHART_W - MARGIN),
            num(CHART_H - MARGIN),
            num(MARGIN),
            num(MARGIN),
            num(MARGIN),
            num(CHART_H - MARGIN),
        );
        let _ = writeln!(
            svg,
            "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">{}</text>",
            num(CHART_W / 2.0),
            num(CHART_H - 16.0),
            xml_escape(x_label)
        );
        let _ = writeln!(
            svg,
            "<text x=\"16\" y=\"{}\" text-anchor=\"middle\" font-family=\"sans-serif\" \
             font-size=\"12\" transform=\"rotate(-90 16 {})\">{}</text>",
            num(CHART_H / 2.0),
            num(CHART_H / 2.0),
            xml_escape(y_label)
        );
        for (i, (name, pts)) in series.iter().enumerate() {
            let color = PALETTE[i % PALETTE.len()];
            let mut sorted = pts.clone();
            sorted.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
            let path: Vec<String> = sorted
                .iter()
                .map(|(x, y)| format!("{},{}", num(px(*x)), num(py(*y))))
                .collect();
            let _ = writeln!(
                svg,
                "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"2\" points=\"{}\"/>",
                path.join(" ")
            );
            for (x, y) in &sorted {
                let _ = writeln!(
                    svg,
                    "<circle cx=\"{}\" cy=\"{}\" r=\"3\" fill=\"{color}\"/>",
                    num(px(*x)),
                    num(py(*y))
                );
            }
            let _ = writeln!(
                svg,
                "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\" \
                 fill=\"{color}\">{}</text>",
                num(CHART_W - MARGIN + 6.0),
                num(MARGIN + 16.0 * i as f64),
                xml_escape(name)
            );
        }
    }
    svg.push_str("</svg>\n");
    svg
}

/// Bar chart with the data table embedded as an XML comment.
pub fn bar_chart_svg(title: &str, y_label: &str, bars: &[(String, f64)]) -> String {
    let mut svg = svg_header(title);
    let _ = writeln!(svg, "<!-- data: label,value");
    for (label, value) in bars {
        let _ = writeln!(svg, "{},{}", label, num(*value));
    }
    let _ = writeln!(svg, "-->");
    if !bars.is_empty() {
        let vmax = bars.iter().map(|b| b.1).fold(0.0f64, f64::max).max(1e-12);
        let span = CHART_W - 2.0 * MARGIN;
        let bw = span / bars.len() as f64 * 0.6;
        let gap = span / bars.len() as f64;
        let _ = writeln!(
            svg,
            "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>",
            num(MARGIN),
            num(CHART_H - MARGIN),
            num(CHART_W - MARGIN),
            num(CHART_H - MARGIN),
        );
        let _ = writeln!(
            svg,
            "<text x=\"16\" y=\"{}\" text-anchor=\"middle\" font-family=\"sans-serif\" \
             font-size=\"12\" transform=\"rotate(-90 16 {})\">{}</text>",
            num(CHART_H / 2.0),
            num(CHART_H / 2.0),
            xml_escape(y_label)
        );
        for (i, (label, value)) in bars.iter().enumerate() {
            let h = value / vmax * (CHART_H - 2.0 * MARGIN);
            let x = MARGIN + gap * i as f64 + (gap - bw) / 2.0;
            let y = CHART_H - MARGIN - h;
            let color = PALETTE[i % PALETTE.len()];
            let _ = writeln!(
                svg,
                "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"{color}\"/>",
                num(x),
                num(y),
                num(bw),
                num(h)
            );
            let _ = writeln!(
                svg,
                "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-family=\"sans-serif\" \
                 font-size=\"11\">{}</text>",
                num(x + bw / 2.0),
                num(CHART_H - MARGIN + 16.0),
                xml_escape(label)
            );
            let _ = writeln!(
                svg,
                "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-family=\"sans-serif\" \
                 font-size=\"11\">{}</text>",
                num(x + bw / 2.0),
                num(y - 6.0),
                num(*value)
            );
        }
    }
    svg.push_str("</svg>\n");
    svg
}

/// Gantt chart of a simulation trace: one lane per stage, compute bars above
/// transmit bars.
pub fn gantt_svg(trace: &SimTrace) -> String {
    let stages = trace.rows.iter().map(|r| r.stage).max().unwrap_or(0);
    let total = trace.total.max(1e-12);
    let lane_h = 44.0;
    let height = MARGIN + stages as f64 * lane_h + MARGIN;
    let mut svg = format!(
        "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<svg xmlns=\"http://www.w3.org/2000/svg\" \
         width=\"{CHART_W}\" height=\"{}\" viewBox=\"0 0 {CHART_W} {}\">\n\
         <rect width=\"{CHART_W}\" height=\"{}\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" \
         font-size=\"16\">Pipeline schedule</text>\n",
        num(height),
        num(height),
        num(height),
        num(CHART_W / 2.0),
    );
    let _ = writeln!(
        svg,
        "<!-- data: batch,stage,start_compute_s,end_compute_s,start_tx_s,end_tx_s"
    );
    let mut rows = trace.rows.clone();
    rows.sort_by_key(|r| (r.batch, r.stage));
    for r in &rows {
        let _ = writeln!(
            svg,
            "{},{},{},{},{},{}",
            r.batch,
            r.stage,
            num(r.start_compute),
            num(r.end_compute),
            num(r.start_tx),
            num(r.end_tx)
        );
    }
    let _ = writeln!(svg, "-->");
    let px = |t: f64| MARGIN + t / total * (CHART_W - 2.0 * MARGIN);
    for r in &rows {
        let lane_y = MARGIN + (r.stage - 1) as f64 * lane_h;
        let color = PALETTE[r.batch % PALETTE.len()];
        let _ = writeln!(
            svg,
            "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"14\" fill=\"{color}\"/>",
            num(px(r.start_compute)),
            num(lane_y),
            num((px(r.end_compute) - px(r.start_compute)).max(0.5)),
        );
        let _ = writeln!(
            svg,
            "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"14\" fill=\"{color}\" opacity=\"0.45\"/>",
            num(px(r.start_tx)),
            num(lane_y + 16.0),
            num((px(r.end_tx) - px(r.start_tx)).max(0.5)),
        );
    }
    for stage in 1..=stages {
        let _ = writeln!(
            svg,
            "<text x=\"8\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\">S{stage}</text>",
            num(MARGIN + (stage - 1) as f64 * lane_h + 14.0)
        );
    }
    svg.push_str("</svg>\n");
    svg
}
