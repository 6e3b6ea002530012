//! Attention overlay: the preprocessed reference lead on top, weight curves
//! below, sharing one time axis.

use std::fmt::Write as _;
use std::path::Path;

use danet::attention::{manual_weights, AttentionWeights};
use danet::models::load_checkpoint;
use danet::pipeline::{delineate_record, REFERENCE_LEAD};
use danet::signal::preprocess;
use log::info;

use crate::args::PlotArgs;
use crate::commands::{io_failure, prepare_config, read_record, read_weights};
use crate::{CliResult, Failure};

const WIDTH: f64 = 1200.0;
const PANEL: f64 = 220.0;
const MARGIN: f64 = 40.0;

/// One curve and its colour.
pub struct Trace<'a> {
    pub name: &'a str,
    pub values: &'a [f64],
    pub color: &'a str,
}

fn polyline(out: &mut String, trace: &Trace, top: f64, lo: f64, hi: f64) {
    let n = trace.values.len();
    let span = if hi > lo { hi - lo } else { 1.0 };
    let dx = (WIDTH - 2.0 * MARGIN) / (n.max(2) - 1) as f64;
    let _ = write!(out, r#"<polyline fill="none" stroke="{}" stroke-width="1" points=""#, trace.color);
    for (k, v) in trace.values.iter().enumerate() {
        let x = MARGIN + k as f64 * dx;
        let y = top + PANEL - (v - lo) / span * PANEL;
        if k > 0 {
            out.push(' ');
        }
        let _ = write!(out, "{x:.2},{y:.2}");
    }
    out.push_str("\"/>\n");
}

fn frame(out: &mut String, top: f64, label: &str) {
    let _ = writeln!(
        out,
        r##"<rect x="{MARGIN}" y="{top}" width="{}" height="{PANEL}" fill="none" stroke="#999"/>"##,
        WIDTH - 2.0 * MARGIN
    );
    let _ = writeln!(out, r#"<text x="{MARGIN}" y="{}" font-size="12">{label}</text>"#, top - 6.0);
}

/// Two-panel SVG: `signal` above, `weights` (plotted on [0, 1]) below.
pub fn render_svg(signal: &Trace, weights: &[Trace], duration_s: f64) -> String {
    let height = 2.0 * PANEL + 3.0 * MARGIN;
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" viewBox="0 0 {WIDTH} {height}">"#
    );
    let (lo, hi) = signal
        .values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    frame(&mut out, MARGIN, &format!("{} (mV)", signal.name));
    polyline(&mut out, signal, MARGIN, lo, hi);

    let bottom = 2.0 * MARGIN + PANEL;
    let names: Vec<&str> = weights.iter().map(|t| t.name).collect();
    frame(&mut out, bottom, &format!("attention weights: {}", names.join(", ")));
    for t in weights {
        polyline(&mut out, t, bottom, 0.0, 1.0);
    }
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" font-size="12" text-anchor="end">{duration_s:.1} s</text>"#,
        WIDTH - MARGIN,
        height - MARGIN / 2.0
    );
    out.push_str("</svg>\n");
    out
}

/// `t,signal,w1,w2` with one row per frame; absent curves leave empty cells.
pub fn render_csv(fs: f64, signal: &[f64], w1: Option<&[f64]>, w2: Option<&[f64]>) -> String {
    let mut out = String::from("t,signal,w1,w2\n");
    let cell = |w: Option<&[f64]>, k: usize| w.map(|w| w[k].to_string()).unwrap_or_default();
    for (k, v) in signal.iter().enumerate() {
        let _ = writeln!(out, "{},{v},{},{}", k as f64 / fs, cell(w1, k), cell(w2, k));
    }
    out
}

pub fn cmd_plot(a: PlotArgs) -> CliResult {
    if a.weights.is_none() && a.checkpoint.is_none() {
        return Err(Failure::Usage("plot needs --weights, --checkpoint or both".into()));
    }
    let cfg = prepare_config(&a.prep)?;
    let rec = preprocess(&read_record(&a.input)?, &cfg.preprocess)?;
    let lead = rec.lead_index(REFERENCE_LEAD).unwrap_or(0);
    let signal = rec.lead(lead);

    let mut w1: Option<AttentionWeights> = match &a.weights {
        Some(p) => Some(read_weights(p, rec.frames())?),
        None => None,
    };
    let w2 = match &a.checkpoint {
        Some(p) => {
            let model = load_checkpoint(p)?.into_danet()?;
            if w1.is_none() {
                let fid = delineate_record(&rec, &cfg.delineator)?;
                w1 = Some(manual_weights(&fid, &cfg.rule, rec.frames())?);
            }
            Some(model.enhance(&rec)?)
        }
        None => None,
    };

    let mut traces = Vec::new();
    if let Some(w) = &w1 {
        traces.push(Trace {
            name: "w1",
            values: w.as_slice(),
            color: "#d62728",
        });
    }
    if let Some(w) = &w2 {
        traces.push(Trace {
            name: "w2",
            values: w.as_slice(),
            color: "#2ca02c",
        });
    }
    let lead_name = rec.leads()[lead].clone();
    let sig = Trace {
        name: &lead_name,
        values: signal,
        color: "#1f77b4",
    };
    let svg = render_svg(&sig, &traces, rec.frames() as f64 / rec.fs());
    write_file(&a.out, &svg)?;

    let csv_path = a.csv.unwrap_or_else(|| a.out.with_extension("csv"));
    let csv = render_csv(
        rec.fs(),
        signal,
        w1.as_ref().map(AttentionWeights::as_slice),
        w2.as_ref().map(AttentionWeights::as_slice),
    );
    write_file(&csv_path, &csv)?;
    info!("wrote {} and {}", a.out.display(), csv_path.display());
    Ok(())
}

fn write_file(path: &Path, body: &str) -> CliResult {
    std::fs::write(path, body).map_err(|e| io_failure(path, e))
}
