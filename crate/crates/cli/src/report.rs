//! Text and tabular renderings of command results.

use std::fmt::Write;

use wavemark_core::analysis::sweep_csv;
use wavemark_core::wavelet::WipeResult;
use wavemark_core::{ChunkPlan, DistortionPoint, EmbedRecord, ModelContainer, TrialSummary, VerificationReport};

use crate::ReportFormat;

fn yes_no(b: bool) -> &'static str {
    if b {
        "yes"
    } else {
        "no"
    }
}

fn ber_text(ber: Option<f64>) -> String {
    ber.map(|b| format!("{:.2}%", b * 100.0)).unwrap_or_else(|| "-".into())
}

pub fn verification(report: &VerificationReport, format: ReportFormat) -> String {
    let mut out = String::new();
    match format {
        ReportFormat::Tabular => {
            out.push_str("layer,hash_match,digest_match,ber,passed\n");
            for l in &report.layers {
                let ber = l.ber.map(|b| format!("{b:.6}")).unwrap_or_default();
                let _ = writeln!(out, "{},{},{},{ber},{}", l.layer_name, l.hash_match, l.digest_match, l.passed());
            }
        }
        ReportFormat::Text => {
            let width = report.layers.iter().map(|l| l.layer_name.len()).max().unwrap_or(5).max(5);
            let _ = writeln!(out, "{:<width$}  hash  digest  BER", "layer");
            for l in &report.layers {
                let _ = writeln!(
                    out,
                    "{:<width$}  {:<4}  {:<6}  {}",
                    l.layer_name,
                    yes_no(l.hash_match),
                    yes_no(l.digest_match),
                    ber_text(l.ber)
                );
            }
            if report.overall_pass {
                let _ = writeln!(out, "all layers verified");
                if let Some(secret) = report.layers.first().and_then(|l| l.recovered_secret.as_ref()) {
                    let _ = writeln!(out, "secret: {}", String::from_utf8_lossy(secret));
                }
            } else {
                let failing: Vec<&str> = report.failing_layers().map(|l| l.layer_name.as_str()).collect();
                let _ = writeln!(out, "TAMPERED: {} of {} layer(s) failed: {}", failing.len(), report.layers.len(), failing.join(", "));
                if report.layers.iter().all(|l| l.hash_match) {
                    let _ = writeln!(out, "weights intact; class map or output layer changed");
                }
            }
        }
    }
    out
}

pub fn manifest(container: &ModelContainer, records: &[EmbedRecord], format: ReportFormat) -> String {
    let mut out = String::new();
    match format {
        ReportFormat::Tabular => {
            out.push_str("index,name,shape,dtype,role,scalars,marked,level,chunk_length,chunks,positions\n");
            for (i, l) in container.layers.iter().enumerate() {
                let shape: Vec<String> = l.shape.iter().map(usize::to_string).collect();
                let rec = records.iter().find(|r| r.layer_name == l.name);
                let _ = writeln!(
                    out,
                    "{i},{},{},{:?},{:?},{},{},{},{},{},{}",
                    l.name,
                    shape.join("x"),
                    l.dtype,
                    l.role,
                    l.len(),
                    rec.is_some(),
                    rec.map(|r| r.scaling.level.to_string()).unwrap_or_default(),
                    rec.map(|r| r.chunk_plan.chunk_length.to_string()).unwrap_or_default(),
                    rec.map(|r| r.chunk_plan.chunk_count.to_string()).unwrap_or_default(),
                    rec.map(|r| r.schedule_length.to_string()).unwrap_or_default(),
                );
            }
        }
        ReportFormat::Text => {
            let _ = writeln!(out, "format version {}", container.format_version);
            let _ = writeln!(out, "{} layer(s):", container.layers.len());
            for (i, l) in container.layers.iter().enumerate() {
                let shape: Vec<String> = l.shape.iter().map(usize::to_string).collect();
                let _ = writeln!(out, "  [{i}] {} {} {:?} {:?} ({} scalars)", l.name, shape.join("x"), l.dtype, l.role, l.len());
            }
            if container.class_map.is_empty() {
                let _ = writeln!(out, "class map: (empty)");
            } else {
                let _ = writeln!(out, "class map ({}): {}", container.class_map.len(), container.class_map.join(", "));
            }
            if records.is_empty() {
                let _ = writeln!(out, "not marked");
            }
            for r in records {
                let _ = writeln!(
                    out,
                    "marked {} (index {}): level {}, delta {}, rho {}, chunk {} x {} (tail pad {}), {} positions, digest {}",
                    r.layer_name,
                    r.layer_index,
                    r.scaling.level,
                    r.scaling.delta,
                    r.scaling.rho,
                    r.chunk_plan.chunk_length,
                    r.chunk_plan.chunk_count,
                    r.chunk_plan.padded_tail,
                    r.schedule_length,
                    r.model_digest
                );
            }
            let other: Vec<&String> = container.metadata.keys().filter(|k| !k.starts_with("wavemark.embed.")).collect();
            for k in other {
                let _ = writeln!(out, "metadata {k} = {}", container.metadata[k]);
            }
        }
    }
    out
}

pub fn sweep(label: &str, points: &[DistortionPoint], format: ReportFormat) -> String {
    if format == ReportFormat::Tabular {
        return sweep_csv(points);
    }
    let mut out = format!("distortion sweep over {label}\n");
    out.push_str("level  chunk   max|dw|     max rel    mean|dw|\n");
    for p in points {
        let rel = p.max_rel_distortion.map(|r| format!("{:.4}%", r * 100.0)).unwrap_or_else(|| "-".into());
        let _ = writeln!(
            out,
            "{:<5}  {:<6}  {:<10.3e}  {:<9}  {:.3e}",
            p.watermark_level, p.chunk_length, p.max_abs_distortion, rel, p.mean_abs_distortion
        );
    }
    out
}

pub fn trials(label: &str, s: &TrialSummary) -> String {
    let mut out = format!("{label}: detected {}/{} ({:.1}%)\n", s.detected, s.trials, s.detection_rate * 100.0);
    if let Some((lo, hi)) = s.ber_range {
        let _ = writeln!(out, "BER range {:.2}% .. {:.2}%", lo * 100.0, hi * 100.0);
    }
    out
}

pub fn wipe(label: &str, plan: &ChunkPlan, results: &[WipeResult], rms_weight: f64, format: ReportFormat) -> String {
    let mut out = String::new();
    match format {
        ReportFormat::Tabular => {
            out.push_str("chunk,max_abs_error,rms_error\n");
            for (i, r) in results.iter().enumerate() {
                let _ = writeln!(out, "{i},{:.6e},{:.6e}", r.max_abs_error, r.rms_error);
            }
        }
        ReportFormat::Text => {
            let max = results.iter().map(|r| r.max_abs_error).fold(0.0, f64::max);
            let rms = (results.iter().map(|r| r.rms_error * r.rms_error).sum::<f64>() / results.len() as f64).sqrt();
            let _ = writeln!(out, "detail sub-bands 17-32 wiped on {label}");
            let _ = writeln!(out, "{} chunk(s) of {}", plan.chunk_count, plan.chunk_length);
            let _ = writeln!(out, "max abs error {max:.4e}, rms error {rms:.4e}");
            if rms_weight > 0.0 {
                let _ = writeln!(out, "rms error / rms weight {:.4}", rms / rms_weight);
            }
        }
    }
    out
}
