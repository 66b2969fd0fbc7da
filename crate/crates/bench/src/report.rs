use std::fmt::Write;

use jagged_core::costmodel::CostReport;

use crate::config::OutputFormat;
use crate::record::{format_checksum, BenchRecord};
use crate::{BenchError, Result};

pub const CSV_HEADER: &str = "op,variant,B,D,T,max_len,dist,seed,precision,threads,time_us_p50,time_us_p10,time_us_p90,flops,bytes,speedup_vs_dense,bytes_ratio_vs_dense";

const COST_HEADER: &str = "op,max_len,flops_jagged,flops_padded,bytes_jagged,bytes_padded,ratio_flops,ratio_bytes";

pub fn render_report(records: &[BenchRecord], format: OutputFormat) -> Result<String> {
    if records.is_empty() {
        return Err(BenchError::Config("no records to render".into()));
    }
    Ok(match format {
        OutputFormat::Csv => csv(records),
        OutputFormat::Json => serde_json::to_string_pretty(records)? + "\n",
        OutputFormat::Md => markdown(records),
    })
}

pub fn parse_json(text: &str) -> Result<Vec<BenchRecord>> {
    Ok(serde_json::from_str(text)?)
}

fn csv(records: &[BenchRecord]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in records {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{:.3},{:.3},{:.3},{},{},{:.4},{:.4}",
            r.op,
            r.variant,
            r.batch,
            r.dim,
            r.t,
            r.max_len,
            r.dist,
            r.seed,
            r.precision,
            r.threads,
            r.time_us_p50,
            r.time_us_p10,
            r.time_us_p90,
            r.flops,
            r.bytes,
            r.speedup_vs_dense,
            r.bytes_ratio_vs_dense
        )
        .expect("write to string");
    }
    out
}

fn annotate(value: String, ratio: f64, baseline: bool) -> String {
    if baseline {
        value
    } else {
        format!("{value} ({ratio:.2}×)")
    }
}

fn markdown(records: &[BenchRecord]) -> String {
    let mut out = String::new();
    out.push_str("| Operator | Variant | max_L | Memory (MB) | FLOPs (M) | Latency (us) | Checksum |\n");
    out.push_str("|---|---|---|---|---|---|---|\n");
    let mut prev_group = None;
    for r in records {
        let baseline = r.variant == "padded" || r.variant == "dense";
        let group = (r.max_len, baseline);
        let name = if baseline || prev_group.map(|(l, _)| l) != Some(r.max_len) {
            r.op.to_string()
        } else {
            String::new()
        };
        prev_group = Some(group);
        let noisy = if r.noisy { " ~" } else { "" };
        writeln!(
            out,
            "| {name} | {} | {} | {} | {} | {} | {} |",
            if baseline { format!("*{}*", r.variant) } else { format!("**{}**", r.variant) },
            r.max_len,
            annotate(format!("{:.2}", r.bytes as f64 / 1e6), r.bytes_ratio_vs_dense, baseline),
            annotate(format!("{:.2}", r.flops as f64 / 1e6), r.flops_ratio_vs_dense, baseline),
            annotate(format!("{:.1}{noisy}", r.time_us_p50), r.speedup_vs_dense, baseline),
            format_checksum(r.checksum),
        )
        .expect("write to string");
    }
    if records.iter().any(|r| r.noisy) {
        out.push_str("\n~ p90/p10 spread above 3; timing is noisy.\n");
    }
    out
}

pub fn render_cost(reports: &[CostReport], format: OutputFormat) -> Result<String> {
    Ok(match format {
        OutputFormat::Json => serde_json::to_string_pretty(reports)? + "\n",
        OutputFormat::Csv => {
            let mut out = String::from(COST_HEADER);
            out.push('\n');
            for r in reports {
                writeln!(
                    out,
                    "{},{},{},{},{},{},{:.6},{:.6}",
                    r.op, r.max_len, r.flops_jagged, r.flops_padded, r.bytes_jagged, r.bytes_padded, r.ratio_flops, r.ratio_bytes
                )
                .expect("write to string");
            }
            out
        }
        OutputFormat::Md => {
            let mut out = String::from("| Operator | max_L | Memory (MB) padded | Memory (MB) jagged | FLOPs (M) padded | FLOPs (M) jagged |\n|---|---|---|---|---|---|\n");
            for r in reports {
                writeln!(
                    out,
                    "| {} | {} | {:.2} | {:.2} ({:.2}×) | {:.2} | {:.2} ({:.2}×) |",
                    r.op,
                    r.max_len,
                    r.bytes_padded as f64 / 1e6,
                    r.bytes_jagged as f64 / 1e6,
                    r.ratio_bytes,
                    r.flops_padded as f64 / 1e6,
                    r.flops_jagged as f64 / 1e6,
                    r.ratio_flops
                )
                .expect("write to string");
            }
            out
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Precision;
    use jagged_core::{LengthKind, OpId};

    fn record(variant: &str, ratio: f64) -> BenchRecord {
        BenchRecord {
            op: OpId::JaggedDenseBmm,
            variant: variant.into(),
            batch: 2,
            dim: 3,
            t: 4,
            max_len: 5,
            dist: LengthKind::HalfMean,
            seed: 1,
            precision: Precision::F32,
            threads: 1,
            iters: 1,
            warmup: 0,
            block_q: 64,
            block_k: 64,
            time_us_p50: 1.5,
            time_us_p10: 1.0,
            time_us_p90: 2.0,
            flops: 100,
            bytes: 40,
            speedup_vs_dense: ratio,
            bytes_ratio_vs_dense: ratio,
            flops_ratio_vs_dense: ratio,
            checksum: 0.1,
            noisy: false,
        }
    }

    #[test]
    fn csv_has_header_and_one_row() {
        let text = render_report(&[record("jagged", 1.0)], OutputFormat::Csv).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0], CSV_HEADER);
        assert_eq!(lines[1].split(',').count(), CSV_HEADER.split(',').count());
    }

    #[test]
    fn markdown_annotates_ratios() {
        let text = render_report(&[record("padded", 1.0), record("jagged", 2.834)], OutputFormat::Md).unwrap();
        assert!(text.contains("(2.83×)"));
        assert!(!text.contains("(1.00×)"));
    }

    #[test]
    fn json_round_trips() {
        let mut r = record("jagged", 1.0 / 3.0);
        r.checksum = 0.1 + 0.2;
        let text = render_report(std::slice::from_ref(&r), OutputFormat::Json).unwrap();
        assert_eq!(parse_json(&text).unwrap(), vec![r]);
    }

    #[test]
    fn empty_input_is_rejected() {
        assert!(render_report(&[], OutputFormat::Csv).is_err());
    }
}
