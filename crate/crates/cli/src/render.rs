//! Report rendering: the human table mirrors the headline-metric row order
//! (rejection rate, availability, max queue size, mean time in queue with
//! success/fail splits, throughput, recovery time), to four significant
//! figures.

use stagesim::metrics::SummaryReport;

#[derive(Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Human,
    Csv,
    Json,
}

/// Formats a value to four significant figures.
fn sig4(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    let magnitude = v.abs().log10().floor() as i32;
    let decimals = (3 - magnitude).max(0) as usize;
    let s = format!("{v:.decimals$}");
    // Trim a trailing ".000"-style tail on large integers.
    if decimals == 0 {
        s
    } else {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

fn percent(v: f64) -> String {
    format!("{}%", sig4(v * 100.0))
}

const METRIC_ROWS: [&str; 8] = [
    "Event rejection rate",
    "Availability",
    "Max queue size",
    "Mean time in queue",
    "  Success events",
    "  Failed events",
    "Throughput",
    "Recovery time",
];

fn metric_cells(report: &SummaryReport) -> [String; 8] {
    let wait = |v: f64| {
        if report.queue_wait_observed {
            sig4(v)
        } else {
            "0 (no samples)".to_string()
        }
    };
    [
        percent(report.rejection_rate),
        percent(report.availability),
        report.max_queue_size.to_string(),
        wait(report.mean_queue_wait),
        wait(report.mean_queue_wait_success),
        wait(report.mean_queue_wait_fail),
        sig4(report.throughput),
        report.recovery_time.to_string(),
    ]
}

const CSV_HEADER: &str = "model,injected,rejected,succeeded,failed,rejection_rate,availability,\
fail_rate,max_queue_size,mean_queue_wait,mean_queue_wait_success,mean_queue_wait_fail,\
throughput,recovery_time";

fn csv_row(label: &str, r: &SummaryReport) -> String {
    format!(
        "{label},{},{},{},{},{},{},{},{},{},{},{},{},{}",
        r.injected,
        r.rejected,
        r.succeeded,
        r.failed,
        r.rejection_rate,
        r.availability,
        r.fail_rate,
        r.max_queue_size,
        r.mean_queue_wait,
        r.mean_queue_wait_success,
        r.mean_queue_wait_fail,
        r.throughput,
        r.recovery_time
    )
}

fn table(columns: &[(&str, &SummaryReport)]) -> String {
    let mut widths: Vec<usize> = columns.iter().map(|(label, _)| label.len()).collect();
    let cells: Vec<[String; 8]> = columns.iter().map(|(_, r)| metric_cells(r)).collect();
    for (i, col) in cells.iter().enumerate() {
        for cell in col {
            widths[i] = widths[i].max(cell.len());
        }
    }
    let name_width = METRIC_ROWS.iter().map(|m| m.len()).max().unwrap_or(0);

    let mut out = String::new();
    out.push_str(&format!("{:<name_width$}", "Metric"));
    for ((label, _), w) in columns.iter().zip(&widths) {
        out.push_str(&format!("  {label:>w$}"));
    }
    out.push('\n');
    out.push_str(&"-".repeat(name_width + widths.iter().map(|w| w + 2).sum::<usize>()));
    out.push('\n');
    for (row, metric) in METRIC_ROWS.iter().enumerate() {
        out.push_str(&format!("{metric:<name_width$}"));
        for (col, w) in cells.iter().zip(&widths) {
            out.push_str(&format!("  {:>w$}", col[row]));
        }
        out.push('\n');
    }
    out
}

pub fn render_summary(label: &str, report: &SummaryReport, format: OutputFormat) -> String {
    match format {
        OutputFormat::Human => table(&[(label, report)]),
        OutputFormat::Csv => format!("{CSV_HEADER}\n{}\n", csv_row(label, report)),
        OutputFormat::Json => {
            let mut s = serde_json::to_string_pretty(report).expect("summary serializes");
            s.push('\n');
            s
        }
    }
}

pub fn render_compare(columns: &[(&str, &SummaryReport)], format: OutputFormat) -> String {
    match format {
        OutputFormat::Human => table(columns),
        OutputFormat::Csv => {
            let mut out = String::from(CSV_HEADER);
            for (label, report) in columns {
                out.push('\n');
                out.push_str(&csv_row(label, report));
            }
            out.push('\n');
            out
        }
        OutputFormat::Json => {
            let reports: Vec<&SummaryReport> = columns.iter().map(|(_, r)| *r).collect();
            let mut s = serde_json::to_string_pretty(&reports).expect("summaries serialize");
            s.push('\n');
            s
        }
    }
}
