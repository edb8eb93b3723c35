use super::{EvalError, EvalReport, Metric};

pub const MISSING_CELL: &str = "—";

/// Formats a raw metric value the way result tables print it: cosine
/// metrics ×100 with one decimal, reward with three decimals, proportions as
/// percentages with one decimal.
pub fn format_metric(metric: Metric, value: f64) -> String {
    let text = match metric {
        Metric::ClipT | Metric::ClipI | Metric::Dino => format!("{:.1}", value * 100.0),
        Metric::Reward | Metric::L1Diversity => format!("{value:.3}"),
        Metric::CorrectProportion | Metric::Bvqa => format!("{:.1}%", value * 100.0),
    };
    strip_negative_zero(text)
}

fn strip_negative_zero(text: String) -> String {
    match text.strip_prefix('-') {
        Some(rest) if rest.chars().all(|c| matches!(c, '0' | '.' | '%')) => rest.to_string(),
        _ => text,
    }
}

/// Rows of formatted cells, one per labelled report.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReportTable {
    pub metrics: Vec<Metric>,
    pub rows: Vec<(String, Vec<String>)>,
}

impl ReportTable {
    pub fn new(reports: &[EvalReport], labels: &[String], metrics: &[Metric]) -> Result<Self, EvalError> {
        if reports.len() != labels.len() {
            return Err(EvalError::LabelMismatch {
                labels: labels.len(),
                reports: reports.len(),
            });
        }
        let rows = reports
            .iter()
            .zip(labels)
            .map(|(r, label)| {
                let cells = metrics
                    .iter()
                    .map(|&m| r.value(m).map_or_else(|| MISSING_CELL.to_string(), |v| format_metric(m, v)))
                    .collect();
                (label.clone(), cells)
            })
            .collect();
        Ok(Self {
            metrics: metrics.to_vec(),
            rows,
        })
    }

    pub fn to_markdown(&self) -> String {
        let mut out = String::from("| System |");
        for m in &self.metrics {
            out.push_str(&format!(" {} |", m.heading()));
        }
        out.push_str("\n|---|");
        for _ in &self.metrics {
            out.push_str("---:|");
        }
        out.push('\n');
        for (label, cells) in &self.rows {
            out.push_str(&format!("| {} |", label.replace('|', "\\|")));
            for c in cells {
                out.push_str(&format!(" {c} |"));
            }
            out.push('\n');
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut writer = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        let header: Vec<&str> = std::iter::once("system")
            .chain(self.metrics.iter().map(|m| m.as_str()))
            .collect();
        writer.write_record(&header).expect("in-memory write");
        for (label, cells) in &self.rows {
            let row: Vec<&str> = std::iter::once(label.as_str())
                .chain(cells.iter().map(String::as_str))
                .collect();
            writer.write_record(&row).expect("in-memory write");
        }
        String::from_utf8(writer.into_inner().expect("in-memory flush")).expect("utf-8 cells")
    }
}

pub fn report_markdown(reports: &[EvalReport], labels: &[String], metrics: &[Metric]) -> Result<String, EvalError> {
    Ok(ReportTable::new(reports, labels, metrics)?.to_markdown())
}

pub fn report_csv(reports: &[EvalReport], labels: &[String], metrics: &[Metric]) -> Result<String, EvalError> {
    Ok(ReportTable::new(reports, labels, metrics)?.to_csv())
}
