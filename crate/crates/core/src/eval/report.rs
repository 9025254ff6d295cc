use std::fmt::Write as _;

use super::loso::{EvalMode, EvaluationReport};

fn opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |a| format!("{a:.6}"))
}

impl EvaluationReport {
    /// One row per fold, then the unweighted and sample-weighted aggregates.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("fold,held_out,mode,samples,correct,accuracy,auc,single_class\n");
        for (i, f) in self.folds.iter().enumerate() {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{:.6},{},{}",
                i + 1,
                f.held_out,
                self.mode,
                f.n_samples(),
                f.n_correct(),
                f.accuracy,
                opt(f.auc),
                f.single_class
            );
        }
        let samples: usize = self.folds.iter().map(|f| f.n_samples()).sum();
        let correct: usize = self.folds.iter().map(|f| f.n_correct()).sum();
        let _ = writeln!(
            out,
            "mean,,{},{samples},{correct},{:.6},{},",
            self.mode,
            self.mean_accuracy,
            opt(self.mean_auc)
        );
        let _ = writeln!(
            out,
            "weighted,,{},{samples},{correct},{:.6},{},",
            self.mode,
            self.weighted_accuracy,
            opt(self.weighted_auc)
        );
        out
    }

    /// Per-sample predictions: subject, period, frame, truth, confidence.
    pub fn predictions_csv(&self) -> String {
        let mut out = String::from("held_out,subject,period,frame,truth,predicted,confidence\n");
        for f in &self.folds {
            for p in &f.predictions {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{:.6}",
                    f.held_out,
                    p.subject_id,
                    p.period.map_or(String::new(), |p| p.to_string()),
                    p.frame_index.map_or(String::new(), |i| i.to_string()),
                    p.truth,
                    p.predicted(),
                    p.confidence
                );
            }
        }
        out
    }

    pub fn table_row(&self, approach: &str, channel: &str) -> TableRow {
        TableRow {
            approach: approach.to_owned(),
            channel: channel.to_owned(),
            accuracy_pct: 100.0 * self.mean_accuracy,
            auc: self.mean_auc,
        }
    }
}

/// One line of the performance table.
#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub approach: String,
    pub channel: String,
    pub accuracy_pct: f64,
    pub auc: Option<f64>,
}

pub fn table_title(mode: EvalMode) -> &'static str {
    match mode {
        EvalMode::FrameLevel => "Frame Level Performance",
        EvalMode::VideoLevel => "Video Level Performance",
    }
}

/// Plain-text table with the columns Approach, Channel, Accuracy (%), AUC.
pub fn render_table(title: &str, rows: &[TableRow]) -> String {
    let header = ["Approach", "Channel", "Accuracy (%)", "AUC"];
    let cells: Vec<[String; 4]> = rows
        .iter()
        .map(|r| {
            [
                r.approach.clone(),
                r.channel.clone(),
                format!("{:.2}", r.accuracy_pct),
                r.auc.map_or("-".into(), |a| format!("{a:.2}")),
            ]
        })
        .collect();
    let mut widths = header.map(str::len);
    for row in &cells {
        for (w, c) in widths.iter_mut().zip(row) {
            *w = (*w).max(c.len());
        }
    }
    let line = |cols: [&str; 4]| {
        format!(
            "| {:<w0$} | {:<w1$} | {:>w2$} | {:>w3$} |\n",
            cols[0],
            cols[1],
            cols[2],
            cols[3],
            w0 = widths[0],
            w1 = widths[1],
            w2 = widths[2],
            w3 = widths[3]
        )
    };
    let rule = format!(
        "|{}|{}|{}|{}|\n",
        "-".repeat(widths[0] + 2),
        "-".repeat(widths[1] + 2),
        "-".repeat(widths[2] + 2),
        "-".repeat(widths[3] + 2)
    );
    let mut out = format!("{title}\n");
    out.push_str(&line(header));
    out.push_str(&rule);
    for row in &cells {
        out.push_str(&line([&row[0], &row[1], &row[2], &row[3]]));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_layout() {
        let rows = [
            TableRow {
                approach: "Fusion + LSTM".into(),
                channel: "Face + Body".into(),
                accuracy_pct: 92.4812,
                auc: Some(0.9012),
            },
            TableRow {
                approach: "x".into(),
                channel: "Face".into(),
                accuracy_pct: 50.0,
                auc: None,
            },
        ];
        let t = render_table(table_title(EvalMode::VideoLevel), &rows);
        let lines: Vec<&str> = t.lines().collect();
        assert_eq!(lines[0], "Video Level Performance");
        assert_eq!(lines[1], "| Approach      | Channel     | Accuracy (%) |  AUC |");
        assert_eq!(lines[3], "| Fusion + LSTM | Face + Body |        92.48 | 0.90 |");
        assert!(lines[4].ends_with("50.00 |    - |"));
        assert!(lines.iter().skip(1).all(|l| l.len() == lines[1].len()));
    }
}
