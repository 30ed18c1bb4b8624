use std::fmt::Write;

use crate::error::{Error, Result};

use super::MetricsRow;

pub const CSV_HEADER: &str =
    "method,step,seed,effective_pass,train_obj,train_gap,test_obj,test_error";

/// Header plus one line per row; reals carry 17 significant digits so the
/// text round-trips exactly.
pub fn emit_csv(rows: &[MetricsRow]) -> String {
    let mut out = String::with_capacity(64 * (rows.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in rows {
        writeln!(
            out,
            "{},{},{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            r.method,
            r.step,
            r.seed,
            r.effective_pass,
            r.train_obj,
            r.train_gap,
            r.test_obj,
            r.test_error
        )
        .expect("writing to a String cannot fail");
    }
    out
}

pub fn parse_csv(text: &str) -> Result<Vec<MetricsRow>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim_end() == CSV_HEADER => {}
        _ => {
            return Err(Error::Parse {
                line: 1,
                message: "missing or unexpected CSV header".into(),
            })
        }
    }
    lines
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(idx, line)| {
            let line_no = idx + 1;
            let bad = |what: &str| Error::Parse {
                line: line_no,
                message: format!("bad {what}"),
            };
            let fields: Vec<&str> = line.trim_end().split(',').collect();
            if fields.len() != 8 {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("expected 8 fields, found {}", fields.len()),
                });
            }
            let real = |i: usize, what: &str| fields[i].parse::<f64>().map_err(|_| bad(what));
            Ok(MetricsRow {
                method: fields[0].to_string(),
                step: fields[1].to_string(),
                seed: fields[2].parse().map_err(|_| bad("seed"))?,
                effective_pass: real(3, "effective_pass")?,
                train_obj: real(4, "train_obj")?,
                train_gap: real(5, "train_gap")?,
                test_obj: real(6, "test_obj")?,
                test_error: real(7, "test_error")?,
            })
        })
        .collect()
}
