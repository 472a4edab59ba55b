//! Result CSV: per-mixture rows, per-speaker rows, then the aggregate block.
//!
//! `record` is one of `mixture`, `speaker`, `aggregate_speaker` (statistics of
//! per-speaker means) or `aggregate_pooled` (statistics of all mixtures).
//! Unused columns are left empty. Values in dB use four decimals.

use super::{aggregate_suite, EvalResult, Summary};
use crate::error::{Error, Result};

pub const CSV_HEADER: &str =
    "record,config,hidden_dim,speaker_id,mixture,input_sisdr,output_sisdr,sisdri,mean_sisdri,median,q1,q3,min,max,n";

fn stats(s: &Summary) -> String {
    format!(
        "{:.4},{:.4},{:.4},{:.4},{:.4},{:.4},{}",
        s.mean, s.median, s.q1, s.q3, s.min, s.max, s.n
    )
}

fn check_field(s: &str) -> Result<()> {
    if s.contains([',', '\n', '"']) {
        return Err(Error::invalid(format!("CSV field {s:?} contains a separator")));
    }
    Ok(())
}

pub fn format_csv(results: &[EvalResult]) -> Result<String> {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in results {
        check_field(&r.config)?;
        check_field(&r.speaker_id)?;
        for m in &r.mixtures {
            out.push_str(&format!(
                "mixture,{},{},{},{},{:.4},{:.4},{:.4},,,,,,,\n",
                r.config,
                r.hidden_dim,
                r.speaker_id,
                m.index,
                m.input_sisdr,
                m.output_sisdr,
                m.improvement()
            ));
        }
    }
    for r in results {
        out.push_str(&format!(
            "speaker,{},{},{},,,,,{}\n",
            r.config,
            r.hidden_dim,
            r.speaker_id,
            stats(&r.summary())
        ));
    }
    for a in aggregate_suite(results)? {
        out.push_str(&format!(
            "aggregate_speaker,{},{},,,,,,{}\n",
            a.config,
            a.hidden_dim,
            stats(&a.per_speaker)
        ));
        out.push_str(&format!(
            "aggregate_pooled,{},{},,,,,,{}\n",
            a.config,
            a.hidden_dim,
            stats(&a.pooled)
        ));
    }
    Ok(out)
}

/// `(config, hidden_dim, speaker_id, sisdri)` for every mixture row.
pub fn parse_csv_improvements(text: &str) -> Result<Vec<(String, usize, String, f64)>> {
    let mut lines = text.lines();
    if lines.next() != Some(CSV_HEADER) {
        return Err(Error::Parse("unexpected CSV header".into()));
    }
    let mut out = Vec::new();
    for line in lines {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 15 {
            return Err(Error::Parse(format!("CSV row has {} fields", f.len())));
        }
        if f[0] == "mixture" {
            let bad = || Error::Parse(format!("bad CSV row {line:?}"));
            out.push((
                f[1].to_string(),
                f[2].parse().map_err(|_| bad())?,
                f[3].to_string(),
                f[7].parse().map_err(|_| bad())?,
            ));
        }
    }
    Ok(out)
}
