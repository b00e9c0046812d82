use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Per-image fidelity.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalRow {
    pub name: String,
    pub psnr: f64,
    pub ssim: f64,
}

impl EvalRow {
    /// Average of `rows`, named `#mean`; `None` when empty.
    pub fn mean(rows: &[EvalRow]) -> Option<EvalRow> {
        if rows.is_empty() {
            return None;
        }
        let n = rows.len() as f64;
        Some(EvalRow {
            name: "#mean".into(),
            psnr: rows.iter().map(|r| r.psnr).sum::<f64>() / n,
            ssim: rows.iter().map(|r| r.ssim).sum::<f64>() / n,
        })
    }
}

/// Four decimals, or `inf` for an infinite value.
pub fn format_db(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".into()
    } else {
        format!("{v:.4}")
    }
}

/// Renders `rows` as a tab-separated report with a header and a `#mean` row.
pub fn render_report(rows: &[EvalRow]) -> Result<String> {
    let mean = EvalRow::mean(rows).ok_or_else(|| Error::usage("no images were evaluated"))?;
    let mut out = String::from("image\tpsnr\tssim\n");
    for r in rows.iter().chain(std::iter::once(&mean)) {
        writeln!(out, "{}\t{}\t{:.4}", r.name, format_db(r.psnr), r.ssim).unwrap();
    }
    Ok(out)
}

/// Writes [`render_report`] to `path` and returns the mean row.
pub fn write_report(path: impl AsRef<Path>, rows: &[EvalRow]) -> Result<EvalRow> {
    let path = path.as_ref();
    let text = render_report(rows)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))?;
    Ok(EvalRow::mean(rows).expect("checked non-empty"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rows_plus_mean() {
        let rows = vec![
            EvalRow { name: "a".into(), psnr: 30.0, ssim: 0.9 },
            EvalRow { name: "b".into(), psnr: f64::INFINITY, ssim: 1.0 },
        ];
        let text = render_report(&rows).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines, ["image\tpsnr\tssim", "a\t30.0000\t0.9000", "b\tinf\t1.0000", "#mean\tinf\t0.9500"]);
        assert!(render_report(&[]).is_err());
        let dir = tempfile::tempdir().unwrap();
        let mean = write_report(dir.path().join("r.tsv"), &rows[..1]).unwrap();
        assert_eq!(mean.psnr, 30.0);
    }
}
