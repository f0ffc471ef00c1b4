//! Per-series CSV files: `# key=value` metadata lines, then a header that
//! must match the series kind, then numeric rows.

use std::fmt::Write as _;
use std::path::Path;

use nv_phonon::fitting::{Conditions, DataSeries, SeriesKind};

use crate::error::{CliError, CliResult};

fn parse_meta<T: std::str::FromStr>(origin: &str, line: usize, key: &str, value: &str) -> CliResult<T> {
    value
        .trim()
        .parse()
        .map_err(|_| CliError::Parse(format!("{origin}:{line}: cannot parse `{key}` value `{value}`")))
}

fn parse_number(origin: &str, line: usize, col: usize, cell: &str) -> CliResult<f64> {
    match cell.trim().parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(CliError::Parse(format!("{origin}:{line}:{col}: `{cell}` is not a finite decimal"))),
    }
}

/// Parses a series of `kind` from CSV text.
pub fn parse_series(kind: SeriesKind, text: &str, origin: &str) -> CliResult<DataSeries> {
    let mut name = Path::new(origin)
        .file_stem()
        .map_or_else(|| kind.to_string(), |s| s.to_string_lossy().into_owned());
    let mut conditions = Conditions::default();
    let mut body = String::new();
    let mut body_lines = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            let Some((key, value)) = comment.split_once('=') else { continue };
            let key = key.trim();
            match key {
                "name" => name = value.trim().to_string(),
                "kind" => {
                    let declared: SeriesKind = value
                        .trim()
                        .parse()
                        .map_err(|e: nv_phonon::Error| CliError::Parse(format!("{origin}:{line_no}: {e}")))?;
                    if declared != kind {
                        return Err(CliError::Parse(format!(
                            "{origin}:{line_no}: file declares kind {declared} but was given as {kind}"
                        )));
                    }
                }
                "temperature_k" => conditions.temperature_k = Some(parse_meta(origin, line_no, key, value)?),
                "rf_power_w" => conditions.rf_power_w = Some(parse_meta(origin, line_no, key, value)?),
                "optical_power_mw" => conditions.optical_power_mw = Some(parse_meta(origin, line_no, key, value)?),
                "sign_branch" => conditions.sign_branch = Some(parse_meta(origin, line_no, key, value)?),
                _ => {}
            }
            continue;
        }
        body.push_str(line);
        body.push('\n');
        body_lines.push(line_no);
    }

    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(body.as_bytes());
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| CliError::Parse(format!("{origin}: {e}")))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let [xc, yc, sc] = kind.columns();
    let with_sigma = header == [xc, yc, sc];
    if !with_sigma && header != [xc, yc] {
        let line = body_lines.first().copied().unwrap_or(1);
        return Err(CliError::Parse(format!(
            "{origin}:{line}: header `{}` does not match {kind}; expected `{xc},{yc},{sc}` or `{xc},{yc}`",
            header.join(",")
        )));
    }

    let (mut x, mut y, mut sigma) = (Vec::new(), Vec::new(), Vec::new());
    for (row, record) in reader.records().enumerate() {
        let line = body_lines.get(row + 1).copied().unwrap_or(0);
        let record = record.map_err(|e| CliError::Parse(format!("{origin}:{line}: {e}")))?;
        if record.len() != header.len() {
            return Err(CliError::Parse(format!(
                "{origin}:{line}: expected {} cells, found {}",
                header.len(),
                record.len()
            )));
        }
        x.push(parse_number(origin, line, 1, &record[0])?);
        y.push(parse_number(origin, line, 2, &record[1])?);
        if with_sigma {
            sigma.push(parse_number(origin, line, 3, &record[2])?);
        }
    }
    let series = DataSeries {
        name,
        kind,
        x,
        y,
        sigma: with_sigma.then_some(sigma),
        conditions,
    };
    series
        .validate()
        .map_err(|e| CliError::Invariant(format!("{origin}: {e}")))?;
    Ok(series)
}

pub fn read_series(kind: SeriesKind, path: &Path) -> CliResult<DataSeries> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    parse_series(kind, &text, &path.display().to_string())
}

/// Inverse of [`parse_series`]; values use the shortest round-trip form.
pub fn write_series(s: &DataSeries) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# kind={}", s.kind);
    let _ = writeln!(out, "# name={}", s.name);
    let c = &s.conditions;
    if let Some(v) = c.temperature_k {
        let _ = writeln!(out, "# temperature_k={v}");
    }
    if let Some(v) = c.rf_power_w {
        let _ = writeln!(out, "# rf_power_w={v}");
    }
    if let Some(v) = c.optical_power_mw {
        let _ = writeln!(out, "# optical_power_mw={v}");
    }
    if let Some(v) = c.sign_branch {
        let _ = writeln!(out, "# sign_branch={v}");
    }
    let [xc, yc, sc] = s.kind.columns();
    match &s.sigma {
        Some(sig) => {
            let _ = writeln!(out, "{xc},{yc},{sc}");
            for i in 0..s.len() {
                let _ = writeln!(out, "{},{},{}", s.x[i], s.y[i], sig[i]);
            }
        }
        None => {
            let _ = writeln!(out, "{xc},{yc}");
            for i in 0..s.len() {
                let _ = writeln!(out, "{},{}", s.x[i], s.y[i]);
            }
        }
    }
    out
}

/// Plain table with a header row.
pub fn write_table(header: &[&str], rows: &[Vec<f64>]) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for row in rows {
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_exact() {
        let s = DataSeries {
            name: "run 7".into(),
            kind: SeriesKind::LinewidthVsT,
            x: vec![295.0, 300.1, 1.0 / 3.0 + 400.0],
            y: vec![0.1 + 0.2, 123.456789012345678, std::f64::consts::PI],
            sigma: Some(vec![1e-3, 2.5, 3.0]),
            conditions: Conditions {
                rf_power_w: Some(0.44),
                optical_power_mw: Some(2.0),
                ..Conditions::default()
            },
        };
        let text = write_series(&s);
        assert_eq!(parse_series(s.kind, &text, "x.csv").unwrap(), s);
    }

    #[test]
    fn header_must_match_kind() {
        let text = "T_K,zpl_width_MHz,sigma_MHz\n10,16,1\n";
        let err = parse_series(SeriesKind::LinewidthVsT, text, "f.csv").unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("f.csv:1"));
        assert!(parse_series(SeriesKind::ZplVsT, text, "f.csv").is_ok());
    }

    #[test]
    fn bad_cells_are_located() {
        let text = "# note\nT_K,zpl_width_MHz\n10,16\n20,abc\n";
        let err = parse_series(SeriesKind::ZplVsT, text, "f.csv").unwrap_err();
        assert!(err.to_string().starts_with("f.csv:4:2"), "{err}");
        let text = "T_K,zpl_width_MHz\n10,inf\n";
        assert_eq!(parse_series(SeriesKind::ZplVsT, text, "f.csv").unwrap_err().exit_code(), 2);
    }

    #[test]
    fn data_invariants_are_checked() {
        let text = "T_K,zpl_width_MHz\n20,16\n10,17\n";
        assert_eq!(parse_series(SeriesKind::ZplVsT, text, "f.csv").unwrap_err().exit_code(), 3);
    }

    #[test]
    fn declared_kind_must_agree() {
        let text = "# kind=zpl_vs_T\nT_K,visibility\n10,0.4\n";
        assert!(parse_series(SeriesKind::VisibilityVsT, text, "f.csv").is_err());
    }
}
