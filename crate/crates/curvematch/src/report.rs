//! CMC CSV files, SVG plots and ablation tables.

use std::fmt::Write as _;

use curvematch_core::eval::CmcCurve;

#[derive(Clone, Debug, PartialEq)]
pub struct NamedCurve {
    pub method: String,
    pub curve: CmcCurve,
}

/// `method,rank,value` rows, LF endings.
pub fn cmc_csv(curves: &[NamedCurve]) -> String {
    let mut out = String::from("method,rank,value\n");
    for c in curves {
        for (i, v) in c.curve.values.iter().enumerate() {
            writeln!(out, "{},{},{}", c.method, i + 1, v).expect("write to string");
        }
    }
    out
}

/// Parses [`cmc_csv`] output; methods keep their order of first appearance.
pub fn parse_cmc_csv(text: &str) -> Result<Vec<NamedCurve>, String> {
    let mut lines = text.lines();
    match lines.next() {
        Some("method,rank,value") => {}
        other => return Err(format!("unexpected header {other:?}")),
    }
    let mut curves: Vec<NamedCurve> = Vec::new();
    for (n, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let [method, rank, value] = fields[..] else {
            return Err(format!("line {}: expected 3 fields", n + 2));
        };
        let rank: usize = rank
            .parse()
            .map_err(|_| format!("line {}: bad rank {rank:?}", n + 2))?;
        let value: f64 = value
            .parse()
            .map_err(|_| format!("line {}: bad value {value:?}", n + 2))?;
        let idx = match curves.iter().position(|c| c.method == method) {
            Some(i) => i,
            None => {
                curves.push(NamedCurve {
                    method: method.to_string(),
                    curve: CmcCurve { values: Vec::new() },
                });
                curves.len() - 1
            }
        };
        let values = &mut curves[idx].curve.values;
        if rank != values.len() + 1 {
            return Err(format!("line {}: rank {rank} out of sequence", n + 2));
        }
        values.push(value);
    }
    Ok(curves)
}

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

/// Standalone SVG 1.1 plot with one polyline per method, rank on x and CMC
/// value on y.
pub fn cmc_svg(curves: &[NamedCurve]) -> String {
    let (w, h) = (640.0, 420.0);
    let (left, right, top, bottom) = (60.0, 160.0, 20.0, 50.0);
    let pw = w - left - right;
    let ph = h - top - bottom;
    let n = curves.iter().map(|c| c.curve.values.len()).max().unwrap_or(1).max(1);
    let x_of = |rank: usize| {
        if n == 1 {
            left + pw / 2.0
        } else {
            left + pw * (rank - 1) as f64 / (n - 1) as f64
        }
    };
    let y_of = |v: f64| top + ph * (1.0 - v);

    let mut s = String::new();
    writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#).unwrap();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    )
    .unwrap();
    writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#).unwrap();
    writeln!(
        s,
        r#"<g stroke="black" stroke-width="1"><line x1="{left}" y1="{}" x2="{}" y2="{}"/><line x1="{left}" y1="{top}" x2="{left}" y2="{}"/></g>"#,
        top + ph,
        left + pw,
        top + ph,
        top + ph
    )
    .unwrap();
    s.push_str(r#"<g font-family="sans-serif" font-size="11" fill="black">"#);
    s.push('\n');
    for i in 0..=10 {
        let v = i as f64 / 10.0;
        let y = y_of(v);
        writeln!(
            s,
            r#"<line x1="{}" y1="{y:.2}" x2="{left}" y2="{y:.2}" stroke="black"/><text x="{}" y="{:.2}" text-anchor="end">{v:.1}</text>"#,
            left - 4.0,
            left - 6.0,
            y + 4.0
        )
        .unwrap();
    }
    for rank in 1..=n {
        let x = x_of(rank);
        writeln!(
            s,
            r#"<line x1="{x:.2}" y1="{}" x2="{x:.2}" y2="{}" stroke="black"/><text x="{x:.2}" y="{}" text-anchor="middle">{rank}</text>"#,
            top + ph,
            top + ph + 4.0,
            top + ph + 16.0
        )
        .unwrap();
    }
    writeln!(
        s,
        r#"<text x="{:.2}" y="{}" text-anchor="middle">Rank</text><text x="14" y="{:.2}" text-anchor="middle" transform="rotate(-90 14 {:.2})">CMC</text>"#,
        left + pw / 2.0,
        h - 10.0,
        top + ph / 2.0,
        top + ph / 2.0
    )
    .unwrap();
    s.push_str("</g>\n");
    for (i, c) in curves.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let points: Vec<String> = c
            .curve
            .values
            .iter()
            .enumerate()
            .map(|(r, &v)| format!("{:.2},{:.2}", x_of(r + 1), y_of(v)))
            .collect();
        writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#,
            points.join(" ")
        )
        .unwrap();
        let ly = top + 14.0 + 18.0 * i as f64;
        let lx = left + pw + 14.0;
        writeln!(
            s,
            r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}" font-family="sans-serif" font-size="11">{}</text>"#,
            lx + 20.0,
            lx + 26.0,
            ly + 4.0,
            escape(&c.method)
        )
        .unwrap();
    }
    s.push_str("</svg>\n");
    s
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

#[derive(Clone, Debug, PartialEq)]
pub struct AblationRow {
    pub condition: String,
    /// Absent on timing rows.
    pub rank1: Option<f64>,
    pub seconds: f64,
}

/// `condition,rank1,seconds` rows; timing rows leave `rank1` empty.
pub fn ablation_csv(rows: &[AblationRow]) -> String {
    let mut out = String::from("condition,rank1,seconds\n");
    for r in rows {
        let rank1 = r.rank1.map(|v| v.to_string()).unwrap_or_default();
        writeln!(out, "{},{},{:.6}", r.condition, rank1, r.seconds).unwrap();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn curve(method: &str, values: &[f64]) -> NamedCurve {
        NamedCurve {
            method: method.into(),
            curve: CmcCurve {
                values: values.to_vec(),
            },
        }
    }

    #[test]
    fn csv_rows_and_round_trip() {
        let curves = vec![curve("stage1", &[0.5, 1.0]), curve("rerank", &[1.0 / 3.0, 0.9, 1.0])];
        let text = cmc_csv(&curves[..1]);
        assert_eq!(text, "method,rank,value\nstage1,1,0.5\nstage1,2,1\n");
        assert_eq!(parse_cmc_csv(&cmc_csv(&curves)).unwrap(), curves);
        assert!(parse_cmc_csv("a,b\n").is_err());
    }

    #[test]
    fn svg_is_deterministic() {
        let curves = vec![curve("a<b", &[0.2, 0.7, 1.0])];
        let s = cmc_svg(&curves);
        assert_eq!(s, cmc_svg(&curves));
        assert!(s.contains("a&lt;b"));
        assert_eq!(s.matches("<polyline").count(), 1);
    }
}
