use std::path::Path;

use crate::error::{Error, Result};
use crate::Vec3;

/// Parsed raw cloud. `normals` is present only if every row carried one.
#[derive(Debug, Clone, PartialEq)]
pub struct RawCloud {
    pub points: Vec<Vec3>,
    pub normals: Option<Vec<Vec3>>,
}

/// Parses rows of `x y z [nx ny nz]`. Blank lines and `#` comments are skipped.
pub fn parse_cloud(text: &str) -> Result<RawCloud> {
    let mut points = Vec::new();
    let mut normals = Vec::new();
    let mut with_normals = None;
    for (no, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::CloudParse { line: no + 1, message: e.to_string() })?;
        let has = match vals.len() {
            3 => false,
            6 => true,
            n => return Err(Error::CloudParse { line: no + 1, message: format!("expected 3 or 6 values, found {n}") }),
        };
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(Error::CloudParse { line: no + 1, message: "non-finite value".into() });
        }
        match with_normals {
            None => with_normals = Some(has),
            Some(prev) if prev != has => {
                return Err(Error::CloudParse { line: no + 1, message: "rows mix 3 and 6 columns".into() })
            }
            _ => {}
        }
        points.push(Vec3::new(vals[0], vals[1], vals[2]));
        if has {
            let n = Vec3::new(vals[3], vals[4], vals[5]);
            let n = n
                .try_normalize(1e-12)
                .ok_or_else(|| Error::CloudParse { line: no + 1, message: "zero-length normal".into() })?;
            normals.push(n);
        }
    }
    if points.is_empty() {
        return Err(Error::CloudParse { line: 0, message: "cloud contains no points".into() });
    }
    Ok(RawCloud { points, normals: if with_normals == Some(true) { Some(normals) } else { None } })
}

pub fn read_cloud(path: &Path) -> Result<RawCloud> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::CloudParse { line: 0, message: format!("{}: {e}", path.display()) })?;
    parse_cloud(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_with_and_without_normals() {
        let c = parse_cloud("# header\n0 0 0\n1 2 3\n\n").unwrap();
        assert_eq!(c.points.len(), 2);
        assert!(c.normals.is_none());
        let c = parse_cloud("0 0 0 0 0 2\n").unwrap();
        assert_eq!(c.normals.unwrap()[0], Vec3::z());
    }

    #[test]
    fn reports_line_numbers() {
        assert_eq!(
            parse_cloud("0 0 0\n1 x 3\n").unwrap_err(),
            Error::CloudParse { line: 2, message: "invalid float literal".into() }
        );
        assert!(matches!(parse_cloud("0 0 0\n0 0 0 0 0 1\n"), Err(Error::CloudParse { line: 2, .. })));
        assert!(matches!(parse_cloud("0 0\n"), Err(Error::CloudParse { line: 1, .. })));
    }
}
