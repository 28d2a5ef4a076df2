//! Text formats: `.xyzn` records, ASCII PLY and `.labels` files.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::Real;

use super::cloud::PointCloud;

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse { line, message: message.into() }
}

fn parse_num<T: Real>(tok: &str, line: usize) -> Result<T> {
    let v: f64 = tok.parse().map_err(|_| parse_err(line, format!("invalid number {tok:?}")))?;
    if !v.is_finite() {
        return Err(parse_err(line, format!("non-finite value {tok:?}")));
    }
    Ok(T::lit(v))
}

/// Parses `x y z nx ny nz` records, one per line. Blank lines and `#` comments are skipped.
pub fn parse_xyzn<T: Real>(text: &str) -> Result<PointCloud<T>> {
    let mut positions = Vec::new();
    let mut normals = Vec::new();
    for (no, raw) in text.lines().enumerate() {
        let line = no + 1;
        let s = raw.trim();
        if s.is_empty() || s.starts_with('#') {
            continue;
        }
        let toks: Vec<&str> = s.split_whitespace().collect();
        if toks.len() != 6 {
            return Err(parse_err(line, format!("expected 6 values, found {}", toks.len())));
        }
        let mut v = [T::zero(); 6];
        for (slot, tok) in v.iter_mut().zip(&toks) {
            *slot = parse_num(tok, line)?;
        }
        if v[3] == T::zero() && v[4] == T::zero() && v[5] == T::zero() {
            return Err(parse_err(line, "zero-length normal"));
        }
        positions.push([v[0], v[1], v[2]]);
        normals.push([v[3], v[4], v[5]]);
    }
    if positions.is_empty() {
        return Err(parse_err(0, "no points"));
    }
    PointCloud::new(positions, normals)
}

pub fn write_xyzn<T: Real>(cloud: &PointCloud<T>) -> String {
    let mut out = String::with_capacity(cloud.len() * 64);
    for (p, n) in cloud.positions().iter().zip(cloud.normals()) {
        let _ = writeln!(out, "{} {} {} {} {} {}", p[0], p[1], p[2], n[0], n[1], n[2]);
    }
    out
}

struct PlyElement {
    name: String,
    count: usize,
    props: Vec<String>,
}

/// Parses an ASCII PLY file whose `vertex` element carries `x y z nx ny nz`.
pub fn parse_ply<T: Real>(text: &str) -> Result<PointCloud<T>> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    match lines.next() {
        Some((_, "ply")) => {}
        _ => return Err(parse_err(1, "missing ply magic")),
    }
    let mut elements: Vec<PlyElement> = Vec::new();
    let mut header_done = false;
    for (line, s) in lines.by_ref() {
        let toks: Vec<&str> = s.split_whitespace().collect();
        match toks.first().copied() {
            Some("format") => {
                if toks.get(1) != Some(&"ascii") {
                    return Err(parse_err(line, "only ascii PLY is supported"));
                }
            }
            Some("comment") | Some("obj_info") | None => {}
            Some("element") => {
                if toks.len() != 3 {
                    return Err(parse_err(line, "malformed element"));
                }
                let count = toks[2].parse().map_err(|_| parse_err(line, "invalid element count"))?;
                elements.push(PlyElement { name: toks[1].to_string(), count, props: Vec::new() });
            }
            Some("property") => {
                let el = elements.last_mut().ok_or_else(|| parse_err(line, "property before element"))?;
                let name = toks.last().copied().unwrap_or_default();
                el.props.push(name.to_string());
            }
            Some("end_header") => {
                header_done = true;
                break;
            }
            Some(other) => return Err(parse_err(line, format!("unexpected header keyword {other:?}"))),
        }
    }
    if !header_done {
        return Err(parse_err(0, "missing end_header"));
    }
    let mut positions = Vec::new();
    let mut normals = Vec::new();
    let mut found = false;
    for el in &elements {
        if el.name != "vertex" {
            for _ in 0..el.count {
                lines.next();
            }
            continue;
        }
        found = true;
        let col = |name: &str| el.props.iter().position(|p| p == name);
        let cols = ["x", "y", "z", "nx", "ny", "nz"]
            .map(|n| col(n).ok_or_else(|| parse_err(0, format!("vertex property {n} missing"))));
        let mut idx = [0usize; 6];
        for (slot, c) in idx.iter_mut().zip(cols) {
            *slot = c?;
        }
        for _ in 0..el.count {
            let (line, s) = lines.next().ok_or_else(|| parse_err(0, "truncated vertex data"))?;
            let toks: Vec<&str> = s.split_whitespace().collect();
            if toks.len() < el.props.len() {
                return Err(parse_err(line, format!("expected {} values, found {}", el.props.len(), toks.len())));
            }
            let mut v = [T::zero(); 6];
            for (slot, &c) in v.iter_mut().zip(&idx) {
                *slot = parse_num(toks[c], line)?;
            }
            if v[3] == T::zero() && v[4] == T::zero() && v[5] == T::zero() {
                return Err(parse_err(line, "zero-length normal"));
            }
            positions.push([v[0], v[1], v[2]]);
            normals.push([v[3], v[4], v[5]]);
        }
    }
    if !found || positions.is_empty() {
        return Err(parse_err(0, "no vertex element"));
    }
    PointCloud::new(positions, normals)
}

pub fn write_ply<T: Real>(cloud: &PointCloud<T>) -> String {
    let mut out = String::new();
    out.push_str("ply\nformat ascii 1.0\n");
    let _ = writeln!(out, "element vertex {}", cloud.len());
    for p in ["x", "y", "z", "nx", "ny", "nz"] {
        let _ = writeln!(out, "property float {p}");
    }
    out.push_str("end_header\n");
    out.push_str(&write_xyzn(cloud));
    out
}

/// Parses either format, detecting PLY by its magic line.
pub fn parse_cloud<T: Real>(text: &str) -> Result<PointCloud<T>> {
    if text.trim_start().starts_with("ply") {
        parse_ply(text)
    } else {
        parse_xyzn(text)
    }
}

pub fn parse_labels(text: &str) -> Result<Vec<i64>> {
    let mut out = Vec::new();
    for (no, raw) in text.lines().enumerate() {
        let s = raw.trim();
        if s.is_empty() {
            continue;
        }
        out.push(s.parse().map_err(|_| parse_err(no + 1, format!("invalid label {s:?}")))?);
    }
    Ok(out)
}

pub fn write_labels(labels: &[i64]) -> String {
    let mut out = String::with_capacity(labels.len() * 3);
    for l in labels {
        let _ = writeln!(out, "{l}");
    }
    out
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Writes `contents` to a sibling temp file and renames it into place.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    fs::write(&tmp, contents).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn load_cloud<T: Real>(path: &Path) -> Result<PointCloud<T>> {
    let text = read(path)?;
    let is_ply = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("ply"));
    if is_ply {
        parse_ply(&text)
    } else {
        parse_cloud(&text)
    }
}

pub fn save_xyzn<T: Real>(path: &Path, cloud: &PointCloud<T>) -> Result<()> {
    write_atomic(path, write_xyzn(cloud).as_bytes())
}

pub fn load_labels(path: &Path) -> Result<Vec<i64>> {
    parse_labels(&read(path)?)
}

pub fn save_labels(path: &Path, labels: &[i64]) -> Result<()> {
    write_atomic(path, write_labels(labels).as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn xyzn_round_trip_is_exact() {
        let c = PointCloud::new(
            vec![[0.1, -2.5, 1e-7], [1.0 / 3.0, 2.0, 3.0]],
            vec![[0.0, 0.0, 1.0], [0.6, 0.8, 0.0]],
        )
        .unwrap();
        let back: PointCloud<f64> = parse_xyzn(&write_xyzn(&c)).unwrap();
        assert_eq!(back, c);
        let ply: PointCloud<f64> = parse_cloud(&write_ply(&c)).unwrap();
        assert_eq!(ply, c);
    }

    #[test]
    fn xyzn_error_reports_line() {
        let mut text = String::new();
        for _ in 0..16 {
            text.push_str("0 0 0 0 0 1\n");
        }
        text.push_str("0 0 zero 0 0 1\n");
        match parse_xyzn::<f64>(&text) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 17),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn ply_with_extra_properties_and_faces() {
        let text = "ply\nformat ascii 1.0\ncomment hi\nelement vertex 2\nproperty float nx\nproperty float ny\nproperty float nz\nproperty float x\nproperty float y\nproperty float z\nproperty uchar red\nelement face 1\nproperty list uchar int vertex_indices\nend_header\n0 0 1 1 2 3 255\n1 0 0 4 5 6 0\n3 0 1 1\n";
        let c: PointCloud<f64> = parse_ply(text).unwrap();
        assert_eq!(c.positions(), &[[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]);
        assert_eq!(c.normals(), &[[0.0, 0.0, 1.0], [1.0, 0.0, 0.0]]);
        assert!(parse_ply::<f64>("ply\nformat binary_little_endian 1.0\nend_header\n").is_err());
    }

    #[test]
    fn labels_round_trip() {
        let l = vec![0, 1, -1, 7];
        assert_eq!(parse_labels(&write_labels(&l)).unwrap(), l);
        assert!(parse_labels("1\nx\n").is_err());
    }
}
