//! ASCII PCD v0.7 reading and writing.
//!
//! Only `DATA ascii` is supported. The reader picks `x y z` and, when all
//! three are present, `normal_x normal_y normal_z`; any other fields are
//! skipped. `HEIGHT > 1` yields an organized cloud. The translation part of
//! `VIEWPOINT` becomes the cloud viewpoint.

use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::path::Path;

use super::PointCloud;
use crate::error::{Error, Result};
use crate::geometry::{Point3, Vec3};

pub fn write_pcd<W: Write>(cloud: &PointCloud, mut out: W) -> Result<()> {
    let with_normals = cloud.normals.is_some();
    let (width, height) = cloud.organized.unwrap_or((cloud.len(), 1));
    let mut header = String::new();
    let _ = writeln!(header, "# .PCD v0.7 - Point Cloud Data file format");
    let _ = writeln!(header, "VERSION 0.7");
    if with_normals {
        let _ = writeln!(header, "FIELDS x y z normal_x normal_y normal_z");
        let _ = writeln!(header, "SIZE 8 8 8 8 8 8\nTYPE F F F F F F\nCOUNT 1 1 1 1 1 1");
    } else {
        let _ = writeln!(header, "FIELDS x y z");
        let _ = writeln!(header, "SIZE 8 8 8\nTYPE F F F\nCOUNT 1 1 1");
    }
    let _ = writeln!(header, "WIDTH {width}\nHEIGHT {height}");
    let v = cloud.viewpoint;
    let _ = writeln!(header, "VIEWPOINT {} {} {} 1 0 0 0", v.x, v.y, v.z);
    let _ = writeln!(header, "POINTS {}\nDATA ascii", cloud.len());
    out.write_all(header.as_bytes())?;
    for (i, p) in cloud.points.iter().enumerate() {
        let mut line = format!("{} {} {}", fmt(p.x), fmt(p.y), fmt(p.z));
        if let Some(n) = &cloud.normals {
            let _ = write!(line, " {} {} {}", fmt(n[i].x), fmt(n[i].y), fmt(n[i].z));
        }
        line.push('\n');
        out.write_all(line.as_bytes())?;
    }
    Ok(())
}

fn fmt(v: f64) -> String {
    if v.is_nan() {
        "nan".to_string()
    } else {
        format!("{v}")
    }
}

pub fn save_pcd(cloud: &PointCloud, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_pcd(cloud, std::io::BufWriter::new(file))
}

pub fn load_pcd(path: &Path) -> Result<PointCloud> {
    let file = std::fs::File::open(path)?;
    read_pcd(std::io::BufReader::new(file))
}

pub fn read_pcd<R: BufRead>(input: R) -> Result<PointCloud> {
    let mut fields: Vec<String> = Vec::new();
    let mut counts: Vec<usize> = Vec::new();
    let mut width = None;
    let mut height = 1usize;
    let mut points_decl = None;
    let mut viewpoint = Point3::origin();
    let mut lines = input.lines().enumerate();
    let err = |line: usize, msg: &str| Error::Pcd { line: line + 1, msg: msg.to_string() };

    // header
    loop {
        let Some((no, line)) = lines.next() else {
            return Err(err(0, "missing DATA line"));
        };
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut tok = line.split_whitespace();
        let key = tok.next().unwrap_or_default().to_ascii_uppercase();
        let rest: Vec<&str> = tok.collect();
        let parse_usize = |s: &str| s.parse::<usize>().map_err(|_| err(no, "expected an integer"));
        match key.as_str() {
            "VERSION" | "SIZE" | "TYPE" => {}
            "FIELDS" => fields = rest.iter().map(|s| s.to_string()).collect(),
            "COUNT" => counts = rest.iter().map(|s| parse_usize(s)).collect::<Result<_>>()?,
            "WIDTH" => width = Some(parse_usize(rest.first().ok_or_else(|| err(no, "WIDTH value"))?)?),
            "HEIGHT" => height = parse_usize(rest.first().ok_or_else(|| err(no, "HEIGHT value"))?)?,
            "POINTS" => points_decl = Some(parse_usize(rest.first().ok_or_else(|| err(no, "POINTS value"))?)?),
            "VIEWPOINT" => {
                let v: Vec<f64> = rest.iter().take(3).map(|s| s.parse::<f64>()).collect::<Result<_, _>>().map_err(|_| err(no, "bad VIEWPOINT"))?;
                if v.len() == 3 {
                    viewpoint = Point3::new(v[0], v[1], v[2]);
                }
            }
            "DATA" => {
                if rest.first().map(|s| s.to_ascii_lowercase()) != Some("ascii".into()) {
                    return Err(err(no, "only DATA ascii is supported"));
                }
                break;
            }
            _ => return Err(err(no, &format!("unknown header key {key}"))),
        }
    }
    if counts.is_empty() {
        counts = vec![1; fields.len()];
    }
    if counts.len() != fields.len() {
        return Err(err(0, "COUNT and FIELDS disagree"));
    }
    // column offset of each field
    let mut offsets = Vec::with_capacity(fields.len());
    let mut acc = 0;
    for c in &counts {
        offsets.push(acc);
        acc += c;
    }
    let columns = acc;
    let col = |name: &str| fields.iter().position(|f| f == name).map(|i| offsets[i]);
    let (Some(cx), Some(cy), Some(cz)) = (col("x"), col("y"), col("z")) else {
        return Err(err(0, "FIELDS must contain x y z"));
    };
    let normal_cols = match (col("normal_x"), col("normal_y"), col("normal_z")) {
        (Some(a), Some(b), Some(c)) => Some((a, b, c)),
        _ => None,
    };

    let mut points = Vec::new();
    let mut normals = Vec::new();
    for (no, line) in lines {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(|s| s.parse::<f64>().map_err(|_| err(no, "bad number")))
            .collect::<Result<_>>()?;
        if vals.len() < columns {
            return Err(err(no, "too few values on data line"));
        }
        points.push(Point3::new(vals[cx], vals[cy], vals[cz]));
        if let Some((a, b, c)) = normal_cols {
            normals.push(Vec3::new(vals[a], vals[b], vals[c]));
        }
    }
    if let Some(n) = points_decl {
        if n != points.len() {
            return Err(err(0, &format!("POINTS declares {n}, found {}", points.len())));
        }
    }
    let width = width.unwrap_or(points.len());
    if width * height != points.len() {
        return Err(err(0, "WIDTH x HEIGHT does not match point count"));
    }
    let mut cloud = PointCloud::new(points, "world").with_viewpoint(viewpoint);
    if normal_cols.is_some() {
        cloud.normals = Some(normals);
    }
    if height > 1 {
        cloud.organized = Some((width, height));
    }
    Ok(cloud)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn reads_organized_header_with_extra_fields() {
        let text = "# .PCD v0.7\nVERSION 0.7\nFIELDS x y z rgb\nSIZE 4 4 4 4\nTYPE F F F U\nCOUNT 1 1 1 1\n\
                    WIDTH 2\nHEIGHT 2\nVIEWPOINT 0 0 1 1 0 0 0\nPOINTS 4\nDATA ascii\n\
                    0 0 0 1\nnan nan nan 0\n1 0 0 2\n1 1 0 3\n";
        let cloud = read_pcd(text.as_bytes()).unwrap();
        assert_eq!(cloud.organized, Some((2, 2)));
        assert_eq!(cloud.valid_count(), 3);
        assert_eq!(cloud.viewpoint, Point3::new(0.0, 0.0, 1.0));
        assert!(cloud.normals.is_none());
    }

    #[test]
    fn rejects_binary_data() {
        let text = "VERSION 0.7\nFIELDS x y z\nWIDTH 1\nHEIGHT 1\nPOINTS 1\nDATA binary\n";
        assert!(read_pcd(text.as_bytes()).is_err());
    }

    #[test]
    fn empty_cloud_parses() {
        let text = "VERSION 0.7\nFIELDS x y z\nWIDTH 0\nHEIGHT 1\nPOINTS 0\nDATA ascii\n";
        assert!(read_pcd(text.as_bytes()).unwrap().is_empty());
    }

    proptest! {
        #[test]
        fn write_read_round_trip(coords in prop::collection::vec((-10.0..10.0f64, -10.0..10.0f64, -10.0..10.0f64), 1..40), with_normals in any::<bool>()) {
            let points: Vec<Point3> = coords.iter().map(|&(x, y, z)| Point3::new(x, y, z)).collect();
            let mut cloud = PointCloud::new(points.clone(), "world").with_viewpoint(Point3::new(0.5, -1.0, 2.0));
            if with_normals {
                cloud.normals = Some(points.iter().map(|p| Vec3::new(p.y, p.z, p.x)).collect());
            }
            let mut buf = Vec::new();
            write_pcd(&cloud, &mut buf).unwrap();
            let back = read_pcd(buf.as_slice()).unwrap();
            prop_assert_eq!(back, cloud);
        }
    }
}
