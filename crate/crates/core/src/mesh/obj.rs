//! Wavefront OBJ subset: `v`, `vn` and `f` records.
//!
//! Faces may be written as `v`, `v/vt`, `v//vn` or `v/vt/vn`; texture
//! coordinates, materials, groups and everything else are skipped. Polygons are
//! fan-triangulated around their first corner. When every face corner names a
//! normal, per-vertex normals come from the file (averaged if a vertex is given
//! several); otherwise area-weighted normals are computed.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::{area_weighted_normals, normalize_mesh, Mesh, MeshError, Vec3};

pub fn load_obj(path: impl AsRef<Path>) -> Result<Mesh, MeshError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    parse_obj(&text, name)
}

/// Loads and normalizes every `.obj` file in `dir`, sorted by file name.
/// Object ids are the file stems.
pub fn load_mesh_dir(dir: impl AsRef<Path>) -> Result<Vec<Mesh>, MeshError> {
    let mut paths: Vec<_> = fs::read_dir(dir.as_ref())?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("obj")))
        .collect();
    paths.sort();
    paths
        .iter()
        .map(|p| {
            let m = load_obj(p)?;
            let name = m.name.clone();
            let mut n = normalize_mesh(&m)?;
            n.name = name;
            Ok(n)
        })
        .collect()
}

fn parse_error(line: usize, message: impl Into<String>) -> MeshError {
    MeshError::Parse {
        line,
        message: message.into(),
    }
}

fn parse_floats<const N: usize>(
    fields: &mut std::str::SplitWhitespace<'_>,
    line: usize,
) -> Result<[f64; N], MeshError> {
    let mut out = [0.0; N];
    for slot in &mut out {
        let tok = fields
            .next()
            .ok_or_else(|| parse_error(line, format!("expected {N} coordinates")))?;
        let v: f64 = tok
            .parse()
            .map_err(|_| parse_error(line, format!("bad number {tok:?}")))?;
        if !v.is_finite() {
            return Err(parse_error(line, format!("non-finite number {tok:?}")));
        }
        *slot = v;
    }
    Ok(out)
}

/// Resolves a 1-based (or negative, relative) OBJ index against `count` records.
fn resolve(tok: &str, count: usize, line: usize) -> Result<usize, MeshError> {
    let raw: i64 = tok
        .parse()
        .map_err(|_| parse_error(line, format!("bad index {tok:?}")))?;
    let idx = match raw {
        0 => return Err(parse_error(line, "index 0 is not valid in OBJ")),
        r if r > 0 => r - 1,
        r => count as i64 + r,
    };
    if idx < 0 || idx as usize >= count {
        return Err(parse_error(
            line,
            format!("index {raw} out of range (have {count})"),
        ));
    }
    Ok(idx as usize)
}

pub fn parse_obj(text: &str, name: impl Into<String>) -> Result<Mesh, MeshError> {
    let mut vertices = Vec::new();
    let mut file_normals = Vec::new();
    let mut triangles = Vec::new();
    // (vertex, normal) pairs for every face corner that names a normal.
    let mut corner_normals = Vec::new();
    let mut all_corners_have_normals = true;

    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("");
        let mut fields = content.split_whitespace();
        match fields.next() {
            Some("v") => {
                let [x, y, z] = parse_floats::<3>(&mut fields, line)?;
                vertices.push(Vec3::new(x, y, z));
            }
            Some("vn") => {
                let [x, y, z] = parse_floats::<3>(&mut fields, line)?;
                file_normals.push(Vec3::new(x, y, z));
            }
            Some("f") => {
                let mut corners = Vec::new();
                for tok in fields {
                    let mut parts = tok.split('/');
                    let v = resolve(parts.next().unwrap_or(""), vertices.len(), line)?;
                    let _texcoord = parts.next();
                    match parts.next() {
                        Some(n) if !n.is_empty() => {
                            let n = resolve(n, file_normals.len(), line)?;
                            corner_normals.push((v, n));
                        }
                        _ => all_corners_have_normals = false,
                    }
                    corners.push(v as u32);
                }
                if corners.len() < 3 {
                    return Err(parse_error(line, "face needs at least 3 vertices"));
                }
                for k in 1..corners.len() - 1 {
                    triangles.push([corners[0], corners[k], corners[k + 1]]);
                }
            }
            _ => {}
        }
    }

    if vertices.is_empty() || triangles.is_empty() {
        return Err(MeshError::Empty);
    }

    let computed = area_weighted_normals(&vertices, &triangles);
    let normals = if all_corners_have_normals && !corner_normals.is_empty() {
        let mut acc = vec![Vec3::zeros(); vertices.len()];
        for &(v, n) in &corner_normals {
            acc[v] += file_normals[n];
        }
        acc.into_iter()
            .zip(computed)
            .map(|(n, fallback)| {
                let len = n.norm();
                if len > 1e-12 {
                    n / len
                } else {
                    fallback
                }
            })
            .collect()
    } else {
        computed
    };

    Ok(Mesh {
        name: name.into(),
        vertices,
        normals,
        triangles,
    })
}

pub fn write_obj(mesh: &Mesh, out: &mut impl Write) -> std::io::Result<()> {
    writeln!(out, "# {}", mesh.name)?;
    for v in &mesh.vertices {
        writeln!(out, "v {} {} {}", v.x, v.y, v.z)?;
    }
    for n in &mesh.normals {
        writeln!(out, "vn {} {} {}", n.x, n.y, n.z)?;
    }
    for t in &mesh.triangles {
        let [a, b, c] = t.map(|i| i + 1);
        writeln!(out, "f {a}//{a} {b}//{b} {c}//{c}")?;
    }
    Ok(())
}

pub fn save_obj(mesh: &Mesh, path: impl AsRef<Path>) -> Result<(), MeshError> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    write_obj(mesh, &mut out)?;
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_triangle() {
        let m = parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n", "tri").unwrap();
        assert_eq!(m.vertices.len(), 3);
        assert_eq!(m.triangles, vec![[0, 1, 2]]);
        for n in &m.normals {
            assert!((n - Vec3::z()).norm() < 1e-12);
        }
    }

    #[test]
    fn quad_is_fan_triangulated() {
        let m = parse_obj("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n", "quad").unwrap();
        assert_eq!(m.triangles, vec![[0, 1, 2], [0, 2, 3]]);
    }

    const CUBE: &str = "\
v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nv 0 0 1\nv 1 0 1\nv 1 1 1\nv 0 1 1
f 1 4 3 2\nf 5 6 7 8\nf 1 2 6 5\nf 4 8 7 3\nf 1 5 8 4\nf 2 3 7 6
";

    #[test]
    fn unit_cube_normals_match_hand_computed() {
        // Face-split cube: each corner of each face gets its own vertex, so the
        // area-weighted normal of every vertex equals its face normal.
        let mut text = String::new();
        let quads: [[usize; 4]; 6] = [
            [1, 4, 3, 2],
            [5, 6, 7, 8],
            [1, 2, 6, 5],
            [4, 8, 7, 3],
            [1, 5, 8, 4],
            [2, 3, 7, 6],
        ];
        let corners: Vec<Vec3> = CUBE
            .lines()
            .filter(|l| l.starts_with("v "))
            .map(|l| {
                let p: Vec<f64> = l[2..].split(' ').map(|x| x.parse().unwrap()).collect();
                Vec3::new(p[0], p[1], p[2])
            })
            .collect();
        for q in &quads {
            for &c in q {
                let v = corners[c - 1];
                text.push_str(&format!("v {} {} {}\n", v.x, v.y, v.z));
            }
        }
        for f in 0..6 {
            let b = f * 4 + 1;
            text.push_str(&format!("f {} {} {} {}\n", b, b + 1, b + 2, b + 3));
        }
        let m = parse_obj(&text, "cube").unwrap();
        assert_eq!(m.triangles.len(), 12);
        let expected = [
            Vec3::new(0.0, 0.0, -1.0),
            Vec3::new(0.0, 0.0, 1.0),
            Vec3::new(0.0, -1.0, 0.0),
            Vec3::new(0.0, 1.0, 0.0),
            Vec3::new(-1.0, 0.0, 0.0),
            Vec3::new(1.0, 0.0, 0.0),
        ];
        for (i, n) in m.normals.iter().enumerate() {
            assert!((n - expected[i / 4]).norm() < 1e-12, "vertex {i}: {n:?}");
        }

        // Shared-vertex version: 8 vertices, 12 triangles, corner normals point
        // along the body diagonal.
        let shared = parse_obj(CUBE, "cube").unwrap();
        assert_eq!(shared.triangles.len(), 12);
        let corner = shared.normals[6];
        let d = 1.0 / 3f64.sqrt();
        assert!((corner - Vec3::new(d, d, d)).norm() < 1e-12);
    }

    #[test]
    fn file_normals_are_used() {
        let text = "v 0 0 0\nv 1 0 0\nv 0 1 0\nvn 0 0 -2\nf 1//1 2//1 3//1\n";
        let m = parse_obj(text, "t").unwrap();
        assert!((m.normals[0] - Vec3::new(0.0, 0.0, -1.0)).norm() < 1e-12);
        let text = "v 0 0 0\nv 1 0 0\nv 0 1 0\nvt 0 0\nvn 1 0 0\nf 1/1/1 2/1/1 3/1/1\n";
        let m = parse_obj(text, "t").unwrap();
        assert!((m.normals[2] - Vec3::x()).norm() < 1e-12);
    }

    #[test]
    fn negative_indices_and_comments() {
        let m = parse_obj("v 0 0 0 # origin\nv 1 0 0\nv 0 1 0\nf -3 -2 -1\n", "t").unwrap();
        assert_eq!(m.triangles, vec![[0, 1, 2]]);
    }

    #[test]
    fn errors() {
        assert!(matches!(
            parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 4\n", "t"),
            Err(MeshError::Parse { line: 4, .. })
        ));
        assert!(matches!(
            parse_obj("v 0 0\n", "t"),
            Err(MeshError::Parse { line: 1, .. })
        ));
        assert!(matches!(
            parse_obj("v 0 0 x\n", "t"),
            Err(MeshError::Parse { .. })
        ));
        assert!(matches!(
            parse_obj("v 0 0 0\n", "t"),
            Err(MeshError::Empty)
        ));
        assert!(matches!(parse_obj("", "t"), Err(MeshError::Empty)));
    }

    #[test]
    fn write_then_parse() {
        let m = parse_obj(CUBE, "cube").unwrap();
        let mut buf = Vec::new();
        write_obj(&m, &mut buf).unwrap();
        let back = parse_obj(std::str::from_utf8(&buf).unwrap(), "cube").unwrap();
        assert_eq!(back.triangles, m.triangles);
        for (a, b) in back.vertices.iter().zip(&m.vertices) {
            assert_eq!(a, b);
        }
        for (a, b) in back.normals.iter().zip(&m.normals) {
            assert!((a - b).norm() < 1e-12);
        }
    }
}
