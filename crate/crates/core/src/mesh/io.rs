//! Mesh file I/O: ASCII OBJ and binary little-endian PLY.
//!
//! OBJ coordinates are written through f32 (shortest exact decimal), which
//! quantizes to float32 precision; PLY stores float32 bit-exactly.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::Point3;

use super::{MergedScene, TriangleMesh};
use crate::error::{Error, Result};

fn parse_err(path: &Path, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        message: message.into(),
    }
}

/// Reads an OBJ or PLY mesh based on the file extension.
pub fn read_mesh(path: &Path) -> Result<TriangleMesh> {
    match path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase())
        .as_deref()
    {
        Some("obj") => read_obj(path),
        Some("ply") => read_ply(path),
        other => Err(parse_err(
            path,
            format!("unsupported mesh extension {other:?} (expected obj or ply)"),
        )),
    }
}

fn write_obj_vertices<W: Write>(w: &mut W, mesh: &TriangleMesh) -> Result<()> {
    for (i, v) in mesh.vertices.iter().enumerate() {
        match &mesh.vertex_colors {
            Some(colors) => {
                let c = colors[i];
                writeln!(
                    w,
                    "v {} {} {} {} {} {}",
                    v.x as f32, v.y as f32, v.z as f32, c[0], c[1], c[2]
                )?;
            }
            None => writeln!(w, "v {} {} {}", v.x as f32, v.y as f32, v.z as f32)?,
        }
    }
    Ok(())
}

/// Writes a single mesh as ASCII OBJ.
pub fn write_obj(path: &Path, mesh: &TriangleMesh) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_obj_vertices(&mut w, mesh)?;
    for f in &mesh.faces {
        writeln!(&mut w, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes a merged scene as ASCII OBJ with one named group per component.
pub fn write_obj_scene(path: &Path, scene: &MergedScene) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_obj_vertices(&mut w, &scene.mesh)?;
    for c in &scene.components {
        writeln!(&mut w, "g {}", c.label)?;
        for f in &scene.mesh.faces[c.face_offset..c.face_offset + c.face_count] {
            writeln!(&mut w, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads an ASCII OBJ: v records (3 or 6 floats) and f records, which may
/// carry `v/vt/vn` references and are fan-triangulated. Other records are
/// ignored.
pub fn read_obj(path: &Path) -> Result<TriangleMesh> {
    let reader = BufReader::new(File::open(path)?);
    let mut vertices = Vec::new();
    let mut colors: Vec<[f32; 3]> = Vec::new();
    let mut faces = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let mut fields = line.split_whitespace();
        match fields.next() {
            Some("v") => {
                let nums: Vec<f64> = fields
                    .map(|t| {
                        t.parse::<f64>()
                            .map_err(|_| parse_err(path, format!("bad number on line {}", lineno + 1)))
                    })
                    .collect::<Result<_>>()?;
                if nums.len() != 3 && nums.len() != 6 {
                    return Err(parse_err(
                        path,
                        format!("v record on line {} has {} fields", lineno + 1, nums.len()),
                    ));
                }
                vertices.push(Point3::new(nums[0], nums[1], nums[2]));
                if nums.len() == 6 {
                    colors.push([nums[3] as f32, nums[4] as f32, nums[5] as f32]);
                }
            }
            Some("f") => {
                let idx: Vec<u32> = fields
                    .map(|t| {
                        let first = t.split('/').next().unwrap_or("");
                        let i: i64 = first.parse().map_err(|_| {
                            parse_err(path, format!("bad face index on line {}", lineno + 1))
                        })?;
                        if i < 1 {
                            return Err(parse_err(
                                path,
                                format!("non-positive face index on line {}", lineno + 1),
                            ));
                        }
                        Ok((i - 1) as u32)
                    })
                    .collect::<Result<_>>()?;
                if idx.len() < 3 {
                    return Err(parse_err(
                        path,
                        format!("face on line {} has fewer than 3 vertices", lineno + 1),
                    ));
                }
                for k in 1..idx.len() - 1 {
                    faces.push([idx[0], idx[k], idx[k + 1]]);
                }
            }
            _ => {}
        }
    }
    let vertex_colors = if colors.len() == vertices.len() && !colors.is_empty() {
        Some(colors)
    } else {
        None
    };
    let mesh = TriangleMesh {
        vertices,
        faces,
        vertex_colors,
    };
    mesh.validate()
        .map_err(|e| parse_err(path, e.to_string()))?;
    Ok(mesh)
}

/// Writes a binary little-endian PLY; positions are float32, colors (when
/// present) float32 red/green/blue.
pub fn write_ply(path: &Path, mesh: &TriangleMesh) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(&mut w, "ply")?;
    writeln!(&mut w, "format binary_little_endian 1.0")?;
    writeln!(&mut w, "element vertex {}", mesh.vertices.len())?;
    writeln!(&mut w, "property float x")?;
    writeln!(&mut w, "property float y")?;
    writeln!(&mut w, "property float z")?;
    if mesh.vertex_colors.is_some() {
        writeln!(&mut w, "property float red")?;
        writeln!(&mut w, "property float green")?;
        writeln!(&mut w, "property float blue")?;
    }
    writeln!(&mut w, "element face {}", mesh.faces.len())?;
    writeln!(&mut w, "property list uchar uint vertex_indices")?;
    writeln!(&mut w, "end_header")?;
    for (i, v) in mesh.vertices.iter().enumerate() {
        for c in [v.x as f32, v.y as f32, v.z as f32] {
            w.write_all(&c.to_le_bytes())?;
        }
        if let Some(colors) = &mesh.vertex_colors {
            for c in colors[i] {
                w.write_all(&c.to_le_bytes())?;
            }
        }
    }
    for f in &mesh.faces {
        w.write_all(&[3u8])?;
        for i in f {
            w.write_all(&i.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Clone, Copy, PartialEq)]
enum PlyType {
    U8,
    I8,
    U16,
    I16,
    U32,
    I32,
    F32,
    F64,
}

impl PlyType {
    fn parse(token: &str) -> Option<Self> {
        Some(match token {
            "uchar" | "uint8" => PlyType::U8,
            "char" | "int8" => PlyType::I8,
            "ushort" | "uint16" => PlyType::U16,
            "short" | "int16" => PlyType::I16,
            "uint" | "uint32" => PlyType::U32,
            "int" | "int32" => PlyType::I32,
            "float" | "float32" => PlyType::F32,
            "double" | "float64" => PlyType::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            PlyType::U8 | PlyType::I8 => 1,
            PlyType::U16 | PlyType::I16 => 2,
            PlyType::U32 | PlyType::I32 | PlyType::F32 => 4,
            PlyType::F64 => 8,
        }
    }

    fn read_f64<R: Read>(self, r: &mut R) -> std::io::Result<f64> {
        let mut buf = [0u8; 8];
        r.read_exact(&mut buf[..self.size()])?;
        Ok(match self {
            PlyType::U8 => buf[0] as f64,
            PlyType::I8 => buf[0] as i8 as f64,
            PlyType::U16 => u16::from_le_bytes([buf[0], buf[1]]) as f64,
            PlyType::I16 => i16::from_le_bytes([buf[0], buf[1]]) as f64,
            PlyType::U32 => u32::from_le_bytes([buf[0], buf[1], buf[2], buf[3]]) as f64,
            PlyType::I32 => i32::from_le_bytes([buf[0], buf[1], buf[2], buf[3]]) as f64,
            PlyType::F32 => f32::from_le_bytes([buf[0], buf[1], buf[2], buf[3]]) as f64,
            PlyType::F64 => f64::from_le_bytes(buf),
        })
    }
}

/// Reads a binary little-endian PLY. Positions may be float or double;
/// colors (red/green/blue) float or uchar; unknown vertex properties are
/// skipped.
pub fn read_ply(path: &Path) -> Result<TriangleMesh> {
    let mut reader = BufReader::new(File::open(path)?);
    let mut line = String::new();

    let mut read_line = |reader: &mut BufReader<File>| -> Result<String> {
        line.clear();
        if reader.read_line(&mut line)? == 0 {
            return Err(parse_err(path, "unexpected end of header"));
        }
        Ok(line.trim().to_string())
    };

    if read_line(&mut reader)? != "ply" {
        return Err(parse_err(path, "missing ply magic"));
    }
    let format = read_line(&mut reader)?;
    if format != "format binary_little_endian 1.0" {
        return Err(parse_err(
            path,
            format!("unsupported format '{format}' (binary little-endian only)"),
        ));
    }

    struct Element {
        name: String,
        count: usize,
        // (name, type) for scalar, plus optional list header types.
        properties: Vec<(String, PlyType, Option<PlyType>)>,
    }
    let mut elements: Vec<Element> = Vec::new();
    loop {
        let l = read_line(&mut reader)?;
        let mut tok = l.split_whitespace();
        match tok.next() {
            Some("comment") => {}
            Some("element") => {
                let name = tok
                    .next()
                    .ok_or_else(|| parse_err(path, "element without name"))?
                    .to_string();
                let count: usize = tok
                    .next()
                    .and_then(|t| t.parse().ok())
                    .ok_or_else(|| parse_err(path, "element without count"))?;
                elements.push(Element {
                    name,
                    count,
                    properties: Vec::new(),
                });
            }
            Some("property") => {
                let elem = elements
                    .last_mut()
                    .ok_or_else(|| parse_err(path, "property before element"))?;
                let kind = tok
                    .next()
                    .ok_or_else(|| parse_err(path, "property without type"))?;
                if kind == "list" {
                    let count_ty = tok
                        .next()
                        .and_then(PlyType::parse)
                        .ok_or_else(|| parse_err(path, "bad list count type"))?;
                    let item_ty = tok
                        .next()
                        .and_then(PlyType::parse)
                        .ok_or_else(|| parse_err(path, "bad list item type"))?;
                    let name = tok
                        .next()
                        .ok_or_else(|| parse_err(path, "list property without name"))?;
                    elem.properties
                        .push((name.to_string(), item_ty, Some(count_ty)));
                } else {
                    let ty = PlyType::parse(kind)
                        .ok_or_else(|| parse_err(path, format!("unknown type '{kind}'")))?;
                    let name = tok
                        .next()
                        .ok_or_else(|| parse_err(path, "property without name"))?;
                    elem.properties.push((name.to_string(), ty, None));
                }
            }
            Some("end_header") => break,
            other => {
                return Err(parse_err(path, format!("unexpected header token {other:?}")));
            }
        }
    }

    let mut vertices = Vec::new();
    let mut colors: Vec<[f32; 3]> = Vec::new();
    let mut has_colors = false;
    let mut faces = Vec::new();
    for elem in &elements {
        if elem.name == "vertex" {
            has_colors = elem.properties.iter().any(|(n, _, _)| n == "red");
            for _ in 0..elem.count {
                let mut pos = [0.0f64; 3];
                let mut rgb = [0.0f32; 3];
                for (name, ty, list) in &elem.properties {
                    if list.is_some() {
                        return Err(parse_err(path, "list property on vertex element"));
                    }
                    let value = ty.read_f64(&mut reader)?;
                    match name.as_str() {
                        "x" => pos[0] = value,
                        "y" => pos[1] = value,
                        "z" => pos[2] = value,
                        "red" | "green" | "blue" => {
                            let c = if *ty == PlyType::U8 {
                                (value / 255.0) as f32
                            } else {
                                value as f32
                            };
                            let k = match name.as_str() {
                                "red" => 0,
                                "green" => 1,
                                _ => 2,
                            };
                            rgb[k] = c;
                        }
                        _ => {}
                    }
                }
                vertices.push(Point3::new(pos[0], pos[1], pos[2]));
                if has_colors {
                    colors.push(rgb);
                }
            }
        } else if elem.name == "face" {
            let (_, item_ty, count_ty) = elem
                .properties
                .first()
                .ok_or_else(|| parse_err(path, "face element without properties"))?;
            let count_ty =
                count_ty.ok_or_else(|| parse_err(path, "face property is not a list"))?;
            for _ in 0..elem.count {
                let n = count_ty.read_f64(&mut reader)? as usize;
                let mut idx = Vec::with_capacity(n);
                for _ in 0..n {
                    idx.push(item_ty.read_f64(&mut reader)? as u32);
                }
                if n < 3 {
                    return Err(parse_err(path, "face with fewer than 3 vertices"));
                }
                for k in 1..n - 1 {
                    faces.push([idx[0], idx[k], idx[k + 1]]);
                }
            }
        } else {
            // Skip unknown fixed-size elements.
            let row: usize = elem
                .properties
                .iter()
                .map(|(_, ty, list)| {
                    if list.is_some() {
                        usize::MAX
                    } else {
                        ty.size()
                    }
                })
                .sum();
            if row == usize::MAX {
                return Err(parse_err(
                    path,
                    format!("cannot skip element '{}' with list properties", elem.name),
                ));
            }
            let mut sink = vec![0u8; row * elem.count];
            reader.read_exact(&mut sink)?;
        }
    }

    let mesh = TriangleMesh {
        vertices,
        faces,
        vertex_colors: has_colors.then_some(colors),
    };
    mesh.validate()
        .map_err(|e| parse_err(path, e.to_string()))?;
    Ok(mesh)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::merge_scene;

    fn sample_mesh(colors: bool) -> TriangleMesh {
        TriangleMesh {
            vertices: vec![
                Point3::new(0.0, 0.0, 0.0),
                Point3::new(1.5, 0.25, -2.0),
                Point3::new(0.1, 1.0, 0.333),
                Point3::new(-0.7, 0.0, 1e-7),
            ],
            faces: vec![[0, 1, 2], [1, 3, 2]],
            vertex_colors: colors.then(|| {
                vec![
                    [0.0, 0.5, 1.0],
                    [0.25, 0.25, 0.25],
                    [1.0, 0.0, 0.125],
                    [0.6, 0.7, 0.8],
                ]
            }),
        }
    }

    #[test]
    fn obj_round_trip_at_f32_precision() {
        let dir = tempfile::tempdir().unwrap();
        for colors in [false, true] {
            let path = dir.path().join(format!("m_{colors}.obj"));
            let mesh = sample_mesh(colors);
            write_obj(&path, &mesh).unwrap();
            let back = read_obj(&path).unwrap();
            assert_eq!(back.faces, mesh.faces);
            assert_eq!(back.vertex_colors, mesh.vertex_colors);
            for (a, b) in back.vertices.iter().zip(mesh.vertices.iter()) {
                for k in 0..3 {
                    assert_eq!(a[k] as f32, b[k] as f32);
                }
            }
        }
    }

    #[test]
    fn ply_round_trip_is_f32_exact() {
        let dir = tempfile::tempdir().unwrap();
        for colors in [false, true] {
            let path = dir.path().join(format!("m_{colors}.ply"));
            let mesh = sample_mesh(colors);
            write_ply(&path, &mesh).unwrap();
            let back = read_ply(&path).unwrap();
            assert_eq!(back.faces, mesh.faces);
            assert_eq!(back.vertex_colors, mesh.vertex_colors);
            for (a, b) in back.vertices.iter().zip(mesh.vertices.iter()) {
                for k in 0..3 {
                    assert_eq!(a[k] as f32, b[k] as f32, "exact float32 round trip");
                }
            }
        }
    }

    #[test]
    fn obj_reads_slash_faces_and_ignores_extras() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("slash.obj");
        std::fs::write(
            &path,
            "# comment\nvn 0 0 1\nv 0 0 0\nv 1 0 0\nv 0 1 0\nv 1 1 0\nf 1/1/1 2/2/1 3/3/1 4/4/1\n",
        )
        .unwrap();
        let mesh = read_obj(&path).unwrap();
        assert_eq!(mesh.vertices.len(), 4);
        // The quad fan-triangulates into two faces.
        assert_eq!(mesh.faces, vec![[0, 1, 2], [0, 2, 3]]);
    }

    #[test]
    fn scene_export_groups_by_component() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scene.obj");
        let scene = merge_scene(&[
            ("thing_0".into(), sample_mesh(false)),
            ("background".into(), sample_mesh(false)),
        ]);
        write_obj_scene(&path, &scene).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.contains("g thing_0"));
        assert!(text.contains("g background"));
        let back = read_obj(&path).unwrap();
        assert_eq!(back.vertices.len(), 8);
        assert_eq!(back.faces.len(), 4);
    }

    #[test]
    fn read_mesh_dispatches_on_extension() {
        let dir = tempfile::tempdir().unwrap();
        let obj = dir.path().join("d.obj");
        let ply = dir.path().join("d.ply");
        write_obj(&obj, &sample_mesh(false)).unwrap();
        write_ply(&ply, &sample_mesh(false)).unwrap();
        assert!(read_mesh(&obj).is_ok());
        assert!(read_mesh(&ply).is_ok());
        assert!(read_mesh(&dir.path().join("d.stl")).is_err());
    }
}
