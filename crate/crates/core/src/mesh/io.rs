//! OFF, OBJ and ASCII PLY readers and writers.
//!
//! All readers keep the file's vertex order. Face indices are stored
//! 0-based in memory; OBJ files are 1-based on disk.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use nalgebra::Point3;

use super::Mesh;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeshFormat {
    Off,
    Obj,
    PlyAscii,
}

impl MeshFormat {
    pub fn from_path(path: &Path) -> Result<Self> {
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| e.to_ascii_lowercase())
            .unwrap_or_default();
        ext.parse()
    }

    pub fn extension(self) -> &'static str {
        match self {
            MeshFormat::Off => "off",
            MeshFormat::Obj => "obj",
            MeshFormat::PlyAscii => "ply",
        }
    }
}

impl FromStr for MeshFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "off" => Ok(MeshFormat::Off),
            "obj" => Ok(MeshFormat::Obj),
            "ply" | "ply-ascii" => Ok(MeshFormat::PlyAscii),
            other => Err(Error::UnsupportedFormat(format!("mesh format '{other}'"))),
        }
    }
}

fn mesh_name(path: &Path) -> String {
    path.file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("mesh")
        .to_string()
}

pub fn load_mesh(path: impl AsRef<Path>, format: MeshFormat) -> Result<Mesh> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let name = mesh_name(path);
    if format == MeshFormat::PlyAscii {
        return parse_ply(&bytes, name);
    }
    let text = String::from_utf8(bytes)
        .map_err(|_| Error::parse(0, "file is not valid UTF-8 text"))?;
    match format {
        MeshFormat::Off => parse_off(&text, name),
        MeshFormat::Obj => parse_obj(&text, name),
        MeshFormat::PlyAscii => unreachable!(),
    }
}

/// Loads a mesh choosing the format from the file extension.
pub fn load_mesh_auto(path: impl AsRef<Path>) -> Result<Mesh> {
    let format = MeshFormat::from_path(path.as_ref())?;
    load_mesh(path, format)
}

pub fn save_mesh(mesh: &Mesh, path: impl AsRef<Path>, format: MeshFormat) -> Result<()> {
    let path = path.as_ref();
    let text = match format {
        MeshFormat::Off => write_off(mesh),
        MeshFormat::Obj => write_obj(mesh),
        MeshFormat::PlyAscii => write_ply(mesh),
    };
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Non-empty, non-comment lines with their 1-based line numbers.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().filter_map(|(i, l)| {
        let l = l.split('#').next().unwrap_or("").trim();
        (!l.is_empty()).then_some((i + 1, l))
    })
}

fn parse_num<T: FromStr>(tok: Option<&str>, line: usize, what: &str) -> Result<T> {
    let tok = tok.ok_or_else(|| Error::parse(line, format!("missing {what}")))?;
    tok.parse()
        .map_err(|_| Error::parse(line, format!("cannot parse {what} from '{tok}'")))
}

fn parse_off(text: &str, name: String) -> Result<Mesh> {
    let mut lines = content_lines(text);
    let (hline, header) = lines.next().ok_or_else(|| Error::parse(1, "empty file"))?;
    let mut toks = header.split_whitespace();
    if toks.next() != Some("OFF") {
        return Err(Error::parse(hline, "expected 'OFF' header"));
    }
    // counts may follow the keyword on the same line
    let rest: Vec<&str> = toks.collect();
    let (cline, counts) = if rest.is_empty() {
        let (l, s) = lines
            .next()
            .ok_or_else(|| Error::parse(hline, "missing count line"))?;
        (l, s.split_whitespace().collect::<Vec<_>>())
    } else {
        (hline, rest)
    };
    let mut it = counts.into_iter();
    let n: usize = parse_num(it.next(), cline, "vertex count")?;
    let m: usize = parse_num(it.next(), cline, "face count")?;

    let mut vertices = Vec::with_capacity(n);
    for _ in 0..n {
        let (l, s) = lines
            .next()
            .ok_or_else(|| Error::parse(0, "unexpected end of file in vertex list"))?;
        let mut t = s.split_whitespace();
        let x = parse_num(t.next(), l, "x")?;
        let y = parse_num(t.next(), l, "y")?;
        let z = parse_num(t.next(), l, "z")?;
        vertices.push(Point3::new(x, y, z));
    }
    let mut triangles = Vec::with_capacity(m);
    for _ in 0..m {
        let (l, s) = lines
            .next()
            .ok_or_else(|| Error::parse(0, "unexpected end of file in face list"))?;
        let mut t = s.split_whitespace();
        let k: usize = parse_num(t.next(), l, "face arity")?;
        if k != 3 {
            return Err(Error::parse(l, format!("only triangles are supported, got {k}-gon")));
        }
        let tri = [
            parse_num(t.next(), l, "index")?,
            parse_num(t.next(), l, "index")?,
            parse_num(t.next(), l, "index")?,
        ];
        triangles.push(tri);
    }
    Mesh::new(name, vertices, triangles)
}

fn parse_obj(text: &str, name: String) -> Result<Mesh> {
    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    for (l, s) in content_lines(text) {
        let mut t = s.split_whitespace();
        match t.next() {
            Some("v") => {
                let x = parse_num(t.next(), l, "x")?;
                let y = parse_num(t.next(), l, "y")?;
                let z = parse_num(t.next(), l, "z")?;
                vertices.push(Point3::new(x, y, z));
            }
            Some("f") => {
                let refs: Vec<&str> = t.collect();
                if refs.len() != 3 {
                    return Err(Error::parse(l, format!("only triangles are supported, got {} corners", refs.len())));
                }
                let mut tri = [0usize; 3];
                for (slot, r) in tri.iter_mut().zip(&refs) {
                    let idx: i64 = parse_num(r.split('/').next(), l, "face index")?;
                    *slot = match idx {
                        i if i > 0 => (i - 1) as usize,
                        i if i < 0 => {
                            let abs = vertices.len() as i64 + i;
                            if abs < 0 {
                                return Err(Error::Validation(format!("line {l}: relative index {i} out of range")));
                            }
                            abs as usize
                        }
                        _ => return Err(Error::parse(l, "OBJ indices are 1-based; got 0")),
                    };
                }
                triangles.push(tri);
            }
            _ => {}
        }
    }
    Mesh::new(name, vertices, triangles)
}

struct PlyElement {
    name: String,
    count: usize,
    properties: Vec<String>,
    is_list: bool,
}

fn parse_ply(bytes: &[u8], name: String) -> Result<Mesh> {
    // Header is ASCII in every PLY flavor; locate its end before decoding.
    let marker = b"end_header";
    let end = bytes
        .windows(marker.len())
        .position(|w| w == marker)
        .ok_or_else(|| Error::parse(0, "missing end_header"))?;
    let header = std::str::from_utf8(&bytes[..end])
        .map_err(|_| Error::parse(0, "PLY header is not ASCII"))?;
    let mut header_lines = header.lines().enumerate();
    match header_lines.next() {
        Some((_, l)) if l.trim() == "ply" => {}
        _ => return Err(Error::parse(1, "expected 'ply' magic")),
    }
    let mut elements: Vec<PlyElement> = Vec::new();
    let mut saw_format = false;
    for (i, line) in header_lines {
        let mut t = line.split_whitespace();
        match t.next() {
            Some("format") => {
                let fmt = t.next().unwrap_or("");
                if fmt != "ascii" {
                    return Err(Error::UnsupportedFormat(format!("PLY format '{fmt}' (only ascii)")));
                }
                saw_format = true;
            }
            Some("element") => {
                let ename = t.next().unwrap_or("").to_string();
                let count = parse_num(t.next(), i + 1, "element count")?;
                elements.push(PlyElement {
                    name: ename,
                    count,
                    properties: Vec::new(),
                    is_list: false,
                });
            }
            Some("property") => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| Error::parse(i + 1, "property before element"))?;
                let toks: Vec<&str> = t.collect();
                if toks.first() == Some(&"list") {
                    el.is_list = true;
                }
                el.properties.push(toks.last().unwrap_or(&"").to_string());
            }
            _ => {}
        }
    }
    if !saw_format {
        return Err(Error::parse(0, "missing format line"));
    }
    let header_line_count = header.lines().count() + 1;
    let body = std::str::from_utf8(&bytes[end + marker.len()..])
        .map_err(|_| Error::parse(header_line_count, "PLY body is not text"))?;
    let mut lines = body
        .lines()
        .enumerate()
        .map(|(i, l)| (i + header_line_count, l.trim()))
        .filter(|(_, l)| !l.is_empty());

    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    for el in &elements {
        match el.name.as_str() {
            "vertex" => {
                let pos = |p: &str| {
                    el.properties
                        .iter()
                        .position(|q| q == p)
                        .ok_or_else(|| Error::parse(0, format!("vertex element lacks '{p}'")))
                };
                let (ix, iy, iz) = (pos("x")?, pos("y")?, pos("z")?);
                for _ in 0..el.count {
                    let (l, s) = lines
                        .next()
                        .ok_or_else(|| Error::parse(0, "unexpected end of vertex data"))?;
                    let toks: Vec<&str> = s.split_whitespace().collect();
                    vertices.push(Point3::new(
                        parse_num(toks.get(ix).copied(), l, "x")?,
                        parse_num(toks.get(iy).copied(), l, "y")?,
                        parse_num(toks.get(iz).copied(), l, "z")?,
                    ));
                }
            }
            "face" => {
                if !el.is_list {
                    return Err(Error::parse(0, "face element must be a list property"));
                }
                for _ in 0..el.count {
                    let (l, s) = lines
                        .next()
                        .ok_or_else(|| Error::parse(0, "unexpected end of face data"))?;
                    let mut t = s.split_whitespace();
                    let k: usize = parse_num(t.next(), l, "face arity")?;
                    if k != 3 {
                        return Err(Error::parse(l, format!("only triangles are supported, got {k}-gon")));
                    }
                    triangles.push([
                        parse_num(t.next(), l, "index")?,
                        parse_num(t.next(), l, "index")?,
                        parse_num(t.next(), l, "index")?,
                    ]);
                }
            }
            _ => {
                for _ in 0..el.count {
                    lines.next();
                }
            }
        }
    }
    Mesh::new(name, vertices, triangles)
}

fn write_off(mesh: &Mesh) -> String {
    let mut s = String::new();
    writeln!(s, "OFF").unwrap();
    writeln!(s, "{} {} 0", mesh.n_vertices(), mesh.n_triangles()).unwrap();
    for p in mesh.vertices() {
        writeln!(s, "{} {} {}", p.x, p.y, p.z).unwrap();
    }
    for t in mesh.triangles() {
        writeln!(s, "3 {} {} {}", t[0], t[1], t[2]).unwrap();
    }
    s
}

fn write_obj(mesh: &Mesh) -> String {
    let mut s = String::new();
    for p in mesh.vertices() {
        writeln!(s, "v {} {} {}", p.x, p.y, p.z).unwrap();
    }
    for t in mesh.triangles() {
        writeln!(s, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1).unwrap();
    }
    s
}

fn write_ply(mesh: &Mesh) -> String {
    let mut s = String::new();
    writeln!(s, "ply\nformat ascii 1.0").unwrap();
    writeln!(s, "element vertex {}", mesh.n_vertices()).unwrap();
    writeln!(s, "property double x\nproperty double y\nproperty double z").unwrap();
    writeln!(s, "element face {}", mesh.n_triangles()).unwrap();
    writeln!(s, "property list uchar int vertex_indices\nend_header").unwrap();
    for p in mesh.vertices() {
        writeln!(s, "{} {} {}", p.x, p.y, p.z).unwrap();
    }
    for t in mesh.triangles() {
        writeln!(s, "3 {} {} {}", t[0], t[1], t[2]).unwrap();
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn write_tmp(dir: &tempfile::TempDir, name: &str, body: &[u8]) -> std::path::PathBuf {
        let p = dir.path().join(name);
        fs::write(&p, body).unwrap();
        p
    }

    const TET_OFF: &str = "OFF\n4 4 0\n1 1 1\n1 -1 -1\n-1 1 -1\n-1 -1 1\n3 0 1 2\n3 0 3 1\n3 0 2 3\n3 1 3 2\n";

    #[test]
    fn off_tetrahedron() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_tmp(&dir, "tet.off", TET_OFF.as_bytes());
        let m = load_mesh(&p, MeshFormat::Off).unwrap();
        assert_eq!((m.n_vertices(), m.n_triangles()), (4, 4));
        assert_eq!(m.name(), "tet");
    }

    #[test]
    fn off_out_of_range_index() {
        let dir = tempfile::tempdir().unwrap();
        let bad = TET_OFF.replace("3 1 3 2", "3 1 3 4");
        let p = write_tmp(&dir, "bad.off", bad.as_bytes());
        assert!(matches!(load_mesh(&p, MeshFormat::Off), Err(Error::Validation(_))));
    }

    #[test]
    fn off_malformed() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_tmp(&dir, "bad.off", b"OFF\n4 4 0\n1 1 one\n");
        assert!(matches!(load_mesh(&p, MeshFormat::Off), Err(Error::Parse { .. })));
    }

    #[test]
    fn obj_unit_square() {
        let dir = tempfile::tempdir().unwrap();
        let body = "# square\nv 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nvn 0 0 1\nf 1//1 2//1 3//1\nf 1 3 4\n";
        let p = write_tmp(&dir, "sq.obj", body.as_bytes());
        let m = load_mesh(&p, MeshFormat::Obj).unwrap();
        assert_eq!((m.n_vertices(), m.n_triangles()), (4, 2));
        assert_relative_eq!(m.total_area(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn ply_ascii_and_binary() {
        let dir = tempfile::tempdir().unwrap();
        let body = "ply\nformat ascii 1.0\ncomment x\nelement vertex 3\nproperty float x\nproperty float y\nproperty float z\nproperty uchar red\nelement face 1\nproperty list uchar int vertex_indices\nend_header\n0 0 0 255\n1 0 0 255\n0 1 0 255\n3 0 1 2\n";
        let p = write_tmp(&dir, "t.ply", body.as_bytes());
        let m = load_mesh(&p, MeshFormat::PlyAscii).unwrap();
        assert_eq!((m.n_vertices(), m.n_triangles()), (3, 1));

        let mut bin = b"ply\nformat binary_little_endian 1.0\nelement vertex 3\nproperty float x\nend_header\n".to_vec();
        bin.extend([0u8, 0x80, 0xff, 0x13]);
        let p = write_tmp(&dir, "b.ply", &bin);
        assert!(matches!(load_mesh(&p, MeshFormat::PlyAscii), Err(Error::UnsupportedFormat(_))));
    }

    #[test]
    fn unknown_extension() {
        assert!(matches!(
            MeshFormat::from_path(Path::new("a.stl")),
            Err(Error::UnsupportedFormat(_))
        ));
    }
}
