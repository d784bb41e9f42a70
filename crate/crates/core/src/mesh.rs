//! Triangle meshes, ASCII mesh formats and correspondence files.
//!
//! Vertex order is preserved exactly as stored in the file; correspondence
//! files index into it. OBJ's 1-based face indices are converted to 0-based
//! at the parser boundary, everything past it is 0-based.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::util::write_atomic;

/// Triangles with area at or below this are rejected at construction.
pub const MIN_TRIANGLE_AREA: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    pub name: String,
    vertices: Vec<[f64; 3]>,
    triangles: Vec<[usize; 3]>,
}

impl Mesh {
    /// Builds a mesh, checking index bounds, repeated indices and triangle area.
    pub fn new(
        name: impl Into<String>,
        vertices: Vec<[f64; 3]>,
        triangles: Vec<[usize; 3]>,
    ) -> Result<Self> {
        if vertices.len() < 4 {
            return Err(Error::InvalidMesh(format!(
                "need at least 4 vertices, found {}",
                vertices.len()
            )));
        }
        if triangles.is_empty() {
            return Err(Error::InvalidMesh("no triangles".into()));
        }
        if let Some(v) = vertices.iter().position(|p| p.iter().any(|c| !c.is_finite())) {
            return Err(Error::InvalidMesh(format!("vertex {v} has a non-finite coordinate")));
        }
        let n = vertices.len();
        for (t, tri) in triangles.iter().enumerate() {
            if let Some(&bad) = tri.iter().find(|&&i| i >= n) {
                return Err(Error::InvalidMesh(format!(
                    "triangle {t} references vertex {bad}, mesh has {n}"
                )));
            }
        }
        let mesh = Mesh {
            name: name.into(),
            vertices,
            triangles,
        };
        let degenerate: Vec<usize> = (0..mesh.triangles.len())
            .filter(|&t| {
                let [a, b, c] = mesh.triangles[t];
                a == b || b == c || a == c || mesh.triangle_area(t) <= MIN_TRIANGLE_AREA
            })
            .collect();
        if !degenerate.is_empty() {
            return Err(Error::DegenerateTriangles(degenerate));
        }
        Ok(mesh)
    }

    pub fn vertices(&self) -> &[[f64; 3]] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t];
        0.5 * norm(cross(
            sub(self.vertices[b], self.vertices[a]),
            sub(self.vertices[c], self.vertices[a]),
        ))
    }

    /// Sum of triangle areas.
    pub fn total_area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.triangle_area(t)).sum()
    }

    /// Unique undirected edges `(i, j)` with `i < j`, sorted.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut edges: Vec<(usize, usize)> = self
            .triangles
            .iter()
            .flat_map(|&[a, b, c]| [(a, b), (b, c), (c, a)])
            .map(|(i, j)| (i.min(j), i.max(j)))
            .collect();
        edges.sort_unstable();
        edges.dedup();
        edges
    }

    /// Returns a copy with every vertex mapped through `f`; connectivity is kept.
    pub fn map_vertices(&self, f: impl Fn([f64; 3]) -> [f64; 3]) -> Result<Mesh> {
        Mesh::new(
            self.name.clone(),
            self.vertices.iter().map(|&p| f(p)).collect(),
            self.triangles.clone(),
        )
    }

    /// SHA-256 over the little-endian bytes of the vertex coordinates, hex encoded.
    pub fn vertex_hash(&self) -> String {
        let mut hasher = Sha256::new();
        for p in &self.vertices {
            for c in p {
                hasher.update(c.to_le_bytes());
            }
        }
        hex::encode(hasher.finalize())
    }
}

pub(crate) fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub(crate) fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub(crate) fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub(crate) fn norm(a: [f64; 3]) -> f64 {
    dot(a, a).sqrt()
}

/// Sum of triangle areas.
pub fn total_area(mesh: &Mesh) -> f64 {
    mesh.total_area()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeshFormat {
    Off,
    Obj,
    Ply,
}

impl MeshFormat {
    pub fn from_path(path: &Path) -> Result<Self> {
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| e.to_ascii_lowercase());
        match ext.as_deref() {
            Some("off") => Ok(MeshFormat::Off),
            Some("obj") => Ok(MeshFormat::Obj),
            Some("ply") => Ok(MeshFormat::Ply),
            _ => Err(Error::UnsupportedFormat(path.display().to_string())),
        }
    }
}

/// Loads an ASCII OFF, OBJ or PLY file. The mesh name is the file stem.
pub fn load_mesh(path: impl AsRef<Path>) -> Result<Mesh> {
    let path = path.as_ref();
    let format = MeshFormat::from_path(path)?;
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let name = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("mesh")
        .to_string();
    parse_mesh(&text, format, name, path)
}

/// Parses mesh text; `path` is only used for error messages.
pub fn parse_mesh(text: &str, format: MeshFormat, name: String, path: &Path) -> Result<Mesh> {
    let (vertices, triangles) = match format {
        MeshFormat::Off => parse_off(text, path)?,
        MeshFormat::Obj => parse_obj(text, path)?,
        MeshFormat::Ply => parse_ply(text, path)?,
    };
    Mesh::new(name, vertices, triangles)
}

type Parsed = (Vec<[f64; 3]>, Vec<[usize; 3]>);

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    path: &'a Path,
    last: usize,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str, path: &'a Path) -> Self {
        Lines {
            inner: text.lines().enumerate(),
            path,
            last: 0,
        }
    }

    /// Next non-empty line with `#` comments stripped.
    fn next_content(&mut self) -> Option<(usize, &'a str)> {
        for (i, raw) in self.inner.by_ref() {
            self.last = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if !line.is_empty() {
                return Some((i + 1, line));
            }
        }
        None
    }

    fn expect(&mut self, what: &str) -> Result<(usize, &'a str)> {
        let last = self.last;
        self.next_content()
            .ok_or_else(|| self.err(last + 1, format!("unexpected end of file, expected {what}")))
    }

    fn err(&self, line: usize, msg: impl Into<String>) -> Error {
        Error::Parse {
            path: self.path.to_path_buf(),
            line,
            msg: msg.into(),
        }
    }
}

fn parse_num<T: std::str::FromStr>(lines: &Lines, line: usize, tok: &str) -> Result<T> {
    tok.parse()
        .map_err(|_| lines.err(line, format!("cannot parse {tok:?}")))
}

fn parse_point(lines: &Lines, line: usize, toks: &[&str]) -> Result<[f64; 3]> {
    if toks.len() < 3 {
        return Err(lines.err(line, "vertex needs 3 coordinates"));
    }
    Ok([
        parse_num(lines, line, toks[0])?,
        parse_num(lines, line, toks[1])?,
        parse_num(lines, line, toks[2])?,
    ])
}

fn parse_off(text: &str, path: &Path) -> Result<Parsed> {
    let mut lines = Lines::new(text, path);
    let (ln, header) = lines.expect("OFF header")?;
    let mut toks: Vec<&str> = header.split_whitespace().collect();
    if toks.first() != Some(&"OFF") {
        return Err(lines.err(ln, "missing OFF header"));
    }
    toks.remove(0);
    let (ln, counts) = if toks.is_empty() {
        let (ln, l) = lines.expect("counts line")?;
        (ln, l.split_whitespace().collect::<Vec<_>>())
    } else {
        (ln, toks)
    };
    if counts.len() < 2 {
        return Err(lines.err(ln, "counts line needs vertex and face counts"));
    }
    let nv: usize = parse_num(&lines, ln, counts[0])?;
    let nf: usize = parse_num(&lines, ln, counts[1])?;
    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (ln, l) = lines.expect("vertex")?;
        let toks: Vec<&str> = l.split_whitespace().collect();
        vertices.push(parse_point(&lines, ln, &toks)?);
    }
    let mut triangles = Vec::with_capacity(nf);
    for _ in 0..nf {
        let (ln, l) = lines.expect("face")?;
        let toks: Vec<&str> = l.split_whitespace().collect();
        let count: usize = parse_num(&lines, ln, toks[0])?;
        if count != 3 {
            return Err(lines.err(ln, format!("only triangles are supported, face has {count} vertices")));
        }
        if toks.len() < 4 {
            return Err(lines.err(ln, "face needs 3 indices"));
        }
        let tri = [
            parse_num(&lines, ln, toks[1])?,
            parse_num(&lines, ln, toks[2])?,
            parse_num(&lines, ln, toks[3])?,
        ];
        check_indices(&lines, ln, tri, nv)?;
        triangles.push(tri);
    }
    Ok((vertices, triangles))
}

fn check_indices(lines: &Lines, ln: usize, tri: [usize; 3], nv: usize) -> Result<()> {
    match tri.iter().find(|&&i| i >= nv) {
        Some(i) => Err(lines.err(ln, format!("vertex index {i} out of range ({nv} vertices)"))),
        None => Ok(()),
    }
}

fn parse_obj(text: &str, path: &Path) -> Result<Parsed> {
    let mut lines = Lines::new(text, path);
    let mut vertices = Vec::new();
    let mut faces: Vec<(usize, [i64; 3])> = Vec::new();
    while let Some((ln, l)) = lines.next_content() {
        let mut toks = l.split_whitespace();
        match toks.next() {
            Some("v") => {
                let rest: Vec<&str> = toks.collect();
                vertices.push(parse_point(&lines, ln, &rest)?);
            }
            Some("f") => {
                let refs: Vec<&str> = toks.collect();
                if refs.len() != 3 {
                    return Err(lines.err(ln, format!("only triangles are supported, face has {} vertices", refs.len())));
                }
                let mut tri = [0i64; 3];
                for (slot, r) in tri.iter_mut().zip(&refs) {
                    // "v", "v/vt", "v//vn", "v/vt/vn": the vertex index comes first
                    let v = r.split('/').next().unwrap_or("");
                    *slot = parse_num(&lines, ln, v)?;
                }
                faces.push((ln, tri));
            }
            _ => {}
        }
    }
    let nv = vertices.len() as i64;
    let mut triangles = Vec::with_capacity(faces.len());
    for (ln, tri) in faces {
        let mut out = [0usize; 3];
        for (o, &i) in out.iter_mut().zip(&tri) {
            // positive indices are 1-based, negative ones count back from the end
            let idx = match i {
                i if i > 0 && i <= nv => i - 1,
                i if i < 0 && -i <= nv => nv + i,
                _ => return Err(lines.err(ln, format!("vertex index {i} out of range ({nv} vertices)"))),
            };
            *o = idx as usize;
        }
        triangles.push(out);
    }
    Ok((vertices, triangles))
}

struct PlyElement {
    name: String,
    count: usize,
    props: Vec<String>,
    has_list: bool,
}

fn parse_ply(text: &str, path: &Path) -> Result<Parsed> {
    let mut lines = Lines::new(text, path);
    let (ln, magic) = lines.expect("ply header")?;
    if magic != "ply" {
        return Err(lines.err(ln, "missing ply magic"));
    }
    let mut elements: Vec<PlyElement> = Vec::new();
    loop {
        // comments in PLY headers use the `comment` keyword, not '#'
        let (ln, l) = lines.expect("end_header")?;
        let toks: Vec<&str> = l.split_whitespace().collect();
        match toks[0] {
            "format" => {
                if toks.get(1) != Some(&"ascii") {
                    return Err(Error::UnsupportedFormat(format!(
                        "{}: binary PLY is not supported",
                        path.display()
                    )));
                }
            }
            "comment" | "obj_info" => {}
            "element" => {
                if toks.len() < 3 {
                    return Err(lines.err(ln, "malformed element line"));
                }
                elements.push(PlyElement {
                    name: toks[1].to_string(),
                    count: parse_num(&lines, ln, toks[2])?,
                    props: Vec::new(),
                    has_list: false,
                });
            }
            "property" => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| lines.err(ln, "property before element"))?;
                if toks.get(1) == Some(&"list") {
                    el.has_list = true;
                    el.props.push(toks.get(4).unwrap_or(&"").to_string());
                } else {
                    el.props.push(toks.get(2).unwrap_or(&"").to_string());
                }
            }
            "end_header" => break,
            other => return Err(lines.err(ln, format!("unknown header keyword {other:?}"))),
        }
    }
    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    let mut nv = 0;
    for el in &elements {
        match el.name.as_str() {
            "vertex" => {
                let pos = |axis: &str| {
                    el.props
                        .iter()
                        .position(|p| p == axis)
                        .ok_or_else(|| Error::UnsupportedFormat(format!("PLY vertex element lacks {axis}")))
                };
                let (ix, iy, iz) = (pos("x")?, pos("y")?, pos("z")?);
                nv = el.count;
                for _ in 0..el.count {
                    let (ln, l) = lines.expect("vertex")?;
                    let toks: Vec<&str> = l.split_whitespace().collect();
                    if toks.len() < el.props.len() {
                        return Err(lines.err(ln, "vertex line has too few values"));
                    }
                    vertices.push([
                        parse_num(&lines, ln, toks[ix])?,
                        parse_num(&lines, ln, toks[iy])?,
                        parse_num(&lines, ln, toks[iz])?,
                    ]);
                }
            }
            "face" => {
                if !el.has_list || el.props.len() != 1 {
                    return Err(Error::UnsupportedFormat(
                        "PLY face element must hold exactly one index list".into(),
                    ));
                }
                for _ in 0..el.count {
                    let (ln, l) = lines.expect("face")?;
                    let toks: Vec<&str> = l.split_whitespace().collect();
                    let count: usize = parse_num(&lines, ln, toks[0])?;
                    if count != 3 || toks.len() < 4 {
                        return Err(lines.err(ln, format!("only triangles are supported, face has {count} vertices")));
                    }
                    let tri = [
                        parse_num(&lines, ln, toks[1])?,
                        parse_num(&lines, ln, toks[2])?,
                        parse_num(&lines, ln, toks[3])?,
                    ];
                    check_indices(&lines, ln, tri, nv)?;
                    triangles.push(tri);
                }
            }
            _ => {
                for _ in 0..el.count {
                    lines.expect(&el.name)?;
                }
            }
        }
    }
    Ok((vertices, triangles))
}

/// Serializes a mesh in the given ASCII format. Coordinates use the shortest
/// representation that parses back to the same `f64`.
pub fn mesh_to_string(mesh: &Mesh, format: MeshFormat) -> String {
    let mut out = String::new();
    let v = mesh.vertices();
    let t = mesh.triangles();
    match format {
        MeshFormat::Off => {
            let _ = writeln!(out, "OFF\n{} {} 0", v.len(), t.len());
            for p in v {
                let _ = writeln!(out, "{} {} {}", p[0], p[1], p[2]);
            }
            for f in t {
                let _ = writeln!(out, "3 {} {} {}", f[0], f[1], f[2]);
            }
        }
        MeshFormat::Obj => {
            let _ = writeln!(out, "# {}", mesh.name);
            for p in v {
                let _ = writeln!(out, "v {} {} {}", p[0], p[1], p[2]);
            }
            for f in t {
                let _ = writeln!(out, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
            }
        }
        MeshFormat::Ply => {
            let _ = write!(
                out,
                "ply\nformat ascii 1.0\nelement vertex {}\nproperty double x\nproperty double y\nproperty double z\n\
                 element face {}\nproperty list uchar int vertex_indices\nend_header\n",
                v.len(),
                t.len()
            );
            for p in v {
                let _ = writeln!(out, "{} {} {}", p[0], p[1], p[2]);
            }
            for f in t {
                let _ = writeln!(out, "3 {} {} {}", f[0], f[1], f[2]);
            }
        }
    }
    out
}

/// Writes a mesh, choosing the format from the file extension.
pub fn write_mesh(path: impl AsRef<Path>, mesh: &Mesh) -> Result<()> {
    let path = path.as_ref();
    let format = MeshFormat::from_path(path)?;
    write_atomic(path, mesh_to_string(mesh, format).as_bytes())
}

/// A hard vertex-to-vertex map from a source shape onto a target shape.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Correspondence {
    pub source_to_target: Vec<usize>,
    pub source_name: String,
    pub target_name: String,
}

impl Correspondence {
    pub fn identity(n: usize, source_name: &str, target_name: &str) -> Self {
        Correspondence {
            source_to_target: (0..n).collect(),
            source_name: source_name.to_string(),
            target_name: target_name.to_string(),
        }
    }

    pub fn len(&self) -> usize {
        self.source_to_target.len()
    }

    pub fn is_empty(&self) -> bool {
        self.source_to_target.is_empty()
    }

    /// Fraction of entries equal to the corresponding entry of `other`.
    pub fn agreement(&self, other: &Correspondence) -> f64 {
        let hits = self
            .source_to_target
            .iter()
            .zip(&other.source_to_target)
            .filter(|(a, b)| a == b)
            .count();
        hits as f64 / self.len().max(1) as f64
    }
}

/// Reads a 0-based, one-index-per-line correspondence file.
pub fn load_correspondence(
    path: impl AsRef<Path>,
    n_source: usize,
    n_target: usize,
) -> Result<Correspondence> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut map = Vec::with_capacity(n_source);
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let index: usize = line.parse().map_err(|_| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            msg: format!("expected a vertex index, found {line:?}"),
        })?;
        if index >= n_target {
            return Err(Error::IndexOutOfRange {
                path: path.to_path_buf(),
                line: i + 1,
                index,
                bound: n_target,
            });
        }
        map.push(index);
    }
    if map.len() != n_source {
        return Err(Error::LengthMismatch {
            expected: n_source,
            found: map.len(),
        });
    }
    let stem = |p: &Path| {
        p.file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or_default()
            .to_string()
    };
    Ok(Correspondence {
        source_to_target: map,
        source_name: stem(path),
        target_name: String::new(),
    })
}

pub fn correspondence_to_string(corr: &Correspondence) -> String {
    let mut out = String::with_capacity(corr.len() * 6);
    for i in &corr.source_to_target {
        let _ = writeln!(out, "{i}");
    }
    out
}

pub fn write_correspondence(path: impl AsRef<Path>, corr: &Correspondence) -> Result<()> {
    write_atomic(path.as_ref(), correspondence_to_string(corr).as_bytes())
}

/// Path helper used by the CLI and dataset generator.
pub fn with_extension(dir: &Path, stem: &str, ext: &str) -> PathBuf {
    dir.join(format!("{stem}.{ext}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str, format: MeshFormat) -> Result<Mesh> {
        parse_mesh(text, format, "t".into(), Path::new("t"))
    }

    const TET_OFF: &str = "OFF\n4 4 0\n0 0 0\n1 0 0\n0 1 0\n0 0 1\n3 0 2 1\n3 0 1 3\n3 1 2 3\n3 0 3 2\n";

    #[test]
    fn off_tetrahedron() {
        let m = parse(TET_OFF, MeshFormat::Off).unwrap();
        assert_eq!(m.n_vertices(), 4);
        assert_eq!(m.n_triangles(), 4);
        assert_eq!(m.triangles()[0], [0, 2, 1]);
    }

    #[test]
    fn off_counts_on_header_line_and_comments() {
        let text = "OFF 4 1 0\n# comment\n0 0 0\n1 0 0\n0 1 0\n0 0 1 # trailing\n3 0 1 2\n";
        let m = parse(text, MeshFormat::Off).unwrap();
        assert_eq!(m.n_triangles(), 1);
    }

    #[test]
    fn obj_is_one_based() {
        let text = "v 0 0 0\nv 1 0 0\nv 0 1 0\nv 0 0 1\nvn 0 0 1\nf 1 2 3\nf 1/1/1 2//1 -1\n";
        let m = parse(text, MeshFormat::Obj).unwrap();
        assert_eq!(m.triangles(), &[[0, 1, 2], [0, 1, 3]]);
    }

    #[test]
    fn repeated_index_is_degenerate() {
        let text = "OFF\n4 2 0\n0 0 0\n1 0 0\n0 1 0\n0 0 1\n3 0 1 2\n3 0 0 1\n";
        match parse(text, MeshFormat::Off) {
            Err(Error::DegenerateTriangles(t)) => assert_eq!(t, vec![1]),
            other => panic!("expected degenerate error, got {other:?}"),
        }
    }

    #[test]
    fn zero_area_is_degenerate() {
        let text = "OFF\n4 2 0\n0 0 0\n1 0 0\n2 0 0\n0 0 1\n3 0 1 2\n3 0 1 3\n";
        assert!(matches!(
            parse(text, MeshFormat::Off),
            Err(Error::DegenerateTriangles(t)) if t == vec![0]
        ));
    }

    #[test]
    fn parse_error_reports_line() {
        let text = "OFF\n4 1 0\n0 0 0\n1 0 x\n0 1 0\n0 0 1\n3 0 1 2\n";
        match parse(text, MeshFormat::Off) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn binary_ply_rejected() {
        let text = "ply\nformat binary_little_endian 1.0\nelement vertex 4\nend_header\n";
        assert!(matches!(parse(text, MeshFormat::Ply), Err(Error::UnsupportedFormat(_))));
    }

    #[test]
    fn ply_with_extra_properties() {
        let text = "ply\nformat ascii 1.0\ncomment hi\nelement vertex 4\nproperty float nx\nproperty float x\n\
                    property float y\nproperty float z\nelement face 1\nproperty list uchar int vertex_indices\n\
                    element edge 1\nproperty int a\nproperty int b\nend_header\n\
                    9 0 0 0\n9 1 0 0\n9 0 1 0\n9 0 0 1\n3 0 1 2\n0 1\n";
        let m = parse(text, MeshFormat::Ply).unwrap();
        assert_eq!(m.vertices()[1], [1.0, 0.0, 0.0]);
        assert_eq!(m.triangles(), &[[0, 1, 2]]);
    }

    #[test]
    fn unsupported_extension() {
        assert!(matches!(load_mesh("x.stl"), Err(Error::UnsupportedFormat(_))));
    }

    #[test]
    fn unit_right_triangle_area() {
        let m = Mesh::new(
            "t",
            vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [5.0, 5.0, 5.0]],
            vec![[0, 1, 2]],
        )
        .unwrap();
        assert!((total_area(&m) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn regular_tetrahedron_area() {
        let (s, h) = (0.5, 0.5 / 2f64.sqrt());
        let m = Mesh::new(
            "tet",
            vec![[s, 0.0, -h], [-s, 0.0, -h], [0.0, s, h], [0.0, -s, h]],
            vec![[0, 1, 2], [0, 3, 1], [0, 2, 3], [1, 3, 2]],
        )
        .unwrap();
        // edge lengths are all 1 for this embedding
        for (i, j) in m.edges() {
            assert!((norm(sub(m.vertices()[i], m.vertices()[j])) - 1.0).abs() < 1e-12);
        }
        assert!((total_area(&m) - 3f64.sqrt()).abs() < 1e-12);
    }
}
