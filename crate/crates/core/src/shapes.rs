//! Procedural meshes used by the dataset generator, tests and benchmarks.

use std::collections::HashMap;

use crate::error::Result;
use crate::mesh::Mesh;

/// Regular tetrahedron with unit edge length.
pub fn tetrahedron() -> Mesh {
    let (s, h) = (0.5, 0.5 / 2f64.sqrt());
    Mesh::new(
        "tetrahedron",
        vec![[s, 0.0, -h], [-s, 0.0, -h], [0.0, s, h], [0.0, -s, h]],
        vec![[0, 1, 2], [0, 3, 1], [0, 2, 3], [1, 3, 2]],
    )
    .expect("valid tetrahedron")
}

/// Unit icosphere after `subdivisions` rounds of 4-to-1 splitting
/// (12, 42, 162, 642, ... vertices).
pub fn icosphere(subdivisions: usize) -> Mesh {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut verts: Vec<[f64; 3]> = vec![
        [-1.0, t, 0.0],
        [1.0, t, 0.0],
        [-1.0, -t, 0.0],
        [1.0, -t, 0.0],
        [0.0, -1.0, t],
        [0.0, 1.0, t],
        [0.0, -1.0, -t],
        [0.0, 1.0, -t],
        [t, 0.0, -1.0],
        [t, 0.0, 1.0],
        [-t, 0.0, -1.0],
        [-t, 0.0, 1.0],
    ];
    let mut faces: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    let normalize = |p: [f64; 3]| {
        let n = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
        [p[0] / n, p[1] / n, p[2] / n]
    };
    for v in verts.iter_mut() {
        *v = normalize(*v);
    }
    for _ in 0..subdivisions {
        let mut midpoint: HashMap<(usize, usize), usize> = HashMap::new();
        let mut mid = |a: usize, b: usize, verts: &mut Vec<[f64; 3]>| {
            let key = (a.min(b), a.max(b));
            *midpoint.entry(key).or_insert_with(|| {
                let (p, q) = (verts[a], verts[b]);
                verts.push(normalize([
                    (p[0] + q[0]) / 2.0,
                    (p[1] + q[1]) / 2.0,
                    (p[2] + q[2]) / 2.0,
                ]));
                verts.len() - 1
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for &[a, b, c] in &faces {
            let ab = mid(a, b, &mut verts);
            let bc = mid(b, c, &mut verts);
            let ca = mid(c, a, &mut verts);
            next.extend_from_slice(&[[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    Mesh::new(format!("icosphere{subdivisions}"), verts, faces).expect("valid icosphere")
}

/// Flat `nx x ny` grid of unit squares, each split into two triangles.
pub fn grid(nx: usize, ny: usize, spacing: f64) -> Mesh {
    let idx = |i: usize, j: usize| j * (nx + 1) + i;
    let mut verts = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            verts.push([i as f64 * spacing, j as f64 * spacing, 0.0]);
        }
    }
    let mut faces = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            faces.push([idx(i, j), idx(i + 1, j), idx(i + 1, j + 1)]);
            faces.push([idx(i, j), idx(i + 1, j + 1), idx(i, j + 1)]);
        }
    }
    Mesh::new(format!("grid{nx}x{ny}"), verts, faces).expect("valid grid")
}

/// Long thin strip: a single row of `n` unit squares.
pub fn strip(n: usize) -> Mesh {
    let mut m = grid(n, 1, 1.0);
    m.name = format!("strip{n}");
    m
}

/// Closed UV sphere of radius 1 with `rings` latitude rings of `segments`
/// vertices plus two poles.
pub fn uv_sphere(rings: usize, segments: usize) -> Mesh {
    let mut verts = vec![[0.0, 0.0, 1.0]];
    for r in 0..rings {
        let theta = std::f64::consts::PI * (r + 1) as f64 / (rings + 1) as f64;
        for s in 0..segments {
            let phi = 2.0 * std::f64::consts::PI * s as f64 / segments as f64;
            verts.push([theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos()]);
        }
    }
    verts.push([0.0, 0.0, -1.0]);
    let south = verts.len() - 1;
    let ring = |r: usize, s: usize| 1 + r * segments + (s % segments);
    let mut faces = Vec::new();
    for s in 0..segments {
        faces.push([0, ring(0, s), ring(0, s + 1)]);
    }
    for r in 0..rings - 1 {
        for s in 0..segments {
            faces.push([ring(r, s), ring(r + 1, s), ring(r + 1, s + 1)]);
            faces.push([ring(r, s), ring(r + 1, s + 1), ring(r, s + 1)]);
        }
    }
    for s in 0..segments {
        faces.push([south, ring(rings - 1, s + 1), ring(rings - 1, s)]);
    }
    Mesh::new(format!("uvsphere{rings}x{segments}"), verts, faces).expect("valid uv sphere")
}

/// Open cylinder of the given radius along `z` in `[0, length]`, with
/// `rings` rings of `segments` vertices.
pub fn cylinder(rings: usize, segments: usize, radius: f64, length: f64) -> Mesh {
    let mut verts = Vec::with_capacity(rings * segments);
    for r in 0..rings {
        let z = length * r as f64 / (rings - 1) as f64;
        // stagger alternate rings for better-shaped triangles
        let off = if r % 2 == 1 { 0.5 } else { 0.0 };
        for s in 0..segments {
            let phi = 2.0 * std::f64::consts::PI * (s as f64 + off) / segments as f64;
            verts.push([radius * phi.cos(), radius * phi.sin(), z]);
        }
    }
    let idx = |r: usize, s: usize| r * segments + (s % segments);
    let mut faces = Vec::new();
    for r in 0..rings - 1 {
        for s in 0..segments {
            if r % 2 == 0 {
                faces.push([idx(r, s), idx(r, s + 1), idx(r + 1, s)]);
                faces.push([idx(r, s + 1), idx(r + 1, s + 1), idx(r + 1, s)]);
            } else {
                faces.push([idx(r, s), idx(r + 1, s + 1), idx(r + 1, s)]);
                faces.push([idx(r, s), idx(r, s + 1), idx(r + 1, s + 1)]);
            }
        }
    }
    Mesh::new(format!("cylinder{rings}x{segments}"), verts, faces).expect("valid cylinder")
}

/// Rotation about a unit axis followed by a translation.
pub fn rigid_motion(mesh: &Mesh, axis: [f64; 3], angle: f64, translation: [f64; 3]) -> Result<Mesh> {
    let n = (axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]).sqrt();
    let [x, y, z] = [axis[0] / n, axis[1] / n, axis[2] / n];
    let (s, c) = angle.sin_cos();
    let t = 1.0 - c;
    let r = [
        [t * x * x + c, t * x * y - s * z, t * x * z + s * y],
        [t * x * y + s * z, t * y * y + c, t * y * z - s * x],
        [t * x * z - s * y, t * y * z + s * x, t * z * z + c],
    ];
    mesh.map_vertices(|p| {
        let mut q = translation;
        for (i, qi) in q.iter_mut().enumerate() {
            *qi += r[i][0] * p[0] + r[i][1] * p[1] + r[i][2] * p[2];
        }
        q
    })
}

/// Reorders vertices: new vertex `i` is old vertex `perm[i]`.
pub fn permute_vertices(mesh: &Mesh, perm: &[usize]) -> Result<Mesh> {
    let mut inv = vec![0; perm.len()];
    for (new, &old) in perm.iter().enumerate() {
        inv[old] = new;
    }
    let verts = perm.iter().map(|&old| mesh.vertices()[old]).collect();
    let tris = mesh
        .triangles()
        .iter()
        .map(|t| [inv[t[0]], inv[t[1]], inv[t[2]]])
        .collect();
    Mesh::new(mesh.name.clone(), verts, tris)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn icosphere_counts() {
        assert_eq!(icosphere(0).n_vertices(), 12);
        assert_eq!(icosphere(1).n_vertices(), 42);
        assert_eq!(icosphere(1).n_triangles(), 80);
        assert_eq!(icosphere(2).n_vertices(), 162);
    }

    #[test]
    fn closed_surfaces_have_euler_characteristic_two() {
        for m in [tetrahedron(), icosphere(2), uv_sphere(6, 9)] {
            let chi = m.n_vertices() as i64 - m.edges().len() as i64 + m.n_triangles() as i64;
            assert_eq!(chi, 2, "{}", m.name);
        }
    }

    #[test]
    fn cylinder_is_an_annulus() {
        let m = cylinder(5, 8, 0.5, 2.0);
        let chi = m.n_vertices() as i64 - m.edges().len() as i64 + m.n_triangles() as i64;
        assert_eq!(chi, 0);
    }
}
