use crate::mesh::{cross, dot, norm, sub, Mesh};
use crate::spectral::SparseSym;

/// Cotangents are clamped to this magnitude for near-degenerate angles.
pub const COT_CLAMP: f64 = 1e4;

/// Cotangent of the angle at `apex` in the triangle `(apex, a, b)`, clamped.
pub(crate) fn cot_at(apex: [f64; 3], a: [f64; 3], b: [f64; 3]) -> f64 {
    let u = sub(a, apex);
    let v = sub(b, apex);
    let cot = dot(u, v) / norm(cross(u, v));
    cot.clamp(-COT_CLAMP, COT_CLAMP)
}

/// Cotangent Laplacian with positive diagonal: `w_ij = -(cot a + cot b) / 2`
/// off the diagonal and `L_ii = -sum_j w_ij`.
pub fn cotan_laplacian(mesh: &Mesh) -> SparseSym {
    let v = mesh.vertices();
    let mut trip = Vec::with_capacity(mesh.n_triangles() * 6);
    for &[i, j, k] in mesh.triangles() {
        for (apex, a, b) in [(i, j, k), (j, k, i), (k, i, j)] {
            let w = 0.5 * cot_at(v[apex], v[a], v[b]);
            trip.push((a.min(b), a.max(b), -w));
            trip.push((a, a, w));
            trip.push((b, b, w));
        }
    }
    // isolated vertices still get an explicit (zero) diagonal entry
    trip.extend((0..mesh.n_vertices()).map(|i| (i, i, 0.0)));
    SparseSym::from_upper_triplets(mesh.n_vertices(), &trip)
        .expect("mesh indices are validated at construction")
}

/// Lumped (barycentric) mass: a third of each incident triangle's area.
pub fn lumped_mass(mesh: &Mesh) -> Vec<f64> {
    let mut mass = vec![0.0; mesh.n_vertices()];
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let a = mesh.triangle_area(t) / 3.0;
        for &i in tri {
            mass[i] += a;
        }
    }
    mass
}

#[cfg(test)]
mod tests {
    use super::*;

    fn right_triangle() -> Mesh {
        // the fourth vertex is isolated; only the triangle contributes
        Mesh::new(
            "rt",
            vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [3.0, 3.0, 3.0]],
            vec![[0, 1, 2]],
        )
        .unwrap()
    }

    #[test]
    fn right_triangle_weights() {
        let l = cotan_laplacian(&right_triangle());
        assert!(l.get(1, 2).abs() < 1e-15);
        assert!((l.get(0, 1) + 0.5).abs() < 1e-15);
        assert!((l.get(0, 2) + 0.5).abs() < 1e-15);
        assert!((l.get(0, 0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn right_triangle_mass() {
        let m = lumped_mass(&right_triangle());
        for &a in &m[..3] {
            assert!((a - 0.5 / 3.0).abs() < 1e-15);
        }
        assert_eq!(m[3], 0.0);
    }

    #[test]
    fn clamped_cotangent() {
        let c = cot_at([0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [1.0, 1e-9, 0.0]);
        assert_eq!(c, COT_CLAMP);
    }
}
