//! Catmull-Clark subdivision of the mesh pair and anchor remapping.
//!
//! On a regular grid the scheme reduces to the bicubic B-spline stencils;
//! boundaries use the cubic B-spline curve rule and corners stay pinned.
//! Grid dims go from (N1, N2) to (2*N1-1, 2*N2-1).

use crate::error::Result;
use crate::geom::{
    BarycentricAnchor, FaceIndex, GridDims, MeshPair, MeshVector, QuadMesh,
};

pub fn subdivide_mesh<V: MeshVector>(mesh: &QuadMesh<V>) -> QuadMesh<V> {
    let d = mesh.dims;
    let nd = GridDims::new(2 * d.n1 - 1, 2 * d.n2 - 1);
    let v = |i: usize, j: usize| mesh.vertex(i, j);
    QuadMesh::from_fn(nd, |ni, nj| {
        let (i, j) = (ni / 2, nj / 2);
        match (ni % 2, nj % 2) {
            // Face point: centroid of the quad.
            (1, 1) => (v(i, j) + v(i, j + 1) + v(i + 1, j) + v(i + 1, j + 1)) * 0.25,
            // Edge point along a row (constant i).
            (0, 1) => {
                if ni == 0 || ni == nd.n1 - 1 {
                    // Boundary edge: B-spline midpoint rule.
                    (v(i, j) + v(i, j + 1)) * 0.5
                } else {
                    let e = (v(i, j) + v(i, j + 1)) * 0.5;
                    let fa = (v(i - 1, j) + v(i - 1, j + 1) + v(i, j) + v(i, j + 1)) * 0.25;
                    let fb = (v(i, j) + v(i, j + 1) + v(i + 1, j) + v(i + 1, j + 1)) * 0.25;
                    (e + (fa + fb) * 0.5) * 0.5
                }
            }
            // Edge point along a column (constant j).
            (1, 0) => {
                if nj == 0 || nj == nd.n2 - 1 {
                    (v(i, j) + v(i + 1, j)) * 0.5
                } else {
                    let e = (v(i, j) + v(i + 1, j)) * 0.5;
                    let fa = (v(i, j - 1) + v(i, j) + v(i + 1, j - 1) + v(i + 1, j)) * 0.25;
                    let fb = (v(i, j) + v(i, j + 1) + v(i + 1, j) + v(i + 1, j + 1)) * 0.25;
                    (e + (fa + fb) * 0.5) * 0.5
                }
            }
            // Vertex point.
            (0, 0) => {
                let corner_i = i == 0 || i == d.n1 - 1;
                let corner_j = j == 0 || j == d.n2 - 1;
                if corner_i && corner_j {
                    // Corners interpolated.
                    v(i, j)
                } else if corner_i {
                    // Boundary row: cubic B-spline vertex rule.
                    (v(i, j - 1) + v(i, j) * 6.0 + v(i, j + 1)) * (1.0 / 8.0)
                } else if corner_j {
                    (v(i - 1, j) + v(i, j) * 6.0 + v(i + 1, j)) * (1.0 / 8.0)
                } else {
                    // Interior valence-4 vertex: (Q + 2R + S) / 4.
                    let q = ((v(i - 1, j - 1) + v(i - 1, j) + v(i, j - 1) + v(i, j))
                        + (v(i - 1, j) + v(i - 1, j + 1) + v(i, j) + v(i, j + 1))
                        + (v(i, j - 1) + v(i, j) + v(i + 1, j - 1) + v(i + 1, j))
                        + (v(i, j) + v(i, j + 1) + v(i + 1, j) + v(i + 1, j + 1)))
                        * (0.25 * 0.25);
                    let r = ((v(i, j) + v(i - 1, j)) * 0.5
                        + (v(i, j) + v(i + 1, j)) * 0.5
                        + (v(i, j) + v(i, j - 1)) * 0.5
                        + (v(i, j) + v(i, j + 1)) * 0.5)
                        * 0.25;
                    (q + r * 2.0 + v(i, j)) * 0.25
                }
            }
            _ => unreachable!(),
        }
    })
}

/// Subdivide both meshes of a pair with identical connectivity.
pub fn subdivide_pair(pair: &MeshPair) -> MeshPair {
    MeshPair::new(subdivide_mesh(&pair.space), subdivide_mesh(&pair.plane)).unwrap()
}

/// Re-express anchors on the refined pair so their planar positions are
/// preserved. Points squeezed outside the refined mesh (boundary
/// shrinkage) clamp to the nearest face; the count of clamped anchors is
/// returned alongside.
pub fn remap_anchors(
    old_pair: &MeshPair,
    new_pair: &MeshPair,
    anchors: &[BarycentricAnchor],
) -> Result<(Vec<BarycentricAnchor>, usize)> {
    let index = FaceIndex::build(&new_pair.plane);
    let mut out = Vec::with_capacity(anchors.len());
    let mut clamped = 0;
    for a in anchors {
        let p = old_pair.plane.eval(a)?;
        match index.locate(&new_pair.plane, p) {
            Some(na) => out.push(na),
            None => {
                clamped += 1;
                out.push(index.locate_or_clamp(&new_pair.plane, p));
            }
        }
    }
    Ok((out, clamped))
}
