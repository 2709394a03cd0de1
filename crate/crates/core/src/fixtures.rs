//! Small closed triangulations used by tests, examples, and the CLI docs.

use crate::complex::TriangulatedSurface;

/// Boundary of the tetrahedron: the smallest closed triangulation (sphere).
pub fn tetrahedron() -> TriangulatedSurface {
    TriangulatedSurface::new(4, &[[0, 1, 2], [0, 1, 3], [0, 2, 3], [1, 2, 3]])
        .expect("tetrahedron is a valid closed surface")
}

/// Boundary of the octahedron (sphere, six vertices of degree four).
pub fn octahedron() -> TriangulatedSurface {
    // poles 0 and 5, equator 1-2-3-4
    let faces = [
        [0, 1, 2],
        [0, 2, 3],
        [0, 3, 4],
        [0, 1, 4],
        [5, 1, 2],
        [5, 2, 3],
        [5, 3, 4],
        [5, 1, 4],
    ];
    TriangulatedSurface::new(6, &faces).expect("octahedron is a valid closed surface")
}

/// The seven-vertex (Möbius) torus: vertices `Z/7`, faces `{i, i+1, i+3}`
/// and `{i, i+2, i+3}`. Every vertex has degree six.
pub fn torus7() -> TriangulatedSurface {
    let mut faces = Vec::with_capacity(14);
    for i in 0..7 {
        faces.push([i, (i + 1) % 7, (i + 3) % 7]);
        faces.push([i, (i + 2) % 7, (i + 3) % 7]);
    }
    TriangulatedSurface::new(7, &faces).expect("seven-vertex torus is a valid closed surface")
}
