//! Combinatorics of a closed triangulated surface.
//!
//! Vertices are indexed `0..N` inside the library. Faces are stored with
//! sorted vertex triples and the face list itself is sorted, so every
//! derived structure (edges, incidence, subset reports) comes out in
//! lexicographic order regardless of the order the input was written in.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// A closed triangulated surface `(V, E, F)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TriangulatedSurface {
    vertex_count: usize,
    faces: Vec<[usize; 3]>,
    edges: Vec<[usize; 2]>,
    /// For each face, the edge indices opposite its three vertices.
    face_edges: Vec<[usize; 3]>,
    vertex_faces: Vec<Vec<usize>>,
    edge_lookup: BTreeMap<[usize; 2], usize>,
}

impl TriangulatedSurface {
    /// Builds a surface from zero-based face triples.
    pub fn new(vertex_count: usize, faces: &[[usize; 3]]) -> Result<Self> {
        if vertex_count == 0 {
            return Err(Error::EmptySurface);
        }
        let mut sorted = Vec::with_capacity(faces.len());
        for face in faces {
            for &v in face {
                if v >= vertex_count {
                    return Err(Error::VertexOutOfRange {
                        face: *face,
                        vertex: v,
                        vertex_count,
                    });
                }
            }
            let mut f = *face;
            f.sort_unstable();
            if f[0] == f[1] || f[1] == f[2] {
                return Err(Error::DegenerateFace(*face));
            }
            sorted.push(f);
        }
        sorted.sort_unstable();
        if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::DuplicateFace(w[0]));
        }

        let mut edge_count: BTreeMap<[usize; 2], usize> = BTreeMap::new();
        for f in &sorted {
            for e in face_edge_pairs(f) {
                *edge_count.entry(e).or_insert(0) += 1;
            }
        }
        if let Some((e, &c)) = edge_count.iter().find(|(_, &c)| c != 2) {
            return Err(Error::NonManifoldEdge { edge: *e, count: c });
        }

        let edges: Vec<[usize; 2]> = edge_count.keys().copied().collect();
        let edge_lookup: BTreeMap<[usize; 2], usize> =
            edges.iter().enumerate().map(|(i, e)| (*e, i)).collect();

        let mut vertex_faces = vec![Vec::new(); vertex_count];
        let mut face_edges = Vec::with_capacity(sorted.len());
        for (fi, f) in sorted.iter().enumerate() {
            for &v in f {
                vertex_faces[v].push(fi);
            }
            let [i, j, k] = *f;
            face_edges.push([
                edge_lookup[&[j, k]],
                edge_lookup[&[i, k]],
                edge_lookup[&[i, j]],
            ]);
        }
        if let Some(v) = vertex_faces.iter().position(|fs| fs.is_empty()) {
            return Err(Error::DanglingVertex(v));
        }

        debug_assert_eq!(2 * edges.len(), 3 * sorted.len());
        Ok(Self {
            vertex_count,
            faces: sorted,
            edges,
            face_edges,
            vertex_faces,
            edge_lookup,
        })
    }

    /// Builds a surface from one-based face triples, as written in problem files.
    pub fn from_one_based(vertex_count: usize, faces: &[[usize; 3]]) -> Result<Self> {
        let mut zero = Vec::with_capacity(faces.len());
        for f in faces {
            if f.contains(&0) {
                return Err(Error::VertexOutOfRange {
                    face: *f,
                    vertex: 0,
                    vertex_count,
                });
            }
            zero.push([f[0] - 1, f[1] - 1, f[2] - 1]);
        }
        Self::new(vertex_count, &zero)
    }

    pub fn vertex_count(&self) -> usize {
        self.vertex_count
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    pub fn edges(&self) -> &[[usize; 2]] {
        &self.edges
    }

    /// Edge indices opposite each vertex of face `f`, in the face's vertex order.
    pub fn face_edges(&self, f: usize) -> [usize; 3] {
        self.face_edges[f]
    }

    pub fn vertex_faces(&self, v: usize) -> &[usize] {
        &self.vertex_faces[v]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.vertex_faces[v].len()
    }

    /// Index of the edge joining `a` and `b`, in either order.
    pub fn edge_index(&self, a: usize, b: usize) -> Option<usize> {
        let key = if a < b { [a, b] } else { [b, a] };
        self.edge_lookup.get(&key).copied()
    }

    /// `N - |E| + |F|`.
    pub fn euler_characteristic(&self) -> i64 {
        self.vertex_count as i64 - self.edges.len() as i64 + self.faces.len() as i64
    }

    /// Pairs `(e, v)` with `v` in `A`, both endpoints of `e` outside `A`, and
    /// `e ∪ {v}` a face. Sorted by edge, then vertex.
    pub fn link_pairs(&self, subset: &VertexSubset) -> Vec<([usize; 2], usize)> {
        let mut pairs: Vec<([usize; 2], usize)> = self
            .faces
            .iter()
            .filter_map(|f| {
                let inside: Vec<usize> = f.iter().copied().filter(|&v| subset.contains(v)).collect();
                if inside.len() != 1 {
                    return None;
                }
                let v = inside[0];
                let mut e = [0; 2];
                let mut n = 0;
                for &w in f {
                    if w != v {
                        e[n] = w;
                        n += 1;
                    }
                }
                Some((e, v))
            })
            .collect();
        pairs.sort_unstable();
        pairs
    }

    /// Faces with exactly one, two, and three vertices in `A`.
    pub fn classify_faces(&self, subset: &VertexSubset) -> FaceClasses {
        let mut classes = FaceClasses::default();
        for f in &self.faces {
            match f.iter().filter(|&&v| subset.contains(v)).count() {
                1 => classes.one.push(*f),
                2 => classes.two.push(*f),
                3 => classes.three.push(*f),
                _ => {}
            }
        }
        classes
    }

    /// Euler characteristic of the full subcomplex spanned by `A`.
    pub fn subcomplex_euler(&self, subset: &VertexSubset) -> i64 {
        let edges = self
            .edges
            .iter()
            .filter(|e| subset.contains(e[0]) && subset.contains(e[1]))
            .count();
        let faces = self
            .faces
            .iter()
            .filter(|f| f.iter().all(|&v| subset.contains(v)))
            .count();
        subset.len() as i64 - edges as i64 + faces as i64
    }

    /// Iterates over every nonempty proper subset of the vertices, ordered by
    /// bitmask value. Only meaningful for small `N`.
    pub fn proper_subsets(&self) -> impl Iterator<Item = VertexSubset> + '_ {
        let n = self.vertex_count;
        let full: u64 = if n >= 64 { u64::MAX } else { (1u64 << n) - 1 };
        (1..full).map(move |mask| VertexSubset::from_mask(n, mask))
    }
}

fn face_edge_pairs(f: &[usize; 3]) -> [[usize; 2]; 3] {
    [[f[0], f[1]], [f[0], f[2]], [f[1], f[2]]]
}

/// Faces touching a subset, split by how many of their vertices it contains.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FaceClasses {
    pub one: Vec<[usize; 3]>,
    pub two: Vec<[usize; 3]>,
    pub three: Vec<[usize; 3]>,
}

/// A nonempty proper subset of the vertices.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VertexSubset {
    members: Vec<usize>,
    mask: Vec<bool>,
}

impl VertexSubset {
    pub fn new(vertex_count: usize, members: &[usize]) -> Result<Self> {
        let mut mask = vec![false; vertex_count];
        for &v in members {
            if v >= vertex_count {
                return Err(Error::SubsetVertexOutOfRange {
                    vertex: v,
                    vertex_count,
                });
            }
            mask[v] = true;
        }
        let members: Vec<usize> = (0..vertex_count).filter(|&v| mask[v]).collect();
        if members.is_empty() || members.len() == vertex_count {
            return Err(Error::EmptyOrFullSubset {
                size: members.len(),
                vertex_count,
            });
        }
        Ok(Self { members, mask })
    }

    fn from_mask(vertex_count: usize, bits: u64) -> Self {
        let mask: Vec<bool> = (0..vertex_count).map(|v| bits >> v & 1 == 1).collect();
        let members = (0..vertex_count).filter(|&v| mask[v]).collect();
        Self { members, mask }
    }

    pub fn members(&self) -> &[usize] {
        &self.members
    }

    pub fn contains(&self, v: usize) -> bool {
        self.mask.get(v).copied().unwrap_or(false)
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Members as one-based indices.
    pub fn one_based(&self) -> Vec<usize> {
        self.members.iter().map(|v| v + 1).collect()
    }
}
