//! Approximate surface geodesics, geodesic matching error and the
//! geodesic-ball cutter used for partial shapes.
//!
//! Distances are shortest paths in the edge graph augmented with one chord per
//! interior edge: the segment joining the two opposite vertices after
//! unfolding the adjacent triangle pair into the plane. A chord is only added
//! when it crosses the shared edge, so every chord is a genuine surface path
//! and distances never undershoot the polyhedral geodesic.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;

use crate::fmap::Correspondence;
use crate::mesh::{connected_components, save_mesh, Mesh, MeshFormat};
use crate::{Error, Result};

/// Weighted vertex graph used for distance queries on one mesh.
#[derive(Debug, Clone)]
pub struct GeodesicGraph {
    adjacency: Vec<Vec<(usize, f64)>>,
}

impl GeodesicGraph {
    pub fn new(mesh: &Mesh) -> Self {
        let n = mesh.n_vertices();
        let mut adjacency: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        let mut add = |a: usize, b: usize, w: f64| {
            adjacency[a].push((b, w));
            adjacency[b].push((a, w));
        };
        for (u, v) in mesh.edges() {
            add(u, v, mesh.edge_length(u, v));
        }
        let pts = mesh.vertices();
        let mut chords: Vec<((usize, usize), f64)> = Vec::new();
        for ((i, j), tris) in mesh.edge_triangles() {
            if tris.len() != 2 {
                continue;
            }
            let opposite = |t: usize| {
                *mesh.triangles()[t]
                    .iter()
                    .find(|&&v| v != i && v != j)
                    .expect("triangle has a third vertex")
            };
            let (k, l) = (opposite(tris[0]), opposite(tris[1]));
            if k == l {
                continue;
            }
            let e = pts[j] - pts[i];
            let len = e.norm();
            let dir = e / len;
            let planar = |v: usize| {
                let d = pts[v] - pts[i];
                let x = d.dot(&dir);
                (x, (d - dir * x).norm())
            };
            let (xk, yk) = planar(k);
            let (xl, yl) = planar(l);
            let yl = -yl;
            let cross_x = xk + (xl - xk) * yk / (yk - yl);
            if cross_x > 0.0 && cross_x < len {
                let w = ((xk - xl).powi(2) + (yk - yl).powi(2)).sqrt();
                chords.push(((k.min(l), k.max(l)), w));
            }
        }
        chords.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
        for ((k, l), w) in chords {
            add(k, l, w);
        }
        for list in &mut adjacency {
            list.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
        }
        GeodesicGraph { adjacency }
    }

    pub fn n(&self) -> usize {
        self.adjacency.len()
    }

    /// Neighbors with edge weights (mesh edges and chords).
    pub fn neighbors(&self, v: usize) -> &[(usize, f64)] {
        &self.adjacency[v]
    }

    pub fn distances_from(&self, source: usize) -> Vec<f64> {
        self.dijkstra(source, |_| false)
    }

    /// Distances from `source` to each of `targets`, stopping as soon as all are settled.
    pub fn distances_to(&self, source: usize, targets: &[usize]) -> Vec<f64> {
        let mut pending: BTreeMap<usize, ()> = targets.iter().map(|&t| (t, ())).collect();
        let dist = self.dijkstra(source, |v| {
            pending.remove(&v);
            pending.is_empty()
        });
        targets.iter().map(|&t| dist[t]).collect()
    }

    fn dijkstra(&self, source: usize, mut settled: impl FnMut(usize) -> bool) -> Vec<f64> {
        let n = self.n();
        let mut dist = vec![f64::INFINITY; n];
        let mut done = vec![false; n];
        let mut heap = BinaryHeap::new();
        dist[source] = 0.0;
        heap.push(HeapEntry(0.0, source));
        while let Some(HeapEntry(d, u)) = heap.pop() {
            if done[u] {
                continue;
            }
            done[u] = true;
            if settled(u) {
                break;
            }
            for &(v, w) in &self.adjacency[u] {
                let nd = d + w;
                if nd < dist[v] {
                    dist[v] = nd;
                    heap.push(HeapEntry(nd, v));
                }
            }
        }
        dist
    }
}

#[derive(Debug, PartialEq)]
struct HeapEntry(f64, usize);

impl Eq for HeapEntry {}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on distance, then on vertex index
        other.0.total_cmp(&self.0).then_with(|| other.1.cmp(&self.1))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Distances from one source vertex; unreachable vertices are `+inf`.
#[derive(Debug, Clone, PartialEq)]
pub struct GeodesicField {
    pub source: usize,
    pub distances: Vec<f64>,
}

pub fn geodesic_from(mesh: &Mesh, source: usize) -> Result<GeodesicField> {
    if source >= mesh.n_vertices() {
        return Err(Error::Index(format!(
            "source {source} on a {}-vertex mesh",
            mesh.n_vertices()
        )));
    }
    Ok(GeodesicField {
        source,
        distances: GeodesicGraph::new(mesh).distances_from(source),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Deserialize, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorNormalization {
    /// Divide by `sqrt(total target area)` and multiply by 100.
    #[default]
    SqrtArea,
    None,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeodesicErrors {
    pub per_vertex: Vec<f64>,
    pub mean: f64,
}

/// Geodesic distance on `target` between predicted and ground-truth images.
pub fn geodesic_error(
    predicted: &Correspondence,
    ground_truth: &Correspondence,
    target: &Mesh,
    normalization: ErrorNormalization,
) -> Result<GeodesicErrors> {
    geodesic_error_with_graph(predicted, ground_truth, target, &GeodesicGraph::new(target), normalization)
}

/// As [`geodesic_error`], reusing a prebuilt graph of `target`.
pub fn geodesic_error_with_graph(
    predicted: &Correspondence,
    ground_truth: &Correspondence,
    target: &Mesh,
    graph: &GeodesicGraph,
    normalization: ErrorNormalization,
) -> Result<GeodesicErrors> {
    let (p, g) = (predicted.targets(), ground_truth.targets());
    if p.len() != g.len() {
        return Err(Error::Dimension(format!(
            "predicted map has {} entries, ground truth {}",
            p.len(),
            g.len()
        )));
    }
    let n = target.n_vertices();
    if let Some(&bad) = p.iter().chain(g).find(|&&t| t >= n) {
        return Err(Error::Index(format!("target index {bad} on a {n}-vertex mesh")));
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, (&pi, &gi)) in p.iter().zip(g).enumerate() {
        if pi != gi {
            groups.entry(gi).or_default().push(i);
        }
    }
    let groups: Vec<(usize, Vec<usize>)> = groups.into_iter().collect();
    let solved: Vec<Vec<(usize, f64)>> = groups
        .par_iter()
        .map(|(src, rows)| {
            let wanted: Vec<usize> = rows.iter().map(|&i| p[i]).collect();
            let d = graph.distances_to(*src, &wanted);
            rows.iter().copied().zip(d).collect()
        })
        .collect();
    let scale = match normalization {
        ErrorNormalization::SqrtArea => 100.0 / target.total_area().sqrt(),
        ErrorNormalization::None => 1.0,
    };
    let mut per_vertex = vec![0.0; p.len()];
    for (i, d) in solved.into_iter().flatten() {
        per_vertex[i] = d * scale;
    }
    let mean = if per_vertex.is_empty() {
        0.0
    } else {
        per_vertex.iter().sum::<f64>() / per_vertex.len() as f64
    };
    Ok(GeodesicErrors { per_vertex, mean })
}

/// A mesh with a geodesic ball removed, and the map back to the full mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct PartialCut {
    pub partial: Mesh,
    pub kept_to_full: Vec<usize>,
    pub landmark: usize,
    pub radius: f64,
}

impl PartialCut {
    /// Writes `<stem>.off` and `<stem>.kept_to_full` (one full-mesh index per line).
    pub fn save(&self, dir: impl AsRef<Path>, stem: &str) -> Result<()> {
        let dir = dir.as_ref();
        save_mesh(&self.partial, dir.join(format!("{stem}.off")), MeshFormat::Off)?;
        let mut s = String::new();
        for &v in &self.kept_to_full {
            writeln!(s, "{v}").unwrap();
        }
        let side = dir.join(format!("{stem}.kept_to_full"));
        fs::write(&side, s).map_err(|e| Error::io(&side, e))
    }
}

/// Removes every vertex within geodesic distance `radius` of `landmark`, keeping
/// the largest surviving connected component.
pub fn cut_geodesic_ball(mesh: &Mesh, landmark: usize, radius: f64) -> Result<PartialCut> {
    cut_geodesic_ball_with(mesh, landmark, radius, false)
}

pub fn cut_geodesic_ball_with(
    mesh: &Mesh,
    landmark: usize,
    radius: f64,
    keep_all_components: bool,
) -> Result<PartialCut> {
    if !(radius >= 0.0) {
        return Err(Error::Config(format!("radius must be nonnegative, got {radius}")));
    }
    let field = geodesic_from(mesh, landmark)?;
    let n = mesh.n_vertices();
    let alive: Vec<bool> = field.distances.iter().map(|&d| d > radius).collect();
    let mut used = vec![false; n];
    for tri in mesh.triangles() {
        if tri.iter().all(|&v| alive[v]) {
            for &v in tri {
                used[v] = true;
            }
        }
    }
    let kept: Vec<usize> = (0..n).filter(|&v| used[v]).collect();
    if kept.is_empty() {
        return Err(Error::EmptyResult);
    }
    let partial = mesh.submesh(&kept)?;
    let (partial, kept_to_full) = if keep_all_components {
        (partial, kept)
    } else {
        let comps = connected_components(&partial);
        let largest = comps
            .iter()
            .enumerate()
            .max_by(|(ia, a), (ib, b)| a.len().cmp(&b.len()).then(ib.cmp(ia)))
            .map(|(i, _)| i)
            .expect("nonempty partial has a component");
        if comps.len() > 1 {
            log::info!(
                "cut left {} components; keeping the largest ({} vertices)",
                comps.len(),
                comps[largest].len()
            );
        }
        let sub = partial.submesh(&comps[largest])?;
        let map = comps[largest].iter().map(|&v| kept[v]).collect();
        (sub, map)
    };
    let partial = partial.with_name(format!("{}_cut", mesh.name()));
    Ok(PartialCut {
        partial,
        kept_to_full,
        landmark,
        radius,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::primitives::*;
    use approx::assert_relative_eq;
    use nalgebra::Point3;

    #[test]
    fn collinear_strip() {
        // strip of unit squares along x; bottom row vertices 0..=3 are collinear
        let mut v = Vec::new();
        for i in 0..4 {
            v.push(Point3::new(i as f64, 0.0, 0.0));
        }
        for i in 0..4 {
            v.push(Point3::new(i as f64, 1.0, 0.0));
        }
        let mut t = Vec::new();
        for i in 0..3 {
            t.push([i, i + 1, i + 5]);
            t.push([i, i + 5, i + 4]);
        }
        let m = Mesh::new("strip", v, t).unwrap();
        let f = geodesic_from(&m, 0).unwrap();
        assert_eq!(f.distances[0], 0.0);
        assert_relative_eq!(f.distances[3], 3.0, epsilon = 1e-12);
    }

    #[test]
    fn unreachable_is_infinite() {
        let f = geodesic_from(&two_tetrahedra(), 0).unwrap();
        assert!(f.distances[5].is_infinite());
        assert!(f.distances[1].is_finite());
    }

    #[test]
    fn single_mismatch_error() {
        let m = grid(9, 9);
        assert_eq!(m.n_vertices(), 100);
        let gt = Correspondence::identity(100);
        let mut pred = gt.targets().to_vec();
        pred[0] = 1;
        let pred = Correspondence::new(pred);
        let e = geodesic_error(&pred, &gt, &m, ErrorNormalization::None).unwrap();
        assert_relative_eq!(e.mean, m.edge_length(0, 1) / 100.0, epsilon = 1e-15);
        let z = geodesic_error(&gt, &gt, &m, ErrorNormalization::SqrtArea).unwrap();
        assert_eq!(z.mean, 0.0);
        let bad = Correspondence::new(vec![100; 100]);
        assert!(matches!(geodesic_error(&bad, &gt, &m, ErrorNormalization::None), Err(Error::Index(_))));
    }

    #[test]
    fn cut_radius_zero_removes_landmark_only() {
        let m = icosphere(2, 1.0);
        let c = cut_geodesic_ball(&m, 0, 0.0).unwrap();
        assert_eq!(c.partial.n_vertices(), m.n_vertices() - 1);
        assert!(!c.kept_to_full.contains(&0));
        let valence = m.vertex_neighbors()[0].len();
        assert_eq!(c.partial.n_triangles(), m.n_triangles() - valence);
    }

    #[test]
    fn cut_beyond_diameter_is_empty() {
        let m = icosphere(2, 1.0);
        assert!(matches!(cut_geodesic_ball(&m, 3, 10.0), Err(Error::EmptyResult)));
        assert!(matches!(cut_geodesic_ball(&m, 3, -1.0), Err(Error::Config(_))));
    }
}
