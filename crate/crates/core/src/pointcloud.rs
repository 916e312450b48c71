//! Colored point clouds: storage, ASCII PLY I/O, exact nearest-neighbor
//! queries and PCA normal estimation.
//!
//! Coordinates are centimeters. Nearest-neighbor ties always resolve to the
//! lowest point index, both for the brute-force scan and for [`KdTree`].

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use nalgebra::{Matrix3, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::{Error, Result, Vec3};

/// Allowed deviation from unit length for stored normals.
pub const NORMAL_TOLERANCE: f64 = 1e-6;

/// Default neighborhood size for normal estimation.
pub const DEFAULT_NORMAL_K: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct Rgb8 {
    pub r: u8,
    pub g: u8,
    pub b: u8,
}

impl Rgb8 {
    pub const fn new(r: u8, g: u8, b: u8) -> Self {
        Self { r, g, b }
    }

    pub fn channels(self) -> [u8; 3] {
        [self.r, self.g, self.b]
    }

    /// Channels divided by 255.
    pub fn to_norm(self) -> [f64; 3] {
        self.channels().map(|c| f64::from(c) / 255.0)
    }

    /// Inverse of [`Rgb8::to_norm`]: scales by 255, rounds and saturates.
    pub fn from_norm(c: [f64; 3]) -> Self {
        let q = |v: f64| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
        Self::new(q(c[0]), q(c[1]), q(c[2]))
    }
}

impl From<[u8; 3]> for Rgb8 {
    fn from(c: [u8; 3]) -> Self {
        Self::new(c[0], c[1], c[2])
    }
}

/// Workpiece surface sampled as colored points, optionally with unit normals.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ColorPointCloud {
    points: Vec<Vec3>,
    colors: Vec<Rgb8>,
    normals: Option<Vec<Vec3>>,
}

impl ColorPointCloud {
    pub fn new(points: Vec<Vec3>, colors: Vec<Rgb8>) -> Result<Self> {
        if points.len() != colors.len() {
            return Err(Error::domain(format!(
                "{} points but {} colors",
                points.len(),
                colors.len()
            )));
        }
        if let Some(i) = points.iter().position(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(Error::domain(format!("point {i} has a non-finite coordinate")));
        }
        Ok(Self {
            points,
            colors,
            normals: None,
        })
    }

    /// Attach normals; each must already be unit length within [`NORMAL_TOLERANCE`].
    pub fn with_normals(mut self, normals: Vec<Vec3>) -> Result<Self> {
        if normals.len() != self.points.len() {
            return Err(Error::domain(format!(
                "{} normals for {} points",
                normals.len(),
                self.points.len()
            )));
        }
        if let Some(i) = normals
            .iter()
            .position(|n| !((n.norm() - 1.0).abs() <= NORMAL_TOLERANCE))
        {
            return Err(Error::domain(format!("normal {i} is not unit length")));
        }
        self.normals = Some(normals);
        Ok(self)
    }

    pub fn without_normals(mut self) -> Self {
        self.normals = None;
        self
    }

    /// Same geometry and normals, new colors.
    pub fn recolored(&self, colors: Vec<Rgb8>) -> Result<Self> {
        if colors.len() != self.points.len() {
            return Err(Error::domain(format!(
                "{} colors for {} points",
                colors.len(),
                self.points.len()
            )));
        }
        Ok(Self {
            points: self.points.clone(),
            colors,
            normals: self.normals.clone(),
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    pub fn colors(&self) -> &[Rgb8] {
        &self.colors
    }

    pub fn normals(&self) -> Option<&[Vec3]> {
        self.normals.as_deref()
    }

    /// Length of the axis-aligned bounding box diagonal (0 for fewer than 2 points).
    pub fn bounding_diagonal(&self) -> f64 {
        let Some(first) = self.points.first() else {
            return 0.0;
        };
        let (lo, hi) = self
            .points
            .iter()
            .fold((*first, *first), |(lo, hi), p| (lo.inf(p), hi.sup(p)));
        (hi - lo).norm()
    }
}

// ---------------------------------------------------------------------------
// PLY

pub fn load_ply(path: impl AsRef<Path>) -> Result<ColorPointCloud> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let cloud = parse_ply(&text)?;
    let diag = cloud.bounding_diagonal();
    if cloud.len() > 1 && diag > 0.0 && diag < 2.0 {
        log::warn!(
            "{}: bounding box diagonal is {diag:.4}; coordinates are expected in centimeters, \
             this cloud may be in meters",
            path.display()
        );
    }
    Ok(cloud)
}

#[derive(Debug)]
struct PlyElement {
    name: String,
    count: usize,
    properties: Vec<String>,
}

/// Parse an ASCII PLY document. Only the `vertex` element is read; other
/// elements are skipped. Normals are renormalized to unit length.
pub fn parse_ply(text: &str) -> Result<ColorPointCloud> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    let parse_err = |line: usize, msg: &str| Error::Parse {
        line,
        msg: msg.to_string(),
    };

    match lines.next() {
        Some((_, "ply")) => {}
        Some((n, _)) => return Err(parse_err(n, "expected magic line `ply`")),
        None => return Err(parse_err(1, "empty file")),
    }

    let mut elements: Vec<PlyElement> = Vec::new();
    let mut saw_format = false;
    let mut header_done = false;
    for (n, line) in lines.by_ref() {
        let mut tok = line.split_whitespace();
        match tok.next() {
            None | Some("comment") | Some("obj_info") => {}
            Some("format") => {
                if tok.next() != Some("ascii") {
                    return Err(parse_err(n, "only `format ascii 1.0` is supported"));
                }
                saw_format = true;
            }
            Some("element") => {
                let name = tok
                    .next()
                    .ok_or_else(|| parse_err(n, "element without a name"))?;
                let count = tok
                    .next()
                    .and_then(|c| c.parse().ok())
                    .ok_or_else(|| parse_err(n, "element count is not an integer"))?;
                elements.push(PlyElement {
                    name: name.to_string(),
                    count,
                    properties: Vec::new(),
                });
            }
            Some("property") => {
                let element = elements
                    .last_mut()
                    .ok_or_else(|| parse_err(n, "property before any element"))?;
                let rest: Vec<&str> = tok.collect();
                let name = match rest.as_slice() {
                    ["list", _, _, name] => name,
                    [_, name] => name,
                    _ => return Err(parse_err(n, "malformed property line")),
                };
                element.properties.push(name.to_string());
            }
            Some("end_header") => {
                header_done = true;
                break;
            }
            Some(_) => return Err(parse_err(n, "unrecognized header keyword")),
        }
    }
    if !header_done {
        return Err(parse_err(text.lines().count(), "missing end_header"));
    }
    if !saw_format {
        return Err(parse_err(2, "missing format line"));
    }

    let mut points = Vec::new();
    let mut colors = Vec::new();
    let mut normals = Vec::new();
    let mut have_normals = false;
    for element in &elements {
        if element.name != "vertex" {
            for _ in 0..element.count {
                if lines.next().is_none() {
                    return Err(parse_err(text.lines().count(), "unexpected end of file"));
                }
            }
            continue;
        }
        let col = |name: &str| element.properties.iter().position(|p| p == name);
        let xyz = ["x", "y", "z"].map(col);
        let rgb = ["red", "green", "blue"].map(col);
        let nrm = ["nx", "ny", "nz"].map(col);
        let [Some(ix), Some(iy), Some(iz)] = xyz else {
            return Err(Error::Format("vertex element lacks x, y, z".into()));
        };
        let [Some(ir), Some(ig), Some(ib)] = rgb else {
            return Err(Error::Format(
                "vertex element lacks red, green, blue color properties".into(),
            ));
        };
        let normal_cols = match nrm {
            [Some(a), Some(b), Some(c)] => Some([a, b, c]),
            [None, None, None] => None,
            _ => return Err(Error::Format("partial nx, ny, nz normal properties".into())),
        };
        have_normals = normal_cols.is_some();
        points.reserve(element.count);
        colors.reserve(element.count);

        for _ in 0..element.count {
            let (n, line) = lines
                .next()
                .ok_or_else(|| parse_err(text.lines().count(), "fewer vertex lines than declared"))?;
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != element.properties.len() {
                return Err(parse_err(
                    n,
                    &format!(
                        "expected {} values, found {}",
                        element.properties.len(),
                        fields.len()
                    ),
                ));
            }
            let num = |i: usize| -> Result<f64> {
                fields[i]
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| parse_err(n, &format!("bad number `{}`", fields[i])))
            };
            let byte = |i: usize| -> Result<u8> {
                fields[i]
                    .parse::<u8>()
                    .map_err(|_| parse_err(n, &format!("bad color value `{}`", fields[i])))
            };
            points.push(Vec3::new(num(ix)?, num(iy)?, num(iz)?));
            colors.push(Rgb8::new(byte(ir)?, byte(ig)?, byte(ib)?));
            if let Some([a, b, c]) = normal_cols {
                let v = Vec3::new(num(a)?, num(b)?, num(c)?);
                let len = v.norm();
                if len == 0.0 {
                    return Err(parse_err(n, "zero-length normal"));
                }
                normals.push(v / len);
            }
        }
    }
    if !elements.iter().any(|e| e.name == "vertex") {
        return Err(Error::Format("no vertex element".into()));
    }

    let cloud = ColorPointCloud::new(points, colors)?;
    if have_normals {
        cloud.with_normals(normals)
    } else {
        Ok(cloud)
    }
}

/// Render the cloud as ASCII PLY. Coordinates are written with shortest
/// round-trip formatting, so [`parse_ply`] reproduces them exactly.
pub fn to_ply_string(cloud: &ColorPointCloud) -> String {
    let mut out = String::with_capacity(64 + cloud.len() * 48);
    out.push_str("ply\nformat ascii 1.0\n");
    let _ = writeln!(out, "element vertex {}", cloud.len());
    out.push_str("property float x\nproperty float y\nproperty float z\n");
    out.push_str("property uchar red\nproperty uchar green\nproperty uchar blue\n");
    if cloud.normals.is_some() {
        out.push_str("property float nx\nproperty float ny\nproperty float nz\n");
    }
    out.push_str("end_header\n");
    for (i, (p, c)) in cloud.points.iter().zip(&cloud.colors).enumerate() {
        let _ = write!(out, "{} {} {} {} {} {}", p.x, p.y, p.z, c.r, c.g, c.b);
        if let Some(normals) = &cloud.normals {
            let n = normals[i];
            let _ = write!(out, " {} {} {}", n.x, n.y, n.z);
        }
        out.push('\n');
    }
    out
}

pub fn save_ply(cloud: &ColorPointCloud, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(to_ply_string(cloud).as_bytes())
        .map_err(|e| Error::io(path, e))
}

// ---------------------------------------------------------------------------
// Nearest neighbors

#[inline]
fn dist2(a: &Vec3, b: &Vec3) -> f64 {
    (a - b).norm_squared()
}

/// Index of the point closest to `query`, lowest index on ties. O(N) scan.
pub fn nearest(query: &Vec3, cloud: &ColorPointCloud) -> Result<usize> {
    nearest_in(query, cloud.points())
}

pub fn nearest_in(query: &Vec3, points: &[Vec3]) -> Result<usize> {
    let mut best = None;
    let mut best_d = f64::INFINITY;
    for (i, p) in points.iter().enumerate() {
        let d = dist2(query, p);
        if d < best_d {
            best_d = d;
            best = Some(i);
        }
    }
    best.ok_or_else(|| Error::domain("nearest neighbor query on an empty cloud"))
}

const LEAF_SIZE: usize = 8;

#[derive(Debug, Clone)]
enum Node {
    Leaf { start: usize, end: usize },
    Split { axis: usize, value: f64, left: usize, right: usize },
}

/// Static kd-tree over a point set. Queries return exactly what the brute-force
/// scan returns, including the lowest-index tie rule.
#[derive(Debug, Clone)]
pub struct KdTree {
    points: Vec<Vec3>,
    order: Vec<usize>,
    nodes: Vec<Node>,
}

impl KdTree {
    pub fn new(points: &[Vec3]) -> Self {
        let mut tree = Self {
            points: points.to_vec(),
            order: (0..points.len()).collect(),
            nodes: Vec::new(),
        };
        if !points.is_empty() {
            tree.build(0, points.len());
        }
        tree
    }

    pub fn from_cloud(cloud: &ColorPointCloud) -> Self {
        Self::new(cloud.points())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn build(&mut self, start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        let slice = &self.order[start..end];
        let mut lo = self.points[slice[0]];
        let mut hi = lo;
        for &i in slice {
            lo = lo.inf(&self.points[i]);
            hi = hi.sup(&self.points[i]);
        }
        let axis = (hi - lo).imax();
        let mid = start + (end - start) / 2;
        let points = &self.points;
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            points[a][axis].total_cmp(&points[b][axis])
        });
        let value = self.points[self.order[mid]][axis];
        self.nodes.push(Node::Leaf { start: 0, end: 0 });
        // Left holds [start, mid) with coordinates <= value, right [mid, end) with >= value.
        let left = self.build(start, mid);
        let right = self.build(mid, end);
        self.nodes[id] = Node::Split {
            axis,
            value,
            left,
            right,
        };
        id
    }

    /// Closest point index, lowest index on ties.
    pub fn nearest(&self, query: &Vec3) -> Result<usize> {
        if self.points.is_empty() {
            return Err(Error::domain("nearest neighbor query on an empty cloud"));
        }
        let mut best = (f64::INFINITY, usize::MAX);
        self.nearest_rec(0, query, &mut best);
        Ok(best.1)
    }

    fn nearest_rec(&self, node: usize, q: &Vec3, best: &mut (f64, usize)) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start..end] {
                    let d = dist2(q, &self.points[i]);
                    if d < best.0 || (d == best.0 && i < best.1) {
                        *best = (d, i);
                    }
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let delta = q[axis] - value;
                let (near, far) = if delta <= 0.0 { (left, right) } else { (right, left) };
                self.nearest_rec(near, q, best);
                // Equal plane distance still visits: a tie may hide a lower index.
                if delta * delta <= best.0 {
                    self.nearest_rec(far, q, best);
                }
            }
        }
    }

    /// The `k` closest point indices ordered by (distance, index).
    pub fn knn(&self, query: &Vec3, k: usize) -> Vec<usize> {
        let k = k.min(self.points.len());
        if k == 0 {
            return Vec::new();
        }
        let mut heap: Vec<(f64, usize)> = Vec::with_capacity(k + 1);
        self.knn_rec(0, query, k, &mut heap);
        heap.into_iter().map(|(_, i)| i).collect()
    }

    fn knn_rec(&self, node: usize, q: &Vec3, k: usize, best: &mut Vec<(f64, usize)>) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start..end] {
                    let cand = (dist2(q, &self.points[i]), i);
                    if best.len() == k {
                        let worst = best[k - 1];
                        if cand.0 > worst.0 || (cand.0 == worst.0 && cand.1 > worst.1) {
                            continue;
                        }
                        best.pop();
                    }
                    let pos = best.partition_point(|b| b.0 < cand.0 || (b.0 == cand.0 && b.1 < cand.1));
                    best.insert(pos, cand);
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let delta = q[axis] - value;
                let (near, far) = if delta <= 0.0 { (left, right) } else { (right, left) };
                self.knn_rec(near, q, k, best);
                if best.len() < k || delta * delta <= best[k - 1].0 {
                    self.knn_rec(far, q, k, best);
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Normals

#[derive(Debug, Clone)]
pub struct NormalEstimate {
    pub cloud: ColorPointCloud,
    /// Indices whose neighborhood covariance had rank < 2; their normal is the
    /// unit direction toward the viewpoint.
    pub degenerate: Vec<usize>,
}

/// PCA normals from the `k` nearest neighbors (the point itself included),
/// oriented so that `dot(normal, viewpoint - point) >= 0`.
pub fn estimate_normals(cloud: &ColorPointCloud, k: usize, viewpoint: &Vec3) -> Result<NormalEstimate> {
    if k < 3 {
        return Err(Error::domain(format!("normal estimation needs k >= 3, got {k}")));
    }
    if k > cloud.len() {
        return Err(Error::domain(format!(
            "k = {k} exceeds the point count {}",
            cloud.len()
        )));
    }
    let tree = KdTree::from_cloud(cloud);
    let results: Vec<(Vec3, bool)> = cloud
        .points()
        .par_iter()
        .map(|p| {
            let neighbors = tree.knn(p, k);
            let to_view = viewpoint - p;
            let view_dir = if to_view.norm() > 0.0 {
                to_view.normalize()
            } else {
                Vec3::z()
            };
            match pca_normal(cloud.points(), &neighbors) {
                Some(n) => {
                    let n = if n.dot(&to_view) < 0.0 { -n } else { n };
                    (n, false)
                }
                None => (view_dir, true),
            }
        })
        .collect();

    let degenerate = results
        .iter()
        .enumerate()
        .filter_map(|(i, r)| r.1.then_some(i))
        .collect();
    let normals = results.into_iter().map(|r| r.0).collect();
    Ok(NormalEstimate {
        cloud: cloud.clone().with_normals(normals)?,
        degenerate,
    })
}

/// Eigenvector of the smallest covariance eigenvalue, or `None` when the
/// neighborhood is (numerically) collinear or coincident.
fn pca_normal(points: &[Vec3], neighbors: &[usize]) -> Option<Vec3> {
    let n = neighbors.len() as f64;
    let centroid = neighbors.iter().map(|&i| points[i]).sum::<Vec3>() / n;
    let mut cov = Matrix3::zeros();
    for &i in neighbors {
        let d = points[i] - centroid;
        cov += d * d.transpose();
    }
    cov /= n;
    let eig = SymmetricEigen::new(cov);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let largest = eig.eigenvalues[order[2]];
    let middle = eig.eigenvalues[order[1]];
    if !(largest > 0.0) || middle <= 1e-12 * largest {
        return None;
    }
    let v: Vec3 = eig.eigenvectors.column(order[0]).into_owned();
    Some(v.normalize())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize, step: f64) -> ColorPointCloud {
        let mut pts = Vec::new();
        for i in 0..n {
            for j in 0..n {
                pts.push(Vec3::new(i as f64 * step, j as f64 * step, 0.0));
            }
        }
        let colors = vec![Rgb8::new(10, 20, 30); pts.len()];
        ColorPointCloud::new(pts, colors).unwrap()
    }

    #[test]
    fn single_red_vertex() {
        let text = "ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nproperty float y\n\
                    property float z\nproperty uchar red\nproperty uchar green\nproperty uchar blue\n\
                    end_header\n0 0 0 255 0 0\n";
        let cloud = parse_ply(text).unwrap();
        assert_eq!(cloud.len(), 1);
        assert_eq!(cloud.points()[0], Vec3::zeros());
        assert_eq!(cloud.colors()[0], Rgb8::new(255, 0, 0));
        assert!(cloud.normals().is_none());
    }

    #[test]
    fn missing_color_is_format_error() {
        let text = "ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nproperty float y\n\
                    property float z\nend_header\n0 0 0\n";
        assert!(matches!(parse_ply(text), Err(Error::Format(_))));
    }

    #[test]
    fn malformed_header_names_line() {
        let text = "ply\nformat ascii 1.0\nelement vertex one\nend_header\n";
        match parse_ply(text) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        let text = "ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nproperty float y\n\
                    property float z\nproperty uchar red\nproperty uchar green\nproperty uchar blue\n\
                    end_header\n0 0 zero 255 0 0\n";
        match parse_ply(text) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 11),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(parse_ply("plx\n"), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn empty_cloud_writes_zero_vertices() {
        let text = to_ply_string(&ColorPointCloud::default());
        assert!(text.contains("element vertex 0\n"));
        assert_eq!(parse_ply(&text).unwrap().len(), 0);
    }

    #[test]
    fn normals_advertised_in_header() {
        let cloud = grid(2, 1.0)
            .with_normals(vec![Vec3::z(); 4])
            .unwrap();
        let text = to_ply_string(&cloud);
        assert!(text.contains("property float nx\nproperty float ny\nproperty float nz\n"));
        assert_eq!(parse_ply(&text).unwrap(), cloud);
    }

    #[test]
    fn nearest_examples() {
        let pts = vec![
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(0.0, 2.0, 0.0),
            Vec3::new(5.0, 5.0, 5.0),
        ];
        let cloud = ColorPointCloud::new(pts.clone(), vec![Rgb8::default(); 4]).unwrap();
        assert_eq!(nearest(&pts[3], &cloud).unwrap(), 3);
        assert_eq!(nearest(&Vec3::new(0.6, 0.0, 0.0), &cloud).unwrap(), 1);
        // (0.5, 0, 0) is equidistant from 0 and 1.
        assert_eq!(nearest(&Vec3::new(0.5, 0.0, 0.0), &cloud).unwrap(), 0);
        let tree = KdTree::new(&pts);
        assert_eq!(tree.nearest(&Vec3::new(0.5, 0.0, 0.0)).unwrap(), 0);
        assert!(nearest(&Vec3::zeros(), &ColorPointCloud::default()).is_err());
        assert!(KdTree::new(&[]).nearest(&Vec3::zeros()).is_err());
    }

    #[test]
    fn kd_tree_handles_duplicates() {
        let pts = vec![Vec3::new(1.0, 1.0, 1.0); 40];
        let tree = KdTree::new(&pts);
        assert_eq!(tree.nearest(&Vec3::zeros()).unwrap(), 0);
        assert_eq!(tree.knn(&Vec3::zeros(), 3), vec![0, 1, 2]);
    }

    #[test]
    fn planar_normals_follow_viewpoint() {
        let cloud = grid(10, 0.5);
        let up = estimate_normals(&cloud, DEFAULT_NORMAL_K, &Vec3::new(0.0, 0.0, 10.0)).unwrap();
        assert!(up.degenerate.is_empty());
        for n in up.cloud.normals().unwrap() {
            assert!((n - Vec3::z()).norm() < 1e-6, "{n:?}");
        }
        let down = estimate_normals(&cloud, DEFAULT_NORMAL_K, &Vec3::new(0.0, 0.0, -10.0)).unwrap();
        for n in down.cloud.normals().unwrap() {
            assert!((n + Vec3::z()).norm() < 1e-6);
        }
    }

    #[test]
    fn normal_estimation_errors_and_degenerate_flag() {
        let cloud = grid(2, 1.0);
        assert!(estimate_normals(&cloud, 5, &Vec3::zeros()).is_err());
        assert!(estimate_normals(&cloud, 2, &Vec3::zeros()).is_err());

        let line: Vec<Vec3> = (0..6).map(|i| Vec3::new(i as f64, 0.0, 0.0)).collect();
        let cloud = ColorPointCloud::new(line, vec![Rgb8::default(); 6]).unwrap();
        let view = Vec3::new(0.0, 0.0, 10.0);
        let est = estimate_normals(&cloud, 3, &view).unwrap();
        assert_eq!(est.degenerate, (0..6).collect::<Vec<_>>());
        let n0 = est.cloud.normals().unwrap()[0];
        assert!((n0 - (view - cloud.points()[0]).normalize()).norm() < 1e-12);
    }

    #[test]
    fn rgb_norm_conversion() {
        let c = Rgb8::new(255, 0, 128).to_norm();
        assert_eq!(c[0], 1.0);
        assert_eq!(c[1], 0.0);
        assert!((c[2] - 0.501_960_784_313_725_5).abs() < 1e-15);
        assert_eq!(Rgb8::from_norm(c), Rgb8::new(255, 0, 128));
        assert_eq!(Rgb8::from_norm([-0.2, 1.3, 0.5]), Rgb8::new(0, 255, 128));
    }

    #[test]
    fn invariants_enforced() {
        assert!(ColorPointCloud::new(vec![Vec3::zeros()], vec![]).is_err());
        assert!(ColorPointCloud::new(vec![Vec3::new(f64::NAN, 0.0, 0.0)], vec![Rgb8::default()]).is_err());
        let c = ColorPointCloud::new(vec![Vec3::zeros()], vec![Rgb8::default()]).unwrap();
        assert!(c.clone().with_normals(vec![Vec3::new(0.0, 0.0, 2.0)]).is_err());
        assert!(c.with_normals(vec![]).is_err());
    }
}
