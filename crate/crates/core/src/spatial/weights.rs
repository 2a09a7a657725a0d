use std::collections::{BTreeSet, HashMap};
use std::io::BufRead;

use super::SpatialError;

/// Binary contiguity weights over an ordered set of units.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialWeights {
    unit_ids: Vec<String>,
    neighbors: Vec<Vec<usize>>,
    row_standardized: bool,
}

impl SpatialWeights {
    /// Builds weights from neighbor index lists. Lists are sorted and
    /// deduplicated; self-links, out-of-range indices and one-way links are
    /// rejected.
    pub fn from_neighbors(unit_ids: Vec<String>, mut neighbors: Vec<Vec<usize>>) -> Result<Self, SpatialError> {
        let n = unit_ids.len();
        if neighbors.len() != n {
            return Err(SpatialError::Shape(format!(
                "{} neighbor lists for {} units",
                neighbors.len(),
                n
            )));
        }
        for (i, list) in neighbors.iter_mut().enumerate() {
            list.sort_unstable();
            list.dedup();
            if let Some(&j) = list.iter().find(|&&j| j >= n) {
                return Err(SpatialError::Shape(format!("unit {i} lists neighbor index {j} out of range")));
            }
            if list.binary_search(&i).is_ok() {
                return Err(SpatialError::SelfNeighbor(unit_ids[i].clone()));
            }
        }
        for i in 0..n {
            for &j in &neighbors[i] {
                if neighbors[j].binary_search(&i).is_err() {
                    return Err(SpatialError::Asymmetric(unit_ids[i].clone(), unit_ids[j].clone()));
                }
            }
        }
        Ok(Self {
            unit_ids,
            neighbors,
            row_standardized: false,
        })
    }

    pub fn n_units(&self) -> usize {
        self.unit_ids.len()
    }

    pub fn unit_ids(&self) -> &[String] {
        &self.unit_ids
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbors[i].len()
    }

    pub fn degrees(&self) -> Vec<usize> {
        self.neighbors.iter().map(Vec::len).collect()
    }

    pub fn is_row_standardized(&self) -> bool {
        self.row_standardized
    }

    /// Indices of units without neighbors.
    pub fn isolated(&self) -> Vec<usize> {
        (0..self.n_units()).filter(|&i| self.neighbors[i].is_empty()).collect()
    }

    pub fn isolated_ids(&self) -> Vec<String> {
        self.isolated().into_iter().map(|i| self.unit_ids[i].clone()).collect()
    }

    /// Weight of the link `i -> j`; zero when `j` is not a neighbor of `i`.
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        if self.neighbors[i].binary_search(&j).is_err() {
            0.0
        } else if self.row_standardized {
            1.0 / self.neighbors[i].len() as f64
        } else {
            1.0
        }
    }

    /// Sum of all weights.
    pub fn s0(&self) -> f64 {
        if self.row_standardized {
            self.neighbors.iter().filter(|l| !l.is_empty()).count() as f64
        } else {
            self.neighbors.iter().map(Vec::len).sum::<usize>() as f64
        }
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.n_units()).all(|i| {
            self.neighbors[i]
                .iter()
                .all(|&j| self.neighbors[j].binary_search(&i).is_ok())
        })
    }

    /// Same neighbor structure with rows scaled to sum to one.
    pub fn row_standardize(&self) -> Self {
        Self {
            row_standardized: true,
            ..self.clone()
        }
    }

    /// Restriction to `keep` (indices into this set), renumbered in the
    /// given order.
    pub fn subset(&self, keep: &[usize]) -> Self {
        let mut new_index = vec![usize::MAX; self.n_units()];
        for (k, &i) in keep.iter().enumerate() {
            new_index[i] = k;
        }
        let neighbors = keep
            .iter()
            .map(|&i| {
                let mut l: Vec<usize> = self.neighbors[i]
                    .iter()
                    .map(|&j| new_index[j])
                    .filter(|&j| j != usize::MAX)
                    .collect();
                l.sort_unstable();
                l
            })
            .collect();
        Self {
            unit_ids: keep.iter().map(|&i| self.unit_ids[i].clone()).collect(),
            neighbors,
            row_standardized: self.row_standardized,
        }
    }

    /// The same weights with units in the order of `unit_ids`, which must be
    /// a permutation of this set's ids.
    pub fn reordered(&self, unit_ids: &[String]) -> Result<Self, SpatialError> {
        let pos: HashMap<&str, usize> = self
            .unit_ids
            .iter()
            .enumerate()
            .map(|(i, u)| (u.as_str(), i))
            .collect();
        let wanted: BTreeSet<&str> = unit_ids.iter().map(String::as_str).collect();
        let missing: Vec<String> = unit_ids
            .iter()
            .filter(|u| !pos.contains_key(u.as_str()))
            .cloned()
            .collect();
        let unexpected: Vec<String> = self
            .unit_ids
            .iter()
            .filter(|u| !wanted.contains(u.as_str()))
            .cloned()
            .collect();
        if !missing.is_empty() || !unexpected.is_empty() || wanted.len() != unit_ids.len() {
            return Err(SpatialError::UnitMismatch { missing, unexpected });
        }
        let order: Vec<usize> = unit_ids.iter().map(|u| pos[u.as_str()]).collect();
        Ok(self.subset(&order))
    }
}

/// A polygon ring as a sequence of vertices; closing vertex optional.
pub type Ring = Vec<[f64; 2]>;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Polygon {
    pub exterior: Ring,
    pub holes: Vec<Ring>,
}

impl Polygon {
    pub fn new(exterior: Ring) -> Self {
        Self {
            exterior,
            holes: Vec::new(),
        }
    }

    fn vertices(&self) -> impl Iterator<Item = &[f64; 2]> {
        self.exterior.iter().chain(self.holes.iter().flatten())
    }

    /// Signed shoelace area of the exterior ring.
    pub fn signed_area(&self) -> f64 {
        ring_moments(&self.exterior).0
    }
}

/// Signed area and area-weighted centroid sums of a ring.
fn ring_moments(ring: &[[f64; 2]]) -> (f64, f64, f64) {
    let n = ring.len();
    let (mut a, mut cx, mut cy) = (0.0, 0.0, 0.0);
    for k in 0..n {
        let p = ring[k];
        let q = ring[(k + 1) % n];
        let cross = p[0] * q[1] - q[0] * p[1];
        a += cross;
        cx += (p[0] + q[0]) * cross;
        cy += (p[1] + q[1]) * cross;
    }
    (a / 2.0, cx, cy)
}

/// Parts of one areal unit (a multipolygon).
pub type UnitGeometry = Vec<Polygon>;

/// Area-weighted centroid of a unit, holes subtracted. Falls back to the
/// vertex mean for degenerate (zero-area) geometry.
pub fn centroid(geometry: &UnitGeometry) -> Option<[f64; 2]> {
    let (mut a, mut cx, mut cy) = (0.0, 0.0, 0.0);
    for poly in geometry {
        let orient = |r: &[[f64; 2]]| ring_moments(r);
        let (ea, ex, ey) = orient(&poly.exterior);
        let s = ea.signum();
        a += ea * s;
        cx += ex * s;
        cy += ey * s;
        for h in &poly.holes {
            let (ha, hx, hy) = orient(h);
            let t = ha.signum();
            a -= ha * t;
            cx -= hx * t;
            cy -= hy * t;
        }
    }
    if a.abs() > 0.0 {
        return Some([cx / (6.0 * a), cy / (6.0 * a)]);
    }
    let pts: Vec<&[f64; 2]> = geometry.iter().flat_map(|p| p.vertices()).collect();
    if pts.is_empty() {
        return None;
    }
    let n = pts.len() as f64;
    Some([
        pts.iter().map(|p| p[0]).sum::<f64>() / n,
        pts.iter().map(|p| p[1]).sum::<f64>() / n,
    ])
}

/// Default vertex quantization step for contiguity matching.
pub const DEFAULT_QUANTUM: f64 = 1e-6;

/// Queen contiguity: two units are neighbors when they share at least one
/// vertex after rounding coordinates to multiples of `quantum`.
///
/// Returns the weights and the ids of isolated units.
pub fn queen_contiguity(
    unit_ids: &[String],
    geometries: &[UnitGeometry],
    quantum: f64,
) -> Result<(SpatialWeights, Vec<String>), SpatialError> {
    if unit_ids.len() != geometries.len() {
        return Err(SpatialError::Shape(format!(
            "{} geometries for {} units",
            geometries.len(),
            unit_ids.len()
        )));
    }
    if !(quantum > 0.0 && quantum.is_finite()) {
        return Err(SpatialError::InvalidConfig(format!("quantum must be positive, got {quantum}")));
    }
    let mut owners: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    for (i, geom) in geometries.iter().enumerate() {
        let mut any = false;
        for v in geom.iter().flat_map(Polygon::vertices) {
            if !(v[0].is_finite() && v[1].is_finite()) {
                return Err(SpatialError::InvalidGeometry(unit_ids[i].clone()));
            }
            any = true;
            let key = ((v[0] / quantum).round() as i64, (v[1] / quantum).round() as i64);
            let list = owners.entry(key).or_default();
            if list.last() != Some(&i) {
                list.push(i);
            }
        }
        if !any {
            return Err(SpatialError::EmptyGeometry(unit_ids[i].clone()));
        }
    }
    let mut neighbors: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); unit_ids.len()];
    for list in owners.values() {
        for &a in list {
            for &b in list {
                if a != b {
                    neighbors[a].insert(b);
                }
            }
        }
    }
    let w = SpatialWeights::from_neighbors(
        unit_ids.to_vec(),
        neighbors.into_iter().map(|s| s.into_iter().collect()).collect(),
    )?;
    let isolated = w.isolated_ids();
    Ok((w, isolated))
}

/// Reads an adjacency list with one line per unit: `unit_id: n1 n2 ...`.
/// Neighbors may be separated by whitespace or commas. Blank lines and lines
/// starting with `#` are skipped. Every unit must have its own line.
pub fn parse_adjacency_list<R: BufRead>(reader: R) -> Result<SpatialWeights, SpatialError> {
    let mut ids: Vec<String> = Vec::new();
    let mut raw: Vec<Vec<String>> = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let (id, rest) = t.split_once(':').ok_or_else(|| SpatialError::Parse {
            line: lineno + 1,
            reason: "expected `unit_id: neighbor ...`".into(),
        })?;
        let id = id.trim();
        if id.is_empty() {
            return Err(SpatialError::Parse {
                line: lineno + 1,
                reason: "empty unit id".into(),
            });
        }
        ids.push(id.to_owned());
        raw.push(
            rest.split(|c: char| c.is_whitespace() || c == ',')
                .filter(|s| !s.is_empty())
                .map(str::to_owned)
                .collect(),
        );
    }
    let pos: HashMap<&str, usize> = ids.iter().enumerate().map(|(i, u)| (u.as_str(), i)).collect();
    if pos.len() != ids.len() {
        let mut seen = BTreeSet::new();
        let dup = ids.iter().find(|u| !seen.insert(u.as_str())).expect("a duplicate exists");
        return Err(SpatialError::DuplicateUnit(dup.clone()));
    }
    let neighbors = raw
        .iter()
        .map(|list| {
            list.iter()
                .map(|n| pos.get(n.as_str()).copied().ok_or_else(|| SpatialError::UnknownUnit(n.clone())))
                .collect::<Result<Vec<_>, _>>()
        })
        .collect::<Result<Vec<_>, _>>()?;
    SpatialWeights::from_neighbors(ids, neighbors)
}

/// Unit squares `(c, r)..(c+1, r+1)` on a `cols × rows` grid, row-major from
/// the origin.
pub fn grid_polygons(cols: usize, rows: usize) -> Vec<UnitGeometry> {
    let mut out = Vec::with_capacity(cols * rows);
    for r in 0..rows {
        for c in 0..cols {
            let (x, y) = (c as f64, r as f64);
            out.push(vec![Polygon::new(vec![
                [x, y],
                [x + 1.0, y],
                [x + 1.0, y + 1.0],
                [x, y + 1.0],
                [x, y],
            ])]);
        }
    }
    out
}
