use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rustc_hash::FxHashMap;

use crate::geometry::Point3;

type CellKey = (i64, i64, i64);

/// Uniform 3D grid hash over a point slice, for radius and k-nearest
/// queries. Non-finite points are never indexed.
///
/// Query results are deterministic: candidates are visited in a fixed cell
/// order and ties in k-NN are broken by index.
pub struct SpatialGrid {
    cell: f64,
    cells: FxHashMap<CellKey, (u32, u32)>,
    order: Vec<u32>,
    /// Copies of the indexed points in `order`, scanned contiguously.
    sorted: Vec<Point3>,
    indexed: usize,
    key_lo: CellKey,
    key_hi: CellKey,
}

impl SpatialGrid {
    /// Indexes every finite point.
    pub fn new(points: &[Point3], cell: f64) -> Self {
        Self::with_subset(points, cell, (0..points.len()).collect::<Vec<_>>().as_slice())
    }

    /// Indexes only `subset` (finite members of it).
    pub fn with_subset(points: &[Point3], cell: f64, subset: &[usize]) -> Self {
        assert!(cell > 0.0 && cell.is_finite(), "grid cell must be positive");
        let mut keyed: Vec<(CellKey, u32)> = subset
            .iter()
            .filter(|&&i| points[i].coords.iter().all(|c| c.is_finite()))
            .map(|&i| (key_of(&points[i], cell), i as u32))
            .collect();
        keyed.sort_unstable();
        let mut cells = FxHashMap::default();
        let mut start = 0usize;
        while start < keyed.len() {
            let key = keyed[start].0;
            let mut end = start + 1;
            while end < keyed.len() && keyed[end].0 == key {
                end += 1;
            }
            cells.insert(key, (start as u32, end as u32));
            start = end;
        }
        let indexed = keyed.len();
        let mut key_lo = (i64::MAX, i64::MAX, i64::MAX);
        let mut key_hi = (i64::MIN, i64::MIN, i64::MIN);
        for k in cells.keys() {
            key_lo = (key_lo.0.min(k.0), key_lo.1.min(k.1), key_lo.2.min(k.2));
            key_hi = (key_hi.0.max(k.0), key_hi.1.max(k.1), key_hi.2.max(k.2));
        }
        let order: Vec<u32> = keyed.into_iter().map(|(_, i)| i).collect();
        let sorted = order.iter().map(|&i| points[i as usize]).collect();
        Self { cell, cells, order, sorted, indexed, key_lo, key_hi }
    }

    /// Cell edge chosen so that a k-NN query touches a handful of cells,
    /// assuming the points sample a surface.
    pub fn knn_cell_size(points: &[Point3], k: usize) -> f64 {
        let finite: Vec<&Point3> = points.iter().filter(|p| p.coords.iter().all(|c| c.is_finite())).collect();
        if finite.len() < 2 {
            return 1.0;
        }
        let (mut lo, mut hi) = (*finite[0], *finite[0]);
        for p in &finite {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        let mut ext = [hi.x - lo.x, hi.y - lo.y, hi.z - lo.z];
        ext.sort_by(|a, b| b.total_cmp(a));
        let area = (ext[0] * ext[1]).max(ext[0] * ext[0] * 1e-4).max(1e-12);
        let spacing = (area / finite.len() as f64).sqrt();
        (spacing * (k.max(1) as f64).sqrt()).max(1e-9)
    }

    /// Indexed points grouped by cell, for cache-friendly sweeps.
    pub fn cell_order(&self) -> impl Iterator<Item = usize> + '_ {
        self.order.iter().map(|&i| i as usize)
    }

    pub fn cell_size(&self) -> f64 {
        self.cell
    }

    pub fn len(&self) -> usize {
        self.indexed
    }

    pub fn is_empty(&self) -> bool {
        self.indexed == 0
    }

    fn cell_members(&self, key: &CellKey) -> (&[u32], &[Point3]) {
        match self.cells.get(key) {
            Some(&(s, e)) => (&self.order[s as usize..e as usize], &self.sorted[s as usize..e as usize]),
            None => (&[], &[]),
        }
    }

    /// Indices of indexed points within `radius` of `q` (inclusive), appended
    /// to `out` after clearing it.
    pub fn radius_into(&self, q: &Point3, radius: f64, out: &mut Vec<usize>) {
        out.clear();
        let r2 = radius * radius;
        let span = (radius / self.cell).ceil() as i64;
        let (cx, cy, cz) = key_of(q, self.cell);
        let cube = (2 * span + 1).pow(3) as usize;
        if cube > self.cells.len() {
            // sparse grid: scan occupied cells instead of the cube
            let mut keys: Vec<&CellKey> = self
                .cells
                .keys()
                .filter(|k| (k.0 - cx).abs() <= span && (k.1 - cy).abs() <= span && (k.2 - cz).abs() <= span)
                .collect();
            keys.sort_unstable();
            for key in keys {
                self.push_within(key, q, r2, out);
            }
            return;
        }
        for dx in -span..=span {
            for dy in -span..=span {
                for dz in -span..=span {
                    self.push_within(&(cx + dx, cy + dy, cz + dz), q, r2, out);
                }
            }
        }
    }

    fn push_within(&self, key: &CellKey, q: &Point3, r2: f64, out: &mut Vec<usize>) {
        let (ids, pts) = self.cell_members(key);
        for (&i, p) in ids.iter().zip(pts) {
            if (p - q).norm_squared() <= r2 {
                out.push(i as usize);
            }
        }
    }

    pub fn radius(&self, q: &Point3, radius: f64) -> Vec<usize> {
        let mut out = Vec::new();
        self.radius_into(q, radius, &mut out);
        out
    }

    /// The `k` nearest indexed points to `q` as `(index, squared distance)`,
    /// nearest first, optionally excluding one index.
    pub fn knn(&self, q: &Point3, k: usize, exclude: Option<usize>) -> Vec<(usize, f64)> {
        if k == 0 || self.indexed == 0 {
            return Vec::new();
        }
        let available = self.indexed - usize::from(exclude.is_some());
        let want = k.min(available);
        // max-heap of the best `want` so far, worst on top
        let mut best: BinaryHeap<Candidate> = BinaryHeap::with_capacity(want + 1);
        let center = key_of(q, self.cell);
        let max_ring = self.max_ring_from(&center);
        let mut ring = 0i64;
        loop {
            self.visit_ring(&center, ring, |i, p| {
                if Some(i) == exclude {
                    return;
                }
                let c = Candidate((p - q).norm_squared(), i);
                if best.len() < want {
                    best.push(c);
                } else if c < *best.peek().expect("heap holds `want` items") {
                    best.pop();
                    best.push(c);
                }
            });
            let reach = ring as f64 * self.cell;
            let done = best.len() == want && best.peek().is_some_and(|c| c.0 <= reach * reach);
            if done || ring >= max_ring {
                break;
            }
            ring += 1;
        }
        best.into_sorted_vec().into_iter().map(|Candidate(d, i)| (i, d)).collect()
    }

    fn max_ring_from(&self, c: &CellKey) -> i64 {
        let (lo, hi) = (self.key_lo, self.key_hi);
        [c.0 - lo.0, hi.0 - c.0, c.1 - lo.1, hi.1 - c.1, c.2 - lo.2, hi.2 - c.2]
            .into_iter()
            .fold(0, i64::max)
    }

    fn visit_ring(&self, c: &CellKey, ring: i64, mut f: impl FnMut(usize, &Point3)) {
        let side = (2 * ring + 1) as usize;
        let shell = side.pow(3) - (side.saturating_sub(2)).pow(3);
        if ring > 0 && shell > self.cells.len() {
            let mut keys: Vec<&CellKey> = self
                .cells
                .keys()
                .filter(|k| (k.0 - c.0).abs().max((k.1 - c.1).abs()).max((k.2 - c.2).abs()) == ring)
                .collect();
            keys.sort_unstable();
            for key in keys {
                let (ids, pts) = self.cell_members(key);
                for (&i, p) in ids.iter().zip(pts) {
                    f(i as usize, p);
                }
            }
            return;
        }
        for dx in -ring..=ring {
            for dy in -ring..=ring {
                for dz in -ring..=ring {
                    if dx.abs().max(dy.abs()).max(dz.abs()) != ring {
                        continue;
                    }
                    let (ids, pts) = self.cell_members(&(c.0 + dx, c.1 + dy, c.2 + dz));
                    for (&i, p) in ids.iter().zip(pts) {
                        f(i as usize, p);
                    }
                }
            }
        }
    }
}

/// Squared distance and index, ordered by distance then index.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Candidate(f64, usize);

impl Eq for Candidate {}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0).then(self.1.cmp(&other.1))
    }
}

fn key_of(p: &Point3, cell: f64) -> CellKey {
    ((p.x / cell).floor() as i64, (p.y / cell).floor() as i64, (p.z / cell).floor() as i64)
}
