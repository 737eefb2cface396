//! Distributed clustering objective.
//!
//! A candidate solution is `k` cluster centers flattened into a vector of
//! length `2k`; its fitness is the within-cluster sum of squares of a
//! dataset, each point assigned to its nearest center (lowest index on
//! ties). Worker `i` evaluates against its own copy of the data in which
//! `i` points were replaced by uniform random points.

use std::path::Path;
use std::sync::Arc;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{ConfigError, Error, Result};
use crate::problems::{Objective, SearchDomain};

pub type Point = [f64; 2];

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    points: Vec<Point>,
}

/// Axis-aligned box `[min, max]` per coordinate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox {
    pub min: Point,
    pub max: Point,
}

impl Dataset {
    pub fn new(points: Vec<Point>) -> Result<Self, ConfigError> {
        if points.is_empty() {
            return Err(ConfigError::single(
                "data",
                "dataset must contain at least one point",
            ));
        }
        if let Some(i) = points
            .iter()
            .position(|p| !(p[0].is_finite() && p[1].is_finite()))
        {
            return Err(ConfigError::single(
                "data",
                format!("point {i} has a non-finite coordinate"),
            ));
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn bounding_box(&self) -> BoundingBox {
        let mut min = self.points[0];
        let mut max = self.points[0];
        for p in &self.points {
            for c in 0..2 {
                min[c] = min[c].min(p[c]);
                max[c] = max[c].max(p[c]);
            }
        }
        BoundingBox { min, max }
    }
}

fn dist2(a: &Point, b: &Point) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    dx * dx + dy * dy
}

/// Index of the nearest center, lowest index on ties.
fn nearest(p: &Point, centers: &[Point]) -> (usize, f64) {
    let mut best = (0, dist2(p, &centers[0]));
    for (j, c) in centers.iter().enumerate().skip(1) {
        let d = dist2(p, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

/// Within-cluster sum of squares with nearest-center assignment.
///
/// # Panics
///
/// Panics if `centers` is empty.
pub fn wcss(centers: &[Point], data: &Dataset) -> f64 {
    assert!(!centers.is_empty(), "wcss needs at least one center");
    data.points.iter().map(|p| nearest(p, centers).1).sum()
}

/// Interprets a flat `2k` vector as `k` centers.
pub fn centers_from_flat(x: &[f64]) -> Vec<Point> {
    assert!(
        x.len().is_multiple_of(2),
        "center vector must have even length"
    );
    x.chunks_exact(2).map(|c| [c[0], c[1]]).collect()
}

/// Reads two coordinate columns from a comma-separated file.
pub fn load_csv(path: &Path, columns: (usize, usize), has_header: bool) -> Result<Dataset> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let mut points = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| match e.position() {
            Some(pos) => Error::Parse {
                path: path.to_path_buf(),
                line: pos.line(),
                message: e.to_string(),
            },
            None => Error::Csv(e),
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let field = |c: usize| -> Result<f64> {
            let raw = record.get(c).ok_or_else(|| Error::Parse {
                path: path.to_path_buf(),
                line,
                message: format!("missing column {c}"),
            })?;
            raw.parse::<f64>().map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line,
                message: format!("column {c}: cannot parse '{raw}' as a number: {e}"),
            })
        };
        points.push([field(columns.0)?, field(columns.1)?]);
    }
    if points.is_empty() {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 0,
            message: "no data rows".into(),
        });
    }
    Dataset::new(points).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: 0,
        message: e.to_string(),
    })
}

/// Isotropic Gaussian blobs around centers drawn uniformly in the unit
/// square. Returns the data and the true centers.
pub fn synth_blobs(
    n_clusters: usize,
    points_per_cluster: usize,
    spread: f64,
    seed: u64,
) -> Result<(Dataset, Vec<Point>), ConfigError> {
    let mut err = ConfigError::default();
    if n_clusters == 0 {
        err.push("blob_clusters", "must be at least 1");
    }
    if points_per_cluster == 0 {
        err.push("blob_points", "must be at least 1");
    }
    if !(spread >= 0.0 && spread.is_finite()) {
        err.push(
            "blob_spread",
            format!("must be a nonnegative finite real, got {spread}"),
        );
    }
    err.into_result()?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers: Vec<Point> = (0..n_clusters)
        .map(|_| [rng.random::<f64>(), rng.random::<f64>()])
        .collect();
    let noise = Normal::new(0.0, spread).expect("spread validated");
    let mut points = Vec::with_capacity(n_clusters * points_per_cluster);
    for c in &centers {
        for _ in 0..points_per_cluster {
            points.push([c[0] + noise.sample(&mut rng), c[1] + noise.sample(&mut rng)]);
        }
    }
    Ok((Dataset::new(points)?, centers))
}

/// Copy of `data` with `count` points, chosen without replacement, swapped
/// for uniform random points inside `bbox`.
///
/// # Panics
///
/// Panics if `count` exceeds the dataset size.
pub fn replace_points<R: Rng + ?Sized>(
    data: &Dataset,
    count: usize,
    bbox: &BoundingBox,
    rng: &mut R,
) -> Dataset {
    assert!(
        count <= data.len(),
        "cannot replace {count} of {} points",
        data.len()
    );
    let mut points = data.points.clone();
    for i in index::sample(rng, data.len(), count) {
        let u: f64 = rng.random();
        let v: f64 = rng.random();
        points[i] = [
            bbox.min[0] + u * (bbox.max[0] - bbox.min[0]),
            bbox.min[1] + v * (bbox.max[1] - bbox.min[1]),
        ];
    }
    Dataset { points }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub centers: Vec<Point>,
    pub wcss: f64,
    /// WCSS after every assignment step.
    pub history: Vec<f64>,
}

/// Lloyd's algorithm from `k` distinct random data points.
pub fn kmeans_oracle(
    data: &Dataset,
    k: usize,
    seed: u64,
    max_iters: usize,
) -> Result<KMeansResult, ConfigError> {
    let mut err = ConfigError::default();
    if k == 0 || k > data.len() {
        err.push("k", format!("must be in 1..={}, got {k}", data.len()));
    }
    if max_iters == 0 {
        err.push("max_iters", "must be at least 1");
    }
    err.into_result()?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers: Vec<Point> = index::sample(&mut rng, data.len(), k)
        .into_iter()
        .map(|i| data.points[i])
        .collect();
    let mut assignment = vec![usize::MAX; data.len()];
    let mut history = Vec::new();

    for _ in 0..max_iters {
        let mut changed = false;
        let mut cost = 0.0;
        for (a, p) in assignment.iter_mut().zip(&data.points) {
            let (j, d) = nearest(p, &centers);
            changed |= *a != j;
            *a = j;
            cost += d;
        }
        history.push(cost);
        if !changed {
            break;
        }
        let mut sums = vec![[0.0, 0.0]; k];
        let mut counts = vec![0usize; k];
        for (a, p) in assignment.iter().zip(&data.points) {
            sums[*a][0] += p[0];
            sums[*a][1] += p[1];
            counts[*a] += 1;
        }
        for j in 0..k {
            centers[j] = if counts[j] > 0 {
                [sums[j][0] / counts[j] as f64, sums[j][1] / counts[j] as f64]
            } else {
                data.points[rng.random_range(0..data.len())]
            };
        }
    }
    let wcss = wcss(&centers, data);
    Ok(KMeansResult {
        centers,
        wcss,
        history,
    })
}

/// `k` centers over a base dataset.
#[derive(Debug, Clone)]
pub struct ClusteringProblem {
    k: usize,
    base: Arc<Dataset>,
    bbox: BoundingBox,
    domain: SearchDomain,
}

impl ClusteringProblem {
    pub fn new(k: usize, base: Dataset) -> Result<Self, ConfigError> {
        if k == 0 || k > base.len() {
            return Err(ConfigError::single(
                "k",
                format!("must be in 1..={}, got {k}", base.len()),
            ));
        }
        let bbox = base.bounding_box();
        let mut lower = Vec::with_capacity(2 * k);
        let mut upper = Vec::with_capacity(2 * k);
        for _ in 0..k {
            for c in 0..2 {
                let (lo, hi) = if bbox.min[c] < bbox.max[c] {
                    (bbox.min[c], bbox.max[c])
                } else {
                    (bbox.min[c] - 0.5, bbox.max[c] + 0.5)
                };
                lower.push(lo);
                upper.push(hi);
            }
        }
        let domain = SearchDomain::new(lower, upper)?;
        Ok(Self {
            k,
            base: Arc::new(base),
            bbox,
            domain,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn base(&self) -> &Dataset {
        &self.base
    }

    pub fn bounding_box(&self) -> &BoundingBox {
        &self.bbox
    }

    pub fn domain(&self) -> &SearchDomain {
        &self.domain
    }

    /// WCSS against `data` as an objective over flattened centers.
    pub fn objective_for(&self, name: &str, data: Arc<Dataset>) -> Objective {
        Objective::new(name, self.domain.clone(), move |x| {
            wcss(&centers_from_flat(x), &data)
        })
    }

    /// WCSS against the uncorrupted base data.
    pub fn objective(&self) -> Objective {
        self.objective_for("wcss", Arc::clone(&self.base))
    }

    /// Objective seen by worker `worker_index` (one-based): `worker_index`
    /// of its points were replaced.
    pub fn worker_objective<R: Rng + ?Sized>(&self, worker_index: usize, rng: &mut R) -> Objective {
        let data = replace_points(&self.base, worker_index, &self.bbox, rng);
        self.objective_for(&format!("wcss[worker {worker_index}]"), Arc::new(data))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn brute_force_wcss(centers: &[Point], data: &Dataset) -> f64 {
        let table: Vec<Vec<f64>> = data
            .points()
            .iter()
            .map(|p| {
                centers
                    .iter()
                    .map(|c| (p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2))
                    .collect()
            })
            .collect();
        table
            .iter()
            .map(|row| row.iter().copied().fold(f64::INFINITY, f64::min))
            .sum()
    }

    #[test]
    fn wcss_hand_values() {
        let d = Dataset::new(vec![[0.0, 0.0], [2.0, 0.0]]).unwrap();
        assert_eq!(wcss(&[[1.0, 0.0]], &d), 2.0);
        assert_eq!(wcss(d.points(), &d), 0.0);
    }

    #[test]
    fn wcss_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let pts: Vec<Point> = (0..10).map(|_| [rng.random(), rng.random()]).collect();
            let d = Dataset::new(pts).unwrap();
            let centers: Vec<Point> = (0..3).map(|_| [rng.random(), rng.random()]).collect();
            let a = wcss(&centers, &d);
            let b = brute_force_wcss(&centers, &d);
            assert!((a - b).abs() <= 1e-9 * b.max(1e-300));
        }
    }

    #[test]
    #[should_panic]
    fn wcss_without_centers() {
        let d = Dataset::new(vec![[0.0, 0.0]]).unwrap();
        wcss(&[], &d);
    }

    #[test]
    fn csv_loading() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.csv");
        std::fs::write(&p, "0,0\n1,1\n2,2\n").unwrap();
        let d = load_csv(&p, (0, 1), false).unwrap();
        assert_eq!(d.points(), &[[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]]);

        let h = dir.path().join("h.csv");
        let mut f = std::fs::File::create(&h).unwrap();
        writeln!(f, "id,lon,lat").unwrap();
        writeln!(f, "1,-0.12,51.5").unwrap();
        writeln!(f, "2,-2.24,53.48").unwrap();
        let d = load_csv(&h, (1, 2), true).unwrap();
        assert_eq!(d.points()[1], [-2.24, 53.48]);

        let e = dir.path().join("e.csv");
        std::fs::write(&e, "").unwrap();
        assert!(load_csv(&e, (0, 1), false).is_err());

        let bad = dir.path().join("bad.csv");
        std::fs::write(&bad, "0,0\n1,x\n").unwrap();
        match load_csv(&bad, (0, 1), false).unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other}"),
        }

        match load_csv(&dir.path().join("missing.csv"), (0, 1), false).unwrap_err() {
            Error::Io { .. } => {}
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn blobs() {
        let (d, c) = synth_blobs(1, 100, 0.0, 3).unwrap();
        assert!(d.points().iter().all(|p| *p == c[0]));
        assert_eq!(
            synth_blobs(3, 50, 0.1, 9).unwrap(),
            synth_blobs(3, 50, 0.1, 9).unwrap()
        );
        for seed in 0..20 {
            let (d, truth) = synth_blobs(4, 250, 0.1, seed).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 1000);
            let bb = d.bounding_box();
            let random: Vec<Point> = (0..4)
                .map(|_| {
                    [
                        rng.random_range(bb.min[0]..=bb.max[0]),
                        rng.random_range(bb.min[1]..=bb.max[1]),
                    ]
                })
                .collect();
            assert!(wcss(&truth, &d) < wcss(&random, &d));
        }
        assert!(synth_blobs(0, 1, 0.1, 0).is_err());
    }

    fn changed_points(a: &Dataset, b: &Dataset) -> usize {
        // Multiset difference.
        let key = |p: &Point| (p[0].to_bits(), p[1].to_bits());
        let mut left: Vec<_> = a.points().iter().map(key).collect();
        let mut right: Vec<_> = b.points().iter().map(key).collect();
        left.sort_unstable();
        right.sort_unstable();
        let (mut i, mut j, mut common) = (0, 0, 0);
        while i < left.len() && j < right.len() {
            match left[i].cmp(&right[j]) {
                std::cmp::Ordering::Equal => {
                    common += 1;
                    i += 1;
                    j += 1;
                }
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
            }
        }
        a.len() - common
    }

    #[test]
    fn replacement_changes_exactly_i_points() {
        let (d, _) = synth_blobs(2, 50, 0.2, 1).unwrap();
        let bb = d.bounding_box();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for i in [1, 7, 50, 100] {
            let r = replace_points(&d, i, &bb, &mut rng);
            assert_eq!(changed_points(&d, &r), i);
            assert_eq!(r.len(), d.len());
        }
        assert_eq!(changed_points(&d, &d), 0);
    }

    #[test]
    #[should_panic]
    fn replacement_beyond_count() {
        let d = Dataset::new(vec![[0.0, 0.0]]).unwrap();
        let bb = d.bounding_box();
        replace_points(&d, 2, &bb, &mut ChaCha8Rng::seed_from_u64(0));
    }

    #[test]
    fn kmeans_properties() {
        let d = Dataset::new(vec![[0.0, 0.0], [5.0, 1.0], [3.0, 9.0]]).unwrap();
        let r = kmeans_oracle(&d, 3, 1, 10).unwrap();
        assert_eq!(r.history[0], 0.0);
        assert_eq!(r.wcss, 0.0);

        for seed in 0..10 {
            let (d, _) = synth_blobs(5, 60, 0.15, seed).unwrap();
            let r = kmeans_oracle(&d, 5, seed, 100).unwrap();
            assert!(r.history.windows(2).all(|w| w[1] <= w[0] + 1e-12));
            assert!(r.wcss <= r.history[0] + 1e-12);
        }
        assert!(kmeans_oracle(&d, 4, 0, 10).is_err());
    }

    #[test]
    fn problem_domain_encloses_data() {
        let (d, _) = synth_blobs(3, 20, 0.1, 4).unwrap();
        let p = ClusteringProblem::new(3, d.clone()).unwrap();
        assert_eq!(p.domain().dim(), 6);
        for pt in d.points() {
            assert!(p
                .domain()
                .contains(&[pt[0], pt[1], pt[0], pt[1], pt[0], pt[1]]));
        }
        let f = p.objective();
        let x: Vec<f64> = (0..6).map(|i| p.domain().lower()[i]).collect();
        assert_eq!(f.eval(&x), wcss(&centers_from_flat(&x), &d));
        assert!(ClusteringProblem::new(61, d).is_err());
    }
}
