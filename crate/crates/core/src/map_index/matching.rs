use serde::{Deserialize, Serialize};

use super::MapFeatureDB;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DescriptorMatch {
    pub query: usize,
    pub map: usize,
    /// Euclidean descriptor distance.
    pub distance: f64,
}

/// At most one match per query index, in increasing query order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MatchSet {
    pub matches: Vec<DescriptorMatch>,
}

impl MatchSet {
    pub fn len(&self) -> usize {
        self.matches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matches.is_empty()
    }
}

const CHUNK: usize = 16;

/// Squared distance with four independent accumulators, abandoning once the
/// running total exceeds `bound`. Returns `None` when abandoned.
#[inline]
fn bounded_sq_distance(a: &[f64], b: &[f64], bound: f64) -> Option<f64> {
    let mut acc = [0.0f64; 4];
    let mut i = 0;
    let n = a.len();
    while i < n {
        let end = (i + CHUNK).min(n);
        let (ca, cb) = (&a[i..end], &b[i..end]);
        let mut quads_a = ca.chunks_exact(4);
        let mut quads_b = cb.chunks_exact(4);
        for (qa, qb) in (&mut quads_a).zip(&mut quads_b) {
            for k in 0..4 {
                let d = qa[k] - qb[k];
                acc[k] += d * d;
            }
        }
        for (x, y) in quads_a.remainder().iter().zip(quads_b.remainder()) {
            let d = x - y;
            acc[0] += d * d;
        }
        i = end;
        // Each accumulator only grows, so the partial total bounds the final one.
        if i < n && (acc[0] + acc[1]) + (acc[2] + acc[3]) > bound {
            return None;
        }
    }
    Some((acc[0] + acc[1]) + (acc[2] + acc[3]))
}

/// Exact nearest-neighbor matching with an optional ratio test.
///
/// For every query the closest and second-closest database entries are found
/// by exhaustive search (ties go to the lower index). The match is kept iff
/// `d_best < ratio · d_second`; `ratio = 1` disables the test and keeps every
/// query.
pub fn match_descriptors<Q: AsRef<[f64]>>(query: &[Q], db: &MapFeatureDB, ratio: f64) -> Result<MatchSet> {
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(Error::invalid("ratio", format!("{ratio} outside (0, 1]")));
    }
    let dim = db.descriptor_dim;
    for q in query {
        if q.as_ref().len() != dim {
            return Err(Error::invalid(
                "query",
                format!("descriptor length {} != database dimension {dim}", q.as_ref().len()),
            ));
        }
    }
    let mut matches = Vec::new();
    if db.is_empty() {
        return Ok(MatchSet { matches });
    }
    let flat = db.flat_descriptors();
    let ratio_sq = ratio * ratio;
    for (qi, q) in query.iter().enumerate() {
        let q = q.as_ref();
        let (mut best, mut best_j, mut second) = (f64::INFINITY, 0usize, f64::INFINITY);
        for (j, entry) in flat.chunks_exact(dim).enumerate() {
            if let Some(d) = bounded_sq_distance(q, entry, second) {
                if d < best {
                    second = best;
                    best = d;
                    best_j = j;
                } else if d < second {
                    second = d;
                }
            }
        }
        if ratio >= 1.0 || best < ratio_sq * second {
            matches.push(DescriptorMatch {
                query: qi,
                map: best_j,
                distance: best.sqrt(),
            });
        }
    }
    Ok(MatchSet { matches })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frames::MapGeometry;
    use crate::sim::{random_unit_vector, stream_rng};
    use nalgebra::Vector2;
    use proptest::prelude::*;
    use rand::seq::SliceRandom;

    fn db_with(descs: &[Vec<f64>]) -> MapFeatureDB {
        let mut db = MapFeatureDB::new(MapGeometry::new(0.3, 100, 100).unwrap(), 10, descs[0].len()).unwrap();
        for (j, d) in descs.iter().enumerate() {
            db.push(d, Vector2::new(j as f64, 0.0)).unwrap();
        }
        db
    }

    fn random_db(seed: u64, n: usize, dim: usize) -> MapFeatureDB {
        let mut rng = stream_rng(seed, 0);
        db_with(&(0..n).map(|_| random_unit_vector(dim, &mut rng)).collect::<Vec<_>>())
    }

    /// Plain double loop, single running sum, no pruning.
    fn oracle(query: &[Vec<f64>], db: &MapFeatureDB, ratio: f64) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::new();
        for (i, q) in query.iter().enumerate() {
            let mut dists: Vec<(f64, usize)> = (0..db.len())
                .map(|j| {
                    let d: f64 = q.iter().zip(db.descriptor(j)).map(|(a, b)| (a - b) * (a - b)).sum();
                    (d.sqrt(), j)
                })
                .collect();
            dists.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
            let best = dists[0];
            let second = dists.get(1).map_or(f64::INFINITY, |d| d.0);
            if ratio == 1.0 || best.0 < ratio * second {
                out.push((i, best.1, best.0));
            }
        }
        out
    }

    #[test]
    fn exact_hit() {
        let db = random_db(1, 50, 32);
        let q = vec![db.descriptor(17).to_vec()];
        let m = match_descriptors(&q, &db, 1.0).unwrap();
        assert_eq!(m.matches, vec![DescriptorMatch { query: 0, map: 17, distance: 0.0 }]);
    }

    #[test]
    fn ambiguous_query_rejected_by_ratio() {
        let a = vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        let b = vec![0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        let db = db_with(&[a, b]);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let q = vec![vec![h, h, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]];
        assert!(match_descriptors(&q, &db, 0.8).unwrap().is_empty());
    }

    #[test]
    fn ties_go_to_lower_index() {
        let d = vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        let db = db_with(&[vec![0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0], d.clone(), d.clone()]);
        assert_eq!(match_descriptors(std::slice::from_ref(&d), &db, 1.0).unwrap().matches[0].map, 1);
        // Duplicates are indistinguishable, so any ratio test rejects them.
        assert!(match_descriptors(std::slice::from_ref(&d), &db, 0.99).unwrap().is_empty());
        let db1 = db_with(std::slice::from_ref(&d));
        assert_eq!(match_descriptors(&[d], &db1, 0.8).unwrap().matches[0].map, 0);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let db = random_db(1, 10, 32);
        assert!(match_descriptors(&[vec![0.0; 16]], &db, 0.8).is_err());
        assert!(match_descriptors(&[vec![0.0; 32]], &db, 0.0).is_err());
        assert!(match_descriptors(&[vec![0.0; 32]], &db, 1.5).is_err());
    }

    #[test]
    fn equals_brute_force_oracle() {
        let db = random_db(2, 5000, 64);
        let mut rng = stream_rng(3, 0);
        let query: Vec<Vec<f64>> = (0..500)
            .map(|i| {
                if i % 3 == 0 {
                    crate::sim::synthesize_descriptor(db.descriptor(i * 7), 0.05, &mut rng)
                } else {
                    random_unit_vector(64, &mut rng)
                }
            })
            .collect();
        for ratio in [1.0, 0.8, 0.95] {
            let got = match_descriptors(&query, &db, ratio).unwrap();
            let want = oracle(&query, &db, ratio);
            assert_eq!(got.len(), want.len());
            for (g, w) in got.matches.iter().zip(&want) {
                assert_eq!((g.query, g.map), (w.0, w.1));
                assert!((g.distance - w.2).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn permutation_invariant() {
        let db = random_db(4, 800, 32);
        let mut rng = stream_rng(5, 0);
        let query: Vec<Vec<f64>> = (0..100)
            .map(|i| crate::sim::synthesize_descriptor(db.descriptor(i), 0.1, &mut rng))
            .collect();
        let mut order: Vec<usize> = (0..db.len()).collect();
        order.shuffle(&mut rng);
        let shuffled = db.permuted(&order);
        let a = match_descriptors(&query, &db, 0.8).unwrap();
        let b = match_descriptors(&query, &shuffled, 0.8).unwrap();
        assert_eq!(a.len(), b.len());
        for (x, y) in a.matches.iter().zip(&b.matches) {
            assert_eq!(x.map, order[y.map]);
            assert!((x.distance - y.distance).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn distances_non_negative_and_unique_queries(seed in 0u64..1000, n in 1usize..60) {
            let db = random_db(seed, n, 16);
            let mut rng = stream_rng(seed, 1);
            let q: Vec<Vec<f64>> = (0..20).map(|_| random_unit_vector(16, &mut rng)).collect();
            let m = match_descriptors(&q, &db, 1.0).unwrap();
            let mut last = None;
            for x in &m.matches {
                prop_assert!(x.distance >= 0.0);
                prop_assert!(Some(x.query) > last);
                last = Some(x.query);
            }
        }
    }
}
