use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::map_index::{DescriptorMatch, MapFeatureDB, MatchSet};

/// Winning translation hypothesis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vote {
    /// Mean translation of all inliers, meters.
    pub translation: Vector2<f64>,
    /// Inlier matches in their original order.
    pub inliers: Vec<DescriptorMatch>,
    /// Index (into the match list) of the winning candidate.
    pub candidate: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VoteFailure {
    /// Inliers of the best candidate (0 when there were no matches).
    pub best_inliers: usize,
    pub matches: usize,
}

/// Translation voting.
///
/// Every match proposes `t = l^m_j − P^G_i(x, y)`. Each proposal is scored by
/// the matches whose translation lies strictly within `inlier_radius` of it
/// (Euclidean). The best proposal has the most inliers, then the smallest sum
/// of inlier deviations, then the lowest match index. The vote succeeds when
/// it has at least `min_inliers` inliers and returns the inliers' mean
/// translation.
pub fn translation_vote(
    points_geo: &[Vector3<f64>],
    matches: &MatchSet,
    db: &MapFeatureDB,
    inlier_radius: f64,
    min_inliers: usize,
) -> Result<std::result::Result<Vote, VoteFailure>> {
    for m in &matches.matches {
        if m.query >= points_geo.len() {
            return Err(Error::invalid("matches", format!("query index {} out of range", m.query)));
        }
        if m.map >= db.len() {
            return Err(Error::invalid("matches", format!("map index {} out of range", m.map)));
        }
    }
    let proposals: Vec<Vector2<f64>> = matches
        .matches
        .iter()
        .map(|m| db.position(m.map) - points_geo[m.query].xy())
        .collect();

    // (inlier count, deviation sum, candidate index)
    let mut best: Option<(usize, f64, usize)> = None;
    for (c, tc) in proposals.iter().enumerate() {
        let mut count = 0;
        let mut deviation = 0.0;
        for t in &proposals {
            let d = (t - tc).norm();
            if d < inlier_radius {
                count += 1;
                deviation += d;
            }
        }
        let better = match best {
            None => true,
            Some((bc, bd, _)) => count > bc || (count == bc && deviation < bd),
        };
        if better {
            best = Some((count, deviation, c));
        }
    }

    let Some((count, _, c)) = best else {
        return Ok(Err(VoteFailure {
            best_inliers: 0,
            matches: 0,
        }));
    };
    if count < min_inliers {
        return Ok(Err(VoteFailure {
            best_inliers: count,
            matches: proposals.len(),
        }));
    }
    let tc = proposals[c];
    let mut sum = Vector2::zeros();
    let mut inliers = Vec::with_capacity(count);
    for (m, t) in matches.matches.iter().zip(&proposals) {
        if (t - tc).norm() < inlier_radius {
            sum += t;
            inliers.push(*m);
        }
    }
    Ok(Ok(Vote {
        translation: sum / inliers.len() as f64,
        inliers,
        candidate: c,
    }))
}
