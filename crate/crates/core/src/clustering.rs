//! K-means over variable-length approximate profiles.
//!
//! Distance between two profiles is the Euclidean distance over their common
//! prefix. A member contributes only to the first `len` entries of its
//! centroid, and the centroid length is the maximum member length. Iteration
//! stops when the change in cluster error is at most `tol`.

use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::profiles::ApproxProfile;

#[derive(Debug, Clone)]
pub struct ClusterModel {
    /// Variable-length centroids; centroid r has the max length of its members.
    pub centroids: Vec<Vec<f64>>,
    /// Profile index (input order) -> cluster index.
    pub assignments: Vec<usize>,
    pub error: f64,
    pub iterations: usize,
    /// E_C after each (update, assign) iteration, in order.
    pub error_trace: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ElbowScan {
    /// (k, best E_C over restarts), ascending in k.
    pub errors: Vec<(usize, f64)>,
    pub selected_k: usize,
}

/// Euclidean distance over the common-length prefix.
pub fn prefix_dist(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Data("prefix distance of an empty profile".into()));
    }
    let l = a.len().min(b.len());
    let mut acc = 0.0;
    for i in 0..l {
        let d = a[i] - b[i];
        acc += d * d;
    }
    Ok(acc.sqrt())
}

/// Nearest-centroid assignment; ties break toward the lowest cluster index.
pub fn assign(profiles: &[&[f64]], centroids: &[Vec<f64>]) -> Result<Vec<usize>> {
    if centroids.is_empty() {
        return Err(Error::Config("need at least one centroid".into()));
    }
    let mut out = Vec::with_capacity(profiles.len());
    for p in profiles {
        let mut best = 0usize;
        let mut best_d = f64::INFINITY;
        for (r, c) in centroids.iter().enumerate() {
            let d = prefix_dist(p, c)?;
            if d < best_d {
                best_d = d;
                best = r;
            }
        }
        out.push(best);
    }
    Ok(out)
}

/// Length-aware centroid mean: entry j averages members with len > j; each
/// centroid is truncated to the maximum member length. Empty clusters keep
/// their previous centroid (repair happens in the k-means loop).
pub fn update_centroids(
    profiles: &[&[f64]],
    assignments: &[usize],
    k: usize,
    previous: &[Vec<f64>],
) -> Vec<Vec<f64>> {
    let mut centroids = Vec::with_capacity(k);
    for r in 0..k {
        let members: Vec<&[f64]> = profiles
            .iter()
            .zip(assignments)
            .filter(|&(_, &a)| a == r)
            .map(|(&p, _)| p)
            .collect();
        if members.is_empty() {
            centroids.push(previous.get(r).cloned().unwrap_or_default());
            continue;
        }
        let max_len = members.iter().map(|m| m.len()).max().unwrap();
        let mut c = vec![0.0; max_len];
        for (j, slot) in c.iter_mut().enumerate() {
            let mut acc = 0.0;
            let mut n = 0usize;
            // Fixed summation order over input order keeps results
            // schedule-independent.
            for m in &members {
                if m.len() > j {
                    acc += m[j];
                    n += 1;
                }
            }
            *slot = acc / n as f64;
        }
        centroids.push(c);
    }
    centroids
}

/// Mean prefix distance from each profile to its assigned centroid.
pub fn cluster_error(profiles: &[&[f64]], assignments: &[usize], centroids: &[Vec<f64>]) -> Result<f64> {
    if profiles.is_empty() {
        return Ok(0.0);
    }
    let mut acc = 0.0;
    for (p, &a) in profiles.iter().zip(assignments) {
        acc += prefix_dist(p, &centroids[a])?;
    }
    Ok(acc / profiles.len() as f64)
}

/// One full k-means run: random profiles as initial centroids, then
/// alternating assignment and length-aware centroid updates until the change
/// in cluster error is at most `tol` or `max_iter` is reached.
pub fn kmeans(
    profiles: &[ApproxProfile],
    k: usize,
    seed: u64,
    max_iter: usize,
    tol: f64,
) -> Result<ClusterModel> {
    let views: Vec<&[f64]> = profiles.iter().map(|p| p.values.as_slice()).collect();
    if k == 0 {
        return Err(Error::Config("k must be >= 1".into()));
    }
    if k > views.len() {
        return Err(Error::Data(format!("k = {k} exceeds number of profiles {}", views.len())));
    }
    if views.iter().any(|v| v.is_empty()) {
        return Err(Error::Data("empty profile in clustering input".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut indices: Vec<usize> = (0..views.len()).collect();
    indices.shuffle(&mut rng);
    let mut centroids: Vec<Vec<f64>> =
        indices[..k].iter().map(|&i| views[i].to_vec()).collect();

    let mut assignments = assign(&views, &centroids)?;
    let mut prev_error = f64::INFINITY;
    let mut iterations = 0;
    let mut error_trace = Vec::new();
    loop {
        iterations += 1;
        let before = (centroids.clone(), assignments.clone());
        centroids = update_centroids(&views, &assignments, k, &centroids);
        // Empty-cluster repair: reseed with the profile farthest from its
        // current centroid.
        loop {
            let counts = {
                let mut c = vec![0usize; k];
                for &a in &assignments {
                    c[a] += 1;
                }
                c
            };
            let Some(empty) = counts.iter().position(|&c| c == 0) else { break };
            let (farthest, _) = views
                .iter()
                .enumerate()
                .map(|(i, p)| (i, prefix_dist(p, &centroids[assignments[i]]).unwrap_or(0.0)))
                .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(b.0.cmp(&a.0)))
                .expect("profiles non-empty");
            centroids[empty] = views[farthest].to_vec();
            assignments[farthest] = empty;
        }
        assignments = assign(&views, &centroids)?;
        let error = cluster_error(&views, &assignments, &centroids)?;
        // The mean update minimizes squared distance per coordinate, which
        // does not always lower the unsquared error; if it rose, keep the
        // previous state and stop.
        if error > prev_error {
            (centroids, assignments) = before;
            let error = prev_error;
            return Ok(ClusterModel { centroids, assignments, error, iterations, error_trace });
        }
        error_trace.push(error);
        let delta = prev_error - error;
        prev_error = error;
        if delta.abs() <= tol || iterations >= max_iter {
            return Ok(ClusterModel { centroids, assignments, error, iterations, error_trace });
        }
    }
}

/// Best-of-restarts k-means with derived sub-seeds.
pub fn kmeans_restarts(
    profiles: &[ApproxProfile],
    k: usize,
    seed: u64,
    restarts: usize,
    max_iter: usize,
    tol: f64,
) -> Result<ClusterModel> {
    let mut best: Option<ClusterModel> = None;
    for r in 0..restarts.max(1) {
        let sub = seed.wrapping_add(0x9e3779b97f4a7c15u64.wrapping_mul(r as u64 + 1));
        let model = kmeans(profiles, k, sub, max_iter, tol)?;
        if best.as_ref().map_or(true, |b| model.error < b.error) {
            best = Some(model);
        }
    }
    Ok(best.unwrap())
}

/// Run k-means for each k in the range, keeping the best error per k, and
/// select k at the largest discrete second difference (the elbow).
pub fn elbow_scan(
    profiles: &[ApproxProfile],
    k_range: std::ops::RangeInclusive<usize>,
    restarts: usize,
    seed: u64,
    max_iter: usize,
    tol: f64,
) -> Result<ElbowScan> {
    let ks: Vec<usize> = k_range.collect();
    if ks.is_empty() {
        return Err(Error::Config("k range is empty".into()));
    }
    let mut errors = Vec::with_capacity(ks.len());
    for &k in &ks {
        let model = kmeans_restarts(profiles, k, seed.wrapping_add(k as u64), restarts, max_iter, tol)?;
        errors.push((k, model.error));
    }
    Ok(ElbowScan { selected_k: select_elbow(&errors), errors })
}

/// Argmax of E(k-1) - 2 E(k) + E(k+1) over interior points; with fewer than
/// three points there is no curvature evidence and the smallest k is kept.
pub fn select_elbow(errors: &[(usize, f64)]) -> usize {
    if errors.len() < 3 {
        return errors[0].0;
    }
    let mut best_k = errors[1].0;
    let mut best = f64::NEG_INFINITY;
    for w in errors.windows(3) {
        let second_diff = w[0].1 - 2.0 * w[1].1 + w[2].1;
        if second_diff > best {
            best = second_diff;
            best_k = w[1].0;
        }
    }
    best_k
}

/// Agreement between two labelings, corrected for chance. 1 = identical
/// partitions, ~0 = random.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len());
    let n = a.len();
    if n < 2 {
        return 1.0;
    }
    let ka = a.iter().max().map_or(0, |&m| m + 1);
    let kb = b.iter().max().map_or(0, |&m| m + 1);
    let mut table = vec![vec![0usize; kb]; ka];
    for (&x, &y) in a.iter().zip(b) {
        table[x][y] += 1;
    }
    let choose2 = |x: usize| (x * x.saturating_sub(1)) as f64 / 2.0;
    let sum_ij: f64 = table.iter().flatten().map(|&c| choose2(c)).sum();
    let sum_a: f64 = table.iter().map(|row| choose2(row.iter().sum())).sum();
    let sum_b: f64 = (0..kb).map(|j| choose2(table.iter().map(|row| row[j]).sum())).sum();
    let expected = sum_a * sum_b / choose2(n);
    let max = 0.5 * (sum_a + sum_b);
    if (max - expected).abs() < 1e-12 {
        return 1.0;
    }
    (sum_ij - expected) / (max - expected)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn ap(id: &str, values: &[f64]) -> ApproxProfile {
        ApproxProfile { student_id: id.into(), values: values.to_vec(), step: 0.05 }
    }

    #[test]
    fn prefix_dist_short_prefix() {
        assert_abs_diff_eq!(prefix_dist(&[0.5], &[0.5, 0.9]).unwrap(), 0.0);
    }

    #[test]
    fn prefix_dist_hand_euclidean() {
        assert_abs_diff_eq!(prefix_dist(&[1.0, 0.0], &[0.0, 0.0]).unwrap(), 1.0);
    }

    #[test]
    fn prefix_dist_metric_basics() {
        let a = [0.3, 0.7, 0.1];
        let b = [0.9, 0.2];
        assert_abs_diff_eq!(prefix_dist(&a, &a).unwrap(), 0.0);
        assert_eq!(
            prefix_dist(&a, &b).unwrap().to_bits(),
            prefix_dist(&b, &a).unwrap().to_bits()
        );
    }

    #[test]
    fn prefix_dist_empty_errors() {
        assert!(prefix_dist(&[], &[1.0]).is_err());
    }

    #[test]
    fn assign_single_centroid() {
        let p1 = [0.1, 0.2];
        let p2 = [0.9];
        let profiles: Vec<&[f64]> = vec![&p1, &p2];
        let a = assign(&profiles, &[vec![0.5, 0.5]]).unwrap();
        assert_eq!(a, vec![0, 0]);
    }

    #[test]
    fn assign_tie_breaks_low_index() {
        let p = [0.5];
        let profiles: Vec<&[f64]> = vec![&p];
        let centroids = vec![vec![0.4], vec![0.7], vec![0.6]];
        let a = assign(&profiles, &centroids).unwrap();
        // Distances: 0.1, 0.2, 0.1 -> tie between 0 and 2 -> 0.
        assert_eq!(a, vec![0]);
    }

    #[test]
    fn centroid_length_aware_mean() {
        let p1 = [1.0, 1.0, 1.0];
        let p2 = [0.0, 0.0];
        let profiles: Vec<&[f64]> = vec![&p1, &p2];
        let c = update_centroids(&profiles, &[0, 0], 1, &[]);
        assert_eq!(c[0], vec![0.5, 0.5, 1.0]);
    }

    #[test]
    fn centroid_single_member_is_member() {
        let p1 = [0.4, 0.6];
        let profiles: Vec<&[f64]> = vec![&p1];
        let c = update_centroids(&profiles, &[0], 1, &[]);
        assert_eq!(c[0], vec![0.4, 0.6]);
    }

    #[test]
    fn centroid_idempotent_on_equal_members() {
        let p1 = [0.2, 0.8];
        let p2 = [0.2, 0.8];
        let profiles: Vec<&[f64]> = vec![&p1, &p2];
        let c = update_centroids(&profiles, &[0, 0], 1, &[]);
        assert_eq!(c[0], vec![0.2, 0.8]);
    }

    #[test]
    fn cluster_error_hand_case() {
        let p1 = [0.0];
        let p2 = [1.0];
        let profiles: Vec<&[f64]> = vec![&p1, &p2];
        let centroids = vec![vec![0.5]];
        let e = cluster_error(&profiles, &[0, 0], &centroids).unwrap();
        assert_abs_diff_eq!(e, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn cluster_error_zero_when_profiles_equal_centroids() {
        let p1 = [0.3, 0.3];
        let profiles: Vec<&[f64]> = vec![&p1];
        let e = cluster_error(&profiles, &[0], &[vec![0.3, 0.3]]).unwrap();
        assert_abs_diff_eq!(e, 0.0);
    }

    #[test]
    fn kmeans_k_equals_n_zero_error() {
        let profiles = vec![ap("a", &[0.1, 0.1]), ap("b", &[0.5]), ap("c", &[0.9, 0.9, 0.9])];
        let m = kmeans(&profiles, 3, 7, 100, 1e-6).unwrap();
        assert_abs_diff_eq!(m.error, 0.0, epsilon = 1e-12);
        let mut sorted = m.assignments.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, vec![0, 1, 2]);
    }

    #[test]
    fn kmeans_k1_is_global_mean() {
        let profiles = vec![ap("a", &[0.0, 0.0]), ap("b", &[1.0])];
        let m = kmeans(&profiles, 1, 3, 100, 1e-6).unwrap();
        assert_eq!(m.centroids[0], vec![0.5, 0.0]);
    }

    #[test]
    fn kmeans_k_too_large_errors() {
        let profiles = vec![ap("a", &[0.1])];
        assert!(kmeans(&profiles, 2, 0, 100, 1e-6).is_err());
    }

    #[test]
    fn kmeans_deterministic_per_seed() {
        let profiles: Vec<ApproxProfile> = (0..20)
            .map(|i| {
                let base = (i % 3) as f64 * 0.3;
                ap(&format!("s{i}"), &[base, base + 0.05, base + 0.02])
            })
            .collect();
        let m1 = kmeans(&profiles, 3, 11, 100, 1e-6).unwrap();
        let m2 = kmeans(&profiles, 3, 11, 100, 1e-6).unwrap();
        assert_eq!(m1.assignments, m2.assignments);
        assert_eq!(m1.error.to_bits(), m2.error.to_bits());
    }

    #[test]
    fn elbow_on_convex_curve_picks_max_second_difference() {
        // E(k) = {10, 4, 2, 1.5, 1.3}: second differences 4, 1.5, 0.3 -> k=3.
        let errors = vec![(2, 10.0), (3, 4.0), (4, 2.0), (5, 1.5), (6, 1.3)];
        assert_eq!(select_elbow(&errors), 3);
    }

    #[test]
    fn elbow_single_k() {
        assert_eq!(select_elbow(&[(4, 1.0)]), 4);
    }

    #[test]
    fn ari_identical_and_permuted() {
        let a = vec![0, 0, 1, 1, 2, 2];
        let b = vec![2, 2, 0, 0, 1, 1];
        assert_abs_diff_eq!(adjusted_rand_index(&a, &a), 1.0);
        assert_abs_diff_eq!(adjusted_rand_index(&a, &b), 1.0);
    }

    #[test]
    fn ari_disagreement_is_low() {
        let a = vec![0, 0, 0, 1, 1, 1];
        let b = vec![0, 1, 0, 1, 0, 1];
        assert!(adjusted_rand_index(&a, &b) < 0.2);
    }
}
