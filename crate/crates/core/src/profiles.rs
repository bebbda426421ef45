//! Per-student writing-style development profiles and their fixed-grid
//! interpolation.
//!
//! A profile compares each text against the student's initial writing style
//! (the first `m` texts); the approximate profile resamples it onto a
//! 0.05-month grid for clustering.

use crate::corpus::{months_between, StudentRecord};
use crate::error::{Error, Result};
use crate::similarity::SimilarityModel;

pub const DEFAULT_GRID_STEP: f64 = 0.05;
/// Grid entries beyond this horizon are excluded from visualization.
pub const ANALYSIS_HORIZON_MONTHS: f64 = 30.0;

#[derive(Debug, Clone)]
pub struct DevelopmentProfile {
    pub student_id: String,
    /// (tau in months since text t_m, similarity); tau[0] = 0, ascending.
    pub points: Vec<(f64, f64)>,
    pub m: usize,
}

#[derive(Debug, Clone)]
pub struct ApproxProfile {
    pub student_id: String,
    pub values: Vec<f64>,
    pub step: f64,
}

impl ApproxProfile {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Build the development profile for one student: for j = 0..|T|-m,
/// p_j = (1/m) * sum_{i=1..m} s(t_{j+m}, t_i), with tau measured from t_m.
pub fn build_profile(
    student: &StudentRecord,
    model: &dyn SimilarityModel,
    m: usize,
) -> Result<DevelopmentProfile> {
    if m < 1 {
        return Err(Error::Config("m must be >= 1".into()));
    }
    let n = student.texts.len();
    if n < m {
        return Err(Error::Data(format!(
            "student {} has {n} texts, need at least m = {m}",
            student.student_id
        )));
    }
    let anchor = student.texts[m - 1].submitted_at;
    let mut points = Vec::with_capacity(n - m + 1);
    for j in 0..=(n - m) {
        let text = &student.texts[j + m - 1];
        let mut acc = 0.0;
        for initial in &student.texts[..m] {
            acc += model.similarity(&text.body, &initial.body)?;
        }
        let p = acc / m as f64;
        let tau = months_between(anchor, text.submitted_at);
        points.push((tau, p));
    }
    // Identical timestamps: keep the later text's value for that tau.
    points.dedup_by(|b, a| {
        if (a.0 - b.0).abs() < 1e-12 {
            a.1 = b.1;
            true
        } else {
            false
        }
    });
    Ok(DevelopmentProfile { student_id: student.student_id.clone(), points, m })
}

/// Linearly interpolate a profile onto the fixed grid 0, step, 2*step, ...
/// up to the last tau. No extrapolation beyond the last knot.
pub fn interpolate(profile: &DevelopmentProfile, step: f64) -> Result<ApproxProfile> {
    if profile.points.is_empty() {
        return Err(Error::Data(format!("profile for {} has no points", profile.student_id)));
    }
    if step <= 0.0 {
        return Err(Error::Config("grid step must be positive".into()));
    }
    let last_tau = profile.points.last().unwrap().0;
    // Round-off guard so knots at exact grid multiples land on the grid.
    let len = (last_tau / step + 1e-9).floor() as usize + 1;
    let mut values = Vec::with_capacity(len);
    let mut seg = 0usize;
    for g in 0..len {
        let t = g as f64 * step;
        while seg + 1 < profile.points.len() && profile.points[seg + 1].0 < t - 1e-12 {
            seg += 1;
        }
        let v = if profile.points.len() == 1 {
            profile.points[0].1
        } else {
            let (t0, p0) = profile.points[seg];
            let (t1, p1) = profile.points[(seg + 1).min(profile.points.len() - 1)];
            if (t1 - t0).abs() < 1e-12 || t <= t0 {
                p0
            } else if t >= t1 {
                p1
            } else {
                p0 + (p1 - p0) * (t - t0) / (t1 - t0)
            }
        };
        values.push(v);
    }
    Ok(ApproxProfile { student_id: profile.student_id.clone(), values, step })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::CleanText;
    use approx::assert_abs_diff_eq;
    use chrono::{DateTime, Utc};

    /// Scripted model: similarity is looked up by the pair of first tokens.
    struct Scripted(Vec<((String, String), f64)>);
    impl SimilarityModel for Scripted {
        fn similarity(&self, a: &str, b: &str) -> crate::Result<f64> {
            let key = (a.to_string(), b.to_string());
            for ((x, y), v) in &self.0 {
                if (x == &key.0 && y == &key.1) || (x == &key.1 && y == &key.0) {
                    return Ok(*v);
                }
            }
            panic!("unscripted pair {key:?}");
        }
    }

    fn student(times_days: &[i64]) -> StudentRecord {
        let base: DateTime<Utc> = "2020-09-01T00:00:00Z".parse().unwrap();
        StudentRecord {
            student_id: "s".into(),
            texts: times_days
                .iter()
                .enumerate()
                .map(|(i, &d)| CleanText {
                    student_id: "s".into(),
                    submitted_at: base + chrono::Duration::days(d),
                    body: format!("t{}", i + 1),
                    char_len: 2,
                })
                .collect(),
        }
    }

    #[test]
    fn first_point_averages_self_similarity() {
        // m=2: p_0 = (s(t2,t1) + s(t2,t2)) / 2 = (0.8 + 0.9) / 2.
        let s = student(&[0, 10, 40]);
        let model = Scripted(vec![
            (("t2".into(), "t1".into()), 0.8),
            (("t2".into(), "t2".into()), 0.9),
            (("t3".into(), "t1".into()), 0.8),
            (("t3".into(), "t2".into()), 0.6),
        ]);
        let p = build_profile(&s, &model, 2).unwrap();
        assert_abs_diff_eq!(p.points[0].1, 0.85, epsilon = 1e-12);
        assert_abs_diff_eq!(p.points[0].0, 0.0);
        // p_1 = (s(t3,t1) + s(t3,t2)) / 2 = 0.7.
        assert_abs_diff_eq!(p.points[1].1, 0.7, epsilon = 1e-12);
    }

    #[test]
    fn profile_length_is_texts_minus_m_plus_one() {
        let s = student(&[0, 5, 10, 20, 40]);
        let model = Scripted(
            ["t2", "t3", "t4", "t5"]
                .iter()
                .flat_map(|t| {
                    [("t1", 0.5), ("t2", 0.5)]
                        .into_iter()
                        .map(move |(u, v)| ((t.to_string(), u.to_string()), v))
                })
                .collect(),
        );
        let p = build_profile(&s, &model, 2).unwrap();
        assert_eq!(p.points.len(), 4);
    }

    #[test]
    fn too_few_texts_error() {
        let s = student(&[0]);
        let model = Scripted(vec![]);
        assert!(build_profile(&s, &model, 2).is_err());
    }

    #[test]
    fn tau_uses_month_definition() {
        let s = student(&[0, 0, 61]); // t3 is 61 days after t2
        let model = Scripted(vec![
            (("t2".into(), "t1".into()), 0.5),
            (("t2".into(), "t2".into()), 0.5),
            (("t3".into(), "t1".into()), 0.5),
            (("t3".into(), "t2".into()), 0.5),
        ]);
        let p = build_profile(&s, &model, 2).unwrap();
        assert_abs_diff_eq!(p.points.last().unwrap().0, 61.0 / 30.4375, epsilon = 1e-12);
    }

    #[test]
    fn interpolate_midpoint() {
        let p = DevelopmentProfile {
            student_id: "s".into(),
            points: vec![(0.0, 0.8), (0.1, 0.6)],
            m: 2,
        };
        let a = interpolate(&p, 0.05).unwrap();
        assert_eq!(a.values.len(), 3);
        assert_abs_diff_eq!(a.values[0], 0.8, epsilon = 1e-12);
        assert_abs_diff_eq!(a.values[1], 0.7, epsilon = 1e-12);
        assert_abs_diff_eq!(a.values[2], 0.6, epsilon = 1e-12);
    }

    #[test]
    fn single_point_profile() {
        let p =
            DevelopmentProfile { student_id: "s".into(), points: vec![(0.0, 0.42)], m: 2 };
        let a = interpolate(&p, 0.05).unwrap();
        assert_eq!(a.values, vec![0.42]);
    }

    #[test]
    fn knots_on_grid_reproduce_exactly() {
        let p = DevelopmentProfile {
            student_id: "s".into(),
            points: vec![(0.0, 0.9), (0.25, 0.3), (0.5, 0.7)],
            m: 2,
        };
        let a = interpolate(&p, 0.05).unwrap();
        assert_eq!(a.values.len(), 11);
        assert_abs_diff_eq!(a.values[0], 0.9, epsilon = 1e-9);
        assert_abs_diff_eq!(a.values[5], 0.3, epsilon = 1e-9);
        assert_abs_diff_eq!(a.values[10], 0.7, epsilon = 1e-9);
    }

    #[test]
    fn interpolated_values_bounded_by_knots() {
        let p = DevelopmentProfile {
            student_id: "s".into(),
            points: vec![(0.0, 0.9), (0.33, 0.2), (0.71, 0.55)],
            m: 2,
        };
        let a = interpolate(&p, 0.05).unwrap();
        for &v in &a.values {
            assert!((0.2..=0.9).contains(&v));
        }
    }

    #[test]
    fn duplicate_timestamps_collapse_to_later_value() {
        let s = student(&[0, 3, 10, 10]);
        let model = Scripted(vec![
            (("t2".into(), "t1".into()), 0.5),
            (("t2".into(), "t2".into()), 0.5),
            (("t3".into(), "t1".into()), 0.6),
            (("t3".into(), "t2".into()), 0.6),
            (("t4".into(), "t1".into()), 0.2),
            (("t4".into(), "t2".into()), 0.2),
        ]);
        let p = build_profile(&s, &model, 2).unwrap();
        assert_eq!(p.points.len(), 2);
        assert_abs_diff_eq!(p.points[1].1, 0.2, epsilon = 1e-12);
    }
}
