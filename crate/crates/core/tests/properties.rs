//! Randomized invariants over the corpus and profile layers.

use proptest::prelude::*;

use styledev::corpus::{read_clean_jsonl, write_corpus_jsonl, CleanText, Corpus, StudentRecord};
use styledev::profiles::{interpolate, DevelopmentProfile};

fn corpus_strategy() -> impl Strategy<Value = Corpus> {
    let text = ("[a-zæøå ]{10,60}", 0i64..1_000_000).prop_map(|(body, offset)| {
        let submitted_at = "2020-09-01T00:00:00Z".parse::<chrono::DateTime<chrono::Utc>>().unwrap()
            + chrono::Duration::seconds(offset);
        (body, submitted_at)
    });
    prop::collection::vec(prop::collection::vec(text, 1..6), 1..6).prop_map(|students| Corpus {
        students: students
            .into_iter()
            .enumerate()
            .map(|(i, mut texts)| {
                texts.sort_by_key(|t| t.1);
                texts.dedup_by_key(|t| t.1);
                StudentRecord {
                    student_id: format!("s{i:03}"),
                    texts: texts
                        .into_iter()
                        .map(|(body, submitted_at)| CleanText {
                            student_id: format!("s{i:03}"),
                            char_len: body.chars().count(),
                            body,
                            submitted_at,
                        })
                        .collect(),
                }
            })
            .collect(),
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn corpus_jsonl_round_trips(corpus in corpus_strategy()) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        write_corpus_jsonl(&corpus, &path).unwrap();
        let back = read_clean_jsonl(&path).unwrap();
        prop_assert_eq!(corpus.students.len(), back.students.len());
        for (a, b) in corpus.students.iter().zip(&back.students) {
            prop_assert_eq!(&a.student_id, &b.student_id);
            prop_assert_eq!(a.texts.len(), b.texts.len());
            for (ta, tb) in a.texts.iter().zip(&b.texts) {
                prop_assert_eq!(&ta.body, &tb.body);
                prop_assert_eq!(ta.submitted_at, tb.submitted_at);
            }
        }
    }

    #[test]
    fn interpolation_stays_within_knot_bounds(
        knots in prop::collection::vec((0u32..600, 0.0f64..1.0), 1..12)
    ) {
        let mut points: Vec<(f64, f64)> = knots
            .into_iter()
            .map(|(g, p)| (g as f64 * 0.013, p))
            .collect();
        points.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        points.dedup_by(|b, a| (a.0 - b.0).abs() < 1e-12);
        let profile = DevelopmentProfile { student_id: "s".into(), points: points.clone(), m: 2 };
        let approx = interpolate(&profile, 0.05).unwrap();

        let lo = points.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
        let hi = points.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
        for &v in &approx.values {
            prop_assert!(v >= lo - 1e-12 && v <= hi + 1e-12);
        }
        // Grid length covers the profile span at 0.05 resolution.
        let expect = (points.last().unwrap().0 / 0.05 + 1e-9).floor() as usize + 1;
        prop_assert_eq!(approx.values.len(), expect);
    }
}
