use super::*;
use crate::field::{build_field, SemanticPoint};

fn pt(x: f32, dino: &[f32], fine: &[f32]) -> SemanticPoint {
    SemanticPoint {
        position: [x, 0.0, 0.0],
        dino: dino.to_vec(),
        clip: [vec![1.0, 0.0, 0.0], vec![1.0, 0.0, 0.0], fine.to_vec()],
        label: None,
    }
}

fn params(theta: f64, r: f64) -> GrowthParams {
    GrowthParams { theta_dino: theta, radius: r }
}

#[test]
fn flood_fill_uniform_feature_covers_restrict() {
    let pts: Vec<_> = (0..30).map(|i| pt(i as f32 * 0.01, &[1.0, 0.0], &[1.0, 0.0, 0.0])).collect();
    let f = build_field(pts).unwrap();
    let restrict: Vec<usize> = (0..30).filter(|i| i % 7 != 3).collect();
    let got = flood_fill(&f, &[0], params(0.85, 10.0), &restrict).unwrap();
    assert_eq!(got, restrict);
}

#[test]
fn flood_fill_isolated_seed() {
    let pts: Vec<_> = (0..10).map(|i| pt(i as f32, &[1.0, 0.0], &[1.0, 0.0, 0.0])).collect();
    let f = build_field(pts).unwrap();
    let all: Vec<usize> = (0..10).collect();
    assert_eq!(flood_fill(&f, &[4], params(0.85, 0.5), &all).unwrap(), vec![4]);
}

#[test]
fn flood_fill_chain_stops_at_dissimilar_block() {
    // 0..10 share one feature, 10..20 another (cosine 0.3)
    let a = [1.0f32, 0.0];
    let b = [0.3f32, (1.0f32 - 0.09).sqrt()];
    let pts: Vec<_> = (0..20).map(|i| pt(i as f32 * 0.1, if i < 10 { &a } else { &b }, &[1.0, 0.0, 0.0])).collect();
    let f = build_field(pts).unwrap();
    let all: Vec<usize> = (0..20).collect();
    assert_eq!(flood_fill(&f, &[2], params(0.85, 0.15), &all).unwrap(), (0..10).collect::<Vec<_>>());
    assert_eq!(flood_fill(&f, &[2], params(0.2, 0.15), &all).unwrap(), all);
}

#[test]
fn flood_fill_mean_criterion_is_not_monotone_in_theta() {
    // Seed 0 at the origin, 1 next to it along x, 2 next to the seed along y,
    // 3 reachable only through 1. Features are unit 2-vectors at the given angles.
    let dir = |deg: f32| {
        let r = deg.to_radians();
        [r.cos(), r.sin()]
    };
    let at = |pos: [f32; 3], deg: f32| SemanticPoint {
        position: pos,
        dino: dir(deg).to_vec(),
        clip: [vec![1.0, 0.0, 0.0], vec![1.0, 0.0, 0.0], vec![1.0, 0.0, 0.0]],
        label: None,
    };
    let f = build_field(vec![
        at([0.0, 0.0, 0.0], 0.0),
        at([1.0, 0.0, 0.0], 0.0),
        at([0.0, 1.0, 0.0], 59.0),
        at([2.0, 0.0, 0.0], -44.0),
    ])
    .unwrap();
    let all = [0, 1, 2, 3];
    // at 0.5, point 2 joins the first layer and drags the mean away from point 3
    assert_eq!(flood_fill(&f, &[0], params(0.5, 1.1), &all).unwrap(), vec![0, 1, 2]);
    assert_eq!(flood_fill(&f, &[0], params(0.7, 1.1), &all).unwrap(), vec![0, 1, 3]);
}

#[test]
fn flood_fill_preconditions() {
    let pts: Vec<_> = (0..3).map(|i| pt(i as f32, &[1.0, 0.0], &[1.0, 0.0, 0.0])).collect();
    let f = build_field(pts).unwrap();
    assert!(matches!(flood_fill(&f, &[], params(0.8, 1.0), &[0, 1]), Err(ExtractionError::NoSeeds)));
    assert!(matches!(
        flood_fill(&f, &[2], params(0.8, 1.0), &[0, 1]),
        Err(ExtractionError::SeedOutsideRestrict(2))
    ));
    assert!(flood_fill(&f, &[0], params(0.8, 0.0), &[0, 1]).is_err());
}

#[test]
fn percentile_matches_linear_interpolation() {
    let v: Vec<f64> = (1..=10).map(|i| i as f64).collect();
    assert_eq!(percentile(&v, 0.0), 1.0);
    assert_eq!(percentile(&v, 100.0), 10.0);
    assert!((percentile(&v, 90.0) - 9.1).abs() < 1e-12);
    assert_eq!(percentile(&[3.0], 42.0), 3.0);
}

#[test]
fn argmax_prefers_lowest_index() {
    assert_eq!(argmax(&[0.2, 0.9, 0.9, 0.1]), Some(1));
    assert_eq!(argmax(&[0.5; 4]), Some(0));
    assert_eq!(argmax(&[]), None);
}

#[test]
fn config_validation() {
    assert!(ExtractionConfig::default().validate().is_ok());
    let bad = [
        ExtractionConfig { theta_dino: 0.0, ..Default::default() },
        ExtractionConfig { theta_dino: 1.1, ..Default::default() },
        ExtractionConfig { growth_radius: Some(-1.0), ..Default::default() },
        ExtractionConfig { fine_percentile: 100.0, ..Default::default() },
        ExtractionConfig { fine_level: 3, ..Default::default() },
    ];
    for c in bad {
        assert!(c.validate().is_err(), "{c:?}");
    }
    let json = r#"{"theta_dino": 0.9, "relevancy_mode": "canonical-ratio", "strict_foreground": true}"#;
    let c: ExtractionConfig = serde_json::from_str(json).unwrap();
    assert_eq!(c.relevancy_mode, RelevancyMode::CanonicalRatio);
    assert!(c.strict_foreground);
    assert_eq!(c.fine_percentile, 90.0);
    assert!(serde_json::from_str::<ExtractionConfig>(r#"{"theta": 1}"#).is_err());
}

#[test]
fn no_relevant_points() {
    let pts: Vec<_> = (0..5)
        .map(|i| pt(i as f32, &[1.0, (i as f32) * 0.1], &[1.0, 0.0, 0.0]))
        .collect();
    let f = build_field(pts).unwrap();
    let q = TextEmbedding::new("nothing", vec![0.0, 0.0, 1.0]).unwrap();
    assert!(matches!(
        extract(&f, &q, &q, &ExtractionConfig::default()),
        Err(ExtractionError::NoRelevantPoints(_))
    ));
}

#[test]
fn canonical_mode_requires_phrases() {
    let pts: Vec<_> = (0..5).map(|i| pt(i as f32, &[1.0, 0.0], &[1.0, 0.0, 0.0])).collect();
    let f = build_field(pts).unwrap();
    let q = TextEmbedding::new("q", vec![1.0, 0.0, 0.0]).unwrap();
    let cfg = ExtractionConfig { relevancy_mode: RelevancyMode::CanonicalRatio, ..Default::default() };
    assert!(matches!(relevancy(&f, &q, 0, &cfg), Err(ExtractionError::MissingCanonical)));
    let bad_dim = TextEmbedding::new("q", vec![1.0, 0.0]).unwrap();
    assert!(matches!(
        relevancy(&f, &bad_dim, 0, &ExtractionConfig::default()),
        Err(ExtractionError::QueryDim { got: 2, want: 3 })
    ));
}

#[test]
fn zero_embedding_rejected() {
    assert!(matches!(TextEmbedding::new("x", vec![0.0; 4]), Err(ExtractionError::ZeroEmbedding(_))));
}

#[test]
fn result_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let r = ExtractionResult {
        foreground: vec![0, 1, 2],
        object_mask: vec![0, 1],
        toao: vec![1],
        relevancy: vec![0.25, 0.75, 0.0],
        toao_centroid: Vector3::new(0.1, 0.2, 0.3),
        seed: 1,
        flood_seeds: vec![1],
        growth_radius: 0.01,
    };
    let mut meta = ResultFile::from_result(&r, "");
    meta.method = "two-stage".into();
    save_result(dir.path().join("stem.json"), &r, meta.clone()).unwrap();
    let (back, rel) = load_result(dir.path().join("stem.json")).unwrap();
    assert_eq!(back.relevancy_path, "stem.relevancy.f32");
    assert_eq!(back.toao, vec![1]);
    assert_eq!(back.method, "two-stage");
    assert_eq!(rel, vec![0.25, 0.75, 0.0]);
    let text = std::fs::read_to_string(dir.path().join("stem.json")).unwrap();
    for key in ["\"foreground\"", "\"object_mask\"", "\"toao\"", "\"toao_centroid\"", "\"relevancy_path\""] {
        assert!(text.contains(key));
    }
}
