use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use umo_core::curves::{place_obstacles, random_curve, CurveLimits, CurveType, Level, PlacementConfig};
use umo_core::prompt::{
    detokenize, parse_spatial, parse_trajectory, serialize_trajectory, tokenize, ParamValue, PromptError, TemplateMode,
    Vocab, MAX_TOKENS,
};

const REFERENCE_CUBIC: &str = "{type:cubic_bezier, params:{start:[0.00,0.00], end:[5.22,3.77], P1:[-0.23,3.95], P2:[5.44,-0.17]}}";
const REFERENCE_SPATIAL: &str = "A person walks from (0.00, 0.00) to (3.96, 6.19). Avoiding 3 obstacles at (2.47, 3.04, 0.44), (2.78, 3.82, 0.45), (2.97, 4.68, 0.39), where r is the safety radius in meters.";

fn levels() -> [Level; 3] {
    [Level::L1, Level::L2, Level::L3]
}

fn generated_prompts(n: usize, seed: u64) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let limits = CurveLimits::default();
    let placement = PlacementConfig { clearance_samples: 500, ..PlacementConfig::default() };
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let level = levels()[out.len() % 3];
        let (c, _) = random_curve(level, &limits, &mut rng);
        match out.len() % 3 {
            0 => out.push(serialize_trajectory(&c, TemplateMode::Minimal)),
            1 => out.push(serialize_trajectory(&c, TemplateMode::Full)),
            _ => {
                if let Ok(scene) = place_obstacles(&c, level, &placement, &mut rng) {
                    out.push(umo_core::prompt::serialize_spatial(&scene));
                }
            }
        }
    }
    out
}

fn reserialize(s: &str) -> String {
    if s.starts_with('{') {
        parse_trajectory(s).unwrap().to_string()
    } else {
        parse_spatial(s).unwrap().to_string()
    }
}

#[test]
fn serialization_is_idempotent_on_generated_prompts() {
    for p in generated_prompts(2000, 1) {
        let once = reserialize(&p);
        assert_eq!(once, p);
        assert_eq!(reserialize(&once), once);
    }
}

#[test]
fn generated_prompts_tokenize_losslessly() {
    let vocab = Vocab::builtin();
    for p in generated_prompts(600, 2) {
        let ts = tokenize(vocab, &p).unwrap();
        assert!(ts.len() <= MAX_TOKENS, "{} tokens", ts.len());
        assert_eq!(detokenize(vocab, &ts).unwrap(), p);
    }
}

#[test]
fn reference_examples_parse_to_expected_asts() {
    let ast = parse_trajectory(REFERENCE_CUBIC).unwrap();
    assert_eq!(ast.curve_type, CurveType::CubicBezier);
    let pt = |k: &str| match ast.get(k) {
        Some(ParamValue::Point(p)) => *p,
        other => panic!("{k}: {other:?}"),
    };
    assert_eq!(pt("start"), [0.0, 0.0]);
    assert_eq!(pt("end"), [5.22, 3.77]);
    assert_eq!(pt("P1"), [-0.23, 3.95]);
    assert_eq!(pt("P2"), [5.44, -0.17]);
    assert_eq!(ast.to_string(), REFERENCE_CUBIC);

    let s = parse_spatial(REFERENCE_SPATIAL).unwrap();
    assert_eq!(s.start, [0.0, 0.0]);
    assert_eq!(s.goal, [3.96, 6.19]);
    assert_eq!(s.obstacles, vec![[2.47, 3.04, 0.44], [2.78, 3.82, 0.45], [2.97, 4.68, 0.39]]);
    assert_eq!(s.to_string(), REFERENCE_SPATIAL);

    let accented = REFERENCE_CUBIC.replace("cubic_bezier", "cubic_bézier");
    assert_eq!(parse_trajectory(&accented).unwrap(), ast);
}

#[test]
fn minimal_template_determines_the_curve() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let limits = CurveLimits::default();
    let slack = 0.005 * 2f64.sqrt() + 1e-9;
    let mut checked = 0;
    let mut drawn = 0;
    while checked < 300 {
        drawn += 1;
        let (c, _) = random_curve(levels()[drawn % 3], &limits, &mut rng);
        if !matches!(c.curve_type(), CurveType::Linear | CurveType::QuadBezier | CurveType::CubicBezier) {
            continue;
        }
        let back = parse_trajectory(&serialize_trajectory(&c, TemplateMode::Minimal)).unwrap().to_curve().unwrap();
        let worst = c.sample(1000).iter().zip(back.sample(1000)).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(worst <= slack, "{c:?}: {worst}");
        checked += 1;
    }
}

#[test]
fn spacing_between_tokens_is_ignored() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let prompts: Vec<String> = generated_prompts(1500, 5).into_iter().filter(|p| p.starts_with('{')).take(1000).collect();
    assert_eq!(prompts.len(), 1000);
    for p in prompts {
        let mut spaced = String::new();
        for ch in p.chars() {
            let boundary = "{}[],:".contains(ch);
            if boundary && rng.random_bool(0.5) {
                spaced.push_str(&" \t\n"[..rng.random_range(1..=3)]);
            }
            spaced.push(ch);
            if boundary && rng.random_bool(0.5) {
                spaced.push(' ');
            }
        }
        assert_eq!(parse_trajectory(&spaced).unwrap(), parse_trajectory(&p).unwrap(), "{spaced}");
    }
}

#[test]
fn error_kinds() {
    assert!(matches!(parse_trajectory("{type:linear, params:{}}"), Err(PromptError::SchemaMismatch(_))));
    assert!(matches!(parse_trajectory("{type:spiral, params:{}}"), Err(PromptError::UnknownCurveType(_))));
    assert!(matches!(parse_trajectory("{type:linear, params:{start:[0.00,0.00]"), Err(PromptError::Syntax { .. })));
    let bad_count = REFERENCE_SPATIAL.replace("Avoiding 3", "Avoiding 2");
    assert!(matches!(parse_spatial(&bad_count), Err(PromptError::CountMismatch { declared: 2, listed: 3 })));
    assert!(matches!(tokenize(Vocab::builtin(), "speed:\t1.00"), Err(PromptError::UnknownCharacter { .. })));
    let long = "1".repeat(MAX_TOKENS + 5);
    assert!(matches!(tokenize(Vocab::builtin(), &long), Err(PromptError::TooLong(_))));
}

fn mutate(rng: &mut ChaCha8Rng, s: &str) -> String {
    let mut bytes = s.as_bytes().to_vec();
    for _ in 0..rng.random_range(1..6) {
        if bytes.is_empty() {
            break;
        }
        let i = rng.random_range(0..bytes.len());
        match rng.random_range(0..4) {
            0 => bytes[i] = rng.random(),
            1 => {
                bytes.remove(i);
            }
            2 => bytes.insert(i, b"{}[](),:.-+0123456789 "[rng.random_range(0..22)]),
            _ => bytes.truncate(i),
        }
    }
    String::from_utf8_lossy(&bytes).into_owned()
}

#[test]
fn parsers_survive_fuzzed_input() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let seeds = generated_prompts(90, 7);
    let vocab = Vocab::builtin();
    for k in 0..100_000 {
        let input = if k % 4 == 0 {
            let len = rng.random_range(0..80);
            let bytes: Vec<u8> = (0..len).map(|_| rng.random()).collect();
            String::from_utf8_lossy(&bytes).into_owned()
        } else {
            mutate(&mut rng, &seeds[k % seeds.len()])
        };
        let _ = parse_trajectory(&input);
        let _ = parse_spatial(&input);
        if let Ok(ts) = tokenize(vocab, &input) {
            assert_eq!(detokenize(vocab, &ts).unwrap(), input);
        }
    }
}
