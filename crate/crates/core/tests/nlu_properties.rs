//! Delexicalization invertibility, cross-domain transfer, posterior
//! normalization, count scaling on a toy corpus and synthetic-corpus grounding.

use std::sync::OnceLock;

use convsearch_core::ckr::{build_ckr, Ckr, KnowledgeBase};
use convsearch_core::fixtures::{APARTMENTS_KB, RESTAURANTS_KB};
use convsearch_core::matcher::{Matcher, MatcherConfig};
use convsearch_core::nlu::{
    delexicalize_tokens, features, generate_synthetic_corpus, generate_synthetic_traced, train, DelexUtterance,
    IntentClassifier, IntentLabel, NaiveBayesModel, TrainingExample,
};
use convsearch_core::text::tokenize;
use proptest::prelude::*;

struct World {
    apartments: (Ckr, Matcher),
    restaurants: (Ckr, Matcher),
    model: NaiveBayesModel,
}

fn domain(json: &str) -> (Ckr, Matcher) {
    let ckr = build_ckr(&KnowledgeBase::from_json(json).unwrap()).unwrap();
    let matcher = Matcher::new(&ckr, None, &MatcherConfig::default()).unwrap();
    (ckr, matcher)
}

fn world() -> &'static World {
    static WORLD: OnceLock<World> = OnceLock::new();
    WORLD.get_or_init(|| {
        let apartments = domain(APARTMENTS_KB);
        let restaurants = domain(RESTAURANTS_KB);
        let corpus = generate_synthetic_corpus(&apartments.0, 40, 1);
        let model = train(&corpus, &apartments.1, 1.0).unwrap();
        World { apartments, restaurants, model }
    })
}

fn delex(matcher: &Matcher, text: &str) -> DelexUtterance {
    let out = matcher.run(text).unwrap();
    delexicalize_tokens(&out.tokens, &out.candidates).unwrap()
}

const WORDS: &[&str] = &[
    "i", "want", "2", "bedrooms", "in", "chelsea", "soho", "cheap", "italian", "food", "remove", "the", "location",
    "price", "under", "3,000", "#bedroom", "subway", "downtown", "please", "no", "pets", "ok", "bye", "hello",
];

fn utterance() -> impl Strategy<Value = String> {
    prop::collection::vec(prop::sample::select(WORDS), 0..10).prop_map(|w| w.join(" "))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn restore_reproduces_tokens(text in utterance()) {
        for (_, matcher) in [&world().apartments, &world().restaurants] {
            let d = delex(matcher, &text);
            prop_assert_eq!(d.restore(), tokenize(&text));
            let placeholders = d.tokens.iter().filter(|t| t.starts_with('⟨')).count();
            prop_assert_eq!(placeholders, d.alignment.len());
        }
    }

    #[test]
    fn posteriors_are_normalized(text in utterance()) {
        let w = world();
        let c = w.model.classify(&delex(&w.apartments.1, &text));
        let total: f64 = c.confidence.values().sum();
        prop_assert!((total - 1.0).abs() < 1e-9);
        prop_assert!(c.confidence.values().all(|p| (0.0..=1.0).contains(p)));
        let best = c.confidence.values().copied().fold(0.0, f64::max);
        prop_assert_eq!(c.confidence[&c.label], best);
    }

    #[test]
    fn equal_delexicalized_forms_classify_alike(a in utterance(), b in utterance()) {
        let w = world();
        let da = delex(&w.apartments.1, &a);
        let db = delex(&w.restaurants.1, &b);
        if da.tokens == db.tokens || features(&da) == features(&db) {
            prop_assert_eq!(w.model.classify(&da), w.model.classify(&db));
        }
    }
}

#[test]
fn transfer_on_parallel_utterances() {
    let w = world();
    let pairs = [
        ("i want something in chelsea", "i want something in downtown"),
        ("remove the location", "remove the location"),
        ("show me the results", "show me the results"),
        ("chelsea please", "italian please"),
    ];
    for (apt, rst) in pairs {
        let da = delex(&w.apartments.1, apt);
        let dr = delex(&w.restaurants.1, rst);
        assert_eq!(features(&da), features(&dr), "{apt:?} vs {rst:?}");
        assert_eq!(w.model.classify(&da).label, w.model.classify(&dr).label);
    }
    // Both domains have a `location` attribute, so these are token-identical.
    let da = delex(&w.apartments.1, "i want something in chelsea");
    let dr = delex(&w.restaurants.1, "i want something in downtown");
    assert_eq!(da.tokens, dr.tokens);
}

/// Duplicating a corpus multiplies every count. With add-one smoothing that
/// is exact proportionality only where vocabularies are disjoint, which is
/// what this toy corpus guarantees.
#[test]
fn toy_corpus_scaling_is_exact() {
    let toy = [("hi", IntentLabel::Greet), ("hello there", IntentLabel::Greet), ("bye", IntentLabel::End), ("see you", IntentLabel::End)];
    let matcher = Matcher::with_stages(Default::default(), vec![], 3);
    let base: Vec<TrainingExample> = toy.iter().map(|(t, l)| TrainingExample { text: t.to_string(), intent: *l }).collect();
    let once = train(&base, &matcher, 1.0).unwrap();
    let thrice: Vec<TrainingExample> = base.iter().flat_map(|e| std::iter::repeat_n(e.clone(), 3)).collect();
    let scaled = train(&thrice, &matcher, 1.0).unwrap();
    for probe in ["hi", "bye", "hello", "see", "there you", "", "unknown words"] {
        let d = delex(&matcher, probe);
        assert_eq!(once.classify(&d).label, scaled.classify(&d).label, "{probe:?}");
    }
}

#[test]
fn synthetic_fillers_resolve_in_the_lexicon() {
    for (ckr, matcher) in [&world().apartments, &world().restaurants] {
        let traced = generate_synthetic_traced(ckr, 30, 5);
        assert_eq!(traced.len(), 30 * IntentLabel::ALL.len());
        for s in &traced {
            for filler in &s.fillers {
                let resolves = filler.parse::<f64>().is_ok() || matcher.lexicon().get(&convsearch_core::text::normalize(filler)).is_some();
                assert!(resolves, "filler {filler:?} in {:?}", s.example.text);
            }
        }
        assert_eq!(generate_synthetic_corpus(ckr, 30, 5), generate_synthetic_corpus(ckr, 30, 5));
    }
}

#[test]
fn templated_add_is_recognized() {
    let w = world();
    let d = DelexUtterance { tokens: vec!["⟨NUM⟩".into(), "⟨ATTR:#bedroom⟩".into()], alignment: vec![] };
    assert_eq!(w.model.classify(&d).label, IntentLabel::Add);
}
