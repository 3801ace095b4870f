use std::fs;
use std::io::Write;

use proptest::prelude::*;

use poslab::artgen::spec::{CaptionSpec, SPEC_COUNT, VERB_INDEX};
use poslab::artgen::realize_caption;
use poslab::dataset::Dataset;
use poslab::eval::{lcs_len, macro_f1, rouge_l_f1, PairPrediction};
use poslab::grammar::{classify_agreement, make_minimal_pair, AgreementLabel, GrammaticalNumber, VerbLexicon};
use poslab::image::ImageBuffer;
use poslab::ingest::{build_natural_dataset, load_annotated_corpus};
use poslab::splits::SplitSizes;
use poslab::Exec;

fn number(plural: bool) -> GrammaticalNumber {
    if plural {
        GrammaticalNumber::Plural
    } else {
        GrammaticalNumber::Singular
    }
}

fn predictions(items: &[(bool, bool)]) -> Vec<PairPrediction> {
    items
        .iter()
        .enumerate()
        .map(|(i, &(gold, right))| {
            let (h, l) = if right { (-1.0, -2.0) } else { (-2.0, -1.0) };
            PairPrediction::decide(i.to_string(), number(gold), h, l)
        })
        .collect()
}

proptest! {
    #[test]
    fn macro_f1_ignores_order(items in prop::collection::vec(any::<(bool, bool)>(), 1..80), seed in any::<u64>()) {
        let a = predictions(&items);
        let mut b = a.clone();
        let n = b.len();
        for i in (1..n).rev() {
            let j = (seed.wrapping_mul(i as u64 + 1) >> 7) as usize % (i + 1);
            b.swap(i, j);
        }
        prop_assert_eq!(macro_f1(&a).unwrap().macro_f1, macro_f1(&b).unwrap().macro_f1);
    }

    #[test]
    fn macro_f1_is_bounded(items in prop::collection::vec(any::<(bool, bool)>(), 1..80)) {
        let f = macro_f1(&predictions(&items)).unwrap().macro_f1;
        prop_assert!((0.0..=100.0).contains(&f));
        let both = items.iter().any(|x| x.0) && items.iter().any(|x| !x.0);
        if both && items.iter().all(|x| x.1) {
            prop_assert_eq!(f, 100.0);
        }
        if items.iter().all(|x| !x.1) {
            prop_assert_eq!(f, 0.0);
        }
    }

    #[test]
    fn decision_survives_constant_shift(h in -50.0f64..0.0, l in -50.0f64..0.0, c in -10.0f64..10.0, plural in any::<bool>()) {
        let a = PairPrediction::decide("x", number(plural), h, l);
        let b = PairPrediction::decide("x", number(plural), h + c, l + c);
        if (h - l).abs() > 1e-9 {
            prop_assert_eq!(a.predicted_number, b.predicted_number);
        }
    }

    #[test]
    fn rouge_is_symmetric_and_bounded(a in prop::collection::vec(0u8..5, 0..20), b in prop::collection::vec(0u8..5, 0..20)) {
        let ab = rouge_l_f1(&a, &b);
        prop_assert!((ab - rouge_l_f1(&b, &a)).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&ab));
        prop_assert!(lcs_len(&a, &b) <= a.len().min(b.len()));
        if !a.is_empty() {
            prop_assert_eq!(rouge_l_f1(&a, &a), 1.0);
        }
    }

    #[test]
    fn spec_index_round_trips(i in 0..SPEC_COUNT) {
        let spec = CaptionSpec::from_index(i).unwrap();
        prop_assert_eq!(spec.index(), i);
        prop_assert_ne!(spec.color1, spec.color2);
    }

    #[test]
    fn minimal_pairs_differ_in_the_verb_only(i in 0..SPEC_COUNT) {
        let spec = CaptionSpec::from_index(i).unwrap();
        let (caption, ann) = realize_caption(&spec);
        let lexicon = VerbLexicon::artificial();
        match classify_agreement(&ann).unwrap() {
            AgreementLabel::Ambiguous => {
                prop_assert!(make_minimal_pair(&caption, &ann, i, &lexicon).is_err());
            }
            AgreementLabel::Disambiguating => {
                let pair = make_minimal_pair(&caption, &ann, i, &lexicon).unwrap();
                prop_assert_eq!(pair.verb_index, VERB_INDEX);
                prop_assert_eq!(pair.gold_number, ann.subject_number);
                let differing = pair
                    .hierarchical_caption
                    .iter()
                    .zip(&pair.linear_caption)
                    .filter(|(a, b)| a != b)
                    .count();
                prop_assert_eq!(differing, 1);
                prop_assert_eq!(&pair.hierarchical_caption, &caption);
            }
        }
    }
}

fn corpus_line(id: &str, attractor: &str, plural_attractor: bool, image: Option<&str>) -> String {
    let attractor_number = if plural_attractor { "plural" } else { "singular" };
    let image = image.map(|p| format!(r#","image_path":"{p}""#)).unwrap_or_default();
    format!(
        r#"{{"id":"{id}","tokens":["the","dog","near","the","{attractor}","runs"],"subject_index":1,"attractor_index":4,"verb_index":5,"subject_number":"singular","attractor_number":"{attractor_number}","verb_number":"singular","verb_singular_form":"runs","verb_plural_form":"run"{image}}}"#
    )
}

#[test]
fn natural_dataset_survives_disk_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let mut corpus = fs::File::create(dir.path().join("corpus.jsonl")).unwrap();
    for i in 0..12 {
        let img = format!("img{i}.png");
        fs::write(dir.path().join(&img), ImageBuffer::white_noise(40, i).encode_png().unwrap()).unwrap();
        let image = (i % 3 != 0).then_some(img.as_str());
        writeln!(corpus, "{}", corpus_line(&format!("a{i}"), "cat", false, image)).unwrap();
    }
    for i in 0..6 {
        writeln!(corpus, "{}", corpus_line(&format!("d{i}"), "cats", true, None)).unwrap();
    }
    drop(corpus);

    let (records, rejected) = load_annotated_corpus(&dir.path().join("corpus.jsonl")).unwrap();
    assert!(rejected.is_empty());
    let sizes = SplitSizes {
        train: 8,
        validation: 2,
        test: 3,
    };
    let ds = build_natural_dataset(&records, 5, sizes, 16).unwrap();
    let out = dir.path().join("ds");
    ds.write_to(&out, Exec::default()).unwrap();
    let back = Dataset::read_from(&out, Exec::default()).unwrap();
    assert_eq!(back.manifest, ds.manifest);
    assert_eq!(back.pairs, ds.pairs);
    assert_eq!(back.pairs.iter().filter(|p| p.image.is_some()).count(), 8);
}
