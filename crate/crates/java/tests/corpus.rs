use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use proptest::prelude::*;
use serde::Deserialize;
use stalecomment_java::{extract_methods, normalize_comment, pair_and_diff, DiffOptions};

#[derive(Debug, Deserialize)]
struct Expected {
    unbalanced: bool,
    methods: Vec<(String, String)>,
}

fn corpus_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/corpus")
}

fn index() -> BTreeMap<String, Expected> {
    let raw = fs::read_to_string(corpus_dir().join("index.json")).unwrap();
    serde_json::from_str(&raw).unwrap()
}

fn corpus_sources() -> Vec<String> {
    index()
        .keys()
        .map(|f| fs::read_to_string(corpus_dir().join(f)).unwrap())
        .collect()
}

#[test]
fn every_corpus_file_is_indexed() {
    let idx = index();
    let mut on_disk: Vec<String> = fs::read_dir(corpus_dir())
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(".java"))
        .collect();
    on_disk.sort();
    assert_eq!(on_disk, idx.keys().cloned().collect::<Vec<_>>());
    assert!(idx.len() >= 25);
}

#[test]
fn corpus_methods_and_comments_match_index() {
    for (file, expected) in index() {
        let src = fs::read_to_string(corpus_dir().join(&file)).unwrap();
        let ex = extract_methods(&src);
        let got: Vec<(String, String)> = ex
            .methods
            .iter()
            .map(|m| (m.signature_key.clone(), normalize_comment(&m.leading_comment)))
            .collect();
        assert_eq!(got, expected.methods, "{file}");
        assert_eq!(ex.unbalanced, expected.unbalanced, "{file}");
        for m in &ex.methods {
            assert!(src.contains(&m.body_text), "{file}: body not a substring");
        }
    }
}

#[test]
fn reformatting_bodies_keeps_keys() {
    for src in corpus_sources() {
        let spaced = src.replace(" + ", "  +  ").replace("return ", "return\n    ");
        let keys = |s: &str| -> Vec<String> {
            extract_methods(s).methods.into_iter().map(|m| m.signature_key).collect()
        };
        assert_eq!(keys(&src), keys(&spaced));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    // Identity diff over corpus files, optionally truncated or spliced so
    // that the scanner also sees broken input.
    #[test]
    fn pair_and_diff_identity_over_corpus(
        file in 0usize..27,
        cut in 0.0f64..=1.0,
        splice in proptest::option::of("[{}()\"'/* \n;a-z]{0,12}"),
    ) {
        let sources = corpus_sources();
        let src = &sources[file % sources.len()];
        let mut at = ((src.len() as f64) * cut) as usize;
        while !src.is_char_boundary(at) {
            at -= 1;
        }
        let mut s = src[..at].to_string();
        if let Some(extra) = splice {
            s.push_str(&extra);
            s.push_str(&src[at..]);
        }
        for opts in [DiffOptions::default(), DiffOptions { normalize_body: false }] {
            prop_assert!(pair_and_diff(&s, &s, opts).changes.is_empty());
        }
    }

    #[test]
    fn extraction_is_total_and_bodies_are_substrings(bytes in proptest::collection::vec(any::<u8>(), 0..400)) {
        let text = String::from_utf8_lossy(&bytes);
        let ex = extract_methods(&text);
        for m in ex.methods {
            prop_assert!(text.contains(&m.body_text));
        }
    }

    #[test]
    fn extraction_is_total_on_java_like_text(text in "[{}()<>\\[\\];,.=@\"'/*\\\\\n a-zA-Z0-9]{0,300}") {
        let ex = extract_methods(&text);
        for m in ex.methods {
            prop_assert!(text.contains(&m.body_text));
            prop_assert!(m.span.0 <= m.span.1);
        }
    }
}
