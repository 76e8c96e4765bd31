//! Every operator must agree, record for record, with the brute-force
//! reference implementations in `common` on randomized corpora. The corpora
//! are small but dense: offsets collide constantly, spans nest and abut,
//! zero-length regions appear, and the dataset pairs share records both
//! verbatim (same identity) and as same-span copies with different ids.

mod common;

use annoq::algebra;
use annoq::bench::SplitMix64;
use annoq::AnnotationDataset;
use common::*;
use regex::Regex;

const REGEXES: [&str; 6] = ["^he.*", "^a", "t", "^.*$", "e.?l", "^(the|cell)$"];

/// Runs every operator over one generated corpus triple and compares with
/// the oracles.
fn check_corpus(label: &str, rng: &mut SplitMix64, doc_count: u64, size: usize) {
    let (a, b) = random_pair(rng, doc_count, size);
    let c = random_dataset(rng, doc_count, size / 2 + 1, 40_000);

    for set in SETS {
        assert_matches_oracle(
            &format!("{label}/filter_set({set})"),
            &algebra::filter_set(&a, set),
            &o_filter_set(&a, set),
        );
    }
    for ty in TYPES.into_iter().chain(["nosuch"]) {
        assert_matches_oracle(
            &format!("{label}/filter_type({ty})"),
            &algebra::filter_type(&a, ty),
            &o_filter_type(&a, ty),
        );
    }
    for word in WORDS.into_iter().chain(["missing"]) {
        assert_matches_oracle(
            &format!("{label}/filter_property(orig, {word})"),
            &algebra::filter_property(&a, "orig", word),
            &o_filter_property(&a, "orig", word),
        );
    }
    for pattern in REGEXES {
        let re = Regex::new(pattern).unwrap();
        assert_matches_oracle(
            &format!("{label}/regex_property(orig, {pattern})"),
            &algebra::regex_property(&a, "orig", &re),
            &o_regex_property(&a, "orig", pattern),
        );
    }

    assert_matches_oracle(
        &format!("{label}/contains"),
        &algebra::contains(&a, &b),
        &o_contains(&a, &b),
    );
    assert_matches_oracle(
        &format!("{label}/contained_in"),
        &algebra::contained_in(&a, &b),
        &o_contained_in(&a, &b),
    );
    assert_matches_oracle(
        &format!("{label}/before"),
        &algebra::before(&a, &b),
        &o_before(&a, &b),
    );
    assert_matches_oracle(
        &format!("{label}/after"),
        &algebra::after(&a, &b),
        &o_after(&a, &b),
    );
    assert_matches_oracle(
        &format!("{label}/between"),
        &algebra::between(&c, &a, &b),
        &o_between(&c, &a, &b),
    );
    for dist in [None, Some(1), Some(5), Some(20)] {
        assert_matches_oracle(
            &format!("{label}/sequence({dist:?})"),
            &algebra::sequence(&a, &b, dist),
            &o_sequence(&a, &b, dist),
        );
    }
    for name in ["orig", "pos", "nosuch"] {
        assert_matches_oracle(
            &format!("{label}/match_property({name})"),
            &algebra::match_property(&a, &b, name),
            &o_match_property(&a, &b, name),
        );
    }
    for cnt in [1, 3, 7] {
        assert_anchored_matches_oracle(
            &format!("{label}/preceding({cnt})"),
            &algebra::preceding(&a, &b, cnt),
            &o_preceding(&a, &b, cnt),
        );
        assert_anchored_matches_oracle(
            &format!("{label}/following({cnt})"),
            &algebra::following(&a, &b, cnt),
            &o_following(&a, &b, cnt),
        );
    }
}

#[test]
fn randomized_corpora_match_the_oracles() {
    for seed in 0..60u64 {
        let mut rng = SplitMix64::new(seed * 2 + 1);
        // Shape varies with the seed: document counts 1..=12, sizes 1..=220.
        let doc_count = seed % 12 + 1;
        let size = (seed as usize * 37) % 220 + 1;
        check_corpus(&format!("seed {seed}"), &mut rng, doc_count, size);
    }
}

#[test]
fn self_application_matches_the_oracles() {
    // A dataset joined with itself exercises the identity-exclusion rule in
    // containment and self-pairing everywhere else.
    for seed in 0..20u64 {
        let mut rng = SplitMix64::new(1000 + seed);
        let a = random_dataset(&mut rng, seed % 5 + 1, 120, 1);
        assert_matches_oracle(
            &format!("self {seed}/contains"),
            &algebra::contains(&a, &a),
            &o_contains(&a, &a),
        );
        assert_matches_oracle(
            &format!("self {seed}/contained_in"),
            &algebra::contained_in(&a, &a),
            &o_contained_in(&a, &a),
        );
        assert_matches_oracle(
            &format!("self {seed}/before"),
            &algebra::before(&a, &a),
            &o_before(&a, &a),
        );
        assert_matches_oracle(
            &format!("self {seed}/after"),
            &algebra::after(&a, &a),
            &o_after(&a, &a),
        );
        assert_matches_oracle(
            &format!("self {seed}/between"),
            &algebra::between(&a, &a, &a),
            &o_between(&a, &a, &a),
        );
        assert_matches_oracle(
            &format!("self {seed}/sequence"),
            &algebra::sequence(&a, &a, Some(6)),
            &o_sequence(&a, &a, Some(6)),
        );
        assert_matches_oracle(
            &format!("self {seed}/match_property"),
            &algebra::match_property(&a, &a, "orig"),
            &o_match_property(&a, &a, "orig"),
        );
        assert_anchored_matches_oracle(
            &format!("self {seed}/preceding"),
            &algebra::preceding(&a, &a, 3),
            &o_preceding(&a, &a, 3),
        );
        assert_anchored_matches_oracle(
            &format!("self {seed}/following"),
            &algebra::following(&a, &a, 3),
            &o_following(&a, &a, 3),
        );
    }
}

#[test]
fn anchored_tie_ordering_matches_on_saturated_offsets() {
    // Cram many records into a tiny offset range so the secondary and
    // tertiary sort keys decide almost every comparison.
    for seed in 0..12u64 {
        let mut rng = SplitMix64::new(7_000 + seed);
        let mut records = Vec::new();
        for i in 0..150u64 {
            let start = rng.range(0, 6);
            let end = start + rng.range(0, 3);
            records.push(annoq::Annotation::new(
                format!("d{}", rng.range(0, 1)),
                "om",
                "word",
                start,
                end,
                i + 1,
            ));
        }
        let a = AnnotationDataset::from_records(records).unwrap();
        for cnt in [1, 2, 5] {
            assert_anchored_matches_oracle(
                &format!("ties {seed}/preceding({cnt})"),
                &algebra::preceding(&a, &a, cnt),
                &o_preceding(&a, &a, cnt),
            );
            assert_anchored_matches_oracle(
                &format!("ties {seed}/following({cnt})"),
                &algebra::following(&a, &a, cnt),
                &o_following(&a, &a, cnt),
            );
        }
    }
}

#[test]
fn sequence_id_assignment_matches_on_coinciding_spans() {
    // Multiple qualifying pairs can synthesize the same span; the fresh-id
    // numbering must still agree with the oracle's canonical assignment.
    for seed in 0..12u64 {
        let mut rng = SplitMix64::new(9_000 + seed);
        let (a, b) = random_pair(&mut rng, 2, 60);
        for dist in [None, Some(0), Some(3)] {
            let out = algebra::sequence(&a, &b, dist);
            assert_matches_oracle(
                &format!("seq-ties {seed}/{dist:?}"),
                &out,
                &o_sequence(&a, &b, dist),
            );
            // Output is itself a valid dataset: ids unique per document.
            AnnotationDataset::from_records(out.to_records()).unwrap();
        }
    }
}
