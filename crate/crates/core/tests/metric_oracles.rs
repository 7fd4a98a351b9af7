//! Metrics checked against independent re-derivations.

use std::collections::BTreeSet;

use musiq_core::metrics::{acc2, genre_acc1, instrument_f1, mirex_key_score, HashingEmbedder, TfIdfEmbedder};
use musiq_core::mir::{KeyLabel, Mode};
use musiq_core::rng::seeded_rng;
use rand::Rng;

fn scale(key: KeyLabel) -> BTreeSet<u8> {
    let steps: [u8; 7] = match key.mode {
        Mode::Major => [0, 2, 4, 5, 7, 9, 11],
        Mode::Minor => [0, 2, 3, 5, 7, 8, 10],
    };
    steps.iter().map(|s| (key.tonic() + s) % 12).collect()
}

/// Relationship read off pitch-class content rather than tonic arithmetic.
fn oracle(est: KeyLabel, reference: KeyLabel) -> f64 {
    if est == reference {
        1.0
    } else if est.mode == reference.mode && (est.tonic() + 12 - reference.tonic()) % 12 == 7 {
        0.5
    } else if est.mode != reference.mode && scale(est) == scale(reference) {
        0.3
    } else if est.tonic() == reference.tonic() {
        0.2
    } else {
        0.0
    }
}

#[test]
fn mirex_matches_oracle_on_all_pairs() {
    let mut counts = [0usize; 5];
    for est in KeyLabel::all() {
        for reference in KeyLabel::all() {
            let s = mirex_key_score(est, reference);
            assert_eq!(s, oracle(est, reference), "{est} vs {reference}");
            let slot = [1.0, 0.5, 0.3, 0.2, 0.0].iter().position(|v| *v == s).unwrap();
            counts[slot] += 1;
        }
    }
    assert_eq!(counts, [24, 24, 24, 24, 480]);
}

#[test]
fn acc2_matches_direct_rule() {
    let mut rng = seeded_rng(11);
    for _ in 0..10_000 {
        let r: f64 = rng.random_range(30.0..250.0);
        let e: f64 = if rng.random_bool(0.5) {
            let m = [1.0 / 3.0, 0.5, 1.0, 2.0, 3.0][rng.random_range(0..5)];
            m * r * rng.random_range(0.9..1.1)
        } else {
            rng.random_range(5.0..800.0)
        };
        let direct = [1.0 / 3.0, 0.5, 1.0, 2.0, 3.0]
            .iter()
            .any(|m| (e - m * r).abs() <= 0.04 * m * r);
        assert_eq!(acc2(e, r), direct, "{e} vs {r}");
    }
}

#[test]
fn random_genre_outputs_sit_at_chance() {
    let genres = ["blues", "classical", "country", "disco", "hiphop", "jazz", "metal", "pop", "reggae", "rock"];
    let embedder = HashingEmbedder::default();
    let mut rng = seeded_rng(5);
    let trials = 2_000;
    let mut correct = 0;
    for _ in 0..trials {
        let truth = genres[rng.random_range(0..10)];
        let guess = genres[rng.random_range(0..10)];
        if genre_acc1(&format!("sounds like {guess}"), truth, &genres, &embedder).unwrap() {
            correct += 1;
        }
    }
    let acc = correct as f64 / trials as f64;
    assert!((acc - 0.1).abs() <= 0.03, "accuracy {acc}");
    let tfidf = TfIdfEmbedder::fit(&genres);
    assert!(genre_acc1("classical", "classical", &genres, &tfidf).unwrap());
}

#[test]
fn constant_instrument_baseline_matches_hand_f1() {
    let constant = "drums, bass, vocals, piano, guitar";
    let truths: Vec<Vec<&str>> = vec![
        vec!["drums", "bass", "vocals"],
        vec!["violin", "cello"],
        vec!["piano"],
        vec!["electric guitar", "drum set", "male singer", "synthesizer"],
    ];
    let hand = [2.0 * 3.0 / 8.0, 0.0, 2.0 * 1.0 / 6.0, 2.0 * 3.0 / 9.0];
    for (truth, expected) in truths.iter().zip(hand) {
        let f1 = instrument_f1(constant, truth);
        assert!((f1 - expected).abs() < 1e-12, "{truth:?}: {f1} vs {expected}");
    }
}
