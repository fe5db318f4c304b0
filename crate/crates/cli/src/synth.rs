//! Deterministic synthetic headline/body corpus for smoke runs.
//!
//! Each body reports on one entity drawn from a small word pool. Related
//! headlines name the body's entity plus a stance cue; unrelated headlines
//! name a different entity. Easy to learn, which is the point.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stance_core::{Corpus, Stance, StancePair};

const ENTITIES: [&str; 24] = [
    "mayor", "satellite", "volcano", "bank", "museum", "senator", "glacier", "startup", "stadium", "vaccine",
    "pipeline", "festival", "airline", "reactor", "library", "harbor", "dolphin", "tower", "election", "meteor",
    "bridge", "orchestra", "railway", "island",
];
const EVENTS: [&str; 12] = [
    "collapse", "merger", "discovery", "scandal", "launch", "closure", "rescue", "strike", "eruption", "record",
    "outbreak", "auction",
];
const FILLER: [&str; 16] = [
    "officials", "said", "on", "monday", "the", "report", "local", "residents", "were", "told", "that", "sources",
    "witnesses", "described", "scene", "later",
];
const AGREE_CUES: [&str; 3] = ["confirmed", "verified", "officially"];
const DISAGREE_CUES: [&str; 3] = ["hoax", "fake", "false"];
const DISCUSS_CUES: [&str; 3] = ["reportedly", "allegedly", "claims"];

/// `pairs` headline/body pairs over roughly `pairs / 5` bodies.
pub fn synthetic_corpus(pairs: usize, seed: u64) -> Corpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_bodies = (pairs / 5).max(2);
    let mut topics = Vec::with_capacity(n_bodies);
    let mut bodies = BTreeMap::new();
    for id in 0..n_bodies as u64 {
        let entity = *ENTITIES.choose(&mut rng).unwrap();
        let event = *EVENTS.choose(&mut rng).unwrap();
        let mut words = Vec::new();
        for _ in 0..rng.random_range(3..7) {
            words.push(entity);
            words.push(event);
            for _ in 0..rng.random_range(4..10) {
                words.push(*FILLER.choose(&mut rng).unwrap());
            }
        }
        let text = format!("The {}.", words.join(" "));
        bodies.insert(id + 1, Arc::<str>::from(text));
        topics.push((entity, event));
    }

    let mut out = Vec::with_capacity(pairs);
    for i in 0..pairs {
        let body_id = (i % n_bodies) as u64 + 1;
        let (entity, event) = topics[body_id as usize - 1];
        let stance = match rng.random_range(0..20) {
            0..=2 => Stance::Agree,
            3..=4 => Stance::Disagree,
            5..=9 => Stance::Discuss,
            _ => Stance::Unrelated,
        };
        let headline = match stance {
            Stance::Agree => format!("{} {entity} {event} {}", cue(&mut rng, &AGREE_CUES), filler(&mut rng)),
            Stance::Disagree => format!("{entity} {event} story is a {}", cue(&mut rng, &DISAGREE_CUES)),
            Stance::Discuss => format!("{entity} {} linked to {event} {}", cue(&mut rng, &DISCUSS_CUES), filler(&mut rng)),
            Stance::Unrelated => {
                let other = *ENTITIES.iter().filter(|e| **e != entity).collect::<Vec<_>>().choose(&mut rng).unwrap();
                format!("{other} {} {}", EVENTS.choose(&mut rng).unwrap(), filler(&mut rng))
            }
        };
        let body = bodies[&body_id].clone();
        out.push(StancePair::new(headline, body_id, &body, Some(stance)));
    }
    Corpus::new(out, bodies).expect("every generated pair references a generated body")
}

fn cue(rng: &mut ChaCha8Rng, cues: &[&'static str]) -> &'static str {
    cues.choose(rng).unwrap()
}

fn filler(rng: &mut ChaCha8Rng) -> &'static str {
    FILLER.choose(rng).unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_complete() {
        let a = synthetic_corpus(100, 3);
        assert_eq!(a.len(), 100);
        assert_eq!(a.bodies().len(), 20);
        assert_eq!(a.pairs(), synthetic_corpus(100, 3).pairs());
        assert_ne!(a.pairs(), synthetic_corpus(100, 4).pairs());
        let hist = a.label_histogram();
        assert!(Stance::ALL.iter().all(|s| hist.get(s).copied().unwrap_or(0) > 0), "{hist:?}");
    }
}
