//! Fixture generation shared by the benchmarks.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use unitab_core::{validate_table, Context, Example};

const WORDS: &[&str] = &[
    "alpha", "beta", "gamma", "delta", "river", "stone", "city", "north", "team", "score", "season", "album", "bridge",
];

fn phrase(rng: &mut ChaCha8Rng, n: usize) -> String {
    (0..n).map(|_| *WORDS.choose(rng).unwrap()).collect::<Vec<_>>().join(" ")
}

/// `count` examples with a `rows` x `cols` table; every other one has a
/// `context_words`-word NL context.
pub fn fixtures(seed: u64, count: usize, rows: usize, cols: usize, context_words: usize) -> Vec<Example> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let headers = (0..cols).map(|c| format!("{} {c}", phrase(&mut rng, 1))).collect();
            let body = (0..rows)
                .map(|_| {
                    (0..cols)
                        .map(|_| {
                            let n = rng.random_range(1..4);
                            phrase(&mut rng, n)
                        })
                        .collect()
                })
                .collect();
            let table = validate_table(headers, body).unwrap();
            let context =
                if i % 2 == 0 { Context::nl(phrase(&mut rng, context_words)).unwrap() } else { Context::missing() };
            Example::new(format!("bench:{i}"), table, context, "bench")
        })
        .collect()
}
