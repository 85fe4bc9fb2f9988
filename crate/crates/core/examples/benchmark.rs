//! Scores the default detector on a batch of synthetic groves.
//!
//! ```text
//! cargo run --release --example benchmark -- [first_seed] [last_seed]
//! ```

use std::time::Instant;

use palmcount::synth::{generate_grove, match_detections, GroveSpec};
use palmcount::{detect, DetectorConfig};

fn main() {
    let mut args = std::env::args()
        .skip(1)
        .map(|a| a.parse::<u64>().expect("seed must be an integer"));
    let first = args.next().unwrap_or(1);
    let last = args.next().unwrap_or(20);
    let cfg = DetectorConfig::default();

    println!("seed  truth  count    tp   fp   fn  precision  recall    ms");
    let (mut sum_p, mut sum_r, mut n) = (0.0, 0.0, 0.0);
    for seed in first..=last {
        let spec = GroveSpec {
            n_distractors: 10,
            noise_density: 0.002,
            seed,
            ..Default::default()
        };
        let (img, truth) = generate_grove(&spec).expect("valid spec");
        let started = Instant::now();
        let report = detect(&img, &cfg).expect("detector runs");
        let ms = started.elapsed().as_secs_f64() * 1e3;
        let m = match_detections(&report, &truth, 5.0);
        println!(
            "{seed:>4}  {:>5}  {:>5}  {:>4} {:>4} {:>4}  {:>9.4}  {:>6.4}  {ms:>4.0}",
            truth.palms.len(),
            report.count,
            m.true_positives,
            m.false_positives,
            m.false_negatives,
            m.precision,
            m.recall
        );
        sum_p += m.precision;
        sum_r += m.recall;
        n += 1.0;
    }
    println!(
        "mean precision {:.4}, mean recall {:.4}",
        sum_p / n,
        sum_r / n
    );
}
