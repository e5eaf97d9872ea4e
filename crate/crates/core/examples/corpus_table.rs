use std::sync::Arc;

use spotter::clipstore::corpus::corpus_clips;
use spotter::evalharness::{sweep_report, SweepOptions};

fn main() {
    let clips: Vec<_> = corpus_clips::<f64>()
        .unwrap()
        .into_iter()
        .map(Arc::new)
        .collect();
    let t = std::time::Instant::now();
    let report = sweep_report(&clips, &SweepOptions::default()).unwrap();
    print!("{}", report.render_table());
    eprintln!("{:?}", t.elapsed());
}
