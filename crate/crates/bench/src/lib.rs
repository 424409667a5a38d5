//! Shared inputs for the benchmarks.

use theater_core::synth::{synthesize_gesture_trace, SyntheticGestureKind};
use theater_core::HandFrame;

/// Every synthetic gesture back to back, half a second apart, lightly noised.
pub fn medley() -> Vec<HandFrame> {
    let mut out: Vec<HandFrame> = Vec::new();
    let mut offset = 0.0;
    for (seed, kind) in SyntheticGestureKind::all().into_iter().enumerate() {
        let trace = synthesize_gesture_trace(kind, 0.003, seed as u64).expect("valid synth params");
        let end = trace.last().map_or(0.0, HandFrame::t);
        out.extend(
            trace
                .iter()
                .map(|f| f.with_time(f.t() + offset).expect("finite time")),
        );
        offset += end + 0.5;
    }
    out
}
