#![allow(dead_code)]

use mems_haptics::haptic::StylusTrace;
use mems_haptics::service::SessionConfig;

/// Scripted interaction at 100 Hz: press near the tip, drag down, release,
/// press again harder, release. Cycles every 4 s.
pub fn press_cycles(config: &SessionConfig, duration: f64, depth: f64) -> StylusTrace {
    let x = 0.9 * config.beam.length * config.scale.length_scale;
    let mut text = String::new();
    let samples = (duration * 100.0).round() as usize;
    for k in 0..samples {
        let t = k as f64 * 0.01;
        let phase = t % 4.0;
        let (y, applied) = match phase {
            p if p < 1.5 => (-depth * p / 1.5, true),
            p if p < 2.0 => (-depth, true),
            p if p < 2.5 => (0.0, false),
            p if p < 3.5 => (-0.5 * depth * (1.0 + (p - 2.5).sin()), true),
            _ => (0.0, false),
        };
        text.push_str(&format!("{t} {x} {y} 0 {}\n", u8::from(applied)));
    }
    StylusTrace::parse(&text).expect("generated trace parses")
}
