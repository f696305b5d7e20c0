//! Interval-based CSI sampling: short sessions at the intra-session rate,
//! separated by idle gaps.

use crate::config::SystemConfig;
use crate::error::{Error, Result};

/// Relative timestamps for one window: sessions of `session_duration_s`
/// sampled at `intra_session_rate_hz`, one every `session + gap` seconds,
/// truncated at `window_duration_s`.
pub fn make_sampling_schedule(config: &SystemConfig) -> Result<Vec<f64>> {
    config.validate()?;
    let period = config.session_duration_s + config.gap_duration_s;
    let per_session = (config.session_duration_s * config.intra_session_rate_hz).round() as usize;
    let dt = 1.0 / config.intra_session_rate_hz;

    let mut times = Vec::new();
    let mut session = 0usize;
    loop {
        let start = session as f64 * period;
        if start >= config.window_duration_s {
            break;
        }
        for n in 0..per_session {
            let t = start + n as f64 * dt;
            if t >= config.window_duration_s {
                break;
            }
            times.push(t);
        }
        session += 1;
    }
    if times.len() < 2 {
        return Err(Error::ScheduleTooShort(times.len()));
    }
    Ok(times)
}

/// Number of sessions a schedule spans (gaps longer than twice the median
/// spacing start a new session).
pub fn count_sessions(times: &[f64]) -> usize {
    if times.is_empty() {
        return 0;
    }
    let dt = median_interval(times);
    1 + times.windows(2).filter(|w| w[1] - w[0] > 2.0 * dt).count()
}

/// Median of consecutive timestamp differences.
pub fn median_interval(times: &[f64]) -> f64 {
    let mut d: Vec<f64> = times.windows(2).map(|w| w[1] - w[0]).collect();
    if d.is_empty() {
        return f64::NAN;
    }
    d.sort_by(f64::total_cmp);
    let n = d.len();
    if n % 2 == 1 {
        d[n / 2]
    } else {
        0.5 * (d[n / 2 - 1] + d[n / 2])
    }
}
