//! Minimal UTC ISO-8601 parsing/formatting over epoch seconds. Hand-rolled
//! (days-from-civil arithmetic) so timestamp handling stays dependency-free
//! and bit-deterministic.

use crate::error::{LpfError, Result};

const SECS_PER_DAY: i64 = 86_400;

/// Days since 1970-01-01 for a proleptic Gregorian date.
fn days_from_civil(year: i64, month: u32, day: u32) -> i64 {
    let y = if month <= 2 { year - 1 } else { year };
    let era = if y >= 0 { y } else { y - 399 } / 400;
    let yoe = (y - era * 400) as u64;
    let mp = (month + 9) % 12;
    let doy = (153 * mp + 2) / 5 + day - 1;
    let doe = yoe * 365 + yoe / 4 - yoe / 100 + doy as u64;
    era * 146_097 + doe as i64 - 719_468
}

/// Inverse of [`days_from_civil`].
fn civil_from_days(z: i64) -> (i64, u32, u32) {
    let z = z + 719_468;
    let era = if z >= 0 { z } else { z - 146_096 } / 146_097;
    let doe = (z - era * 146_097) as u64;
    let yoe = (doe - doe / 1460 + doe / 36_524 - doe / 146_096) / 365;
    let y = yoe as i64 + era * 400;
    let doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    let mp = (5 * doy + 2) / 153;
    let d = (doy - (153 * mp + 2) / 5 + 1) as u32;
    let m = if mp < 10 { mp + 3 } else { mp - 9 } as u32;
    (if m <= 2 { y + 1 } else { y }, m, d)
}

/// Parses `YYYY-MM-DD` or `YYYY-MM-DDTHH:MM:SS[.fff][Z]` (UTC assumed)
/// into epoch seconds, truncating fractional seconds.
pub fn parse_iso8601(s: &str) -> Result<i64> {
    let bad = |why: &str| LpfError::Domain(format!("unparseable timestamp {s:?}: {why}"));
    let (date_part, time_part) = match s.split_once('T') {
        Some((d, t)) => (d, Some(t)),
        None => (s, None),
    };
    let mut date_iter = date_part.splitn(3, '-');
    let year: i64 = date_iter
        .next()
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| bad("year"))?;
    let month: u32 = date_iter
        .next()
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| bad("month"))?;
    let day: u32 = date_iter
        .next()
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| bad("day"))?;
    if !(1..=12).contains(&month) || !(1..=31).contains(&day) {
        return Err(bad("month/day range"));
    }
    let mut secs = days_from_civil(year, month, day) * SECS_PER_DAY;
    if let Some(time) = time_part {
        let time = time.strip_suffix('Z').unwrap_or(time);
        let time = time.split('.').next().unwrap_or(time);
        let mut t = time.splitn(3, ':');
        let h: i64 = t.next().and_then(|v| v.parse().ok()).ok_or_else(|| bad("hour"))?;
        let m: i64 = t.next().and_then(|v| v.parse().ok()).ok_or_else(|| bad("minute"))?;
        let sec: i64 = t.next().map_or(Ok(0), |v| v.parse().map_err(|_| bad("second")))?;
        if !(0..24).contains(&h) || !(0..60).contains(&m) || !(0..61).contains(&sec) {
            return Err(bad("time range"));
        }
        secs += h * 3600 + m * 60 + sec;
    }
    Ok(secs)
}

/// Formats epoch seconds as `YYYY-MM-DDTHH:MM:SSZ`.
pub fn format_iso8601(epoch_secs: i64) -> String {
    let days = epoch_secs.div_euclid(SECS_PER_DAY);
    let rem = epoch_secs.rem_euclid(SECS_PER_DAY);
    let (y, m, d) = civil_from_days(days);
    format!(
        "{y:04}-{m:02}-{d:02}T{:02}:{:02}:{:02}Z",
        rem / 3600,
        (rem % 3600) / 60,
        rem % 60
    )
}

/// Whole days between two timestamps (now − then), negative if `then` is
/// in the future.
pub fn days_between(then_secs: i64, now_secs: i64) -> i64 {
    (now_secs - then_secs).div_euclid(SECS_PER_DAY)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn epoch_roundtrip() {
        assert_eq!(parse_iso8601("1970-01-01T00:00:00Z").unwrap(), 0);
        assert_eq!(format_iso8601(0), "1970-01-01T00:00:00Z");
    }

    #[test]
    fn known_moments() {
        // 2026-01-25T15:42:33Z, counted from the epoch by hand:
        // 20478 days + 56553 seconds.
        let secs = parse_iso8601("2026-01-25T15:42:33Z").unwrap();
        assert_eq!(secs, 20_478 * 86_400 + 15 * 3600 + 42 * 60 + 33);
        assert_eq!(format_iso8601(secs), "2026-01-25T15:42:33Z");
    }

    #[test]
    fn date_only_and_fractional_forms() {
        let a = parse_iso8601("2024-02-29").unwrap();
        let b = parse_iso8601("2024-02-29T00:00:00.123Z").unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn roundtrip_sweep() {
        for &secs in &[0i64, 86_399, 86_400, 1_700_000_000, 4_102_444_800] {
            assert_eq!(parse_iso8601(&format_iso8601(secs)).unwrap(), secs);
        }
    }

    #[test]
    fn rejects_garbage() {
        assert!(parse_iso8601("not a date").is_err());
        assert!(parse_iso8601("2024-13-01").is_err());
        assert!(parse_iso8601("2024-02-30T25:00:00Z").is_err());
    }

    #[test]
    fn day_differences() {
        let then = parse_iso8601("2026-01-01T12:00:00Z").unwrap();
        let now = parse_iso8601("2026-01-11T12:00:00Z").unwrap();
        assert_eq!(days_between(then, now), 10);
        assert_eq!(days_between(now, then), -10);
    }
}
