//! Calendar decomposition of epoch timestamps.
//!
//! All call-time features are computed in one configured timezone
//! (expressed as a fixed offset from UTC, default 0). Weekdays are
//! numbered 0 = Monday .. 6 = Sunday.

pub const SECS_PER_DAY: i64 = 86_400;
pub const SECS_PER_HOUR: i64 = 3_600;

/// 1970-01-01 was a Thursday, i.e. weekday index 3 (0 = Monday).
const EPOCH_WEEKDAY: i64 = 3;

/// Day index since the epoch, after applying the timezone offset.
pub fn day_index(epoch_secs: i64, tz_offset_secs: i64) -> i64 {
    (epoch_secs + tz_offset_secs).div_euclid(SECS_PER_DAY)
}

/// Weekday in 0..=6 with 0 = Monday.
pub fn weekday(epoch_secs: i64, tz_offset_secs: i64) -> u8 {
    (day_index(epoch_secs, tz_offset_secs) + EPOCH_WEEKDAY).rem_euclid(7) as u8
}

/// Hour of day in 0..=23.
pub fn hour(epoch_secs: i64, tz_offset_secs: i64) -> u8 {
    ((epoch_secs + tz_offset_secs).rem_euclid(SECS_PER_DAY) / SECS_PER_HOUR) as u8
}

/// True for Saturday and Sunday.
pub fn is_weekend(epoch_secs: i64, tz_offset_secs: i64) -> bool {
    weekday(epoch_secs, tz_offset_secs) >= 5
}
