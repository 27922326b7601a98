use alloc::format;

use chrono::{DateTime, Datelike, Timelike};

use crate::error::{Error, Result};

/// Temporal signals of one interaction: the absolute epoch second plus the
/// four periodic indices derived from it under UTC.
///
/// * `t_m` month-of-year, 0-based (0 = January)
/// * `t_w` ISO week-of-year minus one, clamped to `0..=52`
/// * `t_d` day-of-week, 0 = Monday
/// * `t_h` hour-of-day, `0..=23`
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TimeSignals {
    pub t_a: i64,
    pub t_m: u32,
    pub t_w: u32,
    pub t_d: u32,
    pub t_h: u32,
}

pub const MONTH_VOCAB: usize = 12;
pub const WEEK_VOCAB: usize = 53;
pub const DAY_VOCAB: usize = 7;
pub const HOUR_VOCAB: usize = 24;

/// Decompose an epoch second into [`TimeSignals`] (proleptic Gregorian, UTC).
pub fn decompose_timestamp(t_a: i64) -> Result<TimeSignals> {
    if t_a < 0 {
        return Err(Error::Validation(format!(
            "negative timestamp {t_a} (epoch seconds must be >= 0)"
        )));
    }
    let dt = DateTime::from_timestamp(t_a, 0)
        .ok_or_else(|| Error::Validation(format!("timestamp {t_a} out of range")))?;
    Ok(TimeSignals {
        t_a,
        t_m: dt.month0(),
        t_w: dt.iso_week().week0().min(52),
        t_d: dt.weekday().num_days_from_monday(),
        t_h: dt.hour(),
    })
}

impl TimeSignals {
    /// Validate externally supplied indices against their vocabularies.
    pub fn validate(&self) -> Result<()> {
        if self.t_a < 0 {
            return Err(Error::Validation(format!("negative timestamp {}", self.t_a)));
        }
        let checks = [
            (self.t_m, MONTH_VOCAB, "month"),
            (self.t_w, WEEK_VOCAB, "week"),
            (self.t_d, DAY_VOCAB, "day"),
            (self.t_h, HOUR_VOCAB, "hour"),
        ];
        for (v, vocab, name) in checks {
            if v as usize >= vocab {
                return Err(Error::Validation(format!(
                    "{name} index {v} out of range 0..{vocab}"
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn epoch_zero_is_a_january_thursday() {
        let t = decompose_timestamp(0).unwrap();
        assert_eq!((t.t_m, t.t_w, t.t_d, t.t_h), (0, 0, 3, 0));
    }

    #[test]
    fn one_hour_later_only_moves_the_hour() {
        let a = decompose_timestamp(0).unwrap();
        let b = decompose_timestamp(3600).unwrap();
        assert_eq!((a.t_m, a.t_w, a.t_d), (b.t_m, b.t_w, b.t_d));
        assert_eq!(b.t_h, 1);
    }

    #[test]
    fn jan_4_1970_is_a_sunday() {
        let t = decompose_timestamp(86_400 * 3).unwrap();
        assert_eq!(t.t_d, 6);
    }

    #[test]
    fn negative_timestamp_rejected() {
        assert!(matches!(decompose_timestamp(-1), Err(Error::Validation(_))));
    }

    #[test]
    fn iso_week_53_stays_in_vocab() {
        // 2015-12-31 falls in ISO week 53.
        let t = decompose_timestamp(1_451_520_000).unwrap();
        assert_eq!(t.t_w, 52);
        t.validate().unwrap();
    }

    #[test]
    fn decomposition_is_idempotent() {
        for &ts in &[0i64, 86_400 * 3, 1_451_520_000, 999_999_937] {
            let a = decompose_timestamp(ts).unwrap();
            let b = decompose_timestamp(a.t_a).unwrap();
            assert_eq!(a, b);
        }
    }
}
