//! Calendar-date helpers shared across modules. All dates in the data
//! model are day-granular `chrono::NaiveDate`s.

use chrono::{Datelike, Days, NaiveDate};

/// Completed years between `birth` and `on` (clinical age: decremented
/// when the birthday has not yet occurred in the year of `on`).
pub fn age_in_years(birth: NaiveDate, on: NaiveDate) -> i32 {
    let mut age = on.year() - birth.year();
    if (on.month(), on.day()) < (birth.month(), birth.day()) {
        age -= 1;
    }
    age
}

/// Whole days from `a` to `b` (positive when `b` is later).
pub fn days_between(a: NaiveDate, b: NaiveDate) -> i64 {
    (b - a).num_days()
}

/// `date + days`, saturating at the calendar range ends.
pub fn add_days(date: NaiveDate, days: i64) -> NaiveDate {
    if days >= 0 {
        date.checked_add_days(Days::new(days as u64)).unwrap_or(NaiveDate::MAX)
    } else {
        date.checked_sub_days(Days::new((-days) as u64)).unwrap_or(NaiveDate::MIN)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(s: &str) -> NaiveDate {
        s.parse().unwrap()
    }

    #[test]
    fn age_counts_completed_years() {
        assert_eq!(age_in_years(d("1960-06-15"), d("2020-06-14")), 59);
        assert_eq!(age_in_years(d("1960-06-15"), d("2020-06-15")), 60);
        assert_eq!(age_in_years(d("1960-06-15"), d("2020-06-16")), 60);
    }

    #[test]
    fn age_handles_leap_day_birth() {
        assert_eq!(age_in_years(d("2000-02-29"), d("2001-02-28")), 0);
        assert_eq!(age_in_years(d("2000-02-29"), d("2001-03-01")), 1);
    }

    #[test]
    fn day_arithmetic_round_trips() {
        let base = d("2015-03-31");
        assert_eq!(days_between(base, add_days(base, 180)), 180);
        assert_eq!(days_between(base, add_days(base, -30)), -30);
    }
}
