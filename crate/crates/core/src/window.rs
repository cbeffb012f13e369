//! Calendar and event-relative intervals.

use std::fmt;

use chrono::{Days, NaiveDate};
use serde::{Deserialize, Serialize};

/// Earliest relative day any series is materialized for.
pub const SPAN_START: i32 = -150;
/// Latest relative day any series is materialized for.
pub const SPAN_END: i32 = 30;

/// Inclusive interval of calendar days. Empty when `end < start`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DateRange {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl DateRange {
    pub fn new(start: NaiveDate, end: NaiveDate) -> Self {
        Self { start, end }
    }

    pub fn is_empty(&self) -> bool {
        self.end < self.start
    }

    pub fn contains(&self, date: NaiveDate) -> bool {
        self.start <= date && date <= self.end
    }

    /// Number of calendar days covered.
    pub fn len(&self) -> usize {
        if self.is_empty() {
            0
        } else {
            (self.end - self.start).num_days() as usize + 1
        }
    }
}

impl fmt::Display for DateRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}..={}", self.start, self.end)
    }
}

/// Inclusive interval of days relative to an event date (day 0).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RelWindow {
    pub start: i32,
    pub end: i32,
}

impl RelWindow {
    pub const fn new(start: i32, end: i32) -> Self {
        Self { start, end }
    }

    /// The default market-model estimation window, `[-150, -10]`.
    pub const ESTIMATION: RelWindow = RelWindow::new(-150, -10);
    /// The default reporting horizon, `[-7, +30]`.
    pub const HORIZON: RelWindow = RelWindow::new(-7, 30);
    /// The full span any abnormal series is materialized over.
    pub const SPAN: RelWindow = RelWindow::new(SPAN_START, SPAN_END);

    pub fn is_valid(&self) -> bool {
        self.start <= self.end
    }

    pub fn contains(&self, day: i32) -> bool {
        self.start <= day && day <= self.end
    }

    pub fn contains_window(&self, other: &RelWindow) -> bool {
        self.start <= other.start && other.end <= self.end
    }

    pub fn overlaps(&self, other: &RelWindow) -> bool {
        self.start <= other.end && other.start <= self.end
    }

    pub fn len(&self) -> usize {
        if self.is_valid() {
            (self.end - self.start) as usize + 1
        } else {
            0
        }
    }

    pub fn is_empty(&self) -> bool {
        !self.is_valid()
    }

    pub fn days(&self) -> impl Iterator<Item = i32> {
        self.start..=self.end
    }

    /// Resolves the window to calendar dates around `event_date`.
    pub fn to_dates(&self, event_date: NaiveDate) -> DateRange {
        DateRange::new(offset(event_date, self.start), offset(event_date, self.end))
    }
}

impl fmt::Display for RelWindow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}]", self.start, self.end)
    }
}

/// `date + days`, for either sign of `days`.
pub fn offset(date: NaiveDate, days: i32) -> NaiveDate {
    if days >= 0 {
        date.checked_add_days(Days::new(days as u64))
    } else {
        date.checked_sub_days(Days::new(days.unsigned_abs() as u64))
    }
    .expect("date offset out of range")
}

/// Whole days from `from` to `to`.
pub fn days_between(from: NaiveDate, to: NaiveDate) -> i64 {
    (to - from).num_days()
}
