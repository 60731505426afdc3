use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Inclusive range of months.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MonthRange {
    pub start: usize,
    pub end: usize,
}

impl MonthRange {
    pub fn new(start: usize, end: usize) -> Result<Self> {
        if end < start {
            return Err(Error::Config(format!("month range {start}..={end} is empty")));
        }
        Ok(MonthRange { start, end })
    }

    pub fn len(&self) -> usize {
        self.end + 1 - self.start
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, m: usize) -> bool {
        (self.start..=self.end).contains(&m)
    }

    pub fn months(&self) -> std::ops::RangeInclusive<usize> {
        self.start..=self.end
    }
}

impl fmt::Display for MonthRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}..={}", self.start, self.end)
    }
}

/// Consecutive windows of `window_len` months, stride one.
pub fn make_windows(range: MonthRange, window_len: usize) -> Result<Vec<Vec<usize>>> {
    if window_len == 0 {
        return Err(Error::Config("window_len must be positive".into()));
    }
    if range.len() < window_len {
        return Err(Error::Config(format!(
            "range {range} holds {} months, shorter than window_len {window_len}",
            range.len()
        )));
    }
    Ok((range.start..=range.end + 1 - window_len)
        .map(|s| (s..s + window_len).collect())
        .collect())
}

/// Chronological train / validation / test split of the months, each range
/// long enough for at least one window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub window_len: usize,
    pub train: MonthRange,
    pub val: MonthRange,
    pub test: MonthRange,
}

pub const DEFAULT_WINDOW_LEN: usize = 3;

impl WindowSpec {
    /// Test on the last `window_len` months, validate on the `window_len`
    /// before, train on the rest.
    pub fn default_for(n_months: usize, window_len: usize) -> Result<Self> {
        if window_len == 0 || n_months < 3 * window_len {
            return Err(Error::Config(format!(
                "{n_months} months cannot hold three ranges of {window_len}"
            )));
        }
        let test = MonthRange::new(n_months - window_len, n_months - 1)?;
        let val = MonthRange::new(test.start - window_len, test.start - 1)?;
        let train = MonthRange::new(0, val.start - 1)?;
        Ok(WindowSpec {
            window_len,
            train,
            val,
            test,
        })
    }

    pub fn validate(&self, n_months: usize) -> Result<()> {
        if !(self.train.end < self.val.start && self.val.end < self.test.start) {
            return Err(Error::Config(format!(
                "ranges must be disjoint and chronological: train {}, val {}, test {}",
                self.train, self.val, self.test
            )));
        }
        if self.test.end >= n_months {
            return Err(Error::Config(format!(
                "test range {} exceeds the {n_months} available months",
                self.test
            )));
        }
        for r in [self.train, self.val, self.test] {
            make_windows(r, self.window_len)?;
        }
        Ok(())
    }

    /// Training windows; static models train on single months.
    pub fn train_windows(&self, is_static: bool) -> Result<Vec<Vec<usize>>> {
        make_windows(self.train, if is_static { 1 } else { self.window_len })
    }

    pub fn val_windows(&self) -> Result<Vec<Vec<usize>>> {
        make_windows(self.val, self.window_len)
    }

    pub fn test_windows(&self) -> Result<Vec<Vec<usize>>> {
        make_windows(self.test, self.window_len)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn enumerates_windows() {
        let w = make_windows(MonthRange::new(0, 5).unwrap(), 3).unwrap();
        assert_eq!(w, vec![vec![0, 1, 2], vec![1, 2, 3], vec![2, 3, 4], vec![3, 4, 5]]);
        assert_eq!(make_windows(MonthRange::new(2, 4).unwrap(), 3).unwrap().len(), 1);
        assert!(matches!(
            make_windows(MonthRange::new(0, 1).unwrap(), 3),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn default_spec_for_a_year() {
        let s = WindowSpec::default_for(12, 3).unwrap();
        assert_eq!(
            (s.train, s.val, s.test),
            (
                MonthRange { start: 0, end: 5 },
                MonthRange { start: 6, end: 8 },
                MonthRange { start: 9, end: 11 }
            )
        );
        s.validate(12).unwrap();
        assert!(s.validate(11).is_err());
        assert_eq!(s.train_windows(true).unwrap().len(), 6);
        assert!(WindowSpec::default_for(8, 3).is_err());
    }

    proptest! {
        #[test]
        fn window_count_identity(start in 0usize..20, len in 1usize..15, w in 1usize..15) {
            prop_assume!(w <= len);
            let r = MonthRange::new(start, start + len - 1).unwrap();
            let ws = make_windows(r, w).unwrap();
            prop_assert_eq!(ws.len(), len - w + 1);
            for pair in ws.windows(2) {
                prop_assert_eq!(pair[1][0], pair[0][0] + 1);
            }
            prop_assert!(ws.iter().all(|x| x.len() == w && r.contains(x[0]) && r.contains(*x.last().unwrap())));
        }
    }
}
