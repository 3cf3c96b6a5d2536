//! `key = value` summaries with a stable key order.

use std::fmt::Write as _;

use crate::formats::num;

/// Values a report line can hold; floats use [`num`].
pub trait Value {
    fn render(&self) -> String;
}

impl Value for f64 {
    fn render(&self) -> String {
        num(*self)
    }
}

macro_rules! display_value {
    ($($t:ty),*) => {$(
        impl Value for $t {
            fn render(&self) -> String {
                self.to_string()
            }
        }
    )*};
}

display_value!(usize, u64, u32, i32, bool, str, String, std::path::Display<'_>);

impl<T: Value + ?Sized> Value for &T {
    fn render(&self) -> String {
        (**self).render()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Report {
    entries: Vec<(String, String)>,
    failures: Vec<String>,
}

impl Report {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, key: impl Into<String>, value: impl Value) {
        self.entries.push((key.into(), value.render()));
    }

    /// Records `<prefix>.verdict = pass|fail`.
    pub fn verdict(&mut self, prefix: &str, pass: bool) {
        self.push(format!("{prefix}.verdict"), if pass { "pass" } else { "fail" });
        if !pass {
            self.failures.push(prefix.to_string());
        }
    }

    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }

    pub fn failures(&self) -> &[String] {
        &self.failures
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|e| e.0 == key).map(|e| e.1.as_str())
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            writeln!(out, "{k} = {v}").unwrap();
        }
        out
    }
}
