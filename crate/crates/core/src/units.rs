//! Physical quantities in scenario files.
//!
//! Every physical value in a scenario carries a unit suffix, e.g. `"80 km/h"`
//! or `"3400 veh/h"`. Values are converted to SI (vehicles, meters, seconds,
//! dollars) on load, and written back out in SI.

use crate::error::{Error, Result};

/// The dimension a field expects.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dimension {
    Length,
    Time,
    Vehicles,
    /// veh/s
    Flow,
    /// veh/m
    Density,
    /// m/s
    Speed,
    /// veh·m/s
    Production,
    /// 1/s
    Rate,
    Money,
    /// $/m
    MoneyPerLength,
}

impl Dimension {
    /// Canonical SI unit string used when writing scenarios.
    pub fn si_unit(self) -> &'static str {
        match self {
            Dimension::Length => "m",
            Dimension::Time => "s",
            Dimension::Vehicles => "veh",
            Dimension::Flow => "veh/s",
            Dimension::Density => "veh/m",
            Dimension::Speed => "m/s",
            Dimension::Production => "veh*m/s",
            Dimension::Rate => "1/s",
            Dimension::Money => "$",
            Dimension::MoneyPerLength => "$/m",
        }
    }

    fn factor(self, unit: &str) -> Option<f64> {
        use Dimension::*;
        let f = match (self, unit) {
            (Length, "m") => 1.0,
            (Length, "km") => 1000.0,
            (Time, "s") => 1.0,
            (Time, "min") => 60.0,
            (Time, "h") => 3600.0,
            (Vehicles, "veh") => 1.0,
            (Flow, "veh/s") => 1.0,
            (Flow, "veh/min") => 1.0 / 60.0,
            (Flow, "veh/h") => 1.0 / 3600.0,
            (Density, "veh/m") => 1.0,
            (Density, "veh/km") => 1e-3,
            (Speed, "m/s") => 1.0,
            (Speed, "km/h") => 1.0 / 3.6,
            (Production, "veh*m/s") | (Production, "veh·m/s") => 1.0,
            (Rate, "1/s") => 1.0,
            (Rate, "1/min") => 1.0 / 60.0,
            (Rate, "1/h") => 1.0 / 3600.0,
            (Money, "$") => 1.0,
            (Money, "k$") => 1e3,
            (Money, "M$") => 1e6,
            (MoneyPerLength, "$/m") => 1.0,
            (MoneyPerLength, "$/km") => 1e-3,
            (MoneyPerLength, "M$/km") => 1e3,
            _ => return None,
        };
        Some(f)
    }
}

/// Parses `"<number> <unit>"` (whitespace optional) into an SI value.
pub fn parse_quantity(field: &str, text: &str, dim: Dimension) -> Result<f64> {
    let text = text.trim();
    let split = text
        .char_indices()
        .find(|&(i, c)| {
            !(c.is_ascii_digit()
                || c == '.'
                || c == '+'
                || c == '-'
                || ((c == 'e' || c == 'E') && i > 0))
        })
        .map(|(i, _)| i)
        .unwrap_or(text.len());
    let (num, unit) = text.split_at(split);
    let value: f64 = num
        .trim()
        .parse()
        .map_err(|_| Error::Parse(format!("{field}: cannot read a number from `{text}`")))?;
    let unit = unit.trim();
    if unit.is_empty() {
        return Err(Error::Parse(format!(
            "{field}: `{text}` is missing a unit (expected e.g. `{} {}`)",
            num.trim(),
            dim.si_unit()
        )));
    }
    let factor = dim.factor(unit).ok_or_else(|| Error::UnknownUnit {
        field: field.to_string(),
        unit: unit.to_string(),
    })?;
    Ok(value * factor)
}

/// Formats an SI value with its canonical unit. `{}` on f64 is the shortest
/// representation that parses back to the same bits.
pub fn format_quantity(value: f64, dim: Dimension) -> String {
    format!("{} {}", value, dim.si_unit())
}
