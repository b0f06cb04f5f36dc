//! Built-in unit registry and exact multiplicative unit conversion for
//! lab measurements. Each registered unit carries a dimension and a factor
//! to that dimension's canonical unit; converting between units of
//! different dimensions is an error.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Dimension {
    /// Particle counts per volume; canonical unit `/mm3`.
    CountConcentration,
    /// Mass per volume; canonical unit `g/dL`.
    MassConcentration,
    /// Amount of substance per volume; canonical unit `mmol/L`.
    MolarConcentration,
    /// Enzymatic activity per volume; canonical unit `U/L`.
    EnzymeActivity,
    /// Dimensionless percentage; canonical unit `%`.
    Fraction,
    /// Elapsed time; canonical unit `years`.
    Time,
}

#[derive(Debug, Error, PartialEq)]
pub enum UnitError {
    #[error("unknown unit `{0}`")]
    Unknown(String),
    #[error("incompatible dimensions: cannot convert `{from}` to `{to}`")]
    Incompatible { from: String, to: String },
}

fn registry() -> &'static BTreeMap<&'static str, (Dimension, f64)> {
    static REGISTRY: OnceLock<BTreeMap<&'static str, (Dimension, f64)>> = OnceLock::new();
    REGISTRY.get_or_init(|| {
        use Dimension::*;
        let mut m = BTreeMap::new();
        // counts per volume (1 uL = 1 mm3)
        m.insert("/mm3", (CountConcentration, 1.0));
        m.insert("/uL", (CountConcentration, 1.0));
        m.insert("x10^3/uL", (CountConcentration, 1e3));
        m.insert("x10^9/L", (CountConcentration, 1e3));
        m.insert("/L", (CountConcentration, 1e-6));
        // mass per volume
        m.insert("g/dL", (MassConcentration, 1.0));
        m.insert("g/L", (MassConcentration, 0.1));
        m.insert("mg/dL", (MassConcentration, 1e-3));
        m.insert("mg/L", (MassConcentration, 1e-4));
        m.insert("ug/mL", (MassConcentration, 1e-4));
        // amount per volume
        m.insert("mmol/L", (MolarConcentration, 1.0));
        m.insert("umol/L", (MolarConcentration, 1e-3));
        // enzyme activity
        m.insert("U/L", (EnzymeActivity, 1.0));
        m.insert("IU/L", (EnzymeActivity, 1.0));
        // percentage
        m.insert("%", (Fraction, 1.0));
        // time (365.25-day year)
        m.insert("years", (Time, 1.0));
        m.insert("days", (Time, 1.0 / 365.25));
        m
    })
}

pub fn is_registered(unit: &str) -> bool {
    registry().contains_key(unit)
}

fn lookup(unit: &str) -> Result<(Dimension, f64), UnitError> {
    registry().get(unit).copied().ok_or_else(|| UnitError::Unknown(unit.to_string()))
}

/// Converts `value` from one registered unit to another of the same
/// dimension. The conversion is a single exact multiplication.
pub fn convert_unit(value: f64, from: &str, to: &str) -> Result<f64, UnitError> {
    let (dim_from, f_from) = lookup(from)?;
    let (dim_to, f_to) = lookup(to)?;
    if dim_from != dim_to {
        return Err(UnitError::Incompatible { from: from.to_string(), to: to.to_string() });
    }
    Ok(value * (f_from / f_to))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thousand_per_ul_scales_to_per_mm3() {
        assert_eq!(convert_unit(150.0, "x10^3/uL", "/mm3").unwrap(), 150_000.0);
    }

    #[test]
    fn identity_conversion_is_exact() {
        assert_eq!(convert_unit(7.0, "/mm3", "/mm3").unwrap(), 7.0);
    }

    #[test]
    fn incompatible_dimensions_error() {
        assert_eq!(
            convert_unit(5.0, "mg/dL", "/mm3").unwrap_err(),
            UnitError::Incompatible { from: "mg/dL".into(), to: "/mm3".into() }
        );
    }

    #[test]
    fn unknown_unit_errors() {
        assert!(matches!(convert_unit(1.0, "cubits", "/mm3"), Err(UnitError::Unknown(_))));
    }

    #[test]
    fn round_trip_through_canonical() {
        let v = convert_unit(12.5, "g/L", "mg/dL").unwrap();
        assert!((v - 1250.0).abs() < 1e-9);
        let back = convert_unit(v, "mg/dL", "g/L").unwrap();
        assert!((back - 12.5).abs() < 1e-12);
    }
}
