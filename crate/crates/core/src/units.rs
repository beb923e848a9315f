//! Conversions between logarithmic and linear power units.
//!
//! All model math runs in watts and linear ratios; these helpers are used at
//! the CLI and FFI boundaries only.

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn watts_to_dbm(watts: f64) -> f64 {
    10.0 * watts.log10() + 30.0
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(ratio: f64) -> f64 {
    10.0 * ratio.log10()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thirty_dbm_is_one_watt() {
        assert_eq!(dbm_to_watts(30.0), 1.0);
        assert_eq!(dbm_to_watts(-40.0), 1e-7);
        assert!((watts_to_dbm(1e-7) + 40.0).abs() < 1e-12);
    }

    #[test]
    fn db_round_trip() {
        for db in [-10.0, 0.0, 3.0, 10.0, 20.0] {
            assert!((linear_to_db(db_to_linear(db)) - db).abs() < 1e-12);
        }
        assert_eq!(db_to_linear(10.0), 10.0);
    }
}
