use alloc::format;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};

/// Zone column order of every price table.
pub const ZONES: [&str; 5] = ["Genesee", "Central", "North", "Mohawk Valley", "West"];

/// Hourly zonal electricity prices, one row per hour in [`ZONES`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceTable {
    data: Vec<f64>,
    synthetic: bool,
}

impl PriceTable {
    /// Takes row-major prices with `ZONES.len()` columns.
    pub fn new(data: Vec<f64>) -> Result<Self> {
        if data.is_empty() || !data.len().is_multiple_of(ZONES.len()) {
            return Err(Error::Data(format!(
                "price table needs a positive multiple of {} values, got {}",
                ZONES.len(),
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!(
                "non-finite price in hour {}",
                pos / ZONES.len() + 1
            )));
        }
        Ok(Self {
            data,
            synthetic: false,
        })
    }

    /// Independent `Uniform[10, 100]` prices per zone and hour.
    pub fn synthetic<R: Rng + ?Sized>(rng: &mut R, hours: usize) -> Self {
        let data = (0..hours * ZONES.len())
            .map(|_| rng.random_range(10.0..=100.0))
            .collect();
        Self {
            data,
            synthetic: true,
        }
    }

    pub fn hours(&self) -> usize {
        self.data.len() / ZONES.len()
    }

    /// Prices of hour `t` (one-based).
    pub fn row(&self, t: usize) -> &[f64] {
        let z = ZONES.len();
        &self.data[(t - 1) * z..t * z]
    }

    pub fn is_synthetic(&self) -> bool {
        self.synthetic
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}
