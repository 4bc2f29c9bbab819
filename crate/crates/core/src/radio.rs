//! Two-ray-ground propagation and reception classification.
//!
//! Received power is deterministic in distance; there is no fading or noise.
//! The received power of a frame doubles as its link quality.

use std::f64::consts::PI;

const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Default transmit power, approximating a 914 MHz WaveLAN card.
pub const DEFAULT_TX_POWER: f64 = 0.281_838_15;
/// Nominal decode range used to derive the default receive threshold.
pub const DEFAULT_RX_RANGE: f64 = 250.0;
/// Nominal carrier-sense range used to derive the default sensing threshold.
pub const DEFAULT_CS_RANGE: f64 = 550.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadioParams {
    pub tx_power: f64,
    pub tx_gain: f64,
    pub rx_gain: f64,
    pub tx_height: f64,
    pub rx_height: f64,
    pub system_loss: f64,
    pub rx_threshold: f64,
    pub cs_threshold: f64,
    /// Carrier frequency enabling a free-space model below the two-ray
    /// crossover distance. `None` applies two-ray ground at all distances.
    pub crossover_frequency: Option<f64>,
}

impl Default for RadioParams {
    fn default() -> Self {
        let mut p = RadioParams {
            tx_power: DEFAULT_TX_POWER,
            tx_gain: 1.0,
            rx_gain: 1.0,
            tx_height: 1.5,
            rx_height: 1.5,
            system_loss: 1.0,
            rx_threshold: 0.0,
            cs_threshold: 0.0,
            crossover_frequency: None,
        };
        p.rx_threshold = received_power(&p, DEFAULT_RX_RANGE);
        p.cs_threshold = received_power(&p, DEFAULT_CS_RANGE);
        p
    }
}

impl RadioParams {
    pub fn validate(&self) -> Result<(), String> {
        let checks = [
            (self.tx_power > 0.0, "tx_power must be > 0"),
            (self.tx_gain >= 0.0, "tx_gain must be >= 0"),
            (self.rx_gain >= 0.0, "rx_gain must be >= 0"),
            (self.tx_height > 0.0, "tx_height must be > 0"),
            (self.rx_height > 0.0, "rx_height must be > 0"),
            (self.system_loss >= 1.0, "system_loss must be >= 1"),
            (self.rx_threshold > 0.0, "rx_threshold must be > 0"),
            (self.cs_threshold > 0.0, "cs_threshold must be > 0"),
            (
                self.cs_threshold <= self.rx_threshold,
                "cs_threshold must not exceed rx_threshold",
            ),
        ];
        match checks.iter().find(|(ok, _)| !ok) {
            Some((_, msg)) => Err((*msg).to_string()),
            None => Ok(()),
        }
    }

    /// Distance at which the two-ray model yields `power`.
    pub fn two_ray_range(&self, power: f64) -> f64 {
        let num = self.tx_power
            * self.tx_gain
            * self.rx_gain
            * self.tx_height.powi(2)
            * self.rx_height.powi(2);
        (num / (power * self.system_loss)).powf(0.25)
    }

    /// Nominal decode range implied by `rx_threshold`.
    pub fn rx_range(&self) -> f64 {
        self.two_ray_range(self.rx_threshold)
    }
}

/// Received power in watts at `distance` meters.
///
/// `P_t G_t G_r h_t² h_r² / (d⁴ L)`. A distance of zero or less is a fault:
/// distinct co-located nodes indicate a broken scenario.
pub fn received_power(params: &RadioParams, distance: f64) -> f64 {
    assert!(
        distance > 0.0,
        "received_power: non-positive distance {distance}"
    );
    if let Some(freq) = params.crossover_frequency {
        let lambda = SPEED_OF_LIGHT / freq;
        let crossover = 4.0 * PI * params.tx_height * params.rx_height / lambda;
        if distance < crossover {
            return params.tx_power * params.tx_gain * params.rx_gain * lambda * lambda
                / ((4.0 * PI).powi(2) * distance * distance * params.system_loss);
        }
    }
    params.tx_power
        * params.tx_gain
        * params.rx_gain
        * params.tx_height.powi(2)
        * params.rx_height.powi(2)
        / (distance.powi(4) * params.system_loss)
}

/// Link quality of a received frame: identical to its received power.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct LinkQuality(f64);

impl LinkQuality {
    pub fn lq(self) -> f64 {
        self.0
    }
}

pub fn link_quality(pr: f64) -> LinkQuality {
    debug_assert!(pr >= 0.0, "negative received power {pr}");
    LinkQuality(pr)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reception {
    Deliverable,
    CarrierSenseOnly,
    Undetectable,
}

pub fn classify_reception(pr: f64, params: &RadioParams) -> Reception {
    if pr >= params.rx_threshold {
        Reception::Deliverable
    } else if pr >= params.cs_threshold {
        Reception::CarrierSenseOnly
    } else {
        Reception::Undetectable
    }
}
