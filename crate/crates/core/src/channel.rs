//! OFDMA uplink with Rayleigh block fading.
//!
//! Each device owns a dedicated sub-channel of bandwidth `B`. The squared
//! channel gain `|h|^2` is exponential with mean `sigma^2` (set by path loss)
//! and is redrawn independently every round. All quantities are linear-scale
//! SI units; dB/dBm inputs are converted once, when a population is built.

use rand::{Rng, RngCore};
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChannelError {
    #[error("invalid range for {name}: [{low}, {high}]")]
    InvalidRange { name: &'static str, low: f64, high: f64 },
    #[error("invalid parameter {name} = {value}")]
    InvalidParameter { name: &'static str, value: f64 },
    #[error("device {device}: deadline {deadline} s does not exceed computation time {compute} s")]
    InfeasibleDeadline { device: usize, deadline: f64, compute: f64 },
    #[error("population must contain at least one device")]
    EmptyPopulation,
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Shared uplink parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkBudget {
    /// Sub-channel bandwidth `B` in Hz.
    pub bandwidth: f64,
    /// Noise power spectral density `N0` in W/Hz.
    pub noise_psd: f64,
}

impl LinkBudget {
    pub fn new(bandwidth: f64, noise_psd: f64) -> Result<Self, ChannelError> {
        positive("bandwidth", bandwidth)?;
        positive("noise_psd", noise_psd)?;
        Ok(Self { bandwidth, noise_psd })
    }

    pub fn from_dbm_per_hz(bandwidth: f64, noise_dbm_per_hz: f64) -> Result<Self, ChannelError> {
        Self::new(bandwidth, dbm_to_watts(noise_dbm_per_hz))
    }

    /// Noise power `B * N0` in watts.
    pub fn noise_power(&self) -> f64 {
        self.bandwidth * self.noise_psd
    }
}

/// Static parameters of one edge device.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceProfile {
    pub id: usize,
    /// Local sample count `d_m`.
    pub data_size: usize,
    /// Transmit power `P_m` in watts.
    pub tx_power: f64,
    /// Mean squared channel gain `sigma_m^2` (linear).
    pub channel_gain_mean: f64,
    /// CPU frequency `f_m` in Hz.
    pub cpu_freq: f64,
    /// CPU cycles `kappa` to process one batch.
    pub cpu_cycles_per_batch: f64,
    /// Bits `b` charged per encoded non-zero element.
    pub encode_bits: u32,
}

impl DeviceProfile {
    pub fn validate(&self) -> Result<(), ChannelError> {
        if self.data_size == 0 {
            return Err(ChannelError::InvalidParameter { name: "data_size", value: 0.0 });
        }
        positive("tx_power", self.tx_power)?;
        positive("channel_gain_mean", self.channel_gain_mean)?;
        positive("cpu_freq", self.cpu_freq)?;
        positive("cpu_cycles_per_batch", self.cpu_cycles_per_batch)?;
        if self.encode_bits == 0 {
            return Err(ChannelError::InvalidParameter { name: "encode_bits", value: 0.0 });
        }
        Ok(())
    }

    /// Mean received SNR `P sigma^2 / (B N0)`.
    pub fn mean_snr(&self, link: &LinkBudget) -> f64 {
        self.tx_power * self.channel_gain_mean / link.noise_power()
    }
}

/// One round's fading realisation for one device.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelDraw {
    pub device_id: usize,
    /// `|h|^2`, linear.
    pub gain_sq: f64,
    pub round: u64,
}

/// Log-distance path loss `intercept + slope * log10(distance_km)` in dB,
/// with distances uniform in `[min_km, max_km]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathLossSpec {
    pub min_km: f64,
    pub max_km: f64,
    #[serde(default = "default_intercept")]
    pub intercept_db: f64,
    #[serde(default = "default_slope")]
    pub slope_db: f64,
}

fn default_intercept() -> f64 {
    128.1
}

fn default_slope() -> f64 {
    37.6
}

impl Default for PathLossSpec {
    fn default() -> Self {
        Self { min_km: 0.01, max_km: 0.5, intercept_db: default_intercept(), slope_db: default_slope() }
    }
}

impl PathLossSpec {
    pub fn loss_db(&self, distance_km: f64) -> f64 {
        self.intercept_db + self.slope_db * distance_km.log10()
    }

    /// Mean squared gain `10^(-PL/10)` at the given distance.
    pub fn gain_mean(&self, distance_km: f64) -> f64 {
        db_to_linear(-self.loss_db(distance_km))
    }
}

/// Everything needed to generate a device population.
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationSpec {
    pub count: usize,
    pub tx_power_w: f64,
    pub cpu_cycles_per_batch: f64,
    pub encode_bits: u32,
    pub cpu_freq_range_hz: (f64, f64),
    pub path_loss: PathLossSpec,
}

/// Draws `count` devices: distance uniform in the path-loss range and CPU
/// frequency uniform in the configured range. `data_size` is set to 1 and is
/// expected to be overwritten from the data partition.
pub fn make_population<R: RngCore + ?Sized>(
    spec: &PopulationSpec,
    rng: &mut R,
) -> Result<Vec<DeviceProfile>, ChannelError> {
    if spec.count == 0 {
        return Err(ChannelError::EmptyPopulation);
    }
    let (f_lo, f_hi) = spec.cpu_freq_range_hz;
    range_check("cpu_freq_range_hz", f_lo, f_hi)?;
    range_check("distance_km", spec.path_loss.min_km, spec.path_loss.max_km)?;
    positive("tx_power", spec.tx_power_w)?;
    positive("cpu_cycles_per_batch", spec.cpu_cycles_per_batch)?;

    let profiles = (0..spec.count)
        .map(|id| {
            let distance = uniform(rng, spec.path_loss.min_km, spec.path_loss.max_km);
            let cpu_freq = uniform(rng, f_lo, f_hi);
            DeviceProfile {
                id,
                data_size: 1,
                tx_power: spec.tx_power_w,
                channel_gain_mean: spec.path_loss.gain_mean(distance),
                cpu_freq,
                cpu_cycles_per_batch: spec.cpu_cycles_per_batch,
                encode_bits: spec.encode_bits,
            }
        })
        .collect();
    Ok(profiles)
}

fn uniform<R: RngCore + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..=hi)
    }
}

fn range_check(name: &'static str, low: f64, high: f64) -> Result<(), ChannelError> {
    if !(low.is_finite() && high.is_finite() && low > 0.0 && low <= high) {
        return Err(ChannelError::InvalidRange { name, low, high });
    }
    Ok(())
}

fn positive(name: &'static str, value: f64) -> Result<(), ChannelError> {
    if !(value.is_finite() && value > 0.0) {
        return Err(ChannelError::InvalidParameter { name, value });
    }
    Ok(())
}

/// `|h|^2 ~ Exp(mean = sigma^2)`.
pub fn draw_channel<R: RngCore + ?Sized>(dev: &DeviceProfile, round: u64, rng: &mut R) -> ChannelDraw {
    let unit: f64 = Exp1.sample(rng);
    ChannelDraw { device_id: dev.id, gain_sq: dev.channel_gain_mean * unit, round }
}

/// `C = B log2(1 + P |h|^2 / (B N0))` in bits/s.
pub fn data_rate(dev: &DeviceProfile, draw: &ChannelDraw, link: &LinkBudget) -> f64 {
    let snr = dev.tx_power * draw.gain_sq / link.noise_power();
    link.bandwidth * snr.ln_1p() / std::f64::consts::LN_2
}

/// Local computation time `kappa / f`.
pub fn compute_time(dev: &DeviceProfile) -> f64 {
    dev.cpu_cycles_per_batch / dev.cpu_freq
}

/// Upload time `bits / rate`; zero for an empty payload, infinite when the
/// rate is zero and there is something to send.
pub fn upload_time(payload_bits: u64, rate: f64) -> f64 {
    if payload_bits == 0 {
        0.0
    } else if rate <= 0.0 {
        f64::INFINITY
    } else {
        payload_bits as f64 / rate
    }
}

/// Large-dimension success probability of uploading `b r S` bits within the
/// time left after computation:
/// `q = exp(-(B N0 / (P sigma^2)) (2^{b S r / (B (T_D - kappa/f))} - 1))`.
pub fn success_probability(
    dev: &DeviceProfile,
    link: &LinkBudget,
    ratio: f64,
    dim: usize,
    deadline: f64,
) -> Result<f64, ChannelError> {
    let compute = compute_time(dev);
    let slack = deadline - compute;
    if !(slack > 0.0) {
        return Err(ChannelError::InfeasibleDeadline { device: dev.id, deadline, compute });
    }
    let exponent = f64::from(dev.encode_bits) * dim as f64 * ratio / (link.bandwidth * slack);
    let excess = (exponent * std::f64::consts::LN_2).exp_m1();
    Ok((-excess / dev.mean_snr(link)).exp())
}
