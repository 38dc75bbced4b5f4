//! Raw-sample simulator for a laser phase-noise entropy source.
//!
//! The laser phase is a Wiener process on a fine substep grid. An
//! unbalanced interferometer with arm delay `tau` turns the phase difference
//! `dphi(t) = phi(t) - phi(t - tau)` into an intensity swing
//! `A * sin(dphi)` about quadrature. Classical noise is added at a power
//! ratio `gamma`, an optional single-pole detector low-pass shapes the
//! optical term, and an ADC quantizes with saturation.
//!
//! When the sampling interval is shorter than `tau`, consecutive differencing
//! windows share Wiener increments and the samples are correlated.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::entropy::AdcGeometry;
use crate::error::{Error, Result};
use crate::formats::config_digest;
use crate::stats;

/// Samples used to calibrate the classical noise level.
pub const PILOT_SAMPLES: usize = 100_000;

const PHASE_REBASE: f64 = 1e3;
const PILOT_STREAM: u64 = 0x70_696c_6f74;
const NOISE_STREAM: u64 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    /// ADC sampling rate, samples/s.
    pub sample_rate: f64,
    /// Interferometer arm delay, s.
    pub tau: f64,
    pub substeps_per_sample: u32,
    /// Wiener diffusion coefficient `D`, rad^2/s; `Var[phi(t+d) - phi(t)] = 2 D d`.
    pub phase_diffusion: f64,
    /// Interference swing `A`, mV.
    pub amplitude_mv: f64,
    /// Target quantum/classical power ratio.
    pub gamma: f64,
    /// Detector single-pole bandwidth in Hz; `None` disables the filter.
    pub detector_bandwidth: Option<f64>,
    pub adc: AdcGeometry,
    pub rng_seed: u64,
}

impl Default for SimConfig {
    /// 1 GSa/s against a 0.8 ns delay. `A` and `D` are reconstructed so that
    /// the quantum term carries `gamma / (gamma + 1)` of an 8311 mV^2 signal
    /// power with `2 D tau = 0.088 rad^2`.
    fn default() -> Self {
        Self {
            sample_rate: 1e9,
            tau: 0.8e-9,
            substeps_per_sample: 10,
            phase_diffusion: 5.5e7,
            amplitude_mv: 300.0,
            gamma: 6.87,
            detector_bandwidth: None,
            adc: AdcGeometry::default(),
            rng_seed: 1,
        }
    }
}

impl SimConfig {
    /// Default physics sampled at 2 GSa/s, so each 0.8 ns window overlaps
    /// its neighbour by 0.3 ns.
    pub fn overlapping() -> Self {
        Self {
            sample_rate: 2e9,
            substeps_per_sample: 5,
            ..Self::default()
        }
    }

    pub fn substep(&self) -> f64 {
        1.0 / (self.sample_rate * self.substeps_per_sample as f64)
    }

    /// Arm delay in substeps; validated to be a whole number.
    pub fn tau_substeps(&self) -> Result<usize> {
        let steps = self.tau / self.substep();
        let rounded = steps.round();
        if rounded < 1.0 || (steps - rounded).abs() > 1e-6 * rounded.max(1.0) {
            return Err(Error::Config(format!(
                "tau = {} s is not a positive integer multiple of the substep {} s",
                self.tau,
                self.substep()
            )));
        }
        Ok(rounded as usize)
    }

    pub fn validate(&self) -> Result<()> {
        if self.substeps_per_sample < 2 {
            return Err(Error::Config("substeps_per_sample must be >= 2".into()));
        }
        let positive = [
            ("sample_rate", self.sample_rate),
            ("tau", self.tau),
            ("gamma", self.gamma),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [("phase_diffusion", self.phase_diffusion), ("amplitude_mv", self.amplitude_mv)] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("{name} must be non-negative, got {v}")));
            }
        }
        if let Some(bw) = self.detector_bandwidth {
            if !(bw > 0.0) {
                return Err(Error::Config(format!("detector bandwidth must be positive, got {bw}")));
            }
        }
        self.adc.validate()?;
        self.tau_substeps()?;
        Ok(())
    }

    pub fn digest(&self) -> String {
        config_digest(self)
    }

    /// `2 D tau`, the variance of one phase difference.
    pub fn delta_phi_variance(&self) -> f64 {
        2.0 * self.phase_diffusion * self.tau
    }
}

/// Wiener phase on the substep grid, differenced across the arm delay.
struct PhaseChain {
    rng: ChaCha8Rng,
    step_std: f64,
    ring: Vec<f64>,
    head: usize,
}

impl PhaseChain {
    fn new(rng: ChaCha8Rng, config: &SimConfig, tau_steps: usize) -> Self {
        Self {
            rng,
            step_std: (2.0 * config.phase_diffusion * config.substep()).sqrt(),
            ring: vec![0.0; tau_steps + 1],
            head: 0,
        }
    }

    /// Advances one substep and returns the new `phi(t) - phi(t - tau)`.
    #[inline]
    fn advance(&mut self) -> f64 {
        let len = self.ring.len();
        let prev = self.ring[self.head];
        let z: f64 = self.rng.sample(StandardNormal);
        let mut now = prev + self.step_std * z;
        self.head = (self.head + 1) % len;
        if now.abs() > PHASE_REBASE {
            for p in &mut self.ring {
                *p -= now;
            }
            now = 0.0;
        }
        self.ring[self.head] = now;
        // the slot after head holds phi(t - tau)
        now - self.ring[(self.head + 1) % len]
    }
}

/// Per-sample internal signals.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SampleTaps {
    pub delta_phi: f64,
    /// Optical term after the detector response, mV.
    pub quantum_mv: f64,
    pub classical_mv: f64,
    pub code: u8,
}

/// Streaming sample generator. Identical configs yield identical streams.
pub struct SourceSimulator {
    config: SimConfig,
    phase: PhaseChain,
    noise: ChaCha8Rng,
    classical_std: f64,
    filter_alpha: Option<f64>,
    filtered: f64,
    produced: u64,
}

impl SourceSimulator {
    pub fn new(config: &SimConfig) -> Result<Self> {
        config.validate()?;
        let classical_std = calibrate_classical_std(config)?;
        Ok(Self::with_classical_std(config, classical_std))
    }

    fn with_classical_std(config: &SimConfig, classical_std: f64) -> Self {
        let tau_steps = config.tau_substeps().expect("validated");
        let phase_rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
        let mut noise = ChaCha8Rng::seed_from_u64(config.rng_seed);
        noise.set_stream(NOISE_STREAM);
        let filter_alpha = config
            .detector_bandwidth
            .map(|bw| 1.0 - (-2.0 * std::f64::consts::PI * bw * config.substep()).exp());
        let mut sim = Self {
            config: config.clone(),
            phase: PhaseChain::new(phase_rng, config, tau_steps),
            noise,
            classical_std,
            filter_alpha,
            filtered: 0.0,
            produced: 0,
        };
        sim.warm_up(tau_steps);
        sim
    }

    fn warm_up(&mut self, tau_steps: usize) {
        // fill the delay line, then let the filter settle for ~10 time constants
        let filter_steps = self
            .filter_alpha
            .map(|a| (10.0 / a).ceil() as usize)
            .unwrap_or(0);
        for _ in 0..tau_steps + filter_steps {
            let dphi = self.phase.advance();
            self.filter(dphi);
        }
    }

    #[inline]
    fn filter(&mut self, dphi: f64) -> f64 {
        let x = self.config.amplitude_mv * dphi.sin();
        match self.filter_alpha {
            Some(a) => {
                self.filtered += a * (x - self.filtered);
                self.filtered
            }
            None => x,
        }
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn classical_std(&self) -> f64 {
        self.classical_std
    }

    pub fn produced(&self) -> u64 {
        self.produced
    }

    /// Advances to the next sample instant and returns every internal tap.
    pub fn next_taps(&mut self) -> SampleTaps {
        let mut dphi = 0.0;
        let mut quantum = 0.0;
        for _ in 0..self.config.substeps_per_sample {
            dphi = self.phase.advance();
            if self.filter_alpha.is_some() {
                quantum = self.filter(dphi);
            }
        }
        if self.filter_alpha.is_none() {
            quantum = self.config.amplitude_mv * dphi.sin();
        }
        let classical = if self.classical_std > 0.0 {
            self.classical_std * self.noise.sample::<f64, _>(StandardNormal)
        } else {
            0.0
        };
        let code = self.config.adc.quantize(quantum + classical) as u8;
        self.produced += 1;
        SampleTaps {
            delta_phi: dphi,
            quantum_mv: quantum,
            classical_mv: classical,
            code,
        }
    }

    #[inline]
    pub fn next_code(&mut self) -> u8 {
        self.next_taps().code
    }

    pub fn fill(&mut self, out: &mut [u8]) {
        for slot in out {
            *slot = self.next_code();
        }
    }

    pub fn generate(&mut self, n: usize) -> Vec<u8> {
        let mut out = vec![0u8; n];
        self.fill(&mut out);
        out
    }
}

/// Classical noise level giving `Var[quantum] / sigma_c^2 = gamma`, measured
/// on a pilot block from an independent phase stream.
fn calibrate_classical_std(config: &SimConfig) -> Result<f64> {
    let mut pilot_cfg = config.clone();
    pilot_cfg.rng_seed = config.rng_seed ^ PILOT_STREAM;
    let mut pilot = SourceSimulator::with_classical_std(&pilot_cfg, 0.0);
    let quantum: Vec<f64> = (0..PILOT_SAMPLES).map(|_| pilot.next_taps().quantum_mv).collect();
    let var = stats::variance(&quantum);
    Ok((var / config.gamma).sqrt())
}

/// Raw ADC samples with provenance.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RawRecord {
    pub samples: Vec<u8>,
    pub config_hash: String,
    pub count: usize,
}

pub fn simulate_raw(config: &SimConfig, n_samples: usize) -> Result<RawRecord> {
    let mut sim = SourceSimulator::new(config)?;
    let samples = sim.generate(n_samples);
    Ok(RawRecord {
        count: samples.len(),
        samples,
        config_hash: config.digest(),
    })
}

/// Phase differences at each sample instant.
pub fn simulate_phase(config: &SimConfig, n_samples: usize) -> Result<Vec<f64>> {
    config.validate()?;
    let mut sim = SourceSimulator::with_classical_std(config, 0.0);
    Ok((0..n_samples).map(|_| sim.next_taps().delta_phi).collect())
}

/// Normalized autocorrelation of the raw codes for lags `1..=max_lag`.
pub fn empirical_autocorrelation_profile(record: &RawRecord, max_lag: usize) -> Result<Vec<f64>> {
    let series: Vec<f64> = record.samples.iter().map(|&s| f64::from(s)).collect();
    stats::autocorrelation(&series, max_lag)
}
