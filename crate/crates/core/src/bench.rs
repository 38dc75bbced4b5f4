//! Throughput measurement for the extractor, the full pipeline, and
//! rate-capped delivery.

use std::fmt;
use std::io;
use std::time::{Duration, Instant};

use crate::bits::{BitBlock, SampleBitSelector};
use crate::error::Result;
use crate::pipeline::{write_paced, PipelineConfig, PipelineStream, RateLimiter};
use crate::source::SourceSimulator;
use crate::toeplitz::{BlockFramer, PipelinedExtractor};

/// FPGA post-processing input ceiling the hardware design was sized for.
pub const REFERENCE_FPGA_INPUT_BPS: f64 = 5e9;
pub const REFERENCE_SFP_BPS: f64 = 3.2e9;
pub const REFERENCE_ETHERNET_BPS: f64 = 968.7e6;
pub const REFERENCE_USB_BPS: f64 = 259.5e6;

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Throughput {
    pub bits_in: u64,
    pub bits_out: u64,
    pub elapsed: Duration,
}

impl Throughput {
    pub fn in_rate(&self) -> f64 {
        self.bits_in as f64 / self.elapsed.as_secs_f64().max(1e-12)
    }

    pub fn out_rate(&self) -> f64 {
        self.bits_out as f64 / self.elapsed.as_secs_f64().max(1e-12)
    }

    pub fn ratio(&self) -> f64 {
        self.bits_out as f64 / self.bits_in.max(1) as f64
    }
}

/// Raw blocks cut from simulated samples, for extractor-only timing.
pub fn pregenerate_blocks(config: &PipelineConfig, blocks: usize) -> Result<Vec<BitBlock>> {
    let n = config.extractor.n;
    let selector = SampleBitSelector::new(config.keep_mask()?);
    let samples = (blocks * n).div_ceil(selector.mask().kept() as usize);
    let raw = SourceSimulator::new(&config.sim)?.generate(samples);
    let mut framer = BlockFramer::new(n);
    selector.append(&raw, framer.buffer_mut());
    Ok(framer.drain_blocks())
}

/// Extracts `blocks` repeatedly on one thread for at least `duration`.
pub fn bench_extractor(extractor: &PipelinedExtractor, blocks: &[BitBlock], duration: Duration) -> Result<Throughput> {
    let p = *extractor.params();
    let start = Instant::now();
    let mut rounds = 0u64;
    let mut sink = 0u64;
    loop {
        for b in blocks {
            let out = extractor.extract(b)?;
            sink ^= out.words()[0];
        }
        rounds += 1;
        if start.elapsed() >= duration {
            break;
        }
    }
    std::hint::black_box(sink);
    let count = rounds * blocks.len() as u64;
    Ok(Throughput {
        bits_in: count * p.n as u64,
        bits_out: count * p.m as u64,
        elapsed: start.elapsed(),
    })
}

/// Runs the simulated pipeline for about `duration`.
pub fn bench_end_to_end(config: &PipelineConfig, duration: Duration) -> Result<Throughput> {
    let mut stream = PipelineStream::simulated(config, None)?;
    let start = Instant::now();
    while start.elapsed() < duration {
        if stream.next_chunk()?.is_none() {
            break;
        }
    }
    let elapsed = start.elapsed();
    let c = stream.counters();
    Ok(Throughput {
        bits_in: c.bits_in,
        bits_out: c.bits_out,
        elapsed,
    })
}

/// Pushes `payload` repeatedly through a rate limiter into a sink.
pub fn bench_delivery(payload: &[u8], rate_bps: f64, duration: Duration) -> Throughput {
    let mut limiter = RateLimiter::new(rate_bps);
    let mut sink = io::sink();
    let start = Instant::now();
    let mut sent = 0u64;
    while start.elapsed() < duration {
        write_paced(&mut sink, payload, Some(&mut limiter)).expect("sink never fails");
        sent += payload.len() as u64 * 8;
    }
    Throughput {
        bits_in: sent,
        bits_out: sent,
        elapsed: start.elapsed(),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchReport {
    pub m: usize,
    pub n: usize,
    pub extractor: Throughput,
    pub end_to_end: Throughput,
    pub delivery: Option<(f64, Throughput)>,
}

impl BenchReport {
    /// `m / n` applied to the measured extractor input rate.
    pub fn projected_out_rate(&self) -> f64 {
        self.extractor.in_rate() * self.m as f64 / self.n as f64
    }
}

pub fn bench(config: &PipelineConfig, duration: Duration) -> Result<BenchReport> {
    config.validate()?;
    let params = config.params();
    let (seed, _, _) = config.seeds()?;
    let extractor = PipelinedExtractor::new(&seed, params)?;
    let blocks = pregenerate_blocks(config, 512)?;
    let extractor_tp = bench_extractor(&extractor, &blocks, duration)?;
    let end_to_end = bench_end_to_end(config, duration)?;
    let delivery = config.rate_cap.map(|cap| {
        let payload: Vec<u8> = blocks
            .iter()
            .take(64)
            .flat_map(|b| extractor.extract(b).expect("valid block").to_bytes())
            .collect();
        (cap, bench_delivery(&payload, cap, duration))
    });
    Ok(BenchReport {
        m: params.m,
        n: params.n,
        extractor: extractor_tp,
        end_to_end,
        delivery,
    })
}

impl fmt::Display for BenchReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let e = &self.extractor;
        writeln!(f, "extractor_in_bps: {:.4e}", e.in_rate())?;
        writeln!(f, "extractor_out_bps: {:.4e}", e.out_rate())?;
        writeln!(f, "extractor_ratio: {:.6}", e.ratio())?;
        writeln!(f, "extractor_projected_out_bps: {:.4e}", self.projected_out_rate())?;
        let p = &self.end_to_end;
        writeln!(f, "end_to_end_in_bps: {:.4e}", p.in_rate())?;
        writeln!(f, "end_to_end_out_bps: {:.4e}", p.out_rate())?;
        writeln!(f, "end_to_end_ratio: {:.6}", p.ratio())?;
        if let Some((cap, d)) = &self.delivery {
            writeln!(f, "rate_cap_bps: {cap:.4e}")?;
            writeln!(f, "delivered_bps: {:.4e}", d.out_rate())?;
            writeln!(f, "delivery_error: {:.4}", d.out_rate() / cap - 1.0)?;
        }
        writeln!(f, "theoretical_ratio: {:.6}", self.m as f64 / self.n as f64)?;
        writeln!(f, "reference_fpga_input_bps: {REFERENCE_FPGA_INPUT_BPS:.4e}")?;
        writeln!(
            f,
            "reference_fpga_output_ceiling_bps: {:.4e}",
            REFERENCE_FPGA_INPUT_BPS * self.m as f64 / self.n as f64
        )?;
        writeln!(f, "reference_sfp_bps: {REFERENCE_SFP_BPS:.4e}")?;
        writeln!(f, "reference_ethernet_bps: {REFERENCE_ETHERNET_BPS:.4e}")?;
        writeln!(f, "reference_usb_bps: {REFERENCE_USB_BPS:.4e}")
    }
}
