//! Statistical checks for raw and extracted streams: autocorrelation, the
//! frequency, block-frequency and runs tests, and Kolmogorov-Smirnov
//! aggregation of p-values across sub-blocks.

use std::fmt;

use statrs::function::erf::erfc;
use statrs::function::gamma::gamma_ur;

use crate::bits::BitBlock;
use crate::error::{Error, Result};

pub const DEFAULT_ALPHA: f64 = 0.01;

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Population variance (divide by N).
pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64
}

fn check_lag(len: usize, max_lag: usize) -> Result<()> {
    if len <= max_lag * 10 {
        return Err(Error::TooShort {
            needed: max_lag * 10 + 1,
            actual: len,
        });
    }
    Ok(())
}

/// `r(l) = sum (x_i - m)(x_{i+l} - m) / sum (x_i - m)^2` for `l = 1..=max_lag`.
pub fn autocorrelation(series: &[f64], max_lag: usize) -> Result<Vec<f64>> {
    check_lag(series.len(), max_lag)?;
    let m = mean(series);
    let centered: Vec<f64> = series.iter().map(|x| x - m).collect();
    let denom: f64 = centered.iter().map(|x| x * x).sum();
    if denom == 0.0 {
        return Err(Error::ZeroVariance);
    }
    Ok((1..=max_lag)
        .map(|lag| {
            let num: f64 = centered
                .iter()
                .zip(&centered[lag..])
                .map(|(a, b)| a * b)
                .sum();
            num / denom
        })
        .collect())
}

/// [`autocorrelation`] of a 0/1 sequence, computed with popcounts.
pub fn autocorrelation_bits(bits: &BitBlock, max_lag: usize) -> Result<Vec<f64>> {
    let n = bits.len();
    check_lag(n, max_lag)?;
    let ones = bits.count_ones();
    if ones == 0 || ones == n as u64 {
        return Err(Error::ZeroVariance);
    }
    let nf = n as f64;
    let p = ones as f64 / nf;
    let denom = nf * p * (1.0 - p);
    let words = bits.words();

    // ones in the first / last `lag` bits, updated incrementally
    let mut head = 0u64;
    let mut tail = 0u64;
    let mut out = Vec::with_capacity(max_lag);
    for lag in 1..=max_lag {
        head += u64::from(bits.get(lag - 1));
        tail += u64::from(bits.get(n - lag));
        let span = n - lag;
        let mut both = 0u64;
        let full = span / 64;
        for (w, &word) in words.iter().enumerate().take(full) {
            both += u64::from((word & bits.read_word(w * 64 + lag)).count_ones());
        }
        let rem = span % 64;
        if rem != 0 {
            let mask = (1u64 << rem) - 1;
            both += u64::from((words[full] & bits.read_word(full * 64 + lag) & mask).count_ones());
        }
        let a = (ones - tail) as f64; // ones among x_0 .. x_{n-lag-1}
        let b = (ones - head) as f64; // ones among x_lag .. x_{n-1}
        let num = both as f64 - p * (a + b) + span as f64 * p * p;
        out.push(num / denom);
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TestStatus {
    Pass,
    Fail,
    NotApplicable,
}

impl fmt::Display for TestStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TestStatus::Pass => "pass",
            TestStatus::Fail => "fail",
            TestStatus::NotApplicable => "not_applicable",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TestReport {
    pub name: &'static str,
    pub statistic: f64,
    pub p_value: f64,
    pub alpha: f64,
    pub status: TestStatus,
}

impl TestReport {
    fn judged(name: &'static str, statistic: f64, p_value: f64, alpha: f64) -> Self {
        let p_value = p_value.clamp(0.0, 1.0);
        Self {
            name,
            statistic,
            p_value,
            alpha,
            status: if p_value >= alpha {
                TestStatus::Pass
            } else {
                TestStatus::Fail
            },
        }
    }

    fn not_applicable(name: &'static str, statistic: f64, alpha: f64) -> Self {
        Self {
            name,
            statistic,
            p_value: 0.0,
            alpha,
            status: TestStatus::NotApplicable,
        }
    }

    pub fn passed(&self) -> bool {
        self.status == TestStatus::Pass
    }
}

/// Monobit statistic `|#ones - #zeros| / sqrt(n)` and its p-value, with no
/// minimum length.
pub fn frequency_statistic(bits: &BitBlock) -> (f64, f64) {
    let n = bits.len() as f64;
    let ones = bits.count_ones() as f64;
    let s = (2.0 * ones - n).abs() / n.sqrt();
    (s, erfc(s / std::f64::consts::SQRT_2))
}

pub fn frequency_test(bits: &BitBlock, alpha: f64) -> Result<TestReport> {
    if bits.len() < 100 {
        return Err(Error::TooShort {
            needed: 100,
            actual: bits.len(),
        });
    }
    let (s, p) = frequency_statistic(bits);
    Ok(TestReport::judged("frequency", s, p, alpha))
}

/// Chi-square over per-block ones proportions and its p-value, with no
/// minimum block count.
pub fn block_frequency_statistic(bits: &BitBlock, block_len: usize) -> (f64, f64) {
    let blocks = bits.len() / block_len;
    let m = block_len as f64;
    let chi2: f64 = (0..blocks)
        .map(|b| {
            let ones = bits.slice(b * block_len, block_len).count_ones() as f64;
            let d = ones / m - 0.5;
            d * d
        })
        .sum::<f64>()
        * 4.0
        * m;
    let p = if chi2 == 0.0 {
        1.0
    } else {
        gamma_ur(blocks as f64 / 2.0, chi2 / 2.0)
    };
    (chi2, p)
}

pub fn block_frequency_test(bits: &BitBlock, block_len: usize, alpha: f64) -> Result<TestReport> {
    if block_len == 0 || bits.len() / block_len < 20 {
        return Err(Error::TooShort {
            needed: 20 * block_len.max(1),
            actual: bits.len(),
        });
    }
    let (chi2, p) = block_frequency_statistic(bits, block_len);
    Ok(TestReport::judged("block_frequency", chi2, p, alpha))
}

/// Runs test; not applicable when the monobit proportion is outside
/// `1/2 +- 2/sqrt(n)`.
pub fn runs_test(bits: &BitBlock, alpha: f64) -> Result<TestReport> {
    let n = bits.len();
    if n < 2 {
        return Err(Error::TooShort { needed: 2, actual: n });
    }
    let nf = n as f64;
    let pi = bits.count_ones() as f64 / nf;
    if (pi - 0.5).abs() >= 2.0 / nf.sqrt() {
        return Ok(TestReport::not_applicable("runs", pi, alpha));
    }
    // transitions between bit i and i+1
    let words = bits.words();
    let pairs = n - 1;
    let mut transitions = 0u64;
    for (w, &word) in words.iter().enumerate() {
        let start = w * 64;
        if start >= pairs {
            break;
        }
        let mut diff = word ^ bits.read_word(start + 1);
        let avail = pairs - start;
        if avail < 64 {
            diff &= (1u64 << avail) - 1;
        }
        transitions += u64::from(diff.count_ones());
    }
    let v = transitions as f64 + 1.0;
    let q = pi * (1.0 - pi);
    let p = erfc((v - 2.0 * nf * q).abs() / (2.0 * (2.0 * nf).sqrt() * q));
    Ok(TestReport::judged("runs", v, p, alpha))
}

/// Kolmogorov distribution upper tail `P[K > lambda]`.
pub fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 1.18 {
        // Jacobi-transformed series converges quickly for small lambda
        let pi2 = std::f64::consts::PI * std::f64::consts::PI;
        let y = -pi2 / (8.0 * lambda * lambda);
        let s: f64 = (1..=20)
            .map(|k| {
                let j = (2 * k - 1) as f64;
                (j * j * y).exp()
            })
            .sum();
        (1.0 - (2.0 * std::f64::consts::PI).sqrt() / lambda * s).clamp(0.0, 1.0)
    } else {
        let mut sum = 0.0;
        let mut sign = 1.0;
        for k in 1..=100 {
            let kf = k as f64;
            let term = (-2.0 * kf * kf * lambda * lambda).exp();
            sum += sign * term;
            if term < 1e-300 {
                break;
            }
            sign = -sign;
        }
        (2.0 * sum).clamp(0.0, 1.0)
    }
}

/// One-sample KS test of p-values against Uniform[0, 1].
pub fn ks_uniformity(p_values: &[f64], alpha: f64) -> Result<TestReport> {
    if p_values.len() < 10 {
        return Err(Error::TooShort {
            needed: 10,
            actual: p_values.len(),
        });
    }
    let mut xs = p_values.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let d = xs
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let above = (i as f64 + 1.0) / n - x;
            let below = x - i as f64 / n;
            above.max(below)
        })
        .fold(0.0, f64::max);
    let sn = n.sqrt();
    let p = kolmogorov_q((sn + 0.12 + 0.11 / sn) * d);
    Ok(TestReport::judged("ks_uniformity", d, p, alpha))
}

/// Lag scan over a bit stream. The p-value is the Bonferroni-corrected
/// two-sided normal tail of the largest `|r|`.
#[derive(Clone, Debug, PartialEq)]
pub struct AutocorrelationReport {
    pub r: Vec<f64>,
    pub max_abs: f64,
    pub bound: f64,
    pub exceedances: usize,
    pub report: TestReport,
}

pub fn autocorrelation_test(bits: &BitBlock, max_lag: usize, alpha: f64) -> Result<AutocorrelationReport> {
    let r = autocorrelation_bits(bits, max_lag)?;
    let sqrt_n = (bits.len() as f64).sqrt();
    let bound = 4.0 / sqrt_n;
    let max_abs = r.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let exceedances = r.iter().filter(|x| x.abs() >= bound).count();
    let p = (max_lag as f64 * erfc(max_abs * sqrt_n / std::f64::consts::SQRT_2)).min(1.0);
    Ok(AutocorrelationReport {
        max_abs,
        bound,
        exceedances,
        report: TestReport::judged("autocorrelation", max_abs * sqrt_n, p, alpha),
        r,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SuiteConfig {
    pub sub_block_len: usize,
    pub block_len: usize,
    pub max_lag: usize,
    pub alpha: f64,
    pub frequency: bool,
    pub block_frequency: bool,
    pub runs: bool,
    pub autocorrelation: bool,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            sub_block_len: 1_000_000,
            block_len: 20_000,
            max_lag: 100,
            alpha: DEFAULT_ALPHA,
            frequency: true,
            block_frequency: true,
            runs: true,
            autocorrelation: true,
        }
    }
}

/// Per-test result over all sub-blocks.
#[derive(Clone, Debug, PartialEq)]
pub struct TestSummary {
    pub name: &'static str,
    pub sub_blocks: Vec<TestReport>,
    pub proportion: f64,
    /// Acceptable pass proportion `(1 - alpha) +- 3 sqrt(alpha (1 - alpha) / k)`.
    pub band: (f64, f64),
    pub ks: Option<TestReport>,
    pub error: Option<String>,
}

impl TestSummary {
    pub fn passed(&self) -> bool {
        self.error.is_none()
            && !self.sub_blocks.is_empty()
            && self.proportion >= self.band.0
            && self.ks.as_ref().is_none_or(TestReport::passed)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SuiteReport {
    pub total_bits: usize,
    pub sub_block_len: usize,
    pub tests: Vec<TestSummary>,
    pub autocorrelation: Option<AutocorrelationReport>,
    pub autocorrelation_error: Option<String>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.tests.iter().all(TestSummary::passed)
            && self.autocorrelation_error.is_none()
            && self.autocorrelation.as_ref().is_none_or(|a| a.report.passed())
    }

    /// Mean pass proportion across tests.
    pub fn mean_proportion(&self) -> f64 {
        if self.tests.is_empty() {
            return 0.0;
        }
        self.tests.iter().map(|t| t.proportion).sum::<f64>() / self.tests.len() as f64
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("test,sub_block,statistic,p_value,status\n");
        for t in &self.tests {
            for (i, r) in t.sub_blocks.iter().enumerate() {
                out.push_str(&format!("{},{},{},{},{}\n", t.name, i, r.statistic, r.p_value, r.status));
            }
            if let Some(ks) = &t.ks {
                out.push_str(&format!("{}_ks,all,{},{},{}\n", t.name, ks.statistic, ks.p_value, ks.status));
            }
        }
        if let Some(a) = &self.autocorrelation {
            out.push_str(&format!(
                "autocorrelation,all,{},{},{}\n",
                a.report.statistic, a.report.p_value, a.report.status
            ));
        }
        out
    }
}

impl fmt::Display for SuiteReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "total_bits: {}", self.total_bits)?;
        writeln!(f, "sub_block_len: {}", self.sub_block_len)?;
        writeln!(f, "sub_blocks: {}", self.total_bits / self.sub_block_len)?;
        for t in &self.tests {
            write!(
                f,
                "{}: proportion={:.4} band=[{:.4}, {:.4}]",
                t.name, t.proportion, t.band.0, t.band.1
            )?;
            if let Some(ks) = &t.ks {
                write!(f, " ks_d={:.5} ks_p={:.6}", ks.statistic, ks.p_value)?;
            }
            if let Some(e) = &t.error {
                write!(f, " error={e}")?;
            }
            writeln!(f, " result={}", if t.passed() { "pass" } else { "fail" })?;
        }
        if let Some(a) = &self.autocorrelation {
            writeln!(
                f,
                "autocorrelation: max_abs_r={:.6} bound={:.6} exceedances={} p={:.6} result={}",
                a.max_abs, a.bound, a.exceedances, a.report.p_value, a.report.status
            )?;
        }
        if let Some(e) = &self.autocorrelation_error {
            writeln!(f, "autocorrelation: error={e}")?;
        }
        writeln!(f, "mean_proportion: {:.4}", self.mean_proportion())?;
        writeln!(f, "suite: {}", if self.passed() { "pass" } else { "fail" })
    }
}

fn summarize<F>(name: &'static str, subs: &[BitBlock], alpha: f64, run: F) -> TestSummary
where
    F: Fn(&BitBlock) -> Result<TestReport>,
{
    let k = subs.len() as f64;
    let p_hat = 1.0 - alpha;
    let half = 3.0 * (p_hat * alpha / k).sqrt();
    let band = (p_hat - half, (p_hat + half).min(1.0));
    let mut reports = Vec::with_capacity(subs.len());
    for s in subs {
        match run(s) {
            Ok(r) => reports.push(r),
            Err(e) => {
                return TestSummary {
                    name,
                    sub_blocks: reports,
                    proportion: 0.0,
                    band,
                    ks: None,
                    error: Some(e.to_string()),
                };
            }
        }
    }
    let passed = reports.iter().filter(|r| r.passed()).count();
    let p_values: Vec<f64> = reports
        .iter()
        .filter(|r| r.status != TestStatus::NotApplicable)
        .map(|r| r.p_value)
        .collect();
    TestSummary {
        name,
        proportion: passed as f64 / k,
        band,
        ks: ks_uniformity(&p_values, alpha).ok(),
        sub_blocks: reports,
        error: None,
    }
}

/// Runs the enabled tests on consecutive sub-blocks and aggregates the
/// per-test p-values with [`ks_uniformity`]. Autocorrelation is scanned once
/// over the whole stream.
pub fn run_suite(bits: &BitBlock, config: &SuiteConfig) -> Result<SuiteReport> {
    if config.sub_block_len == 0 || bits.len() < config.sub_block_len {
        return Err(Error::TooShort {
            needed: config.sub_block_len.max(1),
            actual: bits.len(),
        });
    }
    let count = bits.len() / config.sub_block_len;
    let subs: Vec<BitBlock> = (0..count)
        .map(|i| bits.slice(i * config.sub_block_len, config.sub_block_len))
        .collect();
    let alpha = config.alpha;
    let mut tests = Vec::new();
    if config.frequency {
        tests.push(summarize("frequency", &subs, alpha, |b| frequency_test(b, alpha)));
    }
    if config.block_frequency {
        tests.push(summarize("block_frequency", &subs, alpha, |b| {
            block_frequency_test(b, config.block_len, alpha)
        }));
    }
    if config.runs {
        tests.push(summarize("runs", &subs, alpha, |b| runs_test(b, alpha)));
    }
    let (autocorrelation, autocorrelation_error) = if config.autocorrelation {
        let used = bits.slice(0, count * config.sub_block_len);
        match autocorrelation_test(&used, config.max_lag, alpha) {
            Ok(a) => (Some(a), None),
            Err(e) => (None, Some(e.to_string())),
        }
    } else {
        (None, None)
    };
    Ok(SuiteReport {
        total_bits: count * config.sub_block_len,
        sub_block_len: config.sub_block_len,
        tests,
        autocorrelation,
        autocorrelation_error,
    })
}
