//! Signal model: line spectra, sparse spikes, the forward sampling operator,
//! random instance generation and recovery scoring.
//!
//! Samples are taken at `t = 1, ..., n`:
//!
//! ```text
//! y_l = sum_j x_j exp(i 2π f_j l) + z_l + w_l,   1 <= l <= n
//! ```
//!
//! where `(f_j, x_j)` is the line spectrum, `z` the sparse outlier vector and
//! `w` optional dense noise.

use std::collections::BTreeMap;

use num_complex::Complex64;
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{DemixError, Result};
use crate::trig::{cis_freq_index, cis_turns, wrap_dist};

/// One spectral line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Line {
    pub freq: f64,
    pub amp: Complex64,
}

/// Atomic measure `sum_j x_j δ(f - f_j)` on the unit interval.
///
/// Entries are kept sorted by frequency; frequencies lie in `[0, 1)` and are
/// pairwise distinct.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
#[serde(transparent)]
pub struct LineSpectrum {
    entries: Vec<Line>,
}

impl LineSpectrum {
    pub fn new(mut entries: Vec<Line>) -> Result<Self> {
        for e in &entries {
            if !e.freq.is_finite() || !(0.0..1.0).contains(&e.freq) {
                return Err(DemixError::InvalidParameter(format!(
                    "frequency {} outside [0, 1)",
                    e.freq
                )));
            }
            if !(e.amp.re.is_finite() && e.amp.im.is_finite()) {
                return Err(DemixError::NonFinite("line amplitude"));
            }
        }
        entries.sort_by(|a, b| a.freq.total_cmp(&b.freq));
        if entries.windows(2).any(|w| w[0].freq == w[1].freq) {
            return Err(DemixError::InvalidParameter(
                "duplicate frequency in line spectrum".into(),
            ));
        }
        Ok(Self { entries })
    }

    pub fn from_parts(freqs: &[f64], amps: &[Complex64]) -> Result<Self> {
        if freqs.len() != amps.len() {
            return Err(DemixError::DimensionMismatch {
                expected: freqs.len(),
                got: amps.len(),
            });
        }
        Self::new(
            freqs
                .iter()
                .zip(amps)
                .map(|(&freq, &amp)| Line { freq, amp })
                .collect(),
        )
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[Line] {
        &self.entries
    }

    pub fn freqs(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.freq).collect()
    }

    pub fn amps(&self) -> Vec<Complex64> {
        self.entries.iter().map(|e| e.amp).collect()
    }

    /// Total-variation norm, i.e. the l1 norm of the amplitudes.
    pub fn tv_norm(&self) -> f64 {
        self.entries.iter().map(|e| e.amp.norm()).sum()
    }

    /// Keep only the entries whose position (in sorted order) is selected.
    pub fn retain_indices(&self, keep: &[usize]) -> Self {
        let entries = keep.iter().map(|&i| self.entries[i]).collect();
        Self::new(entries).expect("subset of a valid spectrum is valid")
    }
}

/// Sparse outlier vector of length `n`, indexed by sample index `1..=n`.
///
/// Only nonzero amplitudes are stored.
#[derive(Debug, Clone, PartialEq)]
pub struct SpikeVector {
    n: usize,
    values: BTreeMap<usize, Complex64>,
}

impl SpikeVector {
    pub fn new(n: usize, entries: impl IntoIterator<Item = (usize, Complex64)>) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (l, v) in entries {
            if l == 0 || l > n {
                return Err(DemixError::InvalidParameter(format!(
                    "spike index {l} outside 1..={n}"
                )));
            }
            if !(v.re.is_finite() && v.im.is_finite()) {
                return Err(DemixError::NonFinite("spike amplitude"));
            }
            if v != Complex64::new(0.0, 0.0) {
                values.insert(l, v);
            }
        }
        Ok(Self { n, values })
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            values: BTreeMap::new(),
        }
    }

    /// Build from a dense vector, keeping every nonzero entry.
    pub fn from_dense(z: &[Complex64]) -> Self {
        let values = z
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != Complex64::new(0.0, 0.0))
            .map(|(i, v)| (i + 1, *v))
            .collect();
        Self { n: z.len(), values }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Sorted support (1-based sample indices).
    pub fn support(&self) -> Vec<usize> {
        self.values.keys().copied().collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, Complex64)> + '_ {
        self.values.iter().map(|(&l, &v)| (l, v))
    }

    pub fn get(&self, l: usize) -> Complex64 {
        self.values.get(&l).copied().unwrap_or_default()
    }

    pub fn to_dense(&self) -> Vec<Complex64> {
        let mut z = vec![Complex64::new(0.0, 0.0); self.n];
        for (&l, &v) in &self.values {
            z[l - 1] = v;
        }
        z
    }

    pub fn l1_norm(&self) -> f64 {
        self.values.values().map(|v| v.norm()).sum()
    }

    pub fn retain_support(&self, keep: &[usize]) -> Self {
        let values = keep
            .iter()
            .filter_map(|l| self.values.get(l).map(|v| (*l, *v)))
            .collect();
        Self { n: self.n, values }
    }
}

/// Observed data vector `y` of length `n >= 2`.
#[derive(Debug, Clone, PartialEq)]
pub struct Samples(Vec<Complex64>);

impl Samples {
    pub fn new(y: Vec<Complex64>) -> Result<Self> {
        if y.len() < 2 {
            return Err(DemixError::InvalidParameter(format!(
                "need at least 2 samples, got {}",
                y.len()
            )));
        }
        Ok(Self(y))
    }

    pub fn n(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<Complex64> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        l2_norm(&self.0)
    }
}

/// Law used to draw line and spike amplitudes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum AmplitudeLaw {
    /// Unit modulus with uniform random phase.
    #[default]
    UnitPhase,
    /// Standard circular complex Gaussian.
    ComplexGaussian,
}

/// How the outlier support is drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SpikeSupport {
    /// Exactly `s` indices, uniformly at random.
    #[default]
    FixedCardinality,
    /// Each index independently with probability `s / n`.
    Bernoulli,
}

/// Parameters of a random instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceParams {
    pub n: usize,
    pub k: usize,
    pub s: usize,
    pub delta_min: f64,
    #[serde(default)]
    pub amp_law: AmplitudeLaw,
    #[serde(default)]
    pub spike_support: SpikeSupport,
    #[serde(default)]
    pub noise_level: f64,
    pub seed: u64,
}

impl InstanceParams {
    pub fn new(n: usize, k: usize, s: usize, delta_min: f64, seed: u64) -> Self {
        Self {
            n,
            k,
            s,
            delta_min,
            amp_law: AmplitudeLaw::default(),
            spike_support: SpikeSupport::default(),
            noise_level: 0.0,
            seed,
        }
    }
}

/// A synthetic measurement: ground truth plus the data it produces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "InstanceRecord", try_from = "InstanceRecord")]
pub struct Instance {
    pub spectrum: LineSpectrum,
    pub spikes: SpikeVector,
    pub dense_noise: Vec<Complex64>,
    pub y: Samples,
    pub params: Option<InstanceParams>,
}

impl Instance {
    /// Assemble `y = forward(spectrum) + spikes + noise`.
    pub fn assemble(
        spectrum: LineSpectrum,
        spikes: SpikeVector,
        dense_noise: Option<Vec<Complex64>>,
        params: Option<InstanceParams>,
    ) -> Result<Self> {
        let n = spikes.n();
        let noise = dense_noise.unwrap_or_else(|| vec![Complex64::new(0.0, 0.0); n]);
        if noise.len() != n {
            return Err(DemixError::DimensionMismatch {
                expected: n,
                got: noise.len(),
            });
        }
        let mut y = forward(&spectrum, n);
        for (l, v) in spikes.iter() {
            y[l - 1] += v;
        }
        for (yl, wl) in y.iter_mut().zip(&noise) {
            *yl += wl;
        }
        Ok(Self {
            spectrum,
            spikes,
            dense_noise: noise,
            y: Samples::new(y)?,
            params,
        })
    }

    pub fn n(&self) -> usize {
        self.y.n()
    }

    /// Clean multisinusoidal samples `g = F_n μ`.
    pub fn clean(&self) -> Vec<Complex64> {
        forward(&self.spectrum, self.n())
    }

    pub fn noise_norm(&self) -> f64 {
        l2_norm(&self.dense_noise)
    }

    /// Same instance with only the selected lines and spikes kept.
    pub fn trimmed(&self, keep_lines: &[usize], keep_spikes: &[usize]) -> Result<Self> {
        Self::assemble(
            self.spectrum.retain_indices(keep_lines),
            self.spikes.retain_support(keep_spikes),
            Some(self.dense_noise.clone()),
            self.params.clone(),
        )
    }
}

#[derive(Serialize, Deserialize)]
struct LineRecord {
    freq: f64,
    amp: Complex64,
}

#[derive(Serialize, Deserialize)]
struct SpikeRecord {
    index: usize,
    value: Complex64,
}

/// On-disk form of [`Instance`]. Complex numbers are `[re, im]` pairs.
#[derive(Serialize, Deserialize)]
struct InstanceRecord {
    #[serde(default)]
    n: Option<usize>,
    #[serde(default)]
    lines: Vec<LineRecord>,
    #[serde(default)]
    spikes: Vec<SpikeRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    noise: Option<Vec<Complex64>>,
    y: Vec<Complex64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    params: Option<InstanceParams>,
}

impl Serialize for SpikeVector {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        ser.collect_seq(self.iter().map(|(index, value)| SpikeRecord { index, value }))
    }
}

impl From<Instance> for InstanceRecord {
    fn from(inst: Instance) -> Self {
        let noisy = inst.dense_noise.iter().any(|w| *w != Complex64::new(0.0, 0.0));
        Self {
            n: Some(inst.n()),
            lines: inst
                .spectrum
                .entries()
                .iter()
                .map(|e| LineRecord { freq: e.freq, amp: e.amp })
                .collect(),
            spikes: inst
                .spikes
                .iter()
                .map(|(index, value)| SpikeRecord { index, value })
                .collect(),
            noise: noisy.then_some(inst.dense_noise),
            y: inst.y.into_inner(),
            params: inst.params,
        }
    }
}

impl TryFrom<InstanceRecord> for Instance {
    type Error = DemixError;

    fn try_from(r: InstanceRecord) -> Result<Self> {
        let n = r.n.unwrap_or(r.y.len());
        let spectrum = LineSpectrum::new(
            r.lines.iter().map(|l| Line { freq: l.freq, amp: l.amp }).collect(),
        )?;
        let spikes = SpikeVector::new(n, r.spikes.iter().map(|s| (s.index, s.value)))?;
        let inst = Instance::assemble(spectrum, spikes, r.noise, r.params)?;
        if r.y.len() != n {
            return Err(DemixError::DimensionMismatch {
                expected: n,
                got: r.y.len(),
            });
        }
        // Stored samples win over the recomputed ones.
        Ok(Instance {
            y: Samples::new(r.y)?,
            ..inst
        })
    }
}

pub(crate) fn l2_norm(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Samples `sum_j x_j exp(i 2π f_j l)` for `l = 1..=n`.
pub fn forward(spectrum: &LineSpectrum, n: usize) -> Vec<Complex64> {
    (1..=n as i64)
        .map(|l| {
            spectrum
                .entries()
                .iter()
                .map(|e| e.amp * cis_freq_index(e.freq, l))
                .sum()
        })
        .collect()
}

/// Wrap-around minimum pairwise distance; `+inf` for fewer than two points.
pub fn min_separation(freqs: &[f64]) -> f64 {
    let mut best = f64::INFINITY;
    for (i, &a) in freqs.iter().enumerate() {
        for &b in &freqs[i + 1..] {
            best = best.min(wrap_dist(a, b));
        }
    }
    best
}

const MAX_SAMPLING_ATTEMPTS: usize = 1_000_000;
// A partial draw that keeps failing is restarted from scratch.
const RESTART_AFTER: usize = 10_000;

fn draw_amplitude(law: AmplitudeLaw, rng: &mut ChaCha8Rng) -> Complex64 {
    match law {
        AmplitudeLaw::UnitPhase => cis_turns(rng.random::<f64>()),
        AmplitudeLaw::ComplexGaussian => {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
        }
    }
}

fn draw_support(k: usize, delta: f64, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    let mut attempts = 0usize;
    'restart: loop {
        let mut freqs: Vec<f64> = Vec::with_capacity(k);
        let mut since_accept = 0usize;
        while freqs.len() < k {
            if attempts >= MAX_SAMPLING_ATTEMPTS {
                return Err(DemixError::SamplingFailed { attempts });
            }
            attempts += 1;
            let f: f64 = rng.random();
            if freqs.iter().all(|&g| wrap_dist(f, g) >= delta) {
                freqs.push(f);
                since_accept = 0;
            } else {
                since_accept += 1;
                if since_accept >= RESTART_AFTER {
                    continue 'restart;
                }
            }
        }
        return Ok(freqs);
    }
}

/// Draw a random instance; fully determined by `params.seed`.
pub fn generate_instance(params: &InstanceParams) -> Result<Instance> {
    let &InstanceParams {
        n,
        k,
        s,
        delta_min,
        amp_law,
        spike_support,
        noise_level,
        seed,
    } = params;
    if n < 2 {
        return Err(DemixError::InvalidParameter("n must be at least 2".into()));
    }
    if s > n {
        return Err(DemixError::InvalidParameter(format!(
            "s = {s} exceeds n = {n}"
        )));
    }
    if !(delta_min >= 0.0) || (k > 1 && k as f64 * delta_min >= 1.0) {
        return Err(DemixError::InfeasibleSeparation { k, delta: delta_min });
    }
    if !(noise_level >= 0.0) || !noise_level.is_finite() {
        return Err(DemixError::InvalidParameter(
            "noise level must be finite and nonnegative".into(),
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let freqs = draw_support(k, delta_min, &mut rng)?;
    let lines = freqs
        .into_iter()
        .map(|freq| Line {
            freq,
            amp: draw_amplitude(amp_law, &mut rng),
        })
        .collect();
    let spectrum = LineSpectrum::new(lines)?;

    let mut support: Vec<usize> = match spike_support {
        SpikeSupport::FixedCardinality => index::sample(&mut rng, n, s).into_vec(),
        SpikeSupport::Bernoulli => {
            let p = s as f64 / n as f64;
            (0..n).filter(|_| rng.random::<f64>() < p).collect()
        }
    };
    support.sort_unstable();
    let spikes = SpikeVector::new(
        n,
        support
            .into_iter()
            .map(|i| (i + 1, draw_amplitude(amp_law, &mut rng)))
            .collect::<Vec<_>>(),
    )?;

    let mut noise = vec![Complex64::new(0.0, 0.0); n];
    if noise_level > 0.0 {
        for w in noise.iter_mut() {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            *w = Complex64::new(re, im);
        }
        let scale = noise_level / l2_norm(&noise);
        noise.iter_mut().for_each(|w| *w *= scale);
    }

    Instance::assemble(spectrum, spikes, Some(noise), Some(params.clone()))
}

/// Equispaced lines cancelled exactly by equispaced spikes: `y = 0`.
///
/// `n` must be a perfect square `k'^2` with `k' >= 2`.
pub fn picket_fence(n: usize) -> Result<Instance> {
    let root = (n as f64).sqrt().round() as usize;
    if root < 2 || root * root != n {
        return Err(DemixError::InvalidParameter(format!(
            "picket fence needs a perfect square n >= 4, got {n}"
        )));
    }
    let amp = Complex64::new(1.0 / root as f64, 0.0);
    let lines = (0..root)
        .map(|j| Line {
            freq: j as f64 / root as f64,
            amp,
        })
        .collect();
    let spikes = SpikeVector::new(
        n,
        (1..=root).map(|j| (j * root, Complex64::new(-1.0, 0.0))),
    )?;
    Instance::assemble(LineSpectrum::new(lines)?, spikes, None, None)
}

/// Frequency-matching tolerance used by [`recovery_score`], in units of `1/n`.
pub const FREQ_MATCH_TOL: f64 = 1e-4;
/// Relative clean-sample error below which a recovery counts as exact.
pub const EXACT_MSE_TOL: f64 = 1e-8;

/// Outcome of comparing an estimate with the ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecoveryScore {
    /// `||g - ĝ||_2 / ||g||_2` on the clean samples.
    pub relative_mse: f64,
    /// Wrap-around Hausdorff distance between the frequency supports.
    pub hausdorff: f64,
    pub spikes_match: bool,
    pub lines_match: bool,
    pub exact_demix: bool,
}

fn hausdorff(a: &[f64], b: &[f64]) -> f64 {
    match (a.is_empty(), b.is_empty()) {
        (true, true) => 0.0,
        (true, false) | (false, true) => 0.5,
        _ => {
            let directed = |p: &[f64], q: &[f64]| {
                p.iter()
                    .map(|&x| q.iter().map(|&y| wrap_dist(x, y)).fold(f64::INFINITY, f64::min))
                    .fold(0.0, f64::max)
            };
            directed(a, b).max(directed(b, a))
        }
    }
}

pub fn recovery_score(
    truth: &Instance,
    est_spectrum: &LineSpectrum,
    est_spikes: &SpikeVector,
) -> Result<RecoveryScore> {
    let n = truth.n();
    if est_spikes.n() != n {
        return Err(DemixError::DimensionMismatch {
            expected: n,
            got: est_spikes.n(),
        });
    }
    let g = truth.clean();
    let g_hat = forward(est_spectrum, n);
    let diff: Vec<Complex64> = g.iter().zip(&g_hat).map(|(a, b)| a - b).collect();
    let g_norm = l2_norm(&g);
    let relative_mse = if g_norm > 0.0 {
        l2_norm(&diff) / g_norm
    } else {
        l2_norm(&diff)
    };
    let h = hausdorff(&truth.spectrum.freqs(), &est_spectrum.freqs());
    let lines_match =
        truth.spectrum.len() == est_spectrum.len() && h <= FREQ_MATCH_TOL / n as f64;
    let spikes_match = truth.spikes.support() == est_spikes.support();
    Ok(RecoveryScore {
        relative_mse,
        hausdorff: h,
        spikes_match,
        lines_match,
        exact_demix: relative_mse < EXACT_MSE_TOL && lines_match && spikes_match,
    })
}
