//! Synthetic player: a first-order arousal model driven by the stimulus count,
//! rendered as EEG built from sinusoid bundles with known band power.
//!
//! Arousal relaxes toward `min(difficulty / d_sat, 1)` with rate `k` plus
//! Gaussian noise, and maps linearly onto a target TEI between `tei_min`
//! (boredom) and `tei_max` (anxiety). Alpha and theta are held at a fixed
//! 3:2 split of `base_alpha_theta`, so beta alone carries the index.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{Band, BandDefinition, BandPowers, ChannelConfig, EegSample};

/// Per-band target power, µV².
pub type BandTargets = BandPowers;

/// Sinusoids per band.
pub const TONES_PER_BAND: usize = 3;

const OWN_EDGE_MARGIN_HZ: f64 = 0.5;
const FOREIGN_EDGE_MARGIN_HZ: f64 = 1.5;
const NARROW_SPACING_HZ: f64 = 0.75;
const RESOLVED_SPACING_HZ: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlayerParams {
    /// Arousal relaxation rate, 1/s.
    pub arousal_gain: f64,
    /// Stimulus count at which arousal saturates.
    pub difficulty_saturation: f64,
    /// Arousal noise, units/√s.
    pub noise_sigma: f64,
    pub tei_min: f64,
    pub tei_max: f64,
    /// Alpha + theta power, µV².
    pub base_alpha_theta: f64,
    pub delta_power: f64,
    pub gamma_power: f64,
}

impl Default for PlayerParams {
    fn default() -> Self {
        Self {
            arousal_gain: 0.2,
            difficulty_saturation: 4.0,
            noise_sigma: 0.02,
            tei_min: 0.4,
            tei_max: 2.0,
            base_alpha_theta: 10.0,
            delta_power: 4.0,
            gamma_power: 0.5,
        }
    }
}

impl PlayerParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.arousal_gain > 0.0
            && self.difficulty_saturation >= 1.0
            && self.noise_sigma >= 0.0
            && self.tei_min >= 0.0
            && self.tei_min < self.tei_max
            && self.base_alpha_theta > 0.0
            && self.delta_power >= 0.0
            && self.gamma_power >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!(
                "invalid player parameters: {self:?}"
            )))
        }
    }

    pub fn tei_for(&self, arousal: f64) -> f64 {
        self.tei_min + arousal * (self.tei_max - self.tei_min)
    }

    pub fn targets_for(&self, arousal: f64) -> BandTargets {
        let c = self.base_alpha_theta;
        BandPowers {
            delta: self.delta_power,
            theta: 0.4 * c,
            alpha: 0.6 * c,
            beta: self.tei_for(arousal) * c,
            gamma: self.gamma_power,
        }
    }

    /// Noise-free equilibrium arousal under a constant stimulus count.
    pub fn equilibrium_arousal(&self, difficulty: u32) -> f64 {
        (f64::from(difficulty) / self.difficulty_saturation).min(1.0)
    }
}

#[derive(Debug, Clone)]
pub struct PlayerState {
    arousal: f64,
    pinned: Option<f64>,
    rng: ChaCha8Rng,
}

impl PlayerState {
    pub fn new(arousal: f64, rng: ChaCha8Rng) -> Self {
        Self {
            arousal: arousal.clamp(0.0, 1.0),
            pinned: None,
            rng,
        }
    }

    pub fn arousal(&self) -> f64 {
        self.arousal
    }

    /// Holds arousal at `value` until [`PlayerState::release`].
    pub fn pin(&mut self, value: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&value) {
            return Err(Error::InvalidConfig(format!(
                "arousal {value} outside [0, 1]"
            )));
        }
        self.pinned = Some(value);
        Ok(())
    }

    pub fn release(&mut self) {
        self.pinned = None;
    }

    pub fn pinned(&self) -> Option<f64> {
        self.pinned
    }
}

/// Advances the player by `dt` seconds under `difficulty` active stimuli.
pub fn player_step(
    st: &mut PlayerState,
    difficulty: u32,
    dt: f64,
    p: &PlayerParams,
) -> BandTargets {
    let noise: f64 = st.rng.sample(StandardNormal);
    st.arousal = match st.pinned {
        Some(a) => a,
        None => {
            let drive = p.equilibrium_arousal(difficulty);
            let next = st.arousal
                + p.arousal_gain * (drive - st.arousal) * dt
                + p.noise_sigma * dt.sqrt() * noise;
            next.clamp(0.0, 1.0)
        }
    };
    p.targets_for(st.arousal)
}

/// Frequency range for a band's tones: inside its own edges and clear of
/// every other band's bins, so leakage stays in the band it belongs to.
fn tone_range(band: &BandDefinition, all: &[BandDefinition]) -> (f64, f64) {
    let mut pieces = vec![(
        band.lo_hz + OWN_EDGE_MARGIN_HZ,
        band.hi_hz - OWN_EDGE_MARGIN_HZ,
    )];
    for other in all.iter().filter(|o| o.name != band.name) {
        let (cut_lo, cut_hi) = (
            other.lo_hz - FOREIGN_EDGE_MARGIN_HZ,
            other.hi_hz + FOREIGN_EDGE_MARGIN_HZ,
        );
        pieces = pieces
            .into_iter()
            .flat_map(|(a, b)| {
                let mut out = Vec::new();
                if a < cut_lo.min(b) {
                    out.push((a, cut_lo.min(b)));
                }
                if cut_hi.max(a) < b {
                    out.push((cut_hi.max(a), b));
                }
                out
            })
            .collect();
    }
    pieces
        .into_iter()
        .max_by(|x, y| (x.1 - x.0).total_cmp(&(y.1 - y.0)))
        .unwrap_or((band.lo_hz, band.hi_hz))
}

/// Evenly spaced tones at a random offset. Narrow bands use 0.75 Hz spacing:
/// pairs a whole number of 2 Hz apart would alias against the 0.5 s Welch hop
/// and never average out.
fn draw_tone_freqs(band: &BandDefinition, all: &[BandDefinition], rng: &mut impl Rng) -> Vec<f64> {
    let (a, b) = tone_range(band, all);
    let gaps = (TONES_PER_BAND - 1) as f64;
    let width = b - a;
    let spacing = if width / gaps >= RESOLVED_SPACING_HZ {
        width / (2.0 * gaps)
    } else {
        NARROW_SPACING_HZ.min(width / gaps)
    };
    let slack = (width - gaps * spacing).max(0.0);
    let f0 = a + slack * rng.random::<f64>();
    (0..TONES_PER_BAND)
        .map(|k| f0 + k as f64 * spacing)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Tone {
    band: Band,
    freq_hz: f64,
    phase: f64,
}

/// Fixed tones per channel; amplitudes are supplied per call.
#[derive(Debug, Clone)]
pub struct OscillatorBank {
    sample_rate_hz: f64,
    channels: Vec<Vec<Tone>>,
}

impl OscillatorBank {
    pub fn new(
        sample_rate_hz: f64,
        n_channels: usize,
        bands: &[BandDefinition],
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let nyquist = sample_rate_hz / 2.0;
        if let Some(b) = bands.iter().find(|b| b.hi_hz > nyquist) {
            return Err(Error::NyquistViolation {
                name: b.name.to_string(),
                hi_hz: b.hi_hz,
                nyquist_hz: nyquist,
            });
        }
        let channels = (0..n_channels)
            .map(|_| {
                let mut tones = Vec::with_capacity(bands.len() * TONES_PER_BAND);
                for def in bands {
                    for freq_hz in draw_tone_freqs(def, bands, rng) {
                        tones.push(Tone {
                            band: def.name,
                            freq_hz,
                            phase: 2.0 * PI * rng.random::<f64>(),
                        });
                    }
                }
                tones
            })
            .collect();
        Ok(Self {
            sample_rate_hz,
            channels,
        })
    }

    pub fn n_channels(&self) -> usize {
        self.channels.len()
    }

    /// Renders samples `start..start + len` (absolute sample indices) with band
    /// amplitudes ramped linearly from `from` to `to` across the block.
    pub fn render(
        &self,
        start: u64,
        len: usize,
        from: &BandTargets,
        to: &BandTargets,
    ) -> Vec<Vec<f64>> {
        let amp = |bt: &BandTargets, band: Band| (2.0 * bt[band] / TONES_PER_BAND as f64).sqrt();
        self.channels
            .iter()
            .map(|tones| {
                let mut out = vec![0.0; len];
                for tone in tones {
                    let (a0, a1) = (amp(from, tone.band), amp(to, tone.band));
                    if a0 == 0.0 && a1 == 0.0 {
                        continue;
                    }
                    let step = 2.0 * PI * tone.freq_hz / self.sample_rate_hz;
                    // exact phase at block start, then rotate
                    let theta = step * start as f64 + tone.phase;
                    let (mut s, mut c) = theta.sin_cos();
                    let (ds, dc) = step.sin_cos();
                    for (i, slot) in out.iter_mut().enumerate() {
                        let a = if len > 1 {
                            a0 + (a1 - a0) * i as f64 / len as f64
                        } else {
                            a1
                        };
                        *slot += a * s;
                        let ns = s * dc + c * ds;
                        c = c * dc - s * ds;
                        s = ns;
                    }
                }
                out
            })
            .collect()
    }
}

/// One-shot synthesis with constant targets, one row per channel.
pub fn synthesize_epoch(
    bt: &BandTargets,
    sample_rate_hz: f64,
    duration_s: f64,
    n_channels: usize,
    rng: &mut impl Rng,
) -> Result<Vec<Vec<f64>>> {
    if sample_rate_hz < 128.0 {
        return Err(Error::NyquistViolation {
            name: Band::Gamma.to_string(),
            hi_hz: BandDefinition::default_for(Band::Gamma).hi_hz,
            nyquist_hz: sample_rate_hz / 2.0,
        });
    }
    let bank = OscillatorBank::new(sample_rate_hz, n_channels, &BandDefinition::DEFAULTS, rng)?;
    let len = (duration_s * sample_rate_hz).round() as usize;
    Ok(bank.render(0, len, bt, bt))
}

/// Closed-loop synthetic sample source.
#[derive(Debug, Clone)]
pub struct SynthSource {
    params: PlayerParams,
    player: PlayerState,
    bank: OscillatorBank,
    sample_rate_hz: f64,
    block_len: usize,
    next_index: u64,
    targets: BandTargets,
}

impl SynthSource {
    /// `block_seconds` is the player update period and must be a whole number
    /// of samples.
    pub fn new(
        seed: u64,
        params: PlayerParams,
        channels: &ChannelConfig,
        block_seconds: f64,
    ) -> Result<Self> {
        params.validate()?;
        channels.validate()?;
        let fs = channels.sample_rate_hz;
        let block = block_seconds * fs;
        if !(block >= 1.0 && (block - block.round()).abs() < 1e-9) {
            return Err(Error::InvalidConfig(format!(
                "synth block {block_seconds} s is not a whole number of samples"
            )));
        }
        let mut player_rng = ChaCha8Rng::seed_from_u64(seed);
        player_rng.set_stream(1);
        let mut tone_rng = ChaCha8Rng::seed_from_u64(seed);
        tone_rng.set_stream(2);
        let bank = OscillatorBank::new(
            fs,
            channels.channel_count(),
            &BandDefinition::DEFAULTS,
            &mut tone_rng,
        )?;
        let targets = params.targets_for(0.0);
        Ok(Self {
            params,
            player: PlayerState::new(0.0, player_rng),
            bank,
            sample_rate_hz: fs,
            block_len: block.round() as usize,
            next_index: 0,
            targets,
        })
    }

    pub fn player(&self) -> &PlayerState {
        &self.player
    }

    pub fn player_mut(&mut self) -> &mut PlayerState {
        &mut self.player
    }

    pub fn params(&self) -> &PlayerParams {
        &self.params
    }

    pub fn block_len(&self) -> usize {
        self.block_len
    }

    /// Steps the player once and renders the next block of samples.
    pub fn next_block(&mut self, difficulty: u32) -> Vec<EegSample> {
        let dt = self.block_len as f64 / self.sample_rate_hz;
        let to = player_step(&mut self.player, difficulty, dt, &self.params);
        let rows = self
            .bank
            .render(self.next_index, self.block_len, &self.targets, &to);
        self.targets = to;
        let start = self.next_index;
        self.next_index += self.block_len as u64;
        (0..self.block_len)
            .map(|i| {
                let t = (start + i as u64) as f64 / self.sample_rate_hz;
                EegSample::new(t, rows.iter().map(|r| r[i] as f32).collect())
            })
            .collect()
    }
}
