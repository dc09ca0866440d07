use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{PpgSample, VitalsError, VitalsProfile, ADC_MAX};

/// Width of the raised-cosine pulse centred on each scheduled beat.
pub const PULSE_WIDTH_MS: f64 = 300.0;

/// Stateful PPG generator. Beat scheduling is continuous across profile
/// changes, so a scenario can switch heart rate mid-stream without a phase
/// glitch.
#[derive(Debug, Clone)]
pub struct PpgSynth {
    profile: VitalsProfile,
    sample_hz: u32,
    rng: ChaCha8Rng,
    index: u64,
    prev_beat: Option<f64>,
    next_beat: f64,
    beats: Vec<f64>,
}

impl PpgSynth {
    pub fn new(profile: VitalsProfile, sample_hz: u32, seed: u64) -> Result<Self, VitalsError> {
        if !(25..=1000).contains(&sample_hz) {
            return Err(VitalsError::InvalidSampleRate(sample_hz));
        }
        profile.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let period = 60_000.0 / profile.target_bpm;
        let first_beat = PULSE_WIDTH_MS / 2.0 + rng.random::<f64>() * period;
        Ok(Self {
            profile,
            sample_hz,
            rng,
            index: 0,
            prev_beat: None,
            next_beat: first_beat,
            beats: Vec::new(),
        })
    }

    pub fn profile(&self) -> &VitalsProfile {
        &self.profile
    }

    /// Swaps the generator knobs. Already-scheduled beats keep their time;
    /// later beats follow the new rate.
    pub fn set_profile(&mut self, profile: VitalsProfile) -> Result<(), VitalsError> {
        profile.validate()?;
        self.profile = profile;
        Ok(())
    }

    /// Time of the next sample to be produced.
    pub fn next_t_ms(&self) -> u64 {
        self.index * 1000 / u64::from(self.sample_hz)
    }

    /// Scheduled beat centres (ms) passed so far while in contact.
    pub fn beat_times(&self) -> &[f64] {
        &self.beats
    }

    pub fn next_sample(&mut self) -> PpgSample {
        let t_ms = self.next_t_ms();
        self.index += 1;
        let t = t_ms as f64;

        while t >= self.next_beat {
            if self.profile.contact {
                self.beats.push(self.next_beat);
            }
            self.prev_beat = Some(self.next_beat);
            self.next_beat += 60_000.0 / self.profile.target_bpm;
        }

        let p = &self.profile;
        let (red_ac, ir_ac) = if p.contact {
            let pulse = self.prev_beat.map_or(0.0, |b| raised_cosine(t - b)) + raised_cosine(self.next_beat - t);
            (p.red_ac_amplitude() * pulse, p.ac_amplitude * pulse)
        } else {
            (0.0, 0.0)
        };
        let (red_noise, ir_noise) = if p.noise_amplitude > 0.0 {
            let n = p.noise_amplitude;
            (self.rng.random_range(-n..=n), self.rng.random_range(-n..=n))
        } else {
            (0.0, 0.0)
        };

        PpgSample {
            t_ms,
            red: to_adc(p.dc_red + red_ac + red_noise),
            ir: to_adc(p.dc_ir + ir_ac + ir_noise),
        }
    }

    /// All samples with `t_ms < end_ms` not yet produced.
    pub fn samples_until(&mut self, end_ms: u64) -> Vec<PpgSample> {
        let mut out = Vec::new();
        while self.next_t_ms() < end_ms {
            out.push(self.next_sample());
        }
        out
    }
}

fn raised_cosine(dt: f64) -> f64 {
    if dt.abs() >= PULSE_WIDTH_MS / 2.0 {
        0.0
    } else {
        0.5 * (1.0 + (2.0 * PI * dt / PULSE_WIDTH_MS).cos())
    }
}

fn to_adc(value: f64) -> u16 {
    value.round().clamp(0.0, f64::from(ADC_MAX)) as u16
}

/// Generates `duration_ms * sample_hz / 1000` samples of one profile.
pub fn synthesize_ppg(
    profile: &VitalsProfile,
    duration_ms: u64,
    sample_hz: u32,
    seed: u64,
) -> Result<Vec<PpgSample>, VitalsError> {
    if duration_ms == 0 {
        return Err(VitalsError::EmptyDuration);
    }
    let mut synth = PpgSynth::new(*profile, sample_hz, seed)?;
    let count = duration_ms * u64::from(sample_hz) / 1000;
    Ok((0..count).map(|_| synth.next_sample()).collect())
}
