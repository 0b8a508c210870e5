//! Acoustic landmark detection: glottal (g), burst (b), syllabic (s),
//! frication (f), voiced frication (v) and periodicity (p) events, glottal
//! onset/offset pairing and bigram tokenization.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dsp::{self, AudioBuffer, FrontendConfig, RateOfRiseTrack, Scale};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum LandmarkKind {
    Glottal,
    Burst,
    Syllabic,
    Frication,
    VoicedFrication,
    Periodicity,
}

impl LandmarkKind {
    pub fn letter(self) -> char {
        match self {
            LandmarkKind::Glottal => 'g',
            LandmarkKind::Burst => 'b',
            LandmarkKind::Syllabic => 's',
            LandmarkKind::Frication => 'f',
            LandmarkKind::VoicedFrication => 'v',
            LandmarkKind::Periodicity => 'p',
        }
    }

    fn from_letter(c: char) -> Option<Self> {
        Some(match c {
            'g' => LandmarkKind::Glottal,
            'b' => LandmarkKind::Burst,
            's' => LandmarkKind::Syllabic,
            'f' => LandmarkKind::Frication,
            'v' => LandmarkKind::VoicedFrication,
            'p' => LandmarkKind::Periodicity,
            _ => return None,
        })
    }

    /// Position in the merge tie-break order g < p < s < f < v < b.
    fn merge_rank(self) -> u8 {
        match self {
            LandmarkKind::Glottal => 0,
            LandmarkKind::Periodicity => 1,
            LandmarkKind::Syllabic => 2,
            LandmarkKind::Frication => 3,
            LandmarkKind::VoicedFrication => 4,
            LandmarkKind::Burst => 5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Polarity {
    Plus,
    Minus,
}

impl Polarity {
    fn sign(self) -> char {
        match self {
            Polarity::Plus => '+',
            Polarity::Minus => '-',
        }
    }
}

/// A landmark label such as `g+` or `b-`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LandmarkLabel {
    pub kind: LandmarkKind,
    pub polarity: Polarity,
}

impl LandmarkLabel {
    pub const fn new(kind: LandmarkKind, polarity: Polarity) -> Self {
        Self { kind, polarity }
    }
}

impl fmt::Display for LandmarkLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.kind.letter(), self.polarity.sign())
    }
}

impl FromStr for LandmarkLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut chars = s.chars();
        let (Some(k), Some(p), None) = (chars.next(), chars.next(), chars.next()) else {
            return Err(Error::Format(format!("bad landmark label {s:?}")));
        };
        let kind = LandmarkKind::from_letter(k)
            .ok_or_else(|| Error::Format(format!("unknown landmark kind in {s:?}")))?;
        let polarity = match p {
            '+' => Polarity::Plus,
            '-' | '–' => Polarity::Minus,
            _ => return Err(Error::Format(format!("unknown polarity in {s:?}"))),
        };
        Ok(Self { kind, polarity })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Landmark {
    pub label: LandmarkLabel,
    /// Seconds from the start of the utterance.
    pub time: f64,
    /// Peak rate-of-rise magnitude in dB; for periodicity landmarks the
    /// normalized autocorrelation peak of the voiced side.
    pub confidence: f64,
}

impl Landmark {
    pub fn new(kind: LandmarkKind, polarity: Polarity, time: f64, confidence: f64) -> Self {
        Self {
            label: LandmarkLabel::new(kind, polarity),
            time,
            confidence,
        }
    }

    pub fn kind(&self) -> LandmarkKind {
        self.label.kind
    }

    pub fn polarity(&self) -> Polarity {
        self.label.polarity
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct LandmarkRecord {
    t: f64,
    lm: String,
    conf: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LandmarkSequence {
    pub utterance_id: String,
    pub landmarks: Vec<Landmark>,
}

impl LandmarkSequence {
    pub fn len(&self) -> usize {
        self.landmarks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.landmarks.is_empty()
    }

    pub fn times(&self) -> Vec<f64> {
        self.landmarks.iter().map(|l| l.time).collect()
    }

    /// One `{"t", "lm", "conf"}` object per line.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for l in &self.landmarks {
            let rec = LandmarkRecord {
                t: l.time,
                lm: l.label.to_string(),
                conf: l.confidence,
            };
            out.push_str(&serde_json::to_string(&rec).expect("landmark record serializes"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(utterance_id: impl Into<String>, text: &str) -> Result<Self> {
        let mut landmarks = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let rec: LandmarkRecord = serde_json::from_str(line)
                .map_err(|e| Error::Format(format!("landmark line {}: {e}", i + 1)))?;
            landmarks.push(Landmark {
                label: rec.lm.parse()?,
                time: rec.t,
                confidence: rec.conf,
            });
        }
        if landmarks.windows(2).any(|w| w[1].time < w[0].time) {
            return Err(Error::Validation("landmark times decrease".into()));
        }
        Ok(Self {
            utterance_id: utterance_id.into(),
            landmarks,
        })
    }
}

/// Detection families that read the rate-of-rise track.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    /// `g`: band 1.
    Glottal,
    /// `b`: bands 2-4.
    Burst,
    /// `s`: bands 2-4 with a sustain requirement.
    Syllabic,
    /// `f` outside voiced regions, `v` inside: bands 4-6.
    Frication,
}

impl Family {
    fn bands(self) -> std::ops::Range<usize> {
        match self {
            Family::Glottal => 0..1,
            Family::Burst | Family::Syllabic => 1..4,
            Family::Frication => 3..6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorConfig {
    pub glottal_db: f64,
    pub burst_db: f64,
    pub syllabic_db: f64,
    pub frication_db: f64,
    pub syllabic_sustain_ms: f64,
    pub pitch_min_hz: f64,
    pub pitch_max_hz: f64,
    pub voicing_threshold: f64,
    /// Localize coarse-scale peaks on the fine-scale track.
    pub two_stage: bool,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            glottal_db: 5.0,
            burst_db: 8.0,
            syllabic_db: 6.0,
            frication_db: 6.0,
            syllabic_sustain_ms: 50.0,
            pitch_min_hz: 50.0,
            pitch_max_hz: 500.0,
            voicing_threshold: 0.4,
            two_stage: true,
        }
    }
}

impl DetectorConfig {
    pub fn threshold(&self, family: Family) -> f64 {
        match family {
            Family::Glottal => self.glottal_db,
            Family::Burst => self.burst_db,
            Family::Syllabic => self.syllabic_db,
            Family::Frication => self.frication_db,
        }
    }

    /// Minimum confidence for a landmark kind (voicing threshold for `p`).
    pub fn kind_threshold(&self, kind: LandmarkKind) -> f64 {
        match kind {
            LandmarkKind::Glottal => self.glottal_db,
            LandmarkKind::Burst => self.burst_db,
            LandmarkKind::Syllabic => self.syllabic_db,
            LandmarkKind::Frication | LandmarkKind::VoicedFrication => self.frication_db,
            LandmarkKind::Periodicity => self.voicing_threshold,
        }
    }
}

/// Candidate event on the frame grid.
#[derive(Debug, Clone, Copy)]
struct Peak {
    frame: usize,
    polarity: Polarity,
    magnitude: f64,
}

/// Upper and lower envelopes of a band group: per frame, the largest and
/// smallest rate of rise among the group's bands.
fn group_envelopes(ror: &RateOfRiseTrack, family: Family) -> (Vec<f64>, Vec<f64>) {
    let bands = family.bands();
    (0..ror.n_frames())
        .map(|t| {
            let row = ror.values.row(t);
            let vals = &row.as_slice().expect("row-major track")[bands.clone()];
            let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
            (hi, lo)
        })
        .unzip()
}

/// Local maxima `>= threshold`; a flat top yields its middle frame.
fn local_maxima(x: &[f64], threshold: f64) -> Vec<usize> {
    let n = x.len();
    let mut out = Vec::new();
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && x[j + 1] == x[i] {
            j += 1;
        }
        let left_ok = i == 0 || x[i - 1] < x[i];
        let right_ok = j + 1 == n || x[j + 1] < x[i];
        if left_ok && right_ok && x[i] >= threshold && !(i == 0 && j + 1 == n) {
            out.push((i + j) / 2);
        }
        i = j + 1;
    }
    out
}

/// Keeps the strongest peaks so that no two survivors are closer than
/// `min_distance` frames; returns them in time order.
fn suppress(mut peaks: Vec<Peak>, min_distance: usize) -> Vec<Peak> {
    peaks.sort_by(|a, b| {
        b.magnitude
            .partial_cmp(&a.magnitude)
            .unwrap_or(Ordering::Equal)
            .then(a.frame.cmp(&b.frame))
    });
    let mut kept: Vec<Peak> = Vec::new();
    for p in peaks {
        if kept.iter().all(|k| k.frame.abs_diff(p.frame) >= min_distance) {
            kept.push(p);
        }
    }
    kept.sort_by_key(|p| p.frame);
    kept
}

fn find_peaks(ror: &RateOfRiseTrack, family: Family, cfg: &DetectorConfig, span: usize) -> Vec<Peak> {
    let thr = cfg.threshold(family);
    let (hi, lo) = group_envelopes(ror, family);
    let neg: Vec<f64> = lo.iter().map(|v| -v).collect();
    let sustain_frames = ((cfg.syllabic_sustain_ms / 1000.0 / ror.hop).round() as usize).max(1);

    let mut candidates = Vec::new();
    for (signal, polarity) in [(&hi, Polarity::Plus), (&neg, Polarity::Minus)] {
        let mut peaks: Vec<Peak> = local_maxima(signal, thr)
            .into_iter()
            .map(|frame| Peak {
                frame,
                polarity,
                magnitude: signal[frame],
            })
            .collect();
        if family == Family::Syllabic {
            peaks.retain(|p| run_length_above(signal, p.frame, thr) >= sustain_frames);
        }
        candidates.extend(suppress(peaks, span.max(1)));
    }
    candidates.sort_by_key(|p| (p.frame, p.polarity));
    candidates
}

/// Length of the contiguous run of frames around `at` whose value is `>= thr`.
fn run_length_above(x: &[f64], at: usize, thr: f64) -> usize {
    if x[at] < thr {
        return 0;
    }
    let mut lo = at;
    while lo > 0 && x[lo - 1] >= thr {
        lo -= 1;
    }
    let mut hi = at;
    while hi + 1 < x.len() && x[hi + 1] >= thr {
        hi += 1;
    }
    hi - lo + 1
}

fn peaks_to_landmarks(
    peaks: &[Peak],
    family: Family,
    ror: &RateOfRiseTrack,
    voicing: Option<&[bool]>,
) -> Vec<Landmark> {
    peaks
        .iter()
        .map(|p| {
            let kind = match family {
                Family::Glottal => LandmarkKind::Glottal,
                Family::Burst => LandmarkKind::Burst,
                Family::Syllabic => LandmarkKind::Syllabic,
                Family::Frication => {
                    if voicing.is_some_and(|m| m[p.frame]) {
                        LandmarkKind::VoicedFrication
                    } else {
                        LandmarkKind::Frication
                    }
                }
            };
            Landmark::new(kind, p.polarity, ror.frame_time(p.frame), p.magnitude)
        })
        .collect()
}

fn check_voicing(family: Family, voicing: Option<&[bool]>, n_frames: usize) -> Result<()> {
    if family == Family::Frication {
        match voicing {
            None => {
                return Err(Error::Precondition(
                    "frication detection needs a voiced-region mask".into(),
                ))
            }
            Some(m) if m.len() != n_frames => {
                return Err(Error::Precondition(format!(
                    "voicing mask has {} frames, track has {n_frames}",
                    m.len()
                )))
            }
            _ => {}
        }
    }
    Ok(())
}

/// Events of one family from a single rate-of-rise track. Every emitted
/// landmark's confidence is at least the family threshold.
pub fn detect_events(
    ror: &RateOfRiseTrack,
    family: Family,
    voicing: Option<&[bool]>,
    cfg: &DetectorConfig,
) -> Result<Vec<Landmark>> {
    check_voicing(family, voicing, ror.n_frames())?;
    let span = ror.smoothing;
    let peaks = find_peaks(ror, family, cfg, span);
    Ok(peaks_to_landmarks(&peaks, family, ror, voicing))
}

/// Coarse-scale detection whose peak times are then re-localized to the
/// same-polarity extremum of the fine-scale track within the coarse
/// smoothing half-width. Confidence stays the coarse peak magnitude.
pub fn detect_events_two_stage(
    coarse: &RateOfRiseTrack,
    fine: &RateOfRiseTrack,
    family: Family,
    voicing: Option<&[bool]>,
    cfg: &DetectorConfig,
) -> Result<Vec<Landmark>> {
    check_voicing(family, voicing, coarse.n_frames())?;
    if fine.n_frames() != coarse.n_frames() {
        return Err(Error::Shape("coarse and fine tracks differ in length".into()));
    }
    let mut peaks = find_peaks(coarse, family, cfg, coarse.smoothing);
    let (hi, lo) = group_envelopes(fine, family);
    let half = coarse.smoothing / 2;
    for p in &mut peaks {
        let from = p.frame.saturating_sub(half);
        let to = (p.frame + half).min(fine.n_frames() - 1);
        let score = |t: usize| match p.polarity {
            Polarity::Plus => hi[t],
            Polarity::Minus => -lo[t],
        };
        // nearest-to-center among equal scores
        let best = (from..=to)
            .max_by(|&a, &b| {
                score(a)
                    .partial_cmp(&score(b))
                    .unwrap_or(Ordering::Equal)
                    .then(b.abs_diff(p.frame).cmp(&a.abs_diff(p.frame)))
            })
            .unwrap_or(p.frame);
        p.frame = best;
    }
    peaks.sort_by_key(|p| (p.frame, p.polarity));
    Ok(peaks_to_landmarks(&peaks, family, coarse, voicing))
}

/// Normalized autocorrelation voicing decision per frame (same framing as
/// the band-energy track) and `p` landmarks at voicing transitions.
pub fn detect_periodicity(
    audio: &AudioBuffer,
    frontend: &FrontendConfig,
    cfg: &DetectorConfig,
) -> Result<(Vec<bool>, Vec<Landmark>)> {
    let sr = f64::from(audio.sample_rate());
    let win = frontend.window;
    let hop = frontend.hop;
    let n_frames = dsp::frame_count(audio.len(), win, hop);
    let min_lag = ((sr / cfg.pitch_max_hz).floor() as usize).max(1);
    let max_lag = ((sr / cfg.pitch_min_hz).ceil() as usize).min(win.saturating_sub(2));
    let offset = win as f64 / 2.0 / sr;
    let hop_s = hop as f64 / sr;
    let x = audio.samples();

    let mut strength = vec![0.0; n_frames];
    for (f, s) in strength.iter_mut().enumerate() {
        let frame = &x[f * hop..f * hop + win];
        let energy: f64 = frame.iter().map(|v| v * v).sum();
        if energy < 1e-10 || min_lag > max_lag {
            continue;
        }
        let mut best = 0.0f64;
        for lag in min_lag..=max_lag {
            let a = &frame[..win - lag];
            let b = &frame[lag..];
            let (mut xy, mut xx, mut yy) = (0.0, 0.0, 0.0);
            for (p, q) in a.iter().zip(b) {
                xy += p * q;
                xx += p * p;
                yy += q * q;
            }
            if xx > 0.0 && yy > 0.0 {
                best = best.max(xy / (xx * yy).sqrt());
            }
        }
        *s = best;
    }

    let voiced: Vec<bool> = strength.iter().map(|&s| s >= cfg.voicing_threshold).collect();
    let mut events = Vec::new();
    for f in 0..n_frames {
        let prev = f > 0 && voiced[f - 1];
        if voiced[f] && !prev {
            events.push(Landmark::new(
                LandmarkKind::Periodicity,
                Polarity::Plus,
                offset + f as f64 * hop_s,
                strength[f],
            ));
        }
        // p- sits on the last voiced frame, mirroring p+ on the first
        if !voiced[f] && prev {
            events.push(Landmark::new(
                LandmarkKind::Periodicity,
                Polarity::Minus,
                offset + (f - 1) as f64 * hop_s,
                strength[f - 1],
            ));
        }
    }
    if n_frames > 0 && voiced[n_frames - 1] {
        events.push(Landmark::new(
            LandmarkKind::Periodicity,
            Polarity::Minus,
            offset + (n_frames - 1) as f64 * hop_s,
            strength[n_frames - 1],
        ));
    }
    Ok((voiced, events))
}

/// Highest-confidence subsequence of glottal events that alternates
/// `g+ g- g+ g- ...`, starting with an onset and ending with an offset.
pub fn pair_glottal_dp(events: &[Landmark]) -> Vec<Landmark> {
    #[derive(Clone, Copy)]
    struct Best {
        total: f64,
        end: Option<usize>,
    }
    // best chain ending in an offset (the empty chain counts) / in an onset
    let mut after_offset = Best { total: 0.0, end: None };
    let mut after_onset: Option<Best> = None;
    let mut prev: Vec<Option<usize>> = vec![None; events.len()];

    for (i, e) in events.iter().enumerate() {
        match e.polarity() {
            Polarity::Plus => {
                let total = after_offset.total + e.confidence;
                prev[i] = after_offset.end;
                if after_onset.is_none_or(|b| total > b.total) {
                    after_onset = Some(Best { total, end: Some(i) });
                }
            }
            Polarity::Minus => {
                let Some(on) = after_onset else { continue };
                let total = on.total + e.confidence;
                prev[i] = on.end;
                if total > after_offset.total {
                    after_offset = Best { total, end: Some(i) };
                }
            }
        }
    }

    let mut out = Vec::new();
    let mut cursor = after_offset.end;
    while let Some(i) = cursor {
        out.push(events[i]);
        cursor = prev[i];
    }
    out.reverse();
    out
}

fn merge_order(a: &Landmark, b: &Landmark) -> Ordering {
    a.time
        .partial_cmp(&b.time)
        .unwrap_or(Ordering::Equal)
        .then(a.kind().merge_rank().cmp(&b.kind().merge_rank()))
        .then(a.polarity().cmp(&b.polarity()))
}

/// Time-sorted union; simultaneous events order as g < p < s < f < v < b,
/// then onsets before offsets.
pub fn merge_landmarks(utterance_id: impl Into<String>, lists: &[Vec<Landmark>]) -> LandmarkSequence {
    let mut all: Vec<Landmark> = lists.iter().flatten().copied().collect();
    all.sort_by(merge_order);
    LandmarkSequence {
        utterance_id: utterance_id.into(),
        landmarks: all,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum BigramMode {
    Overlapping,
    #[default]
    NonOverlapping,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BigramToken {
    pub first: LandmarkLabel,
    pub second: LandmarkLabel,
    pub t0: f64,
    pub t1: f64,
}

impl BigramToken {
    pub fn token(&self) -> String {
        format!("{}{}", self.first, self.second)
    }
}

#[derive(Serialize)]
struct BigramRecord {
    tok: String,
    t0: f64,
    t1: f64,
}

pub fn to_bigrams(seq: &LandmarkSequence, mode: BigramMode) -> Vec<BigramToken> {
    let make = |w: &[Landmark]| BigramToken {
        first: w[0].label,
        second: w[1].label,
        t0: w[0].time,
        t1: w[1].time,
    };
    match mode {
        BigramMode::Overlapping => seq.landmarks.windows(2).map(make).collect(),
        BigramMode::NonOverlapping => seq.landmarks.chunks_exact(2).map(make).collect(),
    }
}

pub fn bigrams_to_jsonl(tokens: &[BigramToken]) -> String {
    let mut out = String::new();
    for t in tokens {
        let rec = BigramRecord {
            tok: t.token(),
            t0: t.t0,
            t1: t.t1,
        };
        out.push_str(&serde_json::to_string(&rec).expect("bigram record serializes"));
        out.push('\n');
    }
    out
}

/// Full pipeline for one utterance.
pub fn detect_landmarks(
    utterance_id: &str,
    audio: &AudioBuffer,
    frontend: &FrontendConfig,
    cfg: &DetectorConfig,
) -> Result<LandmarkSequence> {
    let energies = dsp::band_energies(audio, frontend)?;
    let coarse = dsp::rate_of_rise(&energies, Scale::Coarse, frontend)?;
    let fine = dsp::rate_of_rise(&energies, Scale::Fine, frontend)?;
    let (voiced, periodicity) = detect_periodicity(audio, frontend, cfg)?;

    let detect = |family: Family| {
        if cfg.two_stage {
            detect_events_two_stage(&coarse, &fine, family, Some(&voiced), cfg)
        } else {
            detect_events(&coarse, family, Some(&voiced), cfg)
        }
    };
    let glottal = pair_glottal_dp(&detect(Family::Glottal)?);
    let burst = detect(Family::Burst)?;
    let syllabic = detect(Family::Syllabic)?;
    let frication = detect(Family::Frication)?;
    Ok(merge_landmarks(
        utterance_id,
        &[glottal, periodicity, syllabic, frication, burst],
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use proptest::prelude::*;

    fn ror_track(rows: Vec<[f64; 6]>, smoothing: usize) -> RateOfRiseTrack {
        let n = rows.len();
        RateOfRiseTrack {
            values: Array2::from_shape_vec((n, 6), rows.into_iter().flatten().collect()).unwrap(),
            hop: 0.01,
            offset: 0.0,
            scale: Scale::Coarse,
            smoothing,
        }
    }

    fn g(p: Polarity, t: f64, c: f64) -> Landmark {
        Landmark::new(LandmarkKind::Glottal, p, t, c)
    }

    fn labels(ls: &[Landmark]) -> Vec<String> {
        ls.iter().map(|l| l.label.to_string()).collect()
    }

    #[test]
    fn label_round_trip() {
        for s in ["g+", "g-", "b+", "s-", "f+", "v-", "p+"] {
            assert_eq!(s.parse::<LandmarkLabel>().unwrap().to_string(), s);
        }
        assert!("x+".parse::<LandmarkLabel>().is_err());
        assert!("g".parse::<LandmarkLabel>().is_err());
    }

    #[test]
    fn constant_track_yields_nothing() {
        let r = ror_track(vec![[0.0; 6]; 40], 5);
        let cfg = DetectorConfig::default();
        let mask = vec![false; 40];
        for fam in [Family::Glottal, Family::Burst, Family::Syllabic, Family::Frication] {
            assert!(detect_events(&r, fam, Some(&mask), &cfg).unwrap().is_empty());
        }
    }

    fn tone_in_silence(sr: u32) -> AudioBuffer {
        let n = sr as usize / 2;
        let tone = (0..n).map(|i| 0.5 * (2.0 * std::f64::consts::PI * 200.0 * i as f64 / f64::from(sr)).sin());
        let samples = std::iter::repeat_n(0.0, n).chain(tone).chain(std::iter::repeat_n(0.0, n)).collect();
        AudioBuffer::new(samples, sr).unwrap()
    }

    #[test]
    fn tone_gives_one_onset_and_one_offset() {
        let fe = FrontendConfig::default();
        let (mask, p) = detect_periodicity(&tone_in_silence(fe.sample_rate), &fe, &DetectorConfig::default()).unwrap();
        assert_eq!(labels(&p), vec!["p+", "p-"]);
        let hop = fe.hop_seconds();
        assert!((p[0].time - 0.5).abs() <= hop, "{}", p[0].time);
        assert!((p[1].time - 1.0).abs() <= hop, "{}", p[1].time);
        assert!(p.iter().all(|l| l.confidence >= 0.4));
        assert_eq!(mask.iter().filter(|&&v| v).count(), ((p[1].time - p[0].time) / hop).round() as usize + 1);
    }

    #[test]
    fn silence_and_noise_are_unvoiced() {
        use rand::{Rng, SeedableRng};
        let fe = FrontendConfig::default();
        let cfg = DetectorConfig::default();
        let (mask, p) = detect_periodicity(&AudioBuffer::new(vec![0.0; 16_000], 16_000).unwrap(), &fe, &cfg).unwrap();
        assert!(p.is_empty() && mask.iter().all(|&v| !v));
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(6);
        let noise = (0..16_000).map(|_| rng.random_range(-0.5..0.5)).collect();
        let (_, p) = detect_periodicity(&AudioBuffer::new(noise, 16_000).unwrap(), &fe, &cfg).unwrap();
        assert!(p.is_empty());
    }

    #[test]
    fn burst_impulse_fires_b_but_not_s() {
        let mut rows = vec![[0.0; 6]; 40];
        rows[20][2] = 9.0;
        let r = ror_track(rows, 5);
        let cfg = DetectorConfig::default();
        let b = detect_events(&r, Family::Burst, None, &cfg).unwrap();
        assert_eq!(labels(&b), vec!["b+"]);
        assert!((b[0].time - 0.2).abs() < 1e-12);
        assert!(detect_events(&r, Family::Syllabic, None, &cfg).unwrap().is_empty());
    }

    #[test]
    fn sustained_rise_fires_s() {
        let mut rows = vec![[0.0; 6]; 40];
        for (k, v) in [2.0, 4.0, 6.0, 8.0, 10.0, 8.0, 6.0, 4.0, 2.0].iter().enumerate() {
            rows[15 + k][1] = *v;
        }
        let r = ror_track(rows, 5);
        let s = detect_events(&r, Family::Syllabic, None, &DetectorConfig::default()).unwrap();
        assert_eq!(labels(&s), vec!["s+"]);
        assert!((s[0].confidence - 10.0).abs() < 1e-12);
    }

    #[test]
    fn frication_requires_mask_and_splits_on_voicing() {
        let mut rows = vec![[0.0; 6]; 30];
        rows[5][4] = 7.0;
        rows[20][5] = -7.0;
        let r = ror_track(rows, 5);
        let cfg = DetectorConfig::default();
        assert!(matches!(
            detect_events(&r, Family::Frication, None, &cfg),
            Err(Error::Precondition(_))
        ));
        let mut mask = vec![false; 30];
        mask[20] = true;
        let ev = detect_events(&r, Family::Frication, Some(&mask), &cfg).unwrap();
        assert_eq!(labels(&ev), vec!["f+", "v-"]);
    }

    #[test]
    fn below_threshold_is_silent() {
        let mut rows = vec![[0.0; 6]; 30];
        rows[10][0] = 4.99;
        rows[12][1] = 7.99;
        let r = ror_track(rows, 5);
        let cfg = DetectorConfig::default();
        assert!(detect_events(&r, Family::Glottal, None, &cfg).unwrap().is_empty());
        assert!(detect_events(&r, Family::Burst, None, &cfg).unwrap().is_empty());
    }

    #[test]
    fn dp_keeps_alternating_input() {
        let ev = vec![g(Polarity::Plus, 1.0, 6.0), g(Polarity::Minus, 2.0, 6.0)];
        assert_eq!(pair_glottal_dp(&ev), ev);
    }

    #[test]
    fn dp_drops_weaker_duplicate_onset() {
        let ev = vec![
            g(Polarity::Plus, 1.0, 6.0),
            g(Polarity::Plus, 1.5, 5.2),
            g(Polarity::Minus, 2.0, 7.0),
        ];
        assert_eq!(pair_glottal_dp(&ev), vec![ev[0], ev[2]]);
    }

    #[test]
    fn dp_drops_leading_offset() {
        let ev = vec![
            g(Polarity::Minus, 0.5, 9.0),
            g(Polarity::Plus, 1.0, 6.0),
            g(Polarity::Minus, 2.0, 6.0),
        ];
        assert_eq!(pair_glottal_dp(&ev), vec![ev[1], ev[2]]);
        assert!(pair_glottal_dp(&[]).is_empty());
        assert!(pair_glottal_dp(&[g(Polarity::Plus, 0.0, 9.0)]).is_empty());
    }

    #[test]
    fn merge_tie_break() {
        let gp = Landmark::new(LandmarkKind::Glottal, Polarity::Plus, 1.0, 6.0);
        let pp = Landmark::new(LandmarkKind::Periodicity, Polarity::Plus, 1.0, 0.9);
        let seq = merge_landmarks("u", &[vec![pp], vec![gp]]);
        assert_eq!(labels(&seq.landmarks), vec!["g+", "p+"]);
        let bm = Landmark::new(LandmarkKind::Burst, Polarity::Minus, 1.0, 9.0);
        let bp = Landmark::new(LandmarkKind::Burst, Polarity::Plus, 1.0, 9.0);
        let seq = merge_landmarks("u", &[vec![bm], vec![bp]]);
        assert_eq!(labels(&seq.landmarks), vec!["b+", "b-"]);
        assert!(merge_landmarks("u", &[vec![], vec![]]).is_empty());
    }

    #[test]
    fn merge_disjoint_is_concatenation() {
        let a = vec![g(Polarity::Plus, 0.1, 6.0), g(Polarity::Minus, 0.2, 6.0)];
        let b = vec![Landmark::new(LandmarkKind::Burst, Polarity::Plus, 0.5, 9.0)];
        let seq = merge_landmarks("u", &[b.clone(), a.clone()]);
        assert_eq!(seq.landmarks, [a, b].concat());
    }

    fn seq_of(labels: &[&str]) -> LandmarkSequence {
        LandmarkSequence {
            utterance_id: "u".into(),
            landmarks: labels
                .iter()
                .enumerate()
                .map(|(i, l)| Landmark {
                    label: l.parse().unwrap(),
                    time: i as f64 * 0.1,
                    confidence: 10.0,
                })
                .collect(),
        }
    }

    #[test]
    fn bigram_counts_and_figure_tokens() {
        let five = seq_of(&["g+", "p-", "s+", "p+", "b-"]);
        assert_eq!(to_bigrams(&five, BigramMode::NonOverlapping).len(), 2);
        assert_eq!(to_bigrams(&five, BigramMode::Overlapping).len(), 4);
        let four = seq_of(&["g+", "p-", "s+", "p+"]);
        let toks: Vec<String> = to_bigrams(&four, BigramMode::NonOverlapping)
            .iter()
            .map(BigramToken::token)
            .collect();
        assert_eq!(toks, vec!["g+p-", "s+p+"]);
        let line = bigrams_to_jsonl(&to_bigrams(&four, BigramMode::NonOverlapping));
        assert!(line.starts_with(r#"{"tok":"g+p-","t0":0.0,"t1":0.1}"#));
    }

    #[test]
    fn jsonl_round_trip() {
        let seq = seq_of(&["g+", "b-", "g-"]);
        let text = seq.to_jsonl();
        assert!(text.lines().next().unwrap().starts_with(r#"{"t":0.0,"lm":"g+","conf":10.0}"#));
        assert_eq!(LandmarkSequence::from_jsonl("u", &text).unwrap(), seq);
    }

    fn brute_force_best(events: &[Landmark]) -> f64 {
        let n = events.len();
        let mut best = 0.0f64;
        for mask in 0u32..(1 << n) {
            let chosen: Vec<&Landmark> = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| &events[i]).collect();
            let ok = chosen.len().is_multiple_of(2)
                && chosen.iter().enumerate().all(|(k, e)| {
                    e.polarity() == if k % 2 == 0 { Polarity::Plus } else { Polarity::Minus }
                });
            if ok {
                best = best.max(chosen.iter().map(|e| e.confidence).sum());
            }
        }
        best
    }

    proptest! {
        #[test]
        fn dp_matches_brute_force(
            evs in proptest::collection::vec((any::<bool>(), 5.0f64..20.0), 0..=12)
        ) {
            let events: Vec<Landmark> = evs
                .iter()
                .enumerate()
                .map(|(i, &(plus, c))| g(if plus { Polarity::Plus } else { Polarity::Minus }, i as f64, c))
                .collect();
            let kept = pair_glottal_dp(&events);
            let total: f64 = kept.iter().map(|e| e.confidence).sum();
            prop_assert!((total - brute_force_best(&events)).abs() < 1e-9);
            let plus = kept.iter().filter(|e| e.polarity() == Polarity::Plus).count();
            prop_assert_eq!(plus * 2, kept.len());
            for (k, e) in kept.iter().enumerate() {
                let want = if k % 2 == 0 { Polarity::Plus } else { Polarity::Minus };
                prop_assert_eq!(e.polarity(), want);
            }
        }

        #[test]
        fn non_overlapping_halves_length(n in 0usize..40) {
            let labels: Vec<&str> = (0..n).map(|i| if i % 2 == 0 { "g+" } else { "g-" }).collect();
            let seq = seq_of(&labels);
            prop_assert_eq!(to_bigrams(&seq, BigramMode::NonOverlapping).len(), n / 2);
            prop_assert_eq!(to_bigrams(&seq, BigramMode::Overlapping).len(), n.saturating_sub(1));
        }
    }
}
