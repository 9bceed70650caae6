//! Normalized daily profiles: seeded synthetic shapes and CSV ingestion.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ScenarioError;
use crate::forecast::bell_shape;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SynthKind {
    Clear,
    Cloudy,
    Residential,
    Business,
}

/// Derives an independent seed for stream `stream`, item `index`.
pub(crate) fn sub_seed(seed: u64, stream: u64, index: u64) -> u64 {
    let mut x = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ index.wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
    // splitmix64 finalizer
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

fn hour_of(n: usize, steps_per_day: usize) -> f64 {
    24.0 * n as f64 / steps_per_day as f64
}

fn bump(hour: f64, center: f64, width: f64) -> f64 {
    // distance on the 24 h circle
    let d = (hour - center).rem_euclid(24.0);
    let d = d.min(24.0 - d);
    (-d * d / (2.0 * width * width)).exp()
}

fn normalize_max(values: &mut [f64]) {
    let max = values.iter().copied().fold(0.0, f64::max);
    if max > 0.0 {
        values.iter_mut().for_each(|v| *v /= max);
    }
}

/// Multiplicative cloud attenuation in `(0, 1]`: a product of Gaussian dips.
fn cloud_factor(rng: &mut ChaCha8Rng, steps_per_day: usize, dips: usize, depth: (f64, f64)) -> Vec<f64> {
    let events: Vec<(f64, f64, f64)> = (0..dips)
        .map(|i| {
            // the first dip always sits around noon so the day loses energy
            let center = if i == 0 {
                rng.random_range(10.5..13.5)
            } else {
                rng.random_range(8.0..16.0)
            };
            (center, rng.random_range(0.6..1.8), rng.random_range(depth.0..depth.1))
        })
        .collect();
    (0..steps_per_day)
        .map(|n| {
            let h = hour_of(n, steps_per_day);
            events.iter().map(|&(c, w, d)| 1.0 - d * bump(h, c, w)).product()
        })
        .collect()
}

/// One normalized day of the given kind, sampled at the start of each step.
pub fn synth_profile(seed: u64, kind: SynthKind, steps_per_day: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let clear = || (0..steps_per_day).map(|n| bell_shape(hour_of(n, steps_per_day)));
    match kind {
        SynthKind::Clear => clear().collect(),
        SynthKind::Cloudy => {
            // overcast from sunrise, with passing thicker clouds on top
            let overcast = rng.random_range(0.35..0.6);
            let dips = rng.random_range(3..6);
            let f = cloud_factor(&mut rng, steps_per_day, dips, (0.2, 0.6));
            clear().zip(f).map(|(c, f)| overcast * c * f).collect()
        }
        SynthKind::Residential => {
            let morning = 7.5 + rng.random_range(-0.5..0.5);
            let evening = 19.5 + rng.random_range(-0.5..0.5);
            let a_m = 0.35 * rng.random_range(0.85..1.15);
            let mut v: Vec<f64> = (0..steps_per_day)
                .map(|n| {
                    let h = hour_of(n, steps_per_day);
                    let noise = 1.0 + rng.random_range(-0.03..0.03);
                    (0.25 + a_m * bump(h, morning, 1.3) + 0.75 * bump(h, evening, 1.8)) * noise
                })
                .collect();
            normalize_max(&mut v);
            v
        }
        SynthKind::Business => {
            let open = 8.0 + rng.random_range(-0.5..0.5);
            let close = 18.0 + rng.random_range(-0.5..0.5);
            let sig = |x: f64| 1.0 / (1.0 + (-x).exp());
            let mut v: Vec<f64> = (0..steps_per_day)
                .map(|n| {
                    let h = hour_of(n, steps_per_day);
                    let noise = 1.0 + rng.random_range(-0.03..0.03);
                    (0.15 + 0.85 * sig((h - open) / 0.6) * sig((close - h) / 0.6)) * noise
                })
                .collect();
            normalize_max(&mut v);
            v
        }
    }
}

/// Clear day with at most one shallow dip, used for forecaster history.
fn fair_weather_day(seed: u64, steps_per_day: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dips = rng.random_range(0..2);
    let f = cloud_factor(&mut rng, steps_per_day, dips, (0.05, 0.25));
    (0..steps_per_day)
        .map(|n| bell_shape(hour_of(n, steps_per_day)) * f[n])
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Weather {
    Clear,
    #[default]
    Cloudy,
}

/// Training days per profile family.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FamilyHistory {
    pub solar: Vec<Vec<f64>>,
    pub residential: Vec<Vec<f64>>,
    pub business: Vec<Vec<f64>>,
}

/// Normalized realized day per device plus history for training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileSet {
    pub steps_per_day: usize,
    /// Per PV source, in configuration order.
    pub pv: Vec<Vec<f64>>,
    /// Per load, in configuration order.
    pub loads: Vec<Vec<f64>>,
    pub history: FamilyHistory,
}

/// Seeded synthetic set: `history_days` fair-weather/typical days followed by
/// a realized day with the requested weather. Each load gets its own
/// realization of its family shape.
pub fn synthetic_profile_set(
    seed: u64,
    weather: Weather,
    history_days: usize,
    n_pv: usize,
    load_kinds: &[SynthKind],
    steps_per_day: usize,
) -> ProfileSet {
    let solar_kind = match weather {
        Weather::Clear => SynthKind::Clear,
        Weather::Cloudy => SynthKind::Cloudy,
    };
    let realized_solar = synth_profile(sub_seed(seed, 1, 0), solar_kind, steps_per_day);
    let history = FamilyHistory {
        solar: (0..history_days)
            .map(|d| fair_weather_day(sub_seed(seed, 2, d as u64), steps_per_day))
            .collect(),
        residential: (0..history_days)
            .map(|d| synth_profile(sub_seed(seed, 3, d as u64), SynthKind::Residential, steps_per_day))
            .collect(),
        business: (0..history_days)
            .map(|d| synth_profile(sub_seed(seed, 4, d as u64), SynthKind::Business, steps_per_day))
            .collect(),
    };
    let loads = load_kinds
        .iter()
        .enumerate()
        .map(|(j, &k)| synth_profile(sub_seed(seed, 5, j as u64), k, steps_per_day))
        .collect();
    ProfileSet {
        steps_per_day,
        pv: vec![realized_solar; n_pv],
        loads,
        history,
    }
}

/// Parses a `step,value` CSV holding one or more whole days. Values above 1
/// are rescaled so the maximum maps to 1.
pub fn parse_profile_csv(text: &str, steps_per_day: usize, name: &str) -> Result<Vec<Vec<f64>>, ScenarioError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut values = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| ScenarioError::Profile(format!("{name}: {e}")))?;
        let v: f64 = rec
            .get(1)
            .ok_or_else(|| ScenarioError::Profile(format!("{name}: row {} has no value column", i + 1)))?
            .parse()
            .map_err(|e| ScenarioError::Profile(format!("{name}: row {}: {e}", i + 1)))?;
        if !v.is_finite() || v < 0.0 {
            return Err(ScenarioError::Profile(format!(
                "{name}: row {} has invalid value {v}",
                i + 1
            )));
        }
        values.push(v);
    }
    if values.is_empty() || values.len() % steps_per_day != 0 {
        return Err(ScenarioError::Profile(format!(
            "{name}: {} rows is not a whole number of {steps_per_day}-step days",
            values.len()
        )));
    }
    let max = values.iter().copied().fold(0.0, f64::max);
    if max > 1.0 {
        log::warn!("{name}: values exceed 1, rescaling by the maximum {max}");
        values.iter_mut().for_each(|v| *v /= max);
    }
    Ok(values.chunks(steps_per_day).map(<[f64]>::to_vec).collect())
}

fn read_days(path: &Path, steps_per_day: usize) -> Result<Vec<Vec<f64>>, ScenarioError> {
    let text = std::fs::read_to_string(path).map_err(|e| ScenarioError::Io(format!("{}: {e}", path.display())))?;
    parse_profile_csv(&text, steps_per_day, &path.display().to_string())
}

/// Splits a multi-day series into history and the realized last day. A
/// single day serves as both.
fn split(mut days: Vec<Vec<f64>>) -> (Vec<Vec<f64>>, Vec<f64>) {
    let realized = days.last().cloned().expect("at least one day");
    if days.len() > 1 {
        days.pop();
    }
    (days, realized)
}

/// Family-level CSV files; every device of a family shares its profile.
pub fn load_profiles(
    solar: &Path,
    residential: &Path,
    business: &Path,
    n_pv: usize,
    load_kinds: &[SynthKind],
    steps_per_day: usize,
) -> Result<ProfileSet, ScenarioError> {
    let (hs, rs) = split(read_days(solar, steps_per_day)?);
    let (hr, rr) = split(read_days(residential, steps_per_day)?);
    let (hb, rb) = split(read_days(business, steps_per_day)?);
    let loads = load_kinds
        .iter()
        .map(|k| match k {
            SynthKind::Business => rb.clone(),
            _ => rr.clone(),
        })
        .collect();
    Ok(ProfileSet {
        steps_per_day,
        pv: vec![rs; n_pv],
        loads,
        history: FamilyHistory {
            solar: hs,
            residential: hr,
            business: hb,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clear_peaks_at_noon() {
        let c = synth_profile(0, SynthKind::Clear, 24);
        assert_eq!(c[12], 1.0);
        assert!(c.iter().all(|&v| v <= 1.0));
        assert_eq!(c[3], 0.0);
    }

    #[test]
    fn cloudy_is_deterministic_and_darker() {
        for seed in 0..50 {
            let a = synth_profile(seed, SynthKind::Cloudy, 24);
            assert_eq!(a, synth_profile(seed, SynthKind::Cloudy, 24));
            let clear: f64 = synth_profile(seed, SynthKind::Clear, 24).iter().sum();
            assert!(a.iter().sum::<f64>() < clear);
            assert!(a.iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn load_shapes() {
        let r = synth_profile(3, SynthKind::Residential, 24);
        let peak = r.iter().cloned().fold(0.0, f64::max);
        assert_eq!(peak, 1.0);
        let at = r.iter().position(|&v| v == 1.0).unwrap();
        assert!((18..=21).contains(&at), "evening peak at {at}");
        assert!(r[7] > r[3] && r[7] > r[12], "morning bump");
        let b = synth_profile(3, SynthKind::Business, 24);
        assert!(b[12] > 0.9 && b[2] < 0.3);
    }

    #[test]
    fn csv_rules() {
        let day: String = (0..24).map(|k| format!("{k},{}\n", k as f64 / 24.0)).collect();
        let ok = format!("step,value\n{day}");
        assert_eq!(parse_profile_csv(&ok, 24, "x").unwrap().len(), 1);
        let short: String = (0..23).map(|k| format!("{k},0.5\n")).collect();
        assert!(parse_profile_csv(&format!("step,value\n{short}"), 24, "x").is_err());
        let neg = ok.replace("3,0.125", "3,-0.1");
        assert!(parse_profile_csv(&neg, 24, "x").is_err());
        let big: String = (0..24).map(|k| format!("{k},{}\n", 2.0 * k as f64)).collect();
        let days = parse_profile_csv(&format!("step,value\n{big}"), 24, "x").unwrap();
        assert_eq!(days[0][23], 1.0);
        assert_eq!(days[0][0], 0.0);
    }
}
