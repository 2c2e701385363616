//! Wind-speed profiles and their conversion to converter active current.

use std::str::FromStr;

#[derive(Debug, Clone, PartialEq)]
pub struct WindSeries {
    /// `(time s, speed m/s)` with strictly increasing times.
    samples: Vec<(f64, f64)>,
}

impl WindSeries {
    pub fn new(samples: Vec<(f64, f64)>) -> Result<Self, String> {
        if samples.is_empty() {
            return Err("wind series is empty".into());
        }
        if samples.iter().any(|(t, v)| !t.is_finite() || !v.is_finite()) {
            return Err("wind series contains a non-finite value".into());
        }
        if let Some(w) = samples.windows(2).find(|w| w[1].0 <= w[0].0) {
            return Err(format!("wind series times must increase strictly (at t = {})", w[1].0));
        }
        Ok(Self { samples })
    }

    /// Parses `time,speed_mps` rows after one header line.
    pub fn from_csv(text: &str) -> Result<Self, String> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
        let mut samples = Vec::new();
        for (k, rec) in rdr.records().enumerate() {
            let line = k + 2;
            let rec = rec.map_err(|e| format!("wind series line {line}: {e}"))?;
            if rec.len() != 2 {
                return Err(format!("wind series line {line}: expected 2 columns, found {}", rec.len()));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| format!("wind series line {line}: `{s}` is not a number"));
            samples.push((num(&rec[0])?, num(&rec[1])?));
        }
        Self::new(samples)
    }

    pub fn samples(&self) -> &[(f64, f64)] {
        &self.samples
    }

    /// Linear interpolation, held constant outside the sampled range.
    pub fn speed_at(&self, t: f64) -> f64 {
        let s = &self.samples;
        let k = s.partition_point(|&(ts, _)| ts <= t);
        if k == 0 {
            return s[0].1;
        }
        if k == s.len() {
            return s[k - 1].1;
        }
        let ((t0, v0), (t1, v1)) = (s[k - 1], s[k]);
        v0 + (v1 - v0) * (t - t0) / (t1 - t0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MappingKind {
    #[default]
    Linear,
    Cubic,
}

impl FromStr for MappingKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "linear" => Ok(Self::Linear),
            "cubic" => Ok(Self::Cubic),
            _ => Err(format!("unknown wind mapping `{s}` (expected linear or cubic)")),
        }
    }
}

/// Speed-to-current law: `gain·v` (linear) or `gain·(v/v_ref)³` (cubic),
/// clamped to `[0, i_max]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindMapping {
    pub kind: MappingKind,
    pub gain: f64,
    pub v_ref: f64,
    pub i_max: f64,
}

impl Default for WindMapping {
    fn default() -> Self {
        Self { kind: MappingKind::Linear, gain: 0.9607, v_ref: 12.0, i_max: 100.0 }
    }
}

impl WindMapping {
    pub fn current(&self, speed: f64) -> f64 {
        let i = match self.kind {
            MappingKind::Linear => self.gain * speed,
            MappingKind::Cubic => self.gain * (speed / self.v_ref).powi(3),
        };
        i.clamp(0.0, self.i_max)
    }
}

/// Active converter current at time `t`.
pub fn wind_current_at(series: &WindSeries, mapping: &WindMapping, t: f64) -> f64 {
    mapping.current(series.speed_at(t))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn profile() -> WindSeries {
        WindSeries::new(vec![(0.0, 13.2), (0.1, 13.9), (1.0, 11.2)]).unwrap()
    }

    #[test]
    fn held_after_last_sample() {
        let i = wind_current_at(&profile(), &WindMapping::default(), 3.0);
        assert_relative_eq!(i, 10.76, epsilon = 5e-3);
    }

    #[test]
    fn interpolates_between_samples() {
        let s = profile();
        assert_relative_eq!(s.speed_at(0.05), 13.55, epsilon = 1e-12);
        assert_relative_eq!(wind_current_at(&s, &WindMapping::default(), 0.05), 13.02, epsilon = 5e-3);
    }

    #[test]
    fn zero_speed_gives_zero_current() {
        let s = WindSeries::new(vec![(0.0, 0.0)]).unwrap();
        assert_eq!(wind_current_at(&s, &WindMapping::default(), 0.0), 0.0);
        let cubic = WindMapping { kind: MappingKind::Cubic, gain: 20.0, v_ref: 12.0, i_max: 30.0 };
        assert_eq!(wind_current_at(&s, &cubic, 0.0), 0.0);
    }

    #[test]
    fn cubic_mapping_and_clamp() {
        let m = WindMapping { kind: MappingKind::Cubic, gain: 20.0, v_ref: 12.0, i_max: 30.0 };
        assert_relative_eq!(m.current(12.0), 20.0);
        assert_relative_eq!(m.current(6.0), 2.5);
        assert_eq!(m.current(24.0), 30.0);
    }

    #[test]
    fn rejects_bad_series() {
        assert!(WindSeries::new(vec![]).is_err());
        assert!(WindSeries::new(vec![(0.0, 1.0), (0.0, 2.0)]).is_err());
        assert!(WindSeries::from_csv("time,speed_mps\n0,1\n0.1,x\n").unwrap_err().contains("line 3"));
    }

    #[test]
    fn parses_csv() {
        let s = WindSeries::from_csv("time,speed_mps\n0.0,13.2\n0.1, 13.9\n").unwrap();
        assert_eq!(s.samples(), &[(0.0, 13.2), (0.1, 13.9)]);
    }
}
