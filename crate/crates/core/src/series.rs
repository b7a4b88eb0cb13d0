//! Named time series of scalar diagnostics, with CSV persistence.
//!
//! The CSV layout is one JSON metadata line prefixed by `#`, then `t,value`
//! rows. Floats are printed in Rust's shortest round-trip form, so reading a
//! file back reproduces every sample bit for bit.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SeriesHeader {
    name: String,
    run_id: String,
    samples: usize,
}

/// A scalar observable sampled along a run. Sample times are strictly
/// increasing and all values are finite.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservableSeries {
    pub name: String,
    pub run_id: String,
    samples: Vec<(f64, f64)>,
}

impl ObservableSeries {
    pub fn new(name: impl Into<String>, run_id: impl Into<String>) -> ObservableSeries {
        ObservableSeries {
            name: name.into(),
            run_id: run_id.into(),
            samples: Vec::new(),
        }
    }

    pub fn from_samples(
        name: impl Into<String>,
        run_id: impl Into<String>,
        samples: impl IntoIterator<Item = (f64, f64)>,
    ) -> Result<ObservableSeries> {
        let mut s = ObservableSeries::new(name, run_id);
        for (t, v) in samples {
            s.push(t, v)?;
        }
        Ok(s)
    }

    pub fn push(&mut self, t: f64, value: f64) -> Result<()> {
        if !t.is_finite() || !value.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "series '{}': non-finite sample ({t}, {value})",
                self.name
            )));
        }
        if let Some(&(last_t, _)) = self.samples.last() {
            if t <= last_t {
                return Err(Error::InvalidArgument(format!(
                    "series '{}': time {t} does not increase past {last_t}",
                    self.name
                )));
            }
        }
        self.samples.push((t, value));
        Ok(())
    }

    pub fn samples(&self) -> &[(f64, f64)] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn first_t(&self) -> Option<f64> {
        self.samples.first().map(|&(t, _)| t)
    }

    pub fn last_t(&self) -> Option<f64> {
        self.samples.last().map(|&(t, _)| t)
    }

    /// Samples with `t0 <= t <= t1`.
    pub fn window(&self, t0: f64, t1: f64) -> Vec<(f64, f64)> {
        self.samples
            .iter()
            .copied()
            .filter(|&(t, _)| t >= t0 && t <= t1)
            .collect()
    }

    /// Applies `f` to every value, keeping times. Fails if `f` produces a
    /// non-finite value.
    pub fn map_values(&self, name: impl Into<String>, f: impl Fn(f64) -> f64) -> Result<ObservableSeries> {
        ObservableSeries::from_samples(
            name,
            self.run_id.clone(),
            self.samples.iter().map(|&(t, v)| (t, f(v))),
        )
    }

    pub fn write_csv(&self, w: &mut impl Write) -> Result<()> {
        let header = SeriesHeader {
            name: self.name.clone(),
            run_id: self.run_id.clone(),
            samples: self.samples.len(),
        };
        writeln!(w, "# {}", serde_json::to_string(&header)?)?;
        writeln!(w, "t,value")?;
        for &(t, v) in &self.samples {
            writeln!(w, "{t},{v}")?;
        }
        Ok(())
    }

    pub fn read_csv(r: impl BufRead) -> Result<ObservableSeries> {
        let mut lines = r.lines();
        let head = lines
            .next()
            .ok_or_else(|| Error::Format("empty series file".into()))??;
        let json = head
            .strip_prefix("# ")
            .or_else(|| head.strip_prefix('#'))
            .ok_or_else(|| Error::Format("series file lacks the '#' header line".into()))?;
        let header: SeriesHeader = serde_json::from_str(json)?;
        let mut series = ObservableSeries::new(header.name, header.run_id);
        for line in lines {
            let line = line?;
            if line.is_empty() || line == "t,value" {
                continue;
            }
            let (ts, vs) = line
                .split_once(',')
                .ok_or_else(|| Error::Format(format!("bad series row '{line}'")))?;
            let t: f64 = ts
                .parse()
                .map_err(|_| Error::Format(format!("bad time '{ts}'")))?;
            let v: f64 = vs
                .parse()
                .map_err(|_| Error::Format(format!("bad value '{vs}'")))?;
            series.push(t, v)?;
        }
        if series.len() != header.samples {
            return Err(Error::Format(format!(
                "series '{}' header promises {} samples, file has {}",
                series.name,
                header.samples,
                series.len()
            )));
        }
        Ok(series)
    }
}
