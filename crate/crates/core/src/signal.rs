//! Signal types, local-extrema detection and the classical envelope
//! interpolators.
//!
//! Extrema indices are carried as `i64` so that mirrored boundary extrema may
//! sit before the first sample or past the last one.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default acquisition rate of the recording hardware, in Hz.
pub const DEFAULT_RATE_HZ: f64 = 250.0;

/// Uniformly sampled real-valued signal (microvolts).
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    samples: Vec<f64>,
    rate: f64,
}

impl TimeSeries {
    /// Validates `rate > 0`, at least two samples and finiteness.
    pub fn new(samples: Vec<f64>, rate: f64) -> Result<Self> {
        if !(rate.is_finite() && rate > 0.0) {
            return Err(Error::InvalidSeries(format!("rate must be positive, got {rate}")));
        }
        if samples.len() < 2 {
            return Err(Error::TooShort {
                needed: 2,
                found: samples.len(),
            });
        }
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidSeries(format!("sample {i} is not finite")));
        }
        Ok(Self { samples, rate })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.rate
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    /// A new series with this one's rate.
    pub fn with_samples(&self, samples: Vec<f64>) -> Result<Self> {
        Self::new(samples, self.rate)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExtremaKind {
    Maxima,
    Minima,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Upper,
    Lower,
    Mean,
}

/// Peak positions and values of one kind.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtremaSet {
    pub indices: Vec<i64>,
    pub values: Vec<f64>,
    pub kind: ExtremaKind,
}

impl ExtremaSet {
    pub fn empty(kind: ExtremaKind) -> Self {
        Self {
            indices: Vec::new(),
            values: Vec::new(),
            kind,
        }
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Knot abscissae for interpolation.
    pub fn positions(&self) -> Vec<f64> {
        self.indices.iter().map(|&i| i as f64).collect()
    }
}

/// Dense envelope aligned to the source window grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Envelope {
    pub values: Vec<f64>,
    pub polarity: Polarity,
}

impl Envelope {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Local maxima and minima of `ts`; see [`extrema_of`].
pub fn find_local_extrema(ts: &TimeSeries) -> (ExtremaSet, ExtremaSet) {
    extrema_of(ts.samples())
}

/// Interior local extrema with plateau collapsing.
///
/// A run of equal values whose left and right neighbours are both strictly
/// lower (higher) yields one maximum (minimum) at the run midpoint, rounded
/// down. Endpoints are never extrema.
pub fn extrema_of(samples: &[f64]) -> (ExtremaSet, ExtremaSet) {
    let mut maxima = ExtremaSet::empty(ExtremaKind::Maxima);
    let mut minima = ExtremaSet::empty(ExtremaKind::Minima);
    let n = samples.len();
    if n < 3 {
        return (maxima, minima);
    }
    let mut i = 1;
    while i < n - 1 {
        let v = samples[i];
        let prev = samples[i - 1];
        if v == prev {
            i += 1;
            continue;
        }
        let mut end = i;
        while end + 1 < n && samples[end + 1] == v {
            end += 1;
        }
        if end + 1 < n {
            let next = samples[end + 1];
            let mid = ((i + end) / 2) as i64;
            if v > prev && v > next {
                maxima.indices.push(mid);
                maxima.values.push(v);
            } else if v < prev && v < next {
                minima.indices.push(mid);
                minima.values.push(v);
            }
        }
        i = end + 1;
    }
    (maxima, minima)
}

/// Mirror `n_mirror` extrema per side about the first and last sample.
///
/// Reflected copies keep the value of the extremum they mirror. When a set
/// has fewer than `n_mirror` entries, all of them are mirrored.
pub fn extend_boundaries(
    len: usize,
    maxima: &ExtremaSet,
    minima: &ExtremaSet,
    n_mirror: usize,
) -> Result<(ExtremaSet, ExtremaSet)> {
    if maxima.len() < 2 || minima.len() < 2 {
        return Err(Error::InsufficientExtrema {
            needed: 2,
            maxima: maxima.len(),
            minima: minima.len(),
        });
    }
    let last = len as i64 - 1;
    Ok((mirror(maxima, last, n_mirror), mirror(minima, last, n_mirror)))
}

fn mirror(set: &ExtremaSet, last: i64, n_mirror: usize) -> ExtremaSet {
    let m = n_mirror.min(set.len());
    let total = set.len() + 2 * m;
    let mut indices = Vec::with_capacity(total);
    let mut values = Vec::with_capacity(total);
    for k in (0..m).rev() {
        indices.push(-set.indices[k]);
        values.push(set.values[k]);
    }
    indices.extend_from_slice(&set.indices);
    values.extend_from_slice(&set.values);
    for k in (set.len() - m..set.len()).rev() {
        indices.push(2 * last - set.indices[k]);
        values.push(set.values[k]);
    }
    ExtremaSet {
        indices,
        values,
        kind: set.kind,
    }
}

fn check_knots(knots_x: &[f64], knots_y: &[f64], needed: usize) -> Result<()> {
    if knots_x.len() != knots_y.len() {
        return Err(Error::LengthMismatch {
            expected: knots_x.len(),
            found: knots_y.len(),
        });
    }
    if knots_x.len() < needed {
        return Err(Error::TooFewKnots {
            needed,
            found: knots_x.len(),
        });
    }
    for (i, w) in knots_x.windows(2).enumerate() {
        if !(w[1] > w[0]) {
            return Err(Error::NonMonotoneKnots { index: i + 1 });
        }
    }
    Ok(())
}

/// Index `i` with `knots[i] <= x < knots[i + 1]`, clamped to a valid segment.
fn segment(knots: &[f64], x: f64) -> usize {
    let upper = knots.partition_point(|&k| k <= x);
    upper.saturating_sub(1).min(knots.len() - 2)
}

/// Piecewise-linear interpolation; queries outside the knot span clamp to the
/// nearest end value.
pub fn interpolate_linear(knots_x: &[f64], knots_y: &[f64], grid: &[f64]) -> Result<Vec<f64>> {
    check_knots(knots_x, knots_y, 2)?;
    let first = knots_x[0];
    let last = knots_x[knots_x.len() - 1];
    Ok(grid
        .iter()
        .map(|&x| {
            if x <= first {
                knots_y[0]
            } else if x >= last {
                knots_y[knots_y.len() - 1]
            } else {
                let i = segment(knots_x, x);
                let h = knots_x[i + 1] - knots_x[i];
                let a = (knots_x[i + 1] - x) / h;
                let b = 1.0 - a;
                a * knots_y[i] + b * knots_y[i + 1]
            }
        })
        .collect())
}

/// Second derivatives of the natural cubic spline through the knots
/// (zero at both ends), by the Thomas algorithm.
pub fn natural_spline_second_derivatives(knots_x: &[f64], knots_y: &[f64]) -> Vec<f64> {
    let n = knots_x.len();
    let mut m = vec![0.0; n];
    if n < 3 {
        return m;
    }
    // Unknowns m[1..n-1]; row i: h[i-1] m[i-1] + 2(h[i-1]+h[i]) m[i] + h[i] m[i+1] = r[i].
    let inner = n - 2;
    let mut diag = vec![0.0; inner];
    let mut rhs = vec![0.0; inner];
    let mut upper = vec![0.0; inner];
    for k in 0..inner {
        let i = k + 1;
        let h0 = knots_x[i] - knots_x[i - 1];
        let h1 = knots_x[i + 1] - knots_x[i];
        diag[k] = 2.0 * (h0 + h1);
        upper[k] = h1;
        rhs[k] = 6.0 * ((knots_y[i + 1] - knots_y[i]) / h1 - (knots_y[i] - knots_y[i - 1]) / h0);
    }
    for k in 1..inner {
        let lower = knots_x[k + 1] - knots_x[k];
        let w = lower / diag[k - 1];
        diag[k] -= w * upper[k - 1];
        rhs[k] -= w * rhs[k - 1];
    }
    m[inner] = rhs[inner - 1] / diag[inner - 1];
    for k in (0..inner - 1).rev() {
        m[k + 1] = (rhs[k] - upper[k] * m[k + 2]) / diag[k];
    }
    m
}

/// Natural cubic spline interpolation with the same clamping rule as
/// [`interpolate_linear`].
pub fn interpolate_cubic_spline(
    knots_x: &[f64],
    knots_y: &[f64],
    grid: &[f64],
) -> Result<Vec<f64>> {
    check_knots(knots_x, knots_y, 3)?;
    let m = natural_spline_second_derivatives(knots_x, knots_y);
    let first = knots_x[0];
    let last = knots_x[knots_x.len() - 1];
    Ok(grid
        .iter()
        .map(|&x| {
            if x <= first {
                knots_y[0]
            } else if x >= last {
                knots_y[knots_y.len() - 1]
            } else {
                let i = segment(knots_x, x);
                let h = knots_x[i + 1] - knots_x[i];
                let a = (knots_x[i + 1] - x) / h;
                let b = 1.0 - a;
                a * knots_y[i]
                    + b * knots_y[i + 1]
                    + ((a * a * a - a) * m[i] + (b * b * b - b) * m[i + 1]) * (h * h) / 6.0
            }
        })
        .collect())
}

/// Elementwise average of an upper and a lower envelope.
pub fn mean_of_envelopes(upper: &Envelope, lower: &Envelope) -> Result<Envelope> {
    if upper.len() != lower.len() {
        return Err(Error::LengthMismatch {
            expected: upper.len(),
            found: lower.len(),
        });
    }
    Ok(Envelope {
        values: upper
            .values
            .iter()
            .zip(&lower.values)
            .map(|(u, l)| (u + l) / 2.0)
            .collect(),
        polarity: Polarity::Mean,
    })
}

/// Window start positions over a record, plus the inverse overlap-average.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Windowing {
    pub total_len: usize,
    pub window_len: usize,
    pub starts: Vec<usize>,
}

impl Windowing {
    /// Starts at `0, hop, 2·hop, …`; a final window flush with the end is
    /// added when the hop grid does not reach it.
    pub fn plan(total_len: usize, window_len: usize, hop: usize) -> Result<Self> {
        if hop == 0 {
            return Err(Error::InvalidParameter("hop must be at least 1".into()));
        }
        if window_len == 0 {
            return Err(Error::InvalidParameter("window length must be at least 1".into()));
        }
        if window_len > total_len {
            return Err(Error::WindowTooLong {
                window_len,
                len: total_len,
            });
        }
        let mut starts: Vec<usize> = (0..=total_len - window_len).step_by(hop).collect();
        let last = total_len - window_len;
        if *starts.last().expect("at least one start") != last {
            starts.push(last);
        }
        Ok(Self {
            total_len,
            window_len,
            starts,
        })
    }

    pub fn len(&self) -> usize {
        self.starts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.starts.is_empty()
    }

    pub fn slices<'a>(&'a self, samples: &'a [f64]) -> impl Iterator<Item = &'a [f64]> + 'a {
        self.starts
            .iter()
            .map(move |&s| &samples[s..s + self.window_len])
    }

    /// Overlap-average of per-window sequences back onto the record grid.
    ///
    /// Uses a running mean in window order, so equal contributions reproduce
    /// their value exactly.
    pub fn reassemble<W: AsRef<[f64]>>(&self, windows: &[W]) -> Result<Vec<f64>> {
        if windows.len() != self.starts.len() {
            return Err(Error::LengthMismatch {
                expected: self.starts.len(),
                found: windows.len(),
            });
        }
        let mut out = vec![0.0; self.total_len];
        let mut counts = vec![0u32; self.total_len];
        for (&start, w) in self.starts.iter().zip(windows) {
            let w = w.as_ref();
            if w.len() != self.window_len {
                return Err(Error::LengthMismatch {
                    expected: self.window_len,
                    found: w.len(),
                });
            }
            for (k, &v) in w.iter().enumerate() {
                let j = start + k;
                counts[j] += 1;
                if counts[j] == 1 {
                    out[j] = v;
                } else {
                    out[j] += (v - out[j]) / counts[j] as f64;
                }
            }
        }
        Ok(out)
    }
}

/// Cut `ts` into overlapping windows; returns the windows and the plan that
/// reassembles them.
pub fn window_signal(
    ts: &TimeSeries,
    window_len: usize,
    hop: usize,
) -> Result<(Vec<TimeSeries>, Windowing)> {
    let plan = Windowing::plan(ts.len(), window_len, hop)?;
    let windows = plan
        .slices(ts.samples())
        .map(|w| TimeSeries::new(w.to_vec(), ts.rate()))
        .collect::<Result<Vec<_>>>()?;
    Ok((windows, plan))
}
