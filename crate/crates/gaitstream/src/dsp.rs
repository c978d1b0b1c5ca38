//! Signal conditioning: Butterworth band-pass design and application (causal
//! and zero-phase), polynomial gap interpolation, and robust outlier removal.

use nalgebra::{Complex, DMatrix, DVector};
use thiserror::Error;

type C64 = Complex<f64>;

#[derive(Debug, Error)]
pub enum DspError {
    #[error("design error: {0}")]
    Design(String),
    #[error("input too short: {0}")]
    Length(String),
    #[error("non-finite input at index {0}")]
    Input(usize),
    #[error("interpolation error: {0}")]
    Interpolation(String),
    #[error("invalid argument: {0}")]
    Argument(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterDesign {
    pub low_hz: f64,
    pub high_hz: f64,
    /// Butterworth prototype order; the digital band-pass has 2x this many poles.
    pub order: u32,
    pub rate_hz: f64,
}

/// Normalized IIR coefficients (`a[0] == 1`) for the difference equation
/// `a[0] y[n] = sum b[k] x[n-k] - sum a[k] y[n-k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterCoefficients {
    pub b: Vec<f64>,
    pub a: Vec<f64>,
    pub design: FilterDesign,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FilterMode {
    Causal,
    ZeroPhase,
}

impl FilterCoefficients {
    /// Number of delay elements (the digital filter order).
    pub fn state_len(&self) -> usize {
        self.a.len().max(self.b.len()) - 1
    }

    /// Complex frequency response H(e^{j 2 pi f / fs}) evaluated from the
    /// coefficients.
    pub fn response_at(&self, f_hz: f64) -> C64 {
        let w = 2.0 * std::f64::consts::PI * f_hz / self.design.rate_hz;
        let num = horner_exp(&self.b, w);
        let den = horner_exp(&self.a, w);
        num / den
    }

    pub fn gain_db_at(&self, f_hz: f64) -> f64 {
        20.0 * self.response_at(f_hz).norm().log10()
    }

    /// Poles of the transfer function (roots of the feedback polynomial).
    pub fn poles(&self) -> Vec<C64> {
        polynomial_roots(&self.a)
    }

    pub fn is_stable(&self) -> bool {
        self.poles().iter().all(|p| p.norm() <= 1.0 - 1e-8)
    }
}

fn horner_exp(coeffs: &[f64], w: f64) -> C64 {
    // sum_k c[k] e^{-jwk}
    let z = C64::new(0.0, -w).exp();
    coeffs.iter().rev().fold(C64::new(0.0, 0.0), |acc, &c| acc * z + c)
}

/// Expands a monic polynomial from its roots; returns real coefficients
/// (roots must come in conjugate pairs).
fn poly_from_roots(roots: &[C64]) -> Vec<f64> {
    let mut coeffs = vec![C64::new(1.0, 0.0)];
    for r in roots {
        coeffs.push(C64::new(0.0, 0.0));
        for i in (1..coeffs.len()).rev() {
            let prev = coeffs[i - 1];
            coeffs[i] -= r * prev;
        }
    }
    coeffs.into_iter().map(|c| c.re).collect()
}

/// Roots of a real polynomial via companion-matrix eigenvalues.
fn polynomial_roots(coeffs: &[f64]) -> Vec<C64> {
    let n = coeffs.len() - 1;
    if n == 0 {
        return Vec::new();
    }
    let mut m = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        m[(0, i)] = -coeffs[i + 1] / coeffs[0];
    }
    for i in 1..n {
        m[(i, i - 1)] = 1.0;
    }
    m.complex_eigenvalues().iter().copied().collect()
}

/// Designs a digital Butterworth band-pass via the analog prototype, low-pass
/// to band-pass transform, and bilinear transform with frequency pre-warping.
pub fn design_bandpass(low_hz: f64, high_hz: f64, order: u32, rate_hz: f64) -> Result<FilterCoefficients, DspError> {
    if low_hz <= 0.0 {
        return Err(DspError::Design(format!("low cut-off {low_hz} Hz must be positive")));
    }
    if high_hz >= rate_hz / 2.0 {
        return Err(DspError::Design(format!("high cut-off {high_hz} Hz must be below Nyquist ({} Hz)", rate_hz / 2.0)));
    }
    if low_hz >= high_hz {
        return Err(DspError::Design(format!("low cut-off {low_hz} Hz must be below high cut-off {high_hz} Hz")));
    }
    if !matches!(order, 2 | 4 | 6 | 8) {
        return Err(DspError::Design(format!("order {order} not in {{2, 4, 6, 8}}")));
    }
    let n = order as usize;

    // Pre-warped analog edge frequencies.
    let fs2 = 2.0 * rate_hz;
    let w1 = fs2 * (std::f64::consts::PI * low_hz / rate_hz).tan();
    let w2 = fs2 * (std::f64::consts::PI * high_hz / rate_hz).tan();
    let bw = w2 - w1;
    let w0 = (w1 * w2).sqrt();

    // Butterworth low-pass prototype poles on the unit circle in s.
    let proto: Vec<C64> = (1..=n)
        .map(|k| {
            let theta = std::f64::consts::PI * (2 * k as i32 + n as i32 - 1) as f64 / (2.0 * n as f64);
            C64::new(theta.cos(), theta.sin())
        })
        .collect();

    // Low-pass -> band-pass: each prototype pole maps to a conjugate pair.
    let mut s_poles = Vec::with_capacity(2 * n);
    for p in &proto {
        let s = p * (bw / 2.0);
        let d = (s * s - w0 * w0).sqrt();
        s_poles.push(s + d);
        s_poles.push(s - d);
    }
    // n analog zeros at s = 0; overall analog gain bw^n.
    let k_analog = bw.powi(n as i32);

    // Bilinear transform.
    let fs2c = C64::new(fs2, 0.0);
    let z_poles: Vec<C64> = s_poles.iter().map(|s| (fs2c + s) / (fs2c - s)).collect();
    // Analog zeros at 0 map to z = 1; the n zeros at infinity map to z = -1.
    let mut z_zeros = vec![C64::new(1.0, 0.0); n];
    z_zeros.extend(std::iter::repeat(C64::new(-1.0, 0.0)).take(n));

    // Gain: k_analog * prod(fs2 - s_zeros) / prod(fs2 - s_poles), zeros at 0.
    let num: C64 = (0..n).fold(C64::new(k_analog, 0.0), |acc, _| acc * fs2c);
    let den: C64 = s_poles.iter().fold(C64::new(1.0, 0.0), |acc, s| acc * (fs2c - s));
    let k_digital = (num / den).re;

    let a = poly_from_roots(&z_poles);
    let b: Vec<f64> = poly_from_roots(&z_zeros).into_iter().map(|c| c * k_digital).collect();

    let coefs = FilterCoefficients { b, a, design: FilterDesign { low_hz, high_hz, order, rate_hz } };
    debug_assert!((coefs.a[0] - 1.0).abs() < 1e-12);
    Ok(coefs)
}

/// Designs a digital Butterworth low-pass (used for optional IMU smoothing).
pub fn design_lowpass(cut_hz: f64, order: u32, rate_hz: f64) -> Result<FilterCoefficients, DspError> {
    if cut_hz <= 0.0 || cut_hz >= rate_hz / 2.0 {
        return Err(DspError::Design(format!("cut-off {cut_hz} Hz must lie in (0, Nyquist)")));
    }
    if !matches!(order, 2 | 4 | 6 | 8) {
        return Err(DspError::Design(format!("order {order} not in {{2, 4, 6, 8}}")));
    }
    let n = order as usize;
    let fs2 = 2.0 * rate_hz;
    let wc = fs2 * (std::f64::consts::PI * cut_hz / rate_hz).tan();
    let s_poles: Vec<C64> = (1..=n)
        .map(|k| {
            let theta = std::f64::consts::PI * (2 * k as i32 + n as i32 - 1) as f64 / (2.0 * n as f64);
            C64::new(theta.cos(), theta.sin()) * wc
        })
        .collect();
    let fs2c = C64::new(fs2, 0.0);
    let z_poles: Vec<C64> = s_poles.iter().map(|s| (fs2c + s) / (fs2c - s)).collect();
    let z_zeros = vec![C64::new(-1.0, 0.0); n];
    let k_analog = wc.powi(n as i32);
    let den: C64 = s_poles.iter().fold(C64::new(1.0, 0.0), |acc, s| acc * (fs2c - s));
    let k_digital = (C64::new(k_analog, 0.0) / den).re;
    let a = poly_from_roots(&z_poles);
    let b: Vec<f64> = poly_from_roots(&z_zeros).into_iter().map(|c| c * k_digital).collect();
    Ok(FilterCoefficients { b, a, design: FilterDesign { low_hz: 0.0, high_hz: cut_hz, order, rate_hz } })
}

/// Per-channel delay line for causal streaming application (direct form II
/// transposed). Feeding a signal in arbitrary chunk sizes produces the same
/// output, bit-exact, as one one-shot pass.
#[derive(Debug, Clone)]
pub struct FilterState {
    b: Vec<f64>,
    a: Vec<f64>,
    z: Vec<f64>,
}

impl FilterState {
    pub fn new(coefs: &FilterCoefficients) -> FilterState {
        let n = coefs.state_len() + 1;
        let mut b = coefs.b.clone();
        let mut a = coefs.a.clone();
        b.resize(n, 0.0);
        a.resize(n, 0.0);
        FilterState { b, a, z: vec![0.0; n - 1] }
    }

    pub fn reset(&mut self) {
        self.z.iter_mut().for_each(|v| *v = 0.0);
    }

    fn with_initial(coefs: &FilterCoefficients, z: Vec<f64>) -> FilterState {
        let mut s = FilterState::new(coefs);
        s.z = z;
        s
    }

    pub fn process_sample(&mut self, x: f64) -> f64 {
        let y = self.b[0] * x + self.z[0];
        let m = self.z.len();
        for i in 0..m - 1 {
            self.z[i] = self.b[i + 1] * x + self.z[i + 1] - self.a[i + 1] * y;
        }
        self.z[m - 1] = self.b[m] * x - self.a[m] * y;
        y
    }

    pub fn process(&mut self, x: &[f64], out: &mut Vec<f64>) {
        out.reserve(x.len());
        for &v in x {
            out.push(self.process_sample(v));
        }
    }
}

/// Steady-state delay-line values for a unit step input, used to suppress
/// start-up transients in zero-phase filtering.
fn step_initial_state(coefs: &FilterCoefficients) -> Result<Vec<f64>, DspError> {
    let n = coefs.state_len() + 1;
    let mut b = coefs.b.clone();
    let mut a = coefs.a.clone();
    b.resize(n, 0.0);
    a.resize(n, 0.0);
    let m = n - 1;
    // Solve (I - A^T) zi = B with A the companion matrix of `a` and
    // B = b[1:] - a[1:] * b[0].
    let mut mat = DMatrix::<f64>::identity(m, m);
    for col in 0..m {
        mat[(col, 0)] += a[col + 1];
    }
    for row in 0..m - 1 {
        mat[(row, row + 1)] -= 1.0;
    }
    let rhs = DVector::from_iterator(m, (0..m).map(|i| b[i + 1] - a[i + 1] * b[0]));
    mat.lu()
        .solve(&rhs)
        .map(|v| v.iter().copied().collect())
        .ok_or_else(|| DspError::Design("singular system while computing filter initial conditions".into()))
}

fn run_causal(coefs: &FilterCoefficients, x: &[f64], zi_scale: Option<(&[f64], f64)>) -> Vec<f64> {
    let mut state = match zi_scale {
        Some((zi, s)) => FilterState::with_initial(coefs, zi.iter().map(|v| v * s).collect()),
        None => FilterState::new(coefs),
    };
    let mut out = Vec::with_capacity(x.len());
    state.process(x, &mut out);
    out
}

/// Applies the filter over a whole sequence. Causal mode is the direct-form
/// recurrence from zero state; zero-phase mode is forward-backward application
/// with odd-reflection edge padding of 3x the filter order.
pub fn apply_filter(x: &[f64], coefs: &FilterCoefficients, mode: FilterMode) -> Result<Vec<f64>, DspError> {
    if let Some(i) = x.iter().position(|v| !v.is_finite()) {
        return Err(DspError::Input(i));
    }
    match mode {
        FilterMode::Causal => Ok(run_causal(coefs, x, None)),
        FilterMode::ZeroPhase => {
            let padlen = 3 * coefs.state_len();
            if x.len() <= padlen {
                return Err(DspError::Length(format!(
                    "zero-phase filtering needs more than {padlen} samples, got {}",
                    x.len()
                )));
            }
            let zi = step_initial_state(coefs)?;

            // Odd reflection about both endpoints.
            let mut ext = Vec::with_capacity(x.len() + 2 * padlen);
            for i in (1..=padlen).rev() {
                ext.push(2.0 * x[0] - x[i]);
            }
            ext.extend_from_slice(x);
            let n = x.len();
            for i in 1..=padlen {
                ext.push(2.0 * x[n - 1] - x[n - 1 - i]);
            }

            let fwd = run_causal(coefs, &ext, Some((&zi, ext[0])));
            let rev: Vec<f64> = fwd.iter().rev().copied().collect();
            let bwd = run_causal(coefs, &rev, Some((&zi, rev[0])));
            let mut y: Vec<f64> = bwd.iter().rev().copied().collect();
            y.drain(..padlen);
            y.truncate(n);
            Ok(y)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InterpolationResult {
    pub samples: Vec<f64>,
    /// Interior gaps longer than `max_gap`, left unfilled as `(start, end)`
    /// index ranges (end exclusive).
    pub unfilled: Vec<(usize, usize)>,
}

/// Fills gaps by least-squares polynomial fit of degree `poly_order` to the
/// 2*(poly_order+1) nearest valid samples, split evenly across the gap where
/// available. Interior gaps longer than `max_gap` are reported instead of
/// filled; edge gaps are filled by nearest-value extension.
pub fn interpolate_gaps(
    x: &[f64],
    gap_mask: &[bool],
    poly_order: usize,
    max_gap: usize,
) -> Result<InterpolationResult, DspError> {
    if poly_order < 1 {
        return Err(DspError::Argument("poly_order must be >= 1".into()));
    }
    if x.len() != gap_mask.len() {
        return Err(DspError::Argument("samples and gap_mask lengths differ".into()));
    }
    let valid_count = gap_mask.iter().filter(|&&g| !g).count();
    if valid_count < poly_order + 1 {
        return Err(DspError::Interpolation(format!(
            "need at least {} valid samples for a degree-{poly_order} fit, have {valid_count}",
            poly_order + 1
        )));
    }

    let mut out = x.to_vec();
    let mut unfilled = Vec::new();
    let n = x.len();
    let mut i = 0;
    while i < n {
        if !gap_mask[i] {
            i += 1;
            continue;
        }
        let start = i;
        while i < n && gap_mask[i] {
            i += 1;
        }
        let end = i; // gap is [start, end)

        let has_left = start > 0;
        let has_right = end < n;
        if !has_left || !has_right {
            // Edge gap: nearest-value extension.
            let fill = if has_left { out[start - 1] } else { x[end] };
            out[start..end].iter_mut().for_each(|v| *v = fill);
            continue;
        }
        if end - start > max_gap {
            unfilled.push((start, end));
            continue;
        }

        let k = 2 * (poly_order + 1);
        let half = k / 2;
        let left: Vec<usize> = (0..start).rev().filter(|&j| !gap_mask[j]).take(half).collect();
        let right: Vec<usize> = (end..n).filter(|&j| !gap_mask[j]).take(k - left.len()).collect();
        let mut support: Vec<usize> = left;
        if support.len() + right.len() < k {
            // Left side was short; extend further on the left if possible.
            let have = support.len() + right.len();
            let extra: Vec<usize> = (0..*support.last().unwrap_or(&start))
                .rev()
                .filter(|&j| !gap_mask[j] && !support.contains(&j))
                .take(k - have)
                .collect();
            support.extend(extra);
        }
        support.extend(right);
        support.sort_unstable();

        let coeffs = fit_polynomial(&support, &out, poly_order, start as f64)?;
        for idx in start..end {
            out[idx] = eval_polynomial(&coeffs, idx as f64 - start as f64);
        }
    }
    Ok(InterpolationResult { samples: out, unfilled })
}

fn fit_polynomial(support: &[usize], x: &[f64], degree: usize, center: f64) -> Result<Vec<f64>, DspError> {
    let degree = degree.min(support.len().saturating_sub(1));
    let rows = support.len();
    let cols = degree + 1;
    let mut m = DMatrix::<f64>::zeros(rows, cols);
    let mut rhs = DVector::<f64>::zeros(rows);
    for (r, &idx) in support.iter().enumerate() {
        let t = idx as f64 - center;
        let mut p = 1.0;
        for c in 0..cols {
            m[(r, c)] = p;
            p *= t;
        }
        rhs[r] = x[idx];
    }
    let svd = m.svd(true, true);
    svd.solve(&rhs, 1e-12)
        .map(|v| v.iter().copied().collect())
        .map_err(|e| DspError::Interpolation(format!("polynomial fit failed: {e}")))
}

fn eval_polynomial(coeffs: &[f64], t: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &c| acc * t + c)
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutlierResult {
    pub samples: Vec<f64>,
    pub mask: Vec<bool>,
    /// Set when MAD was zero and the absolute fallback threshold was used.
    pub degenerate_scale: bool,
}

/// Flags samples whose robust z-score (|x - median| / (1.4826 * MAD)) exceeds
/// `threshold_sigma` and replaces them by linear interpolation.
pub fn remove_outliers(x: &[f64], threshold_sigma: f64) -> Result<OutlierResult, DspError> {
    if threshold_sigma <= 0.0 {
        return Err(DspError::Argument("threshold_sigma must be positive".into()));
    }
    if x.len() < 16 {
        return Err(DspError::Length(format!("outlier removal needs at least 16 samples, got {}", x.len())));
    }
    let med = median(x);
    let deviations: Vec<f64> = x.iter().map(|v| (v - med).abs()).collect();
    let mad = median(&deviations);

    let mut degenerate_scale = false;
    let mask: Vec<bool> = if mad > 0.0 {
        let scale = 1.4826 * mad;
        deviations.iter().map(|&d| d > threshold_sigma * scale).collect()
    } else if deviations.iter().any(|&d| d > 0.0) {
        degenerate_scale = true;
        deviations.iter().map(|&d| d > threshold_sigma).collect()
    } else {
        vec![false; x.len()]
    };

    let samples = if mask.iter().any(|&m| m) {
        interpolate_gaps(x, &mask, 1, x.len())?.samples
    } else {
        x.to_vec()
    };
    Ok(OutlierResult { samples, mask, degenerate_scale })
}

fn median(x: &[f64]) -> f64 {
    let mut v = x.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn emg_bandpass() -> FilterCoefficients {
        design_bandpass(20.0, 450.0, 4, 2000.0).unwrap()
    }

    fn assert_close(a: f64, b: f64, tol: f64, what: &str) {
        assert!((a - b).abs() <= tol, "{what}: {a} vs {b}");
    }

    #[test]
    fn bandpass_matches_reference_coefficients() {
        // Independently computed with a standard filter-design toolbox for
        // a 4th-order 20-450 Hz Butterworth band-pass at 2 kHz.
        let expect_b = [
            5.8512708571376006e-2,
            0.0,
            -2.3405083428550402e-1,
            0.0,
            3.5107625142825605e-1,
            0.0,
            -2.3405083428550402e-1,
            0.0,
            5.8512708571376006e-2,
        ];
        let expect_a = [
            1.0,
            -4.3093689333490230e0,
            7.9319108380991485e0,
            -8.5500383175294523e0,
            6.3010579815574861e0,
            -3.2891058290671884e0,
            1.0961784703741042e0,
            -2.0421465014650089e-1,
            2.3597414177225239e-2,
        ];
        let c = emg_bandpass();
        assert_eq!(c.b.len(), 9);
        assert_eq!(c.a.len(), 9);
        for (got, want) in c.b.iter().zip(expect_b) {
            assert_close(*got, want, 1e-10, "b coefficient");
        }
        for (got, want) in c.a.iter().zip(expect_a) {
            assert_close(*got, want, 1e-9, "a coefficient");
        }
    }

    #[test]
    fn bandpass_gain_profile() {
        let c = emg_bandpass();
        assert!(c.gain_db_at(100.0).abs() <= 1.0, "passband gain {}", c.gain_db_at(100.0));
        assert!(c.gain_db_at(5.0) <= -30.0, "low stopband gain {}", c.gain_db_at(5.0));
        assert!(c.gain_db_at(900.0) <= -30.0, "high stopband gain {}", c.gain_db_at(900.0));
    }

    #[test]
    fn designed_filters_are_stable() {
        for order in [2u32, 4, 6, 8] {
            let c = design_bandpass(20.0, 450.0, order, 2000.0).unwrap();
            assert!(c.is_stable(), "order {order} unstable");
        }
        assert!(design_lowpass(20.0, 4, 200.0).unwrap().is_stable());
    }

    #[test]
    fn design_rejects_bad_edges() {
        assert!(matches!(design_bandpass(20.0, 1001.0, 4, 2000.0), Err(DspError::Design(_))));
        assert!(matches!(design_bandpass(0.0, 450.0, 4, 2000.0), Err(DspError::Design(_))));
        assert!(matches!(design_bandpass(450.0, 20.0, 4, 2000.0), Err(DspError::Design(_))));
        assert!(matches!(design_bandpass(20.0, 450.0, 3, 2000.0), Err(DspError::Design(_))));
    }

    #[test]
    fn dc_is_rejected_and_zeros_pass_through() {
        let c = emg_bandpass();
        let dc = vec![1.5; 4000];
        let y = apply_filter(&dc, &c, FilterMode::Causal).unwrap();
        let tail_rms = (y[3000..].iter().map(|v| v * v).sum::<f64>() / 1000.0).sqrt();
        assert!(tail_rms < 1e-6, "DC leak {tail_rms}");

        let zeros = vec![0.0; 1000];
        assert!(apply_filter(&zeros, &c, FilterMode::Causal).unwrap().iter().all(|&v| v == 0.0));
        assert!(apply_filter(&zeros, &c, FilterMode::ZeroPhase).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn passband_sine_amplitude_preserved() {
        let c = emg_bandpass();
        let rate = 2000.0;
        let x: Vec<f64> = (0..4000).map(|i| (2.0 * std::f64::consts::PI * 100.0 * i as f64 / rate).sin()).collect();
        let y = apply_filter(&x, &c, FilterMode::Causal).unwrap();
        // Discard the first 0.5 s, then measure amplitude.
        let amp = y[1000..].iter().fold(0.0f64, |m, &v| m.max(v.abs()));
        let db = 20.0 * amp.log10();
        assert!(db.abs() <= 1.0, "steady-state amplitude {amp} ({db} dB)");
    }

    #[test]
    fn filter_is_linear() {
        let c = emg_bandpass();
        let x: Vec<f64> = (0..600).map(|i| ((i * 7919) % 101) as f64 / 50.0 - 1.0).collect();
        let y: Vec<f64> = (0..600).map(|i| ((i * 104729) % 97) as f64 / 48.0 - 1.0).collect();
        let (alpha, beta) = (1.7, -0.4);
        for mode in [FilterMode::Causal, FilterMode::ZeroPhase] {
            let mix: Vec<f64> = x.iter().zip(&y).map(|(a, b)| alpha * a + beta * b).collect();
            let f_mix = apply_filter(&mix, &c, mode).unwrap();
            let fx = apply_filter(&x, &c, mode).unwrap();
            let fy = apply_filter(&y, &c, mode).unwrap();
            let scale = f_mix.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
            for i in 0..x.len() {
                let expect = alpha * fx[i] + beta * fy[i];
                assert!((f_mix[i] - expect).abs() <= 1e-9 * scale, "nonlinearity at {i}");
            }
        }
    }

    #[test]
    fn zero_phase_preserves_symmetry() {
        let c = emg_bandpass();
        let n = 2001;
        let mid = (n - 1) as f64 / 2.0;
        let x: Vec<f64> = (0..n)
            .map(|i| {
                let t = (i as f64 - mid) / 200.0;
                (-t * t).exp() * (t * 8.0).cos()
            })
            .collect();
        let y = apply_filter(&x, &c, FilterMode::ZeroPhase).unwrap();
        let scale = y.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
        for i in 0..n {
            assert!((y[i] - y[n - 1 - i]).abs() <= 1e-6 * scale, "asymmetry at {i}: {} vs {}", y[i], y[n - 1 - i]);
        }
    }

    #[test]
    fn chunked_streaming_equals_one_shot() {
        let c = emg_bandpass();
        let x: Vec<f64> = (0..3000).map(|i| ((i * 31) % 257) as f64 / 128.0 - 1.0).collect();
        let oneshot = apply_filter(&x, &c, FilterMode::Causal).unwrap();
        for chunk in [1usize, 7, 256, 3000] {
            let mut state = FilterState::new(&c);
            let mut out = Vec::new();
            for piece in x.chunks(chunk) {
                state.process(piece, &mut out);
            }
            assert_eq!(out, oneshot, "chunk size {chunk}");
        }
    }

    #[test]
    fn zero_phase_rejects_short_input() {
        let c = emg_bandpass();
        let x = vec![0.0; 3 * c.state_len()];
        assert!(matches!(apply_filter(&x, &c, FilterMode::ZeroPhase), Err(DspError::Length(_))));
    }

    #[test]
    fn non_finite_input_rejected() {
        let c = emg_bandpass();
        let mut x = vec![0.0; 100];
        x[17] = f64::NAN;
        assert!(matches!(apply_filter(&x, &c, FilterMode::Causal), Err(DspError::Input(17))));
    }

    #[test]
    fn linear_gap_restored_exactly() {
        let n = 100;
        let x: Vec<f64> = (0..n).map(|i| 0.5 * i as f64 - 3.0).collect();
        let mut gaps = vec![false; n];
        let mut broken = x.clone();
        for i in 40..50 {
            gaps[i] = true;
            broken[i] = 999.0;
        }
        let r = interpolate_gaps(&broken, &gaps, 1, 64).unwrap();
        assert!(r.unfilled.is_empty());
        for i in 0..n {
            assert_close(r.samples[i], x[i], 1e-9, "ramp restore");
        }
    }

    #[test]
    fn constant_signal_restored_exactly() {
        let x = vec![2.5; 50];
        let mut gaps = vec![false; 50];
        for i in [0, 1, 20, 21, 22, 49] {
            gaps[i] = true;
        }
        let r = interpolate_gaps(&x, &gaps, 2, 10).unwrap();
        for v in r.samples {
            assert_close(v, 2.5, 1e-9, "constant restore");
        }
    }

    #[test]
    fn quadratic_gap_restored() {
        let n = 200;
        let f = |i: usize| {
            let t = i as f64 / 100.0;
            1.0 + 2.0 * t - 3.0 * t * t
        };
        let x: Vec<f64> = (0..n).map(f).collect();
        let mut gaps = vec![false; n];
        let mut broken = x.clone();
        for i in 90..110 {
            gaps[i] = true;
            broken[i] = 0.0;
        }
        let r = interpolate_gaps(&broken, &gaps, 3, 32).unwrap();
        for i in 90..110 {
            let rel = (r.samples[i] - x[i]).abs() / x[i].abs().max(1.0);
            assert!(rel <= 1e-6, "quadratic restore at {i}: {} vs {}", r.samples[i], x[i]);
        }
    }

    #[test]
    fn oversized_gap_reported_not_filled() {
        let x: Vec<f64> = (0..60).map(|i| i as f64).collect();
        let mut gaps = vec![false; 60];
        for i in 10..30 {
            gaps[i] = true;
        }
        let r = interpolate_gaps(&x, &gaps, 1, 5).unwrap();
        assert_eq!(r.unfilled, vec![(10, 30)]);
        assert_eq!(r.samples[15], x[15]);
    }

    #[test]
    fn interpolation_identity_without_gaps() {
        let x: Vec<f64> = (0..40).map(|i| (i as f64).sin()).collect();
        let r = interpolate_gaps(&x, &vec![false; 40], 2, 10).unwrap();
        assert_eq!(r.samples, x);
    }

    #[test]
    fn too_few_valid_samples_is_error() {
        let x = vec![1.0; 10];
        let mut gaps = vec![true; 10];
        gaps[0] = false;
        gaps[1] = false;
        assert!(matches!(interpolate_gaps(&x, &gaps, 3, 10), Err(DspError::Interpolation(_))));
    }

    #[test]
    fn outliers_constant_signal_untouched() {
        let x = vec![3.0; 32];
        let r = remove_outliers(&x, 5.0).unwrap();
        assert_eq!(r.samples, x);
        assert!(r.mask.iter().all(|&m| !m));
        assert!(!r.degenerate_scale);
    }

    #[test]
    fn single_spike_detected_and_replaced() {
        // Baseline alternates 0/1 so the MAD is nonzero; by hand:
        // median = 0.5, MAD = 0.5, robust sigma = 0.7413. The spike at
        // index 17 sits far beyond 5 sigma; nothing else does.
        let mut x: Vec<f64> = (0..32).map(|i| (i % 2) as f64).collect();
        x[17] = 40.0;
        let r = remove_outliers(&x, 5.0).unwrap();
        let flagged: Vec<usize> = r.mask.iter().enumerate().filter(|(_, &m)| m).map(|(i, _)| i).collect();
        assert_eq!(flagged, vec![17]);
        assert!(r.samples[17].abs() <= 1.5, "replacement {}", r.samples[17]);
    }

    #[test]
    fn degenerate_scale_falls_back_to_absolute_threshold() {
        // All samples equal except two symmetric spikes: MAD = 0.
        let mut x = vec![1.0; 32];
        x[5] = 11.0;
        x[25] = -9.0;
        let r = remove_outliers(&x, 5.0).unwrap();
        assert!(r.degenerate_scale);
        let flagged: Vec<usize> = r.mask.iter().enumerate().filter(|(_, &m)| m).map(|(i, _)| i).collect();
        assert_eq!(flagged, vec![5, 25]);
        assert_close(r.samples[5], 1.0, 1e-9, "spike replaced by constant");
        assert_close(r.samples[25], 1.0, 1e-9, "spike replaced by constant");
    }
}
