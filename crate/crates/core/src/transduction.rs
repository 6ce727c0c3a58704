//! RF-to-quadrature transduction, labeled dataset generation and the
//! variable-beamsplitter voltage calibration.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::rng::SimRng;

/// Half-wave voltage of both VBS phase modulators.
pub const V_PI_VOLTS: f64 = 606.0;
/// Tunable VBS transmissivity range.
pub const VBS_RANGE: (f64, f64) = (0.07, 0.93);
pub const DEFAULT_BOUND: f64 = 4.0;

const PILOT_DRAWS: usize = 100_000;
pub const MIN_ACCEPTANCE: f64 = 1e-3;
const PILOT_SEED: u64 = 0x5eed_0011_0007;

/// Emulated RF field at each sensor.
#[derive(Debug, Clone, PartialEq)]
pub struct RfField {
    pub amplitudes: Vec<f64>,
    pub rf_phases: Vec<f64>,
    pub sign_flags: Vec<i8>,
}

impl RfField {
    pub fn new(amplitudes: Vec<f64>, rf_phases: Vec<f64>, sign_flags: Vec<i8>) -> Result<Self> {
        let m = amplitudes.len();
        for (ctx, len) in [
            ("rf phases", rf_phases.len()),
            ("sign flags", sign_flags.len()),
        ] {
            if len != m {
                return Err(SimError::Dimension {
                    context: ctx,
                    expected: m,
                    got: len,
                });
            }
        }
        if let Some(&g) = sign_flags.iter().find(|g| **g != 1 && **g != -1) {
            return Err(SimError::domain("sign flag", f64::from(g), "+1 or -1"));
        }
        Ok(Self {
            amplitudes,
            rf_phases,
            sign_flags,
        })
    }

    /// Phase-encoded view of `alpha`: fixed amplitude `e0` at every sensor,
    /// `rf_phase = asin(alpha / (kappa e0))`, positive sign flags.
    pub fn phase_encoded(alpha: &[f64], e0: f64, kappa: f64) -> Result<Self> {
        let full = kappa * e0;
        let phases = alpha
            .iter()
            .map(|&a| {
                let s = a / full;
                if s.abs() > 1.0 {
                    Err(SimError::domain("displacement / (kappa E)", s, "|x| <= 1"))
                } else {
                    Ok(s.asin())
                }
            })
            .collect::<Result<Vec<_>>>()?;
        RfField::new(vec![e0; alpha.len()], phases, vec![1; alpha.len()])
    }

    /// Amplitude-encoded view: quadrature phase `pi/2`, `E = |alpha| / kappa`,
    /// sign carried by the flags.
    pub fn amplitude_encoded(alpha: &[f64], kappa: f64) -> Self {
        RfField {
            amplitudes: alpha.iter().map(|a| a.abs() / kappa).collect(),
            rf_phases: vec![std::f64::consts::FRAC_PI_2; alpha.len()],
            sign_flags: alpha
                .iter()
                .map(|a| if *a < 0.0 { -1 } else { 1 })
                .collect(),
        }
    }
}

/// `alpha_m = kappa g_m E_m sin(rf_phase_m)`. The baseband amplitude and the
/// `1/sqrt(v_m)` gain compensation cancel, so `alpha` does not depend on the
/// circuit setting.
pub fn displacement_from_rf(field: &RfField, kappa: f64) -> Result<Vec<f64>> {
    if !(kappa > 0.0) {
        return Err(SimError::domain("kappa", kappa, "kappa > 0"));
    }
    Ok(field
        .amplitudes
        .iter()
        .zip(&field.rf_phases)
        .zip(&field.sign_flags)
        .map(|((e, phi), g)| kappa * f64::from(*g) * e * phi.sin())
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    #[serde(rename = "rf_direction_2d")]
    RfDirection2d,
    #[serde(rename = "mean_amplitude_3d")]
    MeanAmplitude3d,
    GeneralHyperplane,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Default for Interval {
    fn default() -> Self {
        Self {
            lo: -DEFAULT_BOUND,
            hi: DEFAULT_BOUND,
        }
    }
}

/// A classification task: the true hyperplane, the exclusion margin and the
/// displacement box the raw data is drawn from.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskSpec {
    kind: TaskKind,
    w_t: Vec<f64>,
    b_t: f64,
    margin: f64,
    bounds: Vec<Interval>,
}

impl TaskSpec {
    pub fn new(kind: TaskKind, w_t: Vec<f64>, b_t: f64, margin: f64) -> Result<Self> {
        let m = w_t.len();
        Self::with_bounds(kind, w_t, b_t, margin, vec![Interval::default(); m])
    }

    pub fn with_bounds(
        kind: TaskKind,
        w_t: Vec<f64>,
        b_t: f64,
        margin: f64,
        bounds: Vec<Interval>,
    ) -> Result<Self> {
        if w_t.is_empty() {
            return Err(SimError::Dimension {
                context: "true hyperplane",
                expected: 1,
                got: 0,
            });
        }
        let norm = w_t.iter().map(|x| x * x).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-9 {
            return Err(SimError::domain("|w_t|", norm, "unit norm"));
        }
        if !(margin >= 0.0 && margin.is_finite()) {
            return Err(SimError::domain("margin", margin, "finite margin >= 0"));
        }
        if !b_t.is_finite() {
            return Err(SimError::domain("b_t", b_t, "finite"));
        }
        if bounds.len() != w_t.len() {
            return Err(SimError::Dimension {
                context: "task bounds",
                expected: w_t.len(),
                got: bounds.len(),
            });
        }
        if let Some(b) = bounds.iter().find(|b| !(b.lo < b.hi)) {
            return Err(SimError::domain("bounds.lo", b.lo, "lo < hi"));
        }
        Ok(Self {
            kind,
            w_t,
            b_t,
            margin,
            bounds,
        })
    }

    /// Direction of an incident RF field across two sensors; labels follow the
    /// RF-phase gradient.
    pub fn rf_direction_2d(margin: f64) -> Result<Self> {
        let h = 0.5f64.sqrt();
        Self::new(TaskKind::RfDirection2d, vec![h, -h], 0.0, margin)
    }

    /// Sign of the mean RF amplitude over three sensors.
    pub fn mean_amplitude_3d(margin: f64) -> Result<Self> {
        let t = (1.0f64 / 3.0).sqrt();
        Self::new(TaskKind::MeanAmplitude3d, vec![t; 3], 0.0, margin)
    }

    /// Normalizes `w` before building the task.
    pub fn general(w: Vec<f64>, b_t: f64, margin: f64) -> Result<Self> {
        let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if !(norm > 0.0) {
            return Err(SimError::DegenerateHyperplane);
        }
        let w_t = w.into_iter().map(|x| x / norm).collect();
        Self::new(TaskKind::GeneralHyperplane, w_t, b_t, margin)
    }

    pub fn kind(&self) -> TaskKind {
        self.kind
    }

    pub fn w_t(&self) -> &[f64] {
        &self.w_t
    }

    pub fn b_t(&self) -> f64 {
        self.b_t
    }

    pub fn margin(&self) -> f64 {
        self.margin
    }

    pub fn bounds(&self) -> &[Interval] {
        &self.bounds
    }

    pub fn dim(&self) -> usize {
        self.w_t.len()
    }

    /// Same task with a different margin.
    pub fn with_margin(&self, margin: f64) -> Result<Self> {
        Self::with_bounds(
            self.kind,
            self.w_t.clone(),
            self.b_t,
            margin,
            self.bounds.clone(),
        )
    }

    pub fn signed_distance(&self, alpha: &[f64]) -> f64 {
        dot(&self.w_t, alpha) + self.b_t
    }

    pub fn label(&self, alpha: &[f64]) -> i8 {
        sign(self.signed_distance(alpha))
    }

    fn draw_raw<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        for (x, b) in out.iter_mut().zip(&self.bounds) {
            *x = rng.random_range(b.lo..b.hi);
        }
    }

    fn accepts(&self, alpha: &[f64]) -> bool {
        self.signed_distance(alpha).abs() >= self.margin
    }

    /// Fraction of raw draws that survive the margin filter, from a fixed
    /// pilot stream so the caller's generator is untouched.
    pub fn pilot_acceptance(&self) -> f64 {
        let mut rng = SimRng::seed_from_u64(PILOT_SEED);
        let mut buf = vec![0.0; self.dim()];
        let mut hits = 0usize;
        for _ in 0..PILOT_DRAWS {
            self.draw_raw(&mut rng, &mut buf);
            if self.accepts(&buf) {
                hits += 1;
            }
        }
        hits as f64 / PILOT_DRAWS as f64
    }
}

/// `sign(0) = +1`.
pub fn sign(x: f64) -> i8 {
    if x >= 0.0 {
        1
    } else {
        -1
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDatum {
    pub alpha: Vec<f64>,
    pub label: i8,
}

/// Exactly `n` points drawn uniformly from the task box by rejection, keeping
/// only those at least `margin` from the true hyperplane.
pub fn generate_dataset<R: Rng + ?Sized>(
    task: &TaskSpec,
    n: usize,
    rng: &mut R,
) -> Result<Vec<LabeledDatum>> {
    if task.margin > 0.0 {
        let acc = task.pilot_acceptance();
        if acc < MIN_ACCEPTANCE {
            return Err(SimError::config(
                "task.margin",
                format!(
                    "margin {} leaves acceptance rate {acc:.2e} < {MIN_ACCEPTANCE:e}",
                    task.margin
                ),
            ));
        }
    }
    let mut out = Vec::with_capacity(n);
    let mut buf = vec![0.0; task.dim()];
    while out.len() < n {
        task.draw_raw(rng, &mut buf);
        if task.accepts(&buf) {
            out.push(LabeledDatum {
                alpha: buf.clone(),
                label: task.label(&buf),
            });
        }
    }
    Ok(out)
}

/// CSV with header `alpha_1,...,alpha_M,label`.
pub fn write_dataset_csv<W: Write>(
    data: &[LabeledDatum],
    m: usize,
    mut out: W,
) -> std::io::Result<()> {
    let mut line = String::new();
    for k in 1..=m {
        write!(line, "alpha_{k},").unwrap();
    }
    line.push_str("label");
    writeln!(out, "{line}")?;
    for d in data {
        line.clear();
        for a in &d.alpha {
            write!(line, "{a},").unwrap();
        }
        write!(line, "{}", d.label).unwrap();
        writeln!(out, "{line}")?;
    }
    Ok(())
}

pub fn read_dataset_csv<R: BufRead>(input: R) -> Result<Vec<LabeledDatum>> {
    let mut lines = input.lines();
    let header = lines
        .next()
        .ok_or_else(|| SimError::config("dataset", "empty file"))??;
    let cols: Vec<&str> = header.split(',').collect();
    let m = cols.len().saturating_sub(1);
    let expected_header: Vec<String> = (1..=m)
        .map(|k| format!("alpha_{k}"))
        .chain(std::iter::once("label".to_string()))
        .collect();
    if m == 0 || cols != expected_header {
        return Err(SimError::config(
            "dataset.header",
            format!("unexpected header `{header}`"),
        ));
    }
    let mut data = Vec::new();
    for (row, line) in lines.enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let bad = |msg: String| SimError::config(format!("dataset.row[{}]", row + 1), msg);
        if fields.len() != m + 1 {
            return Err(bad(format!(
                "expected {} fields, got {}",
                m + 1,
                fields.len()
            )));
        }
        let alpha = fields[..m]
            .iter()
            .map(|f| f.parse::<f64>().map_err(|e| bad(e.to_string())))
            .collect::<Result<Vec<_>>>()?;
        let label = match fields[m] {
            "1" => 1,
            "-1" => -1,
            other => return Err(bad(format!("label `{other}` is not +/-1"))),
        };
        data.push(LabeledDatum { alpha, label });
    }
    Ok(data)
}

/// Power portions delivered by the two-VBS chain for PM voltages `e_s1`, `e_s2`.
pub fn vbs_ratios_from_voltages(e_s1: f64, e_s2: f64, v_pi: f64) -> Result<[f64; 3]> {
    if !(v_pi > 0.0) {
        return Err(SimError::domain("V_pi", v_pi, "V_pi > 0"));
    }
    let pi = std::f64::consts::PI;
    let v1 = 0.5 * ((pi * e_s1 / v_pi).sin() + 1.0);
    let v3 = 0.5 * ((pi * e_s2 / v_pi).sin() + 1.0) * (1.0 - v1);
    Ok([v1, 1.0 - v1 - v3, v3])
}

/// Inverse of [`vbs_ratios_from_voltages`] on the principal arcsine branch.
pub fn vbs_voltages_from_ratios(v: [f64; 3], v_pi: f64) -> Result<(f64, f64)> {
    if !(v_pi > 0.0) {
        return Err(SimError::domain("V_pi", v_pi, "V_pi > 0"));
    }
    let total: f64 = v.iter().sum();
    if (total - 1.0).abs() > 1e-9 || v.iter().any(|x| *x < 0.0) {
        return Err(SimError::domain(
            "sum of splitting ratios",
            total,
            "point on the simplex",
        ));
    }
    let (lo, hi) = VBS_RANGE;
    let check = |sensor: usize, value: f64| {
        if value < lo || value > hi {
            Err(SimError::RatioOutOfRange {
                sensor,
                value,
                lo,
                hi,
            })
        } else {
            Ok(())
        }
    };
    check(1, v[0])?;
    let second = v[2] / (1.0 - v[0]);
    check(3, second)?;
    let to_volts = |t: f64| v_pi / std::f64::consts::PI * (2.0 * t - 1.0).asin();
    Ok((to_volts(v[0]), to_volts(second)))
}
