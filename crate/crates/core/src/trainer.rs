//! Hinge-loss SVM trained by SPSA, with the hyperplane-to-circuit mapping that
//! lets the entangled probe track the current weight vector.

use std::fmt::Write as _;
use std::io::Write;

use rand::Rng;

use crate::error::{Result, SimError};
use crate::gaussian_optics::{
    build_network_covariance, separable_network_covariance, HomodyneSampler, SensorCovariance,
    SqueezedSourceSpec, VqcSetting,
};
use crate::rng::{SeedStreams, SimRng, Stream};
use crate::stats::ErrorEstimate;
use crate::transduction::{dot, generate_dataset, sign, LabeledDatum, TaskSpec};

/// Smallest power fraction the circuit may send to any sensor.
pub const DEFAULT_V_MIN: f64 = 0.125;

/// Raw (unnormalized) decision hyperplane `w . x + b = 0`.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Hyperplane {
    pub w: Vec<f64>,
    pub b: f64,
}

impl Hyperplane {
    pub fn new(w: Vec<f64>, b: f64) -> Result<Self> {
        if w.is_empty() {
            return Err(SimError::Dimension {
                context: "hyperplane weights",
                expected: 1,
                got: 0,
            });
        }
        if let Some(&x) = w.iter().chain(std::iter::once(&b)).find(|x| !x.is_finite()) {
            return Err(SimError::domain("hyperplane entry", x, "finite"));
        }
        Ok(Self { w, b })
    }

    pub fn dim(&self) -> usize {
        self.w.len()
    }

    pub fn decision_value(&self, x: &[f64]) -> f64 {
        dot(&self.w, x) + self.b
    }

    /// Same decision rule rescaled so that `|w| = 1`.
    pub fn normalized(&self) -> Result<Self> {
        let n = dot(&self.w, &self.w).sqrt();
        if !(n > 0.0) {
            return Err(SimError::DegenerateHyperplane);
        }
        Ok(Self {
            w: self.w.iter().map(|x| x / n).collect(),
            b: self.b / n,
        })
    }

    /// Euclidean distance to `(w_t, b_t)` in the joint `(w, b)` space.
    pub fn distance_to(&self, w_t: &[f64], b_t: f64) -> f64 {
        let dw: f64 = self.w.iter().zip(w_t).map(|(a, b)| (a - b).powi(2)).sum();
        (dw + (self.b - b_t).powi(2)).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpsaConfig {
    pub a: f64,
    pub c: f64,
    #[serde(rename = "A")]
    pub big_a: f64,
    pub alpha: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub n_steps: usize,
}

impl Default for SpsaConfig {
    fn default() -> Self {
        Self {
            a: 1.0,
            c: 1.0,
            big_a: 200.0,
            alpha: 0.602,
            gamma: 0.1,
            lambda: 0.01,
            n_steps: 200,
        }
    }
}

impl SpsaConfig {
    pub fn with_steps(self, n_steps: usize) -> Self {
        Self { n_steps, ..self }
    }

    pub fn with_lambda(self, lambda: f64) -> Self {
        Self { lambda, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("spsa.a", self.a),
            ("spsa.c", self.c),
            ("spsa.A", self.big_a),
        ];
        for (path, v) in fields {
            if !(v > 0.0 && v.is_finite()) {
                return Err(SimError::config(path, format!("{v} must be positive")));
            }
        }
        if !(self.alpha > 0.5 && self.alpha <= 1.0) {
            return Err(SimError::config(
                "spsa.alpha",
                format!("{} not in (0.5, 1]", self.alpha),
            ));
        }
        if !(self.gamma > 0.0 && self.gamma <= 0.5) {
            return Err(SimError::config(
                "spsa.gamma",
                format!("{} not in (0, 0.5]", self.gamma),
            ));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(SimError::config(
                "spsa.lambda",
                format!("{} must be >= 0", self.lambda),
            ));
        }
        if self.n_steps == 0 {
            return Err(SimError::config("spsa.n_steps", "must be at least 1"));
        }
        Ok(())
    }
}

/// Probe and measurement configuration of a classifier.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ClassifierMode {
    /// Entangled probe from one squeezed source, circuit tracks the hyperplane.
    Slaen {
        source: SqueezedSourceSpec,
        eta: f64,
        v_min: f64,
    },
    /// Coherent probes; shot noise at every sensor regardless of loss.
    ClassicalCoherent { eta: f64 },
    /// Independent squeezed probe at every sensor.
    SeparableSqueezed { n_s_per_sensor: f64, eta: f64 },
}

impl ClassifierMode {
    pub fn slaen(n_s: f64, eta: f64) -> Result<Self> {
        Ok(ClassifierMode::Slaen {
            source: SqueezedSourceSpec::new(n_s)?,
            eta,
            v_min: DEFAULT_V_MIN,
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            ClassifierMode::Slaen { .. } => "slaen",
            ClassifierMode::ClassicalCoherent { .. } => "classical",
            ClassifierMode::SeparableSqueezed { .. } => "separable",
        }
    }

    pub fn adapts_circuit(&self) -> bool {
        matches!(self, ClassifierMode::Slaen { .. })
    }

    /// Circuit realized for hyperplane `h`; baselines have no entangling
    /// circuit and report an even split with zero phases.
    pub fn circuit_for(&self, h: &Hyperplane) -> Result<VqcSetting> {
        match self {
            ClassifierMode::Slaen { v_min, .. } => map_hyperplane_to_vqc(h, *v_min),
            _ => Ok(VqcSetting::uniform(h.dim())),
        }
    }

    /// Homodyne noise covariance when the circuit is set to `vqc`.
    pub fn noise_covariance(&self, vqc: &VqcSetting) -> Result<SensorCovariance> {
        let m = vqc.num_sensors();
        match *self {
            ClassifierMode::Slaen { source, eta, .. } => build_network_covariance(source, vqc, eta),
            ClassifierMode::ClassicalCoherent { eta } => {
                if !(0.0..=1.0).contains(&eta) {
                    return Err(SimError::domain("efficiency", eta, "0 <= eta <= 1"));
                }
                Ok(SensorCovariance::shot_noise(m))
            }
            ClassifierMode::SeparableSqueezed {
                n_s_per_sensor,
                eta,
            } => separable_network_covariance(n_s_per_sensor, eta, m),
        }
    }
}

/// `|1 - y (w . x + b)|_+ + lambda |w|^2`.
pub fn hinge_loss(h: &Hyperplane, alpha_meas: &[f64], y: i8, lambda: f64) -> f64 {
    let margin = f64::from(y) * h.decision_value(alpha_meas);
    (1.0 - margin).max(0.0) + lambda * dot(&h.w, &h.w)
}

/// Hinge terms summed over the set, regularizer added once.
pub fn total_cost(h: &Hyperplane, data: &[(Vec<f64>, i8)], lambda: f64) -> Result<f64> {
    if data.is_empty() {
        return Err(SimError::Dimension {
            context: "cost over empty dataset",
            expected: 1,
            got: 0,
        });
    }
    let hinge: f64 = data
        .iter()
        .map(|(x, y)| (1.0 - f64::from(*y) * h.decision_value(x)).max(0.0))
        .sum();
    Ok(hinge + lambda * dot(&h.w, &h.w))
}

/// `(a / (n + A)^alpha, c / n^gamma)`.
pub fn gain_sequences(n: usize, cfg: &SpsaConfig) -> (f64, f64) {
    let n = n as f64;
    (
        cfg.a / (n + cfg.big_a).powf(cfg.alpha),
        cfg.c / n.powf(cfg.gamma),
    )
}

fn rademacher<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    2.0 * rng.random::<f64>().round() - 1.0
}

/// One SPSA update on a single measured data point. Both perturbed losses use
/// the same measurement.
pub fn spsa_step<R: Rng + ?Sized>(
    h: &Hyperplane,
    meas: &[f64],
    y: i8,
    n: usize,
    cfg: &SpsaConfig,
    rng: &mut R,
) -> Hyperplane {
    let (a_n, c_n) = gain_sequences(n, cfg);
    let delta_w: Vec<f64> = (0..h.dim()).map(|_| rademacher(rng)).collect();
    let delta_b = rademacher(rng);

    let plus = Hyperplane {
        w: h.w.iter().zip(&delta_w).map(|(w, d)| w + c_n * d).collect(),
        b: h.b + c_n * delta_b,
    };
    let minus = Hyperplane {
        w: h.w.iter().zip(&delta_w).map(|(w, d)| w - c_n * d).collect(),
        b: h.b - c_n * delta_b,
    };
    let diff = hinge_loss(&plus, meas, y, cfg.lambda) - hinge_loss(&minus, meas, y, cfg.lambda);

    Hyperplane {
        w: h.w
            .iter()
            .zip(&delta_w)
            .map(|(w, d)| w - a_n * diff / (2.0 * c_n * d))
            .collect(),
        b: h.b - a_n * diff / (2.0 * c_n * delta_b),
    }
}

/// `sqrt(v_m) e^{i phi_m} = w_m / |w|`, then projection of `v` onto
/// `{sum v = 1, v_m >= v_min}` by repeated clamp-and-renormalize.
pub fn map_hyperplane_to_vqc(h: &Hyperplane, v_min: f64) -> Result<VqcSetting> {
    let m = h.dim();
    if !(v_min >= 0.0) || v_min * m as f64 > 1.0 + 1e-12 {
        return Err(SimError::domain("v_min", v_min, "0 <= v_min <= 1/M"));
    }
    let norm = dot(&h.w, &h.w).sqrt();
    if !(norm > 0.0) {
        return Err(SimError::DegenerateHyperplane);
    }
    let target: Vec<f64> = h.w.iter().map(|w| (w / norm).powi(2)).collect();
    let phi =
        h.w.iter()
            .map(|w| if *w >= 0.0 { 0.0 } else { std::f64::consts::PI })
            .collect();

    let mut clamped = vec![false; m];
    let mut v = target.clone();
    for _ in 0..=m {
        let mut changed = false;
        for k in 0..m {
            if !clamped[k] && v[k] < v_min {
                clamped[k] = true;
                changed = true;
            }
        }
        let n_clamped = clamped.iter().filter(|c| **c).count();
        let budget = 1.0 - n_clamped as f64 * v_min;
        let free_mass: f64 = (0..m).filter(|k| !clamped[*k]).map(|k| target[k]).sum();
        let n_free = m - n_clamped;
        for k in 0..m {
            v[k] = if clamped[k] {
                v_min
            } else if free_mass > 0.0 {
                target[k] * budget / free_mass
            } else {
                budget / n_free as f64
            };
        }
        if !changed {
            break;
        }
    }
    // absorb rounding so the simplex check holds to machine precision
    let total: f64 = v.iter().sum();
    if let Some(k) = (0..m).max_by(|a, b| v[*a].total_cmp(&v[*b])) {
        v[k] += 1.0 - total;
    }
    VqcSetting::new(v, phi)
}

/// `sign(w . x + b)` with `sign(0) = +1`.
pub fn classify(h: &Hyperplane, meas: &[f64]) -> i8 {
    sign(h.decision_value(meas))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingRecord {
    pub step: usize,
    pub hyperplane: Hyperplane,
    pub vqc: VqcSetting,
    /// Hinge loss of the updated hyperplane on this step's measurement;
    /// absent for the initial record.
    pub loss: Option<f64>,
    pub inferred_label: Option<i8>,
    pub true_label: Option<i8>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingTrajectory {
    pub mode: ClassifierMode,
    pub records: Vec<TrainingRecord>,
    pub checkpoints: Vec<(usize, ErrorEstimate)>,
}

impl TrainingTrajectory {
    pub fn final_record(&self) -> &TrainingRecord {
        self.records
            .last()
            .expect("trajectory holds the initial record")
    }

    pub fn final_hyperplane(&self) -> &Hyperplane {
        &self.final_record().hyperplane
    }

    /// `step,w_1..w_M,b,v_1..v_M,phi_1..phi_M,loss`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let m = self.records[0].hyperplane.dim();
        let mut line = String::from("step");
        for k in 1..=m {
            write!(line, ",w_{k}").unwrap();
        }
        line.push_str(",b");
        for k in 1..=m {
            write!(line, ",v_{k}").unwrap();
        }
        for k in 1..=m {
            write!(line, ",phi_{k}").unwrap();
        }
        line.push_str(",loss");
        writeln!(out, "{line}")?;
        for r in &self.records {
            line.clear();
            write!(line, "{}", r.step).unwrap();
            for w in &r.hyperplane.w {
                write!(line, ",{w}").unwrap();
            }
            write!(line, ",{}", r.hyperplane.b).unwrap();
            for v in r.vqc.v() {
                write!(line, ",{v}").unwrap();
            }
            for p in r.vqc.phi() {
                write!(line, ",{p}").unwrap();
            }
            match r.loss {
                Some(l) => write!(line, ",{l}").unwrap(),
                None => line.push(','),
            }
            writeln!(out, "{line}")?;
        }
        Ok(())
    }
}

/// Runs the training loop over a fixed data stream.
///
/// Each step measures the datum under the covariance of the circuit realized
/// for the previous hyperplane, records the inferred label, applies one SPSA
/// update with the true label, and (SLAEN only) re-maps the circuit.
pub fn train_on_data(
    mode: &ClassifierMode,
    data: &[LabeledDatum],
    init: &Hyperplane,
    cfg: &SpsaConfig,
    noise_rng: &mut SimRng,
    spsa_rng: &mut SimRng,
) -> Result<TrainingTrajectory> {
    cfg.validate()?;
    let m = init.dim();
    if let Some(d) = data.iter().find(|d| d.alpha.len() != m) {
        return Err(SimError::Dimension {
            context: "training datum",
            expected: m,
            got: d.alpha.len(),
        });
    }
    if data.len() < cfg.n_steps {
        return Err(SimError::Dimension {
            context: "training data shorter than n_steps",
            expected: cfg.n_steps,
            got: data.len(),
        });
    }

    let mut h = init.clone();
    let mut vqc = mode.circuit_for(&h)?;
    let mut sampler = HomodyneSampler::new(&mode.noise_covariance(&vqc)?)?;
    let mut records = Vec::with_capacity(cfg.n_steps + 1);
    records.push(TrainingRecord {
        step: 0,
        hyperplane: h.clone(),
        vqc: vqc.clone(),
        loss: None,
        inferred_label: None,
        true_label: None,
    });

    let mut meas = vec![0.0; m];
    for (n, datum) in data
        .iter()
        .take(cfg.n_steps)
        .enumerate()
        .map(|(i, d)| (i + 1, d))
    {
        sampler.sample_into(&datum.alpha, &mut meas, noise_rng);
        let inferred = classify(&h, &meas);
        h = spsa_step(&h, &meas, datum.label, n, cfg, spsa_rng);
        let loss = hinge_loss(&h, &meas, datum.label, cfg.lambda);
        if mode.adapts_circuit() {
            vqc = mode.circuit_for(&h)?;
            sampler = HomodyneSampler::new(&mode.noise_covariance(&vqc)?)?;
        }
        records.push(TrainingRecord {
            step: n,
            hyperplane: h.clone(),
            vqc: vqc.clone(),
            loss: Some(loss),
            inferred_label: Some(inferred),
            true_label: Some(datum.label),
        });
    }

    Ok(TrainingTrajectory {
        mode: *mode,
        records,
        checkpoints: Vec::new(),
    })
}

/// Generates the training stream from `streams` and trains on it. Modes
/// trained from the same streams see identical data.
pub fn train(
    mode: &ClassifierMode,
    task: &TaskSpec,
    init: &Hyperplane,
    cfg: &SpsaConfig,
    streams: &SeedStreams,
) -> Result<TrainingTrajectory> {
    if init.dim() != task.dim() {
        return Err(SimError::Dimension {
            context: "initial hyperplane",
            expected: task.dim(),
            got: init.dim(),
        });
    }
    let data = generate_dataset(task, cfg.n_steps, &mut streams.rng(Stream::Data))?;
    train_on_data(
        mode,
        &data,
        init,
        cfg,
        &mut streams.rng(Stream::Noise),
        &mut streams.rng(Stream::Spsa),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian_optics::network_covariance_closed_form;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;

    fn hp(w: &[f64], b: f64) -> Hyperplane {
        Hyperplane::new(w.to_vec(), b).unwrap()
    }

    #[test]
    fn hinge_loss_examples() {
        // on the margin
        assert_abs_diff_eq!(hinge_loss(&hp(&[1.0, 0.0], 0.0), &[1.0, 5.0], 1, 0.0), 0.0);
        assert_abs_diff_eq!(hinge_loss(&hp(&[1.0, 1.0], 0.0), &[1.0, -1.0], 1, 0.0), 1.0);
        assert_abs_diff_eq!(
            hinge_loss(&hp(&[1.0, 1.0], 0.5), &[1.0, -2.0], 1, 0.1),
            1.7,
            epsilon = 1e-15
        );
    }

    #[test]
    fn total_cost_examples() {
        let h = hp(&[1.0, 1.0], 0.5);
        let confident = vec![(vec![3.0, 3.0], 1i8), (vec![-3.0, -3.0], -1)];
        assert_abs_diff_eq!(
            total_cost(&h, &confident, 0.1).unwrap(),
            0.2,
            epsilon = 1e-15
        );
        let single = vec![(vec![1.0, -2.0], 1i8)];
        assert_abs_diff_eq!(
            total_cost(&h, &single, 0.1).unwrap(),
            hinge_loss(&h, &single[0].0, 1, 0.1),
            epsilon = 1e-15
        );
        // hinge terms: |1-(-0.5)| = 1.5, |1-(1.5)|_+ = 0, |1+(-0.5)| = 0.5
        let three = vec![
            (vec![1.0, -2.0], 1i8),
            (vec![0.5, 0.5], 1),
            (vec![-1.0, 0.0], -1),
        ];
        assert_abs_diff_eq!(
            total_cost(&h, &three, 0.1).unwrap(),
            1.5 + 0.0 + 0.5 + 0.2,
            epsilon = 1e-15
        );
        assert!(total_cost(&h, &[], 0.1).is_err());
    }

    #[test]
    fn gain_sequence_values() {
        let cfg = SpsaConfig::default();
        let (a1, c1) = gain_sequences(1, &cfg);
        assert_eq!(c1, 1.0);
        assert_abs_diff_eq!(a1, 0.041_065_392_055_110_63, epsilon = 1e-15);
        let mut prev = (a1, c1);
        for n in 2..500 {
            let cur = gain_sequences(n, &cfg);
            assert!(cur.0 < prev.0 && cur.1 < prev.1);
            prev = cur;
        }
    }

    #[test]
    fn spsa_config_validation() {
        assert!(SpsaConfig::default().validate().is_ok());
        let bad = SpsaConfig {
            alpha: 0.5,
            ..SpsaConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = SpsaConfig {
            gamma: 0.6,
            ..SpsaConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = SpsaConfig {
            n_steps: 0,
            ..SpsaConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn spsa_zero_gradient_leaves_hyperplane() {
        let cfg = SpsaConfig::default().with_lambda(0.0);
        let h = hp(&[0.3, -0.2, 0.1], 5.0);
        let mut rng = SimRng::seed_from_u64(2);
        // decision value stays >= 3.7 under any +/-1 perturbation
        let out = spsa_step(&h, &[0.1, -0.1, 0.1], 1, 1, &cfg, &mut rng);
        assert_eq!(out, h);
    }

    #[test]
    fn spsa_is_deterministic() {
        let cfg = SpsaConfig::default();
        let h = hp(&[0.6, 0.5], 0.2);
        let a = spsa_step(&h, &[0.3, -0.1], -1, 3, &cfg, &mut SimRng::seed_from_u64(9));
        let b = spsa_step(&h, &[0.3, -0.1], -1, 3, &cfg, &mut SimRng::seed_from_u64(9));
        assert_eq!(a, b);
        assert_ne!(a, h);
    }

    #[test]
    fn spsa_separable_toy_problem() {
        let points: [([f64; 2], i8); 4] = [
            ([1.0, -1.0], 1),
            ([2.0, 0.0], 1),
            ([-1.0, 1.0], -1),
            ([0.0, 2.0], -1),
        ];
        let cfg = SpsaConfig::default().with_lambda(0.0);
        let mut perfect = 0;
        for seed in 0..100u64 {
            let mut rng = SimRng::seed_from_u64(seed);
            let mut h = hp(&[0.67, 0.74], 0.39);
            for n in 1..=200 {
                let (x, y) = points[rng.random_range(0..4)];
                h = spsa_step(&h, &x, y, n, &cfg, &mut rng);
            }
            if points.iter().all(|(x, y)| classify(&h, x) == *y) {
                perfect += 1;
            }
        }
        assert!(
            perfect >= 95,
            "only {perfect}/100 seeds separated the toy set"
        );
    }

    #[test]
    fn vqc_mapping_examples() {
        let h = 0.5f64.sqrt();
        let v = map_hyperplane_to_vqc(&hp(&[h, -h], 0.0), DEFAULT_V_MIN).unwrap();
        assert_abs_diff_eq!(v.v()[0], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(v.v()[1], 0.5, epsilon = 1e-12);
        assert_eq!(v.phi(), &[0.0, std::f64::consts::PI]);

        let t = (1.0f64 / 3.0).sqrt();
        let v = map_hyperplane_to_vqc(&hp(&[t, t, t], 0.0), DEFAULT_V_MIN).unwrap();
        for x in v.v() {
            assert_abs_diff_eq!(*x, 1.0 / 3.0, epsilon = 1e-12);
        }
        assert_eq!(v.phi(), &[0.0, 0.0, 0.0]);

        let v = map_hyperplane_to_vqc(&hp(&[1.0, 0.0, 0.0], 0.0), 0.125).unwrap();
        assert_abs_diff_eq!(v.v()[0], 0.75, epsilon = 1e-12);
        assert_abs_diff_eq!(v.v()[1], 0.125, epsilon = 1e-12);
        assert_abs_diff_eq!(v.v()[2], 0.125, epsilon = 1e-12);
        assert_eq!(v.phi(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn vqc_mapping_cascading_clamp() {
        // 0.9^2 : 0.3^2 : 0.3^2 : 0.1^2 needs two rounds of clamping
        let v = map_hyperplane_to_vqc(&hp(&[0.9, 0.33, 0.3, 0.1], 0.0), 0.2).unwrap();
        assert!(v.v().iter().all(|x| *x >= 0.2 - 1e-12));
        assert_abs_diff_eq!(v.v().iter().sum::<f64>(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn vqc_mapping_errors() {
        assert!(matches!(
            map_hyperplane_to_vqc(&hp(&[0.0, 0.0], 1.0), DEFAULT_V_MIN),
            Err(SimError::DegenerateHyperplane)
        ));
        assert!(map_hyperplane_to_vqc(&hp(&[1.0, 1.0, 1.0], 0.0), 0.4).is_err());
    }

    #[test]
    fn classify_examples() {
        let h = 0.5f64.sqrt();
        assert_eq!(classify(&hp(&[h, -h], 0.0), &[1.0, 2.0]), -1);
        assert_eq!(classify(&hp(&[1.0, 0.0], 0.0), &[0.0, 3.0]), 1);
        assert_eq!(classify(&hp(&[1.0, 1.0], 0.1), &[0.2, 0.3]), 1);
    }

    #[test]
    fn trajectory_length_and_baseline_circuit() {
        let task = TaskSpec::rf_direction_2d(0.6).unwrap();
        let cfg = SpsaConfig::default();
        let streams = SeedStreams::new(3);
        let t = train(
            &ClassifierMode::ClassicalCoherent { eta: 0.53 },
            &task,
            &hp(&[0.67, 0.74], 0.39),
            &cfg,
            &streams,
        )
        .unwrap();
        assert_eq!(t.records.len(), cfg.n_steps + 1);
        assert!(t.records.iter().all(|r| r.vqc == VqcSetting::uniform(2)));
        assert!(t.records[0].loss.is_none());
    }

    #[test]
    fn slaen_trajectory_respects_v_min() {
        let task = TaskSpec::rf_direction_2d(0.6).unwrap();
        let h0 = 0.5f64.sqrt();
        let t = train(
            &ClassifierMode::slaen(3.3, 0.53).unwrap(),
            &task,
            &hp(&[h0, h0], 0.7),
            &SpsaConfig::default(),
            &SeedStreams::new(4),
        )
        .unwrap();
        for r in &t.records {
            assert!(r.vqc.v().iter().all(|v| *v >= DEFAULT_V_MIN - 1e-12));
        }
        // the second weight must cross zero, so some record carries a pi phase
        assert!(t
            .records
            .iter()
            .any(|r| r.vqc.phi()[1] == std::f64::consts::PI));
    }

    #[test]
    fn trajectory_csv_is_reproducible() {
        let task = TaskSpec::mean_amplitude_3d(0.6).unwrap();
        let mode = ClassifierMode::slaen(3.3, 0.53).unwrap();
        let init = hp(&[0.6, 0.566, 0.566], 0.45);
        let cfg = SpsaConfig::default().with_steps(50);
        let run = || {
            let t = train(&mode, &task, &init, &cfg, &SeedStreams::new(77)).unwrap();
            let mut buf = Vec::new();
            t.write_csv(&mut buf).unwrap();
            buf
        };
        let (a, b) = (run(), run());
        assert_eq!(a, b);
        let text = String::from_utf8(a).unwrap();
        assert!(text.starts_with("step,w_1,w_2,w_3,b,v_1,v_2,v_3,phi_1,phi_2,phi_3,loss\n"));
        assert_eq!(text.lines().count(), 52);
    }

    proptest! {
        #[test]
        fn mapping_is_scale_invariant(w in prop::collection::vec(-3.0f64..3.0, 2..5), s in 0.01f64..100.0) {
            prop_assume!(w.iter().map(|x| x * x).sum::<f64>() > 1e-6);
            let a = map_hyperplane_to_vqc(&hp(&w, 0.0), DEFAULT_V_MIN).unwrap();
            let scaled: Vec<f64> = w.iter().map(|x| x * s).collect();
            let b = map_hyperplane_to_vqc(&hp(&scaled, 0.3), DEFAULT_V_MIN).unwrap();
            prop_assert_eq!(a.phi(), b.phi());
            for (x, y) in a.v().iter().zip(b.v()) {
                prop_assert!((x - y).abs() < 1e-12);
            }
            prop_assert!((a.v().iter().sum::<f64>() - 1.0).abs() < 1e-9);
            prop_assert!(a.v().iter().all(|v| *v >= DEFAULT_V_MIN - 1e-12));
        }

        #[test]
        fn unclamped_matched_noise_equals_source_formula(
            w in prop::collection::vec(0.45f64..1.0, 3),
            signs in prop::collection::vec(any::<bool>(), 3),
            n_s in 0.0f64..8.0,
            eta in 0.0f64..1.0,
        ) {
            let w: Vec<f64> = w.iter().zip(&signs).map(|(x, s)| if *s { *x } else { -*x }).collect();
            let h = hp(&w, 0.0);
            let vqc = map_hyperplane_to_vqc(&h, DEFAULT_V_MIN).unwrap();
            let norm = dot(&w, &w).sqrt();
            let unit: Vec<f64> = w.iter().map(|x| x / norm).collect();
            prop_assume!(unit.iter().all(|u| u * u > DEFAULT_V_MIN));
            let src = SqueezedSourceSpec::new(n_s).unwrap();
            let cov = build_network_covariance(src, &vqc, eta).unwrap();
            let var = cov.weighted_sum_variance(&unit).unwrap();
            let expected = 0.25 * (eta * src.squeeze_factor() + (1.0 - eta));
            prop_assert!((var - expected).abs() < 1e-10);
            let closed = network_covariance_closed_form(src, &vqc, eta).unwrap();
            prop_assert!((closed.matrix() - cov.matrix()).amax() < 1e-10);
        }
    }
}
