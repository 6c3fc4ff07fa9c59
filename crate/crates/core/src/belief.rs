//! Per-track class belief: discrete HMM forward filtering over hidden
//! classes with class-or-background observations.
//!
//! Each track carries a belief over the five person classes plus a clutter
//! hypothesis. Every frame the belief is pushed through the transition
//! model and, when a measurement is available (a detected class, or
//! "background" when the track is in view but nothing matched it), through
//! the measurement model. Out-of-view tracks get the transition only. The
//! clutter mass doubles as the tracker's false-positive estimate: tracks
//! whose clutter probability crosses a threshold are deleted.

use std::fmt::Write as _;

use rand::Rng;

use crate::classes::{ClassId, NUM_CLASSES};
use crate::{Error, Result};

fn check_stochastic(name: &str, row: &[f64]) -> Result<()> {
    if row.iter().any(|&p| !(0.0..=1.0).contains(&p) || !p.is_finite()) {
        return Err(Error::Config(format!("{name} has entries outside [0,1]: {row:?}")));
    }
    let sum: f64 = row.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!("{name} sums to {sum}, expected 1 within 1e-9")));
    }
    Ok(())
}

/// Discrete hidden-Markov model: `K` hidden states, `O` observation symbols.
///
/// By convention the last observation symbol is "background" (misdetection)
/// and, for the person model, the last hidden state is clutter.
#[derive(Debug, Clone, PartialEq)]
pub struct HmmModel {
    /// π over hidden states, length K.
    pub prior: Vec<f64>,
    /// A\[from\]\[to\], K×K.
    pub transition: Vec<Vec<f64>>,
    /// B\[hidden\]\[observed\], K×O.
    pub measurement: Vec<Vec<f64>>,
}

impl HmmModel {
    pub fn new(
        prior: Vec<f64>,
        transition: Vec<Vec<f64>>,
        measurement: Vec<Vec<f64>>,
    ) -> Result<HmmModel> {
        let model = HmmModel { prior, transition, measurement };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.prior.len();
        if k == 0 {
            return Err(Error::Config("model needs at least one hidden state".into()));
        }
        check_stochastic("prior", &self.prior)?;
        if self.transition.len() != k || self.measurement.len() != k {
            return Err(Error::Config(format!(
                "expected {k} transition and measurement rows, got {} and {}",
                self.transition.len(),
                self.measurement.len()
            )));
        }
        let o = self.n_observed();
        if o == 0 {
            return Err(Error::Config("model needs at least one observation symbol".into()));
        }
        for (i, row) in self.transition.iter().enumerate() {
            if row.len() != k {
                return Err(Error::Config(format!("transition row {i} has {} entries", row.len())));
            }
            check_stochastic(&format!("transition row {i}"), row)?;
        }
        for (i, row) in self.measurement.iter().enumerate() {
            if row.len() != o {
                return Err(Error::Config(format!("measurement row {i} has {} entries", row.len())));
            }
            check_stochastic(&format!("measurement row {i}"), row)?;
        }
        Ok(())
    }

    pub fn n_hidden(&self) -> usize {
        self.prior.len()
    }

    pub fn n_observed(&self) -> usize {
        self.measurement.first().map_or(0, Vec::len)
    }

    /// Index of the background observation symbol (last by convention).
    pub fn background_observation(&self) -> usize {
        self.n_observed() - 1
    }

    /// Default person model: hidden states are the five classes plus
    /// clutter; observations are the five classes plus background.
    ///
    /// The constants are tuned for 15 Hz operation so that a well-confirmed
    /// track survives about a second of background observations (occlusion)
    /// before its clutter mass approaches the usual 0.9 deletion threshold,
    /// while twenty consecutive background observations exceed it.
    pub fn people_default() -> HmmModel {
        let k = NUM_CLASSES;
        let prior = vec![0.19, 0.19, 0.19, 0.19, 0.19, 0.05];
        let mut transition = vec![vec![0.006; k]; k];
        for (i, row) in transition.iter_mut().enumerate() {
            row[i] = 0.97;
        }
        let mut measurement = vec![vec![0.0125; k]; k];
        for (i, row) in measurement.iter_mut().enumerate().take(k - 1) {
            row[i] = 0.5;
            row[k - 1] = 0.45;
        }
        measurement[k - 1] = vec![0.04, 0.04, 0.04, 0.04, 0.04, 0.8];
        HmmModel::new(prior, transition, measurement).expect("constants are stochastic")
    }

    fn display_names(&self) -> (Vec<String>, Vec<String>) {
        if self.n_hidden() == NUM_CLASSES && self.n_observed() == NUM_CLASSES {
            let mut hidden: Vec<String> =
                ClassId::all()[..NUM_CLASSES - 1].iter().map(|c| c.name().to_string()).collect();
            hidden.push("clutter".to_string());
            let observed = ClassId::all().iter().map(|c| c.name().to_string()).collect();
            (hidden, observed)
        } else {
            (
                (0..self.n_hidden()).map(|i| format!("h{i}")).collect(),
                (0..self.n_observed()).map(|i| format!("c{i}")).collect(),
            )
        }
    }

    /// Plain-text serialization: named state lists followed by the three
    /// matrices, one row per line. Floats print in shortest round-trip form.
    pub fn to_text(&self) -> String {
        let (hidden, observed) = self.display_names();
        let mut s = String::new();
        let _ = writeln!(s, "# class-belief hmm model");
        let _ = writeln!(s, "hidden {}", hidden.join(" "));
        let _ = writeln!(s, "observed {}", observed.join(" "));
        let row = |r: &[f64]| r.iter().map(f64::to_string).collect::<Vec<_>>().join(" ");
        let _ = writeln!(s, "prior\n{}", row(&self.prior));
        let _ = writeln!(s, "transition");
        for r in &self.transition {
            let _ = writeln!(s, "{}", row(r));
        }
        let _ = writeln!(s, "measurement");
        for r in &self.measurement {
            let _ = writeln!(s, "{}", row(r));
        }
        s
    }

    /// Parses the [`HmmModel::to_text`] format. Lines starting with `#` and
    /// blank lines are ignored.
    pub fn from_text(text: &str) -> Result<HmmModel> {
        let mut lines = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'));
        let mut expect = |what: &str| -> Result<&str> {
            lines.next().ok_or_else(|| Error::Parse(format!("missing {what}")))
        };
        let header = |line: &str, key: &str| -> Result<usize> {
            let rest = line
                .strip_prefix(key)
                .ok_or_else(|| Error::Parse(format!("expected '{key} ...', got '{line}'")))?;
            let n = rest.split_whitespace().count();
            if n == 0 {
                return Err(Error::Parse(format!("'{key}' lists no states")));
            }
            Ok(n)
        };
        let k = header(expect("hidden state list")?, "hidden ")?;
        let o = header(expect("observed state list")?, "observed ")?;
        let parse_row = |line: &str, n: usize, what: &str| -> Result<Vec<f64>> {
            let row: Vec<f64> = line
                .split_whitespace()
                .map(|t| {
                    t.parse::<f64>()
                        .map_err(|_| Error::Parse(format!("bad number '{t}' in {what}")))
                })
                .collect::<Result<_>>()?;
            if row.len() != n {
                return Err(Error::Parse(format!(
                    "{what} has {} entries, expected {n}",
                    row.len()
                )));
            }
            Ok(row)
        };
        let keyword = |line: &str, key: &str| -> Result<()> {
            if line == key {
                Ok(())
            } else {
                Err(Error::Parse(format!("expected '{key}', got '{line}'")))
            }
        };
        keyword(expect("prior")?, "prior")?;
        let prior = parse_row(expect("prior row")?, k, "prior")?;
        keyword(expect("transition")?, "transition")?;
        let transition = (0..k)
            .map(|i| parse_row(expect("transition row")?, k, &format!("transition row {i}")))
            .collect::<Result<Vec<_>>>()?;
        keyword(expect("measurement")?, "measurement")?;
        let measurement = (0..k)
            .map(|i| parse_row(expect("measurement row")?, o, &format!("measurement row {i}")))
            .collect::<Result<Vec<_>>>()?;
        HmmModel::new(prior, transition, measurement)
    }

    /// Draws a `(hidden, observed)` trajectory of `len` steps: the initial
    /// hidden state comes from the prior, each observation from the hidden
    /// state's measurement row, and each successor from its transition row.
    pub fn sample_sequence(&self, len: usize, rng: &mut impl Rng) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(len);
        if len == 0 {
            return out;
        }
        let mut hidden = sample_index(&self.prior, rng);
        for _ in 0..len {
            let observed = sample_index(&self.measurement[hidden], rng);
            out.push((hidden, observed));
            hidden = sample_index(&self.transition[hidden], rng);
        }
        out
    }
}

/// Draws an index from a stochastic row by inverse-CDF walk.
fn sample_index(row: &[f64], rng: &mut impl Rng) -> usize {
    let mut x: f64 = rng.gen();
    for (i, &p) in row.iter().enumerate() {
        if x < p {
            return i;
        }
        x -= p;
    }
    // Rounding slack lands on the last nonzero entry.
    row.iter().rposition(|&p| p > 0.0).unwrap_or(row.len() - 1)
}

/// Probability vector over a model's hidden states.
#[derive(Debug, Clone, PartialEq)]
pub struct Belief(Vec<f64>);

impl Belief {
    /// The model prior as a starting belief.
    pub fn from_prior(model: &HmmModel) -> Belief {
        Belief(model.prior.clone())
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn get(&self, state: usize) -> f64 {
        self.0[state]
    }

    /// Hidden state with the highest mass; ties go to the lower index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for i in 1..self.0.len() {
            if self.0[i] > self.0[best] {
                best = i;
            }
        }
        best
    }

    /// Mass on the clutter hypothesis (the last hidden state by the person
    /// model's convention); the tracker's background-deletion signal.
    pub fn background_probability(&self) -> f64 {
        *self.0.last().expect("belief is non-empty")
    }

    pub fn validate(&self) -> Result<()> {
        check_stochastic("belief", &self.0)
    }
}

/// One forward-filtering step.
///
/// The belief is first pushed through the transition model; then:
/// with an observation, or in the field of view without one (treated as a
/// background observation), the matching measurement column is applied and
/// the result renormalized; out of view without an observation the
/// prediction stands with no measurement factor.
pub fn forward_update(
    belief: &Belief,
    observation: Option<usize>,
    in_fov: bool,
    model: &HmmModel,
) -> Result<Belief> {
    let k = model.n_hidden();
    if belief.0.len() != k {
        return Err(Error::Config(format!(
            "belief has {} states, model has {k}",
            belief.0.len()
        )));
    }
    let mut pred = vec![0.0; k];
    for (from, &mass) in belief.0.iter().enumerate() {
        for (to, p) in pred.iter_mut().enumerate() {
            *p += model.transition[from][to] * mass;
        }
    }
    let symbol = match (observation, in_fov) {
        (Some(c), _) => c,
        (None, true) => model.background_observation(),
        (None, false) => {
            // Transition only; renormalize to absorb float drift.
            let sum: f64 = pred.iter().sum();
            for p in &mut pred {
                *p /= sum;
            }
            return Ok(Belief(pred));
        }
    };
    if symbol >= model.n_observed() {
        return Err(Error::Config(format!(
            "observation {symbol} out of range for {} symbols",
            model.n_observed()
        )));
    }
    for (x, p) in pred.iter_mut().enumerate() {
        *p *= model.measurement[x][symbol];
    }
    let sum: f64 = pred.iter().sum();
    if sum <= 0.0 {
        return Err(Error::ModelDegenerate);
    }
    for p in &mut pred {
        *p /= sum;
    }
    Ok(Belief(pred))
}

/// Estimates a model from labeled sequences of `(true class, observed
/// class)` pairs by additive (Dirichlet) smoothing: each probability is
/// `(count + α) / (total + α·n)`.
///
/// The prior comes from label frequencies over all pairs, transitions from
/// consecutive true-class pairs within each sequence, and the measurement
/// matrix from (true, observed) co-occurrence.
pub fn estimate_model(
    sequences: &[Vec<(usize, usize)>],
    n_hidden: usize,
    n_observed: usize,
    alpha: f64,
) -> Result<HmmModel> {
    if !(alpha > 0.0) {
        return Err(Error::Config(format!("dirichlet alpha must be positive, got {alpha}")));
    }
    if n_hidden == 0 || n_observed == 0 {
        return Err(Error::Config("state spaces must be non-empty".into()));
    }
    let total_pairs: usize = sequences.iter().map(Vec::len).sum();
    if total_pairs == 0 {
        return Err(Error::InsufficientData("no labeled pairs to estimate from".into()));
    }
    let mut label = vec![0usize; n_hidden];
    let mut trans = vec![vec![0usize; n_hidden]; n_hidden];
    let mut obs = vec![vec![0usize; n_observed]; n_hidden];
    for seq in sequences {
        for window in seq.windows(2) {
            trans[window[0].0][window[1].0] += 1;
        }
        for &(true_class, observed) in seq {
            if true_class >= n_hidden || observed >= n_observed {
                return Err(Error::Config(format!(
                    "label ({true_class}, {observed}) out of range {n_hidden}x{n_observed}"
                )));
            }
            label[true_class] += 1;
            obs[true_class][observed] += 1;
        }
    }
    let smooth = |counts: &[usize], n: usize| -> Vec<f64> {
        let total: usize = counts.iter().sum();
        let denom = total as f64 + alpha * n as f64;
        counts.iter().map(|&c| (c as f64 + alpha) / denom).collect()
    };
    HmmModel::new(
        smooth(&label, n_hidden),
        trans.iter().map(|row| smooth(row, n_hidden)).collect(),
        obs.iter().map(|row| smooth(row, n_observed)).collect(),
    )
}
