//! Ground-plane multi-target tracking: constant-velocity Kalman filters,
//! gated Hungarian association, and per-track class-belief filtering.
//!
//! State is `[x, y, vx, vy]` in ground coordinates (meters, meters/second);
//! observations are detector ground positions. Track lifecycle: every
//! unmatched detection spawns a track, and a track is deleted when its
//! position uncertainty grows past a threshold or its belief decides the
//! track is clutter.

use nalgebra::{Matrix2, Matrix2x4, Matrix4, Vector2, Vector4};
use serde::{Deserialize, Serialize};

use crate::belief::{forward_update, Belief, HmmModel};
use crate::classes::{ClassId, NUM_CLASSES};
use crate::detection::Detection;
use crate::hungarian::min_cost_assignment;
use crate::{Error, Result};

/// Stand-in cost for gated (infeasible) pairs. Large enough that feasible
/// pairs always win, small enough that sums of them stay exact in f64.
const GATED_COST: f64 = 1e12;

fn observation_matrix() -> Matrix2x4<f64> {
    Matrix2x4::new(1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0)
}

/// Constant-velocity Kalman filter state over `[x, y, vx, vy]`.
#[derive(Debug, Clone, PartialEq)]
pub struct KalmanState {
    pub mean: Vector4<f64>,
    pub cov: Matrix4<f64>,
}

impl KalmanState {
    /// New state at `position` with zero velocity and diagonal covariance.
    pub fn new(position: [f64; 2], position_var: f64, velocity_var: f64) -> KalmanState {
        KalmanState {
            mean: Vector4::new(position[0], position[1], 0.0, 0.0),
            cov: Matrix4::from_diagonal(&Vector4::new(
                position_var,
                position_var,
                velocity_var,
                velocity_var,
            )),
        }
    }

    fn symmetrize(&mut self) {
        self.cov = (self.cov + self.cov.transpose()) * 0.5;
    }

    /// Propagates the state `dt` seconds with white-noise acceleration of
    /// spectral density `q` (the integrated continuous-time noise).
    pub fn predict(&mut self, dt: f64, q: f64) {
        let f = Matrix4::new(
            1.0, 0.0, dt, 0.0, //
            0.0, 1.0, 0.0, dt, //
            0.0, 0.0, 1.0, 0.0, //
            0.0, 0.0, 0.0, 1.0,
        );
        let dt2 = dt * dt;
        let dt3 = dt2 * dt;
        let process = Matrix4::new(
            dt3 / 3.0,
            0.0,
            dt2 / 2.0,
            0.0,
            0.0,
            dt3 / 3.0,
            0.0,
            dt2 / 2.0,
            dt2 / 2.0,
            0.0,
            dt,
            0.0,
            0.0,
            dt2 / 2.0,
            0.0,
            dt,
        ) * q;
        self.mean = f * self.mean;
        self.cov = f * self.cov * f.transpose() + process;
        self.symmetrize();
    }

    fn innovation(&self, z: [f64; 2], r: &Matrix2<f64>) -> Result<(Vector2<f64>, Matrix2<f64>)> {
        let h = observation_matrix();
        let residual = Vector2::new(z[0], z[1]) - h * self.mean;
        let s = h * self.cov * h.transpose() + r;
        let s_inv = s
            .try_inverse()
            .ok_or_else(|| Error::Numeric("singular innovation covariance".into()))?;
        Ok((residual, s_inv))
    }

    /// Squared Mahalanobis distance of measurement `z` under noise `r`.
    pub fn mahalanobis2(&self, z: [f64; 2], r: &Matrix2<f64>) -> Result<f64> {
        let (residual, s_inv) = self.innovation(z, r)?;
        Ok((residual.transpose() * s_inv * residual)[(0, 0)])
    }

    /// Measurement update in Joseph form, which keeps the covariance
    /// positive semidefinite under roundoff.
    pub fn update(&mut self, z: [f64; 2], r: &Matrix2<f64>) -> Result<()> {
        let h = observation_matrix();
        let (residual, s_inv) = self.innovation(z, r)?;
        let gain = self.cov * h.transpose() * s_inv;
        self.mean += gain * residual;
        let i_kh = Matrix4::identity() - gain * h;
        self.cov = i_kh * self.cov * i_kh.transpose() + gain * r * gain.transpose();
        self.symmetrize();
        Ok(())
    }

    pub fn position(&self) -> [f64; 2] {
        [self.mean[0], self.mean[1]]
    }

    pub fn velocity(&self) -> [f64; 2] {
        [self.mean[2], self.mean[3]]
    }

    /// Position uncertainty: the larger positional standard deviation.
    pub fn sigma_pos(&self) -> f64 {
        self.cov[(0, 0)].max(self.cov[(1, 1)]).max(0.0).sqrt()
    }
}

/// Kalman noise parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseConfig {
    /// Process noise spectral density (m²/s³).
    pub q: f64,
    /// Measurement noise covariance (m²), row-major 2×2.
    pub r: [[f64; 2]; 2],
}

impl Default for NoiseConfig {
    fn default() -> NoiseConfig {
        NoiseConfig { q: 0.5, r: [[0.04, 0.0], [0.0, 0.04]] }
    }
}

impl NoiseConfig {
    pub fn r_matrix(&self) -> Matrix2<f64> {
        Matrix2::new(self.r[0][0], self.r[0][1], self.r[1][0], self.r[1][1])
    }
}

/// Tracker tuning. Defaults suit a 15 Hz frame rate: a freshly spawned
/// track that is never observed again coasts for 16 frames before the
/// position uncertainty passes the deletion bound, and a well-confirmed
/// track (whose uncertainty starts much lower) rides out twenty-odd
/// frames of full occlusion, comfortably past the ten-frame gaps people
/// crossing behind each other produce.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrackerConfig {
    pub noise: NoiseConfig,
    /// Positional variance of a freshly spawned track (m²).
    pub initial_position_var: f64,
    /// Velocity variance of a freshly spawned track (m²/s²).
    pub initial_velocity_var: f64,
    /// Association gate on squared Mahalanobis distance; 9.21 is the 99%
    /// chi-square quantile with two degrees of freedom.
    pub gate_d2: f64,
    /// Delete a track once `sigma_pos` exceeds this (meters).
    pub delete_sigma_pos: f64,
    /// Delete a track once its clutter belief exceeds this.
    pub delete_background_prob: f64,
}

impl Default for TrackerConfig {
    fn default() -> TrackerConfig {
        TrackerConfig {
            noise: NoiseConfig::default(),
            initial_position_var: 0.25,
            initial_velocity_var: 1.0,
            gate_d2: 9.21,
            delete_sigma_pos: 1.3,
            delete_background_prob: 0.9,
        }
    }
}

/// Attention cone on the ground plane: targets count as observable when
/// within `max_range_m` of the camera and within `half_angle_deg` of its
/// forward axis. Tracks outside it skip the implicit background
/// measurement when undetected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FieldOfView {
    pub max_range_m: f64,
    pub half_angle_deg: f64,
}

impl Default for FieldOfView {
    fn default() -> FieldOfView {
        FieldOfView { max_range_m: 3.0, half_angle_deg: 20.0 }
    }
}

impl FieldOfView {
    /// `camera` and `target` are ground positions; `forward` is the
    /// camera's ground-plane heading (need not be normalized).
    pub fn contains(&self, camera: [f64; 2], forward: [f64; 2], target: [f64; 2]) -> bool {
        let dx = target[0] - camera[0];
        let dy = target[1] - camera[1];
        let range = (dx * dx + dy * dy).sqrt();
        if range > self.max_range_m {
            return false;
        }
        if range == 0.0 {
            return true;
        }
        let f_norm = (forward[0] * forward[0] + forward[1] * forward[1]).sqrt();
        if f_norm == 0.0 {
            return false;
        }
        let cos = ((dx * forward[0] + dy * forward[1]) / (range * f_norm)).clamp(-1.0, 1.0);
        cos.acos().to_degrees() <= self.half_angle_deg
    }
}

/// A detection reduced to what the tracker consumes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackObservation {
    /// Ground position (meters).
    pub position: [f64; 2],
    pub class: ClassId,
}

impl From<&Detection> for TrackObservation {
    fn from(d: &Detection) -> TrackObservation {
        TrackObservation { position: d.pos_world, class: d.class }
    }
}

/// One tracked person hypothesis.
#[derive(Debug, Clone)]
pub struct Track {
    /// Stable identifier, unique for the tracker's lifetime; never reused.
    pub id: u64,
    pub state: KalmanState,
    pub belief: Belief,
    /// Consecutive frames since the last matched detection.
    pub frames_since_observation: u32,
    /// Frame id at which the track was spawned.
    pub created_at: u64,
}

impl Track {
    /// Most likely class; clutter-dominated tracks report Background.
    pub fn class(&self) -> ClassId {
        ClassId::from_index(self.belief.argmax()).expect("belief is over the class set")
    }
}

/// Result of gated association between predicted tracks and observations.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Association {
    /// `(track index, observation index)` pairs, ascending by track index.
    pub matched: Vec<(usize, usize)>,
    pub unmatched_tracks: Vec<usize>,
    pub unmatched_observations: Vec<usize>,
}

/// Optimal assignment of observations to predicted tracks by squared
/// Mahalanobis distance, with pairs beyond `gate_d2` dissolved afterwards.
pub fn associate(
    tracks: &[Track],
    observations: &[TrackObservation],
    noise: &NoiseConfig,
    gate_d2: f64,
) -> Result<Association> {
    let r = noise.r_matrix();
    let mut cost = vec![vec![0.0; observations.len()]; tracks.len()];
    let mut feasible = vec![vec![false; observations.len()]; tracks.len()];
    for (i, track) in tracks.iter().enumerate() {
        for (j, obs) in observations.iter().enumerate() {
            let d2 = track.state.mahalanobis2(obs.position, &r)?;
            feasible[i][j] = d2 <= gate_d2;
            cost[i][j] = if feasible[i][j] { d2 } else { GATED_COST };
        }
    }
    let mut matched = Vec::new();
    let mut matched_obs = vec![false; observations.len()];
    if !tracks.is_empty() && !observations.is_empty() {
        for (i, assigned) in min_cost_assignment(&cost).into_iter().enumerate() {
            if let Some(j) = assigned {
                if feasible[i][j] {
                    matched.push((i, j));
                    matched_obs[j] = true;
                }
            }
        }
    }
    let matched_tracks: Vec<bool> = {
        let mut v = vec![false; tracks.len()];
        for &(i, _) in &matched {
            v[i] = true;
        }
        v
    };
    Ok(Association {
        matched,
        unmatched_tracks: (0..tracks.len()).filter(|&i| !matched_tracks[i]).collect(),
        unmatched_observations: (0..observations.len()).filter(|&j| !matched_obs[j]).collect(),
    })
}

/// Multi-target tracker with per-track class beliefs.
pub struct Tracker {
    pub config: TrackerConfig,
    hmm: HmmModel,
    tracks: Vec<Track>,
    next_id: u64,
}

impl Tracker {
    /// The belief model must span the class set: one hidden state and one
    /// observation symbol per class (clutter and background last).
    pub fn new(config: TrackerConfig, hmm: HmmModel) -> Result<Tracker> {
        if hmm.n_hidden() != NUM_CLASSES || hmm.n_observed() != NUM_CLASSES {
            return Err(Error::Config(format!(
                "tracker needs a {NUM_CLASSES}x{NUM_CLASSES} belief model, got {}x{}",
                hmm.n_hidden(),
                hmm.n_observed()
            )));
        }
        hmm.validate()?;
        Ok(Tracker { config, hmm, tracks: Vec::new(), next_id: 1 })
    }

    pub fn tracks(&self) -> &[Track] {
        &self.tracks
    }

    pub fn hmm(&self) -> &HmmModel {
        &self.hmm
    }

    /// Advances the tracker one frame: predict, associate, update, spawn,
    /// delete. `in_fov` reports whether a ground position is observable;
    /// undetected tracks inside the cone receive an implicit background
    /// observation, those outside it only the transition model.
    pub fn step(
        &mut self,
        observations: &[TrackObservation],
        dt: f64,
        frame_id: u64,
        in_fov: impl Fn([f64; 2]) -> bool,
    ) -> Result<()> {
        let q = self.config.noise.q;
        let r = self.config.noise.r_matrix();
        for track in &mut self.tracks {
            track.state.predict(dt, q);
        }
        let assoc = associate(&self.tracks, observations, &self.config.noise, self.config.gate_d2)?;
        for &(i, j) in &assoc.matched {
            let track = &mut self.tracks[i];
            let obs = &observations[j];
            track.state.update(obs.position, &r)?;
            track.frames_since_observation = 0;
            track.belief = forward_update(&track.belief, Some(obs.class.index()), true, &self.hmm)?;
        }
        for &i in &assoc.unmatched_tracks {
            let track = &mut self.tracks[i];
            track.frames_since_observation += 1;
            let visible = in_fov(track.state.position());
            track.belief = forward_update(&track.belief, None, visible, &self.hmm)?;
        }
        for &j in &assoc.unmatched_observations {
            let obs = &observations[j];
            let belief = forward_update(
                &Belief::from_prior(&self.hmm),
                Some(obs.class.index()),
                true,
                &self.hmm,
            )?;
            self.tracks.push(Track {
                id: self.next_id,
                state: KalmanState::new(
                    obs.position,
                    self.config.initial_position_var,
                    self.config.initial_velocity_var,
                ),
                belief,
                frames_since_observation: 0,
                created_at: frame_id,
            });
            self.next_id += 1;
        }
        let sigma_limit = self.config.delete_sigma_pos;
        let clutter_limit = self.config.delete_background_prob;
        self.tracks.retain(|t| {
            t.state.sigma_pos() <= sigma_limit
                && t.belief.background_probability() <= clutter_limit
        });
        Ok(())
    }
}
