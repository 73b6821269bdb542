//! Scenes and effective channel interactions.
//!
//! Every echo and link gain is evaluated through scalar inner products
//! `a(θ,φ,f_n) · b_n`; the `M x M` channel matrices are rank one per path
//! and never materialized.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::beamforming::BeamformerWeights;
use crate::config::SystemConfig;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Target {
    pub theta: f64,
    pub phi: f64,
    pub distance: f64,
    /// Radar cross section, m².
    pub rcs: f64,
}

/// Swerling-I clutter scatterer; `fading` is held for the whole trial.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Clutterer {
    pub theta: f64,
    pub phi: f64,
    pub distance: f64,
    pub rcs: f64,
    pub fading: Complex64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct User {
    pub theta: f64,
    pub phi: f64,
    pub distance: f64,
    /// Receiver noise variance per subcarrier, W.
    pub noise_var: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub targets: Vec<Target>,
    pub clutterers: Vec<Clutterer>,
    pub users: Vec<User>,
    pub rng_seed: u64,
}

impl Scene {
    pub fn empty() -> Self {
        Self {
            targets: Vec::new(),
            clutterers: Vec::new(),
            users: Vec::new(),
            rng_seed: 0,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scene serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Other(format!("scene parse error: {e}")))
    }

    pub fn target_angles(&self) -> Vec<(f64, f64)> {
        self.targets.iter().map(|t| (t.theta, t.phi)).collect()
    }
}

impl Target {
    pub fn new(cfg: &SystemConfig, theta: f64, phi: f64) -> Self {
        Self {
            theta,
            phi,
            distance: cfg.slant_range(theta),
            rcs: cfg.rcs_m2(),
        }
    }
}

impl User {
    pub fn new(cfg: &SystemConfig, theta: f64, phi: f64) -> Self {
        Self {
            theta,
            phi,
            distance: cfg.slant_range(theta),
            noise_var: subcarrier_noise_variance(cfg),
        }
    }
}

/// Round-trip sensing attenuation `α = λ M √σ / ((4π)^{3/2} l²)`.
pub fn sensing_attenuation(cfg: &SystemConfig, distance: f64, rcs: f64) -> f64 {
    let lambda = cfg.wavelength();
    let m = cfg.num_elements() as f64;
    lambda * m * rcs.sqrt() / ((4.0 * PI).powf(1.5) * distance * distance)
}

/// One-way link attenuation `β = λ √M / (4π l)`.
pub fn comm_attenuation(cfg: &SystemConfig, distance: f64) -> f64 {
    cfg.wavelength() * (cfg.num_elements() as f64).sqrt() / (4.0 * PI * distance)
}

/// `exp(-j 2π k l / λ)`, with the path length reduced modulo λ first.
fn propagation_phasor(cfg: &SystemConfig, distance: f64, round_trip: bool) -> Complex64 {
    let lambda = cfg.wavelength();
    let k = if round_trip { 2.0 } else { 1.0 };
    let frac = (k * distance / lambda).fract();
    Complex64::from_polar(1.0, -2.0 * PI * frac)
}

/// Noise variance per subcarrier, `10^(PSD/10) · 1e-3 · F / N` W.
pub fn subcarrier_noise_variance(cfg: &SystemConfig) -> f64 {
    10f64.powf(cfg.noise_psd_dbm_hz / 10.0) * 1e-3 * cfg.bandwidth / cfg.subcarriers as f64
}

/// `bᴴ G_n b` for the scene on subcarrier `n`.
pub fn echo_gain(
    cfg: &SystemConfig,
    scene: &Scene,
    weights: &BeamformerWeights,
    n: usize,
    include_clutter: bool,
) -> Complex64 {
    let los: Complex64 = scene
        .targets
        .iter()
        .map(|t| {
            let g = weights.gain(t.theta, t.phi, n).norm_sqr();
            sensing_attenuation(cfg, t.distance, t.rcs) * g * propagation_phasor(cfg, t.distance, true)
        })
        .sum();
    if !include_clutter {
        return los;
    }
    let kappa = cfg.kappa();
    let mut total = (kappa / (1.0 + kappa)).sqrt() * los;
    if !scene.clutterers.is_empty() {
        let nlos: Complex64 = scene
            .clutterers
            .iter()
            .map(|c| {
                let g = weights.gain(c.theta, c.phi, n).norm_sqr();
                sensing_attenuation(cfg, c.distance, c.rcs) * g * c.fading
            })
            .sum();
        total += (1.0 / (1.0 + kappa)).sqrt() / (scene.clutterers.len() as f64).sqrt() * nlos;
    }
    total
}

/// `h_n(user) · w_n`.
pub fn comm_gain(cfg: &SystemConfig, user: &User, weights: &BeamformerWeights, n: usize) -> Complex64 {
    comm_attenuation(cfg, user.distance)
        * propagation_phasor(cfg, user.distance, false)
        * weights.gain(user.theta, user.phi, n)
}

/// Parameters of a random scene draw.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub targets: usize,
    pub users: usize,
    pub include_clutter: bool,
    /// Minimum angle between any two user direction vectors, rad.
    pub min_user_separation: f64,
    pub max_placement_attempts: usize,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            targets: 1,
            users: 0,
            include_clutter: true,
            min_user_separation: 20f64.to_radians(),
            max_placement_attempts: 10_000,
        }
    }
}

fn uniform_roi<R: Rng + ?Sized>(cfg: &SystemConfig, rng: &mut R) -> (f64, f64) {
    let theta = rng.random_range(cfg.theta_min..=cfg.theta_max);
    let phi = rng.random_range(cfg.phi_min..=cfg.phi_max);
    (theta, phi)
}

fn unit_direction(theta: f64, phi: f64) -> [f64; 3] {
    [theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos()]
}

/// Angle between the two pointing directions, rad.
pub fn angular_separation(a: (f64, f64), b: (f64, f64)) -> f64 {
    let u = unit_direction(a.0, a.1);
    let v = unit_direction(b.0, b.1);
    let dot: f64 = u.iter().zip(&v).map(|(x, y)| x * y).sum();
    dot.clamp(-1.0, 1.0).acos()
}

/// Draw a scene from `rng`. Targets and clutter are uniform in `(θ, φ)` over the
/// ROI; users are uniform subject to the minimum pairwise separation.
pub fn generate_scene_with<R: Rng + ?Sized>(
    cfg: &SystemConfig,
    spec: &SceneSpec,
    rng: &mut R,
    seed: u64,
) -> Result<Scene> {
    let targets = (0..spec.targets)
        .map(|_| {
            let (t, p) = uniform_roi(cfg, rng);
            Target::new(cfg, t, p)
        })
        .collect();
    let clutter_count = if spec.include_clutter { cfg.clutter_count } else { 0 };
    let clutterers = (0..clutter_count)
        .map(|_| {
            let (theta, phi) = uniform_roi(cfg, rng);
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            Clutterer {
                theta,
                phi,
                distance: cfg.slant_range(theta),
                rcs: cfg.clutter_rcs_m2(),
                fading: Complex64::new(re, im) / 2f64.sqrt(),
            }
        })
        .collect();
    let mut users: Vec<User> = Vec::with_capacity(spec.users);
    let mut attempts = 0;
    while users.len() < spec.users {
        if attempts >= spec.max_placement_attempts {
            return Err(Error::Placement(format!(
                "placed {} of {} users with {:.1} deg separation after {} attempts",
                users.len(),
                spec.users,
                spec.min_user_separation.to_degrees(),
                attempts
            )));
        }
        attempts += 1;
        let cand = uniform_roi(cfg, rng);
        if users
            .iter()
            .all(|u| angular_separation((u.theta, u.phi), cand) >= spec.min_user_separation)
        {
            users.push(User::new(cfg, cand.0, cand.1));
        }
    }
    Ok(Scene {
        targets,
        clutterers,
        users,
        rng_seed: seed,
    })
}

/// Deterministic scene draw from a seed.
pub fn generate_scene(cfg: &SystemConfig, spec: &SceneSpec, seed: u64) -> Result<Scene> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    generate_scene_with(cfg, spec, &mut rng, seed)
}
