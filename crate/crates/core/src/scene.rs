//! Procedural scenes, a disc-splat pinhole renderer and camera pose sampling.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::pose::{from_axis_angle, look_at, norm3, quat_mul, Pose, Vec3};
use crate::rng::{purpose, stream};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Landmark {
    pub position: Vec3,
    pub color: [f64; 3],
}

/// Pinhole intrinsics calibrated for images `width` pixels wide.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub focal_px: f64,
    pub principal: [f64; 2],
    pub width: usize,
}

impl Intrinsics {
    /// Square camera whose focal length is `0.75 * width`.
    pub fn default_for(width: usize) -> Self {
        let w = width as f64;
        Self {
            focal_px: 0.75 * w,
            principal: [w / 2.0, w / 2.0],
            width,
        }
    }

    /// Same camera sampled at another resolution.
    pub fn at_resolution(&self, res: usize) -> Self {
        let s = res as f64 / self.width as f64;
        Self {
            focal_px: self.focal_px * s,
            principal: [self.principal[0] * s, self.principal[1] * s],
            width: res,
        }
    }

    /// Pixel coordinates (continuous, pixel centers at `i + 0.5`) of a
    /// camera-frame point in front of the camera.
    pub fn project(&self, p: &Vec3) -> [f64; 2] {
        [
            self.focal_px * p[0] / p[2] + self.principal[0],
            self.focal_px * p[1] / p[2] + self.principal[1],
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub scene_id: usize,
    pub landmarks: Vec<Landmark>,
    pub intrinsics: Intrinsics,
    /// Radius of the ball holding every landmark, meters.
    pub extent: f64,
    /// Physical radius of each landmark disc, meters.
    pub landmark_radius: f64,
    pub seed: u64,
}

pub const MIN_LANDMARKS: usize = 8;
pub const MIN_RESOLUTION: usize = 16;

/// Landmarks uniform in a ball of radius `extent`, colors uniform in [0.2, 1].
pub fn generate_scene(
    scene_id: usize,
    seed: u64,
    n_landmarks: usize,
    extent: f64,
    landmark_radius: f64,
    intrinsics: Intrinsics,
) -> Result<SceneSpec> {
    if n_landmarks < MIN_LANDMARKS {
        return Err(invalid!(
            "a scene needs at least {MIN_LANDMARKS} landmarks, got {n_landmarks}"
        ));
    }
    if !(extent > 0.0) || !(landmark_radius > 0.0) || !(intrinsics.focal_px > 0.0) {
        return Err(invalid!("scene extent, landmark radius and focal must be positive"));
    }
    let mut rng = stream(seed, purpose::SCENE, scene_id as u64);
    let landmarks = (0..n_landmarks)
        .map(|_| {
            let dir: Vec3 = loop {
                let v: Vec3 = [
                    StandardNormal.sample(&mut rng),
                    StandardNormal.sample(&mut rng),
                    StandardNormal.sample(&mut rng),
                ];
                let n = norm3(&v);
                if n > 1e-9 {
                    break [v[0] / n, v[1] / n, v[2] / n];
                }
            };
            let r = extent * rng.random::<f64>().cbrt();
            let color = [
                rng.random_range(0.2..=1.0),
                rng.random_range(0.2..=1.0),
                rng.random_range(0.2..=1.0),
            ];
            Landmark {
                position: [dir[0] * r, dir[1] * r, dir[2] * r],
                color,
            }
        })
        .collect();
    Ok(SceneSpec {
        scene_id,
        landmarks,
        intrinsics,
        extent,
        landmark_radius,
        seed,
    })
}

/// Square RGB image, row-major `H x W x 3`, values in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub resolution: usize,
    pub data: Vec<f32>,
}

impl Image {
    pub fn black(resolution: usize) -> Self {
        Self {
            resolution,
            data: vec![0.0; resolution * resolution * 3],
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn pixel(&self, row: usize, col: usize) -> [f32; 3] {
        let i = (row * self.resolution + col) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    /// Mean absolute per-value difference.
    pub fn l1(&self, other: &Image) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (*a as f64 - *b as f64).abs())
            .sum::<f64>()
            / self.data.len() as f64
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.data.iter().map(|v| *v as f64).collect()
    }
}

const NEAR_PLANE: f64 = 0.1;

/// Renders landmark discs seen from `pose`.
///
/// Discs have screen radius `focal * landmark_radius / depth` with a one
/// pixel anti-aliased rim and are composited far to near, so the nearest
/// landmark wins wherever it fully covers a pixel. Points behind the near
/// plane are skipped; the background is black.
pub fn render(scene: &SceneSpec, pose: &Pose, resolution: usize) -> Result<Image> {
    if resolution < MIN_RESOLUTION {
        return Err(invalid!(
            "render resolution must be at least {MIN_RESOLUTION}, got {resolution}"
        ));
    }
    if !pose.is_valid() {
        return Err(invalid!("render called with an invalid pose"));
    }
    let k = scene.intrinsics.at_resolution(resolution);
    let mut visible: Vec<(f64, usize, [f64; 2], f64)> = scene
        .landmarks
        .iter()
        .enumerate()
        .filter_map(|(i, lm)| {
            let pc = pose.world_to_camera(&lm.position);
            if pc[2] <= NEAR_PLANE {
                return None;
            }
            let uv = k.project(&pc);
            let r = k.focal_px * scene.landmark_radius / pc[2];
            Some((pc[2], i, uv, r))
        })
        .collect();
    visible.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));

    let res = resolution as isize;
    let mut img = vec![0.0f64; resolution * resolution * 3];
    for (_, i, uv, r) in visible {
        let color = scene.landmarks[i].color;
        let reach = r + 0.5;
        let c0 = ((uv[0] - reach).floor() as isize).max(0);
        let c1 = ((uv[0] + reach).ceil() as isize).min(res - 1);
        let r0 = ((uv[1] - reach).floor() as isize).max(0);
        let r1 = ((uv[1] + reach).ceil() as isize).min(res - 1);
        for row in r0..=r1 {
            for col in c0..=c1 {
                let dx = col as f64 + 0.5 - uv[0];
                let dy = row as f64 + 0.5 - uv[1];
                let cover = (reach - (dx * dx + dy * dy).sqrt()).clamp(0.0, 1.0);
                if cover == 0.0 {
                    continue;
                }
                let p = (row as usize * resolution + col as usize) * 3;
                for ch in 0..3 {
                    img[p + ch] = img[p + ch] * (1.0 - cover) + color[ch] * cover;
                }
            }
        }
    }
    Ok(Image {
        resolution,
        data: img.into_iter().map(|v| v.clamp(0.0, 1.0) as f32).collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplingMode {
    /// Cameras along a closed orbit around the scene whose radius sweeps
    /// 1.5-2.5x the extent, with small position and orientation jitter.
    OrbitShell,
    /// Cameras anywhere in the shell between 1.5x and 2.5x the extent.
    RandomJitter,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoseSampling {
    pub mode: SamplingMode,
    /// Per-axis standard deviation of the position jitter, meters.
    pub position_jitter: f64,
    /// Standard deviation of the orientation jitter angle, degrees.
    pub orientation_jitter_deg: f64,
}

impl Default for PoseSampling {
    fn default() -> Self {
        Self {
            mode: SamplingMode::OrbitShell,
            position_jitter: 0.05,
            orientation_jitter_deg: 4.0,
        }
    }
}

/// Camera radius as a multiple of the extent along the orbit.
fn orbit_radius(theta: f64) -> f64 {
    2.0 + 0.5 * (3.0 * theta).sin()
}

fn orbit_height(theta: f64) -> f64 {
    0.3 * (2.0 * theta).sin()
}

/// Small random rotation with angle ~ N(0, sigma) about a uniform axis.
pub(crate) fn jitter_rotation<R: Rng>(rng: &mut R, sigma_deg: f64) -> [f64; 4] {
    let axis: Vec3 = [
        StandardNormal.sample(rng),
        StandardNormal.sample(rng),
        StandardNormal.sample(rng),
    ];
    let z: f64 = StandardNormal.sample(rng);
    from_axis_angle(&axis, (z * sigma_deg).to_radians())
}

/// Samples `n` camera poses around `scene`, each from its own stream keyed
/// by `(seed, index)`.
pub fn sample_poses(
    scene: &SceneSpec,
    n: usize,
    seed: u64,
    split_purpose: u64,
    sampling: &PoseSampling,
) -> Result<Vec<Pose>> {
    if n == 0 {
        return Err(invalid!("sample_poses needs n >= 1"));
    }
    let e = scene.extent;
    (0..n)
        .map(|i| {
            let key = (scene.scene_id as u64) << 32 | i as u64;
            let mut rng = stream(seed, split_purpose, key);
            let center = match sampling.mode {
                SamplingMode::OrbitShell => {
                    let theta = rng.random::<f64>() * std::f64::consts::TAU;
                    let r = e * orbit_radius(theta);
                    [r * theta.cos(), r * theta.sin(), e * orbit_height(theta)]
                }
                SamplingMode::RandomJitter => {
                    let theta = rng.random::<f64>() * std::f64::consts::TAU;
                    let elev = rng.random_range(-20.0f64..40.0).to_radians();
                    let r = e * rng.random_range(1.5..2.5);
                    [
                        r * elev.cos() * theta.cos(),
                        r * elev.cos() * theta.sin(),
                        r * elev.sin(),
                    ]
                }
            };
            let j = sampling.position_jitter;
            let noise: [f64; 3] = std::array::from_fn(|_| StandardNormal.sample(&mut rng));
            let x = [
                center[0] + j * noise[0],
                center[1] + j * noise[1],
                center[2] + j * noise[2],
            ];
            let base = look_at(&x, &[0.0; 3])?;
            let jit = jitter_rotation(&mut rng, sampling.orientation_jitter_deg);
            Pose::new(x, quat_mul(&base, &jit))
        })
        .collect()
}
