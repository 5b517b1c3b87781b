//! Rendered train/test splits and their on-disk layout.
//!
//! A dataset directory holds `meta.json`, `{train,test}.images.bin`
//! (little-endian `f32`, sample-major, row-major `H x W x 3`) and
//! `{train,test}.poses.json` (arrays of `{x, q, scene}`).

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::pose::{position_loss, Pose, Quat, Vec3};
use crate::rng::purpose;
use crate::scene::{generate_scene, render, sample_poses, Image, Intrinsics, PoseSampling, SceneSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub n_scenes: usize,
    pub train_per_scene: usize,
    pub test_per_scene: usize,
    pub resolution: usize,
    pub seed: u64,
    pub n_landmarks: usize,
    pub extent: f64,
    pub landmark_radius: f64,
    pub sampling: PoseSampling,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            n_scenes: 1,
            train_per_scene: 400,
            test_per_scene: 100,
            resolution: 32,
            seed: 0,
            n_landmarks: 48,
            extent: 10.0,
            landmark_radius: 2.0,
            sampling: PoseSampling::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub image: Image,
    pub pose: Pose,
    pub scene: usize,
}

/// On-disk pose entry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoseRecord {
    pub x: Vec3,
    pub q: Quat,
    pub scene: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub config: DatasetConfig,
    pub scenes: Vec<SceneSpec>,
    pub train: Vec<Sample>,
    pub test: Vec<Sample>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SplitMeta {
    count: usize,
    scene_counts: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Meta {
    config: DatasetConfig,
    scenes: Vec<SceneSpec>,
    train: SplitMeta,
    test: SplitMeta,
}

fn render_split(
    scenes: &[SceneSpec],
    per_scene: usize,
    seed: u64,
    split: u64,
    cfg: &DatasetConfig,
) -> Result<Vec<Sample>> {
    let mut out = Vec::with_capacity(scenes.len() * per_scene);
    for s in scenes {
        for pose in sample_poses(s, per_scene, seed, split, &cfg.sampling)? {
            out.push(Sample {
                image: render(s, &pose, cfg.resolution)?,
                pose,
                scene: s.scene_id,
            });
        }
    }
    Ok(out)
}

/// Smallest distance between any train and any test camera position.
pub fn min_split_distance(train: &[Sample], test: &[Sample]) -> f64 {
    let mut best = f64::INFINITY;
    for a in train {
        for b in test {
            best = best.min(position_loss(&a.pose.x, &b.pose.x));
        }
    }
    best
}

impl Dataset {
    /// Generates scenes and renders both splits. `min_train` is the
    /// smallest acceptable train split (the refinement neighbor count).
    pub fn build(cfg: &DatasetConfig, min_train: usize) -> Result<Self> {
        if cfg.n_scenes == 0 || cfg.test_per_scene == 0 {
            return Err(invalid!("dataset needs at least one scene and one test sample"));
        }
        if cfg.train_per_scene < min_train.max(1) {
            return Err(invalid!(
                "train split of {} per scene is smaller than the neighbor count {}",
                cfg.train_per_scene,
                min_train
            ));
        }
        let intrinsics = Intrinsics::default_for(cfg.resolution);
        let scenes = (0..cfg.n_scenes)
            .map(|i| {
                generate_scene(
                    i,
                    cfg.seed,
                    cfg.n_landmarks,
                    cfg.extent,
                    cfg.landmark_radius,
                    intrinsics,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let train = render_split(&scenes, cfg.train_per_scene, cfg.seed, purpose::TRAIN_POSES, cfg)?;
        let test = render_split(&scenes, cfg.test_per_scene, cfg.seed, purpose::TEST_POSES, cfg)?;
        if min_split_distance(&train, &test) <= 0.0 {
            return Err(invalid!("train and test splits share a camera position"));
        }
        Ok(Self {
            config: cfg.clone(),
            scenes,
            train,
            test,
        })
    }

    pub fn resolution(&self) -> usize {
        self.config.resolution
    }

    /// Number of values in one image.
    pub fn image_len(&self) -> usize {
        let r = self.config.resolution;
        r * r * 3
    }

    pub fn extent(&self) -> f64 {
        self.config.extent
    }

    pub fn n_scenes(&self) -> usize {
        self.scenes.len()
    }

    fn scene_counts(&self, samples: &[Sample]) -> Vec<usize> {
        let mut c = vec![0; self.scenes.len()];
        for s in samples {
            c[s.scene] += 1;
        }
        c
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let meta = Meta {
            config: self.config.clone(),
            scenes: self.scenes.clone(),
            train: SplitMeta {
                count: self.train.len(),
                scene_counts: self.scene_counts(&self.train),
            },
            test: SplitMeta {
                count: self.test.len(),
                scene_counts: self.scene_counts(&self.test),
            },
        };
        write_json(&dir.join("meta.json"), &meta)?;
        for (name, samples) in [("train", &self.train), ("test", &self.test)] {
            let mut blob = Vec::with_capacity(samples.len() * self.image_len() * 4);
            for s in samples.iter() {
                for v in &s.image.data {
                    blob.extend_from_slice(&v.to_le_bytes());
                }
            }
            let path = dir.join(format!("{name}.images.bin"));
            fs::write(&path, blob).map_err(|e| Error::io(&path, e))?;
            let poses: Vec<PoseRecord> = samples
                .iter()
                .map(|s| PoseRecord {
                    x: s.pose.x,
                    q: s.pose.q,
                    scene: s.scene,
                })
                .collect();
            write_json(&dir.join(format!("{name}.poses.json")), &poses)?;
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let meta: Meta = read_json(&dir.join("meta.json"))?;
        let res = meta.config.resolution;
        let image_len = res * res * 3;
        let mut splits = Vec::new();
        for (name, split) in [("train", &meta.train), ("test", &meta.test)] {
            let path = dir.join(format!("{name}.images.bin"));
            let blob = fs::read(&path).map_err(|e| Error::io(&path, e))?;
            if blob.len() != split.count * image_len * 4 {
                return Err(Error::format(
                    &path,
                    format!(
                        "expected {} bytes for {} images, found {}",
                        split.count * image_len * 4,
                        split.count,
                        blob.len()
                    ),
                ));
            }
            let poses_path = dir.join(format!("{name}.poses.json"));
            let poses: Vec<PoseRecord> = read_json(&poses_path)?;
            if poses.len() != split.count {
                return Err(Error::format(&poses_path, "pose count disagrees with meta.json"));
            }
            let samples = poses
                .iter()
                .enumerate()
                .map(|(i, rec)| {
                    let data = blob[i * image_len * 4..(i + 1) * image_len * 4]
                        .chunks_exact(4)
                        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                        .collect();
                    let pose = Pose { x: rec.x, q: rec.q };
                    if !pose.is_valid() || rec.scene >= meta.scenes.len() {
                        return Err(Error::format(&poses_path, format!("invalid pose entry {i}")));
                    }
                    Ok(Sample {
                        image: Image {
                            resolution: res,
                            data,
                        },
                        pose,
                        scene: rec.scene,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            splits.push(samples);
        }
        let test = splits.pop().unwrap();
        let train = splits.pop().unwrap();
        Ok(Self {
            config: meta.config,
            scenes: meta.scenes,
            train,
            test,
        })
    }
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::format(path, e))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub(crate) fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::format(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(n_scenes: usize) -> DatasetConfig {
        DatasetConfig {
            n_scenes,
            train_per_scene: 12,
            test_per_scene: 4,
            ..DatasetConfig::default()
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let ds = Dataset::build(&small(2), 3).unwrap();
        let dir = tempfile::tempdir().unwrap();
        ds.save(dir.path()).unwrap();
        let back = Dataset::load(dir.path()).unwrap();
        assert_eq!(ds, back);
        // and saving again reproduces the same bytes
        let dir2 = tempfile::tempdir().unwrap();
        back.save(dir2.path()).unwrap();
        for f in ["meta.json", "train.images.bin", "test.poses.json"] {
            assert_eq!(
                fs::read(dir.path().join(f)).unwrap(),
                fs::read(dir2.path().join(f)).unwrap()
            );
        }
    }

    #[test]
    fn image_blob_sizes() {
        let cfg = DatasetConfig {
            train_per_scene: 100,
            test_per_scene: 20,
            ..DatasetConfig::default()
        };
        let ds = Dataset::build(&cfg, 3).unwrap();
        let dir = tempfile::tempdir().unwrap();
        ds.save(dir.path()).unwrap();
        let tr = fs::metadata(dir.path().join("train.images.bin")).unwrap().len();
        let te = fs::metadata(dir.path().join("test.images.bin")).unwrap().len();
        assert_eq!(tr + te, (100 * 3072 + 20 * 3072) * 4);
    }

    #[test]
    fn scene_histogram_matches_request() {
        let ds = Dataset::build(&small(3), 3).unwrap();
        assert_eq!(ds.scene_counts(&ds.train), vec![12, 12, 12]);
        assert_eq!(ds.scene_counts(&ds.test), vec![4, 4, 4]);
        assert!(min_split_distance(&ds.train, &ds.test) > 0.0);
    }

    #[test]
    fn train_smaller_than_k_rejected() {
        let cfg = DatasetConfig {
            train_per_scene: 2,
            ..small(1)
        };
        assert!(Dataset::build(&cfg, 3).is_err());
    }

    #[test]
    fn missing_directory_names_path() {
        let err = Dataset::load(Path::new("/nonexistent/ds")).unwrap_err();
        assert!(err.to_string().contains("/nonexistent/ds/meta.json"), "{err}");
    }
}
