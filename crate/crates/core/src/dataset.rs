//! Posed-image datasets on disk: `manifest.toml` next to one PPM per view.
//!
//! Manifest keys:
//! - `resolution = [width, height]`
//! - `[intrinsics]` with `focal`, `cx`, `cy` (pixels)
//! - optional `[scene]`, the generating scene description
//! - `[[views]]` with `image` (path relative to the manifest), `train` (bool) and
//!   `pose` (16 numbers, row-major camera-to-world; camera looks along +z, y down)

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::render::Camera;
use crate::scenes::{Dataset, SceneSpec, View};

pub const MANIFEST: &str = "manifest.toml";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Intrinsics {
    pub focal: f64,
    pub cx: f64,
    pub cy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ViewEntry {
    pub image: String,
    pub train: bool,
    pub pose: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub resolution: [usize; 2],
    pub intrinsics: Intrinsics,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scene: Option<SceneSpec>,
    pub views: Vec<ViewEntry>,
}

pub fn save_dataset(dataset: &Dataset, dir: &Path) -> Result<()> {
    let first = dataset
        .views
        .first()
        .ok_or_else(|| Error::invalid("cannot save an empty dataset"))?
        .camera;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut views = Vec::with_capacity(dataset.views.len());
    for (i, v) in dataset.views.iter().enumerate() {
        let c = &v.camera;
        if (c.width, c.height, c.focal, c.cx, c.cy) != (first.width, first.height, first.focal, first.cx, first.cy) {
            return Err(Error::invalid("all views must share intrinsics"));
        }
        let name = format!("view_{i:03}.ppm");
        v.image.write_ppm(&dir.join(&name))?;
        views.push(ViewEntry { image: name, train: v.train, pose: c.pose_matrix().to_vec() });
    }
    let manifest = Manifest {
        resolution: [first.width, first.height],
        intrinsics: Intrinsics { focal: first.focal, cx: first.cx, cy: first.cy },
        scene: dataset.scene.clone(),
        views,
    };
    let text = toml::to_string(&manifest).map_err(|e| Error::Format(e.to_string()))?;
    let path = dir.join(MANIFEST);
    std::fs::write(&path, text).map_err(|e| Error::io(path, e))
}

pub fn load_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join(MANIFEST);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    toml::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

impl Manifest {
    pub fn camera(&self, view: usize) -> Result<Camera> {
        let entry = self
            .views
            .get(view)
            .ok_or_else(|| Error::invalid(format!("dataset has no view {view}")))?;
        let pose: [f64; 16] = entry
            .pose
            .as_slice()
            .try_into()
            .map_err(|_| Error::Format(format!("view {view}: pose needs 16 numbers")))?;
        let [w, h] = self.resolution;
        Camera::from_pose(w, h, self.intrinsics.focal, self.intrinsics.cx, self.intrinsics.cy, &pose)
    }
}

pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let manifest = load_manifest(dir)?;
    let views = manifest
        .views
        .iter()
        .enumerate()
        .map(|(i, entry)| {
            let camera = manifest.camera(i)?;
            let image = Image::read_ppm(&dir.join(&entry.image))?;
            if (image.width(), image.height()) != (camera.width, camera.height) {
                return Err(Error::Format(format!("view {i}: image size disagrees with manifest")));
            }
            Ok(View { camera, image, train: entry.train })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset { scene: manifest.scene, views })
}
