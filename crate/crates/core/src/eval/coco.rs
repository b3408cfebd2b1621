use std::collections::BTreeMap;
use std::path::Path;

use serde::{de::DeserializeOwned, Deserialize, Serialize};

use super::{polygon_from_flat, rasterize_polygons, EvalError, GroundTruth, ImageInfo, Instance, Predictions};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CocoAnnotation {
    pub id: u64,
    pub image_id: u64,
    pub category_id: u64,
    /// One or more flat `[x1, y1, x2, y2, ...]` polygons.
    pub segmentation: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CocoPrediction {
    pub image_id: u64,
    pub category_id: u64,
    pub segmentation: Vec<Vec<f64>>,
    pub score: f64,
}

/// Ground-truth file. Fields outside this subset are ignored on read.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CocoDataset {
    pub images: Vec<ImageInfo>,
    pub annotations: Vec<CocoAnnotation>,
}

fn mask_for(segmentation: &[Vec<f64>], info: &ImageInfo, what: &str) -> Result<super::BinaryMask, EvalError> {
    let polys = segmentation
        .iter()
        .map(|p| polygon_from_flat(p))
        .collect::<Result<Vec<_>, _>>()
        .and_then(|polys| rasterize_polygons(&polys, info.width, info.height));
    polys.map_err(|e| match e {
        EvalError::BadPolygon(m) => EvalError::BadPolygon(format!("{what}: {m}")),
        other => other,
    })
}

impl CocoDataset {
    pub fn to_ground_truth(&self) -> Result<GroundTruth, EvalError> {
        let mut images = BTreeMap::new();
        for img in &self.images {
            if images.insert(img.id, img.clone()).is_some() {
                return Err(EvalError::DuplicateId { kind: "image", id: img.id });
            }
        }
        let instances = self
            .annotations
            .iter()
            .map(|a| {
                let info = images.get(&a.image_id).ok_or(EvalError::UnknownImage(a.image_id))?;
                Ok(Instance {
                    id: a.id,
                    image_id: a.image_id,
                    category_id: a.category_id,
                    mask: mask_for(&a.segmentation, info, &format!("annotation {}", a.id))?,
                    score: 1.0,
                })
            })
            .collect::<Result<Vec<_>, EvalError>>()?;
        let gt = GroundTruth { images, instances };
        gt.validate()?;
        Ok(gt)
    }
}

/// Rasterizes predictions against the ground-truth image sizes; ids are
/// positions in the list.
pub fn predictions_from_coco(preds: &[CocoPrediction], gt: &GroundTruth) -> Result<Predictions, EvalError> {
    let instances = preds
        .iter()
        .enumerate()
        .map(|(k, p)| {
            let info = gt.images.get(&p.image_id).ok_or(EvalError::UnknownImage(p.image_id))?;
            Ok(Instance {
                id: k as u64,
                image_id: p.image_id,
                category_id: p.category_id,
                mask: mask_for(&p.segmentation, info, &format!("prediction {k}"))?,
                score: p.score,
            })
        })
        .collect::<Result<Vec<_>, EvalError>>()?;
    let out = Predictions { instances };
    out.validate(gt)?;
    Ok(out)
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, EvalError> {
    let text = std::fs::read_to_string(path).map_err(|source| EvalError::Io {
        path: path.display().to_string(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| EvalError::Json {
        path: path.display().to_string(),
        source,
    })
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), EvalError> {
    let text = serde_json::to_string_pretty(value).expect("plain data serializes");
    std::fs::write(path, text).map_err(|source| EvalError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn read_annotations(path: impl AsRef<Path>) -> Result<GroundTruth, EvalError> {
    read_json::<CocoDataset>(path.as_ref())?.to_ground_truth()
}

pub fn read_predictions(path: impl AsRef<Path>, gt: &GroundTruth) -> Result<Predictions, EvalError> {
    predictions_from_coco(&read_json::<Vec<CocoPrediction>>(path.as_ref())?, gt)
}

pub fn write_annotations(path: impl AsRef<Path>, ds: &CocoDataset) -> Result<(), EvalError> {
    write_json(path.as_ref(), ds)
}

pub fn write_predictions(path: impl AsRef<Path>, preds: &[CocoPrediction]) -> Result<(), EvalError> {
    write_json(path.as_ref(), preds)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn extra_fields_are_ignored() {
        let text = r#"{
            "info": {"year": 2021},
            "images": [{"id": 3, "file_name": "a.png", "width": 8, "height": 8, "license": 1}],
            "annotations": [{"id": 1, "image_id": 3, "category_id": 1, "iscrowd": 0, "area": 16,
                             "segmentation": [[0, 0, 4, 0, 4, 4, 0, 4]]}],
            "categories": [{"id": 1, "name": "cabbage"}]
        }"#;
        let ds: CocoDataset = serde_json::from_str(text).unwrap();
        let gt = ds.to_ground_truth().unwrap();
        assert_eq!(gt.instances[0].mask.count(), 16);
    }

    #[test]
    fn unknown_image_is_rejected() {
        let ds = CocoDataset {
            images: vec![],
            annotations: vec![CocoAnnotation {
                id: 1,
                image_id: 9,
                category_id: 1,
                segmentation: vec![vec![0.0, 0.0, 2.0, 0.0, 2.0, 2.0]],
            }],
        };
        assert!(matches!(ds.to_ground_truth(), Err(EvalError::UnknownImage(9))));
    }
}
