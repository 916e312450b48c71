use crate::dataset::PaintSampleRecord;
use crate::deposition::ThicknessField;
use crate::pointcloud::{ColorPointCloud, Rgb8};
use crate::{Error, Result};

use super::model::Model;

/// Predicted painted cloud. Points with zero thickness keep their color;
/// covered points take the clamped network prediction.
pub fn predict_cloud(
    model: &Model,
    cloud: &ColorPointCloud,
    field: &ThicknessField,
    classes: &[u32],
) -> Result<ColorPointCloud> {
    if field.len() != cloud.len() || classes.len() != cloud.len() {
        return Err(Error::domain(format!(
            "cloud has {} points, thickness {} and classes {}",
            cloud.len(),
            field.len(),
            classes.len()
        )));
    }
    let norm = model.norm();
    let covered: Vec<usize> = (0..cloud.len()).filter(|&i| field.values()[i] > 0.0).collect();
    let records: Vec<PaintSampleRecord> = covered
        .iter()
        .map(|&i| PaintSampleRecord {
            base: cloud.colors()[i].to_norm(),
            thick_norm: norm.apply(field.values()[i]),
            class_id: classes[i],
            painted: [0.0; 3],
        })
        .collect();
    let predicted = model.predict_records(&records)?;
    let mut colors = cloud.colors().to_vec();
    for (&i, p) in covered.iter().zip(predicted) {
        colors[i] = Rgb8::from_norm(p);
    }
    cloud.recolored(colors)
}
