//! Bounding-box annotations and crop extraction.
//!
//! Boxes use pixel indices with the origin at the top-left corner, inclusive
//! minimum and exclusive maximum.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::image::GrayImage;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AnnotationError {
    InvalidBox { xmin: i64, ymin: i64, xmax: i64, ymax: i64 },
    EmptyLabel,
    InvalidSize { width: i64, height: i64 },
    DimensionMismatch { image: (usize, usize), annotation: (usize, usize) },
}

impl fmt::Display for AnnotationError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::InvalidBox { xmin, ymin, xmax, ymax } => {
                write!(f, "invalid box ({xmin},{ymin},{xmax},{ymax}): need xmin < xmax and ymin < ymax")
            }
            Self::EmptyLabel => f.write_str("object label is empty"),
            Self::InvalidSize { width, height } => write!(f, "invalid image size {width}x{height}"),
            Self::DimensionMismatch { image, annotation } => write!(
                f,
                "image is {}x{} but annotation declares {}x{}",
                image.0, image.1, annotation.0, annotation.1
            ),
        }
    }
}

impl core::error::Error for AnnotationError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BBox {
    pub xmin: usize,
    pub ymin: usize,
    pub xmax: usize,
    pub ymax: usize,
}

impl BBox {
    /// Clamps raw coordinates to `[0, width] x [0, height]` and validates.
    pub fn clamped(xmin: i64, ymin: i64, xmax: i64, ymax: i64, width: usize, height: usize) -> Result<Self, AnnotationError> {
        let cx = |v: i64| v.clamp(0, width as i64);
        let cy = |v: i64| v.clamp(0, height as i64);
        let (x0, y0, x1, y1) = (cx(xmin), cy(ymin), cx(xmax), cy(ymax));
        if x0 >= x1 || y0 >= y1 {
            return Err(AnnotationError::InvalidBox { xmin, ymin, xmax, ymax });
        }
        Ok(Self { xmin: x0 as usize, ymin: y0 as usize, xmax: x1 as usize, ymax: y1 as usize })
    }

    pub fn width(&self) -> usize {
        self.xmax - self.xmin
    }

    pub fn height(&self) -> usize {
        self.ymax - self.ymin
    }

    pub fn is_valid_within(&self, width: usize, height: usize) -> bool {
        self.xmin < self.xmax && self.ymin < self.ymax && self.xmax <= width && self.ymax <= height
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnnotatedObject {
    pub label: String,
    pub bbox: BBox,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Annotation {
    pub image_filename: String,
    pub image_width: usize,
    pub image_height: usize,
    pub objects: Vec<AnnotatedObject>,
}

/// How raw `bndbox` numbers map to pixel indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CoordinateBase {
    /// Values are already 0-based with exclusive max.
    #[default]
    ZeroBased,
    /// Values are 1-based inclusive (xmin/ymin are shifted down by one).
    OneBased,
}

impl Annotation {
    /// Builds an annotation from raw parsed numbers, applying the coordinate
    /// convention, clamping boxes to the image and validating them.
    pub fn from_raw(
        image_filename: String,
        width: i64,
        height: i64,
        raw_objects: impl IntoIterator<Item = (String, [i64; 4])>,
        base: CoordinateBase,
    ) -> Result<Self, AnnotationError> {
        if width <= 0 || height <= 0 {
            return Err(AnnotationError::InvalidSize { width, height });
        }
        let (w, h) = (width as usize, height as usize);
        let shift = match base {
            CoordinateBase::ZeroBased => 0,
            CoordinateBase::OneBased => 1,
        };
        let mut objects = Vec::new();
        for (label, [xmin, ymin, xmax, ymax]) in raw_objects {
            if label.trim().is_empty() {
                return Err(AnnotationError::EmptyLabel);
            }
            let bbox = BBox::clamped(xmin - shift, ymin - shift, xmax, ymax, w, h)?;
            objects.push(AnnotatedObject { label, bbox });
        }
        Ok(Self { image_filename, image_width: w, image_height: h, objects })
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.objects.iter().map(|o| o.label.as_str())
    }
}

/// One crop per annotated object, in annotation order.
pub fn extract_crops(image: &GrayImage, annotation: &Annotation) -> Result<Vec<(String, GrayImage)>, AnnotationError> {
    if image.width() != annotation.image_width || image.height() != annotation.image_height {
        return Err(AnnotationError::DimensionMismatch {
            image: (image.width(), image.height()),
            annotation: (annotation.image_width, annotation.image_height),
        });
    }
    annotation
        .objects
        .iter()
        .map(|obj| {
            let b = obj.bbox;
            if !b.is_valid_within(image.width(), image.height()) {
                return Err(AnnotationError::InvalidBox {
                    xmin: b.xmin as i64,
                    ymin: b.ymin as i64,
                    xmax: b.xmax as i64,
                    ymax: b.ymax as i64,
                });
            }
            Ok((obj.label.clone(), image.crop(b.ymin, b.xmin, b.height(), b.width())))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;
    use alloc::vec;

    fn ann(objects: Vec<(&str, [i64; 4])>, w: i64, h: i64) -> Result<Annotation, AnnotationError> {
        Annotation::from_raw(
            "img.png".to_string(),
            w,
            h,
            objects.into_iter().map(|(l, b)| (l.to_string(), b)),
            CoordinateBase::ZeroBased,
        )
    }

    #[test]
    fn crops_index_arithmetic() {
        let img = GrayImage::from_fn(4, 4, |r, c| (r * 4 + c) as u8);
        let a = ann(vec![("almond", [1, 1, 3, 3])], 4, 4).unwrap();
        let crops = extract_crops(&img, &a).unwrap();
        assert_eq!(crops.len(), 1);
        assert_eq!(crops[0].0, "almond");
        assert_eq!(crops[0].1.pixels(), &[5, 6, 9, 10]);
    }

    #[test]
    fn whole_image_crop_is_identity() {
        let img = GrayImage::from_fn(5, 3, |r, c| (r * 7 + c * 3) as u8);
        let a = ann(vec![("shell", [0, 0, 5, 3])], 5, 3).unwrap();
        assert_eq!(extract_crops(&img, &a).unwrap()[0].1, img);
    }

    #[test]
    fn empty_annotation_gives_no_crops() {
        let img = GrayImage::new(4, 4);
        let a = ann(vec![], 4, 4).unwrap();
        assert!(extract_crops(&img, &a).unwrap().is_empty());
    }

    #[test]
    fn dimension_mismatch() {
        let img = GrayImage::new(4, 5);
        let a = ann(vec![], 4, 4).unwrap();
        assert!(matches!(extract_crops(&img, &a), Err(AnnotationError::DimensionMismatch { .. })));
    }

    #[test]
    fn clamping_and_inverted_boxes() {
        let a = ann(vec![("almond", [-5, -2, 50, 9])], 10, 8).unwrap();
        assert_eq!(a.objects[0].bbox, BBox { xmin: 0, ymin: 0, xmax: 10, ymax: 8 });
        assert!(matches!(ann(vec![("a", [50, 60, 10, 20])], 320, 210), Err(AnnotationError::InvalidBox { .. })));
        // Entirely outside the image collapses to an empty box.
        assert!(ann(vec![("a", [20, 1, 30, 5])], 10, 8).is_err());
        assert_eq!(ann(vec![(" ", [0, 0, 1, 1])], 2, 2), Err(AnnotationError::EmptyLabel));
        assert!(ann(vec![], 0, 4).is_err());
    }

    #[test]
    fn one_based_shifts_min_corner() {
        let a = Annotation::from_raw(
            "x".to_string(),
            10,
            10,
            vec![("a".to_string(), [1, 1, 4, 4])],
            CoordinateBase::OneBased,
        )
        .unwrap();
        assert_eq!(a.objects[0].bbox, BBox { xmin: 0, ymin: 0, xmax: 4, ymax: 4 });
    }
}
