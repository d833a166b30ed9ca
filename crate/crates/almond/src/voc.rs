//! Pascal-VOC XML annotations as written by LabelImg.

use std::fs;
use std::path::{Path, PathBuf};

use almond_core::annotation::{extract_crops, Annotation, CoordinateBase};
use serde::{Deserialize, Serialize};

use crate::error::{Error, IoContext, Result};
use crate::imageio::{read_gray, write_pgm};

fn child<'a, 'i>(node: roxmltree::Node<'a, 'i>, name: &str) -> Option<roxmltree::Node<'a, 'i>> {
    node.children().find(|c| c.is_element() && c.has_tag_name(name))
}

fn text_of(node: roxmltree::Node, path: &str) -> Result<String> {
    let mut cur = node;
    for part in path.split('/') {
        cur = child(cur, part).ok_or_else(|| Error::MissingField(path.into()))?;
    }
    Ok(cur.text().unwrap_or("").trim().to_string())
}

/// Integers, or decimals some tools emit (`"12.0"`), rounded to nearest.
fn number(node: roxmltree::Node, path: &str) -> Result<i64> {
    let text = text_of(node, path)?;
    if let Ok(v) = text.parse::<i64>() {
        return Ok(v);
    }
    match text.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v.round() as i64),
        _ => Err(Error::MalformedXml(format!("`{path}` is not a number: {text:?}"))),
    }
}

/// Parses one VOC document. Objects keep document order; boxes are clamped
/// to the declared image size and then validated.
pub fn parse_voc_xml(xml: &str, base: CoordinateBase) -> Result<Annotation> {
    let doc = roxmltree::Document::parse(xml).map_err(|e| Error::MalformedXml(e.to_string()))?;
    let root = doc.root_element();
    if !root.has_tag_name("annotation") {
        return Err(Error::MalformedXml(format!("root element is <{}>, expected <annotation>", root.tag_name().name())));
    }
    let filename = text_of(root, "filename")?;
    let width = number(root, "size/width")?;
    let height = number(root, "size/height")?;
    let mut objects = Vec::new();
    for obj in root.children().filter(|c| c.is_element() && c.has_tag_name("object")) {
        let label = text_of(obj, "name")?;
        let coords = [
            number(obj, "bndbox/xmin")?,
            number(obj, "bndbox/ymin")?,
            number(obj, "bndbox/xmax")?,
            number(obj, "bndbox/ymax")?,
        ];
        objects.push((label, coords));
    }
    Ok(Annotation::from_raw(filename, width, height, objects, base)?)
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for ch in s.chars() {
        match ch {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

/// Serializes in the LabelImg layout with 0-based, exclusive-max boxes.
pub fn to_voc_xml(a: &Annotation) -> String {
    let mut xml = String::from("<annotation>\n");
    xml += &format!("  <filename>{}</filename>\n", escape(&a.image_filename));
    xml += &format!(
        "  <size>\n    <width>{}</width>\n    <height>{}</height>\n    <depth>1</depth>\n  </size>\n",
        a.image_width, a.image_height
    );
    for o in &a.objects {
        let b = o.bbox;
        xml += &format!(
            "  <object>\n    <name>{}</name>\n    <bndbox>\n      <xmin>{}</xmin>\n      <ymin>{}</ymin>\n      <xmax>{}</xmax>\n      <ymax>{}</ymax>\n    </bndbox>\n  </object>\n",
            escape(&o.label),
            b.xmin,
            b.ymin,
            b.xmax,
            b.ymax
        );
    }
    xml + "</annotation>\n"
}

#[derive(Debug, Default)]
pub struct ScanResult {
    /// `(image path, annotation)` sorted by annotation file name.
    pub pairs: Vec<(PathBuf, Annotation)>,
    /// Files that could not be used, with the reason.
    pub errors: Vec<(PathBuf, Error)>,
}

fn sorted_entries(dir: &Path, extension: &str) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .at(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|e| e.eq_ignore_ascii_case(extension)))
        .collect();
    files.sort();
    Ok(files)
}

/// Pairs every `.xml` file in `annotation_dir` with the image it names in
/// `image_dir`. Bad files are reported in [`ScanResult::errors`] and do not
/// stop the scan.
pub fn scan_dataset(image_dir: &Path, annotation_dir: &Path, base: CoordinateBase) -> Result<ScanResult> {
    let mut result = ScanResult::default();
    for xml_path in sorted_entries(annotation_dir, "xml")? {
        let parsed = fs::read_to_string(&xml_path).at(&xml_path).and_then(|text| parse_voc_xml(&text, base));
        match parsed {
            Ok(annotation) => {
                // LabelImg may store a path; only the file name is meaningful here.
                let name = Path::new(&annotation.image_filename).file_name().map(PathBuf::from).unwrap_or_default();
                let image = image_dir.join(name);
                if image.is_file() {
                    result.pairs.push((image, annotation));
                } else {
                    result.errors.push((xml_path.clone(), Error::MissingImage { annotation: xml_path, image }));
                }
            }
            Err(e) => result.errors.push((xml_path, e)),
        }
    }
    Ok(result)
}

/// One line of the crop manifest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CropRecord {
    pub source: String,
    pub label: String,
    pub xmin: usize,
    pub ymin: usize,
    pub xmax: usize,
    pub ymax: usize,
    /// Crop file, relative to the output directory.
    pub crop: String,
}

pub fn crop_records_to_jsonl(records: &[CropRecord]) -> String {
    records.iter().map(|r| serde_json::to_string(r).expect("plain struct serializes") + "\n").collect()
}

pub fn crop_records_from_jsonl(text: &str) -> Result<Vec<CropRecord>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Parse { path: PathBuf::from("<crops>"), line: i + 1, message: e.to_string() })
        })
        .collect()
}

/// Writes one PGM per object (or one per image when `whole_image`, labelled
/// by its first object) under `out_dir/<label>/`, returning the records in
/// scan order.
pub fn export_crops(pairs: &[(PathBuf, Annotation)], out_dir: &Path, whole_image: bool) -> Result<Vec<CropRecord>> {
    let mut records = Vec::new();
    for (image_path, annotation) in pairs {
        let image = read_gray(image_path)?;
        let stem = image_path.file_stem().and_then(|s| s.to_str()).unwrap_or("image").to_string();
        let source = image_path.display().to_string();
        if whole_image {
            let Some(first) = annotation.objects.first() else { continue };
            if (image.width(), image.height()) != (annotation.image_width, annotation.image_height) {
                return Err(almond_core::annotation::AnnotationError::DimensionMismatch {
                    image: (image.width(), image.height()),
                    annotation: (annotation.image_width, annotation.image_height),
                }
                .into());
            }
            let crop = format!("{}/{stem}.pgm", first.label);
            write_pgm(&out_dir.join(&crop), &image)?;
            let (xmax, ymax) = (image.width(), image.height());
            records.push(CropRecord { source, label: first.label.clone(), xmin: 0, ymin: 0, xmax, ymax, crop });
            continue;
        }
        for (i, ((label, patch), obj)) in extract_crops(&image, annotation)?.into_iter().zip(&annotation.objects).enumerate() {
            let crop = format!("{label}/{stem}_{i:03}.pgm");
            write_pgm(&out_dir.join(&crop), &patch)?;
            let b = obj.bbox;
            records.push(CropRecord { source: source.clone(), label, xmin: b.xmin, ymin: b.ymin, xmax: b.xmax, ymax: b.ymax, crop });
        }
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"<annotation>
  <folder>imgs</folder>
  <filename>a.png</filename>
  <size><width>320</width><height>210</height><depth>3</depth></size>
  <object><name>almond</name><pose>Unspecified</pose>
    <bndbox><xmin>10</xmin><ymin>20</ymin><xmax>50</xmax><ymax>60</ymax></bndbox></object>
</annotation>"#;

    #[test]
    fn minimal_document() {
        let a = parse_voc_xml(MINIMAL, CoordinateBase::ZeroBased).unwrap();
        assert_eq!(a.image_filename, "a.png");
        assert_eq!((a.image_width, a.image_height), (320, 210));
        assert_eq!(a.objects.len(), 1);
        assert_eq!(a.objects[0].label, "almond");
        let b = a.objects[0].bbox;
        assert_eq!((b.xmin, b.ymin, b.xmax, b.ymax), (10, 20, 50, 60));
    }

    #[test]
    fn one_based_shift() {
        let a = parse_voc_xml(MINIMAL, CoordinateBase::OneBased).unwrap();
        let b = a.objects[0].bbox;
        assert_eq!((b.xmin, b.ymin, b.xmax, b.ymax), (9, 19, 50, 60));
    }

    #[test]
    fn no_objects_and_errors() {
        let empty = "<annotation><filename>b.png</filename><size><width>4</width><height>4</height></size></annotation>";
        assert!(parse_voc_xml(empty, CoordinateBase::ZeroBased).unwrap().objects.is_empty());

        let inverted = MINIMAL.replace("<xmin>10</xmin><ymin>20</ymin><xmax>50</xmax><ymax>60</ymax>", "<xmin>50</xmin><ymin>60</ymin><xmax>10</xmax><ymax>20</ymax>");
        assert!(matches!(
            parse_voc_xml(&inverted, CoordinateBase::ZeroBased),
            Err(Error::Annotation(almond_core::annotation::AnnotationError::InvalidBox { .. }))
        ));
        assert!(matches!(parse_voc_xml("<annotation><size>", CoordinateBase::ZeroBased), Err(Error::MalformedXml(_))));
        let no_size = "<annotation><filename>b.png</filename></annotation>";
        assert!(matches!(parse_voc_xml(no_size, CoordinateBase::ZeroBased), Err(Error::MissingField(f)) if f == "size/width"));
    }

    #[test]
    fn clamps_out_of_bounds_boxes() {
        let wide = MINIMAL.replace("<xmax>50</xmax>", "<xmax>400</xmax>").replace("<xmin>10</xmin>", "<xmin>-3</xmin>");
        let b = parse_voc_xml(&wide, CoordinateBase::ZeroBased).unwrap().objects[0].bbox;
        assert_eq!((b.xmin, b.xmax), (0, 320));
    }

    #[test]
    fn xml_round_trip_with_escaping() {
        let mut a = parse_voc_xml(MINIMAL, CoordinateBase::ZeroBased).unwrap();
        a.objects[0].label = "shell & <co>".into();
        let back = parse_voc_xml(&to_voc_xml(&a), CoordinateBase::ZeroBased).unwrap();
        assert_eq!(back, a);
    }

    #[test]
    fn jsonl_round_trip() {
        let r = CropRecord { source: "x.png".into(), label: "almond".into(), xmin: 1, ymin: 2, xmax: 3, ymax: 4, crop: "almond/x_000.pgm".into() };
        let text = crop_records_to_jsonl(&[r.clone(), r.clone()]);
        assert_eq!(text.lines().count(), 2);
        assert_eq!(crop_records_from_jsonl(&text).unwrap(), vec![r.clone(), r]);
    }
}
