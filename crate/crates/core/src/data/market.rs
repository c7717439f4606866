//! Loader for Market1501-style directory layouts.
//!
//! ```text
//! root/
//!   bounding_box_train/  0002_c1s1_000451_03.jpg ...
//!   query/
//!   bounding_box_test/
//! ```
//!
//! Filenames begin with `<identity>_c<camera>`. Identity `-1` marks junk
//! detections and is skipped.

use std::path::{Path, PathBuf};

use log::warn;

use super::{Dataset, Payload, RasterImage, Sample};
use crate::error::{Error, Result};

const SPLIT_DIRS: [&str; 3] = ["bounding_box_train", "query", "bounding_box_test"];
const IMAGE_EXTENSIONS: [&str; 4] = ["jpg", "jpeg", "png", "bmp"];

/// Parses `<id>_c<camera>...`. Returns `Ok(None)` for junk (id −1).
pub fn parse_market_filename(name: &str) -> Result<Option<(u32, u32)>> {
    let bad = || Error::invalid(format!("cannot parse identity/camera from `{name}`"));
    let (id_part, rest) = name.split_once('_').ok_or_else(bad)?;
    let id: i64 = id_part.parse().map_err(|_| bad())?;
    if id == -1 {
        return Ok(None);
    }
    let digits: String = rest
        .strip_prefix('c')
        .ok_or_else(bad)?
        .chars()
        .take_while(char::is_ascii_digit)
        .collect();
    let camera: u32 = digits.parse().map_err(|_| bad())?;
    let id = u32::try_from(id).map_err(|_| bad())?;
    Ok(Some((id, camera)))
}

fn decode(path: &Path) -> Result<RasterImage> {
    let rgb = image::open(path)?.to_rgb8();
    let (w, h) = rgb.dimensions();
    let data = rgb.into_raw().into_iter().map(f64::from).collect();
    RasterImage::new(h as usize, w as usize, 3, data)
}

fn load_split(dir: &Path) -> Result<Vec<Sample>> {
    if !dir.is_dir() {
        return Err(Error::MissingPath(dir.to_path_buf()));
    }
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
        })
        .collect();
    files.sort();

    let mut samples = Vec::with_capacity(files.len());
    for path in files {
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        match parse_market_filename(name) {
            Ok(Some((identity, camera))) => samples.push(Sample {
                payload: Payload::Image(decode(&path)?),
                identity,
                camera,
            }),
            Ok(None) => {}
            Err(e) => warn!("skipping {}: {e}", path.display()),
        }
    }
    if samples.is_empty() {
        return Err(Error::invalid(format!("split directory {} has no usable images", dir.display())));
    }
    Ok(samples)
}

pub fn load_market_dir(root: impl AsRef<Path>) -> Result<Dataset> {
    let root = root.as_ref();
    if !root.is_dir() {
        return Err(Error::MissingPath(root.to_path_buf()));
    }
    let [train, query, gallery] = SPLIT_DIRS.map(|d| load_split(&root.join(d)));
    Ok(Dataset {
        train: train?,
        query: query?,
        gallery: gallery?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_market_names() {
        assert_eq!(parse_market_filename("0001_c1s1_000151_01.jpg").unwrap(), Some((1, 1)));
        assert_eq!(parse_market_filename("1501_c6s4_001902_01.jpg").unwrap(), Some((1501, 6)));
        assert_eq!(parse_market_filename("-1_c3s2_000123_02.jpg").unwrap(), None);
        assert!(parse_market_filename("Thumbs.db").is_err());
        assert!(parse_market_filename("0001_x1.jpg").is_err());
        assert!(parse_market_filename("-7_c1.jpg").is_err());
    }

    fn write_png(path: &Path, value: u8) {
        let img = image::RgbImage::from_pixel(4, 8, image::Rgb([value, value / 2, 10]));
        img.save(path).unwrap();
    }

    #[test]
    fn loads_directory_tree() {
        let tmp = tempfile::tempdir().unwrap();
        for d in SPLIT_DIRS {
            std::fs::create_dir(tmp.path().join(d)).unwrap();
        }
        let root = tmp.path();
        write_png(&root.join("bounding_box_train/0002_c1s1_000451_03.png"), 100);
        write_png(&root.join("bounding_box_train/0007_c2s3_000001_01.png"), 50);
        write_png(&root.join("bounding_box_train/-1_c3s1_000001_01.png"), 50);
        write_png(&root.join("bounding_box_train/garbage.png"), 50);
        write_png(&root.join("query/0003_c1s1_000001_00.png"), 20);
        write_png(&root.join("bounding_box_test/0003_c4s1_000101_00.png"), 30);

        let ds = load_market_dir(root).unwrap();
        assert_eq!(ds.train.len(), 2);
        assert_eq!((ds.train[0].identity, ds.train[0].camera), (2, 1));
        assert_eq!((ds.train[1].identity, ds.train[1].camera), (7, 2));
        assert_eq!((ds.gallery[0].identity, ds.gallery[0].camera), (3, 4));
        match &ds.query[0].payload {
            Payload::Image(img) => {
                assert_eq!((img.height(), img.width(), img.channels()), (8, 4, 3));
                assert_eq!(img.get(0, 0, 0), 20.0);
                assert_eq!(img.get(0, 0, 1), 10.0);
            }
            Payload::Features(_) => panic!("expected image payload"),
        }
    }

    #[test]
    fn empty_query_is_an_error() {
        let tmp = tempfile::tempdir().unwrap();
        for d in SPLIT_DIRS {
            std::fs::create_dir(tmp.path().join(d)).unwrap();
        }
        write_png(&tmp.path().join("bounding_box_train/0002_c1s1_000451_03.png"), 1);
        write_png(&tmp.path().join("bounding_box_test/0002_c2s1_000451_03.png"), 1);
        let err = load_market_dir(tmp.path()).unwrap_err();
        assert!(err.to_string().contains("query"), "{err}");

        assert!(matches!(load_market_dir(tmp.path().join("nope")), Err(Error::MissingPath(_))));
    }
}
