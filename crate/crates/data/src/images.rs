//! Directory-per-class image datasets.

use std::fs;
use std::path::{Path, PathBuf};

use fut_core::{Error, Result, Tensor};
use image::imageops::FilterType;
use image::RgbImage;

pub const IMAGE_SIZE: usize = 72;

#[derive(Clone, Debug, PartialEq)]
pub struct ImageSample {
    /// `(H, W, 3)` in `[0, 1]`.
    pub pixels: Tensor<f64>,
    pub label: usize,
}

#[derive(Clone, Debug, Default)]
pub struct ImageSet {
    pub samples: Vec<ImageSample>,
    /// Class names, index = label.
    pub classes: Vec<String>,
    /// Files that could not be decoded.
    pub skipped: Vec<PathBuf>,
}

/// Bilinear resize to `size × size` and scale to `[0, 1]`.
pub fn rgb_to_tensor(img: &RgbImage, size: usize) -> Tensor<f64> {
    let resized = if img.width() as usize == size && img.height() as usize == size {
        img.clone()
    } else {
        image::imageops::resize(img, size as u32, size as u32, FilterType::Triangle)
    };
    let data: Vec<f64> = resized.into_raw().into_iter().map(|b| b as f64 / 255.0).collect();
    Tensor::new([size, size, 3], data).expect("rgb buffer matches its dimensions")
}

pub fn load_image(path: &Path, size: usize) -> Result<Tensor<f64>> {
    let img = image::open(path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    Ok(rgb_to_tensor(&img.to_rgb8(), size))
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .map(|e| e.map(|e| e.path()).map_err(|err| Error::io(dir, err)))
        .collect::<Result<_>>()?;
    entries.sort();
    Ok(entries)
}

/// One subdirectory per class, labels assigned in sorted name order.
/// Undecodable files are skipped and listed; a class without any usable
/// image is a data error.
pub fn ingest_images(root: impl AsRef<Path>, size: usize) -> Result<ImageSet> {
    let root = root.as_ref();
    let mut set = ImageSet::default();
    let class_dirs: Vec<PathBuf> = sorted_entries(root)?.into_iter().filter(|p| p.is_dir()).collect();
    if class_dirs.is_empty() {
        return Err(Error::Data(format!("{} has no class subdirectories", root.display())));
    }
    for (label, dir) in class_dirs.iter().enumerate() {
        let name = dir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        let before = set.samples.len();
        for file in sorted_entries(dir)?.into_iter().filter(|p| p.is_file()) {
            match load_image(&file, size) {
                Ok(pixels) => set.samples.push(ImageSample { pixels, label }),
                Err(_) => set.skipped.push(file),
            }
        }
        if set.samples.len() == before {
            return Err(Error::Data(format!("class directory `{name}` contains no readable images")));
        }
        set.classes.push(name);
    }
    Ok(set)
}

#[cfg(test)]
mod tests {
    use image::Rgb;

    use super::*;

    fn write(path: &Path, w: u32, h: u32, f: impl Fn(u32, u32) -> [u8; 3]) {
        RgbImage::from_fn(w, h, |x, y| Rgb(f(x, y))).save(path).unwrap();
    }

    #[test]
    fn two_classes_of_three() {
        let dir = tempfile::tempdir().unwrap();
        for (class, shade) in [("healthy", 200u8), ("blight", 30)] {
            fs::create_dir(dir.path().join(class)).unwrap();
            for i in 0..3 {
                write(&dir.path().join(class).join(format!("{i}.png")), 10, 12, |_, _| [shade, i * 10, 0]);
            }
        }
        fs::write(dir.path().join("blight").join("notes.txt"), "not an image").unwrap();
        let set = ingest_images(dir.path(), 8).unwrap();
        assert_eq!(set.classes, vec!["blight", "healthy"]);
        assert_eq!(set.samples.len(), 6);
        assert_eq!(set.skipped.len(), 1);
        assert_eq!(set.samples.iter().filter(|s| s.label == 0).count(), 3);
        assert!((set.samples[0].pixels.data()[0] - 30.0 / 255.0).abs() < 1e-12);
        let again = ingest_images(dir.path(), 8).unwrap();
        assert_eq!(again.classes, set.classes);
        assert_eq!(again.samples, set.samples);
    }

    #[test]
    fn empty_class_is_data_error() {
        let dir = tempfile::tempdir().unwrap();
        fs::create_dir(dir.path().join("a")).unwrap();
        fs::create_dir(dir.path().join("b")).unwrap();
        write(&dir.path().join("a").join("x.png"), 4, 4, |_, _| [0, 0, 0]);
        let err = ingest_images(dir.path(), 4).unwrap_err();
        assert!(matches!(err, Error::Data(_)) && err.to_string().contains("`b`"));
    }

    #[test]
    fn halving_a_gradient_matches_linear_interpolation() {
        // value = x along red, y along green; any symmetric linear filter
        // reproduces a linear ramp at the output pixel centres 2i + 0.5
        let img = RgbImage::from_fn(144, 144, |x, y| Rgb([x as u8, y as u8, 255]));
        let t = rgb_to_tensor(&img, IMAGE_SIZE);
        assert_eq!(t.dims(), &[72, 72, 3]);
        assert!(t.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
        for i in 2..70 {
            for j in 2..70 {
                let red = t.get(&[i, j, 0]).unwrap() * 255.0;
                let green = t.get(&[i, j, 1]).unwrap() * 255.0;
                assert!((red - (2.0 * j as f64 + 0.5)).abs() <= 1.0, "red at {i},{j}: {red}");
                assert!((green - (2.0 * i as f64 + 0.5)).abs() <= 1.0, "green at {i},{j}: {green}");
                assert_eq!(t.get(&[i, j, 2]), Some(1.0));
            }
        }
    }
}
