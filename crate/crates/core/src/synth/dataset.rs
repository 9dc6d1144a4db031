use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::{randomize_scene, render_colour, SceneMode, SynthError};
use crate::mesh::Mesh;
use crate::render::Image;
use crate::seed;

pub const MANIFEST_FILE: &str = "manifest.tsv";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    /// Relative to the manifest's root directory.
    pub path: PathBuf,
    pub object_id: String,
    pub mode: SceneMode,
}

/// Image list of a generated dataset. One line per image:
/// `relative/path<TAB>object_id<TAB>mode`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetManifest {
    pub root: PathBuf,
    pub entries: Vec<ManifestEntry>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> SynthError + '_ {
    move |source| SynthError::Io {
        path: path.display().to_string(),
        source,
    }
}

impl DatasetManifest {
    pub fn to_tsv(&self) -> String {
        let mut s = String::new();
        for e in &self.entries {
            s.push_str(&format!("{}\t{}\t{}\n", e.path.display(), e.object_id, e.mode));
        }
        s
    }

    pub fn parse(text: &str, root: impl Into<PathBuf>) -> Result<Self, SynthError> {
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let bad = |message: String| SynthError::Manifest { line: i + 1, message };
            let fields: Vec<&str> = line.split('\t').collect();
            let [path, object_id, mode] = fields[..] else {
                return Err(bad(format!("expected 3 tab-separated fields, got {}", fields.len())));
            };
            if path.is_empty() || object_id.is_empty() {
                return Err(bad("empty path or object id".into()));
            }
            entries.push(ManifestEntry {
                path: PathBuf::from(path),
                object_id: object_id.to_string(),
                mode: mode.parse().map_err(bad)?,
            });
        }
        Ok(DatasetManifest { root: root.into(), entries })
    }

    /// Reads a manifest; entry paths resolve against the file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, SynthError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, root)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), SynthError> {
        let path = path.as_ref();
        fs::write(path, self.to_tsv()).map_err(io_err(path))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn resolve(&self, entry: &ManifestEntry) -> PathBuf {
        self.root.join(&entry.path)
    }

    pub fn load_image(&self, index: usize) -> Result<Image, SynthError> {
        Ok(Image::load_png(self.resolve(&self.entries[index]))?)
    }

    /// Object ids in order of first appearance, each with its entry indices.
    pub fn by_object(&self) -> Vec<(String, Vec<usize>)> {
        let mut out: Vec<(String, Vec<usize>)> = Vec::new();
        for (i, e) in self.entries.iter().enumerate() {
            match out.iter_mut().find(|(id, _)| *id == e.object_id) {
                Some((_, v)) => v.push(i),
                None => out.push((e.object_id.clone(), vec![i])),
            }
        }
        out
    }

    pub fn object_ids(&self) -> Vec<String> {
        self.by_object().into_iter().map(|(id, _)| id).collect()
    }

    /// Entries whose indices are listed, in the given order.
    pub fn subset(&self, indices: &[usize]) -> DatasetManifest {
        DatasetManifest {
            root: self.root.clone(),
            entries: indices.iter().map(|&i| self.entries[i].clone()).collect(),
        }
    }
}

/// Seed of image `image` of object number `object` under root seed `root`.
pub fn image_seed(root: u64, object: usize, image: usize) -> u64 {
    seed::derive(root, &[object as u64, image as u64])
}

fn check_request(objects: &[Mesh], per_object: usize, mix: f64, size: usize) -> Result<(), SynthError> {
    if objects.is_empty() {
        return Err(SynthError::EmptyObjectSet);
    }
    if per_object < 2 {
        return Err(SynthError::InvalidParameters(format!("per_object must be at least 2, got {per_object}")));
    }
    if !(0.0..=1.0).contains(&mix) {
        return Err(SynthError::InvalidParameters(format!("mix must be in [0, 1], got {mix}")));
    }
    if size == 0 {
        return Err(SynthError::InvalidParameters("image size must be positive".into()));
    }
    for (i, m) in objects.iter().enumerate() {
        if objects[..i].iter().any(|o| o.name == m.name) {
            return Err(SynthError::InvalidParameters(format!("duplicate object id {:?}", m.name)));
        }
        if m.name.is_empty() || m.name.contains(['\t', '\n', '/', '\\']) {
            return Err(SynthError::InvalidParameters(format!("object id {:?} is not usable as a path", m.name)));
        }
    }
    Ok(())
}

/// One rendered dataset image.
#[derive(Debug, Clone)]
pub struct LabelledImage {
    pub object: usize,
    pub index: usize,
    pub mode: SceneMode,
    pub image: Image,
}

/// Renders `per_object` colour images of every object, object-major. For each
/// object the first `round(mix * per_object)` images are structured and the
/// rest chaotic. Image `i` of object `o` uses scene seed
/// [`image_seed`]`(seed, o, i)`.
pub fn render_images(
    objects: &[Mesh],
    per_object: usize,
    mix: f64,
    seed_: u64,
    size: usize,
) -> Result<Vec<LabelledImage>, SynthError> {
    check_request(objects, per_object, mix, size)?;
    let structured = (mix * per_object as f64).round() as usize;
    let jobs: Vec<(usize, usize)> = (0..objects.len())
        .flat_map(|o| (0..per_object).map(move |i| (o, i)))
        .collect();
    jobs.par_iter()
        .map(|&(o, i)| {
            let mode = if i < structured { SceneMode::Structured } else { SceneMode::Chaotic };
            let spec = randomize_scene(&objects[o].name, mode, image_seed(seed_, o, i)).with_size(size);
            let image = render_colour(&spec, std::slice::from_ref(&objects[o]))?;
            Ok(LabelledImage { object: o, index: i, mode, image })
        })
        .collect()
}

/// [`render_images`] written as PNGs under `out/images/<id>/` plus
/// `out/manifest.tsv`.
pub fn generate_dataset(
    objects: &[Mesh],
    per_object: usize,
    mix: f64,
    seed_: u64,
    size: usize,
    out: impl AsRef<Path>,
) -> Result<DatasetManifest, SynthError> {
    let out = out.as_ref();
    check_request(objects, per_object, mix, size)?;
    for m in objects {
        let dir = out.join("images").join(&m.name);
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    }
    let images = render_images(objects, per_object, mix, seed_, size)?;
    let entries = images
        .par_iter()
        .map(|li| {
            let id = &objects[li.object].name;
            let rel = PathBuf::from("images").join(id).join(format!("{:04}_{}.png", li.index, li.mode));
            li.image.save_png(out.join(&rel))?;
            Ok(ManifestEntry { path: rel, object_id: id.clone(), mode: li.mode })
        })
        .collect::<Result<Vec<_>, SynthError>>()?;
    let manifest = DatasetManifest { root: out.to_path_buf(), entries };
    manifest.save(out.join(MANIFEST_FILE))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tsv_round_trip() {
        let text = "images/a/0000_structured.png\ta\tstructured\nimages/b/0000_chaotic.png\tb\tchaotic\n";
        let m = DatasetManifest::parse(text, "/data").unwrap();
        assert_eq!(m.len(), 2);
        assert_eq!(m.to_tsv(), text);
        assert_eq!(m.object_ids(), vec!["a", "b"]);
        assert_eq!(m.resolve(&m.entries[1]), PathBuf::from("/data/images/b/0000_chaotic.png"));
    }

    #[test]
    fn malformed_lines_rejected() {
        assert!(matches!(
            DatasetManifest::parse("x\ty\n", "."),
            Err(SynthError::Manifest { line: 1, .. })
        ));
        assert!(DatasetManifest::parse("x\ty\tphoto\n", ".").is_err());
    }
}
