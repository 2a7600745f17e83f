#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use oodkit::format::{save_embeddings, Format};
use oodkit_core::EmbeddingSet;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Isotropic unit-variance clusters around the given centers, labeled
/// `first_label + i`.
pub fn clusters(rng: &mut ChaCha8Rng, centers: &[Vec<f32>], per_class: usize, first_label: u32) -> EmbeddingSet {
    let d = centers[0].len();
    let mut data = Vec::with_capacity(centers.len() * per_class * d);
    let mut labels = Vec::new();
    for (c, center) in centers.iter().enumerate() {
        for _ in 0..per_class {
            data.extend(center.iter().map(|m| m + rng.sample::<f32, _>(StandardNormal)));
            labels.push(first_label + c as u32);
        }
    }
    EmbeddingSet::new(data, d).unwrap().with_labels(labels).unwrap()
}

pub fn random_centers(rng: &mut ChaCha8Rng, count: usize, d: usize, scale: f32) -> Vec<Vec<f32>> {
    (0..count).map(|_| (0..d).map(|_| rng.sample::<f32, _>(StandardNormal) * scale).collect()).collect()
}

pub fn unlabeled(set: &EmbeddingSet) -> EmbeddingSet {
    EmbeddingSet::new(set.data().to_vec(), set.dim()).unwrap()
}

pub fn write(dir: &Path, name: &str, set: &EmbeddingSet) -> PathBuf {
    let path = dir.join(name);
    save_embeddings(set, &path, Format::from_path(&path, set.labels().is_some())).unwrap();
    path
}

pub fn oodkit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_oodkit")).args(args).output().expect("binary runs")
}

pub fn run_ok(args: &[&str]) -> Output {
    let out = oodkit(args);
    assert!(
        out.status.success(),
        "oodkit {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

pub fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap())
        })
        .collect()
}

pub fn json(path: &Path) -> serde_json::Value {
    serde_json::from_slice(&fs::read(path).unwrap()).unwrap()
}

pub fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Writes `count` small files per class under `root/<class>/`; each file
/// starts with the PNG signature and embeds its own pool/class/index marker.
pub fn image_pool(root: &Path, pool: &str, classes: &[&str], count: usize) {
    for class in classes {
        let dir = root.join(class);
        fs::create_dir_all(&dir).unwrap();
        for i in 0..count {
            let mut bytes = b"\x89PNG\r\n\x1a\n".to_vec();
            bytes.extend_from_slice(format!("{pool}:{class}:{i}").as_bytes());
            fs::write(dir.join(format!("{i:03}.png")), bytes).unwrap();
        }
    }
}

/// Reads the marker written by [`image_pool`]: `(pool, class)`.
pub fn image_marker(bytes: &[u8]) -> (String, String) {
    let text = String::from_utf8_lossy(&bytes[8..]).into_owned();
    let mut parts = text.split(':');
    (parts.next().unwrap().to_owned(), parts.next().unwrap().to_owned())
}
