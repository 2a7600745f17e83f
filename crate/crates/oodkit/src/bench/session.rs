use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use oodkit_core::metrics::{auroc, ScoreSet};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::BenchError;

pub const DEFAULT_PAGE_SIZE: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    In,
    Out,
}

/// One image file; its class is the name of its parent directory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolImage {
    pub class_name: String,
    pub path: PathBuf,
}

/// Images found under `root/<class>/<file>.{png,jpg,jpeg}`, sorted by path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImagePool {
    pub root: PathBuf,
    pub images: Vec<PoolImage>,
}

pub(crate) fn content_type(path: &Path) -> Option<&'static str> {
    match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
        "png" => Some("image/png"),
        "jpg" | "jpeg" => Some("image/jpeg"),
        _ => None,
    }
}

impl ImagePool {
    pub fn scan(root: &Path) -> Result<Self, BenchError> {
        let mut images = Vec::new();
        let entries = fs::read_dir(root).map_err(|e| BenchError::storage(root, e))?;
        for entry in entries {
            let class_dir = entry.map_err(|e| BenchError::storage(root, e))?.path();
            if !class_dir.is_dir() {
                continue;
            }
            let class_name = match class_dir.file_name().and_then(|n| n.to_str()) {
                Some(name) => name.to_owned(),
                None => continue,
            };
            for file in fs::read_dir(&class_dir).map_err(|e| BenchError::storage(&class_dir, e))? {
                let path = file.map_err(|e| BenchError::storage(&class_dir, e))?.path();
                if path.is_file() && content_type(&path).is_some() {
                    images.push(PoolImage { class_name: class_name.clone(), path });
                }
            }
        }
        images.sort_by(|a, b| a.path.cmp(&b.path));
        if images.is_empty() {
            return Err(BenchError::EmptyPool(root.display().to_string()));
        }
        Ok(Self { root: root.to_owned(), images })
    }

    /// Distinct class names in sorted order.
    pub fn class_names(&self) -> Vec<String> {
        let set: BTreeSet<&str> = self.images.iter().map(|i| i.class_name.as_str()).collect();
        set.into_iter().map(str::to_owned).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionParams {
    pub total_images: usize,
    #[serde(default = "default_page_size")]
    pub page_size: usize,
    #[serde(default)]
    pub seed: u64,
    /// Exactly half the images from each pool instead of a coin per image.
    #[serde(default)]
    pub exact_balance: bool,
}

fn default_page_size() -> usize {
    DEFAULT_PAGE_SIZE
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub image_id: String,
    pub source: Source,
    pub true_class: String,
    pub path: PathBuf,
}

/// What a client sees of an image before scoring.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PageImage {
    pub id: String,
    pub bytes: Vec<u8>,
    pub content_type: &'static str,
}

/// Client-visible session summary; never includes ground truth.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SessionInfo {
    pub session_id: String,
    pub total_images: usize,
    pub page_size: usize,
    pub page_count: usize,
    pub in_class_names: Vec<String>,
    pub submitted_pages: Vec<usize>,
    pub scored: bool,
    pub created_at: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct Confusion {
    pub true_class: String,
    pub source: Source,
    pub selected_class: Option<String>,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RevealedImage {
    pub image_id: String,
    pub source: Source,
    pub true_class: String,
    pub selected_class: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub session_id: String,
    pub auroc: f64,
    /// Fraction of in-distribution images that were selected.
    pub tpr: f64,
    /// Fraction of out-of-distribution images that were selected.
    pub fpr: f64,
    pub n_in: usize,
    pub n_out: usize,
    pub per_class_confusions: Vec<Confusion>,
    pub images: Vec<RevealedImage>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchSession {
    pub session_id: String,
    pub params: SessionParams,
    pub in_class_names: Vec<String>,
    pub manifest: Vec<ManifestEntry>,
    pub selections: BTreeMap<String, String>,
    pub submitted_pages: BTreeSet<usize>,
    pub scored: bool,
    pub created_at: u64,
}

impl BenchSession {
    /// Draws a seeded manifest: each slot picks a pool by fair coin (or a
    /// shuffled half/half split with `exact_balance`), then takes the next
    /// image of that pool's shuffled order. An exhausted pool yields to the
    /// other one.
    pub fn create(
        session_id: String,
        in_pool: &ImagePool,
        out_pool: &ImagePool,
        in_class_names: Vec<String>,
        params: SessionParams,
        created_at: u64,
    ) -> Result<Self, BenchError> {
        if params.total_images == 0 {
            return Err(BenchError::InvalidRequest("total_images must be positive".into()));
        }
        if params.page_size == 0 {
            return Err(BenchError::InvalidRequest("page_size must be positive".into()));
        }
        for pool in [in_pool, out_pool] {
            if pool.images.is_empty() {
                return Err(BenchError::EmptyPool(pool.root.display().to_string()));
            }
        }
        let available = in_pool.images.len() + out_pool.images.len();
        if params.total_images > available {
            return Err(BenchError::InvalidRequest(format!(
                "total_images {} exceeds the {available} images in both pools",
                params.total_images
            )));
        }
        if in_class_names.is_empty() {
            return Err(BenchError::InvalidRequest("in-distribution class list is empty".into()));
        }

        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        let mut in_order: Vec<usize> = (0..in_pool.images.len()).collect();
        let mut out_order: Vec<usize> = (0..out_pool.images.len()).collect();
        in_order.shuffle(&mut rng);
        out_order.shuffle(&mut rng);

        let coins: Vec<Source> = if params.exact_balance {
            let n_in = params.total_images.div_ceil(2);
            let mut c: Vec<Source> = (0..params.total_images)
                .map(|i| if i < n_in { Source::In } else { Source::Out })
                .collect();
            c.shuffle(&mut rng);
            c
        } else {
            (0..params.total_images)
                .map(|_| if rng.random_bool(0.5) { Source::In } else { Source::Out })
                .collect()
        };

        let (mut next_in, mut next_out) = (in_order.into_iter(), out_order.into_iter());
        let mut manifest = Vec::with_capacity(params.total_images);
        for (slot, coin) in coins.into_iter().enumerate() {
            let (source, idx) = match coin {
                Source::In => next_in
                    .next()
                    .map(|i| (Source::In, i))
                    .or_else(|| next_out.next().map(|i| (Source::Out, i))),
                Source::Out => next_out
                    .next()
                    .map(|i| (Source::Out, i))
                    .or_else(|| next_in.next().map(|i| (Source::In, i))),
            }
            .expect("total_images bounded by pool sizes");
            let image = match source {
                Source::In => &in_pool.images[idx],
                Source::Out => &out_pool.images[idx],
            };
            manifest.push(ManifestEntry {
                image_id: format!("img{slot:05}"),
                source,
                true_class: image.class_name.clone(),
                path: image.path.clone(),
            });
        }

        Ok(Self {
            session_id,
            params,
            in_class_names,
            manifest,
            selections: BTreeMap::new(),
            submitted_pages: BTreeSet::new(),
            scored: false,
            created_at,
        })
    }

    pub fn page_count(&self) -> usize {
        self.manifest.len().div_ceil(self.params.page_size)
    }

    fn page_entries(&self, page: usize) -> Result<&[ManifestEntry], BenchError> {
        let pages = self.page_count();
        if page >= pages {
            return Err(BenchError::PageOutOfRange { page, pages });
        }
        let start = page * self.params.page_size;
        let end = (start + self.params.page_size).min(self.manifest.len());
        Ok(&self.manifest[start..end])
    }

    pub fn page_ids(&self, page: usize) -> Result<Vec<String>, BenchError> {
        Ok(self.page_entries(page)?.iter().map(|e| e.image_id.clone()).collect())
    }

    /// Page contents with image bytes read from disk.
    pub fn get_page(&self, page: usize) -> Result<Vec<PageImage>, BenchError> {
        self.page_entries(page)?
            .iter()
            .map(|e| {
                let (bytes, content_type) = self.image(&e.image_id)?;
                Ok(PageImage { id: e.image_id.clone(), bytes, content_type })
            })
            .collect()
    }

    pub fn image(&self, image_id: &str) -> Result<(Vec<u8>, &'static str), BenchError> {
        let entry = self
            .manifest
            .iter()
            .find(|e| e.image_id == image_id)
            .ok_or_else(|| BenchError::InvalidRequest(format!("unknown image {image_id:?}")))?;
        let bytes = fs::read(&entry.path).map_err(|e| BenchError::storage(&entry.path, e))?;
        Ok((bytes, content_type(&entry.path).unwrap_or("application/octet-stream")))
    }

    /// Checks a submission without applying it.
    pub fn validate_selections(
        &self,
        page: usize,
        selections: &BTreeMap<String, String>,
    ) -> Result<(), BenchError> {
        let entries = self.page_entries(page)?;
        for (id, class) in selections {
            if !entries.iter().any(|e| &e.image_id == id) {
                return Err(BenchError::UnknownImage { image: id.clone(), page });
            }
            if !self.in_class_names.contains(class) {
                return Err(BenchError::InvalidClass(class.clone()));
            }
        }
        Ok(())
    }

    /// Replaces every selection on `page`; images left out count as "not
    /// in-distribution".
    pub fn submit_selections(
        &mut self,
        page: usize,
        selections: BTreeMap<String, String>,
    ) -> Result<(), BenchError> {
        self.validate_selections(page, &selections)?;
        for id in self.page_ids(page)? {
            self.selections.remove(&id);
        }
        self.selections.extend(selections);
        self.submitted_pages.insert(page);
        Ok(())
    }

    /// The binary decisions as a score set: confidence 1 for a selected image,
    /// 0 otherwise, split by true source.
    pub fn score_set(&self) -> Result<ScoreSet, BenchError> {
        let conf = |e: &ManifestEntry| if self.selections.contains_key(&e.image_id) { 1.0 } else { 0.0 };
        let pick = |s: Source| self.manifest.iter().filter(|e| e.source == s).map(conf).collect();
        Ok(ScoreSet::new(pick(Source::In), pick(Source::Out))?)
    }

    pub fn score(&mut self) -> Result<BenchReport, BenchError> {
        let report = self.report_unchecked()?;
        self.scored = true;
        Ok(report)
    }

    pub fn report(&self) -> Result<BenchReport, BenchError> {
        if !self.scored {
            return Err(BenchError::NotScored);
        }
        self.report_unchecked()
    }

    fn report_unchecked(&self) -> Result<BenchReport, BenchError> {
        let pages = self.page_count();
        let missing = pages - self.submitted_pages.len();
        if missing > 0 {
            return Err(BenchError::Incomplete { missing, pages });
        }
        let scores = self.score_set()?;
        let value = auroc(&scores)?;
        let rate = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;

        let mut confusions: BTreeMap<(String, Source, Option<String>), usize> = BTreeMap::new();
        let mut images = Vec::with_capacity(self.manifest.len());
        for e in &self.manifest {
            let selected = self.selections.get(&e.image_id).cloned();
            *confusions.entry((e.true_class.clone(), e.source, selected.clone())).or_default() += 1;
            images.push(RevealedImage {
                image_id: e.image_id.clone(),
                source: e.source,
                true_class: e.true_class.clone(),
                selected_class: selected,
            });
        }
        Ok(BenchReport {
            session_id: self.session_id.clone(),
            auroc: value,
            tpr: rate(scores.in_scores()),
            fpr: rate(scores.out_scores()),
            n_in: scores.n(),
            n_out: scores.m(),
            per_class_confusions: confusions
                .into_iter()
                .map(|((true_class, source, selected_class), count)| Confusion {
                    true_class,
                    source,
                    selected_class,
                    count,
                })
                .collect(),
            images,
        })
    }

    pub fn info(&self) -> SessionInfo {
        SessionInfo {
            session_id: self.session_id.clone(),
            total_images: self.manifest.len(),
            page_size: self.params.page_size,
            page_count: self.page_count(),
            in_class_names: self.in_class_names.clone(),
            submitted_pages: self.submitted_pages.iter().copied().collect(),
            scored: self.scored,
            created_at: self.created_at,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pool(root: &str, classes: &[&str], per_class: usize) -> ImagePool {
        let images = classes
            .iter()
            .flat_map(|c| {
                (0..per_class).map(move |i| PoolImage {
                    class_name: (*c).to_owned(),
                    path: PathBuf::from(format!("{root}/{c}/{i}.png")),
                })
            })
            .collect();
        ImagePool { root: PathBuf::from(root), images }
    }

    fn params(total: usize, seed: u64) -> SessionParams {
        SessionParams { total_images: total, page_size: DEFAULT_PAGE_SIZE, seed, exact_balance: false }
    }

    fn session(total: usize, seed: u64) -> BenchSession {
        let (a, b) = (pool("in", &["cat", "dog"], 600), pool("out", &["car"], 1200));
        BenchSession::create("s".into(), &a, &b, a.class_names(), params(total, seed), 0).unwrap()
    }

    #[test]
    fn page_counts() {
        let s = session(1140, 1);
        assert_eq!(s.page_count(), 57);
        let s = session(45, 1);
        assert_eq!(s.page_count(), 3);
        assert_eq!(s.page_ids(2).unwrap().len(), 5);
        assert!(matches!(s.page_ids(3), Err(BenchError::PageOutOfRange { page: 3, pages: 3 })));
    }

    #[test]
    fn manifest_is_seeded_and_unique() {
        assert_eq!(session(200, 7).manifest, session(200, 7).manifest);
        assert_ne!(session(200, 7).manifest, session(200, 8).manifest);
        let s = session(2000, 3);
        let paths: BTreeSet<_> = s.manifest.iter().map(|e| &e.path).collect();
        assert_eq!(paths.len(), 2000);
    }

    #[test]
    fn fair_coin_fraction() {
        let mean: f64 = (0..40)
            .map(|seed| {
                let s = session(1000, seed);
                s.manifest.iter().filter(|e| e.source == Source::In).count() as f64 / 1000.0
            })
            .sum::<f64>()
            / 40.0;
        assert!((0.45..=0.55).contains(&mean), "{mean}");
    }

    #[test]
    fn exact_balance_splits_evenly() {
        let (a, b) = (pool("in", &["cat"], 50), pool("out", &["car"], 50));
        let p = SessionParams { exact_balance: true, ..params(31, 2) };
        let s = BenchSession::create("s".into(), &a, &b, a.class_names(), p, 0).unwrap();
        assert_eq!(s.manifest.iter().filter(|e| e.source == Source::In).count(), 16);
    }

    #[test]
    fn rejects_bad_requests() {
        let (a, b) = (pool("in", &["cat"], 5), pool("out", &["car"], 5));
        let names = a.class_names();
        assert!(BenchSession::create("s".into(), &a, &b, names.clone(), params(0, 0), 0).is_err());
        assert!(BenchSession::create("s".into(), &a, &b, names.clone(), params(11, 0), 0).is_err());
        let empty = ImagePool { root: "e".into(), images: vec![] };
        assert!(matches!(
            BenchSession::create("s".into(), &a, &empty, names, params(3, 0), 0),
            Err(BenchError::EmptyPool(_))
        ));
    }

    #[test]
    fn selections_overwrite_and_validate() {
        let mut s = session(40, 4);
        let ids = s.page_ids(0).unwrap();
        let other = s.page_ids(1).unwrap();
        s.submit_selections(0, [(ids[0].clone(), "cat".into())].into()).unwrap();
        s.submit_selections(0, [(ids[1].clone(), "dog".into())].into()).unwrap();
        assert!(!s.selections.contains_key(&ids[0]));
        assert_eq!(s.selections[&ids[1]], "dog");
        assert!(matches!(
            s.submit_selections(0, [(other[0].clone(), "cat".into())].into()),
            Err(BenchError::UnknownImage { .. })
        ));
        assert!(matches!(
            s.submit_selections(0, [(ids[0].clone(), "car".into())].into()),
            Err(BenchError::InvalidClass(_))
        ));
        assert!(matches!(s.score(), Err(BenchError::Incomplete { missing: 1, pages: 2 })));
    }

    #[test]
    fn nothing_selected_is_chance() {
        let mut s = session(40, 5);
        for p in 0..s.page_count() {
            s.submit_selections(p, BTreeMap::new()).unwrap();
        }
        assert_eq!(s.score().unwrap().auroc, 0.5);
    }

    #[test]
    fn perfect_selection() {
        let mut s = session(60, 6);
        for p in 0..s.page_count() {
            let picks = s.manifest[p * 20..((p + 1) * 20).min(60)]
                .iter()
                .filter(|e| e.source == Source::In)
                .map(|e| (e.image_id.clone(), e.true_class.clone()))
                .collect();
            s.submit_selections(p, picks).unwrap();
        }
        let r = s.score().unwrap();
        assert_eq!((r.auroc, r.tpr, r.fpr), (1.0, 1.0, 0.0));
        let n_in = s.manifest.iter().filter(|e| e.source == Source::In).count();
        assert_eq!((r.n_in, r.n_out), (n_in, 60 - n_in));
    }
}
