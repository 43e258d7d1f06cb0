use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::story::{Story, STORY_SENTENCES};
use crate::data::vocab::{split_words, tokenize, Vocabulary};
use crate::error::{Error, Result};
use crate::numerics::Tensor;

pub const FORMAT: &str = "hatstory-v1";

/// Header line of a dataset file.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Header {
    pub format: String,
    pub k: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Photo {
    pub photo_id: String,
    pub features: Vec<f64>,
}

/// A story as raw text, one string per sentence.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoryText {
    pub sentences: Vec<String>,
}

impl StoryText {
    pub fn tokenize(&self, vocab: &Vocabulary) -> Result<Story> {
        Story::new(
            self.sentences.iter().map(|s| tokenize(s, vocab)).collect(),
            vocab.len(),
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Album {
    pub album_id: String,
    pub photos: Vec<Photo>,
    #[serde(default)]
    pub gt_summaries: Vec<Vec<String>>,
    #[serde(default)]
    pub stories: Vec<StoryText>,
}

/// Photo-count bounds and vocabulary threshold applied when loading.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LoadOptions {
    pub min_photos: usize,
    pub max_photos: Option<usize>,
    pub min_count: usize,
}

impl Default for LoadOptions {
    fn default() -> Self {
        LoadOptions {
            min_photos: STORY_SENTENCES,
            max_photos: None,
            min_count: 1,
        }
    }
}

impl LoadOptions {
    /// The VIST contract: 10–50 photos per album, min_count 3.
    pub fn vist() -> Self {
        LoadOptions {
            min_photos: 10,
            max_photos: Some(50),
            min_count: 3,
        }
    }
}

impl Album {
    pub fn len(&self) -> usize {
        self.photos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.photos.is_empty()
    }

    /// n×k feature matrix.
    pub fn features(&self) -> Result<Tensor> {
        Tensor::from_rows(
            &self
                .photos
                .iter()
                .map(|p| p.features.clone())
                .collect::<Vec<_>>(),
        )
    }

    pub fn photo_index(&self, photo_id: &str) -> Option<usize> {
        self.photos.iter().position(|p| p.photo_id == photo_id)
    }

    /// Photo positions of ground-truth summary `j`.
    pub fn gt_indices(&self, j: usize) -> Result<Vec<usize>> {
        let set = self.gt_summaries.get(j).ok_or_else(|| {
            Error::Index(format!("album {} has no summary {j}", self.album_id))
        })?;
        set.iter()
            .map(|id| {
                self.photo_index(id).ok_or_else(|| {
                    Error::Data(format!("album {}: unknown photo {id}", self.album_id))
                })
            })
            .collect()
    }

    pub fn photo_ids(&self, indices: &[usize]) -> Vec<String> {
        indices
            .iter()
            .map(|&i| self.photos[i].photo_id.clone())
            .collect()
    }

    /// Checks every album invariant against feature width `k`.
    pub fn validate(&self, k: usize, opts: &LoadOptions) -> Result<()> {
        let id = &self.album_id;
        let n = self.photos.len();
        let min = opts.min_photos.max(STORY_SENTENCES);
        if n < min || opts.max_photos.is_some_and(|max| n > max) {
            let bound = match opts.max_photos {
                Some(max) => format!("{min}..={max}"),
                None => format!("at least {min}"),
            };
            return Err(Error::Data(format!(
                "album {id}: photo count {n} outside {bound}"
            )));
        }
        let mut seen = HashSet::new();
        for p in &self.photos {
            if !seen.insert(p.photo_id.as_str()) {
                return Err(Error::Data(format!("album {id}: duplicate photo {}", p.photo_id)));
            }
            if p.features.len() != k {
                return Err(Error::Data(format!(
                    "album {id}: photo {} has {} features, expected {k}",
                    p.photo_id,
                    p.features.len()
                )));
            }
            if p.features.iter().any(|x| !x.is_finite()) {
                return Err(Error::Data(format!(
                    "album {id}: photo {} has non-finite features",
                    p.photo_id
                )));
            }
        }
        if self.gt_summaries.len() > 2 {
            return Err(Error::Data(format!(
                "album {id}: {} summaries, at most 2 allowed",
                self.gt_summaries.len()
            )));
        }
        for set in &self.gt_summaries {
            let distinct: HashSet<&str> = set.iter().map(String::as_str).collect();
            if set.len() != STORY_SENTENCES || distinct.len() != set.len() {
                return Err(Error::Data(format!(
                    "album {id}: a summary needs {STORY_SENTENCES} distinct photos"
                )));
            }
            if let Some(bad) = set.iter().find(|p| !seen.contains(p.as_str())) {
                return Err(Error::Data(format!("album {id}: summary names unknown photo {bad}")));
            }
        }
        for s in &self.stories {
            if s.sentences.len() != STORY_SENTENCES {
                return Err(Error::Data(format!(
                    "album {id}: story has {} sentences, expected {STORY_SENTENCES}",
                    s.sentences.len()
                )));
            }
        }
        Ok(())
    }
}

/// Albums sharing one feature width.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub k: usize,
    pub albums: Vec<Album>,
}

/// One (album, tokenized story) training item.
#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    pub album: usize,
    pub story: Story,
}

impl Dataset {
    pub fn new(k: usize, albums: Vec<Album>) -> Result<Self> {
        Self::with_options(k, albums, &LoadOptions::default())
    }

    pub fn with_options(k: usize, albums: Vec<Album>, opts: &LoadOptions) -> Result<Self> {
        if k == 0 {
            return Err(Error::Data("feature width k must be positive".into()));
        }
        let mut ids = HashSet::new();
        for a in &albums {
            a.validate(k, opts)?;
            if !ids.insert(a.album_id.as_str()) {
                return Err(Error::Data(format!("duplicate album id {}", a.album_id)));
            }
        }
        Ok(Dataset { k, albums })
    }

    pub fn len(&self) -> usize {
        self.albums.len()
    }

    pub fn is_empty(&self) -> bool {
        self.albums.is_empty()
    }

    /// Vocabulary over every story sentence.
    pub fn vocabulary(&self, min_count: usize) -> Vocabulary {
        let words: Vec<String> = self
            .albums
            .iter()
            .flat_map(|a| &a.stories)
            .flat_map(|s| &s.sentences)
            .flat_map(|s| split_words(s))
            .collect();
        Vocabulary::build(words.iter().map(String::as_str), min_count)
    }

    /// Every story of every album, in file order.
    pub fn examples(&self, vocab: &Vocabulary) -> Result<Vec<Example>> {
        let mut out = Vec::new();
        for (i, a) in self.albums.iter().enumerate() {
            for s in &a.stories {
                let story = s.tokenize(vocab).map_err(|e| {
                    Error::Data(format!("album {}: {e}", a.album_id))
                })?;
                out.push(Example { album: i, story });
            }
        }
        Ok(out)
    }

    /// Feature matrices of every album.
    pub fn feature_tensors(&self) -> Result<Vec<Tensor>> {
        self.albums.iter().map(Album::features).collect()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        self.write_to(&mut w).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn write_to(&self, w: &mut impl Write) -> std::io::Result<()> {
        let header = Header {
            format: FORMAT.into(),
            k: self.k,
        };
        writeln!(w, "{}", serde_json::to_string(&header)?)?;
        for a in &self.albums {
            writeln!(w, "{}", serde_json::to_string(a)?)?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("serde_json emits UTF-8")
    }

    pub fn from_reader(reader: impl BufRead, opts: &LoadOptions) -> Result<Self> {
        let mut lines = reader.lines().enumerate();
        let header: Header = loop {
            match lines.next() {
                None => return Err(Error::Data("missing header line".into())),
                Some((i, line)) => {
                    let line = line.map_err(|e| Error::Data(format!("line {}: {e}", i + 1)))?;
                    if line.trim().is_empty() {
                        continue;
                    }
                    break serde_json::from_str(&line)
                        .map_err(|e| Error::Data(format!("line {}: bad header: {e}", i + 1)))?;
                }
            }
        };
        if header.format != FORMAT {
            return Err(Error::Data(format!(
                "unsupported dataset format {:?}",
                header.format
            )));
        }
        let mut albums = Vec::new();
        for (i, line) in lines {
            let lineno = i + 1;
            let line = line.map_err(|e| Error::Data(format!("line {lineno}: {e}")))?;
            if line.trim().is_empty() {
                continue;
            }
            let album: Album = serde_json::from_str(&line).map_err(|e| {
                let id = serde_json::from_str::<serde_json::Value>(&line)
                    .ok()
                    .and_then(|v| v.get("album_id")?.as_str().map(String::from))
                    .unwrap_or_else(|| "?".into());
                Error::Data(format!("line {lineno} (album {id}): {e}"))
            })?;
            album
                .validate(header.k, opts)
                .map_err(|e| Error::Data(format!("line {lineno}: {e}")))?;
            albums.push(album);
        }
        Dataset::with_options(header.k, albums, opts)
    }
}

/// Reads a dataset file and builds its vocabulary.
pub fn load_dataset(path: impl AsRef<Path>, opts: &LoadOptions) -> Result<(Dataset, Vocabulary)> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let ds = Dataset::from_reader(BufReader::new(file), opts)?;
    let vocab = ds.vocabulary(opts.min_count);
    Ok((ds, vocab))
}
