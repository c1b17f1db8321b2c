//! Domain types for paired two-modality datasets and their file formats.
//!
//! A dataset is a set of subjects, each holding exactly one document record
//! and one selfie record. The on-disk formats are a CSV
//! (`subject_id,modality,gender,age_doc,age_selfie,card_format,dim,f0,...`)
//! and an equivalent binary envelope starting with the magic bytes `XMV1`.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Image capture modality.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Document,
    Selfie,
}

impl Modality {
    pub fn opposite(self) -> Modality {
        match self {
            Modality::Document => Modality::Selfie,
            Modality::Selfie => Modality::Document,
        }
    }

    fn as_str(self) -> &'static str {
        match self {
            Modality::Document => "document",
            Modality::Selfie => "selfie",
        }
    }

    fn parse(s: &str) -> Option<Modality> {
        match s {
            "document" => Some(Modality::Document),
            "selfie" => Some(Modality::Selfie),
            _ => None,
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Subject gender as recorded in the dataset metadata.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gender {
    Male,
    Female,
    Unknown,
}

impl Gender {
    fn as_str(self) -> &'static str {
        match self {
            Gender::Male => "male",
            Gender::Female => "female",
            Gender::Unknown => "unknown",
        }
    }

    fn parse(s: &str) -> Option<Gender> {
        match s {
            "male" => Some(Gender::Male),
            "female" => Some(Gender::Female),
            "unknown" => Some(Gender::Unknown),
            _ => None,
        }
    }
}

impl fmt::Display for Gender {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// National ID card generation. Selfie records always carry [`CardFormat::NotApplicable`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CardFormat {
    Yellow,
    Blue,
    #[serde(rename = "na")]
    NotApplicable,
}

impl CardFormat {
    fn as_str(self) -> &'static str {
        match self {
            CardFormat::Yellow => "yellow",
            CardFormat::Blue => "blue",
            CardFormat::NotApplicable => "na",
        }
    }

    fn parse(s: &str) -> Option<CardFormat> {
        match s {
            "yellow" => Some(CardFormat::Yellow),
            "blue" => Some(CardFormat::Blue),
            "na" => Some(CardFormat::NotApplicable),
            _ => None,
        }
    }
}

impl fmt::Display for CardFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One image's feature vector plus identity, modality, and demographic metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageRecord {
    pub subject_id: String,
    pub modality: Modality,
    pub gender: Gender,
    pub age_at_capture: u32,
    pub card_format: CardFormat,
    pub base_feature: Vec<f32>,
}

impl ImageRecord {
    /// Checks the per-record invariants (finite features, card format only on
    /// documents).
    pub fn validate(&self) -> Result<()> {
        if self.base_feature.iter().any(|x| !x.is_finite()) {
            return Err(Error::Normalization(format!(
                "record {} has non-finite feature values",
                self.subject_id
            )));
        }
        let na = self.card_format == CardFormat::NotApplicable;
        let selfie = self.modality == Modality::Selfie;
        if na != selfie {
            return Err(Error::Config(format!(
                "record {}: card_format must be 'na' exactly when modality is selfie",
                self.subject_id
            )));
        }
        Ok(())
    }
}

/// A subject's document/selfie record pair.
#[derive(Debug, Clone, PartialEq)]
pub struct Subject {
    pub id: String,
    pub document: ImageRecord,
    pub selfie: ImageRecord,
}

impl Subject {
    pub fn gender(&self) -> Gender {
        self.document.gender
    }

    pub fn card_format(&self) -> CardFormat {
        self.document.card_format
    }

    pub fn doc_age(&self) -> u32 {
        self.document.age_at_capture
    }

    pub fn selfie_age(&self) -> u32 {
        self.selfie.age_at_capture
    }

    pub fn subset_label(&self) -> Result<SubsetLabel> {
        SubsetLabel::from_ages(self.doc_age(), self.selfie_age())
    }
}

/// Age-span subset label in the `iXXsYY` style, e.g. `i10s1819`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SubsetLabel {
    pub name: String,
    pub doc_age: u32,
    pub selfie_age_range: (u32, u32),
}

impl SubsetLabel {
    /// Derives the label from a document age and a selfie age.
    ///
    /// Selfie ages 18 and 19 fall into the canonical 18-19 band (`s1819`);
    /// any other selfie age maps to a single-age band. Ages must lie in
    /// `[9, 19]`.
    pub fn from_ages(doc_age: u32, selfie_age: u32) -> Result<SubsetLabel> {
        for age in [doc_age, selfie_age] {
            if !(9..=19).contains(&age) {
                return Err(Error::Range(format!("age {age} outside [9, 19]")));
            }
        }
        let selfie_age_range = if selfie_age == 18 || selfie_age == 19 {
            (18, 19)
        } else {
            (selfie_age, selfie_age)
        };
        let name = if selfie_age_range.0 == selfie_age_range.1 {
            format!("i{:02}s{:02}", doc_age, selfie_age_range.0)
        } else {
            format!(
                "i{:02}s{:02}{:02}",
                doc_age, selfie_age_range.0, selfie_age_range.1
            )
        };
        Ok(SubsetLabel {
            name,
            doc_age,
            selfie_age_range,
        })
    }
}

impl fmt::Display for SubsetLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)
    }
}

/// Subjects each holding exactly one document record and one selfie record,
/// sorted by subject id, with a consistent feature dimension.
#[derive(Debug, Clone)]
pub struct PairedDataset {
    subjects: Vec<Subject>,
    dim: usize,
}

impl PairedDataset {
    /// Builds a dataset from subjects, validating invariants and sorting by id.
    pub fn from_subjects(mut subjects: Vec<Subject>) -> Result<PairedDataset> {
        if subjects.is_empty() {
            return Err(Error::EmptyInput("dataset has no subjects"));
        }
        subjects.sort_by(|a, b| a.id.cmp(&b.id));
        let dim = subjects[0].document.base_feature.len();
        let mut prev: Option<&str> = None;
        for s in &subjects {
            if prev == Some(s.id.as_str()) {
                return Err(Error::Config(format!("duplicate subject id {}", s.id)));
            }
            if s.document.modality != Modality::Document || s.selfie.modality != Modality::Selfie {
                return Err(Error::Config(format!(
                    "subject {} has records with mismatched modalities",
                    s.id
                )));
            }
            if s.document.subject_id != s.id || s.selfie.subject_id != s.id {
                return Err(Error::Config(format!(
                    "subject {} holds records with a different subject id",
                    s.id
                )));
            }
            for rec in [&s.document, &s.selfie] {
                rec.validate()?;
                if rec.base_feature.len() != dim {
                    return Err(Error::Dimension {
                        expected: dim,
                        got: rec.base_feature.len(),
                    });
                }
            }
            prev = Some(s.id.as_str());
        }
        Ok(PairedDataset { subjects, dim })
    }

    pub fn subjects(&self) -> &[Subject] {
        &self.subjects
    }

    pub fn len(&self) -> usize {
        self.subjects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subjects.is_empty()
    }

    /// Feature dimension shared by every record.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Index of a subject by id; subjects are sorted, so this is a binary search.
    pub fn subject_index(&self, id: &str) -> Option<usize> {
        self.subjects
            .binary_search_by(|s| s.id.as_str().cmp(id))
            .ok()
    }
}

const CSV_HEADER_PREFIX: [&str; 7] = [
    "subject_id",
    "modality",
    "gender",
    "age_doc",
    "age_selfie",
    "card_format",
    "dim",
];

/// Loads a dataset from `path`, detecting the binary format by its magic bytes
/// and otherwise parsing the embeddings CSV.
pub fn load_dataset(path: &Path) -> Result<PairedDataset> {
    let bytes = fs::read(path)?;
    if bytes.starts_with(BINARY_MAGIC) {
        parse_binary(&bytes)
    } else {
        let text = String::from_utf8(bytes)
            .map_err(|e| Error::parse(0, format!("file is not valid UTF-8: {e}")))?;
        parse_csv(&text)
    }
}

/// Writes a dataset in the embeddings CSV format.
pub fn write_dataset_csv(dataset: &PairedDataset, path: &Path) -> Result<()> {
    let file = fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    writeln!(
        w,
        "subject_id,modality,gender,age_doc,age_selfie,card_format,dim,{}",
        (0..dataset.dim)
            .map(|i| format!("f{i}"))
            .collect::<Vec<_>>()
            .join(",")
    )?;
    for subject in &dataset.subjects {
        if subject.id.contains(',') || subject.id.contains('\n') {
            return Err(Error::Config(format!(
                "subject id {:?} cannot be written as CSV",
                subject.id
            )));
        }
        for rec in [&subject.document, &subject.selfie] {
            write!(
                w,
                "{},{},{},{},{},{},{}",
                subject.id,
                rec.modality,
                rec.gender,
                subject.doc_age(),
                subject.selfie_age(),
                rec.card_format,
                dataset.dim
            )?;
            for v in &rec.base_feature {
                write!(w, ",{v}")?;
            }
            writeln!(w)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn parse_csv(text: &str) -> Result<PairedDataset> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::parse(0, "no records (empty file)"))?;
    let head: Vec<&str> = header.split(',').collect();
    if head.len() < CSV_HEADER_PREFIX.len() + 1
        || head[..CSV_HEADER_PREFIX.len()] != CSV_HEADER_PREFIX
    {
        return Err(Error::parse(1, "missing or malformed header"));
    }

    // Row-level metadata kept so subject-level checks can point at a line.
    struct Row {
        line: usize,
        record: ImageRecord,
        age_doc: u32,
        age_selfie: u32,
    }
    let mut rows: Vec<Row> = Vec::new();
    let mut seen: HashMap<(String, Modality), usize> = HashMap::new();
    let mut dim: Option<usize> = None;

    for (idx, line) in lines {
        let line_no = idx + 1;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() < 8 {
            return Err(Error::parse(line_no, "too few fields"));
        }
        let subject_id = fields[0].to_string();
        if subject_id.is_empty() {
            return Err(Error::parse(line_no, "empty subject_id"));
        }
        let modality = Modality::parse(fields[1])
            .ok_or_else(|| Error::parse(line_no, format!("unknown modality {:?}", fields[1])))?;
        let gender = Gender::parse(fields[2])
            .ok_or_else(|| Error::parse(line_no, format!("unknown gender {:?}", fields[2])))?;
        let age_doc: u32 = fields[3]
            .parse()
            .map_err(|_| Error::parse(line_no, format!("bad age_doc {:?}", fields[3])))?;
        let age_selfie: u32 = fields[4]
            .parse()
            .map_err(|_| Error::parse(line_no, format!("bad age_selfie {:?}", fields[4])))?;
        let card_format = CardFormat::parse(fields[5])
            .ok_or_else(|| Error::parse(line_no, format!("unknown card_format {:?}", fields[5])))?;
        let row_dim: usize = fields[6]
            .parse()
            .map_err(|_| Error::parse(line_no, format!("bad dim {:?}", fields[6])))?;
        match dim {
            None => dim = Some(row_dim),
            Some(d) if d != row_dim => {
                return Err(Error::parse(
                    line_no,
                    format!("inconsistent dim {row_dim}, expected {d}"),
                ))
            }
            _ => {}
        }
        if fields.len() - 7 != row_dim {
            return Err(Error::parse(
                line_no,
                format!("expected {} feature values, found {}", row_dim, fields.len() - 7),
            ));
        }
        let mut base_feature = Vec::with_capacity(row_dim);
        for f in &fields[7..] {
            let v: f32 = f
                .parse()
                .map_err(|_| Error::parse(line_no, format!("bad feature value {f:?}")))?;
            if !v.is_finite() {
                return Err(Error::parse(line_no, format!("non-finite feature {f:?}")));
            }
            base_feature.push(v);
        }
        if let Some(&first) = seen.get(&(subject_id.clone(), modality)) {
            return Err(Error::parse(
                line_no,
                format!("duplicate ({subject_id}, {modality}) record; first at line {first}"),
            ));
        }
        seen.insert((subject_id.clone(), modality), line_no);

        let age_at_capture = match modality {
            Modality::Document => age_doc,
            Modality::Selfie => age_selfie,
        };
        let record = ImageRecord {
            subject_id,
            modality,
            gender,
            age_at_capture,
            card_format,
            base_feature,
        };
        if let Err(e) = record.validate() {
            return Err(Error::parse(line_no, e.to_string()));
        }
        rows.push(Row {
            line: line_no,
            record,
            age_doc,
            age_selfie,
        });
    }

    if rows.is_empty() {
        return Err(Error::parse(0, "no records"));
    }

    // Pair rows into subjects, enforcing exactly one record per modality and
    // consistent per-subject metadata.
    let mut by_subject: HashMap<String, Vec<usize>> = HashMap::new();
    for (i, row) in rows.iter().enumerate() {
        by_subject
            .entry(row.record.subject_id.clone())
            .or_default()
            .push(i);
    }
    let mut subjects = Vec::with_capacity(by_subject.len());
    for (id, idxs) in by_subject {
        if idxs.len() != 2 {
            let line = rows[idxs[0]].line;
            return Err(Error::parse(
                line,
                format!("subject {id} has {} records, expected 2", idxs.len()),
            ));
        }
        let (a, b) = (&rows[idxs[0]], &rows[idxs[1]]);
        let (doc, selfie) = match (a.record.modality, b.record.modality) {
            (Modality::Document, Modality::Selfie) => (a, b),
            (Modality::Selfie, Modality::Document) => (b, a),
            // One per modality is guaranteed by duplicate detection above.
            _ => unreachable!(),
        };
        if doc.record.gender != selfie.record.gender
            || doc.age_doc != selfie.age_doc
            || doc.age_selfie != selfie.age_selfie
        {
            return Err(Error::parse(
                selfie.line,
                format!("subject {id} rows disagree on gender or ages"),
            ));
        }
        subjects.push(Subject {
            id,
            document: doc.record.clone(),
            selfie: selfie.record.clone(),
        });
    }
    PairedDataset::from_subjects(subjects)
}

const BINARY_MAGIC: &[u8; 4] = b"XMV1";

/// Writes a dataset in the `XMV1` binary envelope (little-endian, f32 features).
pub fn write_dataset_binary(dataset: &PairedDataset, path: &Path) -> Result<()> {
    let file = fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    w.write_all(BINARY_MAGIC)?;
    let n_records = (dataset.len() * 2) as u32;
    w.write_all(&n_records.to_le_bytes())?;
    w.write_all(&(dataset.dim as u32).to_le_bytes())?;
    for subject in &dataset.subjects {
        for rec in [&subject.document, &subject.selfie] {
            let id = subject.id.as_bytes();
            if id.len() > u16::MAX as usize {
                return Err(Error::Config(format!("subject id too long: {}", subject.id)));
            }
            w.write_all(&(id.len() as u16).to_le_bytes())?;
            w.write_all(id)?;
            let modality = match rec.modality {
                Modality::Document => 0u8,
                Modality::Selfie => 1,
            };
            let gender = match rec.gender {
                Gender::Male => 0u8,
                Gender::Female => 1,
                Gender::Unknown => 2,
            };
            let card = match rec.card_format {
                CardFormat::Yellow => 0u8,
                CardFormat::Blue => 1,
                CardFormat::NotApplicable => 2,
            };
            w.write_all(&[modality, gender, card])?;
            w.write_all(&(subject.doc_age() as u16).to_le_bytes())?;
            w.write_all(&(subject.selfie_age() as u16).to_le_bytes())?;
            for v in &rec.base_feature {
                w.write_all(&v.to_le_bytes())?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

fn parse_binary(bytes: &[u8]) -> Result<PairedDataset> {
    struct Cursor<'a> {
        bytes: &'a [u8],
        pos: usize,
    }
    impl<'a> Cursor<'a> {
        fn take(&mut self, n: usize) -> Result<&'a [u8]> {
            if self.pos + n > self.bytes.len() {
                return Err(Error::parse(0, "truncated binary dataset"));
            }
            let s = &self.bytes[self.pos..self.pos + n];
            self.pos += n;
            Ok(s)
        }
        fn u16(&mut self) -> Result<u16> {
            Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
        }
        fn u32(&mut self) -> Result<u32> {
            Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
        }
    }

    let mut c = Cursor { bytes, pos: BINARY_MAGIC.len() };
    let n_records = c.u32()? as usize;
    let dim = c.u32()? as usize;
    if n_records == 0 {
        return Err(Error::parse(0, "no records"));
    }
    if !n_records.is_multiple_of(2) {
        return Err(Error::parse(0, "odd record count in binary dataset"));
    }
    let mut subjects = Vec::with_capacity(n_records / 2);
    for _ in 0..n_records / 2 {
        let mut pair: Vec<(ImageRecord, u32, u32)> = Vec::with_capacity(2);
        for _ in 0..2 {
            let id_len = c.u16()? as usize;
            let id = std::str::from_utf8(c.take(id_len)?)
                .map_err(|_| Error::parse(0, "subject id is not UTF-8"))?
                .to_string();
            let tags = c.take(3)?;
            let modality = match tags[0] {
                0 => Modality::Document,
                1 => Modality::Selfie,
                v => return Err(Error::parse(0, format!("bad modality tag {v}"))),
            };
            let gender = match tags[1] {
                0 => Gender::Male,
                1 => Gender::Female,
                2 => Gender::Unknown,
                v => return Err(Error::parse(0, format!("bad gender tag {v}"))),
            };
            let card_format = match tags[2] {
                0 => CardFormat::Yellow,
                1 => CardFormat::Blue,
                2 => CardFormat::NotApplicable,
                v => return Err(Error::parse(0, format!("bad card tag {v}"))),
            };
            let age_doc = c.u16()? as u32;
            let age_selfie = c.u16()? as u32;
            let raw = c.take(dim * 4)?;
            let mut base_feature = Vec::with_capacity(dim);
            for chunk in raw.chunks_exact(4) {
                base_feature.push(f32::from_le_bytes(chunk.try_into().unwrap()));
            }
            let age_at_capture = match modality {
                Modality::Document => age_doc,
                Modality::Selfie => age_selfie,
            };
            pair.push((
                ImageRecord {
                    subject_id: id,
                    modality,
                    gender,
                    age_at_capture,
                    card_format,
                    base_feature,
                },
                age_doc,
                age_selfie,
            ));
        }
        let (b, _, _) = pair.pop().unwrap();
        let (a, _, _) = pair.pop().unwrap();
        let (doc, selfie) = match (a.modality, b.modality) {
            (Modality::Document, Modality::Selfie) => (a, b),
            (Modality::Selfie, Modality::Document) => (b, a),
            _ => {
                return Err(Error::parse(
                    0,
                    format!("subject {} does not have one record per modality", a.subject_id),
                ))
            }
        };
        if doc.subject_id != selfie.subject_id {
            return Err(Error::parse(0, "record pair with mismatched subject ids"));
        }
        subjects.push(Subject {
            id: doc.subject_id.clone(),
            document: doc,
            selfie,
        });
    }
    PairedDataset::from_subjects(subjects)
}
