use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use anyhow::{anyhow, Context};
use fluency_core::harness::{
    self, combine_rouge_lm, load_dataset, reference_count_label, split_dataset, train_combiner, DatasetRecord,
    MetricScores, ScoreFile, Split, SplitSizes,
};
use fluency_core::overlap::{ngram_overlap, rouge_l_multi};
use fluency_core::scorers::score_dataset;
use fluency_core::subword::learn_vocabulary;
use fluency_core::text::read_corpus;
use fluency_core::{
    ExternalScoreTable, Measure, NGramModel, ScoreKind, ScoreSource, SubwordVocabulary, TokenSequence, TrainConfig,
    UnitSpace,
};

use crate::{
    CombineArgs, EvaluateArgs, Failure, Group, Kind, Method, OverlapChoice, RougeArgs, ScoreArgs, SplitArgs, Subset,
    TrainLmArgs, TrainSubwordArgs, Unit,
};

type Outcome = Result<(), Failure>;

fn invalid(msg: impl std::fmt::Display) -> Failure {
    Failure::Validation(anyhow!("{msg}"))
}

trait Runtime<T> {
    fn runtime(self) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> Runtime<T> for Result<T, E> {
    fn runtime(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Runtime(e.into()))
    }
}

fn input(path: &Path, what: &str) -> Result<(), Failure> {
    if !path.is_file() {
        return Err(invalid(format!("{what} {} is not a readable file", path.display())));
    }
    Ok(())
}

fn output(path: &Path) -> Result<(), Failure> {
    if path.is_dir() {
        return Err(invalid(format!("output {} is a directory", path.display())));
    }
    let parent = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    if !parent.is_dir() {
        return Err(invalid(format!("output directory {} does not exist", parent.display())));
    }
    Ok(())
}

/// Writes through a temporary file in the destination directory, then
/// renames it over `path`.
fn write_atomic(path: &Path, body: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> Result<(), Failure> {
    let parent = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let run = || -> anyhow::Result<()> {
        let tmp = tempfile::NamedTempFile::new_in(parent)?;
        {
            let mut w = BufWriter::new(tmp.as_file());
            body(&mut w)?;
            w.flush()?;
        }
        tmp.as_file().sync_all()?;
        tmp.persist(path)?;
        Ok(())
    };
    run().with_context(|| format!("writing {}", path.display())).runtime()
}

fn open(path: &Path) -> anyhow::Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path).with_context(|| format!("opening {}", path.display()))?))
}

fn load_corpus(path: &Path) -> Result<Vec<TokenSequence>, Failure> {
    let corpus =
        read_corpus(open(path).runtime()?).with_context(|| format!("reading corpus {}", path.display())).runtime()?;
    if corpus.is_empty() {
        return Err(Failure::Runtime(anyhow!("corpus {} has no sentences", path.display())));
    }
    Ok(corpus)
}

fn load_vocab(path: &Path) -> Result<SubwordVocabulary, Failure> {
    SubwordVocabulary::read(open(path).runtime()?)
        .with_context(|| format!("reading vocabulary {}", path.display()))
        .runtime()
}

fn load_records(path: &Path) -> Result<Vec<DatasetRecord>, Failure> {
    load_dataset(path).with_context(|| format!("reading dataset {}", path.display())).runtime()
}

fn load_scores(path: &Path) -> Result<ScoreFile, Failure> {
    ScoreFile::read(open(path).runtime()?).with_context(|| format!("reading score file {}", path.display())).runtime()
}

fn load_split(path: &Path) -> Result<Split, Failure> {
    let text = std::fs::read_to_string(path).with_context(|| format!("opening {}", path.display())).runtime()?;
    serde_json::from_str(&text).with_context(|| format!("reading split {}", path.display())).runtime()
}

fn write_scores(path: &Path, file: &ScoreFile) -> Outcome {
    write_atomic(path, |w| file.write(w))
}

pub fn train_subword(a: TrainSubwordArgs) -> Outcome {
    input(&a.corpus, "corpus")?;
    output(&a.out)?;
    if a.target_size == 0 {
        return Err(invalid("--target-size must be positive"));
    }
    let corpus = load_corpus(&a.corpus)?;
    let vocab = learn_vocabulary(&corpus, a.target_size).runtime()?;
    write_atomic(&a.out, |w| vocab.write(w))
}

pub fn train_lm(a: TrainLmArgs) -> Outcome {
    input(&a.corpus, "corpus")?;
    if let Some(v) = &a.vocab {
        input(v, "vocabulary")?;
    }
    output(&a.out)?;
    if a.order == 0 {
        return Err(invalid("--order must be at least 1"));
    }
    if !(a.discount > 0.0 && a.discount < 1.0) {
        return Err(invalid("--discount must lie strictly between 0 and 1"));
    }
    let corpus = load_corpus(&a.corpus)?;
    let config = TrainConfig { order: a.order, unk_threshold: a.unk_threshold, discount: a.discount };
    let model = match &a.vocab {
        None => NGramModel::train(&corpus, config),
        Some(v) => {
            let vocab = load_vocab(v)?;
            let pieces: Vec<_> = corpus.iter().map(|s| vocab.segment_sequence(s)).collect();
            NGramModel::train(&pieces, config)
        }
    }
    .runtime()?;
    write_atomic(&a.out, |w| model.write(w))
}

pub fn score(a: ScoreArgs) -> Outcome {
    input(&a.data, "dataset")?;
    for (p, what) in [(&a.lm, "model"), (&a.external, "external score table"), (&a.vocab, "vocabulary")] {
        if let Some(p) = p {
            input(p, what)?;
        }
    }
    if a.lm.is_some() && a.unit == Unit::Wordpiece && a.vocab.is_none() {
        return Err(invalid("--unit wordpiece with --lm needs --vocab"));
    }
    if let Some(n) = &a.name {
        if n.is_empty() || n.contains(char::is_whitespace) {
            return Err(invalid("--name must be a non-empty word"));
        }
    }
    output(&a.out)?;

    let kind = match a.kind {
        Kind::Slor => ScoreKind::Slor,
        Kind::Nce => ScoreKind::Nce,
        Kind::Ppl => ScoreKind::Ppl,
    };
    let unit = match a.unit {
        Unit::Word => UnitSpace::Word,
        Unit::Wordpiece => UnitSpace::WordPiece,
    };
    let records = load_records(&a.data)?;
    let sentences: Vec<(String, TokenSequence)> = records.iter().map(|r| (r.id.clone(), r.output_tokens())).collect();
    let vocab = a.vocab.as_deref().map(load_vocab).transpose()?;
    let scores = match (&a.lm, &a.external) {
        (Some(lm), _) => {
            let model = NGramModel::load(lm).with_context(|| format!("reading model {}", lm.display())).runtime()?;
            score_dataset(ScoreSource::Model(&model), &sentences, kind, unit, vocab.as_ref())
        }
        (None, Some(ext)) => {
            let table = ExternalScoreTable::read(open(ext).runtime()?)
                .with_context(|| format!("reading {}", ext.display()))
                .runtime()?;
            score_dataset(ScoreSource::External(&table), &sentences, kind, unit, None)
        }
        (None, None) => unreachable!("clap requires --lm or --external"),
    }
    .runtime()?;
    let values: BTreeMap<String, f64> = scores.into_iter().map(|(id, s)| (id, s.value)).collect();
    let name = a.name.unwrap_or_else(|| unit.metric_name(kind));
    write_scores(&a.out, &ScoreFile::new(name, values).with_refs("0"))
}

pub fn rouge(a: RougeArgs) -> Outcome {
    input(&a.data, "dataset")?;
    output(&a.out)?;
    let records = load_records(&a.data)?;
    let mut values = BTreeMap::new();
    let mut name = String::new();
    for r in &records {
        let (cand, refs) = (r.output_tokens(), r.reference_tokens());
        let score = match a.metric {
            OverlapChoice::RougeL => rouge_l_multi(&cand, &refs),
            OverlapChoice::Lr2R => ngram_overlap(&cand, &refs, 2, Measure::Recall),
            OverlapChoice::Lr2F => ngram_overlap(&cand, &refs, 2, Measure::FScore),
            OverlapChoice::Lr3R => ngram_overlap(&cand, &refs, 3, Measure::Recall),
            OverlapChoice::Lr3F => ngram_overlap(&cand, &refs, 3, Measure::FScore),
        }
        .with_context(|| format!("record {:?}", r.id))
        .runtime()?;
        name = score.metric_name();
        values.insert(r.id.clone(), score.value());
    }
    if records.is_empty() {
        return Err(Failure::Runtime(anyhow!("dataset {} has no records", a.data.display())));
    }
    write_scores(&a.out, &ScoreFile::new(name, values).with_refs(reference_count_label(&records)))
}

fn subset_ids(split: &Split, subset: Subset) -> &[String] {
    match subset {
        Subset::Train => &split.train,
        Subset::Dev => &split.dev,
        Subset::Test => &split.test,
    }
}

pub fn evaluate(a: EvaluateArgs) -> Outcome {
    input(&a.data, "dataset")?;
    for s in &a.scores {
        input(s, "score file")?;
    }
    if let Some(s) = &a.split {
        input(s, "split file")?;
    }
    if let Some(o) = &a.out {
        output(o)?;
    }

    let mut records = load_records(&a.data)?;
    if let (Some(path), Some(subset)) = (&a.split, a.subset) {
        let split = load_split(path)?;
        let keep: HashSet<&String> = subset_ids(&split, subset).iter().collect();
        let known: HashSet<&String> = records.iter().map(|r| &r.id).collect();
        if let Some(missing) = keep.iter().find(|id| !known.contains(**id)) {
            return Err(Failure::Runtime(anyhow!("split id {missing:?} is not in the dataset")));
        }
        records.retain(|r| keep.contains(&r.id));
    }
    if records.is_empty() {
        return Err(Failure::Runtime(anyhow!("no records to evaluate")));
    }
    let files: Vec<ScoreFile> = a.scores.iter().map(|p| load_scores(p)).collect::<Result<_, _>>()?;
    let metrics: Vec<MetricScores<'_>> = files
        .iter()
        .map(|f| MetricScores {
            name: f.metric.clone(),
            refs: f.refs.clone().unwrap_or_else(|| "?".into()),
            scores: &f.values,
        })
        .collect();
    let group_by = match a.group_by {
        Group::None => harness::GroupBy::None,
        Group::System => harness::GroupBy::System,
        Group::Domain => harness::GroupBy::Domain,
    };
    let report = harness::evaluate(&metrics, &records, group_by).runtime()?;
    if let Some(o) = &a.out {
        let json = report.to_json();
        write_atomic(o, |w| writeln!(w, "{json}"))?;
    }
    print!("{}", report.render_table());
    Ok(())
}

pub fn combine(a: CombineArgs) -> Outcome {
    input(&a.data, "dataset")?;
    input(&a.rouge, "ROUGE score file")?;
    input(&a.slor, "SLOR score file")?;
    if let Some(s) = &a.split {
        input(s, "split file")?;
    }
    output(&a.out)?;
    if let Some(m) = &a.model_out {
        output(m)?;
    }

    let records = load_records(&a.data)?;
    let rouge = load_scores(&a.rouge)?;
    let slor = load_scores(&a.slor)?;
    let split = a.split.as_deref().map(load_split).transpose()?;
    let all_ids: Vec<String> = records.iter().map(|r| r.id.clone()).collect();
    for id in &all_ids {
        for f in [&rouge, &slor] {
            if !f.values.contains_key(id) {
                return Err(Failure::Runtime(anyhow!("{} has no score for record {id:?}", f.metric)));
            }
        }
    }
    let restrict =
        |m: &BTreeMap<String, f64>| -> BTreeMap<String, f64> { all_ids.iter().map(|id| (id.clone(), m[id])).collect() };
    let (rouge_v, slor_v) = (restrict(&rouge.values), restrict(&slor.values));

    let (model, values) = match a.method {
        Method::RougeLm => {
            let fit = split.as_ref().map_or(all_ids.clone(), |s| s.train.clone());
            combine_rouge_lm(&rouge_v, &slor_v, &fit).runtime()?
        }
        Method::Trained => {
            let split = split.as_ref().expect("clap requires --split for trained");
            let features: BTreeMap<String, (f64, f64)> =
                all_ids.iter().map(|id| (id.clone(), (rouge_v[id], slor_v[id]))).collect();
            let targets: BTreeMap<String, f64> =
                records.iter().map(|r| (r.id.clone(), harness::aggregate_ratings(r))).collect();
            let model = train_combiner(&features, &targets, &split.train, &split.dev).runtime()?;
            let values = features.iter().map(|(id, (r, s))| (id.clone(), model.predict(*r, *s))).collect();
            (model, values)
        }
    };
    if let Some(path) = &a.model_out {
        let json = serde_json::to_string_pretty(&model).runtime()?;
        write_atomic(path, |w| writeln!(w, "{json}"))?;
    }
    let mut file = ScoreFile::new(model.name(), values);
    if let Some(r) = rouge.refs {
        file = file.with_refs(r);
    }
    write_scores(&a.out, &file)
}

pub fn split(a: SplitArgs) -> Outcome {
    input(&a.data, "dataset")?;
    output(&a.out)?;
    let records = load_records(&a.data)?;
    let ids: Vec<String> = records.iter().map(|r| r.id.clone()).collect();
    let sizes = SplitSizes { train: a.train, dev: a.dev, test: a.test };
    let split = split_dataset(&ids, sizes, a.seed).runtime()?;
    let json = serde_json::to_string_pretty(&split).runtime()?;
    write_atomic(&a.out, |w| writeln!(w, "{json}"))
}
