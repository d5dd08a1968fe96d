//! Error types, one enum per subsystem.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SchemaError {
    #[error("line {line}: malformed group line {text:?} (expected `name: attr1, attr2, ...`)")]
    MalformedLine { line: usize, text: String },
    #[error("line {line}: group {group:?} has no members")]
    EmptyGroup { line: usize, group: String },
    #[error("line {line}: duplicate group name {group:?}")]
    DuplicateGroup { line: usize, group: String },
    #[error("attribute {attr:?} listed twice (lines {first} and {second})")]
    DuplicateAttribute { attr: String, first: usize, second: usize },
    #[error("schema has no groups")]
    Empty,
    #[error("group {group}: expected exactly one hot bit among {members:?}, found {hot}")]
    MutualExclusionViolation { group: String, members: Vec<String>, hot: usize },
    #[error("group {group}: class index {index} out of range ({classes} classes)")]
    ClassIndexOutOfRange { group: String, index: usize, classes: usize },
    #[error("label vector has length {got}, schema defines {expected} attributes")]
    LabelLength { got: usize, expected: usize },
}

#[derive(Debug, Error)]
pub enum DataError {
    #[error("majority vote needs at least 3 votes, got {0}")]
    TooFewVotes(usize),
    #[error("vote length mismatch: expected {expected}, got {got}")]
    VoteLength { expected: usize, got: usize },
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path} row {row}: expected {expected} columns, got {got}")]
    ColumnCount { path: String, row: usize, expected: usize, got: usize },
    #[error("{path} row {row}: label cell {cell:?} is not 0, 1 or empty")]
    BadLabelToken { path: String, row: usize, cell: String },
    #[error("{path} row {row}: source sample {id:?} is missing labels")]
    MissingSourceLabels { path: String, row: usize, id: String },
    #[error("{path} row {row}: {source}")]
    RowSchema { path: String, row: usize, source: SchemaError },
    #[error("{path} row {row}: duplicate sample id {id:?}")]
    DuplicateId { path: String, row: usize, id: String },
    #[error("{path}: header {got:?} does not match schema (expected {expected:?})")]
    HeaderMismatch { path: String, got: String, expected: String },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("{path} row {row}: sample {id:?} has a mix of empty and filled label cells")]
    PartialLabels { path: String, row: usize, id: String },
    #[error("{path} row {row}: cannot read image {image}: {message}")]
    Image { path: String, row: usize, image: String, message: String },
    #[error("{path} row {row}: image {image} is {got:?}, expected {expected:?}")]
    ImageShape { path: String, row: usize, image: String, got: Vec<usize>, expected: Vec<usize> },
    #[error("synthetic group spec does not match schema: {0}")]
    GroupSpec(String),
    #[error("batch size must be >= 1")]
    BadBatchSize,
    #[error("cannot build batches from an empty dataset ({0} domain)")]
    EmptyDomain(&'static str),
    #[error("sample {id:?}: votes listed {got} times, need at least 3")]
    InsufficientVotes { id: String, got: usize },
    #[error("invalid synthetic config: {0}")]
    BadSynthConfig(String),
    #[error("sample {id:?} has no labels but a labeled batch was requested")]
    UnlabeledSample { id: String },
    #[error("sample {id:?}: {source}")]
    SampleSchema { id: String, source: SchemaError },
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("input images are {got:?}, model expects [{channels}, {size}, {size}]")]
    InputShape { got: Vec<usize>, channels: usize, size: usize },
    #[error("feature width {got} does not match classifier input width {expected}")]
    FeatureWidth { got: usize, expected: usize },
    #[error("discriminator {which} expects {expected} channels, got {got}")]
    DiscriminatorChannels { which: String, expected: usize, got: usize },
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("translator expects {expected} image channels, got {got}")]
    TranslatorChannels { expected: usize, got: usize },
    #[error("stored translation for {id:?} is {got:?}, expected {expected:?}")]
    FrozenShape { id: String, got: Vec<usize>, expected: Vec<usize> },
}

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: not a checkpoint file (bad magic)")]
    BadMagic { path: String },
    #[error("{path}: unsupported checkpoint version {version}")]
    BadVersion { path: String, version: u32 },
    #[error("schema hash mismatch: checkpoint {checkpoint}, current {current}")]
    SchemaHash { checkpoint: String, current: String },
    #[error("checkpoint is missing entry {0:?}")]
    MissingEntry(String),
    #[error("entry {name:?} has shape {got:?}, expected {expected:?}")]
    ShapeMismatch { name: String, got: Vec<usize>, expected: Vec<usize> },
}

#[derive(Debug, Error)]
pub enum LossError {
    #[error("group {group}: target class {target} out of range ({classes} classes)")]
    TargetIndex { group: usize, target: usize, classes: usize },
    #[error("prediction widths differ: {a} vs {b}")]
    PredictionWidth { a: usize, b: usize },
    #[error("batch sizes differ: {a} vs {b}")]
    BatchSize { a: usize, b: usize },
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("loss term {term} is not finite at step {step} (value {value})")]
    NonFiniteLoss { term: String, step: u64, value: f64 },
    #[error("learning-rate step {step} is outside [0, {total}]")]
    StepOutOfRange { step: u64, total: u64 },
    #[error("config: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("method {0} requires labeled target data")]
    UnlabeledTarget(String),
}

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("dataset has unlabeled samples; evaluation needs labels")]
    Unlabeled,
    #[error("dataset is empty")]
    Empty,
    #[error("got {preds} prediction rows but {labels} label rows")]
    RowCount { preds: usize, labels: usize },
    #[error("row {index} has length {got}, schema has {expected} attributes")]
    RowLength { index: usize, got: usize, expected: usize },
    #[error("model {what}: got {got}, schema expects {expected}")]
    HeadShape { what: &'static str, got: usize, expected: usize },
    #[error("cannot merge metrics over different attributes (position {index}: {a:?} vs {b:?})")]
    MergeMismatch { index: usize, a: String, b: String },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Schema(#[from] SchemaError),
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path} line {line}: expected `key = value`, got {text:?}")]
    Malformed { path: String, line: usize, text: String },
    #[error("{path} line {line}: unknown key {key:?}")]
    UnknownKey { path: String, line: usize, key: String },
    #[error("{path} line {line}: cannot parse {value:?} for key {key:?}: {message}")]
    BadValue { path: String, line: usize, key: String, value: String, message: String },
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}
