use thiserror::Error;

/// Every failure the library can report.
#[derive(Debug, Error)]
pub enum Error {
    #[error("series has no positive count through the scaling week")]
    DegenerateScale,
    #[error("daily series of length {0} is not a whole number of weeks")]
    Alignment(usize),
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("invalid epiweek {year}-W{week:02}")]
    InvalidEpiWeek { year: i32, week: u32 },
    #[error("weeks are not consecutive: expected {expected}, found {found}")]
    NonConsecutive { expected: String, found: String },

    #[error("weights sum to {0}, expected 1")]
    WeightSum(f64),
    #[error("weight {0} is negative or not finite")]
    NegativeWeight(f64),
    #[error("quantile values are not non-decreasing at index {0}")]
    Monotonicity(usize),
    #[error("invalid quantile levels: {0}")]
    InvalidLevels(String),

    #[error("not enough history: {0}")]
    InsufficientHistory(String),
    #[error("non-positive scale {0}")]
    NonPositiveScale(f64),
    #[error("input has no positive signal: {0}")]
    AllZero(&'static str),

    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("initial point is outside the prior support: {0}")]
    Initialization(String),
    #[error("horizon {horizon} beyond the {season_weeks}-week season (last observed week {observed})")]
    HorizonBeyondSeason {
        horizon: usize,
        observed: usize,
        season_weeks: usize,
    },

    #[error("invalid interval: lower {lower} > upper {upper} or alpha {alpha} outside (0,1)")]
    InvalidInterval { lower: f64, upper: f64, alpha: f64 },
    #[error("quantile level set cannot be scored: {0}")]
    LevelSet(String),
    #[error("reference score is zero while the evaluated score is {0}")]
    UndefinedReference(f64),
    #[error("no truth peak for location {0}")]
    MissingPeak(String),
    #[error("degenerate sample: {0}")]
    DegenerateSample(String),
    #[error("design matrix is rank deficient")]
    RankDeficient,

    #[error("missing weeks for {location}: {missing:?}")]
    Gap { location: String, missing: Vec<String> },
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("unknown target {0:?}")]
    Target(String),
    #[error("schema mismatch: {0}")]
    Schema(String),
    #[error("file not found: {0}")]
    FileNotFound(String),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("TOML error: {0}")]
    Toml(#[from] toml::de::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
