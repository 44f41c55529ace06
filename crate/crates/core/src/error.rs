use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    // network validation
    #[error("network contains a cycle through pipe `{0}`")]
    CycleDetected(String),
    #[error("network is disconnected ({0} components)")]
    Disconnected(usize),
    #[error("vertex `{0}` joins exactly two pipes; merge them into one pipe")]
    DegreeTwoVertex(String),
    #[error("inaccessible end `{0}` is not a leaf")]
    NonLeafX0(String),
    #[error("pipe `{0}` has non-positive length {1}")]
    NonpositiveLength(String, f64),
    #[error("pipe `{pipe}` has non-positive area {area} at x = {x}")]
    NonpositiveArea { pipe: String, x: f64, area: f64 },
    #[error("pipe `{0}`: area must be constant near its leaf end")]
    AreaNotConstantAtLeaf(String),
    #[error("wave speed and gravity must be positive")]
    NonpositiveConstant,
    #[error("unknown vertex `{0}`")]
    UnknownVertex(String),
    #[error("unknown pipe `{0}`")]
    UnknownPipe(String),
    #[error("duplicate id `{0}`")]
    DuplicateId(String),
    #[error("accessible list must contain every leaf except x0 exactly once: {0}")]
    AccessibleMismatch(String),
    #[error("invalid area profile on pipe `{0}`: {1}")]
    InvalidArea(String, String),

    // geometry
    #[error("point lies on junction `{0}`")]
    PointIsJunction(String),
    #[error("offset {offset} is outside the interior of pipe `{pipe}`")]
    PointOutOfRange { pipe: String, offset: f64 },

    // forward simulation
    #[error("unstable configuration: courant number {0} exceeds 1")]
    UnstableConfig(f64),
    #[error("invalid simulation configuration: {0}")]
    InvalidConfig(String),
    #[error("boundary series length {got} does not match the {expected} simulation samples")]
    MismatchedSeriesLength { expected: usize, got: usize },

    // impulse-response processing
    #[error("impulse-response oracle exceeded {0} wave events; reduce the horizon or raise prune_eps")]
    HorizonTooLarge(usize),
    #[error("area profile of pipe `{0}` is not piecewise constant")]
    NotPiecewiseConstant(String),
    #[error("smoothing window of {window} samples exceeds series length {len}")]
    WindowTooLarge { window: usize, len: usize },
    #[error("resample query {0} lies outside the source grid")]
    OutOfRange(f64),
    #[error("malformed impulse-response file: {0}")]
    MalformedIrm(String),

    // inversion
    #[error("impulse-response horizon too short: need {needed} samples, have {have}")]
    HorizonTooShort { needed: usize, have: usize },
    #[error("time step mismatch: impulse response dt = {irm}, reconstruction dt = {cfg}")]
    GridMismatch { irm: f64, cfg: f64 },
    #[error("action time {f} s at leaf `{leaf}` exceeds tau = {tau} s")]
    ActionTimeExceedsTau { leaf: String, f: f64, tau: f64 },
    #[error("restricted boundary-control system is singular; use a positive regularization weight")]
    SingularSystem,
    #[error("need at least two volume samples to form an area profile")]
    TooFewPoints,
}
