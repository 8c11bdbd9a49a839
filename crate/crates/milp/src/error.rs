use thiserror::Error;

/// Errors raised while constructing a model.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("unknown variable id {0}")]
    UnknownVariable(usize),
    #[error("integer variable {0} needs finite bounds")]
    UnboundedInteger(String),
    #[error("variable {0} has an empty domain")]
    EmptyDomain(String),
    #[error("non-finite coefficient on variable {0}")]
    NonFiniteCoefficient(String),
}
