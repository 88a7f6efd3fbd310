use alloc::string::String;

use crate::image::DesignId;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("invalid image: {0}")]
    Image(String),
    #[error("network configuration: {0}")]
    Config(String),
    #[error("template exceeds design {0}")]
    TemplateExceedsDesign(DesignId),
    #[error("design {id}: {source}")]
    Design {
        id: DesignId,
        #[source]
        source: alloc::boxed::Box<Error>,
    },
    #[error("unknown design {0}")]
    UnknownDesign(DesignId),
    #[error("non-finite loss at iteration {0}")]
    NonFiniteLoss(usize),
    #[error("generation failed: {0}")]
    Generation(String),
    #[error("evaluation: {0}")]
    Eval(String),
}

impl Error {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }
}
