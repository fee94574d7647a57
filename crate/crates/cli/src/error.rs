use std::fmt;

use vistacast_core::eval::EvalError;
use vistacast_core::fusion::FusionError;
use vistacast_core::model::ModelError;
use vistacast_core::predict::PredictError;
use vistacast_core::quality::QualityError;
use vistacast_gbdt::GbdtError;

pub const EXIT_USER: i32 = 1;
pub const EXIT_INTERNAL: i32 = 2;

/// Something the caller can fix: bad arguments, missing inputs, data that
/// doesn't support the request.
#[derive(Debug)]
pub struct UserError(pub String);

impl fmt::Display for UserError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UserError {}

pub fn user(msg: impl Into<String>) -> anyhow::Error {
    UserError(msg.into()).into()
}

/// Exit code for a failed command: 1 when any cause in the chain is a
/// user-facing error, 2 otherwise.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    let is_user = err.chain().any(|e| {
        e.is::<UserError>()
            || e.is::<ModelError>()
            || e.downcast_ref::<FusionError>().is_some_and(|f| {
                matches!(
                    f,
                    FusionError::NoUsableFrames
                        | FusionError::InvalidTheta(_)
                        | FusionError::UnknownSnapshotKind(_)
                        | FusionError::EmptyDay(_)
                )
            })
            || e.downcast_ref::<EvalError>().is_some_and(|v| {
                matches!(v, EvalError::InvalidInput(_) | EvalError::InvalidConfig(_) | EvalError::TooFewGroups { .. })
            })
            || e.downcast_ref::<PredictError>()
                .is_some_and(|p| matches!(p, PredictError::NoTargets(_) | PredictError::SingleClass(_)))
            || e.downcast_ref::<QualityError>().is_some_and(|q| matches!(q, QualityError::InvalidThreshold(_)))
            || e.downcast_ref::<GbdtError>().is_some_and(|g| matches!(g, GbdtError::InvalidParam { .. }))
    });
    if is_user {
        EXIT_USER
    } else {
        EXIT_INTERNAL
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use anyhow::Context;

    #[test]
    fn classification_follows_the_chain() {
        let e = Err::<(), _>(FusionError::NoUsableFrames).context("fuse").unwrap_err();
        assert_eq!(exit_code(&e), EXIT_USER);
        let e = Err::<(), _>(std::io::Error::other("disk")).context("write").unwrap_err();
        assert_eq!(exit_code(&e), EXIT_INTERNAL);
        assert_eq!(exit_code(&user("no model")), EXIT_USER);
    }
}
