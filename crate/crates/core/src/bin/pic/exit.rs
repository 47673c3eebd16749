//! Process exit codes.
//!
//! | code | meaning |
//! |------|---------|
//! | 0 | success |
//! | 1 | anything not listed below |
//! | 2 | I/O: unreadable or missing file, missing external binary |
//! | 3 | format: malformed input, mismatched geometry, invalid curve |
//! | 4 | model digest does not match the stream |
//! | 5 | configuration: bad flags, out-of-range qp, bad config file |

use pic_core::status::{classify, ErrorClass};

/// Failure raised by the CLI itself; always a configuration error.
#[derive(Debug)]
pub struct Usage(pub String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

/// Code for the first error in the chain with a known class.
pub fn code_for(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<Usage>() {
            return ErrorClass::Config.code();
        }
        if let Some(class) = classify(cause) {
            return class.code();
        }
    }
    ErrorClass::Other.code()
}
