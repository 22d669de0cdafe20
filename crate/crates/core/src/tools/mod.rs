//! Tool adapters, the credential-gated runtime and the mock services that
//! stand in for ADMA, Google Drive, Realm5 and John Deere.

mod adapter;
pub mod builtin;
mod credentials;
pub mod extensions;
pub mod mock;
mod runtime;

pub use adapter::{IdentityAdapter, ToolAdapter, ToolCall, ToolError};
pub use credentials::{CredentialSlot, Credentials, REDACTED};
pub use mock::{MockError, MockServices};
pub use runtime::{
    AdapterKey, RegistrationHandle, ToolExecution, ToolRuntime, DEFAULT_TOOL_TIMEOUT,
};
