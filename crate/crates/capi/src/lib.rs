//! C interface for the workbench core. Placeholder; filled in once the core
//! settles.
