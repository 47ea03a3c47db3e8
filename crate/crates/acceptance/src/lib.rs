//! Hosts the `acceptance` test target, whose source lives with the core
//! integration tests.
