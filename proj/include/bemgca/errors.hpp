#pragma once

#include <stdexcept>
#include <string>

namespace bemgca {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid parameters or an inconsistent configuration.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Mesh violates a structural invariant (bad indices, open surface, degenerate pair).
class MeshError : public Error {
public:
    using Error::Error;
};

/// A function was evaluated outside its domain (coincident kernel points, point on surface).
class DomainError : public Error {
public:
    using Error::Error;
};

/// A request exceeds a resource limit.
class ResourceError : public Error {
public:
    using Error::Error;
};

/// Numerical breakdown: singular pivot blocks, definiteness violations, stagnation.
class NumericalError : public Error {
public:
    using Error::Error;
};

/// A compute backend failed to execute a batch.
class BackendError : public Error {
public:
    using Error::Error;
};

} // namespace bemgca
