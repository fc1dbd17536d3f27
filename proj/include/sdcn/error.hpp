#pragma once

#include <stdexcept>
#include <string>

namespace sdcn {

/// Incompatible tensor dimensions or layer shapes.
class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A configuration value outside its valid range.
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Malformed or truncated file contents (bad magic, short read, version).
class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// File could not be opened, read or written.
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A metric is undefined for the given input (e.g. AUC with one class).
class MetricError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// API misuse, e.g. backward with a cache from a different model.
class UsageError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

}  // namespace sdcn
