#pragma once

#include <stdexcept>
#include <string>

namespace alglm {

// Invalid configuration or arguments (fold counts, flags, learner settings).
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// A value outside the domain of a link function or probability map.
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

// Malformed input files.
class IngestionError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Numerical failure of an estimator (degenerate denominators, separation,
// no sign change in a root bracket).
class EstimationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace alglm
