#pragma once

#include <stdexcept>
#include <string>

namespace bbm {

// Bad inputs: unreadable files, inconsistent dimensions, invalid options.
class ValidationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Failures of the numerics: rank deficiency, infeasible fits, factorization
// breakdowns.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DimensionMismatch : public ValidationError {
public:
    using ValidationError::ValidationError;
};

class InsufficientDuration : public ValidationError {
public:
    InsufficientDuration(double retained_s, double required_s)
        : ValidationError("insufficient scan duration: " + std::to_string(retained_s) +
                          " s retained, " + std::to_string(required_s) + " s required"),
          retained_seconds(retained_s),
          required_seconds(required_s) {}

    double retained_seconds;
    double required_seconds;
};

class InsufficientTimepoints : public ValidationError {
public:
    using ValidationError::ValidationError;
};

class RankDeficient : public NumericError {
public:
    using NumericError::NumericError;
};

class Infeasible : public NumericError {
public:
    using NumericError::NumericError;
};

}  // namespace bbm
