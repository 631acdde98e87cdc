#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace quadrom {

/// Caller handed in something that violates a precondition (bad shape,
/// non-finite values, out-of-range argument).
struct InvalidInput : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// An iterative kernel failed to converge or a linear system turned out
/// numerically singular.
struct NumericalFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Dataset files disagree with the shapes declared in their manifest.
struct CorruptDataset : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Every target in a relative-error computation had (near-)zero norm.
struct DegenerateTarget : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Reference field of a relative error has zero norm.
struct DegenerateReference : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Training produced a non-finite loss. Carries the loss history recorded
/// up to the failing epoch so callers can diagnose the blow-up.
struct TrainingDiverged : std::runtime_error {
    explicit TrainingDiverged(const std::string& what, std::vector<double> history = {})
        : std::runtime_error(what), loss_history(std::move(history)) {}
    std::vector<double> loss_history;
};

}  // namespace quadrom
