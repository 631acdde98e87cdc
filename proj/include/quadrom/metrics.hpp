#pragma once

#include <span>
#include <vector>

namespace quadrom {

/// l2 relative error |u - u_pred| / |u|. Throws DegenerateReference when the
/// reference norm is zero.
double relative_error(std::span<const double> reference, std::span<const double> prediction);

/// Per-snapshot errors with their summary statistics.
struct ErrorReport {
    std::vector<double> errors;
    double mean = 0.0;
    double stddev = 0.0;  // population
    double median = 0.0;
};

ErrorReport error_stats(std::vector<double> errors);

/// e_r = (e_base - e_model) / e_base; positive when the corrected model
/// improves on the baseline.
double improvement_ratio(double e_base, double e_model);

}  // namespace quadrom
