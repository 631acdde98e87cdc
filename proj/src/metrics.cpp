#include "quadrom/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "quadrom/errors.hpp"

namespace quadrom {

double relative_error(std::span<const double> reference, std::span<const double> prediction) {
    if (reference.size() != prediction.size())
        throw InvalidInput("relative_error: length mismatch");
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < reference.size(); ++i) {
        const double d = reference[i] - prediction[i];
        num += d * d;
        den += reference[i] * reference[i];
    }
    if (den == 0.0) throw DegenerateReference("relative_error: zero-norm reference");
    return std::sqrt(num / den);
}

ErrorReport error_stats(std::vector<double> errors) {
    if (errors.empty()) throw InvalidInput("error_stats: empty input");
    ErrorReport report;
    report.errors = std::move(errors);
    const std::size_t n = report.errors.size();

    double mean = 0.0;
    for (double e : report.errors) mean += e;
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (double e : report.errors) var += (e - mean) * (e - mean);
    var /= static_cast<double>(n);

    std::vector<double> sorted = report.errors;
    std::sort(sorted.begin(), sorted.end());
    const double median = (n % 2 == 1)
                              ? sorted[n / 2]
                              : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);

    report.mean = mean;
    report.stddev = std::sqrt(var);
    report.median = median;
    return report;
}

double improvement_ratio(double e_base, double e_model) {
    if (!(e_base > 0.0)) throw DegenerateReference("improvement_ratio: baseline error <= 0");
    return (e_base - e_model) / e_base;
}

}  // namespace quadrom
