#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace vmp {

struct Estimate {
    double value = 0.0;
    double se = 0.0;
};

double mean(std::span<const double> xs);
double variance(std::span<const double> xs); // unbiased
double stddev(std::span<const double> xs);
double rms(std::span<const double> xs);
Estimate mean_estimate(std::span<const double> xs);
double correlation(std::span<const double> a, std::span<const double> b);

// Type-7 (linear interpolation) sample quantile; sorts a copy.
double quantile(std::span<const double> xs, double q);

// |a - b| <= k * sqrt(sa^2 + sb^2)
bool within_stderr(double a, double sa, double b, double sb, double k = 3.0);

} // namespace vmp
