// common.hpp - shared error types and small numeric helpers
#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace magres {

class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

class NumericalError : public std::runtime_error {
public:
    explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

// Thrown when an operation is asked to run outside its temperature regime
// and the force flag is not set.
class RegimeError : public std::runtime_error {
public:
    explicit RegimeError(const std::string& msg) : std::runtime_error(msg) {}
};

inline constexpr double pi = 3.14159265358979323846;

// Compensated (Kahan) accumulator for long spectral sums.
struct KahanSum {
    double sum = 0.0;
    double carry = 0.0;
    void add(double x) {
        double y = x - carry;
        double t = sum + y;
        carry = (t - sum) - y;
        sum = t;
    }
    double value() const { return sum; }
};

// x / sinh(x) without overflow; ~1 near x = 0.
inline double x_over_sinh(double x) {
    double ax = std::abs(x);
    if (ax < 1e-4) {
        double x2 = x * x;
        return 1.0 - x2 / 6.0 + 7.0 * x2 * x2 / 360.0;
    }
    if (ax > 700.0) return 0.0;  // sinh would overflow; ratio underflows
    double e = std::exp(-ax);
    return 2.0 * ax * e / (1.0 - e * e);
}

// 1 / sinh(x) for x > 0, overflow-safe.
inline double inv_sinh(double x) {
    if (x > 700.0) return 0.0;
    double e = std::exp(-x);
    return 2.0 * e / (1.0 - e * e);
}

// C^infty-flat-at-the-outer-edge plateau bump:
//   1 on |s| <= 1, exp(1 - 1/(1-(|s|-1)^2)) on 1 < |s| < 2, 0 beyond.
inline double plateau_bump(double s) {
    double a = std::abs(s);
    if (a <= 1.0) return 1.0;
    if (a >= 2.0) return 0.0;
    double u = a - 1.0;
    return std::exp(1.0 - 1.0 / (1.0 - u * u));
}

inline bool all_finite(const std::vector<double>& v) {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

}  // namespace magres
