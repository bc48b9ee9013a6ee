// quadrature.hpp - Gauss-Legendre panels and periodic trapezoid rule
#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "magres/common.hpp"

namespace magres {

struct GaussRule {
    std::vector<double> x;  // nodes on [-1, 1]
    std::vector<double> w;
};

// Gauss-Legendre nodes/weights by Newton iteration on Legendre polynomials.
inline const GaussRule& gauss_legendre(int n) {
    static thread_local int cached_n = -1;
    static thread_local GaussRule rule;
    if (cached_n == n) return rule;
    rule.x.assign(n, 0.0);
    rule.w.assign(n, 0.0);
    for (int i = 0; i < (n + 1) / 2; ++i) {
        double x = std::cos(pi * (i + 0.75) / (n + 0.5));
        double pp = 0.0;
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0, p1 = x;
            for (int k = 2; k <= n; ++k) {
                double p2 = ((2 * k - 1) * x * p1 - (k - 1) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            pp = n * (x * p1 - p0) / (x * x - 1.0);
            double dx = p1 / pp;
            x -= dx;
            if (std::abs(dx) < 1e-15) break;
        }
        rule.x[i] = -x;
        rule.x[n - 1 - i] = x;
        rule.w[i] = rule.w[n - 1 - i] = 2.0 / ((1.0 - x * x) * pp * pp);
    }
    cached_n = n;
    return rule;
}

// Composite Gauss-Legendre over [a, b] with `panels` equal panels.
template <class F>
double integrate_gl(F&& f, double a, double b, int panels, int order = 16) {
    const GaussRule& g = gauss_legendre(order);
    KahanSum s;
    double h = (b - a) / panels;
    for (int p = 0; p < panels; ++p) {
        double c = a + (p + 0.5) * h;
        for (int k = 0; k < order; ++k)
            s.add(0.5 * h * g.w[k] * f(c + 0.5 * h * g.x[k]));
    }
    return s.value();
}

// Composite GL with panel boundaries placed on the given breakpoints, then
// subdivided so no panel exceeds max_width. Breakpoints must be sorted.
template <class F>
double integrate_gl_breaks(F&& f, const std::vector<double>& breaks, double max_width,
                           int order = 16) {
    KahanSum s;
    for (size_t i = 0; i + 1 < breaks.size(); ++i) {
        double a = breaks[i], b = breaks[i + 1];
        if (b <= a) continue;
        int panels = std::max(1, (int)std::ceil((b - a) / max_width));
        s.add(integrate_gl(f, a, b, panels, order));
    }
    return s.value();
}

// Trapezoid rule for a T-periodic integrand sampled at n uniform points:
// spectrally accurate for smooth periodic functions.
template <class F>
double integrate_periodic(F&& f, double period, int n) {
    KahanSum s;
    double h = period / n;
    for (int i = 0; i < n; ++i) s.add(f(i * h));
    return s.value() * h;
}

}  // namespace magres
