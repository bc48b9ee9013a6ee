// classical.hpp - Hamiltonian flow, variational (tangent) flow, and
// phase-space / energy-shell integrals against the Liouville measure.
#pragma once

#include <boost/numeric/odeint.hpp>

#include <atomic>
#include <cmath>
#include <functional>
#include <thread>
#include <vector>

#include "magres/common.hpp"
#include "magres/model.hpp"
#include "magres/quadrature.hpp"
#include "magres/rng.hpp"

namespace magres {

struct Trajectory {
    std::vector<double> times;
    std::vector<PhasePoint> states;
    std::vector<double> energies;
    double max_energy_drift = 0.0;  // relative, against H(x0)
    double kappa = 0.0;
};

struct TangentFrame {
    std::vector<double> times;
    std::vector<Mat> frames;  // M(t), 2n x 2n, M(0) = I
    double max_symplectic_defect = 0.0;
};

namespace detail {

using OdeState = std::vector<double>;

// q' = dH/dp, p' = -dH/dq for H = |p - kappa A q|^2 / 2 + V(q)
struct FlowRhs {
    const HamiltonianSpec* spec;
    double kappa;
    void operator()(const OdeState& y, OdeState& dy, double) const {
        int n = spec->dim();
        Eigen::Map<const Vec> q(y.data(), n), p(y.data() + n, n);
        const Mat& A = spec->gauge().matrix();
        Vec u = p - kappa * (A * q);
        Vec fq = kappa * (A.transpose() * u) - spec->potential().gradient(q);
        dy.resize(2 * n);
        Eigen::Map<Vec>(dy.data(), n) = u;
        Eigen::Map<Vec>(dy.data() + n, n) = fq;
    }
};

// flow + tangent frame: dM/dt = J Hess H(x(t)) M
struct AugmentedRhs {
    const HamiltonianSpec* spec;
    double kappa;
    void operator()(const OdeState& y, OdeState& dy, double) const {
        int n = spec->dim();
        int d = 2 * n;
        FlowRhs flow{spec, kappa};
        OdeState base(y.begin(), y.begin() + d), dbase;
        flow(base, dbase, 0.0);
        dy.resize(d + d * d);
        std::copy(dbase.begin(), dbase.end(), dy.begin());
        PhasePoint x{Eigen::Map<const Vec>(y.data(), n), Eigen::Map<const Vec>(y.data() + n, n)};
        Mat h = spec->hessian(kappa, x);
        Mat jh(d, d);
        jh.topRows(n) = h.bottomRows(n);
        jh.bottomRows(n) = -h.topRows(n);
        Eigen::Map<const Mat> m(y.data() + d, d, d);
        Eigen::Map<Mat>(dy.data() + d, d, d) = jh * m;
    }
};

inline Mat symplectic_form(int d) {
    int n = d / 2;
    Mat j = Mat::Zero(d, d);
    j.topRightCorner(n, n) = Mat::Identity(n, n);
    j.bottomLeftCorner(n, n) = -Mat::Identity(n, n);
    return j;
}

template <class Rhs>
void integrate_over_times(Rhs rhs, OdeState& y, const std::vector<double>& times,
                          std::function<void(const OdeState&, double)> observe, double tol) {
    namespace ode = boost::numeric::odeint;
    using stepper_t = ode::runge_kutta_fehlberg78<OdeState>;
    auto stepper = ode::make_controlled(tol, tol, stepper_t());
    try {
        ode::integrate_times(stepper, rhs, y, times.begin(), times.end(),
                             1e-3, [&](const OdeState& s, double t) {
                                 if (!all_finite(s))
                                     throw NumericalError(
                                         "integrate_flow: non-finite state at t = " +
                                         std::to_string(t));
                                 observe(s, t);
                             });
    } catch (const ode::no_progress_error&) {
        throw NumericalError("integrate_flow: step size underflow");
    }
}

}  // namespace detail

// Integrate the flow from x0 to t_final, with dense output on a uniform grid
// of n_out points (t = 0 included).
inline Trajectory integrate_flow(const HamiltonianSpec& spec, double kappa,
                                 const PhasePoint& x0, double t_final, double tol = 1e-12,
                                 int n_out = 1001) {
    if (tol <= 0.0) throw ConfigError("integrate_flow: tol must be positive");
    int n = spec.dim();
    Trajectory tr;
    tr.kappa = kappa;
    tr.times.resize(n_out);
    double dir = (t_final >= 0.0) ? 1.0 : -1.0;
    for (int i = 0; i < n_out; ++i) tr.times[i] = t_final * i / (n_out - 1);
    if (dir < 0) { /* odeint handles negative spans with negative dt */ }

    detail::OdeState y(2 * n);
    Eigen::Map<Vec>(y.data(), n) = x0.q;
    Eigen::Map<Vec>(y.data() + n, n) = x0.p;
    double e0 = spec.hamiltonian(kappa, x0);

    detail::FlowRhs rhs{&spec, kappa};
    namespace ode = boost::numeric::odeint;
    using stepper_t = ode::runge_kutta_fehlberg78<detail::OdeState>;
    auto stepper = ode::make_controlled(tol, tol, stepper_t());
    ode::integrate_times(stepper, rhs, y, tr.times.begin(), tr.times.end(), dir * 1e-3,
                         [&](const detail::OdeState& s, double t) {
                             if (!all_finite(s))
                                 throw NumericalError("integrate_flow: non-finite state at t = " +
                                                      std::to_string(t));
                             PhasePoint x{Eigen::Map<const Vec>(s.data(), n),
                                          Eigen::Map<const Vec>(s.data() + n, n)};
                             double e = spec.hamiltonian(kappa, x);
                             tr.states.push_back(x);
                             tr.energies.push_back(e);
                             tr.max_energy_drift =
                                 std::max(tr.max_energy_drift, std::abs(e - e0) / std::abs(e0));
                         });
    return tr;
}

// Endpoint-only flow map (no dense output): returns x(t_final).
inline PhasePoint flow_map(const HamiltonianSpec& spec, double kappa, const PhasePoint& x0,
                           double t_final, double tol = 1e-12) {
    int n = spec.dim();
    detail::OdeState y(2 * n);
    Eigen::Map<Vec>(y.data(), n) = x0.q;
    Eigen::Map<Vec>(y.data() + n, n) = x0.p;
    std::vector<double> ts{0.0, t_final};
    detail::FlowRhs rhs{&spec, kappa};
    detail::integrate_over_times(rhs, y, ts, [](const detail::OdeState&, double) {}, tol);
    return PhasePoint{Eigen::Map<const Vec>(y.data(), n), Eigen::Map<const Vec>(y.data() + n, n)};
}

// Tangent (variational) flow along the trajectory's time grid.
inline TangentFrame integrate_tangent(const HamiltonianSpec& spec, double kappa,
                                      const Trajectory& traj, double tol = 1e-12) {
    int n = spec.dim();
    int d = 2 * n;
    detail::OdeState y(d + d * d, 0.0);
    Eigen::Map<Vec>(y.data(), n) = traj.states.front().q;
    Eigen::Map<Vec>(y.data() + n, n) = traj.states.front().p;
    Eigen::Map<Mat>(y.data() + d, d, d) = Mat::Identity(d, d);

    TangentFrame tf;
    Mat j = detail::symplectic_form(d);
    detail::AugmentedRhs rhs{&spec, kappa};
    detail::integrate_over_times(rhs, y, traj.times,
                                 [&](const detail::OdeState& s, double t) {
                                     Mat m = Eigen::Map<const Mat>(s.data() + d, d, d);
                                     tf.times.push_back(t);
                                     tf.frames.push_back(m);
                                     double defect =
                                         (m.transpose() * j * m - j).cwiseAbs().maxCoeff();
                                     tf.max_symplectic_defect =
                                         std::max(tf.max_symplectic_defect, defect);
                                 },
                                 tol);
    return tf;
}

// Endpoint monodromy: (x(T), M(T)) in one pass.
inline std::pair<PhasePoint, Mat> flow_with_monodromy(const HamiltonianSpec& spec, double kappa,
                                                      const PhasePoint& x0, double t_final,
                                                      double tol = 1e-12) {
    int n = spec.dim();
    int d = 2 * n;
    detail::OdeState y(d + d * d, 0.0);
    Eigen::Map<Vec>(y.data(), n) = x0.q;
    Eigen::Map<Vec>(y.data() + n, n) = x0.p;
    Eigen::Map<Mat>(y.data() + d, d, d) = Mat::Identity(d, d);
    std::vector<double> ts{0.0, t_final};
    detail::AugmentedRhs rhs{&spec, kappa};
    detail::integrate_over_times(rhs, y, ts, [](const detail::OdeState&, double) {}, tol);
    PhasePoint xe{Eigen::Map<const Vec>(y.data(), n), Eigen::Map<const Vec>(y.data() + n, n)};
    Mat m = Eigen::Map<const Mat>(y.data() + d, d, d);
    return {xe, m};
}

struct IntegralResult {
    double value = 0.0;
    double std_error = 0.0;  // 0 means the exact path was taken
    bool exact = false;
};

namespace detail {

// Axis-aligned box guaranteed to contain {H_kappa <= mu}.
struct SamplingBox {
    Vec qlo, qhi, plo, phi;
    double volume() const {
        double v = 1.0;
        for (int i = 0; i < qlo.size(); ++i) v *= (qhi[i] - qlo[i]) * (phi[i] - plo[i]);
        return v;
    }
};

inline SamplingBox bounding_box(const HamiltonianSpec& spec, double kappa, double mu) {
    int n = spec.dim();
    double r = 1.0;
    // grow radius until V > mu on the whole sphere of radius r
    for (int it = 0; it < 200; ++it) {
        double vmin = 1e300;
        int ndir = (n == 1) ? 2 : 360 * (n - 1);
        for (int k = 0; k < ndir; ++k) {
            Vec u(n);
            if (n == 1) u[0] = k ? -1.0 : 1.0;
            else if (n == 2) {
                double th = 2.0 * pi * k / ndir;
                u << std::cos(th), std::sin(th);
            } else {
                CounterRng rng(77, k);
                for (int i = 0; i < n; ++i) u[i] = rng.uniform(i) - 0.5;
                u.normalize();
            }
            Vec q = r * u;
            double v = 0.0;
            for (const auto& m : spec.potential().monomials()) {
                double t = m.coeff;
                for (int j = 0; j < n; ++j)
                    for (int e = 0; e < m.exps[j]; ++e) t *= q[j];
                v += t;
            }
            vmin = std::min(vmin, v);
        }
        if (vmin > mu) break;
        r *= 1.3;
    }
    SamplingBox box;
    box.qlo = Vec::Constant(n, -r);
    box.qhi = Vec::Constant(n, r);
    double amax = 0.0;
    const Mat& A = spec.gauge().matrix();
    amax = std::abs(kappa) * A.cwiseAbs().rowwise().sum().maxCoeff() * r;
    double pmax = amax + std::sqrt(2.0 * std::max(0.0, mu - 1.0)) + 1e-9;
    box.plo = Vec::Constant(n, -pmax);
    box.phi = Vec::Constant(n, pmax);
    return box;
}

}  // namespace detail

struct MonteCarloOptions {
    uint64_t samples = 4'000'000;
    uint64_t seed = 1;
    int workers = 0;  // 0 = hardware concurrency
};

// integral over {H_kappa <= mu} of g dq dp.
// Closed form for quadratic specs with g == nullptr (g = 1); Monte Carlo in a
// bounding box otherwise. Worker-count independent by fixed sharding.
inline IntegralResult phase_space_volume(
    const HamiltonianSpec& spec, double kappa, double mu,
    const std::function<double(const PhasePoint&)>& g = nullptr,
    const MonteCarloOptions& opt = {}) {
    if (mu <= spec.min_energy()) {
        if (mu == spec.min_energy()) return {0.0, 0.0, true};
        throw NumericalError("phase_space_volume: mu below min V, region empty");
    }
    int n = spec.dim();
    if (!g && spec.is_quadratic()) {
        // vol{z^T S z / 2 <= E} = (2 pi E)^n / (n! sqrt(det S)); S is kappa-
        // independent in determinant after p -> p - kappa a(q).
        Mat k = spec.potential().quadratic_matrix();
        double e = mu - spec.min_energy();
        double fact = 1.0;
        for (int i = 2; i <= n; ++i) fact *= i;
        double val = std::pow(2.0 * pi * e, n) / (fact * std::sqrt(k.determinant()));
        return {val, 0.0, true};
    }

    detail::SamplingBox box = detail::bounding_box(spec, kappa, mu);
    double boxvol = box.volume();
    const uint64_t shard = 1 << 16;
    uint64_t nshards = (opt.samples + shard - 1) / shard;
    std::vector<double> sums(nshards, 0.0), sums2(nshards, 0.0);
    std::vector<uint64_t> counts(nshards, 0);

    int workers = opt.workers > 0 ? opt.workers : (int)std::thread::hardware_concurrency();
    std::atomic<uint64_t> next{0};
    auto work = [&]() {
        for (;;) {
            uint64_t si = next.fetch_add(1);
            if (si >= nshards) return;
            CounterRng rng(opt.seed, si);
            uint64_t lo = si * shard;
            uint64_t hi = std::min<uint64_t>(lo + shard, opt.samples);
            KahanSum s, s2;
            PhasePoint x;
            x.q.resize(n);
            x.p.resize(n);
            for (uint64_t i = lo; i < hi; ++i) {
                uint64_t c = (i - lo) * 2 * n;
                for (int d = 0; d < n; ++d) {
                    x.q[d] = rng.uniform(c + d, box.qlo[d], box.qhi[d]);
                    x.p[d] = rng.uniform(c + n + d, box.plo[d], box.phi[d]);
                }
                Vec u = x.p - kappa * spec.gauge().value(x.q);
                double h = 0.5 * u.squaredNorm();
                for (const auto& m : spec.potential().monomials()) {
                    double t = m.coeff;
                    for (int j = 0; j < n; ++j)
                        for (int e = 0; e < m.exps[j]; ++e) t *= x.q[j];
                    h += t;
                }
                if (h <= mu) {
                    double v = g ? g(x) : 1.0;
                    s.add(v);
                    s2.add(v * v);
                }
            }
            sums[si] = s.value();
            sums2[si] = s2.value();
            counts[si] = hi - lo;
        }
    };
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();

    KahanSum total, total2;
    uint64_t ntot = 0;
    for (uint64_t si = 0; si < nshards; ++si) {
        total.add(sums[si]);
        total2.add(sums2[si]);
        ntot += counts[si];
    }
    double mean = total.value() / (double)ntot;
    double var = std::max(0.0, total2.value() / (double)ntot - mean * mean);
    IntegralResult r;
    r.value = boxvol * mean;
    r.std_error = boxvol * std::sqrt(var / (double)ntot);
    return r;
}

// Total Liouville measure (closed form, quadratic specs): d/dmu of the
// ellipsoid volume.
inline double liouville_total_quadratic(const HamiltonianSpec& spec, double mu) {
    int n = spec.dim();
    Mat k = spec.potential().quadratic_matrix();
    double e = mu - spec.min_energy();
    double fact = 1.0;
    for (int i = 2; i <= n; ++i) fact *= i;
    return n * std::pow(2.0 * pi, n) * std::pow(e, n - 1) / (fact * std::sqrt(k.determinant()));
}

// integral over the shell {H_kappa = mu} of g against the Liouville measure
// dSigma/|grad H|, computed as d/dmu of the volume integral (co-area) with
// central differences and one Richardson step. Quadratic specs with constant
// g use the closed form.
inline IntegralResult liouville_surface_integral(
    const HamiltonianSpec& spec, double kappa, double mu,
    const std::function<double(const PhasePoint&)>& g = nullptr,
    const MonteCarloOptions& opt = {}) {
    if (mu <= spec.min_energy())
        throw NumericalError("liouville_surface_integral: mu at or below min V");

    // criticality check: sample the shell, look for small |grad H|
    {
        CounterRng rng(13, 0);
        detail::SamplingBox box = detail::bounding_box(spec, kappa, mu);
        int found = 0;
        for (uint64_t i = 0; i < 40000 && found < 400; ++i) {
            PhasePoint x;
            x.q.resize(spec.dim());
            x.p.resize(spec.dim());
            for (int d = 0; d < spec.dim(); ++d) {
                x.q[d] = rng.uniform(i * 2 * spec.dim() + d, box.qlo[d], box.qhi[d]);
                x.p[d] = rng.uniform(i * 2 * spec.dim() + spec.dim() + d, box.plo[d], box.phi[d]);
            }
            double h = spec.hamiltonian(kappa, x);
            if (std::abs(h - mu) < 1e-2 * mu) {
                ++found;
                if (spec.gradient(kappa, x).norm() < 1e-6)
                    throw NumericalError("liouville_surface_integral: mu appears critical");
            }
        }
    }

    if (!g && spec.is_quadratic())
        return {liouville_total_quadratic(spec, mu), 0.0, true};

    auto vol = [&](double m) { return phase_space_volume(spec, kappa, m, g, opt); };
    double h1 = 1e-3 * mu;
    auto d_at = [&](double h) {
        IntegralResult a = vol(mu + h), b = vol(mu - h);
        IntegralResult r;
        r.value = (a.value - b.value) / (2.0 * h);
        r.std_error = std::sqrt(a.std_error * a.std_error + b.std_error * b.std_error) / (2.0 * h);
        return r;
    };
    IntegralResult d1 = d_at(h1), d2 = d_at(0.5 * h1);
    IntegralResult r;
    r.value = (4.0 * d2.value - d1.value) / 3.0;
    r.std_error = std::abs(r.value - d2.value) + d2.std_error;
    return r;
}

}  // namespace magres
