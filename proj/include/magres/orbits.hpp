// orbits.hpp - periodic orbits on the energy shell and the data the trace
// formula needs: periods, actions, Maslov indices, reduced Poincare maps,
// and the kappa-moment m_gamma = int dH/dkappa dt = -flux.
#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <optional>
#include <vector>

#include "magres/classical.hpp"
#include "magres/common.hpp"
#include "magres/model.hpp"
#include "magres/quadrature.hpp"
#include "magres/rng.hpp"

namespace magres {

struct PeriodicOrbit {
    PhasePoint x0;
    double period = 0.0;            // T = r * primitive_period (signed; < 0 for partners)
    double primitive_period = 0.0;  // T*
    int repetitions = 1;            // r
    double action = 0.0;            // S = loop integral p . dq
    int maslov = 0;                 // nu
    Mat monodromy;                  // tangent map over |T|
    Mat poincare;                   // reduced transverse map
    double det_one_minus_p = 0.0;
    double m_gamma = 0.0;           // primitive-period integral of dH/dkappa
    double flux = 0.0;              // loop integral a . dq
    bool degenerate = false;        // Poincare map has eigenvalue ~ 1 (H.5 fails)
    double closure_error = 0.0;
    double mu = 0.0;
    double kappa = 0.0;
    bool time_reversed = false;

    // negative-time partner carrying the conjugate phase
    PeriodicOrbit reversed_partner() const {
        PeriodicOrbit p = *this;
        p.period = -period;
        p.action = -action;
        p.maslov = -maslov;
        p.time_reversed = !time_reversed;
        return p;
    }
};

// Append the negative-time partner of every positive-period entry.
inline std::vector<PeriodicOrbit> close_under_time_reversal(std::vector<PeriodicOrbit> orbits) {
    size_t n = orbits.size();
    for (size_t i = 0; i < n; ++i)
        if (orbits[i].period > 0.0) orbits.push_back(orbits[i].reversed_partner());
    return orbits;
}

struct PoincareReduction {
    Mat p;  // (2n-2) x (2n-2)
    double det_one_minus_p = 0.0;
    double min_eigen_distance_to_one = 0.0;
};

// Remove the flow and energy-gradient directions from the monodromy by
// symplectic projection onto a complement W of span{v, u}, u = w / omega(v,w).
// det(1 - P) does not depend on the complement choice.
inline PoincareReduction poincare_reduce(const Mat& monodromy, const Vec& flow_dir,
                                         const Vec& energy_grad) {
    int d = (int)monodromy.rows();
    int n = d / 2;
    Mat j = Mat::Zero(d, d);
    j.topRightCorner(n, n) = Mat::Identity(n, n);
    j.bottomLeftCorner(n, n) = -Mat::Identity(n, n);
    auto omega = [&](const Vec& a, const Vec& b) { return a.dot(j * b); };

    Vec v = flow_dir;
    if (v.norm() == 0.0) throw NumericalError("poincare_reduce: zero flow direction");
    double c = omega(v, energy_grad);
    if (std::abs(c) < 1e-12 * v.norm() * energy_grad.norm())
        throw NumericalError("poincare_reduce: degenerate flow/energy pairing");
    Vec u = energy_grad / c;

    double vres = (monodromy * v - v).norm() / (1.0 + monodromy.norm()) / v.norm();
    if (vres > 1e-5)
        throw NumericalError(
            "poincare_reduce: flow direction is not a unit eigenvector (closure broken), "
            "residual " + std::to_string(vres));

    auto project = [&](const Vec& z) -> Vec { return z - omega(z, u) * v + omega(z, v) * u; };

    // symplectic basis (e1, e2, ...) of W with omega(e_{2k}, e_{2k+1}) = 1
    std::vector<Vec> basis;
    for (int i = 0; i < d && (int)basis.size() < d - 2; ++i) {
        Vec z = project(Vec::Unit(d, i));
        for (size_t k = 0; k + 1 < basis.size(); k += 2) {
            z -= omega(z, basis[k + 1]) * basis[k];
            z += omega(z, basis[k]) * basis[k + 1];
        }
        if ((int)basis.size() % 2 == 0) {
            if (z.norm() > 0.3) basis.push_back(z.normalized());
        } else {
            double s = omega(basis.back(), z);
            if (std::abs(s) > 1e-8) basis.push_back(z / s);
        }
    }
    if ((int)basis.size() != d - 2)
        throw NumericalError("poincare_reduce: failed to build a symplectic complement");

    PoincareReduction out;
    int m = d - 2;
    out.p.resize(m, m);
    for (int col = 0; col < m; ++col) {
        Vec y = project(monodromy * basis[col]);
        for (int row = 0; row < m; row += 2) {
            out.p(row, col) = omega(y, basis[row + 1]);
            out.p(row + 1, col) = omega(basis[row], y);
        }
    }
    Mat one_minus = Mat::Identity(m, m) - out.p;
    out.det_one_minus_p = one_minus.determinant();
    Eigen::EigenSolver<Mat> es(out.p);
    double mind = 1e300;
    for (int i = 0; i < m; ++i)
        mind = std::min(mind, std::abs(es.eigenvalues()[i] - std::complex<double>(1.0, 0.0)));
    out.min_eigen_distance_to_one = mind;
    return out;
}

// Maslov index by counting turning points of the projected velocity over one
// primitive period (2 per libration sweep / rotation cycle, EBK-consistent);
// repetitions are additive.
inline int maslov_index_primitive(const std::vector<PhasePoint>& samples,
                                  const HamiltonianSpec& spec, double kappa) {
    int n = spec.dim();
    size_t ns = samples.size();
    // velocity samples q' = p - kappa a(q)
    std::vector<Vec> vel(ns);
    for (size_t i = 0; i < ns; ++i)
        vel[i] = samples[i].p - kappa * spec.gauge().value(samples[i].q);
    // pick the axis with the largest swing
    int best_axis = -1;
    double best_amp = 0.0;
    for (int a = 0; a < n; ++a) {
        double amp = 0.0;
        for (size_t i = 0; i < ns; ++i) amp = std::max(amp, std::abs(vel[i][a]));
        if (amp > best_amp) {
            best_amp = amp;
            best_axis = a;
        }
    }
    if (best_axis < 0 || best_amp < 1e-10)
        throw NumericalError("maslov_index: velocity projection ill-conditioned");
    int zeros = 0;
    for (size_t i = 0; i + 1 < ns; ++i) {
        double a = vel[i][best_axis], b = vel[i + 1][best_axis];
        if (a == 0.0) continue;
        if (a * b < 0.0) ++zeros;
    }
    // closed curve: sign changes come in pairs
    if (zeros % 2 != 0) ++zeros;
    return zeros;
}

inline int maslov_index(const PeriodicOrbit& orbit, const std::vector<PhasePoint>& samples,
                        const HamiltonianSpec& spec) {
    return orbit.repetitions * maslov_index_primitive(samples, spec, orbit.kappa);
}

// m_gamma by periodic-trapezoid quadrature of dH/dkappa over the primitive
// period and the flux by the line integral of a . dq; the two are tied by
// m_gamma = -flux, which callers assert as a cross-check.
struct OrbitMoment {
    double m_gamma = 0.0;
    double flux = 0.0;
};

inline OrbitMoment orbit_moment(const std::vector<PhasePoint>& samples,
                                const HamiltonianSpec& spec, double kappa, double period) {
    size_t ns = samples.size();  // uniform samples over [0, T*), last point excluded
    KahanSum sm, sf;
    for (size_t i = 0; i < ns; ++i) {
        const PhasePoint& x = samples[i];
        Vec a = spec.gauge().value(x.q);
        Vec u = x.p - kappa * a;
        sm.add(-u.dot(a));     // dH/dkappa
        sf.add(a.dot(u));      // a . qdot
    }
    double h = period / (double)ns;
    return {sm.value() * h, sf.value() * h};
}

struct OrbitSearchOptions {
    int random_seeds = 48;
    uint64_t seed = 2024;
    double integrator_tol = 1e-12;
    double newton_tol = 1e-10;
    int newton_max_iter = 50;
    double closure_tol = 1e-8;
    double degeneracy_threshold = 1e-3;  // on |eig(P) - 1|
    double min_period = 0.2;
    int quadrature_samples = 4096;
    std::vector<PhasePoint> extra_seeds;  // e.g. continuation from another kappa
};

namespace detail {

// project a point onto the energy shell along grad H
inline bool project_to_shell(const HamiltonianSpec& spec, double kappa, double mu,
                             PhasePoint& x) {
    for (int it = 0; it < 60; ++it) {
        double h = spec.hamiltonian(kappa, x);
        if (std::abs(h - mu) < 1e-13 * std::max(1.0, mu)) return true;
        Vec g = spec.gradient(kappa, x);
        double g2 = g.squaredNorm();
        if (g2 < 1e-16) return false;
        double step = (h - mu) / g2;
        int n = spec.dim();
        x.q -= step * g.head(n);
        x.p -= step * g.tail(n);
    }
    return false;
}

inline Vec flow_velocity(const HamiltonianSpec& spec, double kappa, const PhasePoint& x) {
    int n = spec.dim();
    Vec g = spec.gradient(kappa, x);
    Vec v(2 * n);
    v.head(n) = g.tail(n);
    v.tail(n) = -g.head(n);
    return v;
}

// Gauss-Newton on (x, T): closure in full phase space + section constraint
// + energy pin, solved in least squares.
struct NewtonResult {
    PhasePoint x;
    double period = 0.0;
    Mat monodromy;
    double closure = 1e300;
    bool converged = false;
};

inline NewtonResult refine_orbit(const HamiltonianSpec& spec, double kappa, double mu,
                                 const PhasePoint& x_init, double t_init,
                                 const OrbitSearchOptions& opt) {
    int n = spec.dim();
    int d = 2 * n;
    NewtonResult res;
    res.x = x_init;
    res.period = t_init;
    project_to_shell(spec, kappa, mu, res.x);
    Vec v0 = flow_velocity(spec, kappa, res.x);
    PhasePoint anchor = res.x;

    for (int it = 0; it < opt.newton_max_iter; ++it) {
        auto [xe, m] = flow_with_monodromy(spec, kappa, res.x, res.period, opt.integrator_tol);
        Vec f(d + 2);
        for (int i = 0; i < n; ++i) {
            f[i] = xe.q[i] - res.x.q[i];
            f[n + i] = xe.p[i] - res.x.p[i];
        }
        Vec dxa(d);
        dxa.head(n) = res.x.q - anchor.q;
        dxa.tail(n) = res.x.p - anchor.p;
        f[d] = v0.dot(dxa);
        f[d + 1] = spec.hamiltonian(kappa, res.x) - mu;
        res.closure = f.head(d).norm();
        res.monodromy = m;
        if (res.closure < opt.newton_tol && std::abs(f[d + 1]) < opt.newton_tol) {
            res.converged = true;
            return res;
        }
        Mat jac(d + 2, d + 1);
        jac.topLeftCorner(d, d) = m - Mat::Identity(d, d);
        Vec ve = flow_velocity(spec, kappa, xe);
        jac.block(0, d, d, 1) = ve;
        jac.block(d, 0, 1, d) = v0.transpose();
        jac(d, d) = 0.0;
        jac.block(d + 1, 0, 1, d) = spec.gradient(kappa, res.x).transpose();
        jac(d + 1, d) = 0.0;
        Vec step = jac.colPivHouseholderQr().solve(f);
        double slim = std::max(1.0, 0.3 * std::abs(res.period));
        if (step.norm() > slim) step *= slim / step.norm();
        for (int i = 0; i < n; ++i) {
            res.x.q[i] -= step[i];
            res.x.p[i] -= step[n + i];
        }
        res.period -= step[d];
        if (res.period < opt.min_period || !std::isfinite(res.period)) return res;
    }
    return res;
}

}  // namespace detail

// Mode-plane seeds for quadratic specs: points on the invariant planes of the
// linearized flow, exactly on the shell together with their exact periods.
inline std::vector<std::pair<PhasePoint, double>> quadratic_mode_seeds(
    const HamiltonianSpec& spec, double kappa, double mu) {
    std::vector<std::pair<PhasePoint, double>> seeds;
    if (!spec.is_quadratic()) return seeds;
    int n = spec.dim();
    int d = 2 * n;
    PhasePoint origin{Vec::Zero(n), Vec::Zero(n)};
    Mat s = spec.hessian(kappa, origin);
    Mat j = Mat::Zero(d, d);
    j.topRightCorner(n, n) = Mat::Identity(n, n);
    j.bottomLeftCorner(n, n) = -Mat::Identity(n, n);
    Eigen::EigenSolver<Mat> es(j * s);
    for (int i = 0; i < d; ++i) {
        double om = es.eigenvalues()[i].imag();
        if (om <= 1e-12) continue;  // keep one of each +-i Omega pair
        Vec vr = es.eigenvectors().col(i).real();
        if (vr.norm() < 1e-12) vr = es.eigenvectors().col(i).imag();
        double q2 = vr.dot(s * vr);
        if (q2 <= 0.0) continue;
        double alpha = std::sqrt(2.0 * (mu - spec.min_energy()) / q2);
        PhasePoint x{alpha * vr.head(n), alpha * vr.tail(n)};
        seeds.emplace_back(x, 2.0 * pi / om);
    }
    return seeds;
}

// Locate distinct periodic orbits with |T| <= tau, including repetitions of
// primitives. Seeds: analytic mode planes (quadratic specs), caller-supplied
// extras, and a recurrence scan over random shell points; Newton refinement
// on a section with the period as unknown.
inline std::vector<PeriodicOrbit> find_periodic_orbits(const HamiltonianSpec& spec, double kappa,
                                                       double mu, double tau,
                                                       const OrbitSearchOptions& opt = {}) {
    if (tau <= 0.0) throw ConfigError("find_periodic_orbits: tau must be positive");
    if (mu <= spec.min_energy())
        throw NumericalError("find_periodic_orbits: mu at or below min V");
    int n = spec.dim();

    // candidate (point, period) pairs
    std::vector<std::pair<PhasePoint, double>> cands = quadratic_mode_seeds(spec, kappa, mu);
    for (const auto& x : opt.extra_seeds) {
        PhasePoint y = x;
        if (detail::project_to_shell(spec, kappa, mu, y)) cands.emplace_back(y, 0.0);
    }
    {
        detail::SamplingBox box = detail::bounding_box(spec, kappa, mu);
        CounterRng rng(opt.seed, 1);
        uint64_t ctr = 0;
        int found = 0;
        while (found < opt.random_seeds && ctr < 2000000) {
            PhasePoint x{Vec(n), Vec(n)};
            for (int i = 0; i < n; ++i) {
                x.q[i] = rng.uniform(ctr++, box.qlo[i], box.qhi[i]);
                x.p[i] = rng.uniform(ctr++, box.plo[i], box.phi[i]);
            }
            double h = spec.hamiltonian(kappa, x);
            if (std::abs(h - mu) > 1e-3 * mu) continue;
            if (!detail::project_to_shell(spec, kappa, mu, x)) continue;
            cands.emplace_back(x, 0.0);
            ++found;
        }
    }

    // recurrence scan for seeds without a known period
    std::vector<std::pair<PhasePoint, double>> jobs;
    for (auto& [x, t] : cands) {
        if (t > 0.0) {
            jobs.emplace_back(x, t);
            continue;
        }
        Trajectory tr = integrate_flow(spec, kappa, x, tau, opt.integrator_tol,
                                       std::max(2000, (int)(tau * 64)));
        double scale = std::sqrt(x.q.squaredNorm() + x.p.squaredNorm()) + 1.0;
        std::vector<double> dist(tr.times.size());
        for (size_t i = 0; i < tr.times.size(); ++i)
            dist[i] = std::sqrt((tr.states[i].q - x.q).squaredNorm() +
                                (tr.states[i].p - x.p).squaredNorm());
        for (size_t i = 1; i + 1 < dist.size(); ++i) {
            if (tr.times[i] < opt.min_period) continue;
            if (dist[i] < dist[i - 1] && dist[i] <= dist[i + 1] && dist[i] < 0.08 * scale)
                jobs.emplace_back(x, tr.times[i]);
        }
    }

    // refine and collect primitives
    struct Primitive {
        PhasePoint x0;
        double t_star;
        double action;
        double m_gamma;
        double flux;
        int maslov;
        Mat monodromy;
        double closure;
        std::vector<PhasePoint> samples;
    };
    std::vector<Primitive> prims;
    auto try_add = [&](detail::NewtonResult& nr) {
        if (!nr.converged || nr.period < opt.min_period) return;
        // primitive period: first near-return along the refined orbit
        Trajectory tr = integrate_flow(spec, kappa, nr.x, nr.period, opt.integrator_tol,
                                       std::max(3000, (int)(nr.period * 256)));
        double t_star = nr.period;
        for (size_t i = 1; i + 1 < tr.times.size(); ++i) {
            if (tr.times[i] < opt.min_period) continue;
            double di = std::sqrt((tr.states[i].q - nr.x.q).squaredNorm() +
                                  (tr.states[i].p - nr.x.p).squaredNorm());
            if (di < 1e-5) {
                detail::NewtonResult sub =
                    detail::refine_orbit(spec, kappa, mu, nr.x, tr.times[i], opt);
                if (sub.converged && sub.period > opt.min_period &&
                    sub.period < nr.period - opt.min_period) {
                    nr = sub;
                    t_star = sub.period;
                }
                break;
            }
        }
        t_star = nr.period;

        // orbit samples over one primitive period (uniform, endpoint excluded)
        int ns = opt.quadrature_samples;
        Trajectory fine = integrate_flow(spec, kappa, nr.x, t_star, opt.integrator_tol, ns + 1);
        std::vector<PhasePoint> samples(fine.states.begin(), fine.states.end() - 1);

        // action S = loop integral p . qdot dt
        KahanSum sa;
        for (const auto& xx : samples) {
            Vec u = xx.p - kappa * spec.gauge().value(xx.q);
            sa.add(xx.p.dot(u));
        }
        double action = sa.value() * t_star / ns;
        OrbitMoment om = orbit_moment(samples, spec, kappa, t_star);

        // dedupe on (T*, S)
        for (const auto& p : prims)
            if (std::abs(p.t_star - t_star) < 1e-6 && std::abs(p.action - action) < 1e-6)
                return;

        Primitive p;
        p.x0 = nr.x;
        p.t_star = t_star;
        p.action = action;
        p.m_gamma = om.m_gamma;
        p.flux = om.flux;
        p.monodromy = nr.monodromy;
        p.closure = nr.closure;
        p.samples = std::move(samples);
        p.maslov = maslov_index_primitive(p.samples, spec, kappa);
        prims.push_back(std::move(p));
    };

    for (auto& [x, t] : jobs) {
        if (t > tau + 1e-9) continue;
        detail::NewtonResult nr = detail::refine_orbit(spec, kappa, mu, x, t, opt);
        try_add(nr);
    }

    std::sort(prims.begin(), prims.end(), [](const Primitive& a, const Primitive& b) {
        return a.t_star != b.t_star ? a.t_star < b.t_star : a.action < b.action;
    });

    // expand into repetitions and fill invariant-checked orbit entries
    std::vector<PeriodicOrbit> out;
    for (const auto& p : prims) {
        double scale = std::sqrt(p.x0.q.squaredNorm() + p.x0.p.squaredNorm()) + 1.0;
        if (p.closure > opt.closure_tol * scale)
            continue;
        if (std::abs(p.m_gamma + p.flux) > 1e-8 * std::max(1.0, std::abs(p.flux)))
            throw NumericalError("orbit_moment: m_gamma != -flux (quadrature failure)");
        Vec v0 = detail::flow_velocity(spec, kappa, p.x0);
        Vec g0 = spec.gradient(kappa, p.x0);
        Mat mpow = Mat::Identity(2 * n, 2 * n);
        for (int r = 1; r * p.t_star <= tau + 1e-9; ++r) {
            mpow = mpow * p.monodromy;
            PeriodicOrbit o;
            o.x0 = p.x0;
            o.period = r * p.t_star;
            o.primitive_period = p.t_star;
            o.repetitions = r;
            o.action = r * p.action;
            o.maslov = r * p.maslov;
            o.monodromy = mpow;
            o.m_gamma = p.m_gamma;
            o.flux = p.flux;
            o.closure_error = p.closure;
            o.mu = mu;
            o.kappa = kappa;
            PoincareReduction red = poincare_reduce(mpow, v0, g0);
            o.poincare = red.p;
            o.det_one_minus_p = red.det_one_minus_p;
            o.degenerate = red.min_eigen_distance_to_one < opt.degeneracy_threshold;
            out.push_back(std::move(o));
        }
    }
    std::sort(out.begin(), out.end(), [](const PeriodicOrbit& a, const PeriodicOrbit& b) {
        if (a.primitive_period != b.primitive_period)
            return a.primitive_period < b.primitive_period;
        if (a.repetitions != b.repetitions) return a.repetitions < b.repetitions;
        return a.action < b.action;
    });
    return out;
}

}  // namespace magres
