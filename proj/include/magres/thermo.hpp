// thermo.hpp - grand-canonical quantities from a spectrum and the smearing
// machinery: Fermi functions, Omega/N/M/chi, the time-cutoff kernels
// g = f_sigma * rho~_tau, the mean/oscillating split of M_tau, and the
// long-time tail diagnostic.
#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <complex>
#include <functional>
#include <string>
#include <thread>
#include <vector>

#include "magres/common.hpp"
#include "magres/model.hpp"
#include "magres/quadrature.hpp"
#include "magres/quantum.hpp"

namespace magres {

// ---------------------------------------------------------------------------
// Fermi functions, overflow-safe on the whole real line.

inline double fermi_F(double beta, double x) {
    if (x >= 0.0) return -std::log1p(std::exp(-beta * x)) / beta;
    return x - std::log1p(std::exp(beta * x)) / beta;
}

inline double fermi_f(double beta, double x) {
    if (x >= 0.0) {
        double e = std::exp(-beta * x);
        return e / (1.0 + e);
    }
    return 1.0 / (1.0 + std::exp(beta * x));
}

// f' = dF''/... f'(x) = -beta / (4 cosh^2(beta x / 2)), overflow-safe.
inline double fermi_fprime(double beta, double x) {
    double a = 0.5 * beta * std::abs(x);
    if (a > 350.0) return 0.0;
    double c = std::cosh(a);
    return -beta / (4.0 * c * c);
}

// ---------------------------------------------------------------------------
// Temperature regimes.

enum class Regime { expansion, mesoscopic, intermediate, zero_t };

inline const char* regime_name(Regime r) {
    switch (r) {
        case Regime::expansion: return "expansion";
        case Regime::mesoscopic: return "mesoscopic";
        case Regime::intermediate: return "intermediate";
        case Regime::zero_t: return "zero-T";
    }
    return "?";
}

struct RegimeInfo {
    Regime tag = Regime::zero_t;
    // positive margins mean the defining inequalities hold with room
    double margin_expansion = 0.0;     // log(hbar^(eps-2/3) / beta)
    double margin_intermediate = 0.0;  // min of the two band margins (log)
    double margin_mesoscopic = 0.0;    // distance of sigma into [lo, hi] (log)
};

struct RegimeOptions {
    double eps = 0.05;
    double sigma_lo = 0.05;
    double sigma_hi = 20.0;
};

inline RegimeInfo regime_classify(double hbar, double beta, const RegimeOptions& opt = {}) {
    if (hbar <= 0.0 || beta <= 0.0) throw ConfigError("regime_classify: need positive inputs");
    RegimeInfo info;
    double lnh = std::log(hbar);
    info.margin_expansion = (opt.eps - 2.0 / 3.0) * lnh - std::log(beta);
    double t = 1.0 / beta;
    double lo = (1.0 - opt.eps) * lnh;          // log hbar^(1-eps)
    double hi = (2.0 / 3.0 - opt.eps) * lnh;    // log hbar^(2/3-eps)
    info.margin_intermediate = std::min(std::log(t) - lo, hi - std::log(t));
    double sigma = beta * hbar;
    info.margin_mesoscopic =
        std::min(std::log(sigma / opt.sigma_lo), std::log(opt.sigma_hi / sigma));
    if (info.margin_expansion >= 0.0) info.tag = Regime::expansion;
    else if (info.margin_intermediate >= 0.0) info.tag = Regime::intermediate;
    else if (info.margin_mesoscopic >= 0.0) info.tag = Regime::mesoscopic;
    else info.tag = Regime::zero_t;
    return info;
}

// ---------------------------------------------------------------------------
// Parameter bundle. sigma = beta * hbar is always recomputed.

struct ThermoState {
    double hbar = 0.0;
    double beta = 0.0;
    double mu = 0.0;
    double kappa = 0.0;
    double tau = 0.0;    // outer time cutoff
    double tau0 = 0.0;   // inner time cutoff
    double delta = 0.0;  // energy half-window of theta
    bool force = false;  // override regime guards (recorded by callers)
    RegimeOptions regime_opt{};

    double sigma() const { return beta * hbar; }
    RegimeInfo regime() const { return regime_classify(hbar, beta, regime_opt); }

    void validate(bool need_cutoffs = false) const {
        if (hbar <= 0.0 || beta <= 0.0) throw ConfigError("thermo state: hbar, beta must be > 0");
        if (need_cutoffs) {
            if (!(tau0 > 0.0) || !(tau > 2.0 * tau0))
                throw ConfigError("thermo state: need tau > 2 tau0 > 0");
            if (!(delta > 0.0)) throw ConfigError("thermo state: delta unset");
        }
    }

    void require_regime(Regime r, const char* op) const {
        if (force) return;
        if (regime().tag != r)
            throw RegimeError(std::string(op) + ": state is in regime '" +
                              regime_name(regime().tag) + "', needs '" + regime_name(r) +
                              "' (use force to override)");
    }
};

// Default theta half-window: half the distance from mu to the nearest
// critical value of H (= critical value of V).
inline double default_delta(const HamiltonianSpec& spec, double mu) {
    double best = 1e300;
    for (double c : spec.potential().critical_values())
        best = std::min(best, std::abs(mu - c));
    if (best > 1e299) best = std::abs(mu - spec.min_energy());
    return 0.5 * best;
}

// Smooth energy window, == 1 on [-delta/2, delta/2], 0 outside [-delta, delta].
inline double theta_window(double e, double delta) { return plateau_bump(2.0 * e / delta); }

// rho_tau(t) = rho(t / tau) with the plateau bump rho.
inline double rho_cutoff(double t, double tau) { return plateau_bump(t / tau); }

// rho_{1,tau} = rho_tau - rho_tau0 (supported on tau0 <= |t| <= 2 tau).
inline double rho_one(double t, double tau, double tau0) {
    return rho_cutoff(t, tau) - rho_cutoff(t, tau0);
}

// (pi t / sigma) / sinh(pi t / sigma)
inline double temperature_damping(double t, double sigma) {
    return x_over_sinh(pi * t / sigma);
}

// ---------------------------------------------------------------------------
// Exact spectral sums.

struct ValueWithError {
    double value = 0.0;
    double error = 0.0;
};

namespace detail {
inline void check_spectrum_cutoff(const SpectralResult& sp, const ThermoState& st,
                                  const char* op) {
    double need = st.mu + 40.0 / st.beta;
    if (sp.max_energy() < need)
        throw NumericalError(std::string(op) + ": spectrum too short, need levels up to E = " +
                             std::to_string(need) + " but have " +
                             std::to_string(sp.max_energy()));
    for (size_t j = 0; j < sp.size(); ++j) {
        if (sp.energies[j] > need) break;
        if (!sp.converged[j])
            throw NumericalError(std::string(op) + ": level " + std::to_string(j) +
                                 " not converged below the Fermi cutoff");
    }
}

// crude but honest truncation bound: levels above the cutoff contribute at
// most their count-per-1/beta window times the boundary Fermi weight
inline double truncation_bound(const SpectralResult& sp, const ThermoState& st) {
    double emax = sp.max_energy();
    double win = 1.0 / st.beta;
    size_t cnt = 0;
    for (size_t j = sp.size(); j-- > 0;) {
        if (sp.energies[j] < emax - win) break;
        ++cnt;
    }
    double w = fermi_f(st.beta, emax - st.mu);
    return 2.0 * (double)(cnt + 1) * w / (1.0 - std::exp(-1.0));
}
}  // namespace detail

// Omega = sum_j F_beta(E_j - mu)
inline ValueWithError grand_potential(const SpectralResult& sp, const ThermoState& st) {
    st.validate();
    detail::check_spectrum_cutoff(sp, st, "grand_potential");
    KahanSum s;
    for (double e : sp.energies) s.add(fermi_F(st.beta, e - st.mu));
    return {s.value(), detail::truncation_bound(sp, st) / st.beta};
}

// N = sum_j f_beta(E_j - mu)
inline ValueWithError particle_number(const SpectralResult& sp, const ThermoState& st) {
    st.validate();
    detail::check_spectrum_cutoff(sp, st, "particle_number");
    KahanSum s;
    for (double e : sp.energies) s.add(fermi_f(st.beta, e - st.mu));
    return {s.value(), detail::truncation_bound(sp, st)};
}

// M = sum_j f_beta(E_j - mu) dE_j/dkappa  (Hellmann-Feynman route)
inline ValueWithError magnetization_exact(const SpectralResult& sp, const ThermoState& st) {
    st.validate();
    detail::check_spectrum_cutoff(sp, st, "magnetization_exact");
    if (sp.dE_dkappa.size() != sp.size())
        throw NumericalError("magnetization_exact: spectrum lacks dE/dkappa");
    KahanSum s;
    double mmax = 0.0;
    for (size_t j = 0; j < sp.size(); ++j) {
        s.add(fermi_f(st.beta, sp.energies[j] - st.mu) * sp.dE_dkappa[j]);
        mmax = std::max(mmax, std::abs(sp.dE_dkappa[j]));
    }
    return {s.value(), detail::truncation_bound(sp, st) * mmax};
}

// chi = d^2 Omega / d kappa^2 by central second difference (optionally one
// Richardson step). `spectra` maps kappa to a spectrum valid for `st`.
inline ValueWithError susceptibility_exact(
    const std::function<SpectralResult(double)>& spectra, const ThermoState& st,
    double dkappa = 1e-3, bool richardson = false) {
    st.validate();
    auto omega_at = [&](double k) {
        ThermoState s2 = st;
        s2.kappa = k;
        return grand_potential(spectra(k), s2).value;
    };
    double om0 = omega_at(st.kappa);
    auto second = [&](double h) {
        return (omega_at(st.kappa + h) - 2.0 * om0 + omega_at(st.kappa - h)) / (h * h);
    };
    double c1 = second(dkappa);
    if (!richardson) return {c1, std::abs(c1) * 1e-6 + dkappa * dkappa};
    double c2 = second(0.5 * dkappa);
    return {(4.0 * c2 - c1) / 3.0, std::abs(c2 - c1) / 3.0};
}

// ---------------------------------------------------------------------------
// Smearing kernels. With sigma = beta hbar,
//   g(x) = (f_sigma * rho~_tau)(x) = f_sigma(x) + d(x),
//   d(x) = (1/pi) int_tau^inf (1 - rho_tau(t)) D_sigma(t) sin(t x) / t dt,
// where D_sigma(t) = (pi t/sigma)/sinh(pi t/sigma). d is odd in x, decays at
// large |x|, and vanishes as tau -> infinity. Tabulated with Hermite
// interpolation; the quadrature panels are aligned on the bump's kink points.

namespace detail {

struct TNode {
    double t;
    double w;  // quadrature weight x integrand prefactor
};

// Gauss-Legendre nodes over [t0, t1] with panel boundaries on `breaks`.
inline std::vector<TNode> t_nodes(const std::vector<double>& breaks, double max_width,
                                  const std::function<double(double)>& weight_fn) {
    const GaussRule& gr = gauss_legendre(16);
    std::vector<TNode> nodes;
    for (size_t i = 0; i + 1 < breaks.size(); ++i) {
        double a = breaks[i], b = breaks[i + 1];
        if (b <= a) continue;
        int panels = std::max(1, (int)std::ceil((b - a) / max_width));
        double h = (b - a) / panels;
        for (int p = 0; p < panels; ++p) {
            double c = a + (p + 0.5) * h;
            for (int k = 0; k < 16; ++k) {
                double t = c + 0.5 * h * gr.x[k];
                double w = 0.5 * h * gr.w[k] * weight_fn(t);
                if (w != 0.0) nodes.push_back({t, w});
            }
        }
    }
    return nodes;
}

// Tabulates sums of  w * sin(t x)/t, w * cos(t x), w * t * sin(t x)  over
// the node set, on a uniform x >= 0 grid, using anchored phase rotations.
struct OscTable {
    double x_step = 0.0;
    std::vector<double> s_over_t;  // sum w sin(tx)/t
    std::vector<double> c_plain;   // sum w cos(tx)
    std::vector<double> s_times_t; // sum w t sin(tx)

    void build(const std::vector<TNode>& nodes, double x_max, double step, int workers) {
        x_step = step;
        size_t nx = (size_t)std::ceil(x_max / step) + 2;
        s_over_t.assign(nx, 0.0);
        c_plain.assign(nx, 0.0);
        s_times_t.assign(nx, 0.0);
        size_t chunk = 8192;
        size_t nchunks = (nx + chunk - 1) / chunk;
        std::atomic<size_t> next{0};
        auto work = [&]() {
            for (;;) {
                size_t ci = next.fetch_add(1);
                if (ci >= nchunks) return;
                size_t lo = ci * chunk, hi = std::min(nx, lo + chunk);
                for (const TNode& nd : nodes) {
                    double t = nd.t, w = nd.w;
                    double wt = w / t, wtt = w * t;
                    double cs = std::cos(t * step), sn = std::sin(t * step);
                    size_t k = lo;
                    while (k < hi) {
                        size_t stop = std::min(hi, k + 256);
                        double x0 = (double)k * step;
                        double c = std::cos(t * x0), s = std::sin(t * x0);
                        for (; k < stop; ++k) {
                            s_over_t[k] += wt * s;
                            c_plain[k] += w * c;
                            s_times_t[k] += wtt * s;
                            double c2 = c * cs - s * sn;
                            s = s * cs + c * sn;
                            c = c2;
                        }
                    }
                }
            }
        };
        std::vector<std::thread> pool;
        int nw = workers > 0 ? workers : (int)std::thread::hardware_concurrency();
        for (int i = 0; i < nw; ++i) pool.emplace_back(work);
        for (auto& th : pool) th.join();
    }
};

}  // namespace detail

// The smeared Fermi kernel g (wide range, cubic interpolation).
class SmearingKernel {
public:
    // rho-spec: the plateau bump with cutoff time tau_cut.
    SmearingKernel(const ThermoState& st, double tau_cut, double x_lo, double x_hi,
                   int workers = 0)
        : sigma_(st.sigma()), tau_(tau_cut) {
        if (!(tau_cut > 0.0)) throw ConfigError("smearing kernel: tau must be > 0");
        double x_max = std::max(std::abs(x_lo), std::abs(x_hi)) + 2.0;
        x_max_ = x_max;
        // the correction's scale is D_sigma(tau); beyond tau + 45 sigma/pi the
        // damping has fallen another 18 orders, so truncate there
        t_up_ = tau_ + 45.0 * sigma_ / pi + 1.0;
        if (temperature_damping(tau_, sigma_) < 1e-18) {
            // whole correction negligible: g == f_sigma
            table_.x_step = 1.0;
            table_.s_over_t.assign(4, 0.0);
            table_.c_plain.assign(4, 0.0);
            table_.s_times_t.assign(4, 0.0);
            x_max_ = 2.0;
            return;
        }
        std::vector<double> breaks = t_breaks();
        double max_w = std::min({0.8 * 2.0 * pi * 2.5 / std::max(x_max_, 1.0),
                                 (t_up_ - tau_) / 8.0, tau_ / 10.0});
        auto weight = [this](double t) {
            return (1.0 - rho_cutoff(t, tau_)) * temperature_damping(t, sigma_);
        };
        auto nodes = detail::t_nodes(breaks, max_w, weight);
        double step = std::min(0.02, 0.044 / t_up_);
        table_.build(nodes, x_max_, step, workers);

        // kernel invariants
        double slack = 1e-10 * std::abs(fermi_fprime(sigma_, 0.0));
        double gmin = 1e300, gprev = 1e300;
        for (double x = -x_max_ + 1.0; x <= x_max_ - 1.0; x += 0.37) {
            double gp = g_prime(x);
            if (gp > slack)
                throw NumericalError("smearing kernel: g' > 0 (monotonicity broken)");
            double gv = g(x);
            if (gv > gprev + 1e-10) throw NumericalError("smearing kernel: g not non-increasing");
            gprev = gv;
            gmin = std::min(gmin, gv);
        }
        double span = g(-x_max_ + 1.0) - g(x_max_ - 1.0);
        if (std::abs(span - 1.0) > 1e-8)
            throw NumericalError("smearing kernel: int g' != -1 (got " + std::to_string(-span) +
                                 ")");
    }

    double sigma() const { return sigma_; }
    double tau() const { return tau_; }

    // correction d(x) = g(x) - f_sigma(x); odd in x
    double correction(double x) const {
        double ax = std::abs(x);
        if (ax >= x_max_ - 2.0 * table_.x_step) return 0.0;
        double u = ax / table_.x_step;
        size_t i = (size_t)u;
        double f = u - (double)i;
        // cubic Hermite from (value, derivative) pairs
        double v0 = table_.s_over_t[i], v1 = table_.s_over_t[i + 1];
        double d0 = table_.c_plain[i] * table_.x_step, d1 = table_.c_plain[i + 1] * table_.x_step;
        double f2 = f * f, f3 = f2 * f;
        double val = (2 * f3 - 3 * f2 + 1) * v0 + (f3 - 2 * f2 + f) * d0 +
                     (-2 * f3 + 3 * f2) * v1 + (f3 - f2) * d1;
        val /= pi;
        return x >= 0 ? val : -val;
    }

    double g(double x) const { return fermi_f(sigma_, x) + correction(x); }

    double g_prime(double x) const {
        double ax = std::abs(x);
        double dcorr = 0.0;
        if (ax < x_max_ - 2.0 * table_.x_step) {
            double u = ax / table_.x_step;
            size_t i = (size_t)u;
            double f = u - (double)i;
            double v0 = table_.c_plain[i], v1 = table_.c_plain[i + 1];
            double d0 = -table_.s_times_t[i] * table_.x_step,
                   d1 = -table_.s_times_t[i + 1] * table_.x_step;
            double f2 = f * f, f3 = f2 * f;
            dcorr = ((2 * f3 - 3 * f2 + 1) * v0 + (f3 - 2 * f2 + f) * d0 +
                     (-2 * f3 + 3 * f2) * v1 + (f3 - f2) * d1) /
                    pi;
        }
        return fermi_fprime(sigma_, x) + dcorr;  // even correction
    }

    // direct quadrature (no table), for accuracy tests
    double correction_direct(double x) const {
        if (temperature_damping(tau_, sigma_) < 1e-18) return 0.0;
        double max_w = std::min({0.8 * 2.0 * pi * 2.5 / std::max(std::abs(x), 1.0),
                                 (t_up_ - tau_) / 8.0, tau_ / 10.0});
        return integrate_gl_breaks(
                   [&](double t) {
                       return (1.0 - rho_cutoff(t, tau_)) * temperature_damping(t, sigma_) *
                              std::sin(t * x) / t;
                   },
                   t_breaks(), max_w) /
               pi;
    }

private:
    std::vector<double> t_breaks() const {
        std::vector<double> breaks{tau_, 2.0 * tau_};
        breaks.erase(std::remove_if(breaks.begin(), breaks.end(),
                                    [&](double b) { return b >= t_up_; }),
                     breaks.end());
        breaks.push_back(t_up_);
        std::sort(breaks.begin(), breaks.end());
        return breaks;
    }

    double sigma_, tau_, x_max_ = 0.0, t_up_ = 0.0;
    detail::OscTable table_;
};

// The oscillating-part kernel Delta(x) = (g_tau - g_tau0)(x), tabulated at
// quintic-Hermite accuracy on the theta window's x range. Delta is odd.
class OscSplitKernel {
public:
    OscSplitKernel(const ThermoState& st, double x_max, int workers = 0)
        : sigma_(st.sigma()), tau_(st.tau), tau0_(st.tau0) {
        st.validate(true);
        t_up_ = std::min(2.0 * tau_,
                         std::max(2.0 * tau0_ + 1.0, tau0_ + 45.0 * sigma_ / pi + 1.0));
        x_max_ = x_max + 3.0;
        double max_w = std::min({0.8 * 2.0 * pi * 2.5 / std::max(x_max_, 1.0),
                                 (t_up_ - tau0_) / 8.0, tau0_ / 10.0});
        auto weight = [this](double t) {
            return rho_one(t, tau_, tau0_) * temperature_damping(t, sigma_);
        };
        auto nodes = detail::t_nodes(t_breaks(), max_w, weight);
        double step = 0.035 / t_up_;
        table_.build(nodes, x_max_, step, workers);
    }

    // Delta(x) = g_tau(x) - g_tau0(x), odd in x
    double delta(double x) const {
        double ax = std::abs(x);
        if (ax >= x_max_ - 2.0 * table_.x_step) return 0.0;
        double h = table_.x_step;
        double u = ax / h;
        size_t i = (size_t)u;
        double f = u - (double)i;
        // quintic Hermite from (value, d1, d2) at both ends
        double v0 = table_.s_over_t[i], v1 = table_.s_over_t[i + 1];
        double d0 = table_.c_plain[i] * h, d1 = table_.c_plain[i + 1] * h;
        double a0 = -table_.s_times_t[i] * h * h, a1 = -table_.s_times_t[i + 1] * h * h;
        double f2 = f * f, f3 = f2 * f, f4 = f3 * f, f5 = f4 * f;
        double h00 = 1 - 10 * f3 + 15 * f4 - 6 * f5;
        double h10 = f - 6 * f3 + 8 * f4 - 3 * f5;
        double h20 = 0.5 * (f2 - 3 * f3 + 3 * f4 - f5);
        double h01 = 10 * f3 - 15 * f4 + 6 * f5;
        double h11 = -4 * f3 + 7 * f4 - 3 * f5;
        double h21 = 0.5 * (f3 - 2 * f4 + f5);
        double val = h00 * v0 + h10 * d0 + h20 * a0 + h01 * v1 + h11 * d1 + h21 * a1;
        val *= -1.0 / pi;
        return x >= 0 ? val : -val;
    }

    double delta_direct(double x) const {
        double max_w = std::min({0.8 * 2.0 * pi * 2.5 / std::max(std::abs(x), 1.0),
                                 (t_up_ - tau0_) / 8.0, tau0_ / 10.0});
        return -integrate_gl_breaks(
                   [&](double t) {
                       return rho_one(t, tau_, tau0_) * temperature_damping(t, sigma_) *
                              std::sin(t * x) / t;
                   },
                   t_breaks(), max_w) /
               pi;
    }

private:
    std::vector<double> t_breaks() const {
        std::vector<double> breaks{tau0_, 2.0 * tau0_, tau_, 2.0 * tau_};
        breaks.erase(std::remove_if(breaks.begin(), breaks.end(),
                                    [&](double b) { return b >= t_up_; }),
                     breaks.end());
        breaks.push_back(t_up_);
        std::sort(breaks.begin(), breaks.end());
        return breaks;
    }

    double sigma_, tau_, tau0_, x_max_ = 0.0, t_up_ = 0.0;
    detail::OscTable table_;
};

inline SmearingKernel build_smearing_kernel(const ThermoState& st, double tau_cut, double x_lo,
                                            double x_hi, int workers = 0) {
    return SmearingKernel(st, tau_cut, x_lo, x_hi, workers);
}

// M_tau = sum_j g((E_j - mu)/hbar) dE_j/dkappa
inline ValueWithError smeared_magnetization(const SpectralResult& sp, const ThermoState& st,
                                            const SmearingKernel& kernel,
                                            bool exact_fermi_kernel = false) {
    st.validate();
    detail::check_spectrum_cutoff(sp, st, "smeared_magnetization");
    KahanSum s;
    double mmax = 0.0;
    for (size_t j = 0; j < sp.size(); ++j) {
        double x = (sp.energies[j] - st.mu) / st.hbar;
        double gx = exact_fermi_kernel ? fermi_f(st.sigma(), x) : kernel.g(x);
        s.add(gx * sp.dE_dkappa[j]);
        mmax = std::max(mmax, std::abs(sp.dE_dkappa[j]));
    }
    return {s.value(), detail::truncation_bound(sp, st) * mmax};
}

struct SmearSplit {
    double m_tau = 0.0;
    double m_bar = 0.0;
    double m_osc = 0.0;
};

// Split M_tau into the tau0-kernel mean part (with the (1 - theta) window
// completion) and the oscillating remainder:
//   M_osc = sum_j [Delta((E_j-mu)/hbar)] theta(E_j - mu) dE_j/dkappa,
//   M_bar = M_tau - M_osc.
inline SmearSplit split_mean_oscillating(const SpectralResult& sp, const ThermoState& st,
                                         const SmearingKernel& gkernel,
                                         const OscSplitKernel& osc) {
    st.validate(true);
    SmearSplit out;
    out.m_tau = smeared_magnetization(sp, st, gkernel).value;
    KahanSum s;
    for (size_t j = 0; j < sp.size(); ++j) {
        double e = sp.energies[j] - st.mu;
        if (std::abs(e) > st.delta) continue;
        double th = theta_window(e, st.delta);
        if (th == 0.0) continue;
        s.add(osc.delta(e / st.hbar) * th * sp.dE_dkappa[j]);
    }
    out.m_osc = s.value();
    out.m_bar = out.m_tau - out.m_osc;
    return out;
}

// convenience overload building both kernels on the fly
inline SmearSplit split_mean_oscillating(const SpectralResult& sp, const ThermoState& st) {
    st.validate(true);
    double x_lo = (sp.energies.empty() ? -1.0 : (sp.energies.front() - st.mu) / st.hbar) - 5.0;
    double x_hi = 40.0 / st.sigma() + 5.0;
    SmearingKernel gk(st, st.tau, x_lo, x_hi);
    OscSplitKernel ok(st, st.delta / st.hbar);
    return split_mean_oscillating(sp, st, gk, ok);
}

// ---------------------------------------------------------------------------
// Long-time tail diagnostic: magnitude of the (1 - rho_tau0) part of the
// theta-windowed magnetization,
//   M_{theta,1-rho} = -(1/h) int dlambda int dt (1-rho_tau0)(t) D_sigma(t)
//                       sum_j e^{-it(E_j-lambda)/hbar} theta(E_j-mu) m_j
// with lambda over [mu, mu + 2 delta], the lambda integral done analytically.

struct TailResult {
    double magnitude = 0.0;
    bool regime_ok = true;     // state was in the intermediate regime
    bool damped = true;        // damping factor meaningfully active
    double damping_at_tau0 = 0.0;
    std::string note;
};

inline TailResult tail_diagnostic(const SpectralResult& sp, const ThermoState& st) {
    st.validate(true);
    TailResult out;
    RegimeInfo reg = st.regime();
    out.regime_ok = reg.tag == Regime::intermediate;
    if (!out.regime_ok) {
        if (!st.force)
            throw RegimeError(
                "tail_diagnostic: state not in the intermediate regime (use force to override)");
        out.note = "regime mismatch: " + std::string(regime_name(reg.tag));
    }
    double sigma = st.sigma();
    out.damping_at_tau0 = temperature_damping(st.tau0, sigma);
    if (pi * st.tau0 / sigma < 1.0) {
        out.damped = false;
        out.note += (out.note.empty() ? "" : "; ");
        out.note += "no effective damping (sigma too large, zero-T caveat)";
    }

    // theta-window levels
    std::vector<double> xs, ms;
    for (size_t j = 0; j < sp.size(); ++j) {
        double e = sp.energies[j] - st.mu;
        if (std::abs(e) > st.delta) continue;
        double th = theta_window(e, st.delta);
        if (th == 0.0) continue;
        xs.push_back(e / st.hbar);
        ms.push_back(th * sp.dE_dkappa[j]);
    }
    if (xs.empty()) return out;

    double t_cut = std::min(2.0 * st.tau, st.tau0 + 45.0 * sigma / pi + 1.0);
    std::vector<double> breaks{st.tau0, 2.0 * st.tau0, st.tau, 2.0 * st.tau};
    breaks.erase(
        std::remove_if(breaks.begin(), breaks.end(), [&](double b) { return b > t_cut; }),
        breaks.end());
    breaks.push_back(t_cut);
    std::sort(breaks.begin(), breaks.end());
    double fmax = 3.0 * st.delta / st.hbar;  // largest phase frequency after the shift
    double max_w = 0.8 * 2.0 * pi * 2.5 / std::max(fmax, 1.0);
    double two_d = 2.0 * st.delta / st.hbar;

    double val = integrate_gl_breaks(
        [&](double t) {
            double w = (1.0 - rho_cutoff(t, st.tau0)) * temperature_damping(t, sigma) / t;
            if (w == 0.0) return 0.0;
            // Im sum_j m_j (e^{-it(x_j - 2 delta/hbar)} - e^{-it x_j})
            double si = 0.0;
            double c2 = std::cos(t * two_d), s2 = std::sin(t * two_d);
            for (size_t j = 0; j < xs.size(); ++j) {
                double c = std::cos(t * xs[j]), s = std::sin(t * xs[j]);
                // e^{-it(x-2d)} = e^{-itx} e^{i t 2d}: imag = -s*c2 + c*s2; minus e^{-itx}: +s
                si += ms[j] * (-s * c2 + c * s2 + s);
            }
            return w * si;
        },
        breaks, max_w);
    out.magnitude = std::abs(val / pi);
    return out;
}

}  // namespace magres
