// model.hpp - the Hamiltonian family H_kappa(q,p) = (p - kappa a(q))^2/2 + V(q)
//
// Potentials are polynomials of total degree <= 4 with min V >= 1 (the offset
// is raised automatically and recorded); gauges are linear maps a(q) = A q,
// so the field tensor B = A - A^T is constant.
#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <map>
#include <string>
#include <vector>

#include "magres/common.hpp"

namespace magres {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

struct PhasePoint {
    Vec q;
    Vec p;
    int dim() const { return (int)q.size(); }
};

// One monomial: coefficient * prod_i q_i^{exps[i]}.
struct Monomial {
    std::vector<int> exps;
    double coeff = 0.0;
    int total_degree() const {
        int d = 0;
        for (int e : exps) d += e;
        return d;
    }
};

class PotentialModel {
public:
    PotentialModel() = default;

    // terms: exponent tuple -> coefficient. The constant offset is raised so
    // that min V >= 1 if needed; the raise is recorded in offset_added().
    PotentialModel(int n, const std::map<std::vector<int>, double>& terms) : n_(n) {
        if (n < 1) throw ConfigError("potential: dimension must be >= 1");
        for (const auto& [exps, c] : terms) {
            if ((int)exps.size() != n)
                throw ConfigError("potential: exponent tuple length != dimension");
            Monomial m{exps, c};
            for (int e : exps)
                if (e < 0) throw ConfigError("potential: negative exponent");
            if (m.total_degree() > 4)
                throw ConfigError("potential: total degree must be <= 4");
            if (c != 0.0) mono_.push_back(m);
        }
        validate_confinement();
        raise_offset();
    }

    static PotentialModel isotropic_quadratic(int n, double omega, double offset = 1.0) {
        std::map<std::vector<int>, double> t;
        t[std::vector<int>(n, 0)] = offset;
        for (int i = 0; i < n; ++i) {
            std::vector<int> e(n, 0);
            e[i] = 2;
            t[e] = 0.5 * omega * omega;
        }
        return PotentialModel(n, t);
    }

    static PotentialModel anisotropic_quadratic(const std::vector<double>& omegas,
                                                double offset = 1.0) {
        int n = (int)omegas.size();
        std::map<std::vector<int>, double> t;
        t[std::vector<int>(n, 0)] = offset;
        for (int i = 0; i < n; ++i) {
            std::vector<int> e(n, 0);
            e[i] = 2;
            t[e] = 0.5 * omegas[i] * omegas[i];
        }
        return PotentialModel(n, t);
    }

    int dim() const { return n_; }
    double offset_added() const { return offset_added_; }
    double min_value() const { return vmin_; }
    const std::vector<Monomial>& monomials() const { return mono_; }

    double value(const Vec& q) const {
        check_dim(q);
        double v = eval(q);
        if (v < 1.0 - 1e-9)
            throw NumericalError("potential: V(q) < 1 encountered (offset invariant broken)");
        return v;
    }

    Vec gradient(const Vec& q) const {
        check_dim(q);
        Vec g = Vec::Zero(n_);
        for (const auto& m : mono_)
            for (int i = 0; i < n_; ++i) {
                if (m.exps[i] == 0) continue;
                double t = m.coeff * m.exps[i];
                for (int j = 0; j < n_; ++j) {
                    int e = m.exps[j] - (j == i ? 1 : 0);
                    t *= ipow(q[j], e);
                }
                g[i] += t;
            }
        return g;
    }

    Mat hessian(const Vec& q) const {
        check_dim(q);
        Mat h = Mat::Zero(n_, n_);
        for (const auto& m : mono_)
            for (int i = 0; i < n_; ++i)
                for (int j = 0; j < n_; ++j) {
                    if (i == j ? m.exps[i] < 2 : (m.exps[i] < 1 || m.exps[j] < 1)) continue;
                    double t = m.coeff * m.exps[i] * (i == j ? m.exps[i] - 1 : m.exps[j]);
                    for (int k = 0; k < n_; ++k) {
                        int e = m.exps[k] - (k == i ? 1 : 0) - (k == j ? 1 : 0);
                        t *= ipow(q[k], e);
                    }
                    h(i, j) += t;
                }
        return h;
    }

    bool is_quadratic() const {
        for (const auto& m : mono_)
            if (m.total_degree() > 2) return false;
        return true;
    }

    bool has_odd_terms() const {
        for (const auto& m : mono_) {
            int d = m.total_degree();
            if (d == 1 || d == 3) return true;
        }
        return false;
    }

    // Stationary values of V (critical values of H coincide with them):
    // multi-start Newton on grad V = 0, deduplicated.
    std::vector<double> critical_values() const {
        std::vector<double> vals;
        double box = 5.0;
        int grid = (n_ <= 2) ? 13 : 5;
        int total = 1;
        for (int i = 0; i < n_; ++i) total *= grid;
        for (int t = 0; t < total; ++t) {
            int rem = t;
            Vec x(n_);
            for (int i = 0; i < n_; ++i) {
                int g = rem % grid;
                rem /= grid;
                x[i] = -box + 2.0 * box * g / (grid - 1);
            }
            bool ok = false;
            for (int it = 0; it < 80; ++it) {
                Vec g = gradient(x);
                if (g.norm() < 1e-11) { ok = true; break; }
                Mat h = hessian(x);
                Eigen::FullPivLU<Mat> lu(h);
                if (!lu.isInvertible()) break;
                Vec step = lu.solve(g);
                if (step.norm() > 2.0) step *= 2.0 / step.norm();
                x -= step;
                if (x.norm() > 50.0) break;
            }
            if (!ok) continue;
            double v = eval(x);
            bool dup = false;
            for (double w : vals)
                if (std::abs(w - v) < 1e-8 * std::max(1.0, std::abs(v))) dup = true;
            if (!dup) vals.push_back(v);
        }
        std::sort(vals.begin(), vals.end());
        return vals;
    }

    // 0.5 q^T K q part (valid for pure even-quadratic potentials).
    Mat quadratic_matrix() const {
        Mat k = Mat::Zero(n_, n_);
        for (const auto& m : mono_) {
            if (m.total_degree() != 2) continue;
            int i = -1, j = -1;
            for (int a = 0; a < n_; ++a) {
                if (m.exps[a] == 2) { i = j = a; }
                else if (m.exps[a] == 1) { (i < 0 ? i : j) = a; }
            }
            if (i == j) k(i, i) += 2.0 * m.coeff;
            else { k(i, j) += m.coeff; k(j, i) += m.coeff; }
        }
        return k;
    }

private:
    void check_dim(const Vec& q) const {
        if ((int)q.size() != n_) throw ConfigError("potential: dimension mismatch");
    }

    static double ipow(double x, int e) {
        double r = 1.0;
        for (int k = 0; k < e; ++k) r *= x;
        return r;
    }

    double eval(const Vec& q) const {
        double v = 0.0;
        for (const auto& m : mono_) {
            double t = m.coeff;
            for (int j = 0; j < n_; ++j) t *= ipow(q[j], m.exps[j]);
            v += t;
        }
        return v;
    }

    // Confinement: the leading even homogeneous part must be positive on the
    // unit sphere. Flat or unbounded-below potentials are rejected.
    void validate_confinement() {
        int deg = 0;
        for (const auto& m : mono_) deg = std::max(deg, m.total_degree());
        if (deg < 2) throw ConfigError("potential: confinement requires degree >= 2 terms");
        if (deg % 2 != 0) throw ConfigError("potential: leading degree must be even");
        double worst = 1e300;
        int ndir = (n_ == 1) ? 2 : 720 * (n_ - 1);
        for (int k = 0; k < ndir; ++k) {
            Vec u(n_);
            if (n_ == 1) u[0] = (k == 0) ? 1.0 : -1.0;
            else if (n_ == 2) {
                double th = 2.0 * pi * k / ndir;
                u[0] = std::cos(th);
                u[1] = std::sin(th);
            } else {
                uint64_t z = 0x9E3779B97F4A7C15ULL * (k + 1);
                for (int i = 0; i < n_; ++i) {
                    z = z * 6364136223846793005ULL + 1442695040888963407ULL;
                    u[i] = (double)((z >> 11) * 0x1.0p-53) - 0.5;
                }
                u.normalize();
            }
            double lead = 0.0;
            for (const auto& m : mono_) {
                if (m.total_degree() != deg) continue;
                double t = m.coeff;
                for (int j = 0; j < n_; ++j) t *= ipow(u[j], m.exps[j]);
                lead += t;
            }
            worst = std::min(worst, lead);
        }
        if (worst <= 1e-12)
            throw ConfigError("potential: leading part not positive definite (no confinement)");
    }

    // Newton polish from a coarse grid to find min V; raise constant so min >= 1.
    void raise_offset() {
        double best = 1e300;
        double box = 4.0;
        int grid = (n_ <= 2) ? 15 : 7;
        int total = 1;
        for (int i = 0; i < n_; ++i) total *= grid;
        for (int t = 0; t < total; ++t) {
            int rem = t;
            Vec q(n_);
            for (int i = 0; i < n_; ++i) {
                int g = rem % grid;
                rem /= grid;
                q[i] = -box + 2.0 * box * g / (grid - 1);
            }
            Vec x = q;
            for (int it = 0; it < 60; ++it) {
                Vec g = gradient_unchecked(x);
                Mat h = hessian(x);
                Eigen::SelfAdjointEigenSolver<Mat> es(h);
                if (es.eigenvalues().minCoeff() < 1e-10) {
                    x -= 0.1 * g;  // fall back to descent away from saddles
                } else {
                    Vec step = es.eigenvectors() *
                               (es.eigenvectors().transpose() * g).cwiseQuotient(es.eigenvalues());
                    x -= step;
                    if (step.norm() < 1e-13) break;
                }
                if (x.norm() > 100.0) break;
            }
            double v = eval(x);
            if (v < best) best = v;
        }
        vmin_ = best;
        if (best < 1.0) {
            offset_added_ = 1.0 - best;
            std::vector<int> zero(n_, 0);
            for (auto& m : mono_)
                if (m.total_degree() == 0) {
                    m.coeff += offset_added_;
                    vmin_ = 1.0;
                    return;
                }
            mono_.push_back(Monomial{zero, offset_added_});
            vmin_ = 1.0;
        }
    }

    Vec gradient_unchecked(const Vec& q) const { return gradient(q); }

    int n_ = 0;
    std::vector<Monomial> mono_;
    double offset_added_ = 0.0;
    double vmin_ = 1.0;
};

class GaugeField {
public:
    GaugeField() = default;
    explicit GaugeField(const Mat& a) : a_(a) {
        if (a.rows() != a.cols()) throw ConfigError("gauge: matrix must be square");
    }

    // Symmetric gauge for a uniform unit field in 2D: a = (-q2, q1)/2.
    static GaugeField symmetric_2d(double strength = 1.0) {
        Mat a(2, 2);
        a << 0.0, -0.5 * strength, 0.5 * strength, 0.0;
        return GaugeField(a);
    }

    // Landau gauge a = (-q2, 0) for the same unit field.
    static GaugeField landau_2d(double strength = 1.0) {
        Mat a = Mat::Zero(2, 2);
        a(0, 1) = -strength;
        return GaugeField(a);
    }

    static GaugeField zero(int n) { return GaugeField(Mat::Zero(n, n)); }

    int dim() const { return (int)a_.rows(); }
    const Mat& matrix() const { return a_; }
    Vec value(const Vec& q) const { return a_ * q; }

    // B_jk = da_j/dq_k - da_k/dq_j = A - A^T, constant for linear gauges.
    Mat field_tensor() const { return a_ - a_.transpose(); }

    double field_norm_squared() const {
        Mat b = field_tensor();
        double s = 0.0;
        for (int j = 0; j < b.rows(); ++j)
            for (int k = j + 1; k < b.cols(); ++k) s += b(j, k) * b(j, k);
        return s;
    }

private:
    Mat a_;
};

class HamiltonianSpec {
public:
    HamiltonianSpec() = default;
    HamiltonianSpec(PotentialModel pot, GaugeField gauge)
        : pot_(std::move(pot)), gauge_(std::move(gauge)) {
        if (pot_.dim() != gauge_.dim())
            throw ConfigError("spec: potential and gauge dimension mismatch");
    }

    int dim() const { return pot_.dim(); }
    const PotentialModel& potential() const { return pot_; }
    const GaugeField& gauge() const { return gauge_; }
    double min_energy() const { return pot_.min_value(); }

    double hamiltonian(double kappa, const PhasePoint& x) const {
        check(x);
        Vec u = x.p - kappa * gauge_.value(x.q);
        double h = 0.5 * u.squaredNorm() + pot_.value(x.q);
        return h;
    }

    // dH/dkappa = -(p - kappa a(q)) . a(q)
    double kappa_derivative(double kappa, const PhasePoint& x) const {
        check(x);
        Vec a = gauge_.value(x.q);
        Vec u = x.p - kappa * a;
        return -u.dot(a);
    }

    // gradient in (q, p) order, length 2n
    Vec gradient(double kappa, const PhasePoint& x) const {
        check(x);
        int n = dim();
        const Mat& A = gauge_.matrix();
        Vec u = x.p - kappa * (A * x.q);
        Vec g(2 * n);
        g.head(n) = -kappa * (A.transpose() * u) + pot_.gradient(x.q);
        g.tail(n) = u;
        return g;
    }

    // full phase-space Hessian in (q, p) block order
    Mat hessian(double kappa, const PhasePoint& x) const {
        check(x);
        int n = dim();
        const Mat& A = gauge_.matrix();
        Mat h(2 * n, 2 * n);
        h.topLeftCorner(n, n) = kappa * kappa * (A.transpose() * A) + pot_.hessian(x.q);
        h.topRightCorner(n, n) = -kappa * A.transpose();
        h.bottomLeftCorner(n, n) = -kappa * A;
        h.bottomRightCorner(n, n) = Mat::Identity(n, n);
        return h;
    }

    double field_norm_squared() const { return gauge_.field_norm_squared(); }

    bool is_quadratic() const { return pot_.is_quadratic() && !pot_.has_odd_terms(); }

    // Self-check of analytic derivatives against central differences.
    bool self_test(double kappa, const PhasePoint& x, double step = 1e-5,
                   double tol = 1e-6) const;

private:
    void check(const PhasePoint& x) const {
        if (x.dim() != dim() || x.p.size() != x.q.size())
            throw ConfigError("spec: phase point dimension mismatch");
    }

    PotentialModel pot_;
    GaugeField gauge_;
};

inline bool HamiltonianSpec::self_test(double kappa, const PhasePoint& x, double step,
                                       double tol) const {
    int n = dim();
    auto rel_ok = [tol](double a, double b) {
        return std::abs(a - b) <= tol * std::max({1.0, std::abs(a), std::abs(b)});
    };
    Vec g = gradient(kappa, x);
    for (int i = 0; i < 2 * n; ++i) {
        PhasePoint xp = x, xm = x;
        (i < n ? xp.q[i] : xp.p[i - n]) += step;
        (i < n ? xm.q[i] : xm.p[i - n]) -= step;
        double fd = (hamiltonian(kappa, xp) - hamiltonian(kappa, xm)) / (2 * step);
        if (!rel_ok(g[i], fd)) return false;
    }
    Mat h = hessian(kappa, x);
    for (int i = 0; i < 2 * n; ++i) {
        PhasePoint xp = x, xm = x;
        (i < n ? xp.q[i] : xp.p[i - n]) += step;
        (i < n ? xm.q[i] : xm.p[i - n]) -= step;
        Vec fd = (gradient(kappa, xp) - gradient(kappa, xm)) / (2 * step);
        for (int j = 0; j < 2 * n; ++j)
            if (!rel_ok(h(j, i), fd[j])) return false;
    }
    double dk = (hamiltonian(kappa + step, x) - hamiltonian(kappa - step, x)) / (2 * step);
    return rel_ok(kappa_derivative(kappa, x), dk);
}

}  // namespace magres
