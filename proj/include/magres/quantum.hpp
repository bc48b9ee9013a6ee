// quantum.hpp - exact spectra of the Weyl-quantized H_kappa for n = 2:
// closed forms for quadratic specs (Fock-Darwin and general normal modes),
// Galerkin diagonalization in a harmonic product basis for polynomial V.
#pragma once

#include <lapacke.h>

#include <Eigen/Dense>
#include <algorithm>
#include <complex>
#include <memory>
#include <vector>

#include "magres/common.hpp"
#include "magres/model.hpp"

namespace magres {

struct SpectralResult {
    std::vector<double> energies;      // sorted ascending
    std::vector<double> dE_dkappa;     // Hellmann-Feynman per level
    std::vector<char> converged;       // per level
    std::vector<double> convergence;   // relative change under basis growth
    int basis_per_axis = 0;            // 0 = closed form (exact)
    double hbar = 0.0;
    double kappa = 0.0;
    bool exact = false;

    size_t size() const { return energies.size(); }
    double max_energy() const { return energies.empty() ? 0.0 : energies.back(); }

    void check_invariants() const {
        for (size_t j = 0; j < energies.size(); ++j) {
            if (energies[j] < 1.0 - 1e-6)
                throw NumericalError("spectrum: level below min V bound");
            if (j > 0 && energies[j] < energies[j - 1] - 1e-12)
                throw NumericalError("spectrum: not sorted");
        }
    }
};

// Normal-mode frequencies of a 2D quadratic Hamiltonian with uniform field:
//   Omega_pm^2 = [ (tr K + b^2) +- sqrt((tr K + b^2)^2 - 4 det K) ] / 2
// where K = Hess V and b = kappa B_12.
struct NormalModes {
    double omega_plus = 0.0;
    double omega_minus = 0.0;
    double d_omega_plus = 0.0;   // d/dkappa
    double d_omega_minus = 0.0;
};

inline NormalModes quadratic_normal_modes(const HamiltonianSpec& spec, double kappa) {
    if (spec.dim() != 2) throw ConfigError("normal modes implemented for n = 2 only");
    if (!spec.is_quadratic())
        throw ConfigError("normal modes require a quadratic, even potential");
    Mat k = spec.potential().quadratic_matrix();
    Mat bt = spec.gauge().field_tensor();
    double b12 = bt(0, 1);
    double tr = k.trace(), det = k.determinant();
    if (det <= 0.0) throw NumericalError("normal modes: potential not positive definite");
    NormalModes nm;
    double disc0 = tr * tr - 4.0 * det;
    if (std::abs(disc0) < 1e-12 * tr * tr) {
        // isotropic potential: use the Fock-Darwin closed form, regular at kappa = 0
        double w2 = 0.5 * tr;          // omega^2
        double babs = std::abs(b12);
        double root = std::sqrt(w2 + 0.25 * kappa * kappa * b12 * b12);
        nm.omega_plus = root + 0.5 * kappa * babs;
        nm.omega_minus = root - 0.5 * kappa * babs;
        double droot = 0.25 * kappa * b12 * b12 / root;
        nm.d_omega_plus = droot + 0.5 * babs;
        nm.d_omega_minus = droot - 0.5 * babs;
        return nm;
    }
    double s = tr + kappa * kappa * b12 * b12;
    double disc = std::sqrt(s * s - 4.0 * det);
    nm.omega_plus = std::sqrt(0.5 * (s + disc));
    nm.omega_minus = std::sqrt(0.5 * (s - disc));
    double ds = 2.0 * kappa * b12 * b12;
    double ddisc = s * ds / disc;
    nm.d_omega_plus = 0.25 * (ds + ddisc) / nm.omega_plus;
    nm.d_omega_minus = 0.25 * (ds - ddisc) / nm.omega_minus;
    return nm;
}

namespace detail {

// Enumerate E = offset + hbar [Wp (n+ + 1/2) + Wm (n- + 1/2)] up to emax.
inline SpectralResult enumerate_two_mode(double wp, double wm, double dwp, double dwm,
                                         double hbar, double offset, double emax,
                                         double kappa) {
    SpectralResult r;
    r.hbar = hbar;
    r.kappa = kappa;
    r.exact = true;
    double e0 = offset + 0.5 * hbar * (wp + wm);
    if (emax < e0) emax = e0;
    long npmax = (long)std::floor((emax - e0) / (hbar * wp)) + 1;
    std::vector<std::pair<double, double>> lv;
    for (long np = 0; np <= npmax; ++np) {
        double base = e0 + hbar * wp * np;
        if (base > emax) break;
        long nmmax = (long)std::floor((emax - base) / (hbar * wm));
        for (long nm = 0; nm <= nmmax; ++nm) {
            double e = base + hbar * wm * nm;
            double de = hbar * (dwp * (np + 0.5) + dwm * (nm + 0.5));
            lv.emplace_back(e, de);
        }
    }
    std::sort(lv.begin(), lv.end());
    r.energies.reserve(lv.size());
    r.dE_dkappa.reserve(lv.size());
    for (auto& [e, de] : lv) {
        r.energies.push_back(e);
        r.dE_dkappa.push_back(de);
    }
    r.converged.assign(lv.size(), 1);
    r.convergence.assign(lv.size(), 0.0);
    return r;
}

}  // namespace detail

// Fock-Darwin levels: E = offset + hbar Wp (n+ + 1/2) + hbar Wm (n- + 1/2),
// Wpm = sqrt(omega^2 + kappa^2/4) +- kappa/2 (unit field strength), with
// exact dE/dkappa.
inline SpectralResult fock_darwin_spectrum(double omega, double kappa, double hbar, size_t count,
                                           double offset = 1.0) {
    if (omega <= 0.0 || hbar <= 0.0 || count < 1)
        throw ConfigError("fock_darwin_spectrum: need omega > 0, hbar > 0, count >= 1");
    double root = std::sqrt(omega * omega + 0.25 * kappa * kappa);
    double wp = root + 0.5 * kappa, wm = root - 0.5 * kappa;
    double droot = 0.25 * kappa / root;
    double dwp = droot + 0.5, dwm = droot - 0.5;
    // grow the energy window until enough levels exist
    double emax = offset + hbar * (wp + wm) * (1.0 + std::sqrt(2.0 * count * wp * wm) / (wp + wm));
    for (;;) {
        SpectralResult r = detail::enumerate_two_mode(wp, wm, dwp, dwm, hbar, offset, emax, kappa);
        if (r.size() >= count) {
            r.energies.resize(count);
            r.dE_dkappa.resize(count);
            r.converged.resize(count);
            r.convergence.resize(count);
            return r;
        }
        emax = offset + 2.0 * (emax - offset);
    }
}

// Exact spectrum of any 2D quadratic spec up to emax (normal-mode form).
inline SpectralResult quadratic_spectrum_emax(const HamiltonianSpec& spec, double kappa,
                                              double hbar, double emax) {
    NormalModes nm = quadratic_normal_modes(spec, kappa);
    return detail::enumerate_two_mode(nm.omega_plus, nm.omega_minus, nm.d_omega_plus,
                                      nm.d_omega_minus, hbar, spec.min_energy(), emax, kappa);
}

inline SpectralResult quadratic_spectrum(const HamiltonianSpec& spec, double kappa, double hbar,
                                         size_t count) {
    NormalModes nm = quadratic_normal_modes(spec, kappa);
    double wp = nm.omega_plus, wm = nm.omega_minus;
    double emax =
        spec.min_energy() + hbar * (wp + wm) + hbar * std::sqrt(2.0 * (count + 1.0) * wp * wm);
    for (;;) {
        SpectralResult r = detail::enumerate_two_mode(wp, wm, nm.d_omega_plus, nm.d_omega_minus,
                                                      hbar, spec.min_energy(), emax, kappa);
        if (r.size() >= count) {
            r.energies.resize(count);
            r.dE_dkappa.resize(count);
            r.converged.resize(count);
            r.convergence.resize(count);
            return r;
        }
        emax = spec.min_energy() + 2.0 * (emax - spec.min_energy());
    }
}

namespace detail {

using CMat = Eigen::MatrixXcd;

// 1D ladder-operator matrices in an oscillator basis of frequency w,
// built on an extended basis and cut back so products are exact.
struct AxisOps {
    CMat q[5];   // q^0 .. q^4
    CMat p, p2, qp_sym;
};

inline AxisOps axis_operators(int nb, double hbar, double w, bool rotate_chirality) {
    int ne = nb + 8;  // extension absorbs band growth of operator products
    CMat a = CMat::Zero(ne, ne);
    for (int n = 1; n < ne; ++n) a(n - 1, n) = std::sqrt((double)n);
    CMat ad = a.adjoint();
    double cq = std::sqrt(0.5 * hbar / w);
    double cp = std::sqrt(0.5 * hbar * w);
    CMat q1 = cq * (a + ad);
    CMat p1 = std::complex<double>(0, 1) * cp * (ad - a);
    if (rotate_chirality) {
        // similarity transform by diag(i^n): makes p real and q imaginary,
        // so even powers of q and single p factors give real matrices
        CMat d = CMat::Zero(ne, ne);
        std::complex<double> ii(0, 1), ph(1, 0);
        for (int n = 0; n < ne; ++n) {
            d(n, n) = ph;
            ph *= ii;
        }
        q1 = d.adjoint() * q1 * d;
        p1 = d.adjoint() * p1 * d;
    }
    AxisOps ops;
    ops.q[0] = CMat::Identity(ne, ne);
    for (int k = 1; k <= 4; ++k) ops.q[k] = ops.q[k - 1] * q1;
    ops.p = p1;
    ops.p2 = p1 * p1;
    ops.qp_sym = 0.5 * (q1 * p1 + p1 * q1);
    ops.q[0] = ops.q[0].topLeftCorner(nb, nb).eval();
    for (int k = 1; k <= 4; ++k) ops.q[k] = ops.q[k].topLeftCorner(nb, nb).eval();
    ops.p = ops.p.topLeftCorner(nb, nb).eval();
    ops.p2 = ops.p2.topLeftCorner(nb, nb).eval();
    ops.qp_sym = ops.qp_sym.topLeftCorner(nb, nb).eval();
    return ops;
}

// Dense symmetric eigensolve, values (and optionally vectors).
inline void dsyev_inplace(std::vector<double>& a, int n, std::vector<double>& w,
                          bool vectors) {
    w.assign(n, 0.0);
    int info = LAPACKE_dsyevd(LAPACK_COL_MAJOR, vectors ? 'V' : 'N', 'L', n, a.data(), n,
                              w.data());
    if (info != 0)
        throw NumericalError("dsyevd failed, info = " + std::to_string(info));
}

struct AssembledMatrices {
    std::vector<double> h;      // column-major nb^2 x nb^2
    std::vector<double> dh;     // d/dkappa matrix
    int dim = 0;
};

// Weyl quantization of H_kappa over the product oscillator basis. Mixed
// q_j p_i monomials from the gauge term are symmetrized, which is exactly
// their Weyl image; pure-q and pure-p terms need no ordering.
inline AssembledMatrices assemble_matrices(const HamiltonianSpec& spec, double kappa,
                                           double hbar, int nb) {
    if (spec.dim() != 2) throw ConfigError("assemble_and_diagonalize: n = 2 only");
    const Mat& A = spec.gauge().matrix();
    if (std::abs(A(0, 0)) + std::abs(A(1, 1)) > 0.0)
        throw ConfigError("assemble_and_diagonalize: gauge matrix must have zero diagonal");
    for (const auto& m : spec.potential().monomials())
        if (m.exps[1] % 2 != 0)
            throw ConfigError(
                "assemble_and_diagonalize: potential must be even in q2 "
                "(real representation unavailable otherwise)");

    // reference frequencies from the quadratic part of V
    double w1 = 1.0, w2 = 1.0;
    for (const auto& m : spec.potential().monomials()) {
        if (m.total_degree() != 2) continue;
        if (m.exps[0] == 2 && m.coeff > 0) w1 = std::sqrt(2.0 * m.coeff);
        if (m.exps[1] == 2 && m.coeff > 0) w2 = std::sqrt(2.0 * m.coeff);
    }

    AxisOps ax1 = axis_operators(nb, hbar, w1, false);
    AxisOps ax2 = axis_operators(nb, hbar, w2, true);

    int dim = nb * nb;
    // accumulate 2D operator = sum of tensor products term by term
    CMat h2 = CMat::Zero(dim, dim);   // built band-wise below instead
    (void)h2;

    struct Term {
        const CMat* o1;
        const CMat* o2;
        double c;
    };
    std::vector<Term> hterms, dterms;
    auto add = [](std::vector<Term>& v, const CMat& o1, const CMat& o2, double c) {
        if (c != 0.0) v.push_back({&o1, &o2, c});
    };

    // kinetic p^2/2
    add(hterms, ax1.p2, ax2.q[0], 0.5);
    add(hterms, ax1.q[0], ax2.p2, 0.5);
    // gauge cross term: -kappa sum_{ij} A_ij sym(q_j p_i); A diagonal is zero
    add(hterms, ax1.p, ax2.q[1], -kappa * A(0, 1));   // A_12 q2 p1
    add(hterms, ax1.q[1], ax2.p, -kappa * A(1, 0));   // A_21 q1 p2
    // diamagnetic kappa^2 q^T (A^T A) q / 2
    Mat ata = A.transpose() * A;
    add(hterms, ax1.q[2], ax2.q[0], 0.5 * kappa * kappa * ata(0, 0));
    add(hterms, ax1.q[0], ax2.q[2], 0.5 * kappa * kappa * ata(1, 1));
    add(hterms, ax1.q[1], ax2.q[1], kappa * kappa * ata(0, 1));
    // potential
    for (const auto& m : spec.potential().monomials())
        add(hterms, ax1.q[m.exps[0]], ax2.q[m.exps[1]], m.coeff);

    // dH/dkappa = -sum A_ij sym(q_j p_i) + kappa q^T (A^T A) q
    add(dterms, ax1.p, ax2.q[1], -A(0, 1));
    add(dterms, ax1.q[1], ax2.p, -A(1, 0));
    add(dterms, ax1.q[2], ax2.q[0], kappa * ata(0, 0));
    add(dterms, ax1.q[0], ax2.q[2], kappa * ata(1, 1));
    add(dterms, ax1.q[1], ax2.q[1], 2.0 * kappa * ata(0, 1));

    AssembledMatrices out;
    out.dim = dim;
    out.h.assign((size_t)dim * dim, 0.0);
    out.dh.assign((size_t)dim * dim, 0.0);
    auto fill = [&](const std::vector<Term>& terms, std::vector<double>& target) {
        double max_imag = 0.0;
        for (const auto& t : terms) {
            for (int n1 = 0; n1 < nb; ++n1)
                for (int m1 = std::max(0, n1 - 4); m1 <= std::min(nb - 1, n1 + 4); ++m1) {
                    std::complex<double> o1 = (*t.o1)(m1, n1);
                    if (o1 == 0.0) continue;
                    for (int n2 = 0; n2 < nb; ++n2)
                        for (int m2 = std::max(0, n2 - 4); m2 <= std::min(nb - 1, n2 + 4); ++m2) {
                            std::complex<double> v = t.c * o1 * (*t.o2)(m2, n2);
                            if (v == 0.0) continue;
                            max_imag = std::max(max_imag, std::abs(v.imag()));
                            size_t row = (size_t)m1 * nb + m2;
                            size_t col = (size_t)n1 * nb + n2;
                            target[row + col * dim] += v.real();
                        }
                }
        }
        if (max_imag > 1e-10)
            throw NumericalError("assembly produced complex elements (unexpected)");
    };
    fill(hterms, out.h);
    fill(dterms, out.dh);

    // enforce exact symmetry (construction is symmetric up to rounding)
    for (int c = 0; c < dim; ++c)
        for (int r = 0; r < c; ++r) {
            double s = 0.5 * (out.h[r + (size_t)c * dim] + out.h[c + (size_t)r * dim]);
            out.h[r + (size_t)c * dim] = out.h[c + (size_t)r * dim] = s;
            double sd = 0.5 * (out.dh[r + (size_t)c * dim] + out.dh[c + (size_t)r * dim]);
            out.dh[r + (size_t)c * dim] = out.dh[c + (size_t)r * dim] = sd;
        }
    return out;
}

}  // namespace detail

// Galerkin diagonalization of the Weyl quantization of H_kappa in a tensor
// oscillator basis. Convergence is marked by comparing against the solve at
// basis_per_axis - 4. Degenerate clusters (gap < 1e-9 hbar) get dE/dkappa by
// diagonalizing dH/dkappa inside the cluster.
inline SpectralResult assemble_and_diagonalize(const HamiltonianSpec& spec, double kappa,
                                               double hbar, int basis_per_axis,
                                               size_t levels_wanted = 0,
                                               bool require_converged = false) {
    if (basis_per_axis < 8) throw ConfigError("assemble_and_diagonalize: basis_per_axis >= 8");
    detail::AssembledMatrices big = detail::assemble_matrices(spec, kappa, hbar, basis_per_axis);
    int dim = big.dim;
    std::vector<double> evals;
    std::vector<double> vecs = big.h;  // dsyevd overwrites with eigenvectors
    detail::dsyev_inplace(vecs, dim, evals, true);

    // reference solve on the shrunk basis, eigenvalues only
    int nb_ref = basis_per_axis - 4;
    detail::AssembledMatrices ref = detail::assemble_matrices(spec, kappa, hbar, nb_ref);
    std::vector<double> refvals;
    detail::dsyev_inplace(ref.h, ref.dim, refvals, false);

    SpectralResult r;
    r.hbar = hbar;
    r.kappa = kappa;
    r.basis_per_axis = basis_per_axis;
    size_t ncopy = levels_wanted > 0 ? std::min((size_t)dim, levels_wanted) : (size_t)dim;
    r.energies.assign(evals.begin(), evals.begin() + ncopy);
    r.convergence.resize(ncopy);
    r.converged.resize(ncopy);
    for (size_t j = 0; j < ncopy; ++j) {
        double c = (j < refvals.size())
                       ? std::abs(evals[j] - refvals[j]) / std::max(1.0, std::abs(evals[j]))
                       : 1.0;
        r.convergence[j] = c;
        r.converged[j] = c <= 1e-8;
    }
    if (require_converged && levels_wanted > 0) {
        for (size_t j = 0; j < ncopy; ++j)
            if (!r.converged[j])
                throw NumericalError("assemble_and_diagonalize: level " + std::to_string(j) +
                                     " not converged at basis " + std::to_string(basis_per_axis) +
                                     " (rel change " + std::to_string(r.convergence[j]) + ")");
    }

    // Hellmann-Feynman with degenerate-cluster handling
    r.dE_dkappa.assign(ncopy, 0.0);
    double gap_tol = 1e-9 * hbar;
    size_t j = 0;
    Eigen::Map<const Mat> vmap(vecs.data(), dim, dim);
    Eigen::Map<const Mat> dmap(big.dh.data(), dim, dim);
    while (j < ncopy) {
        size_t k = j + 1;
        while (k < ncopy && evals[k] - evals[k - 1] < gap_tol) ++k;
        size_t cl = k - j;
        if (cl == 1) {
            r.dE_dkappa[j] = vmap.col(j).dot(dmap * vmap.col(j));
        } else {
            Mat block(cl, cl);
            Mat dv = dmap * vmap.middleCols(j, cl);
            block = vmap.middleCols(j, cl).transpose() * dv;
            Eigen::SelfAdjointEigenSolver<Mat> es(block);
            for (size_t t = 0; t < cl; ++t) r.dE_dkappa[j + t] = es.eigenvalues()[t];
        }
        j = k;
    }
    r.check_invariants();
    return r;
}

// Hellmann-Feynman derivatives for an externally obtained spectrum: redoes
// the assembly at the spectrum's (kappa, hbar) and projects dH/dkappa.
inline std::vector<double> kappa_derivatives(const HamiltonianSpec& spec,
                                             const SpectralResult& spectrum) {
    if (spectrum.exact) return spectrum.dE_dkappa;  // closed forms carry exact values
    SpectralResult full = assemble_and_diagonalize(spec, spectrum.kappa, spectrum.hbar,
                                                   spectrum.basis_per_axis, spectrum.size());
    return full.dE_dkappa;
}

}  // namespace magres
