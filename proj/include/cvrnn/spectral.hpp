#pragma once

///
/// \file spectral.hpp
///
/// Eigendecomposition machinery for the complex system matrix: leading
/// eigenpairs of the non-Hermitian B with biorthogonal left rows, a
/// Hermitian solver reused by the similarity projection, per-mode
/// contribution traces and low-rank reconstruction of the dynamics.
///
/// Two routes are provided behind one interface: a dense reference
/// decomposition (Hessenberg + shifted QR via Eigen) below a size
/// threshold, and restarted Krylov iterations (Arnoldi with locking for
/// general matrices, Lanczos for Hermitian ones) above it. Only a handful
/// of leading modes are ever needed at scale.
///

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Eigenvalues>
#include <Eigen/LU>

#include "cvrnn/common.hpp"
#include "cvrnn/dynamics.hpp"

namespace cvrnn {

struct SolverOptions {
    enum class Strategy { Auto, Dense, Krylov };
    Strategy strategy = Strategy::Auto;
    Eigen::Index dense_threshold = 1024;  // Auto uses dense at or below this
    int max_restarts = 300;
    Eigen::Index krylov_dim = 0;  // 0 = choose from the mode count
};

/// Leading eigenpairs of B, eigenvalues sorted by descending modulus.
/// right_vectors holds unit right eigenvectors; left_rows holds r_iᵀ with
/// r_iᵀ v_i = 1, so that B ≈ Σ λ_i v_i r_iᵀ over the computed modes.
struct EigenDecomposition {
    Eigen::VectorXcd eigenvalues;
    Eigen::MatrixXcd right_vectors;  // n × m
    Eigen::MatrixXcd left_rows;      // m × n
    Eigen::VectorXd residuals;       // ‖B v_i − λ_i v_i‖₂

    Eigen::Index modes() const noexcept { return eigenvalues.size(); }
    Eigen::Index dim() const noexcept { return right_vectors.rows(); }
};

struct HermitianEigenpairs {
    Eigen::VectorXd eigenvalues;     // descending |λ|, real
    Eigen::MatrixXcd eigenvectors;   // orthonormal columns
    Eigen::VectorXd residuals;
};

namespace detail {

/// Deterministic eigenvalue ordering: descending modulus; moduli closer
/// than 1e−10 are tie-broken by phase angle, then original index.
inline std::vector<Eigen::Index> modulus_order(const Eigen::VectorXcd& values) {
    std::vector<Eigen::Index> order(static_cast<std::size_t>(values.size()));
    for (std::size_t i = 0; i < order.size(); ++i)
        order[i] = static_cast<Eigen::Index>(i);
    std::stable_sort(order.begin(), order.end(),
                     [&](Eigen::Index a, Eigen::Index b) {
                         return std::abs(values[a]) > std::abs(values[b]);
                     });
    std::size_t lo = 0;
    while (lo < order.size()) {
        std::size_t hi = lo + 1;
        while (hi < order.size() &&
               std::abs(std::abs(values[order[hi - 1]]) -
                        std::abs(values[order[hi]])) < 1e-10)
            ++hi;
        if (hi - lo > 1) {
            std::stable_sort(order.begin() + static_cast<std::ptrdiff_t>(lo),
                             order.begin() + static_cast<std::ptrdiff_t>(hi),
                             [&](Eigen::Index a, Eigen::Index b) {
                                 double pa = std::arg(values[a]);
                                 double pb = std::arg(values[b]);
                                 if (pa != pb) return pa < pb;
                                 return a < b;
                             });
        }
        lo = hi;
    }
    return order;
}

/// Unit-normalizes and rotates a vector so its largest-modulus entry is
/// real positive. Removes the phase gauge so runs are reproducible.
inline void canonicalize(Eigen::Ref<Eigen::VectorXcd> v) {
    double norm = v.norm();
    if (norm > 0.0) v /= norm;
    Eigen::Index peak = 0;
    double best = -1.0;
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        double a = std::abs(v[i]);
        if (a > best) {
            best = a;
            peak = i;
        }
    }
    if (best > 0.0) v *= std::conj(v[peak]) / best;
}

struct KrylovResult {
    Eigen::VectorXcd values;
    Eigen::MatrixXcd vectors;  // orthonormal basis of the locked subspace
};

/// Restarted Arnoldi with locking. Converged Ritz vectors are locked into
/// an orthonormal basis Q and deflated out of later iterations; the final
/// eigenpairs are recovered from the projected matrix QᴴBQ, which is exact
/// once span(Q) is invariant.
inline KrylovResult arnoldi_leading(const Eigen::MatrixXcd& B, Eigen::Index m,
                                    double tol, std::uint64_t seed,
                                    const SolverOptions& opt) {
    const Eigen::Index n = B.rows();
    const double bnorm = B.norm();
    const double lock_tol = tol * std::max(bnorm, 1e-300);
    Eigen::Index p = opt.krylov_dim > 0
                         ? std::min(opt.krylov_dim, n)
                         : std::min<Eigen::Index>(n, std::max<Eigen::Index>(2 * m + 16, 36));

    Eigen::MatrixXcd Q(n, 0);
    Rng rng(seed);
    auto random_vector = [&] {
        Eigen::VectorXcd v(n);
        for (Eigen::Index i = 0; i < n; ++i)
            v[i] = Complex(rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0));
        return v;
    };
    auto deflate = [&](Eigen::VectorXcd& w) {
        if (Q.cols() > 0) w.noalias() -= Q * (Q.adjoint() * w);
    };

    Eigen::VectorXcd start = random_vector();
    double best_estimate = std::numeric_limits<double>::infinity();

    for (int restart = 0; restart <= opt.max_restarts; ++restart) {
        deflate(start);
        double snorm = start.norm();
        if (snorm < 1e-14) {
            start = random_vector();
            deflate(start);
            snorm = start.norm();
        }

        Eigen::MatrixXcd V(n, p + 1);
        Eigen::MatrixXcd H = Eigen::MatrixXcd::Zero(p + 1, p);
        V.col(0) = start / snorm;
        Eigen::Index built = 0;
        bool invariant = false;
        for (Eigen::Index j = 0; j < p; ++j) {
            Eigen::VectorXcd w = B * V.col(j);
            deflate(w);
            for (int pass = 0; pass < 2; ++pass) {  // MGS, one reorth pass
                for (Eigen::Index i = 0; i <= j; ++i) {
                    Complex h = V.col(i).dot(w);
                    w.noalias() -= h * V.col(i);
                    H(i, j) += h;
                }
            }
            double wn = w.norm();
            H(j + 1, j) = wn;
            built = j + 1;
            if (wn < 1e-12 * std::max(bnorm, 1.0)) {
                invariant = true;
                break;
            }
            V.col(j + 1) = w / wn;
        }

        Eigen::MatrixXcd Hs = H.topLeftCorner(built, built);
        Eigen::ComplexEigenSolver<Eigen::MatrixXcd> small(Hs);
        if (small.info() != Eigen::Success)
            throw convergence_error("arnoldi_leading: projected eigensolve failed",
                                    best_estimate);
        auto order = modulus_order(small.eigenvalues());
        const double beta = std::abs(H(built, built - 1));

        Eigen::Index wanted = m - Q.cols();
        std::vector<Eigen::Index> unconverged;
        for (Eigen::Index t = 0; t < built && wanted > 0; ++t) {
            Eigen::Index idx = order[static_cast<std::size_t>(t)];
            if (static_cast<Eigen::Index>(t) >= wanted + 2 &&
                static_cast<Eigen::Index>(unconverged.size()) >= wanted)
                break;
            double estimate =
                invariant ? 0.0
                          : beta * std::abs(small.eigenvectors()(built - 1, idx));
            best_estimate = std::min(best_estimate, estimate);
            if (estimate <= lock_tol || invariant) {
                Eigen::VectorXcd u =
                    V.leftCols(built) * small.eigenvectors().col(idx);
                deflate(u);
                double un = u.norm();
                if (un < 1e-12) continue;
                u /= un;
                Eigen::VectorXcd r = B * u;
                Complex theta = u.dot(r);  // Rayleigh quotient
                double resid = (r - theta * u).norm();
                if (resid <= lock_tol || invariant) {
                    Q.conservativeResize(Eigen::NoChange, Q.cols() + 1);
                    Q.col(Q.cols() - 1) = u;
                    --wanted;
                    continue;
                }
            }
            if (static_cast<Eigen::Index>(unconverged.size()) < wanted)
                unconverged.push_back(idx);
        }

        if (Q.cols() >= m) break;
        if (invariant) {
            // Deflated operator exhausted without filling m pairs; restart
            // from fresh randomness.
            start = random_vector();
            continue;
        }
        if (unconverged.empty()) {
            start = random_vector();
            continue;
        }
        Eigen::VectorXcd y = Eigen::VectorXcd::Zero(built);
        for (Eigen::Index idx : unconverged)
            y += small.eigenvectors().col(idx);
        start = V.leftCols(built) * y;
    }

    if (Q.cols() < m)
        throw convergence_error(
            "arnoldi_leading: only " + std::to_string(Q.cols()) + " of " +
                std::to_string(m) + " eigenpairs converged within " +
                std::to_string(opt.max_restarts) + " restarts",
            best_estimate);

    // Recover eigenpairs of B restricted to the locked invariant subspace.
    Eigen::MatrixXcd T = Q.adjoint() * (B * Q);
    Eigen::ComplexEigenSolver<Eigen::MatrixXcd> proj(T);
    if (proj.info() != Eigen::Success)
        throw convergence_error("arnoldi_leading: projected eigensolve failed",
                                best_estimate);
    KrylovResult out;
    out.values = proj.eigenvalues();
    out.vectors = Q * proj.eigenvectors();
    return out;
}

/// Right eigenpairs of a general complex matrix: top m by modulus,
/// canonicalized unit vectors. Chooses dense vs Arnoldi per options.
inline void general_leading(const Eigen::MatrixXcd& B, Eigen::Index m, double tol,
                            std::uint64_t seed, const SolverOptions& opt,
                            Eigen::VectorXcd& values, Eigen::MatrixXcd& vectors) {
    const Eigen::Index n = B.rows();
    bool dense = opt.strategy == SolverOptions::Strategy::Dense ||
                 (opt.strategy == SolverOptions::Strategy::Auto &&
                  n <= opt.dense_threshold);
    Eigen::VectorXcd all_values;
    Eigen::MatrixXcd all_vectors;
    if (dense) {
        Eigen::ComplexEigenSolver<Eigen::MatrixXcd> es(B, true);
        if (es.info() != Eigen::Success)
            throw convergence_error("leading_eigenpairs: dense QR iteration failed",
                                    std::numeric_limits<double>::quiet_NaN());
        all_values = es.eigenvalues();
        all_vectors = es.eigenvectors();
    } else {
        KrylovResult kr = arnoldi_leading(B, m, tol, seed, opt);
        all_values = kr.values;
        all_vectors = kr.vectors;
    }
    auto order = modulus_order(all_values);
    values.resize(m);
    vectors.resize(n, m);
    for (Eigen::Index i = 0; i < m; ++i) {
        Eigen::Index src = order[static_cast<std::size_t>(i)];
        values[i] = all_values[src];
        vectors.col(i) = all_vectors.col(src);
        canonicalize(vectors.col(i));
    }
}

}  // namespace detail

/// Computes the m leading eigenpairs of B (largest modulus), with left rows
/// obtained from the conjugate-transpose problem, matched by conjugate
/// pairing, and rescaled so r_iᵀ v_i = 1 (block-wise within degenerate
/// clusters).
inline EigenDecomposition leading_eigenpairs(const Eigen::MatrixXcd& B,
                                             Eigen::Index m, double tol,
                                             std::uint64_t seed,
                                             const SolverOptions& opt = {}) {
    const Eigen::Index n = B.rows();
    if (B.cols() != n) throw std::invalid_argument("leading_eigenpairs: B not square");
    if (m < 1 || m > n)
        throw std::invalid_argument("leading_eigenpairs: m must be in [1, dim]");
    if (!(tol > 0.0)) throw std::invalid_argument("leading_eigenpairs: tol must be > 0");

    EigenDecomposition dec;
    detail::general_leading(B, m, tol, seed, opt, dec.eigenvalues, dec.right_vectors);

    // Left vectors from the adjoint problem: Bᴴw = conj(λ)w ⇔ wᴴB = λwᴴ.
    Eigen::VectorXcd left_values;
    Eigen::MatrixXcd left_vectors;
    detail::general_leading(B.adjoint(), m, tol, mix_seed(seed, 0xB17),
                            opt, left_values, left_vectors);

    // Conjugate pairing with residual minimization: among near-tied
    // candidates prefer the one with the largest overlap against v_i.
    std::vector<bool> used(static_cast<std::size_t>(m), false);
    Eigen::MatrixXcd matched(n, m);
    for (Eigen::Index i = 0; i < m; ++i) {
        Complex target = std::conj(dec.eigenvalues[i]);
        double best_dist = std::numeric_limits<double>::infinity();
        for (Eigen::Index j = 0; j < m; ++j) {
            if (used[static_cast<std::size_t>(j)]) continue;
            best_dist = std::min(best_dist, std::abs(left_values[j] - target));
        }
        Eigen::Index pick = -1;
        double best_overlap = -1.0;
        for (Eigen::Index j = 0; j < m; ++j) {
            if (used[static_cast<std::size_t>(j)]) continue;
            double dist = std::abs(left_values[j] - target);
            if (dist <= best_dist * (1.0 + 1e-6) + 1e-12) {
                double overlap = std::abs(left_vectors.col(j).dot(dec.right_vectors.col(i)));
                if (overlap > best_overlap) {
                    best_overlap = overlap;
                    pick = j;
                }
            }
        }
        if (pick < 0 || best_overlap < 1e-12)
            throw convergence_error(
                "leading_eigenpairs: left/right eigenvalue matching degenerate",
                best_dist);
        used[static_cast<std::size_t>(pick)] = true;
        matched.col(i) = left_vectors.col(pick);
    }

    // Biorthogonal normalization, block-wise over degenerate clusters.
    dec.left_rows.resize(m, n);
    const double cluster_tol = 1e-8 * std::max(1.0, std::abs(dec.eigenvalues[0]));
    Eigen::Index lo = 0;
    while (lo < m) {
        Eigen::Index hi = lo + 1;
        while (hi < m &&
               std::abs(dec.eigenvalues[hi] - dec.eigenvalues[hi - 1]) <= cluster_tol)
            ++hi;
        Eigen::Index g = hi - lo;
        if (g == 1) {
            Complex s = (matched.col(lo).adjoint() * dec.right_vectors.col(lo))(0);
            if (std::abs(s) < 1e-14)
                throw convergence_error(
                    "leading_eigenpairs: left/right pair nearly orthogonal",
                    std::abs(s));
            dec.left_rows.row(lo) = matched.col(lo).adjoint() / s;
        } else {
            Eigen::MatrixXcd WV = matched.middleCols(lo, g).adjoint() *
                                  dec.right_vectors.middleCols(lo, g);
            Eigen::PartialPivLU<Eigen::MatrixXcd> lu(WV);
            Eigen::MatrixXcd rows = lu.solve(matched.middleCols(lo, g).adjoint());
            dec.left_rows.middleRows(lo, g) = rows;
        }
        lo = hi;
    }

    dec.residuals.resize(m);
    const double bnorm = B.norm();
    for (Eigen::Index i = 0; i < m; ++i) {
        dec.residuals[i] =
            (B * dec.right_vectors.col(i) - dec.eigenvalues[i] * dec.right_vectors.col(i))
                .norm();
        if (!(dec.residuals[i] <= tol * std::max(bnorm, 1e-300)))
            throw convergence_error(
                "leading_eigenpairs: residual bound violated for mode " +
                    std::to_string(i),
                dec.residuals[i]);
    }
    return dec;
}

inline EigenDecomposition leading_eigenpairs(const SystemMatrix& sys,
                                             Eigen::Index m, double tol,
                                             std::uint64_t seed,
                                             const SolverOptions& opt = {}) {
    return leading_eigenpairs(sys.entries, m, tol, seed, opt);
}

namespace detail {

/// Restarted Lanczos with full reorthogonalization and locking. Same
/// structure as the Arnoldi path but exploits Hermitian symmetry.
inline KrylovResult lanczos_leading(const Eigen::MatrixXcd& H, Eigen::Index m,
                                    double tol, std::uint64_t seed,
                                    const SolverOptions& opt) {
    const Eigen::Index n = H.rows();
    const double hnorm = H.norm();
    const double lock_tol = tol * std::max(hnorm, 1e-300);
    Eigen::Index p = opt.krylov_dim > 0
                         ? std::min(opt.krylov_dim, n)
                         : std::min<Eigen::Index>(n, std::max<Eigen::Index>(2 * m + 16, 36));

    Eigen::MatrixXcd Q(n, 0);
    Rng rng(seed);
    auto random_vector = [&] {
        Eigen::VectorXcd v(n);
        for (Eigen::Index i = 0; i < n; ++i)
            v[i] = Complex(rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0));
        return v;
    };
    auto deflate = [&](Eigen::VectorXcd& w) {
        if (Q.cols() > 0) w.noalias() -= Q * (Q.adjoint() * w);
    };

    Eigen::VectorXcd start = random_vector();
    double best_estimate = std::numeric_limits<double>::infinity();

    for (int restart = 0; restart <= opt.max_restarts; ++restart) {
        deflate(start);
        double snorm = start.norm();
        if (snorm < 1e-14) {
            start = random_vector();
            deflate(start);
            snorm = start.norm();
        }
        Eigen::MatrixXcd V(n, p + 1);
        Eigen::VectorXd alpha = Eigen::VectorXd::Zero(p);
        Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
        V.col(0) = start / snorm;
        Eigen::Index built = 0;
        bool invariant = false;
        for (Eigen::Index j = 0; j < p; ++j) {
            Eigen::VectorXcd w = H * V.col(j);
            deflate(w);
            alpha[j] = V.col(j).dot(w).real();
            // Full reorthogonalization keeps the basis clean at our sizes.
            for (int pass = 0; pass < 2; ++pass)
                for (Eigen::Index i = 0; i <= j; ++i)
                    w.noalias() -= V.col(i).dot(w) * V.col(i);
            double wn = w.norm();
            beta[j] = wn;
            built = j + 1;
            if (wn < 1e-12 * std::max(hnorm, 1.0)) {
                invariant = true;
                break;
            }
            V.col(j + 1) = w / wn;
        }

        Eigen::MatrixXd tri = Eigen::MatrixXd::Zero(built, built);
        for (Eigen::Index j = 0; j < built; ++j) {
            tri(j, j) = alpha[j];
            if (j + 1 < built) {
                tri(j + 1, j) = beta[j];
                tri(j, j + 1) = beta[j];
            }
        }
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> small(tri);
        if (small.info() != Eigen::Success)
            throw convergence_error("lanczos_leading: tridiagonal eigensolve failed",
                                    best_estimate);
        Eigen::VectorXcd ritz = small.eigenvalues().cast<Complex>();
        auto order = modulus_order(ritz);
        const double edge = invariant ? 0.0 : beta[built - 1];

        Eigen::Index wanted = m - Q.cols();
        std::vector<Eigen::Index> unconverged;
        for (Eigen::Index t = 0; t < built && wanted > 0; ++t) {
            Eigen::Index idx = order[static_cast<std::size_t>(t)];
            double estimate = edge * std::abs(small.eigenvectors()(built - 1, idx));
            best_estimate = std::min(best_estimate, estimate);
            if (estimate <= lock_tol || invariant) {
                Eigen::VectorXcd u =
                    V.leftCols(built) * small.eigenvectors().col(idx).cast<Complex>();
                deflate(u);
                double un = u.norm();
                if (un < 1e-12) continue;
                u /= un;
                double theta = u.dot(H * u).real();
                double resid = (H * u - theta * u).norm();
                if (resid <= lock_tol || invariant) {
                    Q.conservativeResize(Eigen::NoChange, Q.cols() + 1);
                    Q.col(Q.cols() - 1) = u;
                    --wanted;
                    continue;
                }
            }
            if (static_cast<Eigen::Index>(unconverged.size()) < wanted)
                unconverged.push_back(idx);
        }

        if (Q.cols() >= m) break;
        if (invariant || unconverged.empty()) {
            start = random_vector();
            continue;
        }
        Eigen::VectorXcd y = Eigen::VectorXcd::Zero(built);
        for (Eigen::Index idx : unconverged)
            y += small.eigenvectors().col(idx).cast<Complex>();
        start = V.leftCols(built) * y;
    }

    if (Q.cols() < m)
        throw convergence_error(
            "lanczos_leading: only " + std::to_string(Q.cols()) + " of " +
                std::to_string(m) + " eigenpairs converged within " +
                std::to_string(opt.max_restarts) + " restarts",
            best_estimate);

    Eigen::MatrixXcd T = Q.adjoint() * (H * Q);
    T = Complex(0.5, 0.0) * (T + T.adjoint());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> proj(T);
    if (proj.info() != Eigen::Success)
        throw convergence_error("lanczos_leading: projected eigensolve failed",
                                best_estimate);
    KrylovResult out;
    out.values = proj.eigenvalues().cast<Complex>();
    out.vectors = Q * proj.eigenvectors();
    return out;
}

}  // namespace detail

/// Leading (largest-|λ|) eigenpairs of a Hermitian matrix. Eigenvalues are
/// real, eigenvectors orthonormal and phase-canonicalized. Rejects inputs
/// that are not Hermitian within 1e−10.
inline HermitianEigenpairs hermitian_leading_eigenpairs(
    const Eigen::MatrixXcd& S, Eigen::Index m, double tol,
    const SolverOptions& opt = {}, std::uint64_t seed = 0x5eed) {
    const Eigen::Index n = S.rows();
    if (S.cols() != n)
        throw std::invalid_argument("hermitian_leading_eigenpairs: S not square");
    if (m < 1 || m > n)
        throw std::invalid_argument("hermitian_leading_eigenpairs: m must be in [1, dim]");
    if (!(tol > 0.0))
        throw std::invalid_argument("hermitian_leading_eigenpairs: tol must be > 0");
    double dev = (S - S.adjoint()).cwiseAbs().maxCoeff();
    double scale = std::max(1.0, S.cwiseAbs().maxCoeff());
    if (dev > 1e-10 * scale)
        throw std::invalid_argument(
            "hermitian_leading_eigenpairs: input not Hermitian (deviation " +
            std::to_string(dev) + ")");
    Eigen::MatrixXcd H = Complex(0.5, 0.0) * (S + S.adjoint());

    bool dense = opt.strategy == SolverOptions::Strategy::Dense ||
                 (opt.strategy == SolverOptions::Strategy::Auto &&
                  n <= opt.dense_threshold);
    Eigen::VectorXcd all_values;
    Eigen::MatrixXcd all_vectors;
    if (dense) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(H);
        if (es.info() != Eigen::Success)
            throw convergence_error(
                "hermitian_leading_eigenpairs: dense eigensolve failed",
                std::numeric_limits<double>::quiet_NaN());
        all_values = es.eigenvalues().cast<Complex>();
        all_vectors = es.eigenvectors();
    } else {
        detail::KrylovResult kr = detail::lanczos_leading(H, m, tol, seed, opt);
        all_values = kr.values;
        all_vectors = kr.vectors;
    }

    auto order = detail::modulus_order(all_values);
    HermitianEigenpairs out;
    out.eigenvalues.resize(m);
    out.eigenvectors.resize(n, m);
    out.residuals.resize(m);
    const double hnorm = H.norm();
    for (Eigen::Index i = 0; i < m; ++i) {
        Eigen::Index src = order[static_cast<std::size_t>(i)];
        out.eigenvalues[i] = all_values[src].real();
        out.eigenvectors.col(i) = all_vectors.col(src);
        detail::canonicalize(out.eigenvectors.col(i));
        out.residuals[i] = (H * out.eigenvectors.col(i) -
                            out.eigenvalues[i] * out.eigenvectors.col(i))
                               .norm();
        if (!(out.residuals[i] <= tol * std::max(hnorm, 1e-300)))
            throw convergence_error(
                "hermitian_leading_eigenpairs: residual bound violated for mode " +
                    std::to_string(i),
                out.residuals[i]);
    }
    return out;
}

/// Per-mode contribution trace μ_i(k) = λ_i^k (r_iᵀ x(0)) for k = 0..steps,
/// with the normalized modulus μ̃. Computed in log-modulus + phase form so
/// that growing modes cannot overflow the normalization.
struct ContributionTrace {
    Eigen::MatrixXcd mu;             // (steps+1) × m; ±inf if beyond double range
    Eigen::MatrixXd mu_normalized;   // rows sum to 1 when any |μ| > 0
    Eigen::MatrixXd log_modulus;     // ln|μ|, −inf where μ = 0
    Eigen::MatrixXd phase;           // Arg(μ) in (−π, π]
};

inline ContributionTrace mode_contributions(const EigenDecomposition& dec,
                                            const ComplexState& x0, int steps) {
    if (steps < 1) throw std::invalid_argument("mode_contributions: steps must be >= 1");
    if (x0.size() != dec.dim())
        throw std::invalid_argument("mode_contributions: x0 has length " +
                                    std::to_string(x0.size()) + ", expected " +
                                    std::to_string(dec.dim()));
    const Eigen::Index m = dec.modes();
    const int rows = steps + 1;
    const double ninf = -std::numeric_limits<double>::infinity();
    ContributionTrace tr;
    tr.mu.resize(rows, m);
    tr.mu_normalized.resize(rows, m);
    tr.log_modulus.resize(rows, m);
    tr.phase.resize(rows, m);

    Eigen::VectorXd log_c(m), arg_c(m), log_lambda(m), arg_lambda(m);
    for (Eigen::Index i = 0; i < m; ++i) {
        Complex c = (dec.left_rows.row(i) * x0)(0);
        double ac = std::abs(c);
        log_c[i] = ac > 0.0 ? std::log(ac) : ninf;
        arg_c[i] = ac > 0.0 ? std::arg(c) : 0.0;
        double al = std::abs(dec.eigenvalues[i]);
        log_lambda[i] = al > 0.0 ? std::log(al) : ninf;
        arg_lambda[i] = al > 0.0 ? std::arg(dec.eigenvalues[i]) : 0.0;
    }

    for (int k = 0; k < rows; ++k) {
        double row_max = ninf;
        for (Eigen::Index i = 0; i < m; ++i) {
            double lm;
            if (log_c[i] == ninf)
                lm = ninf;
            else if (k == 0)
                lm = log_c[i];
            else if (log_lambda[i] == ninf)
                lm = ninf;
            else
                lm = static_cast<double>(k) * log_lambda[i] + log_c[i];
            double ph = lm == ninf
                            ? 0.0
                            : principal_phase(static_cast<double>(k) * arg_lambda[i] +
                                              arg_c[i]);
            tr.log_modulus(k, i) = lm;
            tr.phase(k, i) = ph;
            tr.mu(k, i) = lm == ninf ? Complex(0.0, 0.0)
                                     : std::polar(std::exp(lm), ph);
            row_max = std::max(row_max, lm);
        }
        if (row_max == ninf) {
            tr.mu_normalized.row(k).setZero();
            continue;
        }
        double total = 0.0;
        for (Eigen::Index i = 0; i < m; ++i) {
            double w = tr.log_modulus(k, i) == ninf
                           ? 0.0
                           : std::exp(tr.log_modulus(k, i) - row_max);
            tr.mu_normalized(k, i) = w;
            total += w;
        }
        tr.mu_normalized.row(k) /= total;
    }
    return tr;
}

/// Truncated modal reconstruction Σ_{i≤rank} μ_i(k) v_i. When the exact
/// coefficients exceed double range the whole state is rescaled by a
/// positive factor (phases unaffected); the natural log of that factor is
/// reported through log_scale when given, 0 when no rescaling happened.
inline ComplexState lowrank_reconstruct(const EigenDecomposition& dec,
                                        const ComplexState& x0, int k, int rank,
                                        double* log_scale = nullptr) {
    if (rank < 1 || rank > dec.modes())
        throw std::invalid_argument("lowrank_reconstruct: rank must be in [1, modes]");
    if (k < 0) throw std::invalid_argument("lowrank_reconstruct: step must be >= 0");
    if (x0.size() != dec.dim())
        throw std::invalid_argument("lowrank_reconstruct: x0 dimension mismatch");
    const double ninf = -std::numeric_limits<double>::infinity();
    Eigen::VectorXd lm(rank), ph(rank);
    double peak = ninf;
    for (int i = 0; i < rank; ++i) {
        Complex c = (dec.left_rows.row(i) * x0)(0);
        double ac = std::abs(c);
        double al = std::abs(dec.eigenvalues[i]);
        if (ac == 0.0 || (k > 0 && al == 0.0)) {
            lm[i] = ninf;
            ph[i] = 0.0;
        } else {
            lm[i] = std::log(ac) + (k > 0 ? k * std::log(al) : 0.0);
            ph[i] = principal_phase(std::arg(c) +
                                    (k > 0 ? k * std::arg(dec.eigenvalues[i]) : 0.0));
        }
        peak = std::max(peak, lm[i]);
    }
    // Rescale only when exp would overflow or vanish entirely.
    double shift = 0.0;
    constexpr double kSafeLog = 650.0;  // comfortably inside double range
    if (peak > kSafeLog)
        shift = peak - kSafeLog;
    else if (peak != ninf && peak < -kSafeLog)
        shift = peak + kSafeLog;
    if (log_scale) *log_scale = shift;
    ComplexState out = ComplexState::Zero(dec.dim());
    for (int i = 0; i < rank; ++i) {
        if (lm[i] == ninf) continue;
        Complex mu = std::polar(std::exp(lm[i] - shift), ph[i]);
        out.noalias() += mu * dec.right_vectors.col(i);
    }
    return out;
}

}  // namespace cvrnn
