#pragma once

///
/// \file dynamics.hpp
///
/// The complex linear dynamics of one network layer: system matrix
/// construction, random initial states, discrete propagation with optional
/// per-step renormalization, and the nonlinear right-hand side used as a
/// consistency oracle for the linear map.
///

#include <cmath>
#include <complex>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "cvrnn/common.hpp"
#include "cvrnn/lattice.hpp"

namespace cvrnn {

using FrequencyVector = Eigen::VectorXd;
using ComplexState = Eigen::VectorXcd;

/// Dense complex system matrix B = diag(i·ω) + ε·A governing one layer.
struct SystemMatrix {
    Eigen::MatrixXcd entries;
    double epsilon = 0.0;
    FrequencyVector omega;

    Eigen::Index size() const noexcept { return entries.rows(); }
};

inline SystemMatrix build_system_matrix(const AdjacencyMatrix& adj,
                                        const FrequencyVector& omega,
                                        double epsilon) {
    const Eigen::Index n = adj.size();
    if (omega.size() != n)
        throw std::invalid_argument(
            "build_system_matrix: omega has length " + std::to_string(omega.size()) +
            ", adjacency is " + std::to_string(n) + "x" + std::to_string(n));
    SystemMatrix sys;
    sys.epsilon = epsilon;
    sys.omega = omega;
    sys.entries = (epsilon * adj.entries).cast<Complex>();
    for (Eigen::Index i = 0; i < n; ++i)
        sys.entries(i, i) += Complex(0.0, omega[i]);
    return sys;
}

/// Random initial state: |x_i| ~ U[0,1], Arg(x_i) ~ U[−π,π]. Deterministic
/// for a fixed seed.
inline ComplexState sample_initial_state(Eigen::Index node_count,
                                         std::uint64_t seed) {
    if (node_count < 1)
        throw std::invalid_argument("sample_initial_state: node_count must be >= 1");
    Rng rng(seed);
    ComplexState x(node_count);
    for (Eigen::Index i = 0; i < node_count; ++i) {
        double r = rng.uniform();
        double theta = rng.uniform(-kPi, kPi);
        x[i] = std::polar(r, theta);
    }
    return x;
}

/// One application of the discrete map, x(k+1) = B·x(k). No normalization.
inline ComplexState step(const SystemMatrix& sys, const ComplexState& x) {
    if (x.size() != sys.size())
        throw std::invalid_argument("step: state has length " +
                                    std::to_string(x.size()) + ", system is " +
                                    std::to_string(sys.size()) + "x" +
                                    std::to_string(sys.size()));
    return sys.entries * x;
}

/// Time-indexed phase history of all nodes, phases wrapped to (−π, π].
/// Amplitude recording is optional. step_indices[t] is the 1-based step
/// after which row t was recorded.
struct PhaseRecord {
    Eigen::MatrixXd phases;      // T × n
    Eigen::MatrixXd amplitudes;  // T × n, or 0×0 when not recorded
    std::vector<int> step_indices;

    Eigen::Index rows() const noexcept { return phases.rows(); }
    Eigen::Index nodes() const noexcept { return phases.cols(); }
    bool has_amplitudes() const noexcept { return amplitudes.size() > 0; }

    /// Row holding a given step index, or -1 if that step was not recorded.
    Eigen::Index row_for_step(int step) const noexcept {
        for (std::size_t t = 0; t < step_indices.size(); ++t)
            if (step_indices[t] == step) return static_cast<Eigen::Index>(t);
        return -1;
    }
};

/// Iterates the discrete map for `steps` steps, recording phases (and
/// optionally amplitudes) every `record_every` steps. With `renormalize`
/// the state is divided by its maximum modulus after every step — a
/// positive real scalar, so recorded phases are unaffected while long
/// transients stay representable.
inline PhaseRecord propagate(const SystemMatrix& sys, const ComplexState& x0,
                             int steps, bool renormalize, int record_every,
                             bool record_amplitudes = false) {
    if (steps < 1) throw std::invalid_argument("propagate: steps must be >= 1");
    if (record_every < 1)
        throw std::invalid_argument("propagate: record_every must be >= 1");
    if (x0.size() != sys.size())
        throw std::invalid_argument("propagate: x0 has length " +
                                    std::to_string(x0.size()) + ", system is " +
                                    std::to_string(sys.size()) + "x" +
                                    std::to_string(sys.size()));
    const Eigen::Index n = sys.size();
    const int recorded = steps / record_every;
    PhaseRecord rec;
    rec.phases.resize(recorded, n);
    if (record_amplitudes) rec.amplitudes.resize(recorded, n);
    rec.step_indices.reserve(recorded);

    ComplexState x = x0;
    ComplexState next(n);
    int row = 0;
    for (int k = 1; k <= steps; ++k) {
        next.noalias() = sys.entries * x;
        x.swap(next);
        if (renormalize) {
            double peak = x.cwiseAbs().maxCoeff();
            if (!std::isfinite(peak) || peak == 0.0)
                throw cvrnn::overflow_error(
                    "propagate: state not renormalizable at step " +
                        std::to_string(k),
                    k);
            x /= peak;
        } else if (!x.allFinite()) {
            throw cvrnn::overflow_error(
                "propagate: state overflowed to non-finite values at step " +
                    std::to_string(k),
                k);
        }
        if (k % record_every == 0) {
            for (Eigen::Index i = 0; i < n; ++i) {
                rec.phases(row, i) = principal_phase(std::arg(x[i]));
                if (record_amplitudes) rec.amplitudes(row, i) = std::abs(x[i]);
            }
            rec.step_indices.push_back(k);
            ++row;
        }
    }
    return rec;
}

/// Right-hand side of the continuous nonlinear phase dynamics,
///   ψ̇_i = ω_i + ε Σ_j a_ij [ sin(ψ_j − ψ_i) − i·cos(ψ_j − ψ_i) ].
/// Kept as an oracle: i·ψ̇ ∘ e^{iψ} equals B·e^{iψ} elementwise.
inline ComplexState nonlinear_rhs(const ComplexState& psi,
                                  const FrequencyVector& omega,
                                  const AdjacencyMatrix& adj, double epsilon) {
    const Eigen::Index n = adj.size();
    if (psi.size() != n || omega.size() != n)
        throw std::invalid_argument("nonlinear_rhs: dimension mismatch");
    const Complex iunit(0.0, 1.0);
    ComplexState out(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        Complex acc(0.0, 0.0);
        for (Eigen::Index j = 0; j < n; ++j) {
            Complex delta = psi[j] - psi[i];
            acc += adj.entries(i, j) * (std::sin(delta) - iunit * std::cos(delta));
        }
        out[i] = omega[i] + epsilon * acc;
    }
    return out;
}

}  // namespace cvrnn
