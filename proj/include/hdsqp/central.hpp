#ifndef HDSQP_CENTRAL_HPP
#define HDSQP_CENTRAL_HPP

// Centralized reference solvers: Gauss-Newton/LM on an unpartitioned
// network, and direct KKT solves of the consensus QPs that the distributed
// solver handles in one pass.

#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseLU>

#include "hdsqp/hdqp.hpp"
#include "hdsqp/residual.hpp"

namespace hdsqp {

enum class SolveStatus { Converged, MaxIter, NumericalBreakdown };

inline const char* to_string(SolveStatus s) {
    switch (s) {
        case SolveStatus::Converged: return "converged";
        case SolveStatus::MaxIter: return "max_iter";
        default: return "numerical_breakdown";
    }
}

struct CentralConfig {
    double eps = 1e-10;
    double tol_residual = 1e-12;
    // stagnation below this step size counts as converged once |r| <= stall_residual
    double tol_step = 1e-13;
    double stall_residual = 1e-8;
    int max_iter = 30;
};

struct CentralResult {
    StateVector state;
    SolveStatus status = SolveStatus::MaxIter;
    int iterations = 0;
    std::vector<StateVector> iterates;  // iterates[0] is the flat start
    std::vector<double> r_norm2;        // |r| at each iterate
    std::string message;
};

/// LM steps (J'J + eps I) p = -J'r from the flat start.
inline CentralResult central_solve(const NetworkModel& net, const CentralConfig& cfg = {}) {
    CentralResult res;
    StateVector s = flat_start(net);
    Eigen::VectorXd r = residual(net, s);
    res.iterates.push_back(s);
    res.r_norm2.push_back(r.norm());

    Eigen::SimplicialLDLT<SparseMatrix> ldlt;
    bool pattern_ready = false;
    for (int k = 0; k <= cfg.max_iter; ++k) {
        if (r.norm() <= cfg.tol_residual) {
            res.status = SolveStatus::Converged;
            break;
        }
        if (k == cfg.max_iter) break;
        const SparseMatrix J = jacobian(net, s);
        SparseMatrix B = SparseMatrix(J.transpose() * J);
        SparseMatrix reg(B.rows(), B.cols());
        reg.setIdentity();
        B += cfg.eps * reg;
        if (!pattern_ready) {
            ldlt.analyzePattern(B);
            pattern_ready = true;
        }
        ldlt.factorize(B);
        if (ldlt.info() != Eigen::Success) {
            res.status = SolveStatus::NumericalBreakdown;
            res.message = "LM Hessian factorization failed";
            break;
        }
        const Eigen::VectorXd step = ldlt.solve(-(J.transpose() * r));
        s.set_free(net, s.free(net) + step);
        ++res.iterations;
        if (s.v.minCoeff() <= 0.0) {
            res.status = SolveStatus::NumericalBreakdown;
            res.message = "non-positive voltage magnitude";
            break;
        }
        r = residual(net, s);
        res.iterates.push_back(s);
        res.r_norm2.push_back(r.norm());
        if (step.lpNorm<Eigen::Infinity>() <= cfg.tol_step && r.norm() <= cfg.stall_residual) {
            res.status = SolveStatus::Converged;
            break;
        }
    }
    res.state = s;
    return res;
}

struct DenseKktSolution {
    std::vector<Eigen::VectorXd> x;
    Eigen::VectorXd z;
    std::vector<Eigen::VectorXd> lambda;
};

/// Assemble the KKT system of the consensus QP,
///
///     [ Bb  I   0 ] [x]        [Bb xk - gb]
///     [ I   0  -E ] [lambda] = [    0     ]
///     [ 0  -E'  0 ] [z]        [    0     ]
///
/// and solve it densely with full-pivoting LU.
inline DenseKktSolution dense_kkt_solve(const ConsensusQP& qp) {
    const Eigen::MatrixXd E = qp.stacked_incidence();
    const Eigen::MatrixXd Bb = qp.block_hessian();
    const auto nx = E.rows(), nz = E.cols();
    Eigen::VectorXd xk(nx), gb(nx);
    {
        Eigen::Index off = 0;
        for (const auto& r : qp.regions) {
            xk.segment(off, r.n_cpl()) = r.x_k;
            gb.segment(off, r.n_cpl()) = r.g_bar;
            off += r.n_cpl();
        }
    }
    const auto n = 2 * nx + nz;
    Eigen::MatrixXd K = Eigen::MatrixXd::Zero(n, n);
    K.topLeftCorner(nx, nx) = Bb;
    K.block(0, nx, nx, nx).setIdentity();
    K.block(nx, 0, nx, nx).setIdentity();
    K.block(nx, 2 * nx, nx, nz) = -E;
    K.block(2 * nx, nx, nz, nx) = -E.transpose();
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n);
    rhs.head(nx) = Bb * xk - gb;

    Eigen::VectorXd sol = Eigen::VectorXd::Zero(n);
    if (n > 0) {
        Eigen::FullPivLU<Eigen::MatrixXd> lu(K);
        if (!lu.isInvertible()) throw NumericalBreakdown("singular KKT matrix");
        sol = lu.solve(rhs);
    }
    DenseKktSolution out;
    out.z = sol.tail(nz);
    Eigen::Index off = 0;
    for (const auto& r : qp.regions) {
        out.x.push_back(sol.segment(off, r.n_cpl()));
        out.lambda.push_back(sol.segment(nx + off, r.n_cpl()));
        off += r.n_cpl();
    }
    return out;
}

/// One region of the uncondensed QP: min 1/2 d'Bd + g'd over d = chi - chi_k.
struct FullQpRegion {
    Eigen::MatrixXd B;
    Eigen::VectorXd g;
    Eigen::VectorXd chi_k;
    std::vector<int> coupling_state;
    std::vector<int> coupling_z;
};

struct FullQpSolution {
    std::vector<Eigen::VectorXd> chi;
    Eigen::VectorXd z;
    std::vector<Eigen::VectorXd> lambda;
};

/// Direct sparse-LU solve of the full-dimensional consensus QP
///     min sum_l m_l(chi_l)  s.t.  A_l chi_l = E_l z.
inline FullQpSolution full_qp_solve(const std::vector<FullQpRegion>& regions, int n_z) {
    Eigen::Index n_state = 0, n_cpl = 0;
    for (const auto& r : regions) {
        n_state += r.B.rows();
        n_cpl += static_cast<Eigen::Index>(r.coupling_state.size());
    }
    const Eigen::Index n = n_state + n_cpl + n_z;
    std::vector<Eigen::Triplet<double>> trip;
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n);
    Eigen::Index so = 0, co = 0;
    for (const auto& r : regions) {
        const auto ns = r.B.rows();
        for (Eigen::Index i = 0; i < ns; ++i)
            for (Eigen::Index j = 0; j < ns; ++j)
                if (r.B(i, j) != 0.0) trip.emplace_back(so + i, so + j, r.B(i, j));
        rhs.segment(so, ns) = r.B * r.chi_k - r.g;
        for (std::size_t j = 0; j < r.coupling_state.size(); ++j) {
            const auto lam = n_state + co + static_cast<Eigen::Index>(j);
            const auto st = so + r.coupling_state[j];
            const auto zc = n_state + n_cpl + r.coupling_z[j];
            trip.emplace_back(st, lam, 1.0);
            trip.emplace_back(lam, st, 1.0);
            trip.emplace_back(lam, zc, -1.0);
            trip.emplace_back(zc, lam, -1.0);
        }
        so += ns;
        co += static_cast<Eigen::Index>(r.coupling_state.size());
    }
    SparseMatrix K(n, n);
    K.setFromTriplets(trip.begin(), trip.end());
    Eigen::SparseLU<SparseMatrix> lu;
    lu.analyzePattern(K);
    lu.factorize(K);
    if (lu.info() != Eigen::Success) throw NumericalBreakdown("full QP KKT factorization failed");
    Eigen::VectorXd sol = lu.solve(rhs);
    // saddle-point LU loses backward accuracy; a few refinement sweeps recover it
    for (int sweep = 0; sweep < 3; ++sweep) sol += lu.solve(rhs - K * sol);

    FullQpSolution out;
    out.z = sol.tail(n_z);
    so = 0;
    co = 0;
    for (const auto& r : regions) {
        const auto ns = r.B.rows();
        const auto nc = static_cast<Eigen::Index>(r.coupling_state.size());
        out.chi.push_back(sol.segment(so, ns));
        out.lambda.push_back(sol.segment(n_state + co, nc));
        so += ns;
        co += nc;
    }
    return out;
}

}  // namespace hdsqp

#endif
