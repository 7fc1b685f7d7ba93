#ifndef HDSQP_HDQP_HPP
#define HDSQP_HDQP_HPP

// One-pass dual decomposition for the hypergraph consensus QP
//
//     min  sum_l 1/2 x_l' Bb_l x_l + (gb_l - Bb_l xk_l)' x_l
//     s.t. x_l = E_l z   | lambda_l
//
// With every Bb_l positive definite, a single pass of
// local solve -> weighted average -> dual update yields a KKT point.

#include <algorithm>
#include <cstddef>
#include <numeric>
#include <vector>

#include <Eigen/Dense>

#include "hdsqp/condense.hpp"
#include "hdsqp/error.hpp"

namespace hdsqp {

/// A region's condensed data. `z_cols[j]` is the consensus column of
/// coupling entry j (the single 1 in row j of E_l).
struct ConsensusRegion {
    Eigen::MatrixXd B_bar;
    Eigen::VectorXd g_bar;
    Eigen::VectorXd x_k;
    std::vector<int> z_cols;
    Eigen::LDLT<Eigen::MatrixXd> factor;

    int n_cpl() const { return static_cast<int>(z_cols.size()); }

    Eigen::VectorXd expand(const Eigen::VectorXd& z) const {
        Eigen::VectorXd x(n_cpl());
        for (int j = 0; j < n_cpl(); ++j) x[j] = z[z_cols[j]];
        return x;
    }
};

inline ConsensusRegion make_consensus_region(Eigen::MatrixXd B_bar, Eigen::VectorXd g_bar, Eigen::VectorXd x_k,
                                             std::vector<int> z_cols) {
    ConsensusRegion r;
    r.factor = detail::spd_factor(B_bar, "condensed Hessian");
    r.B_bar = std::move(B_bar);
    r.g_bar = std::move(g_bar);
    r.x_k = std::move(x_k);
    r.z_cols = std::move(z_cols);
    return r;
}

struct ConsensusQP {
    std::vector<ConsensusRegion> regions;
    int n_z = 0;

    Eigen::MatrixXd stacked_incidence() const {
        int rows = 0;
        for (const auto& r : regions) rows += r.n_cpl();
        Eigen::MatrixXd E = Eigen::MatrixXd::Zero(rows, n_z);
        int off = 0;
        for (const auto& r : regions)
            for (int j = 0; j < r.n_cpl(); ++j) E(off++, r.z_cols[j]) = 1.0;
        return E;
    }

    Eigen::MatrixXd block_hessian() const {
        int n = 0;
        for (const auto& r : regions) n += r.n_cpl();
        Eigen::MatrixXd Bb = Eigen::MatrixXd::Zero(n, n);
        int off = 0;
        for (const auto& r : regions) {
            Bb.block(off, off, r.n_cpl(), r.n_cpl()) = r.B_bar;
            off += r.n_cpl();
        }
        return Bb;
    }
};

/// xbar_l = Bb_l^-1 (Bb_l xk_l - gb_l), i.e. xk_l - Bb_l^-1 gb_l.
inline Eigen::VectorXd local_unconstrained(const ConsensusRegion& r) {
    if (r.n_cpl() == 0) return {};
    return r.x_k - r.factor.solve(r.g_bar);
}

inline std::vector<Eigen::VectorXd> local_unconstrained(const ConsensusQP& qp) {
    std::vector<Eigen::VectorXd> out;
    out.reserve(qp.regions.size());
    for (const auto& r : qp.regions) out.push_back(local_unconstrained(r));
    return out;
}

/// A region's share of the weighted average: E_l' Bb_l E_l restricted to
/// its active consensus columns (packed densely, columns ascending) and
/// E_l' Bb_l xbar_l on the same columns.
struct ConsensusContribution {
    std::vector<int> cols;
    Eigen::MatrixXd block;
    Eigen::VectorXd rhs;
};

inline ConsensusContribution consensus_contribution(const ConsensusRegion& r, const Eigen::VectorXd& x_bar) {
    ConsensusContribution c;
    const int n = r.n_cpl();
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) { return r.z_cols[a] < r.z_cols[b]; });
    for (int j : order) c.cols.push_back(r.z_cols[j]);
    const Eigen::VectorXd bx = r.B_bar * x_bar;
    c.block.resize(n, n);
    c.rhs.resize(n);
    for (int a = 0; a < n; ++a) {
        c.rhs[a] = bx[order[a]];
        for (int b = 0; b < n; ++b) c.block(a, b) = r.B_bar(order[a], order[b]);
    }
    return c;
}

/// Sum of contributions in the given (region) order.
struct ConsensusSystem {
    Eigen::MatrixXd S;
    Eigen::VectorXd rhs;
};

inline ConsensusSystem accumulate(const std::vector<ConsensusContribution>& parts, int n_z) {
    ConsensusSystem sys{Eigen::MatrixXd::Zero(n_z, n_z), Eigen::VectorXd::Zero(n_z)};
    for (const auto& c : parts) {
        const auto n = c.cols.size();
        for (std::size_t a = 0; a < n; ++a) {
            sys.rhs[c.cols[a]] += c.rhs[a];
            for (std::size_t b = 0; b < n; ++b) sys.S(c.cols[a], c.cols[b]) += c.block(a, b);
        }
    }
    return sys;
}

inline Eigen::VectorXd solve_consensus(const ConsensusSystem& sys) {
    if (sys.S.rows() == 0) return {};
    for (Eigen::Index j = 0; j < sys.S.rows(); ++j)
        if (sys.S.col(j).cwiseAbs().maxCoeff() == 0.0)
            throw NumericalBreakdown("consensus column " + std::to_string(j) + " is not used by any region");
    Eigen::LLT<Eigen::MatrixXd> llt(sys.S);
    if (llt.info() != Eigen::Success) throw NumericalBreakdown("consensus matrix is not positive definite");
    return llt.solve(sys.rhs);
}

/// zbar = (sum_l E_l' Bb_l E_l)^-1 sum_l E_l' Bb_l xbar_l, reduced in region order.
inline Eigen::VectorXd weighted_average(const ConsensusQP& qp, const std::vector<Eigen::VectorXd>& x_bar) {
    std::vector<ConsensusContribution> parts;
    parts.reserve(qp.regions.size());
    for (std::size_t l = 0; l < qp.regions.size(); ++l) parts.push_back(consensus_contribution(qp.regions[l], x_bar[l]));
    return solve_consensus(accumulate(parts, qp.n_z));
}

/// lambda_l = Bb_l (xbar_l - E_l zbar)
inline Eigen::VectorXd dual_update(const ConsensusRegion& r, const Eigen::VectorXd& x_bar, const Eigen::VectorXd& z_bar) {
    if (r.n_cpl() == 0) return {};
    return r.B_bar * (x_bar - r.expand(z_bar));
}

/// Coupling iterate implied by the duals: xk_l + Bb_l^-1 (-gb_l - lambda_l).
/// Equals E_l zbar in exact arithmetic but amplifies rounding by cond(Bb_l).
inline Eigen::VectorXd coupling_update(const ConsensusRegion& r, const Eigen::VectorXd& lambda) {
    if (r.n_cpl() == 0) return {};
    return r.x_k + r.factor.solve(-r.g_bar - lambda);
}

struct ConsensusSolution {
    std::vector<Eigen::VectorXd> x_bar;
    Eigen::VectorXd z_bar;
    std::vector<Eigen::VectorXd> lambda;
    std::vector<Eigen::VectorXd> x_next;  // E_l zbar
};

inline ConsensusSolution hdqp_pass(const ConsensusQP& qp) {
    ConsensusSolution sol;
    sol.x_bar = local_unconstrained(qp);
    sol.z_bar = weighted_average(qp, sol.x_bar);
    for (std::size_t l = 0; l < qp.regions.size(); ++l) {
        sol.lambda.push_back(dual_update(qp.regions[l], sol.x_bar[l], sol.z_bar));
        sol.x_next.push_back(qp.regions[l].expand(sol.z_bar));
    }
    return sol;
}

struct KktNorms {
    double stationarity = 0.0;  // |Bb (x - xk) + gb + lambda|_inf
    double dual = 0.0;          // |E' lambda|_inf
    double primal = 0.0;        // |x - E zbar|_inf

    double max() const { return std::max({stationarity, dual, primal}); }
};

inline KktNorms verify_kkt(const ConsensusQP& qp, const ConsensusSolution& sol, const std::vector<Eigen::VectorXd>& x) {
    KktNorms k;
    Eigen::VectorXd et_lambda = Eigen::VectorXd::Zero(qp.n_z);
    for (std::size_t l = 0; l < qp.regions.size(); ++l) {
        const auto& r = qp.regions[l];
        if (r.n_cpl() == 0) continue;
        const Eigen::VectorXd stat = r.B_bar * (x[l] - r.x_k) + r.g_bar + sol.lambda[l];
        k.stationarity = std::max(k.stationarity, stat.lpNorm<Eigen::Infinity>());
        k.primal = std::max(k.primal, (x[l] - r.expand(sol.z_bar)).lpNorm<Eigen::Infinity>());
        for (int j = 0; j < r.n_cpl(); ++j) et_lambda[r.z_cols[j]] += sol.lambda[l][j];
    }
    k.dual = qp.n_z > 0 ? et_lambda.lpNorm<Eigen::Infinity>() : 0.0;
    return k;
}

/// KKT tolerance scaled by the gradient size.
inline double kkt_tolerance(const ConsensusQP& qp, double tol = 1e-8) {
    double g = 0.0;
    for (const auto& r : qp.regions)
        if (r.n_cpl() > 0) g = std::max(g, r.g_bar.lpNorm<Eigen::Infinity>());
    return tol * (1.0 + g);
}

/// M = I - E S^-1 E' Bb, the map from xbar to the weighted deviation
/// xbar - E zbar (so lambda = Bb M xbar).
inline Eigen::MatrixXd consensus_projector(const ConsensusQP& qp) {
    const Eigen::MatrixXd E = qp.stacked_incidence();
    const Eigen::MatrixXd Bb = qp.block_hessian();
    const Eigen::MatrixXd S = E.transpose() * Bb * E;
    const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(E.rows(), E.rows());
    if (E.cols() == 0) return I;
    return I - E * S.llt().solve(E.transpose() * Bb);
}

}  // namespace hdsqp

#endif
