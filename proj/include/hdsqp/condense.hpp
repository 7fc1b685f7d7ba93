#ifndef HDSQP_CONDENSE_HPP
#define HDSQP_CONDENSE_HPP

#include <span>
#include <vector>

#include <Eigen/Dense>

#include "hdsqp/error.hpp"
#include "hdsqp/residual.hpp"

namespace hdsqp {

/// B and g permuted into coupling (x) and local (y) blocks.
struct BlockPartition {
    std::vector<int> x_idx;  // state indices of the coupling entries, in coupling order
    std::vector<int> y_idx;  // remaining state indices, ascending
    Eigen::MatrixXd Bxx, Bxy, Byy;
    Eigen::VectorXd gx, gy;
};

inline BlockPartition split_blocks(const Eigen::MatrixXd& B, const Eigen::VectorXd& g, std::span<const int> coupling_state) {
    const int n = static_cast<int>(B.rows());
    BlockPartition bp;
    bp.x_idx.assign(coupling_state.begin(), coupling_state.end());
    std::vector<bool> in_x(n, false);
    for (int i : bp.x_idx) in_x[i] = true;
    for (int i = 0; i < n; ++i)
        if (!in_x[i]) bp.y_idx.push_back(i);
    bp.Bxx = B(bp.x_idx, bp.x_idx);
    bp.Bxy = B(bp.x_idx, bp.y_idx);
    bp.Byy = B(bp.y_idx, bp.y_idx);
    bp.gx = g(bp.x_idx);
    bp.gy = g(bp.y_idx);
    return bp;
}

inline BlockPartition split_blocks(const RegionLinearization& lin, std::span<const int> coupling_state) {
    return split_blocks(lin.B, lin.g, coupling_state);
}

/// Region data after eliminating the local variables.
struct CondensedRegion {
    BlockPartition blocks;
    Eigen::LDLT<Eigen::MatrixXd> Byy_factor;
    Eigen::MatrixXd B_bar;
    Eigen::VectorXd g_bar;
};

namespace detail {

template <typename Factor>
void require_success(const Factor& f, const char* what) {
    if (f.info() != Eigen::Success) throw NumericalBreakdown(std::string("factorization of ") + what + " failed");
}

inline Eigen::LDLT<Eigen::MatrixXd> spd_factor(const Eigen::MatrixXd& M, const char* what) {
    Eigen::LDLT<Eigen::MatrixXd> f(M);
    require_success(f, what);
    if (M.rows() > 0 && !(f.vectorD().minCoeff() > 0.0))
        throw NumericalBreakdown(std::string(what) + " is not positive definite");
    return f;
}

}  // namespace detail

/// Schur complement onto the coupling block:
///     B_bar = Bxx - Bxy Byy^-1 Byx,   g_bar = gx - Bxy Byy^-1 gy.
/// The factorization of Byy is kept for the recovery step.
inline CondensedRegion schur_condense(BlockPartition blocks) {
    CondensedRegion cr;
    cr.Byy_factor = detail::spd_factor(blocks.Byy, "local Hessian block");
    if (blocks.y_idx.empty()) {
        cr.B_bar = blocks.Bxx;
        cr.g_bar = blocks.gx;
    } else {
        const Eigen::MatrixXd W = cr.Byy_factor.solve(blocks.Bxy.transpose());  // Byy^-1 Byx
        cr.B_bar = blocks.Bxx - blocks.Bxy * W;
        cr.B_bar = 0.5 * (cr.B_bar + cr.B_bar.transpose()).eval();
        cr.g_bar = blocks.gx - W.transpose() * blocks.gy;
    }
    cr.blocks = std::move(blocks);
    return cr;
}

/// Full-space step given the coupling step dx: the local block follows from
///     dy = Byy^-1 (-gy - Byx dx).
inline Eigen::VectorXd recover_from_coupling(const CondensedRegion& cr, const Eigen::VectorXd& dx) {
    const auto& bp = cr.blocks;
    const auto nx = bp.x_idx.size(), ny = bp.y_idx.size();
    Eigen::VectorXd step(nx + ny);
    if (ny > 0) {
        const Eigen::VectorXd dy = nx > 0 ? Eigen::VectorXd(cr.Byy_factor.solve(-bp.gy - bp.Bxy.transpose() * dx))
                                          : Eigen::VectorXd(cr.Byy_factor.solve(-bp.gy));
        step(bp.y_idx) = dy;
    }
    if (nx > 0) step(bp.x_idx) = dx;
    return step;
}

/// Full-space step of the recovery update
///     chi+ = B^-1 (B chi - g - A^T lambda) = chi + B^-1 (-g - A^T lambda),
/// solved through the block factorization of B (Byy factor and the factor
/// of its Schur complement B_bar).
inline Eigen::VectorXd recover_step(const CondensedRegion& cr, const Eigen::LDLT<Eigen::MatrixXd>& B_bar_factor,
                                    const Eigen::VectorXd& lambda) {
    Eigen::VectorXd dx = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(cr.blocks.x_idx.size()));
    if (dx.size() > 0) dx = B_bar_factor.solve(-cr.g_bar - lambda);
    return recover_from_coupling(cr, dx);
}

inline Eigen::VectorXd recover_local(const Eigen::VectorXd& chi, const CondensedRegion& cr,
                                     const Eigen::LDLT<Eigen::MatrixXd>& B_bar_factor, const Eigen::VectorXd& lambda) {
    return chi + recover_step(cr, B_bar_factor, lambda);
}

}  // namespace hdsqp

#endif
