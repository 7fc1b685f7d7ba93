#ifndef HDSQP_RESIDUAL_HPP
#define HDSQP_RESIDUAL_HPP

// Power-flow residuals in polar coordinates and their derivatives.
//
// For every non-copy bus i, rows 2i' and 2i'+1 (i' = position among
// non-copy buses) hold
//
//     r_p,i = p_i - v_i sum_k v_k (G_ik cos t_ik + B_ik sin t_ik)
//     r_q,i = q_i - v_i sum_k v_k (G_ik sin t_ik - B_ik cos t_ik)
//
// with t_ik = theta_i - theta_k. Columns are the free state entries.

#include <cmath>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "hdsqp/network.hpp"

namespace hdsqp {

using SparseMatrix = Eigen::SparseMatrix<double>;

/// Computed injections P_i(theta, v) and Q_i(theta, v) at every bus.
struct Injections {
    Eigen::VectorXd p, q;
};

inline Injections injections(const NetworkModel& net, const StateVector& s) {
    Injections out{Eigen::VectorXd::Zero(net.n_bus), Eigen::VectorXd::Zero(net.n_bus)};
    for (int i = 0; i < net.n_bus; ++i) {
        SparseRowMatrix::InnerIterator g(net.G, i), b(net.B, i);
        double sp = 0.0, sq = 0.0;
        for (; g; ++g, ++b) {
            const int k = g.col();
            const double t = s.theta[i] - s.theta[k];
            const double ct = std::cos(t), st = std::sin(t);
            sp += s.v[k] * (g.value() * ct + b.value() * st);
            sq += s.v[k] * (g.value() * st - b.value() * ct);
        }
        out.p[i] = s.v[i] * sp;
        out.q[i] = s.v[i] * sq;
    }
    return out;
}

inline Eigen::VectorXd residual(const NetworkModel& net, const StateVector& s) {
    const auto inj = injections(net, s);
    Eigen::VectorXd r(net.n_rows);
    for (int i = 0; i < net.n_bus; ++i) {
        const int row = net.p_row[i];
        if (row < 0) continue;
        r[row] = s.p[i] - inj.p[i];
        r[row + 1] = s.q[i] - inj.q[i];
    }
    return r;
}

/// f = 1/2 |r|^2
inline double objective(const NetworkModel& net, const StateVector& s) { return 0.5 * residual(net, s).squaredNorm(); }

/// Analytic Jacobian of `residual` with respect to the free entries.
inline SparseMatrix jacobian(const NetworkModel& net, const StateVector& s) {
    const auto inj = injections(net, s);
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(static_cast<std::size_t>(8 * net.G.nonZeros()));
    auto put = [&](int row, int bus, Quantity q, double value) {
        if (const int c = net.col(bus, q); c >= 0) trip.emplace_back(row, c, value);
    };

    for (int i = 0; i < net.n_bus; ++i) {
        const int rp = net.p_row[i];
        if (rp < 0) continue;
        const int rq = rp + 1;
        const double vi = s.v[i];
        double gii = 0.0, bii = 0.0;
        SparseRowMatrix::InnerIterator g(net.G, i), b(net.B, i);
        for (; g; ++g, ++b) {
            const int k = g.col();
            if (k == i) {
                gii = g.value();
                bii = b.value();
                continue;
            }
            const double t = s.theta[i] - s.theta[k];
            const double ct = std::cos(t), st = std::sin(t);
            const double a = g.value() * ct + b.value() * st;
            const double bb = g.value() * st - b.value() * ct;
            const double vv = vi * s.v[k];
            // r = spec - injection, hence the leading minus signs
            put(rp, k, Quantity::Theta, -vv * bb);
            put(rp, k, Quantity::V, -vi * a);
            put(rq, k, Quantity::Theta, vv * a);
            put(rq, k, Quantity::V, -vi * bb);
        }
        const double pi = inj.p[i], qi = inj.q[i];
        put(rp, i, Quantity::Theta, qi + bii * vi * vi);
        put(rp, i, Quantity::V, -(pi / vi + gii * vi));
        put(rq, i, Quantity::Theta, -(pi - gii * vi * vi));
        put(rq, i, Quantity::V, -(qi / vi - bii * vi));
        put(rp, i, Quantity::P, 1.0);
        put(rq, i, Quantity::Q, 1.0);
    }
    SparseMatrix J(net.n_rows, net.n_free);
    J.setFromTriplets(trip.begin(), trip.end());
    return J;
}

/// Second-order term Q = sum_m r_m * Hessian(r_m) over the free entries.
/// Only used for diagnostics; the solver never forms it.
inline Eigen::MatrixXd q_term(const NetworkModel& net, const StateVector& s) {
    const Eigen::VectorXd r = residual(net, s);
    Eigen::MatrixXd H = Eigen::MatrixXd::Zero(net.n_free, net.n_free);
    auto add = [&](int bus_a, Quantity qa, int bus_b, Quantity qb, double value) {
        const int ca = net.col(bus_a, qa), cb = net.col(bus_b, qb);
        if (ca < 0 || cb < 0) return;
        H(ca, cb) += value;
        if (ca != cb) H(cb, ca) += value;
    };
    using enum Quantity;

    for (int i = 0; i < net.n_bus; ++i) {
        const int rp = net.p_row[i];
        if (rp < 0) continue;
        // Hessian(r) = -Hessian(injection)
        const double wp = -r[rp], wq = -r[rp + 1];
        const double vi = s.v[i];
        SparseRowMatrix::InnerIterator g(net.G, i), b(net.B, i);
        for (; g; ++g, ++b) {
            const int k = g.col();
            if (k == i) {
                add(i, V, i, V, 2.0 * (wp * g.value() - wq * b.value()));
                continue;
            }
            const double t = s.theta[i] - s.theta[k];
            const double ct = std::cos(t), st = std::sin(t);
            const double a = g.value() * ct + b.value() * st;
            const double bb = g.value() * st - b.value() * ct;
            const double vk = s.v[k], vv = vi * vk;
            // term v_i v_k w(t_ik): P uses w = a (w' = -b, w'' = -a), Q uses w = b (w' = a, w'' = -b)
            struct Term {
                double w, d1, d2, weight;
            };
            for (const Term& tm : {Term{a, -bb, -a, wp}, Term{bb, a, -bb, wq}}) {
                const double c = tm.weight;
                add(i, Theta, i, Theta, c * vv * tm.d2);
                add(k, Theta, k, Theta, c * vv * tm.d2);
                add(i, Theta, k, Theta, -c * vv * tm.d2);
                add(i, Theta, i, V, c * vk * tm.d1);
                add(i, Theta, k, V, c * vi * tm.d1);
                add(k, Theta, i, V, -c * vk * tm.d1);
                add(k, Theta, k, V, -c * vi * tm.d1);
                add(i, V, k, V, c * tm.w);
            }
        }
    }
    return H;
}

/// Levenberg-Marquardt Hessian J^T J + eps I.
inline Eigen::MatrixXd lm_hessian(const SparseMatrix& J, double eps) {
    if (!(eps > 0.0)) throw std::invalid_argument("LM regularization must be positive");
    Eigen::MatrixXd B = Eigen::MatrixXd(SparseMatrix(J.transpose() * J));
    B.diagonal().array() += eps;
    return B;
}

inline Eigen::MatrixXd lm_hessian(const Eigen::MatrixXd& J, double eps) {
    if (!(eps > 0.0)) throw std::invalid_argument("LM regularization must be positive");
    Eigen::MatrixXd B = J.transpose() * J;
    B.diagonal().array() += eps;
    return B;
}

/// Residual, Jacobian, gradient and LM Hessian at one iterate.
struct RegionLinearization {
    Eigen::VectorXd r;
    SparseMatrix J;
    Eigen::VectorXd g;  // J^T r
    Eigen::MatrixXd B;  // J^T J + eps I
    double eps = 0.0;
};

inline RegionLinearization linearize(const NetworkModel& net, const StateVector& s, double eps) {
    RegionLinearization lin;
    lin.eps = eps;
    lin.r = residual(net, s);
    lin.J = jacobian(net, s);
    lin.g = lin.J.transpose() * lin.r;
    lin.B = lm_hessian(lin.J, eps);
    return lin;
}

}  // namespace hdsqp

#endif
