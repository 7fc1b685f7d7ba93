#ifndef HDSQP_NETWORK_HPP
#define HDSQP_NETWORK_HPP

#include <array>
#include <cmath>
#include <complex>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "hdsqp/case_io.hpp"
#include "hdsqp/error.hpp"

namespace hdsqp {

/// Per-bus state components, in the order they appear in a free vector.
enum class Quantity : int { Theta = 0, V = 1, P = 2, Q = 3 };

inline constexpr std::array<Quantity, 4> kQuantities{Quantity::Theta, Quantity::V, Quantity::P, Quantity::Q};

/// Copy buses carry a neighbour's voltage and have no balance equations.
enum class BusKind { PQ, PV, Slack, Copy };

/// A bus duplicated from another region. Quantities fixed at the original
/// bus stay fixed at the copy.
struct CopyBus {
    int bus_id = 0;
    std::optional<double> theta_fixed;  // radians
    std::optional<double> v_fixed;
};

using SparseRowMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

struct NetworkModel {
    int n_bus = 0;
    double base_mva = 100.0;
    std::vector<int> bus_id;
    std::vector<BusKind> kind;

    // Y = G + jB; identical sparsity pattern, symmetric pattern.
    SparseRowMatrix G;
    SparseRowMatrix B;

    Eigen::VectorXd p_spec, q_spec, v_spec, theta_spec;
    std::vector<std::array<bool, 4>> fixed;    // indexed by Quantity
    std::vector<std::array<int, 4>> free_col;  // -1 when not a free entry

    int n_free = 0;
    int n_rows = 0;
    std::vector<int> p_row;  // residual row of bus i's p balance, -1 for copies

    bool is_free(int bus, Quantity q) const { return free_col[bus][static_cast<int>(q)] >= 0; }
    int col(int bus, Quantity q) const { return free_col[bus][static_cast<int>(q)]; }

    std::optional<int> index_of(int id) const {
        for (int i = 0; i < n_bus; ++i)
            if (bus_id[i] == id) return i;
        return std::nullopt;
    }
};

/// Bus voltages and injections. Angles in radians, everything in p.u.
struct StateVector {
    Eigen::VectorXd theta, v, p, q;

    bool operator==(const StateVector& o) const {
        return theta == o.theta && v == o.v && p == o.p && q == o.q;
    }

    Eigen::VectorXd& component(Quantity qty) {
        switch (qty) {
            case Quantity::Theta: return theta;
            case Quantity::V: return v;
            case Quantity::P: return p;
            default: return q;
        }
    }
    const Eigen::VectorXd& component(Quantity qty) const {
        switch (qty) {
            case Quantity::Theta: return theta;
            case Quantity::V: return v;
            case Quantity::P: return p;
            default: return q;
        }
    }
    double& at(int bus, Quantity qty) { return component(qty)[bus]; }
    double at(int bus, Quantity qty) const { return component(qty)[bus]; }

    /// Free entries in the network's column order.
    Eigen::VectorXd free(const NetworkModel& net) const {
        Eigen::VectorXd out(net.n_free);
        for (int i = 0; i < net.n_bus; ++i)
            for (auto qty : kQuantities)
                if (int c = net.col(i, qty); c >= 0) out[c] = at(i, qty);
        return out;
    }

    void set_free(const NetworkModel& net, const Eigen::VectorXd& values) {
        for (int i = 0; i < net.n_bus; ++i)
            for (auto qty : kQuantities)
                if (int c = net.col(i, qty); c >= 0) at(i, qty) = values[c];
    }
};

/// Largest absolute difference over all four components of every bus.
inline double max_abs_diff(const StateVector& a, const StateVector& b) {
    double m = 0.0;
    m = std::max(m, (a.theta - b.theta).lpNorm<Eigen::Infinity>());
    m = std::max(m, (a.v - b.v).lpNorm<Eigen::Infinity>());
    m = std::max(m, (a.p - b.p).lpNorm<Eigen::Infinity>());
    m = std::max(m, (a.q - b.q).lpNorm<Eigen::Infinity>());
    return m;
}

namespace detail {

inline double deg2rad(double deg) { return deg * std::numbers::pi / 180.0; }

}  // namespace detail

/// Assemble the π-model admittance matrix and per-bus specifications.
/// Buses keep the order of `c.buses`; ids listed in `copies` become copy
/// buses. Angles are converted to radians here and nowhere else.
inline NetworkModel build_network(const RawCase& c, std::span<const CopyBus> copies = {}) {
    using cplx = std::complex<double>;
    NetworkModel net;
    const int n = static_cast<int>(c.buses.size());
    if (n == 0) throw InputError("network has no buses");
    net.n_bus = n;
    net.base_mva = c.base_mva;

    std::unordered_map<int, int> index;
    for (int i = 0; i < n; ++i) {
        net.bus_id.push_back(c.buses[i].id);
        index.emplace(c.buses[i].id, i);
    }
    auto idx = [&](int id) {
        auto it = index.find(id);
        if (it == index.end()) throw InputError("reference to unknown bus " + std::to_string(id));
        return it->second;
    };

    std::vector<const CopyBus*> copy_of(n, nullptr);
    for (const auto& cb : copies) copy_of[idx(cb.bus_id)] = &cb;

    // admittance triplets; G and B get the same positions, explicit zeros kept
    std::vector<Eigen::Triplet<double>> gt, bt;
    std::vector<int> degree(n, 0);
    auto add = [&](int i, int k, cplx y) {
        gt.emplace_back(i, k, y.real());
        bt.emplace_back(i, k, y.imag());
    };
    for (int i = 0; i < n; ++i) {
        const auto& b = c.buses[i];
        add(i, i, cplx(b.shunt_g, b.shunt_b) / c.base_mva);
    }
    for (const auto& br : c.branches) {
        if (!br.in_service) continue;
        if (br.r == 0.0 && br.x == 0.0)
            throw InputError("branch " + std::to_string(br.from_bus) + "-" + std::to_string(br.to_bus) +
                             " has zero impedance");
        const int f = idx(br.from_bus);
        const int t = idx(br.to_bus);
        const cplx ys = 1.0 / cplx(br.r, br.x);
        const cplx half_charging(0.0, br.b / 2.0);
        const cplx tap = std::polar(br.tap_ratio, detail::deg2rad(br.phase_shift));
        add(f, f, (ys + half_charging) / std::norm(tap));
        add(t, t, ys + half_charging);
        add(f, t, -ys / std::conj(tap));
        add(t, f, -ys / tap);
        ++degree[f];
        ++degree[t];
    }
    if (n > 1)
        for (int i = 0; i < n; ++i)
            if (degree[i] == 0) throw InputError("bus " + std::to_string(net.bus_id[i]) + " is isolated");

    net.G.resize(n, n);
    net.B.resize(n, n);
    net.G.setFromTriplets(gt.begin(), gt.end());
    net.B.setFromTriplets(bt.begin(), bt.end());

    // specifications
    net.p_spec = Eigen::VectorXd::Zero(n);
    net.q_spec = Eigen::VectorXd::Zero(n);
    net.v_spec = Eigen::VectorXd::Ones(n);
    net.theta_spec = Eigen::VectorXd::Zero(n);
    std::vector<std::optional<double>> v_set(n);
    for (const auto& g : c.generators) {
        if (!g.in_service) continue;
        const int i = idx(g.bus_id);
        net.p_spec[i] += g.p_gen / c.base_mva;
        net.q_spec[i] += g.q_gen / c.base_mva;
        if (!v_set[i]) v_set[i] = g.v_setpoint;
    }

    net.kind.resize(n);
    net.fixed.assign(n, {false, false, false, false});
    net.free_col.assign(n, {-1, -1, -1, -1});
    net.p_row.assign(n, -1);
    int n_slack = 0;
    for (int i = 0; i < n; ++i) {
        const auto& b = c.buses[i];
        net.p_spec[i] -= b.p_demand / c.base_mva;
        net.q_spec[i] -= b.q_demand / c.base_mva;
        net.theta_spec[i] = detail::deg2rad(b.v_ang);
        net.v_spec[i] = b.v_mag;
        auto& fx = net.fixed[i];
        auto set_fixed = [&](Quantity q) { fx[static_cast<int>(q)] = true; };

        if (const auto* cb = copy_of[i]) {
            net.kind[i] = BusKind::Copy;
            net.p_spec[i] = 0.0;
            net.q_spec[i] = 0.0;
            if (cb->theta_fixed) {
                set_fixed(Quantity::Theta);
                net.theta_spec[i] = *cb->theta_fixed;
            }
            if (cb->v_fixed) {
                set_fixed(Quantity::V);
                net.v_spec[i] = *cb->v_fixed;
            }
            continue;
        }

        BusType type = b.type;
        // a voltage-controlled bus without a generator in service is a load bus
        if (type == BusType::PV && !v_set[i]) type = BusType::PQ;
        if (type == BusType::Slack && !v_set[i])
            throw InputError("slack bus " + std::to_string(b.id) + " has no generator in service");
        switch (type) {
            case BusType::PQ:
                net.kind[i] = BusKind::PQ;
                set_fixed(Quantity::P);
                set_fixed(Quantity::Q);
                break;
            case BusType::PV:
                net.kind[i] = BusKind::PV;
                set_fixed(Quantity::P);
                set_fixed(Quantity::V);
                net.v_spec[i] = *v_set[i];
                break;
            case BusType::Slack:
                net.kind[i] = BusKind::Slack;
                set_fixed(Quantity::Theta);
                set_fixed(Quantity::V);
                net.v_spec[i] = *v_set[i];
                ++n_slack;
                break;
        }
    }
    if (n_slack > 1) throw InputError("network has more than one slack bus");

    int col = 0;
    int row = 0;
    for (int i = 0; i < n; ++i) {
        const bool copy = net.kind[i] == BusKind::Copy;
        for (auto qty : kQuantities) {
            const int qi = static_cast<int>(qty);
            const bool injection = qty == Quantity::P || qty == Quantity::Q;
            if (net.fixed[i][qi] || (copy && injection)) continue;
            net.free_col[i][qi] = col++;
        }
        if (!copy) {
            net.p_row[i] = row;
            row += 2;
        }
    }
    net.n_free = col;
    net.n_rows = row;
    return net;
}

/// Flat start: free angles 0, free magnitudes 1 p.u., injections at their
/// specified values; fixed entries take their specifications.
inline StateVector flat_start(const NetworkModel& net) {
    StateVector s;
    const int n = net.n_bus;
    s.theta = Eigen::VectorXd::Zero(n);
    s.v = Eigen::VectorXd::Ones(n);
    s.p = net.p_spec;
    s.q = net.q_spec;
    for (int i = 0; i < n; ++i) {
        if (net.fixed[i][static_cast<int>(Quantity::Theta)]) s.theta[i] = net.theta_spec[i];
        if (net.fixed[i][static_cast<int>(Quantity::V)]) s.v[i] = net.v_spec[i];
    }
    return s;
}

}  // namespace hdsqp

#endif
