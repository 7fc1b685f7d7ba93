#ifndef HDSQP_TESTS_SUPPORT_HPP
#define HDSQP_TESTS_SUPPORT_HPP

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hdsqp/hdsqp.hpp"

namespace testing {

inline std::filesystem::path data_path(const std::string& rel) { return std::filesystem::path(HDSQP_DATA_DIR) / rel; }

inline hdsqp::RawCase ieee(const std::string& name) { return hdsqp::load_case(data_path("cases/" + name + ".m")); }

inline hdsqp::PartitionedProblem fixture(const std::string& name) {
    const auto b = hdsqp::load_manifest(data_path("fixtures/" + name + ".manifest"));
    return hdsqp::partition(b.manifest, b.regions);
}

inline Eigen::MatrixXd random_matrix(std::mt19937_64& rng, int rows, int cols) {
    std::normal_distribution<double> n(0.0, 1.0);
    Eigen::MatrixXd m(rows, cols);
    for (int j = 0; j < cols; ++j)
        for (int i = 0; i < rows; ++i) m(i, j) = n(rng);
    return m;
}

inline Eigen::VectorXd random_vector(std::mt19937_64& rng, int n) { return random_matrix(rng, n, 1).col(0); }

/// Symmetric positive definite with eigenvalues roughly in [shift, shift + 2n].
inline Eigen::MatrixXd random_spd(std::mt19937_64& rng, int n, double shift = 0.5) {
    const Eigen::MatrixXd a = random_matrix(rng, n, n);
    Eigen::MatrixXd s = a * a.transpose() / std::max(1, n) + shift * Eigen::MatrixXd::Identity(n, n);
    return 0.5 * (s + s.transpose());
}

/// Random consensus QP: hyperedges of cardinality [min_card, max_card] over
/// [min_reg, max_reg] regions, each hyperedge owning one z column. Coupling
/// entries inside a region are shuffled so z_cols is not sorted.
inline hdsqp::ConsensusQP random_consensus_qp(std::mt19937_64& rng, int min_reg = 2, int max_reg = 10, int min_card = 2,
                                              int max_card = 4, int max_nz = 30) {
    std::uniform_int_distribution<int> nreg_d(min_reg, max_reg);
    const int n_reg = nreg_d(rng);
    const int card_hi = std::min(max_card, n_reg);
    std::uniform_int_distribution<int> card_d(std::min(min_card, card_hi), card_hi);
    std::uniform_int_distribution<int> nz_d(1, max_nz);
    const int n_z = nz_d(rng);

    std::vector<std::vector<int>> cols(n_reg);
    std::vector<int> regions(n_reg);
    std::iota(regions.begin(), regions.end(), 0);
    for (int c = 0; c < n_z; ++c) {
        std::shuffle(regions.begin(), regions.end(), rng);
        const int card = card_d(rng);
        for (int k = 0; k < card; ++k) cols[regions[k]].push_back(c);
    }
    hdsqp::ConsensusQP qp;
    qp.n_z = n_z;
    for (int l = 0; l < n_reg; ++l) {
        std::shuffle(cols[l].begin(), cols[l].end(), rng);
        const int n = static_cast<int>(cols[l].size());
        qp.regions.push_back(hdsqp::make_consensus_region(random_spd(rng, n), random_vector(rng, n),
                                                          random_vector(rng, n), cols[l]));
    }
    return qp;
}

inline double relative_diff(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    return (a - b).lpNorm<Eigen::Infinity>() / std::max(1.0, b.lpNorm<Eigen::Infinity>());
}

inline Eigen::VectorXd stack(const std::vector<Eigen::VectorXd>& parts) {
    Eigen::Index n = 0;
    for (const auto& p : parts) n += p.size();
    Eigen::VectorXd out(n);
    Eigen::Index off = 0;
    for (const auto& p : parts) {
        out.segment(off, p.size()) = p;
        off += p.size();
    }
    return out;
}

/// Random state near the flat start: angles within +-spread rad, magnitudes
/// within 1 +- spread, free injections perturbed by +-spread.
inline hdsqp::StateVector perturbed_state(const hdsqp::NetworkModel& net, std::mt19937_64& rng, double spread = 0.1) {
    std::uniform_real_distribution<double> u(-spread, spread);
    hdsqp::StateVector s = hdsqp::flat_start(net);
    Eigen::VectorXd x = s.free(net);
    for (int i = 0; i < net.n_bus; ++i)
        for (auto qty : hdsqp::kQuantities)
            if (net.is_free(i, qty)) x[net.col(i, qty)] += u(rng);
    s.set_free(net, x);
    return s;
}

/// Random uncondensed consensus problem: every region gets an SPD Hessian
/// over n_state entries, of which a random subset couples to z. Each z
/// column is shared by 2..4 regions.
struct RandomFullQp {
    std::vector<hdsqp::FullQpRegion> regions;
    int n_z = 0;
};

inline RandomFullQp random_full_qp(std::mt19937_64& rng, int max_reg = 6, int max_nz = 12, int max_local = 8) {
    std::uniform_int_distribution<int> nreg_d(2, max_reg), nz_d(1, max_nz), loc_d(0, max_local);
    RandomFullQp out;
    const int n_reg = nreg_d(rng);
    out.n_z = nz_d(rng);
    std::uniform_int_distribution<int> card_d(2, std::min(4, n_reg));
    std::vector<std::vector<int>> cols(n_reg);
    std::vector<int> regions(n_reg);
    std::iota(regions.begin(), regions.end(), 0);
    for (int c = 0; c < out.n_z; ++c) {
        std::shuffle(regions.begin(), regions.end(), rng);
        const int card = card_d(rng);
        for (int k = 0; k < card; ++k) cols[regions[k]].push_back(c);
    }
    for (int l = 0; l < n_reg; ++l) {
        const int nc = static_cast<int>(cols[l].size());
        const int n = nc + loc_d(rng);
        std::vector<int> idx(n);
        std::iota(idx.begin(), idx.end(), 0);
        std::shuffle(idx.begin(), idx.end(), rng);
        hdsqp::FullQpRegion r;
        r.B = random_spd(rng, n, 0.2);
        r.g = random_vector(rng, n);
        r.chi_k = random_vector(rng, n);
        r.coupling_state.assign(idx.begin(), idx.begin() + nc);
        r.coupling_z = cols[l];
        out.regions.push_back(std::move(r));
    }
    return out;
}

/// Condense every region of a full QP and build its consensus QP.
inline std::pair<hdsqp::ConsensusQP, std::vector<hdsqp::CondensedRegion>> condense_full_qp(const RandomFullQp& f) {
    hdsqp::ConsensusQP qp;
    qp.n_z = f.n_z;
    std::vector<hdsqp::CondensedRegion> cond;
    for (const auto& r : f.regions) {
        auto cr = hdsqp::schur_condense(hdsqp::split_blocks(r.B, r.g, r.coupling_state));
        Eigen::VectorXd xk(r.coupling_state.size());
        for (std::size_t j = 0; j < r.coupling_state.size(); ++j) xk[j] = r.chi_k[r.coupling_state[j]];
        qp.regions.push_back(hdsqp::make_consensus_region(cr.B_bar, cr.g_bar, xk, r.coupling_z));
        cond.push_back(std::move(cr));
    }
    return {std::move(qp), std::move(cond)};
}

inline Eigen::VectorXd residual_at(const hdsqp::NetworkModel& net, hdsqp::StateVector s, const Eigen::VectorXd& x) {
    s.set_free(net, x);
    return hdsqp::residual(net, s);
}

inline Eigen::MatrixXd fd_jacobian(const hdsqp::NetworkModel& net, const hdsqp::StateVector& s, double h = 1e-7) {
    const Eigen::VectorXd x = s.free(net);
    Eigen::MatrixXd J(net.n_rows, net.n_free);
    for (int j = 0; j < net.n_free; ++j) {
        Eigen::VectorXd xp = x, xm = x;
        xp[j] += h;
        xm[j] -= h;
        J.col(j) = (residual_at(net, s, xp) - residual_at(net, s, xm)) / (2.0 * h);
    }
    return J;
}

inline Eigen::VectorXd gradient_at(const hdsqp::NetworkModel& net, hdsqp::StateVector s, const Eigen::VectorXd& x) {
    s.set_free(net, x);
    return hdsqp::jacobian(net, s).transpose() * hdsqp::residual(net, s);
}

// Hessian of f by central differences of the analytic gradient.
inline Eigen::MatrixXd fd_hessian(const hdsqp::NetworkModel& net, const hdsqp::StateVector& s, double h = 1e-6) {
    const Eigen::VectorXd x = s.free(net);
    Eigen::MatrixXd H(net.n_free, net.n_free);
    for (int j = 0; j < net.n_free; ++j) {
        Eigen::VectorXd xp = x, xm = x;
        xp[j] += h;
        xm[j] -= h;
        H.col(j) = (gradient_at(net, s, xp) - gradient_at(net, s, xm)) / (2.0 * h);
    }
    return 0.5 * (H + H.transpose());
}

/// Solved state read from a `.solution` file (bus id, Vm, Va in degrees);
/// free injections take their computed values.
inline hdsqp::StateVector solved_state(const hdsqp::NetworkModel& net, const std::string& name) {
    std::ifstream in(data_path("cases/" + name + ".solution"));
    if (!in) throw std::runtime_error("missing solution file for " + name);
    hdsqp::StateVector s = hdsqp::flat_start(net);
    std::string line;
    int n = 0;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '%') continue;
        std::istringstream row(line);
        int id;
        double vm, va;
        row >> id >> vm >> va;
        const int i = *net.index_of(id);
        s.v[i] = vm;
        s.theta[i] = hdsqp::detail::deg2rad(va);
        ++n;
    }
    if (n != net.n_bus) throw std::runtime_error("incomplete solution file for " + name);
    const auto inj = hdsqp::injections(net, s);
    for (int i = 0; i < net.n_bus; ++i) {
        if (net.is_free(i, hdsqp::Quantity::P)) s.p[i] = inj.p[i];
        if (net.is_free(i, hdsqp::Quantity::Q)) s.q[i] = inj.q[i];
    }
    return s;
}

}  // namespace testing

#endif
