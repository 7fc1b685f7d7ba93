#ifndef HDSQP_COMM_HPP
#define HDSQP_COMM_HPP

// In-process message passing for the consensus step. Regions and the
// coordinator exchange flat double arrays through per-direction queues;
// the arithmetic is the same as the direct pass, so results match it
// bit for bit.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <optional>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "hdsqp/driver.hpp"
#include "hdsqp/hdqp.hpp"
#include "hdsqp/partition.hpp"

namespace hdsqp {

struct Message {
    int region = 0;
    std::vector<double> payload;
};

/// FIFO of messages in one direction.
class MessageQueue {
public:
    void send(Message m) { q_.push_back(std::move(m)); ++sent_; }

    Message receive() {
        if (q_.empty()) throw std::logic_error("receive on empty queue");
        Message m = std::move(q_.front());
        q_.pop_front();
        ++received_;
        return m;
    }

    bool empty() const { return q_.empty(); }
    std::int64_t sent() const { return sent_; }
    std::int64_t received() const { return received_; }

private:
    std::deque<Message> q_;
    std::int64_t sent_ = 0, received_ = 0;
};

struct RegionTraffic {
    std::int64_t floats_up = 0;
    std::int64_t floats_down = 0;
};

struct CommLedger {
    std::vector<std::vector<RegionTraffic>> per_iteration;  // [iteration][region]
    std::int64_t total_up = 0;
    std::int64_t total_down = 0;
    std::int64_t coordinator_received = 0;  // floats the coordinator unpacked
    std::int64_t regions_received = 0;      // floats the regions unpacked

    std::int64_t iteration_total(std::size_t k) const {
        std::int64_t s = 0;
        for (const auto& t : per_iteration.at(k)) s += t.floats_up + t.floats_down;
        return s;
    }
};

/// Distinct consensus columns touched by a region.
inline int active_columns(const RegionStructure& r) {
    std::vector<int> c = r.coupling_z;
    std::sort(c.begin(), c.end());
    return static_cast<int>(std::unique(c.begin(), c.end()) - c.begin());
}

namespace detail {

inline std::vector<double> pack(const ConsensusContribution& c) {
    const auto n = static_cast<Eigen::Index>(c.cols.size());
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(n * n + n));
    for (Eigen::Index a = 0; a < n; ++a)
        for (Eigen::Index b = 0; b < n; ++b) out.push_back(c.block(a, b));
    for (Eigen::Index a = 0; a < n; ++a) out.push_back(c.rhs[a]);
    return out;
}

inline ConsensusContribution unpack(const std::vector<double>& payload, const std::vector<int>& cols) {
    const auto n = static_cast<Eigen::Index>(cols.size());
    if (static_cast<Eigen::Index>(payload.size()) != n * n + n) throw std::logic_error("malformed upload");
    ConsensusContribution c;
    c.cols = cols;
    c.block.resize(n, n);
    c.rhs.resize(n);
    std::size_t k = 0;
    for (Eigen::Index a = 0; a < n; ++a)
        for (Eigen::Index b = 0; b < n; ++b) c.block(a, b) = payload[k++];
    for (Eigen::Index a = 0; a < n; ++a) c.rhs[a] = payload[k++];
    return c;
}

inline std::vector<int> sorted_columns(const ConsensusRegion& r) {
    std::vector<int> c = r.z_cols;
    std::sort(c.begin(), c.end());
    return c;
}

}  // namespace detail

/// Inner solver that routes the consensus step through message queues and
/// records the traffic in `ledger`.
inline InnerSolver message_passing_inner(CommLedger& ledger) {
    return [&ledger](const ConsensusQP& qp, std::int64_t& comm) {
        const int n_reg = static_cast<int>(qp.regions.size());
        MessageQueue up, down;
        std::vector<RegionTraffic> traffic(n_reg);

        // regions: local solve, upload packed z-block and weighted vector
        ConsensusSolution sol;
        sol.x_bar = local_unconstrained(qp);
        for (int l = 0; l < n_reg; ++l) {
            if (qp.regions[l].n_cpl() == 0) continue;
            Message m{l, detail::pack(consensus_contribution(qp.regions[l], sol.x_bar[l]))};
            traffic[l].floats_up = static_cast<std::int64_t>(m.payload.size());
            up.send(std::move(m));
        }

        // coordinator: receive in region order, reduce, solve, send slices
        std::vector<std::vector<int>> cols(n_reg);
        std::vector<ConsensusContribution> parts;
        while (!up.empty()) {
            Message m = up.receive();
            cols[m.region] = detail::sorted_columns(qp.regions[m.region]);
            ledger.coordinator_received += static_cast<std::int64_t>(m.payload.size());
            parts.push_back(detail::unpack(m.payload, cols[m.region]));
        }
        const Eigen::VectorXd z = solve_consensus(accumulate(parts, qp.n_z));
        for (int l = 0; l < n_reg; ++l) {
            if (qp.regions[l].n_cpl() == 0) continue;
            Message m{l, {}};
            for (int c : cols[l]) m.payload.push_back(z[c]);
            traffic[l].floats_down = static_cast<std::int64_t>(m.payload.size());
            down.send(std::move(m));
        }

        // regions: rebuild the z slice, dual and coupling updates
        sol.z_bar = Eigen::VectorXd::Zero(qp.n_z);
        std::vector<Eigen::VectorXd> local_z(n_reg, Eigen::VectorXd::Zero(qp.n_z));
        while (!down.empty()) {
            Message m = down.receive();
            ledger.regions_received += static_cast<std::int64_t>(m.payload.size());
            for (std::size_t j = 0; j < cols[m.region].size(); ++j) {
                local_z[m.region][cols[m.region][j]] = m.payload[j];
                sol.z_bar[cols[m.region][j]] = m.payload[j];
            }
        }
        for (int l = 0; l < n_reg; ++l) {
            sol.lambda.push_back(dual_update(qp.regions[l], sol.x_bar[l], local_z[l]));
            sol.x_next.push_back(qp.regions[l].expand(local_z[l]));
        }

        comm = 0;
        for (const auto& t : traffic) {
            comm += t.floats_up + t.floats_down;
            ledger.total_up += t.floats_up;
            ledger.total_down += t.floats_down;
        }
        ledger.per_iteration.push_back(std::move(traffic));
        return sol;
    };
}

struct DistributedResult {
    SolveResult result;
    CommLedger ledger;
};

inline DistributedResult run_distributed(const PartitionedProblem& p, const SolverConfig& cfg = {},
                                         const std::optional<StateVector>& ref = std::nullopt) {
    DistributedResult out;
    out.result = detail::outer_loop(p, cfg, ref, message_passing_inner(out.ledger));
    return out;
}

/// Per-iteration flop model: parallel condensation, HDSQP consensus, and
/// the consensus term of a full-dimensional (ALADIN-style) coordinator.
struct CostModel {
    double parallel = 0.0;         // sum_l n_state_l^3
    double consensus = 0.0;        // n_cpl^3
    double full_consensus = 0.0;   // n_state^3
    int n_state = 0;
    int n_cpl = 0;

    double consensus_ratio() const { return full_consensus > 0.0 ? consensus / full_consensus : 0.0; }
};

inline CostModel cost_model(const std::vector<int>& n_state_per_region, const std::vector<int>& n_cpl_per_region) {
    CostModel c;
    for (int n : n_state_per_region) {
        c.parallel += std::pow(static_cast<double>(n), 3);
        c.n_state += n;
    }
    for (int n : n_cpl_per_region) c.n_cpl += n;
    c.consensus = std::pow(static_cast<double>(c.n_cpl), 3);
    c.full_consensus = std::pow(static_cast<double>(c.n_state), 3);
    return c;
}

inline CostModel cost_model(const PartitionedProblem& p) {
    std::vector<int> ns, nc;
    for (const auto& r : p.regions) {
        ns.push_back(r.n_state());
        nc.push_back(r.n_cpl());
    }
    return cost_model(ns, nc);
}

}  // namespace hdsqp

#endif
