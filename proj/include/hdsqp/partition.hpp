#ifndef HDSQP_PARTITION_HPP
#define HDSQP_PARTITION_HPP

// Multi-region decomposition with core and copy buses.
//
// Every tie-line endpoint is copied into the region on the other side of
// the line. A physical bus that appears in several regions (its core
// instance plus one copy per neighbouring region) forms one hyperedge.
// Each free voltage quantity of a hyperedge bus gets one consensus column
// in z; all angle columns come first, then all magnitude columns, with
// hyperedges ordered by (home region, local bus index).

#include <algorithm>
#include <array>
#include <map>
#include <string>
#include <tuple>
#include <vector>

#include <Eigen/Dense>

#include "hdsqp/case_io.hpp"
#include "hdsqp/network.hpp"

namespace hdsqp {

struct BusInstance {
    int region = 0;
    int local = 0;  // bus index inside the region's network

    bool operator==(const BusInstance&) const = default;
    auto operator<=>(const BusInstance&) const = default;
};

struct Hyperedge {
    BusInstance home;                  // the core instance
    int merged_bus = 0;                // index in the merged network
    std::vector<BusInstance> members;  // core first, then copies by region
    std::array<int, 2> z_col{-1, -1};  // consensus columns of (theta, v); -1 when fixed
};

struct Hypergraph {
    std::vector<Hyperedge> edges;
    int n_z = 0;
};

/// One region's sub-network and its coupling maps. Each coupling entry j
/// reads free entry `coupling_state[j]` of chi (the selector A) and equals
/// consensus column `coupling_z[j]` (the incidence E).
struct RegionStructure {
    NetworkModel net;
    int n_core = 0;
    std::vector<int> origin_merged;  // merged bus index of every local bus
    std::vector<int> coupling_state;
    std::vector<int> coupling_z;

    int n_state() const { return net.n_free; }
    int n_cpl() const { return static_cast<int>(coupling_state.size()); }

    Eigen::MatrixXd selector() const {
        Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n_cpl(), n_state());
        for (int j = 0; j < n_cpl(); ++j) A(j, coupling_state[j]) = 1.0;
        return A;
    }

    Eigen::MatrixXd incidence(int n_z) const {
        Eigen::MatrixXd E = Eigen::MatrixXd::Zero(n_cpl(), n_z);
        for (int j = 0; j < n_cpl(); ++j) E(j, coupling_z[j]) = 1.0;
        return E;
    }

    /// x = A chi
    Eigen::VectorXd coupling(const Eigen::VectorXd& chi) const {
        Eigen::VectorXd x(n_cpl());
        for (int j = 0; j < n_cpl(); ++j) x[j] = chi[coupling_state[j]];
        return x;
    }

    /// E z
    Eigen::VectorXd expand(const Eigen::VectorXd& z) const {
        Eigen::VectorXd x(n_cpl());
        for (int j = 0; j < n_cpl(); ++j) x[j] = z[coupling_z[j]];
        return x;
    }
};

struct PartitionedProblem {
    std::vector<RegionStructure> regions;
    Hypergraph hypergraph;
    MergedCase merged;                        // merged case and slack-demoted regional cases
    std::vector<BusInstance> core_of_merged;  // merged bus index -> core instance

    int n_z() const { return hypergraph.n_z; }

    /// Stacked incidence E = [E_1; ...; E_R].
    Eigen::MatrixXd stacked_incidence() const {
        int rows = 0;
        for (const auto& r : regions) rows += r.n_cpl();
        Eigen::MatrixXd E(rows, n_z());
        int off = 0;
        for (const auto& r : regions) {
            E.middleRows(off, r.n_cpl()) = r.incidence(n_z());
            off += r.n_cpl();
        }
        return E;
    }
};

inline PartitionedProblem partition(const MergeManifest& manifest, const std::vector<RawCase>& raw_regions) {
    PartitionedProblem out;
    out.merged = merge_cases(manifest, raw_regions);
    const auto& regions = out.merged.regions;
    const int n_reg = static_cast<int>(regions.size());

    for (int r = 0; r < n_reg; ++r)
        if (regions[r].buses.empty()) throw InputError("region " + std::to_string(r) + " has no core buses");

    // core networks first: needed to know which quantities are fixed at boundary buses
    std::vector<NetworkModel> core_net;
    for (const auto& rc : regions) core_net.push_back(build_network(rc));

    std::vector<int> merged_offset(n_reg, 0);
    for (int r = 1; r < n_reg; ++r) merged_offset[r] = merged_offset[r - 1] + static_cast<int>(regions[r - 1].buses.size());
    for (int r = 0; r < n_reg; ++r)
        for (int i = 0; i < static_cast<int>(regions[r].buses.size()); ++i) out.core_of_merged.push_back({r, i});

    // physical boundary buses (region, core index) and the regions that copy them
    std::map<BusInstance, std::vector<int>> copied_into;
    for (const auto& l : manifest.interconnections) {
        const BusInstance from{l.from_region, static_cast<int>(*regions[l.from_region].bus_index(l.from_bus))};
        const BusInstance to{l.to_region, static_cast<int>(*regions[l.to_region].bus_index(l.to_bus))};
        const auto& fb = regions[from.region].buses[from.local];
        const auto& tb = regions[to.region].buses[to.local];
        if (l.tap_ratio == 1.0 && l.phase_shift == 0.0 && fb.base_kv > 0 && tb.base_kv > 0 && fb.base_kv != tb.base_kv)
            throw InputError("link " + std::to_string(l.from_region) + ":" + std::to_string(l.from_bus) + " - " +
                             std::to_string(l.to_region) + ":" + std::to_string(l.to_bus) +
                             " joins buses of different base voltage without a transformer");
        copied_into[from].push_back(to.region);
        copied_into[to].push_back(from.region);
    }
    for (auto& [bus, regs] : copied_into) {
        std::sort(regs.begin(), regs.end());
        regs.erase(std::unique(regs.begin(), regs.end()), regs.end());
    }

    // region r's copies, ordered by (source region, source bus)
    std::vector<std::vector<BusInstance>> copies(n_reg);
    for (const auto& [bus, regs] : copied_into)
        for (int r : regs) copies[r].push_back(bus);
    for (auto& c : copies) std::sort(c.begin(), c.end());

    std::vector<std::map<BusInstance, int>> local_of(n_reg);  // source instance -> local index
    for (int r = 0; r < n_reg; ++r) {
        RawCase rc = regions[r];
        const int n_core = static_cast<int>(rc.buses.size());
        int next_id = rc.max_bus_id() + 1;
        std::vector<CopyBus> copy_specs;
        for (int c = 0; c < static_cast<int>(copies[r].size()); ++c) {
            const auto src = copies[r][c];
            const auto& src_bus = regions[src.region].buses[src.local];
            const auto& src_net = core_net[src.region];
            RawBus b;
            b.id = next_id++;
            b.type = BusType::PQ;
            b.base_kv = src_bus.base_kv;
            rc.buses.push_back(b);
            CopyBus spec{b.id, std::nullopt, std::nullopt};
            if (src_net.fixed[src.local][static_cast<int>(Quantity::Theta)]) spec.theta_fixed = src_net.theta_spec[src.local];
            if (src_net.fixed[src.local][static_cast<int>(Quantity::V)]) spec.v_fixed = src_net.v_spec[src.local];
            copy_specs.push_back(spec);
            local_of[r][src] = n_core + c;
        }
        for (int i = 0; i < n_core; ++i) local_of[r][BusInstance{r, i}] = i;

        // tie lines in both end regions; the far endpoint is the local copy
        for (const auto& l : manifest.interconnections) {
            if (l.from_region != r && l.to_region != r) continue;
            const BusInstance from{l.from_region, static_cast<int>(*regions[l.from_region].bus_index(l.from_bus))};
            const BusInstance to{l.to_region, static_cast<int>(*regions[l.to_region].bus_index(l.to_bus))};
            RawBranch br;
            br.from_bus = rc.buses[local_of[r].at(from)].id;
            br.to_bus = rc.buses[local_of[r].at(to)].id;
            br.r = l.r;
            br.x = l.x;
            br.b = l.b;
            br.tap_ratio = l.tap_ratio;
            br.phase_shift = l.phase_shift;
            rc.branches.push_back(br);
        }

        RegionStructure rs;
        rs.net = build_network(rc, copy_specs);
        rs.n_core = n_core;
        for (int i = 0; i < n_core; ++i) rs.origin_merged.push_back(merged_offset[r] + i);
        for (const auto& src : copies[r]) rs.origin_merged.push_back(merged_offset[src.region] + src.local);
        out.regions.push_back(std::move(rs));
    }

    // hyperedges: std::map iteration already orders by (region, local)
    auto& hg = out.hypergraph;
    for (const auto& [bus, regs] : copied_into) {
        Hyperedge e;
        e.home = bus;
        e.merged_bus = merged_offset[bus.region] + bus.local;
        e.members.push_back(bus);
        for (int r : regs) e.members.push_back({r, local_of[r].at(bus)});
        hg.edges.push_back(std::move(e));
    }
    int col = 0;
    for (auto qty : {Quantity::Theta, Quantity::V})
        for (auto& e : hg.edges)
            if (out.regions[e.home.region].net.is_free(e.home.local, qty)) e.z_col[static_cast<int>(qty)] = col++;
    hg.n_z = col;

    for (auto qty : {Quantity::Theta, Quantity::V}) {
        for (const auto& e : hg.edges) {
            const int zc = e.z_col[static_cast<int>(qty)];
            if (zc < 0) continue;
            for (const auto& m : e.members) {
                auto& rs = out.regions[m.region];
                rs.coupling_state.push_back(rs.net.col(m.local, qty));
                rs.coupling_z.push_back(zc);
            }
        }
    }
    // within a region, order coupling entries by consensus column
    for (auto& rs : out.regions) {
        std::vector<int> order(rs.coupling_z.size());
        for (std::size_t j = 0; j < order.size(); ++j) order[j] = static_cast<int>(j);
        std::sort(order.begin(), order.end(), [&](int a, int b) { return rs.coupling_z[a] < rs.coupling_z[b]; });
        std::vector<int> st, zc;
        for (int j : order) {
            st.push_back(rs.coupling_state[j]);
            zc.push_back(rs.coupling_z[j]);
        }
        rs.coupling_state = std::move(st);
        rs.coupling_z = std::move(zc);
    }
    return out;
}

struct ConsensusDims {
    int n_state = 0;
    int n_cpl = 0;
    int n_z = 0;
};

inline ConsensusDims consensus_dims(const PartitionedProblem& p) {
    ConsensusDims d;
    for (const auto& r : p.regions) {
        d.n_state += r.n_state();
        d.n_cpl += r.n_cpl();
    }
    d.n_z = p.n_z();
    return d;
}

/// Merged-network state assembled from the core buses of every region.
inline StateVector stitch(const PartitionedProblem& p, const std::vector<StateVector>& region_states) {
    const int n = static_cast<int>(p.core_of_merged.size());
    StateVector s{Eigen::VectorXd(n), Eigen::VectorXd(n), Eigen::VectorXd(n), Eigen::VectorXd(n)};
    for (int m = 0; m < n; ++m) {
        const auto [r, i] = p.core_of_merged[m];
        for (auto qty : kQuantities) s.at(m, qty) = region_states[r].at(i, qty);
    }
    return s;
}

/// Region states (cores and copies) read off a merged-network state.
inline std::vector<StateVector> scatter(const PartitionedProblem& p, const StateVector& merged) {
    std::vector<StateVector> out;
    for (const auto& rs : p.regions) {
        StateVector s = flat_start(rs.net);
        for (int i = 0; i < rs.net.n_bus; ++i) {
            const int m = rs.origin_merged[i];
            s.theta[i] = merged.theta[m];
            s.v[i] = merged.v[m];
            if (i < rs.n_core) {
                s.p[i] = merged.p[m];
                s.q[i] = merged.q[m];
            }
        }
        out.push_back(std::move(s));
    }
    return out;
}

/// Hyperedge cardinality -> number of hyperedges.
inline std::map<int, int> hyperedge_histogram(const Hypergraph& hg) {
    std::map<int, int> h;
    for (const auto& e : hg.edges) ++h[static_cast<int>(e.members.size())];
    return h;
}

}  // namespace hdsqp

#endif
