#include <catch_amalgamated.hpp>

#include <set>
#include <tuple>

#include "support.hpp"

using namespace hdsqp;
using Catch::Matchers::ContainsSubstring;

namespace {

RawCase line_region(int first_id, bool slack) {
    RawCase c;
    c.buses = {RawBus{.id = first_id, .type = slack ? BusType::Slack : BusType::PQ, .p_demand = 10, .base_kv = 230},
               RawBus{.id = first_id + 1, .type = BusType::PQ, .p_demand = 20, .q_demand = 5, .base_kv = 230}};
    if (slack) c.generators = {RawGenerator{.bus_id = first_id, .p_gen = 60}};
    c.branches = {RawBranch{.from_bus = first_id, .to_bus = first_id + 1, .r = 0.01, .x = 0.08}};
    return c;
}

int rank(const Eigen::MatrixXd& m) { return m.size() == 0 ? 0 : static_cast<int>(Eigen::FullPivLU<Eigen::MatrixXd>(m).rank()); }

void check_zero_one_rows(const Eigen::MatrixXd& m) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        CHECK(m.row(i).sum() == 1.0);
        CHECK(m.row(i).cwiseAbs().maxCoeff() == 1.0);
        CHECK((m.row(i).array() != 0.0).count() == 1);
    }
}

}  // namespace

TEST_CASE("Fig. 1 two-region example") {
    const auto p = testing::fixture("fig1");
    REQUIRE(p.regions.size() == 2);
    const auto& r1 = p.regions[0];
    const auto& r2 = p.regions[1];
    CHECK(r1.n_core == 3);
    CHECK(r1.net.n_bus == 4);  // cores 1, 2, 3 and a copy of bus 4
    CHECK(r2.net.n_bus == 4);
    CHECK(r1.net.kind[3] == BusKind::Copy);

    // each physical boundary bus is one hyperedge with a core and a copy instance
    REQUIRE(p.hypergraph.edges.size() == 2);
    for (const auto& e : p.hypergraph.edges) CHECK(e.members.size() == 2);
    CHECK(p.n_z() == 4);

    // x_1 = (theta3 core, theta4 copy, v3 core, v4 copy)
    using enum Quantity;
    const std::vector<int> x1{r1.net.col(2, Theta), r1.net.col(3, Theta), r1.net.col(2, V), r1.net.col(3, V)};
    CHECK(r1.coupling_state == x1);
    // region 2 mirrored: bus 3 is its copy (local 3), bus 4 its first core bus
    const std::vector<int> x2{r2.net.col(3, Theta), r2.net.col(0, Theta), r2.net.col(3, V), r2.net.col(0, V)};
    CHECK(r2.coupling_state == x2);
    CHECK(r1.coupling_z == r2.coupling_z);

    const auto d = consensus_dims(p);
    CHECK(d.n_cpl == 8);
    CHECK(d.n_z == 4);
    CHECK(rank(p.stacked_incidence()) == 4);
}

TEST_CASE("single region has no coupling") {
    const auto p = testing::fixture("case14_single");
    CHECK(p.hypergraph.edges.empty());
    CHECK(p.n_z() == 0);
    CHECK(p.regions[0].n_cpl() == 0);
    CHECK(p.regions[0].selector().rows() == 0);
    CHECK(p.stacked_incidence().size() == 0);
    CHECK(consensus_dims(p).n_cpl == 0);
}

TEST_CASE("three regions sharing one physical bus form one hyperedge") {
    MergeManifest m;
    m.region_files = {"a", "b", "c"};
    m.slack_region = 0;
    // bus 2 of region 1 is tied to region 0 and to region 2
    m.interconnections = {{0, 2, 1, 2, 0.01, 0.05, 0, 1, 0}, {2, 1, 1, 2, 0.01, 0.05, 0, 1, 0}};
    const std::vector<RawCase> raw{line_region(1, true), line_region(1, false), line_region(1, false)};
    const auto p = partition(m, raw);

    const Hyperedge* shared = nullptr;
    for (const auto& e : p.hypergraph.edges)
        if (e.home == BusInstance{1, 1}) shared = &e;
    REQUIRE(shared != nullptr);
    CHECK(shared->members.size() == 3);
    std::set<int> regions;
    for (const auto& mi : shared->members) regions.insert(mi.region);
    CHECK(regions == std::set<int>{0, 1, 2});
    CHECK(hyperedge_histogram(p.hypergraph) == std::map<int, int>{{2, 2}, {3, 1}});

    // row counts: region 0 holds its boundary core and one copy, region 1 its core and two copies
    CHECK(p.regions[0].n_cpl() == 4);
    CHECK(p.regions[1].n_cpl() == 6);
    CHECK(p.regions[2].n_cpl() == 4);
    const Eigen::MatrixXd E = p.stacked_incidence();
    CHECK(E.rows() == 14);
    CHECK(E.cols() == 6);
    CHECK(rank(E) == E.cols());
    const Eigen::VectorXd mult = (E.transpose() * E).diagonal();
    CHECK(mult.minCoeff() >= 2.0);
    CHECK(mult.maxCoeff() == 3.0);
}

TEST_CASE("scaled fixtures have the expected coupling counts") {
    CHECK(consensus_dims(testing::fixture("case53_3reg")).n_cpl == 40);
    CHECK(consensus_dims(testing::fixture("case418_2reg")).n_cpl == 24);
    CHECK(consensus_dims(testing::fixture("case1180_10reg")).n_cpl == 88);
}

TEST_CASE("selector and incidence structure") {
    for (auto name : {"fig1", "case53_3reg", "case418_2reg", "case1180_10reg"}) {
        INFO(name);
        const auto p = testing::fixture(name);
        const auto d = consensus_dims(p);
        int rows = 0;
        for (const auto& rs : p.regions) {
            const Eigen::MatrixXd A = rs.selector();
            const Eigen::MatrixXd E = rs.incidence(p.n_z());
            check_zero_one_rows(A);
            check_zero_one_rows(E);
            // A'A is a diagonal 0/1 projector
            const Eigen::MatrixXd P = A.transpose() * A;
            CHECK((P - Eigen::MatrixXd(P.diagonal().asDiagonal())).cwiseAbs().maxCoeff() == 0.0);
            CHECK((P * P - P).cwiseAbs().maxCoeff() == 0.0);
            CHECK((A * A.transpose() - Eigen::MatrixXd::Identity(rs.n_cpl(), rs.n_cpl())).cwiseAbs().maxCoeff() == 0.0);
            rows += rs.n_cpl();
        }
        CHECK(rows == d.n_cpl);
        const Eigen::MatrixXd E = p.stacked_incidence();
        CHECK(E.rows() == d.n_cpl);
        CHECK(rank(E) == p.n_z());
        CHECK((E.transpose() * E).diagonal().minCoeff() >= 2.0);
    }
}

TEST_CASE("coupling entries are the voltages of hyperedge buses") {
    const auto p = testing::fixture("case53_3reg");
    for (int r = 0; r < static_cast<int>(p.regions.size()); ++r) {
        const auto& rs = p.regions[r];
        std::set<int> expected;
        for (const auto& e : p.hypergraph.edges)
            for (const auto& m : e.members)
                if (m.region == r)
                    for (auto qty : {Quantity::Theta, Quantity::V})
                        if (e.z_col[static_cast<int>(qty)] >= 0) expected.insert(rs.net.col(m.local, qty));
        CHECK(std::set<int>(rs.coupling_state.begin(), rs.coupling_state.end()) == expected);
        CHECK(expected.size() == rs.coupling_state.size());
    }
    // every copy bus belongs to exactly one hyperedge
    std::map<BusInstance, int> seen;
    for (const auto& e : p.hypergraph.edges)
        for (const auto& m : e.members) ++seen[m];
    for (int r = 0; r < static_cast<int>(p.regions.size()); ++r)
        for (int i = p.regions[r].n_core; i < p.regions[r].net.n_bus; ++i) CHECK(seen[{r, i}] == 1);
    for (const auto& [inst, count] : seen) CHECK(count == 1);
}

TEST_CASE("cores cover the merged case disjointly") {
    const auto p = testing::fixture("case1180_10reg");
    const int n = static_cast<int>(p.merged.merged.buses.size());
    CHECK(n == 1180);
    REQUIRE(static_cast<int>(p.core_of_merged.size()) == n);
    std::set<BusInstance> cores;
    int total = 0;
    for (const auto& rs : p.regions) total += rs.n_core;
    for (const auto& c : p.core_of_merged) cores.insert(c);
    CHECK(static_cast<int>(cores.size()) == n);
    CHECK(total == n);
    for (int m = 0; m < n; ++m) {
        const auto [r, i] = p.core_of_merged[m];
        CHECK(p.regions[r].origin_merged[i] == m);
    }
}

TEST_CASE("partition then re-merge reproduces the merged case") {
    for (auto name : {"fig1", "case53_3reg", "case418_2reg"}) {
        INFO(name);
        const auto bundle = hdsqp::load_manifest(testing::data_path(std::string("fixtures/") + name + ".manifest"));
        const auto p = partition(bundle.manifest, bundle.regions);
        const auto& merged = p.merged.merged;
        using Key = std::tuple<int, int, double, double, double>;
        std::multiset<Key> expected, rebuilt;
        for (const auto& br : merged.branches)
            expected.insert({static_cast<int>(*merged.bus_index(br.from_bus)), static_cast<int>(*merged.bus_index(br.to_bus)),
                             br.r, br.x, br.b});
        // internal branches through each region's core map, ties through core_of_merged
        for (std::size_t r = 0; r < p.regions.size(); ++r) {
            const auto& raw = p.merged.regions[r];
            for (const auto& br : raw.branches)
                rebuilt.insert({p.regions[r].origin_merged[*raw.bus_index(br.from_bus)],
                                p.regions[r].origin_merged[*raw.bus_index(br.to_bus)], br.r, br.x, br.b});
        }
        for (const auto& l : bundle.manifest.interconnections) {
            const int f = p.regions[l.from_region].origin_merged[*p.merged.regions[l.from_region].bus_index(l.from_bus)];
            const int t = p.regions[l.to_region].origin_merged[*p.merged.regions[l.to_region].bus_index(l.to_bus)];
            CHECK(p.core_of_merged[f].region != p.core_of_merged[t].region);
            rebuilt.insert({f, t, l.r, l.x, l.b});
        }
        CHECK(rebuilt == expected);
        int m = 0;
        for (std::size_t r = 0; r < p.regions.size(); ++r)
            for (int i = 0; i < p.regions[r].n_core; ++i, ++m)
                CHECK(p.regions[r].net.bus_id[i] + p.merged.id_offset[r] == merged.buses[m].id);
        CHECK(m == static_cast<int>(merged.buses.size()));
    }
}

TEST_CASE("tie lines appear in both end regions between a core and a copy") {
    const auto p = testing::fixture("fig1");
    // region 1: copy of bus 4 is adjacent only to core bus 3
    const Eigen::MatrixXd B1(p.regions[0].net.B);
    CHECK(B1(3, 2) != 0.0);
    CHECK(B1(3, 0) == 0.0);
    CHECK(B1(3, 1) == 0.0);
    const Eigen::MatrixXd B2(p.regions[1].net.B);
    CHECK(B2(3, 0) != 0.0);
    CHECK(B2(0, 3) == B1(2, 3));
}

TEST_CASE("copies inherit quantities fixed at the core") {
    MergeManifest m;
    m.region_files = {"a", "b"};
    m.slack_region = 0;
    m.interconnections = {{0, 1, 1, 2, 0.01, 0.05, 0, 1, 0}};  // slack bus 1 of region 0 is a boundary bus
    const auto p = partition(m, {line_region(1, true), line_region(1, false)});
    const auto& r1 = p.regions[1];
    const int copy = r1.n_core;  // copy of the slack
    CHECK(r1.net.kind[copy] == BusKind::Copy);
    CHECK_FALSE(r1.net.is_free(copy, Quantity::Theta));
    CHECK_FALSE(r1.net.is_free(copy, Quantity::V));
    // the slack hyperedge carries no consensus columns, the other one two
    CHECK(p.n_z() == 2);
}

TEST_CASE("partition errors") {
    SECTION("base voltage conflict across a plain tie") {
        MergeManifest m;
        m.region_files = {"a", "b"};
        m.slack_region = 0;
        m.interconnections = {{0, 2, 1, 1, 0.01, 0.05, 0, 1, 0}};
        auto b = line_region(1, false);
        b.buses[0].base_kv = 115;
        CHECK_THROWS_WITH(partition(m, {line_region(1, true), b}), ContainsSubstring("base voltage"));
        m.interconnections[0].tap_ratio = 0.98;  // a transformer tie is fine
        CHECK_NOTHROW(partition(m, {line_region(1, true), b}));
    }
    SECTION("region without core buses") {
        MergeManifest m;
        m.region_files = {"a", "b"};
        m.slack_region = 0;
        CHECK_THROWS_WITH(partition(m, {line_region(1, true), RawCase{}}), ContainsSubstring("no core buses"));
    }
}

TEST_CASE("stitch and scatter are inverse on consistent states") {
    const auto p = testing::fixture("case53_3reg");
    const auto net = build_network(p.merged.merged);
    std::mt19937_64 rng(8);
    const auto s = testing::perturbed_state(net, rng);
    const auto parts = scatter(p, s);
    CHECK(max_abs_diff(stitch(p, parts), s) == 0.0);
    // consensus holds for the scattered state
    for (std::size_t l = 0; l < p.regions.size(); ++l) {
        const auto& rs = p.regions[l];
        Eigen::VectorXd z(p.n_z());
        for (const auto& e : p.hypergraph.edges) {
            if (e.z_col[0] >= 0) z[e.z_col[0]] = s.theta[e.merged_bus];
            if (e.z_col[1] >= 0) z[e.z_col[1]] = s.v[e.merged_bus];
        }
        CHECK((rs.coupling(parts[l].free(rs.net)) - rs.expand(z)).cwiseAbs().maxCoeff() == 0.0);
    }
}

TEST_CASE("partitioning is deterministic") {
    const auto a = testing::fixture("case1180_10reg");
    const auto b = testing::fixture("case1180_10reg");
    for (std::size_t l = 0; l < a.regions.size(); ++l) {
        CHECK(a.regions[l].coupling_state == b.regions[l].coupling_state);
        CHECK(a.regions[l].coupling_z == b.regions[l].coupling_z);
    }
}
