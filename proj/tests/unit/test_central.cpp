#include <catch_amalgamated.hpp>

#include "support.hpp"

using namespace hdsqp;

TEST_CASE("central LM converges on IEEE cases and matches published voltages") {
    for (auto [name, max_it] : {std::pair{"case14", 10}, std::pair{"case30", 10}, std::pair{"case57", 12}}) {
        INFO(name);
        const auto net = build_network(testing::ieee(name));
        const auto res = central_solve(net);
        REQUIRE(res.status == SolveStatus::Converged);
        CHECK(res.iterations <= max_it);
        CHECK(res.r_norm2.back() <= 1e-10);
        CHECK(res.iterates.size() == res.r_norm2.size());
        CHECK(res.iterates.front() == flat_start(net));

        const auto ref = testing::solved_state(net, name);
        CHECK((res.state.v - ref.v).lpNorm<Eigen::Infinity>() <= 1e-4);
        CHECK((res.state.theta - ref.theta).lpNorm<Eigen::Infinity>() <= 1e-4);
    }
}

TEST_CASE("central LM shows quadratic contraction") {
    const auto res = central_solve(build_network(testing::ieee("case30")));
    REQUIRE(res.status == SolveStatus::Converged);
    std::vector<double> e;
    for (const auto& s : res.iterates) e.push_back(max_abs_diff(s, res.state));
    e.pop_back();
    CHECK(convergence_order(e, 1e-12, 1e-1) >= 1.5);
}

TEST_CASE("already balanced network needs no iterations") {
    RawCase c;
    c.buses = {RawBus{.id = 1, .type = BusType::Slack}, RawBus{.id = 2, .type = BusType::PQ}, RawBus{.id = 3, .type = BusType::PQ}};
    c.generators = {RawGenerator{.bus_id = 1}};
    c.branches = {RawBranch{.from_bus = 1, .to_bus = 2, .x = 0.1}, RawBranch{.from_bus = 2, .to_bus = 3, .x = 0.2}};
    const auto res = central_solve(build_network(c));
    CHECK(res.status == SolveStatus::Converged);
    CHECK(res.iterations == 0);
    CHECK(res.iterates.size() == 1);
}

TEST_CASE("infeasible load ends at the iteration limit") {
    RawCase c;
    c.buses = {RawBus{.id = 1, .type = BusType::Slack}, RawBus{.id = 2, .type = BusType::PQ, .p_demand = 5000, .q_demand = 2000}};
    c.generators = {RawGenerator{.bus_id = 1}};
    c.branches = {RawBranch{.from_bus = 1, .to_bus = 2, .r = 0.02, .x = 0.2}};
    CentralConfig cfg;
    cfg.max_iter = 25;
    const auto res = central_solve(build_network(c), cfg);
    CHECK(res.status != SolveStatus::Converged);
    CHECK(res.r_norm2.back() > 1e-3);
}

TEST_CASE("dense KKT oracle") {
    SECTION("identity Hessians give the plain mean") {
        ConsensusQP qp;
        qp.n_z = 2;
        qp.regions.push_back(make_consensus_region(Eigen::MatrixXd::Identity(2, 2), Eigen::Vector2d::Zero(), Eigen::Vector2d(1, 2), {0, 1}));
        qp.regions.push_back(make_consensus_region(Eigen::MatrixXd::Identity(2, 2), Eigen::Vector2d::Zero(), Eigen::Vector2d(3, 6), {1, 0}));
        const auto k = dense_kkt_solve(qp);
        // column 0 averages 1 and 6, column 1 averages 2 and 3
        CHECK(testing::relative_diff(k.z, Eigen::Vector2d(3.5, 2.5)) <= 1e-14);
        CHECK(testing::relative_diff(k.x[1], Eigen::Vector2d(2.5, 3.5)) <= 1e-14);
        CHECK(testing::relative_diff(k.lambda[0], Eigen::Vector2d(-2.5, -0.5)) <= 1e-14);
    }
    SECTION("no consensus columns") {
        ConsensusQP qp;
        qp.regions.push_back(make_consensus_region(Eigen::MatrixXd(0, 0), Eigen::VectorXd(0), Eigen::VectorXd(0), {}));
        const auto k = dense_kkt_solve(qp);
        CHECK(k.z.size() == 0);
        CHECK(k.x[0].size() == 0);
    }
    SECTION("agrees with the one-pass solver on 1000 random instances") {
        std::mt19937_64 rng(21);
        int worst_trial = -1;
        double worst = 0.0;
        for (int trial = 0; trial < 1000; ++trial) {
            const auto qp = testing::random_consensus_qp(rng);
            const auto sol = hdqp_pass(qp);
            const auto k = dense_kkt_solve(qp);
            const double d = std::max({testing::relative_diff(sol.z_bar, k.z),
                                       testing::relative_diff(testing::stack(sol.lambda), testing::stack(k.lambda)),
                                       testing::relative_diff(testing::stack(sol.x_next), testing::stack(k.x))});
            if (d > worst) {
                worst = d;
                worst_trial = trial;
            }
        }
        INFO("worst trial " << worst_trial);
        CHECK(worst <= 1e-8);
    }
}

TEST_CASE("full QP solve of a single region is the LM step") {
    const auto net = build_network(testing::ieee("case14"));
    std::mt19937_64 rng(22);
    const auto s = testing::perturbed_state(net, rng, 0.05);
    const auto lin = linearize(net, s, 1e-10);
    const auto fq = full_qp_solve({FullQpRegion{lin.B, lin.g, s.free(net), {}, {}}}, 0);
    const Eigen::VectorXd expected = s.free(net) + lin.B.ldlt().solve(-lin.g);
    CHECK(testing::relative_diff(fq.chi[0], expected) <= 1e-8);
}

TEST_CASE("status names") {
    CHECK(std::string(to_string(SolveStatus::Converged)) == "converged");
    CHECK(std::string(to_string(SolveStatus::MaxIter)) == "max_iter");
    CHECK(std::string(to_string(SolveStatus::NumericalBreakdown)) == "numerical_breakdown");
}
