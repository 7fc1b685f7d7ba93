// hdsqp: merge, solve, baseline and check subcommands.

#include <cstdio>
#include <exception>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <Eigen/Dense>

#include "hdsqp/hdsqp.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kInputError = 1;
constexpr int kNotConverged = 2;

hdsqp::PartitionedProblem load_problem(const std::string& manifest) {
    const auto bundle = hdsqp::load_manifest(manifest);
    return hdsqp::partition(bundle.manifest, bundle.regions);
}

void write_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw hdsqp::InputError(path + ": cannot open for writing");
    out << text;
    if (!out) throw hdsqp::InputError(path + ": write failed");
}

int exit_for(hdsqp::SolveStatus s) { return s == hdsqp::SolveStatus::Converged ? kOk : kNotConverged; }

void print_summary(const hdsqp::SolveTrace& t) {
    std::printf("status %s after %zu iterations", hdsqp::to_string(t.status), t.records.size());
    if (!t.records.empty()) std::printf(", |r|_2 = %.3e", t.records.back().r_norm2);
    std::printf("\n");
}

// "hyperedges 2x2" reads: two hyperedges of cardinality two
void print_histogram(const hdsqp::Hypergraph& hg) {
    std::printf("hyperedges");
    for (const auto& [size, count] : hdsqp::hyperedge_histogram(hg)) std::printf(" %dx%d", count, size);
    std::printf("\n");
}

int run_merge(const std::string& manifest, const std::string& out) {
    const auto bundle = hdsqp::load_manifest(manifest);
    const auto merged = hdsqp::merge_cases(bundle.manifest, bundle.regions);
    write_file(out, hdsqp::write_case(merged.merged));
    std::printf("wrote %s: %zu buses, %zu branches\n", out.c_str(), merged.merged.buses.size(),
                merged.merged.branches.size());
    const auto p = hdsqp::partition(bundle.manifest, bundle.regions);
    for (std::size_t r = 0; r < p.regions.size(); ++r) {
        const auto& rs = p.regions[r];
        std::printf("region %zu: %d core, %d copy buses, n_state %d, n_cpl %d\n", r, rs.n_core, rs.net.n_bus - rs.n_core,
                    rs.n_state(), rs.n_cpl());
    }
    print_histogram(p.hypergraph);
    return kOk;
}

struct SolveOptions {
    std::string manifest;
    hdsqp::SolverConfig cfg;
    std::string reference;
    std::string trace;
    std::string state_out;
    bool distributed = false;
};

int run_solve(const SolveOptions& o) {
    const auto p = load_problem(o.manifest);
    std::optional<hdsqp::StateVector> ref;
    if (!o.reference.empty()) {
        const auto merged_net = hdsqp::build_network(p.merged.merged);
        ref = hdsqp::parse_state(merged_net, hdsqp::read_text_file(o.reference));
    }
    hdsqp::SolveResult res;
    if (o.distributed) {
        auto d = hdsqp::run_distributed(p, o.cfg, ref);
        res = std::move(d.result);
        std::printf("consensus traffic: %lld floats up, %lld floats down\n",
                    static_cast<long long>(d.ledger.total_up), static_cast<long long>(d.ledger.total_down));
    } else {
        res = hdsqp::solve(p, o.cfg, ref);
    }
    if (!o.trace.empty()) write_file(o.trace, hdsqp::trace_to_string(res.trace));
    if (!o.state_out.empty()) {
        std::ostringstream os;
        hdsqp::write_state(hdsqp::build_network(p.merged.merged), res.state, os);
        write_file(o.state_out, os.str());
    }
    print_summary(res.trace);
    if (!res.message.empty()) std::fprintf(stderr, "%s\n", res.message.c_str());
    return exit_for(res.trace.status);
}

int run_baseline(const std::string& case_path, const std::string& trace, const std::string& state_out) {
    const auto net = hdsqp::build_network(hdsqp::load_case(case_path));
    const auto res = hdsqp::central_solve(net);
    hdsqp::SolveTrace t;
    t.status = res.status;
    for (std::size_t k = 1; k < res.iterates.size(); ++k) {
        hdsqp::IterationRecord r;
        r.iter = static_cast<int>(k);
        r.r_norm2 = res.r_norm2[k];
        r.f = 0.5 * r.r_norm2 * r.r_norm2;
        r.dchi_inf = (res.iterates[k].free(net) - res.iterates[k - 1].free(net)).lpNorm<Eigen::Infinity>();
        t.records.push_back(r);
    }
    if (!trace.empty()) write_file(trace, hdsqp::trace_to_string(t));
    if (!state_out.empty()) {
        std::ostringstream os;
        hdsqp::write_state(net, res.state, os);
        write_file(state_out, os.str());
    }
    print_summary(t);
    if (!res.message.empty()) std::fprintf(stderr, "%s\n", res.message.c_str());
    return exit_for(res.status);
}

int run_check(const std::string& manifest) {
    const auto p = load_problem(manifest);
    const auto dims = hdsqp::consensus_dims(p);
    std::printf("regions %zu\nn_state %d\nn_cpl %d\nn_z %d\n", p.regions.size(), dims.n_state, dims.n_cpl, dims.n_z);
    print_histogram(p.hypergraph);

    bool ok = true;
    const Eigen::MatrixXd E = p.stacked_incidence();
    const auto rank = E.size() == 0 ? 0 : Eigen::FullPivLU<Eigen::MatrixXd>(E).rank();
    const bool full_rank = rank == dims.n_z;
    std::printf("E rank %ld of %d: %s\n", static_cast<long>(rank), dims.n_z, full_rank ? "ok" : "FAIL");
    ok = ok && full_rank;

    // first iteration from the flat start
    hdsqp::SolverConfig cfg;
    std::vector<hdsqp::StateVector> states;
    std::vector<hdsqp::RegionIterate> it(p.regions.size());
    for (std::size_t l = 0; l < p.regions.size(); ++l) {
        const auto& rs = p.regions[l];
        states.push_back(hdsqp::flat_start(rs.net));
        it[l].lin = hdsqp::linearize(rs.net, states[l], cfg.eps);
        it[l].condensed = hdsqp::schur_condense(hdsqp::split_blocks(it[l].lin, rs.coupling_state));
    }
    const auto qp = hdsqp::build_consensus_qp(p, it, states);
    if (dims.n_z > 0) {
        const Eigen::MatrixXd M = hdsqp::consensus_projector(qp);
        const double idem = (M * M - M).cwiseAbs().maxCoeff();
        std::printf("projector |M^2 - M|_max %.3e: %s\n", idem, idem <= 1e-10 ? "ok" : "FAIL");
        ok = ok && idem <= 1e-10;
    }
    const auto sol = hdsqp::hdqp_pass(qp);
    const auto kkt = hdsqp::verify_kkt(qp, sol, sol.x_next);
    const double tol = hdsqp::kkt_tolerance(qp);
    std::printf("first-pass KKT stationarity %.3e dual %.3e primal %.3e (tol %.3e): %s\n", kkt.stationarity, kkt.dual,
                kkt.primal, tol, kkt.max() <= tol ? "ok" : "FAIL");
    ok = ok && kkt.max() <= tol;
    return ok ? kOk : kNotConverged;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Distributed AC power flow by hypergraph-structured SQP"};
    app.require_subcommand(1);

    std::string manifest, out;
    auto* merge = app.add_subcommand("merge", "merge regional cases into one MATPOWER case");
    merge->add_option("manifest", manifest, "merge manifest")->required();
    merge->add_option("-o,--output", out, "merged case file")->required();

    SolveOptions so;
    auto* solve = app.add_subcommand("solve", "solve a partitioned case");
    solve->add_option("manifest", so.manifest, "merge manifest")->required();
    solve->add_option("--eps", so.cfg.eps, "LM regularization")->capture_default_str();
    solve->add_option("--tol-step", so.cfg.tol_step, "step-size tolerance (inf-norm)")->capture_default_str();
    solve->add_option("--tol-res", so.cfg.tol_residual, "residual tolerance (2-norm)")->capture_default_str();
    solve->add_option("--max-iter", so.cfg.max_iter, "outer iteration limit")->capture_default_str();
    solve->add_option("--threads", so.cfg.threads, "region worker threads")->capture_default_str();
    solve->add_flag("--diagnose", so.cfg.diagnose, "record lm_error and condense_gap");
    solve->add_flag("--timing", so.cfg.timing, "record wall-clock time per iteration");
    solve->add_option("--reference", so.reference, "reference state file for dist_to_ref");
    solve->add_option("--trace", so.trace, "trace output (JSON lines)");
    solve->add_option("--state-out", so.state_out, "write the solved merged state");
    solve->add_flag("--distributed", so.distributed, "route the consensus step through the message harness");

    std::string case_path, base_trace, base_state;
    auto* baseline = app.add_subcommand("baseline", "centralized LM solve of a single case");
    baseline->add_option("case", case_path, "MATPOWER case file")->required();
    baseline->add_option("--trace", base_trace, "trace output (JSON lines)");
    baseline->add_option("--state-out", base_state, "write the solved state");

    std::string check_manifest;
    auto* check = app.add_subcommand("check", "report dimensions and run first-iteration invariants");
    check->add_option("manifest", check_manifest, "merge manifest")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kOk : kInputError;
    }

    try {
        if (*merge) return run_merge(manifest, out);
        if (*solve) return run_solve(so);
        if (*baseline) return run_baseline(case_path, base_trace, base_state);
        if (*check) return run_check(check_manifest);
    } catch (const hdsqp::NumericalBreakdown& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kNotConverged;
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kInputError;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kInputError;
    }
    return kInputError;
}
