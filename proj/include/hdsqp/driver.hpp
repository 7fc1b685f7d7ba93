#ifndef HDSQP_DRIVER_HPP
#define HDSQP_DRIVER_HPP

// Outer loop: linearize every region, condense onto the coupling entries,
// solve the consensus QP in one HDQP pass, recover full regional steps.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>

#include "hdsqp/central.hpp"
#include "hdsqp/condense.hpp"
#include "hdsqp/hdqp.hpp"
#include "hdsqp/partition.hpp"
#include "hdsqp/residual.hpp"
#include "hdsqp/trace.hpp"

namespace hdsqp {

struct SolverConfig {
    double eps = 1e-10;
    double tol_step = 1e-8;
    double tol_residual = 1e-10;
    int max_iter = 50;
    bool diagnose = false;
    bool timing = false;  // record wall_ns; off keeps traces reproducible
    int threads = 1;

    void validate() const {
        if (!(eps > 0.0)) throw std::invalid_argument("eps must be positive");
        if (!(tol_step > 0.0) || !(tol_residual > 0.0)) throw std::invalid_argument("tolerances must be positive");
        if (max_iter < 1) throw std::invalid_argument("max_iter must be at least 1");
        if (threads < 1) throw std::invalid_argument("threads must be at least 1");
    }
};

struct SolveResult {
    StateVector state;                   // merged-network state stitched from the cores
    std::vector<StateVector> regions;    // per-region states, copies included
    std::vector<Eigen::VectorXd> lambda; // duals of the last consensus pass
    SolveTrace trace;
    std::string message;
};

/// Per-region data of one outer iteration.
struct RegionIterate {
    RegionLinearization lin;
    CondensedRegion condensed;
};

namespace detail {

/// Runs fn(l) for every region; results must be written to slot l only.
inline void for_each_region(int n, int threads, const std::function<void(int)>& fn) {
    if (threads <= 1 || n <= 1) {
        for (int l = 0; l < n; ++l) fn(l);
        return;
    }
    const int workers = std::min(threads, n);
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(workers);
    for (int w = 0; w < workers; ++w)
        pool.emplace_back([&, w] {
            try {
                for (int l = w; l < n; l += workers) fn(l);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

inline std::int64_t consensus_floats(const PartitionedProblem& p) {
    std::int64_t n = 0;
    for (const auto& r : p.regions) {
        const std::int64_t a = r.n_cpl();
        n += a * a + 2 * a;
    }
    return n;
}

}  // namespace detail

/// Consensus QP from the condensed regions at the current coupling iterate.
inline ConsensusQP build_consensus_qp(const PartitionedProblem& p, const std::vector<RegionIterate>& it,
                                      const std::vector<StateVector>& states) {
    ConsensusQP qp;
    qp.n_z = p.n_z();
    for (std::size_t l = 0; l < p.regions.size(); ++l) {
        const auto& rs = p.regions[l];
        qp.regions.push_back(make_consensus_region(it[l].condensed.B_bar, it[l].condensed.g_bar,
                                                   rs.coupling(states[l].free(rs.net)), rs.coupling_z));
    }
    return qp;
}

/// Coupling part of the uncondensed QP solution minus the condensed one.
inline double condense_gap(const PartitionedProblem& p, const std::vector<RegionIterate>& it,
                           const std::vector<StateVector>& states, const ConsensusSolution& sol) {
    std::vector<FullQpRegion> full;
    for (std::size_t l = 0; l < p.regions.size(); ++l) {
        const auto& rs = p.regions[l];
        full.push_back({it[l].lin.B, it[l].lin.g, states[l].free(rs.net), rs.coupling_state, rs.coupling_z});
    }
    const auto fq = full_qp_solve(full, p.n_z());
    double gap = 0.0;
    for (std::size_t l = 0; l < p.regions.size(); ++l) {
        if (p.regions[l].n_cpl() == 0) continue;
        const Eigen::VectorXd x = p.regions[l].coupling(fq.chi[l]);
        gap = std::max(gap, (x - sol.x_next[l]).lpNorm<Eigen::Infinity>());
    }
    return gap;
}

/// |B - hess f|_F = |eps I - Q|_F summed over regions (Frobenius of the block diagonal).
inline double lm_error(const PartitionedProblem& p, const std::vector<StateVector>& states, double eps) {
    double s = 0.0;
    for (std::size_t l = 0; l < p.regions.size(); ++l) {
        Eigen::MatrixXd D = -q_term(p.regions[l].net, states[l]);
        D.diagonal().array() += eps;
        s += D.squaredNorm();
    }
    return std::sqrt(s);
}

using InnerSolver = std::function<ConsensusSolution(const ConsensusQP&, std::int64_t& comm_floats)>;

/// Direct inner solve; comm_floats gets the analytic message volume.
inline InnerSolver direct_inner(const PartitionedProblem& p) {
    const auto floats = detail::consensus_floats(p);
    return [floats](const ConsensusQP& qp, std::int64_t& comm) {
        comm = floats;
        return hdqp_pass(qp);
    };
}

namespace detail {

inline SolveResult outer_loop(const PartitionedProblem& p, const SolverConfig& cfg, const std::optional<StateVector>& ref,
                              const InnerSolver& inner) {
    cfg.validate();
    using clock = std::chrono::steady_clock;
    const int n_reg = static_cast<int>(p.regions.size());

    SolveResult res;
    std::vector<StateVector> states;
    for (const auto& rs : p.regions) states.push_back(flat_start(rs.net));

    auto total_residual = [&](const std::vector<Eigen::VectorXd>& r) {
        double s = 0.0;
        for (const auto& v : r) s += v.squaredNorm();
        return s;
    };

    std::vector<RegionIterate> it(n_reg);
    std::vector<Eigen::VectorXd> steps(n_reg);
    std::vector<Eigen::VectorXd> r_new(n_reg);
    SolveStatus status = SolveStatus::MaxIter;

    try {
        for (int k = 1; k <= cfg.max_iter; ++k) {
            const auto t0 = clock::now();
            for_each_region(n_reg, cfg.threads, [&](int l) {
                it[l].lin = linearize(p.regions[l].net, states[l], cfg.eps);
                it[l].condensed = schur_condense(split_blocks(it[l].lin, p.regions[l].coupling_state));
            });
            if (k == 1) {
                std::vector<Eigen::VectorXd> r0;
                for (const auto& x : it) r0.push_back(x.lin.r);
                if (std::sqrt(total_residual(r0)) <= cfg.tol_residual) {
                    status = SolveStatus::Converged;
                    break;
                }
            }
            const ConsensusQP qp = build_consensus_qp(p, it, states);
            IterationRecord rec;
            rec.iter = k;
            const ConsensusSolution sol = inner(qp, rec.comm_floats);

            for_each_region(n_reg, cfg.threads, [&](int l) {
                steps[l] = recover_from_coupling(it[l].condensed, sol.x_next[l] - qp.regions[l].x_k);
            });
            std::optional<double> gap;
            if (cfg.diagnose) gap = condense_gap(p, it, states, sol);

            double dchi = 0.0;
            bool bad_voltage = false;
            for (int l = 0; l < n_reg; ++l) {
                const auto& net = p.regions[l].net;
                states[l].set_free(net, states[l].free(net) + steps[l]);
                if (steps[l].size() > 0) dchi = std::max(dchi, steps[l].lpNorm<Eigen::Infinity>());
                if (!(states[l].v.minCoeff() > 0.0)) bad_voltage = true;
            }
            for_each_region(n_reg, cfg.threads, [&](int l) { r_new[l] = residual(p.regions[l].net, states[l]); });

            const double rr = total_residual(r_new);
            rec.f = 0.5 * rr;
            rec.r_norm2 = std::sqrt(rr);
            rec.dchi_inf = dchi;
            for (int l = 0; l < n_reg; ++l) {
                const auto& rs = p.regions[l];
                if (rs.n_cpl() == 0) continue;
                const Eigen::VectorXd x = rs.coupling(states[l].free(rs.net));
                rec.primal_residual =
                    std::max(rec.primal_residual, (x - rs.expand(sol.z_bar)).lpNorm<Eigen::Infinity>());
            }
            if (cfg.diagnose) {
                rec.lm_error = lm_error(p, states, cfg.eps);
                rec.condense_gap = gap;
            }
            if (ref) rec.dist_to_ref = max_abs_diff(stitch(p, states), *ref);
            if (cfg.timing)
                rec.wall_ns = std::chrono::duration_cast<std::chrono::nanoseconds>(clock::now() - t0).count();
            res.trace.records.push_back(rec);
            res.lambda = sol.lambda;

            if (bad_voltage || !std::isfinite(rr)) {
                status = SolveStatus::NumericalBreakdown;
                res.message = bad_voltage ? "non-positive voltage magnitude" : "non-finite residual";
                break;
            }
            if (dchi <= cfg.tol_step || rec.r_norm2 <= cfg.tol_residual) {
                status = SolveStatus::Converged;
                break;
            }
        }
    } catch (const NumericalBreakdown& e) {
        status = SolveStatus::NumericalBreakdown;
        res.message = e.what();
    }
    res.trace.status = status;
    res.state = stitch(p, states);
    res.regions = std::move(states);
    return res;
}

}  // namespace detail

inline SolveResult solve(const PartitionedProblem& p, const SolverConfig& cfg = {},
                         const std::optional<StateVector>& ref = std::nullopt) {
    return detail::outer_loop(p, cfg, ref, direct_inner(p));
}

/// Least-squares slope of log e_{k+1} against log e_k over consecutive
/// values in the window (lo, hi].
inline double convergence_order(const std::vector<double>& e, double lo = 1e-14, double hi = 1e-2) {
    std::vector<double> xs, ys;
    int run = 0;
    for (std::size_t k = 0; k < e.size(); ++k) {
        const bool ok = e[k] > lo && e[k] <= hi;
        if (!ok) {
            run = 0;
            continue;
        }
        if (run > 0) {
            xs.push_back(std::log(e[k - 1]));
            ys.push_back(std::log(e[k]));
        }
        ++run;
    }
    if (xs.size() < 2) throw std::invalid_argument("need at least 3 consecutive errors inside the fit window");
    const double n = static_cast<double>(xs.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        sx += xs[i];
        sy += ys[i];
        sxx += xs[i] * xs[i];
        sxy += xs[i] * ys[i];
    }
    const double den = n * sxx - sx * sx;
    if (den == 0.0) throw std::invalid_argument("degenerate error sequence");
    return (n * sxy - sx * sy) / den;
}

inline double convergence_order(const SolveTrace& t) {
    std::vector<double> e;
    for (const auto& r : t.records) {
        if (!r.dist_to_ref) throw std::invalid_argument("trace has no dist_to_ref values");
        e.push_back(*r.dist_to_ref);
    }
    return convergence_order(e);
}

}  // namespace hdsqp

#endif
