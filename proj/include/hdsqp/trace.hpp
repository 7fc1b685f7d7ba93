#ifndef HDSQP_TRACE_HPP
#define HDSQP_TRACE_HPP

// Solve traces as newline-delimited JSON, and solved-state files.
//
// A trace is one header object followed by one object per outer iteration:
//
//     {"format":"hdsqp-trace","version":1,"status":"converged","iterations":6}
//     {"iter":1,"f":...,"r_norm2":...,"dchi_inf":...,"primal_residual":...,
//      "comm_floats":...,"wall_ns":...}
//
// lm_error and condense_gap appear only when computed (diagnostics), as
// does dist_to_ref when a reference state was supplied. Doubles are
// printed with round-trip precision.

#include <cstdint>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "hdsqp/central.hpp"
#include "hdsqp/error.hpp"
#include "hdsqp/network.hpp"

namespace hdsqp {

struct IterationRecord {
    int iter = 0;
    double f = 0.0;
    double r_norm2 = 0.0;
    double dchi_inf = 0.0;
    double primal_residual = 0.0;
    std::optional<double> lm_error;
    std::optional<double> condense_gap;
    std::optional<double> dist_to_ref;
    std::int64_t comm_floats = 0;
    std::int64_t wall_ns = 0;

    bool operator==(const IterationRecord&) const = default;
};

struct SolveTrace {
    std::vector<IterationRecord> records;
    SolveStatus status = SolveStatus::MaxIter;

    bool operator==(const SolveTrace&) const = default;
};

inline void write_trace(const SolveTrace& trace, std::ostream& sink) {
    using nlohmann::ordered_json;
    ordered_json header;
    header["format"] = "hdsqp-trace";
    header["version"] = 1;
    header["status"] = to_string(trace.status);
    header["iterations"] = trace.records.size();
    sink << header.dump() << '\n';
    for (const auto& r : trace.records) {
        ordered_json j;
        j["iter"] = r.iter;
        j["f"] = r.f;
        j["r_norm2"] = r.r_norm2;
        j["dchi_inf"] = r.dchi_inf;
        j["primal_residual"] = r.primal_residual;
        if (r.lm_error) j["lm_error"] = *r.lm_error;
        if (r.condense_gap) j["condense_gap"] = *r.condense_gap;
        if (r.dist_to_ref) j["dist_to_ref"] = *r.dist_to_ref;
        j["comm_floats"] = r.comm_floats;
        j["wall_ns"] = r.wall_ns;
        sink << j.dump() << '\n';
    }
    sink.flush();
    if (!sink) throw std::runtime_error("failed to write trace");
}

inline std::string trace_to_string(const SolveTrace& trace) {
    std::ostringstream os;
    write_trace(trace, os);
    return os.str();
}

inline SolveTrace parse_trace(std::string_view text) {
    SolveTrace t;
    std::istringstream in{std::string(text)};
    std::string line;
    int line_no = 0;
    bool header = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(line_no, e.what());
        }
        try {
            if (!header) {
                if (j.value("format", "") != "hdsqp-trace") throw ParseError(line_no, "not an hdsqp trace header");
                const auto status = j.at("status").get<std::string>();
                if (status == "converged") t.status = SolveStatus::Converged;
                else if (status == "max_iter") t.status = SolveStatus::MaxIter;
                else if (status == "numerical_breakdown") t.status = SolveStatus::NumericalBreakdown;
                else throw ParseError(line_no, "unknown status '" + status + "'");
                header = true;
                continue;
            }
            IterationRecord r;
            r.iter = j.at("iter").get<int>();
            r.f = j.at("f").get<double>();
            r.r_norm2 = j.at("r_norm2").get<double>();
            r.dchi_inf = j.at("dchi_inf").get<double>();
            r.primal_residual = j.at("primal_residual").get<double>();
            if (j.contains("lm_error")) r.lm_error = j["lm_error"].get<double>();
            if (j.contains("condense_gap")) r.condense_gap = j["condense_gap"].get<double>();
            if (j.contains("dist_to_ref")) r.dist_to_ref = j["dist_to_ref"].get<double>();
            r.comm_floats = j.at("comm_floats").get<std::int64_t>();
            r.wall_ns = j.at("wall_ns").get<std::int64_t>();
            t.records.push_back(r);
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(line_no, e.what());
        }
    }
    if (!header) throw InputError("trace has no header");
    return t;
}

// ---------------------------------------------------------------------------
// State files: one line per bus, `bus_id theta_rad v p q` (p.u.)

inline void write_state(const NetworkModel& net, const StateVector& s, std::ostream& os) {
    os << "% bus_id theta_rad v_pu p_pu q_pu\n";
    os.precision(17);
    for (int i = 0; i < net.n_bus; ++i)
        os << net.bus_id[i] << ' ' << s.theta[i] << ' ' << s.v[i] << ' ' << s.p[i] << ' ' << s.q[i] << '\n';
    if (!os) throw std::runtime_error("failed to write state");
}

inline StateVector parse_state(const NetworkModel& net, std::string_view text) {
    StateVector s = flat_start(net);
    std::vector<bool> seen(net.n_bus, false);
    std::istringstream in{std::string(text)};
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        auto content = detail::trim(detail::strip_comment(line, "%#"));
        if (content.empty()) continue;
        auto toks = detail::split_tokens(content, " \t\r");
        if (toks.size() != 5) throw ParseError(line_no, "expected: bus_id theta v p q");
        std::array<double, 5> v{};
        for (int k = 0; k < 5; ++k) {
            auto d = detail::to_double(toks[k]);
            if (!d) throw ParseError(line_no, "not a number: '" + std::string(toks[k]) + "'");
            v[k] = *d;
        }
        const auto idx = net.index_of(static_cast<int>(v[0]));
        if (!idx) throw ParseError(line_no, "unknown bus " + std::string(toks[0]));
        s.theta[*idx] = v[1];
        s.v[*idx] = v[2];
        s.p[*idx] = v[3];
        s.q[*idx] = v[4];
        seen[*idx] = true;
    }
    for (int i = 0; i < net.n_bus; ++i)
        if (!seen[i]) throw InputError("state file is missing bus " + std::to_string(net.bus_id[i]));
    return s;
}

}  // namespace hdsqp

#endif
