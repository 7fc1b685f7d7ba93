#ifndef HDSQP_CASE_IO_HPP
#define HDSQP_CASE_IO_HPP

// Reading and writing MATPOWER-style case files and merge manifests.
//
// The case grammar is the assignment layout MATPOWER uses for its `.m`
// files:
//
//     function mpc = case14
//     mpc.baseMVA = 100;
//     mpc.bus = [ 1 3 0 0 0 0 1 1.06 0 0 1 1.06 0.94; ... ];
//     mpc.gen = [ ... ];
//     mpc.branch = [ ... ];
//
// `%` starts a comment. Sections other than baseMVA/bus/gen/branch are
// skipped (gencost, bus_name, ...). Values stay in the file's units here;
// conversion to per-unit and radians happens in `build_network`.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "hdsqp/error.hpp"

namespace hdsqp {

enum class BusType { PQ = 1, PV = 2, Slack = 3 };

struct RawBus {
    int id = 0;
    BusType type = BusType::PQ;
    double p_demand = 0.0;  // MW
    double q_demand = 0.0;  // MVAr
    double shunt_g = 0.0;   // MW at 1 p.u.
    double shunt_b = 0.0;   // MVAr at 1 p.u.
    double v_mag = 1.0;     // p.u.
    double v_ang = 0.0;     // degrees
    double base_kv = 0.0;

    bool operator==(const RawBus&) const = default;
};

struct RawGenerator {
    int bus_id = 0;
    double p_gen = 0.0;  // MW
    double q_gen = 0.0;  // MVAr
    double v_setpoint = 1.0;
    bool in_service = true;

    bool operator==(const RawGenerator&) const = default;
};

struct RawBranch {
    int from_bus = 0;
    int to_bus = 0;
    double r = 0.0;
    double x = 0.0;
    double b = 0.0;  // total line charging, p.u.
    double tap_ratio = 1.0;
    double phase_shift = 0.0;  // degrees
    bool in_service = true;

    bool operator==(const RawBranch&) const = default;
};

struct RawCase {
    double base_mva = 100.0;
    std::vector<RawBus> buses;
    std::vector<RawGenerator> generators;
    std::vector<RawBranch> branches;

    bool operator==(const RawCase&) const = default;

    std::optional<std::size_t> bus_index(int id) const {
        for (std::size_t i = 0; i < buses.size(); ++i)
            if (buses[i].id == id) return i;
        return std::nullopt;
    }

    int max_bus_id() const {
        int m = 0;
        for (const auto& b : buses) m = std::max(m, b.id);
        return m;
    }
};

namespace detail {

inline std::string_view trim(std::string_view s) {
    const auto* ws = " \t\r\n";
    const auto first = s.find_first_not_of(ws);
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(ws);
    return s.substr(first, last - first + 1);
}

inline std::string_view strip_comment(std::string_view line, std::string_view markers) {
    const auto pos = line.find_first_of(markers);
    return pos == std::string_view::npos ? line : line.substr(0, pos);
}

inline std::optional<double> to_double(std::string_view tok) {
    double v = 0.0;
    if (!tok.empty() && tok.front() == '+') tok.remove_prefix(1);
    const auto* end = tok.data() + tok.size();
    auto [ptr, ec] = std::from_chars(tok.data(), end, v);
    if (ec != std::errc{} || ptr != end) {
        // MATPOWER files occasionally spell infinities as Inf
        if (tok == "Inf" || tok == "inf") return 1e300;
        if (tok == "-Inf" || tok == "-inf") return -1e300;
        return std::nullopt;
    }
    return v;
}

inline std::vector<std::string_view> split_tokens(std::string_view s, std::string_view seps) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < s.size()) {
        while (i < s.size() && seps.find(s[i]) != std::string_view::npos) ++i;
        std::size_t j = i;
        while (j < s.size() && seps.find(s[j]) == std::string_view::npos) ++j;
        if (j > i) out.push_back(s.substr(i, j - i));
        i = j;
    }
    return out;
}

struct NumericRow {
    int line;
    std::vector<double> values;
};

inline bool is_integer(double v) { return v == static_cast<double>(static_cast<long long>(v)); }

inline int to_bus_id(double v, int line) {
    if (!is_integer(v) || v <= 0) throw ParseError(line, "bus id must be a positive integer");
    return static_cast<int>(v);
}

}  // namespace detail

/// Parse a case file. Column counts beyond the known MATPOWER layout are
/// ignored and reported through `warnings` when it is non-null.
inline RawCase parse_case(std::string_view text, std::vector<std::string>* warnings = nullptr) {
    using namespace detail;

    std::vector<std::string_view> lines;
    {
        std::size_t start = 0;
        while (start <= text.size()) {
            auto end = text.find('\n', start);
            if (end == std::string_view::npos) end = text.size();
            lines.push_back(text.substr(start, end - start));
            start = end + 1;
        }
    }

    std::optional<double> base_mva;
    std::map<std::string, std::vector<NumericRow>, std::less<>> tables;

    std::size_t ln = 0;
    while (ln < lines.size()) {
        const int line_no = static_cast<int>(ln) + 1;
        auto content = trim(strip_comment(lines[ln], "%"));
        ++ln;
        if (content.empty()) continue;
        if (content.starts_with("function")) continue;

        const auto eq = content.find('=');
        if (eq == std::string_view::npos) throw ParseError(line_no, "expected an assignment");
        auto lhs = trim(content.substr(0, eq));
        auto rhs = trim(content.substr(eq + 1));
        if (const auto dot = lhs.rfind('.'); dot != std::string_view::npos) lhs = lhs.substr(dot + 1);
        if (lhs.empty()) throw ParseError(line_no, "missing name before '='");

        if (rhs.starts_with('[') || rhs.starts_with('{')) {
            const char close = rhs.front() == '[' ? ']' : '}';
            const bool numeric = rhs.front() == '[';
            const bool wanted = numeric && (lhs == "bus" || lhs == "gen" || lhs == "branch");
            std::vector<NumericRow> rows;
            std::string_view body = rhs.substr(1);
            int body_line = line_no;
            bool closed = false;
            while (true) {
                auto pos = body.find(close);
                auto chunk = pos == std::string_view::npos ? body : body.substr(0, pos);
                if (wanted) {
                    for (auto row_text : split_tokens(chunk, ";")) {
                        auto toks = split_tokens(row_text, " \t\r,");
                        if (toks.empty()) continue;
                        NumericRow row{body_line, {}};
                        for (auto t : toks) {
                            auto v = to_double(t);
                            if (!v) throw ParseError(body_line, "not a number: '" + std::string(t) + "'");
                            row.values.push_back(*v);
                        }
                        rows.push_back(std::move(row));
                    }
                }
                if (pos != std::string_view::npos) {
                    closed = true;
                    break;
                }
                if (ln >= lines.size()) break;
                body_line = static_cast<int>(ln) + 1;
                body = trim(strip_comment(lines[ln], "%"));
                ++ln;
            }
            if (!closed) throw ParseError(line_no, "unterminated table '" + std::string(lhs) + "'");
            if (wanted) {
                if (tables.contains(lhs)) throw ParseError(line_no, "duplicate table '" + std::string(lhs) + "'");
                tables.emplace(std::string(lhs), std::move(rows));
            }
            continue;
        }

        if (lhs == "baseMVA") {
            auto value = trim(rhs.substr(0, rhs.find(';')));
            auto v = to_double(value);
            if (!v) throw ParseError(line_no, "baseMVA is not a number");
            if (*v <= 0) throw ParseError(line_no, "baseMVA must be positive");
            base_mva = *v;
        }
    }

    const int eof_line = static_cast<int>(lines.size());
    if (!base_mva) throw ParseError(eof_line, "end of input without baseMVA");
    for (auto name : {"bus", "gen", "branch"})
        if (!tables.contains(name)) throw ParseError(eof_line, std::string("end of input without a '") + name + "' table");

    auto check_width = [&](const NumericRow& row, std::size_t min_cols, std::size_t known_cols, const char* table) {
        if (row.values.size() < min_cols)
            throw ParseError(row.line, std::string(table) + " row needs at least " + std::to_string(min_cols) +
                                           " columns, got " + std::to_string(row.values.size()));
        if (row.values.size() > known_cols && warnings)
            warnings->push_back("line " + std::to_string(row.line) + ": ignoring " +
                                std::to_string(row.values.size() - known_cols) + " unknown " + table + " column(s)");
    };

    RawCase c;
    c.base_mva = *base_mva;
    std::set<int> ids;
    int n_slack = 0;
    for (const auto& row : tables.find("bus")->second) {
        check_width(row, 9, 17, "bus");
        const auto& v = row.values;
        RawBus b;
        b.id = to_bus_id(v[0], row.line);
        if (!ids.insert(b.id).second) throw ParseError(row.line, "duplicate bus id " + std::to_string(b.id));
        const double type = v[1];
        if (type == 1) b.type = BusType::PQ;
        else if (type == 2) b.type = BusType::PV;
        else if (type == 3) b.type = BusType::Slack;
        else throw ParseError(row.line, "unsupported bus type " + std::to_string(type));
        if (b.type == BusType::Slack && ++n_slack > 1)
            throw ParseError(row.line, "second slack bus " + std::to_string(b.id) + ", at most one allowed");
        b.p_demand = v[2];
        b.q_demand = v[3];
        b.shunt_g = v[4];
        b.shunt_b = v[5];
        b.v_mag = v[7];
        b.v_ang = v[8];
        b.base_kv = v.size() > 9 ? v[9] : 0.0;
        if (b.v_mag <= 0) throw ParseError(row.line, "voltage magnitude must be positive");
        c.buses.push_back(b);
    }

    for (const auto& row : tables.find("gen")->second) {
        check_width(row, 8, 25, "gen");
        const auto& v = row.values;
        RawGenerator g;
        g.bus_id = to_bus_id(v[0], row.line);
        if (!ids.contains(g.bus_id))
            throw ParseError(row.line, "generator references unknown bus " + std::to_string(g.bus_id));
        g.p_gen = v[1];
        g.q_gen = v[2];
        g.v_setpoint = v[5];
        g.in_service = v[7] > 0;
        c.generators.push_back(g);
    }

    for (const auto& row : tables.find("branch")->second) {
        check_width(row, 11, 21, "branch");
        const auto& v = row.values;
        RawBranch br;
        br.from_bus = to_bus_id(v[0], row.line);
        br.to_bus = to_bus_id(v[1], row.line);
        for (int id : {br.from_bus, br.to_bus})
            if (!ids.contains(id)) throw ParseError(row.line, "branch references unknown bus " + std::to_string(id));
        br.r = v[2];
        br.x = v[3];
        br.b = v[4];
        br.tap_ratio = v[8] == 0.0 ? 1.0 : v[8];
        br.phase_shift = v[9];
        br.in_service = v[10] > 0;
        c.branches.push_back(br);
    }
    return c;
}

/// Serialize in the same layout `parse_case` reads. Doubles are printed
/// with round-trip precision, so parse(write(c)) == c.
inline std::string write_case(const RawCase& c, std::string_view name = "merged") {
    std::ostringstream os;
    os.precision(17);
    auto num = [&](double v) -> std::ostringstream& {
        if (detail::is_integer(v) && std::abs(v) < 1e15) os << static_cast<long long>(v);
        else os << v;
        return os;
    };
    os << "function mpc = " << name << "\n";
    os << "mpc.version = '2';\n";
    os << "mpc.baseMVA = ";
    num(c.base_mva) << ";\n\n";
    os << "%\tbus_i\ttype\tPd\tQd\tGs\tBs\tarea\tVm\tVa\tbaseKV\tzone\tVmax\tVmin\n";
    os << "mpc.bus = [\n";
    for (const auto& b : c.buses) {
        os << '\t' << b.id << '\t' << static_cast<int>(b.type);
        for (double v : {b.p_demand, b.q_demand, b.shunt_g, b.shunt_b, 1.0, b.v_mag, b.v_ang, b.base_kv, 1.0, 1.1, 0.9}) {
            os << '\t';
            num(v);
        }
        os << ";\n";
    }
    os << "];\n\n";
    os << "%\tbus\tPg\tQg\tQmax\tQmin\tVg\tmBase\tstatus\tPmax\tPmin\n";
    os << "mpc.gen = [\n";
    for (const auto& g : c.generators) {
        os << '\t' << g.bus_id;
        for (double v : {g.p_gen, g.q_gen, 9999.0, -9999.0, g.v_setpoint, c.base_mva, g.in_service ? 1.0 : 0.0,
                         9999.0, 0.0}) {
            os << '\t';
            num(v);
        }
        os << ";\n";
    }
    os << "];\n\n";
    os << "%\tfbus\ttbus\tr\tx\tb\trateA\trateB\trateC\tratio\tangle\tstatus\tangmin\tangmax\n";
    os << "mpc.branch = [\n";
    for (const auto& br : c.branches) {
        os << '\t' << br.from_bus << '\t' << br.to_bus;
        for (double v : {br.r, br.x, br.b, 0.0, 0.0, 0.0, br.tap_ratio, br.phase_shift, br.in_service ? 1.0 : 0.0,
                         -360.0, 360.0}) {
            os << '\t';
            num(v);
        }
        os << ";\n";
    }
    os << "];\n";
    return os.str();
}

inline std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError(path.string() + ": no such file or not readable");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline RawCase load_case(const std::filesystem::path& path, std::vector<std::string>* warnings = nullptr) {
    try {
        return parse_case(read_text_file(path), warnings);
    } catch (const ParseError& e) {
        throw ParseError(e.line(), path.string() + ": " + e.what());
    } catch (const InputError& e) {
        throw InputError(path.string() + ": " + e.what());
    }
}

// ---------------------------------------------------------------------------
// Merge manifests

struct Interconnection {
    int from_region = 0;
    int from_bus = 0;
    int to_region = 0;
    int to_bus = 0;
    double r = 0.0;
    double x = 0.0;
    double b = 0.0;
    double tap_ratio = 1.0;
    double phase_shift = 0.0;  // degrees

    bool operator==(const Interconnection&) const = default;
};

struct MergeManifest {
    std::vector<std::string> region_files;
    std::vector<Interconnection> interconnections;
    int slack_region = 0;

    bool operator==(const MergeManifest&) const = default;
};

/// Parse a manifest:
///
///     region <path>
///     link <rA> <busA> <rB> <busB> <r> <x> <b> <tap> <shift>
///     slack_region <idx>
///
/// Region indices are zero-based in `region` line order. `#` and `%`
/// start comments.
inline MergeManifest parse_manifest(std::string_view text) {
    using namespace detail;
    MergeManifest m;
    std::optional<int> slack;
    struct PendingLink {
        int line;
        Interconnection link;
    };
    std::vector<PendingLink> links;

    int line_no = 0;
    std::size_t start = 0;
    while (start <= text.size()) {
        auto end = text.find('\n', start);
        if (end == std::string_view::npos) end = text.size();
        auto line = trim(strip_comment(text.substr(start, end - start), "#%"));
        start = end + 1;
        ++line_no;
        if (line.empty()) continue;

        auto toks = split_tokens(line, " \t\r");
        const auto key = toks.front();
        auto integer = [&](std::string_view t) {
            auto v = to_double(t);
            if (!v || !is_integer(*v)) throw ParseError(line_no, "expected an integer, got '" + std::string(t) + "'");
            return static_cast<int>(*v);
        };
        auto real = [&](std::string_view t) {
            auto v = to_double(t);
            if (!v) throw ParseError(line_no, "expected a number, got '" + std::string(t) + "'");
            return *v;
        };

        if (key == "region") {
            if (toks.size() != 2) throw ParseError(line_no, "region takes exactly one path");
            m.region_files.emplace_back(toks[1]);
        } else if (key == "link") {
            if (toks.size() != 10) throw ParseError(line_no, "link takes 9 fields: rA busA rB busB r x b tap shift");
            Interconnection l;
            l.from_region = integer(toks[1]);
            l.from_bus = integer(toks[2]);
            l.to_region = integer(toks[3]);
            l.to_bus = integer(toks[4]);
            l.r = real(toks[5]);
            l.x = real(toks[6]);
            l.b = real(toks[7]);
            l.tap_ratio = real(toks[8]);
            if (l.tap_ratio == 0.0) l.tap_ratio = 1.0;
            l.phase_shift = real(toks[9]);
            if (l.from_region == l.to_region)
                throw ParseError(line_no, "link endpoints must lie in distinct regions");
            links.push_back({line_no, l});
        } else if (key == "slack_region") {
            if (toks.size() != 2) throw ParseError(line_no, "slack_region takes one index");
            if (slack) throw ParseError(line_no, "slack_region given twice");
            slack = integer(toks[1]);
        } else {
            throw ParseError(line_no, "unknown directive '" + std::string(key) + "'");
        }
    }

    if (m.region_files.empty()) throw InputError("manifest lists no regions");
    if (!slack) throw InputError("manifest has no slack_region");
    const int n = static_cast<int>(m.region_files.size());
    if (*slack < 0 || *slack >= n) throw InputError("slack_region " + std::to_string(*slack) + " out of range");
    m.slack_region = *slack;
    for (const auto& [line, l] : links) {
        for (int r : {l.from_region, l.to_region})
            if (r < 0 || r >= n) throw ParseError(line, "unknown region index " + std::to_string(r));
        m.interconnections.push_back(l);
    }
    return m;
}

/// Check that every link endpoint exists in its regional case.
inline void validate_manifest(const MergeManifest& m, const std::vector<RawCase>& regions) {
    if (regions.size() != m.region_files.size())
        throw InputError("manifest names " + std::to_string(m.region_files.size()) + " regions, got " +
                         std::to_string(regions.size()) + " cases");
    for (std::size_t i = 0; i < m.interconnections.size(); ++i) {
        const auto& l = m.interconnections[i];
        if (!regions[l.from_region].bus_index(l.from_bus))
            throw InputError("link " + std::to_string(i) + ": bus " + std::to_string(l.from_bus) +
                             " not in region " + std::to_string(l.from_region));
        if (!regions[l.to_region].bus_index(l.to_bus))
            throw InputError("link " + std::to_string(i) + ": bus " + std::to_string(l.to_bus) + " not in region " +
                             std::to_string(l.to_region));
    }
}

/// Manifest plus the regional cases it names, loaded relative to the
/// manifest's directory.
struct ManifestBundle {
    MergeManifest manifest;
    std::vector<RawCase> regions;
};

inline ManifestBundle load_manifest(const std::filesystem::path& path) {
    ManifestBundle out;
    try {
        out.manifest = parse_manifest(read_text_file(path));
    } catch (const ParseError& e) {
        throw ParseError(e.line(), path.string() + ": " + e.what());
    }
    const auto dir = path.parent_path();
    for (const auto& f : out.manifest.region_files) {
        std::filesystem::path p(f);
        out.regions.push_back(load_case(p.is_absolute() ? p : dir / p));
    }
    validate_manifest(out.manifest, out.regions);
    return out;
}

// ---------------------------------------------------------------------------
// Merging

/// Regional slack buses outside the slack region become PV buses; only one
/// reference remains in the merged system.
inline RawCase demote_slack(RawCase c) {
    for (auto& b : c.buses)
        if (b.type == BusType::Slack) b.type = BusType::PV;
    return c;
}

struct MergedCase {
    RawCase merged;
    std::vector<RawCase> regions;  // regional cases after slack demotion
    std::vector<int> id_offset;    // merged id = local id + id_offset[region]
};

inline MergedCase merge_cases(const MergeManifest& m, const std::vector<RawCase>& raw) {
    validate_manifest(m, raw);
    MergedCase out;
    const auto n = raw.size();
    bool slack_found = false;
    int offset = 0;
    for (std::size_t r = 0; r < n; ++r) {
        if (raw[r].base_mva != raw.front().base_mva)
            throw InputError("region " + std::to_string(r) + " uses a different baseMVA");
        RawCase c = static_cast<int>(r) == m.slack_region ? raw[r] : demote_slack(raw[r]);
        if (static_cast<int>(r) == m.slack_region) {
            for (const auto& b : c.buses) slack_found = slack_found || b.type == BusType::Slack;
        }
        out.id_offset.push_back(offset);
        out.regions.push_back(c);
        offset += c.max_bus_id();
    }
    if (!slack_found) throw InputError("slack region " + std::to_string(m.slack_region) + " has no slack bus");

    auto& mc = out.merged;
    mc.base_mva = raw.front().base_mva;
    for (std::size_t r = 0; r < n; ++r) {
        const int off = out.id_offset[r];
        for (auto b : out.regions[r].buses) {
            b.id += off;
            mc.buses.push_back(b);
        }
        for (auto g : out.regions[r].generators) {
            g.bus_id += off;
            mc.generators.push_back(g);
        }
        for (auto br : out.regions[r].branches) {
            br.from_bus += off;
            br.to_bus += off;
            mc.branches.push_back(br);
        }
    }
    for (const auto& l : m.interconnections) {
        RawBranch br;
        br.from_bus = l.from_bus + out.id_offset[l.from_region];
        br.to_bus = l.to_bus + out.id_offset[l.to_region];
        br.r = l.r;
        br.x = l.x;
        br.b = l.b;
        br.tap_ratio = l.tap_ratio;
        br.phase_shift = l.phase_shift;
        mc.branches.push_back(br);
    }
    return out;
}

}  // namespace hdsqp

#endif
