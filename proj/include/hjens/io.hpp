#pragma once

// Serialization: hjfield snapshots, hjtraj trajectory tables, and the
// INI-style run configuration. Text throughout, %.17g floats, so files
// diff cleanly and values round-trip bitwise.

#include "integrate.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

namespace hjens {

namespace detail {

inline std::string fmt_g17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline double parse_double(const std::string& tok, int line) {
    const char* s = tok.c_str();
    char* end = nullptr;
    double v = std::strtod(s, &end);
    if (end == s || *end != '\0')
        throw format_error("not a number: '" + tok + "'", line);
    return v;
}

inline std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::size_t start = 0;
    for (;;) {
        std::size_t pos = s.find(sep, start);
        if (pos == std::string::npos) {
            out.push_back(s.substr(start));
            return out;
        }
        out.push_back(s.substr(start, pos - start));
        start = pos + 1;
    }
}

inline std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

}  // namespace detail

// ---- hjfield -------------------------------------------------------------

struct FieldSnapshot {
    GridField field;
    std::vector<std::string> names;  // one per component
};

// Header: version, axes marker (q = position, p = momentum), dims/grid/t,
// bounds, field names. Data: one CSV row per node in row-major order,
// coordinates first.
inline void write_field_snapshot(std::ostream& os, const GridField& f,
                                 const std::vector<std::string>& names) {
    if (int(names.size()) != f.components)
        throw config_error("field snapshot needs one name per component");
    const GridSpec& g = f.spec;
    const int s = g.dim();
    os << "# hjfield v1\n";
    os << "# axes=" << (g.kind == Axes::position ? 'q' : 'p') << " dims=" << s
       << " grid=";
    for (int d = 0; d < s; ++d)
        os << (d ? "x" : "") << g.axes[std::size_t(d)].n;
    os << " t=" << detail::fmt_g17(f.t) << "\n";
    os << "# bounds=";
    for (int d = 0; d < s; ++d)
        os << (d ? "," : "") << detail::fmt_g17(g.axes[std::size_t(d)].lo) << ":"
           << detail::fmt_g17(g.axes[std::size_t(d)].hi);
    os << "\n# fields=";
    for (int c = 0; c < f.components; ++c) os << (c ? "," : "") << names[std::size_t(c)];
    os << "\n";
    Vec x(s);
    for (std::int64_t i = 0; i < f.nodes(); ++i) {
        g.node_coords(i, x);
        for (int d = 0; d < s; ++d) os << (d ? "," : "") << detail::fmt_g17(x[std::size_t(d)]);
        for (int c = 0; c < f.components; ++c) os << "," << detail::fmt_g17(f.at(c, i));
        os << "\n";
    }
}

inline void write_field_snapshot(const std::string& path, const GridField& f,
                                 const std::vector<std::string>& names) {
    std::ofstream os(path);
    if (!os) throw config_error("cannot open '" + path + "' for writing");
    write_field_snapshot(os, f, names);
    if (!os) throw config_error("write failed on '" + path + "'");
}

namespace detail {

// "key=value key=value" fields of a header comment line.
inline std::string header_value(const std::string& line, const std::string& key,
                                int lineno) {
    const std::string pat = key + "=";
    std::size_t pos = line.find(pat);
    if (pos == std::string::npos)
        throw format_error("header missing '" + key + "='", lineno);
    pos += pat.size();
    std::size_t end = line.find_first_of(" \t", pos);
    return line.substr(pos, end == std::string::npos ? std::string::npos : end - pos);
}

}  // namespace detail

// Boundary conditions are not part of the format; callers that need
// periodic axes on a re-read field say so here.
inline FieldSnapshot read_field_snapshot(std::istream& is,
                                         Boundary bc = Boundary::outflow) {
    std::string line;
    int lineno = 0;
    auto next_line = [&]() {
        if (!std::getline(is, line)) throw format_error("unexpected end of file", lineno);
        ++lineno;
    };

    next_line();
    if (line != "# hjfield v1") {
        if (line.rfind("# hjfield", 0) == 0)
            throw format_error("unsupported hjfield version: '" + line + "'", lineno);
        throw format_error("not an hjfield file (bad first line)", lineno);
    }

    next_line();
    const std::string axes = detail::header_value(line, "axes", lineno);
    if (axes != "q" && axes != "p")
        throw format_error("axes marker must be q or p, got '" + axes + "'", lineno);
    const int dims = int(detail::parse_double(detail::header_value(line, "dims", lineno), lineno));
    if (dims < 1 || dims > 8) throw format_error("dims out of range", lineno);
    auto grid_tok = detail::split(detail::header_value(line, "grid", lineno), 'x');
    if (int(grid_tok.size()) != dims)
        throw format_error("grid= lists " + std::to_string(grid_tok.size()) +
                               " sizes for dims=" + std::to_string(dims),
                           lineno);
    const double t = detail::parse_double(detail::header_value(line, "t", lineno), lineno);

    next_line();
    auto bounds_tok = detail::split(detail::header_value(line, "bounds", lineno), ',');
    if (int(bounds_tok.size()) != dims)
        throw format_error("bounds= count does not match dims", lineno);

    GridSpec g;
    g.kind = axes == "q" ? Axes::position : Axes::momentum;
    for (int d = 0; d < dims; ++d) {
        auto lohi = detail::split(bounds_tok[std::size_t(d)], ':');
        if (lohi.size() != 2) throw format_error("bounds entry needs min:max", lineno);
        AxisSpec ax;
        ax.lo = detail::parse_double(lohi[0], lineno);
        ax.hi = detail::parse_double(lohi[1], lineno);
        ax.n = int(detail::parse_double(grid_tok[std::size_t(d)], lineno));
        ax.bc = bc;
        g.axes.push_back(ax);
    }
    g.validate();

    next_line();
    std::size_t fpos = line.find("fields=");
    if (fpos == std::string::npos) throw format_error("header missing 'fields='", lineno);
    auto names = detail::split(line.substr(fpos + 7), ',');
    for (auto& n : names) n = detail::trim(n);
    if (names.empty() || names[0].empty())
        throw format_error("fields= names at least one field", lineno);

    FieldSnapshot snap;
    snap.names = names;
    snap.field = GridField::zeros(g, int(names.size()), t);
    const int ncols = dims + int(names.size());
    Vec x(dims);
    for (std::int64_t i = 0; i < snap.field.nodes(); ++i) {
        next_line();
        auto tok = detail::split(line, ',');
        if (int(tok.size()) != ncols)
            throw format_error("expected " + std::to_string(ncols) + " columns, got " +
                                   std::to_string(tok.size()),
                               lineno);
        g.node_coords(i, x);
        for (int d = 0; d < dims; ++d) {
            const double c = detail::parse_double(tok[std::size_t(d)], lineno);
            const double ref = x[std::size_t(d)];
            if (std::fabs(c - ref) > 1e-12 * std::max(1.0, std::fabs(ref)))
                throw format_error("coordinate " + std::to_string(d) +
                                       " disagrees with the grid (row order?)",
                                   lineno);
        }
        for (std::size_t c = 0; c < names.size(); ++c)
            snap.field.at(int(c), i) = detail::parse_double(tok[std::size_t(dims) + c], lineno);
    }
    return snap;
}

inline FieldSnapshot read_field_snapshot(const std::string& path,
                                         Boundary bc = Boundary::outflow) {
    std::ifstream is(path);
    if (!is) throw config_error("cannot open '" + path + "'");
    return read_field_snapshot(is, bc);
}

// ---- hjtraj --------------------------------------------------------------

inline void write_trajectory(std::ostream& os, const Trajectory& tr) {
    os << "# hjtraj v1\n";
    if (!tr.samples.empty()) {
        const std::size_t s = tr.samples.front().q.size();
        os << "# columns=t";
        for (std::size_t d = 0; d < s; ++d) os << ",q" << d + 1;
        for (std::size_t d = 0; d < s; ++d) os << ",p" << d + 1;
        os << "\n";
    }
    for (const auto& st : tr.samples) {
        os << detail::fmt_g17(st.t);
        for (double v : st.q) os << "," << detail::fmt_g17(v);
        for (double v : st.p) os << "," << detail::fmt_g17(v);
        os << "\n";
    }
}

inline void write_trajectory(const std::string& path, const Trajectory& tr) {
    std::ofstream os(path);
    if (!os) throw config_error("cannot open '" + path + "' for writing");
    write_trajectory(os, tr);
    if (!os) throw config_error("write failed on '" + path + "'");
}

inline Trajectory read_trajectory(std::istream& is) {
    std::string line;
    int lineno = 0;
    if (!std::getline(is, line)) throw format_error("empty trajectory file", 1);
    ++lineno;
    if (line != "# hjtraj v1") throw format_error("not an hjtraj v1 file", lineno);
    Trajectory tr;
    while (std::getline(is, line)) {
        ++lineno;
        const std::string body = detail::trim(line);
        if (body.empty() || body[0] == '#') continue;
        auto tok = detail::split(body, ',');
        if (tok.size() < 3 || tok.size() % 2 == 0)
            throw format_error("row needs t,q1..qs,p1..ps", lineno);
        const std::size_t s = tok.size() / 2;
        PhaseState st;
        st.t = detail::parse_double(tok[0], lineno);
        for (std::size_t d = 0; d < s; ++d) st.q.push_back(detail::parse_double(tok[1 + d], lineno));
        for (std::size_t d = 0; d < s; ++d)
            st.p.push_back(detail::parse_double(tok[1 + s + d], lineno));
        if (!tr.samples.empty() && tr.samples.front().q.size() != s)
            throw format_error("row dimension changed mid-file", lineno);
        tr.samples.push_back(std::move(st));
    }
    return tr;
}

inline Trajectory read_trajectory(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw config_error("cannot open '" + path + "'");
    return read_trajectory(is);
}

// ---- INI configuration ---------------------------------------------------

struct IniValue {
    std::string text;
    int line = 0;
    bool quoted = false;
};

// Sections are fixed ([model] [grid] [time] [init] [output] [layers]) so a
// typo fails loudly instead of being silently ignored. Values are bare
// tokens or double-quoted strings (for expressions); '#' starts a comment
// outside quotes.
class IniFile {
public:
    static IniFile parse_string(const std::string& text) {
        IniFile ini;
        std::istringstream is(text);
        ini.parse(is);
        return ini;
    }

    static IniFile parse_file(const std::string& path) {
        std::ifstream is(path);
        if (!is) throw config_error("cannot open config '" + path + "'");
        IniFile ini;
        ini.parse(is);
        return ini;
    }

    bool has_section(const std::string& sec) const { return sections_.count(sec) > 0; }

    bool has(const std::string& sec, const std::string& key) const {
        return find(sec, key) != nullptr;
    }

    const IniValue* find(const std::string& sec, const std::string& key) const {
        auto s = sections_.find(sec);
        if (s == sections_.end()) return nullptr;
        auto k = s->second.find(key);
        return k == s->second.end() ? nullptr : &k->second;
    }

    const IniValue& require(const std::string& sec, const std::string& key) const {
        const IniValue* v = find(sec, key);
        if (!v)
            throw config_error("config is missing " + key + " in [" + sec + "]");
        return *v;
    }

    double number(const std::string& sec, const std::string& key) const {
        const IniValue& v = require(sec, key);
        return detail::parse_double(v.text, v.line);
    }

    double number_or(const std::string& sec, const std::string& key, double def) const {
        const IniValue* v = find(sec, key);
        return v ? detail::parse_double(v->text, v->line) : def;
    }

    int integer(const std::string& sec, const std::string& key) const {
        const IniValue& v = require(sec, key);
        const double d = detail::parse_double(v.text, v.line);
        if (d != std::floor(d)) throw format_error(key + " must be an integer", v.line);
        return int(d);
    }

    int integer_or(const std::string& sec, const std::string& key, int def) const {
        return find(sec, key) ? integer(sec, key) : def;
    }

    std::string text_or(const std::string& sec, const std::string& key,
                        const std::string& def) const {
        const IniValue* v = find(sec, key);
        return v ? v->text : def;
    }

    // expression values must be double-quoted (so "x^2" is never read as a
    // malformed number later)
    const IniValue& expression(const std::string& sec, const std::string& key) const {
        const IniValue& v = require(sec, key);
        if (!v.quoted)
            throw format_error("expression " + key + " must be double-quoted", v.line);
        return v;
    }

    std::vector<double> number_list(const std::string& sec, const std::string& key) const {
        const IniValue& v = require(sec, key);
        std::vector<double> out;
        for (const auto& tok : detail::split(v.text, ','))
            out.push_back(detail::parse_double(detail::trim(tok), v.line));
        return out;
    }

    std::vector<std::string> token_list(const std::string& sec, const std::string& key) const {
        const IniValue& v = require(sec, key);
        std::vector<std::string> out;
        for (const auto& tok : detail::split(v.text, ',')) out.push_back(detail::trim(tok));
        return out;
    }

private:
    void parse(std::istream& is) {
        static const char* known[] = {"model", "grid", "time", "init", "output", "layers"};
        std::string raw, section;
        int lineno = 0;
        while (std::getline(is, raw)) {
            ++lineno;
            std::string line = strip_comment(raw, lineno);
            line = detail::trim(line);
            if (line.empty()) continue;
            if (line.front() == '[') {
                if (line.back() != ']') throw format_error("unterminated section header", lineno);
                section = detail::trim(line.substr(1, line.size() - 2));
                bool ok = false;
                for (const char* k : known) ok = ok || section == k;
                if (!ok) throw format_error("unknown section [" + section + "]", lineno);
                if (sections_.count(section))
                    throw format_error("duplicate section [" + section + "]", lineno);
                sections_[section];
                continue;
            }
            std::size_t eq = line.find('=');
            if (eq == std::string::npos)
                throw format_error("expected key = value", lineno);
            if (section.empty())
                throw format_error("key outside any section", lineno);
            std::string key = detail::trim(line.substr(0, eq));
            std::string val = detail::trim(line.substr(eq + 1));
            if (key.empty()) throw format_error("empty key", lineno);
            IniValue v;
            v.line = lineno;
            if (!val.empty() && val.front() == '"') {
                if (val.size() < 2 || val.back() != '"')
                    throw format_error("unterminated quote", lineno);
                v.text = val.substr(1, val.size() - 2);
                v.quoted = true;
            } else {
                if (val.find('"') != std::string::npos)
                    throw format_error("stray quote in value", lineno);
                v.text = val;
            }
            auto& sec_map = sections_[section];
            if (sec_map.count(key))
                throw format_error("duplicate key " + key + " in [" + section + "]", lineno);
            sec_map.emplace(key, std::move(v));
        }
    }

    static std::string strip_comment(const std::string& line, int lineno) {
        bool in_quote = false;
        for (std::size_t i = 0; i < line.size(); ++i) {
            if (line[i] == '"') in_quote = !in_quote;
            else if (line[i] == '#' && !in_quote) return line.substr(0, i);
        }
        if (in_quote) throw format_error("unterminated quote", lineno);
        return line;
    }

    std::map<std::string, std::map<std::string, IniValue>> sections_;
};

}  // namespace hjens
