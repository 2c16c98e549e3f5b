#pragma once

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "model.hpp"

namespace missmdp {

struct ParseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

namespace detail {

inline std::string strip_comment(const std::string& line) {
    auto pos = line.find('#');
    return pos == std::string::npos ? line : line.substr(0, pos);
}

inline std::vector<std::string> tokens_of(const std::string& line) {
    std::istringstream in(line);
    std::vector<std::string> out;
    std::string tok;
    while (in >> tok) out.push_back(tok);
    return out;
}

inline long parse_int(const std::string& tok, const char* what, int line_no) {
    try {
        std::size_t used = 0;
        long v = std::stol(tok, &used);
        if (used != tok.size()) throw std::invalid_argument(tok);
        return v;
    } catch (const std::exception&) {
        throw ParseError("line " + std::to_string(line_no) + ": bad " + std::string(what) + " '" + tok + "'");
    }
}

inline double parse_real(const std::string& tok, const char* what, int line_no) {
    try {
        std::size_t used = 0;
        double v = std::stod(tok, &used);
        if (used != tok.size()) throw std::invalid_argument(tok);
        return v;
    } catch (const std::exception&) {
        throw ParseError("line " + std::to_string(line_no) + ": bad " + std::string(what) + " '" + tok + "'");
    }
}

inline std::string format_prob(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace detail

/**
 * Parses the line-oriented model format:
 *
 *   features d1 ... dn
 *   actions k
 *   gamma g
 *   init s p
 *   T s a s' p
 *   R s a v
 *   M s r_bits p
 *   terminal s
 *
 * '#' starts a comment; declaration order is free except that `features`
 * must precede any state-indexed line.
 */
inline std::pair<MissMdp, MissingnessTable> parse_model(std::istream& in) {
    MissMdp model;
    MissingnessTable table;
    bool have_space = false, have_actions = false, have_gamma = false;
    FeatureSpace space;
    int action_count = 0;
    double gamma = 0.0;
    struct Pending {
        int kind;  // 0 init, 1 T, 2 R, 3 M, 4 terminal
        long s, a, s2;
        IndicatorMask mask;
        double value;
    };
    std::vector<Pending> pending;

    std::string raw;
    int line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        auto toks = detail::tokens_of(detail::strip_comment(raw));
        if (toks.empty()) continue;
        const std::string& head = toks[0];
        auto need = [&](std::size_t n) {
            if (toks.size() != n)
                throw ParseError("line " + std::to_string(line_no) + ": '" + head + "' expects " +
                                 std::to_string(n - 1) + " fields");
        };
        if (head == "features") {
            if (toks.size() < 2) throw ParseError("line " + std::to_string(line_no) + ": empty feature list");
            std::vector<int> domains;
            for (std::size_t i = 1; i < toks.size(); ++i)
                domains.push_back(static_cast<int>(detail::parse_int(toks[i], "feature size", line_no)));
            space = FeatureSpace(domains);
            have_space = true;
        } else if (head == "actions") {
            need(2);
            action_count = static_cast<int>(detail::parse_int(toks[1], "action count", line_no));
            have_actions = true;
        } else if (head == "gamma") {
            need(2);
            gamma = detail::parse_real(toks[1], "gamma", line_no);
            have_gamma = true;
        } else if (head == "init") {
            need(3);
            pending.push_back({0, detail::parse_int(toks[1], "state", line_no), 0, 0, 0,
                               detail::parse_real(toks[2], "probability", line_no)});
        } else if (head == "T") {
            need(5);
            pending.push_back({1, detail::parse_int(toks[1], "state", line_no),
                               detail::parse_int(toks[2], "action", line_no),
                               detail::parse_int(toks[3], "state", line_no), 0,
                               detail::parse_real(toks[4], "probability", line_no)});
        } else if (head == "R") {
            need(4);
            pending.push_back({2, detail::parse_int(toks[1], "state", line_no),
                               detail::parse_int(toks[2], "action", line_no), 0, 0,
                               detail::parse_real(toks[3], "reward", line_no)});
        } else if (head == "M") {
            need(4);
            IndicatorMask mask;
            try {
                mask = indicator_from_string(toks[2]);
            } catch (const std::exception& e) {
                throw ParseError("line " + std::to_string(line_no) + ": " + e.what());
            }
            pending.push_back({3, detail::parse_int(toks[1], "state", line_no), 0, 0, mask,
                               detail::parse_real(toks[3], "probability", line_no)});
        } else if (head == "terminal") {
            need(2);
            pending.push_back({4, detail::parse_int(toks[1], "state", line_no), 0, 0, 0, 0.0});
        } else {
            throw ParseError("line " + std::to_string(line_no) + ": unknown declaration '" + head + "'");
        }
    }
    if (!have_space) throw ParseError("model file lacks a features line");
    if (!have_actions) throw ParseError("model file lacks an actions line");
    if (!have_gamma) throw ParseError("model file lacks a gamma line");
    if (action_count < 1) throw ParseError("action count must be positive");

    model = MissMdp(space, action_count, gamma);
    table = MissingnessTable(space.feature_count(), space.state_count());
    auto check_state = [&](long s) {
        if (s < 0 || s >= space.state_count()) throw ParseError("state id " + std::to_string(s) + " out of range");
        return static_cast<StateId>(s);
    };
    auto check_action = [&](long a) {
        if (a < 0 || a >= action_count) throw ParseError("action id " + std::to_string(a) + " out of range");
        return static_cast<int>(a);
    };
    for (const auto& p : pending) {
        switch (p.kind) {
            case 0: model.set_initial(check_state(p.s), p.value); break;
            case 1: model.set_transition(check_state(p.s), check_action(p.a), check_state(p.s2), p.value); break;
            case 2: model.set_reward(check_state(p.s), check_action(p.a), p.value); break;
            case 3:
                if (p.mask > space.full_mask()) throw ParseError("indicator width does not match feature count");
                table.add_mass(check_state(p.s), p.mask, p.value);
                break;
            case 4: model.set_terminal(check_state(p.s)); break;
        }
    }
    return {std::move(model), std::move(table)};
}

inline std::pair<MissMdp, MissingnessTable> load_model(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open model file: " + path);
    return parse_model(in);
}

inline void emit_model(std::ostream& out, const MissMdp& model, const MissingnessTable& table) {
    const FeatureSpace& space = model.space();
    out << "features";
    for (int d : space.domains()) out << ' ' << d;
    out << '\n';
    out << "actions " << model.action_count() << '\n';
    out << "gamma " << detail::format_prob(model.gamma()) << '\n';
    for (const auto& [s, p] : model.initial()) out << "init " << s << ' ' << detail::format_prob(p) << '\n';
    for (StateId s = 0; s < model.state_count(); ++s) {
        for (int a = 0; a < model.action_count(); ++a) {
            for (const auto& e : model.transitions(s, a))
                out << "T " << s << ' ' << a << ' ' << e.next << ' ' << detail::format_prob(e.prob) << '\n';
            double r = model.has_transition_row(s, a) ? model.reward(s, a) : 0.0;
            if (r != 0.0) out << "R " << s << ' ' << a << ' ' << detail::format_prob(r) << '\n';
        }
    }
    for (StateId s = 0; s < model.state_count(); ++s)
        if (model.terminal(s)) out << "terminal " << s << '\n';
    for (StateId s = 0; s < table.state_count(); ++s)
        for (const auto& e : table.row(s))
            out << "M " << s << ' ' << indicator_to_string(e.mask, space.feature_count()) << ' '
                << detail::format_prob(e.prob) << '\n';
}

inline void save_model(const std::string& path, const MissMdp& model, const MissingnessTable& table) {
    std::ofstream out(path);
    if (!out) throw ParseError("cannot open for writing: " + path);
    emit_model(out, model, table);
}

}  // namespace missmdp
