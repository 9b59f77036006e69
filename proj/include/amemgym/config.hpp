#pragma once

// Run settings: generation preset plus backend selection, loadable from an
// INI file. Command-line flags override file values, which override defaults.

#include <map>
#include <string>

#include "amemgym/log.hpp"
#include "amemgym/model.hpp"
#include "amemgym/util.hpp"

namespace amemgym {

struct BackendSettings {
    std::string mode = "scripted";  // scripted | live
    std::string chat_model = "gpt-4o-mini";
    std::string embed_model = "text-embedding-3-small";
    double timeout_s = 60.0;
    int max_attempts = 3;
};

struct Settings {
    GenConfig gen;  // defaults to the base preset
    BackendSettings backend;
};

// ─── INI parsing ─────────────────────────────────────────────────────────────

/// Minimal INI: [section] headers, key = value lines, # or ; comments.
inline std::map<std::string, std::map<std::string, std::string>> parse_ini(
    const std::string& text) {
    std::map<std::string, std::map<std::string, std::string>> out;
    std::string section;
    std::size_t line_no = 0;
    for (const auto& raw : split_lines(text)) {
        ++line_no;
        std::string line = trim(raw);
        if (line.empty() || line[0] == '#' || line[0] == ';') continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw Error(ErrorKind::parse,
                            "config line " + std::to_string(line_no) + ": unclosed section");
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw Error(ErrorKind::parse,
                        "config line " + std::to_string(line_no) + ": expected key = value");
        out[section][trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }
    return out;
}

inline int to_int(const std::string& v, const std::string& key) {
    try {
        std::size_t used = 0;
        int x = std::stoi(v, &used);
        if (used != v.size()) throw std::invalid_argument("trailing");
        return x;
    } catch (...) {
        throw Error(ErrorKind::parse, "config key '" + key + "' is not an integer: " + v);
    }
}

inline double to_double(const std::string& v, const std::string& key) {
    try {
        std::size_t used = 0;
        double x = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument("trailing");
        return x;
    } catch (...) {
        throw Error(ErrorKind::parse, "config key '" + key + "' is not a number: " + v);
    }
}

inline Settings settings_from_ini(const std::string& text) {
    Settings s;
    auto ini = parse_ini(text);
    for (const auto& [section, kvs] : ini) {
        if (section == "gen") {
            for (const auto& [k, v] : kvs) {
                if (k == "n_periods") s.gen.n_periods = to_int(v, k);
                else if (k == "states_per_question") s.gen.states_per_question = to_int(v, k);
                else if (k == "turns_per_exposure") s.gen.turns_per_exposure = to_int(v, k);
                else if (k == "num_questions") s.gen.num_questions = to_int(v, k);
                else if (k == "num_choices_per_state") s.gen.num_choices_per_state = to_int(v, k);
                else if (k == "max_changes_per_state") s.gen.max_changes_per_state = to_int(v, k);
                else if (k == "num_changes_per_period")
                    s.gen.num_changes_per_period = to_int(v, k);
                else if (k == "max_options_per_question")
                    s.gen.max_options_per_question = to_int(v, k);
                else if (k == "language") s.gen.language = v;
                else log_warn("config: unknown [gen] key '" + k + "'");
            }
        } else if (section == "backend") {
            for (const auto& [k, v] : kvs) {
                if (k == "mode") {
                    if (v != "scripted" && v != "live")
                        throw Error(ErrorKind::usage, "backend mode must be scripted or live");
                    s.backend.mode = v;
                } else if (k == "chat_model") s.backend.chat_model = v;
                else if (k == "embed_model") s.backend.embed_model = v;
                else if (k == "timeout_s") s.backend.timeout_s = to_double(v, k);
                else if (k == "max_attempts") s.backend.max_attempts = to_int(v, k);
                else log_warn("config: unknown [backend] key '" + k + "'");
            }
        } else {
            log_warn("config: unknown section '" + section + "'");
        }
    }
    return s;
}

/// "base" and "extra" are built-in presets; anything else is an INI path.
inline Settings resolve_settings(const std::string& choice) {
    Settings s;
    if (choice.empty() || choice == "base") {
        s.gen = GenConfig::base();
        return s;
    }
    if (choice == "extra") {
        s.gen = GenConfig::extra();
        return s;
    }
    return settings_from_ini(read_file(choice));
}

}  // namespace amemgym
