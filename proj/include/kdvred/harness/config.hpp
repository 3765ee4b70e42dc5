#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "kdvred/error.hpp"
#include "kdvred/grid.hpp"
#include "kdvred/harness/csv.hpp"
#include "kdvred/model.hpp"
#include "kdvred/nls.hpp"
#include "kdvred/reduction.hpp"

namespace kdvred::harness {

struct GridSpec {
    double length = 300.0;
    std::size_t n_points = 4096;
    std::optional<double> x_min;  ///< defaults to -length / 2

    Grid grid() const {
        const double lo = x_min.value_or(-0.5 * length);
        return Grid{lo, lo + length, n_points};
    }
};

struct IntegratorSpec {
    std::optional<double> dt;  ///< unset: dt = m dx^2 / (8 hbar)
    nls::Scheme scheme = nls::Scheme::ExplicitLeapfrog;
    nls::Boundary boundary = nls::Boundary::Periodic;
    double seam_ramp = 0.1;  ///< 0 disables the seam phase ramp
};

struct RunSpec {
    std::vector<int> branches{2, 1};
    std::vector<double> snapshots{0.0, 10.0, 20.0, 30.0};
    double sample_interval = 1.0;

    double t_end() const { return snapshots.empty() ? 0.0 : *std::max_element(snapshots.begin(), snapshots.end()); }
};

struct SweepSpec {
    double h_min = 0.0;
    double h_max = 1.0;
    std::size_t samples = 101;
    std::size_t substeps = 4;
    std::size_t cross_check_every = 10;
    bool allow_endpoint = true;
};

/// Fully resolved configuration of one invocation.
struct RunConfig {
    std::string preset;  ///< name of the preset the config was built on, if any
    std::optional<std::vector<double>> g;
    double h = 0.0;
    std::optional<Eigen::MatrixXd> alpha;
    BackgroundState bg;
    reduction::ScalingParams scaling;
    GridSpec grid;
    IntegratorSpec integrator;
    RunSpec run;
    SweepSpec sweep;

    CouplingModel coupling() const { return alpha ? CouplingModel::general(*alpha) : CouplingModel::structured(*g, h); }

    std::size_t species() const { return bg.size(); }

    double dt() const {
        return integrator.dt.value_or(nls::IntegratorConfig::default_dt(grid.grid(), bg));
    }

    nls::IntegratorConfig integrator_config() const { return {dt(), integrator.scheme, integrator.boundary}; }

    /// Structural checks; positivity of alpha is left to the operations so
    /// that they can report the classification.
    void validate() const {
        if (g.has_value() == alpha.has_value()) throw ConfigError("config: give exactly one of model.g or model.alpha");
        const auto c = coupling();
        bg.validate_against(c);
        scaling.validate();
        grid.grid().validate();
        if (!(grid.length > 0.0)) throw ConfigError("config: grid.length must be positive");
        if (integrator.dt && !(*integrator.dt > 0.0)) throw ConfigError("config: integrator.dt must be positive");
        if (integrator.scheme == nls::Scheme::ExplicitLeapfrog) {
            const double bound = nls::IntegratorConfig::stability_bound(grid.grid(), bg);
            if (dt() > bound * (1.0 + 1e-12)) {
                throw ConfigError("config: integrator.dt = " + format_double(dt()) +
                                  " exceeds the leapfrog stability bound m dx^2/(4 hbar) = " + format_double(bound));
            }
        }
        if (integrator.scheme == nls::Scheme::SplitStepVerification && integrator.boundary != nls::Boundary::Periodic) {
            throw ConfigError("config: split-step scheme requires integrator.boundary = periodic");
        }
        if (!(integrator.seam_ramp >= 0.0 && integrator.seam_ramp <= 0.5)) {
            throw ConfigError("config: integrator.seam_ramp must lie in [0, 0.5]");
        }
        const int n = static_cast<int>(species());
        if (run.branches.empty()) throw ConfigError("config: run.branches is empty");
        for (int b : run.branches) {
            if (b == 0 || b > n || b < -n) {
                throw ConfigError("config: branch " + std::to_string(b) + " outside +-1.." + std::to_string(n));
            }
        }
        if (run.snapshots.empty()) throw ConfigError("config: run.snapshots is empty");
        for (std::size_t i = 0; i < run.snapshots.size(); ++i) {
            if (!(run.snapshots[i] >= 0.0) || (i > 0 && !(run.snapshots[i] > run.snapshots[i - 1]))) {
                throw ConfigError("config: run.snapshots must be non-negative and strictly increasing");
            }
        }
        if (!(run.sample_interval > 0.0)) throw ConfigError("config: run.sample_interval must be positive");
        if (!(sweep.h_min >= 0.0) || !(sweep.h_max >= sweep.h_min)) {
            throw ConfigError("config: sweep requires 0 <= h_min <= h_max");
        }
        if (sweep.samples < 2) throw ConfigError("config: sweep.samples must be >= 2");
        if (sweep.substeps < 1) throw ConfigError("config: sweep.substeps must be >= 1");
        if (sweep.cross_check_every < 1) throw ConfigError("config: sweep.cross_check_every must be >= 1");
    }
};

namespace detail {

inline std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

inline double parse_double(const std::string& key, const std::string& text) {
    const std::string t = trim(text);
    double v = 0.0;
    const char* first = t.data();
    const char* last = t.data() + t.size();
    if (!t.empty() && *first == '+') ++first;
    const auto res = std::from_chars(first, last, v);
    if (t.empty() || res.ec != std::errc{} || res.ptr != last || !std::isfinite(v)) {
        throw ConfigError("config: " + key + ": expected a finite number, got '" + t + "'");
    }
    return v;
}

inline long parse_integer(const std::string& key, const std::string& text) {
    const std::string t = trim(text);
    long v = 0;
    const char* first = t.data();
    const char* last = t.data() + t.size();
    if (!t.empty() && *first == '+') ++first;
    const auto res = std::from_chars(first, last, v);
    if (t.empty() || res.ec != std::errc{} || res.ptr != last) {
        throw ConfigError("config: " + key + ": expected an integer, got '" + t + "'");
    }
    return v;
}

inline std::vector<std::string> split(const std::string& text, char sep) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream in(text);
    while (std::getline(in, item, sep)) out.push_back(trim(item));
    if (!text.empty() && text.back() == sep) out.emplace_back();
    return out;
}

inline std::vector<double> parse_list(const std::string& key, const std::string& text) {
    std::vector<double> out;
    for (const auto& item : split(text, ',')) out.push_back(parse_double(key, item));
    return out;
}

inline bool parse_bool(const std::string& key, const std::string& text) {
    const std::string t = trim(text);
    if (t == "true" || t == "yes" || t == "1") return true;
    if (t == "false" || t == "no" || t == "0") return false;
    throw ConfigError("config: " + key + ": expected true or false, got '" + t + "'");
}

inline std::string list_text(const std::vector<double>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + format_double(v[i]);
    return s;
}

using Flat = std::map<std::string, std::string>;

inline const std::map<std::string, std::set<std::string>>& known_keys() {
    static const std::map<std::string, std::set<std::string>> keys{
        {"model", {"g", "h", "alpha"}},
        {"background", {"rho0", "mass", "hbar"}},
        {"scaling", {"epsilon", "soliton_speed"}},
        {"grid", {"length", "n_points", "x_min"}},
        {"integrator", {"dt", "scheme", "boundary", "seam_ramp"}},
        {"run", {"branches", "snapshots", "sample_interval"}},
        {"sweep", {"h_min", "h_max", "samples", "substeps", "cross_check_every", "allow_endpoint"}},
    };
    return keys;
}

/// INI text -> "section.key" -> value, rejecting unknown sections and keys.
inline Flat parse_ini(const std::string& text, const std::string& source) {
    boost::property_tree::ptree tree;
    std::istringstream in(text);
    try {
        boost::property_tree::read_ini(in, tree);
    } catch (const boost::property_tree::ini_parser_error& e) {
        throw ConfigError("config: " + source + ": " + e.message() + " (line " + std::to_string(e.line()) + ")");
    }
    Flat flat;
    const auto& known = known_keys();
    for (const auto& [section, body] : tree) {
        const auto it = known.find(section);
        if (it == known.end()) throw ConfigError("config: " + source + ": unknown section [" + section + "]");
        if (body.empty() && !body.data().empty()) {
            throw ConfigError("config: " + source + ": key '" + section + "' outside a section");
        }
        for (const auto& [key, value] : body) {
            if (!it->second.count(key)) {
                throw ConfigError("config: " + source + ": unknown key '" + key + "' in [" + section + "]");
            }
            flat[section + "." + key] = value.data();
        }
    }
    return flat;
}

inline RunConfig from_flat(const Flat& flat, const std::string& preset) {
    RunConfig c;
    c.preset = preset;
    auto get = [&](const std::string& key) -> std::optional<std::string> {
        const auto it = flat.find(key);
        if (it == flat.end()) return std::nullopt;
        return it->second;
    };
    if (auto v = get("model.g")) c.g = parse_list("model.g", *v);
    if (auto v = get("model.h")) c.h = parse_double("model.h", *v);
    if (auto v = get("model.alpha")) {
        const auto rows = split(*v, ';');
        const auto n = static_cast<Eigen::Index>(rows.size());
        Eigen::MatrixXd a(n, n);
        for (Eigen::Index i = 0; i < n; ++i) {
            const auto r = parse_list("model.alpha", rows[static_cast<std::size_t>(i)]);
            if (static_cast<Eigen::Index>(r.size()) != n) throw ConfigError("config: model.alpha must be square");
            for (Eigen::Index j = 0; j < n; ++j) a(i, j) = r[static_cast<std::size_t>(j)];
        }
        c.alpha = a;
    }
    if (auto v = get("background.rho0")) c.bg.rho0 = parse_list("background.rho0", *v);
    if (auto v = get("background.mass")) c.bg.mass = parse_double("background.mass", *v);
    if (auto v = get("background.hbar")) c.bg.hbar = parse_double("background.hbar", *v);
    if (auto v = get("scaling.epsilon")) c.scaling.epsilon = parse_double("scaling.epsilon", *v);
    if (auto v = get("scaling.soliton_speed")) c.scaling.soliton_speed = parse_double("scaling.soliton_speed", *v);
    if (auto v = get("grid.length")) c.grid.length = parse_double("grid.length", *v);
    if (auto v = get("grid.n_points")) {
        const long n = parse_integer("grid.n_points", *v);
        if (n < 16) throw ConfigError("config: grid.n_points must be >= 16");
        c.grid.n_points = static_cast<std::size_t>(n);
    }
    if (auto v = get("grid.x_min")) c.grid.x_min = parse_double("grid.x_min", *v);
    if (auto v = get("integrator.dt")) {
        if (trim(*v) == "auto") {
            c.integrator.dt.reset();
        } else {
            c.integrator.dt = parse_double("integrator.dt", *v);
        }
    }
    if (auto v = get("integrator.scheme")) {
        const auto s = trim(*v);
        if (s == "leapfrog") {
            c.integrator.scheme = nls::Scheme::ExplicitLeapfrog;
        } else if (s == "split-step") {
            c.integrator.scheme = nls::Scheme::SplitStepVerification;
        } else {
            throw ConfigError("config: integrator.scheme must be leapfrog or split-step, got '" + s + "'");
        }
    }
    if (auto v = get("integrator.boundary")) {
        const auto s = trim(*v);
        if (s == "periodic") {
            c.integrator.boundary = nls::Boundary::Periodic;
        } else if (s == "clamped") {
            c.integrator.boundary = nls::Boundary::ClampedBackground;
        } else {
            throw ConfigError("config: integrator.boundary must be periodic or clamped, got '" + s + "'");
        }
    }
    if (auto v = get("integrator.seam_ramp")) c.integrator.seam_ramp = parse_double("integrator.seam_ramp", *v);
    if (auto v = get("run.branches")) {
        c.run.branches.clear();
        for (const auto& item : split(*v, ',')) c.run.branches.push_back(static_cast<int>(parse_integer("run.branches", item)));
    }
    if (auto v = get("run.snapshots")) c.run.snapshots = parse_list("run.snapshots", *v);
    if (auto v = get("run.sample_interval")) c.run.sample_interval = parse_double("run.sample_interval", *v);
    if (auto v = get("sweep.h_min")) c.sweep.h_min = parse_double("sweep.h_min", *v);
    if (auto v = get("sweep.h_max")) c.sweep.h_max = parse_double("sweep.h_max", *v);
    auto count = [&](const std::string& key, std::size_t& out) {
        if (auto v = get(key)) {
            const long n = parse_integer(key, *v);
            if (n < 1) throw ConfigError("config: " + key + " must be positive");
            out = static_cast<std::size_t>(n);
        }
    };
    count("sweep.samples", c.sweep.samples);
    count("sweep.substeps", c.sweep.substeps);
    count("sweep.cross_check_every", c.sweep.cross_check_every);
    if (auto v = get("sweep.allow_endpoint")) c.sweep.allow_endpoint = parse_bool("sweep.allow_endpoint", *v);
    return c;
}

} // namespace detail

inline const std::map<std::string, std::string>& builtin_presets() {
    static const std::map<std::string, std::string> presets{
        {"paper-sec5", R"(; Two-species soliton comparison: g = (1, 1), h = 0.5, rho0 = (1, 0.1).

[model]
g = 1, 1
h = 0.5

[background]
rho0 = 1, 0.1
mass = 1
hbar = 1

[scaling]
epsilon = 0.2
soliton_speed = 2.5

[grid]
length = 300
n_points = 12000

[integrator]
dt = 7.8125e-5
scheme = leapfrog
boundary = periodic
seam_ramp = 0.1

[run]
branches = 2, 1
snapshots = 0, 10, 20, 30
sample_interval = 1

[sweep]
h_min = 0
h_max = 1
samples = 101
substeps = 4
cross_check_every = 10
allow_endpoint = true
)"},
        {"desk", R"(; Reduced grid of the two-species comparison (dt = dx^2 / 8).

[model]
g = 1, 1
h = 0.5

[background]
rho0 = 1, 0.1
mass = 1
hbar = 1

[scaling]
epsilon = 0.2
soliton_speed = 2.5

[grid]
length = 300
n_points = 4096

[integrator]
dt = auto
scheme = leapfrog
boundary = periodic
seam_ramp = 0.1

[run]
branches = 2, 1
snapshots = 0, 10, 20, 30
sample_interval = 1

[sweep]
h_min = 0
h_max = 1
samples = 101
substeps = 4
cross_check_every = 10
allow_endpoint = true
)"},
    };
    return presets;
}

/// Parses config text on top of an optional preset. Keys in the text
/// override the preset; model.g and model.alpha replace each other.
inline RunConfig parse_config(const std::string& text, const std::string& source,
                              const std::optional<std::string>& preset = std::nullopt) {
    detail::Flat flat;
    std::string preset_name;
    if (preset) {
        const auto it = builtin_presets().find(*preset);
        if (it == builtin_presets().end()) {
            throw ConfigError("unknown preset '" + *preset + "' (available: paper-sec5, desk)");
        }
        flat = detail::parse_ini(it->second, "preset " + *preset);
        preset_name = *preset;
    }
    const auto overlay = detail::parse_ini(text, source);
    if (overlay.count("model.alpha")) flat.erase("model.g");
    if (overlay.count("model.g")) flat.erase("model.alpha");
    for (const auto& [k, v] : overlay) flat[k] = v;
    RunConfig c = detail::from_flat(flat, preset_name);
    c.validate();
    return c;
}

inline RunConfig load_preset(const std::string& name) { return parse_config("", "preset", name); }

inline RunConfig load_config(const std::optional<std::string>& path, const std::optional<std::string>& preset) {
    if (!path && !preset) throw ConfigError("no configuration: pass --config <path> and/or --preset <name>");
    std::string text;
    std::string source = "preset";
    if (path) {
        std::ifstream in(*path, std::ios::binary);
        if (!in) throw ConfigError("cannot read config file " + *path);
        std::ostringstream buf;
        buf << in.rdbuf();
        text = buf.str();
        source = *path;
    }
    return parse_config(text, source, preset);
}

/// "section.key = value" lines for every resolved setting (the output
/// directory is deliberately absent so reruns into other folders match).
inline std::vector<std::string> echo(const RunConfig& c) {
    std::vector<std::string> out;
    out.push_back("config.preset = " + (c.preset.empty() ? std::string("none") : c.preset));
    if (c.g) {
        out.push_back("model.g = " + detail::list_text(*c.g));
        out.push_back("model.h = " + format_double(c.h));
    } else {
        std::string rows;
        for (Eigen::Index i = 0; i < c.alpha->rows(); ++i) {
            std::vector<double> r(static_cast<std::size_t>(c.alpha->cols()));
            for (Eigen::Index j = 0; j < c.alpha->cols(); ++j) r[static_cast<std::size_t>(j)] = (*c.alpha)(i, j);
            rows += (i ? "; " : "") + detail::list_text(r);
        }
        out.push_back("model.alpha = " + rows);
    }
    out.push_back("background.rho0 = " + detail::list_text(c.bg.rho0));
    out.push_back("background.mass = " + format_double(c.bg.mass));
    out.push_back("background.hbar = " + format_double(c.bg.hbar));
    out.push_back("scaling.epsilon = " + format_double(c.scaling.epsilon));
    out.push_back("scaling.soliton_speed = " + format_double(c.scaling.soliton_speed));
    const Grid grid = c.grid.grid();
    out.push_back("grid.length = " + format_double(c.grid.length));
    out.push_back("grid.n_points = " + std::to_string(c.grid.n_points));
    out.push_back("grid.x_min = " + format_double(grid.x_min));
    out.push_back("grid.dx = " + format_double(grid.dx()));
    out.push_back("integrator.dt = " + format_double(c.dt()) + (c.integrator.dt ? "" : " (auto: m dx^2 / (8 hbar))"));
    out.push_back(std::string("integrator.scheme = ") +
                  (c.integrator.scheme == nls::Scheme::ExplicitLeapfrog ? "leapfrog" : "split-step"));
    out.push_back(std::string("integrator.boundary = ") +
                  (c.integrator.boundary == nls::Boundary::Periodic ? "periodic" : "clamped"));
    out.push_back("integrator.seam_ramp = " + format_double(c.integrator.seam_ramp));
    std::string branches;
    for (std::size_t i = 0; i < c.run.branches.size(); ++i) branches += (i ? ", " : "") + std::to_string(c.run.branches[i]);
    out.push_back("run.branches = " + branches);
    out.push_back("run.snapshots = " + detail::list_text(c.run.snapshots));
    out.push_back("run.sample_interval = " + format_double(c.run.sample_interval));
    out.push_back("sweep.h_min = " + format_double(c.sweep.h_min));
    out.push_back("sweep.h_max = " + format_double(c.sweep.h_max));
    out.push_back("sweep.samples = " + std::to_string(c.sweep.samples));
    out.push_back("sweep.substeps = " + std::to_string(c.sweep.substeps));
    out.push_back("sweep.cross_check_every = " + std::to_string(c.sweep.cross_check_every));
    out.push_back(std::string("sweep.allow_endpoint = ") + (c.sweep.allow_endpoint ? "true" : "false"));
    return out;
}

} // namespace kdvred::harness
