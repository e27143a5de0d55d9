#pragma once

// Experiment configuration for the qfl CLI.
//
// A config is a sectioned key-value file (INI, `;` comments). The manifest a
// run writes (JSON) carries the same sections under "config" and is accepted
// as a config too. Every key has a default; unknown keys are errors.

#include <charconv>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "json.hpp"
#include "qfl/qfl.hpp"

namespace qfl::cli {

using Section = std::map<std::string, std::string>;
using ConfigMap = std::map<std::string, Section>;

enum class DataSourceKind { SYNTH, CSV };

struct DataSource {
    DataSourceKind kind = DataSourceKind::SYNTH;
    std::string path;
    std::size_t samples = 240;
    std::size_t features = 16;
    std::size_t classes = 2;
    double separation = 4.0;
    std::uint64_t seed = 7;
};

struct RunConfig {
    DataSource data;
    FederationConfig federation;
    // Model knobs; the qubit count follows from the data dimension.
    EncodingScheme encoding = EncodingScheme::AMPLITUDE;
    std::size_t reps = 3;
    Entanglement entanglement = Entanglement::LINEAR;
    std::size_t n_classes = 2;
    std::optional<std::size_t> qubits;  // optional cross-check
};

namespace detail {

inline std::string fmt(double v) { return qfl::detail::format_double(v); }

inline std::string join(const std::vector<double>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + fmt(v[i]);
    return s;
}

class Reader {
public:
    explicit Reader(ConfigMap map) : map_(std::move(map)) {}

    std::optional<std::string> take(const std::string& section, const std::string& key) {
        auto s = map_.find(section);
        if (s == map_.end()) return std::nullopt;
        auto k = s->second.find(key);
        if (k == s->second.end()) return std::nullopt;
        auto v = k->second;
        s->second.erase(k);
        if (s->second.empty()) map_.erase(s);
        return v;
    }

    template <class T>
    T number(const std::string& section, const std::string& key, T fallback) {
        const auto raw = take(section, key);
        if (!raw) return fallback;
        std::string_view text = qfl::detail::trim(*raw);
        const auto parsed = qfl::detail::parse_number<T>(text);
        if (!parsed) throw ConfigError(section + "." + key, "'" + *raw + "' is not a valid number");
        return *parsed;
    }

    std::string text(const std::string& section, const std::string& key, std::string fallback) {
        const auto raw = take(section, key);
        return raw ? std::string(qfl::detail::trim(*raw)) : fallback;
    }

    // Anything not consumed by now is a typo or an unsupported option.
    void reject_leftovers() const {
        for (const auto& [section, keys] : map_) {
            if (!keys.empty()) throw ConfigError(section + "." + keys.begin()->first, "unknown key");
            throw ConfigError(section, "unknown section");
        }
    }

private:
    ConfigMap map_;
};

}  // namespace detail

inline ConfigMap parse_ini(std::istream& in) {
    boost::property_tree::ptree tree;
    try {
        boost::property_tree::ini_parser::read_ini(in, tree);
    } catch (const boost::property_tree::ini_parser_error& e) {
        throw ConfigError("<file>", e.message() + " at line " + std::to_string(e.line()));
    }
    ConfigMap out;
    for (const auto& [section, body] : tree) {
        if (body.empty() && !body.data().empty()) {
            throw ConfigError(section, "key outside of any section");
        }
        auto& sec = out[section];
        for (const auto& [key, value] : body) sec[key] = value.get_value<std::string>();
    }
    return out;
}

inline ConfigMap parse_json_config(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("<file>", std::string("invalid JSON: ") + e.what());
    }
    const auto& body = j.contains("config") ? j.at("config") : j;
    if (!body.is_object()) throw ConfigError("config", "expected an object of sections");
    ConfigMap out;
    for (const auto& [section, keys] : body.items()) {
        if (!keys.is_object()) throw ConfigError(section, "expected an object of keys");
        for (const auto& [key, value] : keys.items()) {
            out[section][key] = value.is_string() ? value.get<std::string>() : value.dump();
        }
    }
    return out;
}

inline ConfigMap read_config_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::ios_base::failure("cannot open config " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    const std::string text = buf.str();
    const auto first = text.find_first_not_of(" \t\r\n");
    if (first != std::string::npos && text[first] == '{') return parse_json_config(text);
    std::istringstream ini(text);
    return parse_ini(ini);
}

inline RunConfig resolve(const ConfigMap& map) {
    detail::Reader r(map);
    RunConfig cfg;
    auto& fed = cfg.federation;

    const auto source = r.text("data", "source", "synth");
    if (source == "synth") {
        cfg.data.kind = DataSourceKind::SYNTH;
    } else if (source == "csv") {
        cfg.data.kind = DataSourceKind::CSV;
    } else {
        throw ConfigError("data.source", "expected synth or csv, got '" + source + "'");
    }
    cfg.data.path = r.text("data", "path", "");
    if (cfg.data.kind == DataSourceKind::CSV && cfg.data.path.empty()) {
        throw ConfigError("data.path", "required when data.source = csv");
    }
    cfg.data.samples = r.number<std::size_t>("data", "samples", cfg.data.samples);
    cfg.data.features = r.number<std::size_t>("data", "features", cfg.data.features);
    cfg.data.classes = r.number<std::size_t>("data", "classes", cfg.data.classes);
    cfg.data.separation = r.number<double>("data", "separation", cfg.data.separation);
    cfg.data.seed = r.number<std::uint64_t>("data", "seed", cfg.data.seed);
    if (cfg.data.features < 1) throw ConfigError("data.features", "must be at least 1");
    if (cfg.data.classes < 2) throw ConfigError("data.classes", "must be at least 2");
    if (cfg.data.samples < cfg.data.classes) throw ConfigError("data.samples", "must be >= data.classes");
    if (!(cfg.data.separation >= 0.0)) throw ConfigError("data.separation", "must be nonnegative");

    fed.global_test_fraction = r.number<double>("split", "global_test_fraction", fed.global_test_fraction);
    fed.client_test_fraction = r.number<double>("split", "client_test_fraction", fed.client_test_fraction);
    for (auto [key, v] : {std::pair{"global_test_fraction", fed.global_test_fraction},
                          std::pair{"client_test_fraction", fed.client_test_fraction}}) {
        if (!(v > 0.0 && v < 1.0)) throw ConfigError(std::string("split.") + key, "must lie in (0, 1)");
    }
    const auto part = r.text("split", "partition", "iid");
    if (part == "iid") {
        fed.partition.kind = PartitionKind::IID_EQUAL;
    } else if (part == "dirichlet") {
        fed.partition.kind = PartitionKind::DIRICHLET;
    } else {
        throw ConfigError("split.partition", "expected iid or dirichlet, got '" + part + "'");
    }
    fed.partition.concentration = r.number<double>("split", "concentration", fed.partition.concentration);
    if (!(fed.partition.concentration > 0.0)) throw ConfigError("split.concentration", "must be positive");

    const auto enc = r.text("model", "encoding", "amplitude");
    if (enc == "amplitude") {
        cfg.encoding = EncodingScheme::AMPLITUDE;
    } else if (enc == "angle") {
        cfg.encoding = EncodingScheme::ANGLE;
    } else if (enc == "basis") {
        cfg.encoding = EncodingScheme::BASIS;
    } else {
        throw ConfigError("model.encoding", "expected amplitude, angle or basis, got '" + enc + "'");
    }
    cfg.reps = r.number<std::size_t>("model", "reps", cfg.reps);
    const auto ent = r.text("model", "entanglement", "linear");
    if (ent == "linear") {
        cfg.entanglement = Entanglement::LINEAR;
    } else if (ent == "full") {
        cfg.entanglement = Entanglement::FULL;
    } else {
        throw ConfigError("model.entanglement", "expected linear or full, got '" + ent + "'");
    }
    cfg.n_classes = r.number<std::size_t>("model", "classes", cfg.n_classes);
    if (cfg.n_classes < 2) throw ConfigError("model.classes", "must be at least 2");
    if (const auto q = r.take("model", "qubits"); q && qfl::detail::trim(*q) != "auto") {
        const auto parsed = qfl::detail::parse_number<std::size_t>(qfl::detail::trim(*q));
        if (!parsed) throw ConfigError("model.qubits", "'" + *q + "' is not a valid count");
        cfg.qubits = *parsed;
    }

    auto& opt = fed.optimizer;
    opt.rho_begin = r.number<double>("optimizer", "rho_begin", opt.rho_begin);
    opt.rho_end = r.number<double>("optimizer", "rho_end", opt.rho_end);
    opt.max_evals = r.number<std::size_t>("optimizer", "max_evals", opt.max_evals);
    if (!(opt.rho_end > 0.0)) throw ConfigError("optimizer.rho_end", "must be positive");
    if (!(opt.rho_begin > opt.rho_end)) throw ConfigError("optimizer.rho_begin", "must exceed rho_end");

    fed.n_clients = r.number<std::size_t>("federation", "clients", fed.n_clients);
    fed.epochs = r.number<std::size_t>("federation", "epochs", fed.epochs);
    fed.participation_fraction = r.number<double>("federation", "participation", fed.participation_fraction);
    if (fed.n_clients < 1) throw ConfigError("federation.clients", "must be at least 1");
    if (fed.epochs < 1) throw ConfigError("federation.epochs", "must be at least 1");
    if (!(fed.participation_fraction > 0.0 && fed.participation_fraction <= 1.0)) {
        throw ConfigError("federation.participation", "must lie in (0, 1]");
    }
    const auto scheme = r.text("federation", "scheme", "simple");
    if (scheme == "simple") {
        fed.scheme.kind = SchemeKind::SIMPLE;
    } else if (scheme == "weighted") {
        fed.scheme.kind = SchemeKind::WEIGHTED;
    } else if (scheme == "best_pick") {
        fed.scheme.kind = SchemeKind::BEST_PICK;
    } else {
        throw ConfigError("federation.scheme", "expected simple, weighted or best_pick, got '" + scheme + "'");
    }
    const auto threshold = r.text("federation", "threshold", "auto");
    if (threshold != "auto") {
        const auto t = qfl::detail::parse_number<double>(threshold);
        if (!t || !(*t >= 0.0 && *t <= 1.0)) {
            throw ConfigError("federation.threshold", "expected auto or a number in [0, 1]");
        }
        if (fed.scheme.kind != SchemeKind::BEST_PICK) {
            throw ConfigError("federation.threshold", "only valid with scheme = best_pick");
        }
        fed.scheme.threshold = *t;
    }
    fed.alpha0 = r.number<double>("federation", "alpha0", fed.alpha0);
    if (!(fed.alpha0 >= 0.0 && fed.alpha0 <= 1.0)) {
        throw ConfigError("federation.alpha0", "must lie in [0, 1], got " + detail::fmt(fed.alpha0));
    }
    if (const auto bases = r.take("federation", "alpha_bases"); bases && !qfl::detail::trim(*bases).empty()) {
        for (auto cell : qfl::detail::split_commas(*bases)) {
            const auto a = qfl::detail::parse_number<double>(cell);
            if (!a || !(*a >= 0.0 && *a <= 1.0)) {
                throw ConfigError("federation.alpha_bases", "entries must be numbers in [0, 1]");
            }
            fed.alpha_bases.push_back(*a);
        }
        if (fed.alpha_bases.size() != fed.n_clients) {
            throw ConfigError("federation.alpha_bases", "needs one entry per client");
        }
    }
    fed.seed = r.number<std::uint64_t>("federation", "seed", fed.seed);
    fed.threads = r.number<std::size_t>("federation", "threads", fed.threads);
    if (fed.threads < 1) throw ConfigError("federation.threads", "must be at least 1");

    r.reject_leftovers();
    return cfg;
}

/// Every setting, defaults included, in the same shape `resolve` reads.
inline ConfigMap to_config_map(const RunConfig& cfg) {
    using detail::fmt;
    const auto& fed = cfg.federation;
    ConfigMap m;
    m["data"] = {{"source", cfg.data.kind == DataSourceKind::SYNTH ? "synth" : "csv"},
                 {"path", cfg.data.path},
                 {"samples", std::to_string(cfg.data.samples)},
                 {"features", std::to_string(cfg.data.features)},
                 {"classes", std::to_string(cfg.data.classes)},
                 {"separation", fmt(cfg.data.separation)},
                 {"seed", std::to_string(cfg.data.seed)}};
    m["split"] = {{"global_test_fraction", fmt(fed.global_test_fraction)},
                  {"client_test_fraction", fmt(fed.client_test_fraction)},
                  {"partition", fed.partition.kind == PartitionKind::IID_EQUAL ? "iid" : "dirichlet"},
                  {"concentration", fmt(fed.partition.concentration)}};
    m["model"] = {{"encoding", to_string(cfg.encoding)},
                  {"reps", std::to_string(cfg.reps)},
                  {"entanglement", to_string(cfg.entanglement)},
                  {"classes", std::to_string(cfg.n_classes)},
                  {"qubits", cfg.qubits ? std::to_string(*cfg.qubits) : "auto"}};
    m["optimizer"] = {{"rho_begin", fmt(fed.optimizer.rho_begin)},
                      {"rho_end", fmt(fed.optimizer.rho_end)},
                      {"max_evals", std::to_string(fed.optimizer.max_evals)}};
    m["federation"] = {{"clients", std::to_string(fed.n_clients)},
                       {"epochs", std::to_string(fed.epochs)},
                       {"participation", fmt(fed.participation_fraction)},
                       {"scheme", to_string(fed.scheme.kind)},
                       {"threshold", fed.scheme.threshold ? fmt(*fed.scheme.threshold) : "auto"},
                       {"alpha0", fmt(fed.alpha0)},
                       {"alpha_bases", detail::join(fed.alpha_bases)},
                       {"seed", std::to_string(fed.seed)},
                       {"threads", std::to_string(fed.threads)}};
    return m;
}

/// Fills in the model once the feature dimension is known.
inline void bind_model(RunConfig& cfg, std::size_t dimension) {
    std::size_t n = 0;
    try {
        n = required_qubits(dimension, cfg.encoding);
    } catch (const Error& e) {
        throw ConfigError("model.encoding", e.what());
    }
    if (cfg.qubits && *cfg.qubits != n) {
        throw ConfigError("model.qubits", std::to_string(dimension) + " features need " +
                                              std::to_string(n) + " qubits, config says " +
                                              std::to_string(*cfg.qubits));
    }
    cfg.federation.model = {cfg.encoding, AnsatzSpec{n, cfg.reps, cfg.entanglement}, cfg.n_classes};
    if (cfg.federation.optimizer.max_evals < param_count(cfg.federation.model.ansatz) + 2) {
        throw ConfigError("optimizer.max_evals",
                          "must be at least parameter count + 2 = " +
                              std::to_string(param_count(cfg.federation.model.ansatz) + 2));
    }
}

}  // namespace qfl::cli
