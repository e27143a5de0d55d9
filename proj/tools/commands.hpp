#pragma once

// The three CLI commands. Each returns the process exit code:
// 0 success, 1 configuration/usage error, 2 runtime error, 3 I/O error.

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "json.hpp"
#include "qfl/qfl.hpp"
#include "run_config.hpp"

namespace qfl::cli {

enum ExitCode : int { kOk = 0, kConfigError = 1, kRuntimeError = 2, kIoError = 3 };

struct RunOptions {
    std::string config_path;
    std::string out_dir;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> scheme;
};

struct SynthOptions {
    std::size_t samples = 240;
    std::size_t features = 16;
    std::size_t classes = 2;
    double separation = 4.0;
    std::uint64_t seed = 7;
    std::string out_path;
};

struct EvalOptions {
    std::string params_path;
    std::string data_path;
    std::string config_path;
};

namespace detail {

inline void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::ios_base::failure("cannot write " + path.string());
    out << text;
    if (!out) throw std::ios_base::failure("write failed for " + path.string());
}

inline std::string params_text(const ParameterVector& p) {
    std::string s;
    for (double v : p) s += qfl::detail::format_double(v) + "\n";
    return s;
}

inline ParameterVector read_params(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::ios_base::failure("cannot open parameters " + path);
    ParameterVector out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto cell = qfl::detail::trim(line);
        if (cell.empty()) continue;
        const auto v = qfl::detail::parse_number<double>(cell);
        if (!v || !std::isfinite(*v)) throw ParseError("'" + std::string(cell) + "' is not a number", lineno);
        out.push_back(*v);
    }
    return out;
}

inline std::string iso_time(std::chrono::system_clock::time_point t) {
    const std::time_t tt = std::chrono::system_clock::to_time_t(t);
    std::tm tm{};
    gmtime_r(&tt, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

inline LabeledDataset load_run_data(RunConfig& cfg) {
    LabeledDataset data;
    if (cfg.data.kind == DataSourceKind::CSV) {
        data = load_csv(cfg.data.path);
    } else {
        data = synth_genomic(cfg.data.samples, cfg.data.features, cfg.data.classes,
                             cfg.data.separation, cfg.data.seed);
    }
    bind_model(cfg, data.dimension());
    return data;
}

}  // namespace detail

/// Runs `body`, mapping exceptions to exit codes and messages on `err`.
template <class Body>
int guarded(std::ostream& err, Body&& body) {
    try {
        return body();
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << '\n';
        return kConfigError;
    } catch (const ParseError& e) {
        err << "input error: " << e.what() << '\n';
        return kIoError;
    } catch (const std::ios_base::failure& e) {
        err << "i/o error: " << e.what() << '\n';
        return kIoError;
    } catch (const std::filesystem::filesystem_error& e) {
        err << "i/o error: " << e.what() << '\n';
        return kIoError;
    } catch (const Error& e) {
        err << "runtime error: " << e.what() << '\n';
        return kRuntimeError;
    }
}

inline int cmd_run(const RunOptions& opts, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    return guarded(err, [&] {
        auto cfg = resolve(read_config_file(opts.config_path));
        if (opts.seed) cfg.federation.seed = *opts.seed;
        if (opts.scheme) {
            ConfigMap patch = to_config_map(cfg);
            patch["federation"]["scheme"] = *opts.scheme;
            cfg = resolve(patch);
        }
        auto data = detail::load_run_data(cfg);

        const auto started = std::chrono::system_clock::now();
        const auto t0 = std::chrono::steady_clock::now();
        const auto result = run_federation(cfg.federation, data);
        const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

        namespace fs = std::filesystem;
        const fs::path dir(opts.out_dir);
        fs::create_directories(dir);
        std::ostringstream metrics;
        write_metrics_csv(metrics, result.log);
        detail::write_text(dir / "metrics.csv", metrics.str());
        detail::write_text(dir / "global_params.txt", detail::params_text(result.global_params));
        save_csv((dir / "global_test.csv").string(), result.global_test);

        nlohmann::json manifest;
        manifest["config"] = to_config_map(cfg);
        manifest["derived"] = {{"qubits", cfg.federation.model.ansatz.n_qubits},
                               {"parameters", param_count(cfg.federation.model.ansatz)},
                               {"samples", data.size()},
                               {"features", data.dimension()}};
        manifest["artifacts"] = {{"metrics", "metrics.csv"},
                                 {"global_params", "global_params.txt"},
                                 {"global_test", "global_test.csv"}};
        manifest["run"] = {{"started_utc", detail::iso_time(started)}, {"elapsed_seconds", elapsed}};
        detail::write_text(dir / "manifest.json", manifest.dump(2) + "\n");

        const auto globals = result.log.global_records();
        out << "scheme " << to_string(cfg.federation.scheme.kind) << ", " << cfg.federation.epochs
            << " epochs, final global test accuracy "
            << qfl::detail::format_double(globals.back().test_accuracy) << '\n';
        return int{kOk};
    });
}

inline int cmd_synth(const SynthOptions& opts, std::ostream& err = std::cerr) {
    return guarded(err, [&] {
        if (opts.features < 1) throw ConfigError("features", "must be at least 1");
        if (opts.classes < 2) throw ConfigError("classes", "must be at least 2");
        if (opts.samples < opts.classes) throw ConfigError("samples", "must be >= classes");
        if (!(opts.separation >= 0.0)) throw ConfigError("separation", "must be nonnegative");
        if (opts.out_path.empty()) throw ConfigError("out", "output path required");
        save_csv(opts.out_path,
                 synth_genomic(opts.samples, opts.features, opts.classes, opts.separation, opts.seed));
        return int{kOk};
    });
}

inline int cmd_eval(const EvalOptions& opts, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    return guarded(err, [&] {
        auto cfg = resolve(read_config_file(opts.config_path));
        const auto data = load_csv(opts.data_path);
        bind_model(cfg, data.dimension());
        ParameterVector params;
        try {
            params = detail::read_params(opts.params_path);
        } catch (const ParseError& e) {
            throw ConfigError("params", e.what());
        }
        if (params.size() != param_count(cfg.federation.model.ansatz)) {
            throw ConfigError("params", "file holds " + std::to_string(params.size()) +
                                            " values, ansatz needs " +
                                            std::to_string(param_count(cfg.federation.model.ansatz)));
        }
        try {
            validate(cfg.federation.model, data);
        } catch (const Error& e) {
            throw ConfigError("model", e.what());
        }
        const auto ev = evaluate(params, data, cfg.federation.model);
        out << "loss " << qfl::detail::format_double(ev.loss) << '\n'
            << "accuracy " << qfl::detail::format_double(ev.accuracy) << '\n';
        return int{kOk};
    });
}

}  // namespace qfl::cli
