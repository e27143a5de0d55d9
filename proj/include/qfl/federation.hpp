#pragma once

// Federated training loop: client selection, local COBYLA training, server
// aggregation (simple / weighted / best-pick), broadcast and local blending.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <future>
#include <numbers>
#include <numeric>
#include <optional>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "qfl/cobyla.hpp"
#include "qfl/data.hpp"
#include "qfl/error.hpp"
#include "qfl/model.hpp"

namespace qfl {

struct ClientState {
    std::size_t client_id = 0;
    LabeledDataset train;
    LabeledDataset test;
    ParameterVector params;
    double last_score = 0.0;  // top-1 accuracy on `test` after the last local training
};

enum class SchemeKind { SIMPLE, WEIGHTED, BEST_PICK };

inline std::string to_string(SchemeKind k) {
    switch (k) {
        case SchemeKind::SIMPLE: return "simple";
        case SchemeKind::WEIGHTED: return "weighted";
        case SchemeKind::BEST_PICK: return "best_pick";
    }
    return "?";
}

struct AggregationScheme {
    SchemeKind kind = SchemeKind::SIMPLE;
    std::optional<double> threshold;  // BEST_PICK only; empty means AUTO (mean score)
};

struct FederationConfig {
    std::size_t n_clients = 3;
    std::size_t epochs = 20;
    double participation_fraction = 1.0;
    AggregationScheme scheme{};
    double alpha0 = 0.5;
    std::vector<double> alpha_bases;  // per-client override of alpha0; empty = all alpha0
    std::uint64_t seed = 7;
    ModelConfig model{};
    CobylaSettings optimizer{};
    PartitionStrategy partition{};
    double global_test_fraction = 0.2;
    double client_test_fraction = 0.2;
    std::size_t threads = 1;
};

inline constexpr int kGlobalEntity = -1;

struct MetricsRecord {
    std::size_t epoch = 0;
    int entity = kGlobalEntity;  // client id, or kGlobalEntity
    std::optional<double> train_loss;
    std::optional<double> train_accuracy;
    double test_accuracy = 0.0;

    bool is_global() const noexcept { return entity == kGlobalEntity; }
};

struct MetricsLog {
    std::vector<MetricsRecord> records;

    std::vector<MetricsRecord> global_records() const {
        std::vector<MetricsRecord> out;
        for (const auto& r : records)
            if (r.is_global()) out.push_back(r);
        return out;
    }
};

inline void write_metrics_csv(std::ostream& out, const MetricsLog& log) {
    out << "epoch,entity,train_loss,train_acc,test_acc\n";
    for (const auto& r : log.records) {
        out << r.epoch << ',';
        if (r.is_global()) {
            out << "global";
        } else {
            out << "client_" << r.entity;
        }
        out << ',' << (r.train_loss ? detail::format_double(*r.train_loss) : "") << ','
            << (r.train_accuracy ? detail::format_double(*r.train_accuracy) : "") << ','
            << detail::format_double(r.test_accuracy) << '\n';
    }
}

/// Raised by the federation loop; carries where the failure happened.
class FederationError : public Error {
public:
    FederationError(std::size_t epoch, std::string stage, std::optional<std::size_t> client,
                    const std::string& cause)
        : Error(describe(epoch, stage, client, cause)),
          epoch_(epoch),
          stage_(std::move(stage)),
          client_(client) {}

    std::size_t epoch() const noexcept { return epoch_; }
    const std::string& stage() const noexcept { return stage_; }
    std::optional<std::size_t> client() const noexcept { return client_; }

private:
    static std::string describe(std::size_t epoch, const std::string& stage,
                                std::optional<std::size_t> client, const std::string& cause) {
        std::string s = "epoch " + std::to_string(epoch) + ", stage " + stage;
        if (client) s += ", client " + std::to_string(*client);
        return s + ": " + cause;
    }

    std::size_t epoch_;
    std::string stage_;
    std::optional<std::size_t> client_;
};

/// Ids of this epoch's participants, ascending. Size is max(1, ceil(fraction * K)).
inline std::vector<std::size_t> select_participants(std::size_t n_clients, double fraction,
                                                    std::size_t epoch, std::uint64_t seed) {
    if (n_clients == 0) throw DomainError("no clients to select from");
    if (!(fraction > 0.0 && fraction <= 1.0)) {
        throw DomainError("participation fraction must lie in (0, 1]");
    }
    const auto m = std::clamp<std::size_t>(
        static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n_clients) - 1e-12)), 1,
        n_clients);
    std::vector<std::size_t> ids(n_clients);
    std::iota(ids.begin(), ids.end(), 0);
    if (m == n_clients) return ids;
    auto rng = seeded_engine(seed, 0x5e1ec7, epoch);
    std::shuffle(ids.begin(), ids.end(), rng);
    ids.resize(m);
    std::sort(ids.begin(), ids.end());
    return ids;
}

inline std::vector<std::size_t> select_participants(std::span<const ClientState> clients,
                                                    double fraction, std::size_t epoch,
                                                    std::uint64_t seed) {
    auto picked = select_participants(clients.size(), fraction, epoch, seed);
    for (auto& i : picked) i = clients[i].client_id;
    return picked;
}

/// Runs COBYLA on the client's training loss from its current parameters and
/// refreshes `last_score` on its test split.
inline ClientState local_train(ClientState client, const FederationConfig& cfg,
                               std::size_t epoch = 0) {
    try {
        check_param_shape(cfg.model.ansatz, client.params.size());
        auto objective = [&](std::span<const double> p) { return mse_loss(p, client.train, cfg.model); };
        auto result = cobyla_minimize(objective, client.params, cfg.optimizer);
        client.params = std::move(result.best_point);
        client.last_score = top1_accuracy(client.params, client.test, cfg.model);
    } catch (const FederationError&) {
        throw;
    } catch (const Error& e) {
        throw FederationError(epoch, "local_train", client.client_id, e.what());
    }
    return client;
}

namespace detail {
inline void check_updates(std::span<const ParameterVector> updates) {
    if (updates.empty()) throw ShapeError("no client updates to aggregate");
    for (const auto& u : updates) {
        if (u.size() != updates.front().size()) {
            throw ShapeError("client updates have different lengths (" +
                             std::to_string(updates.front().size()) + " vs " +
                             std::to_string(u.size()) + ")");
        }
    }
}
}  // namespace detail

inline ParameterVector aggregate_simple(std::span<const ParameterVector> updates) {
    detail::check_updates(updates);
    ParameterVector out(updates.front().size(), 0.0);
    for (const auto& u : updates)
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += u[i];
    const double k = static_cast<double>(updates.size());
    for (auto& v : out) v /= k;
    return out;
}

inline ParameterVector aggregate_weighted(std::span<const ParameterVector> updates,
                                          std::span<const double> weights) {
    detail::check_updates(updates);
    if (weights.size() != updates.size()) {
        throw WeightError(std::to_string(weights.size()) + " weights for " +
                          std::to_string(updates.size()) + " updates");
    }
    double total = 0.0;
    for (double w : weights) {
        if (!(w >= 0.0) || !std::isfinite(w)) throw WeightError("weights must be finite and nonnegative");
        total += w;
    }
    if (std::abs(total - 1.0) > 1e-9) {
        throw WeightError("weights sum to " + std::to_string(total) + ", expected 1");
    }
    ParameterVector out(updates.front().size(), 0.0);
    for (std::size_t k = 0; k < updates.size(); ++k)
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += weights[k] * updates[k][i];
    return out;
}

struct ScoredUpdate {
    ParameterVector params;
    double score = 0.0;
};

/// Score-weighted mean over clients scoring at least the threshold (the mean
/// score when unset). If nobody qualifies the top scorer is returned as is.
inline ParameterVector aggregate_best_pick(std::span<const ScoredUpdate> updates,
                                           std::optional<double> threshold = std::nullopt) {
    if (updates.empty()) throw ShapeError("no client updates to aggregate");
    std::vector<ParameterVector> params;
    for (const auto& u : updates) {
        if (!(u.score >= 0.0 && u.score <= 1.0)) throw DomainError("scores must lie in [0, 1]");
        params.push_back(u.params);
    }
    detail::check_updates(params);

    double tau = 0.0;
    if (threshold) {
        tau = *threshold;
    } else {
        for (const auto& u : updates) tau += u.score;
        tau /= static_cast<double>(updates.size());
    }

    std::vector<std::size_t> selected;
    double score_sum = 0.0;
    for (std::size_t k = 0; k < updates.size(); ++k) {
        if (updates[k].score >= tau) {
            selected.push_back(k);
            score_sum += updates[k].score;
        }
    }
    if (selected.empty()) {
        std::size_t best = 0;
        for (std::size_t k = 1; k < updates.size(); ++k)
            if (updates[k].score > updates[best].score) best = k;
        return updates[best].params;
    }

    ParameterVector out(params.front().size(), 0.0);
    for (auto k : selected) {
        // All-zero scores that still pass tau = 0 fall back to equal weights.
        const double w = score_sum > 0.0 ? updates[k].score / score_sum
                                         : 1.0 / static_cast<double>(selected.size());
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += w * updates[k].params[i];
    }
    return out;
}

/// alpha * local + (1 - alpha) * global.
inline ParameterVector blend_local(std::span<const double> local, std::span<const double> global,
                                   double alpha) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw DomainError("blend alpha must lie in [0, 1]");
    if (local.size() != global.size()) throw ShapeError("local and global parameter lengths differ");
    ParameterVector out(local.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = alpha * local[i] + (1.0 - alpha) * global[i];
    return out;
}

inline void validate(const FederationConfig& cfg) {
    if (cfg.n_clients < 1) throw DomainError("need at least one client");
    if (cfg.epochs < 1) throw DomainError("need at least one epoch");
    if (!(cfg.participation_fraction > 0.0 && cfg.participation_fraction <= 1.0)) {
        throw DomainError("participation fraction must lie in (0, 1]");
    }
    if (!(cfg.alpha0 >= 0.0 && cfg.alpha0 <= 1.0)) throw DomainError("alpha0 must lie in [0, 1]");
    if (!cfg.alpha_bases.empty()) {
        if (cfg.alpha_bases.size() != cfg.n_clients) {
            throw DomainError("alpha_bases needs one entry per client");
        }
        for (double a : cfg.alpha_bases)
            if (!(a >= 0.0 && a <= 1.0)) throw DomainError("alpha_bases entries must lie in [0, 1]");
    }
    if (cfg.scheme.threshold && cfg.scheme.kind != SchemeKind::BEST_PICK) {
        throw DomainError("a threshold is only meaningful for best_pick");
    }
    if (cfg.scheme.threshold && !(*cfg.scheme.threshold >= 0.0 && *cfg.scheme.threshold <= 1.0)) {
        throw DomainError("best_pick threshold must lie in [0, 1]");
    }
    validate(cfg.model);
    validate(cfg.optimizer, param_count(cfg.model.ansatz));
}

/// Blend weight for client k at 1-based epoch h: base_k / h.
inline double blend_alpha(const FederationConfig& cfg, std::size_t client, std::size_t epoch) {
    const double base = cfg.alpha_bases.empty() ? cfg.alpha0 : cfg.alpha_bases[client];
    return base / static_cast<double>(epoch);
}

/// Shared starting point for every client: uniform in [-pi, pi].
inline ParameterVector initial_parameters(const FederationConfig& cfg) {
    auto rng = seeded_engine(cfg.seed, 0x1417);
    std::uniform_real_distribution<double> u(-std::numbers::pi, std::numbers::pi);
    ParameterVector p(param_count(cfg.model.ansatz));
    for (auto& v : p) v = u(rng);
    return p;
}

struct FederationSetup {
    std::vector<ClientState> clients;
    LabeledDataset global_test;
};

/// Holds out a stratified global test split, shards the rest over the clients
/// and splits every shard into train/test.
inline FederationSetup prepare_clients(const FederationConfig& cfg, const LabeledDataset& data) {
    validate(cfg.model, data);
    auto [pool, global_test] = train_test_split(data, cfg.global_test_fraction, cfg.seed);
    auto shards = partition(pool, cfg.n_clients, cfg.partition, cfg.seed);
    const auto init = initial_parameters(cfg);

    FederationSetup setup;
    setup.global_test = std::move(global_test);
    for (std::size_t k = 0; k < shards.size(); ++k) {
        auto [train, test] = train_test_split(shards[k], cfg.client_test_fraction, cfg.seed + k + 1);
        setup.clients.push_back({k, std::move(train), std::move(test), init, 0.0});
    }
    return setup;
}

struct FederationResult {
    MetricsLog log;
    ParameterVector global_params;
    ParameterVector initial_params;
    std::vector<double> initial_train_loss;  // per client, at initial_params
    std::vector<ClientState> clients;
    LabeledDataset global_test;
};

inline FederationResult run_federation(const FederationConfig& cfg, const LabeledDataset& data) {
    validate(cfg);
    FederationSetup setup;
    try {
        setup = prepare_clients(cfg, data);
    } catch (const Error& e) {
        throw FederationError(0, "setup", std::nullopt, e.what());
    }

    FederationResult result;
    result.initial_params = setup.clients.front().params;
    for (const auto& c : setup.clients)
        result.initial_train_loss.push_back(mse_loss(c.params, c.train, cfg.model));
    auto& clients = setup.clients;
    ParameterVector global = result.initial_params;

    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const auto ids = select_participants(clients.size(), cfg.participation_fraction, epoch, cfg.seed);

        if (cfg.threads > 1 && ids.size() > 1) {
            std::vector<std::future<ClientState>> jobs;
            for (auto id : ids)
                jobs.push_back(std::async(std::launch::async, [&, id] {
                    return local_train(clients[id], cfg, epoch);
                }));
            for (std::size_t j = 0; j < ids.size(); ++j) clients[ids[j]] = jobs[j].get();
        } else {
            for (auto id : ids) clients[id] = local_train(std::move(clients[id]), cfg, epoch);
        }

        std::vector<ParameterVector> updates;
        std::vector<double> scores;
        for (auto id : ids) {
            const auto& c = clients[id];
            const auto train_eval = evaluate(c.params, c.train, cfg.model);
            result.log.records.push_back({epoch, static_cast<int>(id), train_eval.loss,
                                          train_eval.accuracy, c.last_score});
            updates.push_back(c.params);
            scores.push_back(c.last_score);
        }

        try {
            switch (cfg.scheme.kind) {
                case SchemeKind::SIMPLE:
                    global = aggregate_simple(updates);
                    break;
                case SchemeKind::WEIGHTED: {
                    std::vector<double> w(updates.size(), 1.0 / static_cast<double>(updates.size()));
                    const double total = std::accumulate(scores.begin(), scores.end(), 0.0);
                    if (epoch > 1 && total > 0.0) {
                        for (std::size_t k = 0; k < w.size(); ++k) w[k] = scores[k] / total;
                    }
                    global = aggregate_weighted(updates, w);
                    break;
                }
                case SchemeKind::BEST_PICK: {
                    std::vector<ScoredUpdate> scored;
                    for (std::size_t k = 0; k < updates.size(); ++k) scored.push_back({updates[k], scores[k]});
                    global = aggregate_best_pick(scored, cfg.scheme.threshold);
                    break;
                }
            }
        } catch (const Error& e) {
            throw FederationError(epoch, "aggregate", std::nullopt, e.what());
        }

        try {
            result.log.records.push_back(
                {epoch, kGlobalEntity, std::nullopt, std::nullopt,
                 top1_accuracy(global, setup.global_test, cfg.model)});
        } catch (const Error& e) {
            throw FederationError(epoch, "global_eval", std::nullopt, e.what());
        }

        for (auto id : ids) {
            try {
                clients[id].params = blend_local(clients[id].params, global, blend_alpha(cfg, id, epoch));
            } catch (const Error& e) {
                throw FederationError(epoch, "blend", id, e.what());
            }
        }
    }

    result.global_params = std::move(global);
    result.clients = std::move(clients);
    result.global_test = std::move(setup.global_test);
    return result;
}

}  // namespace qfl
