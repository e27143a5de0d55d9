#include <gtest/gtest.h>

#include <algorithm>
#include <numbers>
#include <numeric>
#include <set>
#include <random>
#include <sstream>

#include "qfl/federation.hpp"

using namespace qfl;

namespace {

std::vector<ParameterVector> random_updates(std::mt19937_64& rng, std::size_t k, std::size_t dim) {
    std::normal_distribution<double> g(0.0, 2.0);
    std::vector<ParameterVector> u(k, ParameterVector(dim));
    for (auto& v : u)
        for (auto& x : v) x = g(rng);
    return u;
}

void expect_near(const ParameterVector& a, const ParameterVector& b, double tol) {
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], tol) << "index " << i;
}

// Small, fast federation on 4 features / 2 qubits.
FederationConfig small_config(SchemeKind kind = SchemeKind::SIMPLE) {
    FederationConfig cfg;
    cfg.n_clients = 2;
    cfg.epochs = 3;
    cfg.scheme.kind = kind;
    cfg.model = make_model_config(4, EncodingScheme::AMPLITUDE, 1);
    cfg.optimizer = {1.0, 1e-4, 20};
    cfg.seed = 3;
    return cfg;
}

LabeledDataset small_data() { return synth_genomic(60, 4, 2, 4.0, 1); }

std::string metrics_text(const MetricsLog& log) {
    std::ostringstream out;
    write_metrics_csv(out, log);
    return out.str();
}

// Straight transcription of the best-pick rule, kept separate from the library.
ParameterVector best_pick_by_hand(const std::vector<ParameterVector>& p, const std::vector<double>& s, double tau) {
    double sum = 0;
    for (double v : s)
        if (v >= tau) sum += v;
    if (sum == 0) {
        const auto best = std::max_element(s.begin(), s.end()) - s.begin();
        return p[static_cast<std::size_t>(best)];
    }
    ParameterVector out(p[0].size(), 0.0);
    for (std::size_t k = 0; k < p.size(); ++k)
        if (s[k] >= tau)
            for (std::size_t i = 0; i < out.size(); ++i) out[i] += s[k] / sum * p[k][i];
    return out;
}

}  // namespace

TEST(SelectParticipants, Examples) {
    EXPECT_EQ(select_participants(4, 1.0, 1, 7), (std::vector<std::size_t>{0, 1, 2, 3}));
    EXPECT_EQ(select_participants(4, 0.5, 1, 7).size(), 2u);
    EXPECT_EQ(select_participants(4, 0.5, 3, 7), select_participants(4, 0.5, 3, 7));
    EXPECT_EQ(select_participants(10, 0.01, 1, 7).size(), 1u);
    EXPECT_EQ(select_participants(3, 0.5, 1, 7).size(), 2u);
    EXPECT_THROW(select_participants(0, 1.0, 1, 7), DomainError);
    EXPECT_THROW(select_participants(3, 0.0, 1, 7), DomainError);
}

TEST(SelectParticipants, VariesAcrossEpochs) {
    std::set<std::vector<std::size_t>> seen;
    for (std::size_t epoch = 1; epoch <= 20; ++epoch) seen.insert(select_participants(6, 0.5, epoch, 1));
    EXPECT_GT(seen.size(), 1u);
}

TEST(SelectParticipants, MapsToClientIds) {
    std::vector<ClientState> clients(3);
    clients[0].client_id = 10;
    clients[1].client_id = 11;
    clients[2].client_id = 12;
    EXPECT_EQ(select_participants(clients, 1.0, 1, 1), (std::vector<std::size_t>{10, 11, 12}));
}

TEST(AggregateSimple, Examples) {
    EXPECT_EQ(aggregate_simple(std::vector<ParameterVector>{{1, 3}, {3, 5}}), (ParameterVector{2, 4}));
    EXPECT_EQ(aggregate_simple(std::vector<ParameterVector>{{0.3, -2}}), (ParameterVector{0.3, -2}));
    EXPECT_EQ(aggregate_simple(std::vector<ParameterVector>(5, {0.1, 0.7})), (ParameterVector{0.1, 0.7}));
    EXPECT_THROW(aggregate_simple(std::vector<ParameterVector>{{1, 2}, {1}}), ShapeError);
    EXPECT_THROW(aggregate_simple(std::vector<ParameterVector>{}), ShapeError);
}

TEST(AggregateWeighted, Examples) {
    const std::vector<ParameterVector> u{{0, 4}, {4, 8}};
    EXPECT_EQ(aggregate_weighted(u, std::vector<double>{0.25, 0.75}), (ParameterVector{3, 7}));
    EXPECT_EQ(aggregate_weighted(u, std::vector<double>{0.0, 1.0}), u[1]);
    EXPECT_EQ(aggregate_weighted(u, std::vector<double>{0.5, 0.5}), aggregate_simple(u));
    EXPECT_THROW(aggregate_weighted(u, std::vector<double>{0.5, 0.6}), WeightError);
    EXPECT_THROW(aggregate_weighted(u, std::vector<double>{1.0}), WeightError);
    EXPECT_THROW(aggregate_weighted(u, std::vector<double>{1.5, -0.5}), WeightError);
}

TEST(AggregateBestPick, ThresholdExample) {
    const std::vector<ParameterVector> p{{1, 0}, {5, 5}, {0, 2}};
    const std::vector<ScoredUpdate> u{{p[0], 0.9}, {p[1], 0.6}, {p[2], 0.8}};
    const auto got = aggregate_best_pick(u, 0.7);
    expect_near(got, {0.9 / 1.7 * 1 + 0.8 / 1.7 * 0, 0.9 / 1.7 * 0 + 0.8 / 1.7 * 2}, 1e-15);
    expect_near(got, best_pick_by_hand(p, {0.9, 0.6, 0.8}, 0.7), 1e-15);
}

TEST(AggregateBestPick, FallbackAndDegenerateCases) {
    const std::vector<ScoredUpdate> low{{{1, 1}, 0.2}, {{2, 3}, 0.4}, {{9, 9}, 0.1}};
    EXPECT_EQ(aggregate_best_pick(low, 0.5), (ParameterVector{2, 3}));

    const std::vector<ScoredUpdate> equal{{{1, 3}, 0.7}, {{3, 5}, 0.7}};
    expect_near(aggregate_best_pick(equal, 0.5), {2, 4}, 1e-15);

    // AUTO threshold is the mean score: 0.6 here, so only the 0.9 client passes
    const std::vector<ScoredUpdate> mixed{{{1, 1}, 0.9}, {{5, 5}, 0.3}};
    EXPECT_EQ(aggregate_best_pick(mixed), (ParameterVector{1, 1}));

    EXPECT_THROW(aggregate_best_pick(std::vector<ScoredUpdate>{{{1}, 1.5}}), DomainError);
}

TEST(AggregationAlgebra, RandomInstances) {
    std::mt19937_64 rng(51);
    std::uniform_int_distribution<std::size_t> kdist(1, 8), ddist(1, 32);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (int trial = 0; trial < 100; ++trial) {
        const auto k = kdist(rng), dim = ddist(rng);
        const auto u = random_updates(rng, k, dim);

        const std::vector<double> uniform(k, 1.0 / static_cast<double>(k));
        expect_near(aggregate_weighted(u, uniform), aggregate_simple(u), 1e-12);

        std::vector<double> w(k);
        double total = 0;
        for (auto& x : w) total += (x = unit(rng));
        for (auto& x : w) x /= total;
        std::vector<ScoredUpdate> scored;
        std::vector<double> scores;
        for (std::size_t j = 0; j < k; ++j) {
            scores.push_back(unit(rng));
            scored.push_back({u[j], scores.back()});
        }
        const double tau = unit(rng);

        // envelope
        for (const auto& agg : {aggregate_simple(u), aggregate_weighted(u, w), aggregate_best_pick(scored, tau),
                                aggregate_best_pick(scored)}) {
            for (std::size_t i = 0; i < dim; ++i) {
                double lo = INFINITY, hi = -INFINITY;
                for (const auto& v : u) {
                    lo = std::min(lo, v[i]);
                    hi = std::max(hi, v[i]);
                }
                EXPECT_GE(agg[i], lo - 1e-12);
                EXPECT_LE(agg[i], hi + 1e-12);
            }
        }

        expect_near(aggregate_best_pick(scored, tau), best_pick_by_hand(u, scores, tau), 1e-12);

        // permutation invariance
        std::vector<std::size_t> perm(k);
        std::iota(perm.begin(), perm.end(), 0);
        std::shuffle(perm.begin(), perm.end(), rng);
        std::vector<ParameterVector> pu;
        std::vector<double> pw;
        std::vector<ScoredUpdate> ps;
        for (auto j : perm) {
            pu.push_back(u[j]);
            pw.push_back(w[j]);
            ps.push_back(scored[j]);
        }
        expect_near(aggregate_simple(pu), aggregate_simple(u), 1e-12);
        expect_near(aggregate_weighted(pu, pw), aggregate_weighted(u, w), 1e-12);
        expect_near(aggregate_best_pick(ps, tau), aggregate_best_pick(scored, tau), 1e-12);

        // equal scores with tau = 0 degenerate to the simple mean
        std::vector<ScoredUpdate> flat;
        for (const auto& v : u) flat.push_back({v, 0.5});
        expect_near(aggregate_best_pick(flat, 0.0), aggregate_simple(u), 1e-12);
    }
}

TEST(BlendLocal, Examples) {
    const std::vector<double> local{2, -1}, global{4, 3};
    EXPECT_EQ(blend_local(local, global, 1.0), local);
    EXPECT_EQ(blend_local(local, global, 0.0), global);
    EXPECT_EQ(blend_local(std::vector<double>{2}, std::vector<double>{4}, 0.5), (ParameterVector{3}));
    EXPECT_THROW(blend_local(local, global, 1.5), DomainError);
    EXPECT_THROW(blend_local(local, std::vector<double>{1}, 0.5), ShapeError);
}

TEST(BlendAlpha, DecaysWithEpoch) {
    FederationConfig cfg;
    cfg.alpha0 = 0.5;
    EXPECT_EQ(blend_alpha(cfg, 0, 1), 0.5);
    EXPECT_EQ(blend_alpha(cfg, 0, 4), 0.125);
    cfg.n_clients = 2;
    cfg.alpha_bases = {0.2, 0.8};
    EXPECT_EQ(blend_alpha(cfg, 1, 2), 0.4);
}

TEST(LocalTrain, NeverIncreasesTrainingLoss) {
    auto cfg = small_config();
    const auto setup = prepare_clients(cfg, small_data());
    for (const auto& c : setup.clients) {
        const double before = mse_loss(c.params, c.train, cfg.model);
        const auto trained = local_train(c, cfg);
        EXPECT_LE(mse_loss(trained.params, trained.train, cfg.model), before);
        EXPECT_EQ(trained.last_score, top1_accuracy(trained.params, trained.test, cfg.model));
    }
}

TEST(LocalTrain, MinimalBudgetMovesLittle) {
    auto cfg = small_config();
    const std::size_t dim = param_count(cfg.model.ansatz);
    cfg.optimizer.max_evals = dim + 2;
    const auto c = prepare_clients(cfg, small_data()).clients[0];
    const auto trained = local_train(c, cfg);
    double dist2 = 0;
    for (std::size_t i = 0; i < dim; ++i) dist2 += std::pow(trained.params[i] - c.params[i], 2);
    // best point is x0, a simplex vertex (rho away) or one trust step (rho) past a vertex
    EXPECT_LE(std::sqrt(dist2), 2 * cfg.optimizer.rho_begin + 1e-12);
}

TEST(LocalTrain, OneQubitToyReachesPerfectAccuracy) {
    FederationConfig cfg;
    cfg.model = make_model_config(2, EncodingScheme::AMPLITUDE, 0);
    ASSERT_EQ(param_count(cfg.model.ansatz), 1u);
    cfg.optimizer = {1.0, 1e-4, 200};

    LabeledDataset shard;
    for (int rep = 0; rep < 3; ++rep) {
        shard.push_back({1, 0}, 0);
        shard.push_back({0, 1}, 1);
    }
    // the sweep finds a zero-loss angle, so a perfect classifier exists
    double best = INFINITY;
    for (int i = 0; i <= 3600; ++i) {
        const double theta = -std::numbers::pi + 2 * std::numbers::pi * i / 3600.0;
        best = std::min(best, mse_loss(std::vector<double>{theta}, shard, cfg.model));
    }
    ASSERT_LT(best, 1e-12);

    ClientState c{0, shard, shard, {2.0}, 0.0};
    EXPECT_LT(top1_accuracy(c.params, shard, cfg.model), 1.0);
    const auto trained = local_train(c, cfg);
    EXPECT_EQ(trained.last_score, 1.0);
}

TEST(LocalTrain, ErrorsCarryClient) {
    auto cfg = small_config();
    ClientState c{4, small_data(), small_data(), {0.0}, 0.0};
    try {
        local_train(c, cfg, 2);
        FAIL();
    } catch (const FederationError& e) {
        EXPECT_EQ(e.epoch(), 2u);
        EXPECT_EQ(e.stage(), "local_train");
        EXPECT_EQ(e.client(), 4u);
    }
}

TEST(RunFederation, SingleClientAdoptsGlobal) {
    auto cfg = small_config();
    cfg.n_clients = 1;
    cfg.alpha0 = 0.0;
    for (std::size_t epochs = 1; epochs <= 3; ++epochs) {
        cfg.epochs = epochs;
        const auto r = run_federation(cfg, small_data());
        EXPECT_EQ(r.clients[0].params, r.global_params);
        EXPECT_EQ(r.log.global_records().back().test_accuracy,
                  top1_accuracy(r.clients[0].params, r.global_test, cfg.model));
    }
}

TEST(RunFederation, OneEpochRecordCounts) {
    auto cfg = small_config();
    cfg.epochs = 1;
    const auto r = run_federation(cfg, small_data());
    EXPECT_EQ(r.log.global_records().size(), 1u);
    EXPECT_LE(r.log.records.size() - 1, cfg.n_clients);
}

TEST(RunFederation, PartialParticipation) {
    auto cfg = small_config();
    cfg.n_clients = 4;
    cfg.participation_fraction = 0.5;
    const auto r = run_federation(cfg, synth_genomic(100, 4, 2, 4.0, 1));
    EXPECT_EQ(r.log.records.size(), cfg.epochs * 3);
    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const auto ids = select_participants(4, 0.5, epoch, cfg.seed);
        std::vector<std::size_t> logged;
        for (const auto& rec : r.log.records)
            if (rec.epoch == epoch && !rec.is_global()) logged.push_back(static_cast<std::size_t>(rec.entity));
        EXPECT_EQ(logged, ids);
    }
}

TEST(RunFederation, Deterministic) {
    for (auto kind : {SchemeKind::SIMPLE, SchemeKind::WEIGHTED, SchemeKind::BEST_PICK}) {
        const auto cfg = small_config(kind);
        EXPECT_EQ(metrics_text(run_federation(cfg, small_data()).log),
                  metrics_text(run_federation(cfg, small_data()).log));
    }
}

TEST(RunFederation, ThreadedMatchesSerial) {
    auto cfg = small_config(SchemeKind::WEIGHTED);
    const auto serial = metrics_text(run_federation(cfg, small_data()).log);
    cfg.threads = 2;
    EXPECT_EQ(metrics_text(run_federation(cfg, small_data()).log), serial);
}

TEST(RunFederation, WeightedStartsUniform) {
    auto cfg = small_config(SchemeKind::SIMPLE);
    cfg.epochs = 1;
    const auto simple = run_federation(cfg, small_data());
    cfg.scheme.kind = SchemeKind::WEIGHTED;
    const auto weighted = run_federation(cfg, small_data());
    EXPECT_EQ(simple.global_params, weighted.global_params);
}

TEST(RunFederation, SetupErrorsHaveContext) {
    auto cfg = small_config();
    auto data = small_data();
    data.labels[0] = 2;
    try {
        run_federation(cfg, data);
        FAIL();
    } catch (const FederationError& e) {
        EXPECT_EQ(e.stage(), "setup");
        EXPECT_FALSE(e.client().has_value());
    }
}

TEST(Metrics, CsvLayout) {
    MetricsLog log;
    log.records.push_back({1, 0, 0.25, 0.5, 0.75});
    log.records.push_back({1, kGlobalEntity, std::nullopt, std::nullopt, 0.8});
    EXPECT_EQ(metrics_text(log), "epoch,entity,train_loss,train_acc,test_acc\n"
                                 "1,client_0,0.25,0.5,0.75\n"
                                 "1,global,,,0.8\n");
}
