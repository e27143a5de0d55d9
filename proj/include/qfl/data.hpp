#pragma once

// Dataset ingestion, synthetic data, client partitioning and splitting.
//
// CSV schema: header `f0,f1,...,f{d-1},label`, one sample per row, `.` as the
// decimal point, no quoting. Labels are nonnegative integers.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <numeric>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "qfl/error.hpp"
#include "qfl/model.hpp"

namespace qfl {

/// Deterministic engine for a (seed, stream...) key. Distinct streams give
/// independent sequences for the same run seed.
template <class... Stream>
std::mt19937_64 seeded_engine(std::uint64_t seed, Stream... stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream)...};
    return std::mt19937_64(seq);
}

namespace detail {

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

inline std::vector<std::string_view> split_commas(std::string_view line) {
    std::vector<std::string_view> cells;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(',', start);
        cells.push_back(trim(line.substr(start, pos == std::string_view::npos ? pos : pos - start)));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return cells;
}

template <class T>
std::optional<T> parse_number(std::string_view cell) {
    T value{};
    if (!cell.empty() && cell.front() == '+') cell.remove_prefix(1);
    const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), value);
    if (ec != std::errc{} || ptr != cell.data() + cell.size() || cell.empty()) return std::nullopt;
    return value;
}

// Shortest representation that parses back to the same double.
inline std::string format_double(double v) {
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

// Largest-remainder apportionment of `total` items over `shares`.
inline std::vector<std::size_t> apportion(std::size_t total, const std::vector<double>& shares) {
    const double sum = std::accumulate(shares.begin(), shares.end(), 0.0);
    std::vector<std::size_t> counts(shares.size(), 0);
    std::vector<std::pair<double, std::size_t>> remainders;
    std::size_t assigned = 0;
    for (std::size_t i = 0; i < shares.size(); ++i) {
        const double exact = sum > 0 ? total * shares[i] / sum : 0.0;
        counts[i] = static_cast<std::size_t>(std::floor(exact));
        assigned += counts[i];
        remainders.emplace_back(exact - std::floor(exact), i);
    }
    std::stable_sort(remainders.begin(), remainders.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    for (std::size_t r = 0; assigned < total; ++r, ++assigned) {
        ++counts[remainders[r % remainders.size()].second];
    }
    return counts;
}

inline std::vector<std::vector<std::size_t>> indices_by_class(const LabeledDataset& data) {
    int max_label = -1;
    for (int y : data.labels) max_label = std::max(max_label, y);
    std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(max_label + 1));
    for (std::size_t i = 0; i < data.size(); ++i) {
        by_class[static_cast<std::size_t>(data.labels[i])].push_back(i);
    }
    return by_class;
}

}  // namespace detail

inline LabeledDataset parse_csv(std::istream& in) {
    std::string line;
    std::size_t lineno = 0;
    std::optional<std::size_t> label_col;
    std::size_t n_cols = 0;
    LabeledDataset data;

    while (std::getline(in, line)) {
        ++lineno;
        if (lineno == 1 && line.starts_with("\xEF\xBB\xBF")) line.erase(0, 3);
        if (detail::trim(line).empty()) {
            if (lineno == 1) throw ParseError("empty header row", lineno);
            continue;
        }
        const auto cells = detail::split_commas(line);
        if (lineno == 1) {
            n_cols = cells.size();
            for (std::size_t c = 0; c < cells.size(); ++c) {
                if (cells[c] == "label") label_col = c;
            }
            if (!label_col) throw ParseError("header has no 'label' column", lineno);
            if (n_cols < 2) throw ParseError("header has no feature columns", lineno);
            continue;
        }
        if (cells.size() != n_cols) {
            throw ParseError("expected " + std::to_string(n_cols) + " cells, found " +
                                 std::to_string(cells.size()),
                             lineno);
        }
        FeatureVector x;
        x.reserve(n_cols - 1);
        int label = 0;
        for (std::size_t c = 0; c < cells.size(); ++c) {
            if (c == *label_col) {
                const auto y = detail::parse_number<int>(cells[c]);
                if (!y || *y < 0) {
                    throw ParseError("label '" + std::string(cells[c]) +
                                         "' is not a nonnegative integer",
                                     lineno);
                }
                label = *y;
            } else {
                const auto v = detail::parse_number<double>(cells[c]);
                if (!v || !std::isfinite(*v)) {
                    throw ParseError("cell " + std::to_string(c) + " ('" + std::string(cells[c]) +
                                         "') is not a finite number",
                                     lineno);
                }
                x.push_back(*v);
            }
        }
        data.push_back(std::move(x), label);
    }
    if (lineno == 0) throw ParseError("empty file", 0);
    if (data.empty()) throw ParseError("no data rows", lineno);
    return data;
}

inline LabeledDataset load_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::ios_base::failure("cannot open " + path);
    try {
        return parse_csv(in);
    } catch (const ParseError& e) {
        throw ParseError(path + ": " + e.what(), 0);
    }
}

inline void write_csv(std::ostream& out, const LabeledDataset& data) {
    const std::size_t d = data.dimension();
    for (std::size_t j = 0; j < d; ++j) out << 'f' << j << ',';
    out << "label\n";
    for (std::size_t m = 0; m < data.size(); ++m) {
        for (double v : data.features[m]) out << detail::format_double(v) << ',';
        out << data.labels[m] << '\n';
    }
}

inline void save_csv(const std::string& path, const LabeledDataset& data) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::ios_base::failure("cannot write " + path);
    write_csv(out, data);
    if (!out) throw std::ios_base::failure("write failed for " + path);
}

/// Synthetic stand-in for a genomic table: each class gets a random unit
/// prototype; a sample is `separation * prototype` plus standard Gaussian noise.
inline LabeledDataset synth_genomic(std::size_t samples, std::size_t features, std::size_t classes,
                                    double separation, std::uint64_t seed) {
    if (features < 1) throw DomainError("synthetic data needs at least one feature");
    if (classes < 1 || samples < classes) throw DomainError("need samples >= classes >= 1");
    if (!(separation >= 0.0) || !std::isfinite(separation)) {
        throw DomainError("separation must be a finite nonnegative number");
    }
    auto rng = seeded_engine(seed, 0x5e17);
    std::normal_distribution<double> gauss(0.0, 1.0);

    std::vector<FeatureVector> prototypes(classes, FeatureVector(features));
    for (auto& p : prototypes) {
        double norm2 = 0.0;
        do {
            norm2 = 0.0;
            for (auto& v : p) {
                v = gauss(rng);
                norm2 += v * v;
            }
        } while (norm2 == 0.0);
        for (auto& v : p) v /= std::sqrt(norm2);
    }

    std::vector<int> labels(samples);
    for (std::size_t m = 0; m < samples; ++m) labels[m] = static_cast<int>(m % classes);
    std::shuffle(labels.begin(), labels.end(), rng);

    LabeledDataset data;
    for (std::size_t m = 0; m < samples; ++m) {
        const auto& proto = prototypes[static_cast<std::size_t>(labels[m])];
        FeatureVector x(features);
        for (std::size_t j = 0; j < features; ++j) x[j] = separation * proto[j] + gauss(rng);
        data.push_back(std::move(x), labels[m]);
    }
    return data;
}

enum class PartitionKind { IID_EQUAL, DIRICHLET };

struct PartitionStrategy {
    PartitionKind kind = PartitionKind::IID_EQUAL;
    double concentration = 1.0;  // DIRICHLET only
};

/// Splits `data` into `clients` disjoint shards whose union is the input.
/// IID_EQUAL deals a class-sorted shuffle round-robin, so shard sizes differ by
/// at most one and label mixes match the whole. DIRICHLET draws each class's
/// spread over clients from Dir(concentration).
inline std::vector<LabeledDataset> partition(const LabeledDataset& data, std::size_t clients,
                                             const PartitionStrategy& strategy,
                                             std::uint64_t seed) {
    if (clients == 0) throw PartitionError("need at least one client");
    if (clients > data.size()) {
        throw PartitionError("cannot split " + std::to_string(data.size()) + " samples over " +
                             std::to_string(clients) + " clients");
    }
    auto rng = seeded_engine(seed, 0x9a27);
    auto by_class = detail::indices_by_class(data);
    for (auto& idx : by_class) std::shuffle(idx.begin(), idx.end(), rng);

    std::vector<std::vector<std::size_t>> shards(clients);
    if (strategy.kind == PartitionKind::IID_EQUAL) {
        std::size_t t = 0;
        for (const auto& idx : by_class)
            for (auto i : idx) shards[t++ % clients].push_back(i);
    } else {
        if (!(strategy.concentration > 0.0)) {
            throw PartitionError("Dirichlet concentration must be positive");
        }
        std::gamma_distribution<double> gamma(strategy.concentration, 1.0);
        for (const auto& idx : by_class) {
            std::vector<double> shares(clients);
            for (auto& s : shares) s = gamma(rng);
            const auto counts = detail::apportion(idx.size(), shares);
            std::size_t pos = 0;
            for (std::size_t k = 0; k < clients; ++k)
                for (std::size_t c = 0; c < counts[k]; ++c) shards[k].push_back(idx[pos++]);
        }
        // Low concentrations can starve a client; lend it one sample from the largest shard.
        for (auto& shard : shards) {
            if (!shard.empty()) continue;
            auto largest = std::max_element(shards.begin(), shards.end(),
                                            [](const auto& a, const auto& b) { return a.size() < b.size(); });
            shard.push_back(largest->back());
            largest->pop_back();
        }
    }

    std::vector<LabeledDataset> out;
    out.reserve(clients);
    for (auto& shard : shards) {
        std::sort(shard.begin(), shard.end());
        out.push_back(data.subset(shard));
    }
    return out;
}

struct TrainTestSplit {
    LabeledDataset train;
    LabeledDataset test;
};

/// Stratified split. The test side gets round(fraction * M) samples, spread
/// over classes by largest remainder; both sides keep input order.
inline TrainTestSplit train_test_split(const LabeledDataset& data, double test_fraction,
                                       std::uint64_t seed) {
    if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
        throw DomainError("test fraction must lie in (0, 1)");
    }
    const std::size_t m = data.size();
    const auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(m)));
    if (n_test == 0 || n_test >= m) {
        throw DomainError("test fraction " + std::to_string(test_fraction) + " leaves an empty side for " +
                          std::to_string(m) + " samples");
    }
    auto rng = seeded_engine(seed, 0x7e57);
    auto by_class = detail::indices_by_class(data);
    std::vector<double> sizes;
    for (const auto& idx : by_class) sizes.push_back(static_cast<double>(idx.size()));
    const auto test_counts = detail::apportion(n_test, sizes);

    std::vector<std::size_t> train_idx, test_idx;
    for (std::size_t c = 0; c < by_class.size(); ++c) {
        auto idx = by_class[c];
        std::shuffle(idx.begin(), idx.end(), rng);
        const auto k = std::min(test_counts[c], idx.size());
        test_idx.insert(test_idx.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k));
        train_idx.insert(train_idx.end(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end());
    }
    std::sort(train_idx.begin(), train_idx.end());
    std::sort(test_idx.begin(), test_idx.end());
    return {data.subset(train_idx), data.subset(test_idx)};
}

}  // namespace qfl
