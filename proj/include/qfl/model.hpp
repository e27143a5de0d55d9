#pragma once

// Variational quantum classifier: encode -> ansatz -> exact probabilities ->
// parity readout. Loss is the halved mean squared error over the dataset.

#include <algorithm>
#include <bit>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "qfl/ansatz.hpp"
#include "qfl/encoding.hpp"
#include "qfl/error.hpp"
#include "qfl/qstate.hpp"

namespace qfl {

struct LabeledDataset {
    std::vector<FeatureVector> features;
    std::vector<int> labels;

    std::size_t size() const noexcept { return labels.size(); }
    bool empty() const noexcept { return labels.empty(); }
    std::size_t dimension() const noexcept { return features.empty() ? 0 : features.front().size(); }

    void push_back(FeatureVector x, int y) {
        features.push_back(std::move(x));
        labels.push_back(y);
    }

    LabeledDataset subset(std::span<const std::size_t> indices) const {
        LabeledDataset out;
        out.features.reserve(indices.size());
        out.labels.reserve(indices.size());
        for (auto i : indices) out.push_back(features[i], labels[i]);
        return out;
    }

    friend bool operator==(const LabeledDataset&, const LabeledDataset&) = default;
};

struct ModelConfig {
    EncodingScheme encoding = EncodingScheme::AMPLITUDE;
    AnsatzSpec ansatz{};
    std::size_t n_classes = 2;
};

/// Builds a config whose ansatz width matches `d` features under `encoding`.
inline ModelConfig make_model_config(std::size_t d, EncodingScheme encoding, std::size_t reps,
                                     Entanglement ent = Entanglement::LINEAR,
                                     std::size_t n_classes = 2) {
    return {encoding, AnsatzSpec{required_qubits(d, encoding), reps, ent}, n_classes};
}

inline void validate(const ModelConfig& cfg) {
    if (cfg.n_classes < 2) throw DomainError("model needs at least 2 classes");
    Statevector::check_capacity(cfg.ansatz.n_qubits);
}

/// Checks that `data` is usable with `cfg`: consistent dimension, matching
/// qubit width and labels below n_classes.
inline void validate(const ModelConfig& cfg, const LabeledDataset& data) {
    validate(cfg);
    if (data.features.size() != data.labels.size()) {
        throw ShapeError("dataset has " + std::to_string(data.features.size()) +
                         " feature rows but " + std::to_string(data.labels.size()) + " labels");
    }
    const std::size_t d = data.dimension();
    for (std::size_t m = 0; m < data.size(); ++m) {
        if (data.features[m].size() != d) {
            throw ShapeError("sample " + std::to_string(m) + " has dimension " +
                             std::to_string(data.features[m].size()) + ", expected " +
                             std::to_string(d));
        }
        if (data.labels[m] < 0 || static_cast<std::size_t>(data.labels[m]) >= cfg.n_classes) {
            throw DomainError("label " + std::to_string(data.labels[m]) + " at sample " +
                              std::to_string(m) + " outside [0, " +
                              std::to_string(cfg.n_classes) + ")");
        }
    }
    if (d > 0 && required_qubits(d, cfg.encoding) != cfg.ansatz.n_qubits) {
        throw ShapeError(std::to_string(d) + " features need " +
                         std::to_string(required_qubits(d, cfg.encoding)) +
                         " qubits but the ansatz has " + std::to_string(cfg.ansatz.n_qubits));
    }
}

// Class c collects every bitstring whose popcount is c mod C.
inline std::vector<double> interpret_parity(const ProbabilityDistribution& dist,
                                            std::size_t n_classes) {
    std::vector<double> out(n_classes, 0.0);
    for (std::size_t b = 0; b < dist.probs.size(); ++b) {
        out[static_cast<std::size_t>(std::popcount(static_cast<std::uint64_t>(b))) % n_classes] +=
            dist.probs[b];
    }
    return out;
}

namespace detail {
inline std::vector<double> forward_bound(std::span<const Gate> circuit, std::span<const double> x,
                                         const ModelConfig& cfg) {
    auto state = encode(x, cfg.encoding);
    if (state.n_qubits() != cfg.ansatz.n_qubits) {
        throw ShapeError("encoded state has " + std::to_string(state.n_qubits()) +
                         " qubits, ansatz expects " + std::to_string(cfg.ansatz.n_qubits));
    }
    return interpret_parity(probabilities(apply_circuit(std::move(state), circuit)),
                            cfg.n_classes);
}
}  // namespace detail

inline std::vector<double> forward(std::span<const double> params, std::span<const double> x,
                                   const ModelConfig& cfg) {
    const auto circuit = build_bound_circuit(cfg.ansatz, params);
    return detail::forward_bound(circuit, x, cfg);
}

/// Lowest class index wins ties.
inline std::size_t argmax_class(std::span<const double> class_probs) {
    return static_cast<std::size_t>(
        std::distance(class_probs.begin(), std::max_element(class_probs.begin(), class_probs.end())));
}

/// Loss from already-computed class probabilities. For two classes the
/// class-1 probability is regressed against y; otherwise one-hot targets are
/// used and squared errors are summed over classes.
inline double mse_from_predictions(std::span<const std::vector<double>> class_probs,
                                   std::span<const int> labels) {
    if (labels.empty()) throw DomainError("loss of an empty dataset is undefined");
    if (class_probs.size() != labels.size()) throw ShapeError("prediction/label count mismatch");
    double acc = 0.0;
    for (std::size_t m = 0; m < labels.size(); ++m) {
        const auto& f = class_probs[m];
        if (f.size() == 2) {
            const double r = static_cast<double>(labels[m]) - f[1];
            acc += r * r;
        } else {
            for (std::size_t c = 0; c < f.size(); ++c) {
                const double r = (static_cast<std::size_t>(labels[m]) == c ? 1.0 : 0.0) - f[c];
                acc += r * r;
            }
        }
    }
    return acc / (2.0 * static_cast<double>(labels.size()));
}

inline double accuracy_from_predictions(std::span<const std::vector<double>> class_probs,
                                        std::span<const int> labels) {
    if (labels.empty()) throw DomainError("accuracy of an empty dataset is undefined");
    std::size_t correct = 0;
    for (std::size_t m = 0; m < labels.size(); ++m) {
        if (argmax_class(class_probs[m]) == static_cast<std::size_t>(labels[m])) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(labels.size());
}

inline std::vector<std::vector<double>> predict_all(std::span<const double> params,
                                                    const LabeledDataset& data,
                                                    const ModelConfig& cfg) {
    const auto circuit = build_bound_circuit(cfg.ansatz, params);
    std::vector<std::vector<double>> out;
    out.reserve(data.size());
    for (const auto& x : data.features) out.push_back(detail::forward_bound(circuit, x, cfg));
    return out;
}

inline double mse_loss(std::span<const double> params, const LabeledDataset& data,
                       const ModelConfig& cfg) {
    if (data.empty()) throw DomainError("loss of an empty dataset is undefined");
    return mse_from_predictions(predict_all(params, data, cfg), data.labels);
}

inline double top1_accuracy(std::span<const double> params, const LabeledDataset& data,
                            const ModelConfig& cfg) {
    if (data.empty()) throw DomainError("accuracy of an empty dataset is undefined");
    return accuracy_from_predictions(predict_all(params, data, cfg), data.labels);
}

struct Evaluation {
    double loss = 0.0;
    double accuracy = 0.0;
};

// One forward pass for both numbers.
inline Evaluation evaluate(std::span<const double> params, const LabeledDataset& data,
                           const ModelConfig& cfg) {
    if (data.empty()) throw DomainError("evaluation of an empty dataset is undefined");
    const auto preds = predict_all(params, data, cfg);
    return {mse_from_predictions(preds, data.labels), accuracy_from_predictions(preds, data.labels)};
}

}  // namespace qfl
