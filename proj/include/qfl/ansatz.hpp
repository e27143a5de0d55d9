#pragma once

// Real-amplitudes ansatz: an RY layer, then `reps` x (CX entangler, RY layer).

#include <span>
#include <string>
#include <vector>

#include "qfl/error.hpp"
#include "qfl/qstate.hpp"

namespace qfl {

enum class Entanglement { LINEAR, FULL };

inline std::string to_string(Entanglement e) {
    return e == Entanglement::LINEAR ? "linear" : "full";
}

struct AnsatzSpec {
    std::size_t n_qubits = 1;
    std::size_t reps = 3;
    Entanglement entanglement = Entanglement::LINEAR;
};

using ParameterVector = std::vector<double>;

inline std::size_t param_count(const AnsatzSpec& spec) { return spec.n_qubits * (spec.reps + 1); }

inline void check_param_shape(const AnsatzSpec& spec, std::size_t got) {
    if (got != param_count(spec)) {
        throw ShapeError("ansatz expects " + std::to_string(param_count(spec)) +
                         " parameters, got " + std::to_string(got));
    }
}

inline std::vector<Gate> build_bound_circuit(const AnsatzSpec& spec,
                                             std::span<const double> params) {
    check_param_shape(spec, params.size());
    const std::size_t n = spec.n_qubits;
    std::vector<Gate> gates;
    gates.reserve(param_count(spec) + spec.reps * n * (n - 1) / 2);

    std::size_t p = 0;
    auto rotation_layer = [&] {
        for (std::size_t q = 0; q < n; ++q) gates.push_back(Gate::ry(q, params[p++]));
    };

    rotation_layer();
    for (std::size_t r = 0; r < spec.reps; ++r) {
        if (spec.entanglement == Entanglement::LINEAR) {
            for (std::size_t i = 0; i + 1 < n; ++i) gates.push_back(Gate::cx(i, i + 1));
        } else {
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = i + 1; j < n; ++j) gates.push_back(Gate::cx(i, j));
        }
        rotation_layer();
    }
    return gates;
}

}  // namespace qfl
