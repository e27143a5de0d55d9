#pragma once

// Minimal statevector engine: |0...0> construction, RY and CX gates, exact
// measurement probabilities and an optional seeded shot sampler.
//
// Bit ordering is little-endian: qubit q is bit q of the basis index.

#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "qfl/error.hpp"

namespace qfl {

using Complex = std::complex<double>;

inline constexpr std::size_t kMaxQubits = 25;

// Construction tolerance on sum |a|^2.
inline constexpr double kNormTolerance = 1e-10;
// Accumulated drift allowed after a circuit before it counts as a bug.
inline constexpr double kNormDriftLimit = 1e-8;

class Statevector {
public:
    Statevector(std::size_t n_qubits, std::vector<Complex> amplitudes)
        : n_qubits_(n_qubits), amplitudes_(std::move(amplitudes)) {
        check_capacity(n_qubits_);
        if (amplitudes_.size() != dimension_of(n_qubits_)) {
            throw ShapeError("statevector needs " + std::to_string(dimension_of(n_qubits_)) +
                             " amplitudes, got " + std::to_string(amplitudes_.size()));
        }
        if (std::abs(norm_squared() - 1.0) > kNormTolerance) {
            throw EncodingError("amplitudes are not normalized");
        }
    }

    static Statevector zero(std::size_t n_qubits) {
        check_capacity(n_qubits);
        std::vector<Complex> amps(dimension_of(n_qubits));
        amps[0] = 1.0;
        return Statevector(n_qubits, std::move(amps), Unchecked{});
    }

    static Statevector basis(std::size_t n_qubits, std::uint64_t index) {
        check_capacity(n_qubits);
        if (index >= dimension_of(n_qubits)) {
            throw IndexError("basis index " + std::to_string(index) + " out of range");
        }
        std::vector<Complex> amps(dimension_of(n_qubits));
        amps[index] = 1.0;
        return Statevector(n_qubits, std::move(amps), Unchecked{});
    }

    std::size_t n_qubits() const noexcept { return n_qubits_; }
    std::size_t dimension() const noexcept { return amplitudes_.size(); }
    std::span<const Complex> amplitudes() const noexcept { return amplitudes_; }
    const Complex& operator[](std::size_t i) const { return amplitudes_[i]; }

    double norm_squared() const noexcept {
        double acc = 0.0;
        for (const auto& a : amplitudes_) acc += std::norm(a);
        return acc;
    }

    static std::size_t dimension_of(std::size_t n_qubits) noexcept {
        return std::size_t{1} << n_qubits;
    }

    static void check_capacity(std::size_t n_qubits) {
        if (n_qubits < 1 || n_qubits > kMaxQubits) {
            throw CapacityError("qubit count " + std::to_string(n_qubits) +
                                " outside [1, " + std::to_string(kMaxQubits) + "]");
        }
    }

private:
    struct Unchecked {};
    Statevector(std::size_t n_qubits, std::vector<Complex> amplitudes, Unchecked)
        : n_qubits_(n_qubits), amplitudes_(std::move(amplitudes)) {}

    friend class StateKernel;

    std::size_t n_qubits_;
    std::vector<Complex> amplitudes_;
};

enum class GateKind { RY, CX };

struct Gate {
    GateKind kind;
    std::size_t target;
    std::size_t control = 0;  // CX only
    double angle = 0.0;       // RY only, radians

    static Gate ry(std::size_t qubit, double theta) { return {GateKind::RY, qubit, 0, theta}; }
    static Gate cx(std::size_t control, std::size_t target) {
        return {GateKind::CX, target, control, 0.0};
    }

    friend bool operator==(const Gate&, const Gate&) = default;
};

struct ProbabilityDistribution {
    std::size_t n_qubits = 0;
    std::vector<double> probs;  // indexed by basis bitstring
};

// In-place gate kernels. Only reachable through the value-returning API below.
class StateKernel {
public:
    static std::vector<Complex>& data(Statevector& s) { return s.amplitudes_; }

    static void ry(std::vector<Complex>& amps, std::size_t qubit, double theta) {
        const double c = std::cos(theta / 2.0);
        const double s = std::sin(theta / 2.0);
        const std::size_t stride = std::size_t{1} << qubit;
        const std::size_t dim = amps.size();
        for (std::size_t base = 0; base < dim; base += 2 * stride) {
            for (std::size_t i = base; i < base + stride; ++i) {
                const Complex a0 = amps[i];
                const Complex a1 = amps[i + stride];
                amps[i] = c * a0 - s * a1;
                amps[i + stride] = s * a0 + c * a1;
            }
        }
    }

    static void cx(std::vector<Complex>& amps, std::size_t control, std::size_t target) {
        const std::size_t cmask = std::size_t{1} << control;
        const std::size_t tmask = std::size_t{1} << target;
        for (std::size_t i = 0; i < amps.size(); ++i) {
            if ((i & cmask) && !(i & tmask)) std::swap(amps[i], amps[i | tmask]);
        }
    }
};

inline void validate_gate(const Gate& g, std::size_t n_qubits) {
    if (g.target >= n_qubits) {
        throw IndexError("target qubit " + std::to_string(g.target) + " out of range for " +
                         std::to_string(n_qubits) + " qubits");
    }
    if (g.kind == GateKind::CX) {
        if (g.control >= n_qubits) {
            throw IndexError("control qubit " + std::to_string(g.control) + " out of range for " +
                             std::to_string(n_qubits) + " qubits");
        }
        if (g.control == g.target) throw IndexError("CX control equals target");
    }
}

inline Statevector new_zero_state(std::size_t n_qubits) { return Statevector::zero(n_qubits); }

inline Statevector apply_ry(Statevector state, std::size_t qubit, double theta) {
    validate_gate(Gate::ry(qubit, theta), state.n_qubits());
    StateKernel::ry(StateKernel::data(state), qubit, theta);
    return state;
}

inline Statevector apply_cx(Statevector state, std::size_t control, std::size_t target) {
    validate_gate(Gate::cx(control, target), state.n_qubits());
    StateKernel::cx(StateKernel::data(state), control, target);
    return state;
}

inline Statevector apply_circuit(Statevector state, std::span<const Gate> gates) {
    auto& amps = StateKernel::data(state);
    for (const auto& g : gates) {
        validate_gate(g, state.n_qubits());
        if (g.kind == GateKind::RY) {
            StateKernel::ry(amps, g.target, g.angle);
        } else {
            StateKernel::cx(amps, g.control, g.target);
        }
    }
    if (std::abs(state.norm_squared() - 1.0) > kNormDriftLimit) {
        throw InternalError("norm drifted beyond tolerance during circuit execution");
    }
    return state;
}

// Exact (infinite-shot) outcome distribution.
inline ProbabilityDistribution probabilities(const Statevector& state) {
    ProbabilityDistribution out{state.n_qubits(), std::vector<double>(state.dimension())};
    for (std::size_t i = 0; i < state.dimension(); ++i) out.probs[i] = std::norm(state[i]);
    return out;
}

// Empirical distribution from `shots` seeded draws. Not used by training.
inline ProbabilityDistribution sample_probabilities(const Statevector& state, std::size_t shots,
                                                    std::uint64_t seed) {
    if (shots == 0) throw DomainError("shot count must be positive");
    const auto exact = probabilities(state);
    std::mt19937_64 rng(seed);
    std::discrete_distribution<std::size_t> pick(exact.probs.begin(), exact.probs.end());
    std::vector<std::size_t> counts(exact.probs.size(), 0);
    for (std::size_t s = 0; s < shots; ++s) ++counts[pick(rng)];
    ProbabilityDistribution out{state.n_qubits(), std::vector<double>(counts.size())};
    for (std::size_t i = 0; i < counts.size(); ++i) {
        out.probs[i] = static_cast<double>(counts[i]) / static_cast<double>(shots);
    }
    return out;
}

}  // namespace qfl
