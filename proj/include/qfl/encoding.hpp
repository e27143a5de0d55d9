#pragma once

// Classical feature vector -> quantum state.

#include <bit>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "qfl/error.hpp"
#include "qfl/qstate.hpp"

namespace qfl {

enum class EncodingScheme { BASIS, ANGLE, AMPLITUDE };

inline std::string to_string(EncodingScheme s) {
    switch (s) {
        case EncodingScheme::BASIS: return "basis";
        case EncodingScheme::ANGLE: return "angle";
        case EncodingScheme::AMPLITUDE: return "amplitude";
    }
    return "?";
}

using FeatureVector = std::vector<double>;

/// Qubits needed to hold `d` features. Amplitude packs d values into
/// ceil(log2 d) qubits (at least one); angle and basis use one qubit each.
inline std::size_t required_qubits(std::size_t d, EncodingScheme scheme) {
    if (d == 0) throw DomainError("feature dimension must be at least 1");
    std::size_t n = d;
    if (scheme == EncodingScheme::AMPLITUDE) {
        n = std::max<std::size_t>(1, static_cast<std::size_t>(std::bit_width(d - 1)));
    }
    if (n > kMaxQubits) {
        throw CapacityError(std::to_string(d) + " features need " + std::to_string(n) +
                            " qubits under " + to_string(scheme) + " encoding (limit " +
                            std::to_string(kMaxQubits) + ")");
    }
    return n;
}

namespace detail {
inline void check_finite(std::span<const double> x) {
    for (double v : x) {
        if (!std::isfinite(v)) throw EncodingError("feature vector has a non-finite entry");
    }
}
}  // namespace detail

/// Zero-pads x to the next power of two and divides by its Euclidean norm.
/// Signs are kept, so the result is a real state with possibly negative amplitudes.
inline Statevector amplitude_encode(std::span<const double> x) {
    const std::size_t n = required_qubits(x.size(), EncodingScheme::AMPLITUDE);
    detail::check_finite(x);
    double norm2 = 0.0;
    for (double v : x) norm2 += v * v;
    if (norm2 == 0.0) throw EncodingError("cannot amplitude-encode an all-zero vector");
    const double norm = std::sqrt(norm2);
    std::vector<Complex> amps(Statevector::dimension_of(n));
    for (std::size_t i = 0; i < x.size(); ++i) amps[i] = x[i] / norm;
    return Statevector(n, std::move(amps));
}

/// Tensor product of Ry(x_i)|0>, feature i on qubit i.
inline Statevector angle_encode(std::span<const double> x) {
    const std::size_t n = required_qubits(x.size(), EncodingScheme::ANGLE);
    detail::check_finite(x);
    auto state = Statevector::zero(n);
    for (std::size_t i = 0; i < x.size(); ++i) state = apply_ry(std::move(state), i, x[i]);
    return state;
}

/// Bit i of the basis index is x_i.
inline Statevector basis_encode(std::span<const double> bits) {
    const std::size_t n = required_qubits(bits.size(), EncodingScheme::BASIS);
    std::uint64_t index = 0;
    for (std::size_t i = 0; i < bits.size(); ++i) {
        if (bits[i] == 1.0) {
            index |= std::uint64_t{1} << i;
        } else if (bits[i] != 0.0) {
            throw EncodingError("basis encoding needs binary entries, got " +
                                std::to_string(bits[i]) + " at position " + std::to_string(i));
        }
    }
    return Statevector::basis(n, index);
}

inline Statevector encode(std::span<const double> x, EncodingScheme scheme) {
    switch (scheme) {
        case EncodingScheme::BASIS: return basis_encode(x);
        case EncodingScheme::ANGLE: return angle_encode(x);
        case EncodingScheme::AMPLITUDE: return amplitude_encode(x);
    }
    throw DomainError("unknown encoding scheme");
}

}  // namespace qfl
