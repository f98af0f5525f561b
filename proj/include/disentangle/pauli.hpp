// Copyright 2026 The Disentangle Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <bit>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "disentangle/gf2.hpp"

namespace disentangle {

/// Exponent k (mod 4) of i in the per-qubit products sigma(x1,z1) * sigma(x2,z2)
/// = i^k sigma(x1^x2, z1^z2), summed over the 64 lanes of one word. Here
/// sigma(1,1) = Y.
inline int product_phase_word(uint64_t x1, uint64_t z1, uint64_t x2, uint64_t z2) {
    const uint64_t y1 = x1 & z1;
    const uint64_t xo = x1 & ~z1;
    const uint64_t zo = ~x1 & z1;
    const uint64_t plus = (y1 & z2 & ~x2) | (xo & x2 & z2) | (zo & x2 & ~z2);
    const uint64_t minus = (y1 & x2 & ~z2) | (xo & z2 & ~x2) | (zo & x2 & z2);
    return std::popcount(plus) - std::popcount(minus);
}

/// A signed Pauli operator on n qubits: (-1)^sign * prod_j sigma(x_j, z_j).
struct PauliString {
    size_t n = 0;
    std::vector<uint64_t> x;
    std::vector<uint64_t> z;
    bool sign = false;  // true means -1

    PauliString() = default;
    explicit PauliString(size_t num_qubits)
        : n(num_qubits), x(words_for_bits(num_qubits), 0), z(words_for_bits(num_qubits), 0) {}

    /// Parses e.g. "+XZI", "-Y_Z" ('_' and 'I' are identity). Sign optional.
    static PauliString from_string(std::string_view text) {
        bool negative = false;
        if (!text.empty() && (text.front() == '+' || text.front() == '-')) {
            negative = text.front() == '-';
            text.remove_prefix(1);
        }
        PauliString p(text.size());
        p.sign = negative;
        for (size_t q = 0; q < text.size(); ++q) {
            switch (text[q]) {
                case 'I': case '_': break;
                case 'X': p.set(q, true, false); break;
                case 'Z': p.set(q, false, true); break;
                case 'Y': p.set(q, true, true); break;
                default: throw std::invalid_argument("pauli: unexpected character");
            }
        }
        return p;
    }

    std::string to_string() const {
        std::string out(1, sign ? '-' : '+');
        for (size_t q = 0; q < n; ++q) {
            const bool xb = x_bit(q), zb = z_bit(q);
            out += xb ? (zb ? 'Y' : 'X') : (zb ? 'Z' : 'I');
        }
        return out;
    }

    bool x_bit(size_t q) const { return (x[q / 64] >> (q % 64)) & 1; }
    bool z_bit(size_t q) const { return (z[q / 64] >> (q % 64)) & 1; }
    void set(size_t q, bool xb, bool zb) {
        const uint64_t bit = uint64_t{1} << (q % 64);
        x[q / 64] = xb ? (x[q / 64] | bit) : (x[q / 64] & ~bit);
        z[q / 64] = zb ? (z[q / 64] | bit) : (z[q / 64] & ~bit);
    }

    size_t weight() const {
        size_t w = 0;
        for (size_t k = 0; k < x.size(); ++k) w += std::popcount(x[k] | z[k]);
        return w;
    }

    bool commutes(const PauliString &other) const {
        uint64_t acc = 0;
        for (size_t k = 0; k < x.size(); ++k) {
            acc ^= std::popcount((x[k] & other.z[k]) ^ (z[k] & other.x[k])) & 1;
        }
        return acc == 0;
    }

    /// this <- this * rhs for commuting operands; result stays Hermitian.
    PauliString &operator*=(const PauliString &rhs) {
        if (rhs.n != n) throw std::invalid_argument("pauli: size mismatch");
        int phase = 2 * (sign ? 1 : 0) + 2 * (rhs.sign ? 1 : 0);
        for (size_t k = 0; k < x.size(); ++k) {
            phase += product_phase_word(x[k], z[k], rhs.x[k], rhs.z[k]);
            x[k] ^= rhs.x[k];
            z[k] ^= rhs.z[k];
        }
        phase &= 3;
        if (phase & 1) throw std::logic_error("pauli: product of anticommuting operators");
        sign = phase == 2;
        return *this;
    }

    bool operator==(const PauliString &) const = default;
};

}  // namespace disentangle
