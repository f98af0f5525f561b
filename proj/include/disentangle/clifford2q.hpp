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

#include <array>
#include <bit>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <memory>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "disentangle/pauli.hpp"
#include "disentangle/rng.hpp"

namespace disentangle {

/// Generator alphabet for two-qubit Clifford words, acting on the ordered pair (a, b).
enum class Gen : uint8_t { HA, HB, SA, SB, CnotAB };

inline constexpr std::array<Gen, 5> kAllGens = {Gen::HA, Gen::HB, Gen::SA, Gen::SB, Gen::CnotAB};

inline const char *gen_name(Gen g) {
    switch (g) {
        case Gen::HA: return "HA";
        case Gen::HB: return "HB";
        case Gen::SA: return "SA";
        case Gen::SB: return "SB";
        case Gen::CnotAB: return "CX";
    }
    return "?";
}

inline Gen gen_from_name(std::string_view name) {
    for (Gen g : kAllGens) {
        if (name == gen_name(g)) return g;
    }
    throw std::invalid_argument("unknown generator '" + std::string(name) + "'");
}

/// Signed Pauli on two qubits. Bit 0 of x/z is qubit a, bit 1 is qubit b.
struct Pauli2 {
    uint8_t x = 0;
    uint8_t z = 0;
    bool sign = false;

    bool commutes(const Pauli2 &o) const {
        return (std::popcount(static_cast<unsigned>((x & o.z) ^ (z & o.x))) & 1) == 0;
    }
    uint8_t bits() const { return static_cast<uint8_t>(x | (z << 2)); }
    uint8_t key() const { return static_cast<uint8_t>(bits() | (sign ? 16 : 0)); }

    PauliString to_pauli_string() const {
        PauliString p(2);
        p.set(0, x & 1, z & 1);
        p.set(1, (x >> 1) & 1, (z >> 1) & 1);
        p.sign = sign;
        return p;
    }

    bool operator==(const Pauli2 &) const = default;
};

/// Conjugates p by a single generator: g p g^dagger.
inline Pauli2 conjugate(Pauli2 p, Gen g) {
    auto bit = [](uint8_t v, int k) { return (v >> k) & 1; };
    switch (g) {
        case Gen::HA:
        case Gen::HB: {
            const int q = g == Gen::HA ? 0 : 1;
            const int xb = bit(p.x, q), zb = bit(p.z, q);
            p.sign ^= xb & zb;
            p.x = static_cast<uint8_t>((p.x & ~(1 << q)) | (zb << q));
            p.z = static_cast<uint8_t>((p.z & ~(1 << q)) | (xb << q));
            break;
        }
        case Gen::SA:
        case Gen::SB: {
            const int q = g == Gen::SA ? 0 : 1;
            const int xb = bit(p.x, q), zb = bit(p.z, q);
            p.sign ^= xb & zb;
            p.z = static_cast<uint8_t>(p.z ^ (xb << q));
            break;
        }
        case Gen::CnotAB: {
            const int xa = bit(p.x, 0), za = bit(p.z, 0), xb = bit(p.x, 1), zb = bit(p.z, 1);
            p.sign ^= xa & zb & (xb ^ za ^ 1);
            p.x = static_cast<uint8_t>(p.x ^ (xa << 1));
            p.z = static_cast<uint8_t>(p.z ^ zb);
            break;
        }
    }
    return p;
}

/// A two-qubit Clifford element modulo global phase, stored as the images of
/// X_a, Z_a, X_b, Z_b under conjugation together with a generator word that
/// realizes it (word[0] is applied first).
struct CliffordGate2Q {
    std::array<Pauli2, 4> images{};
    std::vector<Gen> word;

    /// Conjugation of each of the 16 local Pauli patterns (index x | z << 2):
    /// new pattern bits plus a sign flip in bit 4.
    std::array<uint8_t, 16> action{};

    static CliffordGate2Q identity() {
        CliffordGate2Q g;
        g.images = {Pauli2{1, 0, false}, Pauli2{0, 1, false}, Pauli2{2, 0, false}, Pauli2{0, 2, false}};
        g.rebuild_action();
        return g;
    }

    /// 20-bit key over images and signs; identifies the element.
    uint32_t key() const {
        uint32_t k = 0;
        for (size_t i = 0; i < 4; ++i) k |= static_cast<uint32_t>(images[i].key()) << (5 * i);
        return k;
    }
    /// 16-bit key ignoring signs; identifies the symplectic part.
    uint32_t symplectic_key() const {
        uint32_t k = 0;
        for (size_t i = 0; i < 4; ++i) k |= static_cast<uint32_t>(images[i].bits()) << (4 * i);
        return k;
    }

    bool is_symplectic() const {
        for (size_t i = 0; i < 4; ++i) {
            for (size_t j = i + 1; j < 4; ++j) {
                // (X_a, Z_a) and (X_b, Z_b) are the anticommuting pairs.
                const bool should_anticommute = (i == 0 && j == 1) || (i == 2 && j == 3);
                if (images[i].commutes(images[j]) == should_anticommute) return false;
            }
        }
        return true;
    }

    /// Image of an arbitrary signed two-qubit Pauli.
    Pauli2 apply(Pauli2 p) const {
        const uint8_t a = action[p.bits()];
        return Pauli2{static_cast<uint8_t>(a & 3), static_cast<uint8_t>((a >> 2) & 3),
                      static_cast<bool>(p.sign ^ ((a >> 4) & 1))};
    }

    void rebuild_action() {
        for (uint8_t pattern = 0; pattern < 16; ++pattern) {
            const uint8_t x = pattern & 3, z = (pattern >> 2) & 3;
            // sigma(1,1) = Y = i X Z, so the pattern equals
            // i^{#Y} X_a^xa Z_a^za X_b^xb Z_b^zb and maps to the same product of images.
            int phase = std::popcount(static_cast<unsigned>(x & z));
            uint64_t rx = 0, rz = 0;
            const std::array<bool, 4> present = {(x & 1) != 0, (z & 1) != 0, (x & 2) != 0, (z & 2) != 0};
            for (size_t k = 0; k < 4; ++k) {
                if (!present[k]) continue;
                const Pauli2 &img = images[k];
                phase += 2 * (img.sign ? 1 : 0) + product_phase_word(rx, rz, img.x, img.z);
                rx ^= img.x;
                rz ^= img.z;
            }
            phase &= 3;
            if (phase & 1) throw std::logic_error("clifford: images are not symplectic");
            action[pattern] = static_cast<uint8_t>(rx | (rz << 2) | (phase == 2 ? 16 : 0));
        }
    }

    /// Element that applies `this` first and then `after`.
    CliffordGate2Q then(const CliffordGate2Q &after) const {
        CliffordGate2Q out;
        for (size_t i = 0; i < 4; ++i) out.images[i] = after.apply(images[i]);
        out.word = word;
        out.word.insert(out.word.end(), after.word.begin(), after.word.end());
        out.rebuild_action();
        return out;
    }

    /// Element followed by one more generator.
    CliffordGate2Q then(Gen g) const {
        CliffordGate2Q out;
        for (size_t i = 0; i < 4; ++i) out.images[i] = conjugate(images[i], g);
        out.word = word;
        out.word.push_back(g);
        out.rebuild_action();
        return out;
    }

    std::string word_string() const {
        std::string s;
        for (size_t i = 0; i < word.size(); ++i) {
            if (i) s += ' ';
            s += gen_name(word[i]);
        }
        return s;
    }
};

inline constexpr size_t kClifford2QOrder = 11520;
inline constexpr size_t kSymplectic2QOrder = 720;

/// All 11520 two-qubit Clifford elements (mod phase), each with a shortest word.
/// Immutable once built.
class CliffordTable {
  public:
    CliffordTable() {
        std::deque<size_t> frontier;
        add(CliffordGate2Q::identity());
        frontier.push_back(0);
        while (!frontier.empty()) {
            const size_t cur = frontier.front();
            frontier.pop_front();
            for (Gen g : kAllGens) {
                CliffordGate2Q next = elements_[cur].then(g);
                if (index_.count(next.key())) continue;
                frontier.push_back(add(std::move(next)));
            }
        }
        if (elements_.size() != kClifford2QOrder) {
            throw std::logic_error("clifford: closure has " + std::to_string(elements_.size()) +
                                   " elements, expected 11520");
        }
    }

    /// Shared, lazily built instance.
    static std::shared_ptr<const CliffordTable> shared() {
        static const std::shared_ptr<const CliffordTable> table = std::make_shared<const CliffordTable>();
        return table;
    }

    size_t size() const { return elements_.size(); }
    const CliffordGate2Q &operator[](size_t i) const { return elements_[i]; }
    const std::vector<CliffordGate2Q> &elements() const { return elements_; }

    /// Index of the element with the given key, or size() if absent.
    size_t find(uint32_t key) const {
        auto it = index_.find(key);
        return it == index_.end() ? elements_.size() : it->second;
    }

    size_t inverse_index(size_t i) const {
        const uint32_t id = CliffordGate2Q::identity().key();
        for (size_t j = 0; j < elements_.size(); ++j) {
            if (elements_[i].then(elements_[j]).key() == id) return j;
        }
        throw std::logic_error("clifford: no inverse found");
    }

    /// Uniform draw over the table.
    size_t sample_index(Rng &rng) const { return uniform_index(rng, elements_.size()); }
    const CliffordGate2Q &sample(Rng &rng) const { return elements_[sample_index(rng)]; }

  private:
    size_t add(CliffordGate2Q g) {
        const size_t i = elements_.size();
        index_.emplace(g.key(), i);
        elements_.push_back(std::move(g));
        return i;
    }

    std::vector<CliffordGate2Q> elements_;
    std::unordered_map<uint32_t, size_t> index_;
};

}  // namespace disentangle
