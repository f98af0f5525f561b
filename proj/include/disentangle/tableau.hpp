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
#include <vector>

#include "disentangle/clifford2q.hpp"
#include "disentangle/gf2.hpp"
#include "disentangle/pauli.hpp"
#include "disentangle/rng.hpp"

namespace disentangle {

/// Subset of qubit indices, stored as a bit mask over n qubits.
class Region {
  public:
    explicit Region(size_t n) : n_(n), mask_(words_for_bits(n), 0) {}

    /// The first `len` qubits.
    static Region prefix(size_t n, size_t len) {
        if (len > n) throw std::out_of_range("region: prefix longer than chain");
        Region r(n);
        for (size_t q = 0; q < len; ++q) r.insert(q);
        return r;
    }
    static Region of(size_t n, std::initializer_list<size_t> qubits) {
        Region r(n);
        for (size_t q : qubits) r.insert(q);
        return r;
    }

    void insert(size_t q) {
        if (q >= n_) throw std::out_of_range("region: qubit index out of range");
        mask_[q / 64] |= uint64_t{1} << (q % 64);
    }
    bool contains(size_t q) const { return (mask_[q / 64] >> (q % 64)) & 1; }
    size_t size() const {
        size_t s = 0;
        for (uint64_t w : mask_) s += std::popcount(w);
        return s;
    }
    size_t num_qubits() const { return n_; }

    Region complement() const {
        Region r(n_);
        for (size_t q = 0; q < n_; ++q) {
            if (!contains(q)) r.insert(q);
        }
        return r;
    }

  private:
    size_t n_;
    std::vector<uint64_t> mask_;
};

struct MeasureResult {
    bool outcome = false;
    bool deterministic = false;
};

/// Stabilizer state as a CHP-style tableau: rows [0, n) are destabilizers and
/// rows [n, 2n) stabilizers. Row r is (-1)^sign * prod_q sigma(x_rq, z_rq).
class StabilizerTableau {
  public:
    /// |0...0>: stabilizers +Z_i, destabilizers +X_i.
    static StabilizerTableau computational_basis(size_t n) {
        if (n == 0) throw std::invalid_argument("tableau: need at least one qubit");
        StabilizerTableau t(n);
        for (size_t q = 0; q < n; ++q) {
            t.set_x(q, q, true);
            t.set_z(n + q, q, true);
        }
        return t;
    }

    size_t num_qubits() const { return n_; }

    PauliString row(size_t r) const {
        PauliString p(n_);
        for (size_t k = 0; k < words_; ++k) {
            p.x[k] = xs_[r * words_ + k];
            p.z[k] = zs_[r * words_ + k];
        }
        p.sign = signs_[r] != 0;
        return p;
    }
    PauliString destabilizer(size_t i) const { return row(i); }
    PauliString stabilizer(size_t i) const { return row(n_ + i); }

    void h(size_t q) {
        check_qubit(q);
        for (size_t r = 0; r < 2 * n_; ++r) {
            const bool xb = x(r, q), zb = z(r, q);
            signs_[r] ^= static_cast<uint8_t>(xb & zb);
            set_x(r, q, zb);
            set_z(r, q, xb);
        }
    }

    void s(size_t q) {
        check_qubit(q);
        for (size_t r = 0; r < 2 * n_; ++r) {
            const bool xb = x(r, q), zb = z(r, q);
            signs_[r] ^= static_cast<uint8_t>(xb & zb);
            set_z(r, q, zb ^ xb);
        }
    }

    void cnot(size_t control, size_t target) {
        check_pair(control, target);
        for (size_t r = 0; r < 2 * n_; ++r) {
            const bool xa = x(r, control), za = z(r, control);
            const bool xb = x(r, target), zb = z(r, target);
            signs_[r] ^= static_cast<uint8_t>(xa & zb & (xb ^ za ^ 1));
            set_x(r, target, xb ^ xa);
            set_z(r, control, za ^ zb);
        }
    }

    void apply(Gen g, size_t a, size_t b) {
        switch (g) {
            case Gen::HA: h(a); break;
            case Gen::HB: h(b); break;
            case Gen::SA: s(a); break;
            case Gen::SB: s(b); break;
            case Gen::CnotAB: cnot(a, b); break;
        }
    }

    /// Conjugates every row by the gate acting on qubits (a, b).
    void apply_gate(const CliffordGate2Q &gate, size_t a, size_t b) {
        check_pair(a, b);
        const size_t wa = a / 64, wb = b / 64;
        const unsigned sa = a % 64, sb = b % 64;
        for (size_t r = 0; r < 2 * n_; ++r) {
            uint64_t &xa = xs_[r * words_ + wa];
            uint64_t &za = zs_[r * words_ + wa];
            uint64_t &xb = xs_[r * words_ + wb];
            uint64_t &zb = zs_[r * words_ + wb];
            const unsigned pattern = static_cast<unsigned>(((xa >> sa) & 1) | (((xb >> sb) & 1) << 1) |
                                                           (((za >> sa) & 1) << 2) | (((zb >> sb) & 1) << 3));
            if (pattern == 0) continue;
            const uint8_t act = gate.action[pattern];
            const uint64_t ma = ~(uint64_t{1} << sa), mb = ~(uint64_t{1} << sb);
            xa = (xa & ma) | (static_cast<uint64_t>(act & 1) << sa);
            za = (za & ma) | (static_cast<uint64_t>((act >> 2) & 1) << sa);
            xb = (xb & mb) | (static_cast<uint64_t>((act >> 1) & 1) << sb);
            zb = (zb & mb) | (static_cast<uint64_t>((act >> 3) & 1) << sb);
            signs_[r] ^= static_cast<uint8_t>((act >> 4) & 1);
        }
    }

    /// Z-basis measurement of qubit q. Random outcomes come from rng.
    MeasureResult measure_z(size_t q, Rng &rng) {
        check_qubit(q);
        size_t p = 2 * n_;
        for (size_t r = n_; r < 2 * n_; ++r) {
            if (x(r, q)) {
                p = r;
                break;
            }
        }
        if (p == 2 * n_) {
            // Deterministic: Z_q is (+/-) a product of the stabilizers whose
            // destabilizers anticommute with it.
            std::vector<uint64_t> sx(words_, 0), sz(words_, 0);
            uint8_t sign = 0;
            for (size_t i = 0; i < n_; ++i) {
                if (x(i, q)) rowsum_into(sx.data(), sz.data(), sign, n_ + i);
            }
            return {sign != 0, true};
        }
        // Row p - n anticommutes with row p; it is overwritten below instead.
        for (size_t r = 0; r < 2 * n_; ++r) {
            if (r != p && r != p - n_ && x(r, q)) rowsum(r, p);
        }
        copy_row(p, p - n_);
        for (size_t k = 0; k < words_; ++k) {
            xs_[p * words_ + k] = 0;
            zs_[p * words_ + k] = 0;
        }
        set_z(p, q, true);
        const bool outcome = coin_flip(rng);
        signs_[p] = outcome ? 1 : 0;
        return {outcome, false};
    }

    /// S(A) in bits: rank of the stabilizers restricted to A, minus |A|.
    size_t region_entropy(const Region &a) const {
        const size_t size = a.size();
        if (a.num_qubits() != n_) throw std::invalid_argument("region: qubit count mismatch");
        if (size == 0 || size == n_) throw std::invalid_argument("region: must be a non-empty proper subset");
        std::vector<size_t> members;
        members.reserve(size);
        for (size_t q = 0; q < n_; ++q) {
            if (a.contains(q)) members.push_back(q);
        }
        return restricted_rank(members) - size;
    }

    /// Entropy of the first `len` qubits, 1 <= len < n.
    size_t prefix_entropy(size_t len) const {
        if (len == 0 || len >= n_) throw std::out_of_range("prefix length must be in [1, n)");
        if (n_ <= 32) {
            const uint64_t mask = (uint64_t{1} << len) - 1;
            std::vector<uint64_t> rows(n_);
            for (size_t i = 0; i < n_; ++i) {
                rows[i] = (xs_[(n_ + i) * words_] & mask) | ((zs_[(n_ + i) * words_] & mask) << len);
            }
            return gf2_rank_words(std::move(rows)) - len;
        }
        std::vector<size_t> members(len);
        for (size_t q = 0; q < len; ++q) members[q] = q;
        return restricted_rank(members) - len;
    }

    /// Sum of the n-1 prefix entropies; zero iff the state is a product state.
    size_t prefix_entropy_sum() const {
        if (n_ < 2) throw std::invalid_argument("prefix entropy needs at least two qubits");
        size_t total = 0;
        for (size_t len = 1; len < n_; ++len) total += prefix_entropy(len);
        return total;
    }

    double avg_prefix_entropy() const {
        return static_cast<double>(prefix_entropy_sum()) / static_cast<double>(n_ - 1);
    }

    /// The n x 2n (X|Z) matrix of the stabilizer rows.
    Gf2Matrix stabilizer_matrix() const {
        Gf2Matrix m(n_, 2 * n_);
        for (size_t i = 0; i < n_; ++i) {
            for (size_t q = 0; q < n_; ++q) {
                m.set(i, q, x(n_ + i, q));
                m.set(i, n_ + q, z(n_ + i, q));
            }
        }
        return m;
    }

    /// Checks commutation structure and full rank. Returns an empty string when valid.
    std::string validate() const {
        std::vector<PauliString> rows;
        rows.reserve(2 * n_);
        for (size_t r = 0; r < 2 * n_; ++r) rows.push_back(row(r));
        for (size_t i = 0; i < n_; ++i) {
            for (size_t j = 0; j < n_; ++j) {
                if (!rows[n_ + i].commutes(rows[n_ + j])) {
                    return "stabilizers " + std::to_string(i) + " and " + std::to_string(j) + " anticommute";
                }
                if (rows[i].commutes(rows[n_ + j]) == (i == j)) {
                    return "destabilizer " + std::to_string(i) + " vs stabilizer " + std::to_string(j);
                }
            }
        }
        Gf2Matrix all(2 * n_, 2 * n_);
        for (size_t r = 0; r < 2 * n_; ++r) {
            for (size_t q = 0; q < n_; ++q) {
                all.set(r, q, x(r, q));
                all.set(r, n_ + q, z(r, q));
            }
        }
        if (gf2_rank(all) != 2 * n_) return "rows are not independent";
        return {};
    }

    bool operator==(const StabilizerTableau &) const = default;

  private:
    explicit StabilizerTableau(size_t n)
        : n_(n), words_(words_for_bits(n)), xs_(2 * n * words_, 0), zs_(2 * n * words_, 0), signs_(2 * n, 0) {}

    bool x(size_t r, size_t q) const { return (xs_[r * words_ + q / 64] >> (q % 64)) & 1; }
    bool z(size_t r, size_t q) const { return (zs_[r * words_ + q / 64] >> (q % 64)) & 1; }
    void set_x(size_t r, size_t q, bool v) { set_bit(xs_[r * words_ + q / 64], q % 64, v); }
    void set_z(size_t r, size_t q, bool v) { set_bit(zs_[r * words_ + q / 64], q % 64, v); }
    static void set_bit(uint64_t &w, size_t b, bool v) {
        const uint64_t bit = uint64_t{1} << b;
        w = v ? (w | bit) : (w & ~bit);
    }

    void check_qubit(size_t q) const {
        if (q >= n_) throw std::out_of_range("tableau: qubit index out of range");
    }
    void check_pair(size_t a, size_t b) const {
        check_qubit(a);
        check_qubit(b);
        if (a == b) throw std::invalid_argument("tableau: gate qubits must be distinct");
    }

    // (hx, hz, hsign) <- row src * (hx, hz, hsign); phase tracked mod 4.
    void rowsum_into(uint64_t *hx, uint64_t *hz, uint8_t &hsign, size_t src) const {
        int phase = 2 * hsign + 2 * signs_[src];
        for (size_t k = 0; k < words_; ++k) {
            const uint64_t ix = xs_[src * words_ + k], iz = zs_[src * words_ + k];
            phase += product_phase_word(ix, iz, hx[k], hz[k]);
            hx[k] ^= ix;
            hz[k] ^= iz;
        }
        phase &= 3;
        if (phase & 1) throw std::logic_error("tableau: rowsum of anticommuting rows");
        hsign = phase == 2 ? 1 : 0;
    }

    void rowsum(size_t h, size_t src) {
        rowsum_into(&xs_[h * words_], &zs_[h * words_], signs_[h], src);
    }

    void copy_row(size_t src, size_t dst) {
        for (size_t k = 0; k < words_; ++k) {
            xs_[dst * words_ + k] = xs_[src * words_ + k];
            zs_[dst * words_ + k] = zs_[src * words_ + k];
        }
        signs_[dst] = signs_[src];
    }

    size_t restricted_rank(const std::vector<size_t> &members) const {
        const size_t width = 2 * members.size();
        Gf2Matrix m(n_, width);
        for (size_t i = 0; i < n_; ++i) {
            for (size_t k = 0; k < members.size(); ++k) {
                m.set(i, k, x(n_ + i, members[k]));
                m.set(i, members.size() + k, z(n_ + i, members[k]));
            }
        }
        return m.eliminate();
    }

    size_t n_;
    size_t words_;
    std::vector<uint64_t> xs_;
    std::vector<uint64_t> zs_;
    std::vector<uint8_t> signs_;
};

}  // namespace disentangle
