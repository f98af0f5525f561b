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
#include <string_view>
#include <utility>
#include <vector>

namespace disentangle {

inline constexpr size_t words_for_bits(size_t bits) {
    return (bits + 63) / 64;
}

/// Dense binary matrix with rows packed into 64-bit words.
class Gf2Matrix {
  public:
    Gf2Matrix() = default;
    Gf2Matrix(size_t rows, size_t cols)
        : rows_(rows), cols_(cols), stride_(words_for_bits(cols)), data_(rows * stride_, 0) {}

    /// Builds a matrix from strings of '0'/'1'. All rows must have equal length.
    static Gf2Matrix from_strings(const std::vector<std::string_view> &rows) {
        const size_t cols = rows.empty() ? 0 : rows.front().size();
        Gf2Matrix m(rows.size(), cols);
        for (size_t r = 0; r < rows.size(); ++r) {
            if (rows[r].size() != cols) {
                throw std::invalid_argument("gf2: rows must have equal width");
            }
            for (size_t c = 0; c < cols; ++c) {
                if (rows[r][c] == '1') {
                    m.set(r, c, true);
                } else if (rows[r][c] != '0') {
                    throw std::invalid_argument("gf2: expected '0' or '1'");
                }
            }
        }
        return m;
    }

    size_t rows() const { return rows_; }
    size_t cols() const { return cols_; }
    size_t stride() const { return stride_; }

    bool get(size_t r, size_t c) const {
        return (data_[r * stride_ + c / 64] >> (c % 64)) & 1;
    }
    void set(size_t r, size_t c, bool v) {
        uint64_t &w = data_[r * stride_ + c / 64];
        const uint64_t bit = uint64_t{1} << (c % 64);
        w = v ? (w | bit) : (w & ~bit);
    }

    uint64_t *row(size_t r) { return data_.data() + r * stride_; }
    const uint64_t *row(size_t r) const { return data_.data() + r * stride_; }

    void xor_row_into(size_t src, size_t dst) {
        uint64_t *d = row(dst);
        const uint64_t *s = row(src);
        for (size_t k = 0; k < stride_; ++k) {
            d[k] ^= s[k];
        }
    }
    void swap_rows(size_t a, size_t b) {
        if (a == b) return;
        for (size_t k = 0; k < stride_; ++k) {
            std::swap(data_[a * stride_ + k], data_[b * stride_ + k]);
        }
    }

    /// Appends the rows of `other`, which must have the same column count.
    void append_rows(const Gf2Matrix &other) {
        if (other.cols_ != cols_) {
            throw std::invalid_argument("gf2: column mismatch");
        }
        data_.insert(data_.end(), other.data_.begin(), other.data_.end());
        rows_ += other.rows_;
    }

    /// Reduces in place to row echelon form and returns the rank.
    size_t eliminate() {
        size_t rank = 0;
        for (size_t c = 0; c < cols_ && rank < rows_; ++c) {
            const size_t word = c / 64;
            const uint64_t bit = uint64_t{1} << (c % 64);
            size_t pivot = rank;
            while (pivot < rows_ && !(row(pivot)[word] & bit)) {
                ++pivot;
            }
            if (pivot == rows_) continue;
            swap_rows(pivot, rank);
            for (size_t r = rank + 1; r < rows_; ++r) {
                if (row(r)[word] & bit) {
                    xor_row_into(rank, r);
                }
            }
            ++rank;
        }
        return rank;
    }

    bool operator==(const Gf2Matrix &) const = default;

  private:
    size_t rows_ = 0;
    size_t cols_ = 0;
    size_t stride_ = 0;
    std::vector<uint64_t> data_;
};

/// Rank over GF(2). The input is not modified.
inline size_t gf2_rank(const Gf2Matrix &m) {
    Gf2Matrix work = m;
    return work.eliminate();
}

/// Rank of single-word rows (width <= 64), eliminating on the given copy.
inline size_t gf2_rank_words(std::vector<uint64_t> rows) {
    size_t rank = 0;
    for (size_t i = 0; i < rows.size(); ++i) {
        // Pivot on the lowest set bit of the first non-zero remaining row.
        size_t pick = i;
        while (pick < rows.size() && rows[pick] == 0) ++pick;
        if (pick == rows.size()) break;
        std::swap(rows[i], rows[pick]);
        const uint64_t pivot = rows[i] & (~rows[i] + 1);
        for (size_t r = i + 1; r < rows.size(); ++r) {
            if (rows[r] & pivot) rows[r] ^= rows[i];
        }
        ++rank;
    }
    return rank;
}

/// True iff the row spans of a and b coincide.
inline bool same_row_span(const Gf2Matrix &a, const Gf2Matrix &b) {
    const size_t ra = gf2_rank(a);
    if (ra != gf2_rank(b)) return false;
    Gf2Matrix joint = a;
    joint.append_rows(b);
    return gf2_rank(joint) == ra;
}

}  // namespace disentangle
