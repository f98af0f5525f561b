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

#include "disentangle/statevector.hpp"

#include <gtest/gtest.h>

#include <cmath>

#include "test_support.hpp"

using namespace disentangle;
using oracle::DenseState;

TEST(DenseState, EmptyWordLeavesStateUnchanged) {
    DenseState s(3);
    s.h(1);
    const auto before = s.amplitudes();
    s.apply_word({}, 0, 2);
    EXPECT_EQ(s.amplitudes(), before);
}

TEST(DenseState, HadamardOnZero) {
    DenseState s(2);
    s.apply_word({Gen::HA}, 0, 1);
    const double r = 1.0 / std::sqrt(2.0);
    EXPECT_NEAR(s.amplitudes()[0].real(), r, 1e-15);
    EXPECT_NEAR(s.amplitudes()[1].real(), r, 1e-15);
    EXPECT_EQ(s.amplitudes()[2], oracle::Complex(0.0));
}

TEST(DenseState, NormPreservedOverRandomWords) {
    Rng rng(17);
    const auto &table = *CliffordTable::shared();
    DenseState s(6);
    for (int k = 0; k < 100; ++k) {
        const size_t a = uniform_index(rng, 6);
        s.apply_word(table.sample(rng).word, a, (a + 1 + uniform_index(rng, 5)) % 6);
    }
    EXPECT_NEAR(s.norm_squared(), 1.0, 1e-9);
}

TEST(DenseState, InvalidIndices) {
    DenseState s(3);
    EXPECT_THROW(s.apply_word({Gen::HA}, 0, 3), std::out_of_range);
    EXPECT_THROW(s.apply_word({Gen::HA}, 1, 1), std::invalid_argument);
    EXPECT_THROW(s.prefix_entropy(3), std::out_of_range);
    EXPECT_THROW(DenseState(13), std::invalid_argument);
}

TEST(DenseState, MeasureZeroIsCertain) {
    Rng rng(1);
    for (int k = 0; k < 100; ++k) {
        DenseState s(2);
        EXPECT_FALSE(s.measure_z(1, rng));
    }
}

TEST(DenseState, MeasurePlusIsFairAndRepeatable) {
    Rng rng(77);
    size_t ones = 0;
    const size_t runs = 10000;
    for (size_t k = 0; k < runs; ++k) {
        DenseState s(1);
        s.h(0);
        const bool first = s.measure_z(0, rng);
        ones += first;
        ASSERT_EQ(s.measure_z(0, rng), first);
    }
    EXPECT_NEAR(static_cast<double>(ones) / runs, 0.5, 0.01);
}

TEST(DenseState, ProjectingOntoImpossibleBranchFails) {
    DenseState s(1);
    EXPECT_THROW(s.project_z(0, true), std::logic_error);
}

TEST(DenseState, BellAndProductEntropies) {
    DenseState bell(2);
    bell.apply_word({Gen::HA, Gen::CnotAB}, 0, 1);
    EXPECT_NEAR(bell.prefix_entropy(1), 1.0, 1e-12);
    DenseState product(4);
    product.h(0);
    product.s(2);
    for (size_t len = 1; len < 4; ++len) EXPECT_NEAR(product.prefix_entropy(len), 0.0, 1e-12);
}

TEST(DenseState, AgreesWithStabilizerEntropies) {
    Rng rng(31);
    for (int trial = 0; trial < 200; ++trial) {
        const size_t n = 2 + uniform_index(rng, 5);
        auto s = test_support::random_twin_state(n, 2 + uniform_index(rng, 4 * n), rng);
        for (size_t len = 1; len < n; ++len) {
            const double dense = s.dense.prefix_entropy(len);
            ASSERT_NEAR(dense, static_cast<double>(s.tableau.prefix_entropy(len)), 1e-9);
            ASSERT_NEAR(dense, std::round(dense), 1e-9);
        }
        ASSERT_NEAR(s.dense.avg_prefix_entropy(), s.tableau.avg_prefix_entropy(), 1e-9);
    }
}

TEST(DenseState, LargerSideUsesSameSpectrum) {
    Rng rng(8);
    auto s = test_support::random_twin_state(7, 30, rng);
    for (size_t len = 1; len < 7; ++len) {
        const Eigen::MatrixXcd rho = s.dense.prefix_density(len);
        EXPECT_NEAR(rho.trace().real(), 1.0, 1e-9);
        EXPECT_NEAR(s.dense.prefix_entropy(len), static_cast<double>(s.tableau.prefix_entropy(len)), 1e-9);
    }
}
