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

#include <cmath>
#include <complex>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "disentangle/clifford2q.hpp"
#include "disentangle/rng.hpp"

namespace disentangle::oracle {

using Complex = std::complex<double>;

inline constexpr size_t kMaxDenseQubits = 12;

/// Dense reference state. Qubit q is bit q of the amplitude index.
class DenseState {
  public:
    /// |0...0>.
    explicit DenseState(size_t n) : n_(n) {
        if (n == 0 || n > kMaxDenseQubits) throw std::invalid_argument("dense state supports 1..12 qubits");
        amps_.assign(size_t{1} << n, Complex{0.0, 0.0});
        amps_[0] = 1.0;
    }

    size_t num_qubits() const { return n_; }
    const std::vector<Complex> &amplitudes() const { return amps_; }

    double norm_squared() const {
        double s = 0.0;
        for (const Complex &a : amps_) s += std::norm(a);
        return s;
    }

    void h(size_t q) {
        check(q);
        const size_t bit = size_t{1} << q;
        const double r = 1.0 / std::sqrt(2.0);
        for (size_t i = 0; i < amps_.size(); ++i) {
            if (i & bit) continue;
            const Complex a0 = amps_[i], a1 = amps_[i | bit];
            amps_[i] = r * (a0 + a1);
            amps_[i | bit] = r * (a0 - a1);
        }
    }

    void s(size_t q) {
        check(q);
        const size_t bit = size_t{1} << q;
        for (size_t i = 0; i < amps_.size(); ++i) {
            if (i & bit) amps_[i] *= Complex{0.0, 1.0};
        }
    }

    void cnot(size_t control, size_t target) {
        check(control);
        check(target);
        if (control == target) throw std::invalid_argument("dense: cnot qubits must differ");
        const size_t cb = size_t{1} << control, tb = size_t{1} << target;
        for (size_t i = 0; i < amps_.size(); ++i) {
            if ((i & cb) && !(i & tb)) std::swap(amps_[i], amps_[i | tb]);
        }
    }

    /// Replays a generator word on the ordered pair (a, b).
    void apply_word(const std::vector<Gen> &word, size_t a, size_t b) {
        check(a);
        check(b);
        if (a == b) throw std::invalid_argument("dense: gate qubits must differ");
        for (Gen g : word) {
            switch (g) {
                case Gen::HA: h(a); break;
                case Gen::HB: h(b); break;
                case Gen::SA: s(a); break;
                case Gen::SB: s(b); break;
                case Gen::CnotAB: cnot(a, b); break;
            }
        }
    }

    double probability_one(size_t q) const {
        check(q);
        const size_t bit = size_t{1} << q;
        double p = 0.0;
        for (size_t i = 0; i < amps_.size(); ++i) {
            if (i & bit) p += std::norm(amps_[i]);
        }
        return p;
    }

    /// Projects qubit q onto |outcome> and renormalizes.
    void project_z(size_t q, bool outcome) {
        const double p1 = probability_one(q);
        const double p = outcome ? p1 : 1.0 - p1;
        if (p < 1e-12) throw std::logic_error("dense: projected onto a probability-zero branch");
        const size_t bit = size_t{1} << q;
        const double scale = 1.0 / std::sqrt(p);
        for (size_t i = 0; i < amps_.size(); ++i) {
            if (static_cast<bool>(i & bit) == outcome) {
                amps_[i] *= scale;
            } else {
                amps_[i] = 0.0;
            }
        }
    }

    /// Born-rule Z measurement.
    bool measure_z(size_t q, Rng &rng) {
        const bool outcome = uniform_real(rng) < probability_one(q);
        project_z(q, outcome);
        return outcome;
    }

    /// Reduced density matrix of the first `len` qubits.
    Eigen::MatrixXcd prefix_density(size_t len) const {
        const size_t da = size_t{1} << len, db = size_t{1} << (n_ - len);
        Eigen::Map<const Eigen::MatrixXcd> psi(amps_.data(), static_cast<Eigen::Index>(da),
                                              static_cast<Eigen::Index>(db));
        return psi * psi.adjoint();
    }

    /// Von Neumann entropy (bits) of the first `len` qubits.
    double prefix_entropy(size_t len) const {
        if (len == 0 || len >= n_) throw std::out_of_range("prefix length must be in [1, n)");
        // Both sides share a spectrum; diagonalize the smaller one.
        const size_t da = size_t{1} << len, db = size_t{1} << (n_ - len);
        Eigen::Map<const Eigen::MatrixXcd> psi(amps_.data(), static_cast<Eigen::Index>(da),
                                              static_cast<Eigen::Index>(db));
        const Eigen::MatrixXcd rho = da <= db ? Eigen::MatrixXcd(psi * psi.adjoint())
                                              : Eigen::MatrixXcd(psi.transpose() * psi.conjugate());
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> solver(rho, Eigen::EigenvaluesOnly);
        double s = 0.0;
        for (Eigen::Index k = 0; k < solver.eigenvalues().size(); ++k) {
            const double lambda = solver.eigenvalues()[k];
            if (lambda > 1e-12) s -= lambda * std::log2(lambda);
        }
        return s;
    }

    double avg_prefix_entropy() const {
        if (n_ < 2) throw std::invalid_argument("prefix entropy needs at least two qubits");
        double s = 0.0;
        for (size_t len = 1; len < n_; ++len) s += prefix_entropy(len);
        return s / static_cast<double>(n_ - 1);
    }

  private:
    void check(size_t q) const {
        if (q >= n_) throw std::out_of_range("dense: qubit index out of range");
    }

    size_t n_;
    std::vector<Complex> amps_;
};

}  // namespace disentangle::oracle
