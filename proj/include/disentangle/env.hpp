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

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstddef>
#include <cstdint>
#include <istream>
#include <memory>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "disentangle/clifford2q.hpp"
#include "disentangle/rng.hpp"
#include "disentangle/tableau.hpp"

namespace disentangle {

struct PlacedGate {
    size_t a = 0;
    size_t b = 0;
    size_t gate = 0;  // index into the CliffordTable

    bool operator==(const PlacedGate &) const = default;
};

/// Brick-wall circuit of d unitary layers on a periodic chain of n qubits.
struct CircuitSpec {
    size_t n = 0;
    size_t d = 0;
    uint64_t seed = 0;
    std::vector<std::vector<PlacedGate>> layers;

    bool operator==(const CircuitSpec &) const = default;
};

/// Qubit pairs of unitary layer `layer` (0-based). Even layers use bonds
/// (0,1),(2,3),...; odd layers use (1,2),(3,4),... and wrap (n-1,0) when n is
/// even. For odd n one qubit per layer stays idle.
inline std::vector<std::pair<size_t, size_t>> brickwall_pairs(size_t n, size_t layer) {
    std::vector<std::pair<size_t, size_t>> pairs;
    const size_t start = layer % 2;
    for (size_t a = start; a + 1 < n; a += 2) pairs.emplace_back(a, a + 1);
    if (start == 1 && n % 2 == 0) pairs.emplace_back(n - 1, 0);
    return pairs;
}

inline CircuitSpec build_brickwall(size_t n, size_t d, uint64_t seed, const CliffordTable &table) {
    if (n < 2) throw std::invalid_argument("brickwall: need at least two qubits");
    if (d < 2 || d % 2 != 0) throw std::invalid_argument("brickwall: depth must be even and >= 2");
    CircuitSpec c;
    c.n = n;
    c.d = d;
    c.seed = seed;
    Rng rng(seed);
    c.layers.resize(d);
    for (size_t layer = 0; layer < d; ++layer) {
        for (auto [a, b] : brickwall_pairs(n, layer)) {
            c.layers[layer].push_back(PlacedGate{a, b, table.sample_index(rng)});
        }
    }
    return c;
}

/// Draws the circuit seed from rng, so the result is reproducible from c.seed alone.
inline CircuitSpec build_brickwall(size_t n, size_t d, Rng &rng, const CliffordTable &table) {
    return build_brickwall(n, d, rng(), table);
}

/// n x L binary matrix of measurement positions; entry (i, j) places a Z
/// measurement on qubit i after unitary layer 2j+2.
class MeasurementMatrix {
  public:
    MeasurementMatrix() = default;
    MeasurementMatrix(size_t n, size_t layers) : n_(n), layers_(layers), bits_(n * layers, 0) {}

    size_t rows() const { return n_; }
    size_t cols() const { return layers_; }
    size_t size() const { return bits_.size(); }

    bool get(size_t qubit, size_t layer) const { return bits_.at(qubit * layers_ + layer) != 0; }
    void set(size_t qubit, size_t layer, bool v) { bits_.at(qubit * layers_ + layer) = v ? 1 : 0; }
    /// Flips the bit at row-major flat index `action`.
    void toggle(size_t action) { bits_.at(action) ^= 1; }

    size_t popcount() const {
        size_t c = 0;
        for (uint8_t b : bits_) c += b;
        return c;
    }
    size_t column_count(size_t layer) const {
        size_t c = 0;
        for (size_t i = 0; i < n_; ++i) c += bits_[i * layers_ + layer];
        return c;
    }

    void clear() { std::fill(bits_.begin(), bits_.end(), 0); }

    /// Row-major 0.0/1.0 vector of length n * L.
    std::vector<double> observation() const { return std::vector<double>(bits_.begin(), bits_.end()); }

    bool operator==(const MeasurementMatrix &) const = default;

  private:
    size_t n_ = 0;
    size_t layers_ = 0;
    std::vector<uint8_t> bits_;
};

/// Runs the circuit from |0...0>: unitary layers 2j and 2j+1, then the
/// measurements of column j, for each j. Outcomes are appended to `outcomes`
/// (qubit-major within a column) when non-null.
inline StabilizerTableau simulate(const CircuitSpec &c, const MeasurementMatrix &p, const CliffordTable &table,
                                  Rng &rng, std::vector<bool> *outcomes = nullptr) {
    if (p.rows() != c.n || p.cols() * 2 != c.d) {
        throw std::invalid_argument("simulate: measurement matrix does not match circuit");
    }
    StabilizerTableau t = StabilizerTableau::computational_basis(c.n);
    for (size_t j = 0; j < p.cols(); ++j) {
        for (size_t layer = 2 * j; layer < 2 * j + 2; ++layer) {
            for (const PlacedGate &g : c.layers[layer]) t.apply_gate(table[g.gate], g.a, g.b);
        }
        for (size_t q = 0; q < c.n; ++q) {
            if (!p.get(q, j)) continue;
            const MeasureResult m = t.measure_z(q, rng);
            if (outcomes) outcomes->push_back(m.outcome);
        }
    }
    return t;
}

enum class PenaltyOrientation { DepthIncreasing, AsWritten };
enum class CircuitMode { ResamplePerEpisode, Fixed };

inline std::string to_string(PenaltyOrientation o) {
    return o == PenaltyOrientation::DepthIncreasing ? "depth_increasing" : "as_written";
}
inline std::string to_string(CircuitMode m) {
    return m == CircuitMode::ResamplePerEpisode ? "resample_per_episode" : "fixed";
}
inline PenaltyOrientation parse_orientation(std::string_view s) {
    if (s == "depth_increasing") return PenaltyOrientation::DepthIncreasing;
    if (s == "as_written") return PenaltyOrientation::AsWritten;
    throw std::invalid_argument("unknown penalty orientation '" + std::string(s) + "'");
}
inline CircuitMode parse_circuit_mode(std::string_view s) {
    if (s == "resample_per_episode" || s == "resample") return CircuitMode::ResamplePerEpisode;
    if (s == "fixed") return CircuitMode::Fixed;
    throw std::invalid_argument("unknown circuit mode '" + std::string(s) + "'");
}

/// f_{l;alpha} = 2 e^{-alpha l} / (1 + e^{-alpha l}).
inline double penalty_weight(double l, double alpha) {
    const double e = std::exp(-alpha * l);
    return 2.0 * e / (1.0 + e);
}

/// Weight of measurement layer j (1-based) out of L. DepthIncreasing reverses
/// the index so the deepest layer carries f_{1;alpha}, the largest weight.
inline double layer_weight(size_t j, double alpha, size_t layers, PenaltyOrientation orientation) {
    if (j < 1 || j > layers) throw std::out_of_range("layer_weight: layer index out of range");
    if (alpha < 0) throw std::invalid_argument("layer_weight: alpha must be non-negative");
    const size_t l = orientation == PenaltyOrientation::AsWritten ? j : layers - j + 1;
    return penalty_weight(static_cast<double>(l), alpha);
}

/// F = sum of all layer weights (orientation independent).
inline double weight_total(size_t layers, double alpha) {
    double f = 0.0;
    for (size_t l = 1; l <= layers; ++l) f += penalty_weight(static_cast<double>(l), alpha);
    return f;
}

/// C = sum_j w_j * m_j.
inline double measurement_cost(const MeasurementMatrix &p, double alpha, PenaltyOrientation orientation) {
    double c = 0.0;
    for (size_t j = 0; j < p.cols(); ++j) {
        const size_t m = p.column_count(j);
        if (m) c += layer_weight(j + 1, alpha, p.cols(), orientation) * static_cast<double>(m);
    }
    return c;
}

/// R = 1 - C / (F N), in [0, 1].
inline double unscaled_reward(const MeasurementMatrix &p, double alpha, PenaltyOrientation orientation) {
    const double f = weight_total(p.cols(), alpha);
    // C and F N are summed in different orders; a full matrix can land a few
    // ulps outside the interval.
    return std::clamp(1.0 - measurement_cost(p, alpha, orientation) / (f * static_cast<double>(p.rows())), 0.0, 1.0);
}

/// Measurement-count weighted mean layer (1-based).
inline double weighted_avg_layer(const MeasurementMatrix &p) {
    size_t total = 0;
    double acc = 0.0;
    for (size_t j = 0; j < p.cols(); ++j) {
        const size_t m = p.column_count(j);
        total += m;
        acc += static_cast<double>((j + 1) * m);
    }
    if (total == 0) throw std::invalid_argument("weighted_avg_layer: no measurements");
    return acc / static_cast<double>(total);
}

struct EnvConfig {
    size_t n = 4;
    size_t d = 6;
    double alpha = 0.1;
    double p_r = 50.0;
    size_t max_steps = 0;  // 0 selects 2 * n * L
    PenaltyOrientation orientation = PenaltyOrientation::DepthIncreasing;
    CircuitMode circuit_mode = CircuitMode::ResamplePerEpisode;
    uint64_t seed = 0;

    size_t layers() const { return d / 2; }
    size_t num_actions() const { return n * layers(); }
    size_t resolved_max_steps() const { return max_steps ? max_steps : 2 * n * layers(); }

    void validate() const {
        if (n < 2) throw std::invalid_argument("n must be >= 2");
        if (d < 2 || d % 2 != 0) throw std::invalid_argument("depth must be even and >= 2");
        if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw std::invalid_argument("alpha must be >= 0");
        if (!(p_r > 0.0) || !std::isfinite(p_r)) throw std::invalid_argument("p_r must be > 0");
    }

    double sparse_reward(const MeasurementMatrix &p) const { return p_r * unscaled_reward(p, alpha, orientation); }
};

struct StepResult {
    std::vector<double> observation;
    double reward = 0.0;
    bool terminated = false;
    bool truncated = false;
};

/// The disentangling game: toggle measurement bits until the final state has
/// zero prefix-averaged entropy.
class DisentangleEnv {
  public:
    static constexpr size_t kMaxRedraws = 100;

    explicit DisentangleEnv(EnvConfig cfg, std::shared_ptr<const CliffordTable> table = CliffordTable::shared())
        : cfg_(std::move(cfg)),
          table_(std::move(table)),
          circuit_rng_(derive_seed(cfg_.seed, 1)),
          outcome_rng_(derive_seed(cfg_.seed, 2)) {
        cfg_.validate();
        if (cfg_.circuit_mode == CircuitMode::Fixed) {
            Rng fixed_rng(derive_seed(cfg_.seed, 0));
            fixed_circuit_ = draw_circuit(fixed_rng);
        }
    }

    const EnvConfig &config() const { return cfg_; }
    size_t num_actions() const { return cfg_.num_actions(); }
    size_t observation_size() const { return cfg_.num_actions(); }
    const CircuitSpec &circuit() const { return circuit_; }
    const MeasurementMatrix &matrix() const { return p_; }
    size_t steps_taken() const { return steps_; }
    bool done() const { return done_; }
    /// Prefix-entropy sum after the last step.
    size_t last_entropy_sum() const { return last_entropy_sum_; }
    const CliffordTable &table() const { return *table_; }

    std::vector<double> reset() {
        circuit_ = cfg_.circuit_mode == CircuitMode::Fixed ? fixed_circuit_ : draw_circuit(circuit_rng_);
        p_ = MeasurementMatrix(cfg_.n, cfg_.layers());
        steps_ = 0;
        done_ = false;
        started_ = true;
        last_entropy_sum_ = entropy_sum();
        return p_.observation();
    }

    StepResult step(size_t action) {
        if (!started_) throw std::logic_error("env: step before reset");
        if (done_) throw std::logic_error("env: step after episode end");
        if (action >= num_actions()) throw std::out_of_range("env: action out of range");
        p_.toggle(action);
        ++steps_;
        last_entropy_sum_ = entropy_sum();
        StepResult r;
        if (last_entropy_sum_ == 0) {
            r.terminated = true;
            r.reward = cfg_.sparse_reward(p_);
        } else if (steps_ >= cfg_.resolved_max_steps()) {
            r.truncated = true;
        }
        done_ = r.terminated || r.truncated;
        r.observation = p_.observation();
        return r;
    }

  private:
    size_t entropy_sum() { return simulate(circuit_, p_, *table_, outcome_rng_).prefix_entropy_sum(); }

    CircuitSpec draw_circuit(Rng &rng) const {
        const MeasurementMatrix empty(cfg_.n, cfg_.layers());
        for (size_t attempt = 0; attempt < kMaxRedraws; ++attempt) {
            CircuitSpec c = build_brickwall(cfg_.n, cfg_.d, rng, *table_);
            Rng unused(0);
            if (simulate(c, empty, *table_, unused).prefix_entropy_sum() != 0) return c;
        }
        throw std::runtime_error("env: 100 consecutive circuits were already disentangled");
    }

    EnvConfig cfg_;
    std::shared_ptr<const CliffordTable> table_;
    Rng circuit_rng_;
    Rng outcome_rng_;
    CircuitSpec fixed_circuit_;
    CircuitSpec circuit_;
    MeasurementMatrix p_;
    size_t steps_ = 0;
    size_t last_entropy_sum_ = 0;
    bool done_ = false;
    bool started_ = false;
};

inline constexpr const char *kCircuitFormat = "disentangle-circuit v1";

/// Versioned text form. With inline_gates=false only (n, d, seed) are written
/// and the gates are regenerated on read.
inline void write_circuit(std::ostream &out, const CircuitSpec &c, bool inline_gates = true) {
    out << kCircuitFormat << "\n";
    out << "n " << c.n << "\n";
    out << "d " << c.d << "\n";
    out << "seed " << c.seed << "\n";
    out << "gates " << (inline_gates ? "inline" : "omitted") << "\n";
    if (!inline_gates) return;
    for (size_t layer = 0; layer < c.layers.size(); ++layer) {
        out << "layer " << layer;
        for (const PlacedGate &g : c.layers[layer]) out << " " << g.a << ":" << g.b << ":" << g.gate;
        out << "\n";
    }
}

inline CircuitSpec read_circuit(std::istream &in, const CliffordTable &table) {
    std::string line;
    if (!std::getline(in, line) || line != kCircuitFormat) {
        throw std::runtime_error("circuit: expected header '" + std::string(kCircuitFormat) + "'");
    }
    auto field = [&](const char *name) {
        std::string key;
        std::string value;
        if (!(in >> key >> value) || key != name) throw std::runtime_error(std::string("circuit: missing ") + name);
        return value;
    };
    const size_t n = std::stoul(field("n"));
    const size_t d = std::stoul(field("d"));
    const uint64_t seed = std::stoull(field("seed"));
    const std::string mode = field("gates");
    CircuitSpec c = build_brickwall(n, d, seed, table);
    if (mode == "omitted") return c;
    if (mode != "inline") throw std::runtime_error("circuit: unknown gates mode '" + mode + "'");
    std::getline(in, line);
    for (size_t layer = 0; layer < d; ++layer) {
        if (!std::getline(in, line)) throw std::runtime_error("circuit: truncated layer list");
        std::istringstream ls(line);
        std::string tag;
        size_t idx = 0;
        ls >> tag >> idx;
        if (tag != "layer" || idx != layer) throw std::runtime_error("circuit: malformed layer line");
        std::vector<PlacedGate> gates;
        std::string tok;
        while (ls >> tok) {
            PlacedGate g;
            if (std::sscanf(tok.c_str(), "%zu:%zu:%zu", &g.a, &g.b, &g.gate) != 3 || g.gate >= table.size()) {
                throw std::runtime_error("circuit: malformed gate '" + tok + "'");
            }
            gates.push_back(g);
        }
        c.layers[layer] = std::move(gates);
    }
    return c;
}

}  // namespace disentangle
