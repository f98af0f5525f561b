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
#include <array>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <functional>
#include <istream>
#include <mutex>
#include <numeric>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "disentangle/env.hpp"
#include "disentangle/ppo.hpp"
#include "disentangle/rng.hpp"
#include "disentangle/textio.hpp"

namespace disentangle {

/// Running mean and standard error of the mean.
class MeanAccumulator {
  public:
    void add(double x) {
        ++n_;
        const double delta = x - mean_;
        mean_ += delta / static_cast<double>(n_);
        m2_ += delta * (x - mean_);
    }
    size_t count() const { return n_; }
    double mean() const { return n_ ? mean_ : std::nan(""); }
    double stderr_of_mean() const {
        if (n_ < 2) return n_ ? 0.0 : std::nan("");
        return std::sqrt(m2_ / static_cast<double>(n_ - 1) / static_cast<double>(n_));
    }

  private:
    size_t n_ = 0;
    double mean_ = 0.0;
    double m2_ = 0.0;
};

// ---------------------------------------------------------------------------
// Entanglement growth without measurements

struct GrowthCurve {
    size_t n = 0;
    std::vector<size_t> depths;
    std::vector<double> mean_savg;
    std::vector<double> stderr_savg;
};

/// Mean S_avg of measurement-free brick-wall circuits at every even depth in
/// [0, max_depth]. Each sample is one circuit of depth max_depth, read off
/// after every second layer.
inline std::vector<GrowthCurve> entanglement_growth(const std::vector<size_t> &ns, size_t max_depth, size_t n_samples,
                                                    uint64_t seed, const CliffordTable &table = *CliffordTable::shared()) {
    if (n_samples == 0) throw std::invalid_argument("growth: need at least one sample");
    if (max_depth % 2 != 0) throw std::invalid_argument("growth: max depth must be even");
    std::vector<GrowthCurve> curves;
    for (size_t n : ns) {
        if (n < 2) throw std::invalid_argument("growth: need at least two qubits");
        Rng rng(derive_seed(seed, n));
        const size_t points = max_depth / 2 + 1;
        std::vector<MeanAccumulator> acc(points);
        for (size_t s = 0; s < n_samples; ++s) {
            auto t = StabilizerTableau::computational_basis(n);
            acc[0].add(0.0);
            if (max_depth == 0) continue;
            const CircuitSpec c = build_brickwall(n, max_depth, rng, table);
            for (size_t layer = 0; layer < max_depth; ++layer) {
                for (const PlacedGate &g : c.layers[layer]) t.apply_gate(table[g.gate], g.a, g.b);
                if (layer % 2 == 1) acc[(layer + 1) / 2].add(t.avg_prefix_entropy());
            }
        }
        GrowthCurve curve;
        curve.n = n;
        for (size_t k = 0; k < points; ++k) {
            curve.depths.push_back(2 * k);
            curve.mean_savg.push_back(acc[k].mean());
            curve.stderr_savg.push_back(acc[k].stderr_of_mean());
        }
        curves.push_back(std::move(curve));
    }
    return curves;
}

inline constexpr const char *kGrowthHeader = "n,depth,mean_savg,stderr";

inline void write_growth_csv(std::ostream &out, const std::vector<GrowthCurve> &curves) {
    out << kGrowthHeader << "\n";
    for (const GrowthCurve &c : curves) {
        for (size_t k = 0; k < c.depths.size(); ++k) {
            out << c.n << "," << c.depths[k] << "," << format_double(c.mean_savg[k]) << ","
                << format_double(c.stderr_savg[k]) << "\n";
        }
    }
}

// ---------------------------------------------------------------------------
// Policy evaluation

/// An actor maps (observation, rng) to an action index.
using Actor = std::function<size_t(const std::vector<double> &, Rng &)>;

inline Actor policy_actor(const ppo::PolicyModel &model) {
    return [&model](const std::vector<double> &obs, Rng &rng) {
        return ppo::sample_categorical(model.forward(obs).logits, rng);
    };
}

inline Actor uniform_random_actor(size_t num_actions) {
    return [num_actions](const std::vector<double> &, Rng &rng) { return uniform_index(rng, num_actions); };
}

/// Scripted actor that switches on the next unmeasured qubit of the final layer.
inline Actor final_column_actor(size_t n, size_t layers) {
    return [n, layers](const std::vector<double> &obs, Rng &) {
        for (size_t q = 0; q < n; ++q) {
            if (obs[q * layers + layers - 1] == 0.0) return q * layers + layers - 1;
        }
        return layers - 1;
    };
}

struct EvalStats {
    size_t n_episodes = 0;
    size_t success_count = 0;
    double mean_measurements = std::nan("");
    double stderr_measurements = std::nan("");
    double mean_weighted_layer = std::nan("");
    double stderr_weighted_layer = std::nan("");
    double mean_unscaled_reward = std::nan("");
    double stderr_unscaled_reward = std::nan("");

    double success_rate() const {
        return n_episodes ? static_cast<double>(success_count) / static_cast<double>(n_episodes) : 0.0;
    }
};

/// Runs n_episodes; statistics are over successful (terminated) episodes only.
inline EvalStats evaluate_policy(const Actor &actor, const EnvConfig &cfg, size_t n_episodes, uint64_t seed) {
    EnvConfig env_cfg = cfg;
    env_cfg.seed = derive_seed(seed, 1);
    DisentangleEnv env(env_cfg);
    Rng rng(derive_seed(seed, 2));
    MeanAccumulator measurements, layer, reward;
    EvalStats st;
    st.n_episodes = n_episodes;
    for (size_t ep = 0; ep < n_episodes; ++ep) {
        std::vector<double> obs = env.reset();
        StepResult r;
        do {
            const size_t action = actor(obs, rng);
            r = env.step(action);
            obs = r.observation;
        } while (!r.terminated && !r.truncated);
        if (!r.terminated) continue;
        ++st.success_count;
        const MeasurementMatrix &p = env.matrix();
        measurements.add(static_cast<double>(p.popcount()));
        layer.add(weighted_avg_layer(p));
        reward.add(unscaled_reward(p, env_cfg.alpha, env_cfg.orientation));
    }
    if (st.success_count) {
        st.mean_measurements = measurements.mean();
        st.stderr_measurements = measurements.stderr_of_mean();
        st.mean_weighted_layer = layer.mean();
        st.stderr_weighted_layer = layer.stderr_of_mean();
        st.mean_unscaled_reward = reward.mean();
        st.stderr_unscaled_reward = reward.stderr_of_mean();
    }
    return st;
}

inline EvalStats evaluate_policy(const ppo::PolicyModel &model, const EnvConfig &cfg, size_t n_episodes,
                                 uint64_t seed) {
    if (model.input_dim() != cfg.num_actions() || model.num_actions() != cfg.num_actions()) {
        throw std::invalid_argument("evaluate: model dimensions " + std::to_string(model.input_dim()) +
                                    " do not match environment " + std::to_string(cfg.num_actions()));
    }
    return evaluate_policy(policy_actor(model), cfg, n_episodes, seed);
}

// ---------------------------------------------------------------------------
// Training sweeps

struct SweepPoint {
    size_t n = 0;
    size_t d = 0;
    double alpha = 0.0;
};

struct SweepRow {
    size_t n = 0;
    size_t d = 0;
    double alpha = 0.0;
    double mean_measurements = std::nan("");
    double stderr_measurements = std::nan("");
    double mean_weighted_layer = std::nan("");
    double mean_reward = std::nan("");
    double success_rate = 0.0;
    uint64_t seed = 0;
    std::string error;  // non-empty when the point failed; not part of the CSV

    bool operator==(const SweepRow &o) const {
        auto same = [](double a, double b) { return a == b || (std::isnan(a) && std::isnan(b)); };
        return n == o.n && d == o.d && same(alpha, o.alpha) && same(mean_measurements, o.mean_measurements) &&
               same(stderr_measurements, o.stderr_measurements) && same(mean_weighted_layer, o.mean_weighted_layer) &&
               same(mean_reward, o.mean_reward) && same(success_rate, o.success_rate) && seed == o.seed;
    }
};

/// Seed of one grid point; a pure function of the point and the base seed.
inline uint64_t sweep_point_seed(uint64_t base, const SweepPoint &p) {
    return derive_seed(derive_seed(derive_seed(base, p.n), p.d), std::bit_cast<uint64_t>(p.alpha));
}

inline std::vector<SweepPoint> make_grid(const std::vector<size_t> &ns, const std::vector<size_t> &ds,
                                         const std::vector<double> &alphas) {
    std::vector<SweepPoint> grid;
    for (size_t n : ns) {
        for (size_t d : ds) {
            for (double a : alphas) grid.push_back({n, d, a});
        }
    }
    return grid;
}

struct SweepSettings {
    EnvConfig env;          // n, d, alpha overridden per point
    ppo::TrainConfig train; // seed overridden per point
    size_t eval_episodes = 1000;
    uint64_t seed = 0;
    size_t jobs = 1;
};

/// Trains one model at a grid point and evaluates it with the policy.
inline EvalStats train_and_evaluate(const SweepPoint &point, const SweepSettings &s, uint64_t point_seed) {
    EnvConfig env_cfg = s.env;
    env_cfg.n = point.n;
    env_cfg.d = point.d;
    env_cfg.alpha = point.alpha;
    env_cfg.validate();
    ppo::TrainConfig tc = s.train;
    tc.seed = point_seed;
    auto make_env = [&](size_t, uint64_t env_seed) {
        EnvConfig c = env_cfg;
        c.seed = env_seed;
        return DisentangleEnv(c);
    };
    const ppo::TrainResult trained = ppo::train(make_env, tc);
    return evaluate_policy(trained.model, env_cfg, s.eval_episodes, derive_seed(point_seed, 99));
}

/// Trains and evaluates one grid point, recording failures in the row.
inline SweepRow run_sweep_point(const SweepPoint &point, const SweepSettings &s) {
    SweepRow row;
    row.n = point.n;
    row.d = point.d;
    row.alpha = point.alpha;
    row.seed = sweep_point_seed(s.seed, point);
    try {
        const EvalStats st = train_and_evaluate(point, s, row.seed);
        row.mean_measurements = st.mean_measurements;
        row.stderr_measurements = st.stderr_measurements;
        row.mean_weighted_layer = st.mean_weighted_layer;
        row.mean_reward = st.mean_unscaled_reward;
        row.success_rate = st.success_rate();
    } catch (const std::exception &e) {
        row.error = e.what();
    }
    return row;
}

/// One row per grid point, ordered by (n, d, alpha). Failed points keep NaN
/// statistics and a message in `error`; the sweep continues.
inline std::vector<SweepRow> sweep(std::vector<SweepPoint> grid, const SweepSettings &s,
                                   const std::function<void(const SweepRow &)> &on_row = {}) {
    if (grid.empty()) throw std::invalid_argument("sweep: empty grid");
    std::sort(grid.begin(), grid.end(), [](const SweepPoint &a, const SweepPoint &b) {
        return std::tie(a.n, a.d, a.alpha) < std::tie(b.n, b.d, b.alpha);
    });
    std::vector<SweepRow> rows(grid.size());
    std::mutex mu;
    size_t next = 0;
    auto worker = [&] {
        while (true) {
            size_t i;
            {
                std::lock_guard lock(mu);
                if (next == grid.size()) return;
                i = next++;
            }
            SweepRow row = run_sweep_point(grid[i], s);
            std::lock_guard lock(mu);
            rows[i] = std::move(row);
            if (on_row) on_row(rows[i]);
        }
    };
    const size_t jobs = std::max<size_t>(1, std::min(s.jobs, grid.size()));
    if (jobs == 1) {
        worker();
    } else {
        std::vector<std::thread> threads;
        for (size_t k = 0; k < jobs; ++k) threads.emplace_back(worker);
        for (auto &t : threads) t.join();
    }
    return rows;
}

inline constexpr const char *kResultsHeader =
    "n,d,alpha,mean_measurements,stderr_measurements,mean_weighted_layer,mean_reward,success_rate,seed";

inline void emit_results(std::ostream &out, std::vector<SweepRow> rows) {
    std::stable_sort(rows.begin(), rows.end(), [](const SweepRow &a, const SweepRow &b) {
        return std::tie(a.n, a.d, a.alpha) < std::tie(b.n, b.d, b.alpha);
    });
    out << kResultsHeader << "\n";
    for (const SweepRow &r : rows) {
        out << r.n << "," << r.d << "," << format_double(r.alpha) << "," << format_double(r.mean_measurements) << ","
            << format_double(r.stderr_measurements) << "," << format_double(r.mean_weighted_layer) << ","
            << format_double(r.mean_reward) << "," << format_double(r.success_rate) << "," << r.seed << "\n";
    }
}

/// Parses a CSV with a header line into named columns of strings.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    size_t column(std::string_view name) const {
        for (size_t k = 0; k < header.size(); ++k) {
            if (header[k] == name) return k;
        }
        throw std::invalid_argument("csv: no column '" + std::string(name) + "'");
    }
    std::vector<double> numeric(std::string_view name) const {
        const size_t k = column(name);
        std::vector<double> out;
        out.reserve(rows.size());
        for (const auto &r : rows) out.push_back(parse_double(r.at(k)));
        return out;
    }
};

inline CsvTable read_csv(std::istream &in) {
    CsvTable t;
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("csv: empty input");
    t.header = split(line, ',');
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        auto fields = split(line, ',');
        if (fields.size() != t.header.size()) throw std::runtime_error("csv: ragged row '" + line + "'");
        t.rows.push_back(std::move(fields));
    }
    return t;
}

inline std::vector<SweepRow> read_results(std::istream &in) {
    const CsvTable t = read_csv(in);
    if (t.header != split(kResultsHeader, ',')) throw std::runtime_error("results: unexpected header");
    std::vector<SweepRow> rows;
    for (const auto &f : t.rows) {
        SweepRow r;
        r.n = parse_u64(f[0]);
        r.d = parse_u64(f[1]);
        r.alpha = parse_double(f[2]);
        r.mean_measurements = parse_double(f[3]);
        r.stderr_measurements = parse_double(f[4]);
        r.mean_weighted_layer = parse_double(f[5]);
        r.mean_reward = parse_double(f[6]);
        r.success_rate = parse_double(f[7]);
        r.seed = parse_u64(f[8]);
        rows.push_back(r);
    }
    return rows;
}

// ---------------------------------------------------------------------------
// Curve fits

enum class FitKind { Linear, Tanh };

/// Linear: y = c0 x + c1. Tanh: y = c0 tanh(c1 x) + c2.
struct FitResult {
    FitKind kind = FitKind::Linear;
    std::vector<double> coefficients;
    double rss = 0.0;
    bool converged = false;

    double operator()(double x) const {
        if (kind == FitKind::Linear) return coefficients[0] * x + coefficients[1];
        return coefficients[0] * std::tanh(coefficients[1] * x) + coefficients[2];
    }
};

inline double residual_sum(const FitResult &f, std::span<const double> xs, std::span<const double> ys) {
    double rss = 0.0;
    for (size_t i = 0; i < xs.size(); ++i) rss += (f(xs[i]) - ys[i]) * (f(xs[i]) - ys[i]);
    return rss;
}

/// Closed-form least squares line.
inline FitResult linear_fit(std::span<const double> xs, std::span<const double> ys) {
    if (xs.size() != ys.size()) throw std::invalid_argument("linear_fit: length mismatch");
    if (xs.size() < 2) throw std::invalid_argument("linear_fit: need at least two points");
    const double n = static_cast<double>(xs.size());
    const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
    const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / n;
    double sxx = 0.0, sxy = 0.0;
    for (size_t i = 0; i < xs.size(); ++i) {
        sxx += (xs[i] - mx) * (xs[i] - mx);
        sxy += (xs[i] - mx) * (ys[i] - my);
    }
    if (sxx == 0.0) throw std::invalid_argument("linear_fit: all x values are equal");
    FitResult f{FitKind::Linear, {sxy / sxx, my - sxy / sxx * mx}, 0.0, true};
    f.rss = residual_sum(f, xs, ys);
    return f;
}

namespace detail {

/// Levenberg-Marquardt on y = g0 tanh(g1 x) + g2 from one starting point.
inline FitResult tanh_lm(std::span<const double> xs, std::span<const double> ys, std::array<double, 3> g) {
    auto model_rss = [&](const std::array<double, 3> &p) {
        double rss = 0.0;
        for (size_t i = 0; i < xs.size(); ++i) {
            const double r = p[0] * std::tanh(p[1] * xs[i]) + p[2] - ys[i];
            rss += r * r;
        }
        return rss;
    };
    double rss = model_rss(g);
    double mu = 1e-3;
    bool converged = false;
    for (int iter = 0; iter < 2000 && !converged; ++iter) {
        Eigen::Matrix3d jtj = Eigen::Matrix3d::Zero();
        Eigen::Vector3d jtr = Eigen::Vector3d::Zero();
        for (size_t i = 0; i < xs.size(); ++i) {
            const double th = std::tanh(g[1] * xs[i]);
            const Eigen::Vector3d j(th, g[0] * xs[i] * (1.0 - th * th), 1.0);
            const double r = g[0] * th + g[2] - ys[i];
            jtj += j * j.transpose();
            jtr += j * r;
        }
        if (jtr.norm() <= 1e-12 * (1.0 + rss)) {
            converged = true;
            break;
        }
        bool improved = false;
        while (mu < 1e12) {
            Eigen::Matrix3d a = jtj;
            for (int k = 0; k < 3; ++k) a(k, k) += mu * std::max(jtj(k, k), 1e-12);
            const Eigen::Vector3d step = a.ldlt().solve(-jtr);
            const std::array<double, 3> trial{g[0] + step(0), g[1] + step(1), g[2] + step(2)};
            const double trial_rss = model_rss(trial);
            if (std::isfinite(trial_rss) && trial_rss < rss) {
                const double gain = rss - trial_rss;
                g = trial;
                rss = trial_rss;
                mu = std::max(mu / 3.0, 1e-12);
                improved = true;
                if (gain <= 1e-14 * (rss + 1e-300) || step.norm() <= 1e-12 * (1.0 + std::abs(g[1]))) converged = true;
                break;
            }
            mu *= 4.0;
        }
        // No downhill step at any damping: a stationary point up to rounding.
        if (!improved) converged = jtr.norm() <= 1e-6 * (1.0 + std::sqrt(rss));
        if (!improved) break;
    }
    FitResult f{FitKind::Tanh, {g[0], g[1], g[2]}, rss, converged && std::isfinite(rss)};
    return f;
}

}  // namespace detail

/// Multi-start damped Gauss-Newton fit of y = g0 tanh(g1 x) + g2.
inline FitResult tanh_fit(std::span<const double> xs, std::span<const double> ys) {
    if (xs.size() != ys.size()) throw std::invalid_argument("tanh_fit: length mismatch");
    if (xs.size() < 4) throw std::invalid_argument("tanh_fit: need at least four points");
    const auto [ymin, ymax] = std::minmax_element(ys.begin(), ys.end());
    FitResult best;
    best.kind = FitKind::Tanh;
    best.rss = INFINITY;
    for (double g1 : {0.05, 0.1, 0.2, 0.5, 1.0}) {
        const FitResult f = detail::tanh_lm(xs, ys, {*ymax - *ymin, g1, *ymin});
        const bool better = (f.converged && !best.converged) || (f.converged == best.converged && f.rss < best.rss);
        if (better) best = f;
    }
    // The flat solution g0 = 0, g2 = mean(y) is always available.
    const double mean = std::accumulate(ys.begin(), ys.end(), 0.0) / static_cast<double>(ys.size());
    FitResult flat{FitKind::Tanh, {0.0, 0.0, mean}, 0.0, true};
    flat.rss = residual_sum(flat, xs, ys);
    if (flat.rss <= best.rss) best = flat;
    return best;
}

inline void write_fit_report(std::ostream &out, const FitResult &f, std::string_view x_name, std::string_view y_name) {
    out << "kind = " << (f.kind == FitKind::Linear ? "linear" : "tanh") << "\n";
    out << "x = " << x_name << "\n";
    out << "y = " << y_name << "\n";
    out << "model = " << (f.kind == FitKind::Linear ? "y = gamma1 * x + gamma2" : "y = gamma1 * tanh(gamma2 * x) + gamma3")
        << "\n";
    for (size_t k = 0; k < f.coefficients.size(); ++k) {
        out << "gamma" << (k + 1) << " = " << format_double(f.coefficients[k]) << "\n";
    }
    out << "rss = " << format_double(f.rss) << "\n";
    out << "converged = " << (f.converged ? "true" : "false") << "\n";
}

/// Spearman rank correlation (average ranks for ties).
inline double spearman(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size() || a.size() < 2) throw std::invalid_argument("spearman: need two equal-length series");
    auto ranks = [](std::span<const double> v) {
        std::vector<size_t> idx(v.size());
        std::iota(idx.begin(), idx.end(), size_t{0});
        std::sort(idx.begin(), idx.end(), [&](size_t i, size_t j) { return v[i] < v[j]; });
        std::vector<double> r(v.size());
        for (size_t i = 0; i < idx.size();) {
            size_t j = i;
            while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
            for (size_t k = i; k <= j; ++k) r[idx[k]] = 0.5 * static_cast<double>(i + j) + 1.0;
            i = j + 1;
        }
        return r;
    };
    const auto ra = ranks(a), rb = ranks(b);
    const double m = (static_cast<double>(a.size()) + 1.0) / 2.0;
    double num = 0.0, da = 0.0, db = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        num += (ra[i] - m) * (rb[i] - m);
        da += (ra[i] - m) * (ra[i] - m);
        db += (rb[i] - m) * (rb[i] - m);
    }
    return num / std::sqrt(da * db);
}

}  // namespace disentangle
