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
#include <cstddef>
#include <cstdint>
#include <deque>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "disentangle/rng.hpp"
#include "disentangle/textio.hpp"

namespace disentangle::ppo {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct TrainConfig {
    uint64_t total_timesteps = 200000;
    double learning_rate = 1e-3;
    double ent_coef = 1e-2;
    double clip_eps = 0.2;
    double gamma = 0.99;
    double gae_lambda = 0.95;
    size_t n_steps = 2048;
    size_t minibatch_size = 64;
    size_t n_epochs = 10;
    double value_coef = 0.5;
    double max_grad_norm = 0.5;
    size_t n_envs = 1;
    size_t hidden = 64;
    uint64_t seed = 0;

    void validate() const {
        if (n_steps == 0 || n_envs == 0 || minibatch_size == 0 || n_epochs == 0 || hidden == 0) {
            throw std::invalid_argument("train: n_steps, n_envs, minibatch, epochs and hidden must be positive");
        }
        if (total_timesteps < n_steps * n_envs) {
            throw std::invalid_argument("train: total timesteps must cover at least one rollout");
        }
        if (!(clip_eps > 0.0 && clip_eps < 1.0)) throw std::invalid_argument("train: clip epsilon must be in (0, 1)");
        if (!(gamma >= 0.0 && gamma <= 1.0)) throw std::invalid_argument("train: gamma must be in [0, 1]");
        if (!(gae_lambda >= 0.0 && gae_lambda <= 1.0)) throw std::invalid_argument("train: lambda must be in [0, 1]");
        if (!(learning_rate >= 0.0) || !(ent_coef >= 0.0) || !(value_coef >= 0.0) || !(max_grad_norm > 0.0)) {
            throw std::invalid_argument("train: learning rate and coefficients must be non-negative");
        }
    }

    std::vector<std::pair<std::string, std::string>> to_kv() const {
        return {{"total_timesteps", std::to_string(total_timesteps)},
                {"learning_rate", format_double(learning_rate)},
                {"ent_coef", format_double(ent_coef)},
                {"clip_eps", format_double(clip_eps)},
                {"gamma", format_double(gamma)},
                {"gae_lambda", format_double(gae_lambda)},
                {"n_steps", std::to_string(n_steps)},
                {"minibatch_size", std::to_string(minibatch_size)},
                {"n_epochs", std::to_string(n_epochs)},
                {"value_coef", format_double(value_coef)},
                {"max_grad_norm", format_double(max_grad_norm)},
                {"n_envs", std::to_string(n_envs)},
                {"hidden", std::to_string(hidden)},
                {"seed", std::to_string(seed)}};
    }

    /// Sets one field by name; returns false for unknown keys.
    bool set(std::string_view key, std::string_view value) {
        if (key == "total_timesteps") total_timesteps = parse_u64(value);
        else if (key == "learning_rate") learning_rate = parse_double(value);
        else if (key == "ent_coef") ent_coef = parse_double(value);
        else if (key == "clip_eps") clip_eps = parse_double(value);
        else if (key == "gamma") gamma = parse_double(value);
        else if (key == "gae_lambda") gae_lambda = parse_double(value);
        else if (key == "n_steps") n_steps = parse_u64(value);
        else if (key == "minibatch_size") minibatch_size = parse_u64(value);
        else if (key == "n_epochs") n_epochs = parse_u64(value);
        else if (key == "value_coef") value_coef = parse_double(value);
        else if (key == "max_grad_norm") max_grad_norm = parse_double(value);
        else if (key == "n_envs") n_envs = parse_u64(value);
        else if (key == "hidden") hidden = parse_u64(value);
        else if (key == "seed") seed = parse_u64(value);
        else return false;
        return true;
    }
};

struct TensorShape {
    std::string name;
    size_t rows = 0;
    size_t cols = 0;
    size_t offset = 0;
    size_t size() const { return rows * cols; }
};

/// Actor-critic MLP: two tanh layers shared by a categorical policy head and
/// a scalar value head. Parameters live in one flat array; weight tensors are
/// row-major (out x in).
class PolicyModel {
  public:
    struct Output {
        std::vector<double> logits;
        double value = 0.0;
    };

    PolicyModel() = default;

    /// All parameters zero.
    PolicyModel(size_t input_dim, size_t num_actions, size_t hidden = 64)
        : input_dim_(input_dim), num_actions_(num_actions), hidden_(hidden) {
        if (input_dim == 0 || num_actions == 0 || hidden == 0) {
            throw std::invalid_argument("policy: dimensions must be positive");
        }
        size_t offset = 0;
        auto add = [&](std::string name, size_t rows, size_t cols) {
            shapes_.push_back(TensorShape{std::move(name), rows, cols, offset});
            offset += rows * cols;
        };
        add("trunk1.weight", hidden, input_dim);
        add("trunk1.bias", hidden, 1);
        add("trunk2.weight", hidden, hidden);
        add("trunk2.bias", hidden, 1);
        add("policy.weight", num_actions, hidden);
        add("policy.bias", num_actions, 1);
        add("value.weight", 1, hidden);
        add("value.bias", 1, 1);
        params_.assign(offset, 0.0);
    }

    /// Glorot-uniform weights scaled by a per-layer gain; zero biases. The
    /// policy head starts near uniform.
    void init_random(Rng &rng) {
        const double gains[] = {std::sqrt(2.0), std::sqrt(2.0), 0.01, 1.0};
        for (size_t layer = 0; layer < 4; ++layer) {
            const TensorShape &w = shapes_[2 * layer];
            const double bound = gains[layer] * std::sqrt(6.0 / static_cast<double>(w.rows + w.cols));
            for (size_t k = 0; k < w.size(); ++k) params_[w.offset + k] = bound * (2.0 * uniform_real(rng) - 1.0);
            const TensorShape &b = shapes_[2 * layer + 1];
            std::fill_n(params_.begin() + static_cast<std::ptrdiff_t>(b.offset), b.size(), 0.0);
        }
    }

    size_t input_dim() const { return input_dim_; }
    size_t num_actions() const { return num_actions_; }
    size_t hidden() const { return hidden_; }
    size_t num_params() const { return params_.size(); }
    std::vector<double> &params() { return params_; }
    const std::vector<double> &params() const { return params_; }
    const std::vector<TensorShape> &shapes() const { return shapes_; }

    Eigen::Map<const RowMatrix> weight(size_t layer) const {
        const TensorShape &s = shapes_[2 * layer];
        return {params_.data() + s.offset, static_cast<Eigen::Index>(s.rows), static_cast<Eigen::Index>(s.cols)};
    }
    Eigen::Map<const Eigen::VectorXd> bias(size_t layer) const {
        const TensorShape &s = shapes_[2 * layer + 1];
        return {params_.data() + s.offset, static_cast<Eigen::Index>(s.rows)};
    }

    Output forward(std::span<const double> obs) const {
        if (obs.size() != input_dim_) throw std::invalid_argument("policy: observation size mismatch");
        const Eigen::Map<const Eigen::VectorXd> x(obs.data(), static_cast<Eigen::Index>(obs.size()));
        const Eigen::VectorXd h1 = (weight(0) * x + bias(0)).array().tanh().matrix();
        const Eigen::VectorXd h2 = (weight(1) * h1 + bias(1)).array().tanh().matrix();
        const Eigen::VectorXd z = weight(2) * h2 + bias(2);
        Output out;
        out.logits.assign(z.data(), z.data() + z.size());
        out.value = (weight(3) * h2 + bias(3))(0);
        for (double l : out.logits) {
            if (!std::isfinite(l)) throw std::runtime_error("policy: non-finite logits (training diverged?)");
        }
        if (!std::isfinite(out.value)) throw std::runtime_error("policy: non-finite value (training diverged?)");
        return out;
    }

  private:
    size_t input_dim_ = 0;
    size_t num_actions_ = 0;
    size_t hidden_ = 0;
    std::vector<TensorShape> shapes_;
    std::vector<double> params_;
};

/// Numerically stable log-softmax.
inline std::vector<double> log_softmax(std::span<const double> logits) {
    const double m = *std::max_element(logits.begin(), logits.end());
    double s = 0.0;
    for (double l : logits) s += std::exp(l - m);
    const double lse = m + std::log(s);
    std::vector<double> out(logits.size());
    for (size_t k = 0; k < logits.size(); ++k) out[k] = logits[k] - lse;
    return out;
}

inline std::vector<double> softmax(std::span<const double> logits) {
    std::vector<double> p = log_softmax(logits);
    for (double &v : p) v = std::exp(v);
    return p;
}

/// Entropy (nats) of softmax(logits).
inline double categorical_entropy(std::span<const double> logits) {
    const std::vector<double> lp = log_softmax(logits);
    double h = 0.0;
    for (double v : lp) h -= std::exp(v) * v;
    return h;
}

/// Inverse-CDF draw from softmax(logits).
inline size_t sample_categorical(std::span<const double> logits, Rng &rng) {
    const std::vector<double> p = softmax(logits);
    const double u = uniform_real(rng);
    double acc = 0.0;
    for (size_t k = 0; k < p.size(); ++k) {
        acc += p[k];
        if (u < acc) return k;
    }
    return p.size() - 1;
}

/// Generalized advantage estimation. dones[t] marks that the episode ended
/// after step t; bootstrap is V of the observation following the last step.
inline std::pair<std::vector<double>, std::vector<double>> gae(std::span<const double> rewards,
                                                              std::span<const double> values,
                                                              std::span<const uint8_t> dones, double bootstrap,
                                                              double gamma, double lambda) {
    const size_t n = rewards.size();
    if (values.size() != n || dones.size() != n) throw std::invalid_argument("gae: length mismatch");
    std::vector<double> adv(n), ret(n);
    double running = 0.0;
    for (size_t k = n; k-- > 0;) {
        const double next_value = k + 1 == n ? bootstrap : values[k + 1];
        const double live = dones[k] ? 0.0 : 1.0;
        const double delta = rewards[k] + gamma * next_value * live - values[k];
        running = delta + gamma * lambda * live * running;
        adv[k] = running;
        ret[k] = running + values[k];
    }
    return {std::move(adv), std::move(ret)};
}

inline void normalize_advantages(std::vector<double> &adv) {
    if (adv.empty()) return;
    const double mean = std::accumulate(adv.begin(), adv.end(), 0.0) / static_cast<double>(adv.size());
    double var = 0.0;
    for (double a : adv) var += (a - mean) * (a - mean);
    var /= static_cast<double>(adv.size());
    const double scale = 1.0 / (std::sqrt(var) + 1e-8);
    for (double &a : adv) a = (a - mean) * scale;
}

struct RolloutBuffer {
    size_t obs_dim = 0;
    std::vector<double> observations;  // size() x obs_dim, row-major
    std::vector<size_t> actions;
    std::vector<double> log_probs;
    std::vector<double> rewards;
    std::vector<uint8_t> dones;
    std::vector<double> values;
    std::vector<double> advantages;
    std::vector<double> returns;

    size_t size() const { return actions.size(); }

    void append(const RolloutBuffer &other) {
        observations.insert(observations.end(), other.observations.begin(), other.observations.end());
        actions.insert(actions.end(), other.actions.begin(), other.actions.end());
        log_probs.insert(log_probs.end(), other.log_probs.begin(), other.log_probs.end());
        rewards.insert(rewards.end(), other.rewards.begin(), other.rewards.end());
        dones.insert(dones.end(), other.dones.begin(), other.dones.end());
        values.insert(values.end(), other.values.begin(), other.values.end());
        advantages.insert(advantages.end(), other.advantages.begin(), other.advantages.end());
        returns.insert(returns.end(), other.returns.begin(), other.returns.end());
    }
};

struct Minibatch {
    RowMatrix obs;  // batch x input_dim
    std::vector<size_t> actions;
    Eigen::VectorXd old_log_prob;
    Eigen::VectorXd advantages;
    Eigen::VectorXd returns;

    size_t size() const { return actions.size(); }

    static Minibatch gather(const RolloutBuffer &buf, std::span<const size_t> idx) {
        Minibatch mb;
        const auto b = static_cast<Eigen::Index>(idx.size());
        mb.obs.resize(b, static_cast<Eigen::Index>(buf.obs_dim));
        mb.old_log_prob.resize(b);
        mb.advantages.resize(b);
        mb.returns.resize(b);
        for (Eigen::Index r = 0; r < b; ++r) {
            const size_t i = idx[static_cast<size_t>(r)];
            for (size_t c = 0; c < buf.obs_dim; ++c) mb.obs(r, static_cast<Eigen::Index>(c)) = buf.observations[i * buf.obs_dim + c];
            mb.actions.push_back(buf.actions[i]);
            mb.old_log_prob(r) = buf.log_probs[i];
            mb.advantages(r) = buf.advantages[i];
            mb.returns(r) = buf.returns[i];
        }
        return mb;
    }
};

struct LossCoefficients {
    double clip_eps = 0.2;
    double ent_coef = 0.0;
    double value_coef = 0.5;
};

struct LossStats {
    double total = 0.0;
    double policy = 0.0;   // -mean(min(r A, clip(r) A))
    double value = 0.0;    // mean((V - R)^2), before value_coef
    double entropy = 0.0;  // mean policy entropy (nats)
    double clip_fraction = 0.0;
    /// min(r A, clip(r) A) never exceeded r A on any sample.
    bool clipped_below_unclipped = true;
};

/// Combined PPO loss policy + value_coef * value - ent_coef * entropy on a
/// minibatch; writes the analytic gradient w.r.t. all parameters when grad is
/// non-null.
inline LossStats ppo_loss(const PolicyModel &m, const Minibatch &mb, const LossCoefficients &coef,
                          std::vector<double> *grad = nullptr) {
    const auto b = static_cast<Eigen::Index>(mb.size());
    if (b == 0) throw std::invalid_argument("ppo: empty minibatch");
    if (static_cast<size_t>(mb.obs.cols()) != m.input_dim()) throw std::invalid_argument("ppo: observation width mismatch");
    const double inv_b = 1.0 / static_cast<double>(b);

    const RowMatrix a1 = (mb.obs * m.weight(0).transpose()).rowwise() + m.bias(0).transpose();
    const RowMatrix h1 = a1.array().tanh().matrix();
    const RowMatrix a2 = (h1 * m.weight(1).transpose()).rowwise() + m.bias(1).transpose();
    const RowMatrix h2 = a2.array().tanh().matrix();
    const RowMatrix z = (h2 * m.weight(2).transpose()).rowwise() + m.bias(2).transpose();
    const Eigen::VectorXd v = (h2 * m.weight(3).transpose()).col(0).array() + m.bias(3)(0);

    const Eigen::Index na = z.cols();
    RowMatrix dz(b, na);
    Eigen::VectorXd dv(b);
    LossStats st;
    for (Eigen::Index r = 0; r < b; ++r) {
        const double mx = z.row(r).maxCoeff();
        const double lse = mx + std::log((z.row(r).array() - mx).exp().sum());
        const Eigen::ArrayXd logp = (z.row(r).array() - lse).transpose();
        const Eigen::ArrayXd p = logp.exp();
        const double h = -(p * logp).sum();
        const size_t a = mb.actions[static_cast<size_t>(r)];
        const double ratio = std::exp(logp(static_cast<Eigen::Index>(a)) - mb.old_log_prob(r));
        const double adv = mb.advantages(r);
        const double clipped = std::clamp(ratio, 1.0 - coef.clip_eps, 1.0 + coef.clip_eps);
        const double surr1 = ratio * adv, surr2 = clipped * adv;
        const double surr = std::min(surr1, surr2);
        if (surr > surr1) st.clipped_below_unclipped = false;
        if (std::abs(ratio - 1.0) > coef.clip_eps) st.clip_fraction += inv_b;
        st.policy -= surr * inv_b;
        st.entropy += h * inv_b;
        const double verr = v(r) - mb.returns(r);
        st.value += verr * verr * inv_b;

        // d(policy)/d(log pi_a): only the unclipped branch carries gradient.
        const double g_logp = surr1 <= surr2 ? -ratio * adv * inv_b : 0.0;
        for (Eigen::Index k = 0; k < na; ++k) {
            const double onehot = k == static_cast<Eigen::Index>(a) ? 1.0 : 0.0;
            // d(-ent_coef * H)/dz_k = ent_coef * p_k (log p_k + H)
            dz(r, k) = g_logp * (onehot - p(k)) + coef.ent_coef * inv_b * p(k) * (logp(k) + h);
        }
        dv(r) = 2.0 * coef.value_coef * verr * inv_b;
    }
    st.total = st.policy + coef.value_coef * st.value - coef.ent_coef * st.entropy;
    if (!std::isfinite(st.total)) {
        throw std::runtime_error("ppo: non-finite loss (policy " + format_double(st.policy) + ", value " +
                                 format_double(st.value) + ", entropy " + format_double(st.entropy) + ")");
    }
    if (!grad) return st;

    grad->assign(m.num_params(), 0.0);
    auto out = [&](size_t tensor) {
        const TensorShape &s = m.shapes()[tensor];
        return Eigen::Map<RowMatrix>(grad->data() + s.offset, static_cast<Eigen::Index>(s.rows),
                                     static_cast<Eigen::Index>(s.cols));
    };
    out(4) = dz.transpose() * h2;
    out(5) = dz.colwise().sum().transpose();
    out(6) = dv.transpose() * h2;
    out(7)(0, 0) = dv.sum();
    const RowMatrix dh2 = dz * m.weight(2) + dv * m.weight(3);
    const RowMatrix da2 = dh2.array() * (1.0 - h2.array().square());
    out(2) = da2.transpose() * h1;
    out(3) = da2.colwise().sum().transpose();
    const RowMatrix dh1 = da2 * m.weight(1);
    const RowMatrix da1 = dh1.array() * (1.0 - h1.array().square());
    out(0) = da1.transpose() * mb.obs;
    out(1) = da1.colwise().sum().transpose();
    return st;
}

/// Adaptive-moment optimizer (beta1 0.9, beta2 0.999, eps 1e-8).
class Adam {
  public:
    explicit Adam(size_t num_params = 0) : m_(num_params, 0.0), v_(num_params, 0.0) {}

    void step(std::vector<double> &params, const std::vector<double> &grad, double lr) {
        if (m_.size() != params.size()) {
            m_.assign(params.size(), 0.0);
            v_.assign(params.size(), 0.0);
            t_ = 0;
        }
        ++t_;
        const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(t_));
        const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(t_));
        for (size_t k = 0; k < params.size(); ++k) {
            m_[k] = kBeta1 * m_[k] + (1.0 - kBeta1) * grad[k];
            v_[k] = kBeta2 * v_[k] + (1.0 - kBeta2) * grad[k] * grad[k];
            params[k] -= lr * (m_[k] / c1) / (std::sqrt(v_[k] / c2) + kEps);
        }
    }

  private:
    static constexpr double kBeta1 = 0.9;
    static constexpr double kBeta2 = 0.999;
    static constexpr double kEps = 1e-8;
    std::vector<double> m_;
    std::vector<double> v_;
    uint64_t t_ = 0;
};

/// Rescales grad in place so its L2 norm is at most max_norm; returns the original norm.
inline double clip_grad_norm(std::vector<double> &grad, double max_norm) {
    double sq = 0.0;
    for (double g : grad) sq += g * g;
    const double norm = std::sqrt(sq);
    if (norm > max_norm) {
        const double scale = max_norm / (norm + 1e-6);
        for (double &g : grad) g *= scale;
    }
    return norm;
}

struct UpdateStats {
    double policy_loss = 0.0;
    double value_loss = 0.0;
    double entropy = 0.0;
    double clip_fraction = 0.0;
    bool clipped_below_unclipped = true;
};

/// n_epochs passes of shuffled minibatches over a buffer whose advantages and
/// returns are already computed. Advantages are normalized here.
inline UpdateStats ppo_update(PolicyModel &model, Adam &opt, RolloutBuffer buffer, const TrainConfig &cfg, Rng &rng) {
    const size_t n = buffer.size();
    if (n == 0 || buffer.advantages.size() != n || buffer.returns.size() != n) {
        throw std::invalid_argument("ppo: buffer is empty or advantages missing");
    }
    normalize_advantages(buffer.advantages);
    const LossCoefficients coef{cfg.clip_eps, cfg.ent_coef, cfg.value_coef};
    std::vector<size_t> order(n);
    std::vector<double> grad;
    UpdateStats stats;
    size_t batches = 0;
    for (size_t epoch = 0; epoch < cfg.n_epochs; ++epoch) {
        std::iota(order.begin(), order.end(), size_t{0});
        for (size_t k = n; k > 1; --k) std::swap(order[k - 1], order[uniform_index(rng, k)]);
        for (size_t start = 0; start < n; start += cfg.minibatch_size) {
            const size_t len = std::min(cfg.minibatch_size, n - start);
            const Minibatch mb = Minibatch::gather(buffer, std::span<const size_t>(order).subspan(start, len));
            const LossStats ls = ppo_loss(model, mb, coef, &grad);
            clip_grad_norm(grad, cfg.max_grad_norm);
            opt.step(model.params(), grad, cfg.learning_rate);
            stats.policy_loss += ls.policy;
            stats.value_loss += ls.value;
            stats.entropy += ls.entropy;
            stats.clip_fraction += ls.clip_fraction;
            stats.clipped_below_unclipped &= ls.clipped_below_unclipped;
            ++batches;
        }
    }
    const double inv = 1.0 / static_cast<double>(batches);
    stats.policy_loss *= inv;
    stats.value_loss *= inv;
    stats.entropy *= inv;
    stats.clip_fraction *= inv;
    return stats;
}

struct MetricsRow {
    uint64_t timestep = 0;
    double ep_len_mean = std::nan("");
    double ep_rew_mean = std::nan("");
    double policy_loss = 0.0;
    double value_loss = 0.0;
    double entropy = 0.0;
};

inline constexpr const char *kMetricsHeader = "timestep,ep_len_mean,ep_rew_mean,policy_loss,value_loss,entropy";

inline void write_metrics_csv(std::ostream &out, const std::vector<MetricsRow> &rows) {
    out << kMetricsHeader << "\n";
    for (const MetricsRow &r : rows) {
        out << r.timestep << "," << format_double(r.ep_len_mean) << "," << format_double(r.ep_rew_mean) << ","
            << format_double(r.policy_loss) << "," << format_double(r.value_loss) << "," << format_double(r.entropy)
            << "\n";
    }
}

struct TrainResult {
    PolicyModel model;
    std::vector<MetricsRow> metrics;
};

namespace detail {

struct EpisodeRecord {
    double length = 0.0;
    double reward = 0.0;
};

template <class Env>
struct EnvSlot {
    Env env;
    Rng rng;
    std::vector<double> obs;
    double ep_reward = 0.0;
    size_t ep_len = 0;
    RolloutBuffer buffer;
    std::vector<EpisodeRecord> finished;
};

template <class Env>
void collect(EnvSlot<Env> &slot, const PolicyModel &model, const TrainConfig &cfg) {
    RolloutBuffer &buf = slot.buffer;
    buf = RolloutBuffer{};
    buf.obs_dim = model.input_dim();
    slot.finished.clear();
    for (size_t t = 0; t < cfg.n_steps; ++t) {
        const PolicyModel::Output out = model.forward(slot.obs);
        const size_t action = sample_categorical(out.logits, slot.rng);
        const double logp = log_softmax(out.logits)[action];
        auto result = slot.env.step(action);
        double reward = result.reward;
        slot.ep_reward += result.reward;
        ++slot.ep_len;
        // Truncation is not a true terminal state: bootstrap from its value.
        if (result.truncated && !result.terminated) reward += cfg.gamma * model.forward(result.observation).value;
        const bool done = result.terminated || result.truncated;
        buf.observations.insert(buf.observations.end(), slot.obs.begin(), slot.obs.end());
        buf.actions.push_back(action);
        buf.log_probs.push_back(logp);
        buf.rewards.push_back(reward);
        buf.dones.push_back(done ? 1 : 0);
        buf.values.push_back(out.value);
        if (done) {
            slot.finished.push_back({static_cast<double>(slot.ep_len), slot.ep_reward});
            slot.ep_reward = 0.0;
            slot.ep_len = 0;
            slot.obs = slot.env.reset();
        } else {
            slot.obs = std::move(result.observation);
        }
    }
    const double bootstrap = model.forward(slot.obs).value;
    auto [adv, ret] = gae(buf.rewards, buf.values, buf.dones, bootstrap, cfg.gamma, cfg.gae_lambda);
    buf.advantages = std::move(adv);
    buf.returns = std::move(ret);
}

}  // namespace detail

/// Trains a policy with PPO. make_env(index, seed) builds environment `index`
/// of n_envs; an Env offers reset() -> observation, step(action) -> result with
/// {observation, reward, terminated, truncated}, observation_size() and
/// num_actions(). Up to `jobs` threads collect rollouts; results do not depend
/// on `jobs`.
template <class MakeEnv>
TrainResult train(MakeEnv make_env, const TrainConfig &cfg, size_t jobs = 1,
                  const std::function<void(const MetricsRow &)> &on_update = {}) {
    cfg.validate();
    using Env = decltype(make_env(size_t{0}, uint64_t{0}));
    std::vector<detail::EnvSlot<Env>> slots;
    slots.reserve(cfg.n_envs);
    for (size_t e = 0; e < cfg.n_envs; ++e) {
        slots.push_back(detail::EnvSlot<Env>{make_env(e, derive_seed(cfg.seed, 1000 + e)),
                                              Rng(derive_seed(cfg.seed, 2000 + e)), {}, 0.0, 0, {}, {}});
    }
    const size_t obs_dim = slots.front().env.observation_size();
    const size_t num_actions = slots.front().env.num_actions();
    for (auto &slot : slots) {
        if (slot.env.observation_size() != obs_dim || slot.env.num_actions() != num_actions) {
            throw std::invalid_argument("train: environments disagree on dimensions");
        }
        slot.obs = slot.env.reset();
    }

    Rng master(derive_seed(cfg.seed, 0));
    TrainResult result{PolicyModel(obs_dim, num_actions, cfg.hidden), {}};
    result.model.init_random(master);
    Adam opt(result.model.num_params());
    std::deque<detail::EpisodeRecord> window;

    const size_t per_update = cfg.n_steps * cfg.n_envs;
    const uint64_t updates = cfg.total_timesteps / per_update;
    jobs = std::max<size_t>(1, std::min(jobs, cfg.n_envs));
    for (uint64_t u = 0; u < updates; ++u) {
        if (jobs == 1) {
            for (auto &slot : slots) detail::collect(slot, result.model, cfg);
        } else {
            std::vector<std::thread> workers;
            std::vector<std::exception_ptr> errors(jobs);
            for (size_t w = 0; w < jobs; ++w) {
                workers.emplace_back([&, w] {
                    try {
                        for (size_t e = w; e < slots.size(); e += jobs) detail::collect(slots[e], result.model, cfg);
                    } catch (...) {
                        errors[w] = std::current_exception();
                    }
                });
            }
            for (auto &t : workers) t.join();
            for (auto &e : errors) {
                if (e) std::rethrow_exception(e);
            }
        }
        RolloutBuffer buffer;
        buffer.obs_dim = obs_dim;
        for (auto &slot : slots) {
            buffer.append(slot.buffer);
            for (const auto &ep : slot.finished) {
                window.push_back(ep);
                if (window.size() > 100) window.pop_front();
            }
        }
        const UpdateStats us = ppo_update(result.model, opt, std::move(buffer), cfg, master);
        MetricsRow row;
        row.timestep = (u + 1) * per_update;
        if (!window.empty()) {
            row.ep_len_mean = row.ep_rew_mean = 0.0;
            for (const auto &ep : window) {
                row.ep_len_mean += ep.length;
                row.ep_rew_mean += ep.reward;
            }
            row.ep_len_mean /= static_cast<double>(window.size());
            row.ep_rew_mean /= static_cast<double>(window.size());
        }
        row.policy_loss = us.policy_loss;
        row.value_loss = us.value_loss;
        row.entropy = us.entropy;
        result.metrics.push_back(row);
        if (on_update) on_update(row);
    }
    return result;
}

inline constexpr const char *kModelFormat = "disentangle-policy v1";

struct SavedModel {
    PolicyModel model;
    TrainConfig config;
    /// Free-form metadata (e.g. the environment the model was trained on).
    std::vector<std::pair<std::string, std::string>> meta;

    std::string meta_value(std::string_view key) const {
        for (const auto &[k, v] : meta) {
            if (k == key) return v;
        }
        throw std::runtime_error("model: missing metadata '" + std::string(key) + "'");
    }
};

inline void write_model(std::ostream &out, const SavedModel &saved) {
    const PolicyModel &m = saved.model;
    out << kModelFormat << "\n";
    out << "dims " << m.input_dim() << " " << m.hidden() << " " << m.num_actions() << "\n";
    for (const auto &[k, v] : saved.config.to_kv()) out << "config " << k << " " << v << "\n";
    for (const auto &[k, v] : saved.meta) out << "meta " << k << " " << v << "\n";
    for (const TensorShape &s : m.shapes()) {
        out << "tensor " << s.name << " " << s.rows << " " << s.cols << "\n";
        for (size_t r = 0; r < s.rows; ++r) {
            for (size_t c = 0; c < s.cols; ++c) {
                if (c) out << ' ';
                out << format_double(m.params()[s.offset + r * s.cols + c]);
            }
            out << "\n";
        }
    }
    out << "end\n";
}

inline SavedModel read_model(std::istream &in) {
    std::string line;
    if (!std::getline(in, line) || trim(line) != kModelFormat) {
        throw std::runtime_error("model: unsupported format or version (expected '" + std::string(kModelFormat) + "')");
    }
    SavedModel saved;
    bool have_dims = false;
    std::map<std::string, bool> seen;
    while (std::getline(in, line)) {
        std::istringstream ls(line);
        std::string tag;
        ls >> tag;
        if (tag.empty()) continue;
        if (tag == "end") {
            if (!have_dims) throw std::runtime_error("model: missing dims");
            for (const TensorShape &s : saved.model.shapes()) {
                if (!seen[s.name]) throw std::runtime_error("model: missing tensor " + s.name);
            }
            return saved;
        }
        if (tag == "dims") {
            size_t input = 0, hidden = 0, actions = 0;
            if (!(ls >> input >> hidden >> actions)) throw std::runtime_error("model: malformed dims line");
            saved.model = PolicyModel(input, actions, hidden);
            have_dims = true;
        } else if (tag == "config") {
            std::string key, value;
            ls >> key >> value;
            try {
                if (!saved.config.set(key, value)) throw std::runtime_error("model: unknown config key '" + key + "'");
            } catch (const std::invalid_argument &e) {
                throw std::runtime_error("model: bad value for config " + key + ": " + e.what());
            }
        } else if (tag == "meta") {
            std::string key, value;
            ls >> key;
            std::getline(ls, value);
            saved.meta.emplace_back(key, std::string(trim(value)));
        } else if (tag == "tensor") {
            if (!have_dims) throw std::runtime_error("model: tensor before dims");
            std::string name;
            size_t rows = 0, cols = 0;
            ls >> name >> rows >> cols;
            const TensorShape *shape = nullptr;
            for (const TensorShape &s : saved.model.shapes()) {
                if (s.name == name) shape = &s;
            }
            if (!shape) throw std::runtime_error("model: unknown tensor '" + name + "'");
            if (shape->rows != rows || shape->cols != cols) {
                throw std::runtime_error("model: tensor " + name + " has shape " + std::to_string(rows) + "x" +
                                         std::to_string(cols) + ", dims imply " + std::to_string(shape->rows) + "x" +
                                         std::to_string(shape->cols));
            }
            for (size_t r = 0; r < rows; ++r) {
                if (!std::getline(in, line)) throw std::runtime_error("model: truncated tensor " + name);
                const auto values = split(trim(line), ' ');
                if (values.size() != cols) throw std::runtime_error("model: wrong row width in tensor " + name);
                for (size_t c = 0; c < cols; ++c) {
                    try {
                        saved.model.params()[shape->offset + r * cols + c] = parse_double(values[c]);
                    } catch (const std::invalid_argument &e) {
                        throw std::runtime_error("model: malformed value in tensor " + name + ": " + e.what());
                    }
                }
            }
            seen[name] = true;
        } else {
            throw std::runtime_error("model: unexpected line '" + line + "'");
        }
    }
    throw std::runtime_error("model: missing end marker");
}

inline void save_model(const SavedModel &saved, const std::string &path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    write_model(out, saved);
    if (!out) throw std::runtime_error("write failed: " + path);
}

inline SavedModel load_model(const std::string &path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read " + path);
    return read_model(in);
}

}  // namespace disentangle::ppo
