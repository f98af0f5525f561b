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

#include "disentangle/ppo.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "disentangle/env.hpp"
#include "test_support.hpp"

using namespace disentangle;
using namespace disentangle::ppo;
using namespace disentangle::test_support;

namespace {

/// One-step bandit: action `good` pays 1, everything else 0.
struct BanditEnv {
    size_t good = 2;
    struct Step {
        std::vector<double> observation;
        double reward = 0.0;
        bool terminated = false;
        bool truncated = false;
    };
    std::vector<double> reset() { return {1.0, 0.0, 1.0}; }
    Step step(size_t a) { return Step{{1.0, 0.0, 1.0}, a == good ? 1.0 : 0.0, true, false}; }
    size_t observation_size() const { return 3; }
    size_t num_actions() const { return 4; }
};

}  // namespace

TEST(Policy, ZeroParametersGiveUniformPolicy) {
    const PolicyModel m(12, 12, 64);
    const auto out = m.forward(std::vector<double>(12, 1.0));
    ASSERT_EQ(out.logits.size(), 12u);
    for (double p : softmax(out.logits)) EXPECT_DOUBLE_EQ(p, 1.0 / 12);
    EXPECT_EQ(out.value, 0.0);
}

TEST(Policy, ActionCountMatchesEnvironment) {
    EnvConfig cfg;
    cfg.n = 4;
    cfg.d = 6;
    PolicyModel m(cfg.num_actions(), cfg.num_actions());
    EXPECT_EQ(m.forward(std::vector<double>(12, 0.0)).logits.size(), 12u);
    EXPECT_THROW(m.forward(std::vector<double>(11, 0.0)), std::invalid_argument);
}

TEST(Policy, RandomParametersGiveFiniteOutputs) {
    Rng rng(1);
    PolicyModel m(20, 20);
    m.init_random(rng);
    for (int k = 0; k < 100; ++k) {
        std::vector<double> obs(20);
        for (double &o : obs) o = coin_flip(rng);
        const auto out = m.forward(obs);
        for (double l : out.logits) EXPECT_TRUE(std::isfinite(l));
        EXPECT_TRUE(std::isfinite(out.value));
    }
}

TEST(Policy, SoftmaxAndEntropyBounds) {
    Rng rng(2);
    for (int k = 0; k < 500; ++k) {
        const size_t a = 1 + uniform_index(rng, 40);
        std::vector<double> logits(a);
        for (double &l : logits) l = 40.0 * (uniform_real(rng) - 0.5);
        const auto p = softmax(logits);
        double s = 0.0;
        for (double v : p) s += v;
        EXPECT_NEAR(s, 1.0, 1e-9);
        const double h = categorical_entropy(logits);
        EXPECT_GE(h, -1e-12);
        EXPECT_LE(h, std::log(static_cast<double>(a)) + 1e-12);
    }
}

TEST(Gae, SingleTerminalStep) {
    const std::vector<double> r{2.5}, v{0.75};
    const std::vector<uint8_t> d{1};
    auto [adv, ret] = gae(r, v, d, 99.0, 0.99, 0.95);
    EXPECT_DOUBLE_EQ(adv[0], 2.5 - 0.75);
    EXPECT_DOUBLE_EQ(ret[0], 2.5);
}

TEST(Gae, LambdaZeroIsOneStepTd) {
    const std::vector<double> r{1, 0, 2, 0}, v{0.5, 0.25, -1, 3};
    const std::vector<uint8_t> d{0, 1, 0, 0};
    const double gamma = 0.9, boot = 0.7;
    auto [adv, ret] = gae(r, v, d, boot, gamma, 0.0);
    EXPECT_DOUBLE_EQ(adv[0], 1 + gamma * 0.25 - 0.5);
    EXPECT_DOUBLE_EQ(adv[1], 0 - 0.25);
    EXPECT_DOUBLE_EQ(adv[2], 2 + gamma * 3 - (-1));
    EXPECT_DOUBLE_EQ(adv[3], 0 + gamma * boot - 3);
}

TEST(Gae, MonteCarloLimit) {
    const std::vector<double> r{1, 2, 3, 4}, v{0.1, 0.2, 0.3, 0.4};
    const std::vector<uint8_t> d{0, 0, 0, 1};
    auto [adv, ret] = gae(r, v, d, 123.0, 1.0, 1.0);
    EXPECT_DOUBLE_EQ(adv[0], 10 - 0.1);
    EXPECT_DOUBLE_EQ(adv[1], 9 - 0.2);
    EXPECT_DOUBLE_EQ(adv[2], 7 - 0.3);
    EXPECT_DOUBLE_EQ(adv[3], 4 - 0.4);
    for (size_t k = 0; k < 4; ++k) EXPECT_DOUBLE_EQ(ret[k], adv[k] + v[k]);
}

// Oracle: explicit sum over (gamma lambda)^l TD residuals inside each episode.
TEST(Gae, MatchesExplicitResidualSum) {
    Rng rng(3);
    for (int trial = 0; trial < 50; ++trial) {
        const size_t n = 1 + uniform_index(rng, 30);
        std::vector<double> r(n), v(n);
        std::vector<uint8_t> d(n);
        for (size_t k = 0; k < n; ++k) {
            r[k] = uniform_real(rng);
            v[k] = uniform_real(rng);
            d[k] = uniform_real(rng) < 0.2;
        }
        const double boot = uniform_real(rng), gamma = uniform_real(rng), lambda = uniform_real(rng);
        auto [adv, ret] = gae(r, v, d, boot, gamma, lambda);
        for (size_t t = 0; t < n; ++t) {
            double expected = 0.0, weight = 1.0;
            for (size_t k = t; k < n; ++k) {
                const double next = d[k] ? 0.0 : (k + 1 == n ? boot : v[k + 1]);
                expected += weight * (r[k] + gamma * next - v[k]);
                if (d[k]) break;
                weight *= gamma * lambda;
            }
            ASSERT_NEAR(adv[t], expected, 1e-12);
        }
    }
}

TEST(Advantages, NormalizationAndZeroVarianceGuard) {
    std::vector<double> a{1, 2, 3, 4};
    normalize_advantages(a);
    double mean = 0, sq = 0;
    for (double x : a) mean += x / 4;
    for (double x : a) sq += (x - mean) * (x - mean) / 4;
    EXPECT_NEAR(mean, 0.0, 1e-12);
    EXPECT_NEAR(sq, 1.0, 1e-6);
    std::vector<double> flat(5, 2.0);
    normalize_advantages(flat);
    for (double x : flat) EXPECT_EQ(x, 0.0);
}

TEST(Loss, UnitRatioGivesMeanAdvantage) {
    Rng rng(4);
    PolicyModel m(5, 4, 8);
    m.init_random(rng);
    Minibatch mb = random_minibatch(m, 16, 0.2, rng);
    for (Eigen::Index r = 0; r < mb.old_log_prob.size(); ++r) {
        std::vector<double> obs(mb.obs.row(r).data(), mb.obs.row(r).data() + 5);
        mb.old_log_prob(r) = log_softmax(m.forward(obs).logits)[mb.actions[static_cast<size_t>(r)]];
    }
    const LossStats st = ppo_loss(m, mb, {0.2, 0.0, 0.5});
    EXPECT_NEAR(-st.policy, mb.advantages.mean(), 1e-12);
    EXPECT_EQ(st.clip_fraction, 0.0);
}

TEST(Loss, ClippedSurrogateNeverAboveUnclipped) {
    Rng rng(5);
    PolicyModel m(6, 5, 8);
    m.init_random(rng);
    for (int k = 0; k < 20; ++k) {
        const Minibatch mb = random_minibatch(m, 32, 0.2, rng);
        EXPECT_TRUE(ppo_loss(m, mb, {0.2, 0.01, 0.5}).clipped_below_unclipped);
    }
}

TEST(Loss, GradientMatchesFiniteDifferencesPerComponent) {
    Rng rng(6);
    for (int trial = 0; trial < 10; ++trial) {
        PolicyModel m(3, 3, 4);
        m.init_random(rng);
        for (double &p : m.params()) p += 0.3 * (uniform_real(rng) - 0.5);
        const Minibatch mb = random_minibatch(m, 12, 0.2, rng);
        // policy only, value only, entropy only, combined
        const LossCoefficients cases[] = {{0.2, 0.0, 0.0}, {0.2, 0.0, 0.5}, {0.2, 0.3, 0.0}, {0.2, 0.01, 0.5}};
        for (const auto &coef : cases) {
            std::vector<double> grad;
            ppo_loss(m, mb, coef, &grad);
            if (coef.ent_coef > 0 && coef.value_coef == 0) {
                // isolate the entropy term
                std::vector<double> g_policy;
                ppo_loss(m, mb, {0.2, 0.0, 0.0}, &g_policy);
                for (size_t k = 0; k < grad.size(); ++k) grad[k] -= g_policy[k];
                std::vector<double> fd = finite_difference(m, mb, coef), fd_policy = finite_difference(m, mb, {0.2, 0.0, 0.0});
                for (size_t k = 0; k < fd.size(); ++k) fd[k] -= fd_policy[k];
                EXPECT_LT(relative_error(grad, fd), 1e-4);
                continue;
            }
            EXPECT_LT(relative_error(grad, finite_difference(m, mb, coef)), 1e-4);
        }
    }
}

TEST(Update, NullUpdateLeavesParametersUnchanged) {
    Rng rng(7);
    PolicyModel m(4, 4, 8);
    m.init_random(rng);
    const auto before = m.params();
    RolloutBuffer buf;
    buf.obs_dim = 4;
    for (int k = 0; k < 40; ++k) {
        for (int c = 0; c < 4; ++c) buf.observations.push_back(coin_flip(rng));
        buf.actions.push_back(uniform_index(rng, 4));
        buf.log_probs.push_back(-std::log(4.0));
        buf.rewards.push_back(0.0);
        buf.dones.push_back(0);
        buf.values.push_back(0.0);
        buf.advantages.push_back(uniform_real(rng));
        buf.returns.push_back(uniform_real(rng));
    }
    TrainConfig cfg;
    cfg.learning_rate = 0.0;
    cfg.ent_coef = 0.0;
    cfg.minibatch_size = 16;
    Adam opt(m.num_params());
    ppo_update(m, opt, buf, cfg, rng);
    EXPECT_EQ(m.params(), before);
}

TEST(Update, RejectsMissingAdvantages) {
    PolicyModel m(2, 2, 2);
    Adam opt;
    Rng rng(0);
    RolloutBuffer buf;
    EXPECT_THROW(ppo_update(m, opt, buf, TrainConfig{}, rng), std::invalid_argument);
}

TEST(Train, MetricRowCountAndDeterminism) {
    TrainConfig cfg;
    cfg.total_timesteps = 1000;
    cfg.n_steps = 128;
    cfg.n_envs = 2;
    cfg.minibatch_size = 32;
    cfg.n_epochs = 2;
    cfg.hidden = 16;
    cfg.seed = 9;
    auto make = [](size_t, uint64_t) { return BanditEnv{}; };
    const TrainResult a = train(make, cfg);
    EXPECT_EQ(a.metrics.size(), 1000u / 256u);
    for (size_t k = 1; k < a.metrics.size(); ++k) EXPECT_GT(a.metrics[k].timestep, a.metrics[k - 1].timestep);
    const TrainResult b = train(make, cfg);
    EXPECT_EQ(a.model.params(), b.model.params());
    // Parallel collection gives the serial result.
    const TrainResult c = train(make, cfg, 2);
    EXPECT_EQ(a.model.params(), c.model.params());
}

TEST(Train, LearnsBandit) {
    TrainConfig cfg;
    cfg.total_timesteps = 8192;
    cfg.n_steps = 256;
    cfg.minibatch_size = 64;
    cfg.n_epochs = 4;
    cfg.hidden = 16;
    cfg.learning_rate = 3e-3;
    cfg.seed = 1;
    const TrainResult r = train([](size_t, uint64_t) { return BanditEnv{}; }, cfg);
    EXPECT_LT(r.metrics.front().ep_rew_mean, 0.6);
    EXPECT_GT(r.metrics.back().ep_rew_mean, 0.9);
}

TEST(Train, ConfigValidation) {
    TrainConfig cfg;
    cfg.total_timesteps = 100;
    EXPECT_THROW(cfg.validate(), std::invalid_argument);
    cfg = TrainConfig{};
    cfg.clip_eps = 1.0;
    EXPECT_THROW(cfg.validate(), std::invalid_argument);
    cfg = TrainConfig{};
    cfg.gamma = 1.5;
    EXPECT_THROW(cfg.validate(), std::invalid_argument);
}

TEST(ModelFile, RoundTripIsExact) {
    Rng rng(10);
    SavedModel saved{PolicyModel(12, 12, 64), TrainConfig{}, {{"env.n", "4"}, {"note", "two words"}}};
    saved.model.init_random(rng);
    saved.config.learning_rate = 0.1;
    saved.config.seed = 77;
    std::stringstream ss;
    write_model(ss, saved);
    const SavedModel loaded = read_model(ss);
    EXPECT_EQ(loaded.model.params(), saved.model.params());
    EXPECT_EQ(loaded.config.to_kv(), saved.config.to_kv());
    EXPECT_EQ(loaded.meta_value("note"), "two words");
    for (int k = 0; k < 100; ++k) {
        std::vector<double> obs(12);
        for (double &o : obs) o = coin_flip(rng);
        const auto a = saved.model.forward(obs), b = loaded.model.forward(obs);
        ASSERT_EQ(a.logits, b.logits);
        ASSERT_EQ(a.value, b.value);
    }
}

TEST(ModelFile, Errors) {
    std::stringstream bad_version("disentangle-policy v0\n");
    EXPECT_THROW(read_model(bad_version), std::runtime_error);

    SavedModel saved{PolicyModel(3, 2, 4), TrainConfig{}, {}};
    std::stringstream ss;
    write_model(ss, saved);
    std::string text = ss.str();
    const auto pos = text.find("tensor trunk1.weight 4 3");
    ASSERT_NE(pos, std::string::npos);
    text.replace(pos, 24, "tensor trunk1.weight 4 5");
    std::stringstream mismatched(text);
    EXPECT_THROW(read_model(mismatched), std::runtime_error);

    std::stringstream truncated(ss.str().substr(0, ss.str().size() / 2));
    EXPECT_THROW(read_model(truncated), std::runtime_error);
}
