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

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "disentangle/env.hpp"
#include "disentangle/experiments.hpp"
#include "disentangle/ppo.hpp"
#include "disentangle/svg.hpp"
#include "disentangle/textio.hpp"

namespace disentangle::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitRuntime = 2;
inline constexpr const char *kOutEnv = "DISENTANGLE_OUT";

/// Invalid user input; maps to exit code 1.
struct ValidationError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// One user-facing setting: `section.name` in config files, `flag` on the
/// command line.
struct Knob {
    std::string key;
    std::string flag;
    std::string fallback;
    std::string help;
};

inline std::vector<Knob> env_knobs(std::string n, std::string depth, std::string alpha) {
    return {{"env.n", "--n", std::move(n), "number of qubits"},
            {"env.depth", "--depth", std::move(depth), "circuit depth D (even)"},
            {"env.alpha", "--alpha", std::move(alpha), "penalty slope"},
            {"env.reward_scale", "--reward-scale", "50", "terminal reward scale p_r"},
            {"env.max_steps", "--max-steps", "0", "episode step cap (0 selects 2 n D/2)"},
            {"env.orientation", "--orientation", "depth_increasing", "layer index orientation"},
            {"env.circuit_mode", "--circuit-mode", "resample_per_episode", "resample_per_episode or fixed"}};
}

inline std::vector<Knob> train_knobs(std::string timesteps) {
    return {{"train.total_timesteps", "--timesteps", std::move(timesteps), "environment steps"},
            {"train.learning_rate", "--lr", "0.001", "Adam learning rate"},
            {"train.ent_coef", "--ent-coef", "0.01", "entropy bonus coefficient"},
            {"train.clip_eps", "--clip", "0.2", "ratio clip range"},
            {"train.gamma", "--gamma", "0.99", "discount"},
            {"train.gae_lambda", "--gae-lambda", "0.95", "GAE lambda"},
            {"train.n_steps", "--n-steps", "2048", "steps per environment per rollout"},
            {"train.minibatch_size", "--batch-size", "64", "minibatch size"},
            {"train.n_epochs", "--epochs", "10", "epochs per update"},
            {"train.value_coef", "--vf-coef", "0.5", "value loss coefficient"},
            {"train.max_grad_norm", "--max-grad-norm", "0.5", "gradient norm clip"},
            {"train.n_envs", "--n-envs", "1", "parallel environments"},
            {"train.hidden", "--hidden", "64", "hidden layer width"}};
}

inline std::vector<Knob> run_knobs() {
    return {{"run.seed", "--seed", "0", "master seed"}, {"run.jobs", "--jobs", "1", "worker threads"}};
}

/// Runs a parser, reporting failures as validation errors against `key`.
template <class F>
auto guarded(const std::string &key, F &&f) {
    try {
        return f();
    } catch (const std::exception &e) {
        throw ValidationError(key + ": " + e.what());
    }
}

/// Values resolved from defaults, then the config file, then flags.
class Settings {
  public:
    void set(const std::string &key, std::string value, bool is_explicit) {
        values_[key] = std::move(value);
        if (is_explicit) explicit_.insert(key);
    }
    bool has(const std::string &key) const { return values_.count(key) != 0; }
    bool is_explicit(const std::string &key) const { return explicit_.count(key) != 0; }

    const std::string &str(const std::string &key) const {
        const auto it = values_.find(key);
        if (it == values_.end()) throw std::logic_error("settings: unknown key " + key);
        return it->second;
    }
    uint64_t u64(const std::string &key) const {
        return guarded(key, [&] { return parse_u64(str(key)); });
    }
    double real(const std::string &key) const {
        return guarded(key, [&] { return parse_double(str(key)); });
    }
    bool flag(const std::string &key) const {
        const std::string &v = str(key);
        if (v == "true" || v == "1") return true;
        if (v == "false" || v == "0" || v.empty()) return false;
        throw ValidationError(key + ": expected true or false, got '" + v + "'");
    }
    std::vector<uint64_t> u64_list(const std::string &key) const {
        std::vector<uint64_t> out;
        for (const std::string &part : split(str(key), ',')) out.push_back(guarded(key, [&] { return parse_u64(part); }));
        return out;
    }
    std::vector<double> real_list(const std::string &key) const {
        std::vector<double> out;
        for (const std::string &part : split(str(key), ',')) {
            out.push_back(guarded(key, [&] { return parse_double(part); }));
        }
        return out;
    }

  private:
    std::map<std::string, std::string> values_;
    std::set<std::string> explicit_;
};

/// Reads the nested `[section]` / `key = value` format into flat keys.
inline std::map<std::string, std::string> read_config_file(const std::string &path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot read config file '" + path + "'");
    std::map<std::string, std::string> out;
    std::string section, line;
    for (size_t lineno = 1; std::getline(in, line); ++lineno) {
        std::string_view s = trim(line);
        if (s.empty() || s.front() == '#') continue;
        if (s.front() == '[') {
            if (s.back() != ']') throw ValidationError(path + ":" + std::to_string(lineno) + ": bad section header");
            section = std::string(trim(s.substr(1, s.size() - 2)));
            continue;
        }
        const size_t eq = s.find('=');
        if (eq == std::string_view::npos || section.empty()) {
            throw ValidationError(path + ":" + std::to_string(lineno) + ": expected 'key = value' inside a section");
        }
        out[section + "." + std::string(trim(s.substr(0, eq)))] = std::string(trim(s.substr(eq + 1)));
    }
    return out;
}

inline void write_config_file(const std::string &path, const std::string &command, const std::vector<Knob> &knobs,
                              const Settings &s) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write '" + path + "'");
    out << "# resolved configuration for '" << command << "'\n";
    std::string section;
    for (const Knob &k : knobs) {
        const size_t dot = k.key.find('.');
        const std::string sec = k.key.substr(0, dot);
        if (sec != section) {
            out << (section.empty() ? "" : "\n") << "[" << sec << "]\n";
            section = sec;
        }
        out << k.key.substr(dot + 1) << " = " << s.str(k.key) << "\n";
    }
}

/// A subcommand: its knobs, the CLI11 bindings and its body.
struct Command {
    std::string name;
    std::vector<Knob> knobs;
    std::vector<std::string> bool_flags;  // keys whose flag takes no value
    CLI::App *app = nullptr;
    std::map<std::string, std::string> raw;
    std::map<std::string, CLI::Option *> options;
    std::map<std::string, bool> switches;
};

inline void bind(Command &cmd) {
    for (const Knob &k : cmd.knobs) {
        const bool is_switch =
            std::find(cmd.bool_flags.begin(), cmd.bool_flags.end(), k.key) != cmd.bool_flags.end();
        if (is_switch) {
            cmd.switches[k.key] = false;
            cmd.options[k.key] = cmd.app->add_flag(k.flag, cmd.switches[k.key], k.help);
        } else {
            cmd.options[k.key] =
                cmd.app->add_option(k.flag, cmd.raw[k.key], k.help + " [default: " + k.fallback + "]");
        }
    }
}

inline Settings resolve(const Command &cmd, const std::string &config_path) {
    std::map<std::string, std::string> file;
    if (!config_path.empty()) file = read_config_file(config_path);
    std::set<std::string> known;
    for (const Knob &k : cmd.knobs) known.insert(k.key);
    for (const auto &[key, value] : file) {
        (void)value;
        if (!known.count(key)) throw ValidationError("config: unknown key '" + key + "' for '" + cmd.name + "'");
    }
    Settings s;
    for (const Knob &k : cmd.knobs) {
        const CLI::Option *opt = cmd.options.at(k.key);
        if (opt->count() > 0) {
            const auto sw = cmd.switches.find(k.key);
            s.set(k.key, sw != cmd.switches.end() ? (sw->second ? "true" : "false") : cmd.raw.at(k.key), true);
        } else if (file.count(k.key)) {
            s.set(k.key, file.at(k.key), true);
        } else {
            s.set(k.key, k.fallback, false);
        }
    }
    return s;
}

inline EnvConfig env_config(const Settings &s, size_t n, size_t d, double alpha) {
    EnvConfig c;
    c.n = n;
    c.d = d;
    c.alpha = alpha;
    c.p_r = s.real("env.reward_scale");
    c.max_steps = s.u64("env.max_steps");
    try {
        c.orientation = parse_orientation(s.str("env.orientation"));
        c.circuit_mode = parse_circuit_mode(s.str("env.circuit_mode"));
        c.validate();
    } catch (const std::invalid_argument &e) {
        throw ValidationError(e.what());
    }
    return c;
}

inline EnvConfig single_env_config(const Settings &s) {
    const auto ns = s.u64_list("env.n"), ds = s.u64_list("env.depth");
    const auto as = s.real_list("env.alpha");
    if (ns.size() != 1 || ds.size() != 1 || as.size() != 1) {
        throw ValidationError("--n, --depth and --alpha take a single value here");
    }
    return env_config(s, ns[0], ds[0], as[0]);
}

inline ppo::TrainConfig train_config(const Settings &s, const std::vector<Knob> &knobs) {
    ppo::TrainConfig tc;
    for (const Knob &k : knobs) {
        if (k.key.rfind("train.", 0) != 0) continue;
        try {
            tc.set(k.key.substr(6), s.str(k.key));
        } catch (const std::exception &e) {
            throw ValidationError(k.key + ": " + e.what());
        }
    }
    tc.seed = s.u64("run.seed");
    try {
        tc.validate();
    } catch (const std::invalid_argument &e) {
        throw ValidationError(e.what());
    }
    return tc;
}

inline std::vector<std::pair<std::string, std::string>> env_meta(const EnvConfig &c) {
    return {{"env.n", std::to_string(c.n)},
            {"env.depth", std::to_string(c.d)},
            {"env.alpha", format_double(c.alpha)},
            {"env.reward_scale", format_double(c.p_r)},
            {"env.max_steps", std::to_string(c.max_steps)},
            {"env.orientation", to_string(c.orientation)},
            {"env.circuit_mode", to_string(c.circuit_mode)}};
}

inline void write_text(const std::filesystem::path &path, const std::string &text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
    out << text;
    if (!out) throw std::runtime_error("write to '" + path.string() + "' failed");
}

template <class F>
std::string to_text(F &&write) {
    std::ostringstream out;
    write(out);
    return out.str();
}

inline std::ifstream open_input(const std::string &path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot read '" + path + "'");
    return in;
}

// ---------------------------------------------------------------------------
// Subcommand bodies. Each receives resolved settings and the output directory.

inline int cmd_baseline(const Settings &s, const std::filesystem::path &out, std::ostream &log) {
    std::vector<size_t> ns;
    for (uint64_t n : s.u64_list("baseline.n")) ns.push_back(n);
    const size_t max_depth = s.u64("baseline.max_depth"), samples = s.u64("baseline.samples");
    if (max_depth % 2 != 0) throw ValidationError("--max-depth must be even");
    if (samples == 0) throw ValidationError("--samples must be positive");
    for (size_t n : ns) {
        if (n < 2) throw ValidationError("--n values must be >= 2");
    }
    const auto curves = entanglement_growth(ns, max_depth, samples, s.u64("run.seed"));
    write_text(out / "growth.csv", to_text([&](std::ostream &o) { write_growth_csv(o, curves); }));
    svg::Plot plot{"Entanglement growth without measurements", "depth", "mean S_avg", svg::PlotKind::Line, {}, {}};
    for (const GrowthCurve &c : curves) {
        svg::Series series{"n = " + std::to_string(c.n), {}, c.mean_savg};
        for (size_t d : c.depths) series.x.push_back(static_cast<double>(d));
        plot.series.push_back(std::move(series));
    }
    svg::emit_plot(plot, (out / "growth.svg").string());
    for (const GrowthCurve &c : curves) {
        log << "n=" << c.n << " plateau S_avg=" << format_double(c.mean_savg.back()) << "\n";
    }
    return kExitOk;
}

inline int cmd_train(const Settings &s, const std::vector<Knob> &knobs, const std::filesystem::path &out,
                     std::ostream &log) {
    const EnvConfig env_cfg = single_env_config(s);
    const ppo::TrainConfig tc = train_config(s, knobs);
    auto make_env = [&](size_t, uint64_t seed) {
        EnvConfig c = env_cfg;
        c.seed = seed;
        return DisentangleEnv(c);
    };
    const ppo::TrainResult result = ppo::train(make_env, tc, s.u64("run.jobs"));
    ppo::save_model({result.model, tc, env_meta(env_cfg)}, (out / "model.txt").string());
    write_text(out / "metrics.csv", to_text([&](std::ostream &o) { ppo::write_metrics_csv(o, result.metrics); }));
    if (!result.metrics.empty()) {
        const auto &last = result.metrics.back();
        log << "trained " << last.timestep << " steps; ep_rew_mean=" << format_double(last.ep_rew_mean)
            << " ep_len_mean=" << format_double(last.ep_len_mean) << "\n";
    }
    return kExitOk;
}

inline constexpr const char *kEvalHeader =
    "n,d,alpha,actor,episodes,success_count,success_rate,mean_measurements,stderr_measurements,"
    "mean_weighted_layer,stderr_weighted_layer,mean_reward,stderr_reward,seed";

inline int cmd_eval(Settings s, const std::filesystem::path &out, std::ostream &log) {
    const bool random = s.flag("eval.random");
    std::optional<ppo::SavedModel> saved;
    if (!random) {
        if (s.str("eval.model").empty()) throw ValidationError("eval needs --model or --random");
        try {
            saved = ppo::load_model(s.str("eval.model"));
        } catch (const std::runtime_error &e) {
            throw ValidationError(e.what());
        }
        // The model's training environment fills in anything not set explicitly.
        for (const auto &[k, v] : saved->meta) {
            if (s.has(k) && !s.is_explicit(k)) s.set(k, v, false);
        }
    }
    const EnvConfig env_cfg = single_env_config(s);
    const size_t episodes = s.u64("eval.episodes");
    if (episodes == 0) throw ValidationError("--episodes must be positive");
    const uint64_t seed = s.u64("run.seed");
    EvalStats st;
    if (random) {
        st = evaluate_policy(uniform_random_actor(env_cfg.num_actions()), env_cfg, episodes, seed);
    } else {
        if (saved->model.input_dim() != env_cfg.num_actions()) {
            throw ValidationError("model expects " + std::to_string(saved->model.input_dim()) +
                                  " actions but the environment has " + std::to_string(env_cfg.num_actions()));
        }
        st = evaluate_policy(saved->model, env_cfg, episodes, seed);
    }
    std::ostringstream csv;
    csv << kEvalHeader << "\n"
        << env_cfg.n << "," << env_cfg.d << "," << format_double(env_cfg.alpha) << "," << (random ? "random" : "policy")
        << "," << st.n_episodes << "," << st.success_count << "," << format_double(st.success_rate()) << ","
        << format_double(st.mean_measurements) << "," << format_double(st.stderr_measurements) << ","
        << format_double(st.mean_weighted_layer) << "," << format_double(st.stderr_weighted_layer) << ","
        << format_double(st.mean_unscaled_reward) << "," << format_double(st.stderr_unscaled_reward) << "," << seed
        << "\n";
    write_text(out / "eval.csv", csv.str());
    log << "success " << st.success_count << "/" << st.n_episodes << "; M=" << format_double(st.mean_measurements)
        << " +- " << format_double(st.stderr_measurements) << "; L=" << format_double(st.mean_weighted_layer) << "\n";
    return kExitOk;
}

inline int cmd_sweep(Settings s, const std::vector<Knob> &knobs, const std::filesystem::path &out, std::ostream &log) {
    if (s.flag("sweep.full_grid")) {
        if (!s.is_explicit("env.n")) s.set("env.n", "3,4,5,6,7,8,9,10,11", false);
        if (!s.is_explicit("env.depth")) s.set("env.depth", "4,6,8,10,12,14,16,18,20,22", false);
        if (!s.is_explicit("train.total_timesteps")) s.set("train.total_timesteps", "500000", false);
    }
    const auto ns = s.u64_list("env.n"), ds = s.u64_list("env.depth");
    const auto alphas = s.real_list("env.alpha");
    SweepSettings ss;
    for (uint64_t n : ns) {
        for (uint64_t d : ds) {
            for (double a : alphas) env_config(s, n, d, a);  // validate every point up front
        }
    }
    ss.env = env_config(s, ns.at(0), ds.at(0), alphas.at(0));
    ss.train = train_config(s, knobs);
    ss.eval_episodes = s.u64("sweep.episodes");
    if (ss.eval_episodes == 0) throw ValidationError("--episodes must be positive");
    ss.seed = s.u64("run.seed");
    ss.jobs = s.u64("run.jobs");
    std::vector<size_t> nv(ns.begin(), ns.end()), dv(ds.begin(), ds.end());
    const auto rows = sweep(make_grid(nv, dv, alphas), ss, [&](const SweepRow &r) {
        log << "n=" << r.n << " d=" << r.d << " alpha=" << format_double(r.alpha)
            << (r.error.empty() ? " M=" + format_double(r.mean_measurements) : " failed: " + r.error) << "\n";
    });
    write_text(out / "results.csv", to_text([&](std::ostream &o) { emit_results(o, rows); }));
    for (const SweepRow &r : rows) {
        if (!r.error.empty()) return kExitRuntime;
    }
    return kExitOk;
}

/// Column values of a results-style CSV after applying `col=value` filters.
/// The derived column `layers` is d / 2.
inline std::vector<double> column_of(const CsvTable &t, const std::string &name, const std::vector<size_t> &keep) {
    const bool derived = name == "layers";
    const size_t k = t.column(derived ? "d" : name);
    std::vector<double> out;
    for (size_t r : keep) out.push_back(parse_double(t.rows[r][k]) / (derived ? 2.0 : 1.0));
    return out;
}

inline std::vector<size_t> filtered_rows(const CsvTable &t, const std::string &where) {
    std::vector<std::pair<size_t, double>> conditions;
    if (!where.empty()) {
        for (const std::string &cond : split(where, ',')) {
            const auto parts = split(cond, '=');
            if (parts.size() != 2) throw ValidationError("--where expects col=value, got '" + cond + "'");
            try {
                conditions.emplace_back(t.column(std::string(trim(parts[0]))), parse_double(parts[1]));
            } catch (const std::invalid_argument &e) {
                throw ValidationError(e.what());
            }
        }
    }
    std::vector<size_t> keep;
    for (size_t r = 0; r < t.rows.size(); ++r) {
        bool ok = true;
        for (const auto &[col, value] : conditions) ok = ok && parse_double(t.rows[r][col]) == value;
        if (ok) keep.push_back(r);
    }
    return keep;
}

inline CsvTable load_table(const std::string &path) {
    if (path.empty()) throw ValidationError("--in is required");
    std::ifstream in = open_input(path);
    try {
        return read_csv(in);
    } catch (const std::runtime_error &e) {
        throw ValidationError(path + ": " + e.what());
    }
}

inline std::pair<std::vector<double>, std::vector<double>> fit_data(const CsvTable &t, const std::string &x,
                                                                    const std::string &y, const std::string &where) {
    const auto keep = filtered_rows(t, where);
    try {
        auto xs = column_of(t, x, keep), ys = column_of(t, y, keep);
        std::vector<double> fx, fy;
        for (size_t i = 0; i < xs.size(); ++i) {
            if (std::isfinite(xs[i]) && std::isfinite(ys[i])) {
                fx.push_back(xs[i]);
                fy.push_back(ys[i]);
            }
        }
        return {fx, fy};
    } catch (const std::invalid_argument &e) {
        throw ValidationError(e.what());
    }
}

inline FitResult do_fit(const std::string &kind, const std::vector<double> &xs, const std::vector<double> &ys) {
    try {
        if (kind == "linear") return linear_fit(xs, ys);
        if (kind == "tanh") return tanh_fit(xs, ys);
    } catch (const std::invalid_argument &e) {
        throw ValidationError(e.what());
    }
    throw ValidationError("--kind must be linear or tanh");
}

inline svg::Series fit_curve(const FitResult &f, const std::vector<double> &xs, std::string label) {
    const auto [lo, hi] = std::minmax_element(xs.begin(), xs.end());
    svg::Series s{std::move(label), {}, {}};
    for (int k = 0; k <= 100; ++k) {
        const double x = *lo + (*hi - *lo) * k / 100.0;
        s.x.push_back(x);
        s.y.push_back(f(x));
    }
    return s;
}

inline int cmd_fit(const Settings &s, const std::filesystem::path &out, std::ostream &log) {
    const CsvTable t = load_table(s.str("fit.in"));
    const std::string x = s.str("fit.x"), y = s.str("fit.y"), kind = s.str("fit.kind");
    const auto [xs, ys] = fit_data(t, x, y, s.str("fit.where"));
    const FitResult f = do_fit(kind, xs, ys);
    const std::string report = to_text([&](std::ostream &o) {
        if (!s.str("fit.where").empty()) o << "where = " << s.str("fit.where") << "\n";
        o << "points = " << xs.size() << "\n";
        write_fit_report(o, f, x, y);
    });
    write_text(out / "fit.txt", report);
    svg::Plot plot{kind + " fit", x, y, svg::PlotKind::ScatterFit, {{"data", xs, ys}}, {fit_curve(f, xs, "fit")}};
    svg::emit_plot(plot, (out / "fit.svg").string());
    log << report;
    return kExitOk;
}

inline int cmd_plot(const Settings &s, const std::string &kind, const std::filesystem::path &out, std::ostream &log) {
    std::string name = s.str("plot.name").empty() ? kind + ".svg" : s.str("plot.name");
    svg::Plot plot;
    if (kind == "weights") {
        plot = svg::weights_plot(s.real_list("plot.alpha"), s.u64("plot.layers"));
    } else {
        const CsvTable t = load_table(s.str("plot.in"));
        std::string x = s.str("plot.x"), y = s.str("plot.y"), group = s.str("plot.group");
        if (kind == "growth") {
            x = "depth";
            y = "mean_savg";
            group = "n";
            plot.title = "Entanglement growth without measurements";
        } else if (kind == "metrics") {
            x = "timestep";
            if (y.empty()) y = "ep_rew_mean";
            group.clear();
            plot.title = "Training metrics";
        } else if (x.empty() || y.empty()) {
            throw ValidationError("plot results needs --x and --y");
        } else {
            plot.title = y + " against " + x;
        }
        plot.x_label = x;
        plot.y_label = y;
        std::vector<std::string> groups{""};
        if (!group.empty()) {
            std::set<double> values;
            for (const double v : column_of(t, group, filtered_rows(t, ""))) values.insert(v);
            groups.clear();
            for (double v : values) groups.push_back(group + "=" + format_double(v));
        }
        const std::string fit = s.str("plot.fit");
        plot.kind = fit == "none" ? svg::PlotKind::Line : svg::PlotKind::ScatterFit;
        for (const std::string &g : groups) {
            std::string where = s.str("plot.where");
            if (!g.empty()) where = where.empty() ? g : where + "," + g;
            const auto [xs, ys] = fit_data(t, x, y, where);
            if (xs.empty()) continue;
            const std::string label = g.empty() ? y : g;
            plot.series.push_back({label, xs, ys});
            if (fit != "none") plot.fits.push_back(fit_curve(do_fit(fit, xs, ys), xs, fit + " fit"));
        }
        if (plot.series.empty()) throw ValidationError("plot: no data rows selected");
    }
    svg::emit_plot(plot, (out / name).string());
    log << "wrote " << (out / name).string() << "\n";
    return kExitOk;
}

// ---------------------------------------------------------------------------

inline std::filesystem::path default_out_root() {
    const char *env = std::getenv(kOutEnv);
    return env && *env ? std::filesystem::path(env) : std::filesystem::path("runs");
}

/// Entry point; callable in-process. Returns the process exit code.
inline int run(const std::vector<std::string> &args, std::ostream &log = std::cout, std::ostream &err = std::cerr) {
    CLI::App app{"Find minimal measurement sets that disentangle random Clifford circuits", "disentangle"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string config_path, out_dir;
    std::vector<Command> commands;
    auto add = [&](std::string name, std::string help, std::vector<std::vector<Knob>> groups,
                   std::vector<std::string> bools = {}) {
        Command cmd;
        cmd.name = name;
        for (auto &g : groups) cmd.knobs.insert(cmd.knobs.end(), g.begin(), g.end());
        cmd.bool_flags = std::move(bools);
        cmd.app = app.add_subcommand(name, help);
        commands.push_back(std::move(cmd));
    };

    add("baseline", "entanglement growth of measurement-free circuits",
        {{{"baseline.n", "--n", "4,6,8", "qubit counts"},
          {"baseline.max_depth", "--max-depth", "64", "largest (even) depth"},
          {"baseline.samples", "--samples", "1000", "circuits per qubit count"}},
         run_knobs()});
    add("train", "train a PPO agent on one environment", {env_knobs("4", "6", "0.1"), train_knobs("200000"), run_knobs()});
    add("eval", "evaluate a trained model or the uniform random actor",
        {env_knobs("4", "6", "0.1"),
         {{"eval.model", "--model", "", "model file written by train"},
          {"eval.episodes", "--episodes", "1000", "evaluation episodes"},
          {"eval.random", "--random", "false", "use the uniform random actor"}},
         run_knobs()},
        {"eval.random"});
    add("sweep", "train and evaluate over an (n, depth, alpha) grid",
        {env_knobs("3,4,5,6,7,8", "4,6,8,10,12,14,16", "0.1"), train_knobs("100000"),
         {{"sweep.episodes", "--episodes", "1000", "evaluation episodes per point"},
          {"sweep.full_grid", "--full-grid", "false", "n up to 11, depth up to 22, 5e5 steps"}},
         run_knobs()},
        {"sweep.full_grid"});
    add("fit", "fit a linear or tanh model to two CSV columns",
        {{{"fit.in", "--in", "", "input CSV"},
          {"fit.kind", "--kind", "linear", "linear or tanh"},
          {"fit.x", "--x", "n", "x column (layers means d / 2)"},
          {"fit.y", "--y", "mean_measurements", "y column"},
          {"fit.where", "--where", "", "row filters col=value[,col=value]"}}});
    add("plot", "render an SVG plot",
        {{{"plot.in", "--in", "", "input CSV"},
          {"plot.alpha", "--alpha", "0.1,0.5,1.0", "penalty slopes for the weights plot"},
          {"plot.layers", "--layers", "20", "largest layer index for the weights plot"},
          {"plot.x", "--x", "", "x column"},
          {"plot.y", "--y", "", "y column"},
          {"plot.group", "--group", "", "column splitting rows into series"},
          {"plot.where", "--where", "", "row filters col=value[,col=value]"},
          {"plot.fit", "--fit", "none", "none, linear or tanh"},
          {"plot.name", "--name", "", "output file name"}}});

    std::string plot_kind;
    for (Command &cmd : commands) {
        bind(cmd);
        cmd.app->add_option("--config", config_path, "config file with [section] key = value lines");
        cmd.app->add_option("--out", out_dir, std::string("output directory [default: $") + kOutEnv + "/<command>]");
        if (cmd.name == "plot") {
            cmd.app->add_option("kind", plot_kind, "weights, growth, results or metrics")
                ->required()
                ->check(CLI::IsMember({"weights", "growth", "results", "metrics"}));
        }
    }

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError &e) {
        const int code = app.exit(e, log, err);
        return code == 0 ? kExitOk : kExitValidation;
    }

    Command *active = nullptr;
    for (Command &cmd : commands) {
        if (cmd.app->parsed()) active = &cmd;
    }
    try {
        const Settings s = resolve(*active, config_path);
        const std::filesystem::path out = out_dir.empty() ? default_out_root() / active->name : std::filesystem::path(out_dir);
        if (s.has("run.jobs") && s.u64("run.jobs") == 0) throw ValidationError("--jobs must be positive");
        std::filesystem::create_directories(out);
        write_config_file((out / "config.txt").string(), active->name, active->knobs, s);
        if (active->name == "baseline") return cmd_baseline(s, out, log);
        if (active->name == "train") return cmd_train(s, active->knobs, out, log);
        if (active->name == "eval") return cmd_eval(s, out, log);
        if (active->name == "sweep") return cmd_sweep(s, active->knobs, out, log);
        if (active->name == "fit") return cmd_fit(s, out, log);
        return cmd_plot(s, plot_kind, out, log);
    } catch (const ValidationError &e) {
        err << "error: " << e.what() << "\n" << active->app->help();
        return kExitValidation;
    } catch (const std::exception &e) {
        err << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
}

inline int run(int argc, const char *const *argv, std::ostream &log = std::cout, std::ostream &err = std::cerr) {
    return run(std::vector<std::string>(argv + 1, argv + argc), log, err);
}

}  // namespace disentangle::cli
