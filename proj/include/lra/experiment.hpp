#pragma once

// JSON-configured experiment harness: training runs with per-epoch metrics,
// update-angle tracking, filter linearization, hidden-representation export,
// and the pretrain-then-finetune workflow.
//
// Outputs per run directory:
//   metrics.csv   epoch,train_err,valid_err,test_err,mean_depth,seconds
//   angles.csv    batch,degrees                (only when angle tracking is on)
//   model.bin     binary network (serialize.hpp layout)
//   model.json    architecture manifest
//
// Runs are deterministic given the config: all randomness flows from the
// config's named seeds, and the seconds column stays 0.000 unless "timing"
// is explicitly enabled (wall-clock output forfeits byte-identical reruns).

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "lra/credit.hpp"
#include "lra/data.hpp"
#include "lra/error.hpp"
#include "lra/matrix.hpp"
#include "lra/network.hpp"
#include "lra/optim.hpp"
#include "lra/rnn.hpp"
#include "lra/serialize.hpp"

namespace lra {

enum class Algorithm {
    bp,
    lra_diff,
    lra_fdbk,
    fa,
    dfa,
    ste_passthrough,
    ste_sigmoid,
    slope_anneal,
    reinforce,
    reinforce_var_adj,
};

inline const char* algorithm_name(Algorithm a) {
    switch (a) {
        case Algorithm::bp: return "bp";
        case Algorithm::lra_diff: return "lra_diff";
        case Algorithm::lra_fdbk: return "lra_fdbk";
        case Algorithm::fa: return "fa";
        case Algorithm::dfa: return "dfa";
        case Algorithm::ste_passthrough: return "ste_passthrough";
        case Algorithm::ste_sigmoid: return "ste_sigmoid";
        case Algorithm::slope_anneal: return "slope_anneal";
        case Algorithm::reinforce: return "reinforce";
        case Algorithm::reinforce_var_adj: return "reinforce_var_adj";
    }
    return "?";
}

inline bool is_estimator(Algorithm a) {
    return a == Algorithm::ste_passthrough || a == Algorithm::ste_sigmoid ||
           a == Algorithm::slope_anneal || a == Algorithm::reinforce ||
           a == Algorithm::reinforce_var_adj;
}

struct DatasetConfig {
    std::string train_images, train_labels, test_images, test_labels;
    std::size_t validation_count = 10000;
    std::uint64_t split_seed = 7;
};

struct Seeds {
    std::uint64_t weights = 1;
    std::uint64_t feedback = 2;
    std::uint64_t shuffle = 3;
    std::uint64_t sampling = 4;
};

struct ExperimentConfig {
    DatasetConfig dataset;
    std::size_t input_dim = 784;
    std::vector<LayerSpec> layers;
    Algorithm algorithm = Algorithm::lra_fdbk;
    LraConfig lra;
    double sigma_e = 1.0;
    EstimatorConfig estimator;
    InitScheme init;
    OptKind opt_kind = OptKind::sgd;
    double learning_rate = 0.01;
    std::size_t epochs = 0;
    std::size_t batch_size = 50;
    std::size_t eval_samples = 1;   // M, posterior averaging for stochastic nets
    std::size_t eval_batch = 500;
    Seeds seeds;
    std::size_t angle_every = 0;    // sample cos(update, backprop) every N batches
    bool timing = false;
    std::string pretrained_model;   // finetune only

    static ExperimentConfig from_json(const nlohmann::json& j);
    static ExperimentConfig from_file(const std::string& path);
    void override_master_seed(std::uint64_t seed) {
        seeds.weights = seed;
        seeds.feedback = seed + 1;
        seeds.shuffle = seed + 2;
        seeds.sampling = seed + 3;
        dataset.split_seed = seed + 4;
    }
};

// ---------------------------------------------------------------------------
// Config parsing. Unknown keys are rejected and every problem is collected
// so a bad config reports all of its defects at once.

namespace detail {

class ConfigReader {
public:
    ConfigReader(const nlohmann::json& j, std::string path, std::vector<std::string>& errors)
        : j_(j), path_(std::move(path)), errors_(errors) {
        if (!j_.is_object()) errors_.push_back(path_ + ": expected an object");
    }

    ~ConfigReader() {
        if (!j_.is_object()) return;
        for (const auto& [key, value] : j_.items())
            if (!seen_.count(key)) errors_.push_back(path_ + ": unknown key '" + key + "'");
    }

    bool has(const std::string& key) {
        seen_.insert(key);
        return j_.is_object() && j_.contains(key);
    }

    const nlohmann::json* object(const std::string& key, bool required = false) {
        if (!has(key)) {
            if (required) errors_.push_back(path_ + ": missing required key '" + key + "'");
            return nullptr;
        }
        if (!j_.at(key).is_object()) {
            errors_.push_back(path_ + "." + key + ": expected an object");
            return nullptr;
        }
        return &j_.at(key);
    }

    template <typename T>
    void get(const std::string& key, T& out, bool required = false) {
        if (!has(key)) {
            if (required) errors_.push_back(path_ + ": missing required key '" + key + "'");
            return;
        }
        try {
            out = j_.at(key).get<T>();
        } catch (const nlohmann::json::exception&) {
            errors_.push_back(path_ + "." + key + ": wrong type");
        }
    }

    void get_enum(const std::string& key, const std::function<void(const std::string&)>& parse,
                  bool required = false) {
        std::string s;
        bool present = has(key);
        if (!present) {
            if (required) errors_.push_back(path_ + ": missing required key '" + key + "'");
            return;
        }
        try {
            s = j_.at(key).get<std::string>();
        } catch (const nlohmann::json::exception&) {
            errors_.push_back(path_ + "." + key + ": expected a string");
            return;
        }
        try {
            parse(s);
        } catch (const std::exception& e) {
            errors_.push_back(path_ + "." + key + ": " + e.what());
        }
    }

    const nlohmann::json& raw() const { return j_; }
    const std::string& path() const { return path_; }
    std::vector<std::string>& errors() { return errors_; }

private:
    const nlohmann::json& j_;
    std::string path_;
    std::vector<std::string>& errors_;
    std::set<std::string> seen_;
};

inline Algorithm algorithm_from_name(const std::string& s) {
    for (Algorithm a : {Algorithm::bp, Algorithm::lra_diff, Algorithm::lra_fdbk, Algorithm::fa,
                        Algorithm::dfa, Algorithm::ste_passthrough, Algorithm::ste_sigmoid,
                        Algorithm::slope_anneal, Algorithm::reinforce, Algorithm::reinforce_var_adj})
        if (s == algorithm_name(a)) return a;
    throw ArgumentError("unknown algorithm: " + s);
}

}  // namespace detail

inline ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j) {
    std::vector<std::string> errors;
    ExperimentConfig cfg;
    {
        detail::ConfigReader r(j, "config", errors);

        if (const auto* dj = r.object("dataset", /*required=*/true)) {
            detail::ConfigReader d(*dj, "dataset", errors);
            d.get("train_images", cfg.dataset.train_images, true);
            d.get("train_labels", cfg.dataset.train_labels, true);
            d.get("test_images", cfg.dataset.test_images, true);
            d.get("test_labels", cfg.dataset.test_labels, true);
            d.get("validation_count", cfg.dataset.validation_count);
            d.get("split_seed", cfg.dataset.split_seed);
        }

        if (const auto* aj = r.object("architecture", /*required=*/true)) {
            detail::ConfigReader a(*aj, "architecture", errors);
            a.get("input_dim", cfg.input_dim, true);
            if (a.has("layers")) {
                const auto& lj = aj->at("layers");
                if (!lj.is_array() || lj.empty()) {
                    errors.push_back("architecture.layers: expected a non-empty array");
                } else {
                    for (std::size_t i = 0; i < lj.size(); ++i) {
                        LayerSpec spec;
                        spec.f = Act::tanh;
                        spec.loss = LossKind::log_penalty;
                        detail::ConfigReader l(lj.at(i), "architecture.layers[" + std::to_string(i) + "]",
                                               errors);
                        l.get("width", spec.width, true);
                        l.get_enum("activation", [&](const std::string& s) { spec.f = act_from_name(s); },
                                   true);
                        l.get_enum("discrete",
                                   [&](const std::string& s) { spec.g.kind = discrete_from_name(s); });
                        l.get("block_size", spec.g.block_size);
                        l.get_enum("loss", [&](const std::string& s) { spec.loss = loss_from_name(s); });
                        cfg.layers.push_back(spec);
                    }
                }
            } else {
                errors.push_back("architecture: missing required key 'layers'");
            }
        }

        r.get_enum("algorithm",
                   [&](const std::string& s) { cfg.algorithm = detail::algorithm_from_name(s); },
                   /*required=*/true);

        if (const auto* lj = r.object("lra")) {
            detail::ConfigReader l(*lj, "lra", errors);
            l.get("steps", cfg.lra.steps);
            l.get("epsilon", cfg.lra.epsilon);
            l.get("beta", cfg.lra.beta);
            l.get("c1", cfg.lra.c1);
            l.get("c2", cfg.lra.c2);
        }
        r.get("sigma_e", cfg.sigma_e);

        if (const auto* ej = r.object("estimator")) {
            detail::ConfigReader e(*ej, "estimator", errors);
            e.get("slope", cfg.estimator.slope);
            e.get("slope_increment", cfg.estimator.slope_increment);
            e.get("baseline_decay", cfg.estimator.baseline_decay);
        }

        if (const auto* ij = r.object("init")) {
            detail::ConfigReader i(*ij, "init", errors);
            i.get_enum("scheme", [&](const std::string& s) { cfg.init.kind = init_from_name(s); },
                       true);
            i.get("std", cfg.init.std);
        }

        if (const auto* oj = r.object("optimizer")) {
            detail::ConfigReader o(*oj, "optimizer", errors);
            o.get_enum("kind", [&](const std::string& s) {
                if (s == "sgd")
                    cfg.opt_kind = OptKind::sgd;
                else if (s == "adam")
                    cfg.opt_kind = OptKind::adam;
                else
                    throw ArgumentError("unknown optimizer: " + s);
            });
            o.get("learning_rate", cfg.learning_rate);
        }

        r.get("epochs", cfg.epochs, /*required=*/true);
        r.get("batch_size", cfg.batch_size);
        r.get("eval_samples", cfg.eval_samples);
        r.get("eval_batch_size", cfg.eval_batch);
        r.get("angle_every_batches", cfg.angle_every);
        r.get("timing", cfg.timing);
        r.get("pretrained_model", cfg.pretrained_model);

        if (const auto* sj = r.object("seeds")) {
            detail::ConfigReader s(*sj, "seeds", errors);
            s.get("weights", cfg.seeds.weights);
            s.get("feedback", cfg.seeds.feedback);
            s.get("shuffle", cfg.seeds.shuffle);
            s.get("sampling", cfg.seeds.sampling);
        }
    }

    // Cross-field checks (only meaningful once the fields themselves parsed).
    if (errors.empty()) {
        if (cfg.batch_size == 0) errors.push_back("batch_size: must be >= 1");
        if (cfg.eval_samples == 0) errors.push_back("eval_samples: must be >= 1");
        if (cfg.eval_batch == 0) errors.push_back("eval_batch_size: must be >= 1");
        if (!(cfg.learning_rate > 0.0)) errors.push_back("optimizer.learning_rate: must be positive");
        if (!(cfg.sigma_e >= 0.0)) errors.push_back("sigma_e: must be non-negative");
        if (cfg.lra.steps < 1) errors.push_back("lra.steps: must be >= 1");
        if (!(cfg.lra.beta > 0.0)) errors.push_back("lra.beta: must be positive");
        if (!(cfg.lra.c1 > 0.0)) errors.push_back("lra.c1: must be positive");
        if (!(cfg.lra.c2 > 0.0)) errors.push_back("lra.c2: must be positive");
        if (cfg.lra.epsilon < 0.0) errors.push_back("lra.epsilon: must be non-negative");
        if (!cfg.layers.empty() && cfg.layers.back().g.kind != DiscreteKind::none)
            errors.push_back("architecture.layers: topmost layer must not carry a discrete op");
        if (cfg.init.kind == InitScheme::Kind::gaussian && cfg.init.std < 0.0)
            errors.push_back("init.std: must be non-negative");
        if (cfg.estimator.baseline_decay < 0.0 || cfg.estimator.baseline_decay >= 1.0)
            errors.push_back("estimator.baseline_decay: must lie in [0,1)");
        if (cfg.angle_every > 0 && cfg.algorithm != Algorithm::lra_diff &&
            cfg.algorithm != Algorithm::lra_fdbk)
            errors.push_back("angle_every_batches: angle tracking needs an LRA algorithm");
    }

    if (!errors.empty()) {
        std::string msg = "invalid config:";
        for (const auto& e : errors) msg += "\n  - " + e;
        throw ConfigError(msg);
    }
    return cfg;
}

inline ExperimentConfig ExperimentConfig::from_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot read config " + path);
    nlohmann::json j;
    try {
        is >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config parse error: ") + e.what());
    }
    return from_json(j);
}

// ---------------------------------------------------------------------------
// Evaluation.

inline bool has_stochastic_units(const Network& net) {
    for (const auto& l : net.layers())
        if (l.g.kind == DiscreteKind::bernoulli) return true;
    return false;
}

/// Index of the row maximum; ties resolve to the lowest index.
inline std::size_t argmax_row(const double* row, std::size_t n) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < n; ++j)
        if (row[j] > row[best]) best = j;
    return best;
}

/// Classification error in percent. Stochastic networks average output
/// posteriors over m_samples forward passes; deterministic networks use a
/// single pass (their post-ops applied as configured).
inline double classification_error_percent(const Network& net, const Dataset& ds,
                                           std::size_t eval_batch, std::size_t m_samples,
                                           Rng* rng) {
    if (ds.size() == 0) return 0.0;
    const bool stochastic = has_stochastic_units(net);
    const std::size_t samples = stochastic ? std::max<std::size_t>(1, m_samples) : 1;
    if (stochastic && !rng) throw ConfigError("evaluating a stochastic network needs an rng");
    std::size_t wrong = 0;
    BatchPlan plan(ds.size(), eval_batch, std::nullopt);
    for (std::size_t b = 0; b < plan.count(); ++b) {
        Batch batch = plan.gather(ds, b);
        Matrix mean_out;
        for (std::size_t s = 0; s < samples; ++s) {
            ForwardTrace tr = forward(net, batch.x, rng);
            Matrix& out = tr.z.back();
            if (s == 0)
                mean_out = std::move(out);
            else
                mean_out += out;
        }
        for (std::size_t i = 0; i < batch.x.rows(); ++i)
            if (argmax_row(mean_out.row(i), mean_out.cols()) !=
                static_cast<std::size_t>(batch.labels[i]))
                ++wrong;
    }
    return 100.0 * static_cast<double>(wrong) / static_cast<double>(ds.size());
}

// ---------------------------------------------------------------------------
// Training.

struct EpochRow {
    std::size_t epoch = 0;
    double train_err = 0.0, valid_err = 0.0, test_err = 0.0;
    double mean_depth = 0.0;
    double seconds = 0.0;
};

struct RunMetrics {
    std::vector<EpochRow> rows;
    std::vector<std::pair<std::size_t, double>> angles;  // (global batch, degrees)
};

namespace detail {

inline std::string format_row(const EpochRow& r) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%zu,%.4f,%.4f,%.4f,%.4f,%.3f", r.epoch, r.train_err,
                  r.valid_err, r.test_err, r.mean_depth, r.seconds);
    return buf;
}

struct RunState {
    Network net;
    OptimizerState opt;
    EstimatorConfig estimator;
    std::vector<Matrix> fa_feedback;   // per layer, shaped like W^T
    std::vector<Matrix> dfa_feedback;  // per layer, [width x output_dim]
};

inline void prepare_baseline_feedback(RunState& st, const ExperimentConfig& cfg) {
    Rng rng(cfg.seeds.feedback);
    const Network& net = st.net;
    if (cfg.algorithm == Algorithm::fa) {
        st.fa_feedback.resize(net.depth());
        for (std::size_t i = 1; i < net.depth(); ++i)
            st.fa_feedback[i] = sample_uniform_fan_in(rng, net.layer(i).in_dim(),
                                                      net.layer(i).out_dim(),
                                                      net.layer(i).out_dim());
    } else if (cfg.algorithm == Algorithm::dfa) {
        st.dfa_feedback.resize(net.depth());
        for (std::size_t i = 0; i + 1 < net.depth(); ++i)
            st.dfa_feedback[i] = sample_uniform_fan_in(rng, net.layer(i).out_dim(),
                                                       net.output_dim(), net.output_dim());
    }
}

inline UpdateSet compute_updates(RunState& st, const ExperimentConfig& cfg,
                                 const ForwardTrace& trace, const Matrix& t, Rng& rng) {
    switch (cfg.algorithm) {
        case Algorithm::bp:
            return backprop_updates(st.net, trace, t);
        case Algorithm::lra_diff:
            return lra_updates(st.net, trace, t, cfg.lra, LraMode::diff).first;
        case Algorithm::lra_fdbk:
            if (st.net.fully_differentiable())
                return lra_updates(st.net, trace, t, cfg.lra, LraMode::fdbk).first;
            return lra_updates_nondiff(st.net, trace, t, cfg.lra).first;
        case Algorithm::fa:
            return fa_updates(st.net, trace, t, st.fa_feedback);
        case Algorithm::dfa:
            return dfa_updates(st.net, trace, t, st.dfa_feedback);
        default:
            return estimator_updates(st.net, trace, t, st.estimator, rng);
    }
}

inline EstimatorKind estimator_kind_for(Algorithm a) {
    switch (a) {
        case Algorithm::ste_passthrough: return EstimatorKind::ste_passthrough;
        case Algorithm::ste_sigmoid: return EstimatorKind::ste_sigmoid;
        case Algorithm::slope_anneal: return EstimatorKind::slope_anneal;
        case Algorithm::reinforce: return EstimatorKind::reinforce;
        default: return EstimatorKind::reinforce_var_adj;
    }
}

struct LoadedData {
    Dataset train, valid, test;
};

inline LoadedData load_splits(const ExperimentConfig& cfg) {
    Dataset full = load_idx(cfg.dataset.train_images, cfg.dataset.train_labels);
    Dataset test = load_idx(cfg.dataset.test_images, cfg.dataset.test_labels);
    if (full.images.cols() != cfg.input_dim)
        throw ConfigError("dataset pixel count " + std::to_string(full.images.cols()) +
                          " does not match architecture.input_dim " + std::to_string(cfg.input_dim));
    auto [train, valid] = split(full, {cfg.dataset.validation_count, cfg.dataset.split_seed});
    return {std::move(train), std::move(valid), std::move(test)};
}

inline RunMetrics train_loop(RunState& st, const ExperimentConfig& cfg, const LoadedData& data,
                             const std::string& out_dir, bool track_best_valid) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    std::ofstream metrics(out_dir + "/metrics.csv", std::ios::binary);
    if (!metrics) throw IoError("cannot write " + out_dir + "/metrics.csv");
    metrics << "epoch,train_err,valid_err,test_err,mean_depth,seconds\n";

    std::ofstream angles_csv;
    if (cfg.angle_every > 0) {
        angles_csv.open(out_dir + "/angles.csv", std::ios::binary);
        if (!angles_csv) throw IoError("cannot write " + out_dir + "/angles.csv");
        angles_csv << "batch,degrees\n";
    }

    RunMetrics out;
    Rng train_rng(cfg.seeds.sampling);
    st.opt.kind = cfg.opt_kind;
    st.opt.learning_rate = cfg.learning_rate;
    st.estimator.kind = estimator_kind_for(cfg.algorithm);
    st.estimator.slope = cfg.estimator.slope;
    st.estimator.slope_increment = cfg.estimator.slope_increment;
    st.estimator.baseline_decay = cfg.estimator.baseline_decay;

    std::vector<Layer> best_params;
    double best_valid = std::numeric_limits<double>::infinity();

    const auto evaluate = [&](std::size_t epoch, double mean_depth, double seconds) {
        Rng eval_rng(cfg.seeds.sampling + 1000003ULL * (epoch + 1));
        EpochRow row;
        row.epoch = epoch;
        row.train_err = classification_error_percent(st.net, data.train, cfg.eval_batch,
                                                     cfg.eval_samples, &eval_rng);
        row.valid_err = classification_error_percent(st.net, data.valid, cfg.eval_batch,
                                                     cfg.eval_samples, &eval_rng);
        row.test_err = classification_error_percent(st.net, data.test, cfg.eval_batch,
                                                    cfg.eval_samples, &eval_rng);
        row.mean_depth = mean_depth;
        row.seconds = cfg.timing ? seconds : 0.0;
        metrics << format_row(row) << "\n";
        metrics.flush();
        out.rows.push_back(row);
        if (track_best_valid && row.valid_err < best_valid) {
            best_valid = row.valid_err;
            best_params = st.net.layers();
        }
    };

    using clock = std::chrono::steady_clock;
    auto epoch_start = clock::now();
    evaluate(0, 0.0, 0.0);

    std::size_t global_batch = 0;
    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        epoch_start = clock::now();
        BatchPlan plan = minibatches(data.train, cfg.batch_size, cfg.seeds.shuffle + epoch);
        double depth_sum = 0.0;
        for (std::size_t b = 0; b < plan.count(); ++b, ++global_batch) {
            Batch batch = plan.gather(data.train, b);
            ForwardTrace trace = forward(st.net, batch.x, &train_rng);
            UpdateSet updates = compute_updates(st, cfg, trace, batch.y, train_rng);
            if (cfg.angle_every > 0 && global_batch % cfg.angle_every == 0) {
                UpdateSet reference = backprop_updates(st.net, trace, batch.y);
                // The reference shares layers with the halting-trimmed update
                // set; compare over the layers the walk actually reached.
                UpdateSet trimmed(reference.layers.size());
                for (std::size_t i = 0; i < reference.layers.size(); ++i)
                    if (updates.layers[i]) trimmed.layers[i] = reference.layers[i];
                const double deg = update_angle(updates, trimmed);
                out.angles.emplace_back(global_batch, deg);
                char buf[64];
                std::snprintf(buf, sizeof(buf), "%zu,%.6f", global_batch, deg);
                angles_csv << buf << "\n";
            }
            apply_updates(st.net, updates, st.opt);
            depth_sum += static_cast<double>(updates.depth);
        }
        st.estimator.slope += st.estimator.slope_increment;
        const double seconds = std::chrono::duration<double>(clock::now() - epoch_start).count();
        evaluate(epoch, plan.count() ? depth_sum / static_cast<double>(plan.count()) : 0.0, seconds);
    }

    if (track_best_valid && !best_params.empty()) st.net.layers() = best_params;
    save_network(st.net, out_dir + "/model.bin");
    save_manifest(st.net, out_dir + "/model.json");
    return out;
}

}  // namespace detail

/// Builds the configured network: zero/Gaussian/fan-in init for the weights,
/// a fixed Gaussian feedback matrix per subgraph for the alignment walk.
inline Network build_network(const ExperimentConfig& cfg) {
    Network net(cfg.input_dim, cfg.layers);
    Rng weight_rng(cfg.seeds.weights);
    init_weights(net, cfg.init, weight_rng);
    if (cfg.algorithm == Algorithm::lra_fdbk) {
        Rng feedback_rng(cfg.seeds.feedback);
        net.attach_feedback(feedback_rng, cfg.sigma_e);
    }
    return net;
}

/// Full experiment: train per the config, evaluating every epoch on all
/// three splits, and write metrics plus the final network.
inline RunMetrics run_experiment(const ExperimentConfig& cfg, const std::string& out_dir) {
    detail::LoadedData data = detail::load_splits(cfg);
    detail::RunState st;
    st.net = build_network(cfg);
    detail::prepare_baseline_feedback(st, cfg);
    return detail::train_loop(st, cfg, data, out_dir, /*track_best_valid=*/false);
}

/// Angle-tracking run: every `every_n_batches` minibatches the update set is
/// compared against the backprop update computed from the same trace (the
/// backprop result is discarded, not applied). Requires a differentiable net.
inline RunMetrics track_angle(ExperimentConfig cfg, std::size_t every_n_batches,
                              const std::string& out_dir) {
    if (every_n_batches == 0) throw ArgumentError("track_angle: interval must be >= 1");
    cfg.angle_every = every_n_batches;
    if (cfg.algorithm != Algorithm::lra_diff && cfg.algorithm != Algorithm::lra_fdbk)
        throw ConfigError("track_angle: algorithm must be an LRA variant");
    for (const auto& l : cfg.layers)
        if (l.g.kind != DiscreteKind::none)
            throw ConfigError("track_angle: network must be fully differentiable");
    return run_experiment(cfg, out_dir);
}

/// Continues training a saved network with plain backprop + SGD (step 1e-3),
/// reporting every epoch and keeping the parameters of the best validation
/// epoch as the saved model.
inline RunMetrics finetune(const std::string& pretrained_path, ExperimentConfig cfg,
                           const std::string& out_dir) {
    detail::RunState st;
    st.net = load_network(pretrained_path);
    if (st.net.input_dim() != cfg.input_dim || st.net.depth() != cfg.layers.size())
        throw ConfigError("finetune: loaded network does not match the configured architecture");
    for (std::size_t i = 0; i < cfg.layers.size(); ++i) {
        const Layer& l = st.net.layer(i);
        const LayerSpec& s = cfg.layers[i];
        if (l.out_dim() != s.width || l.f != s.f || l.g.kind != s.g.kind || l.loss != s.loss)
            throw ConfigError("finetune: layer " + std::to_string(i + 1) +
                              " does not match the configured architecture");
    }
    cfg.algorithm = Algorithm::bp;
    cfg.opt_kind = OptKind::sgd;
    cfg.learning_rate = 1e-3;
    cfg.angle_every = 0;
    detail::LoadedData data = detail::load_splits(cfg);
    return detail::train_loop(st, cfg, data, out_dir, /*track_best_valid=*/true);
}

// ---------------------------------------------------------------------------
// Filter linearization and representation export.

/// Collapses W_l * W_{l-1} * ... * W_1 into one matrix (nonlinearities
/// ignored), one row per unit of layer `layer_index` (1-based).
inline Matrix linearized_filters(const Network& net, std::size_t layer_index) {
    if (layer_index < 1 || layer_index > net.depth())
        throw ArgumentError("linearized_filters: layer index out of range");
    Matrix p = net.layer(0).w;
    for (std::size_t i = 1; i < layer_index; ++i) p = matmul(net.layer(i).w, p);
    return p;
}

namespace detail {

inline void write_pgm(const std::string& path, const double* row, std::size_t n, std::size_t side) {
    double lo = row[0], hi = row[0];
    for (std::size_t i = 1; i < n; ++i) {
        lo = std::min(lo, row[i]);
        hi = std::max(hi, row[i]);
    }
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot write " + path);
    os << "P5\n" << side << " " << side << "\n255\n";
    const double span = hi - lo;
    for (std::size_t i = 0; i < n; ++i) {
        const double v = span > 0.0 ? (row[i] - lo) / span : 0.0;
        os.put(static_cast<char>(static_cast<int>(v * 255.0 + 0.5)));
    }
}

}  // namespace detail

/// Linearized filters plus one 28x28 grayscale PGM per unit (rows min-max
/// scaled to 0..255). Image files are skipped for non-784 inputs; the matrix
/// is returned either way.
inline Matrix export_filters(const Network& net, std::size_t layer_index,
                             const std::string& out_dir) {
    Matrix filters = linearized_filters(net, layer_index);
    if (filters.cols() == 784) {
        std::filesystem::create_directories(out_dir);
        for (std::size_t j = 0; j < filters.rows(); ++j) {
            const std::string path = out_dir + "/filters_layer" + std::to_string(layer_index) +
                                     "_unit" + std::to_string(j) + ".pgm";
            detail::write_pgm(path, filters.row(j), filters.cols(), 28);
        }
    }
    return filters;
}

/// One CSV per layer: label followed by the layer's discrete outputs z*.
inline void export_representations(const Network& net, const Dataset& ds,
                                   const std::string& out_dir, Rng* rng = nullptr) {
    std::filesystem::create_directories(out_dir);
    std::vector<std::ofstream> files;
    for (std::size_t l = 0; l < net.depth(); ++l) {
        files.emplace_back(out_dir + "/reps_layer" + std::to_string(l + 1) + ".csv",
                           std::ios::binary);
        if (!files.back()) throw IoError("cannot write reps_layer" + std::to_string(l + 1));
    }
    BatchPlan plan(ds.size(), 500, std::nullopt);
    char buf[32];
    for (std::size_t b = 0; b < plan.count(); ++b) {
        Batch batch = plan.gather(ds, b);
        ForwardTrace tr = forward(net, batch.x, rng);
        for (std::size_t l = 0; l < net.depth(); ++l) {
            const Matrix& z = tr.z_star[l];
            for (std::size_t i = 0; i < z.rows(); ++i) {
                files[l] << batch.labels[i];
                for (std::size_t j = 0; j < z.cols(); ++j) {
                    std::snprintf(buf, sizeof(buf), ",%.17g", z(i, j));
                    files[l] << buf;
                }
                files[l] << "\n";
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Recurrent next-step prediction experiment.

struct RnnExperimentConfig {
    std::size_t sequence_length = 50;
    double frequency = 0.25;
    std::uint64_t sequence_seed = 1;
    std::size_t hidden = 16;
    std::size_t epochs = 20;
    double learning_rate = 0.05;
    double beta = 1.0;
    bool normalize_updates = true;
    double c1 = 1.0;
    std::uint64_t weight_seed = 2;

    static RnnExperimentConfig from_json(const nlohmann::json& j) {
        std::vector<std::string> errors;
        RnnExperimentConfig cfg;
        {
            detail::ConfigReader r(j, "config", errors);
            r.get("sequence_length", cfg.sequence_length);
            r.get("frequency", cfg.frequency);
            r.get("sequence_seed", cfg.sequence_seed);
            r.get("hidden", cfg.hidden);
            r.get("epochs", cfg.epochs);
            r.get("learning_rate", cfg.learning_rate);
            r.get("beta", cfg.beta);
            r.get("normalize_updates", cfg.normalize_updates);
            r.get("c1", cfg.c1);
            r.get("weight_seed", cfg.weight_seed);
        }
        if (errors.empty()) {
            if (cfg.sequence_length < 2) errors.push_back("sequence_length: must be >= 2");
            if (cfg.hidden == 0) errors.push_back("hidden: must be >= 1");
            if (!(cfg.learning_rate > 0.0)) errors.push_back("learning_rate: must be positive");
            if (!(cfg.beta > 0.0)) errors.push_back("beta: must be positive");
            if (!(cfg.c1 > 0.0)) errors.push_back("c1: must be positive");
        }
        if (!errors.empty()) {
            std::string msg = "invalid rnn config:";
            for (const auto& e : errors) msg += "\n  - " + e;
            throw ConfigError(msg);
        }
        return cfg;
    }

    static RnnExperimentConfig from_file(const std::string& path) {
        std::ifstream is(path);
        if (!is) throw IoError("cannot read config " + path);
        nlohmann::json j;
        try {
            is >> j;
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError(std::string("config parse error: ") + e.what());
        }
        return from_json(j);
    }
};

/// Trains the Elman model on a synthetic sine sequence; writes
/// rnn_metrics.csv (epoch,mse) with epoch 0 the pre-training loss. Returns
/// the per-epoch MSE series.
inline std::vector<double> run_rnn_experiment(const RnnExperimentConfig& cfg,
                                              const std::string& out_dir) {
    std::filesystem::create_directories(out_dir);
    std::ofstream csv(out_dir + "/rnn_metrics.csv", std::ios::binary);
    if (!csv) throw IoError("cannot write " + out_dir + "/rnn_metrics.csv");
    csv << "epoch,mse\n";

    Matrix x = sine_sequence(cfg.sequence_length, cfg.frequency, cfg.sequence_seed);
    Rng rng(cfg.weight_seed);
    RnnModel model = make_rnn(1, cfg.hidden, 1, rng);

    std::vector<double> mse;
    char buf[64];
    const auto record = [&](std::size_t epoch, double v) {
        mse.push_back(v);
        std::snprintf(buf, sizeof(buf), "%zu,%.10g", epoch, v);
        csv << buf << "\n";
    };

    RnnTrace tr = rnn_forward(model, x);
    record(0, rnn_sequence_mse(tr, x));
    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        RnnUpdates u = rnn_lra_updates(model, tr, x, cfg.beta);
        if (cfg.normalize_updates) {
            u.dw_in = normalize(std::move(u.dw_in), cfg.c1);
            u.dw_rec = normalize(std::move(u.dw_rec), cfg.c1);
            u.dw_out = normalize(std::move(u.dw_out), cfg.c1);
        }
        u.dw_in *= cfg.learning_rate;
        u.dw_rec *= cfg.learning_rate;
        u.dw_out *= cfg.learning_rate;
        model.w_in -= u.dw_in;
        model.w_rec -= u.dw_rec;
        model.w_out -= u.dw_out;
        tr = rnn_forward(model, x);
        record(epoch, rnn_sequence_mse(tr, x));
    }
    return mse;
}

}  // namespace lra
