// Experiment command line. Subcommands:
//
//   train        run a JSON-configured training experiment
//   finetune     continue training a saved model with backprop + SGD
//   filters      linearize a trained network's filters into PGM images
//   export-reps  dump per-layer hidden representations to CSV
//   rnn-train    recurrent next-step prediction on a synthetic sine wave
//
// Exit code 0 on success; on failure a single machine-readable JSON error
// line goes to stderr and the exit code is nonzero.

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "lra/experiment.hpp"

namespace {

int fail(const std::string& kind, const std::string& message) {
    nlohmann::json j;
    j["error"] = kind;
    j["message"] = message;
    std::cerr << j.dump() << "\n";
    return 1;
}

lra::ExperimentConfig load_config(const std::string& path, std::optional<std::uint64_t> seed) {
    lra::ExperimentConfig cfg = lra::ExperimentConfig::from_file(path);
    if (seed) cfg.override_master_seed(*seed);
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Local representation alignment training toolkit"};
    app.require_subcommand(1);

    std::string config_path, out_dir = "run", model_path, images_path, labels_path;
    std::size_t layer_index = 1;
    std::optional<std::uint64_t> seed;

    auto add_common = [&](CLI::App* cmd, bool needs_config) {
        if (needs_config)
            cmd->add_option("--config", config_path, "JSON experiment config")->required();
        cmd->add_option("--out-dir", out_dir, "output directory");
        cmd->add_option("--seed", seed, "master seed overriding every configured seed");
    };

    CLI::App* train = app.add_subcommand("train", "run a training experiment");
    add_common(train, true);

    CLI::App* finetune = app.add_subcommand("finetune", "finetune a saved model with backprop");
    add_common(finetune, true);
    finetune->add_option("--model", model_path, "pretrained model.bin (overrides config)");

    CLI::App* filters = app.add_subcommand("filters", "export linearized filters");
    filters->add_option("--model", model_path, "trained model.bin")->required();
    filters->add_option("--layer", layer_index, "1-based layer index")->required();
    filters->add_option("--out-dir", out_dir, "output directory");

    CLI::App* reps = app.add_subcommand("export-reps", "export per-layer representations");
    reps->add_option("--model", model_path, "trained model.bin")->required();
    reps->add_option("--images", images_path, "IDX image file")->required();
    reps->add_option("--labels", labels_path, "IDX label file")->required();
    reps->add_option("--out-dir", out_dir, "output directory");
    reps->add_option("--seed", seed, "sampling seed for stochastic networks");

    CLI::App* rnn = app.add_subcommand("rnn-train", "train the recurrent next-step model");
    rnn->add_option("--config", config_path, "JSON rnn config")->required();
    rnn->add_option("--out-dir", out_dir, "output directory");
    rnn->add_option("--seed", seed, "overrides the configured weight seed");

    CLI11_PARSE(app, argc, argv);

    try {
        if (train->parsed()) {
            lra::ExperimentConfig cfg = load_config(config_path, seed);
            lra::RunMetrics m = lra::run_experiment(cfg, out_dir);
            const auto& last = m.rows.back();
            std::cout << "epochs=" << last.epoch << " train_err=" << last.train_err
                      << " valid_err=" << last.valid_err << " test_err=" << last.test_err << "\n";
        } else if (finetune->parsed()) {
            lra::ExperimentConfig cfg = load_config(config_path, seed);
            if (!model_path.empty()) cfg.pretrained_model = model_path;
            if (cfg.pretrained_model.empty())
                return fail("config", "finetune needs --model or a pretrained_model config key");
            lra::RunMetrics m = lra::finetune(cfg.pretrained_model, cfg, out_dir);
            std::size_t best = 0;
            for (std::size_t i = 1; i < m.rows.size(); ++i)
                if (m.rows[i].valid_err < m.rows[best].valid_err) best = i;
            const auto& row = m.rows[best];
            std::cout << "best_epoch=" << row.epoch << " train_err=" << row.train_err
                      << " valid_err=" << row.valid_err << " test_err=" << row.test_err << "\n";
        } else if (filters->parsed()) {
            lra::Network net = lra::load_network(model_path);
            lra::Matrix f = lra::export_filters(net, layer_index, out_dir);
            std::cout << "filters=" << f.rows() << " dim=" << f.cols() << "\n";
        } else if (reps->parsed()) {
            lra::Network net = lra::load_network(model_path);
            lra::Dataset ds = lra::load_idx(images_path, labels_path);
            lra::Rng rng(seed.value_or(4));
            lra::export_representations(net, ds, out_dir, &rng);
            std::cout << "layers=" << net.depth() << " samples=" << ds.size() << "\n";
        } else if (rnn->parsed()) {
            lra::RnnExperimentConfig cfg = lra::RnnExperimentConfig::from_file(config_path);
            if (seed) cfg.weight_seed = *seed;
            const auto mse = lra::run_rnn_experiment(cfg, out_dir);
            std::cout << "epochs=" << cfg.epochs << " initial_mse=" << mse.front()
                      << " final_mse=" << mse.back() << "\n";
        }
    } catch (const lra::ConfigError& e) {
        return fail("config", e.what());
    } catch (const lra::FormatError& e) {
        return fail("format", e.what());
    } catch (const lra::IoError& e) {
        return fail("io", e.what());
    } catch (const std::exception& e) {
        return fail("internal", e.what());
    }
    return 0;
}
