#include "ddnn/cli.hpp"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "ddnn/errors.hpp"
#include "ddnn/experiments.hpp"
#include "ddnn/version.hpp"

namespace fs = std::filesystem;

namespace ddnn {

void write_text_file(const std::string& path, const std::string& content) {
    const fs::path p(path);
    if (p.has_parent_path()) {
        std::error_code ec;
        fs::create_directories(p.parent_path(), ec);
    }
    std::ofstream f(p, std::ios::binary);
    if (!f) throw ValidationError("cannot write " + path);
    f.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!f) throw ValidationError("short write on " + path);
}

std::pair<Dataset, Dataset> load_split_datasets(const RunConfig& cfg) {
    Dataset full = cfg.data.path.empty() ? synth_generate(cfg.to_synth_params())
                                         : load_dataset(cfg.data.path);
    return split(full, cfg.data.split_fraction, cfg.train.seed);
}

namespace {

std::string out_path(const RunConfig& cfg, const std::string& name) {
    return (fs::path(cfg.output.dir) / name).string();
}

std::string history_csv(const TrainHistory& history) {
    std::ostringstream os;
    os << "epoch,local_loss,cloud_loss,joint_loss,local_acc,cloud_acc\n";
    for (size_t i = 0; i < history.size(); ++i) {
        const auto& h = history[i];
        char buf[160];
        std::snprintf(buf, sizeof buf, "%zu,%.6f,%.6f,%.6f,%.4f,%.4f\n", i + 1,
                      h.local_loss, h.cloud_loss, h.joint_loss, h.local_acc, h.cloud_acc);
        os << buf;
    }
    return os.str();
}

} // namespace

int cmd_gen_data(const RunConfig& cfg) {
    const Dataset ds = synth_generate(cfg.to_synth_params());
    const std::string dir = out_path(cfg, "dataset");
    write_dataset(ds, dir);
    const auto dist = class_distribution(ds);
    write_text_file((fs::path(dir) / "stats.csv").string(), class_distribution_csv(dist));
    write_text_file(out_path(cfg, "manifest.json"),
                    manifest_json("gen-data", cfg.train.seed, serialize_config(cfg),
                                  {{"dataset", dir}}));
    std::cout << "wrote " << ds.size() << " samples to " << dir << "\n"
              << class_distribution_table(dist);
    return 0;
}

int cmd_train(const RunConfig& cfg) {
    auto [train_set, test_set] = load_split_datasets(cfg);
    DdnnModel model = DdnnModel::make(cfg.to_model_config(), cfg.train.seed);
    const TrainHistory history = train(model, train_set, cfg.to_train_config());

    const std::string ckpt = out_path(cfg, "checkpoint.bin");
    save_checkpoint(model, ckpt);
    write_text_file(out_path(cfg, "history.csv"), history_csv(history));
    write_text_file(out_path(cfg, "manifest.json"),
                    manifest_json("train", cfg.train.seed, serialize_config(cfg),
                                  {{"checkpoint", ckpt},
                                   {"history", out_path(cfg, "history.csv")}}));

    const AccuracyReport rep = measure(model, test_set, cfg.policy.threshold);
    std::printf("trained %d epochs: local %.2f%%  cloud %.2f%%  overall %.2f%% "
                "(T=%.2f, %.2f%% local exit, %.2f B avg)\n",
                cfg.train.epochs, rep.local_acc, rep.cloud_acc, rep.overall_acc,
                cfg.policy.threshold, rep.local_exit_pct, rep.avg_comm_bytes);
    return 0;
}

int cmd_infer(const RunConfig& cfg, const std::string& checkpoint_path,
              const std::string& data_dir, const std::string& sample_id,
              double threshold) {
    const DdnnModel model = load_checkpoint(checkpoint_path);
    if (model.num_classes() != kNumClasses)
        throw ValidationError("checkpoint has " + std::to_string(model.num_classes()) +
                              " classes, datasets in this layout have " +
                              std::to_string(kNumClasses));
    Dataset ds = load_dataset(data_dir);
    if (!sample_id.empty()) {
        Dataset one;
        for (auto& s : ds.samples)
            if (s.id == sample_id) one.samples.push_back(std::move(s));
        if (one.samples.empty())
            throw ValidationError("sample id '" + sample_id + "' not found in " + data_dir);
        ds = std::move(one);
    }

    const CommModel comm = CommModel::of(model);
    const auto traces = infer_dataset(model, ds, ExitThresholds{threshold}, comm);
    write_text_file(out_path(cfg, "traces.csv"), traces_csv(ds, traces));
    write_text_file(out_path(cfg, "manifest.json"),
                    manifest_json("infer", cfg.train.seed, serialize_config(cfg),
                                  {{"traces", out_path(cfg, "traces.csv")}}));

    int64_t correct = 0, local_exits = 0, bytes = 0;
    for (size_t i = 0; i < traces.size(); ++i) {
        if (traces[i].predicted_class == ds.samples[i].global_label) ++correct;
        if (traces[i].exit_taken == ExitPoint::Local) ++local_exits;
        bytes += traces[i].bytes_sent;
    }
    const double n = static_cast<double>(traces.size());
    std::printf("samples %zu  overall %.2f%%  local-exit %.2f%%  avg bytes %.2f\n",
                traces.size(), 100.0 * static_cast<double>(correct) / n,
                100.0 * static_cast<double>(local_exits) / n,
                static_cast<double>(bytes) / n);
    return 0;
}

int cmd_sweep(const RunConfig& cfg, const std::string& kind,
              const std::string& checkpoint_path) {
    const double T = cfg.policy.threshold;
    SweepResult result;

    if (kind == "aggregation" || kind == "devices" || kind == "filters") {
        auto [train_set, test_set] = load_split_datasets(cfg);
        if (kind == "aggregation") {
            result = run_aggregation_sweep(train_set, test_set, cfg.to_model_config(),
                                           cfg.to_train_config(), T, cfg.output.jobs);
        } else if (kind == "devices") {
            const DeviceScalingResult scaling =
                run_device_scaling(train_set, test_set, cfg.to_model_config(),
                                   cfg.to_train_config(), T, cfg.output.jobs);
            result = scaling.sweep;
        } else {
            const int filters[] = {4, 8, 16};
            result = run_filter_sweep(train_set, test_set, filters, cfg.to_model_config(),
                                      cfg.to_train_config(), cfg.output.jobs);
        }
    } else if (kind == "threshold" || kind == "fault") {
        if (checkpoint_path.empty())
            throw ValidationError("sweep '" + kind + "' requires --checkpoint");
        const DdnnModel model = load_checkpoint(checkpoint_path);
        auto [train_set, test_set] = load_split_datasets(cfg);
        (void)train_set;
        if (kind == "threshold") {
            result = run_threshold_sweep(model, test_set, cfg.policy.grid);
        } else {
            if (model.n_devices() != kViewsPerSample)
                throw ValidationError("fault sweep requires a 6-device checkpoint, got " +
                                      std::to_string(model.n_devices()) + " devices");
            result = run_fault_tolerance(model, test_set,
                                         default_failure_sets(model.n_devices()), T);
        }
    } else {
        throw ValidationError("unknown sweep kind '" + kind +
                              "' (want aggregation|threshold|devices|filters|fault)");
    }

    const std::string csv_path = out_path(cfg, "sweep_" + kind + ".csv");
    write_text_file(csv_path, sweep_csv(result));
    write_text_file(out_path(cfg, "manifest.json"),
                    manifest_json("sweep-" + kind, cfg.train.seed, serialize_config(cfg),
                                  {{"sweep", csv_path}}));
    std::cout << "wrote " << result.rows.size() << " rows to " << csv_path << "\n";
    return 0;
}

int run_cli(int argc, char** argv) {
    CLI::App app{"DDNN: train and simulate distributed multi-exit neural networks"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string config_path, seed_flag, out_flag;
    int jobs_flag = 0;
    app.add_option("--config", config_path, "INI config file");
    app.add_option("--seed", seed_flag, "master seed (overrides config and DDNN_SEED)");
    app.add_option("--out", out_flag, "output directory (overrides config)");
    app.add_option("--jobs", jobs_flag, "parallel sweep cells (overrides config)");

    auto* gen = app.add_subcommand("gen-data", "generate a synthetic dataset directory");
    auto* tr = app.add_subcommand("train", "train a DDNN and write a checkpoint");

    std::string infer_ckpt, infer_data, infer_sample;
    double infer_T = -1.0;
    auto* inf = app.add_subcommand("infer", "staged inference over a dataset");
    inf->add_option("checkpoint", infer_ckpt, "checkpoint file")->required();
    inf->add_option("data", infer_data, "dataset directory")->required();
    inf->add_option("--sample", infer_sample, "restrict to one sample id");
    inf->add_option("--threshold", infer_T, "local exit threshold");

    std::string sweep_kind, sweep_ckpt;
    auto* sw = app.add_subcommand("sweep", "run an experiment sweep");
    sw->add_option("kind", sweep_kind, "aggregation|threshold|devices|filters|fault")
        ->required();
    sw->add_option("--checkpoint", sweep_ckpt, "trained checkpoint (threshold/fault)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    }

    try {
        RunConfig cfg =
            config_path.empty() ? RunConfig{} : load_config_file(config_path);
        cfg.train.seed = resolve_seed(cfg, seed_flag, std::getenv("DDNN_SEED"));
        if (!out_flag.empty()) cfg.output.dir = out_flag;
        if (jobs_flag > 0) cfg.output.jobs = jobs_flag;

        if (gen->parsed()) return cmd_gen_data(cfg);
        if (tr->parsed()) return cmd_train(cfg);
        if (inf->parsed())
            return cmd_infer(cfg, infer_ckpt, infer_data, infer_sample,
                             infer_T < 0.0 ? cfg.policy.threshold : infer_T);
        if (sw->parsed()) return cmd_sweep(cfg, sweep_kind, sweep_ckpt);
        return 1;
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 2;
    }
}

} // namespace ddnn
