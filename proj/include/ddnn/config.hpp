#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ddnn/data.hpp"
#include "ddnn/model.hpp"

namespace ddnn {

/**
 * Declarative run configuration, stored as flat INI (sections of key=value
 * lines). Every field has a default; unknown sections or keys are rejected
 * with the offending line number; parse(serialize(c)) == c.
 */
struct RunConfig {
    struct Data {
        std::string path; // empty = generate synthetic data in-memory
        int synth_samples = 851;
        std::vector<double> absence = {0.50, 0.42, 0.35, 0.28, 0.22, 0.18};
        double noise_sigma = 0.35;
        double split_fraction = kDefaultTrainFraction;

        bool operator==(const Data&) const = default;
    } data;

    struct Model {
        int devices = 6;
        int filters = 4;
        std::string scheme_local = "mp";
        std::string scheme_cloud = "cc";
        double exit_weight_local = 1.0;
        double exit_weight_cloud = 1.0;

        bool operator==(const Model&) const = default;
    } model;

    struct Train {
        int epochs = 100;
        int batch = 32;
        double alpha = 0.001;
        double beta1 = 0.9;
        double beta2 = 0.999;
        double epsilon = 1e-8;
        uint64_t seed = 1;

        bool operator==(const Train&) const = default;
    } train;

    struct Policy {
        double threshold = 0.8;
        std::vector<double> grid = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};

        bool operator==(const Policy&) const = default;
    } policy;

    struct Output {
        std::string dir = "out";
        int jobs = 1;

        bool operator==(const Output&) const = default;
    } output;

    /// True when the config text set [train] seed explicitly. Not part of the
    /// value (excluded from == and serialization).
    bool seed_from_file = false;

    bool operator==(const RunConfig& o) const {
        return data == o.data && model == o.model && train == o.train &&
               policy == o.policy && output == o.output;
    }

    ModelConfig to_model_config() const;
    TrainConfig to_train_config() const;
    SynthParams to_synth_params() const;
};

RunConfig parse_config(const std::string& text, const std::string& source_name = "config");
RunConfig load_config_file(const std::string& path);
std::string serialize_config(const RunConfig& c);

/// Seed resolution: --seed flag, else explicit config value, else DDNN_SEED
/// environment variable, else the config default.
uint64_t resolve_seed(const RunConfig& cfg, const std::string& flag_seed,
                      const char* env_seed);

} // namespace ddnn
