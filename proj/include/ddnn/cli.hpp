#pragma once

#include <string>

#include "ddnn/config.hpp"

namespace ddnn {

/// Generates the synthetic dataset into <out>/dataset and prints the
/// per-device class distribution.
int cmd_gen_data(const RunConfig& cfg);

/// Trains a DDNN per the config; writes checkpoint.bin, history.csv and
/// manifest.json into the output directory.
int cmd_train(const RunConfig& cfg);

/// Runs staged inference over a dataset directory (optionally one sample) at
/// threshold T; writes traces.csv and prints a summary line.
int cmd_infer(const RunConfig& cfg, const std::string& checkpoint_path,
              const std::string& data_dir, const std::string& sample_id, double threshold);

/// Runs one of the experiment sweeps:
/// aggregation | threshold | devices | filters | fault.
/// threshold and fault require a checkpoint.
int cmd_sweep(const RunConfig& cfg, const std::string& kind,
              const std::string& checkpoint_path);

/// Full argv entry point. Exit codes: 0 ok, 1 validation error, 2 internal
/// invariant violation.
int run_cli(int argc, char** argv);

/// Loads the train/test pair named by the config (synthetic when
/// data.path is empty), split deterministically from the config seed.
std::pair<Dataset, Dataset> load_split_datasets(const RunConfig& cfg);

void write_text_file(const std::string& path, const std::string& content);

} // namespace ddnn
