#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ddnn/data.hpp"
#include "ddnn/exit_policy.hpp"
#include "ddnn/model.hpp"

namespace ddnn {

/// All five evaluation measures for one model/threshold/test-set combination.
/// local/cloud accuracies force every sample through that exit; overall uses
/// the entropy gate. avg_comm_bytes and local_exit_pct satisfy the
/// communication-cost identity by construction.
struct AccuracyReport {
    double local_acc = 0.0;   // percent
    double cloud_acc = 0.0;   // percent
    double overall_acc = 0.0; // percent
    std::vector<double> individual_accs; // percent, filled by sweeps that train them
    double local_exit_pct = 0.0;
    double avg_comm_bytes = 0.0;
};

struct SweepRow {
    std::string axis;
    AccuracyReport report;
    std::vector<std::string> extra; // values for SweepResult::extra_columns
};

struct SweepResult {
    std::string axis_name;
    std::vector<std::string> extra_columns;
    std::vector<SweepRow> rows;
};

/// Evaluates a trained model on a test set at threshold T. Asserts the
/// partition identity (overall correct = locally-exited correct +
/// cloud-exited correct) and the per-sample byte accounting internally.
AccuracyReport measure(const DdnnModel& model, const Dataset& test, double T,
                       const std::vector<bool>& alive = {});

/// Trains one DDNN per (local, cloud) scheme pair and reports each.
SweepResult run_aggregation_sweep(const Dataset& train_set, const Dataset& test_set,
                                  const ModelConfig& base_model, const TrainConfig& base_train,
                                  double T, int jobs = 1);

/// One row per threshold in the grid, for an already-trained model.
SweepResult run_threshold_sweep(const DdnnModel& model, const Dataset& test_set,
                                std::span<const double> grid);

struct DeviceScalingResult {
    SweepResult sweep;              // rows k=1..max_devices
    std::vector<int> device_order;  // view indices, worst to best
    std::vector<double> individual_accs; // aligned with device_order
};

/// Trains per-device individual baselines, orders devices worst-to-best by
/// individual accuracy, then trains k-device DDNNs for k = 1..6.
DeviceScalingResult run_device_scaling(const Dataset& train_set, const Dataset& test_set,
                                       const ModelConfig& base_model,
                                       const TrainConfig& base_train, double T,
                                       int jobs = 1);

/// Per filter count: train, pick T for ~75% local exits on a validation
/// split, report accuracies plus the device memory ledger.
SweepResult run_filter_sweep(const Dataset& train_set, const Dataset& test_set,
                             std::span<const int> filter_counts,
                             const ModelConfig& base_model, const TrainConfig& base_train,
                             int jobs = 1);

/// Re-evaluates a trained model under device-failure scenarios without
/// retraining. Each failure set lists the device indices that are down.
SweepResult run_fault_tolerance(const DdnnModel& model, const Dataset& test_set,
                                const std::vector<std::vector<int>>& failure_sets,
                                double T);

/// Baseline + all single-device failures (1 + n rows).
std::vector<std::vector<int>> default_failure_sets(int n_devices);

std::string sweep_csv(const SweepResult& result);

/// JSON run manifest: command, seed, config, module versions, timestamp.
std::string manifest_json(const std::string& command, uint64_t seed,
                          const std::string& config_text,
                          const std::vector<std::pair<std::string, std::string>>& outputs);

/// Runs `count` independent cells, optionally on `jobs` threads. Cell order
/// in the merged result does not depend on the job count.
void run_cells(size_t count, int jobs, const std::function<void(size_t)>& fn);

} // namespace ddnn
