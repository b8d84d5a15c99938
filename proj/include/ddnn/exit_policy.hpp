#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ddnn/data.hpp"
#include "ddnn/model.hpp"

namespace ddnn {

enum class ExitPoint { Local, Cloud };

struct ExitThresholds {
    /// Local-exit entropy threshold in [0, 1]. The cloud exit always
    /// classifies whatever reaches it.
    double local_T = 0.8;
};

/// Byte accounting: a device always ships one float per class to the local
/// aggregator; a cloud-routed sample additionally ships the packed binary
/// feature map (f filters of o elements, one bit each).
struct CommModel {
    int num_classes = kNumClasses;
    int filters = 4;
    int filter_output_elems = 256; // o; 16*16 for 32x32 inputs, one ConvP block

    static CommModel of(const DdnnModel& model);

    int64_t local_bytes() const { return 4ll * num_classes; }
    int64_t cloud_extra_bytes() const {
        return static_cast<int64_t>(filters) * filter_output_elems / 8;
    }
};

struct InferenceTrace {
    int predicted_class = 0;
    ExitPoint exit_taken = ExitPoint::Local;
    double local_entropy = 0.0;
    std::optional<double> cloud_entropy; // absent when exited locally
    int64_t bytes_sent = 0;
};

/// Shannon entropy of a probability vector divided by log(#classes), in
/// [0, 1]. Order-independent by construction (terms are summed over sorted
/// values). Rejects vectors that are not a probability distribution.
double normalized_entropy(std::span<const float> probs);
double normalized_entropy(std::span<const double> probs);

/// Exit when the predictor is confident: eta <= T (boundary exits).
bool should_exit(double eta, double T);

/// Average per-device communication cost in bytes for a local-exit fraction
/// l in [0, 1]:  c = 4*|C| + (1 - l) * f*o/8.
double comm_cost(double local_exit_fraction, const CommModel& comm);

/// Half-up rounding used for reported byte averages.
int64_t round_half_up(double v);

/// Test hook: counts how often each stage ran.
struct EvalCounters {
    int64_t local_evals = 0;
    int64_t cloud_evals = 0;
};

/// The staged inference procedure: device heads -> local aggregation ->
/// entropy gate -> (maybe) binarized features to the cloud stack. The cloud
/// side is evaluated only when the local gate declines to exit.
InferenceTrace hierarchical_infer(const DdnnModel& model, const MultiViewSample& sample,
                                  const ExitThresholds& thresholds, const CommModel& comm,
                                  EvalCounters* counters = nullptr,
                                  const std::vector<bool>& alive = {});

/// Batched evaluation of a whole dataset at one threshold; identical
/// per-sample semantics to hierarchical_infer (batch-size independence of
/// infer-mode forward).
std::vector<InferenceTrace> infer_dataset(const DdnnModel& model, const Dataset& ds,
                                          const ExitThresholds& thresholds,
                                          const CommModel& comm,
                                          const std::vector<bool>& alive = {});

/// Per-sample local entropy plus both exit predictions for a whole dataset.
/// One forward pass, reused by threshold scans and accuracy measures.
struct DatasetRouting {
    std::vector<double> local_entropy;
    std::vector<int> local_pred;
    std::vector<int> cloud_pred;
};

DatasetRouting route_dataset(const DdnnModel& model, const Dataset& ds,
                             const std::vector<bool>& alive = {});

/// Grid search for the threshold with the best overall accuracy on a
/// validation set; ties break toward the larger T (more local exits).
double threshold_search(const DdnnModel& model, const Dataset& validation,
                        std::span<const double> grid);

/// Largest achievable threshold whose local-exit fraction on `validation`
/// is closest to `target_fraction`.
double threshold_for_local_fraction(const DdnnModel& model, const Dataset& validation,
                                    double target_fraction);

/// CSV export: sample_id, predicted, true, exit, local_entropy, bytes.
std::string traces_csv(const Dataset& ds, const std::vector<InferenceTrace>& traces);

} // namespace ddnn
