#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ddnn/adam.hpp"
#include "ddnn/binary.hpp"
#include "ddnn/data.hpp"
#include "ddnn/ops.hpp"
#include "ddnn/rng.hpp"
#include "ddnn/tensor.hpp"

namespace ddnn {

enum class Agg { MP, AP, CC };

std::string agg_name(Agg a);
Agg agg_from_name(const std::string& name);

/// ConvP block: binary 3x3 conv (stride 1, pad 1) + 3x3/stride-2 max pool +
/// batch norm + sign activation. Halves the spatial size.
/// Running BN statistics are mutable: Train-mode forwards fold batch stats
/// into them, Infer-mode forwards are read-only (and thread-safe).
struct ConvPBlock {
    BinaryWeights w; // FxCx3x3
    Tensor bn_gamma, bn_beta;
    mutable BnState bn;

    static ConvPBlock init(int filters, int in_channels, Rng& rng);
    Tensor forward(const Tensor& x, Mode mode) const;
};

/// One end device: a ConvP block over its 32x32 view plus an exit head that
/// maps the f*16*16 binary activations to a per-class float vector. The head
/// is a binary FC layer whose batch-norm output (pre-binarization floats) is
/// what the device ships to the local aggregator.
struct DeviceBranch {
    ConvPBlock conv;       // f filters over 3 input channels
    BinaryWeights head_w;  // (f*16*16) x C
    Tensor head_bn_gamma, head_bn_beta;
    mutable BnState head_bn;

    static DeviceBranch init(int filters, int num_classes, Rng& rng);

    /// Binary feature maps, N x f x 16 x 16.
    Tensor forward_features(const Tensor& x, Mode mode) const;
    /// Float class-score vector, N x C.
    Tensor forward_head(const Tensor& features, Mode mode) const;
};

/// Bytes an end device must store: packed conv bits, conv BN floats, packed
/// head bits, head BN floats.
size_t device_memory_bytes(const DeviceBranch& branch);

struct ModelConfig {
    int devices = 6; // 1..16; views repeat modulo 6 beyond six devices
    int filters = 4;
    int num_classes = kNumClasses;
    Agg scheme_local = Agg::MP;
    Agg scheme_cloud = Agg::CC;
    float exit_weight_local = 1.0f;
    float exit_weight_cloud = 1.0f;
};

struct ForwardResult {
    Tensor local_logits;                // N x C
    Tensor cloud_logits;                // N x C (undefined in local-only pass)
    std::vector<Tensor> device_features; // per device, N x f x 16 x 16
};

/**
 * The full partitioned network: per-device branches, a local aggregator over
 * the exit-head vectors, and a cloud side (feature aggregator, two ConvP
 * blocks, float FC exit head). Exactly two exit points.
 */
class DdnnModel {
public:
    static DdnnModel make(const ModelConfig& cfg, uint64_t seed);

    const ModelConfig& config() const { return cfg_; }
    int n_devices() const { return cfg_.devices; }
    int filters() const { return cfg_.filters; }
    int num_classes() const { return cfg_.num_classes; }

    /// View index read by a branch (identity modulo kViewsPerSample unless
    /// remapped for device-scaling studies).
    const std::vector<int>& view_map() const { return view_map_; }
    void set_view_map(std::vector<int> vm);

    /// Device feature maps + local exit logits. `alive` masks failed devices
    /// (empty = all alive): MP/AP aggregate the survivors, CC zero-fills.
    ForwardResult forward_local(const std::vector<Tensor>& device_inputs, Mode mode,
                                const std::vector<bool>& alive = {}) const;

    /// Cloud exit logits from the device features of forward_local.
    Tensor forward_cloud(const std::vector<Tensor>& device_features, Mode mode,
                         const std::vector<bool>& alive = {}) const;

    /// Both exits in one pass.
    ForwardResult forward(const std::vector<Tensor>& device_inputs, Mode mode,
                          const std::vector<bool>& alive = {}) const;

    /// Weighted sum of the two softmax cross entropy exit losses.
    Tensor joint_loss(const Tensor& local_logits, const Tensor& cloud_logits,
                      const std::vector<int>& labels) const;

    std::vector<Tensor> parameters() const;
    std::vector<BinaryWeights*> binary_weights();

    std::vector<DeviceBranch>& branches() { return branches_; }
    const std::vector<DeviceBranch>& branches() const { return branches_; }

    /// Builds the N x 3 x 32 x 32 input for one branch from sample views,
    /// normalized to [-1, 1] (x/127.5 - 1).
    Tensor device_input(const std::vector<const MultiViewSample*>& batch,
                        int branch_index) const;

    // Checkpoint io (sectioned binary format; see serialize_checkpoint).
    friend std::vector<uint8_t> serialize_checkpoint(const DdnnModel& m);
    friend DdnnModel deserialize_checkpoint(const std::vector<uint8_t>& bytes);

private:
    ModelConfig cfg_;
    std::vector<DeviceBranch> branches_;
    std::vector<int> view_map_;

    // Local CC projection (n*C -> C) when scheme_local == CC.
    Tensor local_proj_w_, local_proj_b_;
    // Cloud CC projection: 1x1 channel mix (n*f -> f) when scheme_cloud == CC.
    Tensor cloud_proj_w_, cloud_proj_b_;

    // Cloud stack: two ConvP blocks and a float FC exit head.
    ConvPBlock cloud_b1_; // 8 filters
    ConvPBlock cloud_b2_; // 16 filters
    Tensor cloud_fc_w_, cloud_fc_b_;
};

// --- training ----------------------------------------------------------------

struct TrainConfig {
    int epochs = 100;
    int batch_size = 32;
    AdamParams adam;
    uint64_t seed = 1;
};

struct EpochStats {
    double local_loss = 0.0;
    double cloud_loss = 0.0;
    double joint_loss = 0.0;
    double local_acc = 0.0; // training accuracy at the local exit, percent
    double cloud_acc = 0.0;
};

using TrainHistory = std::vector<EpochStats>;

/// Joint end-to-end training. Deterministic for a fixed seed. Absent views
/// enter as the blank image; supervision uses the global label only.
TrainHistory train(DdnnModel& model, const Dataset& train_set, const TrainConfig& cfg);

// --- individual baseline -------------------------------------------------------

/// A standalone single-device classifier (ConvP + FC head), the "Individual"
/// baseline. Trained only on samples where its device sees the object.
struct IndividualModel {
    int view_index = 0;
    DeviceBranch branch;

    int predict(const MultiViewSample& s) const;
};

IndividualModel train_individual(int view_index, const Dataset& train_set,
                                 const TrainConfig& cfg, int filters,
                                 int num_classes = kNumClasses);

/// Accuracy (percent) of an individual model over every sample in `ds`.
double individual_accuracy(const IndividualModel& m, const Dataset& ds);

// --- checkpoint io --------------------------------------------------------------

std::vector<uint8_t> serialize_checkpoint(const DdnnModel& m);
DdnnModel deserialize_checkpoint(const std::vector<uint8_t>& bytes);
void save_checkpoint(const DdnnModel& m, const std::string& path);
DdnnModel load_checkpoint(const std::string& path);

} // namespace ddnn
