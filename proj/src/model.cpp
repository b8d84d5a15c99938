#include "ddnn/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "ddnn/errors.hpp"

namespace ddnn {

namespace {
constexpr int kCloudFilters1 = 8;
constexpr int kCloudFilters2 = 16;
constexpr int kFeatureSide = kImageSide / 2;                       // 16
constexpr int kFeatureElems = kFeatureSide * kFeatureSide;         // 256
constexpr int kCloudFlat = kCloudFilters2 * (kImageSide / 8) * (kImageSide / 8); // 256

Tensor uniform_init(std::vector<int> shape, int fan_in, Rng& rng) {
    const float s = std::sqrt(1.0f / static_cast<float>(fan_in));
    std::vector<float> data(static_cast<size_t>(Tensor::shape_numel(shape)));
    for (auto& v : data) v = rng.uniform(-s, s);
    return Tensor::from(std::move(shape), std::move(data), /*requires_grad=*/true);
}

} // namespace

std::string agg_name(Agg a) {
    switch (a) {
        case Agg::MP: return "mp";
        case Agg::AP: return "ap";
        case Agg::CC: return "cc";
    }
    return "?";
}

Agg agg_from_name(const std::string& name) {
    if (name == "mp" || name == "MP") return Agg::MP;
    if (name == "ap" || name == "AP") return Agg::AP;
    if (name == "cc" || name == "CC") return Agg::CC;
    throw ValidationError("unknown aggregation scheme '" + name + "' (want mp|ap|cc)");
}

// ---------------------------------------------------------------------------
// blocks

ConvPBlock ConvPBlock::init(int filters, int in_channels, Rng& rng) {
    ConvPBlock b;
    b.w = BinaryWeights::init({filters, in_channels, 3, 3}, in_channels * 9, rng);
    b.bn_gamma = Tensor::full({filters}, 1.0f, true);
    b.bn_beta = Tensor::zeros({filters}, true);
    b.bn = BnState::make(filters);
    return b;
}

Tensor ConvPBlock::forward(const Tensor& x, Mode mode) const {
    Tensor h = conv2d_3x3(x, binarize(w.latent));
    h = maxpool_3x3_s2(h);
    h = batch_norm(h, bn_gamma, bn_beta, bn, mode);
    return binarize(h);
}

DeviceBranch DeviceBranch::init(int filters, int num_classes, Rng& rng) {
    DeviceBranch d;
    d.conv = ConvPBlock::init(filters, 3, rng);
    const int flat = filters * kFeatureElems;
    d.head_w = BinaryWeights::init({flat, num_classes}, flat, rng);
    d.head_bn_gamma = Tensor::full({num_classes}, 1.0f, true);
    d.head_bn_beta = Tensor::zeros({num_classes}, true);
    d.head_bn = BnState::make(num_classes);
    return d;
}

Tensor DeviceBranch::forward_features(const Tensor& x, Mode mode) const {
    return conv.forward(x, mode);
}

Tensor DeviceBranch::forward_head(const Tensor& features, Mode mode) const {
    Tensor v = flatten2(features);
    v = matmul(v, binarize(head_w.latent));
    // The exit output stays float: batch-norm output, no binary activation.
    return batch_norm(v, head_bn_gamma, head_bn_beta, head_bn, mode);
}

size_t device_memory_bytes(const DeviceBranch& branch) {
    const size_t f = static_cast<size_t>(branch.conv.w.shape[0]);
    const size_t c = static_cast<size_t>(branch.head_w.shape[1]);
    size_t total = branch.conv.w.packed_bytes();
    total += 4 * f * sizeof(float); // conv BN: gamma, beta, running mean/var
    total += branch.head_w.packed_bytes();
    total += 4 * c * sizeof(float); // head BN
    return total;
}

// ---------------------------------------------------------------------------
// model

DdnnModel DdnnModel::make(const ModelConfig& cfg, uint64_t seed) {
    if (cfg.devices < 1 || cfg.devices > 16)
        throw ValidationError("devices must be in 1..16");
    if (cfg.filters < 1) throw ValidationError("filters must be >= 1");
    if (cfg.num_classes < 2) throw ValidationError("need at least 2 classes");
    if (!(cfg.exit_weight_local > 0.0f) || !(cfg.exit_weight_cloud > 0.0f))
        throw ValidationError("exit weights must be > 0");

    DdnnModel m;
    m.cfg_ = cfg;
    Rng rng(Rng::derive(seed, "init"));

    for (int d = 0; d < cfg.devices; ++d)
        m.branches_.push_back(DeviceBranch::init(cfg.filters, cfg.num_classes, rng));
    m.view_map_.resize(static_cast<size_t>(cfg.devices));
    for (int d = 0; d < cfg.devices; ++d) m.view_map_[d] = d % kViewsPerSample;

    if (cfg.scheme_local == Agg::CC) {
        const int in = cfg.devices * cfg.num_classes;
        m.local_proj_w_ = uniform_init({in, cfg.num_classes}, in, rng);
        m.local_proj_b_ = Tensor::zeros({cfg.num_classes}, true);
    }
    if (cfg.scheme_cloud == Agg::CC) {
        const int in = cfg.devices * cfg.filters;
        m.cloud_proj_w_ = uniform_init({cfg.filters, in}, in, rng);
        m.cloud_proj_b_ = Tensor::zeros({cfg.filters}, true);
    }
    m.cloud_b1_ = ConvPBlock::init(kCloudFilters1, cfg.filters, rng);
    m.cloud_b2_ = ConvPBlock::init(kCloudFilters2, kCloudFilters1, rng);
    m.cloud_fc_w_ = uniform_init({kCloudFlat, cfg.num_classes}, kCloudFlat, rng);
    m.cloud_fc_b_ = Tensor::zeros({cfg.num_classes}, true);
    return m;
}

void DdnnModel::set_view_map(std::vector<int> vm) {
    if (static_cast<int>(vm.size()) != cfg_.devices)
        throw InvariantError("view map length must equal device count");
    for (int v : vm)
        if (v < 0 || v >= kViewsPerSample)
            throw InvariantError("view map entry out of range");
    view_map_ = std::move(vm);
}

Tensor DdnnModel::device_input(const std::vector<const MultiViewSample*>& batch,
                               int branch_index) const {
    const int view = view_map_.at(static_cast<size_t>(branch_index));
    const int n = static_cast<int>(batch.size());
    Tensor t = Tensor::zeros({n, 3, kImageSide, kImageSide});
    float* out = t.data().data();
    for (int i = 0; i < n; ++i) {
        const auto& img = batch[static_cast<size_t>(i)]->views[static_cast<size_t>(view)];
        for (int c = 0; c < 3; ++c) {
            float* dst = out + ((static_cast<int64_t>(i) * 3 + c) * kImageSide) * kImageSide;
            for (int p = 0; p < kImageSide * kImageSide; ++p)
                dst[p] = static_cast<float>(img[static_cast<size_t>(p) * 3 +
                                                static_cast<size_t>(c)]) /
                             127.5f -
                         1.0f;
        }
    }
    return t;
}

namespace {

std::vector<bool> resolve_alive(const std::vector<bool>& alive, int n) {
    if (alive.empty()) return std::vector<bool>(static_cast<size_t>(n), true);
    if (static_cast<int>(alive.size()) != n)
        throw InvariantError("alive mask length must equal device count");
    if (std::none_of(alive.begin(), alive.end(), [](bool b) { return b; }))
        throw InvariantError("all devices failed: nothing to aggregate");
    return alive;
}

std::vector<Tensor> alive_subset(const std::vector<Tensor>& xs,
                                 const std::vector<bool>& alive) {
    std::vector<Tensor> out;
    for (size_t i = 0; i < xs.size(); ++i)
        if (alive[i]) out.push_back(xs[i]);
    return out;
}

} // namespace

ForwardResult DdnnModel::forward_local(const std::vector<Tensor>& device_inputs,
                                       Mode mode, const std::vector<bool>& alive_in) const {
    if (static_cast<int>(device_inputs.size()) != cfg_.devices)
        throw InvariantError("view-count mismatch: model has " +
                             std::to_string(cfg_.devices) + " devices, got " +
                             std::to_string(device_inputs.size()) + " inputs");
    const auto alive = resolve_alive(alive_in, cfg_.devices);
    const int n = device_inputs[0].dim(0);

    ForwardResult r;
    std::vector<Tensor> heads(static_cast<size_t>(cfg_.devices));
    r.device_features.resize(static_cast<size_t>(cfg_.devices));
    for (int d = 0; d < cfg_.devices; ++d) {
        if (alive[static_cast<size_t>(d)]) {
            r.device_features[d] = branches_[d].forward_features(device_inputs[d], mode);
            heads[d] = branches_[d].forward_head(r.device_features[d], mode);
        } else {
            // Failed device: CC slots are zero-filled, MP/AP skip it entirely.
            r.device_features[d] =
                Tensor::zeros({n, cfg_.filters, kFeatureSide, kFeatureSide});
            heads[d] = Tensor::zeros({n, cfg_.num_classes});
        }
    }

    switch (cfg_.scheme_local) {
        case Agg::MP: r.local_logits = aggregate_mp(alive_subset(heads, alive)); break;
        case Agg::AP: r.local_logits = aggregate_ap(alive_subset(heads, alive)); break;
        case Agg::CC:
            r.local_logits = aggregate_cc(heads, local_proj_w_, local_proj_b_);
            break;
    }
    return r;
}

Tensor DdnnModel::forward_cloud(const std::vector<Tensor>& device_features, Mode mode,
                                const std::vector<bool>& alive_in) const {
    if (static_cast<int>(device_features.size()) != cfg_.devices)
        throw InvariantError("feature-count mismatch in forward_cloud");
    const auto alive = resolve_alive(alive_in, cfg_.devices);

    Tensor agg;
    switch (cfg_.scheme_cloud) {
        case Agg::MP: agg = aggregate_mp(alive_subset(device_features, alive)); break;
        case Agg::AP: agg = aggregate_ap(alive_subset(device_features, alive)); break;
        case Agg::CC: {
            Tensor cat = concat_dim1(device_features);
            agg = conv1x1(cat, cloud_proj_w_, cloud_proj_b_);
            break;
        }
    }
    Tensor h = cloud_b1_.forward(agg, mode);
    h = cloud_b2_.forward(h, mode);
    h = flatten2(h);
    return add_rowvec(matmul(h, cloud_fc_w_), cloud_fc_b_);
}

ForwardResult DdnnModel::forward(const std::vector<Tensor>& device_inputs, Mode mode,
                                 const std::vector<bool>& alive) const {
    ForwardResult r = forward_local(device_inputs, mode, alive);
    r.cloud_logits = forward_cloud(r.device_features, mode, alive);
    return r;
}

Tensor DdnnModel::joint_loss(const Tensor& local_logits, const Tensor& cloud_logits,
                             const std::vector<int>& labels) const {
    const Tensor y = one_hot(labels, cfg_.num_classes);
    const Tensor l_local = softmax_cross_entropy(local_logits, y);
    const Tensor l_cloud = softmax_cross_entropy(cloud_logits, y);
    return add(scale(l_local, cfg_.exit_weight_local),
               scale(l_cloud, cfg_.exit_weight_cloud));
}

std::vector<Tensor> DdnnModel::parameters() const {
    std::vector<Tensor> p;
    for (const auto& b : branches_) {
        p.push_back(b.conv.w.latent);
        p.push_back(b.conv.bn_gamma);
        p.push_back(b.conv.bn_beta);
        p.push_back(b.head_w.latent);
        p.push_back(b.head_bn_gamma);
        p.push_back(b.head_bn_beta);
    }
    if (cfg_.scheme_local == Agg::CC) {
        p.push_back(local_proj_w_);
        p.push_back(local_proj_b_);
    }
    if (cfg_.scheme_cloud == Agg::CC) {
        p.push_back(cloud_proj_w_);
        p.push_back(cloud_proj_b_);
    }
    p.push_back(cloud_b1_.w.latent);
    p.push_back(cloud_b1_.bn_gamma);
    p.push_back(cloud_b1_.bn_beta);
    p.push_back(cloud_b2_.w.latent);
    p.push_back(cloud_b2_.bn_gamma);
    p.push_back(cloud_b2_.bn_beta);
    p.push_back(cloud_fc_w_);
    p.push_back(cloud_fc_b_);
    return p;
}

std::vector<BinaryWeights*> DdnnModel::binary_weights() {
    std::vector<BinaryWeights*> w;
    for (auto& b : branches_) {
        w.push_back(&b.conv.w);
        w.push_back(&b.head_w);
    }
    w.push_back(&cloud_b1_.w);
    w.push_back(&cloud_b2_.w);
    return w;
}

// ---------------------------------------------------------------------------
// training

namespace {

int64_t count_correct(const Tensor& logits, const std::vector<int>& labels) {
    const int n = logits.dim(0), c = logits.dim(1);
    int64_t correct = 0;
    for (int i = 0; i < n; ++i) {
        const float* row = logits.data().data() + static_cast<int64_t>(i) * c;
        int best = 0;
        for (int k = 1; k < c; ++k)
            if (row[k] > row[best]) best = k;
        if (best == labels[static_cast<size_t>(i)]) ++correct;
    }
    return correct;
}

} // namespace

TrainHistory train(DdnnModel& model, const Dataset& train_set, const TrainConfig& cfg) {
    if (train_set.samples.empty()) throw ValidationError("training set is empty");
    if (cfg.epochs < 1 || cfg.batch_size < 1)
        throw ValidationError("epochs and batch size must be >= 1");

    AdamOptimizer opt(cfg.adam);
    for (const auto& p : model.parameters()) opt.register_param(p);
    auto bins = model.binary_weights();

    Rng shuffle_rng(Rng::derive(cfg.seed, "shuffle"));
    const int64_t n = static_cast<int64_t>(train_set.size());
    std::vector<size_t> order(static_cast<size_t>(n));
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;

    TrainHistory history;
    history.reserve(static_cast<size_t>(cfg.epochs));
    const float wl = model.config().exit_weight_local;
    const float wc = model.config().exit_weight_cloud;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        EpochStats st;
        int64_t correct_local = 0, correct_cloud = 0;

        for (int64_t start = 0; start < n; start += cfg.batch_size) {
            const int64_t stop = std::min<int64_t>(start + cfg.batch_size, n);
            std::vector<const MultiViewSample*> batch;
            std::vector<int> labels;
            for (int64_t i = start; i < stop; ++i) {
                const auto& s = train_set.samples[order[static_cast<size_t>(i)]];
                batch.push_back(&s);
                labels.push_back(s.global_label);
            }

            std::vector<Tensor> inputs;
            for (int d = 0; d < model.n_devices(); ++d)
                inputs.push_back(model.device_input(batch, d));

            ForwardResult fwd = model.forward(inputs, Mode::Train);
            const Tensor y = one_hot(labels, model.num_classes());
            Tensor l_local = softmax_cross_entropy(fwd.local_logits, y);
            Tensor l_cloud = softmax_cross_entropy(fwd.cloud_logits, y);
            Tensor loss = add(scale(l_local, wl), scale(l_cloud, wc));

            opt.zero_grad();
            loss.backward();
            opt.step();
            for (auto* bw : bins) {
                bw->clip_latent();
                bw->refresh_bits();
            }

            const auto bn = static_cast<double>(stop - start);
            st.local_loss += l_local.item() * bn;
            st.cloud_loss += l_cloud.item() * bn;
            st.joint_loss += loss.item() * bn;
            correct_local += count_correct(fwd.local_logits, labels);
            correct_cloud += count_correct(fwd.cloud_logits, labels);
        }

        const double dn = static_cast<double>(n);
        st.local_loss /= dn;
        st.cloud_loss /= dn;
        st.joint_loss /= dn;
        st.local_acc = 100.0 * static_cast<double>(correct_local) / dn;
        st.cloud_acc = 100.0 * static_cast<double>(correct_cloud) / dn;
        history.push_back(st);
    }
    return history;
}

// ---------------------------------------------------------------------------
// individual baseline

int IndividualModel::predict(const MultiViewSample& s) const {
    NoGradGuard ng;
    Tensor x = Tensor::zeros({1, 3, kImageSide, kImageSide});
    const auto& img = s.views[static_cast<size_t>(view_index)];
    for (int c = 0; c < 3; ++c)
        for (int p = 0; p < kImageSide * kImageSide; ++p)
            x.data()[static_cast<size_t>(c) * kImageSide * kImageSide +
                     static_cast<size_t>(p)] =
                static_cast<float>(img[static_cast<size_t>(p) * 3 +
                                       static_cast<size_t>(c)]) /
                    127.5f -
                1.0f;
    Tensor h = branch.forward_head(branch.forward_features(x, Mode::Infer), Mode::Infer);
    const float* row = h.data().data();
    int best = 0;
    for (int k = 1; k < h.dim(1); ++k)
        if (row[k] > row[best]) best = k;
    return best;
}

IndividualModel train_individual(int view_index, const Dataset& train_set,
                                 const TrainConfig& cfg, int filters, int num_classes) {
    if (view_index < 0 || view_index >= kViewsPerSample)
        throw ValidationError("view index out of range");
    std::vector<const MultiViewSample*> present;
    for (const auto& s : train_set.samples)
        if (s.device_labels[static_cast<size_t>(view_index)] != -1) present.push_back(&s);
    if (present.empty())
        throw ValidationError("no samples with the object present on device " +
                              std::to_string(view_index));

    Rng init_rng(Rng::derive(cfg.seed, "individual-" + std::to_string(view_index)));
    IndividualModel m;
    m.view_index = view_index;
    m.branch = DeviceBranch::init(filters, num_classes, init_rng);

    AdamOptimizer opt(cfg.adam);
    opt.register_param(m.branch.conv.w.latent);
    opt.register_param(m.branch.conv.bn_gamma);
    opt.register_param(m.branch.conv.bn_beta);
    opt.register_param(m.branch.head_w.latent);
    opt.register_param(m.branch.head_bn_gamma);
    opt.register_param(m.branch.head_bn_beta);

    Rng shuffle_rng(
        Rng::derive(cfg.seed, "individual-shuffle-" + std::to_string(view_index)));
    std::vector<size_t> order(present.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        for (size_t start = 0; start < present.size();
             start += static_cast<size_t>(cfg.batch_size)) {
            const size_t stop =
                std::min(start + static_cast<size_t>(cfg.batch_size), present.size());
            const int bn = static_cast<int>(stop - start);
            Tensor x = Tensor::zeros({bn, 3, kImageSide, kImageSide});
            std::vector<int> labels;
            for (size_t i = start; i < stop; ++i) {
                const auto* s = present[order[i]];
                labels.push_back(s->global_label);
                const auto& img = s->views[static_cast<size_t>(view_index)];
                float* dst = x.data().data() +
                             (static_cast<int64_t>(i - start) * 3) * kImageSide * kImageSide;
                for (int c = 0; c < 3; ++c)
                    for (int p = 0; p < kImageSide * kImageSide; ++p)
                        dst[static_cast<int64_t>(c) * kImageSide * kImageSide + p] =
                            static_cast<float>(img[static_cast<size_t>(p) * 3 +
                                                   static_cast<size_t>(c)]) /
                                127.5f -
                            1.0f;
            }
            Tensor h = m.branch.forward_head(
                m.branch.forward_features(x, Mode::Train), Mode::Train);
            Tensor loss = softmax_cross_entropy(h, one_hot(labels, num_classes));
            opt.zero_grad();
            loss.backward();
            opt.step();
            m.branch.conv.w.clip_latent();
            m.branch.conv.w.refresh_bits();
            m.branch.head_w.clip_latent();
            m.branch.head_w.refresh_bits();
        }
    }
    return m;
}

double individual_accuracy(const IndividualModel& m, const Dataset& ds) {
    if (ds.samples.empty()) throw ValidationError("individual_accuracy: empty dataset");
    NoGradGuard ng;
    int64_t correct = 0;
    constexpr size_t kChunk = 64;
    for (size_t start = 0; start < ds.samples.size(); start += kChunk) {
        const size_t stop = std::min(start + kChunk, ds.samples.size());
        const int bn = static_cast<int>(stop - start);
        Tensor x = Tensor::zeros({bn, 3, kImageSide, kImageSide});
        for (size_t i = start; i < stop; ++i) {
            const auto& img =
                ds.samples[i].views[static_cast<size_t>(m.view_index)];
            float* dst = x.data().data() +
                         (static_cast<int64_t>(i - start) * 3) * kImageSide * kImageSide;
            for (int c = 0; c < 3; ++c)
                for (int p = 0; p < kImageSide * kImageSide; ++p)
                    dst[static_cast<int64_t>(c) * kImageSide * kImageSide + p] =
                        static_cast<float>(img[static_cast<size_t>(p) * 3 +
                                               static_cast<size_t>(c)]) /
                            127.5f -
                        1.0f;
        }
        Tensor h =
            m.branch.forward_head(m.branch.forward_features(x, Mode::Infer), Mode::Infer);
        for (int i = 0; i < bn; ++i) {
            const float* row = h.data().data() + static_cast<int64_t>(i) * h.dim(1);
            int best = 0;
            for (int k = 1; k < h.dim(1); ++k)
                if (row[k] > row[best]) best = k;
            if (best == ds.samples[start + static_cast<size_t>(i)].global_label)
                ++correct;
        }
    }
    return 100.0 * static_cast<double>(correct) / static_cast<double>(ds.samples.size());
}

// ---------------------------------------------------------------------------
// checkpoint format
//
// Little-endian sectioned binary:
//   magic "DDNN" | u32 version | u32 n_devices | u32 filters | u32 n_classes
//   u8 scheme_local | u8 scheme_cloud | u16 reserved
//   f32 exit_weight_local | f32 exit_weight_cloud
//   packed binary weights: per branch conv bits then head bits, then the two
//     cloud ConvP blocks
//   float parameters: per branch conv BN (gamma, beta, run mean, run var) and
//     head BN; local CC projection (w, b) when present; cloud CC projection
//     (w, b) when present; cloud BN1; cloud BN2; cloud FC (w, b)

namespace {

constexpr uint32_t kCheckpointVersion = 1;

void put_u32(std::vector<uint8_t>& out, uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<uint8_t>((v >> (8 * i)) & 0xff));
}

void put_f32(std::vector<uint8_t>& out, float f) {
    put_u32(out, std::bit_cast<uint32_t>(f));
}

void put_floats(std::vector<uint8_t>& out, const std::vector<float>& v) {
    for (float f : v) put_f32(out, f);
}

struct Reader {
    const std::vector<uint8_t>& buf;
    size_t pos = 0;

    void need(size_t n) const {
        if (pos + n > buf.size())
            throw ValidationError("checkpoint truncated at byte " + std::to_string(pos));
    }
    uint8_t u8() {
        need(1);
        return buf[pos++];
    }
    uint32_t u32() {
        need(4);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(buf[pos++]) << (8 * i);
        return v;
    }
    float f32() { return std::bit_cast<float>(u32()); }
    std::vector<uint8_t> bytes(size_t n) {
        need(n);
        std::vector<uint8_t> v(buf.begin() + static_cast<int64_t>(pos),
                               buf.begin() + static_cast<int64_t>(pos + n));
        pos += n;
        return v;
    }
    std::vector<float> floats(size_t n) {
        std::vector<float> v(n);
        for (auto& f : v) f = f32();
        return v;
    }
};

void put_bn(std::vector<uint8_t>& out, const Tensor& gamma, const Tensor& beta,
            const BnState& st) {
    put_floats(out, gamma.data());
    put_floats(out, beta.data());
    put_floats(out, st.run_mean);
    put_floats(out, st.run_var);
}

void get_bn(Reader& r, Tensor& gamma, Tensor& beta, BnState& st, size_t c) {
    gamma.data() = r.floats(c);
    beta.data() = r.floats(c);
    st.run_mean = r.floats(c);
    st.run_var = r.floats(c);
}

} // namespace

std::vector<uint8_t> serialize_checkpoint(const DdnnModel& m) {
    for (int d = 0; d < m.cfg_.devices; ++d)
        if (m.view_map_[static_cast<size_t>(d)] != d % kViewsPerSample)
            throw ValidationError("checkpoints only support the default view mapping");

    std::vector<uint8_t> out;
    out.push_back('D');
    out.push_back('D');
    out.push_back('N');
    out.push_back('N');
    put_u32(out, kCheckpointVersion);
    put_u32(out, static_cast<uint32_t>(m.cfg_.devices));
    put_u32(out, static_cast<uint32_t>(m.cfg_.filters));
    put_u32(out, static_cast<uint32_t>(m.cfg_.num_classes));
    out.push_back(static_cast<uint8_t>(m.cfg_.scheme_local));
    out.push_back(static_cast<uint8_t>(m.cfg_.scheme_cloud));
    out.push_back(0);
    out.push_back(0);
    put_f32(out, m.cfg_.exit_weight_local);
    put_f32(out, m.cfg_.exit_weight_cloud);

    for (const auto& b : m.branches_) {
        auto conv_bits = BinaryWeights::pack(b.conv.w.latent.data());
        auto head_bits = BinaryWeights::pack(b.head_w.latent.data());
        out.insert(out.end(), conv_bits.begin(), conv_bits.end());
        out.insert(out.end(), head_bits.begin(), head_bits.end());
    }
    auto c1 = BinaryWeights::pack(m.cloud_b1_.w.latent.data());
    auto c2 = BinaryWeights::pack(m.cloud_b2_.w.latent.data());
    out.insert(out.end(), c1.begin(), c1.end());
    out.insert(out.end(), c2.begin(), c2.end());

    for (const auto& b : m.branches_) {
        put_bn(out, b.conv.bn_gamma, b.conv.bn_beta, b.conv.bn);
        put_bn(out, b.head_bn_gamma, b.head_bn_beta, b.head_bn);
    }
    if (m.cfg_.scheme_local == Agg::CC) {
        put_floats(out, m.local_proj_w_.data());
        put_floats(out, m.local_proj_b_.data());
    }
    if (m.cfg_.scheme_cloud == Agg::CC) {
        put_floats(out, m.cloud_proj_w_.data());
        put_floats(out, m.cloud_proj_b_.data());
    }
    put_bn(out, m.cloud_b1_.bn_gamma, m.cloud_b1_.bn_beta, m.cloud_b1_.bn);
    put_bn(out, m.cloud_b2_.bn_gamma, m.cloud_b2_.bn_beta, m.cloud_b2_.bn);
    put_floats(out, m.cloud_fc_w_.data());
    put_floats(out, m.cloud_fc_b_.data());
    return out;
}

DdnnModel deserialize_checkpoint(const std::vector<uint8_t>& bytes) {
    Reader r{bytes};
    const auto magic = r.bytes(4);
    if (magic != std::vector<uint8_t>{'D', 'D', 'N', 'N'})
        throw ValidationError("not a DDNN checkpoint (bad magic)");
    const uint32_t version = r.u32();
    if (version != kCheckpointVersion)
        throw ValidationError("unsupported checkpoint version " + std::to_string(version));

    ModelConfig cfg;
    cfg.devices = static_cast<int>(r.u32());
    cfg.filters = static_cast<int>(r.u32());
    cfg.num_classes = static_cast<int>(r.u32());
    const uint8_t sl = r.u8(), sc = r.u8();
    r.u8();
    r.u8();
    if (sl > 2 || sc > 2) throw ValidationError("checkpoint has unknown aggregation scheme");
    cfg.scheme_local = static_cast<Agg>(sl);
    cfg.scheme_cloud = static_cast<Agg>(sc);
    cfg.exit_weight_local = r.f32();
    cfg.exit_weight_cloud = r.f32();
    if (cfg.devices < 1 || cfg.devices > 16 || cfg.filters < 1 || cfg.filters > 4096 ||
        cfg.num_classes < 2 || cfg.num_classes > 4096)
        throw ValidationError("checkpoint header out of range");

    DdnnModel m = DdnnModel::make(cfg, /*seed=*/0);

    const int flat = cfg.filters * kFeatureElems;
    for (auto& b : m.branches_) {
        b.conv.w = BinaryWeights::from_bits(
            {cfg.filters, 3, 3, 3},
            r.bytes((static_cast<size_t>(cfg.filters) * 27 + 7) / 8));
        b.head_w = BinaryWeights::from_bits(
            {flat, cfg.num_classes},
            r.bytes((static_cast<size_t>(flat) * cfg.num_classes + 7) / 8));
    }
    m.cloud_b1_.w = BinaryWeights::from_bits(
        {kCloudFilters1, cfg.filters, 3, 3},
        r.bytes((static_cast<size_t>(kCloudFilters1) * cfg.filters * 9 + 7) / 8));
    m.cloud_b2_.w = BinaryWeights::from_bits(
        {kCloudFilters2, kCloudFilters1, 3, 3},
        r.bytes((static_cast<size_t>(kCloudFilters2) * kCloudFilters1 * 9 + 7) / 8));

    for (auto& b : m.branches_) {
        get_bn(r, b.conv.bn_gamma, b.conv.bn_beta, b.conv.bn,
               static_cast<size_t>(cfg.filters));
        get_bn(r, b.head_bn_gamma, b.head_bn_beta, b.head_bn,
               static_cast<size_t>(cfg.num_classes));
    }
    if (cfg.scheme_local == Agg::CC) {
        m.local_proj_w_.data() =
            r.floats(static_cast<size_t>(cfg.devices) * cfg.num_classes * cfg.num_classes);
        m.local_proj_b_.data() = r.floats(static_cast<size_t>(cfg.num_classes));
    }
    if (cfg.scheme_cloud == Agg::CC) {
        m.cloud_proj_w_.data() =
            r.floats(static_cast<size_t>(cfg.filters) * cfg.devices * cfg.filters);
        m.cloud_proj_b_.data() = r.floats(static_cast<size_t>(cfg.filters));
    }
    get_bn(r, m.cloud_b1_.bn_gamma, m.cloud_b1_.bn_beta, m.cloud_b1_.bn, kCloudFilters1);
    get_bn(r, m.cloud_b2_.bn_gamma, m.cloud_b2_.bn_beta, m.cloud_b2_.bn, kCloudFilters2);
    m.cloud_fc_w_.data() = r.floats(static_cast<size_t>(kCloudFlat) * cfg.num_classes);
    m.cloud_fc_b_.data() = r.floats(static_cast<size_t>(cfg.num_classes));

    if (r.pos != bytes.size())
        throw ValidationError("checkpoint has " + std::to_string(bytes.size() - r.pos) +
                              " trailing bytes");
    return m;
}

void save_checkpoint(const DdnnModel& m, const std::string& path) {
    const auto bytes = serialize_checkpoint(m);
    const std::filesystem::path p(path);
    if (p.has_parent_path()) {
        std::error_code ec;
        std::filesystem::create_directories(p.parent_path(), ec);
    }
    std::ofstream f(path, std::ios::binary);
    if (!f) throw ValidationError("cannot write checkpoint " + path);
    f.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
    if (!f) throw ValidationError("short write on checkpoint " + path);
}

DdnnModel load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ValidationError("cannot open checkpoint " + path);
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                               std::istreambuf_iterator<char>());
    return deserialize_checkpoint(bytes);
}

} // namespace ddnn
