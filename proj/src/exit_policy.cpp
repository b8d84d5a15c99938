#include "ddnn/exit_policy.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "ddnn/errors.hpp"
#include "ddnn/ops.hpp"

namespace ddnn {

CommModel CommModel::of(const DdnnModel& model) {
    CommModel c;
    c.num_classes = model.num_classes();
    c.filters = model.filters();
    // o derives from the model geometry: one ConvP block halves 32x32.
    c.filter_output_elems = (kImageSide / 2) * (kImageSide / 2);
    return c;
}

namespace {

template <typename T>
double normalized_entropy_impl(std::span<const T> probs) {
    if (probs.size() < 2)
        throw InvariantError("normalized_entropy needs at least 2 classes");
    double sum = 0.0;
    for (T p : probs) {
        if (!(p >= T(0)))
            throw InvariantError("normalized_entropy: negative or NaN probability");
        sum += static_cast<double>(p);
    }
    if (std::abs(sum - 1.0) > 1e-6)
        throw InvariantError("normalized_entropy: probabilities sum to " +
                             std::to_string(sum) + ", not 1");

    // Summing over sorted values makes the result bitwise invariant under
    // permutation of the input.
    std::vector<double> sorted(probs.begin(), probs.end());
    std::sort(sorted.begin(), sorted.end());
    double h = 0.0;
    for (double p : sorted)
        if (p > 0.0) h -= p * std::log(p); // 0*log(0) := 0
    const double eta = h / std::log(static_cast<double>(probs.size()));
    return std::clamp(eta, 0.0, 1.0);
}

} // namespace

double normalized_entropy(std::span<const float> probs) {
    return normalized_entropy_impl(probs);
}

double normalized_entropy(std::span<const double> probs) {
    return normalized_entropy_impl(probs);
}

bool should_exit(double eta, double T) { return eta <= T; }

double comm_cost(double local_exit_fraction, const CommModel& comm) {
    if (local_exit_fraction < 0.0 || local_exit_fraction > 1.0)
        throw InvariantError("comm_cost: local exit fraction outside [0, 1]");
    return static_cast<double>(comm.local_bytes()) +
           (1.0 - local_exit_fraction) * static_cast<double>(comm.cloud_extra_bytes());
}

int64_t round_half_up(double v) { return static_cast<int64_t>(std::floor(v + 0.5)); }

namespace {

int argmax_row(const float* row, int c) {
    int best = 0;
    for (int k = 1; k < c; ++k)
        if (row[k] > row[best]) best = k; // lowest index wins ties
    return best;
}

} // namespace

InferenceTrace hierarchical_infer(const DdnnModel& model, const MultiViewSample& sample,
                                  const ExitThresholds& thresholds, const CommModel& comm,
                                  EvalCounters* counters,
                                  const std::vector<bool>& alive) {
    if (thresholds.local_T < 0.0 || thresholds.local_T > 1.0)
        throw ValidationError("exit threshold must be in [0, 1]");
    NoGradGuard ng;

    std::vector<const MultiViewSample*> batch{&sample};
    std::vector<Tensor> inputs;
    for (int d = 0; d < model.n_devices(); ++d)
        inputs.push_back(model.device_input(batch, d));

    ForwardResult local = model.forward_local(inputs, Mode::Infer, alive);
    if (counters) ++counters->local_evals;
    const int c = model.num_classes();
    const auto local_probs = softmax_row(
        std::span<const float>(local.local_logits.data().data(), static_cast<size_t>(c)));

    InferenceTrace t;
    t.local_entropy = normalized_entropy(std::span<const float>(local_probs));

    if (should_exit(t.local_entropy, thresholds.local_T)) {
        t.exit_taken = ExitPoint::Local;
        t.predicted_class = argmax_row(local_probs.data(), c);
        t.bytes_sent = comm.local_bytes();
        return t;
    }

    Tensor cloud_logits = model.forward_cloud(local.device_features, Mode::Infer, alive);
    if (counters) ++counters->cloud_evals;
    const auto cloud_probs = softmax_row(
        std::span<const float>(cloud_logits.data().data(), static_cast<size_t>(c)));
    t.exit_taken = ExitPoint::Cloud;
    t.cloud_entropy = normalized_entropy(std::span<const float>(cloud_probs));
    t.predicted_class = argmax_row(cloud_probs.data(), c);
    t.bytes_sent = comm.local_bytes() + comm.cloud_extra_bytes();
    return t;
}

std::vector<InferenceTrace> infer_dataset(const DdnnModel& model, const Dataset& ds,
                                          const ExitThresholds& thresholds,
                                          const CommModel& comm,
                                          const std::vector<bool>& alive) {
    if (thresholds.local_T < 0.0 || thresholds.local_T > 1.0)
        throw ValidationError("exit threshold must be in [0, 1]");
    NoGradGuard ng;
    std::vector<InferenceTrace> traces;
    traces.reserve(ds.size());
    const int c = model.num_classes();

    constexpr size_t kChunk = 64;
    for (size_t start = 0; start < ds.samples.size(); start += kChunk) {
        const size_t stop = std::min(start + kChunk, ds.samples.size());
        std::vector<const MultiViewSample*> batch;
        for (size_t i = start; i < stop; ++i) batch.push_back(&ds.samples[i]);
        std::vector<Tensor> inputs;
        for (int d = 0; d < model.n_devices(); ++d)
            inputs.push_back(model.device_input(batch, d));

        ForwardResult fwd = model.forward(inputs, Mode::Infer, alive);
        for (size_t i = 0; i < batch.size(); ++i) {
            const float* lrow =
                fwd.local_logits.data().data() + static_cast<int64_t>(i) * c;
            const auto lp = softmax_row(std::span<const float>(lrow, static_cast<size_t>(c)));
            InferenceTrace t;
            t.local_entropy = normalized_entropy(std::span<const float>(lp));
            if (should_exit(t.local_entropy, thresholds.local_T)) {
                t.exit_taken = ExitPoint::Local;
                t.predicted_class = argmax_row(lp.data(), c);
                t.bytes_sent = comm.local_bytes();
            } else {
                const float* crow =
                    fwd.cloud_logits.data().data() + static_cast<int64_t>(i) * c;
                const auto cp =
                    softmax_row(std::span<const float>(crow, static_cast<size_t>(c)));
                t.exit_taken = ExitPoint::Cloud;
                t.cloud_entropy = normalized_entropy(std::span<const float>(cp));
                t.predicted_class = argmax_row(cp.data(), c);
                t.bytes_sent = comm.local_bytes() + comm.cloud_extra_bytes();
            }
            traces.push_back(t);
        }
    }
    return traces;
}

DatasetRouting route_dataset(const DdnnModel& model, const Dataset& ds,
                             const std::vector<bool>& alive) {
    DatasetRouting rt;
    NoGradGuard ng;
    const int c = model.num_classes();
    constexpr size_t kChunk = 64;
    for (size_t start = 0; start < ds.samples.size(); start += kChunk) {
        const size_t stop = std::min(start + kChunk, ds.samples.size());
        std::vector<const MultiViewSample*> batch;
        for (size_t i = start; i < stop; ++i) batch.push_back(&ds.samples[i]);
        std::vector<Tensor> inputs;
        for (int d = 0; d < model.n_devices(); ++d)
            inputs.push_back(model.device_input(batch, d));
        ForwardResult fwd = model.forward(inputs, Mode::Infer, alive);
        for (size_t i = 0; i < batch.size(); ++i) {
            const float* lrow =
                fwd.local_logits.data().data() + static_cast<int64_t>(i) * c;
            const float* crow =
                fwd.cloud_logits.data().data() + static_cast<int64_t>(i) * c;
            const auto lp = softmax_row(std::span<const float>(lrow, static_cast<size_t>(c)));
            rt.local_entropy.push_back(normalized_entropy(std::span<const float>(lp)));
            rt.local_pred.push_back(argmax_row(lp.data(), c));
            rt.cloud_pred.push_back(argmax_row(crow, c));
        }
    }
    return rt;
}

double threshold_search(const DdnnModel& model, const Dataset& validation,
                        std::span<const double> grid) {
    if (grid.empty()) throw ValidationError("threshold_search: empty grid");
    if (validation.samples.empty())
        throw ValidationError("threshold_search: empty validation set");

    const DatasetRouting rt = route_dataset(model, validation);
    double best_T = grid[0];
    int64_t best_correct = -1;
    for (double T : grid) {
        int64_t correct = 0;
        for (size_t i = 0; i < rt.local_entropy.size(); ++i) {
            const int pred =
                should_exit(rt.local_entropy[i], T) ? rt.local_pred[i] : rt.cloud_pred[i];
            if (pred == validation.samples[i].global_label) ++correct;
        }
        // >= prefers the larger T on ties (grid scanned in any order).
        if (correct > best_correct || (correct == best_correct && T > best_T)) {
            best_correct = correct;
            best_T = T;
        }
    }
    return best_T;
}

double threshold_for_local_fraction(const DdnnModel& model, const Dataset& validation,
                                    double target_fraction) {
    if (validation.samples.empty())
        throw ValidationError("threshold_for_local_fraction: empty validation set");
    DatasetRouting rt = route_dataset(model, validation);
    std::vector<double> etas = rt.local_entropy;
    std::sort(etas.begin(), etas.end());
    const double n = static_cast<double>(etas.size());

    // Candidate thresholds: below the smallest eta (fraction 0) or at each
    // sorted eta value (fraction (i+1)/n under the eta <= T rule).
    double best_T = 0.0;
    double best_err = std::abs(0.0 - target_fraction);
    for (size_t i = 0; i < etas.size(); ++i) {
        // Equal etas: take the last occurrence so the fraction is exact.
        if (i + 1 < etas.size() && etas[i + 1] == etas[i]) continue;
        const double frac = static_cast<double>(i + 1) / n;
        const double err = std::abs(frac - target_fraction);
        if (err < best_err || (err == best_err && etas[i] > best_T)) {
            best_err = err;
            best_T = etas[i];
        }
    }
    return std::clamp(best_T, 0.0, 1.0);
}

std::string traces_csv(const Dataset& ds, const std::vector<InferenceTrace>& traces) {
    if (ds.samples.size() != traces.size())
        throw InvariantError("traces_csv: dataset and trace counts differ");
    std::ostringstream os;
    os << "sample_id,predicted,true,exit,local_entropy,bytes\n";
    for (size_t i = 0; i < traces.size(); ++i) {
        const auto& t = traces[i];
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.6f", t.local_entropy);
        os << ds.samples[i].id << "," << t.predicted_class << ","
           << ds.samples[i].global_label << ","
           << (t.exit_taken == ExitPoint::Local ? "local" : "cloud") << "," << buf << ","
           << t.bytes_sent << "\n";
    }
    return os.str();
}

} // namespace ddnn
