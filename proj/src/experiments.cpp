#include "ddnn/experiments.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "ddnn/errors.hpp"
#include "ddnn/version.hpp"

namespace ddnn {

namespace {

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.4f", v);
    return buf;
}

std::string join_accs(const std::vector<double>& v) {
    std::string out;
    for (size_t i = 0; i < v.size(); ++i) {
        if (i) out += ";";
        out += fmt(v[i]);
    }
    return out;
}

void check_pct(double v, const char* what) {
    if (!(v >= 0.0 && v <= 100.0))
        throw InvariantError(std::string(what) + " outside [0, 100]: " + fmt(v));
}

} // namespace

AccuracyReport measure(const DdnnModel& model, const Dataset& test, double T,
                       const std::vector<bool>& alive) {
    if (test.samples.empty()) throw ValidationError("measure: empty test set");
    const CommModel comm = CommModel::of(model);
    // One forward pass yields both exits; forcing an exit just selects which
    // prediction counts. The entropy gate decides the overall mix.
    const DatasetRouting rt = route_dataset(model, test, alive);

    const int64_t n = static_cast<int64_t>(test.size());
    int64_t local_correct = 0, cloud_correct = 0;
    int64_t overall_correct = 0, exited_local = 0;
    int64_t correct_at_local_exit = 0, correct_at_cloud_exit = 0;
    int64_t total_bytes = 0;
    for (size_t i = 0; i < test.samples.size(); ++i) {
        const int y = test.samples[i].global_label;
        if (rt.local_pred[i] == y) ++local_correct;
        if (rt.cloud_pred[i] == y) ++cloud_correct;
        const bool exits = should_exit(rt.local_entropy[i], T);
        const int pred = exits ? rt.local_pred[i] : rt.cloud_pred[i];
        const bool correct = pred == y;
        if (correct) ++overall_correct;
        if (exits) {
            ++exited_local;
            if (correct) ++correct_at_local_exit;
            total_bytes += comm.local_bytes();
        } else {
            if (correct) ++correct_at_cloud_exit;
            total_bytes += comm.local_bytes() + comm.cloud_extra_bytes();
        }
    }

    // Partition identity: every overall-correct sample is correct at exactly
    // the exit it took.
    if (overall_correct != correct_at_local_exit + correct_at_cloud_exit)
        throw InvariantError("overall-correct partition identity violated");
    // Per-sample byte accounting must match Eq-style arithmetic exactly.
    if (total_bytes != n * comm.local_bytes() +
                           (n - exited_local) * comm.cloud_extra_bytes())
        throw InvariantError("per-sample byte accounting mismatch");

    AccuracyReport r;
    const double dn = static_cast<double>(n);
    r.local_acc = 100.0 * static_cast<double>(local_correct) / dn;
    r.cloud_acc = 100.0 * static_cast<double>(cloud_correct) / dn;
    r.overall_acc = 100.0 * static_cast<double>(overall_correct) / dn;
    r.local_exit_pct = 100.0 * static_cast<double>(exited_local) / dn;
    r.avg_comm_bytes = comm_cost(static_cast<double>(exited_local) / dn, comm);
    check_pct(r.local_acc, "local accuracy");
    check_pct(r.cloud_acc, "cloud accuracy");
    check_pct(r.overall_acc, "overall accuracy");
    check_pct(r.local_exit_pct, "local exit percentage");
    return r;
}

void run_cells(size_t count, int jobs, const std::function<void(size_t)>& fn) {
    if (jobs <= 1 || count <= 1) {
        for (size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<size_t> next{0};
    const size_t workers = std::min<size_t>(static_cast<size_t>(jobs), count);
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(workers);
    for (size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            try {
                for (size_t i = next.fetch_add(1); i < count; i = next.fetch_add(1)) fn(i);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

SweepResult run_aggregation_sweep(const Dataset& train_set, const Dataset& test_set,
                                  const ModelConfig& base_model, const TrainConfig& base_train,
                                  double T, int jobs) {
    static const Agg kSchemes[] = {Agg::MP, Agg::AP, Agg::CC};
    struct Cell {
        Agg local, cloud;
        std::string name;
    };
    std::vector<Cell> cells;
    for (Agg l : kSchemes)
        for (Agg c : kSchemes)
            cells.push_back({l, c, agg_name(l) + "-" + agg_name(c)});

    SweepResult result;
    result.axis_name = "schemes";
    result.rows.resize(cells.size());

    run_cells(cells.size(), jobs, [&](size_t i) {
        ModelConfig mc = base_model;
        mc.scheme_local = cells[i].local;
        mc.scheme_cloud = cells[i].cloud;
        TrainConfig tc = base_train;
        tc.seed = Rng::derive(base_train.seed, "agg-" + cells[i].name);
        DdnnModel model = DdnnModel::make(mc, tc.seed);
        train(model, train_set, tc);
        result.rows[i] = SweepRow{cells[i].name, measure(model, test_set, T), {}};
    });
    return result;
}

SweepResult run_threshold_sweep(const DdnnModel& model, const Dataset& test_set,
                                std::span<const double> grid) {
    if (grid.empty()) throw ValidationError("threshold sweep: empty grid");
    SweepResult result;
    result.axis_name = "T";
    for (double T : grid) {
        char axis[32];
        std::snprintf(axis, sizeof axis, "%.2f", T);
        result.rows.push_back(SweepRow{axis, measure(model, test_set, T), {}});
    }
    return result;
}

DeviceScalingResult run_device_scaling(const Dataset& train_set, const Dataset& test_set,
                                       const ModelConfig& base_model,
                                       const TrainConfig& base_train, double T, int jobs) {
    DeviceScalingResult out;

    // Individual baselines first; they define the device order.
    std::vector<double> ind_acc(kViewsPerSample, 0.0);
    run_cells(kViewsPerSample, jobs, [&](size_t v) {
        TrainConfig tc = base_train;
        const IndividualModel m = train_individual(static_cast<int>(v), train_set, tc,
                                                   base_model.filters,
                                                   base_model.num_classes);
        ind_acc[v] = individual_accuracy(m, test_set);
    });

    std::vector<int> order(kViewsPerSample);
    for (int i = 0; i < kViewsPerSample; ++i) order[static_cast<size_t>(i)] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return ind_acc[a] < ind_acc[b]; });
    out.device_order = order;
    for (int v : order) out.individual_accs.push_back(ind_acc[static_cast<size_t>(v)]);

    out.sweep.axis_name = "devices";
    out.sweep.extra_columns = {"device_views"};
    out.sweep.rows.resize(kViewsPerSample);
    run_cells(kViewsPerSample, jobs, [&](size_t i) {
        const int k = static_cast<int>(i) + 1;
        ModelConfig mc = base_model;
        mc.devices = k;
        TrainConfig tc = base_train;
        tc.seed = Rng::derive(base_train.seed, "scale-" + std::to_string(k));
        DdnnModel model = DdnnModel::make(mc, tc.seed);
        std::vector<int> vm(order.begin(), order.begin() + k);
        model.set_view_map(vm);
        train(model, train_set, tc);
        AccuracyReport rep = measure(model, test_set, T);
        for (int j = 0; j < k; ++j)
            rep.individual_accs.push_back(ind_acc[static_cast<size_t>(vm[j])]);
        std::string views;
        for (int j = 0; j < k; ++j) views += (j ? ";" : "") + std::to_string(vm[j]);
        out.sweep.rows[i] = SweepRow{std::to_string(k), std::move(rep), {views}};
    });
    return out;
}

SweepResult run_filter_sweep(const Dataset& train_set, const Dataset& test_set,
                             std::span<const int> filter_counts,
                             const ModelConfig& base_model, const TrainConfig& base_train,
                             int jobs) {
    if (filter_counts.empty()) throw ValidationError("filter sweep: empty filter list");

    // Threshold selection uses a held-out 20% of the training split.
    const auto [fit, val] =
        split(train_set, 0.8, Rng::derive(base_train.seed, "filter-val"));

    SweepResult result;
    result.axis_name = "filters";
    result.extra_columns = {"device_memory_bytes", "chosen_T"};
    result.rows.resize(filter_counts.size());

    run_cells(filter_counts.size(), jobs, [&](size_t i) {
        ModelConfig mc = base_model;
        mc.filters = filter_counts[i];
        TrainConfig tc = base_train;
        tc.seed = Rng::derive(base_train.seed, "filter-" + std::to_string(mc.filters));
        DdnnModel model = DdnnModel::make(mc, tc.seed);
        train(model, fit, tc);
        const double T = threshold_for_local_fraction(model, val, 0.75);
        AccuracyReport rep = measure(model, test_set, T);
        const size_t mem = device_memory_bytes(model.branches()[0]);
        char tbuf[32];
        std::snprintf(tbuf, sizeof tbuf, "%.6f", T);
        result.rows[i] = SweepRow{std::to_string(mc.filters), std::move(rep),
                                  {std::to_string(mem), tbuf}};
    });
    return result;
}

std::vector<std::vector<int>> default_failure_sets(int n_devices) {
    std::vector<std::vector<int>> sets;
    sets.push_back({}); // baseline
    for (int d = 0; d < n_devices; ++d) sets.push_back({d});
    return sets;
}

SweepResult run_fault_tolerance(const DdnnModel& model, const Dataset& test_set,
                                const std::vector<std::vector<int>>& failure_sets,
                                double T) {
    SweepResult result;
    result.axis_name = "failed_devices";
    for (const auto& failed : failure_sets) {
        std::vector<bool> alive(static_cast<size_t>(model.n_devices()), true);
        for (int d : failed) {
            if (d < 0 || d >= model.n_devices())
                throw ValidationError("failure set names device " + std::to_string(d) +
                                      " outside 0.." + std::to_string(model.n_devices() - 1));
            alive[static_cast<size_t>(d)] = false;
        }
        if (std::none_of(alive.begin(), alive.end(), [](bool b) { return b; }))
            throw ValidationError("failure set disables every device");
        std::string axis = "none";
        if (!failed.empty()) {
            axis.clear();
            for (size_t i = 0; i < failed.size(); ++i)
                axis += (i ? ";" : "") + std::to_string(failed[i]);
        }
        result.rows.push_back(SweepRow{axis, measure(model, test_set, T, alive), {}});
    }
    return result;
}

std::string sweep_csv(const SweepResult& result) {
    std::ostringstream os;
    os << result.axis_name
       << ",local_acc,cloud_acc,overall_acc,local_exit_pct,avg_comm_bytes,individual_accs";
    for (const auto& c : result.extra_columns) os << "," << c;
    os << "\n";
    for (const auto& row : result.rows) {
        const auto& r = row.report;
        os << row.axis << "," << fmt(r.local_acc) << "," << fmt(r.cloud_acc) << ","
           << fmt(r.overall_acc) << "," << fmt(r.local_exit_pct) << ","
           << fmt(r.avg_comm_bytes) << "," << join_accs(r.individual_accs);
        for (const auto& e : row.extra) os << "," << e;
        os << "\n";
    }
    return os.str();
}

std::string manifest_json(const std::string& command, uint64_t seed,
                          const std::string& config_text,
                          const std::vector<std::pair<std::string, std::string>>& outputs) {
    nlohmann::json j;
    j["command"] = command;
    j["seed"] = seed;
    j["config"] = config_text;
    j["versions"] = {
        {"tensor-core", kTensorCoreVersion}, {"ddnn-model", kModelVersion},
        {"exit-policy", kExitPolicyVersion}, {"mvmc-data", kDataVersion},
        {"experiments", kExperimentsVersion}, {"cli", kCliVersion},
    };
    const auto now = std::chrono::system_clock::now();
    const std::time_t tt = std::chrono::system_clock::to_time_t(now);
    char ts[32];
    std::tm tm_utc{};
    gmtime_r(&tt, &tm_utc);
    std::strftime(ts, sizeof ts, "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
    j["timestamp_utc"] = ts;
    nlohmann::json outs = nlohmann::json::object();
    for (const auto& [k, v] : outputs) outs[k] = v;
    j["outputs"] = outs;
    return j.dump(2) + "\n";
}

} // namespace ddnn
