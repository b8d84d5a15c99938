// Desk-scale trend checks over the full synthetic pipeline. These train real
// models (minutes, not seconds) and assert the qualitative behaviors the
// system is built around: fusion beating every individual device, the cloud
// exit leading the local exit as devices are added, and cloud offloading
// paying off in the filter sweep.
#include <doctest.h>

#include "ddnn/experiments.hpp"

using namespace ddnn;

TEST_SUITE_BEGIN("trends");

namespace {

struct ScaleData {
    Dataset train_set, test_set;
    ScaleData() {
        SynthParams p;
        p.seed = 42;
        p.n_samples = 851;
        const Dataset full = synth_generate(p);
        auto [tr, te] = split(full, kDefaultTrainFraction, 42);
        train_set = std::move(tr);
        test_set = std::move(te);
    }
};

const ScaleData& data() {
    static ScaleData d;
    return d;
}

TrainConfig trend_train_config() {
    TrainConfig tc;
    tc.epochs = 40;
    tc.batch_size = 32;
    tc.seed = 42;
    return tc;
}

} // namespace

TEST_CASE("device scaling: cloud leads local at every count, fused model beats "
          "every individual") {
    const DeviceScalingResult r = run_device_scaling(
        data().train_set, data().test_set, ModelConfig{}, trend_train_config(), 0.8, 2);
    REQUIRE(r.sweep.rows.size() == 6);

    for (size_t i = 1; i < r.individual_accs.size(); ++i)
        CHECK(r.individual_accs[i] >= r.individual_accs[i - 1]);

    double best_individual = 0.0;
    for (double a : r.individual_accs) best_individual = std::max(best_individual, a);

    for (const auto& row : r.sweep.rows) {
        // Cloud exit at or above the local exit, with the 2-point slack a
        // finite test set needs.
        CHECK(row.report.cloud_acc >= row.report.local_acc - 2.0);
        INFO("k=" << row.axis << " local=" << row.report.local_acc
                  << " cloud=" << row.report.cloud_acc);
    }

    const auto& full = r.sweep.rows.back().report;
    CHECK(full.overall_acc > best_individual);
    CHECK(full.local_acc > best_individual);
    MESSAGE("6-device overall " << full.overall_acc << "% vs best individual "
                                << best_individual << "%");
}

TEST_CASE("filter sweep: offloading the unconfident quarter never hurts") {
    const int filters[] = {4, 8};
    const SweepResult r = run_filter_sweep(data().train_set, data().test_set, filters,
                                           ModelConfig{}, trend_train_config(), 2);
    REQUIRE(r.rows.size() == 2);
    for (const auto& row : r.rows) {
        CHECK(row.report.overall_acc >= row.report.local_acc);
        CHECK(std::stol(row.extra[0]) < 2048);
        // The chosen threshold should route roughly a quarter to the cloud.
        CHECK(row.report.local_exit_pct >= 50.0);
        CHECK(row.report.local_exit_pct <= 95.0);
        MESSAGE("f=" << row.axis << " local=" << row.report.local_acc << " overall="
                     << row.report.overall_acc << " exit%=" << row.report.local_exit_pct);
    }
}

TEST_SUITE_END();
