#include <doctest.h>

#include <cmath>

#include "ddnn/errors.hpp"
#include "ddnn/exit_policy.hpp"
#include "oracles.hpp"

using namespace ddnn;

TEST_SUITE_BEGIN("exit-policy");

namespace {

struct Fixture {
    Dataset train_set, test_set;
    DdnnModel model = DdnnModel::make(ModelConfig{}, 31);

    Fixture() {
        SynthParams p;
        p.seed = 31;
        p.n_samples = 80;
        const Dataset full = synth_generate(p);
        auto [tr, te] = split(full, 0.7, 31);
        train_set = std::move(tr);
        test_set = std::move(te);
        TrainConfig tc;
        tc.epochs = 8;
        tc.batch_size = 16;
        tc.seed = 31;
        train(model, train_set, tc);
    }
};

const Fixture& fixture() {
    static Fixture f;
    return f;
}

std::vector<float> dist3(float a, float b, float c) { return {a, b, c}; }

} // namespace

TEST_CASE("normalized entropy: uniform is exactly 1, one-hot exactly 0") {
    CHECK(normalized_entropy(std::span<const float>(
              dist3(1.0f / 3, 1.0f / 3, 1.0f / 3))) == 1.0);
    CHECK(normalized_entropy(std::span<const float>(dist3(1, 0, 0))) == 0.0);
    const std::vector<double> u4(4, 0.25);
    CHECK(normalized_entropy(std::span<const double>(u4)) == 1.0);
}

TEST_CASE("normalized entropy of (0.5, 0.5, 0) is log2/log3") {
    const double got = normalized_entropy(std::span<const float>(dist3(0.5f, 0.5f, 0.0f)));
    CHECK(std::abs(got - std::log(2.0) / std::log(3.0)) < 1e-9);
    CHECK(got == doctest::Approx(0.63093).epsilon(1e-4));
}

TEST_CASE("normalized entropy is bitwise permutation invariant and peaks at uniform") {
    Rng rng(91);
    for (int it = 0; it < 1000; ++it) {
        const int c = 2 + static_cast<int>(rng.index(5));
        std::vector<float> p(static_cast<size_t>(c));
        float sum = 0.0f;
        for (auto& v : p) {
            v = static_cast<float>(rng.uniform()) + 1e-4f;
            sum += v;
        }
        for (auto& v : p) v /= sum;
        float s2 = 0.0f;
        for (float v : p) s2 += v;
        p[0] += 1.0f - s2;

        const double eta = normalized_entropy(std::span<const float>(p));
        CHECK(eta >= 0.0);
        CHECK(eta <= 1.0);
        std::vector<float> shuffled = p;
        rng.shuffle(shuffled);
        CHECK(normalized_entropy(std::span<const float>(shuffled)) == eta);

        float mx = 0.0f, mn = 1.0f;
        for (float v : p) {
            mx = std::max(mx, v);
            mn = std::min(mn, v);
        }
        if (mx - mn > 1e-2f) CHECK(eta < 1.0);
    }
}

TEST_CASE("normalized entropy rejects non-distributions") {
    CHECK_THROWS_AS(normalized_entropy(std::span<const float>(dist3(0.5f, 0.6f, 0.1f))),
                    InvariantError);
    CHECK_THROWS_AS(normalized_entropy(std::span<const float>(dist3(-0.1f, 0.6f, 0.5f))),
                    InvariantError);
}

TEST_CASE("should_exit: boundary exits, T=1 always exits, T=0 only on one-hot") {
    CHECK(should_exit(0.5, 0.5));
    CHECK(should_exit(1.0, 1.0));
    CHECK(should_exit(0.0, 0.0));
    CHECK_FALSE(should_exit(0.2, 0.1));
    const double eta =
        normalized_entropy(std::span<const float>(dist3(0.6f, 0.3f, 0.1f)));
    CHECK(should_exit(eta, 1.0));
    CHECK_FALSE(should_exit(eta, 0.0));
}

TEST_CASE("comm_cost reproduces the byte table after half-up rounding") {
    CommModel comm; // |C|=3, f=4, o=256
    const std::pair<double, int64_t> table[] = {
        {0.0000, 140}, {0.0058, 139}, {0.0175, 138}, {0.0292, 136},
        {0.2281, 111}, {0.6082, 62},  {0.8304, 34},  {1.0000, 12},
    };
    for (const auto& [l, want] : table)
        CHECK(round_half_up(comm_cost(l, comm)) == want);
    CHECK(comm_cost(1.0, comm) == 12.0);
    CHECK(comm_cost(0.0, comm) == 140.0);
    CHECK_THROWS_AS(comm_cost(-0.1, comm), InvariantError);
    CHECK_THROWS_AS(comm_cost(1.1, comm), InvariantError);
}

TEST_CASE("CommModel derives o from the model geometry") {
    const CommModel c = CommModel::of(fixture().model);
    CHECK(c.filter_output_elems == 256);
    CHECK(c.num_classes == 3);
    CHECK(c.filters == 4);
    CHECK(c.local_bytes() == 12);
    CHECK(c.cloud_extra_bytes() == 128);
}

TEST_CASE("hierarchical inference: T=1 exits locally with 12 bytes, no cloud eval") {
    const auto& f = fixture();
    const CommModel comm = CommModel::of(f.model);
    EvalCounters counters;
    for (size_t i = 0; i < 10; ++i) {
        const auto t = hierarchical_infer(f.model, f.test_set.samples[i],
                                          ExitThresholds{1.0}, comm, &counters);
        CHECK(t.exit_taken == ExitPoint::Local);
        CHECK(t.bytes_sent == 12);
        CHECK_FALSE(t.cloud_entropy.has_value());
    }
    CHECK(counters.local_evals == 10);
    CHECK(counters.cloud_evals == 0);
}

TEST_CASE("hierarchical inference: T=0 sends non-degenerate samples to the cloud") {
    const auto& f = fixture();
    const CommModel comm = CommModel::of(f.model);
    for (size_t i = 0; i < 10; ++i) {
        const auto t = hierarchical_infer(f.model, f.test_set.samples[i],
                                          ExitThresholds{0.0}, comm);
        if (t.local_entropy > 0.0) {
            CHECK(t.exit_taken == ExitPoint::Cloud);
            CHECK(t.bytes_sent == 12 + 1024 / 8);
            CHECK(t.cloud_entropy.has_value());
        }
    }
}

TEST_CASE("per-sample bytes take exactly the two legal values") {
    const auto& f = fixture();
    const CommModel comm = CommModel::of(f.model);
    const auto traces = infer_dataset(f.model, f.test_set, ExitThresholds{0.55}, comm);
    for (const auto& t : traces) CHECK((t.bytes_sent == 12 || t.bytes_sent == 140));
}

TEST_CASE("batched inference agrees with per-sample staged inference") {
    const auto& f = fixture();
    const CommModel comm = CommModel::of(f.model);
    const ExitThresholds th{0.62};
    const auto batched = infer_dataset(f.model, f.test_set, th, comm);
    for (size_t i = 0; i < f.test_set.size(); ++i) {
        const auto single = hierarchical_infer(f.model, f.test_set.samples[i], th, comm);
        CHECK(batched[i].predicted_class == single.predicted_class);
        CHECK(batched[i].exit_taken == single.exit_taken);
        CHECK(batched[i].bytes_sent == single.bytes_sent);
        CHECK(batched[i].local_entropy == doctest::Approx(single.local_entropy));
    }
}

TEST_CASE("local-exit fraction rises with T while average bytes fall") {
    const auto& f = fixture();
    const CommModel comm = CommModel::of(f.model);
    double prev_frac = -1.0;
    double prev_bytes = 1e18;
    for (double T = 0.0; T <= 1.0001; T += 0.1) {
        const auto traces = infer_dataset(f.model, f.test_set, ExitThresholds{T}, comm);
        int64_t local = 0, bytes = 0;
        for (const auto& t : traces) {
            if (t.exit_taken == ExitPoint::Local) ++local;
            bytes += t.bytes_sent;
        }
        const double frac = static_cast<double>(local) / static_cast<double>(traces.size());
        const double avg = static_cast<double>(bytes) / static_cast<double>(traces.size());
        CHECK(frac >= prev_frac);
        CHECK(avg <= prev_bytes + 1e-9);
        CHECK(avg == doctest::Approx(comm_cost(frac, comm)).epsilon(1e-9));
        prev_frac = frac;
        prev_bytes = avg;
    }
}

TEST_CASE("threshold search: singleton grid, tie rule, and optimality") {
    const auto& f = fixture();
    const double single[] = {0.35};
    CHECK(threshold_search(f.model, f.test_set, single) == 0.35);

    // A degenerate, always-confident model: one device head dwarfs the rest,
    // every sample exits locally whatever T says, ties resolve to the top.
    DdnnModel confident = DdnnModel::make(ModelConfig{}, 32);
    confident.branches()[0].head_bn_beta.data() = {500.0f, -500.0f, -500.0f};
    confident.branches()[0].head_bn_gamma.data() = {0.0f, 0.0f, 0.0f};
    const double grid[] = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
    CHECK(threshold_search(confident, f.test_set, grid) == 1.0);

    // Brute-force optimality on the real model.
    const double best = threshold_search(f.model, f.test_set, grid);
    const CommModel comm = CommModel::of(f.model);
    auto correct_at = [&](double T) {
        const auto traces = infer_dataset(f.model, f.test_set, ExitThresholds{T}, comm);
        int64_t correct = 0;
        for (size_t i = 0; i < traces.size(); ++i)
            if (traces[i].predicted_class == f.test_set.samples[i].global_label)
                ++correct;
        return correct;
    };
    const int64_t best_correct = correct_at(best);
    for (double T : grid) CHECK(correct_at(T) <= best_correct);

    CHECK_THROWS_AS(threshold_search(f.model, f.test_set, std::span<const double>{}),
                    ValidationError);
}

TEST_CASE("threshold_for_local_fraction lands on the closest achievable fraction") {
    const auto& f = fixture();
    const CommModel comm = CommModel::of(f.model);
    // The achievable fractions are 0 plus (i+1)/n at each distinct sorted
    // entropy value; the search must match the best of those.
    const DatasetRouting rt = route_dataset(f.model, f.test_set);
    std::vector<double> etas = rt.local_entropy;
    std::sort(etas.begin(), etas.end());
    const double n = static_cast<double>(etas.size());
    std::vector<double> achievable{0.0};
    for (size_t i = 0; i < etas.size(); ++i)
        if (i + 1 == etas.size() || etas[i + 1] != etas[i])
            achievable.push_back(static_cast<double>(i + 1) / n);

    for (double target : {0.0, 0.25, 0.5, 0.75, 1.0}) {
        double best_err = 1e9;
        for (double a : achievable) best_err = std::min(best_err, std::abs(a - target));

        const double T = threshold_for_local_fraction(f.model, f.test_set, target);
        const auto traces = infer_dataset(f.model, f.test_set, ExitThresholds{T}, comm);
        int64_t local = 0;
        for (const auto& t : traces)
            if (t.exit_taken == ExitPoint::Local) ++local;
        const double got = static_cast<double>(local) / n;
        CHECK(std::abs(got - target) <= best_err + 1e-9);
    }
}

TEST_CASE("trace CSV carries one row per sample in the declared schema") {
    const auto& f = fixture();
    const CommModel comm = CommModel::of(f.model);
    Dataset two;
    two.samples = {f.test_set.samples[0], f.test_set.samples[1]};
    const auto traces = infer_dataset(f.model, two, ExitThresholds{1.0}, comm);
    const std::string csv = traces_csv(two, traces);
    CHECK(csv.find("sample_id,predicted,true,exit,local_entropy,bytes\n") == 0);
    CHECK(csv.find(two.samples[0].id + ",") != std::string::npos);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);
    CHECK(csv.find(",local,") != std::string::npos);
}

TEST_CASE("thresholds outside [0,1] are rejected") {
    const auto& f = fixture();
    const CommModel comm = CommModel::of(f.model);
    CHECK_THROWS_AS(
        hierarchical_infer(f.model, f.test_set.samples[0], ExitThresholds{1.5}, comm),
        ValidationError);
    CHECK_THROWS_AS(infer_dataset(f.model, f.test_set, ExitThresholds{-0.2}, comm),
                    ValidationError);
}

TEST_SUITE_END();
