#include <doctest.h>

#include <cmath>

#include "ddnn/adam.hpp"
#include "ddnn/binary.hpp"
#include "ddnn/errors.hpp"
#include "ddnn/ops.hpp"
#include "ddnn/rng.hpp"
#include "oracles.hpp"

using namespace ddnn;

TEST_SUITE_BEGIN("tensor-core");

namespace {

Tensor rand_tensor(std::vector<int> shape, Rng& rng, bool rg = false, float lo = -1.0f,
                   float hi = 1.0f) {
    auto data = oracles::rand_vec(static_cast<size_t>(Tensor::shape_numel(shape)), rng,
                                  lo, hi);
    return Tensor::from(std::move(shape), std::move(data), rg);
}

Tensor rand_sign_tensor(std::vector<int> shape, Rng& rng, bool rg = false) {
    std::vector<float> data(static_cast<size_t>(Tensor::shape_numel(shape)));
    for (auto& v : data) v = rng.bernoulli(0.5) ? 1.0f : -1.0f;
    return Tensor::from(std::move(shape), std::move(data), rg);
}

} // namespace

TEST_CASE("conv2d: all-ones 2x2 input, all-plus filter sums the window") {
    Tensor x = Tensor::full({1, 1, 2, 2}, 1.0f);
    Tensor w = Tensor::full({1, 1, 3, 3}, 1.0f);
    Tensor out = conv2d_3x3(x, w);
    // Zero padding: each 3x3 window covers exactly the 4 in-bounds cells.
    for (float v : out.data()) CHECK(v == doctest::Approx(4.0f));
}

TEST_CASE("conv2d: zero input gives zero output") {
    Rng rng(11);
    Tensor x = Tensor::zeros({2, 3, 5, 5});
    Tensor w = rand_sign_tensor({4, 3, 3, 3}, rng);
    Tensor out = conv2d_3x3(x, w);
    for (float v : out.data()) CHECK(v == 0.0f);
}

TEST_CASE("conv2d matches the brute-force loop oracle") {
    Rng rng(42);
    for (int it = 0; it < 120; ++it) {
        const int n = 1 + static_cast<int>(rng.index(2));
        const int c = 1 + static_cast<int>(rng.index(3));
        const int f = 1 + static_cast<int>(rng.index(4));
        const int h = 1 + static_cast<int>(rng.index(9));
        const int w = 1 + static_cast<int>(rng.index(9));
        Tensor x = rand_tensor({n, c, h, w}, rng);
        Tensor wt = it % 2 == 0 ? rand_sign_tensor({f, c, 3, 3}, rng)
                                : rand_tensor({f, c, 3, 3}, rng);
        const auto got = conv2d_3x3(x, wt).data();
        const auto want = oracles::conv2d_ref(x.data(), n, c, h, w, wt.data(), f);
        REQUIRE(got.size() == want.size());
        for (size_t i = 0; i < got.size(); ++i)
            CHECK(std::abs(got[i] - want[i]) < 1e-5f);
    }
}

TEST_CASE("conv2d rejects mismatched shapes with a dimension report") {
    Tensor x = Tensor::zeros({1, 2, 4, 4});
    Tensor w = Tensor::zeros({3, 5, 3, 3});
    CHECK_THROWS_AS(conv2d_3x3(x, w), InvariantError);
    CHECK_THROWS_WITH_AS(conv2d_3x3(x, w),
                         doctest::Contains("(1x2x4x4)"), InvariantError);
}

TEST_CASE("maxpool: 32x32 halves to 16x16") {
    Tensor x = Tensor::zeros({1, 1, 32, 32});
    const auto s = maxpool_3x3_s2(x).shape();
    CHECK(s == std::vector<int>{1, 1, 16, 16});
}

TEST_CASE("maxpool: constant input stays constant") {
    Tensor x = Tensor::full({2, 3, 7, 9}, 2.5f);
    Tensor out = maxpool_3x3_s2(x);
    for (float v : out.data()) CHECK(v == 2.5f);
}

TEST_CASE("maxpool matches the window-scan oracle exactly") {
    Rng rng(43);
    {
        Tensor x = rand_tensor({1, 2, 7, 7}, rng);
        CHECK(maxpool_3x3_s2(x).data() == oracles::maxpool_ref(x.data(), 1, 2, 7, 7));
    }
    for (int it = 0; it < 120; ++it) {
        const int n = 1 + static_cast<int>(rng.index(2));
        const int c = 1 + static_cast<int>(rng.index(3));
        const int h = 1 + static_cast<int>(rng.index(10));
        const int w = 1 + static_cast<int>(rng.index(10));
        Tensor x = rand_tensor({n, c, h, w}, rng);
        CHECK(maxpool_3x3_s2(x).data() == oracles::maxpool_ref(x.data(), n, c, h, w));
    }
}

TEST_CASE("batch_norm train mode normalizes to mean 0, variance 1") {
    Rng rng(44);
    Tensor x = rand_tensor({16, 4, 3, 3}, rng, false, -3.0f, 5.0f);
    Tensor gamma = Tensor::full({4}, 1.0f);
    Tensor beta = Tensor::zeros({4});
    BnState st = BnState::make(4);
    Tensor y = batch_norm(x, gamma, beta, st, Mode::Train);
    const int inner = 9, n = 16;
    for (int c = 0; c < 4; ++c) {
        double mean = 0.0, var = 0.0;
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < inner; ++j)
                mean += y.data()[(static_cast<size_t>(i) * 4 + c) * inner + j];
        mean /= n * inner;
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < inner; ++j) {
                const double d =
                    y.data()[(static_cast<size_t>(i) * 4 + c) * inner + j] - mean;
                var += d * d;
            }
        var /= n * inner;
        CHECK(std::abs(mean) < 1e-5);
        CHECK(std::abs(var - 1.0) < 1e-3);
    }
}

TEST_CASE("batch_norm with gamma=0 outputs beta everywhere") {
    Rng rng(45);
    Tensor x = rand_tensor({4, 2, 5, 5}, rng);
    Tensor gamma = Tensor::zeros({2});
    Tensor beta = Tensor::from({2}, {0.7f, -0.3f});
    BnState st = BnState::make(2);
    Tensor y = batch_norm(x, gamma, beta, st, Mode::Train);
    for (int i = 0; i < 4; ++i)
        for (int c = 0; c < 2; ++c)
            for (int j = 0; j < 25; ++j)
                CHECK(y.data()[(static_cast<size_t>(i) * 2 + c) * 25 + j] ==
                      beta.data()[c]);
}

TEST_CASE("batch_norm infer mode applies the stored-statistics formula") {
    Tensor x = Tensor::from({1, 2}, {3.0f, -1.0f});
    Tensor gamma = Tensor::from({2}, {2.0f, 0.5f});
    Tensor beta = Tensor::from({2}, {1.0f, -1.0f});
    BnState st = BnState::make(2);
    st.run_mean = {0.5f, -0.25f};
    st.run_var = {4.0f, 0.25f};
    Tensor y = batch_norm(x, gamma, beta, st, Mode::Infer);
    for (int c = 0; c < 2; ++c) {
        const float want = gamma.data()[c] * (x.data()[c] - st.run_mean[c]) /
                               std::sqrt(st.run_var[c] + st.eps) +
                           beta.data()[c];
        CHECK(y.data()[c] == doctest::Approx(want).epsilon(1e-6));
    }
}

TEST_CASE("batch_norm survives zero batch variance") {
    Tensor x = Tensor::full({4, 1, 2, 2}, 3.0f);
    Tensor gamma = Tensor::full({1}, 1.0f);
    Tensor beta = Tensor::zeros({1});
    BnState st = BnState::make(1);
    Tensor out = batch_norm(x, gamma, beta, st, Mode::Train);
    for (float v : out.data()) CHECK(std::isfinite(v));
}

TEST_CASE("binarize: sign forward with sign(0) = +1, STE backward mask") {
    Tensor x = Tensor::from({3}, {0.3f, -0.2f, 0.0f}, true);
    Tensor y = binarize(x);
    CHECK(y.data() == std::vector<float>{1.0f, -1.0f, 1.0f});

    Tensor x2 = Tensor::from({3}, {0.5f, 2.0f, -0.7f}, true);
    Tensor y2 = binarize(x2);
    Tensor loss = oracles::weighted_sum(y2, {1.0f, 1.0f, 1.0f});
    loss.backward();
    CHECK(x2.grad() == std::vector<float>{1.0f, 0.0f, 1.0f});
}

TEST_CASE("binarize composed with batch_norm: surrogate gradient matches finite "
          "differences of the clipped-identity surrogate") {
    Rng rng(46);
    for (int it = 0; it < 20; ++it) {
        // Magnitudes kept clear of the |x| = 1 clamp kink and spread out per
        // channel, so differences stay one-sided and the batch variance
        // never collapses.
        std::vector<float> xdata(18);
        for (int c = 0; c < 3; ++c) {
            std::vector<float> mags = {0.1f, 0.3f, 0.5f, 0.7f, 1.3f, 1.6f};
            rng.shuffle(mags);
            for (int r = 0; r < 6; ++r)
                xdata[static_cast<size_t>(r) * 3 + static_cast<size_t>(c)] =
                    rng.bernoulli(0.5) ? mags[static_cast<size_t>(r)]
                                       : -mags[static_cast<size_t>(r)];
        }
        Tensor x = Tensor::from({6, 3}, std::move(xdata), true);
        Tensor gamma = rand_tensor({3}, rng, true, 0.5f, 1.5f);
        Tensor beta = rand_tensor({3}, rng, true, -0.5f, 0.5f);
        const auto r = oracles::rand_vec(18, rng);
        BnState st = BnState::make(3);

        // The straight-through estimator differentiates hardtanh; build that
        // surrogate network and compare its analytic grads to central
        // differences of the same forward.
        auto forward = [&]() -> double {
            NoGradGuard ng;
            BnState st2 = BnState::make(3);
            Tensor h = batch_norm(hardtanh(x), gamma, beta, st2, Mode::Train);
            double s = 0.0;
            for (size_t i = 0; i < r.size(); ++i)
                s += static_cast<double>(h.data()[i]) * r[i];
            return s;
        };
        Tensor h = batch_norm(hardtanh(x), gamma, beta, st, Mode::Train);
        Tensor loss = oracles::weighted_sum(h, r);
        loss.backward();
        CHECK(oracles::fd_rel_error(x.data(), x.grad(), forward) < 1e-3);
    }
}

TEST_CASE("fully connected: tiny dot product and zero input") {
    Tensor x = Tensor::from({1, 2}, {1.0f, 2.0f});
    Tensor w = Tensor::from({2, 1}, {1.0f, -1.0f});
    CHECK(matmul(x, w).data() == std::vector<float>{-1.0f});

    Rng rng(47);
    Tensor z = Tensor::zeros({3, 8});
    Tensor w2 = rand_sign_tensor({8, 3}, rng);
    Tensor out2 = matmul(z, w2);
    for (float v : out2.data()) CHECK(v == 0.0f);
}

TEST_CASE("fully connected matches the loop oracle") {
    Rng rng(48);
    for (int it = 0; it < 120; ++it) {
        const int n = 1 + static_cast<int>(rng.index(4));
        const int d = 1 + static_cast<int>(rng.index(16));
        const int k = 1 + static_cast<int>(rng.index(5));
        Tensor x = rand_tensor({n, d}, rng);
        Tensor w = it % 2 == 0 ? rand_sign_tensor({d, k}, rng) : rand_tensor({d, k}, rng);
        const auto got = matmul(x, w).data();
        const auto want = oracles::matmul_ref(x.data(), n, d, w.data(), k);
        for (size_t i = 0; i < got.size(); ++i)
            CHECK(std::abs(got[i] - want[i]) < 1e-5f);
    }
    CHECK_THROWS_AS(matmul(Tensor::zeros({2, 3}), Tensor::zeros({4, 2})), InvariantError);
}

TEST_CASE("softmax cross entropy: uniform logits cost log(C)/C") {
    Tensor z = Tensor::full({4, 3}, 0.25f);
    Tensor y = one_hot({0, 1, 2, 0}, 3);
    CHECK(softmax_cross_entropy(z, y).item() ==
          doctest::Approx(std::log(3.0) / 3.0).epsilon(1e-6));
}

TEST_CASE("softmax cross entropy saturates to zero for a confident margin") {
    Tensor z = Tensor::from({1, 3}, {50.0f, 0.0f, 0.0f});
    Tensor y = one_hot({0}, 3);
    CHECK(softmax_cross_entropy(z, y).item() < 1e-8f);
}

TEST_CASE("softmax cross entropy gradient matches double-precision finite differences") {
    Rng rng(49);
    for (int it = 0; it < 20; ++it) {
        const int n = 1 + static_cast<int>(rng.index(4));
        const int c = 2 + static_cast<int>(rng.index(4));
        Tensor z = rand_tensor({n, c}, rng, true, -2.0f, 2.0f);
        std::vector<int> labels;
        for (int i = 0; i < n; ++i) labels.push_back(static_cast<int>(rng.index(c)));
        Tensor loss = softmax_cross_entropy(z, one_hot(labels, c));
        loss.backward();

        std::vector<double> zd(z.data().begin(), z.data().end());
        std::vector<double> fd(zd.size());
        const double h = 1e-4;
        for (size_t i = 0; i < zd.size(); ++i) {
            const double v = zd[i];
            zd[i] = v + h;
            const double lp = oracles::softmax_ce_ref(zd, labels, n, c);
            zd[i] = v - h;
            const double lm = oracles::softmax_ce_ref(zd, labels, n, c);
            zd[i] = v;
            fd[i] = (lp - lm) / (2.0 * h);
        }
        double na = 0.0, nd = 0.0;
        for (size_t i = 0; i < fd.size(); ++i) {
            na += fd[i] * fd[i];
            const double d = static_cast<double>(z.grad()[i]) - fd[i];
            nd += d * d;
        }
        CHECK(std::sqrt(nd) / std::max(std::sqrt(na), 1e-12) < 1e-4);
    }
}

TEST_CASE("softmax rows sum to one and stay positive") {
    Rng rng(50);
    for (int it = 0; it < 200; ++it) {
        const int c = 2 + static_cast<int>(rng.index(6));
        Tensor z = rand_tensor({1, c}, rng, false, -30.0f, 30.0f);
        const auto p = softmax_probs(z);
        double s = 0.0;
        for (float v : p) {
            CHECK(v > 0.0f);
            s += v;
        }
        CHECK(std::abs(s - 1.0) < 1e-6);
    }
}

TEST_CASE("adam: first-step closed form, zero-grad fixpoint, odd symmetry") {
    AdamState st = AdamState::make(1);
    std::vector<float> p{0.0f};
    std::vector<float> g{0.5f};
    adam_step(p, g, st);
    const double want = -0.001 * 0.5 / (0.5 + 1e-8);
    CHECK(std::abs(p[0] - want) < 1e-9);
    CHECK(st.step_count == 1);

    AdamState st2 = AdamState::make(3);
    std::vector<float> p2{1.0f, -2.0f, 0.25f};
    const std::vector<float> before = p2;
    std::vector<float> g2{0.0f, 0.0f, 0.0f};
    adam_step(p2, g2, st2);
    CHECK(p2 == before);
    CHECK(st2.step_count == 1);

    AdamState st3 = AdamState::make(2);
    std::vector<float> p3{0.0f, 0.0f};
    std::vector<float> g3{0.3f, -0.3f};
    adam_step(p3, g3, st3);
    CHECK(p3[0] == -p3[1]);
}

TEST_CASE("adam step_count strictly increases") {
    AdamState st = AdamState::make(2);
    std::vector<float> p{0.0f, 1.0f};
    std::vector<float> g{0.1f, 0.1f};
    for (int i = 1; i <= 5; ++i) {
        adam_step(p, g, st);
        CHECK(st.step_count == i);
    }
}

TEST_CASE("binary weights pack/unpack is a bijection on sign patterns") {
    Rng rng(51);
    for (int it = 0; it < 200; ++it) {
        const int64_t n = 1 + rng.index(100);
        std::vector<float> signs(static_cast<size_t>(n));
        for (auto& v : signs) v = rng.bernoulli(0.5) ? 1.0f : -1.0f;
        const auto bits = BinaryWeights::pack(signs);
        CHECK(bits.size() == static_cast<size_t>((n + 7) / 8));
        CHECK(BinaryWeights::unpack(bits, n) == signs);
    }
}

TEST_CASE("gradient checks: every float-parameterized op vs finite differences") {
    Rng rng(52);

    SUBCASE("conv2d input and weights") {
        for (int it = 0; it < 20; ++it) {
            Tensor x = rand_tensor({1, 2, 5, 5}, rng, true);
            Tensor w = rand_tensor({3, 2, 3, 3}, rng, true);
            const auto r = oracles::rand_vec(75, rng);
            auto fwd = [&]() -> double {
                NoGradGuard ng;
                Tensor o = conv2d_3x3(x, w);
                double s = 0.0;
                for (size_t i = 0; i < r.size(); ++i)
                    s += static_cast<double>(o.data()[i]) * r[i];
                return s;
            };
            Tensor loss = oracles::weighted_sum(conv2d_3x3(x, w), r);
            loss.backward();
            CHECK(oracles::fd_rel_error(x.data(), x.grad(), fwd) < 1e-3);
            CHECK(oracles::fd_rel_error(w.data(), w.grad(), fwd) < 1e-3);
        }
    }

    SUBCASE("binary conv via the latent-shadow surrogate") {
        for (int it = 0; it < 20; ++it) {
            Tensor x = rand_tensor({1, 2, 4, 4}, rng, true);
            Tensor latent = rand_tensor({2, 2, 3, 3}, rng, true, -0.9f, 0.9f);
            const auto r = oracles::rand_vec(32, rng);
            auto fwd = [&]() -> double {
                NoGradGuard ng;
                Tensor o = conv2d_3x3(x, hardtanh(latent));
                double s = 0.0;
                for (size_t i = 0; i < r.size(); ++i)
                    s += static_cast<double>(o.data()[i]) * r[i];
                return s;
            };
            Tensor loss = oracles::weighted_sum(conv2d_3x3(x, hardtanh(latent)), r);
            loss.backward();
            CHECK(oracles::fd_rel_error(latent.data(), latent.grad(), fwd, 5e-3f) < 1e-3);
        }
    }

    SUBCASE("matmul, bias, conv1x1") {
        for (int it = 0; it < 20; ++it) {
            Tensor x = rand_tensor({3, 6}, rng, true);
            Tensor w = rand_tensor({6, 4}, rng, true);
            Tensor b = rand_tensor({4}, rng, true);
            const auto r = oracles::rand_vec(12, rng);
            auto fwd = [&]() -> double {
                NoGradGuard ng;
                Tensor o = add_rowvec(matmul(x, w), b);
                double s = 0.0;
                for (size_t i = 0; i < r.size(); ++i)
                    s += static_cast<double>(o.data()[i]) * r[i];
                return s;
            };
            Tensor loss = oracles::weighted_sum(add_rowvec(matmul(x, w), b), r);
            loss.backward();
            CHECK(oracles::fd_rel_error(x.data(), x.grad(), fwd) < 1e-3);
            CHECK(oracles::fd_rel_error(w.data(), w.grad(), fwd) < 1e-3);
            CHECK(oracles::fd_rel_error(b.data(), b.grad(), fwd) < 1e-3);

            Tensor xc = rand_tensor({1, 4, 3, 3}, rng, true);
            Tensor wc = rand_tensor({2, 4}, rng, true);
            Tensor bc = rand_tensor({2}, rng, true);
            const auto rc = oracles::rand_vec(18, rng);
            auto fwdc = [&]() -> double {
                NoGradGuard ng;
                Tensor o = conv1x1(xc, wc, bc);
                double s = 0.0;
                for (size_t i = 0; i < rc.size(); ++i)
                    s += static_cast<double>(o.data()[i]) * rc[i];
                return s;
            };
            Tensor lossc = oracles::weighted_sum(conv1x1(xc, wc, bc), rc);
            lossc.backward();
            CHECK(oracles::fd_rel_error(xc.data(), xc.grad(), fwdc) < 1e-3);
            CHECK(oracles::fd_rel_error(wc.data(), wc.grad(), fwdc) < 1e-3);
            CHECK(oracles::fd_rel_error(bc.data(), bc.grad(), fwdc) < 1e-3);
        }
    }

    SUBCASE("batch_norm input, gamma, beta (train mode)") {
        for (int it = 0; it < 20; ++it) {
            Tensor x = rand_tensor({5, 3, 2, 2}, rng, true, -2.0f, 2.0f);
            Tensor gamma = rand_tensor({3}, rng, true, 0.5f, 1.5f);
            Tensor beta = rand_tensor({3}, rng, true, -0.5f, 0.5f);
            const auto r = oracles::rand_vec(60, rng);
            auto fwd = [&]() -> double {
                NoGradGuard ng;
                BnState st = BnState::make(3);
                Tensor o = batch_norm(x, gamma, beta, st, Mode::Train);
                double s = 0.0;
                for (size_t i = 0; i < r.size(); ++i)
                    s += static_cast<double>(o.data()[i]) * r[i];
                return s;
            };
            BnState st = BnState::make(3);
            Tensor loss =
                oracles::weighted_sum(batch_norm(x, gamma, beta, st, Mode::Train), r);
            loss.backward();
            CHECK(oracles::fd_rel_error(x.data(), x.grad(), fwd) < 1e-3);
            CHECK(oracles::fd_rel_error(gamma.data(), gamma.grad(), fwd) < 1e-3);
            CHECK(oracles::fd_rel_error(beta.data(), beta.grad(), fwd) < 1e-3);
        }
    }

    SUBCASE("maxpool input (tie-free values)") {
        for (int it = 0; it < 20; ++it) {
            Tensor x = Tensor::from({1, 1, 6, 6}, oracles::spaced_vec(36, rng), true);
            const auto r = oracles::rand_vec(9, rng);
            auto fwd = [&]() -> double {
                NoGradGuard ng;
                Tensor o = maxpool_3x3_s2(x);
                double s = 0.0;
                for (size_t i = 0; i < r.size(); ++i)
                    s += static_cast<double>(o.data()[i]) * r[i];
                return s;
            };
            Tensor loss = oracles::weighted_sum(maxpool_3x3_s2(x), r);
            loss.backward();
            CHECK(oracles::fd_rel_error(x.data(), x.grad(), fwd, 1e-2f) < 1e-3);
        }
    }

    SUBCASE("aggregations: mp (tie-free), ap, concat") {
        for (int it = 0; it < 20; ++it) {
            std::vector<float> all = oracles::spaced_vec(24, rng);
            std::vector<Tensor> xs;
            for (int d = 0; d < 3; ++d)
                xs.push_back(Tensor::from(
                    {2, 4}, std::vector<float>(all.begin() + d * 8,
                                               all.begin() + (d + 1) * 8),
                    true));
            const auto r = oracles::rand_vec(8, rng);
            for (int which = 0; which < 3; ++which) {
                auto agg = [&](const std::vector<Tensor>& v) {
                    if (which == 0) return aggregate_mp(v);
                    if (which == 1) return aggregate_ap(v);
                    return flatten2(concat_dim1(v));
                };
                const auto rr = which == 2 ? oracles::rand_vec(24, rng) : r;
                auto fwd = [&]() -> double {
                    NoGradGuard ng;
                    Tensor o = agg(xs);
                    double s = 0.0;
                    for (size_t i = 0; i < rr.size(); ++i)
                        s += static_cast<double>(o.data()[i]) * rr[i];
                    return s;
                };
                Tensor loss = oracles::weighted_sum(agg(xs), rr);
                loss.backward();
                for (auto& t : xs) {
                    CHECK(oracles::fd_rel_error(t.data(), t.grad(), fwd, 1e-2f) < 1e-3);
                    t.zero_grad();
                }
            }
        }
    }
}

TEST_CASE("forward and backward keep values finite") {
    Rng rng(53);
    Tensor x = rand_tensor({4, 3, 8, 8}, rng, false, -1.0f, 1.0f);
    Tensor w = rand_tensor({5, 3, 3, 3}, rng, true, -0.5f, 0.5f);
    Tensor gamma = Tensor::full({5}, 1.0f, true);
    Tensor beta = Tensor::zeros({5}, true);
    BnState st = BnState::make(5);
    Tensor h = binarize(batch_norm(maxpool_3x3_s2(conv2d_3x3(x, binarize(w))), gamma,
                                   beta, st, Mode::Train));
    Tensor flat = flatten2(h);
    Tensor fc = rand_tensor({flat.dim(1), 3}, rng, true, -0.1f, 0.1f);
    Tensor loss = softmax_cross_entropy(matmul(flat, fc), one_hot({0, 1, 2, 0}, 3));
    loss.backward();
    CHECK(std::isfinite(loss.item()));
    for (float v : w.grad()) CHECK(std::isfinite(v));
    for (float v : fc.grad()) CHECK(std::isfinite(v));
    for (float v : gamma.grad()) CHECK(std::isfinite(v));
}

TEST_SUITE_END();
