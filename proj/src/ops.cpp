#include "ddnn/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>

#include "ddnn/errors.hpp"

namespace ddnn {
namespace {

std::string shape_str(const std::vector<int>& s) {
    std::ostringstream os;
    os << "(";
    for (size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
    os << ")";
    return os.str();
}

void require(bool cond, const std::string& msg) {
    if (!cond) throw InvariantError(msg);
}

void require_rank(const Tensor& t, size_t rank, const char* what) {
    if (t.shape().size() != rank)
        throw InvariantError(std::string(what) + ": expected rank " +
                             std::to_string(rank) + ", got " + shape_str(t.shape()));
}

} // namespace

// ---------------------------------------------------------------------------
// conv2d 3x3, stride 1, pad 1

Tensor conv2d_3x3(const Tensor& input, const Tensor& weights) {
    require_rank(input, 4, "conv2d input");
    require_rank(weights, 4, "conv2d weights");
    const int N = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
    const int F = weights.dim(0);
    if (weights.dim(1) != C || weights.dim(2) != 3 || weights.dim(3) != 3)
        throw InvariantError("conv2d shape mismatch: input " + shape_str(input.shape()) +
                             " vs weights " + shape_str(weights.shape()) +
                             " (want Fx" + std::to_string(C) + "x3x3)");

    Tensor out = make_op_output({N, F, H, W}, {&input, &weights});
    const float* X = input.data().data();
    const float* Wt = weights.data().data();
    float* O = out.data().data();

    for (int n = 0; n < N; ++n) {
        for (int f = 0; f < F; ++f) {
            float* obase = O + (static_cast<int64_t>(n) * F + f) * H * W;
            for (int c = 0; c < C; ++c) {
                const float* xbase = X + (static_cast<int64_t>(n) * C + c) * H * W;
                const float* wf = Wt + (static_cast<int64_t>(f) * C + c) * 9;
                for (int ky = 0; ky < 3; ++ky) {
                    const int y0 = std::max(0, 1 - ky);
                    const int y1 = std::min(H, H + 1 - ky);
                    for (int kx = 0; kx < 3; ++kx) {
                        const float wv = wf[ky * 3 + kx];
                        const int x0 = std::max(0, 1 - kx);
                        const int x1 = std::min(W, W + 1 - kx);
                        const int dx = kx - 1;
                        for (int y = y0; y < y1; ++y) {
                            const float* xr = xbase + (y + ky - 1) * W + dx;
                            float* orow = obase + y * W;
                            for (int x = x0; x < x1; ++x) orow[x] += wv * xr[x];
                        }
                    }
                }
            }
        }
    }

    if (out.requires_grad()) {
        auto xn = input.node_ptr();
        auto wn = weights.node_ptr();
        out.node()->backward_fn = [xn, wn, N, C, H, W, F](TensorNode& self) {
            const float* dO = self.grad.data();
            const bool need_dx = xn->requires_grad;
            const bool need_dw = wn->requires_grad;
            if (need_dx) xn->ensure_grad();
            if (need_dw) wn->ensure_grad();
            const float* X = xn->data.data();
            const float* Wt = wn->data.data();
            for (int n = 0; n < N; ++n) {
                for (int f = 0; f < F; ++f) {
                    const float* dobase = dO + (static_cast<int64_t>(n) * F + f) * H * W;
                    for (int c = 0; c < C; ++c) {
                        const int64_t xoff = (static_cast<int64_t>(n) * C + c) * H * W;
                        const int64_t woff = (static_cast<int64_t>(f) * C + c) * 9;
                        for (int ky = 0; ky < 3; ++ky) {
                            const int y0 = std::max(0, 1 - ky);
                            const int y1 = std::min(H, H + 1 - ky);
                            for (int kx = 0; kx < 3; ++kx) {
                                const int x0 = std::max(0, 1 - kx);
                                const int x1 = std::min(W, W + 1 - kx);
                                const int dx = kx - 1;
                                if (need_dx) {
                                    const float wv = Wt[woff + ky * 3 + kx];
                                    float* dxbase = xn->grad.data() + xoff;
                                    for (int y = y0; y < y1; ++y) {
                                        float* dxr = dxbase + (y + ky - 1) * W + dx;
                                        const float* dor = dobase + y * W;
                                        for (int x = x0; x < x1; ++x) dxr[x] += wv * dor[x];
                                    }
                                }
                                if (need_dw) {
                                    const float* xbase = X + xoff;
                                    float s = 0.0f;
                                    for (int y = y0; y < y1; ++y) {
                                        const float* xr = xbase + (y + ky - 1) * W + dx;
                                        const float* dor = dobase + y * W;
                                        for (int x = x0; x < x1; ++x) s += xr[x] * dor[x];
                                    }
                                    wn->grad[woff + ky * 3 + kx] += s;
                                }
                            }
                        }
                    }
                }
            }
        };
    }
    return out;
}

// ---------------------------------------------------------------------------
// conv 1x1 with bias

Tensor conv1x1(const Tensor& input, const Tensor& weights, const Tensor& bias) {
    require_rank(input, 4, "conv1x1 input");
    require_rank(weights, 2, "conv1x1 weights");
    require_rank(bias, 1, "conv1x1 bias");
    const int N = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
    const int F = weights.dim(0);
    if (weights.dim(1) != C || bias.dim(0) != F)
        throw InvariantError("conv1x1 shape mismatch: input " + shape_str(input.shape()) +
                             " weights " + shape_str(weights.shape()) + " bias " +
                             shape_str(bias.shape()));
    const int HW = H * W;

    Tensor out = make_op_output({N, F, H, W}, {&input, &weights, &bias});
    const float* X = input.data().data();
    const float* Wt = weights.data().data();
    const float* B = bias.data().data();
    float* O = out.data().data();
    for (int n = 0; n < N; ++n) {
        for (int f = 0; f < F; ++f) {
            float* orow = O + (static_cast<int64_t>(n) * F + f) * HW;
            std::fill(orow, orow + HW, B[f]);
            for (int c = 0; c < C; ++c) {
                const float wv = Wt[f * C + c];
                const float* xr = X + (static_cast<int64_t>(n) * C + c) * HW;
                for (int i = 0; i < HW; ++i) orow[i] += wv * xr[i];
            }
        }
    }

    if (out.requires_grad()) {
        auto xn = input.node_ptr();
        auto wn = weights.node_ptr();
        auto bn = bias.node_ptr();
        out.node()->backward_fn = [xn, wn, bn, N, C, F, HW](TensorNode& self) {
            const float* dO = self.grad.data();
            if (bn->requires_grad) {
                bn->ensure_grad();
                for (int n = 0; n < N; ++n)
                    for (int f = 0; f < F; ++f) {
                        const float* dor = dO + (static_cast<int64_t>(n) * F + f) * HW;
                        float s = 0.0f;
                        for (int i = 0; i < HW; ++i) s += dor[i];
                        bn->grad[f] += s;
                    }
            }
            if (wn->requires_grad) {
                wn->ensure_grad();
                for (int n = 0; n < N; ++n)
                    for (int f = 0; f < F; ++f) {
                        const float* dor = dO + (static_cast<int64_t>(n) * F + f) * HW;
                        for (int c = 0; c < C; ++c) {
                            const float* xr = xn->data.data() +
                                              (static_cast<int64_t>(n) * C + c) * HW;
                            float s = 0.0f;
                            for (int i = 0; i < HW; ++i) s += xr[i] * dor[i];
                            wn->grad[f * C + c] += s;
                        }
                    }
            }
            if (xn->requires_grad) {
                xn->ensure_grad();
                for (int n = 0; n < N; ++n)
                    for (int f = 0; f < F; ++f) {
                        const float* dor = dO + (static_cast<int64_t>(n) * F + f) * HW;
                        for (int c = 0; c < C; ++c) {
                            const float wv = wn->data[f * C + c];
                            float* dxr = xn->grad.data() +
                                         (static_cast<int64_t>(n) * C + c) * HW;
                            for (int i = 0; i < HW; ++i) dxr[i] += wv * dor[i];
                        }
                    }
            }
        };
    }
    return out;
}

// ---------------------------------------------------------------------------
// maxpool 3x3, stride 2, pad 1

Tensor maxpool_3x3_s2(const Tensor& input) {
    require_rank(input, 4, "maxpool input");
    const int N = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
    const int Ho = (H - 1) / 2 + 1;
    const int Wo = (W - 1) / 2 + 1;

    Tensor out = make_op_output({N, C, Ho, Wo}, {&input});
    const float* X = input.data().data();
    float* O = out.data().data();
    std::vector<int32_t> argmax(static_cast<size_t>(out.numel()));

    int64_t oi = 0;
    for (int64_t nc = 0; nc < static_cast<int64_t>(N) * C; ++nc) {
        const float* xb = X + nc * H * W;
        for (int oy = 0; oy < Ho; ++oy) {
            const int y0 = std::max(0, 2 * oy - 1);
            const int y1 = std::min(H, 2 * oy + 2);
            for (int ox = 0; ox < Wo; ++ox) {
                const int x0 = std::max(0, 2 * ox - 1);
                const int x1 = std::min(W, 2 * ox + 2);
                float best = xb[y0 * W + x0];
                int32_t besti = y0 * W + x0;
                for (int y = y0; y < y1; ++y)
                    for (int x = x0; x < x1; ++x) {
                        const int32_t i = y * W + x;
                        if (xb[i] > best) { // first max wins on ties
                            best = xb[i];
                            besti = i;
                        }
                    }
                O[oi] = best;
                argmax[static_cast<size_t>(oi)] = besti;
                ++oi;
            }
        }
    }

    if (out.requires_grad()) {
        auto xn = input.node_ptr();
        const int64_t HWin = static_cast<int64_t>(H) * W;
        const int64_t HWout = static_cast<int64_t>(Ho) * Wo;
        out.node()->backward_fn = [xn, argmax = std::move(argmax), N, C, HWin,
                                   HWout](TensorNode& self) {
            if (!xn->requires_grad) return;
            xn->ensure_grad();
            for (int64_t nc = 0; nc < static_cast<int64_t>(N) * C; ++nc) {
                float* dx = xn->grad.data() + nc * HWin;
                const float* dor = self.grad.data() + nc * HWout;
                const int32_t* am = argmax.data() + nc * HWout;
                for (int64_t i = 0; i < HWout; ++i) dx[am[i]] += dor[i];
            }
        };
    }
    return out;
}

// ---------------------------------------------------------------------------
// batch normalization

Tensor batch_norm(const Tensor& input, const Tensor& gamma, const Tensor& beta,
                  BnState& state, Mode mode) {
    require(input.shape().size() >= 2, "batch_norm input must have rank >= 2");
    const int N = input.dim(0);
    const int C = input.dim(1);
    require(gamma.numel() == C && beta.numel() == C,
            "batch_norm gamma/beta length must equal channel count " + std::to_string(C));
    require(static_cast<int>(state.run_mean.size()) == C,
            "batch_norm state channel count mismatch");
    const int64_t inner = input.numel() / (static_cast<int64_t>(N) * C);
    const int64_t m = static_cast<int64_t>(N) * inner;

    Tensor out = make_op_output(input.shape(), {&input, &gamma, &beta});
    const float* X = input.data().data();
    const float* G = gamma.data().data();
    const float* B = beta.data().data();
    float* O = out.data().data();

    std::vector<float> mean(static_cast<size_t>(C));
    std::vector<float> inv_std(static_cast<size_t>(C));

    if (mode == Mode::Train) {
        for (int c = 0; c < C; ++c) {
            double s = 0.0;
            for (int n = 0; n < N; ++n) {
                const float* xr = X + (static_cast<int64_t>(n) * C + c) * inner;
                for (int64_t i = 0; i < inner; ++i) s += xr[i];
            }
            const double mu = s / static_cast<double>(m);
            double v = 0.0;
            for (int n = 0; n < N; ++n) {
                const float* xr = X + (static_cast<int64_t>(n) * C + c) * inner;
                for (int64_t i = 0; i < inner; ++i) {
                    const double d = xr[i] - mu;
                    v += d * d;
                }
            }
            const double var = v / static_cast<double>(m);
            mean[c] = static_cast<float>(mu);
            inv_std[c] = static_cast<float>(1.0 / std::sqrt(var + state.eps));
            state.run_mean[c] = state.momentum * state.run_mean[c] +
                                (1.0f - state.momentum) * static_cast<float>(mu);
            state.run_var[c] = state.momentum * state.run_var[c] +
                               (1.0f - state.momentum) * static_cast<float>(var);
        }
    } else {
        for (int c = 0; c < C; ++c) {
            mean[c] = state.run_mean[c];
            inv_std[c] = 1.0f / std::sqrt(state.run_var[c] + state.eps);
        }
    }

    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
            const float* xr = X + (static_cast<int64_t>(n) * C + c) * inner;
            float* orow = O + (static_cast<int64_t>(n) * C + c) * inner;
            const float mu = mean[c], is = inv_std[c], g = G[c], b = B[c];
            for (int64_t i = 0; i < inner; ++i) orow[i] = g * (xr[i] - mu) * is + b;
        }

    if (out.requires_grad()) {
        auto xn = input.node_ptr();
        auto gn = gamma.node_ptr();
        auto bn = beta.node_ptr();
        const bool train = (mode == Mode::Train);
        out.node()->backward_fn = [xn, gn, bn, mean = std::move(mean),
                                   inv_std = std::move(inv_std), N, C, inner, m,
                                   train](TensorNode& self) {
            const float* dY = self.grad.data();
            const float* X = xn->data.data();
            if (gn->requires_grad) gn->ensure_grad();
            if (bn->requires_grad) bn->ensure_grad();
            if (xn->requires_grad) xn->ensure_grad();
            for (int c = 0; c < C; ++c) {
                const float mu = mean[static_cast<size_t>(c)];
                const float is = inv_std[static_cast<size_t>(c)];
                double sum_dy = 0.0, sum_dy_xhat = 0.0;
                for (int n = 0; n < N; ++n) {
                    const int64_t off = (static_cast<int64_t>(n) * C + c) * inner;
                    const float* dyr = dY + off;
                    const float* xr = X + off;
                    for (int64_t i = 0; i < inner; ++i) {
                        sum_dy += dyr[i];
                        sum_dy_xhat += dyr[i] * ((xr[i] - mu) * is);
                    }
                }
                if (gn->requires_grad) gn->grad[c] += static_cast<float>(sum_dy_xhat);
                if (bn->requires_grad) bn->grad[c] += static_cast<float>(sum_dy);
                if (!xn->requires_grad) continue;
                const float g = gn->data[c];
                if (train) {
                    const float k = g * is;
                    const float a = static_cast<float>(sum_dy / static_cast<double>(m));
                    const float b2 = static_cast<float>(sum_dy_xhat / static_cast<double>(m));
                    for (int n = 0; n < N; ++n) {
                        const int64_t off = (static_cast<int64_t>(n) * C + c) * inner;
                        const float* dyr = dY + off;
                        const float* xr = X + off;
                        float* dxr = xn->grad.data() + off;
                        for (int64_t i = 0; i < inner; ++i) {
                            const float xhat = (xr[i] - mu) * is;
                            dxr[i] += k * (dyr[i] - a - xhat * b2);
                        }
                    }
                } else {
                    const float k = g * is;
                    for (int n = 0; n < N; ++n) {
                        const int64_t off = (static_cast<int64_t>(n) * C + c) * inner;
                        const float* dyr = dY + off;
                        float* dxr = xn->grad.data() + off;
                        for (int64_t i = 0; i < inner; ++i) dxr[i] += k * dyr[i];
                    }
                }
            }
        };
    }
    return out;
}

// ---------------------------------------------------------------------------
// activations

namespace {

Tensor ste_unary(const Tensor& input, bool sign_forward) {
    Tensor out = make_op_output(input.shape(), {&input});
    const float* X = input.data().data();
    float* O = out.data().data();
    const int64_t n = input.numel();
    if (sign_forward) {
        for (int64_t i = 0; i < n; ++i) O[i] = X[i] >= 0.0f ? 1.0f : -1.0f;
    } else {
        for (int64_t i = 0; i < n; ++i) O[i] = std::clamp(X[i], -1.0f, 1.0f);
    }
    if (out.requires_grad()) {
        auto xn = input.node_ptr();
        out.node()->backward_fn = [xn, n](TensorNode& self) {
            if (!xn->requires_grad) return;
            xn->ensure_grad();
            const float* dy = self.grad.data();
            const float* x = xn->data.data();
            float* dx = xn->grad.data();
            for (int64_t i = 0; i < n; ++i)
                if (x[i] >= -1.0f && x[i] <= 1.0f) dx[i] += dy[i];
        };
    }
    return out;
}

} // namespace

Tensor binarize(const Tensor& input) { return ste_unary(input, true); }
Tensor hardtanh(const Tensor& input) { return ste_unary(input, false); }

// ---------------------------------------------------------------------------
// linear algebra

Tensor matmul(const Tensor& input, const Tensor& weights) {
    require_rank(input, 2, "matmul input");
    require_rank(weights, 2, "matmul weights");
    const int N = input.dim(0), D = input.dim(1);
    const int K = weights.dim(1);
    if (weights.dim(0) != D)
        throw InvariantError("matmul shape mismatch: " + shape_str(input.shape()) +
                             " @ " + shape_str(weights.shape()));

    Tensor out = make_op_output({N, K}, {&input, &weights});
    const float* X = input.data().data();
    const float* Wt = weights.data().data();
    float* O = out.data().data();
    for (int n = 0; n < N; ++n) {
        float* orow = O + static_cast<int64_t>(n) * K;
        const float* xr = X + static_cast<int64_t>(n) * D;
        for (int d = 0; d < D; ++d) {
            const float xv = xr[d];
            if (xv == 0.0f) continue;
            const float* wr = Wt + static_cast<int64_t>(d) * K;
            for (int k = 0; k < K; ++k) orow[k] += xv * wr[k];
        }
    }

    if (out.requires_grad()) {
        auto xn = input.node_ptr();
        auto wn = weights.node_ptr();
        out.node()->backward_fn = [xn, wn, N, D, K](TensorNode& self) {
            const float* dO = self.grad.data();
            if (xn->requires_grad) {
                xn->ensure_grad();
                for (int n = 0; n < N; ++n) {
                    const float* dor = dO + static_cast<int64_t>(n) * K;
                    float* dxr = xn->grad.data() + static_cast<int64_t>(n) * D;
                    for (int d = 0; d < D; ++d) {
                        const float* wr = wn->data.data() + static_cast<int64_t>(d) * K;
                        float s = 0.0f;
                        for (int k = 0; k < K; ++k) s += dor[k] * wr[k];
                        dxr[d] += s;
                    }
                }
            }
            if (wn->requires_grad) {
                wn->ensure_grad();
                for (int n = 0; n < N; ++n) {
                    const float* xr = xn->data.data() + static_cast<int64_t>(n) * D;
                    const float* dor = dO + static_cast<int64_t>(n) * K;
                    for (int d = 0; d < D; ++d) {
                        const float xv = xr[d];
                        if (xv == 0.0f) continue;
                        float* dwr = wn->grad.data() + static_cast<int64_t>(d) * K;
                        for (int k = 0; k < K; ++k) dwr[k] += xv * dor[k];
                    }
                }
            }
        };
    }
    return out;
}

Tensor add_rowvec(const Tensor& input, const Tensor& bias) {
    require_rank(input, 2, "add_rowvec input");
    require_rank(bias, 1, "add_rowvec bias");
    const int N = input.dim(0), K = input.dim(1);
    require(bias.dim(0) == K, "add_rowvec bias length mismatch");

    Tensor out = make_op_output({N, K}, {&input, &bias});
    const float* X = input.data().data();
    const float* B = bias.data().data();
    float* O = out.data().data();
    for (int n = 0; n < N; ++n)
        for (int k = 0; k < K; ++k) O[n * K + k] = X[n * K + k] + B[k];

    if (out.requires_grad()) {
        auto xn = input.node_ptr();
        auto bn = bias.node_ptr();
        out.node()->backward_fn = [xn, bn, N, K](TensorNode& self) {
            const float* dO = self.grad.data();
            if (xn->requires_grad) {
                xn->ensure_grad();
                for (int64_t i = 0; i < static_cast<int64_t>(N) * K; ++i)
                    xn->grad[i] += dO[i];
            }
            if (bn->requires_grad) {
                bn->ensure_grad();
                for (int n = 0; n < N; ++n)
                    for (int k = 0; k < K; ++k) bn->grad[k] += dO[n * K + k];
            }
        };
    }
    return out;
}

Tensor flatten2(const Tensor& input) {
    const int N = input.dim(0);
    const int rest = static_cast<int>(input.numel() / N);
    Tensor out = make_op_output({N, rest}, {&input});
    out.data() = input.data();
    if (out.requires_grad()) {
        auto xn = input.node_ptr();
        out.node()->backward_fn = [xn](TensorNode& self) {
            if (!xn->requires_grad) return;
            xn->ensure_grad();
            for (size_t i = 0; i < self.grad.size(); ++i) xn->grad[i] += self.grad[i];
        };
    }
    return out;
}

Tensor concat_dim1(const std::vector<Tensor>& inputs) {
    require(!inputs.empty(), "concat_dim1: empty input list");
    const auto& s0 = inputs[0].shape();
    require(s0.size() >= 2, "concat_dim1 inputs must have rank >= 2");
    const int N = s0[0];
    int64_t inner = 1;
    for (size_t i = 2; i < s0.size(); ++i) inner *= s0[i];
    int Ctot = 0;
    for (const auto& t : inputs) {
        const auto& s = t.shape();
        require(s.size() == s0.size() && s[0] == N, "concat_dim1 extent mismatch");
        for (size_t i = 2; i < s.size(); ++i)
            require(s[i] == s0[i], "concat_dim1 extent mismatch");
        Ctot += s[1];
    }
    std::vector<int> oshape = s0;
    oshape[1] = Ctot;
    std::vector<const Tensor*> parents;
    for (const auto& t : inputs) parents.push_back(&t);
    Tensor out = make_op_output(oshape, parents);

    float* O = out.data().data();
    int coff = 0;
    std::vector<int> offsets;
    for (const auto& t : inputs) {
        offsets.push_back(coff);
        const int Ci = t.shape()[1];
        const float* X = t.data().data();
        for (int n = 0; n < N; ++n)
            std::memcpy(O + (static_cast<int64_t>(n) * Ctot + coff) * inner,
                        X + static_cast<int64_t>(n) * Ci * inner,
                        static_cast<size_t>(Ci) * inner * sizeof(float));
        coff += Ci;
    }

    if (out.requires_grad()) {
        std::vector<std::shared_ptr<TensorNode>> nodes;
        for (const auto& t : inputs) nodes.push_back(t.node_ptr());
        out.node()->backward_fn = [nodes, offsets, N, Ctot, inner](TensorNode& self) {
            for (size_t i = 0; i < nodes.size(); ++i) {
                auto& xn = nodes[i];
                if (!xn->requires_grad) continue;
                xn->ensure_grad();
                const int Ci = xn->shape[1];
                for (int n = 0; n < N; ++n) {
                    const float* src = self.grad.data() +
                                       (static_cast<int64_t>(n) * Ctot + offsets[i]) * inner;
                    float* dst = xn->grad.data() + static_cast<int64_t>(n) * Ci * inner;
                    for (int64_t j = 0; j < Ci * inner; ++j) dst[j] += src[j];
                }
            }
        };
    }
    return out;
}

Tensor scale(const Tensor& input, float s) {
    Tensor out = make_op_output(input.shape(), {&input});
    const float* X = input.data().data();
    float* O = out.data().data();
    const int64_t n = input.numel();
    for (int64_t i = 0; i < n; ++i) O[i] = s * X[i];
    if (out.requires_grad()) {
        auto xn = input.node_ptr();
        out.node()->backward_fn = [xn, s, n](TensorNode& self) {
            if (!xn->requires_grad) return;
            xn->ensure_grad();
            for (int64_t i = 0; i < n; ++i) xn->grad[i] += s * self.grad[i];
        };
    }
    return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
    require(a.shape() == b.shape(), "add: shape mismatch " + shape_str(a.shape()) +
                                        " vs " + shape_str(b.shape()));
    Tensor out = make_op_output(a.shape(), {&a, &b});
    const float* A = a.data().data();
    const float* B = b.data().data();
    float* O = out.data().data();
    const int64_t n = a.numel();
    for (int64_t i = 0; i < n; ++i) O[i] = A[i] + B[i];
    if (out.requires_grad()) {
        auto an = a.node_ptr();
        auto bn = b.node_ptr();
        out.node()->backward_fn = [an, bn, n](TensorNode& self) {
            for (auto& xn : {an, bn}) {
                if (!xn->requires_grad) continue;
                xn->ensure_grad();
                for (int64_t i = 0; i < n; ++i) xn->grad[i] += self.grad[i];
            }
        };
    }
    return out;
}

// ---------------------------------------------------------------------------
// aggregation

namespace {

void check_agg_inputs(const std::vector<Tensor>& inputs, const char* what) {
    if (inputs.empty())
        throw InvariantError(std::string(what) + ": empty input list rejected");
    for (const auto& t : inputs)
        if (t.shape() != inputs[0].shape())
            throw InvariantError(std::string(what) + ": input shapes differ");
}

} // namespace

Tensor aggregate_mp(const std::vector<Tensor>& inputs) {
    check_agg_inputs(inputs, "aggregate_mp");
    std::vector<const Tensor*> parents;
    for (const auto& t : inputs) parents.push_back(&t);
    Tensor out = make_op_output(inputs[0].shape(), parents);
    const int64_t n = out.numel();
    const size_t k = inputs.size();

    float* O = out.data().data();
    std::vector<int16_t> argdev(static_cast<size_t>(n), 0);
    std::memcpy(O, inputs[0].data().data(), static_cast<size_t>(n) * sizeof(float));
    for (size_t d = 1; d < k; ++d) {
        const float* X = inputs[d].data().data();
        for (int64_t i = 0; i < n; ++i)
            if (X[i] > O[i]) { // ties stay with the lowest device index
                O[i] = X[i];
                argdev[static_cast<size_t>(i)] = static_cast<int16_t>(d);
            }
    }

    if (out.requires_grad()) {
        std::vector<std::shared_ptr<TensorNode>> nodes;
        for (const auto& t : inputs) nodes.push_back(t.node_ptr());
        out.node()->backward_fn = [nodes, argdev = std::move(argdev), n](TensorNode& self) {
            for (auto& xn : nodes)
                if (xn->requires_grad) xn->ensure_grad();
            for (int64_t i = 0; i < n; ++i) {
                auto& xn = nodes[static_cast<size_t>(argdev[static_cast<size_t>(i)])];
                if (xn->requires_grad) xn->grad[i] += self.grad[i];
            }
        };
    }
    return out;
}

Tensor aggregate_ap(const std::vector<Tensor>& inputs) {
    check_agg_inputs(inputs, "aggregate_ap");
    std::vector<const Tensor*> parents;
    for (const auto& t : inputs) parents.push_back(&t);
    Tensor out = make_op_output(inputs[0].shape(), parents);
    const int64_t n = out.numel();
    const float inv = 1.0f / static_cast<float>(inputs.size());

    float* O = out.data().data();
    for (const auto& t : inputs) {
        const float* X = t.data().data();
        for (int64_t i = 0; i < n; ++i) O[i] += X[i];
    }
    for (int64_t i = 0; i < n; ++i) O[i] *= inv;

    if (out.requires_grad()) {
        std::vector<std::shared_ptr<TensorNode>> nodes;
        for (const auto& t : inputs) nodes.push_back(t.node_ptr());
        out.node()->backward_fn = [nodes, inv, n](TensorNode& self) {
            for (auto& xn : nodes) {
                if (!xn->requires_grad) continue;
                xn->ensure_grad();
                for (int64_t i = 0; i < n; ++i) xn->grad[i] += inv * self.grad[i];
            }
        };
    }
    return out;
}

Tensor aggregate_cc(const std::vector<Tensor>& inputs, const Tensor& proj_w,
                    const Tensor& proj_b) {
    check_agg_inputs(inputs, "aggregate_cc");
    require_rank(inputs[0], 2, "aggregate_cc inputs");
    const int d = inputs[0].dim(1);
    const int nd = static_cast<int>(inputs.size()) * d;
    if (proj_w.dim(0) != nd || proj_w.dim(1) != d)
        throw InvariantError("aggregate_cc projection shape mismatch: want (" +
                             std::to_string(nd) + "x" + std::to_string(d) + "), got " +
                             shape_str(proj_w.shape()));
    Tensor cat = concat_dim1(inputs);
    return add_rowvec(matmul(cat, proj_w), proj_b);
}

// ---------------------------------------------------------------------------
// loss

Tensor one_hot(const std::vector<int>& labels, int num_classes) {
    Tensor t = Tensor::zeros({static_cast<int>(labels.size()), num_classes});
    for (size_t i = 0; i < labels.size(); ++i) {
        const int c = labels[i];
        if (c < 0 || c >= num_classes)
            throw InvariantError("one_hot label out of range: " + std::to_string(c));
        t.data()[i * static_cast<size_t>(num_classes) + static_cast<size_t>(c)] = 1.0f;
    }
    return t;
}

Tensor softmax_cross_entropy(const Tensor& logits, const Tensor& onehot_labels) {
    require_rank(logits, 2, "softmax_cross_entropy logits");
    const int N = logits.dim(0), C = logits.dim(1);
    require(C >= 2, "softmax_cross_entropy requires at least 2 classes");
    require(onehot_labels.shape() == logits.shape(),
            "softmax_cross_entropy label shape mismatch");

    Tensor out = make_op_output({1}, {&logits});
    const float* Z = logits.data().data();
    const float* Y = onehot_labels.data().data();

    std::vector<float> probs(static_cast<size_t>(N) * C);
    double total = 0.0;
    for (int n = 0; n < N; ++n) {
        const float* z = Z + static_cast<int64_t>(n) * C;
        const float* y = Y + static_cast<int64_t>(n) * C;
        float mx = z[0];
        for (int c = 1; c < C; ++c) mx = std::max(mx, z[c]);
        double se = 0.0;
        for (int c = 0; c < C; ++c) se += std::exp(static_cast<double>(z[c] - mx));
        const double lse = static_cast<double>(mx) + std::log(se);
        double row = 0.0;
        for (int c = 0; c < C; ++c) {
            probs[static_cast<size_t>(n) * C + c] =
                static_cast<float>(std::exp(static_cast<double>(z[c] - mx)) / se);
            if (y[c] != 0.0f) row += static_cast<double>(y[c]) * (z[c] - lse);
        }
        total += -row / static_cast<double>(C);
    }
    out.data()[0] = static_cast<float>(total / static_cast<double>(N));

    if (out.requires_grad()) {
        auto zn = logits.node_ptr();
        auto yn = onehot_labels.node_ptr();
        out.node()->backward_fn = [zn, yn, probs = std::move(probs), N, C](TensorNode& self) {
            if (!zn->requires_grad) return;
            zn->ensure_grad();
            const float up = self.grad[0];
            const float k = up / (static_cast<float>(C) * static_cast<float>(N));
            for (int n = 0; n < N; ++n) {
                const float* y = yn->data.data() + static_cast<int64_t>(n) * C;
                float sy = 0.0f;
                for (int c = 0; c < C; ++c) sy += y[c];
                for (int c = 0; c < C; ++c) {
                    const size_t i = static_cast<size_t>(n) * C + static_cast<size_t>(c);
                    zn->grad[i] += k * (probs[i] * sy - y[c]);
                }
            }
        };
    }
    return out;
}

std::vector<float> softmax_row(std::span<const float> logits) {
    std::vector<float> p(logits.size());
    float mx = logits[0];
    for (float v : logits) mx = std::max(mx, v);
    double se = 0.0;
    for (size_t i = 0; i < logits.size(); ++i) {
        const double e = std::exp(static_cast<double>(logits[i] - mx));
        p[i] = static_cast<float>(e);
        se += e;
    }
    const float inv = static_cast<float>(1.0 / se);
    for (auto& v : p) v *= inv;
    return p;
}

std::vector<float> softmax_probs(const Tensor& logits) {
    require_rank(logits, 2, "softmax_probs logits");
    const int N = logits.dim(0), C = logits.dim(1);
    std::vector<float> out(static_cast<size_t>(N) * C);
    for (int n = 0; n < N; ++n) {
        auto row = softmax_row(
            std::span<const float>(logits.data().data() + static_cast<int64_t>(n) * C,
                                   static_cast<size_t>(C)));
        std::copy(row.begin(), row.end(), out.begin() + static_cast<int64_t>(n) * C);
    }
    return out;
}

} // namespace ddnn
