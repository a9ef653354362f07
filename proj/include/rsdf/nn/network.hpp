#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "../error.hpp"
#include "../features.hpp"
#include "../random.hpp"

namespace rsdf::nn {

// conv1(6,5)-sig-pool(MEAN,2)-conv2(12,5)-sig-pool(MEAN,2)-conv3(24,3)-sig-fc4(200)-relu-dropout-fc5(2)
inline constexpr int input_side = patch_side;
inline constexpr int input_channels = patch_channels;
inline constexpr int conv1_out = 6, conv1_kernel = 5;
inline constexpr int conv2_out = 12, conv2_kernel = 5;
inline constexpr int conv3_out = 24, conv3_kernel = 3;
inline constexpr int fc4_out = 200;
inline constexpr int fc5_out = 2;
inline constexpr int pool_size = 2;

constexpr int valid_conv_side(int in, int kernel) { return in - kernel + 1; }
constexpr int pooled_side(int in) { return in / pool_size; }

inline constexpr int conv1_side = valid_conv_side(input_side, conv1_kernel);
inline constexpr int pool1_side = pooled_side(conv1_side);
inline constexpr int conv2_side = valid_conv_side(pool1_side, conv2_kernel);
inline constexpr int pool2_side = pooled_side(conv2_side);
inline constexpr int conv3_side = valid_conv_side(pool2_side, conv3_kernel);
inline constexpr int flat_size = conv3_out * conv3_side * conv3_side;

static_assert(conv1_side == 28, "conv1 must produce 28x28");
static_assert(pool1_side == 14 && conv1_side % pool_size == 0, "pool1 must produce 14x14 exactly");
static_assert(conv2_side == 10, "conv2 must produce 10x10");
static_assert(pool2_side == 5 && conv2_side % pool_size == 0, "pool2 must produce 5x5 exactly");
static_assert(conv3_side == 3, "conv3 must produce 3x3");
static_assert(flat_size == 216, "conv3 output must flatten to 216");

enum param : std::size_t { conv1_w, conv1_b, conv2_w, conv2_b, conv3_w, conv3_b, fc4_w, fc4_b, fc5_w, fc5_b };
inline constexpr std::size_t param_count = 10;

struct tensor_spec {
    std::string_view name;
    std::uint8_t rank;
    std::array<std::uint32_t, 4> dims;
    int fan_in;   // 0 for biases
    int fan_out;

    constexpr std::size_t size() const {
        std::size_t n = 1;
        for (std::uint8_t r = 0; r < rank; ++r) n *= dims[r];
        return n;
    }
};

inline constexpr std::array<tensor_spec, param_count> architecture = {{
    {"conv1.weight", 4, {conv1_out, input_channels, conv1_kernel, conv1_kernel},
     input_channels * conv1_kernel * conv1_kernel, conv1_out * conv1_kernel * conv1_kernel},
    {"conv1.bias", 1, {conv1_out, 0, 0, 0}, 0, 0},
    {"conv2.weight", 4, {conv2_out, conv1_out, conv2_kernel, conv2_kernel},
     conv1_out * conv2_kernel * conv2_kernel, conv2_out * conv2_kernel * conv2_kernel},
    {"conv2.bias", 1, {conv2_out, 0, 0, 0}, 0, 0},
    {"conv3.weight", 4, {conv3_out, conv2_out, conv3_kernel, conv3_kernel},
     conv2_out * conv3_kernel * conv3_kernel, conv3_out * conv3_kernel * conv3_kernel},
    {"conv3.bias", 1, {conv3_out, 0, 0, 0}, 0, 0},
    {"fc4.weight", 2, {fc4_out, flat_size, 0, 0}, flat_size, fc4_out},
    {"fc4.bias", 1, {fc4_out, 0, 0, 0}, 0, 0},
    {"fc5.weight", 2, {fc5_out, fc4_out, 0, 0}, fc4_out, fc5_out},
    {"fc5.bias", 1, {fc5_out, 0, 0, 0}, 0, 0},
}};

/// Parameters of the fixed architecture, one flat row-major buffer per tensor.
template <typename T>
struct network {
    std::array<std::vector<T>, param_count> params;

    network() {
        for (std::size_t i = 0; i < param_count; ++i) params[i].assign(architecture[i].size(), T{0});
    }

    std::vector<T>& operator[](param p) { return params[p]; }
    const std::vector<T>& operator[](param p) const { return params[p]; }

    void fill(T value) {
        for (auto& t : params) std::fill(t.begin(), t.end(), value);
    }

    template <typename U>
    network<U> cast() const {
        network<U> out;
        for (std::size_t i = 0; i < param_count; ++i)
            std::transform(params[i].begin(), params[i].end(), out.params[i].begin(),
                           [](T v) { return static_cast<U>(v); });
        return out;
    }

    friend bool operator==(const network&, const network&) = default;
};

/// Glorot-uniform weights, zero biases.
inline network<float> init_weights(std::uint64_t seed) {
    auto rng = make_rng(seed, {0x1417});
    network<float> net;
    for (std::size_t i = 0; i < param_count; ++i) {
        const auto& spec = architecture[i];
        if (spec.fan_in == 0) continue;
        const double bound = std::sqrt(6.0 / (spec.fan_in + spec.fan_out));
        for (auto& w : net.params[i]) w = static_cast<float>(uniform(rng, -bound, bound));
    }
    return net;
}

/// Every intermediate of one forward pass, kept for the backward pass.
template <typename T>
struct activations {
    std::array<T, patch_size> input{};
    std::array<T, conv1_out * conv1_side * conv1_side> conv1{};   // after sigmoid
    std::array<T, conv1_out * pool1_side * pool1_side> pool1{};
    std::array<T, conv2_out * conv2_side * conv2_side> conv2{};   // after sigmoid
    std::array<T, conv2_out * pool2_side * pool2_side> pool2{};
    std::array<T, flat_size> conv3{};                             // after sigmoid, flattened CHW
    std::array<T, fc4_out> fc4_pre{};
    std::array<T, fc4_out> fc4{};                                 // relu, then dropout
    std::array<T, fc4_out> dropout{};                             // 0 or 1/keep; all 1 in inference
    std::array<T, fc5_out> logits{};
    std::array<T, fc5_out> probs{};                               // [non-salient, salient]

    T p_salient() const { return probs[1]; }
    T p_non_salient() const { return probs[0]; }
};

template <typename T>
using dropout_mask = std::array<T, fc4_out>;

template <typename T>
dropout_mask<T> sample_dropout_mask(rng_engine& rng, double keep) {
    dropout_mask<T> mask;
    const T scale = static_cast<T>(1.0 / keep);
    for (auto& m : mask) m = bernoulli(rng, keep) ? scale : T{0};
    return mask;
}

namespace detail {

template <typename T>
T sigmoid(T z) {
    return T{1} / (T{1} + std::exp(-z));
}

// Valid convolution, stride 1; weights laid out (out, in, ky, kx).
template <typename T>
void conv_forward(const T* in, int in_c, int in_side, const T* w, const T* b, int out_c, int k, T* out) {
    const int out_side = in_side - k + 1;
    const int plane = out_side * out_side;
    for (int oc = 0; oc < out_c; ++oc) {
        T* o = out + oc * plane;
        std::fill(o, o + plane, b[oc]);
        for (int ic = 0; ic < in_c; ++ic) {
            const T* src = in + ic * in_side * in_side;
            for (int ky = 0; ky < k; ++ky) {
                for (int kx = 0; kx < k; ++kx) {
                    const T wv = w[((oc * in_c + ic) * k + ky) * k + kx];
                    for (int oy = 0; oy < out_side; ++oy) {
                        const T* row = src + (oy + ky) * in_side + kx;
                        T* orow = o + oy * out_side;
                        for (int ox = 0; ox < out_side; ++ox) orow[ox] += wv * row[ox];
                    }
                }
            }
        }
    }
}

// Accumulates dW, db (in Acc) and, when din != nullptr, the input gradient (in T).
template <typename T, typename Acc>
void conv_backward(const T* in, int in_c, int in_side, const T* w, int out_c, int k, const T* dout, Acc* dw, Acc* db,
                   T* din, Acc scale) {
    const int out_side = in_side - k + 1;
    const int plane = out_side * out_side;
    for (int oc = 0; oc < out_c; ++oc) {
        const T* g = dout + oc * plane;
        Acc bias_sum = 0;
        for (int i = 0; i < plane; ++i) bias_sum += g[i];
        db[oc] += scale * bias_sum;
        for (int ic = 0; ic < in_c; ++ic) {
            const T* src = in + ic * in_side * in_side;
            T* dsrc = din != nullptr ? din + ic * in_side * in_side : nullptr;
            for (int ky = 0; ky < k; ++ky) {
                for (int kx = 0; kx < k; ++kx) {
                    const int widx = ((oc * in_c + ic) * k + ky) * k + kx;
                    Acc sum = 0;
                    for (int oy = 0; oy < out_side; ++oy) {
                        const T* row = src + (oy + ky) * in_side + kx;
                        const T* grow = g + oy * out_side;
                        T partial = 0;
                        for (int ox = 0; ox < out_side; ++ox) partial += grow[ox] * row[ox];
                        sum += partial;
                    }
                    dw[widx] += scale * sum;
                    if (dsrc != nullptr) {
                        const T wv = w[widx];
                        for (int oy = 0; oy < out_side; ++oy) {
                            T* drow = dsrc + (oy + ky) * in_side + kx;
                            const T* grow = g + oy * out_side;
                            for (int ox = 0; ox < out_side; ++ox) drow[ox] += wv * grow[ox];
                        }
                    }
                }
            }
        }
    }
}

template <typename T>
void mean_pool_forward(const T* in, int channels, int in_side, T* out) {
    const int out_side = in_side / pool_size;
    const T quarter = T{1} / T{4};
    for (int c = 0; c < channels; ++c) {
        const T* src = in + c * in_side * in_side;
        T* dst = out + c * out_side * out_side;
        for (int y = 0; y < out_side; ++y)
            for (int x = 0; x < out_side; ++x) {
                const T* p = src + 2 * y * in_side + 2 * x;
                dst[y * out_side + x] = (p[0] + p[1] + p[in_side] + p[in_side + 1]) * quarter;
            }
    }
}

// Spreads the pooled gradient and multiplies by the sigmoid derivative of `act`.
template <typename T>
void mean_pool_sigmoid_backward(const T* dpool, const T* act, int channels, int in_side, T* dz) {
    const int out_side = in_side / pool_size;
    const T quarter = T{1} / T{4};
    for (int c = 0; c < channels; ++c)
        for (int y = 0; y < in_side; ++y)
            for (int x = 0; x < in_side; ++x) {
                const int i = (c * in_side + y) * in_side + x;
                const T g = dpool[(c * out_side + y / 2) * out_side + x / 2] * quarter;
                dz[i] = g * act[i] * (T{1} - act[i]);
            }
}

template <typename T, std::size_t N>
void apply_sigmoid(std::array<T, N>& a) {
    for (auto& v : a) v = sigmoid(v);
}

} // namespace detail

/// Forward pass. A null mask runs inference (no dropout); otherwise fc4 activations are
/// multiplied by the mask.
template <typename T, typename In>
void forward(const network<T>& net, std::span<const In> input, activations<T>& a,
             const dropout_mask<T>* mask = nullptr) {
    if (input.size() != patch_size)
        throw shape_error("network input must be 6x32x32, got " + std::to_string(input.size()) + " values");
    std::transform(input.begin(), input.end(), a.input.begin(), [](In v) { return static_cast<T>(v); });

    detail::conv_forward(a.input.data(), input_channels, input_side, net[conv1_w].data(), net[conv1_b].data(),
                         conv1_out, conv1_kernel, a.conv1.data());
    detail::apply_sigmoid(a.conv1);
    detail::mean_pool_forward(a.conv1.data(), conv1_out, conv1_side, a.pool1.data());

    detail::conv_forward(a.pool1.data(), conv1_out, pool1_side, net[conv2_w].data(), net[conv2_b].data(), conv2_out,
                         conv2_kernel, a.conv2.data());
    detail::apply_sigmoid(a.conv2);
    detail::mean_pool_forward(a.conv2.data(), conv2_out, conv2_side, a.pool2.data());

    detail::conv_forward(a.pool2.data(), conv2_out, pool2_side, net[conv3_w].data(), net[conv3_b].data(), conv3_out,
                         conv3_kernel, a.conv3.data());
    detail::apply_sigmoid(a.conv3);

    const T* w4 = net[fc4_w].data();
    for (int u = 0; u < fc4_out; ++u) {
        T z = net[fc4_b][static_cast<std::size_t>(u)];
        const T* row = w4 + static_cast<std::ptrdiff_t>(u) * flat_size;
        for (int v = 0; v < flat_size; ++v) z += row[v] * a.conv3[static_cast<std::size_t>(v)];
        a.fc4_pre[static_cast<std::size_t>(u)] = z;
    }
    if (mask != nullptr)
        a.dropout = *mask;
    else
        a.dropout.fill(T{1});
    for (std::size_t u = 0; u < fc4_out; ++u) a.fc4[u] = std::max(T{0}, a.fc4_pre[u]) * a.dropout[u];

    const T* w5 = net[fc5_w].data();
    for (int k = 0; k < fc5_out; ++k) {
        T z = net[fc5_b][static_cast<std::size_t>(k)];
        for (int u = 0; u < fc4_out; ++u) z += w5[k * fc4_out + u] * a.fc4[static_cast<std::size_t>(u)];
        a.logits[static_cast<std::size_t>(k)] = z;
    }
    const T m = std::max(a.logits[0], a.logits[1]);
    const T e0 = std::exp(a.logits[0] - m);
    const T e1 = std::exp(a.logits[1] - m);
    a.probs[0] = e0 / (e0 + e1);
    a.probs[1] = e1 / (e0 + e1);
}

template <typename T, typename In>
void forward(const network<T>& net, const std::array<In, patch_size>& input, activations<T>& a,
             const dropout_mask<T>* mask = nullptr) {
    forward(net, std::span<const In>(input.data(), input.size()), a, mask);
}

/// Cross-entropy of the true class, p clamped at 1e-12.
template <typename T>
double loss(const std::array<T, fc5_out>& probs, int label) {
    const double p = static_cast<double>(probs[static_cast<std::size_t>(label)]);
    return -std::log(std::max(p, 1e-12));
}

/// Adds scale * d(loss)/d(params) into `grads`, using the cached forward pass (and its dropout mask).
template <typename T, typename Acc>
void backward(const network<T>& net, const activations<T>& a, int label, network<Acc>& grads, Acc scale = Acc{1}) {
    if (label != 0 && label != 1) throw index_error("label must be 0 (non-salient) or 1 (salient)");

    std::array<T, fc5_out> dlogits;
    for (std::size_t k = 0; k < fc5_out; ++k)
        dlogits[k] = a.probs[k] - (static_cast<int>(k) == label ? T{1} : T{0});

    std::array<T, fc4_out> dfc4{};
    const T* w5 = net[fc5_w].data();
    auto& gw5 = grads[fc5_w];
    for (std::size_t k = 0; k < fc5_out; ++k) {
        grads[fc5_b][k] += scale * static_cast<Acc>(dlogits[k]);
        for (std::size_t u = 0; u < fc4_out; ++u) {
            gw5[k * fc4_out + u] += scale * static_cast<Acc>(dlogits[k] * a.fc4[u]);
            dfc4[u] += w5[k * fc4_out + u] * dlogits[k];
        }
    }

    std::array<T, fc4_out> dpre4;
    for (std::size_t u = 0; u < fc4_out; ++u) dpre4[u] = a.fc4_pre[u] > T{0} ? dfc4[u] * a.dropout[u] : T{0};

    std::array<T, flat_size> dconv3{};
    const T* w4 = net[fc4_w].data();
    auto& gw4 = grads[fc4_w];
    for (std::size_t u = 0; u < fc4_out; ++u) {
        const T g = dpre4[u];
        if (g == T{0}) continue;
        grads[fc4_b][u] += scale * static_cast<Acc>(g);
        Acc* grow = gw4.data() + u * flat_size;
        const T* wrow = w4 + u * flat_size;
        for (std::size_t v = 0; v < flat_size; ++v) {
            grow[v] += scale * static_cast<Acc>(g * a.conv3[v]);
            dconv3[v] += wrow[v] * g;
        }
    }
    for (std::size_t v = 0; v < flat_size; ++v) dconv3[v] *= a.conv3[v] * (T{1} - a.conv3[v]);

    std::array<T, conv2_out * pool2_side * pool2_side> dpool2{};
    detail::conv_backward(a.pool2.data(), conv2_out, pool2_side, net[conv3_w].data(), conv3_out, conv3_kernel,
                          dconv3.data(), grads[conv3_w].data(), grads[conv3_b].data(), dpool2.data(), scale);

    std::array<T, conv2_out * conv2_side * conv2_side> dconv2{};
    detail::mean_pool_sigmoid_backward(dpool2.data(), a.conv2.data(), conv2_out, conv2_side, dconv2.data());

    std::array<T, conv1_out * pool1_side * pool1_side> dpool1{};
    detail::conv_backward(a.pool1.data(), conv1_out, pool1_side, net[conv2_w].data(), conv2_out, conv2_kernel,
                          dconv2.data(), grads[conv2_w].data(), grads[conv2_b].data(), dpool1.data(), scale);

    std::array<T, conv1_out * conv1_side * conv1_side> dconv1{};
    detail::mean_pool_sigmoid_backward(dpool1.data(), a.conv1.data(), conv1_out, conv1_side, dconv1.data());

    detail::conv_backward<T, Acc>(a.input.data(), input_channels, input_side, net[conv1_w].data(), conv1_out,
                                  conv1_kernel, dconv1.data(), grads[conv1_w].data(), grads[conv1_b].data(), nullptr,
                                  scale);
}

/// Inference helper: (p_salient, p_non_salient).
template <typename T>
std::array<double, 2> predict(const network<T>& net, const feature_patch& patch) {
    activations<T> a;
    forward(net, patch.data, a);
    return {static_cast<double>(a.p_salient()), static_cast<double>(a.p_non_salient())};
}

} // namespace rsdf::nn
