#pragma once

#include <cstdint>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "pansharp/error.hpp"
#include "pansharp/rng.hpp"

namespace pansharp::neural {

// N x C x H x W array of doubles, row-major within each channel plane.
struct Tensor {
    int n = 0, c = 0, h = 0, w = 0;
    std::vector<double> data;

    Tensor() = default;
    Tensor(int n_, int c_, int h_, int w_, double fill = 0.0)
        : n(n_), c(c_), h(h_), w(w_),
          data(static_cast<std::size_t>(n_) * c_ * h_ * w_, fill) {}

    std::size_t size() const { return data.size(); }
    std::size_t plane() const { return static_cast<std::size_t>(h) * w; }

    double* plane_ptr(int in, int ic) {
        return data.data() + (static_cast<std::size_t>(in) * c + ic) * plane();
    }
    const double* plane_ptr(int in, int ic) const {
        return data.data() + (static_cast<std::size_t>(in) * c + ic) * plane();
    }

    double& at(int in, int ic, int iy, int ix) { return plane_ptr(in, ic)[iy * w + ix]; }
    double at(int in, int ic, int iy, int ix) const { return plane_ptr(in, ic)[iy * w + ix]; }

    bool same_shape(const Tensor& o) const {
        return n == o.n && c == o.c && h == o.h && w == o.w;
    }
    std::string shape_str() const {
        return std::to_string(n) + "x" + std::to_string(c) + "x" + std::to_string(h) + "x" +
               std::to_string(w);
    }
};

// --- Raw differentiable ops -------------------------------------------------
//
// Convolution weights are (out_c, in_c, k, k); transposed-convolution weights
// are (in_c, out_c, k, k). Backward maps are the exact adjoints of the
// forwards, so <conv(x), y> == <x, conv_backward_input(y)> holds to roundoff.

Tensor conv2d_forward(const Tensor& x, const Tensor& w, std::span<const double> bias, int stride,
                      int pad);
Tensor conv2d_backward_input(const Tensor& gy, const Tensor& w, int stride, int pad, int in_h,
                             int in_w);
Tensor conv2d_backward_weight(const Tensor& x, const Tensor& gy, int stride, int pad, int k);

Tensor tconv2d_forward(const Tensor& x, const Tensor& w, std::span<const double> bias, int stride,
                       int pad, int out_pad);
Tensor tconv2d_backward_input(const Tensor& gy, const Tensor& w, int stride, int pad, int in_h,
                              int in_w);
Tensor tconv2d_backward_weight(const Tensor& x, const Tensor& gy, int stride, int pad, int k);

std::vector<double> bias_backward(const Tensor& gy);

inline int conv_out_len(int in, int k, int stride, int pad) {
    return (in + 2 * pad - k) / stride + 1;
}
inline int tconv_out_len(int in, int k, int stride, int pad, int out_pad) {
    return (in - 1) * stride - 2 * pad + k + out_pad;
}

// --- Graph -------------------------------------------------------------------

enum class LayerKind { input, conv, tconv, leaky_relu, relu, sigmoid, concat, batchnorm };

struct LayerSpec {
    LayerKind kind = LayerKind::input;
    int k = 0, stride = 1, pad = 0, out_pad = 0;
    int in_c = 0, out_c = 0;
    double slope = 0.2;       // leaky_relu
    double eps = 1e-5;        // batchnorm
    double momentum = 0.1;    // batchnorm running-stat update
};

struct Node {
    std::string name;   // unique; parameter prefix for conv/tconv/batchnorm
    std::string group;  // blueprint stage tag, e.g. "pan_stream", "trunk", "decoder"
    LayerSpec spec;
    std::vector<int> inputs;  // node ids, always < own id
};

struct AdamConfig {
    double lr = 2e-4;
    double beta1 = 0.5;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct Param {
    Tensor value;
    Tensor m, v;  // Adam first/second moment, same shape as value
    std::int64_t t = 0;
    bool trainable = true;
};

class ParameterStore {
public:
    void add(const std::string& name, Tensor value, bool trainable = true);
    bool has(const std::string& name) const { return map_.count(name) != 0; }
    Param& at(const std::string& name);
    const Param& at(const std::string& name) const;
    const std::vector<std::string>& names() const { return order_; }
    std::size_t scalar_count(bool trainable_only = true) const;
    // order-sensitive FNV hash of all values; used to assert a training step
    // left the other network untouched
    std::uint64_t content_hash() const;

private:
    std::vector<std::string> order_;
    std::map<std::string, Param> map_;
};

using TensorMap = std::map<std::string, Tensor>;
using GradMap = std::map<std::string, Tensor>;

struct BnSaved {
    std::vector<double> mean, var, invstd;  // per channel, batch statistics
};

// Everything backward needs, plus the kink margin used by grad_check to
// reject finite-difference coordinates that straddle a ReLU corner.
struct Tape {
    bool valid = false;
    bool training = false;
    std::vector<Tensor> activations;  // per node id
    std::map<int, BnSaved> bn;
    double kink_margin = std::numeric_limits<double>::infinity();
};

class ComputeGraph {
public:
    int add_input(const std::string& name, int channels);
    int add_conv(const std::string& name, int input, int out_c, int k = 3, int stride = 1,
                 int pad = 1, const std::string& group = "");
    int add_tconv(const std::string& name, int input, int out_c, int k = 4, int stride = 2,
                  int pad = 1, int out_pad = 0, const std::string& group = "");
    int add_leaky_relu(int input, double slope = 0.2);
    int add_relu(int input);
    int add_sigmoid(int input);
    int add_concat(const std::vector<int>& inputs, const std::string& group = "");
    int add_batchnorm(const std::string& name, int input, const std::string& group = "");
    void mark_output(const std::string& name, int node);

    int channels_of(int node) const { return nodes_[static_cast<std::size_t>(node)].spec.out_c; }
    const std::vector<Node>& nodes() const { return nodes_; }
    const std::vector<std::pair<std::string, int>>& entries() const { return entries_; }
    const std::vector<std::pair<std::string, int>>& outputs() const { return outputs_; }

    // Registers conv/tconv/batchnorm parameters: weights ~ N(0, 0.02^2),
    // biases and batchnorm shifts zero, batchnorm scales one.
    void init_params(ParameterStore& store, Rng& rng) const;

private:
    int push(Node node);
    std::vector<Node> nodes_;
    std::vector<std::pair<std::string, int>> entries_;
    std::vector<std::pair<std::string, int>> outputs_;
};

Tape forward(const ComputeGraph& graph, const ParameterStore& store, const TensorMap& inputs,
             bool training = false);
TensorMap outputs_of(const ComputeGraph& graph, const Tape& tape);

// Reverse pass from per-output upstream gradients. Returns gradients for
// every trainable parameter; entry-node gradients are written to input_grads
// when requested.
GradMap backward(const ComputeGraph& graph, const ParameterStore& store, const Tape& tape,
                 const TensorMap& output_grads, TensorMap* input_grads = nullptr);

// Folds the batch statistics recorded on the tape into the running-stat
// parameters. Kept out of forward() so forward stays pure.
void commit_batchnorm_updates(const ComputeGraph& graph, const Tape& tape, ParameterStore& store);

// Bias-corrected Adam update; t advances once per call per parameter.
void adam_step(ParameterStore& store, const GradMap& grads, const AdamConfig& cfg);

// Central finite differences over every trainable parameter coordinate of
// the graph against the analytic backward pass, on a pseudorandom linear
// functional of the outputs. Coordinates whose perturbed forwards pass
// within 1e-7 of a ReLU corner are excluded. Returns the max relative error.
double grad_check(const ComputeGraph& graph, ParameterStore& store, const TensorMap& inputs,
                  double fd_eps = 1e-5, bool training = false, std::uint64_t weight_seed = 7);

}  // namespace pansharp::neural
