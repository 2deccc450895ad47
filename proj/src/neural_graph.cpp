#include <algorithm>
#include <cmath>
#include <cstring>

#include "pansharp/neural.hpp"

namespace pansharp::neural {

// --- ParameterStore -----------------------------------------------------------

void ParameterStore::add(const std::string& name, Tensor value, bool trainable) {
    if (has(name)) fail(ErrorCode::BadArgument, "duplicate parameter \"" + name + "\"");
    Param p;
    p.m = Tensor(value.n, value.c, value.h, value.w);
    p.v = Tensor(value.n, value.c, value.h, value.w);
    p.value = std::move(value);
    p.trainable = trainable;
    order_.push_back(name);
    map_.emplace(name, std::move(p));
}

Param& ParameterStore::at(const std::string& name) {
    auto it = map_.find(name);
    if (it == map_.end()) fail(ErrorCode::BadArgument, "unknown parameter \"" + name + "\"");
    return it->second;
}

const Param& ParameterStore::at(const std::string& name) const {
    auto it = map_.find(name);
    if (it == map_.end()) fail(ErrorCode::BadArgument, "unknown parameter \"" + name + "\"");
    return it->second;
}

std::size_t ParameterStore::scalar_count(bool trainable_only) const {
    std::size_t total = 0;
    for (const auto& name : order_) {
        const Param& p = at(name);
        if (trainable_only && !p.trainable) continue;
        total += p.value.size();
    }
    return total;
}

std::uint64_t ParameterStore::content_hash() const {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    const auto mix = [&h](std::uint64_t v) {
        h ^= v;
        h *= 0x100000001B3ULL;
    };
    for (const auto& name : order_) {
        for (char ch : name) mix(static_cast<std::uint64_t>(static_cast<unsigned char>(ch)));
        const Param& p = at(name);
        for (double d : p.value.data) {
            std::uint64_t bits;
            static_assert(sizeof bits == sizeof d);
            std::memcpy(&bits, &d, sizeof bits);
            mix(bits);
        }
    }
    return h;
}

// --- Graph building -------------------------------------------------------------

int ComputeGraph::push(Node node) {
    for (int in : node.inputs)
        if (in < 0 || in >= static_cast<int>(nodes_.size()))
            fail(ErrorCode::BadArgument, "node input id out of range");
    if (!node.name.empty())
        for (const Node& other : nodes_)
            if (other.name == node.name)
                fail(ErrorCode::BadArgument, "duplicate node name \"" + node.name + "\"");
    nodes_.push_back(std::move(node));
    return static_cast<int>(nodes_.size()) - 1;
}

int ComputeGraph::add_input(const std::string& name, int channels) {
    Node node;
    node.name = name;
    node.spec.kind = LayerKind::input;
    node.spec.in_c = channels;
    node.spec.out_c = channels;
    const int id = push(std::move(node));
    entries_.emplace_back(name, id);
    return id;
}

int ComputeGraph::add_conv(const std::string& name, int input, int out_c, int k, int stride,
                           int pad, const std::string& group) {
    Node node;
    node.name = name;
    node.group = group;
    node.spec.kind = LayerKind::conv;
    node.spec.k = k;
    node.spec.stride = stride;
    node.spec.pad = pad;
    node.spec.in_c = channels_of(input);
    node.spec.out_c = out_c;
    node.inputs = {input};
    return push(std::move(node));
}

int ComputeGraph::add_tconv(const std::string& name, int input, int out_c, int k, int stride,
                            int pad, int out_pad, const std::string& group) {
    Node node;
    node.name = name;
    node.group = group;
    node.spec.kind = LayerKind::tconv;
    node.spec.k = k;
    node.spec.stride = stride;
    node.spec.pad = pad;
    node.spec.out_pad = out_pad;
    node.spec.in_c = channels_of(input);
    node.spec.out_c = out_c;
    node.inputs = {input};
    return push(std::move(node));
}

int ComputeGraph::add_leaky_relu(int input, double slope) {
    Node node;
    node.spec.kind = LayerKind::leaky_relu;
    node.spec.slope = slope;
    node.spec.in_c = channels_of(input);
    node.spec.out_c = node.spec.in_c;
    node.inputs = {input};
    return push(std::move(node));
}

int ComputeGraph::add_relu(int input) {
    Node node;
    node.spec.kind = LayerKind::relu;
    node.spec.in_c = channels_of(input);
    node.spec.out_c = node.spec.in_c;
    node.inputs = {input};
    return push(std::move(node));
}

int ComputeGraph::add_sigmoid(int input) {
    Node node;
    node.spec.kind = LayerKind::sigmoid;
    node.spec.in_c = channels_of(input);
    node.spec.out_c = node.spec.in_c;
    node.inputs = {input};
    return push(std::move(node));
}

int ComputeGraph::add_concat(const std::vector<int>& inputs, const std::string& group) {
    if (inputs.empty()) fail(ErrorCode::BadArgument, "concat needs at least one input");
    Node node;
    node.group = group;
    node.spec.kind = LayerKind::concat;
    for (int in : inputs) node.spec.out_c += channels_of(in);
    node.spec.in_c = node.spec.out_c;
    node.inputs = inputs;
    return push(std::move(node));
}

int ComputeGraph::add_batchnorm(const std::string& name, int input, const std::string& group) {
    Node node;
    node.name = name;
    node.group = group;
    node.spec.kind = LayerKind::batchnorm;
    node.spec.in_c = channels_of(input);
    node.spec.out_c = node.spec.in_c;
    node.inputs = {input};
    return push(std::move(node));
}

void ComputeGraph::mark_output(const std::string& name, int node) {
    if (node < 0 || node >= static_cast<int>(nodes_.size()))
        fail(ErrorCode::BadArgument, "output node id out of range");
    outputs_.emplace_back(name, node);
}

void ComputeGraph::init_params(ParameterStore& store, Rng& rng) const {
    // He-style fan-in scaling with the LeakyReLU(0.2) gain. A flat std here
    // starves deep BN-free stacks: thirteen 0.02-std layers attenuate the
    // forward signal to ~1e-9 and the optimizer spends its whole budget
    // growing magnitudes instead of learning.
    const auto he_std = [](int fan_in, double slope) {
        return std::sqrt(2.0 / (1.0 + slope * slope) / static_cast<double>(fan_in));
    };
    for (const Node& node : nodes_) {
        switch (node.spec.kind) {
            case LayerKind::conv: {
                Tensor w(node.spec.out_c, node.spec.in_c, node.spec.k, node.spec.k);
                const double std = he_std(node.spec.in_c * node.spec.k * node.spec.k, 0.2);
                for (double& v : w.data) v = std * rng.normal();
                store.add(node.name + ".w", std::move(w));
                store.add(node.name + ".b", Tensor(1, node.spec.out_c, 1, 1));
                break;
            }
            case LayerKind::tconv: {
                Tensor w(node.spec.in_c, node.spec.out_c, node.spec.k, node.spec.k);
                // stride-2 scatter: each output sees k^2/s^2 taps per channel
                const double std = he_std(std::max(1, node.spec.in_c * node.spec.k * node.spec.k /
                                                          (node.spec.stride * node.spec.stride)),
                                          0.2);
                for (double& v : w.data) v = std * rng.normal();
                store.add(node.name + ".w", std::move(w));
                store.add(node.name + ".b", Tensor(1, node.spec.out_c, 1, 1));
                break;
            }
            case LayerKind::batchnorm: {
                store.add(node.name + ".gamma", Tensor(1, node.spec.out_c, 1, 1, 1.0));
                store.add(node.name + ".beta", Tensor(1, node.spec.out_c, 1, 1));
                store.add(node.name + ".rmean", Tensor(1, node.spec.out_c, 1, 1), false);
                store.add(node.name + ".rvar", Tensor(1, node.spec.out_c, 1, 1, 1.0), false);
                break;
            }
            default: break;
        }
    }
}

// --- Forward ----------------------------------------------------------------------

namespace {

void bn_channel_stats(const Tensor& x, std::vector<double>& mean, std::vector<double>& var) {
    mean.assign(static_cast<std::size_t>(x.c), 0.0);
    var.assign(static_cast<std::size_t>(x.c), 0.0);
    const double m = static_cast<double>(x.n) * x.h * x.w;
    for (int in = 0; in < x.n; ++in)
        for (int ic = 0; ic < x.c; ++ic) {
            const double* p = x.plane_ptr(in, ic);
            double acc = 0.0;
            for (std::size_t i = 0; i < x.plane(); ++i) acc += p[i];
            mean[static_cast<std::size_t>(ic)] += acc;
        }
    for (double& v : mean) v /= m;
    for (int in = 0; in < x.n; ++in)
        for (int ic = 0; ic < x.c; ++ic) {
            const double* p = x.plane_ptr(in, ic);
            const double mu = mean[static_cast<std::size_t>(ic)];
            double acc = 0.0;
            for (std::size_t i = 0; i < x.plane(); ++i) {
                const double d = p[i] - mu;
                acc += d * d;
            }
            var[static_cast<std::size_t>(ic)] += acc;
        }
    for (double& v : var) v /= m;
}

}  // namespace

Tape forward(const ComputeGraph& graph, const ParameterStore& store, const TensorMap& inputs,
             bool training) {
    const auto& nodes = graph.nodes();
    Tape tape;
    tape.training = training;
    tape.activations.resize(nodes.size());

    for (std::size_t id = 0; id < nodes.size(); ++id) {
        const Node& node = nodes[id];
        switch (node.spec.kind) {
            case LayerKind::input: {
                auto it = inputs.find(node.name);
                if (it == inputs.end())
                    fail(ErrorCode::ShapeMismatch, "missing graph input \"" + node.name + "\"");
                if (it->second.c != node.spec.out_c)
                    fail(ErrorCode::ShapeMismatch,
                         "input \"" + node.name + "\" has " + std::to_string(it->second.c) +
                             " channels, graph declares " + std::to_string(node.spec.out_c));
                tape.activations[id] = it->second;
                break;
            }
            case LayerKind::conv: {
                const Tensor& x = tape.activations[static_cast<std::size_t>(node.inputs[0])];
                const Tensor& w = store.at(node.name + ".w").value;
                const Tensor& b = store.at(node.name + ".b").value;
                tape.activations[id] =
                    conv2d_forward(x, w, b.data, node.spec.stride, node.spec.pad);
                break;
            }
            case LayerKind::tconv: {
                const Tensor& x = tape.activations[static_cast<std::size_t>(node.inputs[0])];
                const Tensor& w = store.at(node.name + ".w").value;
                const Tensor& b = store.at(node.name + ".b").value;
                tape.activations[id] = tconv2d_forward(x, w, b.data, node.spec.stride,
                                                       node.spec.pad, node.spec.out_pad);
                break;
            }
            case LayerKind::leaky_relu:
            case LayerKind::relu: {
                const Tensor& x = tape.activations[static_cast<std::size_t>(node.inputs[0])];
                const double slope = node.spec.kind == LayerKind::relu ? 0.0 : node.spec.slope;
                Tensor y(x.n, x.c, x.h, x.w);
                double margin = tape.kink_margin;
                for (std::size_t i = 0; i < x.size(); ++i) {
                    const double v = x.data[i];
                    margin = std::min(margin, std::abs(v));
                    y.data[i] = v > 0.0 ? v : slope * v;
                }
                tape.kink_margin = margin;
                tape.activations[id] = std::move(y);
                break;
            }
            case LayerKind::sigmoid: {
                const Tensor& x = tape.activations[static_cast<std::size_t>(node.inputs[0])];
                Tensor y(x.n, x.c, x.h, x.w);
                for (std::size_t i = 0; i < x.size(); ++i)
                    y.data[i] = 1.0 / (1.0 + std::exp(-x.data[i]));
                tape.activations[id] = std::move(y);
                break;
            }
            case LayerKind::concat: {
                const Tensor& first = tape.activations[static_cast<std::size_t>(node.inputs[0])];
                int channels = 0;
                for (int in : node.inputs) {
                    const Tensor& t = tape.activations[static_cast<std::size_t>(in)];
                    if (t.n != first.n || t.h != first.h || t.w != first.w)
                        fail(ErrorCode::ShapeMismatch,
                             "concat at node " + std::to_string(id) + ": " + t.shape_str() +
                                 " vs " + first.shape_str());
                    channels += t.c;
                }
                Tensor y(first.n, channels, first.h, first.w);
                for (int in_n = 0; in_n < first.n; ++in_n) {
                    int co = 0;
                    for (int in : node.inputs) {
                        const Tensor& t = tape.activations[static_cast<std::size_t>(in)];
                        for (int tc = 0; tc < t.c; ++tc, ++co)
                            std::copy_n(t.plane_ptr(in_n, tc), t.plane(), y.plane_ptr(in_n, co));
                    }
                }
                tape.activations[id] = std::move(y);
                break;
            }
            case LayerKind::batchnorm: {
                const Tensor& x = tape.activations[static_cast<std::size_t>(node.inputs[0])];
                const Tensor& gamma = store.at(node.name + ".gamma").value;
                const Tensor& beta = store.at(node.name + ".beta").value;
                Tensor y(x.n, x.c, x.h, x.w);
                if (training) {
                    if (static_cast<std::size_t>(x.n) * x.h * x.w < 2)
                        fail(ErrorCode::DegenerateBatch,
                             "batchnorm \"" + node.name + "\" needs batch*H*W >= 2");
                    BnSaved saved;
                    bn_channel_stats(x, saved.mean, saved.var);
                    saved.invstd.resize(static_cast<std::size_t>(x.c));
                    for (int ic = 0; ic < x.c; ++ic)
                        saved.invstd[static_cast<std::size_t>(ic)] =
                            1.0 / std::sqrt(saved.var[static_cast<std::size_t>(ic)] + node.spec.eps);
                    for (int in = 0; in < x.n; ++in)
                        for (int ic = 0; ic < x.c; ++ic) {
                            const double* xp = x.plane_ptr(in, ic);
                            double* yp = y.plane_ptr(in, ic);
                            const double mu = saved.mean[static_cast<std::size_t>(ic)];
                            const double is = saved.invstd[static_cast<std::size_t>(ic)];
                            const double g = gamma.data[static_cast<std::size_t>(ic)];
                            const double bt = beta.data[static_cast<std::size_t>(ic)];
                            for (std::size_t i = 0; i < x.plane(); ++i)
                                yp[i] = g * (xp[i] - mu) * is + bt;
                        }
                    tape.bn[static_cast<int>(id)] = std::move(saved);
                } else {
                    const Tensor& rmean = store.at(node.name + ".rmean").value;
                    const Tensor& rvar = store.at(node.name + ".rvar").value;
                    for (int in = 0; in < x.n; ++in)
                        for (int ic = 0; ic < x.c; ++ic) {
                            const double* xp = x.plane_ptr(in, ic);
                            double* yp = y.plane_ptr(in, ic);
                            const double mu = rmean.data[static_cast<std::size_t>(ic)];
                            const double is =
                                1.0 / std::sqrt(rvar.data[static_cast<std::size_t>(ic)] + node.spec.eps);
                            const double g = gamma.data[static_cast<std::size_t>(ic)];
                            const double bt = beta.data[static_cast<std::size_t>(ic)];
                            for (std::size_t i = 0; i < x.plane(); ++i)
                                yp[i] = g * (xp[i] - mu) * is + bt;
                        }
                }
                tape.activations[id] = std::move(y);
                break;
            }
        }
    }
    tape.valid = true;
    return tape;
}

TensorMap outputs_of(const ComputeGraph& graph, const Tape& tape) {
    if (!tape.valid) fail(ErrorCode::NoTape, "forward tape not recorded");
    TensorMap out;
    for (const auto& [name, id] : graph.outputs())
        out[name] = tape.activations[static_cast<std::size_t>(id)];
    return out;
}

// --- Backward --------------------------------------------------------------------

GradMap backward(const ComputeGraph& graph, const ParameterStore& store, const Tape& tape,
                 const TensorMap& output_grads, TensorMap* input_grads) {
    if (!tape.valid) fail(ErrorCode::NoTape, "forward tape not recorded");
    const auto& nodes = graph.nodes();

    std::vector<Tensor> grads(nodes.size());
    const auto add_grad = [&grads](int id, const Tensor& g) {
        Tensor& dst = grads[static_cast<std::size_t>(id)];
        if (dst.size() == 0) {
            dst = g;
        } else {
            if (!dst.same_shape(g)) fail(ErrorCode::ShapeMismatch, "gradient shape mismatch");
            for (std::size_t i = 0; i < dst.size(); ++i) dst.data[i] += g.data[i];
        }
    };

    for (const auto& [name, id] : graph.outputs()) {
        auto it = output_grads.find(name);
        if (it == output_grads.end()) continue;
        const Tensor& act = tape.activations[static_cast<std::size_t>(id)];
        if (!it->second.same_shape(act))
            fail(ErrorCode::ShapeMismatch, "output grad \"" + name + "\" is " +
                                               it->second.shape_str() + ", activation is " +
                                               act.shape_str());
        add_grad(id, it->second);
    }

    GradMap param_grads;
    if (input_grads) input_grads->clear();

    for (int id = static_cast<int>(nodes.size()) - 1; id >= 0; --id) {
        const Node& node = nodes[static_cast<std::size_t>(id)];
        Tensor& g = grads[static_cast<std::size_t>(id)];
        if (g.size() == 0) continue;  // nothing consumed this node

        switch (node.spec.kind) {
            case LayerKind::input: {
                if (input_grads) (*input_grads)[node.name] = g;
                break;
            }
            case LayerKind::conv: {
                const Tensor& x = tape.activations[static_cast<std::size_t>(node.inputs[0])];
                param_grads[node.name + ".w"] =
                    conv2d_backward_weight(x, g, node.spec.stride, node.spec.pad, node.spec.k);
                Tensor gb(1, node.spec.out_c, 1, 1);
                gb.data = bias_backward(g);
                param_grads[node.name + ".b"] = std::move(gb);
                add_grad(node.inputs[0],
                         conv2d_backward_input(g, store.at(node.name + ".w").value,
                                               node.spec.stride, node.spec.pad, x.h, x.w));
                break;
            }
            case LayerKind::tconv: {
                const Tensor& x = tape.activations[static_cast<std::size_t>(node.inputs[0])];
                param_grads[node.name + ".w"] =
                    tconv2d_backward_weight(x, g, node.spec.stride, node.spec.pad, node.spec.k);
                Tensor gb(1, node.spec.out_c, 1, 1);
                gb.data = bias_backward(g);
                param_grads[node.name + ".b"] = std::move(gb);
                add_grad(node.inputs[0],
                         tconv2d_backward_input(g, store.at(node.name + ".w").value,
                                                node.spec.stride, node.spec.pad, x.h, x.w));
                break;
            }
            case LayerKind::leaky_relu:
            case LayerKind::relu: {
                const Tensor& x = tape.activations[static_cast<std::size_t>(node.inputs[0])];
                const double slope = node.spec.kind == LayerKind::relu ? 0.0 : node.spec.slope;
                Tensor gx(x.n, x.c, x.h, x.w);
                for (std::size_t i = 0; i < x.size(); ++i)
                    gx.data[i] = g.data[i] * (x.data[i] > 0.0 ? 1.0 : slope);
                add_grad(node.inputs[0], gx);
                break;
            }
            case LayerKind::sigmoid: {
                const Tensor& y = tape.activations[static_cast<std::size_t>(id)];
                Tensor gx(y.n, y.c, y.h, y.w);
                for (std::size_t i = 0; i < y.size(); ++i)
                    gx.data[i] = g.data[i] * y.data[i] * (1.0 - y.data[i]);
                add_grad(node.inputs[0], gx);
                break;
            }
            case LayerKind::concat: {
                int co = 0;
                for (int in : node.inputs) {
                    const Tensor& t = tape.activations[static_cast<std::size_t>(in)];
                    Tensor gx(t.n, t.c, t.h, t.w);
                    for (int in_n = 0; in_n < t.n; ++in_n)
                        for (int tc = 0; tc < t.c; ++tc)
                            std::copy_n(g.plane_ptr(in_n, co + tc), t.plane(),
                                        gx.plane_ptr(in_n, tc));
                    co += t.c;
                    add_grad(in, gx);
                }
                break;
            }
            case LayerKind::batchnorm: {
                const Tensor& x = tape.activations[static_cast<std::size_t>(node.inputs[0])];
                const Tensor& gamma = store.at(node.name + ".gamma").value;
                Tensor gx(x.n, x.c, x.h, x.w);
                Tensor ggamma(1, x.c, 1, 1);
                Tensor gbeta(1, x.c, 1, 1);

                if (tape.training) {
                    const BnSaved& saved = tape.bn.at(id);
                    const double m = static_cast<double>(x.n) * x.h * x.w;
                    for (int ic = 0; ic < x.c; ++ic) {
                        const double mu = saved.mean[static_cast<std::size_t>(ic)];
                        const double is = saved.invstd[static_cast<std::size_t>(ic)];
                        double sum_gy = 0.0, sum_gy_xhat = 0.0;
                        for (int in = 0; in < x.n; ++in) {
                            const double* xp = x.plane_ptr(in, ic);
                            const double* gp = g.plane_ptr(in, ic);
                            for (std::size_t i = 0; i < x.plane(); ++i) {
                                sum_gy += gp[i];
                                sum_gy_xhat += gp[i] * (xp[i] - mu) * is;
                            }
                        }
                        ggamma.data[static_cast<std::size_t>(ic)] = sum_gy_xhat;
                        gbeta.data[static_cast<std::size_t>(ic)] = sum_gy;
                        const double gscale = gamma.data[static_cast<std::size_t>(ic)] * is / m;
                        for (int in = 0; in < x.n; ++in) {
                            const double* xp = x.plane_ptr(in, ic);
                            const double* gp = g.plane_ptr(in, ic);
                            double* gxp = gx.plane_ptr(in, ic);
                            for (std::size_t i = 0; i < x.plane(); ++i) {
                                const double xhat = (xp[i] - mu) * is;
                                gxp[i] = gscale * (m * gp[i] - sum_gy - xhat * sum_gy_xhat);
                            }
                        }
                    }
                } else {
                    const Tensor& rmean = store.at(node.name + ".rmean").value;
                    const Tensor& rvar = store.at(node.name + ".rvar").value;
                    for (int ic = 0; ic < x.c; ++ic) {
                        const double mu = rmean.data[static_cast<std::size_t>(ic)];
                        const double is =
                            1.0 / std::sqrt(rvar.data[static_cast<std::size_t>(ic)] + node.spec.eps);
                        const double gm = gamma.data[static_cast<std::size_t>(ic)];
                        double sum_gy = 0.0, sum_gy_xhat = 0.0;
                        for (int in = 0; in < x.n; ++in) {
                            const double* xp = x.plane_ptr(in, ic);
                            const double* gp = g.plane_ptr(in, ic);
                            double* gxp = gx.plane_ptr(in, ic);
                            for (std::size_t i = 0; i < x.plane(); ++i) {
                                sum_gy += gp[i];
                                sum_gy_xhat += gp[i] * (xp[i] - mu) * is;
                                gxp[i] = gp[i] * gm * is;
                            }
                        }
                        ggamma.data[static_cast<std::size_t>(ic)] = sum_gy_xhat;
                        gbeta.data[static_cast<std::size_t>(ic)] = sum_gy;
                    }
                }
                param_grads[node.name + ".gamma"] = std::move(ggamma);
                param_grads[node.name + ".beta"] = std::move(gbeta);
                add_grad(node.inputs[0], gx);
                break;
            }
        }
    }
    return param_grads;
}

void commit_batchnorm_updates(const ComputeGraph& graph, const Tape& tape, ParameterStore& store) {
    if (!tape.valid || !tape.training) return;
    for (const auto& [id, saved] : tape.bn) {
        const Node& node = graph.nodes()[static_cast<std::size_t>(id)];
        Tensor& rmean = store.at(node.name + ".rmean").value;
        Tensor& rvar = store.at(node.name + ".rvar").value;
        const double mom = node.spec.momentum;
        for (std::size_t ic = 0; ic < saved.mean.size(); ++ic) {
            rmean.data[ic] = (1.0 - mom) * rmean.data[ic] + mom * saved.mean[ic];
            rvar.data[ic] = (1.0 - mom) * rvar.data[ic] + mom * saved.var[ic];
        }
    }
}

// --- Adam ------------------------------------------------------------------------

void adam_step(ParameterStore& store, const GradMap& grads, const AdamConfig& cfg) {
    for (const std::string& name : store.names()) {
        Param& p = store.at(name);
        if (!p.trainable) continue;
        const auto it = grads.find(name);
        const Tensor* g = it != grads.end() ? &it->second : nullptr;
        if (g && !g->same_shape(p.value))
            fail(ErrorCode::ShapeMismatch, "gradient for \"" + name + "\" is " + g->shape_str() +
                                               ", parameter is " + p.value.shape_str());
        p.t += 1;
        const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(p.t));
        const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(p.t));
        for (std::size_t i = 0; i < p.value.size(); ++i) {
            const double gi = g ? g->data[i] : 0.0;
            p.m.data[i] = cfg.beta1 * p.m.data[i] + (1.0 - cfg.beta1) * gi;
            p.v.data[i] = cfg.beta2 * p.v.data[i] + (1.0 - cfg.beta2) * gi * gi;
            const double mhat = p.m.data[i] / bc1;
            const double vhat = p.v.data[i] / bc2;
            p.value.data[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
        }
    }
}

// --- Gradient checking -------------------------------------------------------------

namespace {

// Sign pattern of every ReLU-family pre-activation; a coordinate whose two
// perturbed forwards disagree here has crossed a kink and its central
// difference is meaningless.
std::vector<std::uint8_t> kink_signs(const ComputeGraph& graph, const Tape& tape) {
    std::vector<std::uint8_t> signs;
    const auto& nodes = graph.nodes();
    for (std::size_t id = 0; id < nodes.size(); ++id) {
        const LayerKind kind = nodes[id].spec.kind;
        if (kind != LayerKind::relu && kind != LayerKind::leaky_relu) continue;
        const Tensor& x = tape.activations[static_cast<std::size_t>(nodes[id].inputs[0])];
        for (double v : x.data) signs.push_back(v > 0.0 ? 1 : 0);
    }
    return signs;
}

}  // namespace

double grad_check(const ComputeGraph& graph, ParameterStore& store, const TensorMap& inputs,
                  double fd_eps, bool training, std::uint64_t weight_seed) {
    const Tape base = forward(graph, store, inputs, training);

    // fixed pseudorandom linear functional of the outputs
    TensorMap og;
    std::size_t total_out = 0;
    for (const auto& [name, id] : graph.outputs())
        total_out += base.activations[static_cast<std::size_t>(id)].size();
    if (total_out == 0) fail(ErrorCode::BadArgument, "graph has no outputs");
    Rng rng = Rng::keyed(weight_seed, 0xFDC);
    for (const auto& [name, id] : graph.outputs()) {
        const Tensor& act = base.activations[static_cast<std::size_t>(id)];
        Tensor w(act.n, act.c, act.h, act.w);
        for (double& v : w.data) v = rng.uniform(-1.0, 1.0) / static_cast<double>(total_out);
        og[name] = std::move(w);
    }

    struct Probe {
        double loss = 0.0;
        double margin = 0.0;
        std::vector<std::uint8_t> signs;
    };
    const auto probe = [&] {
        const Tape tape = forward(graph, store, inputs, training);
        Probe p;
        p.margin = tape.kink_margin;
        p.signs = kink_signs(graph, tape);
        for (const auto& [name, id] : graph.outputs()) {
            const Tensor& act = tape.activations[static_cast<std::size_t>(id)];
            const Tensor& w = og.at(name);
            for (std::size_t i = 0; i < act.size(); ++i) p.loss += w.data[i] * act.data[i];
        }
        return p;
    };

    const GradMap analytic = backward(graph, store, base, og);

    double max_rel = 0.0;
    for (const std::string& name : store.names()) {
        Param& p = store.at(name);
        if (!p.trainable) continue;
        const auto it = analytic.find(name);
        for (std::size_t i = 0; i < p.value.size(); ++i) {
            const double v0 = p.value.data[i];
            p.value.data[i] = v0 + fd_eps;
            const Probe plus = probe();
            p.value.data[i] = v0 - fd_eps;
            const Probe minus = probe();
            p.value.data[i] = v0;
            // exclude coordinates whose perturbation interacts with a ReLU
            // corner: either endpoint within 1e-7 of it, or a sign flip
            // between the endpoints
            if (std::min(plus.margin, minus.margin) < 1e-7 || plus.signs != minus.signs)
                continue;
            const double fd = (plus.loss - minus.loss) / (2.0 * fd_eps);
            const double an = it != analytic.end() ? it->second.data[i] : 0.0;
            const double rel =
                std::abs(an - fd) / std::max({std::abs(an), std::abs(fd), 1e-4});
            max_rel = std::max(max_rel, rel);
        }
    }
    return max_rel;
}

}  // namespace pansharp::neural
