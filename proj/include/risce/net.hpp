// SPDX-License-Identifier: Apache-2.0
//
// Attention-based channel denoiser. A complex observation is packed into a
// two-channel real feature map, lifted by a 3x3 conv stem, refined by B
// attention blocks (self-attention over the spatial tokens followed by a
// 3x3 conv), optionally rejoined with the stem output over the channel
// axis, and projected back down to two channels.

#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "risce/nn/adam.hpp"
#include "risce/nn/tape.hpp"
#include "risce/nn/tensor.hpp"
#include "risce/numerics.hpp"
#include "risce/parallel.hpp"
#include "risce/rng.hpp"

namespace risce::net {

using nn::Parameter;
using nn::Tape;
using nn::Tensor;

/// How the wide post-stage feature map becomes a two-channel output.
/// `project` runs a conv to post_concat_channels then a 1x1 projection;
/// `direct` runs a single conv straight to two channels.
enum class FinalStage { project, direct };

struct NetConfig {
    std::size_t rows = 8;   // spatial extent M_t
    std::size_t cols = 8;   // spatial extent N_t
    std::size_t channels = 32;
    std::size_t blocks = 2;
    bool skip_connection = true;
    std::size_t post_concat_channels = 64;
    FinalStage final_stage = FinalStage::project;

    void validate() const {
        if (rows < 1 || cols < 1) throw std::invalid_argument("NetConfig: empty spatial grid");
        if (channels < 1) throw std::invalid_argument("NetConfig: channels must be >= 1");
        if (post_concat_channels < 1)
            throw std::invalid_argument("NetConfig: post_concat_channels must be >= 1");
    }
};

struct TrainConfig {
    std::size_t epochs = 200;  // the low-SNR ablation rows converge slowest
    double lr = 1e-3;
    double weight_decay = 1e-5;
    std::size_t batch_size = 64;
    std::uint64_t seed = 1;

    void validate() const {
        if (epochs < 1) throw std::invalid_argument("TrainConfig: epochs must be >= 1");
        if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
        if (!(lr >= 0.0) || !(weight_decay >= 0.0))
            throw std::invalid_argument("TrainConfig: lr and weight_decay must be >= 0");
    }
};

template <typename T>
struct NetParamsT {
    NetConfig cfg;
    std::vector<Parameter<T>> params;
};
using NetParams = NetParamsT<float>;

namespace detail {

template <typename T>
void fill_uniform(Tensor<T>& t, double bound, RngStream& rng) {
    for (T& x : t.v) x = static_cast<T>(bound * (2.0 * rng.next_unit() - 1.0));
}

}  // namespace detail

/// Builds the parameter set in a fixed order with stable names. Weights are
/// uniform(-a, a) with a = sqrt(6 / fan_in); biases start at zero.
template <typename T>
NetParamsT<T> make_net_params(const NetConfig& cfg, RngStream rng) {
    cfg.validate();
    const std::size_t c = cfg.channels;
    NetParamsT<T> net;
    net.cfg = cfg;
    auto& ps = net.params;

    const auto add_conv = [&](const std::string& name, std::size_t cin, std::size_t cout) {
        ps.emplace_back(name + ".kernel", Tensor<T>({3, 3, cin, cout}));
        detail::fill_uniform(ps.back().value, std::sqrt(6.0 / (9.0 * double(cin))), rng);
        ps.emplace_back(name + ".bias", Tensor<T>({cout}));
    };
    const auto add_fcl = [&](const std::string& name, std::size_t cin, std::size_t cout) {
        ps.emplace_back(name + ".weight", Tensor<T>({cout, cin}));
        detail::fill_uniform(ps.back().value, std::sqrt(6.0 / double(cin)), rng);
        ps.emplace_back(name + ".bias", Tensor<T>({cout}));
    };

    add_conv("stem", 2, c);
    for (std::size_t b = 0; b < cfg.blocks; ++b) {
        const std::string pfx = "block" + std::to_string(b);
        add_fcl(pfx + ".key", c, c);
        add_fcl(pfx + ".query", c, c);
        add_fcl(pfx + ".value", c, c);
        add_fcl(pfx + ".out", c, c);
        add_conv(pfx + ".conv", c, c);
    }
    const std::size_t post_in = cfg.skip_connection ? 2 * c : c;
    if (cfg.final_stage == FinalStage::project) {
        add_conv("post", post_in, cfg.post_concat_channels);
        add_fcl("head", cfg.post_concat_channels, 2);
    } else {
        add_conv("post", post_in, 2);
    }
    return net;
}

inline std::size_t param_count(const NetConfig& cfg) {
    const NetParamsT<float> net = make_net_params<float>(cfg, RngStream(0, 0));
    std::size_t n = 0;
    for (const auto& p : net.params) n += p.value.numel();
    return n;
}

/// Splits a complex matrix into a (rows, cols, 2) map: channel 0 real parts,
/// channel 1 imaginary parts.
template <typename T>
Tensor<T> pack_complex(const num::ComplexMatrix& h) {
    Tensor<T> t({h.rows(), h.cols(), 2});
    for (std::size_t i = 0; i < h.rows(); ++i)
        for (std::size_t j = 0; j < h.cols(); ++j) {
            t.v[(i * h.cols() + j) * 2 + 0] = static_cast<T>(h(i, j).real());
            t.v[(i * h.cols() + j) * 2 + 1] = static_cast<T>(h(i, j).imag());
        }
    return t;
}

template <typename T>
num::ComplexMatrix unpack_complex(const Tensor<T>& t) {
    if (t.rank() != 3 || t.shape[2] != 2)
        throw std::invalid_argument("unpack_complex: tensor must be (rows,cols,2), got " +
                                    nn::shape_str(t));
    num::ComplexMatrix h(t.shape[0], t.shape[1]);
    for (std::size_t i = 0; i < t.shape[0]; ++i)
        for (std::size_t j = 0; j < t.shape[1]; ++j)
            h(i, j) = {static_cast<double>(t.v[(i * t.shape[1] + j) * 2 + 0]),
                       static_cast<double>(t.v[(i * t.shape[1] + j) * 2 + 1])};
    return h;
}

template <typename T>
struct AttentionIds {
    typename Tape<T>::Id wk, bk, wq, bq, wv, bv, wo, bo;
};

/// One self-attention layer over the spatial tokens of a (H, W, C) map.
/// K, Q, V come from per-token linear layers; the attention map is a global
/// softmax of K^T Q; the output is a final linear layer on V * A'.
/// `logit_shift` adds a constant to every attention logit; the softmax makes
/// the layer invariant to it, which tests exploit.
template <typename T>
typename Tape<T>::Id self_attention(Tape<T>& tp, typename Tape<T>::Id x,
                                    const AttentionIds<T>& p, T logit_shift = T(0)) {
    const std::size_t h = tp.value(x).shape[0];
    const std::size_t w = tp.value(x).shape[1];
    const auto tok = tp.to_tokens(x);
    const auto k = tp.fcl(tok, p.wk, p.bk);
    const auto q = tp.fcl(tok, p.wq, p.bq);
    const auto v = tp.fcl(tok, p.wv, p.bv);
    auto logits = tp.matmul(tp.transpose2(k), q);
    if (logit_shift != T(0)) logits = tp.add_const(logits, logit_shift);
    const auto attn = tp.global_softmax(logits);
    const auto mixed = tp.fcl(tp.matmul(v, attn), p.wo, p.bo);
    return tp.from_tokens(mixed, h, w);
}

/// Records the full forward graph on `tp`. `pid` holds the tape nodes of
/// net.params in construction order; `x` is the packed (rows, cols, 2) input.
/// Returns the (rows, cols, 2) output node.
template <typename T>
typename Tape<T>::Id build_forward(Tape<T>& tp, const NetConfig& cfg,
                                   typename Tape<T>::Id x,
                                   const std::vector<typename Tape<T>::Id>& pid) {
    const Tensor<T>& xv = tp.value(x);
    if (xv.rank() != 3 || xv.shape[0] != cfg.rows || xv.shape[1] != cfg.cols ||
        xv.shape[2] != 2)
        throw std::invalid_argument("forward: input must be (" + std::to_string(cfg.rows) +
                                    "," + std::to_string(cfg.cols) + ",2), got " +
                                    nn::shape_str(xv));
    std::size_t at = 0;
    const auto next = [&] { return pid.at(at++); };

    const auto stem_k = next();
    const auto stem_b = next();
    const auto s = tp.relu(tp.conv3x3(x, stem_k, stem_b));
    auto cur = s;
    for (std::size_t b = 0; b < cfg.blocks; ++b) {
        AttentionIds<T> att;
        att.wk = next();
        att.bk = next();
        att.wq = next();
        att.bq = next();
        att.wv = next();
        att.bv = next();
        att.wo = next();
        att.bo = next();
        const auto mixed = self_attention(tp, cur, att);
        const auto conv_k = next();
        const auto conv_b = next();
        cur = tp.conv3x3(mixed, conv_k, conv_b);
    }
    if (cfg.skip_connection) cur = tp.concat_channels(cur, s);
    const auto post_k = next();
    const auto post_b = next();
    cur = tp.conv3x3(cur, post_k, post_b);
    if (cfg.final_stage == FinalStage::project) {
        const auto head_w = next();
        const auto head_b = next();
        cur = tp.from_tokens(tp.fcl(tp.to_tokens(cur), head_w, head_b), cfg.rows, cfg.cols);
    }
    return cur;
}

/// Pushes all parameters onto a tape and returns their node ids in
/// construction order.
template <typename T>
std::vector<typename Tape<T>::Id> push_params(Tape<T>& tp, const NetParamsT<T>& net) {
    std::vector<typename Tape<T>::Id> ids;
    ids.reserve(net.params.size());
    for (const Parameter<T>& p : net.params) ids.push_back(tp.input(p.value));
    return ids;
}

/// Plain (non-differentiable) per-sample NMSE between two tensors.
template <typename T>
double nmse_of(const Tensor<T>& pred, const Tensor<T>& label) {
    if (!pred.same_shape(label))
        throw std::invalid_argument("nmse_of: shape mismatch " + nn::shape_str(pred) +
                                    " vs " + nn::shape_str(label));
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < pred.v.size(); ++i) {
        const double d = double(pred.v[i]) - double(label.v[i]);
        num += d * d;
        den += double(label.v[i]) * double(label.v[i]);
    }
    if (!(den > 0.0)) throw std::invalid_argument("nmse_of: zero-norm label");
    return num / den;
}

/// Mean per-sample NMSE over a batch.
template <typename T>
double batch_nmse(const std::vector<Tensor<T>>& preds, const std::vector<Tensor<T>>& labels) {
    if (preds.size() != labels.size() || preds.empty())
        throw std::invalid_argument("batch_nmse: batches must be nonempty and equal-sized");
    double s = 0.0;
    for (std::size_t i = 0; i < preds.size(); ++i) s += nmse_of(preds[i], labels[i]);
    return s / double(preds.size());
}

inline Tensor<float> predict(const NetParams& net, const Tensor<float>& noisy) {
    Tape<float> tp;
    const auto ids = push_params(tp, net);
    const auto out = build_forward(tp, net.cfg, tp.input(noisy), ids);
    return tp.value(out);
}

inline std::vector<Tensor<float>> predict_batch(const NetParams& net,
                                                const std::vector<Tensor<float>>& noisy) {
    std::vector<Tensor<float>> out(noisy.size());
    parallel_for(noisy.size(), [&](std::size_t i) { out[i] = predict(net, noisy[i]); });
    return out;
}

struct TrainSample {
    Tensor<float> noisy;
    Tensor<float> clean;
};

struct EpochRow {
    std::size_t epoch = 0;
    double train_nmse = 0.0;
    double val_nmse = 0.0;
};

struct TrainResult {
    NetParams net;  // weights from the best-validation epoch
    std::vector<EpochRow> history;
    std::vector<std::uint64_t> batch_digests;  // one order-audit hash per batch
    std::size_t best_epoch = 0;
    double best_val = std::numeric_limits<double>::infinity();
};

inline void save_history_csv(const std::string& path, const std::vector<EpochRow>& history) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw std::runtime_error("cannot open history file: " + path);
    os << "epoch,train_nmse,val_nmse\n";
    os.precision(17);
    for (const EpochRow& r : history)
        os << r.epoch << ',' << r.train_nmse << ',' << r.val_nmse << '\n';
    if (!os) throw std::runtime_error("history write failed: " + path);
}

namespace detail {

inline void check_sample_shapes(const std::vector<TrainSample>& set, const NetConfig& cfg,
                                const char* which) {
    const std::vector<std::size_t> want{cfg.rows, cfg.cols, 2};
    for (const TrainSample& s : set)
        if (s.noisy.shape != want || s.clean.shape != want)
            throw std::invalid_argument(std::string(which) +
                                        " sample shape does not match the net config");
}

}  // namespace detail

/// Seeded mini-batch training. Samples are expected pre-normalized. The
/// per-sample losses and gradients are reduced in index order regardless of
/// worker count, so a (seed, config) pair fully determines the run.
inline TrainResult train(const std::vector<TrainSample>& train_set,
                         const std::vector<TrainSample>& val_set, const NetConfig& ncfg,
                         const TrainConfig& tcfg) {
    ncfg.validate();
    tcfg.validate();
    if (train_set.empty()) throw std::invalid_argument("train: empty training set");
    detail::check_sample_shapes(train_set, ncfg, "train");
    detail::check_sample_shapes(val_set, ncfg, "validation");

    TrainResult res;
    NetParams live = make_net_params<float>(ncfg, RngStream(tcfg.seed, 1));
    nn::AdamState<float> opt;
    opt.lr = tcfg.lr;
    opt.weight_decay = tcfg.weight_decay;
    RngStream shuffle_root(tcfg.seed, 2);

    const std::size_t n = train_set.size();
    const std::size_t bs = std::min(tcfg.batch_size, n);

    // Per-sample gradient slots, reused across batches.
    std::vector<std::vector<Tensor<float>>> slot(bs);
    std::vector<double> slot_loss(bs, 0.0);
    for (auto& g : slot) {
        g.reserve(live.params.size());
        for (const auto& p : live.params) g.emplace_back(p.value.shape);
    }

    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;

    for (std::size_t epoch = 0; epoch < tcfg.epochs; ++epoch) {
        RngStream sh = shuffle_root.derive(epoch);
        for (std::size_t i = n; i > 1; --i) {
            const std::size_t j = sh.next_below(i);
            std::swap(order[i - 1], order[j]);
        }

        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < n; start += bs) {
            const std::size_t count = std::min(bs, n - start);
            parallel_for(count, [&](std::size_t s) {
                const TrainSample& sample = train_set[order[start + s]];
                Tape<float> tp;
                const auto pids = push_params(tp, live);
                const auto out = build_forward(tp, ncfg, tp.input(sample.noisy), pids);
                const auto loss = tp.nmse_against(out, sample.clean);
                slot_loss[s] = tp.value(loss).v[0];
                tp.backward(loss);
                for (std::size_t j = 0; j < pids.size(); ++j) slot[s][j] = tp.grad(pids[j]);
            });

            std::uint64_t digest = 0x524953434531ULL;
            double batch_loss = 0.0;
            for (std::size_t s = 0; s < count; ++s) {
                digest = risce::detail::mix64(digest, order[start + s]);
                batch_loss += slot_loss[s];
            }
            res.batch_digests.push_back(digest);
            if (!std::isfinite(batch_loss))
                throw std::runtime_error("training diverged at epoch " +
                                         std::to_string(epoch));
            epoch_loss += batch_loss;

            const double inv = 1.0 / double(count);
            for (std::size_t j = 0; j < live.params.size(); ++j) {
                Parameter<float>& p = live.params[j];
                for (std::size_t e = 0; e < p.grad.v.size(); ++e) {
                    double acc = 0.0;
                    for (std::size_t s = 0; s < count; ++s) acc += slot[s][j].v[e];
                    p.grad.v[e] = static_cast<float>(acc * inv);
                }
            }
            nn::adam_step(live.params, opt);
        }

        EpochRow row;
        row.epoch = epoch;
        row.train_nmse = epoch_loss / double(n);
        if (val_set.empty()) {
            row.val_nmse = row.train_nmse;
        } else {
            std::vector<double> vloss(val_set.size(), 0.0);
            parallel_for(val_set.size(), [&](std::size_t i) {
                vloss[i] = nmse_of(predict(live, val_set[i].noisy), val_set[i].clean);
            });
            double vs = 0.0;
            for (const double x : vloss) vs += x;
            row.val_nmse = vs / double(val_set.size());
        }
        if (!std::isfinite(row.val_nmse))
            throw std::runtime_error("training diverged at epoch " + std::to_string(epoch));
        res.history.push_back(row);
        if (row.val_nmse < res.best_val) {
            res.best_val = row.val_nmse;
            res.best_epoch = epoch;
            res.net = live;
        }
    }
    return res;
}

}  // namespace risce::net
