// SPDX-License-Identifier: Apache-2.0
//
// Eager reverse-mode differentiation. Nodes are appended in evaluation
// order, so walking them backwards is already a reverse topological sweep;
// gradient accumulation is additive and runs in a fixed order, which keeps
// whole training runs bit-reproducible.
//
// Layout conventions: feature maps are (H, W, C) with C fastest; token
// matrices are (C, L) with one column per spatial position; convolution
// kernels are (3, 3, Cin, Cout) with Cout fastest. The inner loops below
// run along the fastest axis so they vectorize.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "risce/nn/tensor.hpp"

namespace risce::nn {

template <typename T>
class Tape {
  public:
    using Id = std::size_t;

    /// Leaf node holding a copy of t.
    Id input(Tensor<T> t) { return push(std::move(t), {}); }

    const Tensor<T>& value(Id id) const { return nodes_.at(id).val; }
    const Tensor<T>& grad(Id id) const { return nodes_.at(id).grad; }
    std::size_t node_count() const { return nodes_.size(); }

    /// out(y,x,co) = bias(co) + sum over the 3x3 window and input channels,
    /// stride 1, zero padding 1, spatial extents preserved.
    Id conv3x3(Id x, Id kernel, Id bias) {
        const Tensor<T>& xv = val(x);
        const Tensor<T>& kv = val(kernel);
        const Tensor<T>& bv = val(bias);
        if (xv.rank() != 3) throw std::invalid_argument("conv3x3: input must be (H,W,C)");
        if (kv.rank() != 4 || kv.shape[0] != 3 || kv.shape[1] != 3)
            throw std::invalid_argument("conv3x3: kernel must be (3,3,Cin,Cout)");
        const std::size_t h = xv.shape[0], w = xv.shape[1], ci = xv.shape[2];
        const std::size_t co = kv.shape[3];
        if (kv.shape[2] != ci)
            throw std::invalid_argument("conv3x3: kernel expects " +
                                        std::to_string(kv.shape[2]) + " input channels, got " +
                                        std::to_string(ci));
        if (bv.rank() != 1 || bv.shape[0] != co)
            throw std::invalid_argument("conv3x3: bias must be (Cout)");

        Tensor<T> out({h, w, co});
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t xx = 0; xx < w; ++xx) {
                T* orow = &out.v[(y * w + xx) * co];
                for (std::size_t c = 0; c < co; ++c) orow[c] = bv.v[c];
                for (std::size_t ky = 0; ky < 3; ++ky) {
                    const std::size_t yy = y + ky;
                    if (yy < 1 || yy > h) continue;  // yy-1 in [0, h)
                    for (std::size_t kx = 0; kx < 3; ++kx) {
                        const std::size_t xw = xx + kx;
                        if (xw < 1 || xw > w) continue;
                        const T* xpix = &xv.v[((yy - 1) * w + (xw - 1)) * ci];
                        const T* kslice = &kv.v[(ky * 3 + kx) * ci * co];
                        for (std::size_t c = 0; c < ci; ++c) {
                            const T xval = xpix[c];
                            const T* krow = kslice + c * co;
                            for (std::size_t o = 0; o < co; ++o) orow[o] += xval * krow[o];
                        }
                    }
                }
            }

        const Id out_id = push(std::move(out), {x, kernel, bias});
        nodes_[out_id].back = [x, kernel, bias, out_id, h, w, ci, co](Tape& tp) {
            const Tensor<T>& g = tp.nodes_[out_id].grad;
            const Tensor<T>& xv2 = tp.val(x);
            const Tensor<T>& kv2 = tp.val(kernel);
            Tensor<T>& dx = tp.grad_buf(x);
            Tensor<T>& dk = tp.grad_buf(kernel);
            Tensor<T>& db = tp.grad_buf(bias);
            for (std::size_t y = 0; y < h; ++y)
                for (std::size_t xx = 0; xx < w; ++xx) {
                    const T* grow = &g.v[(y * w + xx) * co];
                    for (std::size_t o = 0; o < co; ++o) db.v[o] += grow[o];
                    for (std::size_t ky = 0; ky < 3; ++ky) {
                        const std::size_t yy = y + ky;
                        if (yy < 1 || yy > h) continue;
                        for (std::size_t kx = 0; kx < 3; ++kx) {
                            const std::size_t xw = xx + kx;
                            if (xw < 1 || xw > w) continue;
                            const std::size_t pix = ((yy - 1) * w + (xw - 1)) * ci;
                            const T* xpix = &xv2.v[pix];
                            const T* kslice = &kv2.v[(ky * 3 + kx) * ci * co];
                            T* dk_slice = &dk.v[(ky * 3 + kx) * ci * co];
                            T* dxpix = &dx.v[pix];
                            for (std::size_t c = 0; c < ci; ++c) {
                                const T xval = xpix[c];
                                const T* krow = kslice + c * co;
                                T* dkrow = dk_slice + c * co;
                                T acc = T(0);
                                for (std::size_t o = 0; o < co; ++o) {
                                    dkrow[o] += xval * grow[o];
                                    acc += krow[o] * grow[o];
                                }
                                dxpix[c] += acc;
                            }
                        }
                    }
                }
        };
        return out_id;
    }

    Id relu(Id x) {
        Tensor<T> out = val(x);
        for (T& v : out.v) v = std::max(v, T(0));
        const Id out_id = push(std::move(out), {x});
        nodes_[out_id].back = [x, out_id](Tape& tp) {
            const Tensor<T>& g = tp.nodes_[out_id].grad;
            const Tensor<T>& xv = tp.val(x);
            Tensor<T>& dx = tp.grad_buf(x);
            for (std::size_t i = 0; i < g.v.size(); ++i)
                if (xv.v[i] > T(0)) dx.v[i] += g.v[i];
        };
        return out_id;
    }

    /// Per-token linear map: out = weight * x + bias per column.
    /// x is (C, L), weight (Cout, C), bias (Cout); out is (Cout, L).
    Id fcl(Id x, Id weight, Id bias) {
        const Tensor<T>& xv = val(x);
        const Tensor<T>& wv = val(weight);
        const Tensor<T>& bv = val(bias);
        if (xv.rank() != 2 || wv.rank() != 2 || bv.rank() != 1)
            throw std::invalid_argument("fcl: expects x (C,L), weight (Cout,C), bias (Cout)");
        const std::size_t c = xv.shape[0], l = xv.shape[1], co = wv.shape[0];
        if (wv.shape[1] != c || bv.shape[0] != co)
            throw std::invalid_argument("fcl: weight/bias shapes do not match input " +
                                        shape_str(xv));

        Tensor<T> out({co, l});
        for (std::size_t o = 0; o < co; ++o) {
            T* orow = &out.v[o * l];
            const T bval = bv.v[o];
            for (std::size_t j = 0; j < l; ++j) orow[j] = bval;
            const T* wrow = &wv.v[o * c];
            for (std::size_t k = 0; k < c; ++k) {
                const T wkc = wrow[k];
                const T* xrow = &xv.v[k * l];
                for (std::size_t j = 0; j < l; ++j) orow[j] += wkc * xrow[j];
            }
        }

        const Id out_id = push(std::move(out), {x, weight, bias});
        nodes_[out_id].back = [x, weight, bias, out_id, c, l, co](Tape& tp) {
            const Tensor<T>& g = tp.nodes_[out_id].grad;
            const Tensor<T>& xv2 = tp.val(x);
            const Tensor<T>& wv2 = tp.val(weight);
            Tensor<T>& dx = tp.grad_buf(x);
            Tensor<T>& dw = tp.grad_buf(weight);
            Tensor<T>& db = tp.grad_buf(bias);
            for (std::size_t o = 0; o < co; ++o) {
                const T* grow = &g.v[o * l];
                T bacc = T(0);
                for (std::size_t j = 0; j < l; ++j) bacc += grow[j];
                db.v[o] += bacc;
                const T* wrow = &wv2.v[o * c];
                T* dwrow = &dw.v[o * c];
                for (std::size_t k = 0; k < c; ++k) {
                    const T* xrow = &xv2.v[k * l];
                    T* dxrow = &dx.v[k * l];
                    const T wkc = wrow[k];
                    T wacc = T(0);
                    for (std::size_t j = 0; j < l; ++j) {
                        wacc += grow[j] * xrow[j];
                        dxrow[j] += wkc * grow[j];
                    }
                    dwrow[k] += wacc;
                }
            }
        };
        return out_id;
    }

    Id matmul(Id a, Id b) {
        const Tensor<T>& av = val(a);
        const Tensor<T>& bv = val(b);
        if (av.rank() != 2 || bv.rank() != 2 || av.shape[1] != bv.shape[0])
            throw std::invalid_argument("matmul: inner dimensions disagree: " + shape_str(av) +
                                        " * " + shape_str(bv));
        const std::size_t m = av.shape[0], k = av.shape[1], n = bv.shape[1];
        Tensor<T> out({m, n});
        for (std::size_t i = 0; i < m; ++i) {
            T* orow = &out.v[i * n];
            const T* arow = &av.v[i * k];
            for (std::size_t p = 0; p < k; ++p) {
                const T aip = arow[p];
                const T* brow = &bv.v[p * n];
                for (std::size_t j = 0; j < n; ++j) orow[j] += aip * brow[j];
            }
        }
        const Id out_id = push(std::move(out), {a, b});
        nodes_[out_id].back = [a, b, out_id, m, k, n](Tape& tp) {
            const Tensor<T>& g = tp.nodes_[out_id].grad;
            const Tensor<T>& av2 = tp.val(a);
            const Tensor<T>& bv2 = tp.val(b);
            Tensor<T>& da = tp.grad_buf(a);
            Tensor<T>& db = tp.grad_buf(b);
            for (std::size_t i = 0; i < m; ++i) {
                const T* grow = &g.v[i * n];
                const T* arow = &av2.v[i * k];
                T* darow = &da.v[i * k];
                for (std::size_t p = 0; p < k; ++p) {
                    const T* brow = &bv2.v[p * n];
                    T* dbrow = &db.v[p * n];
                    const T aip = arow[p];
                    T aacc = T(0);
                    for (std::size_t j = 0; j < n; ++j) {
                        aacc += grow[j] * brow[j];
                        dbrow[j] += aip * grow[j];
                    }
                    darow[p] += aacc;
                }
            }
        };
        return out_id;
    }

    Id transpose2(Id a) {
        const Tensor<T>& av = val(a);
        if (av.rank() != 2) throw std::invalid_argument("transpose2: rank-2 input required");
        const std::size_t m = av.shape[0], n = av.shape[1];
        Tensor<T> out({n, m});
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) out.v[j * m + i] = av.v[i * n + j];
        const Id out_id = push(std::move(out), {a});
        nodes_[out_id].back = [a, out_id, m, n](Tape& tp) {
            const Tensor<T>& g = tp.nodes_[out_id].grad;
            Tensor<T>& da = tp.grad_buf(a);
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) da.v[i * n + j] += g.v[j * m + i];
        };
        return out_id;
    }

    /// out = exp(a - max(a)) / sum over all entries; one distribution over
    /// the whole tensor, not per row.
    Id global_softmax(Id a) {
        const Tensor<T>& av = val(a);
        T hi = av.v[0];
        for (const T x : av.v) hi = std::max(hi, x);
        Tensor<T> out(av.shape);
        T sum = T(0);
        for (std::size_t i = 0; i < av.v.size(); ++i) {
            out.v[i] = std::exp(av.v[i] - hi);
            sum += out.v[i];
        }
        for (T& x : out.v) x /= sum;
        const Id out_id = push(std::move(out), {a});
        nodes_[out_id].back = [a, out_id](Tape& tp) {
            const Tensor<T>& g = tp.nodes_[out_id].grad;
            const Tensor<T>& y = tp.nodes_[out_id].val;
            Tensor<T>& da = tp.grad_buf(a);
            T dot = T(0);
            for (std::size_t i = 0; i < g.v.size(); ++i) dot += g.v[i] * y.v[i];
            for (std::size_t i = 0; i < g.v.size(); ++i)
                da.v[i] += y.v[i] * (g.v[i] - dot);
        };
        return out_id;
    }

    /// Channel stacking of two feature maps with equal spatial extents; a's
    /// channels come first.
    Id concat_channels(Id a, Id b) {
        const Tensor<T>& av = val(a);
        const Tensor<T>& bv = val(b);
        if (av.rank() != 3 || bv.rank() != 3 || av.shape[0] != bv.shape[0] ||
            av.shape[1] != bv.shape[1])
            throw std::invalid_argument("concat_channels: spatial extents differ: " +
                                        shape_str(av) + " vs " + shape_str(bv));
        const std::size_t h = av.shape[0], w = av.shape[1];
        const std::size_t ca = av.shape[2], cb = bv.shape[2];
        Tensor<T> out({h, w, ca + cb});
        for (std::size_t p = 0; p < h * w; ++p) {
            T* orow = &out.v[p * (ca + cb)];
            const T* arow = &av.v[p * ca];
            const T* brow = &bv.v[p * cb];
            for (std::size_t c = 0; c < ca; ++c) orow[c] = arow[c];
            for (std::size_t c = 0; c < cb; ++c) orow[ca + c] = brow[c];
        }
        const Id out_id = push(std::move(out), {a, b});
        nodes_[out_id].back = [a, b, out_id, h, w, ca, cb](Tape& tp) {
            const Tensor<T>& g = tp.nodes_[out_id].grad;
            Tensor<T>& da = tp.grad_buf(a);
            Tensor<T>& db = tp.grad_buf(b);
            for (std::size_t p = 0; p < h * w; ++p) {
                const T* grow = &g.v[p * (ca + cb)];
                T* darow = &da.v[p * ca];
                T* dbrow = &db.v[p * cb];
                for (std::size_t c = 0; c < ca; ++c) darow[c] += grow[c];
                for (std::size_t c = 0; c < cb; ++c) dbrow[c] += grow[ca + c];
            }
        };
        return out_id;
    }

    /// Degenerate concat with nothing appended; the identity. Gives the
    /// channel-count-zero case a well-defined meaning.
    Id concat_channels(Id a) { return a; }

    /// (H, W, C) feature map to a (C, L) token matrix, L = H*W, token index
    /// l = y*W + x.
    Id to_tokens(Id x) {
        const Tensor<T>& xv = val(x);
        if (xv.rank() != 3) throw std::invalid_argument("to_tokens: input must be (H,W,C)");
        const std::size_t h = xv.shape[0], w = xv.shape[1], c = xv.shape[2];
        const std::size_t l = h * w;
        Tensor<T> out({c, l});
        for (std::size_t p = 0; p < l; ++p)
            for (std::size_t ch = 0; ch < c; ++ch) out.v[ch * l + p] = xv.v[p * c + ch];
        const Id out_id = push(std::move(out), {x});
        nodes_[out_id].back = [x, out_id, c, l](Tape& tp) {
            const Tensor<T>& g = tp.nodes_[out_id].grad;
            Tensor<T>& dx = tp.grad_buf(x);
            for (std::size_t p = 0; p < l; ++p)
                for (std::size_t ch = 0; ch < c; ++ch) dx.v[p * c + ch] += g.v[ch * l + p];
        };
        return out_id;
    }

    /// Inverse of to_tokens for the given spatial extents.
    Id from_tokens(Id x, std::size_t h, std::size_t w) {
        const Tensor<T>& xv = val(x);
        if (xv.rank() != 2 || xv.shape[1] != h * w)
            throw std::invalid_argument("from_tokens: token count must equal H*W");
        const std::size_t c = xv.shape[0], l = h * w;
        Tensor<T> out({h, w, c});
        for (std::size_t p = 0; p < l; ++p)
            for (std::size_t ch = 0; ch < c; ++ch) out.v[p * c + ch] = xv.v[ch * l + p];
        const Id out_id = push(std::move(out), {x});
        nodes_[out_id].back = [x, out_id, c, l](Tape& tp) {
            const Tensor<T>& g = tp.nodes_[out_id].grad;
            Tensor<T>& dx = tp.grad_buf(x);
            for (std::size_t p = 0; p < l; ++p)
                for (std::size_t ch = 0; ch < c; ++ch) dx.v[ch * l + p] += g.v[p * c + ch];
        };
        return out_id;
    }

    Id add_const(Id a, T c) {
        Tensor<T> out = val(a);
        for (T& x : out.v) x += c;
        const Id out_id = push(std::move(out), {a});
        nodes_[out_id].back = [a, out_id](Tape& tp) {
            const Tensor<T>& g = tp.nodes_[out_id].grad;
            Tensor<T>& da = tp.grad_buf(a);
            for (std::size_t i = 0; i < g.v.size(); ++i) da.v[i] += g.v[i];
        };
        return out_id;
    }

    Id square(Id a) {
        Tensor<T> out = val(a);
        for (T& x : out.v) x *= x;
        const Id out_id = push(std::move(out), {a});
        nodes_[out_id].back = [a, out_id](Tape& tp) {
            const Tensor<T>& g = tp.nodes_[out_id].grad;
            const Tensor<T>& xv = tp.val(a);
            Tensor<T>& da = tp.grad_buf(a);
            for (std::size_t i = 0; i < g.v.size(); ++i) da.v[i] += T(2) * xv.v[i] * g.v[i];
        };
        return out_id;
    }

    Id sum_all(Id a) {
        const Tensor<T>& av = val(a);
        Tensor<T> out({1});
        T s = T(0);
        for (const T x : av.v) s += x;
        out.v[0] = s;
        const Id out_id = push(std::move(out), {a});
        nodes_[out_id].back = [a, out_id](Tape& tp) {
            const T g = tp.nodes_[out_id].grad.v[0];
            Tensor<T>& da = tp.grad_buf(a);
            for (T& x : da.v) x += g;
        };
        return out_id;
    }

    /// Per-sample NMSE against a constant label: sum((p-l)^2) / sum(l^2).
    /// The label is not a node, so no gradient flows into it.
    Id nmse_against(Id pred, const Tensor<T>& label) {
        const Tensor<T>& pv = val(pred);
        if (!pv.same_shape(label))
            throw std::invalid_argument("nmse_against: prediction shape " + shape_str(pv) +
                                        " does not match label " + shape_str(label));
        T denom = T(0);
        for (const T x : label.v) denom += x * x;
        if (!(denom > T(0)))
            throw std::invalid_argument("nmse_against: zero-norm label rejected");
        T num = T(0);
        for (std::size_t i = 0; i < pv.v.size(); ++i) {
            const T d = pv.v[i] - label.v[i];
            num += d * d;
        }
        Tensor<T> out({1});
        out.v[0] = num / denom;
        const Id out_id = push(std::move(out), {pred});
        // The label values are needed at backward time; copy them into the
        // closure so the caller may free theirs.
        nodes_[out_id].back = [pred, out_id, label, denom](Tape& tp) {
            const T g = tp.nodes_[out_id].grad.v[0];
            const Tensor<T>& pv2 = tp.val(pred);
            Tensor<T>& dp = tp.grad_buf(pred);
            const T scale = T(2) * g / denom;
            for (std::size_t i = 0; i < pv2.v.size(); ++i)
                dp.v[i] += scale * (pv2.v[i] - label.v[i]);
        };
        return out_id;
    }

    /// Reverse sweep from a scalar root. Gradients of all nodes at or below
    /// the root become valid; untouched subgraphs are skipped.
    void backward(Id root) {
        if (val(root).numel() != 1)
            throw std::invalid_argument("backward: root must be a scalar");
        for (Node& n : nodes_) {
            n.grad = Tensor<T>(n.val.shape);
            n.touched = false;
        }
        nodes_[root].grad.v[0] = T(1);
        nodes_[root].touched = true;
        for (Id i = root + 1; i-- > 0;) {
            if (nodes_[i].touched && nodes_[i].back) nodes_[i].back(*this);
        }
    }

  private:
    struct Node {
        Tensor<T> val;
        Tensor<T> grad;
        bool touched = false;
        std::function<void(Tape&)> back;
    };

    const Tensor<T>& val(Id id) const { return nodes_.at(id).val; }

    Tensor<T>& grad_buf(Id id) {
        nodes_[id].touched = true;
        return nodes_[id].grad;
    }

    Id push(Tensor<T> t, std::vector<Id> parents) {
        (void)parents;  // parents are captured by each op's closure
        nodes_.push_back(Node{std::move(t), Tensor<T>(), false, nullptr});
        return nodes_.size() - 1;
    }

    std::vector<Node> nodes_;
};

}  // namespace risce::nn
