// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <complex>
#include <cstdint>
#include <vector>

#include "risce/estimators.hpp"
#include "risce/net.hpp"
#include "risce/nn/checkpoint.hpp"
#include "risce/nn/gradcheck.hpp"
#include "risce/numerics.hpp"
#include "risce/rng.hpp"

namespace {

using risce::RngStream;
using risce::net::AttentionIds;
using risce::net::build_forward;
using risce::net::FinalStage;
using risce::net::make_net_params;
using risce::net::NetConfig;
using risce::net::NetParamsT;
using risce::net::pack_complex;
using risce::net::self_attention;
using risce::net::TrainConfig;
using risce::net::TrainSample;
using risce::net::unpack_complex;
using risce::nn::grad_check;
using risce::nn::Tape;
using risce::nn::Tensor;
using risce::num::ComplexMatrix;

template <typename T>
Tensor<T> random_tensor(std::vector<std::size_t> shape, RngStream& rng) {
    Tensor<T> t(std::move(shape));
    for (T& x : t.v) x = static_cast<T>(rng.next_gaussian_pair().first);
    return t;
}

/// Gradcheck points need attention logits of moderate size: a saturated
/// softmax pushes true gradients below the finite-difference noise floor
/// and the comparison becomes meaningless. Shrinking the weights keeps the
/// graph in its responsive regime.
template <typename T>
void shrink(Tensor<T>& t, double factor) {
    for (T& x : t.v) x = static_cast<T>(x * factor);
}

template <typename T>
void shrink_weights(NetParamsT<T>& net, double factor) {
    for (auto& p : net.params)
        if (p.value.rank() > 1) shrink(p.value, factor);
}

NetConfig tiny_config() {
    NetConfig cfg;
    cfg.rows = 4;
    cfg.cols = 3;
    cfg.channels = 3;
    cfg.blocks = 1;
    cfg.skip_connection = true;
    cfg.post_concat_channels = 3;
    return cfg;
}

/// Synthetic denoising set: gaussian clean maps plus gaussian noise of the
/// given standard deviation.
std::vector<TrainSample> synth_samples(const NetConfig& cfg, std::size_t n,
                                       double noise_sigma, RngStream& rng) {
    std::vector<TrainSample> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        TrainSample s;
        s.clean = random_tensor<float>({cfg.rows, cfg.cols, 2}, rng);
        s.noisy = s.clean;
        for (float& x : s.noisy.v)
            x += static_cast<float>(noise_sigma * rng.next_gaussian_pair().first);
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace

TEST_CASE("pack_complex splits real and imaginary channels") {
    RngStream rng(201, 0);
    ComplexMatrix h(3, 5);
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 5; ++j) h(i, j) = rng.next_gaussian_pair().first;

    const Tensor<float> packed = pack_complex<float>(h);
    REQUIRE(packed.shape == std::vector<std::size_t>{3, 5, 2});
    for (std::size_t p = 0; p < 15; ++p) CHECK(packed.v[p * 2 + 1] == 0.0f);

    ComplexMatrix g(2, 2);
    g(0, 0) = {1.5, -2.5};
    g(0, 1) = {0.0, 4.0};
    g(1, 0) = {-3.0, 0.25};
    g(1, 1) = {7.0, -8.0};
    const ComplexMatrix back = unpack_complex(pack_complex<double>(g));
    for (std::size_t i = 0; i < 2; ++i)
        for (std::size_t j = 0; j < 2; ++j) CHECK(back(i, j) == g(i, j));

    double sumsq = 0.0;
    const Tensor<double> pg = pack_complex<double>(g);
    for (const double x : pg.v) sumsq += x * x;
    CHECK(std::abs(sumsq - risce::num::fro_norm_sq(g)) <
          1e-6 * std::max(1.0, risce::num::fro_norm_sq(g)));
}

TEST_CASE("self_attention collapses to row means when the key weights vanish") {
    RngStream rng(202, 0);
    const std::size_t h = 2, w = 3, c = 4, l = h * w;
    const Tensor<float> x = random_tensor<float>({h, w, c}, rng);
    const Tensor<float> wv = random_tensor<float>({c, c}, rng);
    const Tensor<float> bv = random_tensor<float>({c}, rng);
    Tensor<float> eye({c, c});
    for (std::size_t i = 0; i < c; ++i) eye.v[i * c + i] = 1.0f;

    Tape<float> tp;
    AttentionIds<float> p;
    p.wk = tp.input(Tensor<float>({c, c}));  // zero keys
    p.bk = tp.input(Tensor<float>({c}));
    p.wq = tp.input(random_tensor<float>({c, c}, rng));
    p.bq = tp.input(random_tensor<float>({c}, rng));
    p.wv = tp.input(wv);
    p.bv = tp.input(bv);
    p.wo = tp.input(eye);  // pass the mixed tokens through
    p.bo = tp.input(Tensor<float>({c}));
    const Tensor<float>& out = tp.value(self_attention(tp, tp.input(x), p));

    // Every output token must equal rowsum(V)/L^2 where V = wv*token + bv.
    std::vector<double> rowsum(c, 0.0);
    for (std::size_t t = 0; t < l; ++t)
        for (std::size_t i = 0; i < c; ++i) {
            double v = bv.v[i];
            for (std::size_t j = 0; j < c; ++j) v += double(wv.v[i * c + j]) * x.v[t * c + j];
            rowsum[i] += v;
        }
    for (std::size_t t = 0; t < l; ++t)
        for (std::size_t i = 0; i < c; ++i)
            CHECK(std::abs(out.v[t * c + i] - rowsum[i] / double(l * l)) < 1e-5);
}

TEST_CASE("self_attention is equivariant to token permutations") {
    RngStream rng(203, 0);
    const std::size_t h = 2, w = 3, c = 4, l = h * w;
    const Tensor<float> x = random_tensor<float>({h, w, c}, rng);
    const std::size_t perm[6] = {4, 2, 0, 5, 1, 3};
    Tensor<float> xp({h, w, c});
    for (std::size_t t = 0; t < l; ++t)
        for (std::size_t ch = 0; ch < c; ++ch) xp.v[t * c + ch] = x.v[perm[t] * c + ch];

    Tape<float> tp;
    AttentionIds<float> p;
    p.wk = tp.input(random_tensor<float>({c, c}, rng));
    p.bk = tp.input(random_tensor<float>({c}, rng));
    p.wq = tp.input(random_tensor<float>({c, c}, rng));
    p.bq = tp.input(random_tensor<float>({c}, rng));
    p.wv = tp.input(random_tensor<float>({c, c}, rng));
    p.bv = tp.input(random_tensor<float>({c}, rng));
    p.wo = tp.input(random_tensor<float>({c, c}, rng));
    p.bo = tp.input(random_tensor<float>({c}, rng));

    const Tensor<float>& base = tp.value(self_attention(tp, tp.input(x), p));
    const Tensor<float>& permuted = tp.value(self_attention(tp, tp.input(xp), p));
    for (std::size_t t = 0; t < l; ++t)
        for (std::size_t ch = 0; ch < c; ++ch)
            CHECK(std::abs(permuted.v[t * c + ch] - base.v[perm[t] * c + ch]) < 1e-5);
}

TEST_CASE("self_attention ignores a constant shift of the attention logits") {
    RngStream rng(204, 0);
    const std::size_t c = 4;
    const Tensor<float> x = random_tensor<float>({3, 3, c}, rng);
    Tape<float> tp;
    AttentionIds<float> p;
    p.wk = tp.input(random_tensor<float>({c, c}, rng));
    p.bk = tp.input(random_tensor<float>({c}, rng));
    p.wq = tp.input(random_tensor<float>({c, c}, rng));
    p.bq = tp.input(random_tensor<float>({c}, rng));
    p.wv = tp.input(random_tensor<float>({c, c}, rng));
    p.bv = tp.input(random_tensor<float>({c}, rng));
    p.wo = tp.input(random_tensor<float>({c, c}, rng));
    p.bo = tp.input(random_tensor<float>({c}, rng));
    const auto xi = tp.input(x);
    const Tensor<float>& plain = tp.value(self_attention(tp, xi, p));
    const Tensor<float>& shifted = tp.value(self_attention(tp, xi, p, 25.0f));
    for (std::size_t i = 0; i < plain.v.size(); ++i)
        CHECK(std::abs(plain.v[i] - shifted.v[i]) < 1e-5);
}

TEST_CASE("self_attention gradcheck on a (2,3,4) input") {
    RngStream rng(205, 0);
    const std::size_t c = 4;
    const Tensor<double> x = random_tensor<double>({2, 3, c}, rng);
    std::vector<Tensor<double>> ws;
    for (int i = 0; i < 4; ++i) {
        ws.push_back(random_tensor<double>({c, c}, rng));
        shrink(ws.back(), 0.3);
    }
    std::vector<Tensor<double>> bs;
    for (int i = 0; i < 4; ++i) bs.push_back(random_tensor<double>({c}, rng));

    const auto build = [&](Tape<double>& t, Tape<double>::Id in) {
        AttentionIds<double> p;
        p.wk = t.input(ws[0]);
        p.bk = t.input(bs[0]);
        p.wq = t.input(ws[1]);
        p.bq = t.input(bs[1]);
        p.wv = t.input(ws[2]);
        p.bv = t.input(bs[2]);
        p.wo = t.input(ws[3]);
        p.bo = t.input(bs[3]);
        return t.sum_all(t.square(self_attention(t, in, p)));
    };
    CHECK(grad_check(build, x) < 1e-4);
}

TEST_CASE("forward keeps the complex shape and stays finite on zeros") {
    RngStream rng(206, 0);
    for (const auto [m, n] : {std::pair<std::size_t, std::size_t>{3, 3}, {5, 4}, {8, 8}}) {
        NetConfig cfg = tiny_config();
        cfg.rows = m;
        cfg.cols = n;
        const auto net = make_net_params<float>(cfg, RngStream(42, 7));
        ComplexMatrix h(m, n);
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j)
                h(i, j) = {rng.next_gaussian_pair().first, rng.next_gaussian_pair().first};
        const Tensor<float> out = risce::net::predict(net, pack_complex<float>(h));
        REQUIRE(out.shape == std::vector<std::size_t>{m, n, 2});
        const ComplexMatrix hat = unpack_complex(out);
        CHECK(hat.rows() == m);
        CHECK(hat.cols() == n);
    }

    NetConfig cfg = tiny_config();
    const auto net = make_net_params<float>(cfg, RngStream(43, 7));
    const Tensor<float> zero({cfg.rows, cfg.cols, 2});
    const Tensor<float> out = risce::net::predict(net, zero);
    CHECK(out.all_finite());
}

TEST_CASE("forward with zero blocks and skip on stays gradcheckable") {
    NetConfig cfg = tiny_config();
    cfg.blocks = 0;
    auto net = make_net_params<double>(cfg, RngStream(44, 7));
    shrink_weights(net, 0.4);
    RngStream rng(207, 0);
    const Tensor<double> x = random_tensor<double>({cfg.rows, cfg.cols, 2}, rng);
    const Tensor<double> label = random_tensor<double>({cfg.rows, cfg.cols, 2}, rng);
    const auto build = [&](Tape<double>& t, Tape<double>::Id in) {
        std::vector<Tape<double>::Id> ids;
        for (const auto& p : net.params) ids.push_back(t.input(p.value));
        return t.nmse_against(build_forward(t, cfg, in, ids), label);
    };
    CHECK(grad_check(build, x) < 1e-4);
}

TEST_CASE("one-block loss gradient matches finite differences for every parameter") {
    NetConfig cfg = tiny_config();
    const auto net = make_net_params<double>(cfg, RngStream(45, 7));
    RngStream rng(208, 0);
    const Tensor<double> x = random_tensor<double>({cfg.rows, cfg.cols, 2}, rng);
    const Tensor<double> label = random_tensor<double>({cfg.rows, cfg.cols, 2}, rng);

    for (std::size_t tested = 0; tested < net.params.size(); ++tested) {
        const auto build = [&](Tape<double>& t, Tape<double>::Id in) {
            std::vector<Tape<double>::Id> ids;
            for (std::size_t j = 0; j < net.params.size(); ++j)
                ids.push_back(j == tested ? in : t.input(net.params[j].value));
            return t.nmse_against(build_forward(t, cfg, t.input(x), ids), label);
        };
        INFO("parameter " << net.params[tested].name);
        CHECK(grad_check(build, net.params[tested].value) < 1e-4);
    }
}

TEST_CASE("parameter count matches the closed-form layer bill") {
    const auto closed_form = [](const NetConfig& cfg) {
        const std::size_t c = cfg.channels, b = cfg.blocks, c2 = cfg.post_concat_channels;
        const std::size_t post_in = cfg.skip_connection ? 2 * c : c;
        std::size_t n = 9 * 2 * c + c;                    // stem conv
        n += b * (4 * (c * c + c) + 9 * c * c + c);       // four FCLs + conv per block
        n += 9 * post_in * c2 + c2;                       // post conv
        n += 2 * c2 + 2;                                  // 1x1 projection head
        return n;
    };

    NetConfig cfg;
    cfg.rows = 8;
    cfg.cols = 8;
    cfg.channels = 5;
    cfg.blocks = 3;
    cfg.post_concat_channels = 7;
    cfg.skip_connection = false;
    CHECK(risce::net::param_count(cfg) == closed_form(cfg));
    cfg.skip_connection = true;
    CHECK(risce::net::param_count(cfg) == closed_form(cfg));
    cfg.blocks = 0;
    CHECK(risce::net::param_count(cfg) == closed_form(cfg));

    // The direct final stage drops the projection head.
    cfg.final_stage = FinalStage::direct;
    cfg.blocks = 2;
    CHECK(risce::net::param_count(cfg) == 9 * 2 * 5 + 5 + 2 * (4 * 30 + 9 * 25 + 5) +
                                              9 * 10 * 2 + 2);
}

TEST_CASE("batch nmse agrees with the classical metric") {
    RngStream rng(209, 0);
    std::vector<ComplexMatrix> labels, estimates;
    std::vector<Tensor<float>> plabels, pestimates;
    for (int s = 0; s < 5; ++s) {
        ComplexMatrix h(4, 3), e(4, 3);
        for (std::size_t i = 0; i < 4; ++i)
            for (std::size_t j = 0; j < 3; ++j) {
                h(i, j) = {rng.next_gaussian_pair().first, rng.next_gaussian_pair().first};
                e(i, j) = h(i, j) + std::complex<double>(0.3 * rng.next_gaussian_pair().first,
                                                         0.3 * rng.next_gaussian_pair().first);
            }
        labels.push_back(h);
        estimates.push_back(e);
        plabels.push_back(pack_complex<float>(h));
        pestimates.push_back(pack_complex<float>(e));
    }
    const double classical = risce::est::nmse(estimates, labels);
    const double packed = risce::net::batch_nmse(pestimates, plabels);
    CHECK(std::abs(classical - packed) < 1e-6 * std::max(1.0, classical));

    CHECK(risce::net::batch_nmse(plabels, plabels) == 0.0);
    std::vector<Tensor<float>> zeros;
    for (const auto& t : plabels) zeros.emplace_back(t.shape);
    CHECK(risce::net::batch_nmse(zeros, plabels) == Catch::Approx(1.0));
}

TEST_CASE("training overfits a 32-sample set") {
    NetConfig cfg;
    cfg.rows = 8;
    cfg.cols = 4;
    cfg.channels = 16;
    cfg.blocks = 2;
    cfg.skip_connection = true;
    cfg.post_concat_channels = 32;

    RngStream rng(210, 0);
    const auto samples = synth_samples(cfg, 32, 0.1, rng);

    TrainConfig tc;
    tc.epochs = 200;
    tc.lr = 1e-3;
    tc.weight_decay = 1e-5;
    tc.batch_size = 32;
    tc.seed = 99;
    const auto res = risce::net::train(samples, {}, cfg, tc);
    const double initial = res.history.front().train_nmse;
    const double final_nmse = res.history.back().train_nmse;
    INFO("initial " << initial << " final " << final_nmse);
    CHECK(final_nmse < 0.1 * initial);
}

TEST_CASE("training is bitwise deterministic per seed") {
    NetConfig cfg;
    cfg.rows = 4;
    cfg.cols = 4;
    cfg.channels = 8;
    cfg.blocks = 1;
    cfg.post_concat_channels = 8;

    RngStream rng(211, 0);
    const auto train_set = synth_samples(cfg, 16, 0.2, rng);
    const auto val_set = synth_samples(cfg, 8, 0.2, rng);

    TrainConfig tc;
    tc.epochs = 3;
    tc.batch_size = 8;
    tc.seed = 7;
    const auto a = risce::net::train(train_set, val_set, cfg, tc);
    const auto b = risce::net::train(train_set, val_set, cfg, tc);
    REQUIRE(a.history.size() == b.history.size());
    for (std::size_t i = 0; i < a.history.size(); ++i) {
        CHECK(a.history[i].train_nmse == b.history[i].train_nmse);
        CHECK(a.history[i].val_nmse == b.history[i].val_nmse);
    }
    CHECK(a.batch_digests == b.batch_digests);
    CHECK(a.best_epoch == b.best_epoch);
    for (std::size_t j = 0; j < a.net.params.size(); ++j)
        CHECK(a.net.params[j].value.v == b.net.params[j].value.v);

    // Different seeds must reshuffle: digests diverge.
    tc.seed = 8;
    const auto c = risce::net::train(train_set, val_set, cfg, tc);
    CHECK(c.batch_digests != a.batch_digests);
}

TEST_CASE("zero learning rate freezes the loss history") {
    NetConfig cfg;
    cfg.rows = 4;
    cfg.cols = 4;
    cfg.channels = 6;
    cfg.blocks = 1;
    cfg.post_concat_channels = 6;

    RngStream rng(212, 0);
    const auto train_set = synth_samples(cfg, 12, 0.2, rng);
    TrainConfig tc;
    tc.epochs = 4;
    tc.lr = 0.0;
    tc.weight_decay = 0.0;
    tc.batch_size = 4;
    tc.seed = 3;
    const auto res = risce::net::train(train_set, {}, cfg, tc);
    for (const auto& row : res.history)
        CHECK(std::abs(row.train_nmse - res.history.front().train_nmse) < 1e-7);
}

TEST_CASE("training reports divergence with the epoch index") {
    NetConfig cfg;
    cfg.rows = 4;
    cfg.cols = 4;
    cfg.channels = 6;
    cfg.blocks = 1;
    cfg.post_concat_channels = 6;
    RngStream rng(213, 0);
    const auto train_set = synth_samples(cfg, 8, 0.2, rng);
    TrainConfig tc;
    tc.epochs = 50;
    tc.lr = 1e10;  // deliberately absurd
    tc.batch_size = 4;
    tc.seed = 3;
    CHECK_THROWS_WITH(risce::net::train(train_set, {}, cfg, tc),
                      Catch::Matchers::ContainsSubstring("diverged"));

    CHECK_THROWS_AS(risce::net::train({}, {}, cfg, tc), std::invalid_argument);
}

TEST_CASE("predict_batch matches per-sample predict and deduplicates nothing") {
    NetConfig cfg = tiny_config();
    const auto net = make_net_params<float>(cfg, RngStream(46, 7));
    RngStream rng(214, 0);
    const Tensor<float> a = random_tensor<float>({cfg.rows, cfg.cols, 2}, rng);
    const Tensor<float> b = random_tensor<float>({cfg.rows, cfg.cols, 2}, rng);

    const auto batch = risce::net::predict_batch(net, {a, b, a});
    REQUIRE(batch.size() == 3);
    CHECK(batch[0].v == risce::net::predict(net, a).v);
    CHECK(batch[1].v == risce::net::predict(net, b).v);
    CHECK(batch[2].v == batch[0].v);
}

TEST_CASE("a small trained net beats the raw observations at unit noise") {
    NetConfig cfg;
    cfg.rows = 8;
    cfg.cols = 4;
    cfg.channels = 8;
    cfg.blocks = 1;
    cfg.post_concat_channels = 16;

    // Unit-variance clean entries plus unit-variance noise: the raw NMSE sits
    // near 1, the 0 dB operating point.
    RngStream rng(215, 0);
    const auto train_set = synth_samples(cfg, 256, 1.0, rng);
    const auto val_set = synth_samples(cfg, 64, 1.0, rng);

    TrainConfig tc;
    tc.epochs = 20;
    tc.batch_size = 32;
    tc.seed = 5;
    const auto res = risce::net::train(train_set, val_set, cfg, tc);

    std::vector<Tensor<float>> noisy, clean;
    for (const auto& s : val_set) {
        noisy.push_back(s.noisy);
        clean.push_back(s.clean);
    }
    const double raw = risce::net::batch_nmse(noisy, clean);
    const double denoised = risce::net::batch_nmse(risce::net::predict_batch(res.net, noisy), clean);
    INFO("raw " << raw << " denoised " << denoised);
    CHECK(denoised < raw);
}

TEST_CASE("best-validation weights are the ones returned") {
    NetConfig cfg;
    cfg.rows = 4;
    cfg.cols = 4;
    cfg.channels = 6;
    cfg.blocks = 1;
    cfg.post_concat_channels = 6;
    RngStream rng(216, 0);
    const auto train_set = synth_samples(cfg, 24, 0.3, rng);
    const auto val_set = synth_samples(cfg, 12, 0.3, rng);
    TrainConfig tc;
    tc.epochs = 6;
    tc.batch_size = 8;
    tc.seed = 11;
    const auto res = risce::net::train(train_set, val_set, cfg, tc);

    double best = res.history.front().val_nmse;
    for (const auto& r : res.history) best = std::min(best, r.val_nmse);
    CHECK(res.best_val == best);
    CHECK(res.history[res.best_epoch].val_nmse == best);

    std::vector<Tensor<float>> noisy, clean;
    for (const auto& s : val_set) {
        noisy.push_back(s.noisy);
        clean.push_back(s.clean);
    }
    const double recomputed =
        risce::net::batch_nmse(risce::net::predict_batch(res.net, noisy), clean);
    CHECK(recomputed == Catch::Approx(best).epsilon(1e-12));
}

TEST_CASE("net parameters survive a checkpoint cycle") {
    NetConfig cfg = tiny_config();
    auto net = make_net_params<float>(cfg, RngStream(47, 7));
    RngStream rng(217, 0);
    const Tensor<float> x = random_tensor<float>({cfg.rows, cfg.cols, 2}, rng);
    const Tensor<float> before = risce::net::predict(net, x);

    const std::string path = "net_checkpoint_cycle.bin";
    risce::nn::save_checkpoint(path, net.params);
    auto other = make_net_params<float>(cfg, RngStream(999, 1));
    risce::nn::load_checkpoint(path, other.params);
    CHECK(risce::net::predict(other, x).v == before.v);
    std::remove(path.c_str());
}
