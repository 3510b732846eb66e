#include <cmath>

#include "doctest.h"
#include "fid/albedo_net.hpp"
#include "fid/gradcheck.hpp"
#include "oracles.hpp"

using namespace fid;

namespace {

ModelConfig tiny_config() {
    ModelConfig c;
    c.levels = 2;
    c.scale_div = 64;  // every width clamps to the floor of 4
    c.attn_reduction = 2;
    c.input_res = 8;
    return c;
}

oracle::Grid to_grid(const Tensor& t) {
    oracle::Grid g = oracle::Grid::make(t.dim(0), t.dim(1), t.dim(2), t.dim(3));
    g.v = t.buffer();
    return g;
}

}  // namespace

TEST_CASE("receptive field recurrence") {
    ModelConfig c;
    // Closed form for this layout: 1 + sum_l 8*2^l = 1 + 8*(2^levels - 1),
    // derived separately from the r,j recurrence.
    for (int levels : {2, 3, 4, 6}) {
        c.levels = levels;
        c.input_res = 1 << (levels + 3);
        CHECK(receptive_field(c) == 1 + 8 * ((1 << levels) - 1));
    }
    c.levels = 6;
    c.input_res = 512;
    CHECK(receptive_field(c) == 505);
}

TEST_CASE("width schedule and scaling") {
    ModelConfig c;
    CHECK(c.width(0) == 64);
    CHECK(c.width(1) == 128);
    CHECK(c.width(2) == 256);
    CHECK(c.width(3) == 256);
    CHECK(c.width(4) == 384);
    CHECK(c.width(5) == 512);
    CHECK(c.width(6) == 512);
    c.scale_div = 8;
    CHECK(c.width(0) == 8);
    CHECK(c.width(4) == 48);
    c.scale_div = 64;
    CHECK(c.width(0) == 4);  // floor
}

TEST_CASE("reference shape trace") {
    AlbedoNet net{ModelConfig{}};
    auto rows = net.trace();
    // Stem row.
    CHECK(rows[0].op == "Conv 1x1");
    CHECK(rows[0].ch_in == 3);
    CHECK(rows[0].ch_out == 64);
    CHECK(rows[0].res_in == 512);
    // Encoder: resolutions halve 512..8, channels 64,128,256,256,384,512.
    const int enc_ch[7] = {64, 128, 256, 256, 384, 512, 512};
    int res = 512;
    for (int l = 0; l < 6; ++l) {
        const auto& rb = rows[1 + 2 * l];
        const auto& dn = rows[2 + 2 * l];
        CHECK(rb.op == "ResBlock");
        CHECK(rb.ch_in == enc_ch[l]);
        CHECK(rb.ch_out == enc_ch[l]);
        CHECK(rb.res_in == res);
        CHECK(dn.op == "DownConv");
        CHECK(dn.ch_in == enc_ch[l]);
        CHECK(dn.ch_out == enc_ch[l + 1]);
        CHECK(dn.res_out == res / 2);
        res /= 2;
    }
    CHECK(res == 8);
    CHECK(net.config().bottleneck_res() == 8);
    // Decoder conv widths down the levels: 384,256,256,128,64,64.
    CHECK(net.decoder_width(5) == 384);
    CHECK(net.decoder_width(4) == 256);
    CHECK(net.decoder_width(3) == 256);
    CHECK(net.decoder_width(2) == 128);
    CHECK(net.decoder_width(1) == 64);
    CHECK(net.decoder_width(0) == 64);
    // D4 row: 384 in, 256 out, at 32 px.
    bool found_d4 = false;
    for (const auto& r : rows)
        if (r.stage == "D4" && r.op == "Conv 3x3") {
            found_d4 = true;
            CHECK(r.ch_in == 384);
            CHECK(r.ch_out == 256);
            CHECK(r.res_in == 32);
        }
    CHECK(found_d4);
    const auto& out = rows.back();
    CHECK(out.ch_in == 64);
    CHECK(out.ch_out == 3);
    CHECK(out.res_out == 512);
}

TEST_CASE("encoder shapes at reduced scale") {
    ModelConfig c;
    c.scale_div = 8;
    c.input_res = 128;
    AlbedoNet net{c};
    ParamStore ps;
    Rng rng(11);
    net.init_params(ps, rng);
    Tensor x = Tensor::randn({1, 3, 128, 128}, rng);
    auto enc = net.encode(x, ps);
    CHECK(enc.bottleneck.shape() == Shape{1, 64, 2, 2});
    REQUIRE(enc.skips.size() == 6);
    const int widths[6] = {8, 16, 32, 32, 48, 64};
    int res = 128;
    for (int l = 0; l < 6; ++l) {
        CHECK(enc.skips[l].shape() == Shape{1, widths[l], res, res});
        res /= 2;
    }
}

TEST_CASE("bottleneck below 2 px is rejected") {
    ModelConfig c;
    c.scale_div = 8;
    c.input_res = 64;  // 64 / 2^6 = 1
    CHECK_THROWS_AS(AlbedoNet{c}, ConfigError);
}

TEST_CASE("residual block") {
    AlbedoNet net{tiny_config()};
    Rng rng(3);
    Tensor x = Tensor::randn({2, 4, 5, 5}, rng);

    SUBCASE("zero weights give exact identity") {
        ParamStore ps;
        for (int i = 0; i < 3; ++i) {
            ps.create("t.c" + std::to_string(i) + ".w", Tensor::zeros({4, 4, 3, 3}));
            ps.create("t.c" + std::to_string(i) + ".b", Tensor::zeros({4}));
        }
        Tensor y = net.residual_block(x, ps, "t");
        for (std::int64_t i = 0; i < x.numel(); ++i) CHECK(y.data()[i] == x.data()[i]);
    }

    SUBCASE("matches conv/relu/add composition oracle") {
        ParamStore ps;
        std::vector<Tensor> ws, bs;
        for (int i = 0; i < 3; ++i) {
            ws.push_back(ps.create("t.c" + std::to_string(i) + ".w",
                                   Tensor::randn({4, 4, 3, 3}, rng, 0.3f)));
            bs.push_back(ps.create("t.c" + std::to_string(i) + ".b",
                                   Tensor::uniform({4}, rng, -0.1f, 0.1f)));
        }
        Tensor y = net.residual_block(x, ps, "t");

        oracle::Grid h = to_grid(x);
        for (int i = 0; i < 3; ++i) {
            for (auto& v : h.v) v = std::max(v, 0.0f);
            h = oracle::conv2d(h, to_grid(ws[i]),
                               std::vector<float>(bs[i].data(), bs[i].data() + 4), 1, 1);
        }
        for (std::int64_t i = 0; i < y.numel(); ++i)
            CHECK(std::fabs(y.data()[i] - (x.data()[i] + h.v[i])) < 1e-5f);
    }

    SUBCASE("channel mismatch rejected") {
        ParamStore ps;
        for (int i = 0; i < 3; ++i) {
            ps.create("t.c" + std::to_string(i) + ".w", Tensor::zeros({6, 6, 3, 3}));
            ps.create("t.c" + std::to_string(i) + ".b", Tensor::zeros({6}));
        }
        CHECK_THROWS_AS(net.residual_block(x, ps, "t"), ShapeError);
    }
}

TEST_CASE("channel attention") {
    AlbedoNet net{tiny_config()};
    ParamStore ps;
    Rng rng(5);
    net.init_params(ps, rng);
    Tensor x = Tensor::randn({2, 4, 3, 3}, rng);

    SUBCASE("zero weights give 0.5 everywhere") {
        Tensor& w1 = ps.get("s1.attn.w1");
        Tensor& w2 = ps.get("s1.attn.w2");
        std::fill(w1.buffer().begin(), w1.buffer().end(), 0.0f);
        std::fill(w2.buffer().begin(), w2.buffer().end(), 0.0f);
        Tensor a = net.channel_attention(x, ps);
        CHECK(a.shape() == Shape{2, 4, 1, 1});
        for (std::int64_t i = 0; i < a.numel(); ++i) CHECK(a.data()[i] == 0.5f);
    }

    SUBCASE("invariant under spatial permutation") {
        Tensor a1 = net.channel_attention(x, ps);
        Tensor xs = x.clone();
        // Reverse every channel plane.
        for (std::int64_t nc = 0; nc < 8; ++nc)
            std::reverse(xs.buffer().begin() + nc * 9, xs.buffer().begin() + (nc + 1) * 9);
        Tensor a2 = net.channel_attention(xs, ps);
        for (std::int64_t i = 0; i < a1.numel(); ++i)
            CHECK(a1.data()[i] == doctest::Approx(a2.data()[i]).epsilon(1e-6));
    }

    SUBCASE("matches explicit MLP oracle") {
        Tensor a = net.channel_attention(x, ps);
        const Tensor& w1 = ps.get("s1.attn.w1");  // [hidden, 4]
        const Tensor& w2 = ps.get("s1.attn.w2");  // [4, hidden]
        std::int64_t hidden = w1.dim(0);
        auto pooled = oracle::global_avg(to_grid(x));
        for (std::int64_t n = 0; n < 2; ++n) {
            std::vector<double> h(hidden, 0.0);
            for (std::int64_t j = 0; j < hidden; ++j) {
                for (std::int64_t cc = 0; cc < 4; ++cc)
                    h[j] += static_cast<double>(w1.data()[j * 4 + cc]) * pooled[n * 4 + cc];
                h[j] = std::max(h[j], 0.0);
            }
            for (std::int64_t cc = 0; cc < 4; ++cc) {
                double z = 0.0;
                for (std::int64_t j = 0; j < hidden; ++j)
                    z += static_cast<double>(w2.data()[cc * hidden + j]) * h[j];
                double expect = 1.0 / (1.0 + std::exp(-z));
                CHECK(a.data()[n * 4 + cc] == doctest::Approx(expect).epsilon(1e-6));
            }
        }
    }
}

TEST_CASE("spatial attention") {
    AlbedoNet net{tiny_config()};
    ParamStore ps;
    Rng rng(6);
    net.init_params(ps, rng);

    SUBCASE("zero weights give 0.5 everywhere") {
        std::fill(ps.get("s1.attn.spatial.w").buffer().begin(),
                  ps.get("s1.attn.spatial.w").buffer().end(), 0.0f);
        Tensor x = Tensor::randn({1, 4, 3, 3}, rng);
        Tensor a = net.spatial_attention(x, ps);
        CHECK(a.shape() == Shape{1, 1, 3, 3});
        for (std::int64_t i = 0; i < a.numel(); ++i) CHECK(a.data()[i] == 0.5f);
    }

    SUBCASE("constant input gives sigma(w.(c,c)+b)") {
        const float c = 0.7f;
        Tensor x = Tensor::full({1, 4, 2, 2}, c);
        Tensor a = net.spatial_attention(x, ps);
        const float* w = ps.get("s1.attn.spatial.w").data();
        float b = ps.get("s1.attn.spatial.b").data()[0];
        float z = w[0] * c + w[1] * c + b;
        float expect = 1.0f / (1.0f + std::exp(-z));
        for (std::int64_t i = 0; i < a.numel(); ++i)
            CHECK(a.data()[i] == doctest::Approx(expect).epsilon(1e-6));
    }

    SUBCASE("matches explicit loop oracle") {
        Tensor x = Tensor::randn({1, 3, 4, 4}, rng);
        Tensor a = net.spatial_attention(x, ps);
        auto avg = oracle::channel_avg(to_grid(x));
        auto mx = oracle::channel_max(to_grid(x));
        const float* w = ps.get("s1.attn.spatial.w").data();
        float b = ps.get("s1.attn.spatial.b").data()[0];
        for (std::int64_t i = 0; i < 16; ++i) {
            double z = w[0] * avg.v[i] + w[1] * mx.v[i] + b;
            CHECK(a.data()[i] == doctest::Approx(1.0 / (1.0 + std::exp(-z))).epsilon(1e-6));
        }
    }
}

TEST_CASE("bottleneck modulation") {
    Rng rng(7);
    Tensor x = Tensor::randn({2, 4, 3, 3}, rng);

    SUBCASE("identity masks") {
        Tensor y = AlbedoNet::modulate(x, Tensor::full({2, 4, 1, 1}, 1.0f),
                                       Tensor::full({2, 1, 3, 3}, 1.0f));
        for (std::int64_t i = 0; i < x.numel(); ++i) CHECK(y.data()[i] == x.data()[i]);
    }

    SUBCASE("zero spatial mask annihilates") {
        Tensor y = AlbedoNet::modulate(x, Tensor::full({2, 4, 1, 1}, 0.8f),
                                       Tensor::zeros({2, 1, 3, 3}));
        for (std::int64_t i = 0; i < y.numel(); ++i) CHECK(y.data()[i] == 0.0f);
    }

    SUBCASE("random masks match broadcast oracle") {
        Tensor ac = Tensor::uniform({2, 4, 1, 1}, rng, 0.0f, 1.0f);
        Tensor as = Tensor::uniform({2, 1, 3, 3}, rng, 0.0f, 1.0f);
        Tensor y = AlbedoNet::modulate(x, ac, as);
        oracle::Grid ga = to_grid(x), gc = to_grid(ac), gs = to_grid(as);
        oracle::Grid expect = oracle::broadcast_mul(oracle::broadcast_mul(ga, gc), gs);
        for (std::int64_t i = 0; i < y.numel(); ++i)
            CHECK(y.data()[i] == doctest::Approx(expect.v[i]).epsilon(1e-6));
    }
}

TEST_CASE("skip gates") {
    AlbedoNet net{tiny_config()};
    ParamStore ps;
    Rng rng(8);
    net.init_params(ps, rng);

    SUBCASE("initial gate value is exactly 0.5") {
        for (int l = 0; l < net.config().levels; ++l) CHECK(net.gate(ps, l).item() == 0.5f);
    }

    SUBCASE("gate stays strictly inside (0,1)") {
        ps.get("s1.gates.raw").buffer() = {100.0f, -100.0f};
        CHECK(net.gate(ps, 0).item() < 1.0f);
        CHECK(net.gate(ps, 0).item() > 0.0f);
        CHECK(net.gate(ps, 1).item() > 0.0f);
    }

    SUBCASE("raw = -20 annihilates the skip branch") {
        // Fusion output must be (nearly) independent of skip contents.
        ps.get("s1.gates.raw").buffer() = {-20.0f, -20.0f};
        Tensor g = net.gate(ps, 0);
        Tensor up = Tensor::randn({1, 4, 4, 4}, rng);
        Tensor skip1 = Tensor::randn({1, 4, 4, 4}, rng);
        Tensor skip2 = Tensor::randn({1, 4, 4, 4}, rng);
        const Tensor& w = ps.get("s1.dec0.w");
        const Tensor& b = ps.get("s1.dec0.b");
        Tensor y1 = conv2d(concat_channels({up, mul(skip1, g)}), w, b, 1, 1);
        Tensor y2 = conv2d(concat_channels({up, mul(skip2, g)}), w, b, 1, 1);
        for (std::int64_t i = 0; i < y1.numel(); ++i)
            CHECK(std::fabs(y1.data()[i] - y2.data()[i]) < 1e-3f);
    }
}

TEST_CASE("full forward pass") {
    ModelConfig c = tiny_config();
    AlbedoNet net{c};
    ParamStore ps;
    Rng rng(9);
    net.init_params(ps, rng);
    Tensor x = Tensor::randn({2, 3, 8, 8}, rng);

    SUBCASE("shape, range, determinism") {
        Tensor y1 = net.forward(x, ps);
        Tensor y2 = net.forward(x, ps);
        CHECK(y1.shape() == Shape{2, 3, 8, 8});
        for (std::int64_t i = 0; i < y1.numel(); ++i) {
            CHECK(y1.data()[i] > -1.0f);
            CHECK(y1.data()[i] < 1.0f);
            CHECK(y1.data()[i] == y2.data()[i]);
        }
    }

    SUBCASE("zero output head gives all-zero albedo") {
        std::fill(ps.get("s1.out.w").buffer().begin(), ps.get("s1.out.w").buffer().end(), 0.0f);
        Tensor y = net.forward(x, ps);
        for (std::int64_t i = 0; i < y.numel(); ++i) CHECK(y.data()[i] == 0.0f);
    }

    SUBCASE("wrong resolution rejected") {
        CHECK_THROWS_AS(net.forward(Tensor::randn({1, 3, 16, 16}, rng), ps), ShapeError);
    }
}

TEST_CASE("full-model gradient check on toy config") {
    AlbedoNet net{tiny_config()};
    ParamStore ps;
    Rng rng(10);
    net.init_params(ps, rng);
    CHECK(ps.param_count() < 50000);
    Tensor x = Tensor::randn({1, 3, 8, 8}, rng, 0.5f);
    auto f = [&](ParamStore& p) { return mean(net.forward(x, p)); };
    // Small step: larger ones sit on the curvature of the saturating
    // activations and the ReLU kinks.
    auto report = grad_check(f, ps, 2e-4, 1e-2, 4);
    CHECK(report.passed(1e-2));
}
