#include <cmath>

#include "doctest.h"
#include "fid/gradcheck.hpp"
#include "fid/refine_translate.hpp"
#include "oracles.hpp"

using namespace fid;

namespace {

TranslatorConfig toy_translator() {
    TranslatorConfig c;
    c.scale_div = 16;  // base channels 4
    c.num_downsamples = 2;
    c.num_res_blocks = 1;
    c.num_disc_scales = 2;
    return c;
}

void zero_all(ParamStore& ps) {
    for (auto& [name, t] : ps.entries()) std::fill(t.buffer().begin(), t.buffer().end(), 0.0f);
}

}  // namespace

TEST_CASE("refiner") {
    Rng rng(21);

    SUBCASE("zero weights map everything to zero") {
        RefineNet net(4);
        ParamStore ps;
        net.init_params(ps, rng);
        zero_all(ps);
        Tensor y = net.forward(Tensor::randn({1, 3, 8, 8}, rng), ps);
        CHECK(y.shape() == Shape{1, 3, 16, 16});
        for (std::int64_t i = 0; i < y.numel(); ++i) CHECK(y.data()[i] == 0.0f);
    }

    SUBCASE("doubles the resolution and stays in [-1,1]") {
        RefineNet net(8);
        ParamStore ps;
        net.init_params(ps, rng);
        // Inflate weights so the pre-clamp values overshoot.
        for (auto& [name, t] : ps.entries())
            for (auto& v : t.buffer()) v *= 20.0f;
        Tensor y = net.forward(Tensor::uniform({2, 3, 16, 16}, rng, -1.0f, 1.0f), ps);
        CHECK(y.shape() == Shape{2, 3, 32, 32});
        for (std::int64_t i = 0; i < y.numel(); ++i) {
            CHECK(y.data()[i] >= -1.0f);
            CHECK(y.data()[i] <= 1.0f);
        }
    }

    SUBCASE("full-width parameter count is about 0.04M") {
        RefineNet net(1);
        ParamStore ps;
        net.init_params(ps, rng);
        CHECK(ps.param_count() > 30000);
        CHECK(ps.param_count() < 50000);
    }
}

TEST_CASE("pass translator") {
    PassTranslator gen(toy_translator());
    ParamStore ps;
    Rng rng(22);
    gen.init_params(ps, rng);
    Tensor albedo = Tensor::uniform({1, 3, 16, 16}, rng, -1.0f, 1.0f);

    SUBCASE("15 raw channels; split/concat is the identity") {
        Tensor raw = gen.forward_raw(albedo, ps);
        CHECK(raw.shape() == Shape{1, 15, 16, 16});
        PassBundle b = PassBundle::split(raw);
        CHECK(b.ao.shape() == Shape{1, 3, 16, 16});
        Tensor back = b.concat();
        for (std::int64_t i = 0; i < raw.numel(); ++i) CHECK(back.data()[i] == raw.data()[i]);
    }

    SUBCASE("passes stay strictly inside (-1,1)") {
        PassBundle b = gen.forward(albedo, ps);
        for (const Tensor* p : b.all())
            for (std::int64_t i = 0; i < p->numel(); ++i) {
                CHECK(p->data()[i] > -1.0f);
                CHECK(p->data()[i] < 1.0f);
            }
    }

    SUBCASE("zero head weights give all-zero passes") {
        std::fill(ps.get("s3.gen.head.w").buffer().begin(),
                  ps.get("s3.gen.head.w").buffer().end(), 0.0f);
        PassBundle b = gen.forward(albedo, ps);
        for (const Tensor* p : b.all())
            for (std::int64_t i = 0; i < p->numel(); ++i) CHECK(p->data()[i] == 0.0f);
    }

    SUBCASE("resolution must divide by the downsample stride") {
        CHECK_THROWS_AS(gen.forward_raw(Tensor::randn({1, 3, 18, 18}, rng), ps), ShapeError);
    }
}

TEST_CASE("patch discriminator") {
    TranslatorConfig cfg = toy_translator();
    PatchDiscriminator disc(cfg);
    PassTranslator gen(cfg);
    ParamStore ps;
    Rng rng(23);
    gen.init_params(ps, rng);
    disc.init_params(ps, rng);
    Tensor albedo = Tensor::uniform({1, 3, 32, 32}, rng, -1.0f, 1.0f);
    PassBundle bundle = gen.forward(albedo, ps);

    SUBCASE("logit map shapes follow the stride-2 recurrence") {
        auto outs = disc.forward(albedo, bundle, ps);
        REQUIRE(outs.size() == 2);
        for (std::size_t s = 0; s < outs.size(); ++s) {
            std::int64_t r = 32 >> s;  // scale input resolution
            for (int i = 0; i < 4; ++i) r = (r + 2 - 3) / 2 + 1;
            CHECK(outs[s].logits.shape() == Shape{1, 1, r, r});
            CHECK(outs[s].features.size() == 4);
        }
    }

    SUBCASE("deterministic") {
        auto a = disc.forward(albedo, bundle, ps);
        auto b = disc.forward(albedo, bundle, ps);
        for (std::size_t s = 0; s < a.size(); ++s)
            for (std::int64_t i = 0; i < a[s].logits.numel(); ++i)
                CHECK(a[s].logits.data()[i] == b[s].logits.data()[i]);
    }

    SUBCASE("gradient check") {
        ParamStore dp;
        PatchDiscriminator toy(cfg);
        toy.init_params(dp, rng);
        Tensor alb16 = Tensor::uniform({1, 3, 16, 16}, rng, -1.0f, 1.0f);
        PassBundle fixed = PassBundle::split(Tensor::uniform({1, 15, 16, 16}, rng, -0.9f, 0.9f));
        auto f = [&](ParamStore& p) {
            auto outs = toy.forward(alb16, fixed, p);
            Tensor acc;
            for (auto& so : outs) {
                Tensor m = mean(mul(so.logits, so.logits));
                acc = acc.defined() ? add(acc, m) : m;
            }
            return acc;
        };
        auto report = grad_check(f, dp, 1e-2, 1e-2, 2);
        CHECK(report.passed(1e-2));
    }
}

TEST_CASE("adversarial and feature-matching losses") {
    TranslatorConfig cfg = toy_translator();
    PatchDiscriminator disc(cfg);
    ParamStore ps;
    Rng rng(24);
    disc.init_params(ps, rng);
    Tensor albedo = Tensor::uniform({1, 3, 32, 32}, rng, -1.0f, 1.0f);
    PassBundle real = PassBundle::split(Tensor::uniform({1, 15, 32, 32}, rng, -0.9f, 0.9f));
    PassBundle fake = PassBundle::split(Tensor::uniform({1, 15, 32, 32}, rng, -0.9f, 0.9f));

    SUBCASE("feature matching vanishes when fake equals real") {
        auto l = gan_losses(real, real, albedo, disc, ps);
        CHECK(l.feature_matching.item() == 0.0f);
    }

    SUBCASE("constant 0.5 logits give D loss 0.25") {
        zero_all(ps);
        for (auto& [name, t] : ps.entries())
            if (name.find(".logit.b") != std::string::npos) t.buffer()[0] = 0.5f;
        auto l = gan_losses(real, fake, albedo, disc, ps);
        CHECK(l.d.item() == doctest::Approx(0.25).epsilon(1e-6));
        CHECK(l.g_adv.item() == doctest::Approx(0.25).epsilon(1e-6));
    }

    SUBCASE("matches straight-line formula oracle") {
        auto l = gan_losses(real, fake, albedo, disc, ps);
        auto ro = disc.forward(albedo, real, ps);
        auto fo = disc.forward(albedo, fake, ps);
        double d = 0, g = 0, fm = 0;
        std::size_t layers = 0;
        for (std::size_t s = 0; s < ro.size(); ++s) {
            double mr = 0, mf = 0, mg = 0;
            const float* pr = ro[s].logits.data();
            const float* pf = fo[s].logits.data();
            std::int64_t n = ro[s].logits.numel();
            for (std::int64_t i = 0; i < n; ++i) {
                mr += (pr[i] - 1.0) * (pr[i] - 1.0);
                mf += pf[i] * pf[i];
                mg += (pf[i] - 1.0) * (pf[i] - 1.0);
            }
            d += 0.5 * (mr / n + mf / n);
            g += mg / n;
            for (std::size_t j = 0; j < ro[s].features.size(); ++j, ++layers) {
                const float* fr = ro[s].features[j].data();
                const float* ff = fo[s].features[j].data();
                std::int64_t fn = ro[s].features[j].numel();
                double acc = 0;
                for (std::int64_t i = 0; i < fn; ++i) acc += std::fabs(fr[i] - ff[i]);
                fm += acc / fn;
            }
        }
        CHECK(l.d.item() == doctest::Approx(d / ro.size()).epsilon(1e-5));
        CHECK(l.g_adv.item() == doctest::Approx(g / ro.size()).epsilon(1e-5));
        CHECK(l.feature_matching.item() == doctest::Approx(fm / layers).epsilon(1e-5));
    }
}

TEST_CASE("normal renormalization") {
    Rng rng(25);
    Tensor n = Tensor::uniform({2, 3, 6, 6}, rng, -1.0f, 1.0f);
    Tensor mask = Tensor::zeros({2, 1, 6, 6});
    // Mask the left half.
    for (std::int64_t b = 0; b < 2; ++b)
        for (std::int64_t y = 0; y < 6; ++y)
            for (std::int64_t x = 0; x < 3; ++x) mask.data()[(b * 6 + y) * 6 + x] = 1.0f;

    Tensor once = renormalize_normals(n, mask);
    Tensor twice = renormalize_normals(once, mask);

    SUBCASE("unit length inside the mask") {
        for (std::int64_t b = 0; b < 2; ++b)
            for (std::int64_t y = 0; y < 6; ++y)
                for (std::int64_t x = 0; x < 3; ++x) {
                    std::int64_t base = (b * 3 * 6 + y) * 6 + x;
                    double vx = once.data()[base];
                    double vy = once.data()[base + 36];
                    double vz = once.data()[base + 72];
                    CHECK(std::sqrt(vx * vx + vy * vy + vz * vz) == doctest::Approx(1.0).epsilon(1e-5));
                }
    }

    SUBCASE("untouched outside the mask") {
        for (std::int64_t b = 0; b < 2; ++b)
            for (std::int64_t c = 0; c < 3; ++c)
                for (std::int64_t y = 0; y < 6; ++y)
                    for (std::int64_t x = 3; x < 6; ++x) {
                        std::int64_t i = ((b * 3 + c) * 6 + y) * 6 + x;
                        CHECK(once.data()[i] == n.data()[i]);
                    }
    }

    SUBCASE("idempotent") {
        for (std::int64_t i = 0; i < once.numel(); ++i)
            CHECK(std::fabs(once.data()[i] - twice.data()[i]) < 1e-6f);
    }

    SUBCASE("degenerate zero vector points at the viewer") {
        Tensor z = Tensor::zeros({1, 3, 1, 1});
        Tensor m = Tensor::full({1, 1, 1, 1}, 1.0f);
        Tensor r = renormalize_normals(z, m);
        CHECK(r.data()[0] == 0.0f);
        CHECK(r.data()[1] == 0.0f);
        CHECK(r.data()[2] == 1.0f);
    }
}
