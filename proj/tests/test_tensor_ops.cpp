#include <doctest.h>

#include <cmath>

#include "fid/ops.hpp"
#include "fid/rng.hpp"
#include "oracles.hpp"

using namespace fid;

namespace {

Tensor random_tensor(Shape shape, Rng& rng, float lo = -1.0f, float hi = 1.0f) {
    return Tensor::uniform(std::move(shape), rng, lo, hi);
}

oracle::Grid to_grid(const Tensor& t) {
    oracle::Grid g;
    g.n = t.dim(0);
    g.c = t.dim(1);
    g.h = t.dim(2);
    g.w = t.dim(3);
    g.v = t.buffer();
    return g;
}

void require_close(const Tensor& t, const std::vector<float>& ref, double tol) {
    REQUIRE(t.numel() == static_cast<std::int64_t>(ref.size()));
    for (std::int64_t i = 0; i < t.numel(); ++i)
        REQUIRE(std::fabs(t.data()[i] - ref[i]) <= tol);
}

}  // namespace

TEST_CASE("conv2d box sum on ones") {
    Tensor x = Tensor::full({1, 1, 3, 3}, 1.0f);
    Tensor w = Tensor::full({1, 1, 3, 3}, 1.0f);
    Tensor y = conv2d(x, w, Tensor(), 1, 1);
    CHECK(y.data()[4] == doctest::Approx(9.0));
    CHECK(y.data()[0] == doctest::Approx(4.0));
    CHECK(y.data()[2] == doctest::Approx(4.0));
    CHECK(y.data()[8] == doctest::Approx(4.0));
}

TEST_CASE("conv2d identity kernel") {
    Rng rng(3);
    Tensor x = random_tensor({2, 2, 5, 7}, rng);
    Tensor w = Tensor::zeros({2, 2, 3, 3});
    // One-hot center tap per matching channel.
    w.data()[0 * 2 * 9 + 0 * 9 + 4] = 1.0f;
    w.data()[1 * 2 * 9 + 1 * 9 + 4] = 1.0f;
    Tensor y = conv2d(x, w, Tensor(), 1, 1);
    require_close(y, x.buffer(), 1e-6);
}

TEST_CASE("conv2d matches naive loop oracle") {
    Rng rng(7);
    Tensor x = random_tensor({2, 3, 8, 8}, rng);
    Tensor w = random_tensor({4, 3, 3, 3}, rng);
    Tensor b = random_tensor({4}, rng);
    Tensor y = conv2d(x, w, b, 2, 1);
    auto ref = oracle::conv2d(to_grid(x), to_grid(w), b.buffer(), 2, 1);
    require_close(y, ref.v, 1e-5);
    CHECK(y.shape() == Shape{2, 4, 4, 4});
}

TEST_CASE("conv2d randomized shapes vs oracle") {
    Rng rng(11);
    for (int trial = 0; trial < 25; ++trial) {
        std::int64_t n = rng.range_int(1, 2), c = rng.range_int(1, 4);
        std::int64_t h = rng.range_int(3, 12), w = rng.range_int(3, 12);
        std::int64_t k = rng.range_int(1, 4);
        int stride = rng.range_int(1, 2);
        Tensor x = random_tensor({n, c, h, w}, rng);
        Tensor wt = random_tensor({k, c, 3, 3}, rng);
        Tensor y = conv2d(x, wt, Tensor(), stride, 1);
        auto ref = oracle::conv2d(to_grid(x), to_grid(wt), {}, stride, 1);
        require_close(y, ref.v, 1e-5);
    }
}

TEST_CASE("conv2d rejects bad shapes and non-finite input") {
    Tensor x = Tensor::full({1, 2, 4, 4}, 1.0f);
    Tensor w = Tensor::full({1, 3, 3, 3}, 1.0f);
    CHECK_THROWS_AS(conv2d(x, w, Tensor(), 1, 1), ShapeError);
    Tensor w2 = Tensor::full({1, 2, 3, 3}, 1.0f);
    x.data()[5] = std::numeric_limits<float>::quiet_NaN();
    CHECK_THROWS_AS(conv2d(x, w2, Tensor(), 1, 1), NumericError);
}

TEST_CASE("bilinear_resize preserves constants") {
    Tensor x = Tensor::full({1, 2, 5, 5}, 0.37f);
    for (auto [oh, ow] : {std::pair<int, int>{10, 10}, {3, 7}, {16, 2}}) {
        Tensor y = bilinear_resize(x, oh, ow);
        for (std::int64_t i = 0; i < y.numel(); ++i)
            CHECK(y.data()[i] == doctest::Approx(0.37f).epsilon(1e-6));
    }
}

TEST_CASE("bilinear_resize 2x2 to 4x4 corners per interpolation oracle") {
    Tensor x = Tensor::from({1, 1, 2, 2}, {1, 2, 3, 4});
    Tensor y = bilinear_resize(x, 4, 4);
    auto ref = oracle::bilinear_resize(to_grid(x), 4, 4);
    require_close(y, ref.v, 1e-6);
    CHECK(y.data()[0] == doctest::Approx(1.0));
    CHECK(y.data()[3] == doctest::Approx(2.0));
    CHECK(y.data()[12] == doctest::Approx(3.0));
    CHECK(y.data()[15] == doctest::Approx(4.0));
}

TEST_CASE("bilinear_resize randomized vs oracle") {
    Rng rng(13);
    for (int trial = 0; trial < 20; ++trial) {
        std::int64_t h = rng.range_int(2, 12), w = rng.range_int(2, 12);
        std::int64_t oh = rng.range_int(1, 16), ow = rng.range_int(1, 16);
        Tensor x = random_tensor({1, rng.range_int(1, 3), h, w}, rng);
        Tensor y = bilinear_resize(x, oh, ow);
        auto ref = oracle::bilinear_resize(to_grid(x), oh, ow);
        require_close(y, ref.v, 1e-5);
    }
}

TEST_CASE("2x upsample then 2x average pool is identity on constant images") {
    // Only constant images survive the round trip exactly under the
    // align-corners=false convention; interior pixels of general images
    // pick up a 1/8 Laplacian term.
    Tensor x = Tensor::full({1, 3, 6, 6}, -0.25f);
    Tensor y = avg_pool2(bilinear_resize(x, 12, 12));
    require_close(y, x.buffer(), 1e-6);
}

TEST_CASE("bilinear_resize rejects zero target") {
    Tensor x = Tensor::full({1, 1, 4, 4}, 1.0f);
    CHECK_THROWS_AS(bilinear_resize(x, 0, 4), ShapeError);
}

TEST_CASE("pool_stats constants") {
    Tensor x = Tensor::full({2, 3, 4, 4}, 2.5f);
    for (auto kind : {PoolKind::global_avg, PoolKind::channel_avg, PoolKind::channel_max}) {
        Tensor y = pool_stats(x, kind);
        for (std::int64_t i = 0; i < y.numel(); ++i)
            CHECK(y.data()[i] == doctest::Approx(2.5f));
    }
}

TEST_CASE("pool_stats channel avg/max on [1s,3s] channels") {
    Tensor x = Tensor::zeros({1, 2, 3, 3});
    for (int i = 0; i < 9; ++i) x.data()[i] = 1.0f;
    for (int i = 9; i < 18; ++i) x.data()[i] = 3.0f;
    Tensor avg = pool_stats(x, PoolKind::channel_avg);
    Tensor mx = pool_stats(x, PoolKind::channel_max);
    for (int i = 0; i < 9; ++i) {
        CHECK(avg.data()[i] == doctest::Approx(2.0f));
        CHECK(mx.data()[i] == doctest::Approx(3.0f));
    }
}

TEST_CASE("pool_stats random vs loop oracle") {
    Rng rng(17);
    Tensor x = random_tensor({1, 4, 5, 5}, rng);
    require_close(pool_stats(x, PoolKind::global_avg), oracle::global_avg(to_grid(x)), 1e-6);
    require_close(pool_stats(x, PoolKind::channel_avg), oracle::channel_avg(to_grid(x)).v, 1e-6);
    require_close(pool_stats(x, PoolKind::channel_max), oracle::channel_max(to_grid(x)).v, 1e-6);
}

TEST_CASE("elementwise basics") {
    CHECK(sigmoid(Tensor::scalar(0.0f)).item() == doctest::Approx(0.5));
    Rng rng(19);
    Tensor x = random_tensor({1, 2, 3, 3}, rng);
    Tensor y = mul(x, Tensor::full(x.shape(), 1.0f));
    require_close(y, x.buffer(), 0.0);
}

TEST_CASE("broadcast mul matches loop oracle") {
    Rng rng(23);
    Tensor a = random_tensor({1, 3, 1, 1}, rng);
    Tensor b = random_tensor({1, 1, 4, 4}, rng);
    Tensor y = mul(a, b);
    auto ref = oracle::broadcast_mul(to_grid(a), to_grid(b));
    CHECK(y.shape() == Shape{1, 3, 4, 4});
    require_close(y, ref.v, 1e-6);
}

TEST_CASE("non-broadcastable shapes rejected") {
    Tensor a = Tensor::full({1, 3, 2, 2}, 1.0f);
    Tensor b = Tensor::full({1, 2, 2, 2}, 1.0f);
    CHECK_THROWS_AS(add(a, b), ShapeError);
}

TEST_CASE("activation output ranges") {
    Rng rng(29);
    Tensor x = random_tensor({1, 1, 8, 8}, rng, -50.0f, 50.0f);
    Tensor t = tanh_op(x);
    Tensor s = sigmoid(x);
    for (std::int64_t i = 0; i < x.numel(); ++i) {
        CHECK(t.data()[i] >= -1.0f);
        CHECK(t.data()[i] <= 1.0f);
        CHECK(s.data()[i] > 0.0f);
        CHECK(s.data()[i] < 1.0f);
    }
}

TEST_CASE("ops are deterministic") {
    Rng rng1(31), rng2(31);
    Tensor x1 = random_tensor({2, 3, 9, 9}, rng1);
    Tensor x2 = random_tensor({2, 3, 9, 9}, rng2);
    Tensor w1 = random_tensor({4, 3, 3, 3}, rng1);
    Tensor w2 = random_tensor({4, 3, 3, 3}, rng2);
    Tensor y1 = conv2d(relu(x1), w1, Tensor(), 2, 1);
    Tensor y2 = conv2d(relu(x2), w2, Tensor(), 2, 1);
    for (std::int64_t i = 0; i < y1.numel(); ++i) CHECK(y1.data()[i] == y2.data()[i]);
}

TEST_CASE("concat/slice channels round trip") {
    Rng rng(37);
    Tensor a = random_tensor({2, 3, 4, 4}, rng);
    Tensor b = random_tensor({2, 5, 4, 4}, rng);
    Tensor cat = concat_channels({a, b});
    CHECK(cat.shape() == Shape{2, 8, 4, 4});
    require_close(slice_channels(cat, 0, 3), a.buffer(), 0.0);
    require_close(slice_channels(cat, 3, 5), b.buffer(), 0.0);
}

TEST_CASE("replicate padding") {
    Tensor a = Tensor::from({1, 1, 2, 2}, {1, 2, 3, 4});
    Tensor p = replicate_pad(a, 1);
    CHECK(p.shape() == Shape{1, 1, 4, 4});
    std::vector<float> expect = {1, 1, 2, 2, 1, 1, 2, 2, 3, 3, 4, 4, 3, 3, 4, 4};
    for (std::int64_t i = 0; i < 16; ++i) CHECK(p.data()[i] == expect[i]);

    // Gradient fans back into the replicated source cells.
    Tensor b = Tensor::from({1, 1, 2, 2}, {1, 2, 3, 4});
    b.set_requires_grad(true);
    backward(sum(replicate_pad(b, 1)));
    // Each corner cell feeds a 2x2 block of the output.
    for (int i = 0; i < 4; ++i) CHECK(b.grad()[i] == 4.0f);
}

TEST_CASE("leaky relu") {
    Tensor x = Tensor::from({4}, {-2.0f, -0.5f, 0.0f, 3.0f});
    x.set_requires_grad(true);
    Tensor y = leaky_relu(x);
    CHECK(y.data()[0] == doctest::Approx(-0.4));
    CHECK(y.data()[1] == doctest::Approx(-0.1));
    CHECK(y.data()[2] == 0.0f);
    CHECK(y.data()[3] == 3.0f);
    backward(sum(y));
    CHECK(x.grad()[0] == 0.2f);
    CHECK(x.grad()[3] == 1.0f);
}
