#include "fid/albedo_net.hpp"

#include <cmath>
#include <sstream>

namespace fid {

namespace {

Tensor kaiming_conv(Shape shape, Rng& rng) {
    // fan_in = C * kh * kw
    double fan_in = static_cast<double>(shape[1] * shape[2] * shape[3]);
    return Tensor::randn(shape, rng, static_cast<float>(std::sqrt(2.0 / fan_in)));
}

Tensor kaiming_linear(Shape shape, Rng& rng) {
    double fan_in = static_cast<double>(shape[1]);
    return Tensor::randn(shape, rng, static_cast<float>(std::sqrt(2.0 / fan_in)));
}

int attn_hidden(int channels, int reduction) {
    return std::max(1, (channels + reduction - 1) / reduction);
}

}  // namespace

std::string trace_row_str(const TraceRow& row) {
    std::ostringstream os;
    os << row.stage << "  " << row.op << "  " << row.ch_in << "->" << row.ch_out << "  "
       << row.res_in << "->" << row.res_out;
    return os.str();
}

AlbedoNet::AlbedoNet(ModelConfig config) : config_(std::move(config)) {
    config_.validate();
}

int AlbedoNet::decoder_width(int level) const {
    return config_.width(std::max(level - 1, 0));
}

void AlbedoNet::init_params(ParamStore& ps, Rng& rng) const {
    const ModelConfig& c = config_;
    ps.create("s1.stem.w", kaiming_conv({c.width(0), 3, 1, 1}, rng));
    ps.create("s1.stem.b", Tensor::zeros({c.width(0)}));
    for (int l = 0; l < c.levels; ++l) {
        int w = c.width(l);
        for (int i = 0; i < 3; ++i) {
            std::string p = "s1.enc" + std::to_string(l) + ".res.c" + std::to_string(i);
            Tensor wt = kaiming_conv({w, w, 3, 3}, rng);
            // Damp the residual branch where it rejoins the trunk so
            // activations stay O(1) through the level stack; otherwise the
            // variance added per block compounds and the head saturates.
            if (i == 2)
                for (std::int64_t j = 0; j < wt.numel(); ++j) wt.data()[j] *= 0.25f;
            ps.create(p + ".w", wt);
            ps.create(p + ".b", Tensor::zeros({w}));
        }
        std::string d = "s1.enc" + std::to_string(l) + ".down";
        ps.create(d + ".w", kaiming_conv({c.width(l + 1), w, 3, 3}, rng));
        ps.create(d + ".b", Tensor::zeros({c.width(l + 1)}));
    }
    int cb = c.width(c.levels);
    int hidden = attn_hidden(cb, c.attn_reduction);
    ps.create("s1.attn.w1", kaiming_linear({hidden, cb}, rng));
    ps.create("s1.attn.w2", kaiming_linear({cb, hidden}, rng));
    ps.create("s1.attn.spatial.w", kaiming_conv({1, 2, 1, 1}, rng));
    ps.create("s1.attn.spatial.b", Tensor::zeros({1}));
    // Raw gates start at 0 so sigmoid(raw) = 0.5 exactly.
    ps.create("s1.gates.raw", Tensor::zeros({c.levels}));
    for (int l = c.levels - 1; l >= 0; --l) {
        int in_ch = (l == c.levels - 1 ? c.width(c.levels) : decoder_width(l + 1)) + c.width(l);
        std::string p = "s1.dec" + std::to_string(l);
        ps.create(p + ".w", kaiming_conv({decoder_width(l), in_ch, 3, 3}, rng));
        ps.create(p + ".b", Tensor::zeros({decoder_width(l)}));
    }
    Tensor head = kaiming_conv({3, decoder_width(0), 1, 1}, rng);
    // Small head init keeps the tanh output near zero at step 0, so early
    // training adjusts toward the data instead of unlearning random structure.
    for (std::int64_t j = 0; j < head.numel(); ++j) head.data()[j] *= 0.25f;
    ps.create("s1.out.w", head);
    ps.create("s1.out.b", Tensor::zeros({3}));
}

Tensor AlbedoNet::conv_layer(const Tensor& x, ParamStore& ps, const std::string& name, int stride,
                             int pad) const {
    return conv2d(x, ps.get(name + ".w"), ps.get(name + ".b"), stride, pad);
}

Tensor AlbedoNet::residual_block(const Tensor& x, ParamStore& ps, const std::string& prefix) const {
    if (x.dim(1) != ps.get(prefix + ".c0.w").dim(1))
        throw ShapeError("residual block " + prefix + ": channel mismatch, input " +
                         shape_str(x.shape()));
    Tensor h = conv_layer(relu(x), ps, prefix + ".c0", 1, 1);
    h = conv_layer(relu(h), ps, prefix + ".c1", 1, 1);
    h = conv_layer(relu(h), ps, prefix + ".c2", 1, 1);
    return add(x, h);
}

AlbedoNet::Encoded AlbedoNet::encode(const Tensor& image, ParamStore& ps) const {
    if (image.rank() != 4 || image.dim(1) != 3 || image.dim(2) != config_.input_res ||
        image.dim(3) != config_.input_res)
        throw ShapeError("encoder expects [N,3," + std::to_string(config_.input_res) + "," +
                         std::to_string(config_.input_res) + "], got " + shape_str(image.shape()));
    Encoded enc;
    Tensor h = conv_layer(image, ps, "s1.stem", 1, 0);
    for (int l = 0; l < config_.levels; ++l) {
        h = residual_block(h, ps, "s1.enc" + std::to_string(l) + ".res");
        enc.skips.push_back(h);  // skip taps are pre-downsample
        h = conv_layer(h, ps, "s1.enc" + std::to_string(l) + ".down", 2, 1);
    }
    enc.bottleneck = h;
    return enc;
}

Tensor AlbedoNet::channel_attention(const Tensor& x, ParamStore& ps) const {
    Tensor pooled = pool_stats(x, PoolKind::global_avg);  // [N,C]
    Tensor h = relu(linear(pooled, ps.get("s1.attn.w1"), Tensor()));
    Tensor a = sigmoid(linear(h, ps.get("s1.attn.w2"), Tensor()));
    return reshape(a, {x.dim(0), x.dim(1), 1, 1});
}

Tensor AlbedoNet::spatial_attention(const Tensor& x, ParamStore& ps) const {
    Tensor pooled = concat_channels({pool_stats(x, PoolKind::channel_avg),
                                     pool_stats(x, PoolKind::channel_max)});
    return sigmoid(conv2d(pooled, ps.get("s1.attn.spatial.w"), ps.get("s1.attn.spatial.b"), 1, 0));
}

Tensor AlbedoNet::modulate(const Tensor& x, const Tensor& a_c, const Tensor& a_s) {
    return mul(mul(x, a_c), a_s);
}

Tensor AlbedoNet::gate(ParamStore& ps, int level) const {
    Tensor raw = ps.get("s1.gates.raw");
    // [1,1,1,1] scalar gate, broadcast over the skip tensor.
    return sigmoid(slice_channels(reshape(raw, {1, raw.dim(0), 1, 1}), level, 1));
}

Tensor AlbedoNet::forward(const Tensor& image, ParamStore& ps) const {
    Encoded enc = encode(image, ps);
    Tensor a_c = channel_attention(enc.bottleneck, ps);
    Tensor a_s = spatial_attention(enc.bottleneck, ps);
    Tensor d = modulate(enc.bottleneck, a_c, a_s);
    for (int l = config_.levels - 1; l >= 0; --l) {
        Tensor up = bilinear_resize(d, d.dim(2) * 2, d.dim(3) * 2);
        Tensor gated_skip = mul(enc.skips[static_cast<std::size_t>(l)], gate(ps, l));
        Tensor cat = concat_channels({up, gated_skip});
        d = conv_layer(cat, ps, "s1.dec" + std::to_string(l), 1, 1);
    }
    return tanh_op(conv2d(d, ps.get("s1.out.w"), ps.get("s1.out.b"), 1, 0));
}

std::vector<TraceRow> AlbedoNet::trace() const {
    const ModelConfig& c = config_;
    std::vector<TraceRow> rows;
    int res = c.input_res;
    rows.push_back({"In", "Conv 1x1", 3, c.width(0), res, res});
    for (int l = 0; l < c.levels; ++l) {
        rows.push_back({std::to_string(l), "ResBlock", c.width(l), c.width(l), res, res});
        rows.push_back({std::to_string(l), "DownConv", c.width(l), c.width(l + 1), res, res / 2});
        res /= 2;
    }
    rows.push_back({"B", "Spatial Attn 1x1", c.width(c.levels), 1, res, res});
    rows.push_back({"B", "Channel Attn FC", c.width(c.levels), c.width(c.levels), 1, 1});
    rows.push_back({"B", "Modulation", c.width(c.levels), c.width(c.levels), res, res});
    int ch = c.width(c.levels);
    for (int l = c.levels - 1; l >= 0; --l) {
        rows.push_back({"D" + std::to_string(l), "Upsample", ch, ch, res, res * 2});
        res *= 2;
        rows.push_back({"D" + std::to_string(l), "Conv 3x3", ch, decoder_width(l), res, res});
        ch = decoder_width(l);
    }
    rows.push_back({"Out", "Conv 1x1+Tanh", ch, 3, res, res});
    return rows;
}

}  // namespace fid
