#pragma once

#include <string>
#include <vector>

#include "fid/model_config.hpp"
#include "fid/ops.hpp"
#include "fid/param_store.hpp"

namespace fid {

// One row of the layer/shape trace (the --dry-run output).
struct TraceRow {
    std::string stage;
    std::string op;
    int ch_in = 0;
    int ch_out = 0;
    int res_in = 0;
    int res_out = 0;
};

std::string trace_row_str(const TraceRow& row);

// Stage I: six-level residual encoder, dual-attention bottleneck, gated-skip
// decoder, tanh albedo head. Parameters live in an external ParamStore under
// the "s1." prefix so checkpoints can mix stages.
class AlbedoNet {
public:
    explicit AlbedoNet(ModelConfig config);

    const ModelConfig& config() const { return config_; }

    // Kaiming-normal conv/linear weights, zero biases, zero gate raws.
    void init_params(ParamStore& ps, Rng& rng) const;

    struct Encoded {
        Tensor bottleneck;
        std::vector<Tensor> skips;  // E_0..E_{L-1}, taken after each ResBlock
    };
    Encoded encode(const Tensor& image, ParamStore& ps) const;

    // A_c in (0,1), shape [N,C,1,1].
    Tensor channel_attention(const Tensor& x, ParamStore& ps) const;
    // A_s in (0,1), shape [N,1,H,W].
    Tensor spatial_attention(const Tensor& x, ParamStore& ps) const;
    // X ⊙ A_c ⊙ A_s.
    static Tensor modulate(const Tensor& x, const Tensor& a_c, const Tensor& a_s);

    // Effective gate value of decoder level l: sigmoid(raw_l).
    Tensor gate(ParamStore& ps, int level) const;

    Tensor residual_block(const Tensor& x, ParamStore& ps, const std::string& prefix) const;

    // Full Stage I pass: [N,3,R,R] normalized input -> albedo in (-1,1).
    Tensor forward(const Tensor& image, ParamStore& ps) const;

    // Decoder output width at level l (the Table-style per-row widths).
    int decoder_width(int level) const;

    std::vector<TraceRow> trace() const;

private:
    Tensor conv_layer(const Tensor& x, ParamStore& ps, const std::string& name, int stride,
                      int pad) const;

    ModelConfig config_;
};

}  // namespace fid
