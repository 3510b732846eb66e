#include "fid/pipeline.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>

#include "fid/trainer.hpp"

namespace fid {

Pipeline Pipeline::from_checkpoint(const std::string& path) {
    Checkpoint ckpt = load_checkpoint(path);
    return from_config(RunConfig::parse(ckpt.config_text), std::move(ckpt.params));
}

Pipeline Pipeline::from_config(const RunConfig& cfg, ParamStore params) {
    cfg.model.validate();
    Pipeline p;
    p.cfg_ = cfg;
    p.params_ = std::make_shared<ParamStore>(std::move(params));
    p.net_ = std::make_shared<AlbedoNet>(cfg.model);
    p.refiner_ = std::make_shared<RefineNet>(cfg.model.scale_div);
    p.translator_ = std::make_shared<PassTranslator>(cfg.translator);
    if (!p.params_->contains("s1.stem.w"))
        throw ConfigError("checkpoint is missing the albedo predictor parameters");
    p.has_translator_ = p.params_->contains("s3.gen.stem.w");
    return p;
}

Tensor Pipeline::predict_albedo(const Tensor& input_rgb) {
    if (input_rgb.rank() != 3 || input_rgb.dim(0) != 3)
        throw ShapeError("decompose expects [3,R,R], got " + shape_str(input_rgb.shape()));
    int r = resolution();
    if (input_rgb.dim(1) != r || input_rgb.dim(2) != r)
        throw ConfigError("input resolution " + std::to_string(input_rgb.dim(1)) + "x" +
                          std::to_string(input_rgb.dim(2)) + " does not match checkpoint (" +
                          std::to_string(r) + "x" + std::to_string(r) + ")");
    NoGradGuard guard;
    Tensor x = reshape(to_signed(input_rgb), {1, 3, r, r});
    int enc = cfg_.model.input_res;
    Tensor coarse = net_->forward(bilinear_resize(x, enc, enc), *params_);
    Tensor refined = refiner_->forward(coarse, *params_);
    return to_unit(reshape(refined, {3, std::int64_t(r), std::int64_t(r)}));
}

IntrinsicStack Pipeline::decompose(const Tensor& input_rgb) {
    Tensor albedo01 = predict_albedo(input_rgb);
    if (!has_translator_)
        throw ConfigError("checkpoint has no pass translator; train stage 3 first");
    NoGradGuard guard;
    std::int64_t r = resolution();
    Tensor albedo_signed = reshape(to_signed(albedo01), {1, 3, r, r});
    PassBundle bundle = translator_->forward(albedo_signed, *params_);
    Tensor ones = Tensor::zeros({1, 1, r, r});
    for (std::int64_t i = 0; i < ones.numel(); ++i) ones.data()[i] = 1.0f;
    Tensor normal = renormalize_normals(bundle.normal, ones);
    IntrinsicStack out;
    auto squeeze01 = [r](const Tensor& t) { return to_unit(reshape(t, {3, r, r})); };
    out.albedo = albedo01;
    out.normal = squeeze01(normal);
    out.ao = squeeze01(bundle.ao);
    out.specular = squeeze01(bundle.specular);
    out.translucency = squeeze01(bundle.translucency);
    out.raw_diffuse = squeeze01(bundle.raw_diffuse);
    out.mask = reshape(ones, {1, r, r});
    return out;
}

std::string RunManifest::serialize() const {
    std::string s;
    s += "manifest_version=1\n";
    s += "command=" + command + "\n";
    s += "version=" + version + "\n";
    s += "seed=" + std::to_string(seed) + "\n";
    s += "timestamp=" + timestamp + "\n";
    for (const std::string& o : outputs) s += "output=" + o + "\n";
    s += "config_begin\n" + config_text;
    if (!config_text.empty() && config_text.back() != '\n') s += "\n";
    s += "config_end\n";
    return s;
}

void RunManifest::write(const std::string& path) const {
    std::ofstream os(path);
    if (!os) throw IoError("cannot write manifest " + path);
    os << serialize();
}

RunManifest make_manifest(const std::string& command, const std::string& config_text,
                          std::uint64_t seed, std::vector<std::string> outputs) {
    RunManifest m;
    m.command = command;
    m.config_text = config_text;
    m.seed = seed;
    m.outputs = std::move(outputs);
    auto now = std::chrono::system_clock::now();
    std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    m.timestamp = buf;
    return m;
}

}  // namespace fid
