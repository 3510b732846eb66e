#include "fid/model_config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace fid {

namespace {

int scaled_width(int base, int div) {
    return std::max(4, (base + div - 1) / div);
}

}  // namespace

int ModelConfig::width(int level) const {
    if (level < 0 || level > levels) throw ConfigError("level index out of range");
    std::size_t idx = std::min<std::size_t>(static_cast<std::size_t>(level), base_widths.size() - 1);
    return scaled_width(base_widths[idx], scale_div);
}

void ModelConfig::validate() const {
    if (levels < 2) throw ConfigError("model.levels must be >= 2");
    if (scale_div < 1) throw ConfigError("model.scale_div must be >= 1");
    if (attn_reduction < 1) throw ConfigError("model.attn_reduction must be >= 1");
    if (base_widths.size() < static_cast<std::size_t>(levels) + 1)
        throw ConfigError("model.widths needs levels+1 entries");
    if (input_res % (1 << levels) != 0)
        throw ConfigError("model.input_res " + std::to_string(input_res) +
                          " not divisible by 2^levels");
    if (bottleneck_res() < 2)
        throw ConfigError("bottleneck spatial extent " + std::to_string(bottleneck_res()) +
                          " < 2; reduce model.levels");
}

ModelConfig ModelConfig::desk_scale() {
    ModelConfig c;
    c.levels = 4;
    c.scale_div = 8;
    c.input_res = 32;
    return c;
}

int receptive_field(const ModelConfig& config) {
    long long r = 1, j = 1;
    // 1x1 stem contributes nothing: r += (1-1)*j.
    for (int l = 0; l < config.levels; ++l) {
        for (int i = 0; i < 3; ++i) r += 2 * j;  // residual block: three 3x3, stride 1
        r += 2 * j;                              // downconv: 3x3, stride 2
        j *= 2;
    }
    return static_cast<int>(r);
}

int TranslatorConfig::base() const {
    return scaled_width(gen_base_channels, scale_div);
}

void TranslatorConfig::validate() const {
    if (gen_base_channels < 1 || num_downsamples < 1 || num_res_blocks < 1 ||
        num_disc_scales < 1 || scale_div < 1)
        throw ConfigError("translator config fields must all be >= 1");
}

void TrainConfig::validate() const {
    if (!(lr_min < lr_init)) throw ConfigError("trainer.lr_min must be < trainer.lr_init");
    if (epochs_stage12 < 1 || epochs_stage3 < 1) throw ConfigError("epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("trainer.batch_size must be >= 1");
    if (weights.alpha < 0 || weights.beta < 0 || weights.gamma < 0 || weights.delta < 0)
        throw ConfigError("loss weights must be >= 0");
}

std::string RunConfig::serialize() const {
    std::ostringstream os;
    os << "schema_version = 1\n";
    os << "model.levels = " << model.levels << "\n";
    os << "model.widths = ";
    for (std::size_t i = 0; i < model.base_widths.size(); ++i)
        os << (i ? "," : "") << model.base_widths[i];
    os << "\n";
    os << "model.scale_div = " << model.scale_div << "\n";
    os << "model.attn_reduction = " << model.attn_reduction << "\n";
    os << "model.input_res = " << model.input_res << "\n";
    os << "translator.gen_base_channels = " << translator.gen_base_channels << "\n";
    os << "translator.num_downsamples = " << translator.num_downsamples << "\n";
    os << "translator.num_res_blocks = " << translator.num_res_blocks << "\n";
    os << "translator.num_disc_scales = " << translator.num_disc_scales << "\n";
    os << "translator.scale_div = " << translator.scale_div << "\n";
    os << "trainer.lr_init = " << trainer.lr_init << "\n";
    os << "trainer.lr_min = " << trainer.lr_min << "\n";
    os << "trainer.beta1 = " << trainer.beta1 << "\n";
    os << "trainer.beta2 = " << trainer.beta2 << "\n";
    os << "trainer.epochs_stage12 = " << trainer.epochs_stage12 << "\n";
    os << "trainer.epochs_stage3 = " << trainer.epochs_stage3 << "\n";
    os << "trainer.batch_size = " << trainer.batch_size << "\n";
    os << "trainer.restart_period_epochs = " << trainer.restart_period_epochs << "\n";
    os << "trainer.master_seed = " << trainer.master_seed << "\n";
    os << "loss.alpha = " << trainer.weights.alpha << "\n";
    os << "loss.beta = " << trainer.weights.beta << "\n";
    os << "loss.gamma = " << trainer.weights.gamma << "\n";
    os << "loss.delta = " << trainer.weights.delta << "\n";
    return os.str();
}

RunConfig RunConfig::parse(const std::string& text) {
    RunConfig cfg;
    bool translator_scale_set = false;
    std::istringstream is(text);
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        auto trim = [](std::string s) {
            auto b = s.find_first_not_of(" \t\r");
            auto e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
        };
        if (trim(line).empty()) continue;
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        auto as_int = [&] {
            try {
                return std::stoi(value);
            } catch (...) {
                throw ConfigError("config key " + key + ": bad integer '" + value + "'");
            }
        };
        auto as_float = [&] {
            try {
                return std::stof(value);
            } catch (...) {
                throw ConfigError("config key " + key + ": bad number '" + value + "'");
            }
        };
        if (key == "schema_version") {
            if (as_int() != 1) throw ConfigError("unsupported schema_version " + value);
        } else if (key == "model.levels") {
            cfg.model.levels = as_int();
        } else if (key == "model.widths") {
            cfg.model.base_widths.clear();
            std::istringstream ws(value);
            std::string tok;
            while (std::getline(ws, tok, ',')) cfg.model.base_widths.push_back(std::stoi(tok));
        } else if (key == "model.scale_div") {
            cfg.model.scale_div = as_int();
        } else if (key == "model.attn_reduction") {
            cfg.model.attn_reduction = as_int();
        } else if (key == "model.input_res") {
            cfg.model.input_res = as_int();
        } else if (key == "translator.gen_base_channels") {
            cfg.translator.gen_base_channels = as_int();
        } else if (key == "translator.num_downsamples") {
            cfg.translator.num_downsamples = as_int();
        } else if (key == "translator.num_res_blocks") {
            cfg.translator.num_res_blocks = as_int();
        } else if (key == "translator.num_disc_scales") {
            cfg.translator.num_disc_scales = as_int();
        } else if (key == "translator.scale_div") {
            cfg.translator.scale_div = as_int();
            translator_scale_set = true;
        } else if (key == "trainer.lr_init") {
            cfg.trainer.lr_init = as_float();
        } else if (key == "trainer.lr_min") {
            cfg.trainer.lr_min = as_float();
        } else if (key == "trainer.beta1") {
            cfg.trainer.beta1 = as_float();
        } else if (key == "trainer.beta2") {
            cfg.trainer.beta2 = as_float();
        } else if (key == "trainer.epochs_stage12") {
            cfg.trainer.epochs_stage12 = as_int();
        } else if (key == "trainer.epochs_stage3") {
            cfg.trainer.epochs_stage3 = as_int();
        } else if (key == "trainer.batch_size") {
            cfg.trainer.batch_size = as_int();
        } else if (key == "trainer.restart_period_epochs") {
            cfg.trainer.restart_period_epochs = as_int();
        } else if (key == "trainer.master_seed") {
            cfg.trainer.master_seed = std::stoull(value);
        } else if (key == "loss.alpha") {
            cfg.trainer.weights.alpha = as_float();
        } else if (key == "loss.beta") {
            cfg.trainer.weights.beta = as_float();
        } else if (key == "loss.gamma") {
            cfg.trainer.weights.gamma = as_float();
        } else if (key == "loss.delta") {
            cfg.trainer.weights.delta = as_float();
        } else {
            throw ConfigError("unknown config key '" + key + "' (line " + std::to_string(lineno) +
                              ")");
        }
    }
    if (!translator_scale_set) cfg.translator.scale_div = cfg.model.scale_div;
    cfg.model.validate();
    cfg.translator.validate();
    cfg.trainer.validate();
    return cfg;
}

RunConfig RunConfig::load(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open config file " + path);
    std::ostringstream os;
    os << is.rdbuf();
    return parse(os.str());
}

std::vector<std::string> RunConfig::architecture_diff(const RunConfig& a, const RunConfig& b) {
    std::vector<std::string> diff;
    auto cmp = [&diff](const std::string& field, auto va, auto vb) {
        if (va != vb) {
            std::ostringstream os;
            os << field << ": " << va << " != " << vb;
            diff.push_back(os.str());
        }
    };
    cmp("model.levels", a.model.levels, b.model.levels);
    cmp("model.scale_div", a.model.scale_div, b.model.scale_div);
    cmp("model.attn_reduction", a.model.attn_reduction, b.model.attn_reduction);
    cmp("model.input_res", a.model.input_res, b.model.input_res);
    if (a.model.base_widths != b.model.base_widths) diff.push_back("model.widths differ");
    cmp("translator.gen_base_channels", a.translator.gen_base_channels,
        b.translator.gen_base_channels);
    cmp("translator.num_downsamples", a.translator.num_downsamples, b.translator.num_downsamples);
    cmp("translator.num_res_blocks", a.translator.num_res_blocks, b.translator.num_res_blocks);
    cmp("translator.num_disc_scales", a.translator.num_disc_scales, b.translator.num_disc_scales);
    cmp("translator.scale_div", a.translator.scale_div, b.translator.scale_div);
    return diff;
}

}  // namespace fid
