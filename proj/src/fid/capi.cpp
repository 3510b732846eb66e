#include "facedecomp.h"

#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "fid/gradcheck.hpp"
#include "fid/losses.hpp"
#include "fid/metrics.hpp"
#include "fid/pipeline.hpp"
#include "fid/png_io.hpp"
#include "fid/trainer.hpp"

namespace {

thread_local std::string g_last_error;

char* dup_string(const std::string& s) {
    char* out = static_cast<char*>(std::malloc(s.size() + 1));
    std::memcpy(out, s.c_str(), s.size() + 1);
    return out;
}

fd_status fail(fd_status code, const std::string& msg) {
    g_last_error = msg;
    return code;
}

template <typename Fn>
fd_status guarded(Fn&& fn) {
    try {
        g_last_error.clear();
        return fn();
    } catch (const fid::IoError& e) {
        return fail(FD_ERR_IO, e.what());
    } catch (const fid::ConfigError& e) {
        return fail(FD_ERR_CONFIG, e.what());
    } catch (const fid::ShapeError& e) {
        return fail(FD_ERR_CONFIG, e.what());
    } catch (const fid::NumericError& e) {
        return fail(FD_ERR_NUMERIC, e.what());
    } catch (const std::exception& e) {
        return fail(FD_ERR_NUMERIC, e.what());
    }
}

fd_status require_args(bool ok, const char* what) {
    if (ok) return FD_OK;
    return fail(FD_ERR_USAGE, std::string("invalid argument: ") + what);
}

fid::Tensor load_image(const std::string& path) {
    auto ends_with = [&](const char* suffix) {
        std::string s(suffix);
        return path.size() >= s.size() && path.compare(path.size() - s.size(), s.size(), s) == 0;
    };
    if (ends_with(".png") || ends_with(".PNG")) return fid::read_png(path);
    return fid::load_ntf(path);
}

}  // namespace

extern "C" {

struct fd_session {
    fid::Pipeline pipeline;
};

const char* fd_version(void) { return "facedecomp-1.0"; }

const char* fd_last_error(void) { return g_last_error.c_str(); }

void fd_string_free(char* s) { std::free(s); }

fd_status fd_gen_data(const char* out_dir, int n, int resolution, unsigned long long seed) {
    if (require_args(out_dir && n >= 20 && resolution >= 32, "out_dir, n >= 20, resolution >= 32"))
        return FD_ERR_USAGE;
    return guarded([&] {
        fid::write_dataset(out_dir, n, resolution, seed);
        auto manifest = fid::make_manifest(
            "gen-data",
            "n=" + std::to_string(n) + "\nresolution=" + std::to_string(resolution) + "\n", seed,
            {std::string(out_dir) + "/split.txt"});
        manifest.write(std::string(out_dir) + "/manifest.txt");
        return FD_OK;
    });
}

fd_status fd_train(int stage, const char* data_dir, const char* config_path,
                   const char* init_ckpt, const char* out_ckpt, const char* log_path) {
    if (require_args(data_dir && config_path && out_ckpt && (stage == 12 || stage == 3),
                     "stage must be 12 or 3 with data/config/output paths"))
        return FD_ERR_USAGE;
    if (stage == 3 && require_args(init_ckpt != nullptr, "stage 3 requires an initial checkpoint"))
        return FD_ERR_USAGE;
    return guarded([&] {
        fid::RunConfig cfg = fid::RunConfig::load(config_path);
        fid::LoadedDataset data = fid::load_dataset(data_dir);
        std::ofstream log_file;
        std::ostream* log = nullptr;
        if (log_path) {
            log_file.open(log_path, std::ios::app);
            if (!log_file) throw fid::IoError(std::string("cannot open log ") + log_path);
            log = &log_file;
        }
        if (stage == 12)
            fid::train_stage12(data, cfg, out_ckpt, log);
        else
            fid::train_stage3(data, cfg, init_ckpt, out_ckpt, log);
        auto manifest = fid::make_manifest("train-stage" + std::to_string(stage),
                                           cfg.serialize(), cfg.trainer.master_seed, {out_ckpt});
        manifest.write(std::string(out_ckpt) + ".manifest");
        return FD_OK;
    });
}

fd_status fd_session_open(const char* checkpoint_path, fd_session** out) {
    if (require_args(checkpoint_path && out, "checkpoint path and session slot"))
        return FD_ERR_USAGE;
    *out = nullptr;
    return guarded([&] {
        auto* s = new fd_session{fid::Pipeline::from_checkpoint(checkpoint_path)};
        *out = s;
        return FD_OK;
    });
}

void fd_session_close(fd_session* s) { delete s; }

int fd_session_resolution(const fd_session* s) {
    return s ? const_cast<fd_session*>(s)->pipeline.resolution() : 0;
}

int fd_session_has_translator(const fd_session* s) {
    return s && const_cast<fd_session*>(s)->pipeline.has_translator() ? 1 : 0;
}

fd_status fd_decompose(fd_session* s, const char* input_path, const char* out_dir) {
    if (require_args(s && input_path && out_dir, "session, input path, output dir"))
        return FD_ERR_USAGE;
    return guarded([&] {
        fid::Tensor input = load_image(input_path);
        fid::IntrinsicStack stack = s->pipeline.decompose(input);
        std::filesystem::create_directories(out_dir);
        std::string root(out_dir);
        const std::pair<const char*, const fid::Tensor*> passes[] = {
            {"albedo", &stack.albedo},           {"normal", &stack.normal},
            {"ao", &stack.ao},                   {"specular", &stack.specular},
            {"translucency", &stack.translucency}, {"raw_diffuse", &stack.raw_diffuse},
        };
        std::vector<std::string> outputs;
        for (const auto& [name, t] : passes) {
            fid::save_ntf(root + "/" + name + ".ntf", *t);
            fid::write_png(root + "/" + name + ".png", *t);
            outputs.push_back(root + "/" + name + ".ntf");
        }
        fid::write_png(root + "/contact_sheet.png", fid::contact_sheet(input, stack));
        outputs.push_back(root + "/contact_sheet.png");
        auto manifest = fid::make_manifest("decompose", s->pipeline.config().serialize(), 0,
                                           std::move(outputs));
        manifest.write(root + "/manifest.txt");
        return FD_OK;
    });
}

fd_status fd_eval(fd_session* s, const char* data_dir, char** report_out) {
    if (require_args(s && data_dir && report_out, "session, data dir, report slot"))
        return FD_ERR_USAGE;
    *report_out = nullptr;
    return guarded([&] {
        fid::LoadedDataset data = fid::load_dataset(data_dir);
        if (data.split.test.empty()) throw fid::ConfigError("dataset has an empty test split");
        fid::FeatureExtractor fx(0);
        fid::PassTable mean_table;
        bool first = true;
        for (int idx : data.split.test) {
            const fid::Sample& sample = data.samples[std::size_t(idx)];
            fid::IntrinsicStack pred = s->pipeline.decompose(sample.input_rgb);
            pred.mask = sample.stack.mask;  // score inside the face region
            fid::PassTable t = fid::eval_stack(fx, pred, sample.stack);
            if (first) {
                mean_table = t;
                first = false;
            } else {
                for (std::size_t r = 0; r < t.rows.size(); ++r) {
                    mean_table.rows[r].mse += t.rows[r].mse;
                    mean_table.rows[r].ssim += t.rows[r].ssim;
                    mean_table.rows[r].feature_dist += t.rows[r].feature_dist;
                    mean_table.rows[r].mae_deg += t.rows[r].mae_deg;
                }
            }
        }
        double n = double(data.split.test.size());
        for (fid::PassRow& r : mean_table.rows) {
            r.mse /= n;
            r.ssim /= n;
            r.feature_dist /= n;
            r.mae_deg /= n;
        }
        std::string text = fid::format_table(mean_table) + "\n" + fid::table_records(mean_table);
        *report_out = dup_string(text);
        return FD_OK;
    });
}

fd_status fd_selfcheck(fd_session* s, const char* data_dir, int max_shift_px,
                       double photometric_frac, unsigned long long seed, double results[3]) {
    if (require_args(s && data_dir && results && max_shift_px >= 0 && photometric_frac >= 0.0,
                     "session, data dir, non-negative jitter, result slot"))
        return FD_ERR_USAGE;
    return guarded([&] {
        fid::LoadedDataset data = fid::load_dataset(data_dir);
        if (data.split.test.empty()) throw fid::ConfigError("dataset has an empty test split");
        std::vector<fid::Sample> test;
        for (int idx : data.split.test) test.push_back(data.samples[std::size_t(idx)]);
        fid::DecomposeFn fn = [&](const fid::Tensor& img) { return s->pipeline.decompose(img); };
        fid::ConsistencyReport rep = fid::self_consistency(
            fn, test, max_shift_px, static_cast<float>(photometric_frac), seed);
        results[0] = rep.rmse;
        results[1] = rep.ssim;
        results[2] = rep.feature_dist;
        return FD_OK;
    });
}

fd_status fd_trace(const char* config_path, char** trace_out) {
    if (require_args(config_path && trace_out, "config path and output slot"))
        return FD_ERR_USAGE;
    *trace_out = nullptr;
    return guarded([&] {
        fid::RunConfig cfg = fid::RunConfig::load(config_path);
        fid::AlbedoNet net(cfg.model);
        fid::RefineNet refiner(cfg.model.scale_div);
        std::ostringstream os;
        for (const fid::TraceRow& row : net.trace()) os << fid::trace_row_str(row) << "\n";
        for (const fid::TraceRow& row : refiner.trace(cfg.model.input_res))
            os << fid::trace_row_str(row) << "\n";
        os << "receptive_field=" << fid::receptive_field(cfg.model) << "\n";
        *trace_out = dup_string(os.str());
        return FD_OK;
    });
}

fd_status fd_receptive_field(const char* config_path, int* rf_out) {
    if (require_args(config_path && rf_out, "config path and output slot"))
        return FD_ERR_USAGE;
    return guarded([&] {
        fid::RunConfig cfg = fid::RunConfig::load(config_path);
        *rf_out = fid::receptive_field(cfg.model);
        return FD_OK;
    });
}

fd_status fd_gradcheck(const char* config_path, char** report_out) {
    if (require_args(config_path && report_out, "config path and output slot"))
        return FD_ERR_USAGE;
    *report_out = nullptr;
    return guarded([&] {
        fid::RunConfig cfg = fid::RunConfig::load(config_path);
        cfg.model.validate();
        fid::AlbedoNet net(cfg.model);
        fid::RefineNet refiner(cfg.model.scale_div);
        fid::ParamStore ps;
        fid::Rng rng(fid::derive_seed(0, 0x9c));
        net.init_params(ps, rng);
        refiner.init_params(ps, rng);
        int r = cfg.model.input_res;
        fid::Tensor input = fid::Tensor::randn({1, 3, r, r}, rng, 0.5f);
        fid::Tensor target = fid::Tensor::randn({1, 3, 2 * r, 2 * r}, rng, 0.5f);
        fid::Tensor mask = fid::Tensor::zeros({1, 1, 2 * r, 2 * r});
        for (std::int64_t i = 0; i < mask.numel(); ++i) mask.data()[i] = 1.0f;
        auto f = [&](fid::ParamStore& p) {
            fid::Tensor coarse = net.forward(input, p);
            fid::Tensor refined = refiner.forward(coarse, p);
            return fid::masked_mse(refined, target, mask);
        };
        fid::GradCheckReport report = fid::grad_check(f, ps, 1e-3, 1e-2, 2);
        std::ostringstream os;
        os << "parameters=" << ps.param_count() << "\n";
        for (const auto& e : report.entries)
            os << e.name << " checked=" << e.checked << " max_rel=" << e.max_rel_error << "\n";
        os << "max_rel_error=" << report.max_rel_error << "\n";
        *report_out = dup_string(os.str());
        if (report.max_rel_error > 1e-2)
            throw fid::NumericError("gradient check failed: max relative error " +
                                    std::to_string(report.max_rel_error));
        return FD_OK;
    });
}

}  // extern "C"
