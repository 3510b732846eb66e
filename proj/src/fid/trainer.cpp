#include "fid/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <ostream>

#include "fid/albedo_net.hpp"
#include "fid/losses.hpp"
#include "fid/optimizer.hpp"
#include "fid/refine_translate.hpp"

namespace fid {

namespace {

constexpr std::uint32_t kStateVersion = 1;

std::int64_t checked_resolution(const LoadedDataset& data) {
    if (data.samples.empty()) throw ConfigError("trainer: empty dataset");
    return data.resolution;
}

// Stacks per-sample [C,H,W] tensors into a detached [B,C,H,W] batch.
Tensor stack_batch(const std::vector<const Tensor*>& parts) {
    const Tensor& first = *parts.front();
    std::int64_t per = first.numel();
    Tensor out = Tensor::zeros({static_cast<std::int64_t>(parts.size()), first.dim(0),
                                first.dim(1), first.dim(2)});
    for (std::size_t b = 0; b < parts.size(); ++b) {
        if (parts[b]->shape() != first.shape())
            throw ShapeError("trainer: inconsistent sample shapes in batch");
        std::memcpy(out.data() + std::int64_t(b) * per, parts[b]->data(),
                    static_cast<std::size_t>(per) * sizeof(float));
    }
    return out;
}

struct Batch {
    Tensor input;   // [B,3,R,R] in [0,1]
    Tensor albedo;  // [B,3,R,R] in [0,1]
    Tensor mask;    // [B,1,R,R]
    PassBundle gt_passes;  // [-1,1] encoded, only filled when requested
};

Batch make_batch(const LoadedDataset& data, const std::vector<int>& indices, std::size_t begin,
                 std::size_t end, bool with_passes) {
    std::vector<const Tensor*> in, al, ma, ao, no, sp, tr, rd;
    for (std::size_t i = begin; i < end; ++i) {
        const Sample& s = data.samples[std::size_t(indices[i])];
        in.push_back(&s.input_rgb);
        al.push_back(&s.stack.albedo);
        ma.push_back(&s.stack.mask);
        if (with_passes) {
            ao.push_back(&s.stack.ao);
            no.push_back(&s.stack.normal);
            sp.push_back(&s.stack.specular);
            tr.push_back(&s.stack.translucency);
            rd.push_back(&s.stack.raw_diffuse);
        }
    }
    Batch b;
    b.input = stack_batch(in);
    b.albedo = stack_batch(al);
    b.mask = stack_batch(ma);
    if (with_passes) {
        b.gt_passes.ao = to_signed(stack_batch(ao));
        b.gt_passes.normal = to_signed(stack_batch(no));
        b.gt_passes.specular = to_signed(stack_batch(sp));
        b.gt_passes.translucency = to_signed(stack_batch(tr));
        b.gt_passes.raw_diffuse = to_signed(stack_batch(rd));
    }
    return b;
}

Tensor refined_albedo(const AlbedoNet& net, const RefineNet& refiner, const Tensor& input01,
                      ParamStore& ps) {
    Tensor x = to_signed(input01);
    int r = net.config().input_res;
    Tensor coarse = net.forward(bilinear_resize(x, r, r), ps);
    return refiner.forward(coarse, ps);
}

void require_finite(double v, std::uint64_t step) {
    if (!std::isfinite(v))
        throw NumericError("training diverged (non-finite loss) at step " +
                           std::to_string(step) + "; last best checkpoint retained");
}

struct TrainState {
    std::uint64_t epochs_done = 0;
    double best_val = 0.0;
    bool has_best = false;
    ParamStore params;
    std::vector<Adam> optimizers;
};

void save_state(const std::string& path, const RunConfig& cfg, const TrainState& st,
                std::uint32_t stage) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot write training state " + path);
    os.write("FDTS", 4);
    os.write(reinterpret_cast<const char*>(&kStateVersion), 4);
    os.write(reinterpret_cast<const char*>(&stage), 4);
    os.write(reinterpret_cast<const char*>(&st.epochs_done), 8);
    os.write(reinterpret_cast<const char*>(&st.best_val), 8);
    std::uint8_t has_best = st.has_best ? 1 : 0;
    os.write(reinterpret_cast<const char*>(&has_best), 1);
    std::string text = cfg.serialize();
    std::uint32_t len = static_cast<std::uint32_t>(text.size());
    os.write(reinterpret_cast<const char*>(&len), 4);
    os.write(text.data(), len);
    st.params.save_entries(os);
    std::uint32_t nopt = static_cast<std::uint32_t>(st.optimizers.size());
    os.write(reinterpret_cast<const char*>(&nopt), 4);
    for (const Adam& a : st.optimizers) a.save(os);
    if (!os) throw IoError("failed writing training state " + path);
}

bool load_state(const std::string& path, const RunConfig& cfg, std::uint32_t stage,
                TrainState& st) {
    std::ifstream is(path, std::ios::binary);
    if (!is) return false;
    char magic[4];
    is.read(magic, 4);
    std::uint32_t version = 0, file_stage = 0;
    is.read(reinterpret_cast<char*>(&version), 4);
    is.read(reinterpret_cast<char*>(&file_stage), 4);
    if (!is || std::memcmp(magic, "FDTS", 4) != 0 || version != kStateVersion)
        throw IoError("bad training state file " + path);
    if (file_stage != stage)
        throw ConfigError("training state " + path + " belongs to a different stage");
    is.read(reinterpret_cast<char*>(&st.epochs_done), 8);
    is.read(reinterpret_cast<char*>(&st.best_val), 8);
    std::uint8_t has_best = 0;
    is.read(reinterpret_cast<char*>(&has_best), 1);
    st.has_best = has_best != 0;
    std::uint32_t len = 0;
    is.read(reinterpret_cast<char*>(&len), 4);
    std::string text(len, '\0');
    is.read(text.data(), len);
    if (!is) throw IoError("truncated training state " + path);
    auto diff = RunConfig::architecture_diff(cfg, RunConfig::parse(text));
    if (!diff.empty()) {
        std::string msg = "training state architecture mismatch:";
        for (const std::string& d : diff) msg += "\n  " + d;
        throw ConfigError(msg);
    }
    st.params = ParamStore::load_entries(is);
    std::uint32_t nopt = 0;
    is.read(reinterpret_cast<char*>(&nopt), 4);
    st.optimizers.clear();
    for (std::uint32_t i = 0; i < nopt; ++i) st.optimizers.push_back(Adam::load(is));
    if (!is) throw IoError("truncated training state " + path);
    return true;
}

double validate_stage12(const LoadedDataset& data, const AlbedoNet& net, const RefineNet& refiner,
                        ParamStore& ps) {
    NoGradGuard guard;
    double acc = 0.0;
    for (int idx : data.split.val) {
        Batch b = make_batch(data, {idx}, 0, 1, false);
        Tensor pred = refined_albedo(net, refiner, b.input, ps);
        acc += static_cast<double>(masked_mse(pred, to_signed(b.albedo), b.mask).item());
    }
    return acc / double(data.split.val.size());
}

}  // namespace

LoadedDataset load_dataset(const std::string& root) {
    LoadedDataset data;
    data.split = read_split(root + "/split.txt");
    int max_index = -1;
    for (const auto* set : {&data.split.train, &data.split.val, &data.split.test})
        for (int i : *set) max_index = std::max(max_index, i);
    if (max_index < 0) throw IoError("dataset split at " + root + " is empty");
    data.samples.reserve(std::size_t(max_index) + 1);
    for (int i = 0; i <= max_index; ++i)
        data.samples.push_back(load_sample(sample_dir(root, i)));
    data.resolution = static_cast<int>(data.samples.front().input_rgb.dim(1));
    return data;
}

Tensor to_signed(const Tensor& t) {
    Tensor out = Tensor::zeros(t.shape());
    for (std::int64_t i = 0; i < t.numel(); ++i) out.data()[i] = t.data()[i] * 2.0f - 1.0f;
    return out;
}

Tensor to_unit(const Tensor& t) {
    Tensor out = Tensor::zeros(t.shape());
    for (std::int64_t i = 0; i < t.numel(); ++i) out.data()[i] = (t.data()[i] + 1.0f) * 0.5f;
    return out;
}

std::uint64_t prefix_hash(const ParamStore& ps, const std::string& prefix) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto mix = [&](const void* p, std::size_t n) {
        const unsigned char* b = static_cast<const unsigned char*>(p);
        for (std::size_t i = 0; i < n; ++i) h = (h ^ b[i]) * 0x100000001b3ULL;
    };
    for (const auto& [name, t] : ps.entries()) {
        if (name.rfind(prefix, 0) != 0) continue;
        mix(name.data(), name.size());
        mix(t.data(), static_cast<std::size_t>(t.numel()) * sizeof(float));
    }
    return h;
}

TrainResult train_stage12(const LoadedDataset& data, const RunConfig& cfg,
                          const std::string& out_ckpt, std::ostream* log,
                          int stop_after_epochs) {
    cfg.model.validate();
    cfg.trainer.validate();
    std::int64_t res = checked_resolution(data);
    if (res != 2 * cfg.model.input_res)
        throw ConfigError("dataset resolution " + std::to_string(res) +
                          " does not match model input_res " +
                          std::to_string(cfg.model.input_res) + " (expects data at 2x)");
    AlbedoNet net(cfg.model);
    RefineNet refiner(cfg.model.scale_div);
    FeatureExtractor fx(0);
    const TrainConfig& tc = cfg.trainer;

    TrainState st;
    std::string state_path = out_ckpt + ".state";
    if (!load_state(state_path, cfg, 12, st)) {
        Rng rng(derive_seed(tc.master_seed, 0x1217));
        net.init_params(st.params, rng);
        refiner.init_params(st.params, rng);
        st.optimizers.emplace_back(tc.beta1, tc.beta2);
    }
    Adam& adam = st.optimizers.at(0);

    std::size_t n_train = data.split.train.size();
    if (n_train == 0) throw ConfigError("trainer: empty training split");
    std::uint64_t spe = (n_train + std::size_t(tc.batch_size) - 1) / std::size_t(tc.batch_size);
    std::uint64_t total_steps = spe * std::uint64_t(tc.epochs_stage12);
    std::uint64_t period = tc.restart_period_epochs > 0
                               ? spe * std::uint64_t(tc.restart_period_epochs)
                               : total_steps;

    TrainResult result;
    result.best_val = st.best_val;
    int epochs_this_run = 0;
    for (std::uint64_t epoch = st.epochs_done; epoch < std::uint64_t(tc.epochs_stage12);
         ++epoch) {
        std::vector<int> order = data.split.train;
        Rng shuffle_rng(derive_seed(tc.master_seed, 0xe90c + epoch));
        for (std::size_t i = order.size() - 1; i > 0; --i) {
            std::size_t j = std::size_t(shuffle_rng.below(i + 1));
            std::swap(order[i], order[j]);
        }
        for (std::uint64_t b = 0; b < spe; ++b) {
            std::uint64_t step = epoch * spe + b;
            float lr = cosine_restart_lr(std::int64_t(step), std::int64_t(period), tc.lr_init,
                                         tc.lr_min);
            std::size_t begin = std::size_t(b) * std::size_t(tc.batch_size);
            std::size_t end = std::min(order.size(), begin + std::size_t(tc.batch_size));
            Batch batch = make_batch(data, order, begin, end, false);
            st.params.zero_grads();
            Tensor pred = refined_albedo(net, refiner, batch.input, st.params);
            Rng patch_rng(derive_seed(tc.master_seed, 0xa0000000ULL + step));
            LossBreakdown lb = total_loss(fx, pred, to_signed(batch.albedo), batch.mask,
                                          tc.weights, patch_rng);
            double total = lb.total.item();
            require_finite(total, step);
            backward(lb.total);
            adam.step(st.params, lr);
            result.step_losses.push_back(total);
            if (log) {
                double gmin = 1.0, gmax = 0.0;
                {
                    NoGradGuard guard;
                    for (int l = 0; l < cfg.model.levels; ++l) {
                        double g = net.gate(st.params, l).item();
                        gmin = std::min(gmin, g);
                        gmax = std::max(gmax, g);
                    }
                }
                *log << "s12 step=" << step << " lr=" << lr << " mse=" << lb.mse.item()
                     << " perc=" << lb.perceptual.item() << " edge=" << lb.edge.item()
                     << " patch=" << lb.patch.item() << " total=" << total
                     << " gate_min=" << gmin << " gate_max=" << gmax << "\n";
            }
        }
        double val = validate_stage12(data, net, refiner, st.params);
        require_finite(val, epoch * spe + spe - 1);
        result.val_curve.push_back(val);
        if (!st.has_best || val < st.best_val) {
            st.best_val = val;
            st.has_best = true;
            Checkpoint ckpt;
            ckpt.config_text = cfg.serialize();
            ckpt.params = st.params;
            save_checkpoint(out_ckpt, ckpt);
        }
        st.epochs_done = epoch + 1;
        save_state(state_path, cfg, st, 12);
        if (log)
            *log << "s12 epoch=" << epoch << " val_mse=" << val << " best=" << st.best_val
                 << "\n";
        if (stop_after_epochs > 0 && ++epochs_this_run >= stop_after_epochs) break;
    }
    result.best_val = st.best_val;
    return result;
}

TrainResult train_stage3(const LoadedDataset& data, const RunConfig& cfg,
                         const std::string& init_ckpt, const std::string& out_ckpt,
                         std::ostream* log, int stop_after_epochs) {
    cfg.model.validate();
    cfg.translator.validate();
    cfg.trainer.validate();
    std::int64_t res = checked_resolution(data);
    if (res != 2 * cfg.model.input_res)
        throw ConfigError("dataset resolution " + std::to_string(res) +
                          " does not match model input_res " +
                          std::to_string(cfg.model.input_res) + " (expects data at 2x)");
    AlbedoNet net(cfg.model);
    RefineNet refiner(cfg.model.scale_div);
    PassTranslator translator(cfg.translator);
    PatchDiscriminator disc(cfg.translator);
    FeatureExtractor fx(0);
    const TrainConfig& tc = cfg.trainer;

    TrainState st;
    std::string state_path = out_ckpt + ".state";
    if (!load_state(state_path, cfg, 3, st)) {
        Checkpoint init = load_checkpoint(init_ckpt);
        auto diff = RunConfig::architecture_diff(cfg, RunConfig::parse(init.config_text));
        if (!diff.empty()) {
            std::string msg = "checkpoint architecture mismatch:";
            for (const std::string& d : diff) msg += "\n  " + d;
            throw ConfigError(msg);
        }
        st.params = std::move(init.params);
        if (!st.params.contains("s2.c0.w"))
            throw ConfigError("stage 3 requires a stage 1-2 checkpoint");
        Rng rng(derive_seed(tc.master_seed, 0x5333));
        translator.init_params(st.params, rng);
        disc.init_params(st.params, rng);
        st.optimizers.emplace_back(tc.beta1, tc.beta2);  // generator
        st.optimizers.emplace_back(tc.beta1, tc.beta2);  // discriminator
    }
    Adam& adam_g = st.optimizers.at(0);
    Adam& adam_d = st.optimizers.at(1);

    TrainResult result;
    result.frozen_hash_before = prefix_hash(st.params, "s1.") * 31 ^ prefix_hash(st.params, "s2.");

    std::size_t n_train = data.split.train.size();
    if (n_train == 0) throw ConfigError("trainer: empty training split");
    std::uint64_t spe = (n_train + std::size_t(tc.batch_size) - 1) / std::size_t(tc.batch_size);
    std::uint64_t total_steps = spe * std::uint64_t(tc.epochs_stage3);
    std::uint64_t period = tc.restart_period_epochs > 0
                               ? spe * std::uint64_t(tc.restart_period_epochs)
                               : total_steps;

    auto perceptual_term = [&](const PassBundle& real, const PassBundle& fake) {
        Tensor acc;
        auto rs = real.all();
        auto fs = fake.all();
        for (std::size_t i = 0; i < rs.size(); ++i) {
            Tensor t = feature_perceptual(fx, *fs[i], *rs[i]);
            acc = acc.defined() ? add(acc, t) : t;
        }
        return scale(acc, 1.0 / double(rs.size()));
    };

    auto eval_val = [&]() {
        NoGradGuard guard;
        double acc = 0.0;
        for (int idx : data.split.val) {
            Batch b = make_batch(data, {idx}, 0, 1, true);
            Tensor albedo = refined_albedo(net, refiner, b.input, st.params);
            PassBundle fake = translator.forward(albedo, st.params);
            GanLosses gl = gan_losses(b.gt_passes, fake, albedo, disc, st.params);
            acc += double(gl.feature_matching.item()) +
                   double(perceptual_term(b.gt_passes, fake).item());
        }
        return acc / double(data.split.val.size());
    };

    int epochs_this_run = 0;
    for (std::uint64_t epoch = st.epochs_done; epoch < std::uint64_t(tc.epochs_stage3);
         ++epoch) {
        std::vector<int> order = data.split.train;
        Rng shuffle_rng(derive_seed(tc.master_seed, 0x390c + epoch));
        for (std::size_t i = order.size() - 1; i > 0; --i) {
            std::size_t j = std::size_t(shuffle_rng.below(i + 1));
            std::swap(order[i], order[j]);
        }
        for (std::uint64_t b = 0; b < spe; ++b) {
            std::uint64_t step = epoch * spe + b;
            float lr = cosine_restart_lr(std::int64_t(step), std::int64_t(period), tc.lr_init,
                                         tc.lr_min);
            std::size_t begin = std::size_t(b) * std::size_t(tc.batch_size);
            std::size_t end = std::min(order.size(), begin + std::size_t(tc.batch_size));
            Batch batch = make_batch(data, order, begin, end, true);
            Tensor albedo;
            {
                NoGradGuard guard;
                albedo = refined_albedo(net, refiner, batch.input, st.params);
            }
            PassBundle fake = translator.forward(albedo, st.params);
            GanLosses gl = gan_losses(batch.gt_passes, fake, albedo, disc, st.params);
            Tensor perc = perceptual_term(batch.gt_passes, fake);
            double d_loss = gl.d.item(), g_adv = gl.g_adv.item(), fm = gl.feature_matching.item(),
                   pv = perc.item();
            require_finite(d_loss + g_adv + fm + pv, step);
            // Discriminator step, then generator step from the same tape.
            st.params.zero_grads();
            backward(gl.d);
            adam_d.step(st.params, lr, "s3.disc");
            Tensor g_total = add(gl.g_adv, scale(add(gl.feature_matching, perc), 10.0));
            st.params.zero_grads();
            backward(g_total);
            adam_g.step(st.params, lr, "s3.gen.");
            result.step_losses.push_back(fm + pv);
            if (log)
                *log << "s3 step=" << step << " lr=" << lr << " d=" << d_loss
                     << " g_adv=" << g_adv << " fm=" << fm << " perc=" << pv << "\n";
        }
        double val = eval_val();
        require_finite(val, epoch * spe + spe - 1);
        result.val_curve.push_back(val);
        if (!st.has_best || val < st.best_val) {
            st.best_val = val;
            st.has_best = true;
            Checkpoint ckpt;
            ckpt.config_text = cfg.serialize();
            ckpt.params = st.params;
            save_checkpoint(out_ckpt, ckpt);
        }
        st.epochs_done = epoch + 1;
        save_state(state_path, cfg, st, 3);
        if (log)
            *log << "s3 epoch=" << epoch << " val_fm_perc=" << val << " best=" << st.best_val
                 << "\n";
        if (stop_after_epochs > 0 && ++epochs_this_run >= stop_after_epochs) break;
    }
    result.best_val = st.best_val;
    result.frozen_hash_after = prefix_hash(st.params, "s1.") * 31 ^ prefix_hash(st.params, "s2.");
    return result;
}

}  // namespace fid
