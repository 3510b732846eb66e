#include "fid/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "fid/param_store.hpp"
#include "json.hpp"

namespace fid {

namespace {

constexpr double kPi = 3.14159265358979323846;

struct Blob {
    double cx, cy, rx, ry, amp;
};

struct Wave {
    double fx, fy, phase, amp;
};

struct Patch {
    double cx, cy, rx, ry;
    std::array<double, 3> color;
};

// Continuous scene fields, sampled analytically at pixel centers so every
// resolution sees the same underlying scene.
struct SceneFields {
    std::vector<Blob> blobs;
    std::array<double, 3> albedo_base;
    std::array<std::array<Wave, 2>, 3> albedo_waves;
    std::vector<Patch> patches;
    double spec_base, spec_amp;
    Wave spec_wave;
    double trans_base, trans_amp;
    Wave trans_wave;
};

SceneFields make_fields(std::uint64_t seed) {
    Rng rng(derive_seed(seed, 0x6e0));
    SceneFields f;
    int nblobs = 2 + static_cast<int>(rng.below(4));
    for (int i = 0; i < nblobs; ++i) {
        Blob b;
        b.cx = rng.uniform(0.2, 0.8);
        b.cy = rng.uniform(0.2, 0.8);
        b.rx = rng.uniform(0.14, 0.3);
        b.ry = rng.uniform(0.14, 0.3);
        b.amp = rng.uniform(0.02, 0.05);
        f.blobs.push_back(b);
    }
    for (int c = 0; c < 3; ++c) {
        f.albedo_base[c] = rng.uniform(0.35, 0.7);
        for (int w = 0; w < 2; ++w)
            f.albedo_waves[c][w] = {rng.uniform(0.5, 3.0), rng.uniform(0.5, 3.0),
                                    rng.uniform(0.0, 2.0 * kPi), rng.uniform(0.04, 0.12)};
    }
    int npatches = 1 + static_cast<int>(rng.below(3));
    for (int i = 0; i < npatches; ++i) {
        Patch p;
        p.cx = rng.uniform(0.25, 0.75);
        p.cy = rng.uniform(0.25, 0.75);
        p.rx = rng.uniform(0.05, 0.16);
        p.ry = rng.uniform(0.05, 0.16);
        for (int c = 0; c < 3; ++c) p.color[c] = rng.uniform(0.2, 0.9);
        f.patches.push_back(p);
    }
    f.spec_base = rng.uniform(0.1, 0.3);
    f.spec_amp = rng.uniform(0.05, 0.15);
    f.spec_wave = {rng.uniform(1.0, 3.0), rng.uniform(1.0, 3.0), rng.uniform(0.0, 2.0 * kPi), 1.0};
    f.trans_base = rng.uniform(0.1, 0.3);
    f.trans_amp = rng.uniform(0.05, 0.15);
    f.trans_wave = {rng.uniform(1.0, 3.0), rng.uniform(1.0, 3.0), rng.uniform(0.0, 2.0 * kPi), 1.0};
    return f;
}

double height(const SceneFields& f, double u, double v) {
    double h = 0.0;
    for (const Blob& b : f.blobs) {
        double du = (u - b.cx) / b.rx, dv = (v - b.cy) / b.ry;
        h += b.amp * std::exp(-du * du - dv * dv);
    }
    return h;
}

void height_grad(const SceneFields& f, double u, double v, double& hu, double& hv) {
    hu = hv = 0.0;
    for (const Blob& b : f.blobs) {
        double du = (u - b.cx) / b.rx, dv = (v - b.cy) / b.ry;
        double e = b.amp * std::exp(-du * du - dv * dv);
        hu += e * (-2.0 * du / b.rx);
        hv += e * (-2.0 * dv / b.ry);
    }
}

// The height field lives on the unit square; slopes are exaggerated by a
// fixed factor so normals tilt noticeably without extreme foreshortening.
constexpr double kSlopeScale = 2.0;

std::array<double, 3> surface_normal(const SceneFields& f, double u, double v) {
    double hu, hv;
    height_grad(f, u, v, hu, hv);
    double nx = -hu * kSlopeScale, ny = -hv * kSlopeScale, nz = 1.0;
    double len = std::sqrt(nx * nx + ny * ny + nz * nz);
    return {nx / len, ny / len, nz / len};
}

double ambient_occlusion(const SceneFields& f, double u, double v) {
    const int kDirs = 16, kSteps = 8;
    const double kStep = 0.03;
    double h0 = height(f, u, v);
    double acc = 0.0;
    for (int k = 0; k < kDirs; ++k) {
        double phi = 2.0 * kPi * k / kDirs;
        double dx = std::cos(phi), dy = std::sin(phi);
        double horizon = 0.0;  // max tangent of the elevation angle
        for (int t = 1; t <= kSteps; ++t) {
            double d = t * kStep;
            double dh = (height(f, u + dx * d, v + dy * d) - h0) * kSlopeScale;
            horizon = std::max(horizon, dh / d);
        }
        acc += 1.0 - horizon / std::sqrt(1.0 + horizon * horizon);  // 1 - sin(atan(h))
    }
    return acc / kDirs;
}

std::array<double, 3> albedo_at(const SceneFields& f, double u, double v) {
    std::array<double, 3> a;
    for (int c = 0; c < 3; ++c) {
        double x = f.albedo_base[c];
        for (const Wave& w : f.albedo_waves[c])
            x += w.amp * std::sin(2.0 * kPi * (w.fx * u + w.fy * v) + w.phase);
        a[c] = std::clamp(x, 0.15, 0.95);
    }
    for (const Patch& p : f.patches) {
        double du = (u - p.cx) / p.rx, dv = (v - p.cy) / p.ry;
        if (du * du + dv * dv <= 1.0) a = {p.color[0], p.color[1], p.color[2]};
    }
    return a;
}

double coeff_at(double base, double amp, const Wave& w, double u, double v) {
    double x = base + amp * std::sin(2.0 * kPi * (w.fx * u + w.fy * v) + w.phase);
    return std::clamp(x, 0.0, 1.0);
}

bool in_mask(double u, double v) {
    double du = (u - 0.5) / 0.42, dv = (v - 0.5) / 0.46;
    return du * du + dv * dv <= 1.0;
}

struct Shaded {
    std::array<double, 3> raw_diffuse;
    std::array<double, 3> input;
    double spec_term;
    double back;  // back-light factor max(0, -n.l)
};

// One shading model for generation and re-rendering, so the round trip is
// exact by construction.
Shaded shade(const std::array<double, 3>& albedo, const std::array<double, 3>& n, double ao,
             double spec, double trans, const std::array<float, 3>& l, double intensity,
             double ambient) {
    double ndl = n[0] * l[0] + n[1] * l[1] + n[2] * l[2];
    double irr = ambient * ao + intensity * std::max(0.0, ndl);
    // Blinn-Phong half vector with the viewer on +z.
    double hx = l[0], hy = l[1], hz = l[2] + 1.0;
    double hlen = std::sqrt(hx * hx + hy * hy + hz * hz);
    double ndh = std::max(0.0, (n[0] * hx + n[1] * hy + n[2] * hz) / hlen);
    Shaded out;
    out.spec_term = spec * intensity * std::pow(ndh, 24.0);
    out.back = std::max(0.0, -ndl);
    for (int c = 0; c < 3; ++c) {
        out.raw_diffuse[c] = std::clamp(albedo[c] * irr, 0.0, 1.0);
        double trans_term = trans * albedo[c] * intensity * out.back;
        out.input[c] = std::clamp(out.raw_diffuse[c] + out.spec_term + trans_term, 0.0, 1.0);
    }
    return out;
}

void check_unit(const std::array<float, 3>& l) {
    double n = std::sqrt(double(l[0]) * l[0] + double(l[1]) * l[1] + double(l[2]) * l[2]);
    if (std::fabs(n - 1.0) > 1e-4) throw Error("light_dir must be a unit vector");
}

}  // namespace

SceneSpec make_scene_spec(std::uint64_t seed) {
    Rng rng(derive_seed(seed, 0x11647));
    SceneSpec spec;
    spec.seed = seed;
    double lx = rng.uniform(-0.45, 0.45), ly = rng.uniform(-0.45, 0.45);
    double lz = rng.uniform(0.7, 1.0);
    double len = std::sqrt(lx * lx + ly * ly + lz * lz);
    spec.light_dir = {static_cast<float>(lx / len), static_cast<float>(ly / len),
                      static_cast<float>(lz / len)};
    spec.light_intensity = static_cast<float>(rng.uniform(0.6, 1.4));
    spec.ambient = static_cast<float>(rng.uniform(0.05, 0.3));
    return spec;
}

namespace {

Sample render_fields(const SceneFields& fields, const SceneSpec& spec, int resolution) {
    if (resolution < 32 || resolution > 512)
        throw ConfigError("sample resolution must be in [32, 512]");
    check_unit(spec.light_dir);
    int r = resolution;
    Sample s;
    s.spec = spec;
    s.input_rgb = Tensor::zeros({3, r, r});
    s.stack.albedo = Tensor::zeros({3, r, r});
    s.stack.normal = Tensor::zeros({3, r, r});
    s.stack.ao = Tensor::zeros({3, r, r});
    s.stack.specular = Tensor::zeros({3, r, r});
    s.stack.translucency = Tensor::zeros({3, r, r});
    s.stack.raw_diffuse = Tensor::zeros({3, r, r});
    s.stack.mask = Tensor::zeros({1, r, r});
    std::int64_t plane = static_cast<std::int64_t>(r) * r;

#pragma omp parallel for schedule(static)
    for (int y = 0; y < r; ++y) {
        for (int x = 0; x < r; ++x) {
            double u = (x + 0.5) / r, v = (y + 0.5) / r;
            std::int64_t i = static_cast<std::int64_t>(y) * r + x;
            auto albedo = albedo_at(fields, u, v);
            auto n = surface_normal(fields, u, v);
            double ao = ambient_occlusion(fields, u, v);
            double spec_c = coeff_at(fields.spec_base, fields.spec_amp, fields.spec_wave, u, v);
            double trans_c = coeff_at(fields.trans_base, fields.trans_amp, fields.trans_wave, u, v);
            Shaded sh = shade(albedo, n, ao, spec_c, trans_c, spec.light_dir,
                              spec.light_intensity, spec.ambient);
            for (int c = 0; c < 3; ++c) {
                s.stack.albedo.data()[c * plane + i] = static_cast<float>(albedo[c]);
                s.stack.normal.data()[c * plane + i] = static_cast<float>((n[c] + 1.0) / 2.0);
                s.stack.ao.data()[c * plane + i] = static_cast<float>(ao);
                s.stack.specular.data()[c * plane + i] = static_cast<float>(spec_c);
                s.stack.translucency.data()[c * plane + i] = static_cast<float>(trans_c);
                s.stack.raw_diffuse.data()[c * plane + i] = static_cast<float>(sh.raw_diffuse[c]);
                s.input_rgb.data()[c * plane + i] = static_cast<float>(sh.input[c]);
            }
            s.stack.mask.data()[i] = in_mask(u, v) ? 1.0f : 0.0f;
        }
    }
    return s;
}

}  // namespace

Sample generate_from_spec(const SceneSpec& spec, int resolution) {
    return render_fields(make_fields(spec.seed), spec, resolution);
}

Sample generate(std::uint64_t seed, int resolution) {
    return generate_from_spec(make_scene_spec(seed), resolution);
}

Sample generate_flat(const SceneSpec& spec, int resolution) {
    SceneFields fields = make_fields(spec.seed);
    for (Blob& b : fields.blobs) b.amp = 0.0;
    return render_fields(fields, spec, resolution);
}

Tensor rerender(const IntrinsicStack& stack, const std::array<float, 3>& light_dir,
                float light_intensity, float ambient) {
    check_unit(light_dir);
    if (stack.albedo.rank() != 3 || stack.albedo.dim(0) != 3)
        throw ShapeError("rerender expects [3,R,R] passes");
    std::int64_t r = stack.albedo.dim(1);
    std::int64_t plane = r * stack.albedo.dim(2);
    Tensor out = Tensor::zeros(stack.albedo.shape());
    for (std::int64_t i = 0; i < plane; ++i) {
        std::array<double, 3> albedo, n;
        for (int c = 0; c < 3; ++c) {
            albedo[c] = stack.albedo.data()[c * plane + i];
            n[c] = stack.normal.data()[c * plane + i] * 2.0 - 1.0;
        }
        double ao = stack.ao.data()[i];
        double spec_c = stack.specular.data()[i];
        double trans_c = stack.translucency.data()[i];
        Shaded sh = shade(albedo, n, ao, spec_c, trans_c, light_dir, light_intensity, ambient);
        for (int c = 0; c < 3; ++c)
            out.data()[c * plane + i] = static_cast<float>(sh.input[c]);
    }
    return out;
}

PerturbParams sample_perturbation(int max_shift_px, float photometric_frac, Rng& rng) {
    PerturbParams p;
    p.shift_x = rng.range_int(-max_shift_px, max_shift_px);
    p.shift_y = rng.range_int(-max_shift_px, max_shift_px);
    p.brightness = static_cast<float>(rng.uniform(1.0 - photometric_frac, 1.0 + photometric_frac));
    p.saturation = static_cast<float>(rng.uniform(1.0 - photometric_frac, 1.0 + photometric_frac));
    return p;
}

Tensor apply_perturbation(const Tensor& image, const PerturbParams& params) {
    if (image.rank() != 3 || image.dim(0) != 3)
        throw ShapeError("perturb expects [3,H,W], got " + shape_str(image.shape()));
    std::int64_t h = image.dim(1), w = image.dim(2);
    std::int64_t plane = h * w;
    Tensor out = Tensor::zeros(image.shape());
    for (std::int64_t y = 0; y < h; ++y)
        for (std::int64_t x = 0; x < w; ++x) {
            std::int64_t sy = std::clamp<std::int64_t>(y - params.shift_y, 0, h - 1);
            std::int64_t sx = std::clamp<std::int64_t>(x - params.shift_x, 0, w - 1);
            double rgb[3];
            for (int c = 0; c < 3; ++c) rgb[c] = image.data()[c * plane + sy * w + sx];
            double gray = (rgb[0] + rgb[1] + rgb[2]) / 3.0;
            for (int c = 0; c < 3; ++c) {
                double v = gray + params.saturation * (rgb[c] - gray);
                out.data()[c * plane + y * w + x] =
                    static_cast<float>(std::clamp(params.brightness * v, 0.0, 1.0));
            }
        }
    return out;
}

Tensor perturb(const Tensor& image, int max_shift_px, float photometric_frac, Rng& rng) {
    if (max_shift_px > image.dim(1) / 8)
        throw ConfigError("perturb: max_shift_px must be <= R/8");
    return apply_perturbation(image, sample_perturbation(max_shift_px, photometric_frac, rng));
}

DatasetSplit dataset_split(int num_samples, std::uint64_t master_seed) {
    if (num_samples < 20) throw ConfigError("dataset_split needs at least 20 samples");
    std::vector<int> idx(static_cast<std::size_t>(num_samples));
    for (int i = 0; i < num_samples; ++i) idx[static_cast<std::size_t>(i)] = i;
    Rng rng(derive_seed(master_seed, 0x5917));
    for (int i = num_samples - 1; i > 0; --i) {
        int j = static_cast<int>(rng.below(static_cast<std::uint64_t>(i + 1)));
        std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
    }
    int hold = std::max(1, num_samples / 20);
    DatasetSplit split;
    split.test.assign(idx.begin(), idx.begin() + hold);
    split.val.assign(idx.begin() + hold, idx.begin() + 2 * hold);
    split.train.assign(idx.begin() + 2 * hold, idx.end());
    std::sort(split.train.begin(), split.train.end());
    std::sort(split.val.begin(), split.val.end());
    std::sort(split.test.begin(), split.test.end());
    return split;
}

void write_split(const std::string& path, const DatasetSplit& split) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot write split file " + path);
    auto emit = [&](const char* name, const std::vector<int>& v) {
        os << name;
        for (int i : v) os << ' ' << i;
        os << '\n';
    };
    emit("train", split.train);
    emit("val", split.val);
    emit("test", split.test);
}

DatasetSplit read_split(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot read split file " + path);
    DatasetSplit split;
    std::string line;
    while (std::getline(is, line)) {
        std::istringstream ls(line);
        std::string name;
        ls >> name;
        std::vector<int>* dst = name == "train" ? &split.train
                                : name == "val" ? &split.val
                                : name == "test" ? &split.test
                                                 : nullptr;
        if (!dst) throw IoError("split file " + path + ": unknown set '" + name + "'");
        int i;
        while (ls >> i) dst->push_back(i);
    }
    return split;
}

std::string sample_dir(const std::string& root, int index) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "sample_%05d", index);
    return root + "/" + buf;
}

void save_sample(const std::string& dir, const Sample& sample) {
    std::filesystem::create_directories(dir);
    save_ntf(dir + "/input.ntf", sample.input_rgb);
    save_ntf(dir + "/albedo.ntf", sample.stack.albedo);
    save_ntf(dir + "/normal.ntf", sample.stack.normal);
    save_ntf(dir + "/ao.ntf", sample.stack.ao);
    save_ntf(dir + "/specular.ntf", sample.stack.specular);
    save_ntf(dir + "/translucency.ntf", sample.stack.translucency);
    save_ntf(dir + "/raw_diffuse.ntf", sample.stack.raw_diffuse);
    save_ntf(dir + "/mask.ntf", sample.stack.mask);
    nlohmann::json j;
    j["seed"] = sample.spec.seed;
    j["light_dir"] = {sample.spec.light_dir[0], sample.spec.light_dir[1],
                      sample.spec.light_dir[2]};
    j["light_intensity"] = sample.spec.light_intensity;
    j["ambient"] = sample.spec.ambient;
    std::ofstream os(dir + "/spec.json");
    if (!os) throw IoError("cannot write " + dir + "/spec.json");
    os << j.dump(2) << '\n';
}

Sample load_sample(const std::string& dir) {
    Sample s;
    s.input_rgb = load_ntf(dir + "/input.ntf");
    s.stack.albedo = load_ntf(dir + "/albedo.ntf");
    s.stack.normal = load_ntf(dir + "/normal.ntf");
    s.stack.ao = load_ntf(dir + "/ao.ntf");
    s.stack.specular = load_ntf(dir + "/specular.ntf");
    s.stack.translucency = load_ntf(dir + "/translucency.ntf");
    s.stack.raw_diffuse = load_ntf(dir + "/raw_diffuse.ntf");
    s.stack.mask = load_ntf(dir + "/mask.ntf");
    std::ifstream is(dir + "/spec.json");
    if (!is) throw IoError("cannot read " + dir + "/spec.json");
    nlohmann::json j = nlohmann::json::parse(is);
    s.spec.seed = j.at("seed").get<std::uint64_t>();
    auto ld = j.at("light_dir");
    s.spec.light_dir = {ld.at(0).get<float>(), ld.at(1).get<float>(), ld.at(2).get<float>()};
    s.spec.light_intensity = j.at("light_intensity").get<float>();
    s.spec.ambient = j.at("ambient").get<float>();
    return s;
}

void write_dataset(const std::string& root, int n, int resolution, std::uint64_t master_seed) {
    std::filesystem::create_directories(root);
    for (int i = 0; i < n; ++i) {
        Sample s = generate(derive_seed(master_seed, 1000 + static_cast<std::uint64_t>(i)),
                            resolution);
        save_sample(sample_dir(root, i), s);
    }
    write_split(root + "/split.txt", dataset_split(n, master_seed));
}

}  // namespace fid
