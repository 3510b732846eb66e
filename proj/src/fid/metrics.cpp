#include "fid/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace fid {

namespace {

constexpr int kWindow = 11;
constexpr double kSigma = 1.5;
constexpr double kK1 = 0.01;
constexpr double kK2 = 0.03;
constexpr double kRange = 1.0;
constexpr double kPi = 3.14159265358979323846;

const std::array<double, kWindow * kWindow>& gaussian_window() {
    static const auto w = [] {
        std::array<double, kWindow * kWindow> out{};
        double sum = 0.0;
        for (int y = 0; y < kWindow; ++y)
            for (int x = 0; x < kWindow; ++x) {
                double dy = y - (kWindow - 1) / 2.0, dx = x - (kWindow - 1) / 2.0;
                double v = std::exp(-(dx * dx + dy * dy) / (2.0 * kSigma * kSigma));
                out[std::size_t(y * kWindow + x)] = v;
                sum += v;
            }
        for (double& v : out) v /= sum;
        return out;
    }();
    return w;
}

Tensor as_nchw(const Tensor& t) {
    if (t.rank() == 3) return reshape(t, {1, t.dim(0), t.dim(1), t.dim(2)});
    return t;
}

}  // namespace

double ssim(const Tensor& a, const Tensor& b) {
    if (!a.defined() || !b.defined()) throw Error("ssim: undefined input");
    if (a.shape() != b.shape())
        throw ShapeError("ssim: shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
    if (a.rank() != 3 || (a.dim(0) != 1 && a.dim(0) != 3))
        throw ShapeError("ssim expects [1|3,H,W], got " + shape_str(a.shape()));
    std::int64_t ch = a.dim(0), h = a.dim(1), w = a.dim(2);
    if (h < kWindow || w < kWindow)
        throw ShapeError("ssim: image smaller than the 11x11 window");
    const auto& win = gaussian_window();
    const double c1 = (kK1 * kRange) * (kK1 * kRange);
    const double c2 = (kK2 * kRange) * (kK2 * kRange);
    double total = 0.0;
    for (std::int64_t c = 0; c < ch; ++c) {
        const float* pa = a.data() + c * h * w;
        const float* pb = b.data() + c * h * w;
        double acc = 0.0;
        std::int64_t count = 0;
        for (std::int64_t y = 0; y + kWindow <= h; ++y)
            for (std::int64_t x = 0; x + kWindow <= w; ++x) {
                double mx = 0, my = 0, xx = 0, yy = 0, xy = 0;
                for (int wy = 0; wy < kWindow; ++wy)
                    for (int wx = 0; wx < kWindow; ++wx) {
                        double g = win[std::size_t(wy * kWindow + wx)];
                        double va = pa[(y + wy) * w + x + wx];
                        double vb = pb[(y + wy) * w + x + wx];
                        mx += g * va;
                        my += g * vb;
                        xx += g * va * va;
                        yy += g * vb * vb;
                        xy += g * va * vb;
                    }
                double vx = xx - mx * mx, vy = yy - my * my, cov = xy - mx * my;
                double s = ((2 * mx * my + c1) * (2 * cov + c2)) /
                           ((mx * mx + my * my + c1) * (vx + vy + c2));
                acc += s;
                ++count;
            }
        total += acc / double(count);
    }
    return total / double(ch);
}

double masked_mse_metric(const Tensor& pred, const Tensor& gt, const Tensor& mask) {
    NoGradGuard guard;
    Tensor loss = masked_mse(as_nchw(pred), as_nchw(gt), as_nchw(mask));
    return static_cast<double>(loss.item());
}

double rmse(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape())
        throw ShapeError("rmse: shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
    double acc = 0.0;
    for (std::int64_t i = 0; i < a.numel(); ++i) {
        double d = double(a.data()[i]) - double(b.data()[i]);
        acc += d * d;
    }
    return std::sqrt(acc / double(a.numel()));
}

double feature_distance(const FeatureExtractor& fx, const Tensor& a, const Tensor& b) {
    NoGradGuard guard;
    return static_cast<double>(feature_perceptual(fx, as_nchw(a), as_nchw(b)).item());
}

AngularStats angular_stats(const Tensor& pred_normals, const Tensor& gt_normals,
                           const Tensor& mask) {
    if (pred_normals.shape() != gt_normals.shape())
        throw ShapeError("angular_stats: shape mismatch");
    if (pred_normals.rank() != 3 || pred_normals.dim(0) != 3)
        throw ShapeError("angular_stats expects [3,H,W] encoded normals");
    std::int64_t h = pred_normals.dim(1), w = pred_normals.dim(2);
    if (mask.rank() != 3 || mask.dim(0) != 1 || mask.dim(1) != h || mask.dim(2) != w)
        throw ShapeError("angular_stats: mask must be [1,H,W] matching the normals");
    std::int64_t plane = h * w;
    auto decode = [plane](const Tensor& t, std::int64_t i, std::array<double, 3>& n) {
        for (int c = 0; c < 3; ++c) n[std::size_t(c)] = t.data()[c * plane + i] * 2.0 - 1.0;
        double len = std::sqrt(n[0] * n[0] + n[1] * n[1] + n[2] * n[2]);
        if (len < 1e-8) {
            n = {0.0, 0.0, 1.0};
            return;
        }
        for (double& v : n) v /= len;
    };
    std::vector<double> angles;
    double cos_sum = 0.0, sq_sum = 0.0;
    for (std::int64_t i = 0; i < plane; ++i) {
        if (mask.data()[i] <= 0.5f) continue;
        std::array<double, 3> p, g;
        decode(pred_normals, i, p);
        decode(gt_normals, i, g);
        double dot = std::clamp(p[0] * g[0] + p[1] * g[1] + p[2] * g[2], -1.0, 1.0);
        double deg = std::acos(dot) * 180.0 / kPi;
        angles.push_back(deg);
        cos_sum += dot;
        sq_sum += deg * deg;
    }
    if (angles.empty()) throw Error("angular_stats: empty mask");
    AngularStats st;
    double n = double(angles.size());
    double sum = 0.0;
    std::int64_t a11 = 0, a22 = 0, a30 = 0;
    for (double d : angles) {
        sum += d;
        if (d < 11.25) ++a11;
        if (d < 22.5) ++a22;
        if (d < 30.0) ++a30;
    }
    st.mean_deg = sum / n;
    st.rmse_deg = std::sqrt(sq_sum / n);
    st.mean_cosine = cos_sum / n;
    st.acc_11_25 = a11 / n;
    st.acc_22_5 = a22 / n;
    st.acc_30 = a30 / n;
    std::size_t mid = angles.size() / 2;
    std::nth_element(angles.begin(), angles.begin() + mid, angles.end());
    double upper = angles[mid];
    if (angles.size() % 2 == 0) {
        double lower = *std::max_element(angles.begin(), angles.begin() + mid);
        st.median_deg = 0.5 * (lower + upper);
    } else {
        st.median_deg = upper;
    }
    return st;
}

const PassRow& PassTable::row(const std::string& name) const {
    for (const PassRow& r : rows)
        if (r.name == name) return r;
    throw Error("PassTable: no row named " + name);
}

PassTable eval_stack(const FeatureExtractor& fx, const IntrinsicStack& pred,
                     const IntrinsicStack& gt) {
    struct Entry {
        const char* name;
        const Tensor* p;
        const Tensor* g;
    };
    const Entry entries[] = {
        {"albedo", &pred.albedo, &gt.albedo},
        {"normal", &pred.normal, &gt.normal},
        {"ao", &pred.ao, &gt.ao},
        {"specular", &pred.specular, &gt.specular},
        {"translucency", &pred.translucency, &gt.translucency},
        {"raw_diffuse", &pred.raw_diffuse, &gt.raw_diffuse},
    };
    PassTable table;
    PassRow avg;
    avg.name = "average";
    double mae_sum = 0.0;
    int mae_count = 0;
    for (const Entry& e : entries) {
        if (e.p->shape() != e.g->shape())
            throw ShapeError(std::string("eval_stack: resolution mismatch on ") + e.name);
        PassRow r;
        r.name = e.name;
        r.mse = masked_mse_metric(*e.p, *e.g, gt.mask);
        r.ssim = ssim(*e.p, *e.g);
        r.feature_dist = feature_distance(fx, *e.p, *e.g);
        if (r.name == "normal") {
            r.mae_deg = angular_stats(*e.p, *e.g, gt.mask).mean_deg;
            r.has_mae = true;
            mae_sum += r.mae_deg;
            ++mae_count;
        }
        avg.mse += r.mse;
        avg.ssim += r.ssim;
        avg.feature_dist += r.feature_dist;
        table.rows.push_back(std::move(r));
    }
    double n = double(table.rows.size());
    avg.mse /= n;
    avg.ssim /= n;
    avg.feature_dist /= n;
    if (mae_count > 0) {
        avg.mae_deg = mae_sum / mae_count;
        avg.has_mae = true;
    }
    table.rows.push_back(std::move(avg));
    return table;
}

std::string format_table(const PassTable& table) {
    std::ostringstream os;
    char line[128];
    std::snprintf(line, sizeof line, "%-14s %10s %10s %12s %10s\n", "pass", "mse", "ssim",
                  "feat_dist", "mae_deg");
    os << line;
    for (const PassRow& r : table.rows) {
        char mae[16] = "-";
        if (r.has_mae) std::snprintf(mae, sizeof mae, "%.3f", r.mae_deg);
        std::snprintf(line, sizeof line, "%-14s %10.6f %10.6f %12.6f %10s\n", r.name.c_str(),
                      r.mse, r.ssim, r.feature_dist, mae);
        os << line;
    }
    return os.str();
}

std::string table_records(const PassTable& table) {
    std::ostringstream os;
    for (const PassRow& r : table.rows) {
        os << r.name << " mse " << r.mse << '\n';
        os << r.name << " ssim " << r.ssim << '\n';
        os << r.name << " feature_dist " << r.feature_dist << '\n';
        if (r.has_mae) os << r.name << " mae_deg " << r.mae_deg << '\n';
    }
    return os.str();
}

ConsistencyReport self_consistency(const DecomposeFn& decompose,
                                   const std::vector<Sample>& test_set, int max_shift_px,
                                   float photometric_frac, std::uint64_t seed) {
    if (test_set.empty()) throw Error("self_consistency: empty test set");
    FeatureExtractor fx(0);
    ConsistencyReport rep;
    std::uint64_t counter = 0;
    for (const Sample& s : test_set) {
        Rng rng(derive_seed(seed, 0xc025 + counter++));
        Tensor jittered = (max_shift_px == 0 && photometric_frac == 0.0f)
                              ? s.input_rgb
                              : perturb(s.input_rgb, max_shift_px, photometric_frac, rng);
        IntrinsicStack a = decompose(s.input_rgb);
        IntrinsicStack b = decompose(jittered);
        Tensor ra = rerender(a, s.spec.light_dir, s.spec.light_intensity, s.spec.ambient);
        Tensor rb = rerender(b, s.spec.light_dir, s.spec.light_intensity, s.spec.ambient);
        rep.rmse += rmse(ra, rb);
        rep.ssim += ssim(ra, rb);
        rep.feature_dist += feature_distance(fx, ra, rb);
    }
    double n = double(test_set.size());
    rep.rmse /= n;
    rep.ssim /= n;
    rep.feature_dist /= n;
    return rep;
}

}  // namespace fid
