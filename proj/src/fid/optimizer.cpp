#include "fid/optimizer.hpp"

#include <cmath>
#include <cstring>
#include <ostream>
#include <istream>

namespace fid {

namespace {
constexpr double kPi = 3.14159265358979323846;
}

Adam::Adam(float beta1, float beta2, float eps) : beta1_(beta1), beta2_(beta2), eps_(eps) {}

std::size_t Adam::slot(const std::string& name, std::size_t numel) {
    auto it = index_.find(name);
    if (it != index_.end()) {
        if (m_[it->second].second.size() != numel)
            throw ShapeError("optimizer state size mismatch for " + name);
        return it->second;
    }
    index_[name] = m_.size();
    m_.emplace_back(name, std::vector<float>(numel, 0.0f));
    v_.emplace_back(name, std::vector<float>(numel, 0.0f));
    return m_.size() - 1;
}

void Adam::step(ParamStore& params, float lr, const std::string& prefix) {
    if (lr <= 0.0f) throw ConfigError("adam step: lr must be positive");
    ++step_count_;
    double bc1 = 1.0 - std::pow(double(beta1_), double(step_count_));
    double bc2 = 1.0 - std::pow(double(beta2_), double(step_count_));
    for (auto& [name, p] : params.entries()) {
        if (!prefix.empty() && name.rfind(prefix, 0) != 0) continue;
        const std::vector<float>& g = p.grad();
        std::size_t n = static_cast<std::size_t>(p.numel());
        if (g.size() != n)
            throw Error("adam step: missing gradient for parameter " + name);
        std::size_t s = slot(name, n);
        float* m = m_[s].second.data();
        float* v = v_[s].second.data();
        float* data = p.data();
        for (std::size_t i = 0; i < n; ++i) {
            double gi = g[i];
            double mi = beta1_ * m[i] + (1.0 - beta1_) * gi;
            double vi = beta2_ * v[i] + (1.0 - beta2_) * gi * gi;
            m[i] = static_cast<float>(mi);
            v[i] = static_cast<float>(vi);
            double mh = mi / bc1, vh = vi / bc2;
            data[i] = static_cast<float>(data[i] - lr * mh / (std::sqrt(vh) + eps_));
        }
    }
    params.step_count = step_count_;
}

void Adam::save(std::ostream& os) const {
    auto w32 = [&](std::uint32_t x) { os.write(reinterpret_cast<const char*>(&x), 4); };
    os.write("ADM1", 4);
    os.write(reinterpret_cast<const char*>(&beta1_), 4);
    os.write(reinterpret_cast<const char*>(&beta2_), 4);
    os.write(reinterpret_cast<const char*>(&eps_), 4);
    os.write(reinterpret_cast<const char*>(&step_count_), 8);
    w32(static_cast<std::uint32_t>(m_.size()));
    for (std::size_t s = 0; s < m_.size(); ++s) {
        const std::string& name = m_[s].first;
        std::uint16_t len = static_cast<std::uint16_t>(name.size());
        os.write(reinterpret_cast<const char*>(&len), 2);
        os.write(name.data(), len);
        w32(static_cast<std::uint32_t>(m_[s].second.size()));
        os.write(reinterpret_cast<const char*>(m_[s].second.data()),
                 static_cast<std::streamsize>(m_[s].second.size() * 4));
        os.write(reinterpret_cast<const char*>(v_[s].second.data()),
                 static_cast<std::streamsize>(v_[s].second.size() * 4));
    }
    if (!os) throw IoError("failed writing optimizer state");
}

Adam Adam::load(std::istream& is) {
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "ADM1", 4) != 0)
        throw IoError("bad optimizer state header");
    float b1, b2, eps;
    is.read(reinterpret_cast<char*>(&b1), 4);
    is.read(reinterpret_cast<char*>(&b2), 4);
    is.read(reinterpret_cast<char*>(&eps), 4);
    Adam adam(b1, b2, eps);
    is.read(reinterpret_cast<char*>(&adam.step_count_), 8);
    std::uint32_t count = 0;
    is.read(reinterpret_cast<char*>(&count), 4);
    for (std::uint32_t i = 0; i < count; ++i) {
        std::uint16_t len = 0;
        is.read(reinterpret_cast<char*>(&len), 2);
        std::string name(len, '\0');
        is.read(name.data(), len);
        std::uint32_t n = 0;
        is.read(reinterpret_cast<char*>(&n), 4);
        std::vector<float> m(n), v(n);
        is.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(n) * 4);
        is.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n) * 4);
        adam.index_[name] = adam.m_.size();
        adam.m_.emplace_back(name, std::move(m));
        adam.v_.emplace_back(name, std::move(v));
    }
    if (!is) throw IoError("truncated optimizer state");
    return adam;
}

float cosine_restart_lr(std::int64_t step, std::int64_t steps_per_period, float lr_init,
                        float lr_min) {
    if (steps_per_period < 1) throw ConfigError("cosine_restart_lr: period must be >= 1");
    if (lr_min >= lr_init) throw ConfigError("cosine_restart_lr: lr_min must be < lr_init");
    std::int64_t t = step % steps_per_period;
    double frac = double(t) / double(steps_per_period);
    return static_cast<float>(lr_min + 0.5 * (double(lr_init) - lr_min) *
                                           (1.0 + std::cos(kPi * frac)));
}

}  // namespace fid
