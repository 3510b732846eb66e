#include "fid/param_store.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace fid {

namespace {

// On-disk integers are little-endian; this code assumes a little-endian
// host (asserted at build time below).
static_assert(std::endian::native == std::endian::little, "little-endian host required");

template <typename T>
void write_pod(std::ostream& os, T v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw IoError("unexpected end of stream");
    return v;
}

}  // namespace

void write_ntf(std::ostream& os, const Tensor& t) {
    os.write("NTF1", 4);
    write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(t.rank()));
    for (auto e : t.shape()) write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(e));
    os.write(reinterpret_cast<const char*>(t.data()),
             static_cast<std::streamsize>(t.numel() * sizeof(float)));
    if (!os) throw IoError("failed writing NTF1 tensor");
}

Tensor read_ntf(std::istream& is) {
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "NTF1", 4) != 0) throw IoError("bad NTF1 magic");
    std::uint32_t rank = read_pod<std::uint32_t>(is);
    if (rank > 8) throw IoError("NTF1 rank " + std::to_string(rank) + " out of range");
    Shape shape(rank);
    for (auto& e : shape) e = read_pod<std::uint32_t>(is);
    Tensor t = Tensor::zeros(shape.empty() ? Shape{1} : shape);
    is.read(reinterpret_cast<char*>(t.data()),
            static_cast<std::streamsize>(t.numel() * sizeof(float)));
    if (!is) throw IoError("truncated NTF1 payload");
    return t;
}

void save_ntf(const std::string& path, const Tensor& t) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open " + path + " for writing");
    write_ntf(os, t);
}

Tensor load_ntf(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open " + path);
    return read_ntf(is);
}

Tensor& ParamStore::create(const std::string& name, Tensor init) {
    if (index_.count(name)) throw Error("duplicate parameter name: " + name);
    init.set_requires_grad(true);
    index_[name] = entries_.size();
    entries_.emplace_back(name, std::move(init));
    return entries_.back().second;
}

Tensor& ParamStore::get(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw Error("unknown parameter: " + name);
    return entries_[it->second].second;
}

const Tensor& ParamStore::get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw Error("unknown parameter: " + name);
    return entries_[it->second].second;
}

bool ParamStore::contains(const std::string& name) const {
    return index_.count(name) != 0;
}

std::int64_t ParamStore::param_count() const {
    std::int64_t n = 0;
    for (const auto& [name, t] : entries_) n += t.numel();
    return n;
}

void ParamStore::zero_grads() {
    for (auto& [name, t] : entries_) t.zero_grad();
}

void ParamStore::save_entries(std::ostream& os) const {
    std::uint32_t count = static_cast<std::uint32_t>(entries_.size());
    os.write(reinterpret_cast<const char*>(&count), sizeof(count));
    for (const auto& [name, t] : entries_) {
        std::uint16_t len = static_cast<std::uint16_t>(name.size());
        os.write(reinterpret_cast<const char*>(&len), sizeof(len));
        os.write(name.data(), len);
        write_ntf(os, t);
    }
    std::uint64_t steps = step_count;
    os.write(reinterpret_cast<const char*>(&steps), sizeof(steps));
    if (!os) throw IoError("failed writing parameter entries");
}

ParamStore ParamStore::load_entries(std::istream& is) {
    ParamStore store;
    std::uint32_t count = 0;
    is.read(reinterpret_cast<char*>(&count), sizeof(count));
    if (!is) throw IoError("truncated entry table");
    for (std::uint32_t i = 0; i < count; ++i) {
        std::uint16_t len = 0;
        is.read(reinterpret_cast<char*>(&len), sizeof(len));
        std::string name(len, '\0');
        is.read(name.data(), len);
        if (!is) throw IoError("truncated entry name");
        store.create(name, read_ntf(is));
    }
    std::uint64_t steps = 0;
    is.read(reinterpret_cast<char*>(&steps), sizeof(steps));
    if (!is) throw IoError("truncated step count");
    store.step_count = steps;
    return store;
}

std::uint64_t ParamStore::content_hash() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto feed = [&h](const void* p, std::size_t n) {
        const unsigned char* b = static_cast<const unsigned char*>(p);
        for (std::size_t i = 0; i < n; ++i) {
            h ^= b[i];
            h *= 0x100000001b3ULL;
        }
    };
    for (const auto& [name, t] : entries_) {
        feed(name.data(), name.size());
        feed(t.data(), static_cast<std::size_t>(t.numel()) * sizeof(float));
    }
    return h;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open " + path + " for writing");
    os.write("FDCK", 4);
    std::uint32_t version = 1;
    os.write(reinterpret_cast<const char*>(&version), sizeof(version));
    std::uint32_t clen = static_cast<std::uint32_t>(ckpt.config_text.size());
    os.write(reinterpret_cast<const char*>(&clen), sizeof(clen));
    os.write(ckpt.config_text.data(), clen);
    ckpt.params.save_entries(os);
    if (!os) throw IoError("failed writing checkpoint " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "FDCK", 4) != 0)
        throw IoError(path + " is not a checkpoint file");
    std::uint32_t version = 0;
    is.read(reinterpret_cast<char*>(&version), sizeof(version));
    if (version != 1) throw IoError("unsupported checkpoint version " + std::to_string(version));
    std::uint32_t clen = 0;
    is.read(reinterpret_cast<char*>(&clen), sizeof(clen));
    Checkpoint ckpt;
    ckpt.config_text.resize(clen);
    is.read(ckpt.config_text.data(), clen);
    if (!is) throw IoError("truncated checkpoint header");
    ckpt.params = ParamStore::load_entries(is);
    return ckpt;
}

}  // namespace fid
