#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <unordered_map>
#include <vector>

#include "fid/tensor.hpp"

namespace fid {

// "NTF1" binary tensor file: magic, u32 rank, rank x u32 extents,
// little-endian f32 payload, row-major.
void write_ntf(std::ostream& os, const Tensor& t);
Tensor read_ntf(std::istream& is);
void save_ntf(const std::string& path, const Tensor& t);
Tensor load_ntf(const std::string& path);

// Ordered collection of named learnable tensors. Iteration order is
// insertion order and is what checkpoint files serialize.
class ParamStore {
public:
    Tensor& create(const std::string& name, Tensor init);
    Tensor& get(const std::string& name);
    const Tensor& get(const std::string& name) const;
    bool contains(const std::string& name) const;

    std::size_t size() const { return entries_.size(); }
    const std::vector<std::pair<std::string, Tensor>>& entries() const { return entries_; }
    std::vector<std::pair<std::string, Tensor>>& entries() { return entries_; }

    std::uint64_t step_count = 0;

    std::int64_t param_count() const;
    void zero_grads();

    // Entry table layout: u32 count, then {u16 name length, name bytes,
    // NTF1 tensor} per entry.
    void save_entries(std::ostream& os) const;
    static ParamStore load_entries(std::istream& is);

    // FNV-1a over names and payload bytes; used by freeze-contract checks.
    std::uint64_t content_hash() const;

private:
    std::vector<std::pair<std::string, Tensor>> entries_;
    std::unordered_map<std::string, std::size_t> index_;
};

// Checkpoint file: magic "FDCK", u32 version, u32 config-text length,
// config text (flat key=value lines), then a ParamStore entry table with
// a trailing u64 step count.
struct Checkpoint {
    std::string config_text;
    ParamStore params;
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace fid
