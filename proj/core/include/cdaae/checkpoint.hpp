#pragma once

#include "cdaae/optimizer.hpp"
#include "cdaae/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace cdaae {

class CheckpointError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct CheckpointTensor {
    std::string name;
    Shape shape;
    std::vector<float> data;
};

/// Binary checkpoint: "CDAAECKP", u32 version, u32-length JSON metadata,
/// u32 tensor count, then per tensor a u32-length name, u32 rank, u32 dims
/// and float32 data. All integers and floats little-endian.
struct Checkpoint {
    static constexpr std::uint32_t kVersion = 1;

    std::string metadata = "{}";
    std::vector<CheckpointTensor> tensors;

    const CheckpointTensor* find(std::string_view name) const;
    const CheckpointTensor& at(std::string_view name) const;
    void add(std::string name, Shape shape, std::vector<float> data);
};

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint parse_checkpoint(std::span<const std::uint8_t> bytes);

/// Writes through a temporary file and renames, so readers never see a torn file.
void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::filesystem::path& path);

/// Adds every entry as "<prefix><name>".
void store_tensors(Checkpoint& ckpt, const std::string& prefix,
                   const std::vector<std::pair<std::string, Tensor>>& entries);
/// Copies "<prefix><name>" into each entry in place; shapes must match.
void load_tensors(const Checkpoint& ckpt, const std::string& prefix,
                  const std::vector<std::pair<std::string, Tensor>>& entries);

/// Moments as "opt/<group>/m/<name>" and "opt/<group>/v/<name>". The step
/// count goes in the caller's metadata.
void store_optimizer(Checkpoint& ckpt, const std::string& group, const Adam<float>& opt);
void load_optimizer(const Checkpoint& ckpt, const std::string& group, Adam<float>& opt, std::uint64_t steps);

} // namespace cdaae
