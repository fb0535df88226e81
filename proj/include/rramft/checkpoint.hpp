#pragma once

#include <string>

#include <nlohmann/json.hpp>

#include "rramft/model.hpp"

namespace rramft {

/// On-disk model snapshot.
///
/// Layout (all integers little-endian):
///   8 bytes   magic "RRFTCKPT"
///   u32       format version (1)
///   u64 + N   topology: NetworkSpec as UTF-8 JSON
///   u64 + N   metadata: free-form UTF-8 JSON (training provenance, etc.)
///   u32       tensor count
///   per tensor:
///     u32 + N   name "<layer id>.<weight|bias|gamma|beta|running_mean|running_var>"
///     u32       rank
///     u64[rank] extents
///     f64[...]  values, IEEE-754 binary64 little-endian
struct Checkpoint {
    Model model;
    nlohmann::json metadata = nlohmann::json::object();
};

inline constexpr char kCheckpointMagic[8] = {'R', 'R', 'F', 'T', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

std::string serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint deserialize_checkpoint(const std::string& bytes);

} // namespace rramft
