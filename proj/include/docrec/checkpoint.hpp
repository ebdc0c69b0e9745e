#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "docrec/autodiff.hpp"

namespace docrec {

/// Binary checkpoint container. All integers and floats are little-endian:
///
///   magic   8 bytes  "DOCRECK1"
///   u32     format version (1)
///   u32     metadata length, then that many bytes of UTF-8 JSON
///   u64     step
///   u32     array count, then per array:
///           u32 name length, name bytes, u8 group (0 params, 1 first moment, 2 second moment),
///           u32 rows, u32 cols, rows*cols f32 values (row-major)
///
/// The metadata carries the run setup (model, bias, engine and training configuration).
/// Data streams are pure functions of (seed, step), so the step counter is the RNG state.
struct Checkpoint {
    std::string metadata = "{}";
    std::uint64_t step = 0;
    std::map<std::string, ad::Matrix<float>> params;
    std::map<std::string, ad::Matrix<float>> moment1;
    std::map<std::string, ad::Matrix<float>> moment2;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

std::string encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(const std::string& bytes);
void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace docrec
