#pragma once

// Model checkpoints: "UPCK" | u32 version | u8 precision | seeds | config |
// prompt, fuser and head tensors as (u64 rows, u64 cols, f64 values). All
// integers and floats little-endian. f32 models round-trip exactly because
// every float is representable as a double.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "updp/model.hpp"
#include "updp/trainer.hpp"

namespace updp {

inline constexpr std::uint32_t kCheckpointVersion = 1;

template <typename Real>
std::vector<std::uint8_t> encode_checkpoint(const ModelState<Real>& model);

/// Throws BadMagic, VersionMismatch, TruncatedFile or, when `expected_d_in` is
/// given and differs, DimMismatch.
template <typename Real>
ModelState<Real> decode_checkpoint(std::span<const std::uint8_t> bytes,
                                   std::optional<std::size_t> expected_d_in = std::nullopt);

template <typename Real>
void save_checkpoint(const ModelState<Real>& model, const std::filesystem::path& path);

template <typename Real>
ModelState<Real> load_checkpoint(const std::filesystem::path& path,
                                 std::optional<std::size_t> expected_d_in = std::nullopt);

/// Precision recorded in a checkpoint file.
Precision checkpoint_precision(const std::filesystem::path& path);

}  // namespace updp
