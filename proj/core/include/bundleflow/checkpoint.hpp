#pragma once

#include <cstdint>
#include <string>

#include "bundleflow/flow.hpp"
#include "bundleflow/serialize.hpp"

namespace bundleflow {

// Container framing shared by every checkpoint file: magic, format version,
// payload kind. Payload layout is owned by whichever module writes it.
enum class CheckpointKind : std::uint32_t {
    VectorField = 1,
    FlowTraining = 2,
    Menu = 3,
    MenuTraining = 4,
    FixedMenu = 5,
    ProductMenu = 6,
};

inline constexpr std::uint32_t kCheckpointMagic = 0x574C4642;  // "BFLW"
inline constexpr std::uint32_t kCheckpointVersion = 1;

void write_checkpoint_header(BinWriter& w, CheckpointKind kind);

/// Validates magic + version and returns the payload kind.
CheckpointKind read_checkpoint_header(BinReader& r);

/// Opens a file and fails with IoError unless the kind matches.
BinReader open_checkpoint(const std::string& path, CheckpointKind expected);

// Raw vector-field payload (m, horizon, both nets), reused by containers
// that embed a field next to their own state.
void write_vector_field(BinWriter& w, const VectorField& vf, double horizon);
std::pair<VectorField, double> read_vector_field(BinReader& r);

void save_vector_field(const std::string& path, const VectorField& vf, double horizon);
std::pair<VectorField, double> load_vector_field(const std::string& path);

}  // namespace bundleflow
