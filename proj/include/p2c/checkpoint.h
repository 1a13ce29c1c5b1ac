#ifndef P2C_CHECKPOINT_H_
#define P2C_CHECKPOINT_H_

#include <filesystem>
#include <iosfwd>

#include "p2c/model.h"

namespace p2c {

// Binary checkpoint layout:
//   "P2CCKPT\n"                 8-byte magic
//   u32 little-endian           format version
//   u64 little-endian           header length
//   header                      JSON: config, vocabularies, parameter shapes
//   f64 little-endian values    every parameter, in header order
// Loading and re-saving reproduces the file byte for byte.
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const P2CModel& model, std::ostream& out);
P2CModel load_checkpoint(std::istream& in);

// Writes through a temporary file and renames, so an interrupted save never
// clobbers the previous checkpoint.
void save_checkpoint_file(const P2CModel& model,
                          const std::filesystem::path& path);
P2CModel load_checkpoint_file(const std::filesystem::path& path);

}  // namespace p2c

#endif  // P2C_CHECKPOINT_H_
