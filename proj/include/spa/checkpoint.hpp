#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "spa/model.hpp"

namespace spa {

inline constexpr int kCheckpointVersion = 1;

/// Plain-text parameter snapshot. Layout:
///
///   spa-checkpoint 1
///   fingerprint <16 hex digits>
///   feature_widths 2 16 16
///   num_classes 2
///   disc_hidden 16
///   block feature 2        (block name, layer count)
///   layer 16 2             (out, in)
///   w <in values>          (one line per output row)
///   b <out values>
///   ...
///   end
///
/// Values use the shortest decimal form that round-trips exactly.
struct Checkpoint {
  std::string fingerprint;
  Network network;
};

std::string checkpoint_text(const Checkpoint& ckpt);
Checkpoint parse_checkpoint(std::string_view text, const std::string& origin);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
/// Throws io when the file is missing, parse on malformed content and
/// dimension when the layer shapes do not chain into a network.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace spa
