#pragma once

#include <cstddef>
#include <filesystem>
#include <string>

#include "lgkde/trainer.hpp"

namespace lgkde {

inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  Model model;
  std::size_t epoch = 0;  // last completed epoch, used to resume numbering
};

/// JSON document: format tag, version, encoder config and row-major
/// weights, batch-norm running statistics, MMD gammas, KDE bandwidths and
/// logits, epoch.
std::string checkpoint_to_json(const Checkpoint& ckpt);
Checkpoint checkpoint_from_json(const std::string& text);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace lgkde
