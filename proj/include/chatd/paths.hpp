#pragma once

#include <filesystem>

namespace chatd {

/// Bundled data directory: $CHATD_DATA_DIR when set, else the source tree's
/// data/ directory recorded at build time.
std::filesystem::path data_dir();

}  // namespace chatd
