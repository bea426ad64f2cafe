#include "chatd/paths.hpp"

#include <cstdlib>

namespace chatd {

std::filesystem::path data_dir() {
  if (const char* v = std::getenv("CHATD_DATA_DIR"); v && *v) return v;
  return CHATD_DEFAULT_DATA_DIR;
}

}  // namespace chatd
