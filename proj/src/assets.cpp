#include "ncq/assets.hpp"

#include <cstdlib>

#ifndef NCQ_DEFAULT_ASSET_DIR
#define NCQ_DEFAULT_ASSET_DIR "assets"
#endif

namespace ncq {

std::string asset_dir() {
  if (const char* env = std::getenv("NCQ_ASSETS"); env != nullptr && *env != '\0') return env;
  return NCQ_DEFAULT_ASSET_DIR;
}

std::string asset_path(const std::string& relative) {
  return asset_dir() + "/" + relative;
}

}  // namespace ncq
