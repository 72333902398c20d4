#pragma once

#include <string>

namespace ncq {

// Root of the bundled asset tree. NCQ_ASSETS overrides the compiled-in path.
std::string asset_dir();
std::string asset_path(const std::string& relative);

}  // namespace ncq
