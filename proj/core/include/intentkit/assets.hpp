#pragma once

#include <optional>
#include <string_view>
#include <vector>

namespace intentkit {

// Text assets compiled into the library (prompt templates, the bundled stopword list).
std::optional<std::string_view> find_asset(std::string_view name);
std::vector<std::string_view> asset_names();

}  // namespace intentkit
