#pragma once

#include <optional>
#include <string_view>

namespace discosyn::resources {

// Bundled text resource by file stem (e.g. "connectives"), or nullopt.
std::optional<std::string_view> find(std::string_view name);

}  // namespace discosyn::resources
